fn main() {
    std::process::exit(sparsecap::cli::run(std::env::args_os()));
}

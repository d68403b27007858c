//! Exact singularity testing for small integer matrices.
//!
//! A matrix that has full rank modulo some prime is nonsingular over the
//! rationals, so one pass of elimination mod `2^61 - 1` certifies almost
//! every instance. When that pass reports a rank deficit, a second prime is
//! tried; if the two primes disagree the rank is recomputed exactly with
//! fraction-free (Bareiss) elimination over big integers.

use num_bigint::BigInt;

/// `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;
/// Largest prime below `2^61 - 1`.
pub const SECOND_PRIME: u64 = 2_305_843_009_213_693_921;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    modulus: u64,
}

impl PrimeField {
    /// The caller guarantees `modulus` is prime and below `2^63`.
    pub const fn new(modulus: u64) -> Self {
        Self { modulus }
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        let prod = u128::from(a) * u128::from(b);
        if self.modulus == MERSENNE_61 {
            let lo = (prod as u64) & MERSENNE_61;
            let hi = (prod >> 61) as u64;
            let s = lo + hi;
            if s >= MERSENNE_61 {
                s - MERSENNE_61
            } else {
                s
            }
        } else {
            (prod % u128::from(self.modulus)) as u64
        }
    }

    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    fn reduce(&self, v: i64) -> u64 {
        v.rem_euclid(self.modulus as i64) as u64
    }

    /// Rank of a row-major `rows x cols` integer matrix reduced mod the prime,
    /// by fraction-free elimination (no inverses needed).
    pub fn rank(&self, entries: &[i64], rows: usize, cols: usize) -> usize {
        assert_eq!(entries.len(), rows * cols);
        let mut a: Vec<u64> = entries.iter().map(|&v| self.reduce(v)).collect();
        let mut rank = 0;
        for col in 0..cols {
            if rank == rows {
                break;
            }
            let Some(pivot_row) = (rank..rows).find(|&r| a[r * cols + col] != 0) else {
                continue;
            };
            if pivot_row != rank {
                for j in col..cols {
                    a.swap(pivot_row * cols + j, rank * cols + j);
                }
            }
            let pivot = a[rank * cols + col];
            for r in rank + 1..rows {
                let factor = a[r * cols + col];
                if factor == 0 {
                    continue;
                }
                // row_r <- pivot * row_r - factor * row_rank
                a[r * cols + col] = 0;
                for j in col + 1..cols {
                    let lhs = self.mul(pivot, a[r * cols + j]);
                    let rhs = self.mul(factor, a[rank * cols + j]);
                    a[r * cols + j] = self.sub(lhs, rhs);
                }
            }
            rank += 1;
        }
        rank
    }
}

/// Exact rank over the rationals via Bareiss elimination on big integers.
pub fn bareiss_rank(entries: &[i64], rows: usize, cols: usize) -> usize {
    assert_eq!(entries.len(), rows * cols);
    let mut a: Vec<BigInt> = entries.iter().map(|&v| BigInt::from(v)).collect();
    let zero = BigInt::from(0);
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot_row) = (rank..rows).find(|&r| a[r * cols + col] != zero) else {
            continue;
        };
        if pivot_row != rank {
            for j in 0..cols {
                a.swap(pivot_row * cols + j, rank * cols + j);
            }
        }
        let pivot = a[rank * cols + col].clone();
        for r in rank + 1..rows {
            let factor = a[r * cols + col].clone();
            for j in col + 1..cols {
                let v = &pivot * &a[r * cols + j] - &factor * &a[rank * cols + j];
                // exact division by the previous pivot
                a[r * cols + j] = v / &prev;
            }
            a[r * cols + col] = zero.clone();
        }
        prev = pivot;
        rank += 1;
    }
    rank
}

/// How a rank verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankRoute {
    /// Full rank modulo the first prime.
    FirstPrime,
    /// Both primes agreed on a deficit.
    BothPrimes,
    /// The primes disagreed; big-integer elimination decided.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankVerdict {
    pub rank: usize,
    pub route: RankRoute,
}

/// Rank of an integer matrix using two primes, escalating to exact
/// arithmetic when they disagree.
pub fn exact_rank_with(
    entries: &[i64],
    rows: usize,
    cols: usize,
    first: PrimeField,
    second: PrimeField,
) -> RankVerdict {
    let full = rows.min(cols);
    let r1 = first.rank(entries, rows, cols);
    if r1 == full {
        return RankVerdict {
            rank: r1,
            route: RankRoute::FirstPrime,
        };
    }
    let r2 = second.rank(entries, rows, cols);
    if r2 == r1 {
        RankVerdict {
            rank: r1,
            route: RankRoute::BothPrimes,
        }
    } else {
        RankVerdict {
            rank: bareiss_rank(entries, rows, cols),
            route: RankRoute::Exact,
        }
    }
}

pub fn exact_rank(entries: &[i64], rows: usize, cols: usize) -> RankVerdict {
    exact_rank_with(
        entries,
        rows,
        cols,
        PrimeField::new(MERSENNE_61),
        PrimeField::new(SECOND_PRIME),
    )
}

/// Whether a square {-1, 0, 1} matrix is invertible.
pub fn is_invertible(rows: &[Vec<i8>]) -> bool {
    let m = rows.len();
    let flat: Vec<i64> = rows.iter().flatten().map(|&v| i64::from(v)).collect();
    debug_assert_eq!(flat.len(), m * m);
    exact_rank(&flat, m, m).rank == m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_brute(a: &[i64], n: usize) -> i64 {
        // Laplace expansion along the first row
        if n == 1 {
            return a[0];
        }
        let mut total = 0;
        for c in 0..n {
            let minor: Vec<i64> = (1..n)
                .flat_map(|r| (0..n).filter(move |&j| j != c).map(move |j| (r, j)))
                .map(|(r, j)| a[r * n + j])
                .collect();
            let sign = if c % 2 == 0 { 1 } else { -1 };
            total += sign * a[c] * det_brute(&minor, n - 1);
        }
        total
    }

    #[test]
    fn mersenne_reduction_matches_generic() {
        let fast = PrimeField::new(MERSENNE_61);
        let vals = [
            0,
            1,
            2,
            MERSENNE_61 - 1,
            MERSENNE_61 - 2,
            1 << 60,
            123_456_789_012_345,
        ];
        for &a in &vals {
            for &b in &vals {
                let expect = ((u128::from(a) * u128::from(b)) % u128::from(MERSENNE_61)) as u64;
                assert_eq!(fast.mul(a, b), expect);
            }
        }
    }

    #[test]
    fn all_3x3_sign_matrices_agree_with_determinant() {
        // every matrix in {-1,0,1}^{3x3}
        for code in 0..3usize.pow(9) {
            let mut a = [0i64; 9];
            let mut c = code;
            for v in a.iter_mut() {
                *v = (c % 3) as i64 - 1;
                c /= 3;
            }
            let singular = det_brute(&a, 3) == 0;
            let verdict = exact_rank(&a, 3, 3);
            assert_eq!(verdict.rank < 3, singular, "{a:?}");
            assert_eq!(bareiss_rank(&a, 3, 3) < 3, singular, "{a:?}");
        }
    }

    #[test]
    fn rectangular_ranks() {
        let a = [1, 2, 3, 2, 4, 6, 1, 0, 1];
        assert_eq!(exact_rank(&a, 3, 3).rank, 2);
        assert_eq!(bareiss_rank(&a, 3, 3), 2);
        let wide = [1, 0, 1, 0, 1, 1];
        assert_eq!(exact_rank(&wide, 2, 3).rank, 2);
        assert_eq!(exact_rank(&[0, 0, 0, 0], 2, 2).rank, 0);
    }

    #[test]
    fn disagreement_escalates_to_exact() {
        // det = 6: singular mod 3, nonsingular mod 5 and over Q
        let a = [2, 0, 0, 3];
        let v = exact_rank_with(&a, 2, 2, PrimeField::new(3), PrimeField::new(5));
        assert_eq!(
            v,
            RankVerdict {
                rank: 2,
                route: RankRoute::Exact
            }
        );
        // det = 15: singular mod both 3 and 5, so the primes are fooled
        let b = [3, 0, 0, 5];
        let w = exact_rank_with(&b, 2, 2, PrimeField::new(3), PrimeField::new(5));
        assert_eq!(w.route, RankRoute::BothPrimes);
        assert_eq!(bareiss_rank(&b, 2, 2), 2);
    }

    #[test]
    fn bareiss_handles_large_determinants() {
        // Hadamard-like 8x8 with det 8^4 * ... ; rank 8
        let n = 8;
        let mut h = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = if (i & j).count_ones() % 2 == 0 { 1 } else { -1 };
            }
        }
        assert_eq!(bareiss_rank(&h, n, n), n);
        assert_eq!(exact_rank(&h, n, n).route, RankRoute::FirstPrime);
        let first_row = h[..n].to_vec();
        h[n..2 * n].copy_from_slice(&first_row);
        assert_eq!(bareiss_rank(&h, n, n), n - 1);
        assert_eq!(exact_rank(&h, n, n).rank, n - 1);
    }
}

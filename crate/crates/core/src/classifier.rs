//! One-vs-rest linear SVM trained with Pegasos: projected stochastic
//! subgradient descent on the L2-regularized hinge loss, step `1/(lambda t)`.
//!
//! The bias is an extra constant-1 feature and is regularized with the rest
//! of the weight vector. Each class is an independent binary problem, so
//! classes train in parallel.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_indices, standardize, FeatureDataset};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            seed: 42,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// `num_classes` rows of `dim + 1` weights; the last entry is the bias.
    weights: Vec<Vec<f64>>,
    dim: usize,
    spec: TrainSpec,
}

impl SvmModel {
    pub fn from_weights(weights: Vec<Vec<f64>>, spec: TrainSpec) -> Result<Self> {
        let Some(first) = weights.first() else {
            return Err(Error::Empty("model has no classes".into()));
        };
        if first.len() < 2 {
            return Err(Error::invalid(
                "weight rows need at least one feature and a bias",
            ));
        }
        let width = first.len();
        for (c, row) in weights.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    actual: row.len(),
                }
                .with_context(format!("weight row {c}")));
            }
            crate::error::check_finite(row)
                .map_err(|e| e.with_context(format!("weight row {c}")))?;
        }
        Ok(Self {
            dim: width - 1,
            weights,
            spec,
        })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &TrainSpec {
        &self.spec
    }

    /// Per-class scores `w_c . [x; 1]`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self.weights.iter().map(|w| score(w, x)).collect())
    }

    /// Text block: `num_classes dim lambda epochs seed`, then one weight row
    /// per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {:e} {} {}\n",
            self.num_classes(),
            self.dim,
            self.spec.lambda,
            self.spec.epochs,
            self.spec.seed
        );
        for row in &self.weights {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: "<model>".into(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Empty("empty model text".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(err(
                1,
                "expected `num_classes dim lambda epochs seed`".into(),
            ));
        }
        let bad = |f: &str| err(1, format!("bad header field `{f}`"));
        let classes: usize = h[0].parse().map_err(|_| bad(h[0]))?;
        let dim: usize = h[1].parse().map_err(|_| bad(h[1]))?;
        let spec = TrainSpec {
            lambda: h[2].parse().map_err(|_| bad(h[2]))?,
            epochs: h[3].parse().map_err(|_| bad(h[3]))?,
            seed: h[4].parse().map_err(|_| bad(h[4]))?,
        };
        let mut weights = Vec::with_capacity(classes);
        for (i, line) in lines {
            let row = line
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| err(i + 1, format!("bad weight `{f}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != dim + 1 {
                return Err(err(
                    i + 1,
                    format!("expected {} weights, found {}", dim + 1, row.len()),
                ));
            }
            weights.push(row);
        }
        if weights.len() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                actual: weights.len(),
            }
            .with_context("model weight rows"));
        }
        Self::from_weights(weights, spec)
    }
}

fn score(w: &[f64], x: &[f64]) -> f64 {
    let (bias, feat) = w.split_last().expect("weight row has a bias");
    feat.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// Lazily scaled weight vector `w = scale * v`, with `x` implicitly
/// extended by a trailing 1.
struct ScaledWeights {
    v: Vec<f64>,
    scale: f64,
    v_norm2: f64,
}

impl ScaledWeights {
    fn new(width: usize) -> Self {
        Self {
            v: vec![0.0; width],
            scale: 1.0,
            v_norm2: 0.0,
        }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.scale * score(&self.v, x)
    }

    fn shrink(&mut self, factor: f64) {
        if factor == 0.0 {
            self.v.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
            self.v_norm2 = 0.0;
        } else {
            self.scale *= factor;
            if self.scale.abs() < 1e-12 {
                self.fold();
            }
        }
    }

    fn add(&mut self, coeff: f64, x: &[f64], x_norm2: f64) {
        let c = coeff / self.scale;
        let vx = score(&self.v, x);
        let (bias, feat) = self.v.split_last_mut().expect("nonempty");
        for (v, xi) in feat.iter_mut().zip(x) {
            *v += c * xi;
        }
        *bias += c;
        self.v_norm2 = (self.v_norm2 + 2.0 * c * vx + c * c * x_norm2).max(0.0);
    }

    fn norm2(&self) -> f64 {
        self.scale * self.scale * self.v_norm2
    }

    fn fold(&mut self) {
        let s = self.scale;
        self.v.iter_mut().for_each(|v| *v *= s);
        self.scale = 1.0;
        self.v_norm2 = self.v.iter().map(|v| v * v).sum();
    }

    fn into_weights(mut self) -> Vec<f64> {
        self.fold();
        self.v
    }
}

/// Samples sorted by (label, features) so training does not depend on the
/// input row order.
fn canonical_order(d: &FeatureDataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| {
        d.labels()[a].cmp(&d.labels()[b]).then_with(|| {
            d.features()[a]
                .iter()
                .zip(&d.features()[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    idx
}

fn check_trainable(d: &FeatureDataset, spec: &TrainSpec) -> Result<()> {
    spec.validate()?;
    if d.is_empty() {
        return Err(Error::Empty("cannot train on an empty dataset".into()));
    }
    let present = d.class_counts().iter().filter(|&&c| c > 0).count();
    if d.num_classes() < 2 || present < 2 {
        return Err(Error::invalid(format!(
            "training needs at least two classes with samples, found {present}"
        )));
    }
    Ok(())
}

fn epoch_orders(n: usize, spec: &TrainSpec) -> Vec<Vec<usize>> {
    (0..spec.epochs)
        .map(|e| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream_rng(spec.seed, e as u64));
            order
        })
        .collect()
}

fn train_binary(
    rows: &[&[f64]],
    targets: &[f64],
    norms: &[f64],
    orders: &[Vec<usize>],
    lambda: f64,
    mut on_epoch: impl FnMut(&ScaledWeights),
) -> Vec<f64> {
    let width = rows[0].len() + 1;
    let radius2 = 1.0 / lambda;
    let mut w = ScaledWeights::new(width);
    let mut t = 0usize;
    for order in orders {
        for &i in order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = targets[i] * w.dot(rows[i]);
            w.shrink(1.0 - 1.0 / t as f64);
            if margin < 1.0 {
                w.add(eta * targets[i], rows[i], norms[i]);
            }
            let n2 = w.norm2();
            if n2 > radius2 {
                w.shrink((radius2 / n2).sqrt());
            }
        }
        w.fold();
        on_epoch(&w);
    }
    w.into_weights()
}

struct Prepared<'a> {
    rows: Vec<&'a [f64]>,
    labels: Vec<usize>,
    norms: Vec<f64>,
    orders: Vec<Vec<usize>>,
}

fn prepare<'a>(d: &'a FeatureDataset, spec: &TrainSpec) -> Prepared<'a> {
    let order = canonical_order(d);
    let rows: Vec<&[f64]> = order.iter().map(|&i| d.features()[i].as_slice()).collect();
    let labels = order.iter().map(|&i| d.labels()[i]).collect();
    let norms = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();
    let orders = epoch_orders(rows.len(), spec);
    Prepared {
        rows,
        labels,
        norms,
        orders,
    }
}

pub fn train(d: &FeatureDataset, spec: &TrainSpec) -> Result<SvmModel> {
    check_trainable(d, spec)?;
    let prep = prepare(d, spec);
    let weights = (0..d.num_classes())
        .into_par_iter()
        .map(|c| {
            let targets: Vec<f64> = prep
                .labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { -1.0 })
                .collect();
            train_binary(
                &prep.rows,
                &targets,
                &prep.norms,
                &prep.orders,
                spec.lambda,
                |_| {},
            )
        })
        .collect();
    SvmModel::from_weights(weights, *spec)
}

/// Like [`train`], also returning the training objective before the first
/// epoch and after each one.
pub fn train_with_history(d: &FeatureDataset, spec: &TrainSpec) -> Result<(SvmModel, Vec<f64>)> {
    check_trainable(d, spec)?;
    let prep = prepare(d, spec);
    let per_class: Vec<(Vec<f64>, Vec<f64>)> = (0..d.num_classes())
        .into_par_iter()
        .map(|c| {
            let targets: Vec<f64> = prep
                .labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { -1.0 })
                .collect();
            let mut history = vec![1.0];
            let w = train_binary(
                &prep.rows,
                &targets,
                &prep.norms,
                &prep.orders,
                spec.lambda,
                |w| {
                    history.push(binary_objective(&w.v, &prep.rows, &targets, spec.lambda));
                },
            );
            (w, history)
        })
        .collect();
    let classes = per_class.len() as f64;
    let history = (0..=spec.epochs)
        .map(|e| per_class.iter().map(|(_, h)| h[e]).sum::<f64>() / classes)
        .collect();
    let weights = per_class.into_iter().map(|(w, _)| w).collect();
    Ok((SvmModel::from_weights(weights, *spec)?, history))
}

fn binary_objective(w: &[f64], rows: &[&[f64]], targets: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(targets)
        .map(|(x, y)| (1.0 - y * score(w, x)).max(0.0))
        .sum();
    0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>() + hinge / rows.len() as f64
}

/// Regularized hinge loss averaged over the one-vs-rest problems.
pub fn objective(model: &SvmModel, d: &FeatureDataset) -> Result<f64> {
    check_dims(model, d)?;
    if d.is_empty() {
        return Err(Error::Empty("objective of an empty dataset".into()));
    }
    let rows: Vec<&[f64]> = d.features().iter().map(Vec::as_slice).collect();
    let total: f64 = model
        .weights
        .iter()
        .enumerate()
        .map(|(c, w)| {
            let targets: Vec<f64> = d
                .labels()
                .iter()
                .map(|&l| if l == c { 1.0 } else { -1.0 })
                .collect();
            binary_objective(w, &rows, &targets, model.spec.lambda)
        })
        .sum();
    Ok(total / model.num_classes() as f64)
}

/// Highest-scoring class; ties go to the lowest class id.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<usize> {
    let scores = model.scores(x)?;
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
        }
    }
    Ok(best)
}

fn check_dims(model: &SvmModel, d: &FeatureDataset) -> Result<()> {
    if !d.is_empty() && d.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            actual: d.dim(),
        });
    }
    Ok(())
}

pub fn evaluate(model: &SvmModel, d: &FeatureDataset) -> Result<f64> {
    check_dims(model, d)?;
    if d.is_empty() {
        return Err(Error::Empty("cannot evaluate on an empty dataset".into()));
    }
    let correct = d
        .features()
        .par_iter()
        .zip(d.labels().par_iter())
        .map(|(x, &y)| predict(model, x).map(|p| usize::from(p == y)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(correct as f64 / d.len() as f64)
}

/// Stratified k-fold accuracies, standardizing each fold with its own
/// training statistics.
pub fn cross_validate(
    d: &FeatureDataset,
    folds: usize,
    spec: &TrainSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let parts = kfold_indices(d, folds, seed)?;
    parts
        .iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let train_idx: Vec<usize> = (0..d.len())
                .filter(|i| test_idx.binary_search(i).is_err())
                .collect();
            let (tr, te, _) = standardize(&d.select(&train_idx), &d.select(test_idx))?;
            let model = train(&tr, spec)?;
            evaluate(&model, &te).map_err(|e| e.with_context(format!("fold {f}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, synth_blobs, SplitSpec, SynthSpec};

    fn separable_1d() -> FeatureDataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..50 {
            features.push(vec![-1.1 - 0.05 * i as f64]);
            labels.push(0);
            features.push(vec![1.1 + 0.05 * i as f64]);
            labels.push(1);
        }
        FeatureDataset::new(features, labels, 2, None).unwrap()
    }

    fn fast_spec() -> TrainSpec {
        TrainSpec {
            lambda: 1e-3,
            epochs: 30,
            seed: 7,
        }
    }

    #[test]
    fn separable_data_is_learned() {
        let d = separable_1d();
        let model = train(&d, &fast_spec()).unwrap();
        assert_eq!(evaluate(&model, &d).unwrap(), 1.0);
        assert_eq!(predict(&model, &[-5.0]).unwrap(), 0);
        assert_eq!(predict(&model, &[5.0]).unwrap(), 1);
        let test = FeatureDataset::new(
            vec![vec![-1.05], vec![3.0], vec![-9.0]],
            vec![0, 1, 0],
            2,
            None,
        )
        .unwrap();
        assert_eq!(evaluate(&model, &test).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = FeatureDataset::new(vec![vec![1.0], vec![2.0]], vec![0, 0], 1, None).unwrap();
        assert!(train(&one, &TrainSpec::default()).is_err());
        let d = separable_1d();
        assert!(train(
            &d,
            &TrainSpec {
                lambda: 0.0,
                ..TrainSpec::default()
            }
        )
        .is_err());
        assert!(train(
            &d,
            &TrainSpec {
                epochs: 0,
                ..TrainSpec::default()
            }
        )
        .is_err());
        let model = train(&d, &fast_spec()).unwrap();
        assert!(predict(&model, &[1.0, 2.0]).is_err());
        let empty = d.select(&[]);
        assert!(evaluate(&model, &empty).is_err());
        let wide = FeatureDataset::new(vec![vec![1.0, 2.0]], vec![0], 2, None).unwrap();
        assert!(evaluate(&model, &wide).is_err());
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let model = SvmModel::from_weights(vec![vec![0.0; 4]; 3], TrainSpec::default()).unwrap();
        assert_eq!(predict(&model, &[1.0, -2.0, 3.0]).unwrap(), 0);
    }

    #[test]
    fn positive_scaling_keeps_predictions() {
        let d = synth_blobs(&SynthSpec {
            num_classes: 4,
            per_class: 20,
            dim: 8,
            ..SynthSpec::default()
        })
        .unwrap();
        let model = train(&d, &fast_spec()).unwrap();
        let scaled: Vec<Vec<f64>> = model
            .weights()
            .iter()
            .map(|r| r.iter().map(|v| v * 3.7).collect())
            .collect();
        let scaled = SvmModel::from_weights(scaled, *model.spec()).unwrap();
        for x in d.features() {
            assert_eq!(predict(&model, x).unwrap(), predict(&scaled, x).unwrap());
        }
    }

    #[test]
    fn training_ignores_input_order() {
        let d = synth_blobs(&SynthSpec {
            num_classes: 3,
            per_class: 15,
            dim: 5,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut perm: Vec<usize> = (0..d.len()).rev().collect();
        perm.swap(3, 17);
        let shuffled = d.select(&perm);
        let a = train(&d, &fast_spec()).unwrap();
        let b = train(&shuffled, &fast_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, train(&d, &fast_spec()).unwrap());
        assert_ne!(
            a,
            train(
                &d,
                &TrainSpec {
                    seed: 8,
                    ..fast_spec()
                }
            )
            .unwrap()
        );
    }

    #[test]
    fn objective_decreases() {
        let d = synth_blobs(&SynthSpec {
            num_classes: 5,
            per_class: 30,
            dim: 20,
            ..SynthSpec::default()
        })
        .unwrap();
        let (model, history) = train_with_history(
            &d,
            &TrainSpec {
                lambda: 1e-2,
                epochs: 10,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(history.len(), 11);
        assert_eq!(history[0], 1.0);
        assert!(history.last().unwrap() <= &history[0]);
        assert!((objective(&model, &d).unwrap() - history[10]).abs() < 1e-9);
        assert_eq!(
            model,
            train(
                &d,
                &TrainSpec {
                    lambda: 1e-2,
                    epochs: 10,
                    seed: 1
                }
            )
            .unwrap()
        );
    }

    #[test]
    fn weights_stay_in_the_pegasos_ball() {
        let d = separable_1d();
        let spec = TrainSpec {
            lambda: 0.5,
            epochs: 5,
            seed: 3,
        };
        let model = train(&d, &spec).unwrap();
        for w in model.weights() {
            let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 1.0 / spec.lambda.sqrt() + 1e-12);
        }
    }

    #[test]
    fn model_text_round_trip() {
        let d = synth_blobs(&SynthSpec {
            num_classes: 3,
            per_class: 10,
            dim: 6,
            ..SynthSpec::default()
        })
        .unwrap();
        let model = train(&d, &fast_spec()).unwrap();
        let back = SvmModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);
        assert!(SvmModel::from_text("2 3 1e-4 20 42\n1 2 3 4\n").is_err());
        assert!(SvmModel::from_text("").is_err());
    }

    #[test]
    fn constant_model_is_at_chance() {
        let d = synth_blobs(&SynthSpec {
            num_classes: 10,
            per_class: 10,
            dim: 3,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut w = vec![vec![0.0; 4]; 10];
        w[6][3] = 1.0;
        let model = SvmModel::from_weights(w, TrainSpec::default()).unwrap();
        assert_eq!(evaluate(&model, &d).unwrap(), 0.1);
    }

    #[test]
    fn permuted_labels_give_chance_accuracy() {
        use rand::seq::SliceRandom;
        let spec = SynthSpec {
            noise_sigma: 1.0,
            ..SynthSpec::default()
        };
        let d = synth_blobs(&spec).unwrap();
        let mut labels = d.labels().to_vec();
        labels.shuffle(&mut stream_rng(5, 0));
        let permuted = FeatureDataset::new(d.features().to_vec(), labels, 10, None).unwrap();
        let (tr, te) = split(&permuted, &SplitSpec::default()).unwrap();
        let (tr, te, _) = standardize(&tr, &te).unwrap();
        let acc = evaluate(&train(&tr, &TrainSpec::default()).unwrap(), &te).unwrap();
        assert!((acc - 0.1).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn cross_validation_on_blobs() {
        let d = synth_blobs(&SynthSpec {
            num_classes: 3,
            per_class: 20,
            dim: 10,
            ..SynthSpec::default()
        })
        .unwrap();
        let accs = cross_validate(&d, 4, &fast_spec(), 1).unwrap();
        assert_eq!(accs.len(), 4);
        assert!(accs.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{featurize, Candidate, Label, LabeledSample, Patch, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::textfmt::{read_text, records, write_text};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy.
pub fn cross_entropy(probs: &[f64], labels: &[Label]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::invalid("cross-entropy of an empty batch"));
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            match y {
                Label::Vehicle => -p.ln(),
                Label::NonVehicle => -(1.0 - p).ln(),
            }
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic model `sigmoid(w . x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let z: f64 = self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        sigmoid(z)
    }

    pub fn predict_patch(&self, p: &Patch) -> f64 {
        self.predict(&featurize(p))
    }

    /// One value per line: the weights, then the bias.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for v in self.weights.iter().chain(std::iter::once(&self.bias)) {
            let _ = writeln!(out, "{v}");
        }
        write_text(path.as_ref(), &out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = read_text(path.as_ref())?;
        let mut values = records(&text)
            .map(|mut r| {
                let v = r.f64("weight")?;
                r.end()?;
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        let bias = values
            .pop()
            .ok_or_else(|| Error::invalid(format!("{}: empty model file", path.as_ref().display())))?;
        Ok(Self { weights: values, bias })
    }
}

/// Cross-entropy over `(features, labels)` and its gradient; the bias
/// derivative is the last gradient entry.
pub fn loss_and_gradient(model: &LinearModel, features: &[Vec<f64>], labels: &[Label]) -> Result<(f64, Vec<f64>)> {
    let probs: Vec<f64> = features.iter().map(|x| model.predict(x)).collect();
    let loss = cross_entropy(&probs, labels)?;
    let dim = model.weights.len();
    let mut grad = vec![0.0; dim + 1];
    for ((x, p), y) in features.iter().zip(&probs).zip(labels) {
        let r = p - y.as_f64();
        for (g, xi) in grad[..dim].iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[dim] += r;
    }
    let n = features.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub model: LinearModel,
    /// Loss before the first update followed by the loss after every epoch.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent from small seeded random weights.
pub fn train_on_features(
    features: &[Vec<f64>],
    labels: &[Label],
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<TrainingReport> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!(
            "classify.lr must be a non-negative number, got {lr}"
        )));
    }
    if !(labels.contains(&Label::Vehicle) && labels.contains(&Label::NonVehicle)) {
        return Err(Error::invalid("training needs both vehicle and non-vehicle samples"));
    }
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch("ragged feature vectors".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LinearModel {
        weights: (0..dim).map(|_| rng.gen_range(-0.01..0.01)).collect(),
        bias: 0.0,
    };
    let mut losses = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let (loss, grad) = loss_and_gradient(&model, features, labels)?;
        losses.push(loss);
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
        model.bias -= lr * grad[dim];
    }
    let (loss, _) = loss_and_gradient(&model, features, labels)?;
    losses.push(loss);
    Ok(TrainingReport { model, losses })
}

/// Trains the baseline patch classifier on the featurized samples.
pub fn train_baseline(samples: &[LabeledSample], lr: f64, epochs: usize, seed: u64) -> Result<TrainingReport> {
    let features: Vec<Vec<f64>> = samples.iter().map(|s| featurize(&s.patch)).collect();
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let report = train_on_features(&features, &labels, lr, epochs, seed)?;
    debug_assert_eq!(report.model.weights.len(), FEATURE_DIM);
    Ok(report)
}

/// Probability that a candidate is a vehicle.
pub trait Classifier {
    fn score(&self, candidate: &Candidate) -> f64;
}

impl Classifier for LinearModel {
    fn score(&self, candidate: &Candidate) -> f64 {
        self.predict_patch(&candidate.patch)
    }
}

/// Scores supplied from outside, keyed by candidate id. Unknown ids score 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    pub scores: BTreeMap<String, f64>,
}

impl Classifier for ExternalScores {
    fn score(&self, candidate: &Candidate) -> f64 {
        self.scores.get(&candidate.id).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: Label = Label::Vehicle;
    const N: Label = Label::NonVehicle;

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(&[1.0], &[V]).unwrap() <= 1e-11);
        assert!((cross_entropy(&[0.5, 0.5], &[V, N]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((cross_entropy(&[0.9], &[N]).unwrap() - std::f64::consts::LN_10).abs() < 1e-9);
        assert!(cross_entropy(&[], &[]).is_err());
        assert!(cross_entropy(&[0.3], &[V, N]).is_err());
    }

    fn toy() -> (Vec<Vec<f64>>, Vec<Label>) {
        let pts = [
            ([0.1, 0.2], N),
            ([0.3, 0.1], N),
            ([0.2, 0.4], N),
            ([0.9, 0.8], V),
            ([0.7, 0.9], V),
            ([0.8, 0.6], V),
        ];
        (
            pts.iter().map(|p| p.0.to_vec()).collect(),
            pts.iter().map(|p| p.1).collect(),
        )
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (x, y) = toy();
        let r = train_on_features(&x, &y, 2.0, 500, 1).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(f, &l)| (r.model.predict(f) >= 0.5) == (l == V))
            .count();
        assert_eq!(correct, x.len());
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let (x, y) = toy();
        let r = train_on_features(&x, &y, 0.0, 20, 9).unwrap();
        let init = train_on_features(&x, &y, 0.0, 0, 9).unwrap();
        assert_eq!(r.model, init.model);
        assert!(r.losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn small_rate_loss_monotone() {
        let (x, y) = toy();
        let r = train_on_features(&x, &y, 0.01, 300, 3).unwrap();
        assert!(r.losses.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(r.losses.last() <= r.losses.first());
    }

    #[test]
    fn single_class_rejected() {
        assert!(train_on_features(&[vec![0.0]], &[V], 0.1, 1, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = toy();
        assert_eq!(
            train_on_features(&x, &y, 0.5, 50, 4).unwrap(),
            train_on_features(&x, &y, 0.5, 50, 4).unwrap()
        );
    }

    #[test]
    fn model_file_round_trip() {
        let m = LinearModel {
            weights: vec![0.1, -2.5e-7, 3.0],
            bias: -0.75,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.txt");
        m.save(&p).unwrap();
        assert_eq!(LinearModel::load(&p).unwrap(), m);
        std::fs::write(&p, "").unwrap();
        assert!(LinearModel::load(&p).is_err());
    }

    #[test]
    fn sigmoid_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}

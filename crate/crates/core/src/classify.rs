//! Lightweight realistic/fake classifiers and external probability ingestion.
//!
//! Three native models see different views of a frame: a logistic model and
//! a nearest-neighbor model on the feature vector, and a one-dimensional
//! logistic calibration of the physics composite score. Probabilities from
//! models run elsewhere enter through a CSV.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, ProbabilityVector, Verdict};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, ClassificationReport, ConfusionCounts};

/// Bumped when the serialized model layout changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MIN_PER_CLASS: usize = 5;

/// One item as every classifier sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    /// Physics composite score, when computed.
    #[serde(default)]
    pub physics: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub sample: Sample,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 100,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Logistic(LogisticParams),
    KNearest { k: usize },
    PhysicsRule,
    External { path: PathBuf },
}

impl ClassifierSpec {
    pub fn logistic() -> Self {
        ClassifierSpec::Logistic(LogisticParams::default())
    }

    pub fn k_nearest() -> Self {
        ClassifierSpec::KNearest { k: 5 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierSpec::Logistic(_) => "logistic",
            ClassifierSpec::KNearest { .. } => "k_nearest",
            ClassifierSpec::PhysicsRule => "physics_rule",
            ClassifierSpec::External { .. } => "external",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClassifierSpec::Logistic(p) => {
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return Err(Error::InvalidInput("learning rate must be positive".into()));
                }
                if p.epochs == 0 || p.batch_size == 0 {
                    return Err(Error::InvalidInput(
                        "epochs and batch size must be at least 1".into(),
                    ));
                }
                if p.l2.is_nan() || p.l2 < 0.0 {
                    return Err(Error::InvalidInput(
                        "L2 strength must be nonnegative".into(),
                    ));
                }
            }
            ClassifierSpec::KNearest { k } => {
                if k % 2 == 0 {
                    return Err(Error::InvalidInput(format!("k must be odd, got {k}")));
                }
            }
            ClassifierSpec::PhysicsRule | ClassifierSpec::External { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Parameters {
    Logistic {
        weights: Vec<f64>,
        bias: f64,
    },
    KNearest {
        k: usize,
        features: Vec<Vec<f64>>,
        labels: Vec<Verdict>,
    },
    /// `P(realistic) = sigmoid(slope * composite + intercept)`.
    PhysicsRule {
        slope: f64,
        intercept: f64,
    },
    External {
        probabilities: HashMap<String, ProbabilityVector>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub format_version: u32,
    pub id: String,
    pub spec: ClassifierSpec,
    pub parameters: Parameters,
    pub validation: Option<ClassificationReport>,
    pub round: u32,
    /// Mean training loss after each epoch (logistic models only).
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

impl TrainedClassifier {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        dataset::write_json(path, self)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = dataset::read_json(path)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "model format version {} is not supported",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn predict_proba(&self, sample: &Sample) -> Result<ProbabilityVector> {
        predict_proba(self, sample)
    }
}

// ── splitting ────────────────────────────────────────────────────────────────

/// Stratified seeded split into (train, validation) index lists. Each class
/// contributes `round(fraction * class size)` items to validation.
pub fn split_train_validation(
    labels: &[Verdict],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "validation fraction {fraction} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [Verdict::Realistic, Verdict::Fake] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < MIN_PER_CLASS {
            return Err(Error::TooFewItems(format!(
                "{} {class} items, need at least {MIN_PER_CLASS}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_val = (fraction * idx.len() as f64).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

// ── logistic regression ──────────────────────────────────────────────────────

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy (Realistic = 1) plus `l2 / 2 * |w|^2`, and its
/// gradient with respect to the weights and the bias.
pub fn logistic_loss_and_gradient(
    weights: &[f64],
    bias: f64,
    xs: &[&[f64]],
    ys: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = bias + x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        // -[y log s(z) + (1 - y) log(1 - s(z))]
        loss += softplus(z) - y * z;
        let err = sigmoid(z) - y;
        for (g, a) in gw.iter_mut().zip(x.iter()) {
            *g += err * a / n;
        }
        gb += err / n;
    }
    let norm2: f64 = weights.iter().map(|w| w * w).sum();
    for (g, w) in gw.iter_mut().zip(weights) {
        *g += l2 * w;
    }
    (loss / n + 0.5 * l2 * norm2, gw, gb)
}

fn check_features(data: &[Labeled]) -> Result<usize> {
    let d = data[0].sample.features.len();
    for item in data {
        if item.sample.features.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: item.sample.features.len(),
            });
        }
        if item.sample.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature in {}",
                item.sample.id
            )));
        }
    }
    Ok(d)
}

fn target(v: Verdict) -> f64 {
    if v.is_realistic() {
        1.0
    } else {
        0.0
    }
}

/// Warm start for logistic training.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn train_logistic(
    params: &LogisticParams,
    data: &[Labeled],
    seed: u64,
    warm: Option<&WarmStart>,
) -> Result<(Parameters, Vec<f64>)> {
    let d = check_features(data)?;
    let (mut weights, mut bias) = match warm {
        Some(w) if w.weights.len() == d => (w.weights.clone(), w.bias),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: w.weights.len(),
            })
        }
        None => (vec![0.0; d], 0.0),
    };
    let xs: Vec<&[f64]> = data.iter().map(|l| l.sample.features.as_slice()).collect();
    let ys: Vec<f64> = data.iter().map(|l| target(l.verdict)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(params.epochs);
    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| xs[i]).collect();
            let by: Vec<f64> = batch.iter().map(|&i| ys[i]).collect();
            let (_, gw, gb) = logistic_loss_and_gradient(&weights, bias, &bx, &by, params.l2);
            for (w, g) in weights.iter_mut().zip(&gw) {
                *w -= params.learning_rate * g;
            }
            bias -= params.learning_rate * gb;
        }
        let (loss, _, _) = logistic_loss_and_gradient(&weights, bias, &xs, &ys, params.l2);
        if !loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.push(loss);
    }
    Ok((Parameters::Logistic { weights, bias }, history))
}

/// Maximum-likelihood fit of `sigmoid(a * s + b)` by Newton's method. A tiny
/// ridge keeps separable data finite.
fn fit_calibration(scores: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    const RIDGE: f64 = 1e-3;
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (mut ga, mut gb) = (RIDGE * a, 0.0);
        let (mut haa, mut hab, mut hbb) = (RIDGE, 0.0, 1e-12);
        for (&s, &y) in scores.iter().zip(ys) {
            let p = sigmoid(a * s + b);
            let w = p * (1.0 - p);
            ga += (p - y) * s;
            gb += p - y;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        a -= da;
        b -= db;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Diverged { epoch: 0 });
        }
        if da.abs().max(db.abs()) < 1e-10 {
            break;
        }
    }
    Ok((a, b))
}

fn physics_score(sample: &Sample) -> Result<f64> {
    sample
        .physics
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidInput(format!("sample {} has no physics score", sample.id)))
}

/// Trains one classifier. `validation`, when given, fills the validation
/// metrics; `warm` warm-starts a logistic model.
pub fn train(
    id: impl Into<String>,
    spec: &ClassifierSpec,
    data: &[Labeled],
    validation: Option<&[Labeled]>,
    seed: u64,
    round: u32,
    warm: Option<&WarmStart>,
) -> Result<TrainedClassifier> {
    spec.validate()?;
    let n_real = data.iter().filter(|l| l.verdict.is_realistic()).count();
    if !matches!(spec, ClassifierSpec::External { .. }) {
        if data.is_empty() {
            return Err(Error::TooFewItems("no training data".into()));
        }
        if n_real == 0 || n_real == data.len() {
            return Err(Error::SingleClass);
        }
    }
    let mut loss_history = Vec::new();
    let parameters = match spec {
        ClassifierSpec::Logistic(p) => {
            let (params, history) = train_logistic(p, data, seed, warm)?;
            loss_history = history;
            params
        }
        ClassifierSpec::KNearest { k } => {
            check_features(data)?;
            Parameters::KNearest {
                k: *k,
                features: data.iter().map(|l| l.sample.features.clone()).collect(),
                labels: data.iter().map(|l| l.verdict).collect(),
            }
        }
        ClassifierSpec::PhysicsRule => {
            let scores = data
                .iter()
                .map(|l| physics_score(&l.sample))
                .collect::<Result<Vec<_>>>()?;
            let ys: Vec<f64> = data.iter().map(|l| target(l.verdict)).collect();
            let (slope, intercept) = fit_calibration(&scores, &ys)?;
            Parameters::PhysicsRule { slope, intercept }
        }
        ClassifierSpec::External { path } => Parameters::External {
            probabilities: ingest_external(path)?.into_iter().collect(),
        },
    };
    let mut model = TrainedClassifier {
        format_version: MODEL_FORMAT_VERSION,
        id: id.into(),
        spec: spec.clone(),
        parameters,
        validation: None,
        round,
        loss_history,
    };
    if let Some(val) = validation.filter(|v| !v.is_empty()) {
        model.validation = Some(evaluate(&model, val, 0.5)?);
    }
    Ok(model)
}

/// Classification metrics of `model` on labeled data at `threshold`.
pub fn evaluate(
    model: &TrainedClassifier,
    data: &[Labeled],
    threshold: f64,
) -> Result<ClassificationReport> {
    let predicted = data
        .iter()
        .map(|l| predict_proba(model, &l.sample).map(|p| p.verdict(threshold)))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Verdict> = data.iter().map(|l| l.verdict).collect();
    classification_report(&ConfusionCounts::from_predictions(&predicted, &truth)?)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn predict_proba(model: &TrainedClassifier, sample: &Sample) -> Result<ProbabilityVector> {
    match &model.parameters {
        Parameters::Logistic { weights, bias } => {
            if sample.features.len() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    actual: sample.features.len(),
                });
            }
            let z = bias
                + weights
                    .iter()
                    .zip(&sample.features)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
            ProbabilityVector::realistic(sigmoid(z))
        }
        Parameters::KNearest {
            k,
            features,
            labels,
        } => {
            let d = features.first().map_or(0, Vec::len);
            if sample.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: sample.features.len(),
                });
            }
            let mut dist: Vec<(f64, usize)> = features
                .iter()
                .enumerate()
                .map(|(i, f)| (squared_distance(f, &sample.features), i))
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let k = (*k).min(dist.len()).max(1);
            let realistic = dist[..k]
                .iter()
                .filter(|(_, i)| labels[*i].is_realistic())
                .count();
            ProbabilityVector::realistic(realistic as f64 / k as f64)
        }
        Parameters::PhysicsRule { slope, intercept } => {
            ProbabilityVector::realistic(sigmoid(slope * physics_score(sample)? + intercept))
        }
        Parameters::External { probabilities } => probabilities
            .get(&sample.id)
            .copied()
            .ok_or_else(|| Error::UnknownId(sample.id.clone())),
    }
}

/// Reads externally computed `id,p_realistic,p_fake` probabilities.
pub fn ingest_external(path: impl AsRef<Path>) -> Result<Vec<(String, ProbabilityVector)>> {
    dataset::read_probability_csv(path)
}

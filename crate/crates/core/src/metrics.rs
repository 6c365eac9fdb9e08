//! Distributional similarity metrics between feature sets (Fréchet distance,
//! kernel distance, inception score) and binary classification reports.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Verdict;
use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-9;
const PSD_TOLERANCE: f64 = 1e-8;
/// Fréchet distances are clamped from below at this value.
pub const FID_FLOOR: f64 = -1e-6;

/// Mean and covariance of a feature distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianMoments {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { mean, covariance };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.covariance.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.covariance.len(),
            });
        }
        for row in &self.covariance {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
        }
        let finite = self
            .mean
            .iter()
            .chain(self.covariance.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput(
                "moments contain non-finite values".into(),
            ));
        }
        for i in 0..d {
            for j in 0..i {
                if (self.covariance[i][j] - self.covariance[j][i]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if d > 0 {
            let min = SymmetricEigen::new(self.cov_matrix()).eigenvalues.min();
            if min < -PSD_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "covariance has negative eigenvalue {min:e}"
                )));
            }
        }
        Ok(())
    }
}

fn check_rows(features: &[&[f64]]) -> Result<usize> {
    let d = features.first().map_or(0, |f| f.len());
    for f in features {
        if f.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: f.len(),
            });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature values must be finite".into()));
        }
    }
    Ok(d)
}

/// Sample mean and unbiased (n - 1) covariance, symmetrized.
pub fn fit_moments(features: &[&[f64]]) -> Result<GaussianMoments> {
    if features.len() < 2 {
        return Err(Error::TooFewItems(format!(
            "moments need at least 2 vectors, got {}",
            features.len()
        )));
    }
    let d = check_rows(features)?;
    let n = features.len();
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let covariance = (0..d)
        .map(|i| (0..d).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect())
        .collect();
    Ok(GaussianMoments { mean, covariance })
}

/// Symmetric square root via eigendecomposition, negative eigenvalues
/// clamped to zero.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetDistance {
    /// `raw` clamped from below at `FID_FLOOR`.
    pub value: f64,
    pub raw: f64,
}

/// `|mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`, with the trace of the
/// cross term taken from the eigenvalues of `S1^(1/2) S2 S1^(1/2)`.
pub fn frechet_distance(m1: &GaussianMoments, m2: &GaussianMoments) -> Result<FrechetDistance> {
    m1.validate()?;
    m2.validate()?;
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch {
            expected: m1.dim(),
            actual: m2.dim(),
        });
    }
    let mean_term: f64 = m1
        .mean
        .iter()
        .zip(&m2.mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let (s1, s2) = (m1.cov_matrix(), m2.cov_matrix());
    let r1 = sqrt_psd(&s1);
    let inner = &r1 * &s2 * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let raw = mean_term + s1.trace() + s2.trace() - 2.0 * cross;
    if !raw.is_finite() {
        return Err(Error::InvalidInput("Fréchet distance is not finite".into()));
    }
    Ok(FrechetDistance {
        value: raw.max(FID_FLOOR),
        raw,
    })
}

/// Cubic polynomial kernel `(x.y / d + 1)^3`.
pub fn polynomial_kernel(x: &[f64], y: &[f64]) -> f64 {
    let d = x.len().max(1) as f64;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / d + 1.0).powi(3)
}

/// Unbiased MMD^2 estimate between two equal-size samples.
pub fn mmd2_unbiased(x: &[&[f64]], y: &[&[f64]]) -> f64 {
    let m = x.len() as f64;
    let within = |s: &[&[f64]]| -> f64 {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j {
                    acc += polynomial_kernel(s[i], s[j]);
                }
            }
        }
        acc / (m * (m - 1.0))
    };
    let mut cross = 0.0;
    for a in x {
        for b in y {
            cross += polynomial_kernel(a, b);
        }
    }
    within(x) + within(y) - 2.0 * cross / (m * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over subsets or splits.
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Kernel distance: unbiased MMD^2 with the cubic polynomial kernel over
/// `n_subsets` seeded draws of `subset_size` items from each set.
pub fn kid(
    x: &[&[f64]],
    y: &[&[f64]],
    subset_size: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<MeanStd> {
    if subset_size < 2 {
        return Err(Error::InvalidInput(
            "KID subset size must be at least 2".into(),
        ));
    }
    if n_subsets == 0 {
        return Err(Error::InvalidInput("KID needs at least one subset".into()));
    }
    if subset_size > x.len() || subset_size > y.len() {
        return Err(Error::TooFewItems(format!(
            "KID subset size {subset_size} exceeds set sizes {} and {}",
            x.len(),
            y.len()
        )));
    }
    let dx = check_rows(x)?;
    let dy = check_rows(y)?;
    if dx != dy {
        return Err(Error::DimensionMismatch {
            expected: dx,
            actual: dy,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_subsets);
    for _ in 0..n_subsets {
        let xi: Vec<&[f64]> = index::sample(&mut rng, x.len(), subset_size)
            .iter()
            .map(|i| x[i])
            .collect();
        let yi: Vec<&[f64]> = index::sample(&mut rng, y.len(), subset_size)
            .iter()
            .map(|i| y[i])
            .collect();
        values.push(mmd2_unbiased(&xi, &yi));
    }
    Ok(mean_std(&values))
}

/// Inception score over class-probability rows: rows are shuffled with
/// `seed`, cut into `n_splits` contiguous groups, and each group scores
/// `exp(mean KL(row || group marginal))`.
pub fn inception_score(probs: &[Vec<f64>], n_splits: usize, seed: u64) -> Result<MeanStd> {
    if n_splits == 0 || probs.len() < n_splits {
        return Err(Error::TooFewItems(format!(
            "{} rows cannot fill {n_splits} splits",
            probs.len()
        )));
    }
    let c = probs[0].len();
    for (i, row) in probs.iter().enumerate() {
        if row.len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                actual: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "probability row {i} is not a distribution"
            )));
        }
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = probs.len();
    let mut scores = Vec::with_capacity(n_splits);
    for s in 0..n_splits {
        let group = &order[s * n / n_splits..(s + 1) * n / n_splits];
        let mut marginal = vec![0.0; c];
        for &i in group {
            for (m, p) in marginal.iter_mut().zip(&probs[i]) {
                *m += p / group.len() as f64;
            }
        }
        let kl: f64 = group
            .iter()
            .map(|&i| {
                probs[i]
                    .iter()
                    .zip(&marginal)
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, m)| p * (p / m).ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / group.len() as f64;
        scores.push(kl.exp());
    }
    Ok(mean_std(&scores))
}

/// Confusion counts with Realistic as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn from_predictions(predicted: &[Verdict], truth: &[Verdict]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: predicted.len(),
            });
        }
        let mut c = Self::default();
        for (p, t) in predicted.iter().zip(truth) {
            match (p.is_realistic(), t.is_realistic()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn classification_report(counts: &ConfusionCounts) -> Result<ClassificationReport> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::TooFewItems(
            "classification report over zero items".into(),
        ));
    }
    let mut degenerate = false;
    let mut ratio = |num: u64, den: u64| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio(counts.tp + counts.tn, total);
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    if precision + recall == 0.0 {
        degenerate = true;
    }
    Ok(ClassificationReport {
        accuracy,
        precision,
        recall,
        f1: f1_score(precision, recall),
        degenerate,
    })
}

/// Area under the ROC curve for `scores` (higher = more positive), with
/// tied scores counted as half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: positive.len(),
            actual: scores.len(),
        });
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann-Whitney U from average ranks
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Defaults to `min(100, smaller set size)`.
    pub subset_size: Option<usize>,
    pub n_subsets: usize,
    pub n_splits: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            subset_size: None,
            n_subsets: 50,
            n_splits: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub fid_raw: f64,
    pub kid_mean: f64,
    pub kid_std: f64,
    /// Present when class probabilities were supplied.
    pub is_mean: Option<f64>,
    pub is_std: Option<f64>,
    pub n_real: usize,
    pub n_generated: usize,
    pub extractor: String,
}

pub fn metric_report(
    real: &[&[f64]],
    generated: &[&[f64]],
    probs: Option<&[Vec<f64>]>,
    extractor: &str,
    config: &MetricConfig,
) -> Result<MetricReport> {
    let fid = frechet_distance(&fit_moments(real)?, &fit_moments(generated)?)?;
    let m = config
        .subset_size
        .unwrap_or_else(|| 100.min(real.len()).min(generated.len()));
    let k = kid(real, generated, m, config.n_subsets, config.seed)?;
    let is = match probs {
        Some(p) => Some(inception_score(
            p,
            config.n_splits.min(p.len()).max(1),
            config.seed,
        )?),
        None => None,
    };
    Ok(MetricReport {
        fid: fid.value,
        fid_raw: fid.raw,
        kid_mean: k.mean,
        kid_std: k.std,
        is_mean: is.map(|s| s.mean),
        is_std: is.map(|s| s.std),
        n_real: real.len(),
        n_generated: generated.len(),
        extractor: extractor.to_string(),
    })
}

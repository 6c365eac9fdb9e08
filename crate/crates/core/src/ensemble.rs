//! Voting over per-classifier probabilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ProbabilityVector, Verdict};
use crate::error::{Error, Result};
use crate::metrics::{classification_report, ClassificationReport, ConfusionCounts};

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;
const WEIGHT_FLOOR: f64 = 1e-3;
const REFINE_STEP: f64 = 0.05;
const MAX_REFINE_PASSES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Hard,
    SoftAverage,
    SoftWeighted,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Hard,
        Strategy::SoftAverage,
        Strategy::SoftWeighted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Hard => "hard",
            Strategy::SoftAverage => "soft-average",
            Strategy::SoftWeighted => "soft-weighted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "hard" => Ok(Strategy::Hard),
            "soft-average" | "soft" => Ok(Strategy::SoftAverage),
            "soft-weighted" | "weighted" => Ok(Strategy::SoftWeighted),
            _ => Err(Error::InvalidInput(format!(
                "unknown voting strategy {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    pub strategy: Strategy,
    /// Per-classifier weights, used by `SoftWeighted` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_tie_break")]
    pub tie_break: Verdict,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_tie_break() -> Verdict {
    Verdict::Fake
}

impl VoteConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            weights: None,
            threshold: default_threshold(),
            tie_break: default_tie_break(),
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        Self {
            weights: Some(weights),
            ..Self::new(Strategy::SoftWeighted)
        }
    }

    /// Checks the config against a panel of `n_classifiers`.
    pub fn validate(&self, n_classifiers: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidInput(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        match (&self.strategy, &self.weights) {
            (Strategy::SoftWeighted, None) => Err(Error::InvalidInput(
                "weighted soft voting needs weights".into(),
            )),
            (Strategy::SoftWeighted, Some(w)) => validate_weights(w, n_classifiers),
            _ => Ok(()),
        }
    }
}

pub fn validate_weights(weights: &[f64], n_classifiers: usize) -> Result<()> {
    if weights.len() != n_classifiers {
        return Err(Error::DimensionMismatch {
            expected: n_classifiers,
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Majority label; an exact tie goes to `tie_break`.
pub fn hard_vote(predictions: &[Verdict], tie_break: Verdict) -> Result<Verdict> {
    if predictions.is_empty() {
        return Err(Error::TooFewItems("hard vote over zero predictions".into()));
    }
    let realistic = predictions.iter().filter(|v| v.is_realistic()).count();
    let fake = predictions.len() - realistic;
    Ok(match realistic.cmp(&fake) {
        std::cmp::Ordering::Greater => Verdict::Realistic,
        std::cmp::Ordering::Less => Verdict::Fake,
        std::cmp::Ordering::Equal => tie_break,
    })
}

/// Weighted mean of `p_realistic`; uniform weights when `weights` is `None`.
/// Returns the label at `threshold` and the combined probability.
pub fn soft_vote(
    probabilities: &[ProbabilityVector],
    weights: Option<&[f64]>,
    threshold: f64,
) -> Result<(Verdict, f64)> {
    let n = probabilities.len();
    if n == 0 {
        return Err(Error::TooFewItems("soft vote over zero classifiers".into()));
    }
    let uniform;
    let weights = match weights {
        Some(w) => {
            validate_weights(w, n)?;
            w
        }
        None => {
            uniform = vec![1.0 / n as f64; n];
            &uniform[..]
        }
    };
    let combined = probabilities
        .iter()
        .zip(weights)
        .map(|(p, w)| w * p.p_realistic())
        .sum::<f64>()
        .clamp(0.0, 1.0);
    let label = if combined >= threshold {
        Verdict::Realistic
    } else {
        Verdict::Fake
    };
    Ok((label, combined))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    /// Combined probability; for hard voting, the fraction of realistic votes.
    pub p_realistic: f64,
}

/// One item's ensemble decision under `config`.
pub fn decide(config: &VoteConfig, probabilities: &[ProbabilityVector]) -> Result<Decision> {
    config.validate(probabilities.len())?;
    match config.strategy {
        Strategy::Hard => {
            let votes: Vec<Verdict> = probabilities
                .iter()
                .map(|p| p.verdict(config.threshold))
                .collect();
            let verdict = hard_vote(&votes, config.tie_break)?;
            let frac =
                votes.iter().filter(|v| v.is_realistic()).count() as f64 / votes.len() as f64;
            Ok(Decision {
                verdict,
                p_realistic: frac,
            })
        }
        Strategy::SoftAverage => {
            let (verdict, p) = soft_vote(probabilities, None, config.threshold)?;
            Ok(Decision {
                verdict,
                p_realistic: p,
            })
        }
        Strategy::SoftWeighted => {
            let (verdict, p) =
                soft_vote(probabilities, config.weights.as_deref(), config.threshold)?;
            Ok(Decision {
                verdict,
                p_realistic: p,
            })
        }
    }
}

/// Probabilities of one classifier over a shared, ordered item list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierColumn {
    pub name: String,
    pub probabilities: Vec<ProbabilityVector>,
}

fn check_panel(columns: &[ClassifierColumn]) -> Result<usize> {
    let first = columns
        .first()
        .ok_or_else(|| Error::TooFewItems("no classifiers in panel".into()))?;
    let n = first.probabilities.len();
    for c in columns {
        if c.probabilities.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: c.probabilities.len(),
            });
        }
    }
    Ok(n)
}

/// Ensemble decisions for every item of a panel.
pub fn decide_panel(config: &VoteConfig, columns: &[ClassifierColumn]) -> Result<Vec<Decision>> {
    let n = check_panel(columns)?;
    let mut row = Vec::with_capacity(columns.len());
    (0..n)
        .map(|i| {
            row.clear();
            row.extend(columns.iter().map(|c| c.probabilities[i]));
            decide(config, &row)
        })
        .collect()
}

fn weighted_precision(
    columns: &[ClassifierColumn],
    weights: &[f64],
    truth: &[Verdict],
    threshold: f64,
) -> Result<f64> {
    let config = VoteConfig {
        threshold,
        ..VoteConfig::weighted(weights.to_vec())
    };
    let predicted: Vec<Verdict> = decide_panel(&config, columns)?
        .iter()
        .map(|d| d.verdict)
        .collect();
    Ok(classification_report(&ConfusionCounts::from_predictions(&predicted, truth)?)?.precision)
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

/// Sets weight `i` to `value` and rescales the others to keep the sum at 1.
fn with_weight(weights: &[f64], i: usize, value: f64) -> Vec<f64> {
    let rest: f64 = weights
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, w)| w)
        .sum();
    let n_rest = (weights.len() - 1) as f64;
    let w: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            if j == i {
                value
            } else if rest > 0.0 {
                w * (1.0 - value) / rest
            } else {
                (1.0 - value) / n_rest
            }
        })
        .collect();
    normalized(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedWeights {
    pub weights: Vec<f64>,
    /// Precision-based weights before refinement.
    pub initial: Vec<f64>,
    pub classifier_precision: Vec<f64>,
    /// No classifier beat precision 0.5; weights are uniform.
    pub degenerate: bool,
    pub accepted_steps: usize,
}

/// Fits weighted-voting weights on validation predictions: weights start
/// proportional to `max(precision - 0.5, 1e-3)^2` and are refined one
/// coordinate at a time in steps of 0.05, keeping a step only when the
/// ensemble's validation precision at `threshold` strictly improves. Uniform
/// weights replace the starting point when they already score higher.
pub fn fit_weights(
    columns: &[ClassifierColumn],
    truth: &[Verdict],
    threshold: f64,
) -> Result<FittedWeights> {
    if columns.len() < 2 {
        return Err(Error::TooFewItems(format!(
            "weight fitting needs at least 2 classifiers, got {}",
            columns.len()
        )));
    }
    let n = check_panel(columns)?;
    if n != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: n,
        });
    }
    let n_real = truth.iter().filter(|v| v.is_realistic()).count();
    if n_real.abs_diff(n - n_real) > 1 {
        log::warn!(
            "validation labels are unbalanced: {n_real} realistic vs {} fake",
            n - n_real
        );
    }
    let classifier_precision = columns
        .iter()
        .map(|c| {
            let predicted: Vec<Verdict> = c
                .probabilities
                .iter()
                .map(|p| p.verdict(threshold))
                .collect();
            Ok(
                classification_report(&ConfusionCounts::from_predictions(&predicted, truth)?)?
                    .precision,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = columns.len();
    if classifier_precision.iter().all(|&p| p <= 0.5) {
        log::warn!("no classifier has validation precision above 0.5; using uniform weights");
        let uniform = vec![1.0 / k as f64; k];
        return Ok(FittedWeights {
            weights: uniform.clone(),
            initial: uniform,
            classifier_precision,
            degenerate: true,
            accepted_steps: 0,
        });
    }
    let initial = normalized(
        classifier_precision
            .iter()
            .map(|p| (p - 0.5).max(WEIGHT_FLOOR).powi(2))
            .collect(),
    );
    let mut weights = initial.clone();
    let mut best = weighted_precision(columns, &weights, truth, threshold)?;
    let uniform = vec![1.0 / k as f64; k];
    let uniform_precision = weighted_precision(columns, &uniform, truth, threshold)?;
    if uniform_precision > best {
        weights = uniform;
        best = uniform_precision;
    }
    let mut accepted_steps = 0;
    for _ in 0..MAX_REFINE_PASSES {
        let mut improved = false;
        for i in 0..k {
            for delta in [REFINE_STEP, -REFINE_STEP] {
                let value = (weights[i] + delta).clamp(0.0, 1.0);
                if value == weights[i] {
                    continue;
                }
                let candidate = with_weight(&weights, i, value);
                let precision = weighted_precision(columns, &candidate, truth, threshold)?;
                if precision > best {
                    best = precision;
                    weights = candidate;
                    accepted_steps += 1;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(FittedWeights {
        weights,
        initial,
        classifier_precision,
        degenerate: false,
        accepted_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: ClassificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub round: u32,
    pub classifiers: Vec<ReportRow>,
    pub strategies: Vec<ReportRow>,
}

impl EnsembleReport {
    pub fn strategy(&self, strategy: Strategy) -> Option<&ReportRow> {
        self.strategies.iter().find(|r| r.name == strategy.as_str())
    }

    pub fn classifier(&self, name: &str) -> Option<&ReportRow> {
        self.classifiers.iter().find(|r| r.name == name)
    }
}

fn report_row(name: String, predicted: &[Verdict], truth: &[Verdict]) -> Result<ReportRow> {
    let counts = ConfusionCounts::from_predictions(predicted, truth)?;
    Ok(ReportRow {
        name,
        counts,
        metrics: classification_report(&counts)?,
    })
}

/// One metrics row per classifier (thresholded at `threshold`) and one per
/// voting config, all on the same labeled validation items.
pub fn evaluate_grid(
    columns: &[ClassifierColumn],
    strategies: &[VoteConfig],
    truth: &[Verdict],
    threshold: f64,
    round: u32,
) -> Result<EnsembleReport> {
    let n = check_panel(columns)?;
    if n != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: n,
        });
    }
    let classifiers = columns
        .iter()
        .map(|c| {
            let predicted: Vec<Verdict> = c
                .probabilities
                .iter()
                .map(|p| p.verdict(threshold))
                .collect();
            report_row(c.name.clone(), &predicted, truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let strategies = strategies
        .iter()
        .map(|config| {
            let predicted: Vec<Verdict> = decide_panel(config, columns)?
                .iter()
                .map(|d| d.verdict)
                .collect();
            report_row(config.strategy.as_str().to_string(), &predicted, truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleReport {
        round,
        classifiers,
        strategies,
    })
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Verdict::{Fake as F, Realistic as R};

    fn pv(p: f64) -> ProbabilityVector {
        ProbabilityVector::realistic(p).unwrap()
    }

    fn column(name: &str, ps: &[f64]) -> ClassifierColumn {
        ClassifierColumn {
            name: name.into(),
            probabilities: ps.iter().map(|&p| pv(p)).collect(),
        }
    }

    #[test]
    fn hard_vote_examples() {
        assert_eq!(hard_vote(&[R, R, R, F, F], F).unwrap(), R);
        assert_eq!(hard_vote(&[R, R, F, F], F).unwrap(), F);
        assert_eq!(hard_vote(&[R, R, F, F], R).unwrap(), R);
        assert_eq!(hard_vote(&[F], R).unwrap(), F);
        assert!(hard_vote(&[], F).is_err());
    }

    #[test]
    fn soft_vote_examples() {
        let (v, p) = soft_vote(&[pv(0.9), pv(0.2), pv(0.7)], None, 0.5).unwrap();
        assert!((p - 0.6).abs() < 1e-12);
        assert_eq!(v, R);
        let (v, p) =
            soft_vote(&[pv(0.2), pv(0.9), pv(0.9)], Some(&[0.5, 0.25, 0.25]), 0.5).unwrap();
        assert!((p - 0.55).abs() < 1e-12);
        assert_eq!(v, R);
        assert!(matches!(
            soft_vote(&[pv(0.2), pv(0.9)], Some(&[0.5, 0.25, 0.25]), 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(soft_vote(&[pv(0.2), pv(0.9)], Some(&[0.5, 0.6]), 0.5).is_err());
    }

    #[test]
    fn weighted_config_requires_valid_weights() {
        assert!(VoteConfig::new(Strategy::SoftWeighted).validate(2).is_err());
        assert!(VoteConfig::weighted(vec![0.5, 0.5]).validate(2).is_ok());
        assert!(VoteConfig::weighted(vec![-0.5, 1.5]).validate(2).is_err());
        assert!(VoteConfig::weighted(vec![0.5, 0.5 + 1e-8])
            .validate(2)
            .is_err());
        assert_eq!(
            "soft-weighted".parse::<Strategy>().unwrap(),
            Strategy::SoftWeighted
        );
    }

    #[test]
    fn initial_weights_follow_precision() {
        // classifier a: precision 0.9 (9 tp, 1 fp); b: precision 0.7 (7 tp, 3 fp)
        let mut truth = Vec::new();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..10 {
            truth.push(if i < 9 { R } else { F });
            a.push(0.9);
        }
        for i in 0..10 {
            truth.push(if i < 7 { R } else { F });
            b.push(0.9);
        }
        // a abstains (predicts fake) on b's items and vice versa
        let pa: Vec<f64> = a
            .iter()
            .copied()
            .chain(std::iter::repeat_n(0.1, 10))
            .collect();
        let pb: Vec<f64> = std::iter::repeat_n(0.1, 10)
            .chain(b.iter().copied())
            .collect();
        let fitted = fit_weights(&[column("a", &pa), column("b", &pb)], &truth, 0.5).unwrap();
        assert!((fitted.classifier_precision[0] - 0.9).abs() < 1e-12);
        assert!((fitted.classifier_precision[1] - 0.7).abs() < 1e-12);
        assert!((fitted.initial[0] - 0.8).abs() < 1e-12);
        assert!((fitted.initial[1] - 0.2).abs() < 1e-12);
        validate_weights(&fitted.weights, 2).unwrap();
    }

    #[test]
    fn degenerate_panel_gets_uniform_weights() {
        let truth = [R, F, F, F];
        let cols = [
            column("a", &[0.9, 0.9, 0.9, 0.1]),
            column("b", &[0.1, 0.8, 0.8, 0.8]),
        ];
        let fitted = fit_weights(&cols, &truth, 0.5).unwrap();
        assert!(fitted.degenerate);
        assert_eq!(fitted.weights, vec![0.5, 0.5]);
        assert!(fit_weights(&cols[..1], &truth, 0.5).is_err());
    }

    #[test]
    fn identical_classifiers_give_weight_independent_output() {
        let ps = [0.9, 0.2, 0.7, 0.4, 0.8, 0.1];
        let truth = [R, F, R, F, F, F];
        let cols = [column("a", &ps), column("b", &ps), column("c", &ps)];
        let fitted = fit_weights(&cols, &truth, 0.5).unwrap();
        let decisions = decide_panel(&VoteConfig::weighted(fitted.weights), &cols).unwrap();
        for (d, &p) in decisions.iter().zip(&ps) {
            assert!((d.p_realistic - p).abs() < 1e-12);
        }
        assert_eq!(fitted.accepted_steps, 0);
    }

    #[test]
    fn refinement_never_lowers_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = 40;
            let truth: Vec<Verdict> = (0..n).map(|i| if i % 2 == 0 { R } else { F }).collect();
            let cols: Vec<ClassifierColumn> = (0..4)
                .map(|c| {
                    let noise = 0.2 + 0.15 * c as f64;
                    let ps: Vec<f64> = truth
                        .iter()
                        .map(|v| {
                            let base = if v.is_realistic() { 0.7 } else { 0.3 };
                            (base + rng.random_range(-noise..noise)).clamp(0.0, 1.0)
                        })
                        .collect();
                    column(&format!("c{c}"), &ps)
                })
                .collect();
            let fitted = fit_weights(&cols, &truth, 0.5).unwrap();
            validate_weights(&fitted.weights, 4).unwrap();
            let refined = weighted_precision(&cols, &fitted.weights, &truth, 0.5).unwrap();
            let uniform = weighted_precision(&cols, &[0.25; 4], &truth, 0.5).unwrap();
            let initial = weighted_precision(&cols, &fitted.initial, &truth, 0.5).unwrap();
            assert!(refined >= initial);
            assert!(refined >= uniform);
        }
    }

    #[test]
    fn grid_rows_match_recount() {
        let truth = [R, F, R, F, R, F];
        let cols = [
            column("a", &[0.9, 0.6, 0.4, 0.1, 0.8, 0.3]),
            column("b", &[0.7, 0.2, 0.6, 0.55, 0.3, 0.4]),
            column("c", &[0.2, 0.7, 0.9, 0.1, 0.6, 0.6]),
        ];
        let configs = [
            VoteConfig::new(Strategy::Hard),
            VoteConfig::new(Strategy::SoftAverage),
            VoteConfig::weighted(vec![0.5, 0.3, 0.2]),
        ];
        let report = evaluate_grid(&cols, &configs, &truth, 0.5, 2).unwrap();
        assert_eq!(report.classifiers.len(), 3);
        assert_eq!(report.strategies.len(), 3);
        let hard: Vec<Verdict> = (0..6)
            .map(|i| {
                let ps: Vec<f64> = cols
                    .iter()
                    .map(|c| c.probabilities[i].p_realistic())
                    .collect();
                brute_hard(&ps, 0.5, F)
            })
            .collect();
        let count = |p: Verdict, t: Verdict| {
            hard.iter()
                .zip(&truth)
                .filter(|(a, b)| **a == p && **b == t)
                .count() as u64
        };
        let row = report.strategy(Strategy::Hard).unwrap();
        assert_eq!(
            (row.counts.tp, row.counts.fp, row.counts.fn_, row.counts.tn),
            (count(R, R), count(R, F), count(F, R), count(F, F))
        );
        let acc = (count(R, R) + count(F, F)) as f64 / 6.0;
        assert!((row.metrics.accuracy - acc).abs() <= 1e-12);
        // soft average: means 0.6, 0.5, 0.6333, 0.25, 0.5667, 0.4333
        let soft = report.strategy(Strategy::SoftAverage).unwrap();
        assert_eq!(
            (
                soft.counts.tp,
                soft.counts.fp,
                soft.counts.fn_,
                soft.counts.tn
            ),
            (3, 1, 0, 2)
        );
        for r in report.classifiers.iter().chain(&report.strategies) {
            for m in [
                r.metrics.accuracy,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
            ] {
                assert!((0.0..=1.0).contains(&m));
            }
        }
    }

    /// Reference voting by enumeration over every classifier.
    fn brute_hard(ps: &[f64], threshold: f64, tie: Verdict) -> Verdict {
        let mut r = 0i64;
        for &p in ps {
            r += if p >= threshold { 1 } else { -1 };
        }
        if r > 0 {
            R
        } else if r < 0 {
            F
        } else {
            tie
        }
    }

    proptest! {
        #[test]
        fn votes_match_reference(
            ps in prop::collection::vec(0.0f64..=1.0, 3..=9),
            raw_w in prop::collection::vec(0.01f64..1.0, 9),
            tie in prop::bool::ANY,
        ) {
            let tie = if tie { R } else { F };
            let probs: Vec<ProbabilityVector> = ps.iter().map(|&p| pv(p)).collect();
            let hard = decide(&VoteConfig { tie_break: tie, ..VoteConfig::new(Strategy::Hard) }, &probs).unwrap();
            prop_assert_eq!(hard.verdict, brute_hard(&ps, 0.5, tie));

            let avg = decide(&VoteConfig::new(Strategy::SoftAverage), &probs).unwrap();
            let uniform = vec![1.0 / ps.len() as f64; ps.len()];
            let (v, p) = soft_vote(&probs, Some(&uniform), 0.5).unwrap();
            prop_assert_eq!(avg.p_realistic, p);
            prop_assert_eq!(avg.verdict, v);

            let w = normalized(raw_w[..ps.len()].to_vec());
            let (_, p1) = soft_vote(&probs, Some(&w), 0.5).unwrap();
            // monotone in each classifier's probability
            for i in 0..ps.len() {
                let mut bumped = probs.clone();
                bumped[i] = pv((ps[i] + 0.1).min(1.0));
                let (_, p2) = soft_vote(&bumped, Some(&w), 0.5).unwrap();
                prop_assert!(p2 >= p1 - 1e-15);
            }
            // permutation invariance
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.reverse();
            let pp: Vec<ProbabilityVector> = idx.iter().map(|&i| probs[i]).collect();
            let pw: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let (_, p3) = soft_vote(&pp, Some(&pw), 0.5).unwrap();
            prop_assert!((p1 - p3).abs() < 1e-12);
            // agreement is a fixed point
            let same = vec![pv(ps[0]); ps.len()];
            let (_, p4) = soft_vote(&same, Some(&w), 0.5).unwrap();
            prop_assert!((p4 - ps[0]).abs() < 1e-12);
        }
    }
}

//! Human-in-the-loop labeling rounds.
//!
//! A round owns a training set, a validation set frozen at the first round,
//! the classifiers' validation metrics and a review queue of model-proposed
//! labels. Human corrections land in the append-only [`LabelStore`] and feed
//! the next round's training set.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{self, ClassifierSpec, Labeled, Sample, TrainedClassifier, WarmStart};
use crate::dataset::{
    self, DatasetManifest, LabelRecord, LabelSource, LabelStore, ManifestEntry, Origin,
    PatternClass, ProbabilityVector, Verdict,
};
use crate::ensemble::{
    self, ClassifierColumn, EnsembleReport, FittedWeights, Strategy, VoteConfig,
};
use crate::error::{Error, Result};

/// Experimental share of the Realistic subset.
pub const EXPERIMENTAL_SHARE: f64 = 0.4;

/// Training-set counts for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTargets {
    pub realistic_experimental: usize,
    pub realistic_generated: usize,
    pub fake: usize,
}

impl RoundTargets {
    /// First-round counts: 40 experimental + 60 generated vs 100 fake.
    pub const SEED: RoundTargets = RoundTargets {
        realistic_experimental: 40,
        realistic_generated: 60,
        fake: 100,
    };

    /// Second-round counts: 400 experimental + 600 generated vs 1000 fake.
    pub const NEXT: RoundTargets = RoundTargets {
        realistic_experimental: 400,
        realistic_generated: 600,
        fake: 1000,
    };

    pub fn realistic(&self) -> usize {
        self.realistic_experimental + self.realistic_generated
    }

    /// Scales all counts, splitting the Realistic total so the ratio holds.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scale factor {factor} must be positive"
            )));
        }
        let realistic = (self.realistic() as f64 * factor).round() as usize;
        let share = self.realistic_experimental as f64 / self.realistic().max(1) as f64;
        let experimental = (share * realistic as f64).round() as usize;
        let t = Self {
            realistic_experimental: experimental,
            realistic_generated: realistic - experimental,
            fake: (self.fake as f64 * factor).round() as usize,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fake == 0 || self.realistic() == 0 {
            return Err(Error::InvalidInput("round targets must be nonzero".into()));
        }
        if !ratio_holds(self.realistic_experimental, self.realistic_generated) {
            return Err(Error::InvalidInput(format!(
                "ratio unreachable: {} experimental of {} realistic is not 4:6 within one item",
                self.realistic_experimental,
                self.realistic()
            )));
        }
        if self.realistic().abs_diff(self.fake) > 1 {
            return Err(Error::InvalidInput(format!(
                "unbalanced targets: {} realistic vs {} fake",
                self.realistic(),
                self.fake
            )));
        }
        Ok(())
    }
}

/// Experimental count within one item of 40% of the Realistic subset.
pub fn ratio_holds(experimental: usize, generated: usize) -> bool {
    let total = (experimental + generated) as f64;
    (experimental as f64 - EXPERIMENTAL_SHARE * total).abs() <= 1.0 + 1e-9
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub realistic_experimental: usize,
    pub realistic_generated: usize,
    pub fake_experimental: usize,
    pub fake_generated: usize,
}

impl Composition {
    pub fn of(items: &[RoundItem]) -> Self {
        let mut c = Self::default();
        for item in items {
            match (item.verdict, item.origin) {
                (Verdict::Realistic, Origin::Experimental) => c.realistic_experimental += 1,
                (Verdict::Realistic, Origin::Generated) => c.realistic_generated += 1,
                (Verdict::Fake, Origin::Experimental) => c.fake_experimental += 1,
                (Verdict::Fake, Origin::Generated) => c.fake_generated += 1,
            }
        }
        c
    }

    pub fn realistic(&self) -> usize {
        self.realistic_experimental + self.realistic_generated
    }

    pub fn fake(&self) -> usize {
        self.fake_experimental + self.fake_generated
    }

    /// The 4:6 ratio within Realistic and class balance, each within one item.
    pub fn check(&self, what: &str) -> Result<()> {
        if !ratio_holds(self.realistic_experimental, self.realistic_generated) {
            return Err(Error::Invariant(format!(
                "{what}: {} experimental of {} realistic breaks the 4:6 ratio",
                self.realistic_experimental,
                self.realistic()
            )));
        }
        if self.realistic().abs_diff(self.fake()) > 1 {
            return Err(Error::Invariant(format!(
                "{what}: {} realistic vs {} fake is unbalanced",
                self.realistic(),
                self.fake()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundItem {
    pub id: String,
    pub origin: Origin,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundStatus {
    Collecting,
    Training,
    Proposing,
    Reviewing,
    Closed,
}

impl fmt::Display for RoundStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RoundStatus::Collecting => "collecting",
            RoundStatus::Training => "training",
            RoundStatus::Proposing => "proposing",
            RoundStatus::Reviewing => "reviewing",
            RoundStatus::Closed => "closed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueueItem {
    pub image_id: String,
    pub model_verdict: Verdict,
    pub p_realistic: f64,
    #[serde(default)]
    pub physics: Option<f64>,
    pub round: u32,
}

impl ReviewQueueItem {
    pub fn uncertainty_key(&self) -> f64 {
        (self.p_realistic - 0.5).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    /// 1-based.
    pub index: u32,
    pub status: RoundStatus,
    #[serde(default)]
    pub pattern: Option<PatternClass>,
    pub targets: RoundTargets,
    pub training: Vec<RoundItem>,
    pub validation: Vec<RoundItem>,
    pub composition: Composition,
    pub validation_composition: Composition,
    /// Set once the round's classifiers are trained and evaluated.
    #[serde(default)]
    pub metrics: Option<EnsembleReport>,
    #[serde(default)]
    pub vote: Option<VoteConfig>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub queue: Vec<ReviewQueueItem>,
    #[serde(default)]
    pub reviewed: Vec<String>,
}

impl RoundState {
    pub fn is_trained(&self) -> bool {
        self.metrics.is_some()
    }

    pub fn training_ids(&self) -> HashSet<&str> {
        self.training.iter().map(|i| i.id.as_str()).collect()
    }

    pub fn validation_ids(&self) -> HashSet<&str> {
        self.validation.iter().map(|i| i.id.as_str()).collect()
    }

    /// Ratio, balance and disjointness checks.
    pub fn check_invariants(&self) -> Result<()> {
        if Composition::of(&self.training) != self.composition {
            return Err(Error::Invariant("composition counters are stale".into()));
        }
        self.composition.check("training set")?;
        self.validation_composition.check("validation set")?;
        let val = self.validation_ids();
        if let Some(item) = self.training.iter().find(|i| val.contains(i.id.as_str())) {
            return Err(Error::Invariant(format!(
                "{} is in both training and validation",
                item.id
            )));
        }
        Ok(())
    }

    fn open_for(&self, what: &str, allowed: &[RoundStatus]) -> Result<()> {
        if allowed.contains(&self.status) {
            Ok(())
        } else {
            Err(Error::StateConflict(format!(
                "cannot {what} round {} while it is {}",
                self.index, self.status
            )))
        }
    }
}

// ── selection helpers ────────────────────────────────────────────────────────

fn latest_human_verdict(labels: &LabelStore, id: &str) -> Option<(u32, usize, Verdict)> {
    labels
        .latest_human(id)
        .map(|(i, r)| (r.round, i, r.verdict))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Category {
    RealisticExperimental,
    RealisticGenerated,
    Fake,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::RealisticExperimental => "realistic experimental items",
            Category::RealisticGenerated => "human-approved realistic generated items",
            Category::Fake => "human-confirmed fake generated items",
        }
    }

    fn verdict(self) -> Verdict {
        match self {
            Category::Fake => Verdict::Fake,
            _ => Verdict::Realistic,
        }
    }

    /// Experimental frames count as realistic unless a human said otherwise;
    /// generated frames need a human verdict.
    fn admits(self, entry: &ManifestEntry, labels: &LabelStore) -> bool {
        let human = latest_human_verdict(labels, &entry.id()).map(|(_, _, v)| v);
        match self {
            Category::RealisticExperimental => {
                entry.origin == Origin::Experimental && human != Some(Verdict::Fake)
            }
            Category::RealisticGenerated => {
                entry.origin == Origin::Generated && human == Some(Verdict::Realistic)
            }
            Category::Fake => entry.origin == Origin::Generated && human == Some(Verdict::Fake),
        }
    }
}

fn candidates<'a>(
    pool: &'a DatasetManifest,
    labels: &LabelStore,
    pattern: Option<PatternClass>,
    category: Category,
    exclude: &HashSet<String>,
) -> Vec<&'a ManifestEntry> {
    let mut c: Vec<&ManifestEntry> = pool
        .entries()
        .iter()
        .filter(|e| pattern.is_none_or(|p| e.pattern == p))
        .filter(|e| !exclude.contains(&e.id()))
        .filter(|e| category.admits(e, labels))
        .collect();
    c.sort_by_key(|e| e.id());
    c
}

fn take(category: Category, ordered: Vec<&ManifestEntry>, n: usize) -> Result<Vec<RoundItem>> {
    if ordered.len() < n {
        return Err(Error::TargetsUnreachable {
            category: category.name().into(),
            needed: n,
            available: ordered.len(),
        });
    }
    Ok(ordered[..n]
        .iter()
        .map(|e| RoundItem {
            id: e.id(),
            origin: e.origin,
            verdict: category.verdict(),
        })
        .collect())
}

const CATEGORIES: [Category; 3] = [
    Category::RealisticExperimental,
    Category::RealisticGenerated,
    Category::Fake,
];

fn target_of(targets: &RoundTargets, category: Category) -> usize {
    match category {
        Category::RealisticExperimental => targets.realistic_experimental,
        Category::RealisticGenerated => targets.realistic_generated,
        Category::Fake => targets.fake,
    }
}

/// Builds round 1. Validation is drawn first, then training from the rest;
/// both follow a seeded shuffle of the eligible items.
pub fn seed_round(
    pool: &DatasetManifest,
    labels: &LabelStore,
    pattern: Option<PatternClass>,
    targets: &RoundTargets,
    validation_targets: &RoundTargets,
    seed: u64,
) -> Result<RoundState> {
    targets.validate()?;
    validation_targets.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut training, mut validation) = (Vec::new(), Vec::new());
    for category in CATEGORIES {
        let mut c = candidates(pool, labels, pattern, category, &HashSet::new());
        let (n_val, n_train) = (
            target_of(validation_targets, category),
            target_of(targets, category),
        );
        if c.len() < n_val + n_train {
            return Err(Error::TargetsUnreachable {
                category: category.name().into(),
                needed: n_val + n_train,
                available: c.len(),
            });
        }
        c.shuffle(&mut rng);
        let rest = c.split_off(n_val);
        validation.extend(take(category, c, n_val)?);
        training.extend(take(category, rest, n_train)?);
    }
    let state = RoundState {
        index: 1,
        status: RoundStatus::Training,
        pattern,
        targets: *targets,
        composition: Composition::of(&training),
        validation_composition: Composition::of(&validation),
        training,
        validation,
        metrics: None,
        vote: None,
        models: Vec::new(),
        queue: Vec::new(),
        reviewed: Vec::new(),
    };
    state.check_invariants()?;
    Ok(state)
}

/// Records the round's trained models and validation metrics.
pub fn commit_training(
    state: &mut RoundState,
    models: Vec<String>,
    report: EnsembleReport,
    vote: VoteConfig,
) -> Result<()> {
    state.open_for(
        "commit training to",
        &[RoundStatus::Collecting, RoundStatus::Training],
    )?;
    vote.validate(models.len())?;
    if report.round != state.index {
        return Err(Error::StateConflict(format!(
            "report is for round {}, not {}",
            report.round, state.index
        )));
    }
    state.models = models;
    state.metrics = Some(report);
    state.vote = Some(vote);
    state.status = RoundStatus::Training;
    Ok(())
}

/// Ensemble inputs for one pooled image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPrediction {
    pub id: String,
    pub probabilities: Vec<ProbabilityVector>,
    #[serde(default)]
    pub physics: Option<f64>,
}

/// Votes on every pooled image not already in a training or validation set
/// and not yet human-labeled, and queues the `batch_size` most uncertain
/// ones. Model verdicts for queued items are appended to the label store.
pub fn propose_labels(
    state: &mut RoundState,
    labels: &mut LabelStore,
    config: &VoteConfig,
    pool: &[PoolPrediction],
    batch_size: usize,
    now: DateTime<Utc>,
) -> Result<Vec<ReviewQueueItem>> {
    state.open_for(
        "propose labels for",
        &[
            RoundStatus::Training,
            RoundStatus::Proposing,
            RoundStatus::Reviewing,
        ],
    )?;
    if !state.is_trained() {
        return Err(Error::StateConflict(format!(
            "round {} has no trained classifiers",
            state.index
        )));
    }
    if pool.iter().any(|p| p.probabilities.is_empty()) {
        return Err(Error::InvalidInput("no trained classifiers".into()));
    }
    let taken: HashSet<&str> = state
        .training_ids()
        .union(&state.validation_ids())
        .copied()
        .collect();
    let mut seen = HashSet::new();
    let mut queue = Vec::new();
    for p in pool {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicateId(p.id.clone()));
        }
        if taken.contains(p.id.as_str()) || labels.latest_human(&p.id).is_some() {
            continue;
        }
        let d = ensemble::decide(config, &p.probabilities)?;
        queue.push(ReviewQueueItem {
            image_id: p.id.clone(),
            model_verdict: d.verdict,
            p_realistic: d.p_realistic,
            physics: p.physics,
            round: state.index,
        });
    }
    queue.sort_by(|a, b| {
        a.uncertainty_key()
            .total_cmp(&b.uncertainty_key())
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    queue.truncate(batch_size);
    for item in &queue {
        labels.append(LabelRecord {
            image_id: item.image_id.clone(),
            verdict: item.model_verdict,
            source: LabelSource::Model,
            round: state.index,
            annotator: "ensemble".into(),
            timestamp: now,
        })?;
    }
    state.queue = queue.clone();
    state.status = RoundStatus::Proposing;
    Ok(queue)
}

/// Appends human verdicts for queued items. All decisions are checked before
/// any is written.
pub fn apply_review(
    state: &mut RoundState,
    labels: &mut LabelStore,
    decisions: &[(String, Verdict)],
    annotator: &str,
    now: DateTime<Utc>,
) -> Result<()> {
    state.open_for("review", &[RoundStatus::Proposing, RoundStatus::Reviewing])?;
    if decisions.is_empty() {
        return Ok(());
    }
    let queued: HashSet<&str> = state.queue.iter().map(|q| q.image_id.as_str()).collect();
    let mut batch = HashSet::new();
    for (id, _) in decisions {
        if !queued.contains(id.as_str()) {
            return Err(Error::UnknownId(id.clone()));
        }
        if !batch.insert(id.as_str()) || labels.has_human(id, state.index) {
            return Err(Error::DuplicateVerdict {
                id: id.clone(),
                round: state.index,
            });
        }
    }
    for (id, verdict) in decisions {
        labels.append(LabelRecord {
            image_id: id.clone(),
            verdict: *verdict,
            source: LabelSource::Human,
            round: state.index,
            annotator: annotator.into(),
            timestamp: now,
        })?;
        state.reviewed.push(id.clone());
    }
    state.status = RoundStatus::Reviewing;
    Ok(())
}

pub fn close_round(state: &mut RoundState) -> Result<()> {
    state.open_for(
        "close",
        &[
            RoundStatus::Training,
            RoundStatus::Proposing,
            RoundStatus::Reviewing,
        ],
    )?;
    if !state.is_trained() {
        return Err(Error::StateConflict(format!(
            "round {} has not been trained",
            state.index
        )));
    }
    state.status = RoundStatus::Closed;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NextRoundOptions {
    /// Carry the previous training items over before drawing new ones.
    pub retain_previous: bool,
}

impl Default for NextRoundOptions {
    fn default() -> Self {
        Self {
            retain_previous: true,
        }
    }
}

/// Closes `state` (if still open) and assembles the following round. Within
/// each category, retained items come first, then human-confirmed items by
/// recency of their latest human verdict; experimental items beyond the
/// retained ones follow a seeded shuffle. Validation is carried unchanged.
pub fn build_next_round(
    state: &mut RoundState,
    pool: &DatasetManifest,
    labels: &LabelStore,
    targets: &RoundTargets,
    options: NextRoundOptions,
    seed: u64,
) -> Result<RoundState> {
    if state.status != RoundStatus::Closed {
        state.open_for(
            "build the successor of",
            &[
                RoundStatus::Training,
                RoundStatus::Proposing,
                RoundStatus::Reviewing,
            ],
        )?;
        if !state.is_trained() {
            return Err(Error::StateConflict(format!(
                "round {} has not been trained",
                state.index
            )));
        }
    }
    targets.validate()?;
    let validation: HashSet<String> = state.validation.iter().map(|i| i.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut training = Vec::new();
    for category in CATEGORIES {
        let c = candidates(pool, labels, state.pattern, category, &validation);
        let retained: Vec<&ManifestEntry> = if options.retain_previous {
            state
                .training
                .iter()
                .filter_map(|item| c.iter().copied().find(|e| e.id() == item.id))
                .collect()
        } else {
            Vec::new()
        };
        let retained_ids: HashSet<String> = retained.iter().map(|e| e.id()).collect();
        let mut rest: Vec<&ManifestEntry> = c
            .into_iter()
            .filter(|e| !retained_ids.contains(&e.id()))
            .collect();
        if category == Category::RealisticExperimental {
            rest.shuffle(&mut rng);
        } else {
            // most recent human verdict first; stable on id
            rest.sort_by_cached_key(|e| {
                let (round, idx, _) =
                    latest_human_verdict(labels, &e.id()).unwrap_or((0, 0, Verdict::Fake));
                std::cmp::Reverse((round, idx))
            });
        }
        let ordered: Vec<&ManifestEntry> = retained.into_iter().chain(rest).collect();
        training.extend(take(category, ordered, target_of(targets, category))?);
    }
    let next = RoundState {
        index: state.index + 1,
        status: RoundStatus::Training,
        pattern: state.pattern,
        targets: *targets,
        composition: Composition::of(&training),
        validation_composition: state.validation_composition,
        training,
        validation: state.validation.clone(),
        metrics: None,
        vote: None,
        models: Vec::new(),
        queue: Vec::new(),
        reviewed: Vec::new(),
    };
    next.check_invariants()?;
    state.status = RoundStatus::Closed;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    pub index: u32,
    pub status: RoundStatus,
    pub composition: Composition,
    pub validation_composition: Composition,
    pub metrics: EnsembleReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundReport {
    pub rounds: Vec<RoundSnapshot>,
}

impl RoundReport {
    /// Validation precision of `strategy` per round, in round order.
    pub fn precision_series(&self, strategy: Strategy) -> Vec<f64> {
        self.rounds
            .iter()
            .filter_map(|r| {
                r.metrics
                    .strategy(strategy)
                    .map(|row| row.metrics.precision)
            })
            .collect()
    }
}

/// Metric trajectory over the closed rounds.
pub fn round_report(rounds: &[RoundState]) -> RoundReport {
    RoundReport {
        rounds: rounds
            .iter()
            .filter(|r| r.status == RoundStatus::Closed)
            .filter_map(|r| {
                r.metrics.clone().map(|metrics| RoundSnapshot {
                    index: r.index,
                    status: r.status,
                    composition: r.composition,
                    validation_composition: r.validation_composition,
                    metrics,
                })
            })
            .collect(),
    }
}

// ── training a round ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct RoundTraining {
    pub models: Vec<TrainedClassifier>,
    pub report: EnsembleReport,
    pub vote: VoteConfig,
    pub fitted: Option<FittedWeights>,
}

fn labeled(items: &[RoundItem], samples: &HashMap<String, Sample>) -> Result<Vec<Labeled>> {
    items
        .iter()
        .map(|item| {
            let sample = samples
                .get(&item.id)
                .ok_or_else(|| Error::UnknownId(item.id.clone()))?;
            Ok(Labeled {
                sample: sample.clone(),
                verdict: item.verdict,
            })
        })
        .collect()
}

/// Validation probabilities of each model, as voting columns.
pub fn columns_for(
    models: &[TrainedClassifier],
    samples: &[&Sample],
) -> Result<Vec<ClassifierColumn>> {
    models
        .iter()
        .map(|m| {
            Ok(ClassifierColumn {
                name: m.id.clone(),
                probabilities: samples
                    .iter()
                    .map(|s| m.predict_proba(s))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Share of a round's training set held out for classifier validation and
/// voting-weight fitting.
pub const HOLDOUT_FRACTION: f64 = 0.2;

/// Trains every classifier on 80% of the round's training set, fits voting
/// weights on the held-out 20% and evaluates all three strategies on the
/// round's frozen validation set. Does not touch the round; commit the
/// result with [`commit_training`].
pub fn train_round(
    state: &RoundState,
    samples: &HashMap<String, Sample>,
    specs: &[(String, ClassifierSpec)],
    seed: u64,
    warm: &HashMap<String, WarmStart>,
) -> Result<RoundTraining> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no classifiers to train".into()));
    }
    let all = labeled(&state.training, samples)?;
    let verdicts: Vec<Verdict> = all.iter().map(|l| l.verdict).collect();
    let (fit_idx, hold_idx) = classify::split_train_validation(&verdicts, HOLDOUT_FRACTION, seed)?;
    let fit: Vec<Labeled> = fit_idx.iter().map(|&i| all[i].clone()).collect();
    let holdout: Vec<Labeled> = hold_idx.iter().map(|&i| all[i].clone()).collect();
    let val = labeled(&state.validation, samples)?;
    let models = specs
        .iter()
        .enumerate()
        .map(|(i, (name, spec))| {
            classify::train(
                name.clone(),
                spec,
                &fit,
                Some(&holdout),
                seed.wrapping_add(i as u64),
                state.index,
                warm.get(name),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (weights, fitted) = if models.len() >= 2 {
        let hold_samples: Vec<&Sample> = holdout.iter().map(|l| &l.sample).collect();
        let hold_truth: Vec<Verdict> = holdout.iter().map(|l| l.verdict).collect();
        let f = ensemble::fit_weights(&columns_for(&models, &hold_samples)?, &hold_truth, 0.5)?;
        (f.weights.clone(), Some(f))
    } else {
        (vec![1.0], None)
    };
    let vote = VoteConfig::weighted(weights);
    let val_samples: Vec<&Sample> = val.iter().map(|l| &l.sample).collect();
    let truth: Vec<Verdict> = val.iter().map(|l| l.verdict).collect();
    let columns = columns_for(&models, &val_samples)?;
    let strategies = [
        VoteConfig::new(Strategy::Hard),
        VoteConfig::new(Strategy::SoftAverage),
        vote.clone(),
    ];
    let report = ensemble::evaluate_grid(&columns, &strategies, &truth, 0.5, state.index)?;
    Ok(RoundTraining {
        models,
        report,
        vote,
        fitted,
    })
}

/// Ensemble inputs for the given pooled ids.
pub fn predict_pool(
    models: &[TrainedClassifier],
    samples: &HashMap<String, Sample>,
    ids: &[String],
) -> Result<Vec<PoolPrediction>> {
    ids.iter()
        .map(|id| {
            let s = samples
                .get(id)
                .ok_or_else(|| Error::UnknownId(id.clone()))?;
            Ok(PoolPrediction {
                id: id.clone(),
                probabilities: models
                    .iter()
                    .map(|m| m.predict_proba(s))
                    .collect::<Result<_>>()?,
                physics: s.physics,
            })
        })
        .collect()
}

// ── simulated annotator ──────────────────────────────────────────────────────

/// Answers review requests from ground truth, flipping each answer with
/// probability `error_rate`.
#[derive(Debug, Clone)]
pub struct SimulatedAnnotator {
    truth: HashMap<String, Verdict>,
    error_rate: f64,
    rng: ChaCha8Rng,
    pub name: String,
}

impl SimulatedAnnotator {
    pub const DEFAULT_ERROR_RATE: f64 = 0.05;

    pub fn new(truth: HashMap<String, Verdict>, error_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&error_rate) {
            return Err(Error::InvalidInput(format!(
                "error rate {error_rate} outside [0, 1]"
            )));
        }
        Ok(Self {
            truth,
            error_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            name: "simulated".into(),
        })
    }

    pub fn answer(&mut self, ids: &[String]) -> Result<Vec<(String, Verdict)>> {
        ids.iter()
            .map(|id| {
                let v = *self
                    .truth
                    .get(id)
                    .ok_or_else(|| Error::UnknownId(id.clone()))?;
                let flip = self.rng.random_bool(self.error_rate);
                Ok((id.clone(), if flip { v.flipped() } else { v }))
            })
            .collect()
    }

    /// Answers a round's review queue.
    pub fn review_queue(&mut self, queue: &[ReviewQueueItem]) -> Result<Vec<(String, Verdict)>> {
        let ids: Vec<String> = queue.iter().map(|q| q.image_id.clone()).collect();
        self.answer(&ids)
    }
}

/// Appends human verdicts outside any review queue, e.g. the labeling pass
/// that precedes the first round (conventionally round 0).
pub fn record_human_labels(
    labels: &mut LabelStore,
    decisions: &[(String, Verdict)],
    round: u32,
    annotator: &str,
    now: DateTime<Utc>,
) -> Result<()> {
    for (id, verdict) in decisions {
        labels.append(LabelRecord {
            image_id: id.clone(),
            verdict: *verdict,
            source: LabelSource::Human,
            round,
            annotator: annotator.into(),
            timestamp: now,
        })?;
    }
    Ok(())
}

// ── the loop owner ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub pattern: Option<PatternClass>,
    pub seed_targets: RoundTargets,
    pub validation_targets: RoundTargets,
    pub batch_size: usize,
    pub next: NextRoundOptions,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            pattern: None,
            seed_targets: RoundTargets::SEED,
            validation_targets: RoundTargets::SEED,
            batch_size: 100,
            next: NextRoundOptions::default(),
            seed: 0,
        }
    }
}

/// Owns the round history and label store for one loop. All mutations go
/// through `&mut self`; with a root directory every mutation is persisted as
/// `rounds/<n>/round.json` (plus `report.json` once trained) and
/// `rounds/labels.jsonl`.
#[derive(Debug)]
pub struct HitlLoop {
    pool: DatasetManifest,
    labels: LabelStore,
    rounds: Vec<RoundState>,
    config: LoopConfig,
    root: Option<PathBuf>,
}

impl HitlLoop {
    pub fn in_memory(pool: DatasetManifest, labels: LabelStore, config: LoopConfig) -> Self {
        Self {
            pool,
            labels,
            rounds: Vec::new(),
            config,
            root: None,
        }
    }

    /// Opens the loop persisted under `root`, replaying rounds and labels.
    pub fn open(root: impl AsRef<Path>, pool: DatasetManifest, config: LoopConfig) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let dir = root.join("rounds");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let labels = LabelStore::open(dir.join("labels.jsonl"))?;
        let mut rounds = Vec::new();
        for n in 1.. {
            let path = dir.join(n.to_string()).join("round.json");
            if !path.exists() {
                break;
            }
            let state: RoundState = dataset::read_json(&path)?;
            if state.index != n {
                return Err(Error::Invariant(format!(
                    "{} holds round {}",
                    path.display(),
                    state.index
                )));
            }
            rounds.push(state);
        }
        Ok(Self {
            pool,
            labels,
            rounds,
            config,
            root: Some(root),
        })
    }

    pub fn pool(&self) -> &DatasetManifest {
        &self.pool
    }

    pub fn labels(&self) -> &LabelStore {
        &self.labels
    }

    pub fn rounds(&self) -> &[RoundState] {
        &self.rounds
    }

    pub fn round(&self, index: u32) -> Option<&RoundState> {
        self.rounds.get((index as usize).checked_sub(1)?)
    }

    pub fn current(&self) -> Option<&RoundState> {
        self.rounds.last()
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn labels_mut(&mut self) -> &mut LabelStore {
        &mut self.labels
    }

    fn persist(&self, index: u32) -> Result<()> {
        let (Some(root), Some(state)) = (&self.root, self.round(index)) else {
            return Ok(());
        };
        let dir = root.join("rounds").join(index.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_atomic(&dir.join("round.json"), state)?;
        if let Some(report) = &state.metrics {
            write_atomic(&dir.join("report.json"), report)?;
        }
        Ok(())
    }

    fn latest_mut(&mut self, index: u32) -> Result<&mut RoundState> {
        let n = self.rounds.len() as u32;
        if index == 0 || index > n {
            return Err(Error::UnknownId(format!("round {index}")));
        }
        if index != n {
            return Err(Error::StateConflict(format!(
                "round {index} is not the current round"
            )));
        }
        Ok(self.rounds.last_mut().expect("nonempty"))
    }

    pub fn seed(&mut self) -> Result<&RoundState> {
        if !self.rounds.is_empty() {
            return Err(Error::StateConflict("the loop is already seeded".into()));
        }
        let c = &self.config;
        let state = seed_round(
            &self.pool,
            &self.labels,
            c.pattern,
            &c.seed_targets,
            &c.validation_targets,
            c.seed,
        )?;
        self.rounds.push(state);
        self.persist(1)?;
        Ok(&self.rounds[0])
    }

    pub fn commit_training(&mut self, index: u32, training: &RoundTraining) -> Result<()> {
        let state = self.latest_mut(index)?;
        commit_training(
            state,
            training.models.iter().map(|m| m.id.clone()).collect(),
            training.report.clone(),
            training.vote.clone(),
        )?;
        self.persist(index)
    }

    pub fn propose(
        &mut self,
        index: u32,
        pool: &[PoolPrediction],
        now: DateTime<Utc>,
    ) -> Result<Vec<ReviewQueueItem>> {
        let batch = self.config.batch_size;
        let n = self.rounds.len() as u32;
        if index == 0 || index > n {
            return Err(Error::UnknownId(format!("round {index}")));
        }
        if index != n {
            return Err(Error::StateConflict(format!(
                "round {index} is not the current round"
            )));
        }
        let state = self.rounds.last_mut().expect("nonempty");
        let vote = state.vote.clone().ok_or_else(|| {
            Error::StateConflict(format!("round {index} has no trained classifiers"))
        })?;
        let queue = propose_labels(state, &mut self.labels, &vote, pool, batch, now)?;
        self.persist(index)?;
        Ok(queue)
    }

    pub fn review(
        &mut self,
        index: u32,
        decisions: &[(String, Verdict)],
        annotator: &str,
        now: DateTime<Utc>,
    ) -> Result<()> {
        let n = self.rounds.len() as u32;
        if index == 0 || index > n {
            return Err(Error::UnknownId(format!("round {index}")));
        }
        if index != n {
            return Err(Error::StateConflict(format!(
                "round {index} is not the current round"
            )));
        }
        let state = self.rounds.last_mut().expect("nonempty");
        apply_review(state, &mut self.labels, decisions, annotator, now)?;
        self.persist(index)
    }

    pub fn close(&mut self, index: u32) -> Result<()> {
        close_round(self.latest_mut(index)?)?;
        self.persist(index)
    }

    pub fn build_next(&mut self, index: u32, targets: &RoundTargets) -> Result<&RoundState> {
        let (options, seed) = (
            self.config.next,
            self.config.seed.wrapping_add(index as u64),
        );
        let n = self.rounds.len() as u32;
        if index == 0 || index > n {
            return Err(Error::UnknownId(format!("round {index}")));
        }
        if index != n {
            return Err(Error::StateConflict(format!(
                "round {index} is not the current round"
            )));
        }
        let state = self.rounds.last_mut().expect("nonempty");
        let mut draft = state.clone();
        let next = build_next_round(&mut draft, &self.pool, &self.labels, targets, options, seed)?;
        *state = draft;
        self.rounds.push(next);
        self.persist(index)?;
        self.persist(index + 1)?;
        Ok(self.rounds.last().expect("pushed"))
    }

    pub fn report(&self) -> RoundReport {
        round_report(&self.rounds)
    }
}

/// Writes JSON to a sibling temp file and renames it into place.
pub fn write_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    dataset::write_json(&tmp, value)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ManifestEntry;

    fn entry(id: &str, origin: Origin) -> ManifestEntry {
        ManifestEntry {
            path: PathBuf::from(format!("images/{id}.png")),
            origin,
            pattern: PatternClass::Rings,
            caption: None,
        }
    }

    fn epoch() -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH
    }

    /// `n_exp` experimental, `n_real` human-approved and `n_fake` human-fake
    /// generated items, plus `n_unlabeled` generated items with no label.
    fn world(
        n_exp: usize,
        n_real: usize,
        n_fake: usize,
        n_unlabeled: usize,
    ) -> (DatasetManifest, LabelStore) {
        let mut entries = Vec::new();
        let mut decisions = Vec::new();
        for i in 0..n_exp {
            entries.push(entry(&format!("exp-{i:04}"), Origin::Experimental));
        }
        for i in 0..n_real {
            let id = format!("gen-r-{i:04}");
            entries.push(entry(&id, Origin::Generated));
            decisions.push((id, Verdict::Realistic));
        }
        for i in 0..n_fake {
            let id = format!("gen-f-{i:04}");
            entries.push(entry(&id, Origin::Generated));
            decisions.push((id, Verdict::Fake));
        }
        for i in 0..n_unlabeled {
            entries.push(entry(&format!("gen-u-{i:04}"), Origin::Generated));
        }
        let mut labels = LabelStore::new();
        record_human_labels(&mut labels, &decisions, 0, "tester", epoch()).unwrap();
        (DatasetManifest::new(entries).unwrap(), labels)
    }

    fn fake_report(round: u32) -> EnsembleReport {
        EnsembleReport {
            round,
            classifiers: Vec::new(),
            strategies: Vec::new(),
        }
    }

    fn trained(state: &mut RoundState) {
        commit_training(
            state,
            vec!["a".into(), "b".into()],
            fake_report(state.index),
            VoteConfig::weighted(vec![0.5, 0.5]),
        )
        .unwrap();
    }

    #[test]
    fn target_scaling() {
        let t = RoundTargets::SEED;
        assert_eq!(
            (t.realistic_experimental, t.realistic_generated, t.fake),
            (40, 60, 100)
        );
        let s = t.scaled(0.1).unwrap();
        assert_eq!(
            (s.realistic_experimental, s.realistic_generated, s.fake),
            (4, 6, 10)
        );
        let n = RoundTargets::NEXT.scaled(0.05).unwrap();
        assert_eq!(
            (n.realistic_experimental, n.realistic_generated, n.fake),
            (20, 30, 50)
        );
        for f in [0.03, 0.07, 0.13, 0.33, 0.5, 0.77, 1.0, 2.5] {
            let s = t.scaled(f).unwrap();
            assert!(
                ratio_holds(s.realistic_experimental, s.realistic_generated),
                "{f}"
            );
            assert!(s.realistic().abs_diff(s.fake) <= 1);
        }
        let bad = RoundTargets {
            realistic_experimental: 10,
            realistic_generated: 0,
            fake: 10,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn seed_round_at_full_scale() {
        let (pool, labels) = world(100, 150, 250, 0);
        let state = seed_round(
            &pool,
            &labels,
            None,
            &RoundTargets::SEED,
            &RoundTargets::SEED,
            1,
        )
        .unwrap();
        let c = state.composition;
        assert_eq!(
            (c.realistic_experimental, c.realistic_generated, c.fake()),
            (40, 60, 100)
        );
        assert_eq!(state.validation.len(), 200);
        assert!(state.check_invariants().is_ok());
        assert_eq!(state.status, RoundStatus::Training);
        let again = seed_round(
            &pool,
            &labels,
            None,
            &RoundTargets::SEED,
            &RoundTargets::SEED,
            1,
        )
        .unwrap();
        assert_eq!(state, again);
    }

    #[test]
    fn seed_round_rejects_thin_pool() {
        let (pool, labels) = world(2, 150, 250, 0);
        let err = seed_round(
            &pool,
            &labels,
            None,
            &RoundTargets::SEED,
            &RoundTargets::SEED,
            1,
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::TargetsUnreachable {
                    needed: 80,
                    available: 2,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn queue_is_uncertainty_first() {
        let (pool, mut labels) = world(20, 20, 30, 500);
        let small = RoundTargets::SEED.scaled(0.1).unwrap();
        let mut state = seed_round(&pool, &labels, None, &small, &small, 3).unwrap();
        assert!(propose_labels(
            &mut state,
            &mut labels,
            &VoteConfig::new(Strategy::SoftAverage),
            &[],
            10,
            epoch()
        )
        .is_err());
        trained(&mut state);
        let preds: Vec<PoolPrediction> = (0..500)
            .map(|i| PoolPrediction {
                id: format!("gen-u-{i:04}"),
                probabilities: vec![
                    ProbabilityVector::realistic((i as f64 * 0.618).fract())
                        .unwrap();
                    2
                ],
                physics: None,
            })
            .collect();
        let vote = state.vote.clone().unwrap();
        let queue = propose_labels(&mut state, &mut labels, &vote, &preds, 100, epoch()).unwrap();
        assert_eq!(queue.len(), 100);
        for w in queue.windows(2) {
            assert!(w[0].uncertainty_key() <= w[1].uncertainty_key());
        }
        assert_eq!(state.status, RoundStatus::Proposing);
        // an item at exactly 0.5 goes ahead of a confident one
        let two = vec![
            PoolPrediction {
                id: "gen-u-0001".into(),
                probabilities: vec![ProbabilityVector::realistic(0.99).unwrap(); 2],
                physics: None,
            },
            PoolPrediction {
                id: "gen-u-0002".into(),
                probabilities: vec![ProbabilityVector::realistic(0.5).unwrap(); 2],
                physics: None,
            },
        ];
        let q = propose_labels(&mut state, &mut labels, &vote, &two, 10, epoch()).unwrap();
        assert_eq!(q[0].image_id, "gen-u-0002");
    }

    #[test]
    fn review_appends_provenance_and_rejects_bad_ids() {
        let (pool, mut labels) = world(20, 20, 30, 50);
        let small = RoundTargets::SEED.scaled(0.1).unwrap();
        let mut state = seed_round(&pool, &labels, None, &small, &small, 3).unwrap();
        trained(&mut state);
        let preds: Vec<PoolPrediction> = (0..50)
            .map(|i| PoolPrediction {
                id: format!("gen-u-{i:04}"),
                probabilities: vec![ProbabilityVector::realistic(0.2).unwrap(); 2],
                physics: Some(0.7),
            })
            .collect();
        let vote = state.vote.clone().unwrap();
        let queue = propose_labels(&mut state, &mut labels, &vote, &preds, 5, epoch()).unwrap();
        let before = labels.len();
        apply_review(&mut state, &mut labels, &[], "ann", epoch()).unwrap();
        assert_eq!(labels.len(), before);
        assert_eq!(state.status, RoundStatus::Proposing);

        let id = queue[0].image_id.clone();
        assert!(matches!(
            apply_review(
                &mut state,
                &mut labels,
                &[("nope".into(), Verdict::Fake)],
                "ann",
                epoch()
            ),
            Err(Error::UnknownId(_))
        ));
        apply_review(
            &mut state,
            &mut labels,
            &[(id.clone(), Verdict::Realistic)],
            "ann",
            epoch(),
        )
        .unwrap();
        assert_eq!(state.status, RoundStatus::Reviewing);
        let history = labels.history(&id);
        assert_eq!(history.len(), 2);
        assert_eq!(
            (history[0].source, history[0].verdict),
            (LabelSource::Model, Verdict::Fake)
        );
        assert_eq!(
            (history[1].source, history[1].verdict),
            (LabelSource::Human, Verdict::Realistic)
        );
        assert_eq!(labels.effective(&id).unwrap().verdict, Verdict::Realistic);
        assert!(matches!(
            apply_review(
                &mut state,
                &mut labels,
                &[(id.clone(), Verdict::Fake)],
                "ann",
                epoch()
            ),
            Err(Error::DuplicateVerdict { .. })
        ));
        // the override makes the item eligible as realistic generated
        assert!(Category::RealisticGenerated.admits(pool.find(&id).unwrap(), &labels));
    }

    #[test]
    fn next_round_keeps_validation_and_ratio() {
        let (pool, labels) = world(80, 100, 140, 0);
        let small = RoundTargets::SEED.scaled(0.1).unwrap();
        let mut r1 = seed_round(&pool, &labels, None, &small, &small, 5).unwrap();
        let next_targets = RoundTargets::NEXT.scaled(0.05).unwrap();
        assert!(matches!(
            build_next_round(
                &mut r1.clone(),
                &pool,
                &labels,
                &next_targets,
                NextRoundOptions::default(),
                1
            ),
            Err(Error::StateConflict(_))
        ));
        trained(&mut r1);
        let r2 = build_next_round(
            &mut r1,
            &pool,
            &labels,
            &next_targets,
            NextRoundOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(r1.status, RoundStatus::Closed);
        assert_eq!(r2.index, 2);
        assert_eq!(r2.validation, r1.validation);
        let c = r2.composition;
        assert_eq!(
            (c.realistic_experimental, c.realistic_generated, c.fake()),
            (20, 30, 50)
        );
        let ids2 = r2.training_ids();
        assert!(r1.training.iter().all(|i| ids2.contains(i.id.as_str())));
        assert!(r2.check_invariants().is_ok());

        let full = RoundTargets::NEXT;
        let (big_pool, big_labels) = world(600, 900, 1300, 0);
        let mut b1 = seed_round(
            &big_pool,
            &big_labels,
            None,
            &RoundTargets::SEED,
            &RoundTargets::SEED,
            2,
        )
        .unwrap();
        trained(&mut b1);
        let b2 = build_next_round(
            &mut b1,
            &big_pool,
            &big_labels,
            &full,
            NextRoundOptions::default(),
            2,
        )
        .unwrap();
        let c = b2.composition;
        assert_eq!(
            (c.realistic_experimental, c.realistic_generated, c.fake()),
            (400, 600, 1000)
        );

        let huge = RoundTargets::NEXT.scaled(2.0).unwrap();
        assert!(matches!(
            build_next_round(
                &mut b1.clone(),
                &big_pool,
                &big_labels,
                &huge,
                NextRoundOptions::default(),
                2
            ),
            Err(Error::StateConflict(_)) | Err(Error::TargetsUnreachable { .. })
        ));
    }

    #[test]
    fn next_round_prefers_recent_confirmations() {
        let (pool, mut labels) = world(40, 20, 30, 0);
        let small = RoundTargets::SEED.scaled(0.1).unwrap();
        let mut r1 = seed_round(&pool, &labels, None, &small, &small, 5).unwrap();
        trained(&mut r1);
        // a later human pass re-confirms one realistic item outside round 1
        let taken: HashSet<String> = r1
            .training
            .iter()
            .chain(&r1.validation)
            .map(|i| i.id.clone())
            .collect();
        let fresh = (0..20)
            .map(|i| format!("gen-r-{i:04}"))
            .find(|id| !taken.contains(id))
            .unwrap();
        record_human_labels(
            &mut labels,
            &[(fresh.clone(), Verdict::Realistic)],
            1,
            "ann",
            epoch(),
        )
        .unwrap();
        let t = RoundTargets {
            realistic_experimental: 4,
            realistic_generated: 7,
            fake: 11,
        };
        let r2 =
            build_next_round(&mut r1, &pool, &labels, &t, NextRoundOptions::default(), 0).unwrap();
        assert!(r2.training_ids().contains(fresh.as_str()));
    }

    #[test]
    fn report_covers_closed_rounds() {
        let (pool, labels) = world(80, 100, 140, 0);
        let small = RoundTargets::SEED.scaled(0.1).unwrap();
        let mut r1 = seed_round(&pool, &labels, None, &small, &small, 5).unwrap();
        trained(&mut r1);
        let mut r2 = build_next_round(
            &mut r1,
            &pool,
            &labels,
            &small,
            NextRoundOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(round_report(&[r1.clone(), r2.clone()]).rounds.len(), 1);
        trained(&mut r2);
        close_round(&mut r2).unwrap();
        let report = round_report(&[r1, r2]);
        assert_eq!(report.rounds.len(), 2);
        assert_eq!(report.rounds[1].composition.realistic_experimental, 4);
    }

    #[test]
    fn simulated_annotator_error_rate() {
        let truth: HashMap<String, Verdict> = (0..4000)
            .map(|i| (format!("x{i}"), Verdict::Realistic))
            .collect();
        let mut ann = SimulatedAnnotator::new(truth.clone(), 0.05, 9).unwrap();
        let ids: Vec<String> = (0..4000).map(|i| format!("x{i}")).collect();
        let answers = ann.answer(&ids).unwrap();
        let flipped = answers.iter().filter(|(_, v)| *v == Verdict::Fake).count() as f64 / 4000.0;
        assert!((flipped - 0.05).abs() < 0.015, "{flipped}");
        let mut perfect = SimulatedAnnotator::new(truth, 0.0, 9).unwrap();
        assert!(perfect
            .answer(&ids)
            .unwrap()
            .iter()
            .all(|(_, v)| *v == Verdict::Realistic));
        assert!(perfect.answer(&["missing".into()]).is_err());
    }

    #[test]
    fn loop_persists_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let (pool, labels) = world(20, 20, 30, 10);
        let small = RoundTargets::SEED.scaled(0.1).unwrap();
        let config = LoopConfig {
            seed_targets: small,
            validation_targets: small,
            batch_size: 5,
            ..Default::default()
        };
        {
            let mut lp = HitlLoop::open(dir.path(), pool.clone(), config.clone()).unwrap();
            let decisions: Vec<(String, Verdict)> = labels
                .records()
                .iter()
                .map(|r| (r.image_id.clone(), r.verdict))
                .collect();
            record_human_labels(lp.labels_mut(), &decisions, 0, "tester", epoch()).unwrap();
            lp.seed().unwrap();
            assert!(matches!(lp.seed(), Err(Error::StateConflict(_))));
            let training = RoundTraining {
                models: Vec::new(),
                report: fake_report(1),
                vote: VoteConfig::new(Strategy::SoftAverage),
                fitted: None,
            };
            lp.commit_training(1, &training).unwrap();
            let preds: Vec<PoolPrediction> = (0..10)
                .map(|i| PoolPrediction {
                    id: format!("gen-u-{i:04}"),
                    probabilities: vec![ProbabilityVector::realistic(0.4).unwrap()],
                    physics: None,
                })
                .collect();
            let q = lp.propose(1, &preds, epoch()).unwrap();
            lp.review(1, &[(q[0].image_id.clone(), Verdict::Fake)], "ann", epoch())
                .unwrap();
            assert!(matches!(
                lp.propose(2, &preds, epoch()),
                Err(Error::UnknownId(_))
            ));
        }
        let lp = HitlLoop::open(dir.path(), pool, config).unwrap();
        assert_eq!(lp.rounds().len(), 1);
        assert_eq!(lp.round(1).unwrap().status, RoundStatus::Reviewing);
        assert_eq!(lp.labels().len(), labels.len() + 5 + 1);
        assert!(dir.path().join("rounds/1/report.json").exists());
    }
}

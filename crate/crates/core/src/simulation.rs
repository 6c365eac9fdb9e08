//! End-to-end loop benchmark on a synthetic corpus with a simulated
//! annotator standing in for the human reviewer.

use std::collections::HashMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierSpec, Sample};
use crate::dataset::{DatasetManifest, LabelStore, ManifestEntry, Origin, Verdict};
use crate::embed::{extract_raw, FeatureConfig, FeatureExtractor};
use crate::ensemble::Strategy;
use crate::error::{Error, Result};
use crate::physics::RealismConfig;
use crate::pipeline::sample_for;
use crate::rounds::{self, HitlLoop, LoopConfig, RoundReport, RoundTargets, SimulatedAnnotator};
use crate::synth::{synthesize_corpus, CleanCorrupted, CorpusConfig, CorpusItem, PatternCounts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub corpus: CorpusConfig,
    pub error_rate: f64,
    /// Round-1 training and validation targets, as a fraction of 40/60/100.
    pub seed_scale: f64,
    /// Round-2 targets, as a fraction of 40/60/100.
    pub next_scale: f64,
    /// Generated frames labeled before round 1.
    pub prelabel: usize,
    pub batch_size: usize,
    pub classifiers: Vec<(String, ClassifierSpec)>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig {
                rings: CleanCorrupted {
                    clean: 80,
                    corrupted: 100,
                },
                peaks: CleanCorrupted {
                    clean: 0,
                    corrupted: 0,
                },
                background: CleanCorrupted {
                    clean: 0,
                    corrupted: 0,
                },
                experimental: PatternCounts {
                    rings: 30,
                    peaks: 0,
                    background: 0,
                },
                ..CorpusConfig::default()
            },
            error_rate: SimulatedAnnotator::DEFAULT_ERROR_RATE,
            seed_scale: 0.1,
            next_scale: 0.5,
            prelabel: 60,
            batch_size: 100,
            classifiers: default_classifiers(),
        }
    }
}

pub fn default_classifiers() -> Vec<(String, ClassifierSpec)> {
    vec![
        ("logistic".into(), ClassifierSpec::logistic()),
        ("k_nearest".into(), ClassifierSpec::k_nearest()),
        ("physics_rule".into(), ClassifierSpec::PhysicsRule),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub seed: u64,
    pub report: RoundReport,
    /// Weighted-soft-voting validation precision per round.
    pub weighted_precision: Vec<f64>,
}

impl SimulationOutcome {
    pub fn improved(&self) -> bool {
        matches!(self.weighted_precision.as_slice(), [a, b] if b >= a)
    }
}

/// Samples for every corpus item, with features normalized on the
/// experimental frames.
pub fn corpus_samples(
    items: &[CorpusItem],
    realism: &RealismConfig,
) -> Result<HashMap<String, Sample>> {
    let config = FeatureConfig::default();
    let reference = items
        .iter()
        .filter(|i| i.truth.origin == Origin::Experimental)
        .map(|i| extract_raw(&i.frame, &config).map(|r| r.values))
        .collect::<Result<Vec<_>>>()?;
    if reference.is_empty() {
        return Err(Error::TooFewItems(
            "no experimental frames to normalize features on".into(),
        ));
    }
    let extractor = FeatureExtractor::from_raw(config, &reference)?;
    items
        .iter()
        .map(|i| {
            let s = sample_for(&i.frame, Some(i.truth.spec.pattern()), &extractor, realism)?;
            Ok((s.id.clone(), s))
        })
        .collect()
}

fn manifest_of(items: &[CorpusItem]) -> Result<DatasetManifest> {
    DatasetManifest::new(
        items
            .iter()
            .map(|i| ManifestEntry {
                path: PathBuf::from(format!("images/{}.png", i.truth.id)),
                origin: i.truth.origin,
                pattern: i.truth.spec.pattern(),
                caption: None,
            })
            .collect(),
    )
}

/// Two loop rounds on a fresh corpus: prelabel, seed, train, propose,
/// review with the simulated annotator, build round 2, train, close.
pub fn run_two_rounds(config: &SimulationConfig, seed: u64) -> Result<SimulationOutcome> {
    let items = synthesize_corpus(&config.corpus, seed)?;
    let samples = corpus_samples(&items, &RealismConfig::default())?;
    let manifest = manifest_of(&items)?;
    let truth: HashMap<String, Verdict> = items
        .iter()
        .map(|i| (i.truth.id.clone(), i.truth.verdict))
        .collect();
    let mut annotator = SimulatedAnnotator::new(truth, config.error_rate, seed ^ 0x5eed)?;
    let now = DateTime::<Utc>::UNIX_EPOCH;

    let mut generated: Vec<String> = items
        .iter()
        .filter(|i| i.truth.origin == Origin::Generated)
        .map(|i| i.truth.id.clone())
        .collect();
    generated.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = LabelStore::new();
    let first = annotator.answer(&generated[..config.prelabel.min(generated.len())])?;
    rounds::record_human_labels(&mut labels, &first, 0, &annotator.name.clone(), now)?;

    let targets = RoundTargets::SEED.scaled(config.seed_scale)?;
    let loop_config = LoopConfig {
        seed_targets: targets,
        validation_targets: targets,
        batch_size: config.batch_size,
        seed,
        ..LoopConfig::default()
    };
    let mut lp = HitlLoop::in_memory(manifest, labels, loop_config);
    lp.seed()?;

    let warm = HashMap::new();
    let t1 = rounds::train_round(
        lp.round(1).expect("seeded"),
        &samples,
        &config.classifiers,
        seed,
        &warm,
    )?;
    lp.commit_training(1, &t1)?;
    let pool_ids: Vec<String> = generated.clone();
    let pool = rounds::predict_pool(&t1.models, &samples, &pool_ids)?;
    let queue = lp.propose(1, &pool, now)?;
    let decisions = annotator.review_queue(&queue)?;
    lp.review(1, &decisions, &annotator.name.clone(), now)?;
    lp.close(1)?;

    lp.build_next(1, &RoundTargets::SEED.scaled(config.next_scale)?)?;
    let t2 = rounds::train_round(
        lp.round(2).expect("built"),
        &samples,
        &config.classifiers,
        seed,
        &warm,
    )?;
    lp.commit_training(2, &t2)?;
    lp.close(2)?;

    let report = lp.report();
    Ok(SimulationOutcome {
        seed,
        weighted_precision: report.precision_series(Strategy::SoftWeighted),
        report,
    })
}

//! A dataset directory as the gateway sees it: `manifest.jsonl`, the image
//! files, optional seed labels and loop settings, the loop's round state and
//! the trained models of each round.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use scatgate::classify::{Sample, TrainedClassifier};
use scatgate::dataset::{self, LabelRecord, LabelSource};
use scatgate::embed::{extract_raw, FeatureConfig, FeatureExtractor};
use scatgate::frame::load_frame;
use scatgate::physics::RealismConfig;
use scatgate::pipeline::sample_for;
use scatgate::rounds::{self, HitlLoop, ReviewQueueItem, RoundState, RoundTraining};
use scatgate::{DatasetManifest, Origin, ScatterFrame};

use crate::config::LoopSettings;
use crate::error::{GatewayError, Result};

pub const MANIFEST: &str = "manifest.jsonl";
pub const SEED_LABELS: &str = "labels.jsonl";
pub const LOOP_SETTINGS: &str = "loop.toml";
const SAMPLES: &str = "samples.jsonl";

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    manifest: DatasetManifest,
    settings: LoopSettings,
}

impl Workspace {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(GatewayError::NotFound(format!(
                "no {MANIFEST} in {}",
                root.display()
            )));
        }
        let manifest = DatasetManifest::read_jsonl(&manifest_path)?;
        let settings_path = root.join(LOOP_SETTINGS);
        let settings = if settings_path.exists() {
            let text = std::fs::read_to_string(&settings_path)
                .map_err(|e| GatewayError::io(&settings_path, e))?;
            LoopSettings::from_toml_str(&text)?
        } else {
            LoopSettings::default()
        };
        Ok(Self {
            root,
            manifest,
            settings,
        })
    }

    pub fn with_settings(mut self, settings: LoopSettings) -> Result<Self> {
        settings.validate()?;
        self.settings = settings;
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn name(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn settings(&self) -> &LoopSettings {
        &self.settings
    }

    pub fn image_path(&self, id: &str) -> Result<PathBuf> {
        let entry = self
            .manifest
            .find(id)
            .ok_or_else(|| GatewayError::NotFound(format!("image {id}")))?;
        Ok(self.root.join(&entry.path))
    }

    pub fn load_frame(&self, id: &str) -> Result<ScatterFrame> {
        Ok(load_frame(self.image_path(id)?)?.with_id(id))
    }

    /// Generated ids in manifest order: the pool the ensemble proposes from.
    pub fn generated_ids(&self) -> Vec<String> {
        self.manifest
            .entries()
            .iter()
            .filter(|e| e.origin == Origin::Generated)
            .map(|e| e.id())
            .collect()
    }

    /// Opens the persisted loop. On first open the dataset's seed labels are
    /// imported into the loop's label store.
    pub fn open_loop(&self) -> Result<HitlLoop> {
        let mut lp = HitlLoop::open(
            &self.root,
            self.manifest.clone(),
            self.settings.config.clone(),
        )?;
        let seed_labels = self.root.join(SEED_LABELS);
        if lp.labels().is_empty() && lp.rounds().is_empty() && seed_labels.exists() {
            let records: Vec<LabelRecord> = dataset::read_jsonl(&seed_labels)?;
            for r in self.select_seed_labels(records) {
                lp.labels_mut().append(r)?;
            }
        }
        Ok(lp)
    }

    fn select_seed_labels(&self, records: Vec<LabelRecord>) -> Vec<LabelRecord> {
        let Some(limit) = self.settings.prelabel_generated else {
            return records;
        };
        let generated: HashSet<String> = self.generated_ids().into_iter().collect();
        let mut gen_ids: Vec<&str> = records
            .iter()
            .filter(|r| generated.contains(&r.image_id))
            .map(|r| r.image_id.as_str())
            .collect();
        gen_ids.sort_unstable();
        gen_ids.dedup();
        gen_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(self.settings.config.seed));
        let keep: HashSet<String> = gen_ids.into_iter().take(limit).map(String::from).collect();
        records
            .into_iter()
            .filter(|r| !generated.contains(&r.image_id) || keep.contains(&r.image_id))
            .collect()
    }

    /// Classifier inputs for every image, cached in `samples.jsonl`. Features
    /// are normalized on the experimental frames.
    pub fn samples(&self) -> Result<HashMap<String, Sample>> {
        let cache = self.root.join(SAMPLES);
        let ids: HashSet<String> = self.manifest.entries().iter().map(|e| e.id()).collect();
        if cache.exists() {
            let cached: Vec<Sample> = dataset::read_jsonl(&cache)?;
            if cached.len() == ids.len() && cached.iter().all(|s| ids.contains(&s.id)) {
                return Ok(cached.into_iter().map(|s| (s.id.clone(), s)).collect());
            }
            log::info!("{} is stale, recomputing", cache.display());
        }
        let samples = self.compute_samples()?;
        dataset::write_jsonl(&cache, &samples)?;
        Ok(samples.into_iter().map(|s| (s.id.clone(), s)).collect())
    }

    fn compute_samples(&self) -> Result<Vec<Sample>> {
        let config = FeatureConfig::default();
        let entries = self.manifest.entries();
        let frames = entries
            .par_iter()
            .map(|e| self.load_frame(&e.id()))
            .collect::<Result<Vec<_>>>()?;
        let reference = entries
            .iter()
            .zip(&frames)
            .filter(|(e, _)| e.origin == Origin::Experimental)
            .map(|(_, f)| extract_raw(f, &config).map(|r| r.values))
            .collect::<scatgate::Result<Vec<_>>>()?;
        let extractor = if reference.is_empty() {
            let all: Vec<&ScatterFrame> = frames.iter().collect();
            FeatureExtractor::fit(config, &all)?
        } else {
            FeatureExtractor::from_raw(config, &reference)?
        };
        let realism = RealismConfig::default();
        Ok(entries
            .par_iter()
            .zip(&frames)
            .map(|(e, f)| sample_for(f, Some(e.pattern), &extractor, &realism))
            .collect::<scatgate::Result<Vec<_>>>()?)
    }

    pub fn models_dir(&self, round: u32) -> PathBuf {
        self.root
            .join("rounds")
            .join(round.to_string())
            .join("models")
    }

    pub fn save_models(&self, round: u32, models: &[TrainedClassifier]) -> Result<()> {
        let dir = self.models_dir(round);
        std::fs::create_dir_all(&dir).map_err(|e| GatewayError::io(&dir, e))?;
        for m in models {
            rounds::write_atomic(&dir.join(format!("{}.json", m.id)), m)?;
        }
        Ok(())
    }

    /// The models a round committed, in commit order.
    pub fn load_models(&self, round: u32, names: &[String]) -> Result<Vec<TrainedClassifier>> {
        let dir = self.models_dir(round);
        names
            .iter()
            .map(|n| Ok(TrainedClassifier::load_json(dir.join(format!("{n}.json")))?))
            .collect()
    }

    /// Trains the current round's classifiers. Pure with respect to the loop;
    /// commit with [`Workspace::commit_training`].
    pub fn train(
        &self,
        state: &RoundState,
        samples: &HashMap<String, Sample>,
    ) -> Result<RoundTraining> {
        let seed = self.settings.config.seed.wrapping_add(state.index as u64);
        Ok(rounds::train_round(
            state,
            samples,
            &self.settings.specs(),
            seed,
            &HashMap::new(),
        )?)
    }

    pub fn commit_training(
        &self,
        lp: &mut HitlLoop,
        round: u32,
        training: &RoundTraining,
    ) -> Result<()> {
        let state = lp
            .round(round)
            .ok_or_else(|| GatewayError::NotFound(format!("round {round}")))?;
        if state.status != scatgate::RoundStatus::Collecting
            && state.status != scatgate::RoundStatus::Training
        {
            return Err(GatewayError::Conflict(format!(
                "round {round} is {} and cannot be retrained",
                state.status
            )));
        }
        self.save_models(round, &training.models)?;
        lp.commit_training(round, training)?;
        Ok(())
    }

    /// Votes on the generated pool with the round's committed models and
    /// queues the most uncertain images for review.
    pub fn propose(
        &self,
        lp: &mut HitlLoop,
        round: u32,
        samples: &HashMap<String, Sample>,
        now: DateTime<Utc>,
    ) -> Result<Vec<ReviewQueueItem>> {
        let state = lp
            .round(round)
            .ok_or_else(|| GatewayError::NotFound(format!("round {round}")))?;
        if !state.is_trained() {
            return Err(GatewayError::Conflict(format!(
                "round {round} has no trained classifiers"
            )));
        }
        let models = self.load_models(round, &state.models)?;
        let pool = rounds::predict_pool(&models, samples, &self.generated_ids())?;
        Ok(lp.propose(round, &pool, now)?)
    }
}

/// Dataset directories under `root`: `root` itself when it holds a manifest,
/// otherwise its immediate subdirectories that do, sorted by name.
pub fn discover_datasets(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(MANIFEST).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| GatewayError::io(root, e))? {
        let path = entry.map_err(|e| GatewayError::io(root, e))?.path();
        if path.join(MANIFEST).exists() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Human labels recorded for `ids` in `round`, keyed by id.
pub fn human_verdicts(lp: &HitlLoop, round: u32) -> HashMap<&str, &LabelRecord> {
    lp.labels()
        .records()
        .iter()
        .filter(|r| r.source == LabelSource::Human && r.round == round)
        .map(|r| (r.image_id.as_str(), r))
        .collect()
}

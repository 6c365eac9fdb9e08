//! Hallucination gating for generated X-ray scattering frames.
//!
//! The crate scores frames against diffraction-physics realism checks,
//! computes distributional metrics between real and generated feature sets,
//! trains lightweight realistic/fake classifiers, combines them by voting and
//! runs the iterative human-in-the-loop labeling rounds that grow their
//! training data. A synthetic frame generator with controlled corruptions
//! supplies ground truth for all of it.

pub mod classify;
pub mod dataset;
pub mod embed;
pub mod ensemble;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod physics;
pub mod pipeline;
pub mod rounds;
pub mod simulation;
pub mod synth;

pub use dataset::{
    DatasetManifest, FeatureSet, FeatureVector, LabelRecord, LabelSource, LabelStore,
    ManifestEntry, Origin, PatternClass, ProbabilityVector, Verdict,
};
pub use ensemble::{Strategy, VoteConfig};
pub use error::{Error, Result};
pub use frame::{BitDepth, Center, ScatterFrame};
pub use rounds::{HitlLoop, RoundState, RoundStatus, RoundTargets};

//! Frame-to-sample glue shared by the CLI, the service and the benchmarks.

use crate::classify::Sample;
use crate::dataset::PatternClass;
use crate::embed::FeatureExtractor;
use crate::error::Result;
use crate::frame::ScatterFrame;
use crate::physics::{realism_report, RealismConfig, RealismReport};

/// Realism report for `frame`, using the pattern hint when known.
pub fn score_frame(
    frame: &ScatterFrame,
    pattern: Option<PatternClass>,
    base: &RealismConfig,
) -> Result<RealismReport> {
    let config = RealismConfig {
        pattern: pattern.or(base.pattern),
        ..base.clone()
    };
    realism_report(frame, &config)
}

/// Physics composite of `frame`; a frame the checks cannot analyze at all
/// scores 0.
pub fn physics_score(
    frame: &ScatterFrame,
    pattern: Option<PatternClass>,
    base: &RealismConfig,
) -> f64 {
    match score_frame(frame, pattern, base) {
        Ok(r) => r.composite,
        Err(e) => {
            log::warn!("realism checks failed on {}: {e}", frame.id());
            0.0
        }
    }
}

/// Classifier input for one frame: normalized features plus physics score.
pub fn sample_for(
    frame: &ScatterFrame,
    pattern: Option<PatternClass>,
    extractor: &FeatureExtractor,
    realism: &RealismConfig,
) -> Result<Sample> {
    let features = extractor.extract(frame)?;
    Ok(Sample {
        id: features.id,
        features: features.values,
        physics: Some(physics_score(frame, pattern, realism)),
    })
}

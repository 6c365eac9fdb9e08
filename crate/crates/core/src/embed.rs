//! Handcrafted frame features and a linear projection for 2-D/3-D layouts.
//!
//! A feature vector is the concatenation of three blocks: the angular-mean
//! radial profile, the per-angle radial maximum, and an area-averaged
//! thumbnail. Each block is z-normalized per component with statistics fitted
//! on a reference set.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSet, FeatureVector};
use crate::error::{Error, Result};
use crate::frame::{area_downsample, Center, ScatterFrame};
use crate::physics::{self, InvalidMask};

pub const EXTRACTOR_ID: &str = "scatgate-radial-angular-thumb-v1";
/// Polar resolution used for the profile blocks.
const FEATURE_N_THETA: usize = 180;
/// Standard deviations below this are treated as constant components.
const MIN_STD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub radial_bins: usize,
    pub angular_bins: usize,
    pub thumb_side: usize,
    pub radial: bool,
    pub angular: bool,
    pub thumb: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            radial_bins: 64,
            angular_bins: 36,
            thumb_side: 16,
            radial: true,
            angular: true,
            thumb: true,
        }
    }
}

impl FeatureConfig {
    /// Block lengths in output order (radial, angular, thumbnail); disabled
    /// blocks have length 0.
    pub fn block_lengths(&self) -> [usize; 3] {
        [
            if self.radial { self.radial_bins } else { 0 },
            if self.angular { self.angular_bins } else { 0 },
            if self.thumb {
                self.thumb_side * self.thumb_side
            } else {
                0
            },
        ]
    }

    pub fn len(&self) -> usize {
        self.block_lengths().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidInput(
                "feature config enables no block".into(),
            ));
        }
        let [r, a, t] = self.block_lengths();
        if (self.radial && r < 2) || (self.angular && a < 2) || (self.thumb && t == 0) {
            return Err(Error::InvalidInput(format!(
                "feature blocks too small: radial {r}, angular {a}, thumb {t}"
            )));
        }
        Ok(())
    }
}

/// Un-normalized features of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub values: Vec<f64>,
    pub center: Center,
    /// The center could not be located and the frame midpoint was used.
    pub center_fallback: bool,
}

/// Beam center for feature extraction: beamstop centroid, else the
/// radial-profile grid search, else the frame midpoint.
fn feature_center(frame: &ScatterFrame) -> (Center, bool) {
    let search = physics::CenterSearch::for_frame(frame);
    let near = Center::new((frame.width() / 2) as f64, (frame.height() / 2) as f64);
    if let Some(c) = physics::beamstop_center(frame, near, search.window as f64 + 4.0) {
        return (c, false);
    }
    match physics::find_center(frame, search.window, search.coarse_step) {
        Ok(fit) => (fit.center, false),
        Err(e) => {
            log::warn!(
                "{}: center not found ({e}); features use the midpoint",
                frame.id()
            );
            (frame.midpoint(), true)
        }
    }
}

/// Linear resampling of `src` onto `n` evenly spaced points spanning it.
fn resample(src: &[f64], n: usize) -> Vec<f64> {
    if src.len() == 1 {
        return vec![src[0]; n];
    }
    let last = (src.len() - 1) as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 * last / (n - 1).max(1) as f64;
            let lo = (x.floor() as usize).min(src.len() - 2);
            let f = x - lo as f64;
            src[lo] * (1.0 - f) + src[lo + 1] * f
        })
        .collect()
}

pub fn extract_raw(frame: &ScatterFrame, config: &FeatureConfig) -> Result<RawFeatures> {
    config.validate()?;
    let (center, center_fallback) = feature_center(frame);
    let mut values = Vec::with_capacity(config.len());
    if config.radial || config.angular {
        let invalid = InvalidMask::build(
            frame,
            center,
            frame.width().min(frame.height()) as f64 / 4.0,
        );
        let n_r = (frame.width().min(frame.height()) / 2).max(physics::MIN_POLAR_BINS);
        let polar = physics::warp_polar_masked(frame, &invalid, center, FEATURE_N_THETA, n_r)?;
        if config.radial {
            let profile: Vec<f64> = polar
                .radial_profile()
                .into_iter()
                .map(|v| v.unwrap_or(0.0))
                .collect();
            values.extend(resample(&profile, config.radial_bins));
        }
        if config.angular {
            let maxima: Vec<f64> = (0..polar.n_theta())
                .map(|t| {
                    (0..polar.n_r())
                        .filter_map(|r| polar.at(t, r))
                        .fold(0.0, f64::max)
                })
                .collect();
            let n = config.angular_bins;
            for b in 0..n {
                let lo = b * maxima.len() / n;
                let hi = ((b + 1) * maxima.len() / n).max(lo + 1);
                let slice = &maxima[lo..hi.min(maxima.len())];
                values.push(slice.iter().sum::<f64>() / slice.len() as f64);
            }
        }
    }
    if config.thumb {
        values.extend(area_downsample(frame, config.thumb_side));
    }
    Ok(RawFeatures {
        values,
        center,
        center_fallback,
    })
}

/// Per-component z-normalization fitted on a reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(reference: &[Vec<f64>]) -> Result<Self> {
        let first = reference
            .first()
            .ok_or_else(|| Error::TooFewItems("normalizer needs a reference set".into()))?;
        let d = first.len();
        let n = reference.len() as f64;
        let mut mean = vec![0.0; d];
        for row in reference {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in reference {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > MIN_STD { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    /// Leaves values unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// A feature config plus its fitted normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub normalizer: Normalizer,
}

impl FeatureExtractor {
    /// Fits the normalization on `reference` frames.
    pub fn fit(config: FeatureConfig, reference: &[&ScatterFrame]) -> Result<Self> {
        let raws = reference
            .iter()
            .map(|f| extract_raw(f, &config).map(|r| r.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            normalizer: Normalizer::fit(&raws)?,
        })
    }

    pub fn from_raw(config: FeatureConfig, raws: &[Vec<f64>]) -> Result<Self> {
        Ok(Self {
            config,
            normalizer: Normalizer::fit(raws)?,
        })
    }

    pub fn extract(&self, frame: &ScatterFrame) -> Result<FeatureVector> {
        let raw = extract_raw(frame, &self.config)?;
        Ok(FeatureVector {
            id: frame.id().to_string(),
            values: self.normalizer.apply(&raw.values)?,
        })
    }

    pub fn extract_set(&self, frames: &[&ScatterFrame]) -> Result<FeatureSet> {
        let rows = frames
            .iter()
            .map(|f| self.extract(f))
            .collect::<Result<Vec<_>>>()?;
        FeatureSet::new(EXTRACTOR_ID, rows)
    }
}

/// Principal-axis projection model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal axes, each of the feature dimension.
    pub axes: Vec<Vec<f64>>,
    /// Fraction of total variance along each axis, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
}

impl ProjectionModel {
    pub fn k(&self) -> usize {
        self.axes.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

/// Relative eigenvalue cutoff used to count the rank of the covariance.
const RANK_TOLERANCE: f64 = 1e-10;

/// Principal axes of the centered data via eigendecomposition of the sample
/// covariance. Each axis is signed so its largest-magnitude component is
/// positive.
pub fn fit_projection(features: &[&[f64]], k: usize) -> Result<ProjectionModel> {
    if k == 0 {
        return Err(Error::InvalidInput("projection needs k >= 1".into()));
    }
    if features.len() < k + 1 {
        return Err(Error::TooFewItems(format!(
            "projection to {k} dimensions needs at least {} vectors, got {}",
            k + 1,
            features.len()
        )));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if k > d {
        return Err(Error::RankDeficient {
            requested: k,
            rank: d,
        });
    }
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
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let top = values[0];
    let rank = values
        .iter()
        .filter(|&&v| top > 0.0 && v > RANK_TOLERANCE * top)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let axes = order[..k]
        .iter()
        .map(|&i| {
            let col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot =
                col.iter().copied().fold(
                    0.0f64,
                    |best, v| if v.abs() > best.abs() { v } else { best },
                );
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            col.into_iter().map(|v| v * sign).collect()
        })
        .collect();
    Ok(ProjectionModel {
        mean,
        axes,
        explained_variance_ratio: values[..k].iter().map(|v| v / total).collect(),
    })
}

/// Coordinates of `feature` along the model axes.
pub fn project(model: &ProjectionModel, feature: &[f64]) -> Result<Vec<f64>> {
    if feature.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: feature.len(),
        });
    }
    Ok(model
        .axes
        .iter()
        .map(|axis| {
            axis.iter()
                .zip(feature.iter().zip(&model.mean))
                .map(|(a, (v, m))| a * (v - m))
                .sum()
        })
        .collect())
}

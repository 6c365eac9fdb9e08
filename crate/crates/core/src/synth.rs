//! Synthetic scattering frames with known ground truth, and controlled
//! hallucination corruptions.
//!
//! Every generator is deterministic in `(spec, seed)`. Pixel `(x, y)` sits at
//! image coordinate `(x, y)`; angles are measured from +x toward +y.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    write_jsonl, DatasetManifest, LabelRecord, LabelSource, ManifestEntry, Origin, PatternClass,
    Verdict,
};
use crate::error::{Error, Result};
use crate::frame::{save_frame, BitDepth, Center, ScatterFrame};
use crate::physics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub radius: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapOrientation {
    Row,
    Column,
}

/// Axis-aligned dead band: `width` rows or columns starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapBand {
    pub orientation: GapOrientation,
    pub start: usize,
    pub width: usize,
}

impl GapBand {
    fn contains(&self, x: usize, y: usize) -> bool {
        let p = match self.orientation {
            GapOrientation::Row => y,
            GapOrientation::Column => x,
        };
        p >= self.start && p < self.start + self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub center: Center,
    pub rings: Vec<Ring>,
    pub beamstop_radius: f64,
    #[serde(default)]
    pub gap_bands: Vec<GapBand>,
    pub background_level: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub radius: f64,
    /// Degrees in `[0, 360)`.
    pub azimuth: f64,
    /// Angular Gaussian width, degrees.
    pub angular_sigma: f64,
    pub radial_sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSpec {
    pub center: Center,
    pub peaks: Vec<Peak>,
    /// Mirror each peak at azimuth + 180 degrees.
    pub symmetry_pairs: bool,
    pub beamstop_radius: f64,
    #[serde(default)]
    pub gap_bands: Vec<GapBand>,
    pub background_level: f64,
    pub noise_sigma: f64,
}

fn check_common(
    center: Center,
    beamstop_radius: f64,
    gaps: &[GapBand],
    background: f64,
    noise: f64,
    size: (usize, usize),
) -> Result<()> {
    let (w, h) = size;
    if w < crate::frame::MIN_SIDE || h < crate::frame::MIN_SIDE {
        return Err(Error::InvalidSpec(format!("frame size {w}x{h} too small")));
    }
    if !(center.x.is_finite() && center.y.is_finite()) {
        return Err(Error::InvalidSpec("center must be finite".into()));
    }
    if !(0.0..=0.2).contains(&background) {
        return Err(Error::InvalidSpec(format!(
            "background level {background} outside [0, 0.2]"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "noise sigma {noise} must be >= 0"
        )));
    }
    if !(beamstop_radius >= 0.0 && beamstop_radius.is_finite()) {
        return Err(Error::InvalidSpec("beamstop radius must be >= 0".into()));
    }
    for g in gaps {
        let extent = match g.orientation {
            GapOrientation::Row => h,
            GapOrientation::Column => w,
        };
        if g.width == 0 || g.start + g.width > extent {
            return Err(Error::InvalidSpec(format!(
                "gap band {g:?} outside the frame"
            )));
        }
    }
    Ok(())
}

fn half_diagonal(size: (usize, usize)) -> f64 {
    (size.0 as f64).hypot(size.1 as f64) / 2.0
}

impl RingSpec {
    pub fn validate(&self, size: (usize, usize)) -> Result<()> {
        check_common(
            self.center,
            self.beamstop_radius,
            &self.gap_bands,
            self.background_level,
            self.noise_sigma,
            size,
        )?;
        for r in &self.rings {
            if !(r.radius > 0.0 && r.radius < half_diagonal(size)) {
                return Err(Error::InvalidSpec(format!(
                    "ring radius {} outside (0, half diagonal)",
                    r.radius
                )));
            }
            if r.sigma.is_nan() || r.sigma <= 0.0 {
                return Err(Error::InvalidSpec("ring sigma must be positive".into()));
            }
            if !(r.amplitude > 0.0 && r.amplitude <= 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "ring amplitude {} outside (0, 1]",
                    r.amplitude
                )));
            }
            if self.beamstop_radius >= r.radius {
                return Err(Error::InvalidSpec(
                    "beamstop radius must be below every ring radius".into(),
                ));
            }
        }
        Ok(())
    }

    /// Ring term summed over rings at radial distance `d`.
    pub fn ring_intensity(&self, d: f64) -> f64 {
        self.rings
            .iter()
            .map(|r| r.amplitude * (-(d - r.radius).powi(2) / (2.0 * r.sigma * r.sigma)).exp())
            .sum()
    }
}

impl PeakSpec {
    pub fn validate(&self, size: (usize, usize)) -> Result<()> {
        check_common(
            self.center,
            self.beamstop_radius,
            &self.gap_bands,
            self.background_level,
            self.noise_sigma,
            size,
        )?;
        for p in &self.peaks {
            if !(p.radius > 0.0 && p.radius < half_diagonal(size)) {
                return Err(Error::InvalidSpec(format!(
                    "peak radius {} invalid",
                    p.radius
                )));
            }
            if !(0.0..360.0).contains(&p.azimuth) {
                return Err(Error::InvalidSpec(format!(
                    "peak azimuth {} outside [0, 360)",
                    p.azimuth
                )));
            }
            if !(p.angular_sigma > 0.0 && p.radial_sigma > 0.0) {
                return Err(Error::InvalidSpec("peak widths must be positive".into()));
            }
            if !(p.amplitude > 0.0 && p.amplitude <= 1.0) {
                return Err(Error::InvalidSpec("peak amplitude outside (0, 1]".into()));
            }
            if self.beamstop_radius >= p.radius {
                return Err(Error::InvalidSpec(
                    "beamstop radius must be below every peak radius".into(),
                ));
            }
        }
        Ok(())
    }

    /// Peak term at polar position (`d`, `azimuth` degrees).
    pub fn peak_intensity(&self, d: f64, azimuth: f64) -> f64 {
        let mirrors: &[f64] = if self.symmetry_pairs {
            &[0.0, 180.0]
        } else {
            &[0.0]
        };
        let mut acc = 0.0;
        for p in &self.peaks {
            let radial = (-(d - p.radius).powi(2) / (2.0 * p.radial_sigma.powi(2))).exp();
            for m in mirrors {
                let delta = wrap_degrees(azimuth - p.azimuth - m);
                acc += p.amplitude
                    * radial
                    * (-(delta * delta) / (2.0 * p.angular_sigma.powi(2))).exp();
            }
        }
        acc
    }
}

/// Wraps an angle difference into `[-180, 180)` degrees.
pub fn wrap_degrees(a: f64) -> f64 {
    (a + 180.0).rem_euclid(360.0) - 180.0
}

struct Canvas<'a> {
    size: (usize, usize),
    center: Center,
    beamstop_radius: f64,
    gaps: &'a [GapBand],
    background: f64,
    noise_sigma: f64,
}

impl Canvas<'_> {
    fn render(
        &self,
        id: String,
        seed: u64,
        signal: impl Fn(f64, f64) -> f64,
    ) -> Result<ScatterFrame> {
        let (w, h) = self.size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = if self.noise_sigma > 0.0 {
            Some(
                Normal::new(0.0, self.noise_sigma)
                    .map_err(|e| Error::InvalidSpec(e.to_string()))?,
            )
        } else {
            None
        };
        let mut data = Vec::with_capacity(w * h);
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - self.center.x;
                let dy = y as f64 - self.center.y;
                let d = dx.hypot(dy);
                let azimuth = dy.atan2(dx).to_degrees().rem_euclid(360.0);
                let mut v = self.background + signal(d, azimuth);
                if let Some(n) = &noise {
                    v += n.sample(&mut rng);
                }
                let in_gap = self.gaps.iter().any(|g| g.contains(x, y));
                if in_gap {
                    mask[y * w + x] = true;
                }
                if d < self.beamstop_radius || in_gap {
                    v = 0.0;
                }
                data.push(v.clamp(0.0, 1.0));
            }
        }
        let frame = ScatterFrame::new(id, w, h, data)?;
        if self.gaps.is_empty() {
            Ok(frame)
        } else {
            frame.with_gap_mask(mask)
        }
    }
}

pub fn generate_rings(spec: &RingSpec, size: (usize, usize), seed: u64) -> Result<ScatterFrame> {
    spec.validate(size)?;
    Canvas {
        size,
        center: spec.center,
        beamstop_radius: spec.beamstop_radius,
        gaps: &spec.gap_bands,
        background: spec.background_level,
        noise_sigma: spec.noise_sigma,
    }
    .render(format!("rings-{seed}"), seed, |d, _| spec.ring_intensity(d))
}

pub fn generate_peaks(spec: &PeakSpec, size: (usize, usize), seed: u64) -> Result<ScatterFrame> {
    spec.validate(size)?;
    Canvas {
        size,
        center: spec.center,
        beamstop_radius: spec.beamstop_radius,
        gaps: &spec.gap_bands,
        background: spec.background_level,
        noise_sigma: spec.noise_sigma,
    }
    .render(format!("peaks-{seed}"), seed, |d, az| {
        spec.peak_intensity(d, az)
    })
}

/// Background-only frame: level, beamstop, gaps and noise. `spec` must not
/// carry rings.
pub fn generate_background(
    spec: &RingSpec,
    size: (usize, usize),
    seed: u64,
) -> Result<ScatterFrame> {
    if !spec.rings.is_empty() {
        return Err(Error::InvalidSpec(
            "background frames take a ring spec without rings".into(),
        ));
    }
    spec.validate(size)?;
    Canvas {
        size,
        center: spec.center,
        beamstop_radius: spec.beamstop_radius,
        gaps: &spec.gap_bands,
        background: spec.background_level,
        noise_sigma: spec.noise_sigma,
    }
    .render(format!("background-{seed}"), seed, |_, _| 0.0)
}

// ── corruptions ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    BrokenArc,
    AzimuthalShear,
    AsymmetricIntensity,
    WavyGap,
    GhostTexture,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::BrokenArc,
        CorruptionKind::AzimuthalShear,
        CorruptionKind::AsymmetricIntensity,
        CorruptionKind::WavyGap,
        CorruptionKind::GhostTexture,
    ];

    /// Name of the realism score this corruption is built to lower.
    pub fn targeted_score(self) -> &'static str {
        match self {
            CorruptionKind::BrokenArc => "continuity",
            CorruptionKind::AzimuthalShear => "verticality",
            CorruptionKind::AsymmetricIntensity => "symmetry",
            CorruptionKind::WavyGap => "gap_straightness",
            CorruptionKind::GhostTexture => "symmetry",
        }
    }
}

/// Known geometry of the frame being corrupted. When absent it is estimated
/// from the frame itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionAnchor {
    pub center: Center,
    #[serde(default)]
    pub ring: Option<Ring>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// In `(0, 1]`.
    pub magnitude: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<CorruptionAnchor>,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, magnitude: f64, seed: u64) -> Self {
        Self {
            kind,
            magnitude,
            seed,
            anchor: None,
        }
    }

    pub fn anchored(mut self, anchor: CorruptionAnchor) -> Self {
        self.anchor = Some(anchor);
        self
    }
}

/// Maximum rotation of the sheared half-plane at magnitude 1, degrees.
pub const SHEAR_MAX_DEGREES: f64 = 20.0;
/// Peak sinusoidal gap displacement at magnitude 1, px.
pub const WAVY_GAP_MAX_PX: f64 = 8.0;
/// Correlation length of the ghost texture, px.
pub const GHOST_CELL_PX: usize = 8;

/// Applies one hallucination corruption:
///
/// * `BrokenArc` knocks an angular sector `magnitude * 180` degrees wide on a
///   ring down to the background level.
/// * `AzimuthalShear` rotates the lower half-plane by `magnitude * 20`
///   degrees about a pivot on the seam, misaligning the two halves.
/// * `AsymmetricIntensity` scales the lower half-plane by `1 - magnitude`.
/// * `WavyGap` displaces gap bands sinusoidally by up to `magnitude * 8` px.
/// * `GhostTexture` blends in band-limited noise with weight `magnitude`.
pub fn corrupt(frame: &ScatterFrame, spec: &CorruptionSpec) -> Result<ScatterFrame> {
    if !(spec.magnitude > 0.0 && spec.magnitude <= 1.0) {
        return Err(Error::InvalidSpec(format!(
            "corruption magnitude {} outside (0, 1]",
            spec.magnitude
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        CorruptionKind::WavyGap => wavy_gap(frame, spec.magnitude, &mut rng),
        CorruptionKind::GhostTexture => ghost_texture(frame, spec.magnitude, &mut rng),
        kind => {
            let anchor = match spec.anchor {
                Some(a) => a,
                None => estimate_anchor(frame)?,
            };
            match kind {
                CorruptionKind::BrokenArc => broken_arc(frame, &anchor, spec.magnitude, &mut rng),
                CorruptionKind::AzimuthalShear => azimuthal_shear(frame, &anchor, spec.magnitude),
                CorruptionKind::AsymmetricIntensity => {
                    let cy = anchor.center.y;
                    let factor = 1.0 - spec.magnitude;
                    Ok(map_pixels(frame, |_, y, v| {
                        if y as f64 > cy {
                            v * factor
                        } else {
                            v
                        }
                    }))
                }
                _ => unreachable!(),
            }
        }
    }
}

fn map_pixels(frame: &ScatterFrame, f: impl Fn(usize, usize, f64) -> f64) -> ScatterFrame {
    let w = frame.width();
    let data: Vec<f64> = frame
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| f(i % w, i / w, v).clamp(0.0, 1.0))
        .collect();
    rebuild(frame, data, frame.gap_mask().map(<[bool]>::to_vec))
}

fn rebuild(frame: &ScatterFrame, data: Vec<f64>, mask: Option<Vec<bool>>) -> ScatterFrame {
    let f = ScatterFrame::new(frame.id(), frame.width(), frame.height(), data)
        .expect("corruption keeps frame geometry and range");
    match mask {
        Some(m) => f.with_gap_mask(m).expect("mask geometry unchanged"),
        None => f,
    }
}

fn estimate_anchor(frame: &ScatterFrame) -> Result<CorruptionAnchor> {
    let search = physics::CenterSearch::for_frame(frame);
    let fit = physics::find_center(frame, search.window, search.coarse_step)?;
    let n_r = frame.width().min(frame.height()) / 2;
    let polar = physics::warp_polar(frame, fit.center, physics::DEFAULT_N_THETA, n_r)?;
    let profile = polar.radial_profile();
    let mut rings = physics::detect_ring_radii(&polar, physics::DEFAULT_RING_PROMINENCE);
    if rings.is_empty() {
        rings = profile
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| vec![i as f64])
            .unwrap_or_default();
    }
    let ring = rings
        .into_iter()
        .max_by(|a, b| {
            let pa = profile[*a as usize].unwrap_or(0.0);
            let pb = profile[*b as usize].unwrap_or(0.0);
            pa.total_cmp(&pb)
        })
        .map(|radius| Ring {
            radius,
            sigma: 2.5,
            amplitude: 1.0,
        });
    Ok(CorruptionAnchor {
        center: fit.center,
        ring,
    })
}

fn broken_arc(
    frame: &ScatterFrame,
    anchor: &CorruptionAnchor,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ScatterFrame> {
    let ring = anchor.ring.ok_or(Error::NoRings)?;
    let start: f64 = rng.random_range(0.0..360.0);
    let half_width = magnitude * 90.0;
    let band = 3.0 * ring.sigma + 1.0;
    let c = anchor.center;
    let floor = background_estimate(frame);
    Ok(map_pixels(frame, |x, y, v| {
        let dx = x as f64 - c.x;
        let dy = y as f64 - c.y;
        let d = dx.hypot(dy);
        let az = dy.atan2(dx).to_degrees();
        if v > 0.0
            && (d - ring.radius).abs() <= band
            && wrap_degrees(az - start).abs() <= half_width
        {
            floor
        } else {
            v
        }
    }))
}

/// Lower decile of the live (nonzero) pixels: the diffuse background under
/// the pattern.
fn background_estimate(frame: &ScatterFrame) -> f64 {
    let mut live: Vec<f64> = frame.data().iter().copied().filter(|v| *v > 0.0).collect();
    if live.is_empty() {
        return 0.0;
    }
    let k = live.len() / 10;
    *live.select_nth_unstable_by(k, f64::total_cmp).1
}

fn azimuthal_shear(
    frame: &ScatterFrame,
    anchor: &CorruptionAnchor,
    magnitude: f64,
) -> Result<ScatterFrame> {
    let (w, h) = (frame.width(), frame.height());
    let c = anchor.center;
    let pivot = Center::new(c.x - (w.min(h) / 2) as f64, c.y);
    let angle = (magnitude * SHEAR_MAX_DEGREES).to_radians();
    let (cos, sin) = (angle.cos(), angle.sin());
    let mut data = frame.data().to_vec();
    let mut mask = frame.gap_mask().map(<[bool]>::to_vec);
    for y in 0..h {
        if (y as f64) <= c.y {
            continue;
        }
        for x in 0..w {
            // inverse rotation: where did this output pixel come from
            let px = x as f64 - pivot.x;
            let py = y as f64 - pivot.y;
            let sx = (pivot.x + cos * px + sin * py).clamp(0.0, (w - 1) as f64);
            let sy = (pivot.y - sin * px + cos * py).clamp(0.0, (h - 1) as f64);
            let i = y * w + x;
            data[i] = frame.sample_bilinear(sx, sy).unwrap_or(0.0);
            if let (Some(m), Some(src)) = (mask.as_mut(), frame.gap_mask()) {
                let (nx, ny) = (sx.round() as usize, sy.round() as usize);
                m[i] = src[ny * w + nx];
                if m[i] {
                    data[i] = 0.0;
                }
            }
        }
    }
    Ok(rebuild(frame, data, mask.take()))
}

/// Contiguous runs of fully (>= 80 %) masked columns or rows.
fn mask_bands(
    mask: &[bool],
    w: usize,
    h: usize,
    orientation: GapOrientation,
) -> Vec<(usize, usize)> {
    let (n_lines, line_len) = match orientation {
        GapOrientation::Column => (w, h),
        GapOrientation::Row => (h, w),
    };
    let is_band = |line: usize| {
        let count = (0..line_len)
            .filter(|&k| match orientation {
                GapOrientation::Column => mask[k * w + line],
                GapOrientation::Row => mask[line * w + k],
            })
            .count();
        count as f64 >= 0.8 * line_len as f64
    };
    let mut bands = Vec::new();
    let mut start = None;
    for line in 0..=n_lines {
        let on = line < n_lines && is_band(line);
        match (on, start) {
            (true, None) => start = Some(line),
            (false, Some(s)) => {
                bands.push((s, line - 1));
                start = None;
            }
            _ => {}
        }
    }
    bands
}

fn wavy_gap(frame: &ScatterFrame, magnitude: f64, rng: &mut ChaCha8Rng) -> Result<ScatterFrame> {
    let mask = frame.gap_mask().ok_or(Error::MissingGapMask)?;
    let (w, h) = (frame.width(), frame.height());
    let amplitude = magnitude * WAVY_GAP_MAX_PX;
    let period = (w.min(h) as f64 / 4.0).max(16.0);
    let mut data = frame.data().to_vec();
    let mut new_mask = mask.to_vec();
    for orientation in [GapOrientation::Column, GapOrientation::Row] {
        let (n_along, n_across) = match orientation {
            GapOrientation::Column => (h, w),
            GapOrientation::Row => (w, h),
        };
        let idx = |along: usize, across: usize| match orientation {
            GapOrientation::Column => along * w + across,
            GapOrientation::Row => across * w + along,
        };
        for (lo, hi) in mask_bands(mask, w, h, orientation) {
            let phase: f64 = rng.random_range(0.0..TAU);
            for along in 0..n_along {
                let shift =
                    (amplitude * (TAU * along as f64 / period + phase).sin()).round() as i64;
                if shift == 0 {
                    continue;
                }
                // fill the vacated band by interpolating across it
                let left = lo.checked_sub(1).map(|a| data[idx(along, a)]);
                let right = (hi + 1 < n_across).then(|| data[idx(along, hi + 1)]);
                let (a, b) = match (left, right) {
                    (Some(a), Some(b)) => (a, b),
                    (Some(a), None) => (a, a),
                    (None, Some(b)) => (b, b),
                    (None, None) => (0.0, 0.0),
                };
                let span = (hi - lo + 2) as f64;
                for across in lo..=hi {
                    let t = (across + 1 - lo) as f64 / span;
                    data[idx(along, across)] = a + (b - a) * t;
                    new_mask[idx(along, across)] = false;
                }
                let new_lo = (lo as i64 + shift).clamp(0, n_across as i64 - 1) as usize;
                let new_hi = (hi as i64 + shift).clamp(0, n_across as i64 - 1) as usize;
                for across in new_lo..=new_hi {
                    data[idx(along, across)] = 0.0;
                    new_mask[idx(along, across)] = true;
                }
            }
        }
    }
    Ok(rebuild(frame, data, Some(new_mask)))
}

fn ghost_texture(
    frame: &ScatterFrame,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ScatterFrame> {
    let (w, h) = (frame.width(), frame.height());
    let gw = w / GHOST_CELL_PX + 2;
    let gh = h / GHOST_CELL_PX + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    let level = frame.data().iter().copied().fold(0.0, f64::max).max(0.1);
    let cell = GHOST_CELL_PX as f64;
    Ok(map_pixels(frame, |x, y, v| {
        if v == 0.0 {
            // dead pixels stay dead
            return 0.0;
        }
        let gx = x as f64 / cell;
        let gy = y as f64 / cell;
        let (ix, iy) = (gx as usize, gy as usize);
        let (fx, fy) = (gx - ix as f64, gy - iy as f64);
        let g = |i: usize, j: usize| grid[j * gw + i];
        let t = (g(ix, iy) * (1.0 - fx) + g(ix + 1, iy) * fx) * (1.0 - fy)
            + (g(ix, iy + 1) * (1.0 - fx) + g(ix + 1, iy + 1) * fx) * fy;
        (1.0 - magnitude) * v + magnitude * level * t
    }))
}

// ── corpus ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanCorrupted {
    pub clean: usize,
    pub corrupted: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternCounts {
    pub rings: usize,
    pub peaks: usize,
    pub background: usize,
}

/// Corpus recipe, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub width: usize,
    pub height: usize,
    pub rings: CleanCorrupted,
    pub peaks: CleanCorrupted,
    pub background: CleanCorrupted,
    /// Clean frames tagged as experimental (beamline stand-ins).
    pub experimental: PatternCounts,
    /// Corruption magnitudes are drawn uniformly from this range.
    pub magnitude: (f64, f64),
    pub noise_max: f64,
    /// Probability that a clean frame carries a detector gap.
    pub gap_probability: f64,
    /// Restrict corruptions to these kinds (all applicable kinds if empty).
    pub kinds: Vec<CorruptionKind>,
    pub bit_depth: u32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            rings: CleanCorrupted::default(),
            peaks: CleanCorrupted::default(),
            background: CleanCorrupted::default(),
            experimental: PatternCounts::default(),
            magnitude: (0.3, 1.0),
            noise_max: 0.004,
            gap_probability: 0.5,
            kinds: Vec::new(),
            bit_depth: 16,
        }
    }
}

impl CorpusConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("corpus config", e))
    }

    pub fn read_toml(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::InvalidSpec(
                "corpus frames must be at least 64x64".into(),
            ));
        }
        let (lo, hi) = self.magnitude;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "magnitude range {lo}..{hi} invalid"
            )));
        }
        BitDepth::from_bits(self.bit_depth)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "lowercase")]
pub enum FrameSpec {
    Rings(RingSpec),
    Peaks(PeakSpec),
    Background(RingSpec),
}

impl FrameSpec {
    pub fn pattern(&self) -> PatternClass {
        match self {
            FrameSpec::Rings(_) => PatternClass::Rings,
            FrameSpec::Peaks(_) => PatternClass::Peaks,
            FrameSpec::Background(_) => PatternClass::Background,
        }
    }

    pub fn center(&self) -> Center {
        match self {
            FrameSpec::Rings(s) | FrameSpec::Background(s) => s.center,
            FrameSpec::Peaks(s) => s.center,
        }
    }

    pub fn gap_bands(&self) -> &[GapBand] {
        match self {
            FrameSpec::Rings(s) | FrameSpec::Background(s) => &s.gap_bands,
            FrameSpec::Peaks(s) => &s.gap_bands,
        }
    }

    pub fn render(&self, size: (usize, usize), seed: u64) -> Result<ScatterFrame> {
        match self {
            FrameSpec::Rings(s) => generate_rings(s, size, seed),
            FrameSpec::Peaks(s) => generate_peaks(s, size, seed),
            FrameSpec::Background(s) => generate_background(s, size, seed),
        }
    }

    /// Brightest ring, when the pattern has rings.
    pub fn primary_ring(&self) -> Option<Ring> {
        match self {
            FrameSpec::Rings(s) => s
                .rings
                .iter()
                .copied()
                .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)),
            FrameSpec::Peaks(s) => s.peaks.first().map(|p| Ring {
                radius: p.radius,
                sigma: p.radial_sigma,
                amplitude: p.amplitude,
            }),
            FrameSpec::Background(_) => None,
        }
    }
}

/// Ground truth for one corpus frame (the `truth.jsonl` sidecar row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub origin: Origin,
    pub verdict: Verdict,
    pub center: Center,
    pub render_seed: u64,
    pub spec: FrameSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionSpec>,
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub frame: ScatterFrame,
    pub truth: TruthRecord,
}

/// Parameter draws for one frame; a gap is forced when `needs_gap`.
pub fn random_frame_spec(
    pattern: PatternClass,
    size: (usize, usize),
    noise_max: f64,
    gap_probability: f64,
    needs_gap: bool,
    rng: &mut ChaCha8Rng,
) -> FrameSpec {
    let (w, h) = size;
    let side = w.min(h) as f64;
    let max_offset = (side / 16.0).floor();
    let center = Center::new(
        (w / 2) as f64 + rng.random_range(-max_offset..=max_offset),
        (h / 2) as f64 + rng.random_range(-max_offset..=max_offset),
    );
    let beamstop_radius = rng.random_range(side / 32.0..=side / 20.0);
    let background_level = rng.random_range(0.01..=0.06);
    let noise_sigma = if noise_max > 0.0 {
        rng.random_range(0.0..=noise_max)
    } else {
        0.0
    };
    let gap_bands = if needs_gap || rng.random_bool(gap_probability.clamp(0.0, 1.0)) {
        let width = rng.random_range(2..=4usize);
        // keep the band clear of the beamstop
        let clearance = beamstop_radius + 6.0;
        let left_ok = center.x - clearance - width as f64 > 8.0;
        let go_left = left_ok && rng.random_bool(0.5);
        let start = if go_left {
            let hi = (center.x - clearance) as usize - width;
            rng.random_range(8..=hi.max(8))
        } else {
            let lo = (center.x + clearance) as usize;
            rng.random_range(lo..=(w - 8 - width).max(lo))
        };
        vec![GapBand {
            orientation: GapOrientation::Column,
            start,
            width,
        }]
    } else {
        Vec::new()
    };
    let max_radius = 0.42 * side;
    let min_radius = beamstop_radius + 0.12 * side;
    match pattern {
        PatternClass::Rings => {
            let n = rng.random_range(1..=3usize);
            let mut rings: Vec<Ring> = Vec::new();
            let mut attempts = 0;
            while rings.len() < n && attempts < 50 {
                attempts += 1;
                let radius = rng.random_range(min_radius..max_radius);
                if rings.iter().any(|r| (r.radius - radius).abs() < 12.0) {
                    continue;
                }
                rings.push(Ring {
                    radius,
                    sigma: rng.random_range(1.5..3.0),
                    amplitude: rng.random_range(0.35..=1.0),
                });
            }
            FrameSpec::Rings(RingSpec {
                center,
                rings,
                beamstop_radius,
                gap_bands,
                background_level,
                noise_sigma,
            })
        }
        PatternClass::Peaks => {
            let n = rng.random_range(2..=4usize);
            let peaks = (0..n)
                .map(|_| Peak {
                    radius: rng.random_range(min_radius..max_radius),
                    azimuth: rng.random_range(0.0..360.0),
                    angular_sigma: rng.random_range(3.0..8.0),
                    radial_sigma: rng.random_range(1.5..3.0),
                    amplitude: rng.random_range(0.4..=1.0),
                })
                .collect();
            FrameSpec::Peaks(PeakSpec {
                center,
                peaks,
                symmetry_pairs: true,
                beamstop_radius,
                gap_bands,
                background_level,
                noise_sigma,
            })
        }
        PatternClass::Background => FrameSpec::Background(RingSpec {
            center,
            rings: Vec::new(),
            beamstop_radius,
            gap_bands,
            background_level,
            noise_sigma,
        }),
    }
}

fn applicable_kinds(pattern: PatternClass, allowed: &[CorruptionKind]) -> Vec<CorruptionKind> {
    let natural: &[CorruptionKind] = match pattern {
        PatternClass::Rings => &CorruptionKind::ALL,
        PatternClass::Peaks => &[
            CorruptionKind::AzimuthalShear,
            CorruptionKind::AsymmetricIntensity,
            CorruptionKind::WavyGap,
            CorruptionKind::GhostTexture,
        ],
        PatternClass::Background => &[
            CorruptionKind::AsymmetricIntensity,
            CorruptionKind::WavyGap,
            CorruptionKind::GhostTexture,
        ],
    };
    natural
        .iter()
        .copied()
        .filter(|k| allowed.is_empty() || allowed.contains(k))
        .collect()
}

/// Builds a corpus in memory. Frame ids are `<pattern>-<gen|exp>-<nnnn>`.
pub fn synthesize_corpus(config: &CorpusConfig, seed: u64) -> Result<Vec<CorpusItem>> {
    config.validate()?;
    let size = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for pattern in PatternClass::ALL {
        let (counts, n_exp) = match pattern {
            PatternClass::Rings => (config.rings, config.experimental.rings),
            PatternClass::Peaks => (config.peaks, config.experimental.peaks),
            PatternClass::Background => (config.background, config.experimental.background),
        };
        let kinds = applicable_kinds(pattern, &config.kinds);
        if counts.corrupted > 0 && kinds.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "no allowed corruption applies to {pattern} frames"
            )));
        }
        let plan = (0..n_exp)
            .map(|_| (Origin::Experimental, None))
            .chain((0..counts.clean).map(|_| (Origin::Generated, None)))
            .chain(
                (0..counts.corrupted).map(|i| (Origin::Generated, Some(kinds[i % kinds.len()]))),
            );
        let (mut n_gen, mut n_exp_idx) = (0usize, 0usize);
        for (origin, kind) in plan {
            let index = match origin {
                Origin::Generated => {
                    n_gen += 1;
                    n_gen - 1
                }
                Origin::Experimental => {
                    n_exp_idx += 1;
                    n_exp_idx - 1
                }
            };
            let tag = match origin {
                Origin::Generated => "gen",
                Origin::Experimental => "exp",
            };
            let id = format!("{pattern}-{tag}-{index:04}");
            let needs_gap = kind == Some(CorruptionKind::WavyGap);
            let spec = random_frame_spec(
                pattern,
                size,
                config.noise_max,
                config.gap_probability,
                needs_gap,
                &mut rng,
            );
            let render_seed: u64 = rng.random();
            let clean = spec.render(size, render_seed)?.with_id(id.clone());
            let (frame, corruption, verdict) = match kind {
                None => (clean, None, Verdict::Realistic),
                Some(kind) => {
                    let (lo, hi) = config.magnitude;
                    let magnitude = if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    };
                    let c = CorruptionSpec::new(kind, magnitude, rng.random()).anchored(
                        CorruptionAnchor {
                            center: spec.center(),
                            ring: spec.primary_ring(),
                        },
                    );
                    (corrupt(&clean, &c)?, Some(c), Verdict::Fake)
                }
            };
            items.push(CorpusItem {
                frame,
                truth: TruthRecord {
                    id,
                    origin,
                    verdict,
                    center: spec.center(),
                    render_seed,
                    spec,
                    corruption,
                },
            });
        }
    }
    Ok(items)
}

/// Timestamp stamped on oracle labels so corpora are reproducible.
pub fn oracle_timestamp() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

pub const ORACLE_ANNOTATOR: &str = "oracle";

/// Writes `images/*.png`, `manifest.jsonl`, `labels.jsonl` and `truth.jsonl`
/// under `out_dir` and returns the manifest and ground-truth labels.
pub fn generate_corpus(
    config: &CorpusConfig,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<(DatasetManifest, Vec<LabelRecord>)> {
    let out_dir = out_dir.as_ref();
    let items = synthesize_corpus(config, seed)?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let depth = BitDepth::from_bits(config.bit_depth)?;
    let mut entries = Vec::with_capacity(items.len());
    let mut labels = Vec::with_capacity(items.len());
    let mut truth = Vec::with_capacity(items.len());
    for item in items {
        let rel = Path::new("images").join(format!("{}.png", item.truth.id));
        save_frame(&item.frame, out_dir.join(&rel), depth)?;
        entries.push(ManifestEntry {
            path: rel,
            origin: item.truth.origin,
            pattern: item.truth.spec.pattern(),
            caption: item
                .truth
                .corruption
                .map(|c| format!("{:?} corruption", c.kind)),
        });
        labels.push(LabelRecord {
            image_id: item.truth.id.clone(),
            verdict: item.truth.verdict,
            source: LabelSource::Human,
            round: 0,
            annotator: ORACLE_ANNOTATOR.to_string(),
            timestamp: oracle_timestamp(),
        });
        truth.push(item.truth);
    }
    let manifest = DatasetManifest::new(entries)?;
    manifest.write_jsonl(out_dir.join("manifest.jsonl"))?;
    write_jsonl(out_dir.join("labels.jsonl"), &labels)?;
    write_jsonl(out_dir.join("truth.jsonl"), &truth)?;
    Ok((manifest, labels))
}

/// Angle (radians) of a point about a center, in `[0, 2pi)`.
pub fn azimuth_of(center: Center, x: f64, y: f64) -> f64 {
    (y - center.y).atan2(x - center.x).rem_euclid(2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_ring(center: Center) -> RingSpec {
        RingSpec {
            center,
            rings: vec![Ring {
                radius: 80.0,
                sigma: 2.0,
                amplitude: 1.0,
            }],
            beamstop_radius: 8.0,
            gap_bands: Vec::new(),
            background_level: 0.0,
            noise_sigma: 0.0,
        }
    }

    fn peak_spec() -> PeakSpec {
        PeakSpec {
            center: Center::new(64.0, 64.0),
            peaks: vec![Peak {
                radius: 40.0,
                azimuth: 0.0,
                angular_sigma: 5.0,
                radial_sigma: 2.0,
                amplitude: 0.9,
            }],
            symmetry_pairs: false,
            beamstop_radius: 5.0,
            gap_bands: Vec::new(),
            background_level: 0.03,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn ring_profile_follows_the_gaussian() {
        let spec = one_ring(Center::new(100.0, 100.0));
        let frame = generate_rings(&spec, (200, 200), 0).unwrap();
        assert!(frame.get(180, 100) >= 0.99);
        let expected = (-100.0f64 / 8.0).exp();
        assert!((spec.ring_intensity(90.0) - expected).abs() < 1e-12);
        assert!((expected - 3.7e-6).abs() < 1e-7);
        assert!((frame.get(190, 100) - expected).abs() < 1e-12);
    }

    #[test]
    fn generators_are_deterministic() {
        let mut spec = one_ring(Center::new(100.3, 98.9));
        spec.noise_sigma = 0.01;
        let a = generate_rings(&spec, (200, 200), 42).unwrap();
        let b = generate_rings(&spec, (200, 200), 42).unwrap();
        let c = generate_rings(&spec, (200, 200), 43).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
        let mut p = peak_spec();
        p.noise_sigma = 0.01;
        assert_eq!(
            generate_peaks(&p, (128, 128), 5).unwrap().data(),
            generate_peaks(&p, (128, 128), 5).unwrap().data()
        );
    }

    #[test]
    fn paired_peaks_are_point_symmetric() {
        let mut spec = peak_spec();
        spec.symmetry_pairs = true;
        spec.peaks.push(Peak {
            radius: 25.0,
            azimuth: 133.0,
            angular_sigma: 7.0,
            radial_sigma: 1.5,
            amplitude: 0.5,
        });
        // center on the pixel grid midpoint so the half-turn maps pixels to pixels
        spec.center = Center::new(63.5, 63.5);
        let frame = generate_peaks(&spec, (128, 128), 1).unwrap();
        let data = frame.data();
        for (i, v) in data.iter().enumerate() {
            assert!((v - data[data.len() - 1 - i]).abs() < 1e-6);
        }
    }

    #[test]
    fn single_peak_vanishes_off_axis() {
        let spec = peak_spec();
        let frame = generate_peaks(&spec, (128, 128), 1).unwrap();
        // azimuth 90 degrees at radius 40: (64, 104)
        assert!(frame.get(64, 104) < 1e-8 + 0.03);
        assert!(spec.peak_intensity(40.0, 90.0) < 1e-8);
        assert!(frame.get(104, 64) > 0.9);
    }

    #[test]
    fn background_frames_are_flat_outside_the_beamstop() {
        let spec = RingSpec {
            center: Center::new(40.0, 40.0),
            rings: Vec::new(),
            beamstop_radius: 4.0,
            gap_bands: vec![GapBand {
                orientation: GapOrientation::Row,
                start: 60,
                width: 2,
            }],
            background_level: 0.05,
            noise_sigma: 0.0,
        };
        let frame = generate_background(&spec, (80, 80), 3).unwrap();
        for y in 0..80 {
            for x in 0..80 {
                let d = (x as f64 - 40.0).hypot(y as f64 - 40.0);
                let v = frame.get(x, y);
                if d < 4.0 || (60..62).contains(&y) {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, 0.05);
                }
            }
        }
        assert!(frame.is_gap(3, 61));
        assert_eq!(
            generate_background(&spec, (80, 80), 3).unwrap().data(),
            frame.data()
        );
        assert!(generate_background(&one_ring(Center::new(40.0, 40.0)), (80, 80), 0).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let c = Center::new(50.0, 50.0);
        let mut s = one_ring(c);
        s.rings[0].amplitude = 1.5;
        assert!(generate_rings(&s, (200, 200), 0).is_err());
        let mut s = one_ring(c);
        s.beamstop_radius = 90.0;
        assert!(generate_rings(&s, (200, 200), 0).is_err());
        let mut s = one_ring(c);
        s.background_level = 0.3;
        assert!(generate_rings(&s, (200, 200), 0).is_err());
        let mut p = peak_spec();
        p.peaks[0].azimuth = 360.0;
        assert!(generate_peaks(&p, (128, 128), 0).is_err());
        let mut s = one_ring(c);
        s.gap_bands.push(GapBand {
            orientation: GapOrientation::Column,
            start: 199,
            width: 2,
        });
        assert!(generate_rings(&s, (200, 200), 0).is_err());
    }

    fn corrupted(kind: CorruptionKind, magnitude: f64) -> (ScatterFrame, ScatterFrame) {
        let c = Center::new(100.0, 100.0);
        let mut spec = one_ring(c);
        spec.background_level = 0.02;
        spec.gap_bands.push(GapBand {
            orientation: GapOrientation::Column,
            start: 150,
            width: 3,
        });
        let frame = generate_rings(&spec, (200, 200), 0).unwrap();
        let cs = CorruptionSpec::new(kind, magnitude, 4).anchored(CorruptionAnchor {
            center: c,
            ring: Some(spec.rings[0]),
        });
        let out = corrupt(&frame, &cs).unwrap();
        (frame, out)
    }

    #[test]
    fn vanishing_magnitude_is_the_identity() {
        for kind in CorruptionKind::ALL {
            let (frame, out) = corrupted(kind, 1e-9);
            let worst = frame
                .data()
                .iter()
                .zip(out.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{kind:?}: {worst}");
        }
    }

    #[test]
    fn corruptions_are_deterministic() {
        for kind in CorruptionKind::ALL {
            assert_eq!(corrupted(kind, 0.6).1.data(), corrupted(kind, 0.6).1.data());
        }
    }

    #[test]
    fn broken_arc_removes_a_sixth_of_the_ring() {
        let (_, out) = corrupted(CorruptionKind::BrokenArc, 1.0 / 3.0);
        let occupied = (0..360)
            .filter(|deg| {
                let a = (*deg as f64 + 0.5).to_radians();
                let v = out
                    .sample_bilinear(100.0 + 80.0 * a.cos(), 100.0 + 80.0 * a.sin())
                    .unwrap();
                v >= 0.5
            })
            .count();
        // the gap band crosses the ring too; count it as occupied
        let gap_bins = (0..360)
            .filter(|deg| {
                let a = (*deg as f64 + 0.5).to_radians();
                let x = 100.0 + 80.0 * a.cos();
                (149.0..154.0).contains(&x)
            })
            .count();
        let frac = (occupied + gap_bins) as f64 / 360.0;
        assert!((frac - 5.0 / 6.0).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn asymmetric_intensity_dims_the_lower_half() {
        let (frame, out) = corrupted(CorruptionKind::AsymmetricIntensity, 0.8);
        assert_eq!(out.get(100, 20), frame.get(100, 20));
        assert!((out.get(100, 180) - 0.2 * frame.get(100, 180)).abs() < 1e-12);
    }

    #[test]
    fn wavy_gap_needs_a_gap_and_moves_it() {
        let frame = generate_rings(&one_ring(Center::new(100.0, 100.0)), (200, 200), 0).unwrap();
        let cs = CorruptionSpec::new(CorruptionKind::WavyGap, 0.5, 1);
        assert!(matches!(corrupt(&frame, &cs), Err(Error::MissingGapMask)));
        let (before, after) = corrupted(CorruptionKind::WavyGap, 1.0);
        assert_ne!(before.gap_mask(), after.gap_mask());
        let gap_count = |f: &ScatterFrame| f.gap_mask().unwrap().iter().filter(|m| **m).count();
        assert_eq!(gap_count(&before), gap_count(&after));
    }

    #[test]
    fn magnitude_must_be_in_range() {
        let frame = ScatterFrame::constant("c", 64, 64, 0.5).unwrap();
        for m in [0.0, -0.1, 1.5, f64::NAN] {
            let cs = CorruptionSpec::new(CorruptionKind::GhostTexture, m, 0);
            assert!(corrupt(&frame, &cs).is_err());
        }
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let config = CorpusConfig {
            width: 64,
            height: 64,
            rings: CleanCorrupted {
                clean: 10,
                corrupted: 10,
            },
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let (manifest, labels) = generate_corpus(&config, dir.path(), 7).unwrap();
        assert_eq!(manifest.len(), 20);
        assert_eq!(labels.len(), 20);
        let realistic = labels
            .iter()
            .filter(|l| l.verdict == Verdict::Realistic)
            .count();
        assert_eq!(realistic, 10);
        assert!(labels
            .iter()
            .all(|l| l.source == LabelSource::Human && l.annotator == "oracle"));
        let pngs = std::fs::read_dir(dir.path().join("images"))
            .unwrap()
            .count();
        assert_eq!(pngs, 20);

        let truth: Vec<TruthRecord> =
            crate::dataset::read_jsonl(dir.path().join("truth.jsonl")).unwrap();
        assert_eq!(truth.len(), 20);
        assert!(truth.iter().all(|t| t.center == t.spec.center()));

        let again = tempfile::tempdir().unwrap();
        generate_corpus(&config, again.path(), 7).unwrap();
        for name in ["manifest.jsonl", "labels.jsonl", "truth.jsonl"] {
            assert_eq!(
                std::fs::read(dir.path().join(name)).unwrap(),
                std::fs::read(again.path().join(name)).unwrap()
            );
        }
        for e in manifest.entries() {
            assert_eq!(
                std::fs::read(dir.path().join(&e.path)).unwrap(),
                std::fs::read(again.path().join(&e.path)).unwrap()
            );
        }
    }

    #[test]
    fn corpus_config_reads_toml() {
        let config = CorpusConfig::from_toml_str(
            "width = 96\nheight = 96\nkinds = [\"broken_arc\"]\n[rings]\nclean = 3\ncorrupted = 2\n[experimental]\nrings = 1\n",
        )
        .unwrap();
        assert_eq!(config.rings.clean, 3);
        assert_eq!(config.experimental.rings, 1);
        assert_eq!(config.kinds, vec![CorruptionKind::BrokenArc]);
        let items = synthesize_corpus(&config, 1).unwrap();
        assert_eq!(items.len(), 6);
        assert_eq!(items[0].truth.origin, Origin::Experimental);
        assert!(items
            .iter()
            .filter_map(|i| i.truth.corruption)
            .all(|c| c.kind == CorruptionKind::BrokenArc));
        assert!(CorpusConfig::from_toml_str("width = \"wide\"").is_err());
    }

    #[test]
    fn wrap_degrees_range() {
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
        assert_eq!(wrap_degrees(540.0), -180.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn noise_free_rings_survive_point_reflection(
            hx in 120u32..136,
            hy in 120u32..136,
            radius in 25.0f64..50.0,
        ) {
            // half-pixel lattice: the reflection maps pixels onto pixels
            let (cx, cy) = (hx as f64 / 2.0, hy as f64 / 2.0);
            let spec = RingSpec {
                center: Center::new(cx, cy),
                rings: vec![Ring { radius, sigma: 2.0, amplitude: 0.8 }],
                beamstop_radius: 5.0,
                gap_bands: Vec::new(),
                background_level: 0.02,
                noise_sigma: 0.0,
            };
            let frame = generate_rings(&spec, (128, 128), 0).unwrap();
            let (mut err, mut n) = (0.0, 0usize);
            for y in 0..128 {
                for x in 0..128 {
                    let d = (x as f64 - cx).hypot(y as f64 - cy);
                    if d < 8.0 {
                        continue;
                    }
                    let (rx, ry) = (2.0 * cx - x as f64, 2.0 * cy - y as f64);
                    if let Some(v) = frame.sample_bilinear(rx, ry) {
                        if v > 0.0 {
                            err += (frame.get(x, y) - v).abs();
                            n += 1;
                        }
                    }
                }
            }
            prop_assert!(err / n as f64 <= 1e-3, "mean abs error {}", err / n as f64);
        }
    }
}

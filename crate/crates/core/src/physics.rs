//! Diffraction-law realism checks.
//!
//! A frame is resampled into (angle, radius) space about its beam center.
//! True Debye-Scherrer rings become straight vertical ridges there, so most
//! hallucinations (broken arcs, misaligned halves, one-sided intensity) show
//! up as simple statistics of the polar image. Detector gaps are checked in
//! Cartesian space, where they must be straight lines.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dataset::PatternClass;
use crate::error::{Error, Result};
use crate::frame::{Center, ScatterFrame};

pub const DEFAULT_N_THETA: usize = 360;
pub const MIN_POLAR_BINS: usize = 8;
/// Relative-difference regularizer of the symmetry score.
pub const SYMMETRY_EPSILON: f64 = 1e-3;
/// Ridge-position spread (bins) at which verticality falls to 1/e.
pub const VERTICALITY_SCALE: f64 = 2.0;
/// Gap-line RMS residual (px) at which straightness falls to 1/e.
pub const GAP_RESIDUAL_SCALE: f64 = 1.5;
pub const DEFAULT_RING_PROMINENCE: f64 = 0.05;
/// Half-width, in radial bins, of the ridge search window around a ring.
pub const RIDGE_WINDOW: usize = 5;
/// Intensities at or below this level count as dead pixels.
pub const ZERO_LEVEL: f64 = 1e-6;
/// A gap must span at least this fraction of the frame extent.
pub const GAP_MIN_SPAN: f64 = 0.8;
const MIN_PAIR_COVERAGE: f64 = 0.1;
const FLAT_OBJECTIVE: f64 = 1e-12;

// ── polar image ──────────────────────────────────────────────────────────────

/// Frame resampled on a regular (angle, radius) grid. Rows are angular bins
/// starting at 0 degrees (the +x axis, turning toward +y); columns are radii
/// in whole pixels starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    n_theta: usize,
    n_r: usize,
    values: Vec<f64>,
    occupied: Vec<bool>,
    center: Center,
}

impl PolarImage {
    /// Builds a polar image from raw row-major (angle, radius) grids.
    pub fn from_parts(
        n_theta: usize,
        n_r: usize,
        values: Vec<f64>,
        occupied: Vec<bool>,
        center: Center,
    ) -> Result<Self> {
        check_bins(n_theta, n_r)?;
        for len in [values.len(), occupied.len()] {
            if len != n_theta * n_r {
                return Err(Error::DimensionMismatch {
                    expected: n_theta * n_r,
                    actual: len,
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polar values must be finite".into()));
        }
        Ok(Self {
            n_theta,
            n_r,
            values,
            occupied,
            center,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn center(&self) -> Center {
        self.center
    }

    pub fn max_radius(&self) -> f64 {
        (self.n_r - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    #[inline]
    pub fn get(&self, theta: usize, r: usize) -> f64 {
        self.values[theta * self.n_r + r]
    }

    #[inline]
    pub fn is_occupied(&self, theta: usize, r: usize) -> bool {
        self.occupied[theta * self.n_r + r]
    }

    /// Occupied value or `None`.
    #[inline]
    pub fn at(&self, theta: usize, r: usize) -> Option<f64> {
        let i = theta * self.n_r + r;
        self.occupied[i].then_some(self.values[i])
    }

    /// Mean over occupied angular bins at each radius.
    pub fn radial_profile(&self) -> Vec<Option<f64>> {
        let mut sum = vec![0.0; self.n_r];
        let mut count = vec![0usize; self.n_r];
        for t in 0..self.n_theta {
            for r in 0..self.n_r {
                if let Some(v) = self.at(t, r) {
                    sum[r] += v;
                    count[r] += 1;
                }
            }
        }
        sum.into_iter()
            .zip(count)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    /// Copy with every angular row that is not fully occupied over
    /// `[lo, hi]` masked out entirely.
    pub fn rows_fully_occupied(&self, lo: usize, hi: usize) -> PolarImage {
        let mut out = self.clone();
        for t in 0..self.n_theta {
            if (lo..=hi.min(self.n_r - 1)).any(|r| !self.is_occupied(t, r)) {
                out.occupied[t * self.n_r..(t + 1) * self.n_r].fill(false);
            }
        }
        out
    }

    /// Polar grid as a displayable frame (rows = angle, columns = radius).
    pub fn to_frame(&self) -> Result<ScatterFrame> {
        let data = self
            .values
            .iter()
            .zip(&self.occupied)
            .map(|(&v, &o)| if o { v } else { 0.0 })
            .collect();
        ScatterFrame::from_clamped("polar", self.n_r, self.n_theta, data)
    }
}

/// Pixels excluded from polar sampling: detector gaps plus the beamstop.
#[derive(Debug, Clone)]
pub struct InvalidMask {
    width: usize,
    cells: Vec<bool>,
}

impl InvalidMask {
    /// Gap mask (declared, or inferred from dead straight bands) joined with
    /// the beamstop blob nearest `near`.
    pub fn build(frame: &ScatterFrame, near: Center, max_dist: f64) -> Self {
        let mut cells = match frame.gap_mask() {
            Some(m) => m.to_vec(),
            None => infer_gap_mask(frame).unwrap_or_else(|| vec![false; frame.data().len()]),
        };
        if let Some(stop) = detect_beamstop(frame, &cells, near, max_dist) {
            for (c, s) in cells.iter_mut().zip(stop) {
                *c |= s;
            }
        }
        Self {
            width: frame.width(),
            cells,
        }
    }

    pub fn none(frame: &ScatterFrame) -> Self {
        Self {
            width: frame.width(),
            cells: vec![false; frame.data().len()],
        }
    }

    #[inline]
    fn is_set(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }
}

struct AngleTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl AngleTable {
    fn new(n_theta: usize) -> Self {
        let step = std::f64::consts::TAU / n_theta as f64;
        Self {
            cos: (0..n_theta).map(|t| (t as f64 * step).cos()).collect(),
            sin: (0..n_theta).map(|t| (t as f64 * step).sin()).collect(),
        }
    }
}

/// Bilinear sample that refuses to mix in invalid pixels.
#[inline]
fn masked_sample(frame: &ScatterFrame, invalid: &InvalidMask, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (frame.width(), frame.height());
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = (x as usize).min(w - 2);
    let y0 = (y as usize).min(h - 2);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let weights = [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ];
    let data = frame.data();
    let mut acc = 0.0;
    for (dx, dy, wgt) in weights {
        if wgt > 0.0 {
            if invalid.is_set(x0 + dx, y0 + dy) {
                return None;
            }
            acc += wgt * data[(y0 + dy) * w + x0 + dx];
        }
    }
    Some(acc)
}

fn check_bins(n_theta: usize, n_r: usize) -> Result<()> {
    if n_theta < MIN_POLAR_BINS || n_r < MIN_POLAR_BINS {
        return Err(Error::InvalidInput(format!(
            "polar grid {n_theta}x{n_r} is below the {MIN_POLAR_BINS}-bin minimum"
        )));
    }
    Ok(())
}

/// Resamples `frame` about `center`; beamstop and gap pixels are masked.
pub fn warp_polar(
    frame: &ScatterFrame,
    center: Center,
    n_theta: usize,
    n_r: usize,
) -> Result<PolarImage> {
    let invalid = InvalidMask::build(frame, center, default_beamstop_reach(frame));
    warp_polar_masked(frame, &invalid, center, n_theta, n_r)
}

pub fn warp_polar_masked(
    frame: &ScatterFrame,
    invalid: &InvalidMask,
    center: Center,
    n_theta: usize,
    n_r: usize,
) -> Result<PolarImage> {
    check_bins(n_theta, n_r)?;
    if !(center.x >= 0.0
        && center.y >= 0.0
        && center.x <= (frame.width() - 1) as f64
        && center.y <= (frame.height() - 1) as f64)
    {
        return Err(Error::InvalidInput(format!(
            "center ({}, {}) lies outside the frame",
            center.x, center.y
        )));
    }
    let angles = AngleTable::new(n_theta);
    let mut values = vec![0.0; n_theta * n_r];
    let mut occupied = vec![false; n_theta * n_r];
    for t in 0..n_theta {
        let (c, s) = (angles.cos[t], angles.sin[t]);
        for r in 0..n_r {
            let rf = r as f64;
            if let Some(v) = masked_sample(frame, invalid, center.x + rf * c, center.y + rf * s) {
                values[t * n_r + r] = v;
                occupied[t * n_r + r] = true;
            }
        }
    }
    Ok(PolarImage {
        n_theta,
        n_r,
        values,
        occupied,
        center,
    })
}

fn default_beamstop_reach(frame: &ScatterFrame) -> f64 {
    frame.width().min(frame.height()) as f64 / 4.0
}

// ── beamstop and gap detection ───────────────────────────────────────────────

/// 8-connected components of pixels selected by `select`.
fn components(width: usize, height: usize, select: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut label = vec![false; width * height];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..width * height {
        if label[start] || !select(start) {
            continue;
        }
        label[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = ((i % width) as isize, (i / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if !label[j] && select(j) {
                        label[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Largest exactly-zero blob (outside `exclude`) that contains or comes within
/// `max_dist` of `near`.
pub fn detect_beamstop(
    frame: &ScatterFrame,
    exclude: &[bool],
    near: Center,
    max_dist: f64,
) -> Option<Vec<bool>> {
    let (w, h) = (frame.width(), frame.height());
    let data = frame.data();
    let comps = components(w, h, |i| data[i] == 0.0 && !exclude[i]);
    let best = comps
        .into_iter()
        .filter(|c| {
            c.iter().any(|&i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (x - near.x).hypot(y - near.y) <= max_dist
            })
        })
        .max_by_key(|c| c.len())?;
    let mut mask = vec![false; w * h];
    for i in best {
        mask[i] = true;
    }
    Some(mask)
}

/// Centroid of the beamstop blob, if one is found.
pub fn beamstop_center(frame: &ScatterFrame, near: Center, max_dist: f64) -> Option<Center> {
    let gaps = match frame.gap_mask() {
        Some(m) => m.to_vec(),
        None => infer_gap_mask(frame).unwrap_or_else(|| vec![false; frame.data().len()]),
    };
    let stop = detect_beamstop(frame, &gaps, near, max_dist)?;
    let w = frame.width();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, _) in stop.iter().enumerate().filter(|(_, s)| **s) {
        sx += (i % w) as f64;
        sy += (i / w) as f64;
        n += 1;
    }
    Some(Center::new(sx / n as f64, sy / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GapAxis {
    /// Runs top to bottom; one centroid per row.
    Vertical,
    /// Runs left to right; one centroid per column.
    Horizontal,
}

struct GapComponent {
    pixels: Vec<usize>,
    axis: GapAxis,
}

fn gap_components(frame: &ScatterFrame) -> Vec<GapComponent> {
    let (w, h) = (frame.width(), frame.height());
    let data = frame.data();
    let mut out = Vec::new();
    for comp in components(w, h, |i| data[i] <= ZERO_LEVEL) {
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (w, 0, h, 0);
        for &i in &comp {
            let (x, y) = (i % w, i / w);
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
        let span_y = (y_hi - y_lo + 1) as f64;
        let span_x = (x_hi - x_lo + 1) as f64;
        // mean thickness across the run direction
        let thick_v = comp.len() as f64 / span_y;
        let thick_h = comp.len() as f64 / span_x;
        let vertical = span_y >= GAP_MIN_SPAN * h as f64 && thick_v <= 0.25 * w as f64;
        let horizontal = span_x >= GAP_MIN_SPAN * w as f64 && thick_h <= 0.25 * h as f64;
        let axis = match (vertical, horizontal) {
            (true, true) if thick_h < thick_v => GapAxis::Horizontal,
            (true, _) => GapAxis::Vertical,
            (false, true) => GapAxis::Horizontal,
            (false, false) => continue,
        };
        out.push(GapComponent { pixels: comp, axis });
    }
    out
}

/// Union of dead straight-ish bands crossing most of the frame, if any.
pub fn infer_gap_mask(frame: &ScatterFrame) -> Option<Vec<bool>> {
    let comps = gap_components(frame);
    if comps.is_empty() {
        return None;
    }
    let mut mask = vec![false; frame.data().len()];
    for c in comps {
        for i in c.pixels {
            mask[i] = true;
        }
    }
    Some(mask)
}

/// RMS residual (px) of a least-squares line through the per-line centroids
/// of a gap component.
fn gap_line_residual(comp: &GapComponent, width: usize) -> Option<f64> {
    use std::collections::BTreeMap;
    // along -> (sum of across, count)
    let mut lines: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for &i in &comp.pixels {
        let (x, y) = (i % width, i / width);
        let (along, across) = match comp.axis {
            GapAxis::Vertical => (y, x as f64),
            GapAxis::Horizontal => (x, y as f64),
        };
        let e = lines.entry(along).or_insert((0.0, 0));
        e.0 += across;
        e.1 += 1;
    }
    let mut counts: Vec<usize> = lines.values().map(|v| v.1).collect();
    counts.sort_unstable();
    let median = counts[counts.len() / 2] as f64;
    // lines much wider than typical are crossings with another band
    let pts: Vec<(f64, f64)> = lines
        .iter()
        .filter(|(_, (_, n))| (*n as f64) <= 3.0 * median)
        .map(|(&a, &(s, n))| (a as f64, s / n as f64))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let ma = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mc = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let saa: f64 = pts.iter().map(|p| (p.0 - ma).powi(2)).sum();
    let sac: f64 = pts.iter().map(|p| (p.0 - ma) * (p.1 - mc)).sum();
    let slope = if saa > 0.0 { sac / saa } else { 0.0 };
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - (mc + slope * (p.0 - ma))).powi(2))
        .sum();
    Some((sse / n).sqrt())
}

/// Mean over detected gaps of `exp(-rms_residual / 1.5 px)`; 1.0 when the
/// frame has no gaps at all.
pub fn gap_straightness(frame: &ScatterFrame) -> f64 {
    let scores: Vec<f64> = gap_components(frame)
        .iter()
        .filter_map(|c| gap_line_residual(c, frame.width()))
        .map(|rms| (-rms / GAP_RESIDUAL_SCALE).exp())
        .collect();
    if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

// ── center search ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterFit {
    pub center: Center,
    pub objective: f64,
}

/// Radial-profile sharpness at a candidate center: the variance across
/// radius of the angular-mean profile. Smearing from a wrong center flattens
/// the profile.
///
/// Radii below `frame side / 16` are ignored: tiny circles around a bright
/// feature would otherwise dominate the variance.
pub fn center_objective(
    frame: &ScatterFrame,
    invalid: &InvalidMask,
    center: Center,
    n_theta: usize,
    n_r: usize,
) -> f64 {
    let angles = AngleTable::new(n_theta);
    let r_min = (frame.width().min(frame.height()) / 16).max(4);
    center_objective_with(frame, invalid, center, &angles, r_min, n_r)
}

fn center_objective_with(
    frame: &ScatterFrame,
    invalid: &InvalidMask,
    center: Center,
    angles: &AngleTable,
    r_min: usize,
    n_r: usize,
) -> f64 {
    let mut sum = vec![0.0; n_r];
    let mut count = vec![0u32; n_r];
    for (c, s) in angles.cos.iter().zip(&angles.sin) {
        for r in r_min..n_r {
            let rf = r as f64;
            if let Some(v) = masked_sample(frame, invalid, center.x + rf * c, center.y + rf * s) {
                sum[r] += v;
                count[r] += 1;
            }
        }
    }
    let profile: Vec<f64> = sum
        .iter()
        .zip(&count)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s / c as f64)
        .collect();
    if profile.len() < 2 {
        return 0.0;
    }
    let n = profile.len() as f64;
    let mean = profile.iter().sum::<f64>() / n;
    profile.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterSearch {
    /// Half-width (px) of the square searched around the frame midpoint.
    pub window: usize,
    /// Coarse grid spacing (px).
    pub coarse_step: usize,
    pub n_theta: usize,
}

impl CenterSearch {
    pub fn for_frame(frame: &ScatterFrame) -> Self {
        let side = frame.width().min(frame.height());
        Self {
            window: (side / 4).min(40),
            coarse_step: 4,
            n_theta: DEFAULT_N_THETA,
        }
    }
}

/// Coarse-to-fine grid search for the beam center: a `coarse_step` grid over
/// the window, a unit grid around the best coarse cell, then a quarter-pixel
/// quadratic refinement.
pub fn find_center(
    frame: &ScatterFrame,
    search_window: usize,
    coarse_step: usize,
) -> Result<CenterFit> {
    let search = CenterSearch {
        window: search_window,
        coarse_step,
        n_theta: DEFAULT_N_THETA,
    };
    let anchor = grid_anchor(frame);
    let invalid = InvalidMask::build(frame, anchor, search_window as f64 + 4.0);
    find_center_masked(frame, &invalid, search)
}

fn grid_anchor(frame: &ScatterFrame) -> Center {
    Center::new((frame.width() / 2) as f64, (frame.height() / 2) as f64)
}

pub fn find_center_masked(
    frame: &ScatterFrame,
    invalid: &InvalidMask,
    search: CenterSearch,
) -> Result<CenterFit> {
    let (w, h) = (frame.width(), frame.height());
    let anchor = grid_anchor(frame);
    let window = search.window as i64;
    let step = search.coarse_step.max(1) as i64;
    if search.window == 0 {
        return Err(Error::InvalidInput("search window must be positive".into()));
    }
    if anchor.x - (window as f64) < 1.0
        || anchor.y - (window as f64) < 1.0
        || anchor.x + (window as f64) > (w - 2) as f64
        || anchor.y + (window as f64) > (h - 2) as f64
    {
        return Err(Error::InvalidInput(format!(
            "search window {window} exceeds the {w}x{h} frame"
        )));
    }
    let n_r = w.min(h) / 2;
    let r_min = (w.min(h) / 16).max(4);
    // The coarse stage only has to rank candidates a few pixels apart, so it
    // runs on a sparser angular grid than the fine stages.
    let coarse_angles = AngleTable::new((search.n_theta / 4).max(MIN_POLAR_BINS));
    let angles = AngleTable::new((search.n_theta / 2).max(MIN_POLAR_BINS));

    let mut best = (0i64, 0i64, f64::NEG_INFINITY);
    let mut dy = -window;
    while dy <= window {
        let mut dx = -window;
        while dx <= window {
            let c = Center::new(anchor.x + dx as f64, anchor.y + dy as f64);
            let v = center_objective_with(frame, invalid, c, &coarse_angles, r_min, n_r);
            if v > best.2 {
                best = (dx, dy, v);
            }
            dx += step;
        }
        dy += step;
    }
    if best.2 < FLAT_OBJECTIVE {
        return Err(Error::NoRadialStructure);
    }

    let mut cache = std::collections::HashMap::<(i64, i64), f64>::new();
    let mut eval = |dx: i64, dy: i64| -> f64 {
        *cache.entry((dx, dy)).or_insert_with(|| {
            let c = Center::new(anchor.x + dx as f64, anchor.y + dy as f64);
            center_objective_with(frame, invalid, c, &angles, r_min, n_r)
        })
    };
    let (cx, cy) = (best.0, best.1);
    best.2 = f64::NEG_INFINITY;
    for dy in (cy - step)..=(cy + step) {
        for dx in (cx - step)..=(cx + step) {
            if dx.abs() > window + step || dy.abs() > window + step {
                continue;
            }
            let v = eval(dx, dy);
            if v > best.2 {
                best = (dx, dy, v);
            }
        }
    }

    let (bx, by, f0) = best;
    let vertex = |fm: f64, fp: f64| -> f64 {
        let denom = fm - 2.0 * f0 + fp;
        if denom < 0.0 {
            ((0.5 * (fm - fp) / denom).clamp(-0.5, 0.5) * 4.0).round() / 4.0
        } else {
            0.0
        }
    };
    let ox = vertex(eval(bx - 1, by), eval(bx + 1, by));
    let oy = vertex(eval(bx, by - 1), eval(bx, by + 1));
    let unit = Center::new(anchor.x + bx as f64, anchor.y + by as f64);
    if ox == 0.0 && oy == 0.0 {
        return Ok(CenterFit {
            center: unit,
            objective: f0,
        });
    }
    let refined = Center::new(unit.x + ox, unit.y + oy);
    let fr = center_objective_with(frame, invalid, refined, &angles, r_min, n_r);
    Ok(if fr >= f0 {
        CenterFit {
            center: refined,
            objective: fr,
        }
    } else {
        CenterFit {
            center: unit,
            objective: f0,
        }
    })
}

// ── ring detection and ridge tracking ────────────────────────────────────────

/// Radii of local maxima of the angular-mean profile whose topographic
/// prominence is at least `min_prominence`.
pub fn detect_ring_radii(polar: &PolarImage, min_prominence: f64) -> Vec<f64> {
    let profile = polar.radial_profile();
    let mut radii = Vec::new();
    for i in 1..profile.len().saturating_sub(1) {
        let (Some(prev), Some(cur), Some(next)) = (profile[i - 1], profile[i], profile[i + 1])
        else {
            continue;
        };
        if !(cur > prev && cur >= next) {
            continue;
        }
        let side_base = |range: &mut dyn Iterator<Item = usize>| -> f64 {
            let mut base = cur;
            for j in range {
                match profile[j] {
                    Some(v) if v > cur => break,
                    Some(v) => base = base.min(v),
                    None => break,
                }
            }
            base
        };
        let left = side_base(&mut (0..i).rev());
        let right = side_base(&mut (i + 1..profile.len()));
        if cur - left.max(right) >= min_prominence {
            radii.push(i as f64);
        }
    }
    radii
}

fn resolve_rings(polar: &PolarImage, ring_radii: Option<&[f64]>) -> Result<Vec<usize>> {
    let radii: Vec<f64> = match ring_radii {
        Some(r) => r.to_vec(),
        None => detect_ring_radii(polar, DEFAULT_RING_PROMINENCE),
    };
    let out: Vec<usize> = radii
        .iter()
        .filter(|r| r.is_finite() && **r >= 0.0)
        .map(|r| r.round() as usize)
        .filter(|&r| r < polar.n_r())
        .collect();
    if out.is_empty() {
        Err(Error::NoRings)
    } else {
        Ok(out)
    }
}

/// Sub-bin ridge position per occupied angular row: argmax over
/// `[lo, hi]` refined by a three-point parabola.
pub fn ridge_positions(polar: &PolarImage, lo: usize, hi: usize) -> Vec<f64> {
    let hi = hi.min(polar.n_r() - 1);
    let mut out = Vec::with_capacity(polar.n_theta());
    for t in 0..polar.n_theta() {
        let mut best: Option<(usize, f64)> = None;
        for r in lo..=hi {
            if let Some(v) = polar.at(t, r) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((r, v));
                }
            }
        }
        let Some((r, v)) = best else { continue };
        let mut pos = r as f64;
        if r > lo && r < hi {
            if let (Some(a), Some(c)) = (polar.at(t, r - 1), polar.at(t, r + 1)) {
                let denom = a - 2.0 * v + c;
                if denom < 0.0 {
                    pos += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                }
            }
        }
        out.push(pos);
    }
    out
}

/// Population standard deviation, exactly zero for identical inputs.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let shift = xs[0];
    let n = xs.len() as f64;
    let m1 = xs.iter().map(|x| x - shift).sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / n;
    (m2 - m1 * m1).max(0.0).sqrt()
}

// ── scores ───────────────────────────────────────────────────────────────────

/// Point-symmetry score: mean over occupied (θ, θ+180°) pairs of one minus the
/// relative intensity difference.
pub fn symmetry_score(polar: &PolarImage) -> Result<f64> {
    if polar.n_theta() % 2 != 0 {
        return Err(Error::InvalidInput(
            "symmetry needs an even number of angular bins".into(),
        ));
    }
    let half = polar.n_theta() / 2;
    let total = half * polar.n_r();
    let mut acc = 0.0;
    let mut occupied = 0usize;
    for t in 0..half {
        for r in 0..polar.n_r() {
            if let (Some(a), Some(b)) = (polar.at(t, r), polar.at(t + half, r)) {
                acc += 1.0 - (a - b).abs() / (a + b + SYMMETRY_EPSILON);
                occupied += 1;
            }
        }
    }
    if (occupied as f64) < MIN_PAIR_COVERAGE * total as f64 || occupied == 0 {
        return Err(Error::InsufficientCoverage { occupied, total });
    }
    Ok(acc / occupied as f64)
}

fn ring_ridge_values(polar: &PolarImage, r: usize) -> Vec<f64> {
    let lo = r.saturating_sub(1);
    let hi = (r + 1).min(polar.n_r() - 1);
    (0..polar.n_theta())
        .filter_map(|t| {
            (lo..=hi)
                .filter_map(|rr| polar.at(t, rr))
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per ring, the fraction of occupied angular bins whose ridge intensity is
/// at least half the ring's median; averaged over rings.
pub fn continuity_score(polar: &PolarImage, ring_radii: Option<&[f64]>) -> Result<f64> {
    let rings = resolve_rings(polar, ring_radii)?;
    let mut total = 0.0;
    let mut used = 0usize;
    for r in rings {
        let values = ring_ridge_values(polar, r);
        if values.is_empty() {
            continue;
        }
        let mut sorted = values.clone();
        let cut = 0.5 * median(&mut sorted);
        let kept = values.iter().filter(|&&v| v >= cut).count();
        total += kept as f64 / values.len() as f64;
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoRings);
    }
    Ok(total / used as f64)
}

/// Mean over rings of `exp(-std(ridge position) / 2 bins)`, with ridge
/// positions searched within ±5 bins of each ring radius.
pub fn verticality_score(polar: &PolarImage, ring_radii: Option<&[f64]>) -> Result<f64> {
    let rings = resolve_rings(polar, ring_radii)?;
    let mut total = 0.0;
    let mut used = 0usize;
    for r in rings {
        let lo = r.saturating_sub(RIDGE_WINDOW);
        let hi = (r + RIDGE_WINDOW).min(polar.n_r() - 1);
        let pos = ridge_positions(&polar.rows_fully_occupied(lo, hi), lo, hi);
        if pos.is_empty() {
            continue;
        }
        total += (-std_dev(&pos) / VERTICALITY_SCALE).exp();
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoRings);
    }
    Ok(total / used as f64)
}

// ── composite report ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismConfig {
    /// Weights for (symmetry, continuity, gap straightness, verticality).
    pub weights: [f64; 4],
    /// Per-score flag thresholds, same order as `weights`.
    pub thresholds: [f64; 4],
    pub search: Option<CenterSearch>,
    pub n_theta: usize,
    /// When the pattern is known not to contain rings, continuity and
    /// verticality are vacuously 1 and the center comes from the beamstop.
    pub pattern: Option<PatternClass>,
}

impl Default for RealismConfig {
    fn default() -> Self {
        Self {
            weights: [0.3, 0.3, 0.2, 0.2],
            thresholds: [0.8; 4],
            search: None,
            n_theta: DEFAULT_N_THETA,
            pattern: None,
        }
    }
}

impl RealismConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("weights must be nonnegative".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

pub const SCORE_NAMES: [&str; 4] = ["symmetry", "continuity", "gap_straightness", "verticality"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub id: String,
    pub symmetry: f64,
    pub continuity: f64,
    pub gap_straightness: f64,
    pub verticality: f64,
    pub composite: f64,
    pub center: Center,
    pub flags: Vec<String>,
}

impl RealismReport {
    pub fn scores(&self) -> [f64; 4] {
        [
            self.symmetry,
            self.continuity,
            self.gap_straightness,
            self.verticality,
        ]
    }
}

/// Runs the center search, the polar warp and all four scores. A failing
/// sub-score is recorded as 0 and flagged instead of aborting the report.
pub fn realism_report(frame: &ScatterFrame, config: &RealismConfig) -> Result<RealismReport> {
    config.validate()?;
    let search = config
        .search
        .unwrap_or_else(|| CenterSearch::for_frame(frame));
    let invalid = InvalidMask::build(frame, grid_anchor(frame), search.window as f64 + 4.0);
    let mut flags = Vec::new();
    let ringless = config.pattern.is_some_and(|p| p != PatternClass::Rings);
    // without rings the radial profile is too weak to lock onto; the beamstop
    // marks the beam
    let stop = if ringless {
        beamstop_center(frame, grid_anchor(frame), search.window as f64 + 4.0)
    } else {
        None
    };
    let center = if let Some(c) = stop {
        c
    } else {
        match find_center_masked(frame, &invalid, search) {
            Ok(fit) => fit.center,
            Err(e) => {
                log::debug!("{}: center search failed ({e}); using midpoint", frame.id());
                flags.push("center".to_string());
                frame.midpoint()
            }
        }
    };
    let n_r = frame.width().min(frame.height()) / 2;
    let polar = warp_polar_masked(frame, &invalid, center, config.n_theta, n_r)?;
    let rings = detect_ring_radii(&polar, DEFAULT_RING_PROMINENCE);
    let ring_score = |f: fn(&PolarImage, Option<&[f64]>) -> Result<f64>| -> Result<f64> {
        if ringless {
            Ok(1.0)
        } else {
            f(&polar, Some(&rings))
        }
    };
    let results = [
        symmetry_score(&polar),
        ring_score(continuity_score),
        Ok(gap_straightness(frame)),
        ring_score(verticality_score),
    ];
    let mut scores = [0.0; 4];
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                scores[i] = v.clamp(0.0, 1.0);
                if scores[i] < config.thresholds[i] {
                    flags.push(SCORE_NAMES[i].to_string());
                }
            }
            Err(e) => {
                log::debug!("{}: {} failed: {e}", frame.id(), SCORE_NAMES[i]);
                flags.push(SCORE_NAMES[i].to_string());
            }
        }
    }
    let composite = scores
        .iter()
        .zip(&config.weights)
        .map(|(s, w)| s * w)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(RealismReport {
        id: frame.id().to_string(),
        symmetry: scores[0],
        continuity: scores[1],
        gap_straightness: scores[2],
        verticality: scores[3],
        composite,
        center,
        flags,
    })
}

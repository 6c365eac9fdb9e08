//! Detector frames: the normalized grayscale image every stage consumes.
//!
//! Intensities live in `[0, 1]`, row-major, with an optional gap mask marking
//! dead detector pixels. PNG is the interchange format; 8- and 16-bit
//! single-channel files are accepted and mapped linearly by bit-depth maximum.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageError, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted frame side, in pixels.
pub const MIN_SIDE: usize = 32;

/// Default contrast constant for [`log_scale`].
pub const DEFAULT_LOG_CONTRAST: f64 = 1000.0;

/// Sub-pixel image coordinate; `x` runs along columns, `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub x: f64,
    pub y: f64,
}

impl Center {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Center) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => u8::MAX as f64,
            BitDepth::Sixteen => u16::MAX as f64,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::InvalidInput(format!(
                "bit depth must be 8 or 16, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterFrame {
    id: String,
    width: usize,
    height: usize,
    data: Vec<f64>,
    gap_mask: Option<Vec<bool>>,
}

impl ScatterFrame {
    pub fn new(id: impl Into<String>, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidFrame(format!(
                "frame is {width}x{height}, minimum side is {MIN_SIDE}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "expected {} intensities, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidFrame(format!(
                "intensity {} at index {i} is outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            data,
            gap_mask: None,
        })
    }

    /// Builds a frame from arbitrary values, clamping into `[0, 1]` and
    /// mapping non-finite values to zero.
    pub fn from_clamped(
        id: impl Into<String>,
        width: usize,
        height: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Self::new(id, width, height, data)
    }

    pub fn constant(
        id: impl Into<String>,
        width: usize,
        height: usize,
        value: f64,
    ) -> Result<Self> {
        Self::new(id, width, height, vec![value; width * height])
    }

    pub fn with_gap_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(Error::InvalidFrame(format!(
                "gap mask has {} cells, frame has {}",
                mask.len(),
                self.data.len()
            )));
        }
        self.gap_mask = Some(mask);
        Ok(self)
    }

    pub fn without_gap_mask(mut self) -> Self {
        self.gap_mask = None;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn gap_mask(&self) -> Option<&[bool]> {
        self.gap_mask.as_deref()
    }

    pub fn midpoint(&self) -> Center {
        Center::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_gap(&self, x: usize, y: usize) -> bool {
        self.gap_mask
            .as_ref()
            .is_some_and(|m| m[y * self.width + x])
    }

    /// Returns a copy with every pixel passed through `f` (results clamped).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScatterFrame {
        let data = self
            .data
            .iter()
            .map(|&v| {
                let out = f(v);
                if out.is_finite() {
                    out.clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        ScatterFrame {
            id: self.id.clone(),
            width: self.width,
            height: self.height,
            data,
            gap_mask: self.gap_mask.clone(),
        }
    }

    /// Bilinear sample at a sub-pixel position. `None` outside the frame.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let w = self.width as f64;
        let h = self.height as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let i = y0 * self.width + x0;
        let top = self.data[i] * (1.0 - fx) + self.data[i + 1] * fx;
        let bottom = self.data[i + self.width] * (1.0 - fx) + self.data[i + self.width + 1] * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Loads an 8- or 16-bit single-channel PNG.
pub fn load_frame(path: impl AsRef<Path>) -> Result<ScatterFrame> {
    let path = path.as_ref();
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let image = reader.decode().map_err(|e| image_error(path, e))?;
    let (width, height) = (image.width() as usize, image.height() as usize);
    let data: Vec<f64> = match image {
        DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / BitDepth::Eight.max_value())
            .collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / BitDepth::Sixteen.max_value())
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!(
                    "expected single-channel grayscale, found {:?}",
                    other.color()
                ),
            })
        }
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ScatterFrame::new(id, width, height, data)
}

/// Writes a single-channel PNG at the requested bit depth.
pub fn save_frame(frame: &ScatterFrame, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (frame.width as u32, frame.height as u32);
    let result = match depth {
        BitDepth::Eight => {
            let raw: Vec<u8> = frame
                .data
                .iter()
                .map(|v| (v * 255.0).round() as u8)
                .collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                .expect("buffer size matches frame")
                .save_with_format(path, image::ImageFormat::Png)
        }
        BitDepth::Sixteen => {
            let raw: Vec<u16> = frame
                .data
                .iter()
                .map(|v| (v * 65535.0).round() as u16)
                .collect();
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw)
                .expect("buffer size matches frame")
                .save_with_format(path, image::ImageFormat::Png)
        }
    };
    result.map_err(|e| image_error(path, e))
}

/// Encodes a frame as 8-bit PNG bytes.
pub fn encode_png8(frame: &ScatterFrame) -> Result<Vec<u8>> {
    let raw: Vec<u8> = frame
        .data
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(frame.width as u32, frame.height as u32, raw)
        .expect("buffer size matches frame");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| image_error(Path::new("<memory>"), e))?;
    Ok(out.into_inner())
}

fn image_error(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::IoError(io) => Error::io(path, io),
        ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// `v -> ln(1 + k v) / ln(1 + k)`: endpoint-preserving, strictly monotone
/// compression of the intensity range.
pub fn log_scale(frame: &ScatterFrame, contrast: f64) -> Result<ScatterFrame> {
    if !(contrast > 0.0 && contrast.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "log contrast must be positive, got {contrast}"
        )));
    }
    let norm = contrast.ln_1p();
    Ok(frame.map(|v| (contrast * v).ln_1p() / norm))
}

/// Area-weighted downsample to a `side` x `side` grid. Each output cell is the
/// exact area average of the input pixels it covers.
pub fn area_downsample(frame: &ScatterFrame, side: usize) -> Vec<f64> {
    let sx = frame.width as f64 / side as f64;
    let sy = frame.height as f64 / side as f64;
    let mut out = vec![0.0; side * side];
    for oy in 0..side {
        let (y_lo, y_hi) = (oy as f64 * sy, (oy + 1) as f64 * sy);
        for ox in 0..side {
            let (x_lo, x_hi) = (ox as f64 * sx, (ox + 1) as f64 * sx);
            let mut acc = 0.0;
            let mut area = 0.0;
            for y in (y_lo.floor() as usize)..(y_hi.ceil() as usize).min(frame.height) {
                let wy = (y_hi.min(y as f64 + 1.0) - y_lo.max(y as f64)).max(0.0);
                if wy == 0.0 {
                    continue;
                }
                for x in (x_lo.floor() as usize)..(x_hi.ceil() as usize).min(frame.width) {
                    let wx = (x_hi.min(x as f64 + 1.0) - x_lo.max(x as f64)).max(0.0);
                    let a = wx * wy;
                    acc += a * frame.get(x, y);
                    area += a;
                }
            }
            out[oy * side + ox] = if area > 0.0 { acc / area } else { 0.0 };
        }
    }
    out
}

/// Log-scaled, area-downsampled display copy of a frame.
pub fn thumbnail(frame: &ScatterFrame, side: usize) -> Result<ScatterFrame> {
    if side == 0 {
        return Err(Error::InvalidInput(
            "thumbnail side must be positive".into(),
        ));
    }
    let scaled = log_scale(frame, DEFAULT_LOG_CONTRAST)?;
    let data = area_downsample(&scaled, side);
    // Thumbnails may be smaller than MIN_SIDE, so bypass the frame constructor.
    Ok(ScatterFrame {
        id: frame.id.clone(),
        width: side,
        height: side,
        data,
        gap_mask: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ScatterFrame {
        let data = (0..w * h).map(|i| i as f64 / (w * h - 1) as f64).collect();
        ScatterFrame::new("ramp", w, h, data).unwrap()
    }

    #[test]
    fn rejects_small_and_out_of_range() {
        assert!(ScatterFrame::constant("a", 31, 64, 0.5).is_err());
        assert!(ScatterFrame::new("a", 32, 32, vec![1.5; 1024]).is_err());
        assert!(ScatterFrame::new("a", 32, 32, vec![f64::NAN; 1024]).is_err());
        let f = ScatterFrame::constant("a", 32, 32, 0.5).unwrap();
        assert!(f.clone().with_gap_mask(vec![false; 10]).is_err());
        assert!(f.with_gap_mask(vec![false; 1024]).is_ok());
    }

    #[test]
    fn png_eight_bit_full_scale_and_midpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("full.png");
        ImageBuffer::<Luma<u8>, _>::from_raw(32, 32, vec![255u8; 1024])
            .unwrap()
            .save(&path)
            .unwrap();
        let f = load_frame(&path).unwrap();
        assert_eq!(f.id(), "full");
        assert!(f.data().iter().all(|&v| v == 1.0));

        let path = dir.path().join("mid.png");
        ImageBuffer::<Luma<u8>, _>::from_raw(32, 32, vec![128u8; 1024])
            .unwrap()
            .save(&path)
            .unwrap();
        let f = load_frame(&path).unwrap();
        assert!((f.get(3, 3) - 128.0 / 255.0).abs() < 1e-12);
        assert!((f.get(3, 3) - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn png_sixteen_bit_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.png");
        ImageBuffer::<Luma<u16>, _>::from_raw(40, 33, vec![0u16; 40 * 33])
            .unwrap()
            .save(&path)
            .unwrap();
        let f = load_frame(&path).unwrap();
        assert_eq!((f.width(), f.height()), (40, 33));
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_rgb_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        ImageBuffer::<image::Rgb<u8>, _>::from_raw(32, 32, vec![10u8; 32 * 32 * 3])
            .unwrap()
            .save(&path)
            .unwrap();
        assert!(matches!(
            load_frame(&path),
            Err(Error::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            load_frame(dir.path().join("nope.png")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn save_eight_bit_half_is_128() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.png");
        let f = ScatterFrame::constant("half", 32, 32, 0.5).unwrap();
        save_frame(&f, &path, BitDepth::Eight).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        assert!(img.pixels().all(|p| p.0[0] == 128));
    }

    #[test]
    fn save_to_missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = ScatterFrame::constant("x", 32, 32, 0.5).unwrap();
        let err = save_frame(&f, dir.path().join("no/such/dir/x.png"), BitDepth::Eight);
        assert!(matches!(err, Err(Error::Io { .. })), "{err:?}");
    }

    #[test]
    fn log_scale_endpoints_and_value() {
        let mut data = vec![0.0; 32 * 32];
        data[1] = 1.0;
        data[2] = 0.001;
        let f = ScatterFrame::new("l", 32, 32, data).unwrap();
        let g = log_scale(&f, DEFAULT_LOG_CONTRAST).unwrap();
        assert_eq!(g.data()[0], 0.0);
        assert!((g.data()[1] - 1.0).abs() < 1e-15);
        let expected = 2f64.ln() / 1001f64.ln();
        assert!((g.data()[2] - expected).abs() < 1e-12);
        assert!((g.data()[2] - 0.1003).abs() < 1e-4);
        assert!(log_scale(&f, 0.0).is_err());
    }

    #[test]
    fn bilinear_is_exact_on_grid_and_linear_ramps() {
        let f = ramp(40, 36);
        assert_eq!(f.sample_bilinear(3.0, 7.0), Some(f.get(3, 7)));
        let mid = f.sample_bilinear(3.5, 7.0).unwrap();
        assert!((mid - 0.5 * (f.get(3, 7) + f.get(4, 7))).abs() < 1e-12);
        assert!(f.sample_bilinear(39.0, 35.0).is_some());
        assert!(f.sample_bilinear(39.01, 1.0).is_none());
        assert!(f.sample_bilinear(-0.01, 1.0).is_none());
    }

    #[test]
    fn area_downsample_preserves_mean() {
        let f = ramp(64, 48);
        let d = area_downsample(&f, 16);
        let mean_in: f64 = f.data().iter().sum::<f64>() / f.data().len() as f64;
        let mean_out: f64 = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean_in - mean_out).abs() < 1e-12);
        let c = ScatterFrame::constant("c", 50, 50, 0.3).unwrap();
        assert!(area_downsample(&c, 7)
            .iter()
            .all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn thumbnail_side() {
        let f = ramp(64, 64);
        let t = thumbnail(&f, 16).unwrap();
        assert_eq!((t.width(), t.height()), (16, 16));
        assert!(thumbnail(&f, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn roundtrip_within_quantization(seed in any::<u64>(), sixteen in any::<bool>()) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let data: Vec<f64> = (0..48 * 40).map(|_| rng.random::<f64>()).collect();
                let f = ScatterFrame::new("rt", 48, 40, data).unwrap();
                let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("rt.png");
                save_frame(&f, &path, depth).unwrap();
                let g = load_frame(&path).unwrap();
                let bound = 1.0 / depth.max_value();
                for (a, b) in f.data().iter().zip(g.data()) {
                    prop_assert!((a - b).abs() <= bound);
                }
            }

            #[test]
            fn log_scale_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, k in 0.01f64..1e5) {
                let mut data = vec![0.0; 32 * 32];
                data[0] = a;
                data[1] = b;
                let f = ScatterFrame::new("m", 32, 32, data).unwrap();
                let g = log_scale(&f, k).unwrap();
                let (ga, gb) = (g.data()[0], g.data()[1]);
                prop_assert!((0.0..=1.0).contains(&ga));
                if a < b { prop_assert!(ga <= gb); }
                if b - a > 1e-9 { prop_assert!(ga < gb); }
                if a == b { prop_assert_eq!(ga, gb); }
            }
        }
    }
}

//! Dataset bookkeeping: manifests, labels with provenance, feature sets and
//! classifier probabilities, plus their on-disk JSONL/CSV forms.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternClass {
    Rings,
    Peaks,
    Background,
}

impl PatternClass {
    pub const ALL: [PatternClass; 3] = [
        PatternClass::Rings,
        PatternClass::Peaks,
        PatternClass::Background,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternClass::Rings => "rings",
            PatternClass::Peaks => "peaks",
            PatternClass::Background => "background",
        }
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rings" => Ok(PatternClass::Rings),
            "peaks" => Ok(PatternClass::Peaks),
            "background" => Ok(PatternClass::Background),
            _ => Err(Error::InvalidInput(format!("unknown pattern class {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Experimental,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Realistic,
    Fake,
}

impl Verdict {
    pub fn is_realistic(self) -> bool {
        self == Verdict::Realistic
    }

    pub fn flipped(self) -> Verdict {
        match self {
            Verdict::Realistic => Verdict::Fake,
            Verdict::Fake => Verdict::Realistic,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Realistic => "realistic",
            Verdict::Fake => "fake",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "realistic" | "r" => Ok(Verdict::Realistic),
            "fake" | "f" => Ok(Verdict::Fake),
            _ => Err(Error::InvalidInput(format!("unknown verdict {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Human,
    Model,
}

// ── manifests ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub origin: Origin,
    pub pattern: PatternClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl ManifestEntry {
    /// Image id: the file stem of the entry path.
    pub fn id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.path.clone()) {
                return Err(Error::DuplicateId(e.path.display().to_string()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: ManifestEntry) -> Result<()> {
        if self.entries.iter().any(|e| e.path == entry.path) {
            return Err(Error::DuplicateId(entry.path.display().to_string()));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn find(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id() == id)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_jsonl(path)?)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.entries)
    }
}

// ── labels ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub image_id: String,
    pub verdict: Verdict,
    pub source: LabelSource,
    pub round: u32,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
}

/// Append-only label store. Optionally mirrored line-by-line to a JSONL file.
#[derive(Debug, Default)]
pub struct LabelStore {
    records: Vec<LabelRecord>,
    human_keys: HashSet<(String, u32)>,
    file: Option<PathBuf>,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) a file-backed store, replaying existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut store = if path.exists() {
            Self::from_records(read_jsonl(path)?)?
        } else {
            File::create(path).map_err(|e| Error::io(path, e))?;
            Self::new()
        };
        store.file = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn from_records(records: Vec<LabelRecord>) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    fn insert(&mut self, record: LabelRecord) -> Result<()> {
        if record.source == LabelSource::Human
            && !self
                .human_keys
                .insert((record.image_id.clone(), record.round))
        {
            return Err(Error::DuplicateVerdict {
                id: record.image_id,
                round: record.round,
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn has_human(&self, image_id: &str, round: u32) -> bool {
        self.human_keys.contains(&(image_id.to_string(), round))
    }

    pub fn append(&mut self, record: LabelRecord) -> Result<()> {
        if record.source == LabelSource::Human && self.has_human(&record.image_id, record.round) {
            return Err(Error::DuplicateVerdict {
                id: record.image_id,
                round: record.round,
            });
        }
        if let Some(path) = &self.file {
            let mut f = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let line = serde_json::to_string(&record)?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        self.insert(record)
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Latest human verdict for an image, by round then append order.
    pub fn latest_human(&self, image_id: &str) -> Option<(usize, &LabelRecord)> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.image_id == image_id && r.source == LabelSource::Human)
            .max_by_key(|(i, r)| (r.round, *i))
    }

    /// Effective label: a human verdict always wins over model verdicts;
    /// otherwise the latest model verdict.
    pub fn effective(&self, image_id: &str) -> Option<&LabelRecord> {
        self.latest_human(image_id).map(|(_, r)| r).or_else(|| {
            self.records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.image_id == image_id)
                .max_by_key(|(i, r)| (r.round, *i))
                .map(|(_, r)| r)
        })
    }

    /// All records for an image in append order (the audit trail).
    pub fn history(&self, image_id: &str) -> Vec<&LabelRecord> {
        self.records
            .iter()
            .filter(|r| r.image_id == image_id)
            .collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.records)
    }
}

// ── features ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub values: Vec<f64>,
}

/// A set of equal-length feature vectors produced by one extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub extractor: String,
    rows: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn new(extractor: impl Into<String>, rows: Vec<FeatureVector>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let dim = first.values.len();
            let mut ids = HashSet::new();
            for r in &rows {
                if r.values.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: r.values.len(),
                    });
                }
                if let Some(v) = r.values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "feature vector {} contains non-finite value {v}",
                        r.id
                    )));
                }
                if !ids.insert(r.id.as_str()) {
                    return Err(Error::DuplicateId(r.id.clone()));
                }
            }
        }
        Ok(Self {
            extractor: extractor.into(),
            rows,
        })
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn values(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.rows.iter().find(|r| r.id == id)
    }

    /// Reads `id,f0,f1,...` CSV. The header row is required.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let mut fields = rec.iter();
            let id = fields
                .next()
                .ok_or_else(|| {
                    Error::parse(format!("{}:{}", path.display(), line + 2), "empty row")
                })?
                .to_string();
            let values = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(format!("{}:{}", path.display(), line + 2), e))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureVector { id, values });
        }
        Self::new(format!("csv:{}", path.display()), rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim()).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone()];
            rec.extend(r.values.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

// ── probabilities ────────────────────────────────────────────────────────────

/// Two-class probability vector; the components always sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    p_realistic: f64,
    p_fake: f64,
}

impl ProbabilityVector {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn realistic(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            p_realistic: p,
            p_fake: 1.0 - p,
        })
    }

    pub fn new(p_realistic: f64, p_fake: f64) -> Result<Self> {
        for p in [p_realistic, p_fake] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        if (p_realistic + p_fake - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "probabilities {p_realistic} + {p_fake} do not sum to 1"
            )));
        }
        Ok(Self {
            p_realistic,
            p_fake,
        })
    }

    pub fn p_realistic(&self) -> f64 {
        self.p_realistic
    }

    pub fn p_fake(&self) -> f64 {
        self.p_fake
    }

    pub fn verdict(&self, threshold: f64) -> Verdict {
        if self.p_realistic >= threshold {
            Verdict::Realistic
        } else {
            Verdict::Fake
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.p_realistic, self.p_fake]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbabilityRow {
    id: String,
    p_realistic: f64,
    p_fake: f64,
}

/// Sums off by at most this much are renormalized on ingestion.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

/// Reads an `id,p_realistic,p_fake` CSV. Rows whose sum is off by at most
/// 1e-3 are renormalized; anything further off is rejected.
pub fn read_probability_csv(path: impl AsRef<Path>) -> Result<Vec<(String, ProbabilityVector)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "p_realistic", "p_fake"] {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected header id,p_realistic,p_fake, got {:?}", headers),
        ));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.deserialize::<ProbabilityRow>().enumerate() {
        let location = format!("{}:{}", path.display(), i + 2);
        let row = row.map_err(|e| Error::parse(&location, e))?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::DuplicateId(row.id));
        }
        let pv = normalize_probability_row(row.p_realistic, row.p_fake)
            .map_err(|e| Error::parse(&location, e))?;
        out.push((row.id, pv));
    }
    Ok(out)
}

pub fn normalize_probability_row(p_realistic: f64, p_fake: f64) -> Result<ProbabilityVector> {
    for p in [p_realistic, p_fake] {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
    }
    let sum = p_realistic + p_fake;
    if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {sum}, beyond the {RENORMALIZE_TOLERANCE} tolerance"
        )));
    }
    let p = p_realistic / sum;
    ProbabilityVector::new(p, 1.0 - p)
}

pub fn write_probability_csv(
    path: impl AsRef<Path>,
    rows: &[(String, ProbabilityVector)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (id, p) in rows {
        w.serialize(ProbabilityRow {
            id: id.clone(),
            p_realistic: p.p_realistic,
            p_fake: p.p_fake,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Index from id to probability, for lookups by image.
pub fn probability_index(
    rows: &[(String, ProbabilityVector)],
) -> HashMap<String, ProbabilityVector> {
    rows.iter().cloned().collect()
}

// ── JSONL helpers ────────────────────────────────────────────────────────────

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for item in items {
        let line = serde_json::to_string(item)?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path.display().to_string(), format!("{other:?}")),
        }
    } else {
        Error::parse(path.display().to_string(), e)
    }
}

/// Groups ids by verdict, keeping a stable (sorted) order.
pub fn ids_by_verdict<'a>(
    labels: impl IntoIterator<Item = (&'a str, Verdict)>,
) -> BTreeMap<Verdict, Vec<String>> {
    let mut out: BTreeMap<Verdict, Vec<String>> = BTreeMap::new();
    for (id, v) in labels {
        out.entry(v).or_default().push(id.to_string());
    }
    for ids in out.values_mut() {
        ids.sort();
    }
    out
}

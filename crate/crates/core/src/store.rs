//! Labeled embedding datasets and the REPA on-disk format.
//!
//! REPA layout, all integers little-endian:
//!
//! ```text
//! magic  b"REPA"
//! u32    version (= 1)
//! u32    dim
//! u32    count
//! count × { u8 label, u8 split (0 = train, 1 = test), dim × f32 }
//! ```
//!
//! Values are stored as `f32` and widened to `f64` on load.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::NUM_CLASSES;

pub const MAGIC: &[u8; 4] = b"REPA";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// ICBHI test-split class proportions (normal, crackle, wheeze, both), in percent.
pub const ICBHI_TEST_RATIOS: [f64; NUM_CLASSES] = [57.29, 23.55, 13.97, 5.19];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ClassLabel {
    Normal = 0,
    Crackle = 1,
    Wheeze = 2,
    Both = 3,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Normal,
        ClassLabel::Crackle,
        ClassLabel::Wheeze,
        ClassLabel::Both,
    ];

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Crackle => "crackle",
            ClassLabel::Wheeze => "wheeze",
            ClassLabel::Both => "both",
        }
    }

    pub fn is_abnormal(self) -> bool {
        self != ClassLabel::Normal
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" => Ok(ClassLabel::Normal),
            "crackle" | "1" => Ok(ClassLabel::Crackle),
            "wheeze" | "2" => Ok(ClassLabel::Wheeze),
            "both" | "3" => Ok(ClassLabel::Both),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Split {
    Train = 0,
    Test = 1,
}

impl Split {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "0" => Ok(Split::Train),
            "test" | "1" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// A pooled encoder representation. Always non-empty and finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("feature vector must have dim >= 1".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation {
                index: k,
                reason: "non-finite value".into(),
            });
        }
        Ok(FeatureVector(values))
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        FeatureVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Scalar mean over all coordinates.
    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub feature: FeatureVector,
    pub label: ClassLabel,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(dim: usize, examples: Vec<LabeledExample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dataset dim must be >= 1".into()));
        }
        for (index, ex) in examples.iter().enumerate() {
            if ex.feature.dim() != dim {
                return Err(Error::Validation {
                    index,
                    reason: format!("dim {} does not match dataset dim {dim}", ex.feature.dim()),
                });
            }
        }
        Ok(Dataset { dim, examples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledExample> + '_ {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn split_vec(&self, split: Split) -> Vec<LabeledExample> {
        self.split(split).cloned().collect()
    }

    pub fn class_counts(&self, split: Option<Split>) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for e in &self.examples {
            if split.is_none_or(|s| s == e.split) {
                counts[e.label.index()] += 1;
            }
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// REPA encoding

pub fn encode<W: Write>(dataset: &Dataset, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(dataset.dim as u32)?;
    w.write_u32::<LittleEndian>(dataset.examples.len() as u32)?;
    for ex in &dataset.examples {
        w.write_u8(ex.label.code())?;
        w.write_u8(ex.split as u8)?;
        for &v in ex.feature.as_slice() {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.flush()
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing REPA magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt("truncated header".into()));
    }
    let mut header = &bytes[4..HEADER_LEN];
    let version = header.read_u32::<LittleEndian>().expect("header length checked");
    let dim = header.read_u32::<LittleEndian>().expect("header length checked") as usize;
    let count = header.read_u32::<LittleEndian>().expect("header length checked") as usize;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if dim == 0 {
        return Err(Error::Format("dim must be >= 1".into()));
    }

    let record_len = 2 + 4 * dim;
    let payload = &bytes[HEADER_LEN..];
    let expected = record_len
        .checked_mul(count)
        .ok_or_else(|| Error::Corrupt("record count overflows".into()))?;
    if payload.len() < expected {
        return Err(Error::Corrupt(format!(
            "payload has {} bytes, header promises {count} records of {record_len} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after {count} records",
            payload.len() - expected
        )));
    }

    let mut examples = Vec::with_capacity(count);
    for (index, mut rec) in payload.chunks_exact(record_len).enumerate() {
        let label_code = rec.read_u8().expect("record length checked");
        let split_code = rec.read_u8().expect("record length checked");
        let label = ClassLabel::from_code(label_code).ok_or_else(|| Error::Validation {
            index,
            reason: format!("label code {label_code} out of range"),
        })?;
        let split = Split::from_code(split_code).ok_or_else(|| Error::Validation {
            index,
            reason: format!("split code {split_code} out of range"),
        })?;
        let mut values = Vec::with_capacity(dim);
        for k in 0..dim {
            let v = rec.read_f32::<LittleEndian>().expect("record length checked");
            if !v.is_finite() {
                return Err(Error::Validation {
                    index,
                    reason: format!("non-finite value at coordinate {k}"),
                });
            }
            values.push(v as f64);
        }
        examples.push(LabeledExample {
            feature: FeatureVector::from_raw(values),
            label,
            split,
        });
    }
    Ok(Dataset { dim, examples })
}

pub fn load_store(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_store(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for (index, ex) in dataset.examples.iter().enumerate() {
        if ex.feature.as_slice().iter().any(|&v| !(v as f32).is_finite()) {
            return Err(Error::Validation {
                index,
                reason: "value not representable as a finite f32".into(),
            });
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// CSV import

/// Reads rows of `label,split,v0,...,v{dim-1}` with no header line.
pub fn import_csv(path: impl AsRef<Path>, dim: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, dim)
}

pub fn read_csv<R: Read>(reader: R, dim: usize) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dim must be >= 1".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);

    let mut examples = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::Csv { line, reason };
        if row.len() != dim + 2 {
            return Err(bad(format!("expected {} columns, found {}", dim + 2, row.len())));
        }
        let label: ClassLabel = row[0].parse().map_err(bad)?;
        let split: Split = row[1].parse().map_err(bad)?;
        let mut values = Vec::with_capacity(dim);
        for (k, field) in row.iter().skip(2).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("value {k} ({field:?}) is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("value {k} is not finite")));
            }
            values.push(v);
        }
        examples.push(LabeledExample {
            feature: FeatureVector::from_raw(values),
            label,
            split,
        });
    }
    Dataset::new(dim, examples)
}

// ---------------------------------------------------------------------------
// Synthetic blobs

/// Parameters of a synthetic Gaussian-blob dataset.
///
/// Class `c` is drawn from `N(separation * u_c, I)`. The direction `u_c` is the
/// unit axis `c mod dim`, negated on every wrap-around, so the four directions
/// are orthogonal whenever `dim >= 4`. Within each class the first
/// `round(count * (1 - test_fraction))` examples go to the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub counts: [usize; NUM_CLASSES],
    pub separation: f64,
    pub seed: u64,
    pub test_fraction: f64,
}

impl SynthSpec {
    pub fn new(dim: usize, counts: [usize; NUM_CLASSES], separation: f64, seed: u64) -> Self {
        SynthSpec {
            dim,
            counts,
            separation,
            seed,
            test_fraction: 0.4,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig("separation must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidConfig("test fraction must lie in [0, 1]".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut examples = Vec::with_capacity(self.counts.iter().sum());
        for (label, &n) in ClassLabel::ALL.iter().zip(&self.counts) {
            let c = label.index();
            let axis = c % self.dim;
            let sign = if (c / self.dim).is_multiple_of(2) { 1.0 } else { -1.0 };
            let n_train = (n as f64 * (1.0 - self.test_fraction)).round() as usize;
            for i in 0..n {
                let values = (0..self.dim)
                    .map(|k| {
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        let centre = if k == axis { sign * self.separation } else { 0.0 };
                        // Keep values f32-exact so a REPA round trip is lossless.
                        (centre + noise) as f32 as f64
                    })
                    .collect();
                examples.push(LabeledExample {
                    feature: FeatureVector::from_raw(values),
                    label: *label,
                    split: if i < n_train { Split::Train } else { Split::Test },
                });
            }
        }
        Dataset::new(self.dim, examples)
    }
}

pub fn synth_dataset(
    dim: usize,
    counts: [usize; NUM_CLASSES],
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    SynthSpec::new(dim, counts, separation, seed).generate()
}

/// Splits `total` across classes in ICBHI test proportions using
/// largest-remainder rounding, so the counts always sum to `total`.
pub fn icbhi_counts(total: usize) -> [usize; NUM_CLASSES] {
    let ratio_sum: f64 = ICBHI_TEST_RATIOS.iter().sum();
    let exact: Vec<f64> = ICBHI_TEST_RATIOS
        .iter()
        .map(|r| total as f64 * r / ratio_sum)
        .collect();
    let mut counts = [0usize; NUM_CLASSES];
    for (c, x) in exact.iter().enumerate() {
        counts[c] = x.floor() as usize;
    }
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &c in order.iter().take(total - assigned) {
        counts[c] += 1;
    }
    counts
}

//! Labelled embedding datasets: file ingestion, known/unknown class splits
//! and a synthetic Gaussian-blob generator used as a test fixture.
//!
//! Two on-disk formats are supported. JSONL holds one object per line,
//!
//! ```text
//! {"label": "transfer", "vector": [0.12, -0.5, 1.0], "text": "send money"}
//! ```
//!
//! with `text` optional. CSV has a header `label,v0,v1,...,v{d-1}` and no
//! text column. The label [`OOD_LABEL`] is reserved for out-of-domain rows.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::util::{self, keyed_rng};

/// Reserved label for out-of-domain utterances.
pub const OOD_LABEL: &str = "__ood__";

/// Minimum angle between two synthetic cluster centers (60 degrees).
const MIN_CENTER_COS: f64 = 0.5;
const CENTER_RETRY_LIMIT: usize = 10_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vector has dimension {found}, expected {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: vector component {component} is not finite")]
    NonFinite { line: usize, component: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("vectors must have at least one component")]
    ZeroDimension,
    #[error("label `{OOD_LABEL}` is reserved and may not appear in training data")]
    ReservedLabel,
    #[error("known ratio {0} is outside (0, 1]")]
    InvalidRatio(f64),
    #[error("known ratio {ratio} selects {known} of {total} classes; at least 2 known classes are required")]
    TooFewKnownClasses {
        ratio: f64,
        known: usize,
        total: usize,
    },
    #[error("training data has {0} class(es); at least 2 are required")]
    TooFewClasses(usize),
    #[error("train and test dimensions differ ({train} vs {test})")]
    SplitDimension { train: usize, test: usize },
    #[error("test label `{0}` does not occur in the training data")]
    UnknownTestLabel(String),
    #[error("training set is empty after filtering to known classes")]
    EmptyTrain,
    #[error("invalid synthetic blob parameters: {0}")]
    InvalidSynth(String),
    #[error("could not place {k} centers at least 60 degrees apart in dimension {dim}")]
    CenterSampling { k: usize, dim: usize },
}

/// On-disk dataset encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// `.csv` selects CSV, anything else JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        })
    }
}

/// One utterance: its embedding and class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEmbedding {
    pub label: String,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl LabeledEmbedding {
    pub fn new(label: impl Into<String>, vector: Vec<f64>) -> Self {
        LabeledEmbedding {
            label: label.into(),
            vector,
            text: None,
        }
    }

    pub fn is_ood(&self) -> bool {
        self.label == OOD_LABEL
    }
}

/// An ordered, validated collection of embeddings sharing one dimension.
///
/// `labels` holds the distinct non-OOD class names in sorted order; a
/// class's position in it is its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    items: Vec<LabeledEmbedding>,
    dim: usize,
    labels: Vec<String>,
}

impl Dataset {
    pub fn new(items: Vec<LabeledEmbedding>) -> Result<Self, DataError> {
        let first = items.first().ok_or(DataError::Empty)?;
        let dim = first.vector.len();
        if dim == 0 {
            return Err(DataError::ZeroDimension);
        }
        for (i, item) in items.iter().enumerate() {
            check_vector(&item.vector, dim, i + 1)?;
        }
        let labels = items
            .iter()
            .filter(|it| !it.is_ood())
            .map(|it| it.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Dataset { items, dim, labels })
    }

    pub fn items(&self) -> &[LabeledEmbedding] {
        &self.items
    }

    pub fn into_items(self) -> Vec<LabeledEmbedding> {
        self.items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn ood_count(&self) -> usize {
        self.items.iter().filter(|it| it.is_ood()).count()
    }

    /// Per-class example counts, indexed like [`Dataset::labels`].
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for item in &self.items {
            if let Some(i) = self.class_index(&item.label) {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Pairs every in-domain vector with its class index.
    pub fn indexed(&self) -> Vec<(&[f64], usize)> {
        self.items
            .iter()
            .filter_map(|it| {
                self.class_index(&it.label)
                    .map(|c| (it.vector.as_slice(), c))
            })
            .collect()
    }

    /// Fails when the dataset contains out-of-domain rows, which training
    /// data may not.
    pub fn require_no_ood(&self) -> Result<(), DataError> {
        if self.items.iter().any(LabeledEmbedding::is_ood) {
            Err(DataError::ReservedLabel)
        } else {
            Ok(())
        }
    }

    /// SHA-256 over dimension, labels and the exact bits of every vector.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for item in &self.items {
            h.update((item.label.len() as u64).to_le_bytes());
            h.update(item.label.as_bytes());
            for v in &item.vector {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn check_vector(v: &[f64], dim: usize, line: usize) -> Result<(), DataError> {
    if v.len() != dim {
        return Err(DataError::DimensionMismatch {
            line,
            expected: dim,
            found: v.len(),
        });
    }
    if let Some(component) = v.iter().position(|x| !x.is_finite()) {
        return Err(DataError::NonFinite { line, component });
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonlRow {
    label: String,
    vector: Vec<f64>,
    #[serde(default)]
    text: Option<String>,
}

/// Reads a dataset, preserving file order. Blank lines in JSONL are skipped.
pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let items = match format {
        Format::Jsonl => read_jsonl(BufReader::new(file)).map_err(|e| match e {
            ReadError::Io(source) => io_err(source),
            ReadError::Data(d) => d,
        })?,
        Format::Csv => read_csv(file)?,
    };
    Dataset::new(items)
}

enum ReadError {
    Io(io::Error),
    Data(DataError),
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<LabeledEmbedding>, ReadError> {
    let mut items = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(ReadError::Io)?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&line).map_err(|e| {
            ReadError::Data(DataError::Parse {
                line: lineno,
                message: e.to_string(),
            })
        })?;
        let d = *dim.get_or_insert(row.vector.len());
        check_vector(&row.vector, d, lineno).map_err(ReadError::Data)?;
        items.push(LabeledEmbedding {
            label: row.label,
            vector: row.vector,
            text: row.text,
        });
    }
    Ok(items)
}

fn read_csv<R: io::Read>(reader: R) -> Result<Vec<LabeledEmbedding>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() {
        return Err(DataError::Empty);
    }
    if &header[0] != "label" {
        return Err(DataError::Parse {
            line: 1,
            message: "first header column must be `label`".into(),
        });
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("v{j}") {
            return Err(DataError::Parse {
                line: 1,
                message: format!("header column {} must be `v{j}`, found `{name}`", j + 1),
            });
        }
    }
    let dim = header.len() - 1;
    let mut items = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            match e.into_kind() {
                csv::ErrorKind::UnequalLengths { len, .. } => DataError::DimensionMismatch {
                    line,
                    expected: dim,
                    found: (len as usize).saturating_sub(1),
                },
                kind => DataError::Parse {
                    line,
                    message: format!("{kind:?}"),
                },
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let vector = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().map_err(|e| DataError::Parse {
                    line,
                    message: format!("column v{j}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        check_vector(&vector, dim, line)?;
        items.push(LabeledEmbedding::new(&record[0], vector));
    }
    Ok(items)
}

#[derive(Deserialize)]
struct QueryRow {
    vector: Vec<f64>,
}

/// Reads bare query vectors for inference. Labels and text are optional and
/// ignored; an empty file yields no vectors. Dimensions must agree.
pub fn load_vectors(path: &Path, format: Format) -> Result<Vec<Vec<f64>>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        Format::Jsonl => {
            let file = fs::File::open(path).map_err(io_err)?;
            let mut out: Vec<Vec<f64>> = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: QueryRow = serde_json::from_str(&line).map_err(|e| DataError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                let dim = out.first().map_or(row.vector.len(), Vec::len);
                if dim == 0 {
                    return Err(DataError::ZeroDimension);
                }
                check_vector(&row.vector, dim, i + 1)?;
                out.push(row.vector);
            }
            Ok(out)
        }
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(io_err)?;
            if text.trim().is_empty() {
                return Ok(Vec::new());
            }
            Ok(read_csv(text.as_bytes())?.into_iter().map(|it| it.vector).collect())
        }
    }
}

/// Formats one JSONL row exactly as the interchange contract prescribes.
pub fn jsonl_row(item: &LabeledEmbedding) -> String {
    let mut s = String::with_capacity(32 + 24 * item.vector.len());
    s.push_str("{\"label\": ");
    s.push_str(&serde_json::to_string(&item.label).expect("string serialization"));
    s.push_str(", \"vector\": [");
    for (j, v) in item.vector.iter().enumerate() {
        if j > 0 {
            s.push_str(", ");
        }
        s.push_str(&serde_json::to_string(v).expect("finite float"));
    }
    s.push(']');
    if let Some(text) = &item.text {
        s.push_str(", \"text\": ");
        s.push_str(&serde_json::to_string(text).expect("string serialization"));
    }
    s.push('}');
    s
}

/// Serializes a dataset in the given format (LF line endings).
pub fn encode_dataset(dataset: &Dataset, format: Format) -> Vec<u8> {
    match format {
        Format::Jsonl => {
            let mut out = String::new();
            for item in dataset.items() {
                out.push_str(&jsonl_row(item));
                out.push('\n');
            }
            out.into_bytes()
        }
        Format::Csv => {
            let mut wtr = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let mut header = vec!["label".to_string()];
            header.extend((0..dataset.dim()).map(|j| format!("v{j}")));
            wtr.write_record(&header).expect("in-memory write");
            for item in dataset.items() {
                let mut rec = vec![item.label.clone()];
                rec.extend(
                    item.vector
                        .iter()
                        .map(|v| serde_json::to_string(v).expect("finite float")),
                );
                wtr.write_record(&rec).expect("in-memory write");
            }
            wtr.into_inner().expect("in-memory flush")
        }
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path, format: Format) -> io::Result<()> {
    util::write_atomic(path, &encode_dataset(dataset, format))
}

/// Parameters of one known/unknown class split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub known_ratio: f64,
    pub seed: u64,
    pub run_index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    /// Sorted names of the classes treated as known.
    pub known_labels: Vec<String>,
    /// Training rows of known classes only.
    pub train: Dataset,
    /// Every test row; rows of unknown classes carry [`OOD_LABEL`].
    pub test: Dataset,
}

/// `ceil(ratio · total)`, robust to the representation error of products
/// such as `0.7 · 10`.
pub fn known_class_count(ratio: f64, total: usize) -> usize {
    let exact = ratio * total as f64;
    let nearest = exact.round();
    if (exact - nearest).abs() <= 1e-9 * exact.max(1.0) {
        nearest as usize
    } else {
        exact.ceil() as usize
    }
}

/// Selects known classes uniformly at random (keyed by seed and run index),
/// drops unknown-class training rows, and relabels unknown-class test rows
/// as out-of-domain. Native out-of-domain test rows stay out-of-domain.
pub fn make_split(train: &Dataset, test: &Dataset, spec: &SplitSpec) -> Result<SplitResult, DataError> {
    let ratio = spec.known_ratio;
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    train.require_no_ood()?;
    let total = train.labels().len();
    if total < 2 {
        return Err(DataError::TooFewClasses(total));
    }
    if train.dim() != test.dim() {
        return Err(DataError::SplitDimension {
            train: train.dim(),
            test: test.dim(),
        });
    }
    if let Some(l) = test.labels().iter().find(|l| train.class_index(l).is_none()) {
        return Err(DataError::UnknownTestLabel(l.clone()));
    }
    let known = known_class_count(ratio, total);
    if known < 2 {
        return Err(DataError::TooFewKnownClasses { ratio, known, total });
    }

    let mut rng = keyed_rng(spec.seed, spec.run_index);
    let mut picked = index::sample(&mut rng, total, known).into_vec();
    picked.sort_unstable();
    let mut is_known = vec![false; total];
    for &i in &picked {
        is_known[i] = true;
    }
    let known_labels: Vec<String> = picked.iter().map(|&i| train.labels()[i].clone()).collect();

    let train_items: Vec<LabeledEmbedding> = train
        .items()
        .iter()
        .filter(|it| train.class_index(&it.label).is_some_and(|c| is_known[c]))
        .cloned()
        .collect();
    if train_items.is_empty() {
        return Err(DataError::EmptyTrain);
    }
    let test_items = test
        .items()
        .iter()
        .map(|it| {
            let keep = train.class_index(&it.label).is_some_and(|c| is_known[c]);
            let mut it = it.clone();
            if !keep {
                it.label = OOD_LABEL.to_string();
            }
            it
        })
        .collect();

    Ok(SplitResult {
        known_labels,
        train: Dataset::new(train_items)?,
        test: Dataset::new(test_items)?,
    })
}

/// Shape of a synthetic blob dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// Class name used by the blob generator, zero-padded so lexical order
/// matches numeric order.
pub fn blob_label(class: usize, classes: usize) -> String {
    let width = classes.saturating_sub(1).to_string().len();
    format!("class_{class:0width$}")
}

/// Generates `classes` unit-norm centers pairwise at least 60 degrees apart
/// plus isotropic Gaussian noise of scale `sigma` per component. Train and
/// test each hold `per_class` points per class, in class-major order.
pub fn synth_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset), DataError> {
    let BlobSpec {
        classes: k,
        dim,
        per_class,
        sigma,
        seed,
    } = *spec;
    if k < 2 {
        return Err(DataError::InvalidSynth(format!("need at least 2 classes, got {k}")));
    }
    if dim < 2 {
        return Err(DataError::InvalidSynth(format!("need dimension >= 2, got {dim}")));
    }
    if per_class < 2 {
        return Err(DataError::InvalidSynth(format!(
            "need at least 2 points per class, got {per_class}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::InvalidSynth(format!("sigma must be >= 0, got {sigma}")));
    }

    let mut rng = keyed_rng(seed, 0);
    let centers = sample_centers(&mut rng, k, dim)?;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<LabeledEmbedding> {
        let mut items = Vec::with_capacity(k * per_class);
        for (c, center) in centers.iter().enumerate() {
            let label = blob_label(c, k);
            for _ in 0..per_class {
                let v = center
                    .iter()
                    .map(|&x| {
                        let z: f64 = StandardNormal.sample(rng);
                        x + sigma * z
                    })
                    .collect();
                items.push(LabeledEmbedding::new(label.clone(), v));
            }
        }
        items
    };
    let train = draw(&mut rng);
    let test = draw(&mut rng);
    Ok((Dataset::new(train)?, Dataset::new(test)?))
}

fn sample_centers<R: Rng>(rng: &mut R, k: usize, dim: usize) -> Result<Vec<Vec<f64>>, DataError> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    while centers.len() < k {
        let mut placed = false;
        for _ in 0..CENTER_RETRY_LIMIT {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let Some((c, _)) = util::unit(&raw) else {
                continue;
            };
            if centers.iter().all(|o| util::dot(o, &c) <= MIN_CENTER_COS) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(DataError::CenterSampling { k, dim });
        }
    }
    Ok(centers)
}

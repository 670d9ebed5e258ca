//! Dataset ingestion: libsvm and CSV parsing, label normalization, seeded
//! permutation and optional min-max scaling.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OklError, Result};
use crate::kernel::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    /// `sign(v)` with `sign(0) = +1`.
    pub fn from_margin(v: f64) -> Self {
        if v >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub instance: Instance,
    pub label: Label,
    /// Position in the file the example was read from.
    pub source_index: usize,
}

impl LabeledExample {
    pub fn features(&self) -> &[f64] {
        self.instance.features().unwrap_or(&[])
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub dimension: usize,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Libsvm,
    Csv,
}

impl Format {
    /// Guesses the format from a file name, looking through a `.gz` suffix.
    pub fn from_path(path: &Path) -> Option<Format> {
        let name = path.file_name()?.to_str()?.to_ascii_lowercase();
        let name = name.strip_suffix(".gz").unwrap_or(&name);
        if name.ends_with(".csv") {
            Some(Format::Csv)
        } else if name.ends_with(".libsvm") || name.ends_with(".svm") || name.ends_with(".txt") {
            Some(Format::Libsvm)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CsvOptions {
    pub label_column: usize,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { label_column: 0, has_header: false }
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn instances(&self) -> Vec<Instance> {
        self.examples.iter().map(|e| e.instance.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Seeded shuffle of the example order.
    pub fn permute(&self, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut examples = self.examples.clone();
        examples.shuffle(&mut rng);
        Dataset { examples, dimension: self.dimension, name: self.name.clone() }
    }

    /// Rescales each feature to `[0, 1]`; constant features become 0.
    pub fn min_max_scaled(&self) -> Dataset {
        let d = self.dimension;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for e in &self.examples {
            for (j, v) in e.features().iter().enumerate() {
                lo[j] = lo[j].min(*v);
                hi[j] = hi[j].max(*v);
            }
        }
        let examples = self
            .examples
            .iter()
            .map(|e| {
                let f: Vec<f64> = e
                    .features()
                    .iter()
                    .enumerate()
                    .map(|(j, v)| if hi[j] > lo[j] { (v - lo[j]) / (hi[j] - lo[j]) } else { 0.0 })
                    .collect();
                LabeledExample { instance: Instance::dense(f), label: e.label, source_index: e.source_index }
            })
            .collect();
        Dataset { examples, dimension: d, name: self.name.clone() }
    }

    /// Splits into the first `round(fraction·n)` examples and the rest.
    pub fn split(&self, fraction: f64) -> (Dataset, Dataset) {
        let cut = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let mk = |ex: &[LabeledExample], suffix: &str| Dataset {
            examples: ex.to_vec(),
            dimension: self.dimension,
            name: format!("{}-{suffix}", self.name),
        };
        (mk(&self.examples[..cut], "train"), mk(&self.examples[cut..], "test"))
    }

    /// Writes the dataset in libsvm format, omitting zero features.
    pub fn write_libsvm<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.examples {
            let tag = match e.label {
                Label::Positive => "+1",
                Label::Negative => "-1",
            };
            write!(out, "{tag}")?;
            for (j, v) in e.features().iter().enumerate() {
                if *v != 0.0 {
                    write!(out, " {}:{}", j + 1, v)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Maps raw numeric labels onto `{−1, +1}`: `{−1, +1}` is kept, `{1, 2}`
/// becomes `{+1, −1}` and `{0, 1}` becomes `{−1, +1}`.
fn label_mapping(raw: &[f64]) -> Result<impl Fn(f64) -> Label> {
    let distinct: BTreeSet<i64> = raw
        .iter()
        .map(|v| if v.fract() == 0.0 && v.abs() < 1e15 { Ok(*v as i64) } else { Err(*v) })
        .collect::<std::result::Result<_, _>>()
        .map_err(|v| OklError::Labels(vec![v.to_string()]))?;
    let within = |set: &[i64]| distinct.iter().all(|v| set.contains(v));
    let positive = if within(&[-1, 1]) {
        1
    } else if within(&[1, 2]) {
        1
    } else if within(&[0, 1]) {
        1
    } else {
        return Err(OklError::Labels(distinct.iter().map(|v| v.to_string()).collect()));
    };
    Ok(move |v: f64| if v as i64 == positive { Label::Positive } else { Label::Negative })
}

fn parse_number(s: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| OklError::Parse { line, msg: format!("invalid {what} {s:?}") })?;
    if !v.is_finite() {
        return Err(OklError::Parse { line, msg: format!("non-finite {what} {s:?}") });
    }
    Ok(v)
}

/// Parses `<label> <idx>:<val> ...` lines with 1-based ascending indices.
/// Blank lines and `#` comments are skipped. Features are padded with zeros
/// to the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dimension = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label = parse_number(tokens.next().unwrap_or(""), line_no, "label")?;
        let mut row = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| OklError::Parse { line: line_no, msg: format!("expected index:value, got {tok:?}") })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| OklError::Parse { line: line_no, msg: format!("invalid index {idx:?}") })?;
            if idx == 0 {
                return Err(OklError::Parse { line: line_no, msg: "indices are 1-based".into() });
            }
            if idx <= last {
                return Err(OklError::Parse { line: line_no, msg: format!("index {idx} does not ascend past {last}") });
            }
            last = idx;
            row.push((idx, parse_number(val, line_no, "value")?));
        }
        dimension = dimension.max(last);
        raw_labels.push(label);
        rows.push(row);
    }
    let map = label_mapping(&raw_labels)?;
    let examples = rows
        .into_iter()
        .zip(&raw_labels)
        .enumerate()
        .map(|(source_index, (row, y))| {
            let mut f = vec![0.0; dimension];
            for (idx, v) in row {
                f[idx - 1] = v;
            }
            LabeledExample { instance: Instance::dense(f), label: map(*y), source_index }
        })
        .collect();
    Ok(Dataset { examples, dimension, name: name.to_string() })
}

/// Parses numeric CSV. All columns other than `label_column` are features.
pub fn parse_csv<R: Read>(reader: R, options: CsvOptions, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut raw_labels = Vec::new();
    let mut rows = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1 + usize::from(options.has_header);
        let record = record.map_err(|e| OklError::Parse { line, msg: e.to_string() })?;
        match width {
            None => {
                if options.label_column >= record.len() {
                    return Err(OklError::Parse {
                        line,
                        msg: format!("label column {} out of range for {} columns", options.label_column, record.len()),
                    });
                }
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(OklError::Parse { line, msg: format!("ragged row: {} columns, expected {w}", record.len()) });
            }
            _ => {}
        }
        let mut features = Vec::with_capacity(record.len().saturating_sub(1));
        for (j, cell) in record.iter().enumerate() {
            let v = parse_number(cell, line, "cell")?;
            if j == options.label_column {
                raw_labels.push(v);
            } else {
                features.push(v);
            }
        }
        rows.push(features);
    }
    let map = label_mapping(&raw_labels)?;
    let dimension = width.map_or(0, |w| w - 1);
    let examples = rows
        .into_iter()
        .zip(&raw_labels)
        .enumerate()
        .map(|(source_index, (f, y))| LabeledExample { instance: Instance::dense(f), label: map(*y), source_index })
        .collect();
    Ok(Dataset { examples, dimension, name: name.to_string() })
}

/// Opens `path`, decompressing when it ends in `.gz`.
fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    Ok(if gz { Box::new(BufReader::new(GzDecoder::new(file))) } else { Box::new(BufReader::new(file)) })
}

/// Dataset name derived from a path: the file name without format and
/// compression suffixes.
pub fn dataset_name(path: &Path) -> String {
    let mut name = path.file_name().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
    for suffix in [".gz", ".libsvm", ".svm", ".csv", ".txt"] {
        if let Some(s) = name.strip_suffix(suffix) {
            name = s.to_string();
        }
    }
    name
}

pub fn load(path: &Path, format: Format, csv: CsvOptions) -> Result<Dataset> {
    let reader = open(path)?;
    let name = dataset_name(path);
    match format {
        Format::Libsvm => parse_libsvm(reader, &name),
        Format::Csv => parse_csv(reader, csv, &name),
    }
}

//! UCR-format dataset ingestion, validation, and deterministic stratified
//! k-fold splitting.
//!
//! The on-disk format is one instance per line: a numeric class label, then
//! the series values, tab-separated (comma-separated when the file extension
//! is `.csv`). No header line. Labels are remapped to contiguous ids
//! `0..C-1` in ascending order of their original values at load time; the
//! remapping table is retained so artifacts can report original labels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::fmt_sig12;

/// One labeled series. `label` is the remapped class id.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    pub label: usize,
}

/// A validated, equal-length, immutable collection of labeled series.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    series: Vec<TimeSeries>,
    /// Original label values, indexed by remapped class id (ascending).
    label_map: Vec<i64>,
    series_length: usize,
}

impl Dataset {
    /// Builds a dataset from `(original_label, values)` rows, remapping
    /// labels and enforcing the structural invariants.
    pub fn from_rows(name: &str, rows: Vec<(i64, Vec<f64>)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyFile { path: name.into() });
        }
        let series_length = rows[0].1.len();
        let mut label_map: Vec<i64> = rows.iter().map(|(l, _)| *l).collect();
        label_map.sort_unstable();
        label_map.dedup();
        if label_map.len() < 2 {
            return Err(Error::SingleClass { name: name.to_string() });
        }
        let series = rows
            .into_iter()
            .map(|(orig, values)| {
                debug_assert_eq!(values.len(), series_length);
                let label = label_map.binary_search(&orig).expect("label seen above");
                TimeSeries { values, label }
            })
            .collect();
        Ok(Dataset { name: name.to_string(), series, label_map, series_length })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn series_length(&self) -> usize {
        self.series_length
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    /// Remapped class id -> original label value.
    pub fn label_map(&self) -> &[i64] {
        &self.label_map
    }

    /// Remapped labels in instance order.
    pub fn labels(&self) -> Vec<usize> {
        self.series.iter().map(|s| s.label).collect()
    }

    /// Per-series z-normalization (mean 0, population std 1). Constant
    /// series are shifted to zero and left unscaled.
    pub fn znormalize(&mut self) {
        for s in &mut self.series {
            let n = s.values.len() as f64;
            let mean = s.values.iter().sum::<f64>() / n;
            let var = s.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            for v in &mut s.values {
                *v -= mean;
                if std > 0.0 {
                    *v /= std;
                }
            }
        }
    }

    /// Re-serializes to the tab-separated on-disk format with original
    /// labels and 12-significant-digit values.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for s in &self.series {
            write!(out, "{}", self.label_map[s.label]).unwrap();
            for v in &s.values {
                out.push('\t');
                out.push_str(&fmt_sig12(*v));
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Loads a label-first TSV (or CSV, by extension) dataset from disk.
pub fn load_ucr_tsv(path: &Path) -> Result<Dataset> {
    let sep = separator_for(path);
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());

    let mut rows: Vec<(i64, Vec<f64>)> = Vec::new();
    let mut expected_len: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(sep);
        let label_text = fields.next().unwrap_or("");
        let label = parse_label(label_text).ok_or_else(|| Error::NonNumericField {
            path: path.to_path_buf(),
            line: line_no,
            column: 1,
            text: label_text.to_string(),
        })?;
        let mut values = Vec::new();
        for (col, field) in fields.enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericField {
                path: path.to_path_buf(),
                line: line_no,
                column: col + 2,
                text: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericField {
                    path: path.to_path_buf(),
                    line: line_no,
                    column: col + 2,
                    text: field.to_string(),
                });
            }
            values.push(v);
        }
        match expected_len {
            None => {
                if values.len() < 2 {
                    return Err(Error::SeriesTooShort {
                        path: path.to_path_buf(),
                        line: line_no,
                        len: values.len(),
                    });
                }
                expected_len = Some(values.len());
            }
            Some(expected) => {
                if values.len() != expected {
                    return Err(Error::RaggedRows {
                        path: path.to_path_buf(),
                        line: line_no,
                        got: values.len(),
                        expected,
                    });
                }
            }
        }
        rows.push((label, values));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Dataset::from_rows(&name, rows)
}

/// Loads an unlabeled file: every field on a line is a series value.
pub fn load_unlabeled(path: &Path) -> Result<Vec<Vec<f64>>> {
    let sep = separator_for(path);
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut values = Vec::new();
        for (col, field) in line.split(sep).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::NonNumericField {
                path: path.to_path_buf(),
                line: line_no,
                column: col + 1,
                text: field.to_string(),
            })?;
            values.push(v);
        }
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::RaggedRows {
                    path: path.to_path_buf(),
                    line: line_no,
                    got: values.len(),
                    expected: first.len(),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(rows)
}

fn separator_for(path: &Path) -> char {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => ',',
        _ => '\t',
    }
}

/// Labels are integer class identifiers but frequently serialized as floats
/// ("1.0000000e+00"); accept any numeric text with an integral value.
fn parse_label(text: &str) -> Option<i64> {
    let v: f64 = text.trim().parse().ok()?;
    if !v.is_finite() || v.fract() != 0.0 || v.abs() > i64::MAX as f64 {
        return None;
    }
    Some(v as i64)
}

/// One train/validation split. Indices are ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// A deterministic stratified k-fold plan over a dataset.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub seed: u64,
    /// Class ids with fewer than k instances (stratification shortfall).
    pub shortfall: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

/// Splits `d` into `k` stratified folds. Within each class the instances are
/// shuffled by a ChaCha8 generator seeded from `seed` and dealt round-robin;
/// a rotating fold offset keeps overall fold sizes balanced across classes.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("fold count must be >= 2, got {k}")));
    }
    let n = d.len();
    if n < k {
        return Err(Error::TooFewInstances { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut validation: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut shortfall = Vec::new();
    let mut offset = 0usize;
    for class in 0..d.n_classes() {
        let mut members: Vec<usize> = (0..n).filter(|&i| d.series()[i].label == class).collect();
        if members.len() < k {
            shortfall.push(class);
        }
        members.shuffle(&mut rng);
        for (pos, idx) in members.iter().enumerate() {
            validation[(pos + offset) % k].push(*idx);
        }
        offset = (offset + members.len()) % k;
    }
    let folds = validation
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            let in_val: std::collections::HashSet<usize> = val.iter().copied().collect();
            let train = (0..n).filter(|i| !in_val.contains(i)).collect();
            Fold { train, validation: val }
        })
        .collect();
    Ok(FoldPlan { folds, seed, shortfall })
}

//! Sparse datasets and the SVMlight/LibSVM text format.
//!
//! Feature indices are 1-based in files (format convention) and 0-based
//! everywhere inside the crate; the parser and writers are the only places
//! that translate. Values are 64-bit reals and are not scaled unless
//! [`MulticlassDataset::scale_max_abs`] is requested explicitly.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// A sparse feature vector with strictly increasing 0-based indices,
/// finite values, and no explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut prev: Option<u32> = None;
        for &(idx, val) in &entries {
            if let Some(p) = prev {
                if idx <= p {
                    return Err(Error::Data(format!(
                        "sparse vector indices not strictly increasing ({p} then {idx})"
                    )));
                }
            }
            if !val.is_finite() {
                return Err(Error::Data(format!("non-finite value at feature {idx}")));
            }
            if val == 0.0 {
                return Err(Error::Data(format!("explicit zero at feature {idx}")));
            }
            prev = Some(idx);
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }

    /// Dot product against another sorted sparse slice.
    pub fn dot_sparse(&self, other: &[(u32, f64)]) -> f64 {
        let mut acc = 0.0;
        let (mut a, mut b) = (0, 0);
        while a < self.entries.len() && b < other.len() {
            match self.entries[a].0.cmp(&other[b].0) {
                Ordering::Less => a += 1,
                Ordering::Greater => b += 1,
                Ordering::Equal => {
                    acc += self.entries[a].1 * other[b].1;
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }
}

/// Σ over features j in the group of w_j · x_j, where `weights` is a dense
/// block aligned with `members` (sorted feature indices). Features of `x`
/// outside the group contribute nothing.
pub fn dot_on_group(x: &SparseVector, weights: &[f64], members: &[u32]) -> f64 {
    debug_assert_eq!(weights.len(), members.len());
    let entries = x.entries();
    let mut acc = 0.0;
    let (mut a, mut b) = (0, 0);
    while a < entries.len() && b < members.len() {
        match entries[a].0.cmp(&members[b]) {
            Ordering::Less => a += 1,
            Ordering::Greater => b += 1,
            Ordering::Equal => {
                acc += entries[a].1 * weights[b];
                a += 1;
                b += 1;
            }
        }
    }
    acc
}

/// out += coeff · (x ⊙ d) restricted to the group block, `out` aligned
/// with `members`.
pub fn axpy_on_group(x: &SparseVector, members: &[u32], coeff: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), members.len());
    let entries = x.entries();
    let (mut a, mut b) = (0, 0);
    while a < entries.len() && b < members.len() {
        match entries[a].0.cmp(&members[b]) {
            Ordering::Less => a += 1,
            Ordering::Greater => b += 1,
            Ordering::Equal => {
                out[b] += coeff * entries[a].1;
                a += 1;
                b += 1;
            }
        }
    }
}

/// Labeled dataset with raw class tokens, before any one-vs-rest mapping.
#[derive(Debug, Clone)]
pub struct MulticlassDataset {
    examples: Arc<Vec<SparseVector>>,
    raw_labels: Vec<String>,
    classes: Vec<String>,
    n_features: u32,
}

/// Binary view of a dataset: labels in {−1, +1}, examples shared with the
/// multiclass source rather than copied.
#[derive(Debug, Clone)]
pub struct SparseDataset {
    examples: Arc<Vec<SparseVector>>,
    labels: Vec<i8>,
    n_features: u32,
}

/// Orders class tokens numerically when both parse as finite numbers,
/// lexicographically otherwise. Keeps "+1"/"-1" and "0"/"1" datasets sane.
pub fn class_token_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => {
            x.partial_cmp(&y).unwrap_or(Ordering::Equal)
        }
        _ => a.cmp(b),
    }
}

impl MulticlassDataset {
    /// Parses SVMlight/LibSVM text: `<label> <idx>:<val> ...` per line,
    /// `#` starts a comment, blank lines are skipped. Indices are 1-based
    /// and must be strictly increasing within a line; explicit zero values
    /// are accepted and dropped.
    pub fn parse_svmlight<R: BufRead>(reader: R) -> Result<Self> {
        let mut examples = Vec::new();
        let mut raw_labels = Vec::new();
        let mut n_features: u32 = 0;

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => &line[..],
            };
            let mut tokens = line.split_whitespace();
            let label = match tokens.next() {
                Some(tok) => tok,
                None => continue, // blank or comment-only line
            };
            if label.contains(':') {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("missing label before feature '{label}'"),
                });
            }

            let mut entries = Vec::new();
            let mut prev_idx: u32 = 0;
            for tok in tokens {
                let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: format!("expected <index>:<value>, got '{tok}'"),
                })?;
                let idx: u32 = idx_s.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid feature index '{idx_s}'"),
                })?;
                if idx == 0 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "feature indices are 1-based; got 0".into(),
                    });
                }
                let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid feature value '{val_s}'"),
                })?;
                if !val.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-finite feature value '{val_s}'"),
                    });
                }
                if idx <= prev_idx {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("indices not increasing at line {lineno}"),
                    });
                }
                prev_idx = idx;
                n_features = n_features.max(idx);
                if val != 0.0 {
                    entries.push((idx - 1, val));
                }
            }

            examples.push(SparseVector { entries });
            raw_labels.push(label.to_string());
        }

        if examples.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "empty dataset: no examples found".into(),
            });
        }

        let mut classes: Vec<String> = raw_labels.clone();
        classes.sort_by(|a, b| class_token_cmp(a, b));
        classes.dedup();

        Ok(Self {
            examples: Arc::new(examples),
            raw_labels,
            classes,
            n_features,
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse_svmlight(text.as_bytes())
    }

    /// Writes the dataset back out in SVMlight text form (1-based indices,
    /// shortest round-tripping float representation).
    pub fn write_svmlight<W: Write>(&self, w: &mut W) -> Result<()> {
        for (x, label) in self.examples.iter().zip(&self.raw_labels) {
            write!(w, "{label}")?;
            for &(idx, val) in x.entries() {
                write!(w, " {}:{}", idx + 1, val)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn raw_labels(&self) -> &[String] {
        &self.raw_labels
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    /// One-vs-rest binary view: +1 where the raw label equals
    /// `positive_class`, −1 elsewhere. Examples are shared, not copied.
    pub fn binarize(&self, positive_class: &str) -> Result<SparseDataset> {
        if !self.classes.iter().any(|c| c == positive_class) {
            return Err(Error::Data(format!(
                "unknown class '{positive_class}' (classes: {})",
                self.classes.join(", ")
            )));
        }
        let labels = self
            .raw_labels
            .iter()
            .map(|l| if l == positive_class { 1 } else { -1 })
            .collect();
        Ok(SparseDataset {
            examples: Arc::clone(&self.examples),
            labels,
            n_features: self.n_features,
        })
    }

    /// For two-class data: the token mapped to +1 unless overridden
    /// (the numerically/lexicographically larger one).
    pub fn binary_positive_class(&self) -> Result<&str> {
        if self.classes.len() != 2 {
            return Err(Error::Data(format!(
                "binary mode requires exactly two classes, found {}",
                self.classes.len()
            )));
        }
        Ok(&self.classes[1])
    }

    /// Per-feature max-|value| scaling; returns a new dataset. Off by
    /// default everywhere, opt-in via the CLI flag.
    pub fn scale_max_abs(&self) -> Self {
        let mut max_abs = vec![0.0f64; self.n_features as usize];
        for x in self.examples.iter() {
            for &(idx, val) in x.entries() {
                let m = &mut max_abs[idx as usize];
                *m = m.max(val.abs());
            }
        }
        let examples = self
            .examples
            .iter()
            .map(|x| SparseVector {
                entries: x
                    .entries()
                    .iter()
                    .map(|&(idx, val)| (idx, val / max_abs[idx as usize]))
                    .collect(),
            })
            .collect();
        Self {
            examples: Arc::new(examples),
            raw_labels: self.raw_labels.clone(),
            classes: self.classes.clone(),
            n_features: self.n_features,
        }
    }
}

impl SparseDataset {
    pub fn new(examples: Vec<SparseVector>, labels: Vec<i8>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("dataset must contain at least one example".into()));
        }
        if examples.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::Data(format!("labels must be ±1, got {bad}")));
        }
        let n_features = examples
            .iter()
            .filter_map(|x| x.max_index())
            .max()
            .map_or(0, |m| m + 1);
        Ok(Self {
            examples: Arc::new(examples),
            labels,
            n_features,
        })
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &SparseVector {
        &self.examples[i]
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.labels.iter().filter(|&&l| l == -1).count()
    }

    /// Training needs at least one example of each label.
    pub fn check_trainable(&self) -> Result<()> {
        if self.n_pos() == 0 || self.n_neg() == 0 {
            return Err(Error::Degenerate(format!(
                "{} positive and {} negative examples",
                self.n_pos(),
                self.n_neg()
            )));
        }
        Ok(())
    }
}

//! Evaluation protocols for trained models: thresholded F1 and accuracy,
//! top-k precision/recall (including Rec@2p), PRBEP at the top-p operating
//! point, and macro-averaging over one-vs-rest classes.

use crate::error::{Error, Result};
use crate::loss::{ContingencyTable, LossSpec};
use std::fmt::Write as _;

/// Example indices ordered by score descending, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    idx
}

fn check_lengths(scores: &[f64], y: &[i8]) -> Result<usize> {
    if scores.len() != y.len() {
        return Err(Error::Data(format!(
            "scores and labels disagree: {} vs {}",
            scores.len(),
            y.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Data("cannot evaluate an empty sample".into()));
    }
    Ok(scores.len())
}

fn table_at_k(scores: &[f64], y: &[i8], k: usize) -> ContingencyTable {
    let order = ranking(scores);
    let mut pred = vec![-1i8; y.len()];
    for &i in order.iter().take(k) {
        pred[i] = 1;
    }
    ContingencyTable::from_labels(y, &pred).expect("lengths checked")
}

/// Predicts +1 for exactly the k highest scores and reports
/// (Prec@k, Rec@k) on the 0–100 scale.
pub fn eval_at_k(scores: &[f64], y: &[i8], k: usize) -> Result<(f64, f64)> {
    let n = check_lengths(scores, y)?;
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} out of range 1..={n}")));
    }
    let t = table_at_k(scores, y, k);
    debug_assert_eq!(t.tpc + t.fpc, k);
    let prec = 100.0 * t.tpc as f64 / k as f64;
    let p = t.positives();
    let rec = if p == 0 {
        100.0 // vacuous: nothing to recall
    } else {
        100.0 * t.tpc as f64 / p as f64
    };
    Ok((prec, rec))
}

/// Rec@2p: recall when twice the number of positives is predicted
/// positive; k clamps to n when 2p exceeds it. Returns (value, k used).
pub fn eval_rec_at_2p(scores: &[f64], y: &[i8]) -> Result<(f64, usize)> {
    check_lengths(scores, y)?;
    let p = y.iter().filter(|&&l| l == 1).count();
    if p == 0 {
        return Err(Error::Degenerate(
            "rec@2p undefined without positive examples".into(),
        ));
    }
    let k = (2 * p).min(y.len());
    let (_, rec) = eval_at_k(scores, y, k)?;
    Ok((rec, k))
}

/// PRBEP evaluated at the top-p operating point, the unique point with
/// a + b = p = a + c where precision equals recall.
pub fn eval_prbep(scores: &[f64], y: &[i8]) -> Result<f64> {
    check_lengths(scores, y)?;
    let p = y.iter().filter(|&&l| l == 1).count();
    if p == 0 {
        return Err(Error::Degenerate(
            "prbep undefined without positive examples".into(),
        ));
    }
    let t = table_at_k(scores, y, p);
    debug_assert_eq!(t.fpc, t.fnc);
    Ok(100.0 * t.tpc as f64 / p as f64)
}

fn table_at_zero(scores: &[f64], y: &[i8]) -> ContingencyTable {
    let pred: Vec<i8> = scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
    ContingencyTable::from_labels(y, &pred).expect("lengths checked")
}

/// F1 of the sign-thresholded prediction (score 0 counts as +1).
pub fn eval_f1(scores: &[f64], y: &[i8]) -> Result<f64> {
    check_lengths(scores, y)?;
    let t = table_at_zero(scores, y);
    Ok(100.0 - LossSpec::f1().loss_value(&t)?)
}

/// Accuracy of the sign-thresholded prediction, 0–100.
pub fn eval_accuracy(scores: &[f64], y: &[i8]) -> Result<f64> {
    let n = check_lengths(scores, y)?;
    let t = table_at_zero(scores, y);
    Ok(100.0 * (t.tpc + t.tnc) as f64 / n as f64)
}

/// A named measure to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    F1,
    Accuracy,
    Prbep,
    RecAt2p,
    PrecAtK(usize),
    RecAtK(usize),
}

impl Measure {
    /// Parses a CLI token: f1 | accuracy | prbep | rec@2p | prec@k | rec@k
    /// (the latter two take k from the shared --k flag).
    pub fn from_cli(name: &str, k: Option<usize>) -> Result<Self> {
        let need_k = || {
            k.ok_or_else(|| Error::Config(format!("measure '{name}' requires --k")))
        };
        match name {
            "f1" => Ok(Self::F1),
            "accuracy" | "acc" => Ok(Self::Accuracy),
            "prbep" => Ok(Self::Prbep),
            "rec@2p" => Ok(Self::RecAt2p),
            "prec@k" => Ok(Self::PrecAtK(need_k()?)),
            "rec@k" => Ok(Self::RecAtK(need_k()?)),
            other => Err(Error::Config(format!(
                "unknown measure '{other}' (expected f1|accuracy|prbep|rec@2p|prec@k|rec@k)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::F1 => "f1".into(),
            Self::Accuracy => "accuracy".into(),
            Self::Prbep => "prbep".into(),
            Self::RecAt2p => "rec@2p".into(),
            Self::PrecAtK(k) => format!("prec@{k}"),
            Self::RecAtK(k) => format!("rec@{k}"),
        }
    }

    /// Evaluates on one score/label vector; returns the 0–100 value plus
    /// the resolved k when an @k protocol was involved. Recall-dependent
    /// measures are undefined on a class without positives (the report
    /// layer skips them with a warning); accuracy and prec@k stay defined.
    pub fn evaluate(&self, scores: &[f64], y: &[i8]) -> Result<(f64, Option<usize>)> {
        let needs_positives = matches!(self, Self::F1 | Self::RecAtK(_));
        if needs_positives && !y.contains(&1) {
            return Err(Error::Degenerate(format!(
                "{} undefined without positive examples",
                self.name()
            )));
        }
        match *self {
            Self::F1 => Ok((eval_f1(scores, y)?, None)),
            Self::Accuracy => Ok((eval_accuracy(scores, y)?, None)),
            Self::Prbep => Ok((eval_prbep(scores, y)?, None)),
            Self::RecAt2p => {
                let (v, k) = eval_rec_at_2p(scores, y)?;
                Ok((v, Some(k)))
            }
            Self::PrecAtK(k) => Ok((eval_at_k(scores, y, k)?.0, Some(k))),
            Self::RecAtK(k) => Ok((eval_at_k(scores, y, k)?.1, Some(k))),
        }
    }
}

/// One evaluated class row.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub class: String,
    /// (measure name, value, resolved k) in request order; None where the
    /// measure was skipped for this class.
    pub values: Vec<(String, Option<f64>, Option<usize>)>,
}

/// Per-class values plus their unweighted macro average.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_class: Vec<ClassReport>,
    /// (measure name, macro mean over classes where defined).
    pub macro_avg: Vec<(String, Option<f64>)>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Evaluates every measure on every (class, scores) pair. Classes where
    /// a measure is undefined (e.g. no positives for rec@2p) are skipped
    /// with a warning and excluded from that measure's macro average.
    pub fn build(
        classes: &[(String, Vec<f64>, Vec<i8>)],
        measures: &[Measure],
    ) -> Result<Self> {
        let mut per_class = Vec::new();
        let mut warnings = Vec::new();
        for (class, scores, labels) in classes {
            let mut values = Vec::new();
            for m in measures {
                match m.evaluate(scores, labels) {
                    Ok((v, k)) => values.push((m.name(), Some(v), k)),
                    Err(Error::Degenerate(why)) => {
                        warnings.push(format!("class '{class}': {} skipped ({why})", m.name()));
                        values.push((m.name(), None, None));
                    }
                    Err(e) => return Err(e),
                }
            }
            per_class.push(ClassReport {
                class: class.clone(),
                values,
            });
        }
        let mut macro_avg = Vec::new();
        for (mi, m) in measures.iter().enumerate() {
            let defined: Vec<f64> = per_class
                .iter()
                .filter_map(|c| c.values[mi].1)
                .collect();
            let mean = (!defined.is_empty())
                .then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            macro_avg.push((m.name(), mean));
        }
        Ok(Self {
            per_class,
            macro_avg,
            warnings,
        })
    }

    /// Line-oriented machine format: `measure<TAB>class<TAB>value`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for class in &self.per_class {
            for (name, value, _) in &class.values {
                if let Some(v) = value {
                    let _ = writeln!(out, "{name}\t{}\t{v:.4}", class.class);
                }
            }
        }
        for (name, value) in &self.macro_avg {
            if let Some(v) = value {
                let _ = writeln!(out, "{name}\tmacro\t{v:.4}");
            }
        }
        out
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<18} {:<14} {:>10}", "measure", "class", "value");
        for class in &self.per_class {
            for (name, value, k) in &class.values {
                let label = match k {
                    Some(k) => format!("{name} (k={k})"),
                    None => name.clone(),
                };
                match value {
                    Some(v) => {
                        let _ = writeln!(out, "{label:<18} {:<14} {v:>10.4}", class.class);
                    }
                    None => {
                        let _ = writeln!(out, "{label:<18} {:<14} {:>10}", class.class, "skipped");
                    }
                }
            }
        }
        if self.per_class.len() > 1 {
            for (name, value) in &self.macro_avg {
                if let Some(v) = value {
                    let _ = writeln!(out, "{name:<18} {:<14} {v:>10.4}", "macro");
                }
            }
        }
        out
    }
}

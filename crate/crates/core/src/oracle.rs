//! Most-violated label configurations.
//!
//! Given decision values v and true labels y, the oracle maximizes
//! Δ(ȳ', ȳ) + Σ_i y'_i v_i over admissible ȳ'. That differs from the
//! raw violation Δ − Σ_i (y_i − y'_i) v_i only by the constant
//! Σ_i y_i v_i, which is exposed separately so callers re-add it without
//! recomputing it inside the search.
//!
//! The search exploits the exchange property: for any fixed contingency
//! counts (a, b), the best assignment predicts +1 exactly for the a
//! highest-scoring positives and the b highest-scoring negatives, so a
//! grid over admissible (a, b) pairs finds the global maximizer. Hamming
//! decomposes per example and skips the grid.

use crate::data::{dot_on_group, SparseDataset, SparseVector};
use crate::error::{Error, Result};
use crate::groups::FeatureGroup;
use crate::loss::{ContingencyTable, LossKind, LossSpec};

/// Outcome of a most-violated-label search.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// The maximizing label configuration (±1 per example).
    pub y_prime: Vec<i8>,
    /// Δ(ȳ', ȳ) + Σ_i y'_i v_i at the maximizer.
    pub objective: f64,
    /// The constant Σ_i y_i v_i (same v the oracle saw).
    pub margin_const: f64,
    /// Loss Δ(ȳ', ȳ) at the maximizer.
    pub delta: f64,
    /// Contingency table of ȳ' against ȳ.
    pub table: ContingencyTable,
}

impl OracleResult {
    /// Δ(ȳ', ȳ) − Σ_i (y_i − y'_i) v_i, the violation Eq.-style callers
    /// want; ≤ 0 means ȳ' does not beat ȳ at the current weights.
    pub fn violation(&self) -> f64 {
        self.objective - self.margin_const
    }
}

/// v_i = Σ_t ⟨w_t, x_i ⊙ d^t⟩ for every example.
pub fn decision_values(
    groups: &[FeatureGroup],
    weights: &[Vec<f64>],
    ds: &SparseDataset,
) -> Vec<f64> {
    debug_assert_eq!(groups.len(), weights.len());
    let mut v = vec![0.0; ds.n()];
    for (group, w) in groups.iter().zip(weights) {
        for (vi, x) in v.iter_mut().zip(ds.examples()) {
            *vi += dot_on_group(x, w, group.members());
        }
    }
    v
}

/// Score of a single example under assembled per-group weights; used by
/// tests to cross-check the assembled model path.
pub fn decision_value_one(groups: &[FeatureGroup], weights: &[Vec<f64>], x: &SparseVector) -> f64 {
    groups
        .iter()
        .zip(weights)
        .map(|(g, w)| dot_on_group(x, w, g.members()))
        .sum()
}

fn validate(spec: &LossSpec, y: &[i8], v: &[f64]) -> Result<(usize, usize)> {
    let n = y.len();
    if v.len() != n {
        return Err(Error::Data(format!(
            "labels and decision values disagree: {n} vs {}",
            v.len()
        )));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite decision value {bad}")));
    }
    let p = y.iter().filter(|&&l| l == 1).count();
    let q = n - p;
    if p == 0 || q == 0 {
        return Err(Error::Degenerate(format!(
            "{p} positive and {q} negative labels"
        )));
    }
    spec.bind(n)?;
    Ok((p, q))
}

/// Indices of one label class sorted by decision value descending,
/// ties by original index ascending.
fn sorted_by_score(y: &[i8], v: &[f64], label: i8) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
    idx.sort_by(|&a, &b| {
        v[b].partial_cmp(&v[a])
            .expect("decision values are finite")
            .then(a.cmp(&b))
    });
    idx
}

struct GridSearch {
    best_obj: f64,
    best_a: usize,
    best_b: usize,
}

impl GridSearch {
    fn new() -> Self {
        Self {
            best_obj: f64::NEG_INFINITY,
            best_a: 0,
            best_b: usize::MAX,
        }
    }

    /// Deterministic tie-break: larger a, then smaller b.
    fn offer(&mut self, obj: f64, a: usize, b: usize) {
        let better = obj > self.best_obj
            || (obj == self.best_obj && (a > self.best_a || (a == self.best_a && b < self.best_b)));
        if better {
            self.best_obj = obj;
            self.best_a = a;
            self.best_b = b;
        }
    }
}

/// Maximizes Δ(ȳ', ȳ) + Σ_i y'_i v_i over configurations admissible for
/// the loss. O(p·q) pairs for F_β, O(n) pairs for the constrained losses,
/// O(n) decomposed decisions for Hamming, all after one O(n log n) sort.
pub fn most_violated_y(spec: &LossSpec, y: &[i8], v: &[f64]) -> Result<OracleResult> {
    let (p, q) = validate(spec, y, v)?;
    let n = y.len();
    let margin_const: f64 = y.iter().zip(v).map(|(&yi, &vi)| f64::from(yi) * vi).sum();

    if spec.kind() == LossKind::Hamming {
        // Each example decides independently: flipping a positive trades
        // +2 loss against −2v_i margin, symmetrically for negatives. Ties
        // keep the true label (larger a, smaller b).
        let mut y_prime = vec![0i8; n];
        let mut objective = 0.0;
        let mut table = ContingencyTable::new(0, 0, 0, 0);
        for i in 0..n {
            if y[i] == 1 {
                if 2.0 - v[i] > v[i] {
                    y_prime[i] = -1;
                    objective += 2.0 - v[i];
                    table.fnc += 1;
                } else {
                    y_prime[i] = 1;
                    objective += v[i];
                    table.tpc += 1;
                }
            } else if 2.0 + v[i] > -v[i] {
                y_prime[i] = 1;
                objective += 2.0 + v[i];
                table.fpc += 1;
            } else {
                y_prime[i] = -1;
                objective += -v[i];
                table.tnc += 1;
            }
        }
        let delta = spec.loss_from_counts(table.tpc, table.fpc, table.fnc, table.tnc);
        return Ok(OracleResult {
            y_prime,
            objective,
            margin_const,
            delta,
            table,
        });
    }

    let pos = sorted_by_score(y, v, 1);
    let neg = sorted_by_score(y, v, -1);

    // prefix[a] = sum of the a largest decision values in the class
    let prefix = |idx: &[usize]| -> Vec<f64> {
        let mut acc = Vec::with_capacity(idx.len() + 1);
        acc.push(0.0);
        let mut s = 0.0;
        for &i in idx {
            s += v[i];
            acc.push(s);
        }
        acc
    };
    let pos_prefix = prefix(&pos);
    let neg_prefix = prefix(&neg);
    let pos_total = pos_prefix[p];
    let neg_total = neg_prefix[q];

    // Σ_i y'_i v_i when the top-a positives and top-b negatives are +1.
    let margin = |a: usize, b: usize| -> f64 {
        (2.0 * pos_prefix[a] - pos_total) + (2.0 * neg_prefix[b] - neg_total)
    };

    let mut grid = GridSearch::new();
    match spec.kind() {
        LossKind::FBeta => {
            for a in 0..=p {
                for b in 0..=q {
                    let obj = spec.loss_from_counts(a, b, p - a, q - b) + margin(a, b);
                    grid.offer(obj, a, b);
                }
            }
        }
        LossKind::PrecAtK | LossKind::RecAtK => {
            let k = spec.k();
            let lo = k.saturating_sub(q);
            let hi = p.min(k);
            for a in lo..=hi {
                let b = k - a;
                let obj = spec.loss_from_counts(a, b, p - a, q - b) + margin(a, b);
                grid.offer(obj, a, b);
            }
        }
        LossKind::Prbep => {
            // b = c forces b = p − a
            let lo = p.saturating_sub(q);
            for a in lo..=p {
                let b = p - a;
                let obj = spec.loss_from_counts(a, b, p - a, q - b) + margin(a, b);
                grid.offer(obj, a, b);
            }
        }
        LossKind::Hamming => unreachable!(),
    }

    let (a, b) = (grid.best_a, grid.best_b);
    let mut y_prime = vec![0i8; n];
    for (rank, &i) in pos.iter().enumerate() {
        y_prime[i] = if rank < a { 1 } else { -1 };
    }
    for (rank, &i) in neg.iter().enumerate() {
        y_prime[i] = if rank < b { 1 } else { -1 };
    }
    let table = ContingencyTable::new(a, b, p - a, q - b);
    Ok(OracleResult {
        y_prime,
        objective: grid.best_obj,
        margin_const,
        delta: spec.loss_from_counts(a, b, p - a, q - b),
        table,
    })
}

/// Exhaustive reference oracle: enumerates all 2^n admissible
/// configurations. Same objective convention as [`most_violated_y`];
/// refuses n > 20.
pub fn brute_force_most_violated_y(spec: &LossSpec, y: &[i8], v: &[f64]) -> Result<OracleResult> {
    let (p, q) = validate(spec, y, v)?;
    let n = y.len();
    if n > 20 {
        return Err(Error::Data(format!(
            "n = {n} too large for exhaustive label search (max 20)"
        )));
    }
    let margin_const: f64 = y.iter().zip(v).map(|(&yi, &vi)| f64::from(yi) * vi).sum();

    let mut best: Option<(f64, u32)> = None;
    for mask in 0u32..(1u32 << n) {
        let mut a = 0usize;
        let mut b = 0usize;
        let mut margin = 0.0;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                margin += v[i];
                if y[i] == 1 {
                    a += 1;
                } else {
                    b += 1;
                }
            } else {
                margin -= v[i];
            }
        }
        let table = ContingencyTable::new(a, b, p - a, q - b);
        if !spec.admissible(&table) {
            continue;
        }
        let obj = spec.loss_from_counts(a, b, p - a, q - b) + margin;
        if best.is_none_or(|(bo, _)| obj > bo) {
            best = Some((obj, mask));
        }
    }

    let (objective, mask) = best.ok_or_else(|| {
        Error::Data("no admissible label configuration exists".into())
    })?;
    let y_prime: Vec<i8> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
    let table = ContingencyTable::from_labels(y, &y_prime)?;
    Ok(OracleResult {
        y_prime,
        objective,
        margin_const,
        delta: spec.loss_from_counts(table.tpc, table.fpc, table.fnc, table.tnc),
        table,
    })
}

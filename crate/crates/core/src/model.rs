//! Assembled predictor f(x) = ⟨w ⊙ d̃, x⟩ and its text serialization.
//!
//! The per-group weights collapse into one sparse vector: with
//! β_i = (1/n) Σ_k α_k (y_i − y_i^k) and w = Σ_i β_i x_i, the μ-mixture
//! d̃ = Σ_t μ_t d^t scales each feature by the total weight of the groups
//! containing it, and ⟨w ⊙ d̃, x⟩ equals the group-wise sum
//! Σ_t ⟨w_t, x ⊙ d^t⟩ identically.

use crate::bundle::BundleState;
use crate::data::{SparseDataset, SparseVector};
use crate::error::{Error, Result};
use crate::groups::{FeatureGroup, GroupPool};
use crate::loss::{LossKind, LossSpec};
use std::io::{BufRead, Write};

const FORMAT_HEADER: &str = "perfsel model 1";

/// Training metadata carried into the model file header.
#[derive(Debug, Clone, Copy)]
pub struct ModelMeta {
    pub loss: LossSpec,
    pub budget: usize,
    pub capacity: f64,
    pub eps: f64,
    pub converged: bool,
}

/// A trained sparse linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub loss: LossSpec,
    pub budget: usize,
    pub capacity: f64,
    pub eps: f64,
    pub converged: bool,
    /// Max feature count seen at training time (for out-of-range warnings).
    pub n_features: u32,
    /// The group pool with its simplex weights μ.
    pub groups: Vec<(FeatureGroup, f64)>,
    pub mu_active: bool,
    /// Nonzero entries of w ⊙ d̃, sorted by feature index (0-based).
    pub weights: Vec<(u32, f64)>,
    /// Per-example coefficients β, kept only when audit storage is on;
    /// never serialized.
    pub betas: Option<Vec<f64>>,
}

/// Builds the final predictor from a solved bundle over a pool.
pub fn assemble(
    state: &BundleState,
    pool: &GroupPool,
    ds: &SparseDataset,
    meta: ModelMeta,
    store_betas: bool,
) -> TrainedModel {
    let n = ds.n() as f64;
    let labels = ds.labels();
    let (alpha, mu, mu_active) = if state.cuts.is_empty() {
        (Vec::new(), vec![0.0; pool.len()], false)
    } else {
        let sol = state.solution();
        (sol.alpha.clone(), sol.mu.clone(), sol.mu_active)
    };

    // β_i = (1/n) Σ_k α_k (y_i − y_i^k); only flipped examples contribute.
    let mut betas = vec![0.0f64; ds.n()];
    for (cut, &a) in state.cuts.iter().zip(&alpha) {
        if a == 0.0 {
            continue;
        }
        for &i in &cut.flipped {
            betas[i as usize] += a * 2.0 * f64::from(labels[i as usize]) / n;
        }
    }

    // w on the full index range, then masked by d̃.
    let mut w = vec![0.0f64; ds.n_features() as usize];
    for (x, &beta) in ds.examples().iter().zip(&betas) {
        if beta == 0.0 {
            continue;
        }
        for &(j, val) in x.entries() {
            w[j as usize] += beta * val;
        }
    }
    let mut d_mix = vec![0.0f64; ds.n_features() as usize];
    for (group, &mu_t) in pool.groups().iter().zip(&mu) {
        for &j in group.members() {
            d_mix[j as usize] += mu_t;
        }
    }
    let mut weights: Vec<(u32, f64)> = Vec::new();
    for (j, (&wj, &dj)) in w.iter().zip(&d_mix).enumerate() {
        let eff = wj * dj;
        if eff != 0.0 {
            weights.push((j as u32, eff));
        }
    }

    TrainedModel {
        loss: meta.loss,
        budget: meta.budget,
        capacity: meta.capacity,
        eps: meta.eps,
        converged: meta.converged,
        n_features: ds.n_features(),
        groups: pool
            .groups()
            .iter()
            .cloned()
            .zip(mu.iter().copied())
            .collect(),
        mu_active,
        weights,
        betas: store_betas.then_some(betas),
    }
}

impl TrainedModel {
    /// A model with no groups and no weights; scores everything 0.
    pub fn zero(loss: LossSpec, n_features: u32) -> Self {
        Self {
            loss,
            budget: 0,
            capacity: 0.0,
            eps: 0.0,
            converged: true,
            n_features,
            groups: Vec::new(),
            mu_active: false,
            weights: Vec::new(),
            betas: None,
        }
    }

    pub fn predict_score(&self, x: &SparseVector) -> f64 {
        x.dot_sparse(&self.weights)
    }

    /// sign(score) with the 0 → +1 tie-break.
    pub fn predict_label(&self, x: &SparseVector) -> i8 {
        if self.predict_score(x) >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn nonzeros(&self) -> usize {
        self.weights.len()
    }

    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{FORMAT_HEADER}")?;
        match self.loss.kind() {
            LossKind::Hamming => writeln!(w, "loss hamming")?,
            LossKind::FBeta => writeln!(w, "loss fbeta {}", fmt(self.loss.beta()))?,
            LossKind::PrecAtK => writeln!(w, "loss prec@k {}", self.loss.k())?,
            LossKind::RecAtK => writeln!(w, "loss rec@k {}", self.loss.k())?,
            LossKind::Prbep => writeln!(w, "loss prbep")?,
        }
        writeln!(w, "budget {}", self.budget)?;
        writeln!(w, "capacity {}", fmt(self.capacity))?;
        writeln!(w, "eps {}", fmt(self.eps))?;
        writeln!(w, "converged {}", self.converged)?;
        writeln!(w, "features {}", self.n_features)?;
        writeln!(w, "mu_state {}", if self.mu_active { "active" } else { "inactive" })?;
        writeln!(w, "groups {}", self.groups.len())?;
        for (group, mu) in &self.groups {
            write!(w, "group {} {}", fmt(*mu), group.budget_used())?;
            for &j in group.members() {
                write!(w, " {}", j + 1)?;
            }
            writeln!(w)?;
        }
        writeln!(w, "weights {}", self.weights.len())?;
        for &(j, val) in &self.weights {
            writeln!(w, "{}:{}", j + 1, fmt(val))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(line))) => Ok((i + 1, line)),
                Some((i, Err(e))) => Err(Error::ModelFormat {
                    line: i + 1,
                    msg: e.to_string(),
                }),
                None => Err(Error::ModelFormat {
                    line: 0,
                    msg: format!("unexpected end of file, expected {what}"),
                }),
            }
        };

        let (line, header) = next("header")?;
        if header != FORMAT_HEADER {
            return Err(Error::ModelFormat {
                line,
                msg: format!("unsupported header '{header}', expected '{FORMAT_HEADER}'"),
            });
        }

        let (line, loss_line) = next("loss")?;
        let loss = parse_loss_line(&loss_line, line)?;
        let budget = parse_field::<usize>(&mut next, "budget")?;
        let capacity = parse_field::<f64>(&mut next, "capacity")?;
        let eps = parse_field::<f64>(&mut next, "eps")?;
        let converged = parse_field::<bool>(&mut next, "converged")?;
        let n_features = parse_field::<u32>(&mut next, "features")?;
        let (line, mu_line) = next("mu_state")?;
        let mu_active = match mu_line.strip_prefix("mu_state ") {
            Some("active") => true,
            Some("inactive") => false,
            _ => {
                return Err(Error::ModelFormat {
                    line,
                    msg: format!("expected 'mu_state active|inactive', got '{mu_line}'"),
                })
            }
        };

        let n_groups = parse_field::<usize>(&mut next, "groups")?;
        let mut groups = Vec::with_capacity(n_groups);
        for _ in 0..n_groups {
            let (line, text) = next("group")?;
            let mut tok = text.split_whitespace();
            let bad = |msg: &str| Error::ModelFormat {
                line,
                msg: msg.to_string(),
            };
            if tok.next() != Some("group") {
                return Err(bad("expected 'group'"));
            }
            let mu: f64 = tok
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("invalid group weight"))?;
            let count: usize = tok
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("invalid member count"))?;
            let mut members = Vec::with_capacity(count);
            for _ in 0..count {
                let j: u32 = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("missing group member"))?;
                if j == 0 {
                    return Err(bad("group members are 1-based"));
                }
                members.push(j - 1);
            }
            if tok.next().is_some() {
                return Err(bad("trailing tokens after group members"));
            }
            groups.push((FeatureGroup::new(members), mu));
        }

        let n_weights = parse_field::<usize>(&mut next, "weights")?;
        let mut weights = Vec::with_capacity(n_weights);
        let mut prev: Option<u32> = None;
        for _ in 0..n_weights {
            let (line, text) = next("weight entry")?;
            let (idx_s, val_s) = text.split_once(':').ok_or_else(|| Error::ModelFormat {
                line,
                msg: format!("expected idx:weight, got '{text}'"),
            })?;
            let idx: u32 = idx_s.parse().map_err(|_| Error::ModelFormat {
                line,
                msg: format!("invalid index '{idx_s}'"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| Error::ModelFormat {
                line,
                msg: format!("invalid weight '{val_s}'"),
            })?;
            if idx == 0 {
                return Err(Error::ModelFormat {
                    line,
                    msg: "weight indices are 1-based".into(),
                });
            }
            if !val.is_finite() {
                return Err(Error::ModelFormat {
                    line,
                    msg: format!("non-finite weight '{val_s}'"),
                });
            }
            if prev.is_some_and(|p| idx - 1 <= p) {
                return Err(Error::ModelFormat {
                    line,
                    msg: "weight indices not increasing".into(),
                });
            }
            prev = Some(idx - 1);
            weights.push((idx - 1, val));
        }

        Ok(Self {
            loss,
            budget,
            capacity,
            eps,
            converged,
            n_features,
            groups,
            mu_active,
            weights,
            betas: None,
        })
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_loss_line(text: &str, line: usize) -> Result<LossSpec> {
    let bad = |msg: String| Error::ModelFormat { line, msg };
    let rest = text
        .strip_prefix("loss ")
        .ok_or_else(|| bad(format!("expected 'loss ...', got '{text}'")))?;
    let mut tok = rest.split_whitespace();
    let spec = match tok.next() {
        Some("hamming") => LossSpec::hamming(),
        Some("prbep") => LossSpec::prbep(),
        Some("fbeta") => {
            let beta: f64 = tok
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("fbeta needs a beta value".into()))?;
            LossSpec::fbeta(beta).map_err(|e| bad(e.to_string()))?
        }
        Some(name @ ("prec@k" | "rec@k")) => {
            let k: usize = tok
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("{name} needs a k value")))?;
            if name == "prec@k" {
                LossSpec::prec_at(k).map_err(|e| bad(e.to_string()))?
            } else {
                LossSpec::rec_at(k).map_err(|e| bad(e.to_string()))?
            }
        }
        other => return Err(bad(format!("unknown loss '{other:?}'"))),
    };
    if tok.next().is_some() {
        return Err(bad("trailing tokens after loss".into()));
    }
    Ok(spec)
}

fn parse_field<T: std::str::FromStr>(
    next: &mut impl FnMut(&str) -> Result<(usize, String)>,
    name: &str,
) -> Result<T> {
    let (line, text) = next(name)?;
    let rest = text
        .strip_prefix(name)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::ModelFormat {
            line,
            msg: format!("expected '{name} ...', got '{text}'"),
        })?;
    rest.parse().map_err(|_| Error::ModelFormat {
        line,
        msg: format!("invalid {name} value '{rest}'"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::run_inner_continue;
    use crate::data::dot_on_group;
    use crate::trace::NullTrace;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, m: u32) -> SparseDataset {
        let examples = (0..n)
            .map(|_| {
                let mut entries: Vec<(u32, f64)> = Vec::new();
                for j in 0..m {
                    if rng.random::<f64>() < 0.6 {
                        let v = rng.random_range(-2.0..2.0);
                        if v != 0.0 {
                            entries.push((j, v));
                        }
                    }
                }
                SparseVector::new(entries).unwrap()
            })
            .collect();
        let labels = (0..n)
            .map(|i| if i % 2 == 0 { 1 } else { -1 })
            .collect();
        SparseDataset::new(examples, labels).unwrap()
    }

    fn trained(rng: &mut ChaCha8Rng) -> (TrainedModel, BundleState, GroupPool, SparseDataset) {
        let n = rng.random_range(6..16);
        let ds = random_dataset(rng, n, 6);
        let mut pool = GroupPool::new(3);
        pool.push(FeatureGroup::new(vec![0, 2, 4])).unwrap();
        pool.push(FeatureGroup::new(vec![1, 2])).unwrap();
        let mut state = BundleState::empty(pool.len());
        run_inner_continue(
            &mut state,
            &ds,
            &LossSpec::f1(),
            pool.groups(),
            1.5,
            1e-6,
            200,
            &mut NullTrace,
        )
        .unwrap();
        let meta = ModelMeta {
            loss: LossSpec::f1(),
            budget: 3,
            capacity: 1.5,
            eps: 1e-6,
            converged: state.converged,
        };
        let model = assemble(&state, &pool, &ds, meta, true);
        (model, state, pool, ds)
    }

    #[test]
    fn assemble_without_cuts_gives_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = random_dataset(&mut rng, 5, 4);
        let mut pool = GroupPool::new(2);
        pool.push(FeatureGroup::new(vec![0, 1])).unwrap();
        let state = BundleState::empty(pool.len());
        let meta = ModelMeta {
            loss: LossSpec::hamming(),
            budget: 2,
            capacity: 1.0,
            eps: 1e-3,
            converged: true,
        };
        let model = assemble(&state, &pool, &ds, meta, false);
        assert_eq!(model.nonzeros(), 0);
        for x in ds.examples() {
            assert_eq!(model.predict_label(x), 1); // tie-break label
        }
    }

    #[test]
    fn zero_model_predicts_positive_everywhere() {
        let model = TrainedModel::zero(LossSpec::f1(), 5);
        let x = SparseVector::new(vec![(0, 1.0), (3, -2.0)]).unwrap();
        assert_eq!(model.predict_score(&x), 0.0);
        assert_eq!(model.predict_label(&x), 1);
    }

    #[test]
    fn score_outside_support_is_zero() {
        let mut model = TrainedModel::zero(LossSpec::f1(), 10);
        model.weights = vec![(1, 0.5), (4, -1.0)];
        let x = SparseVector::new(vec![(0, 3.0), (7, 2.0)]).unwrap();
        assert_eq!(model.predict_score(&x), 0.0);
        let hit = SparseVector::new(vec![(4, 2.0)]).unwrap();
        assert_eq!(model.predict_score(&hit), -2.0);
        assert_eq!(model.predict_label(&hit), -1);
    }

    #[test]
    fn assembled_score_matches_group_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..25 {
            let (model, state, pool, _ds) = trained(&mut rng);
            for _ in 0..8 {
                let mut entries: Vec<(u32, f64)> = Vec::new();
                for j in 0..6 {
                    if rng.random::<f64>() < 0.7 {
                        let v = rng.random_range(-2.0..2.0);
                        if v != 0.0 {
                            entries.push((j, v));
                        }
                    }
                }
                let x = SparseVector::new(entries).unwrap();
                let via_groups: f64 = pool
                    .groups()
                    .iter()
                    .zip(&state.weights)
                    .map(|(g, w)| dot_on_group(&x, w, g.members()))
                    .sum();
                let via_model = model.predict_score(&x);
                assert!(
                    (via_groups - via_model).abs() < 1e-9,
                    "{via_groups} vs {via_model}"
                );
            }
            // sparsity bound: at most T·B nonzeros
            assert!(model.nonzeros() <= pool.len() * pool.budget());
            // support stays inside the union of group members
            for &(j, _) in &model.weights {
                assert!(pool.groups().iter().any(|g| g.members().contains(&j)));
            }
        }
    }

    #[test]
    fn save_load_round_trips_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (model, _, _, ds) = trained(&mut rng);
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = TrainedModel::load(&buf[..]).unwrap();
        let mut buf2 = Vec::new();
        loaded.save(&mut buf2).unwrap();
        assert_eq!(buf, buf2, "second save differs");
        for x in ds.examples() {
            assert_eq!(
                model.predict_score(x).to_bits(),
                loaded.predict_score(x).to_bits()
            );
        }
    }

    #[test]
    fn zero_group_model_round_trips() {
        let model = TrainedModel::zero(LossSpec::prec_at(3).unwrap(), 9);
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = TrainedModel::load(&buf[..]).unwrap();
        assert_eq!(loaded.groups.len(), 0);
        assert_eq!(loaded.weights.len(), 0);
        assert_eq!(loaded.loss, model.loss);
    }

    #[test]
    fn truncated_file_errors_with_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (model, _, _, _) = trained(&mut rng);
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let truncated = lines[..lines.len() - 1].join("\n");
        match TrainedModel::load(truncated.as_bytes()) {
            Err(Error::ModelFormat { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let err = TrainedModel::load("perfsel model 99\n".as_bytes()).unwrap_err();
        match err {
            Error::ModelFormat { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("unsupported header"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

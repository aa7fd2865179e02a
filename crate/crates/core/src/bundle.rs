//! Inner bundle layer: cutting planes on the epigraph of the empirical
//! risk for a fixed group pool.
//!
//! Each iteration asks the label oracle for the most violated ȳ', turns it
//! into a cut (per-group subgradient blocks p_t and offset q = Δ/n),
//! re-solves the reduced dual, recovers the group weights, and stops once
//! min_k J(w̄^k) − J_K(w̄^K) ≤ ε. Cuts survive outer iterations: when a
//! group joins the pool, every stored cut grows a block for it and the
//! dual is re-solved warm.

use crate::data::{axpy_on_group, SparseDataset};
use crate::error::{Error, Result};
use crate::groups::FeatureGroup;
use crate::loss::{ContingencyTable, LossSpec};
use crate::oracle::{decision_values, most_violated_y, OracleResult};
use crate::qcqp::{self, QcqpInput, QcqpSolution};
use crate::trace::{InnerRecord, TraceSink};

/// One bundle cut: per-group subgradient blocks, the loss offset, and the
/// flipped-example set identifying the originating label configuration.
#[derive(Debug, Clone)]
pub struct Cut {
    /// `blocks[t]` is p_t, dense on group t's members.
    pub blocks: Vec<Vec<f64>>,
    /// q = Δ(ȳ^k, ȳ)/n.
    pub offset: f64,
    /// Examples where ȳ^k differs from ȳ; (y_i − y_i^k) = 2 y_i there.
    pub flipped: Vec<u32>,
    /// Contingency table of the originating configuration, kept for audit.
    pub table: ContingencyTable,
}

impl Cut {
    /// Score-seeding pseudo-cut for ȳ¹ = −ȳ (every example flipped). It
    /// carries no blocks and never enters the bundle.
    pub fn synthetic_full_flip(ds: &SparseDataset) -> Self {
        let labels = ds.labels();
        let tpc = 0;
        let fpc = labels.iter().filter(|&&l| l == -1).count();
        let fnc = labels.iter().filter(|&&l| l == 1).count();
        Self {
            blocks: Vec::new(),
            offset: 0.0,
            flipped: (0..ds.n() as u32).collect(),
            table: ContingencyTable::new(tpc, fpc, fnc, 0),
        }
    }
}

/// p_t = −(1/n) Σ_i (y_i − y_i^k)(x_i ⊙ d^t) per group, q = Δ(ȳ^k, ȳ)/n.
pub fn make_cut(witness: &OracleResult, groups: &[FeatureGroup], ds: &SparseDataset) -> Cut {
    let n = ds.n() as f64;
    let labels = ds.labels();
    let flipped: Vec<u32> = witness
        .y_prime
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (yp, y))| yp != y)
        .map(|(i, _)| i as u32)
        .collect();
    let mut blocks: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| vec![0.0; g.members().len()])
        .collect();
    for &i in &flipped {
        let coeff = -2.0 * f64::from(labels[i as usize]) / n;
        let x = ds.example(i as usize);
        for (group, block) in groups.iter().zip(&mut blocks) {
            axpy_on_group(x, group.members(), coeff, block);
        }
    }
    Cut {
        blocks,
        offset: witness.delta / n,
        flipped,
        table: witness.table,
    }
}

/// R_emp(w̄) = max(0, b_ȳ* − Σ_t ⟨w_t, a_t^ȳ*⟩) with ȳ* from the oracle;
/// equals max(0, violation/n) in the oracle's convention.
pub fn empirical_risk(
    weights: &[Vec<f64>],
    groups: &[FeatureGroup],
    ds: &SparseDataset,
    spec: &LossSpec,
) -> Result<(f64, OracleResult)> {
    if groups.is_empty() {
        return Err(Error::Config("empirical risk needs at least one group".into()));
    }
    let v = decision_values(groups, weights, ds);
    let witness = most_violated_y(spec, ds.labels(), &v)?;
    let risk = (witness.violation() / ds.n() as f64).max(0.0);
    Ok((risk, witness))
}

/// Ω(w̄) = ½ (Σ_t ‖w_t‖₂)².
pub fn regularizer(weights: &[Vec<f64>]) -> f64 {
    let norm_sum: f64 = weights
        .iter()
        .map(|w| w.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum();
    0.5 * norm_sum * norm_sum
}

/// The piecewise model R_emp^K(w̄) = max(0, max_k ⟨w̄, p^k⟩ + q^k).
fn piecewise_model_risk(cuts: &[Cut], weights: &[Vec<f64>]) -> f64 {
    cuts.iter()
        .map(|cut| cut_value(cut, weights))
        .fold(0.0f64, f64::max)
}

fn cut_value(cut: &Cut, weights: &[Vec<f64>]) -> f64 {
    let dot: f64 = cut
        .blocks
        .iter()
        .zip(weights)
        .map(|(p, w)| p.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    dot + cut.offset
}

/// Why an inner run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStop {
    NotRun,
    /// min_k J(w̄^k) − J_K(w̄^K) ≤ ε.
    GapReached,
    /// The oracle's cut adds nothing beyond the current model.
    NullCut,
    /// max_cuts exhausted without the gap closing (not fatal).
    CutBudget,
}

/// One logged inner iteration: the running upper bound min_k J(w̄^k), the
/// lower bound J_K, their gap, and the bundle size.
#[derive(Debug, Clone, Copy)]
pub struct BundleIteration {
    pub j_upper: f64,
    pub j_lower: f64,
    pub gap: f64,
    pub cuts: usize,
}

/// Bundle of cuts with the incremental Gram matrices, current dual
/// solution, and recovered per-group weights.
#[derive(Debug)]
pub struct BundleState {
    pub cuts: Vec<Cut>,
    /// `grams[t][k][k']` = ⟨p_t^k, p_t^{k'}⟩, grown as cuts and groups arrive.
    pub grams: Vec<Vec<Vec<f64>>>,
    solution: Option<QcqpSolution>,
    pub weights: Vec<Vec<f64>>,
    pub history: Vec<BundleIteration>,
    /// Best (largest) dual objective seen this run: a valid lower bound.
    pub lower_bound: f64,
    /// min_k J(w̄^k) over this run's iterates.
    pub best_upper: f64,
    pub stop: InnerStop,
    pub converged: bool,
    stale: bool,
}

impl BundleState {
    pub fn empty(n_groups: usize) -> Self {
        Self {
            cuts: Vec::new(),
            grams: vec![Vec::new(); n_groups],
            solution: None,
            weights: Vec::new(),
            history: Vec::new(),
            lower_bound: 0.0,
            best_upper: f64::INFINITY,
            stop: InnerStop::NotRun,
            converged: false,
            stale: false,
        }
    }

    /// The latest dual solution; call only after a run.
    pub fn solution(&self) -> &QcqpSolution {
        self.solution.as_ref().expect("bundle has been solved")
    }

    pub fn gap(&self) -> f64 {
        self.best_upper - self.lower_bound
    }

    /// Adds a group to every stored cut: recompute its block from the
    /// stored flip set, build its Gram, and mark the dual stale.
    pub fn extend_group(&mut self, ds: &SparseDataset, group: &FeatureGroup) {
        let n = ds.n() as f64;
        let labels = ds.labels();
        for cut in &mut self.cuts {
            let mut block = vec![0.0; group.members().len()];
            for &i in &cut.flipped {
                let coeff = -2.0 * f64::from(labels[i as usize]) / n;
                axpy_on_group(ds.example(i as usize), group.members(), coeff, &mut block);
            }
            cut.blocks.push(block);
        }
        let t = self.grams.len();
        let k_count = self.cuts.len();
        let mut gram = vec![vec![0.0; k_count]; k_count];
        for i in 0..k_count {
            for j in 0..=i {
                let dot: f64 = self.cuts[i].blocks[t]
                    .iter()
                    .zip(&self.cuts[j].blocks[t])
                    .map(|(a, b)| a * b)
                    .sum();
                gram[i][j] = dot;
                gram[j][i] = dot;
            }
        }
        self.grams.push(gram);
        self.stale = true;
    }

    fn push_cut(&mut self, cut: Cut) {
        for (t, gram) in self.grams.iter_mut().enumerate() {
            let new_block = &cut.blocks[t];
            let mut row: Vec<f64> = self
                .cuts
                .iter()
                .map(|c| {
                    c.blocks[t]
                        .iter()
                        .zip(new_block)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            for (existing, &val) in gram.iter_mut().zip(&row) {
                existing.push(val);
            }
            row.push(new_block.iter().map(|x| x * x).sum());
            gram.push(row);
        }
        self.cuts.push(cut);
    }

    fn resolve(&mut self, capacity: f64) -> Result<()> {
        let offsets: Vec<f64> = self.cuts.iter().map(|c| c.offset).collect();
        let warm: Option<Vec<f64>> = self.solution.as_ref().map(|s| {
            let mut alpha = s.alpha.clone();
            alpha.resize(offsets.len(), 0.0);
            alpha
        });
        let input = QcqpInput {
            grams: &self.grams,
            offsets: &offsets,
            capacity,
        };
        let sol = qcqp::solve_warm(&input, qcqp::DEFAULT_TOL, warm.as_deref())?;
        let blocks: Vec<&[Vec<f64>]> = self.cuts.iter().map(|c| c.blocks.as_slice()).collect();
        let sizes: Vec<usize> = self.weights_template();
        self.weights = qcqp::recover_group_weights(&sol, &blocks, &sizes);
        self.solution = Some(sol);
        self.stale = false;
        Ok(())
    }

    fn weights_template(&self) -> Vec<usize> {
        self.cuts
            .first()
            .map(|c| c.blocks.iter().map(|b| b.len()).collect())
            .unwrap_or_default()
    }
}

/// Algorithm: oracle → cut → reduced dual → weights, until ε-optimal.
/// Runs fresh over the given groups.
pub fn run_inner(
    ds: &SparseDataset,
    spec: &LossSpec,
    groups: &[FeatureGroup],
    capacity: f64,
    eps: f64,
    max_cuts: usize,
    trace: &mut dyn TraceSink,
) -> Result<BundleState> {
    let mut state = BundleState::empty(groups.len());
    state.weights = groups.iter().map(|g| vec![0.0; g.members().len()]).collect();
    run_inner_continue(&mut state, ds, spec, groups, capacity, eps, max_cuts, trace)?;
    Ok(state)
}

/// The driver behind [`run_inner`], also used by the outer layer to keep
/// cuts across pool growth. Resets the per-run bookkeeping (history,
/// upper bound) but keeps cuts and Grams.
#[allow(clippy::too_many_arguments)]
pub fn run_inner_continue(
    state: &mut BundleState,
    ds: &SparseDataset,
    spec: &LossSpec,
    groups: &[FeatureGroup],
    capacity: f64,
    eps: f64,
    max_cuts: usize,
    trace: &mut dyn TraceSink,
) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::Config("group pool must not be empty".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if max_cuts == 0 {
        return Err(Error::Config("max_cuts must be at least 1".into()));
    }
    if !(capacity > 0.0) {
        return Err(Error::Config(format!("capacity must be positive, got {capacity}")));
    }
    debug_assert_eq!(groups.len(), state.grams.len());
    ds.check_trainable()?;
    spec.bind(ds.n())?;

    let n = ds.n() as f64;
    state.best_upper = f64::INFINITY;
    state.converged = false;
    if state.weights.len() != groups.len() {
        state.weights = groups.iter().map(|g| vec![0.0; g.members().len()]).collect();
    }
    if state.stale && !state.cuts.is_empty() {
        state.resolve(capacity)?;
        // groups changed: the old bound no longer applies
        state.lower_bound = state.solution().objective;
    } else if state.cuts.is_empty() {
        state.lower_bound = 0.0;
    }

    for iteration in 1..=max_cuts {
        let (risk, witness) = empirical_risk(&state.weights, groups, ds, spec)?;
        let j_here = regularizer(&state.weights) + capacity * risk;
        state.best_upper = state.best_upper.min(j_here);

        #[cfg(debug_assertions)]
        {
            // subgradient validity: every cut under-estimates the risk
            let scale = 1.0 + risk.abs();
            for cut in &state.cuts {
                debug_assert!(
                    cut_value(cut, &state.weights) <= risk + 1e-7 * scale,
                    "cut violates the subgradient inequality"
                );
            }
        }

        if !state.cuts.is_empty() {
            let model_val = piecewise_model_risk(&state.cuts, &state.weights);
            let cut_val = (witness.violation() / n).max(0.0);
            if capacity * (cut_val - model_val) <= eps / 10.0 {
                record(state, trace, iteration);
                state.stop = InnerStop::NullCut;
                state.converged = true;
                return Ok(());
            }
        }

        state.push_cut(make_cut(&witness, groups, ds));
        state.resolve(capacity)?;
        state.lower_bound = state.lower_bound.max(state.solution().objective);
        record(state, trace, iteration);

        if state.gap() <= eps {
            state.stop = InnerStop::GapReached;
            state.converged = true;
            return Ok(());
        }
    }
    state.stop = InnerStop::CutBudget;
    state.converged = false;
    Ok(())
}

fn record(state: &mut BundleState, trace: &mut dyn TraceSink, iteration: usize) {
    let entry = BundleIteration {
        j_upper: state.best_upper,
        j_lower: state.lower_bound,
        gap: state.gap(),
        cuts: state.cuts.len(),
    };
    state.history.push(entry);
    trace.inner(&InnerRecord {
        iteration,
        objective_upper: entry.j_upper,
        objective_lower: entry.j_lower,
        gap: entry.gap,
        cuts: entry.cuts,
    });
}

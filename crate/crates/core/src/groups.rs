//! Feature groups and the outer cutting-plane layer.
//!
//! A group is a budgeted subset of feature indices. The outer layer scores
//! every feature from the current cuts and dual weights, takes the budget-B
//! subset with the largest squared scores (the exact maximizer of
//! Σ_j c_j² d_j over the budget domain), grows the pool, and re-runs the
//! inner bundle until the generated group is already in the pool or the
//! objective stops improving.

use crate::bundle::{run_inner_continue, BundleState, Cut, InnerStop};
use crate::data::SparseDataset;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::trace::{OuterRecord, TraceSink};

/// A selected feature subset d with |d| ≤ B (sorted 0-based indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGroup {
    members: Vec<u32>,
}

impl FeatureGroup {
    pub fn new(mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn budget_used(&self) -> usize {
        self.members.len()
    }
}

/// Ordered pool of generated groups; μ indexes groups by position.
#[derive(Debug, Clone)]
pub struct GroupPool {
    groups: Vec<FeatureGroup>,
    budget: usize,
    /// Relaxed objective after each outer iteration.
    pub history: Vec<f64>,
}

impl GroupPool {
    pub fn new(budget: usize) -> Self {
        Self {
            groups: Vec::new(),
            budget,
            history: Vec::new(),
        }
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn contains(&self, group: &FeatureGroup) -> bool {
        self.groups.iter().any(|g| g == group)
    }

    /// Insertion preserves order and rejects duplicates.
    pub fn push(&mut self, group: FeatureGroup) -> Result<()> {
        debug_assert!(group.budget_used() <= self.budget);
        if self.contains(&group) {
            return Err(Error::Data("duplicate group in pool".into()));
        }
        self.groups.push(group);
        Ok(())
    }
}

/// c_j = Σ_k α_k Σ_i (y_i − y_i^k) x_{i,j}, one sparse pass per cut with
/// nonzero α. Flipped examples contribute (y_i − y_i^k) = 2 y_i.
pub fn feature_scores(cuts: &[Cut], alpha: &[f64], ds: &SparseDataset) -> Vec<f64> {
    debug_assert_eq!(cuts.len(), alpha.len());
    let mut scores = vec![0.0; ds.n_features() as usize];
    let labels = ds.labels();
    for (cut, &a) in cuts.iter().zip(alpha) {
        if a == 0.0 {
            continue;
        }
        for &i in &cut.flipped {
            let coeff = a * 2.0 * f64::from(labels[i as usize]);
            for &(j, x) in ds.example(i as usize).entries() {
                scores[j as usize] += coeff * x;
            }
        }
    }
    scores
}

/// The exact argmax of Σ_j c_j² d_j over groups with |d| ≤ B: the B
/// indices with the largest c_j² (ties by ascending index), zero-score
/// and excluded features never selected.
pub fn most_violated_group(scores: &[f64], budget: usize, excluded: &[u32]) -> Result<FeatureGroup> {
    debug_assert!(budget >= 1);
    let mut candidates: Vec<(u32, f64)> = scores
        .iter()
        .enumerate()
        .filter(|&(j, &c)| c != 0.0 && !excluded.contains(&(j as u32)))
        .map(|(j, &c)| (j as u32, c * c))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Data(
            "no informative features for current cuts".into(),
        ));
    }
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("scores are finite").then(a.0.cmp(&b.0)));
    candidates.truncate(budget);
    Ok(FeatureGroup::new(candidates.into_iter().map(|(j, _)| j).collect()))
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterStop {
    /// The regenerated most-violated group is already in the pool.
    PoolStable,
    /// Relative objective improvement fell below the outer tolerance.
    SmallImprovement,
    /// Feature scores vanished; no group can improve the relaxation.
    NoInformativeFeatures,
    /// Outer iteration cap reached.
    IterationCap,
}

/// Result of the two-layer run: the generated pool, the final bundle
/// state over it, and why the loop stopped.
#[derive(Debug)]
pub struct TwoLayerResult {
    pub pool: GroupPool,
    pub state: BundleState,
    pub reason: OuterStop,
    pub converged: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn run_two_layer(
    ds: &SparseDataset,
    spec: &LossSpec,
    budget: usize,
    capacity: f64,
    eps: f64,
    max_outer: usize,
    max_cuts: usize,
    outer_tol: f64,
    excluded: &[u32],
    trace: &mut dyn TraceSink,
) -> Result<TwoLayerResult> {
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    if max_outer == 0 {
        return Err(Error::Config("max_outer must be at least 1".into()));
    }
    ds.check_trainable()?;
    spec.bind(ds.n())?;

    // Initialization: the most violated configuration at w = 0 for a
    // symmetric loss is ȳ¹ = −ȳ, so seed the scores with that synthetic
    // cut at α = C, i.e. c_j = 2C·Σ_i y_i x_{i,j} (class correlation).
    let seed_cut = Cut::synthetic_full_flip(ds);
    let seed_scores = feature_scores(std::slice::from_ref(&seed_cut), &[capacity], ds);
    let first = most_violated_group(&seed_scores, budget, excluded)?;

    let mut pool = GroupPool::new(budget);
    pool.push(first)?;
    let mut state = BundleState::empty(pool.len());

    let mut reason = OuterStop::IterationCap;
    let mut converged = false;
    for outer in 1..=max_outer {
        state.history.clear();
        run_inner_continue(&mut state, ds, spec, pool.groups(), capacity, eps, max_cuts, trace)?;
        let objective = state.lower_bound;
        let prev = pool.history.last().copied();
        pool.history.push(objective);
        trace.outer(&OuterRecord {
            iteration: outer,
            pool_size: pool.len(),
            objective,
            gap: state.gap(),
            cuts: state.cuts.len(),
        });

        if state.stop == InnerStop::CutBudget {
            // inner layer ran out of cuts; surface as a cap, not an error
            reason = OuterStop::IterationCap;
            converged = false;
            break;
        }

        let scores = feature_scores(&state.cuts, &state.solution().alpha, ds);
        let next = match most_violated_group(&scores, budget, excluded) {
            Ok(g) => g,
            Err(Error::Data(_)) => {
                reason = OuterStop::NoInformativeFeatures;
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if pool.contains(&next) {
            reason = OuterStop::PoolStable;
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            let improvement = (prev - objective) / prev.abs().max(1.0);
            if improvement < outer_tol {
                reason = OuterStop::SmallImprovement;
                converged = true;
                break;
            }
        }
        if outer == max_outer {
            reason = OuterStop::IterationCap;
            converged = false;
            break;
        }
        pool.push(next.clone())?;
        state.extend_group(ds, &next);
    }

    Ok(TwoLayerResult {
        pool,
        state,
        reason,
        converged,
    })
}

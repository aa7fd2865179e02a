//! Built-in verification suites comparing the fast search routines
//! against exhaustive reference implementations at small sizes, plus the
//! reference implementations themselves (used by tests as independent
//! oracles).

use crate::error::{Error, Result};
use crate::groups::most_violated_group;
use crate::loss::LossSpec;
use crate::oracle::{brute_force_most_violated_y, most_violated_y};
use crate::qcqp::{self, QcqpInput};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Exhaustive maximum of Σ_j c_j² d_j over all feature subsets of size
/// ≤ budget, summed in ascending index order (the same order the group
/// oracle reports members in).
pub fn enumerate_best_group_value(scores: &[f64], budget: usize) -> f64 {
    let m = scores.len();
    assert!(m <= 20, "subset enumeration supports m <= 20");
    let mut best = 0.0f64; // empty subset
    let mut subset: Vec<usize> = Vec::new();
    fn recurse(
        scores: &[f64],
        budget: usize,
        start: usize,
        subset: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if subset.len() == budget {
            return;
        }
        for j in start..scores.len() {
            subset.push(j);
            let value: f64 = subset.iter().map(|&i| scores[i] * scores[i]).sum();
            if value > *best {
                *best = value;
            }
            recurse(scores, budget, j + 1, subset, best);
            subset.pop();
        }
    }
    recurse(scores, budget, 0, &mut subset, &mut best);
    best
}

fn dual_objective(grams: &[Vec<Vec<f64>>], offsets: &[f64], alpha: &[f64]) -> f64 {
    let linear: f64 = offsets.iter().zip(alpha).map(|(q, a)| q * a).sum();
    let worst = grams
        .iter()
        .map(|g| {
            let mut quad = 0.0;
            for (i, row) in g.iter().enumerate() {
                for (j, &gij) in row.iter().enumerate() {
                    quad += gij * alpha[i] * alpha[j];
                }
            }
            0.5 * quad
        })
        .fold(0.0f64, f64::max);
    linear - worst
}

/// Ternary search for the maximum of a concave 1-D function. Valid for
/// concave f: when f(m1) ≤ f(m2) the maximum lies right of m1.
fn ternary_max(mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let mut best = f(lo).max(f(hi));
    for _ in 0..150 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let (f1, f2) = (f(m1), f(m2));
        best = best.max(f1).max(f2);
        if f1 <= f2 {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    best.max(f((lo + hi) / 2.0))
}

/// Dense grid search over the feasible region of the reduced dual,
/// returning the best objective q·α − max_t ½αᵀG^tα found. Supports
/// K ≤ 2 only; the grid includes every boundary face.
pub fn qcqp_grid_best(
    grams: &[Vec<Vec<f64>>],
    offsets: &[f64],
    capacity: f64,
    resolution: f64,
) -> Result<f64> {
    let k = offsets.len();
    if k == 0 || k > 2 {
        return Err(Error::Data(format!("grid oracle supports K in {{1,2}}, got {k}")));
    }
    let steps = (capacity / resolution).ceil() as usize;
    let mut best = f64::NEG_INFINITY;
    if k == 1 {
        for i in 0..=steps {
            let a = capacity * i as f64 / steps as f64;
            best = best.max(dual_objective(grams, offsets, &[a]));
        }
    } else {
        for i in 0..=steps {
            let a0 = capacity * i as f64 / steps as f64;
            for j in 0..=(steps - i) {
                let a1 = capacity * j as f64 / steps as f64;
                best = best.max(dual_objective(grams, offsets, &[a0, a1]));
            }
        }
    }
    Ok(best)
}

/// Certified reference optimum for K ≤ 2: the dense grid localizes, and a
/// nested ternary search (valid because the objective is concave — a min
/// of concave quadratics) resolves kink optima the grid alone can only
/// bracket to O(resolution). Both produce feasible-point values, so the
/// max of the two is a genuine lower bound that matches the true optimum
/// to far better than the grid step.
pub fn qcqp_reference_best(
    grams: &[Vec<Vec<f64>>],
    offsets: &[f64],
    capacity: f64,
    resolution: f64,
) -> Result<f64> {
    let grid = qcqp_grid_best(grams, offsets, capacity, resolution)?;
    let refined = if offsets.len() == 1 {
        ternary_max(0.0, capacity, &|a| dual_objective(grams, offsets, &[a]))
    } else {
        ternary_max(0.0, capacity, &|a0| {
            ternary_max(0.0, capacity - a0, &|a1| {
                dual_objective(grams, offsets, &[a0, a1])
            })
        })
    };
    Ok(grid.max(refined))
}

/// Random reduced-dual instance built from actual cut vectors, so Grams
/// are Grams by construction. Returns (blocks per cut, grams, offsets, C).
pub fn gen_qcqp_instance(
    rng: &mut ChaCha8Rng,
    k_count: usize,
    t_count: usize,
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>, Vec<f64>, f64) {
    let dims: Vec<usize> = (0..t_count).map(|_| rng.random_range(1..=4)).collect();
    let vectors: Vec<Vec<Vec<f64>>> = (0..k_count)
        .map(|_| {
            dims.iter()
                .map(|&d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    let grams: Vec<Vec<Vec<f64>>> = (0..t_count)
        .map(|t| {
            (0..k_count)
                .map(|i| {
                    (0..k_count)
                        .map(|j| {
                            vectors[i][t]
                                .iter()
                                .zip(&vectors[j][t])
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let offsets: Vec<f64> = (0..k_count).map(|_| rng.random_range(-0.2..1.0)).collect();
    let capacity = rng.random_range(0.5..3.0);
    (vectors, grams, offsets, capacity)
}

#[derive(Debug, Clone)]
pub struct SelfCheckConfig {
    /// Largest sample size for the exhaustive label suite (clamped to 14).
    pub max_n: usize,
    /// Random draws per configuration.
    pub draws: usize,
    pub seed: u64,
    /// Injects an offset into the fast routes to prove the failure path.
    pub perturb: bool,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        Self {
            max_n: 10,
            draws: 50,
            seed: 7,
            perturb: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &str, cases: usize, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases,
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
        }
    }
}

fn random_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<i8> {
    loop {
        let y: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let p = y.iter().filter(|&&l| l == 1).count();
        if p > 0 && p < n {
            return y;
        }
    }
}

/// Runs all suites; each compares a fast implementation against an
/// exhaustive or certificate-based reference at small sizes.
pub fn run_selfcheck(cfg: &SelfCheckConfig) -> Result<Vec<SuiteResult>> {
    let max_n = cfg.max_n.clamp(4, 14);
    let nudge = if cfg.perturb { 1e-3 } else { 0.0 };
    let mut results = Vec::new();

    // 1: label oracle vs 2^n enumeration, all five losses
    {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut cases = 0;
        let mut worst = 0.0f64;
        for n in 4..=max_n {
            for _ in 0..cfg.draws {
                let y = random_labels(n, &mut rng);
                let scale = [0.1, 1.0, 10.0][rng.random_range(0..3)];
                let v: Vec<f64> =
                    (0..n).map(|_| scale * rng.random_range(-3.0..3.0)).collect();
                let specs = [
                    LossSpec::hamming(),
                    LossSpec::f1(),
                    LossSpec::fbeta(2.0)?,
                    LossSpec::prec_at(rng.random_range(1..=n))?,
                    LossSpec::rec_at(rng.random_range(1..=n))?,
                    LossSpec::prbep(),
                ];
                for spec in specs {
                    let fast = most_violated_y(&spec, &y, &v)?;
                    let brute = brute_force_most_violated_y(&spec, &y, &v)?;
                    worst = worst.max((fast.objective + nudge - brute.objective).abs());
                    cases += 1;
                }
            }
        }
        results.push(SuiteResult::new("label-oracle vs exhaustive", cases, worst, 1e-9));
    }

    // 2: group oracle vs subset enumeration (exact)
    {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let mut cases = 0;
        let mut worst = 0.0f64;
        for _ in 0..cfg.draws {
            let m = rng.random_range(4..=12);
            let budget = rng.random_range(1..=3usize);
            let scores: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        rng.random_range(-2.0..2.0)
                    }
                })
                .collect();
            if scores.iter().all(|&c| c == 0.0) {
                continue;
            }
            let picked = most_violated_group(&scores, budget, &[])?;
            let value: f64 = picked
                .members()
                .iter()
                .map(|&j| scores[j as usize] * scores[j as usize])
                .sum();
            let best = enumerate_best_group_value(&scores, budget);
            worst = worst.max((value + nudge - best).abs());
            cases += 1;
        }
        results.push(SuiteResult::new("group-oracle vs enumeration", cases, worst, 0.0));
    }

    // 3: reduced-dual KKT certificates
    {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let mut cases = 0;
        let mut worst = 0.0f64;
        for _ in 0..cfg.draws {
            let k = rng.random_range(1..=6);
            let t = rng.random_range(1..=4);
            let (_, grams, offsets, capacity) = gen_qcqp_instance(&mut rng, k, t);
            let input = QcqpInput {
                grams: &grams,
                offsets: &offsets,
                capacity,
            };
            let sol = qcqp::solve(&input, 1e-8)?;
            worst = worst.max(qcqp::kkt_residual(&input, &sol) + nudge);
            cases += 1;
        }
        results.push(SuiteResult::new("qcqp kkt certificates", cases, worst, 1e-6));
    }

    // 4: reduced-dual objective vs dense grid (K ≤ 2)
    {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
        let mut cases = 0;
        let mut worst = 0.0f64;
        let draws = cfg.draws.min(25); // grids are the slow part
        for _ in 0..draws {
            let k = rng.random_range(1..=2);
            let t = rng.random_range(1..=3);
            let (_, grams, offsets, capacity) = gen_qcqp_instance(&mut rng, k, t);
            let input = QcqpInput {
                grams: &grams,
                offsets: &offsets,
                capacity,
            };
            let sol = qcqp::solve(&input, 1e-8)?;
            let reference = qcqp_reference_best(&grams, &offsets, capacity, 1e-3 * capacity)?;
            worst = worst.max((sol.objective + nudge - reference).abs());
            cases += 1;
        }
        results.push(SuiteResult::new("qcqp objective vs dense grid", cases, worst, 1e-4));
    }

    Ok(results)
}

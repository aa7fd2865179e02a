//! Reduced-dual solver: maximize −θ + Σ_k α_k q_k subject to
//! ½‖Σ_k α_k p_t^k‖² ≤ θ for every group t, Σ_k α_k ≤ C, α ≥ 0,
//! given the per-group Gram matrices G^t[k,k'] = ⟨p_t^k, p_t^{k'}⟩.
//!
//! Solved as the equivalent minimization of θ − qᵀα by a primal-dual
//! interior-point method on the K+1 variables (α, θ). The duals of the T
//! quadratic constraints are the group weights μ (stationarity in θ puts
//! them on the simplex), the capacity dual is λ, and the sign duals are s,
//! which together certify ‖Σ_t μ_t G^t α − q + λ·1 − s‖∞ ≤ tol.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;

const MAX_ITERATIONS: usize = 400;
const CENTERING: f64 = 0.1;
const BOUNDARY_FRACTION: f64 = 0.995;

/// One reduced-dual instance: T Gram matrices over K cuts, the cut
/// offsets q, and the capacity C.
#[derive(Debug, Clone)]
pub struct QcqpInput<'a> {
    pub grams: &'a [Vec<Vec<f64>>],
    pub offsets: &'a [f64],
    pub capacity: f64,
}

/// KKT-certified solution of the reduced dual.
#[derive(Debug, Clone)]
pub struct QcqpSolution {
    pub alpha: Vec<f64>,
    pub theta: f64,
    /// Group weights: duals of the quadratic constraints, on the simplex
    /// whenever some constraint is active; uniform and flagged inactive
    /// when θ ≈ 0.
    pub mu: Vec<f64>,
    /// −θ + Σ_k α_k q_k.
    pub objective: f64,
    pub kkt_residual: f64,
    /// Dual λ of the capacity constraint Σα ≤ C.
    pub capacity_dual: f64,
    /// Duals s of the sign constraints α ≥ 0.
    pub bound_duals: Vec<f64>,
    pub mu_active: bool,
    pub iterations: usize,
}

/// w_t = −μ_t Σ_k α_k p_t^k, dense on each group's support.
/// `cut_blocks[k][t]` is cut k's subgradient block for group t.
pub fn recover_group_weights(
    sol: &QcqpSolution,
    cut_blocks: &[&[Vec<f64>]],
    group_sizes: &[usize],
) -> Vec<Vec<f64>> {
    let mut weights: Vec<Vec<f64>> = group_sizes.iter().map(|&s| vec![0.0; s]).collect();
    for (t, w) in weights.iter_mut().enumerate() {
        let scale = sol.mu[t];
        if scale == 0.0 {
            continue;
        }
        for (&a, blocks) in sol.alpha.iter().zip(cut_blocks) {
            if a == 0.0 {
                continue;
            }
            for (wi, &pi) in w.iter_mut().zip(&blocks[t]) {
                *wi -= scale * a * pi;
            }
        }
    }
    weights
}

fn validate(input: &QcqpInput) -> Result<(usize, usize)> {
    let t_count = input.grams.len();
    let k_count = input.offsets.len();
    if t_count == 0 || k_count == 0 {
        return Err(Error::Qcqp(format!(
            "need at least one group and one cut, got T={t_count}, K={k_count}"
        )));
    }
    if !(input.capacity > 0.0) || !input.capacity.is_finite() {
        return Err(Error::Qcqp(format!("capacity must be positive, got {}", input.capacity)));
    }
    if input.offsets.iter().any(|q| !q.is_finite()) {
        return Err(Error::Qcqp("non-finite cut offset".into()));
    }
    for (t, g) in input.grams.iter().enumerate() {
        if g.len() != k_count || g.iter().any(|row| row.len() != k_count) {
            return Err(Error::Qcqp(format!("gram {t} is not {k_count}x{k_count}")));
        }
        let scale = 1.0 + g.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..k_count {
            for j in 0..i {
                if (g[i][j] - g[j][i]).abs() > 1e-8 * scale {
                    return Err(Error::Qcqp(format!("gram {t} is not symmetric at ({i},{j})")));
                }
            }
            if !g[i][i].is_finite() || g[i][i] < -1e-10 * scale {
                return Err(Error::Qcqp(format!("gram {t} has invalid diagonal at {i}")));
            }
        }
        #[cfg(debug_assertions)]
        debug_psd_check(t, g, scale)?;
    }
    Ok((t_count, k_count))
}

/// Shifted Cholesky PSD check, debug builds only. (A Gershgorin bound
/// would reject legitimate Grams of near-duplicate cuts.)
#[cfg(debug_assertions)]
fn debug_psd_check(t: usize, g: &[Vec<f64>], scale: f64) -> Result<()> {
    let k = g.len();
    let mut shifted = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            shifted[i * k + j] = g[i][j];
        }
        shifted[i * k + i] += 1e-9 * scale;
    }
    cholesky_in_place(&mut shifted, k)
        .map_err(|_| Error::Qcqp(format!("gram {t} is not positive semidefinite")))
}

/// In-place lower Cholesky of a row-major k×k matrix.
fn cholesky_in_place(a: &mut [f64], k: usize) -> std::result::Result<(), ()> {
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for l in 0..j {
                sum -= a[i * k + l] * a[j * k + l];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(());
                }
                a[i * k + i] = sum.sqrt();
            } else {
                a[i * k + j] = sum / a[j * k + j];
            }
        }
        for j in (i + 1)..k {
            a[i * k + j] = 0.0;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], k: usize, b: &mut [f64]) {
    for i in 0..k {
        let mut sum = b[i];
        for j in 0..i {
            sum -= l[i * k + j] * b[j];
        }
        b[i] = sum / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut sum = b[i];
        for j in (i + 1)..k {
            sum -= l[j * k + i] * b[j];
        }
        b[i] = sum / l[i * k + i];
    }
}

fn mat_vec(g: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    g.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn quad_form(g: &[Vec<f64>], x: &[f64]) -> f64 {
    mat_vec(g, x).iter().zip(x).map(|(a, b)| a * b).sum()
}

struct Iterate {
    alpha: Vec<f64>,
    theta: f64,
    slack: Vec<f64>,
    dual: Vec<f64>,
}

/// Constraint order: quadratic 0..T, sign 0..K, capacity last.
fn constraint_values(input: &QcqpInput, alpha: &[f64], theta: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(input.grams.len() + alpha.len() + 1);
    for gram in input.grams {
        g.push(0.5 * quad_form(gram, alpha) - theta);
    }
    for &a in alpha {
        g.push(-a);
    }
    g.push(alpha.iter().sum::<f64>() - input.capacity);
    g
}

/// max(stationarity, primal feasibility, complementary slackness) computed
/// from a candidate primal-dual pair; also used by tests to re-certify.
pub fn kkt_residual(input: &QcqpInput, sol: &QcqpSolution) -> f64 {
    let k_count = input.offsets.len();
    let mut resid: f64 = 0.0;

    // stationarity in α: Σ_t μ_t G^t α − q + λ1 − s
    let mut stat = vec![0.0; k_count];
    for (t, gram) in input.grams.iter().enumerate() {
        let ga = mat_vec(gram, &sol.alpha);
        for (si, gi) in stat.iter_mut().zip(&ga) {
            *si += sol.mu[t] * gi;
        }
    }
    for k in 0..k_count {
        stat[k] += -input.offsets[k] + sol.capacity_dual - sol.bound_duals[k];
        resid = resid.max(stat[k].abs());
    }
    // stationarity in θ: 1 − Σμ (only meaningful while some quadratic
    // constraint is active; the inactive case reports uniform μ anyway)
    resid = resid.max((1.0 - sol.mu.iter().sum::<f64>()).abs());

    let cap_slack = input.capacity - sol.alpha.iter().sum::<f64>();
    resid = resid.max(-cap_slack.min(0.0));
    resid = resid.max(sol.capacity_dual.max(0.0) * cap_slack.max(0.0));
    for (t, gram) in input.grams.iter().enumerate() {
        let slack = sol.theta - 0.5 * quad_form(gram, &sol.alpha);
        resid = resid.max(-slack.min(0.0));
        resid = resid.max(sol.mu[t].max(0.0) * slack.max(0.0));
    }
    for (&a, &s) in sol.alpha.iter().zip(&sol.bound_duals) {
        resid = resid.max(-a.min(0.0));
        resid = resid.max(s.max(0.0) * a.max(0.0));
    }
    resid
}

pub fn solve(input: &QcqpInput, tol: f64) -> Result<QcqpSolution> {
    solve_warm(input, tol, None)
}

/// Like [`solve`], seeding the interior point from a previous α (padded or
/// truncated by the caller to the current cut count).
pub fn solve_warm(input: &QcqpInput, tol: f64, warm: Option<&[f64]>) -> Result<QcqpSolution> {
    let (t_count, k_count) = validate(input)?;
    if !(tol > 0.0) {
        return Err(Error::Qcqp(format!("tolerance must be positive, got {tol}")));
    }

    // No profitable cut: α = 0 is exactly optimal with λ = 0, s = −q.
    if input.offsets.iter().all(|&q| q <= 0.0) {
        return Ok(QcqpSolution {
            alpha: vec![0.0; k_count],
            theta: 0.0,
            mu: vec![1.0 / t_count as f64; t_count],
            objective: 0.0,
            kkt_residual: 0.0,
            capacity_dual: 0.0,
            bound_duals: input.offsets.iter().map(|&q| -q).collect(),
            mu_active: false,
            iterations: 0,
        });
    }

    let c = input.capacity;
    let m = t_count + k_count + 1;
    let dim = k_count + 1;

    // Stationarity terms live on the scale of q and of C·G·α, so measure
    // the residual relative to it; the centrality floor below keeps the
    // barrier from collapsing complementarity orders of magnitude past
    // the target, which would destroy the Newton system's conditioning.
    let gram_diag = input
        .grams
        .iter()
        .flat_map(|g| (0..k_count).map(|i| g[i][i].abs()))
        .fold(0.0f64, f64::max);
    let scale = 1.0f64
        .max(input.offsets.iter().fold(0.0f64, |a, q| a.max(q.abs())))
        .max(c * gram_diag);
    let tol_eff = tol * scale;
    let centrality_floor = 0.05 * tol_eff;

    // Strictly interior start, optionally biased toward a warm α.
    let base = c / (4.0 * k_count as f64);
    let mut alpha: Vec<f64> = match warm {
        Some(w) if w.len() == k_count => w
            .iter()
            .map(|&a| a.max(base * 1e-3).min(c))
            .collect(),
        _ => vec![base; k_count],
    };
    let sum: f64 = alpha.iter().sum();
    if sum >= 0.9 * c {
        let shrink = 0.9 * c / sum;
        for a in &mut alpha {
            *a *= shrink;
        }
    }
    let worst_quad = input
        .grams
        .iter()
        .map(|g| 0.5 * quad_form(g, &alpha))
        .fold(0.0f64, f64::max);
    let theta = worst_quad + 1.0 + 0.1 * input.offsets.iter().fold(0.0f64, |a, q| a.max(q.abs()));

    let mut it = Iterate {
        slack: constraint_values(input, &alpha, theta).iter().map(|&g| -g).collect(),
        dual: vec![1.0; m],
        alpha,
        theta,
    };
    debug_assert!(it.slack.iter().all(|&s| s > 0.0));

    let mut best: Option<(f64, QcqpSolution)> = None;
    for iteration in 1..=MAX_ITERATIONS {
        let g = constraint_values(input, &it.alpha, it.theta);
        let grams_alpha: Vec<Vec<f64>> =
            input.grams.iter().map(|gr| mat_vec(gr, &it.alpha)).collect();

        // r_dual = ∇f + Jᵀz with ∇f = (−q, 1)
        let mut r_dual = vec![0.0; dim];
        for k in 0..k_count {
            r_dual[k] = -input.offsets[k];
        }
        r_dual[k_count] = 1.0;
        for t in 0..t_count {
            for k in 0..k_count {
                r_dual[k] += it.dual[t] * grams_alpha[t][k];
            }
            r_dual[k_count] -= it.dual[t];
        }
        for k in 0..k_count {
            r_dual[k] -= it.dual[t_count + k];
            r_dual[k] += it.dual[m - 1];
        }

        let r_prim: Vec<f64> = g.iter().zip(&it.slack).map(|(&gj, &sj)| gj + sj).collect();
        let mu_hat = it.slack.iter().zip(&it.dual).map(|(s, z)| s * z).sum::<f64>() / m as f64;

        let rd_norm = r_dual.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let feas = g.iter().fold(0.0f64, |a, &x| a.max(x));
        if rd_norm <= tol_eff && feas <= tol_eff && mu_hat <= tol_eff {
            return Ok(finish(input, &it, iteration, tol));
        }
        let snapshot = finish(input, &it, iteration, tol);
        if best.as_ref().is_none_or(|(r, _)| snapshot.kkt_residual < *r) {
            best = Some((snapshot.kkt_residual, snapshot));
        }

        // Normal equations: (Σ_t z_t ∇²g_t + Jᵀ diag(z/s) J) dx = rhs
        let mut mat = vec![0.0; dim * dim];
        for t in 0..t_count {
            let zt = it.dual[t];
            let dt = it.dual[t] / it.slack[t];
            for i in 0..k_count {
                for j in 0..k_count {
                    mat[i * dim + j] +=
                        zt * input.grams[t][i][j] + dt * grams_alpha[t][i] * grams_alpha[t][j];
                }
                mat[i * dim + k_count] -= dt * grams_alpha[t][i];
                mat[k_count * dim + i] -= dt * grams_alpha[t][i];
            }
            mat[k_count * dim + k_count] += dt;
        }
        for k in 0..k_count {
            mat[k * dim + k] += it.dual[t_count + k] / it.slack[t_count + k];
        }
        let dcap = it.dual[m - 1] / it.slack[m - 1];
        for i in 0..k_count {
            for j in 0..k_count {
                mat[i * dim + j] += dcap;
            }
        }

        // rhs = −r_dual − Jᵀ[(z_j r_prim_j − r_comp_j)/s_j]
        let comp_target = (CENTERING * mu_hat).max(centrality_floor);
        let mut rhs = vec![0.0; dim];
        let weight = |j: usize, it: &Iterate, r_prim: &[f64]| -> f64 {
            let r_comp = it.slack[j] * it.dual[j] - comp_target;
            (it.dual[j] * r_prim[j] - r_comp) / it.slack[j]
        };
        for k in 0..dim {
            rhs[k] = -r_dual[k];
        }
        for t in 0..t_count {
            let w = weight(t, &it, &r_prim);
            for k in 0..k_count {
                rhs[k] -= w * grams_alpha[t][k];
            }
            rhs[k_count] += w;
        }
        for k in 0..k_count {
            rhs[k] += weight(t_count + k, &it, &r_prim);
        }
        let wcap = weight(m - 1, &it, &r_prim);
        for k in 0..k_count {
            rhs[k] -= wcap;
        }

        // factor with escalating ridge if needed
        let mut dx;
        let max_diag = (0..dim).fold(0.0f64, |m, i| m.max(mat[i * dim + i].abs()));
        let mut ridge = 0.0;
        loop {
            let mut factor = mat.clone();
            for i in 0..dim {
                factor[i * dim + i] += ridge;
            }
            if cholesky_in_place(&mut factor, dim).is_ok() {
                dx = rhs.clone();
                cholesky_solve(&factor, dim, &mut dx);
                break;
            }
            ridge = if ridge == 0.0 { 1e-14 * max_diag.max(1.0) } else { ridge * 100.0 };
            if !max_diag.is_finite() || ridge > 1e-2 * max_diag.max(1.0) {
                // numerical breakdown: surface the best certified iterate
                let (residual, best) = best.take().expect("at least one iterate recorded");
                return Err(Error::QcqpNotConverged {
                    residual,
                    best: Box::new(best),
                });
            }
        }

        // ds = −r_prim − J dx; dz from the complementarity rows
        let mut ds = vec![0.0; m];
        let mut dz = vec![0.0; m];
        for t in 0..t_count {
            let jdx: f64 = grams_alpha[t]
                .iter()
                .zip(&dx[..k_count])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                - dx[k_count];
            ds[t] = -r_prim[t] - jdx;
        }
        for k in 0..k_count {
            ds[t_count + k] = -r_prim[t_count + k] + dx[k];
        }
        ds[m - 1] = -r_prim[m - 1] - dx[..k_count].iter().sum::<f64>();
        for j in 0..m {
            let r_comp = it.slack[j] * it.dual[j] - comp_target;
            dz[j] = -(r_comp + it.dual[j] * ds[j]) / it.slack[j];
        }

        let mut step = 1.0f64;
        for j in 0..m {
            if ds[j] < 0.0 {
                step = step.min(-BOUNDARY_FRACTION * it.slack[j] / ds[j]);
            }
            if dz[j] < 0.0 {
                step = step.min(-BOUNDARY_FRACTION * it.dual[j] / dz[j]);
            }
        }

        for k in 0..k_count {
            it.alpha[k] += step * dx[k];
        }
        it.theta += step * dx[k_count];
        for j in 0..m {
            it.slack[j] += step * ds[j];
            it.dual[j] += step * dz[j];
        }
    }

    let (residual, best) = best.expect("at least one iterate recorded");
    Err(Error::QcqpNotConverged {
        residual,
        best: Box::new(best),
    })
}

fn finish(input: &QcqpInput, it: &Iterate, iterations: usize, tol: f64) -> QcqpSolution {
    let t_count = input.grams.len();
    let k_count = input.offsets.len();
    let alpha: Vec<f64> = it.alpha.iter().map(|&a| a.max(0.0)).collect();
    let theta = it.theta.max(0.0);
    let mu_active = theta > tol;
    let mu: Vec<f64> = if mu_active {
        it.dual[..t_count].to_vec()
    } else {
        vec![1.0 / t_count as f64; t_count]
    };
    let objective = -theta
        + input
            .offsets
            .iter()
            .zip(&alpha)
            .map(|(q, a)| q * a)
            .sum::<f64>();
    let mut sol = QcqpSolution {
        alpha,
        theta,
        mu,
        objective,
        kkt_residual: 0.0,
        capacity_dual: it.dual[t_count + k_count],
        bound_duals: it.dual[t_count..t_count + k_count].to_vec(),
        mu_active,
        iterations,
    };
    sol.kkt_residual = kkt_residual(input, &sol);
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfcheck::qcqp_grid_best;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Random cut vectors per group; Grams built from actual inner
    /// products so they are Grams by construction.
    pub(crate) fn random_instance(
        rng: &mut ChaCha8Rng,
        k_count: usize,
        t_count: usize,
    ) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>, Vec<f64>, f64) {
        let dims: Vec<usize> = (0..t_count).map(|_| rng.random_range(1..=4)).collect();
        // vectors[k][t]: block of cut k on group t
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

    #[test]
    fn one_dimensional_closed_form() {
        let grams = vec![vec![vec![2.0]]];
        let offsets = vec![3.0];
        let input = QcqpInput {
            grams: &grams,
            offsets: &offsets,
            capacity: 10.0, // large enough that the capacity stays slack
        };
        let sol = solve(&input, 1e-9).unwrap();
        // α = q/g, θ = ½q²/g, objective = ½q²/g
        assert!((sol.alpha[0] - 1.5).abs() < 1e-6, "{:?}", sol.alpha);
        assert!((sol.theta - 2.25).abs() < 1e-6);
        assert!((sol.objective - 2.25).abs() < 1e-6);
        assert!((sol.mu[0] - 1.0).abs() < 1e-6);
        assert!(sol.kkt_residual <= 1e-7, "{}", sol.kkt_residual);
    }

    #[test]
    fn unprofitable_cuts_give_zero() {
        let grams = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        let offsets = vec![-0.5, 0.0];
        let input = QcqpInput {
            grams: &grams,
            offsets: &offsets,
            capacity: 1.0,
        };
        let sol = solve(&input, 1e-8).unwrap();
        assert_eq!(sol.alpha, vec![0.0, 0.0]);
        assert_eq!(sol.theta, 0.0);
        assert_eq!(sol.objective, 0.0);
        assert!(!sol.mu_active);
        assert_eq!(sol.kkt_residual, 0.0);
    }

    #[test]
    fn matches_grid_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..25 {
            let k = rng.random_range(1..=2);
            let t = rng.random_range(1..=2);
            let (_, grams, offsets, capacity) = random_instance(&mut rng, k, t);
            let input = QcqpInput {
                grams: &grams,
                offsets: &offsets,
                capacity,
            };
            let sol = solve(&input, 1e-9).unwrap();
            let grid = qcqp_grid_best(&grams, &offsets, capacity, 1e-3 * capacity).unwrap();
            // any grid point is feasible: the solver may never undershoot
            // one beyond its own certified duality gap
            assert!(
                sol.objective >= grid - 1e-7,
                "trial {trial}: solver {} below grid {}",
                sol.objective,
                grid
            );
            let reference =
                crate::selfcheck::qcqp_reference_best(&grams, &offsets, capacity, 1e-3 * capacity)
                    .unwrap();
            assert!(
                (sol.objective - reference).abs() < 1e-4,
                "trial {trial}: solver {} vs reference {}",
                sol.objective,
                reference
            );
        }
    }

    #[test]
    fn duality_bridge_to_reduced_primal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let k = rng.random_range(1..=6);
            let t = rng.random_range(1..=3);
            let (vectors, grams, offsets, capacity) = random_instance(&mut rng, k, t);
            let input = QcqpInput {
                grams: &grams,
                offsets: &offsets,
                capacity,
            };
            let sol = solve(&input, 1e-9).unwrap();
            let blocks: Vec<&[Vec<f64>]> = vectors.iter().map(|v| v.as_slice()).collect();
            let sizes: Vec<usize> = (0..t).map(|ti| vectors[0][ti].len()).collect();
            let weights = recover_group_weights(&sol, &blocks, &sizes);

            let norm_sum: f64 = weights
                .iter()
                .map(|w| w.iter().map(|x| x * x).sum::<f64>().sqrt())
                .sum();
            let mut worst_cut = 0.0f64;
            for (ki, blocks_k) in vectors.iter().enumerate() {
                let mut dot = 0.0;
                for (ti, w) in weights.iter().enumerate() {
                    dot += w.iter().zip(&blocks_k[ti]).map(|(a, b)| a * b).sum::<f64>();
                }
                worst_cut = worst_cut.max(dot + offsets[ki]);
            }
            let primal = 0.5 * norm_sum * norm_sum + capacity * worst_cut.max(0.0);
            assert!(
                (primal - sol.objective).abs() < 1e-6,
                "primal {primal} vs dual {}",
                sol.objective
            );
        }
    }

    #[test]
    fn invariant_under_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (_, grams, offsets, capacity) = random_instance(&mut rng, 4, 3);
        let input = QcqpInput {
            grams: &grams,
            offsets: &offsets,
            capacity,
        };
        let baseline = solve(&input, 1e-9).unwrap().objective;

        // permute cuts (rows/cols of every gram plus offsets)
        let perm = [2usize, 0, 3, 1];
        let grams_p: Vec<Vec<Vec<f64>>> = grams
            .iter()
            .map(|g| {
                perm.iter()
                    .map(|&i| perm.iter().map(|&j| g[i][j]).collect())
                    .collect()
            })
            .collect();
        let offsets_p: Vec<f64> = perm.iter().map(|&i| offsets[i]).collect();
        let sol_p = solve(
            &QcqpInput {
                grams: &grams_p,
                offsets: &offsets_p,
                capacity,
            },
            1e-9,
        )
        .unwrap();
        assert!((sol_p.objective - baseline).abs() < 1e-7);

        // permute groups
        let grams_g = vec![grams[1].clone(), grams[2].clone(), grams[0].clone()];
        let sol_g = solve(
            &QcqpInput {
                grams: &grams_g,
                offsets: &offsets,
                capacity,
            },
            1e-9,
        )
        .unwrap();
        assert!((sol_g.objective - baseline).abs() < 1e-7);
    }

    #[test]
    fn extra_cut_never_decreases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let t = rng.random_range(1..=3);
            let (vectors, grams, offsets, capacity) = random_instance(&mut rng, 5, t);
            let shrink = |g: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                g[..4].iter().map(|row| row[..4].to_vec()).collect()
            };
            let grams_small: Vec<Vec<Vec<f64>>> = grams.iter().map(shrink).collect();
            let small = solve(
                &QcqpInput {
                    grams: &grams_small,
                    offsets: &offsets[..4],
                    capacity,
                },
                1e-9,
            )
            .unwrap();
            let mut warm = small.alpha.clone();
            warm.push(0.0);
            let full = solve_warm(
                &QcqpInput {
                    grams: &grams,
                    offsets: &offsets,
                    capacity,
                },
                1e-9,
                Some(&warm),
            )
            .unwrap();
            assert!(
                full.objective >= small.objective - 1e-7,
                "{} < {} ({} cuts vs {})",
                full.objective,
                small.objective,
                vectors.len(),
                4
            );
        }
    }

    #[test]
    fn simplex_and_slackness_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..30 {
            let k = rng.random_range(1..=6);
            let t = rng.random_range(1..=4);
            let (_, grams, offsets, capacity) = random_instance(&mut rng, k, t);
            let input = QcqpInput {
                grams: &grams,
                offsets: &offsets,
                capacity,
            };
            let sol = solve(&input, 1e-8).unwrap();
            assert!(sol.kkt_residual <= 1e-6, "residual {}", sol.kkt_residual);
            if sol.mu_active {
                let sum: f64 = sol.mu.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6, "Σμ = {sum}");
            }
            assert!(sol.alpha.iter().sum::<f64>() <= capacity + 1e-8);
            for (ti, g) in grams.iter().enumerate() {
                let q = 0.5 * quad_form(g, &sol.alpha);
                assert!(q <= sol.theta + 1e-8);
                assert!(sol.mu[ti] * (sol.theta - q) <= 1e-6);
            }
        }
    }

    #[test]
    fn weight_recovery_formula() {
        let block = [vec![vec![1.0, -2.0], vec![0.5, 0.0]]]; // one cut, two groups
        let blocks: Vec<&[Vec<f64>]> = block.iter().map(|b| b.as_slice()).collect();
        let sizes = [2usize, 2usize];
        let mut sol = QcqpSolution {
            alpha: vec![0.8],
            theta: 1.0,
            mu: vec![0.25, 0.75],
            objective: 0.0,
            kkt_residual: 0.0,
            capacity_dual: 0.0,
            bound_duals: vec![0.0],
            mu_active: true,
            iterations: 1,
        };
        // w_t = −μ_t α p_t on each group's support
        let w = recover_group_weights(&sol, &blocks, &sizes);
        assert_eq!(w[0], vec![-0.25 * 0.8 * 1.0, -0.25 * 0.8 * -2.0]);
        assert_eq!(w[1], vec![-0.75 * 0.8 * 0.5, 0.0]);
        // α = 0 zeroes everything
        sol.alpha[0] = 0.0;
        let w = recover_group_weights(&sol, &blocks, &sizes);
        assert!(w.iter().all(|wt| wt.iter().all(|&x| x == 0.0)));
        // μ_t = 0 zeroes that group regardless of α
        sol.alpha[0] = 1.0;
        sol.mu = vec![0.0, 1.0];
        let w = recover_group_weights(&sol, &blocks, &sizes);
        assert!(w[0].iter().all(|&x| x == 0.0));
        assert!(w[1][0] != 0.0);
    }

    #[test]
    fn rejects_malformed_instances() {
        let asym = vec![vec![vec![1.0, 0.5], vec![0.1, 1.0]]];
        assert!(solve(
            &QcqpInput {
                grams: &asym,
                offsets: &[1.0, 1.0],
                capacity: 1.0
            },
            1e-8
        )
        .is_err());
        let empty: Vec<Vec<Vec<f64>>> = vec![];
        assert!(solve(
            &QcqpInput {
                grams: &empty,
                offsets: &[1.0],
                capacity: 1.0
            },
            1e-8
        )
        .is_err());
        let ok = vec![vec![vec![1.0]]];
        assert!(solve(
            &QcqpInput {
                grams: &ok,
                offsets: &[1.0],
                capacity: -1.0
            },
            1e-8
        )
        .is_err());
    }

    #[cfg(debug_assertions)]
    #[test]
    fn rejects_indefinite_gram_in_debug() {
        let bad = vec![vec![vec![1.0, 2.0], vec![2.0, 1.0]]]; // eigenvalues 3, −1
        assert!(solve(
            &QcqpInput {
                grams: &bad,
                offsets: &[1.0, 1.0],
                capacity: 1.0
            },
            1e-8
        )
        .is_err());
    }
}

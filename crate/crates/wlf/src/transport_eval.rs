//! Oracles and metrics: exact sample W1 via an assignment solver, log-domain
//! Sinkhorn, the closed-form Gaussian W2 oracle, a 1-D grid oracle for the
//! entropic interpolation, trajectory simulation, optimality residuals, and
//! the leave-one-timepoint-out evaluation protocol.

use crate::dataio::{
    build_mean_accel_potential, build_mean_accel_potential_with_held_out, LooSettings,
    MarginalDataset,
};
use crate::error::{Result, WlfError};
use crate::field::{FieldSpec, Needs, ScalarField};
use crate::hamiltonians::{integrand, Kinetic, ProblemSpec};
use crate::pathmodel::{batch_from_times, interpolate, PathSpec};
use crate::trainer::{train, TrainConfig};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Exact W1 (assignment)
// ---------------------------------------------------------------------------

/// Minimum-cost perfect matching on a square cost matrix by shortest
/// augmenting paths; ties resolve to the lowest index. Returns row → column.
pub(crate) fn min_cost_assignment(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    debug_assert_eq!(n, cost.ncols());
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0_usize; n + 1]; // column -> assigned row (1-based)
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0_usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact Wasserstein-1 between two equal-size samples under Euclidean cost:
/// the mean matched distance of the optimal assignment.
pub fn exact_w1(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let n = a.nrows();
    if n != b.nrows() || a.ncols() != b.ncols() {
        return Err(WlfError::contract(format!(
            "exact_w1 needs equal shapes, got {}×{} vs {}×{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if n == 0 {
        return Err(WlfError::contract("exact_w1 needs nonempty samples"));
    }
    if n > 4096 {
        return Err(WlfError::contract("exact_w1 supports n <= 4096; subsample first"));
    }
    let cost = Array2::from_shape_fn((n, n), |(i, j)| {
        euclid(&a.row(i).to_vec(), &b.row(j).to_vec())
    });
    if !cost.iter().all(|v| v.is_finite()) {
        return Err(WlfError::numeric("non-finite distances in exact_w1"));
    }
    let assign = min_cost_assignment(&cost);
    Ok(assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum::<f64>()
        / n as f64)
}

// ---------------------------------------------------------------------------
// Sinkhorn
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: Array2<f64>,
    /// Transport cost Σ π·C under the squared Euclidean cost.
    pub cost: f64,
    /// L1 violations of the two marginal constraints.
    pub marginal_err: (f64, f64),
    /// False means the iteration budget ran out; the result is still usable.
    pub converged: bool,
}

fn logsumexp(vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn for entropic OT with squared Euclidean cost.
/// `a`/`b` are nonnegative weights summing to the same total.
pub fn sinkhorn(
    a: &[f64],
    xa: ArrayView2<f64>,
    b: &[f64],
    xb: ArrayView2<f64>,
    eps: f64,
    iters: usize,
) -> Result<SinkhornResult> {
    if eps <= 0.0 {
        return Err(WlfError::config("sinkhorn needs eps > 0"));
    }
    let (n, m) = (xa.nrows(), xb.nrows());
    if a.len() != n || b.len() != m || xa.ncols() != xb.ncols() {
        return Err(WlfError::contract("sinkhorn weight/support shape mismatch"));
    }
    if a.iter().chain(b).any(|w| !w.is_finite() || *w < 0.0) {
        return Err(WlfError::contract("sinkhorn weights must be nonnegative"));
    }
    let cost = Array2::from_shape_fn((n, m), |(i, j)| {
        xa.row(i)
            .iter()
            .zip(xb.row(j).iter())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
    });
    let la: Vec<f64> = a.iter().map(|w| w.max(1e-300).ln()).collect();
    let lb: Vec<f64> = b.iter().map(|w| w.max(1e-300).ln()).collect();
    let mut f = vec![0.0_f64; n];
    let mut g = vec![0.0_f64; m];
    let tol = 1e-9;
    let mut converged = false;
    for _ in 0..iters {
        for i in 0..n {
            let lse = logsumexp((0..m).map(|j| lb[j] + (g[j] - cost[(i, j)]) / eps));
            f[i] = -eps * lse;
        }
        let mut delta = 0.0_f64;
        for j in 0..m {
            let lse = logsumexp((0..n).map(|i| la[i] + (f[i] - cost[(i, j)]) / eps));
            let new = -eps * lse;
            delta = delta.max((new - g[j]).abs());
            g[j] = new;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }
    let mut coupling = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            coupling[(i, j)] = (la[i] + lb[j] + (f[i] + g[j] - cost[(i, j)]) / eps).exp();
        }
    }
    let cost_val = coupling
        .iter()
        .zip(cost.iter())
        .map(|(p, c)| p * c)
        .sum::<f64>();
    let mut err_a = 0.0;
    for i in 0..n {
        err_a += ((0..m).map(|j| coupling[(i, j)]).sum::<f64>() - a[i]).abs();
    }
    let mut err_b = 0.0;
    for j in 0..m {
        err_b += ((0..n).map(|i| coupling[(i, j)]).sum::<f64>() - b[j]).abs();
    }
    Ok(SinkhornResult {
        coupling,
        cost: cost_val,
        marginal_err: (err_a, err_b),
        converged,
    })
}

// ---------------------------------------------------------------------------
// Gaussian W2 (Bures)
// ---------------------------------------------------------------------------

fn sym_sqrt(m: &nalgebra::DMatrix<f64>) -> Result<nalgebra::DMatrix<f64>> {
    let sym = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let eig = nalgebra::SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
        return Err(WlfError::contract("covariance is not positive definite"));
    }
    let sqrt_vals = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt_vals * eig.eigenvectors.transpose())
}

/// Squared Bures–Wasserstein distance between Gaussians:
///   ‖m0−m1‖² + tr(Σ0 + Σ1 − 2(Σ0^{1/2} Σ1 Σ0^{1/2})^{1/2}).
pub fn gaussian_w2(m0: &[f64], s0: &Array2<f64>, m1: &[f64], s1: &Array2<f64>) -> Result<f64> {
    let d = m0.len();
    if m1.len() != d || s0.dim() != (d, d) || s1.dim() != (d, d) {
        return Err(WlfError::contract("gaussian_w2 dimension mismatch"));
    }
    for s in [s0, s1] {
        for i in 0..d {
            for j in 0..d {
                if (s[(i, j)] - s[(j, i)]).abs() > 1e-9 {
                    return Err(WlfError::contract("covariance must be symmetric"));
                }
            }
            if s[(i, i)] <= 0.0 {
                return Err(WlfError::contract("covariance is not positive definite"));
            }
        }
    }
    let na_s0 = nalgebra::DMatrix::from_fn(d, d, |i, j| s0[(i, j)]);
    let na_s1 = nalgebra::DMatrix::from_fn(d, d, |i, j| s1[(i, j)]);
    let eig = nalgebra::SymmetricEigen::new(na_s0.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(WlfError::contract("covariance is not positive definite"));
    }
    let eig1 = nalgebra::SymmetricEigen::new(na_s1.clone());
    if eig1.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(WlfError::contract("covariance is not positive definite"));
    }
    let root0 = sym_sqrt(&na_s0)?;
    let inner = &root0 * &na_s1 * &root0;
    let cross = sym_sqrt(&inner)?;
    let mean_sq: f64 = m0.iter().zip(m1).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(mean_sq + na_s0.trace() + na_s1.trace() - 2.0 * cross.trace())
}

// ---------------------------------------------------------------------------
// 1-D Schrödinger-bridge grid oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SbOracleResult {
    pub grid: Vec<f64>,
    /// Density values on the grid (integrates to ≈1 by the trapezoid rule).
    pub density: Vec<f64>,
    /// Mixture mass falling outside the grid.
    pub mass_leakage: f64,
    /// True when mass_leakage exceeds 1e-3 (grid too coarse or too narrow).
    pub warning: bool,
}

/// Entropic interpolation marginal at time `t` for the 1-D bridge between two
/// grid densities with volatility σ: entropic OT with ε=σ² (half squared cost,
/// so the prior kernel is exp(−(x−y)²/(2σ²))), then the Brownian-bridge
/// mixture of the coupling.
pub fn sb_grid_oracle(
    grid: &[f64],
    mu0: &[f64],
    mu1: &[f64],
    sigma: f64,
    t: f64,
) -> Result<SbOracleResult> {
    let n = grid.len();
    if n < 2 || mu0.len() != n || mu1.len() != n {
        return Err(WlfError::contract("sb_grid_oracle grid/density length mismatch"));
    }
    if sigma <= 0.0 {
        return Err(WlfError::config("sb_grid_oracle needs sigma > 0"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(WlfError::contract("sb_grid_oracle needs t in [0,1]"));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(WlfError::contract("grid must be strictly increasing"));
    }
    let dx = grid[1] - grid[0];
    let normalize = |mu: &[f64]| -> Vec<f64> {
        let mass: f64 = mu.iter().sum::<f64>() * dx;
        mu.iter().map(|v| v / mass).collect()
    };
    let p0 = normalize(mu0);
    let p1 = normalize(mu1);
    if t == 0.0 || t == 1.0 {
        let density = if t == 0.0 { p0 } else { p1 };
        return Ok(SbOracleResult {
            grid: grid.to_vec(),
            density,
            mass_leakage: 0.0,
            warning: false,
        });
    }

    // static problem: weights are cell masses, cost ½(x−y)², ε=σ²
    let a: Vec<f64> = p0.iter().map(|v| v * dx).collect();
    let b: Vec<f64> = p1.iter().map(|v| v * dx).collect();
    let xa = Array2::from_shape_fn((n, 1), |(i, _)| grid[i]);
    // sinkhorn uses squared cost, so rescale ε to get exp(−(x−y)²/(2σ²))
    let res = sinkhorn(&a, xa.view(), &b, xa.view(), 2.0 * sigma * sigma, 4000)?;

    // Brownian-bridge mixture: π_ij · N((1−t)x_i + t x_j, σ²t(1−t))
    let var = sigma * sigma * t * (1.0 - t);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut density = vec![0.0_f64; n];
    for i in 0..n {
        for j in 0..n {
            let w = res.coupling[(i, j)];
            if w <= 0.0 {
                continue;
            }
            let mean = (1.0 - t) * grid[i] + t * grid[j];
            for (gidx, &x) in grid.iter().enumerate() {
                let z = x - mean;
                density[gidx] += w * norm * (-z * z / (2.0 * var)).exp();
            }
        }
    }
    let mass: f64 = density.iter().sum::<f64>() * dx;
    let mass_leakage = (1.0 - mass).abs();
    Ok(SbOracleResult {
        grid: grid.to_vec(),
        density,
        mass_leakage,
        warning: mass_leakage > 1e-3,
    })
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Ode,
    Sde,
    SingleStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimStatus {
    Complete,
    /// Integration stopped early because a state norm exceeded the bound.
    Truncated { step: usize },
}

/// Particle trajectories on a uniform time grid. `log_weights` carry the
/// unbalanced growth accumulation and are identically zero outside WFR.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    /// One n×d state matrix per saved time.
    pub states: Vec<Array2<f64>>,
    /// Per-particle log-weights aligned with `states`.
    pub log_weights: Vec<Vec<f64>>,
    pub mode: SimMode,
    pub status: SimStatus,
}

const BLOWUP_BOUND: f64 = 1e6;

fn grad_field(field: &dyn ScalarField, t: f64, x: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = x.nrows();
    let ts = vec![t; n];
    let evals = field.eval(&ts, x.view(), None, Needs::base())?;
    let d = x.ncols();
    let mut g = Array2::zeros((n, d));
    let mut vals = Vec::with_capacity(n);
    for (i, e) in evals.iter().enumerate() {
        for j in 0..d {
            g[(i, j)] = e.grad_x[j];
        }
        vals.push(e.value);
    }
    Ok((g, vals))
}

/// Simulate particle dynamics induced by the field.
///   ODE: classical 4th-order integration of ẋ = ∇s_t(x); WFR additionally
///        accumulates d(log w)/dt = λ·s_t along the trajectory.
///   SDE: Euler–Maruyama with drift ∇Φ_t and volatility σ(t); entropic only.
///   Single-step: the one-shot map X_1 = X_0 + ∇s_0(X_0).
pub fn simulate(
    problem: &ProblemSpec,
    field: &dyn ScalarField,
    x0: &Array2<f64>,
    steps: usize,
    mode: SimMode,
    seed: u64,
) -> Result<TrajectoryBundle> {
    if x0.ncols() != field.dim() {
        return Err(WlfError::contract("simulate state dimension mismatch"));
    }
    match (mode, problem.is_entropic()) {
        (SimMode::Sde, false) => {
            return Err(WlfError::config(
                "SDE simulation requires an entropic problem (the drift is read as ∇Φ)",
            ))
        }
        (SimMode::Ode, true) | (SimMode::SingleStep, true) => {
            return Err(WlfError::capability(
                "entropic problems are SDE-only: the probability-flow correction needs ∇log ρ_t, which is unavailable",
            ))
        }
        _ => {}
    }
    let n = x0.nrows();
    let lambda = match problem.kinetic {
        Kinetic::Wfr { lambda } => Some(lambda),
        Kinetic::W2 => None,
    };

    if mode == SimMode::SingleStep {
        let (g, _) = grad_field(field, 0.0, x0)?;
        let x1 = x0 + &g;
        return Ok(TrajectoryBundle {
            times: vec![0.0, 1.0],
            states: vec![x0.clone(), x1],
            log_weights: vec![vec![0.0; n]; 2],
            mode,
            status: SimStatus::Complete,
        });
    }

    if steps == 0 {
        return Err(WlfError::contract("simulate needs steps > 0"));
    }
    let dt = 1.0 / steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut log_weights = vec![vec![0.0; n]];
    let mut x = x0.clone();
    let mut logw = vec![0.0; n];
    let mut status = SimStatus::Complete;

    for step in 0..steps {
        let t = step as f64 * dt;
        let next = match mode {
            SimMode::Ode => {
                let (k1, v1) = grad_field(field, t, &x)?;
                let x2 = &x + &(&k1 * (dt / 2.0));
                let (k2, v2) = grad_field(field, t + dt / 2.0, &x2)?;
                let x3 = &x + &(&k2 * (dt / 2.0));
                let (k3, v3) = grad_field(field, t + dt / 2.0, &x3)?;
                let x4 = &x + &(&k3 * dt);
                let (k4, v4) = grad_field(field, t + dt, &x4)?;
                if let Some(l) = lambda {
                    for i in 0..n {
                        let ds = (v1[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]) / 6.0;
                        logw[i] += l * ds * dt;
                    }
                }
                &x + &((&k1 + &(&k2 * 2.0) + &(&k3 * 2.0) + &k4) * (dt / 6.0))
            }
            SimMode::Sde => {
                let (g, _) = grad_field(field, t, &x)?;
                let vol = problem.sigma(t) * dt.sqrt();
                let noise = Array2::from_shape_fn((n, x.ncols()), |_| {
                    vol * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                });
                &x + &(&g * dt) + &noise
            }
            SimMode::SingleStep => unreachable!(),
        };
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_BOUND) {
            status = SimStatus::Truncated { step };
            break;
        }
        x = next;
        times.push((step + 1) as f64 * dt);
        states.push(x.clone());
        log_weights.push(logw.clone());
    }

    Ok(TrajectoryBundle {
        times,
        states,
        log_weights,
        mode,
        status,
    })
}

/// Discrete acceleration statistic: mean ‖second difference‖/dt², normalized
/// by the particle's path length; zero for affine-in-time trajectories.
pub fn straightness(bundle: &TrajectoryBundle) -> Result<f64> {
    let m = bundle.states.len();
    if m < 3 {
        return Err(WlfError::contract("straightness needs at least 3 saved steps"));
    }
    let n = bundle.states[0].nrows();
    let d = bundle.states[0].ncols();
    let dt = bundle.times[1] - bundle.times[0];
    let mut total = 0.0;
    for p in 0..n {
        let mut accel = 0.0;
        for k in 1..m - 1 {
            let mut sq = 0.0;
            for j in 0..d {
                let a = bundle.states[k + 1][(p, j)] - 2.0 * bundle.states[k][(p, j)]
                    + bundle.states[k - 1][(p, j)];
                sq += a * a;
            }
            accel += sq.sqrt() / (dt * dt);
        }
        accel /= (m - 2) as f64;
        let mut length = 0.0;
        for k in 0..m - 1 {
            let mut sq = 0.0;
            for j in 0..d {
                let s = bundle.states[k + 1][(p, j)] - bundle.states[k][(p, j)];
                sq += s * s;
            }
            length += sq.sqrt();
        }
        if length > 0.0 {
            total += accel / length;
        }
    }
    Ok(total / n as f64)
}

/// Centered Hamilton–Jacobi residual per time slice: the mean absolute
/// deviation of the dual integrand from its spatial mean over the cloud
/// (the optimality condition holds up to a spatial constant).
pub fn hj_residual(
    problem: &ProblemSpec,
    field: &dyn ScalarField,
    cloud: ArrayView2<f64>,
    times: &[f64],
) -> Result<Vec<f64>> {
    let n = cloud.nrows();
    if n == 0 {
        return Err(WlfError::contract("hj_residual needs a nonempty cloud"));
    }
    let needs = if problem.is_entropic() {
        Needs::with_laplacian()
    } else {
        Needs::base()
    };
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let ts = vec![t; n];
        let evals = field.eval(&ts, cloud, None, needs)?;
        let vals: Vec<f64> = evals
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let row: Vec<f64> = cloud.row(i).to_vec();
                integrand(problem, e, &row, t).map(|h| h.integrand)
            })
            .collect::<Result<_>>()?;
        let mean = vals.iter().sum::<f64>() / n as f64;
        out.push(vals.iter().map(|v| (v - mean).abs()).sum::<f64>() / n as f64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Leave-one-timepoint-out protocol
// ---------------------------------------------------------------------------

/// One held-out timepoint's W1 scores across seeds, for both prediction
/// routes: drawing from the trained path sampler at the held-out time, and
/// pushing left-endpoint samples through the simulated dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub time_index: usize,
    pub time: f64,
    pub sampler_w1: Vec<f64>,
    pub simulated_w1: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalEntry {
    pub fn sampler_mean_std(&self) -> (f64, f64) {
        mean_std(&self.sampler_w1)
    }
    pub fn simulated_mean_std(&self) -> (f64, f64) {
        mean_std(&self.simulated_w1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub entries: Vec<EvalEntry>,
}

impl EvalTable {
    /// Mean held-out W1 over timepoints and seeds, path-sampler route.
    pub fn mean_sampler_w1(&self) -> f64 {
        let all: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|e| e.sampler_w1.iter().copied())
            .collect();
        mean_std(&all).0
    }

    pub fn mean_simulated_w1(&self) -> f64 {
        let all: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|e| e.simulated_w1.iter().copied())
            .collect();
        mean_std(&all).0
    }
}

/// First `n` rows of a deterministic shuffle (sampling without replacement).
pub(crate) fn subsample_rows(m: ArrayView2<f64>, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let total = m.nrows();
    let n = n.min(total);
    let mut idx: Vec<usize> = (0..total).collect();
    for i in (1..total).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut out = Array2::zeros((n, m.ncols()));
    for (r, &i) in idx.iter().take(n).enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    base.wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(a.wrapping_mul(0xD1B54A32D192ED03))
        .wrapping_add(b.wrapping_add(1))
}

/// The leave-one-timepoint-out protocol: for each interior marginal, retrain
/// on the reduced dataset and score the model marginal at the held-out time
/// with exact W1, aggregated over seeds.
pub fn leave_one_out(
    dataset: &MarginalDataset,
    problem: &ProblemSpec,
    field_spec: &FieldSpec,
    path_spec: &PathSpec,
    cfg: &TrainConfig,
    settings: &LooSettings,
) -> Result<EvalTable> {
    if dataset.num_marginals() < 3 {
        return Err(WlfError::config(
            "leave-one-out needs at least 3 marginals (endpoints are never held out)",
        ));
    }
    if settings.seeds.is_empty() {
        return Err(WlfError::config("leave-one-out needs at least one seed"));
    }
    let mut entries = Vec::new();
    for idx in 1..dataset.num_marginals() - 1 {
        let t_held = dataset.times[idx];
        let truth = &dataset.snapshots[idx];
        let reduced = dataset.without(idx)?;
        let mut sampler_w1 = Vec::new();
        let mut simulated_w1 = Vec::new();
        for (snum, &seed) in settings.seeds.iter().enumerate() {
            let run_problem = if settings.mean_accel_potential {
                let pot = if settings.use_held_out_mean {
                    let held_mean: Vec<f64> = (0..dataset.dim)
                        .map(|j| truth.column(j).sum() / truth.nrows() as f64)
                        .collect();
                    build_mean_accel_potential_with_held_out(&reduced, t_held, &held_mean)?
                } else {
                    build_mean_accel_potential(&reduced)?
                };
                let mut p = problem.clone();
                p.potential = Some(crate::hamiltonians::PotentialTerm {
                    spec: pot,
                    weight: 1.0,
                });
                p
            } else {
                problem.clone()
            };
            let run_cfg = TrainConfig {
                seed: mix_seed(cfg.seed, seed, idx as u64),
                ..cfg.clone()
            };
            let trained = train(&run_problem, &reduced, field_spec, path_spec, &run_cfg)?;

            let n_eval = settings.n_eval.min(truth.nrows()).min(512);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, seed, 7919 + idx as u64));
            let truth_sub = subsample_rows(truth.view(), n_eval, &mut rng);

            // route 1: path sampler at the held-out global time
            let batch = batch_from_times(&reduced, vec![t_held; n_eval], &mut rng);
            let pred = interpolate(&trained.path, &reduced.times, &batch)?;
            sampler_w1.push(exact_w1(pred.view(), truth_sub.view())?);

            // route 2: simulated dynamics from the first marginal
            let x0 = reduced.draw(0, n_eval, &mut rng);
            let mode = if run_problem.is_entropic() {
                SimMode::Sde
            } else {
                SimMode::Ode
            };
            let steps = 100;
            let bundle = simulate(
                &run_problem,
                &trained.field,
                &x0,
                steps,
                mode,
                mix_seed(cfg.seed, seed, 104729 + idx as u64),
            )?;
            let k = ((t_held * steps as f64).round() as usize).min(bundle.states.len() - 1);
            simulated_w1.push(exact_w1(bundle.states[k].view(), truth_sub.view())?);
            let _ = snum;
        }
        entries.push(EvalEntry {
            time_index: idx,
            time: t_held,
            sampler_w1,
            simulated_w1,
        });
    }
    Ok(EvalTable { entries })
}

/// Baseline for the protocol: independent-coupling linear interpolation
/// between the neighbors of the held-out marginal.
pub fn loo_baseline(dataset: &MarginalDataset, idx: usize, n: usize, seed: u64) -> Result<f64> {
    if idx == 0 || idx + 1 == dataset.num_marginals() {
        return Err(WlfError::config("baseline index must be interior"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = dataset.times[idx];
    let (t0, t1) = (dataset.times[idx - 1], dataset.times[idx + 1]);
    let w = (t - t0) / (t1 - t0);
    let truth = subsample_rows(dataset.snapshots[idx].view(), n, &mut rng);
    let n = truth.nrows();
    let xl = dataset.draw(idx - 1, n, &mut rng);
    let xr = dataset.draw(idx + 1, n, &mut rng);
    let pred = &xl * (1.0 - w) + &xr * w;
    exact_w1(pred.view(), truth.view())
}

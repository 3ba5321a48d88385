//! The saddle-point training loop: Monte Carlo dual estimation, ascent on the
//! field parameters θ, ascent on the path parameters η against the integrand
//! term (which descends the dual), optional Wasserstein refinement of the
//! sampled points, optimizer state, and history logging.

use crate::dataio::MarginalDataset;
use crate::error::{Result, WlfError};
use crate::field::{
    eval_batch, grad_params, init_params, CotangentWeights, FieldParams, FieldSpec, Needs,
};
use crate::hamiltonians::{integrand, ProblemSpec};
use crate::pathmodel::{
    batch_from_times, init_path_params, interpolate, path_gradient, sample_path_batch,
    wasserstein_refine, PathBatch, PathParams, PathSpec,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Adaptive-moment optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl Adam {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One ascent step: params ← params + lr·m̂/(√v̂ + ε).
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] += lr * mh / (vh.sqrt() + self.cfg.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeSampling {
    #[default]
    Uniform,
    /// One uniform draw per stratum (i + u)/n; lower-variance time integral.
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_lr")]
    pub lr_theta: f64,
    #[serde(default = "default_lr")]
    pub lr_eta: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub refine_steps: usize,
    /// Refinement step size; `None` means 0.1·(interval length).
    #[serde(default)]
    pub refine_alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// θ updates per η update (timescale separation for the saddle point).
    #[serde(default = "default_one")]
    pub theta_steps_per_eta: usize,
    #[serde(default)]
    pub time_sampling: TimeSampling,
    #[serde(default = "default_divergence_bound")]
    pub divergence_bound: f64,
    /// Final learning-rate multiplier; the step size is scaled by a cosine
    /// ramp from 1 at the first iteration down to this value at the last.
    /// The default of 1 keeps the rate constant.
    #[serde(default = "default_one_f64")]
    pub lr_final_factor: f64,
    /// Average the iterates over this many trailing iterations and return the
    /// averages instead of the final point. Zero (the default) disables it.
    /// Tail averaging damps the residual oscillation of gradient
    /// descent-ascent around the saddle.
    #[serde(default)]
    pub average_last: usize,
}

fn default_batch() -> usize {
    128
}
fn default_iterations() -> usize {
    1000
}
fn default_lr() -> f64 {
    1e-3
}
fn default_eval_every() -> usize {
    50
}
fn default_one() -> usize {
    1
}
fn default_divergence_bound() -> f64 {
    1e6
}
fn default_one_f64() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch(),
            iterations: default_iterations(),
            lr_theta: default_lr(),
            lr_eta: default_lr(),
            adam: AdamConfig::default(),
            refine_steps: 0,
            refine_alpha: None,
            seed: 0,
            eval_every: default_eval_every(),
            theta_steps_per_eta: default_one(),
            time_sampling: TimeSampling::Uniform,
            divergence_bound: default_divergence_bound(),
            lr_final_factor: default_one_f64(),
            average_last: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(WlfError::config("batch_size must be positive"));
        }
        if self.lr_theta <= 0.0 || self.lr_eta <= 0.0 {
            return Err(WlfError::config("learning rates must be positive"));
        }
        if self.eval_every == 0 {
            return Err(WlfError::config("eval_every must be positive"));
        }
        if self.theta_steps_per_eta == 0 {
            return Err(WlfError::config("theta_steps_per_eta must be positive"));
        }
        if self.divergence_bound <= 0.0 {
            return Err(WlfError::config("divergence_bound must be positive"));
        }
        if !(self.lr_final_factor > 0.0 && self.lr_final_factor <= 1.0) {
            return Err(WlfError::config("lr_final_factor must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(WlfError::config("moment decays must lie in [0,1)"));
        }
        if let Some(a) = self.refine_alpha {
            if a <= 0.0 {
                return Err(WlfError::config("refine_alpha must be positive"));
            }
        }
        Ok(())
    }
}

/// Breakdown of the dual estimate over one inter-marginal interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval: usize,
    pub boundary_term: f64,
    pub integrand_term: f64,
    pub dual_estimate: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of the dual objective
///   boundary − integrand = [mean s over μ_last − mean s over μ_first]
///                          − mean over (t, x_t) of [∂s/∂t + K* + U].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub boundary_term: f64,
    pub integrand_term: f64,
    pub dual_estimate: f64,
    pub per_interval: Vec<IntervalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub dual_estimate: f64,
    pub boundary_term: f64,
    pub integrand_term: f64,
    pub grad_norm_theta: f64,
    pub grad_norm_eta: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub field: FieldParams,
    pub path: PathParams,
    pub history: TrainHistory,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn needs_for(problem: &ProblemSpec) -> Needs {
    if problem.is_entropic() {
        Needs::with_laplacian()
    } else {
        Needs::base()
    }
}

/// Unbiased dual estimate with fresh draws. Boundary terms are computed per
/// marginal from one shared draw set each, so the per-interval breakdown
/// telescopes to the global estimate exactly.
pub fn estimate_dual(
    problem: &ProblemSpec,
    field: &FieldParams,
    path: &PathParams,
    dataset: &MarginalDataset,
    n: usize,
    seed: u64,
) -> Result<DualReport> {
    if n == 0 {
        return Err(WlfError::contract("estimate_dual needs n > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = dataset.num_marginals();

    // per-marginal boundary means, one draw set per marginal
    let mut b = Vec::with_capacity(m);
    for i in 0..m {
        let t_i = dataset.times[i];
        let xs = dataset.draw(i, n, &mut rng);
        let ts = vec![t_i; n];
        let evals = eval_batch(field, &ts, xs.view(), None, Needs::base())?;
        b.push(evals.iter().map(|e| e.value).sum::<f64>() / n as f64);
    }

    // time integral: uniform global times through the path sampler
    let batch = sample_path_batch(dataset, n, &mut rng);
    let x = interpolate(path, &dataset.times, &batch)?;
    let evals = eval_batch(field, &batch.t, x.view(), Some(&batch.k), needs_for(problem))?;
    let mut per_interval_integrand = vec![0.0; dataset.num_intervals()];
    let mut per_interval_count = vec![0usize; dataset.num_intervals()];
    for (i, e) in evals.iter().enumerate() {
        let row: Vec<f64> = x.row(i).to_vec();
        let terms = integrand(problem, e, &row, batch.t[i])?;
        per_interval_integrand[batch.interval[i]] += terms.integrand / n as f64;
        per_interval_count[batch.interval[i]] += 1;
    }

    let per_interval: Vec<IntervalReport> = (0..dataset.num_intervals())
        .map(|v| {
            let boundary = b[v + 1] - b[v];
            let integ = per_interval_integrand[v];
            IntervalReport {
                interval: v,
                boundary_term: boundary,
                integrand_term: integ,
                dual_estimate: boundary - integ,
                samples: per_interval_count[v],
            }
        })
        .collect();

    let boundary_term: f64 = per_interval.iter().map(|r| r.boundary_term).sum();
    let integrand_term: f64 = per_interval.iter().map(|r| r.integrand_term).sum();
    let dual_estimate = boundary_term - integrand_term;
    if !dual_estimate.is_finite() {
        return Err(WlfError::numeric("non-finite dual estimate"));
    }
    Ok(DualReport {
        boundary_term,
        integrand_term,
        dual_estimate,
        per_interval,
    })
}

/// Pieces of one minibatch dual evaluation reused for logging.
pub(crate) struct ThetaStep {
    pub grad: Vec<f64>,
    pub boundary: f64,
    pub integrand: f64,
}

/// Exact ∂/∂θ of the minibatch dual
///   [mean s(1,·) over x1 − mean s(0,·) over x0] − mean integrand(t, x_t),
/// assembled as one cotangent-weighted aggregate over the stacked batch.
pub(crate) fn theta_gradient(
    problem: &ProblemSpec,
    field: &FieldParams,
    batch: &PathBatch,
    x_t: &Array2<f64>,
    x0: &Array2<f64>,
    x1: &Array2<f64>,
) -> Result<ThetaStep> {
    let n = batch.len();
    let nb = x0.nrows();
    if x1.nrows() != nb || n == 0 || nb == 0 {
        return Err(WlfError::contract("theta_gradient batch shapes disagree"));
    }
    let d = field.spec.input_dim;
    let coeffs = problem.integrand_coeffs(&batch.t);

    // field evaluations at the refined interior points, for the nonlinear
    // cotangent weights and the logged integrand value
    let evals = eval_batch(field, &batch.t, x_t.view(), Some(&batch.k), needs_for(problem))?;
    let mut integrand_mb = 0.0;
    for (i, e) in evals.iter().enumerate() {
        let row: Vec<f64> = x_t.row(i).to_vec();
        integrand_mb += integrand(problem, e, &row, batch.t[i])?.integrand / n as f64;
    }

    // boundary values for logging
    let t0 = vec![0.0; nb];
    let t1 = vec![1.0; nb];
    let e0 = eval_batch(field, &t0, x0.view(), None, Needs::base())?;
    let e1 = eval_batch(field, &t1, x1.view(), None, Needs::base())?;
    let b0 = e0.iter().map(|e| e.value).sum::<f64>() / nb as f64;
    let b1 = e1.iter().map(|e| e.value).sum::<f64>() / nb as f64;

    // stacked batch: [x0 at t=0 | x1 at t=1 | interior]
    let total = 2 * nb + n;
    let mut ts = Vec::with_capacity(total);
    ts.extend_from_slice(&t0);
    ts.extend_from_slice(&t1);
    ts.extend_from_slice(&batch.t);
    let mut xs = Array2::zeros((total, d));
    for i in 0..nb {
        xs.row_mut(i).assign(&x0.row(i));
        xs.row_mut(nb + i).assign(&x1.row(i));
    }
    for i in 0..n {
        xs.row_mut(2 * nb + i).assign(&x_t.row(i));
    }
    let mut ks = Vec::with_capacity(total);
    ks.extend(std::iter::repeat(1.0).take(nb));
    ks.extend(std::iter::repeat(0.0).take(nb));
    ks.extend_from_slice(&batch.k);

    let inv_nb = 1.0 / nb as f64;
    let inv_n = 1.0 / n as f64;
    let mut w_value = vec![0.0; total];
    for i in 0..nb {
        w_value[i] = -inv_nb;
        w_value[nb + i] = inv_nb;
    }
    // d/dθ of the (λ/2)s² term contributes λ·s per sample
    if coeffs.value_sq != 0.0 {
        for (i, e) in evals.iter().enumerate() {
            w_value[2 * nb + i] = -inv_n * 2.0 * coeffs.value_sq * e.value;
        }
    }
    let mut w_dt = vec![0.0; total];
    for i in 0..n {
        w_dt[2 * nb + i] = -inv_n * coeffs.dt;
    }
    // d/dθ of ½‖∇s‖² contributes ⟨∇s, d∇s/dθ⟩
    let mut w_gx = Array2::zeros((total, d));
    for (i, e) in evals.iter().enumerate() {
        for j in 0..d {
            w_gx[(2 * nb + i, j)] = -inv_n * 2.0 * coeffs.grad_sq * e.grad_x[j];
        }
    }
    let w_lap = coeffs.laplacian.as_ref().map(|lc| {
        let mut w = vec![0.0; total];
        for (i, &c) in lc.iter().enumerate() {
            w[2 * nb + i] = -inv_n * c;
        }
        w
    });

    let weights = CotangentWeights {
        value: Some(w_value),
        grad_x: Some(w_gx),
        dt: Some(w_dt),
        laplacian: w_lap,
    };
    let grad = grad_params(field, &ts, xs.view(), Some(&ks), &weights)?;
    Ok(ThetaStep {
        grad,
        boundary: b1 - b0,
        integrand: integrand_mb,
    })
}

fn sample_batch(
    dataset: &MarginalDataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> PathBatch {
    match cfg.time_sampling {
        TimeSampling::Uniform => sample_path_batch(dataset, cfg.batch_size, rng),
        TimeSampling::Stratified => {
            let n = cfg.batch_size;
            let t: Vec<f64> = (0..n)
                .map(|i| (i as f64 + rng.gen_range(0.0..1.0)) / n as f64)
                .collect();
            batch_from_times(dataset, t, rng)
        }
    }
}

fn train_loop(
    problem: &ProblemSpec,
    dataset: &MarginalDataset,
    mut field: FieldParams,
    mut path: PathParams,
    cfg: &TrainConfig,
    update_eta: bool,
    refine: bool,
) -> Result<TrainResult> {
    problem.validate()?;
    cfg.validate()?;
    if field.spec.input_dim != dataset.dim || path.spec.dim != dataset.dim {
        return Err(WlfError::config(format!(
            "dimension mismatch: dataset d={}, field d={}, path d={}",
            dataset.dim, field.spec.input_dim, path.spec.dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam_theta = Adam::new(field.theta.len(), cfg.adam);
    let mut adam_eta = Adam::new(path.eta.len(), cfg.adam);
    let mut history = TrainHistory::default();
    let start = Instant::now();
    let times = dataset.times.clone();
    let nb = cfg.batch_size;
    let last_marginal = dataset.num_marginals() - 1;
    let avg_from = cfg.iterations.saturating_sub(cfg.average_last);
    let mut theta_sum = vec![0.0; field.theta.len()];
    let mut eta_sum = vec![0.0; path.eta.len()];
    let mut avg_count = 0usize;

    for it in 0..cfg.iterations {
        let batch = sample_batch(dataset, cfg, &mut rng);
        let x = interpolate(&path, &times, &batch)?;

        // η gradient on the unrefined points (Algorithm 1 ordering)
        let g_eta = if update_eta {
            path_gradient(&path, &field, problem, &times, &batch)?
        } else {
            vec![0.0; path.eta.len()]
        };

        let x_ref = if refine && cfg.refine_steps > 0 {
            wasserstein_refine(
                &field,
                problem,
                &times,
                &batch,
                &x,
                cfg.refine_steps,
                cfg.refine_alpha,
            )?
        } else {
            x
        };

        let x0 = dataset.draw(0, nb, &mut rng);
        let x1 = dataset.draw(last_marginal, nb, &mut rng);
        let step = theta_gradient(problem, &field, &batch, &x_ref, &x0, &x1)?;
        let dual_mb = step.boundary - step.integrand;
        if !dual_mb.is_finite() || dual_mb.abs() > cfg.divergence_bound {
            return Err(WlfError::numeric(format!(
                "training diverged at iteration {it}: dual estimate {dual_mb}"
            )));
        }
        if !step.grad.iter().all(|v| v.is_finite()) || !g_eta.iter().all(|v| v.is_finite()) {
            return Err(WlfError::numeric(format!(
                "non-finite gradient at iteration {it}"
            )));
        }

        let progress = it as f64 / cfg.iterations.max(1) as f64;
        let ramp = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        let scale = cfg.lr_final_factor + (1.0 - cfg.lr_final_factor) * ramp;
        adam_theta.ascend(&mut field.theta, &step.grad, scale * cfg.lr_theta);
        if update_eta && (it + 1) % cfg.theta_steps_per_eta == 0 {
            // ascend the integrand term = descend the dual
            adam_eta.ascend(&mut path.eta, &g_eta, scale * cfg.lr_eta);
        }

        if cfg.average_last > 0 && it >= avg_from {
            for (s, v) in theta_sum.iter_mut().zip(&field.theta) {
                *s += v;
            }
            for (s, v) in eta_sum.iter_mut().zip(&path.eta) {
                *s += v;
            }
            avg_count += 1;
        }

        if it % cfg.eval_every == 0 || it + 1 == cfg.iterations {
            history.rows.push(HistoryRow {
                iter: it,
                dual_estimate: dual_mb,
                boundary_term: step.boundary,
                integrand_term: step.integrand,
                grad_norm_theta: norm(&step.grad),
                grad_norm_eta: norm(&g_eta),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    if avg_count > 0 {
        let inv = 1.0 / avg_count as f64;
        for (v, s) in field.theta.iter_mut().zip(&theta_sum) {
            *v = s * inv;
        }
        for (v, s) in path.eta.iter_mut().zip(&eta_sum) {
            *v = s * inv;
        }
    }

    Ok(TrainResult {
        field,
        path,
        history,
    })
}

/// Run the full saddle-point loop from fresh Glorot initializations.
pub fn train(
    problem: &ProblemSpec,
    dataset: &MarginalDataset,
    field_spec: &FieldSpec,
    path_spec: &PathSpec,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    let field = init_params(field_spec, cfg.seed)?;
    let path = init_path_params(path_spec, cfg.seed.wrapping_add(1))?;
    train_from(problem, dataset, field, path, cfg)
}

/// Run the loop from given initial parameters.
pub fn train_from(
    problem: &ProblemSpec,
    dataset: &MarginalDataset,
    field: FieldParams,
    path: PathParams,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    train_loop(problem, dataset, field, path, cfg, true, true)
}

/// Action of a fixed curve: freezes η (no path updates, no refinement) and
/// runs only the sup over the field, returning the converged dual estimate
/// averaged over fresh evaluation seeds.
pub fn action_of_path(
    problem: &ProblemSpec,
    dataset: &MarginalDataset,
    path: &PathParams,
    field_spec: &FieldSpec,
    cfg: &TrainConfig,
) -> Result<(f64, TrainResult)> {
    let field = init_params(field_spec, cfg.seed)?;
    let result = train_loop(
        problem,
        dataset,
        field,
        path.clone(),
        cfg,
        false,
        false,
    )?;
    let evals = 8;
    let mut acc = 0.0;
    for s in 0..evals {
        let rep = estimate_dual(
            problem,
            &result.field,
            &result.path,
            dataset,
            cfg.batch_size.max(256),
            cfg.seed.wrapping_add(1000 + s),
        )?;
        acc += rep.dual_estimate;
    }
    Ok((acc / evals as f64, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::linear_field_params;
    use crate::pathmodel::PathSpec;
    use ndarray::array;

    fn point_mass_dataset(a: &[f64], n: usize) -> MarginalDataset {
        let d = a.len();
        let s0 = Array2::zeros((n, d));
        let s1 = Array2::from_shape_fn((n, d), |(_, j)| a[j]);
        MarginalDataset::new(vec![0.0, 1.0], vec![s0, s1], "points").unwrap()
    }

    fn zero_path(d: usize) -> PathParams {
        let spec = PathSpec::new(d, vec![4]);
        PathParams::new(spec.clone(), vec![0.0; spec.param_count()]).unwrap()
    }

    #[test]
    fn dual_zero_for_identical_marginals_and_constant_field() {
        let s = array![[0.3, -0.2], [1.0, 0.5], [0.0, 0.0]];
        let ds = MarginalDataset::new(vec![0.0, 1.0], vec![s.clone(), s], "same").unwrap();
        let field = linear_field_params(&[0.0, 0.0], 0.0);
        let rep = estimate_dual(&ProblemSpec::w2(), &field, &zero_path(2), &ds, 64, 0).unwrap();
        assert!(rep.boundary_term.abs() < 1e-14);
        assert!(rep.integrand_term.abs() < 1e-14);
        assert!(rep.dual_estimate.abs() < 1e-14);
    }

    #[test]
    fn dual_closed_form_for_linear_field_on_point_masses() {
        let a = [2.0, -1.0];
        let ds = point_mass_dataset(&a, 32);
        let path = zero_path(2);
        // s = ⟨w, x⟩: dual = ⟨w,a⟩ − ½‖w‖², maximized at w=a giving ½‖a‖²
        let w = [1.5, 0.5];
        let field = linear_field_params(&w, 0.0);
        let rep = estimate_dual(&ProblemSpec::w2(), &field, &path, &ds, 128, 1).unwrap();
        let expect = (w[0] * a[0] + w[1] * a[1]) - 0.5 * (w[0] * w[0] + w[1] * w[1]);
        assert!((rep.dual_estimate - expect).abs() < 1e-12, "{}", rep.dual_estimate);

        let field = linear_field_params(&a, 0.0);
        let rep = estimate_dual(&ProblemSpec::w2(), &field, &path, &ds, 128, 1).unwrap();
        let half_a2 = 0.5 * (a[0] * a[0] + a[1] * a[1]);
        assert!((rep.dual_estimate - half_a2).abs() < 1e-12);
    }

    #[test]
    fn estimate_dual_is_bitwise_repeatable() {
        let ds = point_mass_dataset(&[1.0, 1.0], 16);
        let field = init_params(&FieldSpec::new(2, vec![8]), 3).unwrap();
        let path = init_path_params(&PathSpec::new(2, vec![8]), 4).unwrap();
        let a = estimate_dual(&ProblemSpec::wfr(0.5), &field, &path, &ds, 64, 9).unwrap();
        let b = estimate_dual(&ProblemSpec::wfr(0.5), &field, &path, &ds, 64, 9).unwrap();
        assert_eq!(a.dual_estimate.to_bits(), b.dual_estimate.to_bits());
        assert_eq!(a.boundary_term.to_bits(), b.boundary_term.to_bits());
    }

    #[test]
    fn per_interval_breakdown_telescopes_exactly() {
        let s0 = Array2::from_shape_fn((24, 2), |(i, j)| 0.1 * i as f64 + j as f64);
        let s1 = s0.clone() + 1.5;
        let s2 = s0.clone() + 4.0;
        let ds = MarginalDataset::new(vec![0.0, 0.4, 1.0], vec![s0, s1, s2], "tri").unwrap();
        let field = init_params(&FieldSpec::new(2, vec![10, 10]), 5).unwrap();
        let path = init_path_params(&PathSpec::new(2, vec![10]), 6).unwrap();
        let rep = estimate_dual(&ProblemSpec::w2(), &field, &path, &ds, 256, 12).unwrap();
        let sum_b: f64 = rep.per_interval.iter().map(|r| r.boundary_term).sum();
        let sum_i: f64 = rep.per_interval.iter().map(|r| r.integrand_term).sum();
        let sum_d: f64 = rep.per_interval.iter().map(|r| r.dual_estimate).sum();
        assert!((sum_b - rep.boundary_term).abs() < 1e-12);
        assert!((sum_i - rep.integrand_term).abs() < 1e-12);
        assert!((sum_d - rep.dual_estimate).abs() < 1e-12);
        let total: usize = rep.per_interval.iter().map(|r| r.samples).sum();
        assert_eq!(total, 256);
    }

    #[test]
    fn zero_iterations_returns_initial_params() {
        let ds = point_mass_dataset(&[1.0], 8);
        let fspec = FieldSpec::new(1, vec![4]);
        let pspec = PathSpec::new(1, vec![4]);
        let cfg = TrainConfig {
            iterations: 0,
            ..Default::default()
        };
        let out = train(&ProblemSpec::w2(), &ds, &fspec, &pspec, &cfg).unwrap();
        assert!(out.history.rows.is_empty());
        let init = init_params(&fspec, cfg.seed).unwrap();
        assert_eq!(out.field.theta, init.theta);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let ds = point_mass_dataset(&[1.0, 0.0], 16);
        let fspec = FieldSpec::new(2, vec![6]);
        let pspec = PathSpec::new(2, vec![6]);
        let cfg = TrainConfig {
            iterations: 10,
            batch_size: 16,
            eval_every: 2,
            ..Default::default()
        };
        let a = train(&ProblemSpec::w2(), &ds, &fspec, &pspec, &cfg).unwrap();
        let b = train(&ProblemSpec::w2(), &ds, &fspec, &pspec, &cfg).unwrap();
        assert_eq!(a.field.theta, b.field.theta);
        assert_eq!(a.path.eta, b.path.eta);
        assert_eq!(a.history.rows.len(), b.history.rows.len());
        for (ra, rb) in a.history.rows.iter().zip(&b.history.rows) {
            // everything except wall time is bitwise reproducible
            assert_eq!(ra.iter, rb.iter);
            assert_eq!(ra.dual_estimate.to_bits(), rb.dual_estimate.to_bits());
            assert_eq!(ra.boundary_term.to_bits(), rb.boundary_term.to_bits());
            assert_eq!(ra.integrand_term.to_bits(), rb.integrand_term.to_bits());
            assert_eq!(ra.grad_norm_theta.to_bits(), rb.grad_norm_theta.to_bits());
            assert_eq!(ra.grad_norm_eta.to_bits(), rb.grad_norm_eta.to_bits());
        }
    }

    #[test]
    fn identical_marginals_train_to_near_zero_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = Array2::from_shape_fn((64, 2), |_| rng.gen_range(-1.0..1.0));
        let ds = MarginalDataset::new(vec![0.0, 1.0], vec![s.clone(), s], "same").unwrap();
        let cfg = TrainConfig {
            iterations: 2000,
            batch_size: 128,
            ..Default::default()
        };
        let out = train(
            &ProblemSpec::w2(),
            &ds,
            &FieldSpec::new(2, vec![16, 16]),
            &PathSpec::new(2, vec![16]),
            &cfg,
        )
        .unwrap();
        let rep = estimate_dual(&ProblemSpec::w2(), &out.field, &out.path, &ds, 2048, 99).unwrap();
        assert!(
            rep.dual_estimate.abs() < 0.02,
            "dual {} not near zero",
            rep.dual_estimate
        );
    }

    #[test]
    fn sign_discipline_over_seeds() {
        // a small gradient step on θ raises the dual, and one on η raises the
        // integrand term, for the large majority of random initializations
        let ds = point_mass_dataset(&[2.0, 0.0], 32);
        let problem = ProblemSpec::w2();
        let mut theta_up = 0;
        let mut eta_up = 0;
        let trials = 20;
        for seed in 0..trials {
            let field = init_params(&FieldSpec::new(2, vec![8]), seed).unwrap();
            let path = init_path_params(&PathSpec::new(2, vec![8]), seed + 500).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = sample_path_batch(&ds, 256, &mut rng);
            let x = interpolate(&path, &ds.times, &batch).unwrap();
            let x0 = ds.draw(0, 256, &mut rng);
            let x1 = ds.draw(1, 256, &mut rng);

            let eps = 1e-4;
            let step = theta_gradient(&problem, &field, &batch, &x, &x0, &x1).unwrap();
            let gn = norm(&step.grad).max(1e-12);
            let mut field2 = field.clone();
            for (p, g) in field2.theta.iter_mut().zip(&step.grad) {
                *p += eps * g / gn;
            }
            let after = theta_gradient(&problem, &field2, &batch, &x, &x0, &x1).unwrap();
            if after.boundary - after.integrand > step.boundary - step.integrand {
                theta_up += 1;
            }

            let g_eta = path_gradient(&path, &field, &problem, &ds.times, &batch).unwrap();
            let gn = norm(&g_eta).max(1e-12);
            let mut path2 = path.clone();
            for (p, g) in path2.eta.iter_mut().zip(&g_eta) {
                *p += eps * g / gn;
            }
            let x2 = interpolate(&path2, &ds.times, &batch).unwrap();
            let before = theta_gradient(&problem, &field, &batch, &x, &x0, &x1).unwrap();
            let evals_after = theta_gradient(&problem, &field, &batch, &x2, &x0, &x1).unwrap();
            if evals_after.integrand > before.integrand {
                eta_up += 1;
            }
        }
        assert!(theta_up >= 17, "theta ascent raised dual only {theta_up}/{trials}");
        assert!(eta_up >= 17, "eta ascent raised integrand only {eta_up}/{trials}");
    }

    #[test]
    fn theta_gradient_matches_finite_differences() {
        let ds = point_mass_dataset(&[1.0, -0.5], 8);
        let problem = ProblemSpec::wfr(0.8);
        let field = init_params(&FieldSpec::new(2, vec![6]), 7).unwrap();
        let path = init_path_params(&PathSpec::new(2, vec![6]), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let batch = sample_path_batch(&ds, 5, &mut rng);
        let x = interpolate(&path, &ds.times, &batch).unwrap();
        let x0 = ds.draw(0, 4, &mut rng);
        let x1 = ds.draw(1, 4, &mut rng);
        let step = theta_gradient(&problem, &field, &batch, &x, &x0, &x1).unwrap();

        let dual_of = |f: &FieldParams| -> f64 {
            let s = theta_gradient(&problem, f, &batch, &x, &x0, &x1).unwrap();
            s.boundary - s.integrand
        };
        let h = 1e-5;
        for idx in (0..field.theta.len()).step_by(6) {
            let mut fp = field.clone();
            fp.theta[idx] += h;
            let mut fm = field.clone();
            fm.theta[idx] -= h;
            let fd = (dual_of(&fp) - dual_of(&fm)) / (2.0 * h);
            let rel = (step.grad[idx] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "theta grad[{idx}]: {} vs fd {fd}", step.grad[idx]);
        }
    }

    #[test]
    fn divergence_guard_fires() {
        let ds = point_mass_dataset(&[1.0], 8);
        let cfg = TrainConfig {
            iterations: 50,
            batch_size: 8,
            divergence_bound: 1e-9,
            ..Default::default()
        };
        let err = train(
            &ProblemSpec::w2(),
            &ds,
            &FieldSpec::new(1, vec![4]),
            &PathSpec::new(1, vec![4]),
            &cfg,
        );
        assert!(matches!(err, Err(WlfError::Numeric(_))));
    }

    #[test]
    fn action_of_linear_displacement_path() {
        let a = [2.0, 0.0];
        let ds = point_mass_dataset(&a, 64);
        let cfg = TrainConfig {
            iterations: 1500,
            batch_size: 64,
            lr_theta: 3e-3,
            ..Default::default()
        };
        let (action, _) = action_of_path(
            &ProblemSpec::w2(),
            &ds,
            &zero_path(2),
            &FieldSpec::new(2, vec![16, 16]),
            &cfg,
        )
        .unwrap();
        let expect = 0.5 * (a[0] * a[0] + a[1] * a[1]);
        assert!(
            (action - expect).abs() < 0.15 * expect,
            "action {action} vs {expect}"
        );
    }

    #[test]
    fn action_of_constant_path_is_zero() {
        // single repeated point: every interpolant draw is constant in time
        let s = array![[0.7, -0.3]];
        let ds = MarginalDataset::new(vec![0.0, 1.0], vec![s.clone(), s], "const").unwrap();
        let cfg = TrainConfig {
            iterations: 800,
            batch_size: 48,
            ..Default::default()
        };
        let (action, _) = action_of_path(
            &ProblemSpec::w2(),
            &ds,
            &zero_path(2),
            &FieldSpec::new(2, vec![16]),
            &cfg,
        )
        .unwrap();
        assert!(action.abs() < 0.05, "action {action}");
    }
}

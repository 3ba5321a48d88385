//! Finite-difference verification of every analytic derivative the solver
//! relies on: field derivatives in (x, t), parameter gradients of weighted
//! field aggregates, and the path-model gradient of the dual integrand.
//! Used by the `check-grads` subcommand and the acceptance suite.

use crate::error::{Result, WlfError};
use crate::field::{
    eval_batch, grad_params, Activation, CotangentWeights, FieldParams, FieldSpec, Needs,
    TimeEmbedding,
};
use crate::hamiltonians::{integrand, potential_density, PotentialSpec, ProblemSpec};
use crate::pathmodel::{interpolate, path_gradient, PathBatch, PathParams, PathSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one finite-difference suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < self.tolerance
    }
}

const TOL: f64 = 1e-4;

fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6)
}

fn random_field_spec(rng: &mut ChaCha8Rng, dim: usize) -> FieldSpec {
    let mut spec = FieldSpec::new(dim, vec![rng.gen_range(3..8), rng.gen_range(3..8)]);
    spec.activation = if rng.gen_bool(0.5) {
        Activation::Tanh
    } else {
        Activation::Softplus
    };
    spec.use_indicator = rng.gen_bool(0.5);
    if rng.gen_bool(0.3) {
        spec.time_embedding = TimeEmbedding::Sinusoidal {
            frequencies: rng.gen_range(1..3),
        };
    }
    spec
}

fn random_params(spec: &FieldSpec, rng: &mut ChaCha8Rng) -> Result<FieldParams> {
    crate::field::init_params(spec, rng.gen())
}

/// Analytic ∇_x s, ∂s/∂t, and Δs against central differences of the value.
pub fn check_field_derivatives(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let h = 1e-4;
    for _ in 0..trials {
        let dim = rng.gen_range(1..4);
        let spec = random_field_spec(&mut rng, dim);
        let params = random_params(&spec, &mut rng)?;
        let t = rng.gen_range(0.05..0.95);
        let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let eval_at = |xv: &[f64], tv: f64| -> Result<f64> {
            let x = Array2::from_shape_vec((1, dim), xv.to_vec()).unwrap();
            Ok(eval_batch(&params, &[tv], x.view(), None, Needs::base())?[0].value)
        };
        let x_arr = Array2::from_shape_vec((1, dim), x0.clone()).unwrap();
        let e = eval_batch(&params, &[t], x_arr.view(), None, Needs::with_laplacian())?
            .pop()
            .unwrap();

        for j in 0..dim {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (eval_at(&xp, t)? - eval_at(&xm, t)?) / (2.0 * h);
            worst = worst.max(rel_err(e.grad_x[j], fd));
        }
        let fd_t = (eval_at(&x0, t + h)? - eval_at(&x0, t - h)?) / (2.0 * h);
        worst = worst.max(rel_err(e.dt, fd_t));

        // Laplacian via second central differences of the value
        let mut lap_fd = 0.0;
        let base = eval_at(&x0, t)?;
        for j in 0..dim {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[j] += h;
            xm[j] -= h;
            lap_fd += (eval_at(&xp, t)? - 2.0 * base + eval_at(&xm, t)?) / (h * h);
        }
        worst = worst.max(rel_err(e.laplacian.unwrap(), lap_fd));
    }
    Ok(SuiteReport {
        name: "field (x, t) derivatives".into(),
        trials,
        max_rel_err: worst,
        tolerance: TOL,
    })
}

/// grad_params against a central directional derivative of the weighted
/// aggregate, one random direction per trial.
pub fn check_field_param_gradients(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let h = 1e-5;
    for _ in 0..trials {
        let dim = rng.gen_range(1..4);
        let spec = random_field_spec(&mut rng, dim);
        let params = random_params(&spec, &mut rng)?;
        let n = rng.gen_range(2..6);
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let x = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.5..1.5));
        let weights = CotangentWeights {
            value: Some((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            grad_x: Some(Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0))),
            dt: Some((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            laplacian: Some((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        };
        let objective = |theta: &[f64]| -> Result<f64> {
            let p = FieldParams {
                spec: spec.clone(),
                theta: theta.to_vec(),
            };
            let evals = eval_batch(&p, &t, x.view(), None, Needs::with_laplacian())?;
            let mut acc = 0.0;
            for (i, e) in evals.iter().enumerate() {
                acc += weights.value.as_ref().unwrap()[i] * e.value;
                acc += weights.dt.as_ref().unwrap()[i] * e.dt;
                acc += weights.laplacian.as_ref().unwrap()[i] * e.laplacian.unwrap();
                for j in 0..dim {
                    acc += weights.grad_x.as_ref().unwrap()[(i, j)] * e.grad_x[j];
                }
            }
            Ok(acc)
        };
        let grad = grad_params(&params, &t, x.view(), None, &weights)?;
        let dir: Vec<f64> = (0..grad.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ad: f64 = grad.iter().zip(&dir).map(|(g, u)| g * u).sum();
        let shift = |s: f64| -> Vec<f64> {
            params
                .theta
                .iter()
                .zip(&dir)
                .map(|(p, u)| p + s * u)
                .collect()
        };
        let fd = (objective(&shift(h))? - objective(&shift(-h))?) / (2.0 * h);
        worst = worst.max(rel_err(ad, fd));
    }
    Ok(SuiteReport {
        name: "field parameter gradients".into(),
        trials,
        max_rel_err: worst,
        tolerance: TOL,
    })
}

fn random_problem(rng: &mut ChaCha8Rng, dim: usize) -> ProblemSpec {
    let mut problem = match rng.gen_range(0..3) {
        0 => ProblemSpec::w2(),
        1 => ProblemSpec::wfr(rng.gen_range(0.3..2.0)),
        _ => ProblemSpec::schrodinger_bridge(rng.gen_range(0.3..1.2)),
    };
    if rng.gen_bool(0.4) {
        let q = vec![vec![0.0; dim]; dim];
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        problem = problem.with_potential(
            PotentialSpec::AnalyticQuadratic { q, b },
            rng.gen_range(0.2..1.5),
        );
    }
    problem
}

/// path_gradient against a central directional derivative of the batch-mean
/// dual integrand evaluated at x_t(η), one random direction per trial.
pub fn check_path_gradients(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let h = 1e-5;
    for _ in 0..trials {
        let dim = rng.gen_range(1..3);
        let field_spec = random_field_spec(&mut rng, dim);
        let field = random_params(&field_spec, &mut rng)?;
        let path_spec = PathSpec::new(dim, vec![rng.gen_range(3..6)]);
        let path = crate::pathmodel::init_path_params(&path_spec, rng.gen())?;
        let problem = random_problem(&mut rng, dim);

        let times = [0.0, rng.gen_range(0.3..0.7), 1.0];
        let n = rng.gen_range(2..5);
        let batch = PathBatch {
            t: (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            interval: (0..n)
                .map(|i| usize::from(rng.gen_bool(0.5) && i % 2 == 0))
                .collect(),
            x_left: Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0)),
            x_right: Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0)),
            k: (0..n).map(|i| f64::from(i % 2 == 0)).collect(),
        };
        // keep samples strictly inside their interval
        let mut batch = batch;
        for i in 0..n {
            let (lo, hi) = (times[batch.interval[i]], times[batch.interval[i] + 1]);
            batch.t[i] = lo + (hi - lo) * rng.gen_range(0.1..0.9);
            batch.k[i] = f64::from(batch.t[i] < 0.5);
        }

        let needs = if problem.is_entropic() {
            Needs::with_laplacian()
        } else {
            Needs::base()
        };
        let objective = |eta: &[f64]| -> Result<f64> {
            let p = PathParams {
                spec: path_spec.clone(),
                eta: eta.to_vec(),
            };
            let x_t = interpolate(&p, &times, &batch)?;
            let evals = eval_batch(&field, &batch.t, x_t.view(), Some(&batch.k), needs)?;
            let mut acc = 0.0;
            for (i, e) in evals.iter().enumerate() {
                let row: Vec<f64> = x_t.row(i).to_vec();
                acc += integrand(&problem, e, &row, batch.t[i])?.integrand;
            }
            Ok(acc / n as f64)
        };

        let grad = path_gradient(&path, &field, &problem, &times, &batch)?;
        let dir: Vec<f64> = (0..grad.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ad: f64 = grad.iter().zip(&dir).map(|(g, u)| g * u).sum();
        let shift = |s: f64| -> Vec<f64> {
            path.eta.iter().zip(&dir).map(|(p, u)| p + s * u).collect()
        };
        let fd = (objective(&shift(h))? - objective(&shift(-h))?) / (2.0 * h);
        worst = worst.max(rel_err(ad, fd));
    }
    Ok(SuiteReport {
        name: "path-model gradients".into(),
        trials,
        max_rel_err: worst,
        tolerance: TOL,
    })
}

/// Potential values against their analytic spatial gradients.
pub fn check_potential_gradients(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let h = 1e-5;
    for _ in 0..trials {
        let dim = rng.gen_range(1..4);
        let problem = {
            let mut q = vec![vec![0.0; dim]; dim];
            for i in 0..dim {
                for j in 0..=i {
                    let v = rng.gen_range(-0.8..0.8);
                    q[i][j] = v;
                    q[j][i] = v;
                }
            }
            let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ProblemSpec::w2().with_potential(
                PotentialSpec::AnalyticQuadratic { q, b },
                rng.gen_range(0.2..2.0),
            )
        };
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let t = rng.gen_range(0.0..1.0);
        let grad = crate::hamiltonians::potential_gradient(&problem, &x, t)?;
        for j in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (potential_density(&problem, &xp, t)?
                - potential_density(&problem, &xm, t)?)
                / (2.0 * h);
            worst = worst.max(rel_err(grad[j], fd));
        }
    }
    Ok(SuiteReport {
        name: "potential gradients".into(),
        trials,
        max_rel_err: worst,
        tolerance: TOL,
    })
}

/// Runs every suite with `trials` trials each.
pub fn run_all(trials: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    if trials == 0 {
        return Err(WlfError::config("check-grads needs at least one trial"));
    }
    Ok(vec![
        check_field_derivatives(trials, seed)?,
        check_field_param_gradients(trials, seed.wrapping_add(1))?,
        check_path_gradients(trials, seed.wrapping_add(2))?,
        check_potential_gradients(trials, seed.wrapping_add(3))?,
    ])
}

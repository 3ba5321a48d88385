//! Problem definitions: dual-linear Hamiltonian densities K* + U for each
//! supported Lagrangian, plus the state-space dynamics they induce.

use crate::error::{Result, WlfError};
use crate::field::{FieldEval, IntegrandCoeffs};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Kinetic energy choice. `Wfr` is the Wasserstein–Fisher–Rao metric with
/// growth weight λ; λ = 0 is accepted only as the W2-reduction test path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kinetic {
    W2,
    Wfr { lambda: f64 },
}

/// Diffusion schedule σ(t) for the entropic (Schrödinger bridge) mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SigmaSchedule {
    Constant { sigma: f64 },
    Affine { start: f64, end: f64 },
    PiecewiseConstant { times: Vec<f64>, values: Vec<f64> },
}

impl SigmaSchedule {
    pub fn constant(sigma: f64) -> Self {
        SigmaSchedule::Constant { sigma }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match self {
            SigmaSchedule::Constant { sigma } => *sigma,
            SigmaSchedule::Affine { start, end } => start + (end - start) * t,
            SigmaSchedule::PiecewiseConstant { times, values } => {
                let mut idx = 0;
                for (i, &bt) in times.iter().enumerate() {
                    if t >= bt {
                        idx = i;
                    }
                }
                values[idx]
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SigmaSchedule::Constant { sigma } => *sigma >= 0.0,
            SigmaSchedule::Affine { start, end } => *start >= 0.0 && *end >= 0.0,
            SigmaSchedule::PiecewiseConstant { times, values } => {
                !times.is_empty()
                    && times.len() == values.len()
                    && values.iter().all(|v| *v >= 0.0)
                    && times.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(WlfError::config("invalid diffusion schedule"))
        }
    }
}

type PotentialFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type PotentialGradFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;

struct RegisteredPotential {
    value: PotentialFn,
    grad: PotentialGradFn,
}

static POTENTIAL_REGISTRY: Lazy<Mutex<HashMap<String, RegisteredPotential>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Register a named callback potential (value and spatial gradient) so
/// configs can refer to it by name.
pub fn register_potential(
    name: &str,
    value: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    grad: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
) {
    POTENTIAL_REGISTRY.lock().unwrap().insert(
        name.to_string(),
        RegisteredPotential {
            value: Arc::new(value),
            grad: Arc::new(grad),
        },
    );
}

/// Spatial potential V_t(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PotentialSpec {
    /// V_t(x) = −⟨x, a_i⟩ on interval [times[i], times[i+1]]; `times` has one
    /// more entry than `accels` and must cover every training time.
    LinearPerInterval {
        times: Vec<f64>,
        accels: Vec<Vec<f64>>,
    },
    /// V(x) = ½ xᵀQx + ⟨b, x⟩
    AnalyticQuadratic { q: Vec<Vec<f64>>, b: Vec<f64> },
    /// Callback registered at runtime via [`register_potential`].
    Callback { name: String },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::LinearPerInterval { times, accels } => {
                if times.len() != accels.len() + 1 {
                    return Err(WlfError::config(
                        "linear_per_interval: times must have accels.len() + 1 entries",
                    ));
                }
                if !times.windows(2).all(|w| w[0] < w[1]) {
                    return Err(WlfError::config(
                        "linear_per_interval: times must be strictly increasing",
                    ));
                }
                let d = accels.first().map(Vec::len).unwrap_or(0);
                if d == 0 || accels.iter().any(|a| a.len() != d) {
                    return Err(WlfError::config("linear_per_interval: ragged accelerations"));
                }
                Ok(())
            }
            PotentialSpec::AnalyticQuadratic { q, b } => {
                let d = b.len();
                if q.len() != d || q.iter().any(|row| row.len() != d) {
                    return Err(WlfError::config("analytic_quadratic: Q must be d×d"));
                }
                Ok(())
            }
            PotentialSpec::Callback { name } => {
                if POTENTIAL_REGISTRY.lock().unwrap().contains_key(name) {
                    Ok(())
                } else {
                    Err(WlfError::config(format!(
                        "callback potential '{name}' is not registered"
                    )))
                }
            }
        }
    }

    /// V_t(x).
    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        match self {
            PotentialSpec::LinearPerInterval { times, accels } => {
                let i = self.interval_index(times, t)?;
                Ok(-dot(x, &accels[i]))
            }
            PotentialSpec::AnalyticQuadratic { q, b } => {
                let mut v = dot(x, b);
                for (i, row) in q.iter().enumerate() {
                    v += 0.5 * x[i] * dot(row, x);
                }
                Ok(v)
            }
            PotentialSpec::Callback { name } => {
                let reg = POTENTIAL_REGISTRY.lock().unwrap();
                let p = reg.get(name).ok_or_else(|| {
                    WlfError::config(format!("callback potential '{name}' is not registered"))
                })?;
                Ok((p.value)(x, t))
            }
        }
    }

    /// ∇_x V_t(x).
    pub fn grad(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        match self {
            PotentialSpec::LinearPerInterval { times, accels } => {
                let i = self.interval_index(times, t)?;
                Ok(accels[i].iter().map(|a| -a).collect())
            }
            PotentialSpec::AnalyticQuadratic { q, b } => {
                // ∇(½xᵀQx + bᵀx) = ½(Q + Qᵀ)x + b
                let d = b.len();
                Ok((0..d)
                    .map(|i| {
                        let mut g = b[i];
                        for j in 0..d {
                            g += 0.5 * (q[i][j] + q[j][i]) * x[j];
                        }
                        g
                    })
                    .collect())
            }
            PotentialSpec::Callback { name } => {
                let reg = POTENTIAL_REGISTRY.lock().unwrap();
                let p = reg.get(name).ok_or_else(|| {
                    WlfError::config(format!("callback potential '{name}' is not registered"))
                })?;
                Ok((p.grad)(x, t))
            }
        }
    }

    fn interval_index(&self, times: &[f64], t: f64) -> Result<usize> {
        let eps = 1e-12;
        if t < times[0] - eps || t > times[times.len() - 1] + eps {
            return Err(WlfError::config(format!(
                "time {t} outside potential coverage [{}, {}]",
                times[0],
                times[times.len() - 1]
            )));
        }
        let mut idx = 0;
        for i in 0..times.len() - 1 {
            if t >= times[i] - eps {
                idx = i;
            }
        }
        Ok(idx)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted spatial potential term λ_V · V_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTerm {
    pub spec: PotentialSpec,
    /// λ_V, the weight carried by the dual integrand (default 1).
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// The chosen Lagrangian: kinetic kind, optional entropic diffusion, optional
/// spatial potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kinetic: Kinetic,
    /// Present iff the problem is the Schrödinger bridge (Hopf–Cole mode);
    /// the learned field is then Φ_t rather than s_t.
    #[serde(default)]
    pub entropic: Option<SigmaSchedule>,
    #[serde(default)]
    pub potential: Option<PotentialTerm>,
    #[serde(default)]
    pub notes: String,
}

impl ProblemSpec {
    pub fn w2() -> Self {
        ProblemSpec {
            kinetic: Kinetic::W2,
            entropic: None,
            potential: None,
            notes: String::new(),
        }
    }

    pub fn wfr(lambda: f64) -> Self {
        ProblemSpec {
            kinetic: Kinetic::Wfr { lambda },
            entropic: None,
            potential: None,
            notes: String::new(),
        }
    }

    pub fn schrodinger_bridge(sigma: f64) -> Self {
        ProblemSpec {
            kinetic: Kinetic::W2,
            entropic: Some(SigmaSchedule::constant(sigma)),
            potential: None,
            notes: String::new(),
        }
    }

    pub fn with_potential(mut self, spec: PotentialSpec, weight: f64) -> Self {
        self.potential = Some(PotentialTerm { spec, weight });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Kinetic::Wfr { lambda } = self.kinetic {
            if lambda <= 0.0 {
                return Err(WlfError::config("WFR growth weight λ must be positive"));
            }
        }
        if let Some(sched) = &self.entropic {
            sched.validate()?;
            if !matches!(self.kinetic, Kinetic::W2) {
                return Err(WlfError::config(
                    "entropic (Schrödinger bridge) mode requires the W2 kinetic energy",
                ));
            }
        }
        if let Some(p) = &self.potential {
            p.spec.validate()?;
        }
        Ok(())
    }

    pub fn is_entropic(&self) -> bool {
        self.entropic.is_some()
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.entropic.as_ref().map_or(0.0, |s| s.sigma(t))
    }

    /// Coefficients of the dual integrand (without the potential, which is a
    /// function of x rather than of the field evaluation).
    pub fn integrand_coeffs(&self, t: &[f64]) -> IntegrandCoeffs {
        let value_sq = match self.kinetic {
            Kinetic::W2 => 0.0,
            Kinetic::Wfr { lambda } => lambda / 2.0,
        };
        let laplacian = self.entropic.as_ref().map(|sched| {
            t.iter()
                .map(|&ti| {
                    let s = sched.sigma(ti);
                    s * s / 2.0
                })
                .collect()
        });
        IntegrandCoeffs {
            dt: 1.0,
            grad_sq: 0.5,
            value_sq,
            laplacian,
        }
    }
}

/// Components of the dual integrand at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianTerms {
    /// Dual kinetic density K*.
    pub kstar: f64,
    /// Dual potential density λ_V·V_t(x).
    pub potential: f64,
    /// ∂s/∂t + K* + U.
    pub integrand: f64,
}

/// Dual kinetic density K*(x, s-eval, t):
///   W2      → ½‖∇s‖²
///   WFR(λ)  → ½‖∇s‖² + (λ/2)s²
///   entropic (field read as Φ) → ½‖∇Φ‖² + (σ(t)²/2)·ΔΦ
pub fn kstar_density(problem: &ProblemSpec, fe: &FieldEval, t: f64) -> Result<f64> {
    let grad_sq: f64 = fe.grad_x.iter().map(|v| v * v).sum();
    let mut k = 0.5 * grad_sq;
    if let Kinetic::Wfr { lambda } = problem.kinetic {
        k += 0.5 * lambda * fe.value * fe.value;
    }
    if let Some(sched) = &problem.entropic {
        let lap = fe.laplacian.ok_or_else(|| {
            WlfError::contract("entropic mode requires the Laplacian in FieldEval")
        })?;
        let s = sched.sigma(t);
        k += 0.5 * s * s * lap;
    }
    Ok(k)
}

/// Dual potential density λ_V·V_t(x); zero when no potential is configured.
pub fn potential_density(problem: &ProblemSpec, x: &[f64], t: f64) -> Result<f64> {
    match &problem.potential {
        None => Ok(0.0),
        Some(p) => Ok(p.weight * p.spec.value(x, t)?),
    }
}

/// ∂s/∂t + K* + U at one sample.
pub fn integrand(problem: &ProblemSpec, fe: &FieldEval, x: &[f64], t: f64) -> Result<HamiltonianTerms> {
    let kstar = kstar_density(problem, fe, t)?;
    let potential = potential_density(problem, x, t)?;
    Ok(HamiltonianTerms {
        kstar,
        potential,
        integrand: fe.dt + kstar + potential,
    })
}

/// λ_V·∇V_t(x), the potential contribution to spatial integrand gradients.
pub fn potential_gradient(problem: &ProblemSpec, x: &[f64], t: f64) -> Result<Vec<f64>> {
    match &problem.potential {
        None => Ok(vec![0.0; x.len()]),
        Some(p) => Ok(p.spec.grad(x, t)?.into_iter().map(|g| g * p.weight).collect()),
    }
}

/// State-space dynamics induced by the field: (velocity, growth rate,
/// diffusion volatility). In entropic mode ∇Φ is the forward-SDE drift; the
/// probability-flow ODE drift would need ∇log ρ_t, which is unavailable by
/// design, so entropic simulation is SDE-only.
pub fn dynamics(problem: &ProblemSpec, fe: &FieldEval, t: f64) -> (Vec<f64>, f64, f64) {
    let growth = match problem.kinetic {
        Kinetic::W2 => 0.0,
        Kinetic::Wfr { .. } => fe.value,
    };
    (fe.grad_x.clone(), growth, problem.sigma(t))
}

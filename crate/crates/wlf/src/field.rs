//! Differentiable scalar field s(t, x, k; θ).
//!
//! A small fully-connected network over (time features, state, optional
//! indicator) with exact spatial gradient, time partial, Laplacian, and
//! parameter gradients of weighted aggregates of those quantities. All
//! derivatives are computed by the tape in `crate::tape`, never by finite
//! differences; the finite-difference checks live in tests.

use crate::error::{Result, WlfError};
use crate::tape::{NodeId, Tape};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Smooth activations only: the Schrödinger-bridge dual needs ΔΦ and path
/// refinement needs ∇_x of it, so rectified-linear units are not offered.
/// `Identity` and `Square` exist so tests can hand-build exact linear and
/// quadratic fields through the same code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
    Identity,
    Square,
}

impl Activation {
    pub(crate) fn apply(&self, tape: &mut Tape, z: NodeId) -> NodeId {
        match self {
            Activation::Tanh => tape.tanh(z),
            Activation::Softplus => tape.softplus(z),
            Activation::Identity => z,
            Activation::Square => tape.square(z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeEmbedding {
    #[default]
    Raw,
    /// Raw scalar plus sin/cos pairs at integer multiples of 2π.
    Sinusoidal { frequencies: usize },
}

impl TimeEmbedding {
    pub fn width(&self) -> usize {
        match self {
            TimeEmbedding::Raw => 1,
            TimeEmbedding::Sinusoidal { frequencies } => 1 + 2 * frequencies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    /// State dimension d.
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub use_indicator: bool,
    #[serde(default)]
    pub time_embedding: TimeEmbedding,
}

impl FieldSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Self {
        FieldSpec {
            input_dim,
            hidden_widths,
            activation: Activation::Tanh,
            use_indicator: false,
            time_embedding: TimeEmbedding::Raw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(WlfError::config("field input_dim must be positive"));
        }
        if self.hidden_widths.is_empty() {
            return Err(WlfError::config("field hidden_widths must be non-empty"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(WlfError::config("field hidden widths must be positive"));
        }
        if let TimeEmbedding::Sinusoidal { frequencies } = self.time_embedding {
            if frequencies == 0 {
                return Err(WlfError::config("sinusoidal embedding needs >= 1 frequency"));
            }
        }
        Ok(())
    }

    /// Total input width = d + time-feature width + (1 if use_indicator).
    pub fn input_width(&self) -> usize {
        self.input_dim + self.time_embedding.width() + usize::from(self.use_indicator)
    }

    pub(crate) fn layer_shapes(&self) -> Vec<(usize, usize)> {
        layer_shapes(self.input_width(), &self.hidden_widths, 1)
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

pub(crate) fn layer_shapes(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        shapes.push((prev, h));
        prev = h;
    }
    shapes.push((prev, output));
    shapes
}

/// Flat parameter vector θ plus the spec that gives it shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub spec: FieldSpec,
    pub theta: Vec<f64>,
}

impl FieldParams {
    pub fn new(spec: FieldSpec, theta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(WlfError::contract(format!(
                "parameter vector length {} does not match spec count {}",
                theta.len(),
                spec.param_count()
            )));
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(WlfError::Numeric("non-finite field parameters".into()));
        }
        Ok(FieldParams { spec, theta })
    }

    pub(crate) fn layers(&self) -> Vec<(Array2<f64>, Array2<f64>)> {
        unflatten(&self.theta, &self.spec.layer_shapes())
    }
}

pub(crate) fn unflatten(flat: &[f64], shapes: &[(usize, usize)]) -> Vec<(Array2<f64>, Array2<f64>)> {
    let mut out = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for &(i, o) in shapes {
        let w = Array2::from_shape_vec((i, o), flat[off..off + i * o].to_vec()).unwrap();
        off += i * o;
        let b = Array2::from_shape_vec((1, o), flat[off..off + o].to_vec()).unwrap();
        off += o;
        out.push((w, b));
    }
    debug_assert_eq!(off, flat.len());
    out
}

/// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases,
/// deterministic per seed.
pub(crate) fn init_flat(shapes: &[(usize, usize)], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = Vec::new();
    for &(i, o) in shapes {
        let bound = (6.0 / (i + o) as f64).sqrt();
        for _ in 0..i * o {
            flat.push(rng.gen_range(-bound..bound));
        }
        flat.extend(std::iter::repeat(0.0).take(o));
    }
    flat
}

pub fn init_params(spec: &FieldSpec, seed: u64) -> Result<FieldParams> {
    spec.validate()?;
    let theta = init_flat(&spec.layer_shapes(), seed);
    Ok(FieldParams {
        spec: spec.clone(),
        theta,
    })
}

/// Derivative-request flags for [`eval_batch`]. Value, spatial gradient, and
/// time partial are always produced; the Laplacian only on request.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub laplacian: bool,
}

impl Needs {
    pub fn base() -> Self {
        Needs { laplacian: false }
    }
    pub fn with_laplacian() -> Self {
        Needs { laplacian: true }
    }
}

#[derive(Debug, Clone)]
pub struct FieldEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub dt: f64,
    pub laplacian: Option<f64>,
}

/// Time features built in-graph from the raw time leaf so that d/dt chains
/// exactly through the embedding.
pub(crate) fn time_features(tape: &mut Tape, t: NodeId, embedding: TimeEmbedding) -> NodeId {
    match embedding {
        TimeEmbedding::Raw => t,
        TimeEmbedding::Sinusoidal { frequencies } => {
            let freqs = Array2::from_shape_fn((1, frequencies), |(_, j)| {
                2.0 * std::f64::consts::PI * (j + 1) as f64
            });
            let f = tape.constant(freqs);
            let phase = tape.matmul(t, f);
            let s = tape.sin(phase);
            let c = tape.cos(phase);
            tape.concat_cols(&[t, s, c])
        }
    }
}

/// Forward pass through the layers given already-created parameter nodes.
pub(crate) fn mlp_forward(
    tape: &mut Tape,
    param_nodes: &[(NodeId, NodeId)],
    activation: Activation,
    input: NodeId,
) -> NodeId {
    let mut a = input;
    let last = param_nodes.len() - 1;
    for (l, &(w, b)) in param_nodes.iter().enumerate() {
        let z = tape.matmul(a, w);
        let z = tape.add_row(z, b);
        a = if l == last { z } else { activation.apply(tape, z) };
    }
    a
}

/// The full field graph. Returns the output node and the leaf ids so callers
/// can differentiate with respect to inputs and/or parameters.
pub(crate) struct FieldGraph {
    pub t: NodeId,
    pub x: NodeId,
    pub y: NodeId,
    pub param_nodes: Vec<(NodeId, NodeId)>,
}

pub(crate) fn build_field_graph(
    tape: &mut Tape,
    params: &FieldParams,
    t: &[f64],
    x: ArrayView2<f64>,
    k: Option<&[f64]>,
) -> Result<FieldGraph> {
    let n = t.len();
    let d = params.spec.input_dim;
    if x.nrows() != n || x.ncols() != d {
        return Err(WlfError::contract(format!(
            "eval batch shape mismatch: t has {} entries, x is {}×{}, spec d={}",
            n,
            x.nrows(),
            x.ncols(),
            d
        )));
    }
    if !t.iter().all(|v| v.is_finite()) || !x.iter().all(|v| v.is_finite()) {
        return Err(WlfError::numeric("non-finite field inputs"));
    }
    let t_node = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| t[i]));
    let x_node = tape.constant(x.to_owned());
    let feats = time_features(tape, t_node, params.spec.time_embedding);
    let mut parts = vec![feats, x_node];
    if params.spec.use_indicator {
        let kv: Vec<f64> = match k {
            Some(k) => {
                if k.len() != n {
                    return Err(WlfError::contract("indicator length mismatch"));
                }
                k.to_vec()
            }
            None => t.iter().map(|&ti| if ti < 0.5 { 1.0 } else { 0.0 }).collect(),
        };
        let k_node = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| kv[i]));
        parts.push(k_node);
    }
    let input = tape.concat_cols(&parts);
    let param_nodes: Vec<(NodeId, NodeId)> = params
        .layers()
        .into_iter()
        .map(|(w, b)| (tape.constant(w), tape.constant(b)))
        .collect();
    let y = mlp_forward(tape, &param_nodes, params.spec.activation, input);
    Ok(FieldGraph {
        t: t_node,
        x: x_node,
        y,
        param_nodes,
    })
}

/// Per-sample Laplacian column (n×1) via one extra backward pass per state
/// dimension over the gradient nodes.
pub(crate) fn laplacian_node(tape: &mut Tape, gx: NodeId, x: NodeId) -> NodeId {
    let d = tape.shape(x).1;
    let mut lap: Option<NodeId> = None;
    for j in 0..d {
        let gj = tape.slice_cols(gx, j, 1);
        let gj_sum = tape.sum_all(gj);
        let hess_col = tape.grad(gj_sum, &[x])[0];
        let hjj = tape.slice_cols(hess_col, j, 1);
        lap = Some(match lap {
            Some(acc) => tape.add(acc, hjj),
            None => hjj,
        });
    }
    lap.expect("state dimension must be positive")
}

/// Evaluate the field and its exact derivatives on a batch.
pub fn eval_batch(
    params: &FieldParams,
    t: &[f64],
    x: ArrayView2<f64>,
    k: Option<&[f64]>,
    needs: Needs,
) -> Result<Vec<FieldEval>> {
    let mut tape = Tape::new();
    let g = build_field_graph(&mut tape, params, t, x, k)?;
    let y_sum = tape.sum_all(g.y);
    let grads = tape.grad(y_sum, &[g.x, g.t]);
    let (gx, gt) = (grads[0], grads[1]);
    let lap = if needs.laplacian {
        Some(laplacian_node(&mut tape, gx, g.x))
    } else {
        None
    };

    let n = t.len();
    let d = params.spec.input_dim;
    let yv = tape.value(g.y).to_owned();
    let gxv = tape.value(gx).to_owned();
    let gtv = tape.value(gt).to_owned();
    let lapv = lap.map(|l| tape.value(l).to_owned());
    Ok((0..n)
        .map(|i| FieldEval {
            value: yv[(i, 0)],
            grad_x: (0..d).map(|j| gxv[(i, j)]).collect(),
            dt: gtv[(i, 0)],
            laplacian: lapv.as_ref().map(|l| l[(i, 0)]),
        })
        .collect())
}

/// Per-sample coefficients on field-evaluation components; the aggregate is
///   Σ_i [ w_value·s + ⟨w_grad_x, ∇s⟩ + w_dt·∂s/∂t + w_laplacian·Δs ]_i .
#[derive(Debug, Clone, Default)]
pub struct CotangentWeights {
    pub value: Option<Vec<f64>>,
    pub grad_x: Option<Array2<f64>>,
    pub dt: Option<Vec<f64>>,
    pub laplacian: Option<Vec<f64>>,
}

fn column_const(tape: &mut Tape, v: &[f64]) -> NodeId {
    tape.constant(Array2::from_shape_fn((v.len(), 1), |(i, _)| v[i]))
}

/// Exact ∂/∂θ of the weighted aggregate described by `weights`.
pub fn grad_params(
    params: &FieldParams,
    t: &[f64],
    x: ArrayView2<f64>,
    k: Option<&[f64]>,
    weights: &CotangentWeights,
) -> Result<Vec<f64>> {
    let n = t.len();
    let d = params.spec.input_dim;
    for (name, len) in [
        ("value", weights.value.as_ref().map(Vec::len)),
        ("dt", weights.dt.as_ref().map(Vec::len)),
        ("laplacian", weights.laplacian.as_ref().map(Vec::len)),
    ] {
        if let Some(l) = len {
            if l != n {
                return Err(WlfError::contract(format!(
                    "cotangent weight '{name}' has length {l}, batch is {n}"
                )));
            }
        }
    }
    if let Some(gw) = &weights.grad_x {
        if gw.dim() != (n, d) {
            return Err(WlfError::contract("cotangent grad_x weights shape mismatch"));
        }
    }
    let all_finite = weights.value.iter().flatten().all(|v| v.is_finite())
        && weights.dt.iter().flatten().all(|v| v.is_finite())
        && weights.laplacian.iter().flatten().all(|v| v.is_finite())
        && weights.grad_x.iter().flat_map(|a| a.iter()).all(|v| v.is_finite());
    if !all_finite {
        return Err(WlfError::numeric("non-finite cotangent weights"));
    }

    let mut tape = Tape::new();
    let g = build_field_graph(&mut tape, params, t, x, k)?;

    let mut aggregate: Option<NodeId> = None;
    let push_term = |tape: &mut Tape, term: NodeId, acc: &mut Option<NodeId>| {
        *acc = Some(match *acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    };

    if let Some(wv) = &weights.value {
        let w = column_const(&mut tape, wv);
        let prod = tape.mul(w, g.y);
        let term = tape.sum_all(prod);
        push_term(&mut tape, term, &mut aggregate);
    }

    let needs_grads =
        weights.grad_x.is_some() || weights.dt.is_some() || weights.laplacian.is_some();
    if needs_grads {
        let y_sum = tape.sum_all(g.y);
        let grads = tape.grad(y_sum, &[g.x, g.t]);
        let (gx, gt) = (grads[0], grads[1]);
        if let Some(gw) = &weights.grad_x {
            let w = tape.constant(gw.clone());
            let prod = tape.mul(w, gx);
            let term = tape.sum_all(prod);
            push_term(&mut tape, term, &mut aggregate);
        }
        if let Some(wd) = &weights.dt {
            let w = column_const(&mut tape, wd);
            let prod = tape.mul(w, gt);
            let term = tape.sum_all(prod);
            push_term(&mut tape, term, &mut aggregate);
        }
        if let Some(wl) = &weights.laplacian {
            let lap = laplacian_node(&mut tape, gx, g.x);
            let w = column_const(&mut tape, wl);
            let prod = tape.mul(w, lap);
            let term = tape.sum_all(prod);
            push_term(&mut tape, term, &mut aggregate);
        }
    }

    let shapes = params.spec.layer_shapes();
    let total = params.theta.len();
    let agg = match aggregate {
        Some(a) => a,
        None => return Ok(vec![0.0; total]),
    };
    let wrt: Vec<NodeId> = g
        .param_nodes
        .iter()
        .flat_map(|&(w, b)| [w, b])
        .collect();
    let grads = tape.grad(agg, &wrt);
    let mut flat = Vec::with_capacity(total);
    for (li, _) in shapes.iter().enumerate() {
        let wv = tape.value(grads[2 * li]);
        flat.extend(wv.iter().copied());
        let bv = tape.value(grads[2 * li + 1]);
        flat.extend(bv.iter().copied());
    }
    Ok(flat)
}

/// Per-sample coefficients defining the scalar
///   c_dt·∂s/∂t + c_grad_sq·‖∇s‖² + c_value_sq·s² + c_lap(t)·Δs ,
/// the shape shared by every dual integrand in this library (potentials are
/// added by the caller).
#[derive(Debug, Clone, Default)]
pub struct IntegrandCoeffs {
    pub dt: f64,
    pub grad_sq: f64,
    pub value_sq: f64,
    /// Per-sample Laplacian coefficient (σ(t)²/2 in the entropic mode).
    pub laplacian: Option<Vec<f64>>,
}

/// Builds the per-sample integrand column (n×1) in-graph, so callers can
/// differentiate it with respect to x, t, θ, or anything upstream of `x`.
pub(crate) fn integrand_column(
    tape: &mut Tape,
    y: NodeId,
    x: NodeId,
    t: NodeId,
    coeffs: &IntegrandCoeffs,
) -> NodeId {
    let y_sum = tape.sum_all(y);
    let grads = tape.grad(y_sum, &[x, t]);
    let (gx, gt) = (grads[0], grads[1]);
    let mut acc = tape.scale(gt, coeffs.dt);
    if coeffs.grad_sq != 0.0 {
        let sq = tape.mul(gx, gx);
        let norms = tape.row_sum(sq);
        let term = tape.scale(norms, coeffs.grad_sq);
        acc = tape.add(acc, term);
    }
    if coeffs.value_sq != 0.0 {
        let sq = tape.mul(y, y);
        let term = tape.scale(sq, coeffs.value_sq);
        acc = tape.add(acc, term);
    }
    if let Some(lc) = &coeffs.laplacian {
        let lap = laplacian_node(tape, gx, x);
        let w = tape.constant(Array2::from_shape_fn((lc.len(), 1), |(i, _)| lc[i]));
        let term = tape.mul(w, lap);
        acc = tape.add(acc, term);
    }
    acc
}

/// Exact ∂/∂x of the summed integrand; returns the per-sample n×d gradient.
/// The Laplacian term requires third derivatives of the network, which the
/// tape provides exactly.
pub fn grad_inputs(
    params: &FieldParams,
    t: &[f64],
    x: ArrayView2<f64>,
    k: Option<&[f64]>,
    coeffs: &IntegrandCoeffs,
) -> Result<Array2<f64>> {
    if let Some(lc) = &coeffs.laplacian {
        if lc.len() != t.len() {
            return Err(WlfError::contract("laplacian coefficient length mismatch"));
        }
    }
    let mut tape = Tape::new();
    let g = build_field_graph(&mut tape, params, t, x, k)?;
    let col = integrand_column(&mut tape, g.y, g.x, g.t, coeffs);
    let total = tape.sum_all(col);
    let gx = tape.grad(total, &[g.x])[0];
    Ok(tape.value(gx).to_owned())
}

// ---------------------------------------------------------------------------
// Field abstraction shared by the MLP and analytic closed-form fields.
// ---------------------------------------------------------------------------

/// Anything the simulator and metrics can treat as a scalar field s(t, x).
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn uses_indicator(&self) -> bool {
        false
    }
    fn eval(
        &self,
        t: &[f64],
        x: ArrayView2<f64>,
        k: Option<&[f64]>,
        needs: Needs,
    ) -> Result<Vec<FieldEval>>;
}

impl ScalarField for FieldParams {
    fn dim(&self) -> usize {
        self.spec.input_dim
    }
    fn uses_indicator(&self) -> bool {
        self.spec.use_indicator
    }
    fn eval(
        &self,
        t: &[f64],
        x: ArrayView2<f64>,
        k: Option<&[f64]>,
        needs: Needs,
    ) -> Result<Vec<FieldEval>> {
        eval_batch(self, t, x, k, needs)
    }
}

/// s(t, x) = ⟨w, x⟩ + b·t
#[derive(Debug, Clone)]
pub struct LinearField {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ScalarField for LinearField {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn eval(
        &self,
        t: &[f64],
        x: ArrayView2<f64>,
        _k: Option<&[f64]>,
        needs: Needs,
    ) -> Result<Vec<FieldEval>> {
        Ok(t.iter()
            .zip(x.rows())
            .map(|(&ti, row)| FieldEval {
                value: row.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b * ti,
                grad_x: self.w.clone(),
                dt: self.b,
                laplacian: needs.laplacian.then_some(0.0),
            })
            .collect())
    }
}

/// s(t, x) = ½‖x‖²
#[derive(Debug, Clone)]
pub struct QuadraticField {
    pub dim: usize,
}

impl ScalarField for QuadraticField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(
        &self,
        t: &[f64],
        x: ArrayView2<f64>,
        _k: Option<&[f64]>,
        needs: Needs,
    ) -> Result<Vec<FieldEval>> {
        Ok(t.iter()
            .zip(x.rows())
            .map(|(_, row)| FieldEval {
                value: 0.5 * row.iter().map(|v| v * v).sum::<f64>(),
                grad_x: row.to_vec(),
                dt: 0.0,
                laplacian: needs.laplacian.then_some(self.dim as f64),
            })
            .collect())
    }
}

/// The exact OT potential between N(0, I) and N(a, I):
/// s_t(x) = ⟨a, x⟩ − t‖a‖²/2, which satisfies ∂s/∂t + ½‖∇s‖² = 0.
#[derive(Debug, Clone)]
pub struct OtAnalyticField {
    pub a: Vec<f64>,
}

impl ScalarField for OtAnalyticField {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn eval(
        &self,
        t: &[f64],
        x: ArrayView2<f64>,
        _k: Option<&[f64]>,
        needs: Needs,
    ) -> Result<Vec<FieldEval>> {
        let a2 = self.a.iter().map(|v| v * v).sum::<f64>();
        Ok(t.iter()
            .zip(x.rows())
            .map(|(_, row)| FieldEval {
                value: row.iter().zip(&self.a).map(|(a, b)| a * b).sum::<f64>(),
                grad_x: self.a.clone(),
                dt: -a2 / 2.0,
                laplacian: needs.laplacian.then_some(0.0),
            })
            .collect())
    }
}

/// Build `FieldParams` that exactly realize a linear field ⟨w,x⟩ + b·t using
/// identity activations; used by tests and examples.
pub fn linear_field_params(w: &[f64], b: f64) -> FieldParams {
    let d = w.len();
    let spec = FieldSpec {
        input_dim: d,
        hidden_widths: vec![d + 1],
        activation: Activation::Identity,
        use_indicator: false,
        time_embedding: TimeEmbedding::Raw,
    };
    // layer 1: identity copy of (t, x); layer 2: weights (b, w).
    let mut theta = Vec::new();
    let width = d + 1;
    for i in 0..width {
        for j in 0..width {
            theta.push(if i == j { 1.0 } else { 0.0 });
        }
    }
    theta.extend(std::iter::repeat(0.0).take(width)); // biases
    theta.push(b);
    theta.extend(w.iter().copied());
    theta.push(0.0); // output bias
    FieldParams::new(spec, theta).expect("hand-built linear field")
}

/// Build `FieldParams` that exactly realize ½‖x‖² via a square activation.
pub fn quadratic_field_params(d: usize) -> FieldParams {
    let spec = FieldSpec {
        input_dim: d,
        hidden_widths: vec![d + 1],
        activation: Activation::Square,
        use_indicator: false,
        time_embedding: TimeEmbedding::Raw,
    };
    let width = d + 1;
    let mut theta = Vec::new();
    for i in 0..width {
        for j in 0..width {
            // zero the time row so only x passes through
            theta.push(if i == j && i > 0 { 1.0 } else { 0.0 });
        }
    }
    theta.extend(std::iter::repeat(0.0).take(width));
    theta.push(0.0); // squared-time unit is dead anyway
    theta.extend(std::iter::repeat(0.5).take(d));
    theta.push(0.0);
    FieldParams::new(spec, theta).expect("hand-built quadratic field")
}

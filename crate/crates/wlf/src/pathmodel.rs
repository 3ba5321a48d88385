//! Parameterized interpolating paths between consecutive marginals.
//!
//! A path sample at global time t in interval [t_i, t_{i+1}] is
//!   x_t = cL·x_left + cR·x_right + (1 − cL² − cR²)·net(t, x_left, x_right, k; η)
//! with cL = (t_{i+1} − t)/(t_{i+1} − t_i) and cR = (t − t_i)/(t_{i+1} − t_i),
//! so the endpoints are reproduced exactly whatever the correction net does.

use crate::dataio::MarginalDataset;
use crate::error::{Result, WlfError};
use crate::field::{
    init_flat, integrand_column, layer_shapes, mlp_forward, time_features, unflatten, Activation,
    FieldParams, IntegrandCoeffs, TimeEmbedding,
};
use crate::hamiltonians::{potential_gradient, ProblemSpec};
use crate::tape::{NodeId, Tape};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture of the correction network
/// (time features, x_left, x_right, optional indicator) → R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// State dimension d.
    pub dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub use_indicator: bool,
    #[serde(default)]
    pub time_embedding: TimeEmbedding,
}

impl PathSpec {
    pub fn new(dim: usize, hidden_widths: Vec<usize>) -> Self {
        PathSpec {
            dim,
            hidden_widths,
            activation: Activation::Tanh,
            use_indicator: false,
            time_embedding: TimeEmbedding::Raw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(WlfError::config("path dim must be positive"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(WlfError::config("path hidden widths must be positive"));
        }
        if let TimeEmbedding::Sinusoidal { frequencies } = self.time_embedding {
            if frequencies == 0 {
                return Err(WlfError::config("sinusoidal embedding needs >= 1 frequency"));
            }
        }
        Ok(())
    }

    /// Input width = time-feature width + 2d + (1 if use_indicator).
    pub fn input_width(&self) -> usize {
        self.time_embedding.width() + 2 * self.dim + usize::from(self.use_indicator)
    }

    pub(crate) fn layer_shapes(&self) -> Vec<(usize, usize)> {
        layer_shapes(self.input_width(), &self.hidden_widths, self.dim)
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter vector η plus the spec that gives it shape.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub spec: PathSpec,
    pub eta: Vec<f64>,
}

impl PathParams {
    pub fn new(spec: PathSpec, eta: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if eta.len() != spec.param_count() {
            return Err(WlfError::contract(format!(
                "path parameter length {} does not match spec count {}",
                eta.len(),
                spec.param_count()
            )));
        }
        if !eta.iter().all(|v| v.is_finite()) {
            return Err(WlfError::Numeric("non-finite path parameters".into()));
        }
        Ok(PathParams { spec, eta })
    }

    pub(crate) fn layers(&self) -> Vec<(Array2<f64>, Array2<f64>)> {
        unflatten(&self.eta, &self.spec.layer_shapes())
    }
}

pub fn init_path_params(spec: &PathSpec, seed: u64) -> Result<PathParams> {
    spec.validate()?;
    let eta = init_flat(&spec.layer_shapes(), seed);
    Ok(PathParams {
        spec: spec.clone(),
        eta,
    })
}

/// One training batch of path samples: global times, their interval indices,
/// endpoint draws from the two bracketing marginals, and the t<½ indicator.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub t: Vec<f64>,
    pub interval: Vec<usize>,
    pub x_left: Array2<f64>,
    pub x_right: Array2<f64>,
    pub k: Vec<f64>,
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn check(&self, dim: usize, times: &[f64]) -> Result<()> {
        let n = self.t.len();
        if self.interval.len() != n
            || self.k.len() != n
            || self.x_left.nrows() != n
            || self.x_right.nrows() != n
        {
            return Err(WlfError::contract("path batch field lengths disagree"));
        }
        if self.x_left.ncols() != dim || self.x_right.ncols() != dim {
            return Err(WlfError::contract(format!(
                "path batch dimension {} does not match spec dim {}",
                self.x_left.ncols(),
                dim
            )));
        }
        for (idx, (&ti, &iv)) in self.t.iter().zip(&self.interval).enumerate() {
            if iv + 1 >= times.len() {
                return Err(WlfError::contract(format!(
                    "sample {idx} references interval {iv} but there are only {}",
                    times.len() - 1
                )));
            }
            if !(times[iv]..=times[iv + 1]).contains(&ti) {
                return Err(WlfError::contract(format!(
                    "sample {idx} has t={ti} outside its interval [{}, {}]",
                    times[iv],
                    times[iv + 1]
                )));
            }
        }
        Ok(())
    }
}

/// Bracketing-marginal draws with replacement and the global t<½ indicator
/// for caller-supplied global times. Deterministic given the rng state.
pub fn batch_from_times(dataset: &MarginalDataset, t: Vec<f64>, rng: &mut ChaCha8Rng) -> PathBatch {
    let n = t.len();
    let d = dataset.dim;
    let mut interval = Vec::with_capacity(n);
    let mut k = Vec::with_capacity(n);
    let mut x_left = Array2::zeros((n, d));
    let mut x_right = Array2::zeros((n, d));
    for (i, &ti) in t.iter().enumerate() {
        let iv = dataset.interval_of(ti);
        interval.push(iv);
        k.push(if ti < 0.5 { 1.0 } else { 0.0 });
        let l = dataset.draw(iv, 1, rng);
        let r = dataset.draw(iv + 1, 1, rng);
        x_left.row_mut(i).assign(&l.row(0));
        x_right.row_mut(i).assign(&r.row(0));
    }
    PathBatch {
        t,
        interval,
        x_left,
        x_right,
        k,
    }
}

/// Uniform global times, bracketing-marginal draws with replacement, and the
/// global t<½ indicator. Deterministic given the rng state.
pub fn sample_path_batch(dataset: &MarginalDataset, n: usize, rng: &mut ChaCha8Rng) -> PathBatch {
    let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    batch_from_times(dataset, t, rng)
}

/// Interpolation coefficients (cL, cR, 1 − cL² − cR²) for t inside interval i.
fn interp_coeffs(times: &[f64], interval: usize, t: f64) -> (f64, f64, f64) {
    let t0 = times[interval];
    let t1 = times[interval + 1];
    let span = t1 - t0;
    let cl = (t1 - t) / span;
    let cr = (t - t0) / span;
    (cl, cr, 1.0 - cl * cl - cr * cr)
}

/// Build the correction-net graph on the tape. Returns the n×d output node
/// and the parameter leaf ids.
fn build_net_graph(
    tape: &mut Tape,
    params: &PathParams,
    batch: &PathBatch,
) -> (NodeId, Vec<(NodeId, NodeId)>) {
    let n = batch.len();
    let t_node = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| batch.t[i]));
    let feats = time_features(tape, t_node, params.spec.time_embedding);
    let xl = tape.constant(batch.x_left.clone());
    let xr = tape.constant(batch.x_right.clone());
    let mut parts = vec![feats, xl, xr];
    if params.spec.use_indicator {
        let kn = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| batch.k[i]));
        parts.push(kn);
    }
    let input = tape.concat_cols(&parts);
    let param_nodes: Vec<(NodeId, NodeId)> = params
        .layers()
        .into_iter()
        .map(|(w, b)| (tape.constant(w), tape.constant(b)))
        .collect();
    let y = mlp_forward(tape, &param_nodes, params.spec.activation, input);
    (y, param_nodes)
}

/// Forward pass of the correction net alone.
pub fn net_correction(params: &PathParams, batch: &PathBatch) -> Result<Array2<f64>> {
    if batch.is_empty() {
        return Ok(Array2::zeros((0, params.spec.dim)));
    }
    if !batch.t.iter().all(|v| v.is_finite())
        || !batch.x_left.iter().all(|v| v.is_finite())
        || !batch.x_right.iter().all(|v| v.is_finite())
    {
        return Err(WlfError::numeric("non-finite path batch"));
    }
    let mut tape = Tape::new();
    let (y, _) = build_net_graph(&mut tape, params, batch);
    Ok(tape.value(y).to_owned())
}

/// Evaluate x_t for every sample in the batch. Samples whose time coincides
/// with an interval endpoint reproduce the endpoint draw bitwise.
pub fn interpolate(params: &PathParams, times: &[f64], batch: &PathBatch) -> Result<Array2<f64>> {
    batch.check(params.spec.dim, times)?;
    let n = batch.len();
    let d = params.spec.dim;
    if n == 0 {
        return Ok(Array2::zeros((0, d)));
    }
    let net = net_correction(params, batch)?;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let iv = batch.interval[i];
        let ti = batch.t[i];
        if ti == times[iv] {
            out.row_mut(i).assign(&batch.x_left.row(i));
            continue;
        }
        if ti == times[iv + 1] {
            out.row_mut(i).assign(&batch.x_right.row(i));
            continue;
        }
        let (cl, cr, cn) = interp_coeffs(times, iv, ti);
        for j in 0..d {
            out[(i, j)] = cl * batch.x_left[(i, j)] + cr * batch.x_right[(i, j)] + cn * net[(i, j)];
        }
    }
    if !out.iter().all(|v| v.is_finite()) {
        return Err(WlfError::numeric("non-finite interpolated path sample"));
    }
    Ok(out)
}

/// Ascent steps on the dual integrand in sample space:
///   x ← x + α_i · cL·cR · ∇_x[ ∂s/∂t + K* + U ](t_i, x)
/// with α_i = `alpha` if given, else 0.1·(interval length). The cL·cR factor
/// freezes the endpoints and peaks mid-interval.
pub fn wasserstein_refine(
    field: &FieldParams,
    problem: &ProblemSpec,
    times: &[f64],
    batch: &PathBatch,
    x: &Array2<f64>,
    steps: usize,
    alpha: Option<f64>,
) -> Result<Array2<f64>> {
    let n = batch.len();
    let d = field.spec.input_dim;
    if x.nrows() != n || x.ncols() != d {
        return Err(WlfError::contract("refinement state shape mismatch"));
    }
    if n == 0 || steps == 0 {
        return Ok(x.clone());
    }
    let coeffs = problem.integrand_coeffs(&batch.t);
    let mut cur = x.clone();
    for _ in 0..steps {
        let mut g = crate::field::grad_inputs(field, &batch.t, cur.view(), Some(&batch.k), &coeffs)?;
        for i in 0..n {
            let row: Vec<f64> = cur.row(i).to_vec();
            let pg = potential_gradient(problem, &row, batch.t[i])?;
            for j in 0..d {
                g[(i, j)] += pg[j];
            }
        }
        for i in 0..n {
            let iv = batch.interval[i];
            let (cl, cr, _) = interp_coeffs(times, iv, batch.t[i]);
            let step = alpha.unwrap_or(0.1 * (times[iv + 1] - times[iv])) * cl * cr;
            for j in 0..d {
                cur[(i, j)] += step * g[(i, j)];
            }
        }
        if !cur.iter().all(|v| v.is_finite()) {
            return Err(WlfError::numeric("refinement produced non-finite samples"));
        }
    }
    Ok(cur)
}

/// Exact ∂/∂η of the batch-mean dual integrand evaluated at x_t(η), the
/// ascent direction for the inner maximization over paths. Potential terms
/// enter through a first-order surrogate ⟨∇U(x_t), x_t(η)⟩ with the gradient
/// held constant, which reproduces the exact reparameterization gradient.
pub fn path_gradient(
    params: &PathParams,
    field: &FieldParams,
    problem: &ProblemSpec,
    times: &[f64],
    batch: &PathBatch,
) -> Result<Vec<f64>> {
    batch.check(params.spec.dim, times)?;
    if field.spec.input_dim != params.spec.dim {
        return Err(WlfError::contract("field and path dimensions disagree"));
    }
    let n = batch.len();
    let d = params.spec.dim;
    if n == 0 {
        return Ok(vec![0.0; params.spec.param_count()]);
    }

    let mut tape = Tape::new();
    let (net, eta_nodes) = build_net_graph(&mut tape, params, batch);

    // x_t = cL∘x_left + cR∘x_right + cN∘net, built in-graph so gradients flow
    // through the correction term only.
    let mut cl = Array2::zeros((n, 1));
    let mut cr = Array2::zeros((n, 1));
    let mut cn = Array2::zeros((n, 1));
    for i in 0..n {
        let (a, b, c) = interp_coeffs(times, batch.interval[i], batch.t[i]);
        cl[(i, 0)] = a;
        cr[(i, 0)] = b;
        cn[(i, 0)] = c;
    }
    let cl_b = {
        let c = tape.constant(cl);
        tape.broadcast_col(c, d)
    };
    let cr_b = {
        let c = tape.constant(cr);
        tape.broadcast_col(c, d)
    };
    let cn_b = {
        let c = tape.constant(cn);
        tape.broadcast_col(c, d)
    };
    let xl = tape.constant(batch.x_left.clone());
    let xr = tape.constant(batch.x_right.clone());
    let base_l = tape.mul(cl_b, xl);
    let base_r = tape.mul(cr_b, xr);
    let base = tape.add(base_l, base_r);
    let corr = tape.mul(cn_b, net);
    let x_t = tape.add(base, corr);

    // field subgraph on top of x_t
    let t_node = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| batch.t[i]));
    let feats = time_features(&mut tape, t_node, field.spec.time_embedding);
    let mut parts = vec![feats, x_t];
    if field.spec.use_indicator {
        let kn = tape.constant(Array2::from_shape_fn((n, 1), |(i, _)| batch.k[i]));
        parts.push(kn);
    }
    let field_input = tape.concat_cols(&parts);
    let theta_nodes: Vec<(NodeId, NodeId)> = field
        .layers()
        .into_iter()
        .map(|(w, b)| (tape.constant(w), tape.constant(b)))
        .collect();
    let s = mlp_forward(&mut tape, &theta_nodes, field.spec.activation, field_input);

    let coeffs: IntegrandCoeffs = problem.integrand_coeffs(&batch.t);
    let col = integrand_column(&mut tape, s, x_t, t_node, &coeffs);
    let mut objective = tape.mean_all(col);

    if problem.potential.is_some() {
        let x_now = tape.value(x_t).to_owned();
        let mut gv = Array2::zeros((n, d));
        for i in 0..n {
            let row: Vec<f64> = x_now.row(i).to_vec();
            let pg = potential_gradient(problem, &row, batch.t[i])?;
            for j in 0..d {
                gv[(i, j)] = pg[j];
            }
        }
        let gv_node = tape.constant(gv);
        let prod = tape.mul(gv_node, x_t);
        let surrogate = tape.mean_all(prod);
        let scaled = tape.scale(surrogate, d as f64); // mean_all divides by n·d
        objective = tape.add(objective, scaled);
    }

    let wrt: Vec<NodeId> = eta_nodes.iter().flat_map(|&(w, b)| [w, b]).collect();
    let grads = tape.grad(objective, &wrt);
    let mut flat = Vec::with_capacity(params.eta.len());
    for g in grads {
        flat.extend(tape.value(g).iter().copied());
    }
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(WlfError::numeric("non-finite path gradient"));
    }
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{eval_batch, init_params, linear_field_params, FieldSpec, Needs};
    use crate::hamiltonians::{integrand, PotentialSpec};
    use ndarray::array;
    use rand::SeedableRng;

    fn two_point_dataset() -> MarginalDataset {
        let s0 = array![[0.0, 0.0], [0.5, -0.5], [-1.0, 2.0]];
        let s1 = array![[2.0, 0.0], [2.5, -0.5], [1.0, 2.0]];
        MarginalDataset::new(vec![0.0, 1.0], vec![s0, s1], "pair").unwrap()
    }

    fn manual_batch(t: Vec<f64>, interval: Vec<usize>, xl: Array2<f64>, xr: Array2<f64>) -> PathBatch {
        let k = t.iter().map(|&ti| if ti < 0.5 { 1.0 } else { 0.0 }).collect();
        PathBatch {
            t,
            interval,
            x_left: xl,
            x_right: xr,
            k,
        }
    }

    #[test]
    fn param_count_matches_shapes() {
        let spec = PathSpec::new(2, vec![16]);
        // input width 1 + 2·2 = 5
        assert_eq!(spec.param_count(), 5 * 16 + 16 + 16 * 2 + 2);
        let mut spec2 = spec.clone();
        spec2.use_indicator = true;
        assert_eq!(spec2.param_count(), 6 * 16 + 16 + 16 * 2 + 2);
    }

    #[test]
    fn endpoints_are_bitwise_exact() {
        let spec = PathSpec::new(2, vec![8, 8]);
        let p = init_path_params(&spec, 7).unwrap();
        let xl = array![[0.3, -1.7], [2.25, 0.0]];
        let xr = array![[-0.9, 4.5], [1.0, -0.0]];
        let times = [0.0, 0.4, 1.0];
        let batch = manual_batch(vec![0.0, 0.4], vec![0, 0], xl.clone(), xr.clone());
        let x = interpolate(&p, &times, &batch).unwrap();
        for j in 0..2 {
            assert_eq!(x[(0, j)].to_bits(), xl[(0, j)].to_bits());
            assert_eq!(x[(1, j)].to_bits(), xr[(1, j)].to_bits());
        }
    }

    #[test]
    fn zero_net_gives_displacement_interpolation() {
        let spec = PathSpec::new(2, vec![8]);
        let p = PathParams::new(spec.clone(), vec![0.0; spec.param_count()]).unwrap();
        let xl = array![[0.0, 0.0]];
        let xr = array![[2.0, 0.0]];
        let times = [0.0, 1.0];
        let batch = manual_batch(vec![0.5], vec![0], xl, xr);
        let x = interpolate(&p, &times, &batch).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(x[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn correction_coefficient_profile() {
        let times = [0.0, 1.0];
        let (_, _, c0) = interp_coeffs(&times, 0, 0.0);
        let (_, _, c1) = interp_coeffs(&times, 0, 1.0);
        let (cl, cr, cm) = interp_coeffs(&times, 0, 0.5);
        assert_eq!(c0, 0.0);
        assert_eq!(c1, 0.0);
        assert!((cl - 0.5).abs() < 1e-15 && (cr - 0.5).abs() < 1e-15);
        assert!((cm - 0.5).abs() < 1e-15);
        // nonuniform interval
        let times = [0.0, 0.25, 1.0];
        let (cl, cr, cn) = interp_coeffs(&times, 1, 0.625);
        assert!((cl - 0.5).abs() < 1e-15 && (cr - 0.5).abs() < 1e-15);
        assert!((cn - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_well_formed() {
        let ds = two_point_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b1 = sample_path_batch(&ds, 64, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b2 = sample_path_batch(&ds, 64, &mut rng);
        assert_eq!(b1.t, b2.t);
        assert_eq!(b1.x_left, b2.x_left);
        for (i, &ti) in b1.t.iter().enumerate() {
            assert!((0.0..1.0).contains(&ti));
            assert_eq!(b1.interval[i], 0);
            assert_eq!(b1.k[i], if ti < 0.5 { 1.0 } else { 0.0 });
        }
        // empty batch is fine
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b0 = sample_path_batch(&ds, 0, &mut rng);
        let spec = PathSpec::new(2, vec![4]);
        let p = init_path_params(&spec, 0).unwrap();
        let x = interpolate(&p, &ds.times, &b0).unwrap();
        assert_eq!(x.nrows(), 0);
    }

    #[test]
    fn multi_interval_sampling_routes_correctly() {
        let s = array![[0.0], [1.0]];
        let ds = MarginalDataset::new(
            vec![0.0, 0.3, 1.0],
            vec![s.clone(), s.clone() + 5.0, s + 10.0],
            "three",
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = sample_path_batch(&ds, 256, &mut rng);
        let mut seen = [false, false];
        for (i, &ti) in b.t.iter().enumerate() {
            let expect = if ti < 0.3 { 0 } else { 1 };
            assert_eq!(b.interval[i], expect);
            seen[expect] = true;
            // endpoint draws come from the right snapshots
            let lo = b.x_left[(i, 0)];
            let hi = b.x_right[(i, 0)];
            if expect == 0 {
                assert!(lo <= 1.0 && (5.0..=6.0).contains(&hi));
            } else {
                assert!((5.0..=6.0).contains(&lo) && hi >= 10.0);
            }
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn refine_is_noop_for_constant_integrand() {
        // linear field: integrand = b + ½‖w‖² is constant in x, so the
        // refinement gradient vanishes.
        let field = linear_field_params(&[2.0, -1.0], 0.7);
        let problem = ProblemSpec::w2();
        let times = [0.0, 1.0];
        let batch = manual_batch(
            vec![0.25, 0.75],
            vec![0, 0],
            array![[0.1, 0.2], [0.3, 0.4]],
            array![[1.1, 1.2], [1.3, 1.4]],
        );
        let x = array![[0.5, 0.5], [1.0, -1.0]];
        let out = wasserstein_refine(&field, &problem, &times, &batch, &x, 3, None).unwrap();
        for (a, b) in out.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn refine_moves_along_integrand_gradient() {
        // quadratic field: ∇_x[½‖∇s‖²] = x, so one step moves x to
        // (1 + α·cL·cR)·x with α = 0.1 by default on a unit interval.
        let field = crate::field::quadratic_field_params(2);
        let problem = ProblemSpec::w2();
        let times = [0.0, 1.0];
        let batch = manual_batch(
            vec![0.5],
            vec![0],
            array![[0.0, 0.0]],
            array![[0.0, 0.0]],
        );
        let x = array![[2.0, -4.0]];
        let out = wasserstein_refine(&field, &problem, &times, &batch, &x, 1, None).unwrap();
        let factor = 1.0 + 0.1 * 0.25;
        assert!((out[(0, 0)] - 2.0 * factor).abs() < 1e-12);
        assert!((out[(0, 1)] + 4.0 * factor).abs() < 1e-12);
        // endpoints never move
        let batch_end = manual_batch(vec![0.0], vec![0], array![[1.0, 1.0]], array![[0.0, 0.0]]);
        let xe = array![[3.0, 3.0]];
        let oute =
            wasserstein_refine(&field, &problem, &times, &batch_end, &xe, 5, Some(0.5)).unwrap();
        assert_eq!(oute, xe);
    }

    fn mean_integrand(
        p: &PathParams,
        field: &FieldParams,
        problem: &ProblemSpec,
        times: &[f64],
        batch: &PathBatch,
    ) -> f64 {
        let x = interpolate(p, times, batch).unwrap();
        let needs = if problem.is_entropic() {
            Needs::with_laplacian()
        } else {
            Needs::base()
        };
        let evals = eval_batch(field, &batch.t, x.view(), Some(&batch.k), needs).unwrap();
        let n = batch.len() as f64;
        evals
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let row: Vec<f64> = x.row(i).to_vec();
                integrand(problem, e, &row, batch.t[i]).unwrap().integrand
            })
            .sum::<f64>()
            / n
    }

    fn check_path_gradient(problem: &ProblemSpec, seed: u64) {
        let spec = PathSpec::new(2, vec![6]);
        let p = init_path_params(&spec, seed).unwrap();
        let fspec = FieldSpec::new(2, vec![6, 6]);
        let field = init_params(&fspec, seed + 100).unwrap();
        let ds = two_point_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sample_path_batch(&ds, 5, &mut rng);
        let g = path_gradient(&p, &field, problem, &ds.times, &batch).unwrap();
        assert_eq!(g.len(), p.eta.len());

        let h = 1e-5;
        for idx in (0..p.eta.len()).step_by(5) {
            let mut pp = p.clone();
            pp.eta[idx] += h;
            let mut pm = p.clone();
            pm.eta[idx] -= h;
            let fd = (mean_integrand(&pp, &field, problem, &ds.times, &batch)
                - mean_integrand(&pm, &field, problem, &ds.times, &batch))
                / (2.0 * h);
            let rel = (g[idx] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "path grad[{idx}]: {} vs fd {fd}", g[idx]);
        }
    }

    #[test]
    fn path_gradient_matches_fd_w2() {
        check_path_gradient(&ProblemSpec::w2(), 1);
    }

    #[test]
    fn path_gradient_matches_fd_wfr() {
        check_path_gradient(&ProblemSpec::wfr(1.5), 2);
    }

    #[test]
    fn path_gradient_matches_fd_entropic() {
        check_path_gradient(&ProblemSpec::schrodinger_bridge(0.7), 3);
    }

    #[test]
    fn path_gradient_matches_fd_with_potential() {
        let problem = ProblemSpec::w2().with_potential(
            PotentialSpec::AnalyticQuadratic {
                q: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
                b: vec![0.3, -0.4],
            },
            0.8,
        );
        let spec = PathSpec::new(2, vec![6]);
        let p = init_path_params(&spec, 4).unwrap();
        let fspec = FieldSpec::new(2, vec![6]);
        let field = init_params(&fspec, 44).unwrap();
        let ds = two_point_dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = sample_path_batch(&ds, 4, &mut rng);
        let g = path_gradient(&p, &field, &problem, &ds.times, &batch).unwrap();

        let objective = |pp: &PathParams| -> f64 {
            let base = mean_integrand(pp, &field, &ProblemSpec::w2(), &ds.times, &batch);
            let x = interpolate(pp, &ds.times, &batch).unwrap();
            let pot: f64 = (0..batch.len())
                .map(|i| {
                    let row: Vec<f64> = x.row(i).to_vec();
                    crate::hamiltonians::potential_density(&problem, &row, batch.t[i]).unwrap()
                })
                .sum::<f64>()
                / batch.len() as f64;
            base + pot
        };
        let h = 1e-5;
        for idx in (0..p.eta.len()).step_by(7) {
            let mut pp = p.clone();
            pp.eta[idx] += h;
            let mut pm = p.clone();
            pm.eta[idx] -= h;
            let fd = (objective(&pp) - objective(&pm)) / (2.0 * h);
            let rel = (g[idx] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "potential path grad[{idx}]: {} vs fd {fd}", g[idx]);
        }
    }

    #[test]
    fn gradient_is_zero_where_correction_is_frozen() {
        // all sample times at interval endpoints: cN = 0, so ∂/∂η vanishes
        let spec = PathSpec::new(2, vec![5]);
        let p = init_path_params(&spec, 9).unwrap();
        let field = init_params(&FieldSpec::new(2, vec![5]), 10).unwrap();
        let times = [0.0, 1.0];
        let batch = manual_batch(
            vec![0.0, 1.0],
            vec![0, 0],
            array![[0.1, 0.2], [0.3, 0.4]],
            array![[1.0, 1.1], [1.2, 1.3]],
        );
        let g = path_gradient(&p, &field, &ProblemSpec::w2(), &times, &batch).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn batch_contract_violations_are_caught() {
        let spec = PathSpec::new(2, vec![4]);
        let p = init_path_params(&spec, 0).unwrap();
        let times = [0.0, 1.0];
        // time outside its interval
        let bad = manual_batch(vec![1.5], vec![0], array![[0.0, 0.0]], array![[1.0, 1.0]]);
        assert!(matches!(
            interpolate(&p, &times, &bad),
            Err(WlfError::Contract(_))
        ));
        // wrong dimension
        let bad = manual_batch(vec![0.5], vec![0], array![[0.0]], array![[1.0]]);
        assert!(interpolate(&p, &times, &bad).is_err());
    }
}

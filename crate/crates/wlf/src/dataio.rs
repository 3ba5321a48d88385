//! Dataset ingestion, synthetic benchmark generators, the mean-acceleration
//! potential builder, and run-configuration parsing.

use crate::error::{Result, WlfError};
use crate::field::FieldSpec;
use crate::hamiltonians::{PotentialSpec, ProblemSpec};
use crate::pathmodel::PathSpec;
use crate::trainer::TrainConfig;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Ordered list of (time, sample matrix) snapshots; the constraint set
/// Γ({μ_{t_i}}). Times are min–max rescaled to [0,1] at construction.
#[derive(Debug, Clone)]
pub struct MarginalDataset {
    pub times: Vec<f64>,
    pub snapshots: Vec<Array2<f64>>,
    pub dim: usize,
    pub name: String,
}

impl MarginalDataset {
    pub fn new(raw_times: Vec<f64>, snapshots: Vec<Array2<f64>>, name: &str) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(WlfError::config("a dataset needs at least 2 marginals"));
        }
        if raw_times.len() != snapshots.len() {
            return Err(WlfError::config("times and snapshots length mismatch"));
        }
        if !raw_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(WlfError::config("marginal times must be strictly increasing"));
        }
        let dim = snapshots[0].ncols();
        if dim == 0 {
            return Err(WlfError::config("zero-dimensional snapshots"));
        }
        for (i, s) in snapshots.iter().enumerate() {
            if s.ncols() != dim {
                return Err(WlfError::config(format!(
                    "snapshot {i} has dimension {} but snapshot 0 has {}",
                    s.ncols(),
                    dim
                )));
            }
            if s.nrows() == 0 {
                return Err(WlfError::config(format!("snapshot {i} is empty")));
            }
            if !s.iter().all(|v| v.is_finite()) {
                return Err(WlfError::config(format!("snapshot {i} has non-finite entries")));
            }
        }
        let t0 = raw_times[0];
        let t1 = raw_times[raw_times.len() - 1];
        let span = t1 - t0;
        let times = raw_times.iter().map(|t| (t - t0) / span).collect();
        Ok(MarginalDataset {
            times,
            snapshots,
            dim,
            name: name.to_string(),
        })
    }

    pub fn num_marginals(&self) -> usize {
        self.snapshots.len()
    }

    pub fn num_intervals(&self) -> usize {
        self.snapshots.len() - 1
    }

    /// Index of the interval [t_i, t_{i+1}) covering `t` (t = 1 maps to the
    /// last interval).
    pub fn interval_of(&self, t: f64) -> usize {
        let m = self.num_intervals();
        for i in 0..m {
            if t < self.times[i + 1] {
                return i;
            }
        }
        m - 1
    }

    /// Per-snapshot empirical mean.
    pub fn means(&self) -> Vec<Vec<f64>> {
        self.snapshots
            .iter()
            .map(|s| {
                let n = s.nrows() as f64;
                (0..s.ncols()).map(|j| s.column(j).sum() / n).collect()
            })
            .collect()
    }

    /// Draw `n` rows with replacement from snapshot `i`.
    pub fn draw(&self, i: usize, n: usize, rng: &mut impl Rng) -> Array2<f64> {
        let snap = &self.snapshots[i];
        let rows = snap.nrows();
        let mut out = Array2::zeros((n, self.dim));
        for r in 0..n {
            let pick = rng.gen_range(0..rows);
            out.row_mut(r).assign(&snap.row(pick));
        }
        out
    }

    /// Dataset with marginal `idx` removed (for leave-one-out runs).
    pub fn without(&self, idx: usize) -> Result<MarginalDataset> {
        if idx == 0 || idx + 1 == self.num_marginals() {
            return Err(WlfError::config(
                "cannot hold out an endpoint marginal; the protocol excludes endpoints",
            ));
        }
        let times: Vec<f64> = self
            .times
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, t)| *t)
            .collect();
        let snapshots: Vec<Array2<f64>> = self
            .snapshots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, s)| s.clone())
            .collect();
        // times already span [0,1]; construct directly to avoid re-rescaling
        Ok(MarginalDataset {
            times,
            snapshots,
            dim: self.dim,
            name: format!("{}-holdout{}", self.name, idx),
        })
    }
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

fn parse_time_from_stem(stem: &str) -> Option<f64> {
    // last numeric token in the stem, e.g. "day_2.5" -> 2.5
    let mut best: Option<f64> = None;
    let bytes = stem.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        // '-' is a common filename separator, so times are read unsigned
        if c.is_ascii_digit() {
            let start = i;
            i += 1;
            let mut seen_dot = false;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_digit() {
                    i += 1;
                } else if c == '.' && !seen_dot && i + 1 < bytes.len()
                    && (bytes[i + 1] as char).is_ascii_digit()
                {
                    seen_dot = true;
                    i += 1;
                } else {
                    break;
                }
            }
            if let Ok(v) = stem[start..i].parse::<f64>() {
                best = Some(v);
            }
        } else {
            i += 1;
        }
    }
    best
}

fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if lineno == 0 {
                continue; // single '#'-prefixed header allowed
            }
            return Err(WlfError::config(format!(
                "{}: comment lines only allowed as a single leading header",
                path.display()
            )));
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    WlfError::config(format!(
                        "{}: line {} has a non-numeric entry '{}'",
                        path.display(),
                        lineno + 1,
                        tok.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(WlfError::config(format!(
                    "{}: ragged row at line {}",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(WlfError::config(format!("{}: no data rows", path.display())));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / d;
    Ok(Array2::from_shape_vec((n, d), flat).unwrap())
}

/// Load one CSV per timepoint. `pattern` is a directory (all `.csv` files)
/// or a single-`*` glob like `data/day_*.csv`; the time is the last numeric
/// token in each file stem. Times are rescaled to [0,1].
pub fn load_marginals(pattern: &str) -> Result<MarginalDataset> {
    let (dir, prefix, suffix) = if pattern.contains('*') {
        let p = Path::new(pattern);
        let dir = p.parent().unwrap_or(Path::new(".")).to_path_buf();
        let fname = p
            .file_name()
            .and_then(|f| f.to_str())
            .ok_or_else(|| WlfError::config("bad glob pattern"))?;
        let mut parts = fname.splitn(2, '*');
        let prefix = parts.next().unwrap_or("").to_string();
        let suffix = parts.next().unwrap_or("").to_string();
        (dir, prefix, suffix)
    } else {
        (PathBuf::from(pattern), String::new(), ".csv".to_string())
    };

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| {
        WlfError::config(format!("cannot read dataset dir {}: {e}", dir.display()))
    })? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name.starts_with(&prefix) && name.ends_with(&suffix) {
            files.push(entry.path());
        }
    }
    if files.len() < 2 {
        return Err(WlfError::config(format!(
            "pattern '{pattern}' matched {} file(s); need at least 2",
            files.len()
        )));
    }

    let mut timed: Vec<(f64, PathBuf)> = Vec::new();
    for f in files {
        let stem = f
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let t = parse_time_from_stem(&stem).ok_or_else(|| {
            WlfError::config(format!("no numeric time found in filename '{stem}'"))
        })?;
        timed.push((t, f));
    }
    timed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut times = Vec::new();
    let mut snaps = Vec::new();
    let mut dims: Vec<(PathBuf, usize)> = Vec::new();
    for (t, f) in &timed {
        let m = read_csv_matrix(f)?;
        dims.push((f.clone(), m.ncols()));
        times.push(*t);
        snaps.push(m);
    }
    let d0 = dims[0].1;
    if let Some((bad, db)) = dims.iter().find(|(_, d)| *d != d0) {
        return Err(WlfError::config(format!(
            "dimension mismatch: {} has d={} but {} has d={}",
            dims[0].0.display(),
            d0,
            bad.display(),
            db
        )));
    }
    MarginalDataset::new(times, snaps, pattern)
}

// ---------------------------------------------------------------------------
// Synthetic benchmarks
// ---------------------------------------------------------------------------

fn default_unit() -> f64 {
    1.0
}
fn default_quarter() -> f64 {
    0.25
}

/// Desk-scale synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthKind {
    /// N(0, std²·I) → N(a, std²·I)
    GaussianShift {
        a: Vec<f64>,
        #[serde(default = "default_unit")]
        std: f64,
    },
    /// Three marginals at t = 0, ½, 1 with means 0, m/2 + bend, m: a bent path.
    #[serde(rename = "gaussian_drift_3pt")]
    GaussianDrift3pt {
        m: Vec<f64>,
        bend: Vec<f64>,
        #[serde(default = "default_quarter")]
        std: f64,
    },
    /// One mode at t=0 splitting into two modes at ±gap/2 along axis 0.
    BimodalSplit {
        gap: f64,
        dim: usize,
        #[serde(default = "default_quarter")]
        std: f64,
    },
    /// Two components at ±separation/2 along axis 0 whose relative weights
    /// change from w0 to w1; exercises unbalanced transport.
    MassChange {
        separation: f64,
        dim: usize,
        w0: f64,
        w1: f64,
        #[serde(default = "default_quarter")]
        std: f64,
    },
    /// Marginals along the closed-form parabola
    /// x(t) = m0 + (m1−m0)t + a(t²−t)/2, sampled with antithetic noise so the
    /// empirical means match the curve exactly.
    ParabolaPotential {
        m0: Vec<f64>,
        m1: Vec<f64>,
        accel: Vec<f64>,
        #[serde(default = "default_quarter")]
        std: f64,
    },
}

fn gaussian_cloud(rng: &mut ChaCha8Rng, n: usize, mean: &[f64], std: f64) -> Array2<f64> {
    let d = mean.len();
    Array2::from_shape_fn((n, d), |(_, j)| {
        mean[j] + std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    })
}

pub fn synth(kind: &SynthKind, seed: u64, n: usize) -> Result<MarginalDataset> {
    if n == 0 {
        return Err(WlfError::config("synthetic datasets need n > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::GaussianShift { a, std } => {
            let zero = vec![0.0; a.len()];
            let s0 = gaussian_cloud(&mut rng, n, &zero, *std);
            let s1 = gaussian_cloud(&mut rng, n, a, *std);
            MarginalDataset::new(vec![0.0, 1.0], vec![s0, s1], "gaussian_shift")
        }
        SynthKind::GaussianDrift3pt { m, bend, std } => {
            if bend.len() != m.len() {
                return Err(WlfError::config("bend and m must have the same dimension"));
            }
            let zero = vec![0.0; m.len()];
            let mid: Vec<f64> = m.iter().zip(bend).map(|(mv, bv)| mv / 2.0 + bv).collect();
            let s0 = gaussian_cloud(&mut rng, n, &zero, *std);
            let s1 = gaussian_cloud(&mut rng, n, &mid, *std);
            let s2 = gaussian_cloud(&mut rng, n, m, *std);
            MarginalDataset::new(vec![0.0, 0.5, 1.0], vec![s0, s1, s2], "gaussian_drift_3pt")
        }
        SynthKind::BimodalSplit { gap, dim, std } => {
            let zero = vec![0.0; *dim];
            let s0 = gaussian_cloud(&mut rng, n, &zero, *std);
            let mut s1 = Array2::zeros((n, *dim));
            for i in 0..n {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..*dim {
                    let noise: f64 =
                        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                    s1[(i, j)] = if j == 0 { sign * gap / 2.0 } else { 0.0 } + std * noise;
                }
            }
            MarginalDataset::new(vec![0.0, 1.0], vec![s0, s1], "bimodal_split")
        }
        SynthKind::MassChange {
            separation,
            dim,
            w0,
            w1,
            std,
        } => {
            if !(0.0..=1.0).contains(w0) || !(0.0..=1.0).contains(w1) {
                return Err(WlfError::config("component weights must lie in [0,1]"));
            }
            let make = |w: f64, rng: &mut ChaCha8Rng| {
                let n_a = ((n as f64) * w).round() as usize;
                let mut snap = Array2::zeros((n, *dim));
                for i in 0..n {
                    let center = if i < n_a { separation / 2.0 } else { -separation / 2.0 };
                    for j in 0..*dim {
                        let noise: f64 =
                            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                        snap[(i, j)] = if j == 0 { center } else { 0.0 } + std * noise;
                    }
                }
                snap
            };
            let s0 = make(*w0, &mut rng);
            let s1 = make(*w1, &mut rng);
            MarginalDataset::new(vec![0.0, 1.0], vec![s0, s1], "mass_change")
        }
        SynthKind::ParabolaPotential { m0, m1, accel, std } => {
            let d = m0.len();
            if m1.len() != d || accel.len() != d {
                return Err(WlfError::config("m0, m1, accel must share a dimension"));
            }
            let n_even = n + (n % 2); // antithetic pairs need an even count
            let half = n_even / 2;
            let mut noise = Array2::zeros((n_even, d));
            for i in 0..half {
                for j in 0..d {
                    let z: f64 =
                        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                    noise[(i, j)] = std * z;
                    noise[(half + i, j)] = -std * z;
                }
            }
            let times = [0.0, 0.5, 1.0];
            let snaps = times
                .iter()
                .map(|&t| {
                    let mut snap = noise.clone();
                    for i in 0..n_even {
                        for j in 0..d {
                            snap[(i, j)] +=
                                m0[j] + (m1[j] - m0[j]) * t + accel[j] * (t * t - t) / 2.0;
                        }
                    }
                    snap
                })
                .collect();
            MarginalDataset::new(times.to_vec(), snaps, "parabola_potential")
        }
    }
}

// ---------------------------------------------------------------------------
// Mean-acceleration potential
// ---------------------------------------------------------------------------

fn second_difference(
    m_prev: &[f64],
    m_mid: &[f64],
    m_next: &[f64],
    t_prev: f64,
    t_mid: f64,
    t_next: f64,
) -> Vec<f64> {
    // three-point divided difference; reduces to (x₂−2x₁+x₀)/Δt² on uniform grids
    let h0 = t_mid - t_prev;
    let h1 = t_next - t_mid;
    (0..m_mid.len())
        .map(|j| 2.0 * ((m_next[j] - m_mid[j]) / h1 - (m_mid[j] - m_prev[j]) / h0) / (h0 + h1))
        .collect()
}

fn assemble_accel_potential(times: &[f64], means: &[Vec<f64>]) -> PotentialSpec {
    let m = times.len();
    // acceleration at each interior marginal
    let interior: Vec<(f64, Vec<f64>)> = (1..m - 1)
        .map(|i| {
            (
                times[i],
                second_difference(
                    &means[i - 1],
                    &means[i],
                    &means[i + 1],
                    times[i - 1],
                    times[i],
                    times[i + 1],
                ),
            )
        })
        .collect();
    // each interval takes the acceleration of the nearest interior marginal
    // (ties resolve to the earlier one); endpoints inherit automatically
    let accels: Vec<Vec<f64>> = (0..m - 1)
        .map(|i| {
            let mid = 0.5 * (times[i] + times[i + 1]);
            let nearest = interior
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - mid).abs();
                    let db = (b.0 - mid).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .expect(">=3 marginals guaranteed by caller");
            nearest.1.clone()
        })
        .collect();
    PotentialSpec::LinearPerInterval {
        times: times.to_vec(),
        accels,
    }
}

/// Estimate per-interval accelerations of the snapshot means by central
/// second differences and build V_t(x) = −⟨x, a_t⟩.
pub fn build_mean_accel_potential(dataset: &MarginalDataset) -> Result<PotentialSpec> {
    if dataset.num_marginals() < 3 {
        return Err(WlfError::config(
            "mean-acceleration potential needs at least 3 marginals",
        ));
    }
    Ok(assemble_accel_potential(&dataset.times, &dataset.means()))
}

/// Leave-one-out variant: the held-out marginal's mean participates in the
/// second differences even though its samples are not trained on. This leaks
/// the held-out mean by design and is only used in protocol-reproduction mode.
pub fn build_mean_accel_potential_with_held_out(
    reduced: &MarginalDataset,
    held_out_time: f64,
    held_out_mean: &[f64],
) -> Result<PotentialSpec> {
    let mut times = reduced.times.clone();
    let mut means = reduced.means();
    let pos = times.partition_point(|&t| t < held_out_time);
    if pos == 0 || pos == times.len() {
        return Err(WlfError::config("held-out time must be interior"));
    }
    times.insert(pos, held_out_time);
    means.insert(pos, held_out_mean.to_vec());
    if times.len() < 3 {
        return Err(WlfError::config(
            "mean-acceleration potential needs at least 3 marginals",
        ));
    }
    Ok(assemble_accel_potential(&times, &means))
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DatasetRef {
    Synth {
        #[serde(flatten)]
        kind: SynthKind,
        seed: u64,
        n: usize,
    },
    Files {
        pattern: String,
    },
}

impl DatasetRef {
    pub fn load(&self) -> Result<MarginalDataset> {
        match self {
            DatasetRef::Synth { kind, seed, n } => synth(kind, *seed, *n),
            DatasetRef::Files { pattern } => load_marginals(pattern),
        }
    }
}

/// Options for the leave-one-timepoint-out protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooSettings {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    /// Build the mean-acceleration potential per held-out run.
    #[serde(default)]
    pub mean_accel_potential: bool,
    /// Protocol-reproduction mode: use the held-out marginal's mean when
    /// estimating the acceleration (leaks evaluation information by design).
    #[serde(default = "default_true")]
    pub use_held_out_mean: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_n_eval() -> usize {
    512
}
fn default_true() -> bool {
    true
}

impl Default for LooSettings {
    fn default() -> Self {
        LooSettings {
            seeds: default_seeds(),
            n_eval: default_n_eval(),
            mean_accel_potential: false,
            use_held_out_mean: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub field: FieldSpec,
    pub path: PathSpec,
    pub train: TrainConfig,
    pub dataset: DatasetRef,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub loo: Option<LooSettings>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.field.validate()?;
        self.path.validate()?;
        self.train.validate()?;
        if self.field.input_dim != self.path.dim {
            return Err(WlfError::config(format!(
                "field input_dim {} != path dim {}",
                self.field.input_dim, self.path.dim
            )));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse a config from a JSON value (used by env-var overrides).
pub fn config_from_value(value: serde_json::Value) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    cfg.validate()?;
    let text = serde_json::to_string_pretty(cfg)?;
    std::fs::write(path, text)?;
    Ok(())
}

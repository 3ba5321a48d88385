//! On-disk formats: the `.wlf` binary container for model parameters and
//! trajectory bundles, plus CSV emitters for training history and
//! evaluation tables.
//!
//! Layout of a `.wlf` file:
//!   bytes 0..4   magic `WLF1`
//!   bytes 4..8   header length as little-endian u32
//!   header       UTF-8 JSON: {"kind", "spec", "count"}
//!   payload      `count` f64 values, little-endian

use crate::error::{Result, WlfError};
use crate::field::{FieldParams, FieldSpec};
use crate::pathmodel::{PathParams, PathSpec};
use crate::trainer::TrainHistory;
use crate::transport_eval::{EvalTable, SimMode, SimStatus, TrajectoryBundle};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"WLF1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    spec: serde_json::Value,
    count: usize,
}

fn write_wlf(path: &Path, kind: &str, spec: serde_json::Value, data: &[f64]) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        kind: kind.to_string(),
        spec,
        count: data.len(),
    })?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(header.len() as u32).to_le_bytes())?;
    file.write_all(&header)?;
    let mut payload = Vec::with_capacity(data.len() * 8);
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&payload)?;
    Ok(())
}

fn read_wlf(path: &Path) -> Result<(Header, Vec<f64>)> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0_u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| WlfError::contract("file too short to be a checkpoint"))?;
    if &magic != MAGIC {
        return Err(WlfError::contract("bad magic bytes: not a .wlf file"));
    }
    let mut len_bytes = [0_u8; 4];
    file.read_exact(&mut len_bytes)
        .map_err(|_| WlfError::contract("truncated checkpoint header length"))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0_u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| WlfError::contract("truncated checkpoint header"))?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    if payload.len() != header.count * 8 {
        return Err(WlfError::contract(format!(
            "payload holds {} bytes but header promises {} values",
            payload.len(),
            header.count
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}

pub fn save_field(path: impl AsRef<Path>, params: &FieldParams) -> Result<()> {
    write_wlf(
        path.as_ref(),
        "field",
        serde_json::to_value(&params.spec)?,
        &params.theta,
    )
}

pub fn load_field(path: impl AsRef<Path>) -> Result<FieldParams> {
    let (header, data) = read_wlf(path.as_ref())?;
    if header.kind != "field" {
        return Err(WlfError::contract(format!(
            "expected a field checkpoint, found kind {:?}",
            header.kind
        )));
    }
    let spec: FieldSpec = serde_json::from_value(header.spec)?;
    FieldParams::new(spec, data)
}

pub fn save_path_model(path: impl AsRef<Path>, params: &PathParams) -> Result<()> {
    write_wlf(
        path.as_ref(),
        "path",
        serde_json::to_value(&params.spec)?,
        &params.eta,
    )
}

pub fn load_path_model(path: impl AsRef<Path>) -> Result<PathParams> {
    let (header, data) = read_wlf(path.as_ref())?;
    if header.kind != "path" {
        return Err(WlfError::contract(format!(
            "expected a path checkpoint, found kind {:?}",
            header.kind
        )));
    }
    let spec: PathSpec = serde_json::from_value(header.spec)?;
    PathParams::new(spec, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryHeader {
    times: Vec<f64>,
    particles: usize,
    dim: usize,
    mode: SimMode,
    status: SimStatus,
}

/// Trajectory payload: the saved states step by step in row-major order,
/// followed by the log-weights step by step.
pub fn save_trajectory(path: impl AsRef<Path>, bundle: &TrajectoryBundle) -> Result<()> {
    let steps = bundle.states.len();
    if steps == 0 {
        return Err(WlfError::contract("cannot save an empty trajectory"));
    }
    let (n, d) = bundle.states[0].dim();
    let mut data = Vec::with_capacity(steps * n * (d + 1));
    for s in &bundle.states {
        data.extend(s.iter().copied());
    }
    for w in &bundle.log_weights {
        data.extend(w.iter().copied());
    }
    let spec = serde_json::to_value(TrajectoryHeader {
        times: bundle.times.clone(),
        particles: n,
        dim: d,
        mode: bundle.mode,
        status: bundle.status,
    })?;
    write_wlf(path.as_ref(), "trajectory", spec, &data)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryBundle> {
    let (header, data) = read_wlf(path.as_ref())?;
    if header.kind != "trajectory" {
        return Err(WlfError::contract(format!(
            "expected a trajectory checkpoint, found kind {:?}",
            header.kind
        )));
    }
    let th: TrajectoryHeader = serde_json::from_value(header.spec)?;
    let steps = th.times.len();
    let expect = steps * th.particles * (th.dim + 1);
    if data.len() != expect {
        return Err(WlfError::contract("trajectory payload size mismatch"));
    }
    let block = th.particles * th.dim;
    let mut states = Vec::with_capacity(steps);
    for k in 0..steps {
        let slice = &data[k * block..(k + 1) * block];
        states.push(
            Array2::from_shape_vec((th.particles, th.dim), slice.to_vec())
                .map_err(|e| WlfError::contract(e.to_string()))?,
        );
    }
    let base = steps * block;
    let log_weights = (0..steps)
        .map(|k| data[base + k * th.particles..base + (k + 1) * th.particles].to_vec())
        .collect();
    Ok(TrajectoryBundle {
        times: th.times,
        states,
        log_weights,
        mode: th.mode,
        status: th.status,
    })
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &TrainHistory) -> Result<()> {
    let mut out = String::from(
        "iter,dual_estimate,boundary_term,integrand_term,grad_norm_theta,grad_norm_eta,seconds\n",
    );
    for r in &history.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iter,
            r.dual_estimate,
            r.boundary_term,
            r.integrand_term,
            r.grad_norm_theta,
            r.grad_norm_eta,
            r.seconds
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<TrainHistory> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| WlfError::contract("history CSV is empty"))?;
    if !header.starts_with("iter,dual_estimate") {
        return Err(WlfError::contract("unrecognized history CSV header"));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(WlfError::contract(format!(
                "history CSV line {}: expected 7 columns, found {}",
                ln + 2,
                cols.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| WlfError::contract(format!("bad number {s:?} on line {}", ln + 2)))
        };
        rows.push(crate::trainer::HistoryRow {
            iter: cols[0]
                .parse()
                .map_err(|_| WlfError::contract(format!("bad iteration on line {}", ln + 2)))?,
            dual_estimate: num(cols[1])?,
            boundary_term: num(cols[2])?,
            integrand_term: num(cols[3])?,
            grad_norm_theta: num(cols[4])?,
            grad_norm_eta: num(cols[5])?,
            seconds: num(cols[6])?,
        });
    }
    Ok(TrainHistory { rows })
}

pub fn write_eval_csv(path: impl AsRef<Path>, table: &EvalTable) -> Result<()> {
    let mut out = String::from(
        "time_index,time,sampler_w1_mean,sampler_w1_std,simulated_w1_mean,simulated_w1_std,seeds\n",
    );
    for e in &table.entries {
        let (sm, ss) = e.sampler_mean_std();
        let (dm, ds) = e.simulated_mean_std();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.time_index,
            e.time,
            sm,
            ss,
            dm,
            ds,
            e.sampler_w1.len()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::init_params;
    use crate::pathmodel::init_path_params;
    use crate::trainer::HistoryRow;
    use crate::transport_eval::{EvalEntry, SimStatus};
    use ndarray::array;

    #[test]
    fn field_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wlf");
        let params = init_params(&FieldSpec::new(3, vec![7, 5]), 9).unwrap();
        save_field(&p, &params).unwrap();
        let back = load_field(&p).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn path_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.wlf");
        let params = init_path_params(&PathSpec::new(2, vec![6]), 4).unwrap();
        save_path_model(&p, &params).unwrap();
        let back = load_path_model(&p).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wlf");
        let params = init_params(&FieldSpec::new(2, vec![4]), 0).unwrap();
        save_field(&p, &params).unwrap();
        assert!(matches!(load_path_model(&p), Err(WlfError::Contract(_))));
    }

    #[test]
    fn garbage_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.wlf");
        std::fs::write(&p, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_field(&p), Err(WlfError::Contract(_))));
        std::fs::write(&p, b"WL").unwrap();
        assert!(load_field(&p).is_err());
        // valid magic, truncated payload
        let params = init_params(&FieldSpec::new(2, vec![4]), 0).unwrap();
        save_field(&p, &params).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_field(&p), Err(WlfError::Contract(_))));
    }

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wlf");
        let bundle = TrajectoryBundle {
            times: vec![0.0, 0.5, 1.0],
            states: vec![
                array![[0.0, 1.0], [2.0, 3.0]],
                array![[0.1, 1.1], [2.1, 3.1]],
                array![[0.2, 1.2], [2.2, 3.2]],
            ],
            log_weights: vec![vec![0.0, 0.0], vec![0.3, -0.1], vec![0.6, -0.2]],
            mode: SimMode::Ode,
            status: SimStatus::Complete,
        };
        save_trajectory(&p, &bundle).unwrap();
        let back = load_trajectory(&p).unwrap();
        assert_eq!(back.times, bundle.times);
        assert_eq!(back.states, bundle.states);
        assert_eq!(back.log_weights, bundle.log_weights);
        assert_eq!(back.mode, bundle.mode);
        assert_eq!(back.status, bundle.status);
    }

    #[test]
    fn csv_emitters_write_expected_headers() {
        let dir = tempfile::tempdir().unwrap();
        let hp = dir.path().join("history.csv");
        let history = TrainHistory {
            rows: vec![HistoryRow {
                iter: 10,
                dual_estimate: 1.5,
                boundary_term: 2.0,
                integrand_term: 0.5,
                grad_norm_theta: 0.1,
                grad_norm_eta: 0.2,
                seconds: 0.01,
            }],
        };
        write_history_csv(&hp, &history).unwrap();
        let text = std::fs::read_to_string(&hp).unwrap();
        assert!(text.starts_with("iter,dual_estimate"));
        assert!(text.lines().nth(1).unwrap().starts_with("10,1.5,2,0.5"));
        assert_eq!(read_history_csv(&hp).unwrap(), history);

        let ep = dir.path().join("eval.csv");
        let table = EvalTable {
            entries: vec![EvalEntry {
                time_index: 1,
                time: 0.5,
                sampler_w1: vec![0.2, 0.4],
                simulated_w1: vec![0.3, 0.5],
            }],
        };
        write_eval_csv(&ep, &table).unwrap();
        let text = std::fs::read_to_string(&ep).unwrap();
        assert!(text.starts_with("time_index,time,sampler_w1_mean"));
        assert!(text.lines().nth(1).unwrap().starts_with("1,0.5,0.3"));
    }
}

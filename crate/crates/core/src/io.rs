//! File formats: `.fld` snapshots, `run.json`, `sweep_report.csv`.
//!
//! A `.fld` file is one UTF-8 JSON header line followed by the raw little-endian
//! `f64` payload in row-major order with the x axes outermost.

use crate::config::RunConfig;
use crate::diagnostics::to_csv;
use crate::error::{Error, Result};
use crate::grid::{DistributionField, PhaseGrid};
use crate::integrator::{SweepReport, Trajectory};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub const FLD_DTYPE: &str = "f64le";
pub const FLD_ORDER: &str = "row-major, x-axes outermost";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FldHeader {
    pub dx: usize,
    pub dv: usize,
    pub nx: usize,
    pub nv: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Lv")]
    pub lv: f64,
    pub time: f64,
    pub dtype: String,
    pub order: String,
    /// Name of a coefficient field (`H`, `A_ij`, `b_i`, `lapA`) when not a distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

pub fn write_fld_values(path: &Path, grid: &PhaseGrid, values: &[f64], time: f64, field: Option<&str>) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Format(format!(
            "payload of {} values does not match grid size {}",
            values.len(),
            grid.len()
        )));
    }
    let header = FldHeader {
        dx: grid.dx,
        dv: grid.dv,
        nx: grid.nx,
        nv: grid.nv,
        lx: grid.lx,
        lv: grid.lv,
        time,
        dtype: FLD_DTYPE.into(),
        order: FLD_ORDER.into(),
        field: field.map(str::to_string),
    };
    let mut buf = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    buf.push(b'\n');
    buf.reserve(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn write_fld(path: &Path, f: &DistributionField, time: f64) -> Result<()> {
    write_fld_values(path, &f.grid, &f.values, time, None)
}

/// Header and raw payload.
pub fn read_fld_raw(path: &Path) -> Result<(FldHeader, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if !line.ends_with('\n') {
        return Err(Error::Format(format!("{}: header line not terminated", path.display())));
    }
    let header: FldHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    if header.dtype != FLD_DTYPE || header.order != FLD_ORDER {
        return Err(Error::Format(format!(
            "{}: unsupported dtype/order {:?}/{:?}",
            path.display(),
            header.dtype,
            header.order
        )));
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let grid = PhaseGrid::new(header.dx, header.dv, header.nx, header.nv, header.lx, header.lv)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            grid.len() * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values))
}

/// A distribution snapshot and its time.
pub fn read_fld(path: &Path) -> Result<(DistributionField, f64)> {
    let (h, values) = read_fld_raw(path)?;
    if h.field.is_some() {
        return Err(Error::Format(format!(
            "{} holds a coefficient field, not a distribution",
            path.display()
        )));
    }
    let grid = PhaseGrid::new(h.dx, h.dv, h.nx, h.nv, h.lx, h.lv)?;
    Ok((DistributionField::from_values(grid, values)?, h.time))
}

/// Export `H`, `A_ij`, `b_i` and `lapA` of one coefficient set into `dir`.
pub fn write_coefficients(dir: &Path, c: &crate::coefficients::CollisionCoefficients, time: f64) -> Result<()> {
    let g = c.grid;
    let dv = g.dv;
    let full = |v: &[f64]| c.broadcast(v);
    write_fld_values(&dir.join("coeff_H.fld"), &g, &full(&c.h), time, Some("H"))?;
    for i in 0..dv {
        for j in i..dv {
            let name = format!("A_{}{}", i + 1, j + 1);
            let comp = &c.a[crate::coefficients::sym_index(i, j, dv)];
            write_fld_values(&dir.join(format!("coeff_{name}.fld")), &g, &full(comp), time, Some(&name))?;
        }
        let name = format!("b_{}", i + 1);
        write_fld_values(&dir.join(format!("coeff_{name}.fld")), &g, &full(&c.b[i]), time, Some(&name))?;
    }
    write_fld_values(&dir.join("coeff_lapA.fld"), &g, &full(&c.lap_a), time, Some("lapA"))
}

/// Contents of `run.json`. No wall-clock fields, so identical inputs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
    /// Step actually used (`t_end / steps`).
    pub effective_step: f64,
    pub steps: usize,
    pub frames: usize,
    pub negativity_flags: usize,
    pub snapshot_files: Vec<String>,
    pub final_mass: f64,
    pub final_entropy_flog: f64,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `diagnostics.csv`, `run.json` and the snapshots of a finished run into `dir`.
pub fn write_run_outputs(dir: &Path, cfg: &RunConfig, traj: &Trajectory) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("diagnostics.csv"), &to_csv(&traj.records()))?;
    let mut snaps = Vec::new();
    if cfg.output.snapshots {
        for (k, fr) in traj.frames.iter().enumerate() {
            let name = format!("snapshot_{k:05}.fld");
            write_fld(&dir.join(&name), &fr.field, fr.time)?;
            snaps.push(name);
        }
    }
    let last = traj.steps.last().expect("trajectory has samples");
    let manifest = RunManifest {
        program: "flandau",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        effective_step: traj.step,
        steps: traj.steps.len() - 1,
        frames: traj.frames.len(),
        negativity_flags: traj.negativity_flags,
        snapshot_files: snaps,
        final_mass: last.mass,
        final_entropy_flog: last.entropy_flog,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&dir.join("run.json"), &(text + "\n"))
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "delta",
    "epsilon",
    "tau",
    "steps",
    "cauchy_l1",
    "entropy_residual",
    "entropy_delta",
    "mass_drift_rel",
    "max_app_s_lhs",
];

/// `sweep_report.csv`; the first entry has an empty `cauchy_l1` cell.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = SWEEP_COLUMNS.join(",");
    s.push('\n');
    for e in &report.entries {
        let c = e.cauchy_l1.map(|v| format!("{v:.16e}")).unwrap_or_default();
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            e.delta,
            e.epsilon,
            e.tau,
            e.steps,
            c,
            e.entropy_residual,
            e.entropy_delta,
            e.mass_drift_rel,
            e.max_app_s_lhs
        ));
    }
    s
}

pub fn write_sweep_report(dir: &Path, report: &SweepReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("sweep_report.csv"), &sweep_csv(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fld_round_trip_is_bitwise() {
        let dir = std::env::temp_dir().join(format!("flandau-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = PhaseGrid::new(1, 2, 4, 6, 1.5, 2.5).unwrap();
        let f = DistributionField::from_fn(g, |x, v| (x[0] + 2.0 * v[0] - v[1]).sin().abs() + 1e-310);
        let p = dir.join("a.fld");
        write_fld(&p, &f, 0.125).unwrap();
        let (back, t) = read_fld(&p).unwrap();
        assert_eq!(t, 0.125);
        assert!(back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = std::env::temp_dir().join(format!("flandau-io-t-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = PhaseGrid::new(1, 2, 4, 4, 1.0, 1.0).unwrap();
        let p = dir.join("b.fld");
        write_fld(&p, &DistributionField::zeros(g), 0.0).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_fld(&p), Err(Error::Format(_))));
        std::fs::remove_dir_all(&dir).ok();
    }
}

//! Monitored functionals, their CSV form, and the trajectory checks built on them.

use crate::coefficients::{coefficient_envelopes, ellipticity_probe};
use crate::collision::{entropy_flog, fisher_information, CollisionOperator, Dissipation};
use crate::error::{Error, Result};
use crate::generic::GenericChecks;
use crate::grid::{DistributionField, PhaseGrid, SpectralOps};
use crate::kernels::{bracket, KappaChoice, ModelParams};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Exponential rate of the Fisher envelope. The cross term satisfies
/// `8 |int grad_v sqrt f . grad_x sqrt f| <= 2 sqrt(I_v I_x) <= I_x + I_v`
/// for `I = int |grad f|^2 / f`, so Gronwall gives `I(t) <= I(0) e^t`.
pub const FISHER_ENVELOPE_RATE: f64 = 1.0;

/// Frames whose minimum drops below `-NEGATIVITY_REL * max f` are flagged.
pub const NEGATIVITY_REL: f64 = 1e-8;

/// Order of the weighted Sobolev entries: `(|alpha|, |beta|)` = (velocity order, space order).
pub const SOBOLEV_KEYS: [(usize, usize); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    /// Unused components are zero when `dv = 2`.
    pub momentum: [f64; 3],
    pub energy: f64,
    pub entropy_flog: f64,
    pub dissipation: f64,
    pub fisher_x: f64,
    pub fisher_v: f64,
    pub fisher_total: f64,
    pub lp2: f64,
    pub lp4: f64,
    pub lpinf: f64,
    /// `int (|x|^m + |v|^m) f`.
    pub moment_m: f64,
    /// `int |v|^m f` and `int |v|^(m-2) f`.
    pub moment_v_m: f64,
    pub moment_v_m2: f64,
    pub alpha_hat: f64,
    pub env_a: f64,
    pub env_b: f64,
    pub env_lapa: f64,
    pub min_f: f64,
    pub picard_iters: u32,
    pub negativity: bool,
    pub degenerate: bool,
    /// Entries in the order of [`SOBOLEV_KEYS`] with `s = 2`.
    pub weighted_sobolev: [f64; 6],
    pub generic_residual: f64,
    pub l_ds_norm: f64,
    pub m_de_norm: f64,
}

/// CSV column names in emission order.
pub const COLUMNS: [&str; 34] = [
    "time",
    "mass",
    "momentum_1",
    "momentum_2",
    "momentum_3",
    "energy",
    "entropy_flog",
    "dissipation",
    "fisher_x",
    "fisher_v",
    "fisher_total",
    "lp2",
    "lp4",
    "lpinf",
    "moment_m",
    "moment_v_m",
    "moment_v_m2",
    "alpha_hat",
    "env_a",
    "env_b",
    "env_lapa",
    "min_f",
    "picard_iters",
    "negativity",
    "degenerate",
    "ws_0_0",
    "ws_1_0",
    "ws_0_1",
    "ws_2_0",
    "ws_1_1",
    "ws_0_2",
    "generic_residual",
    "l_ds_norm",
    "m_de_norm",
];

/// Mass, momentum and energy `(int f, int v f, 1/2 int |v|^2 f)`.
pub fn moments(f: &DistributionField) -> (f64, [f64; 3], f64) {
    let g = f.grid;
    let marg = f.v_marginal();
    let mut mass = 0.0;
    let mut mom = [0.0; 3];
    let mut en = 0.0;
    for (iv, &m) in marg.iter().enumerate() {
        let v = g.v_coords(iv);
        mass += m;
        for a in 0..g.dv {
            mom[a] += v[a] * m;
        }
        en += 0.5 * v.iter().map(|c| c * c).sum::<f64>() * m;
    }
    let w = g.v_cell();
    (mass * w, mom.map(|c| c * w), en * w)
}

/// `(||f||_2, ||f||_4, ||f||_inf)`.
pub fn lp_norms(f: &DistributionField) -> [f64; 3] {
    let cell = f.grid.cell_volume();
    let (s2, s4) = f
        .values
        .par_iter()
        .map(|&v| {
            let v2 = v * v;
            (v2, v2 * v2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let inf = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    [(s2 * cell).sqrt(), (s4 * cell).powf(0.25), inf]
}

/// `(int (|x|^m + |v|^m) f, int |v|^m f, int |v|^(m-2) f)`.
pub fn moment_sums(f: &DistributionField, m: f64) -> (f64, f64, f64) {
    let g = f.grid;
    let marg = f.v_marginal();
    let vsq = g.v_sq_table();
    let mut vm = 0.0;
    let mut vm2 = 0.0;
    for (iv, &fm) in marg.iter().enumerate() {
        vm += vsq[iv].powf(0.5 * m) * fm;
        vm2 += vsq[iv].powf(0.5 * (m - 2.0)) * fm;
    }
    let nvt = g.nvt();
    let xsq = g.x_sq_table();
    let mut xm = 0.0;
    for (ix, chunk) in f.values.chunks(nvt).enumerate() {
        xm += xsq[ix].powf(0.5 * m) * chunk.iter().sum::<f64>();
    }
    let w = g.v_cell();
    (xm * g.cell_volume() + vm * w, vm * w, vm2 * w)
}

fn multi_indices(order: usize, dim: usize) -> Vec<Vec<usize>> {
    match order {
        0 => vec![vec![]],
        1 => (0..dim).map(|a| vec![a]).collect(),
        _ => {
            let mut out = Vec::new();
            for a in 0..dim {
                for b in a..dim {
                    out.push(vec![a, b]);
                }
            }
            out
        }
    }
}

/// `||<v>^(s - |alpha| - |beta|) D_v^alpha D_x^beta f||_2` summed in square over
/// multi-indices of each order pair `(|alpha|, |beta|)` with `|alpha| + |beta| <= s <= 2`.
pub fn weighted_sobolev_norms(f: &DistributionField, s: usize, ops: &SpectralOps) -> Result<BTreeMap<(usize, usize), f64>> {
    if s > 2 {
        return Err(Error::Param(format!("weighted Sobolev norms support s <= 2, got {s}")));
    }
    let g = f.grid;
    let nvt = g.nvt();
    let vsq = g.v_sq_table();
    let cell = g.cell_volume();
    let mut out = BTreeMap::new();
    for a in 0..=s {
        for b in 0..=(s - a) {
            let weight_pow = (s - a - b) as f64;
            let mut total = 0.0;
            for av in multi_indices(a, g.dv) {
                for bx in multi_indices(b, g.dx) {
                    let mut d = f.values.clone();
                    for &ax in &bx {
                        d = ops.dx(&d, ax);
                    }
                    for &ax in &av {
                        d = ops.dv(&d, ax);
                    }
                    total += d
                        .iter()
                        .enumerate()
                        .map(|(k, x)| {
                            let w = bracket(vsq[k % nvt]).powf(weight_pow);
                            (w * x).powi(2)
                        })
                        .sum::<f64>();
                }
            }
            out.insert((a, b), (total * cell).sqrt());
        }
    }
    Ok(out)
}

/// Options controlling the more expensive parts of [`DiagnosticsContext::record`].
#[derive(Debug, Clone, Copy)]
pub struct RecordOptions {
    pub ellipticity_samples: usize,
    pub generic: bool,
    pub sobolev: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            ellipticity_samples: 2000,
            generic: true,
            sobolev: true,
        }
    }
}

/// Reusable operators for recording diagnostics on one grid.
#[derive(Debug)]
pub struct DiagnosticsContext {
    pub grid: PhaseGrid,
    pub params: ModelParams,
    pub regularized: bool,
    pub options: RecordOptions,
    ops: SpectralOps,
    op: CollisionOperator,
    diss: Dissipation,
    generic: Option<GenericChecks>,
}

impl DiagnosticsContext {
    pub fn new(grid: PhaseGrid, params: ModelParams, regularized: bool, options: RecordOptions) -> Result<Self> {
        Ok(Self {
            grid,
            params,
            regularized,
            options,
            ops: SpectralOps::new(grid),
            op: CollisionOperator::new(grid, params, regularized)?,
            diss: Dissipation::new(grid, params, regularized)?,
            generic: if options.generic {
                Some(GenericChecks::new(grid, params)?)
            } else {
                None
            },
        })
    }

    pub fn ops(&self) -> &SpectralOps {
        &self.ops
    }

    pub fn record(&self, f: &DistributionField, time: f64, picard_iters: u32) -> Result<DiagnosticsRecord> {
        f.check_finite()?;
        let (mass, momentum, energy) = moments(f);
        let [lp2, lp4, lpinf] = lp_norms(f);
        let (moment_m, moment_v_m, moment_v_m2) = moment_sums(f, self.params.m_moment);
        let min_f = f.min();
        let max_f = f.max();
        let degenerate = !(mass > 0.0);
        let nan = f64::NAN;
        let mut rec = DiagnosticsRecord {
            time,
            mass,
            momentum,
            energy,
            entropy_flog: entropy_flog(f),
            dissipation: 0.0,
            fisher_x: 0.0,
            fisher_v: 0.0,
            fisher_total: 0.0,
            lp2,
            lp4,
            lpinf,
            moment_m,
            moment_v_m,
            moment_v_m2,
            alpha_hat: nan,
            env_a: nan,
            env_b: nan,
            env_lapa: nan,
            min_f,
            picard_iters,
            negativity: min_f < -NEGATIVITY_REL * max_f,
            degenerate,
            weighted_sobolev: [nan; 6],
            generic_residual: nan,
            l_ds_norm: nan,
            m_de_norm: nan,
        };
        if degenerate {
            return Ok(rec);
        }
        rec.dissipation = self.diss.rate(f)?;
        let [fx, fv] = fisher_information(f, &self.ops);
        rec.fisher_x = fx;
        rec.fisher_v = fv;
        rec.fisher_total = fx + fv;
        let coeffs = self.op.coefficients(f)?;
        rec.alpha_hat = ellipticity_probe(&coeffs, self.options.ellipticity_samples, 0x5eed)?.alpha_hat;
        let [ea, eb, el] = coefficient_envelopes(&coeffs);
        rec.env_a = ea;
        rec.env_b = eb;
        rec.env_lapa = el;
        if self.options.sobolev {
            let ws = weighted_sobolev_norms(f, 2, &self.ops)?;
            for (slot, key) in SOBOLEV_KEYS.iter().enumerate() {
                rec.weighted_sobolev[slot] = ws[key];
            }
        }
        if let Some(gc) = &self.generic {
            if min_f > 0.0 {
                let r = gc.evaluate(f)?;
                rec.generic_residual = r.relative_residual;
                rec.l_ds_norm = r.l_ds_norm;
                rec.m_de_norm = r.m_de_norm;
            }
        }
        Ok(rec)
    }
}

/// Diagnostics of one field with default options.
pub fn record(f: &DistributionField, params: &ModelParams, time: f64) -> Result<DiagnosticsRecord> {
    DiagnosticsContext::new(f.grid, *params, false, RecordOptions::default())?.record(f, time, 0)
}

fn fmt_f(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn record_row(r: &DiagnosticsRecord) -> String {
    let mut s = String::new();
    let mut vals: Vec<f64> = vec![r.time, r.mass];
    vals.extend_from_slice(&r.momentum);
    vals.extend_from_slice(&[
        r.energy,
        r.entropy_flog,
        r.dissipation,
        r.fisher_x,
        r.fisher_v,
        r.fisher_total,
        r.lp2,
        r.lp4,
        r.lpinf,
        r.moment_m,
        r.moment_v_m,
        r.moment_v_m2,
        r.alpha_hat,
        r.env_a,
        r.env_b,
        r.env_lapa,
        r.min_f,
    ]);
    for v in &vals {
        fmt_f(&mut s, *v);
        s.push(',');
    }
    let _ = write!(s, "{},{},{},", r.picard_iters, r.negativity as u8, r.degenerate as u8);
    let tail: Vec<f64> = r
        .weighted_sobolev
        .iter()
        .copied()
        .chain([r.generic_residual, r.l_ds_norm, r.m_de_norm])
        .collect();
    for (i, v) in tail.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        fmt_f(&mut s, *v);
    }
    s
}

/// CSV text: header plus one row per record, `,`-delimited, `\n`-terminated,
/// 17 significant digits.
pub fn to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&record_row(r));
        out.push('\n');
    }
    out
}

pub fn emit_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(records)).map_err(|e| Error::io(path, e))
}

/// Inverse of [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty diagnostics CSV".into()))?;
    if header != COLUMNS.join(",") {
        return Err(Error::Format("unexpected diagnostics CSV header".into()));
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != COLUMNS.len() {
            return Err(Error::Format(format!(
                "row {} has {} cells, expected {}",
                ln + 1,
                cells.len(),
                COLUMNS.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            cells[i]
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("row {} column {}: {e}", ln + 1, COLUMNS[i])))
        };
        let int = |i: usize| -> Result<u32> {
            cells[i]
                .parse::<u32>()
                .map_err(|e| Error::Format(format!("row {} column {}: {e}", ln + 1, COLUMNS[i])))
        };
        let mut ws = [0.0; 6];
        for (s, slot) in ws.iter_mut().enumerate() {
            *slot = num(25 + s)?;
        }
        out.push(DiagnosticsRecord {
            time: num(0)?,
            mass: num(1)?,
            momentum: [num(2)?, num(3)?, num(4)?],
            energy: num(5)?,
            entropy_flog: num(6)?,
            dissipation: num(7)?,
            fisher_x: num(8)?,
            fisher_v: num(9)?,
            fisher_total: num(10)?,
            lp2: num(11)?,
            lp4: num(12)?,
            lpinf: num(13)?,
            moment_m: num(14)?,
            moment_v_m: num(15)?,
            moment_v_m2: num(16)?,
            alpha_hat: num(17)?,
            env_a: num(18)?,
            env_b: num(19)?,
            env_lapa: num(20)?,
            min_f: num(21)?,
            picard_iters: int(22)?,
            negativity: int(23)? != 0,
            degenerate: int(24)? != 0,
            weighted_sobolev: ws,
            generic_residual: num(31)?,
            l_ds_norm: num(32)?,
            m_de_norm: num(33)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FisherReport {
    /// Largest `d/dt fisher_x / fisher_x(0)` over recorded intervals.
    pub max_slope_rel: f64,
    pub slope_tolerance: f64,
    pub envelope_rate: f64,
    /// Largest `fisher_total(t) / (fisher_total(0) e^{rate t})`.
    pub max_envelope_ratio: f64,
    pub violations: Vec<String>,
    pub pass: bool,
}

/// Monotonicity of `fisher_x` and the exponential envelope of `fisher_total`.
pub fn fisher_monotonicity_check(
    records: &[DiagnosticsRecord],
    params: &ModelParams,
    slope_tolerance_rel: f64,
    envelope_rate: f64,
) -> Result<FisherReport> {
    if params.kappa_choice != KappaChoice::ConstantOne {
        return Err(Error::Config(
            "Fisher monotonicity holds for the constant spatial kernel only".into(),
        ));
    }
    if records.len() < 2 {
        return Err(Error::Trajectory("Fisher check needs at least 2 records".into()));
    }
    let fx0 = records[0].fisher_x;
    let ft0 = records[0].fisher_total;
    let scale = if fx0 > 0.0 { fx0 } else { 1.0 };
    let mut violations = Vec::new();
    let mut max_slope: f64 = f64::NEG_INFINITY;
    for w in records.windows(2) {
        let slope = (w[1].fisher_x - w[0].fisher_x) / (w[1].time - w[0].time) / scale;
        max_slope = max_slope.max(slope);
        if slope > slope_tolerance_rel {
            violations.push(format!(
                "fisher_x slope {slope:.3e} > {slope_tolerance_rel:.1e} on [{}, {}]",
                w[0].time, w[1].time
            ));
        }
    }
    let mut max_ratio: f64 = 0.0;
    for r in records {
        let env = ft0 * (envelope_rate * (r.time - records[0].time)).exp();
        let ratio = if env > 0.0 { r.fisher_total / env } else { 0.0 };
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 + 1e-9 {
            violations.push(format!("fisher_total exceeds envelope at t = {} (ratio {ratio})", r.time));
        }
    }
    Ok(FisherReport {
        max_slope_rel: max_slope,
        slope_tolerance: slope_tolerance_rel,
        envelope_rate,
        max_envelope_ratio: max_ratio,
        pass: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// Fitted rate over the fit window.
    pub c_hat: f64,
    pub fit_end_time: f64,
    /// Largest ratio of measured to allowed value after the fit window.
    pub worst_ratio: f64,
    pub violations: usize,
    pub pass: bool,
}

/// `||f(t)||_p <= ||f(0)||_p e^{C t}` with `C` fitted on the first quarter of the series.
/// `series` holds `(t, ||f(t)||_p)`.
pub fn lp_growth_check(series: &[(f64, f64)]) -> Result<GrowthReport> {
    if series.len() < 4 {
        return Err(Error::Trajectory("L^p check needs at least 4 samples".into()));
    }
    let (t0, n0) = series[0];
    let span = series[series.len() - 1].0 - t0;
    let fit_end = t0 + 0.25 * span;
    let mut c_hat: f64 = 0.0;
    for &(t, n) in series.iter().skip(1).filter(|(t, _)| *t <= fit_end + 1e-12) {
        c_hat = c_hat.max((n / n0).ln() / (t - t0));
    }
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for &(t, n) in series.iter().filter(|(t, _)| *t > fit_end + 1e-12) {
        let allowed = n0 * (c_hat * (t - t0)).exp();
        let ratio = n / allowed;
        worst = worst.max(ratio);
        // One part in 10^12 absorbs roundoff in the norms themselves.
        if ratio > 1.0 + 1e-12 {
            violations += 1;
        }
    }
    Ok(GrowthReport {
        c_hat,
        fit_end_time: fit_end,
        worst_ratio: worst,
        violations,
        pass: violations == 0,
    })
}

/// `d/dt M_m <= C M_{m-2}` with `C` fitted on the first tenth of the series.
/// `series` holds `(t, M_m, M_{m-2})`.
pub fn moment_growth_check(series: &[(f64, f64, f64)]) -> Result<GrowthReport> {
    if series.len() < 11 {
        return Err(Error::Trajectory("moment check needs at least 11 samples".into()));
    }
    let t0 = series[0].0;
    let span = series[series.len() - 1].0 - t0;
    let fit_end = t0 + 0.1 * span;
    let rates: Vec<(f64, f64)> = series
        .windows(2)
        .map(|w| {
            let dm = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let base = 0.5 * (w[0].2 + w[1].2);
            (w[1].0, dm / base)
        })
        .collect();
    let mut c_hat: f64 = 0.0;
    for &(t, r) in rates.iter().filter(|(t, _)| *t <= fit_end + 1e-12) {
        let _ = t;
        c_hat = c_hat.max(r);
    }
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut violations = 0;
    for &(_, r) in rates.iter().filter(|(t, _)| *t > fit_end + 1e-12) {
        worst = worst.max(if c_hat > 0.0 { r / c_hat } else { r });
        if r > c_hat {
            violations += 1;
        }
    }
    Ok(GrowthReport {
        c_hat,
        fit_end_time: fit_end,
        worst_ratio: worst,
        violations,
        pass: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            time: t,
            mass: 1.0 / 3.0,
            momentum: [1e-17, -2.5, 0.0],
            energy: std::f64::consts::PI,
            entropy_flog: -1.234567890123456789,
            dissipation: 1e-300,
            fisher_x: 0.1,
            fisher_v: 2.0,
            fisher_total: 2.1,
            lp2: 0.7,
            lp4: 0.8,
            lpinf: 0.9,
            moment_m: 1e10,
            moment_v_m: 3.3e9,
            moment_v_m2: 1.1,
            alpha_hat: 0.25,
            env_a: 1.0,
            env_b: 2.0,
            env_lapa: 3.0,
            min_f: -0.0,
            picard_iters: 7,
            negativity: false,
            degenerate: true,
            weighted_sobolev: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            generic_residual: 1e-15,
            l_ds_norm: 0.0,
            m_de_norm: 5e-324,
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let recs = vec![sample_record(0.0), sample_record(0.1 + 0.2)];
        let back = parse_csv(&to_csv(&recs)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.entropy_flog.to_bits(), b.entropy_flog.to_bits());
            assert_eq!(a.m_de_norm.to_bits(), b.m_de_norm.to_bits());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let s = to_csv(&[]);
        assert_eq!(s, format!("{}\n", COLUMNS.join(",")));
        assert!(parse_csv(&s).unwrap().is_empty());
    }

    #[test]
    fn lp_growth_of_constant_series_passes() {
        let s: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.1, 2.0)).collect();
        let r = lp_growth_check(&s).unwrap();
        assert!(r.pass);
        assert_eq!(r.c_hat, 0.0);
    }

    #[test]
    fn maxwellian_record_matches_closed_forms() {
        let g = PhaseGrid::new(1, 2, 4, 48, 1.0, 8.0).unwrap();
        let f = DistributionField::from_fn(g, |_, v| {
            let v2 = v[0] * v[0] + v[1] * v[1];
            (-0.5 * v2).exp() / (2.0 * std::f64::consts::PI) / 2.0
        });
        let ctx = DiagnosticsContext::new(
            g,
            ModelParams::default(),
            false,
            RecordOptions {
                ellipticity_samples: 100,
                generic: false,
                sobolev: false,
            },
        )
        .unwrap();
        let r = ctx.record(&f, 0.0, 0).unwrap();
        assert!((r.mass - 1.0).abs() < 1e-10);
        assert!((r.energy - 1.0).abs() < 1e-10);
        assert!((r.fisher_v - 2.0).abs() < 1e-8, "fisher_v = {}", r.fisher_v);
        assert!(r.fisher_x.abs() < 1e-20);
        assert!(r.alpha_hat > 0.0);
    }
}

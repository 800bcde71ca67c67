//! Run configuration (TOML) and initial data.

use crate::error::{Error, Result};
use crate::grid::{DistributionField, PhaseGrid};
use crate::integrator::SchemeConfig;
use crate::kernels::ModelParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dx: usize,
    pub dv: usize,
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.dx, self.dv, self.nx, self.nv, self.lx, self.lv)
    }
}

impl From<PhaseGrid> for GridSpec {
    fn from(g: PhaseGrid) -> Self {
        Self {
            dx: g.dx,
            dv: g.dv,
            nx: g.nx,
            nv: g.nv,
            lx: g.lx,
            lv: g.lv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialProfile {
    Uniform,
    /// `exp(-|x|^2 / (2 width^2))`.
    Gaussian,
    /// `1 + amplitude cos(pi x_1 / Lx)`.
    Cosine,
}

/// Initial datum, normalized to total `mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Maxwellian {
        #[serde(default = "one")]
        temperature: f64,
        #[serde(default)]
        bulk_velocity: [f64; 3],
        #[serde(default = "uniform")]
        profile: SpatialProfile,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    TwoBump {
        centers: [[f64; 3]; 2],
        weights: [f64; 2],
        #[serde(default = "one")]
        temperature: f64,
        #[serde(default = "uniform")]
        profile: SpatialProfile,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    File {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn uniform() -> SpatialProfile {
    SpatialProfile::Uniform
}

fn default_amplitude() -> f64 {
    0.5
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Maxwellian {
            temperature: 1.0,
            bulk_velocity: [0.0; 3],
            profile: SpatialProfile::Uniform,
            amplitude: default_amplitude(),
            width: 1.0,
            mass: 1.0,
        }
    }
}

fn profile_value(p: SpatialProfile, x: &[f64; 3], dx: usize, lx: f64, amplitude: f64, width: f64) -> f64 {
    match p {
        SpatialProfile::Uniform => 1.0,
        SpatialProfile::Gaussian => {
            let r2: f64 = x[..dx].iter().map(|c| c * c).sum();
            (-r2 / (2.0 * width * width)).exp()
        }
        SpatialProfile::Cosine => 1.0 + amplitude * (PI * x[0] / lx).cos(),
    }
}

fn gaussian_v(v: &[f64; 3], center: &[f64; 3], t: f64, dv: usize) -> f64 {
    let r2: f64 = (0..dv).map(|a| (v[a] - center[a]).powi(2)).sum();
    (-r2 / (2.0 * t)).exp() / (2.0 * PI * t).powf(dv as f64 / 2.0)
}

fn normalized(mut f: DistributionField, mass: f64) -> Result<DistributionField> {
    let m = f.mass();
    if !(m > 0.0) {
        return Err(Error::Degenerate("initial datum has zero mass on this grid".into()));
    }
    let s = mass / m;
    f.values.iter_mut().for_each(|v| *v *= s);
    Ok(f)
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        let check = |t: f64, amplitude: f64, width: f64, mass: f64, profile: SpatialProfile| -> Result<()> {
            if !(t > 0.0) {
                return Err(Error::Config(format!("temperature = {t} must be > 0")));
            }
            if !(mass > 0.0) {
                return Err(Error::Config(format!("mass = {mass} must be > 0")));
            }
            if !(width > 0.0) {
                return Err(Error::Config(format!("width = {width} must be > 0")));
            }
            if profile == SpatialProfile::Cosine && !(amplitude.abs() < 1.0) {
                return Err(Error::Config(format!(
                    "cosine amplitude = {amplitude} must satisfy |amplitude| < 1 to keep f > 0"
                )));
            }
            Ok(())
        };
        match self {
            InitialCondition::Maxwellian {
                temperature,
                amplitude,
                width,
                mass,
                profile,
                ..
            } => check(*temperature, *amplitude, *width, *mass, *profile),
            InitialCondition::TwoBump {
                weights,
                temperature,
                amplitude,
                width,
                mass,
                profile,
                ..
            } => {
                if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::Config(format!("two_bump weights {weights:?} must be >= 0 and not both zero")));
                }
                check(*temperature, *amplitude, *width, *mass, *profile)
            }
            InitialCondition::File { .. } => Ok(()),
        }
    }

    /// Sample on `grid`; relative file paths resolve against `base`.
    pub fn build(&self, grid: PhaseGrid, base: &Path) -> Result<DistributionField> {
        self.validate()?;
        match self {
            InitialCondition::Maxwellian {
                temperature,
                bulk_velocity,
                profile,
                amplitude,
                width,
                mass,
            } => {
                let f = DistributionField::from_fn(grid, |x, v| {
                    profile_value(*profile, &x, grid.dx, grid.lx, *amplitude, *width)
                        * gaussian_v(&v, bulk_velocity, *temperature, grid.dv)
                });
                normalized(f, *mass)
            }
            InitialCondition::TwoBump {
                centers,
                weights,
                temperature,
                profile,
                amplitude,
                width,
                mass,
            } => {
                let f = DistributionField::from_fn(grid, |x, v| {
                    profile_value(*profile, &x, grid.dx, grid.lx, *amplitude, *width)
                        * (weights[0] * gaussian_v(&v, &centers[0], *temperature, grid.dv)
                            + weights[1] * gaussian_v(&v, &centers[1], *temperature, grid.dv))
                });
                normalized(f, *mass)
            }
            InitialCondition::File { path } => {
                let p = if path.is_relative() { base.join(path) } else { path.clone() };
                let (f, _) = crate::io::read_fld(&p)?;
                if f.grid != grid {
                    return Err(Error::Config(format!(
                        "grid in {} does not match the configured grid",
                        p.display()
                    )));
                }
                Ok(f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub snapshots: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshots: true,
        }
    }
}

/// Everything one run needs. Every default is explicit after resolution, so
/// `run.json` echoes the complete configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 selects the number of available cores.
    #[serde(default)]
    pub threads: usize,
    /// Seed for the randomized probes.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub output: OutputSpec,
    /// Default suite for `flandau verify` when none is named.
    #[serde(default)]
    pub verify: Option<String>,
}

fn default_seed() -> u64 {
    20240601
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid.build()?;
        if g.dx > g.dv {
            return Err(Error::Config(format!(
                "dx = {} > dv = {} is not supported: transport pairs x-axis i with v_i",
                g.dx, g.dv
            )));
        }
        self.model.validate()?;
        self.scheme.validate(&self.model)?;
        self.initial.validate()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        self.grid.build()
    }

    pub fn initial_field(&self, base: &Path) -> Result<DistributionField> {
        self.initial.build(self.phase_grid()?, base)
    }
}

/// One `(delta, epsilon, tau)` entry per row; `#` starts a comment.
pub fn parse_schedule(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "schedule line {}: expected 3 values (delta, epsilon, tau), got {}",
                n + 1,
                parts.len()
            )));
        }
        let mut row = [0.0; 3];
        for (k, p) in parts.iter().enumerate() {
            row[k] = p
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("schedule line {}: {e}", n + 1)))?;
            if !(row[k] > 0.0) {
                return Err(Error::Config(format!("schedule line {}: values must be > 0", n + 1)));
            }
        }
        out.push((row[0], row[1], row[2]));
    }
    if out.is_empty() {
        return Err(Error::Config("schedule is empty".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\ndx = 1\ndv = 2\nnx = 8\nnv = 16\nlx = 3.0\nlv = 6.0\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.model, ModelParams::default());
        assert_eq!(c.threads, 0);
        let echo = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(echo, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}[model]\ngama = -1.0\n");
        assert!(matches!(RunConfig::from_toml_str(&text), Err(Error::Config(_))));
        let text = format!("{MINIMAL}[initial]\nkind = \"maxwellian\"\ntemprature = 2.0\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn maxwellian_has_requested_mass() {
        let text = format!("{MINIMAL}[initial]\nkind = \"maxwellian\"\nprofile = \"cosine\"\namplitude = 0.3\nmass = 2.5\n");
        let c = RunConfig::from_toml_str(&text).unwrap();
        let f = c.initial_field(Path::new(".")).unwrap();
        assert!((f.mass() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn schedule_parsing() {
        let s = parse_schedule("# d e t\n0.1, 0.1, 0.01\n0.05 0.05 0.005\n").unwrap();
        assert_eq!(s.len(), 2);
        assert!(parse_schedule("0.1, 0.1\n").is_err());
        assert!(parse_schedule("a b c\n").is_err());
    }
}

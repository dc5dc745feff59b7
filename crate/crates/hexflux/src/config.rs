//! JSON run configuration.
//!
//! The schema is strict: unknown keys anywhere in the file are rejected, so
//! typos fail loudly instead of silently running defaults. Every section has
//! sensible defaults; the smallest valid config is `{}`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub gas: GasConfig,
    pub scheme: SchemeConfig,
    pub time: TimeConfig,
    pub problem: ProblemConfig,
    /// Directory for CSV outputs; current directory when absent.
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub cells: [usize; 3],
    /// `[[lo_x, lo_y, lo_z], [hi_x, hi_y, hi_z]]`; problem default when absent.
    pub bounds: Option<[[f64; 3]; 2]>,
    /// Per-direction periodicity; problem default when absent.
    pub periodic: Option<[bool; 3]>,
    pub refine_levels: usize,
    pub refine_fraction: f64,
    pub seed: u64,
    /// Degree of the curved interface perturbation; 0 keeps faces planar.
    pub geometry_degree: usize,
    /// Solution degrees drawn per element (uniform choice from this list).
    pub degrees: Vec<usize>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            cells: [4, 4, 4],
            bounds: None,
            periodic: None,
            refine_levels: 1,
            refine_fraction: 0.3,
            seed: 2024,
            geometry_degree: 2,
            degrees: vec![2, 3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasConfig {
    pub gamma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Pr")]
    pub pr: f64,
    /// Dynamic viscosity; problems that fix a Reynolds number override it.
    pub mu: f64,
    /// Reference scales, kept for config compatibility (everything here is
    /// already nondimensional).
    #[serde(rename = "Tref")]
    pub t_ref: f64,
    pub rhoref: f64,
}

impl Default for GasConfig {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            r: 1.0,
            pr: 0.71,
            mu: 0.0,
            t_ref: 1.0,
            rhoref: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeMode {
    Euler,
    NavierStokes,
    Burgers,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Interface/boundary upwind dissipation (entropy-stable vs. -conservative).
    pub dissipation: bool,
    /// Include viscous terms (requires `mode = "navier-stokes"`).
    pub viscous: bool,
    pub ip_scale: f64,
    pub mode: SchemeMode,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dissipation: true,
            viscous: false,
            ip_scale: 1.0,
            mode: SchemeMode::Euler,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_final: f64,
    pub tol: f64,
    pub relaxation: bool,
    pub dt_initial: Option<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_final: 0.5,
            tol: 1e-8,
            relaxation: false,
            dt_initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Vortex,
    ViscousShock,
    Tgv,
    FreeStream,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub name: ProblemName,
    /// Vortex strength.
    pub eps: f64,
    /// Free-stream / reference Mach number.
    pub mach: Option<f64>,
    /// Advection angle in degrees (vortex).
    pub alpha_deg: f64,
    /// Reynolds number (viscous shock, Taylor-Green).
    pub reynolds: Option<f64>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            name: ProblemName::Vortex,
            eps: 5.0,
            mach: None,
            alpha_deg: 45.0,
            reynolds: None,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if m.cells.iter().any(|&c| c == 0) {
            return Err(Error::Config("mesh.cells entries must be positive".into()));
        }
        if m.degrees.is_empty() || m.degrees.iter().any(|&p| !(1..=13).contains(&p)) {
            return Err(Error::Config(
                "mesh.degrees must be a non-empty list of degrees in 1..=13".into(),
            ));
        }
        let pmin = *m.degrees.iter().min().unwrap();
        if m.geometry_degree > pmin {
            return Err(Error::Config(format!(
                "mesh.geometry_degree ({}) must not exceed the minimum solution degree ({pmin})",
                m.geometry_degree
            )));
        }
        if !(0.0..=1.0).contains(&m.refine_fraction) {
            return Err(Error::Config("mesh.refine_fraction must be in [0, 1]".into()));
        }
        if self.gas.gamma <= 1.0 || self.gas.r <= 0.0 {
            return Err(Error::Config("gas.gamma must exceed 1 and gas.R be positive".into()));
        }
        if self.scheme.viscous && self.scheme.mode != SchemeMode::NavierStokes {
            return Err(Error::Config(
                "scheme.viscous requires scheme.mode = \"navier-stokes\"".into(),
            ));
        }
        if self.scheme.mode == SchemeMode::Burgers {
            return Err(Error::Config(
                "scheme.mode = \"burgers\" is exercised by the operator verification suite \
                 (verify-operators), not by the run drivers"
                    .into(),
            ));
        }
        if self.time.t_final < 0.0 || self.time.tol <= 0.0 {
            return Err(Error::Config("time.t_final must be >= 0 and time.tol > 0".into()));
        }
        Ok(())
    }
}

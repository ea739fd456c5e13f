//! Run configuration: a JSON file of optional overrides laid over a
//! scenario preset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::Quality;
use crate::mesh::{Rect, SideTags};
use crate::scenario::{Scenario, ScenarioId};
use crate::time::SolverParams;
use crate::wlr::RefinePolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid value for `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    /// WLR with the per-level threshold `ω·2^m`.
    #[default]
    Wlr,
    /// WLR with the plain threshold `ω`.
    WlrPlain,
    /// Squared unlimited surface gradient against `0.0005·2^m`.
    Gradient,
}

/// Contents of a config file. Every field except `scenario` falls back to
/// the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioId>,
    pub g: Option<f64>,
    pub domain: Option<Rect>,
    pub base_n: Option<usize>,
    pub max_level: Option<u32>,
    pub sigma_tol: Option<f64>,
    pub c_coarsen: Option<f64>,
    pub sigma_flux: Option<f64>,
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    pub kappa_dry: Option<f64>,
    pub n_b: Option<f64>,
    pub t_end: Option<f64>,
    pub output_interval: Option<f64>,
    pub bc: Option<SideTags>,
    pub indicator: Option<Indicator>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub perturbation: Option<f64>,
    pub cfl: Option<f64>,
    pub gradient_threshold: Option<f64>,
}

impl RunConfig {
    pub fn for_scenario(id: ScenarioId) -> Self {
        RunConfig {
            scenario: Some(id),
            ..Default::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn resolve(&self) -> Result<Settings, ConfigError> {
        let id = self.scenario.ok_or(ConfigError::Invalid {
            field: "scenario",
            msg: "missing".into(),
        })?;
        let mut sc = Scenario::preset(id);
        if let Some(d) = self.domain {
            sc.domain = d;
        }
        if let Some(b) = self.bc {
            sc.sides = b;
        }
        if let Some(p) = self.perturbation {
            sc.perturbation = p;
        }
        let g = self.g.unwrap_or(sc.g);
        let t_end = self.t_end.unwrap_or(sc.t_end);
        let s = Settings {
            base_n: self.base_n.unwrap_or(sc.base_n),
            max_level: self.max_level.unwrap_or(sc.max_level),
            sigma_tol: self.sigma_tol.unwrap_or(sc.sigma_tol),
            c_coarsen: self.c_coarsen.unwrap_or(0.1),
            t_end,
            output_interval: self.output_interval,
            indicator: self.indicator.unwrap_or_default(),
            gradient_threshold: self.gradient_threshold.unwrap_or(0.0005),
            threads: self.threads,
            output_dir: self.output_dir.clone(),
            quality: Quality::default(),
            solver: SolverParams {
                g,
                sigma_flux: self.sigma_flux.unwrap_or(1e-6),
                eps: self.eps.unwrap_or(sc.eps),
                tau: self.tau,
                kappa_dry: self.kappa_dry,
                n_b: self.n_b.unwrap_or(sc.n_b),
                cfl: self.cfl.unwrap_or(0.9),
                ..SolverParams::default()
            },
            scenario: sc,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Fully resolved run parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub scenario: Scenario,
    pub base_n: usize,
    pub max_level: u32,
    pub sigma_tol: f64,
    pub c_coarsen: f64,
    pub t_end: f64,
    pub output_interval: Option<f64>,
    pub indicator: Indicator,
    pub gradient_threshold: f64,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub quality: Quality,
    pub solver: SolverParams,
}

impl Settings {
    pub fn preset(id: ScenarioId) -> Self {
        RunConfig::for_scenario(id)
            .resolve()
            .expect("presets are valid")
    }

    pub fn policy(&self) -> RefinePolicy {
        match self.indicator {
            Indicator::WlrPlain => RefinePolicy::Plain,
            _ => RefinePolicy::Leveled,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, msg: &str| {
            Err(ConfigError::Invalid {
                field,
                msg: msg.to_string(),
            })
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.solver.g) {
            return bad("g", "must be positive");
        }
        if self.base_n == 0 {
            return bad("base_n", "must be at least 1");
        }
        if !(self.sigma_tol > 0.0 && self.sigma_tol < 1.0) {
            return bad("sigma_tol", "must lie in (0, 1)");
        }
        if !(self.c_coarsen >= 0.0 && self.c_coarsen < 1.0) {
            return bad("c_coarsen", "must lie in [0, 1)");
        }
        if !pos(self.solver.sigma_flux) {
            return bad("sigma_flux", "must be positive");
        }
        if !pos(self.solver.eps) {
            return bad("eps", "must be positive");
        }
        if self.solver.tau.is_some_and(|t| !pos(t)) {
            return bad("tau", "must be positive");
        }
        if self
            .solver
            .kappa_dry
            .is_some_and(|k| !(k.is_finite() && k >= 0.0))
        {
            return bad("kappa_dry", "must be non-negative");
        }
        if !(self.solver.n_b.is_finite() && self.solver.n_b >= 0.0) {
            return bad("n_b", "must be non-negative");
        }
        if !pos(self.t_end) {
            return bad("t_end", "must be positive");
        }
        if self.output_interval.is_some_and(|d| !pos(d)) {
            return bad("output_interval", "must be positive");
        }
        if !(self.solver.cfl > 0.0 && self.solver.cfl <= 1.0) {
            return bad("cfl", "must lie in (0, 1]");
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        let d = self.scenario.domain;
        if !(d.x1 > d.x0 && d.y1 > d.y0) {
            return bad("domain", "must have positive extent");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_on_preset() {
        let c = RunConfig::parse(r#"{"scenario": "ex1", "max_level": 0, "t_end": 0.01}"#).unwrap();
        let s = c.resolve().unwrap();
        assert_eq!(s.max_level, 0);
        assert_eq!(s.t_end, 0.01);
        assert_eq!(s.solver.g, 1.0);
        assert_eq!(s.sigma_tol, 0.01);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse(r#"{"scenario": "ex1", "levels": 2}"#).is_err());
        assert!(RunConfig::parse(r#"{"scenario": "ex9"}"#).is_err());
    }

    #[test]
    fn invalid_values() {
        let c = RunConfig {
            sigma_tol: Some(1.5),
            ..RunConfig::for_scenario(ScenarioId::Ex1)
        };
        assert!(matches!(
            c.resolve(),
            Err(ConfigError::Invalid {
                field: "sigma_tol",
                ..
            })
        ));
        assert!(RunConfig::default().resolve().is_err());
    }

    #[test]
    fn boundary_override() {
        let c = RunConfig::parse(
            r#"{"scenario": "ex3_dambreak", "n_b": 0.0,
                "bc": {"left": "wall", "right": "wall", "bottom": "wall", "top": "wall"}}"#,
        )
        .unwrap();
        let s = c.resolve().unwrap();
        assert_eq!(
            s.scenario.sides,
            SideTags::all(crate::mesh::BoundaryTag::Wall)
        );
        assert_eq!(s.solver.n_b, 0.0);
    }
}

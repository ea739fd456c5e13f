//! Benchmark presets: bottom, initial data, boundaries and default
//! parameters of the five test problems.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{BoundaryTag, Rect, SideTags};

#[derive(Debug, Error, PartialEq)]
#[error("unknown scenario `{0}` (expected ex1, ex2_tiny, ex2_perturb, ex2_island or ex3_dambreak)")]
pub struct UnknownScenario(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Ex1,
    Ex2Tiny,
    Ex2Perturb,
    Ex2Island,
    Ex3Dambreak,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::Ex1,
        ScenarioId::Ex2Tiny,
        ScenarioId::Ex2Perturb,
        ScenarioId::Ex2Island,
        ScenarioId::Ex3Dambreak,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Ex1 => "ex1",
            ScenarioId::Ex2Tiny => "ex2_tiny",
            ScenarioId::Ex2Perturb => "ex2_perturb",
            ScenarioId::Ex2Island => "ex2_island",
            ScenarioId::Ex3Dambreak => "ex3_dambreak",
        }
    }

    pub fn preset(self) -> Scenario {
        Scenario::preset(self)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = UnknownScenario;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| UnknownScenario(s.to_string()))
    }
}

/// Everything a scenario fixes before user overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub domain: Rect,
    pub sides: SideTags,
    pub g: f64,
    pub eps: f64,
    pub n_b: f64,
    /// Reference surface for the `max_dev` diagnostic.
    pub w_eq: f64,
    pub perturbation: f64,
    pub base_n: usize,
    pub max_level: u32,
    pub sigma_tol: f64,
    pub t_end: f64,
}

pub fn ex1_bottom(x: f64, y: f64) -> f64 {
    0.5 * (-25.0 * (x - 1.0).powi(2) - 50.0 * (y - 0.5).powi(2)).exp()
}

pub fn ex2_bottom(x: f64, y: f64) -> f64 {
    0.8 * (-5.0 * (x - 0.9).powi(2) - 50.0 * (y - 0.5).powi(2)).exp()
}

pub fn island_bottom(x: f64, y: f64) -> f64 {
    let r = (x - 0.5).hypot(y - 0.5);
    if r <= 0.1 {
        1.1
    } else if r <= 0.2 {
        11.0 * (0.2 - r)
    } else {
        0.0
    }
}

pub fn dambreak_bottom(x: f64, y: f64) -> f64 {
    let a = 0.5 * (-8.0 * (x - 2.0).powi(2) - 10.0 * (y - 3.0).powi(2)).exp();
    let b = 0.2 * (-3.0 * (x - 4.0).powi(2) - 4.0 * (y - 4.8).powi(2)).exp();
    let c = 0.2 * (-3.0 * (x - 4.0).powi(2) - 4.0 * (y - 1.2).powi(2)).exp();
    a.max(b).max(c)
}

impl Scenario {
    pub fn preset(id: ScenarioId) -> Self {
        let channel = Rect::new(0.0, 2.0, 0.0, 1.0);
        let ex2_sides = SideTags {
            left: BoundaryTag::Extrapolate,
            right: BoundaryTag::Extrapolate,
            bottom: BoundaryTag::Periodic,
            top: BoundaryTag::Periodic,
        };
        match id {
            ScenarioId::Ex1 => Scenario {
                id,
                domain: channel,
                sides: SideTags::all(BoundaryTag::Extrapolate),
                g: 1.0,
                eps: 1e-4,
                n_b: 0.0,
                w_eq: 1.0,
                perturbation: 0.0,
                base_n: 25,
                max_level: 1,
                sigma_tol: 0.01,
                t_end: 0.07,
            },
            ScenarioId::Ex2Tiny => Scenario {
                id,
                domain: channel,
                sides: ex2_sides,
                g: 1.0,
                eps: 1e-4,
                n_b: 0.0,
                w_eq: 1.0,
                perturbation: 1e-14,
                base_n: 25,
                max_level: 2,
                sigma_tol: 0.1,
                t_end: 0.1,
            },
            ScenarioId::Ex2Perturb => Scenario {
                id,
                domain: channel,
                sides: ex2_sides,
                g: 1.0,
                eps: 1e-4,
                n_b: 0.0,
                w_eq: 1.0,
                perturbation: 1e-2,
                base_n: 50,
                max_level: 1,
                sigma_tol: 0.1,
                t_end: 0.9,
            },
            ScenarioId::Ex2Island => Scenario {
                id,
                domain: channel,
                sides: SideTags::all(BoundaryTag::Neumann),
                g: 9.8,
                eps: 1e-2,
                n_b: 0.0,
                w_eq: 1.0,
                perturbation: 1e-2,
                base_n: 100,
                max_level: 1,
                sigma_tol: 0.001,
                t_end: 0.1,
            },
            ScenarioId::Ex3Dambreak => Scenario {
                id,
                domain: Rect::new(0.0, 6.0, 0.0, 6.0),
                sides: SideTags {
                    left: BoundaryTag::Wall,
                    right: BoundaryTag::Neumann,
                    bottom: BoundaryTag::Wall,
                    top: BoundaryTag::Wall,
                },
                g: 9.8,
                eps: 1e-4,
                n_b: 0.01,
                w_eq: 0.5,
                perturbation: 0.0,
                base_n: 50,
                max_level: 1,
                sigma_tol: 0.01,
                t_end: 1.0,
            },
        }
    }

    pub fn bottom(&self, x: f64, y: f64) -> f64 {
        match self.id {
            ScenarioId::Ex1 => ex1_bottom(x, y),
            ScenarioId::Ex2Tiny | ScenarioId::Ex2Perturb => ex2_bottom(x, y),
            ScenarioId::Ex2Island => island_bottom(x, y),
            ScenarioId::Ex3Dambreak => dambreak_bottom(x, y),
        }
    }

    /// Initial `(level, u, v)` at a cell centroid. The cell average of `h`
    /// is the volume below `level` over the cell's linear bottom, so dry
    /// ground (level below the bottom) starts exactly dry.
    pub fn initial(&self, x: f64, _y: f64) -> (f64, f64, f64) {
        let e = self.perturbation;
        match self.id {
            ScenarioId::Ex1 => (1.0, 0.3, 0.0),
            ScenarioId::Ex2Tiny | ScenarioId::Ex2Perturb => {
                (if x > 0.05 && x < 0.15 { 1.0 + e } else { 1.0 }, 0.0, 0.0)
            }
            ScenarioId::Ex2Island => (if x > 0.1 && x < 0.2 { 1.0 + e } else { 1.0 }, 0.0, 0.0),
            ScenarioId::Ex3Dambreak => (if x < 1.0 { 0.5 } else { f64::NEG_INFINITY }, 0.0, 0.0),
        }
    }
}

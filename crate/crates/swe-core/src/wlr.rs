//! Weak-local-residual error estimate of the mass equation, cell
//! indicators and refinement flags, plus the water-surface gradient
//! indicator used as a baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::CellFlag;
use crate::mesh::{BoundaryTag, Triangulation};
use crate::reconstruction::{unlimited_w_gradient, CellCenter, StateField};

#[derive(Debug, Error, PartialEq)]
pub enum WlrError {
    #[error("states have {a} and {b} cells but the mesh has {n}")]
    Generation { a: usize, b: usize, n: usize },
}

/// Gradient `(a, b)` of the hat function equal to 1 at `pi` and 0 at `p2`, `p3`.
#[inline]
pub fn hat_gradient(pi: [f64; 2], p2: [f64; 2], p3: [f64; 2]) -> [f64; 2] {
    let d = (p3[1] - pi[1]) * (p2[0] - pi[0]) - (p2[1] - pi[1]) * (p3[0] - pi[0]);
    [(p2[1] - p3[1]) / d, (p3[0] - p2[0]) / d]
}

/// Hat gradients of every vertex on every incident cell, stored per cell:
/// `grads[c][k]` belongs to vertex `k` of cell `c`.
#[derive(Clone, Debug)]
pub struct HatGradients {
    pub grads: Vec<[[f64; 2]; 3]>,
    /// Vertices on the domain boundary. Their hats do not vanish on the
    /// boundary, so they are not admissible test functions and get `E = 0`.
    pub boundary: Vec<bool>,
}

pub fn hat_gradients(tri: &Triangulation) -> HatGradients {
    let grads = (0..tri.num_cells())
        .map(|c| {
            let p = tri.corners(c);
            [0, 1, 2].map(|k| hat_gradient(p[k], p[(k + 1) % 3], p[(k + 2) % 3]))
        })
        .collect();
    let mut boundary = vec![false; tri.num_vertices()];
    for c in &tri.cells {
        for (k, e) in c.edges.iter().enumerate() {
            if e.tag != BoundaryTag::Interior {
                boundary[c.vertices[(k + 1) % 3]] = true;
                boundary[c.vertices[(k + 2) % 3]] = true;
            }
        }
    }
    HatGradients { grads, boundary }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WlrField {
    pub vertex_error: Vec<f64>,
    pub cell_error: Vec<f64>,
    /// `Δ = max(max r_jk, Δt)`.
    pub delta: f64,
}

/// `E_i = (𝒰_i + ℱ_i + 𝒢_i)/Δ` at every vertex.
pub fn wlr_vertex_errors(
    tri: &Triangulation,
    hats: &HatGradients,
    s_n: &StateField,
    s_np1: &StateField,
    dt: f64,
) -> Result<WlrField, WlrError> {
    let n = tri.num_cells();
    if s_n.len() != n || s_np1.len() != n {
        return Err(WlrError::Generation {
            a: s_n.len(),
            b: s_np1.len(),
            n,
        });
    }
    let delta = tri.max_altitude().max(dt);
    let mut e = vec![0.0; tri.num_vertices()];
    for (c, cell) in tri.cells.iter().enumerate() {
        let (u0, u1) = (s_n.u[c], s_np1.u[c]);
        let mass = cell.area / 3.0 * (u0[0] - u1[0]);
        let qx = 0.5 * dt * cell.area * (u0[1] + u1[1]);
        let qy = 0.5 * dt * cell.area * (u0[2] + u1[2]);
        for k in 0..3 {
            let g = hats.grads[c][k];
            e[cell.vertices[k]] += mass + g[0] * qx + g[1] * qy;
        }
    }
    for (x, &b) in e.iter_mut().zip(&hats.boundary) {
        *x = if b { 0.0 } else { *x / delta };
    }
    let cell_error = cell_indicator(tri, &e);
    Ok(WlrField {
        vertex_error: e,
        cell_error,
        delta,
    })
}

/// `e_j = max_κ |E(V_jκ)|`.
pub fn cell_indicator(tri: &Triangulation, vertex_error: &[f64]) -> Vec<f64> {
    tri.cells
        .iter()
        .map(|c| {
            c.vertices
                .iter()
                .map(|&v| vertex_error[v].abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefinePolicy {
    /// Refine if `e > ω·2^m`.
    #[default]
    Leveled,
    /// Refine if `e > ω`.
    Plain,
}

/// Flags from the cell indicator; returns the flags and `ω = σ_tol·max e`.
pub fn flag_cells(
    e: &[f64],
    sigma_tol: f64,
    max_level: u32,
    levels: &[u32],
    c_coarsen: f64,
    policy: RefinePolicy,
) -> (Vec<CellFlag>, f64) {
    let omega = sigma_tol * e.iter().copied().fold(0.0, f64::max);
    if !(omega > 0.0) {
        return (vec![CellFlag::Keep; e.len()], 0.0);
    }
    let flags = e
        .iter()
        .zip(levels)
        .map(|(&ej, &m)| {
            let thr = match policy {
                RefinePolicy::Leveled => omega * f64::from(1u32 << m.min(30)),
                RefinePolicy::Plain => omega,
            };
            if ej > thr && m < max_level {
                CellFlag::Refine
            } else if ej < c_coarsen * omega {
                CellFlag::Coarsen
            } else {
                CellFlag::Keep
            }
        })
        .collect();
    (flags, omega)
}

/// `(w_x)² + (w_y)²` of the unlimited least-squares surface gradient.
pub fn gradient_indicator(tri: &Triangulation, centers: &[CellCenter]) -> Vec<f64> {
    (0..tri.num_cells())
        .map(|j| {
            let g = unlimited_w_gradient(tri, j, centers);
            g[0] * g[0] + g[1] * g[1]
        })
        .collect()
}

/// Refine if the indicator exceeds `threshold·2^m`, coarsen below
/// `c_coarsen` times that.
pub fn flag_by_gradient(
    ind: &[f64],
    threshold: f64,
    max_level: u32,
    levels: &[u32],
    c_coarsen: f64,
) -> Vec<CellFlag> {
    ind.iter()
        .zip(levels)
        .map(|(&x, &m)| {
            let thr = threshold * f64::from(1u32 << m.min(30));
            if x > thr && m < max_level {
                CellFlag::Refine
            } else if x < c_coarsen * thr {
                CellFlag::Coarsen
            } else {
                CellFlag::Keep
            }
        })
        .collect()
}

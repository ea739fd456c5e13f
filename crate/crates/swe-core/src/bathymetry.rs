//! Continuous piecewise-linear bottom carried on mesh vertices.

use thiserror::Error;

use crate::mesh::{barycentric, Triangulation};

#[derive(Debug, Error, PartialEq)]
pub enum BathymetryError {
    #[error("bottom elevation at vertex {vertex} is not finite")]
    NonFinite { vertex: usize },
    #[error("expected {expected} vertex values, got {got}")]
    Count { expected: usize, got: usize },
    #[error("new vertex {vertex} references parent vertex {parent} outside the parent table")]
    OutsideParent { vertex: usize, parent: usize },
}

/// Where a vertex of a refined mesh comes from, in terms of parent vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VertexOrigin {
    Inherited(usize),
    Midpoint(usize, usize),
    /// Point `a + t (b - a)` on the parent edge `(a, b)`.
    OnEdge {
        a: usize,
        b: usize,
        t: f64,
    },
}

#[derive(Clone, Debug)]
pub struct Bathymetry {
    /// `B̂` per vertex.
    pub vertex_values: Vec<f64>,
    /// `B_j`, value at the centroid.
    pub cell_mean: Vec<f64>,
    /// `B_jk`, value at the midpoint of edge k.
    pub edge_values: Vec<[f64; 3]>,
    /// `(B_x, B_y)` of the plane on each cell.
    pub gradient: Vec<[f64; 2]>,
    /// Vertex values of each cell in storage order.
    pub corner_values: Vec<[f64; 3]>,
    pub max_abs: f64,
}

impl Bathymetry {
    pub fn from_vertex_values(
        tri: &Triangulation,
        values: Vec<f64>,
    ) -> Result<Self, BathymetryError> {
        if values.len() != tri.num_vertices() {
            return Err(BathymetryError::Count {
                expected: tri.num_vertices(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().position(|b| !b.is_finite()) {
            return Err(BathymetryError::NonFinite { vertex: v });
        }
        let n = tri.num_cells();
        let mut cell_mean = Vec::with_capacity(n);
        let mut edge_values = Vec::with_capacity(n);
        let mut gradient = Vec::with_capacity(n);
        let mut corner_values = Vec::with_capacity(n);
        for c in &tri.cells {
            let b = [
                values[c.vertices[0]],
                values[c.vertices[1]],
                values[c.vertices[2]],
            ];
            cell_mean.push((b[0] + b[1] + b[2]) / 3.0);
            edge_values.push([
                (b[1] + b[2]) * 0.5,
                (b[2] + b[0]) * 0.5,
                (b[0] + b[1]) * 0.5,
            ]);
            gradient.push(plane_gradient(tri.corners(c.id), b));
            corner_values.push(b);
        }
        let max_abs = values.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        Ok(Bathymetry {
            vertex_values: values,
            cell_mean,
            edge_values,
            gradient,
            corner_values,
            max_abs,
        })
    }

    /// Sample an analytic bottom at the vertices of `tri`.
    pub fn from_function(
        tri: &Triangulation,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, BathymetryError> {
        let values = tri.vertices.iter().map(|v| f(v.x, v.y)).collect();
        Self::from_vertex_values(tri, values)
    }

    /// Largest vertex value of cell `j`.
    #[inline]
    pub fn cell_max(&self, j: usize) -> f64 {
        let b = self.corner_values[j];
        b[0].max(b[1]).max(b[2])
    }

    #[inline]
    pub fn cell_min(&self, j: usize) -> f64 {
        let b = self.corner_values[j];
        b[0].min(b[1]).min(b[2])
    }

    /// `B̃` at a point of cell `j`, by barycentric interpolation.
    pub fn eval(&self, tri: &Triangulation, j: usize, p: [f64; 2]) -> f64 {
        let l = barycentric(tri.corners(j), p);
        let b = self.corner_values[j];
        l[0] * b[0] + l[1] * b[1] + l[2] * b[2]
    }

    /// Dry threshold `κ_dry = 1e-12·max(1, max|B|)`.
    pub fn kappa_dry(&self) -> f64 {
        1e-12 * self.max_abs.max(1.0)
    }
}

/// Gradient of the plane through three points with the given values.
pub fn plane_gradient(p: [[f64; 2]; 3], b: [f64; 3]) -> [f64; 2] {
    let (x1, y1) = (p[1][0] - p[0][0], p[1][1] - p[0][1]);
    let (x2, y2) = (p[2][0] - p[0][0], p[2][1] - p[0][1]);
    let (d1, d2) = (b[1] - b[0], b[2] - b[0]);
    let det = x1 * y2 - x2 * y1;
    [(d1 * y2 - d2 * y1) / det, (x1 * d2 - x2 * d1) / det]
}

/// Vertex values of a refined mesh from the parent table, never resampling
/// the analytic bottom.
pub fn refine_bathymetry(
    parent: &[f64],
    origins: &[VertexOrigin],
) -> Result<Vec<f64>, BathymetryError> {
    let get = |v: usize, p: usize| {
        parent
            .get(p)
            .copied()
            .ok_or(BathymetryError::OutsideParent {
                vertex: v,
                parent: p,
            })
    };
    origins
        .iter()
        .enumerate()
        .map(|(v, o)| match *o {
            VertexOrigin::Inherited(p) => get(v, p),
            VertexOrigin::Midpoint(a, b) => Ok((get(v, a)? + get(v, b)?) * 0.5),
            VertexOrigin::OnEdge { a, b, t } => {
                let (ba, bb) = (get(v, a)?, get(v, b)?);
                Ok(ba + t * (bb - ba))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_mesh, BoundaryTag, Rect, SideTags};

    fn simplex() -> Triangulation {
        Triangulation::build(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![[BoundaryTag::Wall; 3]],
        )
        .unwrap()
    }

    #[test]
    fn zero_bottom() {
        let t = simplex();
        let b = Bathymetry::from_function(&t, |_, _| 0.0).unwrap();
        assert_eq!(b.cell_mean[0], 0.0);
        assert_eq!(b.edge_values[0], [0.0; 3]);
        assert_eq!(b.gradient[0], [0.0, 0.0]);
    }

    #[test]
    fn linear_is_reproduced() {
        let t = simplex();
        let b = Bathymetry::from_function(&t, |x, _| x).unwrap();
        assert!((b.gradient[0][0] - 1.0).abs() < 1e-15 && b.gradient[0][1].abs() < 1e-15);
        assert!((b.cell_mean[0] - 1.0 / 3.0).abs() < 1e-16);
        assert!((b.eval(&t, 0, [0.25, 0.5]) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn bump_mean_is_vertex_average() {
        let bump =
            |x: f64, y: f64| 0.5 * (-25.0 * (x - 1.0).powi(2) - 50.0 * (y - 0.5).powi(2)).exp();
        let t = uniform_mesh(
            &Rect::new(0.0, 2.0, 0.0, 1.0),
            25,
            25,
            &SideTags::all(BoundaryTag::Extrapolate),
        )
        .unwrap();
        let b = Bathymetry::from_function(&t, bump).unwrap();
        let j = t.locate([1.0, 0.5]).unwrap();
        let s: f64 = t.cells[j]
            .vertices
            .iter()
            .map(|&v| bump(t.vertices[v].x, t.vertices[v].y))
            .sum();
        assert_eq!(b.cell_mean[j], s / 3.0);
    }

    #[test]
    fn rejects_nan() {
        let t = simplex();
        assert_eq!(
            Bathymetry::from_vertex_values(&t, vec![0.0, f64::NAN, 1.0]).unwrap_err(),
            BathymetryError::NonFinite { vertex: 1 }
        );
    }

    #[test]
    fn refined_values() {
        let parent = [0.0, 1.0, 4.0];
        let v = refine_bathymetry(
            &parent,
            &[
                VertexOrigin::Inherited(2),
                VertexOrigin::Midpoint(0, 1),
                VertexOrigin::OnEdge {
                    a: 0,
                    b: 2,
                    t: 0.25,
                },
            ],
        )
        .unwrap();
        assert_eq!(v, vec![4.0, 0.5, 1.0]);
        assert!(refine_bathymetry(&parent, &[VertexOrigin::Inherited(7)]).is_err());
    }
}

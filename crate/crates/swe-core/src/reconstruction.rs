//! Piecewise-linear reconstruction of `(w, u, v)` with wet/dry correction.
//!
//! Reconstruction is split into two passes so neighbors can be looked up
//! cheaply: [`cell_center`] classifies a cell and computes its centre values
//! (wet level, desingularized velocity), then [`reconstruct_cell`] builds the
//! limited gradients from the centres of the cell and its neighbors.

use crate::bathymetry::Bathymetry;
use crate::flux::{Conserved, SideState};
use crate::mesh::{Neighbor, Triangulation};

/// Per-cell conserved averages aligned with one triangulation generation.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField {
    pub u: Vec<Conserved>,
    pub generation: u64,
}

impl StateField {
    pub fn new(u: Vec<Conserved>, generation: u64) -> Self {
        StateField { u, generation }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `Σ|T|·(w̄, hū, hv̄)`.
    pub fn integrals(&self, tri: &Triangulation) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (c, u) in tri.cells.iter().zip(&self.u) {
            for i in 0..3 {
                s[i] += c.area * u[i];
            }
        }
        s
    }

    /// Water volume `Σ|T|(w̄ − B_j)`.
    pub fn volume(&self, tri: &Triangulation, bathy: &Bathymetry) -> f64 {
        tri.cells
            .iter()
            .zip(&self.u)
            .map(|(c, u)| c.area * (u[0] - bathy.cell_mean[c.id]))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconParams {
    /// Depth cutoff of the desingularization.
    pub eps: f64,
    /// `τ`, an area squared.
    pub tau: f64,
    pub kappa_dry: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Wetness {
    #[default]
    Dry,
    Partial,
    Full,
}

#[inline]
pub fn classify(wbar: f64, bj: f64, bmax: f64, kappa_dry: f64) -> Wetness {
    if wbar <= bj + kappa_dry {
        Wetness::Dry
    } else if wbar >= bmax {
        Wetness::Full
    } else {
        Wetness::Partial
    }
}

pub fn classify_wetness(bathy: &Bathymetry, state: &StateField, kappa_dry: f64) -> Vec<Wetness> {
    state
        .u
        .iter()
        .enumerate()
        .map(|(j, u)| classify(u[0], bathy.cell_mean[j], bathy.cell_max(j), kappa_dry))
        .collect()
}

/// `u = √2·h·q / √(h⁴ + max(h⁴, τ))`, zero at or below the cutoff `eps`.
#[inline]
pub fn desingularized_velocity(h: f64, q: f64, tau: f64, eps: f64) -> f64 {
    if h <= eps {
        return 0.0;
    }
    let h4 = h * h * h * h;
    std::f64::consts::SQRT_2 * h * q / (h4 + h4.max(tau)).sqrt()
}

/// Water volume `∫_T max(c − B̃, 0)` for a linear bottom with vertex values `b`.
pub fn wet_volume(b: [f64; 3], area: f64, c: f64) -> f64 {
    let mut s = b;
    s.sort_by(f64::total_cmp);
    let [b1, b2, b3] = s;
    if c <= b1 {
        0.0
    } else if c >= b3 {
        area * (c - (b1 + b2 + b3) / 3.0)
    } else if c <= b2 {
        area * (c - b1).powi(3) / (3.0 * (b2 - b1) * (b3 - b1))
    } else {
        area * (c - (b1 + b2 + b3) / 3.0) + area * (b3 - c).powi(3) / (3.0 * (b3 - b1) * (b3 - b2))
    }
}

/// Flat wet level `c` of a partially flooded cell holding mean depth `hbar`.
pub fn wet_level(b: [f64; 3], area: f64, hbar: f64) -> f64 {
    let target = area * hbar;
    let mut lo = b[0].min(b[1]).min(b[2]);
    let mut hi = b[0].max(b[1]).max(b[2]);
    if target <= 0.0 {
        return lo;
    }
    if wet_volume(b, area, hi) <= target {
        return hi + (target - wet_volume(b, area, hi)) / area;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if wet_volume(b, area, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (wet_volume(b, area, lo) - target).abs() <= (wet_volume(b, area, hi) - target).abs() {
        lo
    } else {
        hi
    }
}

/// Points where the wet level crosses the cell boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shoreline {
    /// `(edge index, parameter along the edge from vertex (k+1)%3, point)`.
    pub ends: [(usize, f64, [f64; 2]); 2],
}

pub fn shoreline(corners: [[f64; 2]; 3], b: [f64; 3], c: f64) -> Option<Shoreline> {
    let mut ends = Vec::with_capacity(2);
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let (bp, bq) = (b[i], b[j]);
        if (bp - c) * (bq - c) < 0.0 {
            let t = (c - bp) / (bq - bp);
            let (p, q) = (corners[i], corners[j]);
            ends.push((k, t, [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]));
        }
    }
    if ends.len() == 2 {
        Some(Shoreline {
            ends: [ends[0], ends[1]],
        })
    } else {
        None
    }
}

/// Classification and centre values of one cell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellCenter {
    pub wetness: Wetness,
    /// `w̄` for Full cells, the flat wet level for Partial cells, `B_j` for Dry.
    pub level: f64,
    pub vel: [f64; 2],
}

pub fn cell_center(
    bathy: &Bathymetry,
    j: usize,
    area: f64,
    u: Conserved,
    p: &ReconParams,
) -> CellCenter {
    let bj = bathy.cell_mean[j];
    let wetness = classify(u[0], bj, bathy.cell_max(j), p.kappa_dry);
    let h = u[0] - bj;
    match wetness {
        Wetness::Dry => CellCenter {
            wetness,
            level: bj,
            vel: [0.0, 0.0],
        },
        Wetness::Partial => CellCenter {
            wetness,
            level: wet_level(bathy.corner_values[j], area, h),
            vel: [
                desingularized_velocity(h, u[1], p.tau, p.eps),
                desingularized_velocity(h, u[2], p.tau, p.eps),
            ],
        },
        Wetness::Full => CellCenter {
            wetness,
            level: u[0],
            vel: [
                desingularized_velocity(h, u[1], p.tau, p.eps),
                desingularized_velocity(h, u[2], p.tau, p.eps),
            ],
        },
    }
}

/// Reconstruction of one cell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellRecon {
    pub wetness: Wetness,
    pub level: f64,
    pub centroid: [f64; 2],
    pub grad_w: [f64; 2],
    pub vel: [f64; 2],
    pub grad_u: [f64; 2],
    pub grad_v: [f64; 2],
}

impl CellRecon {
    /// Water surface at a point with bottom value `b`.
    #[inline]
    pub fn surface(&self, p: [f64; 2], b: f64) -> f64 {
        match self.wetness {
            Wetness::Dry => b,
            Wetness::Partial => self.level.max(b),
            Wetness::Full => {
                let d = [p[0] - self.centroid[0], p[1] - self.centroid[1]];
                (self.level + self.grad_w[0] * d[0] + self.grad_w[1] * d[1]).max(b)
            }
        }
    }

    /// Point state at `p` with bottom value `b`.
    #[inline]
    pub fn point(&self, p: [f64; 2], b: f64) -> SideState {
        let w = self.surface(p, b);
        let h = w - b;
        if h <= 0.0 {
            return SideState {
                w,
                h: 0.0,
                u: 0.0,
                v: 0.0,
            };
        }
        let d = [p[0] - self.centroid[0], p[1] - self.centroid[1]];
        SideState {
            w,
            h,
            u: self.vel[0] + self.grad_u[0] * d[0] + self.grad_u[1] * d[1],
            v: self.vel[1] + self.grad_v[0] * d[0] + self.grad_v[1] * d[1],
        }
    }

    /// Surface slope used by the vertex term of the source quadrature.
    #[inline]
    pub fn source_slope(&self) -> [f64; 2] {
        match self.wetness {
            Wetness::Full => self.grad_w,
            _ => [0.0, 0.0],
        }
    }
}

/// Unweighted least-squares gradient from centre offsets `d_i` and value
/// differences `δ_i`. `None` when the stencil does not span the plane.
pub fn lsq_gradient(offsets: &[[f64; 2]], deltas: &[f64]) -> Option<[f64; 2]> {
    if offsets.len() < 2 {
        return None;
    }
    let (mut sxx, mut sxy, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (d, &v) in offsets.iter().zip(deltas) {
        sxx += d[0] * d[0];
        sxy += d[0] * d[1];
        syy += d[1] * d[1];
        sx += d[0] * v;
        sy += d[1] * v;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det.abs() > 1e-12 * (sxx * syy).max(f64::MIN_POSITIVE)) {
        return None;
    }
    Some([(syy * sx - sxy * sy) / det, (sxx * sy - sxy * sx) / det])
}

/// Barth–Jespersen factor keeping `value + grad·d_k` inside `[lo, hi]` at
/// every evaluation offset `d_k`.
pub fn barth_jespersen(value: f64, grad: [f64; 2], offsets: &[[f64; 2]], lo: f64, hi: f64) -> f64 {
    let mut phi: f64 = 1.0;
    for d in offsets {
        let dv = grad[0] * d[0] + grad[1] * d[1];
        if dv > 0.0 {
            phi = phi.min((hi - value) / dv);
        } else if dv < 0.0 {
            phi = phi.min((lo - value) / dv);
        }
    }
    phi.clamp(0.0, 1.0)
}

struct Stencil {
    n: usize,
    offsets: [[f64; 2]; 3],
    level: [f64; 3],
    u: [f64; 3],
    v: [f64; 3],
}

fn stencil(tri: &Triangulation, j: usize, centers: &[CellCenter]) -> Stencil {
    let cell = &tri.cells[j];
    let mut s = Stencil {
        n: 0,
        offsets: [[0.0; 2]; 3],
        level: [0.0; 3],
        u: [0.0; 3],
        v: [0.0; 3],
    };
    for e in &cell.edges {
        let q = match e.neighbor {
            Neighbor::Cell { cell, .. } | Neighbor::PeriodicGhost { cell, .. } => cell,
            Neighbor::Boundary(_) => continue,
        };
        let cq = &centers[q];
        if cq.wetness == Wetness::Dry {
            continue;
        }
        let pc = tri.cells[q].centroid;
        s.offsets[s.n] = [
            pc[0] + e.shift[0] - cell.centroid[0],
            pc[1] + e.shift[1] - cell.centroid[1],
        ];
        s.level[s.n] = cq.level;
        s.u[s.n] = cq.vel[0];
        s.v[s.n] = cq.vel[1];
        s.n += 1;
    }
    s
}

fn limited(value: f64, nb: &[f64], offsets: &[[f64; 2]], mids: &[[f64; 2]; 3]) -> [f64; 2] {
    let deltas: Vec<f64> = nb.iter().map(|x| x - value).collect();
    let Some(g) = lsq_gradient(offsets, &deltas) else {
        return [0.0, 0.0];
    };
    let lo = nb.iter().copied().fold(value, f64::min);
    let hi = nb.iter().copied().fold(value, f64::max);
    let phi = barth_jespersen(value, g, mids, lo, hi);
    [phi * g[0], phi * g[1]]
}

/// Unlimited least-squares gradient of the water-surface centre values.
pub fn unlimited_w_gradient(tri: &Triangulation, j: usize, centers: &[CellCenter]) -> [f64; 2] {
    let s = stencil(tri, j, centers);
    let value = centers[j].level;
    let deltas: Vec<f64> = s.level[..s.n].iter().map(|x| x - value).collect();
    lsq_gradient(&s.offsets[..s.n], &deltas).unwrap_or([0.0, 0.0])
}

pub fn reconstruct_cell(
    tri: &Triangulation,
    bathy: &Bathymetry,
    j: usize,
    centers: &[CellCenter],
) -> CellRecon {
    let cell = &tri.cells[j];
    let c = centers[j];
    let mut r = CellRecon {
        wetness: c.wetness,
        level: c.level,
        centroid: cell.centroid,
        vel: c.vel,
        ..Default::default()
    };
    if c.wetness != Wetness::Full {
        return r;
    }
    let s = stencil(tri, j, centers);
    let mids = [0, 1, 2].map(|k| {
        let m = cell.edges[k].midpoint;
        [m[0] - cell.centroid[0], m[1] - cell.centroid[1]]
    });
    let mut gw = limited(c.level, &s.level[..s.n], &s.offsets[..s.n], &mids);
    // Keep the surface above the bottom at every vertex.
    let mut phi: f64 = 1.0;
    for k in 0..3 {
        let p = tri.vertex_pos(cell.vertices[k]);
        let dv = gw[0] * (p[0] - cell.centroid[0]) + gw[1] * (p[1] - cell.centroid[1]);
        let bk = bathy.corner_values[j][k];
        if c.level + dv < bk && dv < 0.0 {
            phi = phi.min((c.level - bk) / -dv);
        }
    }
    if phi < 1.0 {
        let phi = phi.max(0.0);
        gw = [phi * gw[0], phi * gw[1]];
    }
    r.grad_w = gw;
    r.grad_u = limited(c.vel[0], &s.u[..s.n], &s.offsets[..s.n], &mids);
    r.grad_v = limited(c.vel[1], &s.v[..s.n], &s.offsets[..s.n], &mids);
    r
}

/// Whole-mesh reconstruction, for callers outside the time stepper.
#[derive(Clone, Debug, Default)]
pub struct ReconstructedField {
    pub centers: Vec<CellCenter>,
    pub cells: Vec<CellRecon>,
}

impl ReconstructedField {
    pub fn compute(
        tri: &Triangulation,
        bathy: &Bathymetry,
        state: &StateField,
        p: &ReconParams,
    ) -> Self {
        let centers: Vec<CellCenter> = (0..tri.num_cells())
            .map(|j| cell_center(bathy, j, tri.cells[j].area, state.u[j], p))
            .collect();
        let cells = (0..tri.num_cells())
            .map(|j| reconstruct_cell(tri, bathy, j, &centers))
            .collect();
        ReconstructedField { centers, cells }
    }

    /// Own-side point state at the midpoint of edge `k` of cell `j`.
    pub fn edge_point(
        &self,
        tri: &Triangulation,
        bathy: &Bathymetry,
        j: usize,
        k: usize,
    ) -> SideState {
        self.cells[j].point(tri.cells[j].edges[k].midpoint, bathy.edge_values[j][k])
    }

    pub fn shoreline(
        &self,
        tri: &Triangulation,
        bathy: &Bathymetry,
        j: usize,
    ) -> Option<Shoreline> {
        if self.cells[j].wetness != Wetness::Partial {
            return None;
        }
        shoreline(tri.corners(j), bathy.corner_values[j], self.cells[j].level)
    }
}

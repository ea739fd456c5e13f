//! Unstructured triangulations and the per-cell / per-edge geometry the
//! finite-volume scheme works with.
//!
//! Conventions: vertices of every cell are stored counterclockwise and edge
//! `k` is the edge opposite vertex `k`, i.e. it joins vertices `(k+1)%3` and
//! `(k+2)%3`. Outward normals are kept as unit `(cos, sin)` pairs.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {cell} has zero area")]
    ZeroArea { cell: usize },
    #[error("edge ({a}, {b}) is shared by more than two cells")]
    NonManifold { a: usize, b: usize },
    #[error("cell {cell} references vertex {vertex}, but only {count} vertices exist")]
    BadIndex {
        cell: usize,
        vertex: usize,
        count: usize,
    },
    #[error("vertices {a} and {b} coincide within the welding tolerance")]
    DuplicateVertex { a: usize, b: usize },
    #[error("edge {edge} of cell {cell} has no neighbor and no boundary tag")]
    UntaggedBoundary { cell: usize, edge: usize },
    #[error("periodic edge {edge} of cell {cell} has no partner on the opposite side")]
    PeriodicPartner { cell: usize, edge: usize },
    #[error("unknown boundary tag {0}")]
    BadTag(i64),
    #[error("degenerate rectangle or zero subdivision count")]
    DegenerateRectangle,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Boundary-condition tag carried by an edge. Codes match the mesh file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    #[default]
    Interior,
    Extrapolate,
    Periodic,
    Wall,
    Neumann,
}

impl BoundaryTag {
    pub fn from_code(code: i64) -> Result<Self, MeshError> {
        Ok(match code {
            0 => BoundaryTag::Interior,
            1 => BoundaryTag::Extrapolate,
            2 => BoundaryTag::Periodic,
            3 => BoundaryTag::Wall,
            4 => BoundaryTag::Neumann,
            other => return Err(MeshError::BadTag(other)),
        })
    }

    pub fn code(self) -> u8 {
        match self {
            BoundaryTag::Interior => 0,
            BoundaryTag::Extrapolate => 1,
            BoundaryTag::Periodic => 2,
            BoundaryTag::Wall => 3,
            BoundaryTag::Neumann => 4,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::Interior => "interior",
            BoundaryTag::Extrapolate => "extrapolate",
            BoundaryTag::Periodic => "periodic",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Neumann => "neumann",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    #[inline]
    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// What lies across an edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Neighbor {
    /// A conforming neighbor sharing the whole edge. For periodic pairs the
    /// partner lives on the opposite side of the domain; `Edge::shift` maps
    /// its coordinates next to this cell.
    Cell { cell: usize, edge: usize },
    /// Physical boundary handled by a ghost state.
    Boundary(BoundaryTag),
    /// Periodic edge whose partner side is not conforming: the ghost state is
    /// the partner cell's reconstruction evaluated at `point` (partner frame).
    PeriodicGhost { cell: usize, point: [f64; 2] },
}

impl Neighbor {
    #[inline]
    pub fn cell(&self) -> Option<usize> {
        match *self {
            Neighbor::Cell { cell, .. } | Neighbor::PeriodicGhost { cell, .. } => Some(cell),
            Neighbor::Boundary(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub neighbor: Neighbor,
    pub tag: BoundaryTag,
    pub length: f64,
    pub midpoint: [f64; 2],
    /// Outward unit normal `(cos θ, sin θ)`.
    pub normal: [f64; 2],
    /// Altitude of the cell onto this edge, `2|T|/ℓ`.
    pub altitude: f64,
    /// Translation taking partner coordinates into this cell's frame
    /// (zero except across periodic boundaries).
    pub shift: [f64; 2],
}

impl Edge {
    /// Normal angle θ derived from the stored unit vector.
    pub fn angle(&self) -> f64 {
        self.normal[1].atan2(self.normal[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: usize,
    pub vertices: [usize; 3],
    pub area: f64,
    pub centroid: [f64; 2],
    pub edges: [Edge; 3],
}

impl Cell {
    pub fn min_altitude(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| e.altitude)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_altitude(&self) -> f64 {
        self.edges.iter().map(|e| e.altitude).fold(0.0, f64::max)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Cells across the three edges, including periodic partners.
    pub fn neighbor_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(|e| e.neighbor.cell())
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
    pub fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }
}

/// Boundary tags for the four sides of a rectangular domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideTags {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl SideTags {
    pub fn all(tag: BoundaryTag) -> Self {
        SideTags {
            left: tag,
            right: tag,
            bottom: tag,
            top: tag,
        }
    }
}

/// Compressed vertex → incident-cell table.
#[derive(Clone, Debug, Default)]
pub struct VertexCells {
    pub offsets: Vec<usize>,
    pub cells: Vec<usize>,
}

impl VertexCells {
    #[inline]
    pub fn of(&self, v: usize) -> &[usize] {
        &self.cells[self.offsets[v]..self.offsets[v + 1]]
    }
}

#[derive(Clone, Debug)]
pub struct Triangulation {
    pub vertices: Vec<Vertex>,
    pub cells: Vec<Cell>,
    /// `(cell, edge index, tag)` for every edge that is not plain interior.
    pub boundary_edges: Vec<(usize, usize, BoundaryTag)>,
    /// Bounding box of all vertices.
    pub bbox: Rect,
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn edge_geometry(p: [f64; 2], q: [f64; 2], area: f64) -> Edge {
    let dx = q[0] - p[0];
    let dy = q[1] - p[1];
    let length = dx.hypot(dy);
    Edge {
        neighbor: Neighbor::Boundary(BoundaryTag::Interior),
        tag: BoundaryTag::Interior,
        length,
        midpoint: [(p[0] + q[0]) * 0.5, (p[1] + q[1]) * 0.5],
        normal: [dy / length, -dx / length],
        altitude: 2.0 * area / length,
        shift: [0.0, 0.0],
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Triangulation {
    /// Build a triangulation from raw coordinates, vertex triples and
    /// per-edge tags (`tags` may be empty, meaning every edge is untagged).
    pub fn build(
        vertices: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        tags: Vec<[BoundaryTag; 3]>,
    ) -> Result<Triangulation, MeshError> {
        let nv = vertices.len();
        for (c, el) in elements.iter().enumerate() {
            for &v in el {
                if v >= nv {
                    return Err(MeshError::BadIndex {
                        cell: c,
                        vertex: v,
                        count: nv,
                    });
                }
            }
        }
        let mut tags = tags;
        if tags.is_empty() {
            tags = vec![[BoundaryTag::Interior; 3]; elements.len()];
        }

        // Drop unreferenced vertices, keeping the order of the others.
        let mut used = vec![false; nv];
        for el in &elements {
            for &v in el {
                used[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; nv];
        let mut coords = Vec::with_capacity(nv);
        for (i, p) in vertices.iter().enumerate() {
            if used[i] {
                remap[i] = coords.len();
                coords.push(*p);
            } else {
                log::warn!("vertex {i} is not referenced by any cell; dropped");
            }
        }

        let bbox = bounding_box(&coords);
        let diam = bbox.diameter().max(f64::MIN_POSITIVE);
        check_duplicates(&coords, 1e-12 * diam)?;

        let mut cells = Vec::with_capacity(elements.len());
        for (c, (el, tg)) in elements.iter().zip(tags.iter()).enumerate() {
            let mut v = [remap[el[0]], remap[el[1]], remap[el[2]]];
            let mut t = *tg;
            let (a, b, d) = (coords[v[0]], coords[v[1]], coords[v[2]]);
            let mut twice = cross(a, b, d);
            let scale = [(a, b), (b, d), (d, a)]
                .iter()
                .map(|(p, q)| (q[0] - p[0]).hypot(q[1] - p[1]))
                .fold(0.0, f64::max);
            if !(twice.abs() > 1e-14 * scale * scale) {
                return Err(MeshError::ZeroArea { cell: c });
            }
            if twice < 0.0 {
                v.swap(1, 2);
                t.swap(1, 2);
                twice = -twice;
            }
            let area = 0.5 * twice;
            let p = [coords[v[0]], coords[v[1]], coords[v[2]]];
            let centroid = [
                (p[0][0] + p[1][0] + p[2][0]) / 3.0,
                (p[0][1] + p[1][1] + p[2][1]) / 3.0,
            ];
            let mut edges = [
                edge_geometry(p[1], p[2], area),
                edge_geometry(p[2], p[0], area),
                edge_geometry(p[0], p[1], area),
            ];
            for k in 0..3 {
                edges[k].tag = t[k];
            }
            cells.push(Cell {
                id: c,
                vertices: v,
                area,
                centroid,
                edges,
            });
        }

        // Match interior edges by sorting on their vertex pair.
        let mut keys: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(cells.len() * 3);
        for (c, cell) in cells.iter().enumerate() {
            for k in 0..3 {
                let a = cell.vertices[(k + 1) % 3];
                let b = cell.vertices[(k + 2) % 3];
                keys.push((a.min(b), a.max(b), c, k));
            }
        }
        keys.sort_unstable();
        let mut unmatched = Vec::new();
        let mut i = 0;
        while i < keys.len() {
            let mut j = i + 1;
            while j < keys.len() && keys[j].0 == keys[i].0 && keys[j].1 == keys[i].1 {
                j += 1;
            }
            match j - i {
                1 => unmatched.push((keys[i].2, keys[i].3)),
                2 => {
                    let (c1, k1) = (keys[i].2, keys[i].3);
                    let (c2, k2) = (keys[i + 1].2, keys[i + 1].3);
                    cells[c1].edges[k1].neighbor = Neighbor::Cell { cell: c2, edge: k2 };
                    cells[c1].edges[k1].tag = BoundaryTag::Interior;
                    cells[c2].edges[k2].neighbor = Neighbor::Cell { cell: c1, edge: k1 };
                    cells[c2].edges[k2].tag = BoundaryTag::Interior;
                }
                _ => {
                    return Err(MeshError::NonManifold {
                        a: keys[i].0,
                        b: keys[i].1,
                    })
                }
            }
            i = j;
        }

        let mut periodic = Vec::new();
        let mut boundary_edges = Vec::new();
        for &(c, k) in &unmatched {
            let tag = cells[c].edges[k].tag;
            match tag {
                BoundaryTag::Interior => {
                    return Err(MeshError::UntaggedBoundary { cell: c, edge: k })
                }
                BoundaryTag::Periodic => periodic.push((c, k)),
                other => cells[c].edges[k].neighbor = Neighbor::Boundary(other),
            }
            boundary_edges.push((c, k, tag));
        }
        boundary_edges.sort_unstable_by_key(|&(c, k, _)| (c, k));

        let mut tri = Triangulation {
            vertices: Vec::new(),
            cells,
            boundary_edges,
            bbox,
        };
        tri.vertices = coords
            .iter()
            .enumerate()
            .map(|(id, p)| Vertex {
                id,
                x: p[0],
                y: p[1],
            })
            .collect();
        tri.match_periodic(&periodic, 1e-9 * diam)?;
        Ok(tri)
    }

    fn side_of(&self, c: usize, k: usize, tol: f64) -> Option<Side> {
        let cell = &self.cells[c];
        let a = self.vertices[cell.vertices[(k + 1) % 3]].pos();
        let b = self.vertices[cell.vertices[(k + 2) % 3]].pos();
        let bb = &self.bbox;
        if (a[0] - bb.x0).abs() < tol && (b[0] - bb.x0).abs() < tol {
            Some(Side::Left)
        } else if (a[0] - bb.x1).abs() < tol && (b[0] - bb.x1).abs() < tol {
            Some(Side::Right)
        } else if (a[1] - bb.y0).abs() < tol && (b[1] - bb.y0).abs() < tol {
            Some(Side::Bottom)
        } else if (a[1] - bb.y1).abs() < tol && (b[1] - bb.y1).abs() < tol {
            Some(Side::Top)
        } else {
            None
        }
    }

    fn match_periodic(&mut self, periodic: &[(usize, usize)], tol: f64) -> Result<(), MeshError> {
        if periodic.is_empty() {
            return Ok(());
        }
        let lx = self.bbox.x1 - self.bbox.x0;
        let ly = self.bbox.y1 - self.bbox.y0;
        // (side, coordinate interval along the side, cell, edge)
        let mut sides: Vec<(Side, f64, f64, usize, usize)> = Vec::with_capacity(periodic.len());
        for &(c, k) in periodic {
            let side = self
                .side_of(c, k, tol)
                .ok_or(MeshError::PeriodicPartner { cell: c, edge: k })?;
            let cell = &self.cells[c];
            let a = self.vertices[cell.vertices[(k + 1) % 3]].pos();
            let b = self.vertices[cell.vertices[(k + 2) % 3]].pos();
            let axis = if matches!(side, Side::Left | Side::Right) {
                1
            } else {
                0
            };
            sides.push((side, a[axis].min(b[axis]), a[axis].max(b[axis]), c, k));
        }
        let mut links = Vec::with_capacity(periodic.len());
        for &(side, _, _, c, k) in &sides {
            let (partner_side, shift, axis) = match side {
                Side::Left => (Side::Right, [-lx, 0.0], 1),
                Side::Right => (Side::Left, [lx, 0.0], 1),
                Side::Bottom => (Side::Top, [0.0, -ly], 0),
                Side::Top => (Side::Bottom, [0.0, ly], 0),
            };
            let m = self.cells[c].edges[k].midpoint;
            let target = [m[0] - shift[0], m[1] - shift[1]];
            let s = target[axis];
            let found = sides
                .iter()
                .filter(|e| e.0 == partner_side && e.1 - tol <= s && s <= e.2 + tol)
                .min_by(|x, y| {
                    let dx = (0.5 * (x.1 + x.2) - s).abs();
                    let dy = (0.5 * (y.1 + y.2) - s).abs();
                    dx.total_cmp(&dy)
                })
                .ok_or(MeshError::PeriodicPartner { cell: c, edge: k })?;
            let (pc, pk) = (found.3, found.4);
            let pm = self.cells[pc].edges[pk].midpoint;
            let conforming = (pm[0] - target[0]).abs() < tol
                && (pm[1] - target[1]).abs() < tol
                && (self.cells[pc].edges[pk].length - self.cells[c].edges[k].length).abs() < tol;
            let nb = if conforming {
                Neighbor::Cell { cell: pc, edge: pk }
            } else {
                Neighbor::PeriodicGhost {
                    cell: pc,
                    point: target,
                }
            };
            links.push((c, k, nb, shift));
        }
        for (c, k, nb, shift) in links {
            let e = &mut self.cells[c].edges[k];
            e.neighbor = nb;
            e.shift = shift;
        }
        Ok(())
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    /// Largest over cells of the smallest altitude, `max_j min_k r_jk`.
    pub fn max_min_altitude(&self) -> f64 {
        self.cells
            .iter()
            .map(Cell::min_altitude)
            .fold(0.0, f64::max)
    }

    /// Largest altitude of any cell.
    pub fn max_altitude(&self) -> f64 {
        self.cells
            .iter()
            .map(Cell::max_altitude)
            .fold(0.0, f64::max)
    }

    pub fn max_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).fold(0.0, f64::max)
    }

    pub fn vertex_pos(&self, v: usize) -> [f64; 2] {
        self.vertices[v].pos()
    }

    /// Corner coordinates of a cell, in storage order.
    pub fn corners(&self, c: usize) -> [[f64; 2]; 3] {
        let v = self.cells[c].vertices;
        [
            self.vertex_pos(v[0]),
            self.vertex_pos(v[1]),
            self.vertex_pos(v[2]),
        ]
    }

    pub fn vertex_cells(&self) -> VertexCells {
        let mut counts = vec![0usize; self.vertices.len() + 1];
        for c in &self.cells {
            for &v in &c.vertices {
                counts[v + 1] += 1;
            }
        }
        for i in 0..self.vertices.len() {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cells = vec![0; counts[self.vertices.len()]];
        for (j, c) in self.cells.iter().enumerate() {
            for &v in &c.vertices {
                cells[fill[v]] = j;
                fill[v] += 1;
            }
        }
        VertexCells {
            offsets: counts,
            cells,
        }
    }

    /// Index of the cell containing `p`, by brute force. Used only by tests
    /// and the convergence restriction, which bucket their own queries.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| point_in_triangle(self.corners(c.id), p, 1e-12))
    }
}

fn bounding_box(coords: &[[f64; 2]]) -> Rect {
    let mut r = Rect::new(
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in coords {
        r.x0 = r.x0.min(p[0]);
        r.x1 = r.x1.max(p[0]);
        r.y0 = r.y0.min(p[1]);
        r.y1 = r.y1.max(p[1]);
    }
    if coords.is_empty() {
        r = Rect::new(0.0, 0.0, 0.0, 0.0);
    }
    r
}

fn check_duplicates(coords: &[[f64; 2]], tol: f64) -> Result<(), MeshError> {
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_unstable_by(|&a, &b| coords[a][0].total_cmp(&coords[b][0]));
    for i in 0..order.len() {
        let a = order[i];
        for &b in &order[i + 1..] {
            if coords[b][0] - coords[a][0] > tol {
                break;
            }
            if (coords[b][1] - coords[a][1]).abs() <= tol {
                return Err(MeshError::DuplicateVertex {
                    a: a.min(b),
                    b: a.max(b),
                });
            }
        }
    }
    Ok(())
}

/// Inclusive point-in-triangle test with a relative tolerance on the
/// barycentric coordinates.
pub fn point_in_triangle(t: [[f64; 2]; 3], p: [f64; 2], tol: f64) -> bool {
    let d = cross(t[0], t[1], t[2]);
    let l0 = cross(p, t[1], t[2]) / d;
    let l1 = cross(t[0], p, t[2]) / d;
    let l2 = 1.0 - l0 - l1;
    l0 >= -tol && l1 >= -tol && l2 >= -tol
}

/// Barycentric coordinates of `p` with respect to triangle `t`.
pub fn barycentric(t: [[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let d = cross(t[0], t[1], t[2]);
    let l0 = cross(p, t[1], t[2]) / d;
    let l1 = cross(t[0], p, t[2]) / d;
    [l0, l1, 1.0 - l0 - l1]
}

/// Uniform mesh of `2·nx·ny` congruent right triangles; every square is cut
/// along its lower-left to upper-right diagonal.
pub fn uniform_mesh(
    domain: &Rect,
    nx: usize,
    ny: usize,
    sides: &SideTags,
) -> Result<Triangulation, MeshError> {
    if nx == 0 || ny == 0 || !(domain.x1 > domain.x0) || !(domain.y1 > domain.y0) {
        return Err(MeshError::DegenerateRectangle);
    }
    let hx = (domain.x1 - domain.x0) / nx as f64;
    let hy = (domain.y1 - domain.y0) / ny as f64;
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny {
            domain.y1
        } else {
            domain.y0 + j as f64 * hy
        };
        for i in 0..=nx {
            let x = if i == nx {
                domain.x1
            } else {
                domain.x0 + i as f64 * hx
            };
            verts.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let inner = BoundaryTag::Interior;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    let mut tags = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([v00, v10, v11]);
            tags.push([
                if i + 1 == nx { sides.right } else { inner },
                inner,
                if j == 0 { sides.bottom } else { inner },
            ]);
            elements.push([v00, v11, v01]);
            tags.push([
                if j + 1 == ny { sides.top } else { inner },
                if i == 0 { sides.left } else { inner },
                inner,
            ]);
        }
    }
    Triangulation::build(verts, elements, tags)
}

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Read the node/element text format:
/// `nv nc`, then `id x y` per vertex, then `id v1 v2 v3 [b1 b2 b3]` per cell.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<Triangulation, MeshError> {
    let text = fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<Triangulation, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty mesh file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 2 {
        return Err(parse_err(ln, "expected `<num_vertices> <num_cells>`"));
    }
    let nv: usize = head[0]
        .parse()
        .map_err(|_| parse_err(ln, "bad vertex count"))?;
    let nc: usize = head[1]
        .parse()
        .map_err(|_| parse_err(ln, "bad cell count"))?;

    let mut verts = vec![[f64::NAN; 2]; nv];
    let mut seen = vec![false; nv];
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "fewer vertex lines than declared"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(ln, "expected `id x y`"));
        }
        let id: usize = f[0].parse().map_err(|_| parse_err(ln, "bad vertex id"))?;
        if id >= nv || seen[id] {
            return Err(parse_err(
                ln,
                format!("vertex id {id} out of range or repeated"),
            ));
        }
        let x: f64 = f[1].parse().map_err(|_| parse_err(ln, "bad x"))?;
        let y: f64 = f[2].parse().map_err(|_| parse_err(ln, "bad y"))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(ln, "non-finite coordinate"));
        }
        seen[id] = true;
        verts[id] = [x, y];
    }

    let mut elements = vec![[0usize; 3]; nc];
    let mut tags = vec![[BoundaryTag::Interior; 3]; nc];
    let mut cseen = vec![false; nc];
    for _ in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "fewer cell lines than declared"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 4 && f.len() != 7 {
            return Err(parse_err(ln, "expected `id v1 v2 v3 [b1 b2 b3]`"));
        }
        let id: usize = f[0].parse().map_err(|_| parse_err(ln, "bad cell id"))?;
        if id >= nc || cseen[id] {
            return Err(parse_err(
                ln,
                format!("cell id {id} out of range or repeated"),
            ));
        }
        cseen[id] = true;
        for k in 0..3 {
            let v: usize = f[1 + k]
                .parse()
                .map_err(|_| parse_err(ln, "bad vertex index"))?;
            if v >= nv {
                return Err(parse_err(
                    ln,
                    format!("vertex index {v} out of range (have {nv})"),
                ));
            }
            elements[id][k] = v;
            if f.len() == 7 {
                let code: i64 = f[4 + k]
                    .parse()
                    .map_err(|_| parse_err(ln, "bad boundary tag"))?;
                tags[id][k] =
                    BoundaryTag::from_code(code).map_err(|e| parse_err(ln, e.to_string()))?;
            }
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing data after the declared cells"));
    }
    Triangulation::build(verts, elements, tags)
}

pub fn write_mesh(tri: &Triangulation, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write!(out, "{}", format_mesh(tri))?;
    out.flush()?;
    Ok(())
}

pub fn format_mesh(tri: &Triangulation) -> String {
    let mut s = String::with_capacity(48 * (tri.vertices.len() + tri.cells.len()));
    s.push_str(&format!("{} {}\n", tri.vertices.len(), tri.cells.len()));
    for v in &tri.vertices {
        s.push_str(&format!("{} {:?} {:?}\n", v.id, v.x, v.y));
    }
    for c in &tri.cells {
        let t = |k: usize| c.edges[k].tag.code();
        s.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            c.id,
            c.vertices[0],
            c.vertices[1],
            c.vertices[2],
            t(0),
            t(1),
            t(2)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: [[f64; 2]; 3]) -> Triangulation {
        Triangulation::build(p.to_vec(), vec![[0, 1, 2]], vec![[BoundaryTag::Wall; 3]]).unwrap()
    }

    #[test]
    fn reference_simplex() {
        let t = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let c = &t.cells[0];
        assert!((c.area - 0.5).abs() < 1e-15);
        assert!((c.centroid[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.centroid[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.edges[0].angle() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn altitude_is_twice_area_over_length() {
        let t = single([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]);
        let e = &t.cells[0].edges[0];
        assert!((e.length - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert!((e.altitude - 2f64.sqrt()).abs() < 1e-14);
        for e in &t.cells[0].edges {
            assert_eq!(e.altitude * e.length, 2.0 * t.cells[0].area);
        }
    }

    #[test]
    fn clockwise_input_is_normalized() {
        let t = Triangulation::build(
            vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
            vec![[0, 1, 2]],
            vec![[
                BoundaryTag::Wall,
                BoundaryTag::Neumann,
                BoundaryTag::Extrapolate,
            ]],
        )
        .unwrap();
        let c = &t.cells[0];
        assert_eq!(c.vertices, [0, 2, 1]);
        // Edge tags follow the vertex they are opposite to.
        assert_eq!(c.edges[1].tag, BoundaryTag::Extrapolate);
        assert_eq!(c.edges[2].tag, BoundaryTag::Neumann);
        for e in &c.edges {
            let d = [e.midpoint[0] - c.centroid[0], e.midpoint[1] - c.centroid[1]];
            assert!(d[0] * e.normal[0] + d[1] * e.normal[1] > 0.0);
        }
    }

    #[test]
    fn uniform_counts() {
        let d = Rect::new(0.0, 2.0, 0.0, 1.0);
        let t = uniform_mesh(&d, 2, 2, &SideTags::all(BoundaryTag::Wall)).unwrap();
        assert_eq!(t.num_cells(), 8);
        assert_eq!(t.num_vertices(), 9);
        let t = uniform_mesh(
            &Rect::new(0.0, 1.0, 0.0, 1.0),
            1,
            1,
            &SideTags::all(BoundaryTag::Wall),
        )
        .unwrap();
        assert_eq!(t.num_cells(), 2);
        assert!(t.cells.iter().all(|c| (c.area - 0.5).abs() < 1e-15));
        let t = uniform_mesh(&d, 25, 25, &SideTags::all(BoundaryTag::Wall)).unwrap();
        assert_eq!(t.num_cells(), 1250);
        assert!((t.total_area() - 2.0).abs() < 2e-12);
    }

    #[test]
    fn closure_and_symmetry() {
        let d = Rect::new(0.0, 2.0, 0.0, 1.0);
        let t = uniform_mesh(&d, 7, 5, &SideTags::all(BoundaryTag::Extrapolate)).unwrap();
        for c in &t.cells {
            let sx: f64 = c.edges.iter().map(|e| e.length * e.normal[0]).sum();
            let sy: f64 = c.edges.iter().map(|e| e.length * e.normal[1]).sum();
            assert!(sx.abs() <= 1e-13 * c.perimeter());
            assert!(sy.abs() <= 1e-13 * c.perimeter());
            for e in &c.edges {
                if let Neighbor::Cell { cell, edge } = e.neighbor {
                    let o = &t.cells[cell].edges[edge];
                    assert_eq!(
                        o.neighbor,
                        Neighbor::Cell {
                            cell: c.id,
                            edge: c.edges.iter().position(|x| x == e).unwrap()
                        }
                    );
                    assert_eq!(o.length, e.length);
                    assert_eq!(o.midpoint, e.midpoint);
                    assert_eq!(o.normal, [-e.normal[0], -e.normal[1]]);
                }
            }
        }
    }

    #[test]
    fn periodic_partners_match() {
        let d = Rect::new(0.0, 2.0, 0.0, 1.0);
        let sides = SideTags {
            left: BoundaryTag::Extrapolate,
            right: BoundaryTag::Extrapolate,
            bottom: BoundaryTag::Periodic,
            top: BoundaryTag::Periodic,
        };
        let t = uniform_mesh(&d, 4, 3, &sides).unwrap();
        let mut n = 0;
        for &(c, k, tag) in &t.boundary_edges {
            if tag == BoundaryTag::Periodic {
                n += 1;
                let e = &t.cells[c].edges[k];
                let Neighbor::Cell { cell, edge } = e.neighbor else {
                    panic!("expected conforming partner")
                };
                let o = &t.cells[cell].edges[edge];
                assert!((o.midpoint[0] + e.shift[0] - e.midpoint[0]).abs() < 1e-14);
                assert!((o.midpoint[1] + e.shift[1] - e.midpoint[1]).abs() < 1e-14);
            }
        }
        assert_eq!(n, 8);
    }

    #[test]
    fn round_trip() {
        let d = Rect::new(0.0, 2.0, 0.0, 1.0);
        let t = uniform_mesh(&d, 25, 25, &SideTags::all(BoundaryTag::Neumann)).unwrap();
        let back = parse_mesh(&format_mesh(&t)).unwrap();
        assert_eq!(back.vertices, t.vertices);
        for (a, b) in back.cells.iter().zip(&t.cells) {
            assert_eq!(a.vertices, b.vertices);
            assert_eq!(a.edges, b.edges);
        }
    }

    #[test]
    fn parse_errors() {
        let one = "3 1\n0 0 0\n1 1 0\n2 0 1\n0 0 1 2 3 3 3\n";
        assert_eq!(parse_mesh(one).unwrap().num_cells(), 1);
        let bad = "3 1\n0 0 0\n1 1 0\n2 0 1\n0 0 1 99\n";
        match parse_mesh(bad) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_mesh("3 1\n0 0 0\n1 1 0\n"),
            Err(MeshError::Parse { .. })
        ));
        let untagged = "3 1\n0 0 0\n1 1 0\n2 0 1\n0 0 1 2\n";
        assert!(matches!(
            parse_mesh(untagged),
            Err(MeshError::UntaggedBoundary { .. })
        ));
    }

    #[test]
    fn rejects_degenerate_input() {
        let r = Triangulation::build(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            vec![[0, 1, 2]],
            vec![],
        );
        assert!(matches!(r, Err(MeshError::ZeroArea { .. })));
        let r = Triangulation::build(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]],
            vec![[0, 1, 2], [0, 3, 1], [0, 1, 4]],
            vec![[BoundaryTag::Wall; 3]; 3],
        );
        assert!(matches!(r, Err(MeshError::NonManifold { .. })));
        let r = uniform_mesh(
            &Rect::new(0.0, 0.0, 0.0, 1.0),
            2,
            2,
            &SideTags::all(BoundaryTag::Wall),
        );
        assert!(matches!(r, Err(MeshError::DegenerateRectangle)));
    }

    #[test]
    fn unreferenced_vertex_is_dropped() {
        let t = Triangulation::build(
            vec![[5.0, 5.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[1, 2, 3]],
            vec![[BoundaryTag::Wall; 3]],
        )
        .unwrap();
        assert_eq!(t.num_vertices(), 3);
        assert_eq!(t.cells[0].vertices, [0, 1, 2]);
    }
}

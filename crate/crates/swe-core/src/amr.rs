//! Refinement forest over a base triangulation: red refinement, green
//! closure of hanging points, wet/dry splitting along the shoreline,
//! coarsening and conservative projection of the state between
//! generations.
//!
//! Vertices live in one global table that only grows. Edge midpoints are
//! created once per edge and found again through `(min, max)` vertex keys,
//! so re-refining a coarsened family reuses the same vertex ids. Node ids
//! are never reused either; detached nodes simply stay in the arena.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bathymetry::{Bathymetry, BathymetryError};
use crate::mesh::{barycentric, BoundaryTag, MeshError, Triangulation};
use crate::reconstruction::{shoreline, ReconstructedField, StateField, Wetness};

#[derive(Debug, Error)]
pub enum AmrError {
    #[error("state generation {got} does not match snapshot generation {expected}")]
    Generation { expected: u64, got: u64 },
    #[error("new cell {node} has no source in the previous generation")]
    Orphan { node: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Bathymetry(#[from] BathymetryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    #[default]
    Keep,
    Refine,
    Coarsen,
}

impl CellFlag {
    pub fn code(self) -> i8 {
        match self {
            CellFlag::Coarsen => -1,
            CellFlag::Keep => 0,
            CellFlag::Refine => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Base,
    Red,
    Green,
    WetDry,
}

impl NodeKind {
    pub fn code(self) -> u8 {
        match self {
            NodeKind::Base => 0,
            NodeKind::Red => 1,
            NodeKind::Green => 2,
            NodeKind::WetDry => 3,
        }
    }
}

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Node {
    /// Global vertex ids, counterclockwise.
    pub v: [usize; 3],
    /// Boundary tag of edge k (opposite vertex k); `Interior` inside.
    pub tags: [BoundaryTag; 3],
    pub parent: Option<usize>,
    pub children: [usize; 4],
    pub nchild: u8,
    pub kind: NodeKind,
    pub level: u32,
    /// Vertex a green split passes through.
    pub split: usize,
}

impl Node {
    pub fn children(&self) -> &[usize] {
        &self.children[..self.nchild as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quality {
    pub min_angle_deg: f64,
    pub altitude_ratio: f64,
}

impl Default for Quality {
    fn default() -> Self {
        Quality {
            min_angle_deg: 15.0,
            altitude_ratio: 0.1,
        }
    }
}

/// Immutable view of the active cells handed to the solver.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub tri: Triangulation,
    pub bathy: Bathymetry,
    /// Hierarchy node of every cell.
    pub nodes: Vec<usize>,
    pub levels: Vec<u32>,
    pub kinds: Vec<NodeKind>,
    pub generation: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdaptStats {
    pub changed: bool,
    pub red: usize,
    pub green: usize,
    pub wet_dry: usize,
    pub fallback: usize,
    pub coarsened: usize,
    /// Nodes with ids at or above this were created by the adaptation.
    pub first_new_node: usize,
}

#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    pub verts: Vec<[f64; 2]>,
    /// Bottom value at every global vertex.
    pub vb: Vec<f64>,
    pub nodes: Vec<Node>,
    pub roots: Vec<usize>,
    pub max_level: u32,
    pub quality: Quality,
    pub generation: u64,
    mid: HashMap<(usize, usize), usize>,
    iface: HashMap<(usize, usize), Vec<usize>>,
    iface_owner: HashMap<usize, usize>,
    green_cache: HashMap<usize, (usize, [usize; 2])>,
    vuse: Vec<u32>,
    leaf: Vec<bool>,
    active: Vec<usize>,
}

#[inline]
fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn tri_quality(p: [[f64; 2]; 3]) -> (f64, f64) {
    let mut min_angle = f64::INFINITY;
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let ang = (u[0] * v[1] - u[1] * v[0])
            .abs()
            .atan2(u[0] * v[0] + u[1] * v[1]);
        min_angle = min_angle.min(ang);
    }
    let twice = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
        - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]))
        .abs();
    let longest = (0..3)
        .map(|k| (p[(k + 1) % 3][0] - p[k][0]).hypot(p[(k + 1) % 3][1] - p[k][1]))
        .fold(0.0, f64::max);
    (min_angle.to_degrees(), twice / longest)
}

impl MeshHierarchy {
    pub fn new(
        base: &Triangulation,
        vertex_bathymetry: Vec<f64>,
        max_level: u32,
        quality: Quality,
    ) -> Self {
        let nodes: Vec<Node> = base
            .cells
            .iter()
            .map(|c| Node {
                v: c.vertices,
                tags: c.edges.map(|e| e.tag),
                parent: None,
                children: [NONE; 4],
                nchild: 0,
                kind: NodeKind::Base,
                level: 0,
                split: NONE,
            })
            .collect();
        let n = nodes.len();
        let mut h = MeshHierarchy {
            verts: base.vertices.iter().map(|v| v.pos()).collect(),
            vb: vertex_bathymetry,
            nodes,
            roots: (0..n).collect(),
            max_level,
            quality,
            generation: 0,
            mid: HashMap::new(),
            iface: HashMap::new(),
            iface_owner: HashMap::new(),
            green_cache: HashMap::new(),
            vuse: vec![0; base.num_vertices()],
            leaf: vec![false; n],
            active: Vec::new(),
        };
        for i in 0..n {
            h.set_leaf(i, true);
        }
        h.active = h.collect_leaves();
        h
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_leaf(&self, n: usize) -> bool {
        self.leaf[n]
    }

    fn set_leaf(&mut self, n: usize, on: bool) {
        if self.leaf[n] == on {
            return;
        }
        self.leaf[n] = on;
        for &v in &self.nodes[n].v {
            if on {
                self.vuse[v] += 1;
            } else {
                self.vuse[v] -= 1;
            }
        }
    }

    fn collect_leaves(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.active.len().max(self.roots.len()));
        let mut stack = Vec::new();
        for &r in &self.roots {
            stack.push(r);
            while let Some(n) = stack.pop() {
                let node = &self.nodes[n];
                if node.nchild == 0 {
                    out.push(n);
                } else {
                    for &c in node.children().iter().rev() {
                        stack.push(c);
                    }
                }
            }
        }
        out
    }

    fn corners(&self, n: usize) -> [[f64; 2]; 3] {
        self.nodes[n].v.map(|v| self.verts[v])
    }

    fn push_vertex(&mut self, p: [f64; 2], b: f64) -> usize {
        self.verts.push(p);
        self.vb.push(b);
        self.vuse.push(0);
        self.verts.len() - 1
    }

    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        if let Some(&m) = self.mid.get(&key(a, b)) {
            return m;
        }
        let (pa, pb) = (self.verts[a], self.verts[b]);
        let m = self.push_vertex(
            [(pa[0] + pb[0]) * 0.5, (pa[1] + pb[1]) * 0.5],
            (self.vb[a] + self.vb[b]) * 0.5,
        );
        self.mid.insert(key(a, b), m);
        m
    }

    fn add_children(
        &mut self,
        parent: usize,
        kind: NodeKind,
        level: u32,
        kids: &[([usize; 3], [BoundaryTag; 3])],
    ) -> [usize; 4] {
        let mut ids = [NONE; 4];
        for (i, (v, tags)) in kids.iter().enumerate() {
            self.nodes.push(Node {
                v: *v,
                tags: *tags,
                parent: Some(parent),
                children: [NONE; 4],
                nchild: 0,
                kind,
                level,
                split: NONE,
            });
            self.leaf.push(false);
            ids[i] = self.nodes.len() - 1;
        }
        self.attach(parent, &ids[..kids.len()]);
        ids
    }

    fn attach(&mut self, parent: usize, kids: &[usize]) {
        self.set_leaf(parent, false);
        let p = &mut self.nodes[parent];
        p.nchild = kids.len() as u8;
        p.children = [NONE; 4];
        p.children[..kids.len()].copy_from_slice(kids);
        for &c in kids {
            self.set_leaf(c, true);
        }
    }

    /// Detach all descendants of `p` and make it a leaf.
    fn collapse(&mut self, p: usize) {
        let kids: Vec<usize> = self.nodes[p].children().to_vec();
        for c in kids {
            if self.nodes[c].nchild > 0 {
                self.collapse(c);
            }
            self.set_leaf(c, false);
        }
        self.nodes[p].nchild = 0;
        self.nodes[p].children = [NONE; 4];
        self.set_leaf(p, true);
    }

    /// Used points strictly inside the segment `(a, b)`.
    fn edge_points(&self, a: usize, b: usize, out: &mut Vec<usize>) {
        if let Some(&m) = self.mid.get(&key(a, b)) {
            if self.vuse[m] > 0 {
                out.push(m);
            }
            self.edge_points(a, m, out);
            self.edge_points(m, b, out);
        }
        if let Some(list) = self.iface.get(&key(a, b)) {
            out.extend(list.iter().copied().filter(|&p| self.vuse[p] > 0));
        }
    }

    fn hanging(&self, n: usize) -> [Vec<usize>; 3] {
        let v = self.nodes[n].v;
        let mut out = [Vec::new(), Vec::new(), Vec::new()];
        for (k, o) in out.iter_mut().enumerate() {
            if self.nodes[n].tags[k] == BoundaryTag::Interior {
                self.edge_points(v[(k + 1) % 3], v[(k + 2) % 3], o);
            }
        }
        out
    }

    /// Red refinement into four similar children.
    pub fn refine_red(&mut self, n: usize) -> [usize; 4] {
        let node = self.nodes[n].clone();
        let [v0, v1, v2] = node.v;
        let [t0, t1, t2] = node.tags;
        let m0 = self.midpoint(v1, v2);
        let m1 = self.midpoint(v2, v0);
        let m2 = self.midpoint(v0, v1);
        let i = BoundaryTag::Interior;
        self.add_children(
            n,
            NodeKind::Red,
            node.level + 1,
            &[
                ([v0, m2, m1], [i, t1, t2]),
                ([m2, v1, m0], [t0, i, t2]),
                ([m1, m0, v2], [t0, t1, i]),
                ([m0, m1, m2], [i, i, i]),
            ],
        )
    }

    /// Green bisection of edge `k` through vertex `s`.
    pub fn split_green(&mut self, n: usize, k: usize, s: usize) -> [usize; 2] {
        if let Some(&(cs, kids)) = self.green_cache.get(&n) {
            if cs == s {
                self.attach(n, &kids);
                return kids;
            }
        }
        let node = self.nodes[n].clone();
        let (a, b, c) = (node.v[k], node.v[(k + 1) % 3], node.v[(k + 2) % 3]);
        let t = node.tags;
        let i = BoundaryTag::Interior;
        let ids = self.add_children(
            n,
            NodeKind::Green,
            node.level,
            &[
                ([a, b, s], [t[k], i, t[(k + 2) % 3]]),
                ([a, s, c], [t[k], t[(k + 1) % 3], i]),
            ],
        );
        self.nodes[n].split = s;
        self.nodes[ids[0]].split = NONE;
        let kids = [ids[0], ids[1]];
        self.green_cache.insert(n, (s, kids));
        kids
    }

    /// Replace a wet/dry family by the red refinement of its parent.
    fn convert_family(&mut self, p: usize, st: &mut AdaptStats) {
        self.collapse(p);
        self.red_prepared(p, st);
    }

    /// Red refinement after converting any wet/dry family whose interface
    /// points sit on this cell's edges.
    fn red_prepared(&mut self, n: usize, st: &mut AdaptStats) {
        let v = self.nodes[n].v;
        for k in 0..3 {
            let list = self
                .iface
                .get(&key(v[(k + 1) % 3], v[(k + 2) % 3]))
                .cloned()
                .unwrap_or_default();
            for p in list {
                if self.vuse[p] > 0 {
                    if let Some(&owner) = self.iface_owner.get(&p) {
                        if !self.leaf[owner] && self.nodes[owner].nchild == 3 {
                            self.convert_family(owner, st);
                        }
                    }
                }
            }
        }
        self.refine_red(n);
        st.red += 1;
    }

    /// Try to split a partially flooded leaf along the shoreline at wet
    /// level `c`. Returns false when the split is rejected.
    pub fn refine_wet_dry(&mut self, n: usize, c: f64) -> bool {
        let node = self.nodes[n].clone();
        let pc = self.corners(n);
        let b = node.v.map(|v| self.vb[v]);
        let Some(sh) = shoreline(pc, b, c) else {
            return false;
        };
        let tol = 1e-9;
        let (ka, kb) = (sh.ends[0].0, sh.ends[1].0);
        for e in &sh.ends {
            if !(e.1 > tol && e.1 < 1.0 - tol) {
                return false;
            }
        }
        for &k in &[ka, kb] {
            let mut pts = Vec::new();
            self.edge_points(node.v[(k + 1) % 3], node.v[(k + 2) % 3], &mut pts);
            if !pts.is_empty()
                || self
                    .mid
                    .get(&key(node.v[(k + 1) % 3], node.v[(k + 2) % 3]))
                    .is_some_and(|&m| self.vuse[m] > 0)
            {
                return false;
            }
        }
        let kc = 3 - ka - kb;
        let (a, bb) = ((kc + 1) % 3, (kc + 2) % 3);
        // X on the edge (kc, a) = edge bb; Y on the edge (bb, kc) = edge a.
        let end = |k: usize| sh.ends.iter().find(|e| e.0 == k).copied().unwrap();
        let ex = end(bb);
        let ey = end(a);
        let (px, py) = (ex.2, ey.2);
        let (pkc, pa, pb) = (pc[kc], pc[a], pc[bb]);
        let d_xb = (px[0] - pb[0]).hypot(px[1] - pb[1]);
        let d_ay = (pa[0] - py[0]).hypot(pa[1] - py[1]);
        let diag_xb = d_xb <= d_ay;
        let geo: [[[f64; 2]; 3]; 3] = if diag_xb {
            [[pkc, px, py], [px, pa, pb], [px, pb, py]]
        } else {
            [[pkc, px, py], [px, pa, py], [pa, pb, py]]
        };
        let parent_alt = tri_quality(pc).1;
        for g in &geo {
            let (ang, alt) = tri_quality(*g);
            if ang < self.quality.min_angle_deg || alt < self.quality.altitude_ratio * parent_alt {
                return false;
            }
        }
        let make = |h: &mut Self, e: (usize, f64, [f64; 2])| {
            let (p, q) = (node.v[(e.0 + 1) % 3], node.v[(e.0 + 2) % 3]);
            let bv = h.vb[p] + e.1 * (h.vb[q] - h.vb[p]);
            let id = h.push_vertex(e.2, bv);
            h.iface.entry(key(p, q)).or_default().push(id);
            h.iface_owner.insert(id, n);
            id
        };
        let x = make(self, ex);
        let y = make(self, ey);
        let (vkc, va, vbb) = (node.v[kc], node.v[a], node.v[bb]);
        let t = node.tags;
        let i = BoundaryTag::Interior;
        let kids: Vec<([usize; 3], [BoundaryTag; 3])> = if diag_xb {
            vec![
                ([vkc, x, y], [i, t[a], t[bb]]),
                ([x, va, vbb], [t[kc], i, t[bb]]),
                ([x, vbb, y], [t[a], i, i]),
            ]
        } else {
            vec![
                ([vkc, x, y], [i, t[a], t[bb]]),
                ([x, va, y], [i, i, t[bb]]),
                ([va, vbb, y], [t[a], i, t[kc]]),
            ]
        };
        self.add_children(n, NodeKind::WetDry, node.level + 1, &kids);
        true
    }

    /// Coarsen, refine and close; `flags` and `recon` follow the current
    /// active order.
    pub fn adapt(&mut self, flags: &[CellFlag], recon: Option<&ReconstructedField>) -> AdaptStats {
        let mut st = AdaptStats {
            first_new_node: self.nodes.len(),
            ..Default::default()
        };
        let old_active = self.active.clone();
        let mut flag = vec![CellFlag::Keep; self.nodes.len()];
        let mut wet_level: HashMap<usize, f64> = HashMap::new();
        for (i, &n) in old_active.iter().enumerate() {
            flag[n] = flags.get(i).copied().unwrap_or_default();
            if let Some(r) = recon {
                if r.cells[i].wetness == Wetness::Partial {
                    wet_level.insert(n, r.cells[i].level);
                }
            }
        }
        self.green_cache.clear();

        // Strip green closures; parents inherit the children's flags.
        for &n in &old_active {
            if self.nodes[n].kind != NodeKind::Green || !self.leaf[n] {
                continue;
            }
            let p = self.nodes[n].parent.unwrap();
            let kids: Vec<usize> = self.nodes[p].children().to_vec();
            let f: Vec<CellFlag> = kids.iter().map(|&c| flag[c]).collect();
            flag[p] = if f.contains(&CellFlag::Refine) {
                CellFlag::Refine
            } else if f.iter().all(|&x| x == CellFlag::Coarsen) {
                CellFlag::Coarsen
            } else {
                CellFlag::Keep
            };
            let s = self.nodes[p].split;
            self.collapse(p);
            self.green_cache.insert(p, (s, [kids[0], kids[1]]));
        }

        // Coarsen unanimous families of leaves.
        let mut parents: Vec<usize> = self
            .collect_leaves()
            .into_iter()
            .filter(|&n| flag[n] == CellFlag::Coarsen)
            .filter_map(|n| self.nodes[n].parent)
            .collect();
        parents.sort_unstable();
        parents.dedup();
        // All eligible families go at once; a parent left with two or more
        // hanging points would be red-refined straight back by the closure,
        // so those families are restored until nothing changes.
        let mut collapsed: Vec<(usize, Vec<usize>)> = Vec::new();
        for p in parents {
            let kids: Vec<usize> = self.nodes[p].children().to_vec();
            if kids.is_empty()
                || !kids
                    .iter()
                    .all(|&c| self.leaf[c] && flag[c] == CellFlag::Coarsen)
                || self.nodes[kids[0]].kind == NodeKind::Green
            {
                continue;
            }
            self.collapse(p);
            collapsed.push((p, kids));
        }
        loop {
            let before = collapsed.len();
            collapsed.retain(|(p, kids)| {
                let total: usize = self.hanging(*p).iter().map(Vec::len).sum();
                if total >= 2 {
                    self.attach(*p, kids);
                    false
                } else {
                    true
                }
            });
            if collapsed.len() == before {
                break;
            }
        }
        for (p, _) in &collapsed {
            flag[*p] = CellFlag::Keep;
        }
        st.coarsened += collapsed.len();

        // Refine flagged leaves.
        for n in self.collect_leaves() {
            if flag[n] != CellFlag::Refine || !self.leaf[n] {
                continue;
            }
            let node = &self.nodes[n];
            if node.kind == NodeKind::WetDry {
                let p = node.parent.unwrap();
                if !self.leaf[p] && self.nodes[p].nchild == 3 {
                    self.convert_family(p, &mut st);
                }
                continue;
            }
            if node.level >= self.max_level {
                continue;
            }
            if let Some(&c) = wet_level.get(&n) {
                if self.refine_wet_dry(n, c) {
                    st.wet_dry += 1;
                    continue;
                }
                st.fallback += 1;
            }
            self.red_prepared(n, &mut st);
        }

        self.close(&mut st);
        self.active = self.collect_leaves();
        st.changed = self.active != old_active;
        if st.changed {
            self.generation += 1;
        }
        st
    }

    /// Green/red closure to a conforming fixpoint.
    fn close(&mut self, st: &mut AdaptStats) {
        loop {
            let mut changed = false;
            // A green family stays only while its split point is the one
            // point hanging on the parent. Its own children also use that
            // point, so the test runs with the family detached.
            for n in self.collect_leaves() {
                let Some(p) = self.nodes[n].parent else {
                    continue;
                };
                if self.nodes[n].kind != NodeKind::Green
                    || !self.leaf[n]
                    || self.nodes[p].children()[0] != n
                {
                    continue;
                }
                let kids: Vec<usize> = self.nodes[p].children().to_vec();
                let s = self.nodes[p].split;
                self.collapse(p);
                if self.hanging(p).concat() == [s] {
                    self.attach(p, &kids);
                } else {
                    changed = true;
                }
            }
            for n in self.collect_leaves() {
                if !self.leaf[n] {
                    continue;
                }
                let h = self.hanging(n);
                let total: usize = h.iter().map(Vec::len).sum();
                if total == 0 {
                    continue;
                }
                changed = true;
                let kind = self.nodes[n].kind;
                if total == 1 && kind != NodeKind::Green {
                    let k = (0..3).find(|&k| !h[k].is_empty()).unwrap();
                    self.split_green(n, k, h[k][0]);
                    st.green += 1;
                    continue;
                }
                match kind {
                    NodeKind::Green => {
                        let p = self.nodes[n].parent.unwrap();
                        self.collapse(p);
                    }
                    NodeKind::WetDry => {
                        let p = self.nodes[n].parent.unwrap();
                        self.convert_family(p, st);
                    }
                    _ => {
                        if self.nodes[n].level >= self.max_level {
                            log::warn!("closure refines node {n} past the level cap");
                        }
                        self.red_prepared(n, st);
                    }
                }
            }
            if !changed {
                return;
            }
        }
    }

    /// Conforming triangulation of the active cells.
    pub fn snapshot(&self) -> Result<Snapshot, AmrError> {
        let mut remap = vec![NONE; self.verts.len()];
        let mut coords = Vec::new();
        let mut vb = Vec::new();
        let mut elements = Vec::with_capacity(self.active.len());
        let mut tags = Vec::with_capacity(self.active.len());
        for &n in &self.active {
            let node = &self.nodes[n];
            let mut el = [0; 3];
            for k in 0..3 {
                let v = node.v[k];
                if remap[v] == NONE {
                    remap[v] = coords.len();
                    coords.push(self.verts[v]);
                    vb.push(self.vb[v]);
                }
                el[k] = remap[v];
            }
            elements.push(el);
            tags.push(node.tags);
        }
        let tri = Triangulation::build(coords, elements, tags)?;
        let bathy = Bathymetry::from_vertex_values(&tri, vb)?;
        Ok(Snapshot {
            tri,
            bathy,
            nodes: self.active.clone(),
            levels: self.active.iter().map(|&n| self.nodes[n].level).collect(),
            kinds: self.active.iter().map(|&n| self.nodes[n].kind).collect(),
            generation: self.generation,
        })
    }

    /// Move a state from `old` to `new` (both snapshots of this hierarchy,
    /// `new` taken after the adaptation described by `stats`).
    pub fn project_state(
        &self,
        old: &Snapshot,
        old_state: &StateField,
        old_recon: &ReconstructedField,
        new: &Snapshot,
    ) -> Result<StateField, AmrError> {
        if old_state.generation != old.generation {
            return Err(AmrError::Generation {
                expected: old.generation,
                got: old_state.generation,
            });
        }
        let mut old_index: HashMap<usize, usize> = HashMap::with_capacity(old.nodes.len());
        let mut desc: HashMap<usize, (Vec<usize>, [f64; 3])> = HashMap::new();
        for (i, &n) in old.nodes.iter().enumerate() {
            old_index.insert(n, i);
            let a = old.tri.cells[i].area;
            let u = old_state.u[i];
            let mut p = self.nodes[n].parent;
            while let Some(x) = p {
                let e = desc.entry(x).or_insert_with(|| (Vec::new(), [0.0; 3]));
                e.0.push(i);
                for c in 0..3 {
                    e.1[c] += a * u[c];
                }
                p = self.nodes[x].parent;
            }
        }

        let nn = new.nodes.len();
        let mut out = vec![[0.0; 3]; nn];
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, &n) in new.nodes.iter().enumerate() {
            let area = new.tri.cells[i].area;
            if let Some(&o) = old_index.get(&n) {
                out[i] = old_state.u[o];
                continue;
            }
            if let Some((_, sum)) = desc.get(&n) {
                out[i] = sum.map(|s| s / area);
                continue;
            }
            let mut x = n;
            let src = loop {
                let Some(p) = self.nodes[x].parent else {
                    return Err(AmrError::Orphan { node: n });
                };
                x = p;
                if old_index.contains_key(&x) || desc.contains_key(&x) {
                    break x;
                }
            };
            let c = new.tri.cells[i].centroid;
            let o = match old_index.get(&src) {
                Some(&o) => o,
                None => {
                    let list = &desc[&src].0;
                    *list
                        .iter()
                        .max_by(|&&a, &&b| {
                            let la = barycentric(old.tri.corners(a), c)
                                .into_iter()
                                .fold(f64::INFINITY, f64::min);
                            let lb = barycentric(old.tri.corners(b), c)
                                .into_iter()
                                .fold(f64::INFINITY, f64::min);
                            la.total_cmp(&lb)
                        })
                        .unwrap()
                }
            };
            let b = new.bathy.cell_mean[i];
            let s = old_recon.cells[o].point(c, b);
            out[i] = [b + s.h, s.hu(), s.hv()];
            groups.entry(src).or_default().push(i);
        }

        // Restore the integrals of every group of freshly created cells.
        let mut keys: Vec<usize> = groups.keys().copied().collect();
        keys.sort_unstable();
        for x in keys {
            let cells = &groups[&x];
            let target = match old_index.get(&x) {
                Some(&o) => old_state.u[o].map(|u| u * old.tri.cells[o].area),
                None => desc[&x].1,
            };
            let mut area = 0.0;
            let mut bottom = 0.0;
            let mut hsum = 0.0;
            let mut q = [0.0; 2];
            for &i in cells {
                let a = new.tri.cells[i].area;
                let h = out[i][0] - new.bathy.cell_mean[i];
                area += a;
                bottom += a * new.bathy.cell_mean[i];
                hsum += a * h;
                q[0] += a * out[i][1];
                q[1] += a * out[i][2];
            }
            let h_target = target[0] - bottom;
            for &i in cells {
                let bj = new.bathy.cell_mean[i];
                let h = out[i][0] - bj;
                let hn = if hsum > 0.0 {
                    h * (h_target / hsum)
                } else {
                    h_target / area
                };
                let wgt = if hsum > 0.0 { h / hsum } else { 1.0 / area };
                out[i][0] = bj + hn;
                out[i][1] += (target[1] - q[0]) * wgt;
                out[i][2] += (target[2] - q[1]) * wgt;
            }
        }
        Ok(StateField::new(out, new.generation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_mesh, Rect, SideTags};
    use crate::reconstruction::ReconParams;

    fn hier(n: usize, levels: u32) -> MeshHierarchy {
        let t = uniform_mesh(
            &Rect::new(0.0, 1.0, 0.0, 1.0),
            n,
            n,
            &SideTags::all(BoundaryTag::Wall),
        )
        .unwrap();
        let vb = vec![0.0; t.num_vertices()];
        MeshHierarchy::new(&t, vb, levels, Quality::default())
    }

    #[test]
    fn red_children_geometry() {
        let t = Triangulation::build(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]],
            vec![[0, 1, 2]],
            vec![[BoundaryTag::Wall; 3]],
        )
        .unwrap();
        let mut h = MeshHierarchy::new(&t, vec![0.0; 3], 2, Quality::default());
        let kids = h.refine_red(0);
        let centre = h.corners(kids[3]);
        for p in [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] {
            assert!(centre.contains(&p));
        }
        h.active = h.collect_leaves();
        let s = h.snapshot().unwrap();
        assert_eq!(s.tri.num_cells(), 4);
        for c in &s.tri.cells {
            assert!((c.area - 0.5).abs() < 1e-15);
        }
        let parent_alt = t.cells[0].edges.map(|e| e.altitude);
        let mut child_alt: Vec<f64> = s.tri.cells[0].edges.iter().map(|e| e.altitude).collect();
        let mut want: Vec<f64> = parent_alt.iter().map(|a| a / 2.0).collect();
        child_alt.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in child_alt.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn all_keep_is_identity() {
        let mut h = hier(3, 2);
        let before = h.active().to_vec();
        let st = h.adapt(&vec![CellFlag::Keep; before.len()], None);
        assert!(!st.changed);
        assert_eq!(h.active(), &before[..]);
    }

    #[test]
    fn coarsen_needs_unanimity_and_reuses_vertices() {
        let mut h = hier(2, 2);
        let target = h.active()[3];
        let mut flags = vec![CellFlag::Keep; h.active().len()];
        flags[3] = CellFlag::Refine;
        h.adapt(&flags, None);
        let s1 = h.snapshot().unwrap();
        let nv = h.verts.len();
        let kids: Vec<usize> = h.nodes[target].children().to_vec();
        let mut flags: Vec<CellFlag> = h
            .active()
            .iter()
            .map(|n| {
                if kids.contains(n) {
                    CellFlag::Coarsen
                } else {
                    CellFlag::Keep
                }
            })
            .collect();
        let first = h.active().iter().position(|n| kids.contains(n)).unwrap();
        flags[first] = CellFlag::Keep;
        h.adapt(&flags, None);
        assert_eq!(h.snapshot().unwrap().tri.num_cells(), s1.tri.num_cells());

        let flags: Vec<CellFlag> = h
            .active()
            .iter()
            .map(|n| {
                if kids.contains(n) {
                    CellFlag::Coarsen
                } else {
                    CellFlag::Keep
                }
            })
            .collect();
        h.adapt(&flags, None);
        assert_eq!(h.snapshot().unwrap().tri.num_cells(), 8);

        let mut flags = vec![CellFlag::Keep; h.active().len()];
        let pos = h.active().iter().position(|&n| n == target).unwrap();
        flags[pos] = CellFlag::Refine;
        h.adapt(&flags, None);
        assert_eq!(h.verts.len(), nv);
        let s2 = h.snapshot().unwrap();
        assert_eq!(s2.tri.num_cells(), s1.tri.num_cells());
    }

    #[test]
    fn wet_dry_split_partitions_parent() {
        let t = Triangulation::build(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![[BoundaryTag::Wall; 3]],
        )
        .unwrap();
        let mut h = MeshHierarchy::new(&t, vec![0.0, 1.0, 0.0], 1, Quality::default());
        // Shoreline x = 0.5 joins two edge midpoints.
        assert!(h.refine_wet_dry(0, 0.5));
        h.active = h.collect_leaves();
        let s = h.snapshot().unwrap();
        assert_eq!(s.tri.num_cells(), 3);
        assert!((s.tri.total_area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sliver_shoreline_is_rejected() {
        let t = Triangulation::build(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![[BoundaryTag::Wall; 3]],
        )
        .unwrap();
        let mut h = MeshHierarchy::new(&t, vec![0.0, 1.0, 0.0], 1, Quality::default());
        assert!(!h.refine_wet_dry(0, 0.98));
        assert_eq!(h.nodes[0].nchild, 0);
    }

    #[test]
    fn projection_of_lake() {
        let mut h = hier(3, 2);
        let s0 = h.snapshot().unwrap();
        let u = StateField::new(vec![[1.0, 0.0, 0.0]; s0.tri.num_cells()], s0.generation);
        let rp = ReconParams {
            eps: 1e-4,
            tau: 1e-6,
            kappa_dry: 1e-12,
        };
        let r = ReconstructedField::compute(&s0.tri, &s0.bathy, &u, &rp);
        let mut flags = vec![CellFlag::Keep; s0.tri.num_cells()];
        flags[7] = CellFlag::Refine;
        h.adapt(&flags, Some(&r));
        let s1 = h.snapshot().unwrap();
        let v = h.project_state(&s0, &u, &r, &s1).unwrap();
        assert_eq!(v.generation, s1.generation);
        for x in &v.u {
            assert!((x[0] - 1.0).abs() < 1e-15 && x[1] == 0.0 && x[2] == 0.0);
        }
    }
}

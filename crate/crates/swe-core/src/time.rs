//! Reference step, cell levels, draining steps, boundary ghosts and the
//! multirate two-stage SSPRK2 macro step.
//!
//! Levels advance recursively: a level-`l` substep runs its first stage,
//! then all substeps of level `l+1` inside the same interval, then its second
//! stage. Neighbors on a coarser level are interpolated linearly in time
//! between their last two available values. Fluxes through coarse/fine
//! interfaces are integrated on the fine side and the difference is
//! refluxed into the coarse cell at its second stage so that mass is
//! conserved exactly across levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bathymetry::Bathymetry;
use crate::flux::{
    edge_flux, local_speeds, manning_friction, source_quadrature, Conserved, SideState, SourceInput,
};
use crate::mesh::{BoundaryTag, Neighbor, Triangulation};
use crate::reconstruction::{
    cell_center, reconstruct_cell, CellCenter, CellRecon, ReconParams, StateField, Wetness,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("non-finite state in cell {cell} at t = {t}")]
    NonFinite { cell: usize, t: f64 },
    #[error("macro step at t = {t} still unstable after {retries} step halvings")]
    TooManyRetries { t: f64, retries: usize },
    #[error("state has {got} cells but the mesh has {expected}")]
    Generation { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub g: f64,
    pub sigma_flux: f64,
    pub eps: f64,
    /// `τ`; `None` means the largest squared cell area of the current mesh.
    pub tau: Option<f64>,
    /// `None` means `1e-12·max(1, max|B|)`.
    pub kappa_dry: Option<f64>,
    pub n_b: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub mu_abort: f64,
    pub max_retries: usize,
    /// Override of the reference step.
    pub fixed_dt: Option<f64>,
    /// Put every cell on the finest level (single-rate reference runs).
    pub single_rate: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            g: 9.8,
            sigma_flux: 1e-6,
            eps: 1e-4,
            tau: None,
            kappa_dry: None,
            n_b: 0.0,
            cfl: 0.9,
            dt_max: 1e-2,
            mu_abort: 4.0,
            max_retries: 30,
            fixed_dt: None,
            single_rate: false,
        }
    }
}

impl SolverParams {
    pub fn recon_params(&self, tri: &Triangulation, bathy: &Bathymetry) -> ReconParams {
        let a = tri.max_area();
        ReconParams {
            eps: self.eps,
            tau: self.tau.unwrap_or(a * a),
            kappa_dry: self.kappa_dry.unwrap_or_else(|| bathy.kappa_dry()),
        }
    }
}

/// `Δt = cfl·max_j(min_k r_jk) / (6·a_max)`, or `dt_max` when nothing moves.
pub fn reference_dt(max_min_altitude: f64, a_max: f64, cfl: f64, sigma: f64, dt_max: f64) -> f64 {
    if a_max < sigma {
        dt_max
    } else {
        cfl * max_min_altitude / (6.0 * a_max)
    }
}

/// Smallest `l ≥ 0` with `2^l ≥ ratio`.
pub fn level_of(ratio: f64) -> u32 {
    if ratio <= 1.0 {
        return 0;
    }
    (ratio.log2() - 1e-9).ceil().max(0.0) as u32
}

/// `2^{-l}·Δt / max(μ, 1)`.
#[inline]
pub fn local_dt(level: u32, dt: f64, mu: f64) -> f64 {
    dt / f64::from(1u32 << level) / mu.max(1.0)
}

/// `|T|·h̄ / Σ_k max(0, H_jk)`; infinite without outflow, zero when dry.
#[inline]
pub fn draining_dt(area: f64, hbar: f64, mass_out: [f64; 3]) -> f64 {
    if hbar <= 0.0 {
        return 0.0;
    }
    let out: f64 = mass_out.iter().map(|h| h.max(0.0)).sum();
    if out == 0.0 {
        f64::INFINITY
    } else {
        area * hbar / out
    }
}

/// Edge step: outflow is limited by this cell's draining time, inflow by the
/// neighbor's.
#[inline]
pub fn edge_dt(dt_l: f64, mass_flux: f64, drain_own: f64, drain_nb: f64) -> f64 {
    if mass_flux > 0.0 {
        dt_l.min(drain_own)
    } else {
        dt_l.min(drain_nb)
    }
}

/// Ghost state across a physical boundary edge.
#[inline]
pub fn ghost_state(tag: BoundaryTag, own: SideState, n: [f64; 2]) -> SideState {
    match tag {
        BoundaryTag::Wall => {
            let un = own.u * n[0] + own.v * n[1];
            SideState {
                u: own.u - 2.0 * un * n[0],
                v: own.v - 2.0 * un * n[1],
                ..own
            }
        }
        _ => own,
    }
}

#[derive(Clone, Debug, Default)]
pub struct LevelPartition {
    pub level: Vec<u32>,
    pub members: Vec<Vec<usize>>,
    /// Members and their face neighbors.
    pub ring1: Vec<Vec<usize>>,
    /// `ring1` and its face neighbors.
    pub ring2: Vec<Vec<usize>>,
}

impl LevelPartition {
    pub fn from_levels(tri: &Triangulation, level: Vec<u32>) -> Self {
        let nl = level.iter().copied().max().map_or(0, |m| m as usize + 1);
        let mut members = vec![Vec::new(); nl];
        for (j, &l) in level.iter().enumerate() {
            members[l as usize].push(j);
        }
        let mut mark = vec![usize::MAX; tri.num_cells()];
        let mut ring1 = Vec::with_capacity(nl);
        let mut ring2 = Vec::with_capacity(nl);
        for (l, m) in members.iter().enumerate() {
            let tag1 = 2 * l;
            let grow = |src: &[usize], mark: &mut Vec<usize>, tag: usize| {
                let mut out: Vec<usize> = Vec::with_capacity(src.len() * 2);
                for &j in src {
                    if mark[j] != tag {
                        mark[j] = tag;
                        out.push(j);
                    }
                }
                for &j in src {
                    for q in tri.cells[j].neighbor_cells() {
                        if mark[q] != tag {
                            mark[q] = tag;
                            out.push(q);
                        }
                    }
                }
                out.sort_unstable();
                out
            };
            let r1 = grow(m, &mut mark, tag1);
            let r2 = grow(&r1, &mut mark, tag1 + 1);
            ring1.push(r1);
            ring2.push(r2);
        }
        LevelPartition {
            level,
            members,
            ring1,
            ring2,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.members.len()
    }
}

/// Levels from the altitude ratios `max_j(min_k r) / min_k r_jk`.
pub fn assign_levels(tri: &Triangulation) -> LevelPartition {
    let big = tri.max_min_altitude();
    let level = tri
        .cells
        .iter()
        .map(|c| level_of(big / c.min_altitude()))
        .collect();
    LevelPartition::from_levels(tri, level)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub dt: f64,
    pub a_max: f64,
    /// Substeps taken per level.
    pub substeps: Vec<usize>,
    /// Smallest mean depth seen after any stage of any cell.
    pub min_h: f64,
    /// Stage results with `h̄ < −κ_dry`.
    pub violations: usize,
    pub retries: usize,
    pub promotions: usize,
}

#[derive(Clone, Debug)]
pub struct MacroStep {
    pub t_new: f64,
    pub stats: StepStats,
}

enum Outcome {
    Done,
    Abort,
    Promote(Vec<usize>),
}

type EdgeVec = [[f64; 3]; 3];

struct Stepper<'a> {
    tri: &'a Triangulation,
    bathy: &'a Bathymetry,
    p: &'a SolverParams,
    rp: ReconParams,
    part: LevelPartition,
    all: Vec<usize>,
    base: Vec<Conserved>,
    stage: Vec<Conserved>,
    vals: Vec<Conserved>,
    centers: Vec<CellCenter>,
    recon: Vec<CellRecon>,
    hflux: Vec<EdgeVec>,
    espeed: Vec<[f64; 3]>,
    speed: Vec<f64>,
    drain: Vec<f64>,
    phi: Vec<EdgeVec>,
    reg: Vec<EdgeVec>,
    interval: Vec<(f64, f64)>,
    a_max: f64,
    dt: f64,
    stats: StepStats,
    negative: Vec<usize>,
}

impl<'a> Stepper<'a> {
    fn new(
        tri: &'a Triangulation,
        bathy: &'a Bathymetry,
        p: &'a SolverParams,
        part: LevelPartition,
        u: &[Conserved],
    ) -> Self {
        let n = tri.num_cells();
        let nl = part.num_levels();
        Stepper {
            tri,
            bathy,
            p,
            rp: p.recon_params(tri, bathy),
            part,
            all: (0..n).collect(),
            base: u.to_vec(),
            stage: u.to_vec(),
            vals: u.to_vec(),
            centers: vec![CellCenter::default(); n],
            recon: vec![CellRecon::default(); n],
            hflux: vec![[[0.0; 3]; 3]; n],
            espeed: vec![[0.0; 3]; n],
            speed: vec![0.0; n],
            drain: vec![0.0; n],
            phi: vec![[[0.0; 3]; 3]; n],
            reg: vec![[[0.0; 3]; 3]; n],
            interval: vec![(0.0, 0.0); nl],
            a_max: 0.0,
            dt: 0.0,
            stats: StepStats {
                substeps: vec![0; nl],
                min_h: f64::INFINITY,
                ..Default::default()
            },
            negative: Vec::new(),
        }
    }

    fn value_at(&self, q: usize, l_req: usize, stage2: bool, tau: f64) -> Conserved {
        let lq = self.part.level[q] as usize;
        if lq < l_req {
            let (a, b) = self.interval[lq];
            let s = if b > a {
                ((tau - a) / (b - a)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (u0, u1) = (self.base[q], self.stage[q]);
            [0, 1, 2].map(|i| u0[i] + s * (u1[i] - u0[i]))
        } else if lq == l_req && stage2 {
            self.stage[q]
        } else {
            self.base[q]
        }
    }

    fn side_states(&self, j: usize, k: usize) -> (SideState, SideState) {
        let cell = &self.tri.cells[j];
        let e = &cell.edges[k];
        let own = self.recon[j].point(e.midpoint, self.bathy.edge_values[j][k]);
        let nb = match e.neighbor {
            Neighbor::Cell { cell: q, edge: kq } => self.recon[q].point(
                self.tri.cells[q].edges[kq].midpoint,
                self.bathy.edge_values[q][kq],
            ),
            Neighbor::PeriodicGhost { cell: q, point } => {
                self.recon[q].point(point, self.bathy.eval(self.tri, q, point))
            }
            Neighbor::Boundary(tag) => ghost_state(tag, own, e.normal),
        };
        (own, nb)
    }

    fn cell_fluxes(&self, j: usize, same: impl Fn(usize) -> bool) -> (EdgeVec, [f64; 3]) {
        let cell = &self.tri.cells[j];
        let mut h = [[0.0; 3]; 3];
        let mut smax = [0.0; 3];
        for k in 0..3 {
            if let Neighbor::Cell { cell: q, .. } = cell.edges[k].neighbor {
                if q < j && same(q) {
                    continue;
                }
            }
            let e = &cell.edges[k];
            let (own, nb) = self.side_states(j, k);
            let sp = local_speeds(&own, &nb, e.normal, self.p.g);
            smax[k] = sp.max();
            h[k] = edge_flux(
                &own,
                &nb,
                sp,
                e.length,
                e.normal,
                self.p.g,
                self.p.sigma_flux,
            );
        }
        (h, smax)
    }

    /// Reconstruct around `set` and compute its edge fluxes, speeds and
    /// draining times at time `tau`.
    fn evaluate(&mut self, l: Option<usize>, stage2: bool, tau: f64) {
        let (set, r1, r2) = match l {
            Some(l) => (
                &self.part.members[l],
                &self.part.ring1[l],
                &self.part.ring2[l],
            ),
            None => (&self.all, &self.all, &self.all),
        };
        let lr = l.unwrap_or(0);
        let this = &*self;
        let vals: Vec<Conserved> = r2
            .par_iter()
            .map(|&q| this.value_at(q, lr, stage2, tau))
            .collect();
        let (set, r1, r2) = (set.clone(), r1.clone(), r2.clone());
        for (&q, v) in r2.iter().zip(vals) {
            self.vals[q] = v;
        }
        let this = &*self;
        let centers: Vec<CellCenter> = r2
            .par_iter()
            .map(|&q| {
                cell_center(
                    this.bathy,
                    q,
                    this.tri.cells[q].area,
                    this.vals[q],
                    &this.rp,
                )
            })
            .collect();
        for (&q, c) in r2.iter().zip(centers) {
            self.centers[q] = c;
        }
        let this = &*self;
        let recon: Vec<CellRecon> = r1
            .par_iter()
            .map(|&q| reconstruct_cell(this.tri, this.bathy, q, &this.centers))
            .collect();
        for (&q, r) in r1.iter().zip(recon) {
            self.recon[q] = r;
        }
        let this = &*self;
        let level = &this.part.level;
        let same = |q: usize| l.is_none() || level[q] as usize == lr;
        let fl: Vec<(EdgeVec, [f64; 3])> =
            set.par_iter().map(|&j| this.cell_fluxes(j, same)).collect();
        for (&j, (h, s)) in set.iter().zip(fl) {
            self.hflux[j] = h;
            self.espeed[j] = s;
        }
        for &j in &set {
            for k in 0..3 {
                if let Neighbor::Cell { cell: q, edge: kq } = self.tri.cells[j].edges[k].neighbor {
                    if q < j && (l.is_none() || self.part.level[q] as usize == lr) {
                        let o = self.hflux[q][kq];
                        self.hflux[j][k] = [-o[0], -o[1], -o[2]];
                        self.espeed[j][k] = self.espeed[q][kq];
                    }
                }
            }
            let s = self.espeed[j];
            self.speed[j] = s[0].max(s[1]).max(s[2]);
        }
        for &j in &set {
            let h = self.vals[j][0] - self.bathy.cell_mean[j];
            let m = [
                self.hflux[j][0][0],
                self.hflux[j][1][0],
                self.hflux[j][2][0],
            ];
            self.drain[j] = draining_dt(self.tri.cells[j].area, h, m);
        }
    }

    fn nb_drain(&self, j: usize, k: usize, delta: f64) -> f64 {
        match self.tri.cells[j].edges[k].neighbor {
            Neighbor::Cell { cell, .. } | Neighbor::PeriodicGhost { cell, .. } => self.drain[cell],
            Neighbor::Boundary(_) => delta,
        }
    }

    /// `U − (1/|T|)Σ Δt_jk H_jk + δ S̄` from the current evaluation, plus
    /// the time-integrated edge fluxes `Δt_jk H_jk`.
    fn forward(&self, j: usize, u: Conserved, delta: f64) -> (Conserved, EdgeVec) {
        let cell = &self.tri.cells[j];
        let rec = &self.recon[j];
        let mut out = u;
        let mut int = [[0.0; 3]; 3];
        let mut ratios = [1.0; 3];
        let mut h_mid = [0.0; 3];
        for k in 0..3 {
            let h = self.hflux[j][k];
            let dtk = edge_dt(delta, h[0], self.drain[j], self.nb_drain(j, k, delta));
            ratios[k] = if delta > 0.0 { dtk / delta } else { 0.0 };
            for i in 0..3 {
                int[k][i] = dtk * h[i];
                out[i] -= int[k][i] / cell.area;
            }
            h_mid[k] = rec
                .point(cell.edges[k].midpoint, self.bathy.edge_values[j][k])
                .h;
        }
        let mut depth_vertex = [0.0; 3];
        for k in 0..3 {
            let b = self.bathy.corner_values[j][k];
            depth_vertex[k] = rec.surface(self.tri.vertex_pos(cell.vertices[k]), b) - b;
        }
        if rec.wetness != Wetness::Dry {
            let s = source_quadrature(
                &SourceInput {
                    area: cell.area,
                    lengths: cell.edges.map(|e| e.length),
                    normals: cell.edges.map(|e| e.normal),
                    h_mid,
                    ratios,
                    depth_vertex,
                    grad_w: rec.source_slope(),
                },
                self.p.g,
            );
            out[1] += delta * s[0];
            out[2] += delta * s[1];
        }
        (out, int)
    }

    fn friction(&self, j: usize, u: &mut Conserved, dt: f64) {
        if self.p.n_b > 0.0 {
            let h = u[0] - self.bathy.cell_mean[j];
            let (a, b) = manning_friction(h, u[1], u[2], self.p.n_b, self.p.g, dt, self.p.eps);
            u[1] = a;
            u[2] = b;
        }
    }

    /// Record the depth of the freshly written stage value; true if negative
    /// beyond the dry band.
    fn note_depth(&mut self, j: usize) -> bool {
        let h = self.stage[j][0] - self.bathy.cell_mean[j];
        self.stats.min_h = self.stats.min_h.min(h);
        h < -self.rp.kappa_dry
    }

    fn mu(&self, l: usize) -> f64 {
        if self.a_max < self.p.sigma_flux {
            return 1.0;
        }
        self.part.members[l]
            .iter()
            .map(|&j| self.speed[j])
            .fold(0.0, f64::max)
            / self.a_max
    }

    fn advance(&mut self, l: usize, t0: f64, t1: f64, first: &mut [bool]) -> Outcome {
        if l >= self.part.num_levels() {
            return Outcome::Done;
        }
        if self.part.members[l].is_empty() {
            return self.advance(l + 1, t0, t1, first);
        }
        let span = t1 - t0;
        let mut t = t0;
        loop {
            if first[l] {
                first[l] = false;
            } else {
                self.evaluate(Some(l), false, t);
            }
            let mu = self.mu(l);
            if mu > self.p.mu_abort {
                return Outcome::Abort;
            }
            let mut delta = local_dt(self.part.level_shift(l), self.dt, mu);
            let last = t + delta >= t1 - 1e-12 * span;
            if last {
                delta = t1 - t;
            }
            let t_next = if last { t1 } else { t + delta };
            self.interval[l] = (t, t_next);
            self.stats.substeps[l] += 1;

            let members = self.part.members[l].clone();
            let this = &*self;
            let st1: Vec<(Conserved, EdgeVec)> = members
                .par_iter()
                .map(|&j| this.forward(j, this.base[j], delta))
                .collect();
            for (&j, (mut u1, int)) in members.iter().zip(st1) {
                self.friction(j, &mut u1, delta);
                self.stage[j] = u1;
                for k in 0..3 {
                    self.phi[j][k] = int[k].map(|x| 0.5 * x);
                }
                if self.note_depth(j) {
                    self.stats.violations += 1;
                }
            }

            match self.advance(l + 1, t, t_next, first) {
                Outcome::Done => {}
                other => return other,
            }

            self.evaluate(Some(l), true, t_next);
            let this = &*self;
            let st2: Vec<(Conserved, EdgeVec)> = members
                .par_iter()
                .map(|&j| this.forward(j, this.stage[j], delta))
                .collect();
            let mut negative = Vec::new();
            for (&j, (r, int)) in members.iter().zip(st2) {
                let area = self.tri.cells[j].area;
                let u = self.base[j];
                let mut un = [
                    0.5 * u[0] + 0.5 * r[0],
                    0.5 * u[1] + 0.5 * r[1],
                    0.5 * u[2] + 0.5 * r[2],
                ];
                for k in 0..3 {
                    for i in 0..3 {
                        self.phi[j][k][i] += 0.5 * int[k][i];
                    }
                    let Some(q) = self.tri.cells[j].edges[k].neighbor.cell() else {
                        continue;
                    };
                    let lq = self.part.level[q] as usize;
                    if lq > l {
                        for i in 0..3 {
                            un[i] += (self.phi[j][k][i] + self.reg[j][k][i]) / area;
                        }
                        self.reg[j][k] = [0.0; 3];
                    }
                }
                self.friction(j, &mut un, delta);
                self.stage[j] = un;
                if self.note_depth(j) {
                    negative.push(j);
                }
            }
            for &j in &members {
                for k in 0..3 {
                    let e = &self.tri.cells[j].edges[k];
                    let (q, kq) = match e.neighbor {
                        Neighbor::Cell { cell, edge } => (cell, edge),
                        _ => continue,
                    };
                    if (self.part.level[q] as usize) < l {
                        for i in 0..3 {
                            self.reg[q][kq][i] += self.phi[j][k][i];
                        }
                    }
                }
                self.base[j] = self.stage[j];
            }
            if !negative.is_empty() {
                self.negative.extend(negative);
            }
            if last {
                break;
            }
            t = t_next;
        }
        if l == 0 && !self.negative.is_empty() {
            return Outcome::Promote(std::mem::take(&mut self.negative));
        }
        Outcome::Done
    }
}

impl LevelPartition {
    /// Exponent of the local step of level index `l`.
    fn level_shift(&self, l: usize) -> u32 {
        l as u32
    }

    /// Move each given cell to the finest level among its neighbors. Returns
    /// false if no cell could move.
    fn promote(&mut self, tri: &Triangulation, cells: &[usize]) -> bool {
        let mut level = self.level.clone();
        let mut moved = false;
        for &j in cells {
            let top = tri.cells[j]
                .neighbor_cells()
                .map(|q| self.level[q])
                .max()
                .unwrap_or(0);
            if top > level[j] {
                level[j] = top;
                moved = true;
            }
        }
        if moved {
            *self = LevelPartition::from_levels(tri, level);
        }
        moved
    }
}

/// Periodic ghost edges reference a partner cell by id through a point; the
/// reflux bookkeeping only covers conforming neighbors, so periodic ghosts
/// must never straddle two levels.
fn align_periodic_ghosts(tri: &Triangulation, part: &mut LevelPartition) {
    loop {
        let mut level = part.level.clone();
        let mut changed = false;
        for c in &tri.cells {
            for e in &c.edges {
                if let Neighbor::PeriodicGhost { cell: q, .. } = e.neighbor {
                    let m = level[c.id].max(level[q]);
                    if level[c.id] != m || level[q] != m {
                        level[c.id] = m;
                        level[q] = m;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return;
        }
        *part = LevelPartition::from_levels(tri, level);
    }
}

/// Prepare the partition actually used for stepping.
pub fn stepping_partition(
    tri: &Triangulation,
    geometric: &LevelPartition,
    p: &SolverParams,
) -> LevelPartition {
    let mut part = if p.single_rate {
        let top = geometric.num_levels().saturating_sub(1) as u32;
        LevelPartition::from_levels(tri, vec![top; tri.num_cells()])
    } else {
        geometric.clone()
    };
    align_periodic_ghosts(tri, &mut part);
    part
}

/// Advance `state` from `t` by one reference step (truncated at `t_end`).
pub fn evolve_macro_step(
    tri: &Triangulation,
    bathy: &Bathymetry,
    part: &LevelPartition,
    state: &mut StateField,
    t: f64,
    t_end: f64,
    p: &SolverParams,
) -> Result<MacroStep, SolverError> {
    if state.u.len() != tri.num_cells() {
        return Err(SolverError::Generation {
            expected: tri.num_cells(),
            got: state.u.len(),
        });
    }
    let mut part = stepping_partition(tri, part, p);
    let mut shrink = 1.0;
    let mut retries = 0;
    let mut promotions = 0;
    loop {
        let mut s = Stepper::new(tri, bathy, p, part.clone(), &state.u);
        s.evaluate(None, false, t);
        s.a_max = (0..tri.num_cells())
            .filter(|&j| s.centers[j].wetness != Wetness::Dry)
            .map(|j| s.speed[j])
            .fold(0.0, f64::max);
        let dt0 = p.fixed_dt.unwrap_or_else(|| {
            reference_dt(
                tri.max_min_altitude(),
                s.a_max,
                p.cfl,
                p.sigma_flux,
                p.dt_max,
            )
        });
        let mut dt = dt0 * shrink;
        if t + dt >= t_end - 1e-14 * t_end.abs().max(1.0) {
            dt = t_end - t;
        }
        s.dt = dt;
        let t1 = t + dt;
        let mut first = vec![true; part.num_levels()];
        match s.advance(0, t, t1, &mut first) {
            Outcome::Done => {
                for (j, u) in s.base.iter().enumerate() {
                    if !(u[0].is_finite() && u[1].is_finite() && u[2].is_finite()) {
                        return Err(SolverError::NonFinite { cell: j, t: t1 });
                    }
                }
                state.u = s.base;
                let mut stats = s.stats;
                stats.dt = dt;
                stats.a_max = s.a_max;
                stats.retries = retries;
                stats.promotions = promotions;
                return Ok(MacroStep { t_new: t1, stats });
            }
            Outcome::Abort => {
                shrink *= 0.5;
                retries += 1;
            }
            Outcome::Promote(cells) => {
                if part.promote(tri, &cells) {
                    align_periodic_ghosts(tri, &mut part);
                    promotions += 1;
                } else {
                    // Nothing left to refine in time; accept and report.
                    let mut stats = s.stats;
                    stats.dt = dt;
                    stats.a_max = s.a_max;
                    stats.retries = retries;
                    stats.promotions = promotions;
                    stats.violations += cells.len();
                    state.u = s.base;
                    return Ok(MacroStep { t_new: t1, stats });
                }
            }
        }
        if retries > p.max_retries {
            return Err(SolverError::TooManyRetries { t, retries });
        }
    }
}

/// Single-level right-hand side `−(1/|T|)Σ H_jk + S̄_j` with unit edge ratios,
/// for diagnostics and tests.
pub fn residual(
    tri: &Triangulation,
    bathy: &Bathymetry,
    state: &StateField,
    p: &SolverParams,
) -> Vec<Conserved> {
    let part = LevelPartition::from_levels(tri, vec![0; tri.num_cells()]);
    let mut s = Stepper::new(tri, bathy, p, part, &state.u);
    s.evaluate(None, false, 0.0);
    for d in s.drain.iter_mut() {
        *d = f64::INFINITY;
    }
    (0..tri.num_cells())
        .map(|j| {
            let (u1, _) = s.forward(j, [0.0; 3], 1.0);
            u1
        })
        .collect()
}

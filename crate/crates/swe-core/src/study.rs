//! Convergence tables, CPU ratios and the indicator comparison.

use serde::Serialize;

use crate::amr::Snapshot;
use crate::config::{Indicator, Settings};
use crate::driver::{run_full, RunError, RunReport};
use crate::mesh::Triangulation;
use crate::reconstruction::StateField;

/// Area of the intersection of two counterclockwise triangles.
pub fn intersection_area(a: [[f64; 2]; 3], b: [[f64; 2]; 3]) -> f64 {
    let mut poly: Vec<[f64; 2]> = a.to_vec();
    for k in 0..3 {
        let (p, q) = (b[k], b[(k + 1) % 3]);
        let side = |x: [f64; 2]| (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
        let mut out = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let (s, e) = (poly[i], poly[(i + 1) % poly.len()]);
            let (ds, de) = (side(s), side(e));
            if ds >= 0.0 {
                out.push(s);
            }
            if (ds >= 0.0) != (de >= 0.0) {
                let t = ds / (ds - de);
                out.push([s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])]);
            }
        }
        poly = out;
        if poly.len() < 3 {
            return 0.0;
        }
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        twice += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * twice.max(0.0)
}

/// Bucket grid over cell bounding boxes.
pub struct CellGrid {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

fn bbox(t: [[f64; 2]; 3]) -> [f64; 4] {
    [
        t[0][0].min(t[1][0]).min(t[2][0]),
        t[0][1].min(t[1][1]).min(t[2][1]),
        t[0][0].max(t[1][0]).max(t[2][0]),
        t[0][1].max(t[1][1]).max(t[2][1]),
    ]
}

impl CellGrid {
    pub fn new(tri: &Triangulation) -> Self {
        let b = tri.bbox;
        let n = ((tri.num_cells() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (n, n);
        let dx = (b.x1 - b.x0) / nx as f64;
        let dy = (b.y1 - b.y0) / ny as f64;
        let mut g = CellGrid {
            x0: b.x0,
            y0: b.y0,
            dx,
            dy,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for c in 0..tri.num_cells() {
            let (i0, j0, i1, j1) = g.range(bbox(tri.corners(c)));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    g.buckets[j * nx + i].push(c);
                }
            }
        }
        g
    }

    fn range(&self, bb: [f64; 4]) -> (usize, usize, usize, usize) {
        let ix = |x: f64| (((x - self.x0) / self.dx).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = |y: f64| (((y - self.y0) / self.dy).floor().max(0.0) as usize).min(self.ny - 1);
        (ix(bb[0]), iy(bb[1]), ix(bb[2]), iy(bb[3]))
    }

    /// Cells whose bounding box may meet `bb`, sorted and unique.
    pub fn candidates(&self, bb: [f64; 4]) -> Vec<usize> {
        let (i0, j0, i1, j1) = self.range(bb);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.buckets[j * self.nx + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Area-weighted average of a piecewise-constant field over each cell of `onto`.
pub fn restrict(from: &Triangulation, values: &[f64], onto: &Triangulation) -> Vec<f64> {
    let grid = CellGrid::new(from);
    (0..onto.num_cells())
        .map(|j| {
            let t = onto.corners(j);
            let mut a = 0.0;
            let mut s = 0.0;
            for c in grid.candidates(bbox(t)) {
                let x = intersection_area(t, from.corners(c));
                a += x;
                s += x * values[c];
            }
            if a > 0.0 {
                s / a
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// `Σ|T_j|·|w_j − w_ref,j|` with the reference restricted onto the test mesh.
pub fn l1_error(test: &Snapshot, u: &StateField, reference: &Snapshot, u_ref: &StateField) -> f64 {
    let w_ref: Vec<f64> = u_ref.u.iter().map(|x| x[0]).collect();
    let r = restrict(&reference.tri, &w_ref, &test.tri);
    test.tri
        .cells
        .iter()
        .zip(&u.u)
        .zip(&r)
        .map(|((c, x), w)| c.area * (x[0] - w).abs())
        .sum()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConvergenceRow {
    pub base_n: usize,
    pub max_level: u32,
    pub cells: usize,
    pub l1: f64,
    pub rate: Option<f64>,
}

pub fn rates(errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|i| {
            if i == 0 {
                None
            } else {
                Some((errors[i - 1] / errors[i]).log2())
            }
        })
        .collect()
}

/// Reference on a uniform mesh with `reference_n`, then the test meshes
/// `2×N×N` (as base meshes when `settings.max_level > 0`).
pub fn convergence_study(
    settings: &Settings,
    meshes: &[usize],
    reference_n: usize,
) -> Result<Vec<ConvergenceRow>, RunError> {
    if meshes.iter().any(|&n| n >= reference_n) {
        return Err(RunError::Config(crate::config::ConfigError::Invalid {
            field: "meshes",
            msg: format!("reference {reference_n} must be finer than every test mesh"),
        }));
    }
    let mut rs = settings.clone();
    rs.max_level = 0;
    rs.base_n = reference_n;
    rs.output_dir = None;
    let (_, ref_snap, ref_u) = run_full(rs)?;
    convergence_against(settings, meshes, &ref_snap, &ref_u)
}

pub fn convergence_against(
    settings: &Settings,
    meshes: &[usize],
    ref_snap: &Snapshot,
    ref_u: &StateField,
) -> Result<Vec<ConvergenceRow>, RunError> {
    let mut rows = Vec::new();
    for &n in meshes {
        let mut s = settings.clone();
        s.base_n = n;
        s.output_dir = None;
        let (_, snap, u) = run_full(s)?;
        rows.push(ConvergenceRow {
            base_n: n,
            max_level: settings.max_level,
            cells: snap.tri.num_cells(),
            l1: l1_error(&snap, &u, ref_snap, ref_u),
            rate: None,
        });
    }
    let r = rates(&rows.iter().map(|r| r.l1).collect::<Vec<_>>());
    for (row, rate) in rows.iter_mut().zip(r) {
        row.rate = rate;
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CpuRatioRow {
    pub max_level: u32,
    pub uniform_n: usize,
    pub uniform_cells: usize,
    pub adaptive_base_n: usize,
    pub adaptive_final_cells: usize,
    pub adaptive_max_cells: usize,
    pub uniform_s: f64,
    pub adaptive_s: f64,
    pub adaptive_grid_s: f64,
    /// `CPU_uniform / CPU_adaptive`.
    pub ratio: f64,
    /// Same with grid generation removed from the adaptive time.
    pub ratio_without_grid: f64,
}

/// Uniform `2·(base·2^M)²` against adaptive from `2·base²` for each level.
pub fn cpu_ratio(
    settings: &Settings,
    base_n: usize,
    levels: &[u32],
) -> Result<Vec<CpuRatioRow>, RunError> {
    let mut rows = Vec::new();
    for &m in levels {
        let mut u = settings.clone();
        u.max_level = 0;
        u.base_n = base_n << m;
        u.output_dir = None;
        let (ur, us, _) = run_full(u.clone())?;
        let mut a = settings.clone();
        a.max_level = m;
        a.base_n = base_n;
        a.output_dir = None;
        let (ar, asnap, _) = run_full(a)?;
        rows.push(cpu_row(
            m,
            &u,
            &ur,
            us.tri.num_cells(),
            base_n,
            &ar,
            asnap.tri.num_cells(),
        ));
    }
    Ok(rows)
}

fn cpu_row(
    m: u32,
    u: &Settings,
    ur: &RunReport,
    uc: usize,
    base_n: usize,
    ar: &RunReport,
    ac: usize,
) -> CpuRatioRow {
    let ut = ur.timing.total_s;
    let at = ar.timing.total_s;
    CpuRatioRow {
        max_level: m,
        uniform_n: u.base_n,
        uniform_cells: uc,
        adaptive_base_n: base_n,
        adaptive_final_cells: ac,
        adaptive_max_cells: ar.max_cells,
        uniform_s: ut,
        adaptive_s: at,
        adaptive_grid_s: ar.timing.grid_s,
        ratio: ut / at,
        ratio_without_grid: ut / (at - ar.timing.grid_s).max(f64::MIN_POSITIVE),
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct IndicatorRun {
    pub indicator: Indicator,
    pub final_cells: usize,
    pub max_cells: usize,
    /// Fraction of the domain covered by refined cells at the end.
    pub refined_fraction: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct IndicatorComparison {
    pub runs: Vec<IndicatorRun>,
    /// Intersection over union of the two refined regions.
    pub overlap: f64,
}

fn refined_region(snap: &Snapshot) -> Vec<usize> {
    (0..snap.tri.num_cells())
        .filter(|&j| snap.levels[j] > 0)
        .collect()
}

/// Same scenario with the WLR and the gradient indicator.
pub fn compare_indicators(
    settings: &Settings,
    max_level: u32,
) -> Result<IndicatorComparison, RunError> {
    let mut runs = Vec::new();
    let mut snaps = Vec::new();
    for ind in [Indicator::Wlr, Indicator::Gradient] {
        let mut s = settings.clone();
        s.max_level = max_level;
        s.indicator = ind;
        if let Some(d) = &settings.output_dir {
            s.output_dir = Some(d.join(match ind {
                Indicator::Gradient => "gradient",
                _ => "wlr",
            }));
        }
        let (rep, snap, _) = run_full(s)?;
        let area: f64 = refined_region(&snap)
            .iter()
            .map(|&j| snap.tri.cells[j].area)
            .sum();
        runs.push(IndicatorRun {
            indicator: ind,
            final_cells: snap.tri.num_cells(),
            max_cells: rep.max_cells,
            refined_fraction: area / snap.tri.total_area(),
            total_s: rep.timing.total_s,
        });
        snaps.push(snap);
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    let mark = |s: &Snapshot| {
        s.levels
            .iter()
            .map(|&l| if l > 0 { 1.0 } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let on_a = restrict(&b.tri, &mark(b), &a.tri);
    let ma = mark(a);
    let mut inter = 0.0;
    let mut union = 0.0;
    for (j, c) in a.tri.cells.iter().enumerate() {
        let (x, y) = (ma[j], on_a[j]);
        inter += c.area * x.min(y);
        union += c.area * x.max(y);
    }
    Ok(IndicatorComparison {
        runs,
        overlap: if union > 0.0 { inter / union } else { 1.0 },
    })
}

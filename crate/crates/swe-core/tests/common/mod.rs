//! Helpers shared by the integration tests and the acceptance harness.
//!
//! The two oracles below are scalar transcriptions of the central-upwind
//! edge flux and of the well-balanced source quadrature. They are written
//! component by component on purpose and share nothing with the kernels in
//! `swe_core::flux` except the input types.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swe_core::amr::{CellFlag, MeshHierarchy, Quality};
use swe_core::flux::{SideState, SourceInput};
use swe_core::mesh::{uniform_mesh, BoundaryTag, Rect, SideTags, Triangulation};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Edge flux of one side pair with outward angle `theta`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_edge_flux(
    own: (f64, f64, f64, f64),
    nb: (f64, f64, f64, f64),
    theta: f64,
    len: f64,
    g: f64,
    sigma: f64,
) -> [f64; 3] {
    let (w1, h1, u1, v1) = own;
    let (w2, h2, u2, v2) = nb;
    let ct = theta.cos();
    let st = theta.sin();

    let lp1 = ct * u1 + st * v1 + (g * h1).sqrt();
    let lm1 = ct * u1 + st * v1 - (g * h1).sqrt();
    let lp2 = ct * u2 + st * v2 + (g * h2).sqrt();
    let lm2 = ct * u2 + st * v2 - (g * h2).sqrt();
    let a_out = f64::max(f64::max(lp1, lp2), 0.0);
    let a_in = -f64::min(f64::min(lm1, lm2), 0.0);

    // F and G of the own (1) and neighbour (2) point values.
    let f1_0 = h1 * u1;
    let f1_1 = h1 * u1 * u1 + 0.5 * g * h1 * h1;
    let f1_2 = h1 * u1 * v1;
    let g1_0 = h1 * v1;
    let g1_1 = h1 * v1 * u1;
    let g1_2 = h1 * v1 * v1 + 0.5 * g * h1 * h1;
    let f2_0 = h2 * u2;
    let f2_1 = h2 * u2 * u2 + 0.5 * g * h2 * h2;
    let f2_2 = h2 * u2 * v2;
    let g2_0 = h2 * v2;
    let g2_1 = h2 * v2 * u2;
    let g2_2 = h2 * v2 * v2 + 0.5 * g * h2 * h2;

    if a_in + a_out < sigma {
        return [
            0.5 * len * (ct * (f1_0 + f2_0) + st * (g1_0 + g2_0)),
            0.5 * len * (ct * (f1_1 + f2_1) + st * (g1_1 + g2_1)),
            0.5 * len * (ct * (f1_2 + f2_2) + st * (g1_2 + g2_2)),
        ];
    }
    let s = a_in + a_out;
    let h0 = len * ct / s * (a_in * f2_0 + a_out * f1_0)
        + len * st / s * (a_in * g2_0 + a_out * g1_0)
        - len * a_in * a_out / s * (w2 - w1);
    let hx = len * ct / s * (a_in * f2_1 + a_out * f1_1)
        + len * st / s * (a_in * g2_1 + a_out * g1_1)
        - len * a_in * a_out / s * (h2 * u2 - h1 * u1);
    let hy = len * ct / s * (a_in * f2_2 + a_out * f1_2)
        + len * st / s * (a_in * g2_2 + a_out * g1_2)
        - len * a_in * a_out / s * (h2 * v2 - h1 * v1);
    [h0, hx, hy]
}

/// Size of the terms that enter the flux, for relative comparisons.
pub fn flux_scale(own: (f64, f64, f64, f64), nb: (f64, f64, f64, f64), len: f64, g: f64) -> f64 {
    let m = |s: (f64, f64, f64, f64)| {
        let (w, h, u, v) = s;
        let c = (g * h).sqrt();
        let speed = u.abs() + v.abs() + c;
        (h * (u.abs() + v.abs()) * speed + g * h * h + speed * (w.abs() + h * (u.abs() + v.abs())))
            .max(1e-300)
    };
    len * (m(own) + m(nb))
}

/// Source quadrature with edges given by angle, vertex depths `d` and the
/// cell's surface slopes.
#[allow(clippy::too_many_arguments)]
pub fn oracle_source(
    area: f64,
    len: [f64; 3],
    theta: [f64; 3],
    ratio: [f64; 3],
    h_mid: [f64; 3],
    d: [f64; 3],
    wx: f64,
    wy: f64,
    g: f64,
) -> [f64; 2] {
    let s2 = g / (2.0 * area)
        * (len[0] * theta[0].cos() * ratio[0] * h_mid[0] * h_mid[0]
            + len[1] * theta[1].cos() * ratio[1] * h_mid[1] * h_mid[1]
            + len[2] * theta[2].cos() * ratio[2] * h_mid[2] * h_mid[2])
        - g / 3.0 * (d[0] * wx + d[1] * wx + d[2] * wx);
    let s3 = g / (2.0 * area)
        * (len[0] * theta[0].sin() * ratio[0] * h_mid[0] * h_mid[0]
            + len[1] * theta[1].sin() * ratio[1] * h_mid[1] * h_mid[1]
            + len[2] * theta[2].sin() * ratio[2] * h_mid[2] * h_mid[2])
        - g / 3.0 * (d[0] * wy + d[1] * wy + d[2] * wy);
    [s2, s3]
}

pub fn source_scale(
    area: f64,
    len: [f64; 3],
    ratio: [f64; 3],
    h_mid: [f64; 3],
    d: [f64; 3],
    wx: f64,
    wy: f64,
    g: f64,
) -> f64 {
    let edge: f64 = (0..3)
        .map(|k| len[k] * ratio[k] * h_mid[k] * h_mid[k])
        .sum();
    let vert: f64 = d.iter().map(|x| x.abs()).sum::<f64>() * (wx.abs() + wy.abs());
    g / (2.0 * area) * edge + g / 3.0 * vert
}

pub fn side(s: (f64, f64, f64, f64)) -> SideState {
    SideState {
        w: s.0,
        h: s.1,
        u: s.2,
        v: s.3,
    }
}

/// Random point state; about one in eight is dry.
pub fn random_side(r: &mut impl Rng) -> (f64, f64, f64, f64) {
    let b: f64 = r.gen_range(-1.0..1.0);
    let h = if r.gen_bool(0.125) {
        0.0
    } else {
        r.gen_range(0.0..3.0)
    };
    let (u, v) = if h == 0.0 {
        (0.0, 0.0)
    } else {
        (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0))
    };
    (b + h, h, u, v)
}

pub struct RandomSource {
    pub input: SourceInput,
    pub theta: [f64; 3],
    pub g: f64,
}

pub fn random_source(r: &mut impl Rng) -> RandomSource {
    let theta: [f64; 3] = [
        r.gen_range(-3.2..3.2),
        r.gen_range(-3.2..3.2),
        r.gen_range(-3.2..3.2),
    ];
    let mut lengths = [0.0; 3];
    let mut h_mid = [0.0; 3];
    let mut ratios = [0.0; 3];
    let mut depth_vertex = [0.0; 3];
    for k in 0..3 {
        lengths[k] = r.gen_range(0.01..1.0);
        h_mid[k] = if r.gen_bool(0.1) {
            0.0
        } else {
            r.gen_range(0.0..2.0)
        };
        ratios[k] = if r.gen_bool(0.5) {
            1.0
        } else {
            r.gen_range(0.0..1.0)
        };
        depth_vertex[k] = r.gen_range(0.0..2.0);
    }
    let input = SourceInput {
        area: r.gen_range(1e-4..0.5),
        lengths,
        normals: theta.map(|t| [t.cos(), t.sin()]),
        h_mid,
        ratios,
        depth_vertex,
        grad_w: [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)],
    };
    RandomSource {
        input,
        theta,
        g: r.gen_range(0.5..10.0),
    }
}

pub fn unit_square(n: usize, tag: BoundaryTag) -> Triangulation {
    uniform_mesh(&Rect::new(0.0, 1.0, 0.0, 1.0), n, n, &SideTags::all(tag)).unwrap()
}

/// Hierarchy over `2·n²` cells with random vertex bottom in `[0, b_max)`.
pub fn random_hierarchy(r: &mut impl Rng, n: usize, b_max: f64, max_level: u32) -> MeshHierarchy {
    let base = unit_square(n, BoundaryTag::Wall);
    let vb: Vec<f64> = base
        .vertices
        .iter()
        .map(|_| r.gen_range(0.0..b_max))
        .collect();
    MeshHierarchy::new(&base, vb, max_level, Quality::default())
}

pub fn random_flags(r: &mut impl Rng, n: usize, p_refine: f64, p_coarsen: f64) -> Vec<CellFlag> {
    (0..n)
        .map(|_| {
            let x: f64 = r.gen();
            if x < p_refine {
                CellFlag::Refine
            } else if x < p_refine + p_coarsen {
                CellFlag::Coarsen
            } else {
                CellFlag::Keep
            }
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(a.abs()).max(b.abs())
}

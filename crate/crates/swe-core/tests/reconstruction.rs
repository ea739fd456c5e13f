mod common;

use rand::Rng;
use swe_core::bathymetry::Bathymetry;
use swe_core::mesh::{BoundaryTag, Triangulation};
use swe_core::reconstruction::{wet_level, ReconParams, ReconstructedField, StateField, Wetness};

fn params() -> ReconParams {
    ReconParams {
        eps: 1e-4,
        tau: 1e-8,
        kappa_dry: 1e-12,
    }
}

/// `∫_T (c − B)₊` by clipping the triangle to `{B < c}` and integrating
/// the linear integrand exactly over the clipped polygon.
fn wet_volume_oracle(p: [[f64; 2]; 3], b: [f64; 3], c: f64) -> f64 {
    let mut poly: Vec<([f64; 2], f64)> = Vec::new();
    for k in 0..3 {
        let (pa, ba) = (p[k], b[k]);
        let (pb, bb) = (p[(k + 1) % 3], b[(k + 1) % 3]);
        if ba < c {
            poly.push((pa, ba));
        }
        if (ba < c) != (bb < c) {
            let t = (c - ba) / (bb - ba);
            poly.push((
                [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])],
                c,
            ));
        }
    }
    // Fan triangulation; the integrand is linear on each piece.
    let mut v = 0.0;
    for i in 1..poly.len().saturating_sub(1) {
        let (a, b1, c1) = (poly[0], poly[i], poly[i + 1]);
        let area = 0.5
            * ((b1.0[0] - a.0[0]) * (c1.0[1] - a.0[1]) - (b1.0[1] - a.0[1]) * (c1.0[0] - a.0[0]))
                .abs();
        v += area * (c - (a.1 + b1.1 + c1.1) / 3.0);
    }
    v
}

fn random_field(seed: u64) -> (Triangulation, Bathymetry, StateField) {
    let mut r = common::rng(seed);
    let t = common::unit_square(8, BoundaryTag::Wall);
    let vb: Vec<f64> = (0..t.num_vertices())
        .map(|_| r.gen_range(0.0..1.0))
        .collect();
    let b = Bathymetry::from_vertex_values(&t, vb).unwrap();
    let u = (0..t.num_cells())
        .map(|j| {
            let d = if r.gen_bool(0.2) {
                0.0
            } else {
                r.gen_range(0.0..0.6)
            };
            [
                b.cell_mean[j] + d,
                d * r.gen_range(-1.0..1.0),
                d * r.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    (t, b, StateField::new(u, 0))
}

#[test]
fn wet_level_conserves_volume() {
    let mut r = common::rng(31);
    for _ in 0..500 {
        let p = [
            [0.0, 0.0],
            [r.gen_range(0.5..2.0), r.gen_range(-0.3..0.3)],
            [r.gen_range(-0.3..0.3), r.gen_range(0.5..2.0)],
        ];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
        let b = [
            r.gen_range(0.0..1.0),
            r.gen_range(0.0..1.0),
            r.gen_range(0.0..1.0),
        ];
        let bj = (b[0] + b[1] + b[2]) / 3.0;
        let bmax = b.iter().copied().fold(f64::MIN, f64::max);
        let hbar = r.gen_range(1e-6..(bmax - bj).max(2e-6));
        let c = wet_level(b, area, hbar);
        let v = wet_volume_oracle(p, b, c);
        assert!(
            (v - area * hbar).abs() <= 1e-12 * area * bmax.max(1.0),
            "{v} vs {}",
            area * hbar
        );
    }
}

#[test]
fn reconstructed_depths_are_nonnegative_and_bounded() {
    for seed in 0..10 {
        let (t, b, u) = random_field(100 + seed);
        let f = ReconstructedField::compute(&t, &b, &u, &params());
        for j in 0..t.num_cells() {
            let rec = &f.cells[j];
            for k in 0..3 {
                let s = f.edge_point(&t, &b, j, k);
                assert!(s.h >= 0.0);
                assert!((s.w - s.h - b.edge_values[j][k]).abs() < 1e-14);
            }
            match rec.wetness {
                Wetness::Dry => assert_eq!(rec.level, b.cell_mean[j]),
                Wetness::Full => {
                    let c = u.u[j][0];
                    assert_eq!(rec.level, c);
                    // Limited midpoint values stay inside the centre values
                    // of the cell and its wet neighbours.
                    let mut lo = c;
                    let mut hi = c;
                    for q in t.cells[j]
                        .neighbor_cells()
                        .filter(|&q| f.centers[q].wetness != Wetness::Dry)
                    {
                        lo = lo.min(f.centers[q].level);
                        hi = hi.max(f.centers[q].level);
                    }
                    for e in &t.cells[j].edges {
                        let d = [
                            e.midpoint[0] - rec.centroid[0],
                            e.midpoint[1] - rec.centroid[1],
                        ];
                        let w = c + rec.grad_w[0] * d[0] + rec.grad_w[1] * d[1];
                        assert!(w >= lo - 1e-13 && w <= hi + 1e-13);
                    }
                }
                Wetness::Partial => {
                    let v = wet_volume_oracle(t.corners(j), b.corner_values[j], rec.level);
                    let area = t.cells[j].area;
                    assert!((v - area * (u.u[j][0] - b.cell_mean[j])).abs() <= 1e-12 * area);
                }
            }
        }
    }
}

#[test]
fn lake_surface_is_flat_after_reconstruction() {
    let mut r = common::rng(32);
    let t = common::unit_square(9, BoundaryTag::Wall);
    let vb: Vec<f64> = (0..t.num_vertices())
        .map(|_| r.gen_range(0.0..0.9))
        .collect();
    let b = Bathymetry::from_vertex_values(&t, vb).unwrap();
    let u = StateField::new(vec![[1.0, 0.0, 0.0]; t.num_cells()], 0);
    let f = ReconstructedField::compute(&t, &b, &u, &params());
    for j in 0..t.num_cells() {
        assert_eq!(f.cells[j].wetness, Wetness::Full);
        for k in 0..3 {
            let s = f.edge_point(&t, &b, j, k);
            assert!((s.w - 1.0).abs() < 1e-15);
            assert_eq!((s.u, s.v), (0.0, 0.0));
        }
    }
}

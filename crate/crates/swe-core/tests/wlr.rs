mod common;

use proptest::prelude::*;
use rand::Rng;
use swe_core::amr::CellFlag;
use swe_core::mesh::BoundaryTag;
use swe_core::reconstruction::StateField;
use swe_core::wlr::{
    cell_indicator, flag_cells, hat_gradient, hat_gradients, wlr_vertex_errors, RefinePolicy,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn steady_lakes_have_zero_error(seed in any::<u64>(), n in 2usize..9, level in 1.0..3.0f64, dt in 1e-5..1e-1f64) {
        let mut r = common::rng(seed);
        let mut h = common::random_hierarchy(&mut r, n, 1.0, 2);
        let k = h.active().len();
        h.adapt(&common::random_flags(&mut r, k, 0.3, 0.0), None);
        let s = h.snapshot().unwrap();
        let u = StateField::new(vec![[level, 0.0, 0.0]; s.tri.num_cells()], s.generation);
        let f = wlr_vertex_errors(&s.tri, &hat_gradients(&s.tri), &u, &u, dt).unwrap();
        prop_assert!(f.vertex_error.iter().all(|&e| e == 0.0));
        let (flags, omega) = flag_cells(&f.cell_error, 0.1, 2, &s.levels, 0.1, RefinePolicy::Leveled);
        prop_assert_eq!(omega, 0.0);
        prop_assert!(flags.iter().all(|&x| x == CellFlag::Keep));
    }

    /// Each hat gradient is the gradient of the linear function that is 1 at
    /// its vertex and 0 at the other two.
    #[test]
    fn hat_gradients_interpolate(ax in -1.0..1.0f64, ay in -1.0..1.0f64, bx in 1.5..3.0f64, by in -1.0..1.0f64, cx in -1.0..1.0f64, cy in 1.5..3.0f64) {
        let (a, b, c) = ([ax, ay], [bx, by], [cx, cy]);
        let g = hat_gradient(a, b, c);
        let at = |p: [f64; 2]| 1.0 + g[0] * (p[0] - a[0]) + g[1] * (p[1] - a[1]);
        prop_assert!(at(b).abs() < 1e-12);
        prop_assert!(at(c).abs() < 1e-12);
    }

    /// Raising one indicator value never moves its flag from Refine toward
    /// Coarsen.
    #[test]
    fn flags_are_monotone(seed in any::<u64>(), bump in 0.0..10.0f64) {
        let mut r = common::rng(seed);
        let e: Vec<f64> = (0..40).map(|_| r.gen_range(0.0..1.0)).collect();
        let levels: Vec<u32> = (0..40).map(|_| r.gen_range(0..3)).collect();
        let j = r.gen_range(0..40);
        let (f0, _) = flag_cells(&e, 0.2, 3, &levels, 0.1, RefinePolicy::Leveled);
        let mut e1 = e;
        e1[j] += bump;
        // e_j/ω never decreases as e_j grows, even when e_j becomes the max.
        let (f1, _) = flag_cells(&e1, 0.2, 3, &levels, 0.1, RefinePolicy::Leveled);
        prop_assert!(f1[j].code() >= f0[j].code(), "{:?} -> {:?}", f0[j], f1[j]);
    }
}

/// A mass jump in one interior cell shows up at that cell's vertices only.
#[test]
fn errors_are_local_to_the_change() {
    let t = common::unit_square(6, BoundaryTag::Wall);
    let u0 = StateField::new(vec![[1.0, 0.0, 0.0]; t.num_cells()], 0);
    let mut u1 = u0.clone();
    let j = t
        .cells
        .iter()
        .position(|c| (c.centroid[0] - 0.5).abs() < 0.1 && (c.centroid[1] - 0.5).abs() < 0.1)
        .unwrap();
    u1.u[j][0] += 1e-3;
    let f = wlr_vertex_errors(&t, &hat_gradients(&t), &u0, &u1, 1e-3).unwrap();
    for (v, &e) in f.vertex_error.iter().enumerate() {
        let on_cell = t.cells[j].vertices.contains(&v);
        assert_eq!(e != 0.0, on_cell, "vertex {v}");
        if on_cell {
            assert!((e.abs() - t.cells[j].area / 3.0 * 1e-3 / f.delta).abs() < 1e-15);
        }
    }
    let ce = cell_indicator(&t, &f.vertex_error);
    assert_eq!(ce, f.cell_error);
    let (flags, _) = flag_cells(
        &ce,
        0.5,
        1,
        &vec![0; t.num_cells()],
        0.1,
        RefinePolicy::Plain,
    );
    assert_eq!(flags[j], CellFlag::Refine);
    assert!(flags.iter().filter(|&&x| x == CellFlag::Refine).count() <= 13);
}

#[test]
fn mismatched_states_are_rejected() {
    let t = common::unit_square(2, BoundaryTag::Wall);
    let a = StateField::new(vec![[1.0, 0.0, 0.0]; t.num_cells()], 0);
    let b = StateField::new(vec![[1.0, 0.0, 0.0]; 3], 0);
    assert!(wlr_vertex_errors(&t, &hat_gradients(&t), &a, &b, 0.1).is_err());
}

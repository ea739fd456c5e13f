//! Shared fixtures for the kernel benchmarks.

use swe_core::amr::CellFlag;
use swe_core::config::Settings;
use swe_core::driver::Simulation;
use swe_core::flux::SideState;
use swe_core::scenario::ScenarioId;

/// A freshly initialised simulation of `id` on a `2·n²` base mesh.
pub fn simulation(id: ScenarioId, n: usize, max_level: u32) -> Simulation {
    let mut s = Settings::preset(id);
    s.base_n = n;
    s.max_level = max_level;
    Simulation::new(s).expect("preset scenarios are valid")
}

/// Deterministic left/right states covering wet, nearly dry and moving cases.
pub fn side_pairs(count: usize) -> Vec<(SideState, SideState, [f64; 2])> {
    (0..count)
        .map(|i| {
            let t = i as f64 * 0.618_033_988_75;
            let f = t.fract();
            let h = |x: f64| if (i % 9) == 0 { 1e-9 * x } else { 0.1 + x };
            let own = SideState {
                w: 1.0 + f,
                h: h(f),
                u: 0.3 * (t.sin()),
                v: 0.2 * t.cos(),
            };
            let nb = SideState {
                w: 1.0 + 0.5 * f,
                h: h(0.5 * f),
                u: -0.1 * t.cos(),
                v: 0.4 * t.sin(),
            };
            let n = [t.cos(), t.sin()];
            (own, nb, n)
        })
        .collect()
}

/// Refine every cell whose centroid lies left of `x`.
pub fn refine_left_of(sim: &Simulation, x: f64) -> Vec<CellFlag> {
    sim.snap
        .tri
        .cells
        .iter()
        .map(|c| {
            if c.centroid[0] < x {
                CellFlag::Refine
            } else {
                CellFlag::Keep
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_well_formed() {
        let sim = simulation(ScenarioId::Ex2Perturb, 6, 1);
        assert_eq!(sim.snap.tri.num_cells(), 72);
        let flags = refine_left_of(&sim, 0.5);
        assert!(flags.contains(&CellFlag::Refine) && flags.contains(&CellFlag::Keep));
        let pairs = side_pairs(20);
        assert!(pairs
            .iter()
            .all(|(a, b, n)| a.h >= 0.0 && b.h >= 0.0 && (n[0].hypot(n[1]) - 1.0).abs() < 1e-15));
    }
}

//! The adaptive run loop: evolve one reference step, estimate, flag,
//! adapt and project, with frames written at the output interval.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::amr::{AmrError, CellFlag, MeshHierarchy, Snapshot};
use crate::bathymetry::BathymetryError;
use crate::config::{ConfigError, Indicator, Settings};
use crate::mesh::{uniform_mesh, MeshError, Triangulation};
use crate::output::{write_vtu, CsvLog, Frame, FrameRow};
use crate::reconstruction::{
    classify, wet_volume, ReconParams, ReconstructedField, StateField, Wetness,
};
use crate::time::{assign_levels, evolve_macro_step, LevelPartition, SolverError};
use crate::wlr::{
    flag_by_gradient, flag_cells, gradient_indicator, hat_gradients, wlr_vertex_errors,
    HatGradients, WlrError, WlrField,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Bathymetry(#[from] BathymetryError),
    #[error(transparent)]
    Amr(#[from] AmrError),
    #[error(transparent)]
    Wlr(#[from] WlrError),
    #[error("solver failed at t = {t}: {source}")]
    Solver { t: f64, source: SolverError },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timing {
    pub evolution_s: f64,
    pub estimate_s: f64,
    /// Adaptation, projection and snapshot rebuilds.
    pub grid_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub frames: Vec<FrameRow>,
    pub steps: usize,
    pub substeps: usize,
    pub violations: usize,
    pub retries: usize,
    pub promotions: usize,
    /// Smallest `h̄` seen at any substep.
    pub min_h: f64,
    /// Largest `|w̄ − w_eq|` over fully wet cells after any step.
    pub max_dev: f64,
    pub mass_initial: f64,
    pub mass_final: f64,
    /// Largest `|V − V₀|/V₀` after any step or adaptation.
    pub max_mass_drift: f64,
    pub adapt_events: usize,
    pub final_cells: usize,
    pub max_cells: usize,
    pub timing: Timing,
}

/// Water volume `Σ|T|(w̄ − B_j)`.
pub fn volume(snap: &Snapshot, state: &StateField) -> f64 {
    state.volume(&snap.tri, &snap.bathy)
}

/// Cell averages of the scenario's initial data on a snapshot.
pub fn initial_state(settings: &Settings, snap: &Snapshot) -> StateField {
    let sc = &settings.scenario;
    let u = snap
        .tri
        .cells
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let (level, u, v) = sc.initial(c.centroid[0], c.centroid[1]);
            let b = snap.bathy.corner_values[j];
            let h = if level.is_finite() {
                wet_volume(b, c.area, level) / c.area
            } else {
                0.0
            };
            [snap.bathy.cell_mean[j] + h, h * u, h * v]
        })
        .collect();
    StateField::new(u, snap.generation)
}

pub struct Simulation {
    pub settings: Settings,
    pub hierarchy: MeshHierarchy,
    pub snap: Snapshot,
    pub state: StateField,
    pub t: f64,
    pub geo: LevelPartition,
    pub report: RunReport,
    pub last_wlr: Option<WlrField>,
    pub last_flags: Option<Vec<CellFlag>>,
    hats: HatGradients,
    kappa: f64,
}

impl Simulation {
    pub fn new(settings: Settings) -> Result<Self, RunError> {
        let sc = &settings.scenario;
        let base = uniform_mesh(&sc.domain, settings.base_n, settings.base_n, &sc.sides)?;
        Self::with_base(settings, &base)
    }

    pub fn with_base(settings: Settings, base: &Triangulation) -> Result<Self, RunError> {
        let vb: Vec<f64> = base
            .vertices
            .iter()
            .map(|v| settings.scenario.bottom(v.x, v.y))
            .collect();
        let hierarchy = MeshHierarchy::new(base, vb, settings.max_level, settings.quality);
        let snap = hierarchy.snapshot()?;
        let state = initial_state(&settings, &snap);
        Ok(Self::from_parts(settings, hierarchy, snap, state))
    }

    pub fn from_parts(
        settings: Settings,
        hierarchy: MeshHierarchy,
        snap: Snapshot,
        state: StateField,
    ) -> Self {
        let kappa = settings
            .solver
            .kappa_dry
            .unwrap_or_else(|| snap.bathy.kappa_dry());
        let geo = assign_levels(&snap.tri);
        let hats = hat_gradients(&snap.tri);
        let mass = volume(&snap, &state);
        let mut sim = Simulation {
            report: RunReport {
                scenario: settings.scenario.id.to_string(),
                mass_initial: mass,
                mass_final: mass,
                min_h: f64::INFINITY,
                ..Default::default()
            },
            settings,
            hierarchy,
            snap,
            state,
            t: 0.0,
            geo,
            last_wlr: None,
            last_flags: None,
            hats,
            kappa,
        };
        let (_, dev, min_h) = sim.diagnostics();
        sim.report.max_dev = dev;
        sim.report.min_h = min_h;
        sim.report.max_cells = sim.snap.tri.num_cells();
        sim
    }

    pub fn recon_params(&self) -> ReconParams {
        let mut p = self
            .settings
            .solver
            .recon_params(&self.snap.tri, &self.snap.bathy);
        p.kappa_dry = self.kappa;
        p
    }

    /// `(volume, max |w̄ − w_eq| over fully wet cells, min h̄)`.
    pub fn diagnostics(&self) -> (f64, f64, f64) {
        let b = &self.snap.bathy;
        let w_eq = self.settings.scenario.w_eq;
        let mut dev: f64 = 0.0;
        let mut min_h = f64::INFINITY;
        for (j, u) in self.state.u.iter().enumerate() {
            let h = u[0] - b.cell_mean[j];
            min_h = min_h.min(h);
            if classify(u[0], b.cell_mean[j], b.cell_max(j), self.kappa) == Wetness::Full {
                dev = dev.max((u[0] - w_eq).abs());
            }
        }
        (volume(&self.snap, &self.state), dev, min_h)
    }

    fn note_mass(&mut self) {
        let m = volume(&self.snap, &self.state);
        let m0 = self.report.mass_initial;
        if m0 != 0.0 {
            self.report.max_mass_drift = self.report.max_mass_drift.max(((m - m0) / m0).abs());
        }
        self.report.mass_final = m;
    }

    /// One reference step to at most `t_stop`, followed by adaptation.
    pub fn step(&mut self, t_stop: f64) -> Result<(), RunError> {
        let p = self.settings.solver.clone();
        let before = self.state.clone();
        let t0 = Instant::now();
        let ms = evolve_macro_step(
            &self.snap.tri,
            &self.snap.bathy,
            &self.geo,
            &mut self.state,
            self.t,
            t_stop,
            &p,
        )
        .map_err(|source| RunError::Solver { t: self.t, source })?;
        self.report.timing.evolution_s += t0.elapsed().as_secs_f64();
        let st = ms.stats;
        self.t = ms.t_new;
        self.report.steps += 1;
        self.report.substeps += st.substeps.iter().sum::<usize>();
        self.report.violations += st.violations;
        self.report.retries += st.retries;
        self.report.promotions += st.promotions;
        self.report.min_h = self.report.min_h.min(st.min_h);
        let (_, dev, min_h) = self.diagnostics();
        self.report.max_dev = self.report.max_dev.max(dev);
        self.report.min_h = self.report.min_h.min(min_h);
        self.note_mass();
        if self.settings.max_level > 0 {
            self.estimate_and_adapt(&before, st.dt)?;
        }
        Ok(())
    }

    fn estimate_and_adapt(&mut self, before: &StateField, dt: f64) -> Result<(), RunError> {
        let t0 = Instant::now();
        let s = &self.settings;
        let rp = self.recon_params();
        let levels = &self.snap.levels;
        let mut recon = None;
        let flags = match s.indicator {
            Indicator::Wlr | Indicator::WlrPlain => {
                let f = wlr_vertex_errors(&self.snap.tri, &self.hats, before, &self.state, dt)?;
                let (flags, _) = flag_cells(
                    &f.cell_error,
                    s.sigma_tol,
                    s.max_level,
                    levels,
                    s.c_coarsen,
                    s.policy(),
                );
                self.last_wlr = Some(f);
                flags
            }
            Indicator::Gradient => {
                let r =
                    ReconstructedField::compute(&self.snap.tri, &self.snap.bathy, &self.state, &rp);
                let ind = gradient_indicator(&self.snap.tri, &r.centers);
                recon = Some(r);
                flag_by_gradient(&ind, s.gradient_threshold, s.max_level, levels, s.c_coarsen)
            }
        };
        self.report.timing.estimate_s += t0.elapsed().as_secs_f64();

        let actionable = flags.iter().zip(&self.snap.nodes).any(|(&f, &n)| match f {
            CellFlag::Refine => true,
            CellFlag::Coarsen => self.hierarchy.nodes[n].parent.is_some(),
            CellFlag::Keep => false,
        });
        if actionable {
            let t1 = Instant::now();
            let recon = recon.unwrap_or_else(|| {
                ReconstructedField::compute(&self.snap.tri, &self.snap.bathy, &self.state, &rp)
            });
            let stats = self.hierarchy.adapt(&flags, Some(&recon));
            if stats.changed {
                let snap = self.hierarchy.snapshot()?;
                self.state =
                    self.hierarchy
                        .project_state(&self.snap, &self.state, &recon, &snap)?;
                self.snap = snap;
                self.geo = assign_levels(&self.snap.tri);
                self.hats = hat_gradients(&self.snap.tri);
                self.report.adapt_events += 1;
                self.report.max_cells = self.report.max_cells.max(self.snap.tri.num_cells());
                self.last_wlr = None;
                self.last_flags = None;
                self.note_mass();
            } else {
                self.last_flags = Some(flags);
            }
            self.report.timing.grid_s += t1.elapsed().as_secs_f64();
        } else {
            self.last_flags = Some(flags);
        }
        Ok(())
    }

    pub fn frame_row(&self, wall_s: f64) -> FrameRow {
        let (mass, max_dev, min_h) = self.diagnostics();
        FrameRow {
            t: self.t,
            mass,
            max_dev,
            min_h,
            active_cells: self.snap.tri.num_cells(),
            wall_s,
        }
    }

    pub fn write_frame(&self, path: &Path) -> Result<(), RunError> {
        let w = self.last_wlr.as_ref();
        write_vtu(
            path,
            &Frame {
                tri: &self.snap.tri,
                bathy: &self.snap.bathy,
                state: &self.state,
                levels: &self.snap.levels,
                vertex_error: w.map(|f| f.vertex_error.as_slice()),
                cell_error: w.map(|f| f.cell_error.as_slice()),
                flags: self.last_flags.as_deref(),
                t: self.t,
            },
        )
        .map_err(io_err(path))
    }

    /// Run to `t_end`, recording frames and optionally writing them.
    pub fn run_to_end(&mut self) -> Result<RunReport, RunError> {
        let start = Instant::now();
        let t_end = self.settings.t_end;
        let out = self.settings.output_dir.clone();
        let mut csv = match &out {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(io_err(d))?;
                let p = d.join("diagnostics.csv");
                Some(CsvLog::create(&p).map_err(io_err(&p))?)
            }
            None => None,
        };
        let mut frame_no = 0;
        let mut emit = |sim: &mut Simulation, csv: &mut Option<CsvLog>| -> Result<(), RunError> {
            let row = sim.frame_row(start.elapsed().as_secs_f64());
            sim.report.frames.push(row);
            if let Some(d) = &out {
                sim.write_frame(&d.join(format!("frame_{frame_no:05}.vtu")))?;
                if let Some(c) = csv.as_mut() {
                    c.append(&row).map_err(io_err(d))?;
                }
            }
            frame_no += 1;
            Ok(())
        };
        emit(self, &mut csv)?;
        let interval = self.settings.output_interval;
        let mut next_out = interval.map_or(t_end, |d| d.min(t_end));
        let tol = 1e-12 * t_end.max(1.0);
        while self.t < t_end - tol {
            if let Err(e) = self.step(next_out) {
                if let Some(d) = &out {
                    let _ = self.write_frame(&d.join("abort.vtu"));
                }
                return Err(e);
            }
            if self.t >= next_out - tol {
                emit(self, &mut csv)?;
                next_out = interval.map_or(t_end, |d| (next_out + d).min(t_end));
            }
        }
        self.report.final_cells = self.snap.tri.num_cells();
        self.report.timing.total_s = start.elapsed().as_secs_f64();
        if let Some(d) = &out {
            let p = d.join("report.json");
            let text = serde_json::to_string_pretty(&self.report).expect("report serializes");
            std::fs::write(&p, text).map_err(io_err(&p))?;
        }
        Ok(self.report.clone())
    }
}

/// Run inside a pool of the configured size (rayon's default otherwise).
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, RunError> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Threads(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Full run returning the report and the final mesh and state.
pub fn run_full(settings: Settings) -> Result<(RunReport, Snapshot, StateField), RunError> {
    with_threads(settings.threads, move || {
        let mut sim = Simulation::new(settings)?;
        let rep = sim.run_to_end()?;
        Ok((rep, sim.snap, sim.state))
    })?
}

pub fn run(settings: Settings) -> Result<RunReport, RunError> {
    run_full(settings).map(|r| r.0)
}

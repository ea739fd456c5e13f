use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use swe_core::config::{RunConfig, Settings};
use swe_core::driver::{run, with_threads};
use swe_core::scenario::ScenarioId;
use swe_core::study::{compare_indicators, convergence_study, cpu_ratio};

#[derive(Parser)]
#[command(
    name = "swe",
    version,
    about = "Adaptive central-upwind shallow-water solver"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Config file laid over the scenario preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the final time.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configured simulation.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// L1 errors and rates against a uniform reference.
    Convergence {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
        meshes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reference: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        levels: Vec<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Wall-clock ratio of uniform to adaptive runs with equal finest cells.
    CpuRatio {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long, default_value_t = 50)]
        base: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        levels: Vec<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Refined regions of the WLR and the gradient indicator.
    CompareIndicators {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long, default_value_t = 3)]
        levels: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn settings(id: ScenarioId, c: &Common) -> Result<Settings> {
    let mut rc = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    rc.scenario = Some(rc.scenario.unwrap_or(id));
    if c.t_end.is_some() {
        rc.t_end = c.t_end;
    }
    if c.threads.is_some() {
        rc.threads = c.threads;
    }
    Ok(rc.resolve()?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            threads,
            out,
        } => {
            let mut rc = RunConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if threads.is_some() {
                rc.threads = threads;
            }
            if out.is_some() {
                rc.output_dir = out;
            }
            let rep = run(rc.resolve()?)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
        Cmd::Convergence {
            scenario,
            meshes,
            reference,
            levels,
            common,
        } => {
            let base = settings(scenario, &common)?;
            for m in levels {
                let mut s = base.clone();
                s.max_level = m;
                let rows = with_threads(s.threads, || convergence_study(&s, &meshes, reference))??;
                if common.json {
                    println!("{}", serde_json::to_string_pretty(&rows)?);
                    continue;
                }
                println!("M = {m}, reference 2x{reference}x{reference}");
                println!(
                    "{:>8} {:>10} {:>12} {:>6}",
                    "base", "cells", "L1(w)", "rate"
                );
                for r in rows {
                    let rate = r.rate.map_or("-".to_string(), |x| format!("{x:.2}"));
                    println!(
                        "{:>8} {:>10} {:>12.3e} {:>6}",
                        format!("2x{}x{}", r.base_n, r.base_n),
                        r.cells,
                        r.l1,
                        rate
                    );
                }
            }
        }
        Cmd::CpuRatio {
            scenario,
            base,
            levels,
            common,
        } => {
            let s = settings(scenario, &common)?;
            let rows = with_threads(s.threads, || cpu_ratio(&s, base, &levels))??;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!(
                    "{:>3} {:>10} {:>10} {:>10} {:>9} {:>9}",
                    "M", "uniform", "adaptive", "max cells", "R_CPU", "R_no_grid"
                );
                for r in rows {
                    println!(
                        "{:>3} {:>10} {:>10} {:>10} {:>9.2} {:>9.2}",
                        r.max_level,
                        r.uniform_cells,
                        r.adaptive_final_cells,
                        r.adaptive_max_cells,
                        r.ratio,
                        r.ratio_without_grid
                    );
                }
            }
        }
        Cmd::CompareIndicators {
            scenario,
            levels,
            out,
            common,
        } => {
            let mut s = settings(scenario, &common)?;
            if out.is_some() {
                s.output_dir = out;
            }
            let cmp = with_threads(s.threads, || compare_indicators(&s, levels))??;
            if common.json {
                println!("{}", serde_json::to_string_pretty(&cmp)?);
            } else {
                for r in &cmp.runs {
                    println!(
                        "{:<9} final cells {:>8}  max cells {:>8}  refined area {:>6.3}",
                        format!("{:?}", r.indicator).to_lowercase(),
                        r.final_cells,
                        r.max_cells,
                        r.refined_fraction
                    );
                }
                println!("overlap of refined regions (IoU): {:.3}", cmp.overlap);
            }
        }
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use smpac_cli::config::{ScenarioConfig, SceneProfile};
use smpac_cli::report::{
    cells_csv, emit_report, fidelity_csv, prune_csv, recommendations_csv, slices_summary_csv,
    table_csv, trace_stats_csv,
};
use smpac_core::dynamic::{load_trace, trace_stats, SliceSpectra};
use smpac_core::sweep::run_sweep;

#[derive(Parser)]
#[command(
    name = "smpac",
    version,
    about = "Plan and validate sectored multi-probe anechoic chamber setups"
)]
struct Cli {
    /// Scenario file (TOML); built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV reports.
    #[arg(long, global = true, default_value = "smpac-out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "SMPAC_WORKERS")]
    workers: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    CdlA,
    CdlC,
}

#[derive(Subcommand)]
enum Command {
    /// Regenerate the recommendation table over DUT sizes, probe counts and spacings.
    Sweep {
        /// DUT sides to include, e.g. 2,8,16.
        #[arg(long, value_delimiter = ',')]
        duts: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        spacings: Option<Vec<f64>>,
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Emulate one cluster and report its fidelity metrics.
    Emulate {
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        spacing: Option<f64>,
        /// Exit with an error when the soft bound is exceeded.
        #[arg(long)]
        strict: bool,
    },
    /// Emulate a moving cluster and compare spectrum slices.
    Dynamic {
        /// Trace file replacing the configured linear path.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        pre_rotate: bool,
        /// Select probes freely instead of through the switch plan.
        #[arg(long)]
        no_plan: bool,
    },
    /// Compare a multi-cluster scene with its strongest-cluster prunings.
    Prune {
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Build the switch plan and probe activation along a trajectory.
    Schedule {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        pre_rotate: bool,
    },
    /// Summary statistics of a trace file.
    TraceStats { path: PathBuf },
}

fn spectra_files(s: &SliceSpectra) -> Vec<(&'static str, String)> {
    vec![
        ("snapshots.csv", slices_summary_csv(s)),
        (
            "target_az.csv",
            SliceSpectra::matrix_csv(&s.az_grid, &s.target_az),
        ),
        (
            "emulated_az.csv",
            SliceSpectra::matrix_csv(&s.az_grid, &s.emulated_az),
        ),
        (
            "target_el.csv",
            SliceSpectra::matrix_csv(&s.el_grid, &s.target_el),
        ),
        (
            "emulated_el.csv",
            SliceSpectra::matrix_csv(&s.el_grid, &s.emulated_el),
        ),
    ]
}

fn report(cli: &Cli, files: &[(&str, String)]) -> Result<()> {
    for p in emit_report(&cli.out, files)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("worker count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::standard(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.sweep.seed = s;
    }
    match &cli.command {
        Command::Sweep {
            duts,
            spacings,
            realizations,
        } => {
            if let Some(d) = duts {
                cfg.sweep.dut_sides = d.clone();
            }
            if let Some(s) = spacings {
                cfg.sweep.spacings = s.clone();
            }
            if let Some(n) = realizations {
                cfg.sweep.fidelity.realizations = *n;
            }
            let result = run_sweep(&cfg.sweep)?;
            result.table.verify()?;
            let table = table_csv(&result.table);
            print!("{table}");
            report(
                &cli,
                &[
                    ("cells.csv", cells_csv(&result.cells)),
                    ("table.csv", table),
                    ("recommendations.csv", recommendations_csv(&result.table)),
                ],
            )
        }
        Command::Emulate {
            probes,
            spacing,
            strict,
        } => {
            if let Some(k) = probes {
                cfg.chamber.probes = *k;
            }
            if let Some(s) = spacing {
                cfg.chamber.spacing = *s;
            }
            cfg.validate()?;
            let (r, solution) = smpac_cli::emulate(&cfg)?;
            println!(
                "e_rho {:.4}  d_p {:.4}  d_ba {:.4}  d_bp {:.3}°  soft sum {:.4} (bound {:.2})",
                r.e_rho,
                r.d_p,
                r.d_ba,
                r.d_bp,
                r.soft_sum,
                cfg.bounds.soft()
            );
            println!("probes {:?}  powers {:?}", solution.probes, solution.powers);
            report(&cli, &[("fidelity.csv", fidelity_csv(&r))])?;
            if *strict && r.soft_sum > cfg.bounds.soft() {
                bail!(
                    "soft sum {:.4} exceeds the bound {:.2}",
                    r.soft_sum,
                    cfg.bounds.soft()
                );
            }
            Ok(())
        }
        Command::Dynamic {
            trace,
            pre_rotate,
            no_plan,
        } => {
            if trace.is_some() {
                cfg.trajectory.trace = trace.clone();
            }
            cfg.trajectory.pre_rotate |= *pre_rotate;
            let run = smpac_cli::dynamic(&cfg, !no_plan)?;
            let s = &run.spectra;
            println!(
                "similarity: azimuth {:.4}, elevation {:.4} ({} snapshots, pre-rotation {:.1}°)",
                s.similarity_az,
                s.similarity_el,
                s.d_p_az.len(),
                run.rotation
            );
            report(&cli, &spectra_files(s))
        }
        Command::Prune {
            profile,
            realizations,
        } => {
            if let Some(p) = profile {
                cfg.prune.profile = match p {
                    Profile::CdlA => SceneProfile::CdlA,
                    Profile::CdlC => SceneProfile::CdlC,
                };
                cfg.prune.clusters.clear();
            }
            if let Some(n) = realizations {
                cfg.prune.options.realizations = *n;
            }
            let curve = smpac_cli::prune(&cfg)?;
            println!(
                "{}: keep {} of {} clusters",
                curve.label,
                curve.recommended,
                curve.points.len()
            );
            report(&cli, &[("prune.csv", prune_csv(&curve))])
        }
        Command::Schedule { trace, pre_rotate } => {
            if trace.is_some() {
                cfg.trajectory.trace = trace.clone();
            }
            cfg.trajectory.pre_rotate |= *pre_rotate;
            let run = smpac_cli::schedule(&cfg)?;
            println!(
                "{} ports, {}x{} tile, {} positions per switch (extents call for {}), substitution penalty {:.1}°",
                run.plan.ports,
                run.plan.tile.0,
                run.plan.tile.1,
                run.plan.q,
                run.required_q,
                run.schedule.total_penalty()
            );
            report(
                &cli,
                &[
                    (
                        "switch_plan.csv",
                        smpac_cli::plan_csv(&run.panel, &run.plan),
                    ),
                    ("schedule.csv", run.schedule.to_csv(&run.panel)?),
                ],
            )
        }
        Command::TraceStats { path } => {
            let s = trace_stats(&load_trace(path)?);
            print!("{}", trace_stats_csv(&s));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

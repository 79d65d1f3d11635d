//! Command implementations behind the `smpac` binary.

pub mod config;
pub mod report;

use anyhow::{ensure, Result};

use smpac_core::dominance::{prune_curve, PruneCurve};
use smpac_core::dynamic::{emulate_trajectory, pre_rotate, SliceSpectra, Trajectory};
use smpac_core::geometry::ProbePanel;
use smpac_core::metrics::{build_codebook, evaluate_fidelity, FidelityReport, TargetReference};
use smpac_core::optimizer::{select_probes, ClusterTarget, WeightSolution};
use smpac_core::scheduler::{
    build_switch_plan, plan_with_optimizer, required_q, ActivationSchedule, SwitchPlan,
};

pub use config::ScenarioConfig;

/// Fidelity of one cluster emulated with the configured chamber.
pub fn emulate(cfg: &ScenarioConfig) -> Result<(FidelityReport, WeightSolution)> {
    let dut = cfg.dut()?;
    let panel = cfg.panel()?;
    let cluster = cfg.cluster.build(cfg.seed)?;
    let target = ClusterTarget::new(&cluster, &dut, cfg.solver.pas_step)?;
    let solution = select_probes(&target, &panel, cfg.chamber.probes, &dut, &cfg.solver)?;
    let fidelity = cfg.fidelity();
    let sector = fidelity.sector_for(&panel);
    let codebook = build_codebook(&dut, &sector)?;
    let grid = sector.scan_grid(fidelity.scan_step)?;
    let reference = TargetReference::new(&cluster, &target, &dut, &codebook, &grid, &fidelity)?;
    let report = evaluate_fidelity(
        &target, &reference, &solution, &panel, &dut, &codebook, &fidelity,
    )?;
    Ok((report, solution))
}

/// The configured trajectory, pre-rotated when asked.
pub fn trajectory(cfg: &ScenarioConfig, panel: &ProbePanel) -> Result<(Trajectory, f64)> {
    let t = cfg.trajectory()?;
    Ok(if cfg.trajectory.pre_rotate {
        pre_rotate(&t, panel)
    } else {
        (t, 0.0)
    })
}

pub struct DynamicRun {
    pub spectra: SliceSpectra,
    pub rotation: f64,
}

pub fn dynamic(cfg: &ScenarioConfig, use_plan: bool) -> Result<DynamicRun> {
    let dut = cfg.dut()?;
    let panel = cfg.panel()?;
    let (traj, rotation) = trajectory(cfg, &panel)?;
    let plan = if use_plan {
        Some(build_switch_plan(&panel, cfg.chamber.probes)?)
    } else {
        None
    };
    let mut opts = cfg.dynamic.clone();
    opts.solver = cfg.solver.clone();
    let spectra = emulate_trajectory(
        &traj,
        &dut,
        &panel,
        plan.as_ref(),
        cfg.chamber.probes,
        &opts,
    )?;
    Ok(DynamicRun { spectra, rotation })
}

pub fn prune(cfg: &ScenarioConfig) -> Result<PruneCurve> {
    let dut = cfg.dut()?;
    let scene = cfg.prune_scene()?;
    let codebook = build_codebook(&dut, &cfg.prune.sector.unwrap_or_default())?;
    Ok(prune_curve(&scene, &dut, &codebook, &cfg.prune.options)?)
}

pub struct ScheduleRun {
    pub panel: ProbePanel,
    pub plan: SwitchPlan,
    pub schedule: ActivationSchedule,
    /// Switch size the panel extents call for.
    pub required_q: usize,
    pub rotation: f64,
}

pub fn schedule(cfg: &ScenarioConfig) -> Result<ScheduleRun> {
    let dut = cfg.dut()?;
    let panel = cfg.panel()?;
    let plan = build_switch_plan(&panel, cfg.chamber.probes)?;
    let c = &cfg.chamber;
    let q = required_q(c.az_extent, c.el_extent, c.spacing, c.probes)?;
    ensure!(
        plan.ports * plan.q >= panel.len(),
        "switch plan cannot hold every probe"
    );
    let (traj, rotation) = trajectory(cfg, &panel)?;
    let schedule = plan_with_optimizer(&plan, &panel, &traj.snapshots, &dut, &cfg.solver)?;
    Ok(ScheduleRun {
        panel,
        plan,
        schedule,
        required_q: q,
        rotation,
    })
}

/// `probe, el_row, az_col, azimuth, elevation, port` for every probe.
pub fn plan_csv(panel: &ProbePanel, plan: &SwitchPlan) -> String {
    let mut out = String::from("probe,el_row,az_col,azimuth_deg,elevation_deg,port\n");
    for p in panel.probes() {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{}\n",
            p.index,
            p.grid.0,
            p.grid.1,
            p.direction.azimuth(),
            p.direction.elevation(),
            plan.port_of(p.index)
        ));
    }
    out
}

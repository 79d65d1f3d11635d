//! Parameter sweep over DUT size, probe count and probe spacing, and the
//! recommendation table built from it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ClusterState;
pub use crate::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{Direction, PlanarArray, ProbePanel};
use crate::metrics::{
    build_codebook, evaluate_fidelity, FidelityOptions, FidelityReport, TargetReference,
};
use crate::optimizer::{
    refine_selection, selection_window, solve_window, ClusterTarget, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterCase {
    Aligned,
    FarNonaligned,
}

impl ClusterCase {
    pub const BOTH: [ClusterCase; 2] = [ClusterCase::Aligned, ClusterCase::FarNonaligned];

    pub fn label(&self) -> &'static str {
        match self {
            ClusterCase::Aligned => "aligned",
            ClusterCase::FarNonaligned => "far_nonaligned",
        }
    }
}

/// Cluster centroid for a case: on the probe node nearest boresight, or
/// half a spacing off it in both axes.
pub fn place_cluster(case: ClusterCase, panel: &ProbePanel) -> Result<Direction> {
    let (n_el, n_az) = panel.grid_shape();
    if n_el < 2 || n_az < 2 {
        return Err(Error::invalid(
            "cluster placement needs at least 2x2 probes",
        ));
    }
    let node = panel
        .nearest_probe(&Direction::new(panel.boresight_azimuth(), 0.0)?)
        .direction;
    match case {
        ClusterCase::Aligned => Ok(node),
        ClusterCase::FarNonaligned => {
            let h = panel.spacing() / 2.0;
            Direction::new(node.azimuth() + h, node.elevation() + h)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Square DUT sides.
    pub dut_sides: Vec<usize>,
    pub probe_counts: Vec<usize>,
    /// Probe spacings, degrees.
    pub spacings: Vec<f64>,
    /// Per-metric bounds; the soft bound is three times each.
    pub bounds: Vec<f64>,
    pub carrier: f64,
    pub range: f64,
    pub sigma_az: f64,
    pub sigma_el: f64,
    pub rays_per_cluster: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub fidelity: FidelityOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dut_sides: (2..=16).collect(),
            probe_counts: (1..=10).collect(),
            spacings: (1..=20).map(f64::from).collect(),
            bounds: vec![0.10, 0.15, 0.20, 0.25, 0.30],
            carrier: 28e9,
            range: 2.0,
            sigma_az: 5.0,
            sigma_el: 3.0,
            rays_per_cluster: crate::channel::DEFAULT_RAYS_PER_CLUSTER,
            seed: 2021,
            solver: SolverOptions::default(),
            fidelity: FidelityOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dut_sides.is_empty() || self.probe_counts.is_empty() || self.spacings.is_empty() {
            return Err(Error::invalid("sweep ranges must be nonempty"));
        }
        if self.dut_sides.contains(&0) || self.probe_counts.contains(&0) {
            return Err(Error::invalid(
                "DUT sides and probe counts must be positive",
            ));
        }
        if self.spacings.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("probe spacings must be positive"));
        }
        if self.bounds.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
            return Err(Error::invalid("metric bounds must lie in (0, 1]"));
        }
        if !(self.carrier > 0.0)
            || !(self.range > 0.0)
            || !(self.sigma_az > 0.0)
            || !(self.sigma_el > 0.0)
        {
            return Err(Error::invalid(
                "carrier, range and spreads must be positive",
            ));
        }
        Ok(())
    }

    /// Smallest panel with an odd probe count per axis that holds the
    /// selection window of either cluster case.
    pub fn panel_for(&self, spacing: f64) -> Result<ProbePanel> {
        let half = self.solver.window_sigma_factor * self.sigma_az.max(self.sigma_el)
            + self.solver.window_spacing_factor * spacing
            + spacing / 2.0;
        let n = 2.0 * (half / spacing - 1e-9).ceil();
        ProbePanel::new(self.range, spacing, n * spacing, n * spacing)
    }
}

/// Metrics of one (DUT, K, θs, case) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub dut_side: usize,
    pub probes: usize,
    pub spacing: f64,
    pub case: ClusterCase,
    pub report: FidelityReport,
    pub objective: f64,
}

/// Every probe count for one DUT, spacing and case. The target side and
/// the first selection step are shared across probe counts.
pub fn sweep_group(
    config: &SweepConfig,
    side: usize,
    spacing: f64,
    case: ClusterCase,
) -> Result<Vec<SweepCell>> {
    let dut = PlanarArray::square(side, config.carrier)?;
    let panel = config.panel_for(spacing)?;
    let centroid = place_cluster(case, &panel)?;
    let seed = derive_seed(config.seed, &[side as u64, spacing.to_bits(), case as u64]);
    let cluster = ClusterState::with_rays(
        centroid,
        config.sigma_az,
        config.sigma_el,
        0.0,
        config.rays_per_cluster,
        seed,
    )?;
    let target = ClusterTarget::new(&cluster, &dut, config.solver.pas_step)?;
    let sector = config.fidelity.sector_for(&panel);
    let codebook = build_codebook(&dut, &sector)?;
    let grid = sector.scan_grid(config.fidelity.scan_step)?;
    let mut fidelity = config.fidelity.clone();
    fidelity.seed = seed;
    let reference = TargetReference::new(&cluster, &target, &dut, &codebook, &grid, &fidelity)?;
    let window = selection_window(&target, &panel, &config.solver);
    if window.is_empty() {
        return Err(Error::NoProbesInSector {
            azimuth: centroid.azimuth(),
            elevation: centroid.elevation(),
        });
    }
    let stage1 = solve_window(&target, &panel, &window, &dut, &config.solver)?;
    config
        .probe_counts
        .iter()
        .map(|&k| {
            let solution = refine_selection(
                &target,
                &panel,
                &stage1,
                k.min(window.len()),
                &dut,
                &config.solver,
            )?;
            let report = evaluate_fidelity(
                &target, &reference, &solution, &panel, &dut, &codebook, &fidelity,
            )?;
            Ok(SweepCell {
                dut_side: side,
                probes: k,
                spacing,
                case,
                report,
                objective: solution.objective,
            })
        })
        .collect()
}

/// Runs the full grid; cells come back ordered by DUT, spacing, case, K.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut groups = Vec::new();
    for &side in &config.dut_sides {
        for &spacing in &config.spacings {
            for case in ClusterCase::BOTH {
                groups.push((side, spacing, case));
            }
        }
    }
    let cells: Vec<Vec<SweepCell>> = groups
        .par_iter()
        .map(|&(side, spacing, case)| sweep_group(config, side, spacing, case))
        .collect::<Result<_>>()?;
    let cells: Vec<SweepCell> = cells.into_iter().flatten().collect();
    let table = RecommendationTable::from_cells(&cells, &config.dut_sides, &config.bounds);
    Ok(SweepResult { cells, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub table: RecommendationTable,
}

/// Worst-case metrics of a (K, θs) pair over both cluster cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub probes: usize,
    pub spacing: f64,
    pub aligned: FidelityReport,
    pub far_nonaligned: FidelityReport,
}

impl PairMetrics {
    pub fn worst_soft_sum(&self) -> f64 {
        self.aligned.soft_sum.max(self.far_nonaligned.soft_sum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub dut_side: usize,
    pub bound: f64,
    /// Chosen pair, or `None` with the best pair found.
    pub chosen: Option<PairMetrics>,
    pub best_found: Option<PairMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationTable {
    pub dut_sides: Vec<usize>,
    pub bounds: Vec<f64>,
    /// Row-major over bounds, then DUT sides.
    pub entries: Vec<Recommendation>,
}

impl RecommendationTable {
    /// Candidates satisfy the soft bound in both cluster cases; the
    /// smallest probe count wins, then the largest spacing.
    pub fn from_cells(cells: &[SweepCell], dut_sides: &[usize], bounds: &[f64]) -> Self {
        // (side, K, spacing bits) -> (aligned, far, spacing)
        type Pair = (Option<FidelityReport>, Option<FidelityReport>, f64);
        let mut pairs: BTreeMap<(usize, usize, u64), Pair> = BTreeMap::new();
        for c in cells {
            let e = pairs
                .entry((c.dut_side, c.probes, c.spacing.to_bits()))
                .or_insert((None, None, c.spacing));
            match c.case {
                ClusterCase::Aligned => e.0 = Some(c.report),
                ClusterCase::FarNonaligned => e.1 = Some(c.report),
            }
        }
        let mut entries = Vec::new();
        for &bound in bounds {
            for &side in dut_sides {
                let mut candidates: Vec<PairMetrics> = pairs
                    .iter()
                    .filter(|((s, _, _), _)| *s == side)
                    .filter_map(|(&(_, k, _), &(a, f, spacing))| {
                        Some(PairMetrics {
                            probes: k,
                            spacing,
                            aligned: a?,
                            far_nonaligned: f?,
                        })
                    })
                    .collect();
                let best_found = candidates
                    .iter()
                    .min_by(|a, b| a.worst_soft_sum().total_cmp(&b.worst_soft_sum()))
                    .copied();
                candidates.retain(|p| p.worst_soft_sum() <= 3.0 * bound);
                let chosen = candidates.into_iter().min_by(|a, b| {
                    a.probes
                        .cmp(&b.probes)
                        .then(b.spacing.total_cmp(&a.spacing))
                });
                entries.push(Recommendation {
                    dut_side: side,
                    bound,
                    chosen,
                    best_found,
                });
            }
        }
        RecommendationTable {
            dut_sides: dut_sides.to_vec(),
            bounds: bounds.to_vec(),
            entries,
        }
    }

    pub fn get(&self, dut_side: usize, bound: f64) -> Option<&Recommendation> {
        self.entries
            .iter()
            .find(|r| r.dut_side == dut_side && (r.bound - bound).abs() < 1e-12)
    }

    /// Re-checks that every chosen pair satisfies its bound in both cases.
    pub fn verify(&self) -> Result<()> {
        for r in &self.entries {
            if let Some(p) = &r.chosen {
                if p.worst_soft_sum() > 3.0 * r.bound {
                    return Err(Error::Validation(format!(
                        "{}x{} at bound {}: ({}, {}°) has soft sum {:.4}",
                        r.dut_side,
                        r.dut_side,
                        r.bound,
                        p.probes,
                        p.spacing,
                        p.worst_soft_sum()
                    )));
                }
            }
        }
        Ok(())
    }
}

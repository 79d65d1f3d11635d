//! Deterministic CSV output for every subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use smpac_core::dominance::PruneCurve;
use smpac_core::dynamic::{SliceSpectra, TraceStats};
use smpac_core::metrics::FidelityReport;
use smpac_core::sweep::{RecommendationTable, SweepCell};

pub const CELL_HEADER: &str = "dut,probes,spacing_deg,case,e_rho,d_p,d_ba,d_bp,soft_sum,objective";

pub fn cells_csv(cells: &[SweepCell]) -> String {
    let mut out = format!("{CELL_HEADER}\n");
    for c in cells {
        let r = &c.report;
        let _ = writeln!(
            out,
            "{0}x{0},{1},{2},{3},{4:.6},{5:.6},{6:.6},{7:.6},{8:.6},{9:.6e}",
            c.dut_side,
            c.probes,
            c.spacing,
            c.case.label(),
            r.e_rho,
            r.d_p,
            r.d_ba,
            r.d_bp,
            r.soft_sum,
            c.objective
        );
    }
    out
}

/// One row per bound, one column per DUT; cells read `K/θs` or `none`.
pub fn table_csv(table: &RecommendationTable) -> String {
    let mut out = String::from("bound");
    for s in &table.dut_sides {
        let _ = write!(out, ",{s}x{s}");
    }
    out.push('\n');
    for &b in &table.bounds {
        let _ = write!(out, "{b:.2}x3");
        for &s in &table.dut_sides {
            let cell = table.get(s, b).and_then(|r| r.chosen.as_ref()).map_or_else(
                || "none".to_string(),
                |p| format!("{}/{}", p.probes, p.spacing),
            );
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

/// Chosen or best-found pair per table entry, with both cases' metrics.
pub fn recommendations_csv(table: &RecommendationTable) -> String {
    let mut out = String::from(
        "dut,bound,status,probes,spacing_deg,aligned_soft_sum,far_soft_sum,aligned_e_rho,aligned_d_p,aligned_d_ba,far_e_rho,far_d_p,far_d_ba\n",
    );
    for r in &table.entries {
        let (status, pair) = match (&r.chosen, &r.best_found) {
            (Some(p), _) => ("chosen", Some(p)),
            (None, Some(p)) => ("none_best_found", Some(p)),
            (None, None) => ("none", None),
        };
        let _ = write!(out, "{0}x{0},{1:.2},{2}", r.dut_side, r.bound, status);
        match pair {
            Some(p) => {
                let (a, f) = (&p.aligned, &p.far_nonaligned);
                let _ = writeln!(
                    out,
                    ",{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    p.probes,
                    p.spacing,
                    a.soft_sum,
                    f.soft_sum,
                    a.e_rho,
                    a.d_p,
                    a.d_ba,
                    f.e_rho,
                    f.d_p,
                    f.d_ba
                );
            }
            None => out.push_str(",,,,,,,,,,\n"),
        }
    }
    out
}

pub fn fidelity_csv(report: &FidelityReport) -> String {
    format!(
        "e_rho,d_p,d_ba,d_bp,soft_sum\n{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        report.e_rho, report.d_p, report.d_ba, report.d_bp, report.soft_sum
    )
}

pub fn prune_csv(curve: &PruneCurve) -> String {
    let mut out = String::from("clusters,d_ba,power_diff_db,kept_power_db,noise_3sigma\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            p.clusters, p.d_ba, p.power_diff_db, p.kept_power_db, p.noise_3sigma
        );
    }
    out
}

pub fn slices_summary_csv(s: &SliceSpectra) -> String {
    let mut out = String::from("snapshot,d_p_az,d_p_el,penalty_deg,probes\n");
    for i in 0..s.d_p_az.len() {
        let probes: Vec<String> = s.solutions[i].probes.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{i},{:.6},{:.6},{},{}",
            s.d_p_az[i],
            s.d_p_el[i],
            s.penalties[i],
            probes.join(" ")
        );
    }
    out
}

pub fn trace_stats_csv(s: &TraceStats) -> String {
    format!(
        "snapshots,azimuth_min,azimuth_max,azimuth_range,sigma_az_mean,sigma_az_std,largest_jump_deg,largest_jump_at\n\
         {},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{}\n",
        s.snapshots,
        s.azimuth_min,
        s.azimuth_max,
        s.azimuth_range,
        s.sigma_az_mean,
        s.sigma_az_std,
        s.largest_jump,
        s.largest_jump_at
    )
}

/// Writes named files under `dir`, creating it; returns the paths.
pub fn emit_report(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

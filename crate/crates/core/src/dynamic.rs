//! Emulation of a moving cluster: per-snapshot probe selection along a
//! trajectory and comparison of target and emulated spectrum slices in the
//! azimuth and elevation planes.

use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{AngularGrid, ClusterState};
use crate::error::{Error, Result};
use crate::geometry::{wrap_degrees, Direction, PlanarArray, ProbePanel};
use crate::metrics::{probe_spectrum, target_spectrum, tv_distance, Sector};
use crate::optimizer::{
    probe_fields, select_probes, solve_weights, ClusterTarget, SolverOptions, WeightSolution,
};
use crate::scheduler::{plan_activation, SwitchPlan};

/// Elevation spread assumed for azimuth-only traces, degrees.
pub const DEFAULT_SIGMA_EL: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    SyntheticLinear,
    TraceFile,
}

/// Dominant-cluster states over time. Each snapshot's cluster sits at
/// 0 dB; the recorded powers are kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<ClusterState>,
    /// Snapshot labels, strictly increasing.
    pub indices: Vec<usize>,
    pub recorded_power_db: Vec<f64>,
    pub source: TrajectorySource,
}

impl Trajectory {
    pub fn new(
        snapshots: Vec<ClusterState>,
        indices: Vec<usize>,
        recorded_power_db: Vec<f64>,
        source: TrajectorySource,
    ) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::invalid("a trajectory needs at least two snapshots"));
        }
        if indices.len() != snapshots.len() || recorded_power_db.len() != snapshots.len() {
            return Err(Error::invalid(
                "snapshot labels and powers must match the snapshot count",
            ));
        }
        if let Some(w) = indices.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "snapshot index {} follows {}; indices must increase",
                w[1], w[0]
            )));
        }
        if recorded_power_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("snapshot powers must be finite"));
        }
        let snapshots = snapshots
            .into_iter()
            .map(|mut c| {
                c.power_db = 0.0;
                c
            })
            .collect();
        Ok(Trajectory {
            snapshots,
            indices,
            recorded_power_db,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Smallest and largest centroid azimuth.
    pub fn azimuth_bounds(&self) -> (f64, f64) {
        self.snapshots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.centroid.azimuth()), hi.max(c.centroid.azimuth()))
            })
    }

    /// Every centroid and ray turned by `degrees` in azimuth.
    pub fn rotated(&self, degrees: f64) -> Trajectory {
        let mut t = self.clone();
        for c in &mut t.snapshots {
            c.centroid = c.centroid.rotated(degrees);
            for r in &mut c.rays {
                r.dir_rx = r.dir_rx.rotated(degrees);
            }
        }
        t
    }
}

/// Centroid moving linearly between two directions with fixed spreads.
pub fn synthetic_trajectory(
    n_snapshots: usize,
    az: (f64, f64),
    el: (f64, f64),
    sigma_az: f64,
    sigma_el: f64,
) -> Result<Trajectory> {
    if n_snapshots < 2 {
        return Err(Error::invalid("a trajectory needs at least two snapshots"));
    }
    let snapshots = (0..n_snapshots)
        .map(|i| {
            let f = i as f64 / (n_snapshots - 1) as f64;
            let dir = Direction::new(az.0 + f * (az.1 - az.0), el.0 + f * (el.1 - el.0))?;
            ClusterState::new(dir, sigma_az, sigma_el, 0.0, Vec::new())
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(
        snapshots,
        (0..n_snapshots).collect(),
        vec![0.0; n_snapshots],
        TrajectorySource::SyntheticLinear,
    )
}

/// Turns the trajectory so the middle of its azimuth range faces the panel
/// boresight; returns the trajectory and the applied pre-rotation.
pub fn pre_rotate(traj: &Trajectory, panel: &ProbePanel) -> (Trajectory, f64) {
    let (lo, hi) = traj.azimuth_bounds();
    let rotation = wrap_degrees(0.5 * (lo + hi) - panel.boresight_azimuth());
    (traj.rotated(-rotation), rotation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityForm {
    /// One distance over the whole time-angle image.
    #[default]
    Concatenated,
    /// Mean of the per-snapshot distances.
    MeanOfSnapshots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicOptions {
    pub solver: SolverOptions,
    /// Region sliced; the panel's own extent when unset.
    pub slice_sector: Option<Sector>,
    pub slice_step: f64,
    pub form: SimilarityForm,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        DynamicOptions {
            solver: SolverOptions::default(),
            slice_sector: None,
            slice_step: 1.0,
            form: SimilarityForm::default(),
        }
    }
}

/// Target and emulated slices per snapshot, with their distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpectra {
    pub az_grid: Vec<f64>,
    pub el_grid: Vec<f64>,
    pub target_az: Vec<Vec<f64>>,
    pub emulated_az: Vec<Vec<f64>>,
    pub target_el: Vec<Vec<f64>>,
    pub emulated_el: Vec<Vec<f64>>,
    pub d_p_az: Vec<f64>,
    pub d_p_el: Vec<f64>,
    pub similarity_az: f64,
    pub similarity_el: f64,
    pub form: SimilarityForm,
    pub solutions: Vec<WeightSolution>,
    /// Substitution penalty per snapshot, degrees; zero without a plan.
    pub penalties: Vec<f64>,
}

impl SliceSpectra {
    /// Dense matrix with one row per angle and one column per snapshot.
    pub fn matrix_csv(grid: &[f64], columns: &[Vec<f64>]) -> String {
        let mut out = String::from("angle_deg");
        for t in 0..columns.len() {
            out.push_str(&format!(",s{t}"));
        }
        out.push('\n');
        for (i, a) in grid.iter().enumerate() {
            out.push_str(&format!("{a}"));
            for col in columns {
                out.push_str(&format!(",{:.9e}", col[i]));
            }
            out.push('\n');
        }
        out
    }
}

fn similarity(
    form: SimilarityForm,
    target: &[Vec<f64>],
    emulated: &[Vec<f64>],
    per_snapshot: &[f64],
) -> Result<f64> {
    let d = match form {
        SimilarityForm::Concatenated => tv_distance(&target.concat(), &emulated.concat())?,
        SimilarityForm::MeanOfSnapshots => {
            per_snapshot.iter().sum::<f64>() / per_snapshot.len() as f64
        }
    };
    Ok(1.0 - d)
}

/// Emulates each snapshot and compares spectrum slices through the
/// centroid. With a switch plan, probes are activated through it; without
/// one, the optimizer's choice is used directly.
pub fn emulate_trajectory(
    traj: &Trajectory,
    dut: &PlanarArray,
    panel: &ProbePanel,
    plan: Option<&SwitchPlan>,
    k: usize,
    opts: &DynamicOptions,
) -> Result<SliceSpectra> {
    if let Some(p) = plan {
        if p.ports != k {
            return Err(Error::invalid(format!(
                "switch plan has {} ports, not {k}",
                p.ports
            )));
        }
    }
    for (t, c) in traj.snapshots.iter().enumerate() {
        if !panel.contains(&c.centroid) {
            return Err(Error::TrajectoryOutOfSector {
                snapshot: t,
                azimuth: c.centroid.azimuth(),
                elevation: c.centroid.elevation(),
            });
        }
    }
    let targets = traj
        .snapshots
        .par_iter()
        .map(|c| ClusterTarget::new(c, dut, opts.solver.pas_step))
        .collect::<Result<Vec<_>>>()?;
    let (solutions, penalties) = match plan {
        Some(plan) => {
            let s = plan_activation(
                plan,
                panel,
                &traj.snapshots,
                |t, _| select_probes(&targets[t], panel, k, dut, &opts.solver),
                |t, _, active| solve_weights(&targets[t], panel, active, dut, &opts.solver),
            )?;
            s.snapshots
                .into_iter()
                .map(|a| (a.solution, a.penalty))
                .unzip()
        }
        None => {
            let s = targets
                .par_iter()
                .map(|t| select_probes(t, panel, k, dut, &opts.solver))
                .collect::<Result<Vec<_>>>()?;
            let n = s.len();
            (s, vec![0.0; n])
        }
    };
    let sector = opts.slice_sector.unwrap_or_else(|| Sector::of_panel(panel));
    let full = sector.scan_grid(opts.slice_step)?;
    let (az_grid, el_grid) = (full.az.clone(), full.el.clone());
    let slices = targets
        .par_iter()
        .zip(&solutions)
        .map(|(target, sol)| {
            let fields = probe_fields(dut, panel, &sol.probes)?;
            let powers = unit_element_powers(&fields, &sol.powers, dut.len());
            let c = target.centroid;
            let az_plane = AngularGrid {
                az: az_grid.clone(),
                el: vec![c.elevation()],
            };
            let el_plane = AngularGrid {
                az: vec![c.azimuth()],
                el: el_grid.clone(),
            };
            let ta = target_spectrum(&target.lattice, dut, &az_plane).values;
            let ea = probe_spectrum(&fields, &powers, dut, &az_plane).values;
            let te = target_spectrum(&target.lattice, dut, &el_plane).values;
            let ee = probe_spectrum(&fields, &powers, dut, &el_plane).values;
            Ok((
                tv_distance(&ta, &ea)?,
                tv_distance(&te, &ee)?,
                ta,
                ea,
                te,
                ee,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SliceSpectra {
        az_grid,
        el_grid,
        target_az: Vec::new(),
        emulated_az: Vec::new(),
        target_el: Vec::new(),
        emulated_el: Vec::new(),
        d_p_az: Vec::new(),
        d_p_el: Vec::new(),
        similarity_az: 0.0,
        similarity_el: 0.0,
        form: opts.form,
        solutions,
        penalties,
    };
    for (da, de, ta, ea, te, ee) in slices {
        out.d_p_az.push(da);
        out.d_p_el.push(de);
        out.target_az.push(ta);
        out.emulated_az.push(ea);
        out.target_el.push(te);
        out.emulated_el.push(ee);
    }
    out.similarity_az = similarity(opts.form, &out.target_az, &out.emulated_az, &out.d_p_az)?;
    out.similarity_el = similarity(opts.form, &out.target_el, &out.emulated_el, &out.d_p_el)?;
    Ok(out)
}

/// Rescales probe powers so the emulated field has unit mean power per
/// element, like the target correlation.
fn unit_element_powers(fields: &[DVector<Complex64>], powers: &[f64], n: usize) -> Vec<f64> {
    let total: f64 = fields
        .iter()
        .zip(powers)
        .map(|(v, p)| p * v.norm_squared())
        .sum();
    let s = if total > 0.0 { n as f64 / total } else { 0.0 };
    powers.iter().map(|p| p * s).collect()
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    snapshot: String,
    azimuth_deg: String,
    elevation_deg: String,
    sigma_az_deg: String,
    sigma_el_deg: String,
    power_db: String,
}

const TRACE_HEADER: [&str; 6] = [
    "snapshot",
    "azimuth_deg",
    "elevation_deg",
    "sigma_az_deg",
    "sigma_el_deg",
    "power_db",
];

/// Parses a trace. Blank spreads take the trace-wide mean of the given
/// ones; a blank elevation means 0° with a 3° spread.
pub fn parse_trace(text: &str, origin: &str) -> Result<Trajectory> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(perr(1, "empty trace".into()));
    }
    for h in TRACE_HEADER {
        if !headers.iter().any(|x| x == h) {
            return Err(perr(1, format!("missing column `{h}`")));
        }
    }
    struct Raw {
        line: usize,
        snapshot: usize,
        az: f64,
        el: Option<f64>,
        sigma_az: Option<f64>,
        sigma_el: Option<f64>,
        power: f64,
    }
    let num = |line: usize, name: &str, s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Some)
            .ok_or_else(|| perr(line, format!("bad {name} `{s}`")))
    };
    let mut raws = Vec::new();
    for (i, rec) in reader.deserialize::<TraceRow>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| perr(line, e.to_string()))?;
        let snapshot = r
            .snapshot
            .parse::<usize>()
            .map_err(|_| perr(line, format!("bad snapshot index `{}`", r.snapshot)))?;
        let az = num(line, "azimuth", &r.azimuth_deg)?
            .ok_or_else(|| perr(line, "azimuth is required".into()))?;
        let power = num(line, "power", &r.power_db)?
            .ok_or_else(|| perr(line, "power is required".into()))?;
        let sigma_az = num(line, "azimuth spread", &r.sigma_az_deg)?;
        let sigma_el = num(line, "elevation spread", &r.sigma_el_deg)?;
        if sigma_az.is_some_and(|s| s <= 0.0) || sigma_el.is_some_and(|s| s <= 0.0) {
            return Err(perr(line, "spreads must be positive".into()));
        }
        raws.push(Raw {
            line,
            snapshot,
            az,
            el: num(line, "elevation", &r.elevation_deg)?,
            sigma_az,
            sigma_el,
            power,
        });
    }
    if raws.is_empty() {
        return Err(perr(1, "trace has no records".into()));
    }
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mean_az = mean(raws.iter().filter_map(|r| r.sigma_az).collect())
        .ok_or_else(|| perr(1, "no record gives an azimuth spread".into()))?;
    let mean_el =
        mean(raws.iter().filter_map(|r| r.sigma_el).collect()).unwrap_or(DEFAULT_SIGMA_EL);
    let mut snapshots = Vec::with_capacity(raws.len());
    for r in &raws {
        let (el, sigma_el) = match r.el {
            Some(e) => (e, r.sigma_el.unwrap_or(mean_el)),
            None => (0.0, r.sigma_el.unwrap_or(DEFAULT_SIGMA_EL)),
        };
        let dir = Direction::new(r.az, el).map_err(|e| perr(r.line, e.to_string()))?;
        snapshots.push(ClusterState::new(
            dir,
            r.sigma_az.unwrap_or(mean_az),
            sigma_el,
            0.0,
            Vec::new(),
        )?);
    }
    Trajectory::new(
        snapshots,
        raws.iter().map(|r| r.snapshot).collect(),
        raws.iter().map(|r| r.power).collect(),
        TrajectorySource::TraceFile,
    )
}

pub fn load_trace(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}

/// Trace text with every field written out.
pub fn format_trace(traj: &Trajectory) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for ((c, i), p) in traj
        .snapshots
        .iter()
        .zip(&traj.indices)
        .zip(&traj.recorded_power_db)
    {
        out.push_str(&format!(
            "{i},{},{},{},{},{p}\n",
            c.centroid.azimuth(),
            c.centroid.elevation(),
            c.sigma_az,
            c.sigma_el
        ));
    }
    out
}

pub fn save_trace(traj: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, format_trace(traj)).map_err(|e| Error::io(path, e))
}

/// A 50-location indoor-style trace: a stable line-of-sight cluster in a
/// hall, then a blocked, weaker and wandering cluster in a corridor.
pub fn bundled_trace() -> Trajectory {
    parse_trace(include_str!("../data/indoor_trace.csv"), "indoor_trace.csv")
        .expect("bundled trace parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub snapshots: usize,
    pub azimuth_min: f64,
    pub azimuth_max: f64,
    pub azimuth_range: f64,
    pub sigma_az_mean: f64,
    /// Sample standard deviation.
    pub sigma_az_std: f64,
    /// Largest centroid step between consecutive snapshots, and the
    /// position of the snapshot it lands on.
    pub largest_jump: f64,
    pub largest_jump_at: usize,
}

pub fn trace_stats(traj: &Trajectory) -> TraceStats {
    let (lo, hi) = traj.azimuth_bounds();
    let s: Vec<f64> = traj.snapshots.iter().map(|c| c.sigma_az).collect();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let (jump_at, jump) = traj
        .snapshots
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i + 1, w[0].centroid.grid_distance(&w[1].centroid)))
        .fold((0, 0.0), |best, x| if x.1 > best.1 { x } else { best });
    TraceStats {
        snapshots: traj.len(),
        azimuth_min: lo,
        azimuth_max: hi,
        azimuth_range: hi - lo,
        sigma_az_mean: mean,
        sigma_az_std: var.sqrt(),
        largest_jump: jump,
        largest_jump_at: jump_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_interpolation() {
        let t = synthetic_trajectory(13, (-60.0, 60.0), (-30.0, 30.0), 5.0, 3.0).unwrap();
        assert_eq!(t.len(), 13);
        for (i, w) in t.snapshots.windows(2).enumerate() {
            assert_relative_eq!(
                w[1].centroid.azimuth() - w[0].centroid.azimuth(),
                10.0,
                epsilon = 1e-9
            );
            assert_relative_eq!(
                w[1].centroid.elevation() - w[0].centroid.elevation(),
                5.0,
                epsilon = 1e-9
            );
            assert_eq!(t.indices[i], i);
        }
        let two = synthetic_trajectory(2, (-60.0, 60.0), (0.0, 0.0), 5.0, 3.0).unwrap();
        assert_eq!(two.snapshots[1].centroid.azimuth(), 60.0);
        let still = synthetic_trajectory(5, (7.0, 7.0), (2.0, 2.0), 5.0, 3.0).unwrap();
        assert!(still.snapshots.iter().all(|c| c == &still.snapshots[0]));
        assert!(synthetic_trajectory(1, (0.0, 0.0), (0.0, 0.0), 5.0, 3.0).is_err());
    }

    #[test]
    fn pre_rotation_centres_the_range() {
        let panel = ProbePanel::new(2.0, 8.0, 160.0, 64.0).unwrap();
        let t = synthetic_trajectory(4, (10.0, 160.0), (0.0, 0.0), 5.0, 3.0).unwrap();
        let (r, rot) = pre_rotate(&t, &panel);
        assert_relative_eq!(rot, 85.0);
        assert_eq!(r.azimuth_bounds(), (-75.0, 75.0));
        let back = r.rotated(rot);
        for (a, b) in back.snapshots.iter().zip(&t.snapshots) {
            assert_relative_eq!(a.centroid.azimuth(), b.centroid.azimuth(), epsilon = 1e-9);
        }
        let sym = synthetic_trajectory(3, (-30.0, 30.0), (0.0, 0.0), 5.0, 3.0).unwrap();
        assert_eq!(pre_rotate(&sym, &panel).1, 0.0);
    }

    #[test]
    fn static_aligned_single_probe() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 8.0, 64.0, 32.0).unwrap();
        let t = synthetic_trajectory(3, (0.0, 0.0), (0.0, 0.0), 5.0, 3.0).unwrap();
        let s = emulate_trajectory(&t, &dut, &panel, None, 1, &DynamicOptions::default()).unwrap();
        assert!(s.similarity_az >= 0.95, "{}", s.similarity_az);
        assert!((0.0..=1.0).contains(&s.similarity_el));
        assert_eq!(s.d_p_az.len(), 3);
    }

    #[test]
    fn conflict_free_plan_matches_the_free_optimizer() {
        use crate::scheduler::build_switch_plan;
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 8.0, 64.0, 32.0).unwrap();
        let plan = build_switch_plan(&panel, 4).unwrap();
        let t = synthetic_trajectory(5, (-20.0, 20.0), (-8.0, 8.0), 5.0, 3.0).unwrap();
        let opts = DynamicOptions::default();
        let free = emulate_trajectory(&t, &dut, &panel, None, 4, &opts).unwrap();
        let planned = emulate_trajectory(&t, &dut, &panel, Some(&plan), 4, &opts).unwrap();
        for i in 0..t.len() {
            if planned.penalties[i] == 0.0 {
                assert_eq!(free.d_p_az[i], planned.d_p_az[i]);
                assert_eq!(free.d_p_el[i], planned.d_p_el[i]);
            }
        }
        assert!(emulate_trajectory(&t, &dut, &panel, Some(&plan), 3, &opts).is_err());
    }

    #[test]
    fn trajectory_must_stay_on_the_panel() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 8.0, 32.0, 32.0).unwrap();
        let t = synthetic_trajectory(3, (0.0, 30.0), (0.0, 0.0), 5.0, 3.0).unwrap();
        let err =
            emulate_trajectory(&t, &dut, &panel, None, 2, &DynamicOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::TrajectoryOutOfSector { snapshot: 2, .. }
        ));
    }

    #[test]
    fn similarity_forms_agree_on_normalized_columns() {
        let a = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let b = vec![vec![0.0, 1.0], vec![0.5, 0.5]];
        let per = [1.0, 0.0];
        let c = similarity(SimilarityForm::Concatenated, &a, &b, &per).unwrap();
        let m = similarity(SimilarityForm::MeanOfSnapshots, &a, &b, &per).unwrap();
        assert_relative_eq!(c, m);
    }

    #[test]
    fn trace_round_trip_and_defaults() {
        let text = "snapshot,azimuth_deg,elevation_deg,sigma_az_deg,sigma_el_deg,power_db\n\
                    1,10,,4,,-60\n2,12.5,5,,2,-61.5\n4,20,,6,,-70\n";
        let t = parse_trace(text, "t.csv").unwrap();
        assert_eq!(t.indices, vec![1, 2, 4]);
        assert_eq!(t.snapshots[0].centroid.elevation(), 0.0);
        assert_eq!(t.snapshots[0].sigma_el, DEFAULT_SIGMA_EL);
        assert_eq!(t.snapshots[1].sigma_az, 5.0);
        assert!(t.snapshots.iter().all(|c| c.power_db == 0.0));
        let again = parse_trace(&format_trace(&t), "again").unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn trace_errors_name_the_line() {
        assert!(matches!(parse_trace("", "e"), Err(Error::Parse { .. })));
        let header = "snapshot,azimuth_deg,elevation_deg,sigma_az_deg,sigma_el_deg,power_db\n";
        assert!(matches!(parse_trace(header, "h"), Err(Error::Parse { .. })));
        let bad = format!("{header}1,10,,4,,-60\n2,abc,,4,,-60\n");
        assert!(matches!(
            parse_trace(&bad, "b"),
            Err(Error::Parse { line: 3, .. })
        ));
        let back = format!("{header}2,10,,4,,-60\n1,11,,4,,-60\n");
        assert!(matches!(parse_trace(&back, "m"), Err(Error::Validation(_))));
    }

    #[test]
    fn bundled_trace_statistics() {
        let t = bundled_trace();
        let s = trace_stats(&t);
        assert_eq!(s.snapshots, 50);
        assert!((s.sigma_az_mean - 4.7).abs() < 0.05);
        assert!((s.sigma_az_std - 2.2).abs() < 0.05);
        assert!((s.azimuth_range - 150.0).abs() < 10.0);
        assert_eq!(s.largest_jump_at, 28);
        assert!(s.largest_jump > 90.0);
    }
}

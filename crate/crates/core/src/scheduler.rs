//! Switch network sizing and per-snapshot probe activation. Each of the K
//! emulator ports drives a 1-to-Q switch; probes are wired to ports in an
//! interleaved tile so that any compact block of K probes uses every port
//! once.

use serde::{Deserialize, Serialize};

use crate::channel::ClusterState;
use crate::error::{Error, Result};
use crate::geometry::{PlanarArray, ProbePanel};
use crate::optimizer::{
    select_probes, solve_weights, ClusterTarget, SolverOptions, WeightSolution,
};

fn ceil_tol(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Switch positions per port needed to cover a `theta_a × theta_e` panel
/// at spacing `theta_s` with `k` ports.
pub fn required_q(theta_a: f64, theta_e: f64, theta_s: f64, k: usize) -> Result<usize> {
    if !(theta_a > 0.0 && theta_e > 0.0 && theta_s > 0.0) || k == 0 {
        return Err(Error::invalid(
            "panel extents, spacing and port count must be positive",
        ));
    }
    let probes = ceil_tol(theta_a / theta_s + 1.0) * ceil_tol(theta_e / theta_s + 1.0);
    Ok(probes.div_ceil(k))
}

/// Most nearly square `r × c = k` with `r ≤ c`.
pub fn tile_for(k: usize) -> (usize, usize) {
    let r = (1..=k)
        .take_while(|r| r * r <= k)
        .filter(|r| k.is_multiple_of(*r))
        .last()
        .unwrap_or(1);
    (r, k / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub ports: usize,
    /// Positions per switch: the largest port load.
    pub q: usize,
    /// Interleave tile (rows in elevation, columns in azimuth).
    pub tile: (usize, usize),
    /// Panel grid (elevation rows, azimuth columns).
    pub grid: (usize, usize),
    /// Port of each probe, by probe index.
    pub assignment: Vec<usize>,
}

impl SwitchPlan {
    pub fn port_of(&self, probe: usize) -> usize {
        self.assignment[probe]
    }

    /// Probes wired to `port`.
    pub fn probes_on(&self, port: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == port)
            .collect()
    }

    pub fn port_loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.ports];
        for &p in &self.assignment {
            loads[p] += 1;
        }
        loads
    }
}

pub fn build_switch_plan(panel: &ProbePanel, k: usize) -> Result<SwitchPlan> {
    if k == 0 {
        return Err(Error::invalid("need at least one port"));
    }
    if k > panel.len() {
        return Err(Error::invalid(format!(
            "{k} ports exceed the {} probes on the panel",
            panel.len()
        )));
    }
    let (r, c) = tile_for(k);
    let (rows, cols) = panel.grid_shape();
    if r > rows || c > cols {
        return Err(Error::invalid(format!(
            "a {r}x{c} interleave tile does not fit a {rows}x{cols} probe grid"
        )));
    }
    let assignment: Vec<usize> = panel
        .probes()
        .iter()
        .map(|p| {
            let (row, col) = p.grid;
            row % r + r * (col % c)
        })
        .collect();
    // equals ⌈probes / k⌉ whenever the tile divides the grid
    let mut loads = vec![0; k];
    for &p in &assignment {
        loads[p] += 1;
    }
    Ok(SwitchPlan {
        ports: k,
        q: loads.into_iter().max().unwrap_or(0),
        tile: (r, c),
        grid: (rows, cols),
        assignment,
    })
}

/// Probes switched on for one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotActivation {
    pub snapshot: usize,
    /// Optimizer's choice, strongest first.
    pub desired: Vec<usize>,
    /// Final probes with their weights.
    pub solution: WeightSolution,
    /// Port of each activated probe.
    pub ports: Vec<usize>,
    /// Summed angular distance of substitutions, degrees.
    pub penalty: f64,
    pub substitutions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSchedule {
    pub snapshots: Vec<SnapshotActivation>,
}

impl ActivationSchedule {
    pub fn total_penalty(&self) -> f64 {
        self.snapshots.iter().map(|s| s.penalty).sum()
    }

    /// Rows of `snapshot, port, probe, azimuth_deg, elevation_deg, power`.
    pub fn to_csv(&self, panel: &ProbePanel) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Validation(format!("schedule export: {e}"));
        w.write_record([
            "snapshot",
            "port",
            "probe",
            "azimuth_deg",
            "elevation_deg",
            "power",
        ])
        .map_err(csv_err)?;
        for s in &self.snapshots {
            let mut rows: Vec<(usize, usize, f64)> = s
                .solution
                .probes
                .iter()
                .zip(&s.ports)
                .zip(&s.solution.powers)
                .map(|((&probe, &port), &p)| (port, probe, p))
                .collect();
            rows.sort_by_key(|r| r.0);
            for (port, probe, power) in rows {
                let d = panel
                    .probe(probe)
                    .ok_or_else(|| Error::invalid(format!("probe {probe} is not on the panel")))?
                    .direction;
                w.write_record([
                    s.snapshot.to_string(),
                    port.to_string(),
                    probe.to_string(),
                    format!("{:.6}", d.azimuth()),
                    format!("{:.6}", d.elevation()),
                    format!("{power:.9}"),
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Validation(format!("schedule export: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
    }
}

/// Resolves port conflicts in a desired probe set. Probes are kept in
/// weight order while their port is free; each displaced probe is replaced
/// by the nearest probe whose port is still free. Returns the activated
/// probes and the summed substitution distance.
pub fn resolve_ports(
    plan: &SwitchPlan,
    panel: &ProbePanel,
    desired: &WeightSolution,
) -> (Vec<usize>, f64, usize) {
    let mut order: Vec<usize> = (0..desired.probes.len()).collect();
    order.sort_by(|&a, &b| {
        desired.powers[b]
            .total_cmp(&desired.powers[a])
            .then(a.cmp(&b))
    });
    let mut used = vec![false; plan.ports];
    let mut active = Vec::with_capacity(order.len());
    let mut displaced = Vec::new();
    for &i in &order {
        let probe = desired.probes[i];
        let port = plan.port_of(probe);
        if used[port] {
            displaced.push(probe);
        } else {
            used[port] = true;
            active.push(probe);
        }
    }
    let mut penalty = 0.0;
    let substitutions = displaced.len();
    for probe in displaced {
        let from = panel.probes()[probe].direction;
        let best = panel
            .probes()
            .iter()
            .filter(|p| !used[plan.port_of(p.index)] && !active.contains(&p.index))
            .map(|p| (p.direction.grid_distance(&from), p.index))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((d, idx)) = best {
            used[plan.port_of(idx)] = true;
            active.push(idx);
            penalty += d;
        }
    }
    (active, penalty, substitutions)
}

/// Plans activation along a trajectory. `select` gives the desired probes
/// of a snapshot; when ports conflict, `reweight` re-optimizes the weights
/// of the substituted set.
pub fn plan_activation<S, W>(
    plan: &SwitchPlan,
    panel: &ProbePanel,
    snapshots: &[ClusterState],
    mut select: S,
    mut reweight: W,
) -> Result<ActivationSchedule>
where
    S: FnMut(usize, &ClusterState) -> Result<WeightSolution>,
    W: FnMut(usize, &ClusterState, &[usize]) -> Result<WeightSolution>,
{
    if plan.assignment.len() != panel.len() {
        return Err(Error::invalid(
            "switch plan was built for a different panel",
        ));
    }
    let mut out = Vec::with_capacity(snapshots.len());
    for (t, cluster) in snapshots.iter().enumerate() {
        let c = cluster.centroid;
        if !panel.contains(&c) {
            return Err(Error::TrajectoryOutOfSector {
                snapshot: t,
                azimuth: c.azimuth(),
                elevation: c.elevation(),
            });
        }
        let desired = select(t, cluster)?;
        panel.check_indices(&desired.probes)?;
        let (active, penalty, substitutions) = resolve_ports(plan, panel, &desired);
        let solution = if substitutions == 0 {
            desired.clone()
        } else {
            reweight(t, cluster, &active)?
        };
        out.push(SnapshotActivation {
            snapshot: t,
            desired: desired.probes.clone(),
            ports: solution.probes.iter().map(|&p| plan.port_of(p)).collect(),
            solution,
            penalty,
            substitutions,
        });
    }
    Ok(ActivationSchedule { snapshots: out })
}

/// Activation driven by the two-step probe selection for each snapshot.
pub fn plan_with_optimizer(
    plan: &SwitchPlan,
    panel: &ProbePanel,
    snapshots: &[ClusterState],
    dut: &PlanarArray,
    opts: &SolverOptions,
) -> Result<ActivationSchedule> {
    let targets = snapshots
        .iter()
        .map(|c| ClusterTarget::new(c, dut, opts.pas_step))
        .collect::<Result<Vec<_>>>()?;
    plan_activation(
        plan,
        panel,
        snapshots,
        |t, _| select_probes(&targets[t], panel, plan.ports, dut, opts),
        |t, _, active| solve_weights(&targets[t], panel, active, dut, opts),
    )
}

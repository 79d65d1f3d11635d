//! Scenario files: one TOML document describing the DUT, the chamber and
//! whatever the chosen subcommand needs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use smpac_core::channel::{ChannelScene, ClusterState, DEFAULT_RAYS_PER_CLUSTER};
use smpac_core::dominance::{CdlProfile, PruneOptions};
use smpac_core::dynamic::{load_trace, synthetic_trajectory, DynamicOptions, Trajectory};
use smpac_core::geometry::{Direction, PlanarArray, ProbePanel};
use smpac_core::metrics::{FidelityOptions, Sector};
use smpac_core::optimizer::SolverOptions;
use smpac_core::sweep::SweepConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DutSpec {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl Default for DutSpec {
    fn default() -> Self {
        DutSpec {
            rows: 8,
            cols: 8,
            spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChamberSpec {
    /// Probe range in metres.
    pub range: f64,
    /// Probe spacing in degrees.
    pub spacing: f64,
    pub az_extent: f64,
    pub el_extent: f64,
    /// Emulator ports, i.e. active probes.
    pub probes: usize,
}

impl Default for ChamberSpec {
    fn default() -> Self {
        ChamberSpec {
            range: 2.0,
            spacing: 8.0,
            az_extent: 128.0,
            el_extent: 64.0,
            probes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSpec {
    pub azimuth: f64,
    pub elevation: f64,
    pub sigma_az: f64,
    pub sigma_el: f64,
    pub power_db: f64,
    pub rays: usize,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            azimuth: 0.0,
            elevation: 0.0,
            sigma_az: 5.0,
            sigma_el: 3.0,
            power_db: 0.0,
            rays: DEFAULT_RAYS_PER_CLUSTER,
        }
    }
}

impl ClusterSpec {
    pub fn build(&self, seed: u64) -> Result<ClusterState> {
        let dir = Direction::new(self.azimuth, self.elevation)?;
        Ok(ClusterState::with_rays(
            dir,
            self.sigma_az,
            self.sigma_el,
            self.power_db,
            self.rays,
            seed,
        )?)
    }
}

/// Per-metric bounds on e_ρ, d_p and d_ba.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub rho: f64,
    pub pas: f64,
    pub ba: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            rho: 0.1,
            pas: 0.1,
            ba: 0.1,
        }
    }
}

impl Bounds {
    pub fn soft(&self) -> f64 {
        self.rho + self.pas + self.ba
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub snapshots: usize,
    pub az_from: f64,
    pub az_to: f64,
    pub el_from: f64,
    pub el_to: f64,
    pub sigma_az: f64,
    pub sigma_el: f64,
    /// Trace file; replaces the linear path when set.
    pub trace: Option<PathBuf>,
    /// Centre the trajectory's azimuth range on the panel.
    pub pre_rotate: bool,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            snapshots: 25,
            az_from: -60.0,
            az_to: 60.0,
            el_from: -30.0,
            el_to: 30.0,
            sigma_az: 5.0,
            sigma_el: 3.0,
            trace: None,
            pre_rotate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneProfile {
    CdlA,
    CdlC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSpec {
    /// Bundled profile; ignored when clusters are listed.
    pub profile: SceneProfile,
    pub clusters: Vec<ClusterSpec>,
    pub options: PruneOptions,
    /// Beam sweeping sector; 120°×60° when unset.
    pub sector: Option<Sector>,
}

impl Default for PruneSpec {
    fn default() -> Self {
        PruneSpec {
            profile: SceneProfile::CdlA,
            clusters: Vec::new(),
            options: PruneOptions::default(),
            sector: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub carrier: f64,
    pub seed: u64,
    pub realizations: usize,
    pub dut: DutSpec,
    pub chamber: ChamberSpec,
    pub cluster: ClusterSpec,
    pub bounds: Bounds,
    pub solver: SolverOptions,
    pub fidelity: FidelityOptions,
    pub trajectory: TrajectorySpec,
    pub dynamic: DynamicOptions,
    pub sweep: SweepConfig,
    pub prune: PruneSpec,
}

impl ScenarioConfig {
    /// Defaults for the fields that have no natural zero.
    pub fn standard() -> Self {
        ScenarioConfig {
            carrier: 28e9,
            seed: 2021,
            realizations: 10_000,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut base = toml::Value::try_from(Self::standard())?;
        let user: toml::Value = toml::from_str(text)?;
        merge(&mut base, user);
        let cfg: ScenarioConfig = base.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier", self.carrier),
            ("dut.spacing", self.dut.spacing),
            ("chamber.range", self.chamber.range),
            ("chamber.spacing", self.chamber.spacing),
            ("chamber.az_extent", self.chamber.az_extent),
            ("chamber.el_extent", self.chamber.el_extent),
            ("cluster.sigma_az", self.cluster.sigma_az),
            ("cluster.sigma_el", self.cluster.sigma_el),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if self.dut.rows == 0
            || self.dut.cols == 0
            || self.chamber.probes == 0
            || self.realizations == 0
        {
            bail!("DUT dimensions, probe count and realizations must be at least 1");
        }
        for (name, b) in [
            ("rho", self.bounds.rho),
            ("pas", self.bounds.pas),
            ("ba", self.bounds.ba),
        ] {
            if !(b > 0.0 && b <= 1.0) {
                bail!("bounds.{name} must lie in (0, 1], got {b}");
            }
        }
        self.sweep.validate()?;
        Ok(())
    }

    pub fn dut(&self) -> Result<PlanarArray> {
        Ok(PlanarArray::new(
            self.dut.rows,
            self.dut.cols,
            self.dut.spacing,
            self.carrier,
        )?)
    }

    pub fn panel(&self) -> Result<ProbePanel> {
        let c = &self.chamber;
        Ok(ProbePanel::new(
            c.range,
            c.spacing,
            c.az_extent,
            c.el_extent,
        )?)
    }

    pub fn fidelity(&self) -> FidelityOptions {
        FidelityOptions {
            realizations: self.realizations,
            seed: self.seed,
            ..self.fidelity.clone()
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        let t = &self.trajectory;
        match &t.trace {
            Some(path) => Ok(load_trace(path)?),
            None => Ok(synthetic_trajectory(
                t.snapshots,
                (t.az_from, t.az_to),
                (t.el_from, t.el_to),
                t.sigma_az,
                t.sigma_el,
            )?),
        }
    }

    pub fn prune_scene(&self) -> Result<ChannelScene> {
        let p = &self.prune;
        if p.clusters.is_empty() {
            let profile = match p.profile {
                SceneProfile::CdlA => CdlProfile::A,
                SceneProfile::CdlC => CdlProfile::C,
            };
            return Ok(profile.scene(DEFAULT_RAYS_PER_CLUSTER, self.seed)?);
        }
        let clusters = p
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| c.build(smpac_core::derive_seed(self.seed, &[i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelScene::new(clusters, 0, "custom")?)
    }
}

/// Overlays `user` onto `base`, table by table.
fn merge(base: &mut toml::Value, user: toml::Value) {
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_the_standard_scenario() {
        let c = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(c, ScenarioConfig::standard());
        assert_eq!(c.chamber.probes, 4);
        assert_eq!(c.sweep.dut_sides.len(), 15);
    }

    #[test]
    fn partial_tables_keep_their_defaults() {
        let c = ScenarioConfig::from_toml(
            "seed = 7\n[chamber]\nspacing = 6.0\n[sweep]\ndut_sides = [2, 8]\n",
        )
        .unwrap();
        assert_eq!((c.seed, c.chamber.spacing, c.chamber.range), (7, 6.0, 2.0));
        assert_eq!(c.sweep.dut_sides, vec![2, 8]);
        assert_eq!(c.sweep.probe_counts.len(), 10);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ScenarioConfig::from_toml("[bounds]\nrho = 1.5\n").is_err());
        assert!(ScenarioConfig::from_toml("[chamber]\nrange = -1.0\n").is_err());
        assert!(ScenarioConfig::from_toml("[dut]\nrows = 0\n").is_err());
        assert!(ScenarioConfig::from_toml("[chamber]\nbogus = 1\n").is_err());
    }
}

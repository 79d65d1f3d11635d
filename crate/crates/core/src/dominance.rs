//! How many of a scene's strongest clusters an emulation must keep: the
//! full channel is compared with its pruned versions through the beam
//! allocation and the mean power of the directed beam.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{prune_to_dominant, ChannelScene, ClusterState};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{Direction, PlanarArray};
use crate::metrics::{
    beam_allocation, beam_allocation_distance, BeamAllocation, Codebook, ProjectedSources,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneOptions {
    pub realizations: usize,
    pub seed: u64,
    /// Largest acceptable beam-allocation distance.
    pub tau_ba: f64,
    /// Largest acceptable directed-beam power difference, dB.
    pub tau_power_db: f64,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions {
            realizations: 10_000,
            seed: 0xd0a1,
            tau_ba: 0.1,
            tau_power_db: 0.5,
        }
    }
}

fn allocation(
    scene: &ChannelScene,
    dut: &PlanarArray,
    codebook: &Codebook,
    n_real: usize,
    seed: u64,
) -> Result<BeamAllocation> {
    let sources = ProjectedSources::rays(scene, dut, codebook)?;
    beam_allocation(&sources, n_real, seed)
}

fn to_db(p: f64) -> f64 {
    10.0 * p.max(f64::MIN_POSITIVE).log10()
}

/// Mean over random-phase realizations of the strongest beam's power, dB.
pub fn directed_beam_mean_power(
    scene: &ChannelScene,
    dut: &PlanarArray,
    codebook: &Codebook,
    n_real: usize,
    seed: u64,
) -> Result<f64> {
    Ok(to_db(
        allocation(scene, dut, codebook, n_real, seed)?.mean_directed_power,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrunePoint {
    /// Clusters kept.
    pub clusters: usize,
    pub d_ba: f64,
    /// Absolute directed-beam power difference to the full scene, dB.
    pub power_diff_db: f64,
    /// Total power kept, relative to the full scene, dB.
    pub kept_power_db: f64,
    /// Three-sigma spread of `d_ba` between two independent estimates of
    /// the full scene's allocation.
    pub noise_3sigma: f64,
}

impl PrunePoint {
    pub fn passes(&self, opts: &PruneOptions) -> bool {
        self.d_ba <= opts.tau_ba && self.power_diff_db <= opts.tau_power_db
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneCurve {
    pub label: String,
    /// One point per kept-cluster count, 1 to the scene's cluster count.
    pub points: Vec<PrunePoint>,
    pub full_power_db: f64,
    pub recommended: usize,
}

impl PruneCurve {
    /// Whether `d_ba` never rises by more than the Monte Carlo spread.
    pub fn is_monotone_within_noise(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].d_ba <= w[0].d_ba + w[0].noise_3sigma.max(w[1].noise_3sigma))
    }
}

/// Three-sigma scale of the total variation between two independent
/// `n`-sample histograms of the same distribution `p`.
fn tv_noise(p: &[f64], n: usize) -> f64 {
    let s: f64 = p
        .iter()
        .map(|q| (2.0 * q * (1.0 - q) / n as f64).sqrt())
        .sum();
    3.0 * 0.5 * s
}

/// Compares the full scene with each pruned scene. The full allocation is
/// reused as its own pruned version, so the last point is exactly zero.
pub fn prune_curve(
    scene: &ChannelScene,
    dut: &PlanarArray,
    codebook: &Codebook,
    opts: &PruneOptions,
) -> Result<PruneCurve> {
    if opts.realizations == 0 {
        return Err(Error::invalid("need at least one realization"));
    }
    let l = scene.clusters.len();
    let full = allocation(scene, dut, codebook, opts.realizations, opts.seed)?;
    let full_power_db = to_db(full.mean_directed_power);
    let noise = tv_noise(&full.probabilities, opts.realizations);
    let total = scene.total_power();
    let points = (1..=l)
        .into_par_iter()
        .map(|n| {
            let pruned = prune_to_dominant(scene, n)?;
            let kept_power_db = to_db(
                pruned.total_power()
                    * 10f64.powf((pruned.reference_power_db - scene.reference_power_db) / 10.0)
                    / total,
            );
            let (d_ba, power_diff_db) = if n == l {
                (0.0, 0.0)
            } else {
                let a = allocation(
                    &pruned,
                    dut,
                    codebook,
                    opts.realizations,
                    derive_seed(opts.seed, &[n as u64]),
                )?;
                (
                    beam_allocation_distance(&full, &a)?,
                    (to_db(a.mean_directed_power) - full_power_db).abs(),
                )
            };
            Ok(PrunePoint {
                clusters: n,
                d_ba,
                power_diff_db,
                kept_power_db,
                noise_3sigma: noise,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let recommended = points
        .iter()
        .find(|p| p.passes(opts))
        .map_or(l, |p| p.clusters);
    Ok(PruneCurve {
        label: scene.label.clone(),
        points,
        full_power_db,
        recommended,
    })
}

/// Bundled clustered-delay-line profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdlProfile {
    A,
    C,
}

struct CdlTable {
    /// Per-cluster rms arrival spreads, degrees.
    asa: f64,
    zsa: f64,
    csv: &'static str,
}

impl CdlProfile {
    fn table(self) -> CdlTable {
        match self {
            CdlProfile::A => CdlTable {
                asa: 11.0,
                zsa: 3.0,
                csv: include_str!("../data/cdl_a.csv"),
            },
            CdlProfile::C => CdlTable {
                asa: 15.0,
                zsa: 7.0,
                csv: include_str!("../data/cdl_c.csv"),
            },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CdlProfile::A => "CDL-A",
            CdlProfile::C => "CDL-C",
        }
    }

    /// Scene with `rays` rays per cluster. Arrival zenith angles become
    /// elevations above the horizontal plane.
    pub fn scene(self, rays: usize, seed: u64) -> Result<ChannelScene> {
        #[derive(Deserialize)]
        struct Row {
            cluster: usize,
            power_db: f64,
            aoa: f64,
            zoa: f64,
        }
        let t = self.table();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(t.csv.as_bytes());
        let mut clusters = Vec::new();
        for (line, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: self.label().into(),
                line: line + 2,
                message: e.to_string(),
            })?;
            let dir = Direction::new(row.aoa, 90.0 - row.zoa)?;
            clusters.push(ClusterState::with_rays(
                dir,
                t.asa,
                t.zsa,
                row.power_db,
                rays,
                derive_seed(seed, &[row.cluster as u64]),
            )?);
        }
        ChannelScene::new(clusters, 0, self.label())
    }
}

//! Fidelity metrics between a target cluster and its chamber emulation,
//! plus the DUT beam codebook and beam-allocation statistics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chamber::complex_gaussian;
use crate::channel::{AngularGrid, ChannelScene, ClusterState};
use crate::error::{Error, Result};
use crate::geometry::{Direction, PlanarArray, ProbePanel};
use crate::optimizer::{
    probe_fields, reproduced_correlation, ClusterTarget, CorrelationMatrix, LatticeCorrelation,
    WeightSolution,
};

/// Weighted RMS deviation between two correlation matrices; large
/// coefficients count more.
pub fn spatial_correlation_error(
    target: &CorrelationMatrix,
    emulated: &CorrelationMatrix,
) -> Result<f64> {
    let (a, b) = (&target.entries, &emulated.entries);
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::invalid(format!(
            "correlation shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.nrows() as f64;
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr() * x.norm().max(y.norm()))
        .sum();
    Ok((sum / (n * n)).sqrt())
}

/// Power over an angular scan grid, row-major (elevation, azimuth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: AngularGrid,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum over elevation for each azimuth.
    pub fn azimuth_marginal(&self) -> Vec<f64> {
        let na = self.grid.az.len();
        let mut out = vec![0.0; na];
        for row in self.values.chunks(na) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Sum over azimuth for each elevation.
    pub fn elevation_marginal(&self) -> Vec<f64> {
        self.values
            .chunks(self.grid.az.len())
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Direction of the largest value.
    pub fn peak(&self) -> (f64, f64) {
        let i =
            self.values.iter().enumerate().fold(
                0,
                |best, (i, v)| if *v > self.values[best] { i } else { best },
            );
        let na = self.grid.az.len();
        (self.grid.az[i % na], self.grid.el[i / na])
    }
}

/// Steering vectors over a grid, built separably from per-axis phasors.
fn for_each_steering<F>(dut: &PlanarArray, grid: &AngularGrid, f: F) -> Vec<f64>
where
    F: Fn(&DVector<Complex64>) -> f64 + Sync,
{
    let points: Vec<(f64, f64)> = grid.points().collect();
    let phase = dut.wavenumber() * dut.pitch();
    let (rows, cols) = (dut.rows(), dut.cols());
    let r0 = (rows as f64 - 1.0) / 2.0;
    let c0 = (cols as f64 - 1.0) / 2.0;
    points
        .par_iter()
        .map(|&(az, el)| {
            let (sa, _) = az.to_radians().sin_cos();
            let (se, ce) = el.to_radians().sin_cos();
            let (uy, uz) = (ce * sa, se);
            let ys: Vec<Complex64> = (0..cols)
                .map(|c| Complex64::from_polar(1.0, phase * uy * (c as f64 - c0)))
                .collect();
            let zs: Vec<Complex64> = (0..rows)
                .map(|r| Complex64::from_polar(1.0, phase * uz * (r as f64 - r0)))
                .collect();
            let a = DVector::from_fn(rows * cols, |n, _| zs[n / cols] * ys[n % cols]);
            f(&a)
        })
        .collect()
}

/// `aᴴ(Ω) R a(Ω)` over `grid` for a covariance that must be positive
/// semidefinite (eigenvalues ≥ −1e-9 relative to the largest).
pub fn bartlett_spectrum(
    cov: &DMatrix<Complex64>,
    dut: &PlanarArray,
    grid: &AngularGrid,
) -> Result<Spectrum> {
    if cov.shape() != (dut.len(), dut.len()) {
        return Err(Error::invalid(format!(
            "covariance is {:?}, DUT has {} elements",
            cov.shape(),
            dut.len()
        )));
    }
    let herm = (cov + cov.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.clone().symmetric_eigenvalues();
    let top = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.iter().any(|&v| v < -1e-9 * top.max(1.0)) {
        return Err(Error::invalid("covariance is not positive semidefinite"));
    }
    let values = for_each_steering(dut, grid, |a| (a.adjoint() * &herm * a)[(0, 0)].re.max(0.0));
    Ok(Spectrum {
        grid: grid.clone(),
        values,
    })
}

/// Bartlett spectrum of a target cluster from its lattice correlation.
pub fn target_spectrum(
    lattice: &LatticeCorrelation,
    dut: &PlanarArray,
    grid: &AngularGrid,
) -> Spectrum {
    let values = grid
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(a, e)| {
            lattice.bartlett(dut, &Direction::new(a, e).expect("grid inside the sphere"))
        })
        .collect();
    Spectrum {
        grid: grid.clone(),
        values,
    }
}

/// Bartlett spectrum of weighted, independently faded probes:
/// `Σ_k p_k |aᴴ v_k|²`.
pub fn probe_spectrum(
    fields: &[DVector<Complex64>],
    powers: &[f64],
    dut: &PlanarArray,
    grid: &AngularGrid,
) -> Spectrum {
    let values = for_each_steering(dut, grid, |a| {
        fields
            .iter()
            .zip(powers)
            .map(|(v, p)| p * a.dotc(v).norm_sqr())
            .sum()
    });
    Spectrum {
        grid: grid.clone(),
        values,
    }
}

/// Total variation distance between two nonnegative vectors after each
/// is normalized to unit sum.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if !(sp > 0.0) || !(sq > 0.0) {
        return Err(Error::invalid("distribution has zero total mass"));
    }
    if p.iter().chain(q).any(|x| *x < 0.0) {
        return Err(Error::invalid("distribution has negative mass"));
    }
    let d: f64 = p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// Total variation distance between two Bartlett spectra on one grid.
pub fn pas_distance(target: &Spectrum, emulated: &Spectrum) -> Result<f64> {
    if target.grid != emulated.grid {
        return Err(Error::invalid("spectra are on different grids"));
    }
    tv_distance(&target.values, &emulated.values)
}

/// Angular region in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub az_lo: f64,
    pub az_hi: f64,
    pub el_lo: f64,
    pub el_hi: f64,
}

impl Sector {
    pub fn centred(az_extent: f64, el_extent: f64) -> Self {
        Sector {
            az_lo: -az_extent / 2.0,
            az_hi: az_extent / 2.0,
            el_lo: -el_extent / 2.0,
            el_hi: el_extent / 2.0,
        }
    }

    /// Angular extent of a probe panel.
    pub fn of_panel(panel: &ProbePanel) -> Self {
        let b = panel.boresight_azimuth();
        Sector {
            az_lo: b - panel.az_extent() / 2.0,
            az_hi: b + panel.az_extent() / 2.0,
            el_lo: -panel.el_extent() / 2.0,
            el_hi: panel.el_extent() / 2.0,
        }
    }

    pub fn scan_grid(&self, step: f64) -> Result<AngularGrid> {
        AngularGrid::new(self.az_lo, self.az_hi, self.el_lo, self.el_hi, step)
    }
}

impl Default for Sector {
    fn default() -> Self {
        Sector::centred(120.0, 60.0)
    }
}

/// Full −3 dB width in degrees of the broadside array factor of `n`
/// elements at `spacing` wavelengths; infinite for a single element.
pub fn hpbw(n: usize, spacing: f64) -> f64 {
    if n <= 1 {
        return f64::INFINITY;
    }
    let af = |theta: f64| {
        let psi = 2.0 * PI * spacing * theta.to_radians().sin();
        let s: Complex64 = (0..n)
            .map(|i| Complex64::from_polar(1.0, psi * i as f64))
            .sum();
        s.norm_sqr() / (n * n) as f64
    };
    // main lobe ends at the first null, or at endfire
    let null = (1.0 / (n as f64 * spacing)).min(1.0).asin().to_degrees();
    if af(null) > 0.5 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0, null);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if af(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + hi
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub index: usize,
    pub direction: Direction,
    pub steering: DVector<Complex64>,
}

/// Beam sweeping set on an HPBW-pitch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub beams: Vec<Beam>,
    pub hpbw_az: f64,
    pub hpbw_el: f64,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Azimuth HPBW, degrees.
    pub fn hpbw(&self) -> f64 {
        self.hpbw_az
    }
}

fn beam_axis(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
    if !pitch.is_finite() || hi - lo < pitch {
        let mid = if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            0.5 * (lo + hi)
        };
        return vec![mid];
    }
    let first = (lo / pitch - 1e-9).ceil() as i64;
    let last = (hi / pitch + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * pitch).collect()
}

/// Codebook with beams at multiples of the HPBW inside `sector`, beam
/// index running over azimuth first.
pub fn build_codebook(dut: &PlanarArray, sector: &Sector) -> Result<Codebook> {
    if !(sector.az_hi >= sector.az_lo) || !(sector.el_hi >= sector.el_lo) {
        return Err(Error::invalid("empty beam sector"));
    }
    let hpbw_az = hpbw(dut.cols(), dut.spacing());
    let hpbw_el = hpbw(dut.rows(), dut.spacing());
    let az = beam_axis(sector.az_lo, sector.az_hi, hpbw_az);
    let el = beam_axis(sector.el_lo.max(-90.0), sector.el_hi.min(90.0), hpbw_el);
    let mut beams = Vec::with_capacity(az.len() * el.len());
    for &e in &el {
        for &a in &az {
            let direction = Direction::new(a, e)?;
            beams.push(Beam {
                index: beams.len(),
                steering: dut.steering_vector(&direction),
                direction,
            });
        }
    }
    Ok(Codebook {
        beams,
        hpbw_az,
        hpbw_el,
    })
}

/// Draws per-beam received powers for one channel realization.
pub trait BeamSampler: Sync {
    fn beam_count(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng, powers: &mut [f64]);
}

/// How each source's complex amplitude is drawn per realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFading {
    /// Fixed magnitude with a uniform random phase (ray model).
    RandomPhase,
    /// Circular complex Gaussian (Rayleigh envelope).
    Rayleigh,
}

/// Linear superposition of sources, precomputed as beam responses so a
/// realization costs one `B × S` product.
#[derive(Debug, Clone)]
pub struct ProjectedSources {
    response: DMatrix<Complex64>,
    fading: SourceFading,
}

impl ProjectedSources {
    /// `fields[s]` is the DUT field of source `s` at unit amplitude.
    pub fn new(
        fields: &[DVector<Complex64>],
        codebook: &Codebook,
        fading: SourceFading,
    ) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::invalid("no sources"));
        }
        let n = codebook.beams.first().map_or(0, |b| b.steering.len());
        if fields.iter().any(|f| f.len() != n) {
            return Err(Error::invalid(
                "source field length does not match the codebook",
            ));
        }
        let response = DMatrix::from_fn(codebook.len(), fields.len(), |b, s| {
            codebook.beams[b].steering.dotc(&fields[s])
        });
        Ok(ProjectedSources { response, fading })
    }

    /// Every ray of every cluster as a random-phase plane wave.
    pub fn rays(scene: &ChannelScene, dut: &PlanarArray, codebook: &Codebook) -> Result<Self> {
        let mut fields = Vec::new();
        for (ci, cluster) in scene.clusters.iter().enumerate() {
            let amp = scene.cluster_amplitude(ci);
            for ray in &cluster.rays {
                fields.push(dut.steering_vector(&ray.dir_rx) * (ray.pol.aa * amp));
            }
        }
        Self::new(&fields, codebook, SourceFading::RandomPhase)
    }

    /// Weighted probes with i.i.d. Rayleigh fading.
    pub fn probes(
        solution: &WeightSolution,
        panel: &ProbePanel,
        dut: &PlanarArray,
        codebook: &Codebook,
    ) -> Result<Self> {
        let fields: Vec<DVector<Complex64>> = probe_fields(dut, panel, &solution.probes)?
            .into_iter()
            .zip(&solution.powers)
            .map(|(v, p)| v * Complex64::new(p.sqrt(), 0.0))
            .collect();
        Self::new(&fields, codebook, SourceFading::Rayleigh)
    }
}

impl BeamSampler for ProjectedSources {
    fn beam_count(&self) -> usize {
        self.response.nrows()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, powers: &mut [f64]) {
        let x = DVector::from_fn(self.response.ncols(), |_, _| match self.fading {
            SourceFading::RandomPhase => Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI),
            SourceFading::Rayleigh => complex_gaussian(rng),
        });
        let y = &self.response * x;
        for (p, v) in powers.iter_mut().zip(y.iter()) {
            *p = v.norm_sqr();
        }
    }
}

/// Adapts any field generator to a codebook.
pub struct FieldSampler<'a, F> {
    pub codebook: &'a Codebook,
    pub field: F,
}

impl<F> BeamSampler for FieldSampler<'_, F>
where
    F: Fn(&mut ChaCha8Rng) -> DVector<Complex64> + Sync,
{
    fn beam_count(&self) -> usize {
        self.codebook.len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, powers: &mut [f64]) {
        let y = (self.field)(rng);
        for (p, b) in powers.iter_mut().zip(&self.codebook.beams) {
            *p = b.steering.dotc(&y).norm_sqr();
        }
    }
}

/// Probability of each beam being the strongest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamAllocation {
    pub probabilities: Vec<f64>,
    pub realizations: usize,
    /// Mean power of the strongest beam over all realizations.
    pub mean_directed_power: f64,
}

const CHUNK: usize = 512;

/// Monte Carlo beam allocation; realization `i` draws from its own stream
/// of the seeded generator, so results do not depend on thread count.
pub fn beam_allocation<S: BeamSampler + ?Sized>(
    sampler: &S,
    n_real: usize,
    seed: u64,
) -> Result<BeamAllocation> {
    if n_real == 0 {
        return Err(Error::invalid("need at least one realization"));
    }
    let nb = sampler.beam_count();
    if nb == 0 {
        return Err(Error::invalid("empty codebook"));
    }
    let chunks: Vec<(Vec<u64>, f64)> = (0..n_real.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; nb];
            let mut directed = 0.0;
            let mut powers = vec![0.0; nb];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_real) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                sampler.sample(&mut rng, &mut powers);
                let mut best = 0;
                for (b, p) in powers.iter().enumerate() {
                    if *p > powers[best] {
                        best = b;
                    }
                }
                counts[best] += 1;
                directed += powers[best];
            }
            (counts, directed)
        })
        .collect();
    let mut counts = vec![0u64; nb];
    let mut directed = 0.0;
    for (c, d) in chunks {
        for (t, x) in counts.iter_mut().zip(c) {
            *t += x;
        }
        directed += d;
    }
    Ok(BeamAllocation {
        probabilities: counts.iter().map(|&c| c as f64 / n_real as f64).collect(),
        realizations: n_real,
        mean_directed_power: directed / n_real as f64,
    })
}

pub fn beam_allocation_distance(p_t: &BeamAllocation, p_o: &BeamAllocation) -> Result<f64> {
    if p_t.probabilities.len() != p_o.probabilities.len() {
        return Err(Error::invalid("beam allocations use different codebooks"));
    }
    let d: f64 = p_t
        .probabilities
        .iter()
        .zip(&p_o.probabilities)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// Distance in degrees between the expected beam directions, combining
/// azimuth and elevation as a Euclidean norm.
pub fn beam_peak_distance(
    p_t: &BeamAllocation,
    p_o: &BeamAllocation,
    codebook: &Codebook,
) -> Result<f64> {
    if p_t.probabilities.len() != codebook.len() || p_o.probabilities.len() != codebook.len() {
        return Err(Error::invalid(
            "beam allocation does not match the codebook",
        ));
    }
    let mean = |p: &BeamAllocation| {
        codebook
            .beams
            .iter()
            .zip(&p.probabilities)
            .fold((0.0, 0.0), |(a, e), (b, w)| {
                (
                    a + w * b.direction.azimuth(),
                    e + w * b.direction.elevation(),
                )
            })
    };
    let (ta, te) = mean(p_t);
    let (oa, oe) = mean(p_o);
    Ok((ta - oa).hypot(te - oe))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub e_rho: f64,
    pub d_p: f64,
    pub d_ba: f64,
    pub d_bp: f64,
    pub soft_sum: f64,
}

impl FidelityReport {
    pub fn new(e_rho: f64, d_p: f64, d_ba: f64, d_bp: f64) -> Self {
        FidelityReport {
            e_rho,
            d_p,
            d_ba,
            d_bp,
            soft_sum: e_rho + d_p + d_ba,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidelityOptions {
    pub realizations: usize,
    pub seed: u64,
    /// Bartlett scan and beam sweeping region; the probe panel's own
    /// extent when unset.
    pub scan_sector: Option<Sector>,
    pub scan_step: f64,
}

impl FidelityOptions {
    pub fn sector_for(&self, panel: &ProbePanel) -> Sector {
        self.scan_sector.unwrap_or_else(|| Sector::of_panel(panel))
    }
}

impl Default for FidelityOptions {
    fn default() -> Self {
        FidelityOptions {
            realizations: 10_000,
            seed: 0xbea5,
            scan_sector: None,
            scan_step: 1.0,
        }
    }
}

/// What the metrics need from the target side; independent of the probe
/// weights, so it can be reused across probe counts.
#[derive(Debug, Clone)]
pub struct TargetReference {
    pub spectrum: Spectrum,
    pub allocation: BeamAllocation,
}

impl TargetReference {
    pub fn new(
        cluster: &ClusterState,
        target: &ClusterTarget,
        dut: &PlanarArray,
        codebook: &Codebook,
        grid: &AngularGrid,
        opts: &FidelityOptions,
    ) -> Result<Self> {
        let spectrum = target_spectrum(&target.lattice, dut, grid);
        let scene = ChannelScene::new(vec![cluster_with_rays(cluster)?], 0, "target")?;
        let sampler = ProjectedSources::rays(&scene, dut, codebook)?;
        let allocation = beam_allocation(&sampler, opts.realizations, opts.seed)?;
        Ok(TargetReference {
            spectrum,
            allocation,
        })
    }
}

fn cluster_with_rays(cluster: &ClusterState) -> Result<ClusterState> {
    if cluster.rays.is_empty() {
        ClusterState::with_rays(
            cluster.centroid,
            cluster.sigma_az,
            cluster.sigma_el,
            cluster.power_db,
            crate::channel::DEFAULT_RAYS_PER_CLUSTER,
            0,
        )
    } else {
        Ok(cluster.clone())
    }
}

/// All four metrics for one probe configuration.
pub fn evaluate_fidelity(
    target: &ClusterTarget,
    reference: &TargetReference,
    solution: &WeightSolution,
    panel: &ProbePanel,
    dut: &PlanarArray,
    codebook: &Codebook,
    opts: &FidelityOptions,
) -> Result<FidelityReport> {
    let rho = reproduced_correlation(panel, &solution.probes, &solution.powers, dut)?;
    let e_rho = spatial_correlation_error(&target.correlation, &rho)?;
    let fields = probe_fields(dut, panel, &solution.probes)?;
    let spectrum = probe_spectrum(&fields, &solution.powers, dut, &reference.spectrum.grid);
    let d_p = pas_distance(&reference.spectrum, &spectrum)?;
    let sampler = ProjectedSources::probes(solution, panel, dut, codebook)?;
    let allocation = beam_allocation(&sampler, opts.realizations, opts.seed ^ 0x0e)?;
    let d_ba = beam_allocation_distance(&reference.allocation, &allocation)?;
    let d_bp = beam_peak_distance(&reference.allocation, &allocation, codebook)?;
    Ok(FidelityReport::new(e_rho, d_p, d_ba, d_bp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::CorrelationKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dir(a: f64, e: f64) -> Direction {
        Direction::new(a, e).unwrap()
    }

    fn corr(m: DMatrix<Complex64>) -> CorrelationMatrix {
        CorrelationMatrix {
            entries: m,
            kind: CorrelationKind::Target,
        }
    }

    fn alloc(p: Vec<f64>) -> BeamAllocation {
        BeamAllocation {
            probabilities: p,
            realizations: 1,
            mean_directed_power: 0.0,
        }
    }

    #[test]
    fn correlation_error_hand_values() {
        let ones = corr(DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0)));
        let diag = corr(DMatrix::identity(2, 2));
        assert_eq!(spatial_correlation_error(&ones, &ones).unwrap(), 0.0);
        assert_relative_eq!(
            spatial_correlation_error(&ones, &diag).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            spatial_correlation_error(&ones, &diag).unwrap(),
            spatial_correlation_error(&diag, &ones).unwrap()
        );
        assert!(spatial_correlation_error(&ones, &corr(DMatrix::identity(3, 3))).is_err());
    }

    #[test]
    fn matched_filter_peaks_at_source() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let d = dir(10.0, -5.0);
        let a = dut.steering_vector(&d);
        let cov = &a * a.adjoint();
        let grid = AngularGrid::new(-30.0, 30.0, -20.0, 20.0, 1.0).unwrap();
        let s = bartlett_spectrum(&cov, &dut, &grid).unwrap();
        assert_eq!(s.peak(), (10.0, -5.0));
        assert_relative_eq!(
            s.values.iter().cloned().fold(0.0, f64::max),
            256.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn white_field_is_flat() {
        let dut = PlanarArray::square(3, 28e9).unwrap();
        let grid = AngularGrid::new(-60.0, 60.0, -30.0, 30.0, 5.0).unwrap();
        let s = bartlett_spectrum(&DMatrix::identity(9, 9), &dut, &grid).unwrap();
        assert!(s.values.iter().all(|v| (v - 9.0).abs() < 1e-9));
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let dut = PlanarArray::new(1, 2, 0.5, 28e9).unwrap();
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        let grid = AngularGrid::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(bartlett_spectrum(&m, &dut, &grid).is_err());
    }

    #[test]
    fn plane_wave_width_matches_codebook_hpbw() {
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let a = dut.steering_vector(&Direction::BORESIGHT);
        let grid = AngularGrid::new(-20.0, 20.0, 0.0, 0.0, 0.01).unwrap();
        let s = bartlett_spectrum(&(&a * a.adjoint()), &dut, &grid).unwrap();
        let peak = s.values.iter().cloned().fold(0.0, f64::max);
        let width = s.values.iter().filter(|v| **v >= peak / 2.0).count() as f64 * 0.01;
        assert!((width - hpbw(8, 0.5)).abs() < 0.05, "{width}");
    }

    #[test]
    fn fast_spectra_match_the_checked_path() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let c = ClusterState::new(dir(6.0, 3.0), 5.0, 3.0, 0.0, vec![]).unwrap();
        let t = ClusterTarget::new(&c, &dut, 0.5).unwrap();
        let grid = AngularGrid::new(-30.0, 30.0, -15.0, 15.0, 3.0).unwrap();
        let fast = target_spectrum(&t.lattice, &dut, &grid);
        let slow = bartlett_spectrum(&t.correlation.entries, &dut, &grid).unwrap();
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-9);
        }
        let panel = ProbePanel::new(2.0, 6.0, 24.0, 12.0).unwrap();
        let fields = probe_fields(&dut, &panel, &[2, 7]).unwrap();
        let fast = probe_spectrum(&fields, &[0.3, 0.7], &dut, &grid);
        let cov = crate::optimizer::reproduced_covariance(&fields, &[0.3, 0.7]);
        let slow = bartlett_spectrum(&cov, &dut, &grid).unwrap();
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn tv_hand_values() {
        assert_eq!(tv_distance(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_relative_eq!(tv_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(tv_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn hpbw_values() {
        assert!((hpbw(8, 0.5) - 12.8).abs() < 0.1);
        assert!(hpbw(1, 0.5).is_infinite());
        let ratio = hpbw(8, 0.5) / hpbw(16, 0.5);
        assert!((ratio - 2.0).abs() < 0.2);
    }

    #[test]
    fn codebook_layout() {
        let one = PlanarArray::square(1, 28e9).unwrap();
        assert_eq!(build_codebook(&one, &Sector::default()).unwrap().len(), 1);
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let cb = build_codebook(&dut, &Sector::default()).unwrap();
        let h = cb.hpbw();
        // spacing between neighbours is one HPBW, beams stay inside the sector
        assert_relative_eq!(
            cb.beams[1].direction.azimuth() - cb.beams[0].direction.azimuth(),
            h,
            epsilon = 1e-9
        );
        assert!(cb
            .beams
            .iter()
            .all(|b| b.direction.azimuth().abs() <= 60.0 && b.direction.elevation().abs() <= 30.0));
        assert!(cb.beams.iter().any(|b| b.direction == Direction::BORESIGHT));
        let narrow = build_codebook(&dut, &Sector::centred(4.0, 4.0)).unwrap();
        assert_eq!(narrow.len(), 1);
    }

    #[test]
    fn plane_wave_at_beam_centre_is_one_hot() {
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let cb = build_codebook(&dut, &Sector::default()).unwrap();
        let d = cb.beams[3].direction;
        let field = dut.steering_vector(&d);
        let sampler = FieldSampler {
            codebook: &cb,
            field: |_: &mut ChaCha8Rng| field.clone(),
        };
        let p = beam_allocation(&sampler, 100, 1).unwrap();
        assert_eq!(p.probabilities[3], 1.0);
    }

    #[test]
    fn two_equal_clusters_split_evenly() {
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let cb = build_codebook(&dut, &Sector::default()).unwrap();
        let fields = vec![cb.beams[10].steering.clone(), cb.beams[14].steering.clone()];
        let sampler = ProjectedSources::new(&fields, &cb, SourceFading::Rayleigh).unwrap();
        let n = 10_000;
        let p = beam_allocation(&sampler, n, 5).unwrap();
        let sd = (0.25 / n as f64).sqrt();
        assert!(
            (p.probabilities[10] - 0.5).abs() < 3.0 * sd,
            "{}",
            p.probabilities[10]
        );
        assert_relative_eq!(
            p.probabilities[10] + p.probabilities[14],
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(p, beam_allocation(&sampler, n, 5).unwrap());
    }

    #[test]
    fn allocation_ignores_global_scale() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let cb = build_codebook(&dut, &Sector::default()).unwrap();
        let c = ClusterState::with_rays(dir(10.0, 0.0), 5.0, 3.0, 0.0, 20, 1).unwrap();
        let scene = ChannelScene::new(vec![c], 0, "s").unwrap();
        let a =
            beam_allocation(&ProjectedSources::rays(&scene, &dut, &cb).unwrap(), 2000, 3).unwrap();
        let b = beam_allocation(
            &ProjectedSources::rays(&scene.scaled_db(20.0), &dut, &cb).unwrap(),
            2000,
            3,
        )
        .unwrap();
        assert_eq!(a.probabilities, b.probabilities);
        assert_relative_eq!(
            b.mean_directed_power / a.mean_directed_power,
            100.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn allocation_converges_with_realizations() {
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let cb = build_codebook(&dut, &Sector::default()).unwrap();
        let c = ClusterState::with_rays(dir(4.0, 4.0), 5.0, 3.0, 0.0, 20, 1).unwrap();
        let scene = ChannelScene::new(vec![c], 0, "s").unwrap();
        let s = ProjectedSources::rays(&scene, &dut, &cb).unwrap();
        let a = beam_allocation(&s, 5_000, 1).unwrap();
        let b = beam_allocation(&s, 10_000, 2).unwrap();
        assert!(beam_allocation_distance(&a, &b).unwrap() < 0.03);
    }

    #[test]
    fn beam_distances_hand_values() {
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let cb = build_codebook(&dut, &Sector::centred(2.0 * hpbw(8, 0.5), 0.0)).unwrap();
        assert_eq!(cb.len(), 3);
        let h = cb.hpbw();
        let a = alloc(vec![1.0, 0.0, 0.0]);
        let b = alloc(vec![0.0, 1.0, 0.0]);
        assert_eq!(beam_allocation_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(beam_peak_distance(&a, &a, &cb).unwrap(), 0.0);
        assert_eq!(beam_allocation_distance(&a, &b).unwrap(), 1.0);
        assert_relative_eq!(beam_peak_distance(&a, &b, &cb).unwrap(), h, epsilon = 1e-9);
        let half = alloc(vec![0.5, 0.5, 0.0]);
        assert_relative_eq!(beam_allocation_distance(&half, &b).unwrap(), 0.5);
        assert_relative_eq!(
            beam_peak_distance(&half, &b, &cb).unwrap(),
            h / 2.0,
            epsilon = 1e-9
        );
        assert!(beam_peak_distance(&a, &alloc(vec![1.0]), &cb).is_err());
    }

    #[test]
    fn identical_correlations_give_identical_spectra() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let c = ClusterState::new(dir(0.0, 0.0), 5.0, 3.0, 0.0, vec![]).unwrap();
        let t = ClusterTarget::new(&c, &dut, 0.5).unwrap();
        assert_eq!(
            spatial_correlation_error(&t.correlation, &t.correlation).unwrap(),
            0.0
        );
        let grid = Sector::default().scan_grid(2.0).unwrap();
        let s = target_spectrum(&t.lattice, &dut, &grid);
        assert_eq!(pas_distance(&s, &s).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tv_is_a_metric(
            p in proptest::collection::vec(0.01f64..1.0, 6),
            q in proptest::collection::vec(0.01f64..1.0, 6),
            r in proptest::collection::vec(0.01f64..1.0, 6),
        ) {
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-12);
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
        }
    }
}

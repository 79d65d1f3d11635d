//! Geometry-based stochastic channel: clusters of rays, Laplacian power
//! angular spectra, the plane-wave MIMO transfer matrix and pruning to the
//! dominant clusters.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wavenumber, wrap_degrees, Direction, PlanarArray, WaveVector};

/// Default number of rays per cluster.
pub const DEFAULT_RAYS_PER_CLUSTER: usize = 20;

/// 2×2 polarimetric amplitude matrix `[[aa, ab], [ba, bb]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolMatrix {
    pub aa: Complex64,
    pub ab: Complex64,
    pub ba: Complex64,
    pub bb: Complex64,
}

impl PolMatrix {
    pub fn identity() -> Self {
        PolMatrix::from_matrix(&Matrix2::identity())
    }

    /// Single co-polar amplitude, no cross-polar leakage.
    pub fn co_polar(amplitude: Complex64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        PolMatrix {
            aa: amplitude,
            ab: z,
            ba: z,
            bb: z,
        }
    }

    pub fn from_matrix(m: &Matrix2<Complex64>) -> Self {
        PolMatrix {
            aa: m[(0, 0)],
            ab: m[(0, 1)],
            ba: m[(1, 0)],
            bb: m[(1, 1)],
        }
    }

    pub fn to_matrix(&self) -> Matrix2<Complex64> {
        Matrix2::new(self.aa, self.ab, self.ba, self.bb)
    }

    pub fn is_finite(&self) -> bool {
        [self.aa, self.ab, self.ba, self.bb]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `|α^{ab}|² / |α^{aa}|²`, undefined when the co-polar term vanishes.
    pub fn cross_polar_ratio(&self) -> Option<f64> {
        let co = self.aa.norm_sqr();
        (co > 0.0).then(|| self.ab.norm_sqr() / co)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        PolMatrix {
            aa: self.aa * s,
            ab: self.ab * s,
            ba: self.ba * s,
            bb: self.bb * s,
        }
    }

    /// Numerical rank with a relative singular-value tolerance.
    pub fn rank(&self) -> usize {
        let sv = self.to_matrix().singular_values();
        let top = sv.max();
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > 1e-12 * top).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    /// Propagation delay in seconds.
    pub delay: f64,
    /// Doppler shift in Hz.
    pub doppler: f64,
    pub dir_tx: Direction,
    pub dir_rx: Direction,
    pub pol: PolMatrix,
}

impl Ray {
    pub fn new(
        delay: f64,
        doppler: f64,
        dir_tx: Direction,
        dir_rx: Direction,
        pol: PolMatrix,
    ) -> Result<Self> {
        if !(delay >= 0.0) || !delay.is_finite() {
            return Err(Error::invalid(format!(
                "ray delay must be non-negative, got {delay}"
            )));
        }
        if !doppler.is_finite() || !pol.is_finite() {
            return Err(Error::invalid("ray doppler and amplitudes must be finite"));
        }
        Ok(Ray {
            delay,
            doppler,
            dir_tx,
            dir_rx,
            pol,
        })
    }

    /// Co-polar power `|α^{aa}|²`.
    pub fn power(&self) -> f64 {
        self.pol.aa.norm_sqr()
    }
}

/// One cluster at one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub centroid: Direction,
    /// Azimuth spread in degrees.
    pub sigma_az: f64,
    /// Elevation spread in degrees.
    pub sigma_el: f64,
    /// Power in dB relative to the strongest cluster of its scene.
    pub power_db: f64,
    pub rays: Vec<Ray>,
}

impl ClusterState {
    pub fn new(
        centroid: Direction,
        sigma_az: f64,
        sigma_el: f64,
        power_db: f64,
        rays: Vec<Ray>,
    ) -> Result<Self> {
        if !(sigma_az > 0.0) || !(sigma_el > 0.0) {
            return Err(Error::invalid(format!(
                "cluster spreads must be positive, got ({sigma_az}°, {sigma_el}°)"
            )));
        }
        if !power_db.is_finite() {
            return Err(Error::invalid("cluster power must be finite"));
        }
        Ok(ClusterState {
            centroid,
            sigma_az,
            sigma_el,
            power_db,
            rays,
        })
    }

    /// Cluster populated with `n_rays` quantile-placed rays.
    pub fn with_rays(
        centroid: Direction,
        sigma_az: f64,
        sigma_el: f64,
        power_db: f64,
        n_rays: usize,
        seed: u64,
    ) -> Result<Self> {
        let rays = spawn_rays(centroid, sigma_az, sigma_el, n_rays, seed)?;
        Self::new(centroid, sigma_az, sigma_el, power_db, rays)
    }

    pub fn power_linear(&self) -> f64 {
        10f64.powf(self.power_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScene {
    pub clusters: Vec<ClusterState>,
    pub snapshot: usize,
    pub label: String,
    /// Absolute power of the strongest cluster, dB.
    pub reference_power_db: f64,
}

impl ChannelScene {
    /// Cluster powers are re-referenced so the strongest sits at 0 dB; the
    /// removed offset moves into `reference_power_db`.
    pub fn new(
        clusters: Vec<ClusterState>,
        snapshot: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut scene = ChannelScene {
            clusters,
            snapshot,
            label: label.into(),
            reference_power_db: 0.0,
        };
        if scene.clusters.is_empty() {
            return Err(Error::invalid("a scene needs at least one cluster"));
        }
        scene.renormalize();
        Ok(scene)
    }

    fn renormalize(&mut self) {
        let top = self
            .clusters
            .iter()
            .map(|c| c.power_db)
            .fold(f64::NEG_INFINITY, f64::max);
        for c in &mut self.clusters {
            c.power_db -= top;
        }
        self.reference_power_db += top;
    }

    /// Same scene with every cluster `db` stronger.
    pub fn scaled_db(&self, db: f64) -> ChannelScene {
        let mut s = self.clone();
        s.reference_power_db += db;
        s
    }

    /// Total linear power relative to the scene reference.
    pub fn total_power(&self) -> f64 {
        self.clusters.iter().map(ClusterState::power_linear).sum()
    }

    /// Linear amplitude applied to cluster `i`'s rays.
    pub fn cluster_amplitude(&self, i: usize) -> f64 {
        (self.clusters[i].power_linear() * 10f64.powf(self.reference_power_db / 10.0)).sqrt()
    }

    /// Every ray rotated by an independent uniform phase.
    pub fn with_random_phases<R: Rng>(&self, rng: &mut R) -> ChannelScene {
        let mut s = self.clone();
        for c in &mut s.clusters {
            for r in &mut c.rays {
                let phi = rng.gen::<f64>() * 2.0 * PI;
                r.pol = r.pol.scaled(Complex64::from_polar(1.0, phi));
            }
        }
        s
    }
}

/// Rectangular (azimuth, elevation) lattice in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub az: Vec<f64>,
    pub el: Vec<f64>,
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

impl AngularGrid {
    pub fn new(az_lo: f64, az_hi: f64, el_lo: f64, el_hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || az_hi < az_lo || el_hi < el_lo {
            return Err(Error::invalid(
                "angular grid needs a positive step and ordered bounds",
            ));
        }
        if el_lo < -90.0 || el_hi > 90.0 {
            return Err(Error::invalid(
                "angular grid elevation must stay within [-90°, 90°]",
            ));
        }
        Ok(AngularGrid {
            az: axis(az_lo, az_hi, step),
            el: axis(el_lo, el_hi, step),
        })
    }

    /// Grid spanning `±half_az`, `±half_el` around `centre`, elevation
    /// clipped to the sphere.
    pub fn around(centre: &Direction, half_az: f64, half_el: f64, step: f64) -> Result<Self> {
        let az0 = centre.azimuth();
        let el0 = centre.elevation();
        let (lo, hi) = ((el0 - half_el).max(-90.0), (el0 + half_el).min(90.0));
        // keep the centroid on a node
        let n_lo = ((el0 - lo) / step + 1e-9).floor();
        let n_hi = ((hi - el0) / step + 1e-9).floor();
        let n_az = (half_az / step + 1e-9).floor();
        if !(step > 0.0) {
            return Err(Error::invalid("grid step must be positive"));
        }
        Ok(AngularGrid {
            az: (-(n_az as i64)..=n_az as i64)
                .map(|i| az0 + i as f64 * step)
                .collect(),
            el: (-(n_lo as i64)..=n_hi as i64)
                .map(|i| el0 + i as f64 * step)
                .collect(),
        })
    }

    /// The default `±4σ` quadrature grid for a cluster.
    pub fn for_cluster(cluster: &ClusterState, step: f64) -> Result<Self> {
        Self::around(
            &cluster.centroid,
            4.0 * cluster.sigma_az,
            4.0 * cluster.sigma_el,
            step,
        )
    }

    pub fn len(&self) -> usize {
        self.az.len() * self.el.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major (elevation, azimuth) iteration.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.el
            .iter()
            .flat_map(move |&e| self.az.iter().map(move |&a| (a, e)))
    }

    fn covers(&self, dir: &Direction) -> bool {
        let (Some(a0), Some(a1)) = (self.az.first(), self.az.last()) else {
            return false;
        };
        let (Some(e0), Some(e1)) = (self.el.first(), self.el.last()) else {
            return false;
        };
        let mid = (a0 + a1) / 2.0;
        let half = (a1 - a0) / 2.0;
        wrap_degrees(dir.azimuth() - mid).abs() <= half + 1e-9
            && dir.elevation() >= e0 - 1e-9
            && dir.elevation() <= e1 + 1e-9
    }
}

/// A discretized power angular spectrum: directions with nonnegative
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Pas {
    /// (azimuth, elevation) in degrees.
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl Pas {
    pub fn new(points: Vec<(f64, f64)>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::invalid(
                "PAS needs matching, non-empty points and weights",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("PAS weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("PAS has zero total power"));
        }
        Ok(Pas {
            points,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// All power in a single direction.
    pub fn point(dir: &Direction) -> Self {
        Pas {
            points: vec![(dir.azimuth(), dir.elevation())],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weight of the grid point nearest to `dir`.
    pub fn density_near(&self, dir: &Direction) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (&(a, e), &w) in self.points.iter().zip(&self.weights) {
            let d = wrap_degrees(a - dir.azimuth()).hypot(e - dir.elevation());
            if d < best.0 {
                best = (d, w);
            }
        }
        best.1
    }
}

/// Separable Laplacian PAS of a cluster sampled on `grid`, normalized to
/// unit sum.
pub fn laplacian_pas(cluster: &ClusterState, grid: &AngularGrid) -> Result<Pas> {
    if grid.is_empty() {
        return Err(Error::invalid("empty PAS grid"));
    }
    if !grid.covers(&cluster.centroid) {
        return Err(Error::invalid(format!(
            "PAS grid does not cover the cluster centroid ({:.2}°, {:.2}°)",
            cluster.centroid.azimuth(),
            cluster.centroid.elevation()
        )));
    }
    let az0 = cluster.centroid.azimuth();
    let el0 = cluster.centroid.elevation();
    let fa: Vec<f64> = grid
        .az
        .iter()
        .map(|&a| (-SQRT_2 * wrap_degrees(a - az0).abs() / cluster.sigma_az).exp())
        .collect();
    let fe: Vec<f64> = grid
        .el
        .iter()
        .map(|&e| (-SQRT_2 * (e - el0).abs() / cluster.sigma_el).exp())
        .collect();
    let points: Vec<(f64, f64)> = grid.points().collect();
    let weights = fe
        .iter()
        .flat_map(|e| fa.iter().map(move |a| a * e))
        .collect();
    Pas::new(points, weights)
}

/// Quantile of a zero-mean Laplace distribution with standard deviation `sigma`.
fn laplace_quantile(p: f64, sigma: f64) -> f64 {
    let b = sigma / SQRT_2;
    if p < 0.5 {
        b * (2.0 * p).ln()
    } else {
        -b * (2.0 - 2.0 * p).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayLayout {
    /// Offsets at the Laplacian mid-cell quantiles `(i + ½)/n`.
    #[default]
    Quantile,
    /// Offsets at a uniformly jittered position inside each quantile cell.
    Jittered,
}

/// Equal-power rays around `centroid` with Laplacian-distributed offsets.
/// Azimuth and elevation offsets are paired by a seeded permutation.
pub fn spawn_rays(
    centroid: Direction,
    sigma_az: f64,
    sigma_el: f64,
    n_rays: usize,
    seed: u64,
) -> Result<Vec<Ray>> {
    spawn_rays_with(
        centroid,
        sigma_az,
        sigma_el,
        n_rays,
        seed,
        RayLayout::Quantile,
    )
}

pub fn spawn_rays_with(
    centroid: Direction,
    sigma_az: f64,
    sigma_el: f64,
    n_rays: usize,
    seed: u64,
    layout: RayLayout,
) -> Result<Vec<Ray>> {
    if n_rays == 0 {
        return Err(Error::invalid("a cluster needs at least one ray"));
    }
    if !(sigma_az > 0.0) || !(sigma_el > 0.0) {
        return Err(Error::invalid("ray spreads must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_rays as f64;
    let mut cell = |i: usize| match layout {
        RayLayout::Quantile => (i as f64 + 0.5) / n,
        RayLayout::Jittered => (i as f64 + rng.gen_range(0.05..0.95)) / n,
    };
    let az_off: Vec<f64> = (0..n_rays)
        .map(|i| laplace_quantile(cell(i), sigma_az))
        .collect();
    let mut el_off: Vec<f64> = (0..n_rays)
        .map(|i| laplace_quantile(cell(i), sigma_el))
        .collect();
    el_off.shuffle(&mut rng);
    let amp = Complex64::new((1.0 / n).sqrt(), 0.0);
    az_off
        .iter()
        .zip(&el_off)
        .map(|(da, de)| {
            let el = (centroid.elevation() + de).clamp(-90.0, 90.0);
            let dir = Direction::new(centroid.azimuth() + da, el)?;
            Ray::new(
                0.0,
                0.0,
                Direction::BORESIGHT,
                dir,
                PolMatrix::co_polar(amp),
            )
        })
        .collect()
}

/// Power-weighted circular mean and rms spread of ray arrival azimuths, degrees.
pub fn azimuth_statistics(rays: &[Ray]) -> (f64, f64) {
    let total: f64 = rays.iter().map(Ray::power).sum();
    let (s, c) = rays.iter().fold((0.0, 0.0), |(s, c), r| {
        let a = r.dir_rx.azimuth().to_radians();
        (s + r.power() * a.sin(), c + r.power() * a.cos())
    });
    let mean = s.atan2(c).to_degrees();
    let var = rays
        .iter()
        .map(|r| r.power() * wrap_degrees(r.dir_rx.azimuth() - mean).powi(2))
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}

/// Power-weighted mean and rms spread of ray arrival elevations, degrees.
pub fn elevation_statistics(rays: &[Ray]) -> (f64, f64) {
    let total: f64 = rays.iter().map(Ray::power).sum();
    let mean = rays
        .iter()
        .map(|r| r.power() * r.dir_rx.elevation())
        .sum::<f64>()
        / total;
    let var = rays
        .iter()
        .map(|r| r.power() * (r.dir_rx.elevation() - mean).powi(2))
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}

/// Polarimetric element patterns of an array towards a direction, `len × 2`.
pub type PatternFn<'a> = &'a dyn Fn(&Direction) -> DMatrix<Complex64>;

fn isotropic_pattern(array: &PlanarArray, freq: f64, dir: &Direction) -> DMatrix<Complex64> {
    let k = WaveVector::from_direction(dir, freq);
    let mut g = DMatrix::zeros(array.len(), 2);
    for (n, p) in array.positions().iter().enumerate() {
        g[(n, 0)] = Complex64::from_polar(1.0, k.phase_at(p));
    }
    g
}

/// Plane-wave MIMO transfer matrix `H(f, t)` (rx elements × tx elements)
/// with isotropic co-polar elements.
pub fn synthesize_h(
    scene: &ChannelScene,
    tx: &PlanarArray,
    rx: &PlanarArray,
    freq: f64,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    let gtx = |d: &Direction| isotropic_pattern(tx, freq, d);
    let grx = |d: &Direction| isotropic_pattern(rx, freq, d);
    synthesize_h_with_patterns(scene, tx.len(), rx.len(), &gtx, &grx, freq, t)
}

/// `H(f,t) = Σ_ℓ G_Rx(Ω_ℓ^Rx) A_ℓ G_Tx^T(Ω_ℓ^Tx) e^{j2πν_ℓ t} e^{−j2πfτ_ℓ}`
/// with caller-supplied pattern matrices, which must be `n × 2`.
pub fn synthesize_h_with_patterns(
    scene: &ChannelScene,
    n_tx: usize,
    n_rx: usize,
    tx_pattern: PatternFn,
    rx_pattern: PatternFn,
    freq: f64,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    let mut h = DMatrix::<Complex64>::zeros(n_rx, n_tx);
    for (ci, cluster) in scene.clusters.iter().enumerate() {
        let amp = scene.cluster_amplitude(ci);
        for ray in &cluster.rays {
            let grx = rx_pattern(&ray.dir_rx);
            let gtx = tx_pattern(&ray.dir_tx);
            if grx.shape() != (n_rx, 2) || gtx.shape() != (n_tx, 2) {
                return Err(Error::invalid(format!(
                    "pattern matrices must be {n_rx}x2 and {n_tx}x2, got {:?} and {:?}",
                    grx.shape(),
                    gtx.shape()
                )));
            }
            let a = ray.pol.to_matrix();
            let a = DMatrix::from_fn(2, 2, |i, j| a[(i, j)]);
            let phase = 2.0 * PI * (ray.doppler * t - freq * ray.delay);
            let rot = Complex64::from_polar(amp, phase);
            h += (grx * a * gtx.transpose()) * rot;
        }
    }
    Ok(h)
}

/// Field at the elements of `rx` for a single-port isotropic transmitter,
/// i.e. the single column of `synthesize_h` at `t = 0`, `f` = carrier.
pub fn received_field(scene: &ChannelScene, rx: &PlanarArray) -> DVector<Complex64> {
    let k = wavenumber(rx.carrier());
    let mut y = DVector::<Complex64>::zeros(rx.len());
    for (ci, cluster) in scene.clusters.iter().enumerate() {
        let amp = scene.cluster_amplitude(ci);
        for ray in &cluster.rays {
            let u = ray.dir_rx.unit() * k;
            let a = ray.pol.aa * amp;
            for (n, p) in rx.positions().iter().enumerate() {
                y[n] += a * Complex64::from_polar(1.0, u.dot(p));
            }
        }
    }
    y
}

/// Keeps the `n` strongest clusters, original order preserved, powers
/// re-referenced to the strongest retained cluster.
pub fn prune_to_dominant(scene: &ChannelScene, n: usize) -> Result<ChannelScene> {
    let l = scene.clusters.len();
    if n == 0 || n > l {
        return Err(Error::invalid(format!("cannot keep {n} of {l} clusters")));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| {
        scene.clusters[b]
            .power_db
            .total_cmp(&scene.clusters[a].power_db)
            .then(a.cmp(&b))
    });
    let mut keep = order[..n].to_vec();
    keep.sort_unstable();
    let mut pruned = ChannelScene {
        clusters: keep.iter().map(|&i| scene.clusters[i].clone()).collect(),
        snapshot: scene.snapshot,
        label: scene.label.clone(),
        reference_power_db: scene.reference_power_db,
    };
    pruned.renormalize();
    Ok(pruned)
}

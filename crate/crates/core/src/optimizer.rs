//! Target and reproduced spatial correlations, and probe weighting.
//!
//! Probe powers `p_k = w_k²` live on the unit simplex. The reproduced
//! correlation is scale invariant in `p`, so the simplex removes the only
//! gauge freedom. With the per-probe mean path gain folded into the probe
//! field the squared correlation error becomes a convex quadratic
//!
//! ```text
//! f(q) = ‖ρ‖² − 2 Σ_k q_k Re(u_kᴴ ρ u_k) + Σ_kl q_k q_l |u_kᴴ u_l|²
//! ```
//!
//! over normalized probe powers `q`, which is what the projected-gradient
//! iterations minimize. Reported objectives are always the exact squared
//! error against the normalized reproduced correlation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chamber::probe_field;
use crate::channel::{laplacian_pas, AngularGrid, ClusterState, Pas};
use crate::error::{Error, Result};
use crate::geometry::{wrap_degrees, Direction, PlanarArray, ProbePanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Target,
    Reproduced,
}

/// `N × N` complex spatial correlation between DUT elements.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub entries: DMatrix<Complex64>,
    pub kind: CorrelationKind,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let m = &self.entries;
        m.is_square() && (m - m.adjoint()).iter().all(|z| z.norm() <= tol)
    }

    /// `ρ_ab / √(ρ_aa ρ_bb)`.
    pub fn normalized(&self) -> CorrelationMatrix {
        let d: Vec<f64> = (0..self.dim())
            .map(|i| self.entries[(i, i)].re.max(0.0).sqrt())
            .collect();
        let entries = DMatrix::from_fn(self.dim(), self.dim(), |a, b| {
            let s = d[a] * d[b];
            if s > 0.0 {
                self.entries[(a, b)] / s
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        CorrelationMatrix {
            entries,
            kind: self.kind,
        }
    }
}

/// Correlation of a uniform planar array under a plane-wave PAS depends
/// only on the lattice offset between the two elements; this holds the
/// `(2R−1)(2C−1)` distinct values.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCorrelation {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
}

impl LatticeCorrelation {
    fn idx(&self, dr: isize, dc: isize) -> usize {
        let w = 2 * self.cols - 1;
        (dr + self.rows as isize - 1) as usize * w + (dc + self.cols as isize - 1) as usize
    }

    /// Correlation for a lattice offset (row, column).
    pub fn at(&self, dr: isize, dc: isize) -> Complex64 {
        self.values[self.idx(dr, dc)]
    }

    pub fn to_matrix(&self, dut: &PlanarArray) -> CorrelationMatrix {
        let n = dut.len();
        let entries = DMatrix::from_fn(n, n, |a, b| {
            let (ra, ca) = dut.lattice_index(a);
            let (rb, cb) = dut.lattice_index(b);
            self.at(ra as isize - rb as isize, ca as isize - cb as isize)
        });
        CorrelationMatrix {
            entries,
            kind: CorrelationKind::Target,
        }
    }

    /// Bartlett power `aᴴ R a` for the Toeplitz covariance, evaluated over
    /// lattice offsets instead of element pairs.
    pub fn bartlett(&self, dut: &PlanarArray, dir: &Direction) -> f64 {
        let phase = dut.wavenumber() * dut.pitch();
        let u = dir.unit();
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        let ey = Complex64::from_polar(1.0, -phase * u.y);
        let ez = Complex64::from_polar(1.0, -phase * u.z);
        let ey0 = ey.powi(-(cols as i32 - 1));
        let mut zr = ez.powi(-(rows as i32 - 1));
        let mut acc = Complex64::new(0.0, 0.0);
        for dr in -(rows - 1)..rows {
            let row_count = (rows - dr.abs()) as f64;
            let mut yc = ey0;
            let mut row_acc = Complex64::new(0.0, 0.0);
            for dc in -(cols - 1)..cols {
                let count = (cols - dc.abs()) as f64;
                row_acc += self.at(dr, dc) * yc * count;
                yc *= ey;
            }
            acc += row_acc * zr * row_count;
            zr *= ez;
        }
        acc.re.max(0.0)
    }
}

/// `r(Δ) = Σ_i P_i exp{j k·Δ}` over all lattice offsets `Δ`.
pub fn lattice_correlation(pas: &Pas, dut: &PlanarArray) -> Result<LatticeCorrelation> {
    if pas.is_empty() {
        return Err(Error::invalid("empty PAS"));
    }
    let total: f64 = pas.weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("PAS has zero total power"));
    }
    let (rows, cols) = (dut.rows(), dut.cols());
    let w = 2 * cols - 1;
    let h = 2 * rows - 1;
    let phase = dut.wavenumber() * dut.pitch();
    let chunk = 256;
    let partial: Vec<Vec<Complex64>> = pas
        .points
        .par_chunks(chunk)
        .zip(pas.weights.par_chunks(chunk))
        .map(|(pts, wts)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); w * h];
            let mut ypow = vec![Complex64::new(0.0, 0.0); w];
            for (&(az, el), &wt) in pts.iter().zip(wts) {
                if wt == 0.0 {
                    continue;
                }
                let sa = az.to_radians().sin();
                let (se, ce) = el.to_radians().sin_cos();
                let (uy, uz) = (ce * sa, se);
                for (i, y) in ypow.iter_mut().enumerate() {
                    let dc = i as f64 - (cols as f64 - 1.0);
                    *y = Complex64::from_polar(wt, phase * uy * dc);
                }
                for r in 0..h {
                    let dr = r as f64 - (rows as f64 - 1.0);
                    let z = Complex64::from_polar(1.0, phase * uz * dr);
                    let row = &mut acc[r * w..(r + 1) * w];
                    for (a, y) in row.iter_mut().zip(&ypow) {
                        *a += y * z;
                    }
                }
            }
            acc
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); w * h];
    for p in partial {
        for (v, x) in values.iter_mut().zip(p) {
            *v += x;
        }
    }
    for v in &mut values {
        *v /= total;
    }
    Ok(LatticeCorrelation { rows, cols, values })
}

/// Spatial correlation of a DUT under a target PAS, by quadrature over the
/// PAS grid. Hermitian with unit diagonal.
pub fn target_correlation(pas: &Pas, dut: &PlanarArray) -> Result<CorrelationMatrix> {
    Ok(lattice_correlation(pas, dut)?.to_matrix(dut))
}

/// Fields of the listed probes on the DUT at its carrier.
pub fn probe_fields(
    dut: &PlanarArray,
    panel: &ProbePanel,
    indices: &[usize],
) -> Result<Vec<DVector<Complex64>>> {
    panel.check_indices(indices)?;
    indices
        .iter()
        .map(|&k| probe_field(dut, &panel.probes()[k], dut.carrier()))
        .collect()
}

/// Unnormalized reproduced covariance `Σ_k p_k v_k v_kᴴ`.
pub fn reproduced_covariance(fields: &[DVector<Complex64>], powers: &[f64]) -> DMatrix<Complex64> {
    let n = fields.first().map_or(0, |v| v.len());
    let mut r = DMatrix::zeros(n, n);
    for (v, &p) in fields.iter().zip(powers) {
        if p > 0.0 {
            r.ger(
                Complex64::new(p, 0.0),
                v,
                &v.conjugate(),
                Complex64::new(1.0, 0.0),
            );
        }
    }
    r
}

/// Reproduced correlation of `K` probes fed with i.i.d. fading at powers
/// `p_k`; the normalization carries the weights in both factors.
pub fn reproduced_correlation(
    panel: &ProbePanel,
    active: &[usize],
    powers: &[f64],
    dut: &PlanarArray,
) -> Result<CorrelationMatrix> {
    if active.len() != powers.len() {
        return Err(Error::invalid(format!(
            "{} powers for {} active probes",
            powers.len(),
            active.len()
        )));
    }
    if powers.iter().any(|p| *p < 0.0) || !(powers.iter().sum::<f64>() > 0.0) {
        return Err(Error::invalid(
            "probe powers must be nonnegative with a positive sum",
        ));
    }
    let fields = probe_fields(dut, panel, active)?;
    Ok(CorrelationMatrix {
        entries: reproduced_covariance(&fields, powers),
        kind: CorrelationKind::Reproduced,
    }
    .normalized())
}

/// `Σ_a Σ_b |ρ_ab − ρ̂_ab|²`.
pub fn squared_error(target: &CorrelationMatrix, reproduced: &CorrelationMatrix) -> f64 {
    target
        .entries
        .iter()
        .zip(reproduced.entries.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum()
}

/// Probe selection plus nonnegative power weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub probes: Vec<usize>,
    /// `p_k = w_k²` on the unit simplex.
    pub powers: Vec<f64>,
    /// Squared correlation error of the final weights.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl WeightSolution {
    pub fn weights(&self) -> Vec<f64> {
        self.powers.iter().map(|p| p.sqrt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop once the per-entry objective improves by less than this.
    pub tolerance: f64,
    pub seed: u64,
    /// Selection window half-width is `sigma_factor·max(σ) + spacing_factor·θs`.
    pub window_sigma_factor: f64,
    pub window_spacing_factor: f64,
    /// Quadrature step of the target PAS grid, degrees.
    pub pas_step: f64,
    /// Ridge on the first selection step, relative to the Gram diagonal.
    /// The window problem is usually rank deficient; the ridge picks the
    /// minimum-norm optimum so the ranking does not depend on the start.
    pub selection_ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            starts: 8,
            max_iterations: 2000,
            tolerance: 1e-10,
            seed: 0x5eed,
            window_sigma_factor: 4.0,
            window_spacing_factor: 2.0,
            pas_step: 0.25,
            selection_ridge: 1e-3,
        }
    }
}

/// Everything the solver needs about a cluster: its PAS and target
/// correlation on the DUT.
#[derive(Debug, Clone)]
pub struct ClusterTarget {
    pub centroid: Direction,
    pub sigma_az: f64,
    pub sigma_el: f64,
    pub pas: Pas,
    pub lattice: LatticeCorrelation,
    pub correlation: CorrelationMatrix,
}

impl ClusterTarget {
    pub fn new(cluster: &ClusterState, dut: &PlanarArray, pas_step: f64) -> Result<Self> {
        let grid = AngularGrid::for_cluster(cluster, pas_step)?;
        let pas = laplacian_pas(cluster, &grid)?;
        Self::from_pas(
            pas,
            cluster.centroid,
            cluster.sigma_az,
            cluster.sigma_el,
            dut,
        )
    }

    pub fn from_pas(
        pas: Pas,
        centroid: Direction,
        sigma_az: f64,
        sigma_el: f64,
        dut: &PlanarArray,
    ) -> Result<Self> {
        let lattice = lattice_correlation(&pas, dut)?;
        let correlation = lattice.to_matrix(dut);
        Ok(ClusterTarget {
            centroid,
            sigma_az,
            sigma_el,
            pas,
            lattice,
            correlation,
        })
    }
}

/// Quadratic model of the squared correlation error over a candidate set.
/// `G = ΦᵀΦ + ridge·I`, stored densely or, when the DUT has fewer
/// lifted dimensions than there are candidates, through `Φ`.
enum Gram {
    Dense(DMatrix<f64>),
    Factored { phi: DMatrix<f64>, ridge: f64 },
}

impl Gram {
    fn apply(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            Gram::Dense(g) => g * q,
            Gram::Factored { phi, ridge } => phi.tr_mul(&(phi * q)) + q * *ridge,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Gram::Dense(g) => g.nrows(),
            Gram::Factored { phi, .. } => phi.ncols(),
        }
    }
}

struct QuadraticModel {
    gram: Gram,
    linear: DVector<f64>,
    constant: f64,
    /// Mean squared path gain of each candidate's field.
    gain_sq: Vec<f64>,
    scale: f64,
}

impl QuadraticModel {
    fn new(target: &CorrelationMatrix, fields: &[DVector<Complex64>], ridge: f64) -> Self {
        let n = target.dim();
        let k = fields.len();
        let gain_sq: Vec<f64> = fields.iter().map(|v| v.norm_squared() / n as f64).collect();
        // unit-gain fields, split into real and imaginary parts for real GEMMs
        let re = DMatrix::from_fn(n, k, |a, i| fields[i][a].re / gain_sq[i].sqrt());
        let im = DMatrix::from_fn(n, k, |a, i| fields[i][a].im / gain_sq[i].sqrt());
        let ridge = ridge * (n * n) as f64;
        let gram = if n * n < k {
            // |u_kᴴu_l|² is the Frobenius product of the rank-one lifts
            // u_k u_kᴴ, written with n² real coordinates
            let s2 = std::f64::consts::SQRT_2;
            let phi = DMatrix::from_fn(n * n, k, |r, i| {
                let (a, b) = (r / n, r % n);
                let z = Complex64::new(re[(a, i)], im[(a, i)])
                    * Complex64::new(re[(b, i)], -im[(b, i)]);
                match a.cmp(&b) {
                    std::cmp::Ordering::Equal => z.re,
                    std::cmp::Ordering::Less => s2 * z.re,
                    std::cmp::Ordering::Greater => s2 * z.im,
                }
            });
            Gram::Factored { phi, ridge }
        } else {
            let g_re = re.transpose() * &re + im.transpose() * &im;
            let g_im = re.transpose() * &im - im.transpose() * &re;
            let mut gram = g_re.zip_map(&g_im, |a, b| a * a + b * b);
            for i in 0..k {
                gram[(i, i)] += ridge;
            }
            Gram::Dense(gram)
        };
        let linear = DVector::from_iterator(
            k,
            (0..k).map(|i| {
                let u = DVector::from_fn(n, |a, _| Complex64::new(re[(a, i)], im[(a, i)]));
                (u.adjoint() * &target.entries * &u)[(0, 0)].re
            }),
        );
        let constant = target.entries.iter().map(|z| z.norm_sqr()).sum();
        QuadraticModel {
            gram,
            linear,
            constant,
            gain_sq,
            scale: (n * n) as f64,
        }
    }

    fn value(&self, q: &DVector<f64>, gq: &DVector<f64>) -> f64 {
        self.constant - 2.0 * self.linear.dot(q) + q.dot(gq)
    }

    fn lipschitz(&self) -> f64 {
        // power iteration on the PSD Gram matrix
        let k = self.gram.dim();
        let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..30 {
            let w = self.gram.apply(&v);
            let nrm = w.norm();
            if nrm == 0.0 {
                break;
            }
            lambda = nrm;
            v = w / nrm;
        }
        2.0 * lambda.max(1e-12)
    }

    /// Accelerated projected gradient with a monotone safeguard and step
    /// halving. Returns (q, surrogate objective, iterations, converged).
    fn minimize(
        &self,
        start: DVector<f64>,
        opts: &SolverOptions,
        l0: f64,
    ) -> (DVector<f64>, f64, usize, bool) {
        let mut x = project_simplex(start.as_slice());
        let mut gx = self.gram.apply(&x);
        let mut fx = self.value(&x, &gx);
        let mut y = x.clone();
        let mut t_mom: f64 = 1.0;
        let mut step = 1.0 / l0;
        for it in 0..opts.max_iterations {
            let gy = self.gram.apply(&y);
            let fy = self.value(&y, &gy);
            let grad = (gy * 2.0) - &self.linear * 2.0;
            // step halving until the quadratic upper bound holds
            let (z, gz, fz) = loop {
                let z = project_simplex((&y - &grad * step).as_slice());
                let gz = self.gram.apply(&z);
                let fz = self.value(&z, &gz);
                let d = &z - &y;
                if fz <= fy + grad.dot(&d) + d.norm_squared() / (2.0 * step) + 1e-12 * fy.abs()
                    || step < 1e-30
                {
                    break (z, gz, fz);
                }
                step *= 0.5;
            };
            let t_next = (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt()) / 2.0;
            let prev = x.clone();
            let f_prev = fx;
            if fz <= fx {
                x = z.clone();
                gx = gz;
                fx = fz;
            }
            y = &x + (&z - &x) * (t_mom / t_next) + (&x - &prev) * ((t_mom - 1.0) / t_next);
            t_mom = t_next;
            let improvement = (f_prev - fx) / self.scale;
            let grad_x = (&gx * 2.0) - &self.linear * 2.0;
            // Frank-Wolfe gap bounds the distance to the optimum from above
            let gap = (grad_x.dot(&x) - grad_x.min()) / self.scale;
            if gap < opts.tolerance
                || (improvement < opts.tolerance && improvement >= 0.0 && it > 0 && fz <= f_prev)
            {
                return (x, fx, it + 1, true);
            }
        }
        (x, fx, opts.max_iterations, false)
    }
}

/// Euclidean projection onto the unit simplex.
pub fn project_simplex(v: &[f64]) -> DVector<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    DVector::from_iterator(v.len(), v.iter().map(|x| (x - theta).max(0.0)))
}

/// Minimizes the squared correlation error over nonnegative powers of the
/// `candidates`, from several starting points; returns the best.
pub fn solve_weights(
    target: &ClusterTarget,
    panel: &ProbePanel,
    candidates: &[usize],
    dut: &PlanarArray,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    solve_regularized(target, panel, candidates, dut, opts, 0.0)
}

/// First selection step: [`solve_weights`] with the selection ridge.
pub fn solve_window(
    target: &ClusterTarget,
    panel: &ProbePanel,
    window: &[usize],
    dut: &PlanarArray,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    solve_regularized(target, panel, window, dut, opts, opts.selection_ridge)
}

fn solve_regularized(
    target: &ClusterTarget,
    panel: &ProbePanel,
    candidates: &[usize],
    dut: &PlanarArray,
    opts: &SolverOptions,
    ridge: f64,
) -> Result<WeightSolution> {
    panel.check_indices(candidates)?;
    let fields = probe_fields(dut, panel, candidates)?;
    if candidates.len() == 1 {
        let powers = vec![1.0];
        let objective = exact_objective(&target.correlation, &fields, &powers);
        return Ok(WeightSolution {
            probes: candidates.to_vec(),
            powers,
            objective,
            iterations: 0,
            converged: true,
        });
    }
    let model = QuadraticModel::new(&target.correlation, &fields, ridge);
    let l0 = model.lipschitz();
    let starts = starting_points(target, panel, candidates, opts);
    let runs: Vec<(DVector<f64>, f64, usize, bool)> = starts
        .into_par_iter()
        .map(|s| model.minimize(s, opts, l0))
        .collect();
    // lowest surrogate objective, ties to the earliest start
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(i.cmp(j)))
        .map(|(i, _)| i)
        .expect("at least one start");
    let (q, _, _, _) = &runs[best];
    let iterations = runs.iter().map(|r| r.2).sum();
    let converged = runs[best].3;
    let raw: Vec<f64> = q.iter().zip(&model.gain_sq).map(|(qi, g)| qi / g).collect();
    let total: f64 = raw.iter().sum();
    let powers: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let objective = exact_objective(&target.correlation, &fields, &powers);
    Ok(WeightSolution {
        probes: candidates.to_vec(),
        powers,
        objective,
        iterations,
        converged,
    })
}

fn exact_objective(
    target: &CorrelationMatrix,
    fields: &[DVector<Complex64>],
    powers: &[f64],
) -> f64 {
    let rep = CorrelationMatrix {
        entries: reproduced_covariance(fields, powers),
        kind: CorrelationKind::Reproduced,
    }
    .normalized();
    squared_error(target, &rep)
}

/// Uniform, one-hot at the four candidates with the largest PAS density,
/// then seeded random points; `opts.starts` in total.
fn starting_points(
    target: &ClusterTarget,
    panel: &ProbePanel,
    candidates: &[usize],
    opts: &SolverOptions,
) -> Vec<DVector<f64>> {
    let k = candidates.len();
    let mut starts = vec![DVector::from_element(k, 1.0 / k as f64)];
    let mut by_pas: Vec<(usize, f64, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let d = &panel.probes()[c].direction;
            (
                i,
                target.pas.density_near(d),
                d.grid_distance(&target.centroid),
            )
        })
        .collect();
    by_pas.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.2.total_cmp(&b.2))
            .then(a.0.cmp(&b.0))
    });
    for &(i, _, _) in by_pas.iter().take(4) {
        let mut e = DVector::zeros(k);
        e[i] = 1.0;
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.starts.max(1) {
        let v: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = v.iter().sum();
        starts.push(DVector::from_iterator(k, v.into_iter().map(|x| x / s)));
    }
    starts.truncate(opts.starts.max(1));
    starts
}

/// Probes inside the selection window around the cluster centroid.
pub fn selection_window(
    target: &ClusterTarget,
    panel: &ProbePanel,
    opts: &SolverOptions,
) -> Vec<usize> {
    let half = opts.window_sigma_factor * target.sigma_az.max(target.sigma_el)
        + opts.window_spacing_factor * panel.spacing();
    panel
        .probes()
        .iter()
        .filter(|p| {
            wrap_degrees(p.direction.azimuth() - target.centroid.azimuth()).abs() <= half + 1e-9
                && (p.direction.elevation() - target.centroid.elevation()).abs() <= half + 1e-9
        })
        .map(|p| p.index)
        .collect()
}

/// Keeps the `k` largest powers of a solution. Near-equal powers (within
/// 1e-9) are ordered by distance to the centroid, then by probe index.
pub fn strongest_probes(
    solution: &WeightSolution,
    panel: &ProbePanel,
    centroid: &Direction,
    k: usize,
) -> Vec<usize> {
    let mut ranked: Vec<(i64, f64, usize)> = solution
        .probes
        .iter()
        .zip(&solution.powers)
        .map(|(&idx, &p)| {
            let dist = panel.probes()[idx].direction.grid_distance(centroid);
            ((p * 1e9).round() as i64, dist, idx)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    ranked.into_iter().take(k).map(|r| r.2).collect()
}

/// Two-step selection: weight the whole window, keep the `k` strongest
/// probes, weight those again.
pub fn select_probes(
    target: &ClusterTarget,
    panel: &ProbePanel,
    k: usize,
    dut: &PlanarArray,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    let window = selection_window(target, panel, opts);
    if window.is_empty() {
        return Err(Error::NoProbesInSector {
            azimuth: target.centroid.azimuth(),
            elevation: target.centroid.elevation(),
        });
    }
    let stage1 = solve_window(target, panel, &window, dut, opts)?;
    refine_selection(target, panel, &stage1, k, dut, opts)
}

/// Second step of [`select_probes`] given a first-step solution.
pub fn refine_selection(
    target: &ClusterTarget,
    panel: &ProbePanel,
    stage1: &WeightSolution,
    k: usize,
    dut: &PlanarArray,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    if k == 0 || k > stage1.probes.len() {
        return Err(Error::invalid(format!(
            "cannot select {k} probes from a window of {}",
            stage1.probes.len()
        )));
    }
    if k == stage1.probes.len() {
        return Ok(stage1.clone());
    }
    let mut chosen = strongest_probes(stage1, panel, &target.centroid, k);
    chosen.sort_unstable();
    solve_weights(target, panel, &chosen, dut, opts)
}

//! The SMPAC physical model: chamber matrix `C`, fading-emulator matrix
//! `E`, the reproduced channel `C·E` and polarization reconstruction from a
//! co-located probe pair.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{PolMatrix, Ray};
use crate::error::{Error, Result};
use crate::geometry::{wavelength, wavenumber, PlanarArray, PolarizationTag, Probe, ProbePanel};
use crate::optimizer::WeightSolution;

/// DUT element pattern: single (first) polarization, isotropic.
const DUT_PATTERN: PolarizationTag = PolarizationTag::A;

/// Free-space amplitude gain `λ/(4πd)`; its square is the path loss.
pub fn path_gain(freq: f64, distance: f64) -> f64 {
    wavelength(freq) / (4.0 * PI * distance)
}

/// Field a unit-power probe at `position` produces on the DUT elements:
/// `√PL(d_n) · exp{−j‖k‖d_n}` per element.
pub fn probe_field(dut: &PlanarArray, probe: &Probe, freq: f64) -> Result<DVector<Complex64>> {
    let k = wavenumber(freq);
    let g_rx = DUT_PATTERN.pattern();
    let g_k = probe.polarization.pattern();
    let pol = g_rx[0] * g_k[0] + g_rx[1] * g_k[1];
    let mut v = DVector::zeros(dut.len());
    for (n, p) in dut.positions().iter().enumerate() {
        let d = (probe.position - p).norm();
        if d < 1e-12 {
            return Err(Error::SingularGeometry(format!(
                "probe {} coincides with DUT element {n}",
                probe.index
            )));
        }
        v[n] = pol * Complex64::from_polar(path_gain(freq, d), -k * d);
    }
    Ok(v)
}

/// Chamber transfer matrix, DUT elements × active probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamberMatrix {
    pub entries: DMatrix<Complex64>,
    pub freq: f64,
    pub probes: Vec<usize>,
}

pub fn chamber_matrix(
    dut: &PlanarArray,
    panel: &ProbePanel,
    active: &[usize],
    freq: f64,
) -> Result<ChamberMatrix> {
    panel.check_indices(active)?;
    let mut entries = DMatrix::zeros(dut.len(), active.len());
    for (col, &k) in active.iter().enumerate() {
        entries.set_column(col, &probe_field(dut, &panel.probes()[k], freq)?);
    }
    Ok(ChamberMatrix {
        entries,
        freq,
        probes: active.to_vec(),
    })
}

/// Fading-emulator matrix, active probes × UE ports, together with the
/// per-row weights used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmulatorMatrix {
    pub entries: DMatrix<Complex64>,
    /// Amplitude weight `w_k` of each row.
    pub weights: Vec<f64>,
    pub probes: Vec<usize>,
}

/// `E_k = Σ_ℓ w_k G_FE,k A_ℓ G_Tx^T e^{j2πν_ℓ t} e^{−j2πfτ_ℓ}` with the
/// default first-polarization emulator pattern on every row and co-located
/// isotropic UE ports.
pub fn emulator_matrix(
    rays: &[Ray],
    weights: &WeightSolution,
    ue_ports: usize,
    freq: f64,
    t: f64,
) -> Result<EmulatorMatrix> {
    let fe = vec![PolarizationTag::A.pattern(); weights.probes.len()];
    emulator_matrix_with_patterns(rays, weights, &fe, ue_ports, freq, t)
}

pub fn emulator_matrix_with_patterns(
    rays: &[Ray],
    weights: &WeightSolution,
    fe_patterns: &[[Complex64; 2]],
    ue_ports: usize,
    freq: f64,
    t: f64,
) -> Result<EmulatorMatrix> {
    if rays.is_empty() {
        return Err(Error::invalid("emulator needs at least one ray"));
    }
    if ue_ports == 0 {
        return Err(Error::invalid("emulator needs at least one UE port"));
    }
    if fe_patterns.len() != weights.probes.len() || weights.powers.len() != weights.probes.len() {
        return Err(Error::invalid(format!(
            "{} emulator patterns / {} weights for {} active probes",
            fe_patterns.len(),
            weights.powers.len(),
            weights.probes.len()
        )));
    }
    let w: Vec<f64> = weights.powers.iter().map(|p| p.max(0.0).sqrt()).collect();
    // G_Tx^T of co-located isotropic ports: every column is [1, 0]^T
    let g_tx = Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let mut entries = DMatrix::zeros(weights.probes.len(), ue_ports);
    for (k, fe) in fe_patterns.iter().enumerate() {
        let g_fe = RowVector2::new(fe[0], fe[1]);
        let row: Complex64 = rays
            .iter()
            .map(|ray| {
                let phase =
                    Complex64::from_polar(1.0, 2.0 * PI * (ray.doppler * t - freq * ray.delay));
                (g_fe * ray.pol.to_matrix() * g_tx)[(0, 0)] * phase
            })
            .sum();
        entries.row_mut(k).fill(row * w[k]);
    }
    Ok(EmulatorMatrix {
        entries,
        weights: w,
        probes: weights.probes.clone(),
    })
}

/// One prefaded-signal-synthesis realization: row `k` is `w_k·x_k` with
/// `x_k ~ CN(0, 1)` i.i.d. across probes, common to all UE ports.
pub fn prefaded_emulator<R: Rng>(
    weights: &WeightSolution,
    ue_ports: usize,
    rng: &mut R,
) -> EmulatorMatrix {
    let w: Vec<f64> = weights.powers.iter().map(|p| p.max(0.0).sqrt()).collect();
    let mut entries = DMatrix::zeros(w.len(), ue_ports);
    for (k, wk) in w.iter().enumerate() {
        let x = complex_gaussian(rng) * *wk;
        for m in 0..ue_ports {
            entries[(k, m)] = x;
        }
    }
    EmulatorMatrix {
        entries,
        weights: w,
        probes: weights.probes.clone(),
    }
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `H_re = C·E`.
pub fn reproduced_h(c: &ChamberMatrix, e: &EmulatorMatrix) -> Result<DMatrix<Complex64>> {
    if c.entries.ncols() != e.entries.nrows() {
        return Err(Error::invalid(format!(
            "chamber has {} probe columns but the emulator has {} rows",
            c.entries.ncols(),
            e.entries.nrows()
        )));
    }
    Ok(&c.entries * &e.entries)
}

/// Polarization matrix passed by a single probe, `G_k^T G_FE,k A`; rank ≤ 1.
pub fn polarization_contribution(
    probe: &Probe,
    fe_pattern: [Complex64; 2],
    a: &PolMatrix,
) -> PolMatrix {
    let g = probe.polarization.pattern();
    let g_k = Vector2::new(g[0], g[1]);
    let g_fe = RowVector2::new(fe_pattern[0], fe_pattern[1]);
    let outer: Matrix2<Complex64> = g_k * g_fe;
    PolMatrix::from_matrix(&(outer * a.to_matrix()))
}

/// Sum of the contributions of two co-located, orthogonally polarized probes.
pub fn reconstruct_polarization(
    pair: (&Probe, &Probe),
    fe_patterns: ([Complex64; 2], [Complex64; 2]),
    a_target: &PolMatrix,
) -> Result<PolMatrix> {
    let (p1, p2) = pair;
    if p1.direction.grid_distance(&p2.direction) > 1e-9 || (p1.position - p2.position).norm() > 1e-9
    {
        return Err(Error::invalid(format!(
            "probes {} and {} are not co-located",
            p1.index, p2.index
        )));
    }
    if p1.polarization == p2.polarization {
        return Err(Error::invalid(
            "co-located probes must carry orthogonal polarizations",
        ));
    }
    let a1 = polarization_contribution(p1, fe_patterns.0, a_target).to_matrix();
    let a2 = polarization_contribution(p2, fe_patterns.1, a_target).to_matrix();
    Ok(PolMatrix::from_matrix(&(a1 + a2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::spawn_rays;
    use crate::geometry::{Direction, PolarizationTag};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn solution(probes: Vec<usize>, powers: Vec<f64>) -> WeightSolution {
        WeightSolution {
            probes,
            powers,
            objective: 0.0,
            iterations: 0,
            converged: true,
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_element_free_space_amplitude() {
        let dut = PlanarArray::square(1, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 8.0, 8.0, 8.0).unwrap();
        let cm = chamber_matrix(&dut, &panel, &[0], 28e9).unwrap();
        let expected = wavelength(28e9) / (4.0 * PI * 2.0);
        assert_relative_eq!(cm.entries[(0, 0)].norm(), expected, max_relative = 1e-9);
    }

    #[test]
    fn equidistant_probes_give_equal_magnitudes() {
        let dut = PlanarArray::square(1, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 8.0, 16.0, 16.0).unwrap();
        let cm = chamber_matrix(&dut, &panel, &[0, 4, 8], 28e9).unwrap();
        let m0 = cm.entries[(0, 0)].norm();
        for k in 1..3 {
            assert_relative_eq!(cm.entries[(0, k)].norm(), m0, max_relative = 1e-12);
        }
    }

    #[test]
    fn magnitudes_follow_free_space_loss() {
        let dut = PlanarArray::square(4, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 10.0, 40.0, 20.0).unwrap();
        let active: Vec<usize> = (0..panel.len()).collect();
        let cm = chamber_matrix(&dut, &panel, &active, 28e9).unwrap();
        for (col, &k) in active.iter().enumerate() {
            for n in 0..dut.len() {
                let d = (panel.probes()[k].position - dut.position(n)).norm();
                assert_relative_eq!(
                    cm.entries[(n, col)].norm(),
                    path_gain(28e9, d),
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn boresight_column_is_spherical() {
        let dut = PlanarArray::square(8, 28e9).unwrap();
        let panel = ProbePanel::new(2.0, 8.0, 16.0, 16.0).unwrap();
        let centre = panel.nearest_probe(&Direction::BORESIGHT).index;
        let cm = chamber_matrix(&dut, &panel, &[centre], 28e9).unwrap();
        let k = wavenumber(28e9);
        let mut max_plane_dev: f64 = 0.0;
        for n in 0..dut.len() {
            let d = (panel.probes()[centre].position - dut.position(n)).norm();
            let exact = Complex64::from_polar(1.0, -k * d);
            let got = cm.entries[(n, 0)] / cm.entries[(n, 0)].norm();
            assert!((got - exact).norm() < 1e-9);
            // plane wave from boresight would give the same phase everywhere
            let plane = Complex64::from_polar(1.0, -k * 2.0);
            max_plane_dev = max_plane_dev.max((got - plane).norm());
        }
        assert!(
            max_plane_dev > 1e-2,
            "curvature should be visible: {max_plane_dev}"
        );
    }

    #[test]
    fn coincident_probe_is_singular() {
        let dut = PlanarArray::square(1, 28e9).unwrap();
        let mut probe = ProbePanel::new(2.0, 8.0, 8.0, 8.0).unwrap().probes()[0].clone();
        probe.position = dut.position(0);
        assert!(matches!(
            probe_field(&dut, &probe, 28e9),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn emulator_examples() {
        let rays = spawn_rays(Direction::BORESIGHT, 5.0, 3.0, 1, 0).unwrap();
        let e = emulator_matrix(&rays, &solution(vec![0], vec![1.0]), 1, 28e9, 0.0).unwrap();
        assert!((e.entries[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);

        let rays = spawn_rays(Direction::BORESIGHT, 5.0, 3.0, 20, 0).unwrap();
        let z =
            emulator_matrix(&rays, &solution(vec![0, 1], vec![0.0, 0.0]), 2, 28e9, 0.0).unwrap();
        assert!(z.entries.iter().all(|v| v.norm() == 0.0));

        assert!(emulator_matrix_with_patterns(
            &rays,
            &solution(vec![0, 1], vec![0.5, 0.5]),
            &[PolarizationTag::A.pattern()],
            1,
            28e9,
            0.0
        )
        .is_err());
    }

    #[test]
    fn doppler_period() {
        let nu = 250.0;
        let ray = Ray::new(
            3e-9,
            nu,
            Direction::BORESIGHT,
            Direction::BORESIGHT,
            PolMatrix::co_polar(c(0.3, 0.4)),
        )
        .unwrap();
        let w = solution(vec![0], vec![0.7]);
        let e0 = emulator_matrix(std::slice::from_ref(&ray), &w, 1, 28e9, 0.0123).unwrap();
        let e1 = emulator_matrix(&[ray], &w, 1, 28e9, 0.0123 + 1.0 / nu).unwrap();
        assert!((e0.entries[(0, 0)] - e1.entries[(0, 0)]).norm() < 1e-9);
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, c, |_, _| complex_gaussian(rng))
    }

    #[test]
    fn reproduced_h_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cm = ChamberMatrix {
            entries: random_matrix(&mut rng, 5, 3),
            freq: 28e9,
            probes: vec![0, 1, 2],
        };
        let em = EmulatorMatrix {
            entries: random_matrix(&mut rng, 3, 4),
            weights: vec![1.0; 3],
            probes: vec![0, 1, 2],
        };
        let h = reproduced_h(&cm, &em).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let mut acc = c(0.0, 0.0);
                for k in 0..3 {
                    acc += cm.entries[(i, k)] * em.entries[(k, j)];
                }
                assert!((h[(i, j)] - acc).norm() < 1e-12);
            }
        }
        let bad = EmulatorMatrix {
            entries: random_matrix(&mut rng, 2, 4),
            weights: vec![1.0; 2],
            probes: vec![0, 1],
        };
        assert!(reproduced_h(&cm, &bad).is_err());
    }

    #[test]
    fn rank_one_and_selection_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cm = ChamberMatrix {
            entries: random_matrix(&mut rng, 4, 1),
            freq: 28e9,
            probes: vec![0],
        };
        let em = EmulatorMatrix {
            entries: random_matrix(&mut rng, 1, 3),
            weights: vec![1.0],
            probes: vec![0],
        };
        let h = reproduced_h(&cm, &em).unwrap();
        assert_eq!(h.rank(1e-10), 1);

        let cm3 = ChamberMatrix {
            entries: random_matrix(&mut rng, 4, 3),
            freq: 28e9,
            probes: vec![0, 1, 2],
        };
        let mut sel = DMatrix::zeros(3, 2);
        sel[(2, 0)] = c(1.0, 0.0);
        sel[(0, 1)] = c(1.0, 0.0);
        let em = EmulatorMatrix {
            entries: sel,
            weights: vec![1.0; 3],
            probes: vec![0, 1, 2],
        };
        let h = reproduced_h(&cm3, &em).unwrap();
        assert_eq!(h.column(0), cm3.entries.column(2));
        assert_eq!(h.column(1), cm3.entries.column(0));
    }

    #[test]
    fn bilinear_in_chamber_and_emulator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mk_c = |m| ChamberMatrix {
            entries: m,
            freq: 28e9,
            probes: vec![0, 1],
        };
        let mk_e = |m| EmulatorMatrix {
            entries: m,
            weights: vec![1.0; 2],
            probes: vec![0, 1],
        };
        let (c1, c2) = (random_matrix(&mut rng, 3, 2), random_matrix(&mut rng, 3, 2));
        let e = random_matrix(&mut rng, 2, 2);
        let s = c(0.3, -1.2);
        let lhs = reproduced_h(&mk_c(&c1 * s + &c2), &mk_e(e.clone())).unwrap();
        let rhs = reproduced_h(&mk_c(c1), &mk_e(e.clone())).unwrap() * s
            + reproduced_h(&mk_c(c2), &mk_e(e)).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    fn colocated_pair() -> (Probe, Probe) {
        let p = ProbePanel::new(2.0, 8.0, 8.0, 8.0).unwrap().probes()[0].clone();
        (
            p.with_polarization(PolarizationTag::A),
            p.with_polarization(PolarizationTag::B),
        )
    }

    #[test]
    fn canonical_pair_reconstructs_any_matrix() {
        let (p1, p2) = colocated_pair();
        let a = PolMatrix {
            aa: c(0.9, 0.1),
            ab: c(-0.2, 0.3),
            ba: c(0.05, -0.4),
            bb: c(0.7, 0.7),
        };
        let fe = (PolarizationTag::A.pattern(), PolarizationTag::B.pattern());
        let re = reconstruct_polarization((&p1, &p2), fe, &a).unwrap();
        assert!((re.to_matrix() - a.to_matrix()).norm() < 1e-15);
        let id = reconstruct_polarization((&p1, &p2), fe, &PolMatrix::identity()).unwrap();
        assert_eq!(id, PolMatrix::identity());
        // a lone probe passes a rank-1 matrix
        assert_eq!(polarization_contribution(&p1, fe.0, &a).rank(), 1);
    }

    #[test]
    fn pair_must_be_colocated_and_orthogonal() {
        let panel = ProbePanel::new(2.0, 8.0, 16.0, 8.0).unwrap();
        let p1 = panel.probes()[0].clone();
        let p2 = panel.probes()[1].with_polarization(PolarizationTag::B);
        let fe = (PolarizationTag::A.pattern(), PolarizationTag::B.pattern());
        assert!(reconstruct_polarization((&p1, &p2), fe, &PolMatrix::identity()).is_err());
        assert!(reconstruct_polarization((&p1, &p1), fe, &PolMatrix::identity()).is_err());
    }
}

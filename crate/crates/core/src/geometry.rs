//! Angles, wave vectors, DUT arrays and probe panels.
//!
//! One fixed frame is used everywhere: the DUT sits at the origin with its
//! aperture in the YZ-plane, the probe panel boresight points along +X,
//! azimuth is measured in the XY-plane and elevation towards +Z.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier wavelength in meters.
pub fn wavelength(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz
}

/// Free-space wavenumber `2π/λ` in rad/m.
pub fn wavenumber(freq_hz: f64) -> f64 {
    2.0 * PI / wavelength(freq_hz)
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can return 360 - ulp for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// A direction on the sphere, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    pub const BORESIGHT: Direction = Direction {
        azimuth: 0.0,
        elevation: 0.0,
    };

    /// Azimuth is wrapped into `[-180, 180)`; an elevation outside
    /// `[-90, 90]` is rejected.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::invalid("direction angles must be finite"));
        }
        if !(-90.0..=90.0).contains(&elevation) {
            return Err(Error::invalid(format!(
                "elevation {elevation}° outside [-90°, 90°]"
            )));
        }
        Ok(Direction {
            azimuth: wrap_degrees(azimuth),
            elevation,
        })
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Unit vector pointing from the origin towards this direction.
    pub fn unit(&self) -> Vector3<f64> {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }

    pub fn from_unit(v: &Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("zero-length direction vector"));
        }
        let u = v / n;
        let el = u.z.clamp(-1.0, 1.0).asin().to_degrees();
        let az = u.y.atan2(u.x).to_degrees();
        Direction::new(az, el)
    }

    /// Distance on the flat (azimuth, elevation) lattice, with azimuth
    /// wrap-around. This is the metric used for probe tie-breaking and
    /// substitution penalties.
    pub fn grid_distance(&self, other: &Direction) -> f64 {
        let daz = wrap_degrees(self.azimuth - other.azimuth);
        let del = self.elevation - other.elevation;
        daz.hypot(del)
    }

    /// Same direction with the azimuth shifted by `degrees`.
    pub fn rotated(&self, degrees: f64) -> Direction {
        Direction {
            azimuth: wrap_degrees(self.azimuth + degrees),
            elevation: self.elevation,
        }
    }
}

/// Wave vector in rad/m, pointing towards the direction it was built from.
///
/// Steering vectors, correlations and the chamber model all use
/// `exp{+j k·p}` for an element at `p`, so a wave arriving from `Ω` advances
/// the phase of elements displaced towards `Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
}

impl WaveVector {
    pub fn from_direction(dir: &Direction, freq_hz: f64) -> Self {
        let k = wavenumber(freq_hz) * dir.unit();
        WaveVector {
            kx: k.x,
            ky: k.y,
            kz: k.z,
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.kx, self.ky, self.kz)
    }

    pub fn direction(&self) -> Result<Direction> {
        Direction::from_unit(&self.as_vector())
    }

    /// Phase `k·p` accumulated at position `p`.
    pub fn phase_at(&self, p: &Vector3<f64>) -> f64 {
        self.kx * p.x + self.ky * p.y + self.kz * p.z
    }
}

/// Uniform planar array in the YZ-plane, centered on the origin.
///
/// Elements are ordered row-major: element `n` sits at row `n / cols`
/// (elevation axis, +Z) and column `n % cols` (azimuth axis, +Y).
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarArray {
    rows: usize,
    cols: usize,
    spacing: f64,
    carrier: f64,
    positions: Vec<Vector3<f64>>,
}

impl PlanarArray {
    /// `spacing` is in wavelengths at `carrier` (Hz).
    pub fn new(rows: usize, cols: usize, spacing: f64, carrier: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "array dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if !(spacing > 0.0) || !(carrier > 0.0) {
            return Err(Error::invalid(
                "element spacing and carrier frequency must be positive",
            ));
        }
        let pitch = spacing * wavelength(carrier);
        let r0 = (rows as f64 - 1.0) / 2.0;
        let c0 = (cols as f64 - 1.0) / 2.0;
        let positions = (0..rows)
            .flat_map(|r| {
                (0..cols).map(move |c| {
                    Vector3::new(0.0, (c as f64 - c0) * pitch, (r as f64 - r0) * pitch)
                })
            })
            .collect();
        Ok(PlanarArray {
            rows,
            cols,
            spacing,
            carrier,
            positions,
        })
    }

    /// Half-wavelength spaced square array.
    pub fn square(side: usize, carrier: f64) -> Result<Self> {
        Self::new(side, side, 0.5, carrier)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier)
    }

    pub fn wavenumber(&self) -> f64 {
        wavenumber(self.carrier)
    }

    /// Lattice pitch in meters.
    pub fn pitch(&self) -> f64 {
        self.spacing * self.wavelength()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn position(&self, n: usize) -> Vector3<f64> {
        self.positions[n]
    }

    pub fn lattice_index(&self, n: usize) -> (usize, usize) {
        (n / self.cols, n % self.cols)
    }

    /// Array response `a_n = exp{j k·p_n}` to a plane wave from `dir`.
    pub fn steering_vector(&self, dir: &Direction) -> DVector<Complex64> {
        let k = WaveVector::from_direction(dir, self.carrier);
        DVector::from_iterator(
            self.len(),
            self.positions
                .iter()
                .map(|p| Complex64::from_polar(1.0, k.phase_at(p))),
        )
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// Which aperture size `D` enters the far-field distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarFieldConvention {
    /// `2D²/λ` with `D` the lattice diagonal.
    Diagonal2D2,
    /// `D²/λ` with `D` the longer lattice side.
    #[default]
    SideD2,
}

/// Fraunhofer-type far-field distance in meters.
pub fn far_field_distance(array: &PlanarArray, convention: FarFieldConvention) -> f64 {
    let pitch = array.pitch();
    let side_r = (array.rows() - 1) as f64 * pitch;
    let side_c = (array.cols() - 1) as f64 * pitch;
    let lambda = array.wavelength();
    match convention {
        FarFieldConvention::Diagonal2D2 => {
            let d = side_r.hypot(side_c);
            2.0 * d * d / lambda
        }
        FarFieldConvention::SideD2 => {
            let d = side_r.max(side_c);
            d * d / lambda
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PolarizationTag {
    /// First polarization, pattern `[1, 0]`.
    #[default]
    A,
    /// Second polarization, pattern `[0, 1]`.
    B,
}

impl PolarizationTag {
    pub fn pattern(&self) -> [Complex64; 2] {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            PolarizationTag::A => [one, zero],
            PolarizationTag::B => [zero, one],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub direction: Direction,
    pub position: Vector3<f64>,
    pub polarization: PolarizationTag,
    /// (elevation row, azimuth column) on the panel lattice.
    pub grid: (usize, usize),
}

impl Probe {
    pub fn with_polarization(&self, tag: PolarizationTag) -> Probe {
        Probe {
            polarization: tag,
            ..self.clone()
        }
    }
}

/// A sectored grid of probes at a common range `R`.
///
/// The lattice has `⌊extent/spacing⌋ + 1` nodes per axis, centered on the
/// boresight. Odd counts therefore put a node on boresight; even counts
/// straddle it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePanel {
    range: f64,
    spacing: f64,
    az_extent: f64,
    el_extent: f64,
    boresight_az: f64,
    az_nodes: Vec<f64>,
    el_nodes: Vec<f64>,
    probes: Vec<Probe>,
}

fn lattice_nodes(extent: f64, spacing: f64) -> Vec<f64> {
    let n = (extent / spacing + 1e-9).floor() as usize + 1;
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - mid) * spacing).collect()
}

impl ProbePanel {
    pub fn new(range: f64, spacing: f64, az_extent: f64, el_extent: f64) -> Result<Self> {
        if !(range > 0.0) || !(spacing > 0.0) {
            return Err(Error::invalid("panel range and spacing must be positive"));
        }
        if !(az_extent >= spacing) || !(el_extent >= spacing) {
            return Err(Error::invalid(format!(
                "panel extents ({az_extent}°, {el_extent}°) must be at least the probe spacing {spacing}°"
            )));
        }
        if el_extent > 180.0 || az_extent >= 360.0 {
            return Err(Error::invalid(
                "panel extents must stay within the sphere (az < 360°, el ≤ 180°)",
            ));
        }
        let az_nodes = lattice_nodes(az_extent, spacing);
        let el_nodes = lattice_nodes(el_extent, spacing);
        let mut panel = ProbePanel {
            range,
            spacing,
            az_extent,
            el_extent,
            boresight_az: 0.0,
            az_nodes,
            el_nodes,
            probes: Vec::new(),
        };
        panel.populate()?;
        Ok(panel)
    }

    fn populate(&mut self) -> Result<()> {
        let mut probes = Vec::with_capacity(self.az_nodes.len() * self.el_nodes.len());
        for (ei, &el) in self.el_nodes.iter().enumerate() {
            for (ai, &az) in self.az_nodes.iter().enumerate() {
                let direction = Direction::new(self.boresight_az + az, el)?;
                probes.push(Probe {
                    index: probes.len(),
                    direction,
                    position: self.range * direction.unit(),
                    polarization: PolarizationTag::A,
                    grid: (ei, ai),
                });
            }
        }
        self.probes = probes;
        Ok(())
    }

    /// The same panel with its boresight turned by `degrees` in azimuth.
    pub fn rotated(&self, degrees: f64) -> ProbePanel {
        let mut p = self.clone();
        p.boresight_az = wrap_degrees(self.boresight_az + degrees);
        for probe in &mut p.probes {
            probe.direction = probe.direction.rotated(degrees);
            probe.position = p.range * probe.direction.unit();
        }
        p
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn az_extent(&self) -> f64 {
        self.az_extent
    }

    pub fn el_extent(&self) -> f64 {
        self.el_extent
    }

    pub fn boresight_azimuth(&self) -> f64 {
        self.boresight_az
    }

    /// Number of (elevation rows, azimuth columns).
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.el_nodes.len(), self.az_nodes.len())
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn probe(&self, index: usize) -> Option<&Probe> {
        self.probes.get(index)
    }

    pub fn index_of(&self, el_row: usize, az_col: usize) -> Option<usize> {
        let (ne, na) = self.grid_shape();
        (el_row < ne && az_col < na).then(|| el_row * na + az_col)
    }

    /// Whether `dir` falls inside the panel's angular extents.
    pub fn contains(&self, dir: &Direction) -> bool {
        let daz = wrap_degrees(dir.azimuth() - self.boresight_az);
        daz.abs() <= self.az_extent / 2.0 + 1e-9
            && dir.elevation().abs() <= self.el_extent / 2.0 + 1e-9
    }

    pub fn nearest_probe(&self, dir: &Direction) -> &Probe {
        self.probes
            .iter()
            .min_by(|a, b| {
                a.direction
                    .grid_distance(dir)
                    .total_cmp(&b.direction.grid_distance(dir))
            })
            .expect("panel holds at least one probe")
    }

    pub fn check_indices(&self, indices: &[usize]) -> Result<()> {
        if indices.is_empty() {
            return Err(Error::invalid("active probe set is empty"));
        }
        if let Some(bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "probe index {bad} out of range for a panel of {} probes",
                self.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_element_sits_at_origin() {
        let a = PlanarArray::new(1, 1, 0.5, 28e9).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.position(0), Vector3::zeros());
    }

    #[test]
    fn eight_by_eight_aperture() {
        let a = PlanarArray::new(8, 8, 0.5, 28e9).unwrap();
        assert_eq!(a.len(), 64);
        let ys: Vec<f64> = a.positions().iter().map(|p| p.y).collect();
        let side = ys.iter().cloned().fold(f64::MIN, f64::max)
            - ys.iter().cloned().fold(f64::MAX, f64::min);
        assert_relative_eq!(
            side,
            7.0 * 0.5 * SPEED_OF_LIGHT / 28e9,
            max_relative = 1e-12
        );
        assert!((side - 0.0375).abs() < 1e-4);
        let sum: Vector3<f64> = a.positions().iter().sum();
        assert!(sum.norm() < 1e-12);
    }

    #[test]
    fn sixteen_by_sixteen_count() {
        assert_eq!(PlanarArray::square(16, 28e9).unwrap().len(), 256);
    }

    #[test]
    fn bad_array_dimensions() {
        assert!(PlanarArray::new(0, 4, 0.5, 28e9).is_err());
        assert!(PlanarArray::new(4, 4, 0.0, 28e9).is_err());
        assert!(PlanarArray::new(4, 4, 0.5, -1.0).is_err());
    }

    #[test]
    fn probe_panel_counts() {
        assert_eq!(ProbePanel::new(2.0, 8.0, 24.0, 24.0).unwrap().len(), 16);
        let p = ProbePanel::new(2.0, 5.0, 150.0, 60.0).unwrap();
        assert_eq!(p.grid_shape(), (13, 31));
        assert_eq!(p.len(), 403);
        assert!(ProbePanel::new(2.0, 8.0, 0.0, 24.0).is_err());
        assert!(ProbePanel::new(2.0, 8.0, 24.0, 4.0).is_err());
    }

    #[test]
    fn probes_at_common_range_and_row_major() {
        let p = ProbePanel::new(2.0, 5.0, 150.0, 60.0).unwrap();
        for probe in p.probes() {
            assert!((probe.position.norm() - 2.0).abs() < 1e-9);
            assert_eq!(p.index_of(probe.grid.0, probe.grid.1), Some(probe.index));
        }
        // odd lattice has a node on boresight
        let centre = p.index_of(6, 15).unwrap();
        assert_eq!(p.probes()[centre].direction, Direction::BORESIGHT);
        assert_eq!(p.probes()[1].direction.azimuth(), -70.0);
        assert_eq!(p.probes()[31].direction.elevation(), -25.0);
    }

    #[test]
    fn panel_grid_is_mirror_symmetric() {
        for panel in [
            ProbePanel::new(2.0, 8.0, 24.0, 24.0).unwrap(),
            ProbePanel::new(2.0, 7.0, 70.0, 42.0).unwrap(),
        ] {
            for p in panel.probes() {
                let (az, el) = (p.direction.azimuth(), p.direction.elevation());
                let has = |a: f64, e: f64| {
                    panel.probes().iter().any(|q| {
                        (q.direction.azimuth() - a).abs() < 1e-9
                            && (q.direction.elevation() - e).abs() < 1e-9
                    })
                };
                assert!(
                    has(-az, el) && has(az, -el),
                    "missing mirror of ({az}, {el})"
                );
            }
        }
    }

    #[test]
    fn rotation_shifts_every_azimuth() {
        let p = ProbePanel::new(2.0, 8.0, 64.0, 32.0).unwrap();
        let r = p.rotated(85.0);
        for (a, b) in p.probes().iter().zip(r.probes()) {
            assert!(
                (wrap_degrees(b.direction.azimuth() - a.direction.azimuth()) - 85.0).abs() < 1e-12
            );
            assert_eq!(a.direction.elevation(), b.direction.elevation());
            assert!((b.position.norm() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn far_field_distances() {
        let a8 = PlanarArray::square(8, 28e9).unwrap();
        let a16 = PlanarArray::square(16, 28e9).unwrap();
        let a1 = PlanarArray::square(1, 28e9).unwrap();
        assert!((far_field_distance(&a8, FarFieldConvention::SideD2) - 0.13).abs() < 0.005);
        assert!((far_field_distance(&a16, FarFieldConvention::SideD2) - 0.60).abs() < 0.005);
        assert_eq!(far_field_distance(&a1, FarFieldConvention::SideD2), 0.0);
        assert_eq!(
            far_field_distance(&a1, FarFieldConvention::Diagonal2D2),
            0.0
        );
        // the diagonal convention is 4x the side one for square arrays
        assert_relative_eq!(
            far_field_distance(&a8, FarFieldConvention::Diagonal2D2),
            4.0 * far_field_distance(&a8, FarFieldConvention::SideD2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn elevation_out_of_range_is_an_error() {
        assert!(Direction::new(0.0, 90.5).is_err());
        assert!(Direction::new(0.0, -91.0).is_err());
        assert_eq!(Direction::new(190.0, 0.0).unwrap().azimuth(), -170.0);
        assert_eq!(Direction::new(180.0, 0.0).unwrap().azimuth(), -180.0);
    }

    #[test]
    fn wave_vector_magnitude() {
        let d = Direction::new(33.0, -12.0).unwrap();
        let k = WaveVector::from_direction(&d, 28e9);
        assert_relative_eq!(k.magnitude(), wavenumber(28e9), max_relative = 1e-9);
    }

    #[test]
    fn broadside_steering_is_flat() {
        let a = PlanarArray::square(4, 28e9).unwrap();
        let s = a.steering_vector(&Direction::BORESIGHT);
        assert!(s
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    proptest! {
        #[test]
        fn direction_wave_vector_round_trip(az in -179.99f64..179.99, el in -89.0f64..89.0) {
            let d = Direction::new(az, el).unwrap();
            let back = WaveVector::from_direction(&d, 28e9).direction().unwrap();
            prop_assert!((back.azimuth() - d.azimuth()).abs() < 1e-9);
            prop_assert!((back.elevation() - d.elevation()).abs() < 1e-9);
        }

        #[test]
        fn wrap_stays_in_range(x in -2000.0f64..2000.0) {
            let w = wrap_degrees(x);
            prop_assert!((-180.0..180.0).contains(&w));
            prop_assert!(((x - w) / 360.0 - ((x - w) / 360.0).round()).abs() < 1e-9);
        }
    }
}

use smpac_core::channel::ClusterState;
use smpac_core::dynamic::{bundled_trace, format_trace, parse_trace};
use smpac_core::geometry::{Direction, PlanarArray, ProbePanel};
use smpac_core::metrics::{
    build_codebook, evaluate_fidelity, FidelityOptions, FidelityReport, TargetReference,
};
use smpac_core::optimizer::{select_probes, ClusterTarget, SolverOptions};

fn fidelity(side: usize, k: usize, centroid: Direction) -> FidelityReport {
    let dut = PlanarArray::square(side, 28e9).unwrap();
    let panel = ProbePanel::new(2.0, 8.0, 48.0, 48.0).unwrap();
    let cluster = ClusterState::with_rays(centroid, 5.0, 3.0, 0.0, 20, 3).unwrap();
    let solver = SolverOptions::default();
    let target = ClusterTarget::new(&cluster, &dut, solver.pas_step).unwrap();
    let solution = select_probes(&target, &panel, k, &dut, &solver).unwrap();
    assert!(solution.probes.len() <= k);
    assert!((solution.powers.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let opts = FidelityOptions {
        realizations: 2000,
        ..Default::default()
    };
    let sector = opts.sector_for(&panel);
    let codebook = build_codebook(&dut, &sector).unwrap();
    let grid = sector.scan_grid(opts.scan_step).unwrap();
    let reference = TargetReference::new(&cluster, &target, &dut, &codebook, &grid, &opts).unwrap();
    evaluate_fidelity(
        &target, &reference, &solution, &panel, &dut, &codebook, &opts,
    )
    .unwrap()
}

#[test]
fn more_probes_do_not_hurt_an_offset_cluster() {
    let centroid = Direction::new(4.0, 4.0).unwrap();
    let one = fidelity(4, 1, centroid);
    let four = fidelity(4, 4, centroid);
    assert!(four.e_rho < one.e_rho, "{four:?} vs {one:?}");
    assert!(four.soft_sum < one.soft_sum);
    for r in [one, four] {
        assert!([r.e_rho, r.d_p, r.d_ba]
            .iter()
            .all(|m| (0.0..=1.0).contains(m)));
    }
}

#[test]
fn small_dut_resolves_little() {
    let r = fidelity(2, 1, Direction::BORESIGHT);
    assert!(r.soft_sum < 0.2, "{r:?}");
}

#[test]
fn trace_text_round_trips() {
    let t = bundled_trace();
    let again = parse_trace(&format_trace(&t), "copy").unwrap();
    assert_eq!(again.len(), t.len());
    for (a, b) in t.snapshots.iter().zip(&again.snapshots) {
        assert!((a.centroid.azimuth() - b.centroid.azimuth()).abs() < 1e-6);
        assert!((a.sigma_az - b.sigma_az).abs() < 1e-6);
    }
    assert_eq!(format_trace(&again), format_trace(&t));
}

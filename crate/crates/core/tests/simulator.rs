mod common;

use common::*;
use graphy::data_io::{generate_dataset, simulate_field, Grid, PointSource, Simulator, SynthDatasetSpec};

#[test]
fn mass_is_conserved_without_sources_or_wind() {
    let e = mass_conservation_error();
    assert!(e <= 1e-8, "{e:e}");
}

#[test]
fn pulse_translates_with_the_wind() {
    let e = pulse_displacement_error_cells();
    assert!(e <= 1.0, "{e}");
}

#[test]
fn diffusion_spreads_monotonically() {
    let v = diffusion_variances();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
}

#[test]
fn substeps_respect_the_stability_bound() {
    let grid = Grid { width: 8, height: 8, cell_km: 0.5 };
    let sim = Simulator::new(grid, 0.3, 0.1, 0.0, Vec::new()).unwrap();
    for &(u, v) in &[(0.0, 0.0), (3.0, -2.0), (-15.0, 9.0)] {
        let n = sim.substeps(u, v).unwrap() as f64;
        let dt = 1.0 / n;
        let ds = grid.cell_km;
        assert!(dt <= ds * ds / (4.0 * 0.3) + 1e-12);
        if u != 0.0 {
            assert!(dt <= ds / f64::abs(u));
        }
    }
    assert!(sim.substeps(1e9, 0.0).is_err());
}

#[test]
fn active_source_adds_its_rate() {
    let grid = Grid { width: 6, height: 6, cell_km: 0.5 };
    let src = PointSource { row: 2, col: 3, rate: 10.0, windows: vec![(0, 1)] };
    let mut sim = Simulator::new(grid, 0.0, 0.0, 0.0, vec![src]).unwrap();
    sim.step_hour(0.0, 0.0).unwrap();
    assert!((sim.total_mass() - 10.0).abs() < 1e-9);
    sim.step_hour(0.0, 0.0).unwrap();
    assert!((sim.total_mass() - 10.0).abs() < 1e-9);
}

#[test]
fn simulation_is_deterministic() {
    let spec = SynthDatasetSpec { hours: 48, n_sensors: 6, ..Default::default() };
    let a = simulate_field(&spec, false).unwrap();
    let b = simulate_field(&spec, false).unwrap();
    assert_eq!(a.readings, b.readings);
    assert_eq!(a.sensor_cells, b.sensor_cells);
    assert!(a.readings.iter().flatten().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn default_spec_matches_the_benchmark_shape() {
    let spec = SynthDatasetSpec::default();
    assert_eq!((spec.grid.width, spec.grid.height, spec.grid.cell_km), (32, 32, 0.5));
    assert_eq!((spec.n_sensors, spec.hours), (40, 2928));
    assert_eq!((spec.diffusion, spec.noise_sd), (0.3, 0.5));
    let small = SynthDatasetSpec { hours: 24, ..spec };
    let (ds, _) = generate_dataset(&small).unwrap();
    assert_eq!(ds.sensors.len(), 40);
    assert_eq!(ds.num_hours(), 24);
}

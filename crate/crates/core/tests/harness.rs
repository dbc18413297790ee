use vortexlab::harness::{builtin_scenario, builtin_scenarios, compare_tracks, eps_dir, run_scenario, Scenario};
use vortexlab::trajectory::{TrackedVortex, Trajectory};
use vortexlab::Point;

fn straight(offset: Point, ids: &[usize]) -> Trajectory {
    let mut tr = Trajectory::default();
    for k in 0..=20 {
        let t = 0.01 * k as f64;
        let vs = ids
            .iter()
            .enumerate()
            .map(|(n, &id)| TrackedVortex {
                id,
                position: [0.1 * n as f64 + t + offset[0], -0.2 * n as f64 + offset[1]],
                degree: 1,
                q: 0.5,
                velocity: None,
                jacobian_mass: None,
                vorticity_mass: None,
                window_radius: None,
            })
            .collect();
        tr.push(t, vs, &[]);
    }
    tr
}

#[test]
fn identical_tracks_are_at_distance_zero() {
    let a = straight([0.0, 0.0], &[0, 1]);
    let c = compare_tracks(&a, &a, 0.01).unwrap();
    assert_eq!(c.sup, 0.0);
    assert_eq!(c.l2, 0.0);
    assert_eq!(c.overlap, (0.0, 0.2));
    assert!(!c.swap_suspected);
}

#[test]
fn shifted_tracks_are_at_the_shift() {
    let a = straight([0.0, 0.0], &[0, 1]);
    // Other ids and order: matching goes by position at t = 0.
    let b = straight([0.003, 0.004], &[7, 3]);
    let c = compare_tracks(&a, &b, 0.01).unwrap();
    assert!((c.sup - 0.005).abs() < 1e-12);
    for d in &c.per_vortex {
        assert!((d.l2 - 0.005 * 0.2f64.sqrt()).abs() < 1e-12);
    }
    assert_eq!(c.per_vortex[0].ode_id, 7);
    assert!(compare_tracks(&a, &straight([0.0, 0.0], &[0]), 0.01).is_err());
}

#[test]
fn builtin_scenarios_are_valid_and_roundtrip() {
    let all = builtin_scenarios();
    assert_eq!(all.len(), 5);
    for sc in &all {
        sc.validate().unwrap();
        let text = serde_json::to_string_pretty(sc).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(&back, sc);
    }
    assert!(builtin_scenario("no-such-scenario").is_none());
}

#[test]
fn malformed_scenarios_are_rejected() {
    let base = builtin_scenario("gl-disk-motion").unwrap();
    let mut coarse = base.clone();
    coarse.grid_sizes[2] = 257;
    assert!(coarse.validate().is_err());
    let mut unordered = base.clone();
    unordered.epsilons.swap(0, 1);
    assert!(unordered.validate().is_err());
    let mut future = base.clone();
    future.schema_version += 1;
    assert!(future.validate().is_err());
    let mut short = base;
    short.grid_sizes.pop();
    assert!(short.validate().is_err());
}

fn small() -> Scenario {
    let mut sc = builtin_scenario("gl-disk-motion").unwrap();
    sc.name = "small".into();
    sc.epsilons = vec![1.0 / 16.0];
    sc.grid_sizes = vec![129];
    sc.t_end = 0.01;
    sc
}

#[test]
fn scenario_runs_are_deterministic_and_written_out() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_scenario(&small(), Some(dir.path())).unwrap();
    let b = run_scenario(&small(), None).unwrap();
    assert!(a.is_complete());
    let (ra, rb) = (&a.results[0], &b.results[0]);
    assert_eq!(ra.comparison, rb.comparison);
    assert_eq!(ra.excess_energy, rb.excess_energy);
    assert!(ra.comparison.as_ref().unwrap().sup < 0.02);
    // A single epsilon cannot establish a trend.
    assert_eq!(a.monotone, None);
    for f in ["scenario.json", "report.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let sub = eps_dir(dir.path(), 0);
    let pde = Trajectory::read(&sub, "pde_").unwrap();
    assert_eq!(pde.times.len(), ra.excess_energy.len());
    assert!(Trajectory::read(&sub, "ode_").is_ok());
}

#[test]
fn perturbed_runs_depend_only_on_the_seed() {
    let mut sc = small();
    sc.t_end = 0.002;
    sc.perturbation = builtin_scenario("gl-disk-motion-excess").unwrap().perturbation;
    let a = run_scenario(&sc, None).unwrap();
    let b = run_scenario(&sc, None).unwrap();
    assert_eq!(a.results[0].injected, b.results[0].injected);
    assert_eq!(a.results[0].excess_energy, b.results[0].excess_energy);
    sc.seed += 1;
    let c = run_scenario(&sc, None).unwrap();
    assert_ne!(a.results[0].excess_energy, c.results[0].excess_energy);
    let (surplus, _) = a.results[0].injected.unwrap();
    assert!((surplus - 1.0).abs() < 0.05, "{surplus}");
}

use std::f64::consts::PI;

use vortexlab::motion::{
    energy_decay_check, ode_integrate, ode_integrate_with, ode_rhs, MotionKind, OdeOptions, OdeState,
};
use vortexlab::renorm::{RenormalizedEnergyModel, WMethod};
use vortexlab::trajectory::RENORMALIZED_ENERGY;
use vortexlab::vortex::distance;
use vortexlab::{BoundaryCondition, BoundaryData, Vortex, VortexSet};

fn dirichlet_disk() -> RenormalizedEnergyModel {
    RenormalizedEnergyModel::unit_disk(BoundaryCondition::dirichlet(BoundaryData::FromVortices), WMethod::ClosedForm)
}

/// Like-signed vortices repel each other and the boundary keeps them in.
fn triangle() -> VortexSet {
    VortexSet::new(vec![
        Vortex::new([0.3, 0.1], 1, 0.5),
        Vortex::new([-0.25, 0.2], 1, -0.5),
        Vortex::new([0.0, -0.35], 1, 0.5),
    ])
}

fn three_vortices() -> VortexSet {
    VortexSet::new(vec![
        Vortex::new([0.3, 0.1], 1, 0.5),
        Vortex::new([-0.25, 0.2], 1, -0.5),
        Vortex::new([0.0, -0.35], -1, 0.5),
    ])
}

#[test]
fn same_sign_pair_orbits_on_a_circle() {
    let v = VortexSet::new(vec![Vortex::new([0.5, 0.0], 1, 0.5), Vortex::new([-0.5, 0.0], 1, 0.5)]);
    let s = OdeState::new(v, 0.0, RenormalizedEnergyModel::free_plane(), MotionKind::Llg);
    // Relative angular speed 2 / r^2 at unit separation.
    let tr = ode_integrate(&s, PI, 1e-10).unwrap();
    assert!(tr.status.is_completed());
    for vs in &tr.vortices {
        assert!((distance(vs[0].position, vs[1].position) - 1.0).abs() < 1e-8);
    }
    let end = &tr.vortices.last().unwrap()[0];
    assert!(distance(end.position, [0.5, 0.0]) < 1e-6);
}

#[test]
fn conservative_flow_keeps_w() {
    let s = OdeState::new(triangle(), 0.0, dirichlet_disk(), MotionKind::Llg);
    let tr = ode_integrate(&s, 1.0, 1e-11).unwrap();
    assert!(tr.status.is_completed());
    let w = tr.series(RENORMALIZED_ENERGY).unwrap();
    let drift = w.iter().map(|x| (x - w[0]).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-8, "W drift {drift:e}");
    assert!(energy_decay_check(&tr) <= 1e-6);
}

#[test]
fn damped_flow_dissipates_w_at_the_predicted_rate() {
    for kind in [MotionKind::Llg, MotionKind::Gl] {
        let s = OdeState::new(three_vortices(), 1.0, dirichlet_disk(), kind);
        let tr = ode_integrate(&s, 1.0, 1e-10).unwrap();
        let w = tr.series(RENORMALIZED_ENERGY).unwrap();
        assert!(w.windows(2).all(|p| p[1] < p[0]));
        let check = energy_decay_check(&tr);
        assert!(check <= 1e-5, "{kind:?}: {check:e}");
    }
}

#[test]
fn gyro_term_does_no_work() {
    let s = OdeState::new(three_vortices(), 0.0, dirichlet_disk(), MotionKind::Llg);
    let tr = ode_integrate(&s, 0.5, 1e-10).unwrap();
    for (i, vs) in tr.vortices.iter().enumerate() {
        let mut state = s.clone();
        for (e, t) in state.vortices.entries.iter_mut().zip(vs) {
            e.position = t.position;
        }
        state.model.bc = s.model.bc.frozen(&s.vortices);
        let g = vortexlab::renorm::grad_w(&state.vortices, &state.model).unwrap();
        let v: Vec<_> = vs.iter().map(|t| t.velocity.unwrap()).collect();
        // With alpha0 = 0: Re<i a', a'> = 0 and dW/dt = sum <dW/da, a'> = 0.
        let power: f64 = g.iter().zip(&v).map(|(g, v)| g[0] * v[0] + g[1] * v[1]).sum();
        let scale: f64 = g.iter().zip(&v).map(|(g, v)| g[0].hypot(g[1]) * v[0].hypot(v[1])).sum();
        assert!(power.abs() <= 1e-12 * scale.max(1.0), "sample {i}: {power:e}");
    }
}

#[test]
fn reversing_charges_reverses_time() {
    let s = OdeState::new(three_vortices(), 0.0, dirichlet_disk(), MotionKind::Llg);
    let fwd = ode_integrate(&s, 0.6, 1e-11).unwrap();
    let mut back = s.clone();
    back.model.bc = s.model.bc.frozen(&s.vortices);
    for (e, t) in back.vortices.entries.iter_mut().zip(fwd.vortices.last().unwrap()) {
        e.position = t.position;
        e.q = -e.q;
    }
    let rev = ode_integrate(&back, 0.6, 1e-11).unwrap();
    for (a, b) in s.vortices.entries.iter().zip(rev.vortices.last().unwrap()) {
        assert!(distance(a.position, b.position) < 1e-7);
    }
}

#[test]
fn endpoint_error_shrinks_with_tolerance() {
    let s = OdeState::new(three_vortices(), 0.5, dirichlet_disk(), MotionKind::Llg);
    let end = |tol: f64| -> Vec<[f64; 2]> {
        ode_integrate(&s, 1.0, tol).unwrap().vortices.last().unwrap().iter().map(|t| t.position).collect()
    };
    let reference = end(1e-12);
    let err = |tol: f64| -> f64 { end(tol).iter().zip(&reference).map(|(a, b)| distance(*a, *b)).fold(0.0, f64::max) };
    let mut prev = err(1e-6);
    for tol in [1e-7, 1e-8] {
        let e = err(tol);
        assert!(e * 4.0 <= prev, "tol {tol:e}: {e:e} vs {prev:e}");
        prev = e;
    }
}

#[test]
fn llg_rotation_follows_the_sign_of_q() {
    let model = RenormalizedEnergyModel::unit_disk(
        BoundaryCondition::dirichlet(BoundaryData::origin_vortex()),
        WMethod::ClosedForm,
    );
    let spin = |q: f64| {
        let s = OdeState::new(VortexSet::new(vec![Vortex::new([0.3, 0.0], 1, q)]), 1.0, model.clone(), MotionKind::Llg);
        let v = ode_rhs(&s).unwrap()[0];
        // Angular velocity about the origin.
        (0.3 * v[1]) / (0.3 * 0.3)
    };
    assert!(spin(0.5) > 0.0);
    assert!(spin(-0.5) < 0.0);
    assert!((spin(0.5) + spin(-0.5)).abs() < 1e-14);
}

#[test]
fn jumps_are_applied_in_time_order() {
    let s =
        OdeState::new(VortexSet::new(vec![Vortex::new([0.3, 0.0], 1, 0.5)]), 1.0, dirichlet_disk(), MotionKind::Llg);
    let mut o = OdeOptions::new(0.5, 1e-9);
    o.jumps = vec![
        vortexlab::motion::QJump { time: 0.3, vortex: 0, q: 0.5 },
        vortexlab::motion::QJump { time: 0.1, vortex: 0, q: -0.5 },
    ];
    let tr = ode_integrate_with(&s, &o).unwrap();
    let q_at = |t: f64| {
        let i = tr.times.iter().position(|&x| x >= t).unwrap();
        tr.vortices[i][0].q
    };
    assert_eq!(q_at(0.05), 0.5);
    assert_eq!(q_at(0.2), -0.5);
    assert_eq!(q_at(0.45), 0.5);
    assert_eq!(tr.events.len(), 2);
}

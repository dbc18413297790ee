use proptest::prelude::*;
use vortexlab::glmixed::mixed_coefficient;
use vortexlab::grid::product_map;
use vortexlab::llg::llg_rhs;
use vortexlab::motion::{ode_rhs, MotionKind, OdeState};
use vortexlab::renorm::{disk_energy, pair_energy, pair_gradient, RenormalizedEnergyModel};
use vortexlab::seed::seed_vortex_field;
use vortexlab::trajectory::match_nearest;
use vortexlab::vortex::{is_half_odd, round_half_odd};
use vortexlab::{make_grid, BoundaryCondition, BoundaryData, DirectorField, Domain, Vec3, Vortex, VortexSet};

fn point(r: f64) -> impl Strategy<Value = [f64; 2]> {
    (-r..r, -r..r).prop_map(|(x, y)| [x, y])
}

fn degree() -> impl Strategy<Value = i32> {
    prop_oneof![Just(-1), Just(1), Just(2)]
}

fn separated(points: &[[f64; 2]], gap: f64) -> bool {
    (0..points.len()).all(|i| (i + 1..points.len()).all(|j| vortexlab::vortex::distance(points[i], points[j]) > gap))
}

proptest! {
    #[test]
    fn product_map_has_unit_modulus(
        charges in prop::collection::vec((point(1.0), degree()), 1..5),
        x in point(2.0),
    ) {
        prop_assume!(charges.iter().all(|(b, _)| vortexlab::vortex::distance(*b, x) > 1e-6));
        prop_assert!((product_map(&charges, x).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_plane_energy_is_rigid_motion_invariant(
        pts in prop::collection::vec(point(1.0), 2..5),
        shift in point(3.0),
        turn in 0.0..std::f64::consts::TAU,
    ) {
        prop_assume!(separated(&pts, 0.05));
        let set = |f: &dyn Fn([f64; 2]) -> [f64; 2]| {
            VortexSet::new(pts.iter().enumerate().map(|(n, &p)| Vortex::gl(f(p), if n % 2 == 0 { 1 } else { -1 })).collect())
        };
        let (c, s) = (turn.cos(), turn.sin());
        let w0 = pair_energy(&set(&|p| p));
        let w1 = pair_energy(&set(&|p| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]]));
        prop_assert!((w0 - w1).abs() <= 1e-9 * w0.abs().max(1.0));
        // Translation invariance: the gradients sum to zero.
        let g = pair_gradient(&set(&|p| p));
        let total = g.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
        let scale: f64 = g.iter().map(|v| v[0].hypot(v[1])).sum::<f64>().max(1.0);
        prop_assert!(total[0].hypot(total[1]) <= 1e-10 * scale);
    }

    #[test]
    fn disk_energy_is_rotation_invariant(r in 0.05..0.8f64, th in 0.0..std::f64::consts::TAU) {
        let bc = BoundaryCondition::dirichlet(BoundaryData::origin_vortex());
        let w = |p: [f64; 2]| disk_energy(&VortexSet::new(vec![Vortex::gl(p, 1)]), &bc).unwrap();
        prop_assert!((w([r, 0.0]) - w([r * th.cos(), r * th.sin()])).abs() < 1e-10);
    }

    #[test]
    fn mixed_coefficient_inverts_alpha_plus_i(a in 0.0..100.0f64) {
        let z = mixed_coefficient(a) * num_complex::Complex64::new(a, 1.0);
        prop_assert!((z - 1.0).norm() < 1e-14);
    }

    #[test]
    fn half_odd_rounding_lands_on_half_odd(x in -10.0..10.0f64) {
        let q = round_half_odd(x);
        prop_assert!(is_half_odd(q));
        prop_assert!((q - x).abs() <= 0.5 + 1e-12);
    }

    #[test]
    fn nearest_matching_is_a_permutation(pts in prop::collection::vec(point(1.0), 1..8), seed in any::<u64>()) {
        let mut next = pts.clone();
        let n = next.len();
        next.rotate_left((seed as usize) % n);
        let assign = match_nearest(&pts, &next).unwrap();
        let mut seen = assign.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        if separated(&pts, 1e-9) {
            for (j, &i) in assign.iter().enumerate() {
                prop_assert_eq!(pts[i], next[j]);
            }
        }
    }

    #[test]
    fn llg_rhs_is_tangent(angles in prop::collection::vec((0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU), 289), alpha in 0.0..2.0f64) {
        let g = make_grid(17, 17, Domain::unit_square(), BoundaryCondition::Neumann).unwrap();
        let m = DirectorField {
            grid: g.clone(),
            m: angles.iter().map(|&(t, p)| Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())).collect(),
        };
        let r = llg_rhs(&m, 0.1, alpha);
        for (v, m) in r.iter().zip(&m.m) {
            prop_assert!(v.dot(*m).abs() <= 1e-12 * v.norm().max(1.0));
        }
    }

    #[test]
    fn seeded_directors_are_unit(a in point(0.3), polarity in prop_oneof![Just(1), Just(-1)]) {
        let g = make_grid(65, 65, Domain::UnitDisk, BoundaryCondition::dirichlet(BoundaryData::FromVortices)).unwrap();
        let v = VortexSet::new(vec![Vortex::new(a, 1, 0.5 * polarity as f64)]);
        let m = seed_vortex_field(&g, &v, 0.04, &[polarity]).unwrap();
        prop_assert!(m.max_norm_deviation() <= 1e-12);
    }

    #[test]
    fn llg_ode_velocity_flips_with_q_only_in_its_gyro_part(a in point(0.4), alpha0 in 0.1..3.0f64) {
        prop_assume!(a[0].hypot(a[1]) > 0.05);
        let model = RenormalizedEnergyModel::unit_disk(
            BoundaryCondition::dirichlet(BoundaryData::origin_vortex()),
            vortexlab::renorm::WMethod::ClosedForm,
        );
        let v = |q: f64| {
            let s = OdeState::new(VortexSet::new(vec![Vortex::new(a, 1, q)]), alpha0, model.clone(), MotionKind::Llg);
            ode_rhs(&s).unwrap()[0]
        };
        let (p, m) = (v(0.5), v(-0.5));
        // The damped (radial) parts agree; the gyro parts are opposite.
        let radial = |u: [f64; 2]| u[0] * a[0] + u[1] * a[1];
        let tangential = |u: [f64; 2]| a[0] * u[1] - a[1] * u[0];
        prop_assert!((radial(p) - radial(m)).abs() <= 1e-10 * radial(p).abs().max(1e-12));
        prop_assert!((tangential(p) + tangential(m)).abs() <= 1e-10 * tangential(p).abs().max(1e-12));
    }
}

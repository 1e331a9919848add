use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcrw_core::dynamics::{
    actuation_map, bias_vector, closed_loop_dynamics, commanded_acceleration, constraint_set,
    contact_forces, control_law, forward_dynamics, gravity_gradient, linearization_coefficients,
    mass_diagonal, mass_matrix, RowTag,
};
use vcrw_core::model::{nominal_pose, UPPER_BODY_ANGLE};
use vcrw_core::testkit::{dense_kkt_solve, random_state};
use vcrw_core::{ContactMode, Foot, ModelParams, Variant};

fn modes() -> Vec<ContactMode> {
    Foot::all()
        .flat_map(|f| [ContactMode::Single(f), ContactMode::double(f)])
        .collect()
}

#[test]
fn closed_form_multipliers_match_block_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for variant in [Variant::Vcrw1, Variant::Vcrw2, Variant::Vcrw3] {
        let p = ModelParams::table_one(variant);
        for mode in modes() {
            for _ in 0..20 {
                let s = random_state(&mut rng, &p, mode).unwrap();
                let u = if variant == Variant::Vcrw3 { rng.gen_range(-3.0..3.0) } else { 0.0 };
                let cs = constraint_set(mode, &s, &p).unwrap();
                let f = bias_vector(&s, &p).unwrap().total() - actuation_map(&p) * u;
                let (qdd, lambda) =
                    dense_kkt_solve(&mass_matrix(&p), &cs.jacobian, &f, &cs.rate_term(&s.qd)).unwrap();
                let lam = contact_forces(&s, mode, &p, u).unwrap();
                let acc = forward_dynamics(&s, mode, &p, u).unwrap();
                assert!((&lam - &lambda).amax() < 1e-9, "{variant} {mode}");
                assert!((&acc - &qdd).amax() < 1e-9, "{variant} {mode}");
                // accelerations respect the constraints
                let residual = &cs.jacobian * &acc + cs.rate_term(&s.qd);
                assert!(residual.amax() < 1e-9);
            }
        }
    }
}

/// Internal forces (springs, dampers, welds, pin, actuator) cancel in the
/// total linear momentum; only contact and gravity remain.
#[test]
fn linear_momentum_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for variant in [Variant::Vcrw1, Variant::Vcrw2, Variant::Vcrw3] {
        let p = ModelParams::table_one(variant);
        for mode in modes() {
            let s = random_state(&mut rng, &p, mode).unwrap();
            let acc = closed_loop_dynamics(&s, mode, &p).unwrap();
            let cs = constraint_set(mode, &s, &p).unwrap();
            let m = mass_diagonal(&p);
            let g = gravity_gradient(&s, &p).unwrap();
            let mut lhs = Vector2::zeros();
            let mut gravity = Vector2::zeros();
            for body in 0..m.len() / 3 {
                lhs += Vector2::new(m[3 * body] * acc.qdd[3 * body], m[3 * body + 1] * acc.qdd[3 * body + 1]);
                gravity -= Vector2::new(g[3 * body], g[3 * body + 1]);
            }
            let mut contact = Vector2::zeros();
            for (row, tag) in cs.rows.iter().enumerate() {
                match tag {
                    RowTag::ContactX(_) => contact.x += acc.lambda[row],
                    RowTag::ContactZ(_) => contact.y += acc.lambda[row],
                    _ => {}
                }
            }
            let err = (lhs - contact - gravity).norm();
            assert!(err < 1e-9, "{variant} {mode}: {err:e}");
        }
    }
}

/// In the symmetric pose the ring exerts no net force on either cross, so the
/// stance foot carries its own cross and the other cross starts to fall.
#[test]
fn symmetric_rest_pose_has_no_friction() {
    let mut p = ModelParams::table_one(Variant::Vcrw2).with_slope(0.0);
    p.natural_length = 2.0 * p.attach_offset[0] * (std::f64::consts::PI / 8.0).sin();
    let s = nominal_pose(&p, Vector2::new(0.0, p.half_length[0]), 0.0);
    let mode = ContactMode::Single(Foot::F1A);
    let lam = contact_forces(&s, mode, &p, 0.0).unwrap();
    assert!(lam[0].abs() < 1e-12);
    let stance_cross = p.mass[0] + p.mass[2];
    assert!((lam[1] - stance_cross * p.gravity).abs() < 1e-10);
    let acc = forward_dynamics(&s, mode, &p, 0.0).unwrap();
    for (i, a) in acc.iter().enumerate() {
        let expected = if i == 4 || i == 10 { -p.gravity } else { 0.0 };
        assert!((a - expected).abs() < 1e-12, "q̈[{i}] = {a}");
    }
}

#[test]
fn upper_body_acceleration_is_affine_in_torque() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = ModelParams::level_assisted();
    for mode in modes() {
        let s = random_state(&mut rng, &p, mode).unwrap();
        let (a, b) = linearization_coefficients(&s, mode, &p).unwrap();
        for _ in 0..3 {
            let u = rng.gen_range(-5.0..5.0);
            let th5 = forward_dynamics(&s, mode, &p, u).unwrap()[UPPER_BODY_ANGLE];
            assert!((th5 - (a * u - b)).abs() < 1e-9 * (1.0 + th5.abs()));
        }
        // torque from limb to body slows the body's clockwise rotation
        assert!(a < 0.0);
    }
}

#[test]
fn closed_loop_tracks_the_commanded_acceleration() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = ModelParams::level_assisted();
    for mode in modes() {
        let s = random_state(&mut rng, &p, mode).unwrap();
        let law = control_law(&s, mode, &p).unwrap();
        let acc = closed_loop_dynamics(&s, mode, &p).unwrap();
        assert_eq!(acc.torque, law.u);
        assert!((acc.qdd[UPPER_BODY_ANGLE] - commanded_acceleration(&s, &p)).abs() < 1e-9);
        let (a, b) = linearization_coefficients(&s, mode, &p).unwrap();
        assert!((law.a - a).abs() < 1e-9 && (law.b - b).abs() < 1e-9);
    }
}

#[test]
fn holding_the_setpoint_needs_only_the_compensating_torque() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = ModelParams::level_assisted();
    let mode = ContactMode::Single(Foot::F1A);
    let mut s = random_state(&mut rng, &p, mode).unwrap();
    s.qd = DVector::zeros(s.qd.len());
    vcrw_core::model::set_upper_body(&mut s, &p, p.controller.target, 0.0);
    let law = control_law(&s, mode, &p).unwrap();
    assert_eq!(law.v, 0.0);
    assert!((law.u - law.b / law.a).abs() < 1e-12);
}

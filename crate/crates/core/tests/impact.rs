use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcrw_core::dynamics::{kinetic_energy, mass_diagonal, mass_matrix};
use vcrw_core::hybrid::{impact_jacobian, impact_map, next_foot};
use vcrw_core::model::tip_position;
use vcrw_core::testkit::{dense_impact_solve, random_pre_impact};
use vcrw_core::{Foot, GeneralizedState, ModelParams, Variant};

fn kinetic(s: &GeneralizedState, qd: &DVector<f64>, p: &ModelParams) -> f64 {
    kinetic_energy(&GeneralizedState { qd: qd.clone(), ..s.clone() }, p)
}

fn each_case(seed: u64, mut check: impl FnMut(&ModelParams, &GeneralizedState, Foot)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for variant in [Variant::Vcrw1, Variant::Vcrw2, Variant::Vcrw3] {
        let p = ModelParams::table_one(variant);
        for rear in Foot::all() {
            for _ in 0..5 {
                let s = random_pre_impact(&mut rng, &p, rear).unwrap();
                check(&p, &s, rear);
            }
        }
    }
}

#[test]
fn sampled_impact_poses_have_both_feet_down() {
    each_case(20, |p, s, rear| {
        assert!(tip_position(s, p, rear).y.abs() < 1e-12);
        assert!(tip_position(s, p, next_foot(rear)).y.abs() < 1e-12);
    });
}

#[test]
fn post_impact_velocities_satisfy_the_double_support_constraints() {
    each_case(21, |p, s, rear| {
        let out = impact_map(s, &s.qd, rear, p).unwrap();
        let ji = impact_jacobian(s, rear, p).unwrap();
        assert!(ji.velocity_residual(&out.qd_plus).amax() <= 1e-10);
    });
}

#[test]
fn impact_never_adds_kinetic_energy() {
    each_case(22, |p, s, rear| {
        let out = impact_map(s, &s.qd, rear, p).unwrap();
        assert!(kinetic(s, &out.qd_plus, p) <= kinetic(s, &s.qd, p) + 1e-12);
    });
}

#[test]
fn impact_map_is_idempotent() {
    each_case(23, |p, s, rear| {
        let once = impact_map(s, &s.qd, rear, p).unwrap().qd_plus;
        let twice = impact_map(s, &once, rear, p).unwrap();
        assert!((&twice.qd_plus - &once).amax() <= 1e-12);
        assert!(twice.impulse.amax() <= 1e-12);
    });
}

/// `ΔT = −½ λᵀ (J M⁻¹ Jᵀ) λ`.
#[test]
fn energy_loss_equals_impulse_quadratic_form() {
    each_case(24, |p, s, rear| {
        let out = impact_map(s, &s.qd, rear, p).unwrap();
        let ji = impact_jacobian(s, rear, p).unwrap().jacobian;
        let minv = mass_diagonal(p).map(|m| 1.0 / m);
        let mut jm = ji.clone();
        for (mut col, w) in jm.column_iter_mut().zip(minv.iter()) {
            col *= *w;
        }
        let a = &jm * ji.transpose();
        let form = -0.5 * out.impulse.dot(&(&a * &out.impulse));
        let dt = kinetic(s, &out.qd_plus, p) - kinetic(s, &s.qd, p);
        assert!((dt - form).abs() <= 1e-8, "{dt} vs {form}");
    });
}

#[test]
fn impact_matches_block_momentum_solve() {
    each_case(25, |p, s, rear| {
        let out = impact_map(s, &s.qd, rear, p).unwrap();
        let ji = impact_jacobian(s, rear, p).unwrap().jacobian;
        let (qd_plus, impulse) = dense_impact_solve(&mass_matrix(p), &ji, &s.qd).unwrap();
        assert!((&out.qd_plus - qd_plus).amax() < 1e-10);
        assert!((&out.impulse - impulse).amax() < 1e-9);
        // the momentum jump lies in the row space of J
        let jump = mass_matrix(p) * (&out.qd_plus - &s.qd);
        assert!((jump - ji.tr_mul(&out.impulse)).amax() < 1e-10);
    });
}

/// Landing one cross leaves the other untouched: no impulse crosses the
/// spring ring.
#[test]
fn impact_only_changes_the_landing_cross_and_stance_cross() {
    each_case(26, |p, s, rear| {
        let out = impact_map(s, &s.qd, rear, p).unwrap();
        let fore = next_foot(rear);
        // the rear cross is already at rest at its contact point and its
        // motion stays feasible, so it keeps its velocity
        let rear_limbs = [rear.limb, (rear.limb + 2) % 4];
        let mut unchanged: Vec<usize> = rear_limbs.iter().flat_map(|l| 3 * l..3 * l + 3).collect();
        if p.variant.has_upper_body() && rear_limbs.contains(&0) {
            unchanged.extend(12..15);
        }
        for i in unchanged {
            assert!((out.qd_plus[i] - s.qd[i]).abs() < 1e-12, "{fore}: q̇[{i}] changed");
        }
    });
}

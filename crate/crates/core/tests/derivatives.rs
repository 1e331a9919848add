//! Analytic derivatives against central finite differences.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcrw_core::dynamics::{
    constraint_set, damping_gradient, elastic_gradient, elastic_potential, gravity_gradient,
    gravity_potential, rayleigh_dissipation,
};
use vcrw_core::model::{spring_geometry, tip_position, upper_body_axis, UPPER_BODY, UPPER_BODY_ANGLE};
use vcrw_core::testkit::random_state;
use vcrw_core::{ContactMode, Foot, GeneralizedState, ModelParams, Variant};

const H: f64 = 1e-6;

fn variants() -> [ModelParams; 3] {
    [
        ModelParams::table_one(Variant::Vcrw1),
        ModelParams::table_one(Variant::Vcrw2),
        ModelParams::table_one(Variant::Vcrw3).with_slope(0.05),
    ]
}

fn shifted(s: &GeneralizedState, dq: &DVector<f64>, h: f64) -> GeneralizedState {
    GeneralizedState {
        t: s.t,
        q: &s.q + dq * h,
        qd: s.qd.clone(),
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

fn fd_gradient(s: &GeneralizedState, f: impl Fn(&GeneralizedState) -> f64) -> DVector<f64> {
    let n = s.q.len();
    DVector::from_fn(n, |i, _| {
        let e = unit(n, i);
        (f(&shifted(s, &e, H)) - f(&shifted(s, &e, -H))) / (2.0 * H)
    })
}

fn assert_close(a: &DVector<f64>, b: &DVector<f64>, tol: f64, what: &str) {
    let scale = 1.0 + b.amax();
    let err = (a - b).amax();
    assert!(err <= tol * scale, "{what}: error {err:e}\n{a}\n{b}");
}

fn states(params: &ModelParams, seed: u64) -> Vec<GeneralizedState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Foot::all()
        .map(|f| random_state(&mut rng, params, ContactMode::Single(f)).unwrap())
        .collect()
}

#[test]
fn tip_velocity_is_the_time_derivative_of_tip_position() {
    for p in variants() {
        for s in states(&p, 1) {
            for foot in Foot::all() {
                let fd = (tip_position(&shifted(&s, &s.qd, H), &p, foot)
                    - tip_position(&shifted(&s, &s.qd, -H), &p, foot))
                    / (2.0 * H);
                let v = vcrw_core::model::tip_velocity(&s, &p, foot);
                assert!((fd - v).norm() < 1e-8, "{foot}: {fd} vs {v}");
            }
        }
    }
}

#[test]
fn spring_length_rate_matches_finite_difference() {
    for p in variants() {
        for s in states(&p, 2) {
            let g = spring_geometry(&s, &p).unwrap();
            let plus = spring_geometry(&shifted(&s, &s.qd, H), &p).unwrap();
            let minus = spring_geometry(&shifted(&s, &s.qd, -H), &p).unwrap();
            for j in 0..g.len() {
                let fd = (plus[j].length - minus[j].length) / (2.0 * H);
                assert!((fd - g[j].length_rate).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn gravity_gradient_matches_potential() {
    for p in variants() {
        for s in states(&p, 3) {
            let fd = fd_gradient(&s, |x| gravity_potential(x, &p));
            assert_close(&gravity_gradient(&s, &p).unwrap(), &fd, 1e-8, "gravity");
        }
    }
}

#[test]
fn elastic_gradient_matches_potential() {
    for p in variants() {
        for s in states(&p, 4) {
            let fd = fd_gradient(&s, |x| elastic_potential(x, &p).unwrap());
            assert_close(&elastic_gradient(&s, &p).unwrap(), &fd, 1e-7, "elastic");
        }
    }
}

#[test]
fn damping_gradient_is_the_velocity_gradient_of_rayleigh() {
    for p in variants() {
        for s in states(&p, 5) {
            let n = s.qd.len();
            let fd = DVector::from_fn(n, |i, _| {
                let at = |h: f64| {
                    let mut x = s.clone();
                    x.qd[i] += h;
                    rayleigh_dissipation(&x, &p).unwrap()
                };
                (at(H) - at(-H)) / (2.0 * H)
            });
            assert_close(&damping_gradient(&s, &p).unwrap(), &fd, 1e-7, "damping");
        }
    }
}

/// Stacked position-level constraint functions whose derivatives are the
/// Jacobian rows, in the same row order.
fn constraint_positions(s: &GeneralizedState, p: &ModelParams, mode: ContactMode) -> DVector<f64> {
    let mut out = Vec::new();
    for foot in mode.feet() {
        let tip = tip_position(s, p, foot);
        out.push(tip.x);
        out.push(tip.y);
    }
    for (a, b) in [(0, 2), (1, 3)] {
        out.push(s.center(a).x - s.center(b).x);
        out.push(s.center(a).y - s.center(b).y);
    }
    if p.variant.has_rotation_lock() {
        out.push(s.theta(0) - s.theta(2));
        out.push(s.theta(1) - s.theta(3));
    }
    if p.variant.has_upper_body() {
        let com = s.center(UPPER_BODY);
        let pin = s.center(0) + p.upper_body_com_offset() * upper_body_axis(s.q[UPPER_BODY_ANGLE]);
        out.push(com.x - pin.x);
        out.push(com.y - pin.y);
    }
    DVector::from_vec(out)
}

fn modes() -> Vec<ContactMode> {
    Foot::all()
        .flat_map(|f| [ContactMode::Single(f), ContactMode::double(f)])
        .collect()
}

#[test]
fn constraint_jacobian_matches_position_constraints() {
    for p in variants() {
        let s = &states(&p, 6)[0];
        for mode in modes() {
            let cs = constraint_set(mode, s, &p).unwrap();
            let n = s.q.len();
            let mut fd = DMatrix::zeros(cs.len(), n);
            for i in 0..n {
                let e = unit(n, i);
                let col = (constraint_positions(&shifted(s, &e, H), &p, mode)
                    - constraint_positions(&shifted(s, &e, -H), &p, mode))
                    / (2.0 * H);
                fd.set_column(i, &col);
            }
            let err = (&cs.jacobian - &fd).amax();
            assert!(err < 1e-8, "{} {mode}: {err:e}", p.variant);
        }
    }
}

#[test]
fn jacobian_rate_matches_finite_difference_along_the_motion() {
    for p in variants() {
        for s in states(&p, 7) {
            for mode in modes() {
                let cs = constraint_set(mode, &s, &p).unwrap();
                let jp = constraint_set(mode, &shifted(&s, &s.qd, H), &p).unwrap().jacobian;
                let jm = constraint_set(mode, &shifted(&s, &s.qd, -H), &p).unwrap().jacobian;
                let fd = (jp - jm) * &s.qd / (2.0 * H);
                assert_close(&cs.rate_term(&s.qd), &fd, 1e-7, "J̇ q̇");
            }
        }
    }
}

#[test]
fn upper_body_gravity_acts_at_its_center_of_mass() {
    let p = ModelParams::level_assisted();
    let s = &states(&p, 8)[0];
    let g = gravity_gradient(s, &p).unwrap();
    // level ground: only vertical terms, weight on each body
    assert!(g.iter().step_by(3).all(|&x| x == 0.0));
    assert!((g[3 * UPPER_BODY + 1] - p.upper_body.mass * p.gravity).abs() < 1e-12);
    assert_eq!(g[UPPER_BODY_ANGLE], 0.0);
}

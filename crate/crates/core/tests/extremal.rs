use geoctl::extremal::*;
use geoctl::geomkernel::{parse_field, PhasePoint};
use geoctl::ode::OdeOptions;
use geoctl::Error;

fn model(b: f64, b1: f64, c: f64, bound: ControlBound) -> AffineControlSystem {
    let vars = ["x", "y", "z"];
    let x = parse_field(
        &["y + z^2", &format!("{b} + {b1}*z"), &format!("{c}")],
        &vars,
    )
    .unwrap();
    let y = parse_field(&["0", "0", "1"], &vars).unwrap();
    AffineControlSystem::new(x, y, bound).unwrap()
}

fn revolution(mu: &str) -> AffineControlSystem {
    let vars = ["r", "theta", "alpha"];
    let x = parse_field(&["cos(alpha)", &format!("{mu} + sin(alpha)"), "0"], &vars).unwrap();
    let y = parse_field(&["0", "0", "1"], &vars).unwrap();
    AffineControlSystem::new(x, y, ControlBound::Unit).unwrap()
}

#[test]
fn singular_control_examples() {
    let sys = model(1.0, 1.0, 0.0, ControlBound::Unit);
    let sc = singular_control(&sys, &[0.0, 0.0, 0.0]).unwrap();
    assert!((sc.u - 0.5).abs() < 1e-14 && !sc.saturating);

    let rev = revolution("r");
    let sc = singular_control(&rev, &[0.3, 0.0, std::f64::consts::FRAC_PI_2]).unwrap();
    assert!((sc.u - 1.0).abs() < 1e-14 && sc.saturating);
    let sc = singular_control(&rev, &[0.3, 0.0, 0.0]).unwrap();
    assert!(sc.u.abs() < 1e-14);
}

#[test]
fn degenerate_d_is_an_error() {
    let vars = ["x", "y", "z"];
    let x = parse_field(&["z", "0", "0"], &vars).unwrap();
    let y = parse_field(&["0", "0", "1"], &vars).unwrap();
    let sys = AffineControlSystem::new(x, y, ControlBound::Unit).unwrap();
    assert!(matches!(singular_control(&sys, &[0.1, 0.2, 0.3]), Err(Error::DegenerateD { .. })));
    assert!(matches!(
        singular_flow(&sys, &[0.1, 0.2, 0.3], (0.0, 1.0), &OdeOptions::default()),
        Err(Error::DegenerateD { .. })
    ));
}

#[test]
fn singular_flow_tracks_singular_surface() {
    let sys = model(1.0, 1.0, 0.0, ControlBound::Unit);
    let tr = singular_flow(&sys, &[0.0, 0.0, 0.0], (0.0, -0.3), &OdeOptions::default()).unwrap();
    assert_eq!(tr.stop, FlowStop::Completed);
    let q = tr.solution.at(-0.2);
    assert!((q[2] + 0.1).abs() < 0.01);
    // Closed-form singular surface of the model.
    let t: f64 = -0.2;
    assert!((q[0] - (t * t / 2.0 + t.powi(3) / 6.0)).abs() < 1e-9);
    assert!((q[1] - (t + t * t / 4.0)).abs() < 1e-9);
}

#[test]
fn singular_flow_stops_at_saturation() {
    // u_s = b1/2 - c = 0.5 + 0.8: already saturating.
    let sys = model(1.0, 1.0, -0.8, ControlBound::Unit);
    assert!(matches!(
        singular_flow(&sys, &[0.0, 0.0, 0.0], (0.0, 1.0), &OdeOptions::default()),
        Err(Error::SaturationReached(_))
    ));
    // Unbounded control never saturates; symmetric field u_s = 0 reduces to X.
    let sym = model(1.0, 0.0, 0.0, ControlBound::Unbounded);
    let d = sym.table(&[0.0, 0.0, 0.0]).unwrap().d;
    assert_eq!(d, 0.0);
}

#[test]
fn first_switch_matches_leading_time() {
    let sys = model(1.0, 1.0, 0.0, ControlBound::Unit);
    let z0 = PhasePoint::new(vec![0.0, 0.1, 0.06], vec![1.0, 0.0, 0.0]);
    let flow = extremal_flow(&sys, &z0, (0.0, -1.0), &ExtremalOptions::default()).unwrap();
    assert_eq!(flow.arcs[0].kind, ArcKind::BangPlus);
    let t1 = flow.switches[0].t;
    assert!((t1 + 0.24).abs() < 1e-9, "{t1}");
    assert!(flow.switches[0].h_y.abs() <= 1e-9);
    assert!(flow.max_drift() <= 1e-8);
    for s in &flow.switches {
        assert_eq!(s.kind, SwitchKind::Ordinary);
    }
}

#[test]
fn zero_current_lift_has_no_switch() {
    let vars = ["x", "y", "alpha"];
    let x = parse_field(&["cos(alpha)", "sin(alpha)", "0"], &vars).unwrap();
    let y = parse_field(&["0", "0", "1"], &vars).unwrap();
    let sys = AffineControlSystem::new(x, y, ControlBound::Unit).unwrap();
    let z0 = PhasePoint::new(vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.5]);
    let flow = extremal_flow(&sys, &z0, (0.0, 1.0), &ExtremalOptions::default()).unwrap();
    assert!(flow.switches.is_empty());
    assert!(flow.max_drift() <= 1e-8);
}

#[test]
fn classify_points_of_revolution_case() {
    let rev = revolution("r");
    let pi2 = std::f64::consts::FRAC_PI_2;
    assert_eq!(classify_point(&rev, &[-1.0, 0.0, pi2], 1e-12).unwrap(), PointClass::Exceptional);
    assert_eq!(classify_point(&rev, &[0.0, 0.0, 0.0], 1e-12).unwrap(), PointClass::Hyperbolic);
    // D'' = r sin(alpha) + 1 < 0 past the exceptional point.
    assert_eq!(classify_point(&rev, &[-2.0, 0.0, pi2], 1e-12).unwrap(), PointClass::Elliptic);
}

#[test]
fn legendre_clebsch_revolution() {
    let rev = revolution("r");
    let z = PhasePoint::new(vec![0.2, 0.0, 0.0], vec![1.0, 0.0, 0.0]);
    assert!((legendre_clebsch(&rev, &z).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn singular_extremal_keeps_constraints() {
    let sys = model(1.0, 1.0, 0.0, ControlBound::Unit);
    let q0 = vec![0.0, 0.05, 0.01];
    let p0 = constraint_covector(&sys, &q0).unwrap();
    let arc = singular_extremal(&sys, &PhasePoint::new(q0, p0), (0.0, -0.3), &ExtremalOptions::default()).unwrap();
    assert_eq!(arc.kind, ArcKind::Singular);
    for s in &arc.samples {
        let z = PhasePoint::new(s.q.clone(), s.p.clone());
        assert!(sys.h_y(&z).unwrap().abs() <= 1e-7);
        assert!(sys.h_yx(&z).unwrap().abs() <= 1e-7);
    }
    assert!(arc.m_drift <= 1e-8);
}

fn xs_gap(sys: &AffineControlSystem, phi: &Diffeo, fb: &Feedback, pts: &[Vec<f64>]) -> f64 {
    let conj = conjugate_system(sys, phi, fb, &WorkBox::cube(3, 0.5)).unwrap();
    let mut worst: f64 = 0.0;
    for q in pts {
        let xs = sys.singular_field().unwrap().eval(q).unwrap();
        let lhs = phi.pushforward(q, &xs).unwrap();
        let rhs = conj.singular_field().unwrap().eval(&phi.apply(q).unwrap()).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[test]
fn covariance_identity_linear_and_reflection() {
    let sys = model(1.0, 1.0, 0.0, ControlBound::Unit);
    let vars = ["x", "y", "z"];
    let pts: Vec<Vec<f64>> = (0..20)
        .map(|k| {
            let t = k as f64 / 20.0;
            vec![0.3 * (t - 0.5), 0.2 * (1.0 - 2.0 * t), 0.25 * (3.0 * t).sin()]
        })
        .collect();
    let id = Diffeo::identity(&vars);
    assert!(xs_gap(&sys, &id, &Feedback::trivial(), &pts) <= 1e-12);

    let lin = Diffeo {
        forward: parse_field(&["2*x", "y + x", "z"], &vars).unwrap(),
        inverse: parse_field(&["x/2", "y - x/2", "z"], &vars).unwrap(),
    };
    assert!(xs_gap(&sys, &lin, &Feedback::trivial(), &pts) <= 1e-6);
    assert!(xs_gap(&sys, &id, &Feedback::reflection(), &pts) <= 1e-12);

    // u -> -u keeps X and negates Y.
    let refl = conjugate_system(&sys, &id, &Feedback::reflection(), &WorkBox::cube(3, 0.5)).unwrap();
    let q = [0.1, 0.2, 0.3];
    assert_eq!(refl.y().eval(&q).unwrap(), vec![0.0, 0.0, -1.0]);
    assert_eq!(refl.x().eval(&q).unwrap(), sys.x().eval(&q).unwrap());
}

#[test]
fn non_invertible_phi_rejected() {
    let sys = model(1.0, 1.0, 0.0, ControlBound::Unit);
    let vars = ["x", "y", "z"];
    let bad = Diffeo {
        forward: parse_field(&["x^2", "y", "z"], &vars).unwrap(),
        inverse: parse_field(&["sqrt(x)", "y", "z"], &vars).unwrap(),
    };
    assert!(conjugate_system(&sys, &bad, &Feedback::trivial(), &WorkBox::cube(3, 0.5)).is_err());
}

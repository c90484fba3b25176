use geoctl::cusp::*;
use geoctl::extremal::ArcClass;
use geoctl::ode::{integrate, OdeOptions};
use geoctl::zermelo::*;
use geoctl::Error;

fn eq8_through_origin(span: f64) -> geoctl::ode::Solution {
    let f = historical_truncated_flow();
    let opts = OdeOptions::default();
    let back = integrate(|_, q, d| f.eval_into(q, d), 0.0, &[0.0, 0.0, 0.0], -span, &opts, &mut []).unwrap();
    integrate(|_, q, d| f.eval_into(q, d), -span, back.y_end(), span, &opts, &mut []).unwrap()
}

#[test]
fn historical_cusp_is_detected_at_origin() {
    let sol = eq8_through_origin(0.5);
    let f = historical_truncated_flow();
    let hits = detect_on_solution(&f, &sol, 1001, 1e-6).unwrap();
    assert_eq!(hits.len(), 1);
    assert!(hits[0].0.abs() < 1e-6);
    assert!(hits[0].1[0].abs() < 1e-9 && hits[0].1[1].abs() < 1e-9);
}

#[test]
fn historical_cusp_jet() {
    let r = classify_flow(&historical_truncated_flow(), &[0.0, 0.0, 0.0], 1e-8, &OdeOptions::default()).unwrap();
    assert_eq!(r.kind, CuspKind::Semicubical);
    let j = r.jet.unwrap();
    assert!((j.c_p + 0.5).abs() <= 0.02 * 0.5, "{j:?}");
    assert!((j.c_q + 1.0 / 3.0).abs() <= 0.02 / 3.0, "{j:?}");
    assert!((r.alpha_rate + 1.0).abs() < 1e-15);
}

#[test]
fn jet_orders_survive_time_rescaling() {
    let f = historical_truncated_flow();
    let fast = f.scale(&geoctl::Expr::constant(2.0));
    let r = classify_flow(&fast, &[0.0, 0.0, 0.0], 1e-8, &OdeOptions::default()).unwrap();
    assert_eq!(r.kind, CuspKind::Semicubical);
}

#[test]
fn goh_cusp_of_seminormal_problem() {
    let mut c = SemiNormalCoeffs::default();
    c.a.c01 = 2.0;
    let sys = build_seminormal(&c, 2).unwrap().goh_extend().unwrap();
    let r = classify_cusp(&sys, &[0.0, 0.0, 0.0], &OdeOptions::default()).unwrap();
    assert_eq!(r.kind, CuspKind::Semicubical);
    let j = r.jet.unwrap();
    // y ~ delta t^2 / 2, x ~ -delta^2 t^3 / 3 with delta = 1.
    assert!((j.c_p - 0.5).abs() < 0.01 && (j.c_q + 1.0 / 3.0).abs() < 0.01, "{j:?}");
    assert!((r.alpha_rate - c.delta()).abs() < 1e-12);
}

#[test]
fn equilibrium_spectra() {
    for (c01, k2, real) in [(2.0, 1.0, true), (0.0, 4.0, false)] {
        let mut c = SemiNormalCoeffs::default();
        c.c.c01 = c01;
        c.a.c02 = -k2;
        assert!((c.kappa2() - k2).abs() < 1e-15);
        let sys = build_seminormal(&c, 2).unwrap().goh_extend().unwrap();
        let r = classify_cusp(&sys, &[0.0, 0.0, 0.0], &OdeOptions::default()).unwrap();
        assert_eq!(r.kind, CuspKind::Equilibrium);
        let lam: f64 = c01 * c01 - k2;
        let mut got = r.spectrum.clone();
        got.sort_by(|a, b| (a.re + a.im).partial_cmp(&(b.re + b.im)).unwrap());
        let g = lam.abs().sqrt();
        let want = if real { [(-g, 0.0), (0.0, 0.0), (g, 0.0)] } else { [(0.0, -g), (0.0, 0.0), (0.0, g)] };
        for (z, w) in got.iter().zip(want) {
            assert!((z.re - w.0).abs() < 1e-8 && (z.im - w.1).abs() < 1e-8, "{got:?}");
        }
    }
}

#[test]
fn synthetic_ramphoid_and_failure() {
    let r = fit_jet(|t| Ok([t * t, t.powi(4) + t.powi(5)])).unwrap();
    assert_eq!((r.p, r.q), (2, 4));
    // Normal is the tangent rotated clockwise: (0, -1).
    assert!((r.c_p - 1.0).abs() < 1e-8 && (r.c_q + 1.0).abs() < 1e-6, "{r:?}");
    // Tangent direction is flipped so its dominant component is positive.
    let r = fit_jet(|t| Ok([-t.powi(3), -t * t])).unwrap();
    assert_eq!((r.p, r.q), (2, 3));
    assert!(r.tangent[0].abs() < 1e-12 && (r.tangent[1] - 1.0).abs() < 1e-12);
    // |t|^(5/2) has no integer order.
    assert!(matches!(
        fit_jet(|t| Ok([t * t, t.abs().powf(2.5)])),
        Err(Error::FitFailure(_))
    ));
}

#[test]
fn weak_and_hyperbolic_arcs_are_immersed() {
    let h = ZermeloProblem::historical();
    let goh = h.goh_extend().unwrap();
    let xs = goh.singular_field().unwrap().clone();
    // Weak current |y| < 1 all along.
    let sol = integrate(|_, q, d| xs.eval_into(q, d), 0.0, &[0.0, 0.2, 0.3], 0.5, &OdeOptions::default(), &mut []).unwrap();
    assert!(sol.y.iter().all(|q| q[1].abs() < 1.0));
    assert!(detect_on_solution(&xs, &sol, 501, 1e-6).unwrap().is_empty());

    // Hyperbolic extremal near the boundary |y| = 1.
    let arc = direct_extremal(&h, [0.0, -0.95], [0.0, 1.0], (0.0, 1.0), &OdeOptions::default()).unwrap();
    assert_eq!(arc.klass, ArcClass::Hyperbolic);
    let sol = arc.solution.as_ref().unwrap();
    let speed = |t: f64| -> geoctl::Result<f64> {
        let z = sol.at(t);
        let (b, c) = (z[1], 0.0);
        let (h1, h2) = (z[2], z[3]);
        let r = h1.hypot(h2);
        Ok((b + h1 / r).hypot(c + h2 / r))
    };
    let times: Vec<f64> = (0..=500).map(|k| k as f64 / 500.0).collect();
    assert!(detect_nonimmersion(speed, &times, 1e-6).unwrap().is_empty());
}

#[test]
fn gap_is_positive_and_homogeneous() {
    let r = value_gap(-1.0, -0.5, 1.0).unwrap();
    let s = value_gap(-3.0, -1.5, 1.0).unwrap();
    assert!((s.t1 - 3.0 * r.t1).abs() < 1e-13 && (s.gap - 3.0 * r.gap).abs() < 1e-13);
    // Limit t2 -> t0 = -1.
    let r = value_gap(-1.0, -1.0 + 1e-12, 1.0).unwrap();
    assert!((r.t1 + 2.0 * 3f64.sqrt()).abs() < 1e-9 && (r.gap - 2.0 * 3f64.sqrt()).abs() < 1e-9);
}

#[test]
fn matching_residual_small_and_high_order() {
    let mut c = SemiNormalCoeffs::default();
    c.a.c01 = 2.0;
    let opts = OdeOptions::default();
    let r1 = matching_residual(&c, -0.1, -0.05, &opts).unwrap();
    let r2 = matching_residual(&c, -0.05, -0.025, &opts).unwrap();
    assert!(r1 <= 5e-4, "{r1}");
    assert!(r1 / r2 >= 4.0, "{}", r1 / r2);
    assert!(matching_residual(&c, -0.1, -0.1, &opts).is_err());
}

use geoctl::extremal::{constraint_covector, singular_control, singular_extremal, ExtremalOptions};
use geoctl::geomkernel::PhasePoint;
use geoctl::mckeithan::*;
use geoctl::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn factorized() -> McKeithanParams {
    McKeithanParams {
        beta: [0.0, 0.0, 0.7],
        alpha: [1.0, 1.0, 1.0],
        delta: [1.0, 2.0],
        d: 0.3,
    }
}

fn generic() -> McKeithanParams {
    McKeithanParams {
        beta: [0.5, 0.3, 0.4],
        alpha: [1.0, 2.0, 1.5],
        delta: [1.0, 2.0],
        d: 0.3,
    }
}

/// `alpha2 = 1/2`, `alpha3 = 2` admits points with `x' = dx'/dv = 0`.
fn fractional() -> McKeithanParams {
    McKeithanParams {
        beta: [0.4, 0.5, 0.3],
        alpha: [0.5, 2.0, 1.0],
        delta: [1.0, 2.0],
        d: 0.3,
    }
}

fn xdot_closed(p: &McKeithanParams, q: &[f64; 3]) -> f64 {
    let [x, y, v] = *q;
    let s = x + y;
    -p.beta[0] * x * v.powf(p.alpha[0]) - p.beta[1] * x * v.powf(p.alpha[1]) - p.delta3() * v * s
        + p.delta4() * v
        + v * s * s
}

fn xdot_dv_closed(p: &McKeithanParams, q: &[f64; 3]) -> f64 {
    let [x, y, v] = *q;
    let s = x + y;
    let [a2, a3, _] = p.alpha;
    -p.beta[0] * x * a2 * v.powf(a2 - 1.0) - p.beta[1] * x * a3 * v.powf(a3 - 1.0) - p.delta3() * s
        + p.delta4()
        + s * s
}

#[test]
fn dynamics_examples() {
    let p = factorized();
    let v = reduced_dynamics(&p, &[0.2, 0.3, 0.0]).unwrap();
    assert_eq!(v, [0.0, 0.0, 0.0]);
    let v = reduced_dynamics(&generic(), &[0.2, 0.3, 0.0]).unwrap();
    assert_eq!(v, [0.0, 0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let q = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..3.0)];
        let f = reduced_dynamics(&p, &q).unwrap();
        let s = q[0] + q[1];
        let expect = q[2] * (s - 1.0) * (s - 2.0);
        assert!((f[0] - expect).abs() <= 1e-13 * (1.0 + expect.abs()));
    }
}

#[test]
fn factorized_locus_branches() {
    let p = factorized();
    let grid = TargetGrid::over_box(&p, 1.0, 101);
    let pts = exceptional_locus_on_target(&p, &grid).unwrap();
    let on_axis = pts.iter().filter(|q| q.v == 0.0).count();
    assert_eq!(on_axis, 101);
    let mut hits = [0usize; 2];
    for q in pts.iter().filter(|q| q.v > 0.0) {
        let e0 = (q.y - 0.7).abs();
        let e1 = (q.y - 1.7).abs();
        assert!(e0.min(e1) <= 1e-10, "stray locus point {q:?}");
        hits[usize::from(e1 < e0)] += 1;
    }
    assert!(hits[0] >= 100 && hits[1] >= 100, "{hits:?}");
}

#[test]
fn generic_locus_residual() {
    for p in [generic(), fractional()] {
        let grid = TargetGrid::over_box(&p, 2.0, 61);
        let pts = exceptional_locus_on_target(&p, &grid).unwrap();
        assert!(pts.iter().any(|q| q.v > 0.0));
        for q in &pts {
            assert!(q.n_x.abs() <= 1e-10, "{q:?}");
            let r = xdot_closed(&p, &[p.d, q.y, q.v]);
            assert!(r.abs() <= 1e-10);
        }
    }
}

#[test]
fn bracket_projection_is_minus_v_partial() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for p in [generic(), fractional()] {
        let sys = affine_lift(&p).unwrap();
        let yx = sys.bracket_yx().unwrap();
        for _ in 0..100 {
            let q = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0), rng.gen_range(0.05..3.0)];
            let dv = xdot_dv_closed(&p, &q);
            let b = yx.eval(&q).unwrap();
            assert!((b[0] + dv).abs() <= 1e-9 * (1.0 + dv.abs()), "{} vs {}", b[0], -dv);
            assert_eq!(b[2], 0.0);
        }
    }
}

#[test]
fn determinants_finite_inside() {
    let sys = affine_lift(&generic()).unwrap();
    for q in [[0.2, 0.5, 0.7], [0.8, 1.5, 2.0], [0.3, 0.1, 0.05]] {
        let t = sys.table(&q).unwrap();
        assert!(t.d.is_finite() && t.d_prime.is_finite() && t.d_second.is_finite());
    }
}

#[test]
fn singular_arcs_stay_on_constraint_set() {
    let sys = affine_lift(&generic()).unwrap();
    let mut start = None;
    'scan: for i in 1..10 {
        for j in 1..10 {
            for k in 1..10 {
                let q = vec![0.1 * i as f64, 0.2 * j as f64, 0.3 * k as f64];
                if let Ok(sc) = singular_control(&sys, &q) {
                    if sc.u.abs() < 0.5 {
                        start = Some(q);
                        break 'scan;
                    }
                }
            }
        }
    }
    let q = start.expect("a point with |u_s| < 1/2");
    let p = constraint_covector(&sys, &q).unwrap();
    let z0 = PhasePoint::new(q, p);
    let arc = singular_extremal(&sys, &z0, (0.0, 0.2), &ExtremalOptions::default()).unwrap();
    assert!(arc.samples.len() > 5);
    for s in &arc.samples {
        let z = PhasePoint::new(s.q.clone(), s.p.clone());
        assert!(sys.h_y(&z).unwrap().abs() <= 1e-7);
        assert!(sys.h_yx(&z).unwrap().abs() <= 1e-7);
    }
}

#[test]
fn ordinary_and_bang_exceptional() {
    let p = generic();
    let c = classify_terminal_point(&p, 0.2, 0.5, 1e-9).unwrap();
    assert_eq!(c.tag, TerminalTag::Ordinary);
    assert!(c.n_x.abs() > 1e-3);

    let grid = TargetGrid::over_box(&p, 2.0, 41);
    let pts = exceptional_locus_on_target(&p, &grid).unwrap();
    let mut bang = 0;
    for q in pts.iter().filter(|q| q.v > 0.05) {
        let c = classify_terminal_point(&p, q.y, q.v, 1e-9).unwrap();
        if matches!(c.tag, TerminalTag::BangExceptionalCodim1 { .. } | TerminalTag::BangExceptionalCodim2) {
            bang += 1;
            assert!(c.n_yx.abs() > 1e-9);
            assert!(c.det_xy_yx.unwrap().abs() > 1e-9);
        }
    }
    assert!(bang > 10, "{bang}");
}

#[test]
fn factorized_locus_is_degenerate() {
    // x' = v P(x + y): on the locus dx'/dv vanishes too and Y, [Y,X],
    // [Y,[Y,X]] all lie in the (y, v) plane.
    let p = factorized();
    let c = classify_terminal_point(&p, 0.7, 0.5, 1e-9).unwrap();
    assert!(matches!(c.tag, TerminalTag::Degenerate { .. }), "{:?}", c.tag);
}

#[test]
fn singular_exceptional_point() {
    let p = fractional();
    let v = (p.beta[0] / (2.0 * p.beta[1])).powf(2.0 / 3.0);
    let g = p.beta[0] * p.d / v.sqrt() + p.beta[1] * p.d * v;
    let disc = p.delta3().powi(2) - 4.0 * (p.delta4() - g);
    let roots: Vec<f64> = [1.0, -1.0]
        .iter()
        .map(|sg| 0.5 * (p.delta3() + sg * disc.sqrt()) - p.d)
        .filter(|y| (0.0..=p.delta[1]).contains(y))
        .collect();
    assert!(!roots.is_empty());
    let grid = TargetGrid::over_box(&p, 2.0, 81);
    let found = singular_exceptional_points(&p, &grid).unwrap();
    for &y in &roots {
        assert!(
            found.iter().any(|f| (f[0] - y).abs() < 1e-9 && (f[1] - v).abs() < 1e-9),
            "{found:?} vs ({y}, {v})"
        );
        let c = classify_terminal_point(&p, y, v, 1e-8).unwrap();
        match c.tag {
            TerminalTag::SingularExceptional { case_id, model } => {
                assert!((1..=6).contains(&case_id));
                assert_eq!(model.c, 0.0);
            }
            other => panic!("expected singular exceptional, got {other:?}"),
        }
        assert!(c.n_yx.abs() < 1e-8);
    }
}

#[test]
fn nondifferentiable_on_rate_axis() {
    let p = fractional();
    let c = classify_terminal_point(&p, 0.5, 0.0, 1e-9).unwrap();
    assert!(matches!(c.tag, TerminalTag::NonDifferentiable { .. }), "{:?}", c.tag);
    let c = classify_terminal_point(&generic(), 0.5, 0.0, 1e-9).unwrap();
    assert!(!matches!(c.tag, TerminalTag::NonDifferentiable { .. }));
}

#[test]
fn labels_stable_under_small_perturbations() {
    let p = generic();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = TargetGrid::over_box(&p, 2.0, 21);
    let pts = exceptional_locus_on_target(&p, &grid).unwrap();
    for q in pts.iter().filter(|q| q.v > 0.05) {
        let base = classify_terminal_point(&p, q.y, q.v, 1e-6).unwrap();
        let dy = rng.gen_range(-1e-8..1e-8);
        let dv = rng.gen_range(-1e-8..1e-8);
        let pert = classify_terminal_point(&p, q.y + dy, q.v + dv, 1e-6).unwrap();
        assert_eq!(base.tag.label(), pert.tag.label());
    }
    for _ in 0..50 {
        let (y, v) = (rng.gen_range(0.0..2.0), rng.gen_range(0.1..2.0));
        let base = classify_terminal_point(&p, y, v, 1e-9).unwrap();
        if base.n_x.abs() > 1e-6 {
            let pert = classify_terminal_point(&p, y + 1e-8, v - 1e-8, 1e-9).unwrap();
            assert_eq!(base.tag.label(), pert.tag.label());
        }
    }
}

#[test]
fn invalid_inputs() {
    let mut p = generic();
    p.alpha[1] = 0.0;
    assert!(matches!(p.validate(), Err(Error::InvalidInput(_))));
    let p = generic();
    assert!(classify_terminal_point(&p, 2.5, 0.1, 1e-9).is_err());
    let bad = TargetGrid { ny: 1, ..TargetGrid::over_box(&p, 1.0, 5) };
    assert!(exceptional_locus_on_target(&p, &bad).is_err());
}

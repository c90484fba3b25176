use geoctl::extremal::{singular_flow, ArcClass};
use geoctl::numeric::golden_min;
use geoctl::ode::OdeOptions;
use geoctl::zermelo::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn goh_examples() {
    let zero = ZermeloProblem::parse("1", "0", "0").unwrap().goh_extend().unwrap();
    let x = zero.x().eval(&[0.0, 0.0, 0.4]).unwrap();
    assert!((x[0] - 0.4f64.cos()).abs() < 1e-15 && (x[1] - 0.4f64.sin()).abs() < 1e-15);

    let rev = RevolutionProblem::parse("1 + r^2/4", "r").unwrap().goh_extend().unwrap();
    let (r, a) = (0.6f64, 1.1f64);
    let x = rev.x().eval(&[r, 0.0, a]).unwrap();
    assert!((x[0] - a.cos()).abs() < 1e-15);
    assert!((x[1] - (r + a.sin() / (1.0 + r * r / 4.0))).abs() < 1e-15);
}

#[test]
fn collinear_residual_examples() {
    let h = ZermeloProblem::historical();
    assert!(collinear_residual(&h, &[0.0, -1.0], 0.0).unwrap().abs() < 1e-15);
    for a in [0.0, 1.0, 2.5] {
        assert!((collinear_residual(&h, &[0.0, 0.0], a).unwrap() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn regime_consistency_on_grid() {
    let p = ZermeloProblem::parse("1 + x^2", "y", "0.3*x").unwrap();
    for i in 0..21 {
        for j in 0..21 {
            let q = [-1.0 + 0.1 * i as f64, -1.5 + 0.15 * j as f64];
            let (_, n) = current_regime(&p, &q).unwrap();
            let step = std::f64::consts::TAU / 360.0;
            let best = (0..360)
                .map(|k| k as f64 * step)
                .min_by(|a, b| {
                    let fa = collinear_residual(&p, &q, *a).unwrap();
                    let fb = collinear_residual(&p, &q, *b).unwrap();
                    fa.partial_cmp(&fb).unwrap()
                })
                .unwrap();
            let (_, min) =
                golden_min(|a| collinear_residual(&p, &q, a), best - step, best + step, 1e-12).unwrap();
            // min over alpha of |F0 + e(alpha)| is | |F0| - 1 | in Euclidean units scaled by a^{-1/2}.
            let a = 1.0 + q[0] * q[0];
            assert!((min - (n - 1.0).abs() / a.sqrt()).abs() < 1e-8, "{q:?}");
        }
    }
}

#[test]
fn straight_lines_without_current() {
    let p = ZermeloProblem::parse("1", "0", "0").unwrap();
    let arc = direct_extremal(&p, [0.0, 0.0], [0.6, 0.8], (0.0, 1.0), &OdeOptions::default()).unwrap();
    assert_eq!(arc.klass, ArcClass::Hyperbolic);
    assert!((arc.m - 1.0).abs() < 1e-15);
    let end = arc.samples.last().unwrap();
    assert!((end.q[0] - 0.6).abs() < 1e-10 && (end.q[1] - 0.8).abs() < 1e-10);
}

#[test]
fn abnormal_level_is_kept() {
    let h = ZermeloProblem::historical();
    let q0 = [0.0, -2.0];
    let covs = abnormal_covectors(&h, &q0).unwrap();
    assert_eq!(covs.len(), 2);
    for p0 in covs {
        assert!(max_hamiltonian(&h, &q0, &p0).unwrap().abs() < 1e-12);
        let arc = direct_extremal(&h, q0, p0, (0.0, 1.0), &OdeOptions::default()).unwrap();
        assert_eq!(arc.klass, ArcClass::Exceptional);
        assert!(arc.samples.iter().all(|s| s.m.abs() <= 1e-8));
    }
}

#[test]
fn direct_and_goh_parameterizations_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = OdeOptions::default();
    let mut done = 0;
    while done < 20 {
        let (a1, b1, c1) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let p = ZermeloProblem::parse(&format!("1 + {a1}*x*y"), &format!("{b1}*y + 0.2"), &format!("{c1}*x")).unwrap();
        let q0 = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let p0 = [phi.cos(), phi.sin()];
        let arc = direct_extremal(&p, q0, p0, (0.0, 1.0), &opts).unwrap();
        let goh = p.goh_extend().unwrap();
        let Ok(tr) = singular_flow(&goh, &[q0[0], q0[1], arc.samples[0].alpha], (0.0, 1.0), &opts) else {
            continue;
        };
        if tr.solution.t_end() < 1.0 {
            continue;
        }
        for s in &arc.samples {
            let g = tr.solution.at(s.t);
            assert!((g[0] - s.q[0]).abs() <= 1e-6 && (g[1] - s.q[1]).abs() <= 1e-6, "t = {}", s.t);
        }
        assert!(arc.m_drift <= 1e-8);
        done += 1;
    }
}

#[test]
fn clairaut_relation() {
    let p = RevolutionProblem::parse("1 + r^2/4", "0.5*r - 0.2*r^2").unwrap();
    let arc = direct_extremal(&p, [0.3, 0.0], [0.4, -0.9], (0.0, 2.0), &OdeOptions::default()).unwrap();
    let (drift, eq) = clairaut_residual(&p, &arc).unwrap();
    assert!(drift <= 1e-8);
    assert!(eq <= 1e-6);

    let flat = RevolutionProblem::parse("1", "0").unwrap();
    let arc = direct_extremal(&flat, [0.0, 0.0], [0.0, 1.0], (0.0, 1.0), &OdeOptions::default()).unwrap();
    let (drift, eq) = clairaut_residual(&flat, &arc).unwrap();
    assert!(drift <= 1e-10 && eq <= 1e-10);
}

#[test]
fn seminormal_determinant_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let mut c = SemiNormalCoeffs::default();
        c.b.c10 = rng.gen_range(-0.5..0.5);
        c.a.c10 = 2.0 * c.b.c10;
        c.a.c01 = rng.gen_range(-1.0..1.0);
        c.b.c01 = rng.gen_range(-1.0..1.0);
        c.c.c10 = rng.gen_range(-1.0..1.0);
        c.c.c01 = rng.gen_range(-1.0..1.0);
        c.a.c11 = rng.gen_range(-1.0..1.0);
        c.b.c02 = rng.gen_range(-1.0..1.0);
        let sys = build_seminormal(&c, 2).unwrap().goh_extend().unwrap();
        let (d, dp, _) = sys.brackets().unwrap().determinant_exprs();
        let q = [0.0, 0.0, 0.0];
        assert!((d.eval(&q).unwrap() - 1.0).abs() < 1e-12);
        assert!((d.diff(1).eval(&q).unwrap() + c.a.c01).abs() < 1e-6);
        assert!((d.diff(0).eval(&q).unwrap() + 2.0 * c.b.c10).abs() < 1e-6);
        assert!((dp.eval(&q).unwrap() + c.delta()).abs() < 1e-9);
        let del = c.delta();
        let dy = 4.0 * c.a.c01 * del - 3.0 * del * del + c.kappa2();
        let dx = 5.0 * c.b.c10 * del + c.kappa1();
        assert!((dp.diff(1).eval(&q).unwrap() - dy).abs() < 1e-9);
        assert!((dp.diff(0).eval(&q).unwrap() - dx).abs() < 1e-9);
        assert!((dp.diff(2).eval(&q).unwrap() - c.c.c01).abs() < 1e-9);
    }
}

#[test]
fn flat_seminormal_is_unit_current() {
    let p = build_seminormal(&SemiNormalCoeffs::default(), 2).unwrap();
    for q in [[0.3, -0.2], [-0.9, 0.9], [0.0, 0.0]] {
        assert_eq!(current_regime(&p, &q).unwrap(), (Regime::Moderate, 1.0));
    }
}

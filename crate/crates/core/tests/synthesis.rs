use geoctl::extremal::singular_flow;
use geoctl::ode::OdeOptions;
use geoctl::synthesis::oracle::*;
use geoctl::synthesis::*;
use geoctl::Error;

fn case3() -> SingExcModel {
    SingExcModel::new(1.0, 1.0, 0.0)
}

#[test]
fn codim_cases() {
    assert_eq!(codim1_case(2.0, 1e-12).unwrap(), Codim1Case::Case1);
    assert_eq!(codim1_case(0.0, 1e-12).unwrap(), Codim1Case::Case2);
    assert!(matches!(codim1_case(1.0, 1e-12), Err(Error::Degenerate(_))));
    assert!(codim1_case(-1.5, 1e-12).is_err());

    let s = codim2_bang_synthesis(-1.0).unwrap();
    assert!(s.locally_controllable);
    assert_eq!(s.u_plus_region.as_deref(), Some("x < 0"));
    assert_eq!(s.sigma_minus_arrival.as_deref(), Some("(0, w, s < 0) or (0, w >= 0, s)"));
    assert!(!codim2_bang_synthesis(1.0).unwrap().locally_controllable);
    assert!(codim2_bang_synthesis(0.0).is_err());
}

#[test]
fn six_cases() {
    assert_eq!(sing_exc_case(&case3(), 1e-12).unwrap(), 3);
    assert_eq!(sing_exc_case(&SingExcModel::new(1.0, 8.0, 0.0), 1e-12).unwrap(), 1);
    assert_eq!(sing_exc_case(&SingExcModel::new(1.0, 4.0, 0.0), 1e-12).unwrap(), 2);
    assert_eq!(sing_exc_case(&SingExcModel::new(-1.0, 8.0, 0.0), 1e-12).unwrap(), 4);
    assert_eq!(sing_exc_case(&SingExcModel::new(-1.0, 4.0, 0.0), 1e-12).unwrap(), 5);
    assert_eq!(sing_exc_case(&SingExcModel::new(-1.0, 0.0, 0.0), 1e-12).unwrap(), 6);
    // u -> -u symmetry.
    assert_eq!(sing_exc_case(&SingExcModel::new(1.0, -1.0, 0.0), 1e-12).unwrap(), 3);
    assert!(sing_exc_case(&SingExcModel::new(1.0, 2.0, 0.0), 1e-12).is_err());
    assert!(sing_exc_case(&SingExcModel::new(1.0, 6.0, 0.0), 1e-12).is_err());
    assert!(sing_exc_case(&SingExcModel::new(0.0, 1.0, 0.0), 1e-12).is_err());
    assert!(sing_exc_case(&SingExcModel::new(1.0, 0.0, 0.0), 1e-12).is_err());
}

#[test]
fn switching_time_examples() {
    let t = switching_times(&case3(), 0.1, 0.06, 1.0).unwrap();
    assert!((t.t1 + 0.24).abs() < 1e-15);
    assert!((t.t2 + 0.2072).abs() < 1e-15);
    assert!((t.t3 + 0.072).abs() < 1e-15);
    let z = switching_times(&case3(), 0.0, 0.0, 1.0).unwrap();
    assert_eq!((z.t1, z.t2, z.t3), (0.0, 0.0, 0.0));
    assert!((switching_times(&case3(), 0.1, 0.06, -1.0).unwrap().t1 - 0.08).abs() < 1e-15);
    assert!(switching_times(&SingExcModel::new(1.0, 2.0, 0.0), 0.1, 0.06, 1.0).is_err());
}

#[test]
fn loci_examples() {
    let m = case3();
    let p = locus_switching(&m, 0.1, 0.06, -1.0).unwrap();
    assert!((p[2] + 0.02).abs() < 1e-15);
    assert!((p[1] - 0.1816).abs() < 1e-15);
    let p = locus_switching(&m, 0.1, 0.0, -1.0).unwrap();
    assert_eq!(p, [0.0, 0.1, 0.0]);

    let g = locus_singular(&m, -0.1, 0.0);
    assert!((g[0] - 0.0048333333333333).abs() < 1e-15);
    assert!((g[1] + 0.0975).abs() < 1e-15 && (g[2] + 0.05).abs() < 1e-15);
    assert_eq!(locus_singular(&m, 0.0, 0.3), [0.0, 0.3, 0.0]);

    let c = locus_splitting(&m, 0.1, 0.06).unwrap();
    assert!((c[2] + 0.012).abs() < 1e-15);
    assert!((c[1] - 0.026272).abs() < 1e-15);
    assert_eq!(locus_splitting(&m, 0.1, 0.0).unwrap(), [0.0, 0.1, 0.0]);
    assert!(locus_splitting(&SingExcModel::new(1.0, 6.0, 0.0), 0.1, 0.06).is_err());
}

#[test]
fn printed_x_components_agree_with_flow() {
    let m = SingExcModel::new(0.7, 1.3, 0.2);
    let (b, b1, c) = (m.b, m.b1, m.c);
    for (w, s) in [(0.1, 0.06), (-0.03, 0.02), (0.05, -0.04)] {
        for eps in [1.0, -1.0] {
            let nu1 = b1 - 2.0 * (c + eps);
            let x = 4.0 * s * (s * s * (8.0 * b1 * b1 + nu1 * nu1) + 3.0 * w * nu1 * nu1 + 6.0 * b * s * nu1)
                / (3.0 * nu1.powi(3));
            let p = locus_switching(&m, w, s, eps).unwrap();
            // The printed x-term differs from the flow at higher order only.
            assert!((p[0] - x).abs() < 10.0 * s.abs().powi(3) + 1e-12, "{} vs {x}", p[0]);
        }
        let nu2 = b1 - 2.0 * c - 6.0;
        let x = 6.0 * s * (w * nu2 * nu2 + 3.0 * b * s * nu2 + 2.0 * s * s * (b1 * c + b1 * (2.0 * b1 - 9.0) + 2.0 * c * c + 6.0))
            / nu2.powi(3);
        let p = locus_splitting(&m, w, s).unwrap();
        assert!((p[0] - x).abs() < 1e-15, "{} vs {x}", p[0]);
    }
}

#[test]
fn singular_locus_is_the_singular_flow() {
    let m = case3();
    let sys = m.system().unwrap();
    let tr = singular_flow(&sys, &[0.0, 0.02, 0.0], (0.0, -0.2), &OdeOptions::default()).unwrap();
    for t in [-0.05, -0.1, -0.2] {
        let q = tr.solution.at(t);
        let g = locus_singular(&m, t, 0.02);
        for i in 0..3 {
            assert!((q[i] - g[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn exceptional_parabola_and_singular_trace() {
    let m = case3();
    for s in [-0.2, -0.05, 0.0, 0.1] {
        assert_eq!(m.n_x(-s * s, s), 0.0);
        let x = m.drift(&[0.0, -s * s, s]);
        assert_eq!(x[0], 0.0);
    }
    assert_eq!(m.n_yx(0.3, 0.0), 0.0);
}

#[test]
fn stratify_spot_cells() {
    let m = case3();
    let g = stratify(&m, &GridSpec { w_min: 0.1, w_max: 0.1, s_min: 0.06, s_max: 0.06, n: 1 }).unwrap();
    let c = g.cells[0];
    assert_eq!(c.label, Stratum::Split);
    assert!((c.t_star + 0.072).abs() < 1e-15);
    assert_eq!(c.eps, 1);

    let g = stratify(&m, &GridSpec::square(0.2, 41)).unwrap();
    assert_eq!(g.case_id, Some(3));
    for c in &g.cells {
        if c.s == 0.0 {
            assert_eq!(c.label, Stratum::Singular);
        }
        if c.label != Stratum::None && c.label != Stratum::Singular {
            assert!(c.t_star < 0.0);
        }
    }
    // Parabola w + s^2 = 0 and line s = 0 separate the labels.
    let labels: std::collections::HashSet<_> = g.cells.iter().map(|c| c.label).collect();
    assert!(labels.contains(&Stratum::Switch) && labels.contains(&Stratum::Split) && labels.contains(&Stratum::Reintersect));
}

#[test]
fn event_times_match_exact_values() {
    let m = case3();
    let o = OracleOptions::default();
    let e = event_times(&m, 0.1, 0.06, 1.0, &o).unwrap();
    assert!((e.t1.unwrap() + 0.24).abs() < 1e-9);
    assert!((e.t3.unwrap() + 0.072).abs() < 1e-9);
    let t2 = e.t2.unwrap();
    assert!(((t2 + 0.2072) / t2).abs() <= 0.25);
    // Positive leading time: no backward switch.
    let e = event_times(&m, 0.1, 0.06, -1.0, &o).unwrap();
    assert!(e.t1.is_none());
}

#[test]
fn brute_force_round_trip() {
    let m = case3();
    let o = OracleOptions::default();
    assert_eq!(brute_force_min_time(&m, &[0.0, 0.1, 0.06], &o).unwrap().t_min, 0.0);
    let q = m.flow(&[0.0, 0.1, -0.06], -1.0, -0.05);
    let r = brute_force_min_time(&m, &q, &o).unwrap();
    assert!((r.t_min - 0.05).abs() <= 1e-4, "{r:?}");
    assert_eq!(r.policy.len(), 1, "{r:?}");
    assert_eq!(r.policy[0].0, PolicyArc::Minus);
}

#[test]
fn brute_force_dominates_single_bangs() {
    use rand::{Rng, SeedableRng};
    let m = case3();
    let o = OracleOptions { grid: 16, ..OracleOptions::default() };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let q = [rng.gen_range(-0.02..0.02), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
        let Ok(r) = brute_force_min_time(&m, &q, &o) else { continue };
        for u in [1.0, -1.0] {
            if let Some(t) = first_hit(&m, &q, u, o.horizon) {
                assert!(r.t_min <= t + 1e-12);
            }
        }
    }
}

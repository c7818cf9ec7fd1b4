use proptest::prelude::*;

use socheck::certify::{second_order_certificate, second_order_data, Mode, OracleChoice, ETA_EXACT};
use socheck::cones::{critical_at, enumerate_at, feasible_cone_membership, regular_at, DirectionConfig, PointContext};
use socheck::corpus::{corpus, corpus_functions};
use socheck::expr::{gradient_continuity_probe, BoxRegion, FunctionDef};
use socheck::linalg::{dot, norm};
use socheck::problem::PolyhedronSpec;
use socheck::raycalc::{default_eps_sequence, weak_dir2};
use socheck::sexpr::parse;
use socheck::subdiff::{estimate_subdiff2, SamplerConfig};

fn vec_in(n: usize, half: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-half..half, n)
}

fn func_and_point() -> impl Strategy<Value = (FunctionDef, Vec<f64>, Vec<f64>)> {
    let funcs = corpus_functions();
    (0..funcs.len()).prop_flat_map(move |i| {
        let f = funcs[i].clone();
        let n = f.arity;
        (Just(f), vec_in(n, 1.5), vec_in(n, 1.0))
    })
}

fn small_cfg() -> SamplerConfig {
    SamplerConfig {
        samples: 40,
        ..SamplerConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences((f, x, _d) in func_and_point()) {
        prop_assume!(f.kink_distance(&x) > 1e-3);
        let g = f.gradient(&x).unwrap();
        let h = 1e-6;
        for i in 0..f.arity {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (f.evaluate(&a).unwrap() - f.evaluate(&b).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "{}: {fd} vs {}", f.name, g[i]);
        }
    }

    #[test]
    fn hessian_vec_is_linear((f, x, d) in func_and_point(), e in vec_in(3, 1.0), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        prop_assume!(f.kink_distance(&x) > 1e-3);
        let e = &e[..f.arity];
        let combo: Vec<f64> = d.iter().zip(e).map(|(u, v)| a * u + b * v).collect();
        let lhs = f.hessian_vec(&x, &combo).unwrap();
        let hd = f.hessian_vec(&x, &d).unwrap();
        let he = f.hessian_vec(&x, e).unwrap();
        for i in 0..f.arity {
            prop_assert!((lhs[i] - (a * hd[i] + b * he[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn estimates_are_bounded_and_homogeneous((f, x, d) in func_and_point(), s in prop_oneof![Just(-2.0), Just(0.5), Just(3.0)], kink in any::<bool>()) {
        let mut x = x;
        if kink && f.expr.has_kinks() {
            x[0] = 0.0;
        }
        let cfg = small_cfg();
        let est = estimate_subdiff2(&f, &x, &d, &cfg).unwrap();
        for p in &est.points {
            prop_assert!(norm(p) <= est.lip_bound * (1.0 + 1e-9) + 1e-12);
        }
        let sd: Vec<f64> = d.iter().map(|v| s * v).collect();
        let a = est.support_interval(&d).unwrap().scale(s * s);
        let b = estimate_subdiff2(&f, &x, &sd, &cfg).unwrap().support_interval(&sd).unwrap();
        prop_assert!(a.hausdorff(&b) < 1e-9, "{a:?} vs {b:?}");
    }

    #[test]
    fn estimates_are_upper_semicontinuous((f, x, d) in func_and_point(), h in vec_in(3, 1.0), off in 1e-3..1e-2f64) {
        prop_assume!(f.expr.has_kinks());
        let h = &h[..f.arity];
        let mut x = x;
        x[0] = 0.0;
        let cfg = small_cfg();
        let at_kink = estimate_subdiff2(&f, &x, &d, &cfg).unwrap().support_interval(h).unwrap();
        let mut y = x.clone();
        y[0] = off;
        prop_assume!(f.kink_distance(&y) > 1e-4);
        let nearby = estimate_subdiff2(&f, &y, &d, &cfg).unwrap().support_interval(h).unwrap();
        prop_assert!(nearby.within(&at_kink, 1e-3), "{nearby:?} not near {at_kink:?}");
    }

    #[test]
    fn lip_bound_is_consistent_with_gradient_probe((f, x, d) in func_and_point()) {
        let region = BoxRegion::around(&x, 0.05);
        let report = gradient_continuity_probe(&f, &region, 64, 1e-2, 3).unwrap();
        let est = estimate_subdiff2(&f, &x, &d, &small_cfg()).unwrap();
        // The sampled Hessians live inside the same box as the probe pairs.
        prop_assert!(est.lip_bound <= (report.lipschitz_estimate * 1.1 + 1e-6) * norm(&d), "{} vs {}", est.lip_bound, report.lipschitz_estimate);
        prop_assert!(report.c11_consistent);
    }

    #[test]
    fn weak_second_derivative_of_quadratics_is_exact(x in vec_in(2, 2.0), d in vec_in(2, 1.0), c in vec_in(3, 2.0)) {
        let src = format!("(+ (* {} (pow v0 2)) (* {} (* v0 v1)) (* {} (pow v1 2)))", c[0], c[1], c[2]);
        let f = FunctionDef::new("q", 2, parse(&src).unwrap()).unwrap();
        let cl = weak_dir2(std::slice::from_ref(&f), &x, &d, &default_eps_sequence()).unwrap();
        let want = 2.0 * (c[0] * d[0] * d[0] + c[1] * d[0] * d[1] + c[2] * d[1] * d[1]);
        prop_assert_eq!(cl.points.len(), 1);
        prop_assert!((cl.points[0][0] - want).abs() < 1e-6 * (1.0 + want.abs()));
    }

    #[test]
    fn feasible_cone_is_closed_under_conic_combinations(z in vec_in(2, 1.0), u in vec_in(2, 1.0), v in vec_in(2, 1.0), a in 0.0..3.0f64, b in 0.0..3.0f64) {
        let q = PolyhedronSpec::Halfspaces { a: vec![vec![1.0, 1.0], vec![-1.0, 2.0], vec![0.0, -1.0]], b: vec![1.0, 1.0, 1.0] };
        // Push z onto the boundary of the first row.
        let z = vec![z[0], 1.0 - z[0]];
        prop_assume!(q.contains(&z, 1e-12));
        let tol = 1e-12;
        let in_u = feasible_cone_membership(&q, &z, &u, tol).unwrap();
        let in_v = feasible_cone_membership(&q, &z, &v, tol).unwrap();
        prop_assume!(in_u && in_v);
        let w: Vec<f64> = u.iter().zip(&v).map(|(p, r)| a * p + b * r).collect();
        prop_assert!(feasible_cone_membership(&q, &z, &w, 1e-9).unwrap());
    }

    #[test]
    fn critical_cone_is_a_cone(k in 0..64usize, t in 0.01..100.0f64, d in vec_in(2, 1.0)) {
        let entries = corpus();
        let e = &entries[k % entries.len()];
        let ctx = PointContext::new(&e.problem, &e.point).unwrap();
        let d = &d[..e.problem.n];
        let zero = vec![0.0; e.problem.n];
        prop_assert!(critical_at(&e.problem, &ctx, &zero).unwrap().is_some());
        prop_assert!(regular_at(&e.problem, &ctx, &zero).unwrap());
        if critical_at(&e.problem, &ctx, d).unwrap().is_some() {
            let td: Vec<f64> = d.iter().map(|v| t * v).collect();
            prop_assert!(critical_at(&e.problem, &ctx, &td).unwrap().is_some(), "{}: {d:?} scaled by {t}", e.name);
        }
    }
}

#[test]
fn theorem_refutes_whenever_corollary_does() {
    let cfg = SamplerConfig::default();
    let dcfg = DirectionConfig {
        random: 16,
        ..DirectionConfig::default()
    };
    let mut compared = 0;
    for e in corpus() {
        let ctx = PointContext::new(&e.problem, &e.point).unwrap();
        if ctx.rank_h() < e.problem.equalities.len() {
            continue;
        }
        for dir in enumerate_at(&e.problem, &ctx, &dcfg).unwrap() {
            let run = |mode| {
                let data = second_order_data(&e.problem, &ctx, &dir.d, mode, OracleChoice::Auto, &cfg).unwrap();
                second_order_certificate(&ctx, &dir, &data, mode, ETA_EXACT).unwrap()
            };
            let th = run(Mode::Theorem);
            let co = run(Mode::Corollary);
            if co.refuted {
                assert!(th.refuted, "{}: d={:?}", e.name, dir.d);
            }
            if let (Some(a), Some(b)) = (th.margin, co.margin) {
                assert!(a <= b + 1e-9, "{}: d={:?}: {a} > {b}", e.name, dir.d);
            }
            compared += 1;
        }
    }
    assert!(compared >= 20, "{compared}");
}

#[test]
fn d_zero_is_always_enumerated() {
    for e in corpus() {
        let ctx = PointContext::new(&e.problem, &e.point).unwrap();
        let dirs = enumerate_at(&e.problem, &ctx, &DirectionConfig::default()).unwrap();
        assert!(dirs.iter().any(|d| norm(&d.d) == 0.0 && d.regular), "{}", e.name);
        for d in &dirs {
            for s in &d.objective_slacks {
                assert!(*s <= ctx.tau_crit);
            }
            assert!(dot(&d.d, &d.d).is_finite());
        }
    }
}

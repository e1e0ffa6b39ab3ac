use pairdecay::lifetime::{
    self, lifetime_residual, lifetime_sweep, literal_lifetime_equation, solve_lifetime, Branch,
};
use pairdecay::model::{RateParameters, DEGENERATE_EPS};
use proptest::prelude::*;

/// Plain bisection, kept separate from the library's root finder.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa_positive = f(a) > 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == fa_positive {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn rate() -> impl Strategy<Value = f64> {
    (-1.0f64..1.5).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn residual_vanishes_at_solution(gf in rate(), gs in rate()) {
        let p = RateParameters::reduced(gf, gs).unwrap();
        let sol = solve_lifetime(&p).unwrap();
        prop_assert!(sol.tau > 0.0);
        prop_assert!(sol.bracket.0 <= sol.tau && sol.tau <= sol.bracket.1);
        prop_assert!(lifetime_residual(&p, sol.tau).unwrap().abs() <= 1e-12);
        prop_assert_eq!(sol.residual, lifetime_residual(&p, sol.tau).unwrap());
    }

    #[test]
    fn residual_strictly_decreasing_before_saturation(gf in rate(), gs in rate()) {
        let p = RateParameters::reduced(gf, gs).unwrap();
        let hi = lifetime::bracket_upper(&p);
        let mut prev = lifetime_residual(&p, 0.0).unwrap();
        let mut sign_changes = 0;
        for k in 1..=100 {
            let f = lifetime_residual(&p, hi * k as f64 / 100.0).unwrap();
            prop_assert!(f <= prev);
            if (f > 0.0) != (prev > 0.0) {
                sign_changes += 1;
            }
            prev = f;
        }
        prop_assert_eq!(sign_changes, 1);
    }

    #[test]
    fn literal_equation_root_agrees(gf in rate(), gs in rate()) {
        prop_assume!((gs - gf).abs() > 1e-3 * gs.max(gf));
        let p = RateParameters::reduced(gf, gs).unwrap();
        let literal = bisect(|t| literal_lifetime_equation(&p, t), 0.0, lifetime::bracket_upper(&p));
        let tau = solve_lifetime(&p).unwrap().tau;
        prop_assert!((literal - tau).abs() <= 1e-10, "literal {literal} vs {tau}");
    }

    #[test]
    fn lifetime_not_before_first_stage_lifetime(gf in rate(), gs in rate()) {
        // n_e + n_i >= exp(-gamma_f t), so 1/e cannot be reached before 1/gamma_f.
        let p = RateParameters::reduced(gf, gs).unwrap();
        let tau = solve_lifetime(&p).unwrap().tau;
        prop_assert!(tau >= 1.0 / gf - 1e-12);
        prop_assert!(tau <= 50.0 / gf.min(gs));
    }
}

#[test]
fn branch_continuity_at_band_edges() {
    for gs in [0.3, 2.0, 17.0] {
        let lo = solve_lifetime(&RateParameters::reduced(gs * (1.0 - 10.0 * DEGENERATE_EPS), gs).unwrap()).unwrap();
        let mid = solve_lifetime(&RateParameters::reduced(gs, gs).unwrap()).unwrap();
        let hi = solve_lifetime(&RateParameters::reduced(gs * (1.0 + 10.0 * DEGENERATE_EPS), gs).unwrap()).unwrap();
        assert_eq!(lo.branch, Branch::Generic);
        assert_eq!(mid.branch, Branch::Degenerate);
        assert_eq!(hi.branch, Branch::Generic);
        assert!((lo.tau - hi.tau).abs() < 1e-6);
        assert!((lo.tau - mid.tau).abs() < 1e-6);
    }
}

#[test]
fn sweep_reference_points() {
    let rows = lifetime_sweep(2.0, &[1.0, 2.0, 8.0]).unwrap();
    for ((gf, tau), expected) in rows.iter().zip([1.31, 0.79, 0.33]) {
        assert!((tau - expected).abs() <= 0.005, "gamma_f={gf}: {tau}");
    }
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1.0, 2.0, 8.0]);
}

#[test]
fn sweep_monotone_by_brute_force_sign_checks() {
    // Independent of the solver: for gamma_f1 < gamma_f2 the residual of the
    // faster case is negative at the slower case's root.
    let grid: Vec<f64> = (0..50).map(|k| 1.0 + 9.0 * k as f64 / 49.0).collect();
    let rows = lifetime_sweep(2.0, &grid).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].1 < w[0].1);
        let faster = RateParameters::reduced(w[1].0, 2.0).unwrap();
        assert!(lifetime_residual(&faster, w[0].1).unwrap() < 0.0);
    }
}

#[test]
fn fast_disentanglement_limit() {
    let p = RateParameters::reduced(1e3, 2.0).unwrap();
    let sol = solve_lifetime(&p).unwrap();
    assert!(lifetime_residual(&p, sol.tau).unwrap().abs() < 1e-12);
    // With the entangled stage gone almost instantly, the population is half
    // decayed at once and the rest follows exp(-gamma_s t):
    // gamma_f / (2 (gamma_f - gamma_s)) exp(-gamma_s tau) = 1/e.
    let amp = 1e3 / (2.0 * (1e3 - 2.0));
    let approx = (amp * std::f64::consts::E).ln() / 2.0;
    assert!((sol.tau - approx).abs() < 1e-9, "{} vs {approx}", sol.tau);
}

#[test]
fn below_bound_is_computable_but_flagged() {
    let p = RateParameters::reduced(0.5, 2.0).unwrap();
    assert!(!p.satisfies_disentanglement_bound());
    let sol = solve_lifetime(&p).unwrap();
    assert!(sol.tau_over_tau0 > 1.31);
}

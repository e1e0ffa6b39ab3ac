//! Single-atom lifetime of an initially entangled pair.
//!
//! The lifetime `tau` is defined by `n_e(tau) + n_i(tau) = n0 / e`: the total
//! unstable population of one atom type (entangled or product state) has
//! dropped by one e-fold. Away from `gamma_s == gamma_f` this is equivalent to
//!
//! ```text
//! 2 (gamma_s - gamma_f) / e = (2 gamma_s - gamma_f) exp(-gamma_f tau) - gamma_f exp(-gamma_s tau)
//! ```
//!
//! and in the confluent limit to `exp(-u) (1 + u / 2) = 1 / e` with
//! `u = gamma tau`. The solver works on the normalized population form,
//! which is smooth through the confluent point, so a single code path
//! covers both branches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, RateParameters};

const INV_E: f64 = 1.0 / std::f64::consts::E;

/// Residual tolerance.
pub const RESIDUAL_TOL: f64 = 1e-12;
/// Bracket-width tolerance in units of `tau_0`.
pub const WIDTH_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;
const UNIQUENESS_SAMPLES: usize = 100;

/// Canonical `(gamma_f, gamma_s, tau)` triples in units of `gamma_0` and
/// `tau_0`, with `tau` rounded to two decimals.
pub const REFERENCE_LIFETIMES: [(f64, f64, f64); 3] = [(1.0, 2.0, 1.31), (2.0, 2.0, 0.79), (8.0, 2.0, 0.33)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Generic,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeSolution {
    /// Root, in the time unit of the rates.
    pub tau: f64,
    pub tau_over_tau0: f64,
    pub residual: f64,
    pub branch: Branch,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// `[n_e(tau) + n_i(tau)] / n0 - 1/e`. Decreasing from `1 - 1/e` at zero
/// towards `-1/e`.
pub fn lifetime_residual(p: &RateParameters, tau: f64) -> Result<f64> {
    // The residual is independent of n0; evaluate at unit n0 so that an
    // empty ensemble (n0 = 0) still has a lifetime.
    let unit = RateParameters { n0: 1.0, ..*p };
    let alive = model::entangled_population(&unit, tau)? + model::product_unstable_population(&unit, tau)?;
    Ok(alive - INV_E)
}

/// Literal two-exponential form:
/// `(2 gamma_s - gamma_f) exp(-gamma_f tau) - gamma_f exp(-gamma_s tau) - 2 (gamma_s - gamma_f) / e`.
///
/// Equals `2 (gamma_s - gamma_f)` times [`lifetime_residual`]; it vanishes
/// identically at the confluent point and is only useful as a cross-check.
pub fn literal_lifetime_equation(p: &RateParameters, tau: f64) -> f64 {
    let (gf, gs) = (p.gamma_f, p.gamma_s);
    (2.0 * gs - gf) * (-gf * tau).exp() - gf * (-gs * tau).exp() - 2.0 * (gs - gf) * INV_E
}

/// Upper end of the initial bracket, `50 / min(gamma_f, gamma_s)`.
pub fn bracket_upper(p: &RateParameters) -> f64 {
    50.0 / p.gamma_f.min(p.gamma_s)
}

pub fn solve_lifetime(p: &RateParameters) -> Result<LifetimeSolution> {
    p.validate()?;
    let f = |tau: f64| lifetime_residual(p, tau);
    let (lo, hi) = (0.0, bracket_upper(p));
    check_single_crossing(&f, lo, hi)?;

    let root = bracketed_root(f, lo, hi, RESIDUAL_TOL, WIDTH_TOL * p.tau_0())?;
    if root.x.is_nan() || root.x <= 0.0 {
        return Err(Error::Consistency(format!("non-positive lifetime {}", root.x)));
    }
    Ok(LifetimeSolution {
        tau: root.x,
        tau_over_tau0: root.x / p.tau_0(),
        residual: root.fx,
        branch: if p.is_degenerate() {
            Branch::Degenerate
        } else {
            Branch::Generic
        },
        iterations: root.iterations,
        bracket: root.bracket,
    })
}

/// Lifetimes at fixed `gamma_s` over a grid of `gamma_f`, all in units of
/// `gamma_0 = 1`. Output order follows the grid.
pub fn lifetime_sweep(gamma_s: f64, gamma_f_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if gamma_f_grid.is_empty() {
        return Err(Error::InvalidParameter("empty gamma_f grid".into()));
    }
    gamma_f_grid
        .par_iter()
        .map(|&gf| {
            let p = RateParameters::reduced(gf, gamma_s)?;
            Ok((gf, solve_lifetime(&p)?.tau_over_tau0))
        })
        .collect()
}

/// Sample the residual on a uniform grid and require exactly one sign
/// change, from positive to non-positive.
fn check_single_crossing<F>(f: &F, lo: f64, hi: f64) -> Result<()>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut changes = 0;
    let mut prev_positive = f(lo)? > 0.0;
    for k in 1..=UNIQUENESS_SAMPLES {
        let x = lo + (hi - lo) * k as f64 / UNIQUENESS_SAMPLES as f64;
        let positive = f(x)? > 0.0;
        if positive != prev_positive {
            changes += 1;
        }
        prev_positive = positive;
    }
    if changes == 1 && !prev_positive {
        Ok(())
    } else {
        Err(Error::Consistency(format!(
            "lifetime residual changes sign {changes} times on [{lo}, {hi}]"
        )))
    }
}

#[derive(Debug, Clone, Copy)]
struct Root {
    x: f64,
    fx: f64,
    iterations: usize,
    bracket: (f64, f64),
}

/// Safeguarded secant iteration on a sign-changing bracket. A secant step is
/// accepted only if it lands strictly inside the bracket and the previous
/// step at least halved the bracket; otherwise the bracket is bisected.
fn bracketed_root<F>(f: F, mut a: f64, mut b: f64, tol_f: f64, tol_x: f64) -> Result<Root>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::Consistency("non-finite residual at bracket ends".into()));
    }
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::NoSignChange { a, b, fa, fb });
    }
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, iterations: 0, bracket: (a, b) });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, iterations: 0, bracket: (a, b) });
    }

    let mut prev_width = f64::INFINITY;
    for iter in 1..=MAX_ITER {
        let width = b - a;
        let secant = b - fb * (b - a) / (fb - fa);
        let x = if secant > a && secant < b && width <= 0.5 * prev_width {
            secant
        } else {
            0.5 * (a + b)
        };
        prev_width = width;

        let fx = f(x)?;
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        if fx.abs() <= tol_f {
            return Ok(Root { x, fx, iterations: iter, bracket: (a, b) });
        }
        if b - a <= tol_x {
            let (x, fx) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
            return Ok(Root { x, fx, iterations: iter, bracket: (a, b) });
        }
    }
    Err(Error::Consistency(format!("root not converged after {MAX_ITER} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(gf: f64, gs: f64) -> RateParameters {
        RateParameters::reduced(gf, gs).unwrap()
    }

    #[test]
    fn residual_examples() {
        let q = p(1.0, 2.0);
        assert!((lifetime_residual(&q, 0.0).unwrap() - (1.0 - INV_E)).abs() < 1e-15);
        assert!(lifetime_residual(&q, 1.311).unwrap().abs() < 1e-3);
        assert!(lifetime_residual(&q, 0.5).unwrap() > 0.0);
        assert!(lifetime_residual(&q, 3.0).unwrap() < 0.0);
        assert!(lifetime_residual(&q, -1.0).is_err());
    }

    #[test]
    fn reference_lifetimes() {
        for (gf, gs, tau) in REFERENCE_LIFETIMES {
            let sol = solve_lifetime(&p(gf, gs)).unwrap();
            assert!((sol.tau_over_tau0 - tau).abs() <= 0.005, "{gf},{gs}: {}", sol.tau);
            assert!(sol.residual.abs() <= RESIDUAL_TOL);
            assert!(sol.bracket.0 <= sol.tau && sol.tau <= sol.bracket.1);
        }
        assert_eq!(solve_lifetime(&p(2.0, 2.0)).unwrap().branch, Branch::Degenerate);
        assert_eq!(solve_lifetime(&p(1.0, 2.0)).unwrap().branch, Branch::Generic);
    }

    #[test]
    fn degenerate_root_solves_confluent_equation() {
        // exp(-u)(1 + u/2) = 1/e with u = gamma tau
        let sol = solve_lifetime(&p(2.0, 2.0)).unwrap();
        let u = 2.0 * sol.tau;
        assert!(((-u).exp() * (1.0 + 0.5 * u) - INV_E).abs() < 1e-12);
    }

    #[test]
    fn gamma0_rescales_reported_lifetime() {
        let q = RateParameters::new(2.0, 4.0, 1.0, 2.0).unwrap();
        let sol = solve_lifetime(&q).unwrap();
        assert!((sol.tau_over_tau0 - 1.31).abs() <= 0.005);
        assert!((sol.tau - 0.5 * sol.tau_over_tau0).abs() < 1e-15);
    }

    #[test]
    fn literal_form_matches_scaled_residual() {
        let q = p(1.3, 4.1);
        for &t in &[0.0, 0.2, 1.0, 3.5] {
            let lhs = literal_lifetime_equation(&q, t);
            let rhs = 2.0 * (q.gamma_s - q.gamma_f) * lifetime_residual(&q, t).unwrap();
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    #[test]
    fn sweep_rejects_empty_and_invalid() {
        assert!(lifetime_sweep(2.0, &[]).is_err());
        assert!(lifetime_sweep(2.0, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn very_fast_disentanglement_still_converges() {
        let sol = solve_lifetime(&p(1e3, 2.0)).unwrap();
        assert!(lifetime_residual(&p(1e3, 2.0), sol.tau).unwrap().abs() < 1e-12);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let err = bracketed_root(|x| Ok(x + 1.0), 0.0, 1.0, 1e-12, 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }));
    }

    #[test]
    fn root_finder_on_known_function() {
        let r = bracketed_root(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14, 1e-15).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-13);
    }
}

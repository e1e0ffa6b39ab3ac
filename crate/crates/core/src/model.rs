//! Closed-form populations of the two-stage decay.
//!
//! With `n_e` entangled pairs and `n_i` product-state unstable atoms of one
//! type, the rate equations are
//!
//! ```text
//! dn_e/dt = -gamma_f n_e
//! dn_i/dt = (gamma_f / 2) n_e - gamma_s n_i
//! ```
//!
//! and every atom of a given type ends in the ground state, so
//! `n_e + n_i + n_i_g = n0` holds per type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative half-width of the band around `gamma_s == gamma_f` inside which
/// the closed forms switch to their confluent limit.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// Residual floating-point negatives down to this fraction of `n0` are
/// clamped to zero.
const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParameters {
    /// First-photon (disentanglement) rate.
    pub gamma_f: f64,
    /// Second-photon rate of the remaining product-state atom.
    pub gamma_s: f64,
    /// Initial number of entangled pairs.
    pub n0: f64,
    /// Free-atom spontaneous rate; the reporting unit.
    pub gamma_0: f64,
}

impl RateParameters {
    pub fn new(gamma_f: f64, gamma_s: f64, n0: f64, gamma_0: f64) -> Result<Self> {
        let p = Self {
            gamma_f,
            gamma_s,
            n0,
            gamma_0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Rates in units of `gamma_0 = 1` with `n0 = 1`.
    pub fn reduced(gamma_f: f64, gamma_s: f64) -> Result<Self> {
        Self::new(gamma_f, gamma_s, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        rate_ok("gamma_f", self.gamma_f)?;
        rate_ok("gamma_s", self.gamma_s)?;
        rate_ok("gamma_0", self.gamma_0)?;
        if !(self.n0.is_finite() && self.n0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "n0 must be finite and >= 0, got {}",
                self.n0
            )));
        }
        Ok(())
    }

    /// Free-atom lifetime `1 / gamma_0`.
    pub fn tau_0(&self) -> f64 {
        1.0 / self.gamma_0
    }

    /// Whether `gamma_s` lies within the confluent band around `gamma_f`.
    pub fn is_degenerate(&self) -> bool {
        (self.gamma_s - self.gamma_f).abs() <= DEGENERATE_EPS * self.gamma_s.max(self.gamma_f)
    }

    /// `gamma_f >= gamma_0`: entanglement cannot outlive the sum of the
    /// single-atom decoherence rates. Violations are computable, only flagged.
    pub fn satisfies_disentanglement_bound(&self) -> bool {
        self.gamma_f >= self.gamma_0
    }

    pub fn with_rates(&self, gamma_f: f64, gamma_s: f64) -> Self {
        Self {
            gamma_f,
            gamma_s,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub t: f64,
    pub n_e: f64,
    pub n_i: f64,
    pub n_i_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PhotonDistributions {
    pub t: f64,
    pub N_f: f64,
    pub N_s: f64,
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and >= 0, got {t}")))
    }
}

/// `(exp(-a t) - exp(-b t)) / (b - a)`, symmetric in `a` and `b`, evaluated
/// without cancellation. Callers handle `a == b`.
fn exp_difference_quotient(a: f64, b: f64, t: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let d = hi - lo;
    (-lo * t).exp() * -(-d * t).exp_m1() / d
}

/// `n_e(t) = n0 exp(-gamma_f t)`.
pub fn entangled_population(p: &RateParameters, t: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    Ok(p.n0 * (-p.gamma_f * t).exp())
}

/// Product-state unstable atoms of one type,
/// `n0 gamma_f (exp(-gamma_f t) - exp(-gamma_s t)) / (2 (gamma_s - gamma_f))`,
/// or `n0 gamma t exp(-gamma t) / 2` with the mean rate inside the
/// degenerate band.
pub fn product_unstable_population(p: &RateParameters, t: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    Ok(product_unstable_unchecked(p, t))
}

fn product_unstable_unchecked(p: &RateParameters, t: f64) -> f64 {
    if p.is_degenerate() {
        let g = 0.5 * (p.gamma_f + p.gamma_s);
        0.5 * p.n0 * g * t * (-g * t).exp()
    } else {
        0.5 * p.n0 * p.gamma_f * exp_difference_quotient(p.gamma_f, p.gamma_s, t)
    }
}

fn first_photon_unchecked(p: &RateParameters, t: f64) -> f64 {
    -p.n0 * (-p.gamma_f * t).exp_m1()
}

/// Ground-state atoms of one type, `n0 - n_e - n_i`.
pub fn ground_population(p: &RateParameters, t: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    // n0 - n_e is evaluated as N_f to avoid cancellation at small t.
    let g = first_photon_unchecked(p, t) - product_unstable_unchecked(p, t);
    clamp_population(g, p.n0, "ground population")
}

fn clamp_population(v: f64, n0: f64, what: &str) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -CLAMP_TOL * n0 {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!("{what} is negative: {v}")))
    }
}

/// Cumulative first photons, `N_f(t) = n0 (1 - exp(-gamma_f t))`.
pub fn first_photon_distribution(p: &RateParameters, t: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    Ok(first_photon_unchecked(p, t))
}

/// Cumulative second photons, `N_s(t) = N_f(t) - 2 n_i(t)`.
pub fn second_photon_distribution(p: &RateParameters, t: f64) -> Result<f64> {
    p.validate()?;
    check_time(t)?;
    let ns = first_photon_unchecked(p, t) - 2.0 * product_unstable_unchecked(p, t);
    clamp_population(ns, p.n0, "second-photon count")
}

/// Density of coincidences per unit `|dt|`, normalized to one coincidence
/// per pair: `gamma_s n0 exp(-gamma_s dt)`.
pub fn coincidence_density(p: &RateParameters, dt: f64) -> Result<f64> {
    p.validate()?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::Domain(format!(
            "time separation must be finite and >= 0, got {dt}"
        )));
    }
    Ok(p.gamma_s * p.n0 * (-p.gamma_s * dt).exp())
}

pub fn population_state(p: &RateParameters, t: f64) -> Result<PopulationState> {
    Ok(PopulationState {
        t,
        n_e: entangled_population(p, t)?,
        n_i: product_unstable_population(p, t)?,
        n_i_g: ground_population(p, t)?,
    })
}

pub fn photon_distributions(p: &RateParameters, t: f64) -> Result<PhotonDistributions> {
    Ok(PhotonDistributions {
        t,
        N_f: first_photon_distribution(p, t)?,
        N_s: second_photon_distribution(p, t)?,
    })
}

/// Populations and photon counts on `grid`.
pub fn population_curve(
    p: &RateParameters,
    grid: &[f64],
) -> Result<Vec<(PopulationState, PhotonDistributions)>> {
    grid.iter()
        .map(|&t| Ok((population_state(p, t)?, photon_distributions(p, t)?)))
        .collect()
}

/// Uniform grid of `points` times on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|k| t_end * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Fixed-step classical RK4 integration of the per-type rate equations,
///
/// ```text
/// dn_e/dt   = -gamma_f n_e
/// dn_i/dt   = (gamma_f / 2) n_e - gamma_s n_i
/// dn_i_g/dt = (gamma_f / 2) n_e + gamma_s n_i
/// ```
///
/// returning `steps + 1` states on a uniform grid over `[0, t_end]`.
pub fn ode_oracle(p: &RateParameters, t_end: f64, steps: usize) -> Result<Vec<PopulationState>> {
    p.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Domain(format!("t_end must be finite and > 0, got {t_end}")));
    }
    if steps < 10 {
        return Err(Error::InvalidParameter(format!("steps must be >= 10, got {steps}")));
    }
    let h = t_end / steps as f64;
    // Real-axis stability limit of classical RK4.
    let stiffness = h * p.gamma_f.max(p.gamma_s);
    if stiffness > 2.78 {
        return Err(Error::Integration(format!(
            "step {h} is unstable for rate {} (h*gamma = {stiffness:.3} > 2.78)",
            p.gamma_f.max(p.gamma_s)
        )));
    }

    let (gf, gs) = (p.gamma_f, p.gamma_s);
    let rhs = |y: [f64; 3]| -> [f64; 3] {
        let source = 0.5 * gf * y[0];
        [-gf * y[0], source - gs * y[1], source + gs * y[1]]
    };
    let axpy = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];

    let mut y = [p.n0, 0.0, 0.0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(PopulationState {
        t: 0.0,
        n_e: y[0],
        n_i: y[1],
        n_i_g: y[2],
    });
    let drift_tol = 1e-8 * p.n0;
    for step in 1..=steps {
        let k1 = rhs(y);
        let k2 = rhs(axpy(y, k1, 0.5 * h));
        let k3 = rhs(axpy(y, k2, 0.5 * h));
        let k4 = rhs(axpy(y, k3, h));
        for j in 0..3 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let drift = (y[0] + y[1] + y[2] - p.n0).abs();
        if !drift.is_finite() || drift > drift_tol {
            return Err(Error::Integration(format!(
                "conservation drift {drift:e} exceeds {drift_tol:e} at step {step}"
            )));
        }
        out.push(PopulationState {
            t: if step == steps { t_end } else { h * step as f64 },
            n_e: y[0],
            n_i: y[1],
            n_i_g: y[2],
        });
    }
    Ok(out)
}

//! Rate recovery from emission data and the lifetime pipeline.
//!
//! The primary estimators are exponential maximum likelihood on raw times:
//! `gamma_f` from first-photon times and `gamma_s` from the separations
//! `t_s - t_f`. Separations do not depend on when the pair was formed, so
//! `gamma_s` survives an uncertain time origin while `gamma_f` does not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifetime::{self, LifetimeSolution};
use crate::model::{self, RateParameters};
use crate::monte_carlo::{self, DecayEvent, EventSet};
use crate::numeric;

/// Bins with fewer counts are left out of log-linear fits.
pub const MIN_BIN_COUNT: f64 = 5.0;
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;
pub const DEFAULT_T_MAX: f64 = 5.0;

/// Uniform-bin histogram over `[bin_edges[0], bin_edges[last])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub total: u64,
}

impl Histogram {
    /// Empty histogram with edges `k * bin_width` covering `[0, t_max)`.
    /// If `t_max` is not a multiple of `bin_width` the last edge lies just
    /// above it.
    pub fn uniform(bin_width: f64, t_max: f64) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::InvalidParameter(format!("bin width must be > 0, got {bin_width}")));
        }
        if !(t_max.is_finite() && t_max > bin_width) {
            return Err(Error::InvalidParameter(format!(
                "t_max must exceed the bin width, got t_max={t_max}, width={bin_width}"
            )));
        }
        let n_bins = ((t_max / bin_width) * (1.0 - 1e-12)).ceil() as usize;
        Ok(Self {
            bin_edges: (0..=n_bins).map(|k| k as f64 * bin_width).collect(),
            counts: vec![0; n_bins],
            overflow: 0,
            total: 0,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Add one value. Values below the first edge or non-finite values are
    /// counted as overflow.
    pub fn fill(&mut self, x: f64) {
        self.total += 1;
        let lo = self.bin_edges[0];
        let idx = ((x - lo) / self.bin_width()).floor();
        if idx >= 0.0 && (idx as usize) < self.counts.len() {
            let mut k = idx as usize;
            // Guard against rounding at an edge.
            if x < self.bin_edges[k] && k > 0 {
                k -= 1;
            } else if x >= self.bin_edges[k + 1] {
                k += 1;
            }
            if k < self.counts.len() {
                self.counts[k] += 1;
                return;
            }
        }
        self.overflow += 1;
    }

    /// Bin-wise sum of two histograms with identical edges.
    pub fn merged(&self, other: &Self) -> Self {
        debug_assert_eq!(self.bin_edges, other.bin_edges);
        Self {
            bin_edges: self.bin_edges.clone(),
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            overflow: self.overflow + other.overflow,
            total: self.total + other.total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() < 2 || self.counts.len() + 1 != self.bin_edges.len() {
            return Err(Error::InvalidParameter(format!(
                "{} edges for {} bins",
                self.bin_edges.len(),
                self.counts.len()
            )));
        }
        if self.counts.iter().sum::<u64>() + self.overflow != self.total {
            return Err(Error::Consistency("bin counts and overflow do not sum to total".into()));
        }
        check_uniform_edges(&self.bin_edges)
    }
}

fn check_uniform_edges(edges: &[f64]) -> Result<()> {
    let w = edges[1] - edges[0];
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::NonUniformBinning("edges must be strictly increasing".into()));
    }
    for (k, pair) in edges.windows(2).enumerate() {
        let wk = pair[1] - pair[0];
        if wk.is_nan() || wk <= 0.0 || (wk - w).abs() > 1e-12 * w.max(pair[1].abs()) {
            return Err(Error::NonUniformBinning(format!("bin {k} has width {wk}, expected {w}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Mle,
    WeightedLeastSquaresLog,
    /// Least squares of the closed-form cumulative counts against empirical
    /// cumulative fractions.
    CumulativeLeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub rate_stderr: f64,
    pub method: FitMethod,
    pub n_used: usize,
    /// Log-likelihood for MLE, chi-square per degree of freedom otherwise.
    pub goodness: f64,
}

/// `rate = 1 / mean(samples)`, `stderr = rate / sqrt(n)`.
pub fn mle_exponential_rate(samples: &[f64]) -> Result<FitResult> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "exponential MLE needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Domain(format!("samples must be finite and >= 0, got {bad}")));
    }
    let n = samples.len() as f64;
    let total = numeric::sum(samples.iter().copied());
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Fit("all samples are zero".into()));
    }
    let rate = n / total;
    Ok(FitResult {
        rate,
        rate_stderr: rate / n.sqrt(),
        method: FitMethod::Mle,
        n_used: samples.len(),
        goodness: n * rate.ln() - n,
    })
}

/// Weighted regression of `ln(count)` on bin centers with weights `count`
/// (the inverse Poisson variance of a log count). Bins below
/// [`MIN_BIN_COUNT`] are skipped; `rate = -slope`.
pub fn fit_binned_rate(bin_edges: &[f64], counts: &[f64]) -> Result<FitResult> {
    if bin_edges.len() < 2 || counts.len() + 1 != bin_edges.len() {
        return Err(Error::InvalidParameter(format!(
            "{} edges for {} bins",
            bin_edges.len(),
            counts.len()
        )));
    }
    check_uniform_edges(bin_edges)?;

    let pts: Vec<(f64, f64, f64)> = bin_edges
        .windows(2)
        .zip(counts)
        .filter(|(_, &c)| c >= MIN_BIN_COUNT)
        .map(|(w, &c)| (0.5 * (w[0] + w[1]), c.ln(), c))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "log-linear fit needs at least 3 bins with >= {MIN_BIN_COUNT} counts, got {}",
            pts.len()
        )));
    }

    let sw = numeric::sum(pts.iter().map(|p| p.2));
    let xm = numeric::sum(pts.iter().map(|p| p.2 * p.0)) / sw;
    let ym = numeric::sum(pts.iter().map(|p| p.2 * p.1)) / sw;
    let sxx = numeric::sum(pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)));
    let sxy = numeric::sum(pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)));
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2 = numeric::sum(pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)));

    let rate = -slope;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Fit(format!("histogram does not decay (slope {slope})")));
    }
    Ok(FitResult {
        rate,
        rate_stderr: (1.0 / sxx).sqrt(),
        method: FitMethod::WeightedLeastSquaresLog,
        n_used: pts.len(),
        goodness: chi2 / (pts.len() - 2) as f64,
    })
}

pub fn fit_histogram_rate(h: &Histogram) -> Result<FitResult> {
    h.validate()?;
    let counts: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    fit_binned_rate(&h.bin_edges, &counts)
}

/// Apparent decay time `1 / rate` of a coincidence spectrum.
pub fn apparent_lifetime(h: &Histogram) -> Result<f64> {
    Ok(1.0 / fit_histogram_rate(h)?.rate)
}

/// First-photon times used for `gamma_f`.
///
/// True times use every pair. Observed times use detected first photons that
/// fall at or after the nominal origin; the acquisition window does not
/// extend before it.
pub fn first_photon_samples(ev: &EventSet, use_observed: bool) -> Vec<f64> {
    if use_observed {
        ev.events
            .iter()
            .filter(|e| e.detected_f && e.t_f_obs >= 0.0)
            .map(|e| e.t_f_obs)
            .collect()
    } else {
        ev.events.iter().map(|e| e.t_f).collect()
    }
}

/// Photon separations used for `gamma_s`; observed separations need both
/// photons detected.
pub fn separation_samples(ev: &EventSet, use_observed: bool) -> Vec<f64> {
    if use_observed {
        ev.events
            .iter()
            .filter(|e| e.both_detected())
            .map(DecayEvent::observed_separation)
            .collect()
    } else {
        ev.events.iter().map(DecayEvent::separation).collect()
    }
}

/// MLE estimates `(gamma_f, gamma_s)`.
pub fn estimate_rates(ev: &EventSet, use_observed: bool) -> Result<(FitResult, FitResult)> {
    if ev.is_empty() {
        return Err(Error::InsufficientData("event set is empty".into()));
    }
    let gf = mle_exponential_rate(&first_photon_samples(ev, use_observed))
        .map_err(|e| no_usable("first-photon", e))?;
    let gs = mle_exponential_rate(&separation_samples(ev, use_observed))
        .map_err(|e| no_usable("coincidence", e))?;
    Ok((gf, gs))
}

fn no_usable(what: &str, e: Error) -> Error {
    match e {
        Error::InsufficientData(msg) => Error::InsufficientData(format!("no usable {what} events: {msg}")),
        other => other,
    }
}

/// Estimate both rates from observed times and solve for the lifetime.
pub fn full_pipeline(ev: &EventSet) -> Result<(FitResult, FitResult, LifetimeSolution)> {
    full_pipeline_with(ev, true)
}

pub fn full_pipeline_with(ev: &EventSet, use_observed: bool) -> Result<(FitResult, FitResult, LifetimeSolution)> {
    let (gf, gs) = estimate_rates(ev, use_observed)?;
    let p = RateParameters::new(gf.rate, gs.rate, 1.0, ev.params.gamma_0)?;
    let sol = lifetime::solve_lifetime(&p)?;
    Ok((gf, gs, sol))
}

/// Delta-method standard error of the lifetime (in units of `tau_0`), with
/// the root differentiated by central differences of step `1e-6 * rate`.
pub fn lifetime_stderr(gf: &FitResult, gs: &FitResult, gamma_0: f64) -> Result<f64> {
    let tau = |f: f64, s: f64| -> Result<f64> {
        Ok(lifetime::solve_lifetime(&RateParameters::new(f, s, 1.0, gamma_0)?)?.tau_over_tau0)
    };
    let hf = 1e-6 * gf.rate;
    let hs = 1e-6 * gs.rate;
    let d_f = (tau(gf.rate + hf, gs.rate)? - tau(gf.rate - hf, gs.rate)?) / (2.0 * hf);
    let d_s = (tau(gf.rate, gs.rate + hs)? - tau(gf.rate, gs.rate - hs)?) / (2.0 * hs);
    Ok((d_f * gf.rate_stderr).hypot(d_s * gs.rate_stderr))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub use_observed: bool,
    pub bin_width: f64,
    pub t_max: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            use_observed: true,
            bin_width: DEFAULT_BIN_WIDTH,
            t_max: DEFAULT_T_MAX,
        }
    }
}

/// Flat pipeline summary; rates in units of `gamma_0`, times in `tau_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub gamma_f: f64,
    pub gamma_f_stderr: f64,
    pub gamma_s: f64,
    pub gamma_s_stderr: f64,
    pub tau_over_tau0: f64,
    pub tau_stderr: f64,
    /// `None` when the coincidence spectrum has too few populated bins.
    pub tau_app_over_tau0: Option<f64>,
    pub method: FitMethod,
    /// Pairs contributing to the `gamma_s` estimate.
    pub n_used: usize,
    /// Sum of the two MLE log-likelihoods.
    pub goodness: f64,
}

pub fn run_pipeline(ev: &EventSet, opts: &PipelineOptions) -> Result<PipelineResult> {
    let (gf, gs, sol) = full_pipeline_with(ev, opts.use_observed)?;
    let g0 = ev.params.gamma_0;
    let h = monte_carlo::coincidence_histogram(ev, opts.bin_width, opts.t_max, opts.use_observed)?;
    let tau_app = match apparent_lifetime(&h) {
        Ok(t) => Some(t * g0),
        Err(Error::InsufficientData(_)) | Err(Error::Fit(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PipelineResult {
        gamma_f: gf.rate / g0,
        gamma_f_stderr: gf.rate_stderr / g0,
        gamma_s: gs.rate / g0,
        gamma_s_stderr: gs.rate_stderr / g0,
        tau_over_tau0: sol.tau_over_tau0,
        tau_stderr: lifetime_stderr(&gf, &gs, g0)?,
        tau_app_over_tau0: tau_app,
        method: FitMethod::Mle,
        n_used: gs.n_used,
        goodness: gf.goodness + gs.goodness,
    })
}

/// Estimates from observed times compared with the generating rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationBias {
    pub gamma_f_true: f64,
    pub gamma_f_hat: f64,
    pub gamma_f_bias: f64,
    pub gamma_f_stderr: f64,
    pub gamma_s_true: f64,
    pub gamma_s_hat: f64,
    pub gamma_s_bias: f64,
    pub gamma_s_stderr: f64,
}

impl FormationBias {
    /// Bias in units of the statistical standard error.
    pub fn gamma_f_pull(&self) -> f64 {
        self.gamma_f_bias / self.gamma_f_stderr
    }

    pub fn gamma_s_pull(&self) -> f64 {
        self.gamma_s_bias / self.gamma_s_stderr
    }
}

pub fn formation_bias(ev: &EventSet) -> Result<FormationBias> {
    let (gf, gs) = estimate_rates(ev, true)?;
    Ok(FormationBias {
        gamma_f_true: ev.params.gamma_f,
        gamma_f_hat: gf.rate,
        gamma_f_bias: gf.rate - ev.params.gamma_f,
        gamma_f_stderr: gf.rate_stderr,
        gamma_s_true: ev.params.gamma_s,
        gamma_s_hat: gs.rate,
        gamma_s_bias: gs.rate - ev.params.gamma_s,
        gamma_s_stderr: gs.rate_stderr,
    })
}

/// Cross-check fit of the cumulative photon counts: `N_f / n` against the
/// empirical fraction of first photons emitted by each grid time, then
/// `N_s / n` against second photons with `gamma_f` held at its fitted value.
/// Uses true times. The reported standard errors are nominal Gauss-Newton
/// values that ignore the correlation between cumulative points.
pub fn fit_cumulative_curves(ev: &EventSet, grid: &[f64]) -> Result<(FitResult, FitResult)> {
    if ev.len() < 2 {
        return Err(Error::InsufficientData("cumulative fit needs at least 2 events".into()));
    }
    let usable: Vec<f64> = grid.iter().copied().filter(|&t| t > 0.0).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData("cumulative fit needs at least 3 positive grid times".into()));
    }
    if usable.iter().any(|t| !t.is_finite()) || usable.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be finite and strictly increasing".into()));
    }

    let n = ev.len() as f64;
    let mut tf: Vec<f64> = ev.events.iter().map(|e| e.t_f).collect();
    let mut ts: Vec<f64> = ev.events.iter().map(|e| e.t_s).collect();
    tf.sort_by(f64::total_cmp);
    ts.sort_by(f64::total_cmp);
    let frac = |sorted: &[f64], t: f64| sorted.partition_point(|&x| x <= t) as f64 / n;
    let emp_f: Vec<f64> = usable.iter().map(|&t| frac(&tf, t)).collect();
    let emp_s: Vec<f64> = usable.iter().map(|&t| frac(&ts, t)).collect();

    let guess_f = mle_exponential_rate(&tf)?.rate;
    let model_f = |g: f64, t: f64| -(-g * t).exp_m1();
    let rate_f = minimize_rate(guess_f, |g| sse(&usable, &emp_f, |t| model_f(g, t)));

    let sep: Vec<f64> = ev.events.iter().map(DecayEvent::separation).collect();
    let guess_s = mle_exponential_rate(&sep)?.rate;
    let model_s = |g: f64, t: f64| {
        let p = RateParameters {
            gamma_f: rate_f,
            gamma_s: g,
            n0: 1.0,
            gamma_0: 1.0,
        };
        model::second_photon_distribution(&p, t).unwrap_or(f64::NAN)
    };
    let rate_s = minimize_rate(guess_s, |g| sse(&usable, &emp_s, |t| model_s(g, t)));

    let result = |rate: f64, model: &dyn Fn(f64, f64) -> f64, emp: &[f64]| {
        let m = usable.len();
        let resid = sse(&usable, emp, |t| model(rate, t));
        let h = 1e-6 * rate;
        let jac2 = numeric::sum(
            usable
                .iter()
                .map(|&t| ((model(rate + h, t) - model(rate - h, t)) / (2.0 * h)).powi(2)),
        );
        let sigma2 = resid / (m - 1) as f64;
        FitResult {
            rate,
            rate_stderr: (sigma2 / jac2).sqrt(),
            method: FitMethod::CumulativeLeastSquares,
            n_used: m,
            goodness: sigma2,
        }
    };
    Ok((result(rate_f, &model_f, &emp_f), result(rate_s, &model_s, &emp_s)))
}

fn sse(grid: &[f64], emp: &[f64], model: impl Fn(f64) -> f64) -> f64 {
    numeric::sum(grid.iter().zip(emp).map(|(&t, &y)| (model(t) - y).powi(2)))
}

/// Golden-section search in `ln(rate)` over a factor of 10 either side of
/// `guess`.
fn minimize_rate(guess: f64, objective: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let obj = |x: f64| {
        let v = objective(x.exp());
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = (guess.ln() - 10f64.ln(), guess.ln() + 10f64.ln());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = obj(d);
        }
    }
    (0.5 * (a + b)).exp()
}

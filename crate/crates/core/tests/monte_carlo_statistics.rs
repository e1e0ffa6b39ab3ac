//! Distributional checks of the event generator against the closed forms.
//! Seeds are fixed, so every bound below is deterministic.

use pairdecay::model::{self, RateParameters};
use pairdecay::monte_carlo::{coincidence_histogram, empirical_populations, simulate, AtomType, DetectorModel, EventSet};

fn ideal(n: usize, seed: u64) -> EventSet {
    simulate(&RateParameters::reduced(1.0, 2.0).unwrap(), n, seed, &DetectorModel::ideal()).unwrap()
}

fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn fraction(ev: &EventSet, pred: impl Fn(&pairdecay::DecayEvent) -> bool) -> f64 {
    ev.events.iter().filter(|e| pred(e)).count() as f64 / ev.len() as f64
}

/// Kolmogorov-Smirnov distance of `samples` from `Exp(rate)`.
fn ks_exponential(mut samples: Vec<f64>, rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn sample_means() {
    let ev = ideal(1_000_000, 1);
    let s = ev.summary();
    assert!((s.mean_t_f - 1.0).abs() <= 0.004, "{}", s.mean_t_f);
    assert!((s.mean_separation - 0.5).abs() <= 0.002, "{}", s.mean_separation);
}

#[test]
fn survivor_fraction_matches_entangled_population() {
    let ev = ideal(1_000_000, 2);
    let p = RateParameters::reduced(1.0, 2.0).unwrap();
    let expected = model::entangled_population(&p, 1.0).unwrap();
    let got = fraction(&ev, |e| e.t_f > 1.0);
    assert!((got - expected).abs() <= 4.0 * binomial_sigma(expected, ev.len()));
}

#[test]
fn cumulative_photon_counts_match_closed_forms() {
    let n = 1_000_000;
    let ev = ideal(n, 3);
    let p = RateParameters::new(1.0, 2.0, n as f64, 1.0).unwrap();

    let nf = model::first_photon_distribution(&p, 0.5).unwrap();
    let count_f = ev.events.iter().filter(|e| e.t_f <= 0.5).count() as f64;
    assert!((count_f - nf).abs() <= 3.0 * n as f64 * binomial_sigma(nf / n as f64, n));

    let ns = model::second_photon_distribution(&p, 2.0).unwrap();
    let count_s = ev.events.iter().filter(|e| e.t_s <= 2.0).count() as f64;
    assert!((count_s - ns).abs() <= 3.0 * n as f64 * binomial_sigma(ns / n as f64, n));
}

#[test]
fn empirical_product_population_matches_closed_form() {
    let n = 1_000_000;
    let ev = ideal(n, 4);
    let p = RateParameters::reduced(1.0, 2.0).unwrap();
    let grid = [0.0, 0.25, 1.0, 3.0];
    let pops = empirical_populations(&ev, &grid).unwrap();
    for s in &pops {
        let exact = model::population_state(&p, s.t).unwrap();
        for (emp, cf) in [(s.n_e, exact.n_e), (s.n_i, exact.n_i), (s.n_i_g, exact.n_i_g)] {
            let frac = emp / n as f64;
            let tol = 4.0 * binomial_sigma(cf, n) + 1e-12;
            assert!((frac - cf).abs() <= tol, "t={}: {frac} vs {cf}", s.t);
        }
    }
    assert!((pops[2].n_i / n as f64 - 0.116_272_078_967_415).abs() <= 4.0 * binomial_sigma(0.1163, n));

    let pops_b = pairdecay::monte_carlo::empirical_populations_for(&ev, &grid, AtomType::B).unwrap();
    let both = pops[2].n_i + pops_b[2].n_i;
    let in_product = ev.events.iter().filter(|e| e.t_f <= 1.0 && 1.0 < e.t_s).count() as f64;
    assert_eq!(both, in_product);
}

#[test]
fn first_emitter_is_balanced() {
    let ev = ideal(1_000_000, 5);
    let frac_a = fraction(&ev, |e| e.first_emitter == AtomType::A);
    assert!((frac_a - 0.5).abs() <= 4.0 * binomial_sigma(0.5, ev.len()));
}

#[test]
fn kolmogorov_smirnov_against_exponential_laws() {
    let ev = ideal(100_000, 6);
    let critical = 1.949 / (ev.len() as f64).sqrt();
    let d_f = ks_exponential(ev.events.iter().map(|e| e.t_f).collect(), 1.0);
    let d_s = ks_exponential(ev.events.iter().map(|e| e.separation()).collect(), 2.0);
    assert!(d_f < critical, "D_f={d_f}");
    assert!(d_s < critical, "D_s={d_s}");
}

#[test]
fn first_time_and_separation_uncorrelated() {
    let ev = ideal(200_000, 7);
    let n = ev.len() as f64;
    let xs: Vec<f64> = ev.events.iter().map(|e| e.t_f).collect();
    let ys: Vec<f64> = ev.events.iter().map(|e| e.separation()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
    let r = cov / (vx * vy).sqrt();
    assert!(r.abs() <= 4.0 / n.sqrt(), "r={r}");
}

#[test]
fn detection_thinning() {
    let p = RateParameters::reduced(1.0, 2.0).unwrap();
    let d = DetectorModel {
        efficiency: 0.5,
        ..DetectorModel::ideal()
    };
    let ev = simulate(&p, 1_000_000, 8, &d).unwrap();
    let both = fraction(&ev, |e| e.both_detected());
    assert!((both - 0.25).abs() <= 4.0 * binomial_sigma(0.25, ev.len()));
    let single = fraction(&ev, |e| e.detected_f);
    assert!((single - 0.5).abs() <= 4.0 * binomial_sigma(0.5, ev.len()));

    let h = coincidence_histogram(&ev, 0.05, 1e3, true).unwrap();
    let mass = h.total as f64 / ev.len() as f64;
    assert!((mass - 0.25).abs() <= 4.0 * binomial_sigma(0.25, ev.len()));
    assert_eq!(h.overflow, 0);
}

#[test]
fn jitter_broadens_observed_separations_only() {
    let p = RateParameters::reduced(1.0, 2.0).unwrap();
    let d = DetectorModel {
        efficiency: 1.0,
        jitter_sigma: 0.05,
        formation_profile: pairdecay::FormationProfile::Delta,
    };
    let ev = simulate(&p, 100_000, 9, &d).unwrap();
    let diffs: Vec<f64> = ev
        .events
        .iter()
        .map(|e| (e.t_s_obs - e.t_f_obs) - e.separation())
        .collect();
    let n = diffs.len() as f64;
    let var = diffs.iter().map(|x| x * x).sum::<f64>() / n;
    // Difference of two independent jitters has variance 2 sigma^2.
    assert!((var.sqrt() - 0.05 * 2f64.sqrt()).abs() < 0.002, "{}", var.sqrt());
    assert!(ev.events.iter().all(|e| e.t_s >= e.t_f && e.t_f >= 0.0));
}

//! Per-pair emission histories.
//!
//! Each pair draws its first-photon time from `Exp(gamma_f)`, picks the first
//! emitter with a fair coin, and draws the second photon `Exp(gamma_s)` later.
//! A [`DetectorModel`] then thins photons, shifts both observed times of a
//! pair by a common formation offset, and adds independent timing jitter.
//!
//! # Random streams
//!
//! The 64-bit seed is expanded with SplitMix64 into a 256-bit ChaCha8 key;
//! pair `k` uses ChaCha8 stream `k` from word position zero. Draws of one pair
//! therefore never depend on any other pair, which makes the output
//! independent of iteration order and thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Histogram;
use crate::model::{PopulationState, RateParameters};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomType {
    A,
    B,
}

impl AtomType {
    pub fn other(self) -> Self {
        match self {
            AtomType::A => AtomType::B,
            AtomType::B => AtomType::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AtomType::A => "A",
            AtomType::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEvent {
    pub pair_id: u64,
    pub t_f: f64,
    pub t_s: f64,
    pub first_emitter: AtomType,
    pub detected_f: bool,
    pub detected_s: bool,
    pub t_f_obs: f64,
    pub t_s_obs: f64,
}

impl DecayEvent {
    /// True separation `t_s - t_f`.
    pub fn separation(&self) -> f64 {
        self.t_s - self.t_f
    }

    pub fn observed_separation(&self) -> f64 {
        (self.t_s_obs - self.t_f_obs).abs()
    }

    pub fn both_detected(&self) -> bool {
        self.detected_f && self.detected_s
    }

    /// Atom left unstable in a product state after the first emission.
    pub fn survivor(&self) -> AtomType {
        self.first_emitter.other()
    }
}

/// Distribution of the true pair-formation time around the nominal origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FormationProfile {
    Delta,
    Gaussian { sigma: f64 },
    /// Uniform on `[-width / 2, width / 2]`.
    Uniform { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub jitter_sigma: f64,
    pub formation_profile: FormationProfile,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            jitter_sigma: 0.0,
            formation_profile: FormationProfile::Delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter(format!(
                "efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        let width_ok = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        width_ok("jitter_sigma", self.jitter_sigma)?;
        match self.formation_profile {
            FormationProfile::Delta => Ok(()),
            FormationProfile::Gaussian { sigma } => width_ok("formation sigma", sigma),
            FormationProfile::Uniform { width } => width_ok("formation width", width),
        }
    }

    pub fn is_ideal(&self) -> bool {
        *self == Self::ideal()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub params: RateParameters,
    pub detector: DetectorModel,
    pub seed: u64,
    pub events: Vec<DecayEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub n_pairs: usize,
    pub mean_t_f: f64,
    pub mean_separation: f64,
}

impl EventSet {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn summary(&self) -> EventSummary {
        let n = self.events.len();
        let mean = |f: fn(&DecayEvent) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                numeric::sum(self.events.iter().map(f)) / n as f64
            }
        };
        EventSummary {
            n_pairs: n,
            mean_t_f: mean(|e| e.t_f),
            mean_separation: mean(DecayEvent::separation),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 generator positioned at the start of the stream for `pair_id`.
pub fn pair_rng(seed: u64, pair_id: u64) -> ChaCha8Rng {
    let mut rng = base_rng(seed);
    rng.set_stream(pair_id);
    rng
}

fn base_rng(seed: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform on `(0, 1]`.
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Inverse-CDF exponential draw.
fn exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

fn simulate_pair(base: &ChaCha8Rng, pair_id: u64, p: &RateParameters, d: &DetectorModel) -> DecayEvent {
    let mut rng = base.clone();
    rng.set_stream(pair_id);
    rng.set_word_pos(0);

    let t_f = exponential(&mut rng, p.gamma_f);
    let first_emitter = if rng.random::<bool>() { AtomType::A } else { AtomType::B };
    let t_s = t_f + exponential(&mut rng, p.gamma_s);

    let detected_f = rng.random::<f64>() < d.efficiency;
    let detected_s = rng.random::<f64>() < d.efficiency;

    let offset = match d.formation_profile {
        FormationProfile::Delta => 0.0,
        FormationProfile::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
        FormationProfile::Uniform { width } => width * (rng.random::<f64>() - 0.5),
    };
    let (jitter_f, jitter_s) = if d.jitter_sigma > 0.0 {
        (
            d.jitter_sigma * rng.sample::<f64, _>(StandardNormal),
            d.jitter_sigma * rng.sample::<f64, _>(StandardNormal),
        )
    } else {
        (0.0, 0.0)
    };

    DecayEvent {
        pair_id,
        t_f,
        t_s,
        first_emitter,
        detected_f,
        detected_s,
        t_f_obs: t_f + offset + jitter_f,
        t_s_obs: t_s + offset + jitter_s,
    }
}

/// Generate `n_pairs` emission histories. `p.n0` is not used; the sample
/// size is `n_pairs`.
pub fn simulate(p: &RateParameters, n_pairs: usize, seed: u64, d: &DetectorModel) -> Result<EventSet> {
    p.validate()?;
    d.validate()?;
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be >= 1".into()));
    }
    let n = u64::try_from(n_pairs)
        .map_err(|_| Error::InvalidParameter(format!("n_pairs {n_pairs} overflows the pair index")))?;
    let base = base_rng(seed);
    let events = (0..n)
        .into_par_iter()
        .map(|id| simulate_pair(&base, id, p, d))
        .collect();
    Ok(EventSet {
        params: *p,
        detector: *d,
        seed,
        events,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Domain("grid times must be finite and >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("grid must be sorted ascending".into()));
    }
    Ok(())
}

/// Number of sorted values `<= t`.
fn count_le(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&x| x <= t)
}

/// Per-type population counts from the true emission times, for atom type A.
pub fn empirical_populations(ev: &EventSet, grid: &[f64]) -> Result<Vec<PopulationState>> {
    empirical_populations_for(ev, grid, AtomType::A)
}

/// Per-type population counts for `atom`: `n_e = #{t_f > t}`, `n_i` counts
/// pairs whose surviving unstable atom is `atom` with `t_f <= t < t_s`, and
/// `n_i_g` follows by conservation.
pub fn empirical_populations_for(ev: &EventSet, grid: &[f64], atom: AtomType) -> Result<Vec<PopulationState>> {
    check_grid(grid)?;
    let n = ev.events.len();
    let mut all_tf: Vec<f64> = ev.events.iter().map(|e| e.t_f).collect();
    let (mut surv_tf, mut surv_ts): (Vec<f64>, Vec<f64>) = ev
        .events
        .iter()
        .filter(|e| e.survivor() == atom)
        .map(|e| (e.t_f, e.t_s))
        .unzip();
    all_tf.sort_by(f64::total_cmp);
    surv_tf.sort_by(f64::total_cmp);
    surv_ts.sort_by(f64::total_cmp);

    Ok(grid
        .iter()
        .map(|&t| {
            let n_e = n - count_le(&all_tf, t);
            let n_i = count_le(&surv_tf, t) - count_le(&surv_ts, t);
            PopulationState {
                t,
                n_e: n_e as f64,
                n_i: n_i as f64,
                n_i_g: (n - n_e - n_i) as f64,
            }
        })
        .collect())
}

/// Histogram of `|dt| = t_s - t_f` over `[0, t_max)`. With `use_observed`,
/// only pairs with both photons detected contribute, using observed times.
pub fn coincidence_histogram(ev: &EventSet, bin_width: f64, t_max: f64, use_observed: bool) -> Result<Histogram> {
    let empty = Histogram::uniform(bin_width, t_max)?;
    Ok(ev
        .events
        .par_iter()
        .fold(
            || empty.clone(),
            |mut h, e| {
                if !use_observed {
                    h.fill(e.separation());
                } else if e.both_detected() {
                    h.fill(e.observed_separation());
                }
                h
            },
        )
        .reduce(|| empty.clone(), |a, b| a.merged(&b)))
}

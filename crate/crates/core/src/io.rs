//! File schemas: event CSV, metadata sidecar JSON and plot-ready curves.
//!
//! Floating-point values are written in scientific notation with 17
//! significant digits, which round-trips every `f64` exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Histogram;
use crate::model::{PhotonDistributions, PopulationState, RateParameters};
use crate::monte_carlo::{AtomType, DecayEvent, DetectorModel, EventSet};

pub const EVENTS_HEADER: [&str; 8] = [
    "pair_id",
    "t_f",
    "t_s",
    "first_emitter",
    "detected_f",
    "detected_s",
    "t_f_obs",
    "t_s_obs",
];
pub const POPULATION_HEADER: &str = "t,n_e,n_i,n_i_g,N_f,N_s";
pub const SWEEP_HEADER: &str = "gamma_f_over_gamma0,tau_over_tau0";
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count";

/// Random-stream scheme recorded in metadata.
pub const RNG_SCHEME: &str = "chacha8; key = splitmix64(seed) x4; stream = pair_id";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sidecar for an event CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetadata {
    pub params: RateParameters,
    pub detector: DetectorModel,
    pub seed: u64,
    pub n_pairs: usize,
    pub rng: String,
}

impl EventMetadata {
    pub fn of(ev: &EventSet) -> Self {
        Self {
            params: ev.params,
            detector: ev.detector,
            seed: ev.seed,
            n_pairs: ev.len(),
            rng: RNG_SCHEME.to_string(),
        }
    }
}

pub fn write_events_csv<W: Write>(mut w: W, events: &[DecayEvent]) -> Result<()> {
    writeln!(w, "{}", EVENTS_HEADER.join(","))?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.pair_id,
            fmt_f64(e.t_f),
            fmt_f64(e.t_s),
            e.first_emitter.as_str(),
            e.detected_f,
            e.detected_s,
            fmt_f64(e.t_f_obs),
            fmt_f64(e.t_s_obs),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn schema(line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Parse an event CSV. Rejects files without a header or without data rows,
/// and rows violating `0 <= t_f <= t_s` or carrying non-finite observed times.
pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<DecayEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(schema(1, "missing header"));
    }
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != EVENTS_HEADER {
        return Err(schema(
            1,
            format!("expected header `{}`, found `{}`", EVENTS_HEADER.join(","), got.join(",")),
        ));
    }

    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            schema(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let time = |k: usize| -> Result<f64> {
            field(k)
                .parse::<f64>()
                .map_err(|_| schema(line, format!("{}: `{}` is not a number", EVENTS_HEADER[k], field(k))))
        };
        let pair_id = field(0)
            .parse::<u64>()
            .map_err(|_| schema(line, format!("pair_id: `{}` is not an unsigned integer", field(0))))?;
        let first_emitter = match field(3) {
            "A" => AtomType::A,
            "B" => AtomType::B,
            other => return Err(schema(line, format!("first_emitter: expected A or B, got `{other}`"))),
        };
        let flag = |k: usize| {
            parse_bool(field(k)).ok_or_else(|| schema(line, format!("{}: `{}` is not a boolean", EVENTS_HEADER[k], field(k))))
        };
        let e = DecayEvent {
            pair_id,
            t_f: time(1)?,
            t_s: time(2)?,
            first_emitter,
            detected_f: flag(4)?,
            detected_s: flag(5)?,
            t_f_obs: time(6)?,
            t_s_obs: time(7)?,
        };
        if !(e.t_f.is_finite() && e.t_s.is_finite() && e.t_f >= 0.0 && e.t_s >= e.t_f) {
            return Err(schema(line, format!("times must satisfy 0 <= t_f <= t_s, got t_f={}, t_s={}", e.t_f, e.t_s)));
        }
        if !(e.t_f_obs.is_finite() && e.t_s_obs.is_finite()) {
            return Err(schema(line, "observed times must be finite"));
        }
        events.push(e);
    }
    if events.is_empty() {
        return Err(schema(1, "no event rows"));
    }
    Ok(events)
}

pub fn write_metadata<W: Write>(w: W, meta: &EventMetadata) -> Result<()> {
    serde_json::to_writer_pretty(w, meta)?;
    Ok(())
}

pub fn read_metadata<R: Read>(r: R) -> Result<EventMetadata> {
    Ok(serde_json::from_reader(r)?)
}

pub fn write_population_csv<W: Write>(mut w: W, rows: &[(PopulationState, PhotonDistributions)]) -> Result<()> {
    writeln!(w, "{POPULATION_HEADER}")?;
    for (s, d) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.n_e),
            fmt_f64(s.n_i),
            fmt_f64(s.n_i_g),
            fmt_f64(d.N_f),
            fmt_f64(d.N_s)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for &(gf, tau) in rows {
        writeln!(w, "{},{}", fmt_f64(gf), fmt_f64(tau))?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram rows; the overflow count goes in a trailing `overflow` row with
/// an infinite right edge.
pub fn write_histogram_csv<W: Write>(mut w: W, h: &Histogram) -> Result<()> {
    writeln!(w, "{HISTOGRAM_HEADER}")?;
    for (edge, c) in h.bin_edges.windows(2).zip(&h.counts) {
        writeln!(w, "{},{},{}", fmt_f64(edge[0]), fmt_f64(edge[1]), c)?;
    }
    writeln!(w, "{},inf,{}", fmt_f64(*h.bin_edges.last().unwrap()), h.overflow)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monte_carlo::simulate;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn events_round_trip() {
        let p = RateParameters::reduced(1.0, 2.0).unwrap();
        let d = DetectorModel {
            efficiency: 0.7,
            jitter_sigma: 0.01,
            formation_profile: crate::monte_carlo::FormationProfile::Gaussian { sigma: 0.1 },
        };
        let ev = simulate(&p, 500, 8, &d).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &ev.events).unwrap();
        let back = read_events_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ev.events);
    }

    #[test]
    fn metadata_round_trip() {
        let p = RateParameters::reduced(1.0, 2.0).unwrap();
        let ev = simulate(&p, 10, 8, &DetectorModel::ideal()).unwrap();
        let meta = EventMetadata::of(&ev);
        let mut buf = Vec::new();
        write_metadata(&mut buf, &meta).unwrap();
        assert_eq!(read_metadata(buf.as_slice()).unwrap(), meta);
    }

    fn schema_line(input: &str) -> u64 {
        match read_events_csv(input.as_bytes()) {
            Err(Error::Schema { line, .. }) => line,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let h = EVENTS_HEADER.join(",");
        assert_eq!(schema_line(""), 1);
        assert_eq!(schema_line(&format!("{h}\n")), 1);
        assert_eq!(schema_line("a,b,c\n1,2,3\n"), 1);
        let good = "0,1.0,2.0,A,true,true,1.0,2.0";
        assert_eq!(schema_line(&format!("{h}\n{good}\n0,x,2.0,A,true,true,1.0,2.0\n")), 3);
        assert_eq!(schema_line(&format!("{h}\n0,1.0,2.0,C,true,true,1.0,2.0\n")), 2);
        assert_eq!(schema_line(&format!("{h}\n0,3.0,2.0,A,true,true,1.0,2.0\n")), 2);
        assert_eq!(schema_line(&format!("{h}\n0,1.0,2.0,A,yes,true,1.0,2.0\n")), 2);
        assert_eq!(schema_line(&format!("{h}\n{good}\n{good}\n0,1.0,2.0,A,true\n")), 4);
    }

    #[test]
    fn numeric_flags_accepted() {
        let h = EVENTS_HEADER.join(",");
        let ev = read_events_csv(format!("{h}\n3,0.5,0.75,B,1,0,0.5,0.75\n").as_bytes()).unwrap();
        assert_eq!(ev[0].pair_id, 3);
        assert!(ev[0].detected_f && !ev[0].detected_s);
        assert_eq!(ev[0].first_emitter, AtomType::B);
    }

    #[test]
    fn histogram_csv_has_overflow_row() {
        let mut h = Histogram::uniform(0.5, 1.0).unwrap();
        h.fill(0.1);
        h.fill(3.0);
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &h).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], HISTOGRAM_HEADER);
        assert!(lines[3].ends_with(",inf,1"));
    }
}

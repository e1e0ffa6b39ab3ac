use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pairdecay::estimation::{self, FormationBias, PipelineOptions, PipelineResult};
use pairdecay::io as pio;
use pairdecay::lifetime::{self, Branch, LifetimeSolution, REFERENCE_LIFETIMES};
use pairdecay::model::{self, RateParameters};
use pairdecay::monte_carlo::{self, DetectorModel, EventSet, FormationProfile};
use serde::Serialize;

use crate::{
    AnalyzeArgs, DetectorArgs, Failure, Formation, HistogramArgs, RateArgs, SimulateArgs, SolveArgs,
    SweepArgs, TableArgs, EXIT_INVALID, EXIT_IO, EXIT_MISMATCH,
};

type CmdResult = Result<(), Failure>;

const CURVE_POINTS: usize = 201;

fn check_gamma0(g0: f64) -> Result<(), Failure> {
    if g0.is_finite() && g0 > 0.0 {
        Ok(())
    } else {
        Err(Failure::new(EXIT_INVALID, format!("--gamma0 must be finite and > 0, got {g0}")))
    }
}

fn reduced_params(r: &RateArgs) -> Result<RateParameters, Failure> {
    check_gamma0(r.gamma0)?;
    Ok(RateParameters::new(r.gamma_f / r.gamma0, r.gamma_s / r.gamma0, 1.0, 1.0)?)
}

fn detector_model(d: &DetectorArgs, g0: f64) -> Result<DetectorModel, Failure> {
    let width = d.formation_width * g0;
    let model = DetectorModel {
        efficiency: d.efficiency,
        jitter_sigma: d.jitter * g0,
        formation_profile: match d.formation {
            Formation::Delta => FormationProfile::Delta,
            Formation::Gaussian => FormationProfile::Gaussian { sigma: width },
            Formation::Uniform => FormationProfile::Uniform { width },
        },
    };
    model.validate()?;
    Ok(model)
}

fn histogram_options(h: &HistogramArgs, g0: f64, use_observed: bool) -> Result<PipelineOptions, Failure> {
    let opts = PipelineOptions {
        use_observed,
        bin_width: h.bin_width * g0,
        t_max: h.t_max * g0,
    };
    // Surface bad binning as an argument error before any work is done.
    estimation::Histogram::uniform(opts.bin_width, opts.t_max)?;
    Ok(opts)
}

/// Create the output directory and make sure none of `files` would be
/// clobbered without `--overwrite`.
fn prepare_output(dir: &Path, overwrite: bool, files: &[&str]) -> Result<PathBuf, Failure> {
    if !overwrite {
        if let Some(existing) = files.iter().map(|f| dir.join(f)).find(|p| p.exists()) {
            return Err(Failure::new(
                EXIT_IO,
                format!("{} exists; pass --overwrite to replace it", existing.display()),
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn write_events(dir: &Path, ev: &EventSet) -> CmdResult {
    pio::write_events_csv(create(&dir.join("events.csv"))?, &ev.events)?;
    pio::write_metadata(create(&dir.join("meta.json"))?, &pio::EventMetadata::of(ev))?;
    Ok(())
}

fn print_summary(ev: &EventSet) {
    let s = ev.summary();
    println!("n_pairs         {}", s.n_pairs);
    println!("mean t_f        {:.6}", s.mean_t_f);
    println!("mean t_s - t_f  {:.6}", s.mean_separation);
}

pub(crate) fn simulate(a: &SimulateArgs) -> CmdResult {
    let p = reduced_params(&a.rates)?;
    let d = detector_model(&a.detector, a.rates.gamma0)?;
    let ev = monte_carlo::simulate(&p, a.n, a.seed, &d)?;
    let dir = prepare_output(&a.out.output, a.out.overwrite, &["events.csv", "meta.json"])?;
    write_events(&dir, &ev)?;
    print_summary(&ev);
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    #[serde(flatten)]
    result: PipelineResult,
    n_pairs: usize,
    branch: Branch,
    /// First-photon rate below the free-atom rate.
    below_disentanglement_bound: bool,
    /// Present when the generating rates are known.
    bias: Option<FormationBias>,
}

const ANALYSIS_FILES: [&str; 3] = ["results.json", "coincidence.csv", "populations.csv"];

fn analyze_events(ev: &EventSet, opts: &PipelineOptions, truth_known: bool, dir: &Path) -> CmdResult {
    let result = estimation::run_pipeline(ev, opts)?;
    let fitted = RateParameters::new(result.gamma_f, result.gamma_s, ev.len() as f64, 1.0)?;
    let sol = lifetime::solve_lifetime(&fitted)?;
    let bias = if truth_known && opts.use_observed {
        Some(estimation::formation_bias(ev)?)
    } else {
        None
    };
    let report = AnalysisReport {
        n_pairs: ev.len(),
        branch: sol.branch,
        below_disentanglement_bound: !fitted.satisfies_disentanglement_bound(),
        bias,
        result,
    };

    let h = monte_carlo::coincidence_histogram(ev, opts.bin_width, opts.t_max, opts.use_observed)?;
    let curve = model::population_curve(&fitted, &model::uniform_grid(opts.t_max, CURVE_POINTS))?;
    write_json(&dir.join("results.json"), &report)?;
    pio::write_histogram_csv(create(&dir.join("coincidence.csv"))?, &h)?;
    pio::write_population_csv(create(&dir.join("populations.csv"))?, &curve)?;

    let r = &report.result;
    println!("gamma_f   {:.6} +- {:.6}", r.gamma_f, r.gamma_f_stderr);
    println!("gamma_s   {:.6} +- {:.6}", r.gamma_s, r.gamma_s_stderr);
    println!("tau/tau0  {:.6} +- {:.6}", r.tau_over_tau0, r.tau_stderr);
    match r.tau_app_over_tau0 {
        Some(t) => println!("tau_app   {t:.6}"),
        None => println!("tau_app   n/a (too few populated bins)"),
    }
    if let Some(b) = &report.bias {
        println!(
            "bias      gamma_f {:+.6} ({:+.1} sigma), gamma_s {:+.6} ({:+.1} sigma)",
            b.gamma_f_bias,
            b.gamma_f_pull(),
            b.gamma_s_bias,
            b.gamma_s_pull()
        );
    }
    Ok(())
}

pub(crate) fn analyze(a: &AnalyzeArgs) -> CmdResult {
    let opts = histogram_options(&a.hist, 1.0, !a.true_times)?;
    let file = File::open(&a.input).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", a.input.display())))?;
    let events = pio::read_events_csv(BufReader::new(file))?;

    let meta_path = a.meta.clone().or_else(|| {
        let sibling = a.input.with_file_name("meta.json");
        sibling.exists().then_some(sibling)
    });
    let meta = match meta_path {
        Some(path) => {
            let f = File::open(&path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
            Some(pio::read_metadata(BufReader::new(f))?)
        }
        None => None,
    };
    let n = events.len();
    let ev = match &meta {
        Some(m) => EventSet {
            params: m.params,
            detector: m.detector,
            seed: m.seed,
            events,
        },
        None => EventSet {
            // Generating rates unknown; only gamma_0 = 1 is used downstream.
            params: RateParameters::new(1.0, 1.0, n as f64, 1.0)?,
            detector: DetectorModel::ideal(),
            seed: 0,
            events,
        },
    };
    let dir = prepare_output(&a.out.output, a.out.overwrite, &ANALYSIS_FILES)?;
    analyze_events(&ev, &opts, meta.is_some(), &dir)
}

pub(crate) fn pipeline(a: &SimulateArgs) -> CmdResult {
    let p = reduced_params(&a.rates)?;
    let d = detector_model(&a.detector, a.rates.gamma0)?;
    let opts = histogram_options(&a.hist, a.rates.gamma0, !a.true_times)?;
    let ev = monte_carlo::simulate(&p, a.n, a.seed, &d)?;
    let mut files = vec!["events.csv", "meta.json"];
    files.extend(ANALYSIS_FILES);
    let dir = prepare_output(&a.out.output, a.out.overwrite, &files)?;
    write_events(&dir, &ev)?;
    print_summary(&ev);
    analyze_events(&ev, &opts, true, &dir)
}

#[derive(Debug, Serialize)]
struct SolveReport {
    gamma_f_over_gamma0: f64,
    gamma_s_over_gamma0: f64,
    below_disentanglement_bound: bool,
    #[serde(flatten)]
    solution: LifetimeSolution,
}

pub(crate) fn solve(a: &SolveArgs) -> CmdResult {
    let p = reduced_params(&a.rates)?;
    let sol = lifetime::solve_lifetime(&p)?;
    let report = SolveReport {
        gamma_f_over_gamma0: p.gamma_f,
        gamma_s_over_gamma0: p.gamma_s,
        below_disentanglement_bound: !p.satisfies_disentanglement_bound(),
        solution: sol,
    };
    if report.below_disentanglement_bound {
        eprintln!("warning: gamma_f < gamma_0 violates the disentanglement bound");
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?);
    if let Some(out) = &a.output {
        let dir = prepare_output(out, a.overwrite, &["lifetime.json", "populations.csv"])?;
        write_json(&dir.join("lifetime.json"), &report)?;
        let t_end = 20.0 / p.gamma_f.min(p.gamma_s);
        let curve = model::population_curve(&p, &model::uniform_grid(t_end, CURVE_POINTS))?;
        pio::write_population_csv(create(&dir.join("populations.csv"))?, &curve)?;
    }
    Ok(())
}

pub(crate) fn sweep(a: &SweepArgs) -> CmdResult {
    check_gamma0(a.gamma0)?;
    if a.points == 0 {
        return Err(Failure::new(EXIT_INVALID, "--points must be >= 1"));
    }
    if !(a.gamma_f_min > 0.0 && a.gamma_f_max >= a.gamma_f_min && a.gamma_f_max.is_finite()) {
        return Err(Failure::new(
            EXIT_INVALID,
            format!("need 0 < gamma-f-min <= gamma-f-max, got [{}, {}]", a.gamma_f_min, a.gamma_f_max),
        ));
    }
    let (lo, hi) = (a.gamma_f_min / a.gamma0, a.gamma_f_max / a.gamma0);
    let grid: Vec<f64> = if a.points == 1 {
        vec![lo]
    } else {
        (0..a.points)
            .map(|k| lo + (hi - lo) * k as f64 / (a.points - 1) as f64)
            .collect()
    };
    let rows = lifetime::lifetime_sweep(a.gamma_s / a.gamma0, &grid)?;
    let below = rows.iter().filter(|(gf, _)| *gf < 1.0).count();
    if below > 0 {
        eprintln!("warning: {below} grid points have gamma_f < gamma_0 (below the disentanglement bound)");
    }
    let dir = prepare_output(&a.out.output, a.out.overwrite, &["sweep.csv"])?;
    pio::write_sweep_csv(create(&dir.join("sweep.csv"))?, &rows)?;
    println!("{} points written to {}", rows.len(), dir.join("sweep.csv").display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct TableRow {
    gamma_f_over_gamma0: f64,
    gamma_s_over_gamma0: f64,
    tau_over_tau0: f64,
    reference: f64,
    matches: bool,
}

pub(crate) fn paper_table(a: &TableArgs) -> CmdResult {
    if !(a.tol.is_finite() && a.tol >= 0.0) {
        return Err(Failure::new(EXIT_INVALID, format!("--tol must be >= 0, got {}", a.tol)));
    }
    let mut rows = Vec::with_capacity(REFERENCE_LIFETIMES.len());
    for (gf, gs, reference) in REFERENCE_LIFETIMES {
        let tau = lifetime::solve_lifetime(&RateParameters::reduced(gf, gs)?)?.tau_over_tau0;
        rows.push(TableRow {
            gamma_f_over_gamma0: gf,
            gamma_s_over_gamma0: gs,
            tau_over_tau0: tau,
            reference,
            matches: (tau - reference).abs() <= a.tol,
        });
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?);
    } else {
        println!("gamma_f/gamma0  gamma_s/gamma0  tau/tau0      reference  ok");
        for r in &rows {
            println!(
                "{:>14}  {:>14}  {:<12.8}  {:>9.2}  {}",
                r.gamma_f_over_gamma0,
                r.gamma_s_over_gamma0,
                r.tau_over_tau0,
                r.reference,
                if r.matches { "yes" } else { "NO" }
            );
        }
    }
    if rows.iter().all(|r| r.matches) {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_MISMATCH,
            format!("lifetimes differ from the reference values by more than {}", a.tol),
        ))
    }
}

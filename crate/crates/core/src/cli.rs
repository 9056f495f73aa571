//! The `hcons` command line: simulate, certify, verify, sweep and plot.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a model
//! breaks its contract, 2 for configuration and input errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    certify_consensus, metric_norm_consistency, sample_row_stochastic, two_cone_demo, verify_cone_diameter,
    verify_diameter_decay, verify_lemma_contraction, verify_sandwich, verify_transition_factors, CertifyOptions,
    ConsensusReport, ContractionDomain, ContractionParams, FactorReport, MetricNormReport, Verdict,
};
use crate::dynamics::Scheme;
use crate::error::{Error, Result};
use crate::hilbert::{max_gamma, ComparisonConstant};
use crate::output::{key_values, tag_svg, to_json, trajectory_from_csv, trajectory_to_csv, write_file, RunMetadata};
use crate::plot::{plot_metric, plot_signal, plot_states};
use crate::scenario::{set_path, Scenario, BUNDLED};
use crate::topology::LowerBoundReport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hcons",
    version,
    about = "Consensus simulation and Hilbert-metric certification"
)]
pub struct Cli {
    /// Output directory for CSV, reports and plots.
    #[arg(long, global = true, env = "HCONS_OUT_DIR", default_value = "hcons-out")]
    pub out: PathBuf,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write its trajectory, report and plots.
    Simulate(ScenarioArgs),
    /// Certify consensus for a scenario or a trajectory CSV.
    Certify(CertifyArgs),
    /// Run a randomized check of the cone and metric results.
    Verify(VerifyArgs),
    /// Run a scenario once per value of one parameter.
    Sweep(SweepArgs),
    /// Plot a trajectory CSV or a scenario's switching signal.
    Plot(PlotArgs),
    /// List the bundled scenarios.
    List,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_plots: bool,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
    pub scenario: Option<PathBuf>,
    /// Trajectory CSV written by `simulate`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fit_window: Option<f64>,
    #[arg(long)]
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Contraction,
    DiameterDecay,
    ConeDiameter,
    Sandwich,
    TwoCone,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    FullCone,
    Box,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = 6)]
    pub n_max: usize,
    /// Samples per parameter combination.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where the contraction test points are drawn from.
    #[arg(long, value_enum, default_value = "full-cone")]
    pub domain: DomainArg,
    /// Comma-separated δ values for the contraction check.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.3, 0.6, 0.9])]
    pub delta: Vec<f64>,
    /// ε as fractions of 1/√n, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75])]
    pub epsilon_fraction: Vec<f64>,
    /// Largest power checked by the diameter decay suite.
    #[arg(long, default_value_t = 8)]
    pub m_max: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Dotted key path, e.g. `topology.delta`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated TOML values. An empty list gives an empty table.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    States,
    Metric,
    Signal,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// Trajectory CSV (states, metric).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Scenario whose topology is plotted (signal).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Links as 1-based `i-j`, comma-separated; default: every link seen.
    #[arg(long, value_delimiter = ',')]
    pub links: Vec<String>,
    /// Output file; default under the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` and runs the command, writing the text report to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::from_default_env().filter_level(level).try_init();
    match execute(&cli, stdout) {
        Ok(pass) => {
            if pass {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ContractViolation { .. } | Error::NotQsc | Error::Hypothesis(_) | Error::NotCertifiable(_) => {
            EXIT_FAILED
        }
        _ => EXIT_CONFIG,
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<bool> {
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(cli, a, out),
        Command::Certify(a) => certify_cmd(cli, a, out),
        Command::Verify(a) => verify_cmd(cli, a, out),
        Command::Sweep(a) => sweep_cmd(cli, a, out),
        Command::Plot(a) => plot_cmd(cli, a, out),
        Command::List => {
            for (name, text) in BUNDLED {
                let summary = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                writeln!(out, "{name}\t{summary}")?;
            }
            Ok(true)
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<(Scenario, PathBuf)> {
    let (value, base) = Scenario::load(path)?;
    let mut s = Scenario::from_value(value)?;
    if seed.is_some() {
        s.seed = seed;
    }
    Ok((s, base))
}

#[derive(Debug, Serialize)]
struct RunDocument<'a> {
    scenario: &'a str,
    scenario_hash: &'a str,
    model: &'a str,
    agents: usize,
    steps: usize,
    consensus: &'a ConsensusReport,
    lower_bound: Option<LowerBoundSummary<'a>>,
    transition_factors: Option<FactorSummary>,
    metric_norm: Option<&'a MetricNormReport>,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct LowerBoundSummary<'a> {
    pass: bool,
    mode: &'a str,
    intervals: usize,
    #[serde(serialize_with = "crate::output::lossless_float")]
    worst_margin: f64,
    worst_interval: Option<(f64, f64)>,
    binding_link: Option<(usize, usize)>,
    b_qsc: bool,
}

impl<'a> LowerBoundSummary<'a> {
    fn new(r: &'a LowerBoundReport) -> Self {
        let worst = r.worst_interval.map(|k| &r.intervals[k]);
        Self {
            pass: r.pass,
            mode: &r.mode,
            intervals: r.intervals.len(),
            worst_margin: r.worst_margin,
            worst_interval: worst.map(|w| (w.t_start, w.t_end)),
            // Reported 1-based like the trace files.
            binding_link: worst.and_then(|w| w.binding).map(|(i, j)| (i + 1, j + 1)),
            b_qsc: r.b_qsc,
        }
    }
}

#[derive(Debug, Serialize)]
struct FactorSummary {
    pass: bool,
    intervals: usize,
    max_row_sum_error: f64,
    min_entry: f64,
    all_bitwise: bool,
    #[serde(serialize_with = "crate::output::lossless_float")]
    worst_lower_bound_slack: f64,
}

impl From<&FactorReport> for FactorSummary {
    fn from(r: &FactorReport) -> Self {
        Self {
            pass: r.pass,
            intervals: r.intervals.len(),
            max_row_sum_error: r.max_row_sum_error,
            min_entry: r.min_entry,
            all_bitwise: r.all_bitwise,
            worst_lower_bound_slack: r.worst_lower_bound_slack,
        }
    }
}

fn simulate_cmd(cli: &Cli, a: &ScenarioArgs, out: &mut dyn Write) -> Result<bool> {
    let start = Instant::now();
    let (scenario, base) = load_scenario(&a.scenario, a.seed)?;
    let built = scenario.build(&base)?;
    let hash = scenario.hash();
    let run = built.run()?;
    let lb = run.lower_bound.as_ref().map(LowerBoundSummary::new);
    let pass = lb.as_ref().is_none_or(|l| l.pass);
    let doc = RunDocument {
        scenario: &scenario.name,
        scenario_hash: &hash,
        model: built.model.kind_name(),
        agents: built.model.n(),
        steps: run.trajectory.len() - 1,
        consensus: &run.consensus,
        lower_bound: lb,
        transition_factors: None,
        metric_norm: None,
        pass,
    };
    let dir = &cli.out;
    let name = &scenario.name;
    let csv_name = scenario
        .outputs
        .csv
        .clone()
        .unwrap_or_else(|| format!("{name}.csv").into());
    let report_name = scenario
        .outputs
        .report
        .clone()
        .unwrap_or_else(|| format!("{name}.report.json").into());
    write_file(dir, &csv_name, &trajectory_to_csv(&run.trajectory, &hash))?;
    write_file(dir, &report_name, &to_json(&doc)?)?;
    if !a.no_plots {
        let stem = scenario.outputs.plots.clone().unwrap_or_else(|| name.into());
        let stem = stem.display();
        write_file(
            dir,
            format!("{stem}.states.svg"),
            &tag_svg(&plot_states(&run.trajectory, name), &hash),
        )?;
        write_file(
            dir,
            format!("{stem}.metric.svg"),
            &tag_svg(&plot_metric(&run.trajectory, Some(&run.consensus), name), &hash),
        )?;
    }
    let meta = RunMetadata::new(name, &hash, scenario.seed(), "simulate", start.elapsed().as_secs_f64())
        .with_resolved(&scenario)
        .with_verdict(run.consensus.verdict);
    write_file(dir, format!("{name}.meta.json"), &to_json(&meta)?)?;
    out.write_all(key_values(&doc).as_bytes())?;
    writeln!(out, "output_dir = {}", dir.display())?;
    Ok(pass)
}

fn certify_cmd(cli: &Cli, a: &CertifyArgs, out: &mut dyn Write) -> Result<bool> {
    let start = Instant::now();
    let apply = |mut o: CertifyOptions| {
        if let Some(f) = a.fit_window {
            o.fit_window_fraction = f;
        }
        if let Some(r) = a.residual_tol {
            o.residual_tol = r;
        }
        o
    };
    if let Some(csv) = &a.csv {
        let text = std::fs::read_to_string(csv)?;
        let loaded = trajectory_from_csv(&text)?;
        let report = certify_consensus(&loaded.trajectory, &apply(CertifyOptions::default()))?;
        let hash = loaded.scenario_hash.unwrap_or_default();
        let doc = RunDocument {
            scenario: &csv.display().to_string(),
            scenario_hash: &hash,
            model: "trajectory",
            agents: loaded.trajectory.n(),
            steps: loaded.trajectory.len() - 1,
            consensus: &report,
            lower_bound: None,
            transition_factors: None,
            metric_norm: None,
            pass: report.verdict == Verdict::Exponential,
        };
        out.write_all(key_values(&doc).as_bytes())?;
        return Ok(doc.pass);
    }
    let path = a.scenario.as_ref().expect("clap enforces scenario or csv");
    let (mut scenario, base) = load_scenario(path, a.seed)?;
    scenario.certification = apply(scenario.certification);
    let built = scenario.build(&base)?;
    let hash = scenario.hash();
    let run = built.run()?;
    let factors = if built.scheme == Scheme::Euler && built.model.is_certifiable() {
        Some(verify_transition_factors(
            &built.model,
            &run.trajectory,
            &built.checkpoints,
        )?)
    } else {
        None
    };
    let metric = if run
        .trajectory
        .states()
        .iter()
        .all(|s| s.shifted(built.shift).is_positive())
    {
        Some(metric_norm_consistency(&run.trajectory, &ComparisonConstant::Analytic)?)
    } else {
        None
    };
    let lb = run.lower_bound.as_ref().map(LowerBoundSummary::new);
    let pass = run.consensus.verdict == Verdict::Exponential
        && lb.as_ref().is_none_or(|l| l.pass)
        && factors.as_ref().is_none_or(|f| f.pass)
        && metric.as_ref().is_none_or(|m| m.pass);
    let doc = RunDocument {
        scenario: &scenario.name,
        scenario_hash: &hash,
        model: built.model.kind_name(),
        agents: built.model.n(),
        steps: run.trajectory.len() - 1,
        consensus: &run.consensus,
        lower_bound: lb,
        transition_factors: factors.as_ref().map(FactorSummary::from),
        metric_norm: metric.as_ref(),
        pass,
    };
    let name = &scenario.name;
    write_file(&cli.out, format!("{name}.certify.json"), &to_json(&doc)?)?;
    let meta = RunMetadata::new(name, &hash, scenario.seed(), "certify", start.elapsed().as_secs_f64())
        .with_resolved(&scenario)
        .with_verdict(if pass { "pass" } else { "fail" });
    write_file(&cli.out, format!("{name}.certify.meta.json"), &to_json(&meta)?)?;
    out.write_all(key_values(&doc).as_bytes())?;
    Ok(pass)
}

fn verify_cmd(cli: &Cli, a: &VerifyArgs, out: &mut dyn Write) -> Result<bool> {
    if a.n_min < 2 || a.n_max < a.n_min {
        return Err(Error::Config(format!(
            "invalid dimension range {}..={}",
            a.n_min, a.n_max
        )));
    }
    let suites: &[Suite] = match a.suite {
        Suite::All => &[
            Suite::Contraction,
            Suite::DiameterDecay,
            Suite::ConeDiameter,
            Suite::Sandwich,
            Suite::TwoCone,
        ],
        ref s => std::slice::from_ref(s),
    };
    let mut all_pass = true;
    let mut docs = serde_json::Map::new();
    for suite in suites {
        let (pass, doc) = match suite {
            Suite::Contraction => {
                let domain = match a.domain {
                    DomainArg::FullCone => ContractionDomain::FullCone,
                    DomainArg::Box => ContractionDomain::Box,
                };
                let mut rows = Vec::new();
                for n in a.n_min..=a.n_max {
                    for &delta in &a.delta {
                        for &frac in &a.epsilon_fraction {
                            let epsilon = frac * max_gamma(n);
                            let r = verify_lemma_contraction(&ContractionParams {
                                n,
                                delta,
                                epsilon,
                                samples: a.samples,
                                seed: a.seed,
                                domain,
                            })?;
                            writeln!(
                                out,
                                "contraction n={n} delta={delta} epsilon={epsilon:.6} domain={domain:?} c_theoretical={:.6} c_observed={:.6} violations={}/{} {}",
                                r.c_theoretical,
                                r.c_observed,
                                r.violations,
                                r.samples,
                                if r.pass() { "PASS" } else { "FAIL" }
                            )?;
                            rows.push(r);
                        }
                    }
                }
                let pass = rows.iter().all(|r| r.pass());
                (pass, serde_json::to_value(&rows))
            }
            Suite::DiameterDecay => {
                let mut rows = Vec::new();
                for n in a.n_min..=a.n_max {
                    let mut rng = crate::rng::stream(a.seed, &format!("verify-decay/{n}"));
                    let (m, _) = sample_row_stochastic(n, 0.3, &mut rng);
                    let eps = 0.5 * max_gamma(n);
                    let r = verify_diameter_decay(&m, eps, a.m_max, a.samples.min(4000), a.seed)?;
                    writeln!(
                        out,
                        "diameter_decay n={n} delta={:.6} factor={:.6} rows={} {}",
                        r.delta,
                        r.factor,
                        r.rows.len(),
                        if r.pass { "PASS" } else { "FAIL" }
                    )?;
                    rows.push(r);
                }
                (rows.iter().all(|r| r.pass), serde_json::to_value(&rows))
            }
            Suite::ConeDiameter => {
                let mut rows = Vec::new();
                for n in a.n_min..=a.n_max {
                    let r = verify_cone_diameter(n, 0.5 * max_gamma(n), a.samples.max(1000) * 5, a.seed)?;
                    let pass = r.max_excess <= 1e-9 * r.formula.max(1.0);
                    writeln!(
                        out,
                        "cone_diameter n={n} gamma={:.6} formula={:.9} sampled_sup={:.9} relative_gap={:.3e} {}",
                        r.gamma,
                        r.formula,
                        r.sampled_sup,
                        r.relative_gap,
                        if pass { "PASS" } else { "FAIL" }
                    )?;
                    rows.push((r, pass));
                }
                let pass = rows.iter().all(|r| r.1);
                (pass, serde_json::to_value(rows.iter().map(|r| r.0).collect::<Vec<_>>()))
            }
            Suite::Sandwich => {
                let r = verify_sandwich(a.n_min, a.n_max, a.samples.max(1000) * 5, a.seed)?;
                let pass = r.violations == 0;
                writeln!(
                    out,
                    "sandwich n={}..={} samples={} violations={} worst_relative_slack={:.3e} {}",
                    r.n_min,
                    r.n_max,
                    r.samples,
                    r.violations,
                    r.worst_relative_slack,
                    if pass { "PASS" } else { "FAIL" }
                )?;
                (pass, serde_json::to_value(r))
            }
            Suite::TwoCone => {
                let r = two_cone_demo(a.samples.min(5000), a.seed)?;
                writeln!(
                    out,
                    "two_cone boundary_gamma_deviation={:.3e} fixed_point_drift={:.3e} {}",
                    r.boundary_gamma_deviation,
                    r.fixed_point_drift,
                    if r.pass { "PASS" } else { "FAIL" }
                )?;
                for c in &r.cones {
                    writeln!(
                        out,
                        "two_cone gamma={} image_gamma_max={:.6} contracted={}",
                        c.gamma, c.image_gamma_max, c.contracted
                    )?;
                }
                (r.pass, serde_json::to_value(&r))
            }
            Suite::All => unreachable!("expanded above"),
        };
        all_pass &= pass;
        let name = format!("{suite:?}").to_lowercase();
        docs.insert(name, doc.map_err(|e| Error::Config(e.to_string()))?);
    }
    writeln!(out, "pass = {all_pass}")?;
    let name = format!("verify_{:?}.json", a.suite).to_lowercase();
    write_file(&cli.out, name, &to_json(&docs)?)?;
    Ok(all_pass)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    value: String,
    scenario_hash: String,
    verdict: Verdict,
    #[serde(serialize_with = "crate::output::lossless_float")]
    rate_lambda: f64,
    fit_residual: f64,
    spread_final: f64,
    lower_bound_pass: Option<bool>,
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs, out: &mut dyn Write) -> Result<bool> {
    let start = Instant::now();
    let (value, base) = Scenario::load(&a.scenario)?;
    let name = Scenario::from_value(value.clone())?.name;
    let mut instances = Vec::new();
    for raw in a.values.iter().map(|r| r.trim()).filter(|r| !r.is_empty()) {
        let mut v = value.clone();
        set_path(&mut v, &a.param, raw)?;
        let mut s = Scenario::from_value(v)?;
        if a.seed.is_some() {
            s.seed = a.seed;
        }
        instances.push((raw.to_string(), s));
    }
    // One worker per instance; only this thread writes output.
    let rows = instances
        .par_iter()
        .map(|(raw, s)| {
            let run = s.build(&base)?.run()?;
            Ok(SweepRow {
                value: raw.clone(),
                scenario_hash: s.hash(),
                verdict: run.consensus.verdict,
                rate_lambda: run.consensus.rate_lambda,
                fit_residual: run.consensus.fit_residual,
                spread_final: run.consensus.spread_final,
                lower_bound_pass: run.lower_bound.as_ref().map(|l| l.pass),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    writeln!(
        out,
        "{}\tverdict\trate_lambda\tfit_residual\tspread_final\tlower_bound",
        a.param
    )?;
    for row in &rows {
        writeln!(
            out,
            "{}\t{}\t{:.6e}\t{:.3e}\t{:.6e}\t{}",
            row.value,
            row.verdict,
            row.rate_lambda,
            row.fit_residual,
            row.spread_final,
            row.lower_bound_pass.map_or("-".to_string(), |p| p.to_string())
        )?;
    }
    let file = format!("{name}.sweep.{}.json", a.param);
    write_file(&cli.out, &file, &to_json(&rows)?)?;
    let hashes: Vec<&str> = rows.iter().map(|r| r.scenario_hash.as_str()).collect();
    let meta = RunMetadata::new(
        &name,
        &hashes.join(","),
        a.seed.unwrap_or(0),
        "sweep",
        start.elapsed().as_secs_f64(),
    );
    write_file(&cli.out, format!("{name}.sweep.meta.json"), &to_json(&meta)?)?;
    Ok(true)
}

fn parse_link(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("link `{s}` should look like `i-j` with 1-based indices"));
    let (i, j) = s.trim().split_once('-').ok_or_else(bad)?;
    let i: usize = i.parse().map_err(|_| bad())?;
    let j: usize = j.parse().map_err(|_| bad())?;
    if i == 0 || j == 0 {
        return Err(bad());
    }
    Ok((i - 1, j - 1))
}

fn plot_cmd(cli: &Cli, a: &PlotArgs, out: &mut dyn Write) -> Result<bool> {
    let (svg, default_name) = match a.kind {
        PlotKind::States | PlotKind::Metric => {
            let csv = a
                .csv
                .as_ref()
                .ok_or_else(|| Error::Config("--csv is required for state and metric plots".into()))?;
            let loaded = trajectory_from_csv(&std::fs::read_to_string(csv)?)?;
            let (traj, hash) = (loaded.trajectory, loaded.scenario_hash.unwrap_or_default());
            let stem = csv
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if a.kind == PlotKind::States {
                (tag_svg(&plot_states(&traj, &stem), &hash), format!("{stem}.states.svg"))
            } else {
                let report = certify_consensus(&traj, &CertifyOptions::default()).ok();
                (
                    tag_svg(&plot_metric(&traj, report.as_ref(), &stem), &hash),
                    format!("{stem}.metric.svg"),
                )
            }
        }
        PlotKind::Signal => {
            let path = a
                .scenario
                .as_ref()
                .ok_or_else(|| Error::Config("--scenario is required for signal plots".into()))?;
            let (s, base) = load_scenario(path, a.seed)?;
            let built = s.build(&base)?;
            let signal = built
                .signal
                .ok_or_else(|| Error::Config(format!("scenario `{}` has no switching topology", s.name)))?;
            let links = if a.links.is_empty() {
                let mut seen = std::collections::BTreeSet::new();
                for (_, _, g) in signal.pieces(built.t0, built.t_end) {
                    seen.extend(g.links(0.0).into_iter().map(|(i, j, _)| (i, j)));
                }
                seen.into_iter().take(8).collect()
            } else {
                a.links.iter().map(|l| parse_link(l)).collect::<Result<Vec<_>>>()?
            };
            (
                tag_svg(&plot_signal(&signal, built.t0, built.t_end, &links, &s.name), &s.hash()),
                format!("{}.signal.svg", s.name),
            )
        }
    };
    let path = match &a.output {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, &svg)?;
            p.clone()
        }
        None => write_file(&cli.out, default_name, &svg)?,
    };
    writeln!(out, "plot = {}", path.display())?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("hcons").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn list_names_bundled_scenarios() {
        let (code, out) = run_capture(&["list"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("fig1") && out.contains("chain10"));
    }

    #[test]
    fn missing_scenario_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _) = run_capture(&["--out", d, "simulate", "--scenario", "no-such-scenario"]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn links_parse_one_based() {
        assert_eq!(parse_link("1-2").unwrap(), (0, 1));
        assert!(parse_link("0-2").is_err());
        assert!(parse_link("12").is_err());
    }
}

//! Command-line front end. `run_cli` returns the process exit code:
//! 0 on success, 1 when a check fails, 2 on bad input.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::accounting::{calibrate, DpBudget, Mechanism, MechanismArgs, Quadrant};
use crate::error::{Error, Result};
use crate::histogram::{Event, LabeledHistogram, NoisyRelease, ReleaseSequence};
use crate::known::{known_base, known_gauss, known_gumbel_topk};
use crate::lab::experiments::{
    base_noise, error_trace_rows, fig4, log_grid, utility, Fig4Config, UtilityConfig,
};
use crate::lab::streams::{domain_labels, generate, Alphas, StreamKind, StreamSpec};
use crate::lab::{out_dir, write_csv_file, write_table};
use crate::meta::{meta_run, QuadrantSelector};
use crate::noise::{NoiseSource, StreamId};
use crate::topk_continual::{recommended_eta, sparse_gumb_run, Eta, SparseGumbConfig};
use crate::tree::{base_sweep, optimal_base, TreeParams};
use crate::unknown_continual::unk_base;
use crate::unknown_oneshot::{unk_gauss, unk_gumbel, LimitedHistogram};
use crate::verify::{run_check, Check};

#[derive(Debug, Parser)]
#[command(
    name = "contmech",
    version,
    about = "Private running histograms under continual observation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one mechanism over a stream and print its releases as CSV.
    Simulate(Box<SimulateArgs>),
    /// Solve for the noise scale meeting an (epsilon, delta) target.
    Calibrate(CalibrateArgs),
    /// Worst-case noise of each tree base.
    OptimizeBase(OptimizeBaseArgs),
    /// Run a statistical check and print its JSON report.
    Verify(VerifyArgs),
    /// Run an experiment and write its CSV files.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct StreamArgs {
    /// Stream generator.
    #[arg(long, value_enum, default_value = "zipf")]
    stream: StreamKindArg,
    /// JSON file holding a full stream description; overrides the flags.
    #[arg(long)]
    stream_config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long = "t", default_value_t = 200)]
    t: usize,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    /// Comma-separated switch rounds for switching-zipf.
    #[arg(long, value_delimiter = ',')]
    switch_times: Vec<usize>,
    /// Phases of an assumption1 stream.
    #[arg(long, default_value_t = 1)]
    phases: usize,
    /// `alpha1,alpha2,alpha3` for an assumption1 stream.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    period: usize,
    /// Input file for `--stream file`: one round per line, comma-separated.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StreamKindArg {
    Zipf,
    SwitchingZipf,
    Assumption1,
    Adversarial,
    File,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    mechanism: String,
    #[command(flatten)]
    stream: StreamArgs,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 1)]
    delta0: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    kbar: usize,
    /// Tree base.
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 1)]
    switches: usize,
    /// `auto` or a number.
    #[arg(long, default_value = "auto")]
    eta: String,
    /// Failure probability behind `--eta auto`.
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value = "kr")]
    quadrant: String,
    /// Item counted by `bin-mech`; the first domain label by default.
    #[arg(long)]
    item: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    mechanism: String,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    delta0: usize,
    #[arg(long, default_value_t = 1)]
    kbar: usize,
    /// Switch budget; reported only, the budget does not depend on it.
    #[arg(long)]
    switches: Option<usize>,
    #[arg(long)]
    quadrant: Option<String>,
}

#[derive(Debug, Args)]
struct OptimizeBaseArgs {
    #[arg(long)]
    t_max: u64,
    /// Print every base instead of the best one.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 64)]
    r_max: u64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Check name, or `all`.
    #[arg(long)]
    check: String,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    /// Output directory; `$CONTMECH_OUT_DIR` or `./out` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentName {
    /// Noise std factor of each base over a grid of horizons.
    Fig1,
    /// Mean error traces on switching Zipf streams.
    Fig4,
    /// `Err(T)` scaling on Assumption-1 streams.
    Utility,
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Simulate(a) => simulate(&a, out).map(|_| true),
        Command::Calibrate(a) => {
            let mech = Mechanism::from_name(
                &a.mechanism,
                MechanismArgs {
                    delta0: a.delta0,
                    k: a.k,
                    k_bar: a.kbar,
                    quadrant: a.quadrant.clone(),
                },
            )?;
            let c = calibrate(DpBudget::new(a.epsilon, a.delta)?, mech)?;
            let mut v = serde_json::to_value(c)?;
            if let Some(s) = a.switches {
                v["switches"] = s.into();
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
            Ok(true)
        }
        Command::OptimizeBase(a) => {
            let (best, _) = optimal_base(a.t_max)?;
            let rows: Vec<Vec<String>> = base_sweep(a.t_max, a.r_max.max(best))?
                .into_iter()
                .filter(|r| a.sweep || r.r == best)
                .map(|r| {
                    vec![
                        r.r.to_string(),
                        r.objective.to_string(),
                        r.std_ratio_vs_base2.to_string(),
                    ]
                })
                .collect();
            write_table(out, &["r", "objective", "std_ratio_vs_base2"], &rows)?;
            Ok(true)
        }
        Command::Verify(a) => {
            let checks: Vec<Check> = if a.check == "all" {
                Check::ALL.to_vec()
            } else {
                vec![Check::from_name(&a.check)?]
            };
            let mut ok = true;
            let mut reports = Vec::new();
            for c in checks {
                let r = run_check(c, a.trials, a.seed)?;
                ok &= r.passed;
                reports.push(r);
            }
            let json = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])?
            } else {
                serde_json::to_string_pretty(&reports)?
            };
            writeln!(out, "{json}")?;
            Ok(ok)
        }
        Command::Experiment(a) => experiment(&a, out, err).map(|_| true),
    }
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn experiment(a: &ExperimentArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let dir = out_dir(a.out.as_deref());
    match a.name {
        ExperimentName::Fig1 => {
            let rows = base_noise(&log_grid(10, 1_000_000, 4), 16)?;
            let path = dir.join("base_noise.csv");
            write_csv_file(&path, &rows)?;
            writeln!(out, "{}", path.display())?;
        }
        ExperimentName::Fig4 => {
            let mut cfg: Fig4Config = read_json(a.config.as_deref())?;
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let results = fig4(&cfg)?;
            let path = dir.join("error_trace.csv");
            write_csv_file(&path, &error_trace_rows(&results))?;
            let summary: Vec<serde_json::Value> = results
                .iter()
                .map(|r| serde_json::json!({ "series": r.series, "mechanism": r.mechanism, "params": r.params, "err": r.err, "final_mean_error": r.trace.last() }))
                .collect();
            let json = serde_json::json!({ "config": cfg, "series": summary });
            std::fs::write(
                dir.join("fig4_summary.json"),
                serde_json::to_string_pretty(&json)? + "\n",
            )?;
            if let Some(r) = results.first() {
                writeln!(
                    err,
                    "fig4: {} trials in {:.1}s",
                    r.trials, r.wall_clock_secs
                )?;
            }
            writeln!(out, "{}", path.display())?;
        }
        ExperimentName::Utility => {
            let mut cfg: UtilityConfig = read_json(a.config.as_deref())?;
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let rows = utility(&cfg)?;
            let path = dir.join("utility.csv");
            write_csv_file(&path, &rows)?;
            writeln!(out, "{}", path.display())?;
        }
    }
    Ok(())
}

fn stream_spec(a: &StreamArgs, seed: u64) -> Result<StreamSpec> {
    if let Some(p) = &a.stream_config {
        return Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?);
    }
    Ok(match a.stream {
        StreamKindArg::Zipf => StreamSpec::zipf(a.d, a.t, a.zipf_exponent, seed),
        StreamKindArg::SwitchingZipf => {
            StreamSpec::switching_zipf(a.d, a.t, a.zipf_exponent, a.switch_times.clone(), seed)
        }
        StreamKindArg::Assumption1 => {
            let [a1, a2, a3] = a.alphas[..] else {
                return Err(Error::Usage(
                    "assumption1 streams need --alphas a1,a2,a3".into(),
                ));
            };
            StreamSpec::assumption1(a.d, a.phases, Alphas::new(a1, a2, a3)?)
        }
        StreamKindArg::Adversarial => StreamSpec::adversarial(a.d, a.t, a.period),
        StreamKindArg::File => {
            let p = a
                .input
                .as_ref()
                .ok_or_else(|| Error::Usage("`--stream file` needs --input".into()))?;
            StreamSpec::file(p)
        }
    })
}

/// The generator's domain, or the labels seen in a file stream.
fn stream_domain(spec: &StreamSpec, stream: &[Event]) -> Vec<String> {
    if spec.kind == StreamKind::File {
        let seen: BTreeSet<&String> = stream.iter().flatten().collect();
        seen.into_iter().cloned().collect()
    } else {
        domain_labels(spec.d)
    }
}

fn release_rows(rel: &ReleaseSequence) -> Vec<Vec<String>> {
    rel.iter()
        .enumerate()
        .flat_map(|(i, r)| one_shot_rows(i + 1, r))
        .collect()
}

fn one_shot_rows(t: usize, r: &NoisyRelease) -> Vec<Vec<String>> {
    r.entries
        .iter()
        .map(|(u, v)| vec![t.to_string(), u.clone(), v.to_string()])
        .collect()
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let spec = stream_spec(&a.stream, a.seed)?;
    let stream = generate(&spec)?;
    let domain = stream_domain(&spec, &stream);
    let t_max = stream.len().max(1);
    let src = NoiseSource::new(a.seed);
    let id = StreamId::root(&a.mechanism);
    let tree = || TreeParams::new(t_max, a.r, a.tau);
    let hist = || LabeledHistogram::of_events_over(&domain, &stream);
    let header = ["t", "label", "noisy_count"];
    let mut buf: Vec<u8> = Vec::new();
    match a.mechanism.as_str() {
        "bin-mech" => {
            let item = a
                .item
                .clone()
                .or_else(|| domain.first().cloned())
                .unwrap_or_default();
            let bits: Vec<u8> = stream.iter().map(|e| u8::from(e.contains(&item))).collect();
            let y = crate::tree::run(&bits, &tree()?, &src, id)?;
            let rows: Vec<Vec<String>> = y
                .iter()
                .enumerate()
                .map(|(i, v)| vec![(i + 1).to_string(), item.clone(), v.to_string()])
                .collect();
            write_table(&mut buf, &header, &rows)?;
        }
        "known-base" => {
            let rel = known_base(&stream, &domain, a.delta0, tree()?, &src, id)?;
            write_table(&mut buf, &header, &release_rows(&rel))?;
        }
        "unk-base" => {
            let rel = unk_base(&stream, tree()?, a.delta, a.delta0, &src, id)?;
            write_table(&mut buf, &header, &release_rows(&rel))?;
        }
        "meta" => {
            let q = Quadrant::from_code(&a.quadrant, a.delta0, a.k)?;
            let sel = if q.domain_known() {
                QuadrantSelector::known(q, domain.clone())
            } else {
                QuadrantSelector::unknown(q, a.kbar)
            };
            let rel = meta_run(&stream, sel, tree()?, a.delta, &src, id)?;
            write_table(&mut buf, &header, &release_rows(&rel))?;
        }
        "known-gauss" | "known-gumbel" | "unk-gauss" | "unk-gumbel" => {
            let h = hist();
            let rel = match a.mechanism.as_str() {
                "known-gauss" => known_gauss(&h, a.tau, &src, id)?,
                "known-gumbel" => known_gumbel_topk(&h, a.k, a.tau, &src, id)?,
                "unk-gauss" => unk_gauss(
                    &LimitedHistogram::from_histogram(&h, a.kbar),
                    a.tau,
                    a.delta,
                    &src,
                    id,
                )?,
                _ => unk_gumbel(
                    &LimitedHistogram::from_histogram(&h, a.kbar),
                    a.k,
                    a.tau,
                    a.delta,
                    &src,
                    id,
                )?,
            };
            write_table(&mut buf, &header, &one_shot_rows(stream.len(), &rel))?;
        }
        "sparse-gumb" => {
            let mut cfg = SparseGumbConfig::new(a.switches, a.k, Eta::Constant(0.0), a.tau);
            cfg.r = a.r;
            cfg.eta = Eta::Constant(if a.eta == "auto" {
                recommended_eta(&cfg, domain.len(), t_max, a.beta)?
            } else {
                a.eta.parse().map_err(|_| {
                    Error::Usage(format!("--eta must be `auto` or a number, got `{}`", a.eta))
                })?
            });
            let run = sparse_gumb_run(&stream, &domain, &cfg, &src, id)?;
            let rows: Vec<Vec<String>> = run
                .log
                .iter()
                .map(|r| {
                    let counts: Vec<String> = r.counts.iter().map(f64::to_string).collect();
                    vec![
                        r.t.to_string(),
                        r.selected.join(";"),
                        counts.join(";"),
                        u8::from(r.switched).to_string(),
                    ]
                })
                .collect();
            write_table(
                &mut buf,
                &["t", "selected_labels", "counts", "switch_flag"],
                &rows,
            )?;
        }
        other => return Err(Error::Usage(format!("unknown mechanism `{other}`"))),
    }
    match &a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, &buf)?;
        }
        None => out.write_all(&buf)?,
    }
    Ok(())
}

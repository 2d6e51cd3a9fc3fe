//! `metarep` command-line front end.
//!
//! Every flag can also be set in a TOML file passed with `--config`: global
//! flags at the top level, subcommand flags under a table named after the
//! subcommand, with dashes in flag names replaced by underscores. Flags given
//! on the command line win over the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use metarep::fewshot::SolverSettings;
use metarep::harness::record::load_csv;
use metarep::harness::run::{fit_and_evaluate, FEWSHOT_STREAM};
use metarep::harness::sweep::{threads_from_env, RECORDS_FILE};
use metarep::harness::{emit_report, run_sweep, ExperimentConfig, FewShotParams, ReportFormat, SweepOptions};
use metarep::linalg::SeededRng;
use metarep::mnist::{build_digit_pair_tasks, ImageSet, DEFAULT_META_PAIRS};
use metarep::moments::moment_estimator_from;
use metarep::subspace::{procrustes_align, recover_subspace, subspace_correlation, SubspaceSummary};
use metarep::tasks::{load_representation, load_task_data, sample_glm_task, sample_task, task_spec_stream, MetaConfig, MetaDataset, TaskFamily};
use metarep::{fewshot::GlmTruth, RecoveredSubspace};

#[derive(Parser, Debug)]
#[command(name = "metarep", version, about = "Subspace recovery and few-shot learning for nonlinear meta-learning")]
struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; falls back to METAREP_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic meta-training dataset.
    Gen(GenArgs),
    /// Estimate M̂ and its top-r subspace from a dataset directory.
    Meta(MetaArgs),
    /// Fit and evaluate a new task inside a recovered subspace.
    Fewshot(FewShotArgs),
    /// Run an experiment grid.
    Sweep(SweepArgs),
    /// Summarize or plot the records of a sweep.
    Report(ReportArgs),
    /// Build the MNIST digit-pair meta-training dataset.
    Mnist(MnistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Glm,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Svg,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Option<Family>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Samples per task (even).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// GLM parameters are projected onto this ball; `inf` disables it.
    #[arg(long)]
    theta_norm_max: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write all samples as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaArgs {
    /// Dataset directory written by `gen` or `mnist`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Subspace rank; defaults to the dataset's true rank when it has one.
    #[arg(long)]
    r: Option<usize>,
    /// Output directory; defaults to the dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FewShotArgs {
    /// `subspace.bin` written by `meta`.
    #[arg(long)]
    subspace: Option<PathBuf>,
    /// Synthetic GLM dataset the subspace was estimated from.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    eval_n: Option<usize>,
    #[arg(long)]
    norm_budget: Option<f64>,
    /// Must match the value used by `gen`.
    #[arg(long)]
    theta_norm_max: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Also fit on the raw inputs.
    #[arg(long)]
    baseline: Option<bool>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Write the fitted model as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(metarep::harness::presets::PRESET_NAMES.iter().copied()))]
    preset: Option<String>,
    /// Experiment TOML, used instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    experiment: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// MNIST directory for the fig3b preset.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Log each finished grid point to stderr.
    #[arg(long)]
    progress: Option<bool>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportArgs {
    /// Sweep output directory containing records.csv.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MnistArgs {
    /// Directory holding the four IDX files.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Digit pairs as `a-b`, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(u8, u8)>>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(u8, u8), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected a-b, got {s:?}"))?;
    let digit = |t: &str| t.trim().parse::<u8>().ok().filter(|&d| d < 10).ok_or_else(|| format!("{t:?} is not a digit"));
    Ok((digit(a)?, digit(b)?))
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    threads: Option<usize>,
    gen: GenArgs,
    meta: MetaArgs,
    fewshot: FewShotArgs,
    sweep: SweepArgs,
    report: ReportArgs,
    mnist: MnistArgs,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fills every unset field of `$cli` from `$file`.
macro_rules! merge {
    ($cli:expr, $file:expr; $($field:ident),+) => {
        $( if $cli.$field.is_none() { $cli.$field = $file.$field.take(); } )+
    };
}

/// `println!` that stops quietly when stdout is closed, e.g. by `head`.
macro_rules! say {
    ($($arg:tt)*) => {
        print_line(format_args!($($arg)*))?
    };
}

fn print_line(line: std::fmt::Arguments<'_>) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => Ok(other?),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.with_context(|| format!("--{flag} is required (on the command line or in the config file)"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads).or_else(threads_from_env);
    match cli.command {
        Command::Sweep(mut a) => {
            merge!(a, file.sweep; preset, experiment, out, master_seed, seeds, mnist_dir, progress);
            sweep(a, threads)
        }
        command => {
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("starting the worker pool")?;
            }
            match command {
                Command::Gen(mut a) => {
                    merge!(a, file.gen; kind, d, r, k, n, seed, theta_norm_max, hidden, noise_std, out, csv);
                    gen(a)
                }
                Command::Meta(mut a) => {
                    merge!(a, file.meta; data, r, out);
                    meta(a)
                }
                Command::Fewshot(mut a) => {
                    merge!(a, file.fewshot; subspace, data, n, eval_n, norm_budget, theta_norm_max, mc_samples, baseline, step_size, max_iters, tol, out);
                    fewshot(a)
                }
                Command::Report(mut a) => {
                    merge!(a, file.report; input, format, out);
                    report(a)
                }
                Command::Mnist(mut a) => {
                    merge!(a, file.mnist; mnist_dir, pairs, per_class, seed, out);
                    mnist(a)
                }
                Command::Sweep(_) => unreachable!(),
            }
        }
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let family = match a.kind.unwrap_or(Family::Glm) {
        Family::Glm => TaskFamily::GlmLogistic { theta_norm_max: a.theta_norm_max.unwrap_or(f64::INFINITY) },
        Family::Relu => TaskFamily::ReluNet { hidden: a.hidden.unwrap_or(20), noise_std: a.noise_std.unwrap_or(1.0) },
    };
    let config = MetaConfig {
        seed: a.seed.unwrap_or(0),
        d: a.d.unwrap_or(50),
        r: a.r.unwrap_or(5),
        k: a.k.unwrap_or(100),
        n: a.n.unwrap_or(100),
        family,
    };
    let out = required(a.out, "out")?;
    let dataset = MetaDataset::generate(&config)?;
    fs::create_dir_all(&out)?;
    dataset.save(&out)?;
    if let Some(csv) = a.csv {
        dataset.export_csv(&csv)?;
    }
    say!("wrote {} tasks of {} samples (d={}, r={}) to {}", config.k, config.n, config.d, config.r, out.display());
    Ok(())
}

fn meta(a: MetaArgs) -> Result<()> {
    let data = required(a.data, "data")?;
    let (header, tasks) = load_task_data(&data)?;
    let rep = load_representation(&data)?;
    let r = match a.r {
        Some(r) => r,
        None if header.r > 0 => header.r,
        None => bail!("--r is required for datasets without a known rank"),
    };
    let moment = moment_estimator_from(&tasks)?;
    let sub = recover_subspace(&moment, r)?;
    let out = a.out.unwrap_or(data);
    fs::create_dir_all(&out)?;
    moment.save(&out.join("moment.bin"))?;
    sub.save(&out.join("subspace.bin"))?;
    let alignment = match &rep {
        Some(rep) if rep.r() == r => Some((procrustes_align(&sub, rep)?, subspace_correlation(&sub, rep)?)),
        _ => None,
    };
    let summary = SubspaceSummary::new(&sub, alignment.as_ref().map(|(al, c)| (al, *c)));
    summary.write(&out.join("subspace.json"))?;
    say!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn fewshot(a: FewShotArgs) -> Result<()> {
    let sub = RecoveredSubspace::load(&required(a.subspace, "subspace")?)?;
    let data = required(a.data, "data")?;
    let dataset = MetaDataset::load(&data)?;
    let rep = &dataset.representation;
    if sub.d() != rep.d() {
        bail!("subspace has d={} but the dataset has d={}", sub.d(), rep.d());
    }
    let defaults = SolverSettings::default();
    let params = FewShotParams {
        n: a.n.unwrap_or(20),
        eval_n: a.eval_n.unwrap_or(1000),
        norm_budget: a.norm_budget.unwrap_or(f64::INFINITY),
        solver: SolverSettings {
            step_size: a.step_size.unwrap_or(defaults.step_size),
            max_iters: a.max_iters.unwrap_or(defaults.max_iters),
            tol: a.tol.unwrap_or(defaults.tol),
        },
        mc_samples: a.mc_samples.unwrap_or(20_000),
    };
    // The new task is the next task id under the dataset's seed.
    let id = dataset.k();
    let seed = dataset.seed;
    let task = sample_glm_task(&mut SeededRng::new(seed, task_spec_stream(id)), rep, a.theta_norm_max.unwrap_or(f64::INFINITY), id);
    let eval = sample_task(&mut SeededRng::new(seed, FEWSHOT_STREAM), &task, rep, params.eval_n);
    let train = sample_task(&mut SeededRng::new(seed, FEWSHOT_STREAM + 1 + params.n as u64), &task, rep, params.n);
    let truth = GlmTruth { rep, theta_star: task.theta()? };

    let projection = sub.projection();
    let fitted = fit_and_evaluate(&projection, &train, &eval, Some(&truth), &params, seed)?;
    let mut report = serde_json::json!({
        "n": params.n,
        "r": sub.r(),
        "accuracy": fitted.accuracy,
        "risk_gap": fitted.risk_gap,
        "model": fitted.model.summary(),
    });
    if a.baseline.unwrap_or(true) {
        let identity = metarep::DenseMatrix::identity(rep.d());
        let base = fit_and_evaluate(&identity, &train, &eval, Some(&truth), &params, seed)?;
        report["accuracy_baseline"] = serde_json::json!(base.accuracy);
        report["risk_gap_baseline"] = serde_json::json!(base.risk_gap);
    }
    if let Some(out) = a.out {
        fitted.model.save(&out)?;
    }
    say!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(a: SweepArgs, threads: Option<usize>) -> Result<()> {
    let mut config = match (&a.preset, &a.experiment) {
        (Some(name), None) => ExperimentConfig::preset(name)?,
        (None, Some(path)) => ExperimentConfig::from_toml(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        (Some(_), Some(_)) => bail!("give either --preset or --experiment, not both"),
        (None, None) => bail!("--preset or --experiment is required"),
    };
    if let Some(seed) = a.master_seed {
        config.master_seed = seed;
    }
    if let Some(seeds) = a.seeds {
        config.seeds = seeds;
    }
    if let Some(dir) = a.mnist_dir {
        config.mnist.dir = dir;
    }
    let out = a.out.or_else(|| config.out.clone());
    let options = SweepOptions { out: out.clone(), threads, progress: a.progress.unwrap_or(true) };
    let records = run_sweep(&config, &options)?;
    let errors = records.iter().filter(|r| r.is_error()).count();
    match out {
        Some(dir) => say!("{} records ({errors} errors) in {}", records.len(), dir.join(RECORDS_FILE).display()),
        None => {
            let mut w = std::io::stdout().lock();
            metarep::harness::record::write_csv(&records, &mut w)?;
        }
    }
    if errors > 0 {
        eprintln!("{errors} grid points failed; see the error rows");
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let input = required(a.input, "in")?;
    let records = load_csv(&input.join(RECORDS_FILE)).with_context(|| format!("reading records from {}", input.display()))?;
    let format = match a.format.unwrap_or(Format::Csv) {
        Format::Csv => ReportFormat::Csv,
        Format::Svg => ReportFormat::Svg,
    };
    let out = a.out.unwrap_or(input);
    for path in emit_report(&records, format, &out)? {
        say!("{}", path.display());
    }
    Ok(())
}

fn mnist(a: MnistArgs) -> Result<()> {
    let dir = required(a.mnist_dir, "mnist-dir")?;
    let out = required(a.out, "out")?;
    let pairs = a.pairs.unwrap_or_else(|| DEFAULT_META_PAIRS.to_vec());
    let set = ImageSet::load(&dir, "train")?;
    let dataset = build_digit_pair_tasks(&set, &pairs, a.per_class.unwrap_or(500), a.seed.unwrap_or(0))?;
    fs::create_dir_all(&out)?;
    dataset.save(&out)?;
    say!("wrote {} digit-pair tasks (d={}) to {}", dataset.tasks.len(), dataset.d(), out.display());
    Ok(())
}

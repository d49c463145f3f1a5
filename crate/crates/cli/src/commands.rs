//! Subcommands of the `bcwi` tool.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bcwi_core::checkpoint::{Checkpoint, Provenance};
use bcwi_core::data::synth_generate;
use bcwi_core::eval::{self, plane_scan, sweep_alpha, EvalSets, PlaneData, PlaneMetric};
use bcwi_core::fisher::{compute_fisher, FisherDiagonal, Normalization, DEFAULT_EPSILON_FLOOR};
use bcwi_core::merge::{align_fisher, align_old_head, bcwi, fisher_bcwi, soup_bcwi};
use bcwi_core::model::predict_all;
use bcwi_core::{ParamVector, ScenarioData};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{self, ConfigError, FisherData};
use crate::experiment::{self, ScenarioFile};
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "bcwi", version, about = "Backward-compatible weight interpolation for classifier updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the full multi-seed experiment described by a config.
    Run(RunArgs),
    /// Merge an old checkpoint with one or more new checkpoints.
    Merge(MergeArgs),
    /// Accuracy and negative flips of a model against the old model.
    Eval(EvalArgs),
    /// Diagonal empirical Fisher of a model.
    Fisher(FisherArgs),
    /// Trade-off curve over the interpolation weight.
    Sweep(SweepArgs),
    /// Metric on the plane through old, new and target weights.
    Landscape(LandscapeArgs),
    /// Write the synthetic corpus as JSON lines.
    Synth(SynthArgs),
    /// Check a config or a scenario file without running anything.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Experiment config (JSON). Defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.new.epochs=5`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<config::ExperimentConfig, ConfigError> {
        let overrides = self
            .overrides
            .iter()
            .map(|s| config::parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        config::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory; overrides the config and the environment.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[arg(long)]
    pub old: PathBuf,
    /// New checkpoints; more than one merges their soup.
    #[arg(long = "new", required = true)]
    pub news: Vec<PathBuf>,
    #[arg(long)]
    pub alpha: f64,
    /// Fisher diagonal of the old model; switches to Fisher-weighted merging.
    #[arg(long)]
    pub fisher: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Dev,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub old: PathBuf,
    /// Scenario file written by `run` (scenario.json).
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FisherArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "old")]
    pub data: FisherData,
    #[arg(long, value_enum, default_value = "mean-one")]
    pub normalization: NormalizationArg,
    #[arg(long, default_value_t = DEFAULT_EPSILON_FLOOR)]
    pub epsilon_floor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    Raw,
    MeanOne,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    #[arg(long)]
    pub fisher: Option<PathBuf>,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// Retention used to report the dev-selected α.
    #[arg(long, default_value_t = 0.9)]
    pub retention: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "test-nfr")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 25)]
    pub grid_n: usize,
    /// Directory for landscape.csv, landscape.json and landscape.svg.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    TrainLoss,
    TestAcc,
    TestNfr,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub num_classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 150)]
    pub vocab_per_class: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Check a scenario file instead of (or as well as) a config.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
}

/// Exit code for an error chain: config problems are usage errors, core
/// numerical failures are numeric, everything else touching data is a data
/// error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use bcwi_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<clap::Error>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonFinite(_) | E::Degenerate(_) => EXIT_NUMERIC,
                E::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_DATA;
        }
    }
    EXIT_USAGE
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Fisher(a) => cmd_fisher(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn read_params(path: &Path) -> Result<ParamVector> {
    let ckpt = Checkpoint::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if ckpt.fisher.is_some() {
        bail!(bcwi_core::Error::Format(format!("{} holds a Fisher diagonal, not model weights", path.display())));
    }
    Ok(ckpt.params)
}

fn read_fisher(path: &Path) -> Result<FisherDiagonal> {
    let ckpt = Checkpoint::read(path).with_context(|| format!("reading Fisher file {}", path.display()))?;
    Ok(ckpt.to_fisher()?)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(out) = a.output {
        cfg.output_dir = out;
    }
    let dir = cfg.output_dir.clone();
    let results = experiment::run_experiment(&cfg, Some(&dir))?;
    print!("{}", report::summary_csv(&results)?);
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    let news = a.news.iter().map(|p| read_params(p)).collect::<Result<Vec<_>>>()?;
    let target_spec = *news[0].spec();
    let old = align_old_head(&read_params(&a.old)?, target_spec)?;
    let merged = match (&a.fisher, news.len()) {
        (Some(f), 1) => fisher_bcwi(a.alpha, &align_fisher(&read_fisher(f)?, target_spec)?, &old, &news[0])?,
        (Some(_), _) => bail!(bcwi_core::Error::invalid("Fisher-weighted merging takes exactly one new model")),
        (None, 1) => bcwi(a.alpha, &old, &news[0])?,
        (None, _) => soup_bcwi(a.alpha, &old, &news)?,
    };
    merged.ensure_finite("merged weights")?;
    let prov = Provenance {
        role: "merged".into(),
        seed: 0,
        config_hash: String::new(),
    };
    Checkpoint::from_params(merged, prov).write(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    accuracy: f64,
    nfr: f64,
    pfr: f64,
    n: usize,
    negative_flips: usize,
}

fn eval_set(data: &ScenarioData, split: SplitChoice) -> Vec<bcwi_core::Sample> {
    match split {
        SplitChoice::Dev => data.updated_dev(),
        SplitChoice::Test => data.test.clone(),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = read_params(&a.model)?;
    let old = read_params(&a.old)?;
    let (_, data) = ScenarioFile::read(&a.scenario)?.load()?;
    let set = eval_set(&data, a.split);
    let report = eval::evaluate(&predict_all(&old, &set)?, &predict_all(&model, &set)?, &eval::gold_labels(&set))?;
    let out = EvalOutput {
        accuracy: report.accuracy,
        nfr: report.nfr,
        pfr: report.positive_flip_rate,
        n: report.n,
        negative_flips: report.negative_flips(),
    };
    let json = serde_json::to_string_pretty(&out)?;
    println!("{json}");
    if let Some(path) = a.json {
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_fisher(a: FisherArgs) -> Result<()> {
    let model = read_params(&a.model)?;
    let (_, data) = ScenarioFile::read(&a.scenario)?.load()?;
    let known = model.spec().num_classes;
    let samples: Vec<_> = match a.data {
        FisherData::Old => data.old_data(),
        FisherData::Updated => data.updated_train().into_iter().chain(data.updated_dev()).collect(),
    }
    .into_iter()
    .filter(|(_, y)| *y < known)
    .collect();
    let norm = match a.normalization {
        NormalizationArg::Raw => Normalization::Raw,
        NormalizationArg::MeanOne => Normalization::MeanOne,
    };
    let f = compute_fisher(&model, &samples, norm, a.epsilon_floor)?;
    let prov = Provenance {
        role: "fisher".into(),
        seed: 0,
        config_hash: String::new(),
    };
    Checkpoint::from_fisher(&f, prov).write(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let new = read_params(&a.new)?;
    let raw_old = read_params(&a.old)?;
    let old = align_old_head(&raw_old, *new.spec())?;
    let fisher = a
        .fisher
        .as_deref()
        .map(|p| -> Result<_> { Ok(align_fisher(&read_fisher(p)?, *new.spec())?) })
        .transpose()?;
    let (_, data) = ScenarioFile::read(&a.scenario)?.load()?;
    let sets = EvalSets::new(&raw_old, data.updated_dev(), data.test.clone())?;
    let curve = sweep_alpha(&old, &new, fisher.as_ref(), &sets, a.step)?;
    std::fs::write(&a.out, curve.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    let old_dev = sets.report_dev(&sets.old_dev_preds)?.accuracy;
    let new_dev = curve.points[0].dev_acc;
    println!("selected_alpha={}", eval::select_alpha(&curve, old_dev, new_dev, a.retention));
    Ok(())
}

fn cmd_landscape(a: LandscapeArgs) -> Result<()> {
    let new = read_params(&a.new)?;
    let target = read_params(&a.target)?;
    let raw_old = read_params(&a.old)?;
    let old = align_old_head(&raw_old, *new.spec())?;
    let (_, data) = ScenarioFile::read(&a.scenario)?.load()?;
    let plane = PlaneData {
        train: data.updated_train(),
        old_test_preds: predict_all(&raw_old, &data.test)?,
        test: data.test.clone(),
    };
    let metric = match a.metric {
        MetricArg::TrainLoss => PlaneMetric::TrainLoss,
        MetricArg::TestAcc => PlaneMetric::TestAcc,
        MetricArg::TestNfr => PlaneMetric::TestNfr,
    };
    let scan = plane_scan(&old, &new, &target, a.grid_n, metric, &plane)?;
    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(a.out_dir.join("landscape.csv"), scan.to_csv())?;
    let sidecar = serde_json::json!({
        "metric": scan.metric,
        "grid_n": a.grid_n,
        "old": scan.old_xy,
        "new": scan.new_xy,
        "target": scan.target_xy,
        "value_at_old": eval::plane_metric(&old, metric, &plane)?,
    });
    std::fs::write(a.out_dir.join("landscape.json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    std::fs::write(a.out_dir.join("landscape.svg"), report::heatmap_svg(&scan))?;
    println!("{}", a.out_dir.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let ds = synth_generate(a.num_classes, a.per_class, a.vocab_per_class, a.noise_rate, a.seed)?;
    let mut out = String::new();
    for ex in ds.examples() {
        out.push_str(&serde_json::to_string(&serde_json::json!({"text": ex.text, "label": ex.label}))?);
        out.push('\n');
    }
    std::fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{} examples -> {}", ds.len(), a.out.display());
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    if let Some(path) = &a.scenario {
        let (split, _) = ScenarioFile::read(path)?.load()?;
        println!(
            "scenario ok: {:?}, {} classes ({} old)",
            split.kind,
            split.num_classes(),
            split.num_old_classes()
        );
    }
    if a.config.config.is_some() || a.scenario.is_none() {
        let cfg = a.config.load()?;
        let corpus = experiment::load_corpus(&cfg.scenario.source)?;
        let split = experiment::build_scenario(&cfg, &corpus, cfg.seed_offset)?;
        println!(
            "config ok: {} seeds, {:?}, {} examples, hash {}",
            cfg.num_seeds,
            split.kind,
            corpus.len(),
            &cfg.hash()[..16]
        );
    }
    Ok(())
}

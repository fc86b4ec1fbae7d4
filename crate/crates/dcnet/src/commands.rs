//! The subcommands, independent of argument parsing. Each returns the text
//! it would print.

use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dcnet_core::analysis::{eegnet_report, model_report, EegNetConfig};
use dcnet_core::data::{synth, SynthSpec, TrialSet};
use dcnet_core::gradcheck::{model_check, op_suite, CheckResult};
use dcnet_core::model::{ModelConfig, ModelParams};
use dcnet_core::train::{evaluate, train_with};
use dcnet_core::Rng;

use crate::checkpoint::{self, round_to_f32};
use crate::config::{model_text, RunConfig};
use crate::csvdir::{from_csv, to_csv};
use crate::eegt::{load_trials, save_trials};
use crate::error::{CliError, Result};
use crate::io::{read_text, write_file};
use crate::report::{self, EvalSummary, TableRow};

/// Configuration sources shared by the training commands.
#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), &self.set, self.seed)
    }
}

/// A directory is read as CSV trials, anything else as a binary trial file.
pub fn load_data(path: &Path) -> Result<TrialSet> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
    }
    if path.is_dir() {
        from_csv(path, None)
    } else {
        load_trials(path)
    }
}

/// Takes the data geometry from the training set.
fn fit_to_data(cfg: &mut RunConfig, data: &TrialSet) -> Result<()> {
    let m = &mut cfg.model;
    let dims = (data.channels(), data.samples(), data.n_classes());
    if (m.channels, m.samples, m.n_classes) != dims {
        log::info!("model geometry {}x{}, {} classes taken from the training data", dims.0, dims.1, dims.2);
        (m.channels, m.samples, m.n_classes) = dims;
    }
    cfg.validate()
}

fn train_and_val(data: &Path, val: Option<&Path>, cfg: &RunConfig) -> Result<(TrialSet, TrialSet)> {
    let set = load_data(data)?;
    match val {
        Some(v) => Ok((set, load_data(v)?)),
        None => Ok(set.holdout_tail(cfg.holdout)?),
    }
}

struct Trained {
    params: ModelParams,
    history: Vec<dcnet_core::train::EpochRecord>,
    seconds: f64,
}

/// Seeded initialization and training; the returned parameters are
/// rounded to checkpoint precision.
fn run_training(cfg: &RunConfig, train_set: &TrialSet, val: &TrialSet) -> Result<Trained> {
    let start = Instant::now();
    let params = ModelParams::init(&cfg.model, &mut Rng::with_stream(cfg.train.seed, 0))?;
    let outcome = train_with(&cfg.model, params, train_set, val, &cfg.train, |r| {
        log::debug!("epoch {} train_loss {:.5} val_loss {:.5} val_acc {:.4} val_kappa {:.4}", r.epoch, r.train_loss, r.val_loss, r.val_acc, r.val_kappa);
    })?;
    let mut params = outcome.params;
    round_to_f32(&mut params);
    log::info!("best epoch {} of {}", outcome.state.best_epoch, outcome.state.history.len());
    Ok(Trained { params, history: outcome.state.history, seconds: start.elapsed().as_secs_f64() })
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub val: Option<PathBuf>,
    pub run: RunArgs,
    pub out: PathBuf,
}

/// Writes `checkpoint.dcnk`, `history.tsv`, `config.toml` and
/// `report.txt` (validation metrics of the selected snapshot) into `out`.
pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (train_set, val) = train_and_val(&args.data, args.val.as_deref(), &cfg)?;
    fit_to_data(&mut cfg, &train_set)?;
    let text = cfg.to_text();
    let trained = run_training(&cfg, &train_set, &val)?;

    checkpoint::save(&cfg.model, &trained.params, &args.out.join("checkpoint.dcnk"))?;
    write_file(&args.out.join("history.tsv"), report::history_tsv(&text, &trained.history).as_bytes())?;
    write_file(&args.out.join("config.toml"), text.as_bytes())?;
    let (loss, cm) = evaluate(&trained.params, &cfg.model, &val)?;
    let val_summary = EvalSummary::new(loss, cm)?;
    write_file(&args.out.join("report.txt"), report::eval_report(&text, &val_summary).as_bytes())?;
    let (loss, cm) = evaluate(&trained.params, &cfg.model, &train_set)?;
    let train_summary = EvalSummary::new(loss, cm)?;

    let mut out = text;
    let _ = writeln!(out, "\nepochs = {}", trained.history.len());
    let _ = writeln!(out, "train_accuracy = {:.4}", train_summary.accuracy);
    let _ = writeln!(out, "train_kappa = {:.4}", train_summary.kappa);
    let _ = writeln!(out, "val_accuracy = {:.4}", val_summary.accuracy);
    let _ = writeln!(out, "val_kappa = {:.4}", val_summary.kappa);
    let _ = writeln!(out, "val_loss = {:.6}", val_summary.loss);
    let _ = writeln!(out, "checkpoint = {}", args.out.join("checkpoint.dcnk").display());
    Ok(out)
}

pub struct EvalArgs {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let (model, params) = checkpoint::load(&args.checkpoint)?;
    let data = load_data(&args.data)?;
    if (data.channels(), data.samples(), data.n_classes()) != (model.channels, model.samples, model.n_classes) {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} channels x {} samples, {} classes; {} has {} x {}, {} classes",
            model.channels,
            model.samples,
            model.n_classes,
            args.data.display(),
            data.channels(),
            data.samples(),
            data.n_classes()
        )));
    }
    let (loss, cm) = evaluate(&params, &model, &data)?;
    let text = report::eval_report(&model_text(&model), &EvalSummary::new(loss, cm)?);
    if let Some(path) = &args.out {
        write_file(path, text.as_bytes())?;
    }
    Ok(text)
}

pub struct SweepArgs {
    pub data: PathBuf,
    pub val: Option<PathBuf>,
    pub n_from: usize,
    pub n_to: usize,
    pub run: RunArgs,
    pub out: Option<PathBuf>,
}

fn table_run(cfg: &RunConfig, train_set: &TrialSet, val: &TrialSet, label: String) -> Result<TableRow> {
    let trained = run_training(cfg, train_set, val)?;
    let (loss, cm) = evaluate(&trained.params, &cfg.model, val)?;
    log::info!("{label}: {:.1} s", trained.seconds);
    Ok(TableRow { label, summary: EvalSummary::new(loss, cm)?, epochs: trained.history.len(), seconds: trained.seconds })
}

/// One training per window count in `n_from..=n_to`.
pub fn cmd_sweep_windows(args: &SweepArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (train_set, val) = train_and_val(&args.data, args.val.as_deref(), &cfg)?;
    fit_to_data(&mut cfg, &train_set)?;
    let fw = cfg.model.fuse_width;
    if args.n_from == 0 || args.n_from > args.n_to || args.n_to > fw {
        return Err(CliError::Usage(format!("window range {}..={} must satisfy 1 <= from <= to <= fuse_width ({fw})", args.n_from, args.n_to)));
    }
    let mut rows = Vec::new();
    for n in args.n_from..=args.n_to {
        let mut run = cfg.clone();
        run.model.n_windows = n;
        run.model.enable_sw = true;
        rows.push(table_run(&run, &train_set, &val, n.to_string())?);
    }
    let text = report::results_table("window sweep", "n_windows", &cfg.to_text(), &rows);
    if let Some(path) = &args.out {
        write_file(path, text.as_bytes())?;
    }
    Ok(text)
}

/// Block combinations in table order: label and (atrous, windows, attention).
pub const ABLATIONS: [(&str, bool, bool, bool); 4] =
    [("None", false, false, false), ("SP", true, false, false), ("SP + SW", true, true, false), ("SP + SW + AT", true, true, true)];

pub struct AblateArgs {
    pub data: PathBuf,
    pub val: Option<PathBuf>,
    pub run: RunArgs,
    pub out: Option<PathBuf>,
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<String> {
    let mut cfg = args.run.resolve()?;
    let (train_set, val) = train_and_val(&args.data, args.val.as_deref(), &cfg)?;
    fit_to_data(&mut cfg, &train_set)?;
    let mut rows = Vec::new();
    for (label, sp, sw, at) in ABLATIONS {
        let mut run = cfg.clone();
        (run.model.enable_sp, run.model.enable_sw, run.model.enable_at) = (sp, sw, at);
        rows.push(table_run(&run, &train_set, &val, label.to_string())?);
    }
    let text = report::results_table("ablation", "blocks", &cfg.to_text(), &rows);
    if let Some(path) = &args.out {
        write_file(path, text.as_bytes())?;
    }
    Ok(text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Op,
    Model,
}

fn check_line(r: &CheckResult) -> String {
    let (i, a, n) = r.worst;
    format!(
        "{} {:<34} max_rel_error={:.3e} tolerance={:.0e} worst_index={i} analytic={a:.6e} numeric={n:.6e}",
        if r.passed() { "PASS" } else { "FAIL" },
        r.name,
        r.max_rel_error,
        r.tolerance
    )
}

/// Finite-difference report; any failure becomes an error naming the
/// offending gradients after the full report has been produced.
pub fn cmd_gradcheck(scope: Scope, seed: u64) -> Result<String> {
    let results = match scope {
        Scope::Op => op_suite(seed)?,
        Scope::Model => model_check(&ModelConfig::gradcheck(), 4, seed)?,
    };
    let mut out = String::new();
    for r in &results {
        let _ = writeln!(out, "{}", check_line(r));
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let _ = writeln!(out, "{} of {} gradients within tolerance", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(out)
    } else {
        print!("{out}");
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

pub struct SummaryArgs {
    pub run: RunArgs,
    pub eegnet: bool,
    pub records: bool,
}

pub fn cmd_summary(args: &SummaryArgs) -> Result<String> {
    let report = if args.eegnet { eegnet_report(&EegNetConfig::default())? } else { model_report(&args.run.resolve()?.model)? };
    Ok(if args.records { report::model_report_records(&report) } else { report::model_report_text(&report) })
}

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub spec: Option<PathBuf>,
    pub trials: Option<usize>,
    pub channels: Option<usize>,
    pub samples: Option<usize>,
    pub classes: Option<usize>,
    pub snr: Option<f64>,
    pub seed: Option<u64>,
    pub sample_rate: Option<f64>,
    pub out: PathBuf,
    /// Write a CSV directory instead of a binary trial file.
    pub csv: bool,
}

fn spec_from_text(text: &str) -> Result<SynthSpec> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Usage(format!("synth spec: {}", e.message())))?;
    let mut spec = SynthSpec::new(64, 4, 128, 4, 5.0, 0);
    let int = |k: &str, v: &toml::Value| {
        v.as_integer().and_then(|i| u64::try_from(i).ok()).ok_or_else(|| CliError::Usage(format!("{k} must be a non-negative integer")))
    };
    let num =
        |k: &str, v: &toml::Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)).ok_or_else(|| CliError::Usage(format!("{k} must be a number")));
    let mut bands = None;
    for (k, v) in &table {
        match k.as_str() {
            "trials" => spec.trials = int(k, v)? as usize,
            "channels" => spec.channels = int(k, v)? as usize,
            "samples" => spec.samples = int(k, v)? as usize,
            "n_classes" => spec.n_classes = int(k, v)? as usize,
            "seed" => spec.seed = int(k, v)?,
            "snr" => spec.snr = num(k, v)?,
            "sample_rate_hz" => spec.sample_rate_hz = num(k, v)?,
            "class_band_hz" => {
                let items = v.as_array().ok_or_else(|| CliError::Usage("class_band_hz must be a list".into()))?;
                bands = Some(items.iter().map(|x| num(k, x)).collect::<Result<Vec<_>>>()?);
            }
            _ => return Err(CliError::Usage(format!("unknown synth key {k:?}"))),
        }
    }
    spec.class_band_hz = bands.unwrap_or_else(|| SynthSpec::new(1, 1, 1, spec.n_classes, 1.0, 0).class_band_hz);
    Ok(spec)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String> {
    let mut spec = match &args.spec {
        Some(path) => spec_from_text(&read_text(path)?)?,
        None => SynthSpec::new(64, 4, 128, 4, 5.0, 0),
    };
    let classes_changed = args.classes.is_some_and(|n| n != spec.n_classes);
    spec.trials = args.trials.unwrap_or(spec.trials);
    spec.channels = args.channels.unwrap_or(spec.channels);
    spec.samples = args.samples.unwrap_or(spec.samples);
    spec.n_classes = args.classes.unwrap_or(spec.n_classes);
    spec.snr = args.snr.unwrap_or(spec.snr);
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.sample_rate_hz = args.sample_rate.unwrap_or(spec.sample_rate_hz);
    if classes_changed {
        spec.class_band_hz = SynthSpec::new(1, 1, 1, spec.n_classes, 1.0, 0).class_band_hz;
    }
    let set = synth(&spec)?;
    if args.csv {
        to_csv(&set, &args.out)?;
    } else {
        save_trials(&set, &args.out)?;
    }
    Ok(format!(
        "wrote {} trials of {} channels x {} samples, {} classes, to {}\n",
        set.len(),
        set.channels(),
        set.samples(),
        set.n_classes(),
        args.out.display()
    ))
}

pub fn cmd_convert(csv_dir: &Path, out: &Path, n_classes: Option<usize>) -> Result<String> {
    let set = from_csv(csv_dir, n_classes)?;
    save_trials(&set, out)?;
    Ok(format!("converted {} trials from {} to {}\n", set.len(), csv_dir.display(), out.display()))
}

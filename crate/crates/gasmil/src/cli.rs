//! Command-line surface: `synth`, `split`, `preprocess`, `train`, `eval`,
//! `sweep`, `inspect`.
//!
//! Option precedence is defaults < `--config` JSON < command-line flags.
//! Results go to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 domain error (bad data or config), 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gasmil_core::bag::{stratified_split, FeatureBag, GroupLayout, Split, SplitSpec};
use gasmil_core::preprocess::{
    downscale_rgb, tile_coords, tissue_mask, ThresholdMode, DEFAULT_SCALE_FACTOR,
};
use gasmil_core::synth::{synth_generate, SynthSpec};
use gasmil_core::train::{fit, MonitorMetric, StopReason, TrainConfig};
use gasmil_core::{LossKind, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::evaluate::evaluate_parallel;
use crate::formats::checkpoint::{checkpoint_summary, load_checkpoint, save_checkpoint, ModelSpec};
use crate::formats::manifest::{load_manifest, load_split_bags, save_manifest, LayoutDoc};
use crate::formats::{bagfile, ppm};
use crate::options::{Arch, GfebChoice, LossChoice, MonitorChoice, SplitChoice, ThresholdChoice};
use crate::report::{report_to_json, write_train_log};

#[derive(Debug, Parser)]
#[command(name = "gasmil", version, about = "Grouped min-max multi-instance learning over feature bags")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-group dataset (manifest + bag files).
    Synth(SynthArgs),
    /// Assign stratified train/val/test tags to a manifest.
    Split(SplitArgs),
    /// Detect tissue in a PPM image and extract tile crops.
    Preprocess(PreprocessArgs),
    /// Train a model on a manifest's train/val splits.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train over every group subset and report metric vs ensemble size.
    Sweep(SweepArgs),
    /// Dump bag, checkpoint, or manifest headers as JSON.
    Inspect(InspectArgs),
}

/// Optional JSON config file; every section and field may be omitted.
/// Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfigFile {
    model: ModelSection,
    train: TrainSection,
    split: SplitSection,
    paths: PathsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModelSection {
    arch: Option<Arch>,
    gfeb: Option<GfebChoice>,
    selection_count: Option<usize>,
    mlp_hidden: Option<usize>,
    attn_feature_dim: Option<usize>,
    attn_dim: Option<usize>,
    head_hidden: Option<usize>,
    head_dropout: Option<f64>,
    include_concat_group: Option<bool>,
    attn_hidden: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    weight_decay: Option<f64>,
    noise_std: Option<f64>,
    patience: Option<usize>,
    loss: Option<LossChoice>,
    seed: Option<u64>,
    monitor: Option<MonitorChoice>,
    instances: Option<usize>,
    resample_per_epoch: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SplitSection {
    train: Option<f64>,
    val: Option<f64>,
    test: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PathsSection {
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn load_config_file(path: Option<&PathBuf>) -> Result<RunConfigFile> {
    match path {
        None => Ok(RunConfigFile::default()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            serde_json::from_str(&text).map_err(|e| CliError::malformed(path, e.to_string()))
        }
    }
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("bad {what} entry `{part}`")))
        })
        .collect()
}

fn parse_fraction_pair(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::usage(format!(
            "expected `lo,hi` signal fractions, got `{text}`"
        )));
    }
    let lo = parts[0].trim().parse().map_err(|_| CliError::usage("bad fraction"))?;
    let hi = parts[1].trim().parse().map_err(|_| CliError::usage("bad fraction"))?;
    Ok((lo, hi))
}

/// `"0,2;1,2"` -> per-group class lists. An empty segment is a group with no
/// assigned classes.
fn parse_plan(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .map(|segment| {
            let segment = segment.trim();
            if segment.is_empty() {
                Ok(Vec::new())
            } else {
                parse_usize_list(segment, "plan class")
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (manifest.json + bags/).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated group widths, e.g. `16,24`.
    #[arg(long)]
    groups: String,
    /// Optional comma-separated group names matching --groups.
    #[arg(long)]
    names: Option<String>,
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    bags: usize,
    /// Instances per bag.
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean shift added to signal instances.
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    /// Signal fraction range `lo,hi`.
    #[arg(long, default_value = "0.1,0.3")]
    signal_frac: String,
    /// Per-group informative classes, groups separated by `;`
    /// (e.g. `0,2;1,2`). Defaults to distinct group signatures per class.
    #[arg(long)]
    plan: Option<String>,
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    manifest: &'a Path,
    bags: usize,
    classes: usize,
    instances: usize,
    groups: Vec<usize>,
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let dims = parse_usize_list(&args.groups, "group width")?;
    let layout = match &args.names {
        Some(names) => {
            let names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
            GroupLayout::new(names, dims.clone())?
        }
        None => GroupLayout::with_dims(dims.clone())?,
    };
    let plan = match &args.plan {
        Some(text) => parse_plan(text)?,
        None => SynthSpec::default_plan(&layout, args.classes),
    };
    let mut spec = SynthSpec::new(layout, args.bags, args.instances, args.classes, plan)?;
    spec.shift = args.shift;
    spec.signal_fraction = parse_fraction_pair(&args.signal_frac)?;
    spec.validate()?;

    let (manifest, bags) = synth_generate(&spec, &mut RngStream::new(args.seed))?;
    let bag_dir = args.out.join("bags");
    fs::create_dir_all(&bag_dir).map_err(CliError::io(&bag_dir))?;
    for (entry, bag) in manifest.entries.iter().zip(bags.iter()) {
        bagfile::write_bag(&args.out.join(&entry.path), bag)?;
    }
    let manifest_path = args.out.join("manifest.json");
    save_manifest(&manifest_path, &manifest)?;
    let summary = SynthSummary {
        manifest: &manifest_path,
        bags: args.bags,
        classes: args.classes,
        instances: args.instances,
        groups: dims,
    };
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}

// ---------------------------------------------------------------------------
// split

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Train,val,test fractions, e.g. `0.6,0.2,0.2`.
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output manifest path (defaults to rewriting the input).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_split(args: &SplitArgs) -> Result<()> {
    let file = load_config_file(args.config.as_ref())?;
    let manifest_path = args
        .manifest
        .clone()
        .or(file.paths.manifest)
        .ok_or_else(|| CliError::usage("--manifest is required"))?;
    let (train, val, test) = match &args.fractions {
        Some(text) => {
            let parts = text.split(',').collect::<Vec<_>>();
            if parts.len() != 3 {
                return Err(CliError::usage("expected three fractions `train,val,test`"));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| CliError::usage(format!("bad fraction `{s}`")))
            };
            (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
        }
        None => (
            file.split.train.unwrap_or(0.6),
            file.split.val.unwrap_or(0.2),
            file.split.test.unwrap_or(0.2),
        ),
    };
    let seed = args.seed.or(file.split.seed).unwrap_or(0);
    let spec = SplitSpec::new(train, val, test, seed)?;
    let manifest = load_manifest(&manifest_path)?;
    let tagged = stratified_split(&manifest, &spec)?;
    let out = args.out.clone().unwrap_or_else(|| manifest_path.clone());
    save_manifest(&out, &tagged)?;
    println!(
        "{}",
        serde_json::json!({
            "manifest": out,
            "train": tagged.count_in(Split::Train),
            "val": tagged.count_in(Split::Val),
            "test": tagged.count_in(Split::Test),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// model/train resolution shared by train and sweep

#[derive(Debug, Args, Clone)]
pub struct ModelFlags {
    #[arg(long)]
    arch: Option<Arch>,
    #[arg(long)]
    gfeb: Option<GfebChoice>,
    /// Min-max selection count per class column.
    #[arg(long = "s")]
    selection_count: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    attn_feature_dim: Option<usize>,
    #[arg(long)]
    attn_dim: Option<usize>,
    #[arg(long)]
    head_hidden: Option<usize>,
    #[arg(long)]
    head_dropout: Option<f64>,
    /// Drop the extra block over the full concatenation.
    #[arg(long)]
    no_concat_group: bool,
    /// AB-MIL attention hidden width.
    #[arg(long)]
    attn_hidden: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    loss: Option<LossChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    monitor: Option<MonitorChoice>,
    /// Resize every bag to this many instances at load time.
    #[arg(long)]
    instances: Option<usize>,
    /// Redraw the instance subset each time a bag is sampled.
    #[arg(long)]
    resample_per_epoch: bool,
}

fn resolve_model_spec(layout: &GroupLayout, num_classes: usize, flags: &ModelFlags, file: &RunConfigFile, loss: LossChoice) -> ModelSpec {
    let defaults = gasmil_core::model::GasMilConfig::new(layout.clone(), num_classes);
    ModelSpec {
        arch: flags.arch.or(file.model.arch).unwrap_or(Arch::Gasmil),
        gfeb: flags.gfeb.or(file.model.gfeb).unwrap_or(GfebChoice::Mlp),
        layout: LayoutDoc::from_layout(layout),
        num_classes,
        loss,
        selection_count: flags
            .selection_count
            .or(file.model.selection_count)
            .unwrap_or(defaults.selection_count),
        mlp_hidden: flags.mlp_hidden.or(file.model.mlp_hidden).unwrap_or(defaults.mlp_hidden),
        attn_feature_dim: flags
            .attn_feature_dim
            .or(file.model.attn_feature_dim)
            .unwrap_or(defaults.attn_feature_dim),
        attn_dim: flags.attn_dim.or(file.model.attn_dim).unwrap_or(defaults.attn_dim),
        head_hidden: flags.head_hidden.or(file.model.head_hidden).unwrap_or(defaults.head_hidden),
        head_dropout: flags
            .head_dropout
            .or(file.model.head_dropout)
            .unwrap_or(defaults.head_dropout),
        include_concat_group: if flags.no_concat_group {
            false
        } else {
            file.model.include_concat_group.unwrap_or(true)
        },
        attn_hidden: flags.attn_hidden.or(file.model.attn_hidden).unwrap_or(128),
    }
}

fn resolve_train_config(flags: &TrainFlags, file: &RunConfigFile) -> TrainConfig {
    let defaults = TrainConfig::default();
    let loss: LossKind = flags.loss.or(file.train.loss).unwrap_or(LossChoice::Ce).into();
    TrainConfig {
        epochs: flags.epochs.or(file.train.epochs).unwrap_or(defaults.epochs),
        batch_size: flags.batch_size.or(file.train.batch_size).unwrap_or(defaults.batch_size),
        lr: flags.lr.or(file.train.lr).unwrap_or(defaults.lr),
        weight_decay: flags
            .weight_decay
            .or(file.train.weight_decay)
            .unwrap_or(defaults.weight_decay),
        noise_std: flags.noise_std.or(file.train.noise_std).unwrap_or(defaults.noise_std),
        patience: flags.patience.or(file.train.patience).unwrap_or(defaults.patience),
        loss_kind: loss,
        seed: flags.seed.or(file.train.seed).unwrap_or(0),
        monitor: flags
            .monitor
            .or(file.train.monitor)
            .map(MonitorMetric::from)
            .unwrap_or(defaults.monitor),
        instance_target: flags.instances.or(file.train.instances),
        resample_each_epoch: flags.resample_per_epoch || file.train.resample_per_epoch.unwrap_or(false),
    }
}

fn loss_choice(flags: &TrainFlags, file: &RunConfigFile) -> LossChoice {
    flags.loss.or(file.train.loss).unwrap_or(LossChoice::Ce)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (checkpoint.gmck + train_log.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

fn stop_reason_text(reason: &StopReason) -> String {
    match reason {
        StopReason::CompletedAllEpochs => "completed all epochs".to_string(),
        StopReason::EarlyStopped { stalled_epochs } => {
            format!("early stop after {stalled_epochs} stagnant epochs")
        }
    }
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let file = load_config_file(args.config.as_ref())?;
    let manifest_path = args
        .manifest
        .clone()
        .or(file.paths.manifest.clone())
        .ok_or_else(|| CliError::usage("--manifest is required"))?;
    let out_dir = args
        .out
        .clone()
        .or(file.paths.out.clone())
        .ok_or_else(|| CliError::usage("--out is required"))?;
    let manifest = load_manifest(&manifest_path)?;
    if manifest.count_in(Split::Train) == 0 || manifest.count_in(Split::Val) == 0 {
        return Err(CliError::invalid(
            "manifest has no train/val assignment; run `gasmil split` first",
        ));
    }
    let spec = resolve_model_spec(
        &manifest.layout,
        manifest.num_classes,
        &args.model,
        &file,
        loss_choice(&args.train, &file),
    );
    let train_cfg = resolve_train_config(&args.train, &file);
    let train_bags = load_split_bags(&manifest_path, &manifest, Split::Train)?;
    let val_bags = load_split_bags(&manifest_path, &manifest, Split::Val)?;
    eprintln!(
        "training {:?}/{:?} on {} train / {} val bags (seed {})",
        spec.arch,
        spec.gfeb,
        train_bags.len(),
        val_bags.len(),
        train_cfg.seed
    );
    let mut network = spec.build_network(&mut RngStream::new(train_cfg.seed))?;
    let log = fit(&mut network, &train_bags, &val_bags, &train_cfg)?;

    fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    let checkpoint_path = out_dir.join("checkpoint.gmck");
    save_checkpoint(&checkpoint_path, &spec, &network)?;
    let log_path = out_dir.join("train_log.csv");
    write_train_log(&log_path, &log)?;

    let best = &log.epochs[log.best_epoch - 1];
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": checkpoint_path,
            "train_log": log_path,
            "epochs_run": log.epochs.len(),
            "best_epoch": log.best_epoch,
            "stop_reason": stop_reason_text(&log.stop_reason),
            "val": serde_json::from_str::<serde_json::Value>(
                &report_to_json(&best.val)).unwrap(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    split: SplitChoice,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let file = load_config_file(args.config.as_ref())?;
    let manifest_path = args
        .manifest
        .clone()
        .or(file.paths.manifest)
        .ok_or_else(|| CliError::usage("--manifest is required"))?;
    let manifest = load_manifest(&manifest_path)?;
    let (spec, network) = load_checkpoint(&args.checkpoint)?;
    let checkpoint_layout = spec.layout.to_layout()?;
    if checkpoint_layout != manifest.layout {
        return Err(CliError::invalid(format!(
            "layout mismatch: checkpoint was trained on groups {:?} {:?}, manifest has {:?} {:?}",
            spec.layout.names,
            spec.layout.dims,
            manifest.layout.group_names(),
            manifest.layout.group_dims()
        )));
    }
    if spec.num_classes != manifest.num_classes {
        return Err(CliError::invalid(format!(
            "class count mismatch: checkpoint has {}, manifest has {}",
            spec.num_classes, manifest.num_classes
        )));
    }
    let split: Split = args.split.into();
    let bags = load_split_bags(&manifest_path, &manifest, split)?;
    if bags.is_empty() {
        return Err(CliError::invalid(format!(
            "split `{}` is empty in this manifest",
            split.as_str()
        )));
    }
    let (report, _) = evaluate_parallel(&network, &bags, spec.loss_kind())?;
    let text = report_to_json(&report);
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        fs::write(out, &text).map_err(CliError::io(out))?;
    }
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds per group subset; metrics are averaged.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Largest subset size to sweep (defaults to every group).
    #[arg(long)]
    max_k: Option<usize>,
    /// Split the averaged metrics are reported on.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    split: SplitChoice,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn recurse(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            recurse(i + 1, n, k, current, out);
            current.pop();
        }
    }
    recurse(0, n, k, &mut current, &mut out);
    out
}

pub const SWEEP_CSV_HEADER: &str = "k,combo,accuracy,balanced_accuracy,qwk,weighted_f1";

fn run_sweep(args: &SweepArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    let file = load_config_file(args.config.as_ref())?;
    let manifest_path = args
        .manifest
        .clone()
        .or(file.paths.manifest.clone())
        .ok_or_else(|| CliError::usage("--manifest is required"))?;
    let manifest = load_manifest(&manifest_path)?;
    let eval_split: Split = args.split.into();
    for (split, name) in [(Split::Train, "train"), (Split::Val, "val"), (eval_split, "report")] {
        if manifest.count_in(split) == 0 {
            return Err(CliError::invalid(format!("{name} split is empty")));
        }
    }
    let train_bags = load_split_bags(&manifest_path, &manifest, Split::Train)?;
    let val_bags = load_split_bags(&manifest_path, &manifest, Split::Val)?;
    let eval_bags = load_split_bags(&manifest_path, &manifest, eval_split)?;
    let train_cfg = resolve_train_config(&args.train, &file);
    let group_count = manifest.layout.group_count();
    let max_k = args.max_k.unwrap_or(group_count).min(group_count);

    struct Job {
        k: usize,
        combo: Vec<usize>,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for k in 1..=max_k {
        for combo in combinations(group_count, k) {
            for s in 0..args.seeds {
                jobs.push(Job {
                    k,
                    combo: combo.clone(),
                    seed: train_cfg.seed + s,
                });
            }
        }
    }
    eprintln!(
        "sweeping {} runs ({} subsets x {} seeds)",
        jobs.len(),
        jobs.len() / args.seeds as usize,
        args.seeds
    );

    let results: Vec<(usize, Vec<usize>, gasmil_core::MetricsReport)> = jobs
        .par_iter()
        .map(|job| -> Result<_> {
            let restrict = |bags: &[FeatureBag]| -> Result<Vec<FeatureBag>> {
                bags.iter()
                    .map(|b| b.restrict_to_groups(&job.combo).map_err(CliError::from))
                    .collect()
            };
            let layout = manifest.layout.subset(&job.combo)?;
            let spec = resolve_model_spec(
                &layout,
                manifest.num_classes,
                &args.model,
                &file,
                loss_choice(&args.train, &file),
            );
            let cfg = TrainConfig {
                seed: job.seed,
                ..train_cfg.clone()
            };
            let mut network = spec.build_network(&mut RngStream::new(job.seed))?;
            fit(&mut network, &restrict(&train_bags)?, &restrict(&val_bags)?, &cfg)?;
            let (report, _) =
                gasmil_core::train::evaluate_bags(&network, &restrict(&eval_bags)?, cfg.loss_kind)?;
            Ok((job.k, job.combo.clone(), report))
        })
        .collect::<Result<_>>()?;

    // average over seeds per subset, preserving subset order
    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    let mut index = 0;
    while index < results.len() {
        let (k, combo, _) = &results[index];
        let runs: Vec<&gasmil_core::MetricsReport> = results
            [index..index + args.seeds as usize]
            .iter()
            .map(|(_, _, r)| r)
            .collect();
        let mean = |f: &dyn Fn(&gasmil_core::MetricsReport) -> f64| -> f64 {
            runs.iter().map(|r| f(r)).sum::<f64>() / runs.len() as f64
        };
        let qwk_values: Vec<f64> = runs.iter().filter_map(|r| r.qwk).collect();
        let qwk = if qwk_values.is_empty() {
            String::new()
        } else {
            format!("{}", qwk_values.iter().sum::<f64>() / qwk_values.len() as f64)
        };
        let combo_name: Vec<&str> = combo
            .iter()
            .map(|&g| manifest.layout.group_names()[g].as_str())
            .collect();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k,
            combo_name.join("+"),
            mean(&|r| r.accuracy),
            mean(&|r| r.balanced_accuracy),
            qwk,
            mean(&|r| r.weighted_f1),
        ));
        index += args.seeds as usize;
    }
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(CliError::io(parent))?;
            }
            fs::write(path, csv).map_err(CliError::io(path))?;
            eprintln!("sweep written to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// preprocess

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Input image (binary PPM).
    #[arg(long)]
    image: PathBuf,
    /// Output directory (mask.ppm, tiles.json, tiles/).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 224)]
    tile_size: usize,
    /// Keep a tile when at least this fraction is covered by tissue.
    #[arg(long, default_value_t = 0.5)]
    coverage: f64,
    /// Square dilation radius applied to the mask.
    #[arg(long, default_value_t = 1)]
    dilation: usize,
    #[arg(long, value_enum, default_value_t = ThresholdChoice::Otsu)]
    threshold: ThresholdChoice,
    /// Normalized threshold used with `--threshold fixed`.
    #[arg(long, default_value_t = 0.6)]
    fixed_threshold: f64,
    /// Detection downscale factor: the mask is computed on the image reduced
    /// by this factor, tiles are cut at full resolution.
    #[arg(long, default_value_t = DEFAULT_SCALE_FACTOR)]
    mask_scale: usize,
    /// Skip writing tile crops (coordinates only).
    #[arg(long)]
    no_crops: bool,
}

#[derive(Serialize)]
struct TileIndexEntry {
    x: usize,
    y: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Serialize)]
struct TileIndex {
    image_width: usize,
    image_height: usize,
    tile_size: usize,
    coverage_threshold: f64,
    mask_scale: usize,
    tiles: Vec<TileIndexEntry>,
}

fn run_preprocess(args: &PreprocessArgs) -> Result<()> {
    if args.mask_scale == 0 {
        return Err(CliError::usage("--mask-scale must be at least 1"));
    }
    let image = ppm::read_ppm(&args.image)?;
    if image.width() < args.mask_scale || image.height() < args.mask_scale {
        return Err(CliError::invalid(format!(
            "image {}x{} smaller than mask scale {}",
            image.width(),
            image.height(),
            args.mask_scale
        )));
    }
    let detection = downscale_rgb(&image, args.mask_scale)?;
    let mode = match args.threshold {
        ThresholdChoice::Otsu => ThresholdMode::Otsu,
        ThresholdChoice::Fixed => ThresholdMode::Fixed(args.fixed_threshold),
    };
    let mask = tissue_mask(&detection, args.dilation, mode, args.mask_scale)?;
    let grid = tile_coords(&mask, args.tile_size, args.coverage)?;

    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    ppm::write_mask_ppm(&args.out.join("mask.ppm"), &mask)?;
    let mut tiles = Vec::with_capacity(grid.coords.len());
    for (i, &(x, y)) in grid.coords.iter().enumerate() {
        let rel = format!("tiles/tile_{i:05}_x{x}_y{y}.ppm");
        let path = if args.no_crops || x + args.tile_size > image.width() || y + args.tile_size > image.height()
        {
            // tiles come from the mask grid; skip crops that stick out past
            // the image edge left by non-divisible dimensions
            None
        } else {
            let crop = image.crop(x, y, args.tile_size)?;
            ppm::write_ppm(&args.out.join(&rel), &crop)?;
            Some(rel)
        };
        tiles.push(TileIndexEntry { x, y, path });
    }
    let index = TileIndex {
        image_width: image.width(),
        image_height: image.height(),
        tile_size: args.tile_size,
        coverage_threshold: args.coverage,
        mask_scale: args.mask_scale,
        tiles,
    };
    let index_path = args.out.join("tiles.json");
    let mut text = serde_json::to_string_pretty(&index).unwrap();
    text.push('\n');
    fs::write(&index_path, &text).map_err(CliError::io(&index_path))?;
    println!(
        "{}",
        serde_json::json!({
            "tiles": grid.coords.len(),
            "index": index_path,
            "mask_coverage": mask.coverage(),
        })
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, conflicts_with_all = ["checkpoint", "manifest"])]
    bag: Option<PathBuf>,
    #[arg(long, conflicts_with = "manifest")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn run_inspect(args: &InspectArgs) -> Result<()> {
    if let Some(path) = &args.bag {
        let header = bagfile::read_bag_header(path)?;
        println!(
            "{}",
            serde_json::json!({
                "id": header.bag_id,
                "instances": header.instances,
                "width": header.width,
                "label": header.label,
            })
        );
        return Ok(());
    }
    if let Some(path) = &args.checkpoint {
        let (spec, shapes) = checkpoint_summary(path)?;
        let params: Vec<serde_json::Value> = shapes
            .iter()
            .map(|(name, rows, cols)| serde_json::json!({"name": name, "rows": rows, "cols": cols}))
            .collect();
        let total: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
        println!(
            "{}",
            serde_json::json!({
                "spec": serde_json::to_value(&spec).unwrap(),
                "parameters": params,
                "scalar_count": total,
            })
        );
        return Ok(());
    }
    if let Some(path) = &args.manifest {
        let manifest = load_manifest(path)?;
        let mut per_class = vec![0usize; manifest.num_classes];
        for e in &manifest.entries {
            per_class[e.label] += 1;
        }
        println!(
            "{}",
            serde_json::json!({
                "layout": LayoutDoc::from_layout(&manifest.layout),
                "num_classes": manifest.num_classes,
                "entries": manifest.entries.len(),
                "per_class": per_class,
                "train": manifest.count_in(Split::Train),
                "val": manifest.count_in(Split::Val),
                "test": manifest.count_in(Split::Test),
                "unassigned": manifest.count_in(Split::Unassigned),
            })
        );
        return Ok(());
    }
    Err(CliError::usage(
        "inspect needs one of --bag, --checkpoint, or --manifest",
    ))
}

// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Split(args) => run_split(args),
        Command::Preprocess(args) => run_preprocess(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Inspect(args) => run_inspect(args),
    }
}

//! CLI command implementations. Every command threads an explicit seed
//! through its stochastic components and records the resolved configuration
//! into its output artifacts.

use crate::dataset_io::{load_dataset, store_baseline, write_dataset};
use crate::report::{comparison_table, read_report, write_report, ReportFile};
use crate::{plots, CliError, Result};
use mmresgnn_core::baseline::ABGParams;
use mmresgnn_core::scene::ScenarioKind;
use mmresgnn_harness::dataset::{generate_dataset, Dataset, DatasetSpec};
use mmresgnn_harness::metrics::SplitKind;
use mmresgnn_harness::split::{vehicle_wise_split, SplitSpec, DEFAULT_RATIOS};
use mmresgnn_harness::train::{train, TrainConfig};
use mmresgnn_harness::transfer::{run_transfer, TransferSpec, TransferStrategy};
use mmresgnn_harness::variants::{lookup, run_variant, valid_ids, VariantKind};
use mmresgnn_model::checkpoint::{load_checkpoint, save_checkpoint};
use mmresgnn_model::config::ModelConfig;
use serde_json::json;
use std::collections::BTreeSet;
use std::path::Path;

pub struct GenDataArgs {
    pub scenario: ScenarioKind,
    pub snapshots: usize,
    pub seed: u64,
    pub out: std::path::PathBuf,
    pub num_rx: Option<usize>,
    pub num_vehicles: Option<usize>,
    pub k: Option<usize>,
    pub k_corr: Option<usize>,
    pub image_size: Option<usize>,
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut spec = DatasetSpec::new(args.scenario, args.snapshots, args.seed);
    if let Some(v) = args.num_rx {
        spec.scene.num_rx = v;
    }
    if let Some(v) = args.num_vehicles {
        spec.scene.num_vehicles = v;
    }
    if let Some(v) = args.k {
        spec.graph.k = v;
    }
    if let Some(v) = args.k_corr {
        spec.graph.k_corr = v;
    }
    if let Some(v) = args.image_size {
        spec.render_size = v;
    }
    let dataset = generate_dataset(&spec)?;
    let manifest = write_dataset(&dataset, &args.out)?;
    println!(
        "wrote {} snapshots ({} vehicles, {} Rxs, K = {}) to {}",
        manifest.counts.snapshots,
        manifest.counts.vehicles,
        manifest.counts.rx,
        spec.graph.k,
        args.out.display()
    );
    Ok(())
}

/// Split seed resolution: explicit --seed, else the dataset root seed.
fn split_for(dataset: &Dataset, seed: Option<u64>) -> Result<SplitSpec> {
    let seed = seed.unwrap_or(dataset.spec.seed);
    Ok(vehicle_wise_split(&dataset.vehicle_ids(), DEFAULT_RATIOS, seed)?)
}

pub fn fit_baseline_cmd(data_dir: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let dataset = load_dataset(data_dir)?;
    let split = split_for(&dataset, seed)?;
    let train_idx = dataset.indices_for(&split.train_vehicle_ids);
    let baseline = dataset.fit_baseline_on(&train_idx)?;
    let text = crate::formats::encode_baseline(&baseline);
    crate::formats::write_atomic(out, text.as_bytes())?;
    store_baseline(data_dir, &baseline)?;
    println!(
        "fitted baseline on {} train links: w = [{:.4}, {:.4}, {:.4}, {:.4}, {:.4}], sigma_res = {:.4} dB (id {})",
        baseline.n_fit,
        baseline.w[0],
        baseline.w[1],
        baseline.w[2],
        baseline.w[3],
        baseline.w[4],
        baseline.sigma_res,
        baseline.id()
    );
    Ok(())
}

/// Load the dataset and make sure a baseline is attached, fitting and
/// persisting one on the train split when absent.
fn load_with_baseline(data_dir: &Path, seed: Option<u64>) -> Result<(Dataset, SplitSpec)> {
    let mut dataset = load_dataset(data_dir)?;
    let split = split_for(&dataset, seed)?;
    if dataset.baseline.is_none() {
        let train_idx = dataset.indices_for(&split.train_vehicle_ids);
        let baseline = dataset.fit_baseline_on(&train_idx)?;
        store_baseline(data_dir, &baseline)?;
        dataset.attach_baseline(baseline);
    }
    Ok((dataset, split))
}

/// Deep-merge JSON overrides from --config into a serialized config value.
fn merge_json(base: &mut serde_json::Value, overlay: &serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

fn apply_config_file(
    model: &mut ModelConfig,
    train_cfg: &mut TrainConfig,
    config_path: Option<&Path>,
) -> Result<()> {
    let Some(path) = config_path else {
        return Ok(());
    };
    let bytes = std::fs::read(path).map_err(CliError::io(path.display().to_string()))?;
    let overlay: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("bad config file: {e}")))?;
    if let Some(model_overlay) = overlay.get("model") {
        let mut value = serde_json::to_value(&*model).unwrap();
        merge_json(&mut value, model_overlay);
        *model = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("bad model config override: {e}")))?;
    }
    if let Some(train_overlay) = overlay.get("train") {
        let mut value = serde_json::to_value(&*train_cfg).unwrap();
        merge_json(&mut value, train_overlay);
        *train_cfg = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("bad train config override: {e}")))?;
    }
    Ok(())
}

pub struct TrainArgs {
    pub data: std::path::PathBuf,
    pub variant: String,
    pub config: Option<std::path::PathBuf>,
    pub out: std::path::PathBuf,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let variant = lookup(&args.variant)?;
    let VariantKind::Learned(base_config) = &variant.kind else {
        return Err(CliError::Usage(format!(
            "variant {} needs no training; use `ablate` to evaluate it",
            variant.id
        )));
    };
    let (dataset, split) = load_with_baseline(&args.data, args.seed)?;
    let seed = args.seed.unwrap_or(dataset.spec.seed);

    let mut model_config = base_config.clone();
    model_config.image_size = dataset.spec.render_size;
    model_config.seed = seed;
    let mut train_config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = args.epochs {
        train_config.epochs = e;
    }
    apply_config_file(&mut model_config, &mut train_config, args.config.as_deref())?;

    let (model, raw_stats, outcome) = train(&dataset, &split, &model_config, &train_config)?;
    save_checkpoint(&args.out, &model, dataset.baseline.as_ref(), raw_stats)?;

    let history_path = args.out.with_extension("history.json");
    let history = json!({
        "config": {
            "variant": variant.id,
            "model": model_config,
            "train": train_config,
            "split": split,
            "dataset_seed": dataset.spec.seed,
        },
        "history": outcome.history,
        "best_epoch": outcome.best_epoch,
        "best_val_mae": outcome.best_val_mae,
    });
    crate::formats::write_atomic(
        &history_path,
        serde_json::to_vec_pretty(&history)
            .map_err(|e| CliError::Data(e.to_string()))?
            .as_slice(),
    )?;
    println!(
        "trained {} for {} epochs (best epoch {}, val MAE {:.4} dB); checkpoint at {}",
        variant.id,
        outcome.history.len(),
        outcome.best_epoch,
        outcome.best_val_mae,
        args.out.display()
    );
    Ok(())
}

pub struct EvalArgs {
    pub ckpt: std::path::PathBuf,
    pub data: std::path::PathBuf,
    pub split: SplitKind,
    pub report: std::path::PathBuf,
    pub seed: Option<u64>,
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let (dataset, split) = load_with_baseline(&args.data, args.seed)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let metrics = mmresgnn_harness::evaluate::evaluate_checkpoint(&ckpt, &dataset, &split, args.split)?;
    let mut report = mmresgnn_harness::metrics::MetricsReport::new("checkpoint", args.split, metrics);
    report.variant_id = format!("ckpt:{}", args.ckpt.display());
    let file = ReportFile {
        config: json!({
            "checkpoint": args.ckpt.display().to_string(),
            "dataset_seed": dataset.spec.seed,
            "model": ckpt.model.config,
            "split": split,
            "split_kind": args.split,
        }),
        results: vec![report.clone()],
    };
    write_report(&args.report, &file)?;
    println!(
        "{:?} split: MAE {:.4} dB, NMSE {:.5}, MAPE {:.4}% over {} links",
        args.split, report.mae, report.nmse, report.mape, report.n
    );
    Ok(())
}

pub struct AblateArgs {
    pub data: std::path::PathBuf,
    pub variants: Vec<String>,
    pub report: std::path::PathBuf,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub fit_abg: bool,
}

pub fn ablate_cmd(args: &AblateArgs) -> Result<()> {
    let (dataset, split) = load_with_baseline(&args.data, args.seed)?;
    let seed = args.seed.unwrap_or(dataset.spec.seed);
    let ids: Vec<String> = if args.variants.len() == 1 && args.variants[0] == "all" {
        valid_ids().iter().map(|s| s.to_string()).collect()
    } else {
        args.variants.clone()
    };
    for id in &ids {
        lookup(id)?;
    }

    let abg_params = if args.fit_abg {
        let train_idx = dataset.indices_for(&split.train_vehicle_ids);
        let mut links = Vec::new();
        for &gi in &train_idx {
            for e in &dataset.graphs[gi].transmission_edges {
                links.push((10f64.powf(e.features.log_dist()), e.pl_raw));
            }
        }
        let fitted = mmresgnn_core::baseline::fit_abg(
            &links,
            dataset.spec.scene.carrier_freq,
            ABGParams::default().gamma,
        )?;
        println!(
            "fitted ABG on train links: alpha = {:.4}, beta = {:.4} (gamma fixed {:.2})",
            fitted.alpha, fitted.beta, fitted.gamma
        );
        fitted
    } else {
        ABGParams::default()
    };

    let mut train_config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = args.epochs {
        train_config.epochs = e;
    }

    let mut results = Vec::new();
    for id in &ids {
        let report = run_variant(id, &dataset, &split, SplitKind::Test, &train_config, &abg_params)?;
        println!(
            "{:8}  MAE {:.4} dB  NMSE {:.5}  MAPE {:.4}%",
            id, report.mae, report.nmse, report.mape
        );
        results.push(report);
    }
    let file = ReportFile {
        config: json!({
            "dataset_seed": dataset.spec.seed,
            "seed": seed,
            "train": train_config,
            "split": split,
            "variants": ids,
            "abg": abg_params,
        }),
        results,
    };
    write_report(&args.report, &file)?;
    println!("report written to {}", args.report.display());
    Ok(())
}

pub struct TransferArgs {
    pub source_ckpt: Option<std::path::PathBuf>,
    pub target: std::path::PathBuf,
    pub strategy: TransferStrategy,
    pub ratio: f64,
    pub report: std::path::PathBuf,
    pub out_ckpt: Option<std::path::PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

pub fn transfer_cmd(args: &TransferArgs) -> Result<()> {
    if !(0.0 < args.ratio && args.ratio <= 1.0) {
        return Err(CliError::Usage(format!(
            "--ratio must be in (0, 1], got {}",
            args.ratio
        )));
    }
    let (dataset, split) = load_with_baseline(&args.target, args.seed)?;
    let seed = args.seed.unwrap_or(dataset.spec.seed);
    let spec = TransferSpec {
        strategy: args.strategy,
        source_checkpoint: args.source_ckpt.clone(),
        target_ratio: args.ratio,
        seed,
    };
    let mut train_config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(e) = args.epochs {
        train_config.epochs = e;
    }
    let scratch_config = ModelConfig {
        seed,
        ..ModelConfig::default()
    };
    let (model, raw_stats, outcome, report) =
        run_transfer(&spec, &dataset, &split, &scratch_config, &train_config)?;
    if let Some(out) = &args.out_ckpt {
        save_checkpoint(out, &model, dataset.baseline.as_ref(), raw_stats)?;
    }
    let file = ReportFile {
        config: json!({
            "strategy": spec.strategy,
            "ratio": spec.target_ratio,
            "seed": seed,
            "source": args.source_ckpt.as_ref().map(|p| p.display().to_string()),
            "target_seed": dataset.spec.seed,
            "train": train_config,
            "split": split,
            "best_epoch": outcome.best_epoch,
        }),
        results: vec![report.clone()],
    };
    write_report(&args.report, &file)?;
    println!(
        "transfer {:?} at ratio {}: test MAE {:.4} dB, NMSE {:.5}, MAPE {:.4}%",
        args.strategy, args.ratio, report.mae, report.nmse, report.mape
    );
    Ok(())
}

pub fn report_cmd(inputs: &[std::path::PathBuf], plots_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(plots_dir).map_err(CliError::io(plots_dir.display().to_string()))?;
    let mut all = Vec::new();
    for path in inputs {
        all.extend(read_report(path)?.results);
    }
    if all.is_empty() {
        return Err(CliError::Usage("no results found in the input reports".into()));
    }

    let table = comparison_table(&all);
    println!("{table}");
    crate::formats::write_atomic(&plots_dir.join("comparison.md"), table.as_bytes())?;

    // MAE bar chart over non-transfer rows.
    let bars: Vec<&mmresgnn_harness::metrics::MetricsReport> =
        all.iter().filter(|r| r.ratio.is_none()).collect();
    if !bars.is_empty() {
        let labels: Vec<String> = bars.iter().map(|r| r.variant_id.clone()).collect();
        let values: Vec<f64> = bars.iter().map(|r| r.mae).collect();
        plots::bar_chart(
            &plots_dir.join("mae_by_variant.svg"),
            "Test MAE by variant",
            "MAE (dB)",
            &labels,
            &values,
        )?;
    }

    // Data-efficiency curves for transfer rows.
    let mut by_strategy: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for r in all.iter().filter(|r| r.ratio.is_some()) {
        by_strategy
            .entry(r.strategy.clone().unwrap_or_else(|| "unknown".into()))
            .or_default()
            .push((r.ratio.unwrap() * 100.0, r.mae));
    }
    if !by_strategy.is_empty() {
        let series: Vec<(String, Vec<(f64, f64)>)> = by_strategy.into_iter().collect();
        plots::line_chart(
            &plots_dir.join("data_efficiency.svg"),
            "Few-shot adaptation",
            "Target data (%)",
            "Test MAE (dB)",
            &series,
        )?;
    }
    println!("plots written to {}", plots_dir.display());
    Ok(())
}

/// Variant ids usable with `train`.
pub fn trainable_variants() -> Vec<&'static str> {
    valid_ids()
        .into_iter()
        .filter(|id| matches!(lookup(id).unwrap().kind, VariantKind::Learned(_)))
        .collect()
}

/// Exposed for integration tests.
pub fn resolve_split(dataset: &Dataset, seed: Option<u64>) -> Result<SplitSpec> {
    split_for(dataset, seed)
}

/// Vehicle ids helper used by tests.
pub fn vehicle_id_set(dataset: &Dataset) -> BTreeSet<u32> {
    dataset.vehicle_ids().into_iter().collect()
}

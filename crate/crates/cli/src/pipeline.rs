//! The training and comparison pipelines, free of any file output.

use gridts::baseline::{clusters_to_rules, gk_cluster, grabs_merge, merge_sweep, SweepRow};
use gridts::data::{load_csv, split_indices, zscore_apply, zscore_fit, Schema, SplitSpec};
use gridts::engine::{enumerate_rules, prune_inactive, ModelMetadata};
use gridts::estimate::{fit_consequents, lambda_search, LambdaTrial, RidgeConfig};
use gridts::features::{engineer, read_engineered_csv, read_raw_csv, records_to_dataset, split_by_config, PhysicsConstants};
use gridts::metrics::{mae, mape_range, mape_standard, parameter_count, partition_distinguishability, MetricReport, PairingMode};
use gridts::partition::{build_grid, override_sets, FuzzyPartition, GridSpec, SetEdit};
use gridts::{Dataset, NormStats, RuleBase, TSModel};
use serde::Serialize;

use crate::config::{PipelineConfig, SchemaKind};
use crate::error::{CliError, Stage, StageExt};

/// Envelope level below which a partition is reported as leaving a gap. A
/// default grid bottoms out at exp(-2) between neighbouring centers.
const COVERAGE_WARNING: f64 = 0.1;

/// One modelling problem: the whole file, or one membrane configuration.
#[derive(Debug, Clone)]
pub struct Subset {
    pub key: Option<(u8, u8)>,
    pub data: Dataset,
}

impl Subset {
    /// File name suffix for per-configuration outputs.
    pub fn suffix(&self) -> String {
        match self.key {
            Some((mt, mo)) => format!("_MT{mt}_MO{mo}"),
            None => String::new(),
        }
    }
}

fn project(data: &Dataset, features: &[String], target: &str) -> Result<Dataset, CliError> {
    let names = data.feature_names();
    let cols = features
        .iter()
        .map(|f| {
            names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| CliError::config(Stage::Load, format!("unknown feature `{f}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if data.target_name() != target {
        return Err(CliError::config(Stage::Load, format!("unknown target `{target}`")));
    }
    let x = data.inputs().select_columns(&cols);
    let units = cols
        .iter()
        .map(|&c| data.units()[c].clone())
        .chain(std::iter::once(data.units()[names.len()].clone()))
        .collect();
    Dataset::new(
        features.to_vec(),
        target,
        x,
        nalgebra::DVector::from_column_slice(data.target()),
    )
    .and_then(|d| d.with_units(units))
    .stage(Stage::Load)
}

/// Config-level check that every named column exists in the file header.
fn check_header<'a>(path: &std::path::Path, names: impl Iterator<Item = &'a String>) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::data(Stage::Load, e.to_string()))?;
    let header = rdr.headers().map_err(|e| CliError::data(Stage::Load, e.to_string()))?;
    for n in names {
        if !header.iter().any(|h| h.trim() == n) {
            return Err(CliError::config(
                Stage::Config,
                format!("unknown column `{n}`: not in the header of {}", path.display()),
            ));
        }
    }
    Ok(())
}

/// Loads the configured input in raw feature units.
pub fn load_subsets(cfg: &PipelineConfig) -> Result<Vec<Subset>, CliError> {
    let features = cfg.data.feature_names();
    let target = cfg.data.target_name();
    let path = &cfg.data.path;
    let records = match cfg.data.schema {
        SchemaKind::Plain => {
            check_header(path, features.iter().chain(std::iter::once(&target)))?;
            let data = load_csv(path, &Schema::new(features, target)).stage(Stage::Load)?;
            return Ok(vec![Subset { key: None, data }]);
        }
        SchemaKind::Engineered => read_engineered_csv(path).stage(Stage::Load)?,
        SchemaKind::Raw => {
            let raw = read_raw_csv(path).stage(Stage::Load)?;
            let constants = PhysicsConstants {
                vant_hoff_feed: cfg.data.vant_hoff_feed,
                vant_hoff_draw: cfg.data.vant_hoff_draw,
            };
            engineer(&raw, &constants).stage(Stage::Engineer)?
        }
    };
    if records.is_empty() {
        return Err(CliError::data(Stage::Load, "dataset is empty"));
    }
    let groups: Vec<(Option<(u8, u8)>, Dataset)> = if cfg.data.by_config {
        split_by_config(&records)
            .stage(Stage::Load)?
            .into_iter()
            .map(|(k, d)| (Some(k), d))
            .collect()
    } else {
        vec![(None, records_to_dataset(&records).stage(Stage::Load)?)]
    };
    groups
        .into_iter()
        .map(|(key, d)| {
            Ok(Subset {
                key,
                data: project(&d, &features, &target)?,
            })
        })
        .collect()
}

/// Split, normalized views of one subset.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub key: Option<(u8, u8)>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub stats: NormStats,
    pub train_raw: Dataset,
    pub test_raw: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    /// Fitting and validation parts used to choose lambda.
    pub fit: Dataset,
    pub validation: Dataset,
}

pub fn prepare(cfg: &PipelineConfig, subset: &Subset) -> Result<Prepared, CliError> {
    let spec = SplitSpec {
        train_fraction: cfg.split.train_fraction,
        seed: cfg.seed,
    };
    let (train_rows, test_rows) = split_indices(subset.data.n_rows(), &spec).stage(Stage::Split)?;
    let train_raw = subset.data.select_rows(&train_rows).stage(Stage::Split)?;
    let test_raw = subset.data.select_rows(&test_rows).stage(Stage::Split)?;
    let stats = zscore_fit(&train_raw).stage(Stage::Normalize)?;
    let train = zscore_apply(&train_raw, &stats).stage(Stage::Normalize)?;
    let test = zscore_apply(&test_raw, &stats).stage(Stage::Normalize)?;
    let (fit, validation) = if cfg.split.tune_on_test {
        (train.clone(), test.clone())
    } else {
        let inner = SplitSpec {
            train_fraction: 1.0 - cfg.split.validation_fraction,
            seed: cfg.seed.wrapping_add(1),
        };
        let (f, v) = split_indices(train.n_rows(), &inner).stage(Stage::Split)?;
        (
            train.select_rows(&f).stage(Stage::Split)?,
            train.select_rows(&v).stage(Stage::Split)?,
        )
    };
    Ok(Prepared {
        key: subset.key,
        train_rows,
        test_rows,
        stats,
        train_raw,
        test_raw,
        train,
        test,
        fit,
        validation,
    })
}

/// Grid partitions in normalized units. Configured universes and edits are
/// given in raw units and converted with the training statistics; without
/// a configured universe the training range is used.
pub fn build_partitions(cfg: &PipelineConfig, prep: &Prepared) -> Result<Vec<FuzzyPartition>, CliError> {
    let ranges = prep.train.feature_ranges();
    cfg.grid_specs_raw()
        .into_iter()
        .enumerate()
        .map(|(j, (name, g))| {
            let range = match g.universe {
                Some((lo, hi)) => (prep.stats.normalize_value(j, lo), prep.stats.normalize_value(j, hi)),
                None => ranges[j],
            };
            let spec = GridSpec {
                n_sets: g.n_sets,
                overlap: g.overlap,
                labels: g.labels.clone(),
            };
            let grid = build_grid(name.clone(), range, &spec).stage(Stage::Partition)?;
            let std = prep.stats.std[j];
            let edits: Vec<SetEdit> = g
                .edits
                .iter()
                .map(|e| SetEdit {
                    index: e.index,
                    mu: e.mu.map(|m| prep.stats.normalize_value(j, m)),
                    sigma: e.sigma.map(|s| s / std),
                    label: e.label.clone(),
                })
                .collect();
            let part = override_sets(&grid, &edits).stage(Stage::Partition)?;
            match gridts::partition::coverage_check(&part, COVERAGE_WARNING) {
                Ok(c) if !c.is_covered() => log::warn!(
                    "feature `{name}`: membership drops to {:.3} inside the universe",
                    c.weakest
                ),
                _ => {}
            }
            Ok(part)
        })
        .collect()
}

/// Consequents for `rb`: fixed lambda, or searched on the fit/validation
/// parts and refitted on the full training set.
fn estimate(
    cfg: &PipelineConfig,
    prep: &Prepared,
    rb: &RuleBase,
    fixed: Option<f64>,
) -> Result<(RuleBase, f64, Option<Vec<LambdaTrial>>), CliError> {
    if let Some(lambda) = fixed {
        return Ok((fit_consequents(rb, &prep.train, lambda).stage(Stage::Estimate)?, lambda, None));
    }
    let ridge = RidgeConfig {
        lambda_grid: cfg.ridge.grid,
        objective: cfg.ridge.objective,
    };
    let search = lambda_search(rb, &prep.fit, &prep.validation, &ridge).stage(Stage::Estimate)?;
    let fitted = if cfg.split.tune_on_test {
        search.best_rule_base
    } else {
        fit_consequents(rb, &prep.train, search.best_lambda).stage(Stage::Estimate)?
    };
    Ok((fitted, search.best_lambda, Some(search.trace)))
}

#[derive(Debug, Clone)]
pub struct GridFit {
    pub model: TSModel,
    pub initial_rules: usize,
    pub retained: Vec<usize>,
    pub strengths: Vec<f64>,
    pub lambda: f64,
    pub trace: Option<Vec<LambdaTrial>>,
}

pub fn fit_grid(cfg: &PipelineConfig, prep: &Prepared) -> Result<GridFit, CliError> {
    let partitions = build_partitions(cfg, prep)?;
    let overlap = cfg.grid_specs_raw().iter().map(|(_, g)| g.overlap).collect();
    let full = enumerate_rules(partitions).stage(Stage::Enumerate)?;
    let initial_rules = full.n_rules();
    let pruned = prune_inactive(&full, prep.train.inputs(), cfg.pruning.threshold).stage(Stage::Prune)?;
    log::info!("pruning kept {} of {initial_rules} rules", pruned.retained.len());
    let (rb, lambda, trace) = estimate(cfg, prep, &pruned.rule_base, cfg.ridge.lambda)?;
    let metadata = ModelMetadata {
        overlap,
        prune_threshold: Some(cfg.pruning.threshold),
        lambda: Some(lambda),
        config_key: prep.key,
        initial_rules,
    };
    let model = TSModel::new(rb, prep.stats.clone(), metadata).stage(Stage::Estimate)?;
    Ok(GridFit {
        model,
        initial_rules,
        retained: pruned.retained,
        strengths: pruned.strengths,
        lambda,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct ClusterFitResult {
    pub model: TSModel,
    pub initial_rules: usize,
    pub dropped_sets: usize,
    pub converged: bool,
    pub lambda: f64,
}

pub fn fit_cluster(cfg: &PipelineConfig, prep: &Prepared) -> Result<ClusterFitResult, CliError> {
    let gk = gk_cluster(&prep.train.joined(), &cfg.baseline.gk(cfg.seed)).stage(Stage::Cluster)?;
    let rules = clusters_to_rules(&gk, &prep.train).stage(Stage::Cluster)?;
    let initial_rules = rules.n_rules();
    let merged = grabs_merge(&rules, cfg.baseline.merge_threshold, prep.train.inputs()).stage(Stage::Merge)?;
    let (rb, lambda, _) = estimate(cfg, prep, &merged.rule_base, cfg.baseline.lambda)?;
    let metadata = ModelMetadata {
        overlap: Vec::new(),
        prune_threshold: None,
        lambda: Some(lambda),
        config_key: prep.key,
        initial_rules,
    };
    let model = TSModel::new(rb, prep.stats.clone(), metadata).stage(Stage::Estimate)?;
    Ok(ClusterFitResult {
        model,
        initial_rules,
        dropped_sets: merged.dropped_sets,
        converged: gk.converged,
        lambda,
    })
}

/// Test-set metrics for a model fitted on `prep`.
pub fn evaluate(model: &TSModel, prep: &Prepared) -> Result<MetricReport, CliError> {
    let pred = model.predict_batch(prep.test.inputs());
    let mae_normalized = mae(&pred, prep.test.target()).stage(Stage::Evaluate)?;
    let raw_pred: Vec<f64> = pred.iter().map(|&z| prep.stats.denormalize_target(z)).collect();
    let raw_mae = mae(&raw_pred, prep.test_raw.target()).stage(Stage::Evaluate)?;
    let t = prep.train_raw.target();
    let range = t.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t.iter().copied().fold(f64::INFINITY, f64::min);
    let parts = model.rule_base.partitions();
    Ok(MetricReport {
        mae_normalized,
        mae: raw_mae,
        mape_range: mape_range(raw_mae, range).stage(Stage::Evaluate)?,
        mape_standard: mape_standard(&raw_pred, prep.test_raw.target()).unwrap_or(f64::NAN),
        target_range: range,
        n_rules: model.rule_base.n_rules(),
        n_parameters: parameter_count(&model.rule_base),
        all_pairs: partition_distinguishability(parts, PairingMode::AllPairs),
        adjacent_pairs: partition_distinguishability(parts, PairingMode::AdjacentPairs),
    })
}

/// Threshold sweep of the clustered model on the fit/validation parts.
pub fn sweep(cfg: &PipelineConfig, prep: &Prepared) -> Result<Vec<SweepRow>, CliError> {
    merge_sweep(
        &prep.fit,
        &prep.validation,
        &cfg.baseline.gk(cfg.seed),
        &cfg.baseline.sweep,
        cfg.baseline.sweep_lambda,
    )
    .stage(Stage::Merge)
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitRecord {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

impl From<&Prepared> for SplitRecord {
    fn from(p: &Prepared) -> Self {
        Self {
            train_rows: p.train_rows.clone(),
            test_rows: p.test_rows.clone(),
        }
    }
}

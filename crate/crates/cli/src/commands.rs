//! The subcommands. Each returns what it wrote so callers and tests can
//! inspect results without re-reading files.

use std::io::Write;
use std::path::{Path, PathBuf};

use gridts::baseline::write_sweep_csv;
use gridts::data::{generate_synthetic, read_table, write_csv, SyntheticSpec};
use gridts::engine::{enumerate_rules, explain, render_rules, ModelMetadata};
use gridts::estimate::{unpack_consequents, write_trace_csv};
use gridts::features::{engineer, read_raw_csv, PhysicsConstants, MODEL_FEATURES, MODEL_TARGET};
use gridts::metrics::MetricReport;
use gridts::partition::{build_grid, GridSpec};
use gridts::{Dataset, NormStats, RuleBase, TSModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Stage, StageExt};
use crate::model_file::{ModelFile, Provenance};
use crate::pipeline::{evaluate, fit_cluster, fit_grid, load_subsets, prepare, sweep, SplitRecord};

pub const REPORT_VERSION: u32 = 1;
pub const MF_SAMPLES: usize = 500;

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(Stage::Write, format!("{}: {e}", path.display()))
}

/// Writes every file to a temporary name first and renames once all of
/// them exist, so a failure leaves no partial set of outputs behind.
pub fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| write_err(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(write_err(&tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in &staged {
        std::fs::rename(tmp, dest).map_err(|e| write_err(dest, e))?;
    }
    Ok(staged.into_iter().map(|(_, d)| d).collect())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub format: &'static str,
    pub version: u32,
    pub config_key: Option<(u8, u8)>,
    pub lambda: f64,
    pub initial_rules: usize,
    pub retained_rules: Vec<usize>,
    pub rule_strengths: Vec<f64>,
    pub split: SplitRecord,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub model: ModelFile,
    pub report: TrainReport,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<TrainOutcome>, CliError> {
    let subsets = load_subsets(cfg)?;
    let hash = cfg.hash();
    let mut files = Vec::new();
    let mut outcomes = Vec::new();
    for subset in &subsets {
        let prep = prepare(cfg, subset)?;
        let fit = fit_grid(cfg, &prep)?;
        let metrics = evaluate(&fit.model, &prep)?;
        let sfx = subset.suffix();
        let file = ModelFile::new(
            fit.model.clone(),
            Provenance {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: hash.clone(),
                seed: cfg.seed,
                initial_rules: fit.initial_rules,
                train_rows: prep.train_rows.len(),
                test_rows: prep.test_rows.len(),
            },
        );
        let report = TrainReport {
            format: "gridts-train-report",
            version: REPORT_VERSION,
            config_key: subset.key,
            lambda: fit.lambda,
            initial_rules: fit.initial_rules,
            retained_rules: fit.retained.clone(),
            rule_strengths: fit.strengths.clone(),
            split: SplitRecord::from(&prep),
            metrics,
        };
        files.push((format!("model{sfx}.json"), file.to_json().into_bytes()));
        files.push((format!("metrics{sfx}.json"), to_json(&report)));
        let mut rules = render_rules(&fit.model).join("\n");
        rules.push('\n');
        files.push((format!("rules{sfx}.txt"), rules.into_bytes()));
        if let Some(trace) = &fit.trace {
            let mut buf = Vec::new();
            write_trace_csv(trace, &mut buf).stage(Stage::Write)?;
            files.push((format!("lambda_trace{sfx}.csv"), buf));
        }
        outcomes.push(TrainOutcome {
            model_path: cfg.output_dir.join(format!("model{sfx}.json")),
            model: file,
            report,
        });
    }
    write_outputs(&cfg.output_dir, &files)?;
    Ok(outcomes)
}

/// How `cmd_predict` reads its input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputKind {
    /// Columns named like the model features.
    #[default]
    Columns,
    /// Raw membrane table, engineered before prediction.
    Raw,
}

fn read_inputs(path: &Path, model: &TSModel, kind: InputKind) -> Result<Vec<Vec<f64>>, CliError> {
    let features = model.feature_names();
    match kind {
        InputKind::Columns => read_table(path, &features).map_err(|e| match e {
            gridts::Error::MissingColumn { column } => CliError::data(
                Stage::Predict,
                format!("input is missing model feature column `{column}`"),
            ),
            e => CliError::from_core(Stage::Load, e),
        }),
        InputKind::Raw => {
            if features.iter().map(String::as_str).ne(MODEL_FEATURES) {
                return Err(CliError::data(
                    Stage::Predict,
                    format!("raw inputs need a model over {MODEL_FEATURES:?}, this one uses {features:?}"),
                ));
            }
            let raw = read_raw_csv(path).stage(Stage::Load)?;
            let rec = engineer(&raw, &PhysicsConstants::default()).stage(Stage::Engineer)?;
            Ok(rec
                .iter()
                .map(|r| vec![r.ds_molecular_weight, r.delta_pi, r.velocity_mean])
                .collect())
        }
    }
}

/// Predictions in raw target units, one row per input row. With `explain`,
/// one column per rule holds that rule's share of the prediction; the
/// shares sum to the prediction.
pub fn cmd_predict<W: Write>(
    model_path: &Path,
    input: &Path,
    kind: InputKind,
    explain_rules: bool,
    out: W,
) -> Result<Vec<f64>, CliError> {
    let file = ModelFile::load(model_path)?;
    let model = &file.model;
    let rows = read_inputs(input, model, kind)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![model.target_name().to_string()];
    if explain_rules {
        header.extend((1..=model.rule_base.n_rules()).map(|r| format!("rule_{r}")));
    }
    w.write_record(&header).map_err(|e| CliError::data(Stage::Write, e.to_string()))?;
    let stats = &model.norm_stats;
    let mut predictions = Vec::with_capacity(rows.len());
    for x in &rows {
        let z = stats.normalize_input(x);
        let mut record = Vec::with_capacity(header.len());
        if explain_rules {
            let e = explain(model, &z);
            // Each share carries its part of the target offset: the shares
            // b_r * (mean + std * z_r) add up to mean + std * output.
            let shares: Vec<f64> = e
                .terms
                .iter()
                .map(|t| t.normalized * stats.denormalize_target(t.consequent))
                .collect();
            let y = stats.denormalize_target(e.output);
            record.push(y.to_string());
            record.extend(shares.iter().map(|s| s.to_string()));
            predictions.push(y);
        } else {
            let y = model.predict_raw(x);
            record.push(y.to_string());
            predictions.push(y);
        }
        w.write_record(&record).map_err(|e| CliError::data(Stage::Write, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::data(Stage::Write, e.to_string()))?;
    Ok(predictions)
}

/// Membership curves of one feature sampled at [`MF_SAMPLES`] points of
/// its universe, with x in raw units.
pub fn membership_curves(model: &TSModel, feature: usize) -> Vec<Vec<f64>> {
    let p = &model.rule_base.partitions()[feature];
    let (lo, hi) = p.universe();
    let stats = &model.norm_stats;
    (0..MF_SAMPLES)
        .map(|i| {
            let z = lo + (hi - lo) * i as f64 / (MF_SAMPLES - 1) as f64;
            let mut row = vec![stats.denormalize_value(feature, z)];
            row.extend(p.memberships(z));
            row
        })
        .collect()
}

/// Renders the rules and writes `mf_<feature>.csv` per feature into
/// `out_dir` when given. Returns the rendered rules.
pub fn cmd_report(model_path: &Path, out_dir: Option<&Path>) -> Result<Vec<String>, CliError> {
    let file = ModelFile::load(model_path)?;
    let model = &file.model;
    let rules = render_rules(model);
    if let Some(dir) = out_dir {
        let mut files = Vec::new();
        for (j, p) in model.rule_base.partitions().iter().enumerate() {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec![p.feature.clone()];
            header.extend(p.sets().iter().map(|s| s.label.clone()));
            w.write_record(&header).map_err(|e| CliError::data(Stage::Write, e.to_string()))?;
            for row in membership_curves(model, j) {
                w.write_record(row.iter().map(|v| v.to_string()))
                    .map_err(|e| CliError::data(Stage::Write, e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::data(Stage::Write, e.to_string()))?;
            files.push((format!("mf_{}.csv", p.feature), bytes));
        }
        write_outputs(dir, &files)?;
    }
    Ok(rules)
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    pub metrics: Option<MetricReport>,
    pub lambda: Option<f64>,
    pub initial_rules: Option<usize>,
    /// Clustered branch only.
    pub dropped_sets: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

impl BranchReport {
    fn failed(e: &CliError) -> Self {
        Self {
            metrics: None,
            lambda: None,
            initial_rules: None,
            dropped_sets: None,
            converged: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub format: &'static str,
    pub version: u32,
    pub config_key: Option<(u8, u8)>,
    pub split: SplitRecord,
    pub grid: BranchReport,
    pub cluster: BranchReport,
}

fn compare_csv(report: &CompareReport) -> Vec<u8> {
    let pick = |b: &BranchReport, f: &dyn Fn(&MetricReport) -> f64| {
        b.metrics.as_ref().map(|m| f(m).to_string()).unwrap_or_default()
    };
    type Metric<'a> = (&'a str, &'a dyn Fn(&MetricReport) -> f64);
    let metrics: [Metric; 9] = [
        ("mae", &|m| m.mae),
        ("mae_normalized", &|m| m.mae_normalized),
        ("mape_range", &|m| m.mape_range),
        ("n_rules", &|m| m.n_rules as f64),
        ("n_parameters", &|m| m.n_parameters as f64),
        ("mean_s", &|m| m.all_pairs.mean_s),
        ("mean_d", &|m| m.all_pairs.mean_d),
        ("mean_jaccard", &|m| m.all_pairs.mean_jaccard),
        ("max_possibility", &|m| m.all_pairs.max_possibility),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "grid", "cluster"]).expect("in-memory write");
    for (name, f) in metrics {
        w.write_record([name.to_string(), pick(&report.grid, f), pick(&report.cluster, f)])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Fits the grid model and the clustered baseline on the same split. A
/// failing branch is reported and the other still written; the command
/// only fails when both branches do.
pub fn cmd_compare(cfg: &PipelineConfig) -> Result<Vec<CompareReport>, CliError> {
    let subsets = load_subsets(cfg)?;
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for subset in &subsets {
        let prep = prepare(cfg, subset)?;
        let grid = fit_grid(cfg, &prep).and_then(|f| Ok((evaluate(&f.model, &prep)?, f)));
        let cluster = fit_cluster(cfg, &prep).and_then(|f| Ok((evaluate(&f.model, &prep)?, f)));
        let grid_report = match &grid {
            Ok((m, f)) => BranchReport {
                metrics: Some(m.clone()),
                lambda: Some(f.lambda),
                initial_rules: Some(f.initial_rules),
                dropped_sets: None,
                converged: None,
                error: None,
            },
            Err(e) => {
                log::error!("grid branch failed: {e}");
                BranchReport::failed(e)
            }
        };
        let cluster_report = match &cluster {
            Ok((m, f)) => BranchReport {
                metrics: Some(m.clone()),
                lambda: Some(f.lambda),
                initial_rules: Some(f.initial_rules),
                dropped_sets: Some(f.dropped_sets),
                converged: Some(f.converged),
                error: None,
            },
            Err(e) => {
                log::error!("cluster branch failed: {e}");
                BranchReport::failed(e)
            }
        };
        if let (Err(e), Err(_)) = (&grid, &cluster) {
            return Err(CliError::new(e.stage, e.kind, format!("both branches failed; grid: {}", e.message)));
        }
        let report = CompareReport {
            format: "gridts-compare-report",
            version: REPORT_VERSION,
            config_key: subset.key,
            split: SplitRecord::from(&prep),
            grid: grid_report,
            cluster: cluster_report,
        };
        let sfx = subset.suffix();
        files.push((format!("compare{sfx}.json"), to_json(&report)));
        files.push((format!("compare{sfx}.csv"), compare_csv(&report)));
        if cfg.baseline.run_sweep {
            let rows = sweep(cfg, &prep)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf).stage(Stage::Write)?;
            files.push((format!("sweep{sfx}.csv"), buf));
        }
        reports.push(report);
    }
    write_outputs(&cfg.output_dir, &files)?;
    Ok(reports)
}

/// Universes of the built-in planted model, in raw units.
pub const PLANTED_UNIVERSES: [(f64, f64); 3] = [(18.0, 342.0), (0.0, 300.0), (5.0, 45.0)];

/// A 3-feature, 27-rule model over [`PLANTED_UNIVERSES`] with seeded
/// consequents, used as ground truth for synthetic data.
pub fn planted_model(seed: u64) -> RuleBase {
    let parts = MODEL_FEATURES
        .iter()
        .zip(PLANTED_UNIVERSES)
        .map(|(f, u)| build_grid(*f, u, &GridSpec::default()).expect("planted grid is valid"))
        .collect();
    let rb = enumerate_rules(parts).expect("planted rules are valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(rb.n_rules() * 4);
    for _ in 0..rb.n_rules() {
        // Slopes scaled so each input moves a rule's output by at most 2.
        for (lo, hi) in PLANTED_UNIVERSES {
            theta.push(rng.random_range(-2.0..2.0) / (hi - lo));
        }
        theta.push(rng.random_range(-1.0..1.0));
    }
    unpack_consequents(&theta, &rb).expect("planted layout matches")
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub n: usize,
    pub skew: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Use this model as the truth instead of the built-in one.
    pub model: Option<PathBuf>,
}

/// Generates a CSV dataset in raw units. Returns the data and the truth as
/// a model file whose predictions reproduce the noise-free target.
pub fn cmd_synth(opts: &SynthOptions) -> Result<(Dataset, ModelFile), CliError> {
    let spec = |target: &str| SyntheticSpec {
        n: opts.n,
        skew: opts.skew,
        noise_std: opts.noise_std,
        seed: opts.seed,
        target_name: target.to_string(),
    };
    match &opts.model {
        None => {
            let truth = planted_model(opts.seed);
            let data = generate_synthetic(&truth, &spec(MODEL_TARGET)).stage(Stage::Load)?;
            let mut columns: Vec<String> = MODEL_FEATURES.iter().map(|s| s.to_string()).collect();
            columns.push(MODEL_TARGET.to_string());
            let model = TSModel::new(truth, NormStats::identity(columns), ModelMetadata::default())
                .stage(Stage::Estimate)?;
            let file = ModelFile::new(
                model,
                Provenance {
                    tool_version: env!("CARGO_PKG_VERSION").to_string(),
                    config_hash: String::new(),
                    seed: opts.seed,
                    initial_rules: 27,
                    train_rows: 0,
                    test_rows: 0,
                },
            );
            Ok((data, file))
        }
        Some(path) => {
            let file = ModelFile::load(path)?;
            let model = &file.model;
            // Sample in model space, then map every column back to raw units.
            let z = generate_synthetic(&model.rule_base, &spec(model.target_name())).stage(Stage::Load)?;
            let stats = &model.norm_stats;
            let m = z.n_features();
            let x = DMatrix::from_fn(z.n_rows(), m, |i, j| stats.denormalize_value(j, z.inputs()[(i, j)]));
            let y: Vec<f64> = z.target().iter().map(|&v| stats.denormalize_target(v)).collect();
            let data = Dataset::new(
                z.feature_names().to_vec(),
                z.target_name(),
                x,
                nalgebra::DVector::from_vec(y),
            )
            .stage(Stage::Load)?;
            Ok((data, file.clone()))
        }
    }
}

/// Writes a synthetic dataset as CSV.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(data, &mut buf).stage(Stage::Write)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::config(Stage::Write, format!("bad output path {}", path.display())))?
        .to_string_lossy()
        .to_string();
    write_outputs(dir, &[(name, buf)])?;
    Ok(())
}

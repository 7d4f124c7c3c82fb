//! Pipeline configuration, read from a TOML file.
//!
//! Every field has a default, so a config naming only the input file runs
//! the standard protocol: 3 sets per feature with overlap 1, pruning at
//! 0.01 and a 100-point lambda search over [0.001, 10].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gridts::baseline::{GkConfig, SweepSpec};
use gridts::estimate::{LambdaGrid, Objective};
use gridts::features::{MODEL_FEATURES, MODEL_TARGET};
use gridts::partition::SetEdit;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    /// Arbitrary numeric columns named by `features` and `target`.
    Plain,
    /// Engineered membrane table; models DSmw, dP and V.
    #[default]
    Engineered,
    /// Raw membrane table, engineered on load.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub schema: SchemaKind,
    pub features: Option<Vec<String>>,
    pub target: Option<String>,
    /// Train one model per (membrane type, orientation) pair.
    pub by_config: bool,
    pub vant_hoff_feed: f64,
    pub vant_hoff_draw: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            schema: SchemaKind::default(),
            features: None,
            target: None,
            by_config: false,
            vant_hoff_feed: 2.0,
            vant_hoff_draw: 2.0,
        }
    }
}

impl DataConfig {
    pub fn feature_names(&self) -> Vec<String> {
        match &self.features {
            Some(f) => f.clone(),
            None => MODEL_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn target_name(&self) -> String {
        self.target.clone().unwrap_or_else(|| MODEL_TARGET.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    /// Share of the training rows held out to choose lambda.
    pub validation_fraction: f64,
    /// Choose lambda on the test rows instead of an inner hold-out.
    pub tune_on_test: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            validation_fraction: 0.2,
            tune_on_test: false,
        }
    }
}

/// Per-feature grid settings. Universe bounds and edits are in raw units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureGrid {
    pub n_sets: Option<usize>,
    pub overlap: Option<f64>,
    pub labels: Option<Vec<String>>,
    pub universe: Option<(f64, f64)>,
    pub edits: Vec<SetEdit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_sets: usize,
    pub overlap: f64,
    pub features: BTreeMap<String, FeatureGrid>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_sets: 3,
            overlap: 1.0,
            features: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruningConfig {
    pub threshold: f64,
}

impl Default for PruningConfig {
    fn default() -> Self {
        Self { threshold: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeSection {
    /// Skips the search and uses this value.
    pub lambda: Option<f64>,
    pub grid: LambdaGrid,
    pub objective: Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub n_clusters: usize,
    pub fuzzifier: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub merge_threshold: f64,
    /// Fixed lambda for the clustered model; searched like the grid model when absent.
    pub lambda: Option<f64>,
    pub run_sweep: bool,
    pub sweep: SweepSpec,
    /// Lambda used for every run of the sweep.
    pub sweep_lambda: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let gk = GkConfig::default();
        Self {
            n_clusters: gk.n_clusters,
            fuzzifier: gk.fuzzifier,
            tolerance: gk.tolerance,
            max_iterations: gk.max_iterations,
            merge_threshold: 0.65,
            lambda: None,
            run_sweep: false,
            sweep: SweepSpec::default(),
            sweep_lambda: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn gk(&self, seed: u64) -> GkConfig {
        GkConfig {
            n_clusters: self.n_clusters,
            fuzzifier: self.fuzzifier,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub grid: GridConfig,
    pub pruning: PruningConfig,
    pub ridge: RidgeSection,
    pub baseline: BaselineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            grid: GridConfig::default(),
            pruning: PruningConfig::default(),
            ridge: RidgeSection::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::config(Stage::Config, msg)
}

impl PipelineConfig {
    /// Reads and validates a config. Relative data and output paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.data.path.is_relative() {
            cfg.data.path = base.join(&cfg.data.path);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Columns available in the chosen schema, target excluded.
    fn schema_columns(&self) -> Option<Vec<&'static str>> {
        match self.data.schema {
            SchemaKind::Plain => None,
            // Raw files are engineered before modelling.
            SchemaKind::Engineered | SchemaKind::Raw => Some(MODEL_FEATURES.to_vec()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let features = self.data.feature_names();
        let target = self.data.target_name();
        if self.data.schema == SchemaKind::Plain && self.data.features.is_none() {
            return Err(config_err("the plain schema needs `data.features`"));
        }
        if features.is_empty() {
            return Err(config_err("no features configured"));
        }
        if let Some(cols) = self.schema_columns() {
            for f in &features {
                if !cols.contains(&f.as_str()) {
                    return Err(config_err(format!(
                        "unknown feature `{f}` for the {:?} schema",
                        self.data.schema
                    )));
                }
            }
            if target != MODEL_TARGET {
                return Err(config_err(format!("unknown target `{target}`; this schema predicts {MODEL_TARGET}")));
            }
        }
        if features.contains(&target) {
            return Err(config_err(format!("`{target}` is both a feature and the target")));
        }
        for name in self.grid.features.keys() {
            if !features.contains(name) {
                return Err(config_err(format!("grid settings for unknown feature `{name}`")));
            }
        }
        if self.data.by_config && self.data.schema == SchemaKind::Plain {
            return Err(config_err("`data.by_config` needs the raw or engineered schema"));
        }
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(config_err("split.train_fraction must lie in (0, 1)"));
        }
        if !(s.validation_fraction > 0.0 && s.validation_fraction < 1.0) {
            return Err(config_err("split.validation_fraction must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.pruning.threshold) {
            return Err(config_err("pruning.threshold must lie in [0, 1)"));
        }
        if let Some(l) = self.ridge.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(config_err("ridge.lambda must be finite and >= 0"));
            }
        }
        self.ridge
            .grid
            .values()
            .map_err(|e| config_err(format!("ridge.grid: {e}")))?;
        for (name, fg) in self.grid_specs_raw() {
            if fg.n_sets < 2 {
                return Err(config_err(format!("feature `{name}` needs at least 2 sets")));
            }
            if !(fg.overlap > 0.0 && fg.overlap.is_finite()) {
                return Err(config_err(format!("feature `{name}` overlap must be positive")));
            }
            if let Some(l) = &fg.labels {
                if l.len() != fg.n_sets {
                    return Err(config_err(format!("feature `{name}` has {} labels for {} sets", l.len(), fg.n_sets)));
                }
            }
            if let Some((lo, hi)) = fg.universe {
                if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                    return Err(config_err(format!("feature `{name}` universe must satisfy min < max")));
                }
            }
            for e in &fg.edits {
                if e.index >= fg.n_sets {
                    return Err(config_err(format!("feature `{name}` edit targets set {} of {}", e.index, fg.n_sets)));
                }
            }
        }
        let b = &self.baseline;
        if b.n_clusters < 2 {
            return Err(config_err("baseline.n_clusters must be at least 2"));
        }
        if !(b.fuzzifier > 1.0) {
            return Err(config_err("baseline.fuzzifier must exceed 1"));
        }
        if !(b.merge_threshold > 0.0 && b.merge_threshold <= 1.0) {
            return Err(config_err("baseline.merge_threshold must lie in (0, 1]"));
        }
        if b.run_sweep {
            b.sweep
                .thresholds()
                .map_err(|e| config_err(format!("baseline.sweep: {e}")))?;
        }
        Ok(())
    }

    /// Effective grid settings per feature, in feature order.
    pub fn grid_specs_raw(&self) -> Vec<(String, ResolvedGrid)> {
        self.data
            .feature_names()
            .into_iter()
            .map(|name| {
                let fg = self.grid.features.get(&name).cloned().unwrap_or_default();
                let resolved = ResolvedGrid {
                    n_sets: fg.n_sets.unwrap_or(self.grid.n_sets),
                    overlap: fg.overlap.unwrap_or(self.grid.overlap),
                    labels: fg.labels,
                    universe: fg.universe,
                    edits: fg.edits,
                };
                (name, resolved)
            })
            .collect()
    }

    /// SHA-256 of the config's canonical JSON form. The output directory is
    /// left out since it does not affect the model.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&cfg).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedGrid {
    pub n_sets: usize,
    pub overlap: f64,
    pub labels: Option<Vec<String>>,
    pub universe: Option<(f64, f64)>,
    pub edits: Vec<SetEdit>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_config_uses_defaults() {
        let cfg = PipelineConfig::from_toml("[data]\npath = \"x.csv\"\n").unwrap();
        assert_eq!(cfg.pruning.threshold, 0.01);
        assert_eq!(cfg.ridge.grid, LambdaGrid::default());
        assert_eq!(cfg.grid.n_sets, 3);
        assert_eq!(cfg.grid.overlap, 1.0);
        assert_eq!(cfg.baseline.n_clusters, 27);
        assert_eq!(cfg.data.feature_names(), vec!["DSmw", "dP", "V"]);
    }

    #[test]
    fn unknown_feature_is_rejected() {
        let err = PipelineConfig::from_toml("[data]\npath = \"x.csv\"\nfeatures = [\"DSmw\", \"Temp\"]\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("Temp"));
        let err = PipelineConfig::from_toml("[data]\npath = \"x.csv\"\n[grid.features.Q]\nn_sets = 2\n").unwrap_err();
        assert!(err.to_string().contains("`Q`"));
    }

    #[test]
    fn per_feature_overrides() {
        let cfg = PipelineConfig::from_toml(
            "[data]\npath = \"x.csv\"\n[grid.features.dP]\nn_sets = 4\nuniverse = [0.0, 20.0]\nedits = [{ index = 1, mu = 5.0 }]\n",
        )
        .unwrap();
        let specs = cfg.grid_specs_raw();
        assert_eq!(specs[1].0, "dP");
        assert_eq!(specs[1].1.n_sets, 4);
        assert_eq!(specs[0].1.n_sets, 3);
        assert_eq!(specs[1].1.edits[0].mu, Some(5.0));
    }

    #[test]
    fn hash_is_stable() {
        let a = PipelineConfig::from_toml("seed = 1\n[data]\npath = \"x.csv\"\n").unwrap();
        let b = PipelineConfig::from_toml("[data]\npath = \"x.csv\"\n").unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(a.hash(), b.hash());
    }
}

//! Datasets, CSV ingestion, z-score normalization, seeded splitting and
//! synthetic data generation from a planted rule base.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::RuleBase;
use crate::error::{Error, Result};

/// Expected column layout of a tabular input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub features: Vec<String>,
    pub target: String,
}

impl Schema {
    pub fn new<S: Into<String>>(features: impl IntoIterator<Item = S>, target: impl Into<String>) -> Self {
        Self {
            features: features.into_iter().map(Into::into).collect(),
            target: target.into(),
        }
    }
}

/// Named feature columns plus one target column. Rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    target_name: String,
    features: DMatrix<f64>,
    target: DVector<f64>,
    units: Vec<Option<String>>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        features: DMatrix<f64>,
        target: DVector<f64>,
    ) -> Result<Self> {
        let target_name = target_name.into();
        if features.nrows() == 0 || target.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != target.len() {
            return Err(Error::LengthMismatch {
                left: features.nrows(),
                right: target.len(),
            });
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Schema(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for name in feature_names.iter().chain(std::iter::once(&target_name)) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{name}`")));
            }
        }
        let units = vec![None; feature_names.len() + 1];
        Ok(Self {
            feature_names,
            target_name,
            features,
            target,
            units,
        })
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        rows: &[Vec<f64>],
        target: Vec<f64>,
    ) -> Result<Self> {
        let m = feature_names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: m,
            });
        }
        let features = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(feature_names, target_name, features, DVector::from_vec(target))
    }

    /// Attaches unit strings, one per feature column followed by the target.
    pub fn with_units(mut self, units: Vec<Option<String>>) -> Result<Self> {
        if units.len() != self.feature_names.len() + 1 {
            return Err(Error::LengthMismatch {
                left: units.len(),
                right: self.feature_names.len() + 1,
            });
        }
        self.units = units;
        Ok(self)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn units(&self) -> &[Option<String>] {
        &self.units
    }

    /// All column names: features in order, then the target.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = self.feature_names.clone();
        names.push(self.target_name.clone());
        names
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        self.target.as_slice()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.features.column(j).iter().copied().collect()
    }

    /// Per-feature (min, max) over all rows.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.n_features())
            .map(|j| {
                let col = self.features.column(j);
                (col.min(), col.max())
            })
            .collect()
    }

    /// Inputs joined with the target as the last column.
    pub fn joined(&self) -> DMatrix<f64> {
        let (n, m) = self.features.shape();
        DMatrix::from_fn(n, m + 1, |i, j| if j < m { self.features[(i, j)] } else { self.target[i] })
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let m = self.n_features();
        let features = DMatrix::from_fn(indices.len(), m, |i, j| self.features[(indices[i], j)]);
        let target = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.target[i]));
        Ok(Self {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            features,
            target,
            units: self.units.clone(),
        })
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

/// Reads the named columns of a CSV file, in the requested order.
///
/// Extra columns are ignored. Row indices in errors are 1-based and count
/// data rows only (the header is row 0). An empty body yields no rows.
pub fn read_table(path: &Path, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_table_from(file, columns)
}

pub(crate) fn read_table_from<R: std::io::Read>(reader: R, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let positions = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.trim() == c)
                .ok_or_else(|| Error::MissingColumn { column: c.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = positions
            .iter()
            .zip(columns)
            .map(|(&p, name)| parse_cell(record.get(p).unwrap_or(""), i + 1, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a CSV file into a [`Dataset`] whose columns follow `schema` order.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_csv_from(file, schema)
}

pub fn load_csv_from<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut cols = schema.features.clone();
    cols.push(schema.target.clone());
    let rows = read_table_from(reader, &cols)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = schema.features.len();
    let target = rows.iter().map(|r| r[m]).collect();
    let inputs: Vec<Vec<f64>> = rows.into_iter().map(|mut r| {
        r.truncate(m);
        r
    }).collect();
    Dataset::from_rows(schema.features.clone(), schema.target.clone(), &inputs, target)
}

/// Writes the dataset as CSV: feature columns then the target.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(data.column_names())?;
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = data.features.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.target[i].to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Z-score parameters, one entry per feature column followed by the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Identity transform for the given columns (mean 0, std 1).
    pub fn identity(columns: Vec<String>) -> Self {
        let n = columns.len();
        Self {
            columns,
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn target_name(&self) -> &str {
        self.columns.last().map(String::as_str).unwrap_or("")
    }

    pub fn feature_names(&self) -> &[String] {
        &self.columns[..self.n_features()]
    }

    fn index_of(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::MissingColumn {
                column: column.to_string(),
            })
    }

    pub fn normalize_value(&self, column: usize, x: f64) -> f64 {
        (x - self.mean[column]) / self.std[column]
    }

    pub fn denormalize_value(&self, column: usize, z: f64) -> f64 {
        z * self.std[column] + self.mean[column]
    }

    /// Maps a raw input vector into normalized feature space.
    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.normalize_value(j, v)).collect()
    }

    pub fn normalize_target(&self, y: f64) -> f64 {
        self.normalize_value(self.n_features(), y)
    }

    pub fn denormalize_target(&self, z: f64) -> f64 {
        self.denormalize_value(self.n_features(), z)
    }

    pub fn target_std(&self) -> f64 {
        self.std[self.n_features()]
    }
}

/// Population mean and standard deviation of every column of `train`.
pub fn zscore_fit(train: &Dataset) -> Result<NormStats> {
    let n = train.n_rows() as f64;
    let mut mean = Vec::with_capacity(train.n_features() + 1);
    let mut std = Vec::with_capacity(train.n_features() + 1);
    let columns = train.column_names();
    let target_col = train.target.column(0);
    let cols = (0..train.n_features())
        .map(|j| train.features.column(j))
        .chain(std::iter::once(target_col));
    for (col, name) in cols.zip(&columns) {
        let mu = col.sum() / n;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mu.abs().max(1.0)) {
            return Err(Error::DegenerateScale { column: name.clone() });
        }
        mean.push(mu);
        std.push(sd);
    }
    Ok(NormStats { columns, mean, std })
}

fn check_columns(data: &Dataset, stats: &NormStats) -> Result<()> {
    let names = data.column_names();
    if names != stats.columns {
        return Err(Error::Schema(format!(
            "normalization columns {:?} do not match dataset columns {:?}",
            stats.columns, names
        )));
    }
    Ok(())
}

/// Applies `(x - mean) / std` to every column, the target included.
pub fn zscore_apply(data: &Dataset, stats: &NormStats) -> Result<Dataset> {
    check_columns(data, stats)?;
    let m = data.n_features();
    let features = DMatrix::from_fn(data.n_rows(), m, |i, j| stats.normalize_value(j, data.features[(i, j)]));
    let target = data.target.map(|y| stats.normalize_target(y));
    Ok(Dataset {
        features,
        target,
        ..data.clone()
    })
}

/// Inverse of [`zscore_apply`] for one named column.
pub fn zscore_invert(values: &[f64], stats: &NormStats, column: &str) -> Result<Vec<f64>> {
    let j = stats.index_of(column)?;
    Ok(values.iter().map(|&z| stats.denormalize_value(j, z)).collect())
}

/// Train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

/// Seeded shuffle of `0..n` into sorted (train, test) index lists.
///
/// The train side gets `round(fraction * n)` rows, clamped so neither side
/// is empty.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction {} is not strictly between 0 and 1",
            spec.train_fraction
        )));
    }
    if n < 2 {
        return Err(Error::Split(format!("cannot split {n} row(s) into two non-empty sets")));
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.n_rows(), spec)?;
    Ok((data.select_rows(&train)?, data.select_rows(&test)?))
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Rate of the truncated exponential on the unit interval; 0 is uniform.
    pub skew: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub target_name: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 500,
            skew: 0.0,
            noise_std: 0.0,
            seed: 0,
            target_name: "y".to_string(),
        }
    }
}

/// Maps a uniform draw onto [0, 1] with density proportional to exp(-skew * t).
pub(crate) fn truncated_exponential(u: f64, skew: f64) -> f64 {
    if skew < 1e-9 {
        return u;
    }
    (-(u * (-skew).exp_m1()).ln_1p() / skew).clamp(0.0, 1.0)
}

/// Samples inputs over each partition's universe and labels them with the
/// planted rule base, plus Gaussian noise. The rule base is evaluated in the
/// coordinates its partitions are expressed in.
pub fn generate_synthetic(truth: &RuleBase, spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(spec.skew >= 0.0 && spec.skew.is_finite()) {
        return Err(Error::InvalidArgument(format!("skew must be a finite value >= 0, got {}", spec.skew)));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise_std must be >= 0, got {}", spec.noise_std)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let partitions = truth.partitions();
    let m = partitions.len();
    let mut rows = Vec::with_capacity(spec.n);
    let mut target = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x: Vec<f64> = partitions
            .iter()
            .map(|p| {
                let t = truncated_exponential(rng.random::<f64>(), spec.skew);
                p.universe_min + t * (p.universe_max - p.universe_min)
            })
            .collect();
        let mut y = truth.evaluate(&x);
        if spec.noise_std > 0.0 {
            y += noise.sample(&mut rng);
        }
        rows.push(x);
        target.push(y);
    }
    debug_assert!(rows.iter().all(|r| r.len() == m));
    let names = partitions.iter().map(|p| p.feature.clone()).collect();
    Dataset::from_rows(names, spec.target_name.clone(), &rows, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_dataset(text: &str, schema: &Schema) -> Result<Dataset> {
        load_csv_from(text.as_bytes(), schema)
    }

    fn engineered_schema() -> Schema {
        Schema::new(["DSmw", "dP", "V"], "Fx")
    }

    #[test]
    fn loads_and_reorders_columns() {
        let text = "Fx,V,DSmw,dP\n20,30,79,295\n18,30,79,161\n11,30,79,16\n3,45,58,0\n18,45,58,2\n";
        let ds = csv_dataset(text, &engineered_schema()).unwrap();
        assert_eq!(ds.n_rows(), 5);
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.row(0), vec![79.0, 295.0, 30.0]);
        assert_eq!(ds.target()[3], 3.0);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "DSmw,dP,Fx\n79,295,20\n";
        match csv_dataset(text, &engineered_schema()) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "V"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let text = "DSmw,dP,V,Fx\n79,295,30,20\n79,abc,30,20\n";
        match csv_dataset(text, &engineered_schema()) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "dP");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            csv_dataset("DSmw,dP,V,Fx\n1,NaN,2,3\n", &engineered_schema()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(csv_dataset("", &engineered_schema()), Err(Error::EmptyDataset)));
        assert!(matches!(
            csv_dataset("DSmw,dP,V,Fx\n", &engineered_schema()),
            Err(Error::EmptyDataset)
        ));
    }

    fn single_column(values: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let target = (0..values.len()).map(|i| i as f64).collect();
        Dataset::from_rows(vec!["a".into()], "y", &rows, target).unwrap()
    }

    #[test]
    fn zscore_population_std() {
        let stats = zscore_fit(&single_column(&[1.0, 2.0, 3.0])).unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-15);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zscore_rejects_constant_column() {
        match zscore_fit(&single_column(&[5.0, 5.0, 5.0])) {
            Err(Error::DegenerateScale { column }) => assert_eq!(column, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zscore_is_idempotent_on_standardized_data() {
        let ds = single_column(&[-1.3, 0.2, 4.0, 2.5, -0.7]);
        let once = zscore_apply(&ds, &zscore_fit(&ds).unwrap()).unwrap();
        let again = zscore_fit(&once).unwrap();
        for j in 0..2 {
            assert!(again.mean[j].abs() < 1e-12);
            assert!((again.std[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_arithmetic_and_mismatch() {
        let stats = NormStats {
            columns: vec!["a".into(), "y".into()],
            mean: vec![10.0, 0.0],
            std: vec![2.0, 1.0],
        };
        let ds = single_column(&[14.0]);
        let z = zscore_apply(&ds, &stats).unwrap();
        assert_eq!(z.row(0), vec![2.0]);
        assert_eq!(zscore_invert(&[2.0], &stats, "a").unwrap(), vec![14.0]);

        let other = NormStats::identity(vec!["b".into(), "y".into()]);
        assert!(matches!(zscore_apply(&ds, &other), Err(Error::Schema(_))));
        assert!(matches!(zscore_invert(&[1.0], &other, "zz"), Err(Error::MissingColumn { .. })));
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 42,
        };
        let (tr, te) = split_indices(10, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(tr.iter().all(|i| !te.contains(i)));
        assert_eq!(split_indices(10, &spec).unwrap(), (tr, te));
    }

    #[test]
    fn split_boundaries() {
        // Every fraction on two rows must still leave one row per side.
        for f in [0.001, 0.25, 0.5, 0.75, 0.999] {
            let (tr, te) = split_indices(2, &SplitSpec { train_fraction: f, seed: 1 }).unwrap();
            assert_eq!((tr.len(), te.len()), (1, 1), "fraction {f}");
        }
        assert!(split_indices(1, &SplitSpec::default()).is_err());
        assert!(split_indices(10, &SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
        assert!(split_indices(10, &SplitSpec { train_fraction: 0.0, seed: 0 }).is_err());
    }

    #[test]
    fn truncated_exponential_limits() {
        assert_eq!(truncated_exponential(0.3, 0.0), 0.3);
        assert!(truncated_exponential(0.0, 3.0).abs() < 1e-15);
        assert!((truncated_exponential(1.0, 3.0) - 1.0).abs() < 1e-12);
        // Median of the skewed law sits below the uniform median.
        assert!(truncated_exponential(0.5, 3.0) < 0.5);
    }

    #[test]
    fn write_then_load_round_trips() {
        let ds = single_column(&[0.1, 1.0 / 3.0, 7.25]);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = load_csv_from(buf.as_slice(), &Schema::new(["a"], "y")).unwrap();
        assert_eq!(back, ds);
    }
}

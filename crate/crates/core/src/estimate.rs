//! Global estimation of all rule consequents as one ridge least-squares
//! problem, and the regularization grid search around it.
//!
//! Row `i` of the design matrix holds, for every rule `r`, the block
//! `nb_r(x_i) * [x_i1, ..., x_im, 1]` where `nb_r` is the rule's normalized
//! firing strength. Stacking `theta = [w_1, b_1, w_2, b_2, ...]` gives
//! `Phi * theta` equal to the model output on every row.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::RuleBase;
use crate::error::{Error, Result};
use crate::metrics;

/// Regression matrix of a rule base over a set of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub n_rules: usize,
    pub n_features: usize,
}

impl DesignMatrix {
    pub fn block_width(&self) -> usize {
        self.n_features + 1
    }

    pub fn bias_column(&self, rule: usize) -> usize {
        rule * self.block_width() + self.n_features
    }
}

pub fn build_design_matrix(rule_base: &RuleBase, inputs: &DMatrix<f64>) -> Result<DesignMatrix> {
    let m = rule_base.n_features();
    if inputs.ncols() != m {
        return Err(Error::LengthMismatch {
            left: inputs.ncols(),
            right: m,
        });
    }
    let n_rules = rule_base.n_rules();
    let width = m + 1;
    let mut values = DMatrix::zeros(inputs.nrows(), n_rules * width);
    let mut x = vec![0.0; m];
    for i in 0..inputs.nrows() {
        for (j, v) in x.iter_mut().enumerate() {
            *v = inputs[(i, j)];
        }
        for (r, nb) in rule_base.normalized_strengths(&x).into_iter().enumerate() {
            let base = r * width;
            for j in 0..m {
                values[(i, base + j)] = nb * x[j];
            }
            values[(i, base + m)] = nb;
        }
    }
    Ok(DesignMatrix {
        values,
        n_rules,
        n_features: m,
    })
}

/// Minimizes `|Phi theta - y|^2 + lambda |theta|^2` through a QR
/// factorization of `[Phi; sqrt(lambda) I]` against `[y; 0]`.
pub fn ridge_solve(phi: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let (n, p) = phi.shape();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != n {
        return Err(Error::LengthMismatch { left: y.len(), right: n });
    }
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let extra = if lambda > 0.0 { p } else { 0 };
    if n + extra < p {
        return Err(Error::RankDeficient { rank: n, cols: p });
    }
    let root = lambda.sqrt();
    let mut stacked = DMatrix::zeros(n + extra, p);
    stacked.rows_mut(0, n).copy_from(phi);
    for j in 0..extra {
        stacked[(n + j, j)] = root;
    }
    let mut rhs = DVector::zeros(n + extra);
    rhs.rows_mut(0, n).copy_from_slice(y);

    let qr = stacked.qr();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    let tol = diag_max * f64::EPSILON * (n + extra).max(p) as f64;
    let rank = r.diagonal().iter().filter(|d| d.abs() > tol).count();
    if rank < p || diag_max == 0.0 {
        return Err(Error::RankDeficient { rank, cols: p });
    }
    let head = rhs.rows(0, p).into_owned();
    r.solve_upper_triangular(&head)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

/// Flattens consequents rule by rule: weights then bias.
pub fn pack_consequents(rule_base: &RuleBase) -> Vec<f64> {
    rule_base
        .rules()
        .iter()
        .flat_map(|r| r.weights.iter().copied().chain(std::iter::once(r.bias)))
        .collect()
}

/// Writes a parameter vector laid out as in [`build_design_matrix`] back
/// into the rules.
pub fn unpack_consequents(theta: &[f64], rule_base: &RuleBase) -> Result<RuleBase> {
    let width = rule_base.n_features() + 1;
    let expected = rule_base.n_rules() * width;
    if theta.len() != expected {
        return Err(Error::Layout {
            expected,
            actual: theta.len(),
        });
    }
    let mut out = rule_base.clone();
    for (rule, block) in out.rules_mut().iter_mut().zip(theta.chunks_exact(width)) {
        rule.weights.copy_from_slice(&block[..width - 1]);
        rule.bias = block[width - 1];
    }
    Ok(out)
}

/// Fits every consequent of `rule_base` on `data` at one `lambda`.
pub fn fit_consequents(rule_base: &RuleBase, data: &Dataset, lambda: f64) -> Result<RuleBase> {
    let phi = build_design_matrix(rule_base, data.inputs())?;
    let theta = ridge_solve(&phi.values, data.target(), lambda)?;
    unpack_consequents(theta.as_slice(), rule_base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Mae,
    Rmse,
}

impl Objective {
    pub fn evaluate(self, predictions: &[f64], targets: &[f64]) -> Result<f64> {
        match self {
            Objective::Mae => metrics::mae(predictions, targets),
            Objective::Rmse => metrics::rmse(predictions, targets),
        }
    }
}

/// Logarithmically spaced regularization values over `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 0.001,
            max: 10.0,
            count: 100,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("lambda grid needs at least one point".into()));
        }
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda grid bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        let last = (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| match i {
                0 => self.min,
                i if i == self.count - 1 => self.max,
                i => (lo + (hi - lo) * i as f64 / last).exp(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda_grid: LambdaGrid,
    pub objective: Objective,
}

/// One point of a regularization search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub train_error: Option<f64>,
    pub validation_error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub best_lambda: f64,
    pub best_error: f64,
    pub best_rule_base: RuleBase,
    pub trace: Vec<LambdaTrial>,
}

/// Fits consequents on `train` for every grid value and keeps the one with
/// the lowest `validation` objective. Ties go to the larger lambda. Failed
/// grid points are recorded in the trace.
pub fn lambda_search(
    rule_base: &RuleBase,
    train: &Dataset,
    validation: &Dataset,
    config: &RidgeConfig,
) -> Result<LambdaSearch> {
    let lambdas = config.lambda_grid.values()?;
    let phi_train = build_design_matrix(rule_base, train.inputs())?.values;
    let phi_val = build_design_matrix(rule_base, validation.inputs())?.values;
    let objective = config.objective;

    let fits: Vec<(LambdaTrial, Option<DVector<f64>>)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let fitted = ridge_solve(&phi_train, train.target(), lambda).and_then(|theta| {
                let train_pred = &phi_train * &theta;
                let val_pred = &phi_val * &theta;
                let te = objective.evaluate(train_pred.as_slice(), train.target())?;
                let ve = objective.evaluate(val_pred.as_slice(), validation.target())?;
                Ok((theta, te, ve))
            });
            match fitted {
                Ok((theta, te, ve)) => (
                    LambdaTrial {
                        lambda,
                        train_error: Some(te),
                        validation_error: Some(ve),
                        failure: None,
                    },
                    Some(theta),
                ),
                Err(e) => (
                    LambdaTrial {
                        lambda,
                        train_error: None,
                        validation_error: None,
                        failure: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, (trial, _)) in fits.iter().enumerate() {
        if let Some(ve) = trial.validation_error {
            if best.is_none_or(|(_, b)| ve <= b) {
                best = Some((i, ve));
            }
        }
    }
    let (best_idx, best_error) = best.ok_or_else(|| {
        Error::Numerical(format!(
            "every lambda failed; first failure: {}",
            fits[0].0.failure.as_deref().unwrap_or("unknown")
        ))
    })?;
    let theta = fits[best_idx].1.as_ref().expect("successful trial keeps its solution");
    let best_rule_base = unpack_consequents(theta.as_slice(), rule_base)?;
    let trace = fits.into_iter().map(|(t, _)| t).collect();
    Ok(LambdaSearch {
        best_lambda: lambdas[best_idx],
        best_error,
        best_rule_base,
        trace,
    })
}

/// `lambda,train_error,validation_error`; failed points leave errors blank.
pub fn write_trace_csv<W: Write>(trace: &[LambdaTrial], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["lambda", "train_error", "validation_error"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in trace {
        wtr.write_record([t.lambda.to_string(), cell(t.train_error), cell(t.validation_error)])?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{enumerate_rules, Rule};
    use crate::partition::{build_grid, FuzzyPartition, GridSpec};

    fn grid2(name: &str) -> FuzzyPartition {
        build_grid(
            name,
            (-1.0, 1.0),
            &GridSpec {
                n_sets: 2,
                ..GridSpec::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn single_rule_design_is_augmented_inputs() {
        let rb = RuleBase::new(vec![grid2("a"), grid2("b")], vec![Rule::with_zero_consequent(vec![0, 1])]).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.5, 3.0, 7.0, -1.0]);
        let phi = build_design_matrix(&rb, &x).unwrap();
        for i in 0..3 {
            assert!((phi.values[(i, 0)] - x[(i, 0)]).abs() < 1e-15);
            assert!((phi.values[(i, 1)] - x[(i, 1)]).abs() < 1e-15);
            assert!((phi.values[(i, 2)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_rule_row_matches_hand_expansion() {
        // Two rules on two features; expand the weighted-average output by hand.
        let rb = RuleBase::new(
            vec![grid2("a"), grid2("b")],
            vec![Rule::with_zero_consequent(vec![0, 0]), Rule::with_zero_consequent(vec![1, 1])],
        )
        .unwrap();
        let (x1, x2) = (0.3, -0.4);
        let sigma = 2.0 / 3.0;
        let g = |x: f64, mu: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp();
        let b1 = g(x1, -1.0) * g(x2, -1.0);
        let b2 = g(x1, 1.0) * g(x2, 1.0);
        let (n1, n2) = (b1 / (b1 + b2), b2 / (b1 + b2));
        let expected = [n1 * x1, n1 * x2, n1, n2 * x1, n2 * x2, n2];
        let phi = build_design_matrix(&rb, &DMatrix::from_row_slice(1, 2, &[x1, x2])).unwrap();
        for (k, e) in expected.iter().enumerate() {
            assert!((phi.values[(0, k)] - e).abs() < 1e-14, "column {k}");
        }
        assert!((phi.values[(0, phi.bias_column(0))] + phi.values[(0, phi.bias_column(1))] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_systems() {
        let phi = DMatrix::identity(4, 4);
        let y = [1.0, -2.0, 3.5, 0.25];
        let theta = ridge_solve(&phi, &y, 0.0).unwrap();
        for (t, v) in theta.iter().zip(y) {
            assert!((t - v).abs() < 1e-14);
        }
        let theta = ridge_solve(&phi, &y, 1.0).unwrap();
        for (t, v) in theta.iter().zip(y) {
            assert!((t - v / 2.0).abs() < 1e-14);
        }
        let theta = ridge_solve(&phi, &y, 1e8).unwrap();
        let bound = y.iter().map(|v| v * v).sum::<f64>().sqrt() / 1e8;
        assert!(theta.norm() <= bound);
    }

    #[test]
    fn rank_deficiency_needs_lambda() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(ridge_solve(&phi, &y, 0.0), Err(Error::RankDeficient { .. })));
        assert!(ridge_solve(&phi, &y, 0.1).is_ok());
        // Fewer rows than columns.
        let wide = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(ridge_solve(&wide, &[1.0], 0.0), Err(Error::RankDeficient { .. })));
        assert!(ridge_solve(&phi, &y, -1.0).is_err());
    }

    #[test]
    fn unpack_layout() {
        let rb = RuleBase::new(vec![grid2("a"), grid2("b")], vec![Rule::with_zero_consequent(vec![0, 0])]).unwrap();
        let out = unpack_consequents(&[2.0, -1.0, 0.5], &rb).unwrap();
        assert_eq!(out.rules()[0].weights, vec![2.0, -1.0]);
        assert_eq!(out.rules()[0].bias, 0.5);
        assert_eq!(pack_consequents(&out), vec![2.0, -1.0, 0.5]);
        match unpack_consequents(&[1.0, 2.0], &rb) {
            Err(Error::Layout { expected, actual }) => assert_eq!((expected, actual), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lambda_grid_spacing() {
        let v = LambdaGrid::default().values().unwrap();
        assert_eq!(v.len(), 100);
        assert_eq!((v[0], v[99]), (0.001, 10.0));
        let ratios: Vec<f64> = v.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-9));
        assert_eq!(LambdaGrid { min: 0.5, max: 2.0, count: 1 }.values().unwrap(), vec![0.5]);
        assert!(LambdaGrid { min: 0.0, max: 1.0, count: 3 }.values().is_err());
        assert!(LambdaGrid { min: 0.1, max: 1.0, count: 0 }.values().is_err());
    }

    #[test]
    fn single_point_search_equals_direct_fit() {
        let rb = enumerate_rules(vec![grid2("a")]).unwrap();
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![-1.0 + i as f64 * 0.1]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (3.0 * r[0]).sin()).collect();
        let ds = Dataset::from_rows(vec!["a".into()], "y", &rows, y).unwrap();
        let cfg = RidgeConfig {
            lambda_grid: LambdaGrid {
                min: 0.3,
                max: 0.3,
                count: 1,
            },
            objective: Objective::Mae,
        };
        let search = lambda_search(&rb, &ds, &ds, &cfg).unwrap();
        let direct = fit_consequents(&rb, &ds, 0.3).unwrap();
        assert_eq!(search.trace.len(), 1);
        assert_eq!(search.best_lambda, 0.3);
        assert_eq!(pack_consequents(&search.best_rule_base), pack_consequents(&direct));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = vec![
            LambdaTrial {
                lambda: 0.1,
                train_error: Some(0.5),
                validation_error: Some(0.75),
                failure: None,
            },
            LambdaTrial {
                lambda: 1.0,
                train_error: None,
                validation_error: None,
                failure: Some("x".into()),
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "lambda,train_error,validation_error\n0.1,0.5,0.75\n1,,\n"
        );
    }
}

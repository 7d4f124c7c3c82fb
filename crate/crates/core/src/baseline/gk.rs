//! Gustafson-Kessel fuzzy clustering.
//!
//! Alternating optimization of
//!
//! ```text
//! J = sum_k sum_i u_ki^m (x_k - v_i)' A_i (x_k - v_i),   det(A_i) = 1
//! ```
//!
//! where each cluster's norm matrix is `A_i = det(F_i)^(1/d) F_i^-1` for the
//! fuzzy covariance `F_i`. Every step minimizes `J` in one block of
//! variables, so the objective is non-increasing up to the diagonal loading
//! applied to near-singular covariances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GkConfig {
    pub n_clusters: usize,
    pub fuzzifier: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for GkConfig {
    fn default() -> Self {
        Self {
            n_clusters: 27,
            fuzzifier: 2.0,
            tolerance: 1e-5,
            max_iterations: 200,
            seed: 0,
        }
    }
}

/// Fuzzy partition matrix, samples by clusters; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    pub values: DMatrix<f64>,
}

impl MembershipMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.values.ncols()
    }

    /// Largest `|row sum - 1|`.
    pub fn max_row_deviation(&self) -> f64 {
        self.values
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the largest membership in every row.
    pub fn dominant(&self) -> Vec<usize> {
        self.values
            .row_iter()
            .map(|r| {
                (0..r.len())
                    .fold(0, |best, i| if r[i] > r[best] { i } else { best })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub objective: f64,
    pub max_change: f64,
    pub max_row_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct GkResult {
    pub centers: Vec<DVector<f64>>,
    /// Fuzzy covariances `F_i`, before volume scaling.
    pub covariances: Vec<DMatrix<f64>>,
    pub memberships: MembershipMatrix,
    pub history: Vec<IterationStats>,
    pub converged: bool,
    /// Number of covariance matrices that needed diagonal loading.
    pub regularized: usize,
}

impl GkResult {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    /// `F_i / det(F_i)^(1/d)`, the unit-determinant shape of cluster `i`.
    pub fn scaled_covariance(&self, i: usize) -> DMatrix<f64> {
        let f = &self.covariances[i];
        let d = f.nrows() as f64;
        f / f.determinant().powf(1.0 / d)
    }
}

struct Prototypes {
    centers: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    regularized: usize,
}

/// Centers and (loaded when singular) fuzzy covariances for memberships `u`.
fn prototypes(data: &DMatrix<f64>, u: &DMatrix<f64>, fuzzifier: f64, fallback_var: f64) -> Prototypes {
    let (n, d) = data.shape();
    let c = u.ncols();
    let mut centers = Vec::with_capacity(c);
    let mut covariances = Vec::with_capacity(c);
    let mut regularized = 0;
    for i in 0..c {
        let w: Vec<f64> = (0..n).map(|k| u[(k, i)].powf(fuzzifier)).collect();
        let total: f64 = w.iter().sum();
        let mut v = DVector::zeros(d);
        for k in 0..n {
            v.axpy(w[k] / total, &data.row(k).transpose(), 1.0);
        }
        let mut f = DMatrix::zeros(d, d);
        for k in 0..n {
            let diff = data.row(k).transpose() - &v;
            f.ger(w[k] / total, &diff, &diff, 1.0);
        }
        let avg_var = f.trace() / d as f64;
        let avg_var = if avg_var > 0.0 { avg_var } else { fallback_var };
        let mut loading = 1e-8 * avg_var;
        let mut loaded = false;
        while !(f.clone().cholesky().is_some() && f.determinant() > f64::MIN_POSITIVE) {
            for j in 0..d {
                f[(j, j)] += loading;
            }
            loading *= 10.0;
            loaded = true;
        }
        if loaded {
            regularized += 1;
        }
        centers.push(v);
        covariances.push(f);
    }
    Prototypes {
        centers,
        covariances,
        regularized,
    }
}

/// Squared adaptive distances, samples by clusters.
fn distances(data: &DMatrix<f64>, protos: &Prototypes) -> DMatrix<f64> {
    let (n, d) = data.shape();
    let c = protos.centers.len();
    let mut dist = DMatrix::zeros(n, c);
    for i in 0..c {
        let f = &protos.covariances[i];
        let chol = f.clone().cholesky().expect("covariance was loaded until positive definite");
        let scale = f.determinant().powf(1.0 / d as f64);
        let inv = chol.inverse();
        for k in 0..n {
            let diff = data.row(k).transpose() - &protos.centers[i];
            let q = (diff.transpose() * &inv * &diff)[(0, 0)];
            dist[(k, i)] = (scale * q).max(0.0);
        }
    }
    dist
}

/// Optimal memberships for fixed distances. A sample sitting exactly on one
/// or more prototypes splits its membership among them.
fn update_memberships(dist: &DMatrix<f64>, fuzzifier: f64) -> DMatrix<f64> {
    let (n, c) = dist.shape();
    let exponent = 1.0 / (fuzzifier - 1.0);
    let mut u = DMatrix::zeros(n, c);
    for k in 0..n {
        let row = dist.row(k);
        let zeros: Vec<usize> = (0..c).filter(|&i| row[i] <= f64::MIN_POSITIVE).collect();
        if !zeros.is_empty() {
            for &i in &zeros {
                u[(k, i)] = 1.0 / zeros.len() as f64;
            }
            continue;
        }
        // u_ki = 1 / sum_j (D_ki / D_kj)^(1/(m-1)), computed as normalized inverse powers.
        let dmin = row.min();
        let inv: Vec<f64> = (0..c).map(|i| (dmin / row[i]).powf(exponent)).collect();
        let total: f64 = inv.iter().sum();
        for i in 0..c {
            u[(k, i)] = inv[i] / total;
        }
    }
    u
}

fn objective(u: &DMatrix<f64>, dist: &DMatrix<f64>, fuzzifier: f64) -> f64 {
    u.iter().zip(dist.iter()).map(|(m, d)| m.powf(fuzzifier) * d).sum()
}

/// Clusters the rows of `data` (features and target side by side).
pub fn gk_cluster(data: &DMatrix<f64>, config: &GkConfig) -> Result<GkResult> {
    let (n, d) = data.shape();
    let c = config.n_clusters;
    if c < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 clusters, got {c}")));
    }
    if c > n {
        return Err(Error::InvalidArgument(format!("{c} clusters for {n} samples")));
    }
    if !(config.fuzzifier > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fuzzifier must exceed 1, got {}",
            config.fuzzifier
        )));
    }
    if d == 0 || (1..n).all(|k| data.row(k) == data.row(0)) {
        return Err(Error::InvalidArgument("data needs at least two distinct points".into()));
    }
    let fallback_var = {
        let mean = data.row_mean();
        let total: f64 = data.row_iter().map(|r| (r - &mean).norm_squared()).sum();
        (total / (n * d) as f64).max(f64::MIN_POSITIVE)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut u = DMatrix::from_fn(n, c, |_, _| rng.random::<f64>() + f64::EPSILON);
    for mut row in u.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }

    let mut history = Vec::new();
    let mut regularized = 0;
    let mut converged = false;
    for _ in 0..config.max_iterations {
        let protos = prototypes(data, &u, config.fuzzifier, fallback_var);
        regularized = regularized.max(protos.regularized);
        let dist = distances(data, &protos);
        let next = update_memberships(&dist, config.fuzzifier);
        let max_change = (&next - &u).amax();
        let memberships = MembershipMatrix { values: next };
        history.push(IterationStats {
            objective: objective(&memberships.values, &dist, config.fuzzifier),
            max_change,
            max_row_deviation: memberships.max_row_deviation(),
        });
        u = memberships.values;
        if max_change < config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "Gustafson-Kessel clustering did not converge in {} iterations",
            config.max_iterations
        );
    }
    if regularized > 0 {
        log::info!("{regularized} cluster covariance(s) needed diagonal loading");
    }
    let protos = prototypes(data, &u, config.fuzzifier, fallback_var);
    Ok(GkResult {
        centers: protos.centers,
        covariances: protos.covariances,
        memberships: MembershipMatrix { values: u },
        history,
        converged,
        regularized: regularized.max(protos.regularized),
    })
}

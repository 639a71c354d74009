//! Fuzzy c-means by alternating optimization of
//! `J = sum_k sum_l w_kl^m ||x_k - c_l||^2`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{ElementSpace, FeatureName, Standardizer};
use crate::scalar::Scalar;

pub const DEFAULT_CLUSTERS: usize = 6;
pub const DEFAULT_FUZZIFIER: f64 = 2.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_ITERATIONS: usize = 300;
pub const FUZZIFIER_RANGE: (f64, f64) = (1.5, 2.5);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FcmParams<T> {
    pub clusters: usize,
    pub fuzzifier: T,
    /// Stop once the largest membership change of an iteration falls below this.
    pub tolerance: T,
    pub max_iterations: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for FcmParams<T> {
    fn default() -> Self {
        FcmParams {
            clusters: DEFAULT_CLUSTERS,
            fuzzifier: T::lit(DEFAULT_FUZZIFIER),
            tolerance: T::lit(DEFAULT_TOLERANCE),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: 0,
        }
    }
}

impl<T: Scalar> FcmParams<T> {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = FUZZIFIER_RANGE;
        let m = self.fuzzifier.as_f64();
        if !(lo..=hi).contains(&m) {
            return Err(Error::Validation(format!("fuzzifier {m} outside [{lo}, {hi}]")));
        }
        if self.clusters == 0 {
            return Err(Error::Validation("need at least one cluster".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= T::zero() {
            return Err(Error::Validation("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// `K x c` membership weights; every row is a probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionMatrix<T>(Array2<T>);

impl<T: Scalar> PartitionMatrix<T> {
    /// Wraps a matrix after checking entries lie in [0, 1] and rows sum to 1
    /// within `1e-6`.
    pub fn new(weights: Array2<T>) -> Result<Self> {
        let tol = T::lit(1e-6);
        for (k, row) in weights.rows().into_iter().enumerate() {
            if row.iter().any(|&w| !(w >= T::zero() && w <= T::one())) {
                return Err(Error::Validation(format!("row {k}: weight outside [0, 1]")));
            }
            if (row.sum() - T::one()).abs() > tol {
                return Err(Error::Validation(format!("row {k}: weights do not sum to 1")));
            }
        }
        Ok(PartitionMatrix(weights))
    }

    pub fn weights(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<T> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn clusters(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, T> {
        self.0.row(k)
    }

    /// Cluster with the largest weight in row `k`; ties go to the lower id.
    pub fn hard_assignment(&self, k: usize) -> usize {
        argmax(self.0.row(k))
    }

    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.nrows()).map(|k| self.hard_assignment(k)).collect()
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &PartitionMatrix<T>) -> T {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn select_rows(&self, rows: &[usize]) -> PartitionMatrix<T> {
        PartitionMatrix(self.0.select(Axis(0), rows))
    }
}

pub(crate) fn argmax<T: Scalar>(row: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (l, &w) in row.iter().enumerate() {
        if w > row[best] {
            best = l;
        }
    }
    best
}

fn squared_distance<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Membership weights of every row against fixed centers.
///
/// `w_kl = 1 / sum_j (d_kl / d_kj)^(2/(m-1))`, evaluated as normalized
/// `(d_min / d_kl)^(2/(m-1))` to stay finite. A row that coincides with one
/// or more centers splits its full membership equally among them.
pub fn memberships<T: Scalar>(data: ArrayView2<'_, T>, centers: ArrayView2<'_, T>, fuzzifier: T) -> PartitionMatrix<T> {
    let c = centers.nrows();
    let exponent = T::one() / (fuzzifier - T::one());
    let mut w = Array2::zeros((data.nrows(), c));
    let mut d2 = vec![T::zero(); c];
    for (k, x) in data.rows().into_iter().enumerate() {
        for (l, center) in centers.rows().into_iter().enumerate() {
            d2[l] = squared_distance(x, center);
        }
        let zeros = d2.iter().filter(|&&d| d == T::zero()).count();
        if zeros > 0 {
            let share = T::one() / T::from_usize_lossy(zeros);
            for l in 0..c {
                w[[k, l]] = if d2[l] == T::zero() { share } else { T::zero() };
            }
            continue;
        }
        let dmin = d2.iter().copied().fold(T::infinity(), T::min);
        let mut total = T::zero();
        for l in 0..c {
            let v = (dmin / d2[l]).powf(exponent);
            w[[k, l]] = v;
            total += v;
        }
        for l in 0..c {
            w[[k, l]] /= total;
        }
    }
    PartitionMatrix(w)
}

/// Weighted means `c_l = sum_k w_kl^m x_k / sum_k w_kl^m`. A cluster with
/// no weight keeps its previous center.
pub fn update_centers<T: Scalar>(
    data: ArrayView2<'_, T>,
    partition: &PartitionMatrix<T>,
    fuzzifier: T,
    previous: Option<&Array2<T>>,
) -> Array2<T> {
    let (k_rows, e) = data.dim();
    let c = partition.clusters();
    let mut centers = Array2::zeros((c, e));
    for l in 0..c {
        let mut denom = T::zero();
        for k in 0..k_rows {
            let wm = partition.0[[k, l]].powf(fuzzifier);
            if wm == T::zero() {
                continue;
            }
            denom += wm;
            for j in 0..e {
                centers[[l, j]] += wm * data[[k, j]];
            }
        }
        if denom > T::zero() {
            for j in 0..e {
                centers[[l, j]] /= denom;
            }
        } else if let Some(prev) = previous {
            centers.row_mut(l).assign(&prev.row(l));
        }
    }
    centers
}

/// The fuzzy c-means objective for given memberships and centers.
pub fn objective<T: Scalar>(
    data: ArrayView2<'_, T>,
    centers: ArrayView2<'_, T>,
    partition: &PartitionMatrix<T>,
    fuzzifier: T,
) -> T {
    let mut j = T::zero();
    for (k, x) in data.rows().into_iter().enumerate() {
        for (l, center) in centers.rows().into_iter().enumerate() {
            j += partition.0[[k, l]].powf(fuzzifier) * squared_distance(x, center);
        }
    }
    j
}

/// Row-stochastic random partition drawn from `seed`.
pub fn random_partition<T: Scalar>(rows: usize, clusters: usize, seed: u64) -> PartitionMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::zeros((rows, clusters));
    for mut row in w.rows_mut() {
        let draws: Vec<f64> = (0..clusters).map(|_| rng.random_range(f64::EPSILON..1.0)).collect();
        let total: f64 = draws.iter().sum();
        for (slot, d) in row.iter_mut().zip(draws) {
            *slot = T::lit(d / total);
        }
    }
    PartitionMatrix(w)
}

/// Output of one clustering run.
#[derive(Clone, Debug)]
pub struct FcmRun<T> {
    pub centers: Array2<T>,
    pub partition: PartitionMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: T,
    /// Objective after each iteration, evaluated at that iteration's
    /// centers and updated memberships.
    pub objective_history: Vec<T>,
}

fn check_data<T: Scalar>(data: ArrayView2<'_, T>, clusters: usize) -> Result<()> {
    if data.ncols() == 0 {
        return Err(Error::InsufficientData("element space has no features".into()));
    }
    if data.nrows() < clusters {
        return Err(Error::InsufficientData(format!(
            "{} elements for {clusters} clusters",
            data.nrows()
        )));
    }
    for ((row, column), v) in data.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, column });
        }
    }
    Ok(())
}

/// Clusters `data` starting from a seeded random partition.
pub fn fit_data<T: Scalar>(data: ArrayView2<'_, T>, params: &FcmParams<T>) -> Result<FcmRun<T>> {
    params.validate()?;
    check_data(data, params.clusters)?;
    let init = random_partition(data.nrows(), params.clusters, params.seed);
    iterate(data, init, params)
}

/// Clusters `data` starting from a given partition.
pub fn fit_data_from<T: Scalar>(
    data: ArrayView2<'_, T>,
    initial: PartitionMatrix<T>,
    params: &FcmParams<T>,
) -> Result<FcmRun<T>> {
    params.validate()?;
    check_data(data, params.clusters)?;
    if initial.nrows() != data.nrows() || initial.clusters() != params.clusters {
        return Err(Error::Validation("initial partition has the wrong shape".into()));
    }
    iterate(data, initial, params)
}

fn iterate<T: Scalar>(
    data: ArrayView2<'_, T>,
    mut partition: PartitionMatrix<T>,
    params: &FcmParams<T>,
) -> Result<FcmRun<T>> {
    let m = params.fuzzifier;
    let mut centers: Option<Array2<T>> = None;
    let mut history = Vec::new();
    let mut last_change = T::infinity();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let next_centers = update_centers(data, &partition, m, centers.as_ref());
        let next = memberships(data, next_centers.view(), m);
        last_change = next.max_abs_diff(&partition);
        partition = next;
        history.push(objective(data, next_centers.view(), &partition, m));
        centers = Some(next_centers);
        if last_change < params.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "fuzzy c-means stopped at the iteration cap ({}) with change {:e}",
            params.max_iterations,
            last_change
        );
    }
    Ok(FcmRun {
        centers: centers.expect("at least one iteration"),
        partition,
        iterations,
        converged,
        last_change,
        objective_history: history,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub last_change: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

/// Fitted cluster centers together with everything needed to map new
/// element rows into the same standardized space.
#[derive(Clone, Debug, PartialEq)]
pub struct FcmModel<T> {
    pub centers: Array2<T>,
    pub fuzzifier: T,
    pub features: Vec<FeatureName>,
    pub standardizer: Standardizer<T>,
    pub summary: FitSummary,
}

impl<T: Scalar> FcmModel<T> {
    pub fn clusters(&self) -> usize {
        self.centers.nrows()
    }
}

pub fn fcm_fit<T: Scalar>(space: &ElementSpace<T>, params: &FcmParams<T>) -> Result<(FcmModel<T>, PartitionMatrix<T>)> {
    let run = fit_data(space.data.view(), params)?;
    let objective = run.objective_history.last().copied().unwrap_or_else(T::nan);
    let model = FcmModel {
        centers: run.centers,
        fuzzifier: params.fuzzifier,
        features: space.features.clone(),
        standardizer: space.standardizer.clone(),
        summary: FitSummary {
            iterations: run.iterations,
            converged: run.converged,
            objective: objective.as_f64(),
            last_change: run.last_change.as_f64(),
            tolerance: params.tolerance.as_f64(),
            max_iterations: params.max_iterations,
            seed: params.seed,
        },
    };
    Ok((model, run.partition))
}

pub fn fcm_predict_memberships<T: Scalar>(model: &FcmModel<T>, space: &ElementSpace<T>) -> Result<PartitionMatrix<T>> {
    if model.features != space.features || model.standardizer != space.standardizer {
        let names = |f: &[FeatureName]| f.iter().map(|x| x.name()).collect::<Vec<_>>().join(",");
        return Err(Error::FeatureMismatch {
            expected: names(&model.features),
            found: names(&space.features),
        });
    }
    Ok(memberships(space.data.view(), model.centers.view(), model.fuzzifier))
}

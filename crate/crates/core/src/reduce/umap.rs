//! UMAP: smooth-kNN membership calibration, fuzzy union graph, and
//! stochastic layout optimization with negative sampling.

use rand::Rng;

use super::{rng_from_seed, AffinityMatrix, ReduceError, ReducerMethod, ReducerSpec};
use crate::matrix::{DenseMatrix, DistanceMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    /// Initial coordinates are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for UmapParams {
    fn default() -> Self {
        Self {
            n_neighbors: 15,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 500,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            init_range: 10.0,
        }
    }
}

impl UmapParams {
    pub(super) fn validate(&self, n_rows: usize) -> Result<(), ReduceError> {
        if self.n_neighbors < 2 || self.n_neighbors >= n_rows {
            return Err(ReduceError::InvalidSpec(format!(
                "n_neighbors {} must lie in [2, {n_rows})",
                self.n_neighbors
            )));
        }
        if !(self.min_dist >= 0.0 && self.min_dist < self.spread) {
            return Err(ReduceError::InvalidSpec(
                "need 0 <= min_dist < spread".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(ReduceError::InvalidSpec("epochs must be positive".into()));
        }
        Ok(())
    }
}

const SMOOTH_K_TOL: f64 = 1e-5;
const SMOOTH_K_ACCEPT: f64 = 1e-3;
const BISECT_STEPS: usize = 64;
const MIN_SIGMA_SCALE: f64 = 1e-3;

/// Indices and distances of the `k` nearest other points of every row,
/// ascending, ties broken by index.
pub fn nearest_neighbors(distances: &DistanceMatrix, k: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let n = distances.len();
    let mut indices = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        let row = distances.row(i);
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        order.truncate(k);
        dists.push(order.iter().map(|&j| row[j]).collect());
        indices.push(order);
    }
    (indices, dists)
}

fn membership_sum(row: &[f64], rho: f64, sigma: f64) -> f64 {
    row.iter()
        .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
        .sum()
}

/// Per-row offset `rho` (nearest-neighbor distance) and bandwidth `sigma` so
/// that `Σ_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k)`.
///
/// `sigma` never drops below `1e-3 ×` the row's mean distance. Rows whose
/// memberships already exceed the target at that floor (ties at the nearest
/// distance) keep the floor.
pub fn smooth_knn_calibration(
    knn_distances: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>), ReduceError> {
    let mut rhos = Vec::with_capacity(knn_distances.len());
    let mut sigmas = Vec::with_capacity(knn_distances.len());
    for (i, row) in knn_distances.iter().enumerate() {
        let k = row.len();
        if k < 2 {
            return Err(ReduceError::InvalidSpec("smooth kNN needs k >= 2".into()));
        }
        let target = (k as f64).log2();
        let rho = row[0];
        let mean = row.iter().sum::<f64>() / k as f64;
        let floor = if mean > 0.0 {
            MIN_SIGMA_SCALE * mean
        } else {
            MIN_SIGMA_SCALE
        };

        if membership_sum(row, rho, floor) >= target {
            rhos.push(rho);
            sigmas.push(floor);
            continue;
        }
        let (mut lo, mut hi) = (floor, f64::INFINITY);
        let mut mid = mean.max(floor);
        let mut sum = membership_sum(row, rho, mid);
        for _ in 0..BISECT_STEPS {
            if (sum - target).abs() < SMOOTH_K_TOL {
                break;
            }
            if sum > target {
                hi = mid;
                mid = 0.5 * (lo + hi);
            } else {
                lo = mid;
                mid = if hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    mid * 2.0
                };
            }
            sum = membership_sum(row, rho, mid);
        }
        if !((sum - target).abs() < SMOOTH_K_ACCEPT) {
            return Err(ReduceError::CalibrationFailed(i));
        }
        rhos.push(rho);
        sigmas.push(mid);
    }
    Ok((rhos, sigmas))
}

/// Fuzzy union graph from a distance matrix: directed smooth-kNN memberships
/// `A`, combined as `A + Aᵀ − A∘Aᵀ`.
pub fn fuzzy_graph_from_distances(
    distances: &DistanceMatrix,
    n_neighbors: usize,
) -> Result<AffinityMatrix, ReduceError> {
    let n = distances.len();
    if n_neighbors < 2 || n_neighbors >= n {
        return Err(ReduceError::InvalidSpec(format!(
            "n_neighbors {n_neighbors} must lie in [2, {n})"
        )));
    }
    let (indices, dists) = nearest_neighbors(distances, n_neighbors);
    let (rhos, sigmas) = smooth_knn_calibration(&dists)?;
    let mut directed = vec![0.0; n * n];
    for i in 0..n {
        for (&j, &d) in indices[i].iter().zip(&dists[i]) {
            directed[i * n + j] = (-(d - rhos[i]).max(0.0) / sigmas[i]).exp();
        }
    }
    Ok(fuzzy_union(n, &directed))
}

pub(crate) fn fuzzy_union(n: usize, directed: &[f64]) -> AffinityMatrix {
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let a = directed[i * n + j];
            let b = directed[j * n + i];
            values[i * n + j] = a + b - a * b;
        }
    }
    AffinityMatrix::from_raw(n, values)
}

pub fn build_fuzzy_graph(
    data: &DenseMatrix,
    n_neighbors: usize,
) -> Result<AffinityMatrix, ReduceError> {
    fuzzy_graph_from_distances(&data.pairwise_distances(), n_neighbors)
}

/// Parameters `(a, b)` of the output kernel `1 / (1 + a d^{2b})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    pub rms: f64,
}

impl CurveFit {
    pub fn eval(&self, d: f64) -> f64 {
        1.0 / (1.0 + self.a * d.powf(2.0 * self.b))
    }
}

const CURVE_POINTS: usize = 300;
// The least-squares optimum itself sits near 0.016 (min_dist 0.1) to 0.024
// (min_dist 0); this only catches a diverged fit.
const CURVE_MAX_RMS: f64 = 0.05;

/// Least-squares fit of `1 / (1 + a d^{2b})` to the target curve that is 1 up
/// to `min_dist` and decays as `exp(-(d - min_dist) / spread)` beyond, sampled
/// on 300 points of `[0, 3·spread]`. Levenberg–Marquardt from `a = b = 1`.
pub fn fit_embedding_curve(min_dist: f64, spread: f64) -> Result<CurveFit, ReduceError> {
    if !(min_dist >= 0.0 && min_dist < spread) {
        return Err(ReduceError::InvalidSpec(
            "need 0 <= min_dist < spread".into(),
        ));
    }
    let xs: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| 3.0 * spread * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();

    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };

    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // normal equations J^T J and J^T r for the two parameters
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                // f(0) = 1 for every (a, b): no sensitivity
                continue;
            }
            let u = x.powf(2.0 * b);
            let f = 1.0 / (1.0 + a * u);
            let r = f - y;
            let da = -u * f * f;
            let db = -a * u * 2.0 * x.ln() * f * f;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 {
                sse(na, nb)
            } else {
                f64::INFINITY
            };
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                a = na;
                b = nb;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let rms = (cost / CURVE_POINTS as f64).sqrt();
    if !(rms < CURVE_MAX_RMS) {
        return Err(ReduceError::FitFailed(rms));
    }
    Ok(CurveFit { a, b, rms })
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

/// Stochastic gradient layout of a fuzzy graph.
fn optimize_layout(
    graph: &AffinityMatrix,
    dims: usize,
    params: &UmapParams,
    curve: CurveFit,
    seed: u64,
) -> Result<Vec<f64>, ReduceError> {
    let n = graph.len();
    let mut rng = rng_from_seed(seed);
    let mut y: Vec<f64> = (0..n * dims)
        .map(|_| rng.random_range(-params.init_range..params.init_range))
        .collect();

    let epochs = params.epochs;
    let max_weight = graph.values().iter().copied().fold(0.0, f64::max);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = graph.get(i, j);
            // edges too weak to be sampled even once are dropped
            if w > 0.0 && w >= max_weight / epochs as f64 {
                edges.push((i, j, w));
            }
        }
    }
    let epochs_per_sample: Vec<f64> = edges.iter().map(|&(_, _, w)| max_weight / w).collect();
    let neg_rate = params.negative_sample_rate.max(1) as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let (a, b) = (curve.a, curve.b);
    let mut alpha = params.learning_rate;
    let mut current = vec![0.0; dims];
    for epoch in 0..epochs {
        let t = epoch as f64;
        for (e, &(head, tail, _)) in edges.iter().enumerate() {
            if next_sample[e] > t {
                continue;
            }
            let sq = sq_dist(&y, head, tail, dims);
            let coeff = if sq > 0.0 {
                -2.0 * a * b * sq.powf(b - 1.0) / (a * sq.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..dims {
                let g = clip(coeff * (y[head * dims + d] - y[tail * dims + d]));
                y[head * dims + d] += g * alpha;
                y[tail * dims + d] -= g * alpha;
            }
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((t - next_negative[e]) / epochs_per_negative[e])
                .floor()
                .max(0.0) as usize;
            current.copy_from_slice(&y[head * dims..(head + 1) * dims]);
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == head {
                    continue;
                }
                let o = &y[other * dims..(other + 1) * dims];
                let sq: f64 = current.iter().zip(o).map(|(p, q)| (p - q) * (p - q)).sum();
                let coeff = if sq > 0.0 {
                    2.0 * b / ((0.001 + sq) * (a * sq.powf(b) + 1.0))
                } else {
                    0.0
                };
                for d in 0..dims {
                    let g = if coeff > 0.0 {
                        clip(coeff * (current[d] - o[d]))
                    } else {
                        4.0
                    };
                    current[d] += g * alpha;
                }
            }
            y[head * dims..(head + 1) * dims].copy_from_slice(&current);
            next_negative[e] += n_neg as f64 * epochs_per_negative[e];
        }
        alpha = params.learning_rate * (1.0 - (epoch + 1) as f64 / epochs as f64);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ReduceError::NonFiniteState);
        }
    }
    Ok(y)
}

fn sq_dist(y: &[f64], i: usize, j: usize, dims: usize) -> f64 {
    (0..dims)
        .map(|d| {
            let t = y[i * dims + d] - y[j * dims + d];
            t * t
        })
        .sum()
}

/// UMAP from a precomputed distance matrix.
pub fn umap_from_distances(
    distances: &DistanceMatrix,
    target_dims: usize,
    params: &UmapParams,
    seed: u64,
) -> Result<DenseMatrix, ReduceError> {
    params.validate(distances.len())?;
    let graph = fuzzy_graph_from_distances(distances, params.n_neighbors)?;
    let curve = fit_embedding_curve(params.min_dist, params.spread)?;
    let y = optimize_layout(&graph, target_dims, params, curve, seed)?;
    DenseMatrix::new(distances.len(), target_dims, y).map_err(|_| ReduceError::NonFiniteState)
}

pub fn umap_embed(data: &DenseMatrix, spec: &ReducerSpec) -> Result<DenseMatrix, ReduceError> {
    if spec.method != ReducerMethod::Umap {
        return Err(ReduceError::InvalidSpec("spec method is not UMAP".into()));
    }
    spec.validate(data.n_rows(), data.n_cols())?;
    umap_from_distances(
        &data.pairwise_distances(),
        spec.target_dims,
        &spec.umap,
        spec.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rows(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..5.0)).collect();
                r.sort_by(f64::total_cmp);
                r
            })
            .collect()
    }

    #[test]
    fn nearest_membership_is_one() {
        let rows = random_rows(10, 5, 3);
        let (rho, sigma) = smooth_knn_calibration(&rows).unwrap();
        for i in 0..10 {
            assert_eq!((-(rows[i][0] - rho[i]).max(0.0) / sigma[i]).exp(), 1.0);
        }
    }

    #[test]
    fn random_rows_sum_to_log2_k() {
        let rows = random_rows(10, 5, 8);
        let (rho, sigma) = smooth_knn_calibration(&rows).unwrap();
        for i in 0..10 {
            let direct: f64 = rows[i]
                .iter()
                .map(|d| (-(d - rho[i]).max(0.0) / sigma[i]).exp())
                .sum();
            assert!((direct - 5f64.log2()).abs() < 1e-3);
        }
    }

    #[test]
    fn equal_distances_keep_the_floor() {
        let rows = vec![vec![2.0; 4]];
        let (rho, sigma) = smooth_knn_calibration(&rows).unwrap();
        assert_eq!(rho[0], 2.0);
        assert_eq!(sigma[0], 1e-3 * 2.0);
        // every membership is exp(0) whatever sigma is
        let direct: f64 = rows[0]
            .iter()
            .map(|d| (-(d - rho[0]).max(0.0) / sigma[0]).exp())
            .sum();
        assert_eq!(direct, 4.0);
        let zeros = vec![vec![0.0; 3]];
        assert!(smooth_knn_calibration(&zeros).is_ok());
    }

    #[test]
    fn union_formula() {
        let g = fuzzy_union(2, &[0.0, 0.5, 0.0, 0.0]);
        assert_eq!(g.get(0, 1), 0.5);
        assert_eq!(g.get(1, 0), 0.5);
        let g = fuzzy_union(2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(g.get(0, 1), 1.0);
    }

    #[test]
    fn curve_fit_matches_reference_least_squares() {
        // reference optima from an independent Levenberg-Marquardt solver
        // (scipy.optimize.curve_fit) on the same 300-point grid
        for (min_dist, a, b, rms) in [
            (
                0.1,
                1.5769434602697652,
                0.8950608778515733,
                0.01619005024349704,
            ),
            (
                0.0,
                1.93280839734315,
                0.7904949732233831,
                0.024159539707626743,
            ),
            (
                0.5,
                0.5830300203414425,
                1.3341669924314914,
                0.020716423085911227,
            ),
        ] {
            let fit = fit_embedding_curve(min_dist, 1.0).unwrap();
            assert!((fit.a - a).abs() < 1e-6, "a = {}", fit.a);
            assert!((fit.b - b).abs() < 1e-6, "b = {}", fit.b);
            assert!((fit.rms - rms).abs() < 1e-9, "rms = {}", fit.rms);
            assert!((fit.eval(0.0) - 1.0).abs() < 1e-2);
        }
        assert!(matches!(
            fit_embedding_curve(1.0, 1.0),
            Err(ReduceError::InvalidSpec(_))
        ));
    }

    #[test]
    fn neighbor_count_must_be_below_n() {
        let data =
            DenseMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 0.0], [2.0, 2.0, 2.0]]).unwrap();
        let mut spec = ReducerSpec::new(ReducerMethod::Umap, 2, 1);
        spec.umap.n_neighbors = 3;
        assert!(matches!(
            umap_embed(&data, &spec),
            Err(ReduceError::InvalidSpec(_))
        ));
        assert!(matches!(
            build_fuzzy_graph(&data, 3),
            Err(ReduceError::InvalidSpec(_))
        ));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let mut rng = rng_from_seed(4);
        let v = (0..30 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = DenseMatrix::new(30, 4, v).unwrap();
        let mut spec = ReducerSpec::new(ReducerMethod::Umap, 2, 99);
        spec.umap.n_neighbors = 6;
        spec.umap.epochs = 120;
        let a = umap_embed(&data, &spec).unwrap();
        let b = umap_embed(&data, &spec).unwrap();
        let bits = |m: &DenseMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.values().iter().all(|v| v.is_finite()));
    }
}

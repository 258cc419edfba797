//! Exact t-SNE: perplexity-calibrated Gaussian input affinities, Student-t
//! output kernel, full O(n²) gradient with momentum and per-coordinate gains.

use rand_distr::{Distribution, StandardNormal};

use super::{rng_from_seed, AffinityMatrix, ReduceError, ReducerMethod, ReducerSpec};
use crate::matrix::{DenseMatrix, DistanceMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities; momentum switches at the same point.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Standard deviation of the Gaussian initial layout.
    pub init_scale: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_scale: 1e-4,
        }
    }
}

impl TsneParams {
    pub(super) fn validate(&self, n_rows: usize) -> Result<(), ReduceError> {
        if n_rows < 4 {
            return Err(ReduceError::InvalidSpec(
                "t-SNE needs at least 4 points".into(),
            ));
        }
        if !(self.perplexity >= 1.0 && self.perplexity < n_rows as f64) {
            return Err(ReduceError::InvalidSpec(format!(
                "perplexity {} must lie in [1, {n_rows})",
                self.perplexity
            )));
        }
        if self.iterations == 0 || !(self.learning_rate > 0.0) {
            return Err(ReduceError::InvalidSpec(
                "iterations and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// KL divergence checkpoints recorded during optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneTrace {
    /// KL with the true affinities at the first iteration after exaggeration ends.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
}

const PERPLEXITY_TOL: f64 = 1e-5;
const BRACKET_STEPS: usize = 64;
const BISECT_STEPS: usize = 200;

/// Conditional distribution of one row given squared distances to the other
/// points (self excluded). Returns the probabilities in input order.
fn conditional_row(sq: &[f64], perplexity: f64, row: usize) -> Result<Vec<f64>, ReduceError> {
    let m = sq.len();
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq.iter().map(|d| d - min).collect();
    let spread_max = shifted.iter().copied().fold(0.0, f64::max);
    if spread_max == 0.0 {
        // equidistant row: entropy does not depend on the bandwidth
        return Ok(vec![1.0 / m as f64; m]);
    }
    let target = perplexity.ln();

    // entropy in nats of exp(-beta * shifted), normalised
    let eval = |beta: f64, probs: &mut Vec<f64>| -> f64 {
        probs.clear();
        probs.extend(shifted.iter().map(|e| (-beta * e).exp()));
        let z: f64 = probs.iter().sum();
        let mut weighted = 0.0;
        for (p, e) in probs.iter_mut().zip(&shifted) {
            *p /= z;
            weighted += *p * e;
        }
        z.ln() + beta * weighted
    };

    let mut probs = Vec::with_capacity(m);
    let mean = shifted.iter().sum::<f64>() / m as f64;
    let mut lo = 0.0;
    let mut hi = 1.0 / mean;
    let mut h = eval(hi, &mut probs);
    if !h.is_finite() {
        return Err(ReduceError::CalibrationFailed(row));
    }
    let mut steps = 0;
    while h > target {
        if steps == BRACKET_STEPS {
            // Ties at the nearest distance cap how low the entropy can go;
            // keep the limiting distribution (uniform over the ties).
            return Ok(probs);
        }
        lo = hi;
        hi *= 2.0;
        h = eval(hi, &mut probs);
        steps += 1;
    }
    if (h.exp() - perplexity).abs() < PERPLEXITY_TOL {
        return Ok(probs);
    }
    for _ in 0..BISECT_STEPS {
        let mid = 0.5 * (lo + hi);
        h = eval(mid, &mut probs);
        if !h.is_finite() {
            return Err(ReduceError::CalibrationFailed(row));
        }
        if (h.exp() - perplexity).abs() < PERPLEXITY_TOL {
            return Ok(probs);
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(probs)
}

/// Per-row conditionals `p(j|i)` (row-major, zero diagonal).
pub fn conditional_affinities(
    distances: &DistanceMatrix,
    perplexity: f64,
) -> Result<Vec<f64>, ReduceError> {
    let n = distances.len();
    let mut cond = vec![0.0; n * n];
    let mut sq = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        sq.clear();
        sq.extend(
            distances
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, d)| d * d),
        );
        let probs = conditional_row(&sq, perplexity, i)?;
        let mut it = probs.into_iter();
        for j in (0..n).filter(|&j| j != i) {
            cond[i * n + j] = it.next().expect("one probability per neighbor");
        }
    }
    Ok(cond)
}

/// Joint t-SNE affinities: each row's Gaussian bandwidth is searched so the
/// row perplexity matches `perplexity`, then `p_ij = (p(j|i) + p(i|j)) / 2n`.
pub fn calibrate_affinities(
    distances: &DistanceMatrix,
    perplexity: f64,
) -> Result<AffinityMatrix, ReduceError> {
    let n = distances.len();
    if n < 2 || !(perplexity >= 1.0 && perplexity <= (n - 1) as f64) {
        return Err(ReduceError::InvalidSpec(format!(
            "perplexity {perplexity} must lie in [1, {}]",
            n.saturating_sub(1)
        )));
    }
    let cond = conditional_affinities(distances, perplexity)?;
    let denom = 2.0 * n as f64;
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    Ok(AffinityMatrix::from_raw(n, joint))
}

/// Student-t kernel values `1 / (1 + |y_i - y_j|²)` (zero diagonal) and their sum.
fn student_kernel(y: &[f64], n: usize, dims: usize) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        let yi = &y[i * dims..(i + 1) * dims];
        for j in (i + 1)..n {
            let yj = &y[j * dims..(j + 1) * dims];
            let sq: f64 = yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
            let q = 1.0 / (1.0 + sq);
            num[i * n + j] = q;
            num[j * n + i] = q;
            total += 2.0 * q;
        }
    }
    (num, total)
}

/// `KL(P || Q)` for layout `y` (n × dims, row-major).
pub fn kl_divergence(p: &AffinityMatrix, y: &[f64], dims: usize) -> f64 {
    let n = p.len();
    let (num, z) = student_kernel(y, n, dims);
    p.values()
        .iter()
        .zip(&num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| pij * (pij / (nij / z)).ln())
        .sum()
}

/// Gradient of `KL(exaggeration · P || Q)` with respect to `y`:
/// `4 Σ_j (e·p_ij − q_ij) (1 + |y_i − y_j|²)⁻¹ (y_i − y_j)`.
pub fn kl_gradient(p: &AffinityMatrix, y: &[f64], dims: usize, exaggeration: f64) -> Vec<f64> {
    let n = p.len();
    let (num, z) = student_kernel(y, n, dims);
    let mut grad = vec![0.0; n * dims];
    for i in 0..n {
        let yi = &y[i * dims..(i + 1) * dims];
        let gi = &mut grad[i * dims..(i + 1) * dims];
        for j in 0..n {
            if i == j {
                continue;
            }
            let nij = num[i * n + j];
            let mult = 4.0 * (exaggeration * p.get(i, j) - nij / z) * nij;
            let yj = &y[j * dims..(j + 1) * dims];
            for ((g, a), b) in gi.iter_mut().zip(yi).zip(yj) {
                *g += mult * (a - b);
            }
        }
    }
    grad
}

/// t-SNE from a precomputed distance matrix.
pub fn tsne_from_distances(
    distances: &DistanceMatrix,
    target_dims: usize,
    params: &TsneParams,
    seed: u64,
) -> Result<(DenseMatrix, TsneTrace), ReduceError> {
    let n = distances.len();
    params.validate(n)?;
    let p = calibrate_affinities(distances, params.perplexity)?;
    let dims = target_dims;

    let mut rng = rng_from_seed(seed);
    let mut y: Vec<f64> = (0..n * dims)
        .map(|_| params.init_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut update = vec![0.0; n * dims];
    let mut gains = vec![1.0_f64; n * dims];

    let switch = params.exaggeration_iters.min(params.iterations);
    let mut kl_after_exaggeration = f64::NAN;
    for iter in 0..params.iterations {
        let exaggerated = iter < switch;
        if iter == switch {
            kl_after_exaggeration = kl_divergence(&p, &y, dims);
        }
        let (exaggeration, momentum) = if exaggerated {
            (params.early_exaggeration, params.initial_momentum)
        } else {
            (1.0, params.final_momentum)
        };
        let grad = kl_gradient(&p, &y, dims, exaggeration);
        for k in 0..n * dims {
            // delta-bar-delta gains: grow when the step direction flips
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - params.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        recenter(&mut y, n, dims);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ReduceError::NonFiniteState);
        }
    }
    let kl_final = kl_divergence(&p, &y, dims);
    if kl_after_exaggeration.is_nan() {
        kl_after_exaggeration = kl_final;
    }
    let coords = DenseMatrix::new(n, dims, y).map_err(|_| ReduceError::NonFiniteState)?;
    Ok((
        coords,
        TsneTrace {
            kl_after_exaggeration,
            kl_final,
        },
    ))
}

fn recenter(y: &mut [f64], n: usize, dims: usize) {
    for d in 0..dims {
        let mean = (0..n).map(|i| y[i * dims + d]).sum::<f64>() / n as f64;
        for i in 0..n {
            y[i * dims + d] -= mean;
        }
    }
}

fn check_method(spec: &ReducerSpec, data: &DenseMatrix) -> Result<(), ReduceError> {
    if spec.method != ReducerMethod::Tsne {
        return Err(ReduceError::InvalidSpec("spec method is not t-SNE".into()));
    }
    spec.validate(data.n_rows(), data.n_cols())
}

pub fn tsne_embed(data: &DenseMatrix, spec: &ReducerSpec) -> Result<DenseMatrix, ReduceError> {
    tsne_embed_traced(data, spec).map(|(m, _)| m)
}

/// Like [`tsne_embed`], also returning the KL checkpoints.
pub fn tsne_embed_traced(
    data: &DenseMatrix,
    spec: &ReducerSpec,
) -> Result<(DenseMatrix, TsneTrace), ReduceError> {
    check_method(spec, data)?;
    tsne_from_distances(
        &data.pairwise_distances(),
        spec.target_dims,
        &spec.tsne,
        spec.seed,
    )
}

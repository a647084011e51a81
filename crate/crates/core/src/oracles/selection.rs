use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{optimal_arm, ContextSet};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::seeded;

const CHUNK: usize = 25_000;

/// `V^{-1/2}` through the eigendecomposition of `V`.
fn inverse_sqrt(v: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(v.clone());
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    q * d * q.transpose()
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Crude Monte-Carlo argmax frequencies with independent per-arm draws
/// `β̃_j ~ N(β̂, v² V⁻¹)`; ties go to the lowest index.
pub fn mc_selection_prob<R: Rng + ?Sized>(
    contexts: &ContextSet,
    beta_hat: &DVector<f64>,
    v_matrix: &DMatrix<f64>,
    v: f64,
    n_samples: usize,
    rng: &mut R,
) -> DVector<f64> {
    mc_selection_prob_with(Execution::Parallel, contexts, beta_hat, v_matrix, v, n_samples, rng)
}

pub fn mc_selection_prob_with<R: Rng + ?Sized>(
    exec: Execution,
    contexts: &ContextSet,
    beta_hat: &DVector<f64>,
    v_matrix: &DMatrix<f64>,
    v: f64,
    n_samples: usize,
    rng: &mut R,
) -> DVector<f64> {
    let n = contexts.n_arms();
    let means: Vec<f64> = contexts.arms().iter().map(|x| x.dot(beta_hat)).collect();
    let root = inverse_sqrt(v_matrix);
    // x_jᵀβ̃_j = x_jᵀβ̂ + v (V^{-1/2} x_j)ᵀ z_j with z_j ~ N(0, I_d)
    let loadings: Vec<DVector<f64>> = contexts.arms().iter().map(|x| &root * x * v).collect();
    let chunks = n_samples.div_ceil(CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.next_u64()).collect();
    let counts = map_indexed(exec, chunks, |c| {
        let mut local = seeded(seeds[c]);
        let size = CHUNK.min(n_samples - c * CHUNK);
        let mut counts = vec![0u64; n];
        let mut scores = vec![0.0; n];
        for _ in 0..size {
            for (j, w) in loadings.iter().enumerate() {
                let mut s = means[j];
                for wk in w.iter() {
                    let z: f64 = local.sample(StandardNormal);
                    s += wk * z;
                }
                scores[j] = s;
            }
            counts[argmax_lowest(&scores)] += 1;
        }
        counts
    });
    let mut total = vec![0u64; n];
    for c in counts {
        for (t, k) in total.iter_mut().zip(c) {
            *t += k;
        }
    }
    DVector::from_iterator(n, total.into_iter().map(|k| k as f64 / n_samples as f64))
}

/// Argmax frequencies when one draw `β̃ ~ N(β̂, v² V⁻¹)` is shared by every arm.
pub fn mc_selection_prob_shared<R: Rng + ?Sized>(
    contexts: &ContextSet,
    beta_hat: &DVector<f64>,
    v_matrix: &DMatrix<f64>,
    v: f64,
    n_samples: usize,
    rng: &mut R,
) -> DVector<f64> {
    let n = contexts.n_arms();
    let d = contexts.dim();
    let root = inverse_sqrt(v_matrix) * v;
    let mut counts = vec![0u64; n];
    let mut scores = vec![0.0; n];
    for _ in 0..n_samples {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = beta_hat + &root * z;
        for (j, x) in contexts.arms().iter().enumerate() {
            scores[j] = x.dot(&draw);
        }
        counts[argmax_lowest(&scores)] += 1;
    }
    DVector::from_iterator(n, counts.into_iter().map(|k| k as f64 / n_samples as f64))
}

/// Empirical law of the played arm under the resampling stopping rule:
/// i.i.d. candidates from `π̃` until one lands in `{i : π̃_i > γ}`, at most
/// `m_t` candidates, the last one played.
pub fn simulate_stopping_process<R: Rng + ?Sized>(
    pi_tilde: &DVector<f64>,
    gamma: f64,
    m_t: usize,
    trials: usize,
    rng: &mut R,
) -> DVector<f64> {
    let n = pi_tilde.len();
    let cumulative: Vec<f64> = pi_tilde
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let draw = |rng: &mut R| {
        let u: f64 = rng.random::<f64>() * cumulative[n - 1];
        cumulative.iter().position(|&c| u < c).unwrap_or(n - 1)
    };
    let mut counts = vec![0u64; n];
    for _ in 0..trials {
        let mut arm = draw(rng);
        let mut used = 1;
        while pi_tilde[arm] <= gamma && used < m_t {
            arm = draw(rng);
            used += 1;
        }
        counts[arm] += 1;
    }
    DVector::from_iterator(n, counts.into_iter().map(|k| k as f64 / trials as f64))
}

/// Arms whose gap is at most `2‖β̂ − β‖ + sqrt(‖x_{a*}‖²_{V⁻¹} + ‖x_i‖²_{V⁻¹})`.
pub fn super_unsaturated_set(
    contexts: &ContextSet,
    beta: &DVector<f64>,
    beta_hat: &DVector<f64>,
    v_matrix: &DMatrix<f64>,
) -> Result<Vec<usize>> {
    let inv = v_matrix.clone().lu().try_inverse().ok_or_else(|| Error::numeric("precision matrix is singular"))?;
    let best = optimal_arm(contexts, beta)?;
    let scores = contexts.scores(beta)?;
    let sq = |x: &DVector<f64>| (x.transpose() * &inv * x)[(0, 0)];
    let err = (beta_hat - beta).norm();
    let s_best = sq(contexts.arm(best));
    Ok((0..contexts.n_arms())
        .filter(|&i| {
            let gap = scores[best] - scores[i];
            gap <= 2.0 * err + (s_best + sq(contexts.arm(i))).sqrt()
        })
        .collect())
}

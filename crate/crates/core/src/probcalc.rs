//! Selection-probability machinery.
//!
//! * [`selection_prob_tilde`]: single-draw argmax probabilities `π̃` by a 1-D
//!   quasi-Monte-Carlo quadrature over the winner's standardised draw.
//! * [`selection_prob_closed`]: probabilities `π` after resampling.
//! * [`max_resamples`]: the per-round resampling budget `M_t`.
//! * [`exploration_v`]: the exploration scale that keeps the candidate arm
//!   super-unsaturated with probability at least `1 − γ`.
//!
//! The standard normal CDF is evaluated as `erfc(−x/√2)/2` with `statrs`'
//! complementary error function (relative error near machine precision).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::domain::ContextSet;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;

pub const MIN_QMC_POINTS: usize = 16;

/// Products below this are treated as zero in the quadrature.
const NEGLIGIBLE: f64 = 1e-18;

/// Low-discrepancy point family for the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QmcPoints {
    /// Midpoint grid `Φ⁻¹((m − ½)/M)`.
    #[default]
    Grid,
    /// One-dimensional Sobol sequence (base-2 van der Corput), skipping 0.
    Sobol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbConfig {
    pub gamma: f64,
    pub qmc_points: usize,
    pub delta: f64,
    #[serde(default)]
    pub points: QmcPoints,
}

impl ProbConfig {
    /// `γ = 1/(N+1)`, `M = 200`, `δ = 0.1`.
    pub fn for_arms(n_arms: usize) -> Self {
        ProbConfig { gamma: 1.0 / (n_arms as f64 + 1.0), qmc_points: 200, delta: 0.1, points: QmcPoints::Grid }
    }

    pub fn validate(&self, n_arms: usize) -> Result<()> {
        let n = n_arms as f64;
        if !(self.gamma >= 1.0 / (n + 1.0) && self.gamma < 1.0 / n) {
            return Err(Error::invalid(format!(
                "gamma must lie in [1/(N+1), 1/N) = [{:.6}, {:.6}), got {}",
                1.0 / (n + 1.0),
                1.0 / n,
                self.gamma
            )));
        }
        if self.qmc_points < MIN_QMC_POINTS {
            return Err(Error::invalid(format!("need at least {MIN_QMC_POINTS} quadrature points")));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// `v = (2·log(N/(1 − γN)))^{−1/2}`.
pub fn exploration_v(n_arms: usize, gamma: f64) -> Result<f64> {
    let n = n_arms as f64;
    if !(gamma >= 0.0 && gamma * n < 1.0) || n_arms == 0 {
        return Err(Error::invalid(format!("exploration scale needs γN < 1, got γ={gamma}, N={n_arms}")));
    }
    let ratio = n / (1.0 - gamma * n);
    let log = ratio.ln();
    if !(log > 0.0) {
        return Err(Error::invalid("N/(1 − γN) must exceed 1"));
    }
    Ok((2.0 * log).powf(-0.5))
}

/// Smallest integer strictly greater than `log(t²/δ) / log(1/(1−γ))`.
pub fn max_resamples(t: usize, delta: f64, gamma: f64) -> usize {
    debug_assert!(t >= 1 && delta > 0.0 && delta < 1.0 && gamma > 0.0 && gamma < 1.0);
    let t = t.max(1) as f64;
    let ratio = (t * t / delta).ln() / (1.0 / (1.0 - gamma)).ln();
    if ratio < 0.0 {
        return 1;
    }
    ratio.floor() as usize + 1
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Quadrature nodes: uniforms `u_m` and their normal quantiles `z_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmcRule {
    kind: QmcPoints,
    uniforms: Vec<f64>,
    nodes: Vec<f64>,
}

impl QmcRule {
    pub fn new(kind: QmcPoints, points: usize) -> Result<Self> {
        if points < MIN_QMC_POINTS {
            return Err(Error::invalid(format!("need at least {MIN_QMC_POINTS} quadrature points")));
        }
        let uniforms: Vec<f64> = match kind {
            QmcPoints::Grid => (1..=points).map(|m| (m as f64 - 0.5) / points as f64).collect(),
            QmcPoints::Sobol => (1..=points as u64).map(van_der_corput).collect(),
        };
        let nodes = uniforms.iter().map(|&u| normal_quantile(u)).collect();
        Ok(QmcRule { kind, uniforms, nodes })
    }

    pub fn from_config(config: &ProbConfig) -> Result<Self> {
        Self::new(config.points, config.qmc_points)
    }

    pub fn kind(&self) -> QmcPoints {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

fn van_der_corput(k: u64) -> f64 {
    (k.reverse_bits() as f64) * (1.0 / 18446744073709551616.0)
}

/// Per-arm mean `x_kᵀβ̂` and standard deviation `v·‖x_k‖_{V⁻¹}` of the
/// sampled score `x_kᵀβ̃_k`.
pub fn score_moments(
    contexts: &ContextSet,
    beta_hat: &DVector<f64>,
    v_factor: &SpdFactor,
    v: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if v_factor.dim() != contexts.dim() {
        return Err(Error::invalid("precision matrix does not match the context dimension"));
    }
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("exploration scale must be finite and >= 0, got {v}")));
    }
    let means = contexts.scores(beta_hat)?;
    let scales = contexts.arms().iter().map(|x| v * v_factor.inverse_norm(x)).collect();
    Ok((means, scales))
}

/// `π̃` for the linear-Gaussian sampler with precision matrix `V`.
pub fn selection_prob_tilde(
    contexts: &ContextSet,
    beta_hat: &DVector<f64>,
    v_matrix: &DMatrix<f64>,
    v: f64,
    config: &ProbConfig,
) -> Result<DVector<f64>> {
    let factor = SpdFactor::new(v_matrix.clone())?;
    let rule = QmcRule::from_config(config)?;
    selection_prob_tilde_factored(contexts, beta_hat, &factor, v, &rule)
}

pub fn selection_prob_tilde_factored(
    contexts: &ContextSet,
    beta_hat: &DVector<f64>,
    v_factor: &SpdFactor,
    v: f64,
    rule: &QmcRule,
) -> Result<DVector<f64>> {
    let (means, scales) = score_moments(contexts, beta_hat, v_factor, v)?;
    winner_probabilities(&means, &scales, rule).map(DVector::from_vec)
}

/// Argmax probabilities for independent scores `N(means[k], scales[k]²)`,
/// renormalised to sum to one.
///
/// Arms with zero scale are point masses. Ties among point masses share the
/// win evenly; if every arm is a point mass at the same value the result is
/// uniform.
pub fn winner_probabilities(means: &[f64], scales: &[f64], rule: &QmcRule) -> Result<Vec<f64>> {
    let n = means.len();
    if scales.len() != n || n == 0 {
        return Err(Error::invalid("means and scales must be non-empty and of equal length"));
    }
    if means.iter().chain(scales).any(|v| !v.is_finite()) || scales.iter().any(|&s| s < 0.0) {
        return Err(Error::numeric("score moments must be finite with non-negative scales"));
    }
    let mut p: Vec<f64> = (0..n).map(|i| arm_win_mass(means, scales, rule, i)).collect();
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::numeric("selection probabilities vanished for every arm"));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// Unnormalised quadrature estimate of arm `i`'s win probability.
pub fn arm_win_mass(means: &[f64], scales: &[f64], rule: &QmcRule, i: usize) -> f64 {
    let point_best =
        means.iter().zip(scales).filter(|(_, &s)| s == 0.0).map(|(&m, _)| m).fold(f64::NEG_INFINITY, f64::max);

    if scales[i] == 0.0 {
        if means[i] < point_best {
            return 0.0;
        }
        let ties = means.iter().zip(scales).filter(|(&m, &s)| s == 0.0 && m == means[i]).count();
        let mut mass = 1.0 / ties as f64;
        for (j, (&m, &s)) in means.iter().zip(scales).enumerate() {
            if j != i && s > 0.0 {
                mass *= normal_cdf((means[i] - m) / s);
            }
        }
        return mass;
    }

    let (mi, si) = (means[i], scales[i]);
    let product = |z: f64| {
        let own = si * z + mi;
        let mut prod = 1.0;
        for (j, (&m, &s)) in means.iter().zip(scales).enumerate() {
            if j == i || s == 0.0 {
                continue;
            }
            prod *= normal_cdf((own - m) / s);
            if prod < NEGLIGIBLE {
                return 0.0;
            }
        }
        prod
    };

    if point_best == f64::NEG_INFINITY {
        let sum: f64 = rule.nodes.iter().map(|&z| product(z)).sum();
        return sum / rule.len() as f64;
    }
    // Arm i must beat every point mass: restrict z to (c, ∞) and map the rule
    // onto that tail.
    let c = (point_best - mi) / si;
    let tail = normal_cdf(-c);
    if tail == 0.0 {
        return 0.0;
    }
    let sum: f64 = rule.uniforms.iter().map(|&u| product(-normal_quantile(tail * (1.0 - u)))).sum();
    tail * sum / rule.len() as f64
}

/// Selection probabilities after resampling with budget `M_t`.
///
/// With `Γ̃ = {i : π̃_i > γ}` and `S = Σ_{Γ̃} π̃_i`: arms in `Γ̃` get
/// `π̃_i (1 − (1−S)^{M_t}) / S`, the others `(1−S)^{M_t−1} π̃_i`.
pub fn selection_prob_closed(pi_tilde: &DVector<f64>, gamma: f64, m_t: usize) -> Result<DVector<f64>> {
    if m_t == 0 {
        return Err(Error::invalid("resampling budget must be at least 1"));
    }
    if pi_tilde.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("single-draw probabilities must lie in [0,1]"));
    }
    let total: f64 = pi_tilde.sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("single-draw probabilities sum to {total}, not 1")));
    }
    let accepted: f64 = pi_tilde.iter().filter(|&&p| p > gamma).sum();
    if accepted == 0.0 {
        return Err(Error::InvalidState(format!("no arm has single-draw probability above γ={gamma}")));
    }
    let rejected: f64 = pi_tilde.iter().filter(|&&p| p <= gamma).sum();
    let exhaust = rejected.powi(m_t as i32);
    let accept_scale = (1.0 - exhaust) / accepted;
    let reject_scale = rejected.powi(m_t as i32 - 1);
    Ok(pi_tilde.map(|p| if p > gamma { p * accept_scale } else { p * reject_scale }))
}

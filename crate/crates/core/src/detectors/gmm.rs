//! Diagonal-covariance Gaussian mixtures fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectError, DetectorConfig};
use crate::stats::log_sum_exp;

pub const VARIANCE_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Log-likelihood after initialization and after every EM iteration.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// `log w_j + log N(x | mu_j, diag(var_j))` for every component.
    pub fn joint_log_densities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.components())
            .map(|j| {
                let mut lp = self.weights[j].ln();
                for ((xi, m), v) in x.iter().zip(&self.means[j]).zip(&self.variances[j]) {
                    lp -= 0.5 * (LN_2PI + v.ln() + (xi - m).powi(2) / v);
                }
                lp
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.joint_log_densities(x))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.joint_log_densities(x);
        let total = log_sum_exp(&lj);
        lj.iter().map(|l| (l - total).exp()).collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// k-means++ seeding: first center uniform, then proportional to squared distance.
fn seed_means(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut means = vec![data[rng.random_range(0..data.len())].clone()];
    while means.len() < k {
        let d2: Vec<f64> = data.iter().map(|x| means.iter().map(|m| sq_dist(x, m)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        means.push(data[pick].clone());
    }
    means
}

/// Fits a `k`-component mixture with EM. Stops once an iteration improves
/// the log-likelihood by less than `gmm_tol`, or after `gmm_max_iters`.
pub fn fit_gmm(data: &[Vec<f64>], config: &DetectorConfig) -> Result<GmmModel, DetectError> {
    let mut k = config.gmm_components;
    let n = data.len();
    if k == 0 || n < k {
        return Err(DetectError::TooFewRows { rows: n, components: k });
    }
    let d = data[0].len();
    if data.iter().any(|x| x.len() != d) {
        return Err(DetectError::SchemaMismatch { expected: d, found: data.iter().map(Vec::len).find(|&l| l != d).unwrap_or(d) });
    }
    let mut warnings = Vec::new();
    if k > 1 && data.iter().all(|x| x == &data[0]) {
        warnings.push(format!("all {n} points are identical; fitting 1 component instead of {k}"));
        k = 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut means = seed_means(data, k, &mut rng);
    let overall: Vec<f64> = (0..d)
        .map(|c| {
            let col: Vec<f64> = data.iter().map(|x| x[c]).collect();
            crate::stats::stddev(&col).unwrap_or(0.0).powi(2).max(VARIANCE_FLOOR)
        })
        .collect();
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: std::mem::take(&mut means),
        variances: vec![overall; k],
        log_likelihood: f64::NEG_INFINITY,
        iterations: 0,
        trace: Vec::new(),
        warnings,
    };

    let mut resp = vec![vec![0.0; k]; n];
    loop {
        // E-step
        let mut ll = 0.0;
        for (x, r) in data.iter().zip(resp.iter_mut()) {
            let lj = model.joint_log_densities(x);
            let total = log_sum_exp(&lj);
            ll += total;
            for (rj, l) in r.iter_mut().zip(&lj) {
                *rj = (l - total).exp();
            }
        }
        let prev = model.log_likelihood;
        model.log_likelihood = ll;
        model.trace.push(ll);
        if model.iterations >= config.gmm_max_iters || (model.iterations > 0 && ll - prev < config.gmm_tol) {
            break;
        }
        // M-step
        let mut weights = vec![0.0; k];
        for j in 0..k {
            let nj: f64 = resp.iter().map(|r| r[j]).sum();
            weights[j] = nj;
            if nj <= f64::MIN_POSITIVE {
                continue;
            }
            let mean: Vec<f64> = (0..d).map(|c| data.iter().zip(&resp).map(|(x, r)| r[j] * x[c]).sum::<f64>() / nj).collect();
            let var: Vec<f64> = (0..d)
                .map(|c| {
                    let v = data.iter().zip(&resp).map(|(x, r)| r[j] * (x[c] - mean[c]).powi(2)).sum::<f64>() / nj;
                    v.max(VARIANCE_FLOOR)
                })
                .collect();
            model.means[j] = mean;
            model.variances[j] = var;
        }
        let total: f64 = weights.iter().sum();
        model.weights = weights.into_iter().map(|w| w / total).collect();
        model.iterations += 1;
    }
    Ok(model)
}

/// Negative log-likelihood of each row under `model`.
pub fn score_gmm(model: &GmmModel, data: &[Vec<f64>]) -> Result<Vec<f64>, DetectError> {
    let d = model.dim();
    data.iter()
        .map(|x| {
            if x.len() != d {
                Err(DetectError::SchemaMismatch { expected: d, found: x.len() })
            } else {
                Ok(-model.log_density(x))
            }
        })
        .collect()
}

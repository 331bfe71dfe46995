//! Tabular reward and observation predictors fitted with the simplified
//! MMD loss
//!
//! ```text
//! l = lambda (R - r~(z,a))^2 + (1 - lambda) (M - 2 e_y)^T M,   M = softmax(theta[z,a])
//! ```
//!
//! which equals `lambda (R - r~)^2 + (1 - lambda) |M - P|^2 - |P|^2` in
//! expectation over `y ~ P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training sample `(z, a, R, y')` with its importance weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisSample {
    pub z: usize,
    pub a: usize,
    pub reward: f64,
    pub next_obs: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AisParameters {
    pub n_z: usize,
    pub n_a: usize,
    pub n_y: usize,
    /// `r~(z, a)` indexed `z * n_a + a`.
    pub r_hat: Vec<f64>,
    /// Logits indexed `(z * n_a + a) * n_y + y`.
    pub obs_logits: Vec<f64>,
    pub lr: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AisGrad {
    pub r_hat: Vec<f64>,
    pub obs_logits: Vec<f64>,
}

impl AisGrad {
    pub fn max_abs(&self) -> f64 {
        self.r_hat.iter().chain(&self.obs_logits).map(|x| x.abs()).fold(0.0, f64::max)
    }
}

/// Batch averages reported by an update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AisStats {
    /// Weighted simplified loss (without the constant).
    pub loss: f64,
    /// Mean `(R - r~)^2`.
    pub reward_loss: f64,
    /// Mean `|M - e_y|^2`.
    pub obs_loss: f64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `(M - 2 e_y)^T M`.
pub fn simplified_obs_loss(m: &[f64], y: usize) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>() - 2.0 * m[y]
}

/// `E_{y ~ p}[(M - 2 e_y)^T M]`.
pub fn expected_simplified_obs_loss(m: &[f64], p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(y, &py)| py * simplified_obs_loss(m, y)).sum()
}

impl AisParameters {
    /// Zero rewards and uniform predictors.
    pub fn new(n_z: usize, n_a: usize, n_y: usize, lr: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("AIS learning rate {lr} must be positive")));
        }
        Ok(AisParameters {
            n_z,
            n_a,
            n_y,
            r_hat: vec![0.0; n_z * n_a],
            obs_logits: vec![0.0; n_z * n_a * n_y],
            lr,
            lambda,
        })
    }

    pub fn reward(&self, z: usize, a: usize) -> f64 {
        self.r_hat[z * self.n_a + a]
    }

    pub fn logits(&self, z: usize, a: usize) -> &[f64] {
        let i = (z * self.n_a + a) * self.n_y;
        &self.obs_logits[i..i + self.n_y]
    }

    /// `P~^y(. | z, a)`.
    pub fn predictor(&self, z: usize, a: usize) -> Vec<f64> {
        softmax(self.logits(z, a))
    }

    /// All predictor rows, indexed `(z * n_a + a) * n_y + y`.
    pub fn predictor_table(&self) -> Vec<f64> {
        (0..self.n_z * self.n_a)
            .flat_map(|i| softmax(&self.obs_logits[i * self.n_y..(i + 1) * self.n_y]))
            .collect()
    }

    /// `(1/N) sum_i w_i l_i`.
    pub fn loss(&self, batch: &[AisSample]) -> f64 {
        self.stats(batch).loss
    }

    pub fn stats(&self, batch: &[AisSample]) -> AisStats {
        let n = batch.len().max(1) as f64;
        let mut st = AisStats::default();
        for s in batch {
            let m = self.predictor(s.z, s.a);
            let dr = s.reward - self.reward(s.z, s.a);
            let obs = simplified_obs_loss(&m, s.next_obs);
            st.loss += s.weight * (self.lambda * dr * dr + (1.0 - self.lambda) * obs);
            st.reward_loss += dr * dr;
            st.obs_loss += obs + 1.0;
        }
        st.loss /= n;
        st.reward_loss /= n;
        st.obs_loss /= n;
        st
    }

    /// Analytic gradient of [`AisParameters::loss`].
    pub fn gradient(&self, batch: &[AisSample]) -> AisGrad {
        let n = batch.len().max(1) as f64;
        let mut g = AisGrad {
            r_hat: vec![0.0; self.r_hat.len()],
            obs_logits: vec![0.0; self.obs_logits.len()],
        };
        let ny = self.n_y;
        for s in batch {
            let za = s.z * self.n_a + s.a;
            let w = s.weight / n;
            g.r_hat[za] += w * -2.0 * self.lambda * (s.reward - self.r_hat[za]);
            if self.lambda < 1.0 {
                let m = self.predictor(s.z, s.a);
                // dl/dM = (1 - lambda)(2M - 2 e_y), then through the softmax
                let dm: Vec<f64> = (0..ny)
                    .map(|y| (1.0 - self.lambda) * (2.0 * m[y] - if y == s.next_obs { 2.0 } else { 0.0 }))
                    .collect();
                let inner: f64 = m.iter().zip(&dm).map(|(a, b)| a * b).sum();
                for y in 0..ny {
                    g.obs_logits[za * ny + y] += w * m[y] * (dm[y] - inner);
                }
            }
        }
        g
    }
}

/// One gradient-descent step on the batch loss. Returns the statistics of
/// the batch before the step.
pub fn ais_update(params: &mut AisParameters, batch: &[AisSample]) -> Result<AisStats> {
    let stats = params.stats(batch);
    if !stats.loss.is_finite() {
        return Err(Error::NonFinite(format!("AIS loss ({} samples)", batch.len())));
    }
    let g = params.gradient(batch);
    let lr = params.lr;
    for (p, d) in params.r_hat.iter_mut().zip(&g.r_hat) {
        *p -= lr * d;
    }
    if params.lambda < 1.0 {
        for (p, d) in params.obs_logits.iter_mut().zip(&g.obs_logits) {
            *p -= lr * d;
        }
    }
    if params.r_hat.iter().chain(&params.obs_logits).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("AIS parameters".into()));
    }
    Ok(stats)
}

//! Random-walk Metropolis with global adaptive scaling: the proposal is
//! `N(theta, delta * Sigma)` where `log delta`, the running mean and the running
//! covariance follow Robbins-Monro recursions with step `h^-psi`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Diagonal jitter added to the covariance before factorization.
pub const COV_JITTER: f64 = 1e-9;
/// Initial covariance scale.
pub const COV_INIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub log_delta: f64,
    pub mu: Vec<f64>,
    /// Row-major `d x d`.
    pub cov: Vec<f64>,
    pub h: u64,
    pub psi: f64,
    pub target: f64,
}

impl AdaptiveState {
    pub fn new(initial: &[f64], psi: f64, target: f64) -> Self {
        let d = initial.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = COV_INIT;
        }
        AdaptiveState {
            log_delta: 0.0,
            mu: initial.to_vec(),
            cov,
            h: 0,
            psi,
            target,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Step size used by the next update.
    pub fn next_gain(&self) -> f64 {
        ((self.h + 1) as f64).powf(-self.psi)
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let scale = self.log_delta.exp();
        if d == 1 {
            let z: f64 = StandardNormal.sample(rng);
            return vec![current[0] + (scale * (self.cov[0] + COV_JITTER)).sqrt() * z];
        }
        let mut m = DMatrix::from_row_slice(d, d, &self.cov);
        m = (&m + &m.transpose()) * 0.5;
        for i in 0..d {
            m[(i, i)] += COV_JITTER;
        }
        m *= scale;
        let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let step = match m.clone().cholesky() {
            Some(c) => c.l() * z,
            // fall back to the diagonal if rounding broke positive definiteness
            None => DVector::from_iterator(d, (0..d).map(|i| m[(i, i)].max(COV_JITTER).sqrt() * z[i])),
        };
        current.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }

    /// One adaptation step after the accept/reject decision producing `draw`.
    pub fn update(&mut self, draw: &[f64], accept_prob: f64) {
        self.h += 1;
        let g = (self.h as f64).powf(-self.psi);
        let d = self.dim();
        self.log_delta += g * (accept_prob - self.target);
        let diff: Vec<f64> = draw.iter().zip(&self.mu).map(|(x, m)| x - m).collect();
        for (m, dx) in self.mu.iter_mut().zip(&diff) {
            *m += g * dx;
        }
        for a in 0..d {
            for b in 0..d {
                let c = &mut self.cov[a * d + b];
                *c += g * (diff[a] * diff[b] - *c);
            }
        }
    }

    /// Maps the state through `theta -> A theta + b` (row-major `A`).
    pub fn apply_affine(&mut self, a: &[f64], b: &[f64]) {
        let d = self.dim();
        let am = DMatrix::from_row_slice(d, d, a);
        let mu = &am * DVector::from_column_slice(&self.mu) + DVector::from_column_slice(b);
        let cov = &am * DMatrix::from_row_slice(d, d, &self.cov) * am.transpose();
        self.mu = mu.iter().copied().collect();
        for r in 0..d {
            for c in 0..d {
                self.cov[r * d + c] = cov[(r, c)];
            }
        }
    }
}

/// Functional form of [`AdaptiveState::update`].
pub fn adaptive_update(state: &AdaptiveState, draw: &[f64], accept_prob: f64) -> AdaptiveState {
    let mut s = state.clone();
    s.update(draw, accept_prob);
    s
}

/// Metropolis acceptance probability from a log ratio.
pub fn accept_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

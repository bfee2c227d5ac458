//! Exact conditional draws for the state variances and transition rows.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Gamma};

use crate::error::{validation, MslsError, Result};

/// Inverse-gamma `(shape, scale)` of the conditional for one state variance.
pub fn sigma2_posterior(zeta_column: &[f64], a_sigma: f64, b_sigma: f64) -> (f64, f64) {
    let ss: f64 = zeta_column.iter().map(|z| z * z).sum();
    (a_sigma + zeta_column.len() as f64 / 2.0, b_sigma + ss / 2.0)
}

/// Draws from `IG(shape, scale)` as the reciprocal of a gamma draw with rate `scale`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / scale).map_err(|e| MslsError::Numerical(format!("gamma({shape}, {scale}): {e}")))?;
    Ok(1.0 / g.sample(rng))
}

pub fn sample_sigma2<R: Rng + ?Sized>(zeta_column: &[f64], a_sigma: f64, b_sigma: f64, rng: &mut R) -> Result<f64> {
    let (a, b) = sigma2_posterior(zeta_column, a_sigma, b_sigma);
    sample_inverse_gamma(a, b, rng)
}

/// Dirichlet parameters of the conditional for one transition row.
pub fn dirichlet_params(counts: &[u64], omega: &[f64]) -> Vec<f64> {
    counts.iter().zip(omega).map(|(c, w)| *c as f64 + w).collect()
}

/// Log of a standard gamma draw, stable for small shapes.
fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    let err = |e: rand_distr::GammaError| MslsError::Numerical(format!("gamma({shape}): {e}"));
    if shape >= 1.0 {
        Ok(Gamma::new(shape, 1.0).map_err(err)?.sample(rng).ln())
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).map_err(err)?.sample(rng);
        let u: f64 = rng.random::<f64>();
        Ok(g.ln() + u.ln() / shape)
    }
}

pub fn sample_dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if params.is_empty() || params.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return validation("dirichlet parameters must be positive");
    }
    let logs = params
        .iter()
        .map(|&p| log_gamma_draw(p, rng))
        .collect::<Result<Vec<f64>>>()?;
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

pub fn sample_q_row<R: Rng + ?Sized>(counts: &[u64], omega: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if counts.len() != omega.len() {
        return validation("counts and omega differ in length");
    }
    sample_dirichlet(&dirichlet_params(counts, omega), rng)
}

//! Forward filtering, backward sampling of the hidden regime path.

use ndarray::Array2;
use rand::Rng;

use crate::error::{MslsError, Result};
use crate::generative::sample_categorical;
use crate::model::{beta_leaning_log_pdf, log_intensity, poisson_log_pmf, Layer, ModelParams, StateSequence};

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized log filtering probabilities `log p(s_t = k | y_1..t)` and the log
/// marginal likelihood, starting from a flat initial distribution.
pub fn forward_filter(log_em: &Array2<f64>, trans: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let (t_len, k) = log_em.dim();
    let log_q = trans.mapv(f64::ln);
    let mut filt = Array2::from_elem((t_len, k), f64::NEG_INFINITY);
    let mut log_marg = 0.0;
    let mut pred = vec![-(k as f64).ln(); k];
    let mut buf = vec![0.0; k];
    for t in 0..t_len {
        for s in 0..k {
            buf[s] = pred[s] + log_em[[t, s]];
        }
        let norm = log_sum_exp(&buf);
        if !norm.is_finite() {
            return Err(MslsError::Numerical(format!(
                "emission row at period {} has no finite mass",
                t + 1
            )));
        }
        log_marg += norm;
        for s in 0..k {
            filt[[t, s]] = buf[s] - norm;
        }
        if t + 1 < t_len {
            for s in 0..k {
                let terms: Vec<f64> = (0..k).map(|l| filt[[t, l]] + log_q[[l, s]]).collect();
                pred[s] = log_sum_exp(&terms);
            }
        }
    }
    Ok((filt, log_marg))
}

pub fn backward_sample<R: Rng + ?Sized>(filt: &Array2<f64>, trans: &Array2<f64>, rng: &mut R) -> StateSequence {
    let (t_len, k) = filt.dim();
    let mut states = vec![0usize; t_len];
    if t_len == 0 {
        return StateSequence { states };
    }
    let mut w = vec![0.0; k];
    let weights_from = |logs: &mut Vec<f64>| {
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in logs.iter_mut() {
            *v = (*v - m).exp();
        }
    };
    for s in 0..k {
        w[s] = filt[[t_len - 1, s]];
    }
    weights_from(&mut w);
    states[t_len - 1] = sample_categorical(&w, rng);
    for t in (0..t_len - 1).rev() {
        let next = states[t + 1];
        for s in 0..k {
            w[s] = filt[[t, s]] + trans[[s, next]].ln();
        }
        weights_from(&mut w);
        states[t] = sample_categorical(&w, rng);
    }
    StateSequence { states }
}

pub fn ffbs_from_emissions<R: Rng + ?Sized>(log_em: &Array2<f64>, trans: &Array2<f64>, rng: &mut R) -> Result<StateSequence> {
    let (filt, _) = forward_filter(log_em, trans)?;
    Ok(backward_sample(&filt, trans, rng))
}

/// Per-period, per-state log emission densities: all Beta and Poisson terms of
/// period `t` evaluated with the coordinates of state `k`.
pub fn log_emissions(layer: &Layer, params: &ModelParams) -> Result<Array2<f64>> {
    let k = params.n_states();
    let offsets = layer.exposure_offsets();
    let mut em = Array2::zeros((layer.n_periods, k));
    for t in 0..layer.n_periods {
        let e = match (params.delta, &offsets) {
            (Some(d), Some(o)) => Some(d * o[t]),
            _ => None,
        };
        for s in 0..k {
            let mut acc = 0.0;
            for i in 0..layer.n_nodes {
                acc += beta_leaning_log_pdf(
                    layer.leaning[[t, i]],
                    params.gamma0,
                    params.gamma1,
                    params.zeta[[i, s]],
                    params.phi,
                )?;
                for j in (i + 1)..layer.n_nodes {
                    let ll = log_intensity(params.alpha[i], params.alpha[j], params.beta, params.zeta[[i, s]], params.zeta[[j, s]], e)?;
                    acc += poisson_log_pmf(layer.weights[[t, i, j]], ll)?;
                }
            }
            em[[t, s]] = acc;
        }
    }
    Ok(em)
}

pub fn ffbs_states<R: Rng + ?Sized>(layer: &Layer, params: &ModelParams, rng: &mut R) -> Result<StateSequence> {
    if params.n_states() == 1 {
        return Ok(StateSequence::constant(layer.n_periods, 0));
    }
    let em = log_emissions(layer, params)?;
    ffbs_from_emissions(&em, &params.trans, rng)
}

//! Random-graph baselines: a homogeneous Poisson graph with one effect, and a
//! graph whose distances use the observed leaning instead of latent positions.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use super::PoissonIntensity;
use crate::error::Result;
use crate::generative::layer_rng;
use crate::gibbs::{accept_probability, AdaptiveState, McmcConfig};
use crate::model::{ln_factorial, Layer, PriorSpec};

/// `lambda = exp(alpha)` for every dyad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousDraw {
    pub alpha: f64,
}

/// `lambda_ijt = exp(alpha_i + alpha_j - beta (l_it - l_jt)^2)` with fixed beta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDraw {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

impl PoissonIntensity for HomogeneousDraw {
    fn log_intensity_at(&self, _layer: &Layer, _t: usize, _i: usize, _j: usize) -> f64 {
        self.alpha
    }

    fn moment_spec(&self, layer: &Layer) -> Option<crate::moments::StrengthMomentSpec> {
        (layer.n_nodes >= 2).then(|| crate::moments::StrengthMomentSpec::single_state(layer.n_nodes, self.alpha, 1.0, 0.0))
    }
}

impl PoissonIntensity for CovariateDraw {
    fn log_intensity_at(&self, layer: &Layer, t: usize, i: usize, j: usize) -> f64 {
        let d = layer.leaning[[t, i]] - layer.leaning[[t, j]];
        self.alpha[i] + self.alpha[j] - self.beta * d * d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput<D> {
    pub draws: Vec<D>,
    pub loglik_network: Vec<f64>,
    /// Post-burn-in acceptance rate averaged over the sampled effects.
    pub acceptance: f64,
}

fn total_ln_factorial(layer: &Layer) -> (f64, f64) {
    let n = layer.n_nodes;
    let (mut lf, mut tot) = (0.0, 0.0);
    for t in 0..layer.n_periods {
        for i in 0..n {
            for j in (i + 1)..n {
                let y = layer.weights[[t, i, j]];
                lf += ln_factorial(y);
                tot += y as f64;
            }
        }
    }
    (lf, tot)
}

fn retained(h: usize, cfg: &McmcConfig) -> bool {
    h > cfg.burn_in && (h - cfg.burn_in) % cfg.thin == 0
}

pub fn fit_homogeneous_with_rng<R: Rng + ?Sized>(
    layer: &Layer,
    priors: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<BaselineOutput<HomogeneousDraw>> {
    config.validate(layer.n_nodes)?;
    let n = layer.n_nodes as f64;
    let cells = layer.n_periods as f64 * n * (n - 1.0) / 2.0;
    let (lnfact, total) = total_ln_factorial(layer);
    let target = |a: f64| total * a - cells * a.exp() - 0.5 * a * a / priors.sigma_alpha2;
    let mut alpha = if cells > 0.0 { ((total + 0.5) / cells).ln() } else { 0.0 };
    let mut ad = AdaptiveState::new(&[alpha], config.adapt_exponent, config.target_accept);
    let mut out = BaselineOutput {
        draws: Vec::with_capacity(config.n_retained()),
        loglik_network: Vec::with_capacity(config.n_retained()),
        acceptance: 0.0,
    };
    let mut accepted_post = 0usize;
    for h in 1..=config.n_iter {
        let prop = ad.propose(&[alpha], rng)[0];
        let p = accept_probability(target(prop) - target(alpha));
        let acc = rng.random::<f64>() < p;
        if acc {
            alpha = prop;
        }
        ad.update(&[alpha], p);
        if h > config.burn_in {
            accepted_post += acc as usize;
        }
        if retained(h, config) {
            out.draws.push(HomogeneousDraw { alpha });
            out.loglik_network.push(total * alpha - cells * alpha.exp() - lnfact);
        }
    }
    out.acceptance = accepted_post as f64 / (config.n_iter - config.burn_in) as f64;
    Ok(out)
}

pub fn fit_covariate_with_rng<R: Rng + ?Sized>(
    layer: &Layer,
    priors: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<BaselineOutput<CovariateDraw>> {
    config.validate(layer.n_nodes)?;
    let n = layer.n_nodes;
    let beta = 1.0;
    // kernel summed over periods, and strengths
    let mut w = vec![0.0; n * n];
    let mut strength = vec![0.0; n];
    let mut cross = 0.0;
    for t in 0..layer.n_periods {
        for i in 0..n {
            for j in (i + 1)..n {
                let d = layer.leaning[[t, i]] - layer.leaning[[t, j]];
                let k = (-beta * d * d).exp();
                w[i * n + j] += k;
                w[j * n + i] += k;
                let y = layer.weights[[t, i, j]] as f64;
                strength[i] += y;
                strength[j] += y;
                cross += y * beta * d * d;
            }
        }
    }
    let (lnfact, _) = total_ln_factorial(layer);
    let denom = (layer.n_periods * n.saturating_sub(1)) as f64;
    let mut alpha: Vec<f64> = if denom > 0.0 {
        strength.iter().map(|s| ((s + 0.5) / denom).ln() / 2.0).collect()
    } else {
        vec![0.0; n]
    };
    let mut ea: Vec<f64> = alpha.iter().map(|a| a.exp()).collect();
    let mut ads: Vec<AdaptiveState> = alpha
        .iter()
        .map(|a| AdaptiveState::new(&[*a], config.adapt_exponent, config.target_accept))
        .collect();
    let inv_var = 1.0 / priors.sigma_alpha2;
    let mut out = BaselineOutput {
        draws: Vec::with_capacity(config.n_retained()),
        loglik_network: Vec::with_capacity(config.n_retained()),
        acceptance: 0.0,
    };
    let mut accepted_post = 0usize;
    for h in 1..=config.n_iter {
        for i in 0..n {
            let cur = alpha[i];
            let prop = ads[i].propose(&[cur], rng)[0];
            let lam: f64 = (0..n).filter(|&j| j != i).map(|j| ea[j] * w[i * n + j]).sum::<f64>() * ea[i];
            let d = prop - cur;
            let log_r = strength[i] * d - lam * d.exp_m1() - 0.5 * inv_var * (prop * prop - cur * cur);
            let p = accept_probability(log_r);
            let acc = rng.random::<f64>() < p;
            if acc {
                alpha[i] = prop;
                ea[i] = prop.exp();
            }
            ads[i].update(&[alpha[i]], p);
            if h > config.burn_in {
                accepted_post += acc as usize;
            }
        }
        if retained(h, config) {
            let mut ll = -lnfact - cross;
            for i in 0..n {
                ll += strength[i] * alpha[i];
                for j in (i + 1)..n {
                    ll -= ea[i] * ea[j] * w[i * n + j];
                }
            }
            out.draws.push(CovariateDraw { alpha: alpha.clone(), beta });
            out.loglik_network.push(ll);
        }
    }
    let steps = ((config.n_iter - config.burn_in) * n.max(1)) as f64;
    out.acceptance = accepted_post as f64 / steps;
    Ok(out)
}

/// Homogeneous baseline on the configured seed, stream 1000 + stream.
pub fn fit_homogeneous(layer: &Layer, priors: &PriorSpec, config: &McmcConfig) -> Result<BaselineOutput<HomogeneousDraw>> {
    fit_homogeneous_with_rng(layer, priors, config, &mut layer_rng(config.seed, 1000 + config.stream))
}

/// Covariate baseline on the configured seed, stream 2000 + stream.
pub fn fit_covariate(layer: &Layer, priors: &PriorSpec, config: &McmcConfig) -> Result<BaselineOutput<CovariateDraw>> {
    fit_covariate_with_rng(layer, priors, config, &mut layer_rng(config.seed, 2000 + config.stream))
}

pub fn fit_baselines(
    layer: &Layer,
    priors: &PriorSpec,
    config: &McmcConfig,
) -> Result<(BaselineOutput<HomogeneousDraw>, BaselineOutput<CovariateDraw>)> {
    Ok((fit_homogeneous(layer, priors, config)?, fit_covariate(layer, priors, config)?))
}

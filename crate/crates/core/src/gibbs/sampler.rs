use ndarray::{Array2, Array3};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};
use statrs::function::gamma::ln_gamma;

use super::adaptive::{accept_probability, AdaptiveState};
use super::conjugate::{sample_q_row, sample_sigma2};
use super::ffbs::ffbs_from_emissions;
use super::identify::{identify_draw, IdentifyTransform, PosteriorDraw};
use super::{McmcConfig, ModelVariant};
use crate::error::{MslsError, Result};
use crate::generative::layer_rng;
use crate::model::{beta_shapes, ln_factorial, Layer, ModelParams, PriorSpec, StateSequence};

/// Log Hastings correction `log q(phi | phi_new) - log q(phi_new | phi)` for a
/// normal proposal truncated at zero with scale `step * current`.
pub fn phi_proposal_log_correction(phi: f64, phi_new: f64, step: f64) -> f64 {
    let std = NormalDist::standard();
    let log_q = |x: f64, y: f64| {
        let s = step * y;
        let z = (x - y) / s;
        -0.5 * z * z - s.ln() - std.cdf(y / s).ln()
    };
    log_q(phi, phi_new) - log_q(phi_new, phi)
}

/// Post-burn-in acceptance rates, averaged over the parameters of each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub alpha: f64,
    pub zeta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub delta: Option<f64>,
}

/// Every iteration's parameter values and acceptance flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawTrace {
    pub param_names: Vec<String>,
    pub accept_names: Vec<String>,
    /// Row-major, one row per iteration.
    pub params: Vec<f64>,
    pub accepts: Vec<u8>,
}

impl RawTrace {
    pub fn n_iter(&self) -> usize {
        if self.param_names.is_empty() {
            0
        } else {
            self.params.len() / self.param_names.len()
        }
    }

    pub fn param_column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.param_names.iter().position(|n| n == name)?;
        let w = self.param_names.len();
        Some(self.params.iter().skip(c).step_by(w).copied().collect())
    }

    pub fn accept_column(&self, name: &str) -> Option<Vec<u8>> {
        let c = self.accept_names.iter().position(|n| n == name)?;
        let w = self.accept_names.len();
        Some(self.accepts.iter().skip(c).step_by(w).copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<PosteriorDraw>,
    pub loglik_complete: Vec<f64>,
    pub loglik_network: Vec<f64>,
    pub acceptance: AcceptanceSummary,
    pub trace: Option<RawTrace>,
    pub config: McmcConfig,
    pub priors: PriorSpec,
}

/// Starting values: effects from observed strengths, small random coordinates,
/// prior means for the leaning regression, uniform transitions.
pub fn initial_params<R: Rng + ?Sized>(layer: &Layer, k: usize, rng: &mut R) -> ModelParams {
    let (n, t_len) = (layer.n_nodes, layer.n_periods);
    let denom = (t_len * n.saturating_sub(1)) as f64;
    let alpha = if denom > 0.0 {
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let s: u64 = (0..t_len).map(|t| layer.strength(t, i)).sum();
                (s as f64 + 0.5) / denom
            })
            .collect();
        let mean_r = r.iter().sum::<f64>() / n as f64;
        r.iter().map(|ri| ri.ln() - 0.5 * mean_r.ln()).collect()
    } else {
        vec![0.0; n]
    };
    let zeta = Array2::from_shape_fn((n, k), |_| {
        let z: f64 = StandardNormal.sample(rng);
        0.1 * z
    });
    ModelParams {
        alpha,
        zeta,
        sigma2: vec![1.0; k],
        gamma0: 0.0,
        gamma1: 0.0,
        phi: 10.0,
        trans: Array2::from_elem((k, k), 1.0 / k as f64),
        beta: 1.0,
        delta: layer.exposure.as_ref().map(|_| 0.0),
    }
}

/// Gibbs sampler state with the sufficient statistics needed by each block.
#[derive(Debug, Clone)]
pub struct Sampler {
    layer: Layer,
    priors: PriorSpec,
    config: McmcConfig,
    k: usize,
    pub params: ModelParams,
    pub states: StateSequence,
    // data summaries
    strength_total: Vec<f64>,
    ln_l: Array2<f64>,
    ln_1ml: Array2<f64>,
    lnfact_total: f64,
    ytot_t: Vec<f64>,
    offsets: Option<Vec<f64>>,
    // per-state statistics given the current path
    n_k: Vec<f64>,
    w_k: Vec<f64>,
    ysum: Array3<f64>,
    lsum: Array2<f64>,
    msum: Array2<f64>,
    // exp(-beta (zeta_ik - zeta_jk)^2) as [k, i, j]
    kern: Array3<f64>,
    exp_alpha: Vec<f64>,
    ad_alpha: Vec<AdaptiveState>,
    ad_zeta: Vec<AdaptiveState>,
    ad_gamma: AdaptiveState,
    ad_delta: Option<AdaptiveState>,
    /// Proposals for translating a whole state's coordinates, tracked on the state mean.
    ad_shift: Vec<AdaptiveState>,
    /// Acceptance flags of the latest sweep: alpha (N), zeta (N*K), gamma, phi, delta.
    pub last_accept: Vec<u8>,
    sweeps: usize,
}

impl Sampler {
    pub fn new(
        layer: Layer,
        priors: PriorSpec,
        config: McmcConfig,
        params: ModelParams,
        states: StateSequence,
    ) -> Result<Self> {
        let k = config.effective_states();
        config.validate(layer.n_nodes)?;
        priors.validate(k)?;
        params.validate()?;
        if params.n_states() != k || params.n_nodes() != layer.n_nodes || states.len() != layer.n_periods {
            return Err(MslsError::Validation(
                "starting values do not match the layer and configuration".into(),
            ));
        }
        if layer.exposure.is_some() != params.delta.is_some() {
            return Err(MslsError::Validation(
                "exposure coefficient must be present exactly when exposure data is".into(),
            ));
        }
        let n = layer.n_nodes;
        let (psi, target) = (config.adapt_exponent, config.target_accept);
        let ad_alpha = params.alpha.iter().map(|a| AdaptiveState::new(&[*a], psi, target)).collect();
        let ad_zeta = (0..n * k)
            .map(|idx| AdaptiveState::new(&[params.zeta[[idx / k, idx % k]]], psi, target))
            .collect();
        let ad_gamma = match config.variant {
            ModelVariant::ZeroSlope => AdaptiveState::new(&[params.gamma0], psi, target),
            _ => AdaptiveState::new(&[params.gamma0, params.gamma1], psi, target),
        };
        let ad_delta = params.delta.map(|d| AdaptiveState::new(&[d], psi, target));
        let ad_shift = (0..k)
            .map(|s| AdaptiveState::new(&[params.zeta.column(s).mean().unwrap_or(0.0)], psi, target))
            .collect();
        let n_flags = n + n * k + 2 + usize::from(ad_delta.is_some());
        let mut s = Sampler {
            layer,
            priors,
            config,
            k,
            params,
            states,
            strength_total: Vec::new(),
            ln_l: Array2::zeros((0, 0)),
            ln_1ml: Array2::zeros((0, 0)),
            lnfact_total: 0.0,
            ytot_t: Vec::new(),
            offsets: None,
            n_k: vec![0.0; k],
            w_k: vec![0.0; k],
            ysum: Array3::zeros((k, n, n)),
            lsum: Array2::zeros((n, k)),
            msum: Array2::zeros((n, k)),
            kern: Array3::zeros((k, n, n)),
            exp_alpha: Vec::new(),
            ad_alpha,
            ad_zeta,
            ad_gamma,
            ad_delta,
            ad_shift,
            last_accept: vec![0; n_flags],
            sweeps: 0,
        };
        s.load_data();
        s.refresh_all();
        Ok(s)
    }

    /// Default starting values drawn with `rng`.
    pub fn initialize<R: Rng + ?Sized>(layer: Layer, priors: PriorSpec, config: McmcConfig, rng: &mut R) -> Result<Self> {
        let k = config.effective_states();
        let mut params = initial_params(&layer, k, rng);
        if config.variant == ModelVariant::ZeroSlope {
            params.gamma1 = 0.0;
        }
        let states = StateSequence {
            states: (0..layer.n_periods).map(|_| rng.random_range(0..k)).collect(),
        };
        let s = Sampler::new(layer, priors, config, params, states)?;
        let ll = s.log_lik_parts();
        if !(ll.0.is_finite() && ll.1.is_finite() && ll.2.is_finite()) {
            return Err(MslsError::Initialization(format!(
                "non-finite starting log-likelihood (network {}, leaning {}, transitions {})",
                ll.0, ll.1, ll.2
            )));
        }
        Ok(s)
    }

    fn adapting(&self) -> bool {
        self.config.adapt_until.is_none_or(|last| self.sweeps <= last)
    }

    pub fn layer(&self) -> &Layer {
        &self.layer
    }

    /// Swaps in new observations of the same shape, keeping the chain state.
    pub fn replace_layer(&mut self, layer: Layer) -> Result<()> {
        if layer.n_nodes != self.layer.n_nodes || layer.n_periods != self.layer.n_periods {
            return Err(MslsError::Validation("replacement layer has a different shape".into()));
        }
        self.layer = layer;
        self.load_data();
        self.refresh_all();
        Ok(())
    }

    fn load_data(&mut self) {
        let l = &self.layer;
        let (t_len, n) = (l.n_periods, l.n_nodes);
        self.strength_total = (0..n)
            .map(|i| (0..t_len).map(|t| l.strength(t, i) as f64).sum())
            .collect();
        self.ln_l = l.leaning.mapv(f64::ln);
        self.ln_1ml = l.leaning.mapv(|v| (-v).ln_1p());
        let mut lnfact = 0.0;
        self.ytot_t = vec![0.0; t_len];
        for t in 0..t_len {
            for i in 0..n {
                for j in (i + 1)..n {
                    let y = l.weights[[t, i, j]];
                    lnfact += ln_factorial(y);
                    self.ytot_t[t] += y as f64;
                }
            }
        }
        self.lnfact_total = lnfact;
        self.offsets = l.exposure_offsets();
    }

    fn exposure_factor(&self, t: usize) -> f64 {
        match (&self.offsets, self.params.delta) {
            (Some(o), Some(d)) => (d * o[t]).exp(),
            _ => 1.0,
        }
    }

    fn refresh_stats(&mut self) {
        let (n, k) = (self.layer.n_nodes, self.k);
        self.n_k.iter_mut().for_each(|v| *v = 0.0);
        self.w_k.iter_mut().for_each(|v| *v = 0.0);
        self.ysum.fill(0.0);
        self.lsum.fill(0.0);
        self.msum.fill(0.0);
        for t in 0..self.layer.n_periods {
            let s = self.states.states[t];
            self.n_k[s] += 1.0;
            self.w_k[s] += self.exposure_factor(t);
            for i in 0..n {
                self.lsum[[i, s]] += self.ln_l[[t, i]];
                self.msum[[i, s]] += self.ln_1ml[[t, i]];
                for j in (i + 1)..n {
                    let y = self.layer.weights[[t, i, j]] as f64;
                    if y != 0.0 {
                        self.ysum[[s, i, j]] += y;
                        self.ysum[[s, j, i]] += y;
                    }
                }
            }
        }
        debug_assert_eq!(self.n_k.len(), k);
    }

    fn refresh_kernel(&mut self) {
        let (n, k) = (self.layer.n_nodes, self.k);
        let beta = self.params.beta;
        for s in 0..k {
            for i in 0..n {
                for j in 0..n {
                    let d = self.params.zeta[[i, s]] - self.params.zeta[[j, s]];
                    self.kern[[s, i, j]] = (-beta * d * d).exp();
                }
            }
        }
        self.exp_alpha = self.params.alpha.iter().map(|a| a.exp()).collect();
    }

    fn refresh_all(&mut self) {
        self.refresh_stats();
        self.refresh_kernel();
    }

    /// Beta log-likelihood contribution of node `i` over the periods in state `k`.
    #[inline]
    fn beta_node_state(&self, i: usize, k: usize, g0: f64, g1: f64, phi: f64, lg_phi: f64, z: f64) -> f64 {
        let nk = self.n_k[k];
        if nk == 0.0 {
            return 0.0;
        }
        let (a, b) = beta_shapes(g0, g1, z, phi);
        nk * (lg_phi - ln_gamma(a) - ln_gamma(b)) + (a - 1.0) * self.lsum[[i, k]] + (b - 1.0) * self.msum[[i, k]]
    }

    fn beta_total(&self, g0: f64, g1: f64, phi: f64) -> f64 {
        let lg_phi = ln_gamma(phi);
        let mut acc = 0.0;
        for k in 0..self.k {
            for i in 0..self.layer.n_nodes {
                acc += self.beta_node_state(i, k, g0, g1, phi, lg_phi, self.params.zeta[[i, k]]);
            }
        }
        acc
    }

    /// (network, leaning, transition) log-likelihood at the current state.
    pub fn log_lik_parts(&self) -> (f64, f64, f64) {
        let (n, k) = (self.layer.n_nodes, self.k);
        let p = &self.params;
        let mut base = vec![vec![0.0; n * n]; k];
        let mut c_k = vec![0.0; k];
        for s in 0..k {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = p.zeta[[i, s]] - p.zeta[[j, s]];
                    let v = p.alpha[i] + p.alpha[j] - p.beta * d * d;
                    base[s][i * n + j] = v;
                    c_k[s] += v.exp();
                }
            }
        }
        let mut net = -self.lnfact_total;
        for t in 0..self.layer.n_periods {
            let s = self.states.states[t];
            let mut acc = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let y = self.layer.weights[[t, i, j]];
                    if y != 0 {
                        acc += y as f64 * base[s][i * n + j];
                    }
                }
            }
            let e = self.exposure_factor(t);
            acc += e.ln() * self.ytot_t[t] - e * c_k[s];
            net += acc;
        }
        let lean = self.beta_total(p.gamma0, p.gamma1, p.phi);
        let trans = crate::model::transition_log_lik(p, &self.states);
        (net, lean, trans)
    }

    fn step_alpha<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.layer.n_nodes;
        let inv_var = 1.0 / self.priors.sigma_alpha2;
        for i in 0..n {
            let cur = self.params.alpha[i];
            let prop = self.ad_alpha[i].propose(&[cur], rng)[0];
            let mut lam = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let mut s = 0.0;
                for k in 0..self.k {
                    s += self.w_k[k] * self.kern[[k, i, j]];
                }
                lam += self.exp_alpha[j] * s;
            }
            lam *= self.exp_alpha[i];
            let d = prop - cur;
            let log_r = self.strength_total[i] * d - lam * d.exp_m1() - 0.5 * inv_var * (prop * prop - cur * cur);
            let p = accept_probability(log_r);
            let accepted = rng.random::<f64>() < p;
            if accepted {
                self.params.alpha[i] = prop;
                self.exp_alpha[i] = prop.exp();
            }
            self.last_accept[i] = accepted as u8;
            if self.adapting() {
                self.ad_alpha[i].update(&[self.params.alpha[i]], p);
            }
        }
    }

    fn step_phi<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let cur = self.params.phi;
        let sd = self.config.phi_step * cur;
        let prop = loop {
            let z: f64 = StandardNormal.sample(rng);
            let v = cur + sd * z;
            if v > 0.0 {
                break v;
            }
        };
        let (g0, g1) = (self.params.gamma0, self.params.gamma1);
        let (a, b) = (self.priors.a_phi, self.priors.b_phi);
        let log_prior = |x: f64| (a - 1.0) * x.ln() - b * x;
        let log_r = self.beta_total(g0, g1, prop) - self.beta_total(g0, g1, cur) + log_prior(prop) - log_prior(cur)
            + phi_proposal_log_correction(cur, prop, self.config.phi_step);
        let accepted = rng.random::<f64>() < accept_probability(log_r);
        if accepted {
            self.params.phi = prop;
        }
        let idx = self.phi_flag();
        self.last_accept[idx] = accepted as u8;
    }

    fn gamma_flag(&self) -> usize {
        self.layer.n_nodes * (1 + self.k)
    }

    fn phi_flag(&self) -> usize {
        self.gamma_flag() + 1
    }

    fn step_gamma<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (cur0, cur1) = (self.params.gamma0, self.params.gamma1);
        let free_slope = self.config.variant != ModelVariant::ZeroSlope;
        let (prop0, prop1) = if free_slope {
            let v = self.ad_gamma.propose(&[cur0, cur1], rng);
            (v[0], v[1])
        } else {
            (self.ad_gamma.propose(&[cur0], rng)[0], 0.0)
        };
        let phi = self.params.phi;
        let (b0, b1) = (self.priors.b_gamma0, self.priors.b_gamma1);
        let log_prior = |g0: f64, g1: f64| -0.5 * g0 * g0 / b0 - 0.5 * g1 * g1 / b1;
        let log_r = self.beta_total(prop0, prop1, phi) - self.beta_total(cur0, cur1, phi) + log_prior(prop0, prop1)
            - log_prior(cur0, cur1);
        let p = accept_probability(log_r);
        let accepted = rng.random::<f64>() < p;
        if accepted {
            self.params.gamma0 = prop0;
            self.params.gamma1 = prop1;
        }
        if free_slope {
            if self.adapting() {
                self.ad_gamma.update(&[self.params.gamma0, self.params.gamma1], p);
            }
        } else {
            if self.adapting() {
                self.ad_gamma.update(&[self.params.gamma0], p);
            }
        }
        let idx = self.gamma_flag();
        self.last_accept[idx] = accepted as u8;
    }

    fn step_delta<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (Some(cur), Some(offsets)) = (self.params.delta, self.offsets.clone()) else {
            return;
        };
        let n = self.layer.n_nodes;
        let mut c_k = vec![0.0; self.k];
        for (s, c) in c_k.iter_mut().enumerate() {
            for i in 0..n {
                for j in (i + 1)..n {
                    *c += self.exp_alpha[i] * self.exp_alpha[j] * self.kern[[s, i, j]];
                }
            }
        }
        let target = |d: f64| {
            let mut acc = -0.5 * d * d / self.priors.sigma_delta2;
            for (t, o) in offsets.iter().enumerate() {
                acc += d * o * self.ytot_t[t] - (d * o).exp() * c_k[self.states.states[t]];
            }
            acc
        };
        let ad = self.ad_delta.as_mut().expect("delta adaptation exists with exposure");
        let prop = ad.propose(&[cur], rng)[0];
        let p = accept_probability(target(prop) - target(cur));
        let accepted = rng.random::<f64>() < p;
        let new = if accepted { prop } else { cur };
        if self.adapting() {
            self.ad_delta.as_mut().unwrap().update(&[new], p);
        }
        self.params.delta = Some(new);
        let idx = self.phi_flag() + 1;
        self.last_accept[idx] = accepted as u8;
        if accepted {
            self.refresh_stats();
        }
    }

    fn zeta_target(&self, i: usize, k: usize, z: f64, lg_phi: f64) -> f64 {
        let n = self.layer.n_nodes;
        let beta = self.params.beta;
        let mut acc = -0.5 * z * z / self.params.sigma2[k];
        if self.n_k[k] == 0.0 {
            return acc;
        }
        let wa = self.w_k[k] * self.exp_alpha[i];
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = z - self.params.zeta[[j, k]];
            let d2 = beta * d * d;
            acc -= self.ysum[[k, i, j]] * d2 + wa * self.exp_alpha[j] * (-d2).exp();
        }
        acc + self.beta_node_state(i, k, self.params.gamma0, self.params.gamma1, self.params.phi, lg_phi, z)
    }

    fn step_zeta<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, k_all) = (self.layer.n_nodes, self.k);
        let lg_phi = ln_gamma(self.params.phi);
        let beta = self.params.beta;
        for k in 0..k_all {
            for i in 0..n {
                let idx = i * k_all + k;
                let cur = self.params.zeta[[i, k]];
                let prop = self.ad_zeta[idx].propose(&[cur], rng)[0];
                let log_r = self.zeta_target(i, k, prop, lg_phi) - self.zeta_target(i, k, cur, lg_phi);
                let p = accept_probability(log_r);
                let accepted = rng.random::<f64>() < p;
                if accepted {
                    self.params.zeta[[i, k]] = prop;
                    for j in 0..n {
                        let d = prop - self.params.zeta[[j, k]];
                        let v = (-beta * d * d).exp();
                        self.kern[[k, i, j]] = v;
                        self.kern[[k, j, i]] = v;
                    }
                }
                self.last_accept[n + idx] = accepted as u8;
                if self.adapting() {
                    self.ad_zeta[idx].update(&[self.params.zeta[[i, k]]], p);
                }
            }
        }
    }

    /// Proposes negating one state's coordinates. Distances and the prior are
    /// unchanged, so only the leaning terms enter the ratio. Without this move a
    /// state whose orientation disagrees with the slope stays trapped.
    fn step_reflect<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, k_all) = (self.layer.n_nodes, self.k);
        let lg_phi = ln_gamma(self.params.phi);
        let (g0, g1, phi) = (self.params.gamma0, self.params.gamma1, self.params.phi);
        for k in 0..k_all {
            let mut log_r = 0.0;
            for i in 0..n {
                let z = self.params.zeta[[i, k]];
                log_r += self.beta_node_state(i, k, g0, g1, phi, lg_phi, -z) - self.beta_node_state(i, k, g0, g1, phi, lg_phi, z);
            }
            if rng.random::<f64>() < accept_probability(log_r) {
                self.params.zeta.column_mut(k).mapv_inplace(|z| -z);
                for i in 0..n {
                    self.ad_zeta[i * k_all + k].apply_affine(&[-1.0], &[0.0]);
                }
                self.ad_shift[k].apply_affine(&[-1.0], &[0.0]);
            }
        }
    }

    /// Proposes translating one state's coordinates. Distances are unchanged,
    /// so only the leaning terms and the prior enter the ratio.
    fn step_translate<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, k_all) = (self.layer.n_nodes, self.k);
        if n == 0 {
            return;
        }
        let lg_phi = ln_gamma(self.params.phi);
        let (g0, g1, phi) = (self.params.gamma0, self.params.gamma1, self.params.phi);
        for k in 0..k_all {
            let m = self.params.zeta.column(k).sum() / n as f64;
            let c = self.ad_shift[k].propose(&[m], rng)[0] - m;
            let s2 = self.params.sigma2[k];
            let mut log_r = 0.0;
            for i in 0..n {
                let z = self.params.zeta[[i, k]];
                log_r += self.beta_node_state(i, k, g0, g1, phi, lg_phi, z + c) - self.beta_node_state(i, k, g0, g1, phi, lg_phi, z)
                    - 0.5 * ((z + c).powi(2) - z * z) / s2;
            }
            let p = accept_probability(log_r);
            if rng.random::<f64>() < p {
                self.params.zeta.column_mut(k).mapv_inplace(|z| z + c);
                for i in 0..n {
                    self.ad_zeta[i * k_all + k].apply_affine(&[1.0], &[c]);
                }
            }
            if self.adapting() {
                let m = self.params.zeta.column(k).sum() / n as f64;
                self.ad_shift[k].update(&[m], p);
            }
        }
    }

    fn step_sigma2<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for k in 0..self.k {
            let col: Vec<f64> = self.params.zeta.column(k).to_vec();
            self.params.sigma2[k] = sample_sigma2(&col, self.priors.a_sigma, self.priors.b_sigma, rng)?;
        }
        Ok(())
    }

    fn step_trans<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.k == 1 {
            return Ok(());
        }
        let counts = self.states.transition_counts(self.k);
        for l in 0..self.k {
            let row: Vec<u64> = counts.row(l).to_vec();
            let q = sample_q_row(&row, &self.priors.omega, rng)?;
            for (m, v) in q.into_iter().enumerate() {
                self.params.trans[[l, m]] = v;
            }
        }
        Ok(())
    }

    /// Log emission densities from the cached summaries, omitting `ln y!`
    /// (constant across states).
    pub fn cached_log_emissions(&self) -> Array2<f64> {
        let (n, k_all, t_len) = (self.layer.n_nodes, self.k, self.layer.n_periods);
        let p = &self.params;
        let lg_phi = ln_gamma(p.phi);
        let mut base = vec![vec![0.0; n * n]; k_all];
        let mut c_k = vec![0.0; k_all];
        let mut bc = Array2::zeros((n, k_all));
        let mut ba = Array2::zeros((n, k_all));
        let mut bb = Array2::zeros((n, k_all));
        for s in 0..k_all {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = p.zeta[[i, s]] - p.zeta[[j, s]];
                    let v = p.alpha[i] + p.alpha[j] - p.beta * d * d;
                    base[s][i * n + j] = v;
                    c_k[s] += v.exp();
                }
                let (a, b) = beta_shapes(p.gamma0, p.gamma1, p.zeta[[i, s]], p.phi);
                bc[[i, s]] = lg_phi - ln_gamma(a) - ln_gamma(b);
                ba[[i, s]] = a - 1.0;
                bb[[i, s]] = b - 1.0;
            }
        }
        let mut em = Array2::zeros((t_len, k_all));
        for t in 0..t_len {
            let e = self.exposure_factor(t);
            for s in 0..k_all {
                let mut acc = e.ln() * self.ytot_t[t] - e * c_k[s];
                let bs = &base[s];
                for i in 0..n {
                    let row = i * n;
                    for j in (i + 1)..n {
                        let y = self.layer.weights[[t, i, j]];
                        if y != 0 {
                            acc += y as f64 * bs[row + j];
                        }
                    }
                    acc += bc[[i, s]] + ba[[i, s]] * self.ln_l[[t, i]] + bb[[i, s]] * self.ln_1ml[[t, i]];
                }
                em[[t, s]] = acc;
            }
        }
        em
    }

    fn step_states<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.k > 1 {
            let em = self.cached_log_emissions();
            self.states = ffbs_from_emissions(&em, &self.params.trans, rng)?;
        }
        self.refresh_stats();
        Ok(())
    }

    fn apply_identification(&mut self) {
        let spec = self.config.identify_spec();
        let mut draw = PosteriorDraw {
            params: self.params.clone(),
            states: std::mem::take(&mut self.states.states).into(),
        };
        let tr = identify_draw(&mut draw, &spec);
        self.params = draw.params;
        self.states = draw.states;
        self.transform_adaptation(&tr);
        if !tr.is_identity_perm() {
            self.refresh_all();
        }
    }

    fn transform_adaptation(&mut self, tr: &IdentifyTransform) {
        let (n, k_all) = (self.layer.n_nodes, self.k);
        for i in 0..n {
            let old: Vec<AdaptiveState> = (0..k_all).map(|k| self.ad_zeta[i * k_all + k].clone()).collect();
            for (new, &from) in tr.perm.iter().enumerate() {
                let mut st = old[from].clone();
                st.apply_affine(&[tr.sign[from]], &[-tr.sign[from] * tr.shift[from]]);
                self.ad_zeta[i * k_all + new] = st;
            }
        }
        let old = self.ad_shift.clone();
        for (new, &from) in tr.perm.iter().enumerate() {
            let mut st = old[from].clone();
            st.apply_affine(&[tr.sign[from]], &[-tr.sign[from] * tr.shift[from]]);
            self.ad_shift[new] = st;
        }
        if self.ad_gamma.dim() == 2 && n > 0 {
            // pooled mode: one sign for every state. The recentring shift is
            // not a change of coordinates, so the covariance keeps its scale.
            let e = tr.sign[0];
            self.ad_gamma.apply_affine(&[1.0, 0.0, 0.0, e], &[0.0, 0.0]);
        }
    }

    /// One full sweep in the fixed block order.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.sweeps += 1;
        self.step_alpha(rng);
        self.step_phi(rng);
        self.step_gamma(rng);
        self.step_delta(rng);
        self.step_zeta(rng);
        self.step_reflect(rng);
        self.step_translate(rng);
        self.step_sigma2(rng)?;
        self.step_trans(rng)?;
        self.step_states(rng)?;
        if self.config.identify {
            self.apply_identification();
        }
        Ok(())
    }

    fn param_names(&self) -> (Vec<String>, Vec<String>) {
        let (n, k) = (self.layer.n_nodes, self.k);
        let mut p: Vec<String> = (1..=n).map(|i| format!("alpha_{i}")).collect();
        let mut a: Vec<String> = (1..=n).map(|i| format!("acc_alpha_{i}")).collect();
        for i in 1..=n {
            for s in 1..=k {
                p.push(format!("zeta_{i}_{s}"));
                a.push(format!("acc_zeta_{i}_{s}"));
            }
        }
        p.extend(["gamma0", "gamma1", "phi"].map(String::from));
        a.extend(["acc_gamma", "acc_phi"].map(String::from));
        if self.params.delta.is_some() {
            p.push("delta".into());
            a.push("acc_delta".into());
        }
        (p, a)
    }

    fn push_trace(&self, trace: &mut RawTrace) {
        trace.params.extend_from_slice(&self.params.alpha);
        trace.params.extend(self.params.zeta.iter());
        trace.params.extend([self.params.gamma0, self.params.gamma1, self.params.phi]);
        if let Some(d) = self.params.delta {
            trace.params.push(d);
        }
        trace.accepts.extend_from_slice(&self.last_accept);
    }

    pub fn current_draw(&self) -> PosteriorDraw {
        PosteriorDraw {
            params: self.params.clone(),
            states: self.states.clone(),
        }
    }

    pub fn run<R: Rng + ?Sized>(mut self, rng: &mut R) -> Result<ChainOutput> {
        let cfg = self.config.clone();
        let (n, k) = (self.layer.n_nodes, self.k);
        let mut trace = cfg.record_trace.then(|| {
            let (p, a) = self.param_names();
            RawTrace {
                params: Vec::with_capacity(cfg.n_iter * p.len()),
                accepts: Vec::with_capacity(cfg.n_iter * a.len()),
                param_names: p,
                accept_names: a,
            }
        });
        let mut tallies = vec![0u64; self.last_accept.len()];
        let mut draws = Vec::with_capacity(cfg.n_retained());
        let mut ll_c = Vec::with_capacity(cfg.n_retained());
        let mut ll_n = Vec::with_capacity(cfg.n_retained());
        for h in 1..=cfg.n_iter {
            self.step(rng)?;
            if let Some(tr) = trace.as_mut() {
                self.push_trace(tr);
            }
            if h > cfg.burn_in {
                for (t, f) in tallies.iter_mut().zip(&self.last_accept) {
                    *t += *f as u64;
                }
                if (h - cfg.burn_in) % cfg.thin == 0 {
                    let (net, lean, trans) = self.log_lik_parts();
                    ll_c.push(net + lean + trans);
                    ll_n.push(net);
                    draws.push(self.current_draw());
                }
            }
        }
        let post = (cfg.n_iter - cfg.burn_in) as f64;
        let rate = |range: std::ops::Range<usize>| {
            if range.is_empty() {
                return f64::NAN;
            }
            let len = range.len() as f64;
            tallies[range].iter().map(|&c| c as f64 / post).sum::<f64>() / len
        };
        let acceptance = AcceptanceSummary {
            alpha: rate(0..n),
            zeta: rate(n..n + n * k),
            gamma: rate(n * (1 + k)..n * (1 + k) + 1),
            phi: rate(n * (1 + k) + 1..n * (1 + k) + 2),
            delta: self.params.delta.map(|_| rate(n * (1 + k) + 2..n * (1 + k) + 3)),
        };
        Ok(ChainOutput {
            draws,
            loglik_complete: ll_c,
            loglik_network: ll_n,
            acceptance,
            trace,
            config: cfg,
            priors: self.priors,
        })
    }
}

impl From<Vec<usize>> for StateSequence {
    fn from(states: Vec<usize>) -> Self {
        StateSequence { states }
    }
}

pub fn run_chain_with_rng<R: Rng + ?Sized>(
    layer: &Layer,
    priors: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    let sampler = Sampler::initialize(layer.clone(), priors.clone(), config.clone(), rng)?;
    sampler.run(rng)
}

/// Runs one chain on the configured seed and stream.
pub fn run_chain(layer: &Layer, priors: &PriorSpec, config: &McmcConfig) -> Result<ChainOutput> {
    let mut rng = layer_rng(config.seed, config.stream);
    run_chain_with_rng(layer, priors, config, &mut rng)
}

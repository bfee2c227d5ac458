//! Domain types and likelihood arithmetic shared by the simulator, the sampler
//! and the model-comparison code.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{validation, Result};

/// Leaning values are clamped to `[LEANING_EPS, 1 - LEANING_EPS]`.
pub const LEANING_EPS: f64 = 1e-6;

pub fn clamp_leaning(l: f64) -> Result<f64> {
    if !l.is_finite() || !(0.0..=1.0).contains(&l) {
        return validation(format!("leaning value {l} outside [0, 1]"));
    }
    Ok(l.clamp(LEANING_EPS, 1.0 - LEANING_EPS))
}

/// One observed network: weights are stored as `[t, i, j]`, leaning as `[t, i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_nodes: usize,
    pub n_periods: usize,
    pub weights: Array3<u64>,
    pub leaning: Array2<f64>,
    pub node_names: Vec<String>,
    pub exposure: Option<Vec<f64>>,
}

impl Layer {
    /// Validates symmetry, clamps leaning values and checks exposure positivity.
    /// Diagonal weights are zeroed since they are never part of the model.
    pub fn new(
        mut weights: Array3<u64>,
        leaning: Array2<f64>,
        node_names: Vec<String>,
        exposure: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (t_len, n, n2) = weights.dim();
        if n != n2 {
            return validation(format!("weight matrices are {n}x{n2}, expected square"));
        }
        if leaning.dim() != (t_len, n) {
            return validation(format!(
                "leaning has shape {:?}, expected ({t_len}, {n})",
                leaning.dim()
            ));
        }
        if node_names.len() != n {
            return validation(format!("{} node names for {n} nodes", node_names.len()));
        }
        for t in 0..t_len {
            for i in 0..n {
                weights[[t, i, i]] = 0;
                for j in (i + 1)..n {
                    if weights[[t, i, j]] != weights[[t, j, i]] {
                        return validation(format!(
                            "asymmetric weight at t={}, ({}, {})",
                            t + 1,
                            node_names[i],
                            node_names[j]
                        ));
                    }
                }
            }
        }
        let mut leaning = leaning;
        for v in leaning.iter_mut() {
            *v = clamp_leaning(*v)?;
        }
        if let Some(e) = &exposure {
            if e.len() != t_len {
                return validation(format!("exposure has {} entries for {t_len} periods", e.len()));
            }
            if e.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return validation("exposure must be strictly positive");
            }
        }
        Ok(Layer {
            n_nodes: n,
            n_periods: t_len,
            weights,
            leaning,
            node_names,
            exposure,
        })
    }

    /// De-meaned log exposure per period, when exposure is present.
    pub fn exposure_offsets(&self) -> Option<Vec<f64>> {
        self.exposure.as_ref().map(|e| {
            let logs: Vec<f64> = e.iter().map(|v| v.ln()).collect();
            let mean = logs.iter().sum::<f64>() / logs.len().max(1) as f64;
            logs.into_iter().map(|v| v - mean).collect()
        })
    }

    pub fn strength(&self, t: usize, i: usize) -> u64 {
        (0..self.n_nodes)
            .filter(|&j| j != i)
            .map(|j| self.weights[[t, i, j]])
            .sum()
    }

    pub fn strengths(&self, t: usize) -> Vec<u64> {
        (0..self.n_nodes).map(|i| self.strength(t, i)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkPanel {
    pub layers: Vec<Layer>,
}

/// Parameters of one layer. `zeta` is `N x K` (latent dimension fixed at one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: Vec<f64>,
    pub zeta: Array2<f64>,
    pub sigma2: Vec<f64>,
    pub gamma0: f64,
    pub gamma1: f64,
    pub phi: f64,
    pub trans: Array2<f64>,
    pub beta: f64,
    pub delta: Option<f64>,
}

impl ModelParams {
    pub fn n_nodes(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_states(&self) -> usize {
        self.sigma2.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        let k = self.sigma2.len();
        if k == 0 {
            return validation("at least one state is required");
        }
        if self.zeta.dim() != (n, k) {
            return validation(format!("zeta has shape {:?}, expected ({n}, {k})", self.zeta.dim()));
        }
        if self.trans.dim() != (k, k) {
            return validation(format!("trans has shape {:?}, expected ({k}, {k})", self.trans.dim()));
        }
        if self.sigma2.iter().any(|s| !(*s > 0.0)) {
            return validation("sigma2 must be positive");
        }
        if !(self.phi > 0.0) || !(self.beta > 0.0) {
            return validation("phi and beta must be positive");
        }
        validate_stochastic(&self.trans)?;
        let finite = self.alpha.iter().chain(self.zeta.iter()).all(|v| v.is_finite())
            && self.gamma0.is_finite()
            && self.gamma1.is_finite()
            && self.delta.is_none_or(|d| d.is_finite());
        if !finite {
            return validation("parameters must be finite");
        }
        Ok(())
    }
}

pub fn validate_stochastic(trans: &Array2<f64>) -> Result<()> {
    for (r, row) in trans.rows().into_iter().enumerate() {
        if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return validation(format!("transition row {} has invalid entries", r + 1));
        }
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-12 {
            return validation(format!("transition row {} sums to {s}", r + 1));
        }
    }
    Ok(())
}

/// Hidden regime path. States are stored zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub states: Vec<usize>,
}

impl StateSequence {
    pub fn new(states: Vec<usize>, n_states: usize) -> Result<Self> {
        if let Some(s) = states.iter().find(|&&s| s >= n_states) {
            return validation(format!("state {} outside 1..={n_states}", s + 1));
        }
        Ok(StateSequence { states })
    }

    pub fn constant(t: usize, state: usize) -> Self {
        StateSequence { states: vec![state; t] }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `T x K` one-hot matrix.
    pub fn indicators(&self, n_states: usize) -> Array2<u8> {
        let mut xi = Array2::zeros((self.states.len(), n_states));
        for (t, &s) in self.states.iter().enumerate() {
            xi[[t, s]] = 1;
        }
        xi
    }

    /// Transition counts `n[l][k]` over consecutive periods.
    pub fn transition_counts(&self, n_states: usize) -> Array2<u64> {
        let mut c = Array2::zeros((n_states, n_states));
        for w in self.states.windows(2) {
            c[[w[0], w[1]]] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub sigma_alpha2: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub b_gamma0: f64,
    pub b_gamma1: f64,
    pub a_phi: f64,
    pub b_phi: f64,
    pub omega: Vec<f64>,
    /// Variance of the normal prior on the exposure coefficient.
    pub sigma_delta2: f64,
}

impl PriorSpec {
    /// Weakly informative defaults for `k` states.
    pub fn weak(k: usize) -> Self {
        PriorSpec {
            sigma_alpha2: 225.0,
            a_sigma: 0.1,
            b_sigma: 0.1,
            b_gamma0: 225.0,
            b_gamma1: 225.0,
            a_phi: 0.01,
            b_phi: 0.01,
            omega: vec![2.0; k],
            sigma_delta2: 225.0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let scalars = [
            self.sigma_alpha2,
            self.a_sigma,
            self.b_sigma,
            self.b_gamma0,
            self.b_gamma1,
            self.a_phi,
            self.b_phi,
            self.sigma_delta2,
        ];
        if scalars.iter().chain(self.omega.iter()).any(|v| !(v.is_finite() && *v > 0.0)) {
            return validation("prior hyperparameters must be positive");
        }
        if self.omega.len() != k {
            return validation(format!("omega has {} entries for {k} states", self.omega.len()));
        }
        Ok(())
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_intensity(
    alpha_i: f64,
    alpha_j: f64,
    beta: f64,
    x_i: f64,
    x_j: f64,
    exposure_term: Option<f64>,
) -> Result<f64> {
    if !(beta > 0.0) {
        return validation(format!("beta must be positive, got {beta}"));
    }
    let e = exposure_term.unwrap_or(0.0);
    if ![alpha_i, alpha_j, x_i, x_j, e].iter().all(|v| v.is_finite()) {
        return validation("non-finite input to log_intensity");
    }
    let d = x_i - x_j;
    Ok(alpha_i + alpha_j - beta * d * d + e)
}

/// `ln(y!)`.
pub fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

pub fn poisson_log_pmf(y: u64, log_lambda: f64) -> Result<f64> {
    if !log_lambda.is_finite() {
        return validation(format!("non-finite log intensity {log_lambda}"));
    }
    Ok(y as f64 * log_lambda - log_lambda.exp() - ln_factorial(y))
}

/// Beta shape parameters `(a, b)` implied by the leaning regression.
pub fn beta_shapes(gamma0: f64, gamma1: f64, x: f64, phi: f64) -> (f64, f64) {
    let eta = gamma0 + gamma1 * x;
    (logistic(eta) * phi, logistic(-eta) * phi)
}

pub fn beta_leaning_log_pdf(l: f64, gamma0: f64, gamma1: f64, x: f64, phi: f64) -> Result<f64> {
    let l = clamp_leaning(l)?;
    if !(phi > 0.0) {
        return validation(format!("phi must be positive, got {phi}"));
    }
    let (a, b) = beta_shapes(gamma0, gamma1, x, phi);
    Ok(beta_log_pdf_shapes(l.ln(), (-l).ln_1p(), a, b, phi))
}

/// Beta log density from precomputed `ln l`, `ln(1 - l)` and shapes with `a + b = phi`.
#[inline]
pub(crate) fn beta_log_pdf_shapes(ln_l: f64, ln_1ml: f64, a: f64, b: f64, phi: f64) -> f64 {
    ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ln_l + (b - 1.0) * ln_1ml
}

fn check_shapes(layer: &Layer, params: &ModelParams, states: &StateSequence) -> Result<()> {
    if params.alpha.len() != layer.n_nodes || params.zeta.nrows() != layer.n_nodes {
        return validation(format!(
            "parameters sized for {} nodes, layer has {}",
            params.alpha.len(),
            layer.n_nodes
        ));
    }
    if states.len() != layer.n_periods {
        return validation(format!(
            "state path has {} periods, layer has {}",
            states.len(),
            layer.n_periods
        ));
    }
    let k = params.n_states();
    if params.zeta.ncols() != k || params.trans.dim() != (k, k) {
        return validation("inconsistent number of states in parameters");
    }
    if states.states.iter().any(|&s| s >= k) {
        return validation("state path references a state outside the model");
    }
    Ok(())
}

fn exposure_term(params: &ModelParams, offsets: &Option<Vec<f64>>, t: usize) -> Option<f64> {
    match (params.delta, offsets) {
        (Some(d), Some(o)) => Some(d * o[t]),
        _ => None,
    }
}

/// Poisson terms only.
pub fn network_only_log_lik(layer: &Layer, params: &ModelParams, states: &StateSequence) -> Result<f64> {
    check_shapes(layer, params, states)?;
    let offsets = layer.exposure_offsets();
    let mut total = 0.0;
    for t in 0..layer.n_periods {
        let s = states.states[t];
        let e = exposure_term(params, &offsets, t);
        for i in 0..layer.n_nodes {
            for j in (i + 1)..layer.n_nodes {
                let ll = log_intensity(
                    params.alpha[i],
                    params.alpha[j],
                    params.beta,
                    params.zeta[[i, s]],
                    params.zeta[[j, s]],
                    e,
                )?;
                total += poisson_log_pmf(layer.weights[[t, i, j]], ll)?;
            }
        }
    }
    Ok(total)
}

/// Beta terms for every observed leaning value.
pub fn leaning_log_lik(layer: &Layer, params: &ModelParams, states: &StateSequence) -> Result<f64> {
    check_shapes(layer, params, states)?;
    let mut total = 0.0;
    for t in 0..layer.n_periods {
        let s = states.states[t];
        for i in 0..layer.n_nodes {
            total += beta_leaning_log_pdf(
                layer.leaning[[t, i]],
                params.gamma0,
                params.gamma1,
                params.zeta[[i, s]],
                params.phi,
            )?;
        }
    }
    Ok(total)
}

/// Sum of `ln q[s_{t-1}, s_t]` for `t >= 2`; the initial state carries no term.
pub fn transition_log_lik(params: &ModelParams, states: &StateSequence) -> f64 {
    states
        .states
        .windows(2)
        .map(|w| params.trans[[w[0], w[1]]].ln())
        .sum()
}

pub fn complete_data_log_lik(layer: &Layer, params: &ModelParams, states: &StateSequence) -> Result<f64> {
    let net = network_only_log_lik(layer, params, states)?;
    let lean = leaning_log_lik(layer, params, states)?;
    Ok(net + lean + transition_log_lik(params, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_layer() -> Layer {
        let mut w = Array3::zeros((2, 3, 3));
        let vals = [(0, 0, 1, 2u64), (0, 0, 2, 0), (0, 1, 2, 5), (1, 0, 1, 1), (1, 0, 2, 3), (1, 1, 2, 0)];
        for &(t, i, j, v) in &vals {
            w[[t, i, j]] = v;
            w[[t, j, i]] = v;
        }
        let lean = array![[0.2, 0.5, 0.9], [0.3, 0.45, 0.8]];
        Layer::new(w, lean, vec!["a".into(), "b".into(), "c".into()], None).unwrap()
    }

    fn tiny_params() -> ModelParams {
        ModelParams {
            alpha: vec![0.3, -0.2, 0.5],
            zeta: array![[-0.4, -1.0], [0.1, 0.2], [0.6, 1.1]],
            sigma2: vec![0.5, 1.5],
            gamma0: -0.1,
            gamma1: 0.7,
            phi: 12.0,
            trans: array![[0.8, 0.2], [0.3, 0.7]],
            beta: 1.0,
            delta: None,
        }
    }

    // Straight summation without the shared helpers.
    fn naive_oracle(layer: &Layer, p: &ModelParams, s: &[usize]) -> (f64, f64, f64) {
        let mut pois = 0.0;
        let mut beta = 0.0;
        for t in 0..layer.n_periods {
            for i in 0..layer.n_nodes {
                for j in 0..layer.n_nodes {
                    if j <= i {
                        continue;
                    }
                    let x = p.zeta[[i, s[t]]] - p.zeta[[j, s[t]]];
                    let lam = (p.alpha[i] + p.alpha[j] - p.beta * x * x).exp();
                    let y = layer.weights[[t, i, j]] as f64;
                    let mut fact = 1.0;
                    for m in 1..=(y as u64) {
                        fact *= m as f64;
                    }
                    pois += (lam.powf(y) * (-lam).exp() / fact).ln();
                }
                let mu = 1.0 / (1.0 + (-(p.gamma0 + p.gamma1 * p.zeta[[i, s[t]]])).exp());
                let (a, b) = (mu * p.phi, (1.0 - mu) * p.phi);
                let l = layer.leaning[[t, i]];
                beta += ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * l.ln()
                    + (b - 1.0) * (1.0 - l).ln();
            }
        }
        let mut tr = 0.0;
        for t in 1..s.len() {
            tr += p.trans[[s[t - 1], s[t]]].ln();
        }
        (pois, beta, tr)
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(50.0) - 1.0).abs() < 1e-12);
        // 1 / (1 + e^{0.1}) evaluated at 30 significant digits
        assert!((logistic(-0.1) - 0.475020812521060188).abs() < 1e-15);
        assert!((logistic(-3.0) + logistic(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_intensity_examples() {
        for c in [-2.0, 0.0, 0.3, 5.0] {
            assert_eq!(log_intensity(0.0, 0.0, 1.0, c, c, None).unwrap(), 0.0);
        }
        assert_eq!(log_intensity(1.0, 1.0, 1.0, 0.5, -0.5, None).unwrap(), 1.0);
        let base = log_intensity(0.2, -0.4, 2.0, 0.1, 0.9, None).unwrap();
        assert_eq!(log_intensity(0.2, -0.4, 2.0, 0.1, 0.9, Some(0.0)).unwrap(), base);
        assert!(log_intensity(0.0, 0.0, 0.0, 0.0, 0.0, None).is_err());
        assert!(log_intensity(f64::NAN, 0.0, 1.0, 0.0, 0.0, None).is_err());
    }

    #[test]
    fn log_intensity_translation_and_reflection() {
        let v = log_intensity(0.1, 0.2, 1.3, 0.4, -0.7, None).unwrap();
        let shifted = log_intensity(0.1, 0.2, 1.3, 0.4 + 3.3, -0.7 + 3.3, None).unwrap();
        let flipped = log_intensity(0.1, 0.2, 1.3, -0.4, 0.7, None).unwrap();
        assert!((v - shifted).abs() < 1e-12);
        assert_eq!(v, flipped);
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_log_pmf(0, 0.0).unwrap(), -1.0);
        assert_eq!(poisson_log_pmf(1, 0.0).unwrap(), -1.0);
        // 300 ln 280 - 280 - ln(300!) evaluated at 40 digits
        let reference = -4.468_968_994_293_106_f64;
        assert!((poisson_log_pmf(300, 280f64.ln()).unwrap() - reference).abs() < 1e-9);
        assert!(poisson_log_pmf(3, f64::INFINITY).is_err());
    }

    #[test]
    fn poisson_sums_to_one() {
        for lam in [0.5f64, 3.0, 40.0, 900.0, 1e4] {
            let upper = (lam + 20.0 * lam.sqrt()).ceil() as u64;
            let s: f64 = (0..=upper).map(|y| poisson_log_pmf(y, lam.ln()).unwrap().exp()).sum();
            assert!((s - 1.0).abs() < 1e-10, "lambda {lam}: {s}");
        }
    }

    #[test]
    fn beta_examples() {
        let lo = beta_leaning_log_pdf(0.3, 0.0, 0.0, 1.7, 8.0).unwrap();
        let hi = beta_leaning_log_pdf(0.7, 0.0, 0.0, 1.7, 8.0).unwrap();
        assert!((lo - hi).abs() < 1e-12);
        let (a, b) = beta_shapes(-0.1, 0.5, 0.0, 200.0);
        assert!((a - 95.004_162_504_212_04).abs() < 1e-9);
        assert!((b - 104.995_837_495_787_96).abs() < 1e-9);
        assert!((a + b - 200.0).abs() < 1e-12);
        let clamped = beta_leaning_log_pdf(1.0, 0.2, 0.1, 0.0, 3.0).unwrap();
        let edge = beta_leaning_log_pdf(1.0 - LEANING_EPS, 0.2, 0.1, 0.0, 3.0).unwrap();
        assert_eq!(clamped, edge);
        assert!(beta_leaning_log_pdf(1.5, 0.0, 0.0, 0.0, 3.0).is_err());
        assert!(beta_leaning_log_pdf(f64::NAN, 0.0, 0.0, 0.0, 3.0).is_err());
    }

    #[test]
    fn beta_integrates_to_one() {
        // trapezoid in u = logit(l), where the integrand f(l) l (1 - l) decays exponentially
        let n = 10_001;
        let (lo, hi) = (-60.0, 60.0);
        let h = (hi - lo) / (n as f64 - 1.0);
        for phi in [2.0, 20.0, 200.0] {
            let (a, b) = beta_shapes(0.3, -0.4, 0.5, phi);
            let mut s = 0.0;
            for m in 0..n {
                let u: f64 = lo + m as f64 * h;
                let ln_l = -(-u).exp().ln_1p();
                let ln_1ml = -u.exp().ln_1p();
                let w = if m == 0 || m == n - 1 { 0.5 } else { 1.0 };
                s += w * (beta_log_pdf_shapes(ln_l, ln_1ml, a, b, phi) + ln_l + ln_1ml).exp();
            }
            s *= h;
            assert!((s - 1.0).abs() < 1e-6, "phi {phi}: {s}");
        }
    }

    #[test]
    fn complete_data_matches_naive_sum() {
        let layer = tiny_layer();
        let p = tiny_params();
        let s = StateSequence::new(vec![0, 1], 2).unwrap();
        let (pois, beta, tr) = naive_oracle(&layer, &p, &s.states);
        let got = complete_data_log_lik(&layer, &p, &s).unwrap();
        assert!((got - (pois + beta + tr)).abs() < 1e-10);
        let net = network_only_log_lik(&layer, &p, &s).unwrap();
        assert!((net - pois).abs() < 1e-10);
        let lean = leaning_log_lik(&layer, &p, &s).unwrap();
        assert!((got - lean - transition_log_lik(&p, &s) - net).abs() < 1e-10);
    }

    #[test]
    fn single_state_has_no_transition_term() {
        let mut p = tiny_params();
        p.zeta = p.zeta.slice(ndarray::s![.., 0..1]).to_owned();
        p.sigma2 = vec![1.0];
        p.trans = array![[1.0]];
        let s = StateSequence::constant(2, 0);
        assert_eq!(transition_log_lik(&p, &s), 0.0);
        let layer = tiny_layer();
        let total = complete_data_log_lik(&layer, &p, &s).unwrap();
        let parts = network_only_log_lik(&layer, &p, &s).unwrap() + leaning_log_lik(&layer, &p, &s).unwrap();
        assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn two_node_single_period() {
        let w = Array3::zeros((1, 2, 2));
        let lean = array![[0.3, 0.6]];
        let layer = Layer::new(w, lean, vec!["a".into(), "b".into()], None).unwrap();
        let p = ModelParams {
            alpha: vec![0.0, 0.0],
            zeta: array![[0.4], [0.4]],
            sigma2: vec![1.0],
            gamma0: 0.0,
            gamma1: 0.0,
            phi: 4.0,
            trans: array![[1.0]],
            beta: 1.0,
            delta: None,
        };
        let s = StateSequence::constant(1, 0);
        assert_eq!(network_only_log_lik(&layer, &p, &s).unwrap(), -1.0);
        // Beta(2, 2) density is 6 l (1 - l)
        let beta = (6.0f64 * 0.3 * 0.7).ln() + (6.0f64 * 0.6 * 0.4).ln();
        let total = complete_data_log_lik(&layer, &p, &s).unwrap();
        assert!((total - (-1.0 + beta)).abs() < 1e-12);
    }

    #[test]
    fn additive_over_periods() {
        let layer = tiny_layer();
        let p = tiny_params();
        let s = StateSequence::new(vec![1, 1], 2).unwrap();
        let whole = network_only_log_lik(&layer, &p, &s).unwrap() + leaning_log_lik(&layer, &p, &s).unwrap();
        let mut parts = 0.0;
        for t in 0..2 {
            let sub = Layer::new(
                layer.weights.slice(ndarray::s![t..t + 1, .., ..]).to_owned(),
                layer.leaning.slice(ndarray::s![t..t + 1, ..]).to_owned(),
                layer.node_names.clone(),
                None,
            )
            .unwrap();
            parts += complete_data_log_lik(&sub, &p, &StateSequence::constant(1, 1)).unwrap();
        }
        assert!((whole - parts).abs() < 1e-10);
    }

    #[test]
    fn zero_node_layer() {
        let layer = Layer::new(Array3::zeros((3, 0, 0)), Array2::zeros((3, 0)), vec![], None).unwrap();
        let p = ModelParams {
            alpha: vec![],
            zeta: Array2::zeros((0, 1)),
            sigma2: vec![1.0],
            gamma0: 0.0,
            gamma1: 0.0,
            phi: 1.0,
            trans: array![[1.0]],
            beta: 1.0,
            delta: None,
        };
        assert_eq!(network_only_log_lik(&layer, &p, &StateSequence::constant(3, 0)).unwrap(), 0.0);
    }

    #[test]
    fn layer_validation() {
        let mut w = Array3::zeros((1, 2, 2));
        w[[0, 0, 1]] = 1;
        let lean = array![[0.5, 0.5]];
        assert!(Layer::new(w.clone(), lean.clone(), vec!["a".into(), "b".into()], None).is_err());
        w[[0, 1, 0]] = 1;
        w[[0, 0, 0]] = 9;
        let l = Layer::new(w.clone(), lean.clone(), vec!["a".into(), "b".into()], None).unwrap();
        assert_eq!(l.weights[[0, 0, 0]], 0);
        assert!(Layer::new(w.clone(), lean.clone(), vec!["a".into(), "b".into()], Some(vec![0.0])).is_err());
        let clamped = Layer::new(w, array![[0.0, 1.0]], vec!["a".into(), "b".into()], None).unwrap();
        assert_eq!(clamped.leaning[[0, 0]], LEANING_EPS);
        assert_eq!(clamped.leaning[[0, 1]], 1.0 - LEANING_EPS);
    }

    #[test]
    fn exposure_offsets_are_demeaned() {
        let layer = Layer::new(
            Array3::zeros((3, 1, 1)),
            Array2::from_elem((3, 1), 0.5),
            vec!["a".into()],
            Some(vec![1.0, 10.0, 100.0]),
        )
        .unwrap();
        let o = layer.exposure_offsets().unwrap();
        assert!(o.iter().sum::<f64>().abs() < 1e-12);
        assert!((o[2] - o[0] - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn indicators_and_counts() {
        let s = StateSequence::new(vec![0, 1, 1, 0], 2).unwrap();
        let xi = s.indicators(2);
        for t in 0..4 {
            assert_eq!(xi.row(t).iter().map(|&v| v as u32).sum::<u32>(), 1);
            assert_eq!(xi[[t, s.states[t]]], 1);
        }
        assert_eq!(s.transition_counts(2), array![[0, 1], [1, 1]]);
        assert!(StateSequence::new(vec![2], 2).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = tiny_params();
        assert!(p.validate().is_ok());
        p.trans[[0, 0]] = 0.7;
        assert!(p.validate().is_err());
        let mut p = tiny_params();
        p.phi = 0.0;
        assert!(p.validate().is_err());
        assert!(PriorSpec::weak(2).validate(2).is_ok());
        assert!(PriorSpec::weak(2).validate(3).is_err());
    }
}

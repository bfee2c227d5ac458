//! Forward simulation of regime paths, latent coordinates, networks and leaning proxies.

use ndarray::{Array2, Array3};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{validation, MslsError, Result};
use crate::model::{beta_shapes, clamp_leaning, Layer, ModelParams, StateSequence};

/// Generator for layer `stream` of a run seeded with `seed`.
pub fn layer_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub n_nodes: usize,
    pub n_periods: usize,
    pub n_states: usize,
    /// `centers[k][i]`: mean of node `i`'s coordinate in state `k`.
    pub centers: Vec<Vec<f64>>,
    /// Standard deviation of coordinates around their centers, per state.
    pub sigma_state: Vec<f64>,
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub trans: Vec<Vec<f64>>,
    pub phi: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub beta: f64,
    /// Zero-based state at the first period.
    pub init_state: usize,
    pub seed: u64,
}

impl Default for SimulationScenario {
    /// Twenty outlets in two groups observed for 100 periods, switching between a
    /// low-polarization state (centers at -0.25/+0.25) and a high one (-0.75/+0.75).
    fn default() -> Self {
        let n = 20;
        let group = |c: f64| (0..n).map(|i| if i < n / 2 { -c } else { c }).collect::<Vec<_>>();
        SimulationScenario {
            n_nodes: n,
            n_periods: 100,
            n_states: 2,
            centers: vec![group(0.25), group(0.75)],
            sigma_state: vec![0.15, 0.15],
            alpha_mean: 0.0,
            alpha_sd: 2.0,
            trans: vec![vec![0.95, 0.05], vec![0.05, 0.95]],
            phi: 200.0,
            gamma0: -0.1,
            gamma1: 0.5,
            beta: 1.0,
            init_state: 0,
            seed: 1,
        }
    }
}

impl SimulationScenario {
    pub fn trans_matrix(&self) -> Result<Array2<f64>> {
        let k = self.n_states;
        if self.trans.len() != k || self.trans.iter().any(|r| r.len() != k) {
            return validation(format!("trans must be {k}x{k}"));
        }
        Ok(Array2::from_shape_fn((k, k), |(a, b)| self.trans[a][b]))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_nodes, self.n_states);
        if k == 0 {
            return validation("n_states must be at least 1");
        }
        if self.centers.len() != k || self.centers.iter().any(|c| c.len() != n) {
            return validation(format!("centers must hold {k} rows of {n} values"));
        }
        if self.sigma_state.len() != k || self.sigma_state.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return validation(format!("sigma_state must hold {k} nonnegative values"));
        }
        if !(self.phi > 0.0 && self.beta > 0.0 && self.alpha_sd >= 0.0) {
            return validation("phi and beta must be positive, alpha_sd nonnegative");
        }
        if self.init_state >= k {
            return validation(format!("init_state {} outside the {k} states", self.init_state));
        }
        crate::model::validate_stochastic(&self.trans_matrix()?)
    }
}

/// Draws an index from unnormalized nonnegative weights.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn simulate_state_path<R: Rng + ?Sized>(
    trans: &Array2<f64>,
    n_periods: usize,
    init_state: usize,
    rng: &mut R,
) -> Result<StateSequence> {
    let k = trans.nrows();
    if trans.ncols() != k || init_state >= k {
        return validation("transition matrix must be square and contain the initial state");
    }
    for (r, row) in trans.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if !s.is_finite() || row.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return validation(format!("transition row {} is not a probability vector", r + 1));
        }
    }
    let mut states = Vec::with_capacity(n_periods);
    let mut cur = init_state;
    for t in 0..n_periods {
        if t > 0 {
            let row: Vec<f64> = trans.row(cur).to_vec();
            cur = sample_categorical(&row, rng);
        }
        states.push(cur);
    }
    StateSequence::new(states, k)
}

/// Poisson draw that tolerates an underflowed intensity.
pub(crate) fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if lambda <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(lambda).map_err(|e| MslsError::Numerical(format!("poisson({lambda}): {e}")))?;
    Ok(p.sample(rng) as u64)
}

pub(crate) fn leaning_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let d = Beta::new(a, b).map_err(|e| MslsError::Numerical(format!("beta({a}, {b}): {e}")))?;
    clamp_leaning(d.sample(rng))
}

/// Simulates network weights and leaning given parameters and a state path.
pub fn simulate_observations<R: Rng + ?Sized>(
    params: &ModelParams,
    states: &StateSequence,
    node_names: Vec<String>,
    rng: &mut R,
) -> Result<Layer> {
    let n = params.n_nodes();
    let t_len = states.len();
    let mut w = Array3::zeros((t_len, n, n));
    let mut lean = Array2::zeros((t_len, n));
    for t in 0..t_len {
        let s = states.states[t];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = params.zeta[[i, s]] - params.zeta[[j, s]];
                let lam = (params.alpha[i] + params.alpha[j] - params.beta * d * d).exp();
                let y = poisson_draw(lam, rng)?;
                w[[t, i, j]] = y;
                w[[t, j, i]] = y;
            }
        }
        for i in 0..n {
            let (a, b) = beta_shapes(params.gamma0, params.gamma1, params.zeta[[i, s]], params.phi);
            lean[[t, i]] = leaning_draw(a, b, rng)?;
        }
    }
    Layer::new(w, lean, node_names, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLayer {
    pub layer: Layer,
    pub params: ModelParams,
    pub states: StateSequence,
}

/// Ground truth sidecar written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: SimulationScenario,
    pub params: ModelParams,
    /// One-based states, one per period.
    pub states: Vec<usize>,
}

impl SimulatedLayer {
    pub fn truth(&self, scenario: &SimulationScenario) -> GroundTruth {
        GroundTruth {
            scenario: scenario.clone(),
            params: self.params.clone(),
            states: self.states.states.iter().map(|s| s + 1).collect(),
        }
    }
}

pub fn default_node_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("n{i}")).collect()
}

pub fn simulate_layer_with<R: Rng + ?Sized>(scenario: &SimulationScenario, rng: &mut R) -> Result<SimulatedLayer> {
    scenario.validate()?;
    let (n, k) = (scenario.n_nodes, scenario.n_states);
    let trans = scenario.trans_matrix()?;
    let states = simulate_state_path(&trans, scenario.n_periods, scenario.init_state, rng)?;
    let alpha_dist = Normal::new(scenario.alpha_mean, scenario.alpha_sd)
        .map_err(|e| MslsError::Validation(e.to_string()))?;
    let alpha: Vec<f64> = (0..n).map(|_| alpha_dist.sample(rng)).collect();
    let mut zeta = Array2::zeros((n, k));
    for s in 0..k {
        let sd = scenario.sigma_state[s];
        for i in 0..n {
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            zeta[[i, s]] = scenario.centers[s][i] + sd * z;
        }
    }
    let params = ModelParams {
        alpha,
        zeta,
        sigma2: scenario.sigma_state.iter().map(|s| s * s).collect(),
        gamma0: scenario.gamma0,
        gamma1: scenario.gamma1,
        phi: scenario.phi,
        trans,
        beta: scenario.beta,
        delta: None,
    };
    let layer = simulate_observations(&params, &states, default_node_names(n), rng)?;
    Ok(SimulatedLayer { layer, params, states })
}

/// Simulates with the scenario's own seed on stream 0.
pub fn simulate_layer(scenario: &SimulationScenario) -> Result<SimulatedLayer> {
    let mut rng = layer_rng(scenario.seed, 0);
    simulate_layer_with(scenario, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logistic;
    use ndarray::array;

    #[test]
    fn identity_transitions_are_absorbing() {
        let mut rng = layer_rng(3, 0);
        let p = simulate_state_path(&Array2::eye(3), 50, 2, &mut rng).unwrap();
        assert!(p.states.iter().all(|&s| s == 2));
        let one = simulate_state_path(&array![[1.0]], 20, 0, &mut rng).unwrap();
        assert!(one.states.iter().all(|&s| s == 0));
    }

    #[test]
    fn persistence_frequency() {
        let mut rng = layer_rng(11, 0);
        let q = array![[0.95, 0.05], [0.05, 0.95]];
        let p = simulate_state_path(&q, 10_000, 0, &mut rng).unwrap();
        let c = p.transition_counts(2);
        for l in 0..2 {
            let row = (c[[l, 0]] + c[[l, 1]]) as f64;
            let stay = c[[l, l]] as f64 / row;
            assert!((stay - 0.95).abs() < 0.01, "row {l}: {stay}");
        }
    }

    #[test]
    fn nan_row_rejected() {
        let mut rng = layer_rng(1, 0);
        let q = array![[f64::NAN, 0.5], [0.5, 0.5]];
        assert!(simulate_state_path(&q, 5, 0, &mut rng).is_err());
    }

    #[test]
    fn concentrated_leaning() {
        let sc = SimulationScenario {
            phi: 1e6,
            ..Default::default()
        };
        let sim = simulate_layer(&sc).unwrap();
        let mut close = 0usize;
        let total = sim.layer.n_periods * sim.layer.n_nodes;
        for t in 0..sim.layer.n_periods {
            let s = sim.states.states[t];
            for i in 0..sim.layer.n_nodes {
                let mu = logistic(sc.gamma0 + sc.gamma1 * sim.params.zeta[[i, s]]);
                if (sim.layer.leaning[[t, i]] - mu).abs() <= 0.01 {
                    close += 1;
                }
            }
        }
        assert!(close as f64 >= 0.99 * total as f64);
    }

    #[test]
    fn unit_intensity_network() {
        let n = 12;
        let sc = SimulationScenario {
            n_nodes: n,
            n_periods: 60,
            centers: vec![vec![0.3; n], vec![0.3; n]],
            sigma_state: vec![0.0, 0.0],
            alpha_mean: 0.0,
            alpha_sd: 0.0,
            ..Default::default()
        };
        let sim = simulate_layer(&sc).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let cells = sc.n_periods as f64 * pairs;
        let mut sum = 0u64;
        for t in 0..sc.n_periods {
            for i in 0..n {
                for j in (i + 1)..n {
                    sum += sim.layer.weights[[t, i, j]];
                }
            }
        }
        let mean = sum as f64 / cells;
        assert!((mean - 1.0).abs() <= 3.0 * (1.0 / cells).sqrt(), "mean weight {mean}");
    }

    #[test]
    fn deterministic_and_symmetric() {
        let sc = SimulationScenario::default();
        let a = simulate_layer(&sc).unwrap();
        let b = simulate_layer(&sc).unwrap();
        assert_eq!(a, b);
        let w = &a.layer.weights;
        for t in 0..sc.n_periods {
            for i in 0..sc.n_nodes {
                for j in 0..sc.n_nodes {
                    assert_eq!(w[[t, i, j]], w[[t, j, i]]);
                }
            }
        }
        assert_eq!(a.states.states[0], 0);
        let other = simulate_layer(&SimulationScenario { seed: 2, ..sc }).unwrap();
        assert_ne!(a.layer.weights, other.layer.weights);
    }

    #[test]
    fn streams_differ() {
        let mut a = layer_rng(5, 0);
        let mut b = layer_rng(5, 1);
        let x: u64 = a.random();
        let y: u64 = b.random();
        assert_ne!(x, y);
    }

    #[test]
    fn scenario_validation() {
        let mut sc = SimulationScenario::default();
        sc.trans[0][0] = 0.5;
        assert!(sc.validate().is_err());
        let sc = SimulationScenario {
            init_state: 2,
            ..Default::default()
        };
        assert!(sc.validate().is_err());
    }
}

//! Closed-form moments of the nodal strength distribution and a Monte-Carlo oracle.
//!
//! All quantities are conditional on the previous regime `l`, whose transition
//! row is `q_row`. `alpha` follows the pairwise convention `alpha = alpha_i + alpha_j`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{validation, MslsError, Result};
use crate::generative::{poisson_draw, sample_categorical};

/// Upper bound on enumerated multi-indices.
pub const MAX_MULTI_INDICES: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthMomentSpec {
    pub n_nodes: usize,
    pub latent_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma2: Vec<f64>,
    pub q_row: Vec<f64>,
}

impl StrengthMomentSpec {
    pub fn single_state(n_nodes: usize, alpha: f64, beta: f64, sigma2: f64) -> Self {
        StrengthMomentSpec {
            n_nodes,
            latent_dim: 1,
            alpha,
            beta,
            sigma2: vec![sigma2],
            q_row: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.latent_dim == 0 {
            return validation("n_nodes and latent_dim must be at least 1");
        }
        if self.sigma2.is_empty() || self.sigma2.len() != self.q_row.len() {
            return validation("sigma2 and q_row must have the same nonzero length");
        }
        if !(self.beta > 0.0) || !self.alpha.is_finite() {
            return validation("beta must be positive and alpha finite");
        }
        if self.sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return validation("sigma2 must be nonnegative");
        }
        if self.q_row.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return validation("q_row must be nonnegative");
        }
        let s: f64 = self.q_row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return validation(format!("q_row sums to {s}"));
        }
        Ok(())
    }

    fn half_d(&self) -> f64 {
        self.latent_dim as f64 / 2.0
    }
}

/// First factorial moment of the strength given state `k`.
pub fn g_prime(spec: &StrengthMomentSpec, k: usize) -> f64 {
    let n1 = spec.n_nodes as f64 - 1.0;
    let sb = spec.sigma2[k] * spec.beta;
    n1 * spec.alpha.exp() * (4.0 * sb + 1.0).powf(-spec.half_d())
}

/// Second factorial moment of the strength given state `k`.
pub fn g_double_prime(spec: &StrengthMomentSpec, k: usize) -> f64 {
    let n = spec.n_nodes as f64;
    let sb = spec.sigma2[k] * spec.beta;
    let hd = spec.half_d();
    let e2a = (2.0 * spec.alpha).exp();
    e2a * (n - 1.0) * (8.0 * sb + 1.0).powf(-hd)
        + (n - 1.0) * (n - 2.0) * e2a * (2.0 * sb + 1.0).powf(-hd) * (6.0 * sb + 1.0).powf(-hd)
}

fn weighted<F: Fn(usize) -> f64>(spec: &StrengthMomentSpec, f: F) -> f64 {
    spec.q_row.iter().enumerate().map(|(k, q)| q * f(k)).sum()
}

pub fn expected_strength(spec: &StrengthMomentSpec) -> f64 {
    weighted(spec, |k| g_prime(spec, k))
}

pub fn strength_variance(spec: &StrengthMomentSpec) -> f64 {
    let mean = expected_strength(spec);
    let within = weighted(spec, |k| {
        let g1 = g_prime(spec, k);
        g_double_prime(spec, k) + g1 - g1 * g1
    });
    let between = weighted(spec, |k| (g_prime(spec, k) - mean).powi(2));
    within + between
}

pub fn strength_sd(spec: &StrengthMomentSpec) -> f64 {
    strength_variance(spec).max(0.0).sqrt()
}

/// Variance-to-mean ratio written as the mixture of per-state indices plus a
/// between-state correction `v`.
pub fn dispersion_index(spec: &StrengthMomentSpec) -> Result<f64> {
    let mut per_state = 0.0;
    let mut v_bar = 0.0;
    for (k, &q) in spec.q_row.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let g1 = g_prime(spec, k);
        if !(g1 > 0.0) {
            return Err(MslsError::Degenerate(format!(
                "first factorial moment is {g1} in state {}; dispersion undefined",
                k + 1
            )));
        }
        let vk = g_double_prime(spec, k) / g1;
        per_state += q * (1.0 + vk - g1);
        v_bar += q * vk;
    }
    let g1 = expected_strength(spec);
    let g2 = weighted(spec, |k| g_double_prime(spec, k));
    let v = g2 / g1 - v_bar;
    Ok(per_state + v)
}

/// Number of compositions of `m` into `parts` nonnegative parts.
pub fn composition_count(m: usize, parts: usize) -> f64 {
    if parts == 0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let (a, b) = ((m + parts - 1) as f64, (parts - 1) as f64);
    (ln_gamma(a + 1.0) - ln_gamma(b + 1.0) - ln_gamma(m as f64 + 1.0)).exp().round()
}

/// Calls `f` on every composition of `m` into `parts` parts, in reverse lexicographic order.
fn for_each_composition<F: FnMut(&[usize])>(m: usize, parts: usize, mut f: F) {
    if parts == 0 {
        if m == 0 {
            f(&[]);
        }
        return;
    }
    let mut h = vec![0usize; parts];
    h[0] = m;
    loop {
        f(&h);
        if h[parts - 1] == m {
            break;
        }
        let mut i = parts - 2;
        while h[i] == 0 {
            i -= 1;
        }
        let tail = h[parts - 1];
        h[parts - 1] = 0;
        h[i] -= 1;
        h[i + 1] = tail + 1;
    }
}

/// m-th factorial moment for one focal node, given log-weights `pair_alpha[j]`
/// (`alpha_i + alpha_j`) for each of its `N - 1` partners.
fn factorial_moment_node(pair_alpha: &[f64], beta: f64, sigma2: f64, latent_dim: usize, m: usize) -> Result<f64> {
    let parts = pair_alpha.len();
    let count = composition_count(m, parts);
    if count > MAX_MULTI_INDICES {
        return Err(MslsError::TooManyTerms {
            count,
            limit: MAX_MULTI_INDICES,
        });
    }
    let hd = latent_dim as f64 / 2.0;
    let ln_m_fact = ln_gamma(m as f64 + 1.0);
    let mut total = 0.0;
    for_each_composition(m, parts, |h| {
        let mut log_term = ln_m_fact;
        let mut shrink = 0.0;
        for (j, &hj) in h.iter().enumerate() {
            if hj == 0 {
                continue;
            }
            let hj_f = hj as f64;
            let c = 1.0 + 2.0 * beta * hj_f * sigma2;
            log_term += hj_f * pair_alpha[j] - ln_gamma(hj_f + 1.0) - hd * c.ln();
            shrink += 2.0 * beta * hj_f / c;
        }
        log_term -= hd * (1.0 + sigma2 * shrink).ln();
        total += log_term.exp();
    });
    Ok(total)
}

/// m-th derivative at 1 of the strength pgf of node `node`, given state `k` and
/// per-node effects.
pub fn pgf_derivative_m_node(
    spec: &StrengthMomentSpec,
    k: usize,
    m: usize,
    alpha_nodes: &[f64],
    node: usize,
) -> Result<f64> {
    if alpha_nodes.len() != spec.n_nodes || node >= spec.n_nodes {
        return validation("per-node alpha must have one entry per node");
    }
    let pair: Vec<f64> = (0..spec.n_nodes)
        .filter(|&j| j != node)
        .map(|j| alpha_nodes[node] + alpha_nodes[j])
        .collect();
    factorial_moment_node(&pair, spec.beta, spec.sigma2[k], spec.latent_dim, m)
}

/// m-th factorial moment of the strength in state `k`. With `per_node_alpha`
/// the focal node is drawn uniformly, so the result averages over nodes;
/// otherwise every pair uses `spec.alpha`.
pub fn pgf_derivative_m(
    spec: &StrengthMomentSpec,
    k: usize,
    m: usize,
    per_node_alpha: Option<&[f64]>,
) -> Result<f64> {
    spec.validate()?;
    if m == 0 {
        return validation("derivative order must be at least 1");
    }
    if k >= spec.sigma2.len() {
        return validation(format!("state {} outside the spec", k + 1));
    }
    match per_node_alpha {
        None => {
            let pair = vec![spec.alpha; spec.n_nodes - 1];
            factorial_moment_node(&pair, spec.beta, spec.sigma2[k], spec.latent_dim, m)
        }
        Some(a) => {
            let mut s = 0.0;
            for i in 0..spec.n_nodes {
                s += pgf_derivative_m_node(spec, k, m, a, i)?;
            }
            Ok(s / spec.n_nodes as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub mean: Estimate,
    pub sd: Estimate,
    pub dispersion: Estimate,
    /// Average weighted clustering coefficient, when requested.
    pub clustering: Option<Estimate>,
}

fn draw_positions<R: Rng + ?Sized>(n: usize, d: usize, sigma2: f64, rng: &mut R) -> Vec<f64> {
    let sd = sigma2.sqrt();
    (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// One single-period network; returns the dense weight matrix (row-major).
fn draw_network<R: Rng + ?Sized>(
    alpha_pair: impl Fn(usize, usize) -> f64,
    beta: f64,
    x: &[f64],
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let mut w = vec![0u64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dist2: f64 = (0..d).map(|c| (x[i * d + c] - x[j * d + c]).powi(2)).sum();
            let y = poisson_draw((alpha_pair(i, j) - beta * dist2).exp(), rng)?;
            w[i * n + j] = y;
            w[j * n + i] = y;
        }
    }
    Ok(w)
}

/// Weighted clustering coefficient averaged over nodes with at least two neighbours.
pub fn mean_weighted_clustering(w: &[u64], n: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let row = &w[i * n..(i + 1) * n];
        let s: u64 = row.iter().sum();
        let k = row.iter().filter(|&&v| v > 0).count();
        if k < 2 {
            continue;
        }
        let mut acc = 0.0;
        for j in 0..n {
            if row[j] == 0 {
                continue;
            }
            for h in 0..n {
                if h != j && row[h] > 0 && w[j * n + h] > 0 {
                    acc += (row[j] + row[h]) as f64 / 2.0;
                }
            }
        }
        sum += acc / (s as f64 * (k as f64 - 1.0));
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

fn jackknife<F: Fn(usize) -> f64>(n_reps: usize, full: f64, leave_out: F) -> Estimate {
    let thetas: Vec<f64> = (0..n_reps).map(leave_out).collect();
    let mean = thetas.iter().sum::<f64>() / n_reps as f64;
    let ss: f64 = thetas.iter().map(|t| (t - mean).powi(2)).sum();
    Estimate {
        value: full,
        se: ((n_reps as f64 - 1.0) / n_reps as f64 * ss).sqrt(),
    }
}

/// Empirical strength moments over `n_reps` simulated single-period networks.
/// Each replicate draws its regime from `q_row` and fresh positions; strengths
/// of all nodes are pooled, and standard errors come from a delete-one-replicate
/// jackknife, which accounts for dependence between nodes of the same network.
pub fn mc_strength_oracle<R: Rng + ?Sized>(
    spec: &StrengthMomentSpec,
    n_reps: usize,
    with_clustering: bool,
    rng: &mut R,
) -> Result<OracleMoments> {
    spec.validate()?;
    if n_reps < 2 {
        return validation("the oracle needs at least two replicates");
    }
    let (n, d) = (spec.n_nodes, spec.latent_dim);
    let mut s1 = vec![0.0; n_reps];
    let mut s2 = vec![0.0; n_reps];
    let mut clus: Vec<Option<f64>> = vec![None; n_reps];
    for r in 0..n_reps {
        let k = sample_categorical(&spec.q_row, rng);
        let x = draw_positions(n, d, spec.sigma2[k], rng);
        let w = draw_network(|_, _| spec.alpha, spec.beta, &x, n, d, rng)?;
        for i in 0..n {
            let s: u64 = w[i * n..(i + 1) * n].iter().sum();
            s1[r] += s as f64;
            s2[r] += (s as f64).powi(2);
        }
        if with_clustering {
            clus[r] = mean_weighted_clustering(&w, n);
        }
    }
    let moments = |skip: Option<usize>| -> (f64, f64, f64) {
        let (mut a, mut b, mut m) = (0.0, 0.0, 0.0);
        for r in 0..n_reps {
            if Some(r) == skip {
                continue;
            }
            a += s1[r];
            b += s2[r];
            m += n as f64;
        }
        let mean = a / m;
        let var = (b - m * mean * mean) / (m - 1.0);
        (mean, var.max(0.0).sqrt(), var / mean)
    };
    let (mean, sd, disp) = moments(None);
    let mean_e = jackknife(n_reps, mean, |r| moments(Some(r)).0);
    let sd_e = jackknife(n_reps, sd, |r| moments(Some(r)).1);
    let disp_e = jackknife(n_reps, disp, |r| moments(Some(r)).2);
    let clustering = if with_clustering {
        let vals: Vec<f64> = clus.iter().flatten().copied().collect();
        if vals.len() >= 2 {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0);
            Some(Estimate {
                value: m,
                se: (v / vals.len() as f64).sqrt(),
            })
        } else {
            None
        }
    } else {
        None
    };
    Ok(OracleMoments {
        mean: mean_e,
        sd: sd_e,
        dispersion: disp_e,
        clustering,
    })
}

/// Monte-Carlo estimate of the m-th factorial moment `E[Y(Y-1)...(Y-m+1)]` of the
/// strength of a uniformly chosen node, with per-node effects and a single state.
pub fn mc_factorial_moment<R: Rng + ?Sized>(
    alpha_nodes: &[f64],
    beta: f64,
    sigma2: f64,
    latent_dim: usize,
    m: usize,
    n_reps: usize,
    rng: &mut R,
) -> Result<Estimate> {
    let n = alpha_nodes.len();
    if n == 0 || n_reps < 2 {
        return validation("need at least one node and two replicates");
    }
    let d = latent_dim;
    let mut vals = Vec::with_capacity(n_reps);
    for _ in 0..n_reps {
        let x = draw_positions(n, d, sigma2, rng);
        let w = draw_network(|i, j| alpha_nodes[i] + alpha_nodes[j], beta, &x, n, d, rng)?;
        let mut acc = 0.0;
        for i in 0..n {
            let s: u64 = w[i * n..(i + 1) * n].iter().sum();
            let mut f = 1.0;
            for q in 0..m {
                f *= s as f64 - q as f64;
            }
            acc += f;
        }
        vals.push(acc / n as f64);
    }
    let mean = vals.iter().sum::<f64>() / n_reps as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_reps as f64 - 1.0);
    Ok(Estimate {
        value: mean,
        se: (var / n_reps as f64).sqrt(),
    })
}

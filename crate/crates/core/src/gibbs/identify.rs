//! Post-processing that removes translations, reflections and state relabelings.
//!
//! With a free leaning slope the likelihood is invariant under a common shift
//! `zeta -> zeta - c` paired with `gamma0 -> gamma0 + gamma1 c`, and under a joint
//! reflection `zeta -> -zeta`, `gamma1 -> -gamma1`, but not under separate shifts
//! per state. `Pooled` mode therefore centers and reflects all states together.
//! `PerState` mode centers and reflects each state on its own and is exact only
//! when `gamma1 = 0`.

use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, StateSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSign {
    Negative,
    Positive,
}

impl AnchorSign {
    fn violated_by(self, v: f64) -> bool {
        match self {
            AnchorSign::Negative => v > 0.0,
            AnchorSign::Positive => v < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentifyMode {
    Pooled,
    PerState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifySpec {
    pub anchor: usize,
    pub sign: AnchorSign,
    pub mode: IdentifyMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub params: ModelParams,
    pub states: StateSequence,
}

/// What [`identify_draw`] did, in order: shift per state, then sign per state,
/// then `perm[new] = old` relabeling.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyTransform {
    pub shift: Vec<f64>,
    pub sign: Vec<f64>,
    pub perm: Vec<usize>,
}

impl IdentifyTransform {
    pub fn is_identity_perm(&self) -> bool {
        self.perm.iter().enumerate().all(|(a, &b)| a == b)
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median pairwise distance between coordinates in each state.
pub fn median_pairwise_distance(params: &ModelParams) -> Vec<f64> {
    let n = params.n_nodes();
    (0..params.n_states())
        .map(|k| {
            let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    d.push((params.zeta[[i, k]] - params.zeta[[j, k]]).abs());
                }
            }
            median(&mut d)
        })
        .collect()
}

pub fn identify_draw(draw: &mut PosteriorDraw, spec: &IdentifySpec) -> IdentifyTransform {
    let p = &mut draw.params;
    let (n, k) = p.zeta.dim();
    let mut shift = vec![0.0; k];
    let mut sign = vec![1.0; k];
    if n > 0 {
        match spec.mode {
            IdentifyMode::Pooled => {
                let c = p.zeta.iter().sum::<f64>() / (n * k) as f64;
                p.zeta.mapv_inplace(|z| z - c);
                p.gamma0 += p.gamma1 * c;
                shift.iter_mut().for_each(|s| *s = c);
                let anchor_mean = p.zeta.row(spec.anchor).sum() / k as f64;
                if spec.sign.violated_by(anchor_mean) {
                    p.zeta.mapv_inplace(|z| -z);
                    p.gamma1 = -p.gamma1;
                    sign.iter_mut().for_each(|s| *s = -1.0);
                }
            }
            IdentifyMode::PerState => {
                for s in 0..k {
                    let mut col = p.zeta.column_mut(s);
                    let c = col.sum() / n as f64;
                    col.mapv_inplace(|z| z - c);
                    p.gamma0 += p.gamma1 * c;
                    shift[s] = c;
                    if spec.sign.violated_by(col[spec.anchor]) {
                        col.mapv_inplace(|z| -z);
                        sign[s] = -1.0;
                    }
                }
            }
        }
    }
    let dist = median_pairwise_distance(p);
    let mut perm: Vec<usize> = (0..k).collect();
    perm.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    let identity = perm.iter().enumerate().all(|(a, &b)| a == b);
    if !identity {
        let old_zeta = p.zeta.clone();
        let old_sigma = p.sigma2.clone();
        let old_q = p.trans.clone();
        for new in 0..k {
            p.zeta.column_mut(new).assign(&old_zeta.column(perm[new]));
            p.sigma2[new] = old_sigma[perm[new]];
            for new_b in 0..k {
                p.trans[[new, new_b]] = old_q[[perm[new], perm[new_b]]];
            }
        }
        let mut inv = vec![0usize; k];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        for s in draw.states.states.iter_mut() {
            *s = inv[*s];
        }
    }
    IdentifyTransform { shift, sign, perm }
}

/// Checks the constraints [`identify_draw`] establishes, within `tol`.
pub fn satisfies_constraints(draw: &PosteriorDraw, spec: &IdentifySpec, tol: f64) -> bool {
    let p = &draw.params;
    let (n, k) = p.zeta.dim();
    if n == 0 {
        return true;
    }
    let centered = match spec.mode {
        IdentifyMode::Pooled => (p.zeta.sum() / (n * k) as f64).abs() <= tol,
        IdentifyMode::PerState => (0..k).all(|s| (p.zeta.column(s).sum() / n as f64).abs() <= tol),
    };
    let signed = match spec.mode {
        IdentifyMode::Pooled => sign_ok(spec.sign, p.zeta.row(spec.anchor).sum() / k as f64, tol),
        IdentifyMode::PerState => (0..k).all(|s| sign_ok(spec.sign, p.zeta[[spec.anchor, s]], tol)),
    };
    let d = median_pairwise_distance(p);
    let ordered = d.windows(2).all(|w| w[0] <= w[1] + tol);
    let stochastic = p.trans.rows().into_iter().all(|r| (r.sum() - 1.0).abs() <= 1e-12);
    centered && signed && ordered && stochastic
}

fn sign_ok(sign: AnchorSign, v: f64, tol: f64) -> bool {
    match sign {
        AnchorSign::Negative => v <= tol,
        AnchorSign::Positive => v >= -tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{layer_rng, simulate_observations};
    use crate::model::complete_data_log_lik;
    use ndarray::array;

    fn draw() -> PosteriorDraw {
        PosteriorDraw {
            params: ModelParams {
                alpha: vec![0.1, -0.3, 0.4, 0.2],
                zeta: array![[0.9, -0.3], [1.5, 0.4], [-0.2, -0.9], [2.0, 0.2]],
                sigma2: vec![1.2, 0.4],
                gamma0: 0.3,
                gamma1: 0.8,
                phi: 15.0,
                trans: array![[0.6, 0.4], [0.1, 0.9]],
                beta: 1.0,
                delta: None,
            },
            states: StateSequence { states: vec![0, 1, 1, 0, 1] },
        }
    }

    const SPEC: IdentifySpec = IdentifySpec {
        anchor: 2,
        sign: AnchorSign::Negative,
        mode: IdentifyMode::Pooled,
    };

    #[test]
    fn idempotent() {
        let mut d = draw();
        identify_draw(&mut d, &SPEC);
        assert!(satisfies_constraints(&d, &SPEC, 1e-12));
        let once = d.clone();
        identify_draw(&mut d, &SPEC);
        for (a, b) in d.params.zeta.iter().zip(once.params.zeta.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.states, once.states);
        assert_eq!(d.params.trans, once.params.trans);
    }

    #[test]
    fn undoes_reflection_and_swap() {
        let mut d = draw();
        identify_draw(&mut d, &SPEC);
        let reference = d.clone();
        let mut g = d.clone();
        g.params.zeta.mapv_inplace(|z| -z);
        g.params.gamma1 = -g.params.gamma1;
        let z = g.params.zeta.clone();
        g.params.zeta.column_mut(0).assign(&z.column(1));
        g.params.zeta.column_mut(1).assign(&z.column(0));
        g.params.sigma2.swap(0, 1);
        let q = g.params.trans.clone();
        g.params.trans = array![[q[[1, 1]], q[[1, 0]]], [q[[0, 1]], q[[0, 0]]]];
        for s in g.states.states.iter_mut() {
            *s = 1 - *s;
        }
        identify_draw(&mut g, &SPEC);
        for (a, b) in g.params.zeta.iter().zip(reference.params.zeta.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g.params.sigma2, reference.params.sigma2);
        assert_eq!(g.params.trans, reference.params.trans);
        assert_eq!(g.states, reference.states);
        assert!((g.params.gamma1 - reference.params.gamma1).abs() < 1e-12);
    }

    #[test]
    fn relabels_and_preserves_likelihood() {
        let mut d = draw();
        let before = median_pairwise_distance(&d.params);
        assert!(before[0] > before[1]);
        let layer = simulate_observations(
            &d.params,
            &d.states,
            (0..4).map(|i| i.to_string()).collect(),
            &mut layer_rng(12, 0),
        )
        .unwrap();
        let ll = complete_data_log_lik(&layer, &d.params, &d.states).unwrap();
        let tr = identify_draw(&mut d, &SPEC);
        assert_eq!(tr.perm, vec![1, 0]);
        let after = median_pairwise_distance(&d.params);
        assert!(after[0] <= after[1]);
        assert_eq!(d.params.trans, array![[0.9, 0.1], [0.4, 0.6]]);
        let ll2 = complete_data_log_lik(&layer, &d.params, &d.states).unwrap();
        assert!((ll - ll2).abs() <= 1e-10 * ll.abs());
    }

    #[test]
    fn per_state_mode_centers_each_column() {
        let mut d = draw();
        d.params.gamma1 = 0.0;
        let spec = IdentifySpec {
            mode: IdentifyMode::PerState,
            ..SPEC
        };
        identify_draw(&mut d, &spec);
        for s in 0..2 {
            assert!(d.params.zeta.column(s).sum().abs() < 1e-12);
            assert!(d.params.zeta[[2, s]] <= 0.0);
        }
        assert!(satisfies_constraints(&d, &spec, 1e-12));
    }

    #[test]
    fn ties_keep_label_order() {
        let mut d = draw();
        d.params.zeta = array![[0.0, 1.0], [1.0, 0.0], [-1.0, -1.0], [0.0, 0.0]];
        let dist = median_pairwise_distance(&d.params);
        assert_eq!(dist[0], dist[1]);
        let tr = identify_draw(&mut d, &SPEC);
        assert_eq!(tr.perm, vec![0, 1]);
    }
}

//! Model comparison: DIC, log pointwise predictive density, posterior
//! predictive strength checks and the random-graph baselines.

pub mod baselines;
pub mod ppc;

use std::io::Write;

use crate::error::{validation, MslsError, Result};
use crate::gibbs::PosteriorDraw;
use crate::model::{log_intensity, poisson_log_pmf, Layer};
use crate::moments::StrengthMomentSpec;

pub use baselines::{fit_baselines, fit_covariate, fit_homogeneous, BaselineOutput, CovariateDraw, HomogeneousDraw};
pub use ppc::{empirical_strength_stats, ppc_strength, write_ppc_csv, Interval, PpcMetric, PpcReport, StrengthStats};

/// A fitted draw that determines a Poisson intensity for every dyad and period.
pub trait PoissonIntensity {
    fn log_intensity_at(&self, layer: &Layer, t: usize, i: usize, j: usize) -> f64;

    /// All dyads `i < j` of all periods, period-major.
    fn cell_log_intensities(&self, layer: &Layer) -> Vec<f64> {
        let n = layer.n_nodes;
        let mut out = Vec::with_capacity(layer.n_periods * n * n.saturating_sub(1) / 2);
        for t in 0..layer.n_periods {
            for i in 0..n {
                for j in (i + 1)..n {
                    out.push(self.log_intensity_at(layer, t, i, j));
                }
            }
        }
        out
    }

    /// Parameters for the closed-form strength moments, when the model has them.
    fn moment_spec(&self, _layer: &Layer) -> Option<StrengthMomentSpec> {
        None
    }
}

impl PoissonIntensity for PosteriorDraw {
    fn log_intensity_at(&self, layer: &Layer, t: usize, i: usize, j: usize) -> f64 {
        let p = &self.params;
        let s = self.states.states[t];
        let e = match (p.delta, &layer.exposure) {
            (Some(d), Some(_)) => layer.exposure_offsets().map(|o| d * o[t]),
            _ => None,
        };
        log_intensity(p.alpha[i], p.alpha[j], p.beta, p.zeta[[i, s]], p.zeta[[j, s]], e).unwrap_or(f64::NAN)
    }

    fn cell_log_intensities(&self, layer: &Layer) -> Vec<f64> {
        let p = &self.params;
        let n = layer.n_nodes;
        let offsets = match p.delta {
            Some(d) => layer.exposure_offsets().map(|o| o.iter().map(|v| d * v).collect::<Vec<_>>()),
            None => None,
        };
        let mut out = Vec::with_capacity(layer.n_periods * n * n.saturating_sub(1) / 2);
        for t in 0..layer.n_periods {
            let s = self.states.states[t];
            let e = offsets.as_ref().map_or(0.0, |o| o[t]);
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = p.zeta[[i, s]] - p.zeta[[j, s]];
                    out.push(p.alpha[i] + p.alpha[j] - p.beta * d * d + e);
                }
            }
        }
        out
    }

    /// Convention: the common effect is `ln mean_{i != j} exp(alpha_i + alpha_j)`
    /// and the state weights are transition rows averaged over the previous
    /// period's state along the draw's path.
    fn moment_spec(&self, _layer: &Layer) -> Option<StrengthMomentSpec> {
        let p = &self.params;
        let n = p.n_nodes();
        if n < 2 {
            return None;
        }
        let sum_a: f64 = p.alpha.iter().map(|a| a.exp()).sum();
        let sum_a2: f64 = p.alpha.iter().map(|a| (2.0 * a).exp()).sum();
        let alpha = ((sum_a * sum_a - sum_a2) / (n * (n - 1)) as f64).ln();
        let k = p.n_states();
        let mut q_row = vec![0.0; k];
        let states = &self.states.states;
        if states.len() >= 2 {
            for &prev in &states[..states.len() - 1] {
                for (m, q) in q_row.iter_mut().enumerate() {
                    *q += p.trans[[prev, m]] / (states.len() - 1) as f64;
                }
            }
        } else {
            q_row.iter_mut().for_each(|q| *q = 1.0 / k as f64);
        }
        Some(StrengthMomentSpec {
            n_nodes: n,
            latent_dim: 1,
            alpha,
            beta: p.beta,
            sigma2: p.sigma2.clone(),
            q_row,
        })
    }
}

/// `-2 mean(loglik) + 2 var(loglik)` with the `n - 1` variance denominator.
pub fn dic(loglik: &[f64]) -> Result<f64> {
    if loglik.len() < 2 {
        return validation(format!("DIC needs at least 2 draws, got {}", loglik.len()));
    }
    if loglik.iter().any(|v| !v.is_finite()) {
        return Err(MslsError::Degenerate("log-likelihood trace has non-finite values".into()));
    }
    let n = loglik.len() as f64;
    let m = loglik.iter().sum::<f64>() / n;
    let var = loglik.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(-2.0 * m + 2.0 * var)
}

/// Effective number of parameters `2 var(loglik)`.
pub fn dic_penalty(loglik: &[f64]) -> Result<f64> {
    let d = dic(loglik)?;
    let m = loglik.iter().sum::<f64>() / loglik.len() as f64;
    Ok(d + 2.0 * m)
}

/// Streaming log pointwise predictive density: cells are fixed, draws arrive
/// one at a time.
#[derive(Debug, Clone)]
pub struct LppdAccumulator {
    lse: Vec<f64>,
    n_draws: usize,
}

impl LppdAccumulator {
    pub fn new(n_cells: usize) -> Self {
        LppdAccumulator {
            lse: vec![f64::NEG_INFINITY; n_cells],
            n_draws: 0,
        }
    }

    pub fn add_draw(&mut self, log_density: &[f64]) -> Result<()> {
        if log_density.len() != self.lse.len() {
            return validation(format!("{} cell densities, expected {}", log_density.len(), self.lse.len()));
        }
        if let Some(c) = log_density.iter().position(|v| !v.is_finite()) {
            return Err(MslsError::Numerical(format!("non-finite density in cell {}", c + 1)));
        }
        for (acc, &v) in self.lse.iter_mut().zip(log_density) {
            let m = acc.max(v);
            *acc = m + ((*acc - m).exp() + (v - m).exp()).ln();
        }
        self.n_draws += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<f64> {
        if self.n_draws == 0 {
            return validation("lppd needs at least one draw");
        }
        let ln_h = (self.n_draws as f64).ln();
        Ok(self.lse.iter().map(|v| v - ln_h).sum())
    }
}

/// lppd from a `[draw][cell]` table of log densities.
pub fn lppd(log_density_draws: &[Vec<f64>]) -> Result<f64> {
    let cells = log_density_draws.first().map_or(0, Vec::len);
    let mut acc = LppdAccumulator::new(cells);
    for d in log_density_draws {
        acc.add_draw(d)?;
    }
    acc.finish()
}

/// Poisson log densities of every dyad `i < j` in every period, period-major.
pub fn network_cell_log_densities<D: PoissonIntensity>(layer: &Layer, draw: &D) -> Result<Vec<f64>> {
    let n = layer.n_nodes;
    let ll = draw.cell_log_intensities(layer);
    let mut out = Vec::with_capacity(ll.len());
    let mut c = 0;
    for t in 0..layer.n_periods {
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(poisson_log_pmf(layer.weights[[t, i, j]], ll[c])?);
                c += 1;
            }
        }
    }
    Ok(out)
}

pub fn lppd_draws<D: PoissonIntensity>(layer: &Layer, draws: &[D]) -> Result<f64> {
    let n = layer.n_nodes;
    let mut acc = LppdAccumulator::new(layer.n_periods * n * n.saturating_sub(1) / 2);
    for d in draws {
        acc.add_draw(&network_cell_log_densities(layer, d)?)?;
    }
    acc.finish()
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub model: String,
    pub n_draws: usize,
    /// From the complete-data likelihood; absent for baselines.
    pub dic_complete: Option<f64>,
    pub dic_network: f64,
    pub lppd: f64,
}

pub fn write_selection_csv<W: Write>(rows: &[SelectionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "n_draws", "dic_complete", "dic_network", "lppd"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.n_draws.to_string(),
            r.dic_complete.map_or_else(|| "NA".into(), |v| format!("{v:.4}")),
            format!("{:.4}", r.dic_network),
            format!("{:.4}", r.lppd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{simulate_layer, SimulationScenario};
    use crate::model::network_only_log_lik;

    #[test]
    fn dic_arithmetic() {
        assert_eq!(dic(&[-10.0, -12.0]).unwrap(), 26.0);
        assert_eq!(dic(&[-3.5; 6]).unwrap(), 7.0);
        assert_eq!(dic_penalty(&[-10.0, -12.0]).unwrap(), 4.0);
        assert!(dic(&[-1.0]).is_err());
        assert!(dic(&[-1.0, f64::NAN]).is_err());
        let a = dic(&[-1.0, -4.0, -2.5, -7.0]).unwrap();
        let b = dic(&[-7.0, -2.5, -1.0, -4.0]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lppd_reductions() {
        let sim = simulate_layer(&SimulationScenario {
            n_nodes: 5,
            n_periods: 4,
            centers: vec![vec![-0.5, -0.2, 0.0, 0.2, 0.5], vec![-1.0, -0.5, 0.0, 0.5, 1.0]],
            ..Default::default()
        })
        .unwrap();
        let draw = PosteriorDraw {
            params: sim.params.clone(),
            states: sim.states.clone(),
        };
        let single = lppd_draws(&sim.layer, std::slice::from_ref(&draw)).unwrap();
        let direct = network_only_log_lik(&sim.layer, &sim.params, &sim.states).unwrap();
        assert!((single - direct).abs() < 1e-10 * direct.abs());
        let repeated = lppd_draws(&sim.layer, &vec![draw.clone(); 7]).unwrap();
        assert!((repeated - single).abs() < 1e-10 * direct.abs());
    }

    #[test]
    fn lppd_matches_naive_average() {
        let table: Vec<Vec<f64>> = vec![vec![-1.2, -0.3, -4.0], vec![-0.7, -2.0, -3.1], vec![-2.2, -0.1, -3.5]];
        let naive: f64 = (0..3)
            .map(|c| (table.iter().map(|d| d[c].exp()).sum::<f64>() / 3.0).ln())
            .sum();
        assert!((lppd(&table).unwrap() - naive).abs() < 1e-10);
        let mut rev = table.clone();
        rev.reverse();
        assert!((lppd(&rev).unwrap() - naive).abs() < 1e-10);
        assert!(lppd(&[vec![0.0, f64::NEG_INFINITY]]).is_err());
        assert!(lppd(&[]).is_err());
    }

    #[test]
    fn selection_csv() {
        let rows = vec![SelectionRow {
            model: "m1".into(),
            n_draws: 2,
            dic_complete: None,
            dic_network: 26.0,
            lppd: -11.0,
        }];
        let mut buf = Vec::new();
        write_selection_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "model,n_draws,dic_complete,dic_network,lppd\nm1,2,NA,26.0000,-11.0000\n"
        );
    }
}

//! Posterior predictive checks on nodal strength.
//!
//! Three blocks per metric: the closed-form moments of the generative model
//! evaluated at each draw, the expected within-network statistics given the
//! draw's intensities, and statistics of a network replicated from the draw.

use std::io::Write;

use rand::Rng;

use super::PoissonIntensity;
use crate::error::{validation, Result};
use crate::generative::poisson_draw;
use crate::model::Layer;
use crate::moments::{dispersion_index, expected_strength, strength_sd};

/// Per-period mean, standard deviation (`n - 1` denominator) and
/// variance-to-mean ratio of strengths across nodes, averaged over periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrengthStats {
    pub mean: f64,
    pub sd: f64,
    pub dispersion: f64,
}

fn stats_from_strengths(per_period: &[Vec<f64>]) -> StrengthStats {
    let (mut m_acc, mut s_acc, mut d_acc, mut d_n) = (0.0, 0.0, 0.0, 0usize);
    for s in per_period {
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        m_acc += m;
        s_acc += v.sqrt();
        if m > 0.0 {
            d_acc += v / m;
            d_n += 1;
        }
    }
    let t = per_period.len() as f64;
    StrengthStats {
        mean: m_acc / t,
        sd: s_acc / t,
        dispersion: if d_n > 0 { d_acc / d_n as f64 } else { f64::NAN },
    }
}

pub fn empirical_strength_stats(layer: &Layer) -> Result<StrengthStats> {
    if layer.n_nodes < 2 || layer.n_periods == 0 {
        return validation("strength statistics need at least 2 nodes and 1 period");
    }
    let per: Vec<Vec<f64>> = (0..layer.n_periods)
        .map(|t| layer.strengths(t).into_iter().map(|v| v as f64).collect())
        .collect();
    Ok(stats_from_strengths(&per))
}

/// Expected within-network statistics given the intensities. For strengths
/// `Y_i = Lambda_i + e_i` with `Cov(e_i, e_j) = lambda_ij`, the expected sample
/// variance is the spread of `Lambda` plus `(1 - 2/N) sum(Lambda) / (N - 1)`.
fn plug_in_stats<D: PoissonIntensity>(layer: &Layer, draw: &D) -> StrengthStats {
    let n = layer.n_nodes;
    let nf = n as f64;
    let ll = draw.cell_log_intensities(layer);
    let (mut m_acc, mut s_acc, mut d_acc) = (0.0, 0.0, 0.0);
    let mut c = 0;
    for _t in 0..layer.n_periods {
        let mut lam = vec![0.0; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = ll[c].exp();
                lam[i] += v;
                lam[j] += v;
                c += 1;
            }
        }
        let total: f64 = lam.iter().sum();
        let m = total / nf;
        let spread = lam.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
        let var = spread + (1.0 - 2.0 / nf) * total / (nf - 1.0);
        m_acc += m;
        s_acc += var.sqrt();
        d_acc += var / m;
    }
    let t = layer.n_periods as f64;
    StrengthStats {
        mean: m_acc / t,
        sd: s_acc / t,
        dispersion: d_acc / t,
    }
}

fn replicate_stats<D: PoissonIntensity, R: Rng + ?Sized>(layer: &Layer, draw: &D, rng: &mut R) -> Result<StrengthStats> {
    let n = layer.n_nodes;
    let ll = draw.cell_log_intensities(layer);
    let mut per = Vec::with_capacity(layer.n_periods);
    let mut c = 0;
    for _t in 0..layer.n_periods {
        let mut s = vec![0.0; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let y = poisson_draw(ll[c].exp(), rng)? as f64;
                s[i] += y;
                s[j] += y;
                c += 1;
            }
        }
        per.push(s);
    }
    Ok(stats_from_strengths(&per))
}

/// Posterior mean with a central 95% credible interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(values: &[f64]) -> Option<Interval> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Interval {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            lower: quantile_sorted(&v, 0.025),
            upper: quantile_sorted(&v, 0.975),
        })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpcMetric {
    pub name: &'static str,
    pub empirical: f64,
    pub closed_form: Option<Interval>,
    pub plug_in: Interval,
    pub replicated: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpcReport {
    pub n_draws: usize,
    pub metrics: Vec<PpcMetric>,
}

impl PpcReport {
    pub fn metric(&self, name: &str) -> Option<&PpcMetric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

pub fn ppc_strength<D: PoissonIntensity, R: Rng + ?Sized>(draws: &[D], layer: &Layer, rng: &mut R) -> Result<PpcReport> {
    if draws.is_empty() {
        return validation("posterior predictive check needs at least one draw");
    }
    let emp = empirical_strength_stats(layer)?;
    let mut closed = [Vec::new(), Vec::new(), Vec::new()];
    let mut plug = [Vec::new(), Vec::new(), Vec::new()];
    let mut rep = [Vec::new(), Vec::new(), Vec::new()];
    for d in draws {
        if let Some(spec) = d.moment_spec(layer) {
            closed[0].push(expected_strength(&spec));
            closed[1].push(strength_sd(&spec));
            closed[2].push(dispersion_index(&spec).unwrap_or(f64::NAN));
        }
        let p = plug_in_stats(layer, d);
        let r = replicate_stats(layer, d, rng)?;
        for (buf, s) in [(&mut plug, p), (&mut rep, r)] {
            buf[0].push(s.mean);
            buf[1].push(s.sd);
            buf[2].push(s.dispersion);
        }
    }
    let names = ["mean_strength", "sd_strength", "dispersion"];
    let empirical = [emp.mean, emp.sd, emp.dispersion];
    let nan = Interval {
        mean: f64::NAN,
        lower: f64::NAN,
        upper: f64::NAN,
    };
    let metrics = (0..3)
        .map(|m| PpcMetric {
            name: names[m],
            empirical: empirical[m],
            closed_form: Interval::from_draws(&closed[m]),
            plug_in: Interval::from_draws(&plug[m]).unwrap_or(nan),
            replicated: Interval::from_draws(&rep[m]).unwrap_or(nan),
        })
        .collect();
    Ok(PpcReport {
        n_draws: draws.len(),
        metrics,
    })
}

pub fn write_ppc_csv<W: Write>(model: &str, report: &PpcReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "metric", "empirical", "block", "mean", "lower", "upper"])?;
    let f = |v: f64| if v.is_finite() { format!("{v:.6}") } else { "NA".into() };
    for m in &report.metrics {
        let blocks = [("closed_form", m.closed_form), ("plug_in", Some(m.plug_in)), ("replicated", Some(m.replicated))];
        for (label, iv) in blocks {
            let Some(iv) = iv else { continue };
            w.write_record([model.to_string(), m.name.to_string(), f(m.empirical), label.into(), f(iv.mean), f(iv.lower), f(iv.upper)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{default_node_names, layer_rng};
    use crate::selection::HomogeneousDraw;
    use ndarray::{array, Array2, Array3};

    #[test]
    fn empirical_stats_by_hand() {
        // one period, strengths (3, 4, 1)
        let mut y = Array3::zeros((1, 3, 3));
        for (i, j, v) in [(0, 1, 3), (0, 2, 0), (1, 2, 1)] {
            y[[0, i, j]] = v;
            y[[0, j, i]] = v;
        }
        let layer = Layer::new(y, array![[0.5, 0.5, 0.5]], default_node_names(3), None).unwrap();
        let s = empirical_strength_stats(&layer).unwrap();
        let (m, v) = (8.0 / 3.0, ((3.0f64 - 8.0 / 3.0).powi(2) + (4.0f64 - 8.0 / 3.0).powi(2) + (1.0f64 - 8.0 / 3.0).powi(2)) / 2.0);
        assert!((s.mean - m).abs() < 1e-12);
        assert!((s.sd - v.sqrt()).abs() < 1e-12);
        assert!((s.dispersion - v / m).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_graph_within_network_dispersion() {
        let (n, t_len) = (51, 40);
        let layer = Layer::new(
            Array3::zeros((t_len, n, n)),
            Array2::from_elem((t_len, n), 0.5),
            default_node_names(n),
            None,
        )
        .unwrap();
        let draws = vec![HomogeneousDraw { alpha: 2.0f64.ln() }; 50];
        let r = ppc_strength(&draws, &layer, &mut layer_rng(3, 0)).unwrap();
        let d = r.metric("dispersion").unwrap();
        let expect = (n as f64 - 2.0) / (n as f64 - 1.0);
        assert!((d.plug_in.mean - expect).abs() < 1e-12);
        assert!((d.closed_form.unwrap().mean - 1.0).abs() < 1e-12);
        // 50 replicates of 40 periods each
        assert!((d.replicated.mean - expect).abs() < 0.02, "{}", d.replicated.mean);
        let m = r.metric("mean_strength").unwrap();
        assert!((m.plug_in.mean - 100.0).abs() < 1e-9);
        assert!((m.closed_form.unwrap().mean - 100.0).abs() < 1e-9);
        let mut buf = Vec::new();
        write_ppc_csv("rg", &r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert!((quantile_sorted(&v, 0.975) - 4.9).abs() < 1e-12);
        let iv = Interval::from_draws(&[2.0, f64::NAN, 4.0]).unwrap();
        assert_eq!(iv.mean, 3.0);
        assert!(Interval::from_draws(&[f64::NAN]).is_none());
    }
}

//! Single-chain quality statistics: autocorrelation, effective sample size,
//! Geweke convergence test, acceptance rates and the combined diagnostics table.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{validation, MslsError, Result};
use crate::gibbs::RawTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSeries {
    pub label: String,
    pub values: Vec<f64>,
}

impl ChainSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.len() < 2 {
            return validation(format!("series '{label}' needs at least 2 values"));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return validation(format!("series '{label}' has a non-finite value at position {}", p + 1));
        }
        Ok(ChainSeries { label, values })
    }

    pub fn thinned(&self, burn_in: usize, thin: usize) -> Vec<f64> {
        self.values.iter().skip(burn_in).step_by(thin.max(1)).copied().collect()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Lag-`lag` autocorrelation as the Pearson correlation between the series and
/// its shifted copy.
pub fn acf(series: &[f64], lag: usize) -> Result<f64> {
    let n = series.len();
    if lag >= n || n - lag < 2 {
        return validation(format!("lag {lag} too large for a series of length {n}"));
    }
    let (a, b) = (&series[..n - lag], &series[lag..]);
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(MslsError::Degenerate("autocorrelation of a constant series".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Autocovariances with the `1/n` normalization, lags `0..=max_lag`.
fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..=max_lag.min(n - 1))
        .map(|l| c[..n - l].iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// ESS over length using Geyer's initial positive sequence; capped at 1.
pub fn effective_sample_size_ratio(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 10 {
        return validation(format!("effective sample size needs at least 10 values, got {n}"));
    }
    let m = mean(series);
    let c: Vec<f64> = series.iter().map(|v| v - m).collect();
    let gamma = |l: usize| c[..n - l].iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return Err(MslsError::Degenerate("effective sample size of a constant series".into()));
    }
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (gamma(lag) + gamma(lag + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    Ok((1.0 / tau).min(1.0))
}

/// Spectral density at frequency zero with a Bartlett lag window of width
/// `floor(sqrt(n))`.
pub fn spectral_density_zero(x: &[f64]) -> f64 {
    let n = x.len();
    let window = (n as f64).sqrt().floor() as usize;
    let g = autocovariances(x, window);
    let mut s = g[0];
    for (l, gl) in g.iter().enumerate().skip(1) {
        s += 2.0 * (1.0 - l as f64 / (window + 1) as f64) * gl;
    }
    s
}

/// Two-sided p-value of the Geweke test comparing the first `frac_a` and last
/// `frac_b` of the series.
pub fn geweke_cd(series: &[f64], frac_a: f64, frac_b: f64) -> Result<f64> {
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return validation(format!("window fractions {frac_a} and {frac_b} must be positive and sum to at most 1"));
    }
    let n = series.len();
    let na = (frac_a * n as f64).floor() as usize;
    let nb = (frac_b * n as f64).floor() as usize;
    if na < 20 || nb < 20 {
        return validation(format!("Geweke windows need 20 points each, got {na} and {nb}"));
    }
    let (a, b) = (&series[..na], &series[n - nb..]);
    let (sa, sb) = (spectral_density_zero(a), spectral_density_zero(b));
    let var = sa / na as f64 + sb / nb as f64;
    if !(var > 0.0) {
        return Err(MslsError::Degenerate("Geweke windows have no variability".into()));
    }
    let z = (mean(a) - mean(b)) / var.sqrt();
    let norm = Normal::standard();
    Ok(2.0 * (1.0 - norm.cdf(z.abs())))
}

pub fn acceptance_rate(flags: &[u8]) -> Result<f64> {
    if flags.is_empty() {
        return validation("acceptance rate of an empty flag sequence");
    }
    Ok(flags.iter().map(|&f| f as f64).sum::<f64>() / flags.len() as f64)
}

/// One column of the diagnostics table: a parameter or a group averaged over
/// its members.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticGroup {
    pub label: String,
    pub params: Vec<String>,
    pub accepts: Vec<String>,
}

/// Segment of the chain a diagnostics block is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Raw,
    BurnIn,
    BurnInThin,
}

impl Segment {
    pub fn label(self) -> &'static str {
        match self {
            Segment::Raw => "raw",
            Segment::BurnIn => "burn-in",
            Segment::BurnInThin => "burn-in+thin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub segment: Segment,
    pub n_obs: usize,
    pub group: String,
    pub acf1: f64,
    pub acf10: f64,
    pub acf30: f64,
    /// Not reported on thinned segments.
    pub acceptance: Option<f64>,
    pub ess_ratio: f64,
    pub geweke_p: f64,
}

/// Groups shown in the diagnostics table: mean effect, leaning regression,
/// dispersion, and mean coordinate per state.
pub fn default_groups(trace: &RawTrace) -> Vec<DiagnosticGroup> {
    let starts = |names: &[String], p: &str| names.iter().filter(|n| n.starts_with(p)).cloned().collect::<Vec<_>>();
    let mut groups = vec![
        DiagnosticGroup {
            label: "alpha_bar".into(),
            params: starts(&trace.param_names, "alpha_"),
            accepts: starts(&trace.accept_names, "acc_alpha_"),
        },
        DiagnosticGroup {
            label: "gamma0".into(),
            params: vec!["gamma0".into()],
            accepts: vec!["acc_gamma".into()],
        },
        DiagnosticGroup {
            label: "gamma1".into(),
            params: vec!["gamma1".into()],
            accepts: vec!["acc_gamma".into()],
        },
        DiagnosticGroup {
            label: "phi".into(),
            params: vec!["phi".into()],
            accepts: vec!["acc_phi".into()],
        },
    ];
    let n_states = trace
        .param_names
        .iter()
        .filter_map(|n| n.strip_prefix("zeta_"))
        .filter_map(|rest| rest.rsplit('_').next()?.parse::<usize>().ok())
        .max()
        .unwrap_or(0);
    for k in 1..=n_states {
        let suffix = format!("_{k}");
        let pick = |prefix: &str| {
            trace
                .param_names
                .iter()
                .chain(&trace.accept_names)
                .filter(|n| n.starts_with(prefix) && n.ends_with(&suffix) && n.matches('_').count() == prefix.matches('_').count() + 1)
                .cloned()
                .collect::<Vec<_>>()
        };
        groups.push(DiagnosticGroup {
            label: format!("zeta_bar_{k}"),
            params: pick("zeta_"),
            accepts: pick("acc_zeta_"),
        });
    }
    if trace.param_names.iter().any(|n| n == "delta") {
        groups.push(DiagnosticGroup {
            label: "delta".into(),
            params: vec!["delta".into()],
            accepts: vec!["acc_delta".into()],
        });
    }
    groups
}

fn mean_stat<F: Fn(&[f64]) -> Result<f64>>(cols: &[Vec<f64>], f: F) -> f64 {
    let vals: Vec<f64> = cols.iter().filter_map(|c| f(c).ok()).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        mean(&vals)
    }
}

/// Diagnostics on the raw chain, after burn-in, and after burn-in and thinning.
/// Statistics of a group are means of the per-parameter statistics; undefined
/// statistics (constant series) are NaN.
pub fn diagnostics_table(trace: &RawTrace, burn_in: usize, thin: usize) -> Result<Vec<DiagnosticsRow>> {
    let n = trace.n_iter();
    if burn_in >= n || thin == 0 {
        return validation(format!("burn-in {burn_in} and thin {thin} incompatible with {n} iterations"));
    }
    let groups = default_groups(trace);
    let mut rows = Vec::new();
    for segment in [Segment::Raw, Segment::BurnIn, Segment::BurnInThin] {
        let (skip, step) = match segment {
            Segment::Raw => (0, 1),
            Segment::BurnIn => (burn_in, 1),
            Segment::BurnInThin => (burn_in + thin - 1, thin),
        };
        for g in &groups {
            let cols: Vec<Vec<f64>> = g
                .params
                .iter()
                .filter_map(|p| trace.param_column(p))
                .map(|c| c.into_iter().skip(skip).step_by(step).collect())
                .collect();
            let n_obs = cols.first().map_or(0, Vec::len);
            let acceptance = if segment == Segment::BurnInThin {
                None
            } else {
                let rates: Vec<f64> = g
                    .accepts
                    .iter()
                    .filter_map(|a| trace.accept_column(a))
                    .filter_map(|c| acceptance_rate(&c[skip..]).ok())
                    .collect();
                (!rates.is_empty()).then(|| mean(&rates))
            };
            rows.push(DiagnosticsRow {
                segment,
                n_obs,
                group: g.label.clone(),
                acf1: mean_stat(&cols, |c| acf(c, 1)),
                acf10: mean_stat(&cols, |c| acf(c, 10)),
                acf30: mean_stat(&cols, |c| acf(c, 30)),
                acceptance,
                ess_ratio: mean_stat(&cols, effective_sample_size_ratio),
                geweke_p: mean_stat(&cols, |c| geweke_cd(c, 0.1, 0.5)),
            });
        }
    }
    Ok(rows)
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["segment", "n_obs", "parameter", "acf1", "acf10", "acf30", "acceptance", "ess_ratio", "geweke_p"])?;
    for r in rows {
        let f = |v: f64| if v.is_finite() { format!("{v:.6}") } else { "NA".into() };
        w.write_record([
            r.segment.label().to_string(),
            r.n_obs.to_string(),
            r.group.clone(),
            f(r.acf1),
            f(r.acf10),
            f(r.acf30),
            r.acceptance.map_or_else(|| "-".into(), f),
            f(r.ess_ratio),
            f(r.geweke_p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::layer_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = layer_rng(seed, 0);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = layer_rng(seed, 0);
        let mut x = 0.0;
        let innov = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + innov * z;
                x
            })
            .collect()
    }

    #[test]
    fn acf_basics() {
        let x = white_noise(500, 1);
        assert!((acf(&x, 0).unwrap() - 1.0).abs() < 1e-12);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((acf(&alt, 1).unwrap() + 1.0).abs() < 1e-12);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        for lag in [1, 5, 40] {
            let a = acf(&x, lag).unwrap();
            assert!((a - acf(&rev, lag).unwrap()).abs() < 1e-12);
            assert!(a.abs() <= 1.0);
        }
        assert!(matches!(acf(&[2.0; 10], 1), Err(MslsError::Degenerate(_))));
        assert!(acf(&x, 500).is_err());
    }

    #[test]
    fn white_noise_acf_in_null_band() {
        let x = white_noise(10_000, 2);
        assert!(acf(&x, 10).unwrap().abs() < 3.0 / 100.0);
    }

    #[test]
    fn ess_iid_and_ar1() {
        let x = white_noise(10_000, 3);
        let r = effective_sample_size_ratio(&x).unwrap();
        assert!(r > 0.8 && r <= 1.0);
        let y = ar1(50_000, 0.9, 4);
        let expect = 0.1 / 1.9;
        let r = effective_sample_size_ratio(&y).unwrap();
        assert!((r - expect).abs() < 0.5 * expect, "ratio {r}");
        assert!(effective_sample_size_ratio(&[1.0; 9]).is_err());
        assert!(matches!(effective_sample_size_ratio(&[1.0; 20]), Err(MslsError::Degenerate(_))));
    }

    #[test]
    fn bartlett_spectral_density_of_ar1() {
        // analytic value (1 + rho) / (1 - rho) for unit marginal variance
        let y = ar1(200_000, 0.5, 5);
        let s = spectral_density_zero(&y);
        assert!((s - 3.0).abs() < 0.15, "{s}");
    }

    #[test]
    fn geweke_calibration_and_power() {
        let mut rejections = 0;
        for rep in 0..200 {
            let x: Vec<f64> = white_noise(1_000, 100 + rep).iter().map(|v| 5.0 + 1e-3 * v).collect();
            if geweke_cd(&x, 0.1, 0.5).unwrap() < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 200.0;
        assert!((0.02..=0.10).contains(&rate), "rejection rate {rate}");
        let mut shifted = white_noise(1_000, 7);
        for v in shifted.iter_mut().skip(500) {
            *v += 5.0;
        }
        assert!(geweke_cd(&shifted, 0.1, 0.5).unwrap() < 0.001);
        assert!(geweke_cd(&shifted, 0.6, 0.5).is_err());
        assert!(geweke_cd(&shifted[..100], 0.1, 0.5).is_err());
    }

    #[test]
    fn acceptance_rates() {
        assert_eq!(acceptance_rate(&[1; 7]).unwrap(), 1.0);
        assert_eq!(acceptance_rate(&[0; 7]).unwrap(), 0.0);
        assert_eq!(acceptance_rate(&[1, 0, 0, 1]).unwrap(), 0.5);
        assert!(acceptance_rate(&[]).is_err());
    }

    #[test]
    fn table_layout() {
        let n = 400;
        let mut trace = RawTrace {
            param_names: ["alpha_1", "alpha_2", "zeta_1_1", "zeta_1_2", "zeta_2_1", "zeta_2_2", "gamma0", "gamma1", "phi"]
                .map(String::from)
                .to_vec(),
            accept_names: ["acc_alpha_1", "acc_alpha_2", "acc_zeta_1_1", "acc_zeta_1_2", "acc_zeta_2_1", "acc_zeta_2_2", "acc_gamma", "acc_phi"]
                .map(String::from)
                .to_vec(),
            ..Default::default()
        };
        let cols: Vec<Vec<f64>> = (0..9).map(|c| ar1(n, 0.5, 50 + c)).collect();
        for h in 0..n {
            for c in &cols {
                trace.params.push(c[h]);
            }
            for a in 0..8 {
                trace.accepts.push(((h + a) % 4 == 0) as u8);
            }
        }
        let groups = default_groups(&trace);
        let labels: Vec<&str> = groups.iter().map(|g| g.label.as_str()).collect();
        assert_eq!(labels, ["alpha_bar", "gamma0", "gamma1", "phi", "zeta_bar_1", "zeta_bar_2"]);
        assert_eq!(groups[4].params, ["zeta_1_1", "zeta_2_1"]);
        let rows = diagnostics_table(&trace, 100, 10).unwrap();
        assert_eq!(rows.len(), 18);
        assert_eq!(rows[0].n_obs, 400);
        assert_eq!(rows[6].n_obs, 300);
        assert_eq!(rows[12].n_obs, 30);
        assert!((rows[0].acceptance.unwrap() - 0.25).abs() < 1e-12);
        assert!(rows[12].acceptance.is_none());
        // group value is the mean of the member statistics
        let a1 = acf(&cols[0], 1).unwrap();
        let a2 = acf(&cols[1], 1).unwrap();
        assert!((rows[0].acf1 - 0.5 * (a1 + a2)).abs() < 1e-12);
        let mut buf = Vec::new();
        write_diagnostics_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 19);
        assert!(text.lines().nth(13).unwrap().contains(",-,"));
    }
}

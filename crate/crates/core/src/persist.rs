//! Chain directories: `manifest.json`, `draws.csv`, `transitions.csv`,
//! `states.csv` (regime-switching fits only) and `trace.csv` (when recorded).
//! Indices in file headers and state values are 1-based.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{MslsError, Result};
use crate::gibbs::{AcceptanceSummary, ChainOutput, McmcConfig, ModelVariant, PosteriorDraw, RawTrace};
use crate::model::{ModelParams, PriorSpec, StateSequence};
use crate::selection::{BaselineOutput, CovariateDraw, HomogeneousDraw};

pub const MANIFEST: &str = "manifest.json";
pub const DRAWS: &str = "draws.csv";
pub const TRANSITIONS: &str = "transitions.csv";
pub const STATES: &str = "states.csv";
pub const TRACE: &str = "trace.csv";

/// Fitted model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Regime switching, free leaning slope.
    M1,
    /// Regime switching, zero leaning slope.
    M2,
    /// Single regime.
    M3,
    /// Homogeneous random graph.
    Rg,
    /// Random graph with observed leaning as coordinates.
    RgCov,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::M3 => "m3",
            ModelKind::Rg => "rg",
            ModelKind::RgCov => "rg-cov",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ModelKind::M1, ModelKind::M2, ModelKind::M3, ModelKind::Rg, ModelKind::RgCov]
            .into_iter()
            .find(|m| m.label() == s)
    }

    pub fn variant(self) -> Option<ModelVariant> {
        match self {
            ModelKind::M1 => Some(ModelVariant::Full),
            ModelKind::M2 => Some(ModelVariant::ZeroSlope),
            ModelKind::M3 => Some(ModelVariant::Static),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSources {
    pub edges: String,
    pub leaning: String,
    pub exposure: Option<String>,
    /// Inactivity filter applied after loading, if any.
    #[serde(default)]
    pub max_gap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelKind,
    pub config: McmcConfig,
    pub priors: PriorSpec,
    pub node_names: Vec<String>,
    pub n_periods: usize,
    pub n_states: usize,
    pub n_draws: usize,
    /// Regime-switching fits: per-block rates.
    pub acceptance: Option<AcceptanceSummary>,
    /// Baselines: rate over all effects.
    pub baseline_acceptance: Option<f64>,
    pub data: Option<DataSources>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainDraws {
    Msls {
        draws: Vec<PosteriorDraw>,
        loglik_complete: Vec<f64>,
        loglik_network: Vec<f64>,
    },
    Homogeneous(BaselineOutput<HomogeneousDraw>),
    Covariate(BaselineOutput<CovariateDraw>),
}

impl ChainDraws {
    pub fn loglik_network(&self) -> &[f64] {
        match self {
            ChainDraws::Msls { loglik_network, .. } => loglik_network,
            ChainDraws::Homogeneous(o) => &o.loglik_network,
            ChainDraws::Covariate(o) => &o.loglik_network,
        }
    }

    pub fn loglik_complete(&self) -> Option<&[f64]> {
        match self {
            ChainDraws::Msls { loglik_complete, .. } => Some(loglik_complete),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.loglik_network().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredChain {
    pub manifest: Manifest,
    pub draws: ChainDraws,
    pub trace: Option<RawTrace>,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn msls_header(p: &ModelParams) -> Vec<String> {
    let (n, k) = (p.n_nodes(), p.n_states());
    let mut h = vec!["draw".to_string()];
    h.extend((1..=n).map(|i| format!("alpha_{i}")));
    for i in 1..=n {
        h.extend((1..=k).map(|s| format!("zeta_{i}_{s}")));
    }
    h.extend((1..=k).map(|s| format!("sigma2_{s}")));
    h.extend(["gamma0", "gamma1", "phi", "beta"].map(String::from));
    if p.delta.is_some() {
        h.push("delta".into());
    }
    h.extend(["loglik_complete", "loglik_network"].map(String::from));
    h
}

fn write_trace(dir: &Path, trace: &RawTrace) -> Result<()> {
    let mut w = csv_writer(&dir.join(TRACE))?;
    let mut header = vec!["iteration".to_string()];
    header.extend(trace.param_names.iter().cloned());
    header.extend(trace.accept_names.iter().cloned());
    w.write_record(&header)?;
    let (np, na) = (trace.param_names.len(), trace.accept_names.len());
    for h in 0..trace.n_iter() {
        let mut rec = vec![(h + 1).to_string()];
        rec.extend(trace.params[h * np..(h + 1) * np].iter().map(|v| fmt(*v)));
        rec.extend(trace.accepts[h * na..(h + 1) * na].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let f = BufWriter::new(File::create(dir.join(MANIFEST))?);
    serde_json::to_writer_pretty(f, manifest)?;
    Ok(())
}

/// Writes a regime-switching chain.
pub fn write_msls_chain(dir: &Path, model: ModelKind, out: &ChainOutput, node_names: &[String], n_periods: usize, data: Option<DataSources>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let k = out.config.effective_states();
    let manifest = Manifest {
        model,
        config: out.config.clone(),
        priors: out.priors.clone(),
        node_names: node_names.to_vec(),
        n_periods,
        n_states: k,
        n_draws: out.draws.len(),
        acceptance: Some(out.acceptance.clone()),
        baseline_acceptance: None,
        data,
    };
    write_manifest(dir, &manifest)?;
    let mut w = csv_writer(&dir.join(DRAWS))?;
    let mut tw = csv_writer(&dir.join(TRANSITIONS))?;
    tw.write_record(["draw", "from", "to", "prob"])?;
    let mut sw = if k > 1 {
        let mut s = csv_writer(&dir.join(STATES))?;
        let mut h = vec!["draw".to_string()];
        h.extend((1..=n_periods).map(|t| format!("t{t}")));
        s.write_record(&h)?;
        Some(s)
    } else {
        let _ = std::fs::remove_file(dir.join(STATES));
        None
    };
    if let Some(first) = out.draws.first() {
        w.write_record(msls_header(&first.params))?;
    } else {
        w.write_record(["draw"])?;
    }
    for (h, d) in out.draws.iter().enumerate() {
        let p = &d.params;
        let mut rec = vec![(h + 1).to_string()];
        rec.extend(p.alpha.iter().map(|v| fmt(*v)));
        rec.extend(p.zeta.iter().map(|v| fmt(*v)));
        rec.extend(p.sigma2.iter().map(|v| fmt(*v)));
        rec.extend([p.gamma0, p.gamma1, p.phi, p.beta].map(fmt));
        if let Some(dl) = p.delta {
            rec.push(fmt(dl));
        }
        rec.push(fmt(out.loglik_complete[h]));
        rec.push(fmt(out.loglik_network[h]));
        w.write_record(&rec)?;
        if k > 1 {
            for a in 0..k {
                for b in 0..k {
                    tw.write_record([(h + 1).to_string(), (a + 1).to_string(), (b + 1).to_string(), fmt(p.trans[[a, b]])])?;
                }
            }
        }
        if let Some(s) = sw.as_mut() {
            let mut rec = vec![(h + 1).to_string()];
            rec.extend(d.states.states.iter().map(|s| (s + 1).to_string()));
            s.write_record(&rec)?;
        }
    }
    w.flush()?;
    tw.flush()?;
    if let Some(mut s) = sw {
        s.flush()?;
    }
    match &out.trace {
        Some(t) => write_trace(dir, t)?,
        None => {
            let _ = std::fs::remove_file(dir.join(TRACE));
        }
    }
    Ok(())
}

fn baseline_manifest(model: ModelKind, config: &McmcConfig, priors: &PriorSpec, node_names: &[String], n_periods: usize, n_draws: usize, acc: f64, data: Option<DataSources>) -> Manifest {
    Manifest {
        model,
        config: config.clone(),
        priors: priors.clone(),
        node_names: node_names.to_vec(),
        n_periods,
        n_states: 0,
        n_draws,
        acceptance: None,
        baseline_acceptance: Some(acc),
        data,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn write_homogeneous_chain(
    dir: &Path,
    out: &BaselineOutput<HomogeneousDraw>,
    config: &McmcConfig,
    priors: &PriorSpec,
    node_names: &[String],
    n_periods: usize,
    data: Option<DataSources>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_manifest(dir, &baseline_manifest(ModelKind::Rg, config, priors, node_names, n_periods, out.draws.len(), out.acceptance, data))?;
    let mut w = csv_writer(&dir.join(DRAWS))?;
    w.write_record(["draw", "alpha", "loglik_network"])?;
    for (h, (d, ll)) in out.draws.iter().zip(&out.loglik_network).enumerate() {
        w.write_record([(h + 1).to_string(), fmt(d.alpha), fmt(*ll)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariate_chain(
    dir: &Path,
    out: &BaselineOutput<CovariateDraw>,
    config: &McmcConfig,
    priors: &PriorSpec,
    node_names: &[String],
    n_periods: usize,
    data: Option<DataSources>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_manifest(dir, &baseline_manifest(ModelKind::RgCov, config, priors, node_names, n_periods, out.draws.len(), out.acceptance, data))?;
    let mut w = csv_writer(&dir.join(DRAWS))?;
    let mut h = vec!["draw".to_string()];
    h.extend((1..=node_names.len()).map(|i| format!("alpha_{i}")));
    h.extend(["beta", "loglik_network"].map(String::from));
    w.write_record(&h)?;
    for (i, (d, ll)) in out.draws.iter().zip(&out.loglik_network).enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(d.alpha.iter().map(|v| fmt(*v)));
        rec.push(fmt(d.beta));
        rec.push(fmt(*ll));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> MslsError {
    MslsError::Ingestion(format!("{}: {msg}", path.display()))
}

/// Reads a CSV file into its header and numeric rows.
fn read_numeric(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(path, format!("line {}: {e}", rec.position().map_or(0, |p| p.line())))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| bad(path, format!("missing column '{name}'")))
}

fn read_trace(path: &Path) -> Result<Option<RawTrace>> {
    if !path.exists() {
        return Ok(None);
    }
    let (header, rows) = read_numeric(path)?;
    let param_names: Vec<String> = header.iter().skip(1).filter(|h| !h.starts_with("acc_")).cloned().collect();
    let accept_names: Vec<String> = header.iter().filter(|h| h.starts_with("acc_")).cloned().collect();
    let np = param_names.len();
    let mut t = RawTrace {
        param_names,
        accept_names,
        params: Vec::with_capacity(rows.len() * np),
        accepts: Vec::new(),
    };
    for r in rows {
        t.params.extend_from_slice(&r[1..1 + np]);
        t.accepts.extend(r[1 + np..].iter().map(|v| *v as u8));
    }
    Ok(Some(t))
}

pub fn read_chain(dir: &Path) -> Result<StoredChain> {
    let mpath = dir.join(MANIFEST);
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(&mpath).map_err(|e| bad(&mpath, e))?))?;
    let dpath = dir.join(DRAWS);
    let (header, rows) = read_numeric(&dpath)?;
    let n = manifest.node_names.len();
    let draws = match manifest.model {
        ModelKind::Rg => {
            let (a, l) = (column(&dpath, &header, "alpha")?, column(&dpath, &header, "loglik_network")?);
            ChainDraws::Homogeneous(BaselineOutput {
                draws: rows.iter().map(|r| HomogeneousDraw { alpha: r[a] }).collect(),
                loglik_network: rows.iter().map(|r| r[l]).collect(),
                acceptance: manifest.baseline_acceptance.unwrap_or(f64::NAN),
            })
        }
        ModelKind::RgCov => {
            let a0 = column(&dpath, &header, "alpha_1")?;
            let (b, l) = (column(&dpath, &header, "beta")?, column(&dpath, &header, "loglik_network")?);
            ChainDraws::Covariate(BaselineOutput {
                draws: rows
                    .iter()
                    .map(|r| CovariateDraw {
                        alpha: r[a0..a0 + n].to_vec(),
                        beta: r[b],
                    })
                    .collect(),
                loglik_network: rows.iter().map(|r| r[l]).collect(),
                acceptance: manifest.baseline_acceptance.unwrap_or(f64::NAN),
            })
        }
        _ => read_msls_draws(dir, &manifest, &dpath, &header, &rows)?,
    };
    let trace = read_trace(&dir.join(TRACE))?;
    Ok(StoredChain { manifest, draws, trace })
}

fn read_msls_draws(dir: &Path, m: &Manifest, dpath: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<ChainDraws> {
    let (n, k, t_len) = (m.node_names.len(), m.n_states, m.n_periods);
    let a0 = if n > 0 { column(dpath, header, "alpha_1")? } else { 1 };
    let z0 = a0 + n;
    let s0 = column(dpath, header, "sigma2_1")?;
    let idx = |name: &str| column(dpath, header, name);
    let (g0, g1, ph, be) = (idx("gamma0")?, idx("gamma1")?, idx("phi")?, idx("beta")?);
    let de = header.iter().position(|h| h == "delta");
    let (lc, ln) = (idx("loglik_complete")?, idx("loglik_network")?);
    let mut trans: Vec<Array2<f64>> = vec![Array2::from_elem((k, k), 1.0); rows.len()];
    if k > 1 {
        let tpath = dir.join(TRANSITIONS);
        let (_, trows) = read_numeric(&tpath)?;
        for r in trows {
            let (h, a, b) = (r[0] as usize, r[1] as usize, r[2] as usize);
            if h == 0 || h > rows.len() || a == 0 || a > k || b == 0 || b > k {
                return Err(bad(&tpath, format!("index out of range in row {r:?}")));
            }
            trans[h - 1][[a - 1, b - 1]] = r[3];
        }
    }
    let states: Vec<Vec<usize>> = if k > 1 {
        let spath = dir.join(STATES);
        let (_, srows) = read_numeric(&spath)?;
        if srows.len() != rows.len() {
            return Err(bad(&spath, format!("{} state rows for {} draws", srows.len(), rows.len())));
        }
        srows.iter().map(|r| r[1..].iter().map(|v| *v as usize - 1).collect()).collect()
    } else {
        vec![vec![0; t_len]; rows.len()]
    };
    let mut draws = Vec::with_capacity(rows.len());
    for (h, r) in rows.iter().enumerate() {
        let params = ModelParams {
            alpha: r[a0..a0 + n].to_vec(),
            zeta: Array2::from_shape_vec((n, k), r[z0..z0 + n * k].to_vec()).map_err(|e| bad(dpath, e))?,
            sigma2: r[s0..s0 + k].to_vec(),
            gamma0: r[g0],
            gamma1: r[g1],
            phi: r[ph],
            trans: trans[h].clone(),
            beta: r[be],
            delta: de.map(|c| r[c]),
        };
        draws.push(PosteriorDraw {
            params,
            states: StateSequence {
                states: states[h].clone(),
            },
        });
    }
    Ok(ChainDraws::Msls {
        draws,
        loglik_complete: rows.iter().map(|r| r[lc]).collect(),
        loglik_network: rows.iter().map(|r| r[ln]).collect(),
    })
}

/// Resolves a data path recorded in a manifest relative to the chain directory
/// when it is not absolute.
pub fn resolve(dir: &Path, recorded: &str) -> PathBuf {
    let p = Path::new(recorded);
    if p.is_absolute() || p.exists() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{simulate_layer, SimulationScenario};
    use crate::gibbs::run_chain;
    use crate::selection::fit_baselines;

    fn small() -> crate::generative::SimulatedLayer {
        simulate_layer(&SimulationScenario {
            n_nodes: 5,
            n_periods: 8,
            centers: vec![vec![-0.3, -0.3, 0.0, 0.3, 0.3], vec![-0.9, -0.9, 0.0, 0.9, 0.9]],
            ..Default::default()
        })
        .unwrap()
    }

    fn cfg(variant: ModelVariant) -> McmcConfig {
        McmcConfig {
            n_iter: 40,
            burn_in: 20,
            thin: 5,
            variant,
            ..Default::default()
        }
    }

    #[test]
    fn msls_round_trip() {
        let sim = small();
        let dir = tempfile::tempdir().unwrap();
        let out = run_chain(&sim.layer, &PriorSpec::weak(2), &cfg(ModelVariant::Full)).unwrap();
        write_msls_chain(dir.path(), ModelKind::M1, &out, &sim.layer.node_names, 8, None).unwrap();
        let back = read_chain(dir.path()).unwrap();
        assert_eq!(back.manifest.model, ModelKind::M1);
        assert_eq!(back.manifest.config, out.config);
        assert_eq!(back.trace.as_ref(), out.trace.as_ref());
        match back.draws {
            ChainDraws::Msls { draws, loglik_complete, loglik_network } => {
                assert_eq!(draws, out.draws);
                assert_eq!(loglik_complete, out.loglik_complete);
                assert_eq!(loglik_network, out.loglik_network);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn static_model_has_no_states_file() {
        let sim = small();
        let dir = tempfile::tempdir().unwrap();
        let out = run_chain(&sim.layer, &PriorSpec::weak(1), &McmcConfig { record_trace: false, ..cfg(ModelVariant::Static) }).unwrap();
        write_msls_chain(dir.path(), ModelKind::M3, &out, &sim.layer.node_names, 8, None).unwrap();
        assert!(!dir.path().join(STATES).exists());
        assert!(!dir.path().join(TRACE).exists());
        let tr = std::fs::read_to_string(dir.path().join(TRANSITIONS)).unwrap();
        assert_eq!(tr.trim(), "draw,from,to,prob");
        let back = read_chain(dir.path()).unwrap();
        let ChainDraws::Msls { draws, .. } = back.draws else { panic!() };
        assert_eq!(draws, out.draws);
    }

    #[test]
    fn baseline_round_trip() {
        let sim = small();
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(ModelVariant::Full);
        let pri = PriorSpec::weak(1);
        let (h, v) = fit_baselines(&sim.layer, &pri, &c).unwrap();
        write_homogeneous_chain(&dir.path().join("rg"), &h, &c, &pri, &sim.layer.node_names, 8, None).unwrap();
        write_covariate_chain(&dir.path().join("cov"), &v, &c, &pri, &sim.layer.node_names, 8, None).unwrap();
        assert_eq!(read_chain(&dir.path().join("rg")).unwrap().draws, ChainDraws::Homogeneous(h));
        assert_eq!(read_chain(&dir.path().join("cov")).unwrap().draws, ChainDraws::Covariate(v));
    }

    #[test]
    fn model_labels() {
        for m in [ModelKind::M1, ModelKind::M2, ModelKind::M3, ModelKind::Rg, ModelKind::RgCov] {
            assert_eq!(ModelKind::parse(m.label()), Some(m));
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.label()));
        }
        assert_eq!(ModelKind::parse("m4"), None);
    }
}

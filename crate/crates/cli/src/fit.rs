use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use msls::data::{filter_inactive, load_layer};
use msls::gibbs::{run_chain, McmcConfig};
use msls::model::{Layer, PriorSpec};
use msls::persist::{write_covariate_chain, write_homogeneous_chain, write_msls_chain, DataSources, ModelKind};
use msls::selection::{fit_covariate, fit_homogeneous};

use crate::config::ConfigFile;

pub struct LayerInput {
    pub name: Option<String>,
    pub edges: PathBuf,
    pub leaning: PathBuf,
    pub exposure: Option<PathBuf>,
}

impl LayerInput {
    pub fn from_dir(dir: &Path) -> anyhow::Result<Self> {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .with_context(|| format!("layer directory {} has no name", dir.display()))?;
        let exposure = dir.join("exposure.csv");
        Ok(LayerInput {
            name: Some(name),
            edges: dir.join("edges.csv"),
            leaning: dir.join("leaning.csv"),
            exposure: exposure.exists().then_some(exposure),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitSettings {
    pub mcmc: McmcConfig,
    pub priors: PriorSpec,
    pub max_gap: Option<usize>,
}

pub fn settings(config: Option<&Path>, model: ModelKind, seed: Option<u64>) -> anyhow::Result<FitSettings> {
    let file = config.map(ConfigFile::load).transpose()?;
    let mut mcmc = match &file {
        Some(f) => {
            f.check_sections(&["mcmc", "priors", "data"])?;
            f.overlay_with(Some("mcmc"), &McmcConfig::default(), &["adapt_until"])?
        }
        None => McmcConfig::default(),
    };
    if let Some(v) = model.variant() {
        mcmc.variant = v;
    }
    if let Some(s) = seed {
        mcmc.seed = s;
    }
    let k = if model.variant().is_some() { mcmc.effective_states() } else { 1 };
    let base = PriorSpec::weak(k);
    let priors = match &file {
        Some(f) => f.overlay(Some("priors"), &base)?,
        None => base,
    };
    let mut max_gap = None;
    if let Some(f) = &file {
        mcmc.validate(0).map_err(|e| f.semantic(Some("mcmc"), &e.to_string()))?;
        priors.validate(k).map_err(|e| f.semantic(Some("priors"), &e.to_string()))?;
        if let Some(data) = f.table(Some("data"))? {
            for (key, v) in data {
                let line = f.key_line(Some("data"), key);
                match (key.as_str(), v) {
                    ("max_gap", toml::Value::Integer(g)) if *g >= 0 => max_gap = Some(*g as usize),
                    ("max_gap", _) => bail!(f.error(line, "max_gap must be a nonnegative integer")),
                    _ => bail!(f.error(line, format!("unknown key `{key}` (known: max_gap)"))),
                }
            }
        }
    }
    Ok(FitSettings { mcmc, priors, max_gap })
}

fn absolute(p: &Path) -> String {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()).to_string_lossy().into_owned()
}

/// Loads a layer and applies the inactivity filter when configured.
pub fn prepare_layer(input: &LayerInput, max_gap: Option<usize>) -> anyhow::Result<(Layer, Vec<String>)> {
    let layer = load_layer(&input.edges, &input.leaning, input.exposure.as_deref())
        .with_context(|| format!("loading {}", input.edges.display()))?;
    match max_gap {
        Some(g) => Ok(filter_inactive(&layer, g)?),
        None => Ok((layer, Vec::new())),
    }
}

fn fit_one(input: &LayerInput, settings: &FitSettings, model: ModelKind, out: &Path, stream: u64) -> anyhow::Result<String> {
    let (layer, removed) = prepare_layer(input, settings.max_gap)?;
    let mut cfg = settings.mcmc.clone();
    cfg.stream += stream;
    let data = Some(DataSources {
        edges: absolute(&input.edges),
        leaning: absolute(&input.leaning),
        exposure: input.exposure.as_deref().map(absolute),
        max_gap: settings.max_gap,
    });
    let (names, t_len) = (&layer.node_names, layer.n_periods);
    let summary = match model {
        ModelKind::M1 | ModelKind::M2 | ModelKind::M3 => {
            let chain = run_chain(&layer, &settings.priors, &cfg)?;
            write_msls_chain(out, model, &chain, names, t_len, data)?;
            let a = &chain.acceptance;
            format!(
                "{} draws; acceptance alpha {:.3}, zeta {:.3}, gamma {:.3}, phi {:.3}",
                chain.draws.len(),
                a.alpha,
                a.zeta,
                a.gamma,
                a.phi
            )
        }
        ModelKind::Rg | ModelKind::RgCov => {
            if layer.exposure.is_some() {
                eprintln!("note: {} ignores the exposure series", model.label());
            }
            if model == ModelKind::Rg {
                let o = fit_homogeneous(&layer, &settings.priors, &cfg)?;
                write_homogeneous_chain(out, &o, &cfg, &settings.priors, names, t_len, data)?;
                format!("{} draws; acceptance {:.3}", o.draws.len(), o.acceptance)
            } else {
                let o = fit_covariate(&layer, &settings.priors, &cfg)?;
                write_covariate_chain(out, &o, &cfg, &settings.priors, names, t_len, data)?;
                format!("{} draws; acceptance {:.3}", o.draws.len(), o.acceptance)
            }
        }
    };
    if !removed.is_empty() {
        std::fs::write(out.join("removed_nodes.txt"), removed.join("\n") + "\n")?;
    }
    Ok(summary)
}

pub fn run(inputs: &[LayerInput], config: Option<&Path>, model: ModelKind, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let settings = settings(config, model, seed)?;
    let targets: Vec<PathBuf> = inputs
        .iter()
        .map(|i| match &i.name {
            Some(n) if inputs.len() > 1 => out.join(n),
            _ => out.to_path_buf(),
        })
        .collect();
    let results: Vec<anyhow::Result<String>> = std::thread::scope(|s| {
        let handles: Vec<_> = inputs
            .iter()
            .zip(&targets)
            .enumerate()
            .map(|(k, (input, target))| {
                let settings = &settings;
                s.spawn(move || fit_one(input, settings, model, target, k as u64))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fit thread panicked")).collect()
    });
    for ((input, target), r) in inputs.iter().zip(&targets).zip(results) {
        let label = input.name.clone().unwrap_or_else(|| input.edges.display().to_string());
        let summary = r.with_context(|| format!("layer {label}"))?;
        println!("{} {label}: {summary} -> {}", model.label(), target.display());
    }
    Ok(())
}

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use msls::diagnostics::{diagnostics_table, write_diagnostics_csv};
use msls::generative::layer_rng;
use msls::model::Layer;
use msls::persist::{read_chain, resolve, ChainDraws, StoredChain};
use msls::selection::{dic, lppd_draws, ppc_strength, write_ppc_csv, write_selection_csv, PpcReport, SelectionRow};

use crate::fit::{prepare_layer, LayerInput};

/// DIC of a chain; a single draw has no variance, so DIC is `-2 loglik`.
pub fn dic_or_single(loglik: &[f64]) -> msls::Result<f64> {
    match loglik {
        [ll] if ll.is_finite() => Ok(-2.0 * ll),
        _ => dic(loglik),
    }
}

fn chain_layer(dir: &Path, chain: &StoredChain) -> anyhow::Result<Layer> {
    let Some(src) = &chain.manifest.data else {
        bail!(msls::MslsError::Validation(format!("{}: manifest records no data files", dir.display())));
    };
    let input = LayerInput {
        name: None,
        edges: resolve(dir, &src.edges),
        leaning: resolve(dir, &src.leaning),
        exposure: src.exposure.as_deref().map(|e| resolve(dir, e)),
    };
    let (layer, _) = prepare_layer(&input, src.max_gap)?;
    if layer.node_names != chain.manifest.node_names || layer.n_periods != chain.manifest.n_periods {
        bail!(msls::MslsError::Validation(format!(
            "{}: data files no longer match the fitted layer",
            dir.display()
        )));
    }
    Ok(layer)
}

fn selection_row(label: &str, chain: &StoredChain, layer: &Layer) -> anyhow::Result<SelectionRow> {
    let lppd = match &chain.draws {
        ChainDraws::Msls { draws, .. } => lppd_draws(layer, draws)?,
        ChainDraws::Homogeneous(o) => lppd_draws(layer, &o.draws)?,
        ChainDraws::Covariate(o) => lppd_draws(layer, &o.draws)?,
    };
    Ok(SelectionRow {
        model: label.to_string(),
        n_draws: chain.draws.len(),
        dic_complete: chain.draws.loglik_complete().map(dic_or_single).transpose()?,
        dic_network: dic_or_single(chain.draws.loglik_network())?,
        lppd,
    })
}

fn ppc(chain: &StoredChain, layer: &Layer, seed: u64) -> anyhow::Result<PpcReport> {
    let mut rng = layer_rng(seed, 3000 + chain.manifest.config.stream);
    Ok(match &chain.draws {
        ChainDraws::Msls { draws, .. } => ppc_strength(draws, layer, &mut rng)?,
        ChainDraws::Homogeneous(o) => ppc_strength(&o.draws, layer, &mut rng)?,
        ChainDraws::Covariate(o) => ppc_strength(&o.draws, layer, &mut rng)?,
    })
}

/// Model labels, falling back to directory names when a model appears twice.
fn labels(dirs: &[PathBuf], chains: &[StoredChain]) -> Vec<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in chains {
        *counts.entry(c.manifest.model.label()).or_default() += 1;
    }
    dirs.iter()
        .zip(chains)
        .map(|(d, c)| {
            let m = c.manifest.model.label();
            if counts[m] > 1 {
                let name = d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
                format!("{m}:{name}")
            } else {
                m.to_string()
            }
        })
        .collect()
}

pub fn run(dirs: &[PathBuf], out: &Path, seed: u64) -> anyhow::Result<()> {
    let chains: Vec<StoredChain> = dirs
        .iter()
        .map(|d| read_chain(d).with_context(|| format!("reading chain {}", d.display())))
        .collect::<anyhow::Result<_>>()?;
    let labels = labels(dirs, &chains);
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut ppc_csv: Vec<u8> = Vec::new();
    for ((dir, chain), label) in dirs.iter().zip(&chains).zip(&labels) {
        let layer = chain_layer(dir, chain)?;
        rows.push(selection_row(label, chain, &layer).with_context(|| format!("model comparison for {label}"))?);
        let report = ppc(chain, &layer, seed).with_context(|| format!("predictive checks for {label}"))?;
        let mut buf = Vec::new();
        write_ppc_csv(label, &report, &mut buf)?;
        let body = if ppc_csv.is_empty() {
            &buf[..]
        } else {
            let nl = buf.iter().position(|b| *b == b'\n').map_or(buf.len(), |p| p + 1);
            &buf[nl..]
        };
        ppc_csv.extend_from_slice(body);
        if let Some(trace) = &chain.trace {
            let cfg = &chain.manifest.config;
            let table = diagnostics_table(trace, cfg.burn_in, cfg.thin)?;
            let name = format!("diagnostics_{}.csv", label.replace(':', "_"));
            write_diagnostics_csv(&table, BufWriter::new(File::create(out.join(name))?))?;
        }
    }
    write_selection_csv(&rows, BufWriter::new(File::create(out.join("selection.csv"))?))?;
    std::fs::write(out.join("ppc.csv"), ppc_csv)?;
    println!("{:<16} {:>8} {:>16} {:>16} {:>16}", "model", "draws", "DIC complete", "DIC network", "lppd");
    for r in &rows {
        let dc = r.dic_complete.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        println!("{:<16} {:>8} {:>16} {:>16.2} {:>16.2}", r.model, r.n_draws, dc, r.dic_network, r.lppd);
    }
    println!("report written to {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_draw_dic() {
        assert_eq!(dic_or_single(&[-10.5]).unwrap(), 21.0);
        assert_eq!(dic_or_single(&[-10.0, -12.0]).unwrap(), dic(&[-10.0, -12.0]).unwrap());
        assert!(dic_or_single(&[]).is_err());
        assert!(dic_or_single(&[f64::NAN]).is_err());
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use msls::generative::layer_rng;
use msls::moments::{dispersion_index, expected_strength, mc_strength_oracle, strength_sd, StrengthMomentSpec};

use crate::config::ConfigFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn items(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Cartesian grid of moment specifications. Each `sigma2` entry is a scalar
/// (single state) or one variance per state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_nodes: OneOrMany<usize>,
    pub latent_dim: OneOrMany<usize>,
    pub alpha: OneOrMany<f64>,
    pub beta: OneOrMany<f64>,
    pub sigma2: Vec<OneOrMany<f64>>,
    pub q_row: Vec<f64>,
    /// Oracle replicates per grid point.
    pub reps: usize,
    pub seed: u64,
    /// Also estimate the mean weighted clustering coefficient.
    pub clustering: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_nodes: OneOrMany::One(100),
            latent_dim: OneOrMany::One(1),
            alpha: OneOrMany::One(0.0),
            beta: OneOrMany::One(1.0),
            sigma2: vec![OneOrMany::One(1.0)],
            q_row: vec![1.0],
            reps: 200,
            seed: 1,
            clustering: false,
        }
    }
}

impl GridConfig {
    pub fn specs(&self) -> Vec<StrengthMomentSpec> {
        let mut out = Vec::new();
        for n in self.n_nodes.items() {
            for d in self.latent_dim.items() {
                for a in self.alpha.items() {
                    for b in self.beta.items() {
                        for s in &self.sigma2 {
                            out.push(StrengthMomentSpec {
                                n_nodes: n,
                                latent_dim: d,
                                alpha: a,
                                beta: b,
                                sigma2: s.items(),
                                q_row: self.q_row.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_grid<W: Write>(grid: &GridConfig, oracle: bool, mut out: W) -> anyhow::Result<()> {
    let mut header = vec!["n_nodes", "latent_dim", "alpha", "beta", "sigma2", "q_row", "mean", "sd", "dispersion"];
    if oracle {
        header.extend(["mc_mean", "mc_mean_se", "mc_sd", "mc_sd_se", "mc_dispersion", "mc_dispersion_se"]);
        if grid.clustering {
            header.extend(["mc_clustering", "mc_clustering_se"]);
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (r, spec) in grid.specs().iter().enumerate() {
        spec.validate()?;
        let disp = dispersion_index(spec)?;
        let mut row = vec![
            spec.n_nodes.to_string(),
            spec.latent_dim.to_string(),
            spec.alpha.to_string(),
            spec.beta.to_string(),
            join(&spec.sigma2),
            join(&spec.q_row),
            expected_strength(spec).to_string(),
            strength_sd(spec).to_string(),
            disp.to_string(),
        ];
        if oracle {
            let mc = mc_strength_oracle(spec, grid.reps, grid.clustering, &mut layer_rng(grid.seed, r as u64))?;
            for e in [mc.mean, mc.sd, mc.dispersion] {
                row.push(e.value.to_string());
                row.push(e.se.to_string());
            }
            if grid.clustering {
                match mc.clustering {
                    Some(c) => row.extend([c.value.to_string(), c.se.to_string()]),
                    None => row.extend(["NA".to_string(), "NA".to_string()]),
                }
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn run(grid_path: &Path, oracle: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let file = ConfigFile::load(grid_path)?;
    let grid: GridConfig = file.overlay(None, &GridConfig::default())?;
    for spec in grid.specs() {
        spec.validate().map_err(|e| file.semantic(None, &e.to_string()))?;
    }
    if oracle && grid.reps < 2 {
        return Err(file.semantic(None, "reps must be at least 2").into());
    }
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_grid(&grid, oracle, BufWriter::new(File::create(p)?))
        }
        None => write_grid(&grid, oracle, std::io::stdout().lock()),
    }
}

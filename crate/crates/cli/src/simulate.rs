use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;

use msls::data::{write_edge_list, write_leaning};
use msls::generative::{simulate_layer, SimulationScenario};

use crate::config::ConfigFile;

/// Two equal groups placed at `-c` and `+c`.
fn group_centers(n: usize, c: f64) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { -c } else { c }).collect()
}

pub fn scenario_from(config: Option<&Path>, seed: Option<u64>) -> anyhow::Result<SimulationScenario> {
    let mut sc = SimulationScenario::default();
    if let Some(path) = config {
        let file = ConfigFile::load(path)?;
        sc = file.overlay(None, &sc)?;
        if !file.has_key(None, "centers") {
            sc.centers = (0..sc.n_states).map(|k| group_centers(sc.n_nodes, 0.25 + 0.5 * k as f64)).collect();
        }
        sc.validate().map_err(|e| file.semantic(None, &e.to_string()))?;
    }
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

pub fn run(config: Option<&Path>, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let sc = scenario_from(config, seed)?;
    let sim = simulate_layer(&sc)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let names = &sim.layer.node_names;
    write_edge_list(names, &sim.layer.weights, true, BufWriter::new(File::create(out.join("edges.csv"))?))?;
    write_leaning(names, &sim.layer.leaning, BufWriter::new(File::create(out.join("leaning.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("truth.json"))?), &sim.truth(&sc))?;
    println!(
        "simulated {} nodes x {} periods ({} states, seed {}) into {}",
        sc.n_nodes,
        sc.n_periods,
        sc.n_states,
        sc.seed,
        out.display()
    );
    Ok(())
}

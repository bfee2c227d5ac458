//! Reading and writing the text formats, bipartite projection, inactivity
//! filtering, the slant index and correlation utilities.
//!
//! Formats (UTF-8 CSV with a header row, periods are 1-based day indices):
//! - edge list `i,j,t,w`: one row per unordered dyad and period, absent rows are 0
//! - leaning `i,t,leaning`: one row per node and period
//! - exposure `t,exposure`: one row per period
//! - token counts `token,entity,t,count` and party scores `party,score`

pub mod slant;

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::Deserialize;

use crate::error::{MslsError, Result};
use crate::model::Layer;

pub use slant::{
    cosine_similarity, fixed_effect_residuals, load_party_scores, load_token_counts, slant_index, write_slant_csv, SlantInputs,
    SlantOutput, TokenCount,
};

/// Weights of an edge-list file before leaning is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    /// First-appearance order.
    pub node_names: Vec<String>,
    /// `[t, i, j]`, symmetric with zero diagonal.
    pub weights: Array3<u64>,
}

impl EdgeList {
    pub fn n_periods(&self) -> usize {
        self.weights.dim().0
    }

    pub fn n_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.node_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect()
    }
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    i: String,
    j: String,
    t: i64,
    w: i64,
}

fn ingestion<T>(msg: impl Into<String>) -> Result<T> {
    Err(MslsError::Ingestion(msg.into()))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R, what: &str) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let row: T = rec
            .deserialize(Some(&headers))
            .map_err(|e| MslsError::Ingestion(format!("{what} line {line}: {e}")))?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn read_edge_list<R: Read>(reader: R) -> Result<EdgeList> {
    let rows: Vec<(u64, EdgeRow)> = read_rows(reader, "edge list")?;
    if rows.is_empty() {
        return ingestion("edge list has no rows, so no periods");
    }
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut id = |name: &str, names: &mut Vec<String>| {
        *index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        })
    };
    let mut cells: BTreeMap<(usize, usize, usize), (u64, u64)> = BTreeMap::new();
    let mut duplicates = Vec::new();
    let mut t_max = 0usize;
    for (line, r) in &rows {
        if r.w < 0 {
            return ingestion(format!("edge list line {line}: negative weight {}", r.w));
        }
        if r.t < 1 {
            return ingestion(format!("edge list line {line}: period {} is not a positive day index", r.t));
        }
        if r.i == r.j {
            return ingestion(format!("edge list line {line}: self-loop on '{}'", r.i));
        }
        let (a, b) = (id(&r.i, &mut names), id(&r.j, &mut names));
        let t = r.t as usize;
        t_max = t_max.max(t);
        let key = (t - 1, a.min(b), a.max(b));
        if let Some((first, _)) = cells.get(&key) {
            duplicates.push(format!("({}, {}, {}) on lines {first} and {line}", r.i, r.j, r.t));
        } else {
            cells.insert(key, (*line, r.w as u64));
        }
    }
    if !duplicates.is_empty() {
        return ingestion(format!("duplicate edge rows: {}", duplicates.join("; ")));
    }
    let n = names.len();
    let mut weights = Array3::zeros((t_max, n, n));
    for ((t, a, b), (_, w)) in cells {
        weights[[t, a, b]] = w;
        weights[[t, b, a]] = w;
    }
    Ok(EdgeList {
        node_names: names,
        weights,
    })
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<EdgeList> {
    read_edge_list(std::fs::File::open(path)?)
}

/// Writes dyads `i < j` in node order, periods ascending. Zero rows are only
/// written with `include_zeros`, which keeps isolated nodes and empty trailing
/// periods visible to the reader.
pub fn write_edge_list<W: Write>(node_names: &[String], weights: &Array3<u64>, include_zeros: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "t", "w"])?;
    let (t_len, n, _) = weights.dim();
    for t in 0..t_len {
        for i in 0..n {
            for j in (i + 1)..n {
                let v = weights[[t, i, j]];
                if v > 0 || include_zeros {
                    w.write_record([node_names[i].as_str(), node_names[j].as_str(), &(t + 1).to_string(), &v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct LeaningRow {
    i: String,
    t: i64,
    leaning: f64,
}

/// Leaning table `[t, i]` aligned to `node_names`; every node and period must
/// appear exactly once.
pub fn read_leaning<R: Read>(reader: R, node_names: &[String], n_periods: usize) -> Result<Array2<f64>> {
    let rows: Vec<(u64, LeaningRow)> = read_rows(reader, "leaning")?;
    let index: HashMap<&str, usize> = node_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut out = Array2::from_elem((n_periods, node_names.len()), f64::NAN);
    for (line, r) in rows {
        let Some(&i) = index.get(r.i.as_str()) else {
            return ingestion(format!("leaning line {line}: unknown node '{}'", r.i));
        };
        if r.t < 1 || r.t as usize > n_periods {
            return ingestion(format!("leaning line {line}: period {} outside 1..={n_periods}", r.t));
        }
        let cell = &mut out[[r.t as usize - 1, i]];
        if !cell.is_nan() {
            return ingestion(format!("leaning line {line}: duplicate row for ({}, {})", r.i, r.t));
        }
        if !r.leaning.is_finite() {
            return ingestion(format!("leaning line {line}: non-finite value"));
        }
        *cell = r.leaning;
    }
    if let Some(((t, i), _)) = out.indexed_iter().find(|(_, v)| v.is_nan()) {
        return ingestion(format!("leaning missing for node '{}' at period {}", node_names[i], t + 1));
    }
    Ok(out)
}

pub fn load_leaning(path: impl AsRef<Path>, node_names: &[String], n_periods: usize) -> Result<Array2<f64>> {
    read_leaning(std::fs::File::open(path)?, node_names, n_periods)
}

pub fn write_leaning<W: Write>(node_names: &[String], leaning: &Array2<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "t", "leaning"])?;
    for ((t, i), v) in leaning.indexed_iter() {
        w.write_record([node_names[i].as_str(), &(t + 1).to_string(), &format!("{v:.17}")])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ExposureRow {
    t: i64,
    exposure: f64,
}

pub fn read_exposure<R: Read>(reader: R, n_periods: usize) -> Result<Vec<f64>> {
    let rows: Vec<(u64, ExposureRow)> = read_rows(reader, "exposure")?;
    let mut out = vec![f64::NAN; n_periods];
    for (line, r) in rows {
        if r.t < 1 || r.t as usize > n_periods {
            return ingestion(format!("exposure line {line}: period {} outside 1..={n_periods}", r.t));
        }
        if !out[r.t as usize - 1].is_nan() {
            return ingestion(format!("exposure line {line}: duplicate period {}", r.t));
        }
        if !(r.exposure > 0.0 && r.exposure.is_finite()) {
            return ingestion(format!("exposure line {line}: value must be positive"));
        }
        out[r.t as usize - 1] = r.exposure;
    }
    if let Some(t) = out.iter().position(|v| v.is_nan()) {
        return ingestion(format!("exposure missing for period {}", t + 1));
    }
    Ok(out)
}

pub fn load_exposure(path: impl AsRef<Path>, n_periods: usize) -> Result<Vec<f64>> {
    read_exposure(std::fs::File::open(path)?, n_periods)
}

/// Edge list plus leaning (and optional exposure) files as one layer.
pub fn load_layer(edges: impl AsRef<Path>, leaning: impl AsRef<Path>, exposure: Option<&Path>) -> Result<Layer> {
    let el = load_edge_list(edges)?;
    let t = el.n_periods();
    let l = load_leaning(leaning, &el.node_names, t)?;
    let e = exposure.map(|p| load_exposure(p, t)).transpose()?;
    Layer::new(el.weights, l, el.node_names, e)
}

/// One-mode projection `A = B'B` of a user-by-page count matrix. The diagonal
/// holds each page's total interactions and is ignored by the model.
pub fn project_bipartite(b: &Array2<u64>) -> Array2<u64> {
    let (users, pages) = b.dim();
    let mut a = Array2::zeros((pages, pages));
    for u in 0..users {
        let row = b.row(u);
        for p in 0..pages {
            let x = row[p];
            if x == 0 {
                continue;
            }
            for q in p..pages {
                a[[p, q]] += x * row[q];
            }
        }
    }
    for p in 0..pages {
        for q in (p + 1)..pages {
            a[[q, p]] = a[[p, q]];
        }
    }
    a
}

/// Removes nodes whose strength is zero for more than `max_gap` consecutive
/// periods. Removing a node lowers its partners' strengths, so the rule is
/// reapplied until nothing changes.
pub fn filter_inactive(layer: &Layer, max_gap: usize) -> Result<(Layer, Vec<String>)> {
    let mut keep: Vec<usize> = (0..layer.n_nodes).collect();
    let mut removed = Vec::new();
    loop {
        let drop: Vec<usize> = keep
            .iter()
            .copied()
            .filter(|&i| {
                let mut run = 0usize;
                let mut longest = 0usize;
                for t in 0..layer.n_periods {
                    let s: u64 = keep.iter().map(|&j| layer.weights[[t, i, j]]).sum();
                    run = if s == 0 { run + 1 } else { 0 };
                    longest = longest.max(run);
                }
                longest > max_gap
            })
            .collect();
        if drop.is_empty() {
            break;
        }
        keep.retain(|i| !drop.contains(i));
        removed.extend(drop.iter().map(|&i| layer.node_names[i].clone()));
    }
    let n = keep.len();
    let t_len = layer.n_periods;
    let weights = Array3::from_shape_fn((t_len, n, n), |(t, a, b)| layer.weights[[t, keep[a], keep[b]]]);
    let leaning = Array2::from_shape_fn((t_len, n), |(t, a)| layer.leaning[[t, keep[a]]]);
    let names = keep.iter().map(|&i| layer.node_names[i].clone()).collect();
    Ok((Layer::new(weights, leaning, names, layer.exposure.clone())?, removed))
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(MslsError::Validation(format!(
            "correlation needs equal lengths of at least 3, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MslsError::Validation("correlation inputs must be finite".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MslsError::Degenerate("correlation with a constant series".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{default_node_names, layer_rng};
    use ndarray::array;
    use rand::RngExt;

    #[test]
    fn single_row_edge_list() {
        let el = read_edge_list("i,j,t,w\na,b,1,5\n".as_bytes()).unwrap();
        assert_eq!(el.node_names, ["a", "b"]);
        assert_eq!(el.weights, array![[[0, 5], [5, 0]]]);
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!(read_edge_list("i,j,t,w\n".as_bytes()), Err(MslsError::Ingestion(_))));
        let dup = read_edge_list("i,j,t,w\na,b,1,5\nc,a,1,1\nb,a,1,2\n".as_bytes()).unwrap_err();
        let msg = dup.to_string();
        assert!(msg.contains("(b, a, 1)") && msg.contains("lines 2 and 4"), "{msg}");
        assert!(read_edge_list("i,j,t,w\na,b,1,-3\n".as_bytes()).is_err());
        assert!(read_edge_list("i,j,t,w\na,a,1,3\n".as_bytes()).is_err());
        assert!(read_edge_list("i,j,t,w\na,b,0,3\n".as_bytes()).is_err());
        assert!(read_edge_list("i,j,t,w\na,b,x,3\n".as_bytes()).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "i,j,t,w\nx,y,1,3\nz,x,2,4\ny,z,3,1\nx,y,3,7\n";
        let el = read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(el.node_names, ["x", "y", "z"]);
        assert_eq!(el.n_periods(), 3);
        let mut buf = Vec::new();
        write_edge_list(&el.node_names, &el.weights, false, &mut buf).unwrap();
        let out = String::from_utf8(buf).unwrap();
        // same rows up to order and orientation
        let norm = |s: &str| {
            let mut v: Vec<String> = s
                .lines()
                .skip(1)
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    let (a, b) = if f[0] < f[1] { (f[0], f[1]) } else { (f[1], f[0]) };
                    format!("{a},{b},{},{}", f[2], f[3])
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(norm(text), norm(&out));
        assert_eq!(read_edge_list(out.as_bytes()).unwrap().weights, el.weights);
        let mut full = Vec::new();
        let mut w = el.weights.clone();
        w.slice_mut(ndarray::s![.., 0, 1]).fill(0);
        w.slice_mut(ndarray::s![.., 1, 0]).fill(0);
        write_edge_list(&el.node_names, &w, true, &mut full).unwrap();
        let back = read_edge_list(full.as_slice()).unwrap();
        assert_eq!(String::from_utf8(full).unwrap().lines().count(), 10);
        assert_eq!(back.weights, w);
    }

    #[test]
    fn leaning_and_exposure() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let l = read_leaning("i,t,leaning\nb,1,0.2\na,1,0.7\na,2,0.4\nb,2,0.9\n".as_bytes(), &names, 2).unwrap();
        assert_eq!(l, array![[0.7, 0.2], [0.4, 0.9]]);
        assert!(read_leaning("i,t,leaning\na,1,0.5\n".as_bytes(), &names, 1).is_err());
        assert!(read_leaning("i,t,leaning\na,1,0.5\nc,1,0.5\n".as_bytes(), &names, 1).is_err());
        assert!(read_leaning("i,t,leaning\na,1,0.5\na,1,0.5\nb,1,0.5\n".as_bytes(), &names, 1).is_err());
        let mut buf = Vec::new();
        write_leaning(&names, &l, &mut buf).unwrap();
        assert_eq!(read_leaning(buf.as_slice(), &names, 2).unwrap(), l);
        assert_eq!(read_exposure("t,exposure\n2,5\n1,4\n".as_bytes(), 2).unwrap(), vec![4.0, 5.0]);
        assert!(read_exposure("t,exposure\n1,0\n".as_bytes(), 1).is_err());
        assert!(read_exposure("t,exposure\n1,3\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn projection_examples() {
        let b = array![[1, 1], [1, 0], [0, 1]];
        assert_eq!(project_bipartite(&b), array![[2, 1], [1, 2]]);
        let orth = array![[1, 0, 0], [0, 2, 0], [0, 0, 3], [1, 0, 0]];
        let a = project_bipartite(&orth);
        assert!(a.indexed_iter().all(|((p, q), v)| p == q || *v == 0));
    }

    #[test]
    fn projection_counts_common_users() {
        let mut rng = layer_rng(21, 0);
        let b = Array2::from_shape_fn((50, 8), |_| rng.random_bool(0.4) as u64);
        let a = project_bipartite(&b);
        for p in 0..8 {
            for q in 0..8 {
                let common = (0..50).filter(|&u| b[[u, p]] == 1 && b[[u, q]] == 1).count() as u64;
                assert_eq!(a[[p, q]], common);
            }
        }
        // positive semidefinite: x'Ax = |Bx|^2 >= 0
        for _ in 0..20 {
            let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>() - 0.5).collect();
            let q: f64 = (0..8).flat_map(|p| (0..8).map(move |r| (p, r))).map(|(p, r)| x[p] * a[[p, r]] as f64 * x[r]).sum();
            assert!(q >= -1e-9);
        }
    }

    fn panel_with_gap(gap_node: usize, gap: usize, t_len: usize) -> Layer {
        let n = 4;
        let mut w = Array3::zeros((t_len, n, n));
        for t in 0..t_len {
            for i in 0..n {
                for j in (i + 1)..n {
                    let silent = (i == gap_node || j == gap_node) && (2..2 + gap).contains(&t);
                    let v = if silent { 0 } else { 1 };
                    w[[t, i, j]] = v;
                    w[[t, j, i]] = v;
                }
            }
        }
        Layer::new(w, Array2::from_elem((t_len, n), 0.5), default_node_names(n), None).unwrap()
    }

    #[test]
    fn inactivity_rule_boundary() {
        let (l, removed) = filter_inactive(&panel_with_gap(1, 16, 30), 15).unwrap();
        assert_eq!(removed, ["n2"]);
        assert_eq!(l.node_names, ["n1", "n3", "n4"]);
        let (l, removed) = filter_inactive(&panel_with_gap(1, 15, 30), 15).unwrap();
        assert!(removed.is_empty());
        assert_eq!(l, panel_with_gap(1, 15, 30));
    }

    #[test]
    fn inactivity_cascades_and_is_idempotent() {
        // n4 is silent on days 6-25; n3 covers that window through n2 but
        // otherwise only talks to n4, so it goes in the second round
        let (t_len, n) = (45, 4);
        let mut w = Array3::zeros((t_len, n, n));
        for t in 0..t_len {
            let mut set = |i: usize, j: usize, v: u64| {
                w[[t, i, j]] = v;
                w[[t, j, i]] = v;
            };
            let gap = (5..25).contains(&t);
            set(0, 1, 1);
            set(0, 3, u64::from(!gap));
            set(2, 3, u64::from(!gap));
            set(1, 2, u64::from(gap));
        }
        let layer = Layer::new(w, Array2::from_elem((t_len, n), 0.5), default_node_names(n), None).unwrap();
        let (once, removed) = filter_inactive(&layer, 15).unwrap();
        assert_eq!(removed, ["n4", "n3"]);
        let (twice, again) = filter_inactive(&once, 15).unwrap();
        assert!(again.is_empty());
        assert_eq!(once, twice);
    }

    #[test]
    fn pearson() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson_correlation(&x[..2], &x[..2]).is_err());
        assert!(pearson_correlation(&[1.0; 4], &x).is_err());
        let mut rng = layer_rng(2, 0);
        for _ in 0..20 {
            let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            // textbook single-pass formula
            let n = 25.0;
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let saa: f64 = a.iter().map(|x| x * x).sum();
            let sbb: f64 = b.iter().map(|x| x * x).sum();
            let r = (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt());
            assert!((pearson_correlation(&a, &b).unwrap() - r).abs() < 1e-12);
        }
    }
}

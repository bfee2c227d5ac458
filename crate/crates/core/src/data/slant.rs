//! Text-based slant index: party vocabularies by TF-IDF, cosine similarity of
//! each outlet-day to each party, fixed-effects residuals, then a score-weighted
//! sum over parties.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use serde::Deserialize;

use super::{ingestion, read_rows};
use crate::error::{validation, MslsError, Result};

/// Default size of each party's vocabulary.
pub const TOP_TOKENS: usize = 100;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TokenCount {
    pub token: String,
    pub entity: String,
    pub t: i64,
    pub count: f64,
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    party: String,
    score: f64,
}

pub fn read_token_counts<R: Read>(reader: R) -> Result<Vec<TokenCount>> {
    let rows: Vec<(u64, TokenCount)> = read_rows(reader, "token counts")?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if !(r.count >= 0.0 && r.count.is_finite()) {
            return ingestion(format!("token counts line {line}: count must be nonnegative"));
        }
        if r.t < 1 {
            return ingestion(format!("token counts line {line}: period {} is not a positive day index", r.t));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_token_counts(path: impl AsRef<Path>) -> Result<Vec<TokenCount>> {
    read_token_counts(std::fs::File::open(path)?)
}

pub fn read_party_scores<R: Read>(reader: R) -> Result<Vec<(String, f64)>> {
    let rows: Vec<(u64, ScoreRow)> = read_rows(reader, "party scores")?;
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (line, r) in rows {
        if !r.score.is_finite() {
            return ingestion(format!("party scores line {line}: non-finite score"));
        }
        if seen.insert(r.party.clone(), line).is_some() {
            return ingestion(format!("party scores line {line}: duplicate party '{}'", r.party));
        }
        out.push((r.party, r.score));
    }
    Ok(out)
}

pub fn load_party_scores(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    read_party_scores(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlantInputs {
    pub tokens: Vec<String>,
    pub outlets: Vec<String>,
    pub parties: Vec<String>,
    /// `[token, outlet, day]`
    pub outlet_counts: Array3<f64>,
    /// `[token, party]`, pooled over days.
    pub party_counts: Array2<f64>,
    pub scores: Vec<f64>,
    pub top_n: usize,
}

impl SlantInputs {
    /// Entities listed in `scores` are parties, all others outlets. Party
    /// counts are pooled over days.
    pub fn from_records(counts: &[TokenCount], scores: &[(String, f64)], top_n: usize) -> Result<Self> {
        let party_idx: HashMap<&str, usize> = scores.iter().enumerate().map(|(i, (p, _))| (p.as_str(), i)).collect();
        let mut tokens: Vec<String> = Vec::new();
        let mut tok_idx: HashMap<String, usize> = HashMap::new();
        let mut outlets: Vec<String> = Vec::new();
        let mut out_idx: HashMap<String, usize> = HashMap::new();
        let mut n_days = 0usize;
        for c in counts {
            if !tok_idx.contains_key(&c.token) {
                tok_idx.insert(c.token.clone(), tokens.len());
                tokens.push(c.token.clone());
            }
            if !party_idx.contains_key(c.entity.as_str()) {
                n_days = n_days.max(c.t as usize);
                if !out_idx.contains_key(&c.entity) {
                    out_idx.insert(c.entity.clone(), outlets.len());
                    outlets.push(c.entity.clone());
                }
            }
        }
        if outlets.is_empty() || scores.is_empty() {
            return validation("slant needs at least one outlet and one party");
        }
        let mut x = Array3::zeros((tokens.len(), outlets.len(), n_days));
        let mut y = Array2::zeros((tokens.len(), scores.len()));
        for c in counts {
            let k = tok_idx[&c.token];
            match party_idx.get(c.entity.as_str()) {
                Some(&p) => y[[k, p]] += c.count,
                None => x[[k, out_idx[&c.entity], c.t as usize - 1]] += c.count,
            }
        }
        Ok(SlantInputs {
            tokens,
            outlets,
            parties: scores.iter().map(|(p, _)| p.clone()).collect(),
            outlet_counts: x,
            party_counts: y,
            scores: scores.iter().map(|(_, s)| *s).collect(),
            top_n,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (k, o, _) = self.outlet_counts.dim();
        if self.party_counts.dim() != (k, self.parties.len()) || self.tokens.len() != k || self.outlets.len() != o {
            return validation("token, outlet and party dimensions are not aligned");
        }
        if self.scores.len() != self.parties.len() {
            return validation("one score per party is required");
        }
        if self.outlet_counts.iter().chain(self.party_counts.iter()).any(|v| !(*v >= 0.0)) {
            return validation("token counts must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlantOutput {
    /// Token indices chosen for each party, best first.
    pub selected: Vec<Vec<usize>>,
    /// `[party, outlet, day]`
    pub similarity: Array3<f64>,
    /// `[party, outlet, day]`
    pub residuals: Array3<f64>,
    /// `[outlet, day]`
    pub slant: Array2<f64>,
}

/// Term frequency times `ln(P / df)`, parties as documents.
pub fn tfidf(party_counts: &Array2<f64>) -> Array2<f64> {
    let (k, p) = party_counts.dim();
    let mut out = Array2::zeros((k, p));
    for t in 0..k {
        let df = (0..p).filter(|&q| party_counts[[t, q]] > 0.0).count();
        if df == 0 {
            continue;
        }
        let idf = (p as f64 / df as f64).ln();
        for q in 0..p {
            out[[t, q]] = party_counts[[t, q]] * idf;
        }
    }
    out
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Least-squares residuals of `y` on a constant plus outlet and party dummies,
/// dropping the first level of each.
pub fn fixed_effect_residuals(
    y: &[f64],
    outlet: &[usize],
    party: &[usize],
    outlet_names: &[String],
    party_names: &[String],
) -> Result<Vec<f64>> {
    let (n_o, n_p) = (outlet_names.len(), party_names.len());
    let cols = 1 + n_o.saturating_sub(1) + n_p.saturating_sub(1);
    let n = y.len();
    if outlet.len() != n || party.len() != n {
        return validation("regression rows are not aligned");
    }
    let mut names = vec!["constant".to_string()];
    names.extend(outlet_names.iter().skip(1).map(|o| format!("outlet '{o}'")));
    names.extend(party_names.iter().skip(1).map(|p| format!("party '{p}'")));
    let x = DMatrix::from_fn(n, cols, |r, c| {
        if c == 0 {
            1.0
        } else if c < n_o {
            f64::from(outlet[r] == c)
        } else {
            f64::from(party[r] == c - n_o + 1)
        }
    });
    if n < cols {
        return Err(MslsError::Degenerate(format!(
            "fixed-effects design has {n} rows for {cols} columns; collinear levels: {}",
            names.join(", ")
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let bad: Vec<&str> = (0..cols)
        .filter(|&i| r[(i, i)].abs() <= 1e-10 * scale.max(1.0))
        .map(|i| names[i].as_str())
        .collect();
    if !bad.is_empty() {
        return Err(MslsError::Degenerate(format!(
            "fixed-effects design is rank deficient; collinear levels: {}",
            bad.join(", ")
        )));
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let coef = r
        .solve_upper_triangular(&qty.rows(0, cols).into_owned())
        .ok_or_else(|| MslsError::Numerical("triangular solve failed".into()))?;
    let fitted = x * coef;
    Ok(y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect())
}

pub fn slant_index(inputs: &SlantInputs) -> Result<SlantOutput> {
    inputs.validate()?;
    let (n_tok, n_o, n_t) = inputs.outlet_counts.dim();
    let n_p = inputs.parties.len();
    let present: Vec<bool> = (0..n_tok)
        .map(|k| inputs.outlet_counts.slice(ndarray::s![k, .., ..]).iter().any(|v| *v > 0.0))
        .collect();
    let score = tfidf(&inputs.party_counts);
    let selected: Vec<Vec<usize>> = (0..n_p)
        .map(|p| {
            let mut cand: Vec<usize> = (0..n_tok).filter(|&k| present[k] && inputs.party_counts[[k, p]] > 0.0).collect();
            cand.sort_by(|&a, &b| score[[b, p]].total_cmp(&score[[a, p]]));
            cand.truncate(inputs.top_n);
            cand
        })
        .collect();
    let mut sim = Array3::zeros((n_p, n_o, n_t));
    for p in 0..n_p {
        let yv: Vec<f64> = selected[p].iter().map(|&k| inputs.party_counts[[k, p]]).collect();
        for o in 0..n_o {
            for t in 0..n_t {
                let xv: Vec<f64> = selected[p].iter().map(|&k| inputs.outlet_counts[[k, o, t]]).collect();
                sim[[p, o, t]] = cosine_similarity(&xv, &yv);
            }
        }
    }
    let mut rows_o = Vec::with_capacity(n_p * n_o * n_t);
    let mut rows_p = Vec::with_capacity(n_p * n_o * n_t);
    for p in 0..n_p {
        for o in 0..n_o {
            for _ in 0..n_t {
                rows_o.push(o);
                rows_p.push(p);
            }
        }
    }
    let y: Vec<f64> = sim.iter().copied().collect();
    let eps = fixed_effect_residuals(&y, &rows_o, &rows_p, &inputs.outlets, &inputs.parties)?;
    let residuals = Array3::from_shape_vec((n_p, n_o, n_t), eps).expect("residual count matches the grid");
    let slant = Array2::from_shape_fn((n_o, n_t), |(o, t)| (0..n_p).map(|p| residuals[[p, o, t]] * inputs.scores[p]).sum());
    Ok(SlantOutput {
        selected,
        similarity: sim,
        residuals,
        slant,
    })
}

pub fn write_slant_csv<W: Write>(outlets: &[String], slant: &Array2<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outlet", "t", "slant"])?;
    for ((o, t), v) in slant.indexed_iter() {
        w.write_record([outlets[o].as_str(), &(t + 1).to_string(), &format!("{v:.10}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::layer_rng;
    use rand::RngExt;

    #[test]
    fn cosine_cases() {
        assert!((cosine_similarity(&[1.0, 2.0, 0.0], &[1.0, 2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 3.0]), 0.0);
    }

    #[test]
    fn tfidf_weights() {
        let y = ndarray::array![[2.0, 1.0], [3.0, 0.0], [0.0, 0.0]];
        let s = tfidf(&y);
        assert_eq!(s[[0, 0]], 0.0);
        assert!((s[[1, 0]] - 3.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(s[[2, 1]], 0.0);
    }

    fn synthetic() -> SlantInputs {
        let mut rng = layer_rng(31, 0);
        let tokens: Vec<String> = (0..6).map(|k| format!("w{k}")).collect();
        let mut counts = Vec::new();
        for (k, tok) in tokens.iter().enumerate() {
            for o in 0..3 {
                for t in 1..=2 {
                    counts.push(TokenCount {
                        token: tok.clone(),
                        entity: format!("o{o}"),
                        t,
                        count: rng.random_range(0..5) as f64,
                    });
                }
            }
            for p in 0..2 {
                if (k + p) % 3 != 0 {
                    counts.push(TokenCount {
                        token: tok.clone(),
                        entity: format!("p{p}"),
                        t: 1,
                        count: rng.random_range(1..6) as f64,
                    });
                }
            }
        }
        let scores = vec![("p0".to_string(), 2.5), ("p1".to_string(), 7.0)];
        SlantInputs::from_records(&counts, &scores, 3).unwrap()
    }

    #[test]
    fn slant_matches_normal_equations() {
        let inputs = synthetic();
        assert_eq!(inputs.outlets, ["o0", "o1", "o2"]);
        assert_eq!(inputs.outlet_counts.dim(), (6, 3, 2));
        let out = slant_index(&inputs).unwrap();
        assert!(out.selected.iter().all(|s| s.len() <= 3));
        // dense design [1, o1, o2, p1] solved through X'X b = X'y
        let rows: Vec<(usize, usize, usize)> = (0..2).flat_map(|p| (0..3).flat_map(move |o| (0..2).map(move |t| (p, o, t)))).collect();
        let x = DMatrix::from_fn(rows.len(), 4, |r, c| {
            let (p, o, _) = rows[r];
            match c {
                0 => 1.0,
                1 => f64::from(o == 1),
                2 => f64::from(o == 2),
                _ => f64::from(p == 1),
            }
        });
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&(p, o, t)| out.similarity[[p, o, t]]));
        let xtx = x.transpose() * &x;
        let b = xtx.try_inverse().unwrap() * x.transpose() * &y;
        let resid = &y - &x * b;
        for (r, &(p, o, t)) in rows.iter().enumerate() {
            assert!((out.residuals[[p, o, t]] - resid[r]).abs() < 1e-10);
        }
        for o in 0..3 {
            for t in 0..2 {
                let expect = 2.5 * resid[o * 2 + t] + 7.0 * resid[6 + o * 2 + t];
                assert!((out.slant[[o, t]] - expect).abs() < 1e-10);
            }
        }
        // residuals are orthogonal to every level
        for o in 0..3 {
            assert!(out.residuals.slice(ndarray::s![.., o, ..]).sum().abs() < 1e-8);
        }
        for p in 0..2 {
            assert!(out.residuals.slice(ndarray::s![p, .., ..]).sum().abs() < 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_names_levels() {
        let outlets: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let parties: Vec<String> = vec!["p".into(), "q".into()];
        // outlet c never appears
        let err = fixed_effect_residuals(&[0.1, 0.2, 0.3, 0.4], &[0, 1, 0, 1], &[0, 0, 1, 1], &outlets, &parties).unwrap_err();
        assert!(err.to_string().contains("outlet 'c'"), "{err}");
    }

    #[test]
    fn record_parsing() {
        let counts = read_token_counts("token,entity,t,count\ntax,o1,1,3\ntax,left,1,2\n".as_bytes()).unwrap();
        assert_eq!(counts.len(), 2);
        assert!(read_token_counts("token,entity,t,count\ntax,o1,1,-3\n".as_bytes()).is_err());
        let s = read_party_scores("party,score\nleft,2.0\nright,8.5\n".as_bytes()).unwrap();
        assert_eq!(s, vec![("left".to_string(), 2.0), ("right".to_string(), 8.5)]);
        assert!(read_party_scores("party,score\nleft,2.0\nleft,3\n".as_bytes()).is_err());
    }
}

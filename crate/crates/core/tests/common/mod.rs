//! Independent brute-force reference implementations used by the
//! integration tests. Nothing here calls into the scoring code under test.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Word vectors as plain f64 rows.
#[derive(Debug, Clone, Default)]
pub struct RefVectors {
    pub rows: HashMap<String, Vec<f64>>,
}

impl RefVectors {
    pub fn parse(text: &str) -> Self {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut f = l.split_whitespace();
                let w = f.next().unwrap().to_string();
                (w, f.map(|x| x.parse::<f32>().unwrap() as f64).collect())
            })
            .collect();
        RefVectors { rows }
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let x = self.rows.get(a)?;
        let y = self.rows.get(b)?;
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
        let ny = y.iter().map(|p| p * p).sum::<f64>().sqrt();
        Some(dot / (nx * ny))
    }
}

/// `ln((N - df + 0.5) / (df + 0.5))` with document frequencies counted over
/// `questions`.
pub fn ref_idf(questions: &[Vec<String>]) -> impl Fn(&str) -> f64 + '_ {
    let n = questions.len() as f64;
    move |term: &str| {
        let df = questions
            .iter()
            .filter(|q| q.iter().any(|t| t == term))
            .count() as f64;
        ((n - df + 0.5) / (df + 0.5)).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefVariant {
    Full {
        k_pos: usize,
        k_neg: usize,
        lambda: f64,
    },
    OneToOne,
    OneToAll,
}

/// Enumerates every cosine between `q` and the in-vocabulary answer terms,
/// sorts it, and applies harmonic weights.
pub fn ref_align(q: &str, answer: &[String], vecs: &RefVectors, v: RefVariant) -> f64 {
    let mut sims: Vec<f64> = answer.iter().filter_map(|a| vecs.cosine(q, a)).collect();
    if !vecs.rows.contains_key(q) || sims.is_empty() {
        return 0.0;
    }
    sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let weighted = |xs: &[f64]| -> f64 {
        let mut s = 0.0;
        for (k, x) in xs.iter().enumerate() {
            s += x / (k as f64 + 1.0);
        }
        s
    };
    match v {
        RefVariant::Full {
            k_pos,
            k_neg,
            lambda,
        } => {
            let pos = weighted(&sims[..k_pos.min(sims.len())]);
            let mut asc = sims.clone();
            asc.reverse();
            let neg = weighted(&asc[..k_neg.min(asc.len())]);
            pos + lambda * neg
        }
        RefVariant::OneToOne => sims[0],
        RefVariant::OneToAll => weighted(&sims),
    }
}

pub fn ref_score(
    question: &[String],
    answer: &[String],
    idf: &dyn Fn(&str) -> f64,
    vecs: &RefVectors,
    v: RefVariant,
) -> f64 {
    question
        .iter()
        .map(|q| idf(q) * ref_align(q, answer, vecs, v))
        .sum()
}

/// Okapi BM25 with the `ln(ratio + 1)` idf, query terms counted once.
pub fn ref_bm25(query: &[String], docs: &[Vec<String>], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    let uniq: BTreeSet<&String> = query.iter().collect();
    docs.iter()
        .map(|d| {
            uniq.iter()
                .map(|t| {
                    let tf = d.iter().filter(|x| x == t).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg))
                })
                .sum()
        })
        .collect()
}

/// Top-`n` documents sharing a term with `query`, best first, ties by id.
pub fn ref_retrieve(
    query: &[String],
    docs: &[Vec<String>],
    ids: &[String],
    n: usize,
) -> Vec<usize> {
    let scores = ref_bm25(query, docs, 1.2, 0.75);
    let qset: HashSet<&String> = query.iter().collect();
    let mut hits: Vec<usize> = (0..docs.len())
        .filter(|&i| docs[i].iter().any(|t| qset.contains(t)))
        .collect();
    hits.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(ids[a].cmp(&ids[b]))
    });
    hits.truncate(n);
    hits
}

/// Run-file text for scores given in candidate order: best first, ties by
/// candidate position, six decimals.
pub fn ref_run_lines(qid: &str, cand_ids: &[String], scores: &[f64]) -> String {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut out = String::new();
    for (r, &i) in order.iter().enumerate() {
        out += &format!("{qid}\t{}\t{}\t{:.6}\n", cand_ids[i], r + 1, scores[i]);
    }
    out
}

/// Average precision of a ranked id list against a gold set.
pub fn ref_ap(ranked: &[&str], gold: &[&str]) -> Option<f64> {
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if gold.contains(id) {
            hits += 1.0;
            sum += hits / (i as f64 + 1.0);
        }
    }
    (hits > 0.0).then(|| sum / hits)
}

//! Candidate scoring from positive and negative one-to-many alignments.
//!
//! For every question term `q` the in-vocabulary answer terms are ranked by
//! cosine similarity. The positive score is the harmonic-weighted sum of the
//! `K+` most similar, the negative score the same over the `K-` least
//! similar, and `align(q) = pos + lambda * neg`. A candidate's score is
//! `sum_q idf(q) * align(q)` over question positions (repeated terms count
//! once per occurrence). Both `K` values are clamped to the number of
//! in-vocabulary answer occurrences, so short answers may see the same term
//! in both sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding_store::{RankedSimilarities, ResolvedTerms};
use crate::error::{Error, Result};
use crate::text_prep::{IdfTable, TermList};
use crate::EmbeddingTable;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Top-`K+` positive plus lambda-weighted bottom-`K-` negative alignments.
    #[default]
    Full,
    /// Only the single most similar answer term (`K+ = 1`, `K- = 0`).
    OneToOne,
    /// Harmonic-weighted sum over every answer term.
    OneToAll,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::OneToOne => "one_to_one",
            Variant::OneToAll => "one_to_all",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(Variant::Full),
            "one_to_one" => Ok(Variant::OneToOne),
            "one_to_all" => Ok(Variant::OneToAll),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub k_pos: usize,
    pub k_neg: usize,
    pub lambda: f64,
    pub variant: Variant,
    /// Justifications retrieved per candidate; only used by KB pipelines.
    pub n_justifications: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            k_pos: 5,
            k_neg: 1,
            lambda: 0.4,
            variant: Variant::Full,
            n_justifications: 5,
        }
    }
}

impl AlignmentConfig {
    pub fn full(k_pos: usize, k_neg: usize, lambda: f64) -> Self {
        AlignmentConfig {
            k_pos,
            k_neg,
            lambda,
            ..Default::default()
        }
    }

    pub fn with_variant(self, variant: Variant) -> Self {
        AlignmentConfig { variant, ..self }
    }

    pub fn with_justifications(self, n: usize) -> Self {
        AlignmentConfig {
            n_justifications: n,
            ..self
        }
    }

    /// Checks hard constraints and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.k_pos == 0 {
            return Err(Error::Config("k_pos must be at least 1".into()));
        }
        if self.n_justifications == 0 {
            return Err(Error::Config("n_justifications must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite".into()));
        }
        let mut warnings = Vec::new();
        if self.variant == Variant::Full && self.k_neg == 0 && self.lambda != 0.0 {
            warnings.push(format!(
                "lambda = {} has no effect when k_neg = 0",
                self.lambda
            ));
        }
        if self.variant != Variant::Full && (self.k_pos != 1 || self.k_neg != 0) {
            warnings.push(format!(
                "k_pos/k_neg are ignored by the {} variant",
                self.variant
            ));
        }
        Ok(warnings)
    }

    /// `(K+, K-)` actually applied; `None` for one-to-all, which has no cutoff.
    pub fn effective_k(&self) -> Option<(usize, usize)> {
        match self.variant {
            Variant::Full => Some((self.k_pos, self.k_neg)),
            Variant::OneToOne => Some((1, 0)),
            Variant::OneToAll => None,
        }
    }
}

/// Sum of `sim_k / k` for `k = 1, 2, ...`. Every scorer goes through this so
/// that equivalent configurations produce bit-identical values.
pub fn harmonic_sum(sims: impl Iterator<Item = f64>) -> f64 {
    sims.enumerate()
        .fold(0.0, |acc, (i, s)| acc + s / (i + 1) as f64)
}

/// Harmonic-weighted sum of the `k_pos` most similar answer terms.
pub fn pos_score(ranked: &RankedSimilarities<'_>, k_pos: usize) -> f64 {
    harmonic_sum(ranked.descending().take(k_pos))
}

/// Harmonic-weighted sum of the `k_neg` least similar answer terms, least
/// similar first. Raw cosines; typically negative.
pub fn neg_score(ranked: &RankedSimilarities<'_>, k_neg: usize) -> f64 {
    harmonic_sum(ranked.ascending().take(k_neg))
}

pub fn align_term(pos: f64, neg: f64, lambda: f64) -> f64 {
    pos + lambda * neg
}

/// Alignment without a cutoff: harmonic sum over the whole ranking.
pub fn score_one_to_all(ranked: &RankedSimilarities<'_>) -> f64 {
    harmonic_sum(ranked.descending())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub idf: f64,
    pub pos: f64,
    pub neg: f64,
    pub align: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub total: f64,
    pub per_term: Vec<TermScore>,
}

fn term_alignment(ranked: &RankedSimilarities<'_>, cfg: &AlignmentConfig) -> (f64, f64, f64) {
    match cfg.effective_k() {
        Some((k_pos, k_neg)) => {
            let pos = pos_score(ranked, k_pos);
            let neg = neg_score(ranked, k_neg);
            (pos, neg, align_term(pos, neg, cfg.lambda))
        }
        None => {
            let pos = score_one_to_all(ranked);
            (pos, 0.0, pos)
        }
    }
}

fn score_with<F>(
    question: &TermList,
    answer: &TermList,
    idf: &IdfTable,
    table: &EmbeddingTable,
    cfg: &AlignmentConfig,
    mut visit: F,
) -> f64
where
    F: FnMut(&str, f64, (f64, f64, f64)),
{
    let resolved = ResolvedTerms::new(answer, table);
    let mut total = 0.0;
    for q in question.iter() {
        let w = idf.idf(q);
        let parts = match table.id(q) {
            Some(id) if !resolved.is_empty() => term_alignment(&resolved.rank(id, table), cfg),
            _ => (0.0, 0.0, 0.0),
        };
        total += w * parts.2;
        visit(q, w, parts);
    }
    total
}

/// `s(Q, A)` with the per-question-term breakdown.
pub fn score_answer(
    question: &TermList,
    answer: &TermList,
    idf: &IdfTable,
    table: &EmbeddingTable,
    cfg: &AlignmentConfig,
) -> ScoreBreakdown {
    let mut per_term = Vec::with_capacity(question.len());
    let total = score_with(
        question,
        answer,
        idf,
        table,
        cfg,
        |term, idf, (pos, neg, align)| {
            per_term.push(TermScore {
                term: term.to_string(),
                idf,
                pos,
                neg,
                align,
            })
        },
    );
    ScoreBreakdown { total, per_term }
}

/// `s(Q, A)` only; same arithmetic as [`score_answer`] without allocating
/// the breakdown.
pub fn score_total(
    question: &TermList,
    answer: &TermList,
    idf: &IdfTable,
    table: &EmbeddingTable,
    cfg: &AlignmentConfig,
) -> f64 {
    score_with(question, answer, idf, table, cfg, |_, _, _| {})
}

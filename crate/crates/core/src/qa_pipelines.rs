//! End-to-end ranking: direct candidate reranking, KB-backed multiple
//! choice, and the two lexical baselines; plus the run-file format.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::alignment_scorer::{score_answer, score_total, AlignmentConfig, TermScore};
use crate::embedding_store::EmbeddingTable;
use crate::error::{Error, Result};
use crate::ir_engine::{
    ai2_ir_score, bm25_rank_candidates, sort_desc_stable, Bm25Params, InvertedIndex,
};
use crate::par::{self, Execution};
use crate::text_prep::{IdfTable, TermList};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub text: TermList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QAInstance {
    pub question_id: String,
    pub question: TermList,
    pub candidates: Vec<Candidate>,
    pub gold: BTreeSet<String>,
}

impl QAInstance {
    /// Checks that candidate ids are unique and gold ids name candidates.
    pub fn new(
        question_id: impl Into<String>,
        question: TermList,
        candidates: Vec<Candidate>,
        gold: BTreeSet<String>,
    ) -> Result<Self> {
        let question_id = question_id.into();
        let mut ids = HashSet::new();
        for c in &candidates {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::Mismatch(format!(
                    "question `{question_id}`: duplicate candidate id `{}`",
                    c.id
                )));
            }
        }
        if let Some(g) = gold.iter().find(|g| !ids.contains(g.as_str())) {
            return Err(Error::Mismatch(format!(
                "question `{question_id}`: gold id `{g}` is not a candidate"
            )));
        }
        Ok(QAInstance {
            question_id,
            question,
            candidates,
            gold,
        })
    }

    pub fn candidate_terms(&self) -> Vec<TermList> {
        self.candidates.iter().map(|c| c.text.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub candidate_id: String,
    pub score: f64,
}

/// Candidates of one question, best first; equal scores keep candidate order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub question_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Builds a list from per-candidate scores given in candidate order.
    pub fn from_scores(instance: &QAInstance, scores: Vec<f64>) -> Self {
        debug_assert_eq!(scores.len(), instance.candidates.len());
        let mut order: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        sort_desc_stable(&mut order);
        RankedList::from_order(instance, order)
    }

    fn from_order(instance: &QAInstance, order: Vec<(usize, f64)>) -> Self {
        RankedList {
            question_id: instance.question_id.clone(),
            entries: order
                .into_iter()
                .map(|(i, score)| RankedEntry {
                    candidate_id: instance.candidates[i].id.clone(),
                    score,
                })
                .collect(),
        }
    }

    pub fn top(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }
}

/// Scores each candidate directly against the question.
pub fn rank_direct(
    instance: &QAInstance,
    idf: &IdfTable,
    table: &EmbeddingTable,
    cfg: &AlignmentConfig,
) -> RankedList {
    let scores = instance
        .candidates
        .iter()
        .map(|c| score_total(&instance.question, &c.text, idf, table, cfg))
        .collect();
    RankedList::from_scores(instance, scores)
}

/// Score of one choice in the KB pipeline: retrieve `n_justifications`
/// documents for question+choice and sum their alignment scores, using
/// question+choice as `Q` and each document as `A`.
pub fn kb_choice_score(
    question: &TermList,
    choice: &TermList,
    index: &InvertedIndex,
    idf: &IdfTable,
    table: &EmbeddingTable,
    cfg: &AlignmentConfig,
) -> f64 {
    let query = question.concat(choice);
    index
        .retrieve(&query, cfg.n_justifications)
        .hits
        .iter()
        .map(|h| {
            let doc = TermList::from_terms(index.doc_terms(h.doc).iter().cloned());
            score_total(&query, &doc, idf, table, cfg)
        })
        // Not `sum()`: an empty f64 sum is -0.0.
        .fold(0.0, |acc, s| acc + s)
}

pub fn rank_kb(
    instance: &QAInstance,
    index: &InvertedIndex,
    idf: &IdfTable,
    table: &EmbeddingTable,
    cfg: &AlignmentConfig,
) -> RankedList {
    let scores = instance
        .candidates
        .iter()
        .map(|c| kb_choice_score(&instance.question, &c.text, index, idf, table, cfg))
        .collect();
    RankedList::from_scores(instance, scores)
}

/// BM25 baseline: candidates indexed as documents, the question as query.
pub fn rank_bm25(instance: &QAInstance, params: Bm25Params) -> RankedList {
    let order = bm25_rank_candidates(&instance.question, &instance.candidate_terms(), params);
    RankedList::from_order(instance, order)
}

/// IR-solver baseline over a KB.
pub fn rank_ai2(instance: &QAInstance, index: &InvertedIndex, n: usize) -> RankedList {
    let scores = instance
        .candidates
        .iter()
        .map(|c| ai2_ir_score(&instance.question, &c.text, index, n))
        .collect();
    RankedList::from_scores(instance, scores)
}

/// A ranking method together with the shared resources it reads.
#[derive(Debug, Clone, Copy)]
pub enum Pipeline<'a> {
    Direct {
        idf: &'a IdfTable,
        table: &'a EmbeddingTable,
    },
    Kb {
        index: &'a InvertedIndex,
        idf: &'a IdfTable,
        table: &'a EmbeddingTable,
    },
    Bm25 {
        params: Bm25Params,
    },
    Ai2Ir {
        index: &'a InvertedIndex,
    },
}

impl Pipeline<'_> {
    pub fn rank(&self, instance: &QAInstance, cfg: &AlignmentConfig) -> RankedList {
        match *self {
            Pipeline::Direct { idf, table } => rank_direct(instance, idf, table, cfg),
            Pipeline::Kb { index, idf, table } => rank_kb(instance, index, idf, table, cfg),
            Pipeline::Bm25 { params } => rank_bm25(instance, params),
            Pipeline::Ai2Ir { index } => rank_ai2(instance, index, cfg.n_justifications),
        }
    }

    /// Whether `cfg.n_justifications` affects this pipeline's output.
    pub fn uses_justifications(&self) -> bool {
        matches!(self, Pipeline::Kb { .. } | Pipeline::Ai2Ir { .. })
    }

    /// Whether the alignment hyperparameters affect this pipeline's output.
    pub fn uses_alignment(&self) -> bool {
        matches!(self, Pipeline::Direct { .. } | Pipeline::Kb { .. })
    }

    /// Per-candidate explanation records in candidate order.
    pub fn explain(&self, instance: &QAInstance, cfg: &AlignmentConfig) -> Vec<Explanation> {
        instance
            .candidates
            .iter()
            .map(|c| {
                let (total, per_term, justifications) = match *self {
                    Pipeline::Direct { idf, table } => {
                        let b = score_answer(&instance.question, &c.text, idf, table, cfg);
                        (b.total, Some(b.per_term), None)
                    }
                    Pipeline::Kb { index, idf, table } => {
                        let query = instance.question.concat(&c.text);
                        let js: Vec<Justification> = index
                            .retrieve(&query, cfg.n_justifications)
                            .hits
                            .into_iter()
                            .map(|h| {
                                let doc =
                                    TermList::from_terms(index.doc_terms(h.doc).iter().cloned());
                                let b = score_answer(&query, &doc, idf, table, cfg);
                                Justification {
                                    doc_id: h.doc_id,
                                    bm25: h.score,
                                    total: b.total,
                                    per_term: b.per_term,
                                }
                            })
                            .collect();
                        (js.iter().fold(0.0, |acc, j| acc + j.total), None, Some(js))
                    }
                    Pipeline::Bm25 { .. } | Pipeline::Ai2Ir { .. } => {
                        let r = self.rank(instance, cfg);
                        let s = r
                            .entries
                            .iter()
                            .find(|e| e.candidate_id == c.id)
                            .map_or(0.0, |e| e.score);
                        (s, None, None)
                    }
                };
                Explanation {
                    question_id: instance.question_id.clone(),
                    candidate_id: c.id.clone(),
                    total,
                    per_term,
                    justifications,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Justification {
    pub doc_id: String,
    pub bm25: f64,
    pub total: f64,
    pub per_term: Vec<TermScore>,
}

/// One `--explain` JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub question_id: String,
    pub candidate_id: String,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_term: Option<Vec<TermScore>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub justifications: Option<Vec<Justification>>,
}

/// Ranks every instance; output follows input order for any execution mode.
pub fn rank_all(
    exec: Execution,
    instances: &[QAInstance],
    pipeline: &Pipeline<'_>,
    cfg: &AlignmentConfig,
) -> Vec<RankedList> {
    par::map(exec, instances, |inst| pipeline.rank(inst, cfg))
}

/// `question_id<TAB>candidate_id<TAB>rank<TAB>score`, ranks from 1, scores
/// with six decimals.
pub fn write_run<W: Write>(mut w: W, runs: &[RankedList]) -> std::io::Result<()> {
    for r in runs {
        for (i, e) in r.entries.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{:.6}",
                r.question_id,
                e.candidate_id,
                i + 1,
                e.score
            )?;
        }
    }
    w.flush()
}

pub fn run_to_string(runs: &[RankedList]) -> String {
    let mut buf = Vec::new();
    write_run(&mut buf, runs).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("run file is UTF-8")
}

/// Reads a run file. Lines of one question must be contiguous and appear in
/// rank order; the file's ranks, not its scores, define the order.
pub fn read_run<R: BufRead>(r: R) -> Result<Vec<RankedList>> {
    let mut runs: Vec<RankedList> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 tab-separated fields, found {}", f.len()),
            ));
        }
        let rank: usize = f[2]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad rank `{}`", f[2])))?;
        let score: f64 = f[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad score `{}`", f[3])))?;
        let continuing = runs.last().is_some_and(|r| r.question_id == f[0]);
        if !continuing {
            if !seen.insert(f[0].to_string()) {
                return Err(Error::parse(
                    line_no,
                    format!("question `{}` is not contiguous", f[0]),
                ));
            }
            runs.push(RankedList {
                question_id: f[0].to_string(),
                entries: Vec::new(),
            });
        }
        let current = runs.last_mut().expect("pushed above");
        if rank != current.entries.len() + 1 {
            return Err(Error::parse(
                line_no,
                format!("expected rank {}, found {rank}", current.entries.len() + 1),
            ));
        }
        if current.entries.iter().any(|e| e.candidate_id == f[1]) {
            return Err(Error::parse(
                line_no,
                format!("duplicate candidate `{}`", f[1]),
            ));
        }
        current.entries.push(RankedEntry {
            candidate_id: f[1].to_string(),
            score,
        });
    }
    Ok(runs)
}

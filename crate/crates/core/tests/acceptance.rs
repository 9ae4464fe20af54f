//! End-to-end acceptance checks. Prints one line per criterion:
//! `AC<n> PASS|FAIL|NOT RUN <name>: <detail>`. The test fails if any
//! criterion fails; criteria that need external data report NOT RUN when
//! the data is absent.
//!
//! External data (optional):
//! - `ALIGNQA_WIKIQA`: path to the WikiQA test split (`WikiQA-test.tsv`).
//! - `ALIGNQA_GLOVE`: path to 300-dimensional GloVe text vectors.
//! - `ALIGNQA_GLOVE_CACHE`: optional binary cache path for the vectors.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use alignqa::alignment_scorer::{
    align_term, neg_score, pos_score, score_answer, score_one_to_all, AlignmentConfig, Variant,
};
use alignqa::datasets::{load_kb, load_mc_jsonl, load_wikiqa, question_terms};
use alignqa::embedding_store::{load_embeddings_file, Aligned, RankedSimilarities};
use alignqa::evaluation::{
    average_precision, bootstrap_significance_with, evaluate, gold_from_instances, paired_values,
    precision_at_1,
};
use alignqa::ir_engine::{build_index, Bm25Params};
use alignqa::qa_pipelines::{
    kb_choice_score, rank_all, run_to_string, Candidate, Pipeline, RankedEntry, RankedList,
};
use alignqa::text_prep::{compute_idf, local_idf};
use alignqa::tuner::{grid_search, GridSpec};
use alignqa::{EmbeddingTable, Execution, Lexicons, Metric, QAInstance, TermList};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

use Outcome::*;

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Pass(detail.into())
    } else {
        Fail(detail.into())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- AC1

fn ac1_oracle_equivalence() -> Outcome {
    const VOCAB: [&str; 10] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for case in 0..1000 {
        let dim = rng.gen_range(1..=5);
        let n_words = rng.gen_range(1..=10);
        let rows: Vec<Vec<f32>> = (0..n_words)
            .map(|_| loop {
                let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                if v.iter().any(|&x| x != 0.0) {
                    break v;
                }
            })
            .collect();
        let table =
            EmbeddingTable::from_rows(dim, rows.iter().enumerate().map(|(i, r)| (VOCAB[i], r)))
                .unwrap();
        let refs = RefVectors {
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, r)| (VOCAB[i].to_string(), r.iter().map(|&x| x as f64).collect()))
                .collect(),
        };
        // Words past `n_words` are out of vocabulary.
        let mut words = |max: usize| -> Vec<String> {
            let n = rng.gen_range(0..=max);
            (0..n)
                .map(|_| VOCAB[rng.gen_range(0..10)].to_string())
                .collect()
        };
        let question = words(8);
        let answer = words(12);
        let mut others: Vec<Vec<String>> = (0..3).map(|_| words(4)).collect();
        others.push(question.clone());
        let idf_lib = compute_idf(
            &others
                .iter()
                .map(|t| TermList::from_terms(t.clone()))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let idf_ref = ref_idf(&others);
        let cfg = AlignmentConfig::full(
            rng.gen_range(1..=6),
            rng.gen_range(0..=4),
            rng.gen_range(0.0..1.0),
        );
        let q = TermList::from_terms(question.clone());
        let a = TermList::from_terms(answer.clone());
        for (v, rv) in [
            (
                Variant::Full,
                RefVariant::Full {
                    k_pos: cfg.k_pos,
                    k_neg: cfg.k_neg,
                    lambda: cfg.lambda,
                },
            ),
            (Variant::OneToOne, RefVariant::OneToOne),
            (Variant::OneToAll, RefVariant::OneToAll),
        ] {
            let got = score_answer(&q, &a, &idf_lib, &table, &cfg.with_variant(v)).total;
            let want = ref_score(&question, &answer, &idf_ref, &refs, rv);
            let err = (got - want).abs();
            if err > 1e-9 {
                return Fail(format!(
                    "case {case}, {v}: library {got} vs reference {want}"
                ));
            }
            worst = worst.max(err);
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(10),
        format!("{compared} scores, max |diff| {worst:.2e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- AC2

struct Fixture {
    instances: Vec<QAInstance>,
    table: EmbeddingTable,
}

fn wikiqa_fixture() -> Fixture {
    let lex = Lexicons::english();
    Fixture {
        instances: load_wikiqa(&fixture("wikiqa_toy.tsv"), &lex).unwrap(),
        table: load_embeddings_file(&fixture("toy_vectors.txt"), None, None)
            .unwrap()
            .table,
    }
}

fn run_text(f: &Fixture, cfg: &AlignmentConfig, exec: Execution) -> String {
    let idf = compute_idf(&question_terms(&f.instances)).unwrap();
    let p = Pipeline::Direct {
        idf: &idf,
        table: &f.table,
    };
    run_to_string(&rank_all(exec, &f.instances, &p, cfg))
}

fn ac2_reduction_identities() -> Outcome {
    let f = wikiqa_fixture();
    let m = f
        .instances
        .iter()
        .flat_map(|i| i.candidates.iter().map(|c| c.text.len()))
        .max()
        .unwrap();
    let base = AlignmentConfig::default();
    let one = run_text(
        &f,
        &base.with_variant(Variant::OneToOne),
        Execution::Sequential,
    );
    let k1 = run_text(&f, &AlignmentConfig::full(1, 0, 0.4), Execution::Sequential);
    let all = run_text(
        &f,
        &base.with_variant(Variant::OneToAll),
        Execution::Sequential,
    );
    let mut ok_all = true;
    for k in [m, m + 1, 4 * m] {
        ok_all &= all == run_text(&f, &AlignmentConfig::full(k, 0, 0.4), Execution::Sequential);
    }
    check(
        one == k1 && ok_all,
        format!(
            "one_to_one == (1,0): {}; one_to_all == (K+>={m},0): {ok_all}",
            one == k1
        ),
    )
}

// ---------------------------------------------------------------- AC3

fn ranked(sims: &[f64]) -> RankedSimilarities<'static> {
    RankedSimilarities {
        pairs: sims
            .iter()
            .enumerate()
            .map(|(i, &s)| Aligned {
                term: "t",
                position: i,
                similarity: s,
            })
            .collect(),
    }
}

fn ac3_formula_values() -> Outcome {
    let tol = 1e-12;
    let checks = [
        ("idf(N=10, df=2)", local_idf(10, 2), (8.5f64 / 2.5).ln()),
        ("idf(N=10, df=5)", local_idf(10, 5), 0.0),
        (
            "pos([.9,.5,.1], 2)",
            pos_score(&ranked(&[0.9, 0.5, 0.1]), 2),
            1.15,
        ),
        ("pos([.9,.5], 5)", pos_score(&ranked(&[0.9, 0.5]), 5), 1.15),
        (
            "neg([.9,-.1,-.4], 2)",
            neg_score(&ranked(&[0.9, -0.1, -0.4]), 2),
            -0.45,
        ),
        ("align(1.15, -0.4, 0.4)", align_term(1.15, -0.4, 0.4), 0.99),
        (
            "one_to_all([.9,.5,.1])",
            score_one_to_all(&ranked(&[0.9, 0.5, 0.1])),
            0.9 + 0.25 + 0.1 / 3.0,
        ),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !close(*got, *want, tol))
        .map(|(name, got, want)| format!("{name} = {got}, expected {want}"))
        .collect();
    let one_to_all = score_one_to_all(&ranked(&[0.9, 0.5, 0.1]));
    if bad.is_empty() {
        Pass(format!(
            "{} values within {tol:e}; one_to_all = {one_to_all:.5}",
            checks.len()
        ))
    } else {
        Fail(bad.join("; "))
    }
}

// ---------------------------------------------------------------- AC4

fn list(qid: &str, ids: &[&str]) -> RankedList {
    RankedList {
        question_id: qid.into(),
        entries: ids
            .iter()
            .map(|id| RankedEntry {
                candidate_id: id.to_string(),
                score: 0.0,
            })
            .collect(),
    }
}

fn ac4_metrics() -> Outcome {
    let gold: BTreeSet<String> = ["a".to_string(), "c".to_string()].into();
    let ap = average_precision(&list("q", &["a", "b", "c", "d"]), &gold).unwrap();
    let ap_ok = close(ap, 5.0 / 6.0, 1e-9) && close(ap, 0.8333, 1e-4);

    let runs = vec![list("q1", &["a", "b"]), list("q2", &["x", "y"])];
    let gold_set = [
        ("q1".to_string(), BTreeSet::from(["a".to_string()])),
        ("q2".to_string(), BTreeSet::new()),
    ]
    .into();
    let report = evaluate(&runs, &gold_set, Metric::Map).unwrap();
    let skip_ok = report.n_evaluated == 1 && report.n_skipped == 1 && report.value == 1.0;

    // All-zero scores: ranking keeps candidate order, so the first
    // candidate is the top answer.
    let inst = QAInstance::new(
        "z",
        TermList::from_terms(["w"]),
        ["c0", "c1", "c2"]
            .iter()
            .map(|id| Candidate {
                id: id.to_string(),
                text: TermList::default(),
            })
            .collect(),
        ["c0".to_string()].into(),
    )
    .unwrap();
    let r = RankedList::from_scores(&inst, vec![0.0; 3]);
    let p1_first = precision_at_1(&r, &inst.gold).unwrap();
    let p1_second = precision_at_1(&r, &["c1".to_string()].into()).unwrap();
    let tie_ok = p1_first == 1.0 && p1_second == 0.0;
    check(
        ap_ok && skip_ok && tie_ok,
        format!(
            "AP = {ap:.10}; MAP over 1 of 2 (skipped {}); P@1 tie-break first={p1_first} second={p1_second}",
            report.n_skipped
        ),
    )
}

// ---------------------------------------------------------------- AC5

fn ac5_bootstrap() -> Outcome {
    let better = vec![1.0; 50];
    let worse = vec![0.5; 50];
    let p_dom = bootstrap_significance_with(Execution::Parallel, &better, &worse, 1000, 7).unwrap();
    let p_same =
        bootstrap_significance_with(Execution::Parallel, &better, &better, 1000, 7).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let a: Vec<f64> = (0..250).map(|_| rng.gen_range(0.0..1.0)).collect();
    let b: Vec<f64> = a
        .iter()
        .map(|x| (x + rng.gen_range(-0.2..0.18)).clamp(0.0, 1.0))
        .collect();
    let start = Instant::now();
    let ps: Vec<f64> = (0..3)
        .map(|_| bootstrap_significance_with(Execution::Parallel, &a, &b, 10_000, 42).unwrap())
        .collect();
    let per_run = start.elapsed() / 3;
    let seq = bootstrap_significance_with(Execution::Sequential, &a, &b, 10_000, 42).unwrap();
    let same = ps.iter().all(|&p| p == ps[0]) && seq == ps[0];
    check(
        p_dom == 0.0 && p_same == 1.0 && same && per_run < Duration::from_secs(5),
        format!(
            "dominance p = {p_dom}; identical p = {p_same}; seeded p = {} x3 (+sequential {}); 10k iterations {per_run:.2?}",
            ps[0], seq
        ),
    )
}

// ---------------------------------------------------------------- AC6/AC7

struct WikiQa {
    maps: [(Variant, f64); 3],
    p_vs_one: f64,
    p_vs_all: f64,
    elapsed: Duration,
}

fn external_wikiqa() -> Option<Result<WikiQa, String>> {
    let data = PathBuf::from(std::env::var_os("ALIGNQA_WIKIQA")?);
    let vectors = PathBuf::from(std::env::var_os("ALIGNQA_GLOVE")?);
    let cache = std::env::var_os("ALIGNQA_GLOVE_CACHE").map(PathBuf::from);
    Some((|| {
        let lex = Lexicons::english();
        let table = load_embeddings_file(&vectors, Some(300), cache.as_deref())
            .map_err(|e| e.to_string())?
            .table;
        let start = Instant::now();
        let instances = load_wikiqa(&data, &lex).map_err(|e| e.to_string())?;
        let idf = compute_idf(&question_terms(&instances)).map_err(|e| e.to_string())?;
        let gold = gold_from_instances(&instances);
        let p = Pipeline::Direct {
            idf: &idf,
            table: &table,
        };
        let base = AlignmentConfig::full(5, 1, 0.4);
        let mut reports = Vec::new();
        for v in [Variant::Full, Variant::OneToOne, Variant::OneToAll] {
            let runs = rank_all(Execution::Parallel, &instances, &p, &base.with_variant(v));
            reports.push((
                v,
                evaluate(&runs, &gold, Metric::Map).map_err(|e| e.to_string())?,
            ));
        }
        let sig = |i: usize| -> Result<f64, String> {
            let (a, b) = paired_values(&reports[0].1, &reports[i].1).map_err(|e| e.to_string())?;
            bootstrap_significance_with(Execution::Parallel, &a, &b, 10_000, 1)
                .map_err(|e| e.to_string())
        };
        Ok(WikiQa {
            maps: [
                (reports[0].0, reports[0].1.value * 100.0),
                (reports[1].0, reports[1].1.value * 100.0),
                (reports[2].0, reports[2].1.value * 100.0),
            ],
            p_vs_one: sig(1)?,
            p_vs_all: sig(2)?,
            elapsed: start.elapsed(),
        })
    })())
}

fn ac6_wikiqa(result: &Option<Result<WikiQa, String>>) -> Outcome {
    match result {
        None => NotRun("data unavailable (set ALIGNQA_WIKIQA and ALIGNQA_GLOVE)".into()),
        Some(Err(e)) => Fail(e.clone()),
        Some(Ok(w)) => {
            let targets = [64.02, 62.77, 60.91];
            let within = w
                .maps
                .iter()
                .zip(targets)
                .all(|((_, m), t)| (m - t).abs() <= 2.0);
            let ordered = w.maps[0].1 > w.maps[1].1 && w.maps[1].1 > w.maps[2].1;
            let fast = w.elapsed < Duration::from_secs(300);
            let detail = w
                .maps
                .iter()
                .zip(targets)
                .map(|((v, m), t)| format!("{v} {m:.2} (target {t})"))
                .collect::<Vec<_>>()
                .join(", ");
            check(
                within && ordered && fast,
                format!("MAP {detail}; {:.1?}", w.elapsed),
            )
        }
    }
}

fn ac7_wikiqa_significance(result: &Option<Result<WikiQa, String>>) -> Outcome {
    match result {
        None => NotRun("data unavailable (set ALIGNQA_WIKIQA and ALIGNQA_GLOVE)".into()),
        Some(Err(e)) => Fail(e.clone()),
        Some(Ok(w)) => check(
            w.p_vs_one < 0.05 && w.p_vs_all < 0.05,
            format!(
                "p(full vs one_to_one) = {}, p(full vs one_to_all) = {}",
                w.p_vs_one, w.p_vs_all
            ),
        ),
    }
}

// ---------------------------------------------------------------- AC8

fn ac8_kb_pipeline() -> Outcome {
    let lex = Lexicons::english();
    let instances = load_mc_jsonl(&fixture("mc_toy.jsonl"), &lex).unwrap();
    let docs = load_kb(&fixture("kb_toy.txt"), &lex).unwrap();
    let table = load_embeddings_file(&fixture("toy_vectors.txt"), None, None)
        .unwrap()
        .table;
    let refs = RefVectors::parse(&std::fs::read_to_string(fixture("toy_vectors.txt")).unwrap());
    let index = build_index(&docs, Bm25Params::default()).unwrap();
    let idf = compute_idf(&question_terms(&instances)).unwrap();
    let qs: Vec<Vec<String>> = instances.iter().map(|i| i.question.terms.clone()).collect();
    let ref_idf = ref_idf(&qs);
    let doc_terms: Vec<Vec<String>> = docs.iter().map(|d| d.terms.terms.clone()).collect();
    let doc_ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();

    let mut worst = 0.0f64;
    let mut composition = true;
    for n in [1, 5] {
        let cfg = AlignmentConfig::full(1, 1, 0.4).with_justifications(n);
        for inst in &instances {
            for c in &inst.candidates {
                let got = kb_choice_score(&inst.question, &c.text, &index, &idf, &table, &cfg);
                let query = inst.question.concat(&c.text);
                let want: f64 = ref_retrieve(&query.terms, &doc_terms, &doc_ids, n)
                    .into_iter()
                    .map(|d| {
                        ref_score(
                            &query.terms,
                            &doc_terms[d],
                            &ref_idf,
                            &refs,
                            RefVariant::Full {
                                k_pos: 1,
                                k_neg: 1,
                                lambda: 0.4,
                            },
                        )
                    })
                    .sum();
                worst = worst.max((got - want).abs());
                if n == 1 {
                    let top = index.retrieve(&query, 1).hits;
                    let direct = top.first().map_or(0.0, |h| {
                        let doc = TermList::from_terms(index.doc_terms(h.doc).iter().cloned());
                        score_answer(&query, &doc, &idf, &table, &cfg).total
                    });
                    composition &= direct.to_bits() == got.to_bits();
                }
            }
        }
    }
    check(
        worst < 1e-9 && composition,
        format!("toy-KB oracle max |diff| {worst:.2e}; N=1 composition identity: {composition}"),
    )
}

// ---------------------------------------------------------------- AC9

fn ac9_determinism() -> Outcome {
    let f = wikiqa_fixture();
    let cfg = AlignmentConfig::default();
    let runs: Vec<String> = [
        Execution::Sequential,
        Execution::Parallel,
        Execution::Parallel,
        Execution::Sequential,
    ]
    .into_iter()
    .map(|e| run_text(&f, &cfg, e))
    .collect();
    let runs_ok = runs.iter().all(|r| r == &runs[0]);

    let idf = compute_idf(&question_terms(&f.instances)).unwrap();
    let p = Pipeline::Direct {
        idf: &idf,
        table: &f.table,
    };
    let grid = GridSpec {
        k_pos: vec![1, 2, 3, 5],
        k_neg: vec![0, 1, 2],
        lambda: vec![0.2, 0.4],
        n_justifications: vec![1],
        metric: Metric::Map,
    };
    let t_seq = grid_search(&f.instances, &grid, &p, Execution::Sequential).unwrap();
    let t_par = grid_search(&f.instances, &grid, &p, Execution::Parallel).unwrap();
    let tune_ok = t_seq == t_par;

    let lex = Lexicons::english();
    let docs = load_kb(&fixture("kb_toy.txt"), &lex).unwrap();
    let save = || {
        let mut buf = Vec::new();
        build_index(&docs, Bm25Params::default())
            .unwrap()
            .save(&mut buf)
            .unwrap();
        buf
    };
    let index_ok = save() == save();
    check(
        runs_ok && tune_ok && index_ok,
        format!(
            "run files identical across modes: {runs_ok}; grid search: {tune_ok}; index bytes: {index_ok} ({} threads available)",
            alignqa::par::current_num_threads()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let wikiqa = external_wikiqa();
    let results = [
        ("AC1", "oracle equivalence", ac1_oracle_equivalence()),
        ("AC2", "reduction identities", ac2_reduction_identities()),
        ("AC3", "hand-computed formulas", ac3_formula_values()),
        ("AC4", "metric correctness", ac4_metrics()),
        ("AC5", "bootstrap", ac5_bootstrap()),
        ("AC6", "WikiQA reproduction", ac6_wikiqa(&wikiqa)),
        (
            "AC7",
            "WikiQA significance",
            ac7_wikiqa_significance(&wikiqa),
        ),
        ("AC8", "KB pipeline on toy KB", ac8_kb_pipeline()),
        ("AC9", "determinism", ac9_determinism()),
    ];
    let mut failed = Vec::new();
    for (id, name, outcome) in &results {
        let (status, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed.push(*id);
                ("FAIL", d)
            }
            NotRun(d) => ("NOT RUN", d),
        };
        // Written to the raw handle so the lines show up even when the test
        // harness captures output.
        writeln!(std::io::stderr(), "{id} {status} {name}: {detail}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

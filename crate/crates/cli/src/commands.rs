use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use alignqa::datasets::{load_dataset, load_kb, open_text, question_terms};
use alignqa::embedding_store::{file_checksum, load_embeddings_file};
use alignqa::evaluation::{
    bootstrap_significance_with, evaluate, gold_from_instances, paired_values, read_gold,
    write_gold,
};
use alignqa::ir_engine::{build_index, corpus_checksum, Bm25Params, InvertedIndex};
use alignqa::qa_pipelines::{rank_all, read_run, write_run, Pipeline, RankedList};
use alignqa::text_prep::compute_idf_with;
use alignqa::tuner::{grid_search, write_table_csv, GridSpec};
use alignqa::{EmbeddingTable, Execution, IdfTable, Lexicons, QAInstance};
use anyhow::{Context, Result};
use serde_json::json;

use crate::args::{EvalArgs, IndexArgs, PipelineKind, RankArgs, SignificanceArgs, TuneArgs};
use crate::config::RunConfig;

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

pub fn index(args: &IndexArgs) -> Result<()> {
    let lex = Lexicons::from_files(
        args.lexicons.stoplist.as_deref(),
        args.lexicons.lemmas.as_deref(),
    )?;
    let docs = load_kb(&args.kb, &lex).with_context(|| format!("loading {}", args.kb.display()))?;
    let params = Bm25Params {
        k1: args.k1,
        b: args.b,
        idf: args.bm25_idf,
    };
    let index = build_index(&docs, params)?;
    let mut w = create(&args.output)?;
    index
        .save(&mut w)
        .with_context(|| format!("writing {}", args.output.display()))?;
    drop(w);
    print_json(&json!({
        "n_docs": index.n_docs(),
        "avg_doc_len": index.avg_doc_len(),
        "vocabulary": index.vocabulary_size(),
        "corpus_sha256": hex(index.checksum()),
        "index_sha256": hex(&file_checksum(&args.output)?),
    }))
}

/// Everything a run needs, loaded once.
struct Loaded {
    instances: Vec<QAInstance>,
    idf: IdfTable,
    table: Option<EmbeddingTable>,
    index: Option<InvertedIndex>,
}

impl Loaded {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let lex = Lexicons::from_files(cfg.stoplist.as_deref(), cfg.lemmas.as_deref())?;
        let instances = load_dataset(&cfg.dataset, &lex)
            .with_context(|| format!("loading {}", cfg.dataset.path.display()))?;
        let idf = compute_idf_with(&question_terms(&instances), cfg.clamp_idf)
            .with_context(|| format!("{} has no questions", cfg.dataset.path.display()))?;
        let table = match (&cfg.embeddings, cfg.pipeline) {
            (Some(p), PipelineKind::Direct | PipelineKind::Kb) => {
                let r = load_embeddings_file(p, cfg.dim, cfg.cache.as_deref())
                    .with_context(|| format!("loading embeddings {}", p.display()))?;
                log::info!("loaded {} vectors of dim {}", r.table.len(), r.table.dim());
                Some(r.table)
            }
            _ => None,
        };
        let index = match cfg.pipeline {
            PipelineKind::Kb | PipelineKind::Ai2 => Some(load_or_build_index(cfg, &lex)?),
            _ => None,
        };
        Ok(Loaded {
            instances,
            idf,
            table,
            index,
        })
    }

    fn pipeline(&self, cfg: &RunConfig) -> Pipeline<'_> {
        match cfg.pipeline {
            PipelineKind::Direct => Pipeline::Direct {
                idf: &self.idf,
                table: self.table.as_ref().expect("vectors loaded for direct"),
            },
            PipelineKind::Kb => Pipeline::Kb {
                index: self.index.as_ref().expect("index loaded for kb"),
                idf: &self.idf,
                table: self.table.as_ref().expect("vectors loaded for kb"),
            },
            PipelineKind::Bm25 => Pipeline::Bm25 { params: cfg.bm25 },
            PipelineKind::Ai2 => Pipeline::Ai2Ir {
                index: self.index.as_ref().expect("index loaded for ai2"),
            },
        }
    }
}

/// Uses `--index` when it is current for `--kb` (or when no KB is given);
/// otherwise builds from the KB.
fn load_or_build_index(cfg: &RunConfig, lex: &Lexicons) -> Result<InvertedIndex> {
    let stored = match &cfg.index_path {
        Some(p) if p.is_file() => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(
                InvertedIndex::load(BufReader::new(f))
                    .with_context(|| format!("reading index {}", p.display()))?,
            )
        }
        _ => None,
    };
    let Some(kb) = &cfg.kb_path else {
        return stored.context("no index or knowledge base");
    };
    let docs = load_kb(kb, lex).with_context(|| format!("loading {}", kb.display()))?;
    if let Some(index) = stored {
        if index.checksum() == &corpus_checksum(&docs) && index.params() == cfg.bm25 {
            return Ok(index);
        }
        log::warn!("index does not match {}; rebuilding", kb.display());
    }
    let index = build_index(&docs, cfg.bm25)?;
    if let Some(p) = &cfg.index_path {
        index
            .save(create(p)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(index)
}

pub fn rank(args: &RankArgs, exec: Execution) -> Result<()> {
    let cfg = RunConfig::resolve(&args.run)?;
    let loaded = Loaded::new(&cfg)?;
    let pipeline = loaded.pipeline(&cfg);
    let runs: Vec<RankedList> = rank_all(exec, &loaded.instances, &pipeline, &cfg.alignment);
    write_run(create(&args.output)?, &runs)
        .with_context(|| format!("writing {}", args.output.display()))?;
    if let Some(p) = &args.explain {
        let records = alignqa::par::map(exec, &loaded.instances, |inst| {
            pipeline.explain(inst, &cfg.alignment)
        });
        let mut w = create(p)?;
        for r in records.iter().flatten() {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    if let Some(p) = &args.gold_out {
        write_gold(create(p)?, &gold_from_instances(&loaded.instances))?;
    }
    log::info!(
        "ranked {} questions into {}",
        runs.len(),
        args.output.display()
    );
    Ok(())
}

fn read_run_file(path: &Path) -> Result<Vec<RankedList>> {
    read_run(open_text(path)?).with_context(|| format!("reading run {}", path.display()))
}

fn read_gold_file(path: &Path) -> Result<alignqa::evaluation::GoldSet> {
    read_gold(open_text(path)?).with_context(|| format!("reading gold {}", path.display()))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let runs = read_run_file(&args.run)?;
    let gold = read_gold_file(&args.gold)?;
    let report = evaluate(&runs, &gold, args.metric)?;
    let mut v = serde_json::to_value(&report)?;
    if args.per_question {
        v["per_question"] = serde_json::to_value(&report.per_question)?;
    }
    print_json(&v)
}

pub fn tune(args: &TuneArgs, exec: Execution) -> Result<()> {
    let text = std::fs::read_to_string(&args.grid)
        .with_context(|| format!("reading {}", args.grid.display()))?;
    let grid = GridSpec::from_toml(&text)
        .with_context(|| format!("parsing grid {}", args.grid.display()))?;
    let cfg = RunConfig::resolve(&args.run)?;
    let loaded = Loaded::new(&cfg)?;
    let pipeline = loaded.pipeline(&cfg);
    let result = grid_search(&loaded.instances, &grid, &pipeline, exec)?;
    if let Some(p) = &args.table_out {
        write_table_csv(create(p)?, &result.table)?;
    }
    print_json(&json!({
        "metric": result.metric,
        "best": result.best,
        "dev_score": result.best_score,
        "cells": result.table.len(),
    }))
}

pub fn significance(args: &SignificanceArgs, exec: Execution) -> Result<()> {
    let gold = read_gold_file(&args.gold)?;
    let a = evaluate(&read_run_file(&args.run_a)?, &gold, args.metric)?;
    let b = evaluate(&read_run_file(&args.run_b)?, &gold, args.metric)?;
    let (xs, ys) = paired_values(&a, &b)?;
    let p = bootstrap_significance_with(exec, &xs, &ys, args.iterations, args.seed)?;
    print_json(&json!({
        "metric": args.metric,
        "value": a.value,
        "value_b": b.value,
        "n_evaluated": a.n_evaluated,
        "n_skipped": a.n_skipped,
        "p_value": p,
        "iterations": args.iterations,
        "seed": args.seed,
    }))
}

use std::fmt;
use std::path::PathBuf;

use alignqa::alignment_scorer::Variant;
use alignqa::datasets::DatasetFormat;
use alignqa::ir_engine::Bm25Idf;
use alignqa::Metric;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "alignqa",
    version,
    about = "Unsupervised alignment + IR answer ranking"
)]
pub struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a BM25 index over a knowledge base.
    Index(IndexArgs),
    /// Rank the candidates of every question and write a run file.
    Rank(RankArgs),
    /// Score a run file against gold answers.
    Eval(EvalArgs),
    /// Grid-search K+, K-, lambda and N on a development set.
    Tune(TuneArgs),
    /// Paired bootstrap test between two run files.
    Significance(SignificanceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Align each candidate directly against the question.
    Direct,
    /// Retrieve justifications from a KB and align question+choice to them.
    Kb,
    /// BM25 over the candidates themselves.
    Bm25,
    /// BM25 over a KB with the question/choice term filter.
    Ai2,
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineKind::Direct => "direct",
            PipelineKind::Kb => "kb",
            PipelineKind::Bm25 => "bm25",
            PipelineKind::Ai2 => "ai2",
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct LexiconArgs {
    /// Stoplist, one token per line (default: shipped English list).
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    /// Lemma table, `inflected<TAB>lemma` (default: shipped English table).
    #[arg(long)]
    pub lemmas: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Knowledge base: one document per line, or JSONL {"id", "text"}.
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 1.2)]
    pub k1: f64,
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
    #[arg(long, default_value = "plus1")]
    pub bm25_idf: Bm25Idf,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
}

/// Settings shared by `rank` and `tune`; every flag overrides `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// Text word vectors, `word v1 ... vd` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Expected vector dimension (default: inferred from the first row).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Binary vector cache; rebuilt when the vector file changes.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    #[arg(long)]
    pub lemmas: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub pipeline: Option<PipelineKind>,
    /// Knowledge base for the kb/ai2 pipelines.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Prebuilt index for the kb/ai2 pipelines.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub k_pos: Option<usize>,
    #[arg(long)]
    pub k_neg: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub n_justifications: Option<usize>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub bm25_idf: Option<Bm25Idf>,
    /// Raise negative question-set IDF values to zero.
    #[arg(long)]
    pub clamp_idf: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Run file to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Write one JSONL score breakdown per (question, candidate).
    #[arg(long)]
    pub explain: Option<PathBuf>,
    /// Also write the dataset's gold answers as a gold file.
    #[arg(long)]
    pub gold_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Gold file, `question_id<TAB>candidate_id` per line.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value = "map")]
    pub metric: Metric,
    /// Include per-question values in the report.
    #[arg(long)]
    pub per_question: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Grid file: TOML lists k_pos, k_neg, lambda, n_justifications and a metric.
    #[arg(long)]
    pub grid: PathBuf,
    /// CSV with the score of every grid cell.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    #[arg(long)]
    pub run_a: PathBuf,
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value = "map")]
    pub metric: Metric,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    #[arg(long)]
    pub seed: u64,
}

//! Unsupervised answer ranking by one-to-many embedding alignment.
//!
//! A question and each of its candidate answers are reduced to lemma lists
//! ([`text_prep`]). Every question term is aligned against the answer terms
//! by cosine similarity over pretrained word vectors ([`embedding_store`]);
//! the top `K+` and bottom `K-` alignments are combined with harmonic rank
//! weights and weighted by a question-set IDF ([`alignment_scorer`]).
//! Multiple-choice questions can instead be scored against justifications
//! retrieved from a knowledge base with BM25 ([`ir_engine`],
//! [`qa_pipelines`]). Rankings are scored with MAP / P@1 and compared with a
//! paired bootstrap test ([`evaluation`]); the three hyperparameters (plus
//! the justification count) are chosen by grid search ([`tuner`]).
//!
//! Batch work (per-question ranking, bootstrap resamples, grid cells) runs
//! on rayon when the `parallel` feature is enabled and sequentially
//! otherwise; results are identical either way.

pub mod alignment_scorer;
pub mod datasets;
pub mod embedding_store;
pub mod error;
pub mod evaluation;
pub mod ir_engine;
pub mod par;
pub mod qa_pipelines;
pub mod text_prep;
pub mod tuner;

pub use alignment_scorer::{AlignmentConfig, ScoreBreakdown, Variant};
pub use embedding_store::EmbeddingTable;
pub use error::{Error, Result};
pub use evaluation::{EvalReport, Metric};
pub use ir_engine::{Bm25Params, InvertedIndex};
pub use par::Execution;
pub use qa_pipelines::{Pipeline, QAInstance, RankedList};
pub use text_prep::{IdfTable, Lexicons, TermList};

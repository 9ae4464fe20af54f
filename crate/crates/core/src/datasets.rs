//! Dataset and knowledge-base loaders.
//!
//! Inputs are read line by line; paths ending in `.gz` are decompressed on
//! the fly. Malformed rows are errors carrying the 1-based line number.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir_engine::KbDocument;
use crate::qa_pipelines::{Candidate, QAInstance};
use crate::text_prep::{tokenize, Lexicons, TermList};

/// Opens a UTF-8 text file, transparently gunzipping `*.gz`.
pub fn open_text(path: &Path) -> Result<Box<dyn BufRead>> {
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    WikiqaTsv,
    McJsonl,
    KbLines,
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::WikiqaTsv => "wikiqa_tsv",
            DatasetFormat::McJsonl => "mc_jsonl",
            DatasetFormat::KbLines => "kb_lines",
        })
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wikiqa_tsv" | "wikiqa" => Ok(DatasetFormat::WikiqaTsv),
            "mc_jsonl" | "mc" => Ok(DatasetFormat::McJsonl),
            "kb_lines" | "kb" => Ok(DatasetFormat::KbLines),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub format: DatasetFormat,
    pub path: PathBuf,
    #[serde(default)]
    pub split: Option<String>,
}

/// Loads question instances for a QA format.
pub fn load_dataset(spec: &DatasetSpec, lexicons: &Lexicons) -> Result<Vec<QAInstance>> {
    match spec.format {
        DatasetFormat::WikiqaTsv => load_wikiqa(&spec.path, lexicons),
        DatasetFormat::McJsonl => load_mc_jsonl(&spec.path, lexicons),
        DatasetFormat::KbLines => Err(Error::Config(format!(
            "{} is a knowledge-base format, not a question set",
            spec.format
        ))),
    }
}

pub fn load_wikiqa(path: &Path, lexicons: &Lexicons) -> Result<Vec<QAInstance>> {
    read_wikiqa(open_text(path)?, lexicons)
}

/// WikiQA TSV. Accepts the official seven-column layout (`QuestionID
/// Question DocumentID DocumentTitle SentenceID Sentence Label`, header
/// optional) and a five-column layout (`question_id question sentence_id
/// sentence label`). Rows are grouped by question id in order of first
/// appearance; label-1 sentences are gold.
pub fn read_wikiqa<R: BufRead>(reader: R, lexicons: &Lexicons) -> Result<Vec<QAInstance>> {
    struct Pending {
        id: String,
        question: String,
        candidates: Vec<(String, String)>,
        gold: BTreeSet<String>,
        first_line: usize,
    }
    let mut groups: Vec<Pending> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if line_no == 1 && f.first() == Some(&"QuestionID") {
            continue;
        }
        let (qid, question, sid, sentence, label) = match f.len() {
            7 => (f[0], f[1], f[4], f[5], f[6]),
            5 => (f[0], f[1], f[2], f[3], f[4]),
            n => {
                return Err(Error::parse(
                    line_no,
                    format!("expected 5 or 7 tab-separated fields, found {n}"),
                ))
            }
        };
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    line_no,
                    format!("label must be 0 or 1, found `{other}`"),
                ))
            }
        };
        if qid.is_empty() || sid.is_empty() {
            return Err(Error::parse(line_no, "empty question or sentence id"));
        }
        let g = *slot.entry(qid.to_string()).or_insert_with(|| {
            groups.push(Pending {
                id: qid.to_string(),
                question: question.to_string(),
                candidates: Vec::new(),
                gold: BTreeSet::new(),
                first_line: line_no,
            });
            groups.len() - 1
        });
        let group = &mut groups[g];
        if group.candidates.iter().any(|(id, _)| id == sid) {
            return Err(Error::parse(
                line_no,
                format!("duplicate sentence id `{sid}`"),
            ));
        }
        group
            .candidates
            .push((sid.to_string(), sentence.to_string()));
        if label {
            group.gold.insert(sid.to_string());
        }
    }
    groups
        .into_iter()
        .map(|p| {
            let candidates = p
                .candidates
                .into_iter()
                .map(|(id, text)| Candidate {
                    id,
                    text: tokenize(&text, lexicons),
                })
                .collect();
            QAInstance::new(p.id, tokenize(&p.question, lexicons), candidates, p.gold)
                .map_err(|e| Error::parse(p.first_line, e.to_string()))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct McRecord {
    id: serde_json::Value,
    question: String,
    candidates: Vec<String>,
    gold_index: usize,
}

pub fn load_mc_jsonl(path: &Path, lexicons: &Lexicons) -> Result<Vec<QAInstance>> {
    read_mc_jsonl(open_text(path)?, lexicons)
}

/// One `{"id", "question", "candidates": [..], "gold_index"}` object per
/// line. Candidate ids are their 0-based positions.
pub fn read_mc_jsonl<R: BufRead>(reader: R, lexicons: &Lexicons) -> Result<Vec<QAInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: McRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        if rec.gold_index >= rec.candidates.len() {
            return Err(Error::parse(
                line_no,
                format!(
                    "gold_index {} out of range for {} candidates",
                    rec.gold_index,
                    rec.candidates.len()
                ),
            ));
        }
        let candidates = rec
            .candidates
            .iter()
            .enumerate()
            .map(|(j, c)| Candidate {
                id: j.to_string(),
                text: tokenize(c, lexicons),
            })
            .collect();
        let gold = BTreeSet::from([rec.gold_index.to_string()]);
        let inst = QAInstance::new(
            json_id(&rec.id),
            tokenize(&rec.question, lexicons),
            candidates,
            gold,
        )
        .map_err(|e| Error::parse(line_no, e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

fn json_id(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct KbRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
}

pub fn load_kb(path: &Path, lexicons: &Lexicons) -> Result<Vec<KbDocument>> {
    read_kb(open_text(path)?, lexicons)
}

/// One document per line, or JSONL `{"id": .., "text": ..}` when the first
/// non-blank line is a JSON object. Blank lines are skipped; documents
/// without an id are numbered 0, 1, 2, ... in file order.
pub fn read_kb<R: BufRead>(reader: R, lexicons: &Lexicons) -> Result<Vec<KbDocument>> {
    let mut docs = Vec::new();
    let mut jsonl: Option<bool> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let is_json = *jsonl.get_or_insert_with(|| {
            line.trim_start().starts_with('{') && serde_json::from_str::<KbRecord>(line).is_ok()
        });
        let seq = docs.len().to_string();
        let (doc_id, text) = if is_json {
            let rec: KbRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(line_no, e.to_string()))?;
            (rec.id.as_ref().map(json_id).unwrap_or(seq), rec.text)
        } else {
            (seq, line.to_string())
        };
        docs.push(KbDocument {
            doc_id,
            terms: tokenize(&text, lexicons),
        });
    }
    Ok(docs)
}

/// Minimum candidate count for Yahoo! Answers style questions.
pub const YA_MIN_CANDIDATES: usize = 4;

/// Drops questions with fewer than `min` candidates. Used when converting
/// community-QA dumps into the multiple-choice JSONL format.
pub fn filter_min_candidates(instances: Vec<QAInstance>, min: usize) -> Vec<QAInstance> {
    instances
        .into_iter()
        .filter(|i| i.candidates.len() >= min)
        .collect()
}

/// Terms of every question, in order; the input to the question-set IDF.
pub fn question_terms(instances: &[QAInstance]) -> Vec<TermList> {
    instances.iter().map(|i| i.question.clone()).collect()
}

//! Converts a Yahoo! Answers style dump into the multiple-choice JSONL
//! format read by `alignqa rank --format mc_jsonl`.
//!
//! Input: TSV rows `question_id<TAB>question<TAB>answer<TAB>is_best`, where
//! `is_best` is 1 for the community-chosen best answer. Rows of a question
//! need not be adjacent. Questions with fewer than four candidates, or
//! without exactly one best answer, are dropped.
//!
//! ```text
//! cargo run -p alignqa-core --example ya_to_jsonl -- input.tsv > output.jsonl
//! ```
//!
//! The raw corpus is not redistributable, so the candidate-count filter is
//! only exercised on synthetic input here.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use alignqa::datasets::{open_text, YA_MIN_CANDIDATES};
use serde_json::json;

struct Question {
    id: String,
    text: String,
    answers: Vec<String>,
    best: Vec<usize>,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .ok_or("usage: ya_to_jsonl <input.tsv[.gz]>")?;
    let mut questions: Vec<Question> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (i, line) in open_text(path.as_ref())?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [qid, question, answer, best] = f[..] else {
            return Err(format!("line {}: expected 4 tab-separated fields", i + 1).into());
        };
        let k = *slot.entry(qid.to_string()).or_insert_with(|| {
            questions.push(Question {
                id: qid.to_string(),
                text: question.to_string(),
                answers: Vec::new(),
                best: Vec::new(),
            });
            questions.len() - 1
        });
        let q = &mut questions[k];
        if best.trim() == "1" {
            q.best.push(q.answers.len());
        }
        q.answers.push(answer.to_string());
    }

    let (mut kept, mut dropped) = (0, 0);
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    for q in questions {
        if q.answers.len() < YA_MIN_CANDIDATES || q.best.len() != 1 {
            dropped += 1;
            continue;
        }
        let rec = json!({
            "id": q.id,
            "question": q.text,
            "candidates": q.answers,
            "gold_index": q.best[0],
        });
        writeln!(out, "{rec}")?;
        kept += 1;
    }
    out.flush()?;
    eprintln!("kept {kept} questions, dropped {dropped}");
    Ok(())
}

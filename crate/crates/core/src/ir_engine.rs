//! BM25 inverted index, candidate-level BM25 ranking, and the
//! justification-filtered IR solver score.
//!
//! ```text
//! score(D) = sum_{t in query} idf(t) * tf(t,D) * (k1 + 1)
//!                              / (tf(t,D) + k1 * (1 - b + b * |D| / avgdl))
//! idf(t)   = ln((n_docs - df + 0.5) / (df + 0.5) + 1)
//! ```
//!
//! Query terms are deduplicated before scoring. This IDF belongs to the
//! retrieval engine and is unrelated to the question-set IDF in
//! [`crate::text_prep`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text_prep::TermList;

const INDEX_MAGIC: &[u8; 8] = b"ALQAIDX\0";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bm25Idf {
    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, never negative.
    #[default]
    Plus1,
    /// `ln((N - df + 0.5) / (df + 0.5))`, negative for terms in over half the docs.
    Classic,
}

impl Bm25Idf {
    pub fn weight(self, n_docs: usize, df: usize) -> f64 {
        let ratio = (n_docs as f64 - df as f64 + 0.5) / (df as f64 + 0.5);
        match self {
            Bm25Idf::Plus1 => (ratio + 1.0).ln(),
            Bm25Idf::Classic => ratio.ln(),
        }
    }

    fn tag(self) -> u8 {
        match self {
            Bm25Idf::Plus1 => 0,
            Bm25Idf::Classic => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Bm25Idf::Plus1),
            1 => Some(Bm25Idf::Classic),
            _ => None,
        }
    }
}

impl fmt::Display for Bm25Idf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bm25Idf::Plus1 => "plus1",
            Bm25Idf::Classic => "classic",
        })
    }
}

impl FromStr for Bm25Idf {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus1" => Ok(Bm25Idf::Plus1),
            "classic" => Ok(Bm25Idf::Classic),
            other => Err(Error::Config(format!("unknown BM25 idf variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub idf: Bm25Idf,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            idf: Bm25Idf::Plus1,
        }
    }
}

/// A knowledge-base entry.
#[derive(Debug, Clone, PartialEq)]
pub struct KbDocument {
    pub doc_id: String,
    /// Preprocessed text; `terms.source_text` holds the raw line.
    pub terms: TermList,
}

impl KbDocument {
    pub fn raw_text(&self) -> &str {
        &self.terms.source_text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_terms: Vec<Vec<String>>,
    doc_len: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
    checksum: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    /// Position of the document in the index.
    pub doc: usize,
    pub doc_id: String,
    pub score: f64,
}

/// Hits sorted by score descending, ties by `doc_id` ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
}

/// Fingerprint of a corpus: ids, raw text and processed terms, in order.
pub fn corpus_checksum(docs: &[KbDocument]) -> [u8; 32] {
    let mut h = Sha256::new();
    for d in docs {
        h.update(d.doc_id.as_bytes());
        h.update([0x1f]);
        h.update(d.raw_text().as_bytes());
        h.update([0x1f]);
        for t in d.terms.iter() {
            h.update(t.as_bytes());
            h.update([0x1e]);
        }
        h.update([0x1d]);
    }
    h.finalize().into()
}

pub fn build_index(docs: &[KbDocument], params: Bm25Params) -> Result<InvertedIndex> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut seen = HashSet::with_capacity(docs.len());
    for d in docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocId(d.doc_id.clone()));
        }
    }
    let doc_ids = docs.iter().map(|d| d.doc_id.clone()).collect();
    let doc_terms = docs.iter().map(|d| d.terms.terms.clone()).collect();
    Ok(InvertedIndex::assemble(
        params,
        doc_ids,
        doc_terms,
        corpus_checksum(docs),
    ))
}

impl InvertedIndex {
    fn assemble(
        params: Bm25Params,
        doc_ids: Vec<String>,
        doc_terms: Vec<Vec<String>>,
        checksum: [u8; 32],
    ) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(doc_terms.len());
        for (doc, terms) in doc_terms.iter().enumerate() {
            doc_len.push(terms.len() as u32);
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t.as_str()).or_insert(0) += 1;
            }
            for (t, n) in tf {
                postings.entry(t.to_string()).or_default().push(Posting {
                    doc: doc as u32,
                    tf: n,
                });
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avg_doc_len = total as f64 / doc_len.len() as f64;
        InvertedIndex {
            params,
            doc_ids,
            doc_terms,
            doc_len,
            avg_doc_len,
            postings,
            checksum,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc: usize) -> u32 {
        self.doc_len[doc]
    }

    pub fn doc_id(&self, doc: usize) -> &str {
        &self.doc_ids[doc]
    }

    pub fn doc_terms(&self, doc: usize) -> &[String] {
        &self.doc_terms[doc]
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn checksum(&self) -> &[u8; 32] {
        &self.checksum
    }

    /// Per-term BM25 contribution.
    fn term_weight(&self, df: usize, tf: u32, doc: usize) -> f64 {
        let Bm25Params { k1, b, idf } = self.params;
        let tf = tf as f64;
        let len_norm = 1.0 - b + b * self.doc_len[doc] as f64 / self.avg_doc_len;
        idf.weight(self.n_docs(), df) * tf * (k1 + 1.0) / (tf + k1 * len_norm)
    }

    /// Scores of every document sharing at least one query term, in
    /// first-touch order.
    fn score_matching(&self, query: &[String]) -> Vec<(usize, f64)> {
        let mut seen = HashSet::new();
        let mut slot: HashMap<u32, usize> = HashMap::new();
        let mut scores: Vec<(usize, f64)> = Vec::new();
        for t in query {
            if !seen.insert(t.as_str()) {
                continue;
            }
            let list = self.postings(t);
            for p in list {
                let w = self.term_weight(list.len(), p.tf, p.doc as usize);
                let i = *slot.entry(p.doc).or_insert_with(|| {
                    scores.push((p.doc as usize, 0.0));
                    scores.len() - 1
                });
                scores[i].1 += w;
            }
        }
        scores
    }

    /// BM25 score of a single document for `query`.
    pub fn score_doc(&self, query: &[String], doc: usize) -> f64 {
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for t in query {
            if !seen.insert(t.as_str()) {
                continue;
            }
            let list = self.postings(t);
            if let Ok(i) = list.binary_search_by_key(&(doc as u32), |p| p.doc) {
                total += self.term_weight(list.len(), list[i].tf, doc);
            }
        }
        total
    }

    pub fn retrieve(&self, query: &TermList, n: usize) -> RetrievalResult {
        let mut scored = self.score_matching(&query.terms);
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        scored.truncate(n);
        RetrievalResult {
            hits: scored
                .into_iter()
                .map(|(doc, score)| Hit {
                    doc,
                    doc_id: self.doc_ids[doc].clone(),
                    score,
                })
                .collect(),
        }
    }

    /// Writes the versioned binary index: magic, version, corpus checksum,
    /// BM25 parameters, documents, then postings in term order.
    pub fn save<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&self.checksum)?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        w.write_all(&[self.params.idf.tag()])?;
        w.write_all(&(self.doc_ids.len() as u64).to_le_bytes())?;
        for (id, terms) in self.doc_ids.iter().zip(&self.doc_terms) {
            write_str(&mut w, id)?;
            w.write_all(&(terms.len() as u32).to_le_bytes())?;
            for t in terms {
                write_str(&mut w, t)?;
            }
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        for (term, list) in &self.postings {
            write_str(&mut w, term)?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for p in list {
                w.write_all(&p.doc.to_le_bytes())?;
                w.write_all(&p.tf.to_le_bytes())?;
            }
        }
        w.flush()
    }

    /// Reads an index written by [`save`](Self::save) and checks that the
    /// stored postings agree with the stored documents.
    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(bad_index("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != INDEX_VERSION {
            return Err(bad_index(format!("unsupported version {version}")));
        }
        let mut checksum = [0u8; 32];
        r.read_exact(&mut checksum)?;
        let k1 = f64::from_le_bytes(read_array(&mut r)?);
        let b = f64::from_le_bytes(read_array(&mut r)?);
        let [tag] = read_array::<1, _>(&mut r)?;
        let idf = Bm25Idf::from_tag(tag).ok_or_else(|| bad_index("unknown idf variant"))?;
        let n_docs = read_u64(&mut r)? as usize;
        if n_docs == 0 {
            return Err(bad_index("no documents"));
        }
        let mut doc_ids = Vec::with_capacity(n_docs.min(1 << 20));
        let mut doc_terms = Vec::with_capacity(n_docs.min(1 << 20));
        for _ in 0..n_docs {
            doc_ids.push(read_str(&mut r)?);
            let n = read_u32(&mut r)? as usize;
            let mut terms = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                terms.push(read_str(&mut r)?);
            }
            doc_terms.push(terms);
        }
        let n_terms = read_u64(&mut r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..n_terms {
            let term = read_str(&mut r)?;
            let n = read_u32(&mut r)? as usize;
            let mut list = Vec::with_capacity(n.min(n_docs));
            for _ in 0..n {
                let doc = read_u32(&mut r)?;
                let tf = read_u32(&mut r)?;
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        let index =
            InvertedIndex::assemble(Bm25Params { k1, b, idf }, doc_ids, doc_terms, checksum);
        if index.postings != postings {
            return Err(bad_index("postings disagree with stored documents"));
        }
        Ok(index)
    }
}

fn bad_index(message: impl Into<String>) -> Error {
    Error::Format {
        kind: "index",
        message: message.into(),
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    read_array(r).map(u32::from_le_bytes)
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    read_array(r).map(u64::from_le_bytes)
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| bad_index("string is not UTF-8"))
}

pub fn bm25_retrieve(query: &TermList, index: &InvertedIndex, n: usize) -> RetrievalResult {
    index.retrieve(query, n)
}

/// Scores each candidate as a BM25 document (over an index of the
/// candidates themselves) against `question`. Returns `(position, score)`
/// in descending score order, ties by position.
pub fn bm25_rank_candidates(
    question: &TermList,
    candidates: &[TermList],
    params: Bm25Params,
) -> Vec<(usize, f64)> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let ids = (0..candidates.len()).map(|i| i.to_string()).collect();
    let terms = candidates.iter().map(|c| c.terms.clone()).collect();
    let index = InvertedIndex::assemble(params, ids, terms, [0; 32]);
    let mut scores: Vec<(usize, f64)> = (0..candidates.len()).map(|i| (i, 0.0)).collect();
    for (doc, s) in index.score_matching(&question.terms) {
        scores[doc].1 = s;
    }
    sort_desc_stable(&mut scores);
    scores
}

/// Descending by score; the sort is stable so equal scores keep input order.
pub(crate) fn sort_desc_stable(scores: &mut [(usize, f64)]) {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
}

/// IR-solver score of one choice: retrieve the top `n` documents for the
/// union of question and choice terms, keep those containing at least one
/// question term and at least one choice term, and return the best
/// surviving BM25 score (0 when none survive).
pub fn ai2_ir_score(
    question: &TermList,
    choice: &TermList,
    index: &InvertedIndex,
    n: usize,
) -> f64 {
    let query = question.concat(choice);
    let q_terms: HashSet<&str> = question.iter().collect();
    let c_terms: HashSet<&str> = choice.iter().collect();
    index
        .retrieve(&query, n)
        .hits
        .into_iter()
        .filter(|h| {
            let doc = index.doc_terms(h.doc);
            doc.iter().any(|t| q_terms.contains(t.as_str()))
                && doc.iter().any(|t| c_terms.contains(t.as_str()))
        })
        .map(|h| h.score)
        .fold(None, |best: Option<f64>, s| {
            Some(best.map_or(s, |b| b.max(s)))
        })
        .unwrap_or(0.0)
}

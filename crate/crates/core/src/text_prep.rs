//! Tokenization, stopword removal, lemmatization and the question-set IDF.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const ENGLISH_LEMMAS: &str = include_str!("../data/lemmas_en.tsv");

/// Stoplist and inflection → lemma table used by [`tokenize`].
///
/// All entries are stored lowercase; lemma lookup falls back to the word
/// itself.
#[derive(Debug, Clone, Default)]
pub struct Lexicons {
    stopwords: HashSet<String>,
    lemma_map: HashMap<String, String>,
}

impl Lexicons {
    pub fn new<S, I, L>(stopwords: I, lemmas: L) -> Self
    where
        S: AsRef<str>,
        I: IntoIterator<Item = S>,
        L: IntoIterator<Item = (String, String)>,
    {
        let stopwords = stopwords
            .into_iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        let mut lemma_map = HashMap::new();
        for (form, lemma) in lemmas {
            lemma_map
                .entry(form.to_lowercase())
                .or_insert_with(|| lemma.to_lowercase());
        }
        Lexicons {
            stopwords,
            lemma_map,
        }
    }

    /// The shipped English stoplist and lemma table.
    pub fn english() -> Self {
        let lemmas = parse_lemma_tsv(ENGLISH_LEMMAS).expect("shipped lemma table is well formed");
        Lexicons::new(parse_stoplist(ENGLISH_STOPWORDS), lemmas)
    }

    /// Loads lexicons from files; `None` selects the shipped English default
    /// for that half.
    pub fn from_files(stoplist: Option<&Path>, lemmas: Option<&Path>) -> Result<Self> {
        let stop_text = match stoplist {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::file(p, e))?,
            None => ENGLISH_STOPWORDS.to_string(),
        };
        let lemma_pairs = match lemmas {
            Some(p) => parse_lemma_tsv(&fs::read_to_string(p).map_err(|e| Error::file(p, e))?)?,
            None => parse_lemma_tsv(ENGLISH_LEMMAS)?,
        };
        Ok(Lexicons::new(parse_stoplist(&stop_text), lemma_pairs))
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn lemma<'a>(&'a self, word: &'a str) -> &'a str {
        self.lemma_map.get(word).map(String::as_str).unwrap_or(word)
    }

    pub fn stopword_count(&self) -> usize {
        self.stopwords.len()
    }

    pub fn lemma_count(&self) -> usize {
        self.lemma_map.len()
    }
}

/// One token per line; blank lines ignored.
pub fn parse_stoplist(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `inflected<TAB>lemma` per line; blank lines ignored.
pub fn parse_lemma_tsv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(form), Some(lemma), None) if !form.is_empty() && !lemma.is_empty() => {
                pairs.push((form.to_string(), lemma.to_string()))
            }
            _ => return Err(Error::parse(i + 1, "expected `inflected<TAB>lemma`")),
        }
    }
    Ok(pairs)
}

/// Preprocessed text: ordered lemmas plus the byte span of each source token.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TermList {
    pub terms: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
    pub source_text: String,
}

impl TermList {
    /// Builds a term list directly from already-normalized terms.
    pub fn from_terms<S: Into<String>>(terms: impl IntoIterator<Item = S>) -> Self {
        let terms: Vec<String> = terms.into_iter().map(Into::into).collect();
        let source_text = terms.join(" ");
        let mut offsets = Vec::with_capacity(terms.len());
        let mut at = 0;
        for t in &terms {
            offsets.push((at, at + t.len()));
            at += t.len() + 1;
        }
        TermList {
            terms,
            offsets,
            source_text,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    /// `self` followed by `other`, as used for question+choice queries.
    /// Offsets of `other` are shifted past a single separating space.
    pub fn concat(&self, other: &TermList) -> TermList {
        let shift = self.source_text.len() + 1;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let mut offsets = self.offsets.clone();
        offsets.extend(other.offsets.iter().map(|&(s, e)| (s + shift, e + shift)));
        TermList {
            terms,
            offsets,
            source_text: format!("{} {}", self.source_text, other.source_text),
        }
    }
}

/// Lowercases, splits on maximal runs of non-alphanumeric characters, drops
/// stopwords and maps each survivor through the lemma table.
pub fn tokenize(raw: &str, lexicons: &Lexicons) -> TermList {
    let mut terms = Vec::new();
    let mut offsets = Vec::new();
    let mut start: Option<usize> = None;
    let mut emit = |s: usize, e: usize| {
        let token = raw[s..e].to_lowercase();
        if !lexicons.is_stopword(&token) {
            terms.push(lexicons.lemma(&token).to_string());
            offsets.push((s, e));
        }
    };
    for (i, c) in raw.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                emit(s, i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        emit(s, raw.len());
    }
    TermList {
        terms,
        offsets,
        source_text: raw.to_string(),
    }
}

/// `ln((n - df + 0.5) / (df + 0.5))`.
pub fn local_idf(n_questions: usize, doc_freq: usize) -> f64 {
    let n = n_questions as f64;
    let df = doc_freq as f64;
    ((n - df + 0.5) / (df + 0.5)).ln()
}

/// Inverse document frequency computed over the question set itself.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    n_questions: usize,
    doc_freq: HashMap<String, usize>,
    idf: HashMap<String, f64>,
    clamp_negative: bool,
}

impl IdfTable {
    pub fn n_questions(&self) -> usize {
        self.n_questions
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// IDF of `term`; terms never seen in the question set get the
    /// docfreq-0 value.
    pub fn idf(&self, term: &str) -> f64 {
        match self.idf.get(term) {
            Some(&v) => v,
            None => self.finish(local_idf(self.n_questions, 0)),
        }
    }

    pub fn clamps_negative(&self) -> bool {
        self.clamp_negative
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }

    /// Same table with every IDF multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> IdfTable {
        let mut t = self.clone();
        for v in t.idf.values_mut() {
            *v *= factor;
        }
        t
    }

    fn finish(&self, v: f64) -> f64 {
        if self.clamp_negative {
            v.max(0.0)
        } else {
            v
        }
    }
}

pub fn compute_idf(questions: &[TermList]) -> Result<IdfTable> {
    compute_idf_with(questions, false)
}

/// As [`compute_idf`]; with `clamp_negative` IDF values below zero
/// (terms in more than half the questions) are raised to zero.
pub fn compute_idf_with(questions: &[TermList], clamp_negative: bool) -> Result<IdfTable> {
    if questions.is_empty() {
        return Err(Error::NoQuestions);
    }
    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for q in questions {
        seen.clear();
        for t in q.iter() {
            if seen.insert(t) {
                *doc_freq.entry(t.to_string()).or_insert(0) += 1;
            }
        }
    }
    let n = questions.len();
    let idf = doc_freq
        .iter()
        .map(|(t, &df)| {
            let v = local_idf(n, df);
            (t.clone(), if clamp_negative { v.max(0.0) } else { v })
        })
        .collect();
    Ok(IdfTable {
        n_questions: n,
        doc_freq,
        idf,
        clamp_negative,
    })
}

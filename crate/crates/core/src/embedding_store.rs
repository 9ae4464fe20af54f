//! Word vectors and the per-term similarity ranking that alignment is built on.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::text_prep::TermList;

const CACHE_MAGIC: &[u8; 8] = b"ALQAEMB\0";
const CACHE_VERSION: u32 = 1;

/// Dense word-vector table. Vectors are stored as `f32` with their norms
/// precomputed in `f64`; similarities are accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: HashMap<String, u32>,
    words: Vec<String>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

#[derive(Debug)]
pub struct LoadReport {
    pub table: EmbeddingTable,
    /// Rows dropped because every component was zero.
    pub zero_norm_skipped: usize,
    /// Rows dropped because the word had already been loaded.
    pub duplicates_skipped: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ids: HashMap::new(),
            words: Vec::new(),
            data: Vec::new(),
            norms: Vec::new(),
        }
    }

    /// Builds a table from in-memory rows. Zero vectors and repeated words
    /// are dropped; a wrong-length vector is an error.
    pub fn from_rows<S, V>(dim: usize, rows: impl IntoIterator<Item = (S, V)>) -> Result<Self>
    where
        S: Into<String>,
        V: AsRef<[f32]>,
    {
        let mut t = EmbeddingTable::new(dim);
        for (i, (w, v)) in rows.into_iter().enumerate() {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: v.len(),
                });
            }
            t.insert(w.into(), v);
        }
        Ok(t)
    }

    /// Returns false (and stores nothing) for duplicates and zero vectors.
    fn insert(&mut self, word: String, v: &[f32]) -> bool {
        debug_assert_eq!(v.len(), self.dim);
        if self.ids.contains_key(&word) {
            return false;
        }
        let norm = norm(v);
        if norm == 0.0 {
            return false;
        }
        self.ids.insert(word.clone(), self.words.len() as u32);
        self.words.push(word);
        self.data.extend_from_slice(v);
        self.norms.push(norm);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.ids.contains_key(term)
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub fn vector(&self, term: &str) -> Option<&[f32]> {
        self.id(term).map(|i| self.row(i))
    }

    pub fn norm(&self, term: &str) -> Option<f64> {
        self.id(term).map(|i| self.norms[i as usize])
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn row(&self, id: u32) -> &[f32] {
        let s = id as usize * self.dim;
        &self.data[s..s + self.dim]
    }

    /// Cosine similarity between two stored rows.
    pub fn cosine_ids(&self, a: u32, b: u32) -> f64 {
        let dot: f64 = self
            .row(a)
            .iter()
            .zip(self.row(b))
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum();
        dot / (self.norms[a as usize] * self.norms[b as usize])
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.cosine_ids(self.id(a)?, self.id(b)?))
    }

    /// Same table with every vector multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f32) -> EmbeddingTable {
        let mut t = self.clone();
        for x in &mut t.data {
            *x *= factor;
        }
        for (i, n) in t.norms.iter_mut().enumerate() {
            let s = i * t.dim;
            *n = norm(&t.data[s..s + t.dim]);
        }
        t
    }

    /// Writes the binary cache: magic, version, source checksum, then words
    /// and little-endian `f32` rows.
    pub fn write_cache<W: Write>(&self, mut w: W, source_checksum: &[u8; 32]) -> io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(source_checksum)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.words.len() as u64).to_le_bytes())?;
        for word in &self.words {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
        }
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    }

    /// Reads a cache written by [`write_cache`](Self::write_cache). Returns
    /// `Ok(None)` when the stored checksum differs from `expected_checksum`.
    pub fn read_cache<R: Read>(mut r: R, expected_checksum: &[u8; 32]) -> Result<Option<Self>> {
        let bad = |m: &str| Error::Format {
            kind: "embedding cache",
            message: m.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut checksum = [0u8; 32];
        r.read_exact(&mut checksum)?;
        if &checksum != expected_checksum {
            return Ok(None);
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            words.push(String::from_utf8(buf).map_err(|_| bad("word is not UTF-8"))?);
        }
        let mut raw = vec![0u8; count * dim * 4];
        r.read_exact(&mut raw)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut t = EmbeddingTable::new(dim);
        for (i, word) in words.into_iter().enumerate() {
            if !t.insert(word, &data[i * dim..(i + 1) * dim]) {
                return Err(bad("duplicate word or zero vector"));
            }
        }
        Ok(Some(t))
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Parses `word v1 v2 ... vd` lines. The dimension is taken from
/// `expected_dim` or else inferred from the first row; a leading
/// `count dim` header line (word2vec text format) is skipped.
pub fn load_embeddings<R: BufRead>(source: R, expected_dim: Option<usize>) -> Result<LoadReport> {
    let mut dim = expected_dim;
    let mut table: Option<EmbeddingTable> = None;
    let mut zero_norm_skipped = 0;
    let mut duplicates_skipped = 0;
    let mut values: Vec<f32> = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n', ' ']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if line_no == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let header_dim: usize = fields[1].parse().unwrap_or(0);
            match dim {
                Some(d) if d != header_dim => {
                    return Err(Error::DimensionMismatch {
                        line: line_no,
                        expected: d,
                        found: header_dim,
                    })
                }
                _ => dim = Some(header_dim),
            }
            continue;
        }
        let d = *dim.get_or_insert(fields.len().saturating_sub(1));
        if d == 0 {
            return Err(Error::parse(line_no, "row has no vector components"));
        }
        // Words containing spaces: everything before the last `d` fields.
        if fields.len() < d + 1 {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: d,
                found: fields.len().saturating_sub(1),
            });
        }
        if fields.len() > d + 1
            && fields[1..fields.len() - d]
                .iter()
                .all(|f| f.parse::<f32>().is_ok())
        {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: d,
                found: fields.len() - 1,
            });
        }
        let split = fields.len() - d;
        values.clear();
        for f in &fields[split..] {
            let x: f32 = f
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad vector component `{f}`")))?;
            if !x.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite component `{f}`")));
            }
            values.push(x);
        }
        let word = fields[..split].join(" ");
        let t = table.get_or_insert_with(|| EmbeddingTable::new(d));
        if t.contains(&word) {
            duplicates_skipped += 1;
        } else if !t.insert(word, &values) {
            zero_norm_skipped += 1;
        }
    }
    if zero_norm_skipped > 0 {
        log::warn!("skipped {zero_norm_skipped} zero-norm vectors");
    }
    Ok(LoadReport {
        table: table.unwrap_or_else(|| EmbeddingTable::new(dim.unwrap_or(0))),
        zero_norm_skipped,
        duplicates_skipped,
    })
}

/// SHA-256 of a file's bytes, used to validate embedding and index caches.
pub fn file_checksum(path: &Path) -> Result<[u8; 32]> {
    let mut f = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().into())
}

/// Loads vectors from `source`, going through the binary cache at `cache`
/// when given. A missing or stale cache (checksum mismatch) is rebuilt.
pub fn load_embeddings_file(
    source: &Path,
    expected_dim: Option<usize>,
    cache: Option<&Path>,
) -> Result<LoadReport> {
    let checksum = match cache {
        Some(_) => Some(file_checksum(source)?),
        None => None,
    };
    if let (Some(cache), Some(sum)) = (cache, &checksum) {
        if let Ok(f) = File::open(cache) {
            match EmbeddingTable::read_cache(BufReader::new(f), sum) {
                Ok(Some(table)) if expected_dim.is_none_or(|d| d == table.dim()) => {
                    return Ok(LoadReport {
                        table,
                        zero_norm_skipped: 0,
                        duplicates_skipped: 0,
                    })
                }
                Ok(_) => log::info!("embedding cache {} is stale; rebuilding", cache.display()),
                Err(e) => log::warn!(
                    "ignoring unreadable embedding cache {}: {e}",
                    cache.display()
                ),
            }
        }
    }
    let reader = crate::datasets::open_text(source)?;
    let report = load_embeddings(reader, expected_dim)?;
    if let (Some(cache), Some(sum)) = (cache, &checksum) {
        let f = File::create(cache).map_err(|e| Error::file(cache, e))?;
        report
            .table
            .write_cache(BufWriter::new(f), sum)
            .map_err(|e| Error::file(cache, e))?;
    }
    Ok(report)
}

pub fn cosine(a: &str, b: &str, table: &EmbeddingTable) -> Option<f64> {
    table.cosine(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aligned<'a> {
    pub term: &'a str,
    /// Position of the term in the answer's term list.
    pub position: usize,
    pub similarity: f64,
}

/// Answer-term occurrences sorted by similarity to one question term,
/// most similar first; equal similarities keep answer order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedSimilarities<'a> {
    pub pairs: Vec<Aligned<'a>>,
}

impl<'a> RankedSimilarities<'a> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Similarities in descending order.
    pub fn descending(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.similarity)
    }

    /// Similarities in ascending order (least similar first).
    pub fn ascending(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().rev().map(|p| p.similarity)
    }
}

/// Answer terms resolved against the table once, so each question term can
/// be ranked without repeated lookups.
#[derive(Debug, Clone)]
pub struct ResolvedTerms<'a> {
    entries: Vec<(usize, &'a str, u32)>,
}

impl<'a> ResolvedTerms<'a> {
    pub fn new(terms: &'a TermList, table: &EmbeddingTable) -> Self {
        let entries = terms
            .iter()
            .enumerate()
            .filter_map(|(pos, t)| table.id(t).map(|id| (pos, t, id)))
            .collect();
        ResolvedTerms { entries }
    }

    /// Number of in-vocabulary occurrences.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank(&self, q_id: u32, table: &EmbeddingTable) -> RankedSimilarities<'a> {
        let mut pairs: Vec<Aligned<'a>> = self
            .entries
            .iter()
            .map(|&(position, term, id)| Aligned {
                term,
                position,
                similarity: table.cosine_ids(q_id, id),
            })
            .collect();
        // Stable: ties stay in answer order.
        pairs.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        RankedSimilarities { pairs }
    }
}

/// Ranks the in-vocabulary occurrences of `answer` by cosine similarity to
/// `q_term`. Empty when `q_term` has no vector.
pub fn rank_alignments<'a>(
    q_term: &str,
    answer: &'a TermList,
    table: &EmbeddingTable,
) -> RankedSimilarities<'a> {
    match table.id(q_term) {
        Some(q) => ResolvedTerms::new(answer, table).rank(q, table),
        None => RankedSimilarities::default(),
    }
}

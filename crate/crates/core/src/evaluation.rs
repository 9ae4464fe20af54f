//! MAP, P@1 and the paired one-tailed bootstrap test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::qa_pipelines::{QAInstance, RankedList};

/// Question id → ids of the correct candidates.
pub type GoldSet = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "map", alias = "MAP")]
    Map,
    #[serde(rename = "p@1", alias = "p1", alias = "P@1")]
    P1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Map => "map",
            Metric::P1 => "p@1",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(Metric::Map),
            "p@1" | "p1" | "precision_at_1" => Ok(Metric::P1),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Average precision over the full ranking. `None` when no gold id appears
/// among the ranked candidates; such questions are excluded from MAP.
pub fn average_precision(ranked: &RankedList, gold: &BTreeSet<String>) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, e) in ranked.entries.iter().enumerate() {
        if gold.contains(&e.candidate_id) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// 1 if the top-ranked candidate is correct, else 0.
pub fn precision_at_1(ranked: &RankedList, gold: &BTreeSet<String>) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyGold(ranked.question_id.clone()));
    }
    Ok(match ranked.top() {
        Some(e) if gold.contains(&e.candidate_id) => 1.0,
        _ => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    #[serde(skip)]
    pub per_question: BTreeMap<String, f64>,
    /// Evaluated question ids in run order.
    #[serde(skip)]
    pub order: Vec<String>,
}

impl EvalReport {
    /// Per-question values in run order.
    pub fn values(&self) -> Vec<f64> {
        self.order.iter().map(|q| self.per_question[q]).collect()
    }
}

/// Scores `runs` against `gold`. Every gold question must have a ranking.
/// For MAP, questions without a reachable gold answer are skipped; for P@1
/// they are an error.
pub fn evaluate(runs: &[RankedList], gold: &GoldSet, metric: Metric) -> Result<EvalReport> {
    let mut by_id: HashMap<&str, &RankedList> = HashMap::with_capacity(runs.len());
    for r in runs {
        if by_id.insert(r.question_id.as_str(), r).is_some() {
            return Err(Error::Mismatch(format!(
                "question `{}` ranked twice",
                r.question_id
            )));
        }
    }
    if let Some(q) = gold.keys().find(|q| !by_id.contains_key(q.as_str())) {
        return Err(Error::Mismatch(format!(
            "question `{q}` is in the gold file but not in the run"
        )));
    }
    let empty = BTreeSet::new();
    let mut per_question = BTreeMap::new();
    let mut order = Vec::new();
    let mut n_skipped = 0;
    for r in runs {
        let g = gold.get(&r.question_id).unwrap_or(&empty);
        let v = match metric {
            Metric::Map => average_precision(r, g),
            Metric::P1 => Some(precision_at_1(r, g)?),
        };
        match v {
            Some(v) => {
                per_question.insert(r.question_id.clone(), v);
                order.push(r.question_id.clone());
            }
            None => n_skipped += 1,
        }
    }
    let n_evaluated = order.len();
    let value = if n_evaluated == 0 {
        0.0
    } else {
        order.iter().map(|q| per_question[q]).sum::<f64>() / n_evaluated as f64
    };
    Ok(EvalReport {
        metric,
        value,
        n_evaluated,
        n_skipped,
        per_question,
        order,
    })
}

pub fn gold_from_instances(instances: &[QAInstance]) -> GoldSet {
    instances
        .iter()
        .filter(|i| !i.gold.is_empty())
        .map(|i| (i.question_id.clone(), i.gold.clone()))
        .collect()
}

/// Reads `question_id<TAB>candidate_id` lines.
pub fn read_gold<R: BufRead>(r: R) -> Result<GoldSet> {
    let mut gold = GoldSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split('\t');
        match (f.next(), f.next(), f.next()) {
            (Some(q), Some(c), None) if !q.is_empty() && !c.is_empty() => {
                gold.entry(q.to_string()).or_default().insert(c.to_string());
            }
            _ => {
                return Err(Error::parse(
                    i + 1,
                    "expected `question_id<TAB>candidate_id`",
                ))
            }
        }
    }
    Ok(gold)
}

pub fn write_gold<W: std::io::Write>(mut w: W, gold: &GoldSet) -> std::io::Result<()> {
    for (q, cs) in gold {
        for c in cs {
            writeln!(w, "{q}\t{c}")?;
        }
    }
    w.flush()
}

/// Aligns two reports question by question. Both must have evaluated exactly
/// the same questions.
pub fn paired_values(a: &EvalReport, b: &EvalReport) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.per_question.len() != b.per_question.len() {
        return Err(Error::Mismatch(format!(
            "systems evaluated {} and {} questions",
            a.per_question.len(),
            b.per_question.len()
        )));
    }
    let mut xs = Vec::with_capacity(a.order.len());
    let mut ys = Vec::with_capacity(a.order.len());
    for q in &a.order {
        let y = b.per_question.get(q).ok_or_else(|| {
            Error::Mismatch(format!("question `{q}` missing from the second system"))
        })?;
        xs.push(a.per_question[q]);
        ys.push(*y);
    }
    Ok((xs, ys))
}

/// One-tailed paired bootstrap: the fraction of resamples (question indices
/// drawn with replacement) in which system A's mean does not exceed B's.
/// Resample `i` draws from a ChaCha8 stream keyed by `(seed, i)`, so the
/// result does not depend on thread count.
pub fn bootstrap_significance(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    bootstrap_significance_with(Execution::default(), a, b, iterations, seed)
}

pub fn bootstrap_significance_with(
    exec: Execution,
    a: &[f64],
    b: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Config(
            "bootstrap needs at least one question".into(),
        ));
    }
    if iterations == 0 {
        return Err(Error::Config(
            "bootstrap needs at least one iteration".into(),
        ));
    }
    let deltas: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = deltas.len();
    let not_better = par::count_range(exec, iterations, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += deltas[rng.gen_range(0..n)];
        }
        sum <= 0.0
    });
    Ok(not_better as f64 / iterations as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa_pipelines::RankedEntry;

    fn ranked(ids: &[&str]) -> RankedList {
        RankedList {
            question_id: "q".into(),
            entries: ids
                .iter()
                .map(|id| RankedEntry {
                    candidate_id: id.to_string(),
                    score: 0.0,
                })
                .collect(),
        }
    }

    fn gold(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ap_examples() {
        let r = ranked(&["a", "b", "c", "d"]);
        assert_eq!(average_precision(&r, &gold(&["a"])), Some(1.0));
        let ap = average_precision(&r, &gold(&["a", "c"])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.833333333).abs() < 1e-9);
        assert_eq!(average_precision(&r, &gold(&[])), None);
        assert_eq!(average_precision(&r, &gold(&["zz"])), None);
    }

    #[test]
    fn p1_examples() {
        let r = ranked(&["a", "b", "c", "d"]);
        assert_eq!(precision_at_1(&r, &gold(&["a"])).unwrap(), 1.0);
        assert_eq!(precision_at_1(&r, &gold(&["b"])).unwrap(), 0.0);
        assert!(matches!(
            precision_at_1(&r, &gold(&[])),
            Err(Error::EmptyGold(_))
        ));
    }

    #[test]
    fn map_skips_questions_without_gold() {
        let mut r1 = ranked(&["a", "b"]);
        r1.question_id = "q1".into();
        let mut r2 = ranked(&["a", "b"]);
        r2.question_id = "q2".into();
        let mut g = GoldSet::new();
        g.insert("q1".into(), gold(&["b"]));
        let rep = evaluate(&[r1.clone(), r2.clone()], &g, Metric::Map).unwrap();
        assert_eq!((rep.n_evaluated, rep.n_skipped), (1, 1));
        assert_eq!(rep.value, 0.5);
        assert!(matches!(
            evaluate(&[r1.clone(), r2], &g, Metric::P1),
            Err(Error::EmptyGold(_))
        ));
        g.insert("q3".into(), gold(&["a"]));
        assert!(matches!(
            evaluate(&[r1], &g, Metric::Map),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn gold_file_parsing() {
        let g = read_gold("q1\ta\nq1\tb\n\nq2\tc\n".as_bytes()).unwrap();
        assert_eq!(g["q1"], gold(&["a", "b"]));
        assert!(read_gold("q1 a\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_gold(&mut buf, &g).unwrap();
        assert_eq!(read_gold(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn bootstrap_edges() {
        let a = [0.9, 0.8, 1.0, 0.5];
        let b = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(bootstrap_significance(&a, &b, 1000, 1).unwrap(), 0.0);
        assert_eq!(bootstrap_significance(&a, &a, 1000, 1).unwrap(), 1.0);
        assert_eq!(bootstrap_significance(&b, &a, 1000, 1).unwrap(), 1.0);
        assert!(matches!(
            bootstrap_significance(&a, &b[..2], 10, 1),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(bootstrap_significance(&[], &[], 10, 1).is_err());
        assert!(bootstrap_significance(&a, &b, 0, 1).is_err());
    }

    #[test]
    fn bootstrap_deterministic_across_modes() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let b: Vec<f64> = (0..50).map(|i| ((i * 53) % 13) as f64 / 12.0).collect();
        let p1 = bootstrap_significance_with(Execution::Sequential, &a, &b, 2000, 42).unwrap();
        let p2 = bootstrap_significance_with(Execution::Parallel, &a, &b, 2000, 42).unwrap();
        assert_eq!(p1, p2);
        assert!(p1 > 0.0 && p1 < 1.0);
        let p3 = bootstrap_significance_with(Execution::Sequential, &a, &b, 2000, 43).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn bootstrap_invariant_to_question_order() {
        let a: Vec<f64> = (0..40).map(|i| ((i * 7) % 5) as f64 / 4.0).collect();
        let b: Vec<f64> = (0..40).map(|i| ((i * 3) % 4) as f64 / 3.0).collect();
        let mut idx: Vec<usize> = (0..40).collect();
        idx.reverse();
        idx.rotate_left(13);
        let a2: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let b2: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let p = bootstrap_significance(&a, &b, 20_000, 5).unwrap();
        let p2 = bootstrap_significance(&a2, &b2, 20_000, 5).unwrap();
        assert!((p - p2).abs() < 0.02, "{p} vs {p2}");
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("MAP".parse::<Metric>().unwrap(), Metric::Map);
        assert_eq!("p@1".parse::<Metric>().unwrap(), Metric::P1);
        assert!("ndcg".parse::<Metric>().is_err());
    }
}

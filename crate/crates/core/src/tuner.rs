//! Exhaustive grid search over `(K+, K-, lambda, N)` on a development split.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alignment_scorer::{AlignmentConfig, Variant};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, gold_from_instances, Metric};
use crate::par::{self, Execution};
use crate::qa_pipelines::{Pipeline, QAInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub k_pos: Vec<usize>,
    pub k_neg: Vec<usize>,
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_n", alias = "n")]
    pub n_justifications: Vec<usize>,
    pub metric: Metric,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0]
}

fn default_n() -> Vec<usize> {
    vec![5]
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let g: GridSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        fn ascending<T: PartialOrd>(name: &str, xs: &[T]) -> Result<()> {
            if xs.is_empty() {
                return Err(Error::Config(format!("grid list `{name}` is empty")));
            }
            if xs
                .windows(2)
                .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
            {
                return Err(Error::Config(format!(
                    "grid list `{name}` must be strictly ascending"
                )));
            }
            Ok(())
        }
        ascending("k_pos", &self.k_pos)?;
        ascending("k_neg", &self.k_neg)?;
        ascending("lambda", &self.lambda)?;
        ascending("n_justifications", &self.n_justifications)?;
        if self.k_pos[0] == 0 {
            return Err(Error::Config("k_pos values must be at least 1".into()));
        }
        if self.n_justifications[0] == 0 {
            return Err(Error::Config(
                "n_justifications values must be at least 1".into(),
            ));
        }
        if self.lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("lambda values must be finite".into()));
        }
        Ok(())
    }

    /// Cells in lexicographic `(K+, K-, lambda, N)` order. `K- = 0` cells
    /// carry a single `lambda = 0` since lambda cannot affect them.
    pub fn cells(&self) -> Vec<AlignmentConfig> {
        let mut out = Vec::new();
        for &k_pos in &self.k_pos {
            for &k_neg in &self.k_neg {
                let lambdas: &[f64] = if k_neg == 0 { &[0.0] } else { &self.lambda };
                for &lambda in lambdas {
                    for &n in &self.n_justifications {
                        out.push(AlignmentConfig {
                            k_pos,
                            k_neg,
                            lambda,
                            variant: Variant::Full,
                            n_justifications: n,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub config: AlignmentConfig,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub best: AlignmentConfig,
    pub best_score: f64,
    pub metric: Metric,
    pub table: Vec<GridCell>,
}

/// Dev-set score of one configuration.
pub fn evaluate_config(
    dev: &[QAInstance],
    pipeline: &Pipeline<'_>,
    cfg: &AlignmentConfig,
    metric: Metric,
    exec: Execution,
) -> Result<f64> {
    let runs = crate::qa_pipelines::rank_all(exec, dev, pipeline, cfg);
    Ok(evaluate(&runs, &gold_from_instances(dev), metric)?.value)
}

/// Evaluates every grid cell and returns the best; equal scores go to the
/// lexicographically smallest `(K+, K-, lambda, N)`.
pub fn grid_search(
    dev: &[QAInstance],
    grid: &GridSpec,
    pipeline: &Pipeline<'_>,
    exec: Execution,
) -> Result<TuneResult> {
    if dev.is_empty() {
        return Err(Error::NoQuestions);
    }
    grid.validate()?;
    let cells = grid.cells();
    // Cells run in parallel; instances within a cell run sequentially.
    let scores = par::map(exec, &cells, |cfg| {
        evaluate_config(dev, pipeline, cfg, grid.metric, Execution::Sequential)
    });
    let mut table = Vec::with_capacity(cells.len());
    for (config, score) in cells.into_iter().zip(scores) {
        table.push(GridCell {
            config,
            score: score?,
        });
    }
    let best = table
        .iter()
        .fold(None::<&GridCell>, |best, c| match best {
            Some(b) if b.score >= c.score => Some(b),
            _ => Some(c),
        })
        .expect("grid has at least one cell");
    Ok(TuneResult {
        best: best.config,
        best_score: best.score,
        metric: grid.metric,
        table,
    })
}

/// `k_pos,k_neg,lambda,n_justifications,score` with a header row.
pub fn write_table_csv<W: Write>(mut w: W, table: &[GridCell]) -> std::io::Result<()> {
    writeln!(w, "k_pos,k_neg,lambda,n_justifications,score")?;
    for c in table {
        writeln!(
            w,
            "{},{},{},{},{:.6}",
            c.config.k_pos, c.config.k_neg, c.config.lambda, c.config.n_justifications, c.score
        )?;
    }
    w.flush()
}

//! Run configuration: a TOML file whose values command-line flags override.

use std::path::{Path, PathBuf};

use alignqa::alignment_scorer::{AlignmentConfig, Variant};
use alignqa::datasets::{DatasetFormat, DatasetSpec};
use alignqa::ir_engine::{Bm25Idf, Bm25Params};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

use crate::args::{PipelineKind, RunArgs};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub embeddings: Option<PathBuf>,
    pub dim: Option<usize>,
    pub cache: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub pipeline: Option<PipelineKind>,
    pub clamp_idf: Option<bool>,
    pub dataset: Option<DatasetSection>,
    pub kb: Option<KbSection>,
    pub alignment: Option<AlignmentSection>,
    pub bm25: Option<Bm25Section>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub format: Option<DatasetFormat>,
    pub path: Option<PathBuf>,
    pub split: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbSection {
    pub path: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentSection {
    pub k_pos: Option<usize>,
    pub k_neg: Option<usize>,
    pub lambda: Option<f64>,
    pub variant: Option<Variant>,
    pub n_justifications: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub idf: Option<Bm25Idf>,
}

impl FileConfig {
    /// Parses `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut cfg.embeddings);
        fix(&mut cfg.cache);
        fix(&mut cfg.stoplist);
        fix(&mut cfg.lemmas);
        if let Some(d) = &mut cfg.dataset {
            fix(&mut d.path);
        }
        if let Some(k) = &mut cfg.kb {
            fix(&mut k.path);
            fix(&mut k.index);
        }
        Ok(cfg)
    }
}

/// Fully resolved settings shared by `rank` and `tune`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub embeddings: Option<PathBuf>,
    pub dim: Option<usize>,
    pub cache: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub kb_path: Option<PathBuf>,
    pub index_path: Option<PathBuf>,
    pub pipeline: PipelineKind,
    pub alignment: AlignmentConfig,
    pub bm25: Bm25Params,
    pub clamp_idf: bool,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let ds = file.dataset.unwrap_or_default();
        let kb = file.kb.unwrap_or_default();
        let al = file.alignment.unwrap_or_default();
        let bm = file.bm25.unwrap_or_default();

        let dataset_path = args
            .dataset
            .clone()
            .or(ds.path)
            .context("no dataset given (--dataset or [dataset].path)")?;
        let format = match args.format.or(ds.format) {
            Some(f) => f,
            None => guess_format(&dataset_path)?,
        };
        let defaults = AlignmentConfig::default();
        let alignment = AlignmentConfig {
            k_pos: args.k_pos.or(al.k_pos).unwrap_or(defaults.k_pos),
            k_neg: args.k_neg.or(al.k_neg).unwrap_or(defaults.k_neg),
            lambda: args.lambda.or(al.lambda).unwrap_or(defaults.lambda),
            variant: args.variant.or(al.variant).unwrap_or(defaults.variant),
            n_justifications: args
                .n_justifications
                .or(al.n_justifications)
                .unwrap_or(defaults.n_justifications),
        };
        let bm25_defaults = Bm25Params::default();
        let cfg = RunConfig {
            embeddings: args.embeddings.clone().or(file.embeddings),
            dim: args.dim.or(file.dim),
            cache: args.cache.clone().or(file.cache),
            stoplist: args.stoplist.clone().or(file.stoplist),
            lemmas: args.lemmas.clone().or(file.lemmas),
            dataset: DatasetSpec {
                format,
                path: dataset_path,
                split: ds.split,
            },
            kb_path: args.kb.clone().or(kb.path),
            index_path: args.index.clone().or(kb.index),
            pipeline: args
                .pipeline
                .or(file.pipeline)
                .unwrap_or(PipelineKind::Direct),
            alignment,
            bm25: Bm25Params {
                k1: args.k1.or(bm.k1).unwrap_or(bm25_defaults.k1),
                b: args.b.or(bm.b).unwrap_or(bm25_defaults.b),
                idf: args.bm25_idf.or(bm.idf).unwrap_or(bm25_defaults.idf),
            },
            clamp_idf: args.clamp_idf || file.clamp_idf.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cheap checks run before anything large is loaded.
    pub fn validate(&self) -> Result<()> {
        for w in self.alignment.validate()? {
            log::warn!("{w}");
        }
        if self.dataset.format == DatasetFormat::KbLines {
            bail!("dataset format kb_lines is a knowledge base, not a question set");
        }
        let needs_kb = matches!(self.pipeline, PipelineKind::Kb | PipelineKind::Ai2);
        let has_kb = self.kb_path.is_some() || self.index_path.is_some();
        if needs_kb && !has_kb {
            bail!(
                "pipeline {} needs a knowledge base (--kb or --index)",
                self.pipeline
            );
        }
        if !needs_kb && has_kb {
            bail!(
                "pipeline {} does not use a knowledge base; drop --kb/--index",
                self.pipeline
            );
        }
        let needs_vectors = matches!(self.pipeline, PipelineKind::Direct | PipelineKind::Kb);
        match &self.embeddings {
            Some(p) if needs_vectors && !p.is_file() => {
                bail!("embedding file {} not found", p.display())
            }
            None if needs_vectors => bail!("pipeline {} needs --embeddings", self.pipeline),
            _ => {}
        }
        if !self.dataset.path.is_file() {
            bail!("dataset {} not found", self.dataset.path.display());
        }
        for p in [&self.kb_path, &self.stoplist, &self.lemmas]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                bail!("{} not found", p.display());
            }
        }
        if let Some(p) = &self.index_path {
            if self.kb_path.is_none() && !p.is_file() {
                bail!("index {} not found", p.display());
            }
        }
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            bail!("BM25 needs k1 >= 0 and 0 <= b <= 1");
        }
        Ok(())
    }
}

fn guess_format(path: &Path) -> Result<DatasetFormat> {
    let name = path.to_string_lossy();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    if name.ends_with(".tsv") {
        Ok(DatasetFormat::WikiqaTsv)
    } else if name.ends_with(".jsonl") {
        Ok(DatasetFormat::McJsonl)
    } else {
        bail!(
            "cannot infer dataset format of {}; pass --format",
            path.display()
        )
    }
}

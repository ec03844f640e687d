//! In-process composition of the subcommands. Work fans out per query on a
//! rayon pool; results are always collected in input order.

use std::collections::{BTreeSet, HashMap};

use qnms_core::data::{lookup_words, EmbeddingTable, QueryRecord};
use qnms_core::dataset::{self, GtSource};
use qnms_core::evaluation::{self, EvalQuery, PipelineConfig, RecallReport, Relatedness};
use qnms_core::pseudo_gt::{self, ForegroundSet};
use qnms_core::training::TrainSample;
use qnms_core::Detection;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{
    self, ContextualLine, FilteredDetection, FilteredRecord, ForegroundRecord, ImageAnnotations, ImageDetections,
    TargetLine,
};

/// Everything read from the input files.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<ImageDetections>,
    pub queries: Vec<QueryRecord>,
    pub embeddings: Option<EmbeddingTable>,
    pub annotations: HashMap<String, ImageAnnotations>,
    pub lexicon: BTreeSet<String>,
    by_image: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        images: Vec<ImageDetections>,
        queries: Vec<QueryRecord>,
        embeddings: Option<EmbeddingTable>,
        annotations: HashMap<String, ImageAnnotations>,
        lexicon: BTreeSet<String>,
    ) -> Self {
        let by_image = images
            .iter()
            .enumerate()
            .map(|(i, img)| (img.image_id.clone(), i))
            .collect();
        Self {
            images,
            queries,
            embeddings,
            annotations,
            lexicon,
            by_image,
        }
    }

    /// Loads the files named in `cfg`. Detections and queries are always
    /// required; the rest only when `need_embeddings` or when configured.
    pub fn load(cfg: &RunConfig, need_embeddings: bool) -> Result<Self> {
        let images = io::load_detections(cfg.require("detections", &cfg.detections)?)?;
        let queries = io::load_queries(cfg.require("queries", &cfg.queries)?, cfg.max_tokens)?;
        let embeddings = if need_embeddings {
            Some(io::load_embeddings(cfg.require("embeddings", &cfg.embeddings)?)?)
        } else {
            cfg.optional("embeddings", &cfg.embeddings)?
                .map(io::load_embeddings)
                .transpose()?
        };
        let annotations = match cfg.optional("annotations", &cfg.annotations)? {
            Some(p) => io::load_annotations(p)?,
            None => HashMap::new(),
        };
        let lexicon = match cfg.optional("lexicon", &cfg.lexicon)? {
            Some(p) => io::load_lexicon(p)?,
            None => BTreeSet::new(),
        };
        Ok(Self::new(images, queries, embeddings, annotations, lexicon))
    }

    pub fn detections(&self, image_id: &str) -> &[Detection] {
        self.by_image
            .get(image_id)
            .map_or(&[][..], |&i| &self.images[i].detections)
    }

    /// Feature dimension of the detections, if there are any.
    pub fn visual_dim(&self) -> Option<usize> {
        self.images
            .iter()
            .flat_map(|img| img.detections.first())
            .map(Detection::feature_dim)
            .next()
    }

    pub fn embeddings(&self) -> Result<&EmbeddingTable> {
        self.embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("missing --embeddings".into()))
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Foreground set and prefiltered targets for every query.
pub fn gen_gt(ds: &Dataset, cfg: &RunConfig) -> Result<Vec<ForegroundRecord>> {
    let source = cfg.gt_source()?;
    let table = match source {
        GtSource::TextSimilarity => Some(ds.embeddings()?),
        GtSource::Wspg => None,
    };
    ds.queries
        .par_iter()
        .map(|q| {
            let anns = ds
                .annotations
                .get(&q.image_id)
                .map(|a| a.for_query(&q.query_id))
                .unwrap_or_default();
            let (fg, nouns) = match table {
                Some(t) => (
                    dataset::build_foreground(q, &anns, t, &ds.lexicon, cfg.gamma, source),
                    pseudo_gt::extract_nouns(&q.tokens, &ds.lexicon),
                ),
                None => (ForegroundSet::from_import(q.referent, &anns), Vec::new()),
            };
            let dets = ds.detections(&q.image_id);
            let (selection, targets) = dataset::prefiltered_targets(dets, &fg, cfg.delta);
            Ok(ForegroundRecord {
                query_id: q.query_id.clone(),
                image_id: q.image_id.clone(),
                source: source.as_str().into(),
                gamma: cfg.gamma,
                delta: cfg.delta,
                nouns,
                referent: fg.referent.map(|b| b.to_array()),
                contextual: fg
                    .contextual
                    .iter()
                    .map(|c| ContextualLine {
                        bbox: c.bbox.to_array(),
                        label: c.label.clone(),
                        provenance: c.provenance.as_str().into(),
                    })
                    .collect(),
                targets: selection
                    .iter()
                    .zip(&targets)
                    .map(|(&det_index, t)| TargetLine {
                        det_index,
                        rho: t.rho,
                        label: t.label,
                        q: t.q_value,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Foreground records from `cfg.foreground` if given, else computed.
pub fn foreground(ds: &Dataset, cfg: &RunConfig) -> Result<Vec<ForegroundRecord>> {
    match cfg.optional("foreground", &cfg.foreground)? {
        Some(p) => io::load_foreground(p),
        None => gen_gt(ds, cfg),
    }
}

fn records_by_query(records: &[ForegroundRecord]) -> HashMap<&str, &ForegroundRecord> {
    records.iter().map(|r| (r.query_id.as_str(), r)).collect()
}

/// One training sample per query with a foreground record, in query order.
pub fn train_samples(ds: &Dataset, records: &[ForegroundRecord], visual_dim: usize) -> Result<Vec<TrainSample>> {
    let table = ds.embeddings()?;
    let by_query = records_by_query(records);
    ds.queries
        .par_iter()
        .filter_map(|q| by_query.get(q.query_id.as_str()).map(|r| (q, *r)))
        .map(|(q, rec)| {
            let dets = ds.detections(&q.image_id);
            let (selection, targets) = rec.selection_and_targets();
            if let Some(&bad) = selection.iter().find(|&&i| i >= dets.len()) {
                return Err(Error::Config(format!(
                    "foreground record {} refers to detection {bad} of {} in image {}",
                    q.query_id,
                    dets.len(),
                    q.image_id
                )));
            }
            Ok(dataset::train_sample(
                dets, &selection, targets, &q.tokens, table, visual_dim,
            )?)
        })
        .collect()
}

/// Evaluation queries; contextual boxes come from the foreground records.
pub fn eval_queries(ds: &Dataset, records: Option<&[ForegroundRecord]>, word_dim: usize) -> Result<Vec<EvalQuery>> {
    let by_query = records.map(records_by_query).unwrap_or_default();
    ds.queries
        .par_iter()
        .map(|q| {
            let fg = match by_query.get(q.query_id.as_str()) {
                Some(r) => r.foreground()?,
                None => ForegroundSet {
                    referent: q.referent,
                    contextual: Vec::new(),
                },
            };
            let words = match &ds.embeddings {
                Some(t) => lookup_words(&q.tokens, t),
                None => qnms_core::Matrix::zeros(q.tokens.len(), word_dim),
            };
            Ok(EvalQuery {
                query_id: q.query_id.clone(),
                detections: ds.detections(&q.image_id).to_vec(),
                words,
                referent: fg.referent,
                contextual: fg.contextual_boxes(),
            })
        })
        .collect()
}

/// Filters every query; `relatedness: None` is the baseline.
pub fn filter_all(
    ds: &Dataset,
    queries: &[EvalQuery],
    relatedness: Option<&(dyn Relatedness + Sync)>,
    pipeline: &PipelineConfig,
    top_n: Option<usize>,
) -> Result<Vec<FilteredRecord>> {
    let method = match relatedness {
        None => evaluation::Method::Baseline,
        Some(_) => evaluation::Method::QueryAware,
    };
    ds.queries
        .par_iter()
        .zip(queries)
        .map(|(q, eq)| {
            let kept = match relatedness {
                None => evaluation::filter_query(eq, None, pipeline)?,
                Some(r) => evaluation::filter_query(eq, Some(r as &dyn Relatedness), pipeline)?,
            };
            let kept = qnms_core::suppression::top_n(&kept, top_n.unwrap_or(usize::MAX));
            Ok(FilteredRecord {
                query_id: q.query_id.clone(),
                image_id: q.image_id.clone(),
                method: method.as_str().into(),
                detections: kept
                    .iter()
                    .map(|s| FilteredDetection {
                        det_index: s.index,
                        bbox: s.detection.bbox.to_array(),
                        label: s.detection.label.clone(),
                        c: s.detection.confidence,
                        r: s.relatedness,
                        s: s.fused,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Recall report for the baseline and, when given, the fused pipeline.
pub fn evaluate(
    queries: &[EvalQuery],
    relatedness: Option<&(dyn Relatedness + Sync)>,
    cfg: &RunConfig,
    include_baseline: bool,
) -> Result<RecallReport> {
    let pipeline = cfg.pipeline();
    let averaging = cfg.averaging()?;
    let rank = |r: Option<&(dyn Relatedness + Sync)>| -> Result<Vec<_>> {
        queries
            .par_iter()
            .map(|q| {
                let kept = match r {
                    None => evaluation::filter_query(q, None, &pipeline)?,
                    Some(r) => evaluation::filter_query(q, Some(r as &dyn Relatedness), &pipeline)?,
                };
                Ok(evaluation::ranked_boxes(&kept))
            })
            .collect()
    };
    let baseline = rank(None)?;
    let qa = relatedness.map(|r| rank(Some(r))).transpose()?;
    let mut report = evaluation::report_from_rankings(queries, &baseline, qa.as_deref(), &cfg.budgets, averaging);
    if !include_baseline {
        report.rows.retain(|r| r.method != evaluation::Method::Baseline);
    }
    Ok(report)
}

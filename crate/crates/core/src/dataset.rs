//! Assembly of training samples and evaluation queries from raw records.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{feature_matrix, lookup_words, Detection, EmbeddingTable, QueryRecord};
use crate::error::Result;
use crate::evaluation::EvalQuery;
use crate::pseudo_gt::{self, Annotation, BoxTarget, ForegroundSet};
use crate::suppression;
use crate::training::TrainSample;

/// Where contextual boxes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GtSource {
    /// Query nouns matched against annotation labels by embedding cosine.
    #[default]
    TextSimilarity,
    /// Annotations are externally grounded phrases, taken verbatim.
    Wspg,
}

impl GtSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GtSource::TextSimilarity => "text_sim",
            GtSource::Wspg => "wspg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text_sim" | "text-sim" => Some(GtSource::TextSimilarity),
            "wspg" => Some(GtSource::Wspg),
            _ => None,
        }
    }
}

/// Foreground set of `query` given the annotations of its image.
pub fn build_foreground(
    query: &QueryRecord,
    annotations: &[Annotation],
    table: &EmbeddingTable,
    lexicon: &BTreeSet<String>,
    gamma: f64,
    source: GtSource,
) -> ForegroundSet {
    match source {
        GtSource::TextSimilarity => {
            let nouns = pseudo_gt::extract_nouns(&query.tokens, lexicon);
            let matched = pseudo_gt::match_contextual(&nouns, annotations, table, gamma);
            ForegroundSet::from_text_similarity(query.referent, matched)
        }
        GtSource::Wspg => ForegroundSet::from_import(query.referent, annotations),
    }
}

/// Indices of detections passing the pre-filter and their targets.
pub fn prefiltered_targets(dets: &[Detection], fg: &ForegroundSet, delta: f64) -> (Vec<usize>, Vec<BoxTarget>) {
    let selection = suppression::prefilter(dets, delta);
    let targets = pseudo_gt::assign_targets(selection.iter().map(|&i| &dets[i].bbox), fg);
    (selection, targets)
}

/// Training sample over the detections listed in `selection`.
pub fn train_sample(
    dets: &[Detection],
    selection: &[usize],
    targets: Vec<BoxTarget>,
    tokens: &[String],
    table: &EmbeddingTable,
    visual_dim: usize,
) -> Result<TrainSample> {
    Ok(TrainSample {
        visual: feature_matrix(visual_dim, selection.iter().map(|&i| &dets[i]))?,
        words: lookup_words(tokens, table),
        targets,
    })
}

pub fn eval_query(query: &QueryRecord, dets: Vec<Detection>, table: &EmbeddingTable, fg: &ForegroundSet) -> EvalQuery {
    EvalQuery {
        query_id: query.query_id.clone(),
        detections: dets,
        words: lookup_words(&query.tokens, table),
        referent: query.referent,
        contextual: fg.contextual_boxes(),
    }
}

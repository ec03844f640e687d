//! Recall of critical objects under a proposal budget, top-1 hit rate and
//! Pr@X, plus a harness comparing confidence-only NMS against fused-score NMS.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{feature_matrix, Detection};
use crate::error::Result;
use crate::geometry::BBox;
use crate::linalg::Matrix;
use crate::params::ScorerParams;
use crate::scorer;
use crate::suppression::{self, NmsOptions, ScoredDetection};

/// A proposal covers a target when their IoU is strictly above this.
pub const HIT_IOU: f64 = 0.5;

/// Default budgets reported by [`compare`]; 10 stands in for the small
/// proposal counts second-stage matchers consume.
pub const DEFAULT_BUDGETS: [usize; 6] = [1, 5, 10, 20, 50, 100];

/// Whether any of the first `n` proposals has IoU > 0.5 with `target`.
pub fn covered(proposals: &[BBox], target: &BBox, n: usize) -> bool {
    suppression::top_n(proposals, n).iter().any(|p| p.iou(target) > HIT_IOU)
}

/// Fraction of queries whose referent is covered by their top-`n` proposals.
/// Returns 0 for an empty query list.
pub fn referent_recall(proposals: &[Vec<BBox>], referents: &[BBox], n: usize) -> f64 {
    debug_assert_eq!(proposals.len(), referents.len());
    if referents.is_empty() {
        return 0.0;
    }
    let hits = proposals
        .iter()
        .zip(referents)
        .filter(|(p, r)| covered(p, r, n))
        .count();
    hits as f64 / referents.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Over all (query, contextual box) pairs.
    #[default]
    Micro,
    /// Per-query coverage fraction, averaged over queries with at least one box.
    Macro,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Micro => "micro",
            Averaging::Macro => "macro",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "micro" => Some(Averaging::Micro),
            "macro" => Some(Averaging::Macro),
            _ => None,
        }
    }
}

/// Recall of contextual boxes; `None` when no query has any.
pub fn contextual_recall(
    proposals: &[Vec<BBox>],
    contextual: &[Vec<BBox>],
    n: usize,
    averaging: Averaging,
) -> Option<f64> {
    debug_assert_eq!(proposals.len(), contextual.len());
    let mut hits = 0usize;
    let mut pairs = 0usize;
    let mut per_query = 0.0;
    let mut queries = 0usize;
    for (p, ctx) in proposals.iter().zip(contextual) {
        if ctx.is_empty() {
            continue;
        }
        let h = ctx.iter().filter(|c| covered(p, c, n)).count();
        hits += h;
        pairs += ctx.len();
        per_query += h as f64 / ctx.len() as f64;
        queries += 1;
    }
    if pairs == 0 {
        return None;
    }
    Some(match averaging {
        Averaging::Micro => hits as f64 / pairs as f64,
        Averaging::Macro => per_query / queries as f64,
    })
}

/// Fraction of predictions with IoU > 0.5 against their referent.
pub fn top1_hit(predictions: &[BBox], referents: &[BBox]) -> f64 {
    debug_assert_eq!(predictions.len(), referents.len());
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(referents)
        .filter(|(p, r)| p.iou(r) > HIT_IOU)
        .count();
    hits as f64 / predictions.len() as f64
}

/// For each threshold `x`, the fraction of IoUs strictly above `x`.
pub fn pr_at_x(ious: &[f64], thresholds: &[f64]) -> Vec<(f64, f64)> {
    thresholds
        .iter()
        .map(|&x| {
            let frac = if ious.is_empty() {
                0.0
            } else {
                ious.iter().filter(|&&v| v > x).count() as f64 / ious.len() as f64
            };
            (x, frac)
        })
        .collect()
}

/// One query against one image, ready for filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub query_id: String,
    pub detections: Vec<Detection>,
    /// `|Q| x q` word features.
    pub words: Matrix,
    pub referent: Option<BBox>,
    pub contextual: Vec<BBox>,
}

/// Source of per-box relatedness for the fused criterion.
pub trait Relatedness {
    /// Scores for `query.detections[selection[k]]`, in selection order.
    fn relatedness(&self, query: &EvalQuery, selection: &[usize]) -> Result<Vec<f64>>;
}

impl Relatedness for ScorerParams {
    fn relatedness(&self, query: &EvalQuery, selection: &[usize]) -> Result<Vec<f64>> {
        let visual = feature_matrix(self.visual_dim(), selection.iter().map(|&i| &query.detections[i]))?;
        scorer::score(self, &visual, &query.words)
    }
}

/// The same relatedness for every box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform(pub f64);

impl Relatedness for Uniform {
    fn relatedness(&self, _: &EvalQuery, selection: &[usize]) -> Result<Vec<f64>> {
        Ok(alloc::vec![self.0; selection.len()])
    }
}

/// Multiplies another source by a constant. Positive factors leave the
/// fused ranking unchanged.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<'a, R: ?Sized>(pub &'a R, pub f64);

impl<R: Relatedness + ?Sized> Relatedness for Scaled<'_, R> {
    fn relatedness(&self, query: &EvalQuery, selection: &[usize]) -> Result<Vec<f64>> {
        let mut r = self.0.relatedness(query, selection)?;
        r.iter_mut().for_each(|v| *v *= self.1);
        Ok(r)
    }
}

/// 1 for boxes with IoU > 0.5 against the query's referent or contextual
/// boxes, `epsilon` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForegroundOracle {
    pub epsilon: f64,
}

impl Relatedness for ForegroundOracle {
    fn relatedness(&self, query: &EvalQuery, selection: &[usize]) -> Result<Vec<f64>> {
        Ok(selection
            .iter()
            .map(|&i| {
                let b = &query.detections[i].bbox;
                let hit = query
                    .referent
                    .iter()
                    .chain(&query.contextual)
                    .any(|f| b.iou(f) > HIT_IOU);
                if hit {
                    1.0
                } else {
                    self.epsilon
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Confidence pre-filter threshold.
    pub delta: f64,
    pub nms: NmsOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            delta: suppression::DEFAULT_DELTA,
            nms: NmsOptions::default(),
        }
    }
}

/// Pre-filter, score, fuse and suppress. `relatedness: None` is the
/// confidence-only baseline. Output is in NMS order.
pub fn filter_query<'a>(
    query: &'a EvalQuery,
    relatedness: Option<&(dyn Relatedness + 'a)>,
    config: &PipelineConfig,
) -> Result<Vec<ScoredDetection<'a>>> {
    let selection = suppression::prefilter(&query.detections, config.delta);
    let scored = match relatedness {
        None => suppression::fuse_baseline(&query.detections, &selection),
        Some(source) => {
            let r = source.relatedness(query, &selection)?;
            suppression::fuse(&query.detections, &selection, &r)?
        }
    };
    Ok(suppression::greedy_nms_with(&scored, &config.nms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Baseline,
    QueryAware,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::QueryAware => "query_aware",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallRow {
    pub method: Method,
    pub budget: usize,
    /// `None` when no query has a referent.
    pub referent_recall: Option<f64>,
    /// `None` when no query has contextual boxes.
    pub contextual_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub rows: Vec<RecallRow>,
    pub queries: usize,
    pub referent_queries: usize,
    pub contextual_boxes: usize,
    pub averaging: Averaging,
}

impl RecallReport {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &RecallRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn get(&self, method: Method, budget: usize) -> Option<&RecallRow> {
        self.rows.iter().find(|r| r.method == method && r.budget == budget)
    }
}

/// Recall rows for one method given each query's ranked proposal boxes.
pub fn summarize(
    method: Method,
    ranked: &[Vec<BBox>],
    queries: &[EvalQuery],
    budgets: &[usize],
    averaging: Averaging,
) -> Vec<RecallRow> {
    let with_ref: Vec<(Vec<BBox>, BBox)> = ranked
        .iter()
        .zip(queries)
        .filter_map(|(p, q)| q.referent.map(|r| (p.clone(), r)))
        .collect();
    let (ref_props, referents): (Vec<Vec<BBox>>, Vec<BBox>) = with_ref.into_iter().unzip();
    let contextual: Vec<Vec<BBox>> = queries.iter().map(|q| q.contextual.clone()).collect();
    budgets
        .iter()
        .map(|&n| RecallRow {
            method,
            budget: n,
            referent_recall: (!referents.is_empty()).then(|| referent_recall(&ref_props, &referents, n)),
            contextual_recall: contextual_recall(ranked, &contextual, n, averaging),
        })
        .collect()
}

/// Assembles a report from per-query rankings of both methods.
pub fn report_from_rankings(
    queries: &[EvalQuery],
    baseline: &[Vec<BBox>],
    query_aware: Option<&[Vec<BBox>]>,
    budgets: &[usize],
    averaging: Averaging,
) -> RecallReport {
    let mut rows = summarize(Method::Baseline, baseline, queries, budgets, averaging);
    if let Some(qa) = query_aware {
        rows.extend(summarize(Method::QueryAware, qa, queries, budgets, averaging));
    }
    RecallReport {
        rows,
        queries: queries.len(),
        referent_queries: queries.iter().filter(|q| q.referent.is_some()).count(),
        contextual_boxes: queries.iter().map(|q| q.contextual.len()).sum(),
        averaging,
    }
}

pub fn ranked_boxes(kept: &[ScoredDetection<'_>]) -> Vec<BBox> {
    kept.iter().map(|s| s.detection.bbox).collect()
}

/// Runs the confidence-only baseline and, when given, the fused-score
/// pipeline over every query, and reports recall at each budget.
pub fn compare(
    queries: &[EvalQuery],
    query_aware: Option<&dyn Relatedness>,
    budgets: &[usize],
    config: &PipelineConfig,
    averaging: Averaging,
) -> Result<RecallReport> {
    let baseline = queries
        .iter()
        .map(|q| filter_query(q, None, config).map(|k| ranked_boxes(&k)))
        .collect::<Result<Vec<_>>>()?;
    let qa = match query_aware {
        None => None,
        Some(src) => Some(
            queries
                .iter()
                .map(|q| filter_query(q, Some(src), config).map(|k| ranked_boxes(&k)))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(report_from_rankings(
        queries,
        &baseline,
        qa.as_deref(),
        budgets,
        averaging,
    ))
}

//! Timing of scoring + suppression for one query.

use std::time::Instant;

use qnms_core::evaluation::{self, EvalQuery, PipelineConfig};
use qnms_core::synthetic;
use qnms_core::ScorerParams;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub boxes: usize,
    pub words: usize,
    pub visual_dim: usize,
    pub word_dim: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            boxes: 300,
            words: 10,
            visual_dim: 64,
            word_dim: 32,
            repeats: 21,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub kept: usize,
}

/// Times pre-filter, scoring, fusion and NMS (`delta = 0`, so every box
/// is scored) over `repeats` runs.
pub fn run(cfg: &BenchConfig, pipeline: &PipelineConfig) -> Result<BenchResult> {
    let query = EvalQuery {
        query_id: "bench".into(),
        detections: synthetic::random_detections(cfg.boxes, cfg.visual_dim, cfg.seed),
        words: synthetic::random_matrix(cfg.words, cfg.word_dim, -1.0, 1.0, cfg.seed),
        referent: None,
        contextual: Vec::new(),
    };
    let params = ScorerParams::init(cfg.visual_dim, cfg.word_dim, cfg.seed);
    let pipeline = PipelineConfig {
        delta: 0.0,
        ..*pipeline
    };
    let mut times = Vec::with_capacity(cfg.repeats.max(1));
    let mut kept = 0;
    for _ in 0..cfg.repeats.max(1) {
        let start = Instant::now();
        kept = evaluation::filter_query(&query, Some(&params), &pipeline)?.len();
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchResult {
        median_ms: times[times.len() / 2],
        min_ms: times[0],
        max_ms: times[times.len() - 1],
        kept,
    })
}

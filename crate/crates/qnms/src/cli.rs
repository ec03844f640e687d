//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qnms_core::evaluation::{Relatedness, Scaled};
use qnms_core::synthetic::{self, AdversarialConfig};
use qnms_core::ScorerParams;

use crate::bench::{self, BenchConfig};
use crate::config::{Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, AnnotationLine, ImageDetections};
use crate::pipeline::{self, Dataset};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "qnms",
    version,
    about = "Query-aware proposal filtering for grounding pipelines"
)]
pub struct Cli {
    /// Worker threads (0 = one per core). Output order never depends on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build foreground sets and per-detection targets.
    GenGt(GenGtArgs),
    /// Train the relatedness scorer.
    Train(TrainArgs),
    /// Suppress detections per query and write the survivors.
    Filter(FilterArgs),
    /// Recall of referent and contextual objects against proposal budget.
    Eval(EvalArgs),
    /// Time scoring + NMS on random boxes.
    Bench(BenchArgs),
    /// Write a synthetic dataset whose relevant objects have low confidence.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct GenGtArgs {
    #[command(flatten)]
    pub run: Overrides,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: Overrides,
    /// Parameter file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-epoch loss log (CSV).
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    /// Fail unless the final epoch loss is below this bound.
    #[arg(long)]
    pub max_final_loss: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub run: Overrides,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Confidence-only suppression (relatedness 1 everywhere).
    #[arg(long)]
    pub baseline: bool,
    /// Multiply relatedness by this factor before fusion (debugging).
    #[arg(long)]
    pub relatedness_scale: Option<f64>,
    /// Keep at most this many survivors per query.
    #[arg(long)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    Both,
    Baseline,
    QueryAware,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: Overrides,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMethod::Both)]
    pub method: EvalMethod,
    /// Value of the `split` column.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Also write recall-vs-N curves as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 300)]
    pub boxes: usize,
    #[arg(long, default_value_t = 10)]
    pub words: usize,
    #[arg(long, default_value_t = 64)]
    pub visual_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub word_dim: usize,
    #[arg(long, default_value_t = 21)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub nms_iou: f64,
    /// Fail (exit 1) if the median exceeds this many milliseconds.
    #[arg(long, default_value_t = 50.0)]
    pub max_ms: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for detections.jsonl, queries.jsonl, annotations.jsonl,
    /// embeddings.txt and noun_lexicon.txt.
    #[arg(long, short)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub images: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs a parsed command line. `Ok(false)` means the command ran but its
/// check failed (bench over budget, training loss above bound).
pub fn run(cli: Cli) -> Result<bool> {
    let threads = cli.threads;
    match cli.command {
        Command::GenGt(a) => pipeline::with_threads(threads, || gen_gt(a))?,
        Command::Train(a) => pipeline::with_threads(threads, || train(a))?,
        Command::Filter(a) => pipeline::with_threads(threads, || filter(a))?,
        Command::Eval(a) => pipeline::with_threads(threads, || eval(a))?,
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
    }
}

fn gen_gt(a: GenGtArgs) -> Result<bool> {
    let cfg = RunConfig::resolve(&a.run)?;
    let ds = Dataset::load(&cfg, cfg.gt_source()? == qnms_core::dataset::GtSource::TextSimilarity)?;
    let records = pipeline::gen_gt(&ds, &cfg)?;
    io::write_jsonl(&a.out, &records)?;
    eprintln!("wrote {} foreground records to {}", records.len(), a.out.display());
    Ok(true)
}

fn dims(ds: &Dataset) -> Result<(usize, usize)> {
    let v = ds
        .visual_dim()
        .ok_or(Error::Core(qnms_core::Error::EmptyInput("detections")))?;
    Ok((v, ds.embeddings()?.dim()))
}

fn train(a: TrainArgs) -> Result<bool> {
    let cfg = RunConfig::resolve(&a.run)?;
    let ds = Dataset::load(&cfg, true)?;
    let (v, q) = dims(&ds)?;
    let records = pipeline::foreground(&ds, &cfg)?;
    let samples = pipeline::train_samples(&ds, &records, v)?;
    let train_cfg = cfg.train_config()?;
    let init = match cfg.optional("params", &cfg.params)? {
        Some(p) => io::load_params_for(p, v, q)?,
        None => ScorerParams::init(v, q, train_cfg.seed),
    };
    let outcome = qnms_core::training::train_from(init, &samples, &train_cfg)?;
    io::save_params(&a.out, &outcome.params)?;
    if let Some(log) = &a.loss_log {
        report::write(log, &report::loss_csv(&outcome.history))?;
    }
    let last = outcome.history.last().map(|h| h.loss);
    match last {
        Some(l) => eprintln!(
            "trained {} epochs on {} samples, final loss {l}",
            train_cfg.epochs,
            samples.len()
        ),
        None => eprintln!("zero epochs: saved initial parameters"),
    }
    Ok(match (a.max_final_loss, last) {
        (Some(bound), Some(l)) => l < bound,
        _ => true,
    })
}

fn scorer(cfg: &RunConfig, ds: &Dataset) -> Result<ScorerParams> {
    let path = cfg.require("params", &cfg.params)?;
    let (v, q) = (ds.visual_dim(), ds.embeddings()?.dim());
    match v {
        Some(v) => io::load_params_for(path, v, q),
        None => io::load_params_for(path, io::load_params(path)?.visual_dim(), q),
    }
}

fn filter(a: FilterArgs) -> Result<bool> {
    let cfg = RunConfig::resolve(&a.run)?;
    let ds = Dataset::load(&cfg, !a.baseline)?;
    if let Some(k) = a.relatedness_scale.filter(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(Error::Config(format!("--relatedness-scale must be positive, got {k}")));
    }
    let params = if a.baseline { None } else { Some(scorer(&cfg, &ds)?) };
    let word_dim = params.as_ref().map_or(0, ScorerParams::word_dim);
    let queries = pipeline::eval_queries(&ds, None, word_dim)?;
    let scaled = params.as_ref().map(|p| Scaled(p, a.relatedness_scale.unwrap_or(1.0)));
    let source: Option<&(dyn Relatedness + Sync)> = match (&params, &scaled) {
        (Some(_), Some(s)) if a.relatedness_scale.is_some() => Some(s),
        (Some(p), _) => Some(p),
        _ => None,
    };
    let records = pipeline::filter_all(&ds, &queries, source, &cfg.pipeline(), a.top_n)?;
    io::write_jsonl(&a.out, &records)?;
    eprintln!("wrote {} filtered queries to {}", records.len(), a.out.display());
    Ok(true)
}

fn eval(a: EvalArgs) -> Result<bool> {
    let cfg = RunConfig::resolve(&a.run)?;
    let want_qa = a.method != EvalMethod::Baseline;
    if want_qa && cfg.params.is_none() {
        return Err(Error::Config("--params is required unless --method baseline".into()));
    }
    let needs_table = want_qa || (cfg.foreground.is_none() && cfg.annotations.is_some());
    let ds = Dataset::load(&cfg, needs_table)?;
    let records = match (&cfg.foreground, &cfg.annotations) {
        (None, None) => None,
        _ => Some(pipeline::foreground(&ds, &cfg)?),
    };
    let params = if want_qa { Some(scorer(&cfg, &ds)?) } else { None };
    let word_dim = params.as_ref().map_or(0, ScorerParams::word_dim);
    let queries = pipeline::eval_queries(&ds, records.as_deref(), word_dim)?;
    let source = params.as_ref().map(|p| p as &(dyn Relatedness + Sync));
    let report = pipeline::evaluate(&queries, source, &cfg, a.method != EvalMethod::QueryAware)?;
    report::write(&a.out, &report::recall_csv(&report, &a.split, &cfg.header()))?;
    if let Some(plot) = &a.plot {
        report::write(plot, &report::recall_svg(&report))?;
    }
    print!("{}", report::recall_csv(&report, &a.split, &[]));
    Ok(true)
}

fn bench(a: BenchArgs) -> Result<bool> {
    let cfg = BenchConfig {
        boxes: a.boxes,
        words: a.words,
        visual_dim: a.visual_dim,
        word_dim: a.word_dim,
        repeats: a.repeats,
        seed: a.seed,
    };
    let pipeline = qnms_core::evaluation::PipelineConfig {
        nms: qnms_core::suppression::NmsOptions {
            iou_threshold: a.nms_iou,
            class_aware: false,
        },
        ..Default::default()
    };
    let r = bench::run(&cfg, &pipeline)?;
    let ok = r.median_ms < a.max_ms;
    println!(
        "boxes={} words={} v={} q={} repeats={} median_ms={:.3} min_ms={:.3} max_ms={:.3} kept={} limit_ms={} {}",
        cfg.boxes,
        cfg.words,
        cfg.visual_dim,
        cfg.word_dim,
        cfg.repeats,
        r.median_ms,
        r.min_ms,
        r.max_ms,
        r.kept,
        a.max_ms,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(ok)
}

fn synth(a: SynthArgs) -> Result<bool> {
    let d = synthetic::adversarial(
        &AdversarialConfig {
            images: a.images,
            ..Default::default()
        },
        a.seed,
    );
    let dir = &a.out_dir;
    let images: Vec<ImageDetections> = d
        .images
        .iter()
        .map(|img| ImageDetections {
            image_id: img.image_id.clone(),
            detections: img.detections.clone(),
        })
        .collect();
    let annotations: Vec<AnnotationLine> = d
        .images
        .iter()
        .flat_map(|img| {
            img.annotations.iter().map(|an| AnnotationLine {
                image_id: img.image_id.clone(),
                bbox: an.bbox.to_array(),
                label: an.label.clone(),
                query_id: None,
            })
        })
        .collect();
    io::save_detections(&dir.join("detections.jsonl"), &images)?;
    io::save_queries(&dir.join("queries.jsonl"), &d.queries)?;
    io::save_annotations(&dir.join("annotations.jsonl"), &annotations)?;
    io::save_embeddings(&dir.join("embeddings.txt"), &d.embeddings)?;
    io::save_lexicon(&dir.join("noun_lexicon.txt"), &d.lexicon)?;
    eprintln!(
        "wrote {} images / {} queries to {}",
        images.len(),
        d.queries.len(),
        dir.display()
    );
    Ok(true)
}

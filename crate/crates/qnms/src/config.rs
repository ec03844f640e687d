//! Run configuration: file (TOML or JSON) first, then command-line overrides.

use std::path::{Path, PathBuf};

use qnms_core::dataset::GtSource;
use qnms_core::evaluation::{Averaging, PipelineConfig, DEFAULT_BUDGETS};
use qnms_core::params::ParamGroup;
use qnms_core::pseudo_gt::DEFAULT_GAMMA;
use qnms_core::suppression::{NmsOptions, DEFAULT_DELTA, DEFAULT_NMS_IOU};
use qnms_core::training::{LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub detections: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub params: Option<PathBuf>,
    /// Precomputed foreground.jsonl; derived from annotations when absent.
    pub foreground: Option<PathBuf>,

    pub delta: f64,
    pub gamma: f64,
    /// Ranking margin.
    pub alpha: f64,
    pub top_h: usize,
    pub nms_iou: f64,
    pub class_aware: bool,
    pub budgets: Vec<usize>,
    pub seed: u64,
    pub loss: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_tokens: usize,
    pub averaging: String,
    pub gt_source: String,
    pub frozen: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            detections: None,
            queries: None,
            embeddings: None,
            annotations: None,
            lexicon: None,
            params: None,
            foreground: None,
            delta: DEFAULT_DELTA,
            gamma: DEFAULT_GAMMA,
            alpha: train.margin,
            top_h: train.top_h,
            nms_iou: DEFAULT_NMS_IOU,
            class_aware: false,
            budgets: DEFAULT_BUDGETS.to_vec(),
            seed: train.seed,
            loss: train.loss.as_str().into(),
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            max_tokens: qnms_core::data::DEFAULT_MAX_TOKENS,
            averaging: Averaging::default().as_str().into(),
            gt_source: GtSource::default().as_str().into(),
            frozen: Vec::new(),
        }
    }
}

/// Command-line overrides; `None` keeps the file or default value.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Overrides {
    /// TOML or JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub foreground: Option<PathBuf>,
    /// Confidence pre-filter threshold [default: 0.05].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Label similarity threshold for contextual matches [default: 0.4].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Ranking-loss margin [default: 0.1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Negatives per positive for the ranking loss [default: 10].
    #[arg(long)]
    pub top_h: Option<usize>,
    /// NMS IoU threshold [default: 0.5].
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// Suppress only within a label.
    #[arg(long)]
    pub class_aware: bool,
    /// Proposal budgets, comma separated [default: 1,5,10,20,50,100].
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// binary_xe or ranking.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// micro or macro.
    #[arg(long)]
    pub averaging: Option<String>,
    /// text_sim or wspg.
    #[arg(long)]
    pub gt_source: Option<String>,
    /// Parameter groups excluded from updates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub frozen: Option<Vec<String>>,
}

fn load_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut cfg: RunConfig = if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    // Paths in a config file are relative to the file.
    if let Some(base) = path.parent() {
        for p in cfg.paths_mut() {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn resolve(overrides: &Overrides) -> Result<Self> {
        let mut cfg = match &overrides.config {
            Some(p) => load_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 7] {
        [
            &mut self.detections,
            &mut self.queries,
            &mut self.embeddings,
            &mut self.annotations,
            &mut self.lexicon,
            &mut self.params,
            &mut self.foreground,
        ]
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        set_path(&mut self.detections, &o.detections);
        set_path(&mut self.queries, &o.queries);
        set_path(&mut self.embeddings, &o.embeddings);
        set_path(&mut self.annotations, &o.annotations);
        set_path(&mut self.lexicon, &o.lexicon);
        set_path(&mut self.params, &o.params);
        set_path(&mut self.foreground, &o.foreground);
        set(&mut self.delta, &o.delta);
        set(&mut self.gamma, &o.gamma);
        set(&mut self.alpha, &o.alpha);
        set(&mut self.top_h, &o.top_h);
        set(&mut self.nms_iou, &o.nms_iou);
        self.class_aware |= o.class_aware;
        set(&mut self.budgets, &o.budgets);
        set(&mut self.seed, &o.seed);
        set(&mut self.loss, &o.loss);
        set(&mut self.learning_rate, &o.learning_rate);
        set(&mut self.batch_size, &o.batch_size);
        set(&mut self.epochs, &o.epochs);
        set(&mut self.max_tokens, &o.max_tokens);
        set(&mut self.averaging, &o.averaging);
        set(&mut self.gt_source, &o.gt_source);
        set(&mut self.frozen, &o.frozen);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("delta must be in [0, 1], got {}", self.delta));
        }
        if !(-1.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [-1, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return bad(format!("nms_iou must be in [0, 1], got {}", self.nms_iou));
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return bad("budgets must be a non-empty list of positive integers".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        self.loss_kind()?;
        self.averaging()?;
        self.gt_source()?;
        self.train_config()?
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn loss_kind(&self) -> Result<LossKind> {
        LossKind::parse(&self.loss).ok_or_else(|| Error::Config(format!("unknown loss {:?}", self.loss)))
    }

    pub fn averaging(&self) -> Result<Averaging> {
        Averaging::parse(&self.averaging)
            .ok_or_else(|| Error::Config(format!("unknown averaging {:?}", self.averaging)))
    }

    pub fn gt_source(&self) -> Result<GtSource> {
        GtSource::parse(&self.gt_source).ok_or_else(|| Error::Config(format!("unknown gt source {:?}", self.gt_source)))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let frozen = self
            .frozen
            .iter()
            .map(|g| ParamGroup::parse(g).ok_or_else(|| Error::Config(format!("unknown parameter group {g:?}"))))
            .collect::<Result<_>>()?;
        Ok(TrainConfig {
            margin: self.alpha,
            top_h: self.top_h,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            loss: self.loss_kind()?,
            frozen,
        })
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            delta: self.delta,
            nms: NmsOptions {
                iou_threshold: self.nms_iou,
                class_aware: self.class_aware,
            },
        }
    }

    /// A configured path that must exist.
    pub fn require<'a>(&'a self, name: &str, path: &'a Option<PathBuf>) -> Result<&'a Path> {
        let p = path
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing --{name}")))?;
        if !p.exists() {
            return Err(Error::Config(format!("--{name}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// A configured path that must exist if given.
    pub fn optional<'a>(&'a self, name: &str, path: &'a Option<PathBuf>) -> Result<Option<&'a Path>> {
        match path {
            None => Ok(None),
            Some(_) => self.require(name, path).map(Some),
        }
    }

    /// `key=value` lines echoed at the top of reports.
    pub fn header(&self) -> Vec<(String, String)> {
        let budgets: Vec<String> = self.budgets.iter().map(|b| b.to_string()).collect();
        vec![
            ("delta".into(), self.delta.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("top_h".into(), self.top_h.to_string()),
            ("nms_iou".into(), self.nms_iou.to_string()),
            ("class_aware".into(), self.class_aware.to_string()),
            ("budgets".into(), budgets.join(",")),
            ("seed".into(), self.seed.to_string()),
            ("loss".into(), self.loss.clone()),
            ("averaging".into(), self.averaging.clone()),
            ("gt_source".into(), self.gt_source.clone()),
        ]
    }
}

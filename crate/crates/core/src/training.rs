//! Deterministic Adam training of the relatedness scorer.

use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::{self, RankPair};
use crate::optim::Adam;
use crate::params::{ParamGroup, ScorerParams};
use crate::pseudo_gt::BoxTarget;
use crate::scorer::{self, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    BinaryXe,
    Ranking,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::BinaryXe => "binary_xe",
            LossKind::Ranking => "ranking",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "binary_xe" | "xe" => Some(LossKind::BinaryXe),
            "ranking" => Some(LossKind::Ranking),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Ranking margin.
    pub margin: f64,
    /// Negatives kept per positive by the pair sampler.
    pub top_h: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Parameter groups the optimizer leaves untouched.
    pub frozen: Vec<ParamGroup>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: loss::DEFAULT_MARGIN,
            top_h: 10,
            learning_rate: 5e-3,
            batch_size: 8,
            epochs: 50,
            seed: 0,
            loss: LossKind::BinaryXe,
            frozen: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin must be > 0, got {}", self.margin)));
        }
        if self.top_h == 0 {
            return Err(Error::InvalidConfig("top_h must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One query over one image: box features, word features, and per-box targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub visual: Matrix,
    pub words: Matrix,
    pub targets: Vec<BoxTarget>,
}

impl TrainSample {
    pub fn labels(&self) -> Vec<u8> {
        self.targets.iter().map(|t| t.label).collect()
    }
}

/// Loss of a single sample with everything but the parameters held fixed.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    BinaryXe,
    Ranking { pairs: &'a [RankPair], margin: f64 },
}

pub fn loss_value(params: &ScorerParams, sample: &TrainSample, objective: Objective<'_>) -> Result<f64> {
    let r = scorer::score(params, &sample.visual, &sample.words)?;
    match objective {
        Objective::BinaryXe => loss::binary_xe(&r, &sample.labels()),
        Objective::Ranking { pairs, margin } => Ok(loss::ranking_loss(pairs, &r, margin)),
    }
}

pub fn loss_and_gradients(
    params: &ScorerParams,
    sample: &TrainSample,
    objective: Objective<'_>,
) -> Result<(f64, Gradients)> {
    let pass = scorer::forward(params, &sample.visual, &sample.words)?;
    let r = pass.relatedness();
    let (value, upstream) = match objective {
        Objective::BinaryXe => {
            let labels = sample.labels();
            (loss::binary_xe(&r, &labels)?, loss::binary_xe_grad(&r, &labels)?)
        }
        Objective::Ranking { pairs, margin } => (
            loss::ranking_loss(pairs, &r, margin),
            loss::ranking_loss_grad(pairs, &r, margin),
        ),
    };
    let grads = scorer::backward(params, &pass, &sample.visual, &sample.words, &upstream)?;
    Ok((value, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, measured before each update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    pub history: Vec<EpochLog>,
}

fn pair_seed(seed: u64, epoch: usize, sample: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 32) ^ sample as u64
}

fn check_dataset(samples: &[TrainSample], visual_dim: usize, word_dim: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    for s in samples {
        if s.visual.cols() != visual_dim {
            return Err(Error::DimensionMismatch {
                what: "training visual features",
                expected: visual_dim,
                found: s.visual.cols(),
            });
        }
        if s.words.cols() != word_dim {
            return Err(Error::DimensionMismatch {
                what: "training word features",
                expected: word_dim,
                found: s.words.cols(),
            });
        }
        if s.targets.len() != s.visual.rows() {
            return Err(Error::DimensionMismatch {
                what: "training targets",
                expected: s.visual.rows(),
                found: s.targets.len(),
            });
        }
    }
    Ok(())
}

/// Trains from a seeded initialization. Dimensions come from the first sample.
pub fn train(samples: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    let first = samples.first().ok_or(Error::EmptyInput("training set"))?;
    let params = ScorerParams::init(first.visual.cols(), first.words.cols(), config.seed);
    train_from(params, samples, config)
}

/// Trains starting from `params`.
///
/// Each epoch visits the samples in a seeded shuffled order, in batches of
/// `batch_size`; gradients are averaged over the batch before one Adam step.
/// For the ranking loss, pairs are re-sampled from the current predictions
/// every time a sample is visited. Samples without boxes are skipped.
pub fn train_from(mut params: ScorerParams, samples: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    check_dataset(samples, params.visual_dim(), params.word_dim())?;

    let mut adam = Adam::new(&params, config.learning_rate);
    for &g in &config.frozen {
        adam.freeze(g);
    }
    let mut shuffle_rng = crate::rng::stream(config.seed, 0x7a1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let abort = || Error::NonFiniteLoss { epoch, batch };
            let mut acc = ScorerParams::zeros(params.visual_dim(), params.word_dim());
            let mut in_batch = 0usize;
            for &idx in chunk {
                let sample = &samples[idx];
                if sample.visual.rows() == 0 {
                    continue;
                }
                let (value, grads) = match config.loss {
                    LossKind::BinaryXe => loss_and_gradients(&params, sample, Objective::BinaryXe),
                    LossKind::Ranking => {
                        let r = scorer::score(&params, &sample.visual, &sample.words).map_err(|_| abort())?;
                        let pairs =
                            loss::sample_pairs(&sample.targets, &r, config.top_h, pair_seed(config.seed, epoch, idx))?;
                        loss_and_gradients(
                            &params,
                            sample,
                            Objective::Ranking {
                                pairs: &pairs,
                                margin: config.margin,
                            },
                        )
                    }
                }
                .map_err(|e| match e {
                    Error::NonFiniteActivation { .. } => abort(),
                    other => other,
                })?;
                if !value.is_finite() {
                    return Err(abort());
                }
                epoch_loss += value;
                counted += 1;
                acc.add_assign(&grads.params);
                in_batch += 1;
            }
            if in_batch == 0 {
                continue;
            }
            acc.scale(1.0 / in_batch as f64);
            adam.step(&mut params, &acc);
            if params.validate().is_err() {
                return Err(abort());
            }
        }
        let loss = if counted == 0 { 0.0 } else { epoch_loss / counted as f64 };
        history.push(EpochLog { epoch, loss });
    }
    Ok(TrainOutcome { params, history })
}

/// Mean per-sample loss of `params` over `samples` (no update).
pub fn mean_loss(params: &ScorerParams, samples: &[TrainSample], config: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (idx, s) in samples.iter().enumerate() {
        if s.visual.rows() == 0 {
            continue;
        }
        let value = match config.loss {
            LossKind::BinaryXe => loss_value(params, s, Objective::BinaryXe)?,
            LossKind::Ranking => {
                let r = scorer::score(params, &s.visual, &s.words)?;
                let pairs = loss::sample_pairs(&s.targets, &r, config.top_h, pair_seed(config.seed, 0, idx))?;
                loss::ranking_loss(&pairs, &r, config.margin)
            }
        };
        total += value;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

//! Relatedness network: soft attention over query words per box, fusion of
//! visual and pooled word features, sigmoid score.
//!
//! For box feature `v_i` and word features `w_j`:
//!
//! ```text
//! va_i  = MLP_a(v_i)
//! a_ij  = FC_s([va_i ; w_j])
//! α_ij  = softmax_j(a_ij)
//! q_i   = Σ_j α_ij w_j
//! vb_i  = MLP_b(v_i)
//! m_i   = (vb_i ⊙ q_i) / sqrt(‖vb_i ⊙ q_i‖² + 1e-12)
//! r_i   = sigmoid(FC_r(m_i))
//! ```
//!
//! [`backward`] is the hand-derived reverse pass of the same graph.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::params::{Mlp, ScorerParams};

/// Added to the squared norm before normalizing the fused feature.
pub const NORM_EPS: f64 = 1e-12;

/// Attention logits, weights and pooled query features, one row per box.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    pub logits: Matrix,
    pub weights: Matrix,
    pub pooled: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutput {
    /// Unit-norm fused feature `m_i`.
    pub fused_feature: Vec<f64>,
    pub logit: f64,
    pub relatedness: f64,
}

/// Per-box activations kept for the reverse pass.
#[derive(Debug, Clone, PartialEq)]
struct BoxCache {
    hidden_a: Vec<f64>,
    va: Vec<f64>,
    hidden_b: Vec<f64>,
    vb: Vec<f64>,
    product: Vec<f64>,
    norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub attention: AttentionState,
    pub scores: Vec<ScoreOutput>,
    cache: Vec<BoxCache>,
}

impl ForwardPass {
    pub fn relatedness(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.relatedness).collect()
    }
}

/// Gradients of a scalar loss with respect to parameters and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ScorerParams,
    pub visual: Matrix,
    pub words: Matrix,
}

fn check_shapes(params: &ScorerParams, visual: &Matrix, words: &Matrix) -> Result<()> {
    if visual.cols() != params.visual_dim() {
        return Err(Error::DimensionMismatch {
            what: "visual features",
            expected: params.visual_dim(),
            found: visual.cols(),
        });
    }
    if words.cols() != params.word_dim() {
        return Err(Error::DimensionMismatch {
            what: "word features",
            expected: params.word_dim(),
            found: words.cols(),
        });
    }
    if words.rows() == 0 {
        return Err(Error::EmptyQuery);
    }
    Ok(())
}

/// Hidden activations and output, or `None` if anything is non-finite.
/// `f64::max` would silently map a NaN pre-activation to 0, hence the check.
fn mlp_forward(mlp: &Mlp, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut pre = vec![0.0; mlp.hidden.output_dim()];
    mlp.hidden.forward(x, &mut pre);
    if pre.iter().any(|h| !h.is_finite()) {
        return None;
    }
    let hidden: Vec<f64> = pre.iter().map(|&h| h.max(0.0)).collect();
    let mut out = vec![0.0; mlp.output.output_dim()];
    mlp.output.forward(&hidden, &mut out);
    out.iter().all(|o| o.is_finite()).then_some((hidden, out))
}

/// Runs the network over `visual` (`|B| x v`) against `words` (`|Q| x q`).
pub fn forward(params: &ScorerParams, visual: &Matrix, words: &Matrix) -> Result<ForwardPass> {
    check_shapes(params, visual, words)?;
    let n_boxes = visual.rows();
    let n_words = words.rows();
    let q = params.word_dim();
    let (fs_visual, fs_word) = params.fc_s.weight.row(0).split_at(q);
    let fs_bias = params.fc_s.bias[0];

    // Word halves of the attention logits do not depend on the box.
    let word_logit: Vec<f64> = words.iter_rows().map(|w| linalg::dot(fs_word, w)).collect();

    let mut logits = Matrix::zeros(n_boxes, n_words);
    let mut weights = Matrix::zeros(n_boxes, n_words);
    let mut pooled = Matrix::zeros(n_boxes, q);
    let mut scores = Vec::with_capacity(n_boxes);
    let mut cache = Vec::with_capacity(n_boxes);

    for i in 0..n_boxes {
        let v = visual.row(i);
        let non_finite = Error::NonFiniteActivation { box_index: i };
        let (hidden_a, va) = mlp_forward(&params.mlp_a, v).ok_or(non_finite.clone())?;
        let box_logit = linalg::dot(fs_visual, &va) + fs_bias;
        for (j, wl) in word_logit.iter().enumerate() {
            logits.set(i, j, box_logit + wl);
        }
        linalg::softmax_into(logits.row(i), weights.row_mut(i));
        for j in 0..n_words {
            let alpha = weights.get(i, j);
            linalg::axpy(alpha, words.row(j), pooled.row_mut(i));
        }

        let (hidden_b, vb) = mlp_forward(&params.mlp_b, v).ok_or(non_finite.clone())?;
        let product: Vec<f64> = vb.iter().zip(pooled.row(i)).map(|(a, b)| a * b).collect();
        let norm = libm::sqrt(linalg::dot(&product, &product) + NORM_EPS);
        let fused_feature: Vec<f64> = product.iter().map(|x| x / norm).collect();
        let logit = linalg::dot(params.fc_r.weight.row(0), &fused_feature) + params.fc_r.bias[0];
        if !logit.is_finite() || !norm.is_finite() || !box_logit.is_finite() {
            return Err(non_finite);
        }
        scores.push(ScoreOutput {
            fused_feature,
            logit,
            relatedness: linalg::sigmoid(logit),
        });
        cache.push(BoxCache {
            hidden_a,
            va,
            hidden_b,
            vb,
            product,
            norm,
        });
    }

    Ok(ForwardPass {
        attention: AttentionState {
            logits,
            weights,
            pooled,
        },
        scores,
        cache,
    })
}

/// Relatedness score per box.
pub fn score(params: &ScorerParams, visual: &Matrix, words: &Matrix) -> Result<Vec<f64>> {
    forward(params, visual, words).map(|p| p.relatedness())
}

fn mlp_backward(mlp: &Mlp, x: &[f64], hidden: &[f64], g_out: &[f64], grad: &mut Mlp, g_x: &mut [f64]) {
    let mut g_hidden = vec![0.0; hidden.len()];
    mlp.output.backward(hidden, g_out, &mut grad.output, &mut g_hidden);
    // ReLU: hidden == 0 exactly where the pre-activation was non-positive.
    for (g, &h) in g_hidden.iter_mut().zip(hidden) {
        if h <= 0.0 {
            *g = 0.0;
        }
    }
    mlp.hidden.backward(x, &g_hidden, &mut grad.hidden, g_x);
}

/// Reverse pass given `upstream[i] = dL/dr_i`.
pub fn backward(
    params: &ScorerParams,
    pass: &ForwardPass,
    visual: &Matrix,
    words: &Matrix,
    upstream: &[f64],
) -> Result<Gradients> {
    check_shapes(params, visual, words)?;
    if upstream.len() != pass.scores.len() || visual.rows() != pass.scores.len() {
        return Err(Error::DimensionMismatch {
            what: "upstream gradient",
            expected: pass.scores.len(),
            found: upstream.len(),
        });
    }
    let q = params.word_dim();
    let n_words = words.rows();
    let (fs_visual, fs_word) = params.fc_s.weight.row(0).split_at(q);
    let fr = params.fc_r.weight.row(0);

    let mut grad = ScorerParams::zeros(params.visual_dim(), q);
    let mut g_visual = Matrix::zeros(visual.rows(), visual.cols());
    let mut g_words = Matrix::zeros(n_words, q);

    let mut g_fused = vec![0.0; q];
    let mut g_product = vec![0.0; q];
    let mut g_pooled = vec![0.0; q];
    let mut g_vb = vec![0.0; q];
    let mut g_va = vec![0.0; q];
    let mut g_alpha = vec![0.0; n_words];

    for (i, (&g_r, (out, c))) in upstream.iter().zip(pass.scores.iter().zip(&pass.cache)).enumerate() {
        if g_r == 0.0 {
            continue;
        }
        let r = out.relatedness;
        let g_logit = g_r * r * (1.0 - r);

        // FC_r
        linalg::axpy(g_logit, &out.fused_feature, grad.fc_r.weight.row_mut(0));
        grad.fc_r.bias[0] += g_logit;
        for (g, &w) in g_fused.iter_mut().zip(fr) {
            *g = g_logit * w;
        }

        // L2 normalization: dm/dx = I/n - x xᵀ/n³
        let n = c.norm;
        let xg = linalg::dot(&c.product, &g_fused);
        for k in 0..q {
            g_product[k] = g_fused[k] / n - c.product[k] * xg / (n * n * n);
        }

        // Element-wise product
        let pooled = pass.attention.pooled.row(i);
        for k in 0..q {
            g_vb[k] = g_product[k] * pooled[k];
            g_pooled[k] = g_product[k] * c.vb[k];
        }

        // Weighted sum and softmax
        let alpha = pass.attention.weights.row(i);
        for j in 0..n_words {
            g_alpha[j] = linalg::dot(&g_pooled, words.row(j));
            linalg::axpy(alpha[j], &g_pooled, g_words.row_mut(j));
        }
        let mean = linalg::dot(alpha, &g_alpha);
        let mut g_box_logit = 0.0;
        {
            let (gfs_visual, gfs_word) = grad.fc_s.weight.row_mut(0).split_at_mut(q);
            for j in 0..n_words {
                let g_a = alpha[j] * (g_alpha[j] - mean);
                g_box_logit += g_a;
                linalg::axpy(g_a, words.row(j), gfs_word);
                linalg::axpy(g_a, fs_word, g_words.row_mut(j));
            }
            linalg::axpy(g_box_logit, &c.va, gfs_visual);
        }
        grad.fc_s.bias[0] += g_box_logit;
        for (g, &w) in g_va.iter_mut().zip(fs_visual) {
            *g = g_box_logit * w;
        }

        let v = visual.row(i);
        let g_v = g_visual.row_mut(i);
        mlp_backward(&params.mlp_a, v, &c.hidden_a, &g_va, &mut grad.mlp_a, g_v);
        mlp_backward(&params.mlp_b, v, &c.hidden_b, &g_vb, &mut grad.mlp_b, g_v);
    }

    Ok(Gradients {
        params: grad,
        visual: g_visual,
        words: g_words,
    })
}

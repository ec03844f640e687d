//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

use qnms_core::{Matrix, ScorerParams};

/// Integer box `[x1, y1, x2, y2]`.
pub type IBox = [i64; 4];

pub fn iarea(b: &IBox) -> i64 {
    (b[2] - b[0]).max(0) * (b[3] - b[1]).max(0)
}

/// `(intersection, union)` in exact integer arithmetic.
pub fn iou_ratio(a: &IBox, b: &IBox) -> (i64, i64) {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0);
    let inter = w * h;
    (inter, iarea(a) + iarea(b) - inter)
}

/// IoU strictly greater than `num/den`, decided exactly.
pub fn overlaps(a: &IBox, b: &IBox, num: i64, den: i64) -> bool {
    let (inter, union) = iou_ratio(a, b);
    union > 0 && inter * den > num * union
}

/// Brute-force greedy suppression: repeatedly take the highest-scoring
/// remaining box (lowest index on ties) and drop every remaining box that
/// overlaps it. Returns kept indices in selection order.
pub fn nms_oracle(boxes: &[IBox], scores: &[f64], labels: Option<&[u8]>, num: i64, den: i64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..boxes.len()).collect();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let mut best = remaining[0];
        for &i in &remaining {
            if scores[i] > scores[best] || (scores[i] == scores[best] && i < best) {
                best = i;
            }
        }
        kept.push(best);
        remaining.retain(|&i| {
            i != best && !(labels.is_none_or(|l| l[i] == l[best]) && overlaps(&boxes[i], &boxes[best], num, den))
        });
    }
    kept
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Affine map with a row-major `out x in` weight.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    (0..b.len())
        .map(|o| {
            let mut s = b[o];
            for k in 0..n_in {
                s += w[o * n_in + k] * x[k];
            }
            s
        })
        .collect()
}

/// Straight-line scorer written from the model definition, reading raw
/// tensors in file order.
pub fn reference_scores(p: &ScorerParams, visual: &Matrix, words: &Matrix) -> Vec<f64> {
    let t: Vec<&[f64]> = p.tensors().iter().map(|(_, s)| *s).collect();
    let q = words.cols();
    let mut out = Vec::new();
    for i in 0..visual.rows() {
        let v = visual.row(i);
        let ha: Vec<f64> = affine(t[0], t[1], v).into_iter().map(relu).collect();
        let va = affine(t[2], t[3], &ha);
        let logits: Vec<f64> = (0..words.rows())
            .map(|j| {
                let cat: Vec<f64> = va.iter().chain(words.row(j)).copied().collect();
                affine(t[4], t[5], &cat)[0]
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut pooled = vec![0.0; q];
        for j in 0..words.rows() {
            for k in 0..q {
                pooled[k] += e[j] / z * words.get(j, k);
            }
        }
        let hb: Vec<f64> = affine(t[6], t[7], v).into_iter().map(relu).collect();
        let vb = affine(t[8], t[9], &hb);
        let x: Vec<f64> = vb.iter().zip(&pooled).map(|(a, b)| a * b).collect();
        let n = (x.iter().map(|a| a * a).sum::<f64>() + 1e-12).sqrt();
        let fused: Vec<f64> = x.iter().map(|a| a / n).collect();
        let logit = affine(t[10], t[11], &fused)[0];
        out.push(1.0 / (1.0 + (-logit).exp()));
    }
    out
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central difference of `f` at coordinate `x[k]`.
pub fn central_diff(x: &mut [f64], k: usize, eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[k];
    x[k] = orig + eps;
    let up = f(x);
    x[k] = orig - eps;
    let down = f(x);
    x[k] = orig;
    (up - down) / (2.0 * eps)
}

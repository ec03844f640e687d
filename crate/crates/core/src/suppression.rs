//! Confidence pre-filter, score fusion, greedy NMS and top-N selection.

use alloc::vec::Vec;

use crate::data::Detection;
use crate::error::{Error, Result};

/// Default confidence pre-filter threshold.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Default NMS IoU threshold.
pub const DEFAULT_NMS_IOU: f64 = 0.5;

/// A detection with its relatedness and fused score `relatedness * confidence`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDetection<'a> {
    /// Position of the detection in the caller's original list.
    pub index: usize,
    pub detection: &'a Detection,
    pub relatedness: f64,
    pub fused: f64,
}

/// Indices of detections with `confidence >= delta`, in input order.
pub fn prefilter(dets: &[Detection], delta: f64) -> Vec<usize> {
    dets.iter()
        .enumerate()
        .filter(|(_, d)| d.confidence >= delta)
        .map(|(i, _)| i)
        .collect()
}

/// Pairs `dets[selection[k]]` with `relatedness[k]`.
pub fn fuse<'a>(dets: &'a [Detection], selection: &[usize], relatedness: &[f64]) -> Result<Vec<ScoredDetection<'a>>> {
    if selection.len() != relatedness.len() {
        return Err(Error::DimensionMismatch {
            what: "relatedness scores",
            expected: selection.len(),
            found: relatedness.len(),
        });
    }
    Ok(selection
        .iter()
        .zip(relatedness)
        .map(|(&index, &r)| {
            let detection = &dets[index];
            ScoredDetection {
                index,
                detection,
                relatedness: r,
                fused: r * detection.confidence,
            }
        })
        .collect())
}

/// Confidence-only scoring: relatedness fixed to 1.
pub fn fuse_baseline<'a>(dets: &'a [Detection], selection: &[usize]) -> Vec<ScoredDetection<'a>> {
    selection
        .iter()
        .map(|&index| {
            let detection = &dets[index];
            ScoredDetection {
                index,
                detection,
                relatedness: 1.0,
                fused: detection.confidence,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsOptions {
    pub iou_threshold: f64,
    /// Only suppress boxes that share a class label.
    pub class_aware: bool,
}

impl Default for NmsOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_NMS_IOU,
            class_aware: false,
        }
    }
}

/// Class-agnostic greedy NMS on the fused score.
pub fn greedy_nms<'a>(scored: &[ScoredDetection<'a>], iou_threshold: f64) -> Vec<ScoredDetection<'a>> {
    greedy_nms_with(
        scored,
        &NmsOptions {
            iou_threshold,
            class_aware: false,
        },
    )
}

/// Greedy NMS. Output is in descending fused-score order; equal scores keep
/// their input order. A box is suppressed when its IoU with an already kept
/// box is strictly greater than the threshold.
pub fn greedy_nms_with<'a>(scored: &[ScoredDetection<'a>], opts: &NmsOptions) -> Vec<ScoredDetection<'a>> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].fused.total_cmp(&scored[a].fused));

    let mut kept: Vec<ScoredDetection<'a>> = Vec::new();
    'candidates: for idx in order {
        let cand = &scored[idx];
        for k in &kept {
            if opts.class_aware && k.detection.label != cand.detection.label {
                continue;
            }
            if k.detection.bbox.iou(&cand.detection.bbox) > opts.iou_threshold {
                continue 'candidates;
            }
        }
        kept.push(*cand);
    }
    kept
}

/// The first `min(n, len)` entries.
pub fn top_n<T>(kept: &[T], n: usize) -> &[T] {
    &kept[..n.min(kept.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use alloc::vec;

    fn det(c: [f64; 4], conf: f64) -> Detection {
        Detection::new(BBox::from_array(c).unwrap(), "obj", conf, vec![]).unwrap()
    }

    #[test]
    fn prefilter_examples() {
        let dets = [
            det([0.0, 0.0, 1.0, 1.0], 0.04),
            det([0.0, 0.0, 1.0, 1.0], 0.05),
            det([0.0, 0.0, 1.0, 1.0], 0.9),
        ];
        assert_eq!(prefilter(&dets, 0.0), [0, 1, 2]);
        assert_eq!(prefilter(&dets, 0.05), [1, 2]);
        assert!(prefilter(&dets, 1.0).is_empty());
    }

    #[test]
    fn fuse_examples() {
        let dets = [det([0.0, 0.0, 1.0, 1.0], 0.8)];
        let s = fuse(&dets, &[0], &[0.5]).unwrap();
        assert!((s[0].fused - 0.4).abs() < 1e-15);
        let s = fuse(&dets, &[0], &[1.0]).unwrap();
        assert_eq!(s[0].fused, 0.8);
        assert_eq!(s, fuse_baseline(&dets, &[0]));
        assert!(fuse(&dets, &[0], &[]).is_err());
    }

    #[test]
    fn nms_single_and_disjoint() {
        let dets = [det([0.0, 0.0, 1.0, 1.0], 0.3), det([5.0, 5.0, 6.0, 6.0], 0.9)];
        let scored = fuse_baseline(&dets, &[0, 1]);
        assert_eq!(greedy_nms(&scored[..1], 0.5).len(), 1);
        let kept = greedy_nms(&scored, 0.5);
        assert_eq!(kept.iter().map(|s| s.index).collect::<Vec<_>>(), [1, 0]);
    }

    #[test]
    fn nms_suppresses_overlap_and_breaks_ties_by_index() {
        let dets = [
            det([0.0, 0.0, 10.0, 10.0], 0.7),
            det([1.0, 0.0, 11.0, 10.0], 0.7),
            det([50.0, 0.0, 60.0, 10.0], 0.2),
        ];
        let kept = greedy_nms(&fuse_baseline(&dets, &[0, 1, 2]), 0.5);
        assert_eq!(kept.iter().map(|s| s.index).collect::<Vec<_>>(), [0, 2]);
    }

    #[test]
    fn iou_equal_to_threshold_is_not_suppressed() {
        // IoU of these two is exactly 0.5.
        let dets = [det([0.0, 0.0, 2.0, 1.0], 0.9), det([0.0, 0.0, 1.0, 1.0], 0.8)];
        assert_eq!(dets[0].bbox.iou(&dets[1].bbox), 0.5);
        assert_eq!(greedy_nms(&fuse_baseline(&dets, &[0, 1]), 0.5).len(), 2);
    }

    #[test]
    fn class_aware_mode_keeps_other_labels() {
        let mut dets = vec![det([0.0, 0.0, 10.0, 10.0], 0.9), det([0.0, 0.0, 10.0, 10.0], 0.8)];
        dets[1].label = "other".into();
        let scored = fuse_baseline(&dets, &[0, 1]);
        assert_eq!(greedy_nms(&scored, 0.5).len(), 1);
        let opts = NmsOptions {
            class_aware: true,
            ..NmsOptions::default()
        };
        assert_eq!(greedy_nms_with(&scored, &opts).len(), 2);
    }

    #[test]
    fn top_n_examples() {
        let xs = [5, 4, 3, 2, 1];
        assert!(top_n(&xs, 0).is_empty());
        assert_eq!(top_n(&xs, 9), &xs);
        assert_eq!(top_n(&xs, 3), &[5, 4, 3]);
    }
}

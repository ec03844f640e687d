mod common;

use common::{nms_oracle, IBox};
use proptest::prelude::*;
use qnms_core::suppression::{fuse, fuse_baseline, greedy_nms, greedy_nms_with, prefilter, NmsOptions};
use qnms_core::{BBox, Detection};

fn ibox() -> impl Strategy<Value = IBox> {
    (0i64..20, 0i64..20, 1i64..12, 1i64..12).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
}

/// Confidences and relatedness from coarse grids so that ties occur.
fn instance(max: usize) -> impl Strategy<Value = Vec<(IBox, f64, f64, u8)>> {
    prop::collection::vec((ibox(), 0u8..=10, 1u8..=8, 0u8..3), 0..=max).prop_map(|v| {
        v.into_iter()
            .map(|(b, c, r, l)| (b, c as f64 / 10.0, r as f64 / 8.0, l))
            .collect()
    })
}

fn detections(inst: &[(IBox, f64, f64, u8)]) -> Vec<Detection> {
    inst.iter()
        .map(|(b, c, _, l)| {
            let bb = BBox::new(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64).unwrap();
            Detection::new(bb, format!("c{l}"), *c, vec![]).unwrap()
        })
        .collect()
}

const THRESHOLDS: [(i64, i64); 3] = [(3, 10), (1, 2), (7, 10)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn matches_brute_force_greedy(inst in instance(10), t in 0usize..3, class_aware in any::<bool>()) {
        let (num, den) = THRESHOLDS[t];
        let dets = detections(&inst);
        let sel: Vec<usize> = (0..dets.len()).collect();
        let r: Vec<f64> = inst.iter().map(|x| x.2).collect();
        let scored = fuse(&dets, &sel, &r).unwrap();
        let opts = NmsOptions { iou_threshold: num as f64 / den as f64, class_aware };
        let got: Vec<usize> = greedy_nms_with(&scored, &opts).iter().map(|s| s.index).collect();

        let boxes: Vec<IBox> = inst.iter().map(|x| x.0).collect();
        let fused: Vec<f64> = scored.iter().map(|s| s.fused).collect();
        let labels: Vec<u8> = inst.iter().map(|x| x.3).collect();
        let want = nms_oracle(&boxes, &fused, class_aware.then_some(&labels[..]), num, den);
        prop_assert_eq!(got, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn positive_rescaling_keeps_survivors_and_order(
        inst in prop::collection::vec((ibox(), 0.0f64..1.0, 1e-3f64..1.0), 0..=12),
        k in prop_oneof![1e-3f64..1e3, Just(2.0), Just(0.5)],
    ) {
        let dets = detections(&inst.iter().map(|(b, c, r)| (*b, *c, *r, 0)).collect::<Vec<_>>());
        let sel: Vec<usize> = (0..dets.len()).collect();
        let r: Vec<f64> = inst.iter().map(|x| x.2).collect();
        let rk: Vec<f64> = r.iter().map(|v| v * k).collect();
        let a: Vec<usize> = greedy_nms(&fuse(&dets, &sel, &r).unwrap(), 0.5).iter().map(|s| s.index).collect();
        let b: Vec<usize> = greedy_nms(&fuse(&dets, &sel, &rk).unwrap(), 0.5).iter().map(|s| s.index).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn unit_relatedness_is_confidence_only(inst in instance(15), delta in 0.0f64..0.5) {
        let dets = detections(&inst);
        let sel = prefilter(&dets, delta);
        let ones = vec![1.0; sel.len()];
        let fused = greedy_nms(&fuse(&dets, &sel, &ones).unwrap(), 0.5);
        let base = greedy_nms(&fuse_baseline(&dets, &sel), 0.5);
        prop_assert_eq!(fused.len(), base.len());
        for (f, b) in fused.iter().zip(&base) {
            prop_assert_eq!(f.index, b.index);
            prop_assert_eq!(f.fused.to_bits(), b.fused.to_bits());
        }
    }
}

#[test]
fn empty_input_gives_empty_output() {
    assert!(greedy_nms(&fuse_baseline(&[], &[]), 0.5).is_empty());
}

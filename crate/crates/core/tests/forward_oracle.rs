mod common;

use proptest::prelude::*;
use qnms_core::synthetic::random_matrix;
use qnms_core::{scorer, ScorerParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scorer_matches_reference(
        boxes in 1usize..6, words in 1usize..6, v in 1usize..9, q in 1usize..9, seed in any::<u64>(),
    ) {
        let params = ScorerParams::init(v, q, seed);
        let visual = random_matrix(boxes, v, -2.0, 2.0, seed ^ 1);
        let w = random_matrix(words, q, -2.0, 2.0, seed ^ 2);
        let got = scorer::score(&params, &visual, &w).unwrap();
        let want = common::reference_scores(&params, &visual, &w);
        for (g, e) in got.iter().zip(&want) {
            prop_assert!((g - e).abs() <= 1e-10, "{g} vs {e}");
        }
    }
}

use std::collections::BTreeSet;

use proptest::prelude::*;

use qnms_core::data::EmbeddingTable;
use qnms_core::pseudo_gt::{extract_nouns, match_contextual, Annotation};
use qnms_core::synthetic::{adversarial, AdversarialConfig};
use qnms_core::BBox;

fn labels(m: &[&Annotation]) -> BTreeSet<(String, [u64; 4])> {
    m.iter()
        .map(|a| (a.label.clone(), a.bbox.to_array().map(f64::to_bits)))
        .collect()
}

#[test]
fn matches_shrink_as_gamma_grows_on_the_fixture() {
    let d = adversarial(
        &AdversarialConfig {
            images: 60,
            ..Default::default()
        },
        5,
    );
    for (img, q) in d.images.iter().zip(&d.queries) {
        let nouns = extract_nouns(&q.tokens, &d.lexicon);
        let sets: Vec<_> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&g| labels(&match_contextual(&nouns, &img.annotations, &d.embeddings, g)))
            .collect();
        for w in sets.windows(2) {
            assert!(w[1].is_subset(&w[0]));
        }
    }
}

#[test]
fn hand_built_similarities() {
    // cos(cat, kitten) = 0.9, cos(cat, sofa) = 0.41, cos(cat, rug) = 0.39.
    let mut t = EmbeddingTable::new(2);
    let unit = |c: f64| vec![c, (1.0 - c * c).sqrt()];
    t.insert("cat", vec![1.0, 0.0]).unwrap();
    t.insert("kitten", unit(0.9)).unwrap();
    t.insert("sofa", unit(0.41)).unwrap();
    t.insert("rug", unit(0.39)).unwrap();
    let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let anns: Vec<Annotation> = ["kitten", "sofa", "rug"]
        .iter()
        .map(|l| Annotation {
            label: l.to_string(),
            bbox: b,
        })
        .collect();
    let nouns = vec!["cat".to_string()];
    let count = |g| match_contextual(&nouns, &anns, &t, g).len();
    assert_eq!(
        [count(0.2), count(0.4), count(0.6), count(0.8), count(0.95)],
        [3, 2, 1, 1, 0]
    );
}

proptest! {
    #[test]
    fn matches_shrink_as_gamma_grows_on_random_embeddings(
        vecs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 6),
    ) {
        let words = ["a", "b", "c", "d", "e", "f"];
        let mut t = EmbeddingTable::new(3);
        for (w, v) in words.iter().zip(&vecs) {
            t.insert(*w, v.clone()).unwrap();
        }
        let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let anns: Vec<Annotation> = words[2..].iter().map(|l| Annotation { label: l.to_string(), bbox: b }).collect();
        let nouns = vec!["a".to_string(), "b".to_string()];
        let sets: Vec<_> = [0.2, 0.4, 0.6, 0.8]
            .iter()
            .map(|&g| labels(&match_contextual(&nouns, &anns, &t, g)))
            .collect();
        for w in sets.windows(2) {
            prop_assert!(w[1].is_subset(&w[0]));
        }
    }
}

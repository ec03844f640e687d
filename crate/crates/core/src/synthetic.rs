//! Seeded synthetic datasets.
//!
//! [`separable`] yields training samples whose relevant boxes carry one
//! feature pattern and irrelevant boxes another. [`adversarial`] yields whole
//! images, queries, annotations and an embedding table where the objects a
//! query mentions are detected with lower confidence than the clutter
//! around them, which is the situation confidence-only NMS handles badly.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Detection, EmbeddingTable, QueryRecord, DEFAULT_MAX_TOKENS};
use crate::geometry::BBox;
use crate::linalg::Matrix;
use crate::pseudo_gt::{Annotation, BoxTarget};
use crate::training::TrainSample;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableConfig {
    pub samples: usize,
    pub boxes: usize,
    pub words: usize,
    pub visual_dim: usize,
    pub word_dim: usize,
    pub noise: f64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            samples: 16,
            boxes: 8,
            words: 3,
            visual_dim: 8,
            word_dim: 4,
            noise: 0.1,
        }
    }
}

/// Rho given to relevant boxes (q-value 3) and irrelevant ones (q-value 0).
pub const SEPARABLE_RHO: (f64, f64) = (0.8, 0.1);

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Word features are positive so the pooled query never flips the sign
/// pattern of the fused feature between samples.
pub fn separable(config: &SeparableConfig, seed: u64) -> Vec<TrainSample> {
    let mut rng = crate::rng::stream(seed, 0x5e9);
    let pattern_a = uniform_vec(&mut rng, config.visual_dim, -1.0, 1.0);
    let pattern_b = uniform_vec(&mut rng, config.visual_dim, -1.0, 1.0);
    (0..config.samples)
        .map(|_| {
            let mut visual = Matrix::zeros(config.boxes, config.visual_dim);
            let mut targets = Vec::with_capacity(config.boxes);
            for i in 0..config.boxes {
                let relevant = i % 2 == 0;
                let pattern = if relevant { &pattern_a } else { &pattern_b };
                for (dst, &p) in visual.row_mut(i).iter_mut().zip(pattern) {
                    *dst = p + config.noise * rng.gen_range(-1.0..1.0);
                }
                let rho = if relevant { SEPARABLE_RHO.0 } else { SEPARABLE_RHO.1 };
                targets.push(BoxTarget::from_rho(rho));
            }
            let words = Matrix::from_vec(
                config.words,
                config.word_dim,
                uniform_vec(&mut rng, config.words * config.word_dim, 0.2, 1.0),
            )
            .expect("shape");
            TrainSample { visual, words, targets }
        })
        .collect()
}

pub const CATEGORIES: [&str; 8] = ["cat", "dog", "chair", "table", "person", "car", "bottle", "cup"];
const FILLERS: [&str; 10] = [
    "the", "a", "big", "small", "red", "near", "beside", "left", "of", "under",
];
const RELATIONS: [&[&str]; 4] = [&["near"], &["beside"], &["left", "of"], &["under"]];
const ADJECTIVES: [&str; 3] = ["big", "small", "red"];

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialConfig {
    pub images: usize,
    /// Seed of the shared world: category prototypes and word vectors.
    /// Train and test splits must share it.
    pub world_seed: u64,
    pub visual_dim: usize,
    pub word_dim: usize,
    pub clutter_objects: usize,
    /// Fraction of images where the mentioned objects are confidently detected.
    pub easy_fraction: f64,
    pub feature_noise: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            images: 200,
            world_seed: 7,
            visual_dim: 32,
            word_dim: 16,
            clutter_objects: 12,
            easy_fraction: 0.25,
            feature_noise: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub image_id: String,
    pub detections: Vec<Detection>,
    /// Ground-truth regions with category labels.
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub images: Vec<SyntheticImage>,
    /// `queries[i]` describes `images[i]`.
    pub queries: Vec<QueryRecord>,
    pub embeddings: EmbeddingTable,
    pub lexicon: BTreeSet<String>,
}

struct World {
    prototypes: Vec<Vec<f64>>,
    embeddings: EmbeddingTable,
}

fn world(config: &AdversarialConfig) -> World {
    assert!(
        config.word_dim > CATEGORIES.len(),
        "word_dim too small for the category vocabulary"
    );
    assert!(config.visual_dim >= 2, "visual_dim too small");
    let mut rng = crate::rng::stream(config.world_seed, 0x3041d);
    let proto_dim = config.visual_dim - 1;
    let prototypes = CATEGORIES
        .iter()
        .map(|_| uniform_vec(&mut rng, proto_dim, -1.0, 1.0))
        .collect();
    let mut embeddings = EmbeddingTable::new(config.word_dim);
    // Category words: near one-hot in the first dims; fillers live in the rest.
    for (c, name) in CATEGORIES.iter().enumerate() {
        let mut v = vec![0.0; config.word_dim];
        v[c] = 1.0;
        for x in v.iter_mut().take(CATEGORIES.len()) {
            *x += rng.gen_range(0.0..0.05);
        }
        embeddings.insert(*name, v).expect("dim");
    }
    for name in FILLERS {
        let mut v = vec![0.0; config.word_dim];
        for x in v.iter_mut().skip(CATEGORIES.len()) {
            *x = rng.gen_range(0.0..0.5);
        }
        embeddings.insert(name, v).expect("dim");
    }
    World { prototypes, embeddings }
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, frac: f64) -> BBox {
    let (w, h) = (b.width(), b.height());
    let dx1 = rng.gen_range(-frac..frac) * w;
    let dy1 = rng.gen_range(-frac..frac) * h;
    let dx2 = rng.gen_range(-frac..frac) * w;
    let dy2 = rng.gen_range(-frac..frac) * h;
    BBox::new(b.x1() + dx1, b.y1() + dy1, b.x2() + dx2, b.y2() + dy2).expect("jitter keeps extents positive")
}

/// A sub-box covering roughly a quarter to two fifths of `b`.
fn part(rng: &mut ChaCha8Rng, b: &BBox) -> BBox {
    let fw = rng.gen_range(0.5..0.7);
    let fh = rng.gen_range(0.5..0.6);
    let (w, h) = (b.width() * fw, b.height() * fh);
    let x = b.x1() + rng.gen_range(0.0..(b.width() - w));
    let y = b.y1() + rng.gen_range(0.0..(b.height() - h));
    BBox::new(x, y, x + w, y + h).expect("part inside box")
}

fn feature(rng: &mut ChaCha8Rng, world: &World, category: usize, quality: f64, noise: f64) -> Vec<f64> {
    let mut f: Vec<f64> = world.prototypes[category]
        .iter()
        .map(|p| p + noise * rng.gen_range(-1.0..1.0))
        .collect();
    f.push(quality);
    f
}

/// Generates `config.images` images with one query each.
pub fn adversarial(config: &AdversarialConfig, seed: u64) -> SyntheticDataset {
    let world = world(config);
    let mut rng = crate::rng::stream(seed, 0xad5);
    let (cols, rows) = (5usize, 4usize);
    let (cell_w, cell_h) = (160.0, 120.0);
    let objects_per_image = 2 + config.clutter_objects;
    assert!(objects_per_image <= cols * rows, "too many objects for the layout grid");

    let mut images = Vec::with_capacity(config.images);
    let mut queries = Vec::with_capacity(config.images);
    for img in 0..config.images {
        let mut cats: Vec<usize> = (0..CATEGORIES.len()).collect();
        cats.shuffle(&mut rng);
        let (ref_cat, ctx_cat) = (cats[0], cats[1]);
        let mut cells: Vec<usize> = (0..cols * rows).collect();
        cells.shuffle(&mut rng);
        let easy = rng.gen_bool(config.easy_fraction);

        let mut detections = Vec::new();
        let mut annotations = Vec::new();
        let mut referent = None;
        for (k, &cell) in cells.iter().take(objects_per_image).enumerate() {
            let category = match k {
                0 => ref_cat,
                1 => ctx_cat,
                // Clutter never repeats a mentioned category.
                _ => cats[2 + rng.gen_range(0..CATEGORIES.len() - 2)],
            };
            let (cx, cy) = ((cell % cols) as f64 * cell_w, (cell / cols) as f64 * cell_h);
            let w = rng.gen_range(70.0..120.0);
            let h = rng.gen_range(55.0..90.0);
            let x = cx + rng.gen_range(15.0..(cell_w - w - 15.0));
            let y = cy + rng.gen_range(12.0..(cell_h - h - 12.0));
            let object = BBox::new(x, y, x + w, y + h).expect("object box");
            annotations.push(Annotation {
                label: String::from(CATEGORIES[category]),
                bbox: object,
            });
            if k == 0 {
                referent = Some(object);
            }

            let mentioned = k < 2;
            let base = if mentioned && !easy {
                rng.gen_range(0.1..0.3)
            } else {
                rng.gen_range(0.5..0.95)
            };
            let mut boxes = vec![(jitter(&mut rng, &object, 0.03), base)];
            for _ in 0..2 {
                boxes.push((jitter(&mut rng, &object, 0.12), base * rng.gen_range(0.6..0.9)));
            }
            boxes.push((part(&mut rng, &object), base * rng.gen_range(0.3..0.6)));
            for (b, conf) in boxes {
                let quality = b.iou(&object);
                let f = feature(&mut rng, &world, category, quality, config.feature_noise);
                detections.push(Detection::new(b, CATEGORIES[category], conf, f).expect("valid detection"));
            }
        }
        // Detector output order carries no information.
        detections.shuffle(&mut rng);

        let mut tokens: Vec<&str> = Vec::new();
        if rng.gen_bool(0.5) {
            tokens.push("the");
        }
        if rng.gen_bool(0.4) {
            tokens.push(ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())]);
        }
        tokens.push(CATEGORIES[ref_cat]);
        tokens.extend_from_slice(RELATIONS[rng.gen_range(0..RELATIONS.len())]);
        tokens.push(if rng.gen_bool(0.5) { "the" } else { "a" });
        tokens.push(CATEGORIES[ctx_cat]);

        let image_id = format!("img{img:05}");
        queries.push(
            QueryRecord::new(
                format!("q{img:05}"),
                image_id.clone(),
                tokens,
                referent,
                DEFAULT_MAX_TOKENS,
            )
            .expect("non-empty query"),
        );
        images.push(SyntheticImage {
            image_id,
            detections,
            annotations,
        });
    }

    SyntheticDataset {
        images,
        queries,
        embeddings: world.embeddings,
        lexicon: CATEGORIES.iter().map(|c| String::from(*c)).collect(),
    }
}

/// `n` random detections of dimension `visual_dim` in a 640x480 frame.
pub fn random_detections(n: usize, visual_dim: usize, seed: u64) -> Vec<Detection> {
    let mut rng = crate::rng::stream(seed, 0xbe7c);
    (0..n)
        .map(|_| {
            let x = rng.gen_range(0.0..560.0);
            let y = rng.gen_range(0.0..400.0);
            let w = rng.gen_range(8.0..80.0);
            let h = rng.gen_range(8.0..80.0);
            let b = BBox::new(x, y, x + w, y + h).expect("box");
            let f = uniform_vec(&mut rng, visual_dim, -1.0, 1.0);
            Detection::new(b, "obj", rng.gen_range(0.0..1.0), f).expect("detection")
        })
        .collect()
}

/// Random `rows x cols` matrix with entries in `[lo, hi)`.
pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = crate::rng::stream(seed, 0x3a7);
    Matrix::from_vec(rows, cols, uniform_vec(&mut rng, rows * cols, lo, hi)).expect("shape")
}

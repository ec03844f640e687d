//! Foreground sets for training and contextual recall.
//!
//! A query's foreground is its annotated referent plus contextual boxes.
//! Contextual boxes come either from text similarity (query nouns against
//! annotated category names, cosine of word embeddings above `gamma`) or are
//! imported as-is from an external phrase-grounding run.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{normalize_tokens, EmbeddingTable};
use crate::geometry::BBox;
use crate::linalg;

/// Default cosine threshold for text-similarity matching.
pub const DEFAULT_GAMMA: f64 = 0.4;

/// Boxes with IoU above this against the foreground are positives.
pub const POSITIVE_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Referent,
    TextSim,
    WspgImport,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Referent => "referent",
            Provenance::TextSim => "text_sim",
            Provenance::WspgImport => "wspg_import",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "referent" => Some(Provenance::Referent),
            "text_sim" => Some(Provenance::TextSim),
            "wspg_import" => Some(Provenance::WspgImport),
            _ => None,
        }
    }
}

/// An annotated region: category label and box.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub label: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualBox {
    pub bbox: BBox,
    pub label: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForegroundSet {
    pub referent: Option<BBox>,
    pub contextual: Vec<ContextualBox>,
}

impl ForegroundSet {
    /// Text-similarity foreground: matched annotations become contextual boxes.
    pub fn from_text_similarity<'a, I>(referent: Option<BBox>, matched: I) -> Self
    where
        I: IntoIterator<Item = &'a Annotation>,
    {
        Self::with_provenance(referent, matched, Provenance::TextSim)
    }

    /// Imported foreground: every annotation is copied verbatim.
    pub fn from_import<'a, I>(referent: Option<BBox>, annotations: I) -> Self
    where
        I: IntoIterator<Item = &'a Annotation>,
    {
        Self::with_provenance(referent, annotations, Provenance::WspgImport)
    }

    fn with_provenance<'a, I>(referent: Option<BBox>, anns: I, provenance: Provenance) -> Self
    where
        I: IntoIterator<Item = &'a Annotation>,
    {
        Self {
            referent,
            contextual: anns
                .into_iter()
                .map(|a| ContextualBox {
                    bbox: a.bbox,
                    label: a.label.clone(),
                    provenance,
                })
                .collect(),
        }
    }

    /// Referent (if any) followed by the contextual boxes.
    pub fn boxes(&self) -> impl Iterator<Item = BBox> + '_ {
        self.referent.into_iter().chain(self.contextual.iter().map(|c| c.bbox))
    }

    pub fn contextual_boxes(&self) -> Vec<BBox> {
        self.contextual.iter().map(|c| c.bbox).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.referent.is_none() && self.contextual.is_empty()
    }
}

/// Training target of one box against a foreground set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxTarget {
    /// Largest IoU with any foreground box (0 if there is none).
    pub rho: f64,
    /// 1 iff `rho > 0.5`.
    pub label: u8,
    /// `ceil(max(0, rho - 0.5) / 0.1)`, in `0..=5`.
    pub q_value: u8,
}

impl BoxTarget {
    pub fn from_rho(rho: f64) -> Self {
        let label = u8::from(rho > POSITIVE_IOU);
        Self {
            rho,
            label,
            q_value: q_value(rho),
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Quantized IoU level `ceil(max(0, rho - 0.5) / 0.1)`.
///
/// `(rho - 0.5) * 10` is snapped to the nearest integer when within 1e-9 so
/// that decimal boundaries like 0.8 land in their exact bucket, and any
/// `rho > 0.5` maps to at least level 1.
pub fn q_value(rho: f64) -> u8 {
    let x = (rho - POSITIVE_IOU).max(0.0) * 10.0;
    let nearest = libm::round(x);
    let level = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        libm::ceil(x)
    };
    let mut level = level.clamp(0.0, 5.0) as u8;
    if rho > POSITIVE_IOU && level == 0 {
        level = 1;
    }
    level
}

/// Tokens present in `lexicon`, first occurrence only, in query order.
pub fn extract_nouns<S: AsRef<str>>(tokens: &[S], lexicon: &BTreeSet<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in tokens {
        let t = t.as_ref();
        if lexicon.contains(t) && seen.insert(t) {
            out.push(String::from(t));
        }
    }
    out
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let nu = linalg::norm(u);
    let nv = linalg::norm(v);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (linalg::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Mean embedding of a possibly multiword label. Unknown tokens contribute
/// the `unk` row.
pub fn phrase_embedding(label: &str, table: &EmbeddingTable) -> Vec<f64> {
    let tokens = normalize_tokens([label]);
    let mut out = vec![0.0; table.dim()];
    if tokens.is_empty() {
        return out;
    }
    for t in &tokens {
        linalg::axpy(1.0, table.vector(t), &mut out);
    }
    let n = tokens.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Annotations whose label embedding has cosine `>= gamma` with at least one
/// noun. Zero-norm embeddings on either side never match.
pub fn match_contextual<'a, S: AsRef<str>>(
    nouns: &[S],
    annotations: &'a [Annotation],
    table: &EmbeddingTable,
    gamma: f64,
) -> Vec<&'a Annotation> {
    let noun_vecs: Vec<&[f64]> = nouns
        .iter()
        .map(|n| table.vector(n.as_ref()))
        .filter(|v| linalg::norm(v) > 0.0)
        .collect();
    if noun_vecs.is_empty() {
        return Vec::new();
    }
    annotations
        .iter()
        .filter(|a| {
            let label = phrase_embedding(&a.label, table);
            linalg::norm(&label) > 0.0 && noun_vecs.iter().any(|n| cosine(n, &label) >= gamma)
        })
        .collect()
}

/// Targets for each box against `fg`.
pub fn assign_targets<'a, I>(boxes: I, fg: &ForegroundSet) -> Vec<BoxTarget>
where
    I: IntoIterator<Item = &'a BBox>,
{
    boxes
        .into_iter()
        .map(|b| {
            let rho = fg.boxes().map(|f| b.iou(&f)).fold(0.0, f64::max);
            BoxTarget::from_rho(rho)
        })
        .collect()
}

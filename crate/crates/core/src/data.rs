//! In-memory dataset types: detections, queries and word-embedding tables.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::linalg::Matrix;

/// Key of the out-of-vocabulary row in every [`EmbeddingTable`].
pub const UNK: &str = "unk";

/// Default cap on query length; longer queries lose their tail.
pub const DEFAULT_MAX_TOKENS: usize = 20;

/// One detector output: box, class label, confidence and a precomputed
/// visual feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub label: String,
    pub confidence: f64,
    pub feature: Vec<f64>,
}

impl Detection {
    pub fn new(bbox: BBox, label: impl Into<String>, confidence: f64, feature: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidConfidence(confidence));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("visual feature"));
        }
        Ok(Self {
            bbox,
            label: label.into(),
            confidence,
            feature,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature.len()
    }
}

/// Stacks the visual features of `dets` into a `|dets| x dim` matrix.
pub fn feature_matrix<'a, I>(dim: usize, dets: I) -> Result<Matrix>
where
    I: IntoIterator<Item = &'a Detection>,
{
    Matrix::from_rows(dim, dets.into_iter().map(|d| d.feature.as_slice()))
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn normalize_tokens<'a, I>(raw: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = Vec::new();
    for chunk in raw {
        let cleaned: String = chunk
            .chars()
            .filter(|c| c.is_alphanumeric() || c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect();
        out.extend(cleaned.split_whitespace().map(String::from));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub image_id: String,
    pub tokens: Vec<String>,
    pub referent: Option<BBox>,
}

impl QueryRecord {
    /// Normalizes `raw_tokens` and truncates to `max_tokens`.
    pub fn new<'a, I>(
        query_id: impl Into<String>,
        image_id: impl Into<String>,
        raw_tokens: I,
        referent: Option<BBox>,
        max_tokens: usize,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut tokens = normalize_tokens(raw_tokens);
        tokens.truncate(max_tokens);
        if tokens.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(Self {
            query_id: query_id.into(),
            image_id: image_id.into(),
            tokens,
            referent,
        })
    }
}

/// Word vectors of a fixed dimension with a reserved [`UNK`] row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Empty table whose `unk` row is the zero vector.
    pub fn new(dim: usize) -> Self {
        let mut vectors = BTreeMap::new();
        vectors.insert(String::from(UNK), vec![0.0; dim]);
        Self { dim, vectors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Inserts or replaces a word. Inserting `unk` overrides the zero default.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "embedding vector",
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vector"));
        }
        self.vectors.insert(word.into(), vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    pub fn unk(&self) -> &[f64] {
        &self.vectors[UNK]
    }

    /// Vector for `word`, falling back to `unk`.
    pub fn vector(&self, word: &str) -> &[f64] {
        self.get(word).unwrap_or_else(|| self.unk())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// `|tokens| x q` matrix of word features; unknown words get the `unk` row.
pub fn lookup_words<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Matrix {
    let mut m = Matrix::zeros(tokens.len(), table.dim());
    for (i, t) in tokens.iter().enumerate() {
        m.row_mut(i).copy_from_slice(table.vector(t.as_ref()));
    }
    m
}

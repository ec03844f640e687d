//! On-disk formats.
//!
//! | file | one line / record |
//! |------|-------------------|
//! | detections.jsonl | `{"image_id", "box": [x1,y1,x2,y2], "label", "confidence", "feature": [..]}` |
//! | queries.jsonl | `{"query_id", "image_id", "tokens": [..], "referent_box": [..] \| null}` |
//! | annotations.jsonl | `{"image_id", "box", "label"}`, optional `"query_id"` |
//! | embeddings.txt | GloVe text: `word v1 .. vq` |
//! | noun_lexicon.txt | one lowercase noun per line |
//! | foreground.jsonl | [`ForegroundRecord`] |
//! | filtered.jsonl | [`FilteredRecord`] |
//! | params.json | [`ParamsFile`] |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use qnms_core::data::{EmbeddingTable, QueryRecord};
use qnms_core::params::{ScorerParams, TENSOR_NAMES};
use qnms_core::pseudo_gt::{Annotation, BoxTarget, ContextualBox, ForegroundSet, Provenance};
use qnms_core::{BBox, Detection};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionLine {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: String,
    pub confidence: f64,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLine {
    pub query_id: String,
    pub image_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub referent_box: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLine {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: String,
    /// Restricts the record to one query (phrase-grounding imports).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
}

/// Detections of one image, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    lines(path)?
        .into_iter()
        .map(|(n, l)| {
            serde_json::from_str(&l)
                .map(|v| (n, v))
                .map_err(|e| Error::parse(path, n, e.to_string()))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn schema(path: &Path, line: usize) -> impl Fn(qnms_core::Error) -> Error + '_ {
    move |source| Error::Schema {
        path: path.to_path_buf(),
        line,
        source,
    }
}

/// Loads detections grouped by image in order of first appearance. All
/// features must share the first record's dimension.
pub fn load_detections(path: &Path) -> Result<Vec<ImageDetections>> {
    let mut images: Vec<ImageDetections> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut dim = None;
    for (n, rec) in read_jsonl::<DetectionLine>(path)? {
        let err = schema(path, n);
        let expected = *dim.get_or_insert(rec.feature.len());
        if rec.feature.len() != expected {
            return Err(err(qnms_core::Error::DimensionMismatch {
                what: "visual feature",
                expected,
                found: rec.feature.len(),
            }));
        }
        let bbox = BBox::from_array(rec.bbox).map_err(&err)?;
        let det = Detection::new(bbox, rec.label, rec.confidence, rec.feature).map_err(&err)?;
        let slot = *index.entry(rec.image_id.clone()).or_insert_with(|| {
            images.push(ImageDetections {
                image_id: rec.image_id,
                detections: Vec::new(),
            });
            images.len() - 1
        });
        images[slot].detections.push(det);
    }
    Ok(images)
}

pub fn save_detections(path: &Path, images: &[ImageDetections]) -> Result<()> {
    let lines: Vec<DetectionLine> = images
        .iter()
        .flat_map(|img| {
            img.detections.iter().map(|d| DetectionLine {
                image_id: img.image_id.clone(),
                bbox: d.bbox.to_array(),
                label: d.label.clone(),
                confidence: d.confidence,
                feature: d.feature.clone(),
            })
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn load_queries(path: &Path, max_tokens: usize) -> Result<Vec<QueryRecord>> {
    read_jsonl::<QueryLine>(path)?
        .into_iter()
        .map(|(n, q)| {
            let err = schema(path, n);
            let referent = q.referent_box.map(BBox::from_array).transpose().map_err(&err)?;
            QueryRecord::new(
                q.query_id,
                q.image_id,
                q.tokens.iter().map(String::as_str),
                referent,
                max_tokens,
            )
            .map_err(&err)
        })
        .collect()
}

pub fn save_queries(path: &Path, queries: &[QueryRecord]) -> Result<()> {
    let lines: Vec<QueryLine> = queries
        .iter()
        .map(|q| QueryLine {
            query_id: q.query_id.clone(),
            image_id: q.image_id.clone(),
            tokens: q.tokens.clone(),
            referent_box: q.referent.map(BBox::to_array),
        })
        .collect();
    write_jsonl(path, &lines)
}

/// Annotation records of one image; `query_id` is kept for scoped imports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageAnnotations {
    pub records: Vec<(Option<String>, Annotation)>,
}

impl ImageAnnotations {
    /// Records that apply to `query_id` (unscoped records apply to all).
    pub fn for_query(&self, query_id: &str) -> Vec<Annotation> {
        self.records
            .iter()
            .filter(|(q, _)| q.as_deref().is_none_or(|q| q == query_id))
            .map(|(_, a)| a.clone())
            .collect()
    }
}

pub fn load_annotations(path: &Path) -> Result<HashMap<String, ImageAnnotations>> {
    let mut out: HashMap<String, ImageAnnotations> = HashMap::new();
    for (n, a) in read_jsonl::<AnnotationLine>(path)? {
        let bbox = BBox::from_array(a.bbox).map_err(schema(path, n))?;
        out.entry(a.image_id)
            .or_default()
            .records
            .push((a.query_id, Annotation { label: a.label, bbox }));
    }
    Ok(out)
}

pub fn save_annotations(path: &Path, lines: &[AnnotationLine]) -> Result<()> {
    write_jsonl(path, lines)
}

/// GloVe text format. The dimension is taken from the first line.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in lines(path)? {
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-blank line");
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, n, format!("bad value for {word:?}: {e}")))?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        t.insert(word, values).map_err(schema(path, n))?;
    }
    table.ok_or_else(|| Error::parse(path, 0, "embedding file is empty"))
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut w = create(path)?;
    for (word, v) in table.iter() {
        let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{word} {}", vals.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_lexicon(path: &Path) -> Result<BTreeSet<String>> {
    Ok(lines(path)?.into_iter().map(|(_, l)| l.trim().to_lowercase()).collect())
}

pub fn save_lexicon(path: &Path, lexicon: &BTreeSet<String>) -> Result<()> {
    let mut w = create(path)?;
    for word in lexicon {
        writeln!(w, "{word}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const PARAMS_FORMAT: &str = "qnms-scorer-params";
pub const PARAMS_VERSION: u32 = 1;

/// JSON parameter file. Floats are written in shortest round-trip form, so
/// save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub visual_dim: usize,
    pub word_dim: usize,
    pub hidden_activation: String,
    pub tensors: BTreeMap<String, Vec<f64>>,
}

pub fn save_params(path: &Path, params: &ScorerParams) -> Result<()> {
    let file = ParamsFile {
        format: PARAMS_FORMAT.into(),
        version: PARAMS_VERSION,
        visual_dim: params.visual_dim(),
        word_dim: params.word_dim(),
        hidden_activation: "relu".into(),
        tensors: TENSOR_NAMES
            .iter()
            .zip(params.tensors())
            .map(|(name, (_, t))| (name.to_string(), t.to_vec()))
            .collect(),
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ScorerParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ParamsFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if file.format != PARAMS_FORMAT || file.version != PARAMS_VERSION {
        return Err(Error::parse(
            path,
            0,
            format!("unsupported params format {:?} version {}", file.format, file.version),
        ));
    }
    if file.hidden_activation != "relu" {
        return Err(Error::parse(
            path,
            0,
            format!("unsupported activation {:?}", file.hidden_activation),
        ));
    }
    let mut tensors = file.tensors;
    let mut take = |name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| Error::parse(path, 0, format!("missing tensor {name}")))
    };
    let ordered: Vec<Vec<f64>> = TENSOR_NAMES.iter().map(|n| take(n)).collect::<Result<_>>()?;
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::parse(path, 0, format!("unknown tensor {extra}")));
    }
    let ordered: [Vec<f64>; 12] = ordered.try_into().expect("twelve tensors");
    ScorerParams::from_tensors(file.visual_dim, file.word_dim, ordered).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        line: 0,
        source: e,
    })
}

/// Loads parameters and checks them against the dataset dimensions.
pub fn load_params_for(path: &Path, visual_dim: usize, word_dim: usize) -> Result<ScorerParams> {
    let params = load_params(path)?;
    if params.visual_dim() != visual_dim {
        return Err(Error::Core(qnms_core::Error::DimensionMismatch {
            what: "params visual_dim vs dataset features",
            expected: visual_dim,
            found: params.visual_dim(),
        }));
    }
    if params.word_dim() != word_dim {
        return Err(Error::Core(qnms_core::Error::DimensionMismatch {
            what: "params word_dim vs embedding table",
            expected: word_dim,
            found: params.word_dim(),
        }));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualLine {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: String,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLine {
    /// Index into the image's detections in detections.jsonl order.
    pub det_index: usize,
    pub rho: f64,
    pub label: u8,
    pub q: u8,
}

/// Foreground set and per-detection targets for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForegroundRecord {
    pub query_id: String,
    pub image_id: String,
    pub source: String,
    pub gamma: f64,
    pub delta: f64,
    pub nouns: Vec<String>,
    pub referent: Option<[f64; 4]>,
    pub contextual: Vec<ContextualLine>,
    pub targets: Vec<TargetLine>,
}

impl ForegroundRecord {
    pub fn foreground(&self) -> Result<ForegroundSet> {
        let referent = self.referent.map(BBox::from_array).transpose()?;
        let contextual = self
            .contextual
            .iter()
            .map(|c| {
                Ok(ContextualBox {
                    bbox: BBox::from_array(c.bbox)?,
                    label: c.label.clone(),
                    provenance: Provenance::parse(&c.provenance)
                        .ok_or_else(|| Error::Config(format!("unknown provenance {:?}", c.provenance)))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ForegroundSet { referent, contextual })
    }

    pub fn selection_and_targets(&self) -> (Vec<usize>, Vec<BoxTarget>) {
        self.targets
            .iter()
            .map(|t| {
                (
                    t.det_index,
                    BoxTarget {
                        rho: t.rho,
                        label: t.label,
                        q_value: t.q,
                    },
                )
            })
            .unzip()
    }
}

pub fn load_foreground(path: &Path) -> Result<Vec<ForegroundRecord>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredDetection {
    pub det_index: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: String,
    /// Detector confidence `c`.
    pub c: f64,
    /// Relatedness `r` (1 for the baseline).
    pub r: f64,
    /// Fused score `s = r * c`.
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredRecord {
    pub query_id: String,
    pub image_id: String,
    pub method: String,
    pub detections: Vec<FilteredDetection>,
}

pub fn load_filtered(path: &Path) -> Result<Vec<FilteredRecord>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

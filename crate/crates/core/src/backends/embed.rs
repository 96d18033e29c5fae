use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::ImageRef;

use super::cache::Recorder;
use super::images::ImageStore;
use super::transport::{HttpRequest, Transport};
use super::BackendError;

pub trait ImageEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Unit-norm vector of length [`dim`](Self::dim).
    fn embed(&self, image: &ImageRef) -> Result<Vec<f64>, BackendError>;
}

pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, BackendError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(BackendError::Decode("embedding has zero or non-finite norm".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Deterministic stand-in: a standard-normal vector drawn from a ChaCha8
/// stream seeded with the image's 32-byte digest, then normalized.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    dim: usize,
}

impl ToyEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        ToyEmbedder { dim }
    }
}

impl ImageEmbedder for ToyEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &ImageRef) -> Result<Vec<f64>, BackendError> {
        let mut seed = [0u8; 32];
        hex::decode_to_slice(image.sha256.as_str(), &mut seed).expect("content hash is 64 hex chars");
        let mut rng = ChaCha8Rng::from_seed(seed);
        let raw: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(raw)
    }
}

/// `POST {endpoint}` with `{"image_base64": ...}` → `{"embedding": [...]}`.
pub struct HttpEmbedder {
    endpoint: String,
    api_key: Option<String>,
    dim: usize,
    transport: Arc<dyn Transport>,
    images: Arc<ImageStore>,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        dim: usize,
        transport: Arc<dyn Transport>,
        images: Arc<ImageStore>,
    ) -> Self {
        HttpEmbedder { endpoint: endpoint.into(), api_key, dim, transport, images }
    }
}

impl ImageEmbedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &ImageRef) -> Result<Vec<f64>, BackendError> {
        let bytes = self.images.bytes(&image.sha256)?;
        let body = json!({ "image_base64": base64::engine::general_purpose::STANDARD.encode(bytes) });
        let resp = self
            .transport
            .send(HttpRequest::post_json(self.endpoint.clone(), &body).bearer(self.api_key.as_deref()))?
            .ok()?
            .json()?;
        let v: Vec<f64> = resp
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Decode("response has no `embedding`".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| BackendError::Decode("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if v.len() != self.dim {
            return Err(BackendError::Decode(format!("expected dimension {}, got {}", self.dim, v.len())));
        }
        normalize(v)
    }
}

pub struct RecordReplayEmbedder {
    id: String,
    dim: usize,
    inner: Option<Arc<dyn ImageEmbedder>>,
    recorder: Recorder,
}

impl RecordReplayEmbedder {
    pub fn new(id: impl Into<String>, dim: usize, inner: Option<Arc<dyn ImageEmbedder>>, recorder: Recorder) -> Self {
        RecordReplayEmbedder { id: id.into(), dim, inner, recorder }
    }
}

impl ImageEmbedder for RecordReplayEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, image: &ImageRef) -> Result<Vec<f64>, BackendError> {
        let req = json!({ "image": image.sha256.as_str(), "dim": self.dim });
        let (v, _): (Vec<f64>, _) = self.recorder.call(&self.id, "embed", &req, || {
            self.inner
                .as_ref()
                .ok_or_else(|| BackendError::BackendUnavailable(format!("embedder {} not configured", self.id)))?
                .embed(image)
        })?;
        Ok(v)
    }
}

/// Embedding sidecar: first line `{"dim": D}`, then one
/// `{"id": ..., "vector": [...]}` per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct Row {
    id: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<(), BackendError> {
        if v.len() != self.dim {
            return Err(BackendError::Decode(format!(
                "vector of length {} in a table of dimension {}",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn read(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path).map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let decode = |n: usize, e: &dyn std::fmt::Display| BackendError::Decode(format!("{}:{n}: {e}", path.display()));
        let header = lines.next().ok_or_else(|| decode(1, &"missing header"))?.map_err(|e| decode(1, &e))?;
        let Header { dim } = serde_json::from_str(&header).map_err(|e| decode(1, &e))?;
        let mut table = EmbeddingTable::new(dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| decode(i + 2, &e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line).map_err(|e| decode(i + 2, &e))?;
            table.insert(row.id, row.vector).map_err(|e| decode(i + 2, &e))?;
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", serde_json::to_string(&Header { dim: self.dim })?)?;
        for (id, v) in &self.vectors {
            writeln!(out, "{}", serde_json::to_string(&Row { id: id.clone(), vector: v.clone() })?)?;
        }
        out.flush()
    }
}

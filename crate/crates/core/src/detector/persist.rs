//! JSON model files.
//!
//! Top-level keys are `version`, `labels`, `weights` (one array per output
//! row), `centroids`, `radii`, `metadata` and `checksum`. The checksum is the
//! hex SHA-256 of the compact, key-sorted serialization of every other key.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{DetectorModel, ModelError, ModelMetadata};
use crate::boundary::ClassGeometry;
use crate::metric::Projection;
use crate::{util, Error};

pub const MODEL_VERSION: &str = "oodbound/1";

#[derive(Serialize, Deserialize)]
struct StoredMetadata {
    class_counts: Vec<usize>,
    #[serde(flatten)]
    model: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: String,
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    centroids: Vec<Vec<f64>>,
    radii: Vec<f64>,
    metadata: StoredMetadata,
}

fn checksum(body: &Value) -> String {
    let canonical = serde_json::to_vec(body).expect("JSON value serializes");
    hex::encode(Sha256::digest(&canonical))
}

impl DetectorModel {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let p = &self.projection;
        let doc = ModelDocument {
            version: MODEL_VERSION.to_string(),
            labels: self.geometry.iter().map(|g| g.label.clone()).collect(),
            weights: (0..p.dim_out()).map(|r| p.row(r).to_vec()).collect(),
            centroids: self.geometry.iter().map(|g| g.centroid.clone()).collect(),
            radii: self.geometry.iter().map(|g| g.radius).collect(),
            metadata: StoredMetadata {
                class_counts: self.geometry.iter().map(|g| g.count).collect(),
                model: self.metadata.clone(),
            },
        };
        let mut value = serde_json::to_value(&doc).expect("model serializes");
        let sum = checksum(&value);
        value
            .as_object_mut()
            .expect("document is an object")
            .insert("checksum".into(), Value::String(sum));
        let mut out = serde_json::to_vec_pretty(&value).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut value: Value =
            serde_json::from_slice(bytes).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| ModelError::Corrupt("top level is not an object".into()))?;
        match obj.get("version") {
            Some(Value::String(v)) if v == MODEL_VERSION => {}
            Some(Value::String(v)) => return Err(ModelError::Version(v.clone())),
            _ => return Err(ModelError::Corrupt("missing version".into())),
        }
        let stored = match obj.remove("checksum") {
            Some(Value::String(s)) => s,
            _ => return Err(ModelError::Corrupt("missing checksum".into())),
        };
        let computed = checksum(&value);
        if computed != stored {
            return Err(ModelError::Checksum { stored, computed });
        }
        let doc: ModelDocument =
            serde_json::from_value(value).map_err(|e| ModelError::Corrupt(e.to_string()))?;

        let k = doc.labels.len();
        if doc.centroids.len() != k || doc.radii.len() != k || doc.metadata.class_counts.len() != k {
            return Err(ModelError::Corrupt("per-class arrays have different lengths".into()));
        }
        let dim_out = doc.weights.len();
        let dim_in = doc.weights.first().map_or(0, Vec::len);
        if doc.weights.iter().any(|r| r.len() != dim_in) {
            return Err(ModelError::Corrupt("ragged weight matrix".into()));
        }
        let projection = Projection::new(dim_in, dim_out, doc.weights.concat())
            .map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let geometry = doc
            .labels
            .into_iter()
            .zip(doc.centroids)
            .zip(doc.radii)
            .zip(doc.metadata.class_counts)
            .map(|(((label, centroid), radius), count)| ClassGeometry {
                label,
                centroid,
                count,
                radius,
            })
            .collect();
        DetectorModel::new(projection, geometry, doc.metadata.model)
    }
}

/// Writes the model atomically; an interrupted save leaves no partial file.
pub fn save_model(model: &DetectorModel, path: &Path) -> Result<(), Error> {
    util::write_atomic(path, &model.to_json_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<DetectorModel, Error> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(DetectorModel::from_json_bytes(&bytes)?)
}

//! The deployable detector: projection, per-class centroids and radii, and
//! the nearest-centroid decision rule.
//!
//! A query is projected, matched to the nearest centroid under the
//! normalized Euclidean distance, and accepted as that class only when it
//! falls inside that class's radius. Everything else is [`OOD_LABEL`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{self, BoundaryParams, ClassGeometry, RadiusFit, MAX_DISTANCE};
use crate::data::{DataError, Dataset, OOD_LABEL};
use crate::metric::{self, Projection, TrainConfig, TrainReport};
use crate::util;

mod persist;

pub use persist::{load_model, save_model, MODEL_VERSION};

/// Distances closer than this count as tied; ties go to the lower class
/// index.
pub const TIE_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input projects to the zero vector")]
    ZeroNormProjection,
    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<ModelError>,
    },
    #[error("unsupported model format version `{0}` (expected `{MODEL_VERSION}`)")]
    Version(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model checksum mismatch (file says {stored}, contents hash to {computed})")]
    Checksum { stored: String, computed: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Provenance recorded alongside the fitted parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format_version: String,
    pub dataset_fingerprint: String,
    pub train_config: TrainConfig,
    pub boundary_params: BoundaryParams,
    pub train_report: TrainReport,
    pub radius_fits: Vec<RadiusFit>,
}

/// Outcome of classifying one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Nearest class when inside its radius, otherwise [`OOD_LABEL`].
    pub label: String,
    pub nearest_label: String,
    /// Normalized Euclidean distance to the nearest centroid.
    pub distance: f64,
    /// Radius of the nearest class minus `distance`.
    pub margin: f64,
}

impl Prediction {
    pub fn is_ood(&self) -> bool {
        self.label == OOD_LABEL
    }
}

#[derive(Clone, Debug)]
pub struct DetectorModel {
    projection: Projection,
    geometry: Vec<ClassGeometry>,
    metadata: ModelMetadata,
    unit_centroids: Vec<Vec<f64>>,
}

impl PartialEq for DetectorModel {
    fn eq(&self, other: &Self) -> bool {
        self.projection == other.projection
            && self.geometry == other.geometry
            && self.metadata == other.metadata
    }
}

impl DetectorModel {
    pub fn new(
        projection: Projection,
        geometry: Vec<ClassGeometry>,
        metadata: ModelMetadata,
    ) -> Result<Self, ModelError> {
        if geometry.len() < 2 {
            return Err(ModelError::Invalid(format!(
                "a model needs at least 2 classes, got {}",
                geometry.len()
            )));
        }
        for g in &geometry {
            if g.centroid.len() != projection.dim_out() {
                return Err(ModelError::Invalid(format!(
                    "centroid of `{}` has dimension {}, projection outputs {}",
                    g.label,
                    g.centroid.len(),
                    projection.dim_out()
                )));
            }
            if !(0.0..=MAX_DISTANCE).contains(&g.radius) {
                return Err(ModelError::Invalid(format!("radius {} of `{}` outside [0, 2]", g.radius, g.label)));
            }
            if g.count == 0 || g.centroid.iter().any(|c| !c.is_finite()) {
                return Err(ModelError::Invalid(format!("class `{}` has no examples or a non-finite centroid", g.label)));
            }
        }
        let unit_centroids = boundary::unit_centroids(&geometry)
            .map_err(|_| ModelError::Invalid("zero-norm centroid".into()))?;
        Ok(DetectorModel {
            projection,
            geometry,
            metadata,
            unit_centroids,
        })
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn geometry(&self) -> &[ClassGeometry] {
        &self.geometry
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn labels(&self) -> Vec<&str> {
        self.geometry.iter().map(|g| g.label.as_str()).collect()
    }

    pub fn dim_in(&self) -> usize {
        self.projection.dim_in()
    }

    /// Copy with one class's radius replaced.
    pub fn with_radius(&self, class: usize, radius: f64) -> Result<Self, ModelError> {
        let mut geometry = self.geometry.clone();
        geometry
            .get_mut(class)
            .ok_or_else(|| ModelError::Invalid(format!("no class {class}")))?
            .radius = radius;
        DetectorModel::new(self.projection.clone(), geometry, self.metadata.clone())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ModelError> {
        if x.len() != self.projection.dim_in() {
            return Err(ModelError::DimensionMismatch {
                expected: self.projection.dim_in(),
                found: x.len(),
            });
        }
        let z = self.projection.apply_unchecked(x);
        let (u, _) = util::unit(&z).ok_or(ModelError::ZeroNormProjection)?;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.unit_centroids.iter().enumerate() {
            let d = util::euclid(&u, c);
            if d < best_d - TIE_TOLERANCE {
                best = i;
                best_d = d;
            }
        }
        let g = &self.geometry[best];
        let margin = g.radius - best_d;
        Ok(Prediction {
            label: if margin >= 0.0 { g.label.clone() } else { OOD_LABEL.to_string() },
            nearest_label: g.label.clone(),
            distance: best_d,
            margin,
        })
    }

    pub fn predict_batch<V: AsRef<[f64]>>(&self, xs: &[V]) -> Result<Vec<Prediction>, ModelError> {
        xs.iter()
            .enumerate()
            .map(|(index, x)| {
                self.predict(x.as_ref()).map_err(|e| ModelError::AtIndex {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

/// Trains the projection, then fits centroids and radii on the projected
/// training data.
pub fn fit(
    train: &Dataset,
    train_config: &TrainConfig,
    boundary_params: &BoundaryParams,
) -> Result<DetectorModel, crate::Error> {
    train.require_no_ood()?;
    if train.labels().len() < 2 {
        return Err(DataError::TooFewClasses(train.labels().len()).into());
    }
    boundary_params.validate()?;
    let (projection, train_report) = metric::train(train, train_config)?;
    let projected: Vec<(Vec<f64>, usize)> = train
        .indexed()
        .into_iter()
        .map(|(x, c)| (projection.apply_unchecked(x), c))
        .collect();
    let (geometry, radius_fits) = boundary::fit_boundaries(&projected, train.labels(), boundary_params)?;
    let metadata = ModelMetadata {
        format_version: MODEL_VERSION.to_string(),
        dataset_fingerprint: train.fingerprint(),
        train_config: train_config.clone(),
        boundary_params: boundary_params.clone(),
        train_report,
        radius_fits,
    };
    Ok(DetectorModel::new(projection, geometry, metadata)?)
}

//! Versioned JSON model documents.
//!
//! ```json
//! { "format": "frostroute-knn", "version": 1, "task": "classify", "k": 5,
//!   "feature_list": ["ta_c", ...],
//!   "standardizer": { "mean": [...], "stddev": [...] },
//!   "points": [ { "x": [...], "state": "Wet", "target": 0.5 } ],
//!   "metadata": { "created_at": "...", "training_row_count": 500, "seed": 7 } }
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelMetadata, Standardizer, Task, TrainedModel, TrainingPoint};
use crate::scalar::Scalar;
use crate::weather::FeatureList;

pub const MODEL_FORMAT: &str = "frostroute-knn";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct ModelDocument<T> {
    format: String,
    version: u32,
    task: Task,
    k: usize,
    feature_list: FeatureList,
    standardizer: Standardizer<T>,
    points: Vec<TrainingPoint<T>>,
    metadata: ModelMetadata,
}

pub fn save_model<T: Scalar, W: Write>(model: &TrainedModel<T>, sink: W) -> Result<(), ModelError> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        task: model.task,
        k: model.k,
        feature_list: model.feature_list.clone(),
        standardizer: model.standardizer.clone(),
        points: model.points.clone(),
        metadata: model.metadata.clone(),
    };
    serde_json::to_writer_pretty(sink, &doc).map_err(|e| ModelError::Load(e.to_string()))
}

pub fn load_model<T: Scalar, R: Read>(source: R) -> Result<TrainedModel<T>, ModelError> {
    let doc: ModelDocument<T> = serde_json::from_reader(source).map_err(|e| ModelError::Load(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(ModelError::Load(format!("field `format`: expected `{MODEL_FORMAT}`, got `{}`", doc.format)));
    }
    if doc.version != MODEL_VERSION {
        return Err(ModelError::Load(format!(
            "field `version`: unsupported version {}, expected {MODEL_VERSION}",
            doc.version
        )));
    }
    if doc.k == 0 {
        return Err(ModelError::Load("field `k`: k ≥ 1 required".into()));
    }
    if doc.points.is_empty() {
        return Err(ModelError::Load("field `points`: must not be empty".into()));
    }
    if let Some(s) = doc.standardizer.stddev.iter().find(|s| **s <= T::zero() || s.is_nan()) {
        return Err(ModelError::Load(format!("field `standardizer.stddev`: {s} is not positive")));
    }
    TrainedModel::from_parts(doc.feature_list, doc.standardizer, doc.points, doc.k, doc.task, doc.metadata)
        .map_err(|e| ModelError::Load(format!("field `points`: {e}")))
}

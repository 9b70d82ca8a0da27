//! k-nearest-neighbour road-state classifier and safety-metric regressor.
//!
//! Features are standardized with population statistics; neighbours are
//! found by Euclidean distance in standardized space. Every point tied at
//! the k-th distance joins the neighbour set, so results do not depend on
//! training order.

mod eval;
mod kdtree;
mod persist;
mod split;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::RoadState;
use crate::safety::{RateTables, SafetyError};
use crate::scalar::{cmp, Scalar};
use crate::weather::{FeatureList, FeatureRow};

pub use eval::{evaluate_classifier, evaluate_regressor, macro_f1, EvalReport};
pub use kdtree::{squared_distance, KdTree, Neighbor};
pub use persist::{load_model, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use split::{split_dataset, split_indices, split_key, splitmix64, test_size};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no training rows")]
    Empty,
    #[error("feature vector has {got} entries, expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("model task is {actual:?}, operation needs {needed:?}")]
    WrongTask { needed: Task, actual: Task },
    #[error("k must satisfy k ≥ 1")]
    InvalidK,
    #[error("test fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("need at least 2 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("row {0} lacks a state or friction label")]
    Unlabeled(usize),
    #[error("row {row}: {source}")]
    Target { row: usize, source: SafetyError },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("model document: {0}")]
    Load(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Regress,
}

/// Per-feature mean and population standard deviation. Constant features
/// get a deviation of 1 so they contribute nothing to distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub stddev: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, ModelError> {
        let first = rows.first().ok_or(ModelError::Empty)?;
        let width = first.as_ref().len();
        if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != width) {
            return Err(ModelError::WidthMismatch {
                expected: width,
                got: bad.as_ref().len(),
            });
        }
        let n = T::lit(rows.len() as f64);
        let mut mean = vec![T::zero(); width];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.as_ref()) {
                *m = *m + *x;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut var = vec![T::zero(); width];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                let d = *x - *m;
                *v = *v + d * d;
            }
        }
        let stddev = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > T::zero() && s.is_finite() {
                    s
                } else {
                    T::one()
                }
            })
            .collect();
        Ok(Self { mean, stddev })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[T]) -> Result<Vec<T>, ModelError> {
        if x.len() != self.mean.len() {
            return Err(ModelError::WidthMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.stddev)
            .map(|((v, m), s)| (*v - *m) / *s)
            .collect())
    }
}

/// Labeled training or evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub state: RoadState,
    /// Safety metric of the measured friction and state.
    pub target: T,
}

/// Converts joined rows into samples whose target is the safety metric of
/// each row's measured friction and state.
pub fn samples_from_rows<T: Scalar>(rows: &[FeatureRow], tables: &RateTables<T>) -> Result<Vec<Sample<T>>, ModelError> {
    rows.iter()
        .map(|r| {
            let (Some(state), Some(f)) = (r.label_state, r.label_friction) else {
                return Err(ModelError::Unlabeled(r.record));
            };
            let target = tables
                .safety_metric(T::lit(f), state)
                .map_err(|source| ModelError::Target { row: r.record, source })?;
            Ok(Sample {
                features: r.features.iter().map(|&x| T::lit(x)).collect(),
                state,
                target,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint<T> {
    /// Standardized features.
    pub x: Vec<T>,
    pub state: RoadState,
    pub target: T,
}

impl<T> AsRef<[T]> for TrainingPoint<T> {
    fn as_ref(&self) -> &[T] {
        &self.x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub created_at: DateTime<Utc>,
    pub training_row_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatePrediction {
    pub state: RoadState,
    pub votes: BTreeMap<RoadState, usize>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub feature_list: FeatureList,
    pub standardizer: Standardizer<T>,
    pub points: Vec<TrainingPoint<T>>,
    pub k: usize,
    pub task: Task,
    pub metadata: ModelMetadata,
    tree: KdTree,
}

impl<T: Scalar> PartialEq for TrainedModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.feature_list == other.feature_list
            && self.standardizer == other.standardizer
            && self.points == other.points
            && self.k == other.k
            && self.task == other.task
            && self.metadata == other.metadata
    }
}

impl<T: Scalar> TrainedModel<T> {
    pub fn fit(samples: &[Sample<T>], feature_list: FeatureList, k: usize, task: Task, seed: u64) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::InvalidK);
        }
        if samples.is_empty() {
            return Err(ModelError::Empty);
        }
        if let Some(bad) = samples.iter().find(|s| s.features.len() != feature_list.len()) {
            return Err(ModelError::WidthMismatch {
                expected: feature_list.len(),
                got: bad.features.len(),
            });
        }
        let raw: Vec<&[T]> = samples.iter().map(|s| s.features.as_slice()).collect();
        let standardizer = Standardizer::fit(&raw)?;
        let points = samples
            .iter()
            .map(|s| {
                Ok(TrainingPoint {
                    x: standardizer.transform(&s.features)?,
                    state: s.state,
                    target: s.target,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let metadata = ModelMetadata {
            created_at: Utc::now(),
            training_row_count: samples.len(),
            seed,
        };
        Self::from_parts(feature_list, standardizer, points, k, task, metadata)
    }

    /// Assembles a model from stored parts, checking every invariant.
    pub fn from_parts(
        feature_list: FeatureList,
        standardizer: Standardizer<T>,
        points: Vec<TrainingPoint<T>>,
        k: usize,
        task: Task,
        metadata: ModelMetadata,
    ) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::InvalidK);
        }
        if points.is_empty() {
            return Err(ModelError::Empty);
        }
        let width = feature_list.len();
        if standardizer.mean.len() != width || standardizer.stddev.len() != width {
            return Err(ModelError::WidthMismatch {
                expected: width,
                got: standardizer.mean.len().max(standardizer.stddev.len()),
            });
        }
        if let Some(bad) = points.iter().find(|p| p.x.len() != width) {
            return Err(ModelError::WidthMismatch {
                expected: width,
                got: bad.x.len(),
            });
        }
        let tree = KdTree::build(&points);
        Ok(Self {
            feature_list,
            standardizer,
            points,
            k,
            task,
            metadata,
            tree,
        })
    }

    /// Same points and statistics with a different `k`.
    pub fn with_k(&self, k: usize) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::InvalidK);
        }
        Ok(Self { k, ..self.clone() })
    }

    /// Neighbour set of a raw (unstandardized) query.
    pub fn neighbors(&self, x: &[T]) -> Result<Vec<Neighbor<T>>, ModelError> {
        let q = self.standardizer.transform(x)?;
        Ok(self.tree.k_nearest_with_ties(&self.points, &q, self.k))
    }

    fn require(&self, needed: Task) -> Result<(), ModelError> {
        if self.task == needed {
            Ok(())
        } else {
            Err(ModelError::WrongTask {
                needed,
                actual: self.task,
            })
        }
    }

    /// Majority vote over the neighbour set. Vote ties go to the class of
    /// the nearest neighbour among the tied classes, then to the lower
    /// state code.
    pub fn predict_state(&self, x: &[T]) -> Result<StatePrediction, ModelError> {
        self.require(Task::Classify)?;
        let nb = self.neighbors(x)?;
        Ok(vote(nb.iter().map(|n| (n.dist2, self.points[n.index].state))))
    }

    /// Mean target of the neighbour set, summed in `(distance, target)`
    /// order.
    pub fn predict_value(&self, x: &[T]) -> Result<T, ModelError> {
        self.require(Task::Regress)?;
        let nb = self.neighbors(x)?;
        Ok(mean_target(nb.iter().map(|n| (n.dist2, self.points[n.index].target))))
    }
}

/// Vote over `(dist2, state)` pairs with the documented tie rules.
pub fn vote<T: Scalar>(neighbors: impl IntoIterator<Item = (T, RoadState)>) -> StatePrediction {
    let mut counts = [0usize; 6];
    let mut nearest = [T::infinity(); 6];
    for (d, s) in neighbors {
        counts[s.index()] += 1;
        if d < nearest[s.index()] {
            nearest[s.index()] = d;
        }
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let state = RoadState::ALL
        .into_iter()
        .filter(|s| counts[s.index()] == top && top > 0)
        .min_by(|a, b| cmp(nearest[a.index()], nearest[b.index()]).then(a.code().cmp(&b.code())))
        .unwrap_or(RoadState::Dry);
    StatePrediction {
        state,
        votes: RoadState::ALL
            .into_iter()
            .filter(|s| counts[s.index()] > 0)
            .map(|s| (s, counts[s.index()]))
            .collect(),
    }
}

/// Mean of `(dist2, target)` targets in canonical order.
pub fn mean_target<T: Scalar>(neighbors: impl IntoIterator<Item = (T, T)>) -> T {
    let mut v: Vec<(T, T)> = neighbors.into_iter().collect();
    v.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));
    let n = T::lit(v.len() as f64);
    v.iter().fold(T::zero(), |acc, (_, t)| acc + *t) / n
}

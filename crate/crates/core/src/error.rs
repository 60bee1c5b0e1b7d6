use thiserror::Error;

use crate::graph::GraphError;
use crate::model::ModelError;

/// Errors raised by decomposition and the inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("clique with {states:.0} joint states exceeds the table cap of {cap}")]
    TableCapacity { states: f64, cap: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

impl InferenceError {
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            InferenceError::TableCapacity { .. }
                | InferenceError::Model(ModelError::EnumerationCapacity { .. })
        )
    }
}

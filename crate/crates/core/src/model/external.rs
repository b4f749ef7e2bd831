//! Registry for classifier backends implemented outside this crate, such as
//! contextual transformer models.

use std::collections::HashMap;
use std::fmt::Debug;
use std::sync::{Arc, Mutex, OnceLock};

use super::embeddings::EmbeddingTable;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::transform::TransformedInstance;

/// A trained external model. `scores` returns one row of `label_set.len()`
/// class scores per instance, in label-set order.
pub trait ExternalModel: Debug + Send + Sync {
    fn scores(&self, instances: &[TransformedInstance]) -> Vec<Vec<f64>>;

    /// Epochs run and best dev score, when the backend tracks them.
    fn training_summary(&self) -> Option<(usize, f64)> {
        None
    }
}

pub trait ExternalBackend: Send + Sync {
    fn train(
        &self,
        train: &[TransformedInstance],
        dev: &[TransformedInstance],
        label_set: &[String],
        embeddings: &EmbeddingTable,
        config: &TrainConfig,
    ) -> Result<Arc<dyn ExternalModel>>;
}

type Registry = Mutex<HashMap<String, Arc<dyn ExternalBackend>>>;

fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Default::default)
}

/// Registers `backend` under `name`, replacing any previous entry.
pub fn register_backend(name: &str, backend: Arc<dyn ExternalBackend>) {
    registry()
        .lock()
        .expect("registry lock")
        .insert(name.to_owned(), backend);
}

pub fn registered_backend(name: &str) -> Result<Arc<dyn ExternalBackend>> {
    registry()
        .lock()
        .expect("registry lock")
        .get(name)
        .cloned()
        .ok_or_else(|| Error::InvalidConfig(format!("no external backend registered as `{name}`")))
}

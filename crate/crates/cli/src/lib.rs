//! Service layer over `oasis-core`: a background job runner, an HTTP API
//! and the shared state both operate on.

pub mod api;
pub mod error;
pub mod exec;
pub mod jobs;
pub mod layout;

use std::path::PathBuf;
use std::sync::Arc;

use oasis_core::assess::ratings::RatingStore;
use oasis_core::CorpusStore;

pub use error::{ApiError, ApiResult};
pub use exec::JobSpec;
pub use jobs::{Job, JobKind, JobManager, JobState};

/// Everything persisted under one data root.
pub struct App {
    pub store: CorpusStore,
    pub pipelines: layout::Collection,
    pub recipes: layout::Collection,
    pub ratings: RatingStore,
}

impl App {
    pub fn open(root: impl Into<PathBuf>) -> ApiResult<Arc<Self>> {
        let store = CorpusStore::open(root)?;
        let root = store.root().to_path_buf();
        Ok(Arc::new(App {
            pipelines: layout::Collection::open(root.join("pipelines"), "pl")?,
            recipes: layout::Collection::open(root.join("recipes"), "rc")?,
            ratings: RatingStore::for_store(&store)?,
            store,
        }))
    }
}

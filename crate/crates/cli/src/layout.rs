//! Where the service keeps its own artifacts under the data root, and the
//! saved-config collections (pipelines, recipes).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use oasis_core::corpus::validate_name;
use oasis_core::CorpusStore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

pub const JOBS_FILE: &str = "jobs.json";

/// Relative path of a trained n-gram model.
pub fn lm_model_rel(name: &str) -> String {
    format!("models/lm/{name}.lm")
}

/// Relative path of the perplexity scores of `corpus` under `model`.
pub fn lm_scores_rel(model: &str, corpus: &str) -> String {
    format!("lm/scores/{model}/{corpus}.jsonl")
}

pub fn lm_scores_dir(store: &CorpusStore, model: &str) -> PathBuf {
    store.root().join("lm/scores").join(model)
}

pub fn classifier_rel(name: &str) -> String {
    format!("models/quality/{name}.bin")
}

pub fn abs(store: &CorpusStore, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        store.root().join(p)
    }
}

fn io(path: &Path, e: std::io::Error) -> ApiError {
    oasis_core::Error::io(path, e).into()
}

/// A saved config with its assigned id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saved<T> {
    pub id: String,
    #[serde(flatten)]
    pub value: T,
}

/// JSON documents stored one per file as `<dir>/<id>.json`. Ids are
/// `<prefix>-<n>` with `n` counting up from the largest existing id.
pub struct Collection {
    dir: PathBuf,
    prefix: &'static str,
    lock: Mutex<()>,
}

impl Collection {
    pub fn open(dir: PathBuf, prefix: &'static str) -> ApiResult<Self> {
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Collection {
            dir,
            prefix,
            lock: Mutex::new(()),
        })
    }

    fn path(&self, id: &str) -> ApiResult<PathBuf> {
        validate_name(id)?;
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn ids(&self) -> ApiResult<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| io(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json").map(str::to_string))
            .collect();
        ids.sort_by_key(|id| (self.number(id).unwrap_or(u64::MAX), id.clone()));
        Ok(ids)
    }

    fn number(&self, id: &str) -> Option<u64> {
        id.strip_prefix(self.prefix)?.strip_prefix('-')?.parse().ok()
    }

    fn write<T: Serialize>(&self, id: &str, value: &T) -> ApiResult<()> {
        let path = self.path(id)?;
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(value).map_err(oasis_core::Error::from)?;
        fs::write(&tmp, body).map_err(|e| io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io(&path, e))
    }

    pub fn create<T: Serialize>(&self, value: &T) -> ApiResult<String> {
        let _g = self.lock.lock().unwrap();
        let next = self.ids()?.iter().filter_map(|id| self.number(id)).max().map_or(1, |n| n + 1);
        let id = format!("{}-{next}", self.prefix);
        self.write(&id, value)?;
        Ok(id)
    }

    pub fn put<T: Serialize>(&self, id: &str, value: &T) -> ApiResult<()> {
        let _g = self.lock.lock().unwrap();
        if !self.path(id)?.exists() {
            return Err(ApiError::not_found(id));
        }
        self.write(id, value)
    }

    pub fn get<T: DeserializeOwned>(&self, id: &str) -> ApiResult<T> {
        let path = self.path(id)?;
        match fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes).map_err(oasis_core::Error::from)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::not_found(id)),
            Err(e) => Err(io(&path, e)),
        }
    }

    pub fn delete(&self, id: &str) -> ApiResult<()> {
        let _g = self.lock.lock().unwrap();
        let path = self.path(id)?;
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::not_found(id)),
            Err(e) => Err(io(&path, e)),
        }
    }

    pub fn list<T: DeserializeOwned>(&self) -> ApiResult<Vec<Saved<T>>> {
        self.ids()?.into_iter().map(|id| Ok(Saved { value: self.get(&id)?, id })).collect()
    }
}

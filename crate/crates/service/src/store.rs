//! Named, immutable models shared by sessions and jobs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use botdyn::models::AnyModel;
use botdyn::Discriminant;
use serde::Serialize;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct ModelInfo {
    pub id: String,
    pub kind: String,
    pub hash: String,
    pub symbols: Vec<String>,
    pub context: usize,
}

#[derive(Debug, Default)]
pub struct ModelStore {
    models: RwLock<BTreeMap<String, Arc<AnyModel>>>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, id: impl Into<String>, model: AnyModel) -> Arc<AnyModel> {
        let m = Arc::new(model);
        self.models.write().expect("model store poisoned").insert(id.into(), m.clone());
        m
    }

    /// Loads one model file under its file stem.
    pub fn load_file(&self, path: &Path) -> ApiResult<String> {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| ApiError::bad_request(format!("bad model path {}", path.display())))?
            .to_string();
        self.insert(id.clone(), AnyModel::load(path)?);
        Ok(id)
    }

    /// Loads every `*.model` file in `dir`.
    pub fn load_dir(&self, dir: &Path) -> ApiResult<Vec<String>> {
        let entries = std::fs::read_dir(dir).map_err(|e| ApiError::new(500, "io", format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "model"))
            .collect();
        paths.sort();
        paths.iter().map(|p| self.load_file(p)).collect()
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<AnyModel>> {
        self.models
            .read()
            .expect("model store poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no model {id:?}")))
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.models
            .read()
            .expect("model store poisoned")
            .iter()
            .map(|(id, m)| ModelInfo {
                id: id.clone(),
                kind: m.kind().as_str().into(),
                hash: m.model_hash(),
                symbols: m.alphabet().symbols().to_vec(),
                context: m.context_len(),
            })
            .collect()
    }
}

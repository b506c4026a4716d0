//! Mutant records: a mutated model plus the provenance needed to
//! regenerate or audit it. Each mutant persists as a `.nmm` model next to
//! a small `.meta.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{load_model, model_checksum, save_model, TrainedModel, MODEL_EXTENSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutationLevel {
    /// Mutated training data or training spec, then retrained.
    Source,
    /// Mutated trained model directly.
    Model,
}

/// Provenance of one mutant; the sidecar file is exactly this struct.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MutantMeta {
    pub id: String,
    pub level: MutationLevel,
    /// Operator short code (DR, LE, DM, DF, NP, LR, LA, AFR, GF, WS, NEB,
    /// NAI, NS, LD).
    pub operator: String,
    /// Data-operator scope: "global" or "local:<class>".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub seed: u64,
    /// Checksum of the model the mutant derives from.
    pub parent_checksum: u32,
    /// Checksum of the mutant's own parameters.
    pub checksum: u32,
    /// Number of affected positions (weights, neurons, samples) where the
    /// operator counts them; layer operators record the target instead.
    pub affected: usize,
    /// Free-form operator detail, e.g. the target layer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// A mutant model with its provenance.
#[derive(Debug, Clone)]
pub struct MutantRecord {
    pub meta: MutantMeta,
    pub model: TrainedModel,
}

impl MutantRecord {
    pub fn new(mut meta: MutantMeta, model: TrainedModel) -> Self {
        meta.checksum = model_checksum(&model);
        Self { meta, model }
    }

    /// Write `<id>.nmm` and `<id>.meta.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        let model_path = dir.join(format!("{}.{MODEL_EXTENSION}", self.meta.id));
        let meta_path = dir.join(format!("{}.meta.json", self.meta.id));
        save_model(&self.model, &model_path)?;
        let text = serde_json::to_string_pretty(&self.meta)
            .expect("meta serialization cannot fail");
        fs::write(&meta_path, text).map_err(|e| Error::io(meta_path.display().to_string(), e))?;
        Ok((model_path, meta_path))
    }
}

/// A mutant that could not be produced; generation continues past these.
#[derive(Debug, Clone)]
pub struct MutantFailure {
    pub operator: String,
    pub seed: u64,
    pub reason: String,
}

/// Outcome of a generation batch.
#[derive(Debug, Clone, Default)]
pub struct GenerationOutcome {
    pub mutants: Vec<MutantRecord>,
    pub failures: Vec<MutantFailure>,
    /// Operators that ran out of eligible targets before filling their
    /// budget, with the shortfall.
    pub shortfalls: Vec<(String, usize)>,
}

impl GenerationOutcome {
    pub fn merge(&mut self, other: GenerationOutcome) {
        self.mutants.extend(other.mutants);
        self.failures.extend(other.failures);
        self.shortfalls.extend(other.shortfalls);
    }
}

/// Load every `<id>.nmm` + `<id>.meta.json` pair from a mutant directory,
/// sorted by id for stable downstream ordering.
pub fn load_mutants(dir: impl AsRef<Path>) -> Result<Vec<MutantRecord>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut records = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(MODEL_EXTENSION) {
            continue;
        }
        let meta_path = path.with_extension("meta.json");
        let meta_text = fs::read_to_string(&meta_path)
            .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
        let meta: MutantMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::MalformedManifest(format!("{}: {e}", meta_path.display())))?;
        let model = load_model(&path)?;
        let checksum = model_checksum(&model);
        if checksum != meta.checksum {
            return Err(Error::ChecksumMismatch {
                stored: meta.checksum,
                computed: checksum,
            });
        }
        records.push(MutantRecord { meta, model });
    }
    records.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
    Ok(records)
}

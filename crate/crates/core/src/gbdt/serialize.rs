use serde::{Deserialize, Serialize};

use super::tree::Tree;
use super::{GbdtError, Model, TrainParams};

pub const FORMAT_NAME: &str = "sentibar-gbdt";
pub const FORMAT_VERSION: u32 = 1;

/// On-disk form of a [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub params: TrainParams,
    pub schema_hash: String,
    pub n_features: usize,
    pub best_round: usize,
    pub trees: Vec<Tree>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

impl Model {
    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            params: self.params.clone(),
            schema_hash: self.schema_hash.clone(),
            n_features: self.n_features,
            best_round: self.best_round,
            trees: self.trees.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("model documents always serialize");
        s.push('\n');
        s
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, GbdtError> {
        if doc.format != FORMAT_NAME {
            return Err(GbdtError::Format(doc.format));
        }
        if doc.version != FORMAT_VERSION {
            return Err(GbdtError::Version {
                found: doc.version,
                expected: FORMAT_VERSION,
            });
        }
        doc.params.validate()?;
        if doc.schema_hash.is_empty() {
            return Err(GbdtError::Corrupt("empty schema hash".into()));
        }
        if doc.trees.len() > doc.params.n_estimators {
            return Err(GbdtError::Corrupt(format!(
                "{} trees exceed n_estimators {}",
                doc.trees.len(),
                doc.params.n_estimators
            )));
        }
        if doc.best_round > doc.trees.len() {
            return Err(GbdtError::Corrupt(format!(
                "best_round {} exceeds tree count {}",
                doc.best_round,
                doc.trees.len()
            )));
        }
        for (i, t) in doc.trees.iter().enumerate() {
            t.validate(doc.n_features, doc.params.max_depth)
                .map_err(|m| GbdtError::Corrupt(format!("tree {i}: {m}")))?;
        }
        Ok(Self {
            params: doc.params,
            trees: doc.trees,
            schema_hash: doc.schema_hash,
            n_features: doc.n_features,
            best_round: doc.best_round,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GbdtError> {
        // check the header first so old or foreign documents get a clear error
        let header: Header = serde_json::from_str(text)?;
        if header.format != FORMAT_NAME {
            return Err(GbdtError::Format(header.format));
        }
        if header.version != FORMAT_VERSION {
            return Err(GbdtError::Version {
                found: header.version,
                expected: FORMAT_VERSION,
            });
        }
        Self::from_document(serde_json::from_str(text)?)
    }
}

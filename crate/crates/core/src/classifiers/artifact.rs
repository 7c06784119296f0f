//! Self-describing JSON model artifact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Model, ModelSpec, ProbabilisticClassifier};
use crate::dataset::{LabelEncoder, Scaler};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// Everything needed to score raw samples: scaler, encoder and fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub encoder: LabelEncoder,
    pub feature_names: Vec<String>,
    pub scaler: Scaler,
    pub model: Model,
}

impl ModelArtifact {
    pub fn new(
        spec: ModelSpec,
        encoder: LabelEncoder,
        feature_names: Vec<String>,
        scaler: Scaler,
        model: Model,
    ) -> Self {
        Self {
            format_version: ARTIFACT_FORMAT_VERSION,
            spec,
            encoder,
            feature_names,
            scaler,
            model,
        }
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), ClassifierError> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ClassifierError> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        match value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(ARTIFACT_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(ClassifierError::Artifact(format!(
                    "format version {v}, this build reads {ARTIFACT_FORMAT_VERSION}"
                )))
            }
            None => return Err(ClassifierError::Artifact("missing format_version".into())),
        }
        let artifact: Self = serde_json::from_value(value)?;
        artifact.check()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.to_writer(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    fn check(&self) -> Result<(), ClassifierError> {
        let d = self.model.n_features();
        if self.scaler.width() != d || self.feature_names.len() != d {
            return Err(ClassifierError::Artifact(format!(
                "model expects {d} features, scaler has {}, names {}",
                self.scaler.width(),
                self.feature_names.len()
            )));
        }
        if self.encoder.len() != self.model.n_classes() {
            return Err(ClassifierError::Artifact(format!(
                "encoder has {} classes, model {}",
                self.encoder.len(),
                self.model.n_classes()
            )));
        }
        Ok(())
    }
}

//! Trained-model checkpoints as a single JSON document.
//!
//! Parameters are stored by name in sorted order with their shape and
//! row-major values. Floats use shortest round-trip decimal formatting, so a
//! checkpoint reloads bit-exactly and identical runs write identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetVocab, FeatureSchema, SplitSpec, StandardizerStats};
use crate::model::{ModelConfig, ModelParameters};
use crate::numeric::Matrix;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model_config: ModelConfig,
    pub vocab: DatasetVocab,
    pub schema: FeatureSchema,
    pub split: SplitSpec,
    pub standardizer: StandardizerStats,
    pub parameters: BTreeMap<String, Tensor>,
    pub best_epoch: Option<usize>,
    pub seed: u64,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model_config: ModelConfig,
        vocab: DatasetVocab,
        schema: FeatureSchema,
        split: SplitSpec,
        standardizer: StandardizerStats,
        params: &ModelParameters,
        best_epoch: Option<usize>,
        seed: u64,
    ) -> Self {
        let parameters = params
            .tensors()
            .into_iter()
            .map(|(name, m)| {
                let (r, c) = m.shape();
                (
                    name.to_string(),
                    Tensor {
                        shape: [r, c],
                        values: m.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            model_config,
            vocab,
            schema,
            split,
            standardizer,
            parameters,
            best_epoch,
            seed,
        }
    }

    /// Rebuild the parameter set, checking names, shapes and finiteness.
    pub fn parameters(&self) -> Result<ModelParameters> {
        let mut params = ModelParameters::zeros(&self.model_config);
        if self.parameters.len() != params.tensors().len() {
            return Err(Error::Data(format!(
                "checkpoint has {} parameter arrays, expected {}",
                self.parameters.len(),
                params.tensors().len()
            )));
        }
        for (name, slot) in params.tensors_mut() {
            let t = self
                .parameters
                .get(name)
                .ok_or_else(|| Error::Data(format!("checkpoint is missing parameter {name}")))?;
            let m = Matrix::new(t.shape[0], t.shape[1], t.values.clone())?;
            if m.shape() != slot.shape() {
                return Err(Error::shape(name, slot.shape_str(), m.shape_str()));
            }
            *slot = m;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::in_file(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::in_file(path, e.to_string()))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| Error::in_file(path, e.to_string()))?;
        if ck.schema_version != SCHEMA_VERSION {
            return Err(Error::in_file(
                path,
                format!("unsupported checkpoint schema_version {}", ck.schema_version),
            ));
        }
        ck.model_config.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::data::fit_standardizer;
    use crate::model::init_parameters;

    fn sample_checkpoint() -> Checkpoint {
        let ds = synth_generate(4, 5, 3).unwrap();
        let mut cfg = ModelConfig::with_defaults(ds.schema.width(), ds.vocab.sizes());
        cfg.hidden_size = 3;
        let params = init_parameters(&cfg, 11).unwrap();
        Checkpoint::new(
            cfg,
            ds.vocab.clone(),
            ds.schema.clone(),
            ds.split,
            fit_standardizer(&ds).unwrap(),
            &params,
            Some(2),
            11,
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.parameters().unwrap(), ck.parameters().unwrap());
        assert_eq!(back.to_json().unwrap(), std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn parameters_in_sorted_order() {
        let ck = sample_checkpoint();
        let names: Vec<&String> = ck.parameters.keys().collect();
        assert_eq!(names, crate::model::PARAMETER_NAMES.to_vec());
        let json = ck.to_json().unwrap();
        let pos: Vec<usize> = crate::model::PARAMETER_NAMES
            .iter()
            .map(|n| json.find(&format!("\"{n}\"")).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_shapes_and_versions() {
        let mut ck = sample_checkpoint();
        ck.parameters.get_mut("w_hh").unwrap().shape = [1, 1];
        assert!(ck.parameters().is_err());

        let mut ck = sample_checkpoint();
        ck.parameters.remove("head_b");
        assert!(ck.parameters().is_err());

        let mut ck = sample_checkpoint();
        ck.schema_version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        ck.save(&path).unwrap();
        let err = Checkpoint::load(&path).unwrap_err().to_string();
        assert!(err.contains("c.json") && err.contains("schema_version"), "{err}");
    }
}

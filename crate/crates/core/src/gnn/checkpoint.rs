//! `model.json`: the spec plus each parameter tensor as a flat row-major
//! array with its shape.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelSpec};
use crate::dataset::write_file;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub input_dim: usize,
    pub num_classes: usize,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            spec: model.spec.clone(),
            input_dim: model.input_dim,
            num_classes: model.num_classes,
            tensors: model
                .named_tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        let mut model = Model::init(&self.spec, self.input_dim, self.num_classes, 0)?;
        let expected = model.named_tensors();
        if expected.len() != self.tensors.len() {
            return Err(Error::Dimension(format!(
                "checkpoint has {} tensors, spec needs {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        let mut flat = Vec::with_capacity(model.param_len());
        for ((name, shape, _), rec) in expected.iter().zip(&self.tensors) {
            if *name != rec.name || *shape != rec.shape || rec.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Dimension(format!(
                    "checkpoint tensor {} {:?} does not match expected {name} {shape:?}",
                    rec.name, rec.shape
                )));
            }
            flat.extend_from_slice(&rec.data);
        }
        model.set_flat_params(&flat);
        Ok(model)
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_model(model)).expect("checkpoint serializes");
    write_file(path.as_ref(), &(json + "\n"))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })?;
    ckpt.into_model()
}

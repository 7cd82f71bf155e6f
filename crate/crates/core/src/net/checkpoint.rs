use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parameter_count, Activation, MlpModel};
use crate::dataset::Normalization;
use crate::error::{Error, FormatError, Result};
use crate::io::{atomic_write, decode_container, encode_container, read_file};

const MAGIC: &[u8; 8] = b"IDODEMDL";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    layer_dims: Vec<usize>,
    activation: Activation,
    input_split: usize,
    normalization: Option<Normalization>,
}

impl MlpModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            layer_dims: self.layer_dims.clone(),
            activation: self.activation,
            input_split: self.input_split,
            normalization: self.normalization.clone(),
        };
        Ok(encode_container(MAGIC, VERSION, &serde_json::to_vec(&header)?, &self.params))
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut parsed = None;
        let container = decode_container(path, bytes, MAGIC, VERSION, |h| {
            let header: Header = serde_json::from_slice(h).map_err(|e| FormatError::Header(e.to_string()))?;
            let n = parameter_count(&header.layer_dims);
            parsed = Some(header);
            Ok(n)
        })?;
        let header = parsed.expect("header parsed");
        let shape_err = |e: Error| Error::format(path, FormatError::Shape(e.to_string()));
        if let Some(n) = &header.normalization {
            let out = header.layer_dims.last().copied().unwrap_or(0);
            if n.inputs.width() != header.layer_dims.first().copied().unwrap_or(0) || n.targets.width() != out {
                return Err(shape_err(Error::shape("normalization width does not match layers")));
            }
        }
        Ok(MlpModel::from_parts(header.layer_dims, container.payload, header.activation, header.input_split)
            .map_err(shape_err)?
            .with_normalization(header.normalization))
    }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    atomic_write(path, &model.to_bytes()?)
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_bytes(path, &read_file(path)?)
}

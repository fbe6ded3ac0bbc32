//! JSON model files: architecture description plus named parameter tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{BackboneProfile, DecoderConfig, Dntdf, Model};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Shape, Tensor};

const FORMAT: &str = "dntdf-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Shape,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    profile: BackboneProfile,
    decoder: DecoderConfig,
    input: (usize, usize),
    params: Vec<ParamRecord>,
}

pub fn to_json(model: &Model) -> Result<String> {
    let params = model
        .arch
        .registry()
        .iter()
        .zip(model.params.values())
        .map(|((_, spec), value)| ParamRecord {
            name: spec.name.clone(),
            shape: value.shape(),
            data: value.data().to_vec(),
        })
        .collect();
    let file = ModelFile {
        format: FORMAT.into(),
        version: VERSION,
        profile: model.arch.profile.clone(),
        decoder: model.arch.cfg.clone(),
        input: model.arch.input,
        params,
    };
    serde_json::to_string(&file).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Model> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model file '{}' version {}",
            file.format, file.version
        )));
    }
    let arch = Dntdf::new(&file.profile, &file.decoder, file.input)?;
    if arch.registry().len() != file.params.len() {
        return Err(Error::ModelFormat(format!(
            "expected {} parameter tensors, found {}",
            arch.registry().len(),
            file.params.len()
        )));
    }
    let mut values = Vec::with_capacity(file.params.len());
    for ((_, spec), rec) in arch.registry().iter().zip(file.params) {
        if spec.name != rec.name {
            return Err(Error::ModelFormat(format!(
                "expected parameter {}, found {}",
                spec.name, rec.name
            )));
        }
        values
            .push(Tensor::from_vec(rec.shape, rec.data).map_err(|e| Error::ModelFormat(format!("{}: {e}", rec.name)))?);
    }
    let params = ParamStore::from_values(arch.registry(), values)?;
    Model::from_params(arch, params)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    from_json(&fs::read_to_string(path)?)
}

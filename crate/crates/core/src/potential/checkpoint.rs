//! JSON checkpoints. Floats are written in shortest round-trip form, so
//! save-then-load reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cace::{CaceHyper, CaceModel};
use super::mlp::Mlp;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    model: String,
    hyper: CaceHyper,
    elements: Vec<u8>,
    embeddings: Vec<f64>,
    feature_shift: Vec<f64>,
    feature_scale: Vec<f64>,
    mlp: Mlp,
}

pub fn to_json(model: &CaceModel) -> Result<String> {
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        model: "cace".into(),
        hyper: model.hyper.clone(),
        elements: model.elements.clone(),
        embeddings: model.embeddings.clone(),
        feature_shift: model.feature_shift.clone(),
        feature_scale: model.feature_scale.clone(),
        mlp: model.mlp.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json(text: &str) -> Result<CaceModel> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.model != "cace" {
        return Err(Error::Config(format!("unknown model kind '{}'", file.model)));
    }
    CaceModel::from_parts(file.hyper, file.elements, file.embeddings, file.mlp, file.feature_shift, file.feature_scale)
}

pub fn save(model: &CaceModel, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<CaceModel> {
    from_json(&fs::read_to_string(path)?)
}

//! Versioned JSON container for named parameter tensors.
//!
//! Values are written as JSON numbers in shortest round-trip form and parsed
//! back with exact float round-tripping, so `load(save(p)) == p` bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "pdnet-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    header: serde_json::Value,
    tensors: Vec<StoredTensor>,
}

pub fn encode_params<T: Scalar>(
    header: serde_json::Value,
    params: &ParamStore<T>,
) -> Result<String> {
    let container = Container {
        format: CHECKPOINT_FORMAT.to_owned(),
        version: CHECKPOINT_VERSION,
        header,
        tensors: params
            .iter()
            .map(|(name, t)| StoredTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.data().iter().map(|v| v.as_f64()).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&container)?)
}

pub fn decode_params<T: Scalar>(
    text: &str,
    path: &Path,
) -> Result<(serde_json::Value, ParamStore<T>)> {
    let parse_err = |msg: String, line: usize| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let container: Container =
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string(), e.line()))?;
    if container.format != CHECKPOINT_FORMAT {
        return Err(parse_err(
            format!("unknown format `{}`", container.format),
            0,
        ));
    }
    if container.version != CHECKPOINT_VERSION {
        return Err(parse_err(
            format!("unsupported checkpoint version {}", container.version),
            0,
        ));
    }
    let mut params = ParamStore::new();
    for t in container.tensors {
        let data = t.values.iter().map(|&v| T::lit(v)).collect();
        let tensor = Tensor::new(t.shape, data)
            .map_err(|e| parse_err(format!("tensor `{}`: {e}", t.name), 0))?;
        if params.insert(t.name.clone(), tensor).is_some() {
            return Err(parse_err(format!("tensor `{}` stored twice", t.name), 0));
        }
    }
    Ok((container.header, params))
}

pub fn save_params<T: Scalar>(
    path: &Path,
    header: serde_json::Value,
    params: &ParamStore<T>,
) -> Result<()> {
    let text = encode_params(header, params)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<(serde_json::Value, ParamStore<T>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_params(&text, path)
}

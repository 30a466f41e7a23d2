use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde_json::json;
use tsa_core::container::{decode, encode, Tensor};

use crate::descriptor::ArchitectureDescriptor;
use crate::error::NnError;
use crate::model::Model;
use crate::real::Real;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TSWT";
pub const WEIGHTS_VERSION: u32 = 1;

/// Serializes every named tensor of the model as f32 together with the
/// descriptor and its digest.
pub fn weights_to_bytes<T: Real>(model: &Model<T>) -> Vec<u8> {
    let desc = model.descriptor();
    let meta = json!({
        "descriptor": desc,
        "descriptor_digest": desc.digest(),
        "input_dim": model.input_dim(),
        "n_classes": model.n_classes(),
    });
    let tensors: Vec<Tensor> = model
        .state()
        .into_iter()
        .map(|(name, a)| Tensor::new(name, vec![a.nrows(), a.ncols()], a.iter().map(|v| v.as_f64() as f32).collect()))
        .collect();
    encode(WEIGHTS_MAGIC, WEIGHTS_VERSION, meta, &tensors)
}

pub fn weights_from_bytes<T: Real>(bytes: &[u8]) -> Result<Model<T>, NnError> {
    let (meta, tensors) = decode(bytes, WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
    let desc: ArchitectureDescriptor = serde_json::from_value(meta["descriptor"].clone())
        .map_err(|e| NnError::Weights(format!("descriptor: {e}")))?;
    let stored = meta["descriptor_digest"].as_str().unwrap_or_default();
    if stored != desc.digest() {
        return Err(NnError::Weights(format!("descriptor digest {stored} does not match {}", desc.digest())));
    }
    let dim = |key: &str| {
        meta[key].as_u64().map(|v| v as usize).ok_or_else(|| NnError::Weights(format!("missing {key}")))
    };
    let mut model = Model::instantiate(&desc, dim("input_dim")?, dim("n_classes")?)?;
    let mut map = HashMap::new();
    for t in tensors {
        let [r, c] = t.shape[..] else {
            return Err(NnError::Weights(format!("tensor {} is not two-dimensional", t.name)));
        };
        let a = Array2::from_shape_vec((r, c), t.data.into_iter().map(|v| T::of(f64::from(v))).collect())
            .map_err(|e| NnError::Weights(e.to_string()))?;
        map.insert(t.name, a);
    }
    model.load_state(map)?;
    Ok(model)
}

pub fn save_weights<T: Real>(model: &Model<T>, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, weights_to_bytes(model)).map_err(|e| NnError::Weights(e.to_string()))
}

pub fn load_weights<T: Real>(path: &Path) -> Result<Model<T>, NnError> {
    let bytes = std::fs::read(path).map_err(|e| NnError::Weights(e.to_string()))?;
    weights_from_bytes(&bytes)
}

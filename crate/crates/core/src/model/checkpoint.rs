//! Checkpoints: safetensors files of little-endian f64 tensors plus the
//! model spec as JSON under the `segdense` metadata key.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use segdense_nn::Tensor;

use super::{build_model, IrisSegmenter, ModelSpec};
use crate::error::{Result, SegError};

const SPEC_KEY: &str = "segdense";

fn checkpoint_err(path: &Path, message: impl Into<String>) -> SegError {
    SegError::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Serializes the full model state; equal models give identical bytes.
pub fn checkpoint_bytes(model: &IrisSegmenter) -> Result<Vec<u8>> {
    let state = model.state();
    let raw: Vec<(String, Vec<usize>, Vec<u8>)> = state
        .into_iter()
        .map(|(name, t)| {
            let bytes = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            (name, t.shape().to_vec(), bytes)
        })
        .collect();
    let views = raw
        .iter()
        .map(|(name, shape, bytes)| TensorView::new(Dtype::F64, shape.clone(), bytes).map(|v| (name.as_str(), v)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| SegError::Invalid(format!("tensor view: {e}")))?;
    let spec = serde_json::to_string(model.spec()).map_err(|e| SegError::Invalid(format!("model spec: {e}")))?;
    let meta = HashMap::from([(SPEC_KEY.to_string(), spec)]);
    safetensors::serialize(views, Some(meta)).map_err(|e| SegError::Invalid(format!("serialize checkpoint: {e}")))
}

pub fn save_checkpoint(model: &IrisSegmenter, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| SegError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| SegError::io(path, e))
}

fn read_tensors(path: &Path, buffer: &[u8]) -> Result<(BTreeMap<String, Tensor>, Option<String>)> {
    let st = SafeTensors::deserialize(buffer).map_err(|e| checkpoint_err(path, e.to_string()))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.iter() {
        let data: Vec<f64> = match view.dtype() {
            Dtype::F64 => view
                .data()
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
            Dtype::F32 => view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
                .collect(),
            other => {
                return Err(checkpoint_err(
                    path,
                    format!("tensor {name} has unsupported dtype {other:?}"),
                ))
            }
        };
        let tensor = Tensor::from_vec(view.shape(), data).map_err(|e| checkpoint_err(path, e.to_string()))?;
        out.insert(name.to_string(), tensor);
    }
    let (_, metadata) = SafeTensors::read_metadata(buffer).map_err(|e| checkpoint_err(path, e.to_string()))?;
    let spec = metadata.metadata().as_ref().and_then(|m| m.get(SPEC_KEY).cloned());
    Ok((out, spec))
}

/// All tensors of a safetensors file (F64 or F32), by name.
pub fn load_state_file(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let buffer = std::fs::read(path).map_err(|e| SegError::io(path, e))?;
    Ok(read_tensors(path, &buffer)?.0)
}

/// Rebuilds a model from a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<IrisSegmenter> {
    let buffer = std::fs::read(path).map_err(|e| SegError::io(path, e))?;
    let (mut tensors, spec) = read_tensors(path, &buffer)?;
    let spec = spec.ok_or_else(|| checkpoint_err(path, format!("missing `{SPEC_KEY}` metadata")))?;
    let spec: ModelSpec =
        serde_json::from_str(&spec).map_err(|e| checkpoint_err(path, format!("bad model spec: {e}")))?;
    // the stored state already contains any pretrained backbone
    let mut structural = spec.clone();
    structural.backbone.pretrained_init = false;
    let mut model = build_model(&structural, 0)?;
    model.spec = spec;
    let mut problem = None;
    let mut take = |name: &str, target: &mut Tensor| match tensors.remove(name) {
        None => {
            problem.get_or_insert_with(|| format!("missing tensor {name}"));
        }
        Some(t) if t.shape() != target.shape() => {
            problem
                .get_or_insert_with(|| format!("tensor {name}: expected {:?}, found {:?}", target.shape(), t.shape()));
        }
        Some(t) => *target = t,
    };
    model.visit_params(&mut |name, p| take(name, &mut p.value));
    model.visit_buffers(&mut |name, t| take(name, t));
    if let Some(p) = problem {
        return Err(checkpoint_err(path, p));
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(checkpoint_err(path, format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

//! `model.ckpt` (little-endian f32 blob) plus `model.manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use timekan_core::data::Standardizer;
use timekan_core::{ModelConfig, Tensor, TimeKanModel};

use crate::error::{CliError, CliResult};

pub const BLOB_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "model.manifest.json";
const FORMAT: &str = "timekan-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub byte_length: usize,
    /// Variate names and train-split statistics of the dataset the model
    /// was fitted on, used to map predictions back to raw units.
    pub columns: Vec<String>,
    pub standardization: Option<Standardizer>,
}

pub fn save(
    dir: &Path,
    model: &TimeKanModel,
    columns: &[String],
    standardization: Option<&Standardizer>,
) -> CliResult<Manifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for p in model.parameters() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape().to_vec(),
            dtype: "f32".into(),
            byte_offset: blob.len(),
        });
        for &v in p.value.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        config: model.config().clone(),
        tensors,
        byte_length: blob.len(),
        columns: columns.to_vec(),
        standardization: standardization.cloned(),
    };
    let blob_path = dir.join(BLOB_FILE);
    fs::write(&blob_path, &blob).map_err(|e| CliError::io(blob_path, e))?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> CliResult<(TimeKanModel, Manifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != FORMAT {
        return Err(CliError::Data(format!(
            "{}: unsupported checkpoint format {:?}",
            manifest_path.display(),
            manifest.format
        )));
    }
    let blob_path = dir.join(BLOB_FILE);
    let blob = fs::read(&blob_path).map_err(|e| CliError::io(&blob_path, e))?;
    if blob.len() != manifest.byte_length {
        return Err(CliError::Data(format!(
            "{}: expected {} bytes, found {}",
            blob_path.display(),
            manifest.byte_length,
            blob.len()
        )));
    }
    let mut model = TimeKanModel::new(manifest.config.clone())?;
    let expected: Vec<(String, Vec<usize>)> =
        model.parameters().iter().map(|p| (p.name.clone(), p.shape().to_vec())).collect();
    if expected.len() != manifest.tensors.len() {
        return Err(CliError::Data(format!(
            "checkpoint holds {} tensors, model expects {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(expected.len());
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if &entry.name != name || &entry.shape != shape || entry.dtype != "f32" {
            return Err(CliError::Data(format!(
                "checkpoint tensor {:?} {:?} ({}) does not match model tensor {name:?} {shape:?}",
                entry.name, entry.shape, entry.dtype
            )));
        }
        let n: usize = shape.iter().product();
        let bytes = blob
            .get(entry.byte_offset..entry.byte_offset + 4 * n)
            .ok_or_else(|| CliError::Data(format!("tensor {name:?} runs past the end of the blob")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        values.push(Tensor::new(shape, data)?);
    }
    model.restore(&values)?;
    Ok((model, manifest))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TimeKanModel {
        TimeKanModel::new(ModelConfig {
            lookback: 16,
            horizon: 4,
            embed_dim: 4,
            levels: 3,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_rounds_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let model = small();
        let stats = Standardizer { mean: vec![1.0], std: vec![2.0] };
        save(dir.path(), &model, &["y".into()], Some(&stats)).unwrap();
        let (back, manifest) = load(dir.path()).unwrap();
        assert_eq!(manifest.standardization, Some(stats));
        for (a, b) in model.parameters().iter().zip(back.parameters()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert_eq!(*y, *x as f32 as f64);
            }
        }
        // second save of a loaded model is byte-identical
        let dir2 = tempfile::tempdir().unwrap();
        save(dir2.path(), &back, &["y".into()], manifest.standardization.as_ref()).unwrap();
        assert_eq!(
            fs::read(dir.path().join(BLOB_FILE)).unwrap(),
            fs::read(dir2.path().join(BLOB_FILE)).unwrap()
        );
    }

    #[test]
    fn offsets_are_contiguous() {
        let dir = tempfile::tempdir().unwrap();
        let m = save(dir.path(), &small(), &[], None).unwrap();
        let mut at = 0;
        for t in &m.tensors {
            assert_eq!(t.byte_offset, at);
            at += 4 * t.shape.iter().product::<usize>();
        }
        assert_eq!(at, m.byte_length);
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &small(), &[], None).unwrap();
        let p = dir.path().join(BLOB_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load(dir.path()).is_err());
    }
}

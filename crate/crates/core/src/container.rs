//! The `cmox-model/1` container: a JSON manifest plus a sibling `.bin`
//! payload holding every named tensor as row-major little-endian f64.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const FORMAT: &str = "cmox-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: String,
    pub labels: Vec<String>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub payload: String,
    pub payload_bytes: usize,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub labels: Vec<String>,
    pub c: Option<f64>,
    pub meta: serde_json::Value,
    tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

pub fn payload_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

impl Container {
    pub fn new(kind: impl Into<String>, labels: Vec<String>) -> Self {
        Container {
            kind: kind.into(),
            labels,
            c: None,
            meta: serde_json::Value::Null,
            tensors: Vec::new(),
        }
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Container(format!(
                "tensor {name}: shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if self.tensors.iter().any(|(n, _, _)| *n == name) {
            return Err(Error::Container(format!("duplicate tensor {name}")));
        }
        self.tensors.push((name, shape, data));
        Ok(())
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| Error::Container(format!("missing tensor {name}")))
    }

    /// The tensor's data, checked against an expected shape.
    pub fn tensor_shaped(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let (s, d) = self.tensor(name)?;
        if s != shape {
            return Err(Error::Container(format!(
                "tensor {name}: expected shape {shape:?}, found {s:?}"
            )));
        }
        Ok(d.to_vec())
    }

    /// Manifest JSON and payload bytes, with the payload referenced by
    /// `payload_name`.
    pub fn encode(&self, payload_name: &str) -> Result<(String, Vec<u8>)> {
        let mut bytes = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, shape, data) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += data.len();
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            kind: self.kind.clone(),
            labels: self.labels.clone(),
            c: self.c,
            payload: payload_name.to_string(),
            payload_bytes: bytes.len(),
            tensors: entries,
            meta: self.meta.clone(),
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        Ok((json, bytes))
    }

    pub fn decode(manifest_json: &str, payload: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_str(manifest_json)?;
        if m.format != FORMAT {
            return Err(Error::Container(format!(
                "unsupported format {:?}, expected {FORMAT}",
                m.format
            )));
        }
        if payload.len() != m.payload_bytes || !payload.len().is_multiple_of(8) {
            return Err(Error::Container(format!(
                "payload holds {} bytes, manifest says {}",
                payload.len(),
                m.payload_bytes
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut seen = HashSet::new();
        let mut tensors = Vec::with_capacity(m.tensors.len());
        for e in m.tensors {
            let len: usize = e.shape.iter().product();
            let end = e
                .offset
                .checked_add(len)
                .filter(|&end| end <= values.len())
                .ok_or_else(|| Error::Container(format!("tensor {} runs past the end of the payload", e.name)))?;
            if !seen.insert(e.name.clone()) {
                return Err(Error::Container(format!("duplicate tensor {}", e.name)));
            }
            tensors.push((e.name, e.shape, values[e.offset..end].to_vec()));
        }
        Ok(Container {
            kind: m.kind,
            labels: m.labels,
            c: m.c,
            meta: m.meta,
            tensors,
        })
    }

    /// Writes `<path>` (manifest) and `<path>.bin` (payload, extension
    /// replaced), payload first.
    pub fn save(&self, manifest_path: impl AsRef<Path>) -> Result<()> {
        let manifest_path = manifest_path.as_ref();
        let bin = payload_path(manifest_path);
        let bin_name = bin
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Container(format!("bad model path {}", manifest_path.display())))?
            .to_string();
        let (json, bytes) = self.encode(&bin_name)?;
        write_atomic(&bin, &bytes)?;
        write_atomic(manifest_path, json.as_bytes())
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let json = crate::io::read_to_string(manifest_path)?;
        let m: Manifest = serde_json::from_str(&json)?;
        let bin = manifest_path.with_file_name(&m.payload);
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        Self::decode(&json, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new("lr", vec!["A".into(), "B".into()]);
        c.c = Some(0.4);
        c.meta = serde_json::json!({"max_len": 70});
        c.push_tensor("weights", vec![2, 3], vec![1.0, -2.5, 0.0, 1e-300, f64::MAX, -0.0])
            .unwrap();
        c.push_tensor("bias", vec![2], vec![0.1, 0.2]).unwrap();
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let (json, bin) = c.encode("m.bin").unwrap();
        assert_eq!(bin.len(), 64);
        let back = Container::decode(&json, &bin).unwrap();
        assert_eq!(back, c);
        assert!(json.contains("\"format\": \"cmox-model/1\""));
        assert!(json.contains("\"C\": 0.4"));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        sample().save(&p).unwrap();
        assert!(dir.path().join("model.bin").exists());
        assert_eq!(Container::load(&p).unwrap(), sample());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut c = sample();
        assert!(c.push_tensor("bias", vec![1], vec![0.0]).is_err());
        assert!(c.push_tensor("x", vec![2, 2], vec![0.0; 3]).is_err());
        let (json, bin) = c.encode("m.bin").unwrap();
        assert!(Container::decode(&json, &bin[..56]).is_err());
        let wrong = json.replace("cmox-model/1", "cmox-model/9");
        assert!(Container::decode(&wrong, &bin).is_err());
        assert!(c.tensor("missing").is_err());
        assert!(c.tensor_shaped("weights", &[3, 2]).is_err());
    }
}

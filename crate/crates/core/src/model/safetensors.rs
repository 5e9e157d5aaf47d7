//! Reader and writer for the safetensors container: a little-endian `u64`
//! header length, a JSON header mapping tensor names to dtype, shape and byte
//! offsets, then the raw tensor bytes. Only `F64` and `F32` are supported.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

/// Serializes tensors as `F64`, in name order.
pub fn serialize(
    tensors: &BTreeMap<String, Tensor>,
    metadata: &BTreeMap<String, String>,
) -> Vec<u8> {
    let mut header = serde_json::Map::new();
    if !metadata.is_empty() {
        header.insert(
            "__metadata__".into(),
            serde_json::to_value(metadata).expect("string map"),
        );
    }
    let mut offset = 0;
    for (name, t) in tensors {
        let len = t.data.len() * 8;
        let entry = Entry {
            dtype: "F64".into(),
            shape: t.shape.clone(),
            data_offsets: [offset, offset + len],
        };
        header.insert(name.clone(), serde_json::to_value(entry).expect("entry"));
        offset += len;
    }
    let mut header = serde_json::to_vec(&Value::Object(header)).expect("header");
    while !header.len().is_multiple_of(8) {
        header.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + header.len() + offset);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in tensors.values() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn deserialize(
    bytes: &[u8],
) -> std::result::Result<(BTreeMap<String, Tensor>, BTreeMap<String, String>), String> {
    if bytes.len() < 8 {
        return Err("file shorter than the header length prefix".into());
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body_start = 8usize
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or("header length exceeds file size")?;
    let header: BTreeMap<String, Value> =
        serde_json::from_slice(&bytes[8..body_start]).map_err(|e| format!("bad header: {e}"))?;
    let body = &bytes[body_start..];

    let mut metadata = BTreeMap::new();
    let mut tensors = BTreeMap::new();
    for (name, value) in header {
        if name == "__metadata__" {
            metadata = serde_json::from_value(value).map_err(|e| format!("bad metadata: {e}"))?;
            continue;
        }
        let entry: Entry =
            serde_json::from_value(value).map_err(|e| format!("tensor {name}: {e}"))?;
        let [start, end] = entry.data_offsets;
        if start > end || end > body.len() {
            return Err(format!(
                "tensor {name}: offsets {start}..{end} outside data of {} bytes",
                body.len()
            ));
        }
        let raw = &body[start..end];
        let count: usize = entry.shape.iter().product();
        let data: Vec<f64> = match entry.dtype.as_str() {
            "F64" if raw.len() == count * 8 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            "F32" if raw.len() == count * 4 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            "F64" | "F32" => {
                return Err(format!("tensor {name}: byte length does not match shape"))
            }
            other => return Err(format!("tensor {name}: unsupported dtype {other}")),
        };
        tensors.insert(name, Tensor::new(entry.shape, data));
    }
    Ok((tensors, metadata))
}

pub(crate) fn checkpoint_error(path: &std::path::Path, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = BTreeMap::new();
        t.insert(
            "a".to_string(),
            Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.0, 1e-300]),
        );
        t.insert(
            "b".to_string(),
            Tensor::new(vec![3], vec![0.0, 7.0, f64::MAX]),
        );
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), "distcma".to_string());
        let bytes = serialize(&t, &meta);
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(n % 8, 0);
        let (back, meta_back) = deserialize(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(meta_back, meta);
    }

    #[test]
    fn reads_f32() {
        let header = br#"{"x":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_le_bytes());
        let (t, _) = deserialize(&bytes).unwrap();
        assert_eq!(t["x"].data, vec![1.5, -2.0]);
    }

    #[test]
    fn rejects_truncated_input() {
        assert!(deserialize(&[1, 2, 3]).is_err());
        assert!(deserialize(&100u64.to_le_bytes()).is_err());
        let header = br#"{"x":{"dtype":"F64","shape":[2],"data_offsets":[0,16]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(deserialize(&bytes).is_err());
    }
}

//! Single-file tensor container.
//!
//! Layout (all integers little-endian):
//! - `u64` header length `n`
//! - `n` bytes of UTF-8 JSON: tensor name -> `{dtype, shape, data_offsets: [begin, end]}`,
//!   plus a reserved `__metadata__` entry carrying the format tag and the
//!   SHA-256 of the data section
//! - raw tensor bytes; offsets are relative to the start of this section

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "expertscope-tensors/1";
const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorInfo {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub data_offsets: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Metadata {
    format: String,
    sha256: String,
}

pub type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialize `(name, shape, data)` triples in the given order.
pub fn encode<'a>(tensors: impl IntoIterator<Item = (String, Vec<usize>, &'a [f32])>) -> Result<Vec<u8>> {
    let mut header = serde_json::Map::new();
    let mut data = Vec::new();
    for (name, shape, values) in tensors {
        if name == METADATA_KEY {
            return Err(Error::Container(format!("reserved tensor name `{name}`")));
        }
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::Container(format!(
                "tensor `{name}` has {} values for shape {shape:?}",
                values.len()
            )));
        }
        let begin = data.len() as u64;
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let info = TensorInfo {
            dtype: "F32".into(),
            shape,
            data_offsets: [begin, data.len() as u64],
        };
        header.insert(name, serde_json::to_value(info)?);
    }
    let meta = Metadata {
        format: FORMAT_TAG.into(),
        sha256: sha256_hex(&data),
    };
    header.insert(METADATA_KEY.into(), serde_json::to_value(meta)?);
    let header_bytes = serde_json::to_vec(&serde_json::Value::Object(header))?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + data.len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<TensorMap> {
    let corrupt = |m: &str| Error::Container(format!("{}: {m}", origin.display()));
    if bytes.len() < 8 {
        return Err(corrupt("file shorter than the header length prefix"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| corrupt("header length exceeds file size"))?;
    let mut header: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&bytes[8..header_end]).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    let data = &bytes[header_end..];
    let meta: Metadata = header
        .remove(METADATA_KEY)
        .ok_or_else(|| corrupt("missing __metadata__"))
        .and_then(|v| serde_json::from_value(v).map_err(|e| corrupt(&e.to_string())))?;
    if meta.format != FORMAT_TAG {
        return Err(corrupt(&format!("unsupported format `{}`", meta.format)));
    }
    let found = sha256_hex(data);
    if found != meta.sha256 {
        return Err(Error::Checksum {
            path: origin.to_path_buf(),
            expected: meta.sha256,
            found,
        });
    }
    let mut out = TensorMap::new();
    for (name, value) in header {
        let info: TensorInfo = serde_json::from_value(value).map_err(|e| corrupt(&e.to_string()))?;
        if info.dtype != "F32" {
            return Err(corrupt(&format!("tensor `{name}` has unsupported dtype {}", info.dtype)));
        }
        let [begin, end] = info.data_offsets.map(|o| o as usize);
        let numel: usize = info.shape.iter().product();
        if begin > end || end > data.len() || end - begin != numel * 4 {
            return Err(corrupt(&format!("tensor `{name}` has inconsistent offsets")));
        }
        let values = data[begin..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.insert(name, (info.shape, values));
    }
    Ok(out)
}

pub fn write_file<'a>(
    path: &Path,
    tensors: impl IntoIterator<Item = (String, Vec<usize>, &'a [f32])>,
) -> Result<()> {
    let bytes = encode(tensors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<TensorMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_roundtrip(values in prop::collection::vec(-1e6f32..1e6, 0..64), rows in 1usize..4) {
            let cols = values.len() / rows;
            let data = &values[..rows * cols];
            let bytes = encode([("t".to_string(), vec![rows, cols], data)]).unwrap();
            let map = decode(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(&map["t"].0, &vec![rows, cols]);
            prop_assert_eq!(&map["t"].1[..], data);
        }
    }

    #[test]
    fn flipped_data_byte_is_a_checksum_error() {
        let data = [1.0f32, 2.0, 3.0];
        let mut bytes = encode([("x".to_string(), vec![3], &data[..])]).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(decode(&bytes, Path::new("mem")), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncated_header_is_rejected() {
        assert!(matches!(decode(&[1, 0, 0], Path::new("mem")), Err(Error::Container(_))));
        let mut bytes = (1000u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        assert!(matches!(decode(&bytes, Path::new("mem")), Err(Error::Container(_))));
    }
}

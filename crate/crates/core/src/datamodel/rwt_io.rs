//! `.rwt` tensor files.
//!
//! A file is one JSON header line, `{"dtype":"f32","shape":[...]}\n`, followed
//! by the row-major payload as little-endian 32-bit floats. Images are stored
//! with shape `[3, h, w]`, score maps with `[2, h, w]`.
//!
//! Parameter bundles use the same convention with a richer header: a single
//! JSON line carrying free-form metadata and the ordered list of named tensor
//! shapes, then every payload concatenated in that order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raster::{ImageTensor, ScoreMap};
use crate::error::{Error, Result};

pub const TENSOR_EXTENSION: &str = "rwt";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    shape: Vec<usize>,
}

/// Shape-tagged dense `f32` buffer; the common currency of the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ZeroDimension(shape));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

impl From<&ImageTensor> for RawTensor {
    fn from(img: &ImageTensor) -> Self {
        RawTensor {
            shape: vec![ImageTensor::CHANNELS, img.height(), img.width()],
            data: img.data().to_vec(),
        }
    }
}

impl From<&ScoreMap> for RawTensor {
    fn from(map: &ScoreMap) -> Self {
        RawTensor {
            shape: vec![ScoreMap::CHANNELS, map.height(), map.width()],
            data: map.data().to_vec(),
        }
    }
}

impl TryFrom<RawTensor> for ImageTensor {
    type Error = Error;

    fn try_from(t: RawTensor) -> Result<Self> {
        match t.shape.as_slice() {
            &[3, h, w] => ImageTensor::new(h, w, t.data),
            other => Err(Error::ShapeMismatch(format!(
                "expected image shape [3, h, w], got {other:?}"
            ))),
        }
    }
}

impl TryFrom<RawTensor> for ScoreMap {
    type Error = Error;

    fn try_from(t: RawTensor) -> Result<Self> {
        match t.shape.as_slice() {
            &[2, h, w] => ScoreMap::new(h, w, t.data),
            other => Err(Error::ShapeMismatch(format!(
                "expected score map shape [2, h, w], got {other:?}"
            ))),
        }
    }
}

fn encode_payload(data: &[f32], out: &mut Vec<u8>) {
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn decode_payload(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn encode_tensor(t: &RawTensor) -> Result<Vec<u8>> {
    if t.shape.is_empty() || t.shape.contains(&0) {
        return Err(Error::ZeroDimension(t.shape.clone()));
    }
    let header = Header {
        dtype: "f32".into(),
        shape: t.shape.clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    encode_payload(&t.data, &mut out);
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<RawTensor> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Header("missing header terminator".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Header(e.to_string()))?;
    if header.dtype != "f32" {
        return Err(Error::Header(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.shape.is_empty() || header.shape.contains(&0) {
        return Err(Error::ZeroDimension(header.shape));
    }
    let payload = &bytes[nl + 1..];
    let expected = header.shape.iter().product::<usize>() * 4;
    if payload.len() != expected {
        return Err(Error::PayloadLengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    Ok(RawTensor {
        shape: header.shape,
        data: decode_payload(payload),
    })
}

pub fn write_tensor(path: &Path, tensor: impl Into<RawTensor>) -> Result<()> {
    let bytes = encode_tensor(&tensor.into())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<RawTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn read_image_tensor(path: &Path) -> Result<ImageTensor> {
    read_tensor(path)?.try_into()
}

pub fn read_score_map(path: &Path) -> Result<ScoreMap> {
    read_tensor(path)?.try_into()
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleHeader {
    dtype: String,
    metadata: serde_json::Value,
    tensors: Vec<BundleEntry>,
}

/// Writes named tensors plus JSON metadata into one file.
pub fn write_bundle(
    path: &Path,
    metadata: &serde_json::Value,
    tensors: &[(String, RawTensor)],
) -> Result<()> {
    let header = BundleHeader {
        dtype: "f32".into(),
        metadata: metadata.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| BundleEntry {
                name: name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for (_, t) in tensors {
        encode_payload(&t.data, &mut out);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(path: &Path) -> Result<(serde_json::Value, Vec<(String, RawTensor)>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io(path, e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Header("missing header terminator".into()));
    }
    let header: BundleHeader =
        serde_json::from_slice(&line[..line.len() - 1]).map_err(|e| Error::Header(e.to_string()))?;
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    let expected: usize = header
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>() * 4)
        .sum();
    if payload.len() != expected {
        return Err(Error::PayloadLengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n = entry.shape.iter().product::<usize>() * 4;
        let data = decode_payload(&payload[offset..offset + n]);
        offset += n;
        tensors.push((entry.name, RawTensor::new(entry.shape, data)?));
    }
    Ok((header.metadata, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.rwt");
        let map = ScoreMap::zeros(2, 2).unwrap();
        write_tensor(&path, &map).unwrap();
        assert_eq!(read_score_map(&path).unwrap(), map);
    }

    #[test]
    fn random_score_map_round_trips_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..2 * 5 * 7).map(|_| rng.random::<f32>()).collect();
        let map = ScoreMap::new(5, 7, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rwt");
        write_tensor(&path, &map).unwrap();
        let back = read_score_map(&path).unwrap();
        let bits = |m: &ScoreMap| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&map));
    }

    #[test]
    fn header_is_a_json_line() {
        let bytes = encode_tensor(&RawTensor::new(vec![2, 1, 1], vec![0.5, 1.0]).unwrap()).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&bytes[..nl], br#"{"dtype":"f32","shape":[2,1,1]}"#);
        assert_eq!(&bytes[nl + 1..nl + 5], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), nl + 1 + 8);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rwt");
        write_tensor(&path, &ScoreMap::zeros(3, 3).unwrap()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");
    }

    #[test]
    fn zero_dimension_rejected_on_write_and_read() {
        assert!(matches!(
            encode_tensor(&RawTensor { shape: vec![2, 0, 3], data: vec![] }),
            Err(Error::ZeroDimension(_))
        ));
        let bytes = b"{\"dtype\":\"f32\",\"shape\":[2,0,3]}\n";
        assert!(matches!(decode_tensor(bytes), Err(Error::ZeroDimension(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_tensor(Path::new("/nonexistent/x.rwt")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.rwtc");
        let tensors = vec![
            ("a".to_string(), RawTensor::new(vec![2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap()),
            ("b.bias".to_string(), RawTensor::new(vec![1], vec![0.25]).unwrap()),
        ];
        let meta = serde_json::json!({"variant": "craft_masked"});
        write_bundle(&path, &meta, &tensors).unwrap();
        let (m, t) = read_bundle(&path).unwrap();
        assert_eq!(m, meta);
        assert_eq!(t, tensors);
    }

    proptest! {
        #[test]
        fn any_tensor_round_trips(
            dims in prop::collection::vec(1usize..6, 1..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..n).map(|_| f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff)).collect();
            let t = RawTensor::new(dims, data).unwrap();
            let back = decode_tensor(&encode_tensor(&t).unwrap()).unwrap();
            prop_assert_eq!(
                back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back.shape, t.shape);
        }
    }
}

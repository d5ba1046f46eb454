// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary weight container.
//!
//! ```text
//! [u64 LE: header length N][N bytes: UTF-8 JSON header, ending in '\n'][payload]
//! ```
//!
//! The header maps tensor names to `{"shape": [..], "dtype": "f32"|"f64",
//! "offset": <byte offset into payload>}` and carries the model config under
//! the reserved key `"__config__"`. Payloads are little-endian, row-major and
//! stored in offset order. Tensor names are `W_E`, `W_U` and
//! `layers.{l}.{W_Q,W_K,W_V,W_O}.{h}`, `layers.{l}.{W_1,W_gate,W_2,g_att,g_mlp}`
//! with `l` starting at 1 and `h` at 0.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::{MlpKind, ModelConfig};
use crate::error::{Error, Result};
use crate::model::{LayerWeights, Model, ModelWeights};

/// Reserved header key holding the serialized [`ModelConfig`].
pub const CONFIG_KEY: &str = "__config__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub offset: u64,
}

enum TensorRef<'a> {
    Matrix(&'a Array2<f64>),
    Vector(&'a Array1<f64>),
}

impl TensorRef<'_> {
    fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::Matrix(m) => vec![m.nrows(), m.ncols()],
            TensorRef::Vector(v) => vec![v.len()],
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            TensorRef::Matrix(m) => Box::new(m.iter().copied()),
            TensorRef::Vector(v) => Box::new(v.iter().copied()),
        }
    }
}

/// Tensors in canonical (payload) order.
fn canonical_tensors(weights: &ModelWeights) -> Vec<(String, TensorRef<'_>)> {
    let mut out = vec![
        ("W_E".to_owned(), TensorRef::Matrix(&weights.w_e)),
        ("W_U".to_owned(), TensorRef::Matrix(&weights.w_u)),
    ];
    for (idx, lw) in weights.layers.iter().enumerate() {
        let l = idx + 1;
        for (kind, mats) in [("W_Q", &lw.w_q), ("W_K", &lw.w_k), ("W_V", &lw.w_v), ("W_O", &lw.w_o)] {
            for (h, m) in mats.iter().enumerate() {
                out.push((format!("layers.{l}.{kind}.{h}"), TensorRef::Matrix(m)));
            }
        }
        out.push((format!("layers.{l}.W_1"), TensorRef::Matrix(&lw.w_1)));
        if let Some(g) = &lw.w_gate {
            out.push((format!("layers.{l}.W_gate"), TensorRef::Matrix(g)));
        }
        out.push((format!("layers.{l}.W_2"), TensorRef::Matrix(&lw.w_2)));
        out.push((format!("layers.{l}.g_att"), TensorRef::Vector(&lw.g_att)));
        out.push((format!("layers.{l}.g_mlp"), TensorRef::Vector(&lw.g_mlp)));
    }
    out
}

/// Serialize a model as `f64` tensors.
pub fn write_model(model: &Model, mut out: impl Write) -> Result<()> {
    let tensors = canonical_tensors(model.weights());
    let mut header = Map::new();
    header.insert(CONFIG_KEY.to_owned(), serde_json::to_value(model.config())?);
    let mut offset = 0u64;
    for (name, t) in &tensors {
        let shape = t.shape();
        let entry = TensorEntry {
            shape: shape.clone(),
            dtype: Dtype::F64,
            offset,
        };
        header.insert(name.clone(), serde_json::to_value(entry)?);
        offset += (shape.iter().product::<usize>() * Dtype::F64.size()) as u64;
    }
    let mut header_bytes = serde_json::to_vec(&Value::Object(header))?;
    header_bytes.push(b'\n');

    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for (_, t) in &tensors {
        for v in t.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Serialize to an in-memory buffer.
pub fn model_to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    Ok(buf)
}

struct Reader<'a> {
    header: Map<String, Value>,
    payload: &'a [u8],
}

impl Reader<'_> {
    fn values(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let raw = self
            .header
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        let entry: TensorEntry = serde_json::from_value(raw.clone())
            .map_err(|e| Error::Format(format!("bad header entry for {name}: {e}")))?;
        if entry.shape != shape {
            return Err(Error::shape(name, shape, &entry.shape));
        }
        let count: usize = shape.iter().product();
        let start = usize::try_from(entry.offset).map_err(|_| Error::Format(format!("{name}: offset overflow")))?;
        let end = start + count * entry.dtype.size();
        let bytes = self
            .payload
            .get(start..end)
            .ok_or_else(|| Error::Format(format!("{name}: payload range {start}..{end} out of bounds")))?;
        Ok(match entry.dtype {
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect(),
        })
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = self.values(name, &[rows, cols])?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("length checked"))
    }

    fn vector(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.values(name, &[len])?))
    }
}

/// Decode a model from bytes.
pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Format("file shorter than the 8-byte header length".into()))?;
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
        .map_err(|_| Error::Format("header length overflow".into()))?;
    let header_bytes = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| Error::Format(format!("declared header length {header_len} exceeds file size")))?;
    if header_bytes.last() != Some(&b'\n') {
        return Err(Error::Format("header must end with a newline".into()));
    }
    let header: Map<String, Value> = match serde_json::from_slice(header_bytes)? {
        Value::Object(m) => m,
        _ => return Err(Error::Format("header is not a JSON object".into())),
    };
    let config: ModelConfig = serde_json::from_value(
        header
            .get(CONFIG_KEY)
            .cloned()
            .ok_or_else(|| Error::Format(format!("missing {CONFIG_KEY}")))?,
    )?;
    config.validate()?;

    let reader = Reader {
        header,
        payload: &bytes[8 + header_len..],
    };
    let (d, dh, dp, v) = (config.model_dim, config.head_dim, config.mlp_dim, config.vocab_size);
    let w_e = reader.matrix("W_E", d, v)?;
    let w_u = reader.matrix("W_U", v, d)?;
    let mut layers = Vec::with_capacity(config.num_layers);
    for l in 1..=config.num_layers {
        let heads = |kind: &str, rows: usize, cols: usize| -> Result<Vec<Array2<f64>>> {
            (0..config.num_heads)
                .map(|h| reader.matrix(&format!("layers.{l}.{kind}.{h}"), rows, cols))
                .collect()
        };
        layers.push(LayerWeights {
            w_q: heads("W_Q", dh, d)?,
            w_k: heads("W_K", dh, d)?,
            w_v: heads("W_V", dh, d)?,
            w_o: heads("W_O", d, dh)?,
            w_1: reader.matrix(&format!("layers.{l}.W_1"), dp, d)?,
            w_gate: match config.mlp_kind {
                MlpKind::Gated => Some(reader.matrix(&format!("layers.{l}.W_gate"), dp, d)?),
                MlpKind::Plain => None,
            },
            w_2: reader.matrix(&format!("layers.{l}.W_2"), d, dp)?,
            g_att: reader.vector(&format!("layers.{l}.g_att"), d)?,
            g_mlp: reader.vector(&format!("layers.{l}.g_mlp"), d)?,
        });
    }
    Model::new(config, ModelWeights { w_e, w_u, layers })
}

pub fn read_model(mut input: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    model_from_bytes(&bytes)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Activation;
    use crate::toy::gen_toy_model;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let model = gen_toy_model(7, &ModelConfig::toy(1, 1, 2, 3)).unwrap().model;
        let bytes = model_to_bytes(&model).unwrap();
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(bytes[8 + n - 1], b'\n');
        let header: Value = serde_json::from_slice(&bytes[8..8 + n]).unwrap();
        assert_eq!(header["W_E"]["shape"], serde_json::json!([2, 3]));
        assert_eq!(header["W_E"]["offset"], 0);
        assert_eq!(header["W_U"]["offset"], 48);
        assert_eq!(header["layers.1.W_Q.0"]["dtype"], "f64");
        let payload: usize = canonical_tensors(model.weights())
            .iter()
            .map(|(_, t)| t.shape().iter().product::<usize>() * 8)
            .sum();
        assert_eq!(bytes.len(), 8 + n + payload);
    }

    #[test]
    fn reads_f32_payloads() {
        let cfg = ModelConfig::toy(1, 1, 1, 1);
        let mut header = Map::new();
        header.insert(CONFIG_KEY.into(), serde_json::to_value(&cfg).unwrap());
        let names = [
            "W_E", "W_U", "layers.1.W_Q.0", "layers.1.W_K.0", "layers.1.W_V.0", "layers.1.W_O.0",
        ];
        let mut off = 0;
        let mut payload = Vec::new();
        for name in names {
            header.insert(name.into(), serde_json::json!({"shape":[1,1],"dtype":"f32","offset":off}));
            payload.extend_from_slice(&1.5f32.to_le_bytes());
            off += 4;
        }
        for (name, shape) in [("layers.1.W_1", vec![4, 1]), ("layers.1.W_2", vec![1, 4])] {
            header.insert(name.into(), serde_json::json!({"shape":shape,"dtype":"f32","offset":off}));
            for _ in 0..4 {
                payload.extend_from_slice(&0.25f32.to_le_bytes());
            }
            off += 16;
        }
        for name in ["layers.1.g_att", "layers.1.g_mlp"] {
            header.insert(name.into(), serde_json::json!({"shape":[1],"dtype":"f32","offset":off}));
            payload.extend_from_slice(&1.0f32.to_le_bytes());
            off += 4;
        }
        let mut h = serde_json::to_vec(&Value::Object(header)).unwrap();
        h.push(b'\n');
        let mut bytes = (h.len() as u64).to_le_bytes().to_vec();
        bytes.extend(h);
        bytes.extend(payload);
        let model = model_from_bytes(&bytes).unwrap();
        assert_eq!(model.weights().w_e[[0, 0]], 1.5);
        assert_eq!(model.weights().layers[0].w_2[[0, 3]], 0.25);
    }

    #[test]
    fn truncated_and_corrupt_files() {
        let model = gen_toy_model(1, &ModelConfig::toy(1, 1, 2, 3)).unwrap().model;
        let bytes = model_to_bytes(&model).unwrap();
        assert!(matches!(model_from_bytes(&bytes[..4]), Err(Error::Format(_))));
        assert!(matches!(model_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = 0xff;
        assert!(model_from_bytes(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn roundtrip_is_bit_exact(seed in 0u64..1000, layers in 1usize..3, heads in 1usize..3, gated in any::<bool>()) {
            let mut cfg = ModelConfig::toy(layers, heads, 2 * heads, 5);
            if gated {
                cfg.mlp_kind = MlpKind::Gated;
                cfg.activation = Activation::Silu;
            }
            let model = gen_toy_model(seed, &cfg).unwrap().model;
            let bytes = model_to_bytes(&model).unwrap();
            let back = model_from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &model);
            prop_assert_eq!(model_to_bytes(&back).unwrap(), bytes);
        }
    }
}

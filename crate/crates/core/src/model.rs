//! Model files: a trained network plus the preprocessing fitted with it.
//!
//! Layout: magic `DTXN`, version `u32`, header length `u64`, a JSON header
//! (layer widths, task names, scalar tag, feature pipeline), then every
//! layer's weights row-major followed by its biases, little-endian at the
//! header's scalar width.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeaturePipeline;
use crate::mtnn::Network;
use crate::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"DTXN";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("model stores {found} parameters, reader expects {expected}")]
    ScalarMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    layer_dims: Vec<usize>,
    task_names: Vec<String>,
    scalar: String,
    pipeline: Option<FeaturePipeline>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<F> {
    pub net: Network<F>,
    pub task_names: Vec<String>,
    pub pipeline: Option<FeaturePipeline>,
}

impl<F: Scalar> TrainedModel<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            layer_dims: self.net.layer_dims().to_vec(),
            task_names: self.task_names.clone(),
            scalar: F::TAG.to_string(),
            pipeline: self.pipeline.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + self.net.n_params() * F::WIDTH);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (w, b) in self.net.weights().iter().zip(self.net.biases()) {
            for &v in w.iter() {
                v.write_le(&mut out);
            }
            for &v in b.iter() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| ModelError::Format(e.to_string()))?;
        if header.scalar != F::TAG {
            return Err(ModelError::ScalarMismatch { expected: F::TAG.into(), found: header.scalar });
        }
        let dims = &header.layer_dims;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(bad("invalid layer widths"));
        }
        if header.task_names.len() != dims[dims.len() - 1] {
            return Err(bad("task names do not match the output width"));
        }
        let n_params: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let body = &bytes[16 + len..];
        if body.len() != n_params * F::WIDTH {
            return Err(ModelError::Format(format!(
                "expected {} parameter bytes, found {}",
                n_params * F::WIDTH,
                body.len()
            )));
        }
        let mut values = body.chunks_exact(F::WIDTH).map(F::read_le);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (d_in, d_out) = (w[0], w[1]);
            weights.push(Array2::from_shape_vec((d_out, d_in), values.by_ref().take(d_in * d_out).collect()).unwrap());
            biases.push(Array1::from_iter(values.by_ref().take(d_out)));
        }
        let net = Network::from_parts(weights, biases).map_err(|e| ModelError::Format(e.to_string()))?;
        Ok(TrainedModel { net, task_names: header.task_names, pipeline: header.pipeline })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtnn::init_network;

    #[test]
    fn roundtrip_is_exact() {
        let net = init_network::<f64>(&[5, 4, 3, 2], 9).unwrap();
        let m = TrainedModel { net, task_names: vec!["a".into(), "b".into()], pipeline: None };
        let bytes = m.to_bytes();
        assert_eq!(TrainedModel::<f64>::from_bytes(&bytes).unwrap(), m);
        assert!(matches!(TrainedModel::<f32>::from_bytes(&bytes), Err(ModelError::ScalarMismatch { .. })));
        assert!(TrainedModel::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(TrainedModel::<f64>::from_bytes(&wrong).is_err());
    }
}

//! `PLM1` model checkpoints: extractor, classifier and critic, in that order.
//!
//! Layout: magic, then per network a `u32` layer count and per layer
//! `u32 out`, `u32 in`, `out·in` little-endian `f64` weights (row-major)
//! and `out` `f64` biases.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::codec::{put_f64s, put_u32, to_u32, CodecError, FormatError, Reader};
use crate::nn::{LinearLayer, Mlp, ModelParams, NnError};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"PLM1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("checkpoint describes an invalid model: {0}")]
    Model(#[from] NnError),
}

impl From<FormatError> for CheckpointError {
    fn from(e: FormatError) -> Self {
        CheckpointError::Codec(CodecError::Format(e))
    }
}

pub fn encode<T: Scalar>(model: &ModelParams<T>) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for net in [&model.extractor, &model.classifier, &model.critic] {
        put_u32(&mut out, to_u32(net.layers().len(), "layer count")?);
        for layer in net.layers() {
            put_u32(&mut out, to_u32(layer.out_dim(), "layer width")?);
            put_u32(&mut out, to_u32(layer.in_dim(), "layer width")?);
            put_f64s(&mut out, layer.weight.data().iter().map(|v| v.as_f64()));
            put_f64s(&mut out, layer.bias.data().iter().map(|v| v.as_f64()));
        }
    }
    Ok(out)
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>, CheckpointError> {
    let mut r = Reader::new(bytes);
    r.expect_tag(MAGIC)?;
    let mut nets = Vec::with_capacity(3);
    for name in ["extractor", "classifier", "critic"] {
        let at = r.offset();
        let count = r.u32("layer count")? as usize;
        if count == 0 {
            return Err(FormatError {
                offset: at,
                reason: format!("{name} has no layers"),
            }
            .into());
        }
        let mut layers = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let out = r.u32("layer width")? as usize;
            let inp = r.u32("layer width")? as usize;
            let body = r.offset();
            let w = r.f64s(out.saturating_mul(inp), "weights")?;
            let b = r.f64s(out, "biases")?;
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(FormatError {
                    offset: body,
                    reason: format!("non-finite parameter in {name}"),
                }
                .into());
            }
            let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
            let weight = Tensor::new(vec![out, inp], conv(w)).map_err(NnError::from)?;
            let bias = Tensor::new(vec![out], conv(b)).map_err(NnError::from)?;
            layers.push(LinearLayer::new(weight, bias)?);
        }
        nets.push(Mlp::from_layers(layers)?);
    }
    if r.remaining() > 0 {
        return Err(r.error("unexpected trailing bytes").into());
    }
    let critic = nets.pop().expect("three networks");
    let classifier = nets.pop().expect("three networks");
    let extractor = nets.pop().expect("three networks");
    let model = ModelParams {
        extractor,
        classifier,
        critic,
    };
    model.validate()?;
    Ok(model)
}

pub fn save<T: Scalar>(model: &ModelParams<T>, path: &Path) -> Result<(), CodecError> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<ModelParams<T>, CheckpointError> {
    let bytes = fs::read(path).map_err(CodecError::from)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    fn small() -> ModelParams<f64> {
        let spec = ModelSpec {
            extractor_hidden: vec![5],
            rep_dim: 4,
            critic_hidden: vec![3],
            ..ModelSpec::new(6, 3)
        };
        ModelParams::init(&spec, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = small();
        let bytes = encode(&m).unwrap();
        let back: ModelParams<f64> = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&small()).unwrap();
        assert_eq!(&bytes[..4], b"PLM1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 6);
    }

    #[test]
    fn truncation_and_trailing_bytes_are_errors() {
        let bytes = encode(&small()).unwrap();
        for cut in [0, 3, 4, 10, bytes.len() - 1] {
            assert!(decode::<f64>(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        match decode::<f64>(&long).unwrap_err() {
            CheckpointError::Codec(CodecError::Format(f)) => assert_eq!(f.offset, bytes.len()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_widths_are_rejected() {
        let mut bytes = encode(&small()).unwrap();
        // Extractor layer 0 claims 7 inputs instead of 6.
        bytes[12..16].copy_from_slice(&7u32.to_le_bytes());
        assert!(decode::<f64>(&bytes).is_err());
    }
}

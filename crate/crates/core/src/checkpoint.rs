//! Model checkpoints as a stream of tensors.
//!
//! The first tensor is a `u8` vector holding a UTF-8 JSON header:
//!
//! ```json
//! {"format": "pmri-checkpoint", "version": 1, "mode": "joint", "unroll": 3,
//!  "lambda": 100.0, "coils": 4, "classes": 4, "widths": [16, 32, 64],
//!  "cascade_widths": null, "tensors": ["theta.enc1a.weight", ...]}
//! ```
//!
//! It is followed by one `f64` tensor per entry of `tensors`, in that order.
//! Weights have shape `[out, in, k, k]`, biases `[out]`. Only the groups that
//! take part in the model's mode are stored: a recon-only checkpoint has no
//! `psi.*` tensors, and a cascade checkpoint stores its segmentation network
//! under `cascade_encoder.*` and `cascade_decoder.*` instead of `psi.*`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ConvLayer, Group, NetParams, Real};
use crate::tensor_io::{decode_tensor, encode_tensor, Tensor, TensorData};
use crate::unrolled::{CascadeHead, Mode, UnrolledModel};

pub const CHECKPOINT_FORMAT: &str = "pmri-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_WIDTH: usize = 256;
const MAX_CHANNELS: usize = 64;
const MAX_UNROLL: usize = 1000;

const ENCODER_NAMES: [&str; 6] = ["enc1a", "enc1b", "enc2a", "enc2b", "enc3a", "enc3b"];
const DECODER_NAMES: [&str; 5] = ["up2", "fuse2", "up1", "fuse1", "head"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub mode: String,
    pub unroll: usize,
    pub lambda: f64,
    pub coils: usize,
    pub classes: usize,
    pub widths: [usize; 3],
    pub cascade_widths: Option<[usize; 3]>,
    pub tensors: Vec<String>,
}

fn named_layers<T: Real>(model: &UnrolledModel<T>) -> Vec<(String, &ConvLayer<T>)> {
    let mut out = Vec::new();
    for (group, name, layer) in model.params.layers() {
        let active = match group {
            Group::Theta | Group::Phi => true,
            Group::Psi => model.mode == Mode::Joint,
        };
        if active {
            out.push((format!("{}.{name}", group.name()), layer));
        }
    }
    if let Some(head) = &model.cascade {
        for (layer, name) in head.encoder.layers.iter().zip(ENCODER_NAMES) {
            out.push((format!("cascade_encoder.{name}"), layer));
        }
        for (layer, name) in head.decoder.layers.iter().zip(DECODER_NAMES) {
            out.push((format!("cascade_decoder.{name}"), layer));
        }
    }
    out
}

fn named_layers_mut<T: Real>(model: &mut UnrolledModel<T>) -> Vec<(String, &mut ConvLayer<T>)> {
    let mode = model.mode;
    let mut out = Vec::new();
    for (group, name, layer) in model.params.layers_mut() {
        if group != Group::Psi || mode == Mode::Joint {
            out.push((format!("{}.{name}", group.name()), layer));
        }
    }
    if let Some(head) = &mut model.cascade {
        for (layer, name) in head.encoder.layers.iter_mut().zip(ENCODER_NAMES) {
            out.push((format!("cascade_encoder.{name}"), layer));
        }
        for (layer, name) in head.decoder.layers.iter_mut().zip(DECODER_NAMES) {
            out.push((format!("cascade_decoder.{name}"), layer));
        }
    }
    out
}

fn f64_tensor(shape: Vec<usize>, values: &[impl Real]) -> Tensor {
    Tensor::new(shape, TensorData::F64(values.iter().map(|v| v.as_f64()).collect()))
        .expect("layer shape matches its data")
}

pub fn checkpoint_header<T: Real>(model: &UnrolledModel<T>) -> CheckpointHeader {
    let mut tensors = Vec::new();
    for (name, _) in named_layers(model) {
        tensors.push(format!("{name}.weight"));
        tensors.push(format!("{name}.bias"));
    }
    CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        mode: model.mode.name().into(),
        unroll: model.unroll,
        lambda: model.lambda,
        coils: model.params.coils(),
        classes: model.params.classes(),
        widths: model.params.widths(),
        cascade_widths: model.cascade.as_ref().map(|c| c.encoder.widths()),
        tensors,
    }
}

/// Serializes a model; parameters are widened to `f64`.
pub fn encode_checkpoint<T: Real>(model: &UnrolledModel<T>) -> Vec<u8> {
    let header = checkpoint_header(model);
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = encode_tensor(&Tensor::new(vec![json.len()], TensorData::U8(json)).expect("1-d tensor"));
    for (_, layer) in named_layers(model) {
        let k = layer.kernel;
        out.extend(encode_tensor(&f64_tensor(vec![layer.out_ch, layer.in_ch, k, k], &layer.weight)));
        out.extend(encode_tensor(&f64_tensor(vec![layer.out_ch], &layer.bias)));
    }
    out
}

/// Reads only the JSON header of a checkpoint stream.
pub fn decode_checkpoint_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    let (tensor, used) = decode_tensor(bytes)?;
    let json = match (tensor.shape.len(), tensor.data) {
        (1, TensorData::U8(v)) => v,
        _ => return Err(Error::Format("checkpoint must start with a 1-d u8 header tensor".into())),
    };
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint format {} v{}",
            header.format, header.version
        )));
    }
    Ok((header, used))
}

fn check_limits(h: &CheckpointHeader) -> Result<()> {
    let widths_ok = |w: &[usize; 3]| w.iter().all(|&c| (1..=MAX_WIDTH).contains(&c));
    if !widths_ok(&h.widths) || !h.cascade_widths.as_ref().is_none_or(widths_ok) {
        return Err(Error::Format(format!("checkpoint widths must lie in 1..={MAX_WIDTH}")));
    }
    if !(1..=MAX_CHANNELS).contains(&h.coils) || !(1..=MAX_CHANNELS).contains(&h.classes) {
        return Err(Error::Format(format!("checkpoint coils/classes must lie in 1..={MAX_CHANNELS}")));
    }
    if h.unroll > MAX_UNROLL {
        return Err(Error::Format(format!("checkpoint unroll exceeds {MAX_UNROLL}")));
    }
    Ok(())
}

/// Parses a checkpoint. The stream must contain exactly the tensors its
/// header announces, with the shapes implied by the architecture.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<UnrolledModel<f64>> {
    let (header, mut pos) = decode_checkpoint_header(bytes)?;
    check_limits(&header)?;
    let mode = Mode::parse(&header.mode).map_err(|e| Error::Format(e.to_string()))?;
    if (mode == Mode::Cascade) != header.cascade_widths.is_some() {
        return Err(Error::Format("cascade_widths must be set exactly in cascade mode".into()));
    }

    // Parse all payload tensors before allocating the model, so a short
    // stream fails without building anything.
    let mut tensors = Vec::with_capacity(header.tensors.len().min(64));
    while pos < bytes.len() {
        let (t, used) = decode_tensor(&bytes[pos..])?;
        pos += used;
        tensors.push(t);
    }
    if tensors.len() != header.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint announces {} tensors but holds {}",
            header.tensors.len(),
            tensors.len()
        )));
    }

    let mut model = UnrolledModel {
        params: NetParams::<f64>::init(header.coils, header.classes, header.widths, 0).zeros_like(),
        cascade: header
            .cascade_widths
            .map(|cw| CascadeHead::init(header.classes, cw, 0).zeros_like()),
        unroll: header.unroll,
        lambda: header.lambda,
        mode,
    };
    model.validate().map_err(|e| Error::Format(e.to_string()))?;

    let slots = named_layers_mut(&mut model);
    if slots.len() * 2 != header.tensors.len() {
        return Err(Error::Format(format!(
            "{} mode needs {} tensors, header lists {}",
            mode.name(),
            slots.len() * 2,
            header.tensors.len()
        )));
    }
    let mut values = tensors.into_iter().zip(&header.tensors);
    for (name, layer) in slots {
        let k = layer.kernel;
        for (suffix, shape, dst) in [
            ("weight", vec![layer.out_ch, layer.in_ch, k, k], &mut layer.weight),
            ("bias", vec![layer.out_ch], &mut layer.bias),
        ] {
            let expected = format!("{name}.{suffix}");
            let (t, listed) = values.next().expect("counts checked above");
            if *listed != expected {
                return Err(Error::Format(format!("expected tensor `{expected}`, header lists `{listed}`")));
            }
            if t.shape != shape {
                return Err(Error::Shape(format!("`{expected}` has shape {:?}, expected {shape:?}", t.shape)));
            }
            match t.data {
                TensorData::F64(v) => *dst = v,
                other => {
                    return Err(Error::Format(format!("`{expected}` must be f64, got {:?}", other.dtype())))
                }
            }
        }
    }
    Ok(model)
}

pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, model: &UnrolledModel<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<UnrolledModel<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

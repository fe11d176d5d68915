//! Minimal binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 0..4       | magic `PMRI`                              |
//! | 4          | format version (1)                        |
//! | 5          | dtype: 0=f32, 1=f64, 2=c64, 3=u8          |
//! | 6          | ndim                                      |
//! | 7          | reserved, always 0                        |
//! | 8..8+4*nd  | shape, one `u32` per dimension            |
//! | ...        | raw payload, row-major                    |
//!
//! `c64` is a complex number stored as two `f32` (real, imaginary).
//! Several tensors may be concatenated in one byte stream; [`decode_tensor`]
//! reports how many bytes it consumed.

use std::fs;
use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::types::{
    ComplexImage, KSpaceData, LabelMap, MultiCoilImage, ProbMap, SamplingMask,
};

pub const MAGIC: &[u8; 4] = b"PMRI";
pub const VERSION: u8 = 1;
const FIXED_HEADER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    C64 = 2,
    U8 = 3,
}

impl DType {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::C64),
            3 => Ok(DType::U8),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn element_size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::C64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::C64(_) => DType::C64,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::C64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional array as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let count = element_count(&shape)?;
        if count != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} elements but data has {}",
                shape,
                count,
                data.len()
            )));
        }
        if shape.len() > u8::MAX as usize || shape.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Shape(format!("shape {shape:?} not representable")));
        }
        Ok(Self { shape, data })
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    /// Bitwise equality (distinguishes NaN payloads and signed zeros).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits()))
            }
            (TensorData::F64(a), TensorData::F64(b)) => {
                a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits()))
            }
            (TensorData::C64(a), TensorData::C64(b)) => a
                .iter()
                .map(|z| (z.re.to_bits(), z.im.to_bits()))
                .eq(b.iter().map(|z| (z.re.to_bits(), z.im.to_bits()))),
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }

    fn expect_shape(&self, ndim: usize, what: &str) -> Result<()> {
        if self.shape.len() != ndim {
            return Err(Error::Shape(format!(
                "{what} needs a {ndim}-d tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

fn element_count(shape: &[usize]) -> Result<usize> {
    shape.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))
    })
}

/// Serializes a tensor to bytes.
pub fn encode_tensor(tensor: &Tensor) -> Vec<u8> {
    let payload = tensor.data.len() * tensor.dtype().element_size();
    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * tensor.shape.len() + payload);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(tensor.dtype() as u8);
    out.push(tensor.shape.len() as u8);
    out.push(0);
    for &d in &tensor.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match &tensor.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::C64(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
        TensorData::U8(v) => out.extend_from_slice(v),
    }
    out
}

fn take(bytes: &[u8], offset: usize, len: usize, expected_total: usize) -> Result<&[u8]> {
    let end = offset + len;
    if bytes.len() < end {
        return Err(Error::Truncated {
            expected: expected_total,
            missing: end - bytes.len(),
        });
    }
    Ok(&bytes[offset..end])
}

/// Parses one tensor from the front of `bytes`; returns it with the number
/// of bytes consumed.
pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, usize)> {
    let header = take(bytes, 0, FIXED_HEADER, FIXED_HEADER)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected PMRI".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let dtype = DType::from_code(header[5])?;
    let ndim = header[6] as usize;
    if header[7] != 0 {
        return Err(Error::Format("reserved header byte is nonzero".into()));
    }
    let header_len = FIXED_HEADER + 4 * ndim;
    let dims = take(bytes, FIXED_HEADER, 4 * ndim, header_len)?;
    let shape: Vec<usize> = dims
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = element_count(&shape)?;
    let payload_len = count
        .checked_mul(dtype.element_size())
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let total = header_len
        .checked_add(payload_len)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let payload = take(bytes, header_len, payload_len, total)?;

    let data = match dtype {
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ),
        DType::C64 => TensorData::C64(
            payload
                .chunks_exact(8)
                .map(|c| {
                    Complex32::new(
                        f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                        f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                    )
                })
                .collect(),
        ),
        DType::U8 => TensorData::U8(payload.to_vec()),
    };
    Ok((Tensor { shape, data }, total))
}

/// Parses a byte buffer holding exactly one tensor.
pub fn decode_single(bytes: &[u8]) -> Result<Tensor> {
    let (tensor, used) = decode_tensor(bytes)?;
    if used != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor payload",
            bytes.len() - used
        )));
    }
    Ok(tensor)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(tensor)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_single(&bytes).map_err(|e| match e {
        Error::Truncated { .. } | Error::Format(_) => {
            Error::Format(format!("{}: {}", path.display(), e))
        }
        other => other,
    })
}

/// Conversion between domain types and on-disk tensors.
///
/// Complex data is narrowed to `f32` pairs on the way out, so for complex
/// types only `to_tensor(from_tensor(t)) == t` is bit-exact.
pub trait TensorCodec: Sized {
    fn to_tensor(&self) -> Tensor;
    fn from_tensor(tensor: Tensor) -> Result<Self>;
}

pub fn save<T: TensorCodec>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_tensor(path, &value.to_tensor())
}

pub fn load<T: TensorCodec>(path: impl AsRef<Path>) -> Result<T> {
    T::from_tensor(read_tensor(path)?)
}

fn narrow(data: &[Complex64]) -> Vec<Complex32> {
    data.iter()
        .map(|z| Complex32::new(z.re as f32, z.im as f32))
        .collect()
}

fn widen(data: Vec<Complex32>) -> Vec<Complex64> {
    data.into_iter()
        .map(|z| Complex64::new(z.re as f64, z.im as f64))
        .collect()
}

fn complex_payload(tensor: Tensor, what: &str) -> Result<(Vec<usize>, Vec<Complex64>)> {
    match tensor.data {
        TensorData::C64(v) => Ok((tensor.shape, widen(v))),
        other => Err(Error::Format(format!(
            "{what} needs dtype c64, got {:?}",
            other.dtype()
        ))),
    }
}

fn byte_payload(tensor: Tensor, what: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    match tensor.data {
        TensorData::U8(v) => Ok((tensor.shape, v)),
        other => Err(Error::Format(format!(
            "{what} needs dtype u8, got {:?}",
            other.dtype()
        ))),
    }
}

impl TensorCodec for ComplexImage {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: TensorData::C64(narrow(&self.data)),
        }
    }

    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(2, "complex image")?;
        let (shape, data) = complex_payload(tensor, "complex image")?;
        ComplexImage::new(shape[0], shape[1], data)
    }
}

impl TensorCodec for MultiCoilImage {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.coils, self.height, self.width],
            data: TensorData::C64(narrow(&self.data)),
        }
    }

    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(3, "multi-coil image")?;
        let (shape, data) = complex_payload(tensor, "multi-coil image")?;
        MultiCoilImage::new(shape[0], shape[1], shape[2], data)
    }
}

impl TensorCodec for KSpaceData {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.coils, self.height, self.width],
            data: TensorData::C64(narrow(&self.data)),
        }
    }

    /// The mask invariant is checked separately by [`KSpaceData::new`] once
    /// the paired mask is known.
    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(3, "k-space")?;
        let (shape, data) = complex_payload(tensor, "k-space")?;
        let full = SamplingMask::full(shape[1], shape[2]);
        KSpaceData::new(shape[0], shape[1], shape[2], data, &full)
    }
}

impl TensorCodec for SamplingMask {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: TensorData::U8(self.keep.clone()),
        }
    }

    /// The acceleration target is not part of the tensor; it is set to the
    /// realized `1 / sampled_fraction` and overridden from manifests.
    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(2, "mask")?;
        let (shape, keep) = byte_payload(tensor, "mask")?;
        let sampled = keep.iter().filter(|&&k| k != 0).count().max(1);
        let accel = keep.len().max(1) as f64 / sampled as f64;
        SamplingMask::new(shape[0], shape[1], keep, accel)
    }
}

impl TensorCodec for LabelMap {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: TensorData::U8(self.labels.clone()),
        }
    }

    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(2, "label map")?;
        let (shape, labels) = byte_payload(tensor, "label map")?;
        LabelMap::new(shape[0], shape[1], labels)
    }
}

impl TensorCodec for ProbMap {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.num_classes, self.height, self.width],
            data: TensorData::F64(self.probs.clone()),
        }
    }

    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(3, "probability map")?;
        match tensor.data {
            TensorData::F64(v) => ProbMap::new(tensor.shape[1], tensor.shape[2], tensor.shape[0], v),
            other => Err(Error::Format(format!(
                "probability map needs dtype f64, got {:?}",
                other.dtype()
            ))),
        }
    }
}

/// A real-valued image such as a sum-of-squares magnitude, stored as f32.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl TensorCodec for RealImage {
    fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: TensorData::F32(self.data.iter().map(|&v| v as f32).collect()),
        }
    }

    fn from_tensor(tensor: Tensor) -> Result<Self> {
        tensor.expect_shape(2, "real image")?;
        let data = match tensor.data {
            TensorData::F32(v) => v.into_iter().map(f64::from).collect(),
            TensorData::F64(v) => v,
            other => {
                return Err(Error::Format(format!(
                    "real image needs dtype f32 or f64, got {:?}",
                    other.dtype()
                )))
            }
        };
        Ok(RealImage {
            height: tensor.shape[0],
            width: tensor.shape[1],
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_complex_2x2_layout() {
        let t = Tensor::new(vec![2, 2], TensorData::C64(vec![Complex32::new(0.0, 0.0); 4])).unwrap();
        let bytes = encode_tensor(&t);
        assert_eq!(bytes.len(), 16 + 32);
        assert_eq!(&bytes[..8], &[b'P', b'M', b'R', b'I', 1, 2, 2, 0]);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 2, 0, 0, 0]);
        let back = decode_single(&bytes).unwrap();
        assert!(back.bit_eq(&t));
    }

    #[test]
    fn truncated_payload_names_missing_bytes() {
        let t = Tensor::new(vec![3], TensorData::F64(vec![1.0, 2.0, 3.0])).unwrap();
        let bytes = encode_tensor(&t);
        let err = decode_single(&bytes[..bytes.len() - 5]).unwrap_err();
        match err {
            Error::Truncated { expected, missing } => {
                assert_eq!(expected, bytes.len());
                assert_eq!(missing, 5);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err_string(&bytes[..bytes.len() - 5]).contains("missing 5 bytes"));
    }

    fn err_string(bytes: &[u8]) -> String {
        decode_single(bytes).unwrap_err().to_string()
    }

    #[test]
    fn rejects_bad_magic_and_dtype() {
        assert!(decode_single(b"XMRI\x01\x00\x00\x00").is_err());
        assert!(decode_single(b"PMRI\x01\x09\x00\x00").is_err());
        assert!(decode_single(b"PMRI\x02\x00\x00\x00").is_err());
    }

    #[test]
    fn huge_shape_does_not_allocate() {
        let mut bytes = b"PMRI\x01\x01\x02\x00".to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_single(&bytes).is_err());
    }

    #[test]
    fn scalar_tensor_has_one_element() {
        let t = Tensor::new(vec![], TensorData::F32(vec![2.5])).unwrap();
        assert!(decode_single(&encode_tensor(&t)).unwrap().bit_eq(&t));
    }

    #[test]
    fn missing_parent_dir_reports_path() {
        let t = Tensor::new(vec![1], TensorData::U8(vec![1])).unwrap();
        let err = write_tensor("/nonexistent-dir-xyz/t.pmri", &t).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir-xyz/t.pmri"));
    }
}

//! Image, k-space, mask, label and probability containers.
//!
//! All complex data is held as `Complex64` in memory; the on-disk format
//! stores complex values as pairs of `f32` (see [`crate::tensor_io`]).

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Number of tissue classes: background, CSF, GM, WM.
pub const NUM_CLASSES: usize = 4;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["background", "csf", "gm", "wm"];

fn check_finite(data: &[Complex64], what: &str) -> Result<()> {
    if data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// A single complex image in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "image data has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        check_finite(&data, "complex image")?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_real(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(
            height,
            width,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `coils` complex planes of identical shape, stored plane after plane.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCoilImage {
    pub coils: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl MultiCoilImage {
    pub fn zeros(coils: usize, height: usize, width: usize) -> Self {
        Self {
            coils,
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); coils * height * width],
        }
    }

    pub fn new(coils: usize, height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if coils == 0 {
            return Err(Error::Shape("multi-coil image needs at least one coil".into()));
        }
        if data.len() != coils * height * width {
            return Err(Error::Shape(format!(
                "multi-coil data has {} values, expected {}x{}x{}",
                data.len(),
                coils,
                height,
                width
            )));
        }
        check_finite(&data, "multi-coil image")?;
        Ok(Self {
            coils,
            height,
            width,
            data,
        })
    }

    pub fn from_planes(planes: Vec<ComplexImage>) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Shape("no coil planes".into()))?;
        let (h, w) = (first.height, first.width);
        if planes.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::Shape("coil planes differ in shape".into()));
        }
        let coils = planes.len();
        let data = planes.into_iter().flat_map(|p| p.data).collect();
        Ok(Self {
            coils,
            height: h,
            width: w,
            data,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, coil: usize) -> &[Complex64] {
        let n = self.plane_len();
        &self.data[coil * n..(coil + 1) * n]
    }

    pub fn plane_mut(&mut self, coil: usize) -> &mut [Complex64] {
        let n = self.plane_len();
        &mut self.data[coil * n..(coil + 1) * n]
    }

    pub fn coil_image(&self, coil: usize) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.plane(coil).to_vec(),
        }
    }

    pub fn same_shape(&self, other: &MultiCoilImage) -> bool {
        self.coils == other.coils && self.height == other.height && self.width == other.width
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Complex inner product `<self, other> = sum conj(self) * other`.
    pub fn dot(&self, other: &MultiCoilImage) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    /// Root-sum-of-squares coil combination, `sqrt(sum_i |gamma_i|^2)` per pixel.
    pub fn sos(&self) -> Vec<f64> {
        let n = self.plane_len();
        let mut acc = vec![0.0; n];
        for plane in self.data.chunks_exact(n) {
            for (a, z) in acc.iter_mut().zip(plane) {
                *a += z.norm_sqr();
            }
        }
        acc.iter_mut().for_each(|a| *a = a.sqrt());
        acc
    }
}

/// Multi-coil Fourier samples; unsampled entries are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    pub coils: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl KSpaceData {
    pub fn zeros(coils: usize, height: usize, width: usize) -> Self {
        Self {
            coils,
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); coils * height * width],
        }
    }

    /// Builds k-space and enforces the zero-outside-mask invariant.
    pub fn new(
        coils: usize,
        height: usize,
        width: usize,
        data: Vec<Complex64>,
        mask: &SamplingMask,
    ) -> Result<Self> {
        if data.len() != coils * height * width {
            return Err(Error::Shape(format!(
                "k-space data has {} values, expected {}x{}x{}",
                data.len(),
                coils,
                height,
                width
            )));
        }
        if mask.height != height || mask.width != width {
            return Err(Error::Shape(format!(
                "k-space {}x{} does not match mask {}x{}",
                height, width, mask.height, mask.width
            )));
        }
        check_finite(&data, "k-space")?;
        let n = height * width;
        for (i, z) in data.iter().enumerate() {
            if mask.keep[i % n] == 0 && (z.re != 0.0 || z.im != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "k-space entry {i} is nonzero at an unsampled location"
                )));
            }
        }
        Ok(Self {
            coils,
            height,
            width,
            data,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, coil: usize) -> &[Complex64] {
        let n = self.plane_len();
        &self.data[coil * n..(coil + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Binary k-space sampling pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub height: usize,
    pub width: usize,
    pub keep: Vec<u8>,
    pub accel: f64,
}

impl SamplingMask {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            keep: vec![1; height * width],
            accel: 1.0,
        }
    }

    pub fn new(height: usize, width: usize, keep: Vec<u8>, accel: f64) -> Result<Self> {
        if keep.len() != height * width {
            return Err(Error::Shape(format!(
                "mask has {} entries, expected {}x{}",
                keep.len(),
                height,
                width
            )));
        }
        if keep.iter().any(|&k| k > 1) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        if !(accel >= 1.0) {
            return Err(Error::InvalidArgument(format!("acceleration {accel} < 1")));
        }
        Ok(Self {
            height,
            width,
            keep,
            accel,
        })
    }

    pub fn is_sampled(&self, idx: usize) -> bool {
        self.keep[idx] != 0
    }

    pub fn sampled_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k != 0).count()
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.sampled_count() as f64 / self.keep.len() as f64
    }
}

/// Per-pixel tissue class index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "label map has {} entries, expected {}x{}",
                labels.len(),
                height,
                width
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range (num classes {NUM_CLASSES})"
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Per-pixel class probabilities, stored class-major (`probs[c * H * W + r]`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub probs: Vec<f64>,
}

impl ProbMap {
    pub fn new(height: usize, width: usize, num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if probs.len() != n * num_classes {
            return Err(Error::Shape(format!(
                "probability map has {} values, expected {}x{}x{}",
                probs.len(),
                num_classes,
                height,
                width
            )));
        }
        for r in 0..n {
            let mut total = 0.0;
            for c in 0..num_classes {
                let p = probs[c * n + r];
                if !(p >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "negative or NaN probability at pixel {r}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "probabilities at pixel {r} sum to {total}"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            probs,
        })
    }

    /// Per-pixel softmax over class-major logits.
    pub fn from_logits(height: usize, width: usize, num_classes: usize, logits: &[f64]) -> Self {
        let n = height * width;
        assert_eq!(logits.len(), n * num_classes, "logit buffer size");
        let mut probs = vec![0.0; n * num_classes];
        for r in 0..n {
            let max = (0..num_classes)
                .map(|c| logits[c * n + r])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for c in 0..num_classes {
                let e = (logits[c * n + r] - max).exp();
                probs[c * n + r] = e;
                total += e;
            }
            for c in 0..num_classes {
                probs[c * n + r] /= total;
            }
        }
        Self {
            height,
            width,
            num_classes,
            probs,
        }
    }

    pub fn prob(&self, class: usize, pixel: usize) -> f64 {
        self.probs[class * self.height * self.width + pixel]
    }

    /// Hard labels; ties go to the lowest class index.
    pub fn argmax(&self) -> LabelMap {
        let n = self.height * self.width;
        let labels = (0..n)
            .map(|r| {
                let mut best = 0;
                for c in 1..self.num_classes {
                    if self.probs[c * n + r] > self.probs[best * n + r] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            labels,
        }
    }
}

/// One simulated acquisition together with its references.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kspace: KSpaceData,
    pub mask: SamplingMask,
    /// Coil sensitivity maps used to simulate the data (never used by the solvers).
    pub sens: MultiCoilImage,
    /// Sum-of-squares magnitude of the noiseless coil images.
    pub reference: ComplexImage,
    pub labels: Option<LabelMap>,
    pub seed: u64,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.mask.height, self.mask.width);
        if self.kspace.height != h || self.kspace.width != w {
            return Err(Error::Shape("k-space and mask differ in shape".into()));
        }
        if self.sens.height != h || self.sens.width != w || self.sens.coils != self.kspace.coils {
            return Err(Error::Shape("sensitivities do not match k-space".into()));
        }
        if self.reference.height != h || self.reference.width != w {
            return Err(Error::Shape("reference does not match k-space".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.height != h || labels.width != w {
                return Err(Error::Shape("labels do not match k-space".into()));
            }
        }
        Ok(())
    }

    pub fn is_labelled(&self) -> bool {
        self.labels.is_some()
    }

    /// Rescales k-space and reference by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.kspace.scale(factor);
        self.reference.data.iter_mut().for_each(|z| *z *= factor);
        self
    }
}

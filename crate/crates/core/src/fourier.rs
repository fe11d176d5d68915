//! Centered unitary 2-D FFT and the multi-coil measurement operator.
//!
//! Coil sensitivities are folded into the unknowns, so the forward model
//! is a masked Fourier transform applied coil by coil and `A^H A` is
//! diagonal in k-space.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::types::{ComplexImage, KSpaceData, MultiCoilImage, SamplingMask};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn transform_plane(plane: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    debug_assert_eq!(plane.len(), height * width);
    if plane.is_empty() {
        return;
    }
    // ifftshift
    let mut buf = vec![Complex64::new(0.0, 0.0); plane.len()];
    let (hs, ws) = (height / 2, width / 2);
    for i in 0..height {
        let si = (i + hs) % height;
        for j in 0..width {
            buf[i * width + j] = plane[si * width + (j + ws) % width];
        }
    }

    plan(width, inverse).process(&mut buf);
    let mut cols = vec![Complex64::new(0.0, 0.0); plane.len()];
    for i in 0..height {
        for j in 0..width {
            cols[j * height + i] = buf[i * width + j];
        }
    }
    plan(height, inverse).process(&mut cols);

    // fftshift + unitary scaling
    let scale = 1.0 / ((height * width) as f64).sqrt();
    let (hb, wb) = (height - hs, width - ws);
    for i in 0..height {
        let si = (i + hb) % height;
        for j in 0..width {
            let sj = (j + wb) % width;
            plane[i * width + j] = cols[sj * height + si] * scale;
        }
    }
}

/// In-place centered unitary forward FFT of one row-major plane.
pub fn fft2c_inplace(plane: &mut [Complex64], height: usize, width: usize) {
    transform_plane(plane, height, width, false);
}

/// In-place centered unitary inverse FFT of one row-major plane.
pub fn ifft2c_inplace(plane: &mut [Complex64], height: usize, width: usize) {
    transform_plane(plane, height, width, true);
}

pub fn fft2c(x: &ComplexImage) -> ComplexImage {
    let mut out = x.clone();
    fft2c_inplace(&mut out.data, x.height, x.width);
    out
}

pub fn ifft2c(x: &ComplexImage) -> ComplexImage {
    let mut out = x.clone();
    ifft2c_inplace(&mut out.data, x.height, x.width);
    out
}

fn check_mask(coils_h: usize, coils_w: usize, mask: &SamplingMask) -> Result<()> {
    if mask.height != coils_h || mask.width != coils_w {
        return Err(Error::Shape(format!(
            "data is {}x{} but mask is {}x{}",
            coils_h, coils_w, mask.height, mask.width
        )));
    }
    Ok(())
}

/// Masked multi-coil Fourier operator `A`.
#[derive(Clone, Debug)]
pub struct ForwardOp<'a> {
    pub mask: &'a SamplingMask,
    pub coils: usize,
}

impl<'a> ForwardOp<'a> {
    pub fn new(mask: &'a SamplingMask, coils: usize) -> Self {
        Self { mask, coils }
    }

    pub fn forward(&self, gamma: &MultiCoilImage) -> Result<KSpaceData> {
        if gamma.coils != self.coils {
            return Err(Error::Shape(format!(
                "operator has {} coils, image has {}",
                self.coils, gamma.coils
            )));
        }
        apply_forward(gamma, self.mask)
    }

    pub fn adjoint(&self, b: &KSpaceData) -> Result<MultiCoilImage> {
        if b.coils != self.coils {
            return Err(Error::Shape(format!(
                "operator has {} coils, k-space has {}",
                self.coils, b.coils
            )));
        }
        apply_adjoint(b, self.mask)
    }

    /// `A^H A x`, which is `F^H M F` coil by coil.
    pub fn normal(&self, x: &MultiCoilImage) -> Result<MultiCoilImage> {
        check_mask(x.height, x.width, self.mask)?;
        Ok(masked_projection(x, self.mask))
    }
}

/// `b = M F gamma` per coil.
pub fn apply_forward(gamma: &MultiCoilImage, mask: &SamplingMask) -> Result<KSpaceData> {
    check_mask(gamma.height, gamma.width, mask)?;
    let (h, w) = (gamma.height, gamma.width);
    let mut data = gamma.data.clone();
    for plane in data.chunks_exact_mut(h * w) {
        fft2c_inplace(plane, h, w);
        for (z, &k) in plane.iter_mut().zip(&mask.keep) {
            if k == 0 {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(KSpaceData {
        coils: gamma.coils,
        height: h,
        width: w,
        data,
    })
}

/// `A^H b = F^H M b` per coil.
pub fn apply_adjoint(b: &KSpaceData, mask: &SamplingMask) -> Result<MultiCoilImage> {
    check_mask(b.height, b.width, mask)?;
    let (h, w) = (b.height, b.width);
    let mut data = b.data.clone();
    for plane in data.chunks_exact_mut(h * w) {
        for (z, &k) in plane.iter_mut().zip(&mask.keep) {
            if k == 0 {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        ifft2c_inplace(plane, h, w);
    }
    Ok(MultiCoilImage {
        coils: b.coils,
        height: h,
        width: w,
        data,
    })
}

fn masked_projection(x: &MultiCoilImage, mask: &SamplingMask) -> MultiCoilImage {
    let (h, w) = (x.height, x.width);
    let mut out = x.clone();
    for plane in out.data.chunks_exact_mut(h * w) {
        fft2c_inplace(plane, h, w);
        for (z, &k) in plane.iter_mut().zip(&mask.keep) {
            if k == 0 {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        ifft2c_inplace(plane, h, w);
    }
    out
}

fn check_dc_inputs(
    z: &MultiCoilImage,
    b: &KSpaceData,
    mask: &SamplingMask,
    lambda: f64,
) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "data-consistency weight must be positive, got {lambda}"
        )));
    }
    if z.coils != b.coils || z.height != b.height || z.width != b.width {
        return Err(Error::Shape("denoiser output and k-space differ in shape".into()));
    }
    check_mask(z.height, z.width, mask)
}

/// Closed-form solve of `(A^H A + lambda I) x = A^H b + lambda z`.
///
/// In k-space each entry decouples: sampled locations become
/// `(b + lambda z_hat) / (1 + lambda)` and unsampled ones keep `z_hat`.
pub fn dc_solve(
    z: &MultiCoilImage,
    b: &KSpaceData,
    mask: &SamplingMask,
    lambda: f64,
) -> Result<MultiCoilImage> {
    check_dc_inputs(z, b, mask, lambda)?;
    let (h, w) = (z.height, z.width);
    let n = h * w;
    let mut out = z.clone();
    let inv = 1.0 / (1.0 + lambda);
    for (coil, plane) in out.data.chunks_exact_mut(n).enumerate() {
        fft2c_inplace(plane, h, w);
        let bc = b.plane(coil);
        for idx in 0..n {
            if mask.keep[idx] != 0 {
                plane[idx] = (bc[idx] + plane[idx] * lambda) * inv;
            }
        }
        ifft2c_inplace(plane, h, w);
    }
    Ok(out)
}

/// Transpose (equal to the map itself) of the linear part of [`dc_solve`]
/// with respect to `z`: scales sampled k-space by `lambda / (1 + lambda)`.
pub fn dc_jacobian_apply(g: &MultiCoilImage, mask: &SamplingMask, lambda: f64) -> Result<MultiCoilImage> {
    check_mask(g.height, g.width, mask)?;
    let (h, w) = (g.height, g.width);
    let factor = lambda / (1.0 + lambda);
    let mut out = g.clone();
    for plane in out.data.chunks_exact_mut(h * w) {
        fft2c_inplace(plane, h, w);
        for (v, &k) in plane.iter_mut().zip(&mask.keep) {
            if k != 0 {
                *v *= factor;
            }
        }
        ifft2c_inplace(plane, h, w);
    }
    Ok(out)
}

/// Relative residual of the data-consistency normal equations at `x`.
pub fn dc_normal_residual(
    x: &MultiCoilImage,
    z: &MultiCoilImage,
    b: &KSpaceData,
    mask: &SamplingMask,
    lambda: f64,
) -> Result<f64> {
    check_dc_inputs(z, b, mask, lambda)?;
    let ata = masked_projection(x, mask);
    let atb = apply_adjoint(b, mask)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.data.len() {
        let rhs = atb.data[i] + z.data[i] * lambda;
        let lhs = ata.data[i] + x.data[i] * lambda;
        num += (lhs - rhs).norm_sqr();
        den += rhs.norm_sqr();
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

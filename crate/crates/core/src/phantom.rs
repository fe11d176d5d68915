//! Seeded synthetic data: brain-like phantoms, coil maps, variable-density
//! masks and noisy undersampled acquisitions.
//!
//! Every generator is a pure function of its arguments and seed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{apply_adjoint, fft2c_inplace};
use crate::types::{
    ComplexImage, Dataset, KSpaceData, LabelMap, MultiCoilImage, SamplingMask, NUM_CLASSES,
};

/// Derives an independent stream seed from a base seed and a stream tag (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    /// Number of CSF-filled ventricle ellipses inside the white matter.
    pub ventricles: usize,
    /// Number of deep gray-matter ellipses inside the white matter.
    pub deep_gray: usize,
    /// Final pixel-intensity range per class (background, CSF, GM, WM).
    pub intensity: [(f64, f64); NUM_CLASSES],
    /// Relative amplitude of the smooth multiplicative texture.
    pub texture: f64,
}

impl PhantomSpec {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            ventricles: 2,
            deep_gray: 2,
            intensity: [(0.0, 0.0), (0.20, 0.38), (0.50, 0.68), (0.80, 1.00)],
            texture: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidArgument(format!(
                "phantom must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if !(0.0..=0.05).contains(&self.texture) {
            return Err(Error::InvalidArgument("texture amplitude must lie in [0, 0.05]".into()));
        }
        for (c, &(lo, hi)) in self.intensity.iter().enumerate().skip(1) {
            if !(lo > 0.0 && lo / (1.0 - self.texture) <= hi / (1.0 + self.texture)) {
                return Err(Error::InvalidArgument(format!(
                    "intensity range of class {c} cannot hold the texture"
                )));
            }
        }
        for c in 1..NUM_CLASSES - 1 {
            if self.intensity[c + 1].0 - self.intensity[c].1 < 0.1 {
                return Err(Error::InvalidArgument(format!(
                    "classes {c} and {} are separated by less than 0.1",
                    c + 1
                )));
            }
        }
        Ok(())
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
}

impl Ellipse {
    /// Elliptical radius (1 on the boundary) and polar angle of `(x, y)`.
    fn polar(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        ((u * u + v * v).sqrt(), v.atan2(u))
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.polar(x, y).0 <= 1.0
    }
}

/// Nested-ellipse phantom with per-class intensity and a smooth texture.
pub fn make_phantom(spec: &PhantomSpec, seed: u64) -> Result<(ComplexImage, LabelMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut jitter = |scale: f64| rng.random_range(-scale..scale);

    let head = Ellipse {
        cx: jitter(0.03),
        cy: jitter(0.03),
        a: 0.78 + jitter(0.04),
        b: 0.88 + jitter(0.04),
        angle: jitter(0.1),
    };
    let gm_wiggle = (jitter(0.04), jitter(PI));
    let wm_wiggle = (jitter(0.08), jitter(PI), jitter(0.05), jitter(PI));

    let ventricles: Vec<Ellipse> = (0..spec.ventricles)
        .map(|k| {
            let side = if k % 2 == 0 { -1.0 } else { 1.0 };
            Ellipse {
                cx: head.cx + side * (0.11 + jitter(0.02)) + (k / 2) as f64 * 0.05,
                cy: head.cy - 0.05 + jitter(0.03),
                a: 0.06 + jitter(0.015),
                b: 0.16 + jitter(0.03),
                angle: side * (0.15 + jitter(0.1)),
            }
        })
        .collect();
    let deep_gray: Vec<Ellipse> = (0..spec.deep_gray)
        .map(|k| {
            let side = if k % 2 == 0 { -1.0 } else { 1.0 };
            Ellipse {
                cx: head.cx + side * (0.30 + jitter(0.03)),
                cy: head.cy + 0.12 + jitter(0.03) - (k / 2) as f64 * 0.1,
                a: 0.08 + jitter(0.015),
                b: 0.11 + jitter(0.02),
                angle: jitter(0.3),
            }
        })
        .collect();

    let mut base = [0.0; NUM_CLASSES];
    for c in 1..NUM_CLASSES {
        let (lo, hi) = spec.intensity[c];
        let (lo, hi) = (lo / (1.0 - spec.texture), hi / (1.0 + spec.texture));
        base[c] = if hi > lo { rng.random_range(lo..hi) } else { lo };
    }

    // smooth texture in [-1, 1]
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let weight_sum: f64 = waves.iter().map(|w| w.0).sum();

    let (h, w) = (spec.height, spec.width);
    let mut labels = vec![0u8; h * w];
    let mut values = vec![Complex64::new(0.0, 0.0); h * w];
    for i in 0..h {
        let y = (i as f64 + 0.5) / h as f64 * 2.0 - 1.0;
        for j in 0..w {
            let x = (j as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let (r, theta) = head.polar(x, y);
            let mut class = if r > 1.0 {
                0
            } else if r > 0.86 * (1.0 + gm_wiggle.0 * (5.0 * theta + gm_wiggle.1).sin()) {
                1
            } else if r
                > 0.64
                    * (1.0
                        + wm_wiggle.0 * (7.0 * theta + wm_wiggle.1).sin()
                        + wm_wiggle.2 * (3.0 * theta + wm_wiggle.3).sin())
            {
                2
            } else {
                3
            };
            if class == 3 {
                if deep_gray.iter().any(|e| e.contains(x, y)) {
                    class = 2;
                }
                if ventricles.iter().any(|e| e.contains(x, y)) {
                    class = 1;
                }
            }
            let t: f64 = waves
                .iter()
                .map(|&(amp, fx, fy, ph)| amp * (PI * (fx * x + fy * y) + ph).cos())
                .sum::<f64>()
                / weight_sum;
            let idx = i * w + j;
            labels[idx] = class as u8;
            values[idx] = Complex64::new(base[class] * (1.0 + spec.texture * t), 0.0);
        }
    }
    Ok((
        ComplexImage::new(h, w, values)?,
        LabelMap::new(h, w, labels)?,
    ))
}

/// Full width at half maximum of each coil's Gaussian bump, in FOV units.
pub const COIL_BUMP_FWHM: f64 = 0.7;

/// Smooth complex coil maps with `sum_i |s_i|^2 = 1` at every pixel.
///
/// Coil `i` is a Gaussian bump centred at angle `2 pi i / N` on the FOV
/// border, times a coil-specific linear phase `pi (a_x u + a_y v)` with
/// slopes drawn from `seed` (no constant offset, so every map is real and
/// positive at the FOV centre).
pub fn make_coil_sensitivities(height: usize, width: usize, coils: usize, seed: u64) -> Result<MultiCoilImage> {
    if coils < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 coils, got {coils}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let slopes: Vec<(f64, f64)> = (0..coils)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let sigma = COIL_BUMP_FWHM / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let n = height * width;
    let mut data = vec![Complex64::new(0.0, 0.0); coils * n];
    for (coil, &(ax, ay)) in slopes.iter().enumerate() {
        let ang = 2.0 * PI * coil as f64 / coils as f64;
        let (px, py) = (0.5 * ang.cos(), 0.5 * ang.sin());
        for i in 0..height {
            let v = (i as f64 + 0.5) / height as f64 - 0.5;
            for j in 0..width {
                let u = (j as f64 + 0.5) / width as f64 - 0.5;
                let d2 = (u - px).powi(2) + (v - py).powi(2);
                let mag = (-d2 / (2.0 * sigma * sigma)).exp();
                let phase = PI * (ax * u + ay * v);
                data[coil * n + i * width + j] = Complex64::from_polar(mag, phase);
            }
        }
    }
    for r in 0..n {
        let total: f64 = (0..coils).map(|c| data[c * n + r].norm_sqr()).sum::<f64>().sqrt();
        for c in 0..coils {
            data[c * n + r] /= total;
        }
    }
    MultiCoilImage::new(coils, height, width, data)
}

/// Coil maps that are constant on each `block x block` tile centred at
/// multiples of `block` (tiles wrap periodically), sampled from the smooth
/// maps at the tile centres. The non-overlapping patch lattice with
/// `M = stride = block` then sees exactly rank-one patch matrices.
pub fn block_constant_sensitivities(
    height: usize,
    width: usize,
    coils: usize,
    block: usize,
    seed: u64,
) -> Result<MultiCoilImage> {
    if block == 0 || !height.is_multiple_of(block) || !width.is_multiple_of(block) {
        return Err(Error::InvalidArgument(format!(
            "block {block} must divide {height}x{width}"
        )));
    }
    let smooth = make_coil_sensitivities(height, width, coils, seed)?;
    let n = height * width;
    let tile = |i: usize, len: usize| ((i + block / 2) % len) / block * block;
    let mut data = smooth.data.clone();
    for c in 0..coils {
        for i in 0..height {
            let ci = tile(i, height);
            for j in 0..width {
                let cj = tile(j, width);
                data[c * n + i * width + j] = smooth.data[c * n + ci * width + cj];
            }
        }
    }
    MultiCoilImage::new(coils, height, width, data)
}

/// Spatially constant coil weights with `sum_i |s_i|^2 = 1`.
pub fn constant_sensitivities(height: usize, width: usize, coils: usize, seed: u64) -> Result<MultiCoilImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let weights: Vec<Complex64> = (0..coils)
        .map(|_| Complex64::from_polar(rng.random_range(0.3..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let total = weights.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let n = height * width;
    let data = weights
        .iter()
        .flat_map(|&wgt| std::iter::repeat_n(wgt / total, n))
        .collect();
    MultiCoilImage::new(coils, height, width, data)
}

/// Relative tolerance of the realized sampling fraction around `1 / accel`.
pub const MASK_FRACTION_TOLERANCE: f64 = 0.05;

/// Point-wise variable-density Cartesian mask.
///
/// Locations are kept independently with probability
/// `min(1, s (1 - rho / rho_max)^d)`, where `s` is found by bisection so the
/// expected sampled fraction is `1 / accel`. The central block covering
/// `center_fraction` of k-space is always kept. Draws whose realized
/// fraction falls outside `1/accel +- 5%` are repeated from the same stream.
pub fn make_vd_mask(
    height: usize,
    width: usize,
    accel: f64,
    center_fraction: f64,
    density_exponent: f64,
    seed: u64,
) -> Result<SamplingMask> {
    if !(1.0..=12.0).contains(&accel) {
        return Err(Error::InvalidArgument(format!(
            "acceleration must lie in [1, 12], got {accel}"
        )));
    }
    if !(center_fraction > 0.0 && center_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "center fraction must lie in (0, 1], got {center_fraction}"
        )));
    }
    if !(density_exponent >= 0.0) {
        return Err(Error::InvalidArgument("density exponent must be non-negative".into()));
    }
    let n = height * width;
    if accel == 1.0 {
        return SamplingMask::new(height, width, vec![1; n], 1.0);
    }

    let side = center_fraction.sqrt();
    let ch = ((height as f64 * side).round() as usize).clamp(1, height);
    let cw = ((width as f64 * side).round() as usize).clamp(1, width);
    let (r0, c0) = (height / 2 - ch / 2, width / 2 - cw / 2);
    let in_center = |i: usize, j: usize| i >= r0 && i < r0 + ch && j >= c0 && j < c0 + cw;

    let (kc_i, kc_j) = ((height / 2) as f64, (width / 2) as f64);
    let dist = |i: usize, j: usize| ((i as f64 - kc_i).powi(2) + (j as f64 - kc_j).powi(2)).sqrt();
    let rho_max = (0..height)
        .flat_map(|i| (0..width).map(move |j| (i, j)))
        .map(|(i, j)| dist(i, j))
        .fold(0.0, f64::max);
    let mut density = vec![0.0; n];
    let mut forced = 0usize;
    for i in 0..height {
        for j in 0..width {
            if in_center(i, j) {
                forced += 1;
                density[i * width + j] = f64::INFINITY;
            } else {
                density[i * width + j] = (1.0 - dist(i, j) / rho_max).max(0.0).powf(density_exponent);
            }
        }
    }
    let target = n as f64 / accel;
    if forced as f64 > target * (1.0 + MASK_FRACTION_TOLERANCE) {
        return Err(Error::InvalidArgument(format!(
            "center block of {forced} samples exceeds the budget of {target:.1} at acceleration {accel}"
        )));
    }
    let expected = |scale: f64| -> f64 {
        density
            .iter()
            .map(|&p| if p.is_infinite() { 1.0 } else { (scale * p).min(1.0) })
            .sum()
    };
    let reachable = expected(f64::MAX);
    if reachable < target * (1.0 - MASK_FRACTION_TOLERANCE) {
        return Err(Error::InvalidArgument(format!(
            "density law cannot reach acceleration {accel}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while expected(hi) < target && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = 0.5 * (lo + hi);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4));
    let (min_count, max_count) = (
        target * (1.0 - MASK_FRACTION_TOLERANCE),
        target * (1.0 + MASK_FRACTION_TOLERANCE),
    );
    for _attempt in 0..10_000 {
        let keep: Vec<u8> = density
            .iter()
            .map(|&p| {
                let prob = if p.is_infinite() { 1.0 } else { (scale * p).min(1.0) };
                let u: f64 = rng.random();
                u8::from(u < prob)
            })
            .collect();
        let count = keep.iter().filter(|&&k| k != 0).count() as f64;
        if count >= min_count && count <= max_count {
            return SamplingMask::new(height, width, keep, accel);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not draw a mask within tolerance at acceleration {accel}"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub coils: usize,
    /// Standard deviation of the complex noise per k-space sample (`E|n|^2 = sigma^2`).
    pub noise_sigma: f64,
    pub accel: f64,
    pub center_fraction: f64,
    pub density_exponent: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            coils: 4,
            noise_sigma: 0.01,
            accel: 6.0,
            center_fraction: 0.04,
            density_exponent: 2.0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coils < 2 {
            return Err(Error::InvalidArgument("need at least 2 coils".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
        }
        if !(self.accel >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "acceleration must be at least 1, got {}",
                self.accel
            )));
        }
        if !(self.center_fraction > 0.0 && self.center_fraction <= 1.0) {
            return Err(Error::InvalidArgument("center fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// `b_i = M F (s_i x) + noise`, with the sum-of-squares reference of the
/// noiseless coil images.
pub fn simulate_acquisition(
    image: &ComplexImage,
    sens: &MultiCoilImage,
    mask: &SamplingMask,
    sigma: f64,
    labels: Option<LabelMap>,
    seed: u64,
) -> Result<Dataset> {
    let (h, w) = (image.height, image.width);
    if sens.height != h || sens.width != w || mask.height != h || mask.width != w {
        return Err(Error::Shape("image, sensitivities and mask differ in shape".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
    }
    let n = h * w;
    let mut coil_images = MultiCoilImage::zeros(sens.coils, h, w);
    for c in 0..sens.coils {
        let s = sens.plane(c);
        for (dst, (px, sv)) in coil_images.plane_mut(c).iter_mut().zip(image.data.iter().zip(s)) {
            *dst = px * sv;
        }
    }
    let reference = ComplexImage::from_real(h, w, &coil_images.sos())?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 5));
    let normal = Normal::new(0.0, sigma / 2f64.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut data = coil_images.data.clone();
    for plane in data.chunks_exact_mut(n) {
        fft2c_inplace(plane, h, w);
        for (z, &k) in plane.iter_mut().zip(&mask.keep) {
            // noise is drawn for every location so the stream does not depend on the mask
            let noise = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            *z = if k != 0 { *z + noise } else { Complex64::new(0.0, 0.0) };
        }
    }
    let kspace = KSpaceData::new(sens.coils, h, w, data, mask)?;
    let ds = Dataset {
        kspace,
        mask: mask.clone(),
        sens: sens.clone(),
        reference,
        labels,
        seed,
    };
    ds.validate()?;
    Ok(ds)
}

/// Scale that maps the maximum zero-filled sum-of-squares value to 1.
pub fn normalization_scale(ds: &Dataset) -> Result<f64> {
    let zf = apply_adjoint(&ds.kspace, &ds.mask)?;
    let max = zf.sos().into_iter().fold(0.0, f64::max);
    if max > 0.0 {
        Ok(1.0 / max)
    } else {
        Err(Error::InvalidArgument("zero-filled reconstruction is identically zero".into()))
    }
}

/// Rescales k-space and reference so the zero-filled SOS peaks at 1.
pub fn normalize(ds: Dataset) -> Result<(Dataset, f64)> {
    let scale = normalization_scale(&ds)?;
    Ok((ds.scaled(scale), scale))
}

/// Phantom, coil maps, mask and acquisition in one call; the result is normalized.
pub fn generate_dataset(spec: &PhantomSpec, acq: &AcquisitionConfig, seed: u64) -> Result<Dataset> {
    acq.validate()?;
    let (image, labels) = make_phantom(spec, seed)?;
    let sens = make_coil_sensitivities(spec.height, spec.width, acq.coils, seed)?;
    let mask = make_vd_mask(
        spec.height,
        spec.width,
        acq.accel,
        acq.center_fraction,
        acq.density_exponent,
        seed,
    )?;
    let ds = simulate_acquisition(&image, &sens, &mask, acq.noise_sigma, Some(labels), seed)?;
    Ok(normalize(ds)?.0)
}

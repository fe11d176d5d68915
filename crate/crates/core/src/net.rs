//! Mini-UNET with hand-written reverse-mode gradients.
//!
//! One encoder (`theta`) feeds two mirrored decoders: the reconstruction
//! decoder (`phi`) that outputs the `2N`-channel residual, and the
//! segmentation decoder (`psi`) that outputs class logits. Both decoders read
//! the same encoder latent and skip tensors.
//!
//! Layer layout for widths `[c1, c2, c3]`:
//!
//! ```text
//! encoder:  conv3(in->c1) relu, conv3(c1->c1) relu = s1, maxpool
//!           conv3(c1->c2) relu, conv3(c2->c2) relu = s2, maxpool
//!           conv3(c2->c3) relu, conv3(c3->c3) relu = latent
//! decoder:  conv1(c3->c2), unpool, concat s2, conv3(2c2->c2) relu
//!           conv1(c2->c1), unpool, concat s1, conv3(2c1->c1) relu
//!           conv1(c1->out)
//! ```
//!
//! All convolutions are stride 1 with zero padding. Unpooling places values
//! at the positions recorded by the matching max-pool.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_complex::Complex64;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::phantom::derive_seed;
use crate::types::MultiCoilImage;

/// Scalar type of the network: `f32` for training, `f64` for gradient checks.
pub trait Real: Float + Default + Debug + Sum + AddAssign + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// `C = A B + beta C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        assert!((rows - 1) * rs + (cols - 1) * cs < len, "gemm operand out of bounds");
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                check_extent(c.len(), m, n, rsc, csc);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above and the
                // output does not alias the inputs (distinct borrows).
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Channel-major feature map `[channels, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Feat<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Feat<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    fn concat(a: &Feat<T>, b: &Feat<T>) -> Feat<T> {
        debug_assert_eq!((a.height, a.width), (b.height, b.width));
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Feat {
            channels: a.channels + b.channels,
            height: a.height,
            width: a.width,
            data,
        }
    }

    fn split(self, first: usize) -> (Feat<T>, Feat<T>) {
        let cut = first * self.plane_len();
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut data = self.data;
        let tail = data.split_off(cut);
        (
            Feat { channels: first, height: h, width: w, data },
            Feat { channels: c - first, height: h, width: w, data: tail },
        )
    }

    fn add_assign(&mut self, other: &Feat<T>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

/// Interleaves real and imaginary parts: channel `2i` is `Re gamma_i`, `2i+1` is `Im gamma_i`.
pub fn complex_to_channels<T: Real>(gamma: &MultiCoilImage) -> Feat<T> {
    let n = gamma.plane_len();
    let mut out = Feat::zeros(2 * gamma.coils, gamma.height, gamma.width);
    for c in 0..gamma.coils {
        let plane = gamma.plane(c);
        for p in 0..n {
            out.data[2 * c * n + p] = T::of(plane[p].re);
            out.data[(2 * c + 1) * n + p] = T::of(plane[p].im);
        }
    }
    out
}

/// Inverse of [`complex_to_channels`].
pub fn channels_to_complex<T: Real>(x: &Feat<T>) -> Result<MultiCoilImage> {
    if !x.channels.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "complex data needs an even channel count, got {}",
            x.channels
        )));
    }
    let n = x.plane_len();
    let coils = x.channels / 2;
    let mut data = Vec::with_capacity(coils * n);
    for c in 0..coils {
        for p in 0..n {
            data.push(Complex64::new(
                x.data[2 * c * n + p].as_f64(),
                x.data[(2 * c + 1) * n + p].as_f64(),
            ));
        }
    }
    MultiCoilImage::new(coils, x.height, x.width, data)
}

/// Stride-1, zero-padded convolution with a 1x1 or 3x3 kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub relu: bool,
    /// `[out_ch, in_ch, kernel, kernel]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize, relu: bool) -> Self {
        assert!(kernel == 1 || kernel == 3);
        Self {
            in_ch,
            out_ch,
            kernel,
            relu,
            weight: vec![T::zero(); out_ch * in_ch * kernel * kernel],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier(in_ch: usize, out_ch: usize, kernel: usize, relu: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(in_ch, out_ch, kernel, relu);
        let k2 = (kernel * kernel) as f64;
        let bound = (6.0 / ((in_ch as f64 + out_ch as f64) * k2)).sqrt();
        for w in &mut layer.weight {
            *w = T::of(rng.random_range(-bound..bound));
        }
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn cols_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn im2col(&self, x: &Feat<T>) -> Vec<T> {
        let (h, w) = (x.height, x.width);
        let n = h * w;
        let mut cols = vec![T::zero(); self.cols_len() * n];
        for ci in 0..self.in_ch {
            let src = &x.data[ci * n..(ci + 1) * n];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &mut cols[(ci * 9 + ky * 3 + kx) * n..][..n];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &src[sy as usize * w..][..w];
                        let drow = &mut row[y * w..][..w];
                        match kx {
                            0 => drow[1..].copy_from_slice(&srow[..w - 1]),
                            1 => drow.copy_from_slice(srow),
                            _ => drow[..w - 1].copy_from_slice(&srow[1..]),
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize) -> Feat<T> {
        let n = h * w;
        let mut dx = Feat::zeros(self.in_ch, h, w);
        for ci in 0..self.in_ch {
            let dst = &mut dx.data[ci * n..(ci + 1) * n];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &cols[(ci * 9 + ky * 3 + kx) * n..][..n];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let srow = &row[y * w..][..w];
                        let drow = &mut dst[sy as usize * w..][..w];
                        let (d, s) = match kx {
                            0 => (&mut drow[..w - 1], &srow[1..]),
                            1 => (&mut drow[..], srow),
                            _ => (&mut drow[1..], &srow[..w - 1]),
                        };
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += *b;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Feat<T>) -> Feat<T> {
        assert_eq!(x.channels, self.in_ch, "conv input channels");
        let n = x.plane_len();
        let mut y = Feat::zeros(self.out_ch, x.height, x.width);
        for (o, b) in self.bias.iter().enumerate() {
            y.data[o * n..(o + 1) * n].iter_mut().for_each(|v| *v = *b);
        }
        let k = self.cols_len();
        let owned;
        let cols: &[T] = if self.kernel == 1 {
            &x.data
        } else {
            owned = self.im2col(x);
            &owned
        };
        T::gemm(self.out_ch, k, n, &self.weight, k, 1, cols, n, 1, T::one(), &mut y.data, n, 1);
        if self.relu {
            y.data.iter_mut().for_each(|v| {
                if !(*v > T::zero()) {
                    *v = T::zero()
                }
            });
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, x: &Feat<T>, y: &Feat<T>, mut dy: Feat<T>, grad: &mut ConvLayer<T>) -> Feat<T> {
        let n = x.plane_len();
        if self.relu {
            for (d, v) in dy.data.iter_mut().zip(&y.data) {
                if !(*v > T::zero()) {
                    *d = T::zero();
                }
            }
        }
        for o in 0..self.out_ch {
            let s: T = dy.data[o * n..(o + 1) * n].iter().copied().sum();
            grad.bias[o] += s;
        }
        let k = self.cols_len();
        let owned;
        let cols: &[T] = if self.kernel == 1 {
            &x.data
        } else {
            owned = self.im2col(x);
            &owned
        };
        T::gemm(self.out_ch, n, k, &dy.data, n, 1, cols, 1, n, T::one(), &mut grad.weight, k, 1);
        let mut dcols = vec![T::zero(); k * n];
        T::gemm(k, self.out_ch, n, &self.weight, 1, k, &dy.data, n, 1, T::zero(), &mut dcols, n, 1);
        if self.kernel == 1 {
            Feat {
                channels: self.in_ch,
                height: x.height,
                width: x.width,
                data: dcols,
            }
        } else {
            self.col2im(&dcols, x.height, x.width)
        }
    }
}

/// 2x2 max-pool; `indices[o]` is the winning position within the input plane
/// (first maximum in row-major window order).
fn max_pool<T: Real>(x: &Feat<T>) -> (Feat<T>, Vec<u32>) {
    let (h2, w2) = (x.height / 2, x.width / 2);
    let mut out = Feat::zeros(x.channels, h2, w2);
    let mut idx = vec![0u32; x.channels * h2 * w2];
    let n = x.plane_len();
    for c in 0..x.channels {
        let plane = &x.data[c * n..(c + 1) * n];
        for i in 0..h2 {
            for j in 0..w2 {
                let mut best = (2 * i) * x.width + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let p = (2 * i + di) * x.width + 2 * j + dj;
                    if plane[p] > plane[best] {
                        best = p;
                    }
                }
                let o = c * h2 * w2 + i * w2 + j;
                out.data[o] = plane[best];
                idx[o] = best as u32;
            }
        }
    }
    (out, idx)
}

fn max_pool_backward<T: Real>(dy: &Feat<T>, idx: &[u32], h: usize, w: usize) -> Feat<T> {
    let mut dx = Feat::zeros(dy.channels, h, w);
    let (n, m) = (h * w, dy.plane_len());
    for c in 0..dy.channels {
        for o in 0..m {
            dx.data[c * n + idx[c * m + o] as usize] += dy.data[c * m + o];
        }
    }
    dx
}

fn unpool<T: Real>(u: &Feat<T>, idx: &[u32], h: usize, w: usize) -> Feat<T> {
    let mut out = Feat::zeros(u.channels, h, w);
    let (n, m) = (h * w, u.plane_len());
    for c in 0..u.channels {
        for o in 0..m {
            out.data[c * n + idx[c * m + o] as usize] = u.data[c * m + o];
        }
    }
    out
}

fn unpool_backward<T: Real>(dy: &Feat<T>, idx: &[u32], h2: usize, w2: usize) -> Feat<T> {
    let mut du = Feat::zeros(dy.channels, h2, w2);
    let (n, m) = (dy.plane_len(), h2 * w2);
    for c in 0..dy.channels {
        for o in 0..m {
            du.data[c * m + o] = dy.data[c * n + idx[c * m + o] as usize];
        }
    }
    du
}

/// Shared encoder `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    /// enc1a, enc1b, enc2a, enc2b, enc3a, enc3b.
    pub layers: Vec<ConvLayer<T>>,
}

/// Decoder (`phi` or `psi`).
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder<T> {
    /// up2, fuse2, up1, fuse1, head.
    pub layers: Vec<ConvLayer<T>>,
}

const ENCODER_NAMES: [&str; 6] = ["enc1a", "enc1b", "enc2a", "enc2b", "enc3a", "enc3b"];
const DECODER_NAMES: [&str; 5] = ["up2", "fuse2", "up1", "fuse1", "head"];

impl<T: Real> Encoder<T> {
    pub fn new(in_ch: usize, widths: [usize; 3], rng: &mut ChaCha8Rng) -> Self {
        let [c1, c2, c3] = widths;
        let shapes = [(in_ch, c1), (c1, c1), (c1, c2), (c2, c2), (c2, c3), (c3, c3)];
        Self {
            layers: shapes
                .iter()
                .map(|&(i, o)| ConvLayer::xavier(i, o, 3, true, rng))
                .collect(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_ch
    }

    pub fn widths(&self) -> [usize; 3] {
        [self.layers[0].out_ch, self.layers[2].out_ch, self.layers[4].out_ch]
    }

    pub fn forward(&self, x: Feat<T>) -> EncoderActs<T> {
        let l = &self.layers;
        let a1 = l[0].forward(&x);
        let s1 = l[1].forward(&a1);
        let (p1, idx1) = max_pool(&s1);
        let a2 = l[2].forward(&p1);
        let s2 = l[3].forward(&a2);
        let (p2, idx2) = max_pool(&s2);
        let a3 = l[4].forward(&p2);
        let latent = l[5].forward(&a3);
        EncoderActs { x, a1, s1, p1, idx1, a2, s2, p2, idx2, a3, latent }
    }

    /// Returns the input gradient; `dlatent`, `ds2`, `ds1` are the total
    /// upstream gradients into the latent and skip tensors.
    pub fn backward(
        &self,
        acts: &EncoderActs<T>,
        dlatent: Feat<T>,
        ds2: Feat<T>,
        ds1: Feat<T>,
        grad: &mut Encoder<T>,
    ) -> Feat<T> {
        let l = &self.layers;
        let g = &mut grad.layers;
        let da3 = l[5].backward(&acts.a3, &acts.latent, dlatent, &mut g[5]);
        let dp2 = l[4].backward(&acts.p2, &acts.a3, da3, &mut g[4]);
        let mut ds2_total = max_pool_backward(&dp2, &acts.idx2, acts.s2.height, acts.s2.width);
        ds2_total.add_assign(&ds2);
        let da2 = l[3].backward(&acts.a2, &acts.s2, ds2_total, &mut g[3]);
        let dp1 = l[2].backward(&acts.p1, &acts.a2, da2, &mut g[2]);
        let mut ds1_total = max_pool_backward(&dp1, &acts.idx1, acts.s1.height, acts.s1.width);
        ds1_total.add_assign(&ds1);
        let da1 = l[1].backward(&acts.a1, &acts.s1, ds1_total, &mut g[1]);
        l[0].backward(&acts.x, &acts.a1, da1, &mut g[0])
    }
}

impl<T: Real> Decoder<T> {
    pub fn new(widths: [usize; 3], out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        let [c1, c2, c3] = widths;
        Self {
            layers: vec![
                ConvLayer::xavier(c3, c2, 1, false, rng),
                ConvLayer::xavier(2 * c2, c2, 3, true, rng),
                ConvLayer::xavier(c2, c1, 1, false, rng),
                ConvLayer::xavier(2 * c1, c1, 3, true, rng),
                ConvLayer::xavier(c1, out_ch, 1, false, rng),
            ],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.layers[4].out_ch
    }

    pub fn forward(&self, enc: &EncoderActs<T>) -> DecoderActs<T> {
        let l = &self.layers;
        let u2 = l[0].forward(&enc.latent);
        let un2 = unpool(&u2, &enc.idx2, enc.s2.height, enc.s2.width);
        let cat2 = Feat::concat(&un2, &enc.s2);
        let f2 = l[1].forward(&cat2);
        let u1 = l[2].forward(&f2);
        let un1 = unpool(&u1, &enc.idx1, enc.s1.height, enc.s1.width);
        let cat1 = Feat::concat(&un1, &enc.s1);
        let f1 = l[3].forward(&cat1);
        let out = l[4].forward(&f1);
        DecoderActs { u2, cat2, f2, u1, cat1, f1, out }
    }

    /// Returns gradients into (latent, s2, s1).
    pub fn backward(
        &self,
        enc: &EncoderActs<T>,
        acts: &DecoderActs<T>,
        dout: Feat<T>,
        grad: &mut Decoder<T>,
    ) -> (Feat<T>, Feat<T>, Feat<T>) {
        let l = &self.layers;
        let g = &mut grad.layers;
        let c1 = acts.u1.channels;
        let c2 = acts.u2.channels;
        let df1 = l[4].backward(&acts.f1, &acts.out, dout, &mut g[4]);
        let dcat1 = l[3].backward(&acts.cat1, &acts.f1, df1, &mut g[3]);
        let (dun1, ds1) = dcat1.split(c1);
        let du1 = unpool_backward(&dun1, &enc.idx1, acts.u1.height, acts.u1.width);
        let df2 = l[2].backward(&acts.f2, &acts.u1, du1, &mut g[2]);
        let dcat2 = l[1].backward(&acts.cat2, &acts.f2, df2, &mut g[1]);
        let (dun2, ds2) = dcat2.split(c2);
        let du2 = unpool_backward(&dun2, &enc.idx2, acts.u2.height, acts.u2.width);
        let dlatent = l[0].backward(&enc.latent, &acts.u2, du2, &mut g[0]);
        (dlatent, ds2, ds1)
    }
}

/// Cached encoder tensors: the latent, both skips and pooling indices.
#[derive(Clone, Debug)]
pub struct EncoderActs<T> {
    pub x: Feat<T>,
    pub a1: Feat<T>,
    pub s1: Feat<T>,
    pub p1: Feat<T>,
    pub idx1: Vec<u32>,
    pub a2: Feat<T>,
    pub s2: Feat<T>,
    pub p2: Feat<T>,
    pub idx2: Vec<u32>,
    pub a3: Feat<T>,
    pub latent: Feat<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderActs<T> {
    pub u2: Feat<T>,
    pub cat2: Feat<T>,
    pub f2: Feat<T>,
    pub u1: Feat<T>,
    pub cat1: Feat<T>,
    pub f1: Feat<T>,
    pub out: Feat<T>,
}

/// Caches of one denoiser pass.
#[derive(Clone, Debug)]
pub struct Activations<T> {
    pub encoder: EncoderActs<T>,
    pub recon: DecoderActs<T>,
}

/// Parameter groups. The encoder is owned once and read by both decoders.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams<T> {
    pub theta: Encoder<T>,
    pub phi: Decoder<T>,
    pub psi: Decoder<T>,
}

/// Which parameter group a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Theta,
    Phi,
    Psi,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Theta => "theta",
            Group::Phi => "phi",
            Group::Psi => "psi",
        }
    }
}

impl<T: Real> NetParams<T> {
    /// Xavier initialization from a seed; the three groups draw from distinct streams.
    pub fn init(coils: usize, classes: usize, widths: [usize; 3], seed: u64) -> Self {
        let mut rt = ChaCha8Rng::seed_from_u64(derive_seed(seed, 101));
        let mut rp = ChaCha8Rng::seed_from_u64(derive_seed(seed, 102));
        let mut rs = ChaCha8Rng::seed_from_u64(derive_seed(seed, 103));
        Self {
            theta: Encoder::new(2 * coils, widths, &mut rt),
            phi: Decoder::new(widths, 2 * coils, &mut rp),
            psi: Decoder::new(widths, classes, &mut rs),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.layers_mut().for_each(|(_, _, l)| {
            l.weight.iter_mut().for_each(|v| *v = T::zero());
            l.bias.iter_mut().for_each(|v| *v = T::zero());
        });
        out
    }

    pub fn coils(&self) -> usize {
        self.theta.in_channels() / 2
    }

    pub fn classes(&self) -> usize {
        self.psi.out_channels()
    }

    pub fn widths(&self) -> [usize; 3] {
        self.theta.widths()
    }

    /// Layers in canonical order with their group and name.
    pub fn layers(&self) -> impl Iterator<Item = (Group, &'static str, &ConvLayer<T>)> {
        let enc = self.theta.layers.iter().zip(ENCODER_NAMES).map(|(l, n)| (Group::Theta, n, l));
        let phi = self.phi.layers.iter().zip(DECODER_NAMES).map(|(l, n)| (Group::Phi, n, l));
        let psi = self.psi.layers.iter().zip(DECODER_NAMES).map(|(l, n)| (Group::Psi, n, l));
        enc.chain(phi).chain(psi)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = (Group, &'static str, &mut ConvLayer<T>)> {
        let enc = self.theta.layers.iter_mut().zip(ENCODER_NAMES).map(|(l, n)| (Group::Theta, n, l));
        let phi = self.phi.layers.iter_mut().zip(DECODER_NAMES).map(|(l, n)| (Group::Phi, n, l));
        let psi = self.psi.layers.iter_mut().zip(DECODER_NAMES).map(|(l, n)| (Group::Psi, n, l));
        enc.chain(phi).chain(psi)
    }

    pub fn group_count(&self, group: Group) -> usize {
        self.layers()
            .filter(|(g, _, _)| *g == group)
            .map(|(_, _, l)| l.param_count())
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|(_, _, l)| l.param_count()).sum()
    }

    /// Flat view of one group's parameters, in canonical order (weight then bias per layer).
    pub fn group_values(&self, group: Group) -> Vec<T> {
        let mut out = Vec::new();
        for (_, _, l) in self.layers().filter(|(g, _, _)| *g == group) {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn group_slices_mut(&mut self, group: Group) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for (_, _, l) in self.layers_mut().filter(|(g, _, _)| *g == group) {
            out.push(&mut l.weight[..]);
            out.push(&mut l.bias[..]);
        }
        out
    }

    /// Mutable reference to the `index`-th scalar of a group (canonical order).
    pub fn param_mut(&mut self, group: Group, mut index: usize) -> Option<&mut T> {
        for s in self.group_slices_mut(group) {
            if index < s.len() {
                return Some(&mut s[index]);
            }
            index -= s.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|(_, _, l)| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> NetParams<U> {
        fn conv<T: Real, U: Real>(l: &ConvLayer<T>) -> ConvLayer<U> {
            ConvLayer {
                in_ch: l.in_ch,
                out_ch: l.out_ch,
                kernel: l.kernel,
                relu: l.relu,
                weight: l.weight.iter().map(|v| U::of(v.as_f64())).collect(),
                bias: l.bias.iter().map(|v| U::of(v.as_f64())).collect(),
            }
        }
        NetParams {
            theta: Encoder { layers: self.theta.layers.iter().map(conv).collect() },
            phi: Decoder { layers: self.phi.layers.iter().map(conv).collect() },
            psi: Decoder { layers: self.psi.layers.iter().map(conv).collect() },
        }
    }
}

fn check_spatial(h: usize, w: usize) -> Result<()> {
    if !h.is_multiple_of(4) || !w.is_multiple_of(4) || h == 0 || w == 0 {
        return Err(Error::Shape(format!(
            "network input must have height and width divisible by 4, got {h}x{w}"
        )));
    }
    Ok(())
}

/// `z = gamma - N(gamma)`.
pub fn denoiser_forward<T: Real>(
    gamma: &MultiCoilImage,
    params: &NetParams<T>,
) -> Result<(MultiCoilImage, Activations<T>)> {
    check_spatial(gamma.height, gamma.width)?;
    if gamma.coils * 2 != params.theta.in_channels() {
        return Err(Error::Shape(format!(
            "network expects {} coils, got {}",
            params.coils(),
            gamma.coils
        )));
    }
    let encoder = params.theta.forward(complex_to_channels(gamma));
    let recon = params.phi.forward(&encoder);
    let residual = channels_to_complex(&recon.out)?;
    let data = gamma.data.iter().zip(&residual.data).map(|(g, r)| g - r).collect();
    let z = MultiCoilImage::new(gamma.coils, gamma.height, gamma.width, data)?;
    Ok((z, Activations { encoder, recon }))
}

/// Segmentation decoder output over a cached encoder pass.
#[derive(Clone, Debug)]
pub struct SegOutput<T> {
    pub probs: crate::types::ProbMap,
    pub acts: DecoderActs<T>,
}

impl<T: Real> SegOutput<T> {
    pub fn logits(&self) -> &Feat<T> {
        &self.acts.out
    }
}

/// Softmax class probabilities from the shared-encoder latent.
pub fn seg_forward<T: Real>(enc: &EncoderActs<T>, psi: &Decoder<T>) -> SegOutput<T> {
    let acts = psi.forward(enc);
    let logits: Vec<f64> = acts.out.data.iter().map(|v| v.as_f64()).collect();
    let probs = crate::types::ProbMap::from_logits(acts.out.height, acts.out.width, acts.out.channels, &logits);
    SegOutput { probs, acts }
}

/// Reverse pass of one denoiser call, optionally joined by a segmentation
/// head on the same encoder pass.
///
/// `dz` is the gradient of the loss with respect to `z` (real and imaginary
/// parts as the real and imaginary components). `seg` carries the
/// segmentation decoder caches and the logit gradient. Gradients accumulate
/// into `grads`; the returned image is the gradient with respect to `gamma`.
pub fn denoiser_backward<T: Real>(
    dz: &MultiCoilImage,
    acts: &Activations<T>,
    params: &NetParams<T>,
    grads: &mut NetParams<T>,
    seg: Option<(&DecoderActs<T>, Feat<T>)>,
) -> Result<MultiCoilImage> {
    // z = gamma - c2c(out): d out = -c2r(dz)
    let mut dout: Feat<T> = complex_to_channels(dz);
    dout.data.iter_mut().for_each(|v| *v = -*v);
    let (mut dl, mut ds2, mut ds1) = params.phi.backward(&acts.encoder, &acts.recon, dout, &mut grads.phi);
    if let Some((seg_acts, dlogits)) = seg {
        let (l2, s2, s1) = params.psi.backward(&acts.encoder, seg_acts, dlogits, &mut grads.psi);
        dl.add_assign(&l2);
        ds2.add_assign(&s2);
        ds1.add_assign(&s1);
    }
    let dx = params.theta.backward(&acts.encoder, dl, ds2, ds1, &mut grads.theta);
    let dnet = channels_to_complex(&dx)?;
    let data = dz.data.iter().zip(&dnet.data).map(|(a, b)| a + b).collect();
    MultiCoilImage::new(dz.coils, dz.height, dz.width, data)
}

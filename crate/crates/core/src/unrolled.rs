//! Unrolled denoise / data-consistency network with a segmentation head.
//!
//! Each of the `K` iterations applies `z_n = gamma_n - N(gamma_n)` and then
//! `gamma_{n+1} = dc_solve(z_n, b, mask, lambda)`; the network weights are
//! shared across iterations. In joint mode the segmentation decoder reads
//! the encoder pass of the last iteration. In cascade mode an independent
//! encoder/decoder segments `sos(gamma_K)` instead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::{apply_adjoint, dc_jacobian_apply, dc_solve};
use crate::net::{
    denoiser_backward, denoiser_forward, seg_forward, Activations, Decoder, DecoderActs, Encoder, EncoderActs,
    Feat, NetParams, Real,
};
use crate::phantom::derive_seed;
use crate::types::{ComplexImage, Dataset, KSpaceData, LabelMap, MultiCoilImage, ProbMap, SamplingMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Shared encoder feeds both decoders.
    Joint,
    /// Independent segmentation network on the SOS of the reconstruction.
    Cascade,
    /// Reconstruction only; the segmentation decoder is never evaluated.
    ReconOnly,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Joint => "joint",
            Mode::Cascade => "cascade",
            Mode::ReconOnly => "recon-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Mode::Joint),
            "cascade" => Ok(Mode::Cascade),
            "recon-only" => Ok(Mode::ReconOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected joint, cascade or recon-only)"
            ))),
        }
    }
}

/// Segmentation network of the cascade baseline (single-channel SOS input).
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeHead<T> {
    pub encoder: Encoder<T>,
    pub decoder: Decoder<T>,
}

impl<T: Real> CascadeHead<T> {
    pub fn init(classes: usize, widths: [usize; 3], seed: u64) -> Self {
        let mut re = ChaCha8Rng::seed_from_u64(derive_seed(seed, 111));
        let mut rd = ChaCha8Rng::seed_from_u64(derive_seed(seed, 112));
        Self {
            encoder: Encoder::new(1, widths, &mut re),
            decoder: Decoder::new(widths, classes, &mut rd),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder
            .layers
            .iter()
            .chain(&self.decoder.layers)
            .map(|l| l.param_count())
            .sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for l in out.encoder.layers.iter_mut().chain(out.decoder.layers.iter_mut()) {
            l.weight.iter_mut().for_each(|v| *v = T::zero());
            l.bias.iter_mut().for_each(|v| *v = T::zero());
        }
        out
    }

    pub fn cast<U: Real>(&self) -> CascadeHead<U> {
        let conv = |l: &crate::net::ConvLayer<T>| crate::net::ConvLayer {
            in_ch: l.in_ch,
            out_ch: l.out_ch,
            kernel: l.kernel,
            relu: l.relu,
            weight: l.weight.iter().map(|v| U::of(v.as_f64())).collect(),
            bias: l.bias.iter().map(|v| U::of(v.as_f64())).collect(),
        };
        CascadeHead {
            encoder: Encoder { layers: self.encoder.layers.iter().map(conv).collect() },
            decoder: Decoder { layers: self.decoder.layers.iter().map(conv).collect() },
        }
    }
}

/// The unrolled network. A single [`NetParams`] is read by every iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledModel<T> {
    pub params: NetParams<T>,
    pub cascade: Option<CascadeHead<T>>,
    pub unroll: usize,
    pub lambda: f64,
    pub mode: Mode,
}

impl<T: Real> UnrolledModel<T> {
    /// Joint or recon-only model with freshly initialized weights.
    pub fn new(mode: Mode, coils: usize, classes: usize, widths: [usize; 3], unroll: usize, lambda: f64, seed: u64) -> Result<Self> {
        if mode == Mode::Cascade {
            return build_cascade(coils, classes, widths, unroll, lambda, seed);
        }
        let model = Self {
            params: NetParams::init(coils, classes, widths, seed),
            cascade: None,
            unroll,
            lambda,
            mode,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.mode == Mode::Joint && self.unroll == 0 {
            return Err(Error::InvalidArgument(
                "joint segmentation needs at least one unrolled iteration".into(),
            ));
        }
        if (self.mode == Mode::Cascade) != self.cascade.is_some() {
            return Err(Error::InvalidArgument("cascade head present only in cascade mode".into()));
        }
        if self.params.widths().contains(&0) {
            return Err(Error::InvalidArgument("network widths must be positive".into()));
        }
        Ok(())
    }

    /// Number of parameters that take part in this mode.
    pub fn param_count(&self) -> usize {
        use crate::net::Group;
        let trunk = self.params.group_count(Group::Theta) + self.params.group_count(Group::Phi);
        match self.mode {
            Mode::Joint => trunk + self.params.group_count(Group::Psi),
            Mode::Cascade => trunk + self.cascade.as_ref().map_or(0, |c| c.param_count()),
            Mode::ReconOnly => trunk,
        }
    }

    pub fn cast<U: Real>(&self) -> UnrolledModel<U> {
        UnrolledModel {
            params: self.params.cast(),
            cascade: self.cascade.as_ref().map(|c| c.cast()),
            unroll: self.unroll,
            lambda: self.lambda,
            mode: self.mode,
        }
    }
}

/// Widths for the cascade segmentation network so the cascade model's total
/// parameter count is closest to the joint model's. Candidates scale the
/// shared widths by `w / widths[0]` for `w = 1..=widths[0]`.
pub fn cascade_widths(classes: usize, widths: [usize; 3]) -> [usize; 3] {
    let shared_psi = decoder_count(widths, classes);
    let mut best = ([1, 1, 1], usize::MAX);
    for w1 in 1..=widths[0].max(1) {
        let r = w1 as f64 / widths[0] as f64;
        let cand = [
            w1,
            ((widths[1] as f64 * r).round() as usize).max(1),
            ((widths[2] as f64 * r).round() as usize).max(1),
        ];
        let count = encoder_count(1, cand) + decoder_count(cand, classes);
        let diff = count.abs_diff(shared_psi);
        if diff < best.1 {
            best = (cand, diff);
        }
    }
    best.0
}

fn conv_count(i: usize, o: usize, k: usize) -> usize {
    o * i * k * k + o
}

fn encoder_count(in_ch: usize, [c1, c2, c3]: [usize; 3]) -> usize {
    conv_count(in_ch, c1, 3)
        + conv_count(c1, c1, 3)
        + conv_count(c1, c2, 3)
        + conv_count(c2, c2, 3)
        + conv_count(c2, c3, 3)
        + conv_count(c3, c3, 3)
}

fn decoder_count([c1, c2, c3]: [usize; 3], out: usize) -> usize {
    conv_count(c3, c2, 1) + conv_count(2 * c2, c2, 3) + conv_count(c2, c1, 1) + conv_count(2 * c1, c1, 3) + conv_count(c1, out, 1)
}

/// Relative tolerance between cascade and joint parameter counts.
pub const CASCADE_COUNT_TOLERANCE: f64 = 0.05;

/// Cascade baseline: the same trunk as the joint model (same seed gives the
/// same trunk weights) plus an unshared segmentation network sized so the
/// total parameter count matches the joint model within 5%.
pub fn build_cascade<T: Real>(
    coils: usize,
    classes: usize,
    widths: [usize; 3],
    unroll: usize,
    lambda: f64,
    seed: u64,
) -> Result<UnrolledModel<T>> {
    let params = NetParams::init(coils, classes, widths, seed);
    let cw = cascade_widths(classes, widths);
    let model = UnrolledModel {
        params,
        cascade: Some(CascadeHead::init(classes, cw, seed)),
        unroll,
        lambda,
        mode: Mode::Cascade,
    };
    model.validate()?;
    let joint = model.params.param_count() as f64;
    let ours = model.param_count() as f64;
    if (ours - joint).abs() > CASCADE_COUNT_TOLERANCE * joint {
        return Err(Error::InvalidArgument(format!(
            "no cascade widths match {joint} parameters within 5% (best {ours})"
        )));
    }
    Ok(model)
}

/// Per-pixel root-sum-of-squares as a real-valued image.
pub fn sos(gamma: &MultiCoilImage) -> ComplexImage {
    ComplexImage::from_real(gamma.height, gamma.width, &gamma.sos()).expect("finite SOS")
}

/// Everything the reverse pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct UnrollTrace<T> {
    /// `gamma_0 .. gamma_K`.
    pub gammas: Vec<MultiCoilImage>,
    /// Denoiser caches for iterations `0 .. K-1`.
    pub acts: Vec<Activations<T>>,
}

impl<T> UnrollTrace<T> {
    pub fn output(&self) -> &MultiCoilImage {
        self.gammas.last().expect("gamma_0 always present")
    }

    /// Encoder caches of the last iteration.
    pub fn last_acts(&self) -> Option<&Activations<T>> {
        self.acts.last()
    }
}

/// `K` denoise / data-consistency iterations from `gamma_0 = A^H b`.
pub fn idslr_forward<T: Real>(
    b: &KSpaceData,
    mask: &SamplingMask,
    model: &UnrolledModel<T>,
) -> Result<(MultiCoilImage, UnrollTrace<T>)> {
    if model.params.coils() != b.coils {
        return Err(Error::Shape(format!(
            "model expects {} coils, data has {}",
            model.params.coils(),
            b.coils
        )));
    }
    let mut gamma = apply_adjoint(b, mask)?;
    let mut trace = UnrollTrace {
        gammas: vec![gamma.clone()],
        acts: Vec::with_capacity(model.unroll),
    };
    for _ in 0..model.unroll {
        let (z, acts) = denoiser_forward(&gamma, &model.params)?;
        gamma = dc_solve(&z, b, mask, model.lambda)?;
        if !gamma.data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("unrolled iterate".into()));
        }
        trace.acts.push(acts);
        trace.gammas.push(gamma.clone());
    }
    Ok((gamma, trace))
}

/// Segmentation output together with the caches its backward pass needs.
#[derive(Clone, Debug)]
pub struct SegPass<T> {
    pub probs: ProbMap,
    pub decoder: DecoderActs<T>,
    /// Cascade only: the encoder pass over the SOS image.
    pub encoder: Option<EncoderActs<T>>,
}

/// Class probabilities for a finished forward pass.
pub fn segment<T: Real>(model: &UnrolledModel<T>, trace: &UnrollTrace<T>) -> Result<SegPass<T>> {
    match model.mode {
        Mode::Joint => {
            let acts = trace
                .last_acts()
                .ok_or_else(|| Error::InvalidArgument("joint segmentation needs K >= 1".into()))?;
            let out = seg_forward(&acts.encoder, &model.params.psi);
            Ok(SegPass { probs: out.probs, decoder: out.acts, encoder: None })
        }
        Mode::Cascade => {
            let head = model.cascade.as_ref().expect("validated cascade head");
            let g = trace.output();
            let s = g.sos();
            let x = Feat {
                channels: 1,
                height: g.height,
                width: g.width,
                data: s.iter().map(|&v| T::of(v)).collect(),
            };
            let enc = head.encoder.forward(x);
            let out = seg_forward(&enc, &head.decoder);
            Ok(SegPass { probs: out.probs, decoder: out.acts, encoder: Some(enc) })
        }
        Mode::ReconOnly => Err(Error::InvalidArgument("recon-only model has no segmentation head".into())),
    }
}

/// Sum of squared differences of SOS magnitudes.
pub fn loss_rec(sos_est: &[f64], sos_ref: &[f64]) -> Result<f64> {
    if sos_est.len() != sos_ref.len() {
        return Err(Error::Shape("SOS images differ in size".into()));
    }
    Ok(sos_est.iter().zip(sos_ref).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `loss_rec(sos(gamma), reference)` and its gradient with respect to `gamma`.
pub fn loss_rec_grad(gamma: &MultiCoilImage, reference: &ComplexImage) -> Result<(f64, MultiCoilImage)> {
    let s = gamma.sos();
    let r = reference.magnitude();
    let loss = loss_rec(&s, &r)?;
    let ds: Vec<f64> = s.iter().zip(&r).map(|(a, b)| 2.0 * (a - b)).collect();
    Ok((loss, sos_backward(gamma, &s, &ds)))
}

fn sos_backward(gamma: &MultiCoilImage, s: &[f64], ds: &[f64]) -> MultiCoilImage {
    let n = gamma.plane_len();
    let mut out = MultiCoilImage::zeros(gamma.coils, gamma.height, gamma.width);
    for c in 0..gamma.coils {
        for p in 0..n {
            if s[p] > 0.0 {
                out.data[c * n + p] = gamma.data[c * n + p] * (ds[p] / s[p]);
            }
        }
    }
    out
}

/// Probabilities are clamped below at this value before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Pixel-wise cross-entropy `-sum_r log p(r)[z(r)]`.
pub fn loss_seg(p: &ProbMap, z: &LabelMap) -> Result<f64> {
    check_seg_shapes(p, z)?;
    let n = z.labels.len();
    Ok((0..n).map(|r| -p.prob(z.labels[r] as usize, r).max(PROB_FLOOR).ln()).sum())
}

fn check_seg_shapes(p: &ProbMap, z: &LabelMap) -> Result<()> {
    if p.height != z.height || p.width != z.width {
        return Err(Error::Shape("probability and label maps differ in shape".into()));
    }
    if z.labels.iter().any(|&l| l as usize >= p.num_classes) {
        return Err(Error::Shape("label exceeds class count".into()));
    }
    Ok(())
}

/// Gradient of [`loss_seg`] with respect to the softmax logits (class-major).
///
/// Pixels whose true-class probability is below the clamp contribute a
/// constant and therefore a zero gradient.
pub fn loss_seg_logit_grad(p: &ProbMap, z: &LabelMap) -> Result<Vec<f64>> {
    check_seg_shapes(p, z)?;
    let n = z.labels.len();
    let mut g = vec![0.0; p.num_classes * n];
    for r in 0..n {
        let t = z.labels[r] as usize;
        if p.prob(t, r) < PROB_FLOOR {
            continue;
        }
        for c in 0..p.num_classes {
            g[c * n + r] = p.prob(c, r) - if c == t { 1.0 } else { 0.0 };
        }
    }
    Ok(g)
}

/// `(1 - alpha) rec + alpha seg` when labelled, `(1 - alpha) rec` otherwise.
pub fn loss_total(rec: f64, seg: f64, alpha: f64, labelled: bool) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} out of range [0, 1)")));
    }
    Ok(if labelled {
        (1.0 - alpha) * rec + alpha * seg
    } else {
        (1.0 - alpha) * rec
    })
}

/// Gradients for every parameter group of a model.
#[derive(Clone, Debug)]
pub struct ModelGrads<T> {
    pub net: NetParams<T>,
    pub cascade: Option<CascadeHead<T>>,
    /// False when the segmentation path did not take part in the loss.
    pub seg_active: bool,
}

/// Loss terms of one training example.
#[derive(Clone, Debug)]
pub struct StepLoss {
    pub total: f64,
    pub rec: f64,
    pub seg: Option<f64>,
}

/// Forward and reverse pass for one dataset.
///
/// Recon-only models use the plain reconstruction loss. Otherwise the loss
/// is [`loss_total`] and the segmentation term is evaluated only when
/// `labelled` is set.
pub fn loss_and_grads<T: Real>(
    model: &UnrolledModel<T>,
    ds: &Dataset,
    alpha: f64,
    labelled: bool,
) -> Result<(StepLoss, ModelGrads<T>)> {
    let (gamma, trace) = idslr_forward(&ds.kspace, &ds.mask, model)?;
    let (rec, drec) = loss_rec_grad(&gamma, &ds.reference)?;

    let use_seg = labelled && model.mode != Mode::ReconOnly;
    let rec_weight = if model.mode == Mode::ReconOnly { 1.0 } else { 1.0 - alpha };
    let mut g = drec;
    g.scale(rec_weight);

    let mut grads = ModelGrads {
        net: model.params.zeros_like(),
        cascade: model.cascade.as_ref().map(|c| c.zeros_like()),
        seg_active: use_seg,
    };

    let mut seg_loss = None;
    let mut joint_seg: Option<(DecoderActs<T>, Feat<T>)> = None;
    if use_seg {
        let labels = ds
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("labelled step on a dataset without labels".into()))?;
        let pass = segment(model, &trace)?;
        seg_loss = Some(loss_seg(&pass.probs, labels)?);
        let dlogits = loss_seg_logit_grad(&pass.probs, labels)?;
        let dl = Feat {
            channels: pass.probs.num_classes,
            height: pass.probs.height,
            width: pass.probs.width,
            data: dlogits.iter().map(|&v| T::of(alpha * v)).collect(),
        };
        match model.mode {
            Mode::Joint => joint_seg = Some((pass.decoder, dl)),
            Mode::Cascade => {
                let head = model.cascade.as_ref().expect("validated cascade head");
                let hg = grads.cascade.as_mut().expect("cascade grads");
                let enc = pass.encoder.as_ref().expect("cascade encoder pass");
                let (l, s2, s1) = head.decoder.backward(enc, &pass.decoder, dl, &mut hg.decoder);
                let dx = head.encoder.backward(enc, l, s2, s1, &mut hg.encoder);
                let s = gamma.sos();
                let ds_: Vec<f64> = dx.data.iter().map(|v| v.as_f64()).collect();
                let extra = sos_backward(&gamma, &s, &ds_);
                for (a, b) in g.data.iter_mut().zip(&extra.data) {
                    *a += b;
                }
            }
            Mode::ReconOnly => unreachable!(),
        }
    }

    for n in (0..model.unroll).rev() {
        let gz = dc_jacobian_apply(&g, &ds.mask, model.lambda)?;
        let seg = if n + 1 == model.unroll { joint_seg.take() } else { None };
        g = match seg {
            Some((acts, dl)) => denoiser_backward(&gz, &trace.acts[n], &model.params, &mut grads.net, Some((&acts, dl)))?,
            None => denoiser_backward(&gz, &trace.acts[n], &model.params, &mut grads.net, None)?,
        };
    }

    let total = loss_total(rec, seg_loss.unwrap_or(0.0), if model.mode == Mode::ReconOnly { 0.0 } else { alpha }, use_seg)?;
    Ok((StepLoss { total, rec, seg: seg_loss }, grads))
}

/// Reconstruction and, where the model has one, segmentation of a dataset.
pub fn infer<T: Real>(model: &UnrolledModel<T>, ds: &Dataset) -> Result<(MultiCoilImage, Option<ProbMap>)> {
    let (gamma, trace) = idslr_forward(&ds.kspace, &ds.mask, model)?;
    let probs = match model.mode {
        Mode::ReconOnly => None,
        _ => Some(segment(model, &trace)?.probs),
    };
    Ok((gamma, probs))
}

/// Scalar loss only (used by finite-difference checks).
pub fn loss_value<T: Real>(model: &UnrolledModel<T>, ds: &Dataset, alpha: f64, labelled: bool) -> Result<f64> {
    let (gamma, trace) = idslr_forward(&ds.kspace, &ds.mask, model)?;
    let rec = loss_rec(&gamma.sos(), &ds.reference.magnitude())?;
    if model.mode == Mode::ReconOnly {
        return Ok(rec);
    }
    let seg = if labelled {
        let labels = ds
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("labelled step on a dataset without labels".into()))?;
        loss_seg(&segment(model, &trace)?.probs, labels)?
    } else {
        0.0
    };
    loss_total(rec, seg, alpha, labelled)
}

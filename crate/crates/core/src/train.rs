//! Adam training of the unrolled model, one dataset per step.

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::net::{ConvLayer, Real};
use crate::phantom::derive_seed;
use crate::types::Dataset;
use crate::unrolled::{loss_and_grads, Mode, ModelGrads, UnrolledModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub labelled_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            alpha: cfg.alpha,
            learning_rate: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            adam_eps: cfg.adam_eps,
            epochs: cfg.epochs,
            labelled_fraction: cfg.labelled_fraction,
            seed: cfg.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} out of range [0, 1)", self.alpha)));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("Adam epsilon must be positive".into()));
        }
        if !(self.labelled_fraction > 0.0 && self.labelled_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "labelled fraction {} out of range (0, 1]",
                self.labelled_fraction
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::from_run(&RunConfig::default())
    }
}

/// Indices of the labelled subset: `ceil(fraction * n)` datasets drawn without replacement.
pub fn select_labelled(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 301));
    let mut idx = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Clone, Debug, Default)]
struct Moments {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with one state per parameter group. A group without a gradient in a
/// step (the segmentation path on an unlabelled dataset) is neither moved nor
/// advanced, as if its gradient were absent rather than zero.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    groups: Vec<Moments>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            groups: Vec::new(),
        }
    }

    fn update<T: Real>(&mut self, group: usize, params: Vec<&mut [T]>, grads: Vec<&[T]>) {
        if self.groups.len() <= group {
            self.groups.resize_with(group + 1, Moments::default);
        }
        let st = &mut self.groups[group];
        let total: usize = params.iter().map(|p| p.len()).sum();
        if st.m.len() != total {
            st.m = vec![0.0; total];
            st.v = vec![0.0; total];
        }
        st.step += 1;
        let bc1 = 1.0 - self.beta1.powi(st.step as i32);
        let bc2 = 1.0 - self.beta2.powi(st.step as i32);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            for (x, &gv) in p.iter_mut().zip(g) {
                let gv = gv.as_f64();
                st.m[k] = self.beta1 * st.m[k] + (1.0 - self.beta1) * gv;
                st.v[k] = self.beta2 * st.v[k] + (1.0 - self.beta2) * gv * gv;
                let step = self.lr * (st.m[k] / bc1) / ((st.v[k] / bc2).sqrt() + self.eps);
                *x = T::of(x.as_f64() - step);
                k += 1;
            }
        }
    }

    /// Applies one step to every group that received a gradient.
    pub fn step<T: Real>(&mut self, model: &mut UnrolledModel<T>, grads: &ModelGrads<T>) {
        fn slices<T>(layers: &mut [ConvLayer<T>]) -> Vec<&mut [T]> {
            layers
                .iter_mut()
                .flat_map(|l| [&mut l.weight[..], &mut l.bias[..]])
                .collect()
        }
        fn views<T>(layers: &[ConvLayer<T>]) -> Vec<&[T]> {
            layers.iter().flat_map(|l| [&l.weight[..], &l.bias[..]]).collect()
        }
        self.update(0, slices(&mut model.params.theta.layers), views(&grads.net.theta.layers));
        self.update(1, slices(&mut model.params.phi.layers), views(&grads.net.phi.layers));
        if grads.seg_active {
            match model.mode {
                Mode::Joint => self.update(2, slices(&mut model.params.psi.layers), views(&grads.net.psi.layers)),
                Mode::Cascade => {
                    let head = model.cascade.as_mut().expect("cascade head");
                    let g = grads.cascade.as_ref().expect("cascade grads");
                    self.update(3, slices(&mut head.encoder.layers), views(&g.encoder.layers));
                    self.update(4, slices(&mut head.decoder.layers), views(&g.decoder.layers));
                }
                Mode::ReconOnly => {}
            }
        }
    }
}

/// Per-epoch sums over all steps of the epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub rec: f64,
    pub seg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Indices of the datasets whose labels were used.
    pub labelled: Vec<usize>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Trains `model` in place.
///
/// Every epoch visits each dataset once in a seeded random order and takes
/// one Adam step per dataset. The labelled subset is drawn once per run.
/// Recon-only models ignore labels. A non-finite loss aborts with
/// [`Error::Divergence`].
pub fn train<T: Real>(
    datasets: &[Dataset],
    model: &mut UnrolledModel<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one dataset".into()));
    }
    let labelled = if model.mode == Mode::ReconOnly {
        Vec::new()
    } else {
        let chosen = select_labelled(datasets.len(), cfg.labelled_fraction, cfg.seed);
        if let Some(&i) = chosen.iter().find(|&&i| datasets[i].labels.is_none()) {
            return Err(Error::InvalidArgument(format!("dataset {i} was chosen as labelled but has no labels")));
        }
        chosen
    };
    let mut is_labelled = vec![false; datasets.len()];
    for &i in &labelled {
        is_labelled[i] = true;
    }

    let mut adam = Adam::new(cfg);
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 302));
    let mut order: Vec<usize> = (0..datasets.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut stats = EpochStats { epoch, loss: 0.0, rec: 0.0, seg: 0.0 };
        for (step, &i) in order.iter().enumerate() {
            let (loss, grads) = loss_and_grads(model, &datasets[i], cfg.alpha, is_labelled[i])?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: loss.total });
            }
            stats.loss += loss.total;
            stats.rec += loss.rec;
            stats.seg += loss.seg.unwrap_or(0.0);
            adam.step(model, &grads);
        }
        if !model.params.is_finite() {
            return Err(Error::Divergence { epoch, step: datasets.len(), loss: f64::NAN });
        }
        on_epoch(&stats);
        epochs.push(stats);
    }
    Ok(TrainReport { epochs, labelled })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelled_subset_size() {
        assert_eq!(select_labelled(20, 0.1, 0).len(), 2);
        assert_eq!(select_labelled(20, 1.0, 0), (0..20).collect::<Vec<_>>());
        assert_eq!(select_labelled(7, 0.1, 0).len(), 1);
        assert_eq!(select_labelled(10, 0.3, 0).len(), 3);
        assert_eq!(select_labelled(20, 0.1, 5), select_labelled(20, 0.1, 5));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(&TrainConfig { learning_rate: 0.1, ..TrainConfig::default() });
        let mut p = [1.0f64, -2.0, 0.5];
        let g = [3.0f64, -0.2, 0.0];
        adam.update(0, vec![&mut p[..]], vec![&g[..]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { alpha: 1.0, ..TrainConfig::default() },
            TrainConfig { labelled_fraction: 0.0, ..TrainConfig::default() },
            TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}

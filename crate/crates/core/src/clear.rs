//! Locally low-rank reconstruction over multi-coil patch matrices.
//!
//! For a patch centre `c`, the patch matrix stacks the vectorized `M x M`
//! neighbourhood of every coil image as columns (`M^2 x N`). With smooth
//! coil sensitivities these matrices are close to rank one. The solver
//! minimizes `||A g - b||^2 + lambda sum_c ||G_c||_*` by iteratively
//! re-weighted least squares: each outer step freezes right-weights
//! `W_c = (G_c^H G_c + eps I)^{-1/2}` and solves the resulting quadratic
//! by conjugate gradient.

use num_complex::Complex64;

use crate::cg::conjugate_gradient;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fourier::{apply_adjoint, apply_forward, ForwardOp};
use crate::linalg::{hermitian_function, svd, CMatrix};
use crate::types::{KSpaceData, MultiCoilImage, SamplingMask};

/// Patch lattice with periodic boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchConfig {
    /// Patch side length `M`.
    pub size: usize,
    pub stride: usize,
}

impl PatchConfig {
    pub fn new(size: usize, stride: usize) -> Self {
        Self { size, stride }
    }

    pub fn validate(&self, coils: usize, height: usize, width: usize) -> Result<()> {
        if self.size < 1 || self.size > height.min(width) {
            return Err(Error::InvalidArgument(format!(
                "patch size {} must lie in [1, {}]",
                self.size,
                height.min(width)
            )));
        }
        if self.stride < 1 || self.stride > self.size {
            return Err(Error::InvalidArgument(format!(
                "patch stride {} must lie in [1, {}]",
                self.stride, self.size
            )));
        }
        if coils >= self.size * self.size {
            return Err(Error::InvalidArgument(format!(
                "{coils} coils need patches with more than {coils} pixels"
            )));
        }
        Ok(())
    }

    /// Patch centres in row-major order.
    pub fn centers(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        (0..height)
            .step_by(self.stride)
            .flat_map(|i| (0..width).step_by(self.stride).map(move |j| (i, j)))
            .collect()
    }

    /// Image index of patch entry `k` (row-major within the patch) for centre `c`.
    #[inline]
    fn pixel(&self, c: (usize, usize), k: usize, height: usize, width: usize) -> usize {
        let half = self.size / 2;
        let (a, b) = (k / self.size, k % self.size);
        let i = (c.0 + height + a - half) % height;
        let j = (c.1 + width + b - half) % width;
        i * width + j
    }

    /// Number of patches covering each pixel.
    pub fn cover_counts(&self, height: usize, width: usize) -> Vec<usize> {
        let mut counts = vec![0; height * width];
        for c in self.centers(height, width) {
            for k in 0..self.size * self.size {
                counts[self.pixel(c, k, height, width)] += 1;
            }
        }
        counts
    }
}

/// `M^2 x N` matrix of co-located patches; column `i` is coil `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    pub center: (usize, usize),
    pub matrix: CMatrix,
}

/// Extracts one patch matrix per lattice centre.
pub fn extract_patches(gamma: &MultiCoilImage, cfg: &PatchConfig) -> Result<Vec<PatchMatrix>> {
    cfg.validate(gamma.coils, gamma.height, gamma.width)?;
    Ok(extract_unchecked(gamma, cfg))
}

fn extract_unchecked(gamma: &MultiCoilImage, cfg: &PatchConfig) -> Vec<PatchMatrix> {
    let (h, w, n) = (gamma.height, gamma.width, gamma.plane_len());
    let m2 = cfg.size * cfg.size;
    cfg.centers(h, w)
        .into_iter()
        .map(|c| {
            let mut matrix = CMatrix::zeros(m2, gamma.coils);
            for k in 0..m2 {
                let p = cfg.pixel(c, k, h, w);
                for coil in 0..gamma.coils {
                    matrix[(k, coil)] = gamma.data[coil * n + p];
                }
            }
            PatchMatrix { center: c, matrix }
        })
        .collect()
}

/// Transpose of [`extract_patches`]: accumulates every patch back into the image.
pub fn patch_adjoint(
    patches: &[PatchMatrix],
    cfg: &PatchConfig,
    coils: usize,
    height: usize,
    width: usize,
) -> Result<MultiCoilImage> {
    cfg.validate(coils, height, width)?;
    let centers = cfg.centers(height, width);
    let m2 = cfg.size * cfg.size;
    if patches.len() != centers.len()
        || patches.iter().zip(&centers).any(|(p, c)| {
            p.center != *c || p.matrix.rows != m2 || p.matrix.cols != coils
        })
    {
        return Err(Error::Shape("patches do not match the configured lattice".into()));
    }
    let mut out = MultiCoilImage::zeros(coils, height, width);
    accumulate(&mut out, patches.iter().map(|p| (p.center, &p.matrix)), cfg);
    Ok(out)
}

fn accumulate<'a>(
    out: &mut MultiCoilImage,
    patches: impl Iterator<Item = ((usize, usize), &'a CMatrix)>,
    cfg: &PatchConfig,
) {
    let (h, w, n) = (out.height, out.width, out.plane_len());
    let m2 = cfg.size * cfg.size;
    for (c, mat) in patches {
        for k in 0..m2 {
            let p = cfg.pixel(c, k, h, w);
            for coil in 0..out.coils {
                out.data[coil * n + p] += mat[(k, coil)];
            }
        }
    }
}

/// Sum of singular values.
pub fn nuclear_norm(gamma: &CMatrix) -> Result<f64> {
    if !gamma.is_finite() {
        return Err(Error::NonFinite("nuclear norm input".into()));
    }
    if gamma.rows < gamma.cols {
        return Ok(svd(&gamma.adjoint())?.s.iter().sum());
    }
    Ok(svd(gamma)?.s.iter().sum())
}

/// `||A g - b||^2`.
pub fn data_fidelity(gamma: &MultiCoilImage, b: &KSpaceData, mask: &SamplingMask) -> Result<f64> {
    if gamma.coils != b.coils || gamma.height != b.height || gamma.width != b.width {
        return Err(Error::Shape("image and k-space differ in shape".into()));
    }
    let ag = apply_forward(gamma, mask)?;
    Ok(ag.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum())
}

/// `||A g - b||^2 + lambda sum_c ||G_c||_*`.
pub fn clear_objective(
    gamma: &MultiCoilImage,
    b: &KSpaceData,
    mask: &SamplingMask,
    lambda: f64,
    cfg: &PatchConfig,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let fidelity = data_fidelity(gamma, b, mask)?;
    if lambda == 0.0 {
        return Ok(fidelity);
    }
    let mut reg = 0.0;
    for p in extract_patches(gamma, cfg)? {
        reg += nuclear_norm(&p.matrix)?;
    }
    Ok(fidelity + lambda * reg)
}

/// `(G^H G + eps I)^{-1/2}`.
pub fn irls_weights(gamma: &CMatrix, eps: f64) -> Result<CMatrix> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("IRLS smoothing must be positive, got {eps}")));
    }
    let mut g = gamma.gram();
    for i in 0..g.rows {
        g[(i, i)] += eps;
    }
    hermitian_function(&g, |w| 1.0 / w.max(eps).sqrt())
}

/// `tr((G^H G + eps I)^{1/2})`, the smoothed nuclear norm.
pub fn smoothed_nuclear_norm(gamma: &CMatrix, eps: f64) -> Result<f64> {
    let s = svd(gamma)?.s;
    Ok(s.iter().map(|&v| (v * v + eps).sqrt()).sum())
}

/// Annihilating vectors of one patch matrix.
///
/// For each trailing singular pair `j`, `left[j]` is a length-`M^2` row with
/// `left[j] G = s_j v_j^H` and `right[j]` a length-`N` column with
/// `G right[j] = s_j u_j`, so both residuals are bounded by `s_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct NullSpaceBasis {
    pub center: (usize, usize),
    pub rank: usize,
    pub patch_size: usize,
    pub coils: usize,
    pub left: Vec<Vec<Complex64>>,
    pub right: Vec<Vec<Complex64>>,
    /// Singular values of the annihilated directions.
    pub residual_sigmas: Vec<f64>,
}

/// Trailing singular vectors below `tau_rank * s_1`.
pub fn null_space_filters(patch: &PatchMatrix, tau_rank: f64) -> Result<NullSpaceBasis> {
    if !(tau_rank > 0.0 && tau_rank < 1.0) {
        return Err(Error::InvalidArgument(format!("rank threshold must lie in (0, 1), got {tau_rank}")));
    }
    let g = &patch.matrix;
    let d = svd(g)?;
    let s1 = d.s.first().copied().unwrap_or(0.0);
    let rank = d.s.iter().filter(|&&s| s1 > 0.0 && s >= tau_rank * s1).count();
    let n = g.cols;
    let left = (rank..n)
        .map(|j| d.u.col(j).iter().map(|z| z.conj()).collect())
        .collect();
    let right = (rank..n).map(|j| d.v.col(j).to_vec()).collect();
    let m = (g.rows as f64).sqrt().round() as usize;
    Ok(NullSpaceBasis {
        center: patch.center,
        rank,
        patch_size: m,
        coils: n,
        left,
        right,
        residual_sigmas: d.s[rank..].to_vec(),
    })
}

impl NullSpaceBasis {
    /// Stacked relation matrix `Q` for null direction `j`.
    ///
    /// `Q` is `(N + M^2) x (M^2 N)`; applied to the coil-stacked patch vector
    /// `p` (`p[i M^2 + k] = G[k, i]`) its first `N` rows give `u_j G` and the
    /// remaining `M^2` rows give `G v_j`.
    pub fn relation_matrix(&self, j: usize) -> CMatrix {
        let m2 = self.patch_size * self.patch_size;
        let n = self.coils;
        let u = &self.left[j];
        let v = &self.right[j];
        let mut q = CMatrix::zeros(n + m2, m2 * n);
        for i in 0..n {
            for k in 0..m2 {
                q[(i, i * m2 + k)] = u[k];
            }
        }
        for k in 0..m2 {
            for i in 0..n {
                q[(n + k, i * m2 + k)] = v[i];
            }
        }
        q
    }

    /// The rows of [`Self::relation_matrix`] as flipped multi-channel
    /// convolution kernels.
    pub fn filters(&self, j: usize) -> Vec<SpatialFilter> {
        let q = self.relation_matrix(j);
        let m = self.patch_size;
        let m2 = m * m;
        (0..q.rows)
            .map(|row| {
                let mut taps = vec![Complex64::new(0.0, 0.0); self.coils * m2];
                for i in 0..self.coils {
                    for k in 0..m2 {
                        let (ka, kb) = (k / m, k % m);
                        let (fa, fb) = (m - 1 - ka, m - 1 - kb);
                        taps[i * m2 + fa * m + fb] = q[(row, i * m2 + k)];
                    }
                }
                SpatialFilter {
                    coils: self.coils,
                    size: m,
                    origin: (m - 1 - m / 2) as isize,
                    taps,
                }
            })
            .collect()
    }
}

/// `M x M x N` kernel; tap `(i, a, b)` multiplies `gamma_i(r - (a - origin, b - origin))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFilter {
    pub coils: usize,
    pub size: usize,
    pub origin: isize,
    pub taps: Vec<Complex64>,
}

impl SpatialFilter {
    /// Periodic multi-channel convolution `(gamma * q)(c)` evaluated at one point.
    pub fn response_at(&self, gamma: &MultiCoilImage, c: (usize, usize)) -> Complex64 {
        let (h, w) = (gamma.height as isize, gamma.width as isize);
        let m = self.size;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.coils {
            let plane = gamma.plane(i);
            for a in 0..m {
                let di = a as isize - self.origin;
                let r = (c.0 as isize - di).rem_euclid(h) as usize;
                for b in 0..m {
                    let dj = b as isize - self.origin;
                    let s = (c.1 as isize - dj).rem_euclid(w) as usize;
                    acc += self.taps[i * m * m + a * m + b] * plane[r * gamma.width + s];
                }
            }
        }
        acc
    }
}

/// Solver settings for [`clear_reconstruct`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClearConfig {
    pub patch: PatchConfig,
    pub eps_scale: f64,
    pub eps_min_ratio: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl ClearConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            patch: PatchConfig::new(cfg.patch_size, cfg.patch_stride),
            eps_scale: cfg.eps_scale,
            eps_min_ratio: cfg.eps_min_ratio,
            cg_tol: cfg.cg_tol,
            cg_max_iter: cfg.cg_max_iter,
        }
    }
}

impl Default for ClearConfig {
    fn default() -> Self {
        Self::from_run(&RunConfig::default())
    }
}

/// One outer IRLS iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IrlsRecord {
    pub eps: f64,
    /// Smoothed objective at the current `eps`, before and after the solve.
    pub objective_before: f64,
    pub objective_after: f64,
    pub cg_iterations: usize,
    pub cg_residual: f64,
}

#[derive(Clone, Debug)]
pub struct IrlsState {
    pub gamma: MultiCoilImage,
    /// Right-weights of the last outer iteration, one per patch centre.
    pub weights: Vec<CMatrix>,
    pub eps: f64,
    pub history: Vec<IrlsRecord>,
    /// Outer iterations whose CG solve stopped before reaching `cg_tol`.
    pub cg_unconverged: usize,
}

/// `||A g - b||^2 + lambda sum_c tr((G_c^H G_c + eps I)^{1/2})`.
pub fn smoothed_objective(
    gamma: &MultiCoilImage,
    b: &KSpaceData,
    mask: &SamplingMask,
    lambda: f64,
    patch: &PatchConfig,
    eps: f64,
) -> Result<f64> {
    let mut reg = 0.0;
    for p in extract_patches(gamma, patch)? {
        reg += smoothed_nuclear_norm(&p.matrix, eps)?;
    }
    Ok(data_fidelity(gamma, b, mask)? + lambda * reg)
}

/// IRLS reconstruction starting from the zero-filled image `A^H b`.
///
/// Each outer step majorizes the smoothed nuclear norm at the current
/// iterate, so the quadratic subproblem carries weight `lambda / 2`:
/// `argmin ||A g - b||^2 + (lambda/2) sum_c tr(G_c W_c G_c^H)`. CG is
/// warm-started from the current iterate, which guarantees the smoothed
/// objective never increases even when CG stops early. `eps` is halved
/// after each outer step down to `eps_min_ratio * eps_0`.
pub fn clear_reconstruct(
    b: &KSpaceData,
    mask: &SamplingMask,
    lambda: f64,
    cfg: &ClearConfig,
    iters: usize,
) -> Result<(MultiCoilImage, IrlsState)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if iters < 1 {
        return Err(Error::InvalidArgument("need at least one IRLS iteration".into()));
    }
    let (coils, h, w) = (b.coils, b.height, b.width);
    cfg.patch.validate(coils, h, w)?;
    let op = ForwardOp::new(mask, coils);
    let rhs = apply_adjoint(b, mask)?;
    let mut gamma = rhs.clone();

    let s1_max = extract_unchecked(&gamma, &cfg.patch)
        .iter()
        .map(|p| svd(&p.matrix).map(|d| d.s[0]))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let eps0 = if s1_max > 0.0 { cfg.eps_scale * s1_max * s1_max } else { cfg.eps_scale };
    let eps_min = cfg.eps_min_ratio * eps0;
    let mut eps = eps0;

    let mut history = Vec::with_capacity(iters);
    let mut weights = Vec::new();
    let mut cg_unconverged = 0;
    for _ in 0..iters {
        let patches = extract_unchecked(&gamma, &cfg.patch);
        weights = patches
            .iter()
            .map(|p| irls_weights(&p.matrix, eps))
            .collect::<Result<Vec<_>>>()?;
        let before = smoothed_objective(&gamma, b, mask, lambda, &cfg.patch, eps)?;

        let centers: Vec<(usize, usize)> = patches.iter().map(|p| p.center).collect();
        let half_lambda = 0.5 * lambda;
        let apply = |x: &[Complex64]| -> Vec<Complex64> {
            let xi = MultiCoilImage {
                coils,
                height: h,
                width: w,
                data: x.to_vec(),
            };
            let mut out = op.normal(&xi).expect("shapes validated");
            let weighted: Vec<CMatrix> = extract_unchecked(&xi, &cfg.patch)
                .iter()
                .zip(&weights)
                .map(|(p, wc)| {
                    let mut m = p.matrix.matmul(wc);
                    m.data.iter_mut().for_each(|z| *z *= half_lambda);
                    m
                })
                .collect();
            accumulate(&mut out, centers.iter().copied().zip(weighted.iter()), &cfg.patch);
            out.data
        };
        let outcome = conjugate_gradient(apply, &rhs.data, gamma.data.clone(), cfg.cg_tol, cfg.cg_max_iter);
        if !outcome.converged {
            cg_unconverged += 1;
        }
        gamma = MultiCoilImage::new(coils, h, w, outcome.x)?;
        let after = smoothed_objective(&gamma, b, mask, lambda, &cfg.patch, eps)?;
        history.push(IrlsRecord {
            eps,
            objective_before: before,
            objective_after: after,
            cg_iterations: outcome.iterations,
            cg_residual: outcome.relative_residual,
        });
        eps = (eps * 0.5).max(eps_min);
    }
    let state = IrlsState {
        gamma: gamma.clone(),
        weights,
        eps,
        history,
        cg_unconverged,
    };
    Ok((gamma, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coils(rng: &mut ChaCha8Rng, coils: usize, h: usize, w: usize) -> MultiCoilImage {
        let data = (0..coils * h * w)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        MultiCoilImage::new(coils, h, w, data).unwrap()
    }

    #[test]
    fn constant_coils_give_rank_one_patches() {
        let weights = [Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2), Complex64::new(0.0, 2.0)];
        let data = weights
            .iter()
            .flat_map(|&a| std::iter::repeat_n(a, 16 * 16))
            .collect();
        let g = MultiCoilImage::new(3, 16, 16, data).unwrap();
        for p in extract_patches(&g, &PatchConfig::new(4, 2)).unwrap() {
            let s = svd(&p.matrix).unwrap().s;
            assert!(s[1] <= 1e-14 * s[0], "{s:?}");
            // identical rows
            for k in 1..16 {
                for i in 0..3 {
                    assert_eq!(p.matrix[(k, i)], p.matrix[(0, i)]);
                }
            }
        }
    }

    #[test]
    fn half_stride_covers_four_times() {
        let cfg = PatchConfig::new(8, 4);
        assert!(cfg.cover_counts(32, 32).iter().all(|&c| c == 4));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_coils(&mut rng, 2, 32, 32);
        let back = patch_adjoint(&extract_patches(&g, &cfg).unwrap(), &cfg, 2, 32, 32).unwrap();
        let err: f64 = back
            .data
            .iter()
            .zip(&g.data)
            .map(|(a, b)| (a - b * 4.0).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err / (4.0 * g.norm()) < 1e-12);
    }

    #[test]
    fn non_overlapping_lattice_is_a_partition() {
        let cfg = PatchConfig::new(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_coils(&mut rng, 3, 16, 12);
        let back = patch_adjoint(&extract_patches(&g, &cfg).unwrap(), &cfg, 3, 16, 12).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn lattice_mismatch_is_rejected() {
        let cfg = PatchConfig::new(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_coils(&mut rng, 2, 16, 16);
        let mut patches = extract_patches(&g, &cfg).unwrap();
        patches.pop();
        assert!(patch_adjoint(&patches, &cfg, 2, 16, 16).is_err());
    }

    #[test]
    fn invalid_patch_configs_rejected() {
        assert!(PatchConfig::new(0, 1).validate(2, 8, 8).is_err());
        assert!(PatchConfig::new(9, 1).validate(2, 8, 8).is_err());
        assert!(PatchConfig::new(4, 5).validate(2, 8, 8).is_err());
        assert!(PatchConfig::new(2, 1).validate(4, 8, 8).is_err());
    }

    #[test]
    fn nuclear_norm_simple_cases() {
        let u: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let v = [Complex64::new(2.0, -1.0), Complex64::new(0.5, 0.5)];
        let outer = CMatrix::from_fn(5, 2, |i, j| u[i] * v[j].conj());
        let nu: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((nuclear_norm(&outer).unwrap() - nu * nv).abs() < 1e-12 * nu * nv);

        let mut eye = CMatrix::zeros(4, 2);
        eye[(0, 0)] = Complex64::new(1.0, 0.0);
        eye[(1, 1)] = Complex64::new(1.0, 0.0);
        assert!((nuclear_norm(&eye).unwrap() - 2.0).abs() < 1e-15);

        let mut bad = CMatrix::zeros(3, 2);
        bad[(2, 1)] = Complex64::new(f64::INFINITY, 0.0);
        assert!(nuclear_norm(&bad).is_err());
    }

    #[test]
    fn weights_of_zero_matrix() {
        let w = irls_weights(&CMatrix::zeros(9, 3), 0.25).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { 0.0 };
                assert!((w[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
        assert!(irls_weights(&CMatrix::zeros(9, 3), 0.0).is_err());
    }

    #[test]
    fn weights_of_orthonormal_columns() {
        let mut g = CMatrix::zeros(6, 3);
        for i in 0..3 {
            g[(2 * i, i)] = Complex64::new(0.0, 1.0);
        }
        let w = irls_weights(&g, 1e-12).unwrap();
        let t = g.matmul(&w).matmul(&g.adjoint()).trace();
        assert!((t.re - 3.0).abs() < 1e-9 && t.im.abs() < 1e-12);
    }

    #[test]
    fn full_rank_has_empty_null_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_coils(&mut rng, 3, 8, 8);
        let p = &extract_patches(&g, &PatchConfig::new(4, 4)).unwrap()[0];
        let basis = null_space_filters(p, 1e-12).unwrap();
        assert_eq!(basis.rank, 3);
        assert!(basis.left.is_empty() && basis.right.is_empty());
    }

    #[test]
    fn reconstruct_rejects_bad_arguments() {
        let mask = SamplingMask::full(8, 8);
        let b = KSpaceData::zeros(2, 8, 8);
        let cfg = ClearConfig {
            patch: PatchConfig::new(4, 2),
            ..ClearConfig::default()
        };
        assert!(clear_reconstruct(&b, &mask, 0.0, &cfg, 1).is_err());
        assert!(clear_reconstruct(&b, &mask, 1.0, &cfg, 0).is_err());
    }
}

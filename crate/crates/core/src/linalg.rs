//! Small dense complex linear algebra: one-sided Jacobi SVD for tall
//! matrices and a cyclic Jacobi eigensolver for Hermitian matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense complex matrix stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn col(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        let r = self.rows;
        &mut self.data[j * r..(j + 1) * r]
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other[(k, j)];
                if b == ZERO {
                    continue;
                }
                let a = self.col(k);
                let o = out.col_mut(j);
                for i in 0..a.len() {
                    o[i] += a[i] * b;
                }
            }
        }
        out
    }

    /// `self^H self`.
    pub fn gram(&self) -> CMatrix {
        let n = self.cols;
        let mut g = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v: Complex64 = self
                    .col(i)
                    .iter()
                    .zip(self.col(j))
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
        g
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[j * self.rows + i]
    }
}

/// Thin SVD `A = U diag(s) V^H` of an m x n matrix with m >= n.
#[derive(Clone, Debug)]
pub struct Svd {
    /// m x n with orthonormal columns.
    pub u: CMatrix,
    /// Singular values in non-increasing order.
    pub s: Vec<f64>,
    /// n x n unitary.
    pub v: CMatrix,
}

/// Jacobi rotation parameters `(c, s)` that orthogonalize a pair with
/// squared norms `alpha`, `beta` and real coupling `gamma > 0`.
fn rotation(alpha: f64, beta: f64, gamma: f64) -> (f64, f64) {
    let zeta = (beta - alpha) / (2.0 * gamma);
    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
    let t = if zeta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, c * t)
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns are orthogonalized pairwise until every pair's normalized
/// coupling falls below machine precision. Small singular values are
/// obtained with absolute accuracy near `eps * s_max`, which keeps
/// null-space residuals at round-off level.
pub fn svd(a: &CMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if a.rows < a.cols {
        return Err(Error::Shape(format!(
            "svd expects a tall matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let (m, n) = (a.rows, a.cols);
    let mut w = a.clone();
    let mut v = CMatrix::identity(n);
    let tol = f64::EPSILON * (m as f64).sqrt();

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w.col(p).iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = w.col(q).iter().map(|z| z.norm_sqr()).sum();
                let g: Complex64 = w
                    .col(p)
                    .iter()
                    .zip(w.col(q))
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let gabs = g.norm();
                if gabs == 0.0 || gabs <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate column q so the coupling becomes real and positive.
                let phase = g.conj() / gabs;
                let (c, s) = rotation(alpha, beta, gabs);
                rotate_columns(&mut w, p, q, phase, c, s);
                rotate_columns(&mut v, p, q, phase, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| w.col(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let mut u = CMatrix::zeros(m, n);
    let mut vs = CMatrix::zeros(n, n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        vs.col_mut(k).copy_from_slice(v.col(j));
        if s[k] > smax * 1e-13 && s[k] > 0.0 {
            let inv = 1.0 / s[k];
            for (dst, src) in u.col_mut(k).iter_mut().zip(w.col(j)) {
                *dst = src * inv;
            }
        } else {
            deficient.push(k);
        }
    }
    complete_basis(&mut u, &deficient);
    Ok(Svd { u, s, v: vs })
}

/// Applies `[x_p, x_q] <- [c x_p - s e x_q, s x_p + c e x_q]` with `e = phase`.
fn rotate_columns(mat: &mut CMatrix, p: usize, q: usize, phase: Complex64, c: f64, s: f64) {
    let rows = mat.rows;
    for i in 0..rows {
        let xp = mat.data[p * rows + i];
        let xq = mat.data[q * rows + i] * phase;
        mat.data[p * rows + i] = xp * c - xq * s;
        mat.data[q * rows + i] = xp * s + xq * c;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all other columns.
fn complete_basis(u: &mut CMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = u.rows;
    let mut filled: Vec<usize> = (0..u.cols).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0;
    for &k in missing {
        loop {
            assert!(candidate < m, "could not complete orthonormal basis");
            let mut x = vec![ZERO; m];
            x[candidate] = Complex64::new(1.0, 0.0);
            candidate += 1;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for &j in &filled {
                    let proj: Complex64 = u.col(j).iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
                    for (xi, ui) in x.iter_mut().zip(u.col(j)) {
                        *xi -= ui * proj;
                    }
                }
            }
            let nrm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 1e-6 {
                for (dst, src) in u.col_mut(k).iter_mut().zip(&x) {
                    *dst = src / nrm;
                }
                filled.push(k);
                break;
            }
        }
    }
}

/// Eigen-decomposition `A = V diag(w) V^H` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues in non-increasing order.
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eigen(a: &CMatrix) -> Result<HermitianEigen> {
    if a.rows != a.cols {
        return Err(Error::Shape("eigen-decomposition needs a square matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("eigen-decomposition input".into()));
    }
    let n = a.rows;
    // work on the Hermitian part
    let mut m = CMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    let mut v = CMatrix::identity(n);
    let scale = m.frobenius();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let aabs = apq.norm();
                if aabs == 0.0 {
                    continue;
                }
                // Unitary diagonal scaling makes m[p,q] real: d_q = conj(apq)/|apq|.
                let dq = apq.conj() / aabs;
                for i in 0..n {
                    m[(i, q)] *= dq;
                }
                for j in 0..n {
                    m[(q, j)] *= dq.conj();
                }
                for i in 0..n {
                    v[(i, q)] *= dq;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let theta = (aqq - app) / (2.0 * aabs);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // m <- R^T m R with R = [[c, s], [-s, c]] on (p, q)
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = mip * c - miq * s;
                    m[(i, q)] = mip * s + miq * c;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = mpj * c - mqj * s;
                    m[(q, j)] = mpj * s + mqj * c;
                }
                m[(p, q)] = ZERO;
                m[(q, p)] = ZERO;
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * s;
                    v[(i, q)] = vip * s + viq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.col_mut(k).copy_from_slice(v.col(i));
    }
    Ok(HermitianEigen { values, vectors })
}

/// `V diag(f(w)) V^H` for a Hermitian matrix.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let eig = hermitian_eigen(a)?;
    let n = a.rows;
    let fw: Vec<f64> = eig.values.iter().map(|&w| f(w)).collect();
    Ok(CMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.vectors[(i, k)] * eig.vectors[(j, k)].conj() * fw[k])
            .sum()
    }))
}

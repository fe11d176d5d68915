//! Conjugate gradient for Hermitian positive-definite systems on complex vectors.

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    /// Final relative residual `||b - A x|| / ||b||`.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `A x = b` starting from `x0`. `apply` must be Hermitian PSD.
///
/// Stops when the relative residual drops below `tol` or after `max_iter`
/// iterations. Warm starts never increase the quadratic `x^H A x / 2 - Re(b^H x)`.
pub fn conjugate_gradient<F>(
    mut apply: F,
    b: &[Complex64],
    x0: Vec<Complex64>,
    tol: f64,
    max_iter: usize,
) -> CgOutcome
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let bnorm = norm(b);
    let mut x = x0;
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return CgOutcome {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let ax = apply(&x);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r).re;
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() / bnorm < tol {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap).re;
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_new = dot(&r, &r).re;
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_new;
        iterations += 1;
    }
    // Report the true residual rather than the recursively updated one.
    let ax = apply(&x);
    let res: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let relative_residual = norm(&res) / bnorm;
    CgOutcome {
        x,
        iterations,
        relative_residual,
        converged: relative_residual < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_hermitian_system() {
        // A = [[4, 1+i], [1-i, 3]]
        let a = [
            [Complex64::new(4.0, 0.0), Complex64::new(1.0, 1.0)],
            [Complex64::new(1.0, -1.0), Complex64::new(3.0, 0.0)],
        ];
        let apply = |v: &[Complex64]| {
            (0..2)
                .map(|i| a[i][0] * v[0] + a[i][1] * v[1])
                .collect::<Vec<_>>()
        };
        let b = vec![Complex64::new(1.0, 2.0), Complex64::new(-1.0, 0.5)];
        let out = conjugate_gradient(apply, &b, vec![Complex64::new(0.0, 0.0); 2], 1e-14, 10);
        assert!(out.converged);
        let check = apply(&out.x);
        assert!((check[0] - b[0]).norm() < 1e-12 && (check[1] - b[1]).norm() < 1e-12);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = conjugate_gradient(
            |v: &[Complex64]| v.to_vec(),
            &[Complex64::new(0.0, 0.0); 3],
            vec![Complex64::new(1.0, 0.0); 3],
            1e-10,
            5,
        );
        assert!(out.x.iter().all(|z| z.norm() == 0.0));
    }
}

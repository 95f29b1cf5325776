//! Small dense and tridiagonal Gaussian kernels used inside the sweep.
//!
//! Dense matrices here are `n × n` row-major slices. Only the lower
//! triangle is read by [`cholesky_in_place`].

use rand::Rng;
use rand_distr::StandardNormal;

/// Failed pivot index of a Cholesky factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite(pub usize);

pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), NotPositiveDefinite> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(NotPositiveDefinite(j));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place.
pub fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub fn backward_solve_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Draws `x ~ N(P⁻¹ b, P⁻¹)` given precision `P` (overwritten with its
/// Cholesky factor) and linear term `b` (overwritten with the draw).
pub fn draw_from_precision<R: Rng + ?Sized>(
    precision: &mut [f64],
    linear: &mut [f64],
    n: usize,
    rng: &mut R,
) -> Result<(), NotPositiveDefinite> {
    cholesky_in_place(precision, n)?;
    forward_solve(precision, n, linear);
    for v in linear.iter_mut() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    backward_solve_transpose(precision, n, linear);
    Ok(())
}

/// Symmetric tridiagonal precision matrix: `diag[0..n]`, `off[0..n-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    /// Bidiagonal Cholesky factor `(l_ii, l_{i+1,i})`, computed in place.
    fn factor(&mut self) -> Result<(), NotPositiveDefinite> {
        let n = self.diag.len();
        for i in 0..n {
            if i > 0 {
                let sub = self.off[i - 1] / self.diag[i - 1];
                self.off[i - 1] = sub;
                self.diag[i] -= sub * sub;
            }
            let d = self.diag[i];
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite(i));
            }
            self.diag[i] = d.sqrt();
        }
        Ok(())
    }

    /// Draws from `N(Q⁻¹ b, Q⁻¹)` in O(n). `linear` holds `b` on entry and
    /// the draw on exit; `noise` supplies the standard-normal innovations
    /// (pass zeros to get the conditional mean).
    pub fn sample_into(mut self, linear: &mut [f64], noise: &[f64]) -> Result<(), NotPositiveDefinite> {
        let n = self.diag.len();
        debug_assert_eq!(linear.len(), n);
        self.factor()?;
        let (l, sub) = (&self.diag, &self.off);
        for i in 0..n {
            let prev = if i > 0 { sub[i - 1] * linear[i - 1] } else { 0.0 };
            linear[i] = (linear[i] - prev) / l[i];
        }
        for (v, e) in linear.iter_mut().zip(noise) {
            *v += e;
        }
        for i in (0..n).rev() {
            let next = if i + 1 < n { sub[i] * linear[i + 1] } else { 0.0 };
            linear[i] = (linear[i] - next) / l[i];
        }
        Ok(())
    }
}

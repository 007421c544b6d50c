use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Spatial dimension of every executable path.
pub const DIM: usize = 2;

/// Uniform `n x n` grid on the flat torus `[0, 2pi)^2`.
///
/// Real samples are stored row-major with the `x1` index outermost:
/// sample `i1 * n + i2` sits at `(2pi i1 / n, 2pi i2 / n)`. Fourier
/// coefficients use the same layout with FFT index ordering, so index `i`
/// on an axis carries wavenumber `i` for `i < n/2` and `i - n` otherwise.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<Inner>,
}

struct Inner {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.n()).finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n()
    }
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "grid size must be even and at least 4, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(TorusGrid {
            inner: Arc::new(Inner {
                n,
                forward,
                inverse,
            }),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.inner.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        DIM
    }

    /// Number of grid points (and of Fourier coefficients).
    #[inline]
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n() as f64
    }

    /// Quadrature weight of one grid cell, `(2pi/n)^d`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(DIM as i32)
    }

    /// Measure of the torus, `(2pi)^d`.
    #[inline]
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(DIM as i32)
    }

    /// Signed wavenumber carried by FFT index `i` on one axis.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n();
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// FFT index of a signed wavenumber, if it is representable.
    #[inline]
    pub fn index_of(&self, k: i64) -> Option<usize> {
        let n = self.n() as i64;
        if k < -n / 2 || k >= n / 2 {
            None
        } else {
            Some(k.rem_euclid(n) as usize)
        }
    }

    /// Wavenumber vector of flat coefficient index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 2] {
        let n = self.n();
        [self.wavenumber(idx / n), self.wavenumber(idx % n)]
    }

    /// Flat coefficient index of the wavevector `k`.
    pub fn flat_index(&self, k: [i64; 2]) -> Option<usize> {
        Some(self.index_of(k[0])? * self.n() + self.index_of(k[1])?)
    }

    /// True when a mode survives the 2/3 rule.
    #[inline]
    pub fn is_resolved(&self, k: [i64; 2]) -> bool {
        let n = self.n() as i64;
        3 * k[0].abs() < n && 3 * k[1].abs() < n
    }

    /// Largest wavenumber component kept by dealiasing.
    pub fn dealias_cutoff(&self) -> i64 {
        let n = self.n() as i64;
        (n - 1) / 3
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let n = self.n();
        let h = self.spacing();
        [(idx / n) as f64 * h, (idx % n) as f64 * h]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Forward transform of real samples: `u_k = n^-2 sum_x u(x) e^{-i k.x}`.
    pub fn forward(&self, samples: &[f64]) -> Result<Vec<Complex64>> {
        if samples.len() != self.len() {
            return Err(Error::Config(format!(
                "expected {} samples for a {}x{} grid, got {}",
                self.len(),
                self.n(),
                self.n(),
                samples.len()
            )));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft2(&mut buf, &self.inner.forward);
        let scale = 1.0 / self.len() as f64;
        for c in &mut buf {
            *c *= scale;
        }
        Ok(buf)
    }

    /// Inverse transform; the imaginary residue of non-symmetric input is dropped.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.len());
        let mut buf = coeffs.to_vec();
        self.fft2(&mut buf, &self.inner.inverse);
        buf.into_iter().map(|c| c.re).collect()
    }

    fn fft2(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n();
        // rows (x2 direction) are contiguous
        plan.process(buf);
        transpose(buf, n);
        plan.process(buf);
        transpose(buf, n);
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use super::grid::TorusGrid;
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative bound on `|k . v_k|` for a field to count as divergence-free.
pub const DIV_FREE_TOL: f64 = 1e-12;

/// How [`poisson_solve`] treats a right-hand side with non-zero mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanHandling {
    /// Non-zero mean is a solvability error.
    Reject,
    /// The mean is removed before solving.
    Project,
}

/// Real scalar field stored as its full array of Fourier coefficients.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        SpectralField {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Transform real grid samples.
    pub fn from_real(grid: &TorusGrid, samples: &[f64]) -> Result<Self> {
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs: grid.forward(samples)?,
        })
    }

    /// Sample `f` on the grid and transform.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let samples: Vec<f64> = grid.points().iter().map(|p| f(p[0], p[1])).collect();
        Self::from_real(grid, &samples).expect("sample count matches grid")
    }

    pub fn from_coeffs(grid: &TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::Config(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            coeffs,
        })
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of wavevector `k` (zero when not representable).
    pub fn coeff(&self, k: [i64; 2]) -> Complex64 {
        self.grid
            .flat_index(k)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    /// Sets `u_k` and `u_{-k} = conj(u_k)` together.
    pub fn set_mode(&mut self, k: [i64; 2], value: Complex64) {
        let a = self.grid.flat_index(k).expect("wavevector on grid");
        let b = self.grid.flat_index([-k[0], -k[1]]).expect("wavevector on grid");
        self.coeffs[a] = value;
        self.coeffs[b] = value.conj();
        if a == b {
            self.coeffs[a].im = 0.0;
        }
    }

    pub fn to_real(&self) -> Vec<f64> {
        self.grid.inverse(&self.coeffs)
    }

    /// The `k = 0` coefficient.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `int u dx` over the torus.
    pub fn integral(&self) -> f64 {
        self.grid.volume() * self.coeffs[0].re
    }

    /// `int |u|^2 dx` via Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `int u w dx` via Parseval.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        self.grid.volume() * s
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max |u|` over the grid points.
    pub fn max_abs(&self) -> f64 {
        self.to_real().iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Largest violation of `u_{-k} = conj(u_k)`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let n = self.grid.n();
        let mut worst: f64 = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let j1 = (n - i1) % n;
                let j2 = (n - i2) % n;
                let d = (self.coeffs[i1 * n + i2] - self.coeffs[j1 * n + j2].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Zero every mode with `|k_i| >= n/3` (the 2/3 rule).
    pub fn dealias(&mut self) {
        let grid = self.grid.clone();
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            if !grid.is_resolved(grid.wavevector(idx)) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn dealiased(mut self) -> Self {
        self.dealias();
        self
    }

    /// True when every unresolved mode is exactly zero.
    pub fn is_dealiased(&self) -> bool {
        self.coeffs.iter().enumerate().all(|(idx, c)| {
            self.grid.is_resolved(self.grid.wavevector(idx)) || (c.re == 0.0 && c.im == 0.0)
        })
    }

    fn map_modes(&self, f: impl Fn([i64; 2], Complex64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| f(self.grid.wavevector(idx), c))
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// `d/dx_axis`, exact multiplication by `i k_axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        self.map_modes(|k, c| c * I * k[axis] as f64)
    }

    pub fn gradient(&self) -> SpectralVectorField {
        SpectralVectorField::new([self.derivative(0), self.derivative(1)])
    }

    pub fn laplacian(&self) -> Self {
        self.map_modes(|k, c| -c * (k[0] * k[0] + k[1] * k[1]) as f64)
    }

    /// `[[f_11, f_12], [f_21, f_22]]`.
    pub fn hessian(&self) -> [[SpectralField; 2]; 2] {
        let d0 = self.derivative(0);
        let d1 = self.derivative(1);
        let d01 = d0.derivative(1);
        [[d0.derivative(0), d01.clone()], [d01, d1.derivative(1)]]
    }

    pub fn scale(&self, a: f64) -> Self {
        SpectralField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        debug_assert!(self.grid == x.grid);
        for (s, xv) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += xv * a;
        }
    }

    /// Mode-wise multiplication by a real symbol `m(k)`.
    pub fn apply_symbol(&self, m: impl Fn([i64; 2]) -> f64) -> Self {
        self.map_modes(|k, c| c * m(k))
    }

    /// Pseudo-spectral product, dealiased.
    pub fn product(&self, other: &SpectralField) -> Self {
        let a = self.to_real();
        let b = other.to_real();
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        SpectralField::from_real(&self.grid, &prod)
            .expect("same grid")
            .dealiased()
    }

    /// Exact evaluation of the truncated Fourier series at arbitrary points
    /// by direct summation over every stored mode.
    pub fn evaluate_at(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let n = self.grid.n();
        let ks: Vec<f64> = (0..n).map(|i| self.grid.wavenumber(i) as f64).collect();
        let mut e1 = vec![Complex64::new(0.0, 0.0); n];
        let mut e2 = vec![Complex64::new(0.0, 0.0); n];
        points
            .iter()
            .map(|p| {
                let x1 = p[0].rem_euclid(2.0 * PI);
                let x2 = p[1].rem_euclid(2.0 * PI);
                for i in 0..n {
                    e1[i] = Complex64::cis(ks[i] * x1);
                    e2[i] = Complex64::cis(ks[i] * x2);
                }
                let mut acc = 0.0;
                for i1 in 0..n {
                    let row = &self.coeffs[i1 * n..(i1 + 1) * n];
                    let mut r = Complex64::new(0.0, 0.0);
                    for i2 in 0..n {
                        r += row[i2] * e2[i2];
                    }
                    acc += (r * e1[i1]).re;
                }
                acc
            })
            .collect()
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scale(a)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

/// Solves `lap u = f`. The output always has zero mean.
pub fn poisson_solve(f: &SpectralField, mean: MeanHandling) -> Result<SpectralField> {
    let m = f.coeffs[0];
    let scale = f.max_abs_coeff().max(1.0);
    if mean == MeanHandling::Reject && m.norm() > 1e-12 * scale {
        return Err(Error::Solvability { mean: m.re });
    }
    Ok(f.map_modes(|k, c| {
        let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            -c / k2
        }
    }))
}

/// Real vector field on the 2-torus, one [`SpectralField`] per component.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVectorField {
    pub components: [SpectralField; 2],
    div_free: bool,
}

impl SpectralVectorField {
    pub fn new(components: [SpectralField; 2]) -> Self {
        debug_assert!(components[0].grid == components[1].grid);
        SpectralVectorField {
            components,
            div_free: false,
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        SpectralVectorField {
            components: [SpectralField::zeros(grid), SpectralField::zeros(grid)],
            div_free: true,
        }
    }

    pub fn constant(grid: &TorusGrid, c: [f64; 2]) -> Self {
        SpectralVectorField {
            components: [
                SpectralField::constant(grid, c[0]),
                SpectralField::constant(grid, c[1]),
            ],
            div_free: true,
        }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        Self::new([
            SpectralField::from_fn(grid, |x, y| f(x, y)[0]),
            SpectralField::from_fn(grid, |x, y| f(x, y)[1]),
        ])
    }

    /// Velocity `(d psi/dx2, -d psi/dx1)` of a stream function; divergence-free by construction.
    pub fn from_stream_function(psi: &SpectralField) -> Self {
        let mut v = Self::new([psi.derivative(1), -&psi.derivative(0)]);
        v.div_free = v.divergence_defect() <= DIV_FREE_TOL;
        v
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        self.components[0].grid()
    }

    #[inline]
    pub fn is_div_free(&self) -> bool {
        self.div_free
    }

    /// `max_k |k . v_k| / max_k |v_k|` (zero for the zero field).
    pub fn divergence_defect(&self) -> f64 {
        let grid = self.grid();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for idx in 0..grid.len() {
            let k = grid.wavevector(idx);
            let a = self.components[0].coeffs[idx];
            let b = self.components[1].coeffs[idx];
            worst = worst.max((a * k[0] as f64 + b * k[1] as f64).norm());
            scale = scale.max(a.norm()).max(b.norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Re-evaluates the divergence-free flag against [`DIV_FREE_TOL`].
    pub fn check_div_free(mut self) -> Self {
        self.div_free = self.divergence_defect() <= DIV_FREE_TOL;
        self
    }

    pub fn divergence(&self) -> SpectralField {
        let mut d = self.components[0].derivative(0);
        d.axpy(1.0, &self.components[1].derivative(1));
        d
    }

    /// `jac[i][j] = d v_i / d x_j`.
    pub fn jacobian_matrix(&self) -> [[SpectralField; 2]; 2] {
        [
            [
                self.components[0].derivative(0),
                self.components[0].derivative(1),
            ],
            [
                self.components[1].derivative(0),
                self.components[1].derivative(1),
            ],
        ]
    }

    pub fn laplacian(&self) -> Self {
        SpectralVectorField {
            components: [
                self.components[0].laplacian(),
                self.components[1].laplacian(),
            ],
            div_free: self.div_free,
        }
    }

    /// Orthogonal projection onto divergence-free fields, `I - k k^T / |k|^2` per mode.
    pub fn leray_project(&self) -> Self {
        let grid = self.grid().clone();
        let mut a = self.components[0].coeffs.clone();
        let mut b = self.components[1].coeffs.clone();
        for idx in 1..grid.len() {
            let k = grid.wavevector(idx);
            let (k0, k1) = (k[0] as f64, k[1] as f64);
            let k2 = k0 * k0 + k1 * k1;
            let kv = (a[idx] * k0 + b[idx] * k1) / k2;
            a[idx] -= kv * k0;
            b[idx] -= kv * k1;
        }
        SpectralVectorField {
            components: [
                SpectralField { grid: grid.clone(), coeffs: a },
                SpectralField { grid, coeffs: b },
            ],
            div_free: true,
        }
    }

    /// `(self . grad) w`, dealiased.
    pub fn advect(&self, w: &SpectralVectorField) -> SpectralVectorField {
        let v = [self.components[0].to_real(), self.components[1].to_real()];
        let grid = self.grid();
        let comps = [0, 1].map(|i| {
            let d0 = w.components[i].derivative(0).to_real();
            let d1 = w.components[i].derivative(1).to_real();
            let prod: Vec<f64> = (0..grid.len())
                .map(|p| v[0][p] * d0[p] + v[1][p] * d1[p])
                .collect();
            SpectralField::from_real(grid, &prod)
                .expect("same grid")
                .dealiased()
        });
        SpectralVectorField::new(comps)
    }

    /// `(self . grad) f` for a scalar `f`, dealiased.
    pub fn advect_scalar(&self, f: &SpectralField) -> SpectralField {
        let mut out = self.components[0].product(&f.derivative(0));
        out.axpy(1.0, &self.components[1].product(&f.derivative(1)));
        out
    }

    /// Pointwise `self . w`, dealiased.
    pub fn dot(&self, w: &SpectralVectorField) -> SpectralField {
        let mut out = self.components[0].product(&w.components[0]);
        out.axpy(1.0, &self.components[1].product(&w.components[1]));
        out
    }

    pub fn dealiased(self) -> Self {
        let div_free = self.div_free;
        let [a, b] = self.components;
        SpectralVectorField {
            components: [a.dealiased(), b.dealiased()],
            div_free,
        }
    }

    pub fn is_dealiased(&self) -> bool {
        self.components.iter().all(|c| c.is_dealiased())
    }

    pub fn scale(&self, a: f64) -> Self {
        SpectralVectorField {
            components: [self.components[0].scale(a), self.components[1].scale(a)],
            div_free: self.div_free,
        }
    }

    /// `self += a * x`; the divergence-free flag survives only if both carry it.
    pub fn axpy(&mut self, a: f64, x: &SpectralVectorField) {
        self.components[0].axpy(a, &x.components[0]);
        self.components[1].axpy(a, &x.components[1]);
        self.div_free = self.div_free && x.div_free;
    }

    /// `int |v|^2 dx`.
    pub fn energy(&self) -> f64 {
        self.components[0].l2_norm_sq() + self.components[1].l2_norm_sq()
    }

    /// `int v . w dx`.
    pub fn inner(&self, w: &SpectralVectorField) -> f64 {
        self.components[0].inner(&w.components[0]) + self.components[1].inner(&w.components[1])
    }

    /// `int v dx`, per component.
    pub fn integral(&self) -> [f64; 2] {
        [
            self.components[0].integral(),
            self.components[1].integral(),
        ]
    }

    /// `max |v|` (Euclidean norm) over grid points.
    pub fn max_speed(&self) -> f64 {
        let a = self.components[0].to_real();
        let b = self.components[1].to_real();
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    /// `max |v_i|` over grid points and components.
    pub fn max_abs(&self) -> f64 {
        self.components[0].max_abs().max(self.components[1].max_abs())
    }

    pub fn evaluate_at(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let a = self.components[0].evaluate_at(points);
        let b = self.components[1].evaluate_at(points);
        a.into_iter().zip(b).map(|(x, y)| [x, y]).collect()
    }

    /// Forgets the divergence-free flag (used after adding non-solenoidal parts).
    pub fn with_div_free_flag(mut self, flag: bool) -> Self {
        self.div_free = flag;
        self
    }
}

impl Add for &SpectralVectorField {
    type Output = SpectralVectorField;
    fn add(self, rhs: &SpectralVectorField) -> SpectralVectorField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralVectorField {
    type Output = SpectralVectorField;
    fn sub(self, rhs: &SpectralVectorField) -> SpectralVectorField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralVectorField {
    type Output = SpectralVectorField;
    fn mul(self, a: f64) -> SpectralVectorField {
        self.scale(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    /// Random real dealiased field built from random resolved modes.
    pub(crate) fn random_field(g: &TorusGrid, seed: u64) -> SpectralField {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut f = SpectralField::zeros(g);
        let kc = g.dealias_cutoff();
        for k1 in -kc..=kc {
            for k2 in -kc..=kc {
                if (k1, k2) > (0, 0) {
                    f.set_mode([k1, k2], Complex64::new(next(), next()));
                }
            }
        }
        f.set_mode([0, 0], Complex64::new(next(), 0.0));
        f
    }

    #[test]
    fn constant_has_single_mode() {
        let g = grid(16);
        let f = SpectralField::from_fn(&g, |_, _| 2.5);
        assert_abs_diff_eq!(f.coeffs[0].re, 2.5, epsilon = 1e-15);
        assert!(f.coeffs[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn sine_coefficients() {
        let g = grid(32);
        let f = SpectralField::from_fn(&g, |x, _| x.sin());
        let c = f.coeff([1, 0]);
        let cm = f.coeff([-1, 0]);
        assert_abs_diff_eq!(c.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.im, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cm.im, 0.5, epsilon = 1e-15);
        let rest: f64 = f
            .coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != g.flat_index([1, 0]).unwrap() && *i != g.flat_index([-1, 0]).unwrap())
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        assert!(rest < 1e-15);
    }

    #[test]
    fn size_mismatch_is_config_error() {
        let g = grid(8);
        assert!(matches!(
            SpectralField::from_real(&g, &[0.0; 10]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn derivatives_of_single_modes() {
        let g = grid(32);
        let s = SpectralField::from_fn(&g, |x, _| x.sin());
        let grad = s.gradient();
        let expect = SpectralField::from_fn(&g, |x, _| x.cos());
        assert!((&grad.components[0] - &expect).max_abs() < 1e-14);
        assert!(grad.components[1].max_abs() < 1e-14);

        let ss = SpectralField::from_fn(&g, |x, y| x.sin() * y.sin());
        let lap = ss.laplacian();
        let e = (&lap + &ss.scale(2.0)).max_abs();
        assert!(e < 1e-13, "{e}");
    }

    #[test]
    fn div_grad_is_laplacian() {
        let g = grid(32);
        let f = random_field(&g, 3);
        let lhs = f.gradient().divergence();
        assert!((&lhs - &f.laplacian()).max_abs() < 1e-12);
    }

    #[test]
    fn leray_examples() {
        let g = grid(16);
        let chi = random_field(&g, 5);
        let mut chi = chi;
        chi.coeffs[0] = Complex64::new(0.0, 0.0);
        let p = chi.gradient().leray_project();
        assert!(p.components[0].max_abs_coeff() < 1e-13);
        assert!(p.components[1].max_abs_coeff() < 1e-13);

        let psi = random_field(&g, 6);
        let v = SpectralVectorField::from_stream_function(&psi);
        assert!(v.is_div_free());
        let pv = v.leray_project();
        assert!((&pv - &v).max_abs() < 1e-12);

        // hand computation: (I - k k^T/|k|^2)(1, 0) at k = (1, 1)
        let mut a = SpectralField::zeros(&g);
        a.set_mode([1, 1], Complex64::new(1.0, 0.0));
        let w = SpectralVectorField::new([a, SpectralField::zeros(&g)]).leray_project();
        assert_abs_diff_eq!(w.components[0].coeff([1, 1]).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w.components[1].coeff([1, 1]).re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn leray_keeps_mean_and_is_orthogonal_to_gradients() {
        let g = grid(16);
        let v = SpectralVectorField::new([random_field(&g, 8), random_field(&g, 9)]);
        let p = v.leray_project();
        assert_eq!(p.components[0].coeffs[0], v.components[0].coeffs[0]);
        let mut chi = random_field(&g, 10);
        chi.coeffs[0] = Complex64::new(0.0, 0.0);
        let scale = v.energy().sqrt() * chi.gradient().energy().sqrt();
        assert!(p.inner(&chi.gradient()).abs() < 1e-11 * scale.max(1.0));
        // v - Pv is a gradient: its curl vanishes
        let r = &v - &p;
        let curl = &r.components[1].derivative(0) - &r.components[0].derivative(1);
        assert!(curl.max_abs() < 1e-12);
    }

    #[test]
    fn poisson_examples() {
        let g = grid(32);
        let f = SpectralField::from_fn(&g, |x, y| -2.0 * x.sin() * y.sin());
        let u = poisson_solve(&f, MeanHandling::Reject).unwrap();
        let expect = SpectralField::from_fn(&g, |x, y| x.sin() * y.sin());
        assert!((&u - &expect).max_abs() < 1e-14);

        let z = poisson_solve(&SpectralField::zeros(&g), MeanHandling::Reject).unwrap();
        assert_eq!(z.max_abs_coeff(), 0.0);

        let mut r = random_field(&g, 11);
        r.coeffs[0] = Complex64::new(0.0, 0.0);
        let u = poisson_solve(&r, MeanHandling::Reject).unwrap();
        assert!((&u.laplacian() - &r).max_abs() < 1e-11);
        assert_eq!(u.mean(), 0.0);
    }

    #[test]
    fn poisson_rejects_mean() {
        let g = grid(8);
        let f = SpectralField::constant(&g, 1.0);
        assert!(matches!(
            poisson_solve(&f, MeanHandling::Reject),
            Err(Error::Solvability { .. })
        ));
        let u = poisson_solve(&f, MeanHandling::Project).unwrap();
        assert_eq!(u.max_abs_coeff(), 0.0);
    }

    #[test]
    fn evaluate_examples() {
        let g = grid(16);
        let c = SpectralField::constant(&g, -1.25);
        let v = c.evaluate_at(&[[0.3, 5.9], [10.0, -3.0]]);
        assert!(v.iter().all(|x| (x + 1.25).abs() < 1e-15));

        let s = SpectralField::from_fn(&g, |x, _| x.sin());
        assert_abs_diff_eq!(s.evaluate_at(&[[PI / 2.0, 0.0]])[0], 1.0, epsilon = 1e-14);

        let r = random_field(&g, 12);
        let vals = r.to_real();
        let pts = g.points();
        let ev = r.evaluate_at(&pts);
        for (a, b) in vals.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_single_modes_off_grid() {
        let g = grid(16);
        let f = SpectralField::from_fn(&g, |x, y| (2.0 * x - 3.0 * y).cos() + (x + y).sin());
        for p in [[0.123f64, 4.5], [6.0, 0.77], [-1.0, 13.0]] {
            let exact = (2.0 * p[0] - 3.0 * p[1]).cos() + (p[0] + p[1]).sin();
            assert!((f.evaluate_at(&[p])[0] - exact).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(samples in proptest::collection::vec(-10.0f64..10.0, 64)) {
            let g = grid(8);
            let f = SpectralField::from_real(&g, &samples).unwrap();
            let back = f.to_real();
            let scale = samples.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (a, b) in samples.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            let quad: f64 = samples.iter().map(|x| x * x).sum::<f64>() * g.cell_volume();
            prop_assert!((quad - f.l2_norm_sq()).abs() <= 1e-12 * quad.max(1e-300));
            prop_assert!(f.conjugate_symmetry_defect() < 1e-13 * scale);
        }

        #[test]
        fn leray_is_idempotent(seed in 0u64..1000) {
            let g = grid(8);
            let v = SpectralVectorField::new([random_field(&g, seed), random_field(&g, seed + 7)]);
            let p = v.leray_project();
            let pp = p.leray_project();
            prop_assert!((&pp - &p).max_abs() < 1e-14);
            prop_assert!(p.divergence().max_abs() < 1e-12);
        }

        #[test]
        fn evaluate_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, x in 0.0f64..6.3, y in 0.0f64..6.3) {
            let g = grid(8);
            let f = random_field(&g, seed);
            let h = random_field(&g, seed + 1);
            let mut comb = f.clone();
            comb.axpy(a, &h);
            let lhs = comb.evaluate_at(&[[x, y]])[0];
            let rhs = f.evaluate_at(&[[x, y]])[0] + a * h.evaluate_at(&[[x, y]])[0];
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

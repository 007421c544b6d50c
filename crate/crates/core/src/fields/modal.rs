//! Fast off-grid evaluation of several real fields that share a mode set.
//!
//! Only the non-zero modes of one half-plane are kept (the other half follows
//! from conjugate symmetry), so band-limited fields such as Taylor-Green cost
//! a handful of complex multiplies per point instead of `n^2`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::spectral::SpectralField;

#[derive(Clone, Debug)]
pub struct ModalBundle {
    width: usize,
    means: Vec<f64>,
    /// Modes grouped by first wavenumber: `(k1, first mode, end mode)`.
    rows: Vec<(i64, usize, usize)>,
    k2: Vec<i64>,
    coeffs: Vec<Complex64>,
    kmax: [usize; 2],
}

/// Stack room for `exp(i k x)` tables with `|k| <= STACK_K`.
const STACK_K: usize = 40;

impl ModalBundle {
    /// Bundles `fields`, dropping modes whose largest coefficient across the
    /// bundle is at most `prune_rel` times the largest coefficient overall.
    /// `prune_rel = 0` keeps every non-zero mode, making evaluation exact.
    pub fn from_fields(fields: &[&SpectralField], prune_rel: f64) -> Self {
        let width = fields.len();
        assert!(width > 0, "empty bundle");
        let grid = fields[0].grid();
        let n = grid.n() as i64;
        let scale = fields
            .iter()
            .map(|f| f.max_abs_coeff())
            .fold(0.0, f64::max);
        let cut = prune_rel * scale;
        let means = fields.iter().map(|f| f.coeffs()[0].re).collect();
        let mut kept: Vec<([i64; 2], usize, f64)> = Vec::new();
        let mut kmax = [0usize; 2];
        for idx in 1..grid.len() {
            let k = grid.wavevector(idx);
            let nyquist = k[0] == -n / 2 || k[1] == -n / 2;
            let upper = k[0] > 0 || (k[0] == 0 && k[1] > 0);
            if !(upper || nyquist) {
                continue;
            }
            let big = fields.iter().map(|f| f.coeffs()[idx].norm()).fold(0.0, f64::max);
            if big == 0.0 || big <= cut {
                continue;
            }
            let weight = if nyquist { 1.0 } else { 2.0 };
            kept.push((k, idx, weight));
            kmax[0] = kmax[0].max(k[0].unsigned_abs() as usize);
            kmax[1] = kmax[1].max(k[1].unsigned_abs() as usize);
        }
        kept.sort_by_key(|(k, _, _)| (k[0], k[1]));
        let mut rows: Vec<(i64, usize, usize)> = Vec::new();
        let mut k2 = Vec::with_capacity(kept.len());
        let mut coeffs = Vec::with_capacity(kept.len() * width);
        for (m, (k, idx, weight)) in kept.iter().enumerate() {
            match rows.last_mut() {
                Some(row) if row.0 == k[0] => row.2 = m + 1,
                _ => rows.push((k[0], m, m + 1)),
            }
            k2.push(k[1]);
            for f in fields {
                coeffs.push(f.coeffs()[*idx] * *weight);
            }
        }
        ModalBundle {
            width,
            means,
            rows,
            k2,
            coeffs,
            kmax,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mode_count(&self) -> usize {
        self.k2.len()
    }

    /// Writes the `width` field values at `x` into `out`.
    pub fn eval(&self, x: [f64; 2], out: &mut [f64]) {
        debug_assert!(out.len() >= self.width);
        let w = self.width;
        out[..w].copy_from_slice(&self.means);
        if self.k2.is_empty() {
            return;
        }
        let mut s1 = [Complex64::new(0.0, 0.0); 2 * STACK_K + 1];
        let mut s2 = [Complex64::new(0.0, 0.0); 2 * STACK_K + 1];
        let mut h1 = Vec::new();
        let mut h2 = Vec::new();
        let e1 = powers(x[0], self.kmax[0], &mut s1, &mut h1);
        let e2 = powers(x[1], self.kmax[1], &mut s2, &mut h2);
        match w {
            1 => self.accumulate::<1>(e1, e2, out),
            2 => self.accumulate::<2>(e1, e2, out),
            4 => self.accumulate::<4>(e1, e2, out),
            6 => self.accumulate::<6>(e1, e2, out),
            10 => self.accumulate::<10>(e1, e2, out),
            _ => self.accumulate_dyn(e1, e2, out),
        }
    }

    #[inline(always)]
    fn accumulate<const W: usize>(&self, e1: &[Complex64], e2: &[Complex64], out: &mut [f64]) {
        let (o1, o2) = (self.kmax[0] as i64, self.kmax[1] as i64);
        let coeffs: &[[Complex64; W]] = as_rows(&self.coeffs);
        let mut total = [0.0; W];
        for &(k1, a, b) in &self.rows {
            let mut re = [0.0; W];
            let mut im = [0.0; W];
            for (row, &k2) in coeffs[a..b].iter().zip(&self.k2[a..b]) {
                let e = e2[(k2 + o2) as usize];
                for j in 0..W {
                    re[j] += row[j].re * e.re - row[j].im * e.im;
                    im[j] += row[j].re * e.im + row[j].im * e.re;
                }
            }
            let e = e1[(k1 + o1) as usize];
            for j in 0..W {
                total[j] += re[j] * e.re - im[j] * e.im;
            }
        }
        for j in 0..W {
            out[j] += total[j];
        }
    }

    fn accumulate_dyn(&self, e1: &[Complex64], e2: &[Complex64], out: &mut [f64]) {
        let w = self.width;
        let (o1, o2) = (self.kmax[0] as i64, self.kmax[1] as i64);
        let mut acc = vec![Complex64::new(0.0, 0.0); w];
        for &(k1, a, b) in &self.rows {
            acc.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for m in a..b {
                let e = e2[(self.k2[m] + o2) as usize];
                for (s, c) in acc.iter_mut().zip(&self.coeffs[m * w..(m + 1) * w]) {
                    *s += c * e;
                }
            }
            let e = e1[(k1 + o1) as usize];
            for (o, s) in out.iter_mut().zip(acc.iter()) {
                *o += s.re * e.re - s.im * e.im;
            }
        }
    }

    /// Convenience wrapper returning a fresh vector per point.
    pub fn eval_many(&self, points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        points
            .iter()
            .map(|&p| {
                let mut out = vec![0.0; self.width];
                self.eval(p, &mut out);
                out
            })
            .collect()
    }
}

fn as_rows<const W: usize>(flat: &[Complex64]) -> &[[Complex64; W]] {
    let (rows, rest) = flat.as_chunks::<W>();
    debug_assert!(rest.is_empty());
    rows
}

/// `exp(i k x)` for `k = -kmax..=kmax`, stored at offset `k + kmax`.
fn powers<'a>(
    x: f64,
    kmax: usize,
    small: &'a mut [Complex64; 2 * STACK_K + 1],
    big: &'a mut Vec<Complex64>,
) -> &'a [Complex64] {
    let buf: &mut [Complex64] = if kmax <= STACK_K {
        &mut small[..2 * kmax + 1]
    } else {
        big.resize(2 * kmax + 1, Complex64::new(1.0, 0.0));
        &mut big[..]
    };
    let xw = x.rem_euclid(2.0 * PI);
    buf[kmax] = Complex64::new(1.0, 0.0);
    if kmax >= 1 {
        let base = Complex64::cis(xw);
        let mut p = base;
        for k in 1..=kmax {
            // refresh from cis every 8 steps to bound round-off growth
            if k > 1 {
                p = if k % 8 == 0 {
                    Complex64::cis(k as f64 * xw)
                } else {
                    p * base
                };
            }
            buf[kmax + k] = p;
            buf[kmax - k] = p.conj();
        }
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TorusGrid;

    #[test]
    fn matches_direct_summation() {
        let g = TorusGrid::new(32).unwrap();
        let f = SpectralField::from_fn(&g, |x, y| {
            (3.0 * x - 7.0 * y).cos() + 0.5 * (10.0 * x + 9.0 * y).sin() + 0.25
        });
        let h = f.derivative(1);
        let bundle = ModalBundle::from_fields(&[&f, &h], 0.0);
        let pts = [[0.1, 0.2], [3.3, 6.2], [-4.0, 17.5]];
        let fa = f.evaluate_at(&pts);
        let ha = h.evaluate_at(&pts);
        for (i, v) in bundle.eval_many(&pts).iter().enumerate() {
            assert!((v[0] - fa[i]).abs() < 1e-12);
            assert!((v[1] - ha[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn pruning_drops_round_off_modes() {
        let g = TorusGrid::new(16).unwrap();
        let mut f = SpectralField::from_fn(&g, |x, y| x.sin() * y.cos());
        f.coeffs_mut()[g.flat_index([2, 3]).unwrap()] = Complex64::new(1e-18, 0.0);
        let exact = ModalBundle::from_fields(&[&f], 0.0);
        let pruned = ModalBundle::from_fields(&[&f], 1e-14);
        assert_eq!(pruned.mode_count(), 2);
        assert!(exact.mode_count() >= 2);
    }

    #[test]
    fn nyquist_modes_are_real_part() {
        let g = TorusGrid::new(8).unwrap();
        let f = SpectralField::from_fn(&g, |x, _| (4.0 * x).cos());
        let b = ModalBundle::from_fields(&[&f], 0.0);
        let p = [0.3, 0.0];
        let mut out = [0.0];
        b.eval(p, &mut out);
        assert!((out[0] - f.evaluate_at(&[p])[0]).abs() < 1e-13);
    }
}

//! Deterministic space-time test fields given as short Fourier sums in `x`
//! times a scalar envelope in `t`.
//!
//! These carry the variation directions `(h, phi)` of the action and the
//! candidate symmetries `(eta, G)`. Every quantity needed downstream (value,
//! time derivative, gradient, Hessian) is evaluated in closed form.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{SpectralField, SpectralVectorField, TorusGrid};

/// Largest wavenumber component accepted in a [`TrigSeries`].
pub const MAX_MODE: usize = 16;

/// Time profile multiplying a spatial pattern.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    Constant,
    /// `sin^2(pi t / T)`.
    Sin2 { t_final: f64 },
    /// `exp(4 - 1/(s(1-s)))` with `s = t/T`, zero outside `(0, T)`. All
    /// derivatives vanish at both ends; the peak value is 1.
    Bump { t_final: f64 },
    /// `exp(rate t)`.
    Exp { rate: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        self.value_and_derivative(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.value_and_derivative(t).1
    }

    pub fn value_and_derivative(&self, t: f64) -> (f64, f64) {
        match *self {
            Envelope::Constant => (1.0, 0.0),
            Envelope::Sin2 { t_final } => {
                let w = PI / t_final;
                let s = (w * t).sin();
                (s * s, w * (2.0 * w * t).sin())
            }
            Envelope::Bump { t_final } => {
                let s = t / t_final;
                if s <= 0.0 || s >= 1.0 {
                    return (0.0, 0.0);
                }
                let q = s * (1.0 - s);
                let a = (4.0 - 1.0 / q).exp();
                (a, a * (1.0 - 2.0 * s) / (q * q) / t_final)
            }
            Envelope::Exp { rate } => {
                let a = (rate * t).exp();
                (a, rate * a)
            }
        }
    }

    /// True when the envelope vanishes at `t = 0` and `t = t_final`.
    pub fn vanishes_at_ends(&self, t_final: f64) -> bool {
        self.value(0.0).abs() < 1e-14 && self.value(t_final).abs() < 1e-14
    }

    pub fn parse(name: &str, t_final: f64) -> Result<Self> {
        match name {
            "constant" => Ok(Envelope::Constant),
            "sin2" => Ok(Envelope::Sin2 { t_final }),
            "bump" => Ok(Envelope::Bump { t_final }),
            _ => Err(Error::Config(format!("unknown envelope `{name}` (sin2, bump, constant)"))),
        }
    }
}

/// `e^{i m x_a}` for `m = 0..=MAX_MODE` and both axes.
#[derive(Clone, Debug)]
pub struct CisTable {
    powers: [[Complex64; MAX_MODE + 1]; 2],
}

impl CisTable {
    pub fn new(x: [f64; 2], kmax: usize) -> Self {
        let kmax = kmax.min(MAX_MODE);
        let mut powers = [[Complex64::new(1.0, 0.0); MAX_MODE + 1]; 2];
        for a in 0..2 {
            let (s, c) = x[a].sin_cos();
            let base = Complex64::new(c, s);
            for m in 1..=kmax {
                powers[a][m] = powers[a][m - 1] * base;
            }
        }
        CisTable { powers }
    }

    /// `(cos(k.x), sin(k.x))`.
    #[inline]
    pub fn cos_sin(&self, k: [i64; 2]) -> (f64, f64) {
        let pick = |a: usize, m: i64| {
            let z = self.powers[a][m.unsigned_abs() as usize];
            if m < 0 {
                z.conj()
            } else {
                z
            }
        };
        let z = pick(0, k[0]) * pick(1, k[1]);
        (z.re, z.im)
    }
}

/// One term `c cos(k.x) + s sin(k.x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigMode {
    pub k: [i64; 2],
    pub cos: f64,
    pub sin: f64,
}

/// Value, gradient and Hessian of a scalar at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpatialJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl SpatialJet {
    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }
}

/// `constant + linear.x + sum of modes`. A nonzero linear part makes the
/// series non-periodic; such series can be evaluated pointwise but have no
/// spectral representation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigSeries {
    pub constant: f64,
    pub linear: [f64; 2],
    pub modes: Vec<TrigMode>,
}

impl TrigSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        TrigSeries {
            constant: c,
            ..Self::default()
        }
    }

    pub fn cos(k: [i64; 2], amplitude: f64) -> Self {
        TrigSeries {
            modes: vec![TrigMode {
                k,
                cos: amplitude,
                sin: 0.0,
            }],
            ..Self::default()
        }
    }

    pub fn sin(k: [i64; 2], amplitude: f64) -> Self {
        TrigSeries {
            modes: vec![TrigMode {
                k,
                cos: 0.0,
                sin: amplitude,
            }],
            ..Self::default()
        }
    }

    pub fn linear(a: [f64; 2]) -> Self {
        TrigSeries {
            linear: a,
            ..Self::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0
            && self.linear == [0.0, 0.0]
            && self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    pub fn is_periodic(&self) -> bool {
        self.linear == [0.0, 0.0]
    }

    pub fn kmax(&self) -> usize {
        self.modes
            .iter()
            .map(|m| m.k[0].unsigned_abs().max(m.k[1].unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kmax() > MAX_MODE {
            return Err(Error::Config(format!(
                "wavenumber component above {MAX_MODE} in a test field"
            )));
        }
        let finite = self.constant.is_finite()
            && self.linear.iter().all(|v| v.is_finite())
            && self.modes.iter().all(|m| m.cos.is_finite() && m.sin.is_finite());
        if !finite {
            return Err(Error::Config("non-finite coefficient in a test field".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &TrigSeries) -> TrigSeries {
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        TrigSeries {
            constant: self.constant + other.constant,
            linear: [self.linear[0] + other.linear[0], self.linear[1] + other.linear[1]],
            modes,
        }
    }

    pub fn scale(&self, a: f64) -> TrigSeries {
        TrigSeries {
            constant: a * self.constant,
            linear: [a * self.linear[0], a * self.linear[1]],
            modes: self
                .modes
                .iter()
                .map(|m| TrigMode {
                    k: m.k,
                    cos: a * m.cos,
                    sin: a * m.sin,
                })
                .collect(),
        }
    }

    pub fn jet(&self, x: [f64; 2]) -> SpatialJet {
        self.jet_with(&CisTable::new(x, self.kmax()), x)
    }

    /// Same as [`TrigSeries::jet`] with the trigonometric powers supplied.
    /// `x` is only used by the linear part.
    pub fn jet_with(&self, cis: &CisTable, x: [f64; 2]) -> SpatialJet {
        let mut j = SpatialJet {
            value: self.constant + self.linear[0] * x[0] + self.linear[1] * x[1],
            grad: self.linear,
            hess: [[0.0; 2]; 2],
        };
        for m in &self.modes {
            let (c, s) = cis.cos_sin(m.k);
            let val = m.cos * c + m.sin * s;
            let der = m.sin * c - m.cos * s;
            let k = [m.k[0] as f64, m.k[1] as f64];
            j.value += val;
            for a in 0..2 {
                j.grad[a] += k[a] * der;
                for b in 0..2 {
                    j.hess[a][b] -= k[a] * k[b] * val;
                }
            }
        }
        j
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.jet(x).value
    }

    /// Spectral coefficients on `grid`; fails for non-periodic or unresolved series.
    pub fn to_spectral(&self, grid: &TorusGrid) -> Result<SpectralField> {
        if !self.is_periodic() {
            return Err(Error::Unsupported(
                "non-periodic test field has no spectral representation".into(),
            ));
        }
        let mut f = SpectralField::constant(grid, self.constant);
        for m in &self.modes {
            if m.k == [0, 0] {
                let c = f.coeff([0, 0]) + m.cos;
                f.set_mode([0, 0], c);
                continue;
            }
            if !grid.is_resolved(m.k) {
                return Err(Error::Config(format!("mode {:?} not resolved on {}^2", m.k, grid.n())));
            }
            // c cos + s sin = (c - i s)/2 e^{ikx} + conj
            let add = Complex64::new(m.cos / 2.0, -m.sin / 2.0);
            let cur = f.coeff(m.k);
            f.set_mode(m.k, cur + add);
        }
        Ok(f)
    }
}

/// Scalar `envelope(t) * series(x)` with time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeScalar {
    pub envelope: Envelope,
    pub series: TrigSeries,
}

/// Space-time scalar jet: spatial jet plus the time derivative of the value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub dt: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl ScalarJet {
    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }
}

impl SpaceTimeScalar {
    pub fn zero() -> Self {
        SpaceTimeScalar {
            envelope: Envelope::Constant,
            series: TrigSeries::zero(),
        }
    }

    pub fn new(envelope: Envelope, series: TrigSeries) -> Self {
        SpaceTimeScalar { envelope, series }
    }

    pub fn is_zero(&self) -> bool {
        self.series.is_zero()
    }

    pub fn kmax(&self) -> usize {
        self.series.kmax()
    }

    pub fn jet(&self, t: f64, x: [f64; 2]) -> ScalarJet {
        self.jet_with(t, &CisTable::new(x, self.kmax()), x)
    }

    pub fn jet_with(&self, t: f64, cis: &CisTable, x: [f64; 2]) -> ScalarJet {
        if self.series.is_zero() {
            return ScalarJet::default();
        }
        let (a, da) = self.envelope.value_and_derivative(t);
        let s = self.series.jet_with(cis, x);
        ScalarJet {
            value: a * s.value,
            dt: da * s.value,
            grad: s.grad.map(|g| a * g),
            hess: s.hess.map(|r| r.map(|h| a * h)),
        }
    }

    pub fn field_at(&self, grid: &TorusGrid, t: f64) -> Result<SpectralField> {
        Ok(self.series.to_spectral(grid)?.scale(self.envelope.value(t)))
    }

    pub fn time_derivative_at(&self, grid: &TorusGrid, t: f64) -> Result<SpectralField> {
        Ok(self.series.to_spectral(grid)?.scale(self.envelope.derivative(t)))
    }
}

/// Vector jet: values, time derivatives, gradient `grad[i][j] = d_j f_i` and
/// componentwise Laplacian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VectorJet {
    pub value: [f64; 2],
    pub dt: [f64; 2],
    pub grad: [[f64; 2]; 2],
    pub laplacian: [f64; 2],
    pub hess: [[[f64; 2]; 2]; 2],
}

/// Vector field `envelope(t) * (series_1(x), series_2(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeVector {
    pub envelope: Envelope,
    pub components: [TrigSeries; 2],
}

impl SpaceTimeVector {
    pub fn zero() -> Self {
        SpaceTimeVector {
            envelope: Envelope::Constant,
            components: [TrigSeries::zero(), TrigSeries::zero()],
        }
    }

    pub fn new(envelope: Envelope, components: [TrigSeries; 2]) -> Self {
        SpaceTimeVector {
            envelope,
            components,
        }
    }

    /// Constant unit vector along `axis`.
    pub fn unit(axis: usize) -> Self {
        let mut c = [TrigSeries::zero(), TrigSeries::zero()];
        c[axis] = TrigSeries::constant(1.0);
        SpaceTimeVector::new(Envelope::Constant, c)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }

    pub fn kmax(&self) -> usize {
        self.components[0].kmax().max(self.components[1].kmax())
    }

    pub fn is_periodic(&self) -> bool {
        self.components.iter().all(|c| c.is_periodic())
    }

    /// Sum of two fields sharing an envelope.
    pub fn add(&self, other: &SpaceTimeVector) -> Result<SpaceTimeVector> {
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.envelope != other.envelope {
            return Err(Error::Config("cannot add test fields with different envelopes".into()));
        }
        Ok(SpaceTimeVector::new(
            self.envelope,
            [
                self.components[0].add(&other.components[0]),
                self.components[1].add(&other.components[1]),
            ],
        ))
    }

    pub fn scale(&self, a: f64) -> SpaceTimeVector {
        SpaceTimeVector::new(
            self.envelope,
            [self.components[0].scale(a), self.components[1].scale(a)],
        )
    }

    pub fn jet(&self, t: f64, x: [f64; 2]) -> VectorJet {
        self.jet_with(t, &CisTable::new(x, self.kmax()), x)
    }

    pub fn jet_with(&self, t: f64, cis: &CisTable, x: [f64; 2]) -> VectorJet {
        if self.is_zero() {
            return VectorJet::default();
        }
        let (a, da) = self.envelope.value_and_derivative(t);
        let mut out = VectorJet::default();
        for i in 0..2 {
            if self.components[i].is_zero() {
                continue;
            }
            let s = self.components[i].jet_with(cis, x);
            out.value[i] = a * s.value;
            out.dt[i] = da * s.value;
            out.grad[i] = s.grad.map(|g| a * g);
            out.hess[i] = s.hess.map(|r| r.map(|h| a * h));
            out.laplacian[i] = a * s.laplacian();
        }
        out
    }

    pub fn field_at(&self, grid: &TorusGrid, t: f64) -> Result<SpectralVectorField> {
        let a = self.envelope.value(t);
        Ok(SpectralVectorField::new([
            self.components[0].to_spectral(grid)?.scale(a),
            self.components[1].to_spectral(grid)?.scale(a),
        ]))
    }

    pub fn time_derivative_at(&self, grid: &TorusGrid, t: f64) -> Result<SpectralVectorField> {
        let a = self.envelope.derivative(t);
        Ok(SpectralVectorField::new([
            self.components[0].to_spectral(grid)?.scale(a),
            self.components[1].to_spectral(grid)?.scale(a),
        ]))
    }
}

/// A variation direction `(h, phi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationField {
    pub label: String,
    pub h: SpaceTimeVector,
    pub phi: SpaceTimeScalar,
}

impl PerturbationField {
    pub fn new(label: impl Into<String>, h: SpaceTimeVector, phi: SpaceTimeScalar) -> Self {
        PerturbationField {
            label: label.into(),
            h,
            phi,
        }
    }

    pub fn zero() -> Self {
        PerturbationField::new("zero", SpaceTimeVector::zero(), SpaceTimeScalar::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.h.is_zero() && self.phi.is_zero()
    }

    pub fn kmax(&self) -> usize {
        self.h.kmax().max(self.phi.kmax())
    }

    /// Checks periodicity, mode range and the endpoint conditions
    /// `h(0) = h(T) = 0`.
    pub fn validate(&self, t_final: f64) -> Result<()> {
        self.validate_shape()?;
        if !self.h.is_zero() && !self.h.envelope.vanishes_at_ends(t_final) {
            return Err(Error::Config(format!(
                "perturbation `{}`: h must vanish at t = 0 and t = T",
                self.label
            )));
        }
        Ok(())
    }

    /// Periodicity and mode range only.
    pub fn validate_shape(&self) -> Result<()> {
        for c in self.h.components.iter().chain(std::iter::once(&self.phi.series)) {
            c.validate()?;
            if !c.is_periodic() {
                return Err(Error::Config(format!("perturbation `{}` is not periodic", self.label)));
            }
        }
        Ok(())
    }
}

/// Default variation basis: every h with phi = 0, every phi with h = 0, and
/// one mixed direction. Modes are `(1,0), (0,1), (1,1), (1,-1), (2,0), (0,2)`
/// in cos and sin, for each vector component of h.
pub fn default_basis(envelope: Envelope) -> Vec<PerturbationField> {
    basis_from_modes(&DEFAULT_MODES, envelope)
}

pub const DEFAULT_MODES: [[i64; 2]; 6] = [[1, 0], [0, 1], [1, 1], [1, -1], [2, 0], [0, 2]];

pub fn basis_from_modes(modes: &[[i64; 2]], envelope: Envelope) -> Vec<PerturbationField> {
    let mut out = Vec::new();
    for &k in modes {
        for comp in 0..2 {
            for (kind, series) in [("cos", TrigSeries::cos(k, 1.0)), ("sin", TrigSeries::sin(k, 1.0))] {
                let mut c = [TrigSeries::zero(), TrigSeries::zero()];
                c[comp] = series;
                out.push(PerturbationField::new(
                    format!("h{}-{}({},{})", comp + 1, kind, k[0], k[1]),
                    SpaceTimeVector::new(envelope, c),
                    SpaceTimeScalar::zero(),
                ));
            }
        }
    }
    for &k in modes {
        for (kind, series) in [("cos", TrigSeries::cos(k, 1.0)), ("sin", TrigSeries::sin(k, 1.0))] {
            out.push(PerturbationField::new(
                format!("phi-{}({},{})", kind, k[0], k[1]),
                SpaceTimeVector::zero(),
                SpaceTimeScalar::new(envelope, series),
            ));
        }
    }
    if let Some(&k) = modes.first() {
        out.push(PerturbationField::new(
            format!("mixed({},{})", k[0], k[1]),
            SpaceTimeVector::new(envelope, [TrigSeries::zero(), TrigSeries::sin(k, 1.0)]),
            SpaceTimeScalar::new(envelope, TrigSeries::cos(k, 1.0)),
        ));
    }
    out
}

/// A candidate symmetry `(eta, G)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryPair {
    pub label: String,
    pub eta: SpaceTimeVector,
    pub g: SpaceTimeScalar,
}

impl SymmetryPair {
    pub fn new(label: impl Into<String>, eta: SpaceTimeVector, g: SpaceTimeScalar) -> Self {
        SymmetryPair {
            label: label.into(),
            eta,
            g,
        }
    }

    /// Constant shift along `axis` with `G = 0`. The endpoint conditions on
    /// `eta` do not hold for this pair.
    pub fn translation(axis: usize) -> Self {
        let name = if axis == 0 { "translation-x" } else { "translation-y" };
        SymmetryPair::new(name, SpaceTimeVector::unit(axis), SpaceTimeScalar::zero())
    }

    pub fn zero() -> Self {
        SymmetryPair::new("zero", SpaceTimeVector::zero(), SpaceTimeScalar::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.eta.is_zero() && self.g.is_zero()
    }

    /// True when `G` has a linear part. Periodic integrations by parts do
    /// not apply to such a pair.
    pub fn g_is_non_periodic(&self) -> bool {
        !self.g.series.is_periodic()
    }

    pub fn eta_vanishes_at_ends(&self, t_final: f64) -> bool {
        self.eta.is_zero() || self.eta.envelope.vanishes_at_ends(t_final)
    }

    pub fn kmax(&self) -> usize {
        self.eta.kmax().max(self.g.kmax())
    }

    pub fn scale(&self, a: f64) -> SymmetryPair {
        SymmetryPair::new(
            self.label.clone(),
            self.eta.scale(a),
            SpaceTimeScalar::new(self.g.envelope, self.g.series.scale(a)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelopes_vanish_at_ends() {
        for e in [Envelope::Sin2 { t_final: 0.7 }, Envelope::Bump { t_final: 0.7 }] {
            assert!(e.vanishes_at_ends(0.7));
            assert_eq!(e.derivative(0.0), 0.0);
            assert!((e.value(0.35) - 1.0).abs() < 1e-14);
        }
        assert!(!Envelope::Constant.vanishes_at_ends(1.0));
    }

    #[test]
    fn envelope_derivatives_match_differences() {
        let h = 1e-6;
        for e in [
            Envelope::Sin2 { t_final: 0.5 },
            Envelope::Bump { t_final: 0.5 },
            Envelope::Exp { rate: 0.3 },
        ] {
            for t in [0.05, 0.2, 0.31, 0.47] {
                let fd = (e.value(t + h) - e.value(t - h)) / (2.0 * h);
                assert!((fd - e.derivative(t)).abs() < 1e-7, "{e:?} at {t}");
            }
        }
    }

    #[test]
    fn series_jet_matches_closed_form() {
        let s = TrigSeries {
            constant: 0.5,
            linear: [0.0, 0.0],
            modes: vec![
                TrigMode { k: [2, -1], cos: 0.3, sin: -0.7 },
                TrigMode { k: [0, 3], cos: 0.0, sin: 1.1 },
            ],
        };
        let x = [1.3, -4.1];
        let j = s.jet(x);
        let t1 = 2.0 * x[0] - x[1];
        let t2 = 3.0 * x[1];
        let v = 0.5 + 0.3 * t1.cos() - 0.7 * t1.sin() + 1.1 * t2.sin();
        let d1 = 2.0 * (-0.3 * t1.sin() - 0.7 * t1.cos());
        let d2 = -(-0.3 * t1.sin() - 0.7 * t1.cos()) + 3.3 * t2.cos();
        let lap = -5.0 * (0.3 * t1.cos() - 0.7 * t1.sin()) - 9.0 * 1.1 * t2.sin();
        assert!((j.value - v).abs() < 1e-14);
        assert!((j.grad[0] - d1).abs() < 1e-14);
        assert!((j.grad[1] - d2).abs() < 1e-14);
        assert!((j.laplacian() - lap).abs() < 1e-13);
    }

    #[test]
    fn spectral_form_agrees_with_pointwise() {
        let g = TorusGrid::new(16).unwrap();
        let s = TrigSeries {
            constant: -0.2,
            linear: [0.0, 0.0],
            modes: vec![
                TrigMode { k: [1, 2], cos: 0.4, sin: 0.9 },
                TrigMode { k: [-2, 1], cos: -1.0, sin: 0.1 },
            ],
        };
        let f = s.to_spectral(&g).unwrap();
        let pts = [[0.3, 2.2], [5.9, 0.01]];
        for (x, val) in pts.iter().zip(f.evaluate_at(&pts)) {
            assert!((s.value(*x) - val).abs() < 1e-13);
        }
        assert!(TrigSeries::linear([1.0, 0.0]).to_spectral(&g).is_err());
    }

    #[test]
    fn default_basis_shape() {
        let b = default_basis(Envelope::Sin2 { t_final: 1.0 });
        assert!(b.len() >= 12);
        let h_only = b.iter().filter(|p| !p.h.is_zero() && p.phi.is_zero()).count();
        let phi_only = b.iter().filter(|p| p.h.is_zero() && !p.phi.is_zero()).count();
        let mixed = b.iter().filter(|p| !p.h.is_zero() && !p.phi.is_zero()).count();
        assert_eq!((h_only, phi_only, mixed), (24, 12, 1));
        for p in &b {
            p.validate(1.0).unwrap();
        }
    }

    #[test]
    fn constant_h_fails_endpoint_check() {
        let p = PerturbationField::new("c", SpaceTimeVector::unit(0), SpaceTimeScalar::zero());
        assert!(p.validate(1.0).is_err());
    }

    #[test]
    fn vector_jet_scales_with_envelope() {
        let e = Envelope::Sin2 { t_final: 1.0 };
        let h = SpaceTimeVector::new(e, [TrigSeries::sin([0, 1], 1.0), TrigSeries::zero()]);
        let j = h.jet(0.25, [0.0, 0.4]);
        assert!((j.value[0] - 0.5 * 0.4f64.sin()).abs() < 1e-15);
        assert!((j.dt[0] - PI * 0.4f64.sin()).abs() < 1e-14);
        assert!((j.grad[0][1] - 0.5 * 0.4f64.cos()).abs() < 1e-15);
        assert!((j.laplacian[0] + 0.5 * 0.4f64.sin()).abs() < 1e-15);
    }
}

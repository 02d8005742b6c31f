//! Pointwise convex analysis on `R^d` (d = 1 or 2).
//!
//! Every integrand used by the energies lives here: the power functions
//! `j^p(x) = |x|^p / p`, their gradients `a_p(x) = |x|^(p-2) x`, the
//! resolvents `(1 + eps a_p)^-1`, the Yosida approximations `a_p^eps`, the
//! Moreau envelopes `j^p_eps` and the closed-form Yosida approximation of
//! the sign map. All maps are radial, so each one reduces to a scalar problem
//! in the magnitude `|x|` followed by a rescaling of the direction.

use crate::error::{Error, Result};

/// Newton tolerance on `log m` for the radial equations.
pub const RADIAL_TOL: f64 = 1e-12;
/// Iteration cap for the radial equations.
pub const RADIAL_MAX_ITER: usize = 100;

/// Exponent `p` of the p-Laplacian, restricted to `[1, 2]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PExponent(f64);

impl PExponent {
    pub fn new(value: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&value) {
            return Err(Error::InvalidParameter(format!(
                "exponent p = {value} outside [1, 2]"
            )));
        }
        Ok(Self(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// True for the total-variation endpoint `p = 1`.
    #[inline]
    pub fn is_one(self) -> bool {
        self.0 == 1.0
    }
}

/// Regularization parameter `eps > 0`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct RegEps(f64);

impl RegEps {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularization eps = {value} must be positive and finite"
            )));
        }
        Ok(Self(value))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A gradient value in `R^1` or `R^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VecD {
    comps: [f64; 2],
    dim: usize,
}

impl VecD {
    pub fn new(components: &[f64]) -> Result<Self> {
        match components {
            [x] if x.is_finite() => Ok(Self::scalar(*x)),
            [x, y] if x.is_finite() && y.is_finite() => Ok(Self::pair(*x, *y)),
            [_] | [_, _] => Err(Error::InvalidParameter(
                "vector components must be finite".into(),
            )),
            _ => Err(Error::InvalidParameter(format!(
                "vector dimension {} not in {{1, 2}}",
                components.len()
            ))),
        }
    }

    #[inline]
    pub const fn scalar(x: f64) -> Self {
        Self {
            comps: [x, 0.0],
            dim: 1,
        }
    }

    #[inline]
    pub const fn pair(x: f64, y: f64) -> Self {
        Self {
            comps: [x, y],
            dim: 2,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn components(&self) -> &[f64] {
        &self.comps[..self.dim]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.comps[0].hypot(self.comps[1])
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> f64 {
        self.comps[0] * other.comps[0] + self.comps[1] * other.comps[1]
    }

    #[inline]
    pub fn scale(&self, factor: f64) -> Self {
        Self {
            comps: [self.comps[0] * factor, self.comps[1] * factor],
            dim: self.dim,
        }
    }

    #[inline]
    pub fn sub(&self, other: &Self) -> Self {
        Self {
            comps: [self.comps[0] - other.comps[0], self.comps[1] - other.comps[1]],
            dim: self.dim.max(other.dim),
        }
    }

    #[inline]
    pub fn add(&self, other: &Self) -> Self {
        Self {
            comps: [self.comps[0] + other.comps[0], self.comps[1] + other.comps[1]],
            dim: self.dim.max(other.dim),
        }
    }

    /// `self * (m / |self|)`, or zero when `self` vanishes.
    #[inline]
    fn with_magnitude(&self, m: f64) -> Self {
        let s = self.norm();
        if s == 0.0 {
            self.scale(0.0)
        } else {
            self.scale(m / s)
        }
    }
}

/// `|x|^p / p` for a magnitude `s >= 0`.
#[inline]
pub fn j_p_radial(p: f64, s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.powf(p) / p
    }
}

/// `j^p(x) = |x|^p / p`.
pub fn j_p(p: PExponent, x: VecD) -> f64 {
    j_p_radial(p.value(), x.norm())
}

/// `a_p(x) = |x|^(p-2) x` with `a_p(0) = 0`. Rejects `p = 1`, whose
/// subdifferential is multivalued at the origin; use [`beta_eps`] instead.
pub fn grad_a_p(p: PExponent, x: VecD) -> Result<VecD> {
    if p.is_one() {
        return Err(Error::InvalidParameter(
            "a_p is multivalued at p = 1; use beta_eps".into(),
        ));
    }
    let s = x.norm();
    Ok(x.with_magnitude(if s == 0.0 { 0.0 } else { s.powf(p.value() - 1.0) }))
}

/// Solves `m + eps m^(p-1) = s` for `m >= 0`, the magnitude of the resolvent
/// `(1 + eps a_p)^-1` at a point of norm `s`.
///
/// The equation is solved for `t = log m`, where it is convex and increasing.
/// Newton started right of the root decreases monotonically; an iterate
/// leaving the bracket falls back to bisection.
pub fn radial_resolvent(p: f64, eps: f64, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok((s - eps).max(0.0));
    }
    if p == 2.0 {
        return Ok(s / (1.0 + eps));
    }
    let q = p - 1.0;
    let f = |t: f64| t.exp() + eps * (q * t).exp() - s;
    let df = |t: f64| t.exp() + eps * q * (q * t).exp();

    let ln_s = s.ln();
    let mut hi = ln_s.min((s / eps).ln() / q);
    let mut lo = (0.5 * s).ln().min((0.5 * s / eps).ln() / q);
    let mut t = hi;
    let mut last_step = f64::INFINITY;
    for _ in 0..RADIAL_MAX_ITER {
        let ft = f(t);
        if ft == 0.0 {
            return Ok(t.exp());
        }
        if ft > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let mut next = t - ft / df(t);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        last_step = (next - t).abs();
        t = next;
        if last_step <= RADIAL_TOL || hi - lo <= RADIAL_TOL {
            // one more Newton step lands at machine precision
            let polished = t - f(t) / df(t);
            if polished.is_finite() && (polished - t).abs() <= RADIAL_TOL {
                t = polished;
            }
            return Ok(t.exp());
        }
    }
    Err(Error::NonConvergence {
        what: "radial resolvent",
        iterations: RADIAL_MAX_ITER,
        residual: last_step,
    })
}

/// `r_eps^p(x) = (1 + eps a_p)^-1 (x)`. For `p = 1` this is the resolvent of
/// the sign map: shrinkage of the magnitude by `eps`, clamped at zero.
pub fn resolvent_r_eps(p: PExponent, eps: RegEps, x: VecD) -> Result<VecD> {
    let m = radial_resolvent(p.value(), eps.value(), x.norm())?;
    Ok(x.with_magnitude(m))
}

/// Yosida approximation `a_p^eps(x) = (x - r_eps^p(x)) / eps`.
pub fn yosida_a_eps(p: PExponent, eps: RegEps, x: VecD) -> Result<VecD> {
    let r = resolvent_r_eps(p, eps, x)?;
    Ok(x.sub(&r).scale(1.0 / eps.value()))
}

/// Scalar form of [`yosida_a_eps`] used on 1D edge fields.
#[inline]
pub fn yosida_scalar(p: f64, eps: f64, x: f64) -> Result<f64> {
    let m = radial_resolvent(p, eps, x.abs())?;
    Ok((x - m.copysign(x)) / eps)
}

/// `beta^eps(x) = x / eps` if `|x| <= eps`, `x / |x|` otherwise.
pub fn beta_eps(eps: RegEps, x: VecD) -> VecD {
    let s = x.norm();
    if s <= eps.value() {
        x.scale(1.0 / eps.value())
    } else {
        x.scale(1.0 / s)
    }
}

/// Moreau envelope `j^p_eps(x) = inf_y [ j^p(y) + |x - y|^2 / (2 eps) ]`
/// evaluated at the radial minimizer `m = |r_eps^p(x)|`.
pub fn moreau_j_eps(p: PExponent, eps: RegEps, x: VecD) -> Result<f64> {
    moreau_radial(p.value(), eps.value(), x.norm())
}

/// [`moreau_j_eps`] for a magnitude `s >= 0`.
pub fn moreau_radial(p: f64, eps: f64, s: f64) -> Result<f64> {
    let m = radial_resolvent(p, eps, s)?;
    let d = s - m;
    Ok(j_p_radial(p, m) + d * d / (2.0 * eps))
}

/// A convex function sampled on a symmetric 1D grid `{ i * step : |i| <= N }`.
#[derive(Clone, Debug)]
pub struct SampledFunction {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::InvalidParameter(
                "sample abscissae and values differ in length".into(),
            ));
        }
        if values.iter().chain(xs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("samples must be finite".into()));
        }
        Ok(Self { xs, values })
    }

    /// Samples `f` on `[-half_width, half_width]` with the given step; the
    /// grid contains the origin.
    pub fn on_symmetric_grid(
        half_width: f64,
        step: f64,
        mut f: impl FnMut(f64) -> f64,
    ) -> Result<Self> {
        if !(half_width >= 0.0 && step > 0.0) {
            return Err(Error::InvalidParameter(
                "sampling grid needs half_width >= 0 and step > 0".into(),
            ));
        }
        let count = (half_width / step).round() as i64;
        let xs: Vec<f64> = (-count..=count).map(|i| i as f64 * step).collect();
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, values)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        self.xs.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

/// Grid Legendre transform `max_i [ x_i y - f(x_i) ]`.
///
/// A lower bound for the true transform `sup_x [x y - f(x)]`; the truncation
/// to the sampled window makes transforms of functions with bounded slopes
/// finite, so unbounded duals show up as values growing with the window.
pub fn legendre_sampled(samples: &SampledFunction, y: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("legendre_sampled: no samples"));
    }
    Ok(samples
        .xs
        .iter()
        .zip(&samples.values)
        .map(|(x, f)| x * y - f)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> PExponent {
        PExponent::new(v).unwrap()
    }
    fn e(v: f64) -> RegEps {
        RegEps::new(v).unwrap()
    }

    #[test]
    fn j_p_examples() {
        assert!((j_p(p(2.0), VecD::pair(3.0, 4.0)) - 12.5).abs() < 1e-14);
        assert_eq!(j_p(p(1.0), VecD::pair(0.0, 0.0)), 0.0);
        assert!((j_p(p(1.5), VecD::scalar(1.0)) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(PExponent::new(0.99).is_err());
        assert!(PExponent::new(2.01).is_err());
        assert!(RegEps::new(0.0).is_err());
        assert!(RegEps::new(f64::NAN).is_err());
        assert!(VecD::new(&[1.0, 2.0, 3.0]).is_err());
        assert!(VecD::new(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn a_p_examples() {
        let x = VecD::pair(0.3, -0.7);
        let a = grad_a_p(p(2.0), x).unwrap();
        assert!(a.sub(&x).norm() < 1e-15);
        let a = grad_a_p(p(1.5), VecD::pair(4.0, 0.0)).unwrap();
        assert!(a.sub(&VecD::pair(2.0, 0.0)).norm() < 1e-14);
        let a = grad_a_p(p(1.3), VecD::pair(0.0, 0.0)).unwrap();
        assert_eq!(a.norm(), 0.0);
        assert!(grad_a_p(p(1.0), VecD::scalar(1.0)).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let x = VecD::pair(1.2, -0.4);
        let r = resolvent_r_eps(p(2.0), e(0.3), x).unwrap();
        assert!(r.sub(&x.scale(1.0 / 1.3)).norm() < 1e-15);
        let r = resolvent_r_eps(p(1.7), e(0.3), VecD::pair(0.0, 0.0)).unwrap();
        assert_eq!(r.norm(), 0.0);
        let r = resolvent_r_eps(p(1.5), e(1.0), VecD::pair(2.0, 0.0)).unwrap();
        assert!(r.sub(&VecD::pair(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn resolvent_handles_extreme_magnitudes() {
        for &pv in &[1.0 + 2f64.powi(-10), 1.03, 1.5, 1.99] {
            for &s in &[1e-300, 1e-12, 1e-3, 1.0, 1e3, 1e12] {
                for &ev in &[1e-6, 0.1, 10.0] {
                    let m = radial_resolvent(pv, ev, s).unwrap();
                    assert!((0.0..=s).contains(&m), "p={pv} s={s} eps={ev} m={m}");
                    if m > 1e-250 {
                        let resid = m + ev * m.powf(pv - 1.0) - s;
                        assert!(resid.abs() <= 1e-10 * s, "p={pv} s={s} eps={ev}");
                    }
                }
            }
        }
    }

    #[test]
    fn yosida_examples() {
        let x = VecD::pair(0.5, 2.0);
        let a = yosida_a_eps(p(2.0), e(0.25), x).unwrap();
        assert!(a.sub(&x.scale(1.0 / 1.25)).norm() < 1e-14);
        let a = yosida_a_eps(p(1.5), e(1.0), VecD::pair(2.0, 0.0)).unwrap();
        assert!(a.sub(&VecD::pair(1.0, 0.0)).norm() < 1e-12);
        // p = 1 reproduces the closed-form Yosida approximation of the sign map.
        let a = yosida_a_eps(p(1.0), e(0.5), VecD::pair(0.2, 0.0)).unwrap();
        let b = beta_eps(e(0.5), VecD::pair(0.2, 0.0));
        assert!(a.sub(&b).norm() < 1e-15);
        assert!(b.sub(&VecD::pair(0.4, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn beta_examples() {
        let b = beta_eps(e(0.5), VecD::pair(3.0, 4.0));
        assert!(b.sub(&VecD::pair(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(beta_eps(e(0.5), VecD::pair(0.0, 0.0)).norm(), 0.0);
    }

    #[test]
    fn moreau_examples() {
        let v = moreau_j_eps(p(1.0), e(0.5), VecD::scalar(0.2)).unwrap();
        assert!((v - 0.04).abs() < 1e-15);
        let v = moreau_j_eps(p(1.0), e(0.5), VecD::scalar(2.0)).unwrap();
        assert!((v - 1.75).abs() < 1e-15);
    }

    #[test]
    fn moreau_matches_grid_minimization() {
        // brute force over m in [0, 2] with step 1e-6, objective at fixed |x| = 1
        let (pv, ev) = (1.5, 0.3);
        let mut best = f64::INFINITY;
        let steps = 2_000_000;
        for i in 0..=steps {
            let m = 2.0 * i as f64 / steps as f64;
            let val = m.powf(pv) / pv + (1.0 - m).powi(2) / (2.0 * ev);
            best = best.min(val);
        }
        let v = moreau_j_eps(p(pv), e(ev), VecD::scalar(1.0)).unwrap();
        assert!((v - best).abs() < 1e-8, "{v} vs {best}");
    }

    #[test]
    fn legendre_examples() {
        let quad = SampledFunction::on_symmetric_grid(5.0, 1e-3, |x| 0.5 * x * x).unwrap();
        assert!((legendre_sampled(&quad, 2.0).unwrap() - 2.0).abs() < 1e-5);
        let abs = SampledFunction::on_symmetric_grid(5.0, 1e-3, f64::abs).unwrap();
        assert!(legendre_sampled(&abs, 0.5).unwrap().abs() < 1e-9);

        let jp = |x: f64| j_p_radial(1.5, x.abs());
        let coarse = SampledFunction::on_symmetric_grid(5.0, 1e-3, jp).unwrap();
        let fine = SampledFunction::on_symmetric_grid(5.0, 1e-4, jp).unwrap();
        let a = legendre_sampled(&coarse, 1.0).unwrap();
        let b = legendre_sampled(&fine, 1.0).unwrap();
        assert!((a - b).abs() < 1e-4);
        // conjugate exponent 3: (j^1.5)*(1) = 1/3
        assert!((b - 1.0 / 3.0).abs() < 1e-6);

        let empty = SampledFunction::new(vec![], vec![]).unwrap();
        assert!(legendre_sampled(&empty, 1.0).is_err());
    }
}

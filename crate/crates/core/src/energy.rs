//! Discrete energies and their gradients, plus the probes that exercise
//! convergence of the energies as the exponent moves.
//!
//! Scalar energies act on node fields through the edge gradient; vector
//! energies act directly on edge fields. The regularized energy composes the
//! Moreau envelope of the integrand with the smoothing resolvent
//! `R_eps = (I - eps Delta_h)^-1`, so it is `C^1` with a Lipschitz gradient.

use std::fmt::Write as _;

use serde::Serialize;

use crate::convex_kernel::{
    j_p_radial, legendre_sampled, moreau_radial, yosida_scalar, PExponent, RegEps,
    SampledFunction,
};
use crate::discrete_space::{
    divergence_values, gradient_values, resolvent_apply, total_variation, w1p_power, EdgeField,
    ScalarField,
};
use crate::error::{Error, Result};

/// Tolerance for the discretization-limited convergence reports.
pub const MOSCO_TOL: f64 = 1e-3;
/// Slack allowed below the limit energy in the liminf probe.
pub const LIMINF_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EnergyVariant {
    Direct,
    Regularized,
    VectorDirect,
    VectorEnvelope,
}

/// A choice of energy: exponent, optional regularization, and variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySpec {
    pub p: PExponent,
    pub eps: Option<RegEps>,
    pub variant: EnergyVariant,
}

impl EnergySpec {
    pub fn new(p: PExponent, eps: Option<RegEps>, variant: EnergyVariant) -> Result<Self> {
        let needs_eps = matches!(
            variant,
            EnergyVariant::Regularized | EnergyVariant::VectorEnvelope
        );
        if needs_eps && eps.is_none() {
            return Err(Error::InvalidParameter(format!(
                "{variant:?} energy requires eps"
            )));
        }
        Ok(Self { p, eps, variant })
    }

    /// Evaluates a node-field energy (`Direct` or `Regularized`).
    pub fn eval_scalar(&self, u: &ScalarField) -> Result<f64> {
        match (self.variant, self.eps) {
            (EnergyVariant::Direct, _) => Ok(phi(self.p, u)),
            (EnergyVariant::Regularized, Some(eps)) => phi_eps(self.p, eps, u),
            _ => Err(Error::InvalidParameter(format!(
                "{:?} energy acts on edge fields",
                self.variant
            ))),
        }
    }

    /// Evaluates an edge-field energy (`VectorDirect` or `VectorEnvelope`).
    pub fn eval_edge(&self, v: &EdgeField) -> Result<f64> {
        match self.variant {
            EnergyVariant::VectorDirect => psi(self.p, None, v),
            EnergyVariant::VectorEnvelope => psi(self.p, self.eps, v),
            _ => Err(Error::InvalidParameter(format!(
                "{:?} energy acts on node fields",
                self.variant
            ))),
        }
    }
}

/// `(1/p) sum_e h |grad u|_e^p`; for `p = 1` the edge total variation of the
/// zero extension.
pub fn phi(p: PExponent, u: &ScalarField) -> f64 {
    if p.is_one() {
        total_variation(u)
    } else {
        w1p_power(u, p.value()) / p.value()
    }
}

/// `sum_e h j^p_eps((grad R_eps u)_e)`.
pub fn phi_eps(p: PExponent, eps: RegEps, u: &ScalarField) -> Result<f64> {
    let h = u.grid().h();
    let smooth = resolvent_apply(eps, u);
    let g = gradient_values(smooth.values(), h);
    let mut acc = 0.0;
    for ge in g {
        acc += moreau_radial(p.value(), eps.value(), ge.abs())?;
    }
    Ok(acc * h)
}

/// `-R_eps div a_p^eps(grad R_eps u)`, the `h`-weighted gradient of
/// [`phi_eps`]. At `p = 1` the Yosida map is the clipped ramp `beta^eps`.
pub fn grad_phi_eps(p: PExponent, eps: RegEps, u: &ScalarField) -> Result<ScalarField> {
    let grid = *u.grid();
    let h = grid.h();
    let smooth = resolvent_apply(eps, u);
    let mut flux = gradient_values(smooth.values(), h);
    for f in flux.iter_mut() {
        *f = yosida_scalar(p.value(), eps.value(), *f)?;
    }
    let div = divergence_values(&flux, h);
    let neg_div = ScalarField::from_vec_unchecked(grid, div.into_iter().map(|d| -d).collect());
    Ok(resolvent_apply(eps, &neg_div))
}

/// `sum_e h j^p(v_e)`, or the envelope `sum_e h j^p_eps(v_e)` when `eps` is
/// given.
pub fn psi(p: PExponent, eps: Option<RegEps>, v: &EdgeField) -> Result<f64> {
    let h = v.grid().h();
    let mut acc = 0.0;
    match eps {
        None => {
            for x in v.values() {
                acc += j_p_radial(p.value(), x.abs());
            }
        }
        Some(e) => {
            for x in v.values() {
                acc += moreau_radial(p.value(), e.value(), x.abs())?;
            }
        }
    }
    Ok(acc * h)
}

#[derive(Clone, Debug, Serialize)]
pub struct MoscoRow {
    pub sample: usize,
    pub n: usize,
    pub p_n: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MoscoColumn {
    pub sample: usize,
    pub strictly_decreasing: bool,
    pub final_gap: f64,
    pub below_tolerance: bool,
}

/// Envelope gaps `|phi_eps(p_n, u) - phi_eps(p_limit, u)|` per sample.
#[derive(Clone, Debug, Serialize)]
pub struct MoscoReport {
    pub p_limit: f64,
    pub eps: f64,
    pub rows: Vec<MoscoRow>,
    pub columns: Vec<MoscoColumn>,
}

impl MoscoReport {
    pub fn all_pass(&self) -> bool {
        self.columns
            .iter()
            .all(|c| c.below_tolerance && (c.strictly_decreasing || c.final_gap == 0.0))
    }

    /// CSV with columns `sample,n,p_n,gap,decreasing_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,n,p_n,gap,decreasing_flag\n");
        for row in &self.rows {
            let flag = self
                .columns
                .iter()
                .find(|c| c.sample == row.sample)
                .map(|c| c.strictly_decreasing)
                .unwrap_or(false);
            let _ = writeln!(
                out,
                "{},{},{:.17e},{:.17e},{}",
                row.sample, row.n, row.p_n, row.gap, flag as u8
            );
        }
        out
    }
}

pub fn mosco_pointwise_report(
    p_seq: &[PExponent],
    p_limit: PExponent,
    eps: RegEps,
    u_samples: &[ScalarField],
) -> Result<MoscoReport> {
    if p_seq.is_empty() {
        return Err(Error::EmptyInput("mosco report: exponent sequence"));
    }
    if u_samples.is_empty() {
        return Err(Error::EmptyInput("mosco report: sample fields"));
    }
    let mut rows = Vec::new();
    let mut columns = Vec::new();
    for (s, u) in u_samples.iter().enumerate() {
        let limit = phi_eps(p_limit, eps, u)?;
        let mut gaps = Vec::with_capacity(p_seq.len());
        for (n, &p) in p_seq.iter().enumerate() {
            let gap = (phi_eps(p, eps, u)? - limit).abs();
            rows.push(MoscoRow {
                sample: s,
                n,
                p_n: p.value(),
                gap,
            });
            gaps.push(gap);
        }
        let final_gap = *gaps.last().expect("non-empty");
        columns.push(MoscoColumn {
            sample: s,
            strictly_decreasing: gaps.windows(2).all(|w| w[1] < w[0]),
            final_gap,
            below_tolerance: final_gap < MOSCO_TOL,
        });
    }
    Ok(MoscoReport {
        p_limit: p_limit.value(),
        eps: eps.value(),
        rows,
        columns,
    })
}

/// Outcome of the weak-liminf probe.
#[derive(Clone, Debug, Serialize)]
pub struct LiminfReport {
    /// Oscillation frequency used for each member of the sequence.
    pub frequencies: Vec<usize>,
    /// Energy of the oscillating sequence at its own exponent.
    pub oscillating: Vec<f64>,
    /// Energy of the weak limit at each exponent of the sequence.
    pub base: Vec<f64>,
    /// Energy of the weak limit at the limit exponent.
    pub limit_value: f64,
    /// Extrapolated limit of `base` as the exponent converges.
    pub base_limit: f64,
    /// Minimum of `oscillating - base` over the tail of the sequence.
    pub tail_excess: f64,
    pub margin: f64,
    pub passed: bool,
}

/// Probes the liminf inequality along `v_n = u + a sin(m_n pi x / L)`.
///
/// The frequencies `m_n` climb to the Nyquist index of the edge grid, which
/// is how a weakly but not strongly convergent sequence looks at a fixed
/// resolution. The reported margin is the tail minimum of
/// `Psi^{p_n}(v_n) - Psi^{p_n}(u)` plus the limit of
/// `Psi^{p_n}(u) - Psi^{p_limit}(u)`, the latter extrapolated to the limit
/// exponent from the last three members.
pub fn mosco_liminf_probe(
    p_seq: &[PExponent],
    p_limit: PExponent,
    u: &EdgeField,
    amplitude: f64,
    eps: Option<RegEps>,
) -> Result<LiminfReport> {
    if p_seq.is_empty() {
        return Err(Error::EmptyInput("liminf probe: exponent sequence"));
    }
    if !amplitude.is_finite() {
        return Err(Error::InvalidParameter("oscillation amplitude must be finite".into()));
    }
    let grid = *u.grid();
    let len = p_seq.len();
    let nyquist = grid.n_edges();
    let frequencies: Vec<usize> = (0..len)
        .map(|i| ((i + 1) * nyquist).div_ceil(len).max(1))
        .collect();

    let mut oscillating = Vec::with_capacity(len);
    let mut base = Vec::with_capacity(len);
    for (&p, &m) in p_seq.iter().zip(&frequencies) {
        let w = m as f64 * std::f64::consts::PI / grid.length();
        let osc = EdgeField::from_fn(grid, |x| amplitude * (w * x).sin());
        let v = u.add_scaled(1.0, &osc);
        oscillating.push(psi(p, eps, &v)?);
        base.push(psi(p, eps, u)?);
    }
    let limit_value = psi(p_limit, eps, u)?;

    let tail_start = len / 2;
    let tail_excess = oscillating[tail_start..]
        .iter()
        .zip(&base[tail_start..])
        .map(|(o, b)| o - b)
        .fold(f64::INFINITY, f64::min);

    let offsets: Vec<f64> = p_seq.iter().map(|p| p.value() - p_limit.value()).collect();
    let k = len.saturating_sub(3);
    let base_limit = extrapolate_to_zero(&offsets[k..], &base[k..]);
    let margin = tail_excess + (base_limit - limit_value);
    Ok(LiminfReport {
        frequencies,
        oscillating,
        base,
        limit_value,
        base_limit,
        tail_excess,
        margin,
        passed: margin >= -LIMINF_SLACK,
    })
}

/// Value at `0` of the polynomial through `(xs_i, ys_i)` (Neville). Repeated
/// abscissae collapse to their last value.
fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    if let Some(i) = xs.iter().rposition(|x| *x == 0.0) {
        return ys[i];
    }
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if let Some(slot) = pts.iter_mut().find(|(px, _)| *px == x) {
            slot.1 = y;
        } else {
            pts.push((x, y));
        }
    }
    let mut p: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
    let n = pts.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (pts[i].0, pts[i + level].0);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

#[derive(Clone, Debug, Serialize)]
pub struct LegendrePoint {
    pub y: f64,
    /// Grid transform of the envelope, `None` where it is unbounded.
    pub lhs: Option<f64>,
    /// Grid transform of the integrand plus `eps y^2 / 2`.
    pub rhs: Option<f64>,
    pub consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LegendreReport {
    pub p: f64,
    pub eps: f64,
    pub window: f64,
    pub points: Vec<LegendrePoint>,
    pub max_gap: f64,
    pub passed: bool,
}

/// Grid spacing of the Legendre check.
pub const LEGENDRE_STEP: f64 = 1e-3;
/// Largest `|y|` probed by the Legendre check.
pub const LEGENDRE_Y_MAX: f64 = 3.0;
const LEGENDRE_MAX_WINDOW: f64 = 2000.0;

/// Scalar check of `(j^p_eps)^* = (j^p)^* + (eps/2) y^2` on `y in [-3, 3]`.
///
/// Both transforms are grid suprema over a window wide enough to contain
/// every maximizer with `|y| <= 3`. A transform is declared unbounded when
/// doubling the window raises it by more than the tolerance; points where
/// both sides are unbounded count as consistent.
pub fn legendre_identity_check(p: PExponent, eps: RegEps) -> Result<LegendreReport> {
    let pv = p.value();
    let ev = eps.value();
    let reach = if p.is_one() {
        LEGENDRE_Y_MAX * ev
    } else {
        LEGENDRE_Y_MAX.powf(1.0 / (pv - 1.0)) + LEGENDRE_Y_MAX * ev
    };
    let window = (1.5 * reach).max(20.0);
    if window > LEGENDRE_MAX_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "Legendre check for p = {pv} needs a window of {window:.3e}"
        )));
    }
    let mut envelope_err = None;
    let mut sample = |half: f64, f: &dyn Fn(f64) -> Result<f64>| {
        SampledFunction::on_symmetric_grid(half, LEGENDRE_STEP, |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                envelope_err.get_or_insert(e);
                0.0
            }
        })
    };
    let env = |x: f64| moreau_radial(pv, ev, x.abs());
    let raw = |x: f64| Ok(j_p_radial(pv, x.abs()));
    let env_near = sample(window, &env)?;
    let env_far = sample(2.0 * window, &env)?;
    let raw_near = sample(window, &raw)?;
    let raw_far = sample(2.0 * window, &raw)?;
    if let Some(e) = envelope_err {
        return Err(e);
    }

    let count = (2.0 * LEGENDRE_Y_MAX / 0.1).round() as i64;
    let mut points = Vec::with_capacity(count as usize + 1);
    let mut max_gap: f64 = 0.0;
    let mut passed = true;
    for i in 0..=count {
        let y = -LEGENDRE_Y_MAX + 0.1 * i as f64;
        let bounded = |near: &SampledFunction, far: &SampledFunction| -> Result<Option<f64>> {
            let a = legendre_sampled(near, y)?;
            let b = legendre_sampled(far, y)?;
            Ok(if b - a > MOSCO_TOL { None } else { Some(a) })
        };
        let lhs = bounded(&env_near, &env_far)?;
        let rhs = bounded(&raw_near, &raw_far)?.map(|v| v + 0.5 * ev * y * y);
        let consistent = match (lhs, rhs) {
            (Some(a), Some(b)) => {
                max_gap = max_gap.max((a - b).abs());
                (a - b).abs() <= MOSCO_TOL
            }
            (None, None) => true,
            _ => false,
        };
        passed &= consistent;
        points.push(LegendrePoint {
            y,
            lhs,
            rhs,
            consistent,
        });
    }
    Ok(LegendreReport {
        p: pv,
        eps: ev,
        window,
        points,
        max_gap,
        passed,
    })
}

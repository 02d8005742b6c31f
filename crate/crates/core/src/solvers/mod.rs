//! Time steppers for the stochastic p-Laplace and fast diffusion equations.

pub mod apriori;
pub mod fd;
pub mod linear;
pub mod prox;
pub mod trajectory;
pub mod tv;
pub mod vi;

use serde::{Deserialize, Serialize};

use crate::convex_kernel::{PExponent, RegEps};
use crate::discrete_space::{NormKind, ScalarField};
use crate::energy::{grad_phi_eps, phi};
use crate::error::{Error, Result};
use crate::noise::WienerIncrement;

pub use apriori::{apriori_ensemble, resolvent_statistics, AprioriReport};
pub use fd::{psi_r, step_fd, FdExponent, FdSolver};
pub use linear::{stationary_variances, strong_order, StationaryReport, StrongOrderReport};
pub use prox::{prox_step_direct, ProxSolver};
pub use trajectory::{coupled_sup_error, run_trajectory, CoupledReport, Trajectory};
pub use vi::{vi_check, ViReport, ViTestPair};

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX: usize = 200;
pub const DEFAULT_C_STAB: f64 = 0.25;
pub const DEFAULT_SNAPSHOT_STRIDE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ProxImplicit,
    RegularizedExplicit,
}

/// Which equation is being integrated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EquationSpec {
    PLaplace(PExponent),
    FastDiffusion(FdExponent),
}

impl EquationSpec {
    pub fn p_laplace(p: f64) -> Result<Self> {
        Ok(Self::PLaplace(PExponent::new(p)?))
    }

    pub fn fast_diffusion(r: f64) -> Result<Self> {
        Ok(Self::FastDiffusion(FdExponent::new(r)?))
    }

    pub fn exponent(&self) -> f64 {
        match self {
            Self::PLaplace(p) => p.value(),
            Self::FastDiffusion(r) => r.value(),
        }
    }

    /// Norm of the state space: `L^2` for p-Laplace, `H^-1` for fast
    /// diffusion.
    pub fn state_norm(&self) -> NormKind {
        match self {
            Self::PLaplace(_) => NormKind::L2,
            Self::FastDiffusion(_) => NormKind::Hminus1,
        }
    }

    pub fn same_family(&self, other: &Self) -> bool {
        matches!(
            (self, other),
            (Self::PLaplace(_), Self::PLaplace(_)) | (Self::FastDiffusion(_), Self::FastDiffusion(_))
        )
    }

    /// Energy whose gradient flow is the deterministic part of the equation.
    pub fn energy(&self, u: &ScalarField) -> f64 {
        match self {
            Self::PLaplace(p) => phi(*p, u),
            Self::FastDiffusion(r) => {
                let rv = r.value();
                u.values().iter().map(|y| y.abs().powf(rv + 1.0)).sum::<f64>() * u.grid().h()
                    / (rv + 1.0)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::PLaplace(p) => format!("PL(p={})", p.value()),
            Self::FastDiffusion(r) => format!("FD(r={})", r.value()),
        }
    }
}

/// Time-stepping parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub eps: Option<RegEps>,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub c_stab: f64,
    pub snapshot_stride: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64, scheme: Scheme, eps: Option<RegEps>) -> Result<Self> {
        let cfg = Self {
            dt,
            t_final,
            scheme,
            eps,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max: DEFAULT_NEWTON_MAX,
            c_stab: DEFAULT_C_STAB,
            snapshot_stride: DEFAULT_SNAPSHOT_STRIDE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        self.snapshot_stride = stride;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "final time {} must be at least dt = {}",
                self.t_final, self.dt
            )));
        }
        let ratio = self.t_final / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "final time {} is not a multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter("snapshot stride must be positive".into()));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return Err(Error::InvalidParameter(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.c_stab > 0.0) {
            return Err(Error::InvalidParameter("c_stab must be positive".into()));
        }
        if self.scheme == Scheme::RegularizedExplicit {
            let eps = self.eps.ok_or_else(|| {
                Error::InvalidParameter("regularized scheme requires eps".into())
            })?;
            check_stability(self.dt, eps, self.c_stab)?;
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Largest stable step of the explicit regularized scheme. The drift has
/// Lipschitz constant at most `1 / (4 eps^2)`.
pub fn stability_limit(eps: RegEps, c_stab: f64) -> f64 {
    4.0 * c_stab * eps.value() * eps.value()
}

pub fn check_stability(dt: f64, eps: RegEps, c_stab: f64) -> Result<()> {
    let limit = stability_limit(eps, c_stab);
    if dt > limit {
        return Err(Error::StabilityGuard { dt, limit });
    }
    Ok(())
}

/// Explicit Euler-Maruyama step `state - dt A_p^eps(state) + dW`.
pub fn step_regularized(
    p: PExponent,
    eps: RegEps,
    dt: f64,
    state: &ScalarField,
    dw: &WienerIncrement,
) -> Result<ScalarField> {
    check_stability(dt, eps, DEFAULT_C_STAB)?;
    regularized_update(p, eps, dt, state, dw)
}

fn regularized_update(
    p: PExponent,
    eps: RegEps,
    dt: f64,
    state: &ScalarField,
    dw: &WienerIncrement,
) -> Result<ScalarField> {
    state.grid().check_same(dw.field().grid())?;
    let drift = grad_phi_eps(p, eps, state)?;
    Ok(state.add_scaled(-dt, &drift).add(dw.field()))
}

/// A configured single-equation stepper.
#[derive(Clone, Debug)]
pub enum Stepper {
    Prox(ProxSolver),
    Regularized { p: PExponent, eps: RegEps },
    Fd(FdSolver),
}

impl Stepper {
    pub fn new(eq: &EquationSpec, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        match (eq, cfg.scheme) {
            (EquationSpec::PLaplace(p), Scheme::ProxImplicit) => Ok(Self::Prox(ProxSolver::new(
                *p,
                cfg.newton_tol,
                cfg.newton_max,
            )?)),
            (EquationSpec::PLaplace(p), Scheme::RegularizedExplicit) => Ok(Self::Regularized {
                p: *p,
                eps: cfg.eps.expect("validated"),
            }),
            (EquationSpec::FastDiffusion(r), Scheme::ProxImplicit) => {
                Ok(Self::Fd(FdSolver::new(*r, cfg.newton_tol, cfg.newton_max)?))
            }
            (EquationSpec::FastDiffusion(_), Scheme::RegularizedExplicit) => Err(
                Error::InvalidParameter("fast diffusion is integrated implicitly only".into()),
            ),
        }
    }

    pub fn step(&mut self, dt: f64, state: &ScalarField, dw: &WienerIncrement) -> Result<ScalarField> {
        match self {
            Self::Prox(solver) => {
                state.grid().check_same(dw.field().grid())?;
                Ok(solver.step(dt, &state.add(dw.field()))?.u)
            }
            Self::Regularized { p, eps } => regularized_update(*p, *eps, dt, state, dw),
            Self::Fd(solver) => {
                state.grid().check_same(dw.field().grid())?;
                Ok(solver.step(dt, &state.add(dw.field()))?.y)
            }
        }
    }
}

//! Implicit Euler step of the fast diffusion equation in `H^-1`.
//!
//! The step `Y - dt Delta_h Psi_r(Y) = rhs`, `Psi_r(y) = |y|^(r-1) y`, is
//! solved for `z = Psi_r(Y)`: with `Y = |z|^(1/r - 1) z` the system reads
//! `Y(z) + dt (-Delta_h) z = rhs`. Its Jacobian `diag(Y'(z)) + dt (-Delta_h)`
//! is symmetric positive definite and tridiagonal even where `z = 0`, and the
//! system is the gradient of a strictly convex functional that drives the
//! line search. The residual is measured in the `H^-1` norm.

use crate::discrete_space::{hminus1_dot, ScalarField};
use crate::error::{Error, Result};
use crate::tridiag::Tridiagonal;

use super::{DEFAULT_NEWTON_MAX, DEFAULT_NEWTON_TOL};

/// Validated fast diffusion exponent `r` in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FdExponent(f64);

impl FdExponent {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fast diffusion exponent r = {r} outside (0, 1]"
            )));
        }
        Ok(Self(r))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(e).copysign(x)
    }
}

/// `Psi_r(y) = |y|^(r-1) y`.
pub fn psi_r(r: f64, y: f64) -> f64 {
    signed_pow(y, r)
}

#[derive(Clone, Debug)]
pub struct FdOutcome {
    pub y: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

/// Stateful solver that warm-starts from the previous `z`.
#[derive(Clone, Debug)]
pub struct FdSolver {
    r: FdExponent,
    newton_tol: f64,
    newton_max: usize,
    z: Option<Vec<f64>>,
}

impl FdSolver {
    pub fn new(r: FdExponent, newton_tol: f64, newton_max: usize) -> Result<Self> {
        if !(newton_tol > 0.0) || newton_max == 0 {
            return Err(Error::InvalidParameter(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(Self {
            r,
            newton_tol,
            newton_max,
            z: None,
        })
    }

    pub fn r(&self) -> FdExponent {
        self.r
    }

    pub fn step(&mut self, dt: f64, rhs: &ScalarField) -> Result<FdOutcome> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step {dt} must be >= 0")));
        }
        let grid = *rhs.grid();
        if dt == 0.0 {
            return Ok(FdOutcome {
                y: rhs.clone(),
                iterations: 0,
                residual: 0.0,
            });
        }
        let n = grid.n_interior();
        let h = grid.h();
        let c = dt / (h * h);
        let r = self.r.value();
        if r == 1.0 {
            let m = Tridiagonal::new(vec![-c; n - 1], vec![1.0 + 2.0 * c; n], vec![-c; n - 1]);
            let y = m.solve(rhs.values())?;
            return Ok(FdOutcome {
                y: ScalarField::from_vec_unchecked(grid, y),
                iterations: 1,
                residual: 0.0,
            });
        }
        let e = 1.0 / r;
        let b = rhs.values();

        let mut z = match self.z.take() {
            Some(z) if z.len() == n => z,
            _ => b.iter().map(|v| signed_pow(*v, r)).collect(),
        };
        let lap = |z: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let left = if i > 0 { z[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { z[i + 1] } else { 0.0 };
                    c * (2.0 * z[i] - left - right)
                })
                .collect()
        };
        // convex potential: sum |z|^(1+1/r) / (1+1/r) + 1/2 z.(dt A z) - b.z
        let energy = |z: &[f64], lz: &[f64]| -> f64 {
            z.iter()
                .zip(lz)
                .zip(b)
                .map(|((zi, li), bi)| zi.abs().powf(1.0 + e) / (1.0 + e) + 0.5 * zi * li - bi * zi)
                .sum()
        };
        let residual_of = |z: &[f64], lz: &[f64]| -> Vec<f64> {
            z.iter()
                .zip(lz)
                .zip(b)
                .map(|((zi, li), bi)| signed_pow(*zi, e) + li - bi)
                .collect()
        };
        let hnorm = |res: &[f64]| -> f64 {
            let f = ScalarField::from_vec_unchecked(grid, res.to_vec());
            hminus1_dot(&f, &f).max(0.0).sqrt()
        };

        let lz = lap(&z);
        let mut value = energy(&z, &lz);
        let mut res = residual_of(&z, &lz);
        let mut rnorm = hnorm(&res);
        let mut iterations = 0;
        let mut polished = false;
        loop {
            if rnorm <= self.newton_tol {
                if polished || rnorm == 0.0 {
                    break;
                }
                polished = true;
            }
            if iterations >= self.newton_max {
                return Err(Error::NonConvergence {
                    what: "fast diffusion Newton",
                    iterations,
                    residual: rnorm,
                });
            }
            iterations += 1;
            let diag: Vec<f64> = z
                .iter()
                .map(|zi| e * zi.abs().powf(e - 1.0) + 2.0 * c)
                .collect();
            let jac = Tridiagonal::new(vec![-c; n - 1], diag, vec![-c; n - 1]);
            let dir: Vec<f64> = jac.solve(&res)?.into_iter().map(|v| -v).collect();
            let slope: f64 = dir.iter().zip(&res).map(|(d, r)| d * r).sum();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                let tl = lap(&trial);
                let tval = energy(&trial, &tl);
                let tres = residual_of(&trial, &tl);
                let tnorm = hnorm(&tres);
                let armijo = tval <= value + 1e-4 * t * slope;
                let reduces = tnorm <= (1.0 - 1e-4 * t) * rnorm;
                if armijo || reduces || (polished && t == 1.0) {
                    if polished && tnorm > rnorm {
                        break;
                    }
                    z = trial;
                    value = tval;
                    res = tres;
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                if rnorm <= self.newton_tol {
                    break;
                }
                return Err(Error::NonConvergence {
                    what: "fast diffusion line search",
                    iterations,
                    residual: rnorm,
                });
            }
        }
        let y: Vec<f64> = z.iter().map(|zi| signed_pow(*zi, e)).collect();
        self.z = Some(z);
        Ok(FdOutcome {
            y: ScalarField::from_vec_unchecked(grid, y),
            iterations,
            residual: rnorm,
        })
    }
}

/// One implicit fast diffusion step from `rhs = state + noise` with default
/// Newton settings.
pub fn step_fd(r: FdExponent, dt: f64, rhs: &ScalarField) -> Result<ScalarField> {
    Ok(FdSolver::new(r, DEFAULT_NEWTON_TOL, DEFAULT_NEWTON_MAX)?
        .step(dt, rhs)?
        .y)
}

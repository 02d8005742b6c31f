//! The linear case `p = 2`: every discrete mode is an Ornstein-Uhlenbeck
//! process `dc_k = -mu_k^h c_k dt + sqrt(lambda_k) dbeta_k`, which gives an
//! exact reference for the schemes.

use rayon::prelude::*;
use serde::Serialize;

use crate::convex_kernel::{PExponent, RegEps};
use crate::discrete_space::{spectral_mode, ScalarField};
use crate::ergodics::batch_std_error;
use crate::error::{Error, Result};
use crate::noise::{NoiseSpectrum, NoiseStream, WienerIncrement};

use super::trajectory::run_trajectory_observed;
use super::{EquationSpec, Scheme, SolverConfig, Stepper};

/// Coordinates `<x, e_k>_h` in the full discrete sine basis.
pub fn mode_coordinates(x: &ScalarField) -> Result<Vec<f64>> {
    let grid = *x.grid();
    (1..=grid.n_interior())
        .map(|k| Ok(spectral_mode(&grid, k)?.field.dot_h(x)))
        .collect()
}

fn from_coordinates(spec: &NoiseSpectrum, c: &[f64]) -> Result<ScalarField> {
    let grid = *spec.grid();
    let mut out = grid.zeros();
    for (k, ck) in c.iter().enumerate() {
        out = out.add_scaled(*ck, &spectral_mode(&grid, k + 1)?.field);
    }
    Ok(out)
}

/// Strong error of one scheme at one step size.
#[derive(Clone, Debug, Serialize)]
pub struct StrongErrorRow {
    pub dt: f64,
    pub eps: Option<f64>,
    /// Path mean of `sup_t |X - X_ref|_L2` over the coarse time grid.
    pub mean_sup_error: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongOrderReport {
    pub scheme: Scheme,
    pub rows: Vec<StrongErrorRow>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: f64,
    pub refine: usize,
}

/// Strong error of `scheme` for `p = 2` against the exact OU modes, sampled
/// on a grid `refine` times finer than the smallest `dt`. Coarse Brownian
/// increments are sums of the fine ones, so every scheme sees the same path.
/// `config_for(dt)` gives the scheme settings at each step size; its final
/// time must be `t_final`.
#[allow(clippy::too_many_arguments)]
pub fn strong_order(
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    t_final: f64,
    dts: &[f64],
    config_for: &(dyn Fn(f64) -> Result<SolverConfig> + Sync),
    paths: usize,
    master_seed: u64,
    refine: usize,
) -> Result<StrongOrderReport> {
    if dts.len() < 2 || paths == 0 || refine == 0 {
        return Err(Error::InvalidParameter(
            "strong order needs two step sizes, one path and a positive refinement".into(),
        ));
    }
    let dt_min = dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let fine = dt_min / refine as f64;
    let ratios: Vec<usize> = dts.iter().map(|dt| (dt / fine).round() as usize).collect();
    for (dt, r) in dts.iter().zip(&ratios) {
        if ((*r as f64) * fine - dt).abs() > 1e-9 * dt {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} is not a multiple of the reference step {fine}"
            )));
        }
    }
    let configs: Vec<SolverConfig> = dts.iter().map(|dt| config_for(*dt)).collect::<Result<_>>()?;
    for (cfg, dt) in configs.iter().zip(dts) {
        if cfg.dt != *dt || cfg.t_final != t_final {
            return Err(Error::InvalidParameter(format!(
                "configuration for dt = {dt} has dt = {} and final time {}",
                cfg.dt, cfg.t_final
            )));
        }
    }
    let scheme = configs[0].scheme;
    let n_fine = (t_final / fine).round() as usize;
    let eq = EquationSpec::PLaplace(PExponent::new(2.0)?);
    let grid = *spec.grid();
    let mus: Vec<f64> = (1..=grid.n_interior()).map(|k| grid.discrete_eigenvalue(k)).collect();
    let decay: Vec<f64> = mus.iter().map(|m| (-m * fine).exp()).collect();
    let half: Vec<f64> = mus.iter().map(|m| (-0.5 * m * fine).exp()).collect();
    let lam_sqrt: Vec<f64> = spec.lambdas().iter().map(|l| l.sqrt()).collect();
    let c0 = mode_coordinates(x0)?;
    let sdt = fine.sqrt();

    let per_path: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|id| -> Result<Vec<f64>> {
            let stream = NoiseStream::new(master_seed, id);
            let mut steppers = Vec::with_capacity(dts.len());
            for cfg in &configs {
                steppers.push(Stepper::new(&eq, cfg)?);
            }
            let mut c = c0.clone();
            let mut states = vec![x0.clone(); dts.len()];
            let mut acc = vec![vec![0.0; spec.n_modes()]; dts.len()];
            let mut sup = vec![0.0f64; dts.len()];
            for step in 0..n_fine {
                let xi = stream.normals(step as u64, spec.n_modes());
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck *= decay[k];
                    if k < xi.len() {
                        *ck += half[k] * lam_sqrt[k] * xi[k] * sdt;
                    }
                }
                for a in acc.iter_mut() {
                    for (ak, z) in a.iter_mut().zip(&xi) {
                        *ak += z * sdt;
                    }
                }
                let done = step + 1;
                let mut reference = None;
                for (i, r) in ratios.iter().enumerate() {
                    if done % r != 0 {
                        continue;
                    }
                    let dw = WienerIncrement::from_mode_increments(spec, dts[i], &acc[i])?;
                    states[i] = steppers[i].step(dts[i], &states[i], &dw)?;
                    acc[i].iter_mut().for_each(|a| *a = 0.0);
                    if reference.is_none() {
                        reference = Some(from_coordinates(spec, &c)?);
                    }
                    let err = states[i].sub(reference.as_ref().expect("set")).l2_norm();
                    if !err.is_finite() {
                        return Err(Error::NonFinite {
                            step: done,
                            time: done as f64 * fine,
                            detail: format!("{} against the OU reference", eq.label()),
                        });
                    }
                    sup[i] = sup[i].max(err);
                }
            }
            Ok(sup)
        })
        .collect::<Result<_>>()?;

    let n = paths as f64;
    let mut rows = Vec::with_capacity(dts.len());
    for (i, dt) in dts.iter().enumerate() {
        let xs: Vec<f64> = per_path.iter().map(|s| s[i]).collect();
        let m = xs.iter().sum::<f64>() / n;
        let var = if paths > 1 {
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        rows.push(StrongErrorRow {
            dt: *dt,
            eps: configs[i].eps.map(RegEps::value),
            mean_sup_error: m,
            std_error: (var / n).sqrt(),
        });
    }
    let order = log_slope(
        &rows.iter().map(|r| r.dt).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.mean_sup_error).collect::<Vec<_>>(),
    );
    Ok(StrongOrderReport {
        scheme,
        rows,
        order,
        refine,
    })
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeVarianceRow {
    pub k: usize,
    /// `lambda_k / (2 mu_k^h)`.
    pub expected: f64,
    /// Stationary variance of implicit Euler, `lambda_k / (2 mu + mu^2 dt)`.
    pub scheme_expected: f64,
    pub observed: f64,
    pub std_error: f64,
    /// `(observed - expected) / std_error`.
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryReport {
    pub dt: f64,
    pub t_final: f64,
    pub burn_in: f64,
    pub rows: Vec<ModeVarianceRow>,
}

impl StationaryReport {
    /// Every forced mode within `tol` standard errors of `lambda_k / (2 mu_k^h)`.
    pub fn within(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| r.z.abs() <= tol)
    }

    /// Same check against the implicit-Euler stationary law.
    pub fn scheme_within(&self, tol: f64) -> bool {
        self.rows
            .iter()
            .all(|r| ((r.observed - r.scheme_expected) / r.std_error).abs() <= tol)
    }
}

/// Time-averaged variances of the forced modes along one long prox path
/// for `p = 2`, observed every `observe_every` steps after `burn_in`.
pub fn stationary_variances(
    spec: &NoiseSpectrum,
    dt: f64,
    t_final: f64,
    burn_in: f64,
    observe_every: usize,
    stream: &NoiseStream,
) -> Result<StationaryReport> {
    if observe_every == 0 || !(burn_in < t_final) {
        return Err(Error::InvalidParameter(
            "stationary run needs a positive stride and burn-in below the final time".into(),
        ));
    }
    let grid = *spec.grid();
    let cfg = SolverConfig::new(dt, t_final, Scheme::ProxImplicit, None)?;
    let cfg = cfg.with_stride(cfg.n_steps())?;
    let modes: Vec<ScalarField> = (1..=spec.n_modes())
        .map(|k| Ok(spectral_mode(&grid, k)?.field))
        .collect::<Result<_>>()?;
    let mut squares: Vec<Vec<f64>> = vec![Vec::new(); modes.len()];
    run_trajectory_observed(
        &EquationSpec::PLaplace(PExponent::new(2.0)?),
        &cfg,
        spec,
        &grid.zeros(),
        stream,
        &mut |step, t, state| {
            if t < burn_in || step % observe_every != 0 {
                return;
            }
            for (s, e) in squares.iter_mut().zip(&modes) {
                let c = e.dot_h(state);
                s.push(c * c);
            }
        },
    )?;
    let rows = squares
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k = i + 1;
            let lam = spec.lambdas()[i];
            let mu = grid.discrete_eigenvalue(k);
            let observed = s.iter().sum::<f64>() / s.len() as f64;
            let expected = lam / (2.0 * mu);
            let std_error = batch_std_error(s);
            ModeVarianceRow {
                k,
                expected,
                scheme_expected: lam / (2.0 * mu + mu * mu * dt),
                observed,
                std_error,
                z: (observed - expected) / std_error,
            }
        })
        .collect();
    Ok(StationaryReport {
        dt,
        t_final,
        burn_in,
        rows,
    })
}

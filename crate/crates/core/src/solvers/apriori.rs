//! Ensemble a priori statistics: second moments, the time-integrated
//! resolvent statistic and the Jensen-type flux bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::convex_kernel::{radial_resolvent, PExponent, RegEps};
use crate::discrete_space::{gradient_values, resolvent_apply, ScalarField};
use crate::error::{Error, Result};
use crate::noise::{NoiseSpectrum, NoiseStream};

use super::trajectory::run_trajectory_observed;
use super::{EquationSpec, SolverConfig};

/// Desk-scale constant in front of `|x0|^2 + T |B|_HS^2 + 1`.
pub const APRIORI_ENVELOPE: f64 = 3.0;

/// `(sum_e h |r_eps(grad R_eps x)_e|^p, sum_e h |a_p^eps(grad R_eps x)_e|^2)`.
pub fn resolvent_statistics(p: PExponent, eps: RegEps, x: &ScalarField) -> Result<(f64, f64)> {
    let h = x.grid().h();
    let smooth = resolvent_apply(eps, x);
    let grad = gradient_values(smooth.values(), h);
    let (pv, ev) = (p.value(), eps.value());
    let mut s_r = 0.0;
    let mut s_a = 0.0;
    for g in grad {
        let r = radial_resolvent(pv, ev, g.abs())?;
        // a_p^eps(g) = (g - r_eps(g)) / eps
        let a = (g.abs() - r) / ev;
        s_r += h * r.powf(pv);
        s_a += h * a * a;
    }
    Ok((s_r, s_a))
}

#[derive(Clone, Debug, Serialize)]
pub struct AprioriReport {
    pub label: String,
    pub p: f64,
    pub eps: f64,
    pub n_paths: usize,
    pub times: Vec<f64>,
    /// Ensemble mean of `|X(t)|^2`.
    pub mean_l2_sq: Vec<f64>,
    /// Ensemble mean of `int_0^t S_r`.
    pub mean_resolvent_integral: Vec<f64>,
    pub envelope: f64,
    pub ito_ok: bool,
    pub resolvent_ok: bool,
    /// Largest `int S_a - (t |domain|)^(1-theta) (int S_r)^theta` over
    /// paths and times, with `theta = (2p - 2) / p`.
    pub jensen_worst: f64,
    pub jensen_ok: bool,
}

impl AprioriReport {
    pub fn passed(&self) -> bool {
        self.ito_ok && self.resolvent_ok && self.jensen_ok
    }
}

struct PathRecord {
    l2_sq: Vec<f64>,
    int_r: Vec<f64>,
    jensen_worst: f64,
}

/// Runs `n_paths` independent paths (stream ids `0..n_paths` under
/// `master_seed`) and checks the a priori envelopes. The statistics use
/// `eps_stat`, and are recorded every `record_every` steps; time integrals
/// use the left-point rule on every step.
#[allow(clippy::too_many_arguments)]
pub fn apriori_ensemble(
    eq: &EquationSpec,
    cfg: &SolverConfig,
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    master_seed: u64,
    n_paths: usize,
    eps_stat: RegEps,
    record_every: usize,
) -> Result<AprioriReport> {
    let p = match eq {
        EquationSpec::PLaplace(p) => *p,
        EquationSpec::FastDiffusion(_) => {
            return Err(Error::InvalidParameter(
                "a priori statistics are defined for the p-Laplace family".into(),
            ))
        }
    };
    if n_paths == 0 || record_every == 0 {
        return Err(Error::InvalidParameter(
            "path count and recording stride must be positive".into(),
        ));
    }
    let theta = (2.0 * p.value() - 2.0) / p.value();
    let length = spec.grid().length();
    let n_steps = cfg.n_steps();
    let dt = cfg.dt;
    let mut quiet = *cfg;
    quiet.snapshot_stride = n_steps.max(1);

    let records = (0..n_paths as u64)
        .into_par_iter()
        .map(|id| -> Result<PathRecord> {
            let stream = NoiseStream::new(master_seed, id);
            let mut rec = PathRecord {
                l2_sq: Vec::new(),
                int_r: Vec::new(),
                jensen_worst: f64::NEG_INFINITY,
            };
            let (mut int_r, mut int_a) = (0.0, 0.0);
            let mut failure = None;
            run_trajectory_observed(eq, &quiet, spec, x0, &stream, &mut |k, t, x| {
                if failure.is_some() {
                    return;
                }
                if k % record_every == 0 || k == n_steps {
                    rec.l2_sq.push(x.dot_h(x));
                    rec.int_r.push(int_r);
                    let bound = if t > 0.0 {
                        (t * length).powf(1.0 - theta) * int_r.powf(theta)
                    } else {
                        0.0
                    };
                    rec.jensen_worst = rec.jensen_worst.max(int_a - bound);
                }
                if k < n_steps {
                    match resolvent_statistics(p, eps_stat, x) {
                        Ok((sr, sa)) => {
                            int_r += dt * sr;
                            int_a += dt * sa;
                        }
                        Err(e) => failure = Some(e),
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let times: Vec<f64> = (0..=n_steps)
        .filter(|k| k % record_every == 0 || *k == n_steps)
        .map(|k| k as f64 * dt)
        .collect();
    let mean = |f: &dyn Fn(&PathRecord) -> &Vec<f64>| -> Vec<f64> {
        (0..times.len())
            .map(|i| records.iter().map(|r| f(r)[i]).sum::<f64>() / n_paths as f64)
            .collect()
    };
    let mean_l2_sq = mean(&|r| &r.l2_sq);
    let mean_resolvent_integral = mean(&|r| &r.int_r);
    let envelope = APRIORI_ENVELOPE * (x0.dot_h(x0) + cfg.t_final * spec.hs_norm_sq() + 1.0);
    let jensen_worst = records
        .iter()
        .map(|r| r.jensen_worst)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AprioriReport {
        label: eq.label(),
        p: p.value(),
        eps: eps_stat.value(),
        n_paths,
        ito_ok: mean_l2_sq.iter().all(|v| *v <= envelope),
        resolvent_ok: mean_resolvent_integral.iter().all(|v| *v <= envelope),
        jensen_ok: jensen_worst <= 1e-12,
        times,
        mean_l2_sq,
        mean_resolvent_integral,
        envelope,
        jensen_worst,
    })
}

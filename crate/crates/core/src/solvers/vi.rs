//! Pathwise check of the variational-inequality notion of solution.
//!
//! For a test process `Y(t) = Y(0) - t G + B W(t)` driven by the same noise
//! path as the candidate `X`, every `t` must satisfy
//!
//! `1/2 |X(t) - Y(t)|^2 + int_0^t (Phi(X) - Phi(Y)) <= 1/2 |x - Y(0)|^2 + int_0^t <G, X - Y>`.
//!
//! Integrals use the trapezoidal rule on the snapshot times.

use serde::Serialize;

use crate::convex_kernel::PExponent;
use crate::discrete_space::ScalarField;
use crate::energy::phi;
use crate::error::{Error, Result};
use crate::noise::{sample_increment, NoiseSpectrum, NoiseStream};

use super::Trajectory;

/// Test process data: initial value and constant drift.
#[derive(Clone, Debug)]
pub struct ViTestPair {
    pub y0: ScalarField,
    pub g: ScalarField,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViPairReport {
    /// `lhs - rhs` at each snapshot time; positive values violate.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ViReport {
    pub times: Vec<f64>,
    pub pairs: Vec<ViPairReport>,
    /// Largest positive margin over all pairs and times, zero if none.
    pub worst_violation: f64,
}

pub fn vi_check(
    candidate: &Trajectory,
    p: PExponent,
    test_pairs: &[ViTestPair],
    spec: &NoiseSpectrum,
    stream: &NoiseStream,
) -> Result<ViReport> {
    if candidate.stream != *stream {
        return Err(Error::InvalidParameter(
            "test processes must use the candidate's noise path".into(),
        ));
    }
    if test_pairs.is_empty() {
        return Err(Error::EmptyInput("vi check: no test pairs"));
    }
    let x0 = &candidate.snapshots[0];
    spec.grid().check_same(x0.grid())?;
    for pair in test_pairs {
        x0.grid().check_same(pair.y0.grid())?;
        x0.grid().check_same(pair.g.grid())?;
    }

    // cumulative noise at every snapshot step
    let last = *candidate.steps.last().expect("non-empty");
    let mut noise_at = Vec::with_capacity(candidate.steps.len());
    let mut acc = x0.grid().zeros();
    let mut next = 0;
    for k in 0..=last {
        while next < candidate.steps.len() && candidate.steps[next] == k {
            noise_at.push(acc.clone());
            next += 1;
        }
        if k < last {
            acc = acc.add(sample_increment(spec, candidate.dt, stream, k as u64)?.field());
        }
    }

    let times = candidate.times.clone();
    let mut pairs = Vec::with_capacity(test_pairs.len());
    let mut worst_violation: f64 = 0.0;
    for pair in test_pairs {
        let init = x0.sub(&pair.y0);
        let base = 0.5 * init.dot_h(&init);
        let mut margins = Vec::with_capacity(times.len());
        let mut int_phi = 0.0;
        let mut int_g = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (j, x) in candidate.snapshots.iter().enumerate() {
            let y = pair.y0.add_scaled(-times[j], &pair.g).add(&noise_at[j]);
            let diff = x.sub(&y);
            let f_phi = phi(p, x) - phi(p, &y);
            let f_g = pair.g.dot_h(&diff);
            if let Some((pp, pg)) = prev {
                let w = 0.5 * (times[j] - times[j - 1]);
                int_phi += w * (pp + f_phi);
                int_g += w * (pg + f_g);
            }
            prev = Some((f_phi, f_g));
            let margin = 0.5 * diff.dot_h(&diff) + int_phi - base - int_g;
            margins.push(margin);
        }
        let worst_margin = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        worst_violation = worst_violation.max(worst_margin);
        pairs.push(ViPairReport {
            margins,
            worst_margin,
        });
    }
    Ok(ViReport {
        times,
        pairs,
        worst_violation,
    })
}

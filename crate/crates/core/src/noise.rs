//! Spectrally colored Wiener noise with covariance `(-Delta)^(-1-delta)`.
//!
//! Increments are truncated Karhunen-Loeve sums over the first `K` Dirichlet
//! modes. Randomness is counter based: the normals for step `s` of stream
//! `id` come from a ChaCha generator keyed by `(master_seed, id, s)`, so any
//! increment can be regenerated without replaying the path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::discrete_space::{mode_table, Grid1D, ScalarField};
use crate::error::{Error, Result};

/// Covariance spectrum of the truncated noise.
#[derive(Clone, Debug)]
pub struct NoiseSpectrum {
    grid: Grid1D,
    delta: f64,
    kappa: f64,
    lambdas: Vec<f64>,
    hs_norm_sq: f64,
    trace_partial_sums: Vec<f64>,
    modes: Vec<Vec<f64>>,
}

pub fn build_spectrum(grid: &Grid1D, delta: f64, kappa: f64, modes: usize) -> Result<NoiseSpectrum> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be positive")));
    }
    if !(delta > 0.5 + kappa && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "delta must exceed 0.5+kappa (delta = {delta}, kappa = {kappa})"
        )));
    }
    if modes > grid.n_interior() {
        return Err(Error::InvalidParameter(format!(
            "{modes} noise modes exceed the {} interior nodes",
            grid.n_interior()
        )));
    }
    let lambdas: Vec<f64> = (1..=modes)
        .map(|k| grid.continuum_eigenvalue(k).powf(-1.0 - delta))
        .collect();
    let hs_norm_sq = lambdas.iter().sum();
    let mut acc = 0.0;
    let trace_partial_sums = lambdas
        .iter()
        .enumerate()
        .map(|(i, l)| {
            acc += l.powf(1.0 + kappa) * grid.continuum_eigenvalue(i + 1);
            acc
        })
        .collect();
    let mut table = mode_table(grid);
    table.truncate(modes);
    Ok(NoiseSpectrum {
        grid: *grid,
        delta,
        kappa,
        lambdas,
        hs_norm_sq,
        trace_partial_sums,
        modes: table,
    })
}

impl NoiseSpectrum {
    #[inline]
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// `lambda_k = mu_k^(-1-delta)` for `k = 1..=K`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `sum_k lambda_k`, the squared Hilbert-Schmidt norm of the truncation.
    pub fn hs_norm_sq(&self) -> f64 {
        self.hs_norm_sq
    }

    /// Partial sums of `lambda_k^(1+kappa) mu_k`.
    pub fn trace_partial_sums(&self) -> &[f64] {
        &self.trace_partial_sums
    }

    /// True when consecutive increments of the trace sums shrink.
    pub fn trace_increments_shrink(&self) -> bool {
        let inc: Vec<f64> = std::iter::once(self.trace_partial_sums.first().copied().unwrap_or(0.0))
            .chain(self.trace_partial_sums.windows(2).map(|w| w[1] - w[0]))
            .collect();
        inc.windows(2).all(|w| w[1] / w[0] < 1.0)
    }

    /// Sampled eigenfunction for mode `k` (1-based).
    pub fn mode(&self, k: usize) -> &[f64] {
        &self.modes[k - 1]
    }

    /// Field `sum_k sqrt(lambda_k) c_k e_k` for per-mode coefficients `c_k`.
    pub fn synthesize(&self, coeffs: &[f64]) -> ScalarField {
        let mut out = vec![0.0; self.grid.n_interior()];
        for ((lam, mode), c) in self.lambdas.iter().zip(&self.modes).zip(coeffs) {
            let a = lam.sqrt() * c;
            for (o, m) in out.iter_mut().zip(mode) {
                *o += a * m;
            }
        }
        ScalarField::from_vec_unchecked(self.grid, out)
    }
}

/// Identifies one reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NoiseStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Generator for step `step`; the same triple always yields the same
    /// numbers.
    pub fn rng_for_step(&self, step: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        seed[16..24].copy_from_slice(&step.to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }

    /// `count` standard normals for step `step`.
    pub fn normals(&self, step: u64, count: usize) -> Vec<f64> {
        let mut rng = self.rng_for_step(step);
        (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

/// A sampled noise increment `B (W(t + dt) - W(t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerIncrement {
    dt: f64,
    field: ScalarField,
}

impl WienerIncrement {
    pub fn new(dt: f64, field: ScalarField) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self { dt, field })
    }

    pub fn zero(grid: &Grid1D, dt: f64) -> Result<Self> {
        Self::new(dt, grid.zeros())
    }

    /// Increment built from per-mode Brownian increments `dbeta_k`.
    pub fn from_mode_increments(spec: &NoiseSpectrum, dt: f64, dbeta: &[f64]) -> Result<Self> {
        check_dt(dt)?;
        if dbeta.len() != spec.n_modes() {
            return Err(Error::InvalidParameter(format!(
                "{} mode increments for {} modes",
                dbeta.len(),
                spec.n_modes()
            )));
        }
        Ok(Self {
            dt,
            field: spec.synthesize(dbeta),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    Ok(())
}

/// `sum_k sqrt(lambda_k dt) xi_k e_k` with the normals of `(stream, step)`.
pub fn sample_increment(
    spec: &NoiseSpectrum,
    dt: f64,
    stream: &NoiseStream,
    step: u64,
) -> Result<WienerIncrement> {
    check_dt(dt)?;
    let sdt = dt.sqrt();
    let coeffs: Vec<f64> = stream
        .normals(step, spec.n_modes())
        .into_iter()
        .map(|z| z * sdt)
        .collect();
    Ok(WienerIncrement {
        dt,
        field: spec.synthesize(&coeffs),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IsometryReport {
    pub n_samples: usize,
    pub mean: f64,
    pub expected: f64,
    pub std_error: f64,
    pub z: f64,
    pub passed: bool,
}

/// Monte Carlo check of `E |B dW|^2 = dt ||B||_HS^2`.
pub fn isometry_selftest(
    spec: &NoiseSpectrum,
    dt: f64,
    n_samples: usize,
    stream: &NoiseStream,
) -> Result<IsometryReport> {
    check_dt(dt)?;
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "isometry self-test needs at least 100 samples, got {n_samples}"
        )));
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in 0..n_samples {
        let inc = sample_increment(spec, dt, stream, s as u64)?;
        let q = inc.field().dot_h(inc.field());
        sum += q;
        sum_sq += q * q;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    let std_error = (var / n).sqrt();
    let expected = dt * spec.hs_norm_sq();
    let z = if std_error > 0.0 {
        (mean - expected) / std_error
    } else if mean == expected {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(IsometryReport {
        n_samples,
        mean,
        expected,
        std_error,
        z,
        passed: z.abs() < 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n, 1.0).unwrap()
    }

    #[test]
    fn spectrum_formula() {
        let s = build_spectrum(&grid(16), 1.0, 0.1, 3).unwrap();
        let expected = [PI.powi(-4), (2.0 * PI).powi(-4), (3.0 * PI).powi(-4)];
        for (a, b) in s.lambdas().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15 * b.max(1e-300) + 1e-18);
        }
        assert!((s.hs_norm_sq() - expected.iter().sum::<f64>()).abs() < 1e-15);
        assert!(s.lambdas().windows(2).all(|w| w[1] < w[0]));
        assert!(s.trace_increments_shrink());
    }

    #[test]
    fn spectrum_rejects_bad_parameters() {
        let g = grid(8);
        let err = build_spectrum(&g, 0.3, 0.1, 2).unwrap_err().to_string();
        assert!(err.contains("delta must exceed 0.5+kappa"));
        assert!(build_spectrum(&g, 1.0, 0.0, 2).is_err());
        assert!(build_spectrum(&g, 1.0, 0.1, 9).is_err());
    }

    #[test]
    fn zero_modes_give_zero_field() {
        let s = build_spectrum(&grid(8), 1.0, 0.1, 0).unwrap();
        let inc = sample_increment(&s, 0.1, &NoiseStream::new(1, 2), 3).unwrap();
        assert_eq!(inc.field().max_abs(), 0.0);
        assert_eq!(s.hs_norm_sq(), 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = build_spectrum(&grid(16), 1.0, 0.1, 8).unwrap();
        let st = NoiseStream::new(42, 7);
        let a = sample_increment(&s, 0.01, &st, 11).unwrap();
        let b = sample_increment(&s, 0.01, &st, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_increment(&s, 0.01, &st, 12).unwrap();
        assert_ne!(a, c);
        let d = sample_increment(&s, 0.01, &NoiseStream::new(42, 8), 11).unwrap();
        assert_ne!(a, d);
        assert!(sample_increment(&s, 0.0, &st, 0).is_err());
    }

    #[test]
    fn isometry_monte_carlo() {
        let s = build_spectrum(&grid(16), 1.0, 0.1, 8).unwrap();
        let r = isometry_selftest(&s, 0.01, 100_000, &NoiseStream::new(5, 0)).unwrap();
        assert!(r.passed, "z = {}", r.z);
        assert!(isometry_selftest(&s, 0.0, 1000, &NoiseStream::new(5, 0)).is_err());
        assert!(isometry_selftest(&s, 0.01, 99, &NoiseStream::new(5, 0)).is_err());
    }

    #[test]
    fn single_mode_isometry() {
        // |field|^2 = lambda_1 dt xi^2: mean lambda_1 dt, variance 2 (lambda_1 dt)^2
        let s = build_spectrum(&grid(16), 1.0, 0.1, 1).unwrap();
        let dt = 0.02;
        let n = 20_000;
        let r = isometry_selftest(&s, dt, n, &NoiseStream::new(8, 1)).unwrap();
        let l = s.lambdas()[0] * dt;
        assert!((r.expected - l).abs() < 1e-18);
        let exact_se = (2.0 * l * l / n as f64).sqrt();
        assert!((r.std_error / exact_se - 1.0).abs() < 0.1);
        assert!(r.passed);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn modes_are_independent_with_correct_variance() {
        let s = build_spectrum(&grid(16), 1.0, 0.1, 4).unwrap();
        let dt = 0.01;
        let st = NoiseStream::new(99, 3);
        let n = 100_000;
        let mut sums = [[0.0; 4]; 4];
        for step in 0..n {
            let inc = sample_increment(&s, dt, &st, step as u64).unwrap();
            let coords: Vec<f64> = (1..=4)
                .map(|k| {
                    let m = ScalarField::new(*s.grid(), s.mode(k).to_vec()).unwrap();
                    inc.field().dot_h(&m)
                })
                .collect();
            for j in 0..4 {
                for k in 0..4 {
                    sums[j][k] += coords[j] * coords[k];
                }
            }
        }
        let nf = n as f64;
        for j in 0..4 {
            let vj = s.lambdas()[j] * dt;
            let var = sums[j][j] / nf;
            assert!((var - vj).abs() < 4.0 * vj * (2.0 / nf).sqrt(), "mode {}", j + 1);
            for k in 0..4 {
                if k != j {
                    let vk = s.lambdas()[k] * dt;
                    let cov = sums[j][k] / nf;
                    assert!(cov.abs() < 4.0 * (vj * vk / nf).sqrt(), "({j}, {k})");
                }
            }
        }
    }

    #[test]
    fn mode_increments_synthesize_field() {
        let s = build_spectrum(&grid(8), 1.5, 0.2, 2).unwrap();
        let inc = WienerIncrement::from_mode_increments(&s, 0.1, &[1.0, -2.0]).unwrap();
        let expected: Vec<f64> = (0..8)
            .map(|i| s.lambdas()[0].sqrt() * s.mode(1)[i] - 2.0 * s.lambdas()[1].sqrt() * s.mode(2)[i])
            .collect();
        for (a, b) in inc.field().values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(WienerIncrement::from_mode_increments(&s, 0.1, &[1.0]).is_err());
    }
}

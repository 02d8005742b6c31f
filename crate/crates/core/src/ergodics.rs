//! Time averages along long paths and diagnostics for invariant measures.

use rayon::prelude::*;
use serde::Serialize;

use crate::convex_kernel::PExponent;
use crate::discrete_space::{w1p_power, total_variation, ScalarField};
use crate::error::{Error, Result};
use crate::noise::{NoiseSpectrum, NoiseStream};
use crate::solvers::trajectory::run_trajectory_observed;
use crate::solvers::{EquationSpec, SolverConfig, Trajectory};

/// Number of batches for batch-means standard errors.
pub const N_BATCHES: usize = 20;

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionalKind {
    Constant { value: f64 },
    /// `exp(-|x - c|^2 / w^2)`.
    GaussianBump { center: Vec<f64>, width: f64 },
    /// `tanh((<x, e_k> / s)^2)`.
    ModeTanh { k: usize, scale: f64 },
}

/// A bounded continuous functional on fields, `|F| <= 1`.
#[derive(Clone, Debug, Serialize)]
pub struct TestFunctional {
    pub id: String,
    pub kind: FunctionalKind,
    /// Lipschitz constant with respect to the `h`-weighted `L^2` norm.
    pub lipschitz: f64,
    #[serde(skip)]
    mode: Option<ScalarField>,
}

impl TestFunctional {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "constant functional {value} is not bounded by 1"
            )));
        }
        Ok(Self {
            id: format!("const({value})"),
            kind: FunctionalKind::Constant { value },
            lipschitz: 0.0,
            mode: None,
        })
    }

    pub fn gaussian_bump(center: ScalarField, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidParameter(format!("bump width {width} must be positive")));
        }
        let id = format!("bump(|c|={:.4},w={:.4})", center.l2_norm(), width);
        Ok(Self {
            id,
            // max of |d/dr exp(-r^2/w^2)| is sqrt(2/e) / w
            lipschitz: (2.0 / std::f64::consts::E).sqrt() / width,
            kind: FunctionalKind::GaussianBump {
                center: center.clone().into_values(),
                width,
            },
            mode: Some(center),
        })
    }

    pub fn mode_tanh(spec: &NoiseSpectrum, k: usize, scale: f64) -> Result<Self> {
        if k == 0 || k > spec.grid().n_interior() {
            return Err(Error::InvalidParameter(format!("mode index {k} out of range")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("tanh scale {scale} must be positive")));
        }
        let mode = crate::discrete_space::spectral_mode(spec.grid(), k)?.field;
        // sup_u 2u sech^2(u^2) / s, located numerically
        let peak = (1..2000)
            .map(|i| {
                let u = i as f64 * 1e-3;
                2.0 * u / (u * u).cosh().powi(2)
            })
            .fold(0.0, f64::max);
        Ok(Self {
            id: format!("tanh(k={k},s={scale:.4e})"),
            kind: FunctionalKind::ModeTanh { k, scale },
            lipschitz: peak / scale,
            mode: Some(mode),
        })
    }

    pub fn eval(&self, x: &ScalarField) -> f64 {
        match &self.kind {
            FunctionalKind::Constant { value } => *value,
            FunctionalKind::GaussianBump { width, .. } => {
                let c = self.mode.as_ref().expect("bump stores its center");
                let d = x.sub(c);
                (-d.dot_h(&d) / (width * width)).exp()
            }
            FunctionalKind::ModeTanh { scale, .. } => {
                let e = self.mode.as_ref().expect("tanh stores its mode");
                let c = x.dot_h(e) / scale;
                (c * c).tanh()
            }
        }
    }
}

/// Stationary standard deviation `sqrt(lambda_k / (2 mu_k^h))` of mode `k`
/// for the linear equation.
pub fn linear_mode_std(spec: &NoiseSpectrum, k: usize) -> f64 {
    (spec.lambdas()[k - 1] / (2.0 * spec.grid().discrete_eigenvalue(k))).sqrt()
}

/// Default panel of eight functionals scaled to the linear stationary law:
/// four bumps and four mode statistics.
pub fn default_panel(spec: &NoiseSpectrum) -> Result<Vec<TestFunctional>> {
    let modes = spec.n_modes().min(4);
    if modes == 0 {
        return Err(Error::InvalidParameter("default panel needs noise modes".into()));
    }
    let total: f64 = (1..=spec.n_modes())
        .map(|k| linear_mode_std(spec, k).powi(2))
        .sum::<f64>()
        .sqrt();
    let grid = spec.grid();
    let e = |k: usize| crate::discrete_space::spectral_mode(grid, k).map(|m| m.field);
    let s1 = linear_mode_std(spec, 1);
    let k2 = modes.min(2);
    let mut panel = vec![
        TestFunctional::gaussian_bump(grid.zeros(), 2.0 * total)?,
        TestFunctional::gaussian_bump(e(1)?.scaled(s1), 2.0 * total)?,
        TestFunctional::gaussian_bump(e(1)?.scaled(-s1), total)?,
        TestFunctional::gaussian_bump(e(k2)?.scaled(linear_mode_std(spec, k2)), total)?,
    ];
    for k in 1..=4 {
        let kk = k.min(modes);
        panel.push(TestFunctional::mode_tanh(spec, kk, linear_mode_std(spec, kk) * (k as f64 / kk as f64))?);
    }
    Ok(panel)
}

/// Running sums for time averages after a burn-in.
#[derive(Clone, Debug)]
pub struct ErgodicAccumulator {
    burn_in: f64,
    p: PExponent,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    moments: Vec<f64>,
}

impl ErgodicAccumulator {
    pub fn new(burn_in: f64, p: PExponent, panel_len: usize) -> Self {
        Self {
            burn_in,
            p,
            times: Vec::new(),
            values: vec![Vec::new(); panel_len],
            moments: Vec::new(),
        }
    }

    /// Records `state` at time `t`; states before the burn-in are ignored.
    pub fn push(&mut self, t: f64, state: &ScalarField, panel: &[TestFunctional]) {
        if t < self.burn_in {
            return;
        }
        self.times.push(t);
        for (series, f) in self.values.iter_mut().zip(panel) {
            series.push(f.eval(state));
        }
        self.moments.push(sobolev_moment(self.p, state));
    }

    pub fn count(&self) -> usize {
        self.times.len()
    }

    fn check(&self) -> Result<()> {
        if self.times.len() < 2 {
            return Err(Error::InvalidParameter(
                "fewer than two observations after the burn-in".into(),
            ));
        }
        Ok(())
    }

    /// Trapezoidal time averages of every functional.
    pub fn averages(&self) -> Result<Vec<f64>> {
        self.check()?;
        Ok(self.values.iter().map(|s| trapezoid_mean(&self.times, s)).collect())
    }

    /// Batch-means standard errors of every functional.
    pub fn std_errors(&self) -> Result<Vec<f64>> {
        self.check()?;
        Ok(self.values.iter().map(|s| batch_std_error(s)).collect())
    }

    pub fn series(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Time average of `|X|_{1,p}^p`.
    pub fn moment_average(&self) -> Result<f64> {
        self.check()?;
        Ok(trapezoid_mean(&self.times, &self.moments))
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }
}

/// `|x|_{1,p}^p`, the `p`-th power of the Sobolev seminorm (TV for `p = 1`).
pub fn sobolev_moment(p: PExponent, x: &ScalarField) -> f64 {
    if p.is_one() {
        total_variation(x)
    } else {
        w1p_power(x, p.value())
    }
}

fn trapezoid_mean(times: &[f64], values: &[f64]) -> f64 {
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return values.iter().sum::<f64>() / values.len() as f64;
    }
    let mut acc = 0.0;
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
    }
    acc / span
}

/// Standard error of the mean from `N_BATCHES` contiguous batch means.
pub fn batch_std_error(series: &[f64]) -> f64 {
    let b = N_BATCHES.min(series.len());
    if b < 2 {
        return f64::INFINITY;
    }
    let size = series.len() / b;
    let means: Vec<f64> = (0..b)
        .map(|i| series[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b as f64 - 1.0);
    (var / b as f64).sqrt()
}

/// Trapezoidal time average of `F` over the snapshots with `t >= burn_in`.
pub fn time_average(traj: &Trajectory, f: &TestFunctional, burn_in: f64) -> Result<f64> {
    if traj.duration() <= burn_in {
        return Err(Error::InvalidParameter(format!(
            "trajectory of length {} does not exceed the burn-in {burn_in}",
            traj.duration()
        )));
    }
    let (times, values): (Vec<f64>, Vec<f64>) = traj
        .times
        .iter()
        .zip(&traj.snapshots)
        .filter(|(t, _)| **t >= burn_in)
        .map(|(t, x)| (*t, f.eval(x)))
        .unzip();
    if times.is_empty() {
        return Err(Error::InvalidParameter("no snapshots after the burn-in".into()));
    }
    Ok(trapezoid_mean(&times, &values))
}

/// `max_j |a_j - b_j|` over a shared panel.
pub fn weak_distance(avg_a: &[f64], avg_b: &[f64]) -> Result<f64> {
    if avg_a.len() != avg_b.len() {
        return Err(Error::InvalidParameter(format!(
            "panel sizes differ: {} vs {}",
            avg_a.len(),
            avg_b.len()
        )));
    }
    if avg_a.is_empty() {
        return Err(Error::EmptyInput("weak distance: empty panel"));
    }
    Ok(avg_a
        .iter()
        .zip(avg_b)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct TightnessRow {
    pub theta: f64,
    /// Radius `1/theta + |domain|` of the compact set.
    pub radius: f64,
    /// Fraction of observation time spent outside the set.
    pub outside_fraction: f64,
    /// Markov bound `theta * E|X|_{1,p}^p` on that fraction.
    pub markov_bound: f64,
    /// `theta * |B|_HS^2`.
    pub noise_bound: f64,
    pub markov_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TightnessReport {
    pub p: f64,
    pub moment_average: f64,
    pub hs_norm_sq: f64,
    pub envelope: f64,
    /// `E|X|_{1,p}^p <= envelope * |B|_HS^2`.
    pub moment_ok: bool,
    pub rows: Vec<TightnessRow>,
}

/// Envelope factor for desk-scale moment comparisons.
pub const DESK_ENVELOPE: f64 = 3.0;

/// Markov-inequality bookkeeping for the sets
/// `K_theta = { |x|_{1,p}^p <= 1/theta + |domain| }`.
pub fn tightness_report(
    acc: &ErgodicAccumulator,
    spec: &NoiseSpectrum,
    thetas: &[f64],
) -> Result<TightnessReport> {
    acc.check()?;
    if thetas.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("theta must be positive".into()));
    }
    let times = acc.times();
    let moments = acc.moments();
    let moment_average = trapezoid_mean(times, moments);
    let length = spec.grid().length();
    let rows = thetas
        .iter()
        .map(|&theta| {
            let radius = 1.0 / theta + length;
            let indicator: Vec<f64> = moments
                .iter()
                .map(|m| if *m > radius { 1.0 } else { 0.0 })
                .collect();
            let outside_fraction = trapezoid_mean(times, &indicator);
            let markov_bound = theta * moment_average;
            TightnessRow {
                theta,
                radius,
                outside_fraction,
                markov_bound,
                noise_bound: theta * spec.hs_norm_sq(),
                markov_ok: outside_fraction <= markov_bound + 1e-12,
            }
        })
        .collect();
    Ok(TightnessReport {
        p: acc.p.value(),
        moment_average,
        hs_norm_sq: spec.hs_norm_sq(),
        envelope: DESK_ENVELOPE,
        moment_ok: moment_average <= DESK_ENVELOPE * spec.hs_norm_sq(),
        rows,
    })
}

impl TightnessReport {
    pub fn passed(&self) -> bool {
        self.moment_ok && self.rows.iter().all(|r| r.markov_ok)
    }
}

/// Parameters of the long runs behind the invariant-measure diagnostics.
#[derive(Clone, Debug)]
pub struct ErgodicRunConfig {
    pub solver: SolverConfig,
    pub burn_in: f64,
    /// Observe every this many steps.
    pub observe_every: usize,
    pub x0: ScalarField,
    pub stream: NoiseStream,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentRow {
    pub p: f64,
    pub averages: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub distance_to_limit: f64,
    /// Batch-means error of the distance from the paired difference series.
    pub distance_error: f64,
    pub conjectural: bool,
    pub tightness: TightnessReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantReport {
    pub p_limit: f64,
    pub burn_in: f64,
    pub panel: Vec<String>,
    pub limit: ExponentRow,
    pub rows: Vec<ExponentRow>,
    /// Distances shrink with `|p - p_limit|` within two error bands.
    pub trend_ok: bool,
}

/// Runs one long path per exponent on a shared noise path (common random
/// numbers) and compares panel averages against the limit exponent.
pub fn invariant_convergence(
    p_seq: &[PExponent],
    p_limit: PExponent,
    panel: &[TestFunctional],
    spec: &NoiseSpectrum,
    run: &ErgodicRunConfig,
    thetas: &[f64],
) -> Result<InvariantReport> {
    if panel.is_empty() {
        return Err(Error::EmptyInput("invariant convergence: empty panel"));
    }
    if p_seq.is_empty() {
        return Err(Error::EmptyInput("invariant convergence: no exponents"));
    }
    if run.observe_every == 0 {
        return Err(Error::InvalidParameter("observation stride must be positive".into()));
    }
    if run.solver.t_final <= run.burn_in {
        return Err(Error::InvalidParameter(format!(
            "run length {} does not exceed the burn-in {}",
            run.solver.t_final, run.burn_in
        )));
    }
    let mut all: Vec<PExponent> = p_seq.to_vec();
    all.push(p_limit);
    let accs = all
        .par_iter()
        .map(|&p| {
            let mut acc = ErgodicAccumulator::new(run.burn_in, p, panel.len());
            let eq = EquationSpec::PLaplace(p);
            let mut cfg = run.solver;
            cfg.snapshot_stride = cfg.n_steps().max(1);
            run_trajectory_observed(&eq, &cfg, spec, &run.x0, &run.stream, &mut |k, t, x| {
                if k % run.observe_every == 0 {
                    acc.push(t, x, panel);
                }
            })?;
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let limit_acc = accs.last().expect("limit run");
    let limit_avg = limit_acc.averages()?;

    let make_row = |p: PExponent, acc: &ErgodicAccumulator| -> Result<ExponentRow> {
        let averages = acc.averages()?;
        let distance_to_limit = weak_distance(&averages, &limit_avg)?;
        let distance_error = (0..panel.len())
            .map(|j| {
                let diff: Vec<f64> = acc
                    .series(j)
                    .iter()
                    .zip(limit_acc.series(j))
                    .map(|(a, b)| a - b)
                    .collect();
                batch_std_error(&diff)
            })
            .fold(0.0, f64::max);
        Ok(ExponentRow {
            p: p.value(),
            std_errors: acc.std_errors()?,
            averages,
            distance_to_limit,
            distance_error,
            conjectural: p.is_one(),
            tightness: tightness_report(acc, spec, thetas)?,
        })
    };
    let rows = p_seq
        .iter()
        .zip(&accs)
        .map(|(p, acc)| make_row(*p, acc))
        .collect::<Result<Vec<_>>>()?;
    let limit = make_row(p_limit, limit_acc)?;

    let mut order: Vec<&ExponentRow> = rows.iter().collect();
    order.sort_by(|a, b| {
        (b.p - p_limit.value())
            .abs()
            .total_cmp(&(a.p - p_limit.value()).abs())
    });
    let trend_ok = order.windows(2).all(|w| {
        let (far, near) = (w[0], w[1]);
        near.distance_to_limit
            <= far.distance_to_limit + 2.0 * far.distance_error.max(near.distance_error)
    });
    Ok(InvariantReport {
        p_limit: p_limit.value(),
        burn_in: run.burn_in,
        panel: panel.iter().map(|f| f.id.clone()).collect(),
        limit,
        rows,
        trend_ok,
    })
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.trend_ok && self.rows.iter().all(|r| r.tightness.passed())
    }

    /// CSV rows `p,functional_id,average,stderr,distance_to_limit`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("p,functional_id,average,stderr,distance_to_limit\n");
        for row in self.rows.iter().chain(std::iter::once(&self.limit)) {
            for (j, id) in self.panel.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{:.17e},{:.17e},{:.17e}",
                    row.p, id, row.averages[j], row.std_errors[j], row.distance_to_limit
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_space::Grid1D;
    use crate::noise::build_spectrum;
    use crate::solvers::{run_trajectory, Scheme};

    fn p(v: f64) -> PExponent {
        PExponent::new(v).unwrap()
    }

    #[test]
    fn functionals_are_bounded() {
        let g = Grid1D::new(16, 1.0).unwrap();
        let spec = build_spectrum(&g, 1.0, 0.1, 8).unwrap();
        let panel = default_panel(&spec).unwrap();
        assert_eq!(panel.len(), 8);
        let x = ScalarField::from_fn(g, |x| 5.0 * (9.0 * x).sin());
        for f in &panel {
            let v = f.eval(&x);
            assert!((-1.0..=1.0).contains(&v));
            assert!((-1.0..=1.0).contains(&f.eval(&g.zeros())));
            assert!(f.lipschitz > 0.0 && f.lipschitz.is_finite());
        }
        assert!(TestFunctional::constant(1.5).is_err());
        assert!(TestFunctional::gaussian_bump(g.zeros(), 0.0).is_err());
    }

    #[test]
    fn lipschitz_constants_bound_differences() {
        let g = Grid1D::new(16, 1.0).unwrap();
        let spec = build_spectrum(&g, 1.0, 0.1, 8).unwrap();
        let panel = default_panel(&spec).unwrap();
        let a = ScalarField::from_fn(g, |x| 0.01 * (3.0 * x).sin());
        let b = ScalarField::from_fn(g, |x| 0.012 * (3.0 * x).sin() - 0.001 * x);
        for f in &panel {
            let lhs = (f.eval(&a) - f.eval(&b)).abs();
            assert!(lhs <= f.lipschitz * a.sub(&b).l2_norm() + 1e-15, "{}", f.id);
        }
    }

    #[test]
    fn constant_functional_averages_and_distances() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let spec = build_spectrum(&g, 1.0, 0.1, 4).unwrap();
        let cfg = SolverConfig::new(0.01, 1.0, Scheme::ProxImplicit, None)
            .unwrap()
            .with_stride(1)
            .unwrap();
        let eq = EquationSpec::p_laplace(1.5).unwrap();
        let t = run_trajectory(&eq, &cfg, &spec, &g.zeros(), &NoiseStream::new(1, 0)).unwrap();
        let one = TestFunctional::constant(1.0).unwrap();
        assert!((time_average(&t, &one, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!(time_average(&t, &one, 1.0).is_err());
        assert_eq!(weak_distance(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
        assert!(weak_distance(&[0.3], &[0.3, 0.1]).is_err());
        assert!(weak_distance(&[], &[]).is_err());
    }

    #[test]
    fn deterministic_decay_gives_bump_value_one() {
        let g = Grid1D::new(16, 1.0).unwrap();
        let spec = build_spectrum(&g, 1.0, 0.1, 0).unwrap();
        let x0 = ScalarField::from_fn(g, |x| (std::f64::consts::PI * x).sin());
        let cfg = SolverConfig::new(0.01, 5.0, Scheme::ProxImplicit, None)
            .unwrap()
            .with_stride(1)
            .unwrap();
        let eq = EquationSpec::p_laplace(2.0).unwrap();
        let t = run_trajectory(&eq, &cfg, &spec, &x0, &NoiseStream::new(0, 0)).unwrap();
        let bump = TestFunctional::gaussian_bump(g.zeros(), 0.5).unwrap();
        let avg = time_average(&t, &bump, 1.0).unwrap();
        assert!((avg - 1.0).abs() < 1e-6, "{avg}");
    }

    #[test]
    fn tightness_fraction_grows_with_theta() {
        let g = Grid1D::new(16, 1.0).unwrap();
        let spec = build_spectrum(&g, 0.6, 0.05, 8).unwrap();
        let mut acc = ErgodicAccumulator::new(0.0, p(1.5), 0);
        let mut rng_state = 0.3f64;
        for i in 0..400 {
            rng_state = (rng_state * 3.9 * (1.0 - rng_state)).clamp(1e-6, 1.0 - 1e-6);
            let x = ScalarField::from_fn(g, |x| 0.4 * rng_state * (std::f64::consts::PI * x).sin());
            acc.push(i as f64 * 0.01, &x, &[]);
        }
        let thetas = [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];
        let r = tightness_report(&acc, &spec, &thetas).unwrap();
        let fr: Vec<f64> = r.rows.iter().map(|row| row.outside_fraction).collect();
        assert!(fr.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(fr[0], 0.0);
        assert!(r.rows.iter().all(|row| row.markov_ok));
        assert!(tightness_report(&acc, &spec, &[0.0]).is_err());
    }

    #[test]
    fn zero_noise_tightness_is_trivial() {
        let g = Grid1D::new(16, 1.0).unwrap();
        let spec = build_spectrum(&g, 1.0, 0.1, 0).unwrap();
        let mut acc = ErgodicAccumulator::new(0.0, p(2.0), 0);
        for i in 0..10 {
            acc.push(i as f64, &g.zeros(), &[]);
        }
        let r = tightness_report(&acc, &spec, &[1.0, 10.0, 100.0]).unwrap();
        assert_eq!(r.moment_average, 0.0);
        assert!(r.rows.iter().all(|row| row.outside_fraction == 0.0));
        assert!(r.passed());
    }

    #[test]
    fn batch_errors_shrink_like_root_n() {
        let series: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let a = batch_std_error(&series[..1000]);
        let b = batch_std_error(&series);
        assert!(b < a);
        assert_eq!(batch_std_error(&[1.0]), f64::INFINITY);
    }

    #[test]
    fn invariant_convergence_rejects_empty_panel() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let spec = build_spectrum(&g, 1.0, 0.1, 4).unwrap();
        let run = ErgodicRunConfig {
            solver: SolverConfig::new(0.01, 1.0, Scheme::ProxImplicit, None).unwrap(),
            burn_in: 0.25,
            observe_every: 1,
            x0: g.zeros(),
            stream: NoiseStream::new(1, 0),
        };
        assert!(invariant_convergence(&[p(1.5)], p(1.5), &[], &spec, &run, &[1.0]).is_err());
        let panel = default_panel(&spec).unwrap();
        let r = invariant_convergence(&[p(1.5)], p(1.5), &panel, &spec, &run, &[1.0]).unwrap();
        assert_eq!(r.rows[0].distance_to_limit, 0.0);
        assert!(r.trend_ok);
    }
}

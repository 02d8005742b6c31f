//! Time loops: single trajectories and coupled runs on one noise path.

use serde::Serialize;

use crate::discrete_space::{norm, NormKind, ScalarField};
use crate::error::{Error, Result};
use crate::noise::{sample_increment, NoiseSpectrum, NoiseStream};

use super::{EquationSpec, SolverConfig, Stepper};

/// Statistics gathered at every step.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunStats {
    pub sup_l2: f64,
    pub sup_hminus1: f64,
    pub steps: usize,
}

/// A recorded path.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub eq: EquationSpec,
    pub dt: f64,
    pub stream: NoiseStream,
    /// Step index of each snapshot; `times[i] = steps[i] * dt`.
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub snapshots: Vec<ScalarField>,
    /// Energy of the equation at each snapshot.
    pub energies: Vec<f64>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &ScalarField {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// CSV rows `t,L2_norm,Hminus1_norm,energy,sup_error_vs_limit`; the last
    /// column is filled from `reference` when given.
    pub fn to_csv_rows(&self, reference: Option<&Trajectory>) -> Result<Vec<[f64; 5]>> {
        let mut rows = Vec::with_capacity(self.snapshots.len());
        let mut sup: f64 = 0.0;
        for (i, snap) in self.snapshots.iter().enumerate() {
            let err = match reference {
                Some(r) => {
                    let other = r.snapshots.get(i).ok_or_else(|| {
                        Error::GridMismatch("reference trajectory is shorter".into())
                    })?;
                    sup = sup.max(norm(&snap.sub(other), self.eq.state_norm())?);
                    sup
                }
                None => f64::NAN,
            };
            rows.push([
                self.times[i],
                snap.l2_norm(),
                norm(snap, NormKind::Hminus1)?,
                self.energies[i],
                err,
            ]);
        }
        Ok(rows)
    }
}

fn check_inputs(spec: &NoiseSpectrum, x0: &ScalarField) -> Result<()> {
    spec.grid().check_same(x0.grid())?;
    if !x0.is_finite() {
        return Err(Error::InvalidParameter("initial state is not finite".into()));
    }
    Ok(())
}

fn non_finite(step: usize, dt: f64, label: &str, state: &ScalarField) -> Error {
    let bad = state.values().iter().position(|v| !v.is_finite()).unwrap_or(0);
    Error::NonFinite {
        step,
        time: step as f64 * dt,
        detail: format!("{label}: node {bad} is {}", state.values()[bad]),
    }
}

/// Integrates one equation from `x0`; records a snapshot at step 0, every
/// `snapshot_stride` steps and at the final step.
pub fn run_trajectory(
    eq: &EquationSpec,
    cfg: &SolverConfig,
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    stream: &NoiseStream,
) -> Result<Trajectory> {
    run_trajectory_observed(eq, cfg, spec, x0, stream, &mut |_, _, _| {})
}

/// [`run_trajectory`] that also hands every state (including the initial
/// one) to `observer(step, time, state)`.
pub fn run_trajectory_observed(
    eq: &EquationSpec,
    cfg: &SolverConfig,
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    stream: &NoiseStream,
    observer: &mut dyn FnMut(usize, f64, &ScalarField),
) -> Result<Trajectory> {
    check_inputs(spec, x0)?;
    let mut stepper = Stepper::new(eq, cfg)?;
    let n_steps = cfg.n_steps();
    let dt = cfg.dt;
    let mut traj = Trajectory {
        eq: *eq,
        dt,
        stream: *stream,
        steps: vec![0],
        times: vec![0.0],
        snapshots: vec![x0.clone()],
        energies: vec![eq.energy(x0)],
        stats: RunStats {
            sup_l2: x0.l2_norm(),
            sup_hminus1: norm(x0, NormKind::Hminus1)?,
            steps: 0,
        },
    };
    observer(0, 0.0, x0);
    let mut state = x0.clone();
    for k in 0..n_steps {
        let dw = sample_increment(spec, dt, stream, k as u64)?;
        state = stepper.step(dt, &state, &dw)?;
        let step = k + 1;
        if !state.is_finite() {
            return Err(non_finite(step, dt, &eq.label(), &state));
        }
        let t = step as f64 * dt;
        traj.stats.sup_l2 = traj.stats.sup_l2.max(state.l2_norm());
        traj.stats.sup_hminus1 = traj.stats.sup_hminus1.max(norm(&state, NormKind::Hminus1)?);
        traj.stats.steps = step;
        observer(step, t, &state);
        if step % cfg.snapshot_stride == 0 || step == n_steps {
            traj.steps.push(step);
            traj.times.push(t);
            traj.energies.push(eq.energy(&state));
            traj.snapshots.push(state.clone());
        }
    }
    Ok(traj)
}

/// Pathwise distances between the members of a coupled run.
#[derive(Clone, Debug, Serialize)]
pub struct CoupledReport {
    pub labels: Vec<String>,
    pub limit_index: usize,
    /// `sup_t |X_i(t) - X_limit(t)|` in the state norm.
    pub sup_vs_limit: Vec<f64>,
    /// `sup_t |X_i(t) - X_j(t)|` for every pair.
    pub pairwise_sup: Vec<Vec<f64>>,
    pub final_states: Vec<Vec<f64>>,
}

/// Runs all members on the same Wiener increments and records sup-in-time
/// distances between them, in `L^2` for p-Laplace and `H^-1` for fast
/// diffusion. Members may differ in scheme but must share `dt` and the
/// final time.
pub fn coupled_sup_error(
    members: &[(EquationSpec, SolverConfig)],
    limit_index: usize,
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    stream: &NoiseStream,
) -> Result<CoupledReport> {
    coupled_sup_error_observed(members, limit_index, spec, x0, stream, &mut |_, _, _| {})
}

pub fn coupled_sup_error_observed(
    members: &[(EquationSpec, SolverConfig)],
    limit_index: usize,
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    stream: &NoiseStream,
    observer: &mut dyn FnMut(usize, f64, &[ScalarField]),
) -> Result<CoupledReport> {
    if members.is_empty() {
        return Err(Error::EmptyInput("coupled run: no members"));
    }
    if limit_index >= members.len() {
        return Err(Error::InvalidParameter(format!(
            "limit index {limit_index} out of range"
        )));
    }
    check_inputs(spec, x0)?;
    let (eq0, cfg0) = members[0];
    for (eq, cfg) in members {
        if !eq.same_family(&eq0) {
            return Err(Error::InvalidParameter(
                "coupled members must share the equation family".into(),
            ));
        }
        if cfg.dt != cfg0.dt || cfg.n_steps() != cfg0.n_steps() {
            return Err(Error::InvalidParameter(
                "coupled members must share dt and final time".into(),
            ));
        }
    }
    let kind = eq0.state_norm();
    let mut steppers = members
        .iter()
        .map(|(eq, cfg)| Stepper::new(eq, cfg))
        .collect::<Result<Vec<_>>>()?;
    let m = members.len();
    let dt = cfg0.dt;
    let mut states = vec![x0.clone(); m];
    let mut pairwise = vec![vec![0.0f64; m]; m];
    observer(0, 0.0, &states);
    for k in 0..cfg0.n_steps() {
        let dw = sample_increment(spec, dt, stream, k as u64)?;
        for (i, stepper) in steppers.iter_mut().enumerate() {
            let next = stepper.step(dt, &states[i], &dw)?;
            if !next.is_finite() {
                return Err(non_finite(k + 1, dt, &members[i].0.label(), &next));
            }
            states[i] = next;
        }
        for i in 0..m {
            for j in i + 1..m {
                let d = norm(&states[i].sub(&states[j]), kind)?;
                if d > pairwise[i][j] {
                    pairwise[i][j] = d;
                    pairwise[j][i] = d;
                }
            }
        }
        observer(k + 1, (k + 1) as f64 * dt, &states);
    }
    Ok(CoupledReport {
        labels: members.iter().map(|(eq, _)| eq.label()).collect(),
        limit_index,
        sup_vs_limit: (0..m).map(|i| pairwise[i][limit_index]).collect(),
        pairwise_sup: pairwise,
        final_states: states.into_iter().map(|s| s.into_values()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_space::{spectral_mode, Grid1D};
    use crate::noise::build_spectrum;
    use crate::solvers::Scheme;

    fn setup(n: usize, modes: usize) -> (Grid1D, NoiseSpectrum) {
        let g = Grid1D::new(n, 1.0).unwrap();
        let s = build_spectrum(&g, 1.0, 0.1, modes).unwrap();
        (g, s)
    }

    #[test]
    fn single_step_run() {
        let (g, s) = setup(8, 4);
        let cfg = SolverConfig::new(0.01, 0.01, Scheme::ProxImplicit, None).unwrap();
        let eq = EquationSpec::p_laplace(1.5).unwrap();
        let t = run_trajectory(&eq, &cfg, &s, &g.zeros(), &NoiseStream::new(1, 0)).unwrap();
        assert_eq!(t.stats.steps, 1);
        assert_eq!(t.steps, vec![0, 1]);
    }

    #[test]
    fn heat_flow_decays_like_first_mode() {
        let (g, s) = setup(32, 0);
        let e1 = spectral_mode(&g, 1).unwrap();
        let eq = EquationSpec::p_laplace(2.0).unwrap();
        let stream = NoiseStream::new(0, 0);
        let mut errs = Vec::new();
        for dt in [1e-3, 5e-4] {
            let cfg = SolverConfig::new(dt, 0.1, Scheme::ProxImplicit, None)
                .unwrap()
                .with_stride(1)
                .unwrap();
            let t = run_trajectory(&eq, &cfg, &s, &e1.field, &stream).unwrap();
            let mut worst: f64 = 0.0;
            for (time, snap) in t.times.iter().zip(&t.snapshots) {
                let exact = e1.field.scaled((-e1.discrete_eigenvalue * time).exp());
                worst = worst.max(snap.sub(&exact).l2_norm());
            }
            errs.push(worst);
        }
        // first order in dt
        assert!(errs[0] < 0.05 && (errs[0] / errs[1] - 2.0).abs() < 0.2, "{errs:?}");
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let (g, s) = setup(16, 8);
        let x0 = ScalarField::from_fn(g, |x| (2.0 * x).sin());
        let cfg = SolverConfig::new(1e-3, 0.05, Scheme::ProxImplicit, None)
            .unwrap()
            .with_stride(10)
            .unwrap();
        let eq = EquationSpec::p_laplace(1.3).unwrap();
        let st = NoiseStream::new(77, 3);
        let a = run_trajectory(&eq, &cfg, &s, &x0, &st).unwrap();
        let b = run_trajectory(&eq, &cfg, &s, &x0, &st).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.times.len(), 6);
    }

    #[test]
    fn identical_members_have_zero_distance() {
        let (g, s) = setup(16, 8);
        let x0 = ScalarField::from_fn(g, |x| x * (1.0 - x));
        let cfg = SolverConfig::new(1e-3, 0.02, Scheme::ProxImplicit, None).unwrap();
        let eq = EquationSpec::p_laplace(1.5).unwrap();
        let r = coupled_sup_error(&[(eq, cfg), (eq, cfg)], 1, &s, &x0, &NoiseStream::new(1, 1))
            .unwrap();
        assert!(r.sup_vs_limit.iter().all(|d| d.abs() < 1e-12));

        let fd = EquationSpec::fast_diffusion(0.5).unwrap();
        assert!(coupled_sup_error(&[(eq, cfg), (fd, cfg)], 0, &s, &x0, &NoiseStream::new(1, 1))
            .is_err());
        assert!(coupled_sup_error(&[], 0, &s, &x0, &NoiseStream::new(1, 1)).is_err());
    }

    #[test]
    fn zero_noise_energy_decreases_under_prox() {
        let (g, s) = setup(24, 0);
        let x0 = ScalarField::from_fn(g, |x| if (0.3..0.6).contains(&x) { 1.0 } else { 0.2 });
        for p in [1.0, 1.4, 2.0] {
            let eq = EquationSpec::p_laplace(p).unwrap();
            let cfg = SolverConfig::new(1e-3, 0.05, Scheme::ProxImplicit, None)
                .unwrap()
                .with_stride(1)
                .unwrap();
            let t = run_trajectory(&eq, &cfg, &s, &x0, &NoiseStream::new(0, 0)).unwrap();
            assert!(t.energies.windows(2).all(|w| w[1] <= w[0] + 1e-14), "p={p}");
        }
    }
}

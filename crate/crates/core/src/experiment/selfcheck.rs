//! Fast invariant suite over every module, used by `sdlab selfcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::convex_kernel::{
    grad_a_p, j_p, moreau_j_eps, resolvent_r_eps, yosida_a_eps, PExponent, RegEps, VecD,
};
use crate::discrete_space::{
    divergence, gradient, hminus1_dot, resolvent_apply, spectral_mode, EdgeField, Grid1D,
    ScalarField,
};
use crate::energy::{legendre_identity_check, mosco_pointwise_report, phi};
use crate::error::Result;
use crate::noise::{build_spectrum, isometry_selftest, NoiseStream};
use crate::solvers::{
    prox_step_direct, run_trajectory, step_fd, vi_check, EquationSpec, FdExponent, Scheme,
    SolverConfig, ViTestPair,
};

use super::emit::Assertion;

fn field(grid: Grid1D, rng: &mut ChaCha8Rng) -> ScalarField {
    let vals = (0..grid.n_interior())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    ScalarField::new(grid, vals).expect("finite")
}

fn kernel_checks(rng: &mut ChaCha8Rng) -> Result<Vec<Assertion>> {
    let mut identity: f64 = 0.0;
    let mut bounds: f64 = 0.0;
    let mut contraction: f64 = 0.0;
    let mut fd_grad: f64 = 0.0;
    let mut huber: f64 = 0.0;
    let mut underflow = 0usize;
    for _ in 0..1000 {
        let pv = rng.random_range(1.0..=2.0);
        let p = PExponent::new(pv)?;
        let eps = RegEps::new(rng.random_range(0.01..1.0))?;
        let s = 10f64.powf(rng.random_range(-3.0..1.0));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let x = VecD::pair(s * angle.cos(), s * angle.sin());
        let y = VecD::pair(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));

        let a_eps = yosida_a_eps(p, eps, x)?;
        let r = resolvent_r_eps(p, eps, x)?;
        if pv > 1.0 {
            // r_eps can fall below the smallest normal float for p near 1
            if r.norm() >= f64::MIN_POSITIVE {
                identity = identity.max(a_eps.sub(&grad_a_p(p, r)?).norm());
            } else {
                underflow += 1;
            }
            let a = grad_a_p(p, x)?;
            bounds = bounds
                .max(a.norm() - x.norm().powf(pv - 1.0))
                .max(x.norm().powf(pv) - a.dot(&x));
            let hstep = 1e-6;
            for i in 0..2 {
                let mut plus = x.components().to_vec();
                let mut minus = plus.clone();
                plus[i] += hstep;
                minus[i] -= hstep;
                let d = (j_p(p, VecD::new(&plus)?) - j_p(p, VecD::new(&minus)?)) / (2.0 * hstep);
                let rel = (d - a.components()[i]).abs() / a.norm().max(1e-3);
                fd_grad = fd_grad.max(rel);
            }
        }
        let ry = resolvent_r_eps(p, eps, y)?;
        contraction = contraction.max(r.sub(&ry).norm() - x.sub(&y).norm());

        let one = PExponent::new(1.0)?;
        let n = x.norm();
        let closed = if n <= eps.value() {
            n * n / (2.0 * eps.value())
        } else {
            n - eps.value() / 2.0
        };
        huber = huber.max((moreau_j_eps(one, eps, x)? - closed).abs());
    }
    Ok(vec![
        Assertion::new(
            "Yosida identity a_eps = a_p(r_eps)",
            identity <= 1e-10,
            format!("{identity:.2e} ({underflow} samples with underflowing resolvent skipped)"),
        ),
        Assertion::new("growth bounds of a_p", bounds <= 1e-12, format!("{bounds:.2e}")),
        Assertion::new(
            "resolvent contraction",
            contraction <= 1e-12,
            format!("{contraction:.2e}"),
        ),
        Assertion::new("a_p is the gradient of j_p", fd_grad <= 1e-5, format!("{fd_grad:.2e}")),
        Assertion::new("Huber envelope at p = 1", huber <= 1e-8, format!("{huber:.2e}")),
    ])
}

fn operator_checks(rng: &mut ChaCha8Rng) -> Result<Vec<Assertion>> {
    let g = Grid1D::new(40, 1.3)?;
    let eps = RegEps::new(0.02)?;
    let mut sbp: f64 = 0.0;
    let mut smoothing: f64 = 0.0;
    for _ in 0..100 {
        let u = field(g, rng);
        let vals = (0..g.n_edges()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = EdgeField::new(g, vals)?;
        sbp = sbp.max((gradient(&u).dot_h(&v) + u.dot_h(&divergence(&v))).abs());
        let lhs = gradient(&resolvent_apply(eps, &u)).l2_norm();
        smoothing = smoothing.max(lhs - u.l2_norm() / (2.0 * eps.value().sqrt()) * (1.0 + 1e-10));
    }
    let mut eigen: f64 = 0.0;
    for k in 1..=g.n_interior() {
        let mode = spectral_mode(&g, k)?;
        let want = mode.field.scaled(1.0 / (1.0 + eps.value() * mode.discrete_eigenvalue));
        eigen = eigen.max(resolvent_apply(eps, &mode.field).sub(&want).max_abs());
    }
    Ok(vec![
        Assertion::new("summation by parts", sbp < 1e-13, format!("{sbp:.2e}")),
        Assertion::new("resolvent eigenmodes", eigen < 1e-10, format!("{eigen:.2e}")),
        Assertion::new("resolvent smoothing bound", smoothing <= 0.0, format!("{smoothing:.2e}")),
    ])
}

fn energy_checks(grid: Grid1D, rng: &mut ChaCha8Rng) -> Result<Vec<Assertion>> {
    let mut out = Vec::new();
    let leg = legendre_identity_check(PExponent::new(1.5)?, RegEps::new(0.1)?)?;
    out.push(Assertion::new(
        "Legendre identity p=1.5 eps=0.1",
        leg.passed,
        format!("max gap {:.2e}", leg.max_gap),
    ));
    let seq: Vec<PExponent> = (1..=10)
        .map(|k| PExponent::new(1.0 + 2f64.powi(-k)))
        .collect::<Result<_>>()?;
    let samples = [spectral_mode(&grid, 1)?.field, field(grid, rng)];
    let mosco = mosco_pointwise_report(&seq, PExponent::new(1.0)?, RegEps::new(0.1)?, &samples)?;
    out.push(Assertion::new(
        "Mosco envelope gaps",
        mosco.all_pass(),
        format!(
            "final gaps {:?}",
            mosco.columns.iter().map(|c| c.final_gap).collect::<Vec<_>>()
        ),
    ));
    Ok(out)
}

fn solver_checks(grid: Grid1D, seed: u64, rng: &mut ChaCha8Rng) -> Result<Vec<Assertion>> {
    let mut out = Vec::new();
    let dt = 1e-3;
    let mut prox_excess: f64 = 0.0;
    for pv in [1.0, 1.5, 2.0] {
        let p = PExponent::new(pv)?;
        for _ in 0..50 {
            let (a, b, w) = (field(grid, rng), field(grid, rng), field(grid, rng));
            let ua = prox_step_direct(p, dt, &a.add(&w))?;
            let ub = prox_step_direct(p, dt, &b.add(&w))?;
            prox_excess = prox_excess.max(ua.sub(&ub).l2_norm() - a.sub(&b).l2_norm());
        }
    }
    out.push(Assertion::new(
        "prox steps are non-expansive",
        prox_excess <= 1e-12,
        format!("{prox_excess:.2e}"),
    ));
    let mut fd_excess: f64 = 0.0;
    for rv in [0.5, 1.0] {
        let r = FdExponent::new(rv)?;
        for _ in 0..50 {
            let (a, b, w) = (field(grid, rng), field(grid, rng), field(grid, rng));
            let ya = step_fd(r, dt, &a.add(&w))?;
            let yb = step_fd(r, dt, &b.add(&w))?;
            let d = ya.sub(&yb);
            let e = a.sub(&b);
            fd_excess = fd_excess.max(hminus1_dot(&d, &d).sqrt() - hminus1_dot(&e, &e).sqrt());
        }
    }
    out.push(Assertion::new(
        "fast diffusion steps are non-expansive in H^-1",
        fd_excess <= 1e-12,
        format!("{fd_excess:.2e}"),
    ));

    let quiet = build_spectrum(&grid, 1.0, 0.1, 0)?;
    let x0 = ScalarField::from_fn(grid, |x| (std::f64::consts::PI * x).sin() + 0.3 * (5.0 * x).sin());
    let cfg = SolverConfig::new(1e-4, 0.05, Scheme::ProxImplicit, None)?.with_stride(1)?;
    let stream = NoiseStream::new(seed, 0);
    let mut decay = true;
    let mut vi_worst: f64 = 0.0;
    for pv in [1.0, 1.5, 2.0] {
        let p = PExponent::new(pv)?;
        let traj = run_trajectory(&EquationSpec::PLaplace(p), &cfg, &quiet, &x0, &stream)?;
        decay &= traj.energies.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let pair = ViTestPair {
            y0: grid.zeros(),
            g: grid.zeros(),
        };
        let rep = vi_check(&traj, p, &[pair], &quiet, &stream)?;
        vi_worst = vi_worst.max(rep.worst_violation);
    }
    out.push(Assertion::new("zero-noise energy decay", decay, ""));
    out.push(Assertion::new(
        "zero-noise solution inequality",
        vi_worst <= 1e-6,
        format!("{vi_worst:.2e}"),
    ));

    let spec = build_spectrum(&grid, 1.0, 0.1, grid.n_interior() / 2)?;
    let eq = EquationSpec::p_laplace(1.3)?;
    let a = run_trajectory(&eq, &cfg, &spec, &x0, &stream)?;
    let b = run_trajectory(&eq, &cfg, &spec, &x0, &stream)?;
    out.push(Assertion::new(
        "restart determinism",
        a.snapshots == b.snapshots,
        "",
    ));
    let iso = isometry_selftest(&spec, 0.01, 20_000, &NoiseStream::new(seed, 1))?;
    out.push(Assertion::new(
        "noise isometry",
        iso.passed,
        format!("z = {:.3}", iso.z),
    ));
    let p_one_zero = phi(PExponent::new(1.0)?, &grid.zeros());
    out.push(Assertion::new("TV of zero", p_one_zero == 0.0, ""));
    Ok(out)
}

/// Runs the suite with random inputs drawn from `seed`.
pub fn run_selfcheck(seed: u64) -> Result<Vec<Assertion>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid1D::new(24, 1.0)?;
    let mut out = kernel_checks(&mut rng)?;
    out.extend(operator_checks(&mut rng)?);
    out.extend(energy_checks(grid, &mut rng)?);
    out.extend(solver_checks(grid, seed, &mut rng)?);
    Ok(out)
}

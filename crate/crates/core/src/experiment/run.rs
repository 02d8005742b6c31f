//! Experiment orchestration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convex_kernel::{PExponent, RegEps};
use crate::discrete_space::{gradient, norm, spectral_mode, Grid1D, NormKind, ScalarField};
use crate::energy::{legendre_identity_check, mosco_liminf_probe, mosco_pointwise_report};
use crate::ergodics::{default_panel, invariant_convergence, ErgodicRunConfig};
use crate::error::Result;
use crate::noise::{NoiseSpectrum, NoiseStream};
use crate::solvers::trajectory::coupled_sup_error_observed;
use crate::solvers::{apriori_ensemble, EquationSpec, Scheme, SolverConfig};

use super::config::{ExperimentConfig, ExperimentKind};
use super::emit::{ExperimentResult, Table};
use super::selfcheck::run_selfcheck;

/// Initial datum of the convergence experiments,
/// `sin(pi x / L) + 0.5 sin(3 pi x / L)`.
pub fn initial_state(grid: Grid1D) -> ScalarField {
    let w = std::f64::consts::PI / grid.length();
    ScalarField::from_fn(grid, |x| (w * x).sin() + 0.5 * (3.0 * w * x).sin())
}

/// Uniform random field on `[-1, 1]` from a seeded generator.
pub fn random_field(grid: Grid1D, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..grid.n_interior())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    ScalarField::new(grid, vals).expect("finite values")
}

/// Random combination `sum_{k<=modes} c_k e_k / k` with `c_k` uniform on
/// `[-1, 1]`: a random field resolved by the grid.
pub fn random_smooth_field(grid: Grid1D, seed: u64, modes: usize) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = grid.zeros();
    for k in 1..=modes.min(grid.n_interior()) {
        let c: f64 = rng.random_range(-1.0..=1.0);
        u = u.add_scaled(c / k as f64, &spectral_mode(&grid, k)?.field);
    }
    Ok(u)
}

/// Runs the configured experiment; emission is left to the caller.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::PlConvergence => convergence(cfg, false),
        ExperimentKind::FdConvergence => convergence(cfg, true),
        ExperimentKind::PTo1 => p_to_one(cfg),
        ExperimentKind::InvariantMeasures => invariant_measures(cfg),
        ExperimentKind::MoscoReport => mosco(cfg),
        ExperimentKind::Selfcheck => {
            let mut result = ExperimentResult::new("selfcheck");
            let mut table = Table::new("checks", &["check", "passed", "detail"]);
            for a in run_selfcheck(cfg.noise.master_seed)? {
                table.push(vec![a.name.clone().into(), a.passed.into(), a.detail.clone().into()]);
                result.assertions.push(a);
            }
            result.tables.push(table);
            Ok(result)
        }
    }
}

fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Per-path pairwise sup distances of a coupled ensemble, plus the path-0
/// trajectory rows `(member, t, L2, H^-1, energy, running sup error)`.
struct Ensemble {
    pairwise: Vec<Vec<Vec<f64>>>,
    rows: Vec<(usize, f64, f64, f64, f64, f64)>,
}

fn coupled_ensemble(
    members: &[(EquationSpec, SolverConfig)],
    limit: usize,
    spec: &NoiseSpectrum,
    x0: &ScalarField,
    seed: u64,
    paths: usize,
    stride: usize,
) -> Result<Ensemble> {
    let per_path = (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let mut rows = Vec::new();
            let mut sup = vec![0.0f64; members.len()];
            let mut failure = None;
            let kind = members[limit].0.state_norm();
            let report = coupled_sup_error_observed(
                members,
                limit,
                spec,
                x0,
                &NoiseStream::new(seed, id),
                &mut |k, t, states| {
                    if id != 0 || failure.is_some() {
                        return;
                    }
                    for (i, (eq, _)) in members.iter().enumerate() {
                        let err = norm(&states[i].sub(&states[limit]), kind);
                        let hm1 = norm(&states[i], NormKind::Hminus1);
                        match (err, hm1) {
                            (Ok(e), Ok(h)) => {
                                sup[i] = sup[i].max(e);
                                if k % stride == 0 {
                                    let energy = eq.energy(&states[i]);
                                    rows.push((i, t, states[i].l2_norm(), h, energy, sup[i]));
                                }
                            }
                            (Err(e), _) | (_, Err(e)) => failure = Some(e),
                        }
                    }
                },
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok((report.pairwise_sup, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairwise = Vec::with_capacity(paths);
    let mut rows = Vec::new();
    for (i, (pw, r)) in per_path.into_iter().enumerate() {
        if i == 0 {
            rows = r;
        }
        pairwise.push(pw);
    }
    Ok(Ensemble { pairwise, rows })
}

fn trajectory_table(members: &[(EquationSpec, SolverConfig)], ens: &Ensemble) -> Table {
    let mut t = Table::new(
        "trajectory",
        &["member", "t", "L2_norm", "Hminus1_norm", "energy", "sup_error_vs_limit"],
    );
    for &(i, time, l2, hm1, energy, sup) in &ens.rows {
        t.push(vec![
            members[i].0.label().into(),
            time.into(),
            l2.into(),
            hm1.into(),
            energy.into(),
            sup.into(),
        ]);
    }
    t
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn apriori_section(
    result: &mut ExperimentResult,
    cfg: &ExperimentConfig,
    runs: &[(EquationSpec, SolverConfig, RegEps)],
    spec: &NoiseSpectrum,
    x0: &ScalarField,
) -> Result<()> {
    let paths = cfg.diagnostics.apriori_paths;
    if paths == 0 {
        return Ok(());
    }
    let mut table = Table::new(
        "apriori",
        &["member", "eps", "t", "mean_l2_sq", "mean_resolvent_integral", "envelope"],
    );
    let every = cfg.solver.snapshot_stride;
    for (i, (eq, scfg, eps)) in runs.iter().enumerate() {
        let seed = cfg.noise.master_seed.wrapping_add(0x5eed_0000 + i as u64);
        let rep = apriori_ensemble(eq, scfg, spec, x0, seed, paths, *eps, every)?;
        for (j, t) in rep.times.iter().enumerate() {
            table.push(vec![
                rep.label.clone().into(),
                rep.eps.into(),
                (*t).into(),
                rep.mean_l2_sq[j].into(),
                rep.mean_resolvent_integral[j].into(),
                rep.envelope.into(),
            ]);
        }
        let scheme = match scfg.scheme {
            Scheme::ProxImplicit => "prox",
            Scheme::RegularizedExplicit => "regularized",
        };
        result.assert(
            &format!("a priori envelopes {} {scheme} eps={}", rep.label, rep.eps),
            rep.passed(),
            format!(
                "max E|X|^2 = {:.4e}, max E int S_r = {:.4e}, envelope {:.4e}, jensen worst {:.3e}",
                rep.mean_l2_sq.iter().cloned().fold(0.0, f64::max),
                rep.mean_resolvent_integral.iter().cloned().fold(0.0, f64::max),
                rep.envelope,
                rep.jensen_worst
            ),
        );
    }
    result.tables.push(table);
    Ok(())
}

fn convergence(cfg: &ExperimentConfig, fast_diffusion: bool) -> Result<ExperimentResult> {
    let name = cfg.experiment.name();
    let mut result = ExperimentResult::new(name);
    let grid = cfg.grid()?;
    let spec = cfg.spectrum()?;
    let x0 = initial_state(grid);
    let scfg = cfg.solver_config(cfg.solver.scheme, None)?;
    let limit = cfg.exponents.limit.expect("filled by defaults");
    let list = if fast_diffusion {
        cfg.exponents.r_list.clone()
    } else {
        cfg.exponents.p_list.clone()
    }
    .expect("filled by defaults");
    let make = |e: f64| {
        if fast_diffusion {
            EquationSpec::fast_diffusion(e)
        } else {
            EquationSpec::p_laplace(e)
        }
    };
    let mut members = list
        .iter()
        .map(|e| Ok((make(*e)?, scfg)))
        .collect::<Result<Vec<_>>>()?;
    members.push((make(limit)?, scfg));
    let li = members.len() - 1;

    let ens = coupled_ensemble(
        &members,
        li,
        &spec,
        &x0,
        cfg.noise.master_seed,
        cfg.diagnostics.paths,
        cfg.solver.snapshot_stride,
    )?;

    let mut sup = Table::new("sup_errors", &["member", "exponent", "mean_sup_error", "std_error"]);
    let mut per_path = Table::new("path_errors", &["path", "member", "exponent", "sup_error"]);
    let mut stats = Vec::new();
    for (i, (eq, _)) in members.iter().enumerate() {
        let errs: Vec<f64> = ens.pairwise.iter().map(|pw| pw[i][li]).collect();
        for (path, e) in errs.iter().enumerate() {
            per_path.push(vec![path.into(), eq.label().into(), eq.exponent().into(), (*e).into()]);
        }
        let (m, se) = mean_and_error(&errs);
        sup.push(vec![eq.label().into(), eq.exponent().into(), m.into(), se.into()]);
        if i != li {
            stats.push((eq.exponent(), m));
        }
    }
    stats.sort_by(|a, b| (b.0 - limit).abs().total_cmp(&(a.0 - limit).abs()));
    let means: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let norm_name = if fast_diffusion { "H^-1" } else { "L^2" };
    result.assert(
        "sup error strictly decreasing toward the limit",
        strictly_decreasing(&means),
        format!("mean sup_t {norm_name} errors by distance to limit: {}", fmt_list(&means)),
    );
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        result.assert(
            "final error below a tenth of the initial",
            means.len() >= 2 && *last < 0.1 * first,
            format!("{last:.4e} vs {first:.4e}"),
        );
    }
    result.tables.push(sup);
    result.tables.push(per_path);
    result.tables.push(trajectory_table(&members, &ens));

    if !fast_diffusion {
        let eps = RegEps::new(cfg.diagnostics.stat_eps)?;
        let runs: Vec<_> = members.iter().map(|(eq, c)| (*eq, *c, eps)).collect();
        apriori_section(&mut result, cfg, &runs, &spec, &x0)?;
    }
    Ok(result)
}

fn p_to_one(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new("p-to-1");
    let grid = cfg.grid()?;
    let spec = cfg.spectrum()?;
    let x0 = initial_state(grid);
    let eps = cfg.eps()?.expect("validated");
    let half = RegEps::new(0.5 * eps.value())?;
    let prox = cfg.solver_config(Scheme::ProxImplicit, None)?;
    let reg = cfg.solver_config(Scheme::RegularizedExplicit, Some(eps))?;
    let reg_half = cfg.solver_config(Scheme::RegularizedExplicit, Some(half))?;
    let ps = cfg.exponents.p_list.clone().expect("filled by defaults");
    let m = ps.len();

    // [TV reference, prox p_k, reg(eps) p_k, reg(eps/2) p_k, reg(eps) 1, reg(eps/2) 1]
    let mut members = vec![(EquationSpec::p_laplace(1.0)?, prox)];
    for c in [prox, reg, reg_half] {
        for p in &ps {
            members.push((EquationSpec::p_laplace(*p)?, c));
        }
    }
    members.push((EquationSpec::p_laplace(1.0)?, reg));
    members.push((EquationSpec::p_laplace(1.0)?, reg_half));
    let (r1, r1h) = (3 * m + 1, 3 * m + 2);

    let ens = coupled_ensemble(
        &members,
        0,
        &spec,
        &x0,
        cfg.noise.master_seed,
        cfg.diagnostics.paths,
        cfg.solver.snapshot_stride,
    )?;
    let avg = |i: usize, j: usize| -> (f64, f64) {
        let xs: Vec<f64> = ens.pairwise.iter().map(|pw| pw[i][j]).collect();
        mean_and_error(&xs)
    };

    let mut table = Table::new(
        "decomposition",
        &[
            "p", "sup_error", "sup_error_stderr", "regularized_error", "I1", "I2", "I3",
            "I1_half_eps", "I2_half_eps", "I3_half_eps",
        ],
    );
    let (i3, _) = avg(r1, 0);
    let (i3h, _) = avg(r1h, 0);
    let mut err = Vec::new();
    let mut reg_err = Vec::new();
    let mut i1 = Vec::new();
    let mut i1h = Vec::new();
    let mut i2 = Vec::new();
    for (k, p) in ps.iter().enumerate() {
        let (xp, xe, xh) = (1 + k, 1 + m + k, 1 + 2 * m + k);
        let (e, se) = avg(xp, 0);
        let (re, _) = avg(xe, 0);
        let (a1, _) = avg(xp, xe);
        let (a2, _) = avg(xe, r1);
        let (b1, _) = avg(xp, xh);
        let (b2, _) = avg(xh, r1h);
        table.push(vec![
            (*p).into(), e.into(), se.into(), re.into(), a1.into(), a2.into(), i3.into(),
            b1.into(), b2.into(), i3h.into(),
        ]);
        err.push(e);
        reg_err.push(re);
        i1.push(a1);
        i1h.push(b1);
        i2.push(a2);
    }
    result.tables.push(table);
    result.tables.push(trajectory_table(&members, &ens));

    result.assert(
        "regularized error against the TV reference decreasing in k",
        strictly_decreasing(&reg_err),
        format!("sup_t |X_p^eps - X_1|: {}", fmt_list(&reg_err)),
    );
    result.assert(
        "solution error against the TV reference decreasing in k",
        strictly_decreasing(&err),
        format!("sup_t |X_p - X_1|: {}", fmt_list(&err)),
    );
    result.assert(
        "I1 reduced by halving eps",
        i1.iter().zip(&i1h).all(|(a, b)| b < a),
        format!("eps: {}, eps/2: {}", fmt_list(&i1), fmt_list(&i1h)),
    );
    result.assert(
        "I3 reduced by halving eps",
        i3h < i3,
        format!("eps: {i3:.4e}, eps/2: {i3h:.4e}"),
    );
    let i2_ok = strictly_decreasing(&i2) && i2.len() >= 2 && i2[i2.len() - 1] < 0.1 * i2[0];
    result.assert(
        "I2 vanishes in k",
        i2_ok,
        format!("strictly decreasing with final below a tenth of initial: {}", fmt_list(&i2)),
    );

    let mut runs: Vec<_> = ps
        .iter()
        .map(|p| Ok((EquationSpec::p_laplace(*p)?, reg, eps)))
        .collect::<Result<Vec<_>>>()?;
    runs.push((EquationSpec::p_laplace(1.0)?, reg, eps));
    apriori_section(&mut result, cfg, &runs, &spec, &x0)?;
    Ok(result)
}

fn invariant_measures(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new("invariant-measures");
    let grid = cfg.grid()?;
    let spec = cfg.spectrum()?;
    let ps = cfg
        .exponents
        .p_list
        .as_ref()
        .expect("filled by defaults")
        .iter()
        .map(|p| PExponent::new(*p))
        .collect::<Result<Vec<_>>>()?;
    let limit = PExponent::new(cfg.exponents.limit.expect("filled by defaults"))?;
    let panel = default_panel(&spec)?;
    let run = ErgodicRunConfig {
        solver: cfg.solver_config(cfg.solver.scheme, None)?,
        burn_in: cfg.burn_in(),
        observe_every: cfg.diagnostics.observe_every,
        x0: grid.zeros(),
        stream: NoiseStream::new(cfg.noise.master_seed, 0),
    };
    let report = invariant_convergence(&ps, limit, &panel, &spec, &run, &cfg.diagnostics.thetas)?;
    if cfg.solver.burn_in.is_none() {
        result.notes.push(format!("burn-in defaulted to T/4 = {}", cfg.burn_in()));
    }
    if ps.iter().chain(std::iter::once(&limit)).any(|p| p.is_one()) {
        result
            .notes
            .push("statistics at p = 1 are conjectural: the invariant measure may not exist".into());
    }

    let mut avgs = Table::new(
        "invariant",
        &["p", "functional_id", "average", "stderr", "distance_to_limit"],
    );
    let mut dist = Table::new(
        "distances",
        &["p", "distance_to_limit", "distance_error", "moment_average", "conjectural"],
    );
    let mut tight = Table::new(
        "tightness",
        &["p", "theta", "radius", "outside_fraction", "markov_bound", "noise_bound", "markov_ok"],
    );
    for row in report.rows.iter().chain(std::iter::once(&report.limit)) {
        for (j, id) in report.panel.iter().enumerate() {
            avgs.push(vec![
                row.p.into(),
                id.clone().into(),
                row.averages[j].into(),
                row.std_errors[j].into(),
                row.distance_to_limit.into(),
            ]);
        }
        dist.push(vec![
            row.p.into(),
            row.distance_to_limit.into(),
            row.distance_error.into(),
            row.tightness.moment_average.into(),
            row.conjectural.into(),
        ]);
        for t in &row.tightness.rows {
            tight.push(vec![
                row.p.into(),
                t.theta.into(),
                t.radius.into(),
                t.outside_fraction.into(),
                t.markov_bound.into(),
                t.noise_bound.into(),
                t.markov_ok.into(),
            ]);
        }
        result.assert(
            &format!("tightness p={}", row.p),
            row.tightness.passed(),
            format!(
                "E|X|_1,p^p = {:.4e} vs {} |B|_HS^2 = {:.4e}",
                row.tightness.moment_average,
                row.tightness.envelope,
                row.tightness.envelope * row.tightness.hs_norm_sq
            ),
        );
    }
    let mut panel_table = Table::new("panel", &["functional_id", "lipschitz"]);
    for f in &panel {
        panel_table.push(vec![f.id.clone().into(), f.lipschitz.into()]);
    }
    let detail: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("p={}: {:.4e} +- {:.1e}", r.p, r.distance_to_limit, r.distance_error))
        .collect();
    result.assert(
        "weak distances shrink with |p - p_limit| within two error bands",
        report.trend_ok,
        detail.join("; "),
    );
    result.tables.extend([avgs, dist, tight, panel_table]);
    Ok(result)
}

fn mosco(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut result = ExperimentResult::new("mosco-report");
    let grid = cfg.grid()?;
    let eps = cfg.eps()?.expect("filled by defaults");
    let ps = cfg
        .exponents
        .p_list
        .as_ref()
        .expect("filled by defaults")
        .iter()
        .map(|p| PExponent::new(*p))
        .collect::<Result<Vec<_>>>()?;
    let one = PExponent::new(1.0)?;
    let samples = [
        spectral_mode(&grid, 1)?.field,
        random_smooth_field(grid, cfg.noise.master_seed, 4)?,
    ];
    let report = mosco_pointwise_report(&ps, one, eps, &samples)?;
    let mut table = Table::new("mosco", &["sample", "n", "p_n", "gap", "decreasing_flag"]);
    for row in &report.rows {
        let col = &report.columns[row.sample];
        table.push(vec![
            row.sample.into(),
            row.n.into(),
            row.p_n.into(),
            row.gap.into(),
            col.strictly_decreasing.into(),
        ]);
    }
    for col in &report.columns {
        result.assert(
            &format!("envelope gaps sample {}", col.sample),
            col.strictly_decreasing && col.below_tolerance,
            format!("decreasing={}, final gap {:.3e}", col.strictly_decreasing, col.final_gap),
        );
    }
    result.tables.push(table);

    let mut liminf = Table::new(
        "liminf",
        &["probe", "n", "p_n", "frequency", "oscillating", "base"],
    );
    let mut probe = 0usize;
    for (s, u) in samples.iter().enumerate() {
        let field = gradient(u);
        for e in [None, Some(eps)] {
            let r = mosco_liminf_probe(&ps, one, &field, 0.5, e)?;
            for (n, p) in ps.iter().enumerate() {
                liminf.push(vec![
                    probe.into(),
                    n.into(),
                    p.value().into(),
                    r.frequencies[n].into(),
                    r.oscillating[n].into(),
                    r.base[n].into(),
                ]);
            }
            let which = e.map_or("plain".to_string(), |e| format!("eps={}", e.value()));
            result.assert(
                &format!("liminf margin sample {s} {which}"),
                r.passed,
                format!("margin {:.3e}", r.margin),
            );
            probe += 1;
        }
    }
    result.tables.push(liminf);

    let mut legendre = Table::new("legendre", &["p", "eps", "y", "lhs", "rhs", "consistent"]);
    for pv in [1.0, 1.5, 2.0] {
        for ev in [0.1, 1.0] {
            let r = legendre_identity_check(PExponent::new(pv)?, RegEps::new(ev)?)?;
            for pt in &r.points {
                legendre.push(vec![
                    pv.into(),
                    ev.into(),
                    pt.y.into(),
                    pt.lhs.unwrap_or(f64::INFINITY).into(),
                    pt.rhs.unwrap_or(f64::INFINITY).into(),
                    pt.consistent.into(),
                ]);
            }
            result.assert(
                &format!("Legendre identity p={pv} eps={ev}"),
                r.passed,
                format!("max gap {:.3e}", r.max_gap),
            );
        }
    }
    result.tables.push(legendre);
    Ok(result)
}

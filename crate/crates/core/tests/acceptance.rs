//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 6 9` runs a subset. Failing criteria are
//! reported but only change the exit status when `SDLAB_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdlab_core::convex_kernel::{
    grad_a_p, j_p, moreau_j_eps, resolvent_r_eps, yosida_a_eps, PExponent, RegEps, VecD,
};
use sdlab_core::discrete_space::{
    divergence, gradient, hminus1_dot, resolvent_apply, spectral_mode, EdgeField, Grid1D,
    ScalarField,
};
use sdlab_core::energy::legendre_identity_check;
use sdlab_core::error::Result;
use sdlab_core::experiment::{load_config, run_experiment, ExperimentResult};
use sdlab_core::noise::{build_spectrum, NoiseStream};
use sdlab_core::solvers::{
    prox_step_direct, stationary_variances, step_fd, strong_order, FdExponent, Scheme,
    SolverConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn experiment(name: &str) -> Result<(ExperimentResult, Duration)> {
    let cfg = load_config(&config_path(name))?;
    let start = Instant::now();
    let result = run_experiment(&cfg)?;
    Ok((result, start.elapsed()))
}

fn failures(result: &ExperimentResult, filter: impl Fn(&str) -> bool) -> Vec<String> {
    result
        .assertions
        .iter()
        .filter(|a| filter(&a.name) && !a.passed)
        .map(|a| format!("{}: {}", a.name, a.detail))
        .collect()
}

fn detail_of(result: &ExperimentResult, name: &str) -> String {
    result
        .assertions
        .iter()
        .find(|a| a.name == name)
        .map(|a| a.detail.clone())
        .unwrap_or_default()
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

fn polar(rng: &mut ChaCha8Rng) -> VecD {
    let s = 10f64.powf(rng.random_range(-3.0..1.0));
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    VecD::pair(s * a.cos(), s * a.sin())
}

fn central_difference(f: impl Fn(VecD) -> f64, x: &VecD, i: usize) -> f64 {
    let h = 1e-6;
    let mut up = x.components().to_vec();
    let mut dn = up.clone();
    up[i] += h;
    dn[i] -= h;
    (f(VecD::new(&up).unwrap()) - f(VecD::new(&dn).unwrap())) / (2.0 * h)
}

fn kernel_identities() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = 10_000;
    let (mut identity, mut grad_rel, mut env_rel, mut bounds, mut contraction) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut underflow = 0;
    for _ in 0..samples {
        let pv: f64 = rng.random_range(1.0..=2.0);
        let p = PExponent::new(pv)?;
        let eps = RegEps::new(rng.random_range(0.01..1.0))?;
        let x = polar(&mut rng);
        let y = polar(&mut rng);

        let a_eps = yosida_a_eps(p, eps, x)?;
        let r = resolvent_r_eps(p, eps, x)?;
        for i in 0..2 {
            let d = central_difference(|v| moreau_j_eps(p, eps, v).unwrap(), &x, i);
            env_rel = env_rel.max((d - a_eps.components()[i]).abs() / a_eps.norm().max(1e-3));
        }
        contraction = contraction
            .max(r.sub(&resolvent_r_eps(p, eps, y)?).norm() - x.sub(&y).norm());
        if pv == 1.0 {
            continue;
        }
        if r.norm() >= f64::MIN_POSITIVE {
            identity = identity.max(a_eps.sub(&grad_a_p(p, r)?).norm());
        } else {
            underflow += 1;
        }
        let a = grad_a_p(p, x)?;
        for i in 0..2 {
            let d = central_difference(|v| j_p(p, v), &x, i);
            grad_rel = grad_rel.max((d - a.components()[i]).abs() / a.norm().max(1e-3));
        }
        bounds = bounds
            .max(a.norm() - x.norm().powf(pv - 1.0))
            .max(x.norm().powf(pv) - a.dot(&x));
    }
    let elapsed = start.elapsed();
    let passed = identity <= 1e-10
        && grad_rel <= 1e-5
        && env_rel <= 1e-5
        && bounds <= 1e-12
        && contraction <= 1e-12
        && elapsed < Duration::from_secs(1);
    Ok(Outcome::new(
        passed,
        format!(
            "yosida {identity:.1e} ({underflow} underflowing resolvents skipped), grad {grad_rel:.1e}, \
             envelope grad {env_rel:.1e}, bounds {bounds:.1e}, contraction {contraction:.1e}, \
             {samples} samples in {:.2} s",
            elapsed.as_secs_f64()
        ),
    ))
}

fn huber_exactness() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let one = PExponent::new(1.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let e = rng.random_range(0.01..1.0);
        let x = VecD::pair(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let n = x.norm();
        let closed = if n <= e { n * n / (2.0 * e) } else { n - e / 2.0 };
        worst = worst.max((moreau_j_eps(one, RegEps::new(e)?, x)? - closed).abs());
    }
    Ok(Outcome::new(worst <= 1e-8, format!("max deviation {worst:.1e} over 10^4 samples")))
}

fn operator_suite() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Grid1D::new(40, 1.3)?;
    let field = |rng: &mut ChaCha8Rng| {
        ScalarField::new(g, (0..g.n_interior()).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let (mut sbp, mut smoothing, mut eigen) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..1000 {
        let u = field(&mut rng)?;
        let v = EdgeField::new(g, (0..g.n_edges()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        sbp = sbp.max((gradient(&u).dot_h(&v) + u.dot_h(&divergence(&v))).abs());
        let eps = RegEps::new(10f64.powf(rng.random_range(-2.0..0.0)))?;
        let lhs = gradient(&resolvent_apply(eps, &u)).l2_norm();
        smoothing = smoothing.max(lhs / (u.l2_norm() / (2.0 * eps.value().sqrt())));
    }
    for e in [0.01, 0.1, 1.0] {
        let eps = RegEps::new(e)?;
        for k in 1..=g.n_interior() {
            let m = spectral_mode(&g, k)?;
            let want = m.field.scaled(1.0 / (1.0 + e * m.discrete_eigenvalue));
            eigen = eigen.max(resolvent_apply(eps, &m.field).sub(&want).max_abs());
        }
    }
    Ok(Outcome::new(
        sbp < 1e-13 && eigen <= 1e-10 && smoothing <= 1.0 + 1e-10,
        format!(
            "summation by parts {sbp:.1e}, eigenmodes {eigen:.1e}, smoothing ratio max {smoothing:.4}"
        ),
    ))
}

fn legendre() -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut passed = true;
    for pv in [1.0, 1.5, 2.0] {
        for e in [0.1, 1.0] {
            let r = legendre_identity_check(PExponent::new(pv)?, RegEps::new(e)?)?;
            passed &= r.passed;
            parts.push(format!("p={pv},eps={e}: {:.1e}", r.max_gap));
        }
    }
    Ok(Outcome::new(passed, format!("max gaps {}", parts.join("; "))))
}

fn mosco() -> Result<Outcome> {
    let (res, elapsed) = experiment("mosco-report.json")?;
    let bad = failures(&res, |_| true);
    let margins: Vec<String> = res
        .assertions
        .iter()
        .filter(|a| a.name.starts_with("liminf"))
        .map(|a| a.detail.trim_start_matches("margin ").to_string())
        .collect();
    let detail = if bad.is_empty() {
        format!(
            "gaps decreasing below 1e-3, liminf margins [{}], {:.1} s",
            margins.join(", "),
            elapsed.as_secs_f64()
        )
    } else {
        bad.join("; ")
    };
    Ok(Outcome::new(bad.is_empty() && within(elapsed, 10), detail))
}

fn linear_oracle() -> Result<Outcome> {
    let g = Grid1D::new(32, 1.0)?;
    let spec = build_spectrum(&g, 1.0, 0.1, 16)?;
    let w = std::f64::consts::PI;
    let x0 = ScalarField::from_fn(g, |x| (w * x).sin() + 0.5 * (3.0 * w * x).sin());
    let dts = [1e-2, 5e-3, 2.5e-3];
    let prox = strong_order(
        &spec,
        &x0,
        0.5,
        &dts,
        &|dt| SolverConfig::new(dt, 0.5, Scheme::ProxImplicit, None),
        100,
        6,
        16,
    )?;
    // eps = dt; for p = 2 the drift is linear with Lipschitz constant at most
    // 1 / (4 eps (1 + eps)), so explicit Euler is stable for dt <= 8 eps (1 + eps)
    let reg = strong_order(
        &spec,
        &x0,
        0.5,
        &dts,
        &|dt| {
            let eps = RegEps::new(dt)?;
            let mut cfg = SolverConfig::new(dt, 0.5, Scheme::ProxImplicit, None)?;
            cfg.scheme = Scheme::RegularizedExplicit;
            cfg.eps = Some(eps);
            cfg.c_stab = 2.0 * (1.0 + dt) / dt;
            cfg.validate()?;
            Ok(cfg)
        },
        100,
        6,
        16,
    )?;
    let stat = stationary_variances(&spec, 1e-4, 500.0, 10.0, 10, &NoiseStream::new(6, 1_000))?;
    let worst = stat.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let outside: Vec<usize> = stat.rows.iter().filter(|r| r.z.abs() > 3.0).map(|r| r.k).collect();
    let scheme_worst = stat
        .rows
        .iter()
        .map(|r| ((r.observed - r.scheme_expected) / r.std_error).abs())
        .fold(0.0, f64::max);
    let orders_ok = prox.order >= 0.4 && reg.order >= 0.4;
    let fmt = |r: &sdlab_core::solvers::StrongOrderReport| {
        r.rows.iter().map(|x| format!("{:.2e}", x.mean_sup_error)).collect::<Vec<_>>().join(" ")
    };
    Ok(Outcome::new(
        orders_ok && stat.within(3.0),
        format!(
            "strong order prox {:.2} [{}], regularized eps=dt {:.2} [{}]; stationary variances: \
             worst |z| {worst:.1} vs lambda/(2 mu), modes outside 3 SE {outside:?}; \
             worst |z| {scheme_worst:.1} vs the implicit-Euler law lambda/(2 mu + mu^2 dt)",
            prox.order,
            fmt(&prox),
            reg.order,
            fmt(&reg)
        ),
    ))
}

fn convergence(res: &ExperimentResult, elapsed: Duration, budget_s: u64) -> Outcome {
    let bad = failures(res, |n| !n.starts_with("a priori"));
    let detail = format!(
        "{}; {:.1} s",
        detail_of(res, "sup error strictly decreasing toward the limit"),
        elapsed.as_secs_f64()
    );
    let detail = if bad.is_empty() { detail } else { format!("{}; {detail}", bad.join("; ")) };
    Outcome::new(bad.is_empty() && within(elapsed, budget_s), detail)
}

fn p_to_one(res: &ExperimentResult, elapsed: Duration) -> Outcome {
    let required = [
        "regularized error against the TV reference decreasing in k",
        "I1 reduced by halving eps",
        "I3 reduced by halving eps",
        "I2 vanishes in k",
    ];
    let bad = failures(res, |n| required.contains(&n));
    let detail = if bad.is_empty() {
        format!("all trends hold; {:.1} s", elapsed.as_secs_f64())
    } else {
        format!(
            "{}; {} (I2 {}); {:.1} s",
            bad.join("; "),
            detail_of(res, "solution error against the TV reference decreasing in k"),
            detail_of(res, "I2 vanishes in k"),
            elapsed.as_secs_f64()
        )
    };
    Outcome::new(bad.is_empty() && within(elapsed, 600), detail)
}

fn apriori(results: &[&ExperimentResult]) -> Outcome {
    let mut count = 0;
    let mut bad = Vec::new();
    for res in results {
        for a in res.assertions.iter().filter(|a| a.name.starts_with("a priori")) {
            count += 1;
            if !a.passed {
                bad.push(format!("{}: {}", a.name, a.detail));
            }
        }
    }
    if bad.is_empty() {
        Outcome::new(count > 0, format!("{count} (p, eps) ensembles within the envelope and Jensen bound"))
    } else {
        Outcome::new(false, bad.join("; "))
    }
}

fn invariant() -> Result<Outcome> {
    let (res, elapsed) = experiment("invariant-measures.json")?;
    let bad = failures(&res, |_| true);
    let detail = format!(
        "{}; {:.1} s",
        detail_of(&res, "weak distances shrink with |p - p_limit| within two error bands"),
        elapsed.as_secs_f64()
    );
    let detail = if bad.is_empty() { detail } else { format!("{}; {detail}", bad.join("; ")) };
    Ok(Outcome::new(bad.is_empty() && within(elapsed, 900), detail))
}

fn non_expansive() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = Grid1D::new(24, 1.0)?;
    let field = |rng: &mut ChaCha8Rng| {
        ScalarField::new(g, (0..g.n_interior()).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let dt = 1e-3;
    let mut prox: f64 = f64::NEG_INFINITY;
    let mut fd: f64 = f64::NEG_INFINITY;
    for pv in [1.0, 1.5, 2.0] {
        let p = PExponent::new(pv)?;
        for _ in 0..1000 {
            let (a, b, w) = (field(&mut rng)?, field(&mut rng)?, field(&mut rng)?);
            let d = prox_step_direct(p, dt, &a.add(&w))?.sub(&prox_step_direct(p, dt, &b.add(&w))?);
            prox = prox.max(d.l2_norm() - a.sub(&b).l2_norm());
        }
    }
    for rv in [0.5, 1.0] {
        let r = FdExponent::new(rv)?;
        for _ in 0..1000 {
            let (a, b, w) = (field(&mut rng)?, field(&mut rng)?, field(&mut rng)?);
            let d = step_fd(r, dt, &a.add(&w))?.sub(&step_fd(r, dt, &b.add(&w))?);
            let e = a.sub(&b);
            fd = fd.max(hminus1_dot(&d, &d).sqrt() - hminus1_dot(&e, &e).sqrt());
        }
    }
    Ok(Outcome::new(
        prox <= 1e-12 && fd <= 1e-12,
        format!("worst excess: prox {prox:.1e} in L2, fast diffusion {fd:.1e} in H^-1"),
    ))
}

fn main() {
    let wanted: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let mut lines: Vec<(usize, &str, std::result::Result<Outcome, String>, Duration)> = Vec::new();
    let mut record = |k: usize, title: &'static str, f: &mut dyn FnMut() -> Result<Outcome>| {
        if !run(k) {
            return;
        }
        let start = Instant::now();
        let out = f().map_err(|e| e.to_string());
        let elapsed = start.elapsed();
        print_line(k, title, &out, elapsed);
        lines.push((k, title, out, elapsed));
    };

    record(1, "convex-kernel identities", &mut kernel_identities);
    record(2, "Huber exactness", &mut huber_exactness);
    record(3, "discrete operators", &mut operator_suite);
    record(4, "Legendre identity", &mut legendre);
    record(5, "Mosco report", &mut mosco);
    record(6, "linear oracle", &mut linear_oracle);

    let need = |ks: &[usize]| ks.iter().any(|k| run(*k));
    let pl = if need(&[7, 10]) { Some(experiment("pl-convergence.json")) } else { None };
    let fd = if need(&[8]) { Some(experiment("fd-convergence.json")) } else { None };
    let pto1 = if need(&[9, 10]) { Some(experiment("p-to-1.json")) } else { None };
    fn get(
        r: &Option<Result<(ExperimentResult, Duration)>>,
    ) -> Result<&(ExperimentResult, Duration)> {
        match r.as_ref().expect("requested") {
            Ok(v) => Ok(v),
            Err(e) => Err(sdlab_core::error::Error::InvalidParameter(e.to_string())),
        }
    }
    record(7, "p-Laplace convergence in p", &mut || {
        let (r, t) = get(&pl)?;
        Ok(convergence(r, *t, 300))
    });
    record(8, "fast diffusion convergence in r", &mut || {
        let (r, t) = get(&fd)?;
        Ok(convergence(r, *t, 600))
    });
    record(9, "p to 1 through the regularized scheme", &mut || {
        let (r, t) = get(&pto1)?;
        Ok(p_to_one(r, *t))
    });
    record(10, "a priori envelopes", &mut || {
        let (a, _) = get(&pl)?;
        let (b, _) = get(&pto1)?;
        Ok(apriori(&[a, b]))
    });
    record(11, "invariant measures", &mut invariant);
    record(12, "non-expansive implicit steps", &mut non_expansive);

    let failed: Vec<usize> = lines
        .iter()
        .filter(|(_, _, o, _)| !matches!(o, Ok(o) if o.passed))
        .map(|(k, ..)| *k)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    let strict = std::env::var("SDLAB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}

fn print_line(k: usize, title: &str, out: &std::result::Result<Outcome, String>, t: Duration) {
    let (tag, detail) = match out {
        Ok(o) => (if o.passed { "PASS" } else { "FAIL" }, o.detail.clone()),
        Err(e) => ("FAIL", format!("error: {e}")),
    };
    println!("criterion {k:>2} {tag}  {title}: {detail} [{:.1} s]", t.as_secs_f64());
}

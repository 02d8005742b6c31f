use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sdlab_core::convex_kernel::PExponent;
use sdlab_core::discrete_space::Grid1D;
use sdlab_core::ergodics::{default_panel, linear_mode_std, ErgodicAccumulator, TestFunctional};
use sdlab_core::noise::{build_spectrum, NoiseSpectrum, NoiseStream};
use sdlab_core::solvers::trajectory::run_trajectory_observed;
use sdlab_core::solvers::{EquationSpec, Scheme, SolverConfig};

fn long_run(
    p: f64,
    spec: &NoiseSpectrum,
    panel: &[TestFunctional],
    dt: f64,
    t_final: f64,
    burn_in: f64,
    seed: u64,
) -> ErgodicAccumulator {
    let p = PExponent::new(p).unwrap();
    let cfg = SolverConfig::new(dt, t_final, Scheme::ProxImplicit, None).unwrap();
    let cfg = cfg.with_stride(cfg.n_steps()).unwrap();
    let mut acc = ErgodicAccumulator::new(burn_in, p, panel.len());
    let x0 = spec.grid().zeros();
    run_trajectory_observed(
        &EquationSpec::PLaplace(p),
        &cfg,
        spec,
        &x0,
        &NoiseStream::new(seed, 0),
        &mut |step, t, x| {
            if step % 5 == 0 {
                acc.push(t, x, panel);
            }
        },
    )
    .unwrap();
    acc
}

#[test]
fn mode_statistics_match_the_gaussian_law() {
    let g = Grid1D::new(8, 1.0).unwrap();
    let spec = build_spectrum(&g, 1.0, 0.1, 4).unwrap();
    let panel: Vec<TestFunctional> = (1..=2)
        .map(|k| TestFunctional::mode_tanh(&spec, k, linear_mode_std(&spec, k)).unwrap())
        .collect();
    let acc = long_run(2.0, &spec, &panel, 2e-4, 100.0, 5.0, 11);

    // each statistic is tanh(Z^2) with Z standard normal
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * z).tanh()
        })
        .collect();
    let n = draws.len() as f64;
    let mc = draws.iter().sum::<f64>() / n;
    let mc_se = (draws.iter().map(|d| (d - mc) * (d - mc)).sum::<f64>() / (n - 1.0) / n).sqrt();

    let avgs = acc.averages().unwrap();
    let ses = acc.std_errors().unwrap();
    for (a, se) in avgs.iter().zip(&ses) {
        let combined = (se * se + mc_se * mc_se).sqrt();
        assert!((a - mc).abs() <= 3.0 * combined, "{a} vs {mc} +- {combined}");
    }
}

#[test]
fn doubling_the_horizon_shrinks_the_seed_spread() {
    let g = Grid1D::new(8, 1.0).unwrap();
    let spec = build_spectrum(&g, 1.0, 0.1, 4).unwrap();
    let panel = default_panel(&spec).unwrap();
    let spread = |t_final: f64| {
        let runs: Vec<Vec<f64>> = (0..5)
            .map(|s| {
                long_run(1.5, &spec, &panel, 2e-3, t_final, 5.0, 100 + s)
                    .averages()
                    .unwrap()
            })
            .collect();
        let mut pooled = 0.0;
        for j in 0..panel.len() {
            let m = runs.iter().map(|r| r[j]).sum::<f64>() / 5.0;
            pooled += runs.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 4.0;
        }
        (pooled / panel.len() as f64).sqrt()
    };
    let ratio = spread(50.0) / spread(100.0);
    let clt = 2f64.sqrt();
    assert!(ratio >= clt / 2.0 && ratio <= 2.0 * clt, "spread ratio {ratio}");
}

#[test]
fn averages_are_reproducible() {
    let g = Grid1D::new(8, 1.0).unwrap();
    let spec = build_spectrum(&g, 1.0, 0.1, 4).unwrap();
    let panel = default_panel(&spec).unwrap();
    let a = long_run(1.7, &spec, &panel, 1e-2, 5.0, 1.0, 3).averages().unwrap();
    let b = long_run(1.7, &spec, &panel, 1e-2, 5.0, 1.0, 3).averages().unwrap();
    assert_eq!(a, b);
    let c = long_run(1.7, &spec, &panel, 1e-2, 5.0, 1.0, 4).averages().unwrap();
    assert_ne!(a, c);
}

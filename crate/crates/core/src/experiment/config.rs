//! JSON experiment configuration with defaults and itemized validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convex_kernel::{PExponent, RegEps};
use crate::discrete_space::Grid1D;
use crate::error::{Error, Result};
use crate::noise::{build_spectrum, NoiseSpectrum};
use crate::solvers::{
    check_stability, FdExponent, Scheme, SolverConfig, DEFAULT_C_STAB, DEFAULT_NEWTON_MAX,
    DEFAULT_NEWTON_TOL, DEFAULT_SNAPSHOT_STRIDE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PlConvergence,
    FdConvergence,
    #[serde(rename = "p-to-1")]
    PTo1,
    InvariantMeasures,
    MoscoReport,
    Selfcheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlConvergence => "pl-convergence",
            Self::FdConvergence => "fd-convergence",
            Self::PTo1 => "p-to-1",
            Self::InvariantMeasures => "invariant-measures",
            Self::MoscoReport => "mosco-report",
            Self::Selfcheck => "selfcheck",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "L", default = "default_length")]
    pub length: f64,
}

fn default_n() -> usize {
    32
}
fn default_length() -> f64 {
    1.0
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: default_n(),
            length: default_length(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Defaults to `n / 2`.
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_delta() -> f64 {
    1.0
}
fn default_kappa() -> f64 {
    0.1
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            kappa: default_kappa(),
            modes: None,
            master_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Defaults to `5e-4` for `p-to-1`, whose regularized runs at `eps / 2`
    /// need the smaller step, and `1e-3` otherwise.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(rename = "T", default = "default_t")]
    pub t_final: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// Defaults to `T / 4`.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max")]
    pub newton_max: usize,
    #[serde(default = "default_c_stab")]
    pub c_stab: f64,
}

const DEFAULT_DT: f64 = 1e-3;

impl SolverSection {
    /// The configured step, or the generic default before defaults are filled.
    pub fn step(&self) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT)
    }
}

fn default_t() -> f64 {
    0.5
}
fn default_scheme() -> Scheme {
    Scheme::ProxImplicit
}
fn default_stride() -> usize {
    DEFAULT_SNAPSHOT_STRIDE
}
fn default_newton_tol() -> f64 {
    DEFAULT_NEWTON_TOL
}
fn default_newton_max() -> usize {
    DEFAULT_NEWTON_MAX
}
fn default_c_stab() -> f64 {
    DEFAULT_C_STAB
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: None,
            t_final: default_t(),
            scheme: default_scheme(),
            eps: None,
            snapshot_stride: default_stride(),
            burn_in: None,
            newton_tol: default_newton_tol(),
            newton_max: default_newton_max(),
            c_stab: default_c_stab(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSection {
    #[serde(default)]
    pub p_list: Option<Vec<f64>>,
    #[serde(default)]
    pub r_list: Option<Vec<f64>>,
    #[serde(default)]
    pub limit: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_directory() -> PathBuf {
    PathBuf::from("results")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            format: OutputFormat::Csv,
        }
    }
}

/// Ensemble and diagnostic knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Independent noise paths per convergence experiment.
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Ergodic observations are taken every this many steps.
    #[serde(default = "default_observe_every")]
    pub observe_every: usize,
    /// Finest level `k` of the Mosco sequence `p = 1 + 2^-k`.
    #[serde(default = "default_mosco_levels")]
    pub mosco_levels: u32,
    /// Independent paths for the a priori envelopes; 0 skips them.
    #[serde(default = "default_apriori_paths")]
    pub apriori_paths: usize,
    /// Regularization used by the resolvent statistics of prox runs.
    #[serde(default = "default_stat_eps")]
    pub stat_eps: f64,
}

fn default_paths() -> usize {
    20
}
fn default_thetas() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn default_observe_every() -> usize {
    10
}
fn default_mosco_levels() -> u32 {
    10
}
fn default_apriori_paths() -> usize {
    200
}
fn default_stat_eps() -> f64 {
    0.05
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            thetas: default_thetas(),
            observe_every: default_observe_every(),
            mosco_levels: default_mosco_levels(),
            apriori_paths: default_apriori_paths(),
            stat_eps: default_stat_eps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub exponents: ExponentSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

fn dyadic(base: f64, sign: f64, levels: std::ops::RangeInclusive<i32>) -> Vec<f64> {
    levels.map(|k| base + sign * 2f64.powi(-k)).collect()
}

impl ExperimentConfig {
    /// Parses JSON text, fills defaults and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_defaults(experiment: ExperimentKind) -> Self {
        let mut cfg = Self {
            experiment,
            grid: GridSection::default(),
            noise: NoiseSection::default(),
            solver: SolverSection::default(),
            exponents: ExponentSection::default(),
            output: OutputSection::default(),
            diagnostics: DiagnosticsSection::default(),
        };
        cfg.fill_defaults();
        cfg
    }

    /// Fills every optional field that has an experiment-dependent default.
    pub fn fill_defaults(&mut self) {
        if self.noise.modes.is_none() {
            self.noise.modes = Some(self.grid.n / 2);
        }
        let ex = &mut self.exponents;
        match self.experiment {
            ExperimentKind::PlConvergence => {
                ex.p_list.get_or_insert_with(|| dyadic(1.5, 1.0, 2..=6));
                ex.limit.get_or_insert(1.5);
            }
            ExperimentKind::FdConvergence => {
                ex.r_list.get_or_insert_with(|| dyadic(0.8, -1.0, 2..=6));
                ex.limit.get_or_insert(0.8);
            }
            ExperimentKind::PTo1 => {
                self.solver.dt.get_or_insert(5e-4);
                ex.p_list.get_or_insert_with(|| dyadic(1.0, 1.0, 1..=5));
                ex.limit.get_or_insert(1.0);
                if self.solver.eps.is_none() {
                    self.solver.eps = Some(0.05);
                }
            }
            ExperimentKind::InvariantMeasures => {
                ex.p_list.get_or_insert_with(|| vec![1.9, 1.7, 1.5]);
                ex.limit.get_or_insert(1.4);
            }
            ExperimentKind::MoscoReport => {
                let levels = self.diagnostics.mosco_levels as i32;
                ex.p_list.get_or_insert_with(|| dyadic(1.0, 1.0, 1..=levels.max(1)));
                ex.limit.get_or_insert(1.0);
                if self.solver.eps.is_none() {
                    self.solver.eps = Some(0.1);
                }
            }
            ExperimentKind::Selfcheck => {}
        }
        self.solver.dt.get_or_insert(DEFAULT_DT);
    }

    /// Collects every violated rule; returns them together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let g = &self.grid;
        if g.n < 2 {
            errs.push(format!("grid.n must be at least 2 (got {})", g.n));
        }
        if !(g.length > 0.0 && g.length.is_finite()) {
            errs.push(format!("grid.L must be positive (got {})", g.length));
        }

        let nz = &self.noise;
        if !(nz.kappa > 0.0) {
            errs.push(format!("kappa must be positive (got {})", nz.kappa));
        }
        if !(nz.delta > 0.5 + nz.kappa) {
            errs.push(format!(
                "delta must exceed 0.5+kappa (got delta={}, kappa={})",
                nz.delta, nz.kappa
            ));
        }
        if let Some(k) = nz.modes {
            if k > g.n {
                errs.push(format!("noise.modes must not exceed grid.n (got {k} > {})", g.n));
            }
        }

        let s = &self.solver;
        let dt = s.step();
        if !(dt > 0.0 && dt.is_finite()) {
            errs.push(format!("solver.dt must be positive (got {})", dt));
        }
        if !(s.t_final > 0.0 && s.t_final.is_finite()) {
            errs.push(format!("solver.T must be positive (got {})", s.t_final));
        }
        if dt > 0.0 && s.t_final > 0.0 {
            if dt > s.t_final {
                errs.push(format!("solver.dt must not exceed solver.T ({} > {})", dt, s.t_final));
            }
            let ratio = s.t_final / dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                errs.push(format!("solver.T must be a multiple of solver.dt (T/dt = {ratio})"));
            }
        }
        if let Some(eps) = s.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                errs.push(format!("solver.eps must be positive (got {eps})"));
            }
        }
        if s.scheme == Scheme::RegularizedExplicit {
            match s.eps.map(RegEps::new) {
                None => errs.push("scheme regularized-explicit requires solver.eps".into()),
                Some(Ok(eps)) => {
                    if let Err(e) = check_stability(dt, eps, s.c_stab) {
                        errs.push(format!("stability guard: {e}"));
                    }
                }
                Some(Err(_)) => {}
            }
        }
        if s.snapshot_stride == 0 {
            errs.push("solver.snapshot_stride must be positive".into());
        }
        if !(s.newton_tol > 0.0) || s.newton_max == 0 {
            errs.push("solver.newton_tol and solver.newton_max must be positive".into());
        }
        if !(s.c_stab > 0.0) {
            errs.push(format!("solver.c_stab must be positive (got {})", s.c_stab));
        }
        if let Some(b) = s.burn_in {
            if !(b >= 0.0 && b < s.t_final) {
                errs.push(format!("solver.burn_in must lie in [0, T) (got {b})"));
            }
        }

        let ex = &self.exponents;
        if let Some(ps) = &ex.p_list {
            for p in ps {
                if PExponent::new(*p).is_err() {
                    errs.push(format!("p must lie in [1, 2] (p_list contains {p})"));
                }
            }
        }
        if let Some(rs) = &ex.r_list {
            for r in rs {
                if FdExponent::new(*r).is_err() {
                    errs.push(format!("r must lie in (0, 1] (r_list contains {r})"));
                }
            }
        }
        let needs_p = matches!(
            self.experiment,
            ExperimentKind::PlConvergence
                | ExperimentKind::PTo1
                | ExperimentKind::InvariantMeasures
                | ExperimentKind::MoscoReport
        );
        if needs_p && ex.p_list.as_ref().is_none_or(|v| v.is_empty()) {
            errs.push(format!("exponents.p_list must be non-empty for {}", self.experiment.name()));
        }
        if self.experiment == ExperimentKind::FdConvergence
            && ex.r_list.as_ref().is_none_or(|v| v.is_empty())
        {
            errs.push("exponents.r_list must be non-empty for fd-convergence".into());
        }
        if let Some(l) = ex.limit {
            let ok = match self.experiment {
                ExperimentKind::FdConvergence => FdExponent::new(l).is_ok(),
                _ => PExponent::new(l).is_ok(),
            };
            if !ok {
                errs.push(format!("exponents.limit {l} is outside the exponent range"));
            }
        }
        if matches!(self.experiment, ExperimentKind::PTo1 | ExperimentKind::MoscoReport)
            && ex.limit != Some(1.0)
        {
            errs.push(format!("{} requires exponents.limit = 1", self.experiment.name()));
        }
        if self.experiment == ExperimentKind::PTo1 {
            if s.eps.is_none() {
                errs.push("p-to-1 requires solver.eps".into());
            }
            if let Some(eps) = s.eps.and_then(|e| RegEps::new(0.5 * e).ok()) {
                if let Err(e) = check_stability(dt, eps, s.c_stab) {
                    errs.push(format!("stability guard at eps/2: {e}"));
                }
            }
        }

        let d = &self.diagnostics;
        if d.paths == 0 {
            errs.push("diagnostics.paths must be positive".into());
        }
        if d.observe_every == 0 {
            errs.push("diagnostics.observe_every must be positive".into());
        }
        if d.thetas.iter().any(|t| !(*t > 0.0)) {
            errs.push("diagnostics.thetas must be positive".into());
        }
        if !(d.stat_eps > 0.0 && d.stat_eps.is_finite()) {
            errs.push(format!("diagnostics.stat_eps must be positive (got {})", d.stat_eps));
        }
        if d.mosco_levels == 0 || d.mosco_levels > 30 {
            errs.push("diagnostics.mosco_levels must lie in 1..=30".into());
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid.n, self.grid.length)
    }

    pub fn spectrum(&self) -> Result<NoiseSpectrum> {
        let modes = self.noise.modes.unwrap_or(self.grid.n / 2);
        build_spectrum(&self.grid()?, self.noise.delta, self.noise.kappa, modes)
    }

    pub fn eps(&self) -> Result<Option<RegEps>> {
        self.solver.eps.map(RegEps::new).transpose()
    }

    /// Solver settings for `scheme`, with `eps` overriding the configured
    /// value when given.
    pub fn solver_config(&self, scheme: Scheme, eps: Option<RegEps>) -> Result<SolverConfig> {
        let s = &self.solver;
        let eps = match eps {
            Some(e) => Some(e),
            None => self.eps()?,
        };
        let mut cfg = SolverConfig::new(s.step(), s.t_final, scheme, eps)?;
        cfg.newton_tol = s.newton_tol;
        cfg.newton_max = s.newton_max;
        cfg.c_stab = s.c_stab;
        cfg.snapshot_stride = s.snapshot_stride;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn burn_in(&self) -> f64 {
        self.solver.burn_in.unwrap_or(self.solver.t_final / 4.0)
    }

    /// SHA-256 of the canonical JSON of the configuration without the
    /// output section.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSection::default();
        let text = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

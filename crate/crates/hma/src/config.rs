//! Run configuration: TOML with sections, every field stored in an external
//! HMF1 file. Relative paths resolve against the directory of the config.
//!
//! ```toml
//! [problem]
//! variant = "psi"            # psi | phi
//! rhs_volume = "omega_n"     # omega_n | omega_h_n
//! pipeline = "direct"        # direct | volume | phi
//! omega0 = "omega0.hmf"
//! omega = "omega.hmf"
//! f = "f.hmf"                # optional, zero when absent
//!
//! [solver]
//! newton_tol = 1e-11
//! schedule = [0.0, 0.5, 1.0]
//!
//! [output]
//! report = "report.json"
//! trace = "trace.jsonl"
//!
//! [run]
//! threads = 4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use hma_core::drivers::DriverConfig;
use hma_core::grid::DiffMode;
use hma_core::krylov::GmresConfig;
use hma_core::solver::DampingConfig;
use hma_core::{MetricField, ProblemSpec, RhsVolume, ScalarField, SolverConfig, Variant};
use serde::Deserialize;

use crate::error::CliError;
use crate::hmf;

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum VariantKey {
    #[default]
    Psi,
    Phi,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum RhsKey {
    #[default]
    OmegaN,
    OmegaHN,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DiffKey {
    #[default]
    Spectral,
    FiniteDifference,
}

/// What `solve` runs once the problem is loaded.
#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// The continuity method on the configured variant.
    #[default]
    Direct,
    /// Volume prescription `ω_u^n = e^{F+b}ω^n` for Gauduchon `ω₀`.
    Volume,
    /// `Phi` equation on a Gauduchon `ω`, returning the root metric.
    Phi,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default)]
    pub variant: VariantKey,
    #[serde(default)]
    pub rhs_volume: RhsKey,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub diff_mode: DiffKey,
    pub omega0: PathBuf,
    pub omega: PathBuf,
    pub f: Option<PathBuf>,
    /// Known solution, used to report recovery errors.
    pub reference_u: Option<PathBuf>,
    pub reference_b: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: Option<f64>,
    pub max_newton: Option<usize>,
    pub schedule: Option<Vec<f64>>,
    pub damping_min: Option<f64>,
    pub damping_shrink: Option<f64>,
    pub linear_tol: Option<f64>,
    pub linear_restart: Option<usize>,
    pub linear_max_iter: Option<usize>,
    pub min_step: Option<f64>,
    pub stagnation_window: Option<usize>,
    pub stagnation_factor: Option<f64>,
    pub precondition_tol: Option<f64>,
    pub cohomology_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RicciSection {
    /// Target form `ψ` as a Hermitian field.
    pub psi: Option<PathBuf>,
    /// Alternatively `φ`, with `ψ = Ric(ω) - i∂∂̄φ`.
    pub phi: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Solved `u`, shifted to `sup u = 0`.
    pub state: Option<PathBuf>,
    /// Root metric from the `volume`, `phi` and Ricci pipelines.
    pub metric: Option<PathBuf>,
    pub cherrier_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads; `0` or absent means all cores.
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ricci: RicciSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(skip)]
    pub base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.base = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.solver_config()?.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| self.resolve(p))
    }

    pub fn variant(&self) -> Variant {
        match self.problem.variant {
            VariantKey::Psi => Variant::Psi,
            VariantKey::Phi => Variant::Phi,
        }
    }

    pub fn rhs(&self) -> RhsVolume {
        match self.problem.rhs_volume {
            RhsKey::OmegaN => RhsVolume::OmegaN,
            RhsKey::OmegaHN => RhsVolume::OmegaHN,
        }
    }

    pub fn diff_mode(&self) -> DiffMode {
        match self.problem.diff_mode {
            DiffKey::Spectral => DiffMode::Spectral,
            DiffKey::FiniteDifference => DiffMode::FiniteDifference,
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            newton_tol: s.newton_tol.unwrap_or(d.newton_tol),
            max_newton: s.max_newton.unwrap_or(d.max_newton),
            schedule: s.schedule.clone().unwrap_or(d.schedule),
            damping: DampingConfig {
                min_factor: s.damping_min.unwrap_or(d.damping.min_factor),
                shrink: s.damping_shrink.unwrap_or(d.damping.shrink),
            },
            linear: GmresConfig {
                restart: s.linear_restart.unwrap_or(d.linear.restart),
                max_iter: s.linear_max_iter.unwrap_or(d.linear.max_iter),
                rel_tol: s.linear_tol.unwrap_or(d.linear.rel_tol),
            },
            min_step: s.min_step.unwrap_or(d.min_step),
            stagnation_window: s.stagnation_window.unwrap_or(d.stagnation_window),
            stagnation_factor: s.stagnation_factor.unwrap_or(d.stagnation_factor),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn driver_config(&self) -> Result<DriverConfig, CliError> {
        let d = DriverConfig::default();
        Ok(DriverConfig {
            solver: self.solver_config()?,
            precondition_tol: self.solver.precondition_tol.unwrap_or(d.precondition_tol),
            cohomology_tol: self.solver.cohomology_tol.unwrap_or(d.cohomology_tol),
        })
    }

    fn metric(&self, p: &Path) -> Result<MetricField, CliError> {
        let m = hmf::read_metric(&self.resolve(p))?;
        let grid = m.grid().with_mode(self.diff_mode());
        Ok(MetricField::new(hma_core::HermField::from_values(&grid, m.into_field().values().to_vec())?)?)
    }

    pub fn real_field(&self, p: &Path) -> Result<ScalarField, CliError> {
        let f = hmf::read_real(&self.resolve(p))?;
        let grid = f.grid().with_mode(self.diff_mode());
        Ok(ScalarField::from_values(&grid, f.into_values())?)
    }

    /// Reads and validates every referenced field, then builds the problem.
    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let omega0 = self.metric(&self.problem.omega0)?;
        let omega = self.metric(&self.problem.omega)?;
        let f = match &self.problem.f {
            Some(p) => self.real_field(p)?,
            None => ScalarField::zeros(omega.grid()),
        };
        Ok(ProblemSpec::new(self.variant(), omega0, omega, f, self.rhs())?)
    }

    pub fn reference(&self) -> Result<Option<ScalarField>, CliError> {
        self.problem.reference_u.as_ref().map(|p| self.real_field(p)).transpose()
    }
}

/// Worker count: `HMA_THREADS` overrides the config key; zero means all cores.
pub fn thread_count(config_value: Option<usize>) -> Result<usize, CliError> {
    let from_env = match std::env::var("HMA_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Config {
            path: "HMA_THREADS".into(),
            message: format!("expected a non-negative integer, got {v:?}"),
        })?),
        Err(_) => None,
    };
    Ok(from_env.or(config_value).unwrap_or(0))
}

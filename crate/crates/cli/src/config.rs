//! Strict TOML experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sgd_clt::ensemble::{Estimator, InitDist};
use sgd_clt::problems::{
    generate_logistic, make_counterexample, make_logistic, make_quadratic, LogisticDataset, NoiseDistribution,
    NoiseModel, Oracle,
};
use sgd_clt::{DampingSchedule, MethodSpec, Schedule};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub method: MethodConfig,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub damping: Option<DampingSpec>,
    #[serde(default)]
    pub init: Option<InitSpec>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_steps")]
    pub n_steps: u64,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Relative to the config file unless absolute.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the limit `d₀` implied by the schedule family.
    #[serde(default)]
    pub d0: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub outputs: Toggles,
    #[serde(default)]
    pub check: CheckSpec,
}

fn default_replicas() -> usize {
    1000
}

fn default_steps() -> u64 {
    100_000
}

fn default_checkpoint() -> u64 {
    10_000
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `f(x) = xᵀAx/2`; give either `a` (rows) or `diag`.
    Quadratic {
        #[serde(default)]
        a: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        diag: Option<Vec<f64>>,
    },
    Logistic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_samples")]
        n_samples: usize,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        seed: u64,
        /// CSV with header `w_1,...,w_d,y`; replaces generation.
        #[serde(default)]
        dataset: Option<PathBuf>,
    },
    Counterexample,
}

fn default_dim() -> usize {
    10
}

fn default_samples() -> usize {
    1000
}

fn default_beta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Minibatch {
        #[serde(default = "one")]
        batch_size: usize,
    },
    Gaussian {
        #[serde(default)]
        sigma: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        diag: Option<Vec<f64>>,
    },
    /// Independent `U[−√3, √3]` coordinates mapped to covariance `Σ`.
    Uniform {
        #[serde(default)]
        sigma: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        diag: Option<Vec<f64>>,
        /// Scalar `U[−b, b]`; exclusive with `sigma`/`diag`.
        #[serde(default)]
        amplitude: Option<f64>,
    },
    Zero,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Vsgd,
    Msgd { mu_tilde: f64 },
    Nasgd { mu_tilde: f64 },
    MsgdVanishing,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    PowerLaw { k: f64, a: f64 },
    PowerLawLog { c: f64, a: f64 },
    /// `α_k = K r^k`; for certificates only, it fails divergence.
    Geometric { k: f64, r: f64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingSpec {
    PowerLaw { k_mu: f64, b: f64 },
    InversePartialSum { k_mu: f64 },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Offset from `x*`.
    Point { offset: Vec<f64> },
    Normal { scale: f64 },
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    #[default]
    Centered,
    Uncentered,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Toggles {
    #[serde(default)]
    pub normality: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub lp_diagnostic: bool,
    #[serde(default)]
    pub time_average: Option<TimeAverageSpec>,
    #[serde(default)]
    pub table1: Option<Table1Spec>,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { normality: false, histogram_bins: default_bins(), lp_diagnostic: false, time_average: None, table1: None }
    }
}

fn default_bins() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeAverageSpec {
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub escape_radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Spec {
    pub replicas: Vec<usize>,
}

/// Thresholds enforced by `run --check`.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default)]
    pub max_final_rel_err: Option<f64>,
    /// `[lo, hi]` for the mean consecutive ratio of the table-1 sweep.
    #[serde(default)]
    pub sweep_ratio_band: Option<[f64; 2]>,
    /// Require ρ > 0 at the final checkpoint.
    #[serde(default)]
    pub normality_final: bool,
    #[serde(default)]
    pub time_average_max_rel_err: Option<f64>,
    /// Lower bound on final / first drift statistic of the time average.
    #[serde(default)]
    pub min_drift_growth: Option<f64>,
    #[serde(default)]
    pub max_drift_growth: Option<f64>,
    /// Upper bound on the fraction of replicas that left the escape radius.
    #[serde(default)]
    pub max_escaped_fraction: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ProblemSpec::Logistic { dataset: Some(p), .. } = &mut cfg.problem {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(CliError::Config(format!("dataset {} does not exist", p.display())));
            }
        }
        if let Some(out) = &mut cfg.output_dir {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.replicas < 2 {
            return bad(format!("replicas must be at least 2, got {}", self.replicas));
        }
        if self.n_steps == 0 || self.checkpoint_every == 0 {
            return bad("n_steps and checkpoint_every must be positive".into());
        }
        let vanishing = matches!(self.method, MethodConfig::MsgdVanishing);
        if vanishing != self.damping.is_some() {
            return bad("[damping] is required for msgd_vanishing and not allowed otherwise".into());
        }
        if self.outputs.histogram_bins < 10 {
            return bad("histogram_bins must be at least 10".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, CliError> {
        Ok(match &self.schedule {
            ScheduleSpec::PowerLaw { k, a } => Schedule::power_law(*k, *a)?,
            ScheduleSpec::PowerLawLog { c, a } => Schedule::power_law_log(*c, *a)?,
            ScheduleSpec::Geometric { k, r } => {
                if !(*k > 0.0 && *r > 0.0 && *r < 1.0) {
                    return Err(CliError::Config(format!("geometric schedule needs K > 0 and r in (0, 1), got {k}, {r}")));
                }
                let (k, r) = (*k, *r);
                Schedule::custom(format!("{k}*{r}^k"), move |i| k * r.powf(i as f64))
            }
        })
    }

    pub fn damping(&self) -> Result<Option<DampingSchedule>, CliError> {
        Ok(match &self.damping {
            None => None,
            Some(DampingSpec::PowerLaw { k_mu, b }) => Some(DampingSchedule::power_law(*k_mu, *b)?),
            Some(DampingSpec::InversePartialSum { k_mu }) => Some(DampingSchedule::inverse_partial_sum(*k_mu, self.schedule()?)?),
        })
    }

    pub fn method(&self) -> Result<MethodSpec, CliError> {
        let spec = match &self.method {
            MethodConfig::Vsgd => MethodSpec::Vsgd,
            MethodConfig::Msgd { mu_tilde } => MethodSpec::MsgdConst { mu_tilde: *mu_tilde },
            MethodConfig::Nasgd { mu_tilde } => MethodSpec::NasgdConst { mu_tilde: *mu_tilde },
            MethodConfig::MsgdVanishing => MethodSpec::MsgdVanishing {
                damping: self.damping()?.ok_or_else(|| CliError::Config("missing [damping]".into()))?,
            },
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn oracle(&self) -> Result<Oracle, CliError> {
        let problem = match &self.problem {
            ProblemSpec::Quadratic { a, diag } => make_quadratic(matrix_or_diag(a, diag, "problem")?)?,
            ProblemSpec::Logistic { dim, n_samples, beta, seed, dataset } => {
                let data = match dataset {
                    Some(path) => LogisticDataset::from_csv(path, *beta)?,
                    None => generate_logistic(*dim, *n_samples, *beta, *seed)?,
                };
                make_logistic(data)?
            }
            ProblemSpec::Counterexample => make_counterexample(),
        };
        let d = problem.dim();
        let noise = match &self.noise {
            None => match problem.objective {
                sgd_clt::problems::Objective::Logistic(_) => NoiseModel::MiniBatch { batch_size: 1 },
                _ => return Err(CliError::Config("[noise] is required for this problem".into())),
            },
            Some(NoiseSpec::Minibatch { batch_size }) => NoiseModel::MiniBatch { batch_size: *batch_size },
            Some(NoiseSpec::Gaussian { sigma, diag }) => {
                NoiseModel::additive(matrix_or_diag(sigma, diag, "noise")?, NoiseDistribution::Gaussian)
            }
            Some(NoiseSpec::Uniform { sigma: None, diag: None, amplitude: Some(b) }) => {
                if d != 1 {
                    return Err(CliError::Config("noise amplitude applies to scalar problems only".into()));
                }
                NoiseModel::uniform_amplitude(*b)
            }
            Some(NoiseSpec::Uniform { sigma, diag, amplitude: None }) => {
                NoiseModel::additive(matrix_or_diag(sigma, diag, "noise")?, NoiseDistribution::BoundedUniform)
            }
            Some(NoiseSpec::Uniform { .. }) => {
                return Err(CliError::Config("uniform noise takes either amplitude or sigma/diag".into()))
            }
            Some(NoiseSpec::Zero) => NoiseModel::zero(d),
        };
        Ok(Oracle::new(problem, noise)?)
    }

    pub fn init(&self, d: usize) -> Result<InitDist, CliError> {
        match &self.init {
            None => Ok(InitDist::Point(DVector::zeros(d))),
            Some(InitSpec::Point { offset }) if offset.len() == d => Ok(InitDist::Point(DVector::from_vec(offset.clone()))),
            Some(InitSpec::Point { offset }) => {
                Err(CliError::Config(format!("init offset has length {}, problem dimension is {d}", offset.len())))
            }
            Some(InitSpec::Normal { scale }) if *scale >= 0.0 => Ok(InitDist::Normal { scale: *scale }),
            Some(InitSpec::Normal { scale }) => Err(CliError::Config(format!("init scale must be non-negative, got {scale}"))),
        }
    }

    pub fn estimator(&self) -> Estimator {
        match self.estimator {
            EstimatorSpec::Centered => Estimator::Centered,
            EstimatorSpec::Uncentered => Estimator::Uncentered,
        }
    }

    /// `d₀`: the configured value, else the limit of the schedule family
    /// (`1/K` for `K/k`, `0` for the other decaying families).
    pub fn d0(&self) -> f64 {
        if let Some(d0) = self.d0 {
            return d0;
        }
        match self.schedule {
            ScheduleSpec::PowerLaw { k, a: 1.0 } => 1.0 / k,
            _ => 0.0,
        }
    }
}

fn matrix_or_diag(m: &Option<Vec<Vec<f64>>>, diag: &Option<Vec<f64>>, what: &str) -> Result<DMatrix<f64>, CliError> {
    match (m, diag) {
        (Some(rows), None) => sgd_clt::io::matrix_from_rows(rows)
            .filter(|m| m.is_square() && m.nrows() > 0)
            .ok_or_else(|| CliError::Config(format!("{what} matrix must be square and non-empty"))),
        (None, Some(d)) if !d.is_empty() => Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone()))),
        _ => Err(CliError::Config(format!("{what}: give exactly one of a full matrix or a non-empty diag"))),
    }
}

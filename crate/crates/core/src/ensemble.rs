//! Ensembles of independent replicas: covariance tracking against `W*`,
//! Table-1 style sampling-error sweeps, time-average experiments and
//! moment-bound diagnostics.
//!
//! Replica `r` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `r`,
//! and all reductions run in replica order, so results do not depend on the
//! number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{frob, rel_frob, sample_covariance, second_moment};
use crate::lyapunov::LyapunovError;
use crate::optimizers::{Method, MethodSpec, OptError, StepCoeffs, Stepper};
use crate::problems::{NoiseModel, Objective, Oracle};
use crate::schedules::Schedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("need at least {min} replicas, got {got}")]
    TooFewReplicas { min: usize, got: usize },
    #[error("{failed} of {total} replicas went non-finite")]
    TooManyFailures { failed: usize, total: usize },
    #[error("learning-rate exponent {0} > 1/2: the step sizes are square-summable and no time-average CLT holds")]
    WrongRegime(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

/// Largest tolerated fraction of non-finite replicas.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
/// Orders `p` of the moment-bound diagnostic `E‖Z_k‖^{2p} / scale_k^p`.
pub const LP_ORDERS: [f64; 2] = [1.0, 1.5];

/// How the covariance is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// `α_k`.
    Alpha,
    /// `α_k / μ_k`.
    Beta,
}

impl ScaleRule {
    pub fn for_method(m: Method) -> Self {
        if m == Method::MsgdVanishing {
            ScaleRule::Beta
        } else {
            ScaleRule::Alpha
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Unbiased covariance about the ensemble mean.
    Centered,
    /// `Σ_m Z Zᵀ / M`.
    Uncentered,
}

/// Initial iterate, relative to `x*`; the velocity always starts at zero.
#[derive(Clone, Debug, PartialEq)]
pub enum InitDist {
    Point(DVector<f64>),
    Normal { scale: f64 },
}

impl InitDist {
    fn sample<R: Rng + ?Sized>(&self, x_star: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        match self {
            InitDist::Point(off) => x_star + off,
            InitDist::Normal { scale } => {
                DVector::from_fn(x_star.len(), |i, _| x_star[i] + scale * rng.sample::<f64, _>(StandardNormal))
            }
        }
    }
}

/// SplitMix64 mix of a master seed and a tag, for independent sub-experiments.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub oracle: Oracle,
    pub schedule: Schedule,
    pub method: MethodSpec,
    pub init: InitDist,
    pub replicas: usize,
    pub n_steps: u64,
    pub checkpoint_every: u64,
    pub master_seed: u64,
    pub scale: ScaleRule,
    pub estimator: Estimator,
    /// Keep every replica's `Z_k` at every checkpoint.
    pub keep_snapshots: bool,
}

impl EnsembleConfig {
    pub fn new(oracle: Oracle, schedule: Schedule, method: MethodSpec) -> Self {
        let scale = ScaleRule::for_method(method.method());
        Self {
            oracle,
            schedule,
            method,
            init: InitDist::Normal { scale: 1.0 },
            replicas: 1000,
            n_steps: 100_000,
            checkpoint_every: 10_000,
            master_seed: 0,
            scale,
            estimator: Estimator::Centered,
            keep_snapshots: false,
        }
    }

    /// Checkpoint steps: multiples of `checkpoint_every` and the final step.
    pub fn checkpoints(&self) -> Vec<u64> {
        let every = self.checkpoint_every.max(1);
        let mut out: Vec<u64> = (1..=self.n_steps / every).map(|i| i * every).collect();
        if out.last() != Some(&self.n_steps) {
            out.push(self.n_steps);
        }
        out
    }

    pub fn state_dim(&self) -> usize {
        let d = self.oracle.dim();
        if self.method.method().has_velocity() {
            2 * d
        } else {
            d
        }
    }
}

/// Per-step coefficients and scales, shared by all replicas.
#[derive(Clone, Debug)]
pub struct CoeffTable {
    pub coeffs: Vec<StepCoeffs>,
    /// `α_k` or `α_k / μ_k`, indexed `k − 1`.
    pub scale: Vec<f64>,
}

impl CoeffTable {
    pub fn build(schedule: &Schedule, method: &MethodSpec, rule: ScaleRule, n_steps: u64) -> Self {
        let n = n_steps as usize;
        let mut coeffs = Vec::with_capacity(n);
        let mut scale = Vec::with_capacity(n);
        let mut sum = 0.0;
        let mut prev = schedule.alpha(1);
        for k in 1..=n_steps {
            let alpha = schedule.alpha(k);
            sum += alpha;
            let mu = method.mu_at(k, sum);
            coeffs.push(StepCoeffs { alpha, alpha_prev: prev, mu });
            scale.push(match rule {
                ScaleRule::Alpha => alpha,
                ScaleRule::Beta => alpha / mu,
            });
            prev = alpha;
        }
        Self { coeffs, scale }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Checkpoint {
    pub k: u64,
    pub scale: f64,
    /// Centered empirical covariance of `Z_k`.
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub v: DMatrix<f64>,
    /// Normalized estimate compared against `W*`.
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub w: DMatrix<f64>,
    pub rel_err: f64,
    #[serde(serialize_with = "crate::io::serialize_vector")]
    pub mean: DVector<f64>,
    /// `E‖Z_k‖^{2p}` for each `p` in [`LP_ORDERS`].
    pub moments: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EnsembleTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub scale_rule: ScaleRule,
    pub estimator: Estimator,
    pub replicas: usize,
    pub failed_replicas: usize,
    pub w_star: DMatrix<f64>,
    /// `true` when the ensemble has no spread at the end (e.g. zero noise).
    pub degenerate: bool,
    /// Per checkpoint, the surviving replicas' `Z_k` (when requested).
    pub snapshots: Option<Vec<Vec<DVector<f64>>>>,
}

impl EnsembleTrace {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trace has at least one checkpoint")
    }

    pub fn final_rel_err(&self) -> f64 {
        self.final_checkpoint().rel_err
    }
}

/// Runs one replica and returns `Z_k` at each checkpoint, flattened, or
/// `None` if it went non-finite.
fn run_replica(cfg: &EnsembleConfig, table: &CoeffTable, ckpts: &[u64], replica: usize) -> Option<Vec<f64>> {
    let mut rng = replica_rng(cfg.master_seed, replica);
    let x_star = &cfg.oracle.problem.x_star;
    let d = x_star.len();
    let mut x: Vec<f64> = cfg.init.sample(x_star, &mut rng).as_slice().to_vec();
    let mut v = vec![0.0; d];
    let method = cfg.method.method();
    let mut stepper = Stepper::new(&cfg.oracle, method);
    let dim = cfg.state_dim();
    let mut out = Vec::with_capacity(ckpts.len() * dim);
    let mut k = 0u64;
    for &target in ckpts {
        while k < target {
            let c = table.coeffs[k as usize];
            if !stepper.step(&mut x, &mut v, c, &mut rng) {
                return None;
            }
            k += 1;
        }
        out.extend(x.iter().zip(x_star.iter()).map(|(a, b)| a - b));
        if method.has_velocity() {
            out.extend_from_slice(&v);
        }
    }
    Some(out)
}

/// Runs the ensemble and compares the normalized covariance against `w_star`.
pub fn run_ensemble(cfg: &EnsembleConfig, w_star: &DMatrix<f64>) -> Result<EnsembleTrace, EnsembleError> {
    if cfg.replicas < 2 {
        return Err(EnsembleError::TooFewReplicas { min: 2, got: cfg.replicas });
    }
    if cfg.n_steps == 0 {
        return Err(EnsembleError::InvalidConfig("n_steps must be positive".into()));
    }
    cfg.method.validate()?;
    let dim = cfg.state_dim();
    if w_star.nrows() != dim || w_star.ncols() != dim {
        return Err(EnsembleError::InvalidConfig(format!("W* is {}x{}, state has dimension {dim}", w_star.nrows(), w_star.ncols())));
    }
    let ckpts = cfg.checkpoints();
    let table = CoeffTable::build(&cfg.schedule, &cfg.method, cfg.scale, cfg.n_steps);
    let results: Vec<Option<Vec<f64>>> =
        (0..cfg.replicas).into_par_iter().map(|r| run_replica(cfg, &table, &ckpts, r)).collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.replicas as f64 || cfg.replicas - failed < 2 {
        return Err(EnsembleError::TooManyFailures { failed, total: cfg.replicas });
    }
    let alive: Vec<&Vec<f64>> = results.iter().flatten().collect();
    let mut checkpoints = Vec::with_capacity(ckpts.len());
    let mut snapshots = cfg.keep_snapshots.then(Vec::new);
    for (ci, &k) in ckpts.iter().enumerate() {
        let rows: Vec<Vec<f64>> = alive.iter().map(|r| r[ci * dim..(ci + 1) * dim].to_vec()).collect();
        let scale = table.scale[(k - 1) as usize];
        let (mean, v) = sample_covariance(&rows);
        let w = match cfg.estimator {
            Estimator::Centered => &v / scale,
            Estimator::Uncentered => second_moment(&rows) / scale,
        };
        let moments = LP_ORDERS
            .iter()
            .map(|p| {
                rows.iter().map(|r| r.iter().map(|z| z * z).sum::<f64>().powf(*p)).sum::<f64>() / rows.len() as f64
            })
            .collect();
        checkpoints.push(Checkpoint { k, scale, rel_err: rel_frob(&w, w_star), v, w, mean, moments });
        if let Some(s) = snapshots.as_mut() {
            s.push(rows.into_iter().map(DVector::from_vec).collect());
        }
    }
    let degenerate = frob(&checkpoints.last().expect("at least one checkpoint").v) == 0.0;
    Ok(EnsembleTrace {
        checkpoints,
        scale_rule: cfg.scale,
        estimator: cfg.estimator,
        replicas: cfg.replicas,
        failed_replicas: failed,
        w_star: w_star.clone(),
        degenerate,
        snapshots,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ScalingRow {
    pub replicas: usize,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// `rel_err(M_{i+1}) / rel_err(M_i)` for consecutive rows.
    pub ratios: Vec<f64>,
    pub mean_ratio: f64,
}

/// Table-1 shaped summary of final relative errors against replica counts.
pub fn sampling_error_scaling(rows: &[(usize, f64)]) -> ScalingTable {
    let mut sorted: Vec<(usize, f64)> = rows.to_vec();
    sorted.sort_by_key(|r| r.0);
    let ratios: Vec<f64> = sorted.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let mean_ratio = if ratios.is_empty() { f64::NAN } else { ratios.iter().sum::<f64>() / ratios.len() as f64 };
    ScalingTable {
        rows: sorted.into_iter().map(|(replicas, rel_err)| ScalingRow { replicas, rel_err }).collect(),
        ratios,
        mean_ratio,
    }
}

/// Independent ensembles (seed derived from the master seed and `M`) for each
/// replica count, each reporting its final relative error.
pub fn replica_sweep(
    cfg: &EnsembleConfig,
    replica_counts: &[usize],
    w_star: &DMatrix<f64>,
) -> Result<Vec<(usize, EnsembleTrace)>, EnsembleError> {
    replica_counts
        .iter()
        .map(|&m| {
            let mut c = cfg.clone();
            c.replicas = m;
            c.master_seed = derive_seed(cfg.master_seed, m as u64);
            run_ensemble(&c, w_star).map(|t| (m, t))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LpBound {
    pub p: f64,
    /// `(k, E‖Z_k‖^{2p} / scale_k^p)`.
    pub ratios: Vec<(u64, f64)>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Final ratio at most twice the median.
    pub bounded: bool,
}

/// Moment-bound diagnostic over the checkpoints of a trace.
pub fn lp_bound_diagnostic(trace: &EnsembleTrace, p: f64) -> Result<LpBound, EnsembleError> {
    let idx = LP_ORDERS
        .iter()
        .position(|q| *q == p)
        .ok_or_else(|| EnsembleError::InvalidConfig(format!("order p = {p} not tracked; available {LP_ORDERS:?}")))?;
    if trace.checkpoints.len() < 5 {
        return Err(EnsembleError::InvalidConfig("need at least 5 checkpoints".into()));
    }
    let ratios: Vec<(u64, f64)> = trace.checkpoints.iter().map(|c| (c.k, c.moments[idx] / c.scale.powf(p))).collect();
    let mut vals: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let last = *vals.last().expect("non-empty");
    vals.sort_by(f64::total_cmp);
    let median_ratio = vals[vals.len() / 2];
    Ok(LpBound {
        p,
        max_ratio: *vals.last().expect("non-empty"),
        median_ratio,
        bounded: last <= 2.0 * median_ratio,
        ratios,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeAveragePoint {
    pub k: u64,
    pub t_k: f64,
    pub s_k: f64,
    /// Mean over replicas of `(T_k/√S_k) x̄_k` (first coordinate sign kept).
    #[serde(serialize_with = "crate::io::serialize_vector")]
    pub scaled_mean: DVector<f64>,
    pub drift_stat: f64,
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub empirical_cov: DMatrix<f64>,
    pub rel_err: f64,
    pub escaped_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeAverageReport {
    pub t_n: f64,
    pub s_n: f64,
    #[serde(serialize_with = "crate::io::serialize_vector")]
    pub scaled_mean: DVector<f64>,
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub empirical_cov_of_scaled: DMatrix<f64>,
    /// `A⁻¹ΣA⁻¹`.
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub target: DMatrix<f64>,
    pub rel_err: f64,
    /// Euclidean norm of the mean scaled average at the final step.
    pub drift_stat: f64,
    pub growth: Vec<TimeAveragePoint>,
    /// Fraction of replicas that left the ball of radius `escape_radius` around `x*`.
    pub escaped_fraction: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug)]
pub struct TimeAverageConfig {
    pub oracle: Oracle,
    pub schedule: Schedule,
    pub init: InitDist,
    pub replicas: usize,
    pub n_steps: u64,
    pub checkpoints: Vec<u64>,
    pub master_seed: u64,
    pub escape_radius: Option<f64>,
}

/// vSGD with the weighted average `x̄_n = Σ α_k x_{k−1} / T_n`, reported as
/// `(T_n/√S_n)(x̄_n − x*)` against `A⁻¹ΣA⁻¹`.
pub fn time_average_experiment(cfg: &TimeAverageConfig) -> Result<TimeAverageReport, EnsembleError> {
    if let Some(a) = cfg.schedule.exponent() {
        if a > 0.5 {
            return Err(EnsembleError::WrongRegime(a));
        }
    } else if cfg.schedule.is_square_summable(cfg.n_steps) {
        return Err(EnsembleError::WrongRegime(f64::NAN));
    }
    if cfg.replicas < 2 {
        return Err(EnsembleError::TooFewReplicas { min: 2, got: cfg.replicas });
    }
    let mut ckpts: Vec<u64> = cfg.checkpoints.iter().copied().filter(|&k| k >= 1 && k <= cfg.n_steps).collect();
    ckpts.push(cfg.n_steps);
    ckpts.sort_unstable();
    ckpts.dedup();
    let d = cfg.oracle.dim();
    let alphas = cfg.schedule.table(cfg.n_steps);
    let mut t = Vec::with_capacity(alphas.len());
    let mut s = Vec::with_capacity(alphas.len());
    let (mut ta, mut sa) = (0.0, 0.0);
    for a in &alphas {
        ta += a;
        sa += a * a;
        t.push(ta);
        s.push(sa);
    }
    let radius = cfg.escape_radius.unwrap_or(f64::INFINITY);
    // each replica: weighted sums Σ α_k X_{k−1} at checkpoints, then an escape flag
    let results: Vec<Option<(Vec<f64>, bool)>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.master_seed, r);
            let x_star = &cfg.oracle.problem.x_star;
            let mut x: Vec<f64> = cfg.init.sample(x_star, &mut rng).as_slice().to_vec();
            let mut v = vec![0.0; d];
            let mut acc = vec![0.0; d];
            let mut stepper = Stepper::new(&cfg.oracle, Method::Vsgd);
            let mut out = Vec::with_capacity(ckpts.len() * d);
            let mut escaped = false;
            let mut k = 0u64;
            for &target in &ckpts {
                while k < target {
                    let alpha = alphas[k as usize];
                    let mut dist2 = 0.0;
                    for ((a, xi), xs) in acc.iter_mut().zip(&x).zip(x_star.iter()) {
                        let dx = xi - xs;
                        *a += alpha * dx;
                        dist2 += dx * dx;
                    }
                    escaped |= dist2 > radius * radius;
                    let c = StepCoeffs { alpha, alpha_prev: alpha, mu: 0.0 };
                    if !stepper.step(&mut x, &mut v, c, &mut rng) {
                        return None;
                    }
                    k += 1;
                }
                out.extend_from_slice(&acc);
            }
            Some((out, escaped))
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    if failed as f64 > MAX_FAILURE_FRACTION * cfg.replicas as f64 {
        return Err(EnsembleError::TooManyFailures { failed, total: cfg.replicas });
    }
    let alive: Vec<&(Vec<f64>, bool)> = results.iter().flatten().collect();
    let escaped_fraction = alive.iter().filter(|r| r.1).count() as f64 / alive.len() as f64;
    let p = &cfg.oracle.problem;
    let sigma = cfg.oracle.sigma_at_min_unchecked();
    let a_inv = p
        .hessian
        .clone()
        .try_inverse()
        .ok_or_else(|| EnsembleError::InvalidConfig("Hessian at x* is singular".into()))?;
    let target = &a_inv * sigma * &a_inv;
    let mut growth = Vec::with_capacity(ckpts.len());
    for (ci, &k) in ckpts.iter().enumerate() {
        let idx = (k - 1) as usize;
        let root = s[idx].sqrt();
        // (T_k/√S_k)(x̄_k − x*) = Σ α_j X_{j−1} / √S_k
        let rows: Vec<Vec<f64>> = alive.iter().map(|r| r.0[ci * d..(ci + 1) * d].iter().map(|v| v / root).collect()).collect();
        let (mean, cov) = sample_covariance(&rows);
        growth.push(TimeAveragePoint {
            k,
            t_k: t[idx],
            s_k: s[idx],
            drift_stat: mean.norm(),
            rel_err: rel_frob(&cov, &target),
            scaled_mean: mean,
            empirical_cov: cov,
            escaped_fraction,
        });
    }
    let last = growth.last().expect("at least the final checkpoint");
    Ok(TimeAverageReport {
        t_n: last.t_k,
        s_n: last.s_k,
        scaled_mean: last.scaled_mean.clone(),
        empirical_cov_of_scaled: last.empirical_cov.clone(),
        rel_err: last.rel_err,
        drift_stat: last.drift_stat,
        target,
        escaped_fraction,
        replicas: alive.len(),
        growth,
    })
}

/// `(k, E Z_k, Cov Z_k)`.
pub type ExactMoments = (u64, DVector<f64>, DMatrix<f64>);

/// Exact first and second moments of `Z_k` for a quadratic objective with
/// additive noise, propagated through the linear recursion of each method.
/// Returns `(k, E Z_k, Cov Z_k)` at the requested steps.
pub fn exact_linear_moments(
    oracle: &Oracle,
    schedule: &Schedule,
    method: &MethodSpec,
    z0_mean: &DVector<f64>,
    z0_cov: &DMatrix<f64>,
    steps: &[u64],
) -> Result<Vec<ExactMoments>, EnsembleError> {
    let Objective::Quadratic { a } = &oracle.problem.objective else {
        return Err(EnsembleError::InvalidConfig("exact moments need a quadratic objective".into()));
    };
    let NoiseModel::Additive { sigma, .. } = &oracle.noise else {
        return Err(EnsembleError::InvalidConfig("exact moments need additive noise".into()));
    };
    let d = a.nrows();
    let m = method.method();
    let dim = if m.has_velocity() { 2 * d } else { d };
    if z0_mean.len() != dim || z0_cov.nrows() != dim {
        return Err(EnsembleError::InvalidConfig("initial moments have the wrong dimension".into()));
    }
    let n = steps.iter().copied().max().unwrap_or(0);
    let table = CoeffTable::build(schedule, method, ScaleRule::Alpha, n);
    let i_d = DMatrix::<f64>::identity(d, d);
    let mut mean = z0_mean.clone();
    let mut cov = z0_cov.clone();
    let mut out = Vec::new();
    let mut targets: Vec<u64> = steps.to_vec();
    targets.sort_unstable();
    let mut next = targets.iter().peekable();
    for k in 1..=n {
        let c = table.coeffs[(k - 1) as usize];
        let al = c.alpha;
        let (t, b) = match m {
            Method::Vsgd => (&i_d - a * al, DMatrix::identity(d, d) * al),
            _ => {
                let damp = 1.0 - c.mu * al;
                let look = if m == Method::NasgdConst { damp * al / c.alpha_prev } else { 0.0 };
                // v' = -αA x + (damp I − α·look·A) v + αξ ;  x' = x + α v'
                let vv = &i_d * damp - a * (al * look);
                let vx = -(a * al);
                let xx = &i_d + &vx * al;
                let xv = &vv * al;
                let t = crate::linalg::block2(&xx, &xv, &vx, &vv);
                let mut b = DMatrix::zeros(2 * d, d);
                b.view_mut((0, 0), (d, d)).copy_from(&(&i_d * (al * al)));
                b.view_mut((d, 0), (d, d)).copy_from(&(&i_d * al));
                (t, b)
            }
        };
        mean = &t * &mean;
        cov = &t * &cov * t.transpose() + &b * sigma * b.transpose();
        while next.peek() == Some(&&k) {
            out.push((k, mean.clone(), cov.clone()));
            next.next();
        }
    }
    Ok(out)
}

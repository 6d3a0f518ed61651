//! SGD iterations: vanilla, heavy-ball momentum and Nesterov with constant
//! damping, and momentum with vanishing damping.
//!
//! The momentum schemes update `v` first and move `x` along the new `v`:
//!
//! ```text
//! v_k = v_{k-1} − μ_k α_k v_{k-1} − α_k g_k
//! x_k = x_{k-1} + α_k v_k
//! ```
//!
//! Nesterov evaluates `g_k` at the lookahead point `x_{k-1} + β_k v_{k-1}`
//! with `β_k = (1 − μ̃ α_k) α_k / α_{k-1}` and `α_0 := α_1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{block2, block_diag, sym_eigen};
use crate::lyapunov::{self, LyapunovError, LyapunovSolution};
use crate::problems::{Oracle, Problem};
use crate::schedules::{DampingSchedule, Schedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("iterate became non-finite at step {0}")]
    NonFinite(u64),
    #[error("drift matrix is not Hurwitz-stable (lambda_D = {0:.3e})")]
    NotHurwitz(f64),
    #[error("invalid method parameters: {0}")]
    InvalidParameter(String),
    #[error("state does not match method: {0}")]
    StateMismatch(String),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vsgd,
    MsgdConst,
    NasgdConst,
    MsgdVanishing,
}

impl Method {
    pub fn has_velocity(self) -> bool {
        self != Method::Vsgd
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Vsgd => "vsgd",
            Method::MsgdConst => "msgd_const",
            Method::NasgdConst => "nasgd_const",
            Method::MsgdVanishing => "msgd_vanishing",
        }
    }
}

/// Method together with its damping parameters.
#[derive(Clone, Debug)]
pub enum MethodSpec {
    Vsgd,
    MsgdConst { mu_tilde: f64 },
    NasgdConst { mu_tilde: f64 },
    MsgdVanishing { damping: DampingSchedule },
}

impl MethodSpec {
    pub fn method(&self) -> Method {
        match self {
            MethodSpec::Vsgd => Method::Vsgd,
            MethodSpec::MsgdConst { .. } => Method::MsgdConst,
            MethodSpec::NasgdConst { .. } => Method::NasgdConst,
            MethodSpec::MsgdVanishing { .. } => Method::MsgdVanishing,
        }
    }

    pub fn validate(&self) -> Result<(), OptError> {
        match self {
            MethodSpec::MsgdConst { mu_tilde } | MethodSpec::NasgdConst { mu_tilde } if !(*mu_tilde > 0.0) => {
                Err(OptError::InvalidParameter(format!("mu_tilde must be positive, got {mu_tilde}")))
            }
            MethodSpec::MsgdVanishing { damping } if !damping.is_vanishing() => {
                Err(OptError::InvalidParameter("vanishing-damping method needs a vanishing schedule".into()))
            }
            _ => Ok(()),
        }
    }

    /// `μ_k` (zero for vSGD).
    pub fn mu_at(&self, k: u64, alpha_sum: f64) -> f64 {
        match self {
            MethodSpec::Vsgd => 0.0,
            MethodSpec::MsgdConst { mu_tilde } | MethodSpec::NasgdConst { mu_tilde } => *mu_tilde,
            MethodSpec::MsgdVanishing { damping } => damping.mu_with_sum(k, alpha_sum),
        }
    }
}

/// Iterate `x_k` (not centred) and velocity `v_k` after `k` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub method: Method,
    pub k: u64,
    pub x: DVector<f64>,
    pub v: Option<DVector<f64>>,
    /// `α_k` of the last step taken (`α_0 := α_1` before the first step).
    pub alpha_prev: Option<f64>,
    /// `Σ_{j≤k} α_j`.
    pub alpha_sum: f64,
}

impl OptState {
    pub fn new(method: Method, x0: DVector<f64>) -> Self {
        let v = method.has_velocity().then(|| DVector::zeros(x0.len()));
        Self { method, k: 0, x: x0, v, alpha_prev: None, alpha_sum: 0.0 }
    }

    pub fn with_velocity(mut self, v0: DVector<f64>) -> Self {
        if self.method.has_velocity() {
            self.v = Some(v0);
        }
        self
    }

    /// `Z_k = (x_k − x*, v_k)`, or `X_k = x_k − x*` for vSGD.
    pub fn z(&self, x_star: &DVector<f64>) -> DVector<f64> {
        let x = &self.x - x_star;
        match &self.v {
            None => x,
            Some(v) => {
                let d = x.len();
                DVector::from_fn(2 * d, |i, _| if i < d { x[i] } else { v[i - d] })
            }
        }
    }
}

/// Step coefficients for step `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoeffs {
    pub alpha: f64,
    pub alpha_prev: f64,
    pub mu: f64,
}

/// In-place stepping kernel with reusable scratch buffers.
pub struct Stepper<'a> {
    oracle: &'a Oracle,
    method: Method,
    grad: Vec<f64>,
    look: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(oracle: &'a Oracle, method: Method) -> Self {
        let d = oracle.dim();
        Self { oracle, method, grad: vec![0.0; d], look: vec![0.0; d] }
    }

    /// Advances `(x, v)` by one step; `v` is ignored for vSGD. Returns
    /// `false` when any coordinate became non-finite.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, x: &mut [f64], v: &mut [f64], c: StepCoeffs, rng: &mut R) -> bool {
        let a = c.alpha;
        match self.method {
            Method::Vsgd => {
                self.oracle.stochastic_gradient_into(x, &mut self.grad, rng);
                for (xi, g) in x.iter_mut().zip(&self.grad) {
                    *xi -= a * g;
                }
                x.iter().all(|v| v.is_finite())
            }
            Method::MsgdConst | Method::MsgdVanishing | Method::NasgdConst => {
                let damp = 1.0 - c.mu * a;
                if self.method == Method::NasgdConst {
                    let beta = damp * a / c.alpha_prev;
                    for ((y, xi), vi) in self.look.iter_mut().zip(x.iter()).zip(v.iter()) {
                        *y = xi + beta * vi;
                    }
                    self.oracle.stochastic_gradient_into(&self.look, &mut self.grad, rng);
                } else {
                    self.oracle.stochastic_gradient_into(x, &mut self.grad, rng);
                }
                let mut finite = true;
                for ((xi, vi), g) in x.iter_mut().zip(v.iter_mut()).zip(&self.grad) {
                    *vi = damp * *vi - a * g;
                    *xi += a * *vi;
                    finite &= xi.is_finite() && vi.is_finite();
                }
                finite
            }
        }
    }
}

fn step_generic<R: Rng + ?Sized>(
    state: &OptState,
    oracle: &Oracle,
    s: &Schedule,
    spec: &MethodSpec,
    rng: &mut R,
) -> Result<OptState, OptError> {
    spec.validate()?;
    if state.method != spec.method() {
        return Err(OptError::StateMismatch(format!(
            "state is {}, step is {}",
            state.method.name(),
            spec.method().name()
        )));
    }
    let k = state.k + 1;
    let alpha = s.alpha(k);
    let alpha_sum = state.alpha_sum + alpha;
    let coeffs = StepCoeffs { alpha, alpha_prev: state.alpha_prev.unwrap_or(alpha), mu: spec.mu_at(k, alpha_sum) };
    let mut next = state.clone();
    let mut scratch = DVector::zeros(0);
    let v = next.v.as_mut().unwrap_or(&mut scratch);
    let ok = Stepper::new(oracle, state.method).step(next.x.as_mut_slice(), v.as_mut_slice(), coeffs, rng);
    if !ok {
        return Err(OptError::NonFinite(k));
    }
    next.k = k;
    next.alpha_prev = Some(alpha);
    next.alpha_sum = alpha_sum;
    Ok(next)
}

/// `x_k = x_{k−1} − α_k g_k`.
pub fn step_vsgd<R: Rng + ?Sized>(state: &OptState, oracle: &Oracle, s: &Schedule, rng: &mut R) -> Result<OptState, OptError> {
    step_generic(state, oracle, s, &MethodSpec::Vsgd, rng)
}

pub fn step_msgd_const<R: Rng + ?Sized>(
    state: &OptState,
    oracle: &Oracle,
    s: &Schedule,
    mu_tilde: f64,
    rng: &mut R,
) -> Result<OptState, OptError> {
    step_generic(state, oracle, s, &MethodSpec::MsgdConst { mu_tilde }, rng)
}

pub fn step_nasgd_const<R: Rng + ?Sized>(
    state: &OptState,
    oracle: &Oracle,
    s: &Schedule,
    mu_tilde: f64,
    rng: &mut R,
) -> Result<OptState, OptError> {
    step_generic(state, oracle, s, &MethodSpec::NasgdConst { mu_tilde }, rng)
}

pub fn step_msgd_vanishing<R: Rng + ?Sized>(
    state: &OptState,
    oracle: &Oracle,
    s: &Schedule,
    damping: &DampingSchedule,
    rng: &mut R,
) -> Result<OptState, OptError> {
    step_generic(state, oracle, s, &MethodSpec::MsgdVanishing { damping: damping.clone() }, rng)
}

/// `β_k = (1 − μ̃α_k) α_k / α_{k−1}`.
pub fn nesterov_beta(mu_tilde: f64, alpha: f64, alpha_prev: f64) -> f64 {
    (1.0 - mu_tilde * alpha) * alpha / alpha_prev
}

/// Drift matrices of the linearized iteration.
#[derive(Clone, Debug)]
pub struct SystemMatrices {
    /// `A` for vSGD, `D` for the momentum methods, `D̃` for vanishing damping.
    pub d: DMatrix<f64>,
    pub e: Option<DMatrix<f64>>,
    pub d_tilde: Option<DMatrix<f64>>,
    pub e_tilde: Option<DMatrix<f64>>,
    /// `min Re σ(D)`.
    pub lambda_d: f64,
    /// Checkable lower constant for the momentum methods.
    pub h_d: Option<f64>,
}

/// Smallest real part of the roots of `s² − b s + c = 0`.
fn min_root_real(b: f64, c: f64) -> f64 {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        // stable form of the smaller root
        let big = 0.5 * (b + disc.sqrt());
        c / big
    } else {
        0.5 * b
    }
}

/// `[[0, −I], [A, (μ̃ + A or μ̃)]]` and spectrum data for each method.
pub fn system_matrices(p: &Problem, spec: &MethodSpec) -> Result<SystemMatrices, OptError> {
    spec.validate()?;
    let a = &p.hessian;
    let n = a.nrows();
    let (eigs, _) = sym_eigen(a);
    let z = DMatrix::zeros(n, n);
    let i = DMatrix::identity(n, n);
    let mu = p.mu.unwrap_or(eigs[0]);
    let l = p.l;
    let out = match spec {
        MethodSpec::Vsgd => SystemMatrices { d: a.clone(), e: None, d_tilde: None, e_tilde: None, lambda_d: eigs[0], h_d: None },
        MethodSpec::MsgdConst { mu_tilde } => {
            let mt = *mu_tilde;
            let lambda_d = eigs.iter().map(|&lam| min_root_real(mt, lam)).fold(f64::INFINITY, f64::min);
            let zeta = mu / (2.0 * l + mt * mt);
            let h_d = (2.0 / (zeta * mu)).min(2.0 * (1.0 + mu * zeta * zeta) / mt);
            SystemMatrices {
                d: block2(&z, &(-&i), a, &(&i * mt)),
                e: Some(block2(a, &(&i * mt), &z, &z)),
                d_tilde: None,
                e_tilde: None,
                lambda_d,
                h_d: Some(h_d),
            }
        }
        MethodSpec::NasgdConst { mu_tilde } => {
            let mt = *mu_tilde;
            let lambda_d = eigs.iter().map(|&lam| min_root_real(mt + lam, lam)).fold(f64::INFINITY, f64::min);
            let zeta = (mu + mt) / (2.0 * l + mt * mt);
            let h_d = (2.0 / zeta).min(2.0 * (1.0 + mu * zeta * zeta) / mt);
            SystemMatrices {
                d: block2(&z, &(-&i), a, &(&i * mt + a)),
                e: None,
                d_tilde: None,
                e_tilde: None,
                lambda_d,
                h_d: Some(h_d),
            }
        }
        MethodSpec::MsgdVanishing { .. } => {
            let d_tilde = block2(&z, &(-&i), a, &z);
            SystemMatrices {
                d: d_tilde.clone(),
                e: None,
                d_tilde: Some(d_tilde),
                e_tilde: Some(block_diag(&z, &i)),
                lambda_d: 0.0,
                h_d: None,
            }
        }
    };
    if !matches!(spec, MethodSpec::MsgdVanishing { .. }) && !(out.lambda_d > 0.0) {
        return Err(OptError::NotHurwitz(out.lambda_d));
    }
    Ok(out)
}

/// Whether `d₀` is admissible: `d₀ < 2μ` for vSGD, `d₀ < 2λ_D` for momentum.
pub fn d0_admissible(sys: &SystemMatrices, method: Method, d0: f64) -> bool {
    match method {
        Method::MsgdVanishing => true,
        _ => d0 < 2.0 * sys.lambda_d,
    }
}

/// Limit covariance `W*` of the scaled iterate for the given method.
pub fn limit_covariance(
    p: &Problem,
    sigma: &DMatrix<f64>,
    spec: &MethodSpec,
    d0: f64,
) -> Result<LyapunovSolution, OptError> {
    let sys = system_matrices(p, spec)?;
    let a = &p.hessian;
    let sol = match spec {
        MethodSpec::Vsgd => lyapunov::vsgd_limit_cov(a, sigma, d0)?,
        MethodSpec::MsgdConst { mu_tilde } if d0 == 0.0 => lyapunov::msgd_limit_cov(a, sigma, *mu_tilde)?,
        MethodSpec::MsgdConst { .. } | MethodSpec::NasgdConst { .. } => {
            lyapunov::solve_general(&sys.d, &lyapunov::lift_sigma(sigma), d0)?
        }
        MethodSpec::MsgdVanishing { .. } => lyapunov::vanishing_limit_cov(a, sigma)?,
    };
    Ok(sol)
}

/// `f(x) − f(x*) + ‖v‖²/2`.
pub fn hamiltonian(p: &Problem, state: &OptState) -> f64 {
    let kinetic = state.v.as_ref().map_or(0.0, |v| 0.5 * v.norm_squared());
    p.value(state.x.as_slice()) - p.value(p.x_star.as_slice()) + kinetic
}

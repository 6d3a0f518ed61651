//! Limit covariances from damped Lyapunov equations
//! `M W + W Mᵀ − d₀ W = S`.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{block2, block_diag, frob, sym_eigen, symmetrize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("shifted matrix is not stable (smallest real part of spectrum {0:.3e})")]
    NotStable(f64),
    #[error("linearized Lyapunov system is numerically singular")]
    SingularSystem,
    #[error("closed-form denominator vanishes ({0:.3e})")]
    DenominatorVanishes(f64),
    #[error("A and Sigma do not commute (‖AΣ − ΣA‖ = {0:.3e})")]
    NonCommuting(f64),
    #[error("matrix is not SPD (smallest eigenvalue {0:.3e})")]
    NotSpd(f64),
    #[error("integral oracle stalled at residual {0:.3e}")]
    NoConvergence(f64),
    #[error("residual {0:.3e} above certificate threshold")]
    ResidualTooLarge(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Largest dimension accepted by [`solve_general`].
pub const MAX_DIM: usize = 64;
/// Residual certificate: `‖MW + WMᵀ − d₀W − S‖_F ≤ RESIDUAL_TOL · max(1, ‖S‖_F)`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Residual target of the quadrature oracle.
pub const ORACLE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    Kronecker,
    ClosedFormVsgd,
    ClosedFormMsgd,
    ClosedFormVanishing,
    IntegralOracle,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovSolution {
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub w: DMatrix<f64>,
    pub residual: f64,
    pub method: LyapunovMethod,
}

/// `‖MW + WMᵀ − d₀W − S‖_F`.
pub fn residual(m: &DMatrix<f64>, w: &DMatrix<f64>, s: &DMatrix<f64>, d0: f64) -> f64 {
    frob(&(m * w + w * m.transpose() - w * d0 - s))
}

/// Smallest real part of the spectrum of a general square matrix.
pub fn min_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
}

fn check_square(m: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<usize, LyapunovError> {
    let n = m.nrows();
    if !m.is_square() || s.nrows() != n || s.ncols() != n || n == 0 {
        return Err(LyapunovError::DimensionMismatch(format!(
            "M is {}x{}, S is {}x{}",
            m.nrows(),
            m.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(n)
}

fn sym_index(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Solves `(M − d₀/2 I) W + W (M − d₀/2 I)ᵀ = S` for symmetric `W` by
/// linearizing over the `n(n+1)/2` independent entries. `S` is symmetrized.
pub fn solve_general(m: &DMatrix<f64>, s: &DMatrix<f64>, d0: f64) -> Result<LyapunovSolution, LyapunovError> {
    let n = check_square(m, s)?;
    if n > MAX_DIM {
        return Err(LyapunovError::DimensionMismatch(format!("n = {n} exceeds {MAX_DIM}")));
    }
    let shifted = m - DMatrix::identity(n, n) * (0.5 * d0);
    let lo = min_real_eigenvalue(&shifted);
    if !(lo > 0.0) {
        return Err(LyapunovError::NotStable(lo));
    }
    let s = symmetrize(s);
    let size = n * (n + 1) / 2;
    let mut sys = DMatrix::zeros(size, size);
    let mut rhs = nalgebra::DVector::zeros(size);
    for i in 0..n {
        for j in i..n {
            let r = sym_index(i, j, n);
            rhs[r] = s[(i, j)];
            for k in 0..n {
                sys[(r, sym_index(k, j, n))] += shifted[(i, k)];
                sys[(r, sym_index(i, k, n))] += shifted[(j, k)];
            }
        }
    }
    let lu = sys.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(LyapunovError::SingularSystem)?;
    // a couple of refinement sweeps recover digits lost to conditioning
    for _ in 0..2 {
        let r = &rhs - &sys * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => return Err(LyapunovError::SingularSystem),
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LyapunovError::SingularSystem);
    }
    let w = DMatrix::from_fn(n, n, |i, j| x[sym_index(i, j, n)]);
    let res = residual(m, &w, &s, d0);
    if res > RESIDUAL_TOL * frob(&s).max(1.0) {
        return Err(LyapunovError::ResidualTooLarge(res));
    }
    Ok(LyapunovSolution { w, residual: res, method: LyapunovMethod::Kronecker })
}

/// `W = Q L(QᵀΣQ) Qᵀ` with `L(X)_{ij} = X_{ij} / (λ_i + λ_j − shift)`.
fn eigen_closed_form(a: &DMatrix<f64>, sigma: &DMatrix<f64>, shift: f64) -> Result<DMatrix<f64>, LyapunovError> {
    check_square(a, sigma)?;
    let (vals, q) = sym_eigen(a);
    let sp = q.transpose() * symmetrize(sigma) * &q;
    let n = vals.len();
    let mut wp = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let den = vals[i] + vals[j] - shift;
            if den <= 1e-10 {
                return Err(LyapunovError::DenominatorVanishes(den));
            }
            wp[(i, j)] = sp[(i, j)] / den;
        }
    }
    Ok(symmetrize(&(&q * wp * q.transpose())))
}

/// Limit covariance of vSGD: solution of `AW + WAᵀ − d₀W = Σ` via the
/// eigenbasis of `A` (denominators `λ_i + λ_j − d₀`).
pub fn vsgd_limit_cov(a: &DMatrix<f64>, sigma: &DMatrix<f64>, d0: f64) -> Result<LyapunovSolution, LyapunovError> {
    let w = eigen_closed_form(a, sigma, d0)?;
    let res = residual(a, &w, sigma, d0);
    Ok(LyapunovSolution { w, residual: res, method: LyapunovMethod::ClosedFormVsgd })
}

/// The eigenbasis formula with denominators `λ_i + λ_j − 2d₀`, i.e. the
/// solution of `AW + WAᵀ − 2d₀W = Σ`. Differs from [`vsgd_limit_cov`]
/// whenever `d₀ > 0`; kept so both readings can be compared.
pub fn vsgd_limit_cov_double_shift(
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    d0: f64,
) -> Result<LyapunovSolution, LyapunovError> {
    let w = eigen_closed_form(a, sigma, 2.0 * d0)?;
    let res = residual(a, &w, sigma, 2.0 * d0);
    Ok(LyapunovSolution { w, residual: res, method: LyapunovMethod::ClosedFormVsgd })
}

/// Momentum drift matrix `[[0, −I], [A, μ̃I]]`.
pub fn msgd_drift(a: &DMatrix<f64>, mu_tilde: f64) -> DMatrix<f64> {
    let n = a.nrows();
    block2(
        &DMatrix::zeros(n, n),
        &(-DMatrix::identity(n, n)),
        a,
        &(DMatrix::identity(n, n) * mu_tilde),
    )
}

/// `blockdiag(0, Σ)`.
pub fn lift_sigma(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    block_diag(&DMatrix::zeros(n, n), sigma)
}

/// Limit covariance of mSGD with constant damping and `d₀ = 0`, in closed
/// form in the eigenbasis of `A`.
pub fn msgd_limit_cov(a: &DMatrix<f64>, sigma: &DMatrix<f64>, mu_tilde: f64) -> Result<LyapunovSolution, LyapunovError> {
    check_square(a, sigma)?;
    let (vals, q) = sym_eigen(a);
    let sp = q.transpose() * symmetrize(sigma) * &q;
    let n = vals.len();
    let (mut h, mut j, mut b) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n));
    let mu = mu_tilde;
    for r in 0..n {
        for c in 0..n {
            let (li, lj) = (vals[r], vals[c]);
            let den = 2.0 * mu * mu * (li + lj) + (li - lj).powi(2);
            if den <= 1e-12 {
                return Err(LyapunovError::DenominatorVanishes(den));
            }
            h[(r, c)] = 2.0 * mu * sp[(r, c)] / den;
            j[(r, c)] = mu * (li + lj) * sp[(r, c)] / den;
            b[(r, c)] = sp[(r, c)] * (lj - li) / den;
        }
    }
    let wp = block2(&h, &b.transpose(), &b, &j);
    let qq = block_diag(&q, &q);
    let w = symmetrize(&(&qq * wp * qq.transpose()));
    let res = residual(&msgd_drift(a, mu_tilde), &w, &lift_sigma(sigma), 0.0);
    Ok(LyapunovSolution { w, residual: res, method: LyapunovMethod::ClosedFormMsgd })
}

/// Limit covariance under vanishing damping, `½ blockdiag(A⁻¹Σ, Σ)`, valid
/// when `A` and `Σ` commute. The residual is the larger of the two
/// stationarity conditions `D̃W + WD̃ᵀ = 0` and `ẼW + WẼ = blockdiag(0, Σ)`.
pub fn vanishing_limit_cov(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<LyapunovSolution, LyapunovError> {
    let n = check_square(a, sigma)?;
    let comm = frob(&(a * sigma - sigma * a));
    if comm > 1e-10 * frob(a) * frob(sigma) {
        return Err(LyapunovError::NonCommuting(comm));
    }
    let chol = a.clone().cholesky().ok_or_else(|| LyapunovError::NotSpd(crate::linalg::min_sym_eigenvalue(a)))?;
    let top = symmetrize(&chol.solve(sigma));
    let w = block_diag(&top, sigma) * 0.5;
    let z = DMatrix::zeros(n, n);
    let i = DMatrix::identity(n, n);
    let d_tilde = block2(&z, &(-&i), a, &z);
    let e_tilde = block_diag(&z, &i);
    let r1 = frob(&(&d_tilde * &w + &w * d_tilde.transpose()));
    let r2 = frob(&(&e_tilde * &w + &w * &e_tilde - lift_sigma(sigma)));
    Ok(LyapunovSolution { w, residual: r1.max(r2), method: LyapunovMethod::ClosedFormVanishing })
}

/// Symmetric inverse square root via eigendecomposition.
pub fn inv_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>, LyapunovError> {
    if !s.is_square() {
        return Err(LyapunovError::DimensionMismatch("inv_sqrt needs a square matrix".into()));
    }
    let (vals, q) = sym_eigen(s);
    if !(vals[0] > 1e-12) {
        return Err(LyapunovError::NotSpd(vals[0]));
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| v.sqrt().recip()));
    Ok(symmetrize(&(&q * d * q.transpose())))
}

/// `∫₀^h e^{−tM} S e^{−tMᵀ} dt` by Romberg extrapolation of the trapezoid rule.
fn romberg_block(m: &DMatrix<f64>, s: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    const LEVELS: usize = 12;
    let f = |t: f64| {
        let e = (m * -t).exp();
        &e * s * e.transpose()
    };
    let mut table: Vec<DMatrix<f64>> = Vec::with_capacity(LEVELS);
    let mut trap = (f(0.0) + f(h)) * (0.5 * h);
    table.push(trap.clone());
    for level in 1..LEVELS {
        let pieces = 1usize << level;
        let step = h / pieces as f64;
        let mut mid = DMatrix::zeros(m.nrows(), m.ncols());
        for k in (1..pieces).step_by(2) {
            mid += f(k as f64 * step);
        }
        trap = trap * 0.5 + mid * step;
        let mut row = vec![trap.clone()];
        let mut factor = 1.0;
        for prev in table.iter() {
            factor *= 4.0;
            let last = row.last().unwrap().clone();
            row.push((&last * factor - prev) / (factor - 1.0));
        }
        let best = row.last().unwrap().clone();
        let prev_best = table.last().unwrap().clone();
        table = row;
        if frob(&(&best - &prev_best)) <= 1e-15 * frob(&best).max(f64::MIN_POSITIVE) {
            return best;
        }
    }
    table.pop().unwrap()
}

/// Independent oracle `∫₀^∞ e^{−tM} S e^{−tMᵀ} dt` for `M W + W Mᵀ = S`.
///
/// The integral over `[0, h]` is computed by Romberg quadrature of matrix
/// exponentials, then extended by interval doubling
/// `P(2T) = P(T) + e^{−TM} P(T) e^{−TMᵀ}` until the propagator is negligible.
pub fn integral_oracle(m: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>, LyapunovError> {
    let n = check_square(m, s)?;
    let lo = min_real_eigenvalue(m);
    if !(lo > 0.0) {
        return Err(LyapunovError::NotStable(lo));
    }
    let s = symmetrize(s);
    let h = 0.25 / frob(m).max(1e-300);
    let mut p = romberg_block(m, &s, h);
    let mut e = (m * -h).exp();
    for _ in 0..200 {
        if frob(&e) < 1e-18 {
            break;
        }
        p = &p + &e * &p * e.transpose();
        e = &e * &e;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(LyapunovError::NotStable(lo));
        }
    }
    let p = symmetrize(&p);
    let res = residual(m, &p, &s, 0.0);
    if !(res <= ORACLE_TOL * frob(&s).max(1.0)) || n == 0 {
        return Err(LyapunovError::NoConvergence(res));
    }
    Ok(p)
}

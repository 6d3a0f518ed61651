//! Test objectives with known minimizers and stochastic gradient oracles.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{cholesky_lower, max_sym_eigenvalue, min_sym_eigenvalue, psd_factor, sym_eigen};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("matrix is not SPD (smallest eigenvalue {0:.3e})")]
    NotSpd(f64),
    #[error("noise covariance is degenerate (smallest eigenvalue {0:.3e})")]
    DegenerateSigma(f64),
    #[error("minimizer solve stalled at gradient norm {grad_norm:.3e} after {iterations} iterations")]
    NoConvergence { grad_norm: f64, iterations: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Gradient-norm target for [`solve_minimizer`].
pub const MINIMIZER_TOL: f64 = 1e-10;

/// Finite-sum logistic regression data with ridge penalty `β/2 ‖x‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticDataset {
    d: usize,
    /// Row-major `N × d`.
    features: Vec<f64>,
    labels: Vec<f64>,
    pub beta: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LogisticDataset {
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<f64>, beta: f64) -> Result<Self, ProblemError> {
        if d == 0 || labels.is_empty() {
            return Err(ProblemError::InvalidInput("empty dataset".into()));
        }
        if features.len() != d * labels.len() {
            return Err(ProblemError::DimensionMismatch { expected: d * labels.len(), got: features.len() });
        }
        if !(beta > 0.0) {
            return Err(ProblemError::InvalidInput(format!("beta must be positive, got {beta}")));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(ProblemError::InvalidInput("labels must be 0 or 1".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidInput("non-finite feature".into()));
        }
        Ok(Self { d, features, labels, beta })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    fn dot_row(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).iter().zip(x).map(|(w, x)| w * x).sum()
    }

    /// Adds `scale · ∇f_i(x)` (data term only, no penalty) to `out`.
    fn add_sample_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * (sigmoid(self.dot_row(i, x)) - self.labels[i]);
        for (o, w) in out.iter_mut().zip(self.row(i)) {
            *o += c * w;
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.len() as f64;
        let data: f64 = (0..self.len())
            .map(|i| {
                let t = self.dot_row(i, x);
                softplus(t) - self.labels[i] * t
            })
            .sum();
        data / n + 0.5 * self.beta * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let inv_n = 1.0 / self.len() as f64;
        out.fill(0.0);
        for i in 0..self.len() {
            self.add_sample_gradient(i, x, inv_n, out);
        }
        for (o, xi) in out.iter_mut().zip(x) {
            *o += self.beta * xi;
        }
    }

    /// `∇f_i(x)` including the penalty.
    pub fn sample_gradient(&self, i: usize, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::from_iterator(self.d, x.iter().map(|v| self.beta * v));
        self.add_sample_gradient(i, x, 1.0, out.as_mut_slice());
        out
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut h = DMatrix::zeros(d, d);
        for i in 0..self.len() {
            let s = sigmoid(self.dot_row(i, x));
            let c = s * (1.0 - s);
            let w = self.row(i);
            for a in 0..d {
                for b in a..d {
                    h[(a, b)] += c * w[a] * w[b];
                }
            }
        }
        let inv_n = 1.0 / self.len() as f64;
        for a in 0..d {
            for b in a..d {
                let v = h[(a, b)] * inv_n + if a == b { self.beta } else { 0.0 };
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        h
    }

    /// Global smoothness constant `λ_max(WᵀW) / (4N) + β`.
    pub fn smoothness(&self) -> f64 {
        let d = self.d;
        let mut g = DMatrix::zeros(d, d);
        for i in 0..self.len() {
            let w = self.row(i);
            for a in 0..d {
                for b in 0..d {
                    g[(a, b)] += w[a] * w[b];
                }
            }
        }
        max_sym_eigenvalue(&g) / (4.0 * self.len() as f64) + self.beta
    }

    /// Writes `w_1,…,w_d,y` rows.
    pub fn to_csv(&self, path: &Path) -> Result<(), ProblemError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("w_{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv(path: &Path, beta: f64) -> Result<Self, ProblemError> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let d = header.len().saturating_sub(1);
        let expected = (1..=d).map(|j| format!("w_{j}")).chain(std::iter::once("y".to_string()));
        if d == 0 || !header.iter().map(str::trim).eq(expected) {
            return Err(ProblemError::InvalidInput(format!(
                "expected header w_1,...,w_d,y, got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let (mut features, mut labels) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(ProblemError::DimensionMismatch { expected: d + 1, got: rec.len() });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    ProblemError::InvalidInput(format!("cannot parse {field:?} as a number"))
                })?;
                if j < d {
                    features.push(v);
                } else {
                    labels.push(v);
                }
            }
        }
        Self::new(d, features, labels, beta)
    }
}

/// Synthetic logistic data: standard normal features and Bernoulli labels
/// drawn from a hidden parameter with i.i.d. `N(0, 1/d)` entries.
pub fn generate_logistic(d: usize, n: usize, beta: f64, seed: u64) -> Result<LogisticDataset, ProblemError> {
    if d == 0 || n < d {
        return Err(ProblemError::InvalidInput(format!("need d >= 1 and N >= d, got d={d}, N={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (d as f64).sqrt().recip();
    let theta: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let t: f64 = row.iter().zip(&theta).map(|(w, th)| w * th).sum();
        labels.push(if rng.random::<f64>() < sigmoid(t) { 1.0 } else { 0.0 });
        features.extend(row);
    }
    LogisticDataset::new(d, features, labels, beta)
}

/// Damped Newton iteration on the (strongly convex) logistic objective.
pub fn solve_minimizer(data: &LogisticDataset) -> Result<(DVector<f64>, DMatrix<f64>), ProblemError> {
    const MAX_ITER: usize = 200;
    let d = data.dim();
    let mut x = DVector::zeros(d);
    let mut g = DVector::zeros(d);
    data.gradient_into(x.as_slice(), g.as_mut_slice());
    let mut fx = data.value(x.as_slice());
    for _ in 0..MAX_ITER {
        if g.norm() <= MINIMIZER_TOL {
            let h = data.hessian(x.as_slice());
            return Ok((x, h));
        }
        let h = data.hessian(x.as_slice());
        let step = h
            .cholesky()
            .ok_or(ProblemError::NotSpd(f64::NAN))?
            .solve(&g);
        let mut t = 1.0;
        let slope = g.dot(&step);
        loop {
            let trial = &x - &step * t;
            let ft = data.value(trial.as_slice());
            if ft <= fx - 1e-4 * t * slope || t < 1e-12 {
                x = trial;
                fx = ft;
                break;
            }
            t *= 0.5;
        }
        data.gradient_into(x.as_slice(), g.as_mut_slice());
    }
    if g.norm() <= MINIMIZER_TOL {
        let h = data.hessian(x.as_slice());
        return Ok((x, h));
    }
    Err(ProblemError::NoConvergence { grad_norm: g.norm(), iterations: MAX_ITER })
}

#[derive(Clone, Debug)]
pub enum Objective {
    /// `f(x) = ½ xᵀAx`.
    Quadratic { a: DMatrix<f64> },
    Logistic(Arc<LogisticDataset>),
    /// Scalar `f(x) = x²/2 + x³/√(1+x⁶)`; not convex away from the origin.
    Counterexample,
}

/// Objective together with its minimizer and curvature data.
#[derive(Clone, Debug)]
pub struct Problem {
    pub objective: Objective,
    pub x_star: DVector<f64>,
    /// `∇²f(x*)`.
    pub hessian: DMatrix<f64>,
    /// Global strong-convexity constant, when the objective has one.
    pub mu: Option<f64>,
    /// Global smoothness constant.
    pub l: f64,
}

/// `φ'(x) = 3x² / (1+x⁶)^{3/2}`.
pub fn counterexample_phi_prime(x: f64) -> f64 {
    3.0 * x * x / (1.0 + x.powi(6)).powf(1.5)
}

fn counterexample_phi_second(x: f64) -> f64 {
    let x6 = x.powi(6);
    (6.0 * x - 21.0 * x * x6) / (1.0 + x6).powf(2.5)
}

/// `R(x) = f'(x) − x` for the counterexample objective.
pub fn counterexample_remainder(x: f64) -> f64 {
    counterexample_phi_prime(x)
}

pub fn make_quadratic(a: DMatrix<f64>) -> Result<Problem, ProblemError> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(ProblemError::InvalidInput("A must be square and non-empty".into()));
    }
    let (vals, _) = sym_eigen(&a);
    let lo = vals[0];
    if !(lo > 0.0) {
        return Err(ProblemError::NotSpd(lo));
    }
    let d = a.nrows();
    let hi = vals[d - 1];
    Ok(Problem {
        x_star: DVector::zeros(d),
        hessian: crate::linalg::symmetrize(&a),
        mu: Some(lo),
        l: hi,
        objective: Objective::Quadratic { a: crate::linalg::symmetrize(&a) },
    })
}

pub fn make_logistic(data: LogisticDataset) -> Result<Problem, ProblemError> {
    let (x_star, hessian) = solve_minimizer(&data)?;
    Ok(Problem {
        mu: Some(data.beta),
        l: data.smoothness(),
        x_star,
        hessian,
        objective: Objective::Logistic(Arc::new(data)),
    })
}

pub fn make_counterexample() -> Problem {
    // sup |f''| on a grid; φ'' vanishes outside a few units of the origin
    let l = (0..=200_000)
        .map(|i| -5.0 + i as f64 * 5e-5)
        .map(|x| (1.0 + counterexample_phi_second(x)).abs())
        .fold(0.0, f64::max);
    Problem {
        objective: Objective::Counterexample,
        x_star: DVector::zeros(1),
        hessian: DMatrix::from_element(1, 1, 1.0),
        mu: None,
        l,
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { a } => {
                let v = DVector::from_column_slice(x);
                0.5 * v.dot(&(a * &v))
            }
            Objective::Logistic(data) => data.value(x),
            Objective::Counterexample => {
                let t = x[0];
                0.5 * t * t + t.powi(3) / (1.0 + t.powi(6)).sqrt()
            }
        }
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.objective {
            Objective::Quadratic { a } => {
                let d = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..d).map(|j| a[(i, j)] * x[j]).sum();
                }
            }
            Objective::Logistic(data) => data.gradient_into(x, out),
            Objective::Counterexample => out[0] = x[0] + counterexample_phi_prime(x[0]),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        self.gradient_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn hessian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.objective {
            Objective::Quadratic { a } => a.clone(),
            Objective::Logistic(data) => data.hessian(x.as_slice()),
            Objective::Counterexample => DMatrix::from_element(1, 1, 1.0 + counterexample_phi_second(x[0])),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.objective, Objective::Quadratic { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseDistribution {
    Gaussian,
    /// `L·u` with `u` uniform on `[−√3, √3]^d` (unit variance per coordinate).
    BoundedUniform,
}

#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// Mean of `batch_size` sample gradients drawn without replacement.
    MiniBatch { batch_size: usize },
    /// `g = ∇f(x) − ξ` with `Cov(ξ) = sigma`.
    Additive { sigma: DMatrix<f64>, distribution: NoiseDistribution },
}

impl NoiseModel {
    pub fn additive(sigma: DMatrix<f64>, distribution: NoiseDistribution) -> Self {
        NoiseModel::Additive { sigma, distribution }
    }

    pub fn zero(d: usize) -> Self {
        NoiseModel::Additive { sigma: DMatrix::zeros(d, d), distribution: NoiseDistribution::Gaussian }
    }

    /// Symmetric bounded noise `U[−b, b]` for scalar problems.
    pub fn uniform_amplitude(b: f64) -> Self {
        NoiseModel::Additive {
            sigma: DMatrix::from_element(1, 1, b * b / 3.0),
            distribution: NoiseDistribution::BoundedUniform,
        }
    }
}

/// Problem paired with a validated noise model; the stochastic gradient oracle.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub problem: Problem,
    pub noise: NoiseModel,
    /// Sampling factor `L` with `L Lᵀ = Σ` (additive noise only).
    factor: DMatrix<f64>,
    zero_noise: bool,
}

impl Oracle {
    pub fn new(problem: Problem, noise: NoiseModel) -> Result<Self, ProblemError> {
        let d = problem.dim();
        let (factor, zero_noise) = match &noise {
            NoiseModel::MiniBatch { batch_size } => {
                let Objective::Logistic(data) = &problem.objective else {
                    return Err(ProblemError::InvalidInput("mini-batch noise needs a finite-sum problem".into()));
                };
                if *batch_size == 0 || *batch_size > data.len() {
                    return Err(ProblemError::InvalidInput(format!(
                        "batch size {batch_size} outside 1..={}",
                        data.len()
                    )));
                }
                (DMatrix::zeros(0, 0), *batch_size == data.len())
            }
            NoiseModel::Additive { sigma, .. } => {
                if sigma.nrows() != d || sigma.ncols() != d {
                    return Err(ProblemError::DimensionMismatch { expected: d, got: sigma.nrows() });
                }
                let lo = min_sym_eigenvalue(sigma);
                if lo < -1e-12 * sigma.norm().max(1.0) {
                    return Err(ProblemError::NotSpd(lo));
                }
                let zero = sigma.iter().all(|v| *v == 0.0);
                (psd_factor(sigma), zero)
            }
        };
        Ok(Self { problem, noise, factor, zero_noise })
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn is_noiseless(&self) -> bool {
        self.zero_noise
    }

    /// Writes a stochastic gradient at `x` into `out`.
    pub fn stochastic_gradient_into<R: Rng + ?Sized>(&self, x: &[f64], out: &mut [f64], rng: &mut R) {
        match &self.noise {
            NoiseModel::MiniBatch { batch_size } => {
                let Objective::Logistic(data) = &self.problem.objective else { unreachable!() };
                let n = data.len();
                if *batch_size == n {
                    data.gradient_into(x, out);
                    return;
                }
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = data.beta * xi;
                }
                let scale = 1.0 / *batch_size as f64;
                if *batch_size == 1 {
                    data.add_sample_gradient(rng.random_range(0..n), x, 1.0, out);
                } else {
                    for i in rand::seq::index::sample(rng, n, *batch_size) {
                        data.add_sample_gradient(i, x, scale, out);
                    }
                }
            }
            NoiseModel::Additive { distribution, .. } => {
                self.problem.gradient_into(x, out);
                if self.zero_noise {
                    return;
                }
                let d = out.len();
                let l = &self.factor;
                for j in 0..d {
                    let z: f64 = match distribution {
                        NoiseDistribution::Gaussian => rng.sample(StandardNormal),
                        NoiseDistribution::BoundedUniform => {
                            let s3 = 3f64.sqrt();
                            rng.random_range(-s3..=s3)
                        }
                    };
                    for (i, o) in out.iter_mut().enumerate() {
                        *o -= l[(i, j)] * z;
                    }
                }
            }
        }
    }

    /// Stochastic gradient `g` and realized noise `ξ = ∇f(x) − g`.
    pub fn sample_stochastic_gradient<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        rng: &mut R,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut g = DVector::zeros(x.len());
        self.stochastic_gradient_into(x.as_slice(), g.as_mut_slice(), rng);
        let xi = self.problem.gradient(x) - &g;
        (g, xi)
    }

    /// Noise covariance at `x*`, exact by enumeration for mini-batches.
    pub fn sigma_at_min(&self) -> Result<DMatrix<f64>, ProblemError> {
        let sigma = self.sigma_at_min_unchecked();
        let lo = min_sym_eigenvalue(&sigma);
        if lo <= 1e-12 {
            return Err(ProblemError::DegenerateSigma(lo));
        }
        Ok(sigma)
    }

    /// As [`Oracle::sigma_at_min`] without the non-degeneracy check.
    pub fn sigma_at_min_unchecked(&self) -> DMatrix<f64> {
        match &self.noise {
            NoiseModel::Additive { sigma, .. } => crate::linalg::symmetrize(sigma),
            NoiseModel::MiniBatch { batch_size } => {
                let Objective::Logistic(data) = &self.problem.objective else { unreachable!() };
                let single = per_sample_covariance(data, self.problem.x_star.as_slice());
                let (n, b) = (data.len() as f64, *batch_size as f64);
                if n <= 1.0 {
                    return single * 0.0;
                }
                single * ((n - b) / (b * (n - 1.0)))
            }
        }
    }
}

/// Population covariance of `∇f_i(x)` over uniform `i`.
fn per_sample_covariance(data: &LogisticDataset, x: &[f64]) -> DMatrix<f64> {
    let d = data.dim();
    let n = data.len();
    let grads: Vec<DVector<f64>> = (0..n).map(|i| data.sample_gradient(i, x)).collect();
    let mean = grads.iter().fold(DVector::zeros(d), |acc, g| acc + g) / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for g in &grads {
        let c = g - &mean;
        cov += &c * c.transpose();
    }
    cov / n as f64
}

/// Fitted `(A6)` moment bound `E‖ξ‖³ ≤ M + K_ξ ‖∇f(x)‖³` over test points.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentBound {
    pub m: f64,
    pub k_xi: f64,
    /// Largest `E‖ξ‖³ / (M + K_ξ‖∇f‖³)` seen on the points (≤ 1 by construction).
    pub worst_ratio: f64,
}

/// Monte Carlo estimate of `E‖ξ‖³` at each point, then the tightest `M` at
/// `x*` and the smallest `K_ξ` covering every point.
pub fn fit_moment_bound<R: Rng + ?Sized>(
    oracle: &Oracle,
    points: &[DVector<f64>],
    draws: usize,
    rng: &mut R,
) -> MomentBound {
    let third = |x: &DVector<f64>, rng: &mut R| -> f64 {
        (0..draws)
            .map(|_| oracle.sample_stochastic_gradient(x, rng).1.norm().powi(3))
            .sum::<f64>()
            / draws as f64
    };
    let m = third(&oracle.problem.x_star, rng);
    let mut k_xi: f64 = 0.0;
    let mut samples = Vec::with_capacity(points.len());
    for p in points {
        let e = third(p, rng);
        let gn = oracle.problem.gradient(p).norm().powi(3);
        if gn > 0.0 {
            k_xi = k_xi.max((e - m) / gn);
        }
        samples.push((e, gn));
    }
    let worst_ratio = samples
        .iter()
        .map(|(e, gn)| e / (m + k_xi * gn).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    MomentBound { m, k_xi, worst_ratio }
}

/// Largest relative error between central finite differences and `∇f` over `points`.
pub fn gradient_fd_error(p: &Problem, points: &[DVector<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = p.gradient(x);
        let mut fd = DVector::zeros(x.len());
        for j in 0..x.len() {
            let h = 1e-5 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            fd[j] = (p.value(xp.as_slice()) - p.value(xm.as_slice())) / (2.0 * h);
        }
        let err = (&fd - &g).norm() / g.norm().max(1e-8);
        worst = worst.max(err);
    }
    worst
}

/// Largest `‖∇f(x) − ∇f(y)‖ / (L ‖x − y‖)` over the pairs (≤ 1 for an L-smooth f).
pub fn smoothness_ratio(p: &Problem, pairs: &[(DVector<f64>, DVector<f64>)]) -> f64 {
    pairs
        .iter()
        .map(|(x, y)| (p.gradient(x) - p.gradient(y)).norm() / (p.l * (x - y).norm()))
        .fold(0.0, f64::max)
}

/// Smallest `(∇f(x) − ∇f(y))ᵀ(x − y) / (μ ‖x − y‖²)` over the pairs (≥ 1 for a μ-strongly convex f).
pub fn strong_convexity_ratio(p: &Problem, pairs: &[(DVector<f64>, DVector<f64>)]) -> Option<f64> {
    let mu = p.mu?;
    Some(
        pairs
            .iter()
            .map(|(x, y)| {
                let dx = x - y;
                (p.gradient(x) - p.gradient(y)).dot(&dx) / (mu * dx.norm_squared())
            })
            .fold(f64::INFINITY, f64::min),
    )
}

/// Central finite-difference Hessian of `f` from gradients.
pub fn fd_hessian(p: &Problem, x: &DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (p.gradient(&xp) - p.gradient(&xm)) / (2.0 * step);
        h.set_column(j, &col);
    }
    crate::linalg::symmetrize(&h)
}

/// `true` when Cholesky of `m` succeeds.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    cholesky_lower(m).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_points(d: usize, n: usize, scale: f64, seed: u64) -> Vec<DVector<f64>> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| DVector::from_fn(d, |_, _| scale * r.sample::<f64, _>(StandardNormal)))
            .collect()
    }

    #[test]
    fn quadratic_constants() {
        let p = make_quadratic(DMatrix::identity(2, 2)).unwrap();
        assert_eq!((p.mu, p.l), (Some(1.0), 1.0));
        let p = make_quadratic(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        assert_relative_eq!(p.mu.unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(p.l, 4.0, max_relative = 1e-14);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(matches!(make_quadratic(bad), Err(ProblemError::NotSpd(_))));
    }

    #[test]
    fn logistic_generation_is_deterministic() {
        let a = generate_logistic(10, 1000, 0.05, 7).unwrap();
        let b = generate_logistic(10, 1000, 0.05, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_logistic(10, 1000, 0.05, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn logistic_minimizer_and_hessian() {
        let data = generate_logistic(10, 1000, 0.05, 7).unwrap();
        let p = make_logistic(data).unwrap();
        let g = p.gradient(&p.x_star);
        assert!(g.norm() <= MINIMIZER_TOL, "{}", g.norm());
        assert!(min_sym_eigenvalue(&p.hessian) >= 0.05);
        let fd = fd_hessian(&p, &p.x_star);
        assert!(crate::linalg::rel_frob(&fd, &p.hessian) <= 1e-4);
        let lo = min_sym_eigenvalue(&p.hessian);
        let hi = max_sym_eigenvalue(&p.hessian);
        assert!(p.mu.unwrap() <= lo && hi <= p.l);
    }

    #[test]
    fn degenerate_single_sample_dataset() {
        let data = LogisticDataset::new(1, vec![0.3], vec![1.0], 1.0).unwrap();
        let p = make_logistic(data).unwrap();
        assert!(min_sym_eigenvalue(&p.hessian) >= 1.0);
    }

    #[test]
    fn symmetric_dataset_has_zero_minimizer() {
        // invariance under (w, y) -> (-w, y) makes f even
        let feats = vec![0.5, -1.0, -0.5, 1.0, 2.0, 0.25, -2.0, -0.25];
        let data = LogisticDataset::new(2, feats, vec![1.0, 1.0, 0.0, 0.0], 0.1).unwrap();
        let (x, _) = solve_minimizer(&data).unwrap();
        assert!(x.norm() < 1e-12, "{x}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let data = generate_logistic(5, 200, 0.05, 3).unwrap();
        let problems = vec![
            make_quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
            make_logistic(data).unwrap(),
            make_counterexample(),
        ];
        for p in &problems {
            let pts = random_points(p.dim(), 100, 1.0, 11);
            assert!(gradient_fd_error(p, &pts) <= 1e-5, "{:?}", p.objective);
        }
    }

    #[test]
    fn smoothness_and_convexity_sampled() {
        let data = generate_logistic(5, 200, 0.05, 3).unwrap();
        let problems = vec![
            make_quadratic(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
            make_logistic(data).unwrap(),
        ];
        for p in &problems {
            let xs = random_points(p.dim(), 1000, 2.0, 5);
            let ys = random_points(p.dim(), 1000, 2.0, 6);
            let pairs: Vec<_> = xs.into_iter().zip(ys).collect();
            assert!(smoothness_ratio(p, &pairs) <= 1.0 + 1e-12);
            assert!(strong_convexity_ratio(p, &pairs).unwrap() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn counterexample_remainder_bounds() {
        for i in 0..=2_000_000 {
            let x = -100.0 + i as f64 * 1e-4;
            let r = counterexample_remainder(x);
            assert!(r <= 3.0 * x * x + 1e-15, "x = {x}");
            if x.abs() <= 1.0 {
                assert!(r >= x * x - 1e-15, "x = {x}");
            }
        }
        let p = make_counterexample();
        assert_eq!(p.gradient(&DVector::zeros(1))[0], 0.0);
        assert!(p.mu.is_none());
        // the objective is not convex: f'' < 0 somewhere
        assert!(p.hessian_at(&DVector::from_element(1, -0.5))[(0, 0)] < 0.0);
        let pts = random_points(1, 100, 3.0, 1);
        let pairs: Vec<_> = pts.iter().cloned().zip(random_points(1, 100, 3.0, 2)).collect();
        assert!(smoothness_ratio(&p, &pairs) <= 1.0 + 1e-9);
    }

    #[test]
    fn additive_noise_statistics() {
        let p = make_quadratic(DMatrix::identity(2, 2)).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        for dist in [NoiseDistribution::Gaussian, NoiseDistribution::BoundedUniform] {
            let o = Oracle::new(p.clone(), NoiseModel::additive(sigma.clone(), dist)).unwrap();
            let x = DVector::from_vec(vec![0.3, -0.2]);
            let mut r = rng(42);
            let draws: Vec<Vec<f64>> = (0..100_000)
                .map(|_| o.sample_stochastic_gradient(&x, &mut r).1.as_slice().to_vec())
                .collect();
            let (mean, cov) = crate::linalg::sample_covariance(&draws);
            for j in 0..2 {
                let se = (sigma[(j, j)] / draws.len() as f64).sqrt();
                assert!(mean[j].abs() <= 4.0 * se, "{dist:?} mean {mean}");
            }
            assert!(crate::linalg::rel_frob(&cov, &sigma) <= 0.05, "{dist:?} cov {cov}");
        }
    }

    #[test]
    fn gradient_equals_noise_at_minimizer() {
        let p = make_quadratic(DMatrix::identity(3, 3)).unwrap();
        let o = Oracle::new(p, NoiseModel::additive(DMatrix::identity(3, 3), NoiseDistribution::Gaussian)).unwrap();
        let (g, xi) = o.sample_stochastic_gradient(&DVector::zeros(3), &mut rng(1));
        assert_eq!(g, -xi);
    }

    #[test]
    fn full_batch_has_no_noise() {
        let data = generate_logistic(4, 50, 0.1, 9).unwrap();
        let p = make_logistic(data).unwrap();
        let o = Oracle::new(p, NoiseModel::MiniBatch { batch_size: 50 }).unwrap();
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let (_, xi) = o.sample_stochastic_gradient(&x, &mut rng(3));
        assert!(xi.iter().all(|v| *v == 0.0));
        assert!(o.is_noiseless());
    }

    #[test]
    fn minibatch_sigma_matches_monte_carlo() {
        let data = generate_logistic(3, 40, 0.1, 4).unwrap();
        let p = make_logistic(data).unwrap();
        for b in [1, 5] {
            let o = Oracle::new(p.clone(), NoiseModel::MiniBatch { batch_size: b }).unwrap();
            let sigma = o.sigma_at_min().unwrap();
            let mut r = rng(17);
            let draws: Vec<Vec<f64>> = (0..100_000)
                .map(|_| o.sample_stochastic_gradient(&p.x_star, &mut r).1.as_slice().to_vec())
                .collect();
            let (_, cov) = crate::linalg::sample_covariance(&draws);
            assert!(crate::linalg::rel_frob(&cov, &sigma) <= 0.05, "b={b}");
        }
    }

    #[test]
    fn two_point_dataset_sigma_is_rank_one() {
        // x* = 0 by symmetry, where the sample gradients are ±(1, 2)/2
        let data = LogisticDataset::new(2, vec![1.0, 2.0, -1.0, -2.0], vec![1.0, 1.0], 0.5).unwrap();
        let p = make_logistic(data).unwrap();
        let o = Oracle::new(p, NoiseModel::MiniBatch { batch_size: 1 }).unwrap();
        let s = o.sigma_at_min_unchecked();
        let (vals, _) = sym_eigen(&s);
        assert!(vals[0].abs() < 1e-12 && vals[1] > 0.0);
        assert!(matches!(o.sigma_at_min(), Err(ProblemError::DegenerateSigma(_))));
    }

    #[test]
    fn additive_sigma_by_definition() {
        let p = make_quadratic(DMatrix::identity(2, 2)).unwrap();
        let o = Oracle::new(p, NoiseModel::additive(DMatrix::identity(2, 2), NoiseDistribution::Gaussian)).unwrap();
        assert_eq!(o.sigma_at_min().unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn csv_round_trip() {
        let data = generate_logistic(3, 20, 0.05, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        data.to_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("w_1,w_2,w_3,y\n"));
        let back = LogisticDataset::from_csv(&path, 0.05).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn moment_bound_fit() {
        let p = make_quadratic(DMatrix::identity(2, 2)).unwrap();
        let o = Oracle::new(p, NoiseModel::additive(DMatrix::identity(2, 2), NoiseDistribution::Gaussian)).unwrap();
        let pts = random_points(2, 10, 3.0, 4);
        let fit = fit_moment_bound(&o, &pts, 5000, &mut rng(8));
        assert!(fit.m.is_finite() && fit.m > 0.0);
        assert!(fit.worst_ratio <= 1.0 + 1e-12);
    }
}

//! Shapiro–Wilk and Royston multivariate normality tests, and histogram
//! summaries.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::lyapunov::{inv_sqrt, LyapunovError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample size {0} outside the supported range 12..=5000")]
    SampleSizeOutOfRange(usize),
    #[error("sample is degenerate (zero spread)")]
    DegenerateSample,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Whitening(#[from] LyapunovError),
}

/// Default significance level.
pub const DEFAULT_SIGMA: f64 = 0.05;
/// Largest sample handed to Shapiro–Wilk; larger ensembles are thinned.
pub const MAX_SAMPLE: usize = 5000;

fn std_normal() -> Normal {
    Normal::standard()
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Shapiro–Wilk coefficients `a_1..a_{n/2}` (positive, for the upper half of
/// the order statistics).
fn sw_coefficients(n: usize) -> Vec<f64> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let norm = std_normal();
    let half = n / 2;
    let an = n as f64;
    let m: Vec<f64> = (1..=half).map(|i| norm.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = an.sqrt().recip();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    let (start, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    a[0] = a1;
    for i in start..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Normal deviate of `ln(1 − W)` (large values indicate non-normality).
fn sw_z(w: f64, n: usize) -> f64 {
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    let ln_n = (n as f64).ln();
    let m = poly(&C5, ln_n);
    let s = poly(&C6, ln_n).exp();
    ((1.0 - w).ln() - m) / s
}

/// Shapiro–Wilk `W` and its p-value (Royston's normalizing approximation).
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = sample.len();
    if !(12..=MAX_SAMPLE).contains(&n) {
        return Err(StatsError::SampleSizeOutOfRange(n));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite observation".into()));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let mut x: Vec<f64> = sample.iter().map(|v| v - mean).collect();
    let ss: f64 = x.iter().map(|v| v * v).sum();
    if ss <= 1e-300 {
        return Err(StatsError::DegenerateSample);
    }
    x.sort_by(f64::total_cmp);
    let a = sw_coefficients(n);
    let num: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ss).min(1.0);
    if w <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let z = sw_z(w, n);
    let p = if w >= 1.0 { 1.0 } else { 1.0 - std_normal().cdf(z) };
    Ok((w, p.clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NormalityReport {
    /// Royston's `H`.
    pub statistic: f64,
    pub p_value: f64,
    pub sigma_level: f64,
    /// `p − σ`.
    pub rho: f64,
    pub passed: bool,
    pub per_dimension_w: Vec<f64>,
    /// Equivalent degrees of freedom.
    pub edf: f64,
    pub n: usize,
    pub d: usize,
}

/// Pearson correlation matrix of the columns of `x` (`n × d`).
fn correlation(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let means: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let mut c = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for r in 0..n {
                s += (x[(r, i)] - means[i]) * (x[(r, j)] - means[j]);
            }
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }
    let diag: Vec<f64> = (0..d).map(|i| c[(i, i)].sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { c[(i, j)] / (diag[i] * diag[j]) })
}

/// Royston's H test on the rows of `samples` (`n × d`).
pub fn royston_test(samples: &DMatrix<f64>, sigma_level: f64) -> Result<NormalityReport, StatsError> {
    let (n, d) = samples.shape();
    if n < 20 || d == 0 {
        return Err(StatsError::InvalidInput(format!("need at least 20 rows and one column, got {n}x{d}")));
    }
    if !(0.0..1.0).contains(&sigma_level) {
        return Err(StatsError::InvalidInput(format!("significance level {sigma_level} outside [0, 1)")));
    }
    let norm = std_normal();
    let mut per_dimension_w = Vec::with_capacity(d);
    let mut r_sum = 0.0;
    for j in 0..d {
        let col: Vec<f64> = samples.column(j).iter().copied().collect();
        let (w, _) = shapiro_wilk(&col)?;
        per_dimension_w.push(w);
        let z = sw_z(w, n);
        let tail = (1.0 - norm.cdf(z)).clamp(1e-300, 1.0);
        r_sum += norm.inverse_cdf(tail / 2.0).powi(2);
    }
    let ln_n = (n as f64).ln();
    let (u, v) = (0.715, 0.21364 + 0.015124 * ln_n.powi(2) - 0.0018034 * ln_n.powi(3));
    let c = correlation(samples);
    let p = d as f64;
    let edf = if d == 1 {
        1.0
    } else {
        let mut t = 0.0;
        for i in 0..d {
            for k in 0..d {
                let cij = c[(i, k)];
                t += cij.powi(5) * (1.0 - u * (1.0 - cij).max(0.0).powf(u) / v);
            }
        }
        let mean_c = (t - p) / (p * p - p);
        p / (1.0 + (p - 1.0) * mean_c)
    };
    let h = edf * r_sum / p;
    let chi = ChiSquared::new(edf).map_err(|e| StatsError::InvalidInput(e.to_string()))?;
    let p_value = (1.0 - chi.cdf(h)).clamp(0.0, 1.0);
    let rho = p_value - sigma_level;
    Ok(NormalityReport {
        statistic: h,
        p_value,
        sigma_level,
        rho,
        passed: rho > 0.0,
        per_dimension_w,
        edf,
        n,
        d,
    })
}

/// Every `⌈M / 5000⌉`-th row, so the test sees at most [`MAX_SAMPLE`] rows.
pub fn thin_rows(rows: &[DVector<f64>]) -> Vec<&DVector<f64>> {
    let stride = rows.len().div_ceil(MAX_SAMPLE).max(1);
    rows.iter().step_by(stride).collect()
}

/// Centres the snapshot at its mean, whitens with `reference^{-1/2}` and
/// runs [`royston_test`].
pub fn whiten_and_test(
    snapshot: &[DVector<f64>],
    reference: &DMatrix<f64>,
    sigma_level: f64,
) -> Result<NormalityReport, StatsError> {
    let rows = thin_rows(snapshot);
    let n = rows.len();
    let d = reference.nrows();
    if rows.iter().any(|r| r.len() != d) {
        return Err(StatsError::InvalidInput("snapshot and reference dimensions differ".into()));
    }
    let root = inv_sqrt(reference)?;
    let mean = rows.iter().fold(DVector::zeros(d), |acc, r| acc + *r) / n.max(1) as f64;
    let mut data = DMatrix::zeros(n, d);
    for (i, r) in rows.iter().enumerate() {
        let w = &root * (*r - &mean);
        data.set_row(i, &w.transpose());
    }
    royston_test(&data, sigma_level)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub sd: f64,
}

impl Histogram {
    /// Fitted normal density at the centre of bin `i`.
    pub fn normal_density(&self, i: usize) -> f64 {
        let c = 0.5 * (self.edges[i] + self.edges[i + 1]);
        if self.sd > 0.0 {
            Normal::new(self.mean, self.sd).map_or(0.0, |n| statrs::distribution::Continuous::pdf(&n, c))
        } else {
            0.0
        }
    }
}

/// Equal-width histogram with a fitted normal (sample mean and sd).
pub fn histogram_summary(sample: &[f64], bins: usize) -> Result<Histogram, StatsError> {
    if bins < 10 {
        return Err(StatsError::InvalidInput(format!("need at least 10 bins, got {bins}")));
    }
    if sample.is_empty() || sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("sample must be non-empty and finite".into()));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = if sample.len() > 1 {
        (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0u64; bins];
    for v in sample {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts, mean, sd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Exp1, StandardNormal};

    // Reference values from the AS R94 implementation (single precision there).
    const FIXTURE: [f64; 40] = [
        1.2898516398394775, 0.015884396939157774, -0.7612077241532562, 0.4376902994707441,
        0.5211963990337511, -0.9048901286685431, -0.4300570245926826, 1.0772698417463387,
        0.13561995425978357, -0.9600697824831416, 0.07180590904388576, 0.7024041579682868,
        0.18131461860928338, -1.2443443485777568, 0.6373516649803437, 0.5812317620356805,
        -0.30638336384293396, -0.8691024515846513, 0.6455211255470334, 0.8290356787143311,
        -0.9647580751042197, -0.5904942184905193, 0.9644570687655196, 0.2998159708007615,
        -0.7158534847810412, 0.36831267369625204, 0.9642201545340401, -0.5042831661584176,
        -0.8721860455400615, 0.6821754399613164, 0.7845809168348115, -0.5684575964985794,
        -0.15856704837603108, 0.9717339308023578, -0.09386311377918113, -1.1100993709865399,
        0.36172379117685793, 0.9240582142890242, -0.5285871948764688, -0.5986795045911457,
    ];

    #[test]
    fn shapiro_wilk_reference_values() {
        let (w, p) = shapiro_wilk(&FIXTURE).unwrap();
        assert!((w - 0.9429244175220187).abs() < 1e-5, "{w}");
        assert!((p - 0.043428127712736964).abs() < 1e-3 * 0.0434, "{p}");

        let y: Vec<f64> = (1..=100).map(|i| (i as f64 * 0.37) % 1.0).collect();
        let (w, p) = shapiro_wilk(&y).unwrap();
        assert!((w - 0.9547247449577703).abs() < 1e-5, "{w}");
        assert!((p / 0.0017217221937628258 - 1.0).abs() < 1e-2, "{p}");

        let z: Vec<f64> = (1..=30).map(|i| (i as f64 * 2.3).sin().exp()).collect();
        let (w, p) = shapiro_wilk(&z).unwrap();
        assert!((w - 0.8682539963219832).abs() < 1e-5, "{w}");
        assert!((p / 0.0015322332851308096 - 1.0).abs() < 1e-2, "{p}");
    }

    #[test]
    fn shapiro_wilk_errors() {
        assert_eq!(shapiro_wilk(&[1.0; 11]), Err(StatsError::SampleSizeOutOfRange(11)));
        assert_eq!(shapiro_wilk(&[1.0; 50]), Err(StatsError::DegenerateSample));
        assert!(shapiro_wilk(&vec![0.0; 5001]).is_err());
    }

    #[test]
    fn shapiro_wilk_calibration_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut rejections = 0;
        for _ in 0..200 {
            let x: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
            let (w, p) = shapiro_wilk(&x).unwrap();
            assert!(w > 0.0 && w <= 1.0);
            if p < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / 200.0;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
        for _ in 0..20 {
            let x: Vec<f64> = (0..2000).map(|_| rng.sample(Exp1)).collect();
            assert!(shapiro_wilk(&x).unwrap().1 < 1e-3);
        }
    }

    #[test]
    fn royston_single_dimension_is_shapiro_wilk() {
        let data = DMatrix::from_column_slice(40, 1, &FIXTURE);
        let r = royston_test(&data, 0.05).unwrap();
        let (_, p) = shapiro_wilk(&FIXTURE).unwrap();
        assert!((r.p_value - p).abs() < 1e-10, "{} vs {p}", r.p_value);
        assert_eq!(r.edf, 1.0);
        assert_eq!(r.passed, p > 0.05);
    }

    #[test]
    fn royston_two_dimensional_reference() {
        let data = DMatrix::from_fn(60, 2, |r, c| {
            let i = (r + 1) as f64;
            if c == 0 {
                (i * 1.3).sin() + 0.2 * (i * 0.7).cos()
            } else {
                (i * 0.9).cos() + 0.5 * (i * 1.3).sin()
            }
        });
        let r = royston_test(&data, 0.05).unwrap();
        assert!((r.edf - 2.0127538192866306).abs() < 1e-9, "{}", r.edf);
        assert!((r.statistic / 12.274304435233352 - 1.0).abs() < 1e-3, "{}", r.statistic);
        assert!((r.p_value / 0.002196200740209144 - 1.0).abs() < 1e-2, "{}", r.p_value);
        assert!(!r.passed);
    }

    #[test]
    fn royston_calibration_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut passes = 0;
        let mut cubed_rejections = 0;
        for _ in 0..40 {
            let mut x = DMatrix::from_fn(2000, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = royston_test(&x, 0.05).unwrap();
            assert!((0.0..=1.0).contains(&r.p_value));
            assert_eq!(r.passed, r.rho > 0.0);
            if r.passed {
                passes += 1;
            }
            for i in 0..2000 {
                x[(i, 0)] = x[(i, 0)].powi(3);
            }
            if !royston_test(&x, 0.05).unwrap().passed {
                cubed_rejections += 1;
            }
        }
        assert!(passes >= 34, "{passes}");
        assert_eq!(cubed_rejections, 40);
    }

    #[test]
    fn whitening_uses_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let l = cov.clone().cholesky().unwrap().l();
        let rows: Vec<DVector<f64>> = (0..1000)
            .map(|_| &l * DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal)) + DVector::from_vec(vec![3.0, -1.0]))
            .collect();
        let r = whiten_and_test(&rows, &cov, 0.05).unwrap();
        assert_eq!(r.d, 2);
        assert!(r.edf > 1.5);
        assert!(whiten_and_test(&rows, &DMatrix::zeros(2, 2), 0.05).is_err());
    }

    #[test]
    fn thinning_caps_sample_size() {
        let rows: Vec<DVector<f64>> = (0..12_000).map(|i| DVector::from_element(1, i as f64)).collect();
        let t = thin_rows(&rows);
        assert!(t.len() <= MAX_SAMPLE);
        assert_eq!(t[1][0], 3.0);
    }

    #[test]
    fn histogram_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let h = histogram_summary(&x, 50).unwrap();
        assert_eq!(h.counts.len(), 50);
        assert_eq!(h.edges.len(), 51);
        assert_eq!(h.counts.iter().sum::<u64>(), 100_000);
        assert!(h.mean.abs() < 0.01);
        let c = histogram_summary(&[2.5; 30], 10).unwrap();
        assert_eq!(c.counts.iter().filter(|&&k| k > 0).count(), 1);
        assert!(histogram_summary(&x, 5).is_err());
    }
}

//! Learning-rate and damping schedules, plus finite-horizon certificates for
//! the asymptotic conditions the limit results place on them.
//!
//! Every condition here is a statement about limits, so a certificate can only
//! sample it: each check looks at a tail window of a finite horizon and reports
//! the numeric evidence alongside the verdict.

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Fraction of the horizon used as the tail window for limit estimates.
pub const TAIL_FRACTION: f64 = 0.2;
/// Default relative tolerance on the spread of tail estimates of `d0`.
pub const D0_REL_TOL: f64 = 1e-3;
/// Default number of `(m, n)` pairs sampled by the `h0`-slow check.
pub const H0_PAIRS: usize = 256;
/// Minimum log-log slope of partial sums accepted as divergence.
pub const DIVERGENCE_SLOPE: f64 = 0.05;
/// The `h0`-slow check fails when the fitted log-ratio drift is below `-H0_DRIFT_TOL * h0`.
pub const H0_DRIFT_TOL: f64 = 0.01;
/// Minimum decay slope (in log-log coordinates) for a sequence to count as vanishing.
pub const VANISHING_SLOPE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("tail estimates did not settle: spread {spread:.3e} around {estimate:.6e}")]
    NonConvergent { estimate: f64, spread: f64 },
    #[error("incompatible learning-rate / damping pair: {0}")]
    IncompatiblePair(String),
}

type SeqFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// User-supplied learning-rate sequence.
#[derive(Clone)]
pub struct CustomSchedule {
    name: String,
    f: SeqFn,
}

impl fmt::Debug for CustomSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSchedule").field("name", &self.name).finish()
    }
}

/// Learning-rate schedule `α_k`, `k ≥ 1`.
#[derive(Clone, Debug)]
pub enum Schedule {
    /// `α_k = K k^{-a}`.
    PowerLaw { k: f64, a: f64 },
    /// `α_k = C k^{-a} ln k` for `k ≥ 2`; `α_1` is pinned to `α_2` since `ln 1 = 0`.
    PowerLawLog { c: f64, a: f64 },
    Custom(CustomSchedule),
}

impl Schedule {
    pub fn power_law(k: f64, a: f64) -> Result<Self, ScheduleError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(ScheduleError::InvalidParameter(format!("K must be positive, got {k}")));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(ScheduleError::InvalidParameter(format!("a must lie in [0, 1], got {a}")));
        }
        Ok(Schedule::PowerLaw { k, a })
    }

    pub fn power_law_log(c: f64, a: f64) -> Result<Self, ScheduleError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(ScheduleError::InvalidParameter(format!("C must be positive, got {c}")));
        }
        if !(a > 0.0 && a <= 1.0) {
            return Err(ScheduleError::InvalidParameter(format!("a must lie in (0, 1], got {a}")));
        }
        Ok(Schedule::PowerLawLog { c, a })
    }

    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        Schedule::Custom(CustomSchedule { name: name.into(), f: Arc::new(f) })
    }

    /// `α_k`; `k = 0` is treated as `k = 1`.
    pub fn alpha(&self, k: u64) -> f64 {
        let k = k.max(1);
        match self {
            Schedule::PowerLaw { k: kk, a } => kk * (k as f64).powf(-a),
            Schedule::PowerLawLog { .. } => self.rate(k.max(2) as f64),
            Schedule::Custom(c) => (c.f)(k),
        }
    }

    /// Closed form evaluated at a real argument `t`.
    pub fn rate(&self, t: f64) -> f64 {
        match self {
            Schedule::PowerLaw { k, a } => k * t.powf(-a),
            Schedule::PowerLawLog { c, a } => c * t.powf(-a) * t.ln(),
            Schedule::Custom(c) => (c.f)(t.round().max(1.0) as u64),
        }
    }

    /// Decay exponent when the schedule is a (log-)power law.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Schedule::PowerLaw { a, .. } | Schedule::PowerLawLog { a, .. } => Some(*a),
            Schedule::Custom(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Schedule::PowerLaw { k, a } => format!("power_law(K={k}, a={a})"),
            Schedule::PowerLawLog { c, a } => format!("power_law_log(C={c}, a={a})"),
            Schedule::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// `[α_1, …, α_horizon]`.
    pub fn table(&self, horizon: u64) -> Vec<f64> {
        (1..=horizon).map(|k| self.alpha(k)).collect()
    }

    /// Numeric proxy for `Σ α_k² < ∞` (the regime in which no time-average CLT holds).
    pub fn is_square_summable(&self, horizon: u64) -> bool {
        match self {
            Schedule::PowerLaw { a, .. } | Schedule::PowerLawLog { a, .. } => *a > 0.5,
            Schedule::Custom(_) => {
                let sq: Vec<f64> = self.table(horizon).iter().map(|a| a * a).collect();
                partial_sum_slope(&sq) < DIVERGENCE_SLOPE
            }
        }
    }
}

/// `α_k` per the schedule's closed form.
pub fn alpha_at(s: &Schedule, k: u64) -> f64 {
    s.alpha(k)
}

/// Damping sequence `μ_k` for the momentum iterations.
#[derive(Clone, Debug)]
pub enum DampingSchedule {
    /// `μ_k ≡ μ̃`.
    Constant { mu: f64 },
    /// `μ_k = K_μ k^{-b}`.
    PowerLaw { k_mu: f64, b: f64 },
    /// `μ_k = K_μ / Σ_{j ≤ k} α_j` for the learning-rate schedule `base`.
    InversePartialSum { k_mu: f64, base: Box<Schedule> },
}

impl DampingSchedule {
    pub fn constant(mu: f64) -> Result<Self, ScheduleError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ScheduleError::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        Ok(DampingSchedule::Constant { mu })
    }

    pub fn power_law(k_mu: f64, b: f64) -> Result<Self, ScheduleError> {
        if !(k_mu > 0.0 && k_mu.is_finite()) {
            return Err(ScheduleError::InvalidParameter(format!("K_mu must be positive, got {k_mu}")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(ScheduleError::InvalidParameter(format!("b must lie in (0, 1), got {b}")));
        }
        Ok(DampingSchedule::PowerLaw { k_mu, b })
    }

    pub fn inverse_partial_sum(k_mu: f64, base: Schedule) -> Result<Self, ScheduleError> {
        if !(k_mu > 0.0 && k_mu.is_finite()) {
            return Err(ScheduleError::InvalidParameter(format!("K_mu must be positive, got {k_mu}")));
        }
        Ok(DampingSchedule::InversePartialSum { k_mu, base: Box::new(base) })
    }

    pub fn is_vanishing(&self) -> bool {
        !matches!(self, DampingSchedule::Constant { .. })
    }

    /// `μ_k` given `Σ_{j ≤ k} α_j` of the base schedule (ignored by the closed forms).
    pub fn mu_with_sum(&self, k: u64, partial_sum: f64) -> f64 {
        let k = k.max(1);
        match self {
            DampingSchedule::Constant { mu } => *mu,
            DampingSchedule::PowerLaw { k_mu, b } => k_mu * (k as f64).powf(-b),
            DampingSchedule::InversePartialSum { k_mu, .. } => k_mu / partial_sum,
        }
    }

    /// `μ_k`; O(k) for [`DampingSchedule::InversePartialSum`].
    pub fn mu(&self, k: u64) -> f64 {
        match self {
            DampingSchedule::InversePartialSum { base, .. } => {
                let sum: f64 = (1..=k.max(1)).map(|j| base.alpha(j)).sum();
                self.mu_with_sum(k, sum)
            }
            _ => self.mu_with_sum(k, f64::NAN),
        }
    }

    /// `[μ_1, …, μ_horizon]`.
    pub fn table(&self, horizon: u64) -> Vec<f64> {
        match self {
            DampingSchedule::InversePartialSum { base, .. } => {
                let mut sum = 0.0;
                (1..=horizon)
                    .map(|k| {
                        sum += base.alpha(k);
                        self.mu_with_sum(k, sum)
                    })
                    .collect()
            }
            _ => (1..=horizon).map(|k| self.mu_with_sum(k, f64::NAN)).collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DampingSchedule::Constant { mu } => format!("constant(mu={mu})"),
            DampingSchedule::PowerLaw { k_mu, b } => format!("power_law(K_mu={k_mu}, b={b})"),
            DampingSchedule::InversePartialSum { k_mu, base } => {
                format!("inverse_partial_sum(K_mu={k_mu}, base={})", base.label())
            }
        }
    }
}

/// One numerically checked condition.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConditionRecord {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

impl ConditionRecord {
    fn new(name: &str, value: f64, passed: bool) -> Self {
        Self { name: name.to_string(), value, passed }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ScheduleCertificate {
    pub d0_estimate: f64,
    pub h0_witness: f64,
    pub ks_witness: f64,
    pub divergence_ok: bool,
    pub sufficient_decrease_ok: bool,
    /// Smallest sampled `m` from which the slow condition held empirically.
    pub smallest_m: Option<u64>,
    /// Damping-drift constant `L_μ` (vanishing damping only).
    pub l_mu_estimate: Option<f64>,
    pub details: Vec<ConditionRecord>,
}

impl ScheduleCertificate {
    pub fn all_passed(&self) -> bool {
        self.details.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct H0SlowReport {
    pub passed: bool,
    /// Largest `K_s` satisfying the inequality on every sampled pair.
    pub ks_witness: f64,
    /// Least-squares slope of `ln(ratio / product)` against `Σ_{m<k≤n} weight_k`.
    pub drift: f64,
    pub smallest_m: Option<u64>,
    pub pairs: usize,
}

fn tail_start(len: usize) -> usize {
    // index (0-based) where the tail window begins
    len - ((len as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, len)
}

fn log_slope(x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    (y2.ln() - y1.ln()) / (x2.ln() - x1.ln())
}

/// Log-log slope of the partial sums of `seq` between `len/10` and `len`.
fn partial_sum_slope(seq: &[f64]) -> f64 {
    let len = seq.len();
    let lo = (len / 10).max(1);
    let mut sum = 0.0;
    let mut at_lo = f64::NAN;
    for (i, v) in seq.iter().enumerate() {
        sum += v;
        if i + 1 == lo {
            at_lo = sum;
        }
    }
    if !(at_lo > 0.0) || lo == len {
        return 0.0;
    }
    log_slope(lo as f64, at_lo, len as f64, sum)
}

/// Log-log slope of `seq` itself between `len/10` and `len`.
fn tail_decay_slope(seq: &[f64]) -> f64 {
    let len = seq.len();
    let lo = (len / 10).max(1);
    log_slope(lo as f64, seq[lo - 1], len as f64, seq[len - 1])
}

/// Tail-window estimate of `d0 = lim (α_k − α_{k+1}) / α_k²`.
pub fn estimate_d0(
    s: &Schedule,
    k_range: RangeInclusive<u64>,
    rel_tol: f64,
) -> Result<f64, ScheduleError> {
    let (lo, hi) = (*k_range.start().max(&1), *k_range.end());
    if hi < lo || hi - lo + 1 < 100 {
        return Err(ScheduleError::InvalidRange(format!(
            "need at least 100 indices, got {lo}..={hi}"
        )));
    }
    let width = ((hi - lo + 1) as f64 * TAIL_FRACTION).ceil() as u64;
    let start = hi + 1 - width;
    let mut sum = 0.0;
    let (mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in start..=hi {
        let a = s.alpha(k);
        let r = (a - s.alpha(k + 1)) / (a * a);
        if !r.is_finite() {
            return Err(ScheduleError::NonConvergent { estimate: r, spread: f64::INFINITY });
        }
        sum += r;
        lo_v = lo_v.min(r);
        hi_v = hi_v.max(r);
    }
    let estimate = sum / width as f64;
    let spread = hi_v - lo_v;
    if spread > rel_tol * estimate.abs().max(1.0) {
        return Err(ScheduleError::NonConvergent { estimate, spread });
    }
    Ok(estimate)
}

/// Decay-plus-divergence proxy for `α_k → 0, Σ α_k = ∞`.
pub fn check_divergence(s: &Schedule, horizon: u64) -> bool {
    let table = s.table(horizon.max(10));
    divergence_of(&table)
}

fn divergence_of(table: &[f64]) -> bool {
    let decays = table[table.len() - 1] < table[0] / 10.0;
    decays && partial_sum_slope(table) >= DIVERGENCE_SLOPE
}

/// `(α_n / α_m) / ∏_{k=m+1}^{n} (1 − h0 α_k)` for a single pair.
pub fn h0_slow_ratio(s: &Schedule, h0: f64, m: u64, n: u64) -> f64 {
    let log_prod: f64 = (m + 1..=n).map(|k| (1.0 - h0 * s.alpha(k)).ln()).sum();
    (s.alpha(n) / s.alpha(m)).ln().exp() / log_prod.exp()
}

/// Sampled check of the `h0`-slow condition over `horizon`.
pub fn check_h0_slow(
    s: &Schedule,
    h0: f64,
    samples: usize,
    horizon: u64,
) -> Result<H0SlowReport, ScheduleError> {
    let table = s.table(horizon);
    h0_slow_core(&table, &table, h0, samples)
}

/// Geometric grid of `count` integers spanning `[lo, hi]`, deduplicated.
fn geometric_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (lo_f, hi_f) = (lo as f64, hi as f64);
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 1.0 };
            (lo_f * (hi_f / lo_f).powf(t)).round() as usize
        })
        .collect();
    out.dedup();
    out
}

/// Shared machinery for the slow conditions: `gamma` is the sequence whose
/// ratio is bounded (α or β) and `weight` the sequence inside the product.
/// Both are indexed `k − 1`.
fn h0_slow_core(
    gamma: &[f64],
    weight: &[f64],
    h0: f64,
    samples: usize,
) -> Result<H0SlowReport, ScheduleError> {
    if !(h0 > 0.0) {
        return Err(ScheduleError::InvalidParameter(format!("h0 must be positive, got {h0}")));
    }
    let horizon = gamma.len();
    if horizon < 100 {
        return Err(ScheduleError::InvalidRange(format!("horizon {horizon} too short")));
    }
    let tail = (horizon / 10).max(1);
    // prefix sums indexed by k: lp[k] = Σ_{j≤k} ln(1 − h0 w_j), tw[k] = Σ_{j≤k} w_j
    let mut lp = vec![0.0; horizon + 1];
    let mut tw = vec![0.0; horizon + 1];
    let mut first_valid = 1;
    for k in 1..=horizon {
        let f = 1.0 - h0 * weight[k - 1];
        if f <= 0.0 {
            if k >= tail {
                return Err(ScheduleError::InvalidRange(format!(
                    "1 - h0*w_k = {f:.3e} <= 0 at k = {k}"
                )));
            }
            // only differences with m >= first_valid are used, so restart the sum
            first_valid = k + 1;
            lp[k] = 0.0;
        } else {
            lp[k] = lp[k - 1] + f.ln();
        }
        tw[k] = tw[k - 1] + weight[k - 1];
    }
    let log_ratio = |m: usize, n: usize| (gamma[n - 1] / gamma[m - 1]).ln() - (lp[n] - lp[m]);

    let per_m = (samples as f64).sqrt().floor().max(1.0) as usize;
    let per_n = (samples / per_m).max(1);
    let fit = |ms: &[usize]| -> (f64, f64, usize) {
        let (mut sxy, mut sxx, mut min_lr, mut count) = (0.0, 0.0, f64::INFINITY, 0);
        for &m in ms {
            for j in 1..=per_n {
                let n = ((m as f64) * (horizon as f64 / m as f64).powf(j as f64 / per_n as f64))
                    .round() as usize;
                let n = n.clamp(m + 1, horizon);
                let lr = log_ratio(m, n);
                let t = tw[n] - tw[m];
                sxy += lr * t;
                sxx += t * t;
                min_lr = min_lr.min(lr);
                count += 1;
            }
        }
        (if sxx > 0.0 { sxy / sxx } else { 0.0 }, min_lr, count)
    };

    let ms = geometric_grid(tail, (horizon / 2).max(tail), per_m);
    let (drift, min_lr, pairs) = fit(&ms);
    let passed = drift >= -H0_DRIFT_TOL * h0;

    // smallest m (on a coarse geometric grid) from which every larger grid m passes
    let coarse = geometric_grid(first_valid.max(1), (horizon / 2).max(first_valid), 24);
    let mut smallest_m = None;
    for &m in coarse.iter().rev() {
        let (d, _, _) = fit(&[m]);
        if d >= -H0_DRIFT_TOL * h0 {
            smallest_m = Some(m as u64);
        } else {
            break;
        }
    }

    Ok(H0SlowReport { passed, ks_witness: min_lr.exp(), drift, smallest_m, pairs })
}

/// Smallest `h0` on a geometric grid over `[1e-4, 1e2]` passing the slow check.
fn smallest_passing_h0(
    gamma: &[f64],
    weight: &[f64],
) -> Option<(f64, H0SlowReport)> {
    (0..=60).map(|i| 1e-4 * 10f64.powf(i as f64 / 10.0)).find_map(|h0| {
        match h0_slow_core(gamma, weight, h0, H0_PAIRS) {
            Ok(r) if r.passed => Some((h0, r)),
            _ => None,
        }
    })
}

/// Certificate for a learning-rate schedule: divergence, `d0`, and the
/// smallest `h0` for which the slow condition holds on the horizon.
pub fn certify_schedule(s: &Schedule, horizon: u64) -> ScheduleCertificate {
    let table = s.table(horizon);
    let divergence_ok = divergence_of(&table);
    let d0 = estimate_d0(s, 1..=horizon, D0_REL_TOL);
    let (d0_estimate, sufficient_decrease_ok, d0_value) = match &d0 {
        Ok(v) => (*v, *v >= -D0_REL_TOL, *v),
        Err(ScheduleError::NonConvergent { estimate, .. }) => (f64::NAN, false, *estimate),
        Err(_) => (f64::NAN, false, f64::NAN),
    };
    let witness = smallest_passing_h0(&table, &table);
    let mut details = vec![
        ConditionRecord::new("alpha_decays", table[table.len() - 1] / table[0], table[table.len() - 1] < table[0] / 10.0),
        ConditionRecord::new("alpha_sum_diverges", partial_sum_slope(&table), partial_sum_slope(&table) >= DIVERGENCE_SLOPE),
        ConditionRecord::new("sufficient_decrease", d0_value, sufficient_decrease_ok),
    ];
    let (h0_witness, ks_witness, smallest_m) = match &witness {
        Some((h0, r)) => (*h0, r.ks_witness, r.smallest_m),
        None => (f64::NAN, f64::NAN, None),
    };
    details.push(ConditionRecord::new("h0_slow", h0_witness, witness.is_some()));
    ScheduleCertificate {
        d0_estimate: if sufficient_decrease_ok { d0_estimate.max(0.0) } else { d0_estimate },
        h0_witness,
        ks_witness,
        divergence_ok,
        sufficient_decrease_ok,
        smallest_m,
        l_mu_estimate: None,
        details,
    }
}

/// Certificate for a learning-rate / vanishing-damping pair: the five
/// divergence conditions, the `β`-slow condition with weights `α_k μ_k`, and
/// sufficient decrease of `β_k = α_k / μ_k`.
///
/// Sufficient decrease is checked in relative form,
/// `(β_k − β_{k+1}) / β_k = o(α_k μ_k)`: the ratio must decay on the tail.
pub fn check_vanishing_damping(
    s: &Schedule,
    d: &DampingSchedule,
    horizon: u64,
) -> Result<ScheduleCertificate, ScheduleError> {
    if !d.is_vanishing() {
        return Err(ScheduleError::IncompatiblePair(
            "constant damping does not vanish".to_string(),
        ));
    }
    let horizon = horizon.max(1000);
    let alpha = s.table(horizon + 1);
    let mu = d.table(horizon + 1);
    let beta: Vec<f64> = alpha.iter().zip(&mu).map(|(a, m)| a / m).collect();
    let ratio_slope = tail_decay_slope(&beta[..horizon as usize]);
    if !(ratio_slope < 0.0) {
        return Err(ScheduleError::IncompatiblePair(format!(
            "alpha_k / mu_k does not decay on the tail (log-log slope {ratio_slope:.3})"
        )));
    }
    let h = horizon as usize;
    let (alpha_h, mu_h, beta_h) = (&alpha[..h], &mu[..h], &beta[..h]);
    let weight: Vec<f64> = alpha_h.iter().zip(mu_h).map(|(a, m)| a * m).collect();

    let alpha_slope = tail_decay_slope(alpha_h);
    let mu_slope = tail_decay_slope(mu_h);
    let weight_sum_slope = partial_sum_slope(&weight);

    // L_μ from (μ_{k−1} − μ_k) / (α_k μ_k) on the tail
    let start = tail_start(h).max(1);
    let l_mu_vals: Vec<f64> = (start..h).map(|i| (mu[i - 1] - mu[i]) / (alpha[i] * mu[i])).collect();
    let l_mu = l_mu_vals.iter().sum::<f64>() / l_mu_vals.len() as f64;
    let l_mu_spread = l_mu_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - l_mu_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let l_mu_ok = l_mu.is_finite() && l_mu >= -D0_REL_TOL && l_mu_spread <= D0_REL_TOL * l_mu.abs().max(1.0);

    // relative sufficient decrease of β
    let decrease: Vec<f64> = (0..h).map(|i| (beta[i] - beta[i + 1]) / (beta[i] * weight[i])).collect();
    let dec_lo = (h / 10).max(1);
    let dec_hi = h;
    let dec_final = decrease[dec_hi - 1];
    let dec_slope = if decrease[dec_lo - 1] > 0.0 && dec_final > 0.0 {
        log_slope(dec_lo as f64, decrease[dec_lo - 1], dec_hi as f64, dec_final)
    } else {
        f64::NAN
    };
    let sufficient_decrease_ok = dec_final.abs() <= D0_REL_TOL || dec_slope <= -VANISHING_SLOPE;

    let witness = smallest_passing_h0(beta_h, &weight);
    let (h0_witness, ks_witness, smallest_m) = match &witness {
        Some((h0, r)) => (*h0, r.ks_witness, r.smallest_m),
        None => (f64::NAN, f64::NAN, None),
    };
    let beta_slow_ok = witness.is_some() && h0_witness < 2.0;

    let details = vec![
        ConditionRecord::new("alpha_vanishes", alpha_slope, alpha_slope <= -VANISHING_SLOPE),
        ConditionRecord::new("mu_vanishes", mu_slope, mu_slope <= -VANISHING_SLOPE),
        ConditionRecord::new("alpha_over_mu_vanishes", ratio_slope, ratio_slope <= -VANISHING_SLOPE),
        ConditionRecord::new("alpha_mu_sum_diverges", weight_sum_slope, weight_sum_slope >= DIVERGENCE_SLOPE),
        ConditionRecord::new("mu_drift_l_mu", l_mu, l_mu_ok),
        ConditionRecord::new("beta_h0_slow", h0_witness, beta_slow_ok),
        ConditionRecord::new("beta_sufficient_decrease", dec_slope, sufficient_decrease_ok),
    ];
    let divergence_ok = details[..5].iter().all(|c| c.passed);
    Ok(ScheduleCertificate {
        d0_estimate: dec_final.max(0.0),
        h0_witness,
        ks_witness,
        divergence_ok,
        sufficient_decrease_ok,
        smallest_m,
        l_mu_estimate: Some(l_mu),
        details,
    })
}

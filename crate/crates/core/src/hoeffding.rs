//! Hoeffding confidence intervals for the setting probabilities and the
//! copy allocations they induce.
//!
//! A frequency over t copies stays within h of its probability except with
//! probability at most 2·exp(−2th²).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{BudgetProblem, DEFAULT_T_MIN};
use crate::error::{Error, Result};
use crate::quantum::DensityMatrix;
use crate::report::fmt_sig;
use crate::rng::RngSeed;
use crate::simulator::{Sampler, SamplingMethod, WitnessSampler};
use crate::witness::{build_settings, SettingProbabilities};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSpec {
    /// Per-setting deviation bounds.
    pub h: Vec<f64>,
    /// Target failure probability.
    pub delta: f64,
    /// Copies per setting.
    pub t: Vec<u64>,
}

impl ConfidenceSpec {
    pub fn uniform(settings: usize, h: f64, delta: f64, copies: u64) -> Self {
        Self {
            h: vec![h; settings],
            delta,
            t: vec![copies; settings],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.h.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(Error::domain(format!(
                "deviation bound {bad} outside (0, 1)"
            )));
        }
        check_delta(self.delta)?;
        if self.t.len() != self.h.len() {
            return Err(Error::size(
                "copy counts and deviation bounds differ in length",
            ));
        }
        Ok(())
    }

    pub fn joint_success(&self) -> Result<f64> {
        self.validate()?;
        joint_success(&self.t, &self.h)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "failure probability {delta} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Two-sided bound 2·exp(−2th²), clamped to [0, 1].
pub fn failure_probability(t: u64, h: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::domain("the bound needs at least one copy"));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::domain(format!("deviation bound {h} outside (0, 1)")));
    }
    Ok((2.0 * (-2.0 * t as f64 * h * h).exp()).min(1.0))
}

/// Π_j (1 − failure_j), each factor clamped at zero.
pub fn joint_success(t: &[u64], h: &[f64]) -> Result<f64> {
    if t.len() != h.len() {
        return Err(Error::size(format!(
            "{} copy counts for {} deviation bounds",
            t.len(),
            h.len()
        )));
    }
    t.iter().zip(h).try_fold(1.0, |acc, (&t, &h)| {
        Ok(acc * (1.0 - failure_probability(t, h)?).max(0.0))
    })
}

/// Smallest t with 2·exp(−2th²) ≤ δ.
pub fn required_copies(h: f64, delta: f64) -> Result<u64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::domain(format!("deviation bound {h} outside (0, 1)")));
    }
    check_delta(delta)?;
    let t = ((2.0 / delta).ln() / (2.0 * h * h)).ceil().max(1.0) as u64;
    // guard against the ceiling landing one short through rounding
    if failure_probability(t, h)? > delta {
        Ok(t + 1)
    } else {
        Ok(t)
    }
}

/// Half-width √(ln(2/δ)/(2t)) of the band that holds with probability 1 − δ.
pub fn band_half_width(t: u64, delta: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::domain("the band needs at least one copy"));
    }
    check_delta(delta)?;
    Ok(((2.0 / delta).ln() / (2.0 * t as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationInterval {
    pub p_minus: Vec<f64>,
    pub p_plus: Vec<f64>,
    pub k_minus: Vec<f64>,
    pub k_plus: Vec<f64>,
    pub t_minus: Vec<u64>,
    pub t_plus: Vec<u64>,
    /// Allocation at the point estimate.
    pub t_point: Vec<u64>,
}

impl AllocationInterval {
    pub fn total_minus(&self) -> u64 {
        self.t_minus.iter().sum()
    }

    pub fn total_plus(&self) -> u64 {
        self.t_plus.iter().sum()
    }
}

fn weights_scale(n: usize, j: usize) -> f64 {
    if j == 0 {
        4.0
    } else {
        (n * n) as f64
    }
}

fn closed_form(k: &[f64], epsilon: f64) -> Vec<u64> {
    if k.iter().all(|&v| v == 0.0) {
        return vec![DEFAULT_T_MIN; k.len()];
    }
    match BudgetProblem::new(k.to_vec(), epsilon).and_then(|p| crate::allocator::solve_budget(&p)) {
        Ok(a) => a.t,
        Err(_) => vec![DEFAULT_T_MIN; k.len()],
    }
}

/// Range of allocations consistent with every P_j lying in its confidence
/// interval.
///
/// Setting 1 uses P₁ ± h₁. For the rotated settings the parity expectation
/// 2P_j − 1 moves by 2h_j when the frequency moves by h_j, and the interval
/// P_j ± 2h_j is used. Endpoints are clamped to [0, 1]. k⁺ is the largest
/// variance weight over the interval (attained at 1/2 when the interval
/// straddles it), k⁻ the smallest endpoint value.
pub fn allocation_interval(
    p_hat: &SettingProbabilities,
    h: &[f64],
    epsilon0: f64,
) -> Result<AllocationInterval> {
    let m = p_hat.p.len();
    if h.len() != m {
        return Err(Error::size(format!(
            "{} deviation bounds for {m} settings",
            h.len()
        )));
    }
    if let Some(bad) = h.iter().find(|h| !(**h >= 0.0 && **h < 1.0)) {
        return Err(Error::domain(format!(
            "deviation bound {bad} outside [0, 1)"
        )));
    }
    if !(epsilon0 > 0.0) {
        return Err(Error::domain(format!(
            "epsilon0 {epsilon0} must be positive"
        )));
    }
    let n = p_hat.n;
    let mut p_minus = Vec::with_capacity(m);
    let mut p_plus = Vec::with_capacity(m);
    let mut k_minus = Vec::with_capacity(m);
    let mut k_plus = Vec::with_capacity(m);
    for (j, (&p, &hj)) in p_hat.p.iter().zip(h).enumerate() {
        let width = if j == 0 { hj } else { 2.0 * hj };
        let lo = (p - width).clamp(0.0, 1.0);
        let hi = (p + width).clamp(0.0, 1.0);
        let c = weights_scale(n, j);
        let k = |x: f64| x * (1.0 - x) / c;
        let kmax = if lo <= 0.5 && 0.5 <= hi {
            k(0.5)
        } else {
            k(lo).max(k(hi))
        };
        p_minus.push(lo);
        p_plus.push(hi);
        k_minus.push(k(lo).min(k(hi)));
        k_plus.push(kmax);
    }
    let epsilon = epsilon0 * epsilon0;
    Ok(AllocationInterval {
        t_minus: closed_form(&k_minus, epsilon),
        t_plus: closed_form(&k_plus, epsilon),
        t_point: closed_form(&p_hat.variance_weights(), epsilon),
        p_minus,
        p_plus,
        k_minus,
        k_plus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub copies: u64,
    pub truth: f64,
    pub lower: f64,
    pub upper: f64,
    pub estimates: Vec<f64>,
    pub inside: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub delta: f64,
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn coverage(&self) -> f64 {
        let total: usize = self.rows.iter().map(|r| r.estimates.len()).sum();
        let inside: usize = self.rows.iter().map(|r| r.inside).sum();
        inside as f64 / total as f64
    }

    pub fn all_inside(&self) -> bool {
        self.rows.iter().all(|r| r.inside == r.estimates.len())
    }

    pub fn to_csv(&self) -> String {
        let repeats = self
            .rows
            .iter()
            .map(|r| r.estimates.len())
            .max()
            .unwrap_or(0);
        let mut out = String::from("copies,truth,lower,upper");
        for i in 0..repeats {
            out.push_str(&format!(",estimate_{}", i + 1));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                r.copies,
                fmt_sig(r.truth),
                fmt_sig(r.lower),
                fmt_sig(r.upper)
            ));
            for e in &r.estimates {
                out.push(',');
                out.push_str(&fmt_sig(*e));
            }
            out.push('\n');
        }
        out
    }
}

fn coverage_rows(
    truth: f64,
    copy_counts: &[u64],
    delta: f64,
    repeats: usize,
    rng: RngSeed,
    draw: impl Fn(u64, RngSeed) -> f64 + Sync,
) -> Result<CoverageTable> {
    check_delta(delta)?;
    if repeats == 0 {
        return Err(Error::domain("at least one repeat is required"));
    }
    let mut rows = Vec::with_capacity(copy_counts.len());
    for (i, &copies) in copy_counts.iter().enumerate() {
        let h = band_half_width(copies, delta)?;
        let stream = rng.derive(i as u64);
        let estimates: Vec<f64> = (0..repeats)
            .into_par_iter()
            .map(|r| draw(copies, stream.derive(r as u64)))
            .collect();
        let (lower, upper) = (truth - h, truth + h);
        let inside = estimates
            .iter()
            .filter(|&&e| e >= lower && e <= upper)
            .count();
        rows.push(CoverageRow {
            copies,
            truth,
            lower,
            upper,
            estimates,
            inside,
        });
    }
    Ok(CoverageTable { delta, rows })
}

/// Simulates the setting-1 aggregate (all-H plus all-V mass) `repeats`
/// times per copy count and checks it against the Hoeffding band.
pub fn coverage_experiment(
    rho: &DensityMatrix,
    copy_counts: &[u64],
    delta: f64,
    repeats: usize,
    rng: RngSeed,
) -> Result<CoverageTable> {
    let n = rho
        .qubits()
        .ok_or_else(|| Error::size("state dimension is not a power of two"))?;
    let wd = build_settings(n)?;
    let sampler = WitnessSampler::new(rho, &wd)?;
    let setting = &wd.settings[0];
    let truth = sampler.probabilities().p[0];
    coverage_rows(truth, copy_counts, delta, repeats, rng, |copies, s| {
        setting.aggregate(&sampler.sample(0, copies, s).frequencies())
    })
}

/// Coverage of a plain Bernoulli frequency with success probability `p`.
pub fn coverage_for_probability(
    p: f64,
    copy_counts: &[u64],
    delta: f64,
    repeats: usize,
    rng: RngSeed,
) -> Result<CoverageTable> {
    let sampler = Sampler::new(&[p, 1.0 - p])?;
    coverage_rows(p, copy_counts, delta, repeats, rng, |copies, s| {
        if copies == 0 {
            return 0.0;
        }
        let c = sampler.counts(copies, &mut s.rng(), SamplingMethod::Alias);
        c[0] as f64 / copies as f64
    })
}

//! Multi-round feedback allocation.
//!
//! Round 0 measures a handful of copies per setting. Every later round
//! allocates for a smaller ε using the current estimate of P, measures only
//! the missing copies, pools all counts and re-estimates P.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate_sc_or_floor, DEFAULT_T_MIN};
use crate::error::{Error, Result};
use crate::quantum::DensityMatrix;
use crate::report::fmt_sig;
use crate::rng::RngSeed;
use crate::simulator::{estimate_fidelity, mean_std, CountTable, WitnessSampler};
use crate::witness::{build_settings, SettingProbabilities, WitnessDecomposition};

/// Decreasing sequence of squared error bounds ε¹ > ε² > ….
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSchedule {
    Explicit(Vec<f64>),
    /// start, start·ratio, … until a value reaches `final_epsilon`.
    Geometric {
        start: f64,
        ratio: f64,
        final_epsilon: f64,
    },
}

impl EpsilonSchedule {
    pub fn geometric(start: f64, ratio: f64, final_epsilon: f64) -> Self {
        Self::Geometric {
            start,
            ratio,
            final_epsilon,
        }
    }

    /// Parses `start:ratio:final` or a comma-separated list.
    pub fn parse(text: &str) -> Result<Self> {
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {s:?} in schedule")))
        };
        let schedule = if text.contains(':') {
            let parts: Vec<&str> = text.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "schedule {text:?} must look like start:ratio:final"
                )));
            }
            Self::geometric(num(parts[0])?, num(parts[1])?, num(parts[2])?)
        } else {
            Self::Explicit(text.split(',').map(num).collect::<Result<_>>()?)
        };
        schedule.values()?;
        Ok(schedule)
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match self {
            Self::Explicit(v) => v.clone(),
            Self::Geometric {
                start,
                ratio,
                final_epsilon,
            } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::Config(format!(
                        "schedule ratio {ratio} must lie in (0, 1)"
                    )));
                }
                if !(*start > 0.0) || !(*final_epsilon > 0.0) || final_epsilon > start {
                    return Err(Error::Config(format!(
                        "schedule needs 0 < final ({final_epsilon}) <= start ({start})"
                    )));
                }
                let stop = final_epsilon * (1.0 + 1e-9);
                let mut v = vec![*start];
                while *v.last().unwrap() > stop {
                    let next = v.last().unwrap() * ratio;
                    v.push(next);
                }
                v
            }
        };
        if values.is_empty() {
            return Err(Error::Config("epsilon schedule is empty".into()));
        }
        if values.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("schedule values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("schedule must be strictly decreasing".into()));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProbabilities {
    /// 1/2 for every setting.
    Half,
    /// The values of the pure target state.
    PureTarget,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub schedule: EpsilonSchedule,
    pub initial_p: InitialProbabilities,
    /// Round-0 copies per setting; a single entry applies to every setting.
    pub t_initial: Vec<u64>,
    pub t_min: u64,
}

impl AdaptiveConfig {
    pub fn new(schedule: EpsilonSchedule) -> Self {
        Self {
            schedule,
            initial_p: InitialProbabilities::Half,
            t_initial: vec![5],
            t_min: DEFAULT_T_MIN,
        }
    }

    fn initial_probabilities(&self, n: usize) -> Result<SettingProbabilities> {
        match &self.initial_p {
            InitialProbabilities::Half => Ok(SettingProbabilities::uniform(n, 0.5)),
            InitialProbabilities::PureTarget => Ok(SettingProbabilities::pure_target(n)),
            InitialProbabilities::Explicit(p) => SettingProbabilities::new(n, p.clone()),
        }
    }

    fn initial_copies(&self, settings: usize) -> Result<Vec<u64>> {
        match self.t_initial.len() {
            0 => Ok(vec![5; settings]),
            1 => Ok(vec![self.t_initial[0]; settings]),
            len if len == settings => Ok(self.t_initial.clone()),
            len => Err(Error::Config(format!(
                "{len} initial copy counts for {settings} settings"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// ε used to allocate this round; `None` for the initial round.
    pub epsilon: Option<f64>,
    /// P fed to the allocator.
    pub allocation_p: Option<Vec<f64>>,
    pub target: Vec<u64>,
    pub increments: Vec<u64>,
    pub cumulative: Vec<u64>,
    pub p_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub n: usize,
    /// Index of the last completed round.
    pub round: usize,
    pub cumulative_t: Vec<u64>,
    pub counts: Vec<CountTable>,
    pub current_p: SettingProbabilities,
    pub history: Vec<RoundRecord>,
    pub fidelity: f64,
    pub delta_f: f64,
}

impl AdaptiveState {
    pub fn total_copies(&self) -> u64 {
        self.cumulative_t.iter().sum()
    }

    /// Allocation rounds after the initial measurement.
    pub fn allocation_rounds(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,epsilon,setting,increment,cumulative,P_hat\n");
        for rec in &self.history {
            let eps = rec.epsilon.map_or_else(String::new, fmt_sig);
            for j in 0..rec.increments.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    rec.round,
                    eps,
                    j + 1,
                    rec.increments[j],
                    rec.cumulative[j],
                    fmt_sig(rec.p_hat[j])
                ));
            }
        }
        out
    }
}

/// P̂ as handed to the allocator: clamped to [1/t, 1 − 1/t] so a finite
/// sample of all-zero or all-one outcomes cannot freeze a setting.
fn clamp_for_allocation(p_hat: &[f64], t: &[u64]) -> Vec<f64> {
    p_hat
        .iter()
        .zip(t)
        .map(|(&p, &t)| {
            if t < 2 {
                0.5
            } else {
                let lo = 1.0 / t as f64;
                p.clamp(lo, 1.0 - lo)
            }
        })
        .collect()
}

fn measure_round(
    sampler: &WitnessSampler,
    counts: &mut [CountTable],
    increments: &[u64],
    rng: RngSeed,
) -> Result<()> {
    let fresh: Vec<Option<CountTable>> = increments
        .par_iter()
        .enumerate()
        .map(|(j, &inc)| (inc > 0).then(|| sampler.sample(j, inc, rng.derive(j as u64))))
        .collect();
    for (table, new) in counts.iter_mut().zip(fresh) {
        if let Some(new) = new {
            table.merge(&new)?;
        }
    }
    Ok(())
}

fn pooled_p_hat(counts: &[CountTable], wd: &WitnessDecomposition) -> Vec<f64> {
    counts
        .iter()
        .zip(&wd.settings)
        .map(|(c, s)| {
            if c.total_copies == 0 {
                0.5
            } else {
                s.aggregate(&c.frequencies()).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Runs the feedback protocol on simulated measurements of `rho`.
/// Round l draws from `rng.derive(l)`, setting j within it from `.derive(j)`.
pub fn run_adaptive(
    rho: &DensityMatrix,
    wd: &WitnessDecomposition,
    cfg: &AdaptiveConfig,
    rng: RngSeed,
) -> Result<AdaptiveState> {
    let sampler = WitnessSampler::new(rho, wd)?;
    run_adaptive_with_sampler(&sampler, cfg, rng)
}

pub fn run_adaptive_with_sampler(
    sampler: &WitnessSampler,
    cfg: &AdaptiveConfig,
    rng: RngSeed,
) -> Result<AdaptiveState> {
    let wd = sampler.witness();
    let n = wd.n;
    let m = wd.len();
    let schedule = cfg.schedule.values()?;
    let initial_p = cfg.initial_probabilities(n)?;

    let mut counts: Vec<CountTable> = wd
        .settings
        .iter()
        .enumerate()
        .map(|(j, s)| CountTable::empty(j, s.outcomes()))
        .collect();
    let mut cumulative = cfg.initial_copies(m)?;
    measure_round(sampler, &mut counts, &cumulative, rng.derive(0))?;
    let mut p_hat = pooled_p_hat(&counts, wd);
    let mut history = vec![RoundRecord {
        round: 0,
        epsilon: None,
        allocation_p: None,
        target: cumulative.clone(),
        increments: cumulative.clone(),
        cumulative: cumulative.clone(),
        p_hat: p_hat.clone(),
    }];

    for (l, &eps) in schedule.iter().enumerate() {
        let round = l + 1;
        let alloc_p = if round == 1 {
            initial_p.p.clone()
        } else {
            clamp_for_allocation(&p_hat, &cumulative)
        };
        let alloc = allocate_sc_or_floor(
            &SettingProbabilities {
                n,
                p: alloc_p.clone(),
            },
            eps.sqrt(),
            cfg.t_min,
        )?;
        let increments: Vec<u64> = alloc
            .t
            .iter()
            .zip(&cumulative)
            .map(|(target, have)| target.saturating_sub(*have))
            .collect();
        measure_round(sampler, &mut counts, &increments, rng.derive(round as u64))?;
        for (c, inc) in cumulative.iter_mut().zip(&increments) {
            *c += inc;
        }
        p_hat = pooled_p_hat(&counts, wd);
        history.push(RoundRecord {
            round,
            epsilon: Some(eps),
            allocation_p: Some(alloc_p),
            target: alloc.t,
            increments,
            cumulative: cumulative.clone(),
            p_hat: p_hat.clone(),
        });
    }

    let estimate = estimate_fidelity(&counts, wd)?;
    Ok(AdaptiveState {
        n,
        round: history.len() - 1,
        cumulative_t: cumulative,
        counts,
        current_p: SettingProbabilities { n, p: p_hat },
        history,
        fidelity: estimate.fidelity,
        delta_f: estimate.delta_f,
    })
}

/// Randomization used by the ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub epsilon_start: f64,
    pub epsilon_final: f64,
    pub initial_p_range: (f64, f64),
    pub t_initial_range: (u64, u64),
    pub t_min: u64,
}

impl Default for SweepTemplate {
    fn default() -> Self {
        Self {
            epsilon_start: 0.01,
            epsilon_final: 0.0003,
            initial_p_range: (0.25, 0.75),
            t_initial_range: (4, 7),
            t_min: DEFAULT_T_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub repeats: usize,
    pub mean_total: f64,
    pub std_total: f64,
    pub mean_rounds: f64,
    pub totals: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .min_by(|a, b| a.mean_total.total_cmp(&b.mean_total))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ratio,repeats,mean_total,std_total,mean_rounds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_sig(r.ratio),
                r.repeats,
                fmt_sig(r.mean_total),
                fmt_sig(r.std_total),
                fmt_sig(r.mean_rounds)
            ));
        }
        out
    }
}

/// Total copies of the feedback protocol as a function of the ε ratio.
///
/// Each repeat draws its own initial P and initial copies; repeat r of
/// ratio i uses stream `rng.derive(i).derive(r)`.
pub fn sweep_epsilon_ratio(
    rho: &DensityMatrix,
    ratios: &[f64],
    repeats: usize,
    template: &SweepTemplate,
    rng: RngSeed,
) -> Result<SweepReport> {
    if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::domain(format!("ratio {bad} outside (0, 1)")));
    }
    let n = rho
        .qubits()
        .ok_or_else(|| Error::size("state dimension is not a power of two"))?;
    let wd = build_settings(n)?;
    let sampler = WitnessSampler::new(rho, &wd)?;
    let (p_lo, p_hi) = template.initial_p_range;
    let (t_lo, t_hi) = template.t_initial_range;

    let mut rows = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let runs = (0..repeats)
            .into_par_iter()
            .map(|r| {
                let stream = rng.derive(i as u64).derive(r as u64);
                let mut draw = stream.derive(u64::MAX).rng();
                let cfg = AdaptiveConfig {
                    schedule: EpsilonSchedule::geometric(
                        template.epsilon_start,
                        ratio,
                        template.epsilon_final,
                    ),
                    initial_p: InitialProbabilities::Explicit(
                        (0..wd.len())
                            .map(|_| draw.random_range(p_lo..=p_hi))
                            .collect(),
                    ),
                    t_initial: (0..wd.len())
                        .map(|_| draw.random_range(t_lo..=t_hi))
                        .collect(),
                    t_min: template.t_min,
                };
                let state = run_adaptive_with_sampler(&sampler, &cfg, stream)?;
                Ok((state.total_copies(), state.allocation_rounds()))
            })
            .collect::<Result<Vec<_>>>()?;
        let totals: Vec<u64> = runs.iter().map(|r| r.0).collect();
        let as_f: Vec<f64> = totals.iter().map(|&t| t as f64).collect();
        let (mean_total, std_total) = mean_std(&as_f);
        let mean_rounds = if runs.is_empty() {
            f64::NAN
        } else {
            runs.iter().map(|r| r.1 as f64).sum::<f64>() / runs.len() as f64
        };
        rows.push(SweepRow {
            ratio,
            repeats,
            mean_total,
            std_total,
            mean_rounds,
            totals,
        });
    }
    Ok(SweepReport { rows })
}

/// Hours needed to prepare `copies` at `rate` copies per hour.
pub fn preparation_hours(copies: u64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::domain(format!("copy rate {rate} must be positive")));
    }
    Ok(copies as f64 / rate)
}

/// Photon-source arithmetic for scaling an eight-photon rate to ten photons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenPhotonCost {
    /// Eight-photon coincidence rate in Hz.
    pub rate8: f64,
    /// Implied two-photon rate, rate8^(1/4), in Hz.
    pub two_photon_rate: f64,
    /// Ten-photon copies per hour, (rate8 · 3600)^(5/4).
    pub copies_per_hour: f64,
    pub copies: u64,
    pub hours: f64,
    pub days: f64,
}

/// Time to collect `copies` ten-photon events when each photon pair is
/// produced at the rate implied by the eight-photon rate.
pub fn ten_photon_cost(rate8: f64, copies: u64) -> Result<TenPhotonCost> {
    if !(rate8 > 0.0) || !rate8.is_finite() {
        return Err(Error::domain(format!(
            "eight-photon rate {rate8} must be positive"
        )));
    }
    let copies_per_hour = (rate8 * 3600.0).powf(1.25);
    let hours = preparation_hours(copies, copies_per_hour)?;
    Ok(TenPhotonCost {
        rate8,
        two_photon_rate: rate8.powf(0.25),
        copies_per_hour,
        copies,
        hours,
        days: hours / 24.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTime {
    pub round: usize,
    pub copies: u64,
    pub switches: usize,
    pub preparation_hours: f64,
    pub switching_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub rounds: Vec<RoundTime>,
    pub total_copies: u64,
    pub switches: usize,
    pub hours: f64,
    /// Same copies measured setting after setting in a single pass.
    pub single_pass_switches: usize,
    pub single_pass_hours: f64,
}

/// Wall-clock estimate of an adaptive run: preparation at `copy_rate`
/// copies per hour plus `switch_cost_hours` for every setting visited.
pub fn protocol_timeline(
    state: &AdaptiveState,
    switch_cost_hours: f64,
    copy_rate: f64,
) -> Result<Timeline> {
    if !(switch_cost_hours >= 0.0) {
        return Err(Error::domain("switch cost must be >= 0"));
    }
    let mut rounds = Vec::with_capacity(state.history.len());
    for rec in &state.history {
        let copies: u64 = rec.increments.iter().sum();
        let switches = rec.increments.iter().filter(|&&c| c > 0).count();
        rounds.push(RoundTime {
            round: rec.round,
            copies,
            switches,
            preparation_hours: preparation_hours(copies, copy_rate)?,
            switching_hours: switches as f64 * switch_cost_hours,
        });
    }
    let total_copies = state.total_copies();
    let switches = rounds.iter().map(|r| r.switches).sum();
    let hours = rounds
        .iter()
        .map(|r| r.preparation_hours + r.switching_hours)
        .sum();
    let single_pass_switches = state.cumulative_t.iter().filter(|&&c| c > 0).count();
    Ok(Timeline {
        rounds,
        total_copies,
        switches,
        hours,
        single_pass_switches,
        single_pass_hours: preparation_hours(total_copies, copy_rate)?
            + single_pass_switches as f64 * switch_cost_hours,
    })
}

//! Born-rule simulation of the measurement process.
//!
//! Every copy assigned to a setting is projected onto one outcome of that
//! setting's basis. The default sampler follows the classic procedure: lay
//! the outcome probabilities end to end on [0, 1), draw a uniform number and
//! find the sub-interval it falls into. An alias table gives the same
//! distribution in O(1) per draw.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::CopyAllocation;
use crate::error::{Error, Result};
use crate::quantum::DensityMatrix;
use crate::report::fmt_sig;
use crate::rng::RngSeed;
use crate::witness::{
    delta_f, fidelity_from_probabilities, setting_probabilities, MeasurementSetting,
    SettingProbabilities, WitnessDecomposition,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    #[default]
    InverseCdf,
    Alias,
}

/// Categorical sampler over a fixed probability vector.
#[derive(Debug, Clone)]
pub struct Sampler {
    cdf: Vec<f64>,
    alias_prob: Vec<f64>,
    alias_index: Vec<usize>,
}

impl Sampler {
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::size("no outcomes to sample from"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain(
                "outcome probabilities must be finite and >= 0",
            ));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("outcome probabilities sum to zero"));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();

        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        // close the last non-empty interval at exactly 1
        let last = probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(probs.len() - 1);
        for c in &mut cdf[last..] {
            *c = 1.0;
        }

        // Vose's alias method
        let m = probs.len();
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * m as f64).collect();
        let mut alias_prob = vec![1.0; m];
        let mut alias_index: Vec<usize> = (0..m).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..m).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias_prob[s] = scaled[s];
            alias_index[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }

        Ok(Self {
            cdf,
            alias_prob,
            alias_index,
        })
    }

    pub fn outcomes(&self) -> usize {
        self.cdf.len()
    }

    pub fn draw(&self, rng: &mut impl Rng, method: SamplingMethod) -> usize {
        match method {
            SamplingMethod::InverseCdf => {
                let u: f64 = rng.random();
                self.cdf
                    .partition_point(|&c| c <= u)
                    .min(self.cdf.len() - 1)
            }
            SamplingMethod::Alias => {
                let i = rng.random_range(0..self.alias_prob.len());
                let u: f64 = rng.random();
                if u < self.alias_prob[i] {
                    i
                } else {
                    self.alias_index[i]
                }
            }
        }
    }

    pub fn counts(&self, copies: u64, rng: &mut impl Rng, method: SamplingMethod) -> Vec<u64> {
        let mut counts = vec![0u64; self.outcomes()];
        for _ in 0..copies {
            counts[self.draw(rng, method)] += 1;
        }
        counts
    }
}

/// Outcome counts of one setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub setting_index: usize,
    pub total_copies: u64,
    pub counts: Vec<u64>,
}

impl CountTable {
    pub fn new(setting_index: usize, counts: Vec<u64>) -> Self {
        let total_copies = counts.iter().sum();
        Self {
            setting_index,
            total_copies,
            counts,
        }
    }

    pub fn empty(setting_index: usize, outcomes: usize) -> Self {
        Self::new(setting_index, vec![0; outcomes])
    }

    pub fn frequencies(&self) -> Vec<f64> {
        if self.total_copies == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.total_copies as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Adds another table's counts for the same setting.
    pub fn merge(&mut self, other: &CountTable) -> Result<()> {
        if other.counts.len() != self.counts.len() {
            return Err(Error::size("cannot merge count tables of different widths"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_copies += other.total_copies;
        Ok(())
    }
}

/// Precomputed per-setting samplers for one state and witness.
#[derive(Debug, Clone)]
pub struct WitnessSampler {
    wd: WitnessDecomposition,
    samplers: Vec<Sampler>,
    probabilities: SettingProbabilities,
    pub method: SamplingMethod,
}

impl WitnessSampler {
    pub fn new(rho: &DensityMatrix, wd: &WitnessDecomposition) -> Result<Self> {
        let samplers = wd
            .settings
            .iter()
            .map(|s| Sampler::new(&s.outcome_probabilities(rho)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            wd: wd.clone(),
            samplers,
            probabilities: setting_probabilities(rho, wd)?,
            method: SamplingMethod::default(),
        })
    }

    pub fn with_method(mut self, method: SamplingMethod) -> Self {
        self.method = method;
        self
    }

    pub fn witness(&self) -> &WitnessDecomposition {
        &self.wd
    }

    /// Exact P_j of the underlying state.
    pub fn probabilities(&self) -> &SettingProbabilities {
        &self.probabilities
    }

    pub fn sample(&self, setting_index: usize, copies: u64, rng: RngSeed) -> CountTable {
        let mut r = rng.rng();
        CountTable::new(
            setting_index,
            self.samplers[setting_index].counts(copies, &mut r, self.method),
        )
    }

    /// One full measurement run; setting j draws from `rng.derive(j)`.
    pub fn sample_all(&self, t: &[u64], rng: RngSeed) -> Result<Vec<CountTable>> {
        if t.len() != self.samplers.len() {
            return Err(Error::size(format!(
                "{} copy counts for {} settings",
                t.len(),
                self.samplers.len()
            )));
        }
        Ok(t.iter()
            .enumerate()
            .map(|(j, &copies)| self.sample(j, copies, rng.derive(j as u64)))
            .collect())
    }

    pub fn estimate(&self, t: &[u64], rng: RngSeed) -> Result<FidelityEstimate> {
        estimate_fidelity(&self.sample_all(t, rng)?, &self.wd)
    }
}

/// Samples `copies` outcomes of one setting.
pub fn sample_setting(
    rho: &DensityMatrix,
    s: &MeasurementSetting,
    copies: u64,
    rng: RngSeed,
) -> Result<CountTable> {
    let sampler = Sampler::new(&s.outcome_probabilities(rho)?)?;
    let mut r = rng.rng();
    Ok(CountTable::new(
        0,
        sampler.counts(copies, &mut r, SamplingMethod::InverseCdf),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub fidelity: f64,
    pub delta_f: f64,
    pub probabilities: SettingProbabilities,
}

/// F̂ and ΔF̂ from one count table per setting.
pub fn estimate_fidelity(
    tables: &[CountTable],
    wd: &WitnessDecomposition,
) -> Result<FidelityEstimate> {
    if tables.len() != wd.len() {
        return Err(Error::size(format!(
            "{} count tables for {} settings",
            tables.len(),
            wd.len()
        )));
    }
    let mut p = Vec::with_capacity(tables.len());
    let mut t = Vec::with_capacity(tables.len());
    for (table, setting) in tables.iter().zip(&wd.settings) {
        if table.total_copies == 0 {
            return Err(Error::domain(format!(
                "setting {} has no recorded copies",
                table.setting_index + 1
            )));
        }
        if table.counts.len() != setting.outcomes() {
            return Err(Error::size("count table width does not match the setting"));
        }
        p.push(setting.aggregate(&table.frequencies()).clamp(0.0, 1.0));
        t.push(table.total_copies);
    }
    let probabilities = SettingProbabilities { n: wd.n, p };
    Ok(FidelityEstimate {
        fidelity: fidelity_from_probabilities(&probabilities),
        delta_f: delta_f(&probabilities, &t)?,
        probabilities,
    })
}

/// Equal-width histogram over [0, 1].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub events: Vec<u64>,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self::new(50)
    }
}

impl HistogramSpec {
    pub fn new(bins: usize) -> Self {
        let bins = bins.max(1);
        Self {
            bins,
            events: vec![0; bins],
        }
    }

    /// Values outside [0, 1] land in the edge bins.
    pub fn bin_of(&self, value: f64) -> usize {
        let idx = (value * self.bins as f64).floor();
        if idx.is_nan() || idx < 0.0 {
            0
        } else {
            (idx as usize).min(self.bins - 1)
        }
    }

    pub fn add(&mut self, value: f64) {
        let b = self.bin_of(value);
        self.events[b] += 1;
    }

    pub fn merge(&mut self, other: &HistogramSpec) {
        for (a, b) in self.events.iter_mut().zip(&other.events) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.events.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let w = 1.0 / self.bins as f64;
        let mut out = String::from("bin_low,bin_high,events\n");
        for (i, e) in self.events.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_sig(i as f64 * w),
                fmt_sig((i + 1) as f64 * w),
                e
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub histogram: HistogramSpec,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub estimates: Vec<f64>,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Repeats the whole measurement `trials` times and bins the fidelity
/// estimates. Trial i uses stream `rng.derive(i)`.
pub fn run_histogram_experiment(
    rho: &DensityMatrix,
    allocation: &CopyAllocation,
    trials: usize,
    spec: HistogramSpec,
    rng: RngSeed,
) -> Result<HistogramReport> {
    let wd = crate::witness::build_settings(
        rho.qubits()
            .ok_or_else(|| Error::size("state dimension is not a power of two"))?,
    )?;
    let sampler = WitnessSampler::new(rho, &wd)?;
    histogram_with_sampler(&sampler, allocation, trials, spec, rng)
}

pub fn histogram_with_sampler(
    sampler: &WitnessSampler,
    allocation: &CopyAllocation,
    trials: usize,
    mut spec: HistogramSpec,
    rng: RngSeed,
) -> Result<HistogramReport> {
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    let estimates = (0..trials)
        .into_par_iter()
        .map(|i| {
            sampler
                .estimate(&allocation.t, rng.derive(i as u64))
                .map(|e| e.fidelity)
        })
        .collect::<Result<Vec<f64>>>()?;
    spec.events = vec![0; spec.bins];
    for &f in &estimates {
        spec.add(f);
    }
    let (mean, std) = mean_std(&estimates);
    Ok(HistogramReport {
        histogram: spec,
        trials,
        mean,
        std,
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub t: Vec<u64>,
    pub total: u64,
    /// ΔF from the binomial formula at the true P_j.
    pub predicted_delta_f: f64,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    /// 1 − total / baseline total.
    pub savings: f64,
    pub histogram: HistogramSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub true_fidelity: f64,
    pub probabilities: SettingProbabilities,
    pub trials: usize,
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("name,total,predicted_delta_f,mean_fidelity,std_fidelity,savings\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.name,
                r.total,
                fmt_sig(r.predicted_delta_f),
                fmt_sig(r.mean_fidelity),
                fmt_sig(r.std_fidelity),
                fmt_sig(r.savings)
            ));
        }
        out
    }
}

/// Runs the histogram experiment for each named allocation (the first one
/// is the savings baseline). All allocations share the same trial streams.
pub fn compare_distributions(
    rho: &DensityMatrix,
    allocations: &[(String, CopyAllocation)],
    trials: usize,
    rng: RngSeed,
) -> Result<ComparisonReport> {
    compare_distributions_with(rho, allocations, trials, HistogramSpec::default(), rng)
}

pub fn compare_distributions_with(
    rho: &DensityMatrix,
    allocations: &[(String, CopyAllocation)],
    trials: usize,
    spec: HistogramSpec,
    rng: RngSeed,
) -> Result<ComparisonReport> {
    if allocations.len() < 2 {
        return Err(Error::domain("comparison needs at least two allocations"));
    }
    let n = rho
        .qubits()
        .ok_or_else(|| Error::size("state dimension is not a power of two"))?;
    let wd = crate::witness::build_settings(n)?;
    let sampler = WitnessSampler::new(rho, &wd)?;
    let truth = sampler.probabilities().clone();
    let baseline_total = allocations[0].1.total() as f64;
    let mut rows = Vec::with_capacity(allocations.len());
    for (name, alloc) in allocations {
        let report = histogram_with_sampler(&sampler, alloc, trials, spec.clone(), rng)?;
        rows.push(ComparisonRow {
            name: name.clone(),
            t: alloc.t.clone(),
            total: alloc.total(),
            predicted_delta_f: delta_f(&truth, &alloc.t)?,
            mean_fidelity: report.mean,
            std_fidelity: report.std,
            savings: 1.0 - alloc.total() as f64 / baseline_total,
            histogram: report.histogram,
        });
    }
    Ok(ComparisonReport {
        true_fidelity: fidelity_from_probabilities(&truth),
        probabilities: truth,
        trials,
        baseline: allocations[0].0.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::allocate_sc;
    use crate::quantum::{depolarized_sc, pure_density, sc_state, PureState};
    use crate::witness::build_settings;

    #[test]
    fn zero_copies_give_empty_table() {
        let rho = DensityMatrix::maximally_mixed(4);
        let t = sample_setting(
            &rho,
            &MeasurementSetting::computational(2),
            0,
            RngSeed::new(1),
        )
        .unwrap();
        assert_eq!(t.counts, vec![0; 4]);
        assert_eq!(t.frequencies(), vec![0.0; 4]);
    }

    #[test]
    fn deterministic_outcome_gets_every_copy() {
        let rho = pure_density(&PureState::basis(8, 0).unwrap());
        for method in [SamplingMethod::InverseCdf, SamplingMethod::Alias] {
            let s = Sampler::new(
                &MeasurementSetting::computational(3)
                    .outcome_probabilities(&rho)
                    .unwrap(),
            )
            .unwrap();
            let counts = s.counts(500, &mut RngSeed::new(3).rng(), method);
            assert_eq!(counts[0], 500);
        }
    }

    #[test]
    fn uniform_frequencies_concentrate() {
        let rho = DensityMatrix::maximally_mixed(8);
        let table = sample_setting(
            &rho,
            &MeasurementSetting::computational(3),
            1_000_000,
            RngSeed::new(9),
        )
        .unwrap();
        let p: f64 = 1.0 / 8.0;
        let sigma = (p * (1.0 - p) / 1e6).sqrt();
        for f in table.frequencies() {
            assert!((f - p).abs() < 5.0 * sigma);
        }
        assert!((table.frequencies().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_cdf_and_alias_agree_by_chi_square() {
        let probs = [0.05, 0.3, 0.0, 0.15, 0.25, 0.1, 0.12, 0.03];
        let s = Sampler::new(&probs).unwrap();
        let copies = 200_000u64;
        for method in [SamplingMethod::InverseCdf, SamplingMethod::Alias] {
            let counts = s.counts(copies, &mut RngSeed::new(21).rng(), method);
            assert_eq!(counts[2], 0);
            let chi2: f64 = probs
                .iter()
                .zip(&counts)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, &c)| {
                    let e = p * copies as f64;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            // 6 degrees of freedom; 0.999 quantile ≈ 22.46
            assert!(chi2 < 22.46, "{method:?}: chi2 = {chi2}");
        }
    }

    #[test]
    fn same_seed_same_tables() {
        let rho = depolarized_sc(3, 0.8).unwrap();
        let wd = build_settings(3).unwrap();
        let s = WitnessSampler::new(&rho, &wd).unwrap();
        let a = s
            .sample_all(&[50, 60, 70, 80], RngSeed::with_stream(5, 2))
            .unwrap();
        let b = s
            .sample_all(&[50, 60, 70, 80], RngSeed::with_stream(5, 2))
            .unwrap();
        assert_eq!(a, b);
        let c = s
            .sample_all(&[50, 60, 70, 80], RngSeed::with_stream(5, 3))
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn exact_tables_of_pure_sc_give_unit_fidelity() {
        let n = 4;
        let wd = build_settings(n).unwrap();
        let rho = pure_density(&sc_state(n).unwrap());
        let tables: Vec<CountTable> = wd
            .settings
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let probs = s.outcome_probabilities(&rho).unwrap();
                CountTable::new(
                    j,
                    probs.iter().map(|p| (p * 800.0).round() as u64).collect(),
                )
            })
            .collect();
        let est = estimate_fidelity(&tables, &wd).unwrap();
        assert!((est.fidelity - 1.0).abs() < 1e-12);
        assert!(est.delta_f.abs() < 1e-12);
    }

    #[test]
    fn experimental_setting_one_counts() {
        let wd = build_settings(8).unwrap();
        let mut counts = vec![0; 256];
        counts[0] = 148;
        counts[255] = 136;
        counts[17] = 68;
        let mut tables = vec![CountTable::new(0, counts)];
        for j in 1..9 {
            let mut c = vec![0; 256];
            c[0] = 10;
            c[1] = 10;
            tables.push(CountTable::new(j, c));
        }
        let est = estimate_fidelity(&tables, &wd).unwrap();
        assert!((est.probabilities.p[0] - 284.0 / 352.0).abs() < 1e-15);
        assert!((est.probabilities.p[0] - 0.8068).abs() < 5e-5);
    }

    #[test]
    fn empty_table_is_rejected() {
        let wd = build_settings(2).unwrap();
        let tables: Vec<CountTable> = (0..3).map(|j| CountTable::empty(j, 4)).collect();
        assert!(matches!(
            estimate_fidelity(&tables, &wd),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            estimate_fidelity(&tables[..2], &wd),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn mean_estimate_is_consistent() {
        let rho = depolarized_sc(3, 0.75).unwrap();
        let wd = build_settings(3).unwrap();
        let s = WitnessSampler::new(&rho, &wd).unwrap();
        let alloc = allocate_sc(s.probabilities(), 0.03).unwrap();
        let report =
            histogram_with_sampler(&s, &alloc, 550, HistogramSpec::default(), RngSeed::new(4))
                .unwrap();
        let df = delta_f(s.probabilities(), &alloc.t).unwrap();
        assert!((report.mean - 0.75).abs() < 3.0 * df / 550f64.sqrt());
        assert_eq!(report.histogram.total(), 550);
    }

    #[test]
    fn pure_state_histogram_is_a_spike_at_one() {
        let rho = pure_density(&sc_state(3).unwrap());
        let alloc = CopyAllocation::uniform(4, 20, 0.0);
        let report =
            run_histogram_experiment(&rho, &alloc, 30, HistogramSpec::new(50), RngSeed::new(2))
                .unwrap();
        assert_eq!(report.histogram.events[49], 30);
        assert_eq!(report.std, 0.0);
    }

    #[test]
    fn histogram_bins_and_csv() {
        let mut h = HistogramSpec::new(4);
        for v in [-0.2, 0.0, 0.3, 0.5, 0.99, 1.0, 1.3] {
            h.add(v);
        }
        assert_eq!(h.events, vec![2, 1, 1, 3]);
        assert_eq!(h.total(), 7);
        let csv = h.to_csv();
        assert!(csv.starts_with("bin_low,bin_high,events\n0,0.25,2\n"));
        assert_eq!(HistogramSpec::new(250).bins, 250);
    }

    #[test]
    fn identical_allocations_save_nothing() {
        let rho = depolarized_sc(2, 0.8).unwrap();
        let a = CopyAllocation::uniform(3, 40, 0.0);
        let report = compare_distributions(
            &rho,
            &[("a".into(), a.clone()), ("b".into(), a)],
            20,
            RngSeed::new(1),
        )
        .unwrap();
        assert_eq!(report.rows[1].savings, 0.0);
        assert_eq!(report.rows[0].mean_fidelity, report.rows[1].mean_fidelity);
        assert!(compare_distributions(&rho, &[], 5, RngSeed::new(1)).is_err());
    }
}

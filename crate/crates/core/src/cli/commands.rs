use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::{resolve_seed, ExperimentConfig};
use super::{
    AdaptiveArgs, AllocateArgs, Command, CommonArgs, HoeffdingArgs, SimulateArgs, StateArgs,
    TenPhotonArgs, TomographyArgs,
};
use crate::adaptive::{
    protocol_timeline, run_adaptive, sweep_epsilon_ratio, ten_photon_cost, AdaptiveConfig,
    EpsilonSchedule, InitialProbabilities, SweepTemplate,
};
use crate::allocator::{
    allocate_sc, solve_budget, uniform_for_bound, BudgetProblem, CopyAllocation,
};
use crate::error::{Error, Result};
use crate::hoeffding::{
    allocation_interval, coverage_experiment, failure_probability, joint_success, required_copies,
};
use crate::phaselift::{reconstruction_curve, three_qubit_fixture, ReconstructOptions};
use crate::quantum::{depolarized_sc, pure_density, sc_state, white_noise_mix, DensityMatrix};
use crate::report::fmt_sig;
use crate::rng::RngSeed;
use crate::simulator::{
    compare_distributions_with, histogram_with_sampler, HistogramSpec, WitnessSampler,
};
use crate::witness::{build_settings, delta_f, setting_probabilities, SettingProbabilities};

/// Copies per setting of the eight-photon reference experiment.
const EXPERIMENT_T: [u64; 9] = [352, 200, 107, 100, 110, 111, 106, 116, 103];
/// Published optimized allocation for the same data.
const REFERENCE_OPTIMIZED_T: [u64; 9] = [415, 106, 103, 106, 103, 108, 101, 108, 103];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    /// (file name, contents) written under `--out`.
    pub files: Vec<(String, String)>,
}

impl CommandOutput {
    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }
}

pub(super) fn execute(command: &Command) -> Result<CommandOutput> {
    let (common, output) = match command {
        Command::Allocate(a) => (&a.common, allocate(a)?),
        Command::Simulate(a) => (&a.common, simulate(a)?),
        Command::Adaptive(a) => (&a.common, adaptive(a)?),
        Command::Hoeffding(a) => (&a.common, hoeffding(a)?),
        Command::Tomography(a) => (&a.common, tomography(a)?),
        Command::TenphotonCost(a) => (&a.common, tenphoton(a)?),
    };
    let cfg = ExperimentConfig::load_optional(common.config.as_deref())?;
    if let Some(dir) = common.out.clone().or(cfg.out) {
        write_files(&dir, &output.files)?;
    }
    Ok(output)
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, contents) in files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Input-validation failures on user-supplied vectors are reported as
/// configuration errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Size(m) | Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load(common: &CommonArgs) -> Result<(ExperimentConfig, RngSeed)> {
    let cfg = ExperimentConfig::load_optional(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, &cfg)?;
    Ok((cfg, RngSeed::new(seed)))
}

fn load_state(args: &StateArgs, cfg: &ExperimentConfig) -> Result<Option<DensityMatrix>> {
    if let Some(path) = args.state.as_ref().or(cfg.state.as_ref()) {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let rho = DensityMatrix::from_json(&text).map_err(|e| match e {
            Error::Json(j) => config_error(format!("{}: {j}", path.display())),
            other => other,
        })?;
        if let Some(n) = args.n.or(cfg.n) {
            if rho.qubits() != Some(n) {
                return Err(config_error(format!("state file does not hold {n} qubits")));
            }
        }
        return Ok(Some(rho));
    }
    match (args.n.or(cfg.n), args.fidelity.or(cfg.fidelity)) {
        (Some(n), Some(f)) => Ok(Some(depolarized_sc(n, f)?)),
        _ => Ok(None),
    }
}

fn require_state(args: &StateArgs, cfg: &ExperimentConfig) -> Result<DensityMatrix> {
    load_state(args, cfg)?
        .ok_or_else(|| config_error("need --state, or --n together with --fidelity"))
}

#[allow(clippy::needless_range_loop)]
fn allocation_rows(p: Option<&SettingProbabilities>, k: &[f64], a: &CopyAllocation) -> String {
    let mut out = String::new();
    if p.is_some() {
        out.push_str("setting,P,k,t,real_t\n");
    } else {
        out.push_str("setting,k,t,real_t\n");
    }
    for j in 0..a.t.len() {
        let _ = write!(out, "{}", j + 1);
        if let Some(p) = p {
            let _ = write!(out, ",{}", fmt_sig(p.p[j]));
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            fmt_sig(k[j]),
            a.t[j],
            fmt_sig(a.real_t[j])
        );
    }
    out
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn allocate(args: &AllocateArgs) -> Result<CommandOutput> {
    let (cfg, _) = load(&args.common)?;
    let epsilon0 = args
        .epsilon0
        .or(cfg.epsilon0)
        .or(args.epsilon.or(cfg.epsilon).map(f64::sqrt));
    let mut out = CommandOutput::default();

    if let Some(k) = args.k.clone().or(cfg.k.clone()) {
        let epsilon = args
            .epsilon
            .or(cfg.epsilon)
            .or(epsilon0.map(|e| e * e))
            .ok_or_else(|| config_error("--k needs --epsilon or --epsilon0"))?;
        let problem = BudgetProblem::new(k, epsilon).map_err(as_config)?;
        let alloc = solve_budget(&problem)?;
        out.stdout = allocation_rows(None, &problem.k, &alloc);
        let _ = writeln!(out.stdout, "# total,{}", alloc.total());
        let _ = writeln!(out.stdout, "# epsilon,{}", fmt_sig(problem.epsilon));
        out.file("allocation.csv", out.stdout.clone());
        out.file("allocation.json", to_json(&alloc)?);
        return Ok(out);
    }

    let p = match args.p.clone().or(cfg.p.clone()) {
        Some(p) => SettingProbabilities::from_vec(p).map_err(as_config)?,
        None => {
            let rho = load_state(&args.state, &cfg)?
                .ok_or_else(|| config_error("need --p, --k, --state or --n with --fidelity"))?;
            let n = rho
                .qubits()
                .ok_or_else(|| config_error("state is not a qubit register"))?;
            setting_probabilities(&rho, &build_settings(n)?)?
        }
    };
    if let Some(n) = args.state.n.or(cfg.n) {
        if n != p.n {
            return Err(config_error(format!(
                "--n {n} needs {} probabilities, got {}",
                n + 1,
                p.p.len()
            )));
        }
    }
    let epsilon0 = epsilon0.ok_or_else(|| config_error("missing --epsilon0"))?;
    if !(epsilon0 > 0.0) {
        return Err(config_error(format!(
            "epsilon0 {epsilon0} must be positive"
        )));
    }
    let alloc = allocate_sc(&p, epsilon0)?;
    let uniform = uniform_for_bound(&p, epsilon0)?;
    let k = p.variance_weights();
    out.stdout = allocation_rows(Some(&p), &k, &alloc);
    let _ = writeln!(out.stdout, "# total,{}", alloc.total());
    let _ = writeln!(out.stdout, "# epsilon0,{}", fmt_sig(epsilon0));
    let _ = writeln!(out.stdout, "# delta_f,{}", fmt_sig(delta_f(&p, &alloc.t)?));
    let _ = writeln!(out.stdout, "# uniform_total_same_bound,{}", uniform.total());
    if p.n == 8 {
        let reference: u64 = REFERENCE_OPTIMIZED_T.iter().sum();
        let experiment: u64 = EXPERIMENT_T.iter().sum();
        let _ = writeln!(
            out.stdout,
            "# reference_optimized,{} (total {reference}, difference {})",
            join(&REFERENCE_OPTIMIZED_T),
            alloc.total() as i64 - reference as i64
        );
        let _ = writeln!(
            out.stdout,
            "# experiment,{} (total {experiment}, savings {})",
            join(&EXPERIMENT_T),
            fmt_sig(1.0 - alloc.total() as f64 / experiment as f64)
        );
    }
    out.file("allocation.csv", out.stdout.clone());
    out.file(
        "allocation.json",
        to_json(&serde_json::json!({
            "P": p.p,
            "k": k,
            "epsilon0": epsilon0,
            "t": alloc.t,
            "real_t": alloc.real_t,
            "total": alloc.total(),
        }))?,
    );
    Ok(out)
}

/// Baseline allocation from `uniform:<copies>`, `fixed:<t1>,...` or
/// `experiment`.
pub fn parse_compare(spec: &str, settings: usize) -> Result<(String, CopyAllocation)> {
    let spec = spec.trim();
    let bad = || config_error(format!("cannot parse --compare {spec:?}"));
    let t: Vec<u64> = if let Some(c) = spec.strip_prefix("uniform:") {
        vec![c.trim().parse().map_err(|_| bad())?; settings]
    } else if let Some(list) = spec.strip_prefix("fixed:") {
        list.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    } else if spec == "experiment" {
        EXPERIMENT_T.to_vec()
    } else {
        return Err(bad());
    };
    if t.len() != settings {
        return Err(config_error(format!(
            "baseline has {} entries for {settings} settings",
            t.len()
        )));
    }
    if t.contains(&0) {
        return Err(config_error("baseline copies must be positive"));
    }
    Ok((spec.to_string(), CopyAllocation::fixed(t, f64::NAN)))
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn simulate(args: &SimulateArgs) -> Result<CommandOutput> {
    let (cfg, rng) = load(&args.common)?;
    let rho = require_state(&args.state, &cfg)?;
    let n = rho
        .qubits()
        .ok_or_else(|| config_error("state is not a qubit register"))?;
    let trials = args.trials.or(cfg.trials).unwrap_or(550);
    let bins = args.bins.or(cfg.bins).unwrap_or(50);
    if trials == 0 || bins == 0 {
        return Err(config_error("--trials and --bins must be positive"));
    }
    let wd = build_settings(n)?;
    let sampler = WitnessSampler::new(&rho, &wd)?;
    let truth = sampler.probabilities().clone();
    let mut out = CommandOutput::default();

    if let Some(spec) = args.compare.clone().or(cfg.compare.clone()) {
        let (name, mut baseline) = parse_compare(&spec, wd.len())?;
        let matched = delta_f(&truth, &baseline.t)?;
        baseline.epsilon0 = matched;
        let optimized = allocate_sc(&truth, matched)?;
        let report = compare_distributions_with(
            &rho,
            &[(name.clone(), baseline), ("optimized".into(), optimized)],
            trials,
            HistogramSpec::new(bins),
            rng,
        )?;
        out.stdout = report.to_csv();
        let _ = writeln!(
            out.stdout,
            "# true_fidelity,{}",
            fmt_sig(report.true_fidelity)
        );
        let _ = writeln!(out.stdout, "# matched_delta_f,{}", fmt_sig(matched));
        for row in &report.rows {
            let _ = writeln!(out.stdout, "# t[{}],{}", row.name, join(&row.t));
        }
        let savings = report.rows[1].savings;
        let _ = writeln!(out.stdout, "# savings_percent,{}", fmt_sig(100.0 * savings));
        out.file("comparison.csv", report.to_csv());
        for row in &report.rows {
            out.file(
                format!("histogram_{}.csv", file_stem(&row.name)),
                row.histogram.to_csv(),
            );
        }
        out.file("report.json", to_json(&report)?);
        return Ok(out);
    }

    let epsilon0 = args.epsilon0.or(cfg.epsilon0).unwrap_or(0.016);
    let alloc = allocate_sc(&truth, epsilon0)?;
    let report = histogram_with_sampler(&sampler, &alloc, trials, HistogramSpec::new(bins), rng)?;
    out.stdout = report.histogram.to_csv();
    let _ = writeln!(
        out.stdout,
        "# true_fidelity,{}",
        fmt_sig(crate::witness::fidelity_from_probabilities(&truth))
    );
    let _ = writeln!(out.stdout, "# t,{}", join(&alloc.t));
    let _ = writeln!(
        out.stdout,
        "# predicted_delta_f,{}",
        fmt_sig(delta_f(&truth, &alloc.t)?)
    );
    let _ = writeln!(out.stdout, "# mean_fidelity,{}", fmt_sig(report.mean));
    let _ = writeln!(out.stdout, "# std_fidelity,{}", fmt_sig(report.std));
    out.file("histogram.csv", report.histogram.to_csv());
    out.file("report.json", to_json(&report)?);
    Ok(out)
}

fn parse_initial_p(text: &str) -> Result<InitialProbabilities> {
    match text.trim() {
        "half" => Ok(InitialProbabilities::Half),
        "target" => Ok(InitialProbabilities::PureTarget),
        list => Ok(InitialProbabilities::Explicit(
            list.split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| config_error(format!("bad --initial-p entry {s:?}")))
                })
                .collect::<Result<_>>()?,
        )),
    }
}

fn adaptive(args: &AdaptiveArgs) -> Result<CommandOutput> {
    let (cfg, rng) = load(&args.common)?;
    let rho = require_state(&args.state, &cfg)?;
    let n = rho
        .qubits()
        .ok_or_else(|| config_error("state is not a qubit register"))?;
    let mut out = CommandOutput::default();

    if let Some(ratios) = args.ratios.clone().or(cfg.ratios.clone()) {
        let repeats = args.repeats.or(cfg.repeats).unwrap_or(10);
        let report = sweep_epsilon_ratio(&rho, &ratios, repeats, &SweepTemplate::default(), rng)
            .map_err(as_config)?;
        out.stdout = report.to_csv();
        if let Some(best) = report.best() {
            let _ = writeln!(out.stdout, "# best_ratio,{}", fmt_sig(best.ratio));
            let _ = writeln!(out.stdout, "# best_mean_total,{}", fmt_sig(best.mean_total));
        }
        out.file("sweep.csv", report.to_csv());
        out.file("sweep.json", to_json(&report)?);
        return Ok(out);
    }

    let schedule = args
        .schedule
        .clone()
        .or(cfg.schedule.clone())
        .unwrap_or_else(|| "0.01:0.1:0.00001".into());
    let mut acfg = AdaptiveConfig::new(EpsilonSchedule::parse(&schedule)?);
    if let Some(t) = args.t_initial.clone().or(cfg.t_initial.clone()) {
        acfg.t_initial = t;
    }
    if let Some(p) = args.initial_p.clone().or(cfg.initial_p.clone()) {
        acfg.initial_p = parse_initial_p(&p)?;
    }
    let wd = build_settings(n)?;
    let state = run_adaptive(&rho, &wd, &acfg, rng).map_err(as_config)?;
    out.stdout = state.to_csv();
    let p_hat: Vec<String> = state.current_p.p.iter().map(|&p| fmt_sig(p)).collect();
    let _ = writeln!(out.stdout, "# final_P_hat,{}", p_hat.join(","));
    let _ = writeln!(out.stdout, "# fidelity,{}", fmt_sig(state.fidelity));
    let _ = writeln!(out.stdout, "# delta_f,{}", fmt_sig(state.delta_f));
    let _ = writeln!(out.stdout, "# total_copies,{}", state.total_copies());
    let _ = writeln!(out.stdout, "# rounds,{}", state.allocation_rounds());
    out.file("rounds.csv", state.to_csv());
    out.file("adaptive.json", to_json(&state)?);
    if let Some(rate) = args.rate.or(cfg.rate) {
        let switch = args.switch_cost.or(cfg.switch_cost).unwrap_or(0.0);
        let timeline = protocol_timeline(&state, switch, rate)?;
        let _ = writeln!(out.stdout, "# hours,{}", fmt_sig(timeline.hours));
        let _ = writeln!(out.stdout, "# switches,{}", timeline.switches);
        let _ = writeln!(
            out.stdout,
            "# single_pass_hours,{}",
            fmt_sig(timeline.single_pass_hours)
        );
        let _ = writeln!(
            out.stdout,
            "# single_pass_switches,{}",
            timeline.single_pass_switches
        );
        out.file("timeline.json", to_json(&timeline)?);
    }
    Ok(out)
}

/// White-noise-mixed cat state whose setting-1 probability is `p1`.
fn state_with_p1(n: usize, p1: f64) -> Result<DensityMatrix> {
    let d = (1usize << n) as f64;
    let floor = 2.0 / d;
    if !(floor..=1.0).contains(&p1) {
        return Err(config_error(format!(
            "--p1 must lie in [{floor}, 1] for n = {n}"
        )));
    }
    white_noise_mix(&pure_density(&sc_state(n)?), (p1 - floor) / (1.0 - floor))
}

fn hoeffding(args: &HoeffdingArgs) -> Result<CommandOutput> {
    let (cfg, rng) = load(&args.common)?;
    let h = args.h.or(cfg.h).unwrap_or(0.2);
    let delta = args.delta.or(cfg.delta).unwrap_or(1e-4);
    let p_list = args.p.clone().or(cfg.p.clone());
    let n = args
        .state
        .n
        .or(cfg.n)
        .or(p_list.as_ref().map(|p| p.len().saturating_sub(1)))
        .unwrap_or(8);
    let mut out = CommandOutput::default();

    if args.coverage {
        let rho = match load_state(&args.state, &cfg)? {
            Some(rho) => rho,
            None => state_with_p1(n, args.p1.or(cfg.p1).unwrap_or(0.8068))?,
        };
        let copies = args
            .copies
            .clone()
            .or(cfg.copies.clone())
            .unwrap_or_else(|| vec![20, 50, 100, 200, 500, 1000, 2000, 5000, 10000]);
        let repeats = args.repeats.or(cfg.repeats).unwrap_or(10);
        let table = coverage_experiment(&rho, &copies, delta, repeats, rng).map_err(as_config)?;
        out.stdout = table.to_csv();
        let _ = writeln!(out.stdout, "# all_inside,{}", table.all_inside());
        let _ = writeln!(out.stdout, "# coverage,{}", fmt_sig(table.coverage()));
        out.file("coverage.csv", table.to_csv());
        out.file("coverage.json", to_json(&table)?);
        return Ok(out);
    }

    let copies = args
        .copies
        .clone()
        .or(cfg.copies.clone())
        .unwrap_or_else(|| vec![110]);
    let t: Vec<u64> = match copies.len() {
        1 => vec![copies[0]; n + 1],
        len if len == n + 1 => copies,
        len => {
            return Err(config_error(format!(
                "{len} copy counts for {} settings",
                n + 1
            )));
        }
    };
    let hs = vec![h; t.len()];
    out.stdout.push_str("setting,copies,failure_probability\n");
    for (j, &tj) in t.iter().enumerate() {
        let f = failure_probability(tj, h).map_err(as_config)?;
        let _ = writeln!(out.stdout, "{},{},{}", j + 1, tj, fmt_sig(f));
    }
    let joint = joint_success(&t, &hs).map_err(as_config)?;
    let _ = writeln!(out.stdout, "# joint_success,{}", fmt_sig(joint));
    let _ = writeln!(
        out.stdout,
        "# required_copies,{}",
        required_copies(h, delta).map_err(as_config)?
    );

    if let Some(p) = p_list {
        let p = SettingProbabilities::from_vec(p).map_err(as_config)?;
        let epsilon0 = args
            .epsilon0
            .or(cfg.epsilon0)
            .ok_or_else(|| config_error("the allocation interval needs --epsilon0"))?;
        let iv = allocation_interval(&p, &vec![h; p.p.len()], epsilon0).map_err(as_config)?;
        out.stdout
            .push_str("setting,P_minus,P_plus,k_minus,k_plus,t_minus,t_point,t_plus\n");
        for j in 0..p.p.len() {
            let _ = writeln!(
                out.stdout,
                "{},{},{},{},{},{},{},{}",
                j + 1,
                fmt_sig(iv.p_minus[j]),
                fmt_sig(iv.p_plus[j]),
                fmt_sig(iv.k_minus[j]),
                fmt_sig(iv.k_plus[j]),
                iv.t_minus[j],
                iv.t_point[j],
                iv.t_plus[j]
            );
        }
        let _ = writeln!(out.stdout, "# total_minus,{}", iv.total_minus());
        let _ = writeln!(out.stdout, "# total_plus,{}", iv.total_plus());
        out.file("interval.json", to_json(&iv)?);
    }
    out.file("hoeffding.csv", out.stdout.clone());
    Ok(out)
}

fn default_element_counts(n: usize) -> Vec<usize> {
    let total = 6usize.pow(n as u32);
    if n == 3 {
        return vec![9, 18, 27, 36, 45, 54, 72, 108, 144, 216];
    }
    let mut v: Vec<usize> = (1..=10).map(|i| (total * i).div_ceil(10).max(1)).collect();
    v.dedup();
    v
}

fn tomography(args: &TomographyArgs) -> Result<CommandOutput> {
    let (cfg, rng) = load(&args.common)?;
    let n = args.state.n.or(cfg.n).unwrap_or(3);
    let rho = match load_state(&args.state, &cfg)? {
        Some(rho) => rho,
        None if n == 3 => three_qubit_fixture(),
        None => {
            return Err(config_error(
                "need --state or --fidelity for n other than 3",
            ))
        }
    };
    let n = rho
        .qubits()
        .ok_or_else(|| config_error("state is not a qubit register"))?;
    let copies = args
        .copies
        .or(cfg.copies.as_ref().and_then(|c| c.first().copied()))
        .unwrap_or(10_000);
    let elements = args
        .elements
        .clone()
        .or(cfg.elements.clone())
        .unwrap_or_else(|| default_element_counts(n));
    let repeats = args.repeats.or(cfg.repeats).unwrap_or(5);
    let opts = ReconstructOptions {
        max_iterations: args.max_iterations.or(cfg.max_iterations).unwrap_or(5000),
        ..Default::default()
    };
    let curve =
        reconstruction_curve(&rho, copies, &elements, repeats, &opts, rng).map_err(as_config)?;
    let mut out = CommandOutput {
        stdout: curve.to_csv(),
        files: Vec::new(),
    };
    let _ = writeln!(
        out.stdout,
        "# true_fidelity,{}",
        fmt_sig(curve.true_fidelity)
    );
    out.file("curve.csv", curve.to_csv());
    out.file("curve.json", to_json(&curve)?);
    Ok(out)
}

fn tenphoton(args: &TenPhotonArgs) -> Result<CommandOutput> {
    let (cfg, _) = load(&args.common)?;
    let rate8 = args.rate8.or(cfg.rate8).unwrap_or(2.8e-5);
    let copies = args
        .copies
        .or(cfg.copies.as_ref().and_then(|c| c.first().copied()))
        .unwrap_or(110);
    let cost = ten_photon_cost(rate8, copies)?;
    let mut out = CommandOutput::default();
    let _ = writeln!(out.stdout, "rate8_hz,{}", fmt_sig(cost.rate8));
    let _ = writeln!(
        out.stdout,
        "two_photon_rate_hz,{}",
        fmt_sig(cost.two_photon_rate)
    );
    let _ = writeln!(
        out.stdout,
        "copies_per_hour,{}",
        fmt_sig(cost.copies_per_hour)
    );
    let _ = writeln!(out.stdout, "copies,{}", cost.copies);
    let _ = writeln!(out.stdout, "hours,{}", fmt_sig(cost.hours));
    let _ = writeln!(out.stdout, "days,{}", fmt_sig(cost.days));
    out.file("tenphoton_cost.csv", out.stdout.clone());
    out.file("tenphoton_cost.json", to_json(&cost)?);
    Ok(out)
}

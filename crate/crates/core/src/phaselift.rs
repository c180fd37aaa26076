//! Density-matrix reconstruction from Pauli-measurement frequencies.
//!
//! Solves
//!
//! ```text
//! minimize Σ_i |Tr(ρ M_i) − f_i|   subject to   ρ ⪰ 0, Tr ρ = 1
//! ```
//!
//! over rank-1 tensor-product projectors M_i. The default solver is a
//! primal-dual (Chambolle–Pock) iteration; a projected subgradient method with
//! diminishing steps is available as well. Both keep the best iterate seen.

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    fidelity_pure, frobenius_distance, kron_vec, psd_project, sc_state, ComplexMatrix,
    DensityMatrix, C64, ONE, ZERO,
};
use crate::report::fmt_sig;
use crate::rng::RngSeed;
use crate::simulator::{mean_std, Sampler, SamplingMethod};

/// Largest qubit count for the full 3^n enumeration.
pub const MAX_PAULI_QUBITS: usize = 4;

/// Iterations over which the objective must improve to keep going.
const STALL_WINDOW: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliBasis {
    X,
    Y,
    Z,
}

impl PauliBasis {
    pub const ALL: [PauliBasis; 3] = [PauliBasis::X, PauliBasis::Y, PauliBasis::Z];

    /// Eigenvector for outcome bit 0 (eigenvalue +1) or 1 (eigenvalue −1).
    pub fn eigenvector(self, bit: bool) -> [C64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sign = if bit { -1.0 } else { 1.0 };
        match self {
            PauliBasis::Z if !bit => [ONE, ZERO],
            PauliBasis::Z => [ZERO, ONE],
            PauliBasis::X => [C64::new(s, 0.0), C64::new(sign * s, 0.0)],
            PauliBasis::Y => [C64::new(s, 0.0), C64::new(0.0, sign * s)],
        }
    }
}

impl fmt::Display for PauliBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            PauliBasis::X => "X",
            PauliBasis::Y => "Y",
            PauliBasis::Z => "Z",
        };
        f.write_str(c)
    }
}

/// One local Pauli basis per qubit; 2^n outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliSetting {
    pub bases: Vec<PauliBasis>,
}

impl PauliSetting {
    pub fn qubits(&self) -> usize {
        self.bases.len()
    }

    pub fn outcomes(&self) -> usize {
        1 << self.bases.len()
    }

    pub fn label(&self) -> String {
        self.bases.iter().map(|b| b.to_string()).collect()
    }

    /// Qubit 0 is the most significant bit of `outcome`.
    pub fn element(&self, setting: usize, outcome: usize) -> PovmElement {
        PovmElement {
            setting,
            outcome,
            bases: self.bases.clone(),
        }
    }

    pub fn elements(&self, setting: usize) -> Vec<PovmElement> {
        (0..self.outcomes())
            .map(|o| self.element(setting, o))
            .collect()
    }
}

/// Rank-1 projector |v⟩⟨v| with v a tensor product of local eigenvectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PovmElement {
    pub setting: usize,
    pub outcome: usize,
    pub bases: Vec<PauliBasis>,
}

impl PovmElement {
    pub fn label(&self) -> String {
        let bases: String = self.bases.iter().map(|b| b.to_string()).collect();
        format!(
            "{bases}:{:0width$b}",
            self.outcome,
            width = self.bases.len()
        )
    }

    pub fn vector(&self) -> Vec<C64> {
        let n = self.bases.len();
        let mut v = vec![ONE];
        for (q, b) in self.bases.iter().enumerate() {
            let bit = (self.outcome >> (n - 1 - q)) & 1 == 1;
            v = kron_vec(&v, &b.eigenvector(bit));
        }
        v
    }

    pub fn operator(&self) -> ComplexMatrix {
        let v = self.vector();
        ComplexMatrix::outer(&v, &v)
    }

    /// Tr(ρ M).
    pub fn probability(&self, rho: &DensityMatrix) -> Result<f64> {
        rho.expectation(&self.vector())
    }
}

/// All 3^n local Pauli settings, in lexicographic X < Y < Z order with
/// qubit 0 varying slowest.
pub fn pauli_settings(n: usize) -> Result<Vec<PauliSetting>> {
    if n == 0 || n > MAX_PAULI_QUBITS {
        return Err(Error::size(format!(
            "Pauli enumeration supports 1..={MAX_PAULI_QUBITS} qubits, got {n}"
        )));
    }
    let count = 3usize.pow(n as u32);
    Ok((0..count)
        .map(|mut idx| {
            let mut bases = vec![PauliBasis::X; n];
            for q in (0..n).rev() {
                bases[q] = PauliBasis::ALL[idx % 3];
                idx /= 3;
            }
            PauliSetting { bases }
        })
        .collect())
}

/// Every POVM element of the given settings, setting by setting.
pub fn all_elements(settings: &[PauliSetting]) -> Vec<PovmElement> {
    settings
        .iter()
        .enumerate()
        .flat_map(|(s, setting)| setting.elements(s))
        .collect()
}

/// Exact outcome probabilities [setting][outcome].
pub fn pauli_probabilities(
    rho: &DensityMatrix,
    settings: &[PauliSetting],
) -> Result<Vec<Vec<f64>>> {
    settings
        .iter()
        .enumerate()
        .map(|(s, setting)| {
            setting
                .elements(s)
                .iter()
                .map(|e| Ok(e.probability(rho)?.max(0.0)))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Primal-dual iteration with step sizes from the operator norm.
    PrimalDual,
    /// Projected subgradient with step `scale/√k`.
    Subgradient { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub solver: Solver,
    pub max_iterations: usize,
    /// Stop once the best objective improves by less than this fraction
    /// over a window of iterations.
    pub tolerance: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            solver: Solver::PrimalDual,
            max_iterations: 5000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub rho_hat: DensityMatrix,
    /// Σ|Tr(ρ̂ M_i) − f_i| of the returned matrix.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each iteration.
    pub history: Vec<f64>,
}

/// The linear map ρ ↦ (⟨v_i|ρ|v_i⟩)_i and its adjoint y ↦ Σ y_i |v_i⟩⟨v_i|.
struct MeasurementMap {
    dim: usize,
    vectors: Vec<Vec<C64>>,
}

impl MeasurementMap {
    fn new(elements: &[PovmElement]) -> Result<Self> {
        let n = elements[0].bases.len();
        if elements.iter().any(|e| e.bases.len() != n) {
            return Err(Error::Shape(
                "POVM elements act on different qubit counts".into(),
            ));
        }
        Ok(Self {
            dim: 1 << n,
            vectors: elements.iter().map(|e| e.vector()).collect(),
        })
    }

    fn forward(&self, rho: &ComplexMatrix) -> Vec<f64> {
        let d = self.dim;
        let data = rho.as_slice();
        self.vectors
            .iter()
            .map(|v| {
                let mut acc = ZERO;
                for a in 0..d {
                    let row = &data[a * d..(a + 1) * d];
                    let mut inner = ZERO;
                    for b in 0..d {
                        inner += row[b] * v[b];
                    }
                    acc += v[a].conj() * inner;
                }
                acc.re
            })
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> ComplexMatrix {
        let d = self.dim;
        let mut out = ComplexMatrix::zeros(d, d);
        let data = out.as_mut_slice();
        for (v, &w) in self.vectors.iter().zip(y) {
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let va = v[a] * w;
                for b in 0..d {
                    data[a * d + b] += va * v[b].conj();
                }
            }
        }
        out
    }

    /// Largest singular value, by power iteration on A*A.
    fn norm(&self) -> f64 {
        let d = self.dim;
        let mut x = ComplexMatrix::from_fn(d, d, |i, j| {
            let s = (i * 7 + j * 13 + 1) as f64;
            if i == j {
                C64::new(1.0 + 0.1 * s.sin(), 0.0)
            } else {
                C64::new(0.05 * s.cos(), 0.0)
            }
        });
        x = x.hermitian_part().expect("square");
        let mut lambda = 0.0;
        for _ in 0..100 {
            let ax = self.adjoint(&self.forward(&x));
            let norm = ax.frobenius_norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm / x.frobenius_norm();
            x = ax.scale(1.0 / norm);
            if (next - lambda).abs() <= 1e-12 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }
}

fn l1_misfit(pred: &[f64], f: &[f64]) -> f64 {
    pred.iter().zip(f).map(|(p, f)| (p - f).abs()).sum()
}

/// Reconstructs ρ from one frequency per POVM element.
pub fn reconstruct(
    elements: &[PovmElement],
    freqs: &[f64],
    opts: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    if elements.is_empty() {
        return Err(Error::Shape("no POVM elements given".into()));
    }
    if elements.len() != freqs.len() {
        return Err(Error::Shape(format!(
            "{} POVM elements but {} frequencies",
            elements.len(),
            freqs.len()
        )));
    }
    if let Some(bad) = freqs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::domain(format!("frequency {bad} outside [0, 1]")));
    }
    let map = MeasurementMap::new(elements)?;
    let d = map.dim;
    let norm = map.norm().max(1e-12);

    let mut rho = DensityMatrix::maximally_mixed(d).into_matrix();
    let objective = l1_misfit(&map.forward(&rho), freqs);
    let mut best = (rho.clone(), objective);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let (tau, sigma) = (0.95 / norm, 0.95 / norm);
    let mut y = vec![0.0; freqs.len()];
    let mut rho_bar = rho.clone();

    for k in 1..=opts.max_iterations {
        iterations = k;
        let next = match opts.solver {
            Solver::PrimalDual => {
                let pred = map.forward(&rho_bar);
                for ((yi, p), f) in y.iter_mut().zip(&pred).zip(freqs) {
                    *yi = (*yi + sigma * (p - f)).clamp(-1.0, 1.0);
                }
                let step = &rho - &map.adjoint(&y).scale(tau);
                let next = psd_project(&step)?.into_matrix();
                rho_bar = &next.scale(2.0) - &rho;
                next
            }
            Solver::Subgradient { scale } => {
                let pred = map.forward(&rho);
                let g: Vec<f64> = pred
                    .iter()
                    .zip(freqs)
                    .map(|(p, f)| (p - f).signum() * ((p - f).abs() > 0.0) as u8 as f64)
                    .collect();
                let step = scale / (k as f64).sqrt();
                psd_project(&(&rho - &map.adjoint(&g).scale(step)))?.into_matrix()
            }
        };
        let objective = l1_misfit(&map.forward(&next), freqs);
        rho = next;
        if objective < best.1 {
            best = (rho.clone(), objective);
        }
        history.push(best.1);
        let stalled = k > STALL_WINDOW && {
            let before = history[k - 1 - STALL_WINDOW];
            before - best.1 <= opts.tolerance * before
        };
        if best.1 <= 1e-12 || stalled {
            converged = true;
            break;
        }
    }

    Ok(ReconstructionResult {
        rho_hat: psd_project(&best.0)?,
        objective: best.1,
        iterations,
        converged,
        history,
    })
}

/// Reconstruction from a full [setting][outcome] frequency table.
pub fn reconstruct_settings(
    settings: &[PauliSetting],
    table: &[Vec<f64>],
    opts: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    if settings.len() != table.len() {
        return Err(Error::Shape(format!(
            "{} settings but {} frequency rows",
            settings.len(),
            table.len()
        )));
    }
    for (s, row) in settings.iter().zip(table) {
        if s.outcomes() != row.len() {
            return Err(Error::Shape(format!(
                "setting {} has {} outcomes but {} frequencies",
                s.label(),
                s.outcomes(),
                row.len()
            )));
        }
    }
    let freqs: Vec<f64> = table.iter().flatten().copied().collect();
    reconstruct(&all_elements(settings), &freqs, opts)
}

/// Three-qubit state built from the published dominant elements of an
/// experimental cat-state reconstruction: ρ(HHH,HHH) = 0.50188,
/// ρ(VVV,VVV) = 0.38419, real coherence 0.37238, the remaining population
/// spread evenly over the other six diagonal entries.
pub fn three_qubit_fixture() -> DensityMatrix {
    let mut m = ComplexMatrix::zeros(8, 8);
    let rest = (1.0 - 0.50188 - 0.38419) / 6.0;
    for i in 1..7 {
        m[(i, i)] = C64::new(rest, 0.0);
    }
    m[(0, 0)] = C64::new(0.50188, 0.0);
    m[(7, 7)] = C64::new(0.38419, 0.0);
    m[(0, 7)] = C64::new(0.37238, 0.0);
    m[(7, 0)] = C64::new(0.37238, 0.0);
    DensityMatrix::new(m).expect("fixture is a valid density matrix")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub elements_used: usize,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionCurve {
    pub true_fidelity: f64,
    pub counts_per_setting: u64,
    pub repeats: usize,
    pub rows: Vec<CurveRow>,
}

impl ReconstructionCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("elements_used,mean_fidelity,mean_mse,std_fidelity,std_mse\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.elements_used,
                fmt_sig(r.mean_fidelity),
                fmt_sig(r.mean_mse),
                fmt_sig(r.std_fidelity),
                fmt_sig(r.std_mse)
            ));
        }
        out
    }
}

/// Fidelity to the pure cat state and MSE to `rho_true` as a function of the
/// number of POVM elements fed to the reconstruction.
///
/// Each repeat measures every Pauli setting `counts_per_setting` times and
/// shuffles the element order once under its own stream; a point with m
/// elements uses the first m of that order.
pub fn reconstruction_curve(
    rho_true: &DensityMatrix,
    counts_per_setting: u64,
    element_counts: &[usize],
    repeats: usize,
    opts: &ReconstructOptions,
    rng: RngSeed,
) -> Result<ReconstructionCurve> {
    let n = rho_true
        .qubits()
        .ok_or_else(|| Error::size("state dimension is not a power of two"))?;
    let settings = pauli_settings(n)?;
    let elements = all_elements(&settings);
    if let Some(bad) = element_counts
        .iter()
        .find(|&&m| m == 0 || m > elements.len())
    {
        return Err(Error::domain(format!(
            "element count {bad} outside 1..={}",
            elements.len()
        )));
    }
    if repeats == 0 || counts_per_setting == 0 {
        return Err(Error::domain(
            "repeats and copies per setting must be positive",
        ));
    }
    let probs = pauli_probabilities(rho_true, &settings)?;
    let samplers = probs
        .iter()
        .map(|p| Sampler::new(p))
        .collect::<Result<Vec<_>>>()?;
    let target = sc_state(n)?;

    let trials: Vec<(Vec<f64>, Vec<usize>)> = (0..repeats)
        .map(|r| {
            let stream = rng.derive(r as u64);
            let freqs: Vec<f64> = samplers
                .iter()
                .enumerate()
                .flat_map(|(s, sampler)| {
                    let mut g = stream.derive(s as u64).rng();
                    sampler
                        .counts(counts_per_setting, &mut g, SamplingMethod::Alias)
                        .into_iter()
                        .map(|c| c as f64 / counts_per_setting as f64)
                        .collect::<Vec<_>>()
                })
                .collect();
            let mut order: Vec<usize> = (0..elements.len()).collect();
            order.shuffle(&mut stream.derive(u64::MAX).rng());
            (freqs, order)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = element_counts
        .iter()
        .enumerate()
        .flat_map(|(i, _)| (0..repeats).map(move |r| (i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (freqs, order) = &trials[r];
            let used = &order[..element_counts[i]];
            let el: Vec<PovmElement> = used.iter().map(|&k| elements[k].clone()).collect();
            let f: Vec<f64> = used.iter().map(|&k| freqs[k]).collect();
            let result = reconstruct(&el, &f, opts)?;
            let fid = fidelity_pure(&result.rho_hat, &target)?;
            let mse = frobenius_distance(&result.rho_hat, rho_true)?.powi(2);
            Ok((i, fid, mse))
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = element_counts
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let fids: Vec<f64> = results.iter().filter(|r| r.0 == i).map(|r| r.1).collect();
            let mses: Vec<f64> = results.iter().filter(|r| r.0 == i).map(|r| r.2).collect();
            let (mean_fidelity, std_fidelity) = mean_std(&fids);
            let (mean_mse, std_mse) = mean_std(&mses);
            CurveRow {
                elements_used: m,
                mean_fidelity,
                std_fidelity,
                mean_mse,
                std_mse,
            }
        })
        .collect();

    Ok(ReconstructionCurve {
        true_fidelity: fidelity_pure(rho_true, &target)?,
        counts_per_setting,
        repeats,
        rows,
    })
}

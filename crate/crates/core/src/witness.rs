//! Measurement settings and the cat-state witness decomposition.
//!
//! The projector onto the n-qubit cat state splits into the two diagonal
//! terms (|H⟩⟨H|)^⊗n + (|V⟩⟨V|)^⊗n and the alternating sum
//! (1/n)·Σ_k (−1)^k M_{kπ/n}^⊗n with M_θ = cos θ·σx + sin θ·σy. Each term is
//! estimated from one complete product basis, giving n + 1 settings:
//!
//! * setting 1 — the computational H/V basis, probability mass P₁ on the
//!   all-H and all-V outcomes;
//! * setting j ≥ 2 — the |±,θ⟩ = (|H⟩ ± e^{iθ}|V⟩)/√2 basis at θ = (j−1)π/n,
//!   probability mass P_j on outcomes with an even number of '−' results, so
//!   ⟨M_θ^⊗n⟩ = 2P_j − 1.
//!
//! Projectors are never materialized: outcome probabilities come from
//! rotating ρ qubit by qubit and reading off the diagonal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{check_qubits, kron_vec, sc_state, DensityMatrix, C64, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SettingKind {
    /// Product H/V basis.
    Computational,
    /// Product |±,θ⟩ basis.
    Rotated { theta: f64 },
}

/// One complete product basis over n qubits.
///
/// Outcome `o` is the bit pattern of its per-qubit results, qubit 0 in the
/// most significant bit; bit 0 means H (or '+'), bit 1 means V (or '−').
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub n: usize,
    pub kind: SettingKind,
}

impl MeasurementSetting {
    pub fn computational(n: usize) -> Self {
        Self {
            n,
            kind: SettingKind::Computational,
        }
    }

    pub fn rotated(n: usize, theta: f64) -> Self {
        Self {
            n,
            kind: SettingKind::Rotated { theta },
        }
    }

    pub fn outcomes(&self) -> usize {
        1 << self.n
    }

    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            SettingKind::Computational => None,
            SettingKind::Rotated { theta } => Some(theta),
        }
    }

    /// Single-qubit basis vectors (result 0, result 1).
    pub fn qubit_basis(&self) -> [[C64; 2]; 2] {
        match self.kind {
            SettingKind::Computational => [[ONE, ZERO], [ZERO, ONE]],
            SettingKind::Rotated { theta } => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let phase = C64::from_polar(s, theta);
                [[C64::new(s, 0.0), phase], [C64::new(s, 0.0), -phase]]
            }
        }
    }

    /// Sign pattern of an outcome: `false` for H/'+', `true` for V/'−'.
    pub fn pattern(&self, outcome: usize) -> Vec<bool> {
        (0..self.n)
            .map(|q| (outcome >> (self.n - 1 - q)) & 1 == 1)
            .collect()
    }

    /// Explicit basis vector of one outcome (2^n amplitudes).
    pub fn projector_vector(&self, outcome: usize) -> Vec<C64> {
        let basis = self.qubit_basis();
        self.pattern(outcome)
            .into_iter()
            .fold(vec![ONE], |acc, minus| {
                kron_vec(&acc, &basis[minus as usize])
            })
    }

    /// (−1)^{number of '−' results}.
    pub fn parity_weight(outcome: usize) -> f64 {
        if outcome.count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Whether an outcome contributes to this setting's aggregated mass:
    /// all-H / all-V for the computational setting, even '−' parity otherwise.
    pub fn in_aggregate(&self, outcome: usize) -> bool {
        match self.kind {
            SettingKind::Computational => outcome == 0 || outcome == self.outcomes() - 1,
            SettingKind::Rotated { .. } => outcome.count_ones().is_multiple_of(2),
        }
    }

    /// Born probabilities of all 2^n outcomes.
    pub fn outcome_probabilities(&self, rho: &DensityMatrix) -> Result<Vec<f64>> {
        let d = self.outcomes();
        if rho.dim() != d {
            return Err(Error::size(format!(
                "{}-qubit setting applied to a {}-dimensional state",
                self.n,
                rho.dim()
            )));
        }
        let diag = match self.kind {
            SettingKind::Computational => (0..d).map(|i| rho.matrix()[(i, i)].re).collect(),
            SettingKind::Rotated { .. } => rotated_diagonal(rho, self.qubit_basis(), self.n),
        };
        Ok(diag.into_iter().map(|p: f64| p.max(0.0)).collect())
    }

    /// Aggregated mass (P₁ or P_j) from a probability or frequency vector.
    pub fn aggregate(&self, weights: &[f64]) -> f64 {
        weights
            .iter()
            .enumerate()
            .filter(|(o, _)| self.in_aggregate(*o))
            .map(|(_, w)| w)
            .sum()
    }
}

/// Diagonal of U^⊗n ρ U^⊗n† where U's rows are the conjugated basis vectors.
fn rotated_diagonal(rho: &DensityMatrix, basis: [[C64; 2]; 2], n: usize) -> Vec<f64> {
    let d = 1usize << n;
    let u = [
        [basis[0][0].conj(), basis[0][1].conj()],
        [basis[1][0].conj(), basis[1][1].conj()],
    ];
    let mut work = rho.matrix().as_slice().to_vec();
    for q in 0..n {
        let bit = 1usize << (n - 1 - q);
        // rows: W ← U_q W
        for r0 in (0..d).filter(|r| r & bit == 0) {
            let r1 = r0 | bit;
            for c in 0..d {
                let a = work[r0 * d + c];
                let b = work[r1 * d + c];
                work[r0 * d + c] = u[0][0] * a + u[0][1] * b;
                work[r1 * d + c] = u[1][0] * a + u[1][1] * b;
            }
        }
        // columns: W ← W U_q†
        for row in work.chunks_exact_mut(d) {
            for c0 in (0..d).filter(|c| c & bit == 0) {
                let c1 = c0 | bit;
                let a = row[c0];
                let b = row[c1];
                row[c0] = a * u[0][0].conj() + b * u[0][1].conj();
                row[c1] = a * u[1][0].conj() + b * u[1][1].conj();
            }
        }
    }
    (0..d).map(|i| work[i * d + i].re).collect()
}

/// The n + 1 settings of the cat-state witness, computational first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessDecomposition {
    pub n: usize,
    pub settings: Vec<MeasurementSetting>,
}

impl WitnessDecomposition {
    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// Sign (−1)^{j−1} attached to the 1-based setting index j ≥ 2.
    pub fn sign_of_setting(j: usize) -> f64 {
        if j.is_multiple_of(2) {
            -1.0
        } else {
            1.0
        }
    }
}

/// Builds the witness settings for `n` qubits; rotated setting j (1-based)
/// sits at θ = (j−1)π/n, so the last one is θ = π, the same physical basis as
/// θ = 0 with '+' and '−' swapped.
pub fn build_settings(n: usize) -> Result<WitnessDecomposition> {
    check_qubits(n)?;
    let mut settings = Vec::with_capacity(n + 1);
    settings.push(MeasurementSetting::computational(n));
    for k in 1..=n {
        settings.push(MeasurementSetting::rotated(n, k as f64 * PI / n as f64));
    }
    Ok(WitnessDecomposition { n, settings })
}

/// P₁ … P_{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingProbabilities {
    pub n: usize,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
}

impl SettingProbabilities {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n + 1 {
            return Err(Error::size(format!(
                "{} probabilities for n = {n} (expected {})",
                p.len(),
                n + 1
            )));
        }
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("probability {bad} outside [0, 1]")));
        }
        Ok(Self { n, p })
    }

    /// Infers n from the vector length (n + 1 entries).
    pub fn from_vec(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::size("need at least two setting probabilities"));
        }
        Self::new(p.len() - 1, p)
    }

    /// Values the pure cat state would produce: P₁ = 1, P_j = (1 + cos((j−1)π))/2.
    pub fn pure_target(n: usize) -> Self {
        let mut p = vec![1.0];
        p.extend((1..=n).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }));
        Self { n, p }
    }

    pub fn uniform(n: usize, value: f64) -> Self {
        Self {
            n,
            p: vec![value; n + 1],
        }
    }

    /// Per-setting variance weights of the fidelity estimator:
    /// k₁ = P₁(1−P₁)/4, k_j = P_j(1−P_j)/n².
    pub fn variance_weights(&self) -> Vec<f64> {
        let n2 = (self.n * self.n) as f64;
        self.p
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let v = p * (1.0 - p);
                if i == 0 {
                    v / 4.0
                } else {
                    v / n2
                }
            })
            .collect()
    }
}

/// Exact P₁ … P_{n+1} for a density matrix.
pub fn setting_probabilities(
    rho: &DensityMatrix,
    wd: &WitnessDecomposition,
) -> Result<SettingProbabilities> {
    let p = wd
        .settings
        .iter()
        .map(|s| Ok(s.aggregate(&s.outcome_probabilities(rho)?).clamp(0.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SettingProbabilities { n: wd.n, p })
}

/// F = P₁/2 + Σ_{j≥2} (−1)^{j−1} P_j/n − Σ_{j≥2} (−1)^{j−1}/(2n).
pub fn fidelity_from_probabilities(p: &SettingProbabilities) -> f64 {
    let n = p.n as f64;
    let mut f = p.p[0] / 2.0;
    for (idx, &pj) in p.p.iter().enumerate().skip(1) {
        let sign = WitnessDecomposition::sign_of_setting(idx + 1);
        f += sign * pj / n - sign / (2.0 * n);
    }
    f
}

/// ΔF = √(P₁(1−P₁)/(4t₁) + (1/n²)·Σ_{j≥2} P_j(1−P_j)/t_j) for real-valued
/// copy counts.
pub fn delta_f_real(p: &SettingProbabilities, t: &[f64]) -> Result<f64> {
    if t.len() != p.p.len() {
        return Err(Error::size(format!(
            "{} copy counts for {} settings",
            t.len(),
            p.p.len()
        )));
    }
    if let Some(bad) = t.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::domain(format!("copy count {bad} must be positive")));
    }
    let k = p.variance_weights();
    Ok(k.iter().zip(t).map(|(k, t)| k / t).sum::<f64>().sqrt())
}

/// Binomial standard deviation of the fidelity estimator for integer counts.
pub fn delta_f(p: &SettingProbabilities, t: &[u64]) -> Result<f64> {
    let t: Vec<f64> = t.iter().map(|&x| x as f64).collect();
    delta_f_real(p, &t)
}

/// ⟨w⟩ = 1/2 − F for the witness w = I/2 − |SC⟩⟨SC|. Negative values
/// certify genuine multipartite entanglement.
pub fn witness_expectation(rho: &DensityMatrix, n: usize) -> Result<f64> {
    let sc = sc_state(n)?;
    if rho.dim() != sc.dim() {
        return Err(Error::size(format!(
            "{}-qubit witness on a {}-dimensional state",
            n,
            rho.dim()
        )));
    }
    let m = rho.matrix();
    let last = rho.dim() - 1;
    let f = 0.5 * (m[(0, 0)].re + m[(last, last)].re) + m[(0, last)].re;
    Ok(0.5 - f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{
        depolarized_sc, fidelity_pure, pure_density, random_density, ComplexMatrix,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn angles_mod_pi(wd: &WitnessDecomposition) -> Vec<f64> {
        let mut a: Vec<f64> = wd.settings[1..]
            .iter()
            .map(|s| {
                let t = s.theta().unwrap().rem_euclid(PI);
                if (t - PI).abs() < 1e-12 {
                    0.0
                } else {
                    t
                }
            })
            .collect();
        a.sort_by(f64::total_cmp);
        a
    }

    #[test]
    fn three_qubit_settings_cover_the_listed_angles() {
        let wd = build_settings(3).unwrap();
        assert_eq!(wd.len(), 4);
        assert_eq!(wd.settings[0].kind, SettingKind::Computational);
        let expected = [0.0, PI / 3.0, 2.0 * PI / 3.0];
        for (got, want) in angles_mod_pi(&wd).iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eight_qubit_settings_cover_the_listed_angles() {
        let wd = build_settings(8).unwrap();
        assert_eq!(wd.len(), 9);
        for (k, got) in angles_mod_pi(&wd).iter().enumerate() {
            assert!((got - k as f64 * PI / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_pi_basis_is_theta_zero_basis_relabelled() {
        let at_pi = MeasurementSetting::rotated(1, PI).qubit_basis();
        let at_zero = MeasurementSetting::rotated(1, 0.0).qubit_basis();
        for c in 0..2 {
            assert!((at_pi[0][c] - at_zero[1][c]).norm() < 1e-15);
            assert!((at_pi[1][c] - at_zero[0][c]).norm() < 1e-15);
        }
    }

    #[test]
    fn build_settings_rejects_bad_n() {
        assert!(build_settings(0).is_err());
        assert!(build_settings(13).is_err());
    }

    #[test]
    fn projectors_sum_to_identity() {
        for n in 1..=3 {
            for s in build_settings(n).unwrap().settings {
                let d = s.outcomes();
                let mut sum = ComplexMatrix::zeros(d, d);
                for o in 0..d {
                    let v = s.projector_vector(o);
                    sum = &sum + &ComplexMatrix::outer(&v, &v);
                }
                let err = (&sum - &ComplexMatrix::identity(d))
                    .as_slice()
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10, "n={n} {:?}", s.kind);
            }
        }
    }

    #[test]
    fn rotated_probabilities_match_explicit_projectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(8, 8, &mut rng);
        for s in build_settings(3).unwrap().settings {
            let fast = s.outcome_probabilities(&rho).unwrap();
            for (o, p) in fast.iter().enumerate() {
                let slow = rho.expectation(&s.projector_vector(o)).unwrap();
                assert!((p - slow).abs() < 1e-12);
            }
            assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    /// ⟨M_θ^⊗n⟩ by explicit contraction with the operator's tensor power.
    fn brute_force_parity(rho: &DensityMatrix, n: usize, theta: f64) -> f64 {
        let m = ComplexMatrix::new(
            2,
            2,
            vec![
                ZERO,
                C64::from_polar(1.0, -theta),
                C64::from_polar(1.0, theta),
                ZERO,
            ],
        )
        .unwrap();
        let mut op = ComplexMatrix::identity(1);
        for _ in 0..n {
            op = op.kron(&m);
        }
        op.matmul(rho.matrix()).unwrap().trace().re
    }

    #[test]
    fn pure_sc_probabilities_follow_cos_n_theta() {
        for n in [2, 3, 4] {
            let wd = build_settings(n).unwrap();
            let rho = pure_density(&sc_state(n).unwrap());
            let p = setting_probabilities(&rho, &wd).unwrap();
            assert!((p.p[0] - 1.0).abs() < 1e-12);
            for (idx, s) in wd.settings.iter().enumerate().skip(1) {
                let parity = brute_force_parity(&rho, n, s.theta().unwrap());
                assert!((2.0 * p.p[idx] - 1.0 - parity).abs() < 1e-12);
            }
            if n % 2 == 0 {
                for j in 2..=n + 1 {
                    let want = if j % 2 == 1 { 1.0 } else { 0.0 };
                    assert!((p.p[j - 1] - want).abs() < 1e-12, "n={n} j={j}");
                }
            }
            let target = SettingProbabilities::pure_target(n);
            for (a, b) in p.p.iter().zip(&target.p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maximally_mixed_probabilities() {
        for n in [2, 3, 5] {
            let wd = build_settings(n).unwrap();
            let p = setting_probabilities(&DensityMatrix::maximally_mixed(1 << n), &wd).unwrap();
            assert!((p.p[0] - 2f64.powi(1 - n as i32)).abs() < 1e-12);
            for pj in &p.p[1..] {
                assert!((pj - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn experimental_computational_counts() {
        // 148 all-H, 136 all-V and 68 elsewhere in the 8-qubit computational setting
        let s = MeasurementSetting::computational(8);
        let mut counts = vec![0.0; 256];
        counts[0] = 148.0;
        counts[255] = 136.0;
        counts[1] = 68.0;
        let total: f64 = counts.iter().sum();
        let freqs: Vec<f64> = counts.iter().map(|c| c / total).collect();
        assert!((s.aggregate(&freqs) - 0.8068).abs() < 5e-5);
    }

    #[test]
    fn fidelity_formula_examples() {
        let pure = SettingProbabilities::pure_target(8);
        assert!((fidelity_from_probabilities(&pure) - 1.0).abs() < 1e-15);
        let wd = build_settings(8).unwrap();
        let mixed = setting_probabilities(&DensityMatrix::maximally_mixed(256), &wd).unwrap();
        assert!((fidelity_from_probabilities(&mixed) - 1.0 / 256.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_decomposition_matches_direct_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3, 4] {
            let wd = build_settings(n).unwrap();
            let sc = sc_state(n).unwrap();
            for i in 0..50 {
                let rho = random_density(1 << n, 1 + i % (1 << n), &mut rng);
                let via_settings =
                    fidelity_from_probabilities(&setting_probabilities(&rho, &wd).unwrap());
                let direct = fidelity_pure(&rho, &sc).unwrap();
                assert!(
                    (via_settings - direct).abs() < 1e-10,
                    "n={n}: {via_settings} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn parity_identity_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density(16, 3, &mut rng);
        let wd = build_settings(4).unwrap();
        let p = setting_probabilities(&rho, &wd).unwrap();
        for (idx, s) in wd.settings.iter().enumerate() {
            let probs = s.outcome_probabilities(&rho).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            if idx > 0 {
                let signed: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(o, q)| MeasurementSetting::parity_weight(o) * q)
                    .sum();
                assert!((signed - (2.0 * p.p[idx] - 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_f_examples() {
        let zero_var = SettingProbabilities::new(2, vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(delta_f(&zero_var, &[5, 5, 5]).unwrap(), 0.0);

        let mut p = vec![0.8];
        p.extend([0.2; 8]);
        let p = SettingProbabilities::new(8, p).unwrap();
        let base = delta_f(&p, &[100; 9]).unwrap();
        assert!((base - (0.0004f64 + 0.0002).sqrt()).abs() < 1e-12);
        assert!((base - 0.02449).abs() < 1e-5);
        let doubled = delta_f(&p, &[200; 9]).unwrap();
        assert!((base / doubled - 2f64.sqrt()).abs() < 1e-12);

        assert!(matches!(delta_f(&p, &[0; 9]), Err(Error::Domain(_))));
        assert!(matches!(delta_f(&p, &[1; 3]), Err(Error::Size(_))));
    }

    #[test]
    fn delta_f_strictly_decreasing_in_each_count() {
        let p = SettingProbabilities::new(3, vec![0.7, 0.3, 0.6, 0.45]).unwrap();
        let base = [40u64, 30, 20, 10];
        let d0 = delta_f(&p, &base).unwrap();
        for j in 0..4 {
            let mut more = base;
            more[j] += 1;
            assert!(delta_f(&p, &more).unwrap() < d0);
        }
    }

    #[test]
    fn witness_expectation_examples() {
        let pure = pure_density(&sc_state(4).unwrap());
        assert!((witness_expectation(&pure, 4).unwrap() + 0.5).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(16);
        assert!((witness_expectation(&mixed, 4).unwrap() - (0.5 - 1.0 / 16.0)).abs() < 1e-12);
        for f in [0.3, 0.5001, 0.9] {
            let rho = depolarized_sc(3, f).unwrap();
            let w = witness_expectation(&rho, 3).unwrap();
            assert_eq!(w < 0.0, f > 0.5);
        }
        assert!(witness_expectation(&mixed, 3).is_err());
    }

    #[test]
    fn probabilities_json_shape() {
        let p = SettingProbabilities::new(1, vec![0.25, 0.5]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v, serde_json::json!({"n": 1, "P": [0.25, 0.5]}));
        let back: SettingProbabilities = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}

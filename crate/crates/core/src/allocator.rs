//! Minimum-copy allocation.
//!
//! Every allocation problem here reduces to
//!
//! ```text
//! minimize Σ t_j   subject to   Σ k_j / t_j ≤ ε
//! ```
//!
//! whose optimum sits on the constraint boundary. Stationarity of the
//! Lagrangian gives t_j ∝ √k_j, and tightness fixes the scale:
//! t_j = √k_j · (Σ_i √k_i) / ε. Real solutions are rounded up so the
//! constraint still holds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::witness::SettingProbabilities;

/// Copies given to a setting whose variance weight is zero.
pub const DEFAULT_T_MIN: u64 = 1;

/// Relative slack for the post-rounding feasibility check.
const FEASIBILITY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetProblem {
    pub k: Vec<f64>,
    /// Squared error budget ε = ε₀².
    pub epsilon: f64,
}

impl BudgetProblem {
    pub fn new(k: Vec<f64>, epsilon: f64) -> Result<Self> {
        let p = Self { k, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn from_epsilon0(k: Vec<f64>, epsilon0: f64) -> Result<Self> {
        Self::new(k, epsilon0 * epsilon0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::domain(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if self.k.is_empty() {
            return Err(Error::size("budget problem has no settings"));
        }
        if let Some(bad) = self.k.iter().find(|k| !(**k >= 0.0) || !k.is_finite()) {
            return Err(Error::domain(format!(
                "variance weight {bad} must be finite and >= 0"
            )));
        }
        if self.k.iter().all(|&k| k == 0.0) {
            return Err(Error::Degenerate("every variance weight is zero".into()));
        }
        Ok(())
    }

    /// Σ k_j / t_j.
    pub fn load(&self, t: &[f64]) -> f64 {
        self.k
            .iter()
            .zip(t)
            .filter(|(k, _)| **k > 0.0)
            .map(|(k, t)| k / t)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyAllocation {
    /// Integer copies per setting.
    pub t: Vec<u64>,
    /// Standard-deviation bound ε₀ the allocation satisfies.
    pub epsilon0: f64,
    /// Pre-rounding solution.
    pub real_t: Vec<f64>,
}

impl CopyAllocation {
    /// Fixed per-setting counts with no optimization behind them.
    pub fn fixed(t: Vec<u64>, epsilon0: f64) -> Self {
        let real_t = t.iter().map(|&x| x as f64).collect();
        Self {
            t,
            epsilon0,
            real_t,
        }
    }

    pub fn uniform(settings: usize, copies: u64, epsilon0: f64) -> Self {
        Self::fixed(vec![copies; settings], epsilon0)
    }

    pub fn total(&self) -> u64 {
        self.t.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Rounds up, ignoring floating-point noise just above an integer.
fn ceil_counts(x: f64) -> u64 {
    let nudged = x * (1.0 - 1e-12);
    nudged.ceil().max(0.0) as u64
}

/// Closed-form solution of a budget problem with the default `t_min`.
pub fn solve_budget(p: &BudgetProblem) -> Result<CopyAllocation> {
    solve_budget_with(p, DEFAULT_T_MIN)
}

/// Closed-form solution; zero-weight settings receive `t_min` copies.
pub fn solve_budget_with(p: &BudgetProblem, t_min: u64) -> Result<CopyAllocation> {
    p.validate()?;
    let roots: Vec<f64> = p.k.iter().map(|k| k.sqrt()).collect();
    let scale: f64 = roots.iter().sum::<f64>() / p.epsilon;
    let real_t: Vec<f64> = roots.iter().map(|r| r * scale).collect();
    let t: Vec<u64> = real_t
        .iter()
        .map(|&x| {
            if x > 0.0 {
                ceil_counts(x).max(1)
            } else {
                t_min
            }
        })
        .collect();
    let tf: Vec<f64> = t.iter().map(|&x| x as f64).collect();
    let load = p.load(&tf);
    if load > p.epsilon * (1.0 + FEASIBILITY_RTOL) {
        return Err(Error::Infeasible(format!(
            "rounded allocation has load {load:e} above epsilon {:e}",
            p.epsilon
        )));
    }
    Ok(CopyAllocation {
        t,
        epsilon0: p.epsilon.sqrt(),
        real_t,
    })
}

/// Optimal copies for the cat-state witness at standard-deviation bound ε₀.
pub fn allocate_sc(p: &SettingProbabilities, epsilon0: f64) -> Result<CopyAllocation> {
    allocate_sc_with(p, epsilon0, DEFAULT_T_MIN)
}

pub fn allocate_sc_with(
    p: &SettingProbabilities,
    epsilon0: f64,
    t_min: u64,
) -> Result<CopyAllocation> {
    if !(epsilon0 > 0.0) {
        return Err(Error::domain(format!(
            "epsilon0 {epsilon0} must be positive"
        )));
    }
    let problem = BudgetProblem::from_epsilon0(p.variance_weights(), epsilon0)?;
    solve_budget_with(&problem, t_min)
}

/// Like [`allocate_sc_with`], but a zero-variance problem yields `t_min`
/// copies everywhere instead of an error.
pub fn allocate_sc_or_floor(
    p: &SettingProbabilities,
    epsilon0: f64,
    t_min: u64,
) -> Result<CopyAllocation> {
    match allocate_sc_with(p, epsilon0, t_min) {
        Err(Error::Degenerate(_)) => Ok(CopyAllocation {
            t: vec![t_min; p.p.len()],
            epsilon0,
            real_t: vec![0.0; p.p.len()],
        }),
        other => other,
    }
}

/// Smallest uniform allocation meeting the same ΔF bound.
pub fn uniform_for_bound(p: &SettingProbabilities, epsilon0: f64) -> Result<CopyAllocation> {
    let k = p.variance_weights();
    let per = ceil_counts(k.iter().sum::<f64>() / (epsilon0 * epsilon0)).max(1);
    Ok(CopyAllocation::uniform(k.len(), per, epsilon0))
}

/// Tomography allocation when the measurement operators of different
/// settings are mutually orthogonal.
///
/// `f[ν][μ]` is the frequency of outcome μ in setting ν and `m_norms`, when
/// given, holds Tr(M M†) for each operator (default 1, rank-1 projectors).
/// k_ν = Σ_μ f(1−f)·Tr(M M†), then the budget solution at ε = ε₀².
pub fn allocate_tomography_orthogonal(
    f: &[Vec<f64>],
    m_norms: Option<&[Vec<f64>]>,
    epsilon0: f64,
) -> Result<CopyAllocation> {
    if let Some(norms) = m_norms {
        let same_shape =
            norms.len() == f.len() && norms.iter().zip(f).all(|(a, b)| a.len() == b.len());
        if !same_shape {
            return Err(Error::size(
                "operator-norm table does not match the frequency table",
            ));
        }
    }
    let mut k = Vec::with_capacity(f.len());
    for (nu, row) in f.iter().enumerate() {
        let mut acc = 0.0;
        for (mu, &fm) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&fm) {
                return Err(Error::domain(format!("frequency {fm} outside [0, 1]")));
            }
            let norm = m_norms.map_or(1.0, |n| n[nu][mu]);
            acc += fm * (1.0 - fm) * norm;
        }
        k.push(acc);
    }
    solve_budget(&BudgetProblem::from_epsilon0(k, epsilon0)?)
}

/// Tomography allocation with cross terms between settings.
///
/// The bilinear constraint Σ k_{νν'}/√(T_ν T_ν') ≤ ε is relaxed through
/// AM-GM, 1/√(T_ν T_ν') ≤ (1/T_ν + 1/T_ν')/2, which turns it into a budget
/// problem with k_p = (Σ_ν' k_{pν'} + Σ_ν k_{νp})/2. The bilinear form is
/// then checked on the result.
pub fn allocate_tomography_nonorthogonal(
    k_matrix: &[Vec<f64>],
    epsilon0: f64,
) -> Result<CopyAllocation> {
    let m = k_matrix.len();
    if m == 0 || k_matrix.iter().any(|r| r.len() != m) {
        return Err(Error::size("k matrix must be square and non-empty"));
    }
    if k_matrix.iter().flatten().any(|v| !(*v >= 0.0)) {
        return Err(Error::domain("k matrix entries must be >= 0"));
    }
    let effective: Vec<f64> = (0..m)
        .map(|p| {
            let row: f64 = k_matrix[p].iter().sum();
            let col: f64 = k_matrix.iter().map(|r| r[p]).sum();
            (row + col) / 2.0
        })
        .collect();
    let problem = BudgetProblem::from_epsilon0(effective, epsilon0)?;
    let alloc = solve_budget(&problem)?;
    let bilinear = bilinear_load(k_matrix, &alloc.t);
    if bilinear > problem.epsilon * (1.0 + FEASIBILITY_RTOL) {
        return Err(Error::Infeasible(format!(
            "bilinear load {bilinear:e} exceeds epsilon {:e}",
            problem.epsilon
        )));
    }
    Ok(alloc)
}

/// Σ_{νν'} k_{νν'} / √(T_ν T_ν').
pub fn bilinear_load(k_matrix: &[Vec<f64>], t: &[u64]) -> f64 {
    let mut acc = 0.0;
    for (a, row) in k_matrix.iter().enumerate() {
        for (b, &k) in row.iter().enumerate() {
            if k > 0.0 {
                acc += k / ((t[a] as f64) * (t[b] as f64)).sqrt();
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::witness::delta_f;
    use proptest::prelude::*;

    #[test]
    fn symmetric_weights_split_evenly() {
        let a = solve_budget(&BudgetProblem::new(vec![0.01; 5], 0.001).unwrap()).unwrap();
        for r in &a.real_t {
            assert!((r - 50.0).abs() < 1e-9);
        }
        assert_eq!(a.t, vec![50; 5]);
        assert_eq!(a.total(), 250);
    }

    #[test]
    fn eight_qubit_hand_values() {
        // P₁ = 0.8, P_j = 0.2, ε₀ = 0.016
        let mut k = vec![0.04];
        k.extend([0.0025; 8]);
        let a = solve_budget(&BudgetProblem::from_epsilon0(k, 0.016).unwrap()).unwrap();
        assert!((a.real_t[0] - 0.2 * 0.6 / 0.000256).abs() < 1e-9);
        assert!((a.real_t[0] - 468.75).abs() < 1e-9);
        assert!((a.real_t[1] - 117.1875).abs() < 1e-9);
        assert_eq!(a.t[0], 469);
        assert!(a.t[1..].iter().all(|&t| t == 118));
    }

    #[test]
    fn halving_epsilon_doubles_real_counts() {
        let k = vec![0.3, 0.02, 0.11];
        let a = solve_budget(&BudgetProblem::new(k.clone(), 0.002).unwrap()).unwrap();
        let b = solve_budget(&BudgetProblem::new(k, 0.001).unwrap()).unwrap();
        for (x, y) in a.real_t.iter().zip(&b.real_t) {
            assert!((2.0 * x - y).abs() < 1e-9 * y);
        }
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            BudgetProblem::new(vec![0.0, 0.0], 0.1),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            BudgetProblem::new(vec![0.1], 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            BudgetProblem::new(vec![-0.1, 0.2], 0.1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_budget(&BudgetProblem {
                k: vec![0.0],
                epsilon: 1.0
            }),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zero_weight_settings_get_t_min() {
        let p = BudgetProblem::new(vec![0.0, 0.04, 0.0], 0.001).unwrap();
        assert_eq!(solve_budget(&p).unwrap().t[0], 1);
        assert_eq!(solve_budget_with(&p, 3).unwrap().t, vec![3, 40, 3]);
    }

    #[test]
    fn pure_target_is_degenerate() {
        let p = SettingProbabilities::pure_target(4);
        assert!(matches!(allocate_sc(&p, 0.01), Err(Error::Degenerate(_))));
        let floor = allocate_sc_or_floor(&p, 0.01, 2).unwrap();
        assert_eq!(floor.t, vec![2; 5]);
    }

    #[test]
    fn allocate_sc_maps_weights() {
        let p = SettingProbabilities::new(2, vec![0.5, 0.5, 0.5]).unwrap();
        let a = allocate_sc(&p, 0.05).unwrap();
        // k = [1/16, 1/16, 1/16] → equal thirds of 3·(1/16)/0.0025
        for r in &a.real_t {
            assert!((r - 0.25 * 0.75 / 0.0025).abs() < 1e-9);
        }
        assert!(delta_f(&p, &a.t).unwrap() <= 0.05);
    }

    #[test]
    fn appendix_probabilities_give_closed_form_counts() {
        let p = SettingProbabilities::new(
            8,
            vec![
                0.8068, 0.2, 0.1869, 0.2, 0.1909, 0.2072, 0.1792, 0.2069, 0.1942,
            ],
        )
        .unwrap();
        let a = allocate_sc(&p, 0.016).unwrap();
        let k = p.variance_weights();
        let s: f64 = k.iter().map(|v| v.sqrt()).sum();
        for (j, r) in a.real_t.iter().enumerate() {
            assert!((r - k[j].sqrt() * s / 0.000256).abs() < 1e-9);
        }
        assert!((a.real_t[0] - 458.0).abs() < 2.0, "{}", a.real_t[0]);
        assert!(delta_f(&p, &a.t).unwrap() <= 0.016);
    }

    #[test]
    fn orthogonal_tomography_examples() {
        assert!(matches!(
            allocate_tomography_orthogonal(&[vec![1.0, 0.0], vec![0.0, 1.0]], None, 0.1),
            Err(Error::Degenerate(_))
        ));

        let d = 8;
        let f = vec![vec![1.0 / d as f64; d]];
        let a = allocate_tomography_orthogonal(&f, None, 0.05).unwrap();
        let k = (d as f64 - 1.0) / d as f64;
        assert!((a.real_t[0] - k / 0.0025).abs() < 1e-9);

        let rows = vec![vec![0.3, 0.7], vec![0.7, 0.3], vec![0.3, 0.7]];
        let a = allocate_tomography_orthogonal(&rows, None, 0.02).unwrap();
        assert!(a.t.iter().all(|&t| t == a.t[0]));

        let norms = vec![vec![2.0, 2.0]];
        let a1 = allocate_tomography_orthogonal(&[vec![0.5, 0.5]], None, 0.1).unwrap();
        let a2 = allocate_tomography_orthogonal(&[vec![0.5, 0.5]], Some(&norms), 0.1).unwrap();
        assert!((a2.real_t[0] - 2.0 * a1.real_t[0]).abs() < 1e-9);
        assert!(allocate_tomography_orthogonal(&[vec![1.5]], None, 0.1).is_err());
        assert!(allocate_tomography_orthogonal(&[vec![0.5]], Some(&[]), 0.1).is_err());
    }

    #[test]
    fn nonorthogonal_reduces_to_orthogonal_on_diagonal() {
        let km = vec![
            vec![0.2, 0.0, 0.0],
            vec![0.0, 0.05, 0.0],
            vec![0.0, 0.0, 0.1],
        ];
        let a = allocate_tomography_nonorthogonal(&km, 0.03).unwrap();
        let b = solve_budget(&BudgetProblem::from_epsilon0(vec![0.2, 0.05, 0.1], 0.03).unwrap())
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nonorthogonal_two_by_two_effective_weights() {
        // [[a, c], [c, b]] → effective (a + c, b + c) after halving row + column sums
        let (a, b, c) = (0.3, 0.1, 0.05);
        let km = vec![vec![a, c], vec![c, b]];
        let got = allocate_tomography_nonorthogonal(&km, 0.05).unwrap();
        let want =
            solve_budget(&BudgetProblem::from_epsilon0(vec![a + c, b + c], 0.05).unwrap()).unwrap();
        assert_eq!(got.real_t, want.real_t);
        assert!(bilinear_load(&km, &got.t) <= 0.0025);
    }

    #[test]
    fn nonorthogonal_rejects_bad_shapes() {
        assert!(allocate_tomography_nonorthogonal(&[vec![0.1, 0.2]], 0.1).is_err());
        assert!(allocate_tomography_nonorthogonal(&[vec![-0.1]], 0.1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = BudgetProblem::new(vec![0.1, 0.2], 0.01).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<BudgetProblem>(&text).unwrap(), p);
        let a = solve_budget(&p).unwrap();
        let back: CopyAllocation =
            serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    fn arb_problem() -> impl Strategy<Value = BudgetProblem> {
        (
            proptest::collection::vec(1e-4f64..1.0, 2..=12),
            1e-5f64..1e-2,
        )
            .prop_map(|(k, epsilon)| BudgetProblem { k, epsilon })
    }

    proptest! {
        #[test]
        fn ratio_law_and_tightness(p in arb_problem()) {
            let a = solve_budget(&p).unwrap();
            for i in 0..p.k.len() {
                for j in 0..p.k.len() {
                    let lhs = a.real_t[i] / a.real_t[j];
                    let rhs = (p.k[i] / p.k[j]).sqrt();
                    prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
                }
            }
            prop_assert!((p.load(&a.real_t) - p.epsilon).abs() <= 1e-9 * p.epsilon);
            let rounded: Vec<f64> = a.t.iter().map(|&t| t as f64).collect();
            prop_assert!(p.load(&rounded) <= p.epsilon * (1.0 + 1e-12));
            for (t, r) in a.t.iter().zip(&a.real_t) {
                prop_assert!(*t >= 1 && (*t as f64) >= *r * (1.0 - 1e-12));
            }
        }

        #[test]
        fn raising_one_weight_never_lowers_any_count(p in arb_problem(), idx in 0usize..12, bump in 1e-4f64..0.5) {
            let idx = idx % p.k.len();
            let before = solve_budget(&p).unwrap();
            let mut k = p.k.clone();
            k[idx] += bump;
            let after = solve_budget(&BudgetProblem { k, epsilon: p.epsilon }).unwrap();
            for (b, a) in before.real_t.iter().zip(&after.real_t) {
                prop_assert!(a >= b);
            }
        }

        #[test]
        fn optimized_total_never_exceeds_uniform(
            p in proptest::collection::vec(0.02f64..0.98, 3..=11),
            eps0 in 0.005f64..0.05,
        ) {
            let sp = SettingProbabilities::from_vec(p).unwrap();
            let opt = allocate_sc(&sp, eps0).unwrap();
            let uni = uniform_for_bound(&sp, eps0).unwrap();
            let k = sp.variance_weights();
            let real_uniform = k.len() as f64 * k.iter().sum::<f64>() / (eps0 * eps0);
            prop_assert!(opt.real_t.iter().sum::<f64>() <= real_uniform * (1.0 + 1e-12));
            // rounding can add at most one copy per setting to the optimized side
            prop_assert!(opt.total() < uni.total() + k.len() as u64);
            prop_assert!(delta_f(&sp, &uni.t).unwrap() <= eps0 * (1.0 + 1e-9));
        }
    }
}

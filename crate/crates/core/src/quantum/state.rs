use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// Largest qubit count any state constructor accepts (4096×4096 matrices).
pub const MAX_QUBITS: usize = 12;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = -1e-9;
const NORM_TOL: f64 = 1e-12;

pub(crate) fn check_qubits(n: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(())
    } else {
        Err(Error::size(format!(
            "qubit count {n} outside 1..={MAX_QUBITS}"
        )))
    }
}

/// Qubit count for a power-of-two dimension.
pub(crate) fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim > 1).then(|| dim.trailing_zeros() as usize)
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!("state norm² is {norm}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales an arbitrary nonzero vector to unit norm.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::domain("cannot normalize a zero vector"));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Ok(Self { amplitudes })
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::size(format!("basis index {index} >= dim {dim}")));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }
}

/// The n-qubit cat state (|H⟩^⊗n + |V⟩^⊗n)/√2 with |H⟩ = |0⟩, |V⟩ = |1⟩.
pub fn sc_state(n: usize) -> Result<PureState> {
    check_qubits(n)?;
    let dim = 1usize << n;
    let mut amplitudes = vec![ZERO; dim];
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    amplitudes[0] = a;
    amplitudes[dim - 1] = a;
    Ok(PureState { amplitudes })
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (via a full
    /// eigendecomposition).
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::check_structure(&matrix)?;
        let (values, _) = matrix.eigh()?;
        if let Some(&min) = values.first() {
            if min < PSD_TOL {
                return Err(Error::domain(format!(
                    "matrix is not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(Self { matrix })
    }

    fn check_structure(matrix: &ComplexMatrix) -> Result<()> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::size(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let herm = matrix.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::domain(format!(
                "matrix is not Hermitian (max |ρ−ρ†| = {herm:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::domain(format!("trace is {tr}, expected 1")));
        }
        Ok(())
    }

    /// Skips the eigenvalue check; for constructions that are positive by
    /// design (mixtures of projectors, spectral reconstructions).
    pub(crate) fn from_psd_unchecked(matrix: ComplexMatrix) -> Self {
        debug_assert!(Self::check_structure(&matrix).is_ok());
        Self { matrix }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn qubits(&self) -> Option<usize> {
        qubits_for_dim(self.dim())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix.eigh().map(|(v, _)| v).unwrap_or_default()
    }

    /// ⟨v|ρ|v⟩ (real part; the imaginary part vanishes for Hermitian ρ).
    pub fn expectation(&self, v: &[C64]) -> Result<f64> {
        Ok(self.matrix.quadratic_form(v)?.re)
    }

    pub fn to_json_value(&self) -> Result<DensityMatrixJson> {
        let n = self.qubits().ok_or_else(|| {
            Error::size(format!("dimension {} is not a power of two", self.dim()))
        })?;
        let d = self.dim();
        let re = (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)].re).collect())
            .collect();
        let im = (0..d)
            .map(|i| (0..d).map(|j| self.matrix[(i, j)].im).collect())
            .collect();
        Ok(DensityMatrixJson { n, re, im })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json_value()?)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DensityMatrixJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Wire form `{"n": qubits, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(raw: DensityMatrixJson) -> Result<Self> {
        check_qubits(raw.n)?;
        let d = 1usize << raw.n;
        let shape_ok = raw.re.len() == d
            && raw.im.len() == d
            && raw.re.iter().chain(&raw.im).all(|row| row.len() == d);
        if !shape_ok {
            return Err(Error::size(format!(
                "expected {d}x{d} real and imaginary parts for n = {}",
                raw.n
            )));
        }
        let m = ComplexMatrix::from_fn(d, d, |i, j| C64::new(raw.re[i][j], raw.im[i][j]));
        DensityMatrix::new(m)
    }
}

/// |ψ⟩⟨ψ|.
pub fn pure_density(psi: &PureState) -> DensityMatrix {
    let a = psi.amplitudes();
    DensityMatrix::from_psd_unchecked(ComplexMatrix::outer(a, a))
}

/// p·target + (1 − p)·I/d.
pub fn white_noise_mix(target: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("mixing weight {p} outside [0, 1]")));
    }
    let d = target.dim();
    let mut m = target.matrix().scale(p);
    let floor = (1.0 - p) / d as f64;
    for i in 0..d {
        m[(i, i)] += C64::new(floor, 0.0);
    }
    Ok(DensityMatrix::from_psd_unchecked(m))
}

/// Mixing weight that gives a depolarized pure state the requested fidelity
/// with that pure state: solves p + (1 − p)/d = fidelity.
pub fn mixing_weight_for_fidelity(dim: usize, fidelity: f64) -> Result<f64> {
    let floor = 1.0 / dim as f64;
    if !(floor..=1.0).contains(&fidelity) {
        return Err(Error::domain(format!(
            "fidelity {fidelity} unreachable by white noise in dimension {dim} (min {floor})"
        )));
    }
    Ok((fidelity - floor) / (1.0 - floor))
}

/// Depolarized n-qubit cat state with the given fidelity to the pure cat state.
pub fn depolarized_sc(n: usize, fidelity: f64) -> Result<DensityMatrix> {
    let target = pure_density(&sc_state(n)?);
    let p = mixing_weight_for_fidelity(target.dim(), fidelity)?;
    white_noise_mix(&target, p)
}

/// ⟨ψ|ρ|ψ⟩ clamped to [0, 1].
pub fn fidelity_pure(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::size(format!(
            "density matrix dim {} vs state dim {}",
            rho.dim(),
            psi.dim()
        )));
    }
    Ok(rho.expectation(psi.amplitudes())?.clamp(0.0, 1.0))
}

/// √Tr((a − b)(a − b)†).
pub fn frobenius_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::size(format!(
            "dims {} and {} differ",
            a.dim(),
            b.dim()
        )));
    }
    Ok((a.matrix() - b.matrix()).frobenius_norm())
}

/// Euclidean projection of a real vector onto the probability simplex.
pub(crate) fn project_onto_simplex(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            shift = candidate;
        }
    }
    values.iter().map(|&v| (v - shift).max(0.0)).collect()
}

/// Nearest (Frobenius) unit-trace positive semidefinite matrix to the
/// Hermitian part of `m`.
pub fn psd_project(m: &ComplexMatrix) -> Result<DensityMatrix> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::size(format!(
            "cannot project a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let (values, vectors) = m.eigh()?;
    let projected = project_onto_simplex(&values);
    let rebuilt = ComplexMatrix::from_spectrum(&projected, &vectors);
    let mut out = rebuilt.hermitian_part()?;
    // pin the trace exactly against accumulated rounding
    let tr = out.trace().re;
    if tr > 0.0 {
        out = out.scale(1.0 / tr);
    }
    Ok(DensityMatrix::from_psd_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hermitian(d: usize, rng: &mut impl Rng) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = C64::new(rng.random_range(-1.0..1.0), 0.0);
            for j in (i + 1)..d {
                let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    fn assert_valid(rho: &DensityMatrix) {
        let m = rho.matrix();
        assert!(m.hermiticity_error() <= HERMITIAN_TOL);
        assert!((m.trace().re - 1.0).abs() <= TRACE_TOL);
        assert!(rho.eigenvalues()[0] >= PSD_TOL);
    }

    #[test]
    fn sc_state_support_and_range() {
        let one = sc_state(1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(one.amplitudes(), &[C64::new(h, 0.0), C64::new(h, 0.0)]);
        let three = sc_state(3).unwrap();
        for (i, a) in three.amplitudes().iter().enumerate() {
            assert_eq!(a.norm() > 0.0, i == 0 || i == 7);
        }
        assert!(matches!(sc_state(0), Err(Error::Size(_))));
        assert!(matches!(sc_state(13), Err(Error::Size(_))));
    }

    #[test]
    fn sc_self_fidelity_is_one() {
        let psi = sc_state(8).unwrap();
        let f = fidelity_pure(&pure_density(&psi), &psi).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_density_examples() {
        let zero = PureState::basis(2, 0).unwrap();
        assert_eq!(
            pure_density(&zero).matrix(),
            &ComplexMatrix::diag(&[1.0, 0.0])
        );
        let rho = pure_density(&sc_state(2).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let corner = (i == 0 || i == 3) && (j == 0 || j == 3);
                let expected = if corner { 0.5 } else { 0.0 };
                assert!((rho.matrix()[(i, j)] - C64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn white_noise_extremes() {
        let target = pure_density(&sc_state(3).unwrap());
        assert_eq!(white_noise_mix(&target, 1.0).unwrap(), target);
        let mixed = white_noise_mix(&target, 0.0).unwrap();
        assert!(frobenius_distance(&mixed, &DensityMatrix::maximally_mixed(8)).unwrap() < 1e-15);
        assert!(white_noise_mix(&target, 1.2).is_err());
    }

    #[test]
    fn ten_qubit_mixing_weight_inverts_fidelity() {
        let d = 1024.0;
        let p = mixing_weight_for_fidelity(1024, 0.8414).unwrap();
        assert!((p - (0.8414 - 1.0 / d) / (1.0 - 1.0 / d)).abs() < 1e-15);
        assert!((p + (1.0 - p) / d - 0.8414).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let psi = sc_state(3).unwrap();
        let f = fidelity_pure(&DensityMatrix::maximally_mixed(8), &psi).unwrap();
        assert!((f - 0.125).abs() < 1e-15);
        let rho = white_noise_mix(&pure_density(&psi), 0.7).unwrap();
        // direct contraction Σ_ij ψ_i* ρ_ij ψ_j
        let a = psi.amplitudes();
        let mut direct = ZERO;
        for i in 0..8 {
            for j in 0..8 {
                direct += a[i].conj() * rho.matrix()[(i, j)] * a[j];
            }
        }
        assert!((direct.re - 0.7375).abs() < 1e-12);
        assert!((fidelity_pure(&rho, &psi).unwrap() - 0.7375).abs() < 1e-12);
        assert!(fidelity_pure(&rho, &sc_state(2).unwrap()).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let a = DensityMatrix::new(ComplexMatrix::diag(&[1.0, 0.0])).unwrap();
        let b = DensityMatrix::new(ComplexMatrix::diag(&[0.0, 1.0])).unwrap();
        assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        assert!((frobenius_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psd_project_examples() {
        let out = psd_project(&ComplexMatrix::diag(&[2.0, -1.0])).unwrap();
        assert!(
            frobenius_distance(
                &out,
                &DensityMatrix::new(ComplexMatrix::diag(&[1.0, 0.0])).unwrap()
            )
            .unwrap()
                < 1e-12
        );

        let valid = white_noise_mix(&pure_density(&sc_state(2).unwrap()), 0.4).unwrap();
        let again = psd_project(valid.matrix()).unwrap();
        assert!(frobenius_distance(&valid, &again).unwrap() < 1e-9);

        assert!(matches!(
            psd_project(&ComplexMatrix::zeros(2, 3)),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn rejects_invalid_density_matrices() {
        assert!(DensityMatrix::new(ComplexMatrix::diag(&[0.6, 0.6])).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::diag(&[1.5, -0.5])).is_err());
        let mut m = ComplexMatrix::diag(&[0.5, 0.5]);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let rho = white_noise_mix(&pure_density(&sc_state(2).unwrap()), 0.3).unwrap();
        let text = rho.to_json().unwrap();
        let back = DensityMatrix::from_json(&text).unwrap();
        assert!(frobenius_distance(&rho, &back).unwrap() < 1e-15);
        assert!(DensityMatrix::from_json(r#"{"n":1,"re":[[1,0]],"im":[[0,0]]}"#).is_err());
        assert!(
            DensityMatrix::from_json(r#"{"n":1,"re":[[1,0],[0,0]],"im":[[0,0],[0,0]],"x":1}"#)
                .is_err()
        );
    }

    #[test]
    fn psd_project_random_hermitian_inputs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let d = [2, 4, 8][trial % 3];
            let out = psd_project(&random_hermitian(d, &mut rng)).unwrap();
            assert_valid(&out);
        }
    }

    proptest! {
        #[test]
        fn pure_density_is_idempotent(v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)) {
            prop_assume!(v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3));
            let psi = PureState::normalized(v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap();
            let rho = pure_density(&psi);
            let sq = rho.matrix().matmul(rho.matrix()).unwrap();
            let err = (&sq - rho.matrix()).as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-10);
            prop_assert!((rho.purity() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn depolarized_fidelity_is_affine(p in 0.0f64..=1.0, n in 2usize..=8) {
            let psi = sc_state(n).unwrap();
            let d = (1usize << n) as f64;
            let rho = white_noise_mix(&pure_density(&psi), p).unwrap();
            let f = fidelity_pure(&rho, &psi).unwrap();
            prop_assert!((f - (p + (1.0 - p) / d)).abs() <= 1e-10);
        }

        #[test]
        fn frobenius_triangle_inequality(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = psd_project(&random_hermitian(4, &mut rng)).unwrap();
            let b = psd_project(&random_hermitian(4, &mut rng)).unwrap();
            let c = psd_project(&random_hermitian(4, &mut rng)).unwrap();
            let ab = frobenius_distance(&a, &b).unwrap();
            let bc = frobenius_distance(&b, &c).unwrap();
            let ac = frobenius_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}

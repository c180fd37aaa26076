//! States, density matrices and the small amount of dense complex linear
//! algebra the rest of the crate is built on.

mod matrix;
mod random;
mod state;

pub use matrix::{kron, kron_vec, ComplexMatrix, C64};
pub use random::{random_density, random_pure_state};
pub use state::{
    depolarized_sc, fidelity_pure, frobenius_distance, mixing_weight_for_fidelity, psd_project,
    pure_density, sc_state, white_noise_mix, DensityMatrix, DensityMatrixJson, PureState,
    HERMITIAN_TOL, MAX_QUBITS, PSD_TOL, TRACE_TOL,
};

pub(crate) use matrix::{ONE, ZERO};
pub(crate) use state::check_qubits;

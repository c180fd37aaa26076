use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::{ComplexMatrix, C64};
use super::state::{DensityMatrix, PureState};

fn gaussian(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state.
pub fn random_pure_state(dim: usize, rng: &mut impl Rng) -> PureState {
    let v = (0..dim).map(|_| gaussian(rng)).collect();
    PureState::normalized(v).expect("gaussian vector is nonzero")
}

/// Random density matrix G·G†/Tr(G·G†) from a dim×rank complex Ginibre matrix.
pub fn random_density(dim: usize, rank: usize, rng: &mut impl Rng) -> DensityMatrix {
    let rank = rank.clamp(1, dim);
    let g = ComplexMatrix::from_fn(dim, rank, |_, _| gaussian(rng));
    let gg = g.matmul(&g.adjoint()).expect("shapes agree");
    let tr = gg.trace().re;
    let m = gg.hermitian_part().expect("square").scale(1.0 / tr);
    DensityMatrix::from_psd_unchecked(m)
}

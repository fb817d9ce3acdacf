//! Small test systems with known behaviour.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::qbsys::{QBSystem, QuadraticOperator};

/// `x' = -x + h x^2`; the domain of attraction of 0 is `x < 1/h` (for `h > 0`).
pub fn scalar_system(h: f64) -> QBSystem {
    let hq = QuadraticOperator::from_triplets(1, 1, [(0, 0, h)]).expect("1x1 entry");
    QBSystem::autonomous(
        DMatrix::identity(1, 1),
        DMatrix::from_element(1, 1, -1.0),
        hq,
    )
    .expect("scalar system is well formed")
}

/// Random autonomous system with Hurwitz `A = R - shift I` (entries of `R`
/// uniform in `[-1, 1] / sqrt(n)`), `E = I` and quadratic entries uniform in
/// `[-strength, strength]`.
pub fn random_stable_system(n: usize, seed: u64, strength: f64) -> Result<QBSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
    let a = r - DMatrix::identity(n, n) * 2.0;
    let h = DMatrix::from_fn(n, n * n, |_, _| strength * rng.random_range(-1.0..1.0));
    QBSystem::autonomous(
        DMatrix::identity(n, n),
        a,
        QuadraticOperator::from_dense(&h)?,
    )
}

/// `A = diag(-1, -2)`, `E = I`, small random `H`.
pub fn diagonal_2d(seed: u64, strength: f64) -> Result<QBSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
    let h = DMatrix::from_fn(2, 4, |_, _| strength * rng.random_range(-1.0..1.0));
    QBSystem::autonomous(
        DMatrix::identity(2, 2),
        a,
        QuadraticOperator::from_dense(&h)?,
    )
}

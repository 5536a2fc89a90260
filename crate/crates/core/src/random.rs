//! Seeded random instances: Ginibre matrices, Kraus lists, unitaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{c, column_basis, vstack, zeros, CMatrix};

pub type Prng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex Ginibre matrix with entries of unit variance.
pub fn ginibre(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    let h = 0.5f64.sqrt();
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re * h, im * h)
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let g = ginibre(rng, n, n);
    (&g + g.adjoint()).scale(0.5)
}

/// Matrix with orthonormal columns, `rows >= cols`.
pub fn random_isometry(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    loop {
        let q = column_basis(&ginibre(rng, rows, cols), 1e-8);
        if q.ncols() == cols {
            return q;
        }
    }
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    random_isometry(rng, n, n)
}

/// `count` Ginibre Kraus operators of shape `n x d`, scaled by `1/sqrt(count*n)`.
pub fn random_kraus(rng: &mut impl Rng, n: usize, d: usize, count: usize) -> Vec<CMatrix> {
    let s = 1.0 / ((count * n) as f64).sqrt();
    (0..count).map(|_| ginibre(rng, n, d).scale(s)).collect()
}

/// Kraus operators `K_i` (each `n x n`) with `sum K_i* K_i = 1`, taken as the
/// blocks of a random isometry `C^n -> C^{count*n}`.
pub fn random_unital_kraus(rng: &mut impl Rng, n: usize, count: usize) -> Vec<CMatrix> {
    let v = random_isometry(rng, n * count, n);
    (0..count).map(|k| v.rows(k * n, n).into_owned()).collect()
}

/// Random strict contraction of operator norm `norm`.
pub fn random_contraction(rng: &mut impl Rng, rows: usize, cols: usize, norm: f64) -> CMatrix {
    let g = ginibre(rng, rows, cols);
    let top = crate::numerics::op_norm(&g);
    if top == 0.0 {
        return zeros(rows, cols);
    }
    g.scale(norm / top)
}

/// Block-diagonal stacking helper used by generators of block instances.
pub fn stack_rows(blocks: &[CMatrix]) -> CMatrix {
    vstack(blocks)
}

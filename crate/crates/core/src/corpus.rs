//! Seeded random inputs: coefficient matrices, step functions and pairs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::CoefficientMatrix;
use crate::numkit::{expm, CMatrix, I};
use crate::signals::{Dyadic, StepFunction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with real and imaginary parts uniform in `[−1, 1)`.
pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = matrix(rng, n, n);
    (&a + &a.adjoint()).scale_real(0.5)
}

/// Rescaled to operator norm at most `bound`.
pub fn bounded(a: CMatrix, bound: f64) -> CMatrix {
    let s = a.opnorm();
    if s > bound {
        a.scale_real(bound / s)
    } else {
        a
    }
}

pub fn unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    expm(&hermitian(rng, n).scale(I)).expect("square input")
}

/// `H`, `L` and `W` random with `‖H‖, ‖L‖ ≤ 1`.
pub fn unitary_generator(rng: &mut impl Rng, dim_h: usize, dim_k: usize) -> CoefficientMatrix {
    let h = bounded(hermitian(rng, dim_h), 1.0);
    let l = bounded(matrix(rng, dim_h * dim_k, dim_h), 1.0);
    let w = unitary(rng, dim_h * dim_k);
    CoefficientMatrix::make_unitary_generator(&h, &l, &w).expect("random generator is valid")
}

/// A strict contraction: `W` scaled by 0.8 and positive damping added to `K`.
pub fn contraction_generator(rng: &mut impl Rng, dim_h: usize, dim_k: usize) -> CoefficientMatrix {
    let h = bounded(hermitian(rng, dim_h), 1.0);
    let l = bounded(matrix(rng, dim_h * dim_k, dim_h), 1.0);
    let w = unitary(rng, dim_h * dim_k).scale_real(0.8);
    let d = bounded(matrix(rng, dim_h, dim_h), 1.0);
    let d = (&d.adjoint() * &d).scale_real(0.3);
    CoefficientMatrix::make_contraction_generator(&h, &l, &w, &d).expect("random generator is valid")
}

/// A step function on `]0, 1[` with `pieces` pieces whose breakpoints lie on
/// the `2^{-level}` grid; values in the unit box.
pub fn step_function(rng: &mut impl Rng, dim_k: usize, level: u32, pieces: usize) -> StepFunction {
    let cells = 1i64 << level;
    let mut cuts: Vec<i64> = Vec::new();
    while cuts.len() + 1 < pieces.min(cells as usize) {
        let j = rng.random_range(1..cells);
        if !cuts.contains(&j) {
            cuts.push(j);
        }
    }
    cuts.sort();
    let breakpoints = cuts.iter().map(|j| Dyadic::grid_point(*j, level)).collect::<Vec<_>>();
    let values = (0..=breakpoints.len())
        .map(|_| (0..dim_k).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
        .collect();
    StepFunction::new(dim_k, breakpoints, values).expect("breakpoints are increasing and positive")
}

/// A pair of unitary-type coefficients that do not commute, with test
/// functions over `k1 ⊕ k2` of order at most `level`.
#[derive(Debug, Clone)]
pub struct TrotterCase {
    pub f1: CoefficientMatrix,
    pub f2: CoefficientMatrix,
    pub f: StepFunction,
    pub g: StepFunction,
}

pub fn trotter_case(seed: u64, dim_h: usize, k1: usize, k2: usize, level: u32) -> TrotterCase {
    let mut r = rng(seed);
    let f1 = unitary_generator(&mut r, dim_h, k1);
    let f2 = unitary_generator(&mut r, dim_h, k2);
    let f = step_function(&mut r, k1 + k2, level, 3);
    let g = step_function(&mut r, k1 + k2, level, 3);
    TrotterCase { f1, f2, f, g }
}

pub fn contraction_case(seed: u64, dim_h: usize, k1: usize, k2: usize, level: u32) -> TrotterCase {
    let mut r = rng(seed);
    let f1 = contraction_generator(&mut r, dim_h, k1);
    let f2 = contraction_generator(&mut r, dim_h, k2);
    let f = step_function(&mut r, k1 + k2, level, 3);
    let g = step_function(&mut r, k1 + k2, level, 3);
    TrotterCase { f1, f2, f, g }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_well_formed() {
        let a = trotter_case(3, 4, 1, 1, 2);
        let b = trotter_case(3, 4, 1, 1, 2);
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.f, b.f);
        assert!(a.f.order() <= 2 && a.g.order() <= 2);
        assert!(a.f1.check_structure(1e-10).passed());
        assert!(a.f1.k().commutator(a.f2.k()).opnorm() > 1e-3);
        let c = contraction_case(3, 2, 1, 1, 2);
        assert!(c.f1.check_contraction(1e-10).passed());
        assert!(!c.f1.check_structure(1e-6).passed());
        let f = step_function(&mut rng(1), 1, 1, 5);
        assert!(f.breakpoints().len() <= 1);
    }
}

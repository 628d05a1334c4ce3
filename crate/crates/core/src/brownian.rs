//! Random unitaries driven by independent Brownian motions,
//! `U_t = lim Π_steps e^{iH_1 ΔB¹} ⋯ e^{iH_d ΔB^d}`, with bounded selfadjoint
//! `H_l`, and a Monte-Carlo estimate of their mean.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::numkit::{self, CMatrix, I, ONE, ZERO};

const SELFADJOINT_TOL: f64 = 1e-12;
const PATHS_PER_BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianExample {
    dim_h: usize,
    hamiltonians: Vec<CMatrix>,
}

impl BrownianExample {
    pub fn new(hamiltonians: Vec<CMatrix>) -> Result<BrownianExample> {
        let first = hamiltonians.first().ok_or_else(|| Error::Argument("need at least one Hamiltonian".into()))?;
        let dim_h = first.rows();
        for (l, h) in hamiltonians.iter().enumerate() {
            if !h.is_square() || h.rows() != dim_h {
                return Err(Error::Dimension(format!("H[{l}] is {}×{}, expected {dim_h}×{dim_h}", h.rows(), h.cols())));
            }
            let residual = numkit::selfadjoint_defect(h);
            if residual > SELFADJOINT_TOL {
                return Err(Error::Validation { what: format!("selfadjointness of H[{l}]"), residual, tol: SELFADJOINT_TOL });
            }
        }
        Ok(BrownianExample { dim_h, hamiltonians })
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn noises(&self) -> usize {
        self.hamiltonians.len()
    }

    pub fn hamiltonians(&self) -> &[CMatrix] {
        &self.hamiltonians
    }

    /// `K = −½ Σ_l H_l²`.
    pub fn expectation_generator(&self) -> CMatrix {
        let mut k = CMatrix::zeros(self.dim_h, self.dim_h);
        for h in &self.hamiltonians {
            k += &(h * h).scale_real(-0.5);
        }
        k
    }
}

#[derive(Debug, Clone)]
pub struct BrownianCoefficients {
    pub parts: Vec<CoefficientMatrix>,
    pub composed: CoefficientMatrix,
}

/// `F_l = [[−½H_l², iH_l], [iH_l, 0]]` and their composition.
pub fn brownian_coefficients(ex: &BrownianExample) -> Result<BrownianCoefficients> {
    let n = ex.dim_h;
    let parts = ex
        .hamiltonians
        .iter()
        .map(|h| CoefficientMatrix::make_unitary_generator(&CMatrix::zeros(n, n), &h.scale(I), &CMatrix::identity(n)))
        .collect::<Result<Vec<_>>>()?;
    let composed = CoefficientMatrix::compose_many(&parts)?;
    Ok(BrownianCoefficients { parts, composed })
}

#[derive(Debug, Clone)]
pub struct MonteCarloEstimate {
    pub mean: CMatrix,
    /// Per-entry standard error of the complex mean, `√(E|X − X̄|² / N)`.
    pub standard_error: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
}

impl MonteCarloEstimate {
    /// Largest `|mean − target| / standard_error` over entries with nonzero error;
    /// entries with zero error must match exactly.
    pub fn max_z_score(&self, target: &CMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (a, b)) in self.mean.entries().iter().zip(target.entries()).enumerate() {
            let diff = (a - b).norm();
            let se = self.standard_error[i];
            let z = if se > 0.0 {
                diff / se
            } else if diff <= 1e-14 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        worst
    }

    pub fn max_standard_error(&self) -> f64 {
        self.standard_error.iter().copied().fold(0.0, f64::max)
    }
}

/// The exact mean of the discretized scheme: `(Π_l e^{−½δH_l²})^{n_steps}`.
pub fn discretized_mean(ex: &BrownianExample, t: f64, n_steps: usize) -> Result<CMatrix> {
    let delta = t / n_steps as f64;
    let mut step = CMatrix::identity(ex.dim_h);
    for h in &ex.hamiltonians {
        step = &step * &numkit::expm(&(h * h).scale_real(-0.5 * delta))?;
    }
    Ok(step.pow(n_steps as u64))
}

struct Spectral {
    values: Vec<f64>,
    vectors: CMatrix,
    vectors_adj: CMatrix,
}

#[derive(Clone)]
struct Moments {
    sum: Vec<Complex64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn zero(n: usize) -> Moments {
        Moments { sum: vec![ZERO; n], sum_sq: vec![0.0; n] }
    }

    fn merge(mut self, other: &Moments) -> Moments {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self
    }
}

fn pairwise_sum(mut items: Vec<Moments>) -> Moments {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        items = next;
    }
    items.pop().expect("at least one block")
}

/// `out = a · b` for `n × n` row-major buffers.
fn mul_into(a: &[Complex64], b: &[Complex64], out: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in 0..n {
            let mut z = ZERO;
            for k in 0..n {
                z += a[r * n + k] * b[k * n + c];
            }
            out[r * n + c] = z;
        }
    }
}

/// Monte-Carlo mean of the ordered step products `Π_steps Π_l e^{iH_l ΔB^l}`.
///
/// Path `p` draws its increments from a ChaCha8 stream `p` keyed by `seed`;
/// sums are reduced over fixed blocks by a pairwise tree, so the estimate does
/// not depend on the thread count.
pub fn mc_vacuum_expectation(ex: &BrownianExample, t: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::Argument("n_paths and n_steps must be at least 1".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Argument(format!("time must be finite and nonnegative, got {t}")));
    }
    let n = ex.dim_h;
    let spectra = ex
        .hamiltonians
        .iter()
        .map(|h| {
            let (values, vectors) = numkit::hermitian_eigen(h)?;
            let vectors_adj = vectors.adjoint();
            Ok(Spectral { values, vectors, vectors_adj })
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma = (t / n_steps as f64).sqrt();
    let blocks = n_paths.div_ceil(PATHS_PER_BLOCK);
    let run_block = |block: usize| -> Moments {
        let mut acc = Moments::zero(n * n);
        let mut x = vec![ZERO; n * n];
        let mut tmp = vec![ZERO; n * n];
        for path in block * PATHS_PER_BLOCK..((block + 1) * PATHS_PER_BLOCK).min(n_paths) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            x.iter_mut().for_each(|z| *z = ZERO);
            (0..n).for_each(|i| x[i * n + i] = ONE);
            for _ in 0..n_steps {
                for sp in &spectra {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let db = sigma * z;
                    // x ← x · V diag(e^{iλ ΔB}) V*
                    mul_into(&x, sp.vectors.entries(), &mut tmp, n);
                    for c in 0..n {
                        let phase = Complex64::from_polar(1.0, sp.values[c] * db);
                        for r in 0..n {
                            tmp[r * n + c] *= phase;
                        }
                    }
                    mul_into(&tmp, sp.vectors_adj.entries(), &mut x, n);
                }
            }
            for (i, z) in x.iter().enumerate() {
                acc.sum[i] += z;
                acc.sum_sq[i] += z.norm_sqr();
            }
        }
        acc
    };
    let partials: Vec<Moments> = (0..blocks).into_par_iter().map(run_block).collect();
    let total = pairwise_sum(partials);
    let count = n_paths as f64;
    let mean_entries: Vec<Complex64> = total.sum.iter().map(|s| s / count).collect();
    let standard_error = if n_paths > 1 {
        mean_entries
            .iter()
            .zip(&total.sum_sq)
            .map(|(m, s2)| ((s2 - count * m.norm_sqr()).max(0.0) / (count - 1.0) / count).sqrt())
            .collect()
    } else {
        vec![f64::INFINITY; n * n]
    };
    Ok(MonteCarloEstimate {
        mean: CMatrix::from_row_major(n, n, mean_entries)?,
        standard_error,
        n_paths,
        n_steps,
    })
}

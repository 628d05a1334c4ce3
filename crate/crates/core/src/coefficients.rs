//! Coefficient matrices of quantum stochastic differential equations.
//!
//! A coefficient matrix on `h ⊕ (h⊗k)` is stored through its four blocks
//!
//! ```text
//! F = [ K      M    ]
//!     [ L    W − I  ]
//! ```
//!
//! with `L` the block column `[L^j]`, `M` the block row `[M_k]` and `W` the
//! block matrix `[W^j_k]`. Noise coordinates are major: row `j·dim_h + i` of
//! `L` is row `i` of `L^j`.

use crate::error::{Error, Result};
use crate::numkit::{self, CMatrix, I};

pub const DEFAULT_TOL: f64 = 1e-10;

/// What has been established about a coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Both structure relations hold; the cocycle is unitary.
    Unitary,
    /// Both quadratic forms are negative semidefinite; the cocycle is contractive.
    Contraction,
    Unchecked,
}

impl Kind {
    fn meet(self, other: Kind) -> Kind {
        match (self, other) {
            (Kind::Unitary, Kind::Unitary) => Kind::Unitary,
            (Kind::Unchecked, _) | (_, Kind::Unchecked) => Kind::Unchecked,
            _ => Kind::Contraction,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Unitary => "unitary",
            Kind::Contraction => "contraction",
            Kind::Unchecked => "unchecked",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    dim_h: usize,
    dim_k: usize,
    k: CMatrix,
    l: CMatrix,
    m: CMatrix,
    w: CMatrix,
    kind: Kind,
}

/// Residual norms of the isometry and coisometry structure relations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureReport {
    pub isometry: f64,
    pub coisometry: f64,
    pub tol: f64,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.isometry < self.tol && self.coisometry < self.tol
    }
}

/// Largest eigenvalues of the two contractivity quadratic forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub isometry_max_eig: f64,
    pub coisometry_max_eig: f64,
    pub tol: f64,
}

impl ContractionReport {
    pub fn isometry_ok(&self) -> bool {
        self.isometry_max_eig <= self.tol
    }

    pub fn coisometry_ok(&self) -> bool {
        self.coisometry_max_eig <= self.tol
    }

    pub fn passed(&self) -> bool {
        self.isometry_ok() && self.coisometry_ok()
    }
}

fn expect_shape(name: &str, m: &CMatrix, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

impl CoefficientMatrix {
    /// Assembles a coefficient matrix from its blocks without checking any
    /// structure relation.
    pub fn from_blocks(dim_h: usize, dim_k: usize, k: CMatrix, l: CMatrix, m: CMatrix, w: CMatrix) -> Result<Self> {
        let n = dim_h * dim_k;
        expect_shape("K", &k, dim_h, dim_h)?;
        expect_shape("L", &l, n, dim_h)?;
        expect_shape("M", &m, dim_h, n)?;
        expect_shape("W", &w, n, n)?;
        for (name, b) in [("K", &k), ("L", &l), ("M", &m), ("W", &w)] {
            if !b.is_finite() {
                return Err(Error::Argument(format!("{name} has non-finite entries")));
            }
        }
        Ok(CoefficientMatrix { dim_h, dim_k, k, l, m, w, kind: Kind::Unchecked })
    }

    /// Generator of a unitary cocycle: `K = iH − ½L*L`, `M = −L*W`.
    pub fn make_unitary_generator(h: &CMatrix, l: &CMatrix, w: &CMatrix) -> Result<Self> {
        Self::unitary_generator_with_tol(h, l, w, 1e-12)
    }

    pub fn unitary_generator_with_tol(h: &CMatrix, l: &CMatrix, w: &CMatrix, tol: f64) -> Result<Self> {
        let (dim_h, dim_k) = Self::dims_from(h, l)?;
        let sa = numkit::selfadjoint_defect(h);
        if sa > tol {
            return Err(Error::Validation { what: "H is not selfadjoint".into(), residual: sa, tol });
        }
        expect_shape("W", w, dim_h * dim_k, dim_h * dim_k)?;
        let ud = numkit::unitary_defect(w).max(numkit::unitary_defect(&w.adjoint()));
        if ud > tol {
            return Err(Error::Validation { what: "W is not unitary".into(), residual: ud, tol });
        }
        let (k, m) = Self::k_and_m(h, l, w);
        let mut f = Self::from_blocks(dim_h, dim_k, k, l.clone(), m, w.clone())?;
        f.kind = Kind::Unitary;
        Ok(f)
    }

    /// Generator of a contraction cocycle: `K = iH − ½L*L − D` with `D ≥ 0`,
    /// `M = −L*W` and `W` a contraction. Both quadratic forms are then
    /// negative semidefinite.
    pub fn make_contraction_generator(h: &CMatrix, l: &CMatrix, w: &CMatrix, damping: &CMatrix) -> Result<Self> {
        let tol = 1e-12;
        let (dim_h, dim_k) = Self::dims_from(h, l)?;
        let sa = numkit::selfadjoint_defect(h);
        if sa > tol {
            return Err(Error::Validation { what: "H is not selfadjoint".into(), residual: sa, tol });
        }
        expect_shape("W", w, dim_h * dim_k, dim_h * dim_k)?;
        expect_shape("D", damping, dim_h, dim_h)?;
        let wn = numkit::opnorm(w);
        if wn > 1.0 + tol {
            return Err(Error::Validation { what: "W is not a contraction".into(), residual: wn - 1.0, tol });
        }
        let low = numkit::hermitian_eigenvalues(damping)?.first().copied().unwrap_or(0.0);
        let sd = numkit::selfadjoint_defect(damping);
        if sd > tol || low < -tol {
            return Err(Error::Validation { what: "D is not positive semidefinite".into(), residual: sd.max(-low), tol });
        }
        let (k, m) = Self::k_and_m(h, l, w);
        let k = &k - damping;
        let mut f = Self::from_blocks(dim_h, dim_k, k, l.clone(), m, w.clone())?;
        f.kind = Kind::Contraction;
        Ok(f)
    }

    fn dims_from(h: &CMatrix, l: &CMatrix) -> Result<(usize, usize)> {
        if !h.is_square() {
            return Err(Error::Dimension(format!("H is {}x{}, expected square", h.rows(), h.cols())));
        }
        let dim_h = h.rows();
        if l.cols() != dim_h || (dim_h > 0 && !l.rows().is_multiple_of(dim_h)) {
            return Err(Error::Dimension(format!(
                "L is {}x{}, expected (dim_k·{dim_h})x{dim_h}",
                l.rows(),
                l.cols()
            )));
        }
        let dim_k = l.rows().checked_div(dim_h).unwrap_or(0);
        Ok((dim_h, dim_k))
    }

    fn k_and_m(h: &CMatrix, l: &CMatrix, w: &CMatrix) -> (CMatrix, CMatrix) {
        let ld = l.adjoint();
        let k = &h.scale(I) - &(&ld * l).scale_real(0.5);
        let m = -&(&ld * w);
        (k, m)
    }

    /// The zero generator: `K = 0`, `L = 0`, `M = 0`, `W = I`.
    pub fn zero(dim_h: usize, dim_k: usize) -> Self {
        let n = dim_h * dim_k;
        CoefficientMatrix {
            dim_h,
            dim_k,
            k: CMatrix::zeros(dim_h, dim_h),
            l: CMatrix::zeros(n, dim_h),
            m: CMatrix::zeros(dim_h, n),
            w: CMatrix::identity(n),
            kind: Kind::Unitary,
        }
    }

    /// `K = iH`, no coupling to the noise.
    pub fn pure_hamiltonian(h: &CMatrix, dim_k: usize) -> Result<Self> {
        let dim_h = h.rows();
        Self::make_unitary_generator(h, &CMatrix::zeros(dim_h * dim_k, dim_h), &CMatrix::identity(dim_h * dim_k))
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn k(&self) -> &CMatrix {
        &self.k
    }

    pub fn l(&self) -> &CMatrix {
        &self.l
    }

    pub fn m(&self) -> &CMatrix {
        &self.m
    }

    pub fn w(&self) -> &CMatrix {
        &self.w
    }

    /// `L^j`, a `dim_h × dim_h` block.
    pub fn l_block(&self, j: usize) -> CMatrix {
        self.l.block(j * self.dim_h, 0, self.dim_h, self.dim_h)
    }

    /// `M_k`, a `dim_h × dim_h` block.
    pub fn m_block(&self, k: usize) -> CMatrix {
        self.m.block(0, k * self.dim_h, self.dim_h, self.dim_h)
    }

    /// `W^j_k`, a `dim_h × dim_h` block.
    pub fn w_block(&self, j: usize, k: usize) -> CMatrix {
        self.w.block(j * self.dim_h, k * self.dim_h, self.dim_h, self.dim_h)
    }

    /// Re-derives `kind` from the structure and contraction checks.
    pub fn classify(mut self, tol: f64) -> Self {
        self.kind = if self.check_structure(tol).passed() {
            Kind::Unitary
        } else if self.check_contraction(tol).passed() {
            Kind::Contraction
        } else {
            Kind::Unchecked
        };
        self
    }

    /// The full block matrix `[[K, M], [L, W − I]]` on `h ⊕ (h⊗k)`.
    pub fn full_matrix(&self) -> CMatrix {
        let n = self.dim_h * (1 + self.dim_k);
        let mut f = CMatrix::zeros(n, n);
        f.set_block(0, 0, &self.k);
        f.set_block(0, self.dim_h, &self.m);
        f.set_block(self.dim_h, 0, &self.l);
        let nk = self.dim_h * self.dim_k;
        f.set_block(self.dim_h, self.dim_h, &(&self.w - &CMatrix::identity(nk)));
        f
    }

    /// The two quadratic-form matrices `F* + F + F*ΔF` and `F* + F + FΔF*`,
    /// where `Δ` projects onto the noise coordinates.
    pub fn structure_forms(&self) -> (CMatrix, CMatrix) {
        let f = self.full_matrix();
        let fd = f.adjoint();
        let n = f.rows();
        let mut delta = CMatrix::identity(n);
        for i in 0..self.dim_h {
            delta[(i, i)] = numkit::ZERO;
        }
        let sym = &fd + &f;
        let a = &sym + &(&(&fd * &delta) * &f);
        let b = &sym + &(&(&f * &delta) * &fd);
        (a, b)
    }

    /// Operator-norm residuals of the isometry and coisometry relations.
    pub fn check_structure(&self, tol: f64) -> StructureReport {
        let (a, b) = self.structure_forms();
        StructureReport { isometry: numkit::opnorm(&a), coisometry: numkit::opnorm(&b), tol }
    }

    /// Largest eigenvalues of the contractivity forms.
    pub fn check_contraction(&self, tol: f64) -> ContractionReport {
        let (a, b) = self.structure_forms();
        let top = |m: &CMatrix| numkit::hermitian_eigenvalues(m).ok().and_then(|v| v.last().copied()).unwrap_or(0.0);
        ContractionReport { isometry_max_eig: top(&a), coisometry_max_eig: top(&b), tol }
    }

    /// Coefficient matrix of the Trotter product cocycle on `k1 ⊕ k2`:
    /// `K = K1 + K2`, `L = [L1; L2]`, `M = [M1, M2]`, `W = W1 ⊕ W2`.
    pub fn trotter_compose(&self, other: &CoefficientMatrix) -> Result<CoefficientMatrix> {
        Self::compose_many(&[self.clone(), other.clone()])
    }

    /// p-fold composition; noise coordinates are concatenated in list order.
    pub fn compose_many(parts: &[CoefficientMatrix]) -> Result<CoefficientMatrix> {
        let first = parts.first().ok_or_else(|| Error::Argument("cannot compose an empty list".into()))?;
        let dim_h = first.dim_h;
        if let Some(bad) = parts.iter().find(|p| p.dim_h != dim_h) {
            return Err(Error::Dimension(format!(
                "initial spaces differ: dim_h {} vs {}",
                dim_h, bad.dim_h
            )));
        }
        if parts.len() == 1 {
            return Ok(first.clone());
        }
        let dim_k = parts.iter().map(|p| p.dim_k).sum();
        let mut k = CMatrix::zeros(dim_h, dim_h);
        for p in parts {
            k += &p.k;
        }
        let l = CMatrix::vstack(&parts.iter().map(|p| &p.l).collect::<Vec<_>>())?;
        let m = CMatrix::hstack(&parts.iter().map(|p| &p.m).collect::<Vec<_>>())?;
        let n = dim_h * dim_k;
        let mut w = CMatrix::zeros(n, n);
        let mut offset = 0;
        for p in parts {
            w.set_block(offset, offset, &p.w);
            offset += p.w.rows();
        }
        let kind = parts.iter().map(|p| p.kind).reduce(Kind::meet).unwrap_or(Kind::Unchecked);
        Ok(CoefficientMatrix { dim_h, dim_k, k, l, m, w, kind })
    }

    /// Extends the noise space by `before` coordinates ahead of the existing
    /// ones and `after` behind them, on which the cocycle acts trivially.
    pub fn ampliate(&self, before: usize, after: usize) -> CoefficientMatrix {
        if before == 0 && after == 0 {
            return self.clone();
        }
        let dh = self.dim_h;
        let dim_k = before + self.dim_k + after;
        let n = dh * dim_k;
        let off = before * dh;
        let mut l = CMatrix::zeros(n, dh);
        l.set_block(off, 0, &self.l);
        let mut m = CMatrix::zeros(dh, n);
        m.set_block(0, off, &self.m);
        let mut w = CMatrix::identity(n);
        w.set_block(off, off, &self.w);
        CoefficientMatrix { dim_h: dh, dim_k, k: self.k.clone(), l, m, w, kind: self.kind }
    }

    /// Reorders noise coordinates: new coordinate `i` is old coordinate `perm[i]`.
    pub fn permute_noise(&self, perm: &[usize]) -> Result<CoefficientMatrix> {
        if perm.len() != self.dim_k {
            return Err(Error::Dimension(format!("permutation of length {} for dim_k {}", perm.len(), self.dim_k)));
        }
        let mut seen = vec![false; self.dim_k];
        for &p in perm {
            if p >= self.dim_k || seen[p] {
                return Err(Error::Argument("not a permutation".into()));
            }
            seen[p] = true;
        }
        let dh = self.dim_h;
        let n = dh * self.dim_k;
        let src = |i: usize| perm[i / dh] * dh + i % dh;
        let l = CMatrix::from_fn(n, dh, |r, c| self.l[(src(r), c)]);
        let m = CMatrix::from_fn(dh, n, |r, c| self.m[(r, src(c))]);
        let w = CMatrix::from_fn(n, n, |r, c| self.w[(src(r), src(c))]);
        Ok(CoefficientMatrix { l, m, w, ..self.clone() })
    }

    /// Same blocks, with `M` replaced. Used for negative controls.
    pub fn with_m(&self, m: CMatrix) -> Result<CoefficientMatrix> {
        Self::from_blocks(self.dim_h, self.dim_k, self.k.clone(), self.l.clone(), m, self.w.clone())
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::numkit::testing::*;
    use rand::Rng;

    pub fn random_unitary_generator(rng: &mut impl Rng, dim_h: usize, dim_k: usize) -> CoefficientMatrix {
        let h = random_hermitian(rng, dim_h);
        let l = random_matrix(rng, dim_h * dim_k, dim_h);
        let w = random_unitary(rng, dim_h * dim_k);
        CoefficientMatrix::make_unitary_generator(&h, &l, &w).unwrap()
    }

    pub fn random_contraction_generator(rng: &mut impl Rng, dim_h: usize, dim_k: usize) -> CoefficientMatrix {
        let h = random_hermitian(rng, dim_h);
        let l = random_matrix(rng, dim_h * dim_k, dim_h);
        let w = random_unitary(rng, dim_h * dim_k).scale_real(0.8);
        let d = random_matrix(rng, dim_h, dim_h);
        let d = (&d.adjoint() * &d).scale_real(0.3);
        CoefficientMatrix::make_contraction_generator(&h, &l, &w, &d).unwrap()
    }
}

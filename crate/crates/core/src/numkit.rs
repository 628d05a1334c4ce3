//! Dense complex linear algebra for the small operators used throughout the
//! crate: matrix exponential, operator norm, polar unitarization and the
//! block/tensor bookkeeping needed to assemble coefficient matrices.
//!
//! Storage is row-major `Complex64`. Singular value and Hermitian eigenvalue
//! computations are delegated to `nalgebra`; everything else is local.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds a matrix from row-major entries. Fails on a length mismatch or
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Argument("matrix entries must be finite".into()));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        Self::from_fn(r, c, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[Complex64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn scalar(z: Complex64) -> Self {
        CMatrix { rows: 1, cols: 1, data: vec![z] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, z: Complex64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * z).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &CMatrix) -> CMatrix {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; n * m];
        for i in 0..n {
            let row = &self.data[i * k..(i + 1) * k];
            let dst = &mut out[i * m..(i + 1) * m];
            for (p, a) in row.iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                let src = &other.data[p * m..(p + 1) * m];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        CMatrix { rows: n, cols: m, data: out }
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| self[(r / r2, c / c2)] * other[(r % r2, c % c2)])
    }

    /// Block-diagonal direct sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &CMatrix) -> CMatrix {
        let mut out = Self::zeros(self.rows + other.rows, self.cols + other.cols);
        out.set_block(0, 0, self);
        out.set_block(self.rows, self.cols, other);
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for r in 0..b.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(&b.data[r * b.cols..(r + 1) * b.cols]);
        }
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&CMatrix]) -> Result<CMatrix> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(Error::Dimension("vstack requires equal column counts".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Concatenates matrices with equal row counts horizontally.
    pub fn hstack(parts: &[&CMatrix]) -> Result<CMatrix> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(Error::Dimension("hstack requires equal row counts".into()));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            out.set_block(0, c0, p);
            c0 += p.cols;
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn one_norm(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest singular value.
    pub fn opnorm(&self) -> f64 {
        opnorm(self)
    }

    /// `‖self − other‖` in operator norm.
    pub fn dist(&self, other: &CMatrix) -> f64 {
        opnorm(&(self - other))
    }

    pub fn pow(&self, mut k: u64) -> CMatrix {
        assert!(self.is_square(), "pow requires a square matrix");
        let mut base = self.clone();
        let mut acc = CMatrix::identity(self.rows);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_unchecked(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul_unchecked(&base);
            }
        }
        acc
    }

    /// `D` with `I + D = (I + self)^k`, accumulated without forming `I + self`
    /// so that rounding stays relative to the offset.
    pub fn pow_offset(&self, mut k: u64) -> CMatrix {
        assert!(self.is_square(), "pow_offset requires a square matrix");
        let combine = |a: &CMatrix, b: &CMatrix| &(a + b) + &a.mul_unchecked(b);
        let mut base = self.clone();
        let mut acc = CMatrix::zeros(self.rows, self.rows);
        while k > 0 {
            if k & 1 == 1 {
                acc = combine(&acc, &base);
            }
            k >>= 1;
            if k > 0 {
                base = combine(&base, &base);
            }
        }
        acc
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        &(self * other) - &(other * self)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)])
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if !self.is_square() || self.rows != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot solve {}x{} system with {}x{} right-hand side",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.data.clone();
        let mut b = rhs.data.clone();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i * n + k].norm().total_cmp(&a[j * n + k].norm()))
                .unwrap_or(k);
            let pivot_norm = a[piv * n + k].norm();
            if pivot_norm <= f64::EPSILON * scale * n as f64 {
                return Err(Error::Rank { smallest: pivot_norm, largest: scale });
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                for c in 0..m {
                    b.swap(k * m + c, piv * m + c);
                }
            }
            let inv = ONE / a[k * n + k];
            for i in k + 1..n {
                let factor = a[i * n + k] * inv;
                if factor == ZERO {
                    continue;
                }
                a[i * n + k] = ZERO;
                for c in k + 1..n {
                    let akc = a[k * n + c];
                    a[i * n + c] -= factor * akc;
                }
                for c in 0..m {
                    let bkc = b[k * m + c];
                    b[i * m + c] -= factor * bkc;
                }
            }
        }
        for k in (0..n).rev() {
            let inv = ONE / a[k * n + k];
            for c in 0..m {
                let mut s = b[k * m + c];
                for j in k + 1..n {
                    s -= a[k * n + j] * b[j * m + c];
                }
                b[k * m + c] = s * inv;
            }
        }
        Ok(CMatrix { rows: n, cols: m, data: b })
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&CMatrix::identity(self.rows))
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in mul");
        self.mul_unchecked(rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

// Padé numerator coefficients b_k, degrees 3,5,7,9,13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm thresholds below which the degree-m approximant meets unit roundoff.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("expm of a non-square {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    if n == 1 {
        return Ok(CMatrix::scalar(a.data[0].exp()));
    }
    let norm = a.one_norm();
    if norm == 0.0 {
        return Ok(CMatrix::identity(n));
    }
    let id = CMatrix::identity(n);
    let a2 = a * a;
    for (theta, coeffs) in [(THETA3, &PADE3[..]), (THETA5, &PADE5[..]), (THETA7, &PADE7[..]), (THETA9, &PADE9[..])] {
        if norm <= theta {
            return pade_low(a, &a2, &id, coeffs);
        }
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let (scaled, a2) = if s > 0 {
        let scaled = a.scale_real(0.5f64.powi(s));
        let a2 = &scaled * &scaled;
        (scaled, a2)
    } else {
        (a.clone(), a2)
    };
    let mut r = pade13(&scaled, &a2, &id)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &CMatrix, a2: &CMatrix, id: &CMatrix, b: &[f64]) -> Result<CMatrix> {
    // U = A Σ b_{2k+1} A^{2k},  V = Σ b_{2k} A^{2k}
    let mut u = id.scale_real(b[1]);
    let mut v = id.scale_real(b[0]);
    let mut power = id.clone();
    let mut k = 1;
    while 2 * k < b.len() {
        power = &power * a2;
        u += &power.scale_real(b[2 * k + 1]);
        v += &power.scale_real(b[2 * k]);
        k += 1;
    }
    let u = a * &u;
    (&v - &u).solve(&(&v + &u))
}

fn pade13(a: &CMatrix, a2: &CMatrix, id: &CMatrix) -> Result<CMatrix> {
    let b = &PADE13;
    let a4 = a2 * a2;
    let a6 = &a4 * a2;
    let inner_u = &(&a6.scale_real(b[13]) + &a4.scale_real(b[11])) + &a2.scale_real(b[9]);
    let mut u = &a6 * &inner_u;
    u += &a6.scale_real(b[7]);
    u += &a4.scale_real(b[5]);
    u += &a2.scale_real(b[3]);
    u += &id.scale_real(b[1]);
    let u = a * &u;
    let inner_v = &(&a6.scale_real(b[12]) + &a4.scale_real(b[10])) + &a2.scale_real(b[8]);
    let mut v = &a6 * &inner_v;
    v += &a6.scale_real(b[6]);
    v += &a4.scale_real(b[4]);
    v += &a2.scale_real(b[2]);
    v += &id.scale_real(b[0]);
    (&v - &u).solve(&(&v + &u))
}

/// Largest singular value.
pub fn opnorm(a: &CMatrix) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    if a.rows == 1 || a.cols == 1 {
        return a.frobenius_norm();
    }
    a.to_nalgebra().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Unitary factor of the polar decomposition, the nearest unitary in
/// Frobenius norm.
pub fn polar_unitary(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("polar decomposition of a non-square {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    if n == 0 {
        return Ok(a.clone());
    }
    let svd = a.to_nalgebra().svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if largest == 0.0 || smallest <= n as f64 * f64::EPSILON * largest {
        return Err(Error::Rank { smallest, largest });
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Rank { smallest, largest }),
    };
    let q = u * v_t;
    let mut out = CMatrix::from_fn(n, n, |r, c| q[(r, c)]);
    // One Newton step X ← ½(X + X^{-*}) polishes orthogonality to roundoff.
    if let Ok(inv) = out.inverse() {
        out = (&out + &inv.adjoint()).scale_real(0.5);
    }
    Ok(out)
}

/// Eigenvalues of the Hermitian part of a square matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    if a.rows == 0 {
        return Ok(Vec::new());
    }
    let h = (a + &a.adjoint()).scale_real(0.5);
    let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigen-decomposition `H = V diag(λ) V*` of a Hermitian matrix.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if !a.is_square() {
        return Err(Error::Dimension("eigen-decomposition of a non-square matrix".into()));
    }
    let h = (a + &a.adjoint()).scale_real(0.5);
    let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
    let vals = eig.eigenvalues.iter().copied().collect();
    let v = CMatrix::from_fn(a.rows, a.rows, |r, c| eig.eigenvectors[(r, c)]);
    Ok((vals, v))
}

/// `e^A − I`; summed directly for `‖A‖₁ ≤ ½` to avoid cancellation.
pub fn expm1(a: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("expm1 of a {}x{} matrix", a.rows, a.cols)));
    }
    if a.one_norm() > 0.5 {
        return Ok(&expm(a)? - &CMatrix::identity(a.rows));
    }
    let mut term = a.clone();
    let mut sum = a.clone();
    for k in 2..40 {
        term = term.mul_unchecked(a).scale_real(1.0 / k as f64);
        sum += &term;
        if term.one_norm() <= f64::EPSILON * 1e-3 * sum.one_norm() {
            break;
        }
    }
    Ok(sum)
}

/// `‖A* − A‖`, zero exactly for selfadjoint input.
pub fn selfadjoint_defect(a: &CMatrix) -> f64 {
    opnorm(&(a - &a.adjoint()))
}

/// `‖A*A − I‖`.
pub fn unitary_defect(a: &CMatrix) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    opnorm(&(&(&a.adjoint() * a) - &CMatrix::identity(a.rows)))
}

pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expm1_and_offset_powers() {
        let mut r = rng(77);
        let a = random_matrix(&mut r, 3, 3).scale_real(1e-3);
        let taylor = &taylor_expm(&a, 20) - &CMatrix::identity(3);
        assert!(expm1(&a).unwrap().dist(&taylor) < 1e-15);
        let big = random_matrix(&mut r, 3, 3);
        assert_eq!(expm1(&big).unwrap(), &expm(&big).unwrap() - &CMatrix::identity(3));
        let want = &(&CMatrix::identity(3) + &a).pow(37) - &CMatrix::identity(3);
        assert!(a.pow_offset(37).dist(&want) < 1e-14);
        assert_eq!(a.pow_offset(0), CMatrix::zeros(3, 3));
        assert!(expm1(&random_matrix(&mut r, 2, 3)).is_err());
    }

    #[test]
    fn expm_of_zero_is_identity() {
        assert_eq!(expm(&CMatrix::zeros(2, 2)).unwrap(), CMatrix::identity(2));
    }

    #[test]
    fn expm_of_nilpotent() {
        let a = CMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let e = expm(&a).unwrap();
        let want = CMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(e.dist(&want) < 1e-15, "{e:?}");
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(expm(&CMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn expm_inverse_pairs() {
        let mut r = rng(11);
        for n in 2..7 {
            for _ in 0..10 {
                let a = random_matrix(&mut r, n, n);
                let a = a.scale_real(r.random_range(0.01..1.0) / a.opnorm());
                let prod = &expm(&a).unwrap() * &expm(&a.scale_real(-1.0)).unwrap();
                assert!(prod.dist(&CMatrix::identity(n)) < 1e-12);
            }
        }
    }

    #[test]
    fn expm_matches_taylor_for_every_pade_degree() {
        let mut r = rng(5);
        let base = random_matrix(&mut r, 4, 4);
        for target in [1e-3, 0.2, 0.8, 1.8, 4.0, 9.0] {
            let a = base.scale_real(target / base.one_norm());
            let want = taylor_expm(&a, 120);
            let got = expm(&a).unwrap();
            assert!(got.dist(&want) <= 1e-13 * want.opnorm(), "norm {target}: {}", got.dist(&want));
        }
    }

    #[test]
    fn expm_of_skew_hermitian_is_unitary() {
        let mut r = rng(3);
        let h = random_hermitian(&mut r, 5).scale_real(7.0);
        assert!(unitary_defect(&expm(&h.scale(I)).unwrap()) < 1e-12);
    }

    #[test]
    fn solve_round_trip() {
        let mut r = rng(8);
        let a = random_matrix(&mut r, 6, 6);
        let b = random_matrix(&mut r, 6, 2);
        let x = a.solve(&b).unwrap();
        assert!((&a * &x).dist(&b) < 1e-12);
        assert!(matches!(CMatrix::zeros(3, 3).solve(&CMatrix::identity(3)), Err(Error::Rank { .. })));
    }

    #[test]
    fn opnorm_examples() {
        assert!((opnorm(&CMatrix::identity(4)) - 1.0).abs() < 1e-14);
        let d = CMatrix::diag(&[Complex64::new(3.0, 0.0), Complex64::new(-1.0, 0.0)]);
        assert!((opnorm(&d) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn opnorm_agrees_with_power_iteration() {
        let mut r = rng(21);
        for n in [2, 3, 5, 8] {
            let a = random_matrix(&mut r, n, n + 1);
            let want = power_iteration_norm(&a, 2000);
            assert!((opnorm(&a) - want).abs() <= 1e-8 * want, "n={n}");
        }
    }

    #[test]
    fn polar_fixed_points() {
        let mut r = rng(2);
        let u = random_unitary(&mut r, 4);
        assert!(polar_unitary(&u).unwrap().dist(&u) < 1e-13);
        let two = CMatrix::identity(3).scale_real(2.0);
        assert!(polar_unitary(&two).unwrap().dist(&CMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn polar_rejects_singular() {
        let a = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(polar_unitary(&a), Err(Error::Rank { .. })));
    }

    #[test]
    fn block_helpers() {
        let a = CMatrix::identity(2);
        let b = CMatrix::scalar(Complex64::new(5.0, 0.0));
        let s = a.direct_sum(&b);
        assert_eq!(s.rows(), 3);
        assert_eq!(s[(2, 2)], Complex64::new(5.0, 0.0));
        assert_eq!(s[(0, 2)], ZERO);
        assert_eq!(s.block(0, 0, 2, 2), a);
        let k = a.kron(&CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_eq!(k[(0, 1)], ONE);
        assert_eq!(k[(2, 3)], ONE);
        assert_eq!(k[(0, 3)], ZERO);
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
            .prop_map(move |v| CMatrix::from_fn(n, n, |r, c| Complex64::new(v[r * n + c].0, v[r * n + c].1)))
    }

    proptest! {
        #[test]
        fn expm_respects_direct_sums(a in arb_matrix(3), b in arb_matrix(2)) {
            let whole = expm(&a.direct_sum(&b)).unwrap();
            let parts = expm(&a).unwrap().direct_sum(&expm(&b).unwrap());
            prop_assert!(whole.dist(&parts) < 1e-12);
        }

        #[test]
        fn expm_one_parameter_group(a in arb_matrix(4), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let lhs = &expm(&a.scale_real(s)).unwrap() * &expm(&a.scale_real(t)).unwrap();
            let rhs = expm(&a.scale_real(s + t)).unwrap();
            prop_assert!(lhs.dist(&rhs) < 1e-10);
        }

        #[test]
        fn polar_output_is_unitary(a in arb_matrix(4)) {
            prop_assume!(a.to_nalgebra().singular_values().iter().copied().fold(f64::INFINITY, f64::min) > 1e-3);
            let u = polar_unitary(&a).unwrap();
            prop_assert!(unitary_defect(&u) < 1e-13);
        }
    }
}

//! Associated semigroups of a cocycle and the semigroup decomposition of its
//! matrix elements against exponential vectors of step functions.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coefficients::{CoefficientMatrix, Kind};
use crate::error::{Error, Result};
use crate::numkit::{expm, inner, norm_sqr, CMatrix};
use crate::signals::{merge_breakpoints_in, Dyadic, StepFunction};

/// `G_{c,d} = K + L^c + M_d + W^c_d − ½(‖c‖² + ‖d‖²) I`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociatedGenerator {
    pub c: Vec<Complex64>,
    pub d: Vec<Complex64>,
    pub g: CMatrix,
    pub kind: Kind,
}

pub fn generator_cd(f: &CoefficientMatrix, c: &[Complex64], d: &[Complex64]) -> Result<AssociatedGenerator> {
    let dim_k = f.dim_k();
    if c.len() != dim_k || d.len() != dim_k {
        return Err(Error::Dimension(format!(
            "test vectors of length {} and {} for dim_k {dim_k}",
            c.len(),
            d.len()
        )));
    }
    let dh = f.dim_h();
    let mut g = f.k().clone();
    for j in 0..dim_k {
        if c[j] != Complex64::ZERO {
            g += &f.l_block(j).scale(c[j].conj());
        }
        if d[j] != Complex64::ZERO {
            g += &f.m_block(j).scale(d[j]);
        }
    }
    for j in 0..dim_k {
        for k in 0..dim_k {
            let coef = c[j].conj() * d[k];
            if coef != Complex64::ZERO {
                g += &f.w_block(j, k).scale(coef);
            }
        }
    }
    let shift = 0.5 * (norm_sqr(c) + norm_sqr(d));
    for i in 0..dh {
        g[(i, i)] -= shift;
    }
    Ok(AssociatedGenerator { c: c.to_vec(), d: d.to_vec(), g, kind: f.kind() })
}

impl AssociatedGenerator {
    /// `P^{c,d}_t = e^{tG_{c,d}}`.
    pub fn evolve(&self, t: f64) -> Result<CMatrix> {
        evolve(self, t)
    }
}

pub fn evolve(gen: &AssociatedGenerator, t: f64) -> Result<CMatrix> {
    if !(t >= 0.0) {
        return Err(Error::Argument(format!("semigroup evaluated at negative time {t}")));
    }
    if t == 0.0 {
        return Ok(CMatrix::identity(gen.g.rows()));
    }
    expm(&gen.g.scale_real(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Against `φ(f) = e^{−‖f‖²/2} ε(f)`.
    #[default]
    Normalized,
    /// Against `ε(f)`.
    Unnormalized,
}

fn check_dims(f: &CoefficientMatrix, fs: &StepFunction, gs: &StepFunction) -> Result<()> {
    if fs.dim_k() != f.dim_k() || gs.dim_k() != f.dim_k() {
        return Err(Error::Dimension(format!(
            "step functions over dim_k {} and {} for a cocycle with dim_k {}",
            fs.dim_k(),
            gs.dim_k(),
            f.dim_k()
        )));
    }
    Ok(())
}

/// The intervals `[t_i, t_{i+1})` of `[s, t)` on which both step functions
/// are constant, with their left endpoints' values.
pub(crate) fn constant_runs(fs: &StepFunction, gs: &StepFunction, s: Dyadic, t: Dyadic) -> Vec<(Dyadic, Dyadic)> {
    let mut out = Vec::new();
    let mut lo = s;
    for cut in merge_breakpoints_in(fs, gs, s, t).into_iter().chain(std::iter::once(t)) {
        if cut > lo {
            out.push((lo, cut));
        }
        lo = cut;
    }
    out
}

/// `X` with `⟨u ⊗ φ(f_{[0,t[}), U_t v ⊗ φ(g_{[0,t[})⟩ = ⟨u, X v⟩`.
pub fn matrix_element(f: &CoefficientMatrix, fs: &StepFunction, gs: &StepFunction, t: Dyadic) -> Result<CMatrix> {
    matrix_element_on(f, fs, gs, Dyadic::ZERO, t, Normalization::Normalized)
}

/// Matrix element of the two-parameter evolution `U_{s,t}` against
/// exponential vectors of `f_{[s,t[}` and `g_{[s,t[}`: the ordered product of
/// associated semigroups over the constant runs of `(f,g)` in `[s,t)`.
pub fn matrix_element_on(
    f: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    s: Dyadic,
    t: Dyadic,
    normalization: Normalization,
) -> Result<CMatrix> {
    check_dims(f, fs, gs)?;
    if s.is_negative() || t < s {
        return Err(Error::Argument(format!("window [{s}, {t}] is not an interval of ℝ₊")));
    }
    let runs = constant_runs(fs, gs, s, t);
    let factor = |&(a, b): &(Dyadic, Dyadic)| -> Result<CMatrix> {
        let gen = generator_cd(f, fs.eval(a), gs.eval(a))?;
        evolve(&gen, (b - a).to_f64())
    };
    let factors: Vec<CMatrix> = if runs.len() > 8 {
        runs.par_iter().map(factor).collect::<Result<_>>()?
    } else {
        runs.iter().map(factor).collect::<Result<_>>()?
    };
    let mut x = CMatrix::identity(f.dim_h());
    for p in &factors {
        x = &x * p;
    }
    if normalization == Normalization::Unnormalized {
        let w = 0.5 * (fs.norm_sqr_on(s, t) + gs.norm_sqr_on(s, t));
        x = x.scale_real(w.exp());
    }
    Ok(x)
}

/// `⟨c, d⟩ − ½‖c‖² − ½‖d‖²`, the scalar generator of the trivial cocycle.
pub fn scalar_exponent(c: &[Complex64], d: &[Complex64]) -> Complex64 {
    inner(c, d) - Complex64::new(0.5 * (norm_sqr(c) + norm_sqr(d)), 0.0)
}

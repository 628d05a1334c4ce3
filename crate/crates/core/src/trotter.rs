//! Quantum stochastic Trotter products.
//!
//! Matrix elements of the interleaved product `U^{(1,2)}_n(t)` against
//! exponential vectors reduce to ordered products of `P¹ P²` factors over the
//! dyadic grid of level `n`; their limit is the matrix element of the cocycle
//! generated by the composed coefficient matrix.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::numkit::{expm, expm1, CMatrix};
use crate::semigroups::{constant_runs, evolve, generator_cd, matrix_element_on, Normalization};
use crate::signals::{Dyadic, StepFunction};

/// `(e^{hZ1} e^{hZ2})^{[t/h]}` together with its distance to `e^{t(Z1+Z2)}`.
#[derive(Debug, Clone)]
pub struct LieProduct {
    pub product: CMatrix,
    pub reference: CMatrix,
    pub steps: u64,
    pub error: f64,
}

pub fn lie_product(z1: &CMatrix, z2: &CMatrix, t: f64, h: f64) -> Result<LieProduct> {
    if !z1.is_square() || z1.rows() != z2.rows() || z1.cols() != z2.cols() {
        return Err(Error::Dimension(format!(
            "Lie product of {}x{} and {}x{} matrices",
            z1.rows(),
            z1.cols(),
            z2.rows(),
            z2.cols()
        )));
    }
    if !(h > 0.0) || !(t >= 0.0) {
        return Err(Error::Argument(format!("need h > 0 and t ≥ 0, got h={h}, t={t}")));
    }
    let steps = (t / h).floor() as u64;
    // e^{hZ1} e^{hZ2} − I = E1 + E2 + E1 E2
    let (e1, e2) = (expm1(&z1.scale_real(h))?, expm1(&z2.scale_real(h))?);
    let offset = &(&e1 + &e2) + &(&e1 * &e2);
    let product = &CMatrix::identity(z1.rows()) + &offset.pow_offset(steps);
    let reference = expm(&(z1 + z2).scale_real(t))?;
    let error = product.dist(&reference);
    Ok(LieProduct { product, reference, steps, error })
}

/// Noise split `k = k1 ⊕ k2` for a pair of cocycles.
fn check_pair(f1: &CoefficientMatrix, f2: &CoefficientMatrix, fs: &StepFunction, gs: &StepFunction) -> Result<()> {
    if f1.dim_h() != f2.dim_h() {
        return Err(Error::Dimension(format!("initial spaces differ: {} vs {}", f1.dim_h(), f2.dim_h())));
    }
    let k = f1.dim_k() + f2.dim_k();
    if fs.dim_k() != k || gs.dim_k() != k {
        return Err(Error::Dimension(format!(
            "step functions over dim_k {} and {}; the pair needs {k}",
            fs.dim_k(),
            gs.dim_k()
        )));
    }
    Ok(())
}

fn check_level(fs: &StepFunction, gs: &StepFunction, n: u32) -> Result<()> {
    let order = fs.order().max(gs.order());
    if n < order {
        return Err(Error::Precondition(format!(
            "level n = {n} is below the step-function order {order}; the dyadic product formula requires n >= order"
        )));
    }
    Ok(())
}

/// `P̃^{c,d}_τ = P¹^{c¹,d¹}_τ P²^{c²,d²}_τ`, evaluated at the run starting at `a`.
fn interleaved_factor(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    a: Dyadic,
    duration: f64,
) -> Result<CMatrix> {
    let k1 = f1.dim_k();
    if duration == 0.0 {
        return Ok(CMatrix::identity(f1.dim_h()));
    }
    let (c, d) = (fs.eval(a), gs.eval(a));
    let p1 = evolve(&generator_cd(f1, &c[..k1], &d[..k1])?, duration)?;
    let p2 = evolve(&generator_cd(f2, &c[k1..], &d[k1..])?, duration)?;
    Ok(&p1 * &p2)
}

/// Matrix element of `U^{(1,2)}_n(t)` against `φ(f_{[0,t[})`, `φ(g_{[0,t[})`.
pub fn trotter_element(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    t: Dyadic,
    n: u32,
) -> Result<CMatrix> {
    two_param_element(f1, f2, fs, gs, Dyadic::ZERO, t, n)
}

/// Matrix element of `U^{(1,2)}_n(s,t)`: a first factor over `[s, s^n_1)`,
/// full `2^{-n}` factors up to `t^n_0`, and a final factor over `[t^n_0, t)`.
pub fn two_param_element(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    s: Dyadic,
    t: Dyadic,
    n: u32,
) -> Result<CMatrix> {
    check_pair(f1, f2, fs, gs)?;
    check_level(fs, gs, n)?;
    if s.is_negative() || t < s {
        return Err(Error::Argument(format!("need 0 ≤ s ≤ t, got s={s}, t={t}")));
    }
    let step = Dyadic::grid_point(1, n);
    let s1 = s.floor_to(n) + step;
    let t0 = t.floor_to(n);
    if s1 > t0 {
        // s and t share a grid cell
        return interleaved_factor(f1, f2, fs, gs, s, (t - s).to_f64());
    }
    let h = step.to_f64();
    let mut x = interleaved_factor(f1, f2, fs, gs, s, (s1 - s).to_f64())?;
    for (a, b) in constant_runs(fs, gs, s1, t0) {
        let count = (b - a).floor_count(n) as u64;
        let block = interleaved_factor(f1, f2, fs, gs, a, h)?;
        x = &x * &block.pow(count);
    }
    let last = interleaved_factor(f1, f2, fs, gs, t0, (t - t0).to_f64())?;
    Ok(&x * &last)
}

/// Matrix element of the limit cocycle, generated by the composed coefficients.
pub fn limit_element(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    t: Dyadic,
) -> Result<CMatrix> {
    limit_element_on(f1, f2, fs, gs, Dyadic::ZERO, t)
}

pub fn limit_element_on(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    s: Dyadic,
    t: Dyadic,
) -> Result<CMatrix> {
    check_pair(f1, f2, fs, gs)?;
    let composed = f1.trotter_compose(f2)?;
    matrix_element_on(&composed, fs, gs, s, t, Normalization::Normalized)
}

/// `‖G¹_{c¹,d¹} + G²_{c²,d²} − G_{c,d}‖` for the composed coefficient matrix.
pub fn additivity_check(f1: &CoefficientMatrix, f2: &CoefficientMatrix, c: &[Complex64], d: &[Complex64]) -> Result<f64> {
    let composed = f1.trotter_compose(f2)?;
    additivity_residual(f1, f2, &composed, c, d)
}

/// Same as [`additivity_check`] against an explicitly supplied composition;
/// used for negative controls.
pub fn additivity_residual(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    composed: &CoefficientMatrix,
    c: &[Complex64],
    d: &[Complex64],
) -> Result<f64> {
    let k1 = f1.dim_k();
    if c.len() != k1 + f2.dim_k() || d.len() != c.len() {
        return Err(Error::Dimension(format!(
            "test vectors of length {} and {}; the pair needs {}",
            c.len(),
            d.len(),
            k1 + f2.dim_k()
        )));
    }
    let g1 = generator_cd(f1, &c[..k1], &d[..k1])?;
    let g2 = generator_cd(f2, &c[k1..], &d[k1..])?;
    let g = generator_cd(composed, c, d)?;
    Ok((&(&g1.g + &g2.g) - &g.g).opnorm())
}

/// Distances between Trotter and limit matrix elements over a range of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<u32>,
    pub errors: Vec<f64>,
    pub t: Dyadic,
    pub description: String,
}

impl ConvergenceReport {
    /// `error(n) / error(n−1)`, absent for the first level.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        std::iter::once(None).chain(self.errors.windows(2).map(|w| Some(w[1] / w[0]))).collect()
    }

    /// Least-squares slope of `−log₂ error` against the level.
    pub fn estimated_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .zip(&self.errors)
            .filter(|(_, e)| **e > 0.0)
            .map(|(n, e)| (*n as f64, -e.log2()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,error,ratio\n");
        for ((n, e), r) in self.levels.iter().zip(&self.errors).zip(self.ratios()) {
            let r = r.map(|r| format!("{r:.17e}")).unwrap_or_default();
            let _ = writeln!(out, "{n},{e:.17e},{r}");
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "t": self.t.to_string(),
            "description": self.description,
            "levels": self.levels,
            "errors": self.errors,
            "ratios": self.ratios(),
            "estimated_rate": self.estimated_rate(),
        })
    }
}

/// `‖trotter_element(n) − limit_element‖` for `n ∈ [n_min, n_max]`.
pub fn convergence_sweep(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    t: Dyadic,
    n_min: u32,
    n_max: u32,
) -> Result<ConvergenceReport> {
    if n_max < n_min {
        return Err(Error::Argument(format!("empty level range {n_min}..={n_max}")));
    }
    check_level(fs, gs, n_min)?;
    let limit = limit_element(f1, f2, fs, gs, t)?;
    let levels: Vec<u32> = (n_min..=n_max).collect();
    let errors = levels
        .par_iter()
        .map(|&n| trotter_element(f1, f2, fs, gs, t, n).map(|x| x.dist(&limit)))
        .collect::<Result<Vec<f64>>>()?;
    let description = format!(
        "dim_h={} k1={} k2={} order(f)={} order(g)={} t={}",
        f1.dim_h(),
        f1.dim_k(),
        f2.dim_k(),
        fs.order(),
        gs.order(),
        t
    );
    Ok(ConvergenceReport { levels, errors, t, description })
}

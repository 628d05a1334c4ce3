//! Truncated "toy" Fock space: a repeated-interaction discretization of the
//! cocycle, independent of the semigroup decomposition.
//!
//! `[0, T)` is split into `m` slots of width `δ = T/m`, each carrying the
//! one-particle space `ℂ ⊕ k` (index 0 is the vacuum). The local step
//!
//! ```text
//! S = [ I + δK   √δ M ]
//!     [  √δ L     W   ]
//! ```
//!
//! acts on `h ⊗ (ℂ ⊕ k)`, optionally replaced by its polar unitary. An
//! evolution is the ordered product `S_1 S_2 ⋯ S_k`, with `S_j` acting on
//! slot `j` and leftmost factors earliest.
//!
//! Operators are kept matrix-free as ordered segments of slot-local passes.
//! Matrix elements against product states are exact contractions: for a
//! segment with `P` passes each slot contributes
//! `E_j = Σ_y A¹[a_j,y₁] ⊗ A²[y₁,y₂] ⊗ ⋯ ⊗ Aᴾ[y_{P−1},b_j]` on `h^{⊗P}`, and the
//! segment element is the multiplication map applied to `Π_j E_j`.

use num_complex::Complex64;

use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::numkit::{self, inner, norm_sqr, polar_unitary, CMatrix, ONE, ZERO};
use crate::semigroups::{evolve, generator_cd, matrix_element};
use crate::signals::{exp_inner, Dyadic, ExpVectorDesc, StepFunction};

pub const DEFAULT_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyFockConfig {
    horizon: Dyadic,
    slots: usize,
    dim_h: usize,
    dim_k: usize,
    pub unitarize: bool,
    budget: usize,
}

impl ToyFockConfig {
    pub fn new(horizon: Dyadic, slots: usize, dim_h: usize, dim_k: usize) -> Result<ToyFockConfig> {
        Self::with_budget(horizon, slots, dim_h, dim_k, DEFAULT_BUDGET)
    }

    /// The matrix-free footprint `m · (dim_h (1 + dim_k))²` must fit the budget.
    pub fn with_budget(horizon: Dyadic, slots: usize, dim_h: usize, dim_k: usize, budget: usize) -> Result<ToyFockConfig> {
        if horizon <= Dyadic::ZERO {
            return Err(Error::Argument(format!("toy Fock horizon must be positive, got {horizon}")));
        }
        if slots == 0 || !slots.is_power_of_two() {
            return Err(Error::Argument(format!("slot count must be a power of two, got {slots}")));
        }
        if slots.trailing_zeros() + horizon.level() > crate::signals::MAX_LEVEL {
            return Err(Error::Argument(format!("slot width {horizon}/{slots} is finer than supported")));
        }
        let local = (dim_h * (1 + dim_k)) as f64;
        let needed = slots as f64 * local * local;
        if needed > budget as f64 {
            return Err(Error::Budget { needed, budget });
        }
        Ok(ToyFockConfig { horizon, slots, dim_h, dim_k, unitarize: true, budget })
    }

    pub fn without_unitarization(mut self) -> ToyFockConfig {
        self.unitarize = false;
        self
    }

    pub fn horizon(&self) -> Dyadic {
        self.horizon
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// `1 + dim_k`.
    pub fn slot_dim(&self) -> usize {
        1 + self.dim_k
    }

    /// `δ = T/m`, exact.
    pub fn slot_width(&self) -> Dyadic {
        Dyadic::new(self.horizon.numerator(), self.horizon.level() + self.slots.trailing_zeros())
            .expect("level checked at construction")
    }

    pub fn delta(&self) -> f64 {
        self.slot_width().to_f64()
    }

    /// Start time of slot `j`.
    pub fn slot_start(&self, j: usize) -> Dyadic {
        let w = self.slot_width();
        Dyadic::new(w.numerator() * j as i64, w.level()).expect("slot start within range")
    }

    /// The slot index of a slot boundary `t ∈ [0, T]`.
    pub fn slot_of(&self, t: Dyadic) -> Result<usize> {
        if t.is_negative() || t > self.horizon {
            return Err(Error::Granularity(format!("time {t} lies outside [0, {}]", self.horizon)));
        }
        exact_quotient(t, self.slot_width())
            .map(|q| q as usize)
            .ok_or_else(|| Error::Granularity(format!("time {t} is not a multiple of the slot width {}", self.slot_width())))
    }

    /// `dim_h (1 + dim_k)^m`, or `None` on overflow.
    pub fn dense_dimension(&self) -> Option<usize> {
        let mut n = self.dim_h;
        for _ in 0..self.slots {
            n = n.checked_mul(self.slot_dim())?;
        }
        Some(n)
    }

    fn require_dense(&self) -> Result<usize> {
        match self.dense_dimension() {
            Some(n) if n <= self.budget => Ok(n),
            other => Err(Error::Budget {
                needed: other.map_or(f64::INFINITY, |n| n as f64),
                budget: self.budget,
            }),
        }
    }
}

/// `a / b` when it is a nonnegative integer.
fn exact_quotient(a: Dyadic, b: Dyadic) -> Option<i64> {
    if b <= Dyadic::ZERO || a.is_negative() {
        return None;
    }
    let n = a.level().max(b.level());
    let an = a.floor_count(n);
    let bn = b.floor_count(n);
    (an % bn == 0).then_some(an / bn)
}

/// A product vector `scale · ⊗_j slots[j]` on the slot chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    pub slots: Vec<Vec<Complex64>>,
    pub scale: f64,
}

impl ProductState {
    pub fn vacuum(cfg: &ToyFockConfig) -> ProductState {
        let mut e0 = vec![ZERO; cfg.slot_dim()];
        e0[0] = ONE;
        ProductState { slots: vec![e0; cfg.slots], scale: 1.0 }
    }

    pub fn inner(&self, other: &ProductState) -> Complex64 {
        let mut z = Complex64::new(self.scale * other.scale, 0.0);
        for (a, b) in self.slots.iter().zip(&other.slots) {
            z *= inner(a, b);
        }
        z
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }

    /// Dense amplitudes of `u ⊗ self`.
    pub fn to_dense(&self, u: &[Complex64], cfg: &ToyFockConfig) -> Result<DenseState> {
        let total = cfg.require_dense()?;
        let dh = cfg.dim_h;
        let chain = total / dh;
        let mut amps = vec![ZERO; total];
        let d = cfg.slot_dim();
        for idx in 0..chain {
            let mut z = Complex64::new(self.scale, 0.0);
            let mut rest = idx;
            for j in (0..cfg.slots).rev() {
                z *= self.slots[j][rest % d];
                rest /= d;
            }
            for (i, ui) in u.iter().enumerate() {
                amps[i * chain + idx] = ui * z;
            }
        }
        Ok(DenseState { dim_h: dh, slot_dim: d, slots: cfg.slots, amps })
    }
}

/// `embed(f)`: slot factors `(1, √δ f(s_j))`, scaled by
/// `Π_j (1 + δ‖f(s_j)‖²)^{−1/2}` when normalized.
pub fn embed_exponential(f: &StepFunction, cfg: &ToyFockConfig, normalized: bool) -> Result<ProductState> {
    if f.dim_k() != cfg.dim_k {
        return Err(Error::Dimension(format!("step function over dim_k {} for a toy space with dim_k {}", f.dim_k(), cfg.dim_k)));
    }
    for b in f.breakpoints().iter().filter(|b| **b < cfg.horizon) {
        cfg.slot_of(*b)
            .map_err(|_| Error::Granularity(format!("breakpoint {b} is not a slot boundary of width {}", cfg.slot_width())))?;
    }
    let delta = cfg.delta();
    let root = delta.sqrt();
    let mut scale = 1.0;
    let slots = (0..cfg.slots)
        .map(|j| {
            let v = f.eval(cfg.slot_start(j));
            if normalized {
                scale /= (1.0 + delta * norm_sqr(v)).sqrt();
            }
            std::iter::once(ONE).chain(v.iter().map(|z| z * root)).collect()
        })
        .collect();
    Ok(ProductState { slots, scale })
}

/// `[[I + δK, √δM], [√δL, W]]`, or its polar unitary factor.
pub fn local_step(f: &CoefficientMatrix, delta: f64, unitarize: bool) -> Result<CMatrix> {
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("slot width must be positive, got {delta}")));
    }
    let dh = f.dim_h();
    let n = dh * (1 + f.dim_k());
    let root = delta.sqrt();
    let mut s = CMatrix::zeros(n, n);
    s.set_block(0, 0, &(&CMatrix::identity(dh) + &f.k().scale_real(delta)));
    s.set_block(0, dh, &f.m().scale_real(root));
    s.set_block(dh, 0, &f.l().scale_real(root));
    s.set_block(dh, dh, f.w());
    if unitarize {
        polar_unitary(&s)
    } else {
        Ok(s)
    }
}

/// Slots `lo..hi`, each acted on by every pass in order: the segment
/// operator is `Pass_0 Pass_1 ⋯`, and a pass is `S_lo S_{lo+1} ⋯ S_{hi−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub lo: usize,
    pub hi: usize,
    pub passes: Vec<CMatrix>,
}

/// An operator on `h ⊗ (ℂ ⊕ k)^{⊗m}` given as an ordered product of segments.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyOperator {
    dim_h: usize,
    slot_dim: usize,
    slots: usize,
    segments: Vec<Segment>,
}

impl ToyOperator {
    pub fn identity(cfg: &ToyFockConfig) -> ToyOperator {
        ToyOperator { dim_h: cfg.dim_h, slot_dim: cfg.slot_dim(), slots: cfg.slots, segments: Vec::new() }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// The operator followed by `other` (i.e. `self · other`).
    pub fn then(&self, other: &ToyOperator) -> Result<ToyOperator> {
        if (self.dim_h, self.slot_dim, self.slots) != (other.dim_h, other.slot_dim, other.slots) {
            return Err(Error::Dimension("toy operators on different spaces".into()));
        }
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        Ok(ToyOperator { segments, ..self.clone() })
    }

    /// Slot translation by `by` slots: the discrete time shift.
    pub fn shifted(&self, by: usize) -> Result<ToyOperator> {
        let mut segments = self.segments.clone();
        for s in &mut segments {
            s.lo += by;
            s.hi += by;
            if s.hi > self.slots {
                return Err(Error::Granularity(format!("shift by {by} slots leaves the toy horizon")));
            }
        }
        Ok(ToyOperator { segments, ..self.clone() })
    }

    /// Largest `‖S*S − I‖` over the local factors.
    pub fn local_unitarity_defect(&self) -> f64 {
        self.segments.iter().flat_map(|s| &s.passes).map(numkit::unitary_defect).fold(0.0, f64::max)
    }

    /// Whether the slot ranges of distinct segments are disjoint.
    fn segments_disjoint(&self) -> bool {
        let mut ranges: Vec<(usize, usize)> = self.segments.iter().filter(|s| s.lo < s.hi).map(|s| (s.lo, s.hi)).collect();
        ranges.sort();
        ranges.windows(2).all(|w| w[0].1 <= w[1].0)
    }

    /// `X` with `⟨u, X v⟩ = ⟨u ⊗ a, self (v ⊗ b)⟩`.
    pub fn matrix_element(&self, a: &ProductState, b: &ProductState) -> Result<CMatrix> {
        if a.slots.len() != self.slots || b.slots.len() != self.slots {
            return Err(Error::Dimension("product states on a different slot count".into()));
        }
        if !self.segments_disjoint() {
            return Err(Error::Argument("matrix-free elements need segments on disjoint slot ranges".into()));
        }
        let dh = self.dim_h;
        let mut covered = vec![false; self.slots];
        let mut x = CMatrix::identity(dh);
        for seg in &self.segments {
            x = &x * &self.segment_element(seg, a, b);
            covered[seg.lo..seg.hi].iter_mut().for_each(|c| *c = true);
        }
        let mut z = Complex64::new(a.scale * b.scale, 0.0);
        for j in (0..self.slots).filter(|j| !covered[*j]) {
            z *= inner(&a.slots[j], &b.slots[j]);
        }
        Ok(x.scale(z))
    }

    fn segment_element(&self, seg: &Segment, a: &ProductState, b: &ProductState) -> CMatrix {
        let dh = self.dim_h;
        let p = seg.passes.len();
        if p == 0 || seg.lo >= seg.hi {
            let mut z = ONE;
            for j in seg.lo..seg.hi {
                z *= inner(&a.slots[j], &b.slots[j]);
            }
            return CMatrix::identity(dh).scale(z);
        }
        let big = dh.pow(p as u32);
        let mut omega = CMatrix::identity(big);
        let mut cached: Option<(usize, CMatrix)> = None;
        for j in seg.lo..seg.hi {
            let reuse = cached
                .as_ref()
                .is_some_and(|(k, _)| a.slots[*k] == a.slots[j] && b.slots[*k] == b.slots[j]);
            if !reuse {
                cached = Some((j, slot_transfer(&seg.passes, &a.slots[j], &b.slots[j], dh, self.slot_dim)));
            }
            omega = &omega * &cached.as_ref().expect("transfer computed").1;
        }
        multiplication_map(&omega, dh, p)
    }

    /// Applies the operator to a dense state (small configurations only).
    pub fn apply_dense(&self, psi: &DenseState) -> Result<DenseState> {
        if (psi.dim_h, psi.slot_dim, psi.slots) != (self.dim_h, self.slot_dim, self.slots) {
            return Err(Error::Dimension("dense state on a different space".into()));
        }
        let mut out = psi.clone();
        for seg in self.segments.iter().rev() {
            for pass in seg.passes.iter().rev() {
                for j in (seg.lo..seg.hi).rev() {
                    out.apply_local(j, pass);
                }
            }
        }
        Ok(out)
    }
}

/// `E_j` for one slot: the tensor-product transfer on `h^{⊗P}`.
fn slot_transfer(passes: &[CMatrix], a: &[Complex64], b: &[Complex64], dh: usize, d: usize) -> CMatrix {
    let block = |s: &CMatrix, x: usize, y: usize| s.block(x * dh, y * dh, dh, dh);
    let p = passes.len();
    if p == 1 {
        let s = &passes[0];
        let mut e = CMatrix::zeros(dh, dh);
        for x in 0..d {
            for y in 0..d {
                let coef = a[x].conj() * b[y];
                if coef != ZERO {
                    e += &block(s, x, y).scale(coef);
                }
            }
        }
        return e;
    }
    // partial[y] = Σ A¹[a,y₁] ⊗ ⋯ ⊗ A^q[y_{q−1}, y]
    let first = &passes[0];
    let mut partial: Vec<CMatrix> = (0..d)
        .map(|y| {
            let mut m = CMatrix::zeros(dh, dh);
            for x in 0..d {
                if a[x] != ZERO {
                    m += &block(first, x, y).scale(a[x].conj());
                }
            }
            m
        })
        .collect();
    for s in &passes[1..p - 1] {
        partial = (0..d)
            .map(|y| {
                let mut acc: Option<CMatrix> = None;
                for (x, left) in partial.iter().enumerate() {
                    let term = left.kron(&block(s, x, y));
                    match acc.as_mut() {
                        Some(m) => *m += &term,
                        None => acc = Some(term),
                    }
                }
                acc.expect("slot dimension is positive")
            })
            .collect();
    }
    let last = &passes[p - 1];
    let mut e: Option<CMatrix> = None;
    for (x, left) in partial.iter().enumerate() {
        let mut right = CMatrix::zeros(dh, dh);
        for z in 0..d {
            if b[z] != ZERO {
                right += &block(last, x, z).scale(b[z]);
            }
        }
        let term = left.kron(&right);
        match e.as_mut() {
            Some(m) => *m += &term,
            None => e = Some(term),
        }
    }
    e.expect("slot dimension is positive")
}

/// `A₁ ⊗ ⋯ ⊗ A_P ↦ A₁ ⋯ A_P`, extended linearly.
fn multiplication_map(omega: &CMatrix, dh: usize, p: usize) -> CMatrix {
    if p == 1 {
        return omega.clone();
    }
    let inner_dim = dh.pow(p as u32 - 1);
    CMatrix::from_fn(dh, dh, |row, col| {
        (0..inner_dim).map(|r| omega[(row * inner_dim + r, r * dh + col)]).sum()
    })
}

/// The discrete adapted cocycle `S_1 ⋯ S_k` up to the slot boundary `t`.
pub fn simulate_cocycle(f: &CoefficientMatrix, cfg: &ToyFockConfig, t: Dyadic) -> Result<ToyOperator> {
    if (f.dim_h(), f.dim_k()) != (cfg.dim_h, cfg.dim_k) {
        return Err(Error::Dimension(format!(
            "coefficients with (dim_h, dim_k) = ({}, {}) on a toy space with ({}, {})",
            f.dim_h(),
            f.dim_k(),
            cfg.dim_h,
            cfg.dim_k
        )));
    }
    let k = cfg.slot_of(t)?;
    let step = local_step(f, cfg.delta(), cfg.unitarize)?;
    let mut op = ToyOperator::identity(cfg);
    if k > 0 {
        op.segments.push(Segment { lo: 0, hi: k, passes: vec![step] });
    }
    Ok(op)
}

/// Discrete `U^{(1,2)}_n(t)`: on each dyadic block the F1 evolution over the
/// block's slots, followed by the F2 evolution over the same slots, each
/// ampliated to `k1 ⊕ k2`.
pub fn simulate_interleaved(
    f1: &CoefficientMatrix,
    f2: &CoefficientMatrix,
    cfg: &ToyFockConfig,
    t: Dyadic,
    n: u32,
) -> Result<ToyOperator> {
    let (k1, k2) = (f1.dim_k(), f2.dim_k());
    if f1.dim_h() != cfg.dim_h || f2.dim_h() != cfg.dim_h || k1 + k2 != cfg.dim_k {
        return Err(Error::Dimension(format!(
            "pair with dim_h ({}, {}) and k1 + k2 = {} on a toy space with dim_h {} and dim_k {}",
            f1.dim_h(),
            f2.dim_h(),
            k1 + k2,
            cfg.dim_h,
            cfg.dim_k
        )));
    }
    let block_width = Dyadic::grid_point(1, n);
    let per_block = exact_quotient(block_width, cfg.slot_width()).ok_or_else(|| {
        Error::Granularity(format!("2^-{n} is not a multiple of the slot width {}", cfg.slot_width()))
    })? as usize;
    let end = cfg.slot_of(t)?;
    let s1 = local_step(&f1.ampliate(0, k2), cfg.delta(), cfg.unitarize)?;
    let s2 = local_step(&f2.ampliate(k1, 0), cfg.delta(), cfg.unitarize)?;
    let mut op = ToyOperator::identity(cfg);
    let mut lo = 0;
    while lo < end {
        let hi = (lo + per_block).min(end);
        op.segments.push(Segment { lo, hi, passes: vec![s1.clone(), s2.clone()] });
        lo = hi;
    }
    Ok(op)
}

/// `X[u][v] = ⟨e_u ⊗ embed(f), U (e_v ⊗ embed(g))⟩` with normalized embeddings.
pub fn fock_matrix_element(u: &ToyOperator, f: &StepFunction, g: &StepFunction, cfg: &ToyFockConfig) -> Result<CMatrix> {
    let a = embed_exponential(f, cfg, true)?;
    let b = embed_exponential(g, cfg, true)?;
    u.matrix_element(&a, &b)
}

/// Toy-Fock and semigroup matrix elements at `t`, for `f_{[0,t[}` and `g_{[0,t[}`.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub toy: CMatrix,
    pub semigroup: CMatrix,
    pub error: f64,
}

pub fn compare_with_semigroups(
    f: &CoefficientMatrix,
    fs: &StepFunction,
    gs: &StepFunction,
    t: Dyadic,
    cfg: &ToyFockConfig,
) -> Result<OracleComparison> {
    let (fr, gr) = (fs.restrict(Dyadic::ZERO, t), gs.restrict(Dyadic::ZERO, t));
    let u = simulate_cocycle(f, cfg, t)?;
    let toy = fock_matrix_element(&u, &fr, &gr, cfg)?;
    let semigroup = matrix_element(f, fs, gs, t)?;
    let error = toy.dist(&semigroup);
    Ok(OracleComparison { toy, semigroup, error })
}

/// The slot displacement `exp(√δ (c e₀* − e₀ c*))` on `ℂ ⊕ k`.
pub fn displacement(c: &[Complex64], delta: f64) -> CMatrix {
    let d = c.len() + 1;
    let norm = norm_sqr(c).sqrt();
    let mut m = CMatrix::identity(d);
    if norm == 0.0 {
        return m;
    }
    let r = delta.sqrt() * norm;
    let (sin, cos) = r.sin_cos();
    let hat: Vec<Complex64> = c.iter().map(|z| z / norm).collect();
    // D = I + (cos r − 1)(e₀e₀* + ĉĉ*) + sin r (ĉe₀* − e₀ĉ*)
    m[(0, 0)] = Complex64::new(cos, 0.0);
    for i in 0..c.len() {
        m[(i + 1, 0)] = hat[i] * sin;
        m[(0, i + 1)] = -hat[i].conj() * sin;
        for j in 0..c.len() {
            m[(i + 1, j + 1)] += hat[i] * hat[j].conj() * (cos - 1.0);
        }
    }
    m
}

/// Applies the discrete Weyl operator `W^c_t` (displacements on slots before `t`).
pub fn weyl_apply(c: &[Complex64], t: Dyadic, state: &ProductState, cfg: &ToyFockConfig) -> Result<ProductState> {
    if c.len() != cfg.dim_k {
        return Err(Error::Dimension(format!("displacement of length {} for dim_k {}", c.len(), cfg.dim_k)));
    }
    let k = cfg.slot_of(t)?;
    let d = displacement(c, cfg.delta());
    let mut out = state.clone();
    for slot in out.slots.iter_mut().take(k) {
        *slot = d.mul_vec(slot);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct WeylCheck {
    pub analytic: Complex64,
    pub toy: Complex64,
}

/// `⟨φ(f), W^c_t φ(g)⟩` in closed form and on the toy space, with `f, g`
/// taken on `[0, T)`.
pub fn weyl_check(c: &[Complex64], t: Dyadic, f: &StepFunction, g: &StepFunction, cfg: &ToyFockConfig) -> Result<WeylCheck> {
    let horizon = cfg.horizon;
    let (fr, gr) = (f.restrict(Dyadic::ZERO, horizon), g.restrict(Dyadic::ZERO, horizon));
    let c_window = StepFunction::constant(c.to_vec()).restrict(Dyadic::ZERO, t);
    let phase = (-Complex64::new(0.0, c_window.inner_on(&gr, Dyadic::ZERO, horizon).im)).exp();
    let shifted = gr.add(&c_window)?;
    let analytic = phase
        * exp_inner(
            &ExpVectorDesc::normalized_on(fr.clone(), horizon)?,
            &ExpVectorDesc::normalized_on(shifted, horizon)?,
        )?;
    let a = embed_exponential(&fr, cfg, true)?;
    let b = weyl_apply(c, t, &embed_exponential(&gr, cfg, true)?, cfg)?;
    Ok(WeylCheck { analytic, toy: a.inner(&b) })
}

/// Vacuum element of the Weyl-conjugated toy cocycle compared with
/// `e^{tG_{c,d}}`.
pub fn weyl_conjugated_vacuum(
    f: &CoefficientMatrix,
    c: &[Complex64],
    d: &[Complex64],
    t: Dyadic,
    cfg: &ToyFockConfig,
) -> Result<OracleComparison> {
    let u = simulate_cocycle(f, cfg, t)?;
    let vac = ProductState::vacuum(cfg);
    let a = weyl_apply(c, t, &vac, cfg)?;
    let b = weyl_apply(d, t, &vac, cfg)?;
    let toy = u.matrix_element(&a, &b)?;
    let semigroup = evolve(&generator_cd(f, c, d)?, t.to_f64())?;
    let error = toy.dist(&semigroup);
    Ok(OracleComparison { toy, semigroup, error })
}

/// The Gram operator `Y` on `h` with `⟨v, Y v⟩ = ‖U(v ⊗ ψ)‖²`; valid for
/// operators whose segments are disjoint and carry a single pass.
pub fn output_gram(u: &ToyOperator, psi: &ProductState) -> Result<CMatrix> {
    if u.segments.iter().any(|s| s.passes.len() > 1) || !u.segments_disjoint() {
        return Err(Error::Argument("output Gram operator needs disjoint single-pass segments".into()));
    }
    let (dh, d) = (u.dim_h, u.slot_dim);
    let mut covered = vec![false; u.slots];
    let mut y = CMatrix::identity(dh);
    for seg in &u.segments {
        let Some(s) = seg.passes.first() else { continue };
        for j in seg.lo..seg.hi {
            covered[j] = true;
            let b = &psi.slots[j];
            let mut next = CMatrix::zeros(dh, dh);
            for x in 0..d {
                let mut t = CMatrix::zeros(dh, dh);
                for (z, bz) in b.iter().enumerate().filter(|(_, bz)| **bz != ZERO) {
                    t += &s.block(x * dh, z * dh, dh, dh).scale(*bz);
                }
                next += &(&(&t.adjoint() * &y) * &t);
            }
            y = next;
        }
    }
    let mut scalar = psi.scale * psi.scale;
    for j in (0..u.slots).filter(|j| !covered[*j]) {
        scalar *= norm_sqr(&psi.slots[j]);
    }
    Ok(y.scale_real(scalar))
}

/// Dense amplitudes on `h ⊗ (ℂ ⊕ k)^{⊗m}`; index `i · D^m + Σ_j x_j D^{m−1−j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    dim_h: usize,
    slot_dim: usize,
    slots: usize,
    pub amps: Vec<Complex64>,
}

impl DenseState {
    pub fn zeros(cfg: &ToyFockConfig) -> Result<DenseState> {
        let n = cfg.require_dense()?;
        Ok(DenseState { dim_h: cfg.dim_h, slot_dim: cfg.slot_dim(), slots: cfg.slots, amps: vec![ZERO; n] })
    }

    pub fn basis(cfg: &ToyFockConfig, index: usize) -> Result<DenseState> {
        let mut s = Self::zeros(cfg)?;
        s.amps[index] = ONE;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn inner(&self, other: &DenseState) -> Complex64 {
        inner(&self.amps, &other.amps)
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    pub fn dist(&self, other: &DenseState) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies a matrix on `h ⊗ slot_j` laid out as `(μ, i) ↦ μ·dim_h + i`.
    pub fn apply_local(&mut self, slot: usize, local: &CMatrix) {
        let (dh, d) = (self.dim_h, self.slot_dim);
        let chain = self.amps.len() / dh;
        let stride = d.pow((self.slots - 1 - slot) as u32);
        let n = dh * d;
        let mut buf = vec![ZERO; n];
        for rest in 0..chain {
            if (rest / stride) % d != 0 {
                continue;
            }
            for mu in 0..d {
                for i in 0..dh {
                    buf[mu * dh + i] = self.amps[i * chain + rest + mu * stride];
                }
            }
            let out = local.mul_vec(&buf);
            for mu in 0..d {
                for i in 0..dh {
                    self.amps[i * chain + rest + mu * stride] = out[mu * dh + i];
                }
            }
        }
    }

    /// Applies an operator on slot `slot` alone, acting trivially on `h`.
    pub fn apply_slot_only(&mut self, slot: usize, x: &CMatrix) {
        let local = x.kron(&CMatrix::identity(self.dim_h));
        self.apply_local(slot, &local);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::testing::{random_contraction_generator, random_unitary_generator};
    use crate::numkit::testing::{random_hermitian, random_matrix, rng};
    use crate::numkit::{expm, I};
    use rand::Rng;

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_step(r: &mut impl Rng, dim_k: usize, cuts: &[&str]) -> StepFunction {
        let bps: Vec<Dyadic> = cuts.iter().map(|s| d(s)).collect();
        let values = (0..=bps.len())
            .map(|_| (0..dim_k).map(|_| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect())
            .collect();
        StepFunction::new(dim_k, bps, values).unwrap()
    }

    fn basis(n: usize, i: usize) -> Vec<Complex64> {
        let mut v = vec![ZERO; n];
        v[i] = ONE;
        v
    }

    fn dense_element(u: &ToyOperator, a: &ProductState, b: &ProductState, cfg: &ToyFockConfig) -> CMatrix {
        let dh = cfg.dim_h();
        let mut x = CMatrix::zeros(dh, dh);
        for v in 0..dh {
            let out = u.apply_dense(&b.to_dense(&basis(dh, v), cfg).unwrap()).unwrap();
            for w in 0..dh {
                x[(w, v)] = a.to_dense(&basis(dh, w), cfg).unwrap().inner(&out);
            }
        }
        x
    }

    #[test]
    fn config_validation() {
        let cfg = ToyFockConfig::new(d("1/2"), 64, 2, 1).unwrap();
        assert_eq!(cfg.slot_width(), d("1/128"));
        assert_eq!(cfg.slot_of(d("1/4")).unwrap(), 32);
        assert!(matches!(cfg.slot_of(d("1/256")), Err(Error::Granularity(_))));
        assert!(cfg.slot_of(d("1")).is_err());
        assert!(ToyFockConfig::new(d("1"), 48, 2, 1).is_err());
        assert!(ToyFockConfig::new(Dyadic::ZERO, 64, 2, 1).is_err());
        assert!(matches!(ToyFockConfig::new(d("1"), 1 << 20, 2, 1), Err(Error::Budget { .. })));
        assert!(matches!(DenseState::zeros(&cfg), Err(Error::Budget { .. })));
        let small = ToyFockConfig::new(d("1"), 4, 2, 1).unwrap();
        assert_eq!(small.dense_dimension(), Some(32));
        let three = ToyFockConfig::new(d("3/4"), 4, 1, 1).unwrap();
        assert_eq!(three.slot_width(), d("3/16"));
    }

    #[test]
    fn local_step_blocks_and_unitarity_rates() {
        let mut r = rng(1);
        let f = random_unitary_generator(&mut r, 2, 1);
        let delta = 1.0 / 64.0;
        let s = local_step(&f, delta, false).unwrap();
        assert_eq!(s.block(2, 2, 2, 2), *f.w());
        assert!(s.block(2, 0, 2, 2).dist(&f.l().scale_real(0.125)) < 1e-15);
        assert!(s.block(0, 0, 2, 2).dist(&(&CMatrix::identity(2) + &f.k().scale_real(delta))) < 1e-15);
        assert!(local_step(&f, 0.0, false).is_err());

        let defect = |delta: f64| numkit::unitary_defect(&local_step(&f, delta, false).unwrap());
        let polar_gap = |delta: f64| local_step(&f, delta, false).unwrap().dist(&local_step(&f, delta, true).unwrap());
        for h in [1.0 / 64.0, 1.0 / 256.0, 1.0 / 1024.0] {
            let ratio = defect(h / 2.0) / defect(h);
            assert!((0.4..0.6).contains(&ratio), "{ratio}");
            let ratio = polar_gap(h / 2.0) / polar_gap(h);
            assert!((0.4..0.6).contains(&ratio), "{ratio}");
            assert!(numkit::unitary_defect(&local_step(&f, h, true).unwrap()) < 1e-13);
        }

        // No noise coupling: the defect is second order.
        let hx = random_hermitian(&mut r, 2);
        let p = CoefficientMatrix::pure_hamiltonian(&hx, 1).unwrap();
        let d0 = numkit::unitary_defect(&local_step(&p, 1.0 / 64.0, false).unwrap());
        let d1 = numkit::unitary_defect(&local_step(&p, 1.0 / 128.0, false).unwrap());
        assert!((0.2..0.3).contains(&(d1 / d0)), "{}", d1 / d0);
    }

    #[test]
    fn embedding_normalization() {
        let cfg = ToyFockConfig::new(d("1"), 16, 1, 2).unwrap();
        let zero = embed_exponential(&StepFunction::zero(2), &cfg, true).unwrap();
        assert_eq!(zero, ProductState::vacuum(&cfg));
        let mut r = rng(2);
        let f = random_step(&mut r, 2, &["1/4", "3/8"]);
        let a = embed_exponential(&f, &cfg, true).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-14);
        let raw = embed_exponential(&f, &cfg, false).unwrap();
        assert_eq!(raw.scale, 1.0);
        assert!(matches!(
            embed_exponential(&random_step(&mut r, 2, &["1/32"]), &cfg, true),
            Err(Error::Granularity(_))
        ));
        assert!(embed_exponential(&StepFunction::zero(1), &cfg, true).is_err());
        // Breakpoints past the horizon are irrelevant.
        assert!(embed_exponential(&random_step(&mut r, 2, &["33/32"]), &cfg, true).is_ok());
    }

    #[test]
    fn matrix_free_elements_match_dense() {
        let mut r = rng(3);
        let f = random_unitary_generator(&mut r, 2, 1);
        let cfg = ToyFockConfig::new(d("1"), 4, 2, 1).unwrap();
        let fs = random_step(&mut r, 1, &["1/2"]);
        let gs = random_step(&mut r, 1, &["1/4"]);
        let (a, b) = (embed_exponential(&fs, &cfg, true).unwrap(), embed_exponential(&gs, &cfg, true).unwrap());
        for t in ["0", "1/2", "3/4", "1"] {
            let u = simulate_cocycle(&f, &cfg, d(t)).unwrap();
            let fast = u.matrix_element(&a, &b).unwrap();
            assert!(fast.dist(&dense_element(&u, &a, &b, &cfg)) < 1e-13, "t={t}");
        }

        let f1 = random_unitary_generator(&mut r, 2, 1);
        let f2 = random_contraction_generator(&mut r, 2, 1);
        let cfg2 = ToyFockConfig::new(d("1"), 4, 2, 2).unwrap().without_unitarization();
        let fs = random_step(&mut r, 2, &["1/2"]);
        let gs = random_step(&mut r, 2, &["3/4"]);
        let (a, b) = (embed_exponential(&fs, &cfg2, true).unwrap(), embed_exponential(&gs, &cfg2, true).unwrap());
        for n in 0..=2 {
            let u = simulate_interleaved(&f1, &f2, &cfg2, d("3/4"), n).unwrap();
            let fast = u.matrix_element(&a, &b).unwrap();
            assert!(fast.dist(&dense_element(&u, &a, &b, &cfg2)) < 1e-13, "n={n}");
        }
        assert!(matches!(simulate_interleaved(&f1, &f2, &cfg2, d("3/4"), 3), Err(Error::Granularity(_))));
        assert!(simulate_interleaved(&f1, &f1, &cfg, d("1/2"), 1).is_err());
        assert!(simulate_cocycle(&f1, &cfg2, d("1/2")).is_err());
    }

    #[test]
    fn cocycle_is_adapted() {
        let mut r = rng(4);
        let f = random_unitary_generator(&mut r, 2, 1);
        let cfg = ToyFockConfig::new(d("1"), 4, 2, 1).unwrap();
        let u = simulate_cocycle(&f, &cfg, d("1/2")).unwrap();
        let x = random_matrix(&mut r, 2, 2);
        for slot in 2..4 {
            for idx in [0, 5, 17, 30] {
                let psi = DenseState::basis(&cfg, idx).unwrap();
                let mut left = u.apply_dense(&psi).unwrap();
                left.apply_slot_only(slot, &x);
                let mut moved = psi.clone();
                moved.apply_slot_only(slot, &x);
                let right = u.apply_dense(&moved).unwrap();
                assert!(left.dist(&right) < 1e-14);
            }
        }
        // Slots at or after t are untouched.
        let psi = DenseState::basis(&cfg, 3).unwrap();
        let out = u.apply_dense(&psi).unwrap();
        let chain = 16;
        for (idx, z) in out.amps.iter().enumerate() {
            if (idx % chain) % 4 != 3 {
                assert_eq!(*z, ZERO);
            }
        }
    }

    #[test]
    fn cocycle_identity_by_slot_shift() {
        let mut r = rng(5);
        let f = random_unitary_generator(&mut r, 2, 1);
        let cfg = ToyFockConfig::new(d("1"), 8, 2, 1).unwrap();
        let whole = simulate_cocycle(&f, &cfg, d("7/8")).unwrap();
        let split = simulate_cocycle(&f, &cfg, d("3/8"))
            .unwrap()
            .then(&simulate_cocycle(&f, &cfg, d("1/2")).unwrap().shifted(3).unwrap())
            .unwrap();
        assert!(simulate_cocycle(&f, &cfg, d("1/2")).unwrap().shifted(5).is_err());
        for idx in [0, 1, 77, 300, 511] {
            let psi = DenseState::basis(&cfg, idx).unwrap();
            assert!(whole.apply_dense(&psi).unwrap().dist(&split.apply_dense(&psi).unwrap()) < 1e-14);
        }
        let fs = random_step(&mut r, 1, &["1/4"]);
        let a = embed_exponential(&fs, &cfg, true).unwrap();
        assert!(whole.matrix_element(&a, &a).unwrap().dist(&split.matrix_element(&a, &a).unwrap()) < 1e-14);
    }

    #[test]
    fn unitarized_cocycles_are_unitary() {
        let mut r = rng(6);
        let f = random_unitary_generator(&mut r, 2, 1);
        let cfg = ToyFockConfig::new(d("1"), 4, 2, 1).unwrap();
        let u = simulate_cocycle(&f, &cfg, d("1")).unwrap();
        let cols: Vec<DenseState> = (0..32).map(|i| u.apply_dense(&DenseState::basis(&cfg, i).unwrap()).unwrap()).collect();
        for i in 0..32 {
            for j in 0..32 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cols[i].inner(&cols[j]) - want).norm() < 1e-13);
            }
        }
        for m in [64, 128, 256] {
            let cfg = ToyFockConfig::new(d("1"), m, 2, 1).unwrap();
            let u = simulate_cocycle(&f, &cfg, d("1")).unwrap();
            assert!(u.local_unitarity_defect() < 1e-13);
            let psi = embed_exponential(&random_step(&mut r, 1, &["1/2"]), &cfg, true).unwrap();
            assert!(output_gram(&u, &psi).unwrap().dist(&CMatrix::identity(2)) < 1e-12);
        }
    }

    #[test]
    fn output_gram_matches_dense() {
        let mut r = rng(7);
        let f = random_contraction_generator(&mut r, 2, 1);
        let cfg = ToyFockConfig::new(d("1"), 4, 2, 1).unwrap().without_unitarization();
        let u = simulate_cocycle(&f, &cfg, d("3/4")).unwrap();
        let psi = embed_exponential(&random_step(&mut r, 1, &["1/4"]), &cfg, true).unwrap();
        let y = output_gram(&u, &psi).unwrap();
        for v in 0..2 {
            for w in 0..2 {
                let ov = u.apply_dense(&psi.to_dense(&basis(2, v), &cfg).unwrap()).unwrap();
                let ow = u.apply_dense(&psi.to_dense(&basis(2, w), &cfg).unwrap()).unwrap();
                assert!((ow.inner(&ov) - y[(w, v)]).norm() < 1e-13);
            }
        }
        let two = simulate_interleaved(&f, &f, &ToyFockConfig::new(d("1"), 4, 2, 2).unwrap(), d("1"), 1).unwrap();
        assert!(output_gram(&two, &ProductState::vacuum(&ToyFockConfig::new(d("1"), 4, 2, 2).unwrap())).is_err());
    }

    #[test]
    fn toy_elements_converge_to_semigroup_elements() {
        let mut r = rng(8);
        let f = random_unitary_generator(&mut r, 2, 1);
        let fs = random_step(&mut r, 1, &["1/4", "1/2"]);
        let gs = random_step(&mut r, 1, &["3/8"]);
        let t = d("3/4");
        let errors: Vec<f64> = [64, 128, 256, 512]
            .iter()
            .map(|m| compare_with_semigroups(&f, &fs, &gs, t, &ToyFockConfig::new(d("1"), *m, 2, 1).unwrap()).unwrap().error)
            .collect();
        for w in errors.windows(2) {
            assert!((0.4..0.6).contains(&(w[1] / w[0])), "{errors:?}");
        }
        assert!(errors[2] < 0.05);
    }

    #[test]
    fn pure_hamiltonian_converges_strongly() {
        let mut r = rng(9);
        let h = random_hermitian(&mut r, 2);
        let p = CoefficientMatrix::pure_hamiltonian(&h, 1).unwrap();
        let g = random_step(&mut r, 1, &["1/2"]);
        let exact = expm(&h.scale(I)).unwrap();
        let gap = |m: usize| {
            let cfg = ToyFockConfig::new(d("1"), m, 2, 1).unwrap();
            let u = simulate_cocycle(&p, &cfg, d("1")).unwrap();
            let x = fock_matrix_element(&u, &g, &g, &cfg).unwrap();
            // ‖(U − e^{iH} ⊗ I)(v ⊗ ψ)‖² = 2 − 2 Re⟨e^{iH}v, X v⟩ for unit v
            let y = &exact.adjoint() * &x;
            (0..2).map(|v| (2.0 - 2.0 * y[(v, v)].re).max(0.0).sqrt()).fold(0.0, f64::max)
        };
        let (g1, g2, g3) = (gap(64), gap(256), gap(1024));
        assert!(g2 < g1 && g3 < g2 && g3 < 0.05, "{g1} {g2} {g3}");
    }

    #[test]
    fn displacement_is_unitary_and_displaces_the_vacuum() {
        let cv = vec![c(0.3, -0.4), c(1.2, 0.1)];
        let delta = 1.0 / 256.0;
        let dm = displacement(&cv, delta);
        assert!(numkit::unitary_defect(&dm) < 1e-14);
        assert_eq!(displacement(&[ZERO, ZERO], delta), CMatrix::identity(3));
        let out = dm.mul_vec(&basis(3, 0));
        let root = delta.sqrt();
        let norm = (1.0 + delta * norm_sqr(&cv)).sqrt();
        assert!((out[0] - 1.0 / norm).norm() < delta);
        assert!((out[1] - cv[0] * root / norm).norm() < delta);
    }

    #[test]
    fn weyl_identities_converge() {
        let mut r = rng(10);
        let cv = vec![c(0.7, -0.2)];
        let f = random_step(&mut r, 1, &["1/4"]);
        let g = random_step(&mut r, 1, &["1/2"]);
        let t = d("3/4");
        let gaps: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|m| {
                let w = weyl_check(&cv, t, &f, &g, &ToyFockConfig::new(d("1"), *m, 1, 1).unwrap()).unwrap();
                (w.analytic - w.toy).norm()
            })
            .collect();
        assert!(gaps[2] < 0.05 && gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");

        let fc = random_unitary_generator(&mut r, 2, 1);
        let dv = vec![c(-0.3, 0.5)];
        let errs: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|m| weyl_conjugated_vacuum(&fc, &cv, &dv, t, &ToyFockConfig::new(d("1"), *m, 2, 1).unwrap()).unwrap().error)
            .collect();
        assert!(errs[2] < 0.05 && errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        assert!(weyl_apply(&[ZERO, ZERO], t, &ProductState::vacuum(&ToyFockConfig::new(d("1"), 4, 1, 1).unwrap()), &ToyFockConfig::new(d("1"), 4, 1, 1).unwrap()).is_err());
    }

    #[test]
    fn embedded_inner_products_converge() {
        let mut r = rng(11);
        let f = random_step(&mut r, 2, &["1/4", "1/2"]);
        let g = random_step(&mut r, 2, &["3/4"]);
        let exact = exp_inner(
            &ExpVectorDesc::normalized_on(f.clone(), Dyadic::ONE).unwrap(),
            &ExpVectorDesc::normalized_on(g.clone(), Dyadic::ONE).unwrap(),
        )
        .unwrap();
        let gaps: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|m| {
                let cfg = ToyFockConfig::new(d("1"), *m, 1, 2).unwrap();
                let a = embed_exponential(&f, &cfg, true).unwrap();
                let b = embed_exponential(&g, &cfg, true).unwrap();
                // U = I reduces to the embedded inner product
                let x = ToyOperator::identity(&cfg).matrix_element(&a, &b).unwrap();
                assert!((x[(0, 0)] - a.inner(&b)).norm() < 1e-15);
                (a.inner(&b) - exact).norm()
            })
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] / w[0] <= 0.75, "{gaps:?}");
        }
    }

    #[test]
    fn toy_elements_are_bounded_and_interleavings_supported_before_t() {
        let mut r = rng(12);
        let f = random_unitary_generator(&mut r, 2, 1);
        let fs = random_step(&mut r, 1, &["1/2"]);
        let cfg = ToyFockConfig::new(d("1"), 128, 2, 1).unwrap();
        let u = simulate_cocycle(&f, &cfg, d("1")).unwrap();
        assert!(fock_matrix_element(&u, &fs, &fs, &cfg).unwrap().opnorm() <= 1.0 + 1e-12);

        let f2 = random_unitary_generator(&mut r, 2, 1);
        let small = ToyFockConfig::new(d("1"), 4, 2, 2).unwrap();
        let w = simulate_interleaved(&f, &f2, &small, d("1/2"), 1).unwrap();
        let x = random_matrix(&mut r, 3, 3);
        for idx in [0, 4, 40, 161] {
            let psi = DenseState::basis(&small, idx).unwrap();
            for slot in 2..4 {
                let mut left = w.apply_dense(&psi).unwrap();
                left.apply_slot_only(slot, &x);
                let mut moved = psi.clone();
                moved.apply_slot_only(slot, &x);
                assert!(left.dist(&w.apply_dense(&moved).unwrap()) < 1e-14);
            }
        }
    }
}

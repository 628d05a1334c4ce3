//! Dyadic step functions, exponential-vector descriptors and dyadic time grids.
//!
//! All breakpoints and horizons are exact dyadic rationals so that grid
//! membership and orders are computed without rounding.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numkit::{inner, norm_sqr, ZERO};

/// Largest supported denominator exponent.
pub const MAX_LEVEL: u32 = 60;

/// A dyadic rational `num / 2^exp`, kept in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: i64,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: i64, exp: u32) -> Result<Dyadic> {
        if exp > MAX_LEVEL {
            return Err(Error::Argument(format!("dyadic level {exp} exceeds {MAX_LEVEL}")));
        }
        Ok(Self::normalized(num, exp))
    }

    fn normalized(mut num: i64, mut exp: u32) -> Dyadic {
        if num == 0 {
            return Dyadic::ZERO;
        }
        while exp > 0 && num % 2 == 0 {
            num /= 2;
            exp -= 1;
        }
        Dyadic { num, exp }
    }

    pub fn from_int(n: i64) -> Dyadic {
        Dyadic { num: n, exp: 0 }
    }

    /// `j · 2^{-n}`.
    pub fn grid_point(j: i64, n: u32) -> Dyadic {
        Self::normalized(j, n)
    }

    /// Exact conversion of a finite float whose binary expansion terminates
    /// within `MAX_LEVEL` fractional bits.
    pub fn from_f64(x: f64) -> Result<Dyadic> {
        if !x.is_finite() {
            return Err(Error::Argument(format!("{x} is not a dyadic rational")));
        }
        for exp in 0..=MAX_LEVEL {
            let scaled = x * (1u64 << exp) as f64;
            if scaled.fract() == 0.0 {
                if scaled.abs() >= 9.0e18 {
                    break;
                }
                return Ok(Self::normalized(scaled as i64, exp));
            }
        }
        Err(Error::Argument(format!("{x} has no dyadic representation within 2^-{MAX_LEVEL}")))
    }

    pub fn numerator(self) -> i64 {
        self.num
    }

    /// Least `N` with `self ∈ 2^{-N}ℤ`.
    pub fn level(self) -> u32 {
        self.exp
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / (1u64 << self.exp) as f64
    }

    pub fn is_negative(self) -> bool {
        self.num < 0
    }

    /// Numerator over the common denominator `2^n`, for `n ≥ level`.
    fn scaled_to(self, n: u32) -> i128 {
        (self.num as i128) << (n - self.exp)
    }

    /// `2^{-n} [2^n x]`.
    pub fn floor_to(self, n: u32) -> Dyadic {
        if self.exp <= n {
            return self;
        }
        let shift = self.exp - n;
        Self::normalized(self.num.div_euclid(1i64 << shift), n)
    }

    /// `[2^n x]` as an integer.
    pub fn floor_count(self, n: u32) -> i64 {
        if self.exp <= n {
            (self.num as i128 * (1i128 << (n - self.exp))) as i64
        } else {
            self.num.div_euclid(1i64 << (self.exp - n))
        }
    }

    pub fn is_multiple_of_level(self, n: u32) -> bool {
        self.exp <= n
    }

    pub fn min(self, other: Dyadic) -> Dyadic {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Dyadic) -> Dyadic {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Dyadic) -> Ordering {
        let n = self.exp.max(other.exp);
        self.scaled_to(n).cmp(&other.scaled_to(n))
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Dyadic) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        let n = self.exp.max(rhs.exp);
        let s = self.scaled_to(n) + rhs.scaled_to(n);
        Dyadic::normalized(i64::try_from(s).expect("dyadic overflow"), n)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Dyadic) -> Dyadic {
        let n = self.exp.max(rhs.exp);
        let s = self.scaled_to(n) - rhs.scaled_to(n);
        Dyadic::normalized(i64::try_from(s).expect("dyadic overflow"), n)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Dyadic {
    type Err = Error;

    /// Accepts `j`, `j/2^N` and `j/D` with `D` a power of two.
    fn from_str(s: &str) -> Result<Dyadic> {
        let bad = || Error::Argument(format!("'{s}' is not a dyadic rational of the form j/2^N"));
        let s = s.trim();
        let (num, den) = match s.split_once('/') {
            None => (s, None),
            Some((a, b)) => (a.trim(), Some(b.trim())),
        };
        let num: i64 = num.parse().map_err(|_| bad())?;
        let exp = match den {
            None => 0,
            Some(d) => {
                if let Some(e) = d.strip_prefix("2^") {
                    e.parse::<u32>().map_err(|_| bad())?
                } else {
                    let d: u64 = d.parse().map_err(|_| bad())?;
                    if d == 0 || !d.is_power_of_two() {
                        return Err(bad());
                    }
                    d.trailing_zeros()
                }
            }
        };
        Dyadic::new(num, exp)
    }
}

/// A right-continuous step function `ℝ₊ → ℂ^dim_k` with dyadic breakpoints.
///
/// `values[i]` holds on `[breakpoints[i-1], breakpoints[i])`, with the
/// conventions `breakpoints[-1] = 0` and `breakpoints[len] = ∞`. Adjacent
/// equal values are merged, so every stored breakpoint is a genuine jump.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    dim_k: usize,
    breakpoints: Vec<Dyadic>,
    values: Vec<Vec<Complex64>>,
}

impl StepFunction {
    pub fn new(dim_k: usize, breakpoints: Vec<Dyadic>, values: Vec<Vec<Complex64>>) -> Result<StepFunction> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::Argument(format!(
                "{} values for {} breakpoints; need exactly one more value than breakpoints",
                values.len(),
                breakpoints.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.len() != dim_k) {
            return Err(Error::Dimension(format!("step value of length {} for dim_k {dim_k}", v.len())));
        }
        if values.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Argument("step values must be finite".into()));
        }
        if breakpoints.first().is_some_and(|b| *b <= Dyadic::ZERO) {
            return Err(Error::Argument("breakpoints must be strictly positive".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("breakpoints must be strictly increasing".into()));
        }
        let mut out = StepFunction { dim_k, breakpoints: Vec::new(), values: vec![values[0].clone()] };
        for (b, v) in breakpoints.into_iter().zip(values.into_iter().skip(1)) {
            if out.values.last() != Some(&v) {
                out.breakpoints.push(b);
                out.values.push(v);
            }
        }
        Ok(out)
    }

    pub fn constant(value: Vec<Complex64>) -> StepFunction {
        StepFunction { dim_k: value.len(), breakpoints: Vec::new(), values: vec![value] }
    }

    pub fn zero(dim_k: usize) -> StepFunction {
        Self::constant(vec![ZERO; dim_k])
    }

    /// Pieces given as `(until, value)`; the last piece must have `until = None`.
    pub fn from_pieces(dim_k: usize, pieces: Vec<(Option<Dyadic>, Vec<Complex64>)>) -> Result<StepFunction> {
        let n = pieces.len();
        if n == 0 {
            return Err(Error::Argument("a step function needs at least one piece".into()));
        }
        let mut breakpoints = Vec::with_capacity(n - 1);
        let mut values = Vec::with_capacity(n);
        for (i, (until, value)) in pieces.into_iter().enumerate() {
            match (until, i + 1 == n) {
                (None, true) => {}
                (Some(b), false) => breakpoints.push(b),
                (None, false) => return Err(Error::Argument("only the last piece may extend to infinity".into())),
                (Some(_), true) => return Err(Error::Argument("the last piece must extend to infinity".into())),
            }
            values.push(value);
        }
        Self::new(dim_k, breakpoints, values)
    }

    /// Pointwise sum.
    pub fn add(&self, other: &StepFunction) -> Result<StepFunction> {
        if self.dim_k != other.dim_k {
            return Err(Error::Dimension(format!("adding step functions over dim_k {} and {}", self.dim_k, other.dim_k)));
        }
        let mut cuts: Vec<Dyadic> = self.breakpoints().iter().chain(other.breakpoints()).copied().collect();
        cuts.sort();
        cuts.dedup();
        let values = std::iter::once(Dyadic::ZERO)
            .chain(cuts.iter().copied())
            .map(|s| self.eval(s).iter().zip(other.eval(s)).map(|(a, b)| a + b).collect())
            .collect();
        StepFunction::new(self.dim_k, cuts, values)
    }

    pub fn dim_k(&self) -> usize {
        self.dim_k
    }

    pub fn breakpoints(&self) -> &[Dyadic] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<Complex64>] {
        &self.values
    }

    /// Pieces as `(until, value)` with `None` for the unbounded last piece.
    pub fn pieces(&self) -> Vec<(Option<Dyadic>, &[Complex64])> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.breakpoints.get(i).copied(), v.as_slice()))
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        self.breakpoints.is_empty()
    }

    fn piece_index(&self, t: Dyadic) -> usize {
        self.breakpoints.partition_point(|b| *b <= t)
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: Dyadic) -> &[Complex64] {
        &self.values[self.piece_index(t)]
    }

    pub fn eval_f64(&self, t: f64) -> &[Complex64] {
        &self.values[self.breakpoints.partition_point(|b| b.to_f64() <= t)]
    }

    /// Least `N` such that the function is constant on every `[j2^{-N}, (j+1)2^{-N})`.
    pub fn order(&self) -> u32 {
        self.breakpoints.iter().map(|b| b.level()).max().unwrap_or(0)
    }

    /// `f_{[s,t[}`: equal to `f` on `[s,t)` and zero elsewhere.
    pub fn restrict(&self, s: Dyadic, t: Dyadic) -> StepFunction {
        let zero = vec![ZERO; self.dim_k];
        if t <= s {
            return Self::zero(self.dim_k);
        }
        let mut pieces: Vec<(Option<Dyadic>, Vec<Complex64>)> = Vec::new();
        if s > Dyadic::ZERO {
            pieces.push((Some(s), zero.clone()));
        }
        let mut lo = s;
        let cuts = self.breakpoints.iter().copied().filter(|b| *b > s && *b < t);
        for cut in cuts.chain(std::iter::once(t)) {
            pieces.push((Some(cut), self.eval(lo).to_vec()));
            lo = cut;
        }
        pieces.push((None, zero));
        Self::from_pieces(self.dim_k, pieces).expect("restriction of a valid step function")
    }

    /// `x ↦ f(x + s)` on `ℝ₊`.
    pub fn shift(&self, s: Dyadic) -> StepFunction {
        let start = self.piece_index(s);
        let breakpoints = self.breakpoints[start..].iter().map(|b| *b - s).collect();
        let values = self.values[start..].to_vec();
        Self::new(self.dim_k, breakpoints, values).expect("shift of a valid step function")
    }

    /// Both functions' breakpoints merged, with values concatenated.
    pub fn direct_sum(&self, other: &StepFunction) -> StepFunction {
        let mut cuts: Vec<Dyadic> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        cuts.sort();
        cuts.dedup();
        let mut values = Vec::with_capacity(cuts.len() + 1);
        let starts = std::iter::once(Dyadic::ZERO).chain(cuts.iter().copied());
        for s in starts {
            let mut v = self.eval(s).to_vec();
            v.extend_from_slice(other.eval(s));
            values.push(v);
        }
        Self::new(self.dim_k + other.dim_k, cuts, values).expect("direct sum of valid step functions")
    }

    /// Coordinates `range` of the values.
    pub fn project(&self, range: std::ops::Range<usize>) -> StepFunction {
        let values = self.values.iter().map(|v| v[range.clone()].to_vec()).collect();
        Self::new(range.len(), self.breakpoints.clone(), values).expect("projection of a valid step function")
    }

    /// Splits `f = (f¹, f²)` at noise coordinate `k1`.
    pub fn split(&self, k1: usize) -> (StepFunction, StepFunction) {
        (self.project(0..k1), self.project(k1..self.dim_k))
    }

    /// `∫_a^b ⟨f(x), g(x)⟩ dx`, antilinear in `f`.
    pub fn inner_on(&self, g: &StepFunction, a: Dyadic, b: Dyadic) -> Complex64 {
        if b <= a {
            return ZERO;
        }
        let mut sum = ZERO;
        let mut lo = a;
        for cut in merge_breakpoints_in(self, g, a, b).into_iter().chain(std::iter::once(b)) {
            let width = (cut - lo).to_f64();
            sum += inner(self.eval(lo), g.eval(lo)) * width;
            lo = cut;
        }
        sum
    }

    /// `‖f_{[a,b[}‖²`.
    pub fn norm_sqr_on(&self, a: Dyadic, b: Dyadic) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut lo = a;
        let cuts = self.breakpoints.iter().copied().filter(|c| *c > a && *c < b);
        for cut in cuts.chain(std::iter::once(b)) {
            sum += norm_sqr(self.eval(lo)) * (cut - lo).to_f64();
            lo = cut;
        }
        sum
    }
}

/// Union of discontinuities of `f` and `g` in the open interval `]0, t[`, ascending.
pub fn merge_breakpoints(f: &StepFunction, g: &StepFunction, t: Dyadic) -> Result<Vec<Dyadic>> {
    if f.dim_k != g.dim_k {
        return Err(Error::Dimension(format!("step functions over dim_k {} and {}", f.dim_k, g.dim_k)));
    }
    Ok(merge_breakpoints_in(f, g, Dyadic::ZERO, t))
}

/// Union of discontinuities of `f` and `g` in `]a, b[`, ascending.
pub fn merge_breakpoints_in(f: &StepFunction, g: &StepFunction, a: Dyadic, b: Dyadic) -> Vec<Dyadic> {
    let mut cuts: Vec<Dyadic> =
        f.breakpoints.iter().chain(&g.breakpoints).copied().filter(|c| *c > a && *c < b).collect();
    cuts.sort();
    cuts.dedup();
    cuts
}

/// Exponential vector `ε(f_{[s,t[})`, or its normalized form `φ` when
/// `normalized` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpVectorDesc {
    pub f: StepFunction,
    pub start: Dyadic,
    pub end: Dyadic,
    pub normalized: bool,
}

impl ExpVectorDesc {
    pub fn new(f: StepFunction, start: Dyadic, end: Dyadic, normalized: bool) -> Result<ExpVectorDesc> {
        if start.is_negative() || end < start {
            return Err(Error::Argument(format!("interval [{start}, {end}) is not a subinterval of ℝ₊")));
        }
        Ok(ExpVectorDesc { f, start, end, normalized })
    }

    /// `φ(f_{[0,t[})`.
    pub fn normalized_on(f: StepFunction, t: Dyadic) -> Result<ExpVectorDesc> {
        Self::new(f, Dyadic::ZERO, t, true)
    }

    pub fn norm_sqr_of_argument(&self) -> f64 {
        self.f.norm_sqr_on(self.start, self.end)
    }
}

/// `⟨ε(f), ε(g)⟩ = e^{⟨f,g⟩}`, or the normalized version
/// `exp(⟨f,g⟩ − ½‖f‖² − ½‖g‖²)`.
pub fn exp_inner(f: &ExpVectorDesc, g: &ExpVectorDesc) -> Result<Complex64> {
    if f.f.dim_k != g.f.dim_k {
        return Err(Error::Dimension(format!("exponential vectors over dim_k {} and {}", f.f.dim_k, g.f.dim_k)));
    }
    if f.normalized != g.normalized {
        return Err(Error::Argument("cannot pair a normalized with an unnormalized exponential vector".into()));
    }
    let lo = f.start.max(g.start);
    let hi = f.end.min(g.end);
    let mut exponent = f.f.inner_on(&g.f, lo, hi);
    if f.normalized {
        exponent -= Complex64::new(0.5 * (f.norm_sqr_of_argument() + g.norm_sqr_of_argument()), 0.0);
    }
    Ok(exponent.exp())
}

/// The dyadic grid `{0, 2^{-n}, …, t^n_0, t}` with `t^n_0 = 2^{-n}[2^n t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicGrid {
    pub t: Dyadic,
    pub n: u32,
    pub times: Vec<Dyadic>,
}

impl DyadicGrid {
    /// Number of full steps, `[2^n t]`.
    pub fn full_steps(&self) -> u64 {
        self.t.floor_count(self.n) as u64
    }

    /// `t^n_k = 2^{-n}([2^n t] + k)`.
    pub fn t_k(&self, k: i64) -> Dyadic {
        Dyadic::grid_point(self.t.floor_count(self.n) + k, self.n)
    }

    pub fn t0(&self) -> Dyadic {
        self.t.floor_to(self.n)
    }

    pub fn step(&self) -> Dyadic {
        Dyadic::grid_point(1, self.n)
    }

    /// Width `t − t^n_0` of the final partial step, in `[0, 2^{-n})`.
    pub fn partial_width(&self) -> Dyadic {
        self.t - self.t0()
    }
}

pub fn dyadic_grid(t: Dyadic, n: u32) -> Result<DyadicGrid> {
    if t.is_negative() {
        return Err(Error::Argument(format!("negative horizon {t}")));
    }
    if n > MAX_LEVEL {
        return Err(Error::Argument(format!("level {n} exceeds {MAX_LEVEL}")));
    }
    let full = t.floor_count(n);
    let mut times: Vec<Dyadic> = (0..=full).map(|j| Dyadic::grid_point(j, n)).collect();
    if *times.last().expect("grid contains 0") < t {
        times.push(t);
    }
    Ok(DyadicGrid { t, n, times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_piece(cut: &str, a: Vec<Complex64>, b: Vec<Complex64>) -> StepFunction {
        StepFunction::new(a.len(), vec![d(cut)], vec![a, b]).unwrap()
    }

    #[test]
    fn dyadic_parsing_and_arithmetic() {
        assert_eq!(d("3/8"), Dyadic::new(3, 3).unwrap());
        assert_eq!(d("6/2^4"), d("3/8"));
        assert_eq!(d("4/8"), d("1/2"));
        assert_eq!(d("2"), Dyadic::from_int(2));
        assert!("1/3".parse::<Dyadic>().is_err());
        assert!("x".parse::<Dyadic>().is_err());
        assert_eq!(d("1/4") + d("1/16"), d("5/16"));
        assert_eq!(d("5/16") - d("1/4"), d("1/16"));
        assert!(d("5/16") < d("3/8"));
        assert_eq!(Dyadic::from_f64(0.3125).unwrap(), d("5/16"));
        assert!(Dyadic::from_f64(1e-30).is_err());
        assert!(Dyadic::from_f64(f64::NAN).is_err());
        assert_eq!(d("5/16").floor_to(2), d("1/4"));
        assert_eq!(d("5/16").floor_count(2), 1);
        assert_eq!(d("3/2").to_string(), "3/2^1");
    }

    #[test]
    fn order_examples() {
        assert_eq!(StepFunction::constant(vec![c(1.0, 0.0)]).order(), 0);
        assert_eq!(two_piece("3/8", vec![c(1.0, 0.0)], vec![c(2.0, 0.0)]).order(), 3);
        let f = StepFunction::new(
            1,
            vec![d("1/2"), d("3/4")],
            vec![vec![c(0.0, 0.0)], vec![c(1.0, 0.0)], vec![c(0.0, 0.0)]],
        )
        .unwrap();
        assert_eq!(f.order(), 2);
        // A jump on an integer time does not raise the order.
        assert_eq!(two_piece("1", vec![c(1.0, 0.0)], vec![c(0.0, 0.0)]).order(), 0);
    }

    #[test]
    fn equal_neighbours_are_merged() {
        let f = two_piece("1/8", vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]);
        assert!(f.is_constant());
        assert_eq!(f.order(), 0);
    }

    #[test]
    fn construction_errors() {
        assert!(StepFunction::new(1, vec![d("1/2"), d("1/4")], vec![vec![ZERO]; 3]).is_err());
        assert!(StepFunction::new(1, vec![Dyadic::ZERO], vec![vec![ZERO]; 2]).is_err());
        assert!(StepFunction::new(1, vec![d("1/2")], vec![vec![ZERO]; 1]).is_err());
        assert!(StepFunction::new(2, vec![], vec![vec![ZERO]]).is_err());
    }

    #[test]
    fn right_continuity() {
        let f = two_piece("1/4", vec![c(1.0, 0.0)], vec![c(2.0, 0.0)]);
        assert_eq!(f.eval(d("1/4"))[0], c(2.0, 0.0));
        assert_eq!(f.eval(d("1/8"))[0], c(1.0, 0.0));
        assert_eq!(f.eval_f64(0.2499)[0], c(1.0, 0.0));
    }

    #[test]
    fn grid_examples() {
        let g = dyadic_grid(Dyadic::ONE, 1).unwrap();
        assert_eq!(g.times, vec![Dyadic::ZERO, d("1/2"), Dyadic::ONE]);
        assert_eq!(g.partial_width(), Dyadic::ZERO);

        let g = dyadic_grid(d("5/16"), 2).unwrap();
        assert_eq!(g.t0(), d("1/4"));
        assert_eq!(g.times, vec![Dyadic::ZERO, d("1/4"), d("5/16")]);
        assert_eq!(g.partial_width(), d("1/16"));

        let g = dyadic_grid(Dyadic::ZERO, 5).unwrap();
        assert_eq!(g.times, vec![Dyadic::ZERO]);
        assert_eq!(g.full_steps(), 0);
        assert!(dyadic_grid(d("-1/2"), 1).is_err());
    }

    #[test]
    fn merge_examples() {
        let a = StepFunction::zero(1);
        assert!(merge_breakpoints(&a, &a, Dyadic::ONE).unwrap().is_empty());
        let f = two_piece("1/4", vec![ZERO], vec![c(1.0, 0.0)]);
        let g = two_piece("1/2", vec![ZERO], vec![c(1.0, 0.0)]);
        assert_eq!(merge_breakpoints(&f, &g, Dyadic::ONE).unwrap(), vec![d("1/4"), d("1/2")]);
        let h = two_piece("1", vec![ZERO], vec![c(1.0, 0.0)]);
        assert!(merge_breakpoints(&h, &a, Dyadic::ONE).unwrap().is_empty());
        assert!(merge_breakpoints(&a, &StepFunction::zero(2), Dyadic::ONE).is_err());
    }

    #[test]
    fn direct_sum_examples() {
        let f1 = two_piece("1/4", vec![c(1.0, 0.0)], vec![c(2.0, 1.0)]);
        let f2 = StepFunction::zero(2);
        let s = f1.direct_sum(&f2);
        assert_eq!(s.dim_k(), 3);
        assert_eq!(s.eval(Dyadic::ZERO), &[c(1.0, 0.0), ZERO, ZERO]);
        assert_eq!(s.eval(d("1/2")), &[c(2.0, 1.0), ZERO, ZERO]);

        let g2 = two_piece("5/8", vec![c(0.0, 1.0)], vec![c(3.0, 0.0)]);
        let s = f1.direct_sum(&g2);
        assert_eq!(s.order(), f1.order().max(g2.order()));
        let (a, b) = s.split(1);
        assert_eq!(a, f1);
        assert_eq!(b, g2);
    }

    #[test]
    fn restrict_and_shift() {
        let f = StepFunction::new(
            1,
            vec![d("1/4"), d("3/4")],
            vec![vec![c(1.0, 0.0)], vec![c(2.0, 0.0)], vec![c(3.0, 0.0)]],
        )
        .unwrap();
        let r = f.restrict(d("1/8"), d("1/2"));
        assert_eq!(r.breakpoints(), &[d("1/8"), d("1/4"), d("1/2")]);
        assert_eq!(r.eval(d("1/16"))[0], ZERO);
        assert_eq!(r.eval(d("1/8"))[0], c(1.0, 0.0));
        assert_eq!(r.eval(d("3/8"))[0], c(2.0, 0.0));
        assert_eq!(r.eval(d("1/2"))[0], ZERO);

        let r = f.restrict(Dyadic::ZERO, Dyadic::ONE);
        assert_eq!(r.breakpoints(), &[d("1/4"), d("3/4"), Dyadic::ONE]);
        assert_eq!(r.eval(d("7/8"))[0], c(3.0, 0.0));

        let s = f.shift(d("1/2"));
        assert_eq!(s.breakpoints(), &[d("1/4")]);
        assert_eq!(s.eval(Dyadic::ZERO)[0], c(2.0, 0.0));
        assert_eq!(s.eval(d("1/4"))[0], c(3.0, 0.0));
    }

    #[test]
    fn exp_inner_closed_forms() {
        let t = Dyadic::ONE;
        let f = ExpVectorDesc::normalized_on(two_piece("1/2", vec![c(1.0, 2.0)], vec![c(-1.0, 0.5)]), t).unwrap();
        assert!((exp_inner(&f, &f).unwrap() - c(1.0, 0.0)).norm() < 1e-15);

        let cval = vec![c(0.3, -0.4), c(1.0, 0.0)];
        let zero = ExpVectorDesc::normalized_on(StepFunction::zero(2), d("3/4")).unwrap();
        let g = ExpVectorDesc::normalized_on(StepFunction::constant(cval.clone()), d("3/4")).unwrap();
        let want = (-0.75 * norm_sqr(&cval) / 2.0).exp();
        assert!((exp_inner(&zero, &g).unwrap() - c(want, 0.0)).norm() < 1e-15);

        let un = ExpVectorDesc::new(StepFunction::zero(2), Dyadic::ZERO, t, false).unwrap();
        assert!(exp_inner(&un, &g).is_err());
        let other_dim = ExpVectorDesc::normalized_on(StepFunction::zero(1), t).unwrap();
        assert!(exp_inner(&other_dim, &g).is_err());
    }

    // Midpoint quadrature on a fine uniform grid, independent of the
    // piecewise-exact integration.
    fn quadrature_exponent(f: &StepFunction, g: &StepFunction, t: f64, cells: usize) -> Complex64 {
        let h = t / cells as f64;
        let mut fg = ZERO;
        let mut ff = 0.0;
        let mut gg = 0.0;
        for i in 0..cells {
            let x = (i as f64 + 0.5) * h;
            let (a, b) = (f.eval_f64(x), g.eval_f64(x));
            fg += inner(a, b) * h;
            ff += norm_sqr(a) * h;
            gg += norm_sqr(b) * h;
        }
        fg - c(0.5 * (ff + gg), 0.0)
    }

    #[test]
    fn exp_inner_matches_quadrature() {
        let f = two_piece("3/8", vec![c(0.5, 0.1), c(0.0, 1.0)], vec![c(-0.2, 0.3), c(0.7, 0.0)]);
        let g = two_piece("5/8", vec![c(1.0, -0.5), c(0.2, 0.2)], vec![c(0.0, 0.0), c(-0.4, 0.9)]);
        let t = Dyadic::ONE;
        let got = exp_inner(
            &ExpVectorDesc::normalized_on(f.clone(), t).unwrap(),
            &ExpVectorDesc::normalized_on(g.clone(), t).unwrap(),
        )
        .unwrap();
        let want = quadrature_exponent(&f, &g, 1.0, 1 << 14).exp();
        assert!((got - want).norm() < 1e-12, "{got} vs {want}");
    }

    fn arb_step() -> impl Strategy<Value = StepFunction> {
        (prop::collection::btree_set(1i64..32, 0..4), prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 10)).prop_map(
            |(cuts, vals)| {
                let bps: Vec<Dyadic> = cuts.into_iter().map(|j| Dyadic::grid_point(j, 5)).collect();
                let values = (0..=bps.len()).map(|i| vec![c(vals[i].0, vals[i].1)]).collect();
                StepFunction::new(1, bps, values).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn grid_endpoints_bracket_t(num in 0i64..5000, exp in 0u32..12, n in 0u32..14) {
            let t = Dyadic::new(num, exp).unwrap();
            let g = dyadic_grid(t, n).unwrap();
            let t0 = g.t_k(0);
            let t1 = g.t_k(1);
            prop_assert!(t0 <= t && t < t1);
            prop_assert_eq!(t1 - t0, g.step());
            let g2 = dyadic_grid(t, n + 1).unwrap();
            prop_assert!(t0 <= g2.t_k(0));
            prop_assert!(g2.t_k(1) <= t1);
            prop_assert!(g.times.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(*g.times.last().unwrap(), t);
        }

        #[test]
        fn normalized_inner_is_bounded(f in arb_step(), g in arb_step()) {
            let t = Dyadic::ONE;
            let z = exp_inner(
                &ExpVectorDesc::normalized_on(f, t).unwrap(),
                &ExpVectorDesc::normalized_on(g, t).unwrap(),
            ).unwrap();
            prop_assert!(z.norm() <= 1.0 + 1e-14);
        }

        #[test]
        fn order_zero_iff_constant_on_unit_interval(f in arb_step()) {
            prop_assert_eq!(f.order() == 0, f.is_constant());
        }
    }
}

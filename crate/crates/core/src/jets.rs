//! Multivariate truncated Taylor series ("jets") in up to three variables.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f / α!` of a scalar function
//! at an expansion point, for every multi-index `α` with `|α| <= order`.
//! Coefficients are laid out densely in graded-lexicographic order, so a jet of
//! order `q` is a prefix of the same jet at any higher order.
//!
//! Arithmetic follows truncated power-series semantics: multiplication is the
//! Cauchy product cut at `order`, and elementary functions are composed by
//! Horner evaluation of their univariate series in the nilpotent part.
//! Combining jets of different orders truncates to the smaller one; the
//! checked [`arithmetic`] entry point rejects such mismatches instead.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::OnceLock;

use thiserror::Error;

/// Largest supported number of variables.
pub const MAX_VARS: usize = 3;
/// Largest supported truncation order.
pub const MAX_ORDER: usize = 8;
/// Order used when none is requested.
pub const DEFAULT_ORDER: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("variable index {index} out of range for {nvars} variables")]
    IndexOutOfRange { index: usize, nvars: usize },
    #[error("unsupported jet shape: {nvars} variables, order {order}")]
    UnsupportedShape { nvars: usize, order: usize },
    #[error("jet shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("{func}: argument {value} outside the domain")]
    Domain { func: &'static str, value: f64 },
    #[error("division by a jet with zero constant term")]
    DivisionByZero,
    #[error("cannot differentiate an order-0 jet")]
    OrderExhausted,
    #[error("multi-index degree {degree} exceeds jet order {order}")]
    DegreeOverflow { degree: usize, order: usize },
}

/// Exponent vector of a monomial; unused trailing slots are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    exponents: [u8; MAX_VARS],
}

impl MultiIndex {
    pub fn new(exponents: &[usize]) -> Self {
        assert!(exponents.len() <= MAX_VARS, "too many exponents");
        let mut e = [0u8; MAX_VARS];
        for (slot, &x) in e.iter_mut().zip(exponents) {
            *slot = u8::try_from(x).expect("exponent fits in u8");
        }
        Self { exponents: e }
    }

    pub fn zero() -> Self {
        Self { exponents: [0; MAX_VARS] }
    }

    pub fn unit(i: usize) -> Self {
        let mut e = [0u8; MAX_VARS];
        e[i] = 1;
        Self { exponents: e }
    }

    pub fn exponent(&self, i: usize) -> usize {
        self.exponents[i] as usize
    }

    pub fn exponents(&self) -> [usize; MAX_VARS] {
        self.exponents.map(usize::from)
    }

    pub fn degree(&self) -> usize {
        self.exponents.iter().map(|&x| x as usize).sum()
    }

    /// `α!` = product of the factorials of the exponents.
    pub fn factorial(&self) -> f64 {
        self.exponents.iter().map(|&x| factorial(x as usize)).product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.exponents[0], self.exponents[1], self.exponents[2])
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Precomputed indexing tables for one (nvars, order) pair.
#[derive(Debug)]
pub struct Layout {
    nvars: usize,
    order: usize,
    indices: Vec<MultiIndex>,
    /// `(i, j, k)`: coefficient `i` times coefficient `j` contributes to `k`.
    products: Vec<(u16, u16, u16)>,
    /// For each variable, entries `(source, factor)` producing the partial
    /// derivative as a jet of order `order - 1`.
    partials: Vec<Vec<(u16, f64)>>,
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        for deg in 0..=order {
            enumerate_degree(nvars, deg, &mut Vec::new(), &mut indices);
        }
        let lookup = |m: &MultiIndex| indices.iter().position(|x| x == m);
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if a.degree() + b.degree() > order {
                    continue;
                }
                let mut sum = [0usize; MAX_VARS];
                for v in 0..MAX_VARS {
                    sum[v] = a.exponent(v) + b.exponent(v);
                }
                let k = lookup(&MultiIndex::new(&sum)).expect("sum within layout");
                products.push((i as u16, j as u16, k as u16));
            }
        }
        let mut partials = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut entries = Vec::new();
            if order > 0 {
                for m in indices.iter().filter(|m| m.degree() < order) {
                    let mut raised = m.exponents();
                    raised[v] += 1;
                    let src = lookup(&MultiIndex::new(&raised)).expect("raised index present");
                    entries.push((src as u16, raised[v] as f64));
                }
            }
            partials.push(entries);
        }
        Self { nvars, order, indices, products, partials }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        if m.degree() > self.order || (self.nvars..MAX_VARS).any(|v| m.exponent(v) != 0) {
            return None;
        }
        self.indices.iter().position(|x| x == m)
    }
}

fn enumerate_degree(nvars: usize, deg: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == nvars {
        prefix.push(deg);
        out.push(MultiIndex::new(prefix));
        prefix.pop();
        return;
    }
    for e in (0..=deg).rev() {
        prefix.push(e);
        enumerate_degree(nvars, deg - e, prefix, out);
        prefix.pop();
    }
}

fn layouts() -> &'static Vec<Vec<Layout>> {
    static LAYOUTS: OnceLock<Vec<Vec<Layout>>> = OnceLock::new();
    LAYOUTS.get_or_init(|| {
        (1..=MAX_VARS)
            .map(|n| (0..=MAX_ORDER).map(|o| Layout::build(n, o)).collect())
            .collect()
    })
}

/// Shared layout for `(nvars, order)`.
pub fn layout(nvars: usize, order: usize) -> Result<&'static Layout, JetError> {
    if nvars == 0 || nvars > MAX_VARS || order > MAX_ORDER {
        return Err(JetError::UnsupportedShape { nvars, order });
    }
    Ok(&layouts()[nvars - 1][order])
}

/// Binary operations accepted by [`arithmetic`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Elementary functions understood by [`Jet::elementary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Elementary {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Elementary {
    pub const ALL: [Elementary; 9] = [
        Elementary::Sin,
        Elementary::Cos,
        Elementary::Tan,
        Elementary::Exp,
        Elementary::Log,
        Elementary::Sqrt,
        Elementary::Sinh,
        Elementary::Cosh,
        Elementary::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Tan => "tan",
            Elementary::Exp => "exp",
            Elementary::Log => "log",
            Elementary::Sqrt => "sqrt",
            Elementary::Sinh => "sinh",
            Elementary::Cosh => "cosh",
            Elementary::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Plain floating-point evaluation; NaN outside the domain.
    pub fn apply_f64(self, x: f64) -> f64 {
        match self {
            Elementary::Sin => x.sin(),
            Elementary::Cos => x.cos(),
            Elementary::Tan => x.tan(),
            Elementary::Exp => x.exp(),
            Elementary::Log => {
                if x > 0.0 {
                    x.ln()
                } else {
                    f64::NAN
                }
            }
            Elementary::Sqrt => {
                if x > 0.0 {
                    x.sqrt()
                } else {
                    f64::NAN
                }
            }
            Elementary::Sinh => x.sinh(),
            Elementary::Cosh => x.cosh(),
            Elementary::Tanh => x.tanh(),
        }
    }
}

/// Truncated multivariate Taylor expansion of a scalar at a point.
#[derive(Clone)]
pub struct Jet {
    layout: &'static Layout,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.nvars())
            .field("order", &self.order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn constant(value: f64, nvars: usize, order: usize) -> Result<Self, JetError> {
        let layout = layout(nvars, order)?;
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Ok(Self { layout, coeffs })
    }

    /// The coordinate function `u_i` expanded at `u_i = value`.
    pub fn variable(i: usize, value: f64, nvars: usize, order: usize) -> Result<Self, JetError> {
        if i >= nvars {
            return Err(JetError::IndexOutOfRange { index: i, nvars });
        }
        let mut jet = Self::constant(value, nvars, order)?;
        if order >= 1 {
            let pos = jet.layout.position(&MultiIndex::unit(i)).expect("degree-one index");
            jet.coeffs[pos] = 1.0;
        }
        Ok(jet)
    }

    /// All coordinate variables expanded at `point`.
    pub fn variables(point: &[f64], order: usize) -> Result<Vec<Self>, JetError> {
        (0..point.len())
            .map(|i| Self::variable(i, point[i], point.len(), order))
            .collect()
    }

    pub fn from_coeffs(nvars: usize, order: usize, coeffs: Vec<f64>) -> Result<Self, JetError> {
        let layout = layout(nvars, order)?;
        if coeffs.len() != layout.len() {
            return Err(JetError::ShapeMismatch(nvars, order, nvars, coeffs.len()));
        }
        Ok(Self { layout, coeffs })
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &'static Layout {
        self.layout
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Stored Taylor coefficient at `m` (zero beyond the stored support).
    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.layout.position(m).map_or(0.0, |p| self.coeffs[p])
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// A constant jet with the same shape.
    pub fn lift(&self, value: f64) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = value;
        Self { layout: self.layout, coeffs }
    }

    pub fn zero_like(&self) -> Self {
        self.lift(0.0)
    }

    /// The same expansion cut at a lower order.
    pub fn truncate(&self, order: usize) -> Self {
        if order >= self.order() {
            return self.clone();
        }
        let layout = layout(self.nvars(), order).expect("smaller order is supported");
        Self { layout, coeffs: self.coeffs[..layout.len()].to_vec() }
    }

    /// `α! · coeff(α)`, the actual partial derivative at the expansion point.
    pub fn derivative(&self, m: &MultiIndex) -> Result<f64, JetError> {
        if m.degree() > self.order() {
            return Err(JetError::DegreeOverflow { degree: m.degree(), order: self.order() });
        }
        Ok(m.factorial() * self.coeff(m))
    }

    /// Partial derivative in variable `v`, as a jet of one lower order.
    pub fn partial(&self, v: usize) -> Result<Self, JetError> {
        if v >= self.nvars() {
            return Err(JetError::IndexOutOfRange { index: v, nvars: self.nvars() });
        }
        if self.order() == 0 {
            return Err(JetError::OrderExhausted);
        }
        let target = layout(self.nvars(), self.order() - 1)?;
        let coeffs = self.layout.partials[v]
            .iter()
            .map(|&(src, factor)| factor * self.coeffs[src as usize])
            .collect();
        Ok(Self { layout: target, coeffs })
    }

    /// Gradient as jets of one lower order.
    pub fn gradient(&self) -> Result<Vec<Self>, JetError> {
        (0..self.nvars()).map(|v| self.partial(v)).collect()
    }

    fn aligned<'a>(&'a self, other: &'a Self) -> (std::borrow::Cow<'a, Self>, std::borrow::Cow<'a, Self>) {
        use std::borrow::Cow;
        assert_eq!(self.nvars(), other.nvars(), "jets over different variable counts");
        match self.order().cmp(&other.order()) {
            std::cmp::Ordering::Equal => (Cow::Borrowed(self), Cow::Borrowed(other)),
            std::cmp::Ordering::Less => (Cow::Borrowed(self), Cow::Owned(other.truncate(self.order()))),
            std::cmp::Ordering::Greater => (Cow::Owned(self.truncate(other.order())), Cow::Borrowed(other)),
        }
    }

    fn mul_same(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.products {
            out[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Self { layout: self.layout, coeffs: out }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { layout: self.layout, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn square(&self) -> Self {
        self.mul_same(self)
    }

    /// Horner evaluation of `Σ_k series[k] h^k` with `h = self - value()`.
    fn compose(&self, series: &[f64]) -> Self {
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let order = self.order();
        let mut acc = self.lift(series[order]);
        for k in (0..order).rev() {
            acc = acc.mul_same(&h);
            acc.coeffs[0] += series[k];
        }
        acc
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        let series: Vec<f64> = (0..=self.order()).map(|k| e / factorial(k)).collect();
        self.compose(&series)
    }

    pub fn ln(&self) -> Result<Self, JetError> {
        let a = self.value();
        if !(a > 0.0) {
            return Err(JetError::Domain { func: "log", value: a });
        }
        let mut series = vec![a.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            series.push(sign / (k as f64 * a.powi(k as i32)));
        }
        Ok(self.compose(&series))
    }

    fn cyclic(&self, cycle: [f64; 4]) -> Self {
        let series: Vec<f64> = (0..=self.order()).map(|k| cycle[k % 4] / factorial(k)).collect();
        self.compose(&series)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.cyclic([s, c, -s, -c])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        self.cyclic([c, -s, -c, s])
    }

    pub fn sinh(&self) -> Self {
        let a = self.value();
        self.cyclic([a.sinh(), a.cosh(), a.sinh(), a.cosh()])
    }

    pub fn cosh(&self) -> Self {
        let a = self.value();
        self.cyclic([a.cosh(), a.sinh(), a.cosh(), a.sinh()])
    }

    pub fn tan(&self) -> Result<Self, JetError> {
        let c = self.cos();
        if c.value().abs() < 1e-300 {
            return Err(JetError::Domain { func: "tan", value: self.value() });
        }
        Ok(self.sin().mul_same(&c.recip()?))
    }

    pub fn tanh(&self) -> Self {
        let c = self.cosh();
        self.sinh().mul_same(&c.recip().expect("cosh is positive"))
    }

    /// `self^r` for real `r`; requires a positive constant term.
    pub fn powf(&self, r: f64) -> Result<Self, JetError> {
        self.powf_named(r, "pow")
    }

    fn powf_named(&self, r: f64, func: &'static str) -> Result<Self, JetError> {
        let a = self.value();
        if !(a > 0.0) {
            return Err(JetError::Domain { func, value: a });
        }
        Ok(self.binomial_series(r))
    }

    // (a + h)^r = a^r Σ C(r, k) (h / a)^k; valid for any nonzero a when r is an integer.
    fn binomial_series(&self, r: f64) -> Self {
        let a = self.value();
        let mut series = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        let base = if r == r.trunc() { a.powi(r as i32) } else { a.powf(r) };
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (r - (k as f64 - 1.0)) / k as f64;
            }
            series.push(base * binom / a.powi(k as i32));
        }
        self.compose(&series)
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        self.powf_named(0.5, "sqrt")
    }

    pub fn recip(&self) -> Result<Self, JetError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(JetError::DivisionByZero);
        }
        Ok(self.binomial_series(-1.0))
    }

    /// Integer power; negative exponents need a nonzero constant term.
    pub fn powi(&self, n: i32) -> Result<Self, JetError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = self.lift(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_same(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_same(&base);
            }
        }
        Ok(result)
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, JetError> {
        Ok(self * &other.recip()?)
    }

    pub fn elementary(&self, f: Elementary) -> Result<Self, JetError> {
        match f {
            Elementary::Sin => Ok(self.sin()),
            Elementary::Cos => Ok(self.cos()),
            Elementary::Tan => self.tan(),
            Elementary::Exp => Ok(self.exp()),
            Elementary::Log => self.ln(),
            Elementary::Sqrt => self.sqrt(),
            Elementary::Sinh => Ok(self.sinh()),
            Elementary::Cosh => Ok(self.cosh()),
            Elementary::Tanh => Ok(self.tanh()),
        }
    }
}

/// Checked binary arithmetic: both operands must share nvars and order.
pub fn arithmetic(a: &Jet, b: &Jet, op: BinaryOp) -> Result<Jet, JetError> {
    if a.nvars() != b.nvars() || a.order() != b.order() {
        return Err(JetError::ShapeMismatch(a.nvars(), a.order(), b.nvars(), b.order()));
    }
    Ok(match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a.checked_div(b)?,
    })
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let (a, b) = self.aligned(rhs);
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect();
        Jet { layout: a.layout, coeffs }
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let (a, b) = self.aligned(rhs);
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect();
        Jet { layout: a.layout, coeffs }
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let (a, b) = self.aligned(rhs);
        a.mul_same(&b)
    }
}

/// Panics when the divisor has a zero constant term; use
/// [`Jet::checked_div`] where that can happen.
impl Div<&Jet> for &Jet {
    type Output = Jet;
    fn div(self, rhs: &Jet) -> Jet {
        self.checked_div(rhs).expect("jet division by zero constant term")
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Add<f64> for &Jet {
    type Output = Jet;
    fn add(self, rhs: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += rhs;
        out
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self + (-rhs)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self + (-rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl Mul<&Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        rhs.scale(self)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Div<f64> for &Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self.scale(1.0 / rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        if self.order() <= rhs.order() {
            for (c, r) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
                *c += r;
            }
        } else {
            *self = &*self + rhs;
        }
    }
}

impl AddAssign<Jet> for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        *self += &rhs;
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        if self.order() <= rhs.order() {
            for (c, r) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
                *c -= r;
            }
        } else {
            *self = &*self - rhs;
        }
    }
}

impl SubAssign<Jet> for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        *self -= &rhs;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, rhs: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
    }
}

/// Sum of jets; `None` for an empty iterator.
pub fn sum<'a, I: IntoIterator<Item = &'a Jet>>(items: I) -> Option<Jet> {
    let mut it = items.into_iter();
    let mut acc = it.next()?.clone();
    for j in it {
        acc += j;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: usize, v: f64, n: usize, o: usize) -> Jet {
        Jet::variable(i, v, n, o).unwrap()
    }

    #[test]
    fn layout_sizes_and_prefix_property() {
        assert_eq!(layout(3, 5).unwrap().len(), 56);
        assert_eq!(layout(2, 2).unwrap().len(), 6);
        let lo = layout(3, 3).unwrap();
        let hi = layout(3, 5).unwrap();
        assert_eq!(&hi.indices()[..lo.len()], lo.indices());
        assert_eq!(hi.indices()[1], MultiIndex::new(&[1, 0, 0]));
    }

    #[test]
    fn make_variable_seed() {
        let x = var(0, 3.0, 2, 2);
        assert_eq!(x.value(), 3.0);
        assert_eq!(x.coeff(&MultiIndex::new(&[1, 0])), 1.0);
        assert_eq!(x.coeffs().iter().filter(|c| **c != 0.0).count(), 2);
        assert!(matches!(
            Jet::variable(3, 1.0, 3, 5),
            Err(JetError::IndexOutOfRange { index: 3, nvars: 3 })
        ));
    }

    #[test]
    fn bilinear_product() {
        let p = &var(0, 2.0, 2, 3) * &var(1, 5.0, 2, 3);
        assert_eq!(p.value(), 10.0);
        assert_eq!(p.derivative(&MultiIndex::new(&[1, 0])).unwrap(), 5.0);
        assert_eq!(p.derivative(&MultiIndex::new(&[0, 1])).unwrap(), 2.0);
        assert_eq!(p.coeff(&MultiIndex::new(&[1, 1])), 1.0);
        assert_eq!(p.derivative(&MultiIndex::new(&[1, 1])).unwrap(), 1.0);
    }

    #[test]
    fn reciprocal_is_geometric_series() {
        let r = var(0, 2.0, 1, 4).recip().unwrap();
        assert_eq!(r.coeffs(), &[0.5, -0.25, 0.125, -0.0625, 0.03125]);
    }

    #[test]
    fn square_of_sum_mixed_coefficient() {
        let s = &var(0, 0.3, 2, 3) + &var(1, -0.4, 2, 3);
        let sq = s.square();
        assert_eq!(sq.coeff(&MultiIndex::new(&[1, 1])), 2.0);
        assert_eq!(sq.derivative(&MultiIndex::new(&[1, 1])).unwrap(), 2.0);
    }

    #[test]
    fn exponential_series() {
        let e = var(0, 0.0, 1, 5).exp();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];
        for (c, x) in e.coeffs().iter().zip(expect) {
            assert!((c - x).abs() < 1e-15);
        }
        assert!((e.derivative(&MultiIndex::new(&[3])).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn domain_errors_name_the_function() {
        let x = var(0, -1.0, 1, 3);
        assert_eq!(x.sqrt().unwrap_err(), JetError::Domain { func: "sqrt", value: -1.0 });
        assert_eq!(x.ln().unwrap_err(), JetError::Domain { func: "log", value: -1.0 });
        assert!(var(0, 0.0, 1, 3).recip().is_err());
        assert!(x.powi(3).is_ok());
    }

    #[test]
    fn derivative_overflow_and_exhaustion() {
        let x = var(0, 1.0, 2, 2);
        assert!(matches!(
            x.derivative(&MultiIndex::new(&[2, 1])),
            Err(JetError::DegreeOverflow { degree: 3, order: 2 })
        ));
        let c = Jet::constant(1.0, 2, 0).unwrap();
        assert_eq!(c.partial(0).unwrap_err(), JetError::OrderExhausted);
    }

    #[test]
    fn checked_arithmetic_rejects_mismatch() {
        let a = var(0, 1.0, 2, 3);
        let b = var(0, 1.0, 2, 2);
        assert!(arithmetic(&a, &b, BinaryOp::Add).is_err());
        // operators truncate instead
        assert_eq!((&a + &b).order(), 2);
    }

    #[test]
    fn partial_lowers_order() {
        let x = var(0, 0.7, 2, 4);
        let y = var(1, -0.2, 2, 4);
        let f = (&x * &x) * &y;
        let fx = f.partial(0).unwrap();
        assert_eq!(fx.order(), 3);
        assert!((fx.value() - 2.0 * 0.7 * -0.2).abs() < 1e-15);
        let fxy = fx.partial(1).unwrap();
        assert!((fxy.value() - 1.4).abs() < 1e-15);
    }

    #[test]
    fn powi_matches_repeated_multiplication() {
        let x = &var(0, 0.4, 3, 5) + &var(2, 1.1, 3, 5).sin();
        let p = x.powi(3).unwrap();
        let q = &(&x * &x) * &x;
        for (a, b) in p.coeffs().iter().zip(q.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
        let inv = x.powi(-2).unwrap();
        let one = &inv * &(&x * &x);
        assert!((one.value() - 1.0).abs() < 1e-14);
        assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));
    }
}

//! Expression language for immersions, and the immersion spec format.
//!
//! Grammar (precedence from loosest to tightest):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr ')' | '(' expr ')'
//! vector  := '(' expr (',' expr)* ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. Variables are `u1`, `u2`, `u3`; `pi` is a constant; any other
//! identifier is a parameter that must be bound when the spec is built.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jets::{Elementary, Jet, JetError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Param(String),
    /// Zero-based coordinate index (`u1` is `Var(0)`).
    Var(usize),
    Neg(Expr),
    Unary(Elementary, Expr),
    Binary(BinOp, Expr, Expr),
}

/// Shared, immutable expression tree. Cloning is cheap and preserves sharing,
/// which evaluation exploits through a per-call memo.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        Expr(Arc::new(Node::Const(c)))
    }

    pub fn var(i: usize) -> Self {
        Expr(Arc::new(Node::Var(i)))
    }

    pub fn param(name: &str) -> Self {
        Expr(Arc::new(Node::Param(name.to_string())))
    }

    pub fn unary(f: Elementary, a: &Expr) -> Self {
        Expr(Arc::new(Node::Unary(f, a.clone())))
    }

    pub fn binary(op: BinOp, a: &Expr, b: &Expr) -> Self {
        Expr(Arc::new(Node::Binary(op, a.clone(), b.clone())))
    }

    pub fn neg(a: &Expr) -> Self {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            _ => Expr(Arc::new(Node::Neg(a.clone()))),
        }
    }

    pub fn pow(&self, e: &Expr) -> Self {
        Expr::binary(BinOp::Pow, self, e)
    }

    pub fn powi(&self, n: i32) -> Self {
        self.pow(&Expr::constant(n as f64))
    }

    pub fn apply(&self, f: Elementary) -> Self {
        Expr::unary(f, self)
    }

    fn key(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best = None;
        self.visit(&mut |n| {
            if let Node::Var(i) = n {
                best = Some(best.map_or(*i, |b: usize| b.max(*i)));
            }
        });
        best
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |n| {
            if let Node::Param(p) = n {
                out.insert(p.clone());
            }
        });
        out
    }

    /// True when no coordinate variable occurs.
    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    fn visit(&self, f: &mut dyn FnMut(&Node)) {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key() as usize) {
                continue;
            }
            f(e.node());
            match e.node() {
                Node::Neg(a) | Node::Unary(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                _ => {}
            }
        }
    }

    /// Replace every `Var(i)` by `vars[i]`, keeping shared subtrees shared.
    pub fn substitute(&self, vars: &[Expr]) -> Expr {
        let mut memo = HashMap::new();
        self.substitute_memo(vars, &mut memo)
    }

    fn substitute_memo(&self, vars: &[Expr], memo: &mut HashMap<*const Node, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.key()) {
            return e.clone();
        }
        let out = match self.node() {
            Node::Var(i) => vars.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Node::Const(_) | Node::Param(_) => self.clone(),
            Node::Neg(a) => Expr(Arc::new(Node::Neg(a.substitute_memo(vars, memo)))),
            Node::Unary(f, a) => Expr::unary(*f, &a.substitute_memo(vars, memo)),
            Node::Binary(op, a, b) => {
                let a = a.substitute_memo(vars, memo);
                let b = b.substitute_memo(vars, memo);
                Expr::binary(*op, &a, &b)
            }
        };
        memo.insert(self.key(), out.clone());
        out
    }

    /// Evaluate with the given coordinate values and parameter bindings.
    pub fn eval<T: Scalar>(&self, vars: &[T], params: &BTreeMap<String, f64>) -> Result<T, EvalError> {
        Evaluator::new(vars, params).eval(self)
    }

    pub fn eval_f64(&self, vars: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        self.eval(vars, params)
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Binary(BinOp::Pow, ..) => 4,
            Node::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

/// Printed normal form: minimal parentheses, shortest round-trip numbers.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "-{:?}", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Param(p) => write!(f, "{p}"),
            Node::Var(i) => write!(f, "u{}", i + 1),
            Node::Neg(a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Node::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => {
                let p = self.precedence();
                // left operand: same precedence is fine for left-assoc ops;
                // power is right-assoc, so its left operand needs a tighter one
                let left_paren = if *op == BinOp::Pow { a.precedence() <= p } else { a.precedence() < p };
                let right_paren = match op {
                    BinOp::Pow => b.precedence() < 3,
                    _ => b.precedence() <= p,
                };
                if left_paren {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                let sym = op.symbol();
                if *op == BinOp::Pow {
                    write!(f, "{sym}")?;
                } else {
                    write!(f, " {sym} ")?;
                }
                if right_paren {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

macro_rules! expr_binop {
    ($tr:ident, $method:ident, $op:expr) => {
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, &self, &rhs)
            }
        }
        impl std::ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, &self, rhs)
            }
        }
        impl std::ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, &rhs)
            }
        }
        impl std::ops::$tr<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, &Expr::constant(rhs))
            }
        }
        impl std::ops::$tr<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::binary($op, &Expr::constant(self), rhs)
            }
        }
    };
}

expr_binop!(Add, add, BinOp::Add);
expr_binop!(Sub, sub, BinOp::Sub);
expr_binop!(Mul, mul, BinOp::Mul);
expr_binop!(Div, div, BinOp::Div);

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

/// Numeric carrier for expression evaluation (plain floats or jets).
pub trait Scalar: Clone {
    fn lift_like(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Result<Self, JetError>;
    fn negate(&self) -> Self;
    fn elementary(&self, f: Elementary) -> Result<Self, JetError>;
    fn powi(&self, n: i32) -> Result<Self, JetError>;
    fn powf(&self, r: f64) -> Result<Self, JetError>;
}

impl Scalar for f64 {
    fn lift_like(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self, JetError> {
        if *o == 0.0 {
            Err(JetError::DivisionByZero)
        } else {
            Ok(self / o)
        }
    }
    fn negate(&self) -> Self {
        -self
    }
    fn elementary(&self, f: Elementary) -> Result<Self, JetError> {
        let v = f.apply_f64(*self);
        if v.is_nan() && !self.is_nan() {
            Err(JetError::Domain { func: f.name(), value: *self })
        } else {
            Ok(v)
        }
    }
    fn powi(&self, n: i32) -> Result<Self, JetError> {
        if n < 0 && *self == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        Ok(f64::powi(*self, n))
    }
    fn powf(&self, r: f64) -> Result<Self, JetError> {
        if *self > 0.0 {
            Ok(f64::powf(*self, r))
        } else {
            Err(JetError::Domain { func: "pow", value: *self })
        }
    }
}

impl Scalar for Jet {
    fn lift_like(&self, c: f64) -> Self {
        self.lift(c)
    }
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self, JetError> {
        self.checked_div(o)
    }
    fn negate(&self) -> Self {
        -self
    }
    fn elementary(&self, f: Elementary) -> Result<Self, JetError> {
        Jet::elementary(self, f)
    }
    fn powi(&self, n: i32) -> Result<Self, JetError> {
        Jet::powi(self, n)
    }
    fn powf(&self, r: f64) -> Result<Self, JetError> {
        Jet::powf(self, r)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("variable u{} not supplied", .0 + 1)]
    MissingVariable(usize),
    #[error(transparent)]
    Jet(#[from] JetError),
}

struct Evaluator<'a, T> {
    vars: &'a [T],
    params: &'a BTreeMap<String, f64>,
    memo: HashMap<*const Node, T>,
}

impl<'a, T: Scalar> Evaluator<'a, T> {
    fn new(vars: &'a [T], params: &'a BTreeMap<String, f64>) -> Self {
        Self { vars, params, memo: HashMap::new() }
    }

    fn lift(&self, c: f64) -> T {
        match self.vars.first() {
            Some(v) => v.lift_like(c),
            None => panic!("evaluation needs at least one variable to fix the carrier shape"),
        }
    }

    fn constant_value(&self, e: &Expr) -> Result<f64, EvalError> {
        let zeros = vec![0.0; self.vars.len().max(1)];
        Evaluator::<f64>::new(&zeros, self.params).eval(e)
    }

    fn eval(&mut self, e: &Expr) -> Result<T, EvalError> {
        if let Some(v) = self.memo.get(&e.key()) {
            return Ok(v.clone());
        }
        let out = match e.node() {
            Node::Const(c) => self.lift(*c),
            Node::Param(p) => {
                let v = *self.params.get(p).ok_or_else(|| EvalError::UnboundParameter(p.clone()))?;
                self.lift(v)
            }
            Node::Var(i) => self.vars.get(*i).cloned().ok_or(EvalError::MissingVariable(*i))?,
            Node::Neg(a) => self.eval(a)?.negate(),
            Node::Unary(f, a) => self.eval(a)?.elementary(*f)?,
            Node::Binary(op, a, b) => {
                let x = self.eval(a)?;
                match op {
                    BinOp::Add => x.add(&self.eval(b)?),
                    BinOp::Sub => x.sub(&self.eval(b)?),
                    BinOp::Mul => x.mul(&self.eval(b)?),
                    BinOp::Div => x.div(&self.eval(b)?)?,
                    BinOp::Pow => {
                        if b.is_constant() {
                            let r = self.constant_value(b)?;
                            if r == r.trunc() && r.abs() <= 64.0 {
                                x.powi(r as i32)?
                            } else {
                                x.powf(r)?
                            }
                        } else {
                            let y = self.eval(b)?;
                            if !(x.value() > 0.0) {
                                return Err(JetError::Domain { func: "pow", value: x.value() }.into());
                            }
                            y.mul(&x.elementary(Elementary::Log)?).elementary(Elementary::Exp)?
                        }
                    }
                }
            }
        };
        self.memo.insert(e.key(), out.clone());
        Ok(out)
    }
}

/// Evaluate several expressions sharing one memo (shared subtrees are
/// computed once across components).
pub fn eval_many<T: Scalar>(exprs: &[Expr], vars: &[T], params: &BTreeMap<String, f64>) -> Vec<Result<T, EvalError>> {
    let mut ev = Evaluator::new(vars, params);
    exprs.iter().map(|e| ev.eval(e)).collect()
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at line {line}, column {col}: found {found}, expected one of: {}", expected.join(", "))]
    Syntax { line: usize, col: usize, found: String, expected: Vec<String> },
    #[error("unknown function `{name}` at line {line}, column {col}")]
    UnknownFunction { name: String, line: usize, col: usize },
    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },
    #[error("{ambient} needs {expected} components, got {found}")]
    ComponentCount { ambient: Ambient, expected: usize, found: usize },
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("component {component}: {source}")]
    Evaluation { component: usize, source: EvalError },
    #[error("domain violation: {0}")]
    Domain(#[from] DomainViolation),
    #[error("unknown immersion `{0}`")]
    UnknownImmersion(String),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Sym(c) => write!(f, "'{c}'"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str, line0: usize, col0: usize) -> Result<Vec<Lexed>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (line0, col0);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let start_col = col;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| DslError::Syntax {
                line,
                col: start_col,
                found: format!("malformed number `{s}`"),
                expected: vec!["number".into()],
            })?;
            col += i - start;
            out.push(Lexed { tok: Tok::Num(v), line, col: start_col });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Lexed { tok: Tok::Ident(chars[start..i].iter().collect()), line, col: start_col });
            continue;
        }
        if "+-*/^(),".contains(c) {
            out.push(Lexed { tok: Tok::Sym(c), line, col });
            col += 1;
            i += 1;
            continue;
        }
        return Err(DslError::Syntax {
            line,
            col,
            found: format!("character '{c}'"),
            expected: vec!["number".into(), "identifier".into(), "operator".into()],
        });
    }
    out.push(Lexed { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

const ATOM_START: [&str; 4] = ["number", "identifier", "'('", "'-'"];

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('u')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().map(|k| k - 1)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn error(&self, expected: &[&str]) -> DslError {
        let t = &self.toks[self.pos];
        DslError::Syntax {
            line: t.line,
            col: t.col,
            found: t.tok.to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char, also: &[&str]) -> Result<(), DslError> {
        if self.eat(c) {
            Ok(())
        } else {
            let mut exp: Vec<String> = vec![format!("'{c}'")];
            exp.extend(also.iter().map(|s| s.to_string()));
            let refs: Vec<&str> = exp.iter().map(String::as_str).collect();
            Err(self.error(&refs))
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = &lhs + &self.term()?;
            } else if self.eat('-') {
                lhs = &lhs - &self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = &lhs * &self.unary()?;
            } else if self.eat('/') {
                lhs = &lhs / &self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.eat('-') {
            let inner = self.unary()?;
            return Ok(Expr::neg(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(base.pow(&exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        let Lexed { tok, line, col } = &self.toks[self.pos];
        let (line, col) = (*line, *col);
        match tok.clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::constant(v))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if *self.peek() == Tok::Sym('(') {
                    let f = Elementary::from_name(&name)
                        .ok_or(DslError::UnknownFunction { name: name.clone(), line, col })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')', &["operator"])?;
                    return Ok(Expr::unary(f, &arg));
                }
                if Elementary::from_name(&name).is_some() {
                    return Err(self.error(&["'('"]));
                }
                if name == "pi" {
                    return Ok(Expr::constant(std::f64::consts::PI));
                }
                match variable_index(&name) {
                    Some(i) => Ok(Expr::var(i)),
                    None => Ok(Expr::param(&name)),
                }
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')', &["operator"])?;
                Ok(inner)
            }
            _ => Err(self.error(&ATOM_START)),
        }
    }

    fn finish(&self) -> Result<(), DslError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(self.error(&["operator", "end of input"]))
        }
    }
}

fn parse_expr_at(text: &str, line: usize, col: usize) -> Result<Expr, DslError> {
    let mut p = Parser { toks: lex(text, line, col)?, pos: 0 };
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parse a single scalar expression.
pub fn parse_expr(text: &str) -> Result<Expr, DslError> {
    parse_expr_at(text, 1, 1)
}

fn parse_components_at(text: &str, line: usize, col: usize) -> Result<Vec<Expr>, DslError> {
    let mut p = Parser { toks: lex(text, line, col)?, pos: 0 };
    p.expect('(', &[])?;
    let mut out = vec![p.expr()?];
    while p.eat(',') {
        out.push(p.expr()?);
    }
    p.expect(')', &["','", "operator"])?;
    p.finish()?;
    Ok(out)
}

/// Parse a parenthesized component list `(e1, e2, ...)`.
pub fn parse_components(text: &str) -> Result<Vec<Expr>, DslError> {
    parse_components_at(text, 1, 1)
}

/// Print components in the normal form accepted by [`parse_components`].
pub fn print_components(components: &[Expr]) -> String {
    let parts: Vec<String> = components.iter().map(Expr::to_string).collect();
    format!("({})", parts.join(", "))
}

// ---------------------------------------------------------------------------
// Immersion specs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Ambient {
    #[serde(rename = "EUC3")]
    Euc3,
    #[serde(rename = "SPH3")]
    Sph3,
    #[serde(rename = "HYP3")]
    Hyp3,
    #[serde(rename = "EUC4")]
    Euc4,
}

impl Ambient {
    pub fn components(self) -> usize {
        match self {
            Ambient::Euc3 | Ambient::Hyp3 => 3,
            Ambient::Sph3 | Ambient::Euc4 => 4,
        }
    }

    /// Dimension of the parameter domain for this ambient.
    pub fn domain_dim(self) -> usize {
        match self {
            Ambient::Euc4 => 3,
            _ => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "EUC3" => Some(Ambient::Euc3),
            "SPH3" => Some(Ambient::Sph3),
            "HYP3" => Some(Ambient::Hyp3),
            "EUC4" => Some(Ambient::Euc4),
            _ => None,
        }
    }
}

impl fmt::Display for Ambient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ambient::Euc3 => "EUC3",
            Ambient::Sph3 => "SPH3",
            Ambient::Hyp3 => "HYP3",
            Ambient::Euc4 => "EUC4",
        })
    }
}

/// Why a point is not admissible for a spec.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainViolation {
    #[error("point has {found} coordinates, domain has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("coordinate u{} = {value} outside [{lo}, {hi}]", .axis + 1)]
    OutsideBox { axis: usize, value: f64, lo: f64, hi: f64 },
    #[error("|u| = {norm} deviates from 1 (spherical ambient)")]
    UnitNorm { norm: f64 },
    #[error("third coordinate {x3} is not positive (hyperbolic ambient)")]
    NonPositiveHeight { x3: f64 },
    #[error("component {component} cannot be evaluated: {message}")]
    Evaluation { component: usize, message: String },
}

/// Unit-norm tolerance for spherical surfaces.
pub const SPHERE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionSpec {
    pub name: String,
    pub domain_dim: usize,
    pub ambient: Ambient,
    pub components: Vec<Expr>,
    pub params: BTreeMap<String, f64>,
    pub sample_box: Vec<(f64, f64)>,
}

impl ImmersionSpec {
    /// Build and validate a spec: structural checks, then the ambient
    /// constraints on a sample grid of the box.
    pub fn new(
        name: &str,
        ambient: Ambient,
        components: Vec<Expr>,
        params: BTreeMap<String, f64>,
        sample_box: Vec<(f64, f64)>,
    ) -> Result<Self, DslError> {
        let domain_dim = ambient.domain_dim();
        if components.len() != ambient.components() {
            return Err(DslError::ComponentCount {
                ambient,
                expected: ambient.components(),
                found: components.len(),
            });
        }
        if sample_box.len() != domain_dim {
            return Err(DslError::Invalid(format!(
                "box has {} intervals, domain dimension is {domain_dim}",
                sample_box.len()
            )));
        }
        for (axis, &(lo, hi)) in sample_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(DslError::Invalid(format!("bad interval [{lo}, {hi}] for u{}", axis + 1)));
            }
        }
        for c in &components {
            if let Some(i) = c.max_var() {
                if i >= domain_dim {
                    return Err(DslError::UnboundVariable { name: format!("u{}", i + 1) });
                }
            }
            if let Some(p) = c.params().into_iter().find(|p| !params.contains_key(p)) {
                return Err(DslError::UnboundVariable { name: p });
            }
        }
        let spec = Self { name: name.to_string(), domain_dim, ambient, components, params, sample_box };
        for point in spec.sample_grid(4) {
            spec.check_ambient(&point)?;
        }
        Ok(spec)
    }

    /// Tensor grid with `n` points per axis (endpoints included).
    pub fn sample_grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .sample_box
            .iter()
            .map(|&(lo, hi)| {
                if n <= 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>, DslError> {
        eval_many(&self.components, point, &self.params)
            .into_iter()
            .enumerate()
            .map(|(component, r)| r.map_err(|source| DslError::Evaluation { component, source }))
            .collect()
    }

    /// One jet per component, expanded at `point`.
    pub fn evaluate_jets(&self, point: &[f64], order: usize) -> Result<Vec<Jet>, DslError> {
        if point.len() != self.domain_dim {
            return Err(DomainViolation::Dimension { expected: self.domain_dim, found: point.len() }.into());
        }
        let vars = Jet::variables(point, order)
            .map_err(|e| DslError::Evaluation { component: 0, source: e.into() })?;
        eval_many(&self.components, &vars, &self.params)
            .into_iter()
            .enumerate()
            .map(|(component, r)| r.map_err(|source| DslError::Evaluation { component, source }))
            .collect()
    }

    fn check_ambient(&self, point: &[f64]) -> Result<(), DomainViolation> {
        let x = self.evaluate(point).map_err(|e| match e {
            DslError::Evaluation { component, source } => {
                DomainViolation::Evaluation { component, message: source.to_string() }
            }
            other => DomainViolation::Evaluation { component: 0, message: other.to_string() },
        })?;
        if let Some(component) = x.iter().position(|v| !v.is_finite()) {
            return Err(DomainViolation::Evaluation { component, message: "non-finite value".into() });
        }
        match self.ambient {
            Ambient::Sph3 => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > SPHERE_TOL {
                    return Err(DomainViolation::UnitNorm { norm });
                }
            }
            Ambient::Hyp3
                if !(x[2] > 0.0) => {
                    return Err(DomainViolation::NonPositiveHeight { x3: x[2] });
                }
            _ => {}
        }
        Ok(())
    }

    /// Box membership plus ambient constraints at `point`.
    pub fn validate_domain(&self, point: &[f64]) -> Result<(), DomainViolation> {
        if point.len() != self.domain_dim {
            return Err(DomainViolation::Dimension { expected: self.domain_dim, found: point.len() });
        }
        for (axis, (&value, &(lo, hi))) in point.iter().zip(&self.sample_box).enumerate() {
            if !(value >= lo && value <= hi) {
                return Err(DomainViolation::OutsideBox { axis, value, lo, hi });
            }
        }
        self.check_ambient(point)
    }

    pub fn with_box(&self, sample_box: Vec<(f64, f64)>) -> Result<Self, DslError> {
        Self::new(&self.name, self.ambient, self.components.clone(), self.params.clone(), sample_box)
    }

    /// Serialize to the key-value spec format read by [`parse_immersion`].
    pub fn to_text(&self) -> String {
        let bx: Vec<String> = self.sample_box.iter().map(|(lo, hi)| format!("{lo:?},{hi:?}")).collect();
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}: {v:?}")).collect();
        let mut s = format!(
            "name = \"{}\"\ndomain_dim = {}\nambient = {}\ncomponents = \"{}\"\nbox = [{}]\n",
            self.name,
            self.domain_dim,
            self.ambient,
            print_components(&self.components),
            bx.join("; ")
        );
        if !params.is_empty() {
            s.push_str(&format!("params = {{{}}}\n", params.join(", ")));
        }
        s
    }
}

pub fn evaluate_jets(spec: &ImmersionSpec, point: &[f64], order: usize) -> Result<Vec<Jet>, DslError> {
    spec.evaluate_jets(point, order)
}

pub fn validate_domain(spec: &ImmersionSpec, point: &[f64]) -> Result<(), DomainViolation> {
    spec.validate_domain(point)
}

/// One `key = value` entry of the line-oriented format.
#[derive(Clone, Debug, PartialEq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
    /// Column of the first character of `value`.
    pub col: usize,
}

/// Split a key-value document into entries; `#` starts a comment outside
/// double quotes.
pub fn parse_kv(text: &str) -> Result<Vec<KvEntry>, DslError> {
    let mut out: Vec<KvEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut in_quotes = false;
        let mut end = raw.len();
        for (i, c) in raw.char_indices() {
            match c {
                '"' => in_quotes = !in_quotes,
                '#' if !in_quotes => {
                    end = i;
                    break;
                }
                _ => {}
            }
        }
        let content = &raw[..end];
        if content.trim().is_empty() {
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| DslError::Config { line, message: "expected `key = value`".into() })?;
        let key = content[..eq].trim().to_string();
        if key.is_empty() {
            return Err(DslError::Config { line, message: "empty key".into() });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(DslError::Config { line, message: format!("duplicate key `{key}`") });
        }
        let rest = &content[eq + 1..];
        let lead = rest.len() - rest.trim_start().len();
        let col = raw[..eq + 1 + lead].chars().count() + 1;
        out.push(KvEntry { key, value: rest.trim().to_string(), line, col });
    }
    Ok(out)
}

/// Evaluate a constant expression (no coordinates) under `params`.
pub fn eval_constant(text: &str, params: &BTreeMap<String, f64>) -> Result<f64, DslError> {
    let e = parse_expr(text)?;
    if let Some(i) = e.max_var() {
        return Err(DslError::UnboundVariable { name: format!("u{}", i + 1) });
    }
    e.eval_f64(&[0.0], params).map_err(|source| match source {
        EvalError::UnboundParameter(name) => DslError::UnboundVariable { name },
        source => DslError::Evaluation { component: 0, source },
    })
}

fn unquote(entry: &KvEntry) -> Result<&str, DslError> {
    let v = entry.value.as_str();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        Ok(&v[1..v.len() - 1])
    } else {
        Err(DslError::Config { line: entry.line, message: format!("`{}` must be a quoted string", entry.key) })
    }
}

/// Parse `{a: 0.5, b: 1}` (values may be constant expressions).
pub fn parse_param_map(entry: &KvEntry) -> Result<BTreeMap<String, f64>, DslError> {
    let v = entry.value.trim();
    let inner = v
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| DslError::Config { line: entry.line, message: "params must be `{name: value, ...}`".into() })?;
    let mut out = BTreeMap::new();
    for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, val) = item
            .split_once(':')
            .ok_or_else(|| DslError::Config { line: entry.line, message: format!("bad param entry `{item}`") })?;
        let value = eval_constant(val.trim(), &BTreeMap::new())
            .map_err(|e| DslError::Config { line: entry.line, message: e.to_string() })?;
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}

/// Parse `[lo,hi; lo,hi; ...]`.
pub fn parse_box(entry: &KvEntry, params: &BTreeMap<String, f64>) -> Result<Vec<(f64, f64)>, DslError> {
    let v = entry.value.trim();
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| DslError::Config { line: entry.line, message: "box must be `[lo,hi; ...]`".into() })?;
    inner
        .split(';')
        .map(|pair| {
            let (lo, hi) = pair
                .split_once(',')
                .ok_or_else(|| DslError::Config { line: entry.line, message: format!("bad interval `{pair}`") })?;
            let conv = |s: &str| {
                eval_constant(s.trim(), params).map_err(|e| DslError::Config { line: entry.line, message: e.to_string() })
            };
            Ok((conv(lo)?, conv(hi)?))
        })
        .collect()
}

/// Parse the key-value immersion format:
///
/// ```text
/// name = "cyl"
/// domain_dim = 3
/// ambient = EUC4
/// components = "(u1, cos(u2), sin(u2), u3)"
/// box = [0,1; 0,1; 0,1]
/// params = {a: 0.5}
/// ```
pub fn parse_immersion(text: &str) -> Result<ImmersionSpec, DslError> {
    let entries = parse_kv(text)?;
    let get = |k: &str| entries.iter().find(|e| e.key == k);
    for e in &entries {
        if !["name", "domain_dim", "ambient", "components", "box", "params"].contains(&e.key.as_str()) {
            return Err(DslError::Config { line: e.line, message: format!("unknown key `{}`", e.key) });
        }
    }
    let name = match get("name") {
        Some(e) => unquote(e)?.to_string(),
        None => "unnamed".to_string(),
    };
    let amb_entry = get("ambient").ok_or_else(|| DslError::Invalid("missing key `ambient`".into()))?;
    let ambient = Ambient::parse(amb_entry.value.trim_matches('"'))
        .ok_or_else(|| DslError::Config { line: amb_entry.line, message: format!("unknown ambient `{}`", amb_entry.value) })?;
    if let Some(e) = get("domain_dim") {
        let d: usize = e
            .value
            .parse()
            .map_err(|_| DslError::Config { line: e.line, message: "domain_dim must be 2 or 3".into() })?;
        if d != ambient.domain_dim() {
            return Err(DslError::Config {
                line: e.line,
                message: format!("domain_dim {d} does not match ambient {ambient} (expects {})", ambient.domain_dim()),
            });
        }
    }
    let params = match get("params") {
        Some(e) => parse_param_map(e)?,
        None => BTreeMap::new(),
    };
    let comp_entry = get("components").ok_or_else(|| DslError::Invalid("missing key `components`".into()))?;
    let comp_text = unquote(comp_entry)?;
    let components = parse_components_at(comp_text, comp_entry.line, comp_entry.col + 1)?;
    let box_entry = get("box").ok_or_else(|| DslError::Invalid("missing key `box`".into()))?;
    let sample_box = parse_box(box_entry, &params)?;
    ImmersionSpec::new(&name, ambient, components, params, sample_box)
}

// ---------------------------------------------------------------------------
// Named immersions

pub type Builder = fn(&BTreeMap<String, f64>) -> Result<ImmersionSpec, DslError>;

pub struct RegistryEntry {
    pub name: &'static str,
    pub defaults: Vec<(&'static str, f64)>,
    pub summary: &'static str,
    pub build: Builder,
}

/// Immutable table of named spec builders.
#[derive(Default)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn register(&mut self, entry: RegistryEntry) {
        assert!(self.get(entry.name).is_none(), "duplicate registry entry {}", entry.name);
        self.entries.push(entry);
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    /// Build the spec for `name(key=value, ...)`; omitted keys take defaults.
    pub fn resolve(&self, invocation: &str) -> Result<ImmersionSpec, DslError> {
        let (name, given) = parse_invocation(invocation)?;
        let entry = self.get(&name).ok_or_else(|| DslError::UnknownImmersion(name.clone()))?;
        let mut params: BTreeMap<String, f64> = entry.defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in given {
            if !params.contains_key(&k) {
                return Err(DslError::Invalid(format!("`{name}` has no parameter `{k}`")));
            }
            params.insert(k, v);
        }
        (entry.build)(&params)
    }
}

/// Split `name(a=1, b=pi/4)` into its name and parameter values.
pub fn parse_invocation(text: &str) -> Result<(String, BTreeMap<String, f64>), DslError> {
    let text = text.trim();
    let (name, rest) = match text.find('(') {
        Some(i) => (&text[..i], Some(&text[i..])),
        None => (text, None),
    };
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(DslError::Invalid(format!("bad immersion name `{text}`")));
    }
    let mut params = BTreeMap::new();
    if let Some(rest) = rest {
        let inner = rest
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| DslError::Invalid(format!("unbalanced parentheses in `{text}`")))?;
        for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| DslError::Invalid(format!("expected `key=value`, got `{item}`")))?;
            params.insert(k.trim().to_string(), eval_constant(v.trim(), &BTreeMap::new())?);
        }
    }
    Ok((name.to_string(), params))
}

//! Residual suites, Möbius-invariance checks, pointwise identities, the
//! finite-difference exterior-derivative check and the classifier.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::ImmersionSpec;
use crate::moebius::{
    linear_transform, moebius_transform, reverses_orientation, ComputeOptions, ConformalMap, FrameData, MoebiusError,
    MoebiusInvariants,
};
use crate::tensor::{det_f64, max_abs_diff, Tensor};

/// Environment variable holding the worker count for point evaluation.
pub const WORKERS_ENV: &str = "MOEBIUS_WORKERS";

#[derive(Debug, Error, Clone)]
pub enum VerifyError {
    #[error(transparent)]
    Moebius(#[from] MoebiusError),
    #[error("NotConformallyFlat: Schouten-Codazzi residual {residual:e} exceeds {tolerance:e}")]
    NotConformallyFlat { residual: f64, tolerance: f64 },
    #[error("MoebiusFormNotClosed: dC residual {residual:e} exceeds {tolerance:e}")]
    MoebiusFormNotClosed { residual: f64, tolerance: f64 },
    #[error("InconsistentSign: Q ranges over [{}, {}]", .0.q_stats.min, .0.q_stats.max)]
    InconsistentSign(Box<Classification>),
    #[error("frame alignment failed at grid point {index:?}: {reason}")]
    FrameAlignment { index: Vec<usize>, reason: String },
    #[error("no usable sample points ({0} skipped)")]
    NoPoints(usize),
}

impl VerifyError {
    pub fn name(&self) -> &'static str {
        match self {
            VerifyError::Moebius(_) => "DomainOrGenericity",
            VerifyError::NotConformallyFlat { .. } => "NotConformallyFlat",
            VerifyError::MoebiusFormNotClosed { .. } => "MoebiusFormNotClosed",
            VerifyError::InconsistentSign(_) => "InconsistentSign",
            VerifyError::FrameAlignment { .. } => "FrameAlignment",
            VerifyError::NoPoints(_) => "NoPoints",
        }
    }
}

/// Tolerance ladder.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerances {
    /// Identities exact at the jet level.
    pub jet: f64,
    /// Identities involving eigen-decompositions or route comparisons.
    pub route: f64,
    /// Relative tolerance of finite-difference checks.
    pub fd_rel: f64,
    /// Absolute floor of finite-difference checks.
    pub fd_abs: f64,
    /// Sign threshold for the classifier's Q.
    pub q: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { jet: 1e-9, route: 1e-7, fd_rel: 0.02, fd_abs: 1e-4, q: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub order: usize,
    pub tol: Tolerances,
    /// Fault injection: scale applied to B (1.0 in normal use).
    pub b_scale: f64,
    /// Include the third-order `C_{i,jk}` relations.
    pub extended: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { order: 5, tol: Tolerances::default(), b_scale: 1.0, extended: false }
    }
}

impl VerifyOptions {
    fn compute(&self) -> ComputeOptions {
        ComputeOptions { order: self.order, b_scale: self.b_scale }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckRecord {
    pub check: String,
    pub points_evaluated: usize,
    pub max_abs_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Per-point residuals in input order.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SkippedPoint {
    pub point: Vec<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ResidualReport {
    pub suite: String,
    pub immersion: String,
    pub order: usize,
    pub pass: bool,
    pub checks: Vec<CheckRecord>,
    pub skipped: Vec<SkippedPoint>,
    pub notes: Vec<String>,
}

impl ResidualReport {
    fn new(suite: &str, spec: &ImmersionSpec, order: usize) -> Self {
        Self {
            suite: suite.to_string(),
            immersion: spec.name.clone(),
            order,
            pass: true,
            checks: Vec::new(),
            skipped: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.check == name)
    }

    pub fn max_residual(&self, name: &str) -> f64 {
        self.check(name).map_or(f64::NAN, |c| c.max_abs_residual)
    }

    fn push(&mut self, check: &str, tolerance: f64, residuals: Vec<f64>) {
        let max = residuals.iter().fold(0.0f64, |m, r| if r.is_nan() || m.is_nan() { f64::NAN } else { m.max(r.abs()) });
        let pass = max <= tolerance && !residuals.is_empty();
        self.pass &= pass;
        self.checks.push(CheckRecord {
            check: check.to_string(),
            points_evaluated: residuals.len(),
            max_abs_residual: max,
            tolerance,
            pass,
            residuals,
        });
    }

    /// Concatenate the checks of several reports under a combined suite name.
    pub fn combine(suite: &str, parts: Vec<ResidualReport>) -> ResidualReport {
        let mut out = ResidualReport {
            suite: suite.to_string(),
            immersion: parts.first().map(|p| p.immersion.clone()).unwrap_or_default(),
            order: parts.iter().map(|p| p.order).max().unwrap_or(0),
            pass: true,
            checks: Vec::new(),
            skipped: Vec::new(),
            notes: Vec::new(),
        };
        for p in parts {
            out.pass &= p.pass;
            for mut c in p.checks {
                c.check = format!("{}.{}", p.suite, c.check);
                out.checks.push(c);
            }
            for s in p.skipped {
                if !out.skipped.contains(&s) {
                    out.skipped.push(s);
                }
            }
            out.notes.extend(p.notes.into_iter().map(|n| format!("{}: {n}", p.suite)));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Point evaluation

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(0);
        rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
    })
}

/// Order-preserving parallel map over points.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    pool().install(|| items.par_iter().map(f).collect())
}

/// `n` seeded uniform points in the spec's sample box.
pub fn sample_points(spec: &ImmersionSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| spec.sample_box.iter().map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect())
        .collect()
}

pub fn evaluate_points(spec: &ImmersionSpec, points: &[Vec<f64>], opts: ComputeOptions) -> Vec<Result<MoebiusInvariants, MoebiusError>> {
    par_map(points, |p| MoebiusInvariants::compute(spec, p, opts))
}

type Residuals = Vec<(&'static str, f64, f64)>;

/// Evaluate the invariants at every point and fold per-point residual lists
/// into a report (check order = first appearance).
fn run_suite(
    suite: &str,
    spec: &ImmersionSpec,
    points: &[Vec<f64>],
    opts: &VerifyOptions,
    per_point: impl Fn(&MoebiusInvariants) -> Residuals + Sync + Send,
) -> ResidualReport {
    let results = par_map(points, |p| MoebiusInvariants::compute(spec, p, opts.compute()).map(|inv| per_point(&inv)));
    fold_report(suite, spec, opts.order, points, results)
}

fn fold_report(
    suite: &str,
    spec: &ImmersionSpec,
    order: usize,
    points: &[Vec<f64>],
    results: Vec<Result<Residuals, MoebiusError>>,
) -> ResidualReport {
    let mut report = ResidualReport::new(suite, spec, order);
    let mut order_of: Vec<(&'static str, f64)> = Vec::new();
    let mut values: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(list) => {
                for (name, tol, v) in list {
                    if !values.contains_key(name) {
                        order_of.push((name, tol));
                    }
                    values.entry(name).or_default().push(v);
                }
            }
            Err(e) => report.skipped.push(SkippedPoint { point: p.clone(), reason: e.to_string() }),
        }
    }
    for (name, tol) in order_of {
        report.push(name, tol, values.remove(name).unwrap_or_default());
    }
    if report.checks.is_empty() {
        report.pass = false;
        report.notes.push("no checks evaluated".into());
    }
    report
}

fn max_over(n: usize, rank: usize, f: impl Fn(&[usize]) -> f64) -> f64 {
    crate::tensor::indices(n, rank).fold(0.0f64, |m, idx| {
        let v = f(&idx).abs();
        if v.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(v)
        }
    })
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn distinct(i: usize, j: usize, k: usize) -> bool {
    i != j && j != k && i != k
}

/// Frame components of B (diagonal up to rounding).
fn b_frame(inv: &MoebiusInvariants) -> Tensor<f64> {
    inv.b.values().in_frame(inv.frame_vectors())
}

// ---------------------------------------------------------------------------
// Universal identities

/// Integrability conditions of the structure equations and the three
/// normalizations, at one point.
pub fn integrability_residuals(inv: &MoebiusInvariants, tol: &Tolerances) -> Residuals {
    let fd = &inv.in_frame;
    let b = b_frame(inv);
    let bt = |i: usize, j: usize| *b.get(&[i, j]);
    let mut out: Residuals = Vec::new();
    if let (Some(ga), Some(c)) = (&fd.grad_a, &fd.c) {
        let r = max_over(3, 3, |x| {
            let (i, j, k) = (x[0], x[1], x[2]);
            ga.get(&[i, j, k]) - ga.get(&[i, k, j]) - (bt(i, k) * c[j] - bt(i, j) * c[k])
        });
        out.push(("codazzi_A", tol.route, r));
    }
    if let (Some(gc), Some(a)) = (&fd.grad_c, &fd.a) {
        let r = max_over(3, 2, |x| {
            let (i, j) = (x[0], x[1]);
            let comm: f64 = (0..3).map(|k| bt(i, k) * a.get(&[k, j]) - bt(j, k) * a.get(&[k, i])).sum();
            gc.get(&[i, j]) - gc.get(&[j, i]) - comm
        });
        out.push(("exterior_dC", tol.route, r));
    }
    if let (Some(gb), Some(c)) = (&fd.grad_b, &fd.c) {
        let r = max_over(3, 3, |x| {
            let (i, j, k) = (x[0], x[1], x[2]);
            gb.get(&[i, j, k]) - gb.get(&[i, k, j]) - (delta(i, j) * c[k] - delta(i, k) * c[j])
        });
        out.push(("codazzi_B", tol.route, r));
    }
    if let (Some(riem), Some(a)) = (&fd.riem, &fd.a) {
        let at = |i: usize, j: usize| *a.get(&[i, j]);
        let r = max_over(3, 4, |x| {
            let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
            let rhs = bt(i, k) * bt(j, l) - bt(i, l) * bt(j, k) + delta(i, k) * at(j, l) + delta(j, l) * at(i, k)
                - delta(i, l) * at(j, k)
                - delta(j, k) * at(i, l);
            riem.get(&[i, j, k, l]) - rhs
        });
        out.push(("gauss", tol.route, r));
        let ric = fd.ric.as_ref().expect("with riem");
        let tr_a: f64 = (0..3).map(|i| at(i, i)).sum();
        let r = max_over(3, 2, |x| {
            let (i, j) = (x[0], x[1]);
            let bb: f64 = (0..3).map(|k| bt(i, k) * bt(k, j)).sum();
            ric.get(&[i, j]) - (-bb + tr_a * delta(i, j) + at(i, j))
        });
        out.push(("ricci_contraction", tol.route, r));
    }
    // normalizations in coordinates
    let ginv = inv.metric.inverse().values();
    let bc = inv.b.values();
    let gi = |i: usize, j: usize| *ginv.get(&[i, j]);
    let tr_b: f64 = crate::tensor::indices(3, 2).map(|x| gi(x[0], x[1]) * bc.get(&x)).sum();
    let norm_b: f64 = crate::tensor::indices(3, 4)
        .map(|x| gi(x[0], x[2]) * gi(x[1], x[3]) * bc.get(&[x[0], x[1]]) * bc.get(&[x[2], x[3]]))
        .sum();
    out.push(("trace_B", tol.jet, tr_b));
    out.push(("norm_B", tol.jet, norm_b - 2.0 / 3.0));
    if let (Some(a), Some(tr_formula)) = (&inv.a, &inv.tr_a) {
        let av = a.values();
        let tr: f64 = crate::tensor::indices(3, 2).map(|x| gi(x[0], x[1]) * av.get(&x)).sum();
        out.push(("trace_A", tol.jet, tr - tr_formula.value()));
    }
    out
}

/// `B_{ij,kl} − B_{ij,lk} = Σ_m B_{mj}R_{mikl} + B_{im}R_{mjkl}`.
pub fn ricci_identity_residual(inv: &MoebiusInvariants) -> Option<f64> {
    let hb = inv.in_frame.hess_b.as_ref()?;
    let riem = inv.in_frame.riem.as_ref()?;
    let b = b_frame(inv);
    Some(max_over(3, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        let rhs: f64 =
            (0..3).map(|m| b.get(&[m, j]) * riem.get(&[m, i, k, l]) + b.get(&[i, m]) * riem.get(&[m, j, k, l])).sum();
        hb.get(&[i, j, k, l]) - hb.get(&[i, j, l, k]) - rhs
    }))
}

pub fn check_integrability(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> ResidualReport {
    let tol = opts.tol;
    let mut r = run_suite("integrability", spec, points, opts, |inv| integrability_residuals(inv, &tol));
    if opts.order < 5 {
        r.notes.push(format!("order {} < 5: equations needing covariant derivatives of A are not evaluated", opts.order));
    }
    r
}

pub fn check_ricci_identity(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> ResidualReport {
    let tol = opts.tol.route;
    run_suite("ricci_identity", spec, points, opts, |inv| {
        ricci_identity_residual(inv).map(|r| vec![("ricci_identity_B", tol, r)]).unwrap_or_default()
    })
}

/// Integrability plus Ricci identity (holds on every generic hypersurface).
pub fn check_universal(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> ResidualReport {
    let tol = opts.tol;
    let mut r = run_suite("universal", spec, points, opts, |inv| {
        let mut v = integrability_residuals(inv, &tol);
        if let Some(x) = ricci_identity_residual(inv) {
            v.push(("ricci_identity_B", tol.route, x));
        }
        v
    });
    if opts.order < 5 {
        r.notes.push(format!("order {} < 5: some identities are not evaluated", opts.order));
    }
    r
}

// ---------------------------------------------------------------------------
// Conformal flatness

/// `max |S_{ij,k} − S_{ik,j}|` of the Möbius metric's Schouten tensor.
pub fn schouten_codazzi_residual(fd: &FrameData) -> Option<f64> {
    let gs = fd.grad_schouten.as_ref()?;
    Some(max_over(3, 3, |x| gs.get(&[x[0], x[1], x[2]]) - gs.get(&[x[0], x[2], x[1]])))
}

/// `∇S` from `S = −B² + A + g/6`: `S_{ij,k} = −Σ_l(B_{il,k}B_{lj} + B_{il}B_{lj,k}) + A_{ij,k}`.
pub fn schouten_derivative_from_ab(inv: &MoebiusInvariants) -> Option<Tensor<f64>> {
    let gb = inv.in_frame.grad_b.as_ref()?;
    let ga = inv.in_frame.grad_a.as_ref()?;
    let b = b_frame(inv);
    Some(Tensor::from_fn(3, 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        let bb: f64 = (0..3).map(|l| gb.get(&[i, l, k]) * b.get(&[l, j]) + b.get(&[i, l]) * gb.get(&[l, j, k])).sum();
        -bb + ga.get(&[i, j, k])
    }))
}

fn flatness_residuals(inv: &MoebiusInvariants, tol: &Tolerances) -> Residuals {
    let mut out = Vec::new();
    if let Some(r) = schouten_codazzi_residual(&inv.in_frame) {
        out.push(("schouten_codazzi", tol.route, r));
    }
    if let (Some(a), Some(b)) = (inv.in_frame.grad_schouten.as_ref(), schouten_derivative_from_ab(inv)) {
        out.push(("schouten_route_agreement", tol.route, max_abs_diff(a, &b)));
        let r = max_over(3, 3, |x| b.get(&[x[0], x[1], x[2]]) - b.get(&[x[0], x[2], x[1]]));
        out.push(("schouten_codazzi_from_ab", tol.route, r));
    }
    out
}

pub fn check_conformal_flatness(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> ResidualReport {
    let tol = opts.tol;
    let mut r = run_suite("conformal_flatness", spec, points, opts, |inv| flatness_residuals(inv, &tol));
    if opts.order < 5 {
        r.pass = false;
        r.notes.push("conformal flatness needs order 5".into());
    }
    let flat = r.check("schouten_codazzi").is_some_and(|c| c.pass);
    r.notes.push(format!("verdict: {}", if flat { "conformally flat" } else { "not conformally flat" }));
    r
}

// ---------------------------------------------------------------------------
// Relations on conformally flat hypersurfaces

/// Principal-frame relations that hold on conformally flat hypersurfaces
/// (and, for the last three, when the Möbius form is closed).
pub fn flat_relation_residuals(inv: &MoebiusInvariants, tol: &Tolerances, extended: bool) -> Residuals {
    let fd = &inv.in_frame;
    let bv = inv.frame.b;
    let mut out: Residuals = Vec::new();
    let (Some(gb), Some(c)) = (&fd.grad_b, &fd.c) else { return out };
    let g = |i: usize, j: usize, k: usize| *gb.get(&[i, j, k]);
    let bd = |i: usize, j: usize| delta(i, j) * bv[i];
    let weighted = max_over(3, 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        bv[k] * g(i, k, j) - bv[j] * g(i, j, k) - 2.0 * (bd(i, j) * c[k] - bd(i, k) * c[j])
    });
    out.push(("weighted_codazzi_B", tol.route, weighted));
    let b123 = max_over(3, 3, |x| if distinct(x[0], x[1], x[2]) { g(x[0], x[1], x[2]) } else { 0.0 });
    out.push(("B_mixed_distinct", tol.route, b123));
    let bij_i = max_over(3, 2, |x| {
        let (i, j) = (x[0], x[1]);
        if i == j {
            0.0
        } else {
            g(i, j, i) - 3.0 * bv[i] / (bv[j] - bv[i]) * c[j]
        }
    });
    out.push(("B_ij_i", tol.route, bij_i));
    let bii_j = max_over(3, 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        if distinct(i, j, k) {
            g(i, i, j) - (bv[i] - bv[k]) / (bv[j] - bv[i]) * c[j]
        } else {
            0.0
        }
    });
    out.push(("B_ii_j", tol.route, bii_j));
    if let (Some(a), Some(gc)) = (&fd.a, &fd.grad_c) {
        let off = max_over(3, 2, |x| if x[0] != x[1] { *a.get(x) } else { 0.0 });
        out.push(("A_offdiagonal", tol.route, off));
        let mixed = max_over(3, 3, |x| {
            let (i, j, k) = (x[0], x[1], x[2]);
            if distinct(i, j, k) {
                bv[k] * gc.get(&[i, j]) + c[i] * c[j]
            } else {
                0.0
            }
        });
        out.push(("C_derivative_mixed", tol.route, mixed));
        let (dc, comm) = dc_residuals(inv).expect("order ≥ 4");
        out.push(("dC", tol.route, dc));
        out.push(("dC_commutator", tol.route, comm));
    }
    if extended {
        if let Some(hc) = &fd.hess_c {
            let r = max_over(3, 3, |x| if distinct(x[0], x[1], x[2]) { *hc.get(x) } else { 0.0 });
            out.push(("C_second_distinct", tol.route, r));
        }
    }
    out
}

/// `max |C_{i,j} − C_{j,i}|` and `max |Σ_k(B_{ik}A_{kj} − B_{jk}A_{ki})|`.
pub fn dc_residuals(inv: &MoebiusInvariants) -> Option<(f64, f64)> {
    let gc = inv.in_frame.grad_c.as_ref()?;
    let a = inv.in_frame.a.as_ref()?;
    let b = b_frame(inv);
    let dc = max_over(3, 2, |x| gc.get(&[x[0], x[1]]) - gc.get(&[x[1], x[0]]));
    let comm = max_over(3, 2, |x| {
        let (i, j) = (x[0], x[1]);
        (0..3).map(|k| b.get(&[i, k]) * a.get(&[k, j]) - b.get(&[j, k]) * a.get(&[k, i])).sum::<f64>()
    });
    Some((dc, comm))
}

/// Preconditions shared by the flat-only suites.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Preconditions {
    pub flatness_residual: f64,
    pub dc_residual: f64,
    pub dc_commutator_residual: f64,
    pub tolerance: f64,
}

fn preconditions(invs: &[&MoebiusInvariants], tol: f64) -> Preconditions {
    let mut p = Preconditions { flatness_residual: 0.0, dc_residual: 0.0, dc_commutator_residual: 0.0, tolerance: tol };
    for inv in invs {
        let f = schouten_codazzi_residual(&inv.in_frame).unwrap_or(f64::NAN);
        let (dc, comm) = dc_residuals(inv).unwrap_or((f64::NAN, f64::NAN));
        p.flatness_residual = nan_max(p.flatness_residual, f);
        p.dc_residual = nan_max(p.dc_residual, dc);
        p.dc_commutator_residual = nan_max(p.dc_commutator_residual, comm);
    }
    p
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

impl Preconditions {
    fn require_flat(&self) -> Result<(), VerifyError> {
        if !(self.flatness_residual <= self.tolerance) {
            return Err(VerifyError::NotConformallyFlat { residual: self.flatness_residual, tolerance: self.tolerance });
        }
        Ok(())
    }

    fn require_closed(&self) -> Result<(), VerifyError> {
        self.require_flat()?;
        if !(self.dc_residual <= self.tolerance) {
            return Err(VerifyError::MoebiusFormNotClosed { residual: self.dc_residual, tolerance: self.tolerance });
        }
        Ok(())
    }
}

struct Evaluated {
    ok: Vec<MoebiusInvariants>,
    points: Vec<Vec<f64>>,
    skipped: Vec<SkippedPoint>,
}

fn evaluate_order5(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> Result<Evaluated, VerifyError> {
    let co = ComputeOptions { order: opts.order.max(5), b_scale: opts.b_scale };
    let mut e = Evaluated { ok: Vec::new(), points: Vec::new(), skipped: Vec::new() };
    for (p, r) in points.iter().zip(evaluate_points(spec, points, co)) {
        match r {
            Ok(inv) => {
                e.ok.push(inv);
                e.points.push(p.clone());
            }
            Err(err) => e.skipped.push(SkippedPoint { point: p.clone(), reason: err.to_string() }),
        }
    }
    if e.ok.is_empty() {
        return Err(VerifyError::NoPoints(e.skipped.len()));
    }
    Ok(e)
}

fn report_from(suite: &str, spec: &ImmersionSpec, ev: &Evaluated, f: impl Fn(&MoebiusInvariants) -> Residuals + Sync + Send) -> ResidualReport {
    let results: Vec<Result<Residuals, MoebiusError>> = par_map(&ev.ok, |inv| Ok(f(inv)));
    let mut r = fold_report(suite, spec, 5, &ev.points, results);
    r.skipped = ev.skipped.clone();
    r
}

/// Flat relations in the principal frame; errors if the sample is not
/// conformally flat.
pub fn check_flat_relations(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> Result<ResidualReport, VerifyError> {
    let ev = evaluate_order5(spec, points, opts)?;
    preconditions(&ev.ok.iter().collect::<Vec<_>>(), opts.tol.route).require_flat()?;
    let tol = opts.tol;
    let ext = opts.extended;
    Ok(report_from("flat_relations", spec, &ev, |inv| flat_relation_residuals(inv, &tol, ext)))
}

// ---------------------------------------------------------------------------
// Frames

/// Null-frame relations, structure-equation oracles for A, B, C and the
/// curvature-sphere pairing.
pub fn frame_residuals(inv: &MoebiusInvariants, tol: &Tolerances) -> Residuals {
    let mut out: Residuals = Vec::new();
    let Ok(rel) = inv.frame_relations() else { return out };
    let worst = rel.iter().fold(0.0f64, |m, (_, v)| nan_max(m, v.abs()));
    out.push(("null_frame", tol.jet, worst));
    let fd = &inv.in_frame;
    if let Ok(o) = inv.frame_oracle_ac() {
        let b = b_frame(inv);
        out.push(("B_from_dxi", tol.route * 0.1, max_abs_diff(&o.b_from_xi, &b)));
        let c = fd.c.as_ref().expect("order ≥ 4");
        let cd = |x: &[f64]| x.iter().zip(c).fold(0.0f64, |m, (p, q)| nan_max(m, (p - q).abs()));
        out.push(("C_from_dxi", tol.route, cd(&o.c_from_xi)));
        if let (Some(an), Some(cn)) = (&o.a_from_n, &o.c_from_n) {
            out.push(("A_from_dN", tol.route, max_abs_diff(an, fd.a.as_ref().expect("order ≥ 4"))));
            out.push(("C_from_dN", tol.route, cd(cn)));
        }
    }
    let pairing = (0..3).fold(0.0f64, |m, i| {
        let t = inv.curvature_sphere_test(i);
        nan_max(m, (t.pairing + t.k).abs())
    });
    out.push(("curvature_sphere_pairing", tol.jet, pairing));
    out
}

pub fn check_frames(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> ResidualReport {
    let tol = opts.tol;
    let mut o = *opts;
    o.order = o.order.max(4);
    run_suite("frames", spec, points, &o, |inv| frame_residuals(inv, &tol))
}

// ---------------------------------------------------------------------------
// Möbius invariance

/// Compare `g` and the orientation-canonicalized sorted `b` between `spec`
/// and `T∘spec` at identical parameters.
pub fn check_moebius_invariance(
    spec: &ImmersionSpec,
    maps: &[ConformalMap],
    points: &[Vec<f64>],
    opts: &VerifyOptions,
) -> Result<ResidualReport, VerifyError> {
    let t = moebius_transform(spec, maps)?;
    Ok(compare_metrics("moebius_invariance", spec, &t, reverses_orientation(maps), points, opts))
}

/// Same comparison against an arbitrary linear map (negative control).
pub fn check_linear_control(
    spec: &ImmersionSpec,
    m: [[f64; 4]; 4],
    points: &[Vec<f64>],
    opts: &VerifyOptions,
) -> Result<ResidualReport, VerifyError> {
    let t = linear_transform(spec, m)?;
    Ok(compare_metrics("linear_control", spec, &t, det_f64(&m.iter().map(|r| r.to_vec()).collect::<Vec<_>>()) < 0.0, points, opts))
}

fn compare_metrics(
    suite: &str,
    a: &ImmersionSpec,
    b: &ImmersionSpec,
    flip: bool,
    points: &[Vec<f64>],
    opts: &VerifyOptions,
) -> ResidualReport {
    let co = ComputeOptions { order: 2, b_scale: opts.b_scale };
    let tol = opts.tol.route;
    let results = par_map(points, |p| {
        let x = MoebiusInvariants::compute(a, p, co)?;
        let y = MoebiusInvariants::compute(b, p, co)?;
        let dg = max_abs_diff(&x.metric.g().values(), &y.metric.g().values());
        let mut by = y.frame.b;
        if flip {
            by = [-by[2], -by[1], -by[0]];
        }
        let db = (0..3).fold(0.0f64, |m, i| nan_max(m, (x.frame.b[i] - by[i]).abs()));
        Ok(vec![("metric", tol, dg), ("b_sorted", tol, db)])
    });
    let mut r = fold_report(suite, a, 2, points, results);
    r.notes.push(format!("orientation reversing: {flip}"));
    r
}

/// Translation moving the sampled image at least unit distance away from
/// the origin, so that an inversion is regular on the box.
pub fn safe_shift(spec: &ImmersionSpec) -> Result<[f64; 4], VerifyError> {
    let mut radius = 0.0f64;
    for p in spec.sample_grid(5) {
        let x = spec.evaluate(&p).map_err(MoebiusError::from)?;
        radius = radius.max(x.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    Ok([radius + 1.0, 0.0, 0.0, 0.0])
}

// ---------------------------------------------------------------------------
// Pointwise identities

/// Scalars entering the pointwise identities, in the principal frame.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct PointwiseScalars {
    pub tr_a: f64,
    pub a_norm2: f64,
    pub a_tilde_norm2: f64,
    pub ric_norm2: f64,
    pub scalar: f64,
    /// `Σ[(b_i−b_j)²−2]R_ijij` over `i<j`.
    pub weighted_sectional: f64,
    pub rhs_b2a: f64,
    pub ric_norm2_formula: f64,
    pub rhs_tr_a: f64,
    pub rhs_trace_free: f64,
    /// `|Ã|² + R²/3 − |Ric|² − 2/27`.
    pub integrand: f64,
}

pub fn pointwise_scalars(inv: &MoebiusInvariants) -> Option<PointwiseScalars> {
    let fd = &inv.in_frame;
    let a = fd.a.as_ref()?;
    let ric = fd.ric.as_ref()?;
    let riem = fd.riem.as_ref()?;
    let r = fd.scalar?;
    let b = inv.frame.b;
    let ai = |i: usize| *a.get(&[i, i]);
    let tr_a: f64 = (0..3).map(ai).sum();
    let a_norm2: f64 = a.data().iter().map(|x| x * x).sum();
    let ric_norm2: f64 = ric.data().iter().map(|x| x * x).sum();
    let b2a: f64 = (0..3).map(|i| b[i] * b[i] * ai(i)).sum();
    let weighted_sectional: f64 = [(0, 1), (1, 2), (0, 2)]
        .iter()
        .map(|&(i, j)| ((b[i] - b[j]).powi(2) - 2.0) * riem.get(&[i, j, i, j]))
        .sum();
    let a_tilde_norm2 = a_norm2 - tr_a * tr_a / 3.0;
    Some(PointwiseScalars {
        tr_a,
        a_norm2,
        a_tilde_norm2,
        ric_norm2,
        scalar: r,
        weighted_sectional,
        rhs_b2a: 2.0 / 9.0 - 10.0 / 3.0 * tr_a + 3.0 * b2a,
        ric_norm2_formula: 2.0 / 9.0 + 5.0 * tr_a * tr_a + a_norm2 - 4.0 / 3.0 * tr_a - 2.0 * b2a,
        rhs_tr_a: 5.0 / 9.0 - 16.0 / 3.0 * tr_a + 7.5 * tr_a * tr_a + 1.5 * a_norm2 - 1.5 * ric_norm2,
        rhs_trace_free: 1.5 * a_tilde_norm2 - 1.5 * (ric_norm2 - r * r / 3.0) - 1.0 / 9.0,
        integrand: a_tilde_norm2 + r * r / 3.0 - ric_norm2 - 2.0 / 27.0,
    })
}

/// Margin required in `(b_i − b_j)² < 2`.
pub const GAP_MARGIN: f64 = 1e-3;
/// Allowed negativity of `|Ric|² − R²/3`.
pub const CAUCHY_SCHWARZ_SLACK: f64 = 1e-10;

pub fn pointwise_residuals(inv: &MoebiusInvariants, tol: &Tolerances) -> Residuals {
    let Some(s) = pointwise_scalars(inv) else { return Vec::new() };
    let b = inv.frame.b;
    let gap = [(0, 1), (1, 2), (0, 2)].iter().map(|&(i, j)| (b[i] - b[j]).powi(2)).fold(0.0f64, f64::max);
    vec![
        ("sectional_vs_b2a", tol.route, s.weighted_sectional - s.rhs_b2a),
        ("ric_norm", tol.route, s.ric_norm2 - s.ric_norm2_formula),
        ("sectional_vs_trA", tol.route, s.weighted_sectional - s.rhs_tr_a),
        ("sectional_vs_trace_free", tol.route, s.weighted_sectional - s.rhs_trace_free),
        ("sectional_vs_trace_free_corrected", tol.route, s.weighted_sectional - (s.rhs_trace_free - 2.0 / 3.0 * s.scalar)),
        ("integrand_consistency", tol.route, s.integrand - 2.0 / 3.0 * s.rhs_trace_free),
        ("gap_bound", 0.0, (gap - 2.0 + GAP_MARGIN).max(0.0)),
        ("ricci_cauchy_schwarz", CAUCHY_SCHWARZ_SLACK, (s.scalar * s.scalar / 3.0 - s.ric_norm2).max(0.0)),
    ]
}

pub fn check_pointwise_identities(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> Result<ResidualReport, VerifyError> {
    let ev = evaluate_order5(spec, points, opts)?;
    preconditions(&ev.ok.iter().collect::<Vec<_>>(), opts.tol.route).require_closed()?;
    let tol = opts.tol;
    Ok(report_from("pointwise", spec, &ev, |inv| pointwise_residuals(inv, &tol)))
}

// ---------------------------------------------------------------------------
// Finite-difference exterior derivative of Φ and Ψ

/// Cubic grid `center + h·(i − (n−1)/2)` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct FdPatch {
    pub center: Vec<f64>,
    pub h: f64,
    pub n: usize,
}

impl FdPatch {
    pub fn new(center: Vec<f64>) -> Self {
        Self { center, h: 1e-3, n: 9 }
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        self.center[axis] + self.h * (i as f64 - (self.n - 1) as f64 / 2.0)
    }
}

struct FormSample {
    /// Coordinate components `Φ_ab`, `Ψ_ab`.
    phi: [[f64; 3]; 3],
    psi: [[f64; 3]; 3],
    /// Right-hand sides as multiples of `ω₁∧ω₂∧ω₃`.
    rhs_phi: f64,
    rhs_psi: f64,
    rhs_combination: f64,
    /// `det θ`, so `dv_g = det θ · du¹∧du²∧du³`.
    volume: f64,
    frame: Vec<Vec<f64>>,
    gap: f64,
}

fn wedge(a: &[f64; 3], b: &[f64; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|x| std::array::from_fn(|y| a[x] * b[y] - a[y] * b[x]))
}

fn form_sample(inv: &MoebiusInvariants) -> Option<FormSample> {
    let fd = &inv.in_frame;
    let gb = fd.grad_b.as_ref()?;
    let c = fd.c.as_ref()?;
    let riem = fd.riem.as_ref()?;
    let b = inv.frame.b;
    let e = inv.frame_vectors();
    let g = inv.metric.g().values();
    // coframe θ_k = g(E_k, ·)
    let theta: Vec<[f64; 3]> =
        (0..3).map(|k| std::array::from_fn(|a| (0..3).map(|m| g.get(&[a, m]) * e[k][m]).sum())).collect();
    let omega = |i: usize, j: usize| -> [f64; 3] {
        let mut w = [0.0; 3];
        for (k, th) in theta.iter().enumerate() {
            let s = gb.get(&[i, j, k]) / (b[i] - b[j]);
            for a in 0..3 {
                w[a] += s * th[a];
            }
        }
        w
    };
    let t12 = wedge(&omega(0, 1), &theta[2]);
    let t23 = wedge(&omega(1, 2), &theta[0]);
    let t31 = wedge(&omega(2, 0), &theta[1]);
    let (d12, d23, d13) = ((b[0] - b[1]).powi(2), (b[1] - b[2]).powi(2), (b[0] - b[2]).powi(2));
    let phi = std::array::from_fn(|x| std::array::from_fn(|y| t12[x][y] + t23[x][y] + t31[x][y]));
    let psi = std::array::from_fn(|x| std::array::from_fn(|y| d12 * t12[x][y] + d23 * t23[x][y] + d13 * t31[x][y]));
    let r = |i: usize, j: usize| *riem.get(&[i, j, i, j]);
    let c_terms = 9.0 * b[0] * b[1] * c[2] * c[2] / (d13 * d23)
        + 9.0 * b[1] * b[2] * c[0] * c[0] / (d12 * d13)
        + 9.0 * b[0] * b[2] * c[1] * c[1] / (d12 * d23);
    let rhs_phi = c_terms - r(0, 1) - r(0, 2) - r(1, 2);
    let rhs_psi = -(d12 * r(0, 1) + d13 * r(0, 2) + d23 * r(1, 2)) + 2.0 * c_terms;
    let rhs_combination = (d12 - 2.0) * r(0, 1) + (d23 - 2.0) * r(1, 2) + (d13 - 2.0) * r(0, 2);
    let volume = det_f64(&theta.iter().map(|t| t.to_vec()).collect::<Vec<_>>());
    let gap = (b[1] - b[0]).min(b[2] - b[1]);
    Some(FormSample { phi, psi, rhs_phi, rhs_psi, rhs_combination, volume, frame: e.to_vec(), gap })
}

/// Minimum principal gap on an FD patch.
pub const FD_MIN_GAP: f64 = 1e-6;

/// Exterior derivatives of Φ and Ψ by central differences on the patch,
/// compared against the pointwise right-hand sides at interior nodes.
pub fn fd_exterior(spec: &ImmersionSpec, patch: &FdPatch, opts: &VerifyOptions) -> Result<ResidualReport, VerifyError> {
    let n = patch.n;
    assert!(n >= 3, "patch needs at least 3 points per axis");
    let nodes: Vec<[usize; 3]> = crate::tensor::indices(n, 3).map(|x| [x[0], x[1], x[2]]).collect();
    let pts: Vec<Vec<f64>> = nodes.iter().map(|x| (0..3).map(|a| patch.coord(a, x[a])).collect()).collect();
    let co = ComputeOptions { order: 4, b_scale: opts.b_scale };
    let samples: Vec<Result<FormSample, VerifyError>> = par_map(&pts, |p| {
        let inv = MoebiusInvariants::compute(spec, p, co)?;
        Ok(form_sample(&inv).expect("order 4"))
    });
    let mut grid = Vec::with_capacity(samples.len());
    for (node, s) in nodes.iter().zip(samples) {
        match s {
            Ok(s) => grid.push(s),
            Err(VerifyError::Moebius(e)) => {
                return Err(VerifyError::FrameAlignment { index: node.to_vec(), reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    // the principal frame must not permute across the patch
    let mid = (n - 1) / 2;
    let center = &grid[(mid * n + mid) * n + mid];
    let g0 = MoebiusInvariants::compute(spec, &patch.center, co)?.metric.g().values();
    for (node, s) in nodes.iter().zip(&grid) {
        if s.gap < FD_MIN_GAP {
            return Err(VerifyError::FrameAlignment { index: node.to_vec(), reason: format!("principal gap {:e}", s.gap) });
        }
        for i in 0..3 {
            let best = (0..3)
                .max_by(|&p, &q| {
                    let ip = |k: usize| -> f64 {
                        crate::tensor::indices(3, 2).map(|x| s.frame[i][x[0]] * g0.get(&x) * center.frame[k][x[1]]).sum::<f64>().abs()
                    };
                    ip(p).total_cmp(&ip(q))
                })
                .expect("three directions");
            if best != i {
                return Err(VerifyError::FrameAlignment {
                    index: node.to_vec(),
                    reason: format!("principal direction {} matched direction {} at the patch center", i + 1, best + 1),
                });
            }
        }
    }
    let at = |x: [usize; 3]| &grid[(x[0] * n + x[1]) * n + x[2]];
    let d = |f: &dyn Fn(&FormSample) -> f64, x: [usize; 3], axis: usize| -> f64 {
        let mut p = x;
        let mut m = x;
        p[axis] += 1;
        m[axis] -= 1;
        (f(at(p)) - f(at(m))) / (2.0 * patch.h)
    };
    let mut lhs = [Vec::new(), Vec::new(), Vec::new()];
    let mut rhs = [Vec::new(), Vec::new(), Vec::new()];
    for x in nodes.iter().filter(|x| x.iter().all(|&i| i > 0 && i < n - 1)) {
        let s = at(*x);
        let ext = |form: &dyn Fn(&FormSample) -> [[f64; 3]; 3]| -> f64 {
            d(&|q| form(q)[1][2], *x, 0) - d(&|q| form(q)[0][2], *x, 1) + d(&|q| form(q)[0][1], *x, 2)
        };
        let dphi = ext(&|q| q.phi);
        let dpsi = ext(&|q| q.psi);
        lhs[0].push(dphi);
        lhs[1].push(dpsi);
        lhs[2].push(2.0 * dphi - dpsi);
        rhs[0].push(s.rhs_phi * s.volume);
        rhs[1].push(s.rhs_psi * s.volume);
        rhs[2].push(s.rhs_combination * s.volume);
    }
    let mut report = ResidualReport::new("forms", spec, 4);
    for (k, name) in ["d_phi", "d_psi", "d_2phi_minus_psi"].iter().enumerate() {
        let scale = rhs[k].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = (opts.tol.fd_rel * scale).max(opts.tol.fd_abs);
        let res: Vec<f64> = lhs[k].iter().zip(&rhs[k]).map(|(l, r)| l - r).collect();
        report.push(name, tol, res);
        report.notes.push(format!("{name}: max |rhs| = {scale:e}"));
    }
    report.notes.push(format!("patch {}^3 at h = {:e}, center {:?}", n, patch.h, patch.center));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum Verdict {
    Cylinder,
    Cone,
    Rotational,
    InconsistentSign,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct QStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ClassifiedPoint {
    pub point: Vec<f64>,
    /// 1-based principal index of the stationary curvature sphere.
    pub special_index: usize,
    pub q: f64,
    /// `‖E_i(b_i Y + ξ)‖ / ‖Y‖` per principal direction.
    pub sphere_motion: [f64; 3],
    /// More than one direction is stationary within 1e-6.
    pub ambiguous: bool,
    /// `(index, Q)` for every stationary candidate.
    pub candidates: Vec<(usize, f64)>,
    pub b: [f64; 3],
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Classification {
    pub immersion: String,
    pub verdict: Verdict,
    pub tol_q: f64,
    pub q_stats: QStats,
    pub special_index_histogram: [usize; 3],
    pub preconditions: Preconditions,
    /// Some sample has `min |b_i| ≤ 1e-8`.
    pub degenerate: bool,
    pub ambiguous_points: usize,
    pub points: Vec<ClassifiedPoint>,
    pub skipped: Vec<SkippedPoint>,
}

/// Candidate window for the stationary curvature sphere.
pub const STATIONARY_TOL: f64 = 1e-6;
/// `min |b_i|` at or below this marks the `b₁b₂b₃ = 0` branch.
pub const DEGENERATE_B: f64 = 1e-8;

/// `Q = 2a_s + b_s² + Σ_{j≠s} (B_{sj,s}/(b_s − b_j))²`.
pub fn q_value(inv: &MoebiusInvariants, s: usize) -> Option<f64> {
    let a = inv.in_frame.a.as_ref()?;
    let gb = inv.in_frame.grad_b.as_ref()?;
    let b = inv.frame.b;
    let tail: f64 = (0..3).filter(|&j| j != s).map(|j| (gb.get(&[s, j, s]) / (b[s] - b[j])).powi(2)).sum();
    Some(2.0 * a.get(&[s, s]) + b[s] * b[s] + tail)
}

fn classify_point(inv: &MoebiusInvariants) -> Result<ClassifiedPoint, MoebiusError> {
    let motion: [f64; 3] = [inv.curvature_sphere_motion(0)?, inv.curvature_sphere_motion(1)?, inv.curvature_sphere_motion(2)?];
    let best = motion.iter().copied().fold(f64::INFINITY, f64::min);
    let candidates: Vec<usize> = (0..3).filter(|&i| motion[i] <= best + STATIONARY_TOL).collect();
    // ties: prefer the direction closest to the first coordinate axis
    let g = inv.metric.g().values();
    let align = |i: usize| -> f64 {
        let e = &inv.frame.vectors[i];
        (0..3).map(|m| g.get(&[0, m]) * e[m]).sum::<f64>().abs() / g.get(&[0, 0]).sqrt()
    };
    let s = *candidates
        .iter()
        .max_by(|&&p, &&q| align(p).total_cmp(&align(q)).then(q.cmp(&p)))
        .expect("non-empty");
    let q = q_value(inv, s).ok_or(MoebiusError::OrderTooLow { need: 4, have: inv.order })?;
    let cq = candidates.iter().map(|&i| (i + 1, q_value(inv, i).unwrap_or(f64::NAN))).collect();
    Ok(ClassifiedPoint {
        point: inv.point.clone(),
        special_index: s + 1,
        q,
        sphere_motion: motion,
        ambiguous: candidates.len() > 1,
        candidates: cq,
        b: inv.frame.b,
    })
}

/// Local classification of a generic conformally flat hypersurface with
/// closed Möbius form by the sign of Q.
pub fn classify(spec: &ImmersionSpec, points: &[Vec<f64>], opts: &VerifyOptions) -> Result<Classification, VerifyError> {
    let ev = evaluate_order5(spec, points, opts)?;
    let pre = preconditions(&ev.ok.iter().collect::<Vec<_>>(), opts.tol.route);
    pre.require_closed()?;
    let classified: Vec<ClassifiedPoint> =
        par_map(&ev.ok, classify_point).into_iter().collect::<Result<_, _>>()?;
    let tol_q = opts.tol.q;
    let qs: Vec<f64> = classified.iter().map(|c| c.q).collect();
    let q_stats = QStats {
        min: qs.iter().copied().fold(f64::INFINITY, f64::min),
        max: qs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: qs.iter().sum::<f64>() / qs.len() as f64,
    };
    let verdict = if qs.iter().all(|q| q.abs() <= tol_q) {
        Verdict::Cylinder
    } else if qs.iter().all(|&q| q < -tol_q) {
        Verdict::Cone
    } else if qs.iter().all(|&q| q > tol_q) {
        Verdict::Rotational
    } else {
        Verdict::InconsistentSign
    };
    let mut hist = [0usize; 3];
    for c in &classified {
        hist[c.special_index - 1] += 1;
    }
    let degenerate = classified.iter().any(|c| c.b.iter().any(|b| b.abs() <= DEGENERATE_B));
    let out = Classification {
        immersion: spec.name.clone(),
        verdict,
        tol_q,
        q_stats,
        special_index_histogram: hist,
        preconditions: pre,
        degenerate,
        ambiguous_points: classified.iter().filter(|c| c.ambiguous).count(),
        points: classified,
        skipped: ev.skipped,
    };
    if verdict == Verdict::InconsistentSign {
        return Err(VerifyError::InconsistentSign(Box::new(out)));
    }
    Ok(out)
}

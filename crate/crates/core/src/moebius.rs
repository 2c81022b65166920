//! Möbius invariants of a hypersurface `f: M³ → R⁴` at a point.
//!
//! Coordinate-level construction (jets throughout):
//!
//! * `ρ² = (3/2)(|II|² − 3H²)`, `Y = ρ((1+|f|²)/2, (1−|f|²)/2, f)`,
//! * Möbius metric `g = ρ² I` and `B = ρ(II − H I)`,
//! * `A = Ric + B g⁻¹ B − tr(A) g` with `tr(A) = 1/6 + R/4`,
//! * `C_k = −½ g^{ij} (∇B)_{ikj}`,
//! * `ξ` the mean curvature sphere and `N = −⅓ΔY − (1/18)⟨ΔY,ΔY⟩Y`.
//!
//! Frame quantities are obtained at the point from the principal frame of
//! `B` with respect to `g`, on plain numbers only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsl::{Ambient, DslError, Expr, ImmersionSpec};
use crate::jets::Jet;
use crate::riemann::{covariant_derivative, curvature, Christoffel, CurvaturePack, MetricJets, RiemannError};
use crate::tensor::{cofactors_jets, det_f64, det_jets, symmetric_pencil, Tensor};

/// `|II|² − 3H²` at or below this is treated as an umbilic point.
pub const UMBILIC_TOL: f64 = 1e-12;
/// Minimum separation of principal curvatures for a generic point.
pub const GAP_TOL: f64 = 1e-6;
/// Threshold for a plane curvature sphere.
pub const PLANE_TOL: f64 = 1e-8;
pub const DEFAULT_ORDER: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoebiusError {
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error("differential has rank < 3 (Gram determinant {0:e})")]
    RankDeficient(f64),
    #[error("umbilic point: |II|^2 - 3H^2 = {0:e}")]
    Umbilic(f64),
    #[error("non-generic point: principal curvatures {k:?} have gap {gap:e}")]
    NonGeneric { gap: f64, k: [f64; 3] },
    #[error("jet order {have} too low, need at least {need}")]
    OrderTooLow { need: usize, have: usize },
    #[error("expected a hypersurface in R^4 with a 3-dimensional domain")]
    NotHypersurface,
    #[error("transformation maps a sampled point within {distance:e} of the inversion center")]
    InversionCenter { distance: f64 },
    #[error("invalid transformation: {0}")]
    InvalidMap(String),
}

/// Lorentz inner product on R⁶₁: `−x0y0 + Σ_{k≥1} x_k y_k`.
pub fn lorentz(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
}

pub fn lorentz_jets(x: &[Jet], y: &[Jet]) -> Jet {
    let mut acc = -(&x[0] * &y[0]);
    for k in 1..x.len() {
        acc += &(&x[k] * &y[k]);
    }
    acc
}

fn values(v: &[Jet]) -> Vec<f64> {
    v.iter().map(Jet::value).collect()
}

/// Directional derivative `Σ_a dir[a] ∂_a v` at the expansion point.
fn directional(v: &[Jet], dir: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|c| (0..dir.len()).map(|a| dir[a] * c.partial(a).expect("order ≥ 1").value()).sum())
        .collect()
}

fn sum_jets(items: impl IntoIterator<Item = Jet>) -> Jet {
    let mut it = items.into_iter();
    let mut acc = it.next().expect("non-empty sum");
    for j in it {
        acc += &j;
    }
    acc
}

/// Euclidean data of the immersion at the expansion point.
#[derive(Clone, Debug)]
pub struct EuclideanInvariants {
    pub position: Vec<Jet>,
    /// First fundamental form `I_ij`.
    pub first: Tensor<Jet>,
    /// Second fundamental form `h_ij` with respect to `normal`.
    pub second: Tensor<Jet>,
    /// Unit normal with `det[∂₁f, ∂₂f, ∂₃f, n] > 0`.
    pub normal: Vec<Jet>,
    pub mean: Jet,
    /// `|II|² − 3H²`.
    pub trace_free_norm2: Jet,
    /// Principal curvatures, ascending.
    pub k: [f64; 3],
    /// `I`-orthonormal principal directions (coordinate components).
    pub principal_dirs: Vec<Vec<f64>>,
}

pub fn euclidean_invariants(f: &[Jet]) -> Result<EuclideanInvariants, MoebiusError> {
    if f.len() != 4 || f[0].nvars() != 3 {
        return Err(MoebiusError::NotHypersurface);
    }
    let order = f.iter().map(Jet::order).min().unwrap_or(0);
    if order < 2 {
        return Err(MoebiusError::OrderTooLow { need: 2, have: order });
    }
    let df: Vec<Vec<Jet>> = (0..3).map(|i| f.iter().map(|c| c.partial(i).expect("order ≥ 2")).collect()).collect();
    let first = Tensor::from_fn(3, 2, |ij| sum_jets((0..4).map(|a| &df[ij[0]][a] * &df[ij[1]][a])));
    let gram = first.values();
    let det_i = det_f64(&gram.matrix());
    let scale = (0..3).map(|i| gram.get(&[i, i])).sum::<f64>();
    if !(det_i > 1e-14 * scale.powi(3)) {
        return Err(MoebiusError::RankDeficient(det_i));
    }
    // n_a = det[∂₁f, ∂₂f, ∂₃f, e_a] = (−1)^{a+3} · (3×3 minor without row a)
    let raw: Vec<Jet> = (0..4)
        .map(|a| {
            let rows: Vec<Vec<Jet>> =
                (0..4).filter(|&b| b != a).map(|b| (0..3).map(|i| df[i][b].clone()).collect()).collect();
            let m = det_jets(&rows);
            if (a + 3) % 2 == 0 {
                m
            } else {
                -m
            }
        })
        .collect();
    let norm2 = sum_jets(raw.iter().map(|c| c * c));
    let inv_norm = norm2.powf(-0.5).map_err(|_| MoebiusError::RankDeficient(det_i))?;
    let normal: Vec<Jet> = raw.iter().map(|c| c * &inv_norm).collect();
    let second = Tensor::from_fn(3, 2, |ij| {
        sum_jets((0..4).map(|a| &df[ij[0]][a].partial(ij[1]).expect("order ≥ 2") * &normal[a]))
    });
    let rows: Vec<Vec<Jet>> = (0..3).map(|i| (0..3).map(|j| first.get(&[i, j]).clone()).collect()).collect();
    let cof = cofactors_jets(&rows);
    let inv_det = det_jets(&rows).recip().map_err(|_| MoebiusError::RankDeficient(det_i))?;
    let inv = Tensor::from_fn(3, 2, |ij| &cof[ij[1]][ij[0]] * &inv_det);
    let mean = sum_jets(crate::tensor::indices(3, 2).map(|ij| inv.get(&ij) * second.get(&ij))) * (1.0 / 3.0);
    // |II|² = I^{ik} I^{jl} h_ij h_kl = tr((I⁻¹h)²)
    let s = Tensor::from_fn(3, 2, |ij| sum_jets((0..3).map(|k| inv.get(&[ij[0], k]) * second.get(&[k, ij[1]]))));
    let ii2 = sum_jets(crate::tensor::indices(3, 2).map(|ij| s.get(&ij) * s.get(&[ij[1], ij[0]])));
    let trace_free_norm2 = &ii2 - &(&mean * &mean * 3.0);
    if trace_free_norm2.value() <= UMBILIC_TOL {
        return Err(MoebiusError::Umbilic(trace_free_norm2.value()));
    }
    let (kv, dirs) = symmetric_pencil(&second.values().matrix(), &gram.matrix())
        .ok_or(MoebiusError::RankDeficient(det_i))?;
    let k = [kv[0], kv[1], kv[2]];
    let gap = (k[1] - k[0]).min(k[2] - k[1]);
    if gap < GAP_TOL {
        return Err(MoebiusError::NonGeneric { gap, k });
    }
    Ok(EuclideanInvariants {
        position: f.to_vec(),
        first,
        second,
        normal,
        mean,
        trace_free_norm2,
        k,
        principal_dirs: dirs,
    })
}

/// Möbius density `ρ²`, `ρ`, and the Möbius position `Y`.
pub fn moebius_density(e: &EuclideanInvariants) -> Result<(Jet, Jet, Vec<Jet>), MoebiusError> {
    let rho2 = &e.trace_free_norm2 * 1.5;
    if rho2.value() <= 1.5 * UMBILIC_TOL {
        return Err(MoebiusError::Umbilic(e.trace_free_norm2.value()));
    }
    let rho = rho2.sqrt().expect("ρ² > 0");
    let f = &e.position;
    let f2 = sum_jets(f.iter().map(|c| c * c));
    let mut y = vec![(&f2 + 1.0) * 0.5, (-&f2 + 1.0) * 0.5];
    y.extend(f.iter().cloned());
    let y = y.iter().map(|c| c * &rho).collect();
    Ok((rho2, rho, y))
}

/// `g = ρ² I` and `B = ρ(II − H I)`.
pub fn moebius_metric_and_b(e: &EuclideanInvariants, rho2: &Jet, rho: &Jet) -> Result<(MetricJets, Tensor<Jet>), MoebiusError> {
    let g = MetricJets::new(e.first.map(|c| c * rho2))?;
    let b = Tensor::from_fn(3, 2, |ij| &(e.second.get(ij) - &(e.first.get(ij) * &e.mean)) * rho);
    Ok((g, b))
}

/// `∇B` and `C_k = −½ g^{ij}(∇B)_{ikj}`.
pub fn moebius_form(g: &MetricJets, b: &Tensor<Jet>, gamma: &Christoffel) -> Result<(Tensor<Jet>, Tensor<Jet>), MoebiusError> {
    let grad_b = covariant_derivative(b, gamma)?;
    let c = Tensor::from_fn(3, 1, |k| {
        sum_jets(crate::tensor::indices(3, 2).map(|ij| g.inverse().get(&ij) * grad_b.get(&[ij[0], k[0], ij[1]]))) * -0.5
    });
    Ok((grad_b, c))
}

/// Blaschke tensor, the trace formula `1/6 + R/4`, Möbius form and `∇B`.
#[derive(Clone, Debug)]
pub struct Blaschke {
    pub a: Tensor<Jet>,
    pub tr_a: Jet,
    pub c: Tensor<Jet>,
    pub grad_b: Tensor<Jet>,
}

fn b_ginv_b(g: &MetricJets, b: &Tensor<Jet>) -> Tensor<Jet> {
    Tensor::from_fn(3, 2, |ij| {
        sum_jets(crate::tensor::indices(3, 2).map(|kl| &(b.get(&[ij[0], kl[0]]) * g.inverse().get(&kl)) * b.get(&[kl[1], ij[1]])))
    })
}

pub fn blaschke_and_c(g: &MetricJets, b: &Tensor<Jet>, curv: &CurvaturePack) -> Result<Blaschke, MoebiusError> {
    let tr_a = &curv.scalar * 0.25 + 1.0 / 6.0;
    let bb = b_ginv_b(g, b);
    let a = Tensor::from_fn(3, 2, |ij| &(curv.ric.get(ij) + bb.get(ij)) - &(g.g().get(ij) * &tr_a));
    let (grad_b, c) = moebius_form(g, b, &curv.gamma)?;
    Ok(Blaschke { a, tr_a, c, grad_b })
}

/// Mean curvature sphere `ξ` as a jet vector in R⁶₁.
pub fn mean_curvature_sphere(e: &EuclideanInvariants) -> Vec<Jet> {
    let f = &e.position;
    let h = &e.mean;
    let f2 = sum_jets(f.iter().map(|c| c * c));
    let fn_ = sum_jets(f.iter().zip(&e.normal).map(|(a, b)| a * b));
    let mut xi = vec![&(&(&f2 + 1.0) * h) * 0.5 + &fn_, &(&(-&f2 + 1.0) * h) * 0.5 - &fn_];
    xi.extend(f.iter().zip(&e.normal).map(|(fa, na)| &(h * fa) + na));
    xi
}

/// `N = −⅓ΔY − (1/18)⟨ΔY,ΔY⟩Y` with `ΔY^a = g^{ij}(∂_i∂_jY^a − Γ^k_ij ∂_kY^a)`.
pub fn conformal_position_n(y: &[Jet], g: &MetricJets, gamma: &Christoffel) -> Result<Vec<Jet>, MoebiusError> {
    let have = y.iter().map(Jet::order).min().unwrap_or(0);
    if have < 2 {
        return Err(MoebiusError::OrderTooLow { need: 2, have });
    }
    let lap: Vec<Jet> = y
        .iter()
        .map(|ya| {
            let d: Vec<Jet> = (0..3).map(|k| ya.partial(k).expect("order ≥ 2")).collect();
            sum_jets(crate::tensor::indices(3, 2).map(|ij| {
                let mut hess = d[ij[0]].partial(ij[1]).expect("order ≥ 2");
                for k in 0..3 {
                    hess -= &(gamma.get(k, ij[0], ij[1]) * &d[k]);
                }
                g.inverse().get(&ij) * &hess
            }))
        })
        .collect();
    let ll = lorentz_jets(&lap, &lap);
    Ok(lap.iter().zip(y).map(|(l, ya)| &(l * (-1.0 / 3.0)) - &(&(&ll * ya) * (1.0 / 18.0))).collect())
}

/// Options for [`MoebiusInvariants::compute`].
#[derive(Clone, Copy, Debug)]
pub struct ComputeOptions {
    pub order: usize,
    /// Multiplies `B` before anything downstream is derived from it
    /// (fault injection for harness self-tests; 1.0 in normal use).
    pub b_scale: f64,
}

impl Default for ComputeOptions {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, b_scale: 1.0 }
    }
}

impl ComputeOptions {
    pub fn order(order: usize) -> Self {
        Self { order, ..Self::default() }
    }
}

/// Principal frame of `B` with respect to `g`: `b₁ < b₂ < b₃`, `E_i`
/// g-orthonormal and positively oriented in coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalFrame {
    pub b: [f64; 3],
    pub vectors: Vec<Vec<f64>>,
}

/// Frame components of the invariants at the point (stage-dependent).
#[derive(Clone, Debug, Default)]
pub struct FrameData {
    /// `B_{ij,k}`.
    pub grad_b: Option<Tensor<f64>>,
    pub c: Option<Vec<f64>>,
    pub a: Option<Tensor<f64>>,
    pub riem: Option<Tensor<f64>>,
    pub ric: Option<Tensor<f64>>,
    pub scalar: Option<f64>,
    /// `1/6 + R/4`.
    pub tr_a: Option<f64>,
    /// `C_{i,j}`.
    pub grad_c: Option<Tensor<f64>>,
    /// `B_{ij,kl}`.
    pub hess_b: Option<Tensor<f64>>,
    /// `A_{ij,k}`.
    pub grad_a: Option<Tensor<f64>>,
    /// `S_{ij,k}` of the Schouten tensor of `g`.
    pub grad_schouten: Option<Tensor<f64>>,
    /// `C_{i,jk}`.
    pub hess_c: Option<Tensor<f64>>,
}

/// Per-point bundle of Möbius invariants.
#[derive(Clone, Debug)]
pub struct MoebiusInvariants {
    pub point: Vec<f64>,
    pub order: usize,
    pub euclid: EuclideanInvariants,
    pub rho2: Jet,
    pub rho: Jet,
    pub y: Vec<Jet>,
    pub xi: Vec<Jet>,
    pub metric: MetricJets,
    pub b: Tensor<Jet>,
    pub frame: PrincipalFrame,
    pub grad_b: Option<Tensor<Jet>>,
    pub c: Option<Tensor<Jet>>,
    pub curvature: Option<CurvaturePack>,
    pub a: Option<Tensor<Jet>>,
    pub tr_a: Option<Jet>,
    pub grad_c: Option<Tensor<Jet>>,
    pub hess_b: Option<Tensor<Jet>>,
    pub n: Option<Vec<Jet>>,
    pub grad_a: Option<Tensor<Jet>>,
    pub grad_schouten: Option<Tensor<Jet>>,
    pub hess_c: Option<Tensor<Jet>>,
    pub in_frame: FrameData,
}

fn principal_frame(b: &Tensor<f64>, g: &Tensor<f64>) -> Result<PrincipalFrame, MoebiusError> {
    let (vals, mut vecs) =
        symmetric_pencil(&b.matrix(), &g.matrix()).ok_or(MoebiusError::RankDeficient(det_f64(&g.matrix())))?;
    for v in vecs.iter_mut().take(2) {
        let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    if det_f64(&vecs) < 0.0 {
        vecs[2].iter_mut().for_each(|x| *x = -*x);
    }
    Ok(PrincipalFrame { b: [vals[0], vals[1], vals[2]], vectors: vecs })
}

impl MoebiusInvariants {
    /// Evaluate the spec at `point` and derive everything the jet order allows:
    /// order ≥ 2 gives `g`, `B` and the frame; ≥ 3 adds `∇B`, `C`; ≥ 4 adds
    /// curvature, `A`, `∇C`, `∇∇B`, `N`; ≥ 5 adds `∇A`, `∇S`, `∇∇C`, `dN`.
    pub fn compute(spec: &ImmersionSpec, point: &[f64], opts: ComputeOptions) -> Result<Self, MoebiusError> {
        if spec.ambient != Ambient::Euc4 {
            return Err(MoebiusError::NotHypersurface);
        }
        let f = spec.evaluate_jets(point, opts.order)?;
        Self::from_jets(point, &f, opts)
    }

    pub fn from_jets(point: &[f64], f: &[Jet], opts: ComputeOptions) -> Result<Self, MoebiusError> {
        let order = f.iter().map(Jet::order).min().unwrap_or(0);
        let euclid = euclidean_invariants(f)?;
        let (rho2, rho, y) = moebius_density(&euclid)?;
        let (metric, mut b) = moebius_metric_and_b(&euclid, &rho2, &rho)?;
        if opts.b_scale != 1.0 {
            b = b.map(|c| c * opts.b_scale);
        }
        let xi = mean_curvature_sphere(&euclid);
        let gv = metric.g().values();
        let frame = principal_frame(&b.values(), &gv)?;
        let e = frame.vectors.clone();
        let mut out = Self {
            point: point.to_vec(),
            order,
            euclid,
            rho2,
            rho,
            y,
            xi,
            metric,
            b,
            frame,
            grad_b: None,
            c: None,
            curvature: None,
            a: None,
            tr_a: None,
            grad_c: None,
            hess_b: None,
            n: None,
            grad_a: None,
            grad_schouten: None,
            hess_c: None,
            in_frame: FrameData::default(),
        };
        if order < 3 {
            return Ok(out);
        }
        let gamma = if order >= 4 {
            let pack = curvature(&out.metric)?;
            let gamma = pack.gamma.clone();
            out.curvature = Some(pack);
            gamma
        } else {
            crate::riemann::christoffel(&out.metric)?
        };
        let (grad_b, c) = moebius_form(&out.metric, &out.b, &gamma)?;
        out.in_frame.grad_b = Some(grad_b.values().in_frame(&e));
        out.in_frame.c = Some(c.values().in_frame(&e).data().to_vec());
        if order >= 4 {
            let pack = out.curvature.as_ref().expect("computed above");
            let bl = blaschke_and_c(&out.metric, &out.b, pack)?;
            let grad_c = covariant_derivative(&c, &gamma)?;
            let hess_b = covariant_derivative(&grad_b, &gamma)?;
            out.n = Some(conformal_position_n(&out.y, &out.metric, &gamma)?);
            let fd = &mut out.in_frame;
            fd.a = Some(bl.a.values().in_frame(&e));
            fd.riem = Some(pack.riem.values().in_frame(&e));
            fd.ric = Some(pack.ric.values().in_frame(&e));
            fd.scalar = Some(pack.scalar.value());
            fd.tr_a = Some(bl.tr_a.value());
            fd.grad_c = Some(grad_c.values().in_frame(&e));
            fd.hess_b = Some(hess_b.values().in_frame(&e));
            if order >= 5 {
                let grad_a = covariant_derivative(&bl.a, &gamma)?;
                let grad_s = covariant_derivative(&pack.schouten, &gamma)?;
                let hess_c = covariant_derivative(&grad_c, &gamma)?;
                fd.grad_a = Some(grad_a.values().in_frame(&e));
                fd.grad_schouten = Some(grad_s.values().in_frame(&e));
                fd.hess_c = Some(hess_c.values().in_frame(&e));
                out.grad_a = Some(grad_a);
                out.grad_schouten = Some(grad_s);
                out.hess_c = Some(hess_c);
            }
            out.a = Some(bl.a);
            out.tr_a = Some(bl.tr_a);
            out.grad_c = Some(grad_c);
            out.hess_b = Some(hess_b);
        }
        out.grad_b = Some(grad_b);
        out.c = Some(c);
        Ok(out)
    }

    pub fn b_values(&self) -> [f64; 3] {
        self.frame.b
    }

    pub fn frame_vectors(&self) -> &[Vec<f64>] {
        &self.frame.vectors
    }

    fn require(&self, need: usize) -> Result<(), MoebiusError> {
        if self.order < need {
            Err(MoebiusError::OrderTooLow { need, have: self.order })
        } else {
            Ok(())
        }
    }

    /// `Y_i = dY(E_i)` at the point.
    pub fn y_frame(&self) -> Vec<Vec<f64>> {
        self.frame.vectors.iter().map(|e| directional(&self.y, e)).collect()
    }

    /// Null-frame relations as named residuals (each should vanish).
    pub fn frame_relations(&self) -> Result<Vec<(String, f64)>, MoebiusError> {
        self.require(4)?;
        let y = values(&self.y);
        let n = values(self.n.as_ref().expect("order ≥ 4"));
        let xi = values(&self.xi);
        let yi = self.y_frame();
        let mut out = vec![
            ("<Y,Y>".to_string(), lorentz(&y, &y)),
            ("<N,N>".to_string(), lorentz(&n, &n)),
            ("<N,Y>-1".to_string(), lorentz(&n, &y) - 1.0),
            ("<xi,xi>-1".to_string(), lorentz(&xi, &xi) - 1.0),
            ("<xi,Y>".to_string(), lorentz(&xi, &y)),
            ("<xi,N>".to_string(), lorentz(&xi, &n)),
        ];
        let mut gram = 0.0f64;
        let mut mixed = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let d = if i == j { 1.0 } else { 0.0 };
                gram = gram.max((lorentz(&yi[i], &yi[j]) - d).abs());
            }
            mixed = mixed
                .max(lorentz(&yi[i], &y).abs())
                .max(lorentz(&yi[i], &n).abs())
                .max(lorentz(&yi[i], &xi).abs());
        }
        out.push(("<Y_i,Y_j>-delta".to_string(), gram));
        out.push(("<Y_i,{Y,N,xi}>".to_string(), mixed));
        Ok(out)
    }

    /// Independent route to `A`, `C` and `B` through the structure equations.
    pub fn frame_oracle_ac(&self) -> Result<FrameOracle, MoebiusError> {
        self.require(4)?;
        let yi = self.y_frame();
        let n = self.n.as_ref().expect("order ≥ 4");
        let nv = values(n);
        let xi = values(&self.xi);
        let dxi: Vec<Vec<f64>> = self.frame.vectors.iter().map(|e| directional(&self.xi, e)).collect();
        let b_from_xi = Tensor::from_fn(3, 2, |ij| -lorentz(&dxi[ij[0]], &yi[ij[1]]));
        let c_from_xi = (0..3).map(|i| -lorentz(&dxi[i], &nv)).collect();
        let (a_from_n, c_from_n) = if self.order >= 5 {
            let dn: Vec<Vec<f64>> = self.frame.vectors.iter().map(|e| directional(n, e)).collect();
            (
                Some(Tensor::from_fn(3, 2, |ij| lorentz(&dn[ij[0]], &yi[ij[1]]))),
                Some((0..3).map(|i| lorentz(&dn[i], &xi)).collect()),
            )
        } else {
            (None, None)
        };
        Ok(FrameOracle { a_from_n, c_from_n, b_from_xi, c_from_xi })
    }

    /// Curvature sphere `ξ_i = b_i Y + ξ` and the hyperplane test.
    pub fn curvature_sphere_test(&self, i: usize) -> CurvatureSphere {
        let y = values(&self.y);
        let xi = values(&self.xi);
        let sphere: Vec<f64> = y.iter().zip(&xi).map(|(a, b)| self.frame.b[i] * a + b).collect();
        let pairing = lorentz(&sphere, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let k = self.euclid.k[i];
        CurvatureSphere { sphere, pairing, k, is_plane: pairing.abs() < PLANE_TOL, k_is_zero: k.abs() < PLANE_TOL }
    }

    /// `‖E_i(b_i Y + ξ)‖ / ‖Y‖` (Euclidean norms in R⁶), the rate at which
    /// the i-th curvature sphere moves along its own principal direction.
    pub fn curvature_sphere_motion(&self, i: usize) -> Result<f64, MoebiusError> {
        self.require(3)?;
        let e = &self.frame.vectors[i];
        let db = self.in_frame.grad_b.as_ref().expect("order ≥ 3").get(&[i, i, i]);
        let dy = directional(&self.y, e);
        let dxi = directional(&self.xi, e);
        let y = values(&self.y);
        let bi = self.frame.b[i];
        let v: f64 = (0..6).map(|a| (db * y[a] + bi * dy[a] + dxi[a]).powi(2)).sum();
        let ny: f64 = y.iter().map(|x| x * x).sum();
        Ok((v / ny).sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct FrameOracle {
    /// `A_ij = ⟨dN(E_i), Y_j⟩` (needs order ≥ 5).
    pub a_from_n: Option<Tensor<f64>>,
    /// `C_i = ⟨dN(E_i), ξ⟩` (needs order ≥ 5).
    pub c_from_n: Option<Vec<f64>>,
    /// `B_ij = −⟨dξ(E_i), Y_j⟩`.
    pub b_from_xi: Tensor<f64>,
    /// `C_i = −⟨dξ(E_i), N⟩`.
    pub c_from_xi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSphere {
    pub sphere: Vec<f64>,
    /// `⟨ξ_i, (1,−1,0,0,0,0)⟩`, equal to `−k_i`.
    pub pairing: f64,
    pub k: f64,
    pub is_plane: bool,
    pub k_is_zero: bool,
}

// ---------------------------------------------------------------------------
// Conformal transformations of R⁴

#[derive(Clone, Debug, PartialEq)]
pub enum ConformalMap {
    Translate([f64; 4]),
    /// Orthogonal matrix (rows), possibly orientation reversing.
    Rotate([[f64; 4]; 4]),
    Dilate(f64),
    /// `x ↦ x / |x|²`.
    Invert,
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    det_f64(&m.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

impl ConformalMap {
    pub fn reverses_orientation(&self) -> bool {
        match self {
            ConformalMap::Rotate(m) => det4(m) < 0.0,
            ConformalMap::Invert => true,
            _ => false,
        }
    }

    pub fn apply_point(&self, x: &[f64; 4]) -> [f64; 4] {
        match self {
            ConformalMap::Translate(t) => std::array::from_fn(|a| x[a] + t[a]),
            ConformalMap::Rotate(m) => std::array::from_fn(|a| (0..4).map(|b| m[a][b] * x[b]).sum()),
            ConformalMap::Dilate(l) => x.map(|v| v * l),
            ConformalMap::Invert => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                x.map(|v| v / r2)
            }
        }
    }

    fn apply_exprs(&self, x: &[Expr]) -> Vec<Expr> {
        match self {
            ConformalMap::Translate(t) => x.iter().zip(t).map(|(e, c)| e + *c).collect(),
            ConformalMap::Rotate(m) => m.iter().map(|row| linear_row(row, x)).collect(),
            ConformalMap::Dilate(l) => x.iter().map(|e| e * *l).collect(),
            ConformalMap::Invert => {
                let r2 = x.iter().map(|e| e * e).reduce(|a, b| a + b).expect("four components");
                x.iter().map(|e| e / &r2).collect()
            }
        }
    }

    fn validate(&self) -> Result<(), MoebiusError> {
        match self {
            ConformalMap::Rotate(m) => {
                for a in 0..4 {
                    for b in 0..4 {
                        let dot: f64 = (0..4).map(|k| m[a][k] * m[b][k]).sum();
                        let d = if a == b { 1.0 } else { 0.0 };
                        if (dot - d).abs() > 1e-12 {
                            return Err(MoebiusError::InvalidMap("rotation matrix is not orthogonal".into()));
                        }
                    }
                }
                Ok(())
            }
            ConformalMap::Dilate(l) if !(*l > 0.0 && l.is_finite()) => {
                Err(MoebiusError::InvalidMap(format!("dilation factor {l} must be positive")))
            }
            ConformalMap::Translate(t) if t.iter().any(|v| !v.is_finite()) => {
                Err(MoebiusError::InvalidMap("non-finite translation".into()))
            }
            _ => Ok(()),
        }
    }
}

fn linear_row(row: &[f64; 4], x: &[Expr]) -> Expr {
    let terms: Vec<Expr> = row.iter().zip(x).filter(|(c, _)| **c != 0.0).map(|(c, e)| e * *c).collect();
    terms.into_iter().reduce(|a, b| a + b).unwrap_or_else(|| Expr::constant(0.0))
}

/// True when the composition reverses the orientation of R⁴.
pub fn reverses_orientation(maps: &[ConformalMap]) -> bool {
    maps.iter().filter(|m| m.reverses_orientation()).count() % 2 == 1
}

/// Compose `maps` (applied left to right) with the immersion.
pub fn moebius_transform(spec: &ImmersionSpec, maps: &[ConformalMap]) -> Result<ImmersionSpec, MoebiusError> {
    if spec.ambient != Ambient::Euc4 {
        return Err(MoebiusError::NotHypersurface);
    }
    let samples: Vec<[f64; 4]> = spec
        .sample_grid(5)
        .iter()
        .map(|p| spec.evaluate(p).map(|v| [v[0], v[1], v[2], v[3]]))
        .collect::<Result<_, _>>()?;
    let mut comps = spec.components.clone();
    let mut pts = samples;
    for m in maps {
        m.validate()?;
        if *m == ConformalMap::Invert {
            let norms: Vec<f64> = pts.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            let near = norms.iter().copied().fold(f64::INFINITY, f64::min);
            let far = norms.iter().copied().fold(0.0, f64::max);
            if near < 1e-3 * far.max(1.0) {
                return Err(MoebiusError::InversionCenter { distance: near });
            }
        }
        comps = m.apply_exprs(&comps);
        pts = pts.iter().map(|x| m.apply_point(x)).collect();
    }
    let name = if maps.is_empty() { spec.name.clone() } else { format!("T({})", spec.name) };
    Ok(ImmersionSpec::new(&name, Ambient::Euc4, comps, spec.params.clone(), spec.sample_box.clone())?)
}

/// Compose an arbitrary linear map (no conformality check); used for
/// negative controls.
pub fn linear_transform(spec: &ImmersionSpec, m: [[f64; 4]; 4]) -> Result<ImmersionSpec, MoebiusError> {
    let comps = m.iter().map(|row| linear_row(row, &spec.components)).collect();
    Ok(ImmersionSpec::new(&format!("L({})", spec.name), spec.ambient, comps, spec.params.clone(), spec.sample_box.clone())?)
}

/// Random orthogonal 4×4 matrix from Gram–Schmidt on Gaussian-ish rows.
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 4]; 4] {
    loop {
        let mut rows = [[0.0; 4]; 4];
        let mut ok = true;
        for a in 0..4 {
            let mut v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            for row in rows.iter().take(a) {
                let p: f64 = (0..4).map(|k| v[k] * row[k]).sum();
                for k in 0..4 {
                    v[k] -= p * row[k];
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 0.1 {
                ok = false;
                break;
            }
            rows[a] = v.map(|x| x / n);
        }
        if ok {
            return rows;
        }
    }
}

/// Seeded composition: translate by `shift`, rotate, dilate, invert,
/// translate again.
pub fn random_conformal_map(seed: u64, shift: [f64; 4]) -> Vec<ConformalMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = random_rotation(&mut rng);
    let dil = rng.gen_range(0.5..2.0);
    let t2: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    vec![
        ConformalMap::Translate(shift),
        ConformalMap::Rotate(rot),
        ConformalMap::Dilate(dil),
        ConformalMap::Invert,
        ConformalMap::Translate(t2),
    ]
}

/// Parameters used by CLI-style descriptions of a map; kept for reports.
pub fn describe_maps(maps: &[ConformalMap]) -> Vec<String> {
    maps.iter()
        .map(|m| match m {
            ConformalMap::Translate(t) => format!("translate{t:?}"),
            ConformalMap::Rotate(r) => format!("rotate(det={:.0})", det4(r)),
            ConformalMap::Dilate(l) => format!("dilate({l})"),
            ConformalMap::Invert => "invert".to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_components;
    use std::collections::BTreeMap;

    fn spec_from(components: &str, bx: Vec<(f64, f64)>) -> ImmersionSpec {
        ImmersionSpec::new("t", Ambient::Euc4, parse_components(components).unwrap(), BTreeMap::new(), bx).unwrap()
    }

    fn cone() -> ImmersionSpec {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let text = format!("(u1*{a:?}*cos(u2), u1*{a:?}*sin(u2), u1*{a:?}*cos(u3), u1*{a:?}*sin(u3))");
        spec_from(&text, vec![(0.8, 1.2), (0.0, 6.3), (0.0, 6.3)])
    }

    fn generic() -> ImmersionSpec {
        spec_from(
            "(u1, u2, u3, 0.6*u1^2 - 0.4*u2^2 + 0.1*u3^2 + 0.05*sin(u1 + 2*u2 - u3))",
            vec![(-0.3, 0.3), (-0.3, 0.3), (-0.3, 0.3)],
        )
    }

    #[test]
    fn cone_over_clifford_torus_values() {
        let inv = MoebiusInvariants::compute(&cone(), &[1.0, 0.3, 1.1], ComputeOptions::default()).unwrap();
        let s = 1.0 / 3f64.sqrt();
        for (k, want) in inv.euclid.k.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((k - want).abs() < 1e-12, "{:?}", inv.euclid.k);
        }
        assert!((inv.rho2.value() - 3.0).abs() < 1e-12);
        for (b, want) in inv.frame.b.iter().zip([-s, 0.0, s]) {
            assert!((b - want).abs() < 1e-12);
        }
        let fd = &inv.in_frame;
        assert!(fd.c.as_ref().unwrap().iter().all(|c| c.abs() < 1e-12));
        assert!((fd.tr_a.unwrap() - 1.0 / 6.0).abs() < 1e-12);
        let a = fd.a.as_ref().unwrap();
        assert!((a.get(&[1, 1]) + 1.0 / 6.0).abs() < 1e-10);
        assert!((a.get(&[0, 0]) - 1.0 / 6.0).abs() < 1e-10);
        assert!(fd.riem.as_ref().unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn normalizations_and_null_frame() {
        let inv = MoebiusInvariants::compute(&generic(), &[0.1, -0.2, 0.05], ComputeOptions::default()).unwrap();
        let b = inv.frame.b;
        assert!(b.iter().sum::<f64>().abs() < 1e-12);
        assert!((b.iter().map(|x| x * x).sum::<f64>() - 2.0 / 3.0).abs() < 1e-12);
        for (name, r) in inv.frame_relations().unwrap() {
            assert!(r.abs() < 1e-9, "{name}: {r}");
        }
        let y = values(&inv.y);
        assert!(lorentz_jets(&inv.y, &inv.y).max_abs_coeff() < 1e-12 * y.iter().map(|v| v * v).sum::<f64>());
    }

    #[test]
    fn oracle_routes_agree() {
        let inv = MoebiusInvariants::compute(&generic(), &[-0.1, 0.15, 0.2], ComputeOptions::default()).unwrap();
        let o = inv.frame_oracle_ac().unwrap();
        let a = inv.in_frame.a.as_ref().unwrap();
        let c = inv.in_frame.c.as_ref().unwrap();
        assert!(crate::tensor::max_abs_diff(o.a_from_n.as_ref().unwrap(), a) < 1e-8);
        for i in 0..3 {
            assert!((o.c_from_n.as_ref().unwrap()[i] - c[i]).abs() < 1e-8);
            assert!((o.c_from_xi[i] - c[i]).abs() < 1e-8);
            for j in 0..3 {
                let want = if i == j { inv.frame.b[i] } else { 0.0 };
                assert!((o.b_from_xi.get(&[i, j]) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flat_graph_is_umbilic() {
        let spec = spec_from("(u1, u2, u3, 0)", vec![(0.0, 1.0); 3]);
        let err = MoebiusInvariants::compute(&spec, &[0.5, 0.5, 0.5], ComputeOptions::default()).unwrap_err();
        assert!(matches!(err, MoebiusError::Umbilic(_)));
    }

    #[test]
    fn dilation_acts_on_y_by_a_boost() {
        let spec = generic();
        let scaled = moebius_transform(&spec, &[ConformalMap::Dilate(2.0)]).unwrap();
        let p = [0.05, 0.1, -0.15];
        let a = MoebiusInvariants::compute(&spec, &p, ComputeOptions::order(3)).unwrap();
        let b = MoebiusInvariants::compute(&scaled, &p, ComputeOptions::order(3)).unwrap();
        let (ya, yb) = (values(&a.y), values(&b.y));
        assert!(((yb[0] + yb[1]) - (ya[0] + ya[1]) / 2.0).abs() < 1e-12);
        assert!(((yb[0] - yb[1]) - (ya[0] - ya[1]) * 2.0).abs() < 1e-12);
        for k in 2..6 {
            assert!((yb[k] - ya[k]).abs() < 1e-12);
        }
        let d = crate::tensor::max_abs_diff(&a.metric.g().values(), &b.metric.g().values());
        assert!(d < 1e-9);
    }

    #[test]
    fn inversion_flips_b_and_keeps_g() {
        let spec = generic();
        let maps = [ConformalMap::Translate([3.0, 0.0, 0.0, 0.0]), ConformalMap::Invert];
        assert!(reverses_orientation(&maps));
        let t = moebius_transform(&spec, &maps).unwrap();
        let p = [0.2, -0.1, 0.1];
        let a = MoebiusInvariants::compute(&spec, &p, ComputeOptions::order(3)).unwrap();
        let b = MoebiusInvariants::compute(&t, &p, ComputeOptions::order(3)).unwrap();
        let d = crate::tensor::max_abs_diff(&a.metric.g().values(), &b.metric.g().values());
        assert!(d < 1e-9, "{d}");
        for i in 0..3 {
            assert!((a.frame.b[i] + b.frame.b[2 - i]).abs() < 1e-9);
        }
        assert!(matches!(
            moebius_transform(&spec, &[ConformalMap::Invert]),
            Err(MoebiusError::InversionCenter { .. })
        ));
    }

    #[test]
    fn identity_transform_keeps_spec() {
        let spec = generic();
        let t = moebius_transform(&spec, &[]).unwrap();
        assert_eq!(t, spec);
    }

    #[test]
    fn plane_curvature_sphere_on_cone_generator() {
        let inv = MoebiusInvariants::compute(&cone(), &[1.1, 0.3, 1.1], ComputeOptions::order(3)).unwrap();
        let t = inv.curvature_sphere_test(1);
        assert!(t.is_plane && t.k_is_zero);
        assert!(!inv.curvature_sphere_test(0).is_plane);
        assert!((inv.curvature_sphere_test(2).pairing + inv.euclid.k[2]).abs() < 1e-12);
    }
}

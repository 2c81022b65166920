//! Levi-Civita connection and curvature of a metric given as jets.
//!
//! Conventions (coordinate components, derivative index stored last):
//!
//! * `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)`, stored at `[k, i, j]`.
//! * `R^m_{jkl} = ∂_kΓ^m_{lj} − ∂_lΓ^m_{kj} + Γ^m_{kp}Γ^p_{lj} − Γ^m_{lp}Γ^p_{kj}`,
//!   i.e. the components of `R(∂_k, ∂_l)∂_j`.
//! * `R_ijkl = g_im R^m_{jkl}`, so a round sphere of curvature `K` has
//!   `R_ijkl = K(g_ik g_jl − g_il g_jk)`.
//! * `Ric_ij = g^{kl} R_ikjl`, `R = g^{ij} Ric_ij`.
//! * `(∇T)_{i…k} = ∂_k T_{i…} − Σ_slots Γ^m_{k i_s} T_{…m…}`.

use thiserror::Error;

use crate::jets::Jet;
use crate::tensor::{cofactors_jets, det_jets, indices, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiemannError {
    #[error("metric is not symmetric (component difference {0:e})")]
    NotSymmetric(f64),
    #[error("metric is not positive definite (leading minor {index} = {value:e})")]
    NotPositiveDefinite { index: usize, value: f64 },
    #[error("derivative order exhausted: need {need}, have {have}")]
    OrderExhausted { need: usize, have: usize },
    #[error("conformal factor must be positive, got {0}")]
    NonPositiveFactor(f64),
    #[error("unsupported metric dimension {0}")]
    Dimension(usize),
}

/// Symmetric positive-definite metric with jet components and its inverse.
#[derive(Clone, Debug)]
pub struct MetricJets {
    g: Tensor<Jet>,
    inv: Tensor<Jet>,
    det: Jet,
}

impl MetricJets {
    pub fn new(g: Tensor<Jet>) -> Result<Self, RiemannError> {
        let n = g.dim();
        if g.rank() != 2 || !(1..=3).contains(&n) {
            return Err(RiemannError::Dimension(n));
        }
        let scale = g.data().iter().fold(1.0f64, |m, j| m.max(j.max_abs_coeff()));
        for i in 0..n {
            for j in 0..i {
                let d = (g.get(&[i, j]) - g.get(&[j, i])).max_abs_coeff();
                if d > 1e-12 * scale {
                    return Err(RiemannError::NotSymmetric(d));
                }
            }
        }
        let rows: Vec<Vec<Jet>> = (0..n).map(|i| (0..n).map(|j| g.get(&[i, j]).clone()).collect()).collect();
        for k in 1..=n {
            let sub: Vec<Vec<Jet>> = rows[..k].iter().map(|r| r[..k].to_vec()).collect();
            let minor = det_jets(&sub).value();
            if !(minor > 0.0) {
                return Err(RiemannError::NotPositiveDefinite { index: k, value: minor });
            }
        }
        let det = det_jets(&rows);
        let inv_det = det.recip().map_err(|_| RiemannError::NotPositiveDefinite { index: n, value: 0.0 })?;
        let cof = cofactors_jets(&rows);
        // the cofactor matrix of a symmetric matrix is symmetric
        let inv = Tensor::from_fn(n, 2, |i| &cof[i[1]][i[0]] * &inv_det);
        Ok(Self { g, inv, det })
    }

    pub fn from_rows(rows: Vec<Vec<Jet>>) -> Result<Self, RiemannError> {
        let n = rows.len();
        let data = rows.into_iter().flatten().collect();
        Self::new(Tensor::from_vec(n, 2, data))
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn g(&self) -> &Tensor<Jet> {
        &self.g
    }

    pub fn inverse(&self) -> &Tensor<Jet> {
        &self.inv
    }

    pub fn det(&self) -> &Jet {
        &self.det
    }

    pub fn usable_order(&self) -> usize {
        self.g.order()
    }

    /// The metric `factor · g`.
    pub fn scaled(&self, factor: &Jet) -> Result<Self, RiemannError> {
        if !(factor.value() > 0.0) {
            return Err(RiemannError::NonPositiveFactor(factor.value()));
        }
        Self::new(self.g.map(|c| c * factor))
    }
}

/// Christoffel symbols of the second kind, `Γ^k_ij` at `[k, i, j]`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    pub symbols: Tensor<Jet>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> &Jet {
        self.symbols.get(&[k, i, j])
    }

    pub fn dim(&self) -> usize {
        self.symbols.dim()
    }
}

pub fn christoffel(m: &MetricJets) -> Result<Christoffel, RiemannError> {
    let n = m.dim();
    let have = m.usable_order();
    if have < 1 {
        return Err(RiemannError::OrderExhausted { need: 1, have });
    }
    // dg[a][i][j] = ∂_a g_ij
    let dg: Vec<Tensor<Jet>> = (0..n)
        .map(|a| m.g().map(|c| c.partial(a).expect("order checked above")))
        .collect();
    let first = Tensor::from_fn(n, 3, |idx| {
        let (l, i, j) = (idx[0], idx[1], idx[2]);
        (dg[i].get(&[j, l]) + dg[j].get(&[i, l]) - dg[l].get(&[i, j])) * 0.5
    });
    let symbols = Tensor::from_fn(n, 3, |idx| {
        let (k, i, j) = (idx[0], idx[1], idx[2]);
        let mut acc = m.inverse().get(&[k, 0]) * first.get(&[0, i, j]);
        for l in 1..n {
            acc += &(m.inverse().get(&[k, l]) * first.get(&[l, i, j]));
        }
        acc
    });
    Ok(Christoffel { symbols })
}

/// Curvature data of a metric; value-level accuracy is that of the jets.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub gamma: Christoffel,
    /// Fully lowered `R_ijkl`.
    pub riem: Tensor<Jet>,
    pub ric: Tensor<Jet>,
    pub scalar: Jet,
    pub schouten: Tensor<Jet>,
    /// Present for dimension ≥ 3; identically zero in dimension 3.
    pub weyl: Option<Tensor<Jet>>,
}

fn contract_sum(terms: impl Iterator<Item = Jet>) -> Jet {
    let mut it = terms;
    let mut acc = it.next().expect("non-empty contraction");
    for t in it {
        acc += &t;
    }
    acc
}

pub fn curvature(m: &MetricJets) -> Result<CurvaturePack, RiemannError> {
    let n = m.dim();
    let have = m.usable_order();
    if have < 2 {
        return Err(RiemannError::OrderExhausted { need: 2, have });
    }
    let gamma = christoffel(m)?;
    let dgamma: Vec<Tensor<Jet>> = (0..n)
        .map(|a| gamma.symbols.map(|c| c.partial(a).expect("order checked above")))
        .collect();
    let zero = dgamma[0].data()[0].zero_like();
    let mut up = Tensor::from_fn(n, 4, |_| zero.clone());
    for mm in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let mut r = dgamma[k].get(&[mm, l, j]) - dgamma[l].get(&[mm, k, j]);
                    for p in 0..n {
                        r += &(gamma.get(mm, k, p) * gamma.get(p, l, j));
                        r -= &(gamma.get(mm, l, p) * gamma.get(p, k, j));
                    }
                    *up.get_mut(&[mm, j, l, k]) = -&r;
                    *up.get_mut(&[mm, j, k, l]) = r;
                }
            }
        }
    }
    let riem = Tensor::from_fn(n, 4, |idx| {
        contract_sum((0..n).map(|mm| m.g().get(&[idx[0], mm]) * up.get(&[mm, idx[1], idx[2], idx[3]])))
    });
    let ric = Tensor::from_fn(n, 2, |idx| {
        contract_sum(
            indices(n, 2).map(|kl| m.inverse().get(&[kl[0], kl[1]]) * riem.get(&[idx[0], kl[0], idx[1], kl[1]])),
        )
    });
    let scalar = contract_sum(indices(n, 2).map(|ij| m.inverse().get(&ij) * ric.get(&ij)));
    let schouten_factor = if n > 1 { 1.0 / (2.0 * (n as f64 - 1.0)) } else { 0.0 };
    let schouten = Tensor::from_fn(n, 2, |ij| ric.get(ij) - &(m.g().get(ij) * &scalar) * schouten_factor);
    let weyl = (n >= 3).then(|| {
        let g = m.g();
        let c1 = 1.0 / (n as f64 - 2.0);
        let c2 = 1.0 / (n as f64 - 1.0);
        Tensor::from_fn(n, 4, |x| {
            let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
            let mut bracket = ric.get(&[i, k]) * g.get(&[j, l]);
            bracket -= &(ric.get(&[j, k]) * g.get(&[i, l]));
            bracket += &(g.get(&[i, k]) * ric.get(&[j, l]));
            bracket -= &(g.get(&[j, k]) * ric.get(&[i, l]));
            let gg = g.get(&[i, k]) * g.get(&[j, l]) - g.get(&[j, k]) * g.get(&[i, l]);
            bracket -= &(&(&gg * &scalar) * c2);
            riem.get(x) - &(&bracket * c1)
        })
    });
    Ok(CurvaturePack { gamma, riem, ric, scalar, schouten, weyl })
}

/// Covariant derivative of a covariant tensor; the new index is last.
pub fn covariant_derivative(t: &Tensor<Jet>, gamma: &Christoffel) -> Result<Tensor<Jet>, RiemannError> {
    let n = t.dim();
    let have = t.order().min(gamma.symbols.order() + 1);
    if have < 1 {
        return Err(RiemannError::OrderExhausted { need: 1, have });
    }
    let rank = t.rank();
    let partials: Vec<Tensor<Jet>> = (0..n)
        .map(|a| t.map(|c| c.partial(a).expect("order checked above")))
        .collect();
    Ok(Tensor::from_fn(n, rank + 1, |idx| {
        let k = idx[rank];
        let base = &idx[..rank];
        let mut acc = partials[k].get(base).clone();
        let mut moved = base.to_vec();
        for s in 0..rank {
            for mm in 0..n {
                moved[s] = mm;
                acc -= &(gamma.get(mm, k, base[s]) * t.get(&moved));
            }
            moved[s] = base[s];
        }
        acc
    }))
}

/// Gradient of a scalar jet as a rank-1 tensor.
pub fn gradient(f: &Jet, dim: usize) -> Result<Tensor<Jet>, RiemannError> {
    if f.order() < 1 {
        return Err(RiemannError::OrderExhausted { need: 1, have: 0 });
    }
    Ok(Tensor::from_fn(dim, 1, |i| f.partial(i[0]).expect("order checked above")))
}

/// Frame curvature components of `ρ²·g̃` obtained from those of `g̃`.
#[derive(Clone, Debug)]
pub struct ConformalCurvature {
    /// `R_ijij` in the frame `E_i = e_i / ρ` (symmetric, zero diagonal).
    pub sectional: Vec<Vec<f64>>,
    /// `R_ijik` for distinct `i, j, k` at `[i, j, k]`; zero elsewhere.
    pub mixed: Tensor<f64>,
}

impl ConformalCurvature {
    /// Largest deviation from a fully lowered frame curvature tensor.
    pub fn max_deviation(&self, riem_frame: &Tensor<f64>) -> f64 {
        let n = riem_frame.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max((self.sectional[i][j] - riem_frame.get(&[i, j, i, j])).abs());
                }
                for k in 0..n {
                    if i != j && j != k && i != k {
                        worst = worst.max((self.mixed.get(&[i, j, k]) - riem_frame.get(&[i, j, i, k])).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Curvature of `g = ρ² g̃` from conformal-change formulas.
///
/// With `σ = 1/ρ`, so that `g = σ⁻² g̃`, and `e_i` a `g̃`-orthonormal frame:
/// `R_ijij = σ²R̃_ijij + σσ_ii + σσ_jj − |∇σ|²` and `R_ijik = σ²R̃_ijik + σσ_jk`,
/// where `σ_ij` is the `g̃`-Hessian in the frame `e` and the left sides are
/// taken in the `g`-orthonormal frame `σ e_i`.
pub fn conformal_product_curvature_oracle(
    rho: &Jet,
    base: &MetricJets,
    frame: &[Vec<f64>],
) -> Result<ConformalCurvature, RiemannError> {
    if !(rho.value() > 0.0) {
        return Err(RiemannError::NonPositiveFactor(rho.value()));
    }
    let have = rho.order().min(base.usable_order());
    if have < 2 {
        return Err(RiemannError::OrderExhausted { need: 2, have });
    }
    let n = base.dim();
    let sigma = rho.recip().expect("ρ > 0");
    let pack = curvature(base)?;
    let ds = gradient(&sigma, n)?;
    let hess = covariant_derivative(&ds, &pack.gamma)?.values().in_frame(frame);
    let dsv = ds.values();
    let inv = base.inverse().values();
    let mut grad2 = 0.0;
    for a in 0..n {
        for b in 0..n {
            grad2 += inv.get(&[a, b]) * dsv.get(&[a]) * dsv.get(&[b]);
        }
    }
    let rt = pack.riem.values().in_frame(frame);
    let s = sigma.value();
    let sectional = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        s * s * rt.get(&[i, j, i, j]) + s * hess.get(&[i, i]) + s * hess.get(&[j, j]) - grad2
                    }
                })
                .collect()
        })
        .collect();
    let mixed = Tensor::from_fn(n, 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        if i != j && j != k && i != k {
            s * s * rt.get(&[i, j, i, k]) + s * hess.get(&[j, k])
        } else {
            0.0
        }
    });
    Ok(ConformalCurvature { sectional, mixed })
}

/// Gram–Schmidt orthonormal frame for a value-level metric (coordinate
/// basis order).
pub fn orthonormal_frame(g: &Tensor<f64>) -> Vec<Vec<f64>> {
    let n = g.dim();
    let dot = |u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += u[a] * g.get(&[a, b]) * v[b];
            }
        }
        s
    };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v: Vec<f64> = (0..n).map(|a| if a == i { 1.0 } else { 0.0 }).collect();
        for e in &out {
            let p = dot(&v, e);
            for a in 0..n {
                v[a] -= p * e[a];
            }
        }
        let norm = dot(&v, &v).sqrt();
        out.push(v.into_iter().map(|x| x / norm).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::Jet;

    fn vars(p: &[f64], order: usize) -> Vec<Jet> {
        Jet::variables(p, order).unwrap()
    }

    fn random_metric(p: &[f64], order: usize) -> MetricJets {
        let x = vars(p, order);
        let n = p.len();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let arg = &(&x[i] * &x[j]) + 0.3 * (i + j) as f64;
                        let mut v = arg.sin() * 0.2;
                        if i == j {
                            v = v + (&x[(i + 1) % n] * 0.7).cos() + 1.5;
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        MetricJets::from_rows(rows).unwrap()
    }

    #[test]
    fn euclidean_christoffels_vanish() {
        let x = vars(&[0.1, 0.2, 0.3], 3);
        let one = x[0].lift(1.0);
        let zero = x[0].lift(0.0);
        let rows = (0..3).map(|i| (0..3).map(|j| if i == j { one.clone() } else { zero.clone() }).collect()).collect();
        let m = MetricJets::from_rows(rows).unwrap();
        let g = christoffel(&m).unwrap();
        assert!(g.symbols.data().iter().all(|c| c.max_abs_coeff() == 0.0));
    }

    #[test]
    fn round_sphere() {
        let th = 0.8;
        let x = vars(&[th, 0.4], 4);
        let s = x[0].sin();
        let rows = vec![vec![x[0].lift(1.0), x[0].lift(0.0)], vec![x[0].lift(0.0), &s * &s]];
        let m = MetricJets::from_rows(rows).unwrap();
        let gam = christoffel(&m).unwrap();
        assert!((gam.get(0, 1, 1).value() + th.sin() * th.cos()).abs() < 1e-14);
        assert!((gam.get(1, 0, 1).value() - th.cos() / th.sin()).abs() < 1e-14);
        let pack = curvature(&m).unwrap();
        let k = pack.riem.get(&[0, 1, 0, 1]).value() / m.det().value();
        assert!((k - 1.0).abs() < 1e-12);
        assert!((pack.scalar.value() - 2.0).abs() < 1e-12);
        assert!(pack.weyl.is_none());
    }

    #[test]
    fn hyperbolic_half_plane() {
        let x = vars(&[0.3, 1.7], 4);
        let w = x[1].powi(-2).unwrap();
        let rows = vec![vec![w.clone(), x[0].lift(0.0)], vec![x[0].lift(0.0), w]];
        let m = MetricJets::from_rows(rows).unwrap();
        let pack = curvature(&m).unwrap();
        let k = pack.riem.get(&[0, 1, 0, 1]).value() / m.det().value();
        assert!((k + 1.0).abs() < 1e-12);
        assert!((pack.scalar.value() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_metrics() {
        let x = vars(&[0.1, 0.2], 2);
        let rows = vec![vec![x[0].lift(1.0), x[0].clone()], vec![x[1].clone(), x[0].lift(1.0)]];
        assert!(matches!(MetricJets::from_rows(rows), Err(RiemannError::NotSymmetric(_))));
        let rows = vec![vec![x[0].lift(1.0), x[0].lift(2.0)], vec![x[0].lift(2.0), x[0].lift(1.0)]];
        assert!(matches!(MetricJets::from_rows(rows), Err(RiemannError::NotPositiveDefinite { index: 2, .. })));
        let m = random_metric(&[0.1, 0.2], 1);
        assert!(matches!(curvature(&m), Err(RiemannError::OrderExhausted { need: 2, have: 1 })));
    }

    #[test]
    fn curvature_symmetries_bianchi_and_weyl() {
        let m = random_metric(&[0.2, -0.4, 0.5], 4);
        let pack = curvature(&m).unwrap();
        let r = pack.riem.values();
        for x in indices(3, 4) {
            let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
            let v = r.get(&x);
            assert!((v + r.get(&[j, i, k, l])).abs() < 1e-10);
            assert!((v + r.get(&[i, j, l, k])).abs() < 1e-10);
            assert!((v - r.get(&[k, l, i, j])).abs() < 1e-10);
            assert!((v + r.get(&[i, k, l, j]) + r.get(&[i, l, j, k])).abs() < 1e-10);
        }
        let ric = pack.ric.values();
        let sch = pack.schouten.values();
        for ij in indices(3, 2) {
            assert!((ric.get(&ij) - ric.get(&[ij[1], ij[0]])).abs() < 1e-10);
            assert!((sch.get(&ij) - sch.get(&[ij[1], ij[0]])).abs() < 1e-10);
        }
        let inv = m.inverse().values();
        let tr: f64 = indices(3, 2).map(|ij| inv.get(&ij) * sch.get(&ij)).sum();
        assert!((tr - pack.scalar.value() * (1.0 - 3.0 / 4.0)).abs() < 1e-10);
        assert!(pack.weyl.unwrap().values().max_abs() < 1e-9);
    }

    #[test]
    fn metric_compatibility_and_leibniz() {
        let m = random_metric(&[0.3, 0.1, -0.2], 3);
        let gam = christoffel(&m).unwrap();
        let dg = covariant_derivative(m.g(), &gam).unwrap();
        assert!(dg.data().iter().all(|c| c.max_abs_coeff() < 1e-10));
        let x = vars(&[0.3, 0.1, -0.2], 3);
        let f = (&x[0] * &x[2]).exp();
        let fg = m.g().map(|c| c * &f);
        let lhs = covariant_derivative(&fg, &gam).unwrap().values();
        let df = gradient(&f, 3).unwrap().values();
        for x in indices(3, 3) {
            let rhs = df.get(&[x[2]]) * m.g().get(&[x[0], x[1]]).value();
            assert!((lhs.get(&x) - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn ricci_identity_on_one_form() {
        let p = [0.25, -0.35, 0.15];
        let m = random_metric(&p, 4);
        let pack = curvature(&m).unwrap();
        let x = vars(&p, 4);
        let w = Tensor::from_fn(3, 1, |i| (&x[i[0]] * 1.3 + &x[(i[0] + 1) % 3]).sin());
        let d1 = covariant_derivative(&w, &pack.gamma).unwrap();
        let d2 = covariant_derivative(&d1, &pack.gamma).unwrap().values();
        let r = pack.riem.values();
        let inv = m.inverse().values();
        let wv = w.values();
        for x in indices(3, 3) {
            let (i, k, l) = (x[0], x[1], x[2]);
            let lhs = d2.get(&[i, k, l]) - d2.get(&[i, l, k]);
            let mut rhs = 0.0;
            for mm in 0..3 {
                for pp in 0..3 {
                    rhs += inv.get(&[mm, pp]) * r.get(&[pp, i, k, l]) * wv.get(&[mm]);
                }
            }
            assert!((lhs - rhs).abs() < 1e-9, "{x:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn conformal_oracle_matches_direct_curvature() {
        let p = [0.1, 0.4, -0.3];
        let base = random_metric(&p, 4);
        let x = vars(&p, 4);
        let frame = orthonormal_frame(&base.g().values());
        // ρ ≡ 1 reproduces the base curvature
        let one = x[0].lift(1.0);
        let same = conformal_product_curvature_oracle(&one, &base, &frame).unwrap();
        let direct = curvature(&base).unwrap().riem.values().in_frame(&frame);
        assert!(same.max_deviation(&direct) < 1e-12);
        let rho = (&(&x[0] * 0.5 - &x[1] * &x[2]).exp() + 0.3) * 1.2;
        let oracle = conformal_product_curvature_oracle(&rho, &base, &frame).unwrap();
        let scaled = base.scaled(&(&rho * &rho)).unwrap();
        let s = 1.0 / rho.value();
        let gframe: Vec<Vec<f64>> = frame.iter().map(|e| e.iter().map(|v| v * s).collect()).collect();
        let direct = curvature(&scaled).unwrap().riem.values().in_frame(&gframe);
        assert!(oracle.max_deviation(&direct) < 1e-9);
        assert!(conformal_product_curvature_oracle(&(-rho), &base, &frame).is_err());
    }
}

//! Built-in surfaces, the cylinder/cone/rotational constructions over them,
//! space-form surface invariants and seeded random graphs.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsl::{parse_components, Ambient, DslError, Expr, ImmersionSpec, Registry, RegistryEntry};
use crate::jets::{Elementary, Jet};
use crate::moebius::{euclidean_invariants, ComputeOptions, MoebiusError, MoebiusInvariants};
use crate::riemann::{conformal_product_curvature_oracle, curvature, orthonormal_frame, MetricJets, RiemannError};
use crate::tensor::{det_jets, Tensor};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Moebius(#[from] MoebiusError),
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error("expected a surface in {expected}, got ambient {found}")]
    WrongAmbient { expected: Ambient, found: Ambient },
    #[error("surface is not immersed at the point (Gram determinant {0:e})")]
    RankDeficient(f64),
    #[error("no generic random graph found for seed {0}")]
    Screening(u64),
}

fn sum(items: impl IntoIterator<Item = Jet>) -> Jet {
    items.into_iter().reduce(|a, b| a + b).expect("non-empty sum")
}

/// First and second fundamental forms, mean and Gaussian curvature of a
/// surface in a space form, as jets.
#[derive(Clone, Debug)]
pub struct SurfaceInvariantJets {
    pub first: Tensor<Jet>,
    pub second: Tensor<Jet>,
    pub mean: Jet,
    pub gauss: Jet,
}

/// Value-level surface invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceInvariants {
    pub first: [[f64; 2]; 2],
    pub second: [[f64; 2]; 2],
    pub mean: f64,
    pub gauss: f64,
    /// Principal curvatures, ascending.
    pub k: [f64; 2],
}

/// Sectional curvature of the ambient space form.
pub fn space_form_curvature(ambient: Ambient) -> Option<f64> {
    match ambient {
        Ambient::Euc3 => Some(0.0),
        Ambient::Sph3 => Some(1.0),
        Ambient::Hyp3 => Some(-1.0),
        Ambient::Euc4 => None,
    }
}

/// Surface invariants from component jets `x`, differentiating in the jet
/// variables `vars`. Sign of `II` follows the normal orientation; `H²` and
/// `K` do not depend on it.
pub fn surface_invariants_jets(ambient: Ambient, x: &[Jet], vars: [usize; 2]) -> Result<SurfaceInvariantJets, CatalogError> {
    let c = space_form_curvature(ambient).ok_or(CatalogError::WrongAmbient { expected: Ambient::Euc3, found: ambient })?;
    let dx: Vec<Vec<Jet>> = vars
        .iter()
        .map(|&v| x.iter().map(|c| c.partial(v)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| CatalogError::Dsl(DslError::Invalid(e.to_string())))?;
    let dot = |a: &[Jet], b: &[Jet]| sum(a.iter().zip(b).map(|(p, q)| p * q));
    let euclid_first = Tensor::from_fn(2, 2, |ij| dot(&dx[ij[0]], &dx[ij[1]]));
    let rank_err = |d: f64| CatalogError::RankDeficient(d);
    let (first, second) = match ambient {
        Ambient::Euc3 | Ambient::Sph3 => {
            // generalized cross product of the spanning vectors
            let span: Vec<Vec<Jet>> = if ambient == Ambient::Euc3 {
                vec![dx[0].clone(), dx[1].clone()]
            } else {
                vec![x.to_vec(), dx[0].clone(), dx[1].clone()]
            };
            let normal = unit_normal(&span).ok_or_else(|| rank_err(euclid_first.values().matrix()[0][0]))?;
            let second = Tensor::from_fn(2, 2, |ij| {
                let dij: Vec<Jet> = dx[ij[0]].iter().map(|c| c.partial(vars[ij[1]]).expect("order ≥ 2")).collect();
                dot(&dij, &normal)
            });
            (euclid_first, second)
        }
        Ambient::Hyp3 => {
            let normal_e = unit_normal(&[dx[0].clone(), dx[1].clone()]).ok_or_else(|| rank_err(0.0))?;
            let x3 = &x[2];
            let inv_x3 = x3.recip().map_err(|_| rank_err(0.0))?;
            let inv_x3_2 = inv_x3.square();
            let eta: Vec<Jet> = normal_e.iter().map(|n| x3 * n).collect();
            let first = euclid_first.map(|g| g * &inv_x3_2);
            let deta: Vec<Vec<Jet>> =
                vars.iter().map(|&v| eta.iter().map(|c| c.partial(v).expect("order ≥ 2")).collect()).collect();
            let eta3_over_x3 = &eta[2] * &inv_x3;
            let second = Tensor::from_fn(2, 2, |ij| {
                let (i, j) = (ij[0], ij[1]);
                let sym = (dot(&dx[i], &deta[j]) + dot(&dx[j], &deta[i])) * 0.5;
                &(&sym * &inv_x3_2) - &(first.get(ij) * &eta3_over_x3)
            });
            (first, second)
        }
        Ambient::Euc4 => unreachable!(),
    };
    let rows = |t: &Tensor<Jet>| -> Vec<Vec<Jet>> { (0..2).map(|i| (0..2).map(|j| t.get(&[i, j]).clone()).collect()).collect() };
    let det_i = det_jets(&rows(&first));
    if !(det_i.value() > 0.0) {
        return Err(rank_err(det_i.value()));
    }
    let inv_det = det_i.recip().map_err(|_| rank_err(det_i.value()))?;
    let h = |i: usize, j: usize| second.get(&[i, j]);
    let g = |i: usize, j: usize| first.get(&[i, j]);
    // H = (g22 h11 − 2 g12 h12 + g11 h22) / (2 det I)
    let num = &(&(g(1, 1) * h(0, 0)) - &(g(0, 1) * h(0, 1) * 2.0)) + &(g(0, 0) * h(1, 1));
    let mean = &num * &inv_det * 0.5;
    let gauss = &(&det_jets(&rows(&second)) * &inv_det) + c;
    Ok(SurfaceInvariantJets { first, second, mean, gauss })
}

/// Unit vector orthogonal to the rows of `span` (n−1 vectors in Rⁿ), oriented
/// so that `det[span..., n] > 0`.
fn unit_normal(span: &[Vec<Jet>]) -> Option<Vec<Jet>> {
    let n = span.len() + 1;
    let raw: Vec<Jet> = (0..n)
        .map(|a| {
            let cols: Vec<usize> = (0..n).filter(|&b| b != a).collect();
            let m: Vec<Vec<Jet>> = cols.iter().map(|&b| span.iter().map(|v| v[b].clone()).collect()).collect();
            let minor = det_jets(&m);
            if (a + n - 1).is_multiple_of(2) {
                minor
            } else {
                -minor
            }
        })
        .collect();
    let norm2 = sum(raw.iter().map(|c| c * c));
    let inv = norm2.powf(-0.5).ok()?;
    Some(raw.iter().map(|c| c * &inv).collect())
}

/// Value-level surface invariants of a surface spec at `point`.
pub fn surface_invariants(spec: &ImmersionSpec, point: &[f64]) -> Result<SurfaceInvariants, CatalogError> {
    if space_form_curvature(spec.ambient).is_none() {
        return Err(CatalogError::WrongAmbient { expected: Ambient::Euc3, found: spec.ambient });
    }
    let x = spec.evaluate_jets(point, 2)?;
    let s = surface_invariants_jets(spec.ambient, &x, [0, 1])?;
    let m = |t: &Tensor<Jet>| -> [[f64; 2]; 2] { std::array::from_fn(|i| std::array::from_fn(|j| t.get(&[i, j]).value())) };
    let (mean, gauss) = (s.mean.value(), s.gauss.value());
    let c = space_form_curvature(spec.ambient).unwrap_or(0.0);
    let disc = (mean * mean - (gauss - c)).max(0.0).sqrt();
    Ok(SurfaceInvariants { first: m(&s.first), second: m(&s.second), mean, gauss, k: [mean - disc, mean + disc] })
}

// ---------------------------------------------------------------------------
// Surfaces

fn surface(name: &str, ambient: Ambient, text: &str, params: &[(&str, f64)], bx: Vec<(f64, f64)>) -> Result<ImmersionSpec, DslError> {
    let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    ImmersionSpec::new(name, ambient, parse_components(text)?, params, bx)
}

/// Tractroid `(sech s cos v, sech s sin v, s − tanh s)`, `K = −1`.
pub fn pseudosphere() -> Result<ImmersionSpec, DslError> {
    surface(
        "pseudosphere",
        Ambient::Euc3,
        "(cos(u2)/cosh(u1), sin(u2)/cosh(u1), u1 - tanh(u1))",
        &[],
        vec![(0.5, 1.5), (0.0, TWO_PI)],
    )
}

/// Flat torus `(a cos u1, a sin u1, b cos u2, b sin u2)` in S³, `b = √(1−a²)`.
pub fn clifford_torus(a: f64) -> Result<ImmersionSpec, DslError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(DslError::Invalid(format!("clifford_torus needs 0 < a < 1, got {a}")));
    }
    let b = (1.0 - a * a).sqrt();
    surface(
        "clifford_torus",
        Ambient::Sph3,
        "(a*cos(u1), a*sin(u1), b*cos(u2), b*sin(u2))",
        &[("a", a), ("b", b)],
        vec![(0.0, TWO_PI), (0.0, TWO_PI)],
    )
}

/// Equidistant surface of the `x₃`-axis in the upper half-space:
/// `e^s (sin α cos φ, sin α sin φ, cos α)`.
pub fn hyperbolic_cone(alpha: f64) -> Result<ImmersionSpec, DslError> {
    if !(alpha > 0.0 && alpha < PI / 2.0) {
        return Err(DslError::Invalid(format!("hyperbolic_cone needs 0 < alpha < pi/2, got {alpha}")));
    }
    surface(
        "hyperbolic_cone",
        Ambient::Hyp3,
        "(exp(u1)*sin(alpha)*cos(u2), exp(u1)*sin(alpha)*sin(u2), exp(u1)*cos(alpha))",
        &[("alpha", alpha)],
        vec![(-0.5, 0.5), (0.0, TWO_PI)],
    )
}

/// Flat surface of revolution about the `x₃`-axis in the upper half-space,
/// non-constant mean curvature. With `c = √(1−a²)`, `v > 0`:
/// `x = e^σ(v)(v cos φ, v sin φ, 1)/√(1+v²)`,
/// `σ = asinh(v/c)/a − atanh(av/√(v²+c²))`.
pub fn flat_revolution(a: f64) -> Result<ImmersionSpec, DslError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(DslError::Invalid(format!("flat_revolution needs 0 < a < 1, got {a}")));
    }
    let z = "(a*u1/sqrt(u1^2 + c^2))";
    let sigma = format!("(log(u1/c + sqrt((u1/c)^2 + 1))/a - 0.5*log((1 + {z})/(1 - {z})))");
    let text = format!(
        "(exp({sigma})*u1*cos(u2)/sqrt(1 + u1^2), exp({sigma})*u1*sin(u2)/sqrt(1 + u1^2), exp({sigma})/sqrt(1 + u1^2))"
    );
    surface(
        "flat_revolution",
        Ambient::Hyp3,
        &text,
        &[("a", a), ("c", (1.0 - a * a).sqrt())],
        vec![(0.5, 1.5), (0.0, TWO_PI)],
    )
}

/// Torus of revolution; non-constant Gaussian curvature (negative control).
pub fn torus_control(big_r: f64, r: f64) -> Result<ImmersionSpec, DslError> {
    if !(r > 0.0 && big_r > r) {
        return Err(DslError::Invalid(format!("torus_control needs R > r > 0, got R={big_r}, r={r}")));
    }
    surface(
        "torus_control",
        Ambient::Euc3,
        "((R + r*cos(u1))*cos(u2), (R + r*cos(u1))*sin(u2), r*sin(u1))",
        &[("R", big_r), ("r", r)],
        vec![(-1.0, 1.0), (0.0, TWO_PI)],
    )
}

/// Round sphere of radius `r` (totally umbilic).
pub fn round_sphere(r: f64) -> Result<ImmersionSpec, DslError> {
    surface(
        "round_sphere",
        Ambient::Euc3,
        "(r*sin(u1)*cos(u2), r*sin(u1)*sin(u2), r*cos(u1))",
        &[("r", r)],
        vec![(0.5, 2.5), (0.0, TWO_PI)],
    )
}

// ---------------------------------------------------------------------------
// Constructions

/// The three product constructions over a surface in a space form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Construction {
    Cylinder,
    Cone,
    Rotational,
}

impl Construction {
    pub fn ambient(self) -> Ambient {
        match self {
            Construction::Cylinder => Ambient::Euc3,
            Construction::Cone => Ambient::Sph3,
            Construction::Rotational => Ambient::Hyp3,
        }
    }

    /// Curvature `ε` of the space form the surface lives in.
    pub fn epsilon(self) -> f64 {
        space_form_curvature(self.ambient()).expect("surface ambient")
    }

    pub fn build(self, u: &ImmersionSpec) -> Result<ImmersionSpec, CatalogError> {
        match self {
            Construction::Cylinder => build_cylinder(u),
            Construction::Cone => build_cone(u),
            Construction::Rotational => build_rotational(u),
        }
    }

    /// Coefficient of `ds²` in coordinates of the first product variable.
    fn line_element(self, first: &Jet) -> Jet {
        match self {
            Construction::Cone => first.recip().expect("t > 0").square(),
            _ => first.lift(1.0),
        }
    }
}

fn check_ambient(u: &ImmersionSpec, expected: Ambient) -> Result<(), CatalogError> {
    if u.ambient != expected {
        return Err(CatalogError::WrongAmbient { expected, found: u.ambient });
    }
    Ok(())
}

fn shifted(u: &ImmersionSpec) -> Vec<Expr> {
    let vars = [Expr::var(1), Expr::var(2)];
    u.components.iter().map(|c| c.substitute(&vars)).collect()
}

fn product_box(first: (f64, f64), u: &ImmersionSpec) -> Vec<(f64, f64)> {
    let mut b = vec![first];
    b.extend(u.sample_box.iter().copied());
    b
}

/// `f(t, x) = (t, u(x))`.
pub fn build_cylinder(u: &ImmersionSpec) -> Result<ImmersionSpec, CatalogError> {
    check_ambient(u, Ambient::Euc3)?;
    let mut comps = vec![Expr::var(0)];
    comps.extend(shifted(u));
    let name = format!("cylinder({})", u.name);
    Ok(ImmersionSpec::new(&name, Ambient::Euc4, comps, u.params.clone(), product_box((-1.0, 1.0), u))?)
}

/// `f(t, x) = t·u(x)` for `u` in S³.
pub fn build_cone(u: &ImmersionSpec) -> Result<ImmersionSpec, CatalogError> {
    check_ambient(u, Ambient::Sph3)?;
    let t = Expr::var(0);
    let comps = shifted(u).iter().map(|c| &t * c).collect();
    let name = format!("cone({})", u.name);
    Ok(ImmersionSpec::new(&name, Ambient::Euc4, comps, u.params.clone(), product_box((0.8, 1.2), u))?)
}

/// `f(θ, x) = (x₁, x₂, x₃ cos θ, x₃ sin θ)` for `u` in the upper half-space.
pub fn build_rotational(u: &ImmersionSpec) -> Result<ImmersionSpec, CatalogError> {
    check_ambient(u, Ambient::Hyp3)?;
    let x = shifted(u);
    let th = Expr::var(0);
    let comps = vec![x[0].clone(), x[1].clone(), &x[2] * &th.apply(Elementary::Cos), &x[2] * &th.apply(Elementary::Sin)];
    let name = format!("rotational({})", u.name);
    Ok(ImmersionSpec::new(&name, Ambient::Euc4, comps, u.params.clone(), product_box((0.0, TWO_PI), u))?)
}

/// Product data at a point `(s, x)`: the predicted conformal factor
/// `4H_u² − 3(K_u − ε)` and the base metric `ds² + I_u`, as jets.
#[derive(Clone, Debug)]
pub struct ProductMetric {
    pub factor: Jet,
    pub base: MetricJets,
}

pub fn product_metric(c: Construction, u: &ImmersionSpec, point: &[f64], order: usize) -> Result<ProductMetric, CatalogError> {
    check_ambient(u, c.ambient())?;
    let vars = Jet::variables(point, order).map_err(|e| DslError::Invalid(e.to_string()))?;
    let x: Vec<Jet> = u
        .components
        .iter()
        .enumerate()
        .map(|(k, e)| {
            e.eval(&[vars[1].clone(), vars[2].clone()], &u.params)
                .map_err(|source| DslError::Evaluation { component: k, source })
        })
        .collect::<Result<_, _>>()?;
    let s = surface_invariants_jets(u.ambient, &x, [1, 2])?;
    let factor = &(&s.mean.square() * 4.0) - &(&(&s.gauss - c.epsilon()) * 3.0);
    let ds2 = c.line_element(&vars[0]);
    let zero = ds2.zero_like();
    let base = Tensor::from_fn(3, 2, |ij| match (ij[0], ij[1]) {
        (0, 0) => ds2.clone(),
        (0, _) | (_, 0) => zero.clone(),
        (i, j) => s.first.get(&[i - 1, j - 1]).clone(),
    });
    Ok(ProductMetric { factor, base: MetricJets::new(base)? })
}

/// Relative deviation `max|g − factor·(ds² + I_u)| / max|factor·(ds² + I_u)|`
/// between the computed Möbius metric and the product prediction.
pub fn product_metric_check(c: Construction, u: &ImmersionSpec, point: &[f64]) -> Result<f64, CatalogError> {
    let f = c.build(u)?;
    let inv = MoebiusInvariants::compute(&f, point, ComputeOptions::order(2))?;
    let p = product_metric(c, u, point, 2)?;
    let predicted = p.base.g().values().map(|v| v * p.factor.value());
    let g = inv.metric.g().values();
    Ok(crate::tensor::max_abs_diff(&g, &predicted) / predicted.max_abs())
}

/// Largest deviation between the conformal-change oracle applied to
/// `ρ² = factor` over `ds² + I_u` and the directly computed curvature of the
/// Möbius metric, in the frame `e_i/ρ`.
pub fn product_curvature_check(c: Construction, u: &ImmersionSpec, point: &[f64]) -> Result<f64, CatalogError> {
    let f = c.build(u)?;
    let inv = MoebiusInvariants::compute(&f, point, ComputeOptions::order(4))?;
    let p = product_metric(c, u, point, 4)?;
    let rho = p.factor.sqrt().map_err(|_| RiemannError::NonPositiveFactor(p.factor.value()))?;
    let e = orthonormal_frame(&p.base.g().values());
    let oracle = conformal_product_curvature_oracle(&rho, &p.base, &e)?;
    let s = 1.0 / rho.value();
    let frame: Vec<Vec<f64>> = e.iter().map(|v| v.iter().map(|x| x * s).collect()).collect();
    let direct = curvature(&inv.metric)?.riem.values().in_frame(&frame);
    Ok(oracle.max_deviation(&direct))
}

// ---------------------------------------------------------------------------
// Random generic graphs

/// Half-width of the random graph sample box.
pub const RANDOM_BOX: f64 = 0.25;
/// Minimum principal-curvature gap required on the screening grid.
pub const SCREEN_GAP: f64 = 1e-4;

/// Graph `(u1, u2, u3, h(u))` with `h = ½Σcᵢuᵢ² + Σ aₘ sin(wₘ·u + φₘ)`,
/// re-drawn from the same seeded stream until every point of a 4×4×4 grid on
/// the box has principal-curvature gap at least [`SCREEN_GAP`].
pub fn random_graph(seed: u64) -> Result<ImmersionSpec, CatalogError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let text = random_height(&mut rng);
        let comps = parse_components(&format!("(u1, u2, u3, {text})"))?;
        let params = BTreeMap::from([("seed".to_string(), seed as f64)]);
        let spec = ImmersionSpec::new(
            &format!("random_graph(seed={seed})"),
            Ambient::Euc4,
            comps,
            params,
            vec![(-RANDOM_BOX, RANDOM_BOX); 3],
        )?;
        if screen(&spec) {
            return Ok(spec);
        }
    }
    Err(CatalogError::Screening(seed))
}

fn random_height(rng: &mut ChaCha8Rng) -> String {
    let c = loop {
        let mut c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        c.sort_by(f64::total_cmp);
        if c[1] - c[0] > 0.5 && c[2] - c[1] > 0.5 {
            break c;
        }
    };
    let mut perm = [0usize, 1, 2];
    for i in (1..3).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    let mut terms: Vec<String> = (0..3).map(|i| format!("{:?}*u{}^2", 0.5 * c[perm[i]], i + 1)).collect();
    for _ in 0..3 {
        let amp = rng.gen_range(-0.1..0.1);
        let w: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
        let phase = rng.gen_range(0.0..TWO_PI);
        terms.push(format!("{amp:?}*sin({:?}*u1 + {:?}*u2 + {:?}*u3 + {phase:?})", w[0], w[1], w[2]));
    }
    terms.join(" + ")
}

fn screen(spec: &ImmersionSpec) -> bool {
    spec.sample_grid(4).iter().all(|p| {
        let Ok(f) = spec.evaluate_jets(p, 2) else { return false };
        match euclidean_invariants(&f) {
            Ok(e) => e.k[1] - e.k[0] >= SCREEN_GAP && e.k[2] - e.k[1] >= SCREEN_GAP,
            Err(_) => false,
        }
    })
}

// ---------------------------------------------------------------------------
// Registry

fn p(params: &BTreeMap<String, f64>, key: &str) -> f64 {
    params[key]
}

fn wrap(r: Result<ImmersionSpec, CatalogError>) -> Result<ImmersionSpec, DslError> {
    r.map_err(|e| match e {
        CatalogError::Dsl(d) => d,
        other => DslError::Invalid(other.to_string()),
    })
}

fn renamed(r: Result<ImmersionSpec, CatalogError>, name: &str) -> Result<ImmersionSpec, DslError> {
    wrap(r).map(|mut s| {
        s.name = name.to_string();
        s
    })
}

/// Named surfaces and hypersurfaces addressable as `name(key=value, ...)`.
pub fn builtin_library() -> Registry {
    let mut r = Registry::default();
    r.register(RegistryEntry {
        name: "pseudosphere",
        defaults: vec![],
        summary: "tractroid in R^3, K = -1",
        build: |_| pseudosphere(),
    });
    r.register(RegistryEntry {
        name: "clifford_torus",
        defaults: vec![("a", FRAC_1_SQRT_2)],
        summary: "flat torus in S^3",
        build: |m| clifford_torus(p(m, "a")),
    });
    r.register(RegistryEntry {
        name: "hyperbolic_cone",
        defaults: vec![("alpha", FRAC_PI_4)],
        summary: "equidistant cone in the upper half-space, K = 0",
        build: |m| hyperbolic_cone(p(m, "alpha")),
    });
    r.register(RegistryEntry {
        name: "flat_revolution",
        defaults: vec![("a", 0.5)],
        summary: "flat surface of revolution in the upper half-space, K = 0",
        build: |m| flat_revolution(p(m, "a")),
    });
    r.register(RegistryEntry {
        name: "torus_control",
        defaults: vec![("R", 2.0), ("r", 0.7)],
        summary: "torus of revolution in R^3 (non-constant K)",
        build: |m| torus_control(p(m, "R"), p(m, "r")),
    });
    r.register(RegistryEntry {
        name: "round_sphere",
        defaults: vec![("r", 1.0)],
        summary: "round sphere in R^3",
        build: |m| round_sphere(p(m, "r")),
    });
    r.register(RegistryEntry {
        name: "cone_clifford",
        defaults: vec![("a", FRAC_1_SQRT_2)],
        summary: "cone over the Clifford torus, t in [0.8, 1.2]",
        build: |m| renamed(clifford_torus(p(m, "a")).map_err(CatalogError::from).and_then(|u| build_cone(&u)), "cone_clifford"),
    });
    r.register(RegistryEntry {
        name: "cylinder_pseudosphere",
        defaults: vec![],
        summary: "cylinder over the pseudosphere",
        build: |_| renamed(pseudosphere().map_err(CatalogError::from).and_then(|u| build_cylinder(&u)), "cylinder_pseudosphere"),
    });
    r.register(RegistryEntry {
        name: "rotational_hyperbolic_cone",
        defaults: vec![("alpha", FRAC_PI_4)],
        summary: "rotational hypersurface over the hyperbolic cone",
        build: |m| {
            renamed(
                hyperbolic_cone(p(m, "alpha")).map_err(CatalogError::from).and_then(|u| build_rotational(&u)),
                "rotational_hyperbolic_cone",
            )
        },
    });
    r.register(RegistryEntry {
        name: "rotational_flat_revolution",
        defaults: vec![("a", 0.5)],
        summary: "rotational hypersurface over the flat surface of revolution",
        build: |m| {
            renamed(
                flat_revolution(p(m, "a")).map_err(CatalogError::from).and_then(|u| build_rotational(&u)),
                "rotational_flat_revolution",
            )
        },
    });
    r.register(RegistryEntry {
        name: "cylinder_torus",
        defaults: vec![("R", 2.0), ("r", 0.7)],
        summary: "cylinder over the torus of revolution (not conformally flat)",
        build: |m| {
            renamed(
                torus_control(p(m, "R"), p(m, "r")).map_err(CatalogError::from).and_then(|u| build_cylinder(&u)),
                "cylinder_torus",
            )
        },
    });
    r.register(RegistryEntry {
        name: "cylinder_sphere",
        defaults: vec![("r", 1.0)],
        summary: "cylinder over a round sphere (non-generic)",
        build: |m| renamed(round_sphere(p(m, "r")).map_err(CatalogError::from).and_then(|u| build_cylinder(&u)), "cylinder_sphere"),
    });
    r.register(RegistryEntry {
        name: "random_graph",
        defaults: vec![("seed", 0.0)],
        summary: "seeded generic graph (u1, u2, u3, h(u)) on [-0.25, 0.25]^3",
        build: |m| {
            let s = p(m, "seed");
            if !(s >= 0.0 && s.fract() == 0.0 && s < 2f64.powi(53)) {
                return Err(DslError::Invalid(format!("seed must be a non-negative integer, got {s}")));
            }
            wrap(random_graph(s as u64))
        },
    });
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn clifford_torus_invariants() {
        let u = clifford_torus(FRAC_1_SQRT_2).unwrap();
        let s = surface_invariants(&u, &[0.4, 1.3]).unwrap();
        assert!(close(s.mean, 0.0, 1e-12) && close(s.gauss, 0.0, 1e-12));
        assert!(close(s.k[0], -1.0, 1e-12) && close(s.k[1], 1.0, 1e-12));
    }

    #[test]
    fn constant_curvature_surfaces() {
        let cases = [
            (pseudosphere().unwrap(), -1.0),
            (hyperbolic_cone(FRAC_PI_4).unwrap(), 0.0),
            (flat_revolution(0.5).unwrap(), 0.0),
        ];
        for (u, k) in cases {
            let h0 = surface_invariants(&u, &u.sample_grid(1)[0]).unwrap().mean;
            for pt in u.sample_grid(5) {
                let s = surface_invariants(&u, &pt).unwrap();
                assert!(close(s.gauss, k, 1e-10), "{}: {}", u.name, s.gauss);
                if u.name == "hyperbolic_cone" {
                    assert!(close(s.mean.abs(), h0.abs(), 1e-10));
                    assert!(s.k[1] - s.k[0] > 0.1);
                }
            }
        }
        let t = torus_control(2.0, 0.7).unwrap();
        let k0 = surface_invariants(&t, &[0.0, 0.0]).unwrap().gauss;
        let k1 = surface_invariants(&t, &[1.0, 0.0]).unwrap().gauss;
        // K = cos s / (r (R + r cos s))
        assert!(close(k0, 1.0 / (0.7 * 2.7), 1e-12) && (k0 - k1).abs() > 0.1);
    }

    #[test]
    fn horosphere_is_flat() {
        let u = surface("horosphere", Ambient::Hyp3, "(u1, u2, 2)", &[], vec![(0.0, 1.0); 2]).unwrap();
        let s = surface_invariants(&u, &[0.3, 0.2]).unwrap();
        assert!(close(s.gauss, 0.0, 1e-14) && close(s.mean.abs(), 1.0, 1e-14));
    }

    #[test]
    fn constructions_check_ambient() {
        let u = pseudosphere().unwrap();
        assert!(matches!(build_cone(&u), Err(CatalogError::WrongAmbient { .. })));
        assert!(matches!(build_rotational(&u), Err(CatalogError::WrongAmbient { .. })));
        assert_eq!(build_cylinder(&u).unwrap().sample_box[0], (-1.0, 1.0));
    }

    #[test]
    fn product_metric_formula() {
        let cases = [
            (Construction::Cylinder, pseudosphere().unwrap(), vec![0.2, 0.9, 1.0]),
            (Construction::Cone, clifford_torus(FRAC_1_SQRT_2).unwrap(), vec![1.1, 0.3, 2.0]),
            (Construction::Rotational, hyperbolic_cone(FRAC_PI_4).unwrap(), vec![0.7, 0.1, 2.5]),
            (Construction::Rotational, flat_revolution(0.5).unwrap(), vec![0.7, 1.2, 2.5]),
            (Construction::Cylinder, torus_control(2.0, 0.7).unwrap(), vec![0.0, 0.5, 0.5]),
        ];
        for (c, u, pt) in cases {
            let d = product_metric_check(c, &u, &pt).unwrap();
            assert!(d < 1e-10, "{c:?}: {d}");
            let y = product_curvature_check(c, &u, &pt).unwrap();
            assert!(y < 1e-9, "{c:?}: {y}");
        }
    }

    #[test]
    fn cone_factor_is_three() {
        let u = clifford_torus(FRAC_1_SQRT_2).unwrap();
        let pm = product_metric(Construction::Cone, &u, &[1.0, 0.2, 0.4], 2).unwrap();
        assert!(close(pm.factor.value(), 3.0, 1e-12));
    }

    #[test]
    fn random_graphs_are_deterministic_and_generic() {
        let a = random_graph(42).unwrap();
        let b = random_graph(42).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_ne!(a.to_text(), random_graph(43).unwrap().to_text());
        for pt in a.sample_grid(3) {
            let f = a.evaluate_jets(&pt, 2).unwrap();
            let e = euclidean_invariants(&f).unwrap();
            assert!(e.k[1] - e.k[0] >= SCREEN_GAP);
        }
    }

    #[test]
    fn registry_resolves_named_families() {
        let lib = builtin_library();
        for e in lib.entries() {
            let spec = lib.resolve(e.name).unwrap();
            assert!(!spec.components.is_empty(), "{}", e.name);
        }
        let s = lib.resolve("clifford_torus(a=0.6)").unwrap();
        assert!(close(s.params["b"], 0.8, 1e-15));
        assert!(lib.resolve("clifford_torus(a=2)").is_err());
        assert!(lib.resolve("random_graph(seed=1.5)").is_err());
        assert_eq!(lib.resolve("cone_clifford").unwrap().name, "cone_clifford");
    }

    #[test]
    fn cylinder_over_sphere_is_not_generic() {
        let f = builtin_library().resolve("cylinder_sphere").unwrap();
        let err = MoebiusInvariants::compute(&f, &[0.0, 1.0, 1.0], ComputeOptions::order(2)).unwrap_err();
        assert!(matches!(err, MoebiusError::NonGeneric { .. }), "{err:?}");
    }
}

//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::time::Instant;

use moebius_core::catalog::{self, builtin_library, Construction};
use moebius_core::dsl::ImmersionSpec;
use moebius_core::jets::MultiIndex;
use moebius_core::moebius::{random_conformal_map, ComputeOptions, MoebiusInvariants};
use moebius_core::verify::{self, FdPatch, VerifyOptions, Verdict};

const UNIVERSAL_TOL: f64 = 1e-7;
const UNIVERSAL_BUDGET_SECS: f64 = 60.0;
const EXACT_TOL: f64 = 1e-9;
const A_EIGEN_TOL: f64 = 1e-8;
const Q_TOL: f64 = 1e-6;
const FLAT_TOL: f64 = 1e-7;
const NON_FLAT_MIN: f64 = 1e-3;
const NON_FLAT_FRACTION: f64 = 0.9;
const INVARIANCE_TOL: f64 = 1e-7;
const ORACLE_TOL: f64 = 1e-7;
const B_ORACLE_TOL: f64 = 1e-8;
const POINTWISE_TOL: f64 = 1e-7;
const CAUCHY_SCHWARZ_SLACK: f64 = 1e-10;
const GAP_MARGIN: f64 = 1e-3;
const METRIC_REL_TOL: f64 = 1e-8;
const YAU_TOL: f64 = 1e-8;
const FD_REL: f64 = 0.02;
const FD_ZERO_ABS: f64 = 1e-4;
const DIFF_REL: f64 = 1e-5;
const DIFF_STEP: f64 = 0.005;

const FAMILIES: [&str; 3] = ["cylinder_pseudosphere", "cone_clifford", "rotational_hyperbolic_cone"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn lib(name: &str) -> ImmersionSpec {
    builtin_library().resolve(name).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_check = String::new();
    let mut evaluated = 0;
    for seed in 0..20u64 {
        let spec = catalog::random_graph(seed).expect("screened graph");
        let pts = verify::sample_points(&spec, 10, 1000 + seed);
        let r = verify::check_universal(&spec, &pts, &VerifyOptions::default());
        if !r.skipped.is_empty() {
            return outcome(false, format!("seed {seed}: {} points skipped", r.skipped.len()));
        }
        for c in &r.checks {
            evaluated += c.points_evaluated;
            if c.max_abs_residual.is_nan() || c.max_abs_residual > worst {
                worst = c.max_abs_residual;
                worst_check = format!("{} (seed {seed})", c.check);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= UNIVERSAL_TOL && secs <= UNIVERSAL_BUDGET_SECS,
        format!("max residual {worst:.2e} at {worst_check} over {evaluated} evaluations; {secs:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let spec = lib("cone_clifford");
    let s = 1.0 / 3f64.sqrt();
    let mut failures = Vec::new();
    for p in verify::sample_points(&spec, 10, 2) {
        let inv = MoebiusInvariants::compute(&spec, &p, ComputeOptions::default()).expect("generic");
        let b = inv.frame.b;
        if (b[0] + s).abs() > EXACT_TOL || b[1].abs() > EXACT_TOL || (b[2] - s).abs() > EXACT_TOL {
            failures.push(format!("b = {b:?}"));
        }
        let t = p[0];
        if (inv.rho2.value() * t * t - 3.0).abs() > EXACT_TOL {
            failures.push(format!("rho2 t^2 = {}", inv.rho2.value() * t * t));
        }
        let c = inv.in_frame.c.as_ref().unwrap();
        if c.iter().map(|x| x * x).sum::<f64>().sqrt() > EXACT_TOL {
            failures.push(format!("C = {c:?}"));
        }
        let sc = verify::pointwise_scalars(&inv).unwrap();
        if (sc.tr_a - 1.0 / 6.0).abs() > EXACT_TOL {
            failures.push(format!("trA = {}", sc.tr_a));
        }
        let a = inv.in_frame.a.as_ref().unwrap();
        let mut eig = nalgebra::Matrix3::from_fn(|i, j| *a.get(&[i, j])).symmetric_eigenvalues().as_slice().to_vec();
        eig.sort_by(f64::total_cmp);
        let want = [-1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        if eig.iter().zip(want).any(|(x, w)| (x - w).abs() > A_EIGEN_TOL) {
            failures.push(format!("A eigenvalues {eig:?}"));
        }
        if (sc.a_tilde_norm2 - 2.0 / 27.0).abs() > A_EIGEN_TOL {
            failures.push(format!("|A~|^2 = {}", sc.a_tilde_norm2));
        }
    }
    let class = verify::classify(&spec, &verify::sample_points(&spec, 10, 2), &VerifyOptions::default());
    let detail = match &class {
        Ok(c) => {
            if c.verdict != Verdict::Cone {
                failures.push(format!("verdict {:?}", c.verdict));
            }
            if c.points.iter().any(|p| (p.q + 1.0 / 3.0).abs() > Q_TOL) {
                failures.push(format!("Q range [{}, {}]", c.q_stats.min, c.q_stats.max));
            }
            format!("verdict {:?}, Q mean {:.12}", c.verdict, c.q_stats.mean)
        }
        Err(e) => {
            failures.push(e.to_string());
            String::new()
        }
    };
    outcome(failures.is_empty(), if failures.is_empty() { detail } else { failures.join("; ") })
}

fn criterion_3() -> Outcome {
    let opts = VerifyOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, want) in [
        ("cylinder_pseudosphere", Verdict::Cylinder),
        ("rotational_hyperbolic_cone", Verdict::Rotational),
        ("cone_clifford", Verdict::Cone),
        ("rotational_flat_revolution", Verdict::Rotational),
    ] {
        let spec = lib(name);
        match verify::classify(&spec, &verify::sample_points(&spec, 30, 3), &opts) {
            Ok(c) => {
                let q_ok = match want {
                    Verdict::Cylinder => c.points.iter().all(|p| p.q.abs() <= Q_TOL),
                    Verdict::Rotational => c.points.iter().all(|p| p.q > Q_TOL),
                    _ => c.points.iter().all(|p| p.q < -Q_TOL),
                };
                pass &= c.verdict == want && q_ok && c.points.len() == 30;
                lines.push(format!("{name}: {:?} Q∈[{:.3e},{:.3e}]", c.verdict, c.q_stats.min, c.q_stats.max));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, lines.join("; "))
}

fn criterion_4() -> Outcome {
    let opts = VerifyOptions::default();
    let mut pass = true;
    let mut lines = Vec::new();
    for name in FAMILIES {
        let spec = lib(name);
        let r = verify::check_conformal_flatness(&spec, &verify::sample_points(&spec, 30, 4), &opts);
        let m = r.max_residual("schouten_codazzi");
        pass &= m <= FLAT_TOL && r.skipped.is_empty();
        lines.push(format!("{name} {m:.1e}"));
    }
    let spec = lib("cylinder_torus");
    let r = verify::check_conformal_flatness(&spec, &verify::sample_points(&spec, 30, 4), &opts);
    let res = &r.check("schouten_codazzi").unwrap().residuals;
    let frac = res.iter().filter(|v| **v >= NON_FLAT_MIN).count() as f64 / res.len() as f64;
    pass &= frac >= NON_FLAT_FRACTION && res.len() == 30;
    lines.push(format!("cylinder_torus ≥1e-3 at {:.0}% of points", 100.0 * frac));
    outcome(pass, lines.join("; "))
}

fn criterion_5() -> Outcome {
    let opts = VerifyOptions::default();
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, name) in ["random_graph(seed=4)", "cylinder_pseudosphere", "cone_clifford", "rotational_hyperbolic_cone"].iter().enumerate() {
        let spec = lib(name);
        let shift = verify::safe_shift(&spec).unwrap();
        let maps = random_conformal_map(50 + k as u64, shift);
        match verify::check_moebius_invariance(&spec, &maps, &verify::sample_points(&spec, 20, 5), &opts) {
            Ok(r) => {
                let g = r.max_residual("metric");
                let b = r.max_residual("b_sorted");
                pass &= g <= INVARIANCE_TOL && b <= INVARIANCE_TOL && r.skipped.is_empty();
                lines.push(format!("{name} g {g:.1e} b {b:.1e}"));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{name}: {e}"));
            }
        }
    }
    outcome(pass, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let opts = VerifyOptions::default();
    let mut pass = true;
    let mut worst = [0.0f64; 5];
    let names = ["A_from_dN", "C_from_dN", "C_from_dxi", "B_from_dxi", "null_frame"];
    for name in FAMILIES.iter().chain(["rotational_flat_revolution", "cylinder_torus"].iter()) {
        let spec = lib(name);
        let r = verify::check_frames(&spec, &verify::sample_points(&spec, 10, 6), &opts);
        pass &= r.skipped.is_empty();
        for (k, n) in names.iter().enumerate() {
            let v = r.max_residual(n);
            worst[k] = if v.is_nan() { f64::NAN } else { worst[k].max(v) };
        }
    }
    pass &= worst[0] <= ORACLE_TOL && worst[1] <= ORACLE_TOL && worst[2] <= ORACLE_TOL && worst[3] <= B_ORACLE_TOL;
    let detail = names.iter().zip(worst).map(|(n, v)| format!("{n} {v:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn criterion_7() -> Outcome {
    let opts = VerifyOptions::default();
    let mut pass = true;
    let mut lines = Vec::new();
    let identities = ["sectional_vs_b2a", "ric_norm", "sectional_vs_trA", "sectional_vs_trace_free"];
    for name in FAMILIES {
        let spec = lib(name);
        match verify::check_pointwise_identities(&spec, &verify::sample_points(&spec, 30, 7), &opts) {
            Ok(r) => {
                let worst: Vec<f64> = identities.iter().map(|c| r.max_residual(c)).collect();
                let ok_id = worst.iter().all(|v| *v <= POINTWISE_TOL);
                let cs = r.max_residual("ricci_cauchy_schwarz") <= CAUCHY_SCHWARZ_SLACK;
                let gap = r.check("gap_bound").is_some_and(|c| c.pass);
                pass &= ok_id && cs && gap && r.skipped.is_empty();
                let corrected = r.max_residual("sectional_vs_trace_free_corrected");
                lines.push(format!(
                    "{name}: [{}] trace-free+scalar {corrected:.1e}{}{}",
                    worst.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(" "),
                    if cs { "" } else { " Ric<R^2/3!" },
                    if gap { "" } else { " gap!" }
                ));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{name}: {e}"));
            }
        }
    }
    let margin_ok = FAMILIES.iter().all(|name| {
        let spec = lib(name);
        verify::sample_points(&spec, 30, 7).iter().all(|p| {
            let inv = MoebiusInvariants::compute(&spec, p, ComputeOptions::order(2)).unwrap();
            let b = inv.frame.b;
            [(0, 1), (1, 2), (0, 2)].iter().all(|&(i, j)| (b[i] - b[j]).powi(2) <= 2.0 - GAP_MARGIN)
        })
    });
    pass &= margin_ok;
    outcome(pass, lines.join("; "))
}

fn criterion_8() -> Outcome {
    let bases: [(Construction, &str); 4] = [
        (Construction::Cylinder, "pseudosphere"),
        (Construction::Cone, "clifford_torus"),
        (Construction::Rotational, "hyperbolic_cone"),
        (Construction::Rotational, "flat_revolution"),
    ];
    let mut metric = 0.0f64;
    let mut yau = 0.0f64;
    for (c, base) in bases {
        let u = lib(base);
        let f = c.build(&u).unwrap();
        for p in verify::sample_points(&f, 8, 8) {
            metric = metric.max(catalog::product_metric_check(c, &u, &p).unwrap_or(f64::NAN));
            yau = yau.max(catalog::product_curvature_check(c, &u, &p).unwrap_or(f64::NAN));
        }
    }
    outcome(
        metric <= METRIC_REL_TOL && yau <= YAU_TOL,
        format!("metric rel {metric:.1e} (ε = 0, 1, −1), conformal-change oracle {yau:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let opts = VerifyOptions::default();
    let mut pass = true;
    let mut lines = Vec::new();
    let cases = [("cylinder_pseudosphere", vec![0.2, 1.1, 3.7]), ("rotational_flat_revolution", vec![3.7, 1.1, 3.7])];
    for (name, center) in cases {
        let spec = lib(name);
        match verify::fd_exterior(&spec, &FdPatch { center, h: 1e-3, n: 9 }, &opts) {
            Ok(r) => {
                for c in &r.checks {
                    // tolerance exceeding the absolute floor means the relative branch applies
                    let rel = c.tolerance / FD_REL;
                    pass &= c.pass && c.tolerance > FD_ZERO_ABS;
                    lines.push(format!("{name} {} {:.1e} rel", c.check, c.max_abs_residual / rel));
                }
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{name}: {e}"));
            }
        }
    }
    let spec = lib("cone_clifford");
    match verify::fd_exterior(&spec, &FdPatch { center: vec![1.0, 0.4, 1.2], h: 1e-3, n: 9 }, &opts) {
        Ok(r) => {
            let worst = r.checks.iter().map(|c| c.max_abs_residual).fold(0.0, f64::max);
            pass &= worst <= FD_ZERO_ABS;
            lines.push(format!("cone_clifford abs {worst:.1e}"));
        }
        Err(e) => {
            pass = false;
            lines.push(format!("cone_clifford: {e}"));
        }
    }
    outcome(pass, lines.join("; "))
}

/// Coordinate-level invariant scalars, as values.
fn scalar_values(spec: &ImmersionSpec, x: &[f64]) -> Vec<f64> {
    let inv = MoebiusInvariants::compute(spec, x, ComputeOptions::order(4)).expect("generic");
    invariant_jets(&inv).iter().map(|j| j.value()).collect()
}

fn invariant_jets(inv: &MoebiusInvariants) -> Vec<moebius_core::jets::Jet> {
    let mut out = vec![inv.rho2.clone(), inv.euclid.mean.clone(), inv.euclid.trace_free_norm2.clone()];
    out.extend(inv.metric.g().data().iter().cloned());
    out.extend(inv.b.data().iter().cloned());
    out.extend(inv.c.as_ref().unwrap().data().iter().cloned());
    out.push(inv.tr_a.clone().unwrap());
    out
}

fn criterion_10() -> Outcome {
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    let mut bad = Vec::new();
    for seed in [1u64, 7, 13] {
        let spec = catalog::random_graph(seed).unwrap();
        for p in verify::sample_points(&spec, 2, 10 + seed) {
            let inv = MoebiusInvariants::compute(&spec, &p, ComputeOptions::order(7)).unwrap();
            let jets = invariant_jets(&inv);
            let f = |x: &[f64]| scalar_values(&spec, x);
            for alpha in common::multi_indices(3, 3) {
                let fd = common::richardson(&f, &p, &alpha, DIFF_STEP);
                let m = MultiIndex::new(&common::exponents(&alpha, 3));
                for (k, j) in jets.iter().enumerate() {
                    let ad = j.derivative(&m).unwrap();
                    let err = (ad - fd[k]).abs() / fd[k].abs().max(1.0);
                    worst = worst.max(err);
                    compared += 1;
                    if !common::close(ad, fd[k], DIFF_REL) && bad.len() < 3 {
                        bad.push(format!("seed {seed} scalar {k} ∂{alpha:?}: {ad} vs {fd}", fd = fd[k]));
                    }
                }
            }
        }
    }
    let spec = catalog::random_graph(3).unwrap();
    let faulty = VerifyOptions { b_scale: 1.01, ..Default::default() };
    let r = verify::check_integrability(&spec, &verify::sample_points(&spec, 3, 10), &faulty);
    let detected = !r.pass && r.max_residual("norm_B") > NON_FLAT_MIN;
    let pass = bad.is_empty() && detected;
    let mut detail = format!(
        "{compared} partials, worst rel {worst:.1e}; fault injection {} (norm residual {:.4})",
        if detected { "detected" } else { "MISSED" },
        r.max_residual("norm_B")
    );
    if !bad.is_empty() {
        detail.push_str(&format!("; {}", bad.join("; ")));
    }
    outcome(pass, detail)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("universal integrability", criterion_1),
        ("cone over the Clifford torus", criterion_2),
        ("classification trichotomy", criterion_3),
        ("conformal-flatness split", criterion_4),
        ("Möbius invariance", criterion_5),
        ("oracle equivalence", criterion_6),
        ("pointwise identities", criterion_7),
        ("product metric formulas", criterion_8),
        ("finite-difference form calculus", criterion_9),
        ("differentiation trust", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion_{:02}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{label} {:<34} {} ({:.1}s) {}",
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

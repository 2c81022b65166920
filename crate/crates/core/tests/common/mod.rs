//! Finite-difference oracle shared by the integration tests.

#![allow(dead_code)]

/// `∂^α f(x)` by nested central differences with step `h`.
pub fn central(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], alpha: &[usize], h: f64) -> Vec<f64> {
    match alpha.split_first() {
        None => f(x),
        Some((&a, rest)) => {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += h;
            xm[a] -= h;
            let p = central(f, &xp, rest, h);
            let m = central(f, &xm, rest, h);
            p.iter().zip(&m).map(|(p, m)| (p - m) / (2.0 * h)).collect()
        }
    }
}

/// One Richardson step on [`central`]: `(4D(h/2) − D(h)) / 3`.
pub fn richardson(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], alpha: &[usize], h: f64) -> Vec<f64> {
    let coarse = central(f, x, alpha, h);
    let fine = central(f, x, alpha, h / 2.0);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

/// Every multiset of variable indices with `1 ≤ len ≤ max_order`.
pub fn multi_indices(nvars: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_order {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for v in start..nvars {
                let mut n = m.clone();
                n.push(v);
                next.push(n);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Exponent vector of a multiset of variable indices.
pub fn exponents(alpha: &[usize], nvars: usize) -> Vec<usize> {
    let mut e = vec![0; nvars];
    for &a in alpha {
        e[a] += 1;
    }
    e
}

/// `|a − b| ≤ tol · max(|b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn oracle_differentiates_a_polynomial() {
    let f = |x: &[f64]| vec![x[0].powi(3) * x[1] + x[2].sin()];
    let x = [0.3, -0.2, 0.5];
    let d = richardson(&f, &x, &[0, 0, 1], 0.02)[0];
    assert!(close(d, 6.0 * 0.3, 1e-9));
    let d = richardson(&f, &x, &[2, 2, 2], 0.02)[0];
    assert!(close(d, -0.5f64.cos(), 1e-7));
    assert_eq!(multi_indices(3, 3).len(), 3 + 6 + 10);
}

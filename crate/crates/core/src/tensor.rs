//! Dense coordinate tensors and small value-level linear algebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::jets::Jet;

/// Square tensor with `rank` slots over `dim` coordinates, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dim: usize,
    rank: usize,
    data: Vec<T>,
}

/// All multi-indices of the given rank, last slot varying fastest.
pub fn indices(dim: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for slot in (0..rank).rev() {
            idx[slot] = flat % dim;
            flat /= dim;
        }
        idx
    })
}

impl<T> Tensor<T> {
    pub fn from_fn(dim: usize, rank: usize, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let data = indices(dim, rank).map(|idx| f(&idx)).collect();
        Self { dim, rank, data }
    }

    pub fn from_vec(dim: usize, rank: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), dim.pow(rank as u32), "tensor data length");
        Self { dim, rank, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| {
            debug_assert!(i < self.dim);
            acc * self.dim + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.data[self.offset(idx)]
    }

    pub fn get_mut(&mut self, idx: &[usize]) -> &mut T {
        let o = self.offset(idx);
        &mut self.data[o]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor { dim: self.dim, rank: self.rank, data: self.data.iter().map(f).collect() }
    }
}

impl Tensor<Jet> {
    pub fn values(&self) -> Tensor<f64> {
        self.map(Jet::value)
    }

    /// Smallest truncation order among the components.
    pub fn order(&self) -> usize {
        self.data.iter().map(Jet::order).min().unwrap_or(0)
    }
}

impl Tensor<f64> {
    /// Components in a frame: `T(E_a, E_b, ...)` where `frame[a]` holds the
    /// coordinate components of `E_a`.
    pub fn in_frame(&self, frame: &[Vec<f64>]) -> Tensor<f64> {
        let mut cur = self.data.clone();
        let d = self.dim;
        // contract one slot at a time, rotating the contracted slot to the end
        for _ in 0..self.rank {
            let outer = cur.len() / d;
            let mut next = vec![0.0; cur.len()];
            for o in 0..outer {
                for a in 0..d {
                    let s: f64 = (0..d).map(|i| cur[i * outer + o] * frame[a][i]).sum();
                    next[o * d + a] = s;
                }
            }
            cur = next;
        }
        Tensor { dim: d, rank: self.rank, data: cur }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        assert_eq!(self.rank, 2);
        (0..self.dim).map(|i| (0..self.dim).map(|j| *self.get(&[i, j])).collect()).collect()
    }
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Determinant of a 2x2 or 3x3 matrix of jets.
pub fn det_jets(m: &[Vec<Jet>]) -> Jet {
    match m.len() {
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        3 => {
            let c0 = &m[1][1] * &m[2][2] - &m[1][2] * &m[2][1];
            let c1 = &m[1][0] * &m[2][2] - &m[1][2] * &m[2][0];
            let c2 = &m[1][0] * &m[2][1] - &m[1][1] * &m[2][0];
            &m[0][0] * &c0 - &m[0][1] * &c1 + &m[0][2] * &c2
        }
        n => panic!("det_jets supports dimension <= 3, got {n}"),
    }
}

/// Cofactor matrix `cof[i][j] = (-1)^{i+j} minor(i, j)` for dimension <= 3.
pub fn cofactors_jets(m: &[Vec<Jet>]) -> Vec<Vec<Jet>> {
    let n = m.len();
    match n {
        1 => vec![vec![m[0][0].lift(1.0)]],
        2 => vec![
            vec![m[1][1].clone(), -&m[1][0]],
            vec![-&m[0][1], m[0][0].clone()],
        ],
        3 => (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        let r: Vec<usize> = (0..3).filter(|&x| x != i).collect();
                        let c: Vec<usize> = (0..3).filter(|&x| x != j).collect();
                        let minor = &m[r[0]][c[0]] * &m[r[1]][c[1]] - &m[r[0]][c[1]] * &m[r[1]][c[0]];
                        if (i + j) % 2 == 0 {
                            minor
                        } else {
                            -minor
                        }
                    })
                    .collect()
            })
            .collect(),
        n => panic!("cofactors_jets supports dimension <= 3, got {n}"),
    }
}

/// Generalized symmetric-definite eigenproblem `a v = λ b v`.
///
/// Returns eigenvalues in ascending order and eigenvectors normalized so that
/// `vᵀ b v = 1`; `None` if `b` is not positive definite.
pub fn symmetric_pencil(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    let am = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i][j] + a[j][i]));
    let bm = DMatrix::from_fn(n, n, |i, j| 0.5 * (b[i][j] + b[j][i]));
    let chol = bm.cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let m = &linv * am * linv.transpose();
    let m = 0.5 * (&m + m.transpose());
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let back = linv.transpose();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let v = &back * eig.eigenvectors.column(i);
            v.iter().copied().collect()
        })
        .collect();
    Some((values, vectors))
}

pub fn det_f64(m: &[Vec<f64>]) -> f64 {
    DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j]).determinant()
}

pub fn inverse_f64(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let inv = DMatrix::from_fn(n, n, |i, j| m[i][j]).try_inverse()?;
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

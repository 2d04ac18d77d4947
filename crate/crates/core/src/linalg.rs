//! Small dense symmetric linear algebra: cyclic Jacobi eigen-decomposition and
//! pseudoinverse solves. Dimensions here are tiny (tens), so O(n³) sweeps are fine.

use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    /// Adds `w · a aᵀ`.
    pub fn add_outer(&mut self, w: T, a: &[T]) {
        debug_assert_eq!(a.len(), self.n);
        for i in 0..self.n {
            if a[i] == T::zero() {
                continue;
            }
            let wa = w * a[i];
            for j in 0..self.n {
                self.data[i * self.n + j] = self.data[i * self.n + j] + wa * a[j];
            }
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j]))
            .collect()
    }

    /// Eigenvalues and column eigenvectors (as rows of the returned vector).
    pub fn eigen(&self) -> (Vec<T>, Vec<Vec<T>>) {
        let n = self.n;
        let mut a = self.data.clone();
        let mut v = vec![T::zero(); n * n];
        for i in 0..n {
            v[i * n + i] = T::one();
        }
        let two = T::c(2.0);
        for _sweep in 0..100 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .fold(T::zero(), |acc, (i, j)| acc + a[i * n + j] * a[i * n + j]);
            let diag: T = (0..n).fold(T::zero(), |acc, i| acc + a[i * n + i] * a[i * n + i]);
            if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..n).map(|i| a[i * n + i]).collect();
        let vectors = (0..n).map(|j| (0..n).map(|k| v[k * n + j]).collect()).collect();
        (values, vectors)
    }

    /// Minimum-norm least-squares solution of `A x = b` via the eigen
    /// pseudoinverse. Eigenvalues below `rel_tol · max|λ|` are treated as zero.
    pub fn pinv_solve(&self, b: &[T], rel_tol: T) -> Vec<T> {
        let (vals, vecs) = self.eigen();
        let scale = vals.iter().fold(T::zero(), |acc, &l| acc.max(l.abs()));
        let mut x = vec![T::zero(); self.n];
        if scale == T::zero() {
            return x;
        }
        let cut = scale * rel_tol;
        for (lambda, u) in vals.iter().zip(&vecs) {
            if lambda.abs() <= cut {
                continue;
            }
            let coef = crate::scalar::dot(u, b) / *lambda;
            for (xi, &ui) in x.iter_mut().zip(u) {
                *xi = *xi + coef * ui;
            }
        }
        x
    }
}

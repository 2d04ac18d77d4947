//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `max cᵀx  s.t.  A x = b, x ≥ 0`. Instances in this crate have at most
//! a few dozen rows and columns, so a full tableau is used.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct StandardLp<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    obj: Vec<T>,
    basis: Vec<usize>,
    width: usize,
    pivots: usize,
}

impl<T: Scalar> Tableau<T> {
    fn rhs(&self, i: usize) -> T {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v = *v / p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != T::zero() {
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v = *v - f * pr;
                }
                row[col] = T::zero();
            }
        }
        let f = self.obj[col];
        if f != T::zero() {
            for (v, &pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v = *v - f * pr;
            }
            self.obj[col] = T::zero();
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    /// Runs Bland's rule over columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, allowed: usize, tol: T, max_pivots: usize) -> Option<bool> {
        loop {
            if self.pivots > max_pivots {
                return None;
            }
            let entering = (0..allowed).find(|&j| self.obj[j] < -tol);
            let Some(col) = entering else {
                return Some(true);
            };
            let mut best: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                let aij = self.rows[i][col];
                if aij > tol {
                    let ratio = self.rhs(i) / aij;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - tol * (T::one() + br.abs())
                                || (ratio <= br + tol * (T::one() + br.abs())
                                    && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Some(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
    }
}

impl<T: Scalar> StandardLp<T> {
    /// Solves with pivot tolerance `tol`.
    pub fn solve(&self, tol: T) -> Result<LpSolution<T>, String> {
        let m = self.a.len();
        let n = self.c.len();
        if self.b.len() != m || self.a.iter().any(|r| r.len() != n) {
            return Err("inconsistent LP dimensions".into());
        }
        if self
            .a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(&self.c)
            .any(|v| !v.is_finite())
        {
            return Err("non-finite LP data".into());
        }
        let width = n + m;
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let sign = if self.b[i] < T::zero() { -T::one() } else { T::one() };
            let mut row = vec![T::zero(); width + 1];
            for j in 0..n {
                row[j] = sign * self.a[i][j];
            }
            row[n + i] = T::one();
            row[width] = sign * self.b[i];
            rows.push(row);
        }
        // phase one: maximize -sum(artificials); reduced costs in canonical form
        let mut obj = vec![T::zero(); width + 1];
        for row in &rows {
            for j in 0..n {
                obj[j] = obj[j] - row[j];
            }
            obj[width] = obj[width] - row[width];
        }
        let mut tab = Tableau { rows, obj, basis: (n..n + m).collect(), width, pivots: 0 };
        let max_pivots = 50 * (width + 10);
        match tab.optimize(n, tol, max_pivots) {
            None => return Err("phase one exceeded pivot budget".into()),
            // phase one is bounded by zero; an "unbounded" column is rounding
            // noise in its reduced cost, so stop and let the check below decide
            Some(_) => {}
        }
        let scale = self.b.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
        let infeasibility: T = (0..m)
            .filter(|&i| tab.basis[i] >= n)
            .map(|i| tab.rhs(i).abs())
            .sum();
        if infeasibility > tol.sqrt() * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![T::zero(); n],
                objective: T::zero(),
                pivots: tab.pivots,
            });
        }
        // drive artificial variables out of the basis; drop redundant rows
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= n {
                let col = (0..n).find(|&j| tab.rows[i][j].abs() > tol);
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        // phase two
        let mut obj = vec![T::zero(); width + 1];
        for j in 0..n {
            obj[j] = -self.c[j];
        }
        for (r, &bv) in tab.basis.iter().enumerate() {
            let f = obj[bv];
            if f != T::zero() {
                for (v, &rv) in obj.iter_mut().zip(&tab.rows[r]) {
                    *v = *v - f * rv;
                }
            }
        }
        tab.obj = obj;
        let status = match tab.optimize(n, tol, max_pivots) {
            None => return Err("phase two exceeded pivot budget".into()),
            Some(false) => LpStatus::Unbounded,
            Some(true) => LpStatus::Optimal,
        };
        let mut x = vec![T::zero(); n];
        for (r, &bv) in tab.basis.iter().enumerate() {
            if bv < n {
                x[bv] = tab.rhs(r).max(T::zero());
            }
        }
        let objective = crate::scalar::dot(&self.c, &x);
        Ok(LpSolution { status, x, objective, pivots: tab.pivots })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> StandardLp<f64> {
        StandardLp { a, b, c }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x + s1 = 4, 2y + s2 = 12, 3x + 2y + s3 = 18 -> (2, 6), 36
        let p = lp(
            vec![
                vec![1.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0, 1.0, 0.0],
                vec![3.0, 2.0, 0.0, 0.0, 1.0],
            ],
            vec![4.0, 12.0, 18.0],
            vec![3.0, 5.0, 0.0, 0.0, 0.0],
        );
        let s = p.solve(1e-11).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let infeasible = lp(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 2.0], vec![0.0, 0.0]);
        assert_eq!(infeasible.solve(1e-11).unwrap().status, LpStatus::Infeasible);
        let unbounded = lp(vec![vec![1.0, -1.0]], vec![0.0], vec![1.0, 0.0]);
        assert_eq!(unbounded.solve(1e-11).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        // x + y = -(-1), duplicated; max x
        let p = lp(
            vec![vec![-1.0, -1.0], vec![2.0, 2.0], vec![0.0, 0.0]],
            vec![-1.0, 2.0, 0.0],
            vec![1.0, 0.0],
        );
        let s = p.solve(1e-11).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example in equality form (slacks appended).
        let p = lp(
            vec![
                vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
                vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            vec![0.0, 0.0, 1.0],
            vec![0.75, -150.0, 0.02, -6.0, 0.0, 0.0, 0.0],
        );
        let s = p.solve(1e-11).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.05).abs() < 1e-12);
    }
}

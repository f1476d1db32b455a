//! Dense two-phase simplex with Bland's anti-cycling rule.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of `maximize c.x subject to A x = b, x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { value: T, x: Vec<T> },
    Infeasible,
    Unbounded,
}

/// Standard-form linear program.
#[derive(Clone, Debug)]
pub struct StandardLp<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != T::zero() {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * *pv;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Maximizes `cost` over the current basis using only columns in
    /// `allowed`. Returns `false` if unbounded.
    fn optimize(&mut self, cost: &[T], allowed: usize, max_iter: usize) -> Result<bool> {
        let rhs = self.rows[0].len() - 1;
        for _ in 0..max_iter {
            // Reduced cost c_j - c_B B^{-1} A_j, entering = lowest index with positive value.
            let mut entering = None;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut red = cost[j];
                for (row, &bv) in self.rows.iter().zip(&self.basis) {
                    red -= cost[bv] * row[j];
                }
                if red > self.tol {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return Ok(true) };
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > self.tol {
                    let ratio = row[rhs] / row[col];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - self.tol || ((ratio - lr).abs() <= self.tol && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return Ok(false) };
            self.pivot(r, col);
        }
        Err(Error::Solver(format!("simplex did not converge in {max_iter} iterations")))
    }
}

impl<T: Scalar> StandardLp<T> {
    pub fn solve(&self) -> Result<LpOutcome<T>> {
        let m = self.a.len();
        let n = self.c.len();
        if self.b.len() != m || self.a.iter().any(|r| r.len() != n) {
            return Err(Error::Solver("inconsistent LP dimensions".into()));
        }
        let tol = T::epsilon() * T::of(1e3);
        // Columns: originals, then one artificial per row, then rhs.
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let sign = if self.b[i] < T::zero() { -T::one() } else { T::one() };
            let mut row: Vec<T> = self.a[i].iter().map(|&v| v * sign).collect();
            row.extend((0..m).map(|j| if i == j { T::one() } else { T::zero() }));
            row.push(self.b[i] * sign);
            rows.push(row);
        }
        let mut tab = Tableau { rows, basis: (n..n + m).collect(), tol };
        let max_iter = 50 * (n + m) + 1000;

        let mut phase1 = vec![T::zero(); n + m];
        for v in phase1.iter_mut().skip(n) {
            *v = -T::one();
        }
        tab.optimize(&phase1, n + m, max_iter)?;
        let infeas: T = tab.basis.iter().zip(&tab.rows).filter(|(&bv, _)| bv >= n).map(|(_, r)| r[n + m]).fold(T::zero(), |a, v| a + v);
        let scale = self.b.iter().fold(T::one(), |a, v| a.max(v.abs()));
        if infeas > tol * scale * T::of(16.0) {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= n {
                match (0..n).find(|&j| tab.rows[r][j].abs() > tol) {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        let mut cost = self.c.clone();
        cost.extend(std::iter::repeat_n(T::zero(), m));
        if !tab.optimize(&cost, n, max_iter)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![T::zero(); n];
        for (row, &bv) in tab.rows.iter().zip(&tab.basis) {
            if bv < n {
                x[bv] = row[n + m].max(T::zero());
            }
        }
        let value = x.iter().zip(&self.c).fold(T::zero(), |a, (xi, ci)| a + *xi * *ci);
        Ok(LpOutcome::Optimal { value, x })
    }
}

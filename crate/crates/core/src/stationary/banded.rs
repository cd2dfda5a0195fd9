//! Cholesky factorization of symmetric positive definite band matrices.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: `A[i][i-k]` for `0 ≤ k ≤ bandwidth`.
#[derive(Clone, Debug)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    lower: Vec<f64>,
}

impl BandedSpd {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, lower: vec![0.0; n * (bw + 1)] }
    }

    /// Entry `A[i][j]` for `j ≤ i ≤ j + bandwidth`.
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.lower[i * (self.bw + 1) + (i - j)] = v;
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.lower[i * (self.bw + 1) + (i - j)]
    }

    /// In-place `A = L Lᵀ`.
    pub(crate) fn factor(&mut self) -> Result<()> {
        let bw = self.bw;
        for i in 0..self.n {
            let first = i.saturating_sub(bw);
            for j in first..=i {
                let mut sum = self.at(i, j);
                for p in first.max(j.saturating_sub(bw))..j {
                    sum -= self.at(i, p) * self.at(j, p);
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Discretization(format!(
                            "stationary system is not positive definite at row {i}"
                        )));
                    }
                    self.set(i, i, sum.sqrt());
                } else {
                    let d = self.at(j, j);
                    self.set(i, j, sum / d);
                }
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place after [`BandedSpd::factor`].
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = b[i];
            for p in i.saturating_sub(bw)..i {
                s -= self.at(i, p) * b[p];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for p in i + 1..(i + bw + 1).min(self.n) {
                s -= self.at(p, i) * b[p];
            }
            b[i] = s / self.at(i, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        // -u'' = 1 on 5 interior points, exact quadratic solution
        let n = 5;
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.set(i, i, 2.0);
            if i > 0 {
                a.set(i, i - 1, -1.0);
            }
        }
        a.factor().unwrap();
        let mut b = vec![1.0; n];
        a.solve(&mut b);
        for (i, v) in b.iter().enumerate() {
            let x = (i + 1) as f64;
            assert!((v - x * (6.0 - x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandedSpd::zeros(2, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(1, 0, 2.0);
        assert!(a.factor().is_err());
    }
}

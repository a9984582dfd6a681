//! Gaussian elimination with partial pivoting for banded systems.

/// A square matrix with `kl` sub- and `ku` super-diagonals, stored with
/// room for the `kl` extra super-diagonals that pivoting can fill in.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Singular {
    pub row: usize,
    pub pivot: f64,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.ku + self.kl);
        row * self.width + (col + self.kl - row)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.slot(row, col)]
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            col + self.kl >= row && col <= row + self.ku,
            "entry ({row}, {col}) outside the band"
        );
        let s = self.slot(row, col);
        self.data[s] += value;
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            col + self.kl >= row && col <= row + self.ku,
            "entry ({row}, {col}) outside the band"
        );
        let s = self.slot(row, col);
        self.data[s] = value;
    }

    /// Zero out row `row` inside the band.
    pub fn clear_row(&mut self, row: usize) {
        let lo = row.saturating_sub(self.kl);
        let hi = (row + self.ku).min(self.n - 1);
        for col in lo..=hi {
            self.set(row, col, 0.0);
        }
    }

    /// Solve `A x = rhs` in place. A pivot below `rel_tol · max|A|` is
    /// reported as singular.
    pub fn solve(mut self, rhs: &mut [f64], rel_tol: f64) -> Result<(), Singular> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = rel_tol * scale;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let (mut p, mut best) = (k, self.get(k, k).abs());
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > floor) {
                return Err(Singular {
                    row: k,
                    pivot: best,
                });
            }
            if p != k {
                for col in k..=last_col {
                    let a = self.slot(k, col);
                    let b = self.slot(p, col);
                    self.data.swap(a, b);
                }
                rhs.swap(k, p);
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let factor = self.get(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                for col in k..=last_col {
                    let v = self.get(k, col);
                    if v != 0.0 {
                        let s = self.slot(i, col);
                        self.data[s] -= factor * v;
                    }
                }
                rhs[i] -= factor * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = rhs[k];
            for col in k + 1..=last_col {
                acc -= self.get(k, col) * rhs[col];
            }
            rhs[k] = acc / self.get(k, k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_system() {
        // [2 1 0; 1 3 1; 0 1 4] x = [3, 5, 5] has x = (1, 1, 1).
        let mut a = BandMatrix::zeros(3, 1, 1);
        for (r, c, v) in [
            (0, 0, 2.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 3.0),
            (1, 2, 1.0),
            (2, 1, 1.0),
            (2, 2, 4.0),
        ] {
            a.set(r, c, v);
        }
        let mut b = vec![3.0, 5.0, 5.0];
        a.solve(&mut b, 1e-14).unwrap();
        for x in b {
            assert!((x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [0 1; 1 0] x = [2, 3] gives x = (3, 2).
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        let mut b = vec![2.0, 3.0];
        a.solve(&mut b, 1e-14).unwrap();
        assert_eq!(b, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.set(0, 0, 1.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        let mut b = vec![1.0, 1.0];
        assert!(a.solve(&mut b, 1e-12).is_err());
    }

    #[test]
    fn wider_band_matches_dense_solution() {
        // Pentadiagonal system built from a known solution.
        let n = 9;
        let x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut a = BandMatrix::zeros(n, 2, 2);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = if i == j {
                    0.5
                } else {
                    1.0 / (1.0 + (i + 2 * j) as f64)
                };
                a.set(i, j, v);
                dense[i][j] = v;
            }
        }
        let mut b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| dense[i][j] * x[j]).sum())
            .collect();
        a.solve(&mut b, 1e-14).unwrap();
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12, "{i}: {} vs {}", b[i], x[i]);
        }
    }
}

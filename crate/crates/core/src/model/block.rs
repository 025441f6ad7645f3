use nalgebra::DMatrix;

/// `m × m` blocks, each an `n × n` symmetric tridiagonal band.
///
/// Global index of unknown `(k, i)` is `k * n + i`. Blocks `(k, l)` and
/// `(l, k)` are stored separately and need not agree.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    m: usize,
    n: usize,
    diag: Vec<Vec<f64>>,
    off: Vec<Vec<f64>>,
}

impl BlockTridiagonal {
    pub fn zeros(m: usize, n: usize) -> Self {
        BlockTridiagonal {
            m,
            n,
            diag: vec![vec![0.0; n]; m * m],
            off: vec![vec![0.0; n.saturating_sub(1)]; m * m],
        }
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    pub fn block_diag(&self, k: usize, l: usize) -> &[f64] {
        &self.diag[k * self.m + l]
    }

    pub fn block_off(&self, k: usize, l: usize) -> &[f64] {
        &self.off[k * self.m + l]
    }

    /// Adds `value` to the symmetric pair `(i, j)`, `(j, i)` of block `(k, l)`.
    /// `|i - j|` must be at most 1.
    pub fn add_sym(&mut self, k: usize, l: usize, i: usize, j: usize, value: f64) {
        let b = k * self.m + l;
        if i == j {
            self.diag[b][i] += value;
        } else {
            debug_assert!(i.abs_diff(j) == 1);
            self.off[b][i.min(j)] += value;
        }
    }

    pub fn add_block_bands(&mut self, k: usize, l: usize, diag: &[f64], off: &[f64], scale: f64) {
        let b = k * self.m + l;
        for (d, v) in self.diag[b].iter_mut().zip(diag) {
            *d += scale * v;
        }
        for (d, v) in self.off[b].iter_mut().zip(off) {
            *d += scale * v;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (k, i) = (row / self.n, row % self.n);
        let (l, j) = (col / self.n, col % self.n);
        let b = k * self.m + l;
        if i == j {
            self.diag[b][i]
        } else if i.abs_diff(j) == 1 {
            self.off[b][i.min(j)]
        } else {
            0.0
        }
    }

    /// Nonzero entries `(col, value)` of one row, in increasing column order.
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        let (k, i) = (row / self.n, row % self.n);
        let mut out = Vec::with_capacity(3 * self.m);
        for l in 0..self.m {
            let b = k * self.m + l;
            if i > 0 {
                out.push((l * self.n + i - 1, self.off[b][i - 1]));
            }
            out.push((l * self.n + i, self.diag[b][i]));
            if i + 1 < self.n {
                out.push((l * self.n + i + 1, self.off[b][i]));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut y = vec![0.0; m * n];
        for k in 0..m {
            for l in 0..m {
                let b = k * m + l;
                let xs = &x[l * n..(l + 1) * n];
                let ys = &mut y[k * n..(k + 1) * n];
                band_mul_add(&self.diag[b], &self.off[b], xs, ys);
            }
        }
        y
    }

    /// `Jᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut y = vec![0.0; m * n];
        for k in 0..m {
            for l in 0..m {
                // block (k, l) transposed is the same band, contributing to row block l
                let b = k * m + l;
                let xs = &x[k * n..(k + 1) * n];
                let ys = &mut y[l * n..(l + 1) * n];
                band_mul_add(&self.diag[b], &self.off[b], xs, ys);
            }
        }
        y
    }

    /// `|J|ᵀ |x|`, used to scale residuals.
    pub fn abs_tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let mut y = vec![0.0; m * n];
        for k in 0..m {
            for l in 0..m {
                let b = k * m + l;
                let d: Vec<f64> = self.diag[b].iter().map(|v| v.abs()).collect();
                let o: Vec<f64> = self.off[b].iter().map(|v| v.abs()).collect();
                band_mul_add(&d, &o, &ax[k * n..(k + 1) * n], &mut y[l * n..(l + 1) * n]);
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.m, self.n);
        let mut a = DMatrix::zeros(m * n, m * n);
        for k in 0..m {
            for l in 0..m {
                let b = k * m + l;
                for i in 0..n {
                    a[(k * n + i, l * n + i)] = self.diag[b][i];
                    if i + 1 < n {
                        a[(k * n + i, l * n + i + 1)] = self.off[b][i];
                        a[(k * n + i + 1, l * n + i)] = self.off[b][i];
                    }
                }
            }
        }
        a
    }
}

fn band_mul_add(diag: &[f64], off: &[f64], x: &[f64], y: &mut [f64]) {
    let n = diag.len();
    for i in 0..n {
        let mut s = diag[i] * x[i];
        if i > 0 {
            s += off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            s += off[i] * x[i + 1];
        }
        y[i] += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BlockTridiagonal {
        let mut b = BlockTridiagonal::zeros(2, 3);
        let mut c = 1.0;
        for k in 0..2 {
            for l in 0..2 {
                for i in 0..3 {
                    b.add_sym(k, l, i, i, c);
                    c += 1.0;
                    if i + 1 < 3 {
                        b.add_sym(k, l, i, i + 1, -c);
                        c += 0.5;
                    }
                }
            }
        }
        b
    }

    #[test]
    fn products_match_dense() {
        let b = sample();
        let d = b.to_dense();
        let x = [0.3, -1.0, 2.0, 0.5, 0.25, -0.7];
        let y = b.mul_vec(&x);
        let z = b.tr_mul_vec(&x);
        let xv = nalgebra::DVector::from_column_slice(&x);
        let yd = &d * &xv;
        let zd = d.transpose() * &xv;
        for i in 0..6 {
            assert!((y[i] - yd[i]).abs() < 1e-13);
            assert!((z[i] - zd[i]).abs() < 1e-13);
            for j in 0..6 {
                assert_eq!(b.get(i, j), d[(i, j)]);
            }
            let dense_row: f64 = b.row_entries(i).iter().map(|(c, v)| v * x[*c]).sum();
            assert!((dense_row - yd[i]).abs() < 1e-13);
        }
    }
}

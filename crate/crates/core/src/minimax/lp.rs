//! Dense bounded-variable primal simplex for
//! `max cᵀx  s.t.  A x ≤ b,  0 ≤ x ≤ upper`, with `b ≥ 0` so the slack
//! basis is feasible at `x = 0`.

#[derive(Debug, Clone)]
pub struct BoundedLp {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// May be `f64::INFINITY`.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y ≥ 0` with `Aᵀy ≥ c` on free-to-increase columns.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;

impl BoundedLp {
    pub fn solve(&self, max_iters: usize) -> LpSolution {
        let m = self.rows;
        let n = self.cols;
        let w = n + m;
        debug_assert!(self.b.iter().all(|&v| v >= 0.0));
        let mut t = vec![0.0; m * w];
        for r in 0..m {
            t[r * w..r * w + n].copy_from_slice(&self.a[r * n..(r + 1) * n]);
            t[r * w + n + r] = 1.0;
        }
        let mut upper = self.upper.clone();
        upper.extend(std::iter::repeat(f64::INFINITY).take(m));
        let mut beta = self.b.clone();
        let mut basis: Vec<usize> = (n..w).collect();
        let mut status = vec![Status::AtLower; w];
        for &j in &basis {
            status[j] = Status::Basic;
        }
        let mut d = vec![0.0; w];
        d[..n].copy_from_slice(&self.c);

        let cost_scale = self.c.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut degenerate_run = 0usize;
        let mut iterations = 0;
        let mut result_status = LpStatus::IterationLimit;

        while iterations < max_iters {
            iterations += 1;
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = COST_TOL * cost_scale;
            for j in 0..w {
                let gain = match status[j] {
                    Status::AtLower => d[j],
                    Status::AtUpper => -d[j],
                    Status::Basic => continue,
                };
                if gain > COST_TOL * cost_scale {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if gain > best {
                        best = gain;
                        enter = Some(j);
                    }
                }
            }
            let Some(j) = enter else {
                result_status = LpStatus::Optimal;
                break;
            };
            let s = if status[j] == Status::AtLower { 1.0 } else { -1.0 };

            // ratio test
            let mut step = upper[j];
            let mut leave: Option<(usize, Status)> = None;
            let col_scale = (0..m).fold(0.0f64, |a, r| a.max(t[r * w + j].abs()));
            let piv_tol = PIVOT_TOL * col_scale.max(1.0);
            for r in 0..m {
                let a = s * t[r * w + j];
                let k = basis[r];
                if a > piv_tol {
                    let ratio = beta[r].max(0.0) / a;
                    if ratio < step || (ratio == step && leave.is_some_and(|(lr, _)| basis[lr] > k)) {
                        step = ratio;
                        leave = Some((r, Status::AtLower));
                    }
                } else if a < -piv_tol && upper[k].is_finite() {
                    let ratio = (upper[k] - beta[r]).max(0.0) / -a;
                    if ratio < step || (ratio == step && leave.is_some_and(|(lr, _)| basis[lr] > k)) {
                        step = ratio;
                        leave = Some((r, Status::AtUpper));
                    }
                }
            }
            if !step.is_finite() {
                result_status = LpStatus::Unbounded;
                break;
            }
            if step <= 0.0 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            for r in 0..m {
                beta[r] -= s * t[r * w + j] * step;
            }
            match leave {
                None => {
                    // bound flip
                    status[j] = if s > 0.0 { Status::AtUpper } else { Status::AtLower };
                }
                Some((r, leave_status)) => {
                    let entering_value = if s > 0.0 { step } else { upper[j] - step };
                    let k = basis[r];
                    status[k] = leave_status;
                    status[j] = Status::Basic;
                    basis[r] = j;
                    let p = t[r * w + j];
                    for v in &mut t[r * w..(r + 1) * w] {
                        *v /= p;
                    }
                    let pivot_row: Vec<f64> = t[r * w..(r + 1) * w].to_vec();
                    for rr in 0..m {
                        if rr == r {
                            continue;
                        }
                        let f = t[rr * w + j];
                        if f != 0.0 {
                            for (v, pv) in t[rr * w..(rr + 1) * w].iter_mut().zip(&pivot_row) {
                                *v -= f * pv;
                            }
                        }
                    }
                    let f = d[j];
                    for (v, pv) in d.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    beta[r] = entering_value;
                }
            }
        }

        let mut x = vec![0.0; n];
        for j in 0..n {
            x[j] = match status[j] {
                Status::AtLower => 0.0,
                Status::AtUpper => upper[j],
                Status::Basic => 0.0,
            };
        }
        for (r, &k) in basis.iter().enumerate() {
            if k < n {
                x[k] = beta[r].clamp(0.0, upper[k]);
            }
        }
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        let duals = (0..m).map(|r| (-d[n + r]).max(0.0)).collect();
        LpSolution {
            status: result_status,
            x,
            objective,
            duals,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = BoundedLp {
            rows: 3,
            cols: 2,
            a: vec![1.0, 0.0, 0.0, 2.0, 3.0, 2.0],
            b: vec![4.0, 12.0, 18.0],
            c: vec![3.0, 5.0],
            upper: vec![f64::INFINITY; 2],
        };
        let s = lp.solve(100);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective - 36.0).abs() < 1e-12);
        // duals (0, 1.5, 1)
        assert!((s.duals[0]).abs() < 1e-12);
        assert!((s.duals[1] - 1.5).abs() < 1e-12);
        assert!((s.duals[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upper_bounds_flip() {
        // max x + y, x + y <= 10, x <= 3, y <= 4 (as bounds)
        let lp = BoundedLp {
            rows: 1,
            cols: 2,
            a: vec![1.0, 1.0],
            b: vec![10.0],
            c: vec![1.0, 1.0],
            upper: vec![3.0, 4.0],
        };
        let s = lp.solve(100);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![3.0, 4.0]);
        assert_eq!(s.duals, vec![0.0]);
    }

    #[test]
    fn unbounded_detected() {
        let lp = BoundedLp {
            rows: 1,
            cols: 2,
            a: vec![1.0, -1.0],
            b: vec![1.0],
            c: vec![0.0, 1.0],
            upper: vec![f64::INFINITY; 2],
        };
        assert_eq!(lp.solve(100).status, LpStatus::Unbounded);
    }

    /// Optimality via weak duality: with y ≥ 0 and reduced costs r = c - Aᵀy,
    /// bᵀy + Σ_j upper_j max(r_j, 0) bounds every feasible objective.
    #[test]
    fn random_problems_satisfy_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let rows = rng.gen_range(1..12);
            let cols = rng.gen_range(1..15);
            let a: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let b: Vec<f64> = (0..rows).map(|_| rng.gen_range(0.0..3.0)).collect();
            let c: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let upper: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.1..5.0)).collect();
            let lp = BoundedLp { rows, cols, a: a.clone(), b: b.clone(), c: c.clone(), upper: upper.clone() };
            let s = lp.solve(10_000);
            assert_eq!(s.status, LpStatus::Optimal);
            for r in 0..rows {
                let ax: f64 = (0..cols).map(|j| a[r * cols + j] * s.x[j]).sum();
                assert!(ax <= b[r] + 1e-9);
            }
            for j in 0..cols {
                assert!(s.x[j] >= 0.0 && s.x[j] <= upper[j]);
            }
            let mut bound: f64 = b.iter().zip(&s.duals).map(|(x, y)| x * y).sum();
            for j in 0..cols {
                let rc = c[j] - (0..rows).map(|r| a[r * cols + j] * s.duals[r]).sum::<f64>();
                bound += upper[j] * rc.max(0.0);
            }
            assert!((bound - s.objective).abs() <= 1e-8 * (1.0 + s.objective.abs()), "{bound} vs {}", s.objective);
        }
    }
}

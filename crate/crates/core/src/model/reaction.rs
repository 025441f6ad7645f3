use std::sync::Arc;

/// A scalar coefficient `x ↦ a(x)` on `[0, 1]`.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn constant(value: f64) -> Coefficient {
    Arc::new(move |_| value)
}

/// Reaction map `f: (x, t) ∈ [0,1] × R_+^m → R^m` with its Jacobian.
///
/// Jacobian layout is row-major: `out[k * m + l] = ∂f^k/∂t^l`.
pub trait Reaction: Send + Sync {
    fn components(&self) -> usize;

    fn value(&self, x: f64, t: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: f64, t: &[f64], out: &mut [f64]);

    /// `out[p * m + l] = Σ_k w_k ∂²f^k/∂t^p∂t^l`.
    ///
    /// The default differentiates [`Reaction::jacobian`] by central differences.
    fn hessian_contract(&self, x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let m = self.components();
        let mut plus = vec![0.0; m * m];
        let mut minus = vec![0.0; m * m];
        let mut tp = t.to_vec();
        for p in 0..m {
            let step = 1e-6 * t[p].abs().max(1e-3);
            let lo = (t[p] - step).max(0.0);
            let hi = t[p] + step;
            tp[p] = hi;
            self.jacobian(x, &tp, &mut plus);
            tp[p] = lo;
            self.jacobian(x, &tp, &mut minus);
            tp[p] = t[p];
            for l in 0..m {
                let mut s = 0.0;
                for k in 0..m {
                    s += w[k] * (plus[k * m + l] - minus[k * m + l]);
                }
                out[p * m + l] = s / (hi - lo);
            }
        }
    }

    /// True when `f ≡ 0`.
    fn is_zero(&self) -> bool {
        false
    }

    fn describe(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct ZeroReaction {
    pub m: usize,
}

impl Reaction for ZeroReaction {
    fn components(&self) -> usize {
        self.m
    }
    fn value(&self, _x: f64, _t: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _x: f64, _t: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian_contract(&self, _x: f64, _t: &[f64], _w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn describe(&self) -> String {
        "0".into()
    }
}

/// Scalar `κ(x) t^γ`.
#[derive(Clone)]
pub struct ScalarPower {
    pub gamma: f64,
    pub kappa: Coefficient,
}

impl ScalarPower {
    pub fn new(gamma: f64) -> Self {
        ScalarPower {
            gamma,
            kappa: constant(1.0),
        }
    }

    pub fn with_kappa(gamma: f64, kappa: Coefficient) -> Self {
        ScalarPower { gamma, kappa }
    }
}

fn pow_pos(t: f64, e: f64) -> f64 {
    let t = t.max(0.0);
    if t == 0.0 {
        if e > 0.0 {
            0.0
        } else if e == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        t.powf(e)
    }
}

impl Reaction for ScalarPower {
    fn components(&self) -> usize {
        1
    }
    fn value(&self, x: f64, t: &[f64], out: &mut [f64]) {
        out[0] = (self.kappa)(x) * pow_pos(t[0], self.gamma);
    }
    fn jacobian(&self, x: f64, t: &[f64], out: &mut [f64]) {
        out[0] = (self.kappa)(x) * self.gamma * pow_pos(t[0], self.gamma - 1.0);
    }
    fn hessian_contract(&self, x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let g = self.gamma;
        out[0] = if g == 1.0 {
            0.0
        } else {
            w[0] * (self.kappa)(x) * g * (g - 1.0) * pow_pos(t[0], g - 2.0)
        };
    }
    fn describe(&self) -> String {
        format!("kappa(x) t^{}", self.gamma)
    }
}

/// `f^k = b_k t_k^{β_k} Π_{j≠k} (1 + t_j)^{α_kj}`: cooperative, not
/// degenerate on the cone boundary.
#[derive(Debug, Clone)]
pub struct CooperativeProduct {
    pub beta: Vec<f64>,
    /// Row-major `m × m`; the diagonal is ignored.
    pub alpha: Vec<f64>,
    pub b: Vec<f64>,
}

impl CooperativeProduct {
    fn m(&self) -> usize {
        self.beta.len()
    }

    fn cross(&self, k: usize, t: &[f64]) -> f64 {
        let m = self.m();
        (0..m)
            .filter(|&j| j != k)
            .map(|j| (1.0 + t[j].max(0.0)).powf(self.alpha[k * m + j]))
            .product()
    }
}

impl Reaction for CooperativeProduct {
    fn components(&self) -> usize {
        self.m()
    }
    fn value(&self, _x: f64, t: &[f64], out: &mut [f64]) {
        for k in 0..self.m() {
            out[k] = self.b[k] * pow_pos(t[k], self.beta[k]) * self.cross(k, t);
        }
    }
    fn jacobian(&self, _x: f64, t: &[f64], out: &mut [f64]) {
        let m = self.m();
        for k in 0..m {
            let p = self.cross(k, t);
            let tk = pow_pos(t[k], self.beta[k]);
            for l in 0..m {
                out[k * m + l] = if l == k {
                    self.b[k] * self.beta[k] * pow_pos(t[k], self.beta[k] - 1.0) * p
                } else {
                    self.b[k] * tk * p * self.alpha[k * m + l] / (1.0 + t[l].max(0.0))
                };
            }
        }
    }
    fn hessian_contract(&self, _x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let m = self.m();
        out.fill(0.0);
        for k in 0..m {
            let p = self.cross(k, t);
            let bk = self.b[k];
            let be = self.beta[k];
            let f = bk * pow_pos(t[k], be) * p;
            let fk = bk * be * pow_pos(t[k], be - 1.0) * p;
            let fkk = bk * be * (be - 1.0) * pow_pos(t[k], be - 2.0) * p;
            for pi in 0..m {
                for l in 0..m {
                    let h = if pi == k && l == k {
                        fkk
                    } else if pi == k || l == k {
                        let j = if pi == k { l } else { pi };
                        fk * self.alpha[k * m + j] / (1.0 + t[j].max(0.0))
                    } else if pi == l {
                        let a = self.alpha[k * m + pi];
                        f * a * (a - 1.0) / (1.0 + t[pi].max(0.0)).powi(2)
                    } else {
                        f * self.alpha[k * m + pi] * self.alpha[k * m + l]
                            / ((1.0 + t[pi].max(0.0)) * (1.0 + t[l].max(0.0)))
                    };
                    out[pi * m + l] += w[k] * h;
                }
            }
        }
    }
    fn describe(&self) -> String {
        format!(
            "b_k t_k^beta_k prod_(j!=k) (1+t_j)^alpha_kj, beta={:?}, alpha={:?}, b={:?}",
            self.beta, self.alpha, self.b
        )
    }
}

/// `f^k = b_k Π_j t_j^{α_kj}`: vanishes with its derivatives whenever one
/// coordinate is zero (for `α_kj > 1`).
#[derive(Debug, Clone)]
pub struct DegenerateProduct {
    /// Row-major `m × m`.
    pub alpha: Vec<f64>,
    pub b: Vec<f64>,
}

impl DegenerateProduct {
    fn m(&self) -> usize {
        self.b.len()
    }

    /// `b_k Π_j t_j^{α_kj - d_j}` where `d_j` counts how often `j` was
    /// differentiated, times the falling-factorial coefficients.
    fn derivative(&self, k: usize, t: &[f64], orders: &[u8]) -> f64 {
        let m = self.m();
        let mut v = self.b[k];
        for j in 0..m {
            let a = self.alpha[k * m + j];
            let d = orders[j] as f64;
            let mut coef = 1.0;
            for s in 0..orders[j] {
                coef *= a - s as f64;
            }
            v *= coef * pow_pos(t[j], a - d);
        }
        v
    }
}

impl Reaction for DegenerateProduct {
    fn components(&self) -> usize {
        self.m()
    }
    fn value(&self, _x: f64, t: &[f64], out: &mut [f64]) {
        let orders = vec![0u8; self.m()];
        for k in 0..self.m() {
            out[k] = self.derivative(k, t, &orders);
        }
    }
    fn jacobian(&self, _x: f64, t: &[f64], out: &mut [f64]) {
        let m = self.m();
        let mut orders = vec![0u8; m];
        for k in 0..m {
            for l in 0..m {
                orders[l] = 1;
                out[k * m + l] = self.derivative(k, t, &orders);
                orders[l] = 0;
            }
        }
    }
    fn hessian_contract(&self, _x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let m = self.m();
        let mut orders = vec![0u8; m];
        out.fill(0.0);
        for k in 0..m {
            for p in 0..m {
                for l in 0..m {
                    orders[p] += 1;
                    orders[l] += 1;
                    out[p * m + l] += w[k] * self.derivative(k, t, &orders);
                    orders[p] -= 1;
                    orders[l] -= 1;
                }
            }
        }
    }
    fn describe(&self) -> String {
        format!("b_k prod_j t_j^alpha_kj, alpha={:?}, b={:?}", self.alpha, self.b)
    }
}

/// `f - ψ`, the reaction of the operator `A + Ψ` when `A(u) = L u - f(u)`.
#[derive(Clone)]
pub struct Difference {
    pub base: Arc<dyn Reaction>,
    pub minus: Arc<dyn Reaction>,
}

impl Reaction for Difference {
    fn components(&self) -> usize {
        self.base.components()
    }
    fn value(&self, x: f64, t: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.base.value(x, t, out);
        self.minus.value(x, t, &mut tmp);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o -= v;
        }
    }
    fn jacobian(&self, x: f64, t: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.base.jacobian(x, t, out);
        self.minus.jacobian(x, t, &mut tmp);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o -= v;
        }
    }
    fn hessian_contract(&self, x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.base.hessian_contract(x, t, w, out);
        self.minus.hessian_contract(x, t, w, &mut tmp);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o -= v;
        }
    }
    fn is_zero(&self) -> bool {
        self.base.is_zero() && self.minus.is_zero()
    }
    fn describe(&self) -> String {
        format!("({}) - ({})", self.base.describe(), self.minus.describe())
    }
}

/// `Σ` of two reactions.
#[derive(Clone)]
pub struct Sum {
    pub first: Arc<dyn Reaction>,
    pub second: Arc<dyn Reaction>,
}

impl Reaction for Sum {
    fn components(&self) -> usize {
        self.first.components()
    }
    fn value(&self, x: f64, t: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.first.value(x, t, out);
        self.second.value(x, t, &mut tmp);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o += v;
        }
    }
    fn jacobian(&self, x: f64, t: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.first.jacobian(x, t, out);
        self.second.jacobian(x, t, &mut tmp);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o += v;
        }
    }
    fn hessian_contract(&self, x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.first.hessian_contract(x, t, w, out);
        self.second.hessian_contract(x, t, w, &mut tmp);
        for (o, v) in out.iter_mut().zip(tmp) {
            *o += v;
        }
    }
    fn is_zero(&self) -> bool {
        self.first.is_zero() && self.second.is_zero()
    }
    fn describe(&self) -> String {
        format!("{} + {}", self.first.describe(), self.second.describe())
    }
}

/// Parameter term `g^k(x, t) = a_k(x) t_k^q`.
#[derive(Clone)]
pub struct PowerSource {
    pub q: f64,
    pub coeffs: Vec<Coefficient>,
}

impl PowerSource {
    pub fn uniform(m: usize, q: f64) -> Self {
        PowerSource {
            q,
            coeffs: (0..m).map(|_| constant(1.0)).collect(),
        }
    }

    pub fn value(&self, k: usize, x: f64, t: f64) -> f64 {
        (self.coeffs[k])(x) * pow_pos(t, self.q)
    }

    pub fn derivative(&self, k: usize, x: f64, t: f64) -> f64 {
        if self.q == 1.0 {
            (self.coeffs[k])(x)
        } else {
            (self.coeffs[k])(x) * self.q * pow_pos(t, self.q - 1.0)
        }
    }

    pub fn second_derivative(&self, k: usize, x: f64, t: f64) -> f64 {
        if self.q == 1.0 {
            0.0
        } else {
            (self.coeffs[k])(x) * self.q * (self.q - 1.0) * pow_pos(t, self.q - 2.0)
        }
    }
}

/// `c · g(x, t)` as a reaction, used for proportional perturbations.
#[derive(Clone)]
pub struct SourceMultiple {
    pub c: f64,
    pub source: PowerSource,
}

impl Reaction for SourceMultiple {
    fn components(&self) -> usize {
        self.source.coeffs.len()
    }
    fn value(&self, x: f64, t: &[f64], out: &mut [f64]) {
        for k in 0..out.len() {
            out[k] = self.c * self.source.value(k, x, t[k]);
        }
    }
    fn jacobian(&self, x: f64, t: &[f64], out: &mut [f64]) {
        let m = self.components();
        out.fill(0.0);
        for k in 0..m {
            out[k * m + k] = self.c * self.source.derivative(k, x, t[k]);
        }
    }
    fn hessian_contract(&self, x: f64, t: &[f64], w: &[f64], out: &mut [f64]) {
        let m = self.components();
        out.fill(0.0);
        for k in 0..m {
            out[k * m + k] = w[k] * self.c * self.source.second_derivative(k, x, t[k]);
        }
    }
    fn is_zero(&self) -> bool {
        self.c == 0.0
    }
    fn describe(&self) -> String {
        format!("{} g(x,t)", self.c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(r: &dyn Reaction, x: f64, t: &[f64]) -> Vec<f64> {
        let m = r.components();
        let mut out = vec![0.0; m * m];
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        for l in 0..m {
            let h = 1e-6 * t[l].max(1.0);
            let mut tp = t.to_vec();
            let mut tm = t.to_vec();
            tp[l] += h;
            tm[l] -= h;
            r.value(x, &tp, &mut fp);
            r.value(x, &tm, &mut fm);
            for k in 0..m {
                out[k * m + l] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        out
    }

    struct FdOnly(CooperativeProduct);

    impl Reaction for FdOnly {
        fn components(&self) -> usize {
            self.0.components()
        }
        fn value(&self, x: f64, t: &[f64], out: &mut [f64]) {
            self.0.value(x, t, out)
        }
        fn jacobian(&self, x: f64, t: &[f64], out: &mut [f64]) {
            self.0.jacobian(x, t, out)
        }
        fn describe(&self) -> String {
            "fd".into()
        }
    }

    fn check_jacobian(r: &dyn Reaction, t: &[f64]) {
        let m = r.components();
        let mut j = vec![0.0; m * m];
        r.jacobian(0.3, t, &mut j);
        let fd = fd_jacobian(r, 0.3, t);
        for (a, b) in j.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    fn check_hessian(r: &dyn Reaction, t: &[f64], w: &[f64]) {
        let m = r.components();
        let mut h = vec![0.0; m * m];
        r.hessian_contract(0.3, t, w, &mut h);
        // finite differences of w·J
        let mut jp = vec![0.0; m * m];
        let mut jm = vec![0.0; m * m];
        for p in 0..m {
            let step = 1e-6 * t[p].max(1.0);
            let mut tp = t.to_vec();
            let mut tm = t.to_vec();
            tp[p] += step;
            tm[p] -= step;
            r.jacobian(0.3, &tp, &mut jp);
            r.jacobian(0.3, &tm, &mut jm);
            for l in 0..m {
                let fd: f64 = (0..m)
                    .map(|k| w[k] * (jp[k * m + l] - jm[k * m + l]) / (2.0 * step))
                    .sum();
                let a = h[p * m + l];
                assert!((a - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "H[{p},{l}] {a} vs {fd}");
            }
        }
    }

    #[test]
    fn derivatives_of_catalog_reactions() {
        let sp = ScalarPower::new(2.5);
        check_jacobian(&sp, &[0.7]);
        check_hessian(&sp, &[0.7], &[1.3]);

        let cp = CooperativeProduct {
            beta: vec![2.0, 2.5],
            alpha: vec![0.0, 0.5, 0.7, 0.0],
            b: vec![1.0, 0.8],
        };
        check_jacobian(&cp, &[0.6, 1.4]);
        check_hessian(&cp, &[0.6, 1.4], &[0.4, 1.1]);

        let dp = DegenerateProduct {
            alpha: vec![1.5, 1.2, 1.3, 1.6],
            b: vec![1.0, 2.0],
        };
        check_jacobian(&dp, &[0.6, 1.4]);
        check_hessian(&dp, &[0.6, 1.4], &[0.4, 1.1]);

        let three = CooperativeProduct {
            beta: vec![2.0, 2.0, 3.0],
            alpha: vec![0.0, 0.5, 0.3, 0.2, 0.0, 0.4, 0.6, 0.1, 0.0],
            b: vec![1.0, 1.0, 0.5],
        };
        check_hessian(&three, &[0.5, 0.9, 1.7], &[1.0, 0.3, 0.6]);
    }

    #[test]
    fn default_hessian_uses_finite_differences() {
        let cp = CooperativeProduct {
            beta: vec![2.0, 2.5],
            alpha: vec![0.0, 0.5, 0.7, 0.0],
            b: vec![1.0, 0.8],
        };
        let t = [0.6, 1.4];
        let w = [0.4, 1.1];
        let mut exact = vec![0.0; 4];
        cp.hessian_contract(0.2, &t, &w, &mut exact);
        let fd = FdOnly(cp);
        let mut approx = vec![0.0; 4];
        fd.hessian_contract(0.2, &t, &w, &mut approx);
        for (a, b) in exact.iter().zip(&approx) {
            assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn difference_and_sum_compose() {
        let base: Arc<dyn Reaction> = Arc::new(ScalarPower::new(2.0));
        let extra: Arc<dyn Reaction> = Arc::new(ScalarPower::with_kappa(3.0, constant(0.1)));
        let s = Sum {
            first: base.clone(),
            second: extra.clone(),
        };
        let d = Difference {
            base: Arc::new(s),
            minus: extra,
        };
        let mut a = [0.0];
        let mut b = [0.0];
        d.value(0.0, &[1.7], &mut a);
        base.value(0.0, &[1.7], &mut b);
        assert!((a[0] - b[0]).abs() < 1e-14);
    }

    #[test]
    fn power_source_euler_identity() {
        let g = PowerSource::uniform(1, 0.4);
        for &t in &[0.1, 1.0, 3.0] {
            assert!((t * g.derivative(0, 0.5, t) - 0.4 * g.value(0, 0.5, t)).abs() < 1e-14);
        }
    }
}

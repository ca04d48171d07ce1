//! Double-exponential (tanh-sinh) quadrature on the unit interval.
//!
//! The substitution `x = 1 / (1 + exp(-π sinh t))` sends `t ∈ ℝ` to `(0, 1)`
//! and makes integrands with algebraic endpoint singularities decay
//! double-exponentially in `t`, so the plain trapezoidal rule in `t`
//! converges geometrically. Nodes carry `1 - x` computed directly from `t`,
//! which keeps factors such as `(1 - x)^k` accurate when `x` rounds to 1.
//!
//! The speed and scale densities of the dual diffusion span hundreds of
//! orders of magnitude for weak competition, so the main entry point works
//! with log-integrands and returns the log of the integral.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// One quadrature node on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub t: f64,
    pub x: f64,
    /// `1 - x`, accurate near 1.
    pub cx: f64,
    /// Trapezoidal weight including the Jacobian `dx/dt`.
    pub w: f64,
}

impl Node {
    pub fn at(t: f64, h: f64) -> Node {
        let u = PI * t.sinh();
        // x = σ(u), 1 - x = σ(-u)
        let (x, cx) = if u >= 0.0 {
            let e = (-u).exp();
            (1.0 / (1.0 + e), e / (1.0 + e))
        } else {
            let e = u.exp();
            (e / (1.0 + e), 1.0 / (1.0 + e))
        };
        let w = h * PI * t.cosh() * x * cx;
        Node { t, x, cx, w }
    }
}

/// Nodes `t = k h` for `|t| ≤ t_max`, in increasing order of `x`.
pub fn nodes(h: f64, t_max: f64) -> Vec<Node> {
    let n = (t_max / h).floor() as i64;
    (-n..=n).map(|k| Node::at(k as f64 * h, h)).collect()
}

/// Largest `t` whose node keeps `min(x, 1 - x) ≥ floor`.
pub fn t_max_for_floor(floor: f64) -> f64 {
    // 1 - x ≈ exp(-π sinh t)
    ((1.0 / floor - 1.0).ln() / PI).asinh()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSum {
    pub fn add(&mut self, ln_term: f64) {
        if ln_term == f64::NEG_INFINITY {
            return;
        }
        if ln_term <= self.max {
            self.sum += (ln_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - ln_term).exp() + 1.0;
            self.max = ln_term;
        }
    }

    pub fn merge(&mut self, other: LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

const BASE_STEP: f64 = 0.5;
const INNER_T_MAX: f64 = 6.0;
const MAX_LEVEL: usize = 8;
const MIN_LEVEL: usize = 3;

/// Nodes added at each refinement level; level 0 has step `BASE_STEP`,
/// level `l > 0` adds the odd multiples of `BASE_STEP / 2^l`. Weights are
/// stored without the step factor.
fn level_tables() -> &'static [Vec<Node>] {
    static TABLES: OnceLock<Vec<Vec<Node>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut levels = Vec::with_capacity(MAX_LEVEL + 1);
        levels.push(nodes(BASE_STEP, INNER_T_MAX).into_iter().map(unit_weight).collect());
        for level in 1..=MAX_LEVEL {
            let h = BASE_STEP / (1u64 << level) as f64;
            let n = (INNER_T_MAX / h).floor() as i64;
            let added = (-n..=n)
                .filter(|k| k.rem_euclid(2) == 1)
                .map(|k| unit_weight(Node::at(k as f64 * h, 1.0)))
                .collect();
            levels.push(added);
        }
        levels
    })
}

fn unit_weight(mut node: Node) -> Node {
    node.w = PI * node.t.cosh() * node.x * node.cx;
    node
}

/// Outcome of an adaptive log-space integration.
#[derive(Debug, Clone, Copy)]
pub struct LogIntegral {
    pub ln_value: f64,
    /// Change in the log between the last two levels.
    pub ln_error: f64,
    pub levels: usize,
}

/// `ln ∫₀¹ exp(f(x, 1-x)) dx`, refining the step until successive levels
/// agree to `ln_tol` (an absolute tolerance on the log, i.e. relative on the
/// integral).
///
/// Non-finite log-integrand values are treated as `-∞` (zero contribution).
pub fn unit_log_integral(f: impl Fn(f64, f64) -> f64, ln_tol: f64) -> LogIntegral {
    let tables = level_tables();
    let mut acc = LogSum::default();
    let mut prev = f64::NAN;
    let mut ln_error = f64::INFINITY;
    let mut levels = 0;
    for (level, table) in tables.iter().enumerate() {
        for node in table {
            let v = f(node.x, node.cx);
            if v.is_finite() {
                acc.add(v + node.w.ln());
            }
        }
        let h = BASE_STEP / (1u64 << level) as f64;
        let current = acc.ln() + h.ln();
        levels = level + 1;
        if level > 0 {
            ln_error = if current == prev { 0.0 } else { (current - prev).abs() };
        }
        prev = current;
        if level >= MIN_LEVEL && ln_error < ln_tol {
            break;
        }
    }
    LogIntegral {
        ln_value: prev,
        ln_error,
        levels,
    }
}

/// `∫₀¹ f(x, 1-x) dx` for integrands of one sign or mild cancellation.
pub fn unit_integral(f: impl Fn(f64, f64) -> f64, tol: f64) -> f64 {
    let tables = level_tables();
    let mut sum = 0.0;
    let mut prev = f64::NAN;
    for (level, table) in tables.iter().enumerate() {
        for node in table {
            let v = f(node.x, node.cx);
            if v.is_finite() {
                sum += v * node.w;
            }
        }
        let h = BASE_STEP / (1u64 << level) as f64;
        let current = sum * h;
        if level >= MIN_LEVEL && (current - prev).abs() <= tol * current.abs().max(1e-300) {
            return current;
        }
        prev = current;
    }
    prev
}

/// `∫ₐᵇ f(x) dx` by mapping onto the unit interval.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let len = b - a;
    len * unit_integral(|x, cx| f(if x <= 0.5 { a + len * x } else { b - len * cx }), tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_smooth() {
        let v = unit_integral(|x, _| x * x, 1e-14);
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let v = integrate(|x| x.sin(), 0.0, PI, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularities() {
        // ∫ x^{-1/2} (1-x)^{-0.9} dx = B(1/2, 1/10)
        let exact = statrs::function::beta::beta(0.5, 0.1);
        let v = unit_integral(|x, cx| x.powf(-0.5) * cx.powf(-0.9), 1e-13);
        assert!((v / exact - 1.0).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn log_integral_of_huge_exponential() {
        // ∫₀¹ e^{a x} dx = (e^a - 1)/a with a = 2000
        let a = 2000.0;
        let r = unit_log_integral(|x, _| a * x, 1e-13);
        let exact = a + (-(-a).exp()).ln_1p() - a.ln();
        assert!((r.ln_value - exact).abs() < 1e-10, "{} vs {}", r.ln_value, exact);
    }

    #[test]
    fn log_sum_merge() {
        let mut a = LogSum::default();
        let mut b = LogSum::default();
        a.add(1.0);
        b.add(3.0);
        b.add(-2.0);
        a.merge(b);
        let exact = (1f64.exp() + 3f64.exp() + (-2f64).exp()).ln();
        assert!((a.ln() - exact).abs() < 1e-14);
    }

    #[test]
    fn complement_is_accurate_near_one() {
        let node = Node::at(3.5, 0.1);
        assert!(node.cx > 0.0 && node.cx < 1e-20);
        assert_eq!(node.x, 1.0);
    }
}

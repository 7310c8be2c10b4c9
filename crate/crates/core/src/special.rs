//! Hermite polynomials, oscillator wavefunctions and Gauss–Hermite rules.
//!
//! Hermite polynomials follow the physicist's convention, `H_0 = 1`,
//! `H_1 = 2x`, `H_2 = 4x² − 2`. All wavefunctions are real functions of the
//! coordinate quadrature `x = (a + a†)/√2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};

/// Largest Fock order accepted by the wavefunction routines.
pub const MAX_FOCK_ORDER: usize = 60;
/// Largest Gauss–Hermite rule that can be built.
pub const MAX_RULE_ORDER: usize = 256;
/// Default per-axis order for oracle work.
pub const DEFAULT_QUAD_ORDER: usize = 96;

/// Physicist's Hermite polynomial `H_n(x)` by three-term recurrence.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `ln n!`, accumulated term by term.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Squeezing parameter and Fock order of a squeezed Fock state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub r: f64,
    pub n: usize,
}

impl WaveParams {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if !r.is_finite() {
            return Err(SfsError::NonFinite("r"));
        }
        if n > MAX_FOCK_ORDER {
            return Err(SfsError::FockOrderTooLarge { n, max: MAX_FOCK_ORDER });
        }
        Ok(Self { r, n })
    }

    /// `e^{2r}`, the quadratic coefficient of the state's Gaussian envelope.
    pub fn envelope(&self) -> f64 {
        (2.0 * self.r).exp()
    }
}

/// Squeezed Fock state wavefunction
/// `e^{−e^{2r}x²/2} H_n(e^r x) / (π^{1/4} √(2^n n! e^{−r}))`.
///
/// The normalisation is assembled in log space so that orders up to
/// [`MAX_FOCK_ORDER`] stay finite.
pub fn sfs_wavefunction(x: f64, p: &WaveParams) -> Result<f64> {
    let p = WaveParams::new(p.r, p.n)?;
    if !x.is_finite() {
        return Err(SfsError::NonFinite("x"));
    }
    Ok(sfs_value(x, p.r, p.n))
}

pub(crate) fn sfs_value(x: f64, r: f64, n: usize) -> f64 {
    let y = r.exp() * x;
    let h = hermite(n, y);
    if h == 0.0 {
        return 0.0;
    }
    if !h.is_finite() {
        // |y| is far outside the classically allowed region; the envelope wins.
        return 0.0;
    }
    let ln_norm = 0.25 * PI.ln() + 0.5 * (n as f64 * std::f64::consts::LN_2 + ln_factorial(n) - r);
    h.signum() * (h.abs().ln() - 0.5 * y * y - ln_norm).exp()
}

/// Fock state wavefunction, the `r = 0` member of the squeezed family.
pub fn fock_wavefunction(x: f64, n: usize) -> Result<f64> {
    sfs_wavefunction(x, &WaveParams::new(0.0, n)?)
}

/// Gauss–Hermite rule for `∫ f(t) e^{−t²} dt ≈ Σ w_i f(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `w_i e^{t_i²}`, for integrating functions that carry their own decay.
    /// Computed directly rather than by multiplying, so it keeps full
    /// relative accuracy at the outermost nodes.
    pub scaled_weights: Vec<f64>,
}

impl QuadratureRule {
    /// Applies the rule to `f` (the `e^{−t²}` weight is implicit).
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }

    /// `∫ g(t) dt` for a `g` that decays like `e^{−t²}` or faster.
    pub fn integrate_unweighted<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.scaled_weights)
            .map(|(&t, &w)| w * g(t))
            .sum()
    }
}

/// Orthonormal Hermite functions `φ_{m−1}(t)` and `φ_m(t)`.
fn hermite_functions(m: usize, t: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * t * t).exp();
    for k in 0..m {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * t * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Builds the Gauss–Hermite rule of the given order.
///
/// Eigenvalues of the symmetric Jacobi matrix seed a Newton polish on the
/// orthonormal Hermite functions; weights come from the Christoffel formula
/// `w_i = e^{−t_i²} / (m φ_{m−1}(t_i)²)`.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_RULE_ORDER {
        return Err(SfsError::QuadratureOrder {
            order,
            min: 1,
            max: MAX_RULE_ORDER,
        });
    }
    let m = order;
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let scale = (2.0 * m as f64).sqrt();
    for t in nodes.iter_mut() {
        for _ in 0..8 {
            let (lower, top) = hermite_functions(m, *t);
            let step = top / (scale * lower);
            *t -= step;
            if step.abs() <= 1e-16 * t.abs().max(1.0) {
                break;
            }
        }
    }

    // Exact mirror symmetry about the origin.
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let mag = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -mag;
        nodes[j] = mag;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }

    let mut scaled_weights: Vec<f64> = nodes
        .iter()
        .map(|&t| {
            let (lower, _) = hermite_functions(m, t);
            1.0 / (m as f64 * lower * lower)
        })
        .collect();
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let w = 0.5 * (scaled_weights[i] + scaled_weights[j]);
        scaled_weights[i] = w;
        scaled_weights[j] = w;
    }
    let weights = nodes
        .iter()
        .zip(&scaled_weights)
        .map(|(&t, &s)| s * (-t * t).exp())
        .collect();

    Ok(QuadratureRule {
        order: m,
        nodes,
        weights,
        scaled_weights,
    })
}

/// Shared, lazily built rule. Rules are immutable once built.
pub fn cached_rule(order: usize) -> Result<Arc<QuadratureRule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&order) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(gauss_hermite_rule(order)?);
    cache
        .lock()
        .expect("rule cache poisoned")
        .insert(order, Arc::clone(&rule));
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermite_low_orders() {
        assert_eq!(hermite(0, 7.3), 1.0);
        assert_eq!(hermite(1, 1.5), 3.0);
        assert_eq!(hermite(2, 2.0), 14.0);
    }

    #[test]
    fn hermite_matches_explicit_expansion() {
        let explicit = |n: usize, x: f64| match n {
            0 => 1.0,
            1 => 2.0 * x,
            2 => 4.0 * x * x - 2.0,
            3 => 8.0 * x.powi(3) - 12.0 * x,
            4 => 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
            5 => 32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
            _ => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-5.0..5.0);
            for n in 0..=5 {
                let want: f64 = explicit(n, x);
                let got = hermite(n, x);
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn vacuum_and_fock_values() {
        for &x in &[-2.0, -0.3, 0.0, 1.1] {
            let v = sfs_wavefunction(x, &WaveParams { r: 0.0, n: 0 }).unwrap();
            assert_relative_eq!(v, PI.powf(-0.25) * (-x * x / 2.0).exp(), max_relative = 1e-14);
        }
        assert_eq!(sfs_wavefunction(0.0, &WaveParams { r: 0.8, n: 1 }).unwrap(), 0.0);
        assert_relative_eq!(fock_wavefunction(0.0, 0).unwrap(), PI.powf(-0.25), max_relative = 1e-15);
        let want = 2.0 * (-0.5f64).exp() / (PI.powf(0.25) * 2f64.sqrt());
        assert_relative_eq!(fock_wavefunction(1.0, 1).unwrap(), want, max_relative = 1e-14);
    }

    #[test]
    fn order_guard() {
        assert!(matches!(
            sfs_wavefunction(0.1, &WaveParams { r: 0.0, n: 61 }),
            Err(SfsError::FockOrderTooLarge { .. })
        ));
        assert!(WaveParams::new(f64::NAN, 0).is_err());
        assert!(sfs_wavefunction(1.0, &WaveParams { r: 0.3, n: 60 })
            .unwrap()
            .is_finite());
        assert_eq!(sfs_value(1e6, 0.0, 60), 0.0);
    }

    #[test]
    fn squeezing_scales_the_fock_function() {
        for &r in &[-0.9, 0.25, 1.3] {
            for n in [0, 3, 7] {
                for &x in &[-1.7, 0.2, 0.9, 2.4] {
                    let lhs = sfs_wavefunction(x, &WaveParams { r, n }).unwrap();
                    let rhs = (r / 2.0).exp() * fock_wavefunction(r.exp() * x, n).unwrap();
                    assert!((lhs - rhs).abs() < 1e-13 * rhs.abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn squeezed_fock_states_are_normalised() {
        let rule = gauss_hermite_rule(64).unwrap();
        for &r in &[-1.0, 0.0, 0.5, 1.0] {
            for n in 0..=10 {
                let p = WaveParams { r, n };
                // x = t e^{−r} turns |Ψ|² into e^{−t²}·polynomial.
                let scale = (-r).exp();
                let norm = scale * rule.integrate_unweighted(|t| sfs_value(scale * t, p.r, p.n).powi(2));
                assert!((norm - 1.0).abs() < 1e-10, "r={r} n={n} norm={norm}");
            }
        }
    }

    #[test]
    fn fock_states_are_orthonormal() {
        let rule = gauss_hermite_rule(48).unwrap();
        for m in 0..=8 {
            for n in 0..=8 {
                let ip =
                    rule.integrate_unweighted(|t| fock_wavefunction(t, m).unwrap() * fock_wavefunction(t, n).unwrap());
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "<{m}|{n}> = {ip}");
            }
        }
    }

    #[test]
    fn small_rules() {
        let one = gauss_hermite_rule(1).unwrap();
        assert_eq!(one.nodes, vec![0.0]);
        assert_relative_eq!(one.weights[0], PI.sqrt(), max_relative = 1e-15);

        let two = gauss_hermite_rule(2).unwrap();
        assert_relative_eq!(two.nodes[1], 0.5f64.sqrt(), max_relative = 1e-15);
        assert_eq!(two.nodes[0], -two.nodes[1]);
        for w in &two.weights {
            assert_relative_eq!(*w, PI.sqrt() / 2.0, max_relative = 1e-14);
        }
        assert_relative_eq!(two.integrate(|t| t * t), PI.sqrt() / 2.0, max_relative = 1e-14);
        assert!(gauss_hermite_rule(0).is_err());
        assert!(gauss_hermite_rule(257).is_err());
    }

    #[test]
    fn rule_invariants_across_orders() {
        for order in [1, 2, 3, 5, 8, 17, 32, 48, 64, 96, 128, 191, 256] {
            let rule = gauss_hermite_rule(order).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-12, "order {order}: {total}");
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for w in rule.nodes.windows(2) {
                assert!(w[0] < w[1]);
            }
            for i in 0..order {
                assert_eq!(rule.nodes[i], -rule.nodes[order - 1 - i]);
            }
        }
    }

    #[test]
    fn monomials_up_to_degree_two_m_minus_one() {
        // ∫ t^{2k} e^{−t²} = Γ(k + 1/2) = (2k−1)!! √π / 2^k
        let moment = |k: usize| -> f64 {
            let mut v = PI.sqrt();
            for j in 0..k {
                v *= (2 * j + 1) as f64 / 2.0;
            }
            v
        };
        for order in [1, 2, 3, 4, 6, 10, 16] {
            let rule = gauss_hermite_rule(order).unwrap();
            for deg in 0..(2 * order) {
                let got = rule.integrate(|t| t.powi(deg as i32));
                let want = if deg % 2 == 1 { 0.0 } else { moment(deg / 2) };
                // odd moments cancel between mirrored nodes; scale by the term sizes
                let size = rule.integrate(|t| t.abs().powi(deg as i32));
                assert!(
                    (got - want).abs() <= 1e-12 * size.max(1.0),
                    "order {order} degree {deg}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn cached_rules_are_shared() {
        let a = cached_rule(40).unwrap();
        let b = cached_rule(40).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}

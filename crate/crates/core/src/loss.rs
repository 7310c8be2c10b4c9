//! Fidelity of the heralded state when every detector has efficiency `η`.
//!
//! A lossy detector is an ideal one behind a beam splitter of amplitude
//! transmittance `η` whose other port carries vacuum. Keeping those vacuum
//! coordinates `v_i` explicit turns the mixed output into a pure state of
//! `(x_N, v)`, which the numeric route integrates directly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::gaussian::{universal_sigma, UniversalSchemeParams};
use crate::heralding::DetectionPattern;
use crate::oracle::nested_square_integral;
use crate::special::{hermite, ln_factorial};

/// Largest mode count accepted by [`lossy_fidelity_numeric`].
pub const MAX_LOSS_MODES: usize = 3;
/// Largest total count accepted by [`lossy_fidelity_numeric`].
pub const MAX_LOSS_TOTAL: usize = 2;
/// Per-axis cubature order of the purification integrals. The integrands
/// are Gaussians times polynomials of degree at most `2n`, so this is far
/// above exactness; doubling it is still checked.
pub const LOSS_QUAD_ORDER: usize = 12;
pub const LOSS_CONVERGENCE_TOLERANCE: f64 = 1e-8;

/// Common detection efficiency of all detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct EfficiencySpec {
    eta: f64,
}

impl EfficiencySpec {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(SfsError::Efficiency(eta));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl TryFrom<f64> for EfficiencySpec {
    type Error = SfsError;

    fn try_from(eta: f64) -> Result<Self> {
        Self::new(eta)
    }
}

impl From<EfficiencySpec> for f64 {
    fn from(e: EfficiencySpec) -> f64 {
        e.eta
    }
}

/// `(((X−1)η² + 2)/(X+1))^{n+1}`.
pub fn lossy_fidelity(x: f64, n: usize, e: EfficiencySpec) -> Result<f64> {
    fidelity_closed_form(x, n, e.eta)
}

/// The same expression on the closed interval `0 ≤ η ≤ 1`. At `η = 0` no
/// detector ever clicks, so this is only the continuous extension used for
/// sweep endpoints.
pub fn fidelity_closed_form(x: f64, n: usize, eta: f64) -> Result<f64> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(SfsError::UniversalParameter(x));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(SfsError::Efficiency(eta));
    }
    if eta == 1.0 {
        return Ok(1.0);
    }
    let base = ((x - 1.0) * eta * eta + 2.0) / (x + 1.0);
    Ok(base.powi(n as i32 + 1))
}

/// The unsimplified form written with the free parameters,
/// `((Σa_k − N + 1)η² + 2)/(Σa_k − N + 3)` to the power `n + 1`.
pub fn lossy_fidelity_from_params(p: &UniversalSchemeParams, n: usize, e: EfficiencySpec) -> f64 {
    let sum_a: f64 = p.a().iter().sum();
    let m = p.n_modes() as f64;
    let base = ((sum_a - m + 1.0) * e.eta * e.eta + 2.0) / (sum_a - m + 3.0);
    base.powi(n as i32 + 1)
}

/// Quadratic form and Fock polynomial of the purified output.
///
/// Variables are `z = (x_1..x_d, x_N, v_1..v_d)`. The Gaussian is evaluated
/// at `u_i = η x_i + κ v_i`, the vacuum ports at `κ x_i − η v_i`, and each
/// Fock projector contributes `e^{−x_i²/2}`.
fn purified_form(p: &UniversalSchemeParams, eta: f64) -> DMatrix<f64> {
    let s = universal_sigma(p).to_matrix();
    let n = p.n_modes();
    let d = n - 1;
    let kappa = (1.0 - eta * eta).max(0.0).sqrt();
    let dim = 2 * d + 1;
    let mut j = DMatrix::<f64>::zeros(n, dim);
    let mut k = DMatrix::<f64>::zeros(d, dim);
    for i in 0..d {
        j[(i, i)] = eta;
        j[(i, d + 1 + i)] = kappa;
        k[(i, i)] = kappa;
        k[(i, d + 1 + i)] = -eta;
    }
    j[(d, d)] = 1.0;
    let mut q = j.transpose() * s * &j + k.transpose() * k;
    for i in 0..d {
        q[(i, i)] += 1.0;
    }
    (&q + q.transpose()) * 0.5
}

fn purified_fidelity(p: &UniversalSchemeParams, d: &DetectionPattern, eta: f64, order: usize) -> Result<f64> {
    let detectors = p.n_modes() - 1;
    let counts = d.counts();
    let n = d.total();
    let r = p.r();
    let q = purified_form(p, eta);
    let fock = |z: &[f64]| -> f64 { counts.iter().zip(z).map(|(&k, &x)| hermite(k, x)).product() };

    // ⟨ψ̃|ψ̃⟩: integrate the measured coordinates, square, then (x_N, v).
    let norm = nested_square_integral(&q, detectors, fock, order, order)?;

    // ∫ dv |∫ dx dx_N ψ̃ Ψ_SF|²: the target adds e^{−e^{2r} x_N²/2}.
    let mut q_overlap = q.clone();
    q_overlap[(detectors, detectors)] += (2.0 * r).exp();
    let er = r.exp();
    let overlap = nested_square_integral(
        &q_overlap,
        detectors + 1,
        |z: &[f64]| fock(z) * hermite(n, er * z[detectors]),
        order,
        order,
    )?;
    // squared normalisation of the target wavefunction
    let target = (-0.5 * PI.ln() - n as f64 * std::f64::consts::LN_2 - ln_factorial(n) + r).exp();
    let f = overlap * target / norm;
    if !f.is_finite() || !(norm > 0.0) {
        return Err(SfsError::NonNormalizable(norm));
    }
    Ok(f)
}

/// Fidelity of the lossy heralded state with `Ψ_SF(r, n)`, computed by
/// cubature over the purified output. Orders [`LOSS_QUAD_ORDER`] and twice
/// that must agree to [`LOSS_CONVERGENCE_TOLERANCE`].
pub fn lossy_fidelity_numeric(p: &UniversalSchemeParams, d: &DetectionPattern, e: EfficiencySpec) -> Result<f64> {
    if p.n_modes() > MAX_LOSS_MODES {
        return Err(SfsError::CostGuard(format!(
            "loss oracle supports at most {MAX_LOSS_MODES} modes, got {}",
            p.n_modes()
        )));
    }
    if d.detectors() != p.n_modes() - 1 {
        return Err(SfsError::PatternLength {
            expected: p.n_modes() - 1,
            found: d.detectors(),
        });
    }
    if d.total() > MAX_LOSS_TOTAL {
        return Err(SfsError::CostGuard(format!(
            "loss oracle supports total counts up to {MAX_LOSS_TOTAL}, got {}",
            d.total()
        )));
    }
    let coarse = purified_fidelity(p, d, e.eta, LOSS_QUAD_ORDER)?;
    let fine = purified_fidelity(p, d, e.eta, 2 * LOSS_QUAD_ORDER)?;
    let change = (coarse - fine).abs();
    if !(change < LOSS_CONVERGENCE_TOLERANCE) {
        return Err(SfsError::Convergence {
            quantity: "lossy fidelity",
            change,
            tolerance: LOSS_CONVERGENCE_TOLERANCE,
        });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eff(eta: f64) -> EfficiencySpec {
        EfficiencySpec::new(eta).unwrap()
    }

    fn params(a: Vec<f64>, r: f64) -> UniversalSchemeParams {
        UniversalSchemeParams::new(a.len() + 1, a, r).unwrap()
    }

    #[test]
    fn efficiency_range() {
        assert!(EfficiencySpec::new(0.0).is_err());
        assert!(EfficiencySpec::new(1.2).is_err());
        assert!(EfficiencySpec::new(f64::NAN).is_err());
        assert!(EfficiencySpec::new(1.0).is_ok());
        assert!(serde_json::from_str::<EfficiencySpec>("-0.5").is_err());
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(lossy_fidelity(3.0, 1, eff(1.0)).unwrap(), 1.0);
        assert_eq!(lossy_fidelity(17.0, 5, eff(1.0)).unwrap(), 1.0);
        assert_relative_eq!(
            lossy_fidelity(3.0, 1, eff(0.5)).unwrap(),
            0.390625,
            max_relative = 1e-15
        );
        assert!(lossy_fidelity(1.0, 1, eff(0.5)).is_err());
        assert_relative_eq!(fidelity_closed_form(3.0, 1, 0.0).unwrap(), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn parameter_form_agrees() {
        let p = params(vec![2.5, 1.5, 3.0], 0.4);
        let x = p.universal_parameter();
        for n in 0..5 {
            for eta in [0.3, 0.6, 0.95] {
                assert_relative_eq!(
                    lossy_fidelity_from_params(&p, n, eff(eta)),
                    lossy_fidelity(x, n, eff(eta)).unwrap(),
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn monotonicity() {
        for n in 0..4 {
            for k in 1..50 {
                let x = 1.0 + k as f64;
                let lo = lossy_fidelity(x, n, eff(0.6)).unwrap();
                let hi = lossy_fidelity(x + 1.0, n, eff(0.6)).unwrap();
                assert!(hi < lo, "X={x}");
            }
            for k in 1..100 {
                let a = lossy_fidelity(4.0, n, eff(k as f64 / 100.0)).unwrap();
                let b = lossy_fidelity(4.0, n, eff((k + 1) as f64 / 100.0)).unwrap();
                assert!(b > a);
            }
        }
        for n in 0..6 {
            assert!(lossy_fidelity(5.0, n + 1, eff(0.8)).unwrap() < lossy_fidelity(5.0, n, eff(0.8)).unwrap());
        }
        for n in 0..4 {
            for eta in [0.1, 0.5, 0.9] {
                assert!(1.0 - lossy_fidelity(1.0 + 1e-6, n, eff(eta)).unwrap() < 1e-5);
            }
        }
    }

    #[test]
    fn purification_matches_closed_form_two_modes() {
        let p = params(vec![3.0], 0.0);
        for eta in [0.9, 0.7, 0.5] {
            let f = lossy_fidelity_numeric(&p, &DetectionPattern::new(vec![1]), eff(eta)).unwrap();
            assert!(
                (f - lossy_fidelity(3.0, 1, eff(eta)).unwrap()).abs() < 1e-10,
                "eta={eta}: {f}"
            );
        }
    }

    #[test]
    fn ideal_detectors_decouple() {
        let p = params(vec![2.0, 2.0], -0.3);
        let f = lossy_fidelity_numeric(&p, &DetectionPattern::new(vec![1, 1]), eff(1.0)).unwrap();
        assert!((f - 1.0).abs() < 1e-8);
    }

    #[test]
    fn three_modes_equal_two_modes_at_same_x() {
        let two = lossy_fidelity_numeric(&params(vec![3.0], 0.2), &DetectionPattern::new(vec![1]), eff(0.8)).unwrap();
        let three = lossy_fidelity_numeric(
            &params(vec![2.0, 2.0], 0.2),
            &DetectionPattern::new(vec![1, 0]),
            eff(0.8),
        )
        .unwrap();
        assert!((two - three).abs() < 1e-10);
    }

    #[test]
    fn cost_guards() {
        let p = params(vec![2.0, 2.0, 2.0], 0.0);
        assert!(matches!(
            lossy_fidelity_numeric(&p, &DetectionPattern::new(vec![1, 0, 0]), eff(0.5)),
            Err(SfsError::CostGuard(_))
        ));
        let p = params(vec![2.0, 2.0], 0.0);
        assert!(matches!(
            lossy_fidelity_numeric(&p, &DetectionPattern::new(vec![2, 1]), eff(0.5)),
            Err(SfsError::CostGuard(_))
        ));
    }
}

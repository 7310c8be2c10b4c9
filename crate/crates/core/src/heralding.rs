//! Closed-form heralded outputs and success probabilities of the universal
//! scheme.
//!
//! Probabilities are assembled as logarithms and exponentiated once, which
//! keeps orders up to 60 finite.
//!
//! The per-pattern probability uses the factor `(a_i − 1)^{n_i}` for every
//! detector `i`. Summing it over all patterns with a fixed total gives
//! `2 (X−1)^n / (X+1)^{n+1}` by the multinomial theorem. That identity is
//! checked exhaustively below.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::gaussian::UniversalSchemeParams;
use crate::special::{ln_factorial, WaveParams};

/// Photon counts `(n_1, …, n_{N−1})` registered by the detectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionPattern {
    counts: Vec<usize>,
}

impl DetectionPattern {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn zeros(detectors: usize) -> Self {
        Self::new(vec![0; detectors])
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn detectors(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// All patterns over `detectors` detectors whose counts sum to `total`,
    /// in lexicographic order.
    pub fn with_total(detectors: usize, total: usize) -> Vec<DetectionPattern> {
        fn fill(rest: usize, slots: usize, cur: &mut Vec<usize>, out: &mut Vec<DetectionPattern>) {
            if slots == 1 {
                cur.push(rest);
                out.push(DetectionPattern::new(cur.clone()));
                cur.pop();
                return;
            }
            for k in 0..=rest {
                cur.push(k);
                fill(rest - k, slots - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if detectors > 0 {
            fill(total, detectors, &mut Vec::with_capacity(detectors), &mut out);
        }
        out
    }
}

impl std::fmt::Display for DetectionPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.counts.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Predicted output: a squeezed Fock state and the probability of the
/// pattern that heralded it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldPrediction {
    pub sfs: WaveParams,
    pub probability: f64,
}

fn check_pattern(p: &UniversalSchemeParams, d: &DetectionPattern) -> Result<()> {
    if d.detectors() != p.n_modes() - 1 {
        return Err(SfsError::PatternLength {
            expected: p.n_modes() - 1,
            found: d.detectors(),
        });
    }
    Ok(())
}

/// The state heralded by `d`. It depends on the pattern only through its
/// total count.
pub fn heralded_state(p: &UniversalSchemeParams, d: &DetectionPattern) -> Result<HeraldPrediction> {
    check_pattern(p, d)?;
    Ok(HeraldPrediction {
        sfs: WaveParams::new(p.r(), d.total())?,
        probability: conditional_probability(p, d)?,
    })
}

/// `2 Π(a_i−1)^{n_i} · n! / Π n_i! / (X + 1)^{n+1}`.
///
/// Terms are summed in a canonical order of `(a_i, n_i)` pairs, so jointly
/// permuting parameters and counts leaves the result bit-identical.
pub fn conditional_probability(p: &UniversalSchemeParams, d: &DetectionPattern) -> Result<f64> {
    check_pattern(p, d)?;
    let mut pairs: Vec<(f64, usize)> = p.a().iter().copied().zip(d.counts().iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let sum_a: f64 = pairs.iter().map(|(a, _)| a).sum();
    let x = sum_a - p.n_modes() as f64 + 2.0;
    let n = d.total();
    let mut ln_p = std::f64::consts::LN_2 + ln_factorial(n) - (n as f64 + 1.0) * (x + 1.0).ln();
    for &(a, k) in &pairs {
        if k > 0 {
            ln_p += k as f64 * (a - 1.0).ln() - ln_factorial(k);
        }
    }
    Ok(ln_p.exp())
}

/// `2 (X−1)^n / (X+1)^{n+1}`, the probability of heralding order `n` summed
/// over every pattern with that total.
pub fn total_probability(x: f64, n: usize) -> Result<f64> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(SfsError::UniversalParameter(x));
    }
    let nf = n as f64;
    let mut ln_p = std::f64::consts::LN_2 - (nf + 1.0) * (x + 1.0).ln();
    if n > 0 {
        ln_p += nf * (x - 1.0).ln();
    }
    Ok(ln_p.exp())
}

/// Maximiser of [`total_probability`] over `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPoint {
    pub x: f64,
    pub probability: f64,
    /// `false` for `n = 0`: the supremum sits on the excluded boundary `X = 1`.
    pub attained: bool,
}

/// `X* = 2n + 1`, `P* = n^n / (n+1)^{n+1}`.
///
/// For `n = 0` the probability `2/(X+1)` increases towards `X → 1⁺`; the
/// supremum 1 is reported with `attained = false`.
pub fn optimal_universal_parameter(n: usize) -> OptimalPoint {
    if n == 0 {
        return OptimalPoint {
            x: 1.0,
            probability: 1.0,
            attained: false,
        };
    }
    let nf = n as f64;
    OptimalPoint {
        x: 2.0 * nf + 1.0,
        probability: (nf * nf.ln() - (nf + 1.0) * (nf + 1.0).ln()).exp(),
        attained: true,
    }
}

/// `X = Σ a_k − N + 2`.
pub fn universal_parameter(p: &UniversalSchemeParams) -> f64 {
    p.universal_parameter()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(a: Vec<f64>, r: f64) -> UniversalSchemeParams {
        UniversalSchemeParams::new(a.len() + 1, a, r).unwrap()
    }

    #[test]
    fn zero_counts_give_squeezed_vacuum() {
        let p = params(vec![2.0, 3.5, 1.2], -0.4);
        let h = heralded_state(&p, &DetectionPattern::zeros(3)).unwrap();
        assert_eq!(h.sfs, WaveParams { r: -0.4, n: 0 });
        let x = universal_parameter(&p);
        assert_relative_eq!(h.probability, 2.0 / (x + 1.0), max_relative = 1e-14);
    }

    #[test]
    fn output_depends_on_total_only() {
        let p = params(vec![2.0, 2.0], 0.3);
        let a = heralded_state(&p, &DetectionPattern::new(vec![1, 2])).unwrap();
        let b = heralded_state(&p, &DetectionPattern::new(vec![2, 1])).unwrap();
        assert_eq!(a.sfs, b.sfs);
        assert_eq!(a.sfs.n, 3);
    }

    #[test]
    fn pattern_length_is_checked() {
        let p = params(vec![2.0, 2.0], 0.0);
        assert!(matches!(
            conditional_probability(&p, &DetectionPattern::new(vec![1])),
            Err(SfsError::PatternLength { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn known_values() {
        let p = params(vec![3.0], 0.0);
        assert_relative_eq!(
            conditional_probability(&p, &DetectionPattern::new(vec![1])).unwrap(),
            0.25,
            max_relative = 1e-14
        );
        assert_relative_eq!(total_probability(3.0, 1).unwrap(), 0.25, max_relative = 1e-14);
        assert_relative_eq!(total_probability(7.0, 3).unwrap(), 27.0 / 256.0, max_relative = 1e-14);
        assert!(total_probability(1.0, 2).is_err());
        assert!(total_probability(f64::NAN, 2).is_err());
    }

    #[test]
    fn optimum() {
        let o = optimal_universal_parameter(1);
        assert_eq!(o.x, 3.0);
        assert_relative_eq!(o.probability, 0.25, max_relative = 1e-14);
        let o = optimal_universal_parameter(2);
        assert_eq!(o.x, 5.0);
        assert_relative_eq!(o.probability, 4.0 / 27.0, max_relative = 1e-14);
        let o = optimal_universal_parameter(0);
        assert!(!o.attained);
        assert_eq!(o.probability, 1.0);
        assert!(total_probability(1.0 + 1e-9, 0).unwrap() < o.probability);
    }

    /// Golden-section maximisation of `ln P(X, n)` over `ln X`.
    fn golden_argmax(n: usize) -> f64 {
        let f = |u: f64| total_probability(u.exp(), n).unwrap().ln();
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (1e-9f64, 1000f64.ln());
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        for _ in 0..200 {
            if f(c) > f(d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - g * (hi - lo);
            d = lo + g * (hi - lo);
        }
        (0.5 * (lo + hi)).exp()
    }

    #[test]
    fn golden_section_finds_two_n_plus_one() {
        for n in 1..=8 {
            let x = golden_argmax(n);
            assert!((x - (2 * n + 1) as f64).abs() < 1e-6, "n={n}: {x}");
        }
    }

    #[test]
    fn optimum_dominates_log_grid() {
        for n in 1..=10 {
            let best = total_probability((2 * n + 1) as f64, n).unwrap();
            for k in 0..=400 {
                let x = 1.0 + 10f64.powf(-6.0 + 9.0 * k as f64 / 400.0);
                if x > 1000.0 {
                    break;
                }
                assert!(total_probability(x, n).unwrap() <= best * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        for &x in &[1.05, 1.5, 3.0, 7.0, 12.0, 20.0] {
            // geometric tail: Σ_{n>m} P = ((X−1)/(X+1))^{m+1}
            let ratio: f64 = (x - 1.0) / (x + 1.0);
            let m = ((1e-13f64).ln() / ratio.ln()).ceil() as usize;
            let total: f64 = (0..=m).map(|n| total_probability(x, n).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-10, "X={x}: {total}");
        }
        // partial sums to n = 200 leave exactly the geometric tail
        for &x in &[2.0, 10.0, 17.0, 20.0] {
            let partial: f64 = (0..=200).map(|n| total_probability(x, n).unwrap()).sum();
            let tail = ((x - 1.0) / (x + 1.0)).powi(201);
            assert!((partial + tail - 1.0).abs() < 1e-12, "X={x}");
            if x <= 17.0 {
                assert!((partial - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn multinomial_sum_reduces_to_total() {
        let sets = [
            vec![3.0],
            vec![2.0, 2.0],
            vec![1.3, 4.2],
            vec![1.7, 2.9, 5.5],
            vec![1.01, 1.02, 6.0],
        ];
        for a in sets {
            let p = params(a.clone(), 0.1);
            let x = universal_parameter(&p);
            for n in 0..=6 {
                let sum: f64 = DetectionPattern::with_total(a.len(), n)
                    .iter()
                    .map(|d| conditional_probability(&p, d).unwrap())
                    .sum();
                let want = total_probability(x, n).unwrap();
                assert!((sum - want).abs() < 1e-12, "a={a:?} n={n}");
            }
        }
    }

    #[test]
    fn equal_x_equal_probabilities() {
        let p = params(vec![4.0], 0.2);
        let q = params(vec![2.0, 2.0, 2.0], -0.7);
        assert_relative_eq!(universal_parameter(&p), universal_parameter(&q), max_relative = 1e-15);
        for n in 0..=10 {
            assert_relative_eq!(
                total_probability(universal_parameter(&p), n).unwrap(),
                total_probability(universal_parameter(&q), n).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn pattern_enumeration() {
        assert_eq!(DetectionPattern::with_total(3, 2).len(), 6);
        assert_eq!(DetectionPattern::with_total(1, 4), vec![DetectionPattern::new(vec![4])]);
        assert_eq!(DetectionPattern::new(vec![1, 0, 2]).to_string(), "(1,0,2)");
    }

    #[test]
    fn large_orders_stay_finite() {
        let p = params(vec![30.0, 30.0], 0.0);
        let v = conditional_probability(&p, &DetectionPattern::new(vec![30, 30])).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(total_probability(121.0, 60).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn joint_permutation_is_bit_identical(
            a in proptest::collection::vec(1.001f64..6.0, 3),
            counts in proptest::collection::vec(0usize..5, 3),
            rot in 0usize..3,
        ) {
            let p = params(a.clone(), 0.0);
            let d = DetectionPattern::new(counts.clone());
            let mut a2 = a.clone();
            let mut c2 = counts.clone();
            a2.rotate_left(rot);
            c2.rotate_left(rot);
            a2.swap(0, 2);
            c2.swap(0, 2);
            let q = params(a2, 0.0);
            let e = DetectionPattern::new(c2);
            prop_assert_eq!(
                conditional_probability(&p, &d).unwrap().to_bits(),
                conditional_probability(&q, &e).unwrap().to_bits()
            );
        }
    }
}

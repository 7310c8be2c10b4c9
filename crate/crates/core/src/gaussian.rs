//! N-mode Gaussian wavefunctions `(det σ / π^N)^{1/4} exp(−½ xᵀσx)` and the
//! universal σ-matrix family whose heralded outputs are always squeezed
//! Fock states.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};

/// Relative pivot floor used by the positive-definiteness check.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Dense, exactly symmetric, positive-definite quadratic form of a Gaussian
/// wavefunction. Entries are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SigmaRepr", into = "SigmaRepr")]
pub struct SigmaMatrix {
    dim: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SigmaRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl TryFrom<SigmaRepr> for SigmaMatrix {
    type Error = SfsError;

    fn try_from(repr: SigmaRepr) -> Result<Self> {
        SigmaMatrix::from_row_major(repr.dim, repr.entries)
    }
}

impl From<SigmaMatrix> for SigmaRepr {
    fn from(s: SigmaMatrix) -> Self {
        SigmaRepr {
            dim: s.dim,
            entries: s.entries,
        }
    }
}

impl SigmaMatrix {
    /// Validates and wraps a row-major `dim × dim` matrix.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(SfsError::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::from_matrix(&DMatrix::from_row_slice(dim, dim, &entries))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let report = validate_sigma(m);
        if !report.passes() {
            return Err(SfsError::NotPositiveDefinite(report.summary()));
        }
        let dim = m.nrows();
        let entries = (0..dim * dim).map(|k| m[(k / dim, k % dim)]).collect();
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    /// Product of the Cholesky pivots.
    pub fn determinant(&self) -> f64 {
        cholesky_pivots(&self.to_matrix())
            .map(|p| p.iter().product())
            .unwrap_or(f64::NAN)
    }

    /// Adds `delta` to the symmetric pair `(i, j)`/`(j, i)` and revalidates.
    pub fn perturbed(&self, i: usize, j: usize, delta: f64) -> Result<Self> {
        if i >= self.dim || j >= self.dim {
            return Err(SfsError::DimensionMismatch {
                expected: self.dim,
                found: i.max(j) + 1,
            });
        }
        let mut m = self.to_matrix();
        m[(i, j)] += delta;
        if i != j {
            m[(j, i)] = m[(i, j)];
        }
        Self::from_matrix(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationFailure {
    NotSquare { rows: usize, cols: usize },
    Empty,
    NonFinite,
    Asymmetric { defect: f64 },
    NonPositivePivot { index: usize, value: f64 },
}

/// Outcome of [`validate_sigma`]; never a panic, always a list of reasons.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub symmetry_defect: f64,
    pub pivots: Vec<f64>,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.passes() {
            return "ok".into();
        }
        self.failures
            .iter()
            .map(|f| match f {
                ValidationFailure::NotSquare { rows, cols } => format!("not square ({rows}x{cols})"),
                ValidationFailure::Empty => "empty matrix".into(),
                ValidationFailure::NonFinite => "non-finite entry".into(),
                ValidationFailure::Asymmetric { defect } => format!("asymmetric (defect {defect:e})"),
                ValidationFailure::NonPositivePivot { index, value } => {
                    format!("pivot {index} = {value:e} not positive")
                }
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Squared diagonal of the Cholesky factor, stopping at the first pivot
/// that is not positive (returned as `Err(index, value)`).
fn cholesky_pivots(m: &DMatrix<f64>) -> std::result::Result<Vec<f64>, (usize, f64)> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err((j, d));
        }
        pivots.push(d);
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(pivots)
}

/// Checks exact symmetry and positive definiteness of a candidate σ.
///
/// Pivots must exceed `1e-12 · max|entry|`.
pub fn validate_sigma(m: &DMatrix<f64>) -> ValidationReport {
    let mut report = ValidationReport {
        symmetry_defect: 0.0,
        pivots: Vec::new(),
        failures: Vec::new(),
    };
    if m.nrows() != m.ncols() {
        report.failures.push(ValidationFailure::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
        return report;
    }
    if m.nrows() == 0 {
        report.failures.push(ValidationFailure::Empty);
        return report;
    }
    if m.iter().any(|v| !v.is_finite()) {
        report.failures.push(ValidationFailure::NonFinite);
        return report;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            report.symmetry_defect = report.symmetry_defect.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if report.symmetry_defect != 0.0 {
        report.failures.push(ValidationFailure::Asymmetric {
            defect: report.symmetry_defect,
        });
    }
    let floor = PIVOT_TOLERANCE * m.amax();
    match cholesky_pivots(m) {
        Ok(pivots) => {
            if let Some((index, &value)) = pivots.iter().enumerate().find(|(_, &p)| p <= floor) {
                report
                    .failures
                    .push(ValidationFailure::NonPositivePivot { index, value });
            }
            report.pivots = pivots;
        }
        Err((index, value)) => {
            report
                .failures
                .push(ValidationFailure::NonPositivePivot { index, value });
        }
    }
    report
}

/// Free parameters of the universal family: mode count `N`, the `N − 1`
/// diagonal entries `a_i > 1` of the measured modes, and the target
/// squeezing `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalSchemeParams {
    n_modes: usize,
    a: Vec<f64>,
    r: f64,
}

impl UniversalSchemeParams {
    pub fn new(n_modes: usize, a: Vec<f64>, r: f64) -> Result<Self> {
        if n_modes < 2 {
            return Err(SfsError::TooFewModes(n_modes));
        }
        if a.len() != n_modes - 1 {
            return Err(SfsError::FreeParameterCount {
                n_modes,
                expected: n_modes - 1,
                found: a.len(),
            });
        }
        if let Some((index, &value)) = a.iter().enumerate().find(|(_, &v)| !(v > 1.0) || !v.is_finite()) {
            return Err(SfsError::FreeParameter { index, value });
        }
        if !r.is_finite() {
            return Err(SfsError::NonFinite("r"));
        }
        Ok(Self { n_modes, a, r })
    }

    /// Splits `X − 1` equally over the measured modes, i.e.
    /// `a_i = 1 + (X − 1)/(N − 1)`.
    pub fn with_universal_parameter(n_modes: usize, x: f64, r: f64) -> Result<Self> {
        if !(x > 1.0) {
            return Err(SfsError::UniversalParameter(x));
        }
        if n_modes < 2 {
            return Err(SfsError::TooFewModes(n_modes));
        }
        let each = 1.0 + (x - 1.0) / (n_modes - 1) as f64;
        Self::new(n_modes, vec![each; n_modes - 1], r)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// `Σ a_k − N + 2`.
    pub fn universal_parameter(&self) -> f64 {
        self.a.iter().sum::<f64>() - self.n_modes as f64 + 2.0
    }
}

/// The universal σ:
/// `b_ij = √((a_i−1)(a_j−1))`, `b_iN = √((a_i−1)(Σa_k − N + 3)) e^r`,
/// `a_N = (Σa_k − N + 2) e^{2r}`.
pub fn universal_sigma(p: &UniversalSchemeParams) -> SigmaMatrix {
    let n = p.n_modes;
    let x = p.universal_parameter();
    let er = p.r.exp();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        for j in i..n - 1 {
            let v = if i == j {
                p.a[i]
            } else {
                ((p.a[i] - 1.0) * (p.a[j] - 1.0)).sqrt()
            };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        let b = ((p.a[i] - 1.0) * (x + 1.0)).sqrt() * er;
        m[(i, n - 1)] = b;
        m[(n - 1, i)] = b;
    }
    m[(n - 1, n - 1)] = x * er * er;
    let entries = (0..n * n).map(|k| m[(k / n, k % n)]).collect();
    // Valid parameters always give a positive-definite matrix with
    // determinant e^{2r}; construction skips the re-check.
    SigmaMatrix { dim: n, entries }
}

/// `(det σ / π^N)^{1/4} exp(−½ xᵀσx)`.
pub fn gaussian_wavefunction(s: &SigmaMatrix, x: &[f64]) -> Result<f64> {
    let n = s.dim();
    if x.len() != n {
        return Err(SfsError::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += x[i] * s.get(i, j) * x[j];
        }
    }
    Ok((s.determinant() / PI.powi(n as i32)).powf(0.25) * (-0.5 * quad).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gauss_hermite_rule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(a: Vec<f64>, r: f64) -> UniversalSchemeParams {
        UniversalSchemeParams::new(a.len() + 1, a, r).unwrap()
    }

    #[test]
    fn two_mode_reduces_to_the_known_solution() {
        for &(a1, r) in &[(3.0, 0.0), (1.5, 0.4), (7.2, -0.9)] {
            let s = universal_sigma(&params(vec![a1], r));
            assert_relative_eq!(s.get(0, 0), a1);
            assert_relative_eq!(s.get(0, 1), (a1 * a1 - 1.0).sqrt() * r.exp(), max_relative = 1e-15);
            assert_relative_eq!(s.get(1, 1), a1 * (2.0 * r).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn three_mode_entries() {
        let s = universal_sigma(&params(vec![2.0, 2.0], 0.0));
        let want = [2.0, 1.0, 2.0, 1.0, 2.0, 2.0, 2.0, 2.0, 3.0];
        assert_eq!(s.entries(), &want);
        // cofactor expansion, independent of the pivot route
        let e = |i: usize, j: usize| want[3 * i + j];
        let det = e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) - e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0))
            + e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0));
        assert_relative_eq!(det, 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            UniversalSchemeParams::new(2, vec![0.5], 0.0),
            Err(SfsError::FreeParameter { index: 0, .. })
        ));
        assert!(UniversalSchemeParams::new(3, vec![2.0, 1.0], 0.0).is_err());
        assert!(UniversalSchemeParams::new(1, vec![], 0.0).is_err());
        assert!(UniversalSchemeParams::new(3, vec![2.0], 0.0).is_err());
        assert!(UniversalSchemeParams::new(2, vec![2.0], f64::INFINITY).is_err());
        let e = UniversalSchemeParams::new(2, vec![0.5], 0.0).unwrap_err();
        assert!(e.to_string().contains("a_i must exceed 1"));
    }

    #[test]
    fn validation_reports() {
        assert!(validate_sigma(&DMatrix::identity(4, 4)).passes());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let rep = validate_sigma(&bad);
        assert!(!rep.passes());
        assert!(matches!(
            rep.failures[0],
            ValidationFailure::NonPositivePivot { index: 1, .. }
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0]);
        let rep = validate_sigma(&asym);
        assert_eq!(rep.symmetry_defect, 0.1);
        assert!(!rep.passes());
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(!validate_sigma(&rect).passes());
        let nan = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(validate_sigma(&nan).failures, vec![ValidationFailure::NonFinite]);
    }

    #[test]
    fn vacuum_wavefunction() {
        let s = SigmaMatrix::from_row_major(1, vec![1.0]).unwrap();
        for &x in &[-1.3, 0.0, 0.7] {
            let v = gaussian_wavefunction(&s, &[x]).unwrap();
            assert_relative_eq!(v, PI.powf(-0.25) * (-x * x / 2.0).exp(), max_relative = 1e-15);
        }
        assert!(matches!(
            gaussian_wavefunction(&s, &[0.0, 1.0]),
            Err(SfsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn two_mode_prefactor() {
        let s = universal_sigma(&params(vec![2.5], 0.3));
        let (a1, a2, b) = (s.get(0, 0), s.get(1, 1), s.get(0, 1));
        let want = (a1 * a2 - b * b).powf(0.25) / PI.sqrt();
        assert_relative_eq!(
            gaussian_wavefunction(&s, &[0.0, 0.0]).unwrap(),
            want,
            max_relative = 1e-14
        );
    }

    /// Tensor Gauss–Hermite over each axis scaled by its own diagonal entry;
    /// the cross terms stay in the integrand.
    fn norm_by_quadrature(s: &SigmaMatrix, order: usize) -> f64 {
        let rule = gauss_hermite_rule(order).unwrap();
        let n = s.dim();
        let scale: Vec<f64> = (0..n).map(|i| s.get(i, i).sqrt().recip()).collect();
        let mut idx = vec![0usize; n];
        let mut total = 0.0;
        loop {
            let x: Vec<f64> = (0..n).map(|k| scale[k] * rule.nodes[idx[k]]).collect();
            let w: f64 = (0..n).map(|k| scale[k] * rule.scaled_weights[idx[k]]).product();
            total += w * gaussian_wavefunction(s, &x).unwrap().powi(2);
            let mut k = 0;
            loop {
                if k == n {
                    return total;
                }
                idx[k] += 1;
                if idx[k] < order {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Rotates onto the eigenbasis of σ first; the tensor rule then sees a
    /// product of one-dimensional Gaussians.
    fn norm_in_eigenbasis(s: &SigmaMatrix, order: usize) -> f64 {
        let eig = nalgebra::SymmetricEigen::new(s.to_matrix());
        let rotated = DMatrix::from_diagonal(&eig.eigenvalues);
        let n = s.dim();
        let entries = (0..n * n).map(|k| rotated[(k / n, k % n)]).collect();
        let diag = SigmaMatrix { dim: n, entries };
        // |Ψ|² depends on σ only through det and the quadratic form
        let ratio = (s.determinant() / diag.determinant()).sqrt();
        ratio * norm_by_quadrature(&diag, order)
    }

    #[test]
    fn normalisation_by_quadrature() {
        for (a, r) in [
            (vec![2.0], 0.1),
            (vec![1.4], -0.3),
            (vec![1.8, 2.6], 0.2),
            (vec![3.0, 1.2], -0.2),
        ] {
            let s = universal_sigma(&params(a, r));
            let norm = norm_in_eigenbasis(&s, 32);
            assert!((norm - 1.0).abs() < 1e-8, "norm {norm}");
        }
        let generic = SigmaMatrix::from_row_major(3, vec![1.5, 0.3, -0.2, 0.3, 0.9, 0.1, -0.2, 0.1, 2.2]).unwrap();
        assert!((norm_by_quadrature(&generic, 48) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip() {
        let s = universal_sigma(&params(vec![2.3, 1.7, 4.1], 0.37));
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with("{\"dim\":4,\"entries\":["));
        let back: SigmaMatrix = serde_json::from_str(&text).unwrap();
        for (x, y) in s.entries().iter().zip(back.entries()) {
            assert!((x - y).abs() <= 1e-15 * x.abs());
        }
        assert!(serde_json::from_str::<SigmaMatrix>(r#"{"dim":2,"entries":[1,2,2,1]}"#).is_err());
        assert!(serde_json::from_str::<SigmaMatrix>(r#"{"dim":2,"entries":[1,0,0]}"#).is_err());
    }

    #[test]
    fn perturbation_keeps_symmetry() {
        let s = universal_sigma(&params(vec![2.0, 2.0], 0.0));
        let p = s.perturbed(0, 2, 0.1).unwrap();
        assert_eq!(p.get(0, 2), p.get(2, 0));
        assert_relative_eq!(p.get(0, 2), 2.1);
    }

    fn arb_params() -> impl Strategy<Value = UniversalSchemeParams> {
        (2usize..=5, -1.0f64..=1.0)
            .prop_flat_map(|(n, r)| (proptest::collection::vec(1.0001f64..=6.0, n - 1), Just(r)))
            .prop_map(|(a, r)| params(a, r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn determinant_is_e_to_two_r(p in arb_params()) {
            let s = universal_sigma(&p);
            prop_assert!((s.determinant() - (2.0 * p.r()).exp()).abs() < 1e-10);
        }

        #[test]
        fn universal_sigma_validates(p in arb_params()) {
            let s = universal_sigma(&p);
            let rep = validate_sigma(&s.to_matrix());
            prop_assert!(rep.passes(), "{}", rep.summary());
        }

        #[test]
        fn permuting_measured_modes(p in arb_params(), seed in 0u64..1000) {
            let d = p.n_modes() - 1;
            let mut perm: Vec<usize> = (0..d).collect();
            // deterministic shuffle from the seed
            let mut state = seed;
            for i in (1..d).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (state >> 33) as usize % (i + 1));
            }
            let a: Vec<f64> = perm.iter().map(|&k| p.a()[k]).collect();
            let q = UniversalSchemeParams::new(p.n_modes(), a, p.r()).unwrap();
            let (s, t) = (universal_sigma(&p), universal_sigma(&q));
            let full = |i: usize| if i < d { perm[i] } else { d };
            for i in 0..=d {
                for j in 0..=d {
                    let (x, y) = (t.get(i, j), s.get(full(i), full(j)));
                    prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
                }
            }
        }
    }
}

//! Cross-validation suites run by `sfs-herald verify`: every closed form is
//! compared against the quadrature oracle and reported as a named check.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cascade::{self, FIDELITY_THRESHOLD};
use crate::gaussian::{universal_sigma, SigmaMatrix, UniversalSchemeParams};
use crate::heralding::{conditional_probability, total_probability, DetectionPattern};
use crate::loss::{fidelity_closed_form, lossy_fidelity_numeric, EfficiencySpec};
use crate::optimize::slope_bisection_max;
use crate::oracle::{fidelity_numeric, herald_numeric, integral_identity_check, MIN_HERALD_ORDER};
use crate::special::WaveParams;
use crate::synthesis::{decompose, reconstruct};
use crate::{Result, SfsError};

pub const UNIVERSALITY_TOLERANCE: f64 = 1e-6;
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-10;
pub const OPTIMUM_TOLERANCE: f64 = 1e-6;
pub const DETERMINANT_TOLERANCE: f64 = 1e-10;
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-10;
pub const PRODUCT_TOLERANCE: f64 = 1e-12;
pub const LOSS_TOLERANCE: f64 = 1e-5;
pub const IDENTITY_TOLERANCE: f64 = 1e-7;

/// Sample points for the integral identity.
pub const IDENTITY_SAMPLES: [f64; 6] = [-2.0, -1.0, -0.5, 0.0, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

/// Adds `delta` to entry `(i, j)` of every universal σ the universality
/// checks herald from. Used as a negative control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub i: usize,
    pub j: usize,
    pub delta: f64,
}

impl Perturbation {
    fn apply(&self, s: SigmaMatrix) -> Result<SigmaMatrix> {
        if self.i < s.dim() && self.j < s.dim() {
            s.perturbed(self.i, self.j, self.delta)
        } else {
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub passed: bool,
    pub error: Option<String>,
}

impl CheckResult {
    fn new(name: &str, max_deviation: f64, tolerance: f64, cases: usize) -> Self {
        Self {
            name: name.to_string(),
            max_deviation,
            tolerance,
            cases,
            passed: max_deviation <= tolerance,
            error: None,
        }
    }

    fn failed(name: &str, tolerance: f64, e: SfsError) -> Self {
        Self {
            name: name.to_string(),
            max_deviation: f64::NAN,
            tolerance,
            cases: 0,
            passed: false,
            error: Some(e.to_string()),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {:<22} max_dev={:.3e} tol={:.1e} cases={}",
            self.name, self.max_deviation, self.tolerance, self.cases
        )?;
        if let Some(e) = &self.error {
            write!(f, " error: {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    /// Informational lines that do not affect the verdict.
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        for n in &self.notes {
            writeln!(f, "note {n}")?;
        }
        let verdict = if self.passed() {
            "all checks passed"
        } else {
            "verification FAILED"
        };
        write!(f, "{verdict} ({} checks, {:.1} s)", self.checks.len(), self.seconds)
    }
}

fn random_a(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    // (1, 6]
    (0..count).map(|_| 6.0 - 5.0 * rng.gen::<f64>()).collect()
}

fn run(name: &str, tolerance: f64, f: impl FnOnce() -> Result<(f64, usize)>) -> CheckResult {
    match f() {
        Ok((dev, cases)) => CheckResult::new(name, dev, tolerance, cases),
        Err(e) => CheckResult::failed(name, tolerance, e),
    }
}

/// Heralds every pattern with total `≤ max_total` from the (optionally
/// perturbed) universal σ and compares against the predicted squeezed Fock
/// state and probability. Returns `(max 1 − F, max relative P error, cases)`.
pub fn universality_deviation(
    params: &[UniversalSchemeParams],
    max_total: usize,
    order: usize,
    perturbation: Option<Perturbation>,
) -> Result<(f64, f64, usize)> {
    let (mut worst_f, mut worst_p, mut cases) = (0.0f64, 0.0f64, 0);
    for p in params {
        let mut s = universal_sigma(p);
        if let Some(pert) = perturbation {
            s = pert.apply(s)?;
        }
        for n in 0..=max_total {
            for d in DetectionPattern::with_total(p.n_modes() - 1, n) {
                let (psi, prob) = herald_numeric(&s, &d, order)?;
                let f = fidelity_numeric(&psi, &WaveParams::new(p.r(), n)?)?;
                let want = conditional_probability(p, &d)?;
                worst_f = worst_f.max(1.0 - f);
                worst_p = worst_p.max((prob - want).abs() / want);
                cases += 1;
            }
        }
    }
    Ok((worst_f, worst_p, cases))
}

fn universality_params(level: Level, rng: &mut ChaCha8Rng) -> Result<(Vec<UniversalSchemeParams>, usize)> {
    let (modes, rs, max_total): (&[usize], &[f64], usize) = match level {
        Level::Fast => (&[2, 3], &[-0.7, 0.7], 3),
        Level::Full => (&[2, 3, 4], &[-0.7, 0.0, 0.7], 4),
    };
    let mut out = Vec::new();
    for &n_modes in modes {
        for &r in rs {
            out.push(UniversalSchemeParams::new(n_modes, random_a(rng, n_modes - 1), r)?);
        }
    }
    Ok((out, max_total))
}

fn determinant_check(rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n_modes = rng.gen_range(2..=5);
        let r = rng.gen_range(-1.0..=1.0);
        let p = UniversalSchemeParams::new(n_modes, random_a(rng, n_modes - 1), r)?;
        let det = universal_sigma(&p).determinant();
        worst = worst.max((det - (2.0 * r).exp()).abs());
    }
    Ok((worst, 200))
}

fn probability_sum_check() -> Result<(f64, usize)> {
    let mut worst = 0.0f64;
    let xs = [1.5, 3.0, 7.0, 12.0, 20.0];
    for &x in &xs {
        // geometric tail: Σ_{n>m} P = ((X−1)/(X+1))^{m+1}
        let ratio: f64 = (x - 1.0) / (x + 1.0);
        let m = ((1e-14f64).ln() / ratio.ln()).ceil() as usize;
        let mut total = 0.0;
        for n in 0..=m {
            total += total_probability(x, n)?;
        }
        worst = worst.max((total - 1.0).abs());
    }
    Ok((worst, xs.len()))
}

fn optimum_check() -> Result<(f64, usize)> {
    let mut worst = 0.0f64;
    for n in 1..=6 {
        let ln_p = |u: f64| {
            total_probability(1.0 + u.exp(), n)
                .map(f64::ln)
                .unwrap_or(f64::NEG_INFINITY)
        };
        // search over ln(X − 1) ∈ [−10, 10]
        let x = 1.0 + slope_bisection_max(ln_p, -10.0, 10.0, 1e-4, 1e-13).exp();
        worst = worst.max((x - (2 * n + 1) as f64).abs());
    }
    Ok((worst, 6))
}

fn decomposition_checks(rng: &mut ChaCha8Rng) -> Result<[(f64, usize); 3]> {
    let (mut round, mut product) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for _ in 0..50 {
        let n_modes = rng.gen_range(2..=5);
        let r = rng.gen_range(-1.0..=1.0);
        let p = UniversalSchemeParams::new(n_modes, random_a(rng, n_modes - 1), r)?;
        let d = decompose(&p)?;
        let back = reconstruct(&d)?;
        let want = universal_sigma(&p);
        let dev = back
            .entries()
            .iter()
            .zip(want.entries())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        round = round.max(dev);
        let sq = &d.squeezings;
        let prod = (2.0 * sq[n_modes - 2]).exp() * (2.0 * sq[n_modes - 1]).exp();
        product = product.max((prod - (2.0 * r).exp()).abs());
        cases += 1;
    }
    // equal-X parameter sets must share the last stage
    let mut x_only = 0.0f64;
    let mut x_cases = 0;
    for &(x, r) in &[(3.0, 0.3), (7.0, -0.5), (12.5, 0.9)] {
        let mut reference: Option<[f64; 3]> = None;
        for n_modes in 2..=5 {
            let mut a: Vec<f64> = (0..n_modes - 1).map(|k| 1.0 + (1.0 + k as f64).powi(2)).collect();
            let rest: f64 = a.iter().map(|v| v - 1.0).sum();
            // rescale so Σ(a − 1) = X − 1
            a.iter_mut().for_each(|v| *v = 1.0 + (*v - 1.0) * (x - 1.0) / rest);
            let d = decompose(&UniversalSchemeParams::new(n_modes, a, r)?)?;
            let got = [
                d.last_transmittance(),
                d.squeezings[n_modes - 2],
                d.squeezings[n_modes - 1],
            ];
            let want = *reference.get_or_insert(got);
            for (g, w) in got.iter().zip(want) {
                x_only = x_only.max((g - w).abs());
            }
            x_cases += 1;
        }
    }
    Ok([(round, cases), (product, cases), (x_only, x_cases)])
}

fn loss_check(level: Level) -> Result<(f64, usize)> {
    let mut cases: Vec<(Vec<f64>, Vec<usize>)> = vec![(vec![3.0], vec![1]), (vec![3.0], vec![2])];
    if level == Level::Full {
        cases.extend([
            (vec![2.0, 2.0], vec![1, 0]),
            (vec![2.0, 2.0], vec![1, 1]),
            (vec![1.5, 2.5], vec![0, 2]),
        ]);
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for (a, counts) in cases {
        let p = UniversalSchemeParams::new(a.len() + 1, a, 0.3)?;
        let d = DetectionPattern::new(counts);
        for &eta in &[0.5, 0.7, 0.9] {
            let got = lossy_fidelity_numeric(&p, &d, EfficiencySpec::new(eta)?)?;
            let want = fidelity_closed_form(p.universal_parameter(), d.total(), eta)?;
            worst = worst.max((got - want).abs());
            count += 1;
        }
    }
    Ok((worst, count))
}

fn identity_check(level: Level, order: usize) -> Result<(f64, usize)> {
    let mut cases: Vec<(Vec<f64>, f64)> = vec![(vec![3.0], 0.0), (vec![2.0, 2.0], 0.3)];
    if level == Level::Full {
        cases.extend([(vec![1.7], -0.4), (vec![1.4, 3.2], 0.6)]);
    }
    let mut worst = 0.0f64;
    let mut count = 0;
    for (a, r) in cases {
        let p = UniversalSchemeParams::new(a.len() + 1, a, r)?;
        for n in 0..=3 {
            for d in DetectionPattern::with_total(p.n_modes() - 1, n) {
                worst = worst.max(integral_identity_check(&p, &d, &IDENTITY_SAMPLES, order)?);
                count += 1;
            }
        }
    }
    Ok((worst, count))
}

fn cascade_checks(seed: u64, notes: &mut Vec<String>) -> Vec<CheckResult> {
    let target = 27.0 / 256.0;
    let mut out = Vec::new();
    for (n1, n2) in [(1, 2), (2, 1)] {
        let name = format!("cascade-feasible-{n1}{n2}");
        out.push(run(&name, 1.0 - FIDELITY_THRESHOLD, || {
            let pt = cascade::optimize_cascade(0.5, n1, n2, seed)?;
            notes.push(format!(
                "cascade ({n1},{n2}) at r=0.5: F={:.6} P={:.5} (universal optimum {target:.5})",
                pt.fidelity, pt.probability
            ));
            if pt.probability >= target {
                return Err(SfsError::Invalid(format!(
                    "cascade probability {} not below the universal optimum",
                    pt.probability
                )));
            }
            Ok((1.0 - pt.fidelity, 1))
        }));
    }
    out.push(run("cascade-infeasible-11", 0.0, || {
        match cascade::optimize_cascade(0.0, 1, 1, seed) {
            Err(SfsError::Infeasible { best, .. }) => {
                notes.push(format!(
                    "cascade (1,1) at r=0: best fidelity {best:.6}, bound ceiling 2/3"
                ));
                Ok((0.0, 1))
            }
            Ok(pt) => Err(SfsError::Invalid(format!(
                "(1,1) cascade reported feasible at F={}",
                pt.fidelity
            ))),
            Err(e) => Err(e),
        }
    }));
    out
}

/// Runs the suite at `level`. `order` is the inner quadrature order of the
/// oracle (at least [`MIN_HERALD_ORDER`]).
pub fn run_verification(level: Level, seed: u64, order: usize, perturbation: Option<Perturbation>) -> VerifyReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let order = order.max(MIN_HERALD_ORDER);
    match universality_params(level, &mut rng)
        .and_then(|(params, max_total)| universality_deviation(&params, max_total, order, perturbation))
    {
        Ok((f, p, cases)) => {
            checks.push(CheckResult::new("universality", f, UNIVERSALITY_TOLERANCE, cases));
            checks.push(CheckResult::new("probability", p, PROBABILITY_TOLERANCE, cases));
        }
        Err(e) => {
            let msg = e.to_string();
            checks.push(CheckResult::failed("universality", UNIVERSALITY_TOLERANCE, e));
            checks.push(CheckResult::failed(
                "probability",
                PROBABILITY_TOLERANCE,
                SfsError::Invalid(msg),
            ));
        }
    }
    checks.push(run("probability-sum", PROBABILITY_SUM_TOLERANCE, probability_sum_check));
    checks.push(run("probability-optimum", OPTIMUM_TOLERANCE, optimum_check));
    checks.push(run("determinant", DETERMINANT_TOLERANCE, || {
        determinant_check(&mut rng)
    }));
    match decomposition_checks(&mut rng) {
        Ok([round, product, x_only]) => {
            checks.push(CheckResult::new("round-trip", round.0, ROUND_TRIP_TOLERANCE, round.1));
            checks.push(CheckResult::new(
                "squeezing-product",
                product.0,
                PRODUCT_TOLERANCE,
                product.1,
            ));
            checks.push(CheckResult::new(
                "x-only-last-stage",
                x_only.0,
                ROUND_TRIP_TOLERANCE,
                x_only.1,
            ));
        }
        Err(e) => checks.push(CheckResult::failed("round-trip", ROUND_TRIP_TOLERANCE, e)),
    }
    checks.push(run("loss-fidelity", LOSS_TOLERANCE, || loss_check(level)));
    checks.push(run("integral-identity", IDENTITY_TOLERANCE, || {
        identity_check(level, order)
    }));
    if level == Level::Full {
        checks.extend(cascade_checks(seed, &mut notes));
    }
    VerifyReport {
        checks,
        notes,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suite_passes() {
        let report = run_verification(Level::Fast, 7, MIN_HERALD_ORDER, None);
        assert!(report.passed(), "{report}");
        assert!(report.checks.iter().any(|c| c.name == "integral-identity"));
    }

    #[test]
    fn perturbation_fails_universality() {
        let pert = Perturbation { i: 0, j: 1, delta: 0.1 };
        let report = run_verification(Level::Fast, 7, MIN_HERALD_ORDER, Some(pert));
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"universality"), "{report}");
    }

    #[test]
    fn out_of_range_perturbation_is_ignored() {
        let p = UniversalSchemeParams::new(2, vec![3.0], 0.0).unwrap();
        let s = universal_sigma(&p);
        let same = Perturbation { i: 5, j: 0, delta: 1.0 }.apply(s.clone()).unwrap();
        assert_eq!(s, same);
    }

    #[test]
    fn report_lines_name_each_check() {
        let c = CheckResult::new("determinant", 2e-15, 1e-10, 200);
        assert!(c.to_string().starts_with("PASS determinant"));
        let bad = CheckResult::new("universality", 0.2, 1e-6, 3);
        assert!(!bad.passed && bad.to_string().starts_with("FAIL universality"));
    }
}

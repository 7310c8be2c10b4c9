//! Two-stage cascade: squeezed vacua `r1`, `r2` meet on `BS(t1)` and mode 1
//! is measured; the surviving mode meets squeezed vacuum `r3` on `BS(t2)`
//! and mode 2 is measured; mode 3 is the output.
//!
//! The two detectors act on different modes, so conditioning on `n1` and
//! then on `n2` gives the same state and joint probability as conditioning
//! the final three-mode Gaussian on `(n1, n2)` at once. Both stages are
//! therefore evaluated together.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::gaussian::SigmaMatrix;
use crate::heralding::{optimal_universal_parameter, DetectionPattern};
use crate::optimize::{multi_start, nelder_mead, BoxMap, Minimum, NelderMeadOptions};
use crate::oracle::{ConditionalMode, GridWavefunction};
use crate::special::{cached_rule, QuadratureRule, WaveParams};
use crate::synthesis::{last_stage, squeezing_to_db, BeamSplitterOp};

/// Half-width of the squeezing box.
pub const SQUEEZING_BOX: f64 = 3.0;
/// Largest `n1 + n2`.
pub const MAX_CASCADE_TOTAL: usize = 6;
/// Per-axis cubature order over the two measured modes. Exact for every
/// allowed count.
pub const CASCADE_INNER_ORDER: usize = 8;
/// Output-axis rule used for fidelities and probabilities. Exact for every
/// allowed count.
pub const CASCADE_GRID_ORDER: usize = 16;

/// Fidelity a cascade must reach to count as producing the target.
pub const FIDELITY_THRESHOLD: f64 = 1.0 - 1e-4;
/// Default number of multi-start points.
pub const DEFAULT_STARTS: usize = 32;
/// Feasible starts, most probable first, refined in the probability phase.
pub const PROBABILITY_STARTS: usize = 8;
/// Events rarer than this are skipped by the optimiser; their fidelity is
/// dominated by rounding.
pub const MIN_EVENT_PROBABILITY: f64 = 1e-10;

/// Input squeezings and transmittances. `r1 ≥ 0` squeezes and `r2 ≤ 0`
/// antisqueezes the coordinate of the first-stage inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub t1: f64,
    pub t2: f64,
}

impl CascadeParams {
    pub fn new(r1: f64, r2: f64, r3: f64, t1: f64, t2: f64) -> Result<Self> {
        let c = Self { r1, r2, r3, t1, t2 };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        for (name, r) in [("r1", self.r1), ("r2", self.r2), ("r3", self.r3)] {
            if !r.is_finite() {
                return Err(SfsError::NonFinite(name));
            }
            if r.abs() > SQUEEZING_BOX {
                return Err(SfsError::Invalid(format!("{name} = {r} outside ±{SQUEEZING_BOX}")));
            }
        }
        for t in [self.t1, self.t2] {
            if !(t > 0.0 && t < 1.0) {
                return Err(SfsError::Transmittance(t));
            }
        }
        Ok(())
    }

    /// `[r1, r2, r3, t1, t2]`.
    pub fn as_vector(&self) -> Vec<f64> {
        vec![self.r1, self.r2, self.r3, self.t1, self.t2]
    }

    pub fn squeezings(&self) -> [f64; 3] {
        [self.r1, self.r2, self.r3]
    }

    /// Largest input squeezing magnitude in dB.
    pub fn max_squeezing_db(&self) -> f64 {
        self.squeezings()
            .iter()
            .map(|&r| squeezing_to_db(r))
            .fold(0.0, f64::max)
    }

    /// `Σ sinh² r_i`.
    pub fn mean_photons(&self) -> f64 {
        self.squeezings().iter().map(|r| r.sinh().powi(2)).sum()
    }
}

/// σ of the three modes after both beam splitters:
/// `O diag(e^{2r1}, e^{2r2}, e^{2r3}) Oᵀ` with `O = BS23(t2) · BS12(t1)`.
pub fn cascade_sigma(c: &CascadeParams) -> Result<SigmaMatrix> {
    c.check()?;
    let o = BeamSplitterOp::new(2, 3, c.t2, 1)?.matrix(3)? * BeamSplitterOp::new(1, 2, c.t1, 1)?.matrix(3)?;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        3,
        c.squeezings().iter().map(|r| (2.0 * r).exp()),
    ));
    let s = &o * d * o.transpose();
    SigmaMatrix::from_matrix(&((&s + s.transpose()) * 0.5))
}

fn check_counts(n1: usize, n2: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        return Err(SfsError::Invalid(
            "cascade events with a zero count are excluded; both counts must be at least 1".into(),
        ));
    }
    if n1 + n2 > MAX_CASCADE_TOTAL {
        return Err(SfsError::CostGuard(format!(
            "cascade supports n1 + n2 ≤ {MAX_CASCADE_TOTAL}, got {}",
            n1 + n2
        )));
    }
    Ok(())
}

fn conditional(c: &CascadeParams, n1: usize, n2: usize) -> Result<ConditionalMode> {
    ConditionalMode::new(
        &cascade_sigma(c)?,
        &DetectionPattern::new(vec![n1, n2]),
        CASCADE_INNER_ORDER,
    )
}

/// Normalised output state on `grid` (scaled to the output envelope) and the
/// joint probability of `(n1, n2)`.
pub fn cascade_output(
    c: &CascadeParams,
    n1: usize,
    n2: usize,
    grid: &QuadratureRule,
) -> Result<(GridWavefunction, f64)> {
    check_counts(n1, n2)?;
    let psi = conditional(c, n1, n2)?.sample(grid);
    let probability = psi.norm;
    Ok((psi.normalized()?, probability))
}

/// Fidelity with `target` and joint probability, both exact for the
/// allowed counts.
pub fn cascade_fidelity(c: &CascadeParams, n1: usize, n2: usize, target: &WaveParams) -> Result<(f64, f64)> {
    check_counts(n1, n2)?;
    let grid = cached_rule(CASCADE_GRID_ORDER)?;
    let mode = conditional(c, n1, n2)?;
    let probability = mode.probability(&grid);
    if !(probability > 0.0) || !probability.is_finite() {
        return Err(SfsError::NonNormalizable(probability));
    }
    let fidelity = mode.fidelity_to(target, &grid);
    if !(fidelity <= 1.0 + 1e-9) {
        return Err(SfsError::NonNormalizable(probability));
    }
    Ok((fidelity, probability))
}

/// `2/3 + 4 / (3 − 9 cosh(2(r − r3)))`, the best fidelity of a `(1, 1)`
/// cascade with `Ψ_SF(r, 2)` at given `r3`.
pub fn cascade_n2_fidelity_bound(r: f64, r3: f64) -> f64 {
    2.0 / 3.0 + 4.0 / (3.0 - 9.0 * (2.0 * (r - r3)).cosh())
}

/// Search box `r1 ∈ [0, 3]`, `r2 ∈ [−3, 0]`, `r3 ∈ [−3, 3]`, `t1, t2 ∈ (0, 1)`.
/// With `fixed_r3` the third coordinate is dropped.
fn search_box(fixed_r3: Option<f64>) -> BoxMap {
    let b = SQUEEZING_BOX;
    match fixed_r3 {
        None => BoxMap::new(vec![0.0, -b, -b, 0.0, 0.0], vec![b, 0.0, b, 1.0, 1.0]),
        Some(_) => BoxMap::new(vec![0.0, -b, 0.0, 0.0], vec![b, 0.0, 1.0, 1.0]),
    }
}

fn params_at(map: &BoxMap, z: &[f64], fixed_r3: Option<f64>) -> Option<CascadeParams> {
    let v = map.to_box(z);
    let c = match fixed_r3 {
        None => CascadeParams::new(v[0], v[1], v[2], v[3], v[4]),
        Some(r3) => CascadeParams::new(v[0], v[1], r3, v[2], v[3]),
    };
    c.ok()
}

/// `(fidelity, probability)` or `None` where the point is unusable.
fn evaluate(c: Option<CascadeParams>, n1: usize, n2: usize, target: &WaveParams) -> Option<(f64, f64)> {
    let (f, p) = cascade_fidelity(&c?, n1, n2, target).ok()?;
    (p > MIN_EVENT_PROBABILITY).then_some((f, p))
}

fn phase_options() -> NelderMeadOptions {
    NelderMeadOptions {
        max_evals: 3000,
        ..Default::default()
    }
}

/// Best fidelity found for a cascade and where it was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadePoint {
    pub params: CascadeParams,
    pub fidelity: f64,
    pub probability: f64,
}

fn point(
    map: &BoxMap,
    m: &Minimum,
    fixed_r3: Option<f64>,
    n1: usize,
    n2: usize,
    target: &WaveParams,
) -> Option<CascadePoint> {
    let params = params_at(map, &m.x, fixed_r3)?;
    let (fidelity, probability) = evaluate(Some(params), n1, n2, target)?;
    Some(CascadePoint {
        params,
        fidelity,
        probability,
    })
}

fn fidelity_runs(
    r: f64,
    n1: usize,
    n2: usize,
    seed: u64,
    starts: usize,
    fixed_r3: Option<f64>,
) -> Result<(BoxMap, WaveParams, Vec<Minimum>)> {
    check_counts(n1, n2)?;
    let target = WaveParams::new(r, n1 + n2)?;
    let map = search_box(fixed_r3);
    let objective = |z: &[f64]| match evaluate(params_at(&map, z, fixed_r3), n1, n2, &target) {
        Some((f, _)) => 1.0 - f,
        None => f64::INFINITY,
    };
    let runs = multi_start(objective, &map, starts, seed, &phase_options());
    Ok((map, target, runs))
}

/// Largest fidelity with `Ψ_SF(r, n1 + n2)` over the search box, optionally
/// at a fixed `r3`.
pub fn maximize_cascade_fidelity(
    r: f64,
    n1: usize,
    n2: usize,
    fixed_r3: Option<f64>,
    seed: u64,
) -> Result<CascadePoint> {
    let (map, target, runs) = fidelity_runs(r, n1, n2, seed, DEFAULT_STARTS, fixed_r3)?;
    runs.iter()
        .find_map(|m| point(&map, m, fixed_r3, n1, n2, &target))
        .ok_or_else(|| SfsError::Invalid("no start produced a usable cascade".into()))
}

/// Two phases: multi-start Nelder–Mead on `1 − F`, then, from every start
/// that reached [`FIDELITY_THRESHOLD`], Nelder–Mead on `−P` with a penalty
/// on any loss of fidelity. The most probable point meeting the threshold
/// is returned. Identical seeds give identical results.
pub fn optimize_cascade(r: f64, n1: usize, n2: usize, seed: u64) -> Result<CascadePoint> {
    optimize_cascade_with(r, n1, n2, seed, DEFAULT_STARTS)
}

pub fn optimize_cascade_with(r: f64, n1: usize, n2: usize, seed: u64, starts: usize) -> Result<CascadePoint> {
    let (map, target, runs) = fidelity_runs(r, n1, n2, seed, starts, None)?;
    let best_fidelity = runs.first().map(|m| 1.0 - m.value).unwrap_or(0.0);
    let mut feasible: Vec<CascadePoint> = runs
        .iter()
        .filter(|m| 1.0 - m.value >= FIDELITY_THRESHOLD)
        .filter_map(|m| point(&map, m, None, n1, n2, &target))
        .collect();
    feasible.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    feasible.truncate(PROBABILITY_STARTS);
    if feasible.is_empty() {
        return Err(SfsError::Infeasible {
            best: best_fidelity,
            threshold: FIDELITY_THRESHOLD,
        });
    }
    // the hinge sits at the exact target; the 1e-4 margin is only checked
    let penalised = |z: &[f64]| match evaluate(params_at(&map, z, None), n1, n2, &target) {
        Some((f, p)) => -p + 100.0 * ((1.0 - 1e-12) - f).max(0.0),
        None => f64::INFINITY,
    };
    let opts = phase_options();
    let mut best: Option<CascadePoint> = None;
    for start in feasible {
        let first = nelder_mead(penalised, &map.from_box(&start.params.as_vector()), &opts);
        let refined = nelder_mead(penalised, &first.x, &opts);
        if let Some(p) = point(&map, &refined, None, n1, n2, &target) {
            let better = best.is_none_or(|b| p.probability > b.probability);
            if p.fidelity >= FIDELITY_THRESHOLD && better {
                best = Some(p);
            }
        }
    }
    best.ok_or(SfsError::Infeasible {
        best: best_fidelity,
        threshold: FIDELITY_THRESHOLD,
    })
}

/// Resources and success probability of one scheme at one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub n1: usize,
    pub n2: usize,
    pub fidelity: f64,
    pub probability: f64,
    pub max_sq_db: f64,
    pub energy: f64,
}

/// Universal scheme at its optimum `X = 2n + 1` against the best cascade of
/// every ordering `(n1, n2)` with `n1 + n2 = n`, at target squeezing `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub r: f64,
    pub n: usize,
    pub p_universal: f64,
    pub max_sq_db_universal: f64,
    pub energy_universal: f64,
    pub cascades: Vec<SchemeSummary>,
}

impl ComparisonRecord {
    fn fold(&self, f: impl Fn(&SchemeSummary) -> f64) -> f64 {
        self.cascades.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest cascade probability over the orderings.
    pub fn p_cascade(&self) -> f64 {
        self.fold(|c| c.probability)
    }

    pub fn max_sq_db_cascade(&self) -> f64 {
        self.fold(|c| c.max_sq_db)
    }

    pub fn energy_cascade(&self) -> f64 {
        self.fold(|c| c.energy)
    }
}

/// Universal-scheme row of a comparison: probability `n^n/(n+1)^{n+1}`,
/// input squeezings and energy at `X = 2n + 1`.
pub fn universal_summary(r: f64, n: usize) -> Result<SchemeSummary> {
    let opt = optimal_universal_parameter(n);
    if !opt.attained {
        return Err(SfsError::Invalid("the universal optimum needs n ≥ 1".into()));
    }
    let (_, r_big, r_small) = last_stage(opt.x, r)?;
    Ok(SchemeSummary {
        n1: n,
        n2: 0,
        fidelity: 1.0,
        probability: opt.probability,
        max_sq_db: squeezing_to_db(r_big).max(squeezing_to_db(r_small)),
        energy: r_big.sinh().powi(2) + r_small.sinh().powi(2),
    })
}

pub fn compare_schemes(r: f64, n: usize, seed: u64) -> Result<ComparisonRecord> {
    let universal = universal_summary(r, n)?;
    let mut cascades = Vec::with_capacity(n.saturating_sub(1));
    for n1 in 1..n {
        let best = optimize_cascade(r, n1, n - n1, seed)?;
        cascades.push(SchemeSummary {
            n1,
            n2: n - n1,
            fidelity: best.fidelity,
            probability: best.probability,
            max_sq_db: best.params.max_squeezing_db(),
            energy: best.params.mean_photons(),
        });
    }
    Ok(ComparisonRecord {
        r,
        n,
        p_universal: universal.probability,
        max_sq_db_universal: universal.max_sq_db,
        energy_universal: universal.energy,
        cascades,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::fidelity_numeric;
    use approx::assert_relative_eq;

    fn sample() -> CascadeParams {
        CascadeParams::new(0.8, -0.4, 0.3, 0.6, 0.7).unwrap()
    }

    #[test]
    fn parameter_checks() {
        assert!(CascadeParams::new(0.1, -0.1, 0.0, 1.0, 0.5).is_err());
        assert!(CascadeParams::new(3.5, -0.1, 0.0, 0.5, 0.5).is_err());
        assert!(CascadeParams::new(f64::NAN, -0.1, 0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn sigma_is_valid_with_expected_determinant() {
        let c = sample();
        let s = cascade_sigma(&c).unwrap();
        assert_relative_eq!(
            s.determinant(),
            (2.0 * (0.8 - 0.4 + 0.3f64)).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_counts_rejected() {
        let grid = cached_rule(CASCADE_GRID_ORDER).unwrap();
        assert!(cascade_output(&sample(), 0, 2, &grid).is_err());
        assert!(cascade_output(&sample(), 1, 0, &grid).is_err());
        assert!(matches!(
            cascade_output(&sample(), 4, 3, &grid),
            Err(SfsError::CostGuard(_))
        ));
    }

    #[test]
    fn bound_values() {
        assert!(cascade_n2_fidelity_bound(0.4, 0.4).abs() < 1e-15);
        assert!((cascade_n2_fidelity_bound(5.0, 0.0) - 2.0 / 3.0).abs() < 1e-3);
        let delta = 0.5 * (5.0f64 / 3.0).acosh();
        assert_relative_eq!(cascade_n2_fidelity_bound(delta, 0.0), 1.0 / 3.0, max_relative = 1e-14);
        for k in 0..200 {
            let d = -5.0 + 0.05 * k as f64;
            let f = cascade_n2_fidelity_bound(d, 0.0);
            assert!((0.0..2.0 / 3.0).contains(&f));
        }
    }

    #[test]
    fn universal_row_at_seven() {
        let u = universal_summary(0.0, 3).unwrap();
        assert_relative_eq!(u.probability, 27.0 / 256.0, max_relative = 1e-14);
        // e^{2r'} = 7 + 4√3 at X = 7, r = 0
        let r_big = 0.5 * (7.0 + 4.0 * 3f64.sqrt()).ln();
        assert_relative_eq!(u.max_sq_db, squeezing_to_db(r_big), max_relative = 1e-12);
        assert_relative_eq!(u.energy, 2.0 * r_big.sinh().powi(2), max_relative = 1e-12);
        assert!(universal_summary(0.0, 0).is_err());
    }

    #[test]
    fn optimiser_is_reproducible_and_feasible() {
        let a = optimize_cascade_with(0.3, 2, 1, 11, 8).unwrap();
        let b = optimize_cascade_with(0.3, 2, 1, 11, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.fidelity >= FIDELITY_THRESHOLD);
        assert!(a.probability > 0.0 && a.probability < 27.0 / 256.0);
        let c = a.params;
        assert!(c.r1 >= 0.0 && c.r2 <= 0.0 && c.r3.abs() <= SQUEEZING_BOX);
    }

    #[test]
    fn one_one_cascade_is_infeasible() {
        assert!(matches!(
            optimize_cascade_with(0.0, 1, 1, 5, 8),
            Err(SfsError::Infeasible { .. })
        ));
    }

    #[test]
    fn output_fidelity_agrees_with_grid_overlap() {
        let c = sample();
        let target = WaveParams::new(0.2, 3).unwrap();
        let (f, p) = cascade_fidelity(&c, 1, 2, &target).unwrap();
        let fine = cached_rule(96).unwrap();
        let (psi, p_grid) = cascade_output(&c, 1, 2, &fine).unwrap();
        assert_relative_eq!(p, p_grid, max_relative = 1e-10);
        let f_grid = fidelity_numeric(&psi, &target).unwrap();
        assert!((f - f_grid).abs() < 1e-8, "{f} vs {f_grid}");
    }
}

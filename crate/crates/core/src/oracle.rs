//! Brute-force evaluation of heralding integrals by tensor Gauss–Hermite
//! cubature.
//!
//! Every integrand here is a Gaussian times a polynomial. [`GaussianCubature`]
//! maps the Gaussian envelope onto the Hermite weight through its Cholesky
//! factor, so the remaining integrand is the bare polynomial part. Nothing in
//! this module uses the closed forms of [`crate::heralding`]; those are
//! checked against it.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Result, SfsError};
use crate::gaussian::{universal_sigma, SigmaMatrix, UniversalSchemeParams};
use crate::heralding::DetectionPattern;
use crate::special::{cached_rule, hermite, ln_factorial, sfs_value, QuadratureRule, WaveParams};

/// Largest σ dimension the oracle accepts.
pub const MAX_ORACLE_MODES: usize = 4;
/// Largest total count the oracle accepts.
pub const MAX_ORACLE_TOTAL: usize = 6;
/// Smallest per-axis order accepted by [`herald_numeric`].
pub const MIN_HERALD_ORDER: usize = 48;
/// Nodes of the output-mode grid.
pub const DEFAULT_GRID_ORDER: usize = 40;
/// Allowed change of any reported value when the order is doubled.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;

/// `∫_{R^d} exp(−½ (z−m)ᵀ P (z−m)) f(z) dz` by tensor Gauss–Hermite after
/// the substitution `z = m + √2 L^{−T} t`, `P = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianCubature {
    dim: usize,
    rule: Arc<QuadratureRule>,
    /// Column `k` of `√2 L^{−T}` multiplied by each node: `columns[k][i]`.
    columns: Vec<Vec<DVector<f64>>>,
    jacobian: f64,
}

impl GaussianCubature {
    pub fn new(precision: &DMatrix<f64>, order: usize) -> Result<Self> {
        let dim = precision.nrows();
        let rule = cached_rule(order)?;
        let chol = Cholesky::new(precision.clone())
            .ok_or_else(|| SfsError::NotPositiveDefinite("cubature precision".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| SfsError::NotPositiveDefinite("singular Cholesky factor".into()))?;
        let transform = l_inv.transpose() * 2f64.sqrt();
        let columns = (0..dim)
            .map(|k| rule.nodes.iter().map(|&t| transform.column(k) * t).collect())
            .collect();
        let det_l: f64 = l.diagonal().iter().product();
        let jacobian = (0.5 * dim as f64 * LN_2).exp() / det_l;
        Ok(Self {
            dim,
            rule,
            columns,
            jacobian,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.rule.order
    }

    /// Integrates `f` against the envelope centred at `mean`. `f` receives
    /// the physical point `z`.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mean: &[f64], mut f: F) -> f64 {
        let d = self.dim;
        if d == 0 {
            return f(&[]);
        }
        let m = self.rule.order;
        let w = &self.rule.weights;
        let mut idx = vec![0usize; d];
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        loop {
            z.copy_from_slice(mean);
            let mut weight = 1.0;
            for k in 0..d {
                let col = &self.columns[k][idx[k]];
                for i in 0..d {
                    z[i] += col[i];
                }
                weight *= w[idx[k]];
            }
            total += weight * f(&z);
            let mut k = 0;
            loop {
                if k == d {
                    return self.jacobian * total;
                }
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

impl GaussianCubature {
    /// Same integral for a separable integrand `Π_i g(i, z_i)`.
    ///
    /// `√2 L^{−T}` is upper triangular, so `z_i` depends on `t_i … t_{d−1}`
    /// only. Looping with the last coordinate outermost lets each factor be
    /// evaluated once per partial node tuple instead of once per full tuple.
    pub fn integrate_product<G: Fn(usize, f64) -> f64>(&self, mean: &[f64], g: G) -> f64 {
        let d = self.dim;
        if d == 0 {
            return 1.0;
        }
        // offsets[level][i]: contribution of coordinates above `level` to z_i
        let mut offsets = vec![vec![0.0; d]; d];
        offsets[d - 1].copy_from_slice(mean);
        self.jacobian * self.product_level(d - 1, &mut offsets, &g)
    }

    fn product_level<G: Fn(usize, f64) -> f64>(&self, level: usize, offsets: &mut [Vec<f64>], g: &G) -> f64 {
        let w = &self.rule.weights;
        let mut total = 0.0;
        for (j, col) in self.columns[level].iter().enumerate() {
            let factor = g(level, offsets[level][level] + col[level]);
            if level == 0 {
                total += w[j] * factor;
                continue;
            }
            let (upper, lower) = offsets.split_at_mut(level);
            let below = &mut upper[level - 1];
            for i in 0..level {
                below[i] = lower[0][i] + col[i];
            }
            total += w[j] * factor * self.product_level(level - 1, offsets, g);
        }
        total
    }
}

/// Splits a joint Gaussian over `(inner, outer)` variables: the inner block
/// is integrated at fixed outer values, leaving an outer envelope with the
/// Schur-complement precision.
#[derive(Debug, Clone)]
pub(crate) struct Marginalizer {
    pub inner: GaussianCubature,
    /// `−Q_ii^{−1} Q_io`, maps outer values to the inner mean.
    pub shift: DMatrix<f64>,
    /// `Q_oo − Q_oi Q_ii^{−1} Q_io`.
    pub schur: DMatrix<f64>,
}

impl Marginalizer {
    pub fn new(q: &DMatrix<f64>, n_inner: usize, order: usize) -> Result<Self> {
        let n = q.nrows();
        let n_outer = n - n_inner;
        let q_ii = q.view((0, 0), (n_inner, n_inner)).into_owned();
        let q_io = q.view((0, n_inner), (n_inner, n_outer)).into_owned();
        let q_oo = q.view((n_inner, n_inner), (n_outer, n_outer)).into_owned();
        let inv = Cholesky::new(q_ii.clone())
            .ok_or_else(|| SfsError::NotPositiveDefinite("inner precision block".into()))?
            .inverse();
        let shift = -(&inv * &q_io);
        let mut schur = &q_oo + q_io.transpose() * &shift;
        schur = (&schur + schur.transpose()) * 0.5;
        Ok(Self {
            inner: GaussianCubature::new(&q_ii, order)?,
            shift,
            schur,
        })
    }

    /// `∫ dz_in exp(−½ (z_in−μ)ᵀ Q_ii (z_in−μ)) f(z_in, z_out)`; the outer
    /// envelope `exp(−½ z_outᵀ S z_out)` is left to the caller.
    pub fn inner_integral<F: Fn(&[f64]) -> f64>(&self, outer: &[f64], f: &F) -> f64 {
        let n_in = self.inner.dim();
        let mean = self.inner_mean(outer);
        let mut full = vec![0.0; n_in + outer.len()];
        full[n_in..].copy_from_slice(outer);
        self.inner.integrate(&mean, |z| {
            full[..n_in].copy_from_slice(z);
            f(&full)
        })
    }

    fn inner_mean(&self, outer: &[f64]) -> Vec<f64> {
        (0..self.inner.dim())
            .map(|i| (0..outer.len()).map(|j| self.shift[(i, j)] * outer[j]).sum())
            .collect()
    }

    /// [`Marginalizer::inner_integral`] for `Π_i g(i, z_i)` over the inner
    /// coordinates.
    pub fn inner_product_integral<G: Fn(usize, f64) -> f64>(&self, outer: &[f64], g: G) -> f64 {
        self.inner.integrate_product(&self.inner_mean(outer), g)
    }
}

/// `∫ dz_out ( ∫ dz_in exp(−½ zᵀQz) f(z) )²`, with `z = (z_in, z_out)` and
/// `f` polynomial. Both levels use whitened cubature of the given orders.
pub(crate) fn nested_square_integral<F: Fn(&[f64]) -> f64>(
    q: &DMatrix<f64>,
    n_inner: usize,
    f: F,
    inner_order: usize,
    outer_order: usize,
) -> Result<f64> {
    let marg = Marginalizer::new(q, n_inner, inner_order)?;
    let outer = GaussianCubature::new(&(&marg.schur * 2.0), outer_order)?;
    let zero = vec![0.0; outer.dim()];
    Ok(outer.integrate(&zero, |z_out| {
        let h = marg.inner_integral(z_out, &f);
        h * h
    }))
}

/// A real wavefunction sampled on quadrature nodes. `weights` turn sums into
/// `∫ dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub axis: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    /// `∫ |ψ|²` under the grid weights.
    pub norm: f64,
}

impl GridWavefunction {
    /// Samples `f` on the Gauss–Hermite nodes scaled by `scale`.
    pub fn sample<F: Fn(f64) -> f64>(rule: &QuadratureRule, scale: f64, f: F) -> Self {
        let axis: Vec<f64> = rule.nodes.iter().map(|t| t * scale).collect();
        let weights: Vec<f64> = rule.scaled_weights.iter().map(|w| w * scale).collect();
        let values: Vec<f64> = axis.iter().map(|&x| f(x)).collect();
        let norm = values.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
        Self {
            axis,
            weights,
            values,
            norm,
        }
    }

    pub fn normalized(mut self) -> Result<Self> {
        if !(self.norm > 0.0) || !self.norm.is_finite() {
            return Err(SfsError::NonNormalizable(self.norm));
        }
        let s = self.norm.sqrt().recip();
        self.values.iter_mut().for_each(|v| *v *= s);
        self.norm = self.values.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum();
        Ok(self)
    }

    pub fn inner_product(&self, other: &GridWavefunction) -> Result<f64> {
        if self.axis != other.axis {
            return Err(SfsError::Invalid("grids do not share an axis".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(&self.weights)
            .map(|((a, b), w)| w * a * b)
            .sum())
    }
}

/// The unnormalised state left in the last mode after projecting the other
/// modes of a Gaussian onto Fock states:
/// `φ(x_N) = ∫ Ψ^G(y, x_N) Π_i ψ_{n_i}(y_i) dy`.
#[derive(Debug, Clone)]
pub struct ConditionalMode {
    marg: Marginalizer,
    counts: Vec<usize>,
    /// Precision of the Gaussian envelope of `φ`.
    envelope: f64,
    /// `ln` of the constants of the Gaussian and Fock wavefunctions.
    ln_prefactor: f64,
}

impl ConditionalMode {
    /// `order` is the per-axis cubature order over the measured modes.
    pub fn new(s: &SigmaMatrix, d: &DetectionPattern, order: usize) -> Result<Self> {
        let n = s.dim();
        if n < 2 {
            return Err(SfsError::TooFewModes(n));
        }
        if d.detectors() != n - 1 {
            return Err(SfsError::PatternLength {
                expected: n - 1,
                found: d.detectors(),
            });
        }
        // Fock projections add e^{−y_i²/2} to each measured coordinate.
        let mut q = s.to_matrix();
        for i in 0..n - 1 {
            q[(i, i)] += 1.0;
        }
        let marg = Marginalizer::new(&q, n - 1, order)?;
        let envelope = marg.schur[(0, 0)];
        let det = s.determinant();
        let mut ln_prefactor = 0.25 * (det.ln() - n as f64 * PI.ln()) - 0.25 * (n - 1) as f64 * PI.ln();
        for &k in d.counts() {
            ln_prefactor -= 0.5 * (k as f64 * LN_2 + ln_factorial(k));
        }
        Ok(Self {
            marg,
            counts: d.counts().to_vec(),
            envelope,
            ln_prefactor,
        })
    }

    /// Quadratic coefficient of the output envelope, `φ ∝ e^{−s x²/2}·poly`.
    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// `∫ exp(−½ xᵀσx) e^{−Σ y_i²/2} Π H_{n_i}(y_i) dy` at `x_N` (no
    /// normalisation constants).
    pub fn kernel(&self, x_n: f64) -> f64 {
        let counts = &self.counts;
        (-0.5 * self.envelope * x_n * x_n).exp()
            * self.marg.inner_product_integral(&[x_n], |i, y| hermite(counts[i], y))
    }

    /// `φ(x_N)`.
    pub fn amplitude(&self, x_n: f64) -> f64 {
        self.ln_prefactor.exp() * self.kernel(x_n)
    }

    /// Axis scale on which `|φ|²` becomes `e^{−t²}·poly`.
    pub fn grid_scale(&self) -> f64 {
        self.envelope.sqrt().recip()
    }

    /// `∫ |φ|²`, the heralding probability.
    pub fn probability(&self, grid: &QuadratureRule) -> f64 {
        self.sample(grid).norm
    }

    pub fn sample(&self, grid: &QuadratureRule) -> GridWavefunction {
        GridWavefunction::sample(grid, self.grid_scale(), |x| self.amplitude(x))
    }

    /// `|⟨φ|Ψ_SF⟩|² / ⟨φ|φ⟩` with the overlap taken on a grid matched to the
    /// product of both envelopes, so the target width never has to be
    /// resolved by the state's own grid.
    pub fn fidelity_to(&self, target: &WaveParams, grid: &QuadratureRule) -> f64 {
        let q = target.envelope();
        let scale = (2.0 / (self.envelope + q)).sqrt();
        let overlap: f64 = grid
            .nodes
            .iter()
            .zip(&grid.scaled_weights)
            .map(|(&t, &w)| {
                let x = scale * t;
                w * self.amplitude(x) * sfs_value(x, target.r, target.n)
            })
            .sum::<f64>()
            * scale;
        overlap * overlap / self.probability(grid)
    }
}

fn check_oracle_inputs(s: &SigmaMatrix, d: &DetectionPattern, order: usize) -> Result<()> {
    if s.dim() > MAX_ORACLE_MODES {
        return Err(SfsError::CostGuard(format!(
            "oracle supports at most {MAX_ORACLE_MODES} modes, got {}",
            s.dim()
        )));
    }
    if d.total() > MAX_ORACLE_TOTAL {
        return Err(SfsError::CostGuard(format!(
            "oracle supports total counts up to {MAX_ORACLE_TOTAL}, got {}",
            d.total()
        )));
    }
    if order < MIN_HERALD_ORDER || 2 * order > crate::special::MAX_RULE_ORDER {
        return Err(SfsError::QuadratureOrder {
            order,
            min: MIN_HERALD_ORDER,
            max: crate::special::MAX_RULE_ORDER / 2,
        });
    }
    Ok(())
}

/// Heralds `d` on the Gaussian `s` by direct cubature of the projection
/// integral and returns the normalised output state and the pattern's
/// probability.
///
/// The computation is repeated at twice the order; if any reported value
/// moves by more than [`CONVERGENCE_TOLERANCE`] the result is rejected.
pub fn herald_numeric(s: &SigmaMatrix, d: &DetectionPattern, order: usize) -> Result<(GridWavefunction, f64)> {
    check_oracle_inputs(s, d, order)?;
    let grid = cached_rule(DEFAULT_GRID_ORDER)?;
    let coarse = ConditionalMode::new(s, d, order)?.sample(&grid);
    let fine = ConditionalMode::new(s, d, 2 * order)?.sample(&grid);
    let (p_coarse, p_fine) = (coarse.norm, fine.norm);
    let psi_coarse = coarse.normalized()?;
    let psi_fine = fine.normalized()?;
    let wave_change = psi_coarse
        .values
        .iter()
        .zip(&psi_fine.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let change = wave_change.max((p_coarse - p_fine).abs() / p_fine);
    if !(change < CONVERGENCE_TOLERANCE) {
        return Err(SfsError::Convergence {
            quantity: "heralded state",
            change,
            tolerance: CONVERGENCE_TOLERANCE,
        });
    }
    Ok((psi_fine, p_fine))
}

/// `|⟨ψ|Ψ_SF(r, n)⟩|²` by quadrature on `psi`'s own grid.
pub fn fidelity_numeric(psi: &GridWavefunction, params: &WaveParams) -> Result<f64> {
    if psi.axis.len() != psi.values.len() || psi.axis.len() != psi.weights.len() {
        return Err(SfsError::DimensionMismatch {
            expected: psi.axis.len(),
            found: psi.values.len().min(psi.weights.len()),
        });
    }
    let params = WaveParams::new(params.r, params.n)?;
    let overlap: f64 = psi
        .axis
        .iter()
        .zip(&psi.weights)
        .zip(&psi.values)
        .map(|((&x, &w), &v)| w * v * sfs_value(x, params.r, params.n))
        .sum();
    Ok(overlap * overlap)
}

/// Closed-form right side of the integral identity behind universality:
/// `(−1)^n √(2π^{N−1} Π(a_i−1)^{n_i} / (X+1)^{n+1}) e^{−e^{2r}x²/2} H_n(e^r x)`.
pub fn integral_identity_rhs(p: &UniversalSchemeParams, d: &DetectionPattern, x_n: f64) -> f64 {
    let n = d.total();
    let x_plus_one = p.universal_parameter() + 1.0;
    let mut ln_mag = 0.5 * (LN_2 + (p.n_modes() - 1) as f64 * PI.ln() - (n as f64 + 1.0) * x_plus_one.ln());
    for (&a, &k) in p.a().iter().zip(d.counts()) {
        if k > 0 {
            ln_mag += 0.5 * k as f64 * (a - 1.0).ln();
        }
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let y = p.r().exp() * x_n;
    sign * ln_mag.exp() * (-0.5 * y * y).exp() * hermite(n, y)
}

/// Largest deviation between the cubature value of the heralding kernel and
/// its closed form over `xs`, relative to the largest closed-form magnitude
/// on that set. Signs are compared as they stand.
pub fn integral_identity_check(
    p: &UniversalSchemeParams,
    d: &DetectionPattern,
    xs: &[f64],
    order: usize,
) -> Result<f64> {
    let s = universal_sigma(p);
    check_oracle_inputs(&s, d, order)?;
    if xs.is_empty() {
        return Err(SfsError::Invalid("no x_N samples".into()));
    }
    let coarse = ConditionalMode::new(&s, d, order)?;
    let fine = ConditionalMode::new(&s, d, 2 * order)?;
    let rhs: Vec<f64> = xs.iter().map(|&x| integral_identity_rhs(p, d, x)).collect();
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) {
        return Err(SfsError::Invalid("closed form vanishes on every sample".into()));
    }
    let mut change: f64 = 0.0;
    let mut dev: f64 = 0.0;
    for (&x, &want) in xs.iter().zip(&rhs) {
        let (lo, hi) = (coarse.kernel(x), fine.kernel(x));
        change = change.max((lo - hi).abs() / scale);
        dev = dev.max((hi - want).abs() / scale);
    }
    if !(change < CONVERGENCE_TOLERANCE) {
        return Err(SfsError::Convergence {
            quantity: "heralding kernel",
            change,
            tolerance: CONVERGENCE_TOLERANCE,
        });
    }
    Ok(dev)
}

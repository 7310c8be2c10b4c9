//! Optical circuit for the universal σ: a chain of beam splitters fed by
//! vacuum on the first `N − 2` inputs and by two squeezed vacua on the last
//! two, so that `σ = O D Oᵀ`.

use std::f64::consts::LN_10;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfsError};
use crate::gaussian::{SigmaMatrix, UniversalSchemeParams};

/// Name of the sign convention stored with every decomposition.
pub const SPLITTER_CONVENTION: &str = "chain [[t,s],[-s,t]], last [[t,-s],[s,t]]";

/// Beam splitter mixing modes `k < l` (1-based).
///
/// The 2×2 block on rows/columns `(k, l)` is `[[t, sign·s], [−sign·s, t]]`
/// with `s = √(1 − t²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterOp {
    pub k: usize,
    pub l: usize,
    pub t: f64,
    pub sign: i8,
}

impl BeamSplitterOp {
    pub fn new(k: usize, l: usize, t: f64, sign: i8) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(SfsError::Transmittance(t));
        }
        if k == 0 || k >= l {
            return Err(SfsError::SplitterModes { k, l, n_modes: l });
        }
        if sign != 1 && sign != -1 {
            return Err(SfsError::Invalid(format!("splitter sign must be ±1, got {sign}")));
        }
        Ok(Self { k, l, t, sign })
    }

    pub fn reflectance(&self) -> f64 {
        (1.0 - self.t * self.t).sqrt()
    }

    /// The `n × n` orthogonal matrix of this splitter.
    pub fn matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        if self.l > n {
            return Err(SfsError::SplitterModes {
                k: self.k,
                l: self.l,
                n_modes: n,
            });
        }
        let (k, l) = (self.k - 1, self.l - 1);
        let s = f64::from(self.sign) * self.reflectance();
        let mut m = DMatrix::identity(n, n);
        m[(k, k)] = self.t;
        m[(l, l)] = self.t;
        m[(k, l)] = s;
        m[(l, k)] = -s;
        Ok(m)
    }
}

/// Beam splitters in application order `BS^{1,2} … BS^{N−1,N}` plus the
/// diagonal squeezings `r_1 … r_N` (only the last two nonzero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeDecomposition {
    pub n_modes: usize,
    pub splitters: Vec<BeamSplitterOp>,
    pub squeezings: Vec<f64>,
    pub convention: String,
}

impl SchemeDecomposition {
    /// `r_{N−1} + r_N`.
    pub fn target_squeezing(&self) -> f64 {
        self.squeezings[self.n_modes - 2] + self.squeezings[self.n_modes - 1]
    }

    pub fn squeezings_db(&self) -> Vec<f64> {
        self.squeezings.iter().map(|&r| squeezing_to_db(r)).collect()
    }

    /// Largest input squeezing magnitude in dB.
    pub fn max_squeezing_db(&self) -> f64 {
        self.squeezings_db().into_iter().fold(0.0, f64::max)
    }

    /// `t_{N−1}`, the only transmittance fixed by the target.
    pub fn last_transmittance(&self) -> f64 {
        self.splitters.last().map(|b| b.t).unwrap_or(f64::NAN)
    }

    fn check(&self) -> Result<()> {
        let n = self.n_modes;
        if n < 2 {
            return Err(SfsError::TooFewModes(n));
        }
        if self.squeezings.len() != n {
            return Err(SfsError::DimensionMismatch {
                expected: n,
                found: self.squeezings.len(),
            });
        }
        if self.squeezings.iter().any(|r| !r.is_finite()) {
            return Err(SfsError::NonFinite("squeezing"));
        }
        for b in &self.splitters {
            if b.k == 0 || b.k >= b.l || b.l > n {
                return Err(SfsError::SplitterModes {
                    k: b.k,
                    l: b.l,
                    n_modes: n,
                });
            }
            if !(b.t > 0.0 && b.t < 1.0) {
                return Err(SfsError::Transmittance(b.t));
            }
        }
        Ok(())
    }
}

/// How an input squeezing acts on the coordinate quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SqueezeKind {
    /// `r > 0`: narrowed coordinate distribution.
    Squeeze,
    /// `r < 0`: widened coordinate distribution.
    Antisqueeze,
    Vacuum,
}

pub fn squeeze_kind(r: f64) -> SqueezeKind {
    if r > 0.0 {
        SqueezeKind::Squeeze
    } else if r < 0.0 {
        SqueezeKind::Antisqueeze
    } else {
        SqueezeKind::Vacuum
    }
}

/// `10 log₁₀ e^{2|r|} = 20|r| / ln 10`.
pub fn squeezing_to_db(r: f64) -> f64 {
    20.0 * r.abs() / LN_10
}

/// `Σ sinh² r_i` over the inputs.
pub fn total_mean_photons(d: &SchemeDecomposition) -> f64 {
    d.squeezings.iter().map(|r| r.sinh().powi(2)).sum()
}

/// `(t_{N−1}, r_{N−1}, r_N)` as functions of `X` and `r` alone.
pub fn last_stage(x: f64, r: f64) -> Result<(f64, f64, f64)> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(SfsError::UniversalParameter(x));
    }
    let q = (2.0 * r).exp();
    let disc = (x * (1.0 + q)).powi(2) - 4.0 * q;
    let root = disc.sqrt();
    let t = (0.5 * (1.0 + x * (1.0 - q) / root)).sqrt();
    let big = 0.5 * (x * (1.0 + q) + root);
    let r_big = 0.5 * big.ln();
    // the small eigenvalue is q / big; subtracting in log space avoids cancellation
    Ok((t, r_big, r - r_big))
}

/// Beam-splitter chain and input squeezings realising `universal_sigma(p)`.
pub fn decompose(p: &UniversalSchemeParams) -> Result<SchemeDecomposition> {
    let n = p.n_modes();
    let a = p.a();
    let mut splitters = Vec::with_capacity(n - 1);
    let mut partial = a[0] - 1.0;
    for (i, &ai) in a.iter().enumerate().take(n - 1).skip(1) {
        partial += ai - 1.0;
        let t = ((ai - 1.0) / partial).sqrt();
        splitters.push(BeamSplitterOp::new(i, i + 1, t, 1)?);
    }
    let (t_last, r_big, r_small) = last_stage(p.universal_parameter(), p.r())?;
    splitters.push(BeamSplitterOp::new(n - 1, n, t_last, -1)?);
    let mut squeezings = vec![0.0; n];
    squeezings[n - 2] = r_big;
    squeezings[n - 1] = r_small;
    Ok(SchemeDecomposition {
        n_modes: n,
        splitters,
        squeezings,
        convention: SPLITTER_CONVENTION.into(),
    })
}

/// `O D Oᵀ` with `O` the product of the splitters in list order and
/// `D = diag(e^{2 r_i})`.
pub fn reconstruct(d: &SchemeDecomposition) -> Result<SigmaMatrix> {
    d.check()?;
    let n = d.n_modes;
    let mut o = DMatrix::<f64>::identity(n, n);
    for b in &d.splitters {
        o *= b.matrix(n)?;
    }
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        d.squeezings.iter().map(|r| (2.0 * r).exp()),
    ));
    let s = &o * diag * o.transpose();
    SigmaMatrix::from_matrix(&((&s + s.transpose()) * 0.5))
}

#[derive(Serialize)]
struct DecompositionJson<'a> {
    n_modes: usize,
    splitters: Vec<SplitterJson>,
    squeezings: &'a [f64],
    squeezings_db: Vec<f64>,
    squeeze_kinds: Vec<SqueezeKind>,
    convention: &'a str,
}

#[derive(Serialize)]
struct SplitterJson {
    k: usize,
    l: usize,
    t: f64,
    sign: i8,
}

/// JSON view with `n_modes`, `splitters [{k, l, t}]`, `squeezings` and
/// `squeezings_db`.
pub fn decomposition_json(d: &SchemeDecomposition) -> serde_json::Value {
    let view = DecompositionJson {
        n_modes: d.n_modes,
        splitters: d
            .splitters
            .iter()
            .map(|b| SplitterJson {
                k: b.k,
                l: b.l,
                t: b.t,
                sign: b.sign,
            })
            .collect(),
        squeezings: &d.squeezings,
        squeezings_db: d.squeezings_db(),
        squeeze_kinds: d.squeezings.iter().map(|&r| squeeze_kind(r)).collect(),
        convention: &d.convention,
    };
    serde_json::to_value(view).expect("plain data serialises")
}

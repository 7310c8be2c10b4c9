//! Derivative-free minimisation: Nelder–Mead simplex refinement started from
//! a randomly shifted Halton point set over a box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let inv = 1.0 / f64::from(base);
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    out
}

/// Halton points in `[0, 1)^dim` with a Cranley–Patterson shift drawn from
/// `seed`. Index 0 is skipped.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension {dim} too large");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            shift: (0..dim).map(|_| rng.gen::<f64>()).collect(),
            index: 0,
        }
    }
}

impl Iterator for Halton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        self.index += 1;
        Some(
            self.shift
                .iter()
                .zip(PRIMES)
                .map(|(s, p)| (radical_inverse(self.index, p) + s).fract())
                .collect(),
        )
    }
}

/// Maps unconstrained coordinates onto the open box `(lower, upper)` through
/// a logistic function.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMap {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxMap {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_box(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&z, (&lo, &hi))| lo + (hi - lo) / (1.0 + (-z).exp()))
            .collect()
    }

    /// Inverse of [`BoxMap::to_box`].
    pub fn from_box(&self, x: &[f64]) -> Vec<f64> {
        let unit: Vec<f64> = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo))
            .collect();
        self.from_unit(&unit)
    }

    /// Inverse of [`BoxMap::to_box`] for a point given in unit-cube
    /// coordinates.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .map(|&u| {
                let u = u.clamp(1e-12, 1.0 - 1e-12);
                (u / (1.0 - u)).ln()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this distance of the best.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimises `f` from `x0` with the standard reflection, expansion,
/// contraction and shrink steps (coefficients 1, 2, ½, ½). Non-finite values
/// are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if evals >= opts.max_evals || (spread <= opts.f_tol && size <= opts.x_tol) || size <= opts.x_tol * 1e-3 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            let xe = along(2.0);
            let ve = eval(&xe, &mut evals);
            simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr < simplex[n - 1].1 {
            simplex[n] = (xr, vr);
            continue;
        }
        // outside contraction if the reflection improved on the worst point
        let xc = along(if vr < simplex[n].1 { 0.5 } else { -0.5 });
        let vc = eval(&xc, &mut evals);
        if vc < simplex[n].1.min(vr) {
            simplex[n] = (xc, vc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = vertex.0.iter().zip(&x_best).map(|(x, b)| b + 0.5 * (x - b)).collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals }
}

/// Runs [`nelder_mead`] from `starts` shifted Halton points of the box and
/// returns every local result, best first. Ties keep start order, so the
/// output depends only on `seed`.
pub fn multi_start<F: Fn(&[f64]) -> f64>(
    f: F,
    map: &BoxMap,
    starts: usize,
    seed: u64,
    opts: &NelderMeadOptions,
) -> Vec<Minimum> {
    let mut out: Vec<Minimum> = Halton::new(map.dim(), seed)
        .take(starts)
        .map(|u| nelder_mead(&f, &map.from_unit(&u), opts))
        .collect();
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    out
}

/// Maximum of a smooth unimodal `f` on `[lo, hi]` by bisection on the sign
/// of the central difference `f(x + h) − f(x − h)`. Unlike comparing function
/// values, the sign stays reliable close to a flat top.
pub fn slope_bisection_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, h: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid + h) > f(mid - h) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

//! Variational lower bounds on the log-Sobolev constant and the Poincaré
//! constant of a grid measure.
//!
//! The log-Sobolev ratio is maximized over exponents `u` (test function
//! `f = e^{u/2}`). Each ascent step is a minorize-maximize update: with
//! `phi = u` frozen, the entropy is bounded below by the linear functional
//! `E[f^2 phi] - E[f^2] log E[e^phi]`, which is tight at the current `f`.
//! Maximizing that bound over `f` is a generalized tridiagonal Rayleigh
//! quotient problem, solved by bisection on Sturm counts plus inverse
//! iteration. Its maximizer is the search direction; a halving line search
//! keeps the ratio non-decreasing, with a plain gradient step as fallback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::functionals::{ratio_and_gradient, ratio_of, GridFunction};
use crate::measures::GridMeasure;
use crate::tridiag;

pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-13;
const SPECTRAL_PROBE_EPSILON: f64 = 0.1;
const MAX_HALVINGS: usize = 30;
const DRIFT_TOL: f64 = 1e-3;
// Below this oscillation the exponent is dominated by round-off.
const MIN_AMPLITUDE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Slopes of the exponential probes `u = a x`, in units of `1 / sigma`.
    pub probe_slopes: Vec<f64>,
    pub random_restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub support_threshold: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            probe_slopes: vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
            random_restarts: 4,
            seed: 0,
            max_iterations: 5000,
            relative_tolerance: 1e-8,
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }
}

impl EstimatorOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::InvalidParameter("relative_tolerance must be positive".into()));
        }
        if !(self.support_threshold >= 0.0) || self.probe_slopes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("bad support threshold or probe slope".into()));
        }
        Ok(())
    }
}

/// Certified lower bound on the log-Sobolev constant.
#[derive(Debug, Clone, PartialEq)]
pub struct LsiEstimate {
    pub value: Extended,
    /// Maximizing exponent `u`; absent for unbounded measures.
    pub certificate: Option<GridFunction>,
    pub probes_tried: usize,
    pub iterations: usize,
    pub converged: bool,
    pub ratio_history: Vec<f64>,
}

/// True iff a grid point between the first and last significant points
/// (weight above `threshold * max weight`) is itself insignificant.
pub fn support_gap(mu: &GridMeasure, threshold: f64) -> bool {
    let w = mu.weights();
    let cut = threshold * w.iter().copied().fold(0.0, f64::max);
    let first = w.iter().position(|&x| x > cut);
    let last = w.iter().rposition(|&x| x > cut);
    match (first, last) {
        (Some(a), Some(b)) => w[a..=b].iter().any(|&x| x <= cut),
        _ => false,
    }
}

/// Measure restricted to the span of its non-negligible weights, together
/// with the symmetric reduction `M^{-1/2} A M^{-1/2}` of the Dirichlet form.
struct Reduced {
    offset: usize,
    full_len: usize,
    weights: Vec<f64>,
    spacing: f64,
    inv_sqrt_w: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Reduced {
    fn new(mu: &GridMeasure) -> Result<Self> {
        let w = mu.weights();
        let first = w.iter().position(|&x| x >= f64::MIN_POSITIVE).ok_or(Error::ZeroMass)?;
        let last = w.iter().rposition(|&x| x >= f64::MIN_POSITIVE).unwrap_or(first);
        let weights = w[first..=last].to_vec();
        if weights.iter().any(|&x| x < f64::MIN_POSITIVE) {
            return Err(Error::DisconnectedSupport);
        }
        if weights.len() < 2 {
            return Err(Error::DegenerateMeasure { variance: 0.0 });
        }
        let h = mu.spacing();
        let inv_h2 = 1.0 / (h * h);
        let n = weights.len();
        let edges: Vec<f64> = weights.windows(2).map(|p| 0.5 * (p[0] + p[1]) * inv_h2).collect();
        let inv_sqrt_w: Vec<f64> = weights.iter().map(|x| 1.0 / x.sqrt()).collect();
        let diag = (0..n)
            .map(|i| {
                let left = if i > 0 { edges[i - 1] } else { 0.0 };
                let right = if i < n - 1 { edges[i] } else { 0.0 };
                (left + right) / weights[i]
            })
            .collect();
        let off = (0..n - 1).map(|i| -edges[i] * inv_sqrt_w[i] * inv_sqrt_w[i + 1]).collect();
        Ok(Self { offset: first, full_len: w.len(), weights, spacing: h, inv_sqrt_w, diag, off })
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    /// Pads a reduced grid function to the full grid with its edge values.
    fn pad(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.full_len);
        out.extend(std::iter::repeat_n(u[0], self.offset));
        out.extend_from_slice(u);
        out.extend(std::iter::repeat_n(u[u.len() - 1], self.full_len - self.offset - u.len()));
        out
    }

    /// Smallest non-zero eigenvalue of the Dirichlet form relative to the
    /// weights, with its eigenfunction normalized in `L^2(mu)`.
    fn spectral_gap(&self) -> Result<(f64, Vec<f64>)> {
        let lambda = tridiag::kth_eigenvalue(&self.diag, &self.off, 1)?;
        if !(lambda > 0.0) {
            return Err(Error::Numerical(format!("non-positive spectral gap {lambda:e}")));
        }
        let total: f64 = self.weights.iter().sum();
        let ground: Vec<f64> = self.weights.iter().map(|w| (w / total).sqrt()).collect();
        let v = tridiag::inverse_iteration(&self.diag, &self.off, lambda, &[&ground])?;
        let mut phi: Vec<f64> = v.iter().zip(&self.inv_sqrt_w).map(|(a, b)| a * b).collect();
        let norm = phi.iter().zip(&self.weights).map(|(p, w)| w * p * p).sum::<f64>().sqrt();
        let sign = if phi[phi.len() - 1] < 0.0 { -1.0 } else { 1.0 };
        for p in &mut phi {
            *p *= sign / norm;
        }
        Ok((lambda, phi))
    }

    fn ratio(&self, u: &[f64]) -> Option<f64> {
        ratio_of(&self.weights, self.spacing, u).ok().filter(|r| r.is_finite())
    }

    fn sturm_count(&self, lambda: f64, q: &[f64]) -> usize {
        // Eigenvalues of 2 lambda A_hat - diag(q) below zero.
        let n = self.len();
        let guard = 1e-300;
        let mut count = 0;
        let mut p = 2.0 * lambda * self.diag[0] - q[0];
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            if i > 0 {
                let e = 2.0 * lambda * self.off[i - 1];
                let safe = if p.abs() < guard { guard.copysign(p) } else { p };
                p = (2.0 * lambda * self.diag[i] - q[i]) - e * e / safe;
            }
            if p < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Maximizer over `f` of the entropy minorant at `u`, returned as an
    /// exponent `2 log f`. `None` when the current point is already optimal.
    fn mm_direction(&self, u: &[f64], current: f64) -> Option<Vec<f64>> {
        let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = self.weights.iter().zip(u).map(|(w, v)| w * (v - top).exp()).sum::<f64>().ln();
        let q: Vec<f64> = u.iter().map(|v| v - top - log_z).collect();
        let mut lo = current * (1.0 - 1e-10);
        if self.sturm_count(lo, &q) == 0 {
            return None;
        }
        let mut hi = 2.0 * current.max(f64::MIN_POSITIVE);
        let mut guard = 0;
        while self.sturm_count(hi, &q) > 0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return None;
            }
        }
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if self.sturm_count(mid, &q) > 0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d: Vec<f64> = self.diag.iter().zip(&q).map(|(a, b)| 2.0 * hi * a - b).collect();
        let e: Vec<f64> = self.off.iter().map(|a| 2.0 * hi * a).collect();
        let v = tridiag::inverse_iteration(&d, &e, 0.0, &[]).ok()?;
        let flip = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let f: Vec<f64> = v.iter().zip(&self.inv_sqrt_w).map(|(a, b)| (flip * a * b).abs()).collect();
        let fmax = f.iter().copied().fold(0.0, f64::max);
        if !(fmax > 0.0 && fmax.is_finite()) {
            return None;
        }
        let floor = 1e-150 * fmax;
        Some(f.iter().map(|&x| 2.0 * (x.max(floor) / fmax).ln()).collect())
    }

    /// Halving line search from `u` towards `target`.
    fn search_towards(&self, u: &[f64], target: &[f64], current: f64) -> Option<(Vec<f64>, f64)> {
        let mut t = 1.0;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(target).map(|(a, b)| a + t * (b - a)).collect();
            if let Some(r) = self.ratio(&trial) {
                if r > current {
                    return Some((trial, r));
                }
            }
            t *= 0.5;
        }
        None
    }

    fn gradient_step(&self, u: &[f64], current: f64) -> Option<(Vec<f64>, f64)> {
        let (_, grad) = ratio_and_gradient(&self.weights, self.spacing, u).ok()?;
        let gmax = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if !(gmax > 0.0 && gmax.is_finite()) {
            return None;
        }
        let target: Vec<f64> = u.iter().zip(&grad).map(|(a, g)| a + g / gmax).collect();
        self.search_towards(u, &target, current)
    }

    /// Line search over `u -> s u`, shrinking first. Moves towards the
    /// linearized regime when the supremum sits at vanishing amplitude.
    fn amplitude_step(&self, u: &[f64], current: f64) -> Option<(Vec<f64>, f64)> {
        for factor in [0.5, 2.0] {
            let mut best: Option<(Vec<f64>, f64)> = None;
            let mut level = current;
            let mut s = factor;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = u.iter().map(|v| s * v).collect();
                if oscillation(&trial) < MIN_AMPLITUDE {
                    break;
                }
                match self.ratio(&trial) {
                    Some(r) if r > level => {
                        level = r;
                        best = Some((trial, r));
                        s *= factor;
                    }
                    _ => break,
                }
            }
            if best.is_some() {
                return best;
            }
        }
        None
    }

    fn ascend(&self, u0: Vec<f64>, opts: &EstimatorOptions) -> Option<Run> {
        let mut u = u0;
        let mut current = self.ratio(&u)?;
        let mut history = vec![current];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iterations {
            iterations += 1;
            let step = self
                .mm_direction(&u, current)
                .and_then(|target| self.search_towards(&u, &target, current))
                .or_else(|| self.gradient_step(&u, current));
            let Some((mut next, mut r)) = step.or_else(|| self.amplitude_step(&u, current)) else {
                converged = true;
                break;
            };
            if let Some((scaled, rs)) = self.amplitude_step(&next, r) {
                next = scaled;
                r = rs;
            }
            let top = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in &mut next {
                *v -= top;
            }
            let improvement = (r - current) / current.abs().max(f64::MIN_POSITIVE);
            let moved = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let spread = oscillation(&next).max(1.0);
            u = next;
            current = r;
            history.push(r);
            if improvement < opts.relative_tolerance {
                // A flat direction along which the certificate keeps moving
                // means the supremum is approached but not attained.
                converged = moved / spread <= DRIFT_TOL;
                break;
            }
        }
        Some(Run { value: current, u, history, iterations, converged })
    }
}

fn oscillation(u: &[f64]) -> f64 {
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

struct Run {
    value: f64,
    u: Vec<f64>,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Poincaré constant `1 / lambda_2` of the grid Dirichlet form.
pub fn poincare(mu: &GridMeasure) -> Result<f64> {
    poincare_mode(mu).map(|(c, _)| c)
}

/// Poincaré constant and the corresponding eigenfunction on the full grid,
/// normalized to unit `L^2(mu)` norm.
pub fn poincare_mode(mu: &GridMeasure) -> Result<(f64, GridFunction)> {
    if mu.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 grid points, got {}", mu.len())));
    }
    if support_gap(mu, DEFAULT_SUPPORT_THRESHOLD) {
        return Err(Error::DisconnectedSupport);
    }
    let reduced = Reduced::new(mu)?;
    let (lambda, phi) = reduced.spectral_gap()?;
    Ok((1.0 / lambda, GridFunction::new(reduced.pad(&phi))?))
}

fn smooth_restart(z: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope: f64 = rng.random_range(-1.0..1.0);
    let coeffs: Vec<(f64, f64)> = (1..=4).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    z.iter()
        .map(|&x| {
            let mut v = slope * x;
            for (k, (a, b)) in coeffs.iter().enumerate() {
                let freq = 0.5 * (k + 1) as f64;
                v += (a * (freq * x).cos() + b * (freq * x).sin()) / (k + 1) as f64;
            }
            v
        })
        .collect()
}

/// Lower bound on the log-Sobolev constant of `mu`.
pub fn estimate_cls(mu: &GridMeasure, opts: &EstimatorOptions) -> Result<LsiEstimate> {
    opts.validate()?;
    if mu.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 grid points, got {}", mu.len())));
    }
    if mu.weights().iter().filter(|&&w| w > 0.0).count() < 2 {
        return Err(Error::DegenerateMeasure { variance: 0.0 });
    }
    if support_gap(mu, opts.support_threshold) {
        return Ok(LsiEstimate {
            value: Extended::Unbounded,
            certificate: None,
            probes_tried: 0,
            iterations: 0,
            converged: true,
            ratio_history: Vec::new(),
        });
    }
    let reduced = Reduced::new(mu)?;
    let moments = mu.moments();
    let sigma = moments.variance.sqrt();
    let z: Vec<f64> = (0..reduced.len()).map(|i| (mu.point(reduced.offset + i) - moments.mean) / sigma).collect();

    let mut probes: Vec<Vec<f64>> = opts.probe_slopes.iter().map(|&a| z.iter().map(|x| a * x).collect()).collect();
    let (_, phi) = reduced.spectral_gap()?;
    probes.push(phi.iter().map(|p| SPECTRAL_PROBE_EPSILON * p).collect());
    for r in 0..opts.random_restarts {
        probes.push(smooth_restart(&z, opts.seed.wrapping_add(r as u64)));
    }
    let probes_tried = probes.len();

    let runs: Vec<Option<Run>> = probes.into_par_iter().map(|u0| reduced.ascend(u0, opts)).collect();
    for run in runs.iter().flatten() {
        log::debug!("probe run: start {:.6} end {:.6} after {} iterations", run.history[0], run.value, run.iterations);
    }
    // First maximum in probe order wins, independent of scheduling.
    let mut best: Option<Run> = None;
    for run in runs.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::Numerical("no probe produced a valid ratio".into()))?;
    let certificate = GridFunction::new(reduced.pad(&best.u))?;
    let value = ratio_of(mu.weights(), mu.spacing(), certificate.values())?;
    Ok(LsiEstimate {
        value: Extended::Finite(value),
        certificate: Some(certificate),
        probes_tried,
        iterations: best.iterations,
        converged: best.converged,
        ratio_history: best.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::lsi_ratio;
    use crate::measures::{convolve, gaussian, rademacher, uniform};

    #[test]
    fn support_gap_examples() {
        let g = gaussian(0.0, 1.0, -8.0, 8.0, 2049).unwrap();
        assert!(!support_gap(&g, DEFAULT_SUPPORT_THRESHOLD));
        let r = rademacher(1.0).unwrap();
        assert!(support_gap(&r, DEFAULT_SUPPORT_THRESHOLD));
        let fine = rademacher(1.0 / 64.0).unwrap();
        let smooth = convolve(&fine, &gaussian(0.0, 1.0, -8.0, 8.0, 1025).unwrap()).unwrap();
        assert!(!support_gap(&smooth, DEFAULT_SUPPORT_THRESHOLD));
    }

    #[test]
    fn rademacher_is_unbounded() {
        let r = rademacher(1.0).unwrap();
        let est = estimate_cls(&r, &EstimatorOptions::default()).unwrap();
        assert_eq!(est.value, Extended::Unbounded);
        assert!(matches!(poincare(&r), Err(Error::DisconnectedSupport)));
    }

    #[test]
    fn poincare_of_uniform_is_inverse_pi_squared() {
        let mu = uniform(0.0, 1.0, 1001).unwrap();
        let c = poincare(&mu).unwrap();
        let target = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);
        assert!((c - target).abs() < 1e-3, "{c}");
    }

    #[test]
    fn poincare_of_gaussian() {
        let g = gaussian(0.0, 1.0, -8.0, 8.0, 2049).unwrap();
        assert!((poincare(&g).unwrap() - 1.0).abs() < 0.01);
        let g4 = gaussian(0.0, 4.0, -16.0, 16.0, 2049).unwrap();
        assert!((poincare(&g4).unwrap() - 4.0).abs() < 0.05);
    }

    #[test]
    fn estimate_is_consistent_with_certificate() {
        let mu = gaussian(0.0, 1.0, -8.0, 8.0, 513).unwrap();
        let opts = EstimatorOptions { random_restarts: 1, ..Default::default() };
        let est = estimate_cls(&mu, &opts).unwrap();
        let value = est.value.finite().unwrap();
        let cert = est.certificate.as_ref().unwrap();
        assert!((lsi_ratio(&mu, cert).unwrap() - value).abs() < 1e-10);
        assert!(est.ratio_history.windows(2).all(|p| p[1] >= p[0]));
        assert_eq!(est.probes_tried, 6 + 1 + 1);
        assert!((0.98..=1.005).contains(&value), "{value}");
    }

    #[test]
    fn degenerate_inputs() {
        let p = GridMeasure::new(0.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(estimate_cls(&p, &EstimatorOptions::default()), Err(Error::DegenerateMeasure { .. })));
        let short = GridMeasure::new(0.0, 1.0, vec![0.5, 0.5]).unwrap();
        assert!(estimate_cls(&short, &EstimatorOptions::default()).is_err());
        let bad = EstimatorOptions { max_iterations: 0, ..Default::default() };
        assert!(estimate_cls(&short, &bad).is_err());
    }
}

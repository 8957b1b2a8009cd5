//! Probability measures on a uniform one-dimensional lattice.
//!
//! A [`GridMeasure`] is a finite set of weighted atoms at `origin + i * spacing`.
//! Densities are recovered as `weight / spacing`. Keeping everything on a
//! lattice makes convolution exact and affine pushforwards lossless, which is
//! what the CLT pipeline relies on.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Total mass that may be dropped from the two ends of a convolution.
pub const TAIL_PRUNE_MASS: f64 = 1e-12;

/// Output length above which convolution switches to the FFT.
pub const FFT_THRESHOLD: usize = 512;

const SPACING_RTOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-12;
const DEGENERATE_VARIANCE: f64 = 1e-14;

/// Probability weights on the grid `origin + i * spacing`, `i = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    origin: f64,
    spacing: f64,
    weights: Arc<[f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
}

impl GridMeasure {
    /// Builds a measure from raw non-negative weights, normalizing them to
    /// unit mass.
    pub fn new(origin: f64, spacing: f64, weights: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidParameter(format!("origin must be finite, got {origin}")));
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("measure needs at least one grid point".into()));
        }
        let mut total = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidParameter(format!("weight {i} is not finite")));
            }
            if w < 0.0 {
                return Err(Error::InvalidParameter(format!("weight {i} is negative ({w:e})")));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { origin, spacing, weights: weights.into() })
    }

    /// Unit mass at `x`.
    pub fn point_mass(x: f64) -> Self {
        Self { origin: x, spacing: 1.0, weights: vec![1.0].into() }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Coordinate of grid point `i`.
    pub fn point(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Coordinate of the last grid point.
    pub fn end(&self) -> f64 {
        self.point(self.len() - 1)
    }

    /// Density value at grid point `i`.
    pub fn density(&self, i: usize) -> f64 {
        self.weights[i] / self.spacing
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn moments(&self) -> MomentSummary {
        // Work in index units to avoid cancellation against a large origin.
        let mean_idx: f64 = self.weights.iter().enumerate().map(|(i, w)| w * i as f64).sum();
        let var_idx: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let d = i as f64 - mean_idx;
                w * d * d
            })
            .sum();
        MomentSummary { mean: self.origin + self.spacing * mean_idx, variance: var_idx * self.spacing * self.spacing }
    }

    /// Affine pushforward `x -> alpha * x + beta`. Exact: only the grid
    /// bookkeeping changes, weights are reversed when `alpha < 0`.
    pub fn affine(&self, alpha: f64, beta: f64) -> Result<Self> {
        if alpha == 0.0 {
            return Err(Error::ZeroScale);
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter("affine parameters must be finite".into()));
        }
        let spacing = alpha.abs() * self.spacing;
        if alpha > 0.0 {
            Ok(Self { origin: alpha * self.origin + beta, spacing, weights: self.weights.clone() })
        } else {
            let weights: Vec<f64> = self.weights.iter().rev().copied().collect();
            Ok(Self { origin: alpha * self.end() + beta, spacing, weights: weights.into() })
        }
    }

    /// Rescales to mean zero and unit variance.
    pub fn standardize(&self) -> Result<Self> {
        let m = self.moments();
        if m.variance <= DEGENERATE_VARIANCE {
            return Err(Error::DegenerateMeasure { variance: m.variance });
        }
        let sigma = m.variance.sqrt();
        self.affine(1.0 / sigma, -m.mean / sigma)
    }

    /// Drops grid points from both ends while the dropped mass stays within
    /// `tail_mass` in total, then renormalizes.
    pub fn prune_tails(&self, tail_mass: f64) -> Self {
        let budget = 0.5 * tail_mass;
        let w = &self.weights;
        let mut lo = 0;
        let mut acc = 0.0;
        while lo + 1 < w.len() && acc + w[lo] <= budget {
            acc += w[lo];
            lo += 1;
        }
        let mut hi = w.len();
        let mut acc = 0.0;
        while hi > lo + 1 && acc + w[hi - 1] <= budget {
            acc += w[hi - 1];
            hi -= 1;
        }
        if lo == 0 && hi == w.len() {
            return self.clone();
        }
        let kept = w[lo..hi].to_vec();
        let total: f64 = kept.iter().sum();
        Self {
            origin: self.point(lo),
            spacing: self.spacing,
            weights: kept.into_iter().map(|x| x / total).collect::<Vec<_>>().into(),
        }
    }
}

/// Samples `density` at `m` equispaced points of `[lo, hi]` and normalizes.
pub fn from_density<F>(density: F, lo: f64, hi: f64, m: usize) -> Result<GridMeasure>
where
    F: Fn(f64) -> f64,
{
    sample_density(density, lo, hi, m).map(|(mu, _)| mu)
}

/// Like [`from_density`], also returning the raw Riemann mass
/// `sum density(x_i) * h` before normalization.
pub fn sample_density<F>(density: F, lo: f64, hi: f64, m: usize) -> Result<(GridMeasure, f64)>
where
    F: Fn(f64) -> f64,
{
    if m < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 grid points, got {m}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid interval [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (m - 1) as f64;
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let x = lo + i as f64 * h;
        let d = density(x);
        if !d.is_finite() {
            return Err(Error::NonFiniteDensity { x });
        }
        if d < 0.0 {
            return Err(Error::InvalidParameter(format!("density is negative at x = {x}")));
        }
        weights.push(d * h);
    }
    let raw: f64 = weights.iter().sum();
    if raw <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok((GridMeasure::new(lo, h, weights)?, raw))
}

fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Discretized `N(mean, variance)` on `[lo, hi]` with `m` points.
pub fn gaussian(mean: f64, variance: f64, lo: f64, hi: f64, m: usize) -> Result<GridMeasure> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidParameter(format!("variance must be positive, got {variance}")));
    }
    let sigma = variance.sqrt();
    if lo > mean - 4.0 * sigma || hi < mean + 4.0 * sigma {
        return Err(Error::DomainTooNarrow { lo, hi });
    }
    if lo > mean - 6.0 * sigma || hi < mean + 6.0 * sigma {
        log::warn!("grid [{lo}, {hi}] covers less than mean +/- 6 sigma");
    }
    from_density(|x| normal_pdf(x, mean, variance), lo, hi, m)
}

/// One component of a Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn gaussian_mixture(components: &[MixtureComponent], lo: f64, hi: f64, m: usize) -> Result<GridMeasure> {
    if components.is_empty() {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    for c in components {
        if !(c.weight >= 0.0 && c.variance > 0.0) {
            return Err(Error::InvalidParameter(format!("bad mixture component {c:?}")));
        }
    }
    from_density(|x| components.iter().map(|c| c.weight * normal_pdf(x, c.mean, c.variance)).sum(), lo, hi, m)
}

/// Uniform measure on `m` points of `[lo, hi]`.
pub fn uniform(lo: f64, hi: f64, m: usize) -> Result<GridMeasure> {
    from_density(|_| 1.0, lo, hi, m)
}

/// Atomic measure with the given masses at lattice positions.
pub fn atoms(positions: &[f64], masses: &[f64], spacing: f64) -> Result<GridMeasure> {
    if positions.len() != masses.len() || positions.is_empty() {
        return Err(Error::InvalidParameter("positions and masses must be non-empty and of equal length".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
    }
    let total: f64 = masses.iter().sum();
    if masses.iter().any(|&m| !(m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("masses must be non-negative and sum to 1".into()));
    }
    let min = positions.iter().copied().fold(f64::INFINITY, f64::min);
    let mut indexed = Vec::with_capacity(positions.len());
    for &p in positions {
        let k = ((p - min) / spacing).round();
        if (p - (min + k * spacing)).abs() > 1e-9 * spacing {
            return Err(Error::OffLattice { position: p, spacing });
        }
        indexed.push(k as usize);
    }
    let len = indexed.iter().max().copied().unwrap_or(0) + 1;
    let mut weights = vec![0.0; len];
    for (&k, &m) in indexed.iter().zip(masses) {
        weights[k] += m;
    }
    GridMeasure::new(min, spacing, weights)
}

/// Symmetric two-point law on `{-1, +1}` with grid spacing `spacing`
/// (so `1 / spacing` should be an integer).
pub fn rademacher(spacing: f64) -> Result<GridMeasure> {
    atoms(&[-1.0, 1.0], &[0.5, 0.5], spacing)
}

fn check_spacing(mu: &GridMeasure, nu: &GridMeasure) -> Result<()> {
    let (a, b) = (mu.spacing, nu.spacing);
    // A point mass carries no real spacing.
    if mu.len() == 1 || nu.len() == 1 {
        return Ok(());
    }
    if (a - b).abs() > SPACING_RTOL * a.max(b) {
        return Err(Error::SpacingMismatch { left: a, right: b });
    }
    Ok(())
}

fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn fft_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(size, Complex64::new(0.0, 0.0));
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fb.resize(size, Complex64::new(0.0, 0.0));
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    let mut out: Vec<f64> = fa[..len].iter().map(|c| c.re * scale).collect();
    // Round-off floor of the transform; anything below it is noise.
    let max = out.iter().copied().fold(0.0, f64::max);
    let floor = 16.0 * f64::EPSILON * (size as f64).log2() * max;
    for v in &mut out {
        if *v < floor {
            *v = 0.0;
        }
    }
    out
}

/// Weight sequence convolution, direct for short outputs, FFT otherwise.
pub fn convolve_weights(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    if len > FFT_THRESHOLD && a.len().min(b.len()) > 32 {
        fft_convolution(a, b)
    } else {
        direct_convolution(a, b)
    }
}

/// Law of the sum of independent draws from `mu` and `nu`. No pruning.
pub fn convolve(mu: &GridMeasure, nu: &GridMeasure) -> Result<GridMeasure> {
    check_spacing(mu, nu)?;
    let spacing = if mu.len() == 1 { nu.spacing } else { mu.spacing };
    GridMeasure::new(mu.origin + nu.origin, spacing, convolve_weights(&mu.weights, &nu.weights))
}

/// [`convolve`] followed by [`GridMeasure::prune_tails`].
pub fn convolve_pruned(mu: &GridMeasure, nu: &GridMeasure, tail_mass: f64) -> Result<GridMeasure> {
    Ok(convolve(mu, nu)?.prune_tails(tail_mass))
}

/// n-fold self-convolution at the base spacing, pruning after each step.
pub fn self_convolve(mu: &GridMeasure, n: usize) -> Result<GridMeasure> {
    if n == 0 {
        return Err(Error::InvalidParameter("convolution power must be at least 1".into()));
    }
    let mut acc = mu.clone();
    for _ in 1..n {
        acc = convolve_pruned(&acc, mu, TAIL_PRUNE_MASS)?;
    }
    Ok(acc)
}

/// Law of `(X_1 + ... + X_n) / sqrt(n)` for i.i.d. `X_i ~ mu`: convolve at
/// the base spacing, then rescale once.
pub fn clt_measure(mu: &GridMeasure, n: usize) -> Result<GridMeasure> {
    self_convolve(mu, n)?.affine(1.0 / (n as f64).sqrt(), 0.0)
}

/// True when the weights of `mu` sum to one within the library tolerance.
pub fn is_normalized(mu: &GridMeasure) -> bool {
    (mu.total_mass() - 1.0).abs() <= MASS_TOL
}

//! Entropy, Dirichlet energy, the log-Sobolev ratio, quadratic Wasserstein
//! distance and the sub-Gaussian tail check, all evaluated on grid measures.

use crate::error::{Error, Result};
use crate::measures::GridMeasure;

const NEGATIVE_TOL: f64 = 1e-13;
const MIN_ENERGY: f64 = 1e-300;
const LIPSCHITZ_TOL: f64 = 1e-9;

/// Values of a function at the grid points of a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid function value {i} is not finite")));
        }
        Ok(Self { values })
    }

    /// Samples `f` at the grid points of `mu`.
    pub fn from_fn<F: Fn(f64) -> f64>(mu: &GridMeasure, f: F) -> Result<Self> {
        Self::new(mu.points().map(f).collect())
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Self { values: vec![c; len] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }
}

fn check_len(mu: &GridMeasure, len: usize) -> Result<()> {
    if mu.len() != len {
        return Err(Error::LengthMismatch { expected: mu.len(), got: len });
    }
    Ok(())
}

/// `sum w g log g - G log G` with `G = sum w g` and `0 log 0 = 0`.
pub fn entropy_functional(mu: &GridMeasure, g: &GridFunction) -> Result<f64> {
    check_len(mu, g.len())?;
    entropy_of(mu.weights(), g.values())
}

pub(crate) fn entropy_of(weights: &[f64], g: &[f64]) -> Result<f64> {
    for (i, &v) in g.iter().enumerate() {
        if v < -NEGATIVE_TOL {
            return Err(Error::NegativeArgument { index: i, value: v });
        }
    }
    let mean: f64 = weights.iter().zip(g).map(|(w, &v)| w * v.max(0.0)).sum();
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let log_mean = mean.ln();
    // Sum of w * (g log(g / G) - g + G): every term is non-negative.
    let ent: f64 = weights
        .iter()
        .zip(g)
        .map(|(w, &v)| {
            let v = v.max(0.0);
            let t = if v > 0.0 { v * (v.ln() - log_mean) - v + mean } else { mean };
            w * t
        })
        .sum();
    Ok(if ent < 0.0 && ent > -NEGATIVE_TOL { 0.0 } else { ent })
}

/// Forward-difference energy `sum ((f_{i+1} - f_i) / h)^2 (w_i + w_{i+1}) / 2`.
pub fn dirichlet(mu: &GridMeasure, f: &GridFunction) -> Result<f64> {
    check_len(mu, f.len())?;
    if mu.len() < 2 {
        return Err(Error::SingletonGrid);
    }
    Ok(dirichlet_of(mu.weights(), mu.spacing(), f.values()))
}

pub(crate) fn dirichlet_of(weights: &[f64], h: f64, f: &[f64]) -> f64 {
    let inv_h2 = 1.0 / (h * h);
    weights
        .windows(2)
        .zip(f.windows(2))
        .map(|(w, f)| {
            let d = f[1] - f[0];
            d * d * 0.5 * (w[0] + w[1])
        })
        .sum::<f64>()
        * inv_h2
}

/// `Ent(e^u) / (2 * dirichlet(e^{u/2}))`, the log-Sobolev ratio of the test
/// function `f = e^{u/2}`.
pub fn lsi_ratio(mu: &GridMeasure, u: &GridFunction) -> Result<f64> {
    check_len(mu, u.len())?;
    if mu.len() < 2 {
        return Err(Error::SingletonGrid);
    }
    ratio_of(mu.weights(), mu.spacing(), u.values())
}

pub(crate) fn ratio_of(weights: &[f64], h: f64, u: &[f64]) -> Result<f64> {
    let parts = LogParts::new(weights, h, u);
    if !(parts.energy > MIN_ENERGY) {
        return Err(Error::DegenerateTestFunction);
    }
    Ok(parts.entropy / (2.0 * parts.energy))
}

/// `delta e^delta - e^delta + 1`, accurate for small `delta`.
fn entropy_kernel(delta: f64) -> f64 {
    if delta.abs() < 1e-2 {
        // sum_{k >= 2} (k - 1) delta^k / k!
        let d2 = delta * delta;
        d2 * (0.5 + delta * (1.0 / 3.0 + delta * (1.0 / 8.0 + delta * (1.0 / 30.0 + delta * (1.0 / 144.0)))))
    } else {
        delta * delta.exp() - delta.exp_m1()
    }
}

/// Beyond this gap between `max u` and `max (u_i + log w_i)` the weighted
/// mass of `e^{u - max u}` is close to underflow.
const MAX_SHIFT_GAP: f64 = 500.0;

/// Entropy and Dirichlet energy of `f = e^{(u - s) / 2}` computed in the
/// log domain, so that nearly constant exponents keep full relative
/// precision. Normally `s = max u`; when `u` peaks where the weights are
/// negligible `s = max (u_i + log w_i)` instead.
struct LogParts {
    /// `v = u - s`
    v: Vec<f64>,
    f: Vec<f64>,
    log_mass: f64,
    entropy: f64,
    energy: f64,
}

impl LogParts {
    fn new(weights: &[f64], h: f64, u: &[f64]) -> Self {
        let peak = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pivot =
            weights.iter().zip(u).filter(|(w, _)| **w > 0.0).map(|(w, x)| x + w.ln()).fold(f64::NEG_INFINITY, f64::max);
        let top = if peak - pivot < MAX_SHIFT_GAP { peak } else { pivot };
        let v: Vec<f64> = u.iter().map(|x| x - top).collect();
        let f: Vec<f64> = v.iter().map(|x| (0.5 * x).exp()).collect();
        let total: f64 = weights.iter().sum();
        let log_mass = {
            let direct: f64 = weights.iter().zip(&v).map(|(w, x)| w * x.exp()).sum();
            if direct < 0.5 * total {
                direct.ln()
            } else {
                // Close to the total, the excess keeps the digits that
                // `direct` would lose.
                let excess: f64 = weights.iter().zip(&v).map(|(w, x)| w * x.exp_m1()).sum();
                total.ln() + (excess / total).ln_1p()
            }
        };
        let mass = log_mass.exp();
        let entropy = mass * weights.iter().zip(&v).map(|(w, x)| w * entropy_kernel(x - log_mass)).sum::<f64>();
        let inv_h2 = 1.0 / (h * h);
        let energy = weights
            .windows(2)
            .zip(v.windows(2).zip(f.windows(2)))
            .map(|(w, (v, f))| {
                let d = f[0] * (0.5 * (v[1] - v[0])).exp_m1();
                d * d * 0.5 * (w[0] + w[1])
            })
            .sum::<f64>()
            * inv_h2;
        Self { v, f, log_mass, entropy: entropy.max(0.0), energy }
    }
}

/// Ratio and its gradient with respect to the exponent `u`.
pub(crate) fn ratio_and_gradient(weights: &[f64], h: f64, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let parts = LogParts::new(weights, h, u);
    let energy = parts.energy;
    if !(energy > MIN_ENERGY) {
        return Err(Error::DegenerateTestFunction);
    }
    let ratio = parts.entropy / (2.0 * energy);
    let (v, f) = (&parts.v, &parts.f);
    let inv_h2 = 1.0 / (h * h);
    let m = u.len();
    let diff = |i: usize, j: usize| f[i] * (0.5 * (v[j] - v[i])).exp_m1();
    let mut grad = vec![0.0; m];
    for i in 0..m {
        // d Ent / d u_i
        let d_ent = weights[i] * f[i] * f[i] * (v[i] - parts.log_mass);
        // d E / d u_i = f_i * sum over incident edges a_e (f_i - f_j)
        let mut flux = 0.0;
        if i > 0 {
            flux -= 0.5 * (weights[i - 1] + weights[i]) * diff(i, i - 1);
        }
        if i + 1 < m {
            flux -= 0.5 * (weights[i] + weights[i + 1]) * diff(i, i + 1);
        }
        let d_energy = f[i] * flux * inv_h2;
        grad[i] = (d_ent - 2.0 * ratio * d_energy) / (2.0 * energy);
    }
    Ok((ratio, grad))
}

/// Quadratic Wasserstein distance between two grid measures via the
/// quantile coupling. The grids need not agree.
pub fn wasserstein2(mu: &GridMeasure, nu: &GridMeasure) -> f64 {
    let a: Vec<(f64, f64)> = mu.points().zip(mu.weights()).filter(|(_, &w)| w > 0.0).map(|(x, &w)| (x, w)).collect();
    let b: Vec<(f64, f64)> = nu.points().zip(nu.weights()).filter(|(_, &w)| w > 0.0).map(|(x, &w)| (x, w)).collect();
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    // Any mass left on one side when the other runs out is round-off.
    while i < a.len() && j < b.len() {
        let dq = ra.min(rb);
        let d = a[i].0 - b[j].0;
        cost += dq * d * d;
        ra -= dq;
        rb -= dq;
        if ra <= 0.0 {
            i += 1;
            ra = a.get(i).map_or(0.0, |p| p.1);
        }
        if rb <= 0.0 {
            j += 1;
            rb = b.get(j).map_or(0.0, |p| p.1);
        }
    }
    cost.max(0.0).sqrt()
}

/// Largest ratio `mu(f >= E f + t) / exp(-t^2 / (2c))` over `t_values`.
/// A result at most 1 certifies the sub-Gaussian tail bound with constant
/// `c` for the supplied `t` values.
pub fn herbst_margin(mu: &GridMeasure, f: &GridFunction, c: f64, t_values: &[f64]) -> Result<f64> {
    check_len(mu, f.len())?;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("tail constant must be positive, got {c}")));
    }
    if t_values.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("tail offsets must be positive".into()));
    }
    let h = mu.spacing();
    let values = f.values();
    let slope = values.windows(2).map(|p| (p[1] - p[0]).abs() / h).fold(0.0, f64::max);
    if slope > 1.0 + LIPSCHITZ_TOL {
        return Err(Error::NotLipschitz { slope });
    }
    let mean: f64 = mu.weights().iter().zip(values).map(|(w, v)| w * v).sum();
    let mut margin: f64 = 0.0;
    for &t in t_values {
        let tail: f64 = mu.weights().iter().zip(values).filter(|(_, &v)| v >= mean + t).map(|(w, _)| w).sum();
        margin = margin.max(tail * (t * t / (2.0 * c)).exp());
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{atoms, gaussian};

    fn std_gaussian() -> GridMeasure {
        gaussian(0.0, 1.0, -8.0, 8.0, 2049).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let g = std_gaussian();
        let c = GridFunction::constant(g.len(), 2.5);
        assert!(entropy_functional(&g, &c).unwrap().abs() < 1e-15);

        let two = atoms(&[0.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        let e = entropy_functional(&two, &GridFunction::new(vec![1.0, 3.0]).unwrap()).unwrap();
        let direct = 0.5 * 3.0 * 3f64.ln() - 2.0 * 2f64.ln();
        assert!((e - direct).abs() < 1e-14);
        assert!((e - 0.26162).abs() < 1e-5);

        // Ent_gamma(e^{aX}) = (a^2 / 2) e^{a^2 / 2} at a = 1.
        let exp = GridFunction::from_fn(&g, f64::exp).unwrap();
        let e = entropy_functional(&g, &exp).unwrap();
        assert!((e - 0.5 * 0.5f64.exp()).abs() < 5e-3, "{e}");

        let neg = GridFunction::new(vec![1.0, -1e-3]).unwrap();
        assert!(matches!(entropy_functional(&two, &neg), Err(Error::NegativeArgument { index: 1, .. })));
    }

    #[test]
    fn dirichlet_examples() {
        let g = std_gaussian();
        assert_eq!(dirichlet(&g, &GridFunction::constant(g.len(), 1.0)).unwrap(), 0.0);
        let lin = dirichlet(&g, &GridFunction::from_fn(&g, |x| x).unwrap()).unwrap();
        assert!((lin - 1.0).abs() < 1e-10, "{lin}");
        let quad = dirichlet(&g, &GridFunction::from_fn(&g, |x| x * x).unwrap()).unwrap();
        assert!((quad - 4.0).abs() < 1e-2, "{quad}");
        let single = atoms(&[0.0], &[1.0], 1.0).unwrap();
        assert_eq!(dirichlet(&single, &GridFunction::constant(1, 0.0)), Err(Error::SingletonGrid));
    }

    #[test]
    fn ratio_examples() {
        let g = std_gaussian();
        let r = lsi_ratio(&g, &GridFunction::from_fn(&g, |x| x).unwrap()).unwrap();
        assert!((r - 1.0).abs() < 5e-3, "{r}");

        let g4 = gaussian(0.0, 4.0, -16.0, 16.0, 2049).unwrap();
        let r = lsi_ratio(&g4, &GridFunction::from_fn(&g4, |x| 0.5 * x).unwrap()).unwrap();
        assert!((r - 4.0).abs() < 5e-2, "{r}");

        let flat = GridFunction::constant(g.len(), 0.3);
        assert_eq!(lsi_ratio(&g, &flat), Err(Error::DegenerateTestFunction));
    }

    #[test]
    fn gaussian_equality_family() {
        // Exponential test functions are extremal for the Gaussian: ratio = variance.
        for (variance, lim) in [(1.0, 8.0), (0.25, 4.0), (4.0, 16.0)] {
            let mu = gaussian(0.0, variance, -lim, lim, 2049).unwrap();
            let sigma = f64::sqrt(variance);
            for a_sigma in [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0] {
                let a = a_sigma / sigma;
                let r = lsi_ratio(&mu, &GridFunction::from_fn(&mu, |x| a * x).unwrap()).unwrap();
                assert!((r / variance - 1.0).abs() < 5e-3, "var {variance} a {a}: {r}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mu = gaussian(0.3, 0.8, -5.0, 5.0, 41).unwrap();
        let u: Vec<f64> = mu.points().map(|x| (1.3 * x).sin() + 0.2 * x * x).collect();
        let (r, grad) = ratio_and_gradient(mu.weights(), mu.spacing(), &u).unwrap();
        assert!((r - ratio_of(mu.weights(), mu.spacing(), &u).unwrap()).abs() < 1e-14);
        for i in [0, 7, 20, 33, 40] {
            let eps = 1e-6;
            let mut up = u.clone();
            up[i] += eps;
            let mut dn = u.clone();
            dn[i] -= eps;
            let fd = (ratio_of(mu.weights(), mu.spacing(), &up).unwrap()
                - ratio_of(mu.weights(), mu.spacing(), &dn).unwrap())
                / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-7 * (1.0 + fd.abs()), "i={i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn wasserstein_examples() {
        let g = std_gaussian();
        assert_eq!(wasserstein2(&g, &g), 0.0);
        let shifted = g.affine(1.0, 0.7).unwrap();
        assert!((wasserstein2(&g, &shifted) - 0.7).abs() < 1e-10);
        let a = GridMeasure::point_mass(-1.5);
        let b = GridMeasure::point_mass(2.0);
        assert!((wasserstein2(&a, &b) - 3.5).abs() < 1e-15);
    }

    #[test]
    fn herbst_examples() {
        let g = std_gaussian();
        let id = GridFunction::from_fn(&g, |x| x).unwrap();
        let ts: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
        assert!(herbst_margin(&g, &id, 1.0, &ts).unwrap() <= 1.0);
        let flat = GridFunction::constant(g.len(), 4.0);
        assert_eq!(herbst_margin(&g, &flat, 1.0, &ts).unwrap(), 0.0);
        let steep = GridFunction::from_fn(&g, |x| 2.0 * x).unwrap();
        assert!(matches!(herbst_margin(&g, &steep, 1.0, &ts), Err(Error::NotLipschitz { .. })));
    }

    #[test]
    fn ratio_with_mass_far_from_the_peak() {
        // e^u peaks at the grid ends where the weights are tiny.
        let g = std_gaussian();
        for a in [0.3, 2.0, 4.0] {
            let u = GridFunction::from_fn(&g, |x| a * x * x).unwrap();
            let e = entropy_functional(&g, &u.map(f64::exp).unwrap()).unwrap();
            let d = dirichlet(&g, &u.map(|v| (0.5 * v).exp()).unwrap()).unwrap();
            let r = lsi_ratio(&g, &u).unwrap();
            assert!((r - e / (2.0 * d)).abs() < 1e-9 * r, "a={a}: {r} vs {}", e / (2.0 * d));
        }
    }
}

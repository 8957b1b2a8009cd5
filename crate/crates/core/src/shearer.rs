//! Relative entropy on finite product spaces: marginals, divergences,
//! the Shearer margin and the entropy decomposition identity, all by
//! explicit enumeration.
//!
//! Coordinates are numbered `1..=n` and subsets use the masks of
//! [`crate::covers`]. Tensors are stored row-major with the last
//! coordinate varying fastest.

use rand::Rng;

use crate::covers::{full_mask, CoverCoefficients, Mask, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::extended::Extended;

pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    shape: Vec<usize>,
    probs: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 16 {
        return Err(Error::ShapeMismatch(format!("need 1..=16 coordinates, got {}", shape.len())));
    }
    if shape.contains(&0) {
        return Err(Error::ShapeMismatch("alphabet sizes must be at least 1".into()));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &k| acc.checked_mul(k))
        .ok_or_else(|| Error::ShapeMismatch("tensor too large".into()))
}

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} has invalid entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidParameter(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Row-major strides for `shape`.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Index into the tensor over the coordinates in `mask` for each flat
/// index of the full tensor.
fn projected_indices(shape: &[usize], mask: Mask) -> Vec<usize> {
    let full_strides = strides(shape);
    let kept: Vec<usize> = (0..shape.len()).filter(|b| mask & (1 << b) != 0).collect();
    let kept_shape: Vec<usize> = kept.iter().map(|&b| shape[b]).collect();
    let kept_strides = strides(&kept_shape);
    let total: usize = shape.iter().product();
    (0..total)
        .map(|flat| kept.iter().zip(&kept_strides).map(|(&b, &s)| (flat / full_strides[b]) % shape[b] * s).sum())
        .collect()
}

fn sub_shape(shape: &[usize], mask: Mask) -> Vec<usize> {
    (0..shape.len()).filter(|b| mask & (1 << b) != 0).map(|b| shape[b]).collect()
}

impl FiniteJoint {
    pub fn new(shape: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let total = check_shape(&shape)?;
        if probs.len() != total {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} needs {total} entries, got {}", probs.len())));
        }
        check_distribution(&probs, "joint")?;
        Ok(Self { shape, probs })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductReference {
    factors: Vec<Vec<f64>>,
}

impl ProductReference {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        let shape: Vec<usize> = factors.iter().map(Vec::len).collect();
        check_shape(&shape)?;
        for (i, f) in factors.iter().enumerate() {
            check_distribution(f, &format!("factor {}", i + 1))?;
        }
        Ok(Self { factors })
    }

    pub fn uniform(shape: &[usize]) -> Result<Self> {
        Self::new(shape.iter().map(|&k| vec![1.0 / k as f64; k]).collect())
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Vec::len).collect()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.factors.iter().flatten().all(|&p| p > 0.0)
    }

    /// The product over the coordinates in `mask`.
    pub fn restrict(&self, mask: Mask) -> Result<Self> {
        if mask == 0 {
            return Err(Error::EmptySubset);
        }
        if mask > full_mask(self.factors.len()) {
            return Err(Error::ShapeMismatch(format!("subset {mask:#b} outside [{}]", self.factors.len())));
        }
        Ok(Self {
            factors: (0..self.factors.len())
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| self.factors[b].clone())
                .collect(),
        })
    }

    /// The product measure as an explicit tensor.
    pub fn joint(&self) -> FiniteJoint {
        let shape = self.shape();
        let st = strides(&shape);
        let total: usize = shape.iter().product();
        let probs = (0..total)
            .map(|flat| self.factors.iter().enumerate().map(|(b, f)| f[(flat / st[b]) % shape[b]]).product())
            .collect();
        FiniteJoint { shape, probs }
    }
}

pub fn marginal(p: &FiniteJoint, s: Mask) -> Result<FiniteJoint> {
    if s == 0 {
        return Err(Error::EmptySubset);
    }
    if s > full_mask(p.n()) {
        return Err(Error::ShapeMismatch(format!("subset {s:#b} outside [{}]", p.n())));
    }
    let shape = sub_shape(&p.shape, s);
    let mut probs = vec![0.0; shape.iter().product()];
    for (flat, idx) in projected_indices(&p.shape, s).into_iter().enumerate() {
        probs[idx] += p.probs[flat];
    }
    Ok(FiniteJoint { shape, probs })
}

/// `D(p‖q) = Σ p ln(p/q)`, infinite when `p` charges a `q`-null cell.
pub fn kl(p: &FiniteJoint, q: &FiniteJoint) -> Result<Extended> {
    if p.shape != q.shape {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape, q.shape)));
    }
    let mut sum = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(Extended::Unbounded);
            }
            sum += a * (a / b).ln();
        }
    }
    // Round-off can push an exact zero slightly negative.
    Ok(Extended::Finite(sum.max(0.0)))
}

pub fn kl_product(p: &FiniteJoint, q: &ProductReference) -> Result<Extended> {
    if p.shape != q.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape, q.shape())));
    }
    kl(p, &q.joint())
}

/// `D(P‖Q) − Σ_S c_S D(P_S‖Q_S)`, non-negative by Shearer's inequality.
pub fn shearer_margin(p: &FiniteJoint, q: &ProductReference, c: &CoverCoefficients) -> Result<f64> {
    if p.shape != q.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape, q.shape())));
    }
    if c.n() != p.n() {
        return Err(Error::ShapeMismatch(format!("coefficients on [{}] vs {} coordinates", c.n(), p.n())));
    }
    if let Some((i, &load)) = c.loads().iter().enumerate().find(|(_, l)| **l - 1.0 > FEASIBILITY_TOL) {
        return Err(Error::InfeasibleC { element: i + 1, load });
    }
    if !q.is_strictly_positive() {
        return Err(Error::InfiniteDivergence);
    }
    let whole = finite_kl(p, q, full_mask(p.n()))?;
    let mut weighted = 0.0;
    for (mask, coef) in c.iter() {
        if mask != 0 {
            weighted += coef * finite_kl(p, q, mask)?;
        }
    }
    Ok(whole - weighted)
}

fn finite_kl(p: &FiniteJoint, q: &ProductReference, mask: Mask) -> Result<f64> {
    let ps = marginal(p, mask)?;
    kl(&ps, &q.restrict(mask)?.joint())?.finite().ok_or(Error::InfiniteDivergence)
}

/// `Σ w g ln g − (Σ w g) ln(Σ w g)` for a probability vector `w`.
fn ent(w: &[f64], g: &[f64]) -> f64 {
    let mean: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    w.iter().zip(g).map(|(a, b)| a * xlogx(*b)).sum::<f64>() - xlogx(mean)
}

/// `|Ent(g(X)) − E[Ent(g(X)|Y)] − Ent(E[g(X)|Y])|` where `X` is the set of
/// coordinates in `x_mask`, `Y` the rest, and `g` a non-negative tensor
/// over `X` in row-major order.
pub fn ent_decomposition_residual(p: &FiniteJoint, x_mask: Mask, g: &[f64]) -> Result<f64> {
    if x_mask == 0 {
        return Err(Error::EmptySubset);
    }
    let full = full_mask(p.n());
    if x_mask > full {
        return Err(Error::ShapeMismatch(format!("subset {x_mask:#b} outside [{}]", p.n())));
    }
    let x_shape = sub_shape(&p.shape, x_mask);
    let nx: usize = x_shape.iter().product();
    if g.len() != nx {
        return Err(Error::ShapeMismatch(format!("g needs {nx} entries, got {}", g.len())));
    }
    if let Some(v) = g.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("g has invalid entry {v}")));
    }
    let y_mask = full ^ x_mask;
    let xi = projected_indices(&p.shape, x_mask);
    let yi = if y_mask == 0 { vec![0; p.probs.len()] } else { projected_indices(&p.shape, y_mask) };
    let ny = yi.iter().max().map_or(1, |m| m + 1);

    // Joint table p(x, y) as rows indexed by y.
    let mut table = vec![vec![0.0; nx]; ny];
    for (flat, &pr) in p.probs.iter().enumerate() {
        table[yi[flat]][xi[flat]] += pr;
    }
    let px: Vec<f64> = (0..nx).map(|x| table.iter().map(|row| row[x]).sum()).collect();
    let lhs = ent(&px, g);

    let mut py = vec![0.0; ny];
    let mut cond_mean = vec![0.0; ny];
    let mut expected_cond_ent = 0.0;
    for (y, row) in table.iter().enumerate() {
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ZeroConditional);
        }
        let cond: Vec<f64> = row.iter().map(|v| v / mass).collect();
        py[y] = mass;
        cond_mean[y] = cond.iter().zip(g).map(|(a, b)| a * b).sum();
        expected_cond_ent += mass * ent(&cond, g);
    }
    let rhs = expected_cond_ent + ent(&py, &cond_mean);
    Ok((lhs - rhs).abs())
}

/// Random joint with entries drawn uniformly and normalized. Entries are
/// bounded away from 0, so the result is strictly positive.
pub fn random_joint<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<FiniteJoint> {
    let total = check_shape(shape)?;
    let probs = normalized((0..total).map(|_| rng.random_range(1e-3..1.0)).collect());
    FiniteJoint::new(shape.to_vec(), probs)
}

/// Random strictly positive product reference.
pub fn random_product<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<ProductReference> {
    check_shape(shape)?;
    ProductReference::new(
        shape.iter().map(|&k| normalized((0..k).map(|_| rng.random_range(0.05..1.0)).collect())).collect(),
    )
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

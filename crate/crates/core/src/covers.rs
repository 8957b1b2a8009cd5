//! Fractional covers of the ground set `[n] = {1, .., n}`.
//!
//! Subsets are bitmasks: bit `i - 1` holds element `i`. Coefficient vectors
//! are dense over all `2^n` masks. The empty set has a slot because the
//! complement map sends `[n]` to it, but it never enters a covering
//! constraint and its value is always taken to be zero.

use rand::Rng;

use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::simplex::{minimize_covering, LpOutcome};

pub const MAX_ELEMENTS: usize = 16;
pub const MAX_LP_ELEMENTS: usize = 10;
pub const FEASIBILITY_TOL: f64 = 1e-12;

pub type Mask = u32;

/// Mask for a list of 1-based elements.
pub fn subset(elements: &[usize]) -> Mask {
    elements.iter().fold(0, |m, &i| m | (1 << (i - 1)))
}

pub fn full_mask(n: usize) -> Mask {
    ((1u64 << n) - 1) as Mask
}

/// Sorted 1-based elements of a mask.
pub fn elements(mask: Mask) -> Vec<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect()
}

fn check_n(n: usize, cap: usize) -> Result<()> {
    if n == 0 || n > cap {
        return Err(Error::InvalidParameter(format!("ground-set size {n} outside 1..={cap}")));
    }
    Ok(())
}

fn check_mask(n: usize, mask: Mask) -> Result<()> {
    if mask > full_mask(n) {
        return Err(Error::InvalidParameter(format!("subset mask {mask:#b} outside [{n}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverCoefficients {
    n: usize,
    entries: Vec<f64>,
}

impl CoverCoefficients {
    pub fn zeros(n: usize) -> Result<Self> {
        check_n(n, MAX_ELEMENTS)?;
        Ok(Self { n, entries: vec![0.0; 1 << n] })
    }

    pub fn from_entries<I: IntoIterator<Item = (Mask, f64)>>(n: usize, entries: I) -> Result<Self> {
        let mut out = Self::zeros(n)?;
        for (mask, value) in entries {
            out.set(mask, value)?;
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, mask: Mask) -> f64 {
        self.entries.get(mask as usize).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, mask: Mask, value: f64) -> Result<()> {
        check_mask(self.n, mask)?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidParameter(format!("coefficient {value} for {mask:#b} must be finite and >= 0")));
        }
        self.entries[mask as usize] = value;
        Ok(())
    }

    /// Non-zero entries in increasing mask order.
    pub fn iter(&self) -> impl Iterator<Item = (Mask, f64)> + '_ {
        self.entries.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(m, v)| (m as Mask, *v))
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// `Σ_{S∋i} r_S` for each element `i` (index `i - 1`).
    pub fn loads(&self) -> Vec<f64> {
        let mut loads = vec![0.0; self.n];
        for (mask, v) in self.iter() {
            for (b, load) in loads.iter_mut().enumerate() {
                if mask & (1 << b) != 0 {
                    *load += v;
                }
            }
        }
        loads
    }

    pub fn is_feasible_r(&self) -> bool {
        self.loads().iter().all(|l| l - 1.0 >= -FEASIBILITY_TOL)
    }

    pub fn is_feasible_c(&self) -> bool {
        self.loads().iter().all(|l| l - 1.0 <= FEASIBILITY_TOL)
    }

    fn scaled_complement(&self, divisor: f64) -> Self {
        let full = full_mask(self.n) as usize;
        let mut entries = vec![0.0; self.entries.len()];
        for (mask, v) in self.entries.iter().enumerate() {
            entries[full ^ mask] = v / divisor;
        }
        Self { n: self.n, entries }
    }
}

/// `r_{{i}} = 1` for every element.
pub fn singleton_cover(n: usize) -> Result<CoverCoefficients> {
    CoverCoefficients::from_entries(n, (0..n).map(|b| (1 << b, 1.0)))
}

/// `r_{[n]} = 1`.
pub fn full_cover(n: usize) -> Result<CoverCoefficients> {
    CoverCoefficients::from_entries(n, [(full_mask(n), 1.0)])
}

/// `r = 1/(n-1)` on every `[n] ∖ {i}`.
pub fn leave_one_out_cover(n: usize) -> Result<CoverCoefficients> {
    if n < 2 {
        return Err(Error::InvalidParameter("leave-one-out cover needs n >= 2".into()));
    }
    let full = full_mask(n);
    CoverCoefficients::from_entries(n, (0..n).map(|b| (full ^ (1 << b), 1.0 / (n - 1) as f64)))
}

/// Random non-negative coefficients on a random family of non-empty
/// subsets, rescaled so the least-covered element has slack exactly 0.
pub fn random_feasible_cover<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CoverCoefficients> {
    check_n(n, MAX_ELEMENTS)?;
    let full = full_mask(n);
    let mut r = CoverCoefficients::zeros(n)?;
    let count = rng.random_range(1..=(2 * n).min(full as usize));
    for _ in 0..count {
        let mask = rng.random_range(1..=full);
        let v: f64 = rng.random_range(0.05..2.0);
        r.entries[mask as usize] += v;
    }
    for b in 0..n {
        if r.loads()[b] == 0.0 {
            r.entries[1 << b] += rng.random_range(0.05..2.0);
        }
    }
    let min_load = r.loads().into_iter().fold(f64::INFINITY, f64::min);
    for v in &mut r.entries {
        *v /= min_load;
    }
    Ok(r)
}

/// Random non-negative coefficients on non-empty subsets, rescaled so the
/// most loaded element has load exactly 1.
pub fn random_feasible_c<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CoverCoefficients> {
    check_n(n, MAX_ELEMENTS)?;
    let full = full_mask(n);
    let mut c = CoverCoefficients::zeros(n)?;
    for _ in 0..rng.random_range(1..=(2 * n).min(full as usize)) {
        let mask = rng.random_range(1..=full);
        c.entries[mask as usize] += rng.random_range(0.05..2.0);
    }
    let max_load = c.loads().into_iter().fold(0.0, f64::max);
    for v in &mut c.entries {
        *v /= max_load;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlackReport {
    /// `Σ_{S∋i} r_S − 1`, index `i - 1`.
    pub slacks: Vec<f64>,
    pub feasible: bool,
}

pub fn check_cover(r: &CoverCoefficients) -> SlackReport {
    let slacks: Vec<f64> = r.loads().into_iter().map(|l| l - 1.0).collect();
    let feasible = slacks.iter().all(|&s| s >= -FEASIBILITY_TOL);
    SlackReport { slacks, feasible }
}

/// `c_S = r_{S̄} / (Σ r − 1)`.
pub fn r_to_c(r: &CoverCoefficients) -> Result<CoverCoefficients> {
    let report = check_cover(r);
    if !report.feasible {
        return Err(Error::InfeasibleInput(format!("r is not a cover: slacks {:?}", report.slacks)));
    }
    let divisor = r.total() - 1.0;
    if divisor <= FEASIBILITY_TOL {
        return Err(Error::TrivialCover);
    }
    Ok(r.scaled_complement(divisor))
}

/// `r_{S̄} = c_S / (Σ c − 1)`, the inverse of [`r_to_c`].
pub fn c_to_r(c: &CoverCoefficients) -> Result<CoverCoefficients> {
    if !c.is_feasible_c() {
        return Err(Error::InfeasibleInput(format!("c overloads an element: loads {:?}", c.loads())));
    }
    let divisor = c.total() - 1.0;
    if divisor <= FEASIBILITY_TOL {
        return Err(Error::InfeasibleInput(format!("sum of c is {}, must exceed 1", c.total())));
    }
    Ok(c.scaled_complement(divisor))
}

/// Values `v_S` per non-empty subset. Missing subsets are allowed; they
/// are an error wherever a coefficient would need them.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetValues {
    n: usize,
    values: Vec<Option<Extended>>,
}

impl SubsetValues {
    pub fn empty(n: usize) -> Result<Self> {
        check_n(n, MAX_ELEMENTS)?;
        let mut values = vec![None; 1 << n];
        values[0] = Some(Extended::Finite(0.0));
        Ok(Self { n, values })
    }

    /// Fills every non-empty subset.
    pub fn from_fn(n: usize, f: impl Fn(Mask) -> Extended) -> Result<Self> {
        let mut out = Self::empty(n)?;
        for mask in 1..=full_mask(n) {
            out.set(mask, f(mask))?;
        }
        Ok(out)
    }

    /// `v_S = Σ_{i∈S} σ_i²`, the exact values for Gaussian components.
    pub fn additive(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("variances must be finite and >= 0".into()));
        }
        Self::from_fn(variances.len(), |mask| {
            Extended::Finite(elements(mask).into_iter().map(|i| variances[i - 1]).sum())
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, mask: Mask) -> Option<Extended> {
        self.values.get(mask as usize).copied().flatten()
    }

    pub fn set(&mut self, mask: Mask, value: Extended) -> Result<()> {
        check_mask(self.n, mask)?;
        if mask == 0 {
            return Err(Error::InvalidParameter("the empty set has no value".into()));
        }
        if let Extended::Finite(v) = value {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("subset value {v} must be finite and >= 0")));
            }
        }
        self.values[mask as usize] = Some(value);
        Ok(())
    }

    /// Present non-empty entries in increasing mask order.
    pub fn iter(&self) -> impl Iterator<Item = (Mask, Extended)> + '_ {
        self.values.iter().enumerate().skip(1).filter_map(|(m, v)| v.map(|v| (m as Mask, v)))
    }
}

/// `Σ r_S v_S` for a feasible cover.
pub fn bound_rhs(r: &CoverCoefficients, v: &SubsetValues) -> Result<Extended> {
    if r.n() != v.n() {
        return Err(Error::ShapeMismatch(format!("cover on [{}] vs values on [{}]", r.n(), v.n())));
    }
    let report = check_cover(r);
    if let Some((i, &slack)) = report.slacks.iter().enumerate().find(|(_, s)| **s < -FEASIBILITY_TOL) {
        return Err(Error::InfeasibleCover { element: i + 1, slack });
    }
    let mut sum = 0.0;
    for (mask, coef) in r.iter() {
        if mask == 0 {
            continue;
        }
        match v.get(mask) {
            None => {
                return Err(Error::InvalidParameter(format!("no value for subset {mask:#b}")));
            }
            Some(Extended::Unbounded) => return Ok(Extended::Unbounded),
            Some(Extended::Finite(x)) => sum += coef * x,
        }
    }
    Ok(Extended::Finite(sum))
}

/// Minimizes `Σ r_S v_S` over fractional covers. Subsets without a finite
/// value are not variables. Columns are presented to the simplex in
/// decreasing mask order so that ties resolve toward larger subsets.
pub fn optimal_cover(v: &SubsetValues) -> Result<(CoverCoefficients, f64)> {
    let n = v.n();
    check_n(n, MAX_LP_ELEMENTS)?;
    let columns: Vec<(Mask, f64)> = (1..=full_mask(n))
        .rev()
        .filter_map(|m| match v.get(m) {
            Some(Extended::Finite(x)) => Some((m, x)),
            _ => None,
        })
        .collect();
    for b in 0..n {
        if !columns.iter().any(|(m, _)| m & (1 << b) != 0) {
            return Err(Error::Infeasible { element: b + 1 });
        }
    }
    let cost: Vec<f64> = columns.iter().map(|(_, x)| *x).collect();
    let rows: Vec<Vec<f64>> =
        (0..n).map(|b| columns.iter().map(|(m, _)| if m & (1 << b) != 0 { 1.0 } else { 0.0 }).collect()).collect();
    match minimize_covering(&cost, &rows, &vec![1.0; n])? {
        LpOutcome::Optimal(sol) => {
            let mut r = CoverCoefficients::zeros(n)?;
            for ((mask, _), x) in columns.iter().zip(&sol.x) {
                if *x > 0.0 {
                    r.set(*mask, *x)?;
                }
            }
            Ok((r, sol.objective))
        }
        LpOutcome::Infeasible => Err(Error::Numerical("covering LP reported infeasible".into())),
        LpOutcome::Unbounded => Err(Error::Numerical("covering LP reported unbounded".into())),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// `6(4 + δ²) e^{4/δ²}`.
pub fn chen_bound(delta: f64) -> Result<Extended> {
    check_delta(delta)?;
    let d2 = delta * delta;
    Ok(Extended::from_f64(6.0 * (4.0 + d2) * (4.0 / d2).exp()))
}

/// `6(4n + δ²/n) e^{4n³/δ²}`.
pub fn chen_bound_direct(n: usize, delta: f64) -> Result<Extended> {
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let nf = n as f64;
    let d2 = delta * delta;
    Ok(Extended::from_f64(6.0 * (4.0 * nf + d2 / nf) * (4.0 * nf.powi(3) / d2).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slack_examples() {
        let report = check_cover(&full_cover(4).unwrap());
        assert!(report.feasible);
        assert_eq!(report.slacks, vec![0.0; 4]);
        let report = check_cover(&singleton_cover(2).unwrap());
        assert_eq!(report.slacks, vec![0.0, 0.0]);
        for n in 2..=6 {
            let report = check_cover(&leave_one_out_cover(n).unwrap());
            assert!(report.feasible);
            assert!(report.slacks.iter().all(|s| s.abs() < 1e-15), "{n}: {:?}", report.slacks);
        }
        let bad = CoverCoefficients::from_entries(2, [(subset(&[1]), 1.0)]).unwrap();
        let report = check_cover(&bad);
        assert!(!report.feasible);
        assert_eq!(report.slacks, vec![0.0, -1.0]);
    }

    #[test]
    fn transform_examples() {
        let c = r_to_c(&singleton_cover(2).unwrap()).unwrap();
        assert_eq!(c.get(subset(&[1])), 1.0);
        assert_eq!(c.get(subset(&[2])), 1.0);
        assert_eq!(c.get(subset(&[1, 2])), 0.0);
        assert_eq!(c.get(0), 0.0);

        let r = CoverCoefficients::from_entries(3, (0..3).map(|b| (full_mask(3) ^ (1 << b), 0.5))).unwrap();
        let c = r_to_c(&r).unwrap();
        for i in 1..=3 {
            assert!((c.get(subset(&[i])) - 1.0).abs() < 1e-15);
        }
        assert!(c.loads().iter().all(|l| (l - 1.0).abs() < 1e-15));

        assert_eq!(r_to_c(&full_cover(3).unwrap()), Err(Error::TrivialCover));
        let bad = CoverCoefficients::from_entries(2, [(subset(&[1]), 3.0)]).unwrap();
        assert!(matches!(r_to_c(&bad), Err(Error::InfeasibleInput(_))));
    }

    #[test]
    fn full_set_weight_round_trips_through_empty_slot() {
        let r = CoverCoefficients::from_entries(2, [(3, 2.0), (1, 0.5)]).unwrap();
        let c = r_to_c(&r).unwrap();
        assert_eq!(c.get(0), 2.0 / 1.5);
        let back = c_to_r(&c).unwrap();
        for m in 0..4 {
            assert!((back.get(m) - r.get(m)).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_on_random_covers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..=6);
            let r = random_feasible_cover(n, &mut rng).unwrap();
            assert!(check_cover(&r).feasible);
            let min_slack = check_cover(&r).slacks.into_iter().fold(f64::INFINITY, f64::min);
            assert!(min_slack.abs() < 1e-12);
            if r.total() - 1.0 <= 1e-9 {
                continue;
            }
            let c = r_to_c(&r).unwrap();
            assert!(c.is_feasible_c());
            assert!(c.total() > 1.0);
            let back = c_to_r(&c).unwrap();
            for m in 0..(1u32 << n) {
                assert!((back.get(m) - r.get(m)).abs() <= 1e-12 * r.get(m).max(1.0));
            }
        }
    }

    #[test]
    fn bound_examples() {
        let v = SubsetValues::from_fn(3, |m| Extended::Finite(m as f64)).unwrap();
        assert_eq!(bound_rhs(&full_cover(3).unwrap(), &v).unwrap(), Extended::Finite(7.0));

        let v = SubsetValues::additive(&[1.0, 2.0]).unwrap();
        assert_eq!(bound_rhs(&singleton_cover(2).unwrap(), &v).unwrap(), Extended::Finite(3.0));

        // Identical components: v_S depends only on |S|.
        let v = SubsetValues::from_fn(3, |m| Extended::Finite(1.0 + m.count_ones() as f64 * 0.7)).unwrap();
        let got = bound_rhs(&leave_one_out_cover(3).unwrap(), &v).unwrap().finite().unwrap();
        let two = v.get(subset(&[1, 2])).unwrap().finite().unwrap();
        assert!((got - 1.5 * two).abs() < 1e-14);

        let bad = CoverCoefficients::from_entries(2, [(1, 1.0)]).unwrap();
        assert!(matches!(bound_rhs(&bad, &v_two()), Err(Error::InfeasibleCover { element: 2, .. })));

        let mut v = v_two();
        v.set(1, Extended::Unbounded).unwrap();
        assert_eq!(bound_rhs(&singleton_cover(2).unwrap(), &v).unwrap(), Extended::Unbounded);
        assert_eq!(bound_rhs(&full_cover(2).unwrap(), &v).unwrap(), Extended::Finite(10.0));
    }

    fn v_two() -> SubsetValues {
        let mut v = SubsetValues::empty(2).unwrap();
        v.set(subset(&[1]), Extended::Finite(1.0)).unwrap();
        v.set(subset(&[2]), Extended::Finite(1.0)).unwrap();
        v.set(subset(&[1, 2]), Extended::Finite(10.0)).unwrap();
        v
    }

    #[test]
    fn optimal_cover_examples() {
        let mut v = SubsetValues::empty(1).unwrap();
        v.set(1, Extended::Finite(2.5)).unwrap();
        let (r, value) = optimal_cover(&v).unwrap();
        assert_eq!(value, 2.5);
        assert_eq!(r.get(1), 1.0);

        let (r, value) = optimal_cover(&v_two()).unwrap();
        assert!((value - 2.0).abs() < 1e-12);
        assert_eq!(r, singleton_cover(2).unwrap());

        let v = SubsetValues::additive(&[1.0, 0.5, 2.0, 0.25]).unwrap();
        let (r, value) = optimal_cover(&v).unwrap();
        assert!((value - 3.75).abs() < 1e-12);
        assert_eq!(r, full_cover(4).unwrap());
    }

    #[test]
    fn optimal_cover_infeasible_when_element_unreachable() {
        let mut v = SubsetValues::empty(2).unwrap();
        v.set(1, Extended::Finite(1.0)).unwrap();
        v.set(3, Extended::Unbounded).unwrap();
        assert_eq!(optimal_cover(&v), Err(Error::Infeasible { element: 2 }));
    }

    #[test]
    fn chen_examples() {
        let b = chen_bound(1.0).unwrap().finite().unwrap();
        assert!((b - 30.0 * 4f64.exp()).abs() < 1e-9);
        assert!((b - 1637.94).abs() < 0.01);
        for d in [0.3, 1.0, 2.5, 10.0] {
            assert_eq!(chen_bound_direct(1, d).unwrap(), chen_bound(d).unwrap());
        }
        let b = chen_bound_direct(2, 2.0).unwrap().finite().unwrap();
        assert!((b / (60.0 * 8f64.exp()) - 1.0).abs() < 1e-14);
        assert_eq!(chen_bound_direct(50, 1.0).unwrap(), Extended::Unbounded);
        assert_eq!(chen_bound(0.01).unwrap(), Extended::Unbounded);
        assert!(chen_bound(0.0).is_err());
        assert!(chen_bound_direct(0, 1.0).is_err());
    }
}

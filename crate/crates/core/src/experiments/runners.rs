use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::covers::{
    bound_rhs, check_cover, chen_bound, chen_bound_direct, full_mask, optimal_cover, r_to_c, random_feasible_c,
    random_feasible_cover, singleton_cover, CoverCoefficients, SubsetValues,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_cls, poincare, EstimatorOptions, LsiEstimate};
use crate::extended::Extended;
use crate::functionals::{herbst_margin, wasserstein2, GridFunction};
use crate::io;
use crate::measures::{self, clt_measure, convolve_pruned, from_density, GridMeasure, TAIL_PRUNE_MASS};
use crate::shearer::{kl_product, random_joint, random_product, shearer_margin};

use super::{BaseMeasure, Cell, ExperimentReport, ExperimentSpec};

/// Relative slack for cross-measure comparisons of estimates.
pub const ESTIMATE_SLACK: f64 = 0.02;
/// Allowed shortfall in `C_P >= 1 + W2^2`.
pub const CHAIN_TOL: f64 = 1e-3;
/// `estimate >= ORDER_FACTOR * poincare`.
pub const ORDER_FACTOR: f64 = 0.95;
/// Relative round-off allowed in the exact Gaussian subadditivity check.
pub const SUBADD_ROUNDOFF: f64 = 1e-12;
pub const SHEARER_TOL: f64 = 1e-9;
pub const HERBST_DEFAULT_T: [f64; 16] =
    [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0];

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    // SplitMix-style mixing keeps neighbouring trial streams unrelated.
    let mut z = seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn poincare_ext(mu: &GridMeasure) -> Result<Extended> {
    match poincare(mu) {
        Ok(c) => Ok(Extended::Finite(c)),
        Err(Error::DisconnectedSupport) => Ok(Extended::Unbounded),
        Err(e) => Err(e),
    }
}

/// Standard Gaussian sampled on the window and spacing of `mu`.
pub fn matched_gaussian(mu: &GridMeasure) -> Result<GridMeasure> {
    let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    from_density(|x| c * (-0.5 * x * x).exp(), mu.origin(), mu.end(), mu.len())
}

struct MeasureRow {
    estimate: LsiEstimate,
    poincare: Extended,
    w2: f64,
}

fn measure_row(nu: &GridMeasure, opts: &EstimatorOptions) -> Result<MeasureRow> {
    let estimate = estimate_cls(nu, opts)?;
    let poincare = poincare_ext(nu)?;
    let w2 = wasserstein2(nu, &matched_gaussian(nu)?);
    Ok(MeasureRow { estimate, poincare, w2 })
}

/// Runs `f` over `items` in parallel, then keeps results in order up to
/// the first failure.
fn ordered<I: Sync, T: Send>(items: &[I], f: impl Fn(&I) -> Result<T> + Sync) -> (Vec<(T, f64)>, Option<Error>) {
    let results: Vec<(Result<T>, f64)> = items.par_iter().map(|i| timed(|| f(i))).collect();
    let mut out = Vec::new();
    for (r, t) in results {
        match r {
            Ok(v) => out.push((v, t)),
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

/// `ν_n` for each `n` of the standardized base: estimate, Poincaré
/// constant and distance to the Gaussian, with monotonicity and the
/// `C_LS >= C_P >= 1 + W2^2` chain asserted.
pub fn run_clt_monotone(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let base = spec.base().build(&spec.grid)?.standardize()?;
    let opts = spec.estimator();
    let ns = spec.n_values();
    let mut report = ExperimentReport::new(
        spec,
        &[
            "n",
            "cls_estimate",
            "poincare",
            "w2_to_gaussian",
            "one_plus_w2_sq",
            "rate",
            "converged",
            "monotone_margin",
            "chain_margin",
            "order_margin",
        ],
    );
    let (rows, failure) = ordered(&ns, |&n| measure_row(&clt_measure(&base, n)?, &opts));
    let mut prev: Option<f64> = None;
    for (&n, (row, t)) in ns.iter().zip(rows) {
        let cls = row.estimate.value.to_f64();
        let cp = row.poincare.to_f64();
        let lower = 1.0 + row.w2 * row.w2;
        let monotone = prev.map(|p| (1.0 + ESTIMATE_SLACK) * p - cls);
        let chain = cp - lower + CHAIN_TOL;
        let order = cls - ORDER_FACTOR * cp;
        if monotone.is_some_and(|m| m < 0.0) {
            report.violation(format!("n={n}: estimate {cls} exceeds {}x the previous row", 1.0 + ESTIMATE_SLACK));
        }
        if chain < 0.0 {
            report.violation(format!("n={n}: poincare {cp} below 1 + W2^2 = {lower}"));
        }
        if order < 0.0 {
            report.violation(format!("n={n}: estimate {cls} below {ORDER_FACTOR} x poincare {cp}"));
        }
        report.push(
            vec![
                n.into(),
                row.estimate.value.into(),
                row.poincare.into(),
                row.w2.into(),
                lower.into(),
                ((cls - 1.0) * n as f64).into(),
                row.estimate.converged.into(),
                monotone.into(),
                chain.into(),
                order.into(),
            ],
            t,
        );
        prev = Some(cls);
    }
    report.failure = failure;
    Ok(report)
}

fn encode_cover(r: &CoverCoefficients) -> String {
    r.iter()
        .filter(|(m, _)| *m != 0)
        .map(|(m, v)| format!("{}:{v}", io::format_bitstring(r.n(), m)))
        .collect::<Vec<_>>()
        .join(";")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

struct SubaddTrial {
    family: &'static str,
    variances: Vec<f64>,
    cover: CoverCoefficients,
    lhs: f64,
    rhs: Extended,
}

/// Gaussian components have `C_LS(μ_S) = Σ_{i∈S} σ_i²`, so the cover
/// bound `Σ σ_i² <= Σ r_S Σ_{i∈S} σ_i²` can be checked exactly for any
/// cover. Grid trials replace the left side by an estimate of the
/// convolution and only record the margin.
pub fn run_verify_subadd(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let fixed = match &spec.cover_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let r = io::parse_cover(&text)?;
            let report = check_cover(&r);
            if let Some((i, &slack)) = report.slacks.iter().enumerate().find(|(_, s)| **s < -1e-12) {
                return Err(Error::InfeasibleCover { element: i + 1, slack });
            }
            Some(r)
        }
        None => None,
    };
    let ns = spec.n_values();
    let trials = spec.trial_count();
    let opts = spec.estimator();
    let draw = |trial: usize, low: f64, high: f64| -> Result<(Vec<f64>, CoverCoefficients)> {
        let mut rng = trial_rng(spec.seed, trial);
        let n = fixed.as_ref().map_or_else(|| ns[rng.random_range(0..ns.len())], CoverCoefficients::n);
        let variances: Vec<f64> = (0..n).map(|_| rng.random_range(low..high)).collect();
        let r = match &fixed {
            Some(r) => r.clone(),
            None => random_feasible_cover(n, &mut rng)?,
        };
        Ok((variances, r))
    };
    let exact = |trial: &usize| -> Result<SubaddTrial> {
        let (variances, cover) = draw(*trial, 0.1, 4.0)?;
        let rhs = bound_rhs(&cover, &SubsetValues::additive(&variances)?)?;
        Ok(SubaddTrial { family: "gaussian", lhs: variances.iter().sum(), variances, cover, rhs })
    };
    let grid = |trial: &usize| -> Result<SubaddTrial> {
        let (variances, cover) = draw(trials + *trial, 0.25, 2.0)?;
        let g = &spec.grid;
        let mut total = measures::gaussian(0.0, variances[0], g.lo, g.hi, g.m)?;
        for &v in &variances[1..] {
            total = convolve_pruned(&total, &measures::gaussian(0.0, v, g.lo, g.hi, g.m)?, TAIL_PRUNE_MASS)?;
        }
        let lhs = estimate_cls(&total, &opts)?.value.to_f64();
        let rhs = bound_rhs(&cover, &SubsetValues::additive(&variances)?)?;
        Ok(SubaddTrial { family: "grid", lhs, variances, cover, rhs })
    };
    let mut report =
        ExperimentReport::new(spec, &["trial", "family", "n", "variances", "cover", "lhs", "rhs", "margin"]);
    let exact_ids: Vec<usize> = (0..trials).collect();
    let grid_ids: Vec<usize> = (0..spec.grid_trials).collect();
    let (mut rows, mut failure) = ordered(&exact_ids, exact);
    if failure.is_none() {
        let (more, f) = ordered(&grid_ids, grid);
        rows.extend(more);
        failure = f;
    }
    let mut violations = 0usize;
    for (i, (row, t)) in rows.into_iter().enumerate() {
        let margin = row.rhs.to_f64() - row.lhs;
        if row.family == "gaussian" && margin < -SUBADD_ROUNDOFF * row.lhs.max(1.0) {
            violations += 1;
            report.violation(format!("trial {i}: sum of variances {} exceeds cover bound {}", row.lhs, row.rhs));
        }
        report.push(
            vec![
                i.into(),
                row.family.into(),
                row.variances.len().into(),
                join(&row.variances).into(),
                encode_cover(&row.cover).into(),
                row.lhs.into(),
                row.rhs.into(),
                margin.into(),
            ],
            t,
        );
    }
    report.summarize("violations", violations);
    report.failure = failure;
    Ok(report)
}

/// `ν_n ∗ γ_{δ²/n}` with the Gaussian sampled on the lattice of `ν_n`
/// out to eight standard deviations.
pub fn regularized_clt(base: &GridMeasure, n: usize, delta: f64) -> Result<GridMeasure> {
    let nu = clt_measure(base, n)?;
    let h = nu.spacing();
    let sd = delta / (n as f64).sqrt();
    let k = (8.0 * sd / h).ceil() as usize;
    let half = k as f64 * h;
    let gamma = measures::gaussian(0.0, sd * sd, -half, half, 2 * k + 1)?;
    convolve_pruned(&nu, &gamma, TAIL_PRUNE_MASS)
}

/// Regularized CLT measures through estimates: `Ĉ(ν_n ∗ γ_{δ²/n})`
/// against `Ĉ(ν_1 ∗ γ_{δ²})` and the two closed-form bounds.
pub fn run_regularize(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let raw = spec.base().build(&spec.grid)?;
    let base = match spec.base() {
        BaseMeasure::Rademacher => raw,
        _ => raw.standardize()?,
    };
    let opts = spec.estimator();
    let delta = spec.delta;
    let ns = spec.n_values();
    let (reference, ref_time) =
        timed(|| -> Result<Extended> { Ok(estimate_cls(&regularized_clt(&base, 1, delta)?, &opts)?.value) });
    let reference = reference?;
    let chen = chen_bound(delta)?;
    let mut report = ExperimentReport::new(
        spec,
        &[
            "n",
            "delta",
            "cls_regularized",
            "cls_reference",
            "chen_bound",
            "chen_bound_direct",
            "example_margin",
            "chen_margin",
            "direct_margin",
            "gap",
        ],
    );
    let (rows, failure) = ordered(&ns, |&n| -> Result<(Extended, Extended)> {
        let est = if n == 1 { reference } else { estimate_cls(&regularized_clt(&base, n, delta)?, &opts)?.value };
        Ok((est, chen_bound_direct(n, delta)?))
    });
    let r = reference.to_f64();
    let mut plot = String::from("# n cls_regularized cls_reference chen_bound chen_bound_direct\n");
    for (&n, ((est, direct), t)) in ns.iter().zip(rows) {
        let c = est.to_f64();
        let example = (1.0 + ESTIMATE_SLACK) * r - c;
        let chen_margin = chen.to_f64() - r;
        let direct_margin = (n >= 2).then(|| direct.to_f64() - chen.to_f64());
        if example < 0.0 {
            report.violation(format!("n={n}: {c} exceeds {}x reference {r}", 1.0 + ESTIMATE_SLACK));
        }
        if chen_margin < 0.0 {
            report.violation(format!("reference {r} exceeds chen bound {chen}"));
        }
        if direct_margin.is_some_and(|m| m < 0.0) {
            report.violation(format!("n={n}: direct bound {direct} below chen bound {chen}"));
        }
        plot.push_str(&format!("{n} {c} {r} {} {}\n", chen.to_f64(), direct.to_f64()));
        report.push(
            vec![
                n.into(),
                delta.into(),
                est.into(),
                reference.into(),
                chen.into(),
                direct.into(),
                example.into(),
                chen_margin.into(),
                direct_margin.map_or(Cell::Empty, Cell::Float),
                (r - c).into(),
            ],
            t + if n == 1 { ref_time } else { 0.0 },
        );
    }
    report.extra_files.push(("regularize_plot.dat".into(), plot));
    report.extra_files.push(("regularize.gp".into(), REGULARIZE_PLOT_SCRIPT.into()));
    report.failure = failure;
    Ok(report)
}

const REGULARIZE_PLOT_SCRIPT: &str = "\
set terminal pngcairo size 800,500
set output 'regularize.png'
set logscale y
set xlabel 'n'
set ylabel 'log-Sobolev constant'
set key top left
plot 'regularize_plot.dat' using 1:2 with linespoints title 'estimate, nu_n * gamma_{delta^2/n}', \\
     '' using 1:3 with lines title 'estimate, nu_1 * gamma_{delta^2}', \\
     '' using 1:4 with lines title '6(4+d^2)exp(4/d^2)', \\
     '' using 1:5 with linespoints title '6(4n+d^2/n)exp(4n^3/d^2)'
";

/// Tail ratios `μ(f ≥ E f + t) e^{t²/2c}` for `f(x) = x`.
pub fn run_herbst(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let mu = spec.base().build(&spec.grid)?;
    let f = GridFunction::from_fn(&mu, |x| x)?;
    let c = spec.tail_constant;
    let ts = spec.t_values.clone().unwrap_or_else(|| HERBST_DEFAULT_T.to_vec());
    let mut report = ExperimentReport::new(spec, &["t", "tail_probability", "gaussian_bound", "margin"]);
    let mut worst: f64 = 0.0;
    for &t in &ts {
        let (margin, time) = timed(|| herbst_margin(&mu, &f, c, &[t]));
        let margin = margin?;
        let bound = (-t * t / (2.0 * c)).exp();
        if margin > 1.0 {
            report.violation(format!("t={t}: tail exceeds exp(-t^2/2c) by a factor {margin}"));
        }
        worst = worst.max(margin);
        report.push(vec![t.into(), (margin * bound).into(), bound.into(), margin.into()], time);
    }
    report.summarize("max_margin", Cell::Float(worst));
    Ok(report)
}

/// Random joints against random strictly positive products with random
/// feasible `c`. Even trials draw `c` directly, odd trials transform a
/// random cover `r`. Violating instances are written as reproducers.
pub fn run_shearer_fuzz(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let ns = spec.n_values();
    let kmax = spec.alphabet_max;
    let ids: Vec<usize> = (0..spec.trial_count()).collect();
    let trial = |&i: &usize| -> Result<(io::Reproducer, &'static str, f64, f64)> {
        let mut rng = trial_rng(spec.seed, i);
        let n = ns[rng.random_range(0..ns.len())];
        let shape: Vec<usize> = (0..n).map(|_| rng.random_range(1..=kmax)).collect();
        let p = random_joint(&shape, &mut rng)?;
        let q = random_product(&shape, &mut rng)?;
        let (c, source) = if i % 2 == 0 {
            (random_feasible_c(n, &mut rng)?, "random")
        } else {
            let r = random_feasible_cover(n, &mut rng)?;
            match r_to_c(&r) {
                Ok(c) => (c, "transformed"),
                Err(Error::TrivialCover) => (singleton_cover(n)?, "singleton"),
                Err(e) => return Err(e),
            }
        };
        let total = kl_product(&p, &q)?.to_f64();
        let margin = shearer_margin(&p, &q, &c)?;
        Ok((io::Reproducer { p, q, c }, source, total, margin))
    };
    let (rows, failure) = ordered(&ids, trial);
    let mut report = ExperimentReport::new(spec, &["trial", "shape", "c_source", "divergence", "margin"]);
    let mut min_margin = f64::INFINITY;
    for (i, ((repro, source, total, margin), t)) in rows.into_iter().enumerate() {
        let shape = repro.p.shape().iter().map(|k| k.to_string()).collect::<Vec<_>>().join("x");
        if margin < -SHEARER_TOL {
            report.violation(format!("trial {i}: margin {margin}"));
            report.extra_files.push((format!("shearer-repro-{i}.csv"), io::write_reproducer(&repro)));
        }
        min_margin = min_margin.min(margin);
        report.push(vec![i.into(), shape.into(), source.into(), total.into(), margin.into()], t);
    }
    report.summarize("min_margin", Cell::Float(min_margin));
    report.failure = failure;
    Ok(report)
}

/// Solves the covering LP for values read from a file, or for additive
/// Gaussian values when no file is given.
pub fn run_optimal_cover(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let v = match &spec.subset_values_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            io::parse_subset_values(&text)?
        }
        None => SubsetValues::additive(spec.variances.as_deref().unwrap_or(&[1.0, 2.0, 3.0]))?,
    };
    let (solved, time) = timed(|| optimal_cover(&v));
    let (r, value) = solved?;
    let mut report = ExperimentReport::new(spec, &["subset", "subset_value", "coefficient"]);
    let n = v.n();
    for mask in 1..=full_mask(n) {
        if let Some(value) = v.get(mask) {
            report.push(vec![io::format_bitstring(n, mask).into(), value.into(), r.get(mask).into()], time);
        }
    }
    if let Some(Extended::Finite(full)) = v.get(full_mask(n)) {
        if value > full + 1e-9 * full.max(1.0) {
            report.violation(format!("optimal value {value} exceeds the full-set value {full}"));
        }
        report.summarize("full_set_value", Cell::Float(full));
    }
    report.summarize("optimal_value", Cell::Float(value));
    report.extra_files.push(("optimal-cover-r.csv".into(), io::write_cover(&r)));
    Ok(report)
}

/// Estimate, Poincaré constant and distance to the Gaussian for
/// `clt_measure(base, n)`; `n = 1` is the base measure itself.
pub fn run_estimate(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let base = spec.base().build(&spec.grid)?;
    let opts = spec.estimator();
    let ns = spec.n_values();
    let (rows, failure) = ordered(&ns, |&n| measure_row(&clt_measure(&base, n)?, &opts));
    let mut report = ExperimentReport::new(
        spec,
        &["n", "cls_estimate", "poincare", "w2_to_gaussian", "converged", "iterations", "probes_tried"],
    );
    for (&n, (row, t)) in ns.iter().zip(rows) {
        report.push(
            vec![
                n.into(),
                row.estimate.value.into(),
                row.poincare.into(),
                row.w2.into(),
                row.estimate.converged.into(),
                row.estimate.iterations.into(),
                row.estimate.probes_tried.into(),
            ],
            t,
        );
    }
    report.failure = failure;
    Ok(report)
}

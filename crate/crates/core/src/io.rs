//! Text formats: measure files, subset-value files, Shearer reproducers
//! and the small flag syntaxes of the command line.

use std::fmt::Write as _;

use crate::covers::{CoverCoefficients, Mask, SubsetValues};
use crate::error::{Error, Result};
use crate::extended::Extended;
use crate::measures::GridMeasure;
use crate::shearer::{FiniteJoint, ProductReference};

pub const LATTICE_TOL: f64 = 1e-9;
pub const MASS_WARN_TOL: f64 = 1e-6;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Records of a headed CSV with `#` comments, as (line number, fields).
fn records(text: &str, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(parse_err(1, format!("expected header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", header.len(), rec.len())));
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_f64(line: usize, field: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| parse_err(line, format!("not a number: `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{field}`")));
    }
    Ok(v)
}

/// Reads an `x,w` measure file. Rows must lie on a uniform increasing
/// lattice; the weights are renormalized.
pub fn parse_measure_csv(text: &str) -> Result<GridMeasure> {
    let rows = records(text, &["x", "w"])?;
    if rows.is_empty() {
        return Err(parse_err(1, "no rows"));
    }
    let mut xs = Vec::with_capacity(rows.len());
    let mut ws = Vec::with_capacity(rows.len());
    for (line, f) in &rows {
        xs.push(parse_f64(*line, &f[0])?);
        let w = parse_f64(*line, &f[1])?;
        if w < 0.0 {
            return Err(parse_err(*line, format!("negative weight {w}")));
        }
        ws.push(w);
    }
    let sum: f64 = ws.iter().sum();
    if (sum - 1.0).abs() > MASS_WARN_TOL {
        log::warn!("measure file weights sum to {sum}; renormalizing");
    }
    if xs.len() == 1 {
        if sum <= 0.0 {
            return Err(Error::ZeroMass);
        }
        return Ok(GridMeasure::point_mass(xs[0]));
    }
    let m = xs.len();
    let h = (xs[m - 1] - xs[0]) / (m - 1) as f64;
    if !(h > 0.0) || !h.is_finite() {
        return Err(parse_err(rows[0].0, "x must be strictly increasing"));
    }
    for (i, x) in xs.iter().enumerate() {
        let expected = xs[0] + i as f64 * h;
        if (x - expected).abs() > LATTICE_TOL * h.max(x.abs()) {
            return Err(parse_err(rows[i].0, format!("x = {x} is off the uniform lattice (expected {expected})")));
        }
    }
    GridMeasure::new(xs[0], h, ws)
}

pub fn write_measure_csv(mu: &GridMeasure) -> String {
    let mut out = String::from("x,w\n");
    for (x, w) in mu.points().zip(mu.weights()) {
        let _ = writeln!(out, "{x},{w}");
    }
    out
}

/// `101` is {1, 3}: character `k` (from the left) stands for element `k + 1`.
pub fn parse_bitstring(s: &str) -> Option<(usize, Mask)> {
    if s.is_empty() || s.len() > crate::covers::MAX_ELEMENTS {
        return None;
    }
    let mut mask = 0;
    for (k, ch) in s.chars().enumerate() {
        match ch {
            '1' => mask |= 1 << k,
            '0' => {}
            _ => return None,
        }
    }
    Some((s.len(), mask))
}

pub fn format_bitstring(n: usize, mask: Mask) -> String {
    (0..n).map(|k| if mask & (1 << k) != 0 { '1' } else { '0' }).collect()
}

/// `(line, subset, raw value)`.
type SubsetRow = (usize, Mask, String);

fn subset_rows(text: &str) -> Result<(usize, Vec<SubsetRow>)> {
    let rows = records(text, &["subset", "value"])?;
    let mut n = None;
    let mut out = Vec::new();
    for (line, f) in rows {
        let (len, mask) = parse_bitstring(&f[0]).ok_or_else(|| parse_err(line, format!("bad subset `{}`", f[0])))?;
        match n {
            None => n = Some(len),
            Some(k) if k != len => return Err(parse_err(line, format!("subset width {len}, expected {k}"))),
            _ => {}
        }
        if mask == 0 {
            return Err(parse_err(line, "the empty subset has no value"));
        }
        out.push((line, mask, f[1].clone()));
    }
    let n = n.ok_or_else(|| parse_err(1, "no rows"))?;
    Ok((n, out))
}

/// Reads a `subset,value` file; `inf` marks an unbounded value.
pub fn parse_subset_values(text: &str) -> Result<SubsetValues> {
    let (n, rows) = subset_rows(text)?;
    let mut v = SubsetValues::empty(n)?;
    for (line, mask, value) in rows {
        if v.get(mask).is_some() {
            return Err(parse_err(line, "duplicate subset"));
        }
        let value = if value.eq_ignore_ascii_case("inf") {
            Extended::Unbounded
        } else {
            Extended::Finite(parse_f64(line, &value)?)
        };
        v.set(mask, value).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(v)
}

pub fn write_subset_values(v: &SubsetValues) -> String {
    let mut out = String::from("subset,value\n");
    for (mask, value) in v.iter() {
        let _ = writeln!(out, "{},{}", format_bitstring(v.n(), mask), value);
    }
    out
}

/// Cover coefficients in the same `subset,value` layout.
pub fn parse_cover(text: &str) -> Result<CoverCoefficients> {
    let (n, rows) = subset_rows(text)?;
    let mut r = CoverCoefficients::zeros(n)?;
    for (line, mask, value) in rows {
        let x = parse_f64(line, &value)?;
        r.set(mask, x).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(r)
}

pub fn write_cover(r: &CoverCoefficients) -> String {
    let mut out = String::from("subset,value\n");
    for (mask, value) in r.iter().filter(|(m, _)| *m != 0) {
        let _ = writeln!(out, "{},{}", format_bitstring(r.n(), mask), value);
    }
    out
}

/// A Shearer instance: joint `p`, product reference `q` and coefficients `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reproducer {
    pub p: FiniteJoint,
    pub q: ProductReference,
    pub c: CoverCoefficients,
}

/// Layout:
///
/// ```text
/// shape,2,3
/// p,<k1*k2 values, row-major>
/// q1,<k1 values>
/// q2,<k2 values>
/// c,<subset>,<value>   (zero or more, subset as a bitstring)
/// ```
pub fn write_reproducer(r: &Reproducer) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let shape = r.p.shape();
    let mut out = format!("shape,{}\n", shape.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
    let _ = writeln!(out, "p,{}", join(r.p.probs()));
    for (i, f) in r.q.factors().iter().enumerate() {
        let _ = writeln!(out, "q{},{}", i + 1, join(f));
    }
    for (mask, v) in r.c.iter() {
        let _ = writeln!(out, "c,{},{}", format_bitstring(shape.len(), mask), v);
    }
    out
}

pub fn parse_reproducer(text: &str) -> Result<Reproducer> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut shape: Option<Vec<usize>> = None;
    let mut p = None;
    let mut factors: Vec<Option<Vec<f64>>> = Vec::new();
    let mut c_rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let tag = rec.get(0).unwrap_or("");
        let rest: Vec<&str> = rec.iter().skip(1).collect();
        let numbers = |fields: &[&str]| fields.iter().map(|f| parse_f64(line, f)).collect::<Result<Vec<f64>>>();
        if tag == "shape" {
            if shape.is_some() {
                return Err(parse_err(line, "duplicate shape line"));
            }
            let dims = rest
                .iter()
                .map(|f| f.parse::<usize>().map_err(|_| parse_err(line, format!("bad alphabet size `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            if dims.is_empty() || dims.len() > crate::covers::MAX_ELEMENTS {
                return Err(parse_err(line, "shape needs 1..=16 coordinates"));
            }
            factors = vec![None; dims.len()];
            shape = Some(dims);
            continue;
        }
        let Some(dims) = shape.as_ref() else {
            return Err(parse_err(line, "the first line must be `shape,...`"));
        };
        if tag == "p" {
            if p.is_some() {
                return Err(parse_err(line, "duplicate p line"));
            }
            p = Some(FiniteJoint::new(dims.clone(), numbers(&rest)?).map_err(|e| parse_err(line, e.to_string()))?);
        } else if tag == "c" {
            if rest.len() != 2 {
                return Err(parse_err(line, "c rows are `c,<subset>,<value>`"));
            }
            let (len, mask) =
                parse_bitstring(rest[0]).ok_or_else(|| parse_err(line, format!("bad subset `{}`", rest[0])))?;
            if len != dims.len() {
                return Err(parse_err(line, format!("subset width {len}, expected {}", dims.len())));
            }
            c_rows.push((line, mask, parse_f64(line, rest[1])?));
        } else if let Some(i) = tag.strip_prefix('q').and_then(|s| s.parse::<usize>().ok()) {
            if i == 0 || i > dims.len() {
                return Err(parse_err(line, format!("no coordinate {i}")));
            }
            if factors[i - 1].is_some() {
                return Err(parse_err(line, format!("duplicate q{i} line")));
            }
            factors[i - 1] = Some(numbers(&rest)?);
        } else {
            return Err(parse_err(line, format!("unknown row tag `{tag}`")));
        }
    }
    let dims = shape.ok_or_else(|| parse_err(1, "missing shape line"))?;
    let p = p.ok_or_else(|| parse_err(0, "missing p line"))?;
    let factors = factors
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.ok_or_else(|| parse_err(0, format!("missing q{} line", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let q = ProductReference::new(factors).map_err(|e| parse_err(0, e.to_string()))?;
    if q.shape() != dims {
        return Err(parse_err(0, "q factors do not match the shape"));
    }
    let mut c = CoverCoefficients::zeros(dims.len())?;
    for (line, mask, v) in c_rows {
        c.set(mask, v).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(Reproducer { p, q, c })
}

/// `lo,hi,m`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Error::InvalidSpec(format!("grid must be `lo,hi,m`, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let m: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || m < 3 {
        return Err(Error::InvalidSpec(format!("grid needs finite lo < hi and m >= 3, got `{s}`")));
    }
    Ok((lo, hi, m))
}

/// `a..b`, inclusive at both ends; a single `a` is accepted too.
pub fn parse_n_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidSpec(format!("n range must be `a..b`, got `{s}`"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?),
        None => {
            let a = s.trim().parse::<usize>().map_err(|_| bad())?;
            (a, a)
        }
    };
    if a == 0 || b < a {
        return Err(Error::InvalidSpec(format!("n range `{s}` is empty or starts at 0")));
    }
    Ok((a..=b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::gaussian;

    #[test]
    fn measure_round_trip() {
        let mu = gaussian(0.3, 0.5, -4.0, 4.6, 101).unwrap();
        let back = parse_measure_csv(&write_measure_csv(&mu)).unwrap();
        assert_eq!(back.len(), mu.len());
        assert!((back.spacing() - mu.spacing()).abs() < 1e-15);
        for (a, b) in back.weights().iter().zip(mu.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn measure_file_validation() {
        let m = parse_measure_csv("x,w\n0,1\n1,1\n2,2\n").unwrap();
        assert_eq!(m.weights(), &[0.25, 0.25, 0.5]);
        assert!(matches!(parse_measure_csv("x,w\n0,1\n1,1\n2,1\n3.5,2\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_measure_csv("x,w\n0,1\n1,-1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_measure_csv("a,b\n0,1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_measure_csv("x,w\n").is_err());
        assert!(parse_measure_csv("x,w\n1,0\n2,0\n").is_err());
        let p = parse_measure_csv("# comment\nx,w\n3.5,2\n").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.origin(), 3.5);
    }

    #[test]
    fn subset_values_round_trip() {
        let text = "subset,value\n100,1.5\n010,2\n001,inf\n110,3.5\n111,4\n";
        let v = parse_subset_values(text).unwrap();
        assert_eq!(v.n(), 3);
        assert_eq!(v.get(0b001), Some(Extended::Finite(1.5)));
        assert_eq!(v.get(0b100), Some(Extended::Unbounded));
        assert_eq!(v.get(0b011), Some(Extended::Finite(3.5)));
        assert_eq!(v.get(0b101), None);
        assert_eq!(parse_subset_values(&write_subset_values(&v)).unwrap(), v);
        assert!(parse_subset_values("subset,value\n10,1\n100,1\n").is_err());
        assert!(parse_subset_values("subset,value\n00,1\n").is_err());
        assert!(parse_subset_values("subset,value\n1x,1\n").is_err());
        assert!(parse_subset_values("subset,value\n10,-1\n").is_err());
        assert!(parse_subset_values("subset,value\n10,1\n10,2\n").is_err());
    }

    #[test]
    fn cover_round_trip() {
        let r = crate::covers::leave_one_out_cover(3).unwrap();
        let back = parse_cover(&write_cover(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn reproducer_round_trip() {
        let p = FiniteJoint::new(vec![2, 3], vec![0.1, 0.2, 0.1, 0.3, 0.2, 0.1]).unwrap();
        let q = ProductReference::new(vec![vec![0.4, 0.6], vec![0.2, 0.3, 0.5]]).unwrap();
        let c = CoverCoefficients::from_entries(2, [(1, 0.5), (3, 0.5)]).unwrap();
        let r = Reproducer { p, q, c };
        let text = write_reproducer(&r);
        assert!(text.starts_with("shape,2,3\n"));
        assert_eq!(parse_reproducer(&text).unwrap(), r);
        assert!(parse_reproducer("p,1\n").is_err());
        assert!(parse_reproducer("shape,2\np,0.5,0.5\n").is_err());
        assert!(parse_reproducer("shape,2\np,0.5,0.5\nq1,0.5,0.5\nq2,1\n").is_err());
        assert!(parse_reproducer("shape,2\np,0.5,0.5\nq1,0.5,0.5\nz,1\n").is_err());
    }

    #[test]
    fn flag_syntax() {
        assert_eq!(parse_grid("-8,8,2049").unwrap(), (-8.0, 8.0, 2049));
        assert!(parse_grid("8,-8,2049").is_err());
        assert!(parse_grid("-8,8,2").is_err());
        assert!(parse_grid("-8,8").is_err());
        assert_eq!(parse_n_range("1..6").unwrap(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(parse_n_range("3").unwrap(), vec![3]);
        assert!(parse_n_range("4..2").is_err());
        assert!(parse_n_range("0..2").is_err());
    }
}

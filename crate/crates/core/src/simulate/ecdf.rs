use crate::error::{domain, Error, Result};

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|v| v.is_nan()) {
        return domain("sample contains NaN");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Exact sup-distance between the empirical CDFs of `u` and `v`, taken at
/// every jump point.
pub fn kolmogorov_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Empty(
            "kolmogorov_distance needs two nonempty samples",
        ));
    }
    let (a, b) = (sorted(u)?, sorted(v)?);
    Ok(sorted_distance(&a, &b))
}

pub(crate) fn sorted_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Number of sorted samples `<= t`.
pub(crate) fn count_at_most(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&x| x <= t)
}

/// Two-sample DKW threshold: with probability at least `1 - alpha` the
/// distance between two ECDFs of the same law stays below
/// `sqrt(ln(2/alpha) / (2m)) + sqrt(ln(2/alpha) / (2n))`.
pub fn dkw_two_sample_threshold(m: usize, n: usize, alpha: f64) -> f64 {
    let l = (2.0 / alpha).ln();
    (l / (2.0 * m as f64)).sqrt() + (l / (2.0 * n as f64)).sqrt()
}

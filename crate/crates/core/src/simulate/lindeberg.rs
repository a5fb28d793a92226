//! Lindeberg swap: replace `X_i` by `Y_i` one summand at a time and split
//! each increment `f(T_i) - f(T_{i+1})` into a first-order term `I_i`, a
//! second-order term `II_i` and the remainder `R_i`.
//!
//! `T_i = sum_{k<i} Y_k + sum_{k>=i} X_k` and
//! `L_i = sum_{k<i} Y_k + sum_{k>i} X_k`, so `T_1 = S_n` and
//! `T_{n+1} = S_n^dagger`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::normal_rule;
use super::rng::{stream, Purpose};
use super::spec::{cholesky, DistributionSpec, Family, Sampler};
use crate::bounds::Estimate;
use crate::error::{domain, Error, Result};
use crate::smoothmax::Composite;

/// Largest `n * d` accepted by the enumeration mode.
pub const ENUMERATE_MAX_CELLS: usize = 12;
/// Base Gauss-Hermite order.
pub const BASE_ORDER: usize = 20;
/// Agreement target when doubling the quadrature order.
pub const QUADRATURE_TOL: f64 = 1e-9;
/// Cap on `(quadrature nodes) x (sign patterns)` for a single expectation.
const MAX_WORK: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecomposeMode {
    /// Exact sum over Rademacher sign patterns, Gauss-Hermite quadrature for
    /// the Gaussian summands.
    Enumerate,
    MonteCarlo {
        reps: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTerm {
    /// 1-based summand index.
    pub i: usize,
    pub first_order: Estimate,
    pub second_order: Estimate,
    pub remainder: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mode: DecomposeMode,
    pub terms: Vec<SwapTerm>,
    /// `E f(S_n)`
    pub ef_sum: Estimate,
    /// `E f(S_n^dagger)`
    pub ef_gaussian: Estimate,
    /// `E f(S_n) - E f(S_n^dagger)`
    pub total: Estimate,
    /// `|sum_i (E I_i + E II_i + E R_i) - total|`
    pub telescoping_residual: f64,
    /// Final Gauss-Hermite order (enumeration only).
    pub quadrature_order: Option<usize>,
    /// Largest change of `E f(T_j)` at the last doubling (enumeration only).
    pub quadrature_change: Option<f64>,
}

/// Runs the decomposition for `f` on the model `spec`.
pub fn lindeberg_decompose(
    spec: &DistributionSpec,
    f: &Composite,
    mode: DecomposeMode,
) -> Result<Decomposition> {
    spec.validate()?;
    if f.params().d() != spec.d {
        return Err(Error::Shape {
            expected: spec.d,
            actual: f.params().d(),
        });
    }
    match mode {
        DecomposeMode::Enumerate => enumerate(spec, f),
        DecomposeMode::MonteCarlo { reps, seed } => monte_carlo(spec, f, reps, seed),
    }
}

/// Tensor-product normal rule in `d` dimensions mapped through `factor`.
struct GaussGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussGrid {
    fn new(factor: &DMatrix<f64>, order: usize) -> Result<Self> {
        let d = factor.nrows();
        let (x, w) = normal_rule(order)?;
        let count = order.pow(d as u32);
        let mut points = Vec::with_capacity(count * d);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; d];
        for _ in 0..count {
            let z = DVector::from_iterator(d, idx.iter().map(|&k| x[k]));
            points.extend((factor * z).iter());
            weights.push(idx.iter().map(|&k| w[k]).product());
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < order {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self { points, weights })
    }

    /// The degenerate law at 0.
    fn origin(d: usize) -> Self {
        Self {
            points: vec![0.0; d],
            weights: vec![1.0],
        }
    }
}

/// All values of `A (xi_1 + ... + xi_k)` over sign patterns, each with
/// probability `2^{-k d}`.
fn pattern_sums(mix: &DMatrix<f64>, count: usize) -> Vec<f64> {
    let d = mix.nrows();
    let bits = count * d;
    let mut out = Vec::with_capacity((1usize << bits) * d);
    for mask in 0..(1usize << bits) {
        let mut xi = DVector::zeros(d);
        for b in 0..bits {
            xi[b % d] += if mask >> b & 1 == 1 { 1.0 } else { -1.0 };
        }
        out.extend((mix * xi).iter());
    }
    out
}

fn check_work(nodes: usize, patterns: usize) -> Result<()> {
    if nodes.saturating_mul(patterns) > MAX_WORK {
        return Err(Error::TooLarge(format!(
            "{nodes} quadrature nodes x {patterns} sign patterns exceeds the enumeration budget"
        )));
    }
    Ok(())
}

/// `E f(T_j)` for `j = 1, ..., n + 1` at one quadrature order.
fn expectations_of_t(
    f: &Composite,
    mix: &DMatrix<f64>,
    n: usize,
    order: usize,
) -> Result<Vec<f64>> {
    let d = mix.nrows();
    let mut out = Vec::with_capacity(n + 1);
    for j in 1..=n + 1 {
        // sum_{k<j} Y_k ~ N(0, (j - 1) Sigma); here Sigma = A A^T
        let nodes = if j == 1 {
            1
        } else {
            order.saturating_pow(d as u32)
        };
        check_work(nodes, 1usize << ((n + 1 - j) * d))?;
        let grid = if j == 1 {
            GaussGrid::origin(d)
        } else {
            GaussGrid::new(&(mix * ((j - 1) as f64).sqrt()), order)?
        };
        let xs = pattern_sums(mix, n + 1 - j);
        let patterns = xs.len() / d;
        let p = 1.0 / patterns as f64;
        let total: f64 = grid
            .points
            .par_chunks(d)
            .zip(grid.weights.par_iter())
            .map(|(u, &w)| {
                let mut t = vec![0.0; d];
                let mut acc = 0.0;
                for s in xs.chunks(d) {
                    for k in 0..d {
                        t[k] = u[k] + s[k];
                    }
                    acc += f.value_unchecked(&t);
                }
                w * acc * p
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        out.push(total);
    }
    Ok(out)
}

fn enumerate(spec: &DistributionSpec, f: &Composite) -> Result<Decomposition> {
    if spec.family != Family::Rademacher {
        return Err(Error::Unsupported(format!(
            "enumeration needs a finitely supported family, got {:?}",
            spec.family
        )));
    }
    let (n, d) = (spec.n, spec.d);
    if n * d > ENUMERATE_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "enumeration needs n * d <= {ENUMERATE_MAX_CELLS}, got {}",
            n * d
        )));
    }
    // Rademacher coordinates have unit variance, so Sigma = R whether or
    // not the spec asks for standardization.
    let mix = cholesky(spec.correlation())?;

    // E f(T_j), doubling the order until successive values agree.
    let mut order = BASE_ORDER;
    let mut current = expectations_of_t(f, &mix, n, order)?;
    let mut change = f64::INFINITY;
    loop {
        let next_order = order * 2;
        let next = match expectations_of_t(f, &mix, n, next_order) {
            Ok(v) => v,
            Err(Error::TooLarge(_)) => break,
            Err(e) => return Err(e),
        };
        change = current
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = next;
        order = next_order;
        if change <= QUADRATURE_TOL || order >= 640 {
            break;
        }
    }
    let ef_t = current;

    // E I_i and E II_i as full tensor sums over (L_i, X_i, Y_i).
    let y_nodes = BASE_ORDER.saturating_pow(d as u32);
    check_work(y_nodes, 1)?;
    let (yx, yw) = {
        let g = GaussGrid::new(&mix, BASE_ORDER)?;
        (g.points, g.weights)
    };
    let xi_patterns = pattern_sums(&mix, 1);
    let xi_p = 1.0 / (xi_patterns.len() / d) as f64;

    let mut terms = Vec::with_capacity(n);
    for i in 1..=n {
        let u_nodes = if i == 1 { 1 } else { y_nodes };
        check_work(u_nodes * (1usize << ((n - i) * d)), y_nodes + (1usize << d))?;
        let u_grid = if i == 1 {
            GaussGrid::origin(d)
        } else {
            GaussGrid::new(&(&mix * ((i - 1) as f64).sqrt()), BASE_ORDER)?
        };
        let rest = pattern_sums(&mix, n - i);
        let rest_p = 1.0 / (rest.len() / d) as f64;

        let (first, second) = u_grid
            .points
            .par_chunks(d)
            .zip(u_grid.weights.par_iter())
            .map(|(u, &wu)| {
                let mut l = vec![0.0; d];
                let (mut e1, mut e2) = (0.0, 0.0);
                for s in rest.chunks(d) {
                    for k in 0..d {
                        l[k] = u[k] + s[k];
                    }
                    let (_, grad, hess) = f.derivatives(&l);
                    let w_l = wu * rest_p;
                    let lin = |v: &[f64]| v.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>();
                    let quad = |v: &[f64]| {
                        let mut q = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                q += v[a] * hess[(a, b)] * v[b];
                            }
                        }
                        0.5 * q
                    };
                    for x in xi_patterns.chunks(d) {
                        e1 += w_l * xi_p * lin(x);
                        e2 += w_l * xi_p * quad(x);
                    }
                    for (y, &wy) in yx.chunks(d).zip(&yw) {
                        e1 -= w_l * wy * lin(y);
                        e2 -= w_l * wy * quad(y);
                    }
                }
                (e1, e2)
            })
            .collect::<Vec<_>>()
            .iter()
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));

        let remainder = ef_t[i - 1] - ef_t[i] - first - second;
        terms.push(SwapTerm {
            i,
            first_order: Estimate::exact(first),
            second_order: Estimate::exact(second),
            remainder: Estimate::exact(remainder),
        });
    }
    let total = ef_t[0] - ef_t[n];
    let summed: f64 = terms
        .iter()
        .map(|t| t.first_order.value + t.second_order.value + t.remainder.value)
        .sum();
    Ok(Decomposition {
        mode: DecomposeMode::Enumerate,
        terms,
        ef_sum: Estimate::exact(ef_t[0]),
        ef_gaussian: Estimate::exact(ef_t[n]),
        total: Estimate::exact(total),
        telescoping_residual: (summed - total).abs(),
        quadrature_order: Some(order),
        quadrature_change: Some(change),
    })
}

fn monte_carlo(
    spec: &DistributionSpec,
    f: &Composite,
    reps: usize,
    seed: u64,
) -> Result<Decomposition> {
    if reps < 2 {
        return domain(format!(
            "Monte Carlo decomposition needs reps >= 2, got {reps}"
        ));
    }
    let (n, d) = (spec.n, spec.d);
    let sampler = Sampler::new(spec)?;

    // per replication: [I_1, II_1, R_1, ..., I_n, II_n, R_n, f(S_n), f(S_n^dagger)]
    let rows: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Purpose::Lindeberg, r as u64);
            let mut xb = vec![0.0; n * d];
            let mut yb = vec![0.0; n * d];
            sampler.draw_x(&mut rng, &mut xb);
            sampler.draw_y(&mut rng, &mut yb);
            let mut t: Vec<f64> = vec![0.0; d];
            for row in xb.chunks(d) {
                for k in 0..d {
                    t[k] += row[k];
                }
            }
            let mut out = Vec::with_capacity(3 * n + 2);
            let f_first = f.value_unchecked(&t);
            let mut f_ti = f_first;
            let mut l = vec![0.0; d];
            for i in 0..n {
                let x = &xb[i * d..(i + 1) * d];
                let y = &yb[i * d..(i + 1) * d];
                for k in 0..d {
                    l[k] = t[k] - x[k];
                }
                for k in 0..d {
                    t[k] = l[k] + y[k];
                }
                let f_next = f.value_unchecked(&t);
                let (_, grad, hess) = f.derivatives(&l);
                let first: f64 = (0..d).map(|k| (x[k] - y[k]) * grad[k]).sum();
                let mut second = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        second += 0.5 * hess[(a, b)] * (x[a] * x[b] - y[a] * y[b]);
                    }
                }
                out.extend([first, second, f_ti - f_next - first - second]);
                f_ti = f_next;
            }
            out.extend([f_first, f_ti]);
            out
        })
        .collect();

    let column = |c: usize| -> Vec<f64> { rows.iter().map(|r| r[c]).collect() };
    let terms: Vec<SwapTerm> = (0..n)
        .map(|i| SwapTerm {
            i: i + 1,
            first_order: Estimate::from_samples(&column(3 * i)),
            second_order: Estimate::from_samples(&column(3 * i + 1)),
            remainder: Estimate::from_samples(&column(3 * i + 2)),
        })
        .collect();
    let ef_sum = Estimate::from_samples(&column(3 * n));
    let ef_gaussian = Estimate::from_samples(&column(3 * n + 1));
    let diffs: Vec<f64> = rows.iter().map(|r| r[3 * n] - r[3 * n + 1]).collect();
    let total = Estimate::from_samples(&diffs);
    let summed: f64 = terms
        .iter()
        .map(|t| t.first_order.value + t.second_order.value + t.remainder.value)
        .sum();
    Ok(Decomposition {
        mode: DecomposeMode::MonteCarlo { reps, seed },
        terms,
        ef_sum,
        ef_gaussian,
        total,
        telescoping_residual: (summed - total.value).abs(),
        quadrature_order: None,
        quadrature_change: None,
    })
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ecdf::{count_at_most, sorted_distance};
use super::rng::{stream, Purpose};
use super::spec::{DistributionSpec, Sampler};
use super::with_workers;
use crate::bounds::{l_n, moment_profile, BoundReport, MomentProfile};
use crate::error::{domain, Error, Result};
use crate::smoothmax::SmoothingParams;

pub const STRASSEN_GRID_POINTS: usize = 201;
pub const MIN_EXPERIMENT_REPS: usize = 1000;

/// One threshold of the check `P(Z <= t) - P(Z^dagger <= t + radius) <= bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrassenPoint {
    pub threshold: f64,
    pub lhs: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: DistributionSpec,
    pub params: SmoothingParams,
    pub reps: usize,
    pub seed: u64,
    /// Draws of `Z = max_j sum_i X_ij`.
    pub z_samples: Vec<f64>,
    /// Independent draws of `Z^dagger = max_j sum_i Y_ij`.
    pub z_dagger_samples: Vec<f64>,
    pub kolmogorov: f64,
    pub profile: MomentProfile,
    pub bound: BoundReport,
    pub strassen_grid: Vec<StrassenPoint>,
}

impl ExperimentResult {
    pub fn violations(&self) -> usize {
        self.strassen_grid.iter().filter(|p| p.violated).count()
    }

    pub fn max_lhs(&self) -> f64 {
        self.strassen_grid
            .iter()
            .map(|p| p.lhs)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExperimentOptions {
    /// Worker threads; `None` uses the global pool. Results do not depend
    /// on this.
    pub workers: Option<usize>,
    /// Replications for the moment profile; defaults to `reps`.
    pub profile_reps: Option<usize>,
}

pub fn run_experiment(
    spec: &DistributionSpec,
    params: &SmoothingParams,
    reps: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    run_experiment_with(spec, params, reps, seed, ExperimentOptions::default())
}

fn column_max(block: &[f64], n: usize, d: usize) -> f64 {
    (0..d)
        .map(|j| (0..n).map(|i| block[i * d + j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_experiment_with(
    spec: &DistributionSpec,
    params: &SmoothingParams,
    reps: usize,
    seed: u64,
    opts: ExperimentOptions,
) -> Result<ExperimentResult> {
    if reps < MIN_EXPERIMENT_REPS {
        return domain(format!(
            "experiments need reps >= {MIN_EXPERIMENT_REPS}, got {reps}"
        ));
    }
    if params.d() != spec.d {
        return Err(Error::Shape {
            expected: spec.d,
            actual: params.d(),
        });
    }
    let sampler = Sampler::new(spec)?;
    let (n, d) = (spec.n, spec.d);

    let (pairs, profile) = with_workers(opts.workers, || {
        let pairs: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map_init(
                || vec![0.0; n * d],
                |buf, r| {
                    sampler.draw_x(&mut stream(seed, Purpose::X, r as u64), buf);
                    let z = column_max(buf, n, d);
                    sampler.draw_y(&mut stream(seed, Purpose::Y, r as u64), buf);
                    (z, column_max(buf, n, d))
                },
            )
            .collect();
        let profile = moment_profile(
            spec,
            params.iota(),
            Some(opts.profile_reps.unwrap_or(reps)),
            seed,
        );
        (pairs, profile)
    });
    let profile = profile?;
    let bound = l_n(params, &profile)?;

    let (z_samples, z_dagger_samples): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let mut zs = z_samples.clone();
    let mut zd = z_dagger_samples.clone();
    zs.sort_by(f64::total_cmp);
    zd.sort_by(f64::total_cmp);
    let kolmogorov = sorted_distance(&zs, &zd);

    // thresholds span the pooled range padded by one pooled standard deviation
    let pooled = zs.iter().chain(&zd);
    let count = (2 * reps) as f64;
    let mean = pooled.clone().sum::<f64>() / count;
    let sd = (pooled.clone().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0)).sqrt();
    let lo = zs[0].min(zd[0]) - sd;
    let hi = zs[reps - 1].max(zd[reps - 1]) + sd;
    let radius = bound.radius;
    let strassen_grid = (0..STRASSEN_GRID_POINTS)
        .map(|k| {
            let t = lo + (hi - lo) * k as f64 / (STRASSEN_GRID_POINTS - 1) as f64;
            let p_z = count_at_most(&zs, t) as f64 / reps as f64;
            let p_zd = count_at_most(&zd, t + radius) as f64 / reps as f64;
            let lhs = p_z - p_zd;
            StrassenPoint {
                threshold: t,
                lhs,
                bound: bound.prob_bound,
                violated: lhs > bound.prob_bound,
            }
        })
        .collect();

    Ok(ExperimentResult {
        spec: *spec,
        params: *params,
        reps,
        seed,
        z_samples,
        z_dagger_samples,
        kolmogorov,
        profile,
        bound,
        strassen_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{dkw_two_sample_threshold, Covariance, Family};

    fn spec(family: Family, n: usize, d: usize) -> DistributionSpec {
        DistributionSpec {
            family,
            covariance: Covariance::Identity,
            n,
            d,
            standardized: true,
        }
    }

    #[test]
    fn gaussian_null() {
        let s = spec(Family::Gaussian, 4, 3);
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 3).unwrap();
        let reps = 5000;
        let r = run_experiment(&s, &p, reps, 42).unwrap();
        assert!(r.kolmogorov <= dkw_two_sample_threshold(reps, reps, 0.001));
        assert_eq!(r.strassen_grid.len(), STRASSEN_GRID_POINTS);
        assert!(r.strassen_grid.iter().all(|pt| pt.lhs <= 0.0));
        assert_eq!(r.violations(), 0);
    }

    #[test]
    fn rademacher_vs_normal_single_coordinate() {
        // sup_t |F_R(t) - Phi(t)| = Phi(1) - 1/2
        let s = spec(Family::Rademacher, 1, 1);
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 1).unwrap();
        let reps = 100_000;
        let r = run_experiment(&s, &p, reps, 9).unwrap();
        let exact = 0.341_344_746_068_542_9;
        let tol = dkw_two_sample_threshold(reps, reps, 0.001);
        assert!((r.kolmogorov - exact).abs() < tol, "{}", r.kolmogorov);
    }

    #[test]
    fn guards() {
        let s = spec(Family::Gaussian, 1, 2);
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 2).unwrap();
        assert!(run_experiment(&s, &p, 10, 0).is_err());
        let p3 = p.with_dim(3).unwrap();
        assert!(matches!(
            run_experiment(&s, &p3, 1000, 0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn worker_count_does_not_matter() {
        let s = spec(Family::StudentT { dof: 4.0 }, 5, 4);
        let p = SmoothingParams::new(1.0, 2.0, 0.5, 4).unwrap();
        let one = run_experiment_with(
            &s,
            &p,
            1000,
            3,
            ExperimentOptions {
                workers: Some(1),
                profile_reps: None,
            },
        )
        .unwrap();
        let four = run_experiment_with(
            &s,
            &p,
            1000,
            3,
            ExperimentOptions {
                workers: Some(4),
                profile_reps: None,
            },
        )
        .unwrap();
        assert_eq!(one, four);
    }
}

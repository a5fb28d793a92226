use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Purpose};
use crate::error::{domain, Error, Result};

/// Law of one standardized-before-mixing coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Gaussian,
    Rademacher,
    StudentT {
        dof: f64,
    },
    /// `sign * P` with `P(|X| > r) = r^-alpha` for `r >= 1`.
    SymPareto {
        alpha: f64,
    },
}

impl Family {
    /// Absolute moments of order strictly below this are finite.
    pub fn tail_index(&self) -> f64 {
        match *self {
            Family::Gaussian | Family::Rademacher => f64::INFINITY,
            Family::StudentT { dof } => dof,
            Family::SymPareto { alpha } => alpha,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Family::Gaussian | Family::Rademacher => 1.0,
            Family::StudentT { dof } => dof / (dof - 2.0),
            Family::SymPareto { alpha } => alpha / (alpha - 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Covariance {
    Identity,
    Equicorr { rho: f64 },
    Ar1 { rho: f64 },
}

/// Generative model for `X_1, ..., X_n` in `R^d`: i.i.d. coordinates from
/// `family`, optionally scaled to unit variance, then mixed by a Cholesky
/// factor of the correlation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub family: Family,
    pub covariance: Covariance,
    pub n: usize,
    pub d: usize,
    pub standardized: bool,
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return domain("n and d must be positive");
        }
        match self.family {
            Family::StudentT { dof } if !(dof > 2.0) || dof.is_infinite() => {
                return domain(format!("Student-t needs finite dof > 2, got {dof}"))
            }
            Family::SymPareto { alpha } if !(alpha > 2.0) || alpha.is_infinite() => {
                return domain(format!("Pareto needs finite alpha > 2, got {alpha}"))
            }
            _ => {}
        }
        match self.covariance {
            Covariance::Equicorr { rho } if !(0.0..1.0).contains(&rho) => {
                domain(format!("equicorrelation needs rho in [0, 1), got {rho}"))
            }
            Covariance::Ar1 { rho } if !(rho > -1.0 && rho < 1.0) => {
                domain(format!("AR(1) needs rho in (-1, 1), got {rho}"))
            }
            _ => Ok(()),
        }
    }

    pub fn has_identity_covariance(&self) -> bool {
        self.d == 1
            || matches!(self.covariance, Covariance::Identity)
            || matches!(self.covariance, Covariance::Equicorr { rho } | Covariance::Ar1 { rho } if rho == 0.0)
    }

    /// Correlation model `R` (unit diagonal).
    pub fn correlation(&self) -> DMatrix<f64> {
        let d = self.d;
        match self.covariance {
            Covariance::Identity => DMatrix::identity(d, d),
            Covariance::Equicorr { rho } => {
                DMatrix::from_fn(d, d, |j, k| if j == k { 1.0 } else { rho })
            }
            Covariance::Ar1 { rho } => {
                DMatrix::from_fn(d, d, |j, k| rho.powi((j as i32 - k as i32).abs()))
            }
        }
    }

    /// Variance of each coordinate of `X_i`.
    pub fn coordinate_variance(&self) -> f64 {
        if self.standardized {
            1.0
        } else {
            self.family.variance()
        }
    }

    /// `Sigma = E X_i X_i^T`, exact.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        self.correlation() * self.coordinate_variance()
    }
}

/// Lower-triangular factor of a symmetric positive-definite matrix.
pub fn cholesky(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.cholesky().map(|c| c.l()).ok_or(Error::IllConditioned)
}

/// Replicated `reps x n x d` draws, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub reps: usize,
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl Ensemble {
    pub fn get(&self, rep: usize, i: usize, j: usize) -> f64 {
        self.data[(rep * self.n + i) * self.d + j]
    }

    /// The `n x d` block of one replication.
    pub fn replication(&self, rep: usize) -> &[f64] {
        let size = self.n * self.d;
        &self.data[rep * size..(rep + 1) * size]
    }
}

/// Precomputed factors for drawing `X` and its Gaussian analogue.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: DistributionSpec,
    mix: DMatrix<f64>,
    coord_scale: f64,
    gauss_scale: f64,
    student: Option<StudentT<f64>>,
}

impl Sampler {
    pub fn new(spec: &DistributionSpec) -> Result<Self> {
        spec.validate()?;
        let mix = cholesky(spec.correlation())?;
        let raw_sd = spec.family.variance().sqrt();
        let student = match spec.family {
            Family::StudentT { dof } => {
                Some(StudentT::new(dof).map_err(|e| Error::Domain(e.to_string()))?)
            }
            _ => None,
        };
        Ok(Self {
            spec: *spec,
            mix,
            coord_scale: if spec.standardized { 1.0 / raw_sd } else { 1.0 },
            gauss_scale: spec.coordinate_variance().sqrt(),
            student,
        })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    /// Mixing factor `A` with `A A^T = R`.
    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mix
    }

    fn coordinate<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.spec.family {
            Family::Gaussian => StandardNormal.sample(rng),
            Family::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Family::StudentT { .. } => self.student.as_ref().unwrap().sample(rng),
            Family::SymPareto { alpha } => {
                // 1 - U lies in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                let r = u.powf(-1.0 / alpha);
                if rng.random::<bool>() {
                    r
                } else {
                    -r
                }
            }
        }
    }

    fn mix_rows(&self, out: &mut [f64], scale: f64) {
        let d = self.spec.d;
        let mut tmp = vec![0.0; d];
        for row in out.chunks_mut(d) {
            for j in 0..d {
                tmp[j] = (0..=j).map(|k| self.mix[(j, k)] * row[k]).sum::<f64>() * scale;
            }
            row.copy_from_slice(&tmp);
        }
    }

    /// Fills `out` (length `n * d`) with one draw of `X_1, ..., X_n`.
    pub fn draw_x<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.spec.n * self.spec.d);
        for v in out.iter_mut() {
            *v = self.coordinate(rng);
        }
        self.mix_rows(out, self.coord_scale);
    }

    /// Fills `out` with one draw of `Y_1, ..., Y_n ~ N(0, Sigma)`.
    pub fn draw_y<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.spec.n * self.spec.d);
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        self.mix_rows(out, self.gauss_scale);
    }
}

fn replicate(
    spec: &DistributionSpec,
    reps: usize,
    seed: u64,
    purpose: Purpose,
) -> Result<Ensemble> {
    let sampler = Sampler::new(spec)?;
    let size = spec.n * spec.d;
    let mut data = vec![0.0; reps * size];
    data.par_chunks_mut(size.max(1))
        .enumerate()
        .for_each(|(r, block)| {
            let mut rng = stream(seed, purpose, r as u64);
            match purpose {
                Purpose::Y | Purpose::ProfileY => sampler.draw_y(&mut rng, block),
                _ => sampler.draw_x(&mut rng, block),
            }
        });
    Ok(Ensemble {
        reps,
        n: spec.n,
        d: spec.d,
        data,
    })
}

/// `reps` independent replications of `X_1, ..., X_n`.
pub fn sample_x(spec: &DistributionSpec, reps: usize, seed: u64) -> Result<Ensemble> {
    replicate(spec, reps, seed, Purpose::X)
}

/// `reps` independent replications of the Gaussian analogue `Y_1, ..., Y_n`.
pub fn gaussian_analogue(spec: &DistributionSpec, reps: usize, seed: u64) -> Result<Ensemble> {
    replicate(spec, reps, seed, Purpose::Y)
}

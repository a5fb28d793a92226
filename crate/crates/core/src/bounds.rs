//! The explicit bound `L_n(gamma, delta, iota)`, its moment functionals and
//! the resulting coupling radius and probability bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::simulate::rng::{stream, Purpose};
use crate::simulate::{DistributionSpec, Family, Sampler};
use crate::smoothmax::{epsilon_formula, SmoothingParams};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "crate::serde_real")]
    pub value: f64,
    #[serde(with = "crate::serde_real")]
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self {
                value: mean,
                se: 0.0,
            };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self {
            value: mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSource {
    Analytic,
    MonteCarlo { reps: usize, seed: u64 },
}

/// Moment functionals entering `L_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    /// `E max_j sum_i |X_ij|^3`
    pub third_max_x: Estimate,
    /// `E max_j sum_i |Y_ij|^3`
    pub third_max_y: Estimate,
    /// `sum_i C_i(2 + iota)`
    pub c_sum: Estimate,
    pub n: usize,
    pub d: usize,
    pub iota: f64,
    pub source: ProfileSource,
}

impl MomentProfile {
    /// Profile with all moments zero (`X = Y = 0`).
    pub fn degenerate(n: usize, d: usize, iota: f64) -> Self {
        Self {
            third_max_x: Estimate::exact(0.0),
            third_max_y: Estimate::exact(0.0),
            c_sum: Estimate::exact(0.0),
            n,
            d,
            iota,
            source: ProfileSource::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [
            ("third_max_x", self.third_max_x),
            ("third_max_y", self.third_max_y),
            ("c_sum", self.c_sum),
        ] {
            if e.value.is_nan() || e.value < 0.0 || e.se.is_nan() || e.se < 0.0 {
                return domain(format!("{name} must be a nonnegative estimate, got {e:?}"));
            }
            if self.source == ProfileSource::Analytic && e.se != 0.0 {
                return domain(format!("{name}: analytic profiles carry no standard error"));
            }
        }
        if !(0.0..=1.0).contains(&self.iota) {
            return domain(format!("iota must lie in [0, 1], got {}", self.iota));
        }
        Ok(())
    }
}

/// Every quantity of the coupling bound for one `(gamma, delta)`.
///
/// `prob_bound` is the probability bound up to a universal constant that
/// is not made explicit; it is reported with that constant set to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub delta: f64,
    pub iota: f64,
    pub epsilon: f64,
    pub c_gamma: f64,
    #[serde(with = "crate::serde_real")]
    pub term1: f64,
    #[serde(with = "crate::serde_real")]
    pub term1_se: f64,
    #[serde(with = "crate::serde_real")]
    pub term2: f64,
    #[serde(with = "crate::serde_real")]
    pub term2_se: f64,
    #[serde(with = "crate::serde_real")]
    pub l_n: f64,
    #[serde(with = "crate::serde_real")]
    pub l_n_se: f64,
    pub radius: f64,
    /// `(epsilon + l_n) / (1 - epsilon)` before clipping.
    #[serde(with = "crate::serde_real")]
    pub raw_bound: f64,
    pub prob_bound: f64,
    #[serde(with = "crate::serde_real")]
    pub prob_bound_se: f64,
    pub clipped: bool,
    pub constant_note: String,
}

pub const CONSTANT_NOTE: &str = "up to an unspecified universal constant (taken as 1)";

/// `gamma delta exp(-(gamma^2 delta^2 - 1) / 2)`.
pub fn epsilon_of(params: &SmoothingParams) -> f64 {
    params.epsilon()
}

/// Validating form of [`epsilon_of`] for raw `(gamma, delta)`.
pub fn epsilon_from(gamma: f64, delta: f64) -> Result<f64> {
    let u = gamma * delta;
    if !(u > 1.0) || !u.is_finite() {
        return domain(format!("gamma * delta must exceed 1, got {u}"));
    }
    let e = epsilon_formula(u);
    if e >= 1.0 {
        return domain(format!("epsilon rounds to {e} for gamma * delta = {u}"));
    }
    Ok(e)
}

/// Both sides of `min{a + x + x^2, x^3} <= 3 a^{(1 - iota)/3} x^{2 + iota}`.
pub fn lemma3_bound(a: f64, x: f64, iota: f64) -> Result<(f64, f64)> {
    if !(a >= 1.0) || !a.is_finite() {
        return domain(format!("a must be finite and >= 1, got {a}"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("x must be finite and >= 0, got {x}"));
    }
    if !(0.0..=1.0).contains(&iota) {
        return domain(format!("iota must lie in [0, 1], got {iota}"));
    }
    let lhs = (a + x + x * x).min(x * x * x);
    let rhs = 3.0 * a.powf((1.0 - iota) / 3.0) * x.powf(2.0 + iota);
    Ok((lhs, rhs))
}

/// Evaluates `L_n` and the derived radius and probability bound.
pub fn l_n(params: &SmoothingParams, profile: &MomentProfile) -> Result<BoundReport> {
    profile.validate()?;
    if (profile.iota - params.iota()).abs() > 1e-12 {
        return domain(format!(
            "profile iota {} does not match parameter iota {}",
            profile.iota,
            params.iota()
        ));
    }
    let (g, dl, iota) = (params.gamma(), params.delta(), params.iota());
    let scale1 = g * g / dl;
    let third = profile.third_max_x.value + profile.third_max_y.value;
    let term1 = scale1 * third;
    let term1_se = scale1 * profile.third_max_x.se.hypot(profile.third_max_y.se);

    let scale2 = g.powf((4.0 + 2.0 * iota) / 3.0) * dl.powf(-(2.0 + iota) / 3.0);
    let term2 = scale2 * profile.c_sum.value;
    let term2_se = scale2 * profile.c_sum.se;

    let (l, l_se) = if term1 <= term2 {
        (term1, term1_se)
    } else {
        (term2, term2_se)
    };
    let eps = params.epsilon();
    let raw = (eps + l) / (1.0 - eps);
    let clipped = !(raw <= 1.0);
    Ok(BoundReport {
        gamma: g,
        delta: dl,
        iota,
        epsilon: eps,
        c_gamma: params.c_gamma(),
        term1,
        term1_se,
        term2,
        term2_se,
        l_n: l,
        l_n_se: l_se,
        radius: params.c_gamma() + 3.0 * dl,
        raw_bound: raw,
        prob_bound: if clipped { 1.0 } else { raw },
        prob_bound_se: if clipped { 0.0 } else { l_se / (1.0 - eps) },
        clipped,
        constant_note: CONSTANT_NOTE.to_string(),
    })
}

/// `E|N(0, 1)|^q = 2^{q/2} Gamma((q + 1)/2) / sqrt(pi)`.
pub fn gaussian_abs_moment(q: f64) -> f64 {
    (0.5 * q * std::f64::consts::LN_2 + ln_gamma(0.5 * (q + 1.0)) - 0.5 * std::f64::consts::PI.ln())
        .exp()
}

/// `E max_{j <= d} |Z_j|^q` for i.i.d. standard normals, via
/// `int_0^inf q r^{q-1} (1 - erf(r / sqrt 2)^d) dr` with `r = s^2`.
pub fn gaussian_max_abs_moment(q: f64, d: usize) -> f64 {
    let tail = |r: f64| {
        let c = erfc(r / std::f64::consts::SQRT_2);
        if d == 1 {
            c
        } else {
            -((d as f64) * (-c).ln_1p()).exp_m1()
        }
    };
    // tail(r) < 1e-30 * d beyond r = 12
    let upper = 12.0f64.sqrt();
    let steps = 4000;
    let h = upper / steps as f64;
    let integrand = |s: f64| {
        if s == 0.0 {
            0.0
        } else {
            2.0 * q * s.powf(2.0 * q - 1.0) * tail(s * s)
        }
    };
    let mut acc = integrand(0.0) + integrand(upper);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(k as f64 * h);
    }
    acc * h / 3.0
}

impl Family {
    /// Raw absolute moment `E|xi|^q` of one coordinate before scaling;
    /// infinite when `q` reaches the tail index.
    pub fn abs_moment(&self, q: f64) -> f64 {
        if q >= self.tail_index() {
            return f64::INFINITY;
        }
        match *self {
            Family::Gaussian => gaussian_abs_moment(q),
            Family::Rademacher => 1.0,
            Family::StudentT { dof } => (0.5 * q * dof.ln()
                + ln_beta(0.5 * (q + 1.0), 0.5 * (dof - q))
                - ln_beta(0.5, 0.5 * dof))
            .exp(),
            Family::SymPareto { alpha } => alpha / (alpha - q),
        }
    }
}

/// Moment profile for `spec` at `q = 2 + iota`.
///
/// `reps = None` requests the analytic path, available when `d = 1` or
/// when `n = 1` with identity covariance and Gaussian or Rademacher
/// coordinates. Otherwise Monte Carlo with `reps >= 100` replications.
/// Functionals of a coordinate law whose moment of that order is infinite
/// are reported as `+inf` with zero standard error on either path.
pub fn moment_profile(
    spec: &DistributionSpec,
    iota: f64,
    reps: Option<usize>,
    seed: u64,
) -> Result<MomentProfile> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&iota) {
        return domain(format!("iota must lie in [0, 1], got {iota}"));
    }
    let q = 2.0 + iota;
    if q >= spec.family.tail_index() {
        return domain(format!(
            "the {q}-th moment of {:?} is infinite; iota too large for this family",
            spec.family
        ));
    }
    match reps {
        None => analytic_profile(spec, iota),
        Some(r) if r < 100 => domain(format!("Monte Carlo profile needs reps >= 100, got {r}")),
        Some(r) => Ok(monte_carlo_profile(spec, iota, r, seed)),
    }
}

fn analytic_profile(spec: &DistributionSpec, iota: f64) -> Result<MomentProfile> {
    let q = 2.0 + iota;
    let n = spec.n as f64;
    let var = spec.coordinate_variance();
    let sd = var.sqrt();
    let raw_var = spec.family.variance();
    // coordinates of X have variance `var`; the raw draw has `raw_var`
    let x_moment = |p: f64| spec.family.abs_moment(p) * (var / raw_var).powf(p / 2.0);

    let (x3, xq, y3, yq) = if spec.d == 1 {
        (
            x_moment(3.0),
            x_moment(q),
            sd.powi(3) * gaussian_abs_moment(3.0),
            sd.powf(q) * gaussian_abs_moment(q),
        )
    } else if spec.n == 1 && spec.has_identity_covariance() {
        let g3 = sd.powi(3) * gaussian_max_abs_moment(3.0, spec.d);
        let gq = sd.powf(q) * gaussian_max_abs_moment(q, spec.d);
        match spec.family {
            Family::Rademacher => (sd.powi(3), sd.powf(q), g3, gq),
            Family::Gaussian => (g3, gq, g3, gq),
            _ => {
                return Err(Error::Unsupported(format!(
                    "no analytic max-moment for {:?} with d > 1",
                    spec.family
                )))
            }
        }
    } else {
        return Err(Error::Unsupported(
            "analytic profiles need d = 1, or n = 1 with identity covariance".into(),
        ));
    };
    Ok(MomentProfile {
        third_max_x: Estimate::exact(n * x3),
        third_max_y: Estimate::exact(n * y3),
        c_sum: Estimate::exact(n * (xq + yq)),
        n: spec.n,
        d: spec.d,
        iota,
        source: ProfileSource::Analytic,
    })
}

fn monte_carlo_profile(
    spec: &DistributionSpec,
    iota: f64,
    reps: usize,
    seed: u64,
) -> MomentProfile {
    let q = 2.0 + iota;
    let (n, d) = (spec.n, spec.d);
    let sampler = Sampler::new(spec).expect("spec validated");
    let third_infinite = 3.0 >= spec.family.tail_index();

    let per_rep: Vec<[f64; 3]> = (0..reps)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n * d], vec![0.0; n * d]),
            |(xb, yb), r| {
                sampler.draw_x(&mut stream(seed, Purpose::ProfileX, r as u64), xb);
                sampler.draw_y(&mut stream(seed, Purpose::ProfileY, r as u64), yb);
                let third = |buf: &[f64]| {
                    (0..d)
                        .map(|j| (0..n).map(|i| buf[i * d + j].abs().powi(3)).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                let cq = |buf: &[f64]| {
                    buf.chunks(d)
                        .map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs())).powf(q))
                        .sum::<f64>()
                };
                [third(xb), third(yb), cq(xb) + cq(yb)]
            },
        )
        .collect();

    let column = |k: usize| -> Vec<f64> { per_rep.iter().map(|v| v[k]).collect() };
    let third_max_x = if third_infinite {
        Estimate::exact(f64::INFINITY)
    } else {
        Estimate::from_samples(&column(0))
    };
    MomentProfile {
        third_max_x,
        third_max_y: Estimate::from_samples(&column(1)),
        c_sum: Estimate::from_samples(&column(2)),
        n,
        d,
        iota,
        source: ProfileSource::MonteCarlo { reps, seed },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Covariance;

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
    fn epsilon_examples() {
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 1).unwrap();
        assert!((epsilon_of(&p) - 2.0 * (-1.5f64).exp()).abs() < 1e-16);
        assert!((epsilon_of(&p) - 0.446260).abs() < 1e-6);
        let p = SmoothingParams::new(10.0, 1.0, 0.5, 1).unwrap();
        assert!((epsilon_of(&p) / (10.0 * (-49.5f64).exp()) - 1.0).abs() < 1e-14);
        assert!((epsilon_of(&p) / 3.18e-21 - 1.0).abs() < 1e-2);
        assert!(epsilon_from(1.0, 1.0).is_err());
        assert!(epsilon_from(0.5, 1.0).is_err());
        let mut prev = 1.0;
        for k in 1..50 {
            let e = epsilon_from(1.0 + 1e-6 * k as f64, 1.0).unwrap();
            assert!(e < prev && e > 0.99);
            prev = e;
        }
    }

    #[test]
    fn lemma3_examples() {
        assert_eq!(lemma3_bound(1.0, 1.0, 0.0).unwrap(), (1.0, 3.0));
        assert_eq!(lemma3_bound(1.0, 2.0, 0.0).unwrap(), (7.0, 12.0));
        assert!(lemma3_bound(0.5, 1.0, 0.0).is_err());
        assert!(lemma3_bound(1.0, -1.0, 0.0).is_err());
        assert!(lemma3_bound(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn analytic_rademacher_third() {
        let p = moment_profile(&spec(Family::Rademacher, 5, 1), 0.5, None, 0).unwrap();
        assert_eq!(p.third_max_x, Estimate::exact(5.0));
        assert_eq!(p.source, ProfileSource::Analytic);
    }

    #[test]
    fn gaussian_third_abs_moment() {
        let expected = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((gaussian_abs_moment(3.0) - expected).abs() < 1e-13);
        assert!((gaussian_abs_moment(2.0) - 1.0).abs() < 1e-13);
        for q in [2.0, 2.5, 3.0] {
            let a = gaussian_abs_moment(q);
            let b = gaussian_max_abs_moment(q, 1);
            assert!((a - b).abs() < 1e-9, "{q}: {a} vs {b}");
        }
    }

    #[test]
    fn pareto_and_t_moments() {
        let f = Family::SymPareto { alpha: 3.0 };
        assert!((f.abs_moment(2.5) - 6.0).abs() < 1e-14);
        assert!(f.abs_moment(3.0).is_infinite());
        // E T^2 = dof / (dof - 2)
        let t = Family::StudentT { dof: 5.0 };
        assert!((t.abs_moment(2.0) - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn l_n_rademacher_iota_one() {
        let p = SmoothingParams::new(2.0, 2.0, 1.0, 1).unwrap();
        let prof = moment_profile(&spec(Family::Rademacher, 1, 1), 1.0, None, 0).unwrap();
        let r = l_n(&p, &prof).unwrap();
        let expected = 2.0 * (1.0 + 2.0 * (2.0 / std::f64::consts::PI).sqrt());
        assert!((r.term1 - expected).abs() < 1e-12);
        assert!((r.term2 - expected).abs() < 1e-12);
        assert!((r.l_n - 5.19154).abs() < 1e-5);
        assert_eq!(r.prob_bound, 1.0);
        assert!(r.clipped);
    }

    #[test]
    fn degenerate_profile() {
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 1).unwrap();
        let r = l_n(&p, &MomentProfile::degenerate(3, 1, 0.5)).unwrap();
        assert_eq!(r.l_n, 0.0);
        let e = p.epsilon();
        assert!((r.prob_bound - e / (1.0 - e)).abs() < 1e-15);
    }

    #[test]
    fn radius_example() {
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 100).unwrap();
        let r = l_n(&p, &MomentProfile::degenerate(1, 100, 0.5)).unwrap();
        assert!((r.radius - 5.30259).abs() < 1e-5);
    }

    #[test]
    fn iota_mismatch_and_bad_profile() {
        let p = SmoothingParams::new(2.0, 1.0, 0.5, 1).unwrap();
        assert!(l_n(&p, &MomentProfile::degenerate(1, 1, 0.25)).is_err());
        let mut prof = MomentProfile::degenerate(1, 1, 0.5);
        prof.c_sum.value = -1.0;
        assert!(l_n(&p, &prof).is_err());
        let mut prof = MomentProfile::degenerate(1, 1, 0.5);
        prof.c_sum.se = 0.1;
        assert!(l_n(&p, &prof).is_err());
    }

    #[test]
    fn analytic_requires_closed_form() {
        let s = spec(Family::SymPareto { alpha: 4.5 }, 2, 3);
        assert!(matches!(
            moment_profile(&s, 0.5, None, 0),
            Err(Error::Unsupported(_))
        ));
        assert!(moment_profile(&s, 0.5, Some(50), 0).is_err());
        assert!(
            moment_profile(&spec(Family::SymPareto { alpha: 2.4 }, 1, 1), 0.5, None, 0).is_err()
        );
    }

    #[test]
    fn infinite_third_moment_gives_infinite_term1() {
        let s = spec(Family::SymPareto { alpha: 2.75 }, 3, 2);
        let prof = moment_profile(&s, 0.5, Some(200), 1).unwrap();
        assert!(prof.third_max_x.value.is_infinite());
        assert!(prof.c_sum.value.is_finite());
        let p = SmoothingParams::new(0.02, 100.0, 0.5, 2).unwrap();
        let r = l_n(&p, &prof).unwrap();
        assert!(r.term1.is_infinite());
        assert_eq!(r.l_n, r.term2);
    }
}

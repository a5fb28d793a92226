//! Python bindings: `import maxgauss`.
//!
//! Reports cross the boundary as typed objects with the headline fields as
//! attributes, plus `to_json()` for everything else.

use mg::bounds::{self, ProfileSource};
use mg::simulate::{self, ExperimentOptions};
use mg::smoothmax;
use mg::tune::{self, Objective, SearchConfig, TuneRequest};
use mg::{BorelSet, Covariance, Family, Interval};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: mg::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(frozen, skip_from_py_object, module = "maxgauss")]
#[derive(Clone)]
struct SmoothingParams(mg::SmoothingParams);

#[pymethods]
impl SmoothingParams {
    #[new]
    #[pyo3(signature = (gamma, delta, iota, d))]
    fn new(gamma: f64, delta: f64, iota: f64, d: usize) -> PyResult<Self> {
        mg::SmoothingParams::new(gamma, delta, iota, d)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    #[getter]
    fn iota(&self) -> f64 {
        self.0.iota()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }

    #[getter]
    fn c_gamma(&self) -> f64 {
        self.0.c_gamma()
    }

    fn __repr__(&self) -> String {
        format!(
            "SmoothingParams(gamma={}, delta={}, iota={}, d={})",
            self.0.gamma(),
            self.0.delta(),
            self.0.iota(),
            self.0.d()
        )
    }
}

#[pyclass(frozen, skip_from_py_object, module = "maxgauss")]
#[derive(Clone)]
struct DistributionSpec(mg::DistributionSpec);

#[pymethods]
impl DistributionSpec {
    /// `family` is one of "gaussian", "rademacher", "student_t" (needs
    /// `dof`), "sym_pareto" (needs `alpha`); `covariance` is one of
    /// "identity", "equicorr", "ar1" (the latter two need `rho`).
    #[new]
    #[pyo3(signature = (family, n, d, *, dof=None, alpha=None, covariance="identity", rho=None, standardized=true))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        family: &str,
        n: usize,
        d: usize,
        dof: Option<f64>,
        alpha: Option<f64>,
        covariance: &str,
        rho: Option<f64>,
        standardized: bool,
    ) -> PyResult<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| PyValueError::new_err(format!("`{name}` is required")))
        };
        let family = match family {
            "gaussian" => Family::Gaussian,
            "rademacher" => Family::Rademacher,
            "student_t" => Family::StudentT {
                dof: need(dof, "dof")?,
            },
            "sym_pareto" => Family::SymPareto {
                alpha: need(alpha, "alpha")?,
            },
            other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
        };
        let covariance = match covariance {
            "identity" => Covariance::Identity,
            "equicorr" => Covariance::Equicorr {
                rho: need(rho, "rho")?,
            },
            "ar1" => Covariance::Ar1 {
                rho: need(rho, "rho")?,
            },
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown covariance {other:?}"
                )))
            }
        };
        let spec = mg::DistributionSpec {
            family,
            covariance,
            n,
            d,
            standardized,
        };
        spec.validate().map_err(err)?;
        Ok(Self(spec))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyclass(frozen, skip_from_py_object, module = "maxgauss")]
#[derive(Clone)]
struct MomentProfile(mg::MomentProfile);

#[pymethods]
impl MomentProfile {
    /// Profile from known moment functionals.
    #[new]
    #[pyo3(signature = (third_max_x, third_max_y, c_sum, n, d, iota))]
    fn new(
        third_max_x: f64,
        third_max_y: f64,
        c_sum: f64,
        n: usize,
        d: usize,
        iota: f64,
    ) -> PyResult<Self> {
        let p = mg::MomentProfile {
            third_max_x: bounds::Estimate::exact(third_max_x),
            third_max_y: bounds::Estimate::exact(third_max_y),
            c_sum: bounds::Estimate::exact(c_sum),
            n,
            d,
            iota,
            source: ProfileSource::Analytic,
        };
        p.validate().map_err(err)?;
        Ok(Self(p))
    }

    #[getter]
    fn third_max_x(&self) -> f64 {
        self.0.third_max_x.value
    }

    #[getter]
    fn third_max_y(&self) -> f64 {
        self.0.third_max_y.value
    }

    #[getter]
    fn c_sum(&self) -> f64 {
        self.0.c_sum.value
    }

    #[getter]
    fn iota(&self) -> f64 {
        self.0.iota
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyclass(frozen, module = "maxgauss")]
struct BoundReport(mg::BoundReport);

#[pymethods]
impl BoundReport {
    #[getter]
    fn l_n(&self) -> f64 {
        self.0.l_n
    }

    #[getter]
    fn term1(&self) -> f64 {
        self.0.term1
    }

    #[getter]
    fn term2(&self) -> f64 {
        self.0.term2
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.0.radius
    }

    #[getter]
    fn prob_bound(&self) -> f64 {
        self.0.prob_bound
    }

    #[getter]
    fn raw_bound(&self) -> f64 {
        self.0.raw_bound
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyclass(frozen, module = "maxgauss")]
struct SmoothIndicator(mg::SmoothIndicator);

#[pymethods]
impl SmoothIndicator {
    /// Smoothed indicator of the union of closed `intervals` (pairs
    /// `(lo, hi)`, infinite ends allowed).
    #[new]
    fn new(intervals: Vec<(f64, f64)>, params: &SmoothingParams) -> PyResult<Self> {
        let set = BorelSet::from_unsorted(
            intervals
                .into_iter()
                .map(|(lo, hi)| Interval::new(lo, hi))
                .collect(),
        )
        .map_err(err)?;
        mg::SmoothIndicator::build(&set, &params.0)
            .map(Self)
            .map_err(err)
    }

    #[pyo3(signature = (t, order=0))]
    fn value(&self, t: f64, order: u32) -> PyResult<f64> {
        mg::smoother::g_eval(&self.0, t, order).map_err(err)
    }

    /// `(ratio_d1, ratio_d2, ratio_d3, C, passed)`.
    #[pyo3(signature = (grid_points=2001))]
    fn certify(&self, grid_points: usize) -> (f64, f64, f64, f64, bool) {
        let c = mg::smoother::certify_bounds(&self.0, grid_points);
        (c.ratio_d1, c.ratio_d2, c.ratio_d3, c.big_c, c.passed)
    }
}

#[pyfunction]
fn psi(params: &SmoothingParams, x: Vec<f64>) -> PyResult<f64> {
    smoothmax::psi(&params.0, &x).map_err(err)
}

#[pyfunction]
fn psi_grad(params: &SmoothingParams, x: Vec<f64>) -> PyResult<Vec<f64>> {
    smoothmax::psi_grad(&params.0, &x)
        .map(|w| w.pi)
        .map_err(err)
}

#[pyfunction]
fn psi_hessian(params: &SmoothingParams, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let h = smoothmax::psi_hessian(&params.0, &x).map_err(err)?;
    Ok(h.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn f_third_sum(params: &SmoothingParams, g: &SmoothIndicator, x: Vec<f64>) -> PyResult<f64> {
    smoothmax::f_third_sum(&params.0, &g.0, &x).map_err(err)
}

#[pyfunction]
fn lemma3_bound(a: f64, x: f64, iota: f64) -> PyResult<(f64, f64)> {
    bounds::lemma3_bound(a, x, iota).map_err(err)
}

/// Closed form when `reps` is None, Monte Carlo otherwise.
#[pyfunction]
#[pyo3(signature = (spec, iota, reps=None, seed=0))]
fn moment_profile(
    py: Python<'_>,
    spec: &DistributionSpec,
    iota: f64,
    reps: Option<usize>,
    seed: u64,
) -> PyResult<MomentProfile> {
    let spec = spec.0;
    py.detach(|| bounds::moment_profile(&spec, iota, reps, seed))
        .map(MomentProfile)
        .map_err(err)
}

#[pyfunction]
fn l_n(params: &SmoothingParams, profile: &MomentProfile) -> PyResult<BoundReport> {
    bounds::l_n(&params.0, &profile.0)
        .map(BoundReport)
        .map_err(err)
}

/// Exactly one of `budget` (smallest radius) or `radius_cap` (smallest
/// bound). Returns `(params, report)`.
#[pyfunction]
#[pyo3(signature = (profile, d, *, budget=None, radius_cap=None, grid_points=32, refine_iters=40))]
fn optimize(
    py: Python<'_>,
    profile: &MomentProfile,
    d: usize,
    budget: Option<f64>,
    radius_cap: Option<f64>,
    grid_points: usize,
    refine_iters: usize,
) -> PyResult<(SmoothingParams, BoundReport)> {
    let objective = match (budget, radius_cap) {
        (Some(budget), None) => Objective::MinimizeRadiusGivenBudget { budget },
        (None, Some(radius_cap)) => Objective::MinimizeBoundGivenRadius { radius_cap },
        _ => {
            return Err(PyValueError::new_err(
                "give exactly one of `budget` or `radius_cap`",
            ))
        }
    };
    let req = TuneRequest {
        profile: profile.0.clone(),
        d,
        objective,
        search: SearchConfig {
            grid_points_per_axis: grid_points,
            refine_iters,
            ..SearchConfig::default()
        },
    };
    let out = py.detach(|| tune::optimize(&req)).map_err(err)?;
    let params = mg::SmoothingParams::new(out.gamma, out.delta, profile.0.iota, d).map_err(err)?;
    Ok((SmoothingParams(params), BoundReport(out.report)))
}

#[pyclass(frozen, module = "maxgauss")]
struct ExperimentResult(mg::ExperimentResult);

#[pymethods]
impl ExperimentResult {
    #[getter]
    fn kolmogorov(&self) -> f64 {
        self.0.kolmogorov
    }

    #[getter]
    fn violations(&self) -> usize {
        self.0.violations()
    }

    #[getter]
    fn max_lhs(&self) -> f64 {
        self.0.max_lhs()
    }

    #[getter]
    fn bound(&self) -> BoundReport {
        BoundReport(self.0.bound.clone())
    }

    #[getter]
    fn z_samples(&self) -> Vec<f64> {
        self.0.z_samples.clone()
    }

    #[getter]
    fn z_dagger_samples(&self) -> Vec<f64> {
        self.0.z_dagger_samples.clone()
    }

    /// `(threshold, lhs, bound, violated)` rows.
    #[getter]
    fn strassen_grid(&self) -> Vec<(f64, f64, f64, bool)> {
        self.0
            .strassen_grid
            .iter()
            .map(|p| (p.threshold, p.lhs, p.bound, p.violated))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        json(&self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (spec, params, reps, seed, workers=None))]
fn run_experiment(
    py: Python<'_>,
    spec: &DistributionSpec,
    params: &SmoothingParams,
    reps: usize,
    seed: u64,
    workers: Option<usize>,
) -> PyResult<ExperimentResult> {
    let (spec, params) = (spec.0, params.0);
    let opts = ExperimentOptions {
        workers,
        profile_reps: None,
    };
    py.detach(|| simulate::run_experiment_with(&spec, &params, reps, seed, opts))
        .map(ExperimentResult)
        .map_err(err)
}

#[pyfunction]
fn kolmogorov_distance(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    simulate::kolmogorov_distance(&u, &v).map_err(err)
}

#[pymodule]
fn maxgauss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SmoothingParams>()?;
    m.add_class::<DistributionSpec>()?;
    m.add_class::<MomentProfile>()?;
    m.add_class::<BoundReport>()?;
    m.add_class::<SmoothIndicator>()?;
    m.add_class::<ExperimentResult>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_grad, m)?)?;
    m.add_function(wrap_pyfunction!(psi_hessian, m)?)?;
    m.add_function(wrap_pyfunction!(f_third_sum, m)?)?;
    m.add_function(wrap_pyfunction!(lemma3_bound, m)?)?;
    m.add_function(wrap_pyfunction!(moment_profile, m)?)?;
    m.add_function(wrap_pyfunction!(l_n, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_distance, m)?)?;
    Ok(())
}

//! Selection of `(gamma, delta)`.
//!
//! A log-spaced grid scan locates the best feasible cell; refinement then
//! runs golden-section search over `log delta`, and for each trial `delta`
//! solves the `gamma` direction exactly along the active constraint
//! (boundary bisection or an inner golden-section search). All bound
//! evaluations go through a [`BoundOracle`], by default [`bounds::l_n`].

use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoundReport, MomentProfile};
use crate::error::{domain, Error, Result};
use crate::smoothmax::SmoothingParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Smallest radius `c_gamma + 3 delta` with probability bound `<= budget`.
    MinimizeRadiusGivenBudget { budget: f64 },
    /// Smallest probability bound with radius `<= radius_cap`.
    MinimizeBoundGivenRadius { radius_cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub grid_points_per_axis: usize,
    pub refine_iters: usize,
    pub gamma_range: (f64, f64),
    pub delta_range: (f64, f64),
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_points_per_axis: 32,
            refine_iters: 40,
            gamma_range: (1e-4, 1e4),
            delta_range: (1e-4, 1e4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRequest {
    pub profile: MomentProfile,
    pub d: usize,
    pub objective: Objective,
    pub search: SearchConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Grid,
    Refine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub gamma: f64,
    pub delta: f64,
    pub radius: f64,
    #[serde(with = "crate::serde_real")]
    pub raw_bound: f64,
    pub feasible: bool,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub gamma: f64,
    pub delta: f64,
    pub report: BoundReport,
    #[serde(with = "crate::serde_real")]
    pub objective_value: f64,
    #[serde(with = "crate::serde_real")]
    pub grid_best_value: f64,
    pub trace: Vec<TracePoint>,
}

/// Source of bound evaluations.
pub trait BoundOracle {
    fn evaluate(&self, params: &SmoothingParams, profile: &MomentProfile) -> Result<BoundReport>;
}

/// Evaluates through [`bounds::l_n`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Direct;

impl BoundOracle for Direct {
    fn evaluate(&self, params: &SmoothingParams, profile: &MomentProfile) -> Result<BoundReport> {
        bounds::l_n(params, profile)
    }
}

impl Objective {
    fn validate(&self) -> Result<()> {
        match *self {
            Objective::MinimizeRadiusGivenBudget { budget } if !(budget > 0.0 && budget < 1.0) => {
                domain(format!("budget must lie in (0, 1), got {budget}"))
            }
            Objective::MinimizeBoundGivenRadius { radius_cap }
                if !(radius_cap > 0.0) || !radius_cap.is_finite() =>
            {
                domain(format!(
                    "radius cap must be positive and finite, got {radius_cap}"
                ))
            }
            _ => Ok(()),
        }
    }

    /// `(objective value, feasible)` for a report.
    pub fn score(&self, r: &BoundReport) -> (f64, bool) {
        match *self {
            Objective::MinimizeRadiusGivenBudget { budget } => (r.radius, r.raw_bound <= budget),
            Objective::MinimizeBoundGivenRadius { radius_cap } => {
                (r.raw_bound, r.radius <= radius_cap)
            }
        }
    }

    /// Amount by which the constraint is violated (0 when feasible).
    fn constraint_value(&self, r: &BoundReport) -> f64 {
        match *self {
            Objective::MinimizeRadiusGivenBudget { .. } => r.raw_bound,
            Objective::MinimizeBoundGivenRadius { .. } => r.radius,
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    report: BoundReport,
    value: f64,
}

impl Candidate {
    /// Lexicographic: objective, then radius, then gamma.
    fn better_than(&self, other: &Candidate) -> bool {
        let key = |c: &Candidate| (c.value, c.report.radius, c.report.gamma);
        let (a, b) = (key(self), key(other));
        a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
    }
}

struct Search<'a, O: BoundOracle> {
    req: &'a TuneRequest,
    oracle: &'a O,
    trace: Vec<TracePoint>,
}

impl<O: BoundOracle> Search<'_, O> {
    /// Evaluates one point; `None` when `(gamma, delta)` is outside the
    /// admissible cone.
    fn eval(
        &mut self,
        gamma: f64,
        delta: f64,
        stage: Stage,
    ) -> Result<Option<(BoundReport, f64, bool)>> {
        let params = match SmoothingParams::new(gamma, delta, self.req.profile.iota, self.req.d) {
            Ok(p) => p,
            Err(Error::Domain(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let report = self.oracle.evaluate(&params, &self.req.profile)?;
        let (value, feasible) = self.req.objective.score(&report);
        self.trace.push(TracePoint {
            gamma,
            delta,
            radius: report.radius,
            raw_bound: report.raw_bound,
            feasible,
            stage,
        });
        Ok(Some((report, value, feasible)))
    }

    fn feasible_candidate(&mut self, gamma: f64, delta: f64) -> Result<Option<Candidate>> {
        Ok(match self.eval(gamma, delta, Stage::Refine)? {
            Some((report, value, true)) => Some(Candidate { report, value }),
            _ => None,
        })
    }

    /// Golden-section minimization of `h` over `[lo, hi]` (log coordinates).
    fn golden(
        &mut self,
        lo: f64,
        hi: f64,
        mut h: impl FnMut(&mut Self, f64) -> Result<f64>,
    ) -> Result<f64> {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = h(self, c)?;
        let mut fd = h(self, d)?;
        for _ in 0..self.req.search.refine_iters {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = h(self, c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = h(self, d)?;
            }
        }
        Ok(if fc <= fd { c } else { d })
    }

    /// Best feasible `gamma` for a fixed `delta`.
    fn best_for_delta(&mut self, delta: f64) -> Result<Option<Candidate>> {
        let (g_lo, g_hi) = self.req.search.gamma_range;
        let mut lo = g_lo.max((1.0 + 1e-9) / delta);
        match self.req.objective {
            Objective::MinimizeRadiusGivenBudget { budget } => {
                if lo >= g_hi {
                    return Ok(None);
                }
                // radius falls with gamma: take the largest gamma meeting the budget
                let raw = |s: &mut Self, lg: f64| -> Result<f64> {
                    Ok(s.eval(lg.exp(), delta, Stage::Refine)?
                        .map_or(f64::INFINITY, |(r, _, _)| r.raw_bound))
                };
                if let Some(c) = self.feasible_candidate(g_hi, delta)? {
                    return Ok(Some(c));
                }
                let lg = self.golden(lo.ln(), g_hi.ln(), raw)?;
                if raw(self, lg)? > budget {
                    return Ok(None);
                }
                let (mut ok, mut bad) = (lg, g_hi.ln());
                for _ in 0..self.req.search.refine_iters.max(50) {
                    let mid = 0.5 * (ok + bad);
                    if raw(self, mid)? <= budget {
                        ok = mid;
                    } else {
                        bad = mid;
                    }
                }
                self.feasible_candidate(ok.exp(), delta)
            }
            Objective::MinimizeBoundGivenRadius { radius_cap } => {
                let slack = radius_cap - 3.0 * delta;
                if slack <= 0.0 {
                    return Ok(None);
                }
                let ln_d = (self.req.d as f64).ln();
                if ln_d > 0.0 {
                    lo = lo.max(ln_d / slack * (1.0 + 1e-12));
                }
                if lo > g_hi {
                    return Ok(None);
                }
                let obj = |s: &mut Self, lg: f64| -> Result<f64> {
                    Ok(match s.eval(lg.exp(), delta, Stage::Refine)? {
                        Some((_, v, true)) => v,
                        _ => f64::INFINITY,
                    })
                };
                let lg = if lo < g_hi {
                    self.golden(lo.ln(), g_hi.ln(), obj)?
                } else {
                    lo.ln()
                };
                let mut best = self.feasible_candidate(lg.exp(), delta)?;
                // the constraint boundary itself is a candidate
                if let Some(c) = self.feasible_candidate(lo, delta)? {
                    if best.as_ref().is_none_or(|b| c.better_than(b)) {
                        best = Some(c);
                    }
                }
                Ok(best)
            }
        }
    }
}

fn log_grid(range: (f64, f64), points: usize) -> Vec<f64> {
    let (a, b) = (range.0.ln(), range.1.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

fn validate(req: &TuneRequest) -> Result<()> {
    req.objective.validate()?;
    req.profile.validate()?;
    if req.d == 0 {
        return domain("dimension d must be positive");
    }
    let s = &req.search;
    if s.grid_points_per_axis < 16 {
        return domain(format!(
            "grid_points_per_axis must be >= 16, got {}",
            s.grid_points_per_axis
        ));
    }
    if s.refine_iters < 20 {
        return domain(format!(
            "refine_iters must be >= 20, got {}",
            s.refine_iters
        ));
    }
    for (name, (lo, hi)) in [
        ("gamma_range", s.gamma_range),
        ("delta_range", s.delta_range),
    ] {
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return domain(format!(
                "{name} must satisfy 0 < lo < hi < inf, got ({lo}, {hi})"
            ));
        }
    }
    if s.gamma_range.1 * s.delta_range.1 <= 1.0 {
        return domain("search box lies entirely in gamma * delta <= 1");
    }
    Ok(())
}

pub fn optimize(req: &TuneRequest) -> Result<TuneResult> {
    optimize_with(req, &Direct)
}

pub fn optimize_with<O: BoundOracle>(req: &TuneRequest, oracle: &O) -> Result<TuneResult> {
    validate(req)?;
    let mut search = Search {
        req,
        oracle,
        trace: Vec::new(),
    };
    let gammas = log_grid(req.search.gamma_range, req.search.grid_points_per_axis);
    let deltas = log_grid(req.search.delta_range, req.search.grid_points_per_axis);

    let mut best: Option<Candidate> = None;
    let mut best_delta_idx = 0;
    let mut least_constraint = f64::INFINITY;
    for (di, &delta) in deltas.iter().enumerate() {
        for &gamma in &gammas {
            if let Some((report, value, feasible)) = search.eval(gamma, delta, Stage::Grid)? {
                least_constraint = least_constraint.min(req.objective.constraint_value(&report));
                if feasible {
                    let c = Candidate { report, value };
                    if best.as_ref().is_none_or(|b| c.better_than(b)) {
                        best = Some(c);
                        best_delta_idx = di;
                    }
                }
            }
        }
    }
    let Some(grid_best) = best else {
        return Err(Error::Infeasible {
            reason: match req.objective {
                Objective::MinimizeRadiusGivenBudget { budget } => {
                    format!("no grid point reaches probability bound {budget}")
                }
                Objective::MinimizeBoundGivenRadius { radius_cap } => {
                    format!("no grid point reaches radius {radius_cap}")
                }
            },
            grid_minimum: least_constraint,
        });
    };
    let grid_best_value = grid_best.value;

    // golden search over log delta within two grid cells of the grid optimum
    let lo_idx = best_delta_idx.saturating_sub(2);
    let hi_idx = (best_delta_idx + 2).min(deltas.len() - 1);
    let mut refined: Option<Candidate> = None;
    let ld = search.golden(deltas[lo_idx].ln(), deltas[hi_idx].ln(), |s, ld| {
        let c = s.best_for_delta(ld.exp())?;
        let v = c.as_ref().map_or(f64::INFINITY, |c| c.value);
        if let Some(c) = c {
            if refined.as_ref().is_none_or(|b| c.better_than(b)) {
                refined = Some(c);
            }
        }
        Ok(v)
    })?;
    if let Some(c) = search.best_for_delta(ld.exp())? {
        if refined.as_ref().is_none_or(|b| c.better_than(b)) {
            refined = Some(c);
        }
    }

    let winner = match refined {
        Some(r) if r.better_than(&grid_best) => r,
        _ => grid_best,
    };
    Ok(TuneResult {
        gamma: winner.report.gamma,
        delta: winner.report.delta,
        objective_value: winner.value,
        grid_best_value,
        report: winner.report,
        trace: search.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::Estimate;
    use std::cell::Cell;

    fn rademacher_profile() -> MomentProfile {
        let y3 = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        MomentProfile {
            third_max_x: Estimate::exact(1.0),
            third_max_y: Estimate::exact(y3),
            c_sum: Estimate::exact(1.0 + y3),
            n: 1,
            d: 1,
            iota: 1.0,
            source: bounds::ProfileSource::Analytic,
        }
    }

    fn request(profile: MomentProfile, d: usize, objective: Objective) -> TuneRequest {
        TuneRequest {
            profile,
            d,
            objective,
            search: SearchConfig::default(),
        }
    }

    #[test]
    fn request_validation() {
        let mut r = request(
            rademacher_profile(),
            1,
            Objective::MinimizeRadiusGivenBudget { budget: 1.5 },
        );
        assert!(optimize(&r).is_err());
        r.objective = Objective::MinimizeRadiusGivenBudget { budget: 0.9 };
        r.search.grid_points_per_axis = 8;
        assert!(optimize(&r).is_err());
        r.search.grid_points_per_axis = 16;
        r.search.refine_iters = 5;
        assert!(optimize(&r).is_err());
    }

    #[test]
    fn infeasible_radius_cap() {
        // ln(100) / gamma_max = 4.6e-4 exceeds the cap for every gamma
        let r = request(
            MomentProfile::degenerate(1, 100, 0.5),
            100,
            Objective::MinimizeBoundGivenRadius { radius_cap: 1e-4 },
        );
        match optimize(&r) {
            Err(Error::Infeasible { grid_minimum, .. }) => assert!(grid_minimum > 1e-4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn output_is_feasible_and_no_worse_than_grid() {
        let r = request(
            rademacher_profile(),
            1,
            Objective::MinimizeRadiusGivenBudget { budget: 0.9 },
        );
        let out = optimize(&r).unwrap();
        assert!(out.gamma * out.delta > 1.0);
        assert!(out.report.raw_bound <= 0.9);
        assert!(out.objective_value <= out.grid_best_value);
    }

    struct Counting(Cell<usize>);

    impl BoundOracle for Counting {
        fn evaluate(&self, p: &SmoothingParams, prof: &MomentProfile) -> Result<BoundReport> {
            self.0.set(self.0.get() + 1);
            bounds::l_n(p, prof)
        }
    }

    #[test]
    fn every_evaluation_goes_through_the_oracle() {
        let r = request(
            rademacher_profile(),
            1,
            Objective::MinimizeBoundGivenRadius { radius_cap: 3.0 },
        );
        let oracle = Counting(Cell::new(0));
        let out = optimize_with(&r, &oracle).unwrap();
        assert_eq!(out.trace.len(), oracle.0.get());
        assert_eq!(out, optimize(&r).unwrap());
    }
}

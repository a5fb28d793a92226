//! Seeded invariant suites behind `maxgauss verify`.

use maxgauss::bounds::{l_n, lemma3_bound, Estimate, ProfileSource};
use maxgauss::simulate::{
    lindeberg_decompose, run_experiment_with, DecomposeMode, ExperimentOptions,
};
use maxgauss::smoother::{certify_bounds, implementation_constant};
use maxgauss::smoothmax::{f_third_envelope, f_third_sum, psi, psi_grad, psi_hessian, Composite};
use maxgauss::tune::{optimize, Objective, SearchConfig, TuneRequest};
use maxgauss::{
    BorelSet, Covariance, DistributionSpec, Family, Interval, MomentProfile, SmoothIndicator,
    SmoothingParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::SuiteResult;

type Suite = fn(&mut ChaCha8Rng, usize) -> (usize, usize, String);

pub const SUITES: [(&str, Suite); 8] = [
    ("smooth_max_sandwich", smooth_max_sandwich),
    ("smooth_max_derivatives", smooth_max_derivatives),
    ("smoother_certification", smoother_certification),
    ("third_derivative_envelope", third_derivative_envelope),
    ("lemma3_inequality", lemma3_inequality),
    ("bound_structure", bound_structure),
    ("lindeberg_zero_terms", lindeberg_zero_terms),
    ("tuner_feasibility", tuner_feasibility),
];

/// Runs every suite with `cases` draws each; the determinism suite is
/// appended last.
pub fn run_all(seed: u64, cases: usize) -> Vec<SuiteResult> {
    let mut results: Vec<SuiteResult> = SUITES
        .iter()
        .enumerate()
        .map(|(k, (name, suite))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (n, failures, detail) = suite(&mut rng, cases);
            SuiteResult {
                name: name.to_string(),
                cases: n,
                failures,
                passed: failures == 0,
                detail,
            }
        })
        .collect();
    let (n, failures, detail) = determinism(seed);
    results.push(SuiteResult {
        name: "determinism".to_string(),
        cases: n,
        failures,
        passed: failures == 0,
        detail,
    });
    results
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_params(rng: &mut ChaCha8Rng, d: usize) -> SmoothingParams {
    let gamma = log_uniform(rng, 0.2, 50.0);
    let u = rng.random_range(1.5..6.0);
    SmoothingParams::new(gamma, u / gamma, rng.random_range(0.0..=1.0), d)
        .expect("gamma * delta >= 1.5")
}

fn random_set(rng: &mut ChaCha8Rng, scale: f64) -> BorelSet {
    let ivs = (0..rng.random_range(1..=4))
        .map(|_| {
            let a = rng.random_range(-5.0..5.0) * scale;
            Interval::new(a, a + rng.random_range(0.0..3.0) * scale)
        })
        .collect();
    BorelSet::from_unsorted(ivs).expect("finite intervals")
}

fn smooth_max_sandwich(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let mut failures = 0;
    for _ in 0..cases {
        let d = rng.random_range(1..=64);
        let p = random_params(rng, d);
        let scale = log_uniform(rng, 1e-3, 1e3);
        let x: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect();
        let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = psi(&p, &x).expect("valid input");
        let slack = 8.0 * f64::EPSILON * m.abs().max(p.c_gamma());
        if v < m - slack || v > m + p.c_gamma() + slack {
            failures += 1;
        }
    }
    (
        cases,
        failures,
        "max x <= psi <= max x + log(d)/gamma".into(),
    )
}

fn smooth_max_derivatives(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.random_range(2..=6);
        let p = random_params(rng, d);
        let x: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-3.0..3.0) / p.gamma())
            .collect();
        let h = 1e-4 / p.gamma();
        let grad = psi_grad(&p, &x).expect("valid input").pi;
        let hess = psi_hessian(&p, &x).expect("valid input");
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..d {
            let mut up = x.clone();
            let mut down = x.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (psi(&p, &up).unwrap() - psi(&p, &down).unwrap()) / (2.0 * h);
            err = err.max((fd - grad[k]).abs());
            let gu = psi_grad(&p, &up).unwrap().pi;
            let gd = psi_grad(&p, &down).unwrap().pi;
            for j in 0..d {
                let fd2 = (gu[j] - gd[j]) / (2.0 * h);
                err = err.max((fd2 - hess[(j, k)]).abs() / p.gamma());
                scale = scale.max(hess[(j, k)].abs() / p.gamma());
            }
        }
        let rel = err / scale.max(1e-300);
        worst = worst.max(rel);
        if rel > 1e-5 {
            failures += 1;
        }
    }
    (cases, failures, format!("worst relative error {worst:.2e}"))
}

fn smoother_certification(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let n = (cases / 20).max(1);
    let c = implementation_constant();
    let mut failures = 0;
    for _ in 0..n {
        let p = random_params(rng, 1);
        let scale = log_uniform(rng, 0.1, 10.0) * p.delta();
        let g = SmoothIndicator::build(&random_set(rng, scale), &p).expect("valid set");
        let cert = certify_bounds(&g, 2001);
        if !cert.passed || cert.big_c != c {
            failures += 1;
        }
    }
    (n, failures, format!("C = {c:.6}"))
}

fn third_derivative_envelope(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let mut failures = 0;
    for k in 0..cases {
        let d = if k % 10 == 0 {
            rng.random_range(129..=300)
        } else {
            rng.random_range(1..=40)
        };
        let p = random_params(rng, d);
        let g = SmoothIndicator::build(&BorelSet::at_most(0.0), &p).expect("valid set");
        let (a, b, _) = g.transition_zones()[0];
        let target = rng.random_range(a..b);
        let spread = p.c_gamma().max(1.0 / p.gamma());
        let x: Vec<f64> = (0..d)
            .map(|_| target - rng.random_range(0.0..2.0) * spread)
            .collect();
        if f_third_sum(&p, &g, &x).expect("valid input") > f_third_envelope(&p, &g) * (1.0 + 1e-12)
        {
            failures += 1;
        }
    }
    (cases, failures, "sum |d^3 f| <= envelope".into())
}

fn lemma3_inequality(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let n = cases * 100;
    let mut failures = 0;
    for _ in 0..n {
        let a = log_uniform(rng, 1.0, 1e8);
        let x = log_uniform(rng, 1e-6, 1e4);
        let (lhs, rhs) = lemma3_bound(a, x, rng.random_range(0.0..=1.0)).expect("valid input");
        if lhs > rhs * (1.0 + 1e-12) {
            failures += 1;
        }
    }
    (
        n,
        failures,
        "min{a+x+x^2, x^3} <= 3 a^((1-iota)/3) x^(2+iota)".into(),
    )
}

fn profile(x3: f64, y3: f64, c: f64, d: usize, iota: f64) -> MomentProfile {
    MomentProfile {
        third_max_x: Estimate::exact(x3),
        third_max_y: Estimate::exact(y3),
        c_sum: Estimate::exact(c),
        n: 1,
        d,
        iota,
        source: ProfileSource::Analytic,
    }
}

fn bound_structure(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let mut failures = 0;
    for _ in 0..cases {
        let d = rng.random_range(1..=500);
        let p = random_params(rng, d);
        let prof = profile(
            log_uniform(rng, 1e-3, 1e3),
            log_uniform(rng, 1e-3, 1e3),
            log_uniform(rng, 1e-3, 1e3),
            d,
            p.iota(),
        );
        let r = l_n(&p, &prof).expect("matching iota");
        let ok = r.l_n == r.term1.min(r.term2)
            && (0.0..=1.0).contains(&r.prob_bound)
            && r.epsilon < 1.0
            && (r.radius - p.c_gamma() - 3.0 * p.delta()).abs() <= 1e-12 * r.radius;
        if !ok {
            failures += 1;
        }
    }
    (
        cases,
        failures,
        "L_n = min(term1, term2), bound in [0, 1]".into(),
    )
}

fn lindeberg_zero_terms(_: &mut ChaCha8Rng, _: usize) -> (usize, usize, String) {
    let spec = DistributionSpec {
        family: Family::Rademacher,
        covariance: Covariance::Identity,
        n: 2,
        d: 2,
        standardized: true,
    };
    let p = SmoothingParams::new(2.0, 1.0, 0.5, 2).expect("admissible");
    let g = SmoothIndicator::build(&BorelSet::at_most(0.5), &p).expect("valid set");
    let dec = lindeberg_decompose(&spec, &Composite::new(p, g), DecomposeMode::Enumerate)
        .expect("enumerable");
    let worst = dec
        .terms
        .iter()
        .flat_map(|t| [t.first_order.value.abs(), t.second_order.value.abs()])
        .fold(dec.telescoping_residual, f64::max);
    (
        1,
        usize::from(worst > 1e-8),
        format!("largest |E I|, |E II|, residual {worst:.2e}"),
    )
}

fn tuner_feasibility(rng: &mut ChaCha8Rng, cases: usize) -> (usize, usize, String) {
    let n = (cases / 100).max(1);
    let mut failures = 0;
    for _ in 0..n {
        let d = rng.random_range(1..=200);
        let budget = rng.random_range(0.05..0.9);
        let req = TuneRequest {
            profile: profile(
                log_uniform(rng, 0.1, 200.0),
                log_uniform(rng, 0.1, 200.0),
                log_uniform(rng, 0.1, 500.0),
                d,
                0.5,
            ),
            d,
            objective: Objective::MinimizeRadiusGivenBudget { budget },
            search: SearchConfig::default(),
        };
        match optimize(&req) {
            Ok(out) if out.gamma * out.delta > 1.0 && out.report.raw_bound <= budget => {}
            _ => failures += 1,
        }
    }
    (
        n,
        failures,
        "tuned (gamma, delta) admissible and within budget".into(),
    )
}

fn determinism(seed: u64) -> (usize, usize, String) {
    let spec = DistributionSpec {
        family: Family::StudentT { dof: 5.0 },
        covariance: Covariance::Ar1 { rho: 0.4 },
        n: 4,
        d: 3,
        standardized: true,
    };
    let p = SmoothingParams::new(2.0, 1.0, 0.5, 3).expect("admissible");
    let run = |workers| {
        run_experiment_with(
            &spec,
            &p,
            1000,
            seed,
            ExperimentOptions {
                workers: Some(workers),
                profile_reps: None,
            },
        )
        .expect("valid experiment")
    };
    let one = run(1);
    let failures = [2, 3].into_iter().filter(|&k| run(k) != one).count();
    (2, failures, "1 worker vs 2 and 3 workers".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let results = run_all(5, 100);
        assert_eq!(results.len(), SUITES.len() + 1);
        for r in &results {
            assert!(r.passed, "{r:?}");
            assert!(r.cases > 0);
        }
    }
}

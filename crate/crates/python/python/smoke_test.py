"""Smoke test for the maxgauss extension module: run with `python smoke_test.py`."""

import json
import math

import maxgauss


def main():
    p = maxgauss.SmoothingParams(gamma=4.0, delta=1.0, iota=0.5, d=3)
    x = [0.3, -1.2, 0.9]
    v = maxgauss.psi(p, x)
    assert max(x) <= v <= max(x) + math.log(3) / 4.0
    grad = maxgauss.psi_grad(p, x)
    assert abs(sum(grad) - 1.0) < 1e-12
    hess = maxgauss.psi_hessian(p, x)
    assert all(abs(sum(row)) < 1e-12 for row in hess)

    g = maxgauss.SmoothIndicator([(-math.inf, 0.5)], p)
    assert g.value(0.0) == 1.0 and g.value(10.0) == 0.0
    *_, passed = g.certify()
    assert passed

    spec = maxgauss.DistributionSpec("rademacher", n=1, d=1)
    profile = maxgauss.moment_profile(spec, 1.0)
    report = maxgauss.l_n(maxgauss.SmoothingParams(2.0, 2.0, 1.0, 1), profile)
    assert abs(report.l_n - 5.19154) < 1e-5
    assert json.loads(report.to_json())["l_n"] == report.l_n

    spec = maxgauss.DistributionSpec("student_t", n=5, d=3, dof=5.0, covariance="ar1", rho=0.4)
    mc = maxgauss.moment_profile(spec, 0.5, reps=2000, seed=7)
    params, tuned = maxgauss.optimize(mc, 3, budget=0.5)
    assert params.gamma * params.delta > 1.0 and tuned.raw_bound <= 0.5

    run = maxgauss.run_experiment(spec, maxgauss.SmoothingParams(2.0, 1.0, 0.5, 3), 1000, seed=3, workers=1)
    again = maxgauss.run_experiment(spec, maxgauss.SmoothingParams(2.0, 1.0, 0.5, 3), 1000, seed=3, workers=2)
    assert run.z_samples == again.z_samples
    assert 0.0 <= run.kolmogorov <= 1.0 and run.violations == 0
    assert len(run.strassen_grid) == 201

    try:
        maxgauss.SmoothingParams(0.5, 1.0, 0.5, 3)
    except ValueError:
        pass
    else:
        raise AssertionError("gamma * delta <= 1 must be rejected")

    print("maxgauss smoke test: OK")


if __name__ == "__main__":
    main()

//! Gauss-Hermite rules for expectations under the standard normal law.

use nalgebra::DMatrix;

use crate::error::{domain, Result};

/// Nodes and weights of the `order`-point rule for `E h(Z)`, `Z ~ N(0, 1)`.
/// Weights sum to 1; polynomials of degree `< 2 * order` are exact.
pub fn normal_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return domain("quadrature order must be positive");
    }
    let (t, w) = hermite_physicists(order)?;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    Ok((
        t.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
        w.iter().map(|x| x / sqrt_pi).collect(),
    ))
}

const RESCALE: f64 = 1e150;

/// Rule for weight `exp(-x^2)`: Jacobi-matrix eigenvalues polished by
/// Newton iteration on the orthonormal Hermite recurrence, which also gives
/// the weights.
fn hermite_physicists(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    // starting points: eigenvalues of the Jacobi matrix, largest first
    let jacobi = DMatrix::from_fn(n, n, |r, c| {
        if r.abs_diff(c) == 1 {
            (r.max(c) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(|a, b| b.total_cmp(a));
    for i in 0..m {
        let mut z = guesses[i];
        let mut pp = 0.0;
        // the recurrence overflows near the outer nodes of high-order rules,
        // so it is rescaled on the fly and the scale kept in log form
        let mut log_scale = 0.0;
        let mut converged = false;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            log_scale = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                if p1.abs() > RESCALE {
                    p1 /= RESCALE;
                    p2 /= RESCALE;
                    log_scale += RESCALE.ln();
                }
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return domain(format!(
                "Gauss-Hermite nodes did not converge for order {n}"
            ));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = (std::f64::consts::LN_2 - 2.0 * (pp.abs().ln() + log_scale)).exp();
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_exact() {
        for order in [1, 2, 5, 20, 40, 80, 160, 320, 640] {
            let (x, w) = normal_rule(order).unwrap();
            let moment = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
            assert!((moment(0) - 1.0).abs() < 1e-12, "order {order}");
            if order >= 2 {
                assert!(moment(1).abs() < 1e-12);
                assert!((moment(2) - 1.0).abs() < 1e-12, "order {order}");
            }
            if order >= 3 {
                assert!((moment(4) - 3.0).abs() < 1e-11, "order {order}");
            }
            if order >= 4 {
                assert!((moment(6) - 15.0).abs() < 1e-10, "order {order}");
            }
        }
    }

    #[test]
    fn smooth_expectation() {
        // E cos(Z) = exp(-1/2)
        let (x, w) = normal_rule(20).unwrap();
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((v - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn zero_order_rejected() {
        assert!(normal_rule(0).is_err());
    }
}

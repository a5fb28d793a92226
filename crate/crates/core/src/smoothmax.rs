//! Log-sum-exp smooth maximum and its derivative tensors.
//!
//! For sharpness `gamma > 0` the smooth maximum is
//! `psi(x) = log(sum_j exp(gamma * x_j)) / gamma`, which over-estimates
//! `max_j x_j` by at most `log(d) / gamma`. Its gradient is the softmax
//! vector `pi`, and every higher derivative is a polynomial in `pi`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::smoother::SmoothIndicator;

/// Largest dimension for which the third derivative tensor is materialized.
pub const DENSE_THIRD_MAX_DIM: usize = 128;

/// Smoothing parameters `(gamma, delta, iota)` together with the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct SmoothingParams {
    gamma: f64,
    delta: f64,
    iota: f64,
    d: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    gamma: f64,
    delta: f64,
    iota: f64,
    d: usize,
}

impl TryFrom<RawParams> for SmoothingParams {
    type Error = crate::Error;

    fn try_from(r: RawParams) -> Result<Self> {
        Self::new(r.gamma, r.delta, r.iota, r.d)
    }
}

impl SmoothingParams {
    pub fn new(gamma: f64, delta: f64, iota: f64, d: usize) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return domain(format!("gamma must be positive and finite, got {gamma}"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return domain(format!("delta must be positive and finite, got {delta}"));
        }
        if !(0.0..=1.0).contains(&iota) {
            return domain(format!("iota must lie in [0, 1], got {iota}"));
        }
        if d == 0 {
            return domain("dimension d must be positive");
        }
        if gamma * delta <= 1.0 {
            return domain(format!(
                "gamma * delta must exceed 1, got {}",
                gamma * delta
            ));
        }
        let eps = epsilon_formula(gamma * delta);
        // Rounding can push the formula to exactly 1 just above gamma * delta = 1.
        if !(0.0..1.0).contains(&eps) {
            return domain(format!(
                "epsilon = {eps} is not below 1 for gamma * delta = {}",
                gamma * delta
            ));
        }
        Ok(Self {
            gamma,
            delta,
            iota,
            d,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `gamma * delta * exp(-(gamma^2 delta^2 - 1) / 2)`. Underflows to 0
    /// once `gamma * delta` exceeds roughly 38.
    pub fn epsilon(&self) -> f64 {
        epsilon_formula(self.gamma * self.delta)
    }

    /// Worst-case overshoot of the smooth maximum, `log(d) / gamma`.
    pub fn c_gamma(&self) -> f64 {
        (self.d as f64).ln() / self.gamma
    }

    /// Same parameters with a different dimension.
    pub fn with_dim(&self, d: usize) -> Result<Self> {
        Self::new(self.gamma, self.delta, self.iota, d)
    }
}

pub(crate) fn epsilon_formula(u: f64) -> f64 {
    u * (-(u * u - 1.0) / 2.0).exp()
}

/// Softmax weights `pi_j = exp(gamma x_j) / sum_k exp(gamma x_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxWeights {
    pub pi: Vec<f64>,
}

impl SoftmaxWeights {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

/// Dense symmetric `d x d x d` tensor stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdTensor {
    d: usize,
    data: Vec<f64>,
}

impl ThirdTensor {
    fn zeros(d: usize) -> Self {
        Self {
            d,
            data: vec![0.0; d * d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, j: usize, k: usize, l: usize) -> f64 {
        self.data[(j * self.d + k) * self.d + l]
    }

    fn set(&mut self, j: usize, k: usize, l: usize, v: f64) {
        let d = self.d;
        self.data[(j * d + k) * d + l] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

fn check_input(params: &SmoothingParams, x: &[f64]) -> Result<()> {
    if x.len() != params.d {
        return Err(Error::Shape {
            expected: params.d,
            actual: x.len(),
        });
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return domain(format!("input coordinate {bad} is not finite"));
    }
    Ok(())
}

/// Index of the first maximal coordinate.
fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = j;
        }
    }
    best
}

/// Shifted exponentials `exp(gamma (x_j - max x))` and the shift index.
fn shifted_exps(gamma: f64, x: &[f64]) -> (usize, Vec<f64>) {
    let top = argmax(x);
    let m = x[top];
    let e = x
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            if j == top {
                1.0
            } else {
                (gamma * (v - m)).exp()
            }
        })
        .collect();
    (top, e)
}

/// Smooth maximum `gamma^-1 log sum_j exp(gamma x_j)`, evaluated after
/// subtracting the largest coordinate.
pub fn psi(params: &SmoothingParams, x: &[f64]) -> Result<f64> {
    check_input(params, x)?;
    let (top, e) = shifted_exps(params.gamma, x);
    let rest: f64 = e
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, v)| v)
        .sum();
    Ok(x[top] + rest.ln_1p() / params.gamma)
}

fn softmax(params: &SmoothingParams, x: &[f64]) -> Vec<f64> {
    let (_, mut e) = shifted_exps(params.gamma, x);
    let total: f64 = e.iter().sum();
    for v in &mut e {
        *v /= total;
    }
    e
}

/// Gradient of [`psi`], the softmax weights.
pub fn psi_grad(params: &SmoothingParams, x: &[f64]) -> Result<SoftmaxWeights> {
    check_input(params, x)?;
    Ok(SoftmaxWeights {
        pi: softmax(params, x),
    })
}

fn hessian_from_pi(gamma: f64, pi: &[f64]) -> DMatrix<f64> {
    let d = pi.len();
    DMatrix::from_fn(d, d, |j, k| {
        let diag = if j == k { pi[j] } else { 0.0 };
        gamma * (diag - pi[j] * pi[k])
    })
}

/// Hessian `gamma (diag(pi) - pi pi^T)`.
pub fn psi_hessian(params: &SmoothingParams, x: &[f64]) -> Result<DMatrix<f64>> {
    check_input(params, x)?;
    Ok(hessian_from_pi(params.gamma, &softmax(params, x)))
}

fn third_entry(gamma: f64, pi: &[f64], j: usize, k: usize, l: usize) -> f64 {
    let (pj, pk, pl) = (pi[j], pi[k], pi[l]);
    let mut v = 2.0 * pj * pk * pl;
    if j == k {
        v -= pj * pl;
    }
    if j == l {
        v -= pj * pk;
    }
    if k == l {
        v -= pj * pk;
    }
    if j == k && k == l {
        v += pj;
    }
    gamma * gamma * v
}

fn third_from_pi(gamma: f64, pi: &[f64]) -> ThirdTensor {
    let d = pi.len();
    let mut t = ThirdTensor::zeros(d);
    for j in 0..d {
        for k in j..d {
            for l in k..d {
                let v = third_entry(gamma, pi, j, k, l);
                for (a, b, c) in [
                    (j, k, l),
                    (j, l, k),
                    (k, j, l),
                    (k, l, j),
                    (l, j, k),
                    (l, k, j),
                ] {
                    t.set(a, b, c, v);
                }
            }
        }
    }
    t
}

/// Third derivative tensor of [`psi`]. Only available for
/// `d <= DENSE_THIRD_MAX_DIM`.
pub fn psi_third(params: &SmoothingParams, x: &[f64]) -> Result<ThirdTensor> {
    check_input(params, x)?;
    if params.d > DENSE_THIRD_MAX_DIM {
        return Err(Error::TooLarge(format!(
            "dense third tensor limited to d <= {DENSE_THIRD_MAX_DIM}, got {}",
            params.d
        )));
    }
    Ok(third_from_pi(params.gamma, &softmax(params, x)))
}

/// Envelope `||g'''|| + 6 gamma ||g''|| + 6 gamma^2 ||g'||` for the third
/// derivative sum of `g o psi`.
pub fn f_third_envelope(params: &SmoothingParams, g: &SmoothIndicator) -> f64 {
    let gm = params.gamma;
    g.sup_d3() + 6.0 * gm * g.sup_d2() + 6.0 * gm * gm * g.sup_d1()
}

/// `sum_{j,k,l} |d^3 (g o psi) / dx_j dx_k dx_l|` at `x`.
///
/// Uses the dense tensor for `d <= DENSE_THIRD_MAX_DIM` and the factored
/// `O(d)` form otherwise.
pub fn f_third_sum(params: &SmoothingParams, g: &SmoothIndicator, x: &[f64]) -> Result<f64> {
    if params.d <= DENSE_THIRD_MAX_DIM {
        f_third_sum_dense(params, g, x)
    } else {
        f_third_sum_factored(params, g, x)
    }
}

fn g_derivs(g: &SmoothIndicator, t: f64) -> (f64, f64, f64) {
    (g.value(t, 1), g.value(t, 2), g.value(t, 3))
}

/// Chain rule over the materialized tensors.
pub fn f_third_sum_dense(params: &SmoothingParams, g: &SmoothIndicator, x: &[f64]) -> Result<f64> {
    let t = psi(params, x)?;
    if params.d > DENSE_THIRD_MAX_DIM {
        return Err(Error::TooLarge(format!(
            "dense third tensor limited to d <= {DENSE_THIRD_MAX_DIM}, got {}",
            params.d
        )));
    }
    let (g1, g2, g3) = g_derivs(g, t);
    let gm = params.gamma;
    let pi = softmax(params, x);
    let h = hessian_from_pi(gm, &pi);
    let d = params.d;
    let mut total = 0.0;
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                let v = g3 * pi[j] * pi[k] * pi[l]
                    + g2 * (h[(j, k)] * pi[l] + h[(j, l)] * pi[k] + h[(k, l)] * pi[j])
                    + g1 * third_entry(gm, &pi, j, k, l);
                total += v.abs();
            }
        }
    }
    Ok(total)
}

/// Same quantity grouped by the equality pattern of `(j, k, l)`; every
/// entry is a product of softmax weights, so each group sums in `O(d)`.
pub fn f_third_sum_factored(
    params: &SmoothingParams,
    g: &SmoothIndicator,
    x: &[f64],
) -> Result<f64> {
    let t = psi(params, x)?;
    let (g1, g2, g3) = g_derivs(g, t);
    let gm = params.gamma;
    let pi = softmax(params, x);

    // j = k = l
    let diag: f64 = pi
        .iter()
        .map(|&p| {
            (g3 * p * p * p
                + 3.0 * g2 * gm * (p - p * p) * p
                + g1 * gm * gm * (p - 3.0 * p * p + 2.0 * p * p * p))
                .abs()
        })
        .sum();

    // exactly two indices equal: entry (j, j, l) = pi_l * h(pi_j), three patterns
    let pair: f64 = pi
        .iter()
        .map(|&p| {
            let h = p * (g3 * p + g2 * gm * (1.0 - 3.0 * p) + g1 * gm * gm * (2.0 * p - 1.0));
            h.abs() * (1.0 - p)
        })
        .sum();

    // all distinct: entry = pi_j pi_k pi_l (g''' - 3 gamma g'' + 2 gamma^2 g')
    let p2: f64 = pi.iter().map(|p| p * p).sum();
    let distinct_mass: f64 = pi
        .iter()
        .map(|&p| p * ((1.0 - p) * (1.0 - p) - (p2 - p * p)))
        .sum::<f64>()
        .max(0.0);
    let coef = g3 - 3.0 * gm * g2 + 2.0 * gm * gm * g1;

    Ok(diag + 3.0 * pair + coef.abs() * distinct_mass)
}

/// The composite `f = g o psi` whose expectations the Lindeberg swap compares.
#[derive(Debug, Clone)]
pub struct Composite {
    params: SmoothingParams,
    g: SmoothIndicator,
}

impl Composite {
    pub fn new(params: SmoothingParams, g: SmoothIndicator) -> Self {
        Self { params, g }
    }

    pub fn params(&self) -> &SmoothingParams {
        &self.params
    }

    pub fn indicator(&self) -> &SmoothIndicator {
        &self.g
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.g.value(psi(&self.params, x)?, 0))
    }

    /// `g'(psi) pi`
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(&self.params, x)?;
        Ok(self.derivatives(x).1)
    }

    /// `g''(psi) pi pi^T + g'(psi) grad^2 psi`
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_input(&self.params, x)?;
        Ok(self.derivatives(x).2)
    }

    /// Value, gradient and Hessian at `x`, which must already be valid.
    pub(crate) fn derivatives(&self, x: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let t = psi(&self.params, x).expect("validated input");
        let pi = softmax(&self.params, x);
        let (g0, g1, g2) = (self.g.value(t, 0), self.g.value(t, 1), self.g.value(t, 2));
        let grad = pi.iter().map(|p| g1 * p).collect();
        let mut h = hessian_from_pi(self.params.gamma, &pi);
        h *= g1;
        let d = pi.len();
        for j in 0..d {
            for k in 0..d {
                h[(j, k)] += g2 * pi[j] * pi[k];
            }
        }
        (g0, grad, h)
    }

    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        let (top, e) = shifted_exps(self.params.gamma, x);
        let rest: f64 = e
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != top)
            .map(|(_, v)| v)
            .sum();
        self.g.value(x[top] + rest.ln_1p() / self.params.gamma, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoother::BorelSet;

    fn p(gamma: f64, d: usize) -> SmoothingParams {
        SmoothingParams::new(gamma, 10.0, 0.5, d).unwrap()
    }

    #[test]
    fn deserialization_validates() {
        let ok: SmoothingParams =
            serde_json::from_str(r#"{"gamma":2.0,"delta":1.0,"iota":0.5,"d":3}"#).unwrap();
        assert_eq!(ok, SmoothingParams::new(2.0, 1.0, 0.5, 3).unwrap());
        assert!(serde_json::from_str::<SmoothingParams>(
            r#"{"gamma":0.5,"delta":1.0,"iota":0.5,"d":3}"#
        )
        .is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SmoothingParams::new(1.0, 1.0, 0.5, 2).is_err());
        assert!(SmoothingParams::new(1.0, 2.0, 1.5, 2).is_err());
        assert!(SmoothingParams::new(-1.0, 2.0, 0.5, 2).is_err());
        assert!(SmoothingParams::new(2.0, 1.0, 0.5, 0).is_err());
        // just above the boundary epsilon rounds to 1
        assert!(SmoothingParams::new(1.0, 1.0 + 1e-17, 0.5, 2).is_err());
    }

    #[test]
    fn psi_two_point_symmetric() {
        let v = psi(&p(1.0, 2), &[0.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn psi_identity_in_one_dim() {
        for t in [-3.5, 0.0, 1e3] {
            assert_eq!(psi(&p(7.0, 1), &[t]).unwrap(), t);
        }
    }

    #[test]
    fn psi_errors() {
        let prm = p(1.0, 2);
        assert!(matches!(
            psi(&prm, &[1.0]),
            Err(Error::Shape {
                expected: 2,
                actual: 1
            })
        ));
        assert!(matches!(psi(&prm, &[1.0, f64::NAN]), Err(Error::Domain(_))));
        assert!(psi_grad(&prm, &[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn psi_no_overflow_at_large_gamma() {
        let prm = p(50.0, 3);
        let v = psi(&prm, &[1000.0, 999.0, -1000.0]).unwrap();
        assert!(v.is_finite() && v >= 1000.0 && v <= 1000.0 + prm.c_gamma());
    }

    #[test]
    fn grad_examples() {
        let g = psi_grad(&p(3.0, 2), &[0.0, 0.0]).unwrap();
        assert_eq!(g.pi, vec![0.5, 0.5]);
        let g = psi_grad(&p(1.0, 2), &[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((g.pi[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((g.pi[1] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((g.pi[0] - 0.731059).abs() < 1e-6);
        assert_eq!(psi_grad(&p(1.0, 1), &[4.0]).unwrap().pi, vec![1.0]);
    }

    #[test]
    fn hessian_examples() {
        let h = psi_hessian(&p(1.0, 1), &[2.0]).unwrap();
        assert_eq!(h[(0, 0)], 0.0);
        let h = psi_hessian(&p(1.0, 2), &[0.0, 0.0]).unwrap();
        assert_eq!(h[(0, 0)], 0.25);
        assert_eq!(h[(0, 1)], -0.25);
        assert_eq!(h[(1, 0)], -0.25);
        assert_eq!(h[(1, 1)], 0.25);
    }

    #[test]
    fn third_examples() {
        let t = psi_third(&p(1.0, 1), &[2.0]).unwrap();
        assert_eq!(t.get(0, 0, 0), 0.0);
        let t = psi_third(&p(1.0, 2), &[0.0, 0.0]).unwrap();
        assert!(t.as_slice().iter().all(|v| v.abs() < 1e-16));
    }

    #[test]
    fn third_contracts_to_zero_and_is_symmetric() {
        let prm = p(2.0, 4);
        let t = psi_third(&prm, &[0.3, -1.0, 0.9, 0.1]).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let s: f64 = (0..4).map(|l| t.get(j, k, l)).sum();
                assert!(s.abs() < 1e-14);
                for l in 0..4 {
                    let v = t.get(j, k, l);
                    assert_eq!(v, t.get(l, j, k));
                    assert_eq!(v, t.get(k, l, j));
                    assert_eq!(v, t.get(k, j, l));
                }
            }
        }
    }

    #[test]
    fn third_refuses_large_dim() {
        let prm = p(1.0, DENSE_THIRD_MAX_DIM + 1);
        let x = vec![0.0; DENSE_THIRD_MAX_DIM + 1];
        assert!(matches!(psi_third(&prm, &x), Err(Error::TooLarge(_))));
    }

    #[test]
    fn f_third_sum_plateau_and_one_dim() {
        let prm = SmoothingParams::new(4.0, 0.5, 0.5, 3).unwrap();
        let g = SmoothIndicator::build(&BorelSet::at_most(0.0), &prm).unwrap();
        // psi ~ -10: deep in the plateau
        let v = f_third_sum(&prm, &g, &[-10.0, -11.0, -12.0]).unwrap();
        assert_eq!(v, 0.0);

        let prm1 = prm.with_dim(1).unwrap();
        for t in [0.2, 0.75, 1.1] {
            let v = f_third_sum(&prm1, &g, &[t]).unwrap();
            assert!((v - g.value(t, 3).abs()).abs() <= 1e-12 * (1.0 + v));
        }
    }

    #[test]
    fn factored_matches_dense() {
        let prm = SmoothingParams::new(4.0, 0.5, 0.5, 6).unwrap();
        let g = SmoothIndicator::build(&BorelSet::at_most(0.0), &prm).unwrap();
        let x = [0.1, 0.3, -0.2, 0.25, 0.05, -0.4];
        let a = f_third_sum_dense(&prm, &g, &x).unwrap();
        let b = f_third_sum_factored(&prm, &g, &x).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
    }
}

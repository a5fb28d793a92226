//! Smoothed indicators of finite unions of intervals.
//!
//! `g` equals 1 on the (pre-merged) set, 0 outside its `3 delta`
//! enlargement, and climbs between the two through the septic smoothstep
//! `S(u) = 35u^4 - 84u^5 + 70u^6 - 20u^7`, which is `C^3` with
//! `S(0) = 0`, `S(1) = 1` and vanishing first three derivatives at both ends.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::smoothmax::SmoothingParams;

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

/// Finite union of disjoint closed intervals, sorted with strictly
/// increasing endpoints. The empty list is the empty set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct BorelSet {
    intervals: Vec<Interval>,
}

impl TryFrom<Vec<Interval>> for BorelSet {
    type Error = Error;

    fn try_from(v: Vec<Interval>) -> Result<Self> {
        BorelSet::new(v)
    }
}

impl From<BorelSet> for Vec<Interval> {
    fn from(s: BorelSet) -> Self {
        s.intervals
    }
}

impl BorelSet {
    /// Validates an already-normalized interval list.
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        for (i, iv) in intervals.iter().enumerate() {
            if iv.lo.is_nan() || iv.hi.is_nan() {
                return Err(Error::InvalidSet(format!(
                    "interval {i} has a NaN endpoint"
                )));
            }
            if iv.lo > iv.hi {
                return Err(Error::InvalidSet(format!(
                    "interval {i} has lo {} > hi {}",
                    iv.lo, iv.hi
                )));
            }
            if iv.lo == f64::INFINITY || iv.hi == f64::NEG_INFINITY {
                return Err(Error::InvalidSet(format!(
                    "interval {i} is empty at infinity"
                )));
            }
        }
        for (i, w) in intervals.windows(2).enumerate() {
            if w[0].hi >= w[1].lo {
                return Err(Error::InvalidSet(format!(
                    "intervals {i} and {} overlap or are out of order",
                    i + 1
                )));
            }
        }
        Ok(Self { intervals })
    }

    /// Sorts and merges an arbitrary list of intervals.
    pub fn from_unsorted(mut intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            if iv.lo.is_nan() || iv.hi.is_nan() || iv.lo > iv.hi {
                return Err(Error::InvalidSet(format!(
                    "bad interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        Self::new(merge_within(intervals, 0.0, false))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn real_line() -> Self {
        Self {
            intervals: vec![Interval::new(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    /// The half-line `(-inf, t]`.
    pub fn at_most(t: f64) -> Self {
        Self {
            intervals: vec![Interval::new(f64::NEG_INFINITY, t)],
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        let k = self.intervals.partition_point(|iv| iv.hi < t);
        self.intervals.get(k).is_some_and(|iv| iv.lo <= t)
    }

    /// `t`-enlargement `{x : dist(x, A) <= t}`.
    pub fn enlarge(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) || t.is_infinite() {
            return domain(format!(
                "enlargement radius must be finite and >= 0, got {t}"
            ));
        }
        let widened = self
            .intervals
            .iter()
            .map(|iv| Interval::new(iv.lo - t, iv.hi + t))
            .collect();
        Ok(Self {
            intervals: merge_within(widened, 0.0, false),
        })
    }

    /// Subset test for normalized sets.
    pub fn is_subset_of(&self, other: &BorelSet) -> bool {
        self.intervals.iter().all(|iv| {
            other
                .intervals
                .iter()
                .any(|o| o.lo <= iv.lo && iv.hi <= o.hi)
        })
    }
}

/// Merges sorted intervals whose gap is below `gap` (or equal when
/// `strict` is false).
fn merge_within(sorted: Vec<Interval>, gap: f64, strict: bool) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        if let Some(last) = out.last_mut() {
            let g = iv.lo - last.hi;
            let join = if strict { g < gap } else { g <= gap };
            if join {
                last.hi = last.hi.max(iv.hi);
                continue;
            }
        }
        out.push(iv);
    }
    out
}

/// Septic smoothstep and its derivatives on `[0, 1]`.
pub fn smoothstep(u: f64, order: u8) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let w = 1.0 - u;
    match order {
        0 => u2 * u2 * (35.0 - 84.0 * u + 70.0 * u2 - 20.0 * u3),
        1 => 140.0 * u3 * w * w * w,
        2 => 420.0 * u2 * w * w * (1.0 - 2.0 * u),
        3 => 840.0 * u * w * (5.0 * u2 - 5.0 * u + 1.0),
        _ => panic!("smoothstep derivative order {order} not supported"),
    }
}

/// `S(u)` given both `u` and `1 - u`, using `S(u) = 1 - S(1 - u)` on the
/// upper half; the result lies in `[0, 1]`.
fn rise(u: f64, complement: f64) -> f64 {
    if u <= 0.5 {
        smoothstep(u.max(0.0), 0)
    } else {
        1.0 - smoothstep(complement.max(0.0), 0)
    }
}

/// `max_{u in [0,1]} |S^(order)(u)|`, evaluated at the closed-form
/// critical points. In `v = u - 1/2`: `S' ~ (1/4 - v^2)^3`,
/// `S'' ~ -v (1/4 - v^2)^2`, `S''' ~ -5v^4 + 3v^2/2 - 1/16`.
pub fn smoothstep_max(order: u8) -> f64 {
    let candidates: Vec<f64> = match order {
        0 => vec![1.0],
        1 => vec![0.5],
        2 => {
            let v = (1.0f64 / 20.0).sqrt();
            vec![0.5 - v, 0.5 + v]
        }
        3 => {
            let v = (3.0f64 / 20.0).sqrt();
            vec![0.5, 0.5 - v, 0.5 + v]
        }
        _ => panic!("smoothstep derivative order {order} not supported"),
    };
    candidates
        .into_iter()
        .chain([0.0, 1.0])
        .map(|u| smoothstep(u, order).abs())
        .fold(0.0, f64::max)
}

/// Constant `C` with `||g''|| <= C gamma / delta` and
/// `||g'''|| <= C gamma^2 / delta` for every admissible `(gamma, delta)`.
///
/// With transition width `3 delta`, `||g''|| = S''_max / (9 delta^2)` and
/// `||g'''|| = S'''_max / (27 delta^3)`; `gamma delta > 1` then gives the
/// bounds with `C = max(S''_max / 9, S'''_max / 27)`.
pub fn implementation_constant() -> f64 {
    (smoothstep_max(2) / 9.0).max(smoothstep_max(3) / 27.0)
}

/// Smooth surrogate `g` for the indicator of a [`BorelSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothIndicator {
    set: BorelSet,
    plateaus: Vec<Interval>,
    width: f64,
    gamma: f64,
    delta: f64,
    sup_d1: f64,
    sup_d2: f64,
    sup_d3: f64,
    big_c: f64,
}

impl SmoothIndicator {
    pub fn build(a: &BorelSet, params: &SmoothingParams) -> Result<Self> {
        // Re-validate in case params were deserialized.
        let params =
            SmoothingParams::new(params.gamma(), params.delta(), params.iota(), params.d())?;
        let delta = params.delta();
        let width = 3.0 * delta;
        // Every point of a gap shorter than 6 delta lies in A^{3 delta}.
        let plateaus = merge_within(a.intervals().to_vec(), 2.0 * width, true);
        let mut g = Self {
            set: a.clone(),
            plateaus,
            width,
            gamma: params.gamma(),
            delta,
            sup_d1: 0.0,
            sup_d2: 0.0,
            sup_d3: 0.0,
            big_c: implementation_constant(),
        };
        g.refresh_sup_norms();
        Ok(g)
    }

    fn has_transition(&self) -> bool {
        self.plateaus
            .iter()
            .any(|p| p.lo.is_finite() || p.hi.is_finite())
    }

    fn refresh_sup_norms(&mut self) {
        if self.has_transition() {
            let w = self.width;
            self.sup_d1 = smoothstep_max(1) / w;
            self.sup_d2 = smoothstep_max(2) / (w * w);
            self.sup_d3 = smoothstep_max(3) / (w * w * w);
        } else {
            self.sup_d1 = 0.0;
            self.sup_d2 = 0.0;
            self.sup_d3 = 0.0;
        }
    }

    /// Copy with a different transition width. Only useful for checking
    /// that certification catches an invalid construction.
    pub fn with_width(&self, width: f64) -> Self {
        let mut g = self.clone();
        g.width = width;
        g.refresh_sup_norms();
        g
    }

    pub fn set(&self) -> &BorelSet {
        &self.set
    }

    pub fn plateaus(&self) -> &[Interval] {
        &self.plateaus
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sup_d1(&self) -> f64 {
        self.sup_d1
    }

    pub fn sup_d2(&self) -> f64 {
        self.sup_d2
    }

    pub fn sup_d3(&self) -> f64 {
        self.sup_d3
    }

    pub fn big_c(&self) -> f64 {
        self.big_c
    }

    /// Transition-zone endpoints, where the fourth derivative jumps.
    pub fn kink_points(&self) -> Vec<f64> {
        let w = self.width;
        let mut pts = Vec::new();
        for p in &self.plateaus {
            if p.lo.is_finite() {
                pts.extend([p.lo - w, p.lo]);
            }
            if p.hi.is_finite() {
                pts.extend([p.hi, p.hi + w]);
            }
        }
        pts
    }

    /// Transition zones as `(start, end, rising)`.
    pub fn transition_zones(&self) -> Vec<(f64, f64, bool)> {
        let w = self.width;
        let mut zones = Vec::new();
        for p in &self.plateaus {
            if p.lo.is_finite() {
                zones.push((p.lo - w, p.lo, true));
            }
            if p.hi.is_finite() {
                zones.push((p.hi, p.hi + w, false));
            }
        }
        zones
    }

    /// `order`-th derivative of `g` at `t`; `order` must be at most 3.
    pub fn value(&self, t: f64, order: u8) -> f64 {
        assert!(order <= 3, "derivative order {order} not supported");
        let w = self.width;
        let k = self.plateaus.partition_point(|p| p.hi + w < t);
        let Some(p) = self.plateaus.get(k) else {
            return 0.0;
        };
        if t < p.lo - w {
            return 0.0;
        }
        if t >= p.lo && t <= p.hi {
            return if order == 0 { 1.0 } else { 0.0 };
        }
        if order == 0 {
            // distance to the plateau, so that values near either end of the
            // ramp are computed without cancellation
            let gap = if t < p.lo { p.lo - t } else { t - p.hi };
            return rise(1.0 - gap / w, gap / w);
        }
        let scale = w.powi(order as i32);
        if t < p.lo {
            smoothstep((t - (p.lo - w)) / w, order) / scale
        } else {
            -smoothstep((t - p.hi) / w, order) / scale
        }
    }
}

/// Builds the smoothed indicator of `a`.
pub fn build_g(a: &BorelSet, params: &SmoothingParams) -> Result<SmoothIndicator> {
    SmoothIndicator::build(a, params)
}

/// Checked derivative evaluation.
pub fn g_eval(g: &SmoothIndicator, t: f64, order: u32) -> Result<f64> {
    if order > 3 {
        return domain(format!("derivative order must be 0..=3, got {order}"));
    }
    if t.is_nan() {
        return domain("evaluation point is NaN");
    }
    Ok(g.value(t, order as u8))
}

/// Dense-grid certification of the derivative bounds and the sandwich
/// `1_A <= g <= 1_{A^{3 delta}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub max_d1: f64,
    pub max_d2: f64,
    pub max_d3: f64,
    /// `max|g'| * delta`, must be at most 1.
    pub ratio_d1: f64,
    /// `max|g''| * delta / gamma`, must be at most `big_c`.
    pub ratio_d2: f64,
    /// `max|g'''| * delta / gamma^2`, must be at most `big_c`.
    pub ratio_d3: f64,
    pub big_c: f64,
    pub points_checked: usize,
    pub sandwich_violations: usize,
    pub passed: bool,
}

pub fn certify_bounds(g: &SmoothIndicator, grid_points: usize) -> Certification {
    let grid_points = grid_points.max(2);
    let mut pts = Vec::new();
    let (mut m1, mut m2, mut m3) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b, _) in g.transition_zones() {
        for i in 0..grid_points {
            let t = a + (b - a) * i as f64 / (grid_points - 1) as f64;
            m1 = m1.max(g.value(t, 1).abs());
            m2 = m2.max(g.value(t, 2).abs());
            m3 = m3.max(g.value(t, 3).abs());
            pts.push(t);
        }
    }

    // Sandwich probes: set endpoints, enlargement endpoints, gap midpoints,
    // plus the transition grid above.
    let enlarged = g.set.enlarge(3.0 * g.delta).expect("delta is positive");
    for s in [&g.set, &enlarged] {
        for iv in s.intervals() {
            for e in [iv.lo, iv.hi] {
                if e.is_finite() {
                    let h = 1e-9 * (1.0 + e.abs());
                    pts.extend([e - h, e, e + h]);
                }
            }
            if iv.lo.is_finite() && iv.hi.is_finite() {
                pts.push(0.5 * (iv.lo + iv.hi));
            }
        }
        for w in s.intervals().windows(2) {
            pts.push(0.5 * (w[0].hi + w[1].lo));
        }
    }
    let tol = 4.0 * f64::EPSILON;
    let violations = pts
        .iter()
        .filter(|&&t| {
            let v = g.value(t, 0);
            let lower = if g.set.contains(t) { 1.0 } else { 0.0 };
            let upper = if enlarged.contains(t) { 1.0 } else { 0.0 };
            v < lower - tol || v > upper + tol || !(-tol..=1.0 + tol).contains(&v)
        })
        .count();

    let ratio_d1 = m1 * g.delta;
    let ratio_d2 = m2 * g.delta / g.gamma;
    let ratio_d3 = m3 * g.delta / (g.gamma * g.gamma);
    let passed = ratio_d1 <= 1.0 && ratio_d2 <= g.big_c && ratio_d3 <= g.big_c && violations == 0;
    Certification {
        max_d1: m1,
        max_d2: m2,
        max_d3: m3,
        ratio_d1,
        ratio_d2,
        ratio_d3,
        big_c: g.big_c,
        points_checked: pts.len(),
        sandwich_violations: violations,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prm(gamma: f64, delta: f64) -> SmoothingParams {
        SmoothingParams::new(gamma, delta, 0.5, 1).unwrap()
    }

    #[test]
    fn set_validation() {
        assert!(BorelSet::new(vec![Interval::new(1.0, 0.0)]).is_err());
        assert!(BorelSet::new(vec![Interval::new(0.0, 1.0), Interval::new(1.0, 2.0)]).is_err());
        assert!(BorelSet::new(vec![Interval::new(2.0, 3.0), Interval::new(0.0, 1.0)]).is_err());
        assert!(BorelSet::new(vec![Interval::new(f64::NAN, 1.0)]).is_err());
        assert!(BorelSet::new(vec![]).unwrap().is_empty());
        let s = BorelSet::from_unsorted(vec![
            Interval::new(2.0, 3.0),
            Interval::new(0.0, 1.0),
            Interval::new(0.5, 2.0),
        ])
        .unwrap();
        assert_eq!(s.intervals(), &[Interval::new(0.0, 3.0)]);
    }

    #[test]
    fn enlarge_examples() {
        let a = BorelSet::at_most(0.0).enlarge(0.5).unwrap();
        assert_eq!(a, BorelSet::at_most(0.5));

        let b = BorelSet::new(vec![Interval::new(0.0, 1.0), Interval::new(1.5, 2.0)]).unwrap();
        let e = b.enlarge(0.3).unwrap();
        assert_eq!(e.intervals().len(), 1);
        assert!((e.intervals()[0].lo + 0.3).abs() < 1e-15);
        assert!((e.intervals()[0].hi - 2.3).abs() < 1e-15);

        assert_eq!(b.enlarge(0.0).unwrap(), b);
        assert!(b.enlarge(-1.0).is_err());
        assert!(b.enlarge(f64::NAN).is_err());
    }

    #[test]
    fn half_line_geometry() {
        let g = build_g(&BorelSet::at_most(0.0), &prm(4.0, 0.5)).unwrap();
        assert_eq!(g.value(-1.0, 0), 1.0);
        assert_eq!(g.value(2.0, 0), 0.0);
        assert!((g.value(0.75, 0) - 0.5).abs() < 1e-15);
        let mut prev = g.value(0.0, 0);
        for i in 1..=1500 {
            let v = g.value(i as f64 * 1e-3, 0);
            assert!(v <= prev);
            prev = v;
        }
        // S'(1/2) = 35/16, width 1.5
        let d1 = g_eval(&g, 0.75, 1).unwrap();
        assert!((d1 + (35.0 / 16.0) / 1.5).abs() < 1e-13);
        assert!(d1.abs() <= 2.0);
    }

    #[test]
    fn whole_line_and_empty() {
        let p = prm(4.0, 0.5);
        let g = build_g(&BorelSet::real_line(), &p).unwrap();
        assert_eq!(g.value(123.0, 0), 1.0);
        assert_eq!((g.sup_d1(), g.sup_d2(), g.sup_d3()), (0.0, 0.0, 0.0));
        let z = build_g(&BorelSet::empty(), &p).unwrap();
        assert_eq!(z.value(0.0, 0), 0.0);
        assert!(certify_bounds(&g, 1000).passed);
        assert!(certify_bounds(&z, 1000).passed);
    }

    #[test]
    fn plateau_and_outside_orders() {
        let g = build_g(
            &BorelSet::new(vec![Interval::new(0.0, 1.0)]).unwrap(),
            &prm(4.0, 0.5),
        )
        .unwrap();
        assert_eq!(g.value(0.5, 0), 1.0);
        for o in 1..=3 {
            assert_eq!(g.value(0.5, o), 0.0);
            assert_eq!(g.value(10.0, o), 0.0);
            assert_eq!(g.value(-10.0, o), 0.0);
        }
        assert!(g_eval(&g, 0.5, 4).is_err());
    }

    #[test]
    fn close_intervals_share_a_plateau() {
        let a = BorelSet::new(vec![Interval::new(0.0, 1.0), Interval::new(3.0, 4.0)]).unwrap();
        let g = build_g(&a, &prm(4.0, 0.5)).unwrap();
        assert_eq!(g.plateaus().len(), 1);
        assert_eq!(g.value(2.0, 0), 1.0);
        let far = build_g(&a, &prm(10.0, 0.2)).unwrap();
        assert_eq!(far.plateaus().len(), 2);
        assert!(far.value(2.0, 0) < 1.0);
    }

    #[test]
    fn certification_catches_narrow_width() {
        let g = build_g(&BorelSet::at_most(0.0), &prm(4.0, 0.5)).unwrap();
        let ok = certify_bounds(&g, 10_000);
        assert!(ok.passed, "{ok:?}");
        let bad = certify_bounds(&g.with_width(g.delta()), 10_000);
        assert!(!bad.passed);
        assert!(bad.ratio_d1 > 1.0);
    }

    #[test]
    fn implementation_constant_below_four() {
        let c = implementation_constant();
        assert!(c > 0.0 && c <= 4.0, "{c}");
    }
}

//! Conductivity models κ(θ).
//!
//! Three parametrizations share one representation: a cubic given by its
//! coefficients, a cubic given by its values at four equally spaced
//! temperatures, and a piecewise-linear interpolant on a temperature grid.

use serde::{Deserialize, Serialize};

use crate::linalg::solve_dense;
use crate::{Error, Result};

/// Evaluation of κ(θ).
pub trait Conductivity {
    fn kappa(&self, theta: f64) -> f64;
}

impl<T: Conductivity + ?Sized> Conductivity for &T {
    fn kappa(&self, theta: f64) -> f64 {
        (**self).kappa(theta)
    }
}

/// Closed temperature interval of interest `[theta_min, theta_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRange {
    pub theta_min: f64,
    pub theta_max: f64,
}

impl TemperatureRange {
    pub fn new(theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(theta_min.is_finite() && theta_max.is_finite() && theta_min < theta_max) {
            return Err(Error::InvalidConfig(format!(
                "temperature range requires theta_min < theta_max, got [{theta_min}, {theta_max}]"
            )));
        }
        Ok(Self {
            theta_min,
            theta_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    /// `n` equally spaced points, both ends included.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.theta_min],
            _ => {
                let h = self.width() / (n - 1) as f64;
                let mut v: Vec<f64> = (0..n).map(|i| self.theta_min + i as f64 * h).collect();
                v[n - 1] = self.theta_max;
                v
            }
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.theta_min && theta <= self.theta_max
    }
}

/// κ(θ) = C₁θ³ + C₂θ² + C₃θ + C₄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    pub coefficients: [f64; 4],
}

impl Cubic {
    pub fn new(coefficients: [f64; 4]) -> Self {
        Self { coefficients }
    }

    /// dκ/dθ
    pub fn derivative(&self, theta: f64) -> f64 {
        let [c1, c2, c3, _] = self.coefficients;
        (3.0 * c1 * theta + 2.0 * c2) * theta + c3
    }

    /// Mean value of κ over the range, from the exact antiderivative.
    pub fn average_over(&self, range: TemperatureRange) -> f64 {
        let [c1, c2, c3, c4] = self.coefficients;
        let anti = |t: f64| ((((c1 / 4.0) * t + c2 / 3.0) * t + c3 / 2.0) * t + c4) * t;
        (anti(range.theta_max) - anti(range.theta_min)) / range.width()
    }

    pub fn is_positive_on(&self, range: TemperatureRange) -> bool {
        cubic_is_positive_on(self.coefficients, range)
    }
}

impl Conductivity for Cubic {
    #[inline]
    fn kappa(&self, theta: f64) -> f64 {
        let [c1, c2, c3, c4] = self.coefficients;
        ((c1 * theta + c2) * theta + c3) * theta + c4
    }
}

/// A cubic through four points `(theta_nodes[i], kappa_nodes[i])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicNodes {
    pub theta_nodes: [f64; 4],
    pub kappa_nodes: [f64; 4],
}

impl CubicNodes {
    /// Nodes equally spaced on `range`, first and last at its ends.
    pub fn on_range(range: TemperatureRange, kappa_nodes: [f64; 4]) -> Self {
        let g = range.linspace(4);
        Self {
            theta_nodes: [g[0], g[1], g[2], g[3]],
            kappa_nodes,
        }
    }

    pub fn to_cubic(&self) -> Result<Cubic> {
        values_to_coefficients(self.theta_nodes, self.kappa_nodes).map(Cubic::new)
    }
}

/// Piecewise-linear κ on a strictly increasing grid. Queries outside the
/// grid take the nearest end value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub theta_grid: Vec<f64>,
    pub kappa_values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(theta_grid: Vec<f64>, kappa_values: Vec<f64>) -> Result<Self> {
        let p = Self {
            theta_grid,
            kappa_values,
        };
        p.validate_shape()?;
        Ok(p)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.theta_grid.len() < 2 {
            return Err(Error::InvalidConfig(
                "piecewise model needs at least two knots".into(),
            ));
        }
        if self.theta_grid.len() != self.kappa_values.len() {
            return Err(Error::InvalidConfig(format!(
                "piecewise model has {} knots but {} values",
                self.theta_grid.len(),
                self.kappa_values.len()
            )));
        }
        strictly_increasing(&self.theta_grid, "piecewise theta_grid")
    }

    pub fn is_positive(&self) -> bool {
        piecewise_is_positive(&self.kappa_values)
    }
}

impl Conductivity for PiecewiseLinear {
    fn kappa(&self, theta: f64) -> f64 {
        let g = &self.theta_grid;
        let v = &self.kappa_values;
        let last = g.len() - 1;
        if theta <= g[0] {
            return v[0];
        }
        if theta >= g[last] {
            return v[last];
        }
        // first knot strictly greater than theta; 1 <= hi <= last
        let hi = g.partition_point(|&x| x <= theta);
        let lo = hi - 1;
        let w = (theta - g[lo]) / (g[hi] - g[lo]);
        v[lo] + w * (v[hi] - v[lo])
    }
}

/// The three parametrizations of κ(θ), serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConductivityModel {
    #[serde(rename = "cubic_coeffs")]
    CubicByCoefficients(Cubic),
    #[serde(rename = "cubic_values")]
    CubicByValues(CubicNodes),
    #[serde(rename = "piecewise")]
    PiecewiseLinear(PiecewiseLinear),
}

impl ConductivityModel {
    pub fn cubic(coefficients: [f64; 4]) -> Self {
        Self::CubicByCoefficients(Cubic::new(coefficients))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::CubicByCoefficients(c) => {
                if c.coefficients.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("non-finite cubic coefficient".into()))
                }
            }
            Self::CubicByValues(n) => {
                strictly_increasing(&n.theta_nodes, "cubic theta_nodes")?;
                let h = n.theta_nodes[1] - n.theta_nodes[0];
                let span = n.theta_nodes[3] - n.theta_nodes[0];
                for w in n.theta_nodes.windows(2) {
                    if ((w[1] - w[0]) - h).abs() > 1e-9 * span {
                        return Err(Error::InvalidConfig(
                            "cubic theta_nodes must be equally spaced".into(),
                        ));
                    }
                }
                Ok(())
            }
            Self::PiecewiseLinear(p) => {
                p.validate_shape()?;
                if !p.is_positive() {
                    return Err(Error::InvalidConfig(
                        "piecewise conductivity values must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Resolves the model into a form that is cheap to evaluate repeatedly.
    pub fn prepare(&self) -> Result<Prepared<'_>> {
        Ok(match self {
            Self::CubicByCoefficients(c) => Prepared::Cubic(*c),
            Self::CubicByValues(n) => Prepared::Cubic(n.to_cubic()?),
            Self::PiecewiseLinear(p) => Prepared::Piecewise(p),
        })
    }

    /// κ(θ). A cubic given by values is converted on every call; use
    /// [`ConductivityModel::prepare`] in loops.
    pub fn evaluate(&self, theta: f64) -> f64 {
        match self {
            Self::CubicByCoefficients(c) => c.kappa(theta),
            Self::CubicByValues(n) => n.to_cubic().map_or(f64::NAN, |c| c.kappa(theta)),
            Self::PiecewiseLinear(p) => p.kappa(theta),
        }
    }

    /// Whether κ is positive on the whole range.
    pub fn is_positive_on(&self, range: TemperatureRange) -> bool {
        match self {
            Self::CubicByCoefficients(c) => c.is_positive_on(range),
            Self::CubicByValues(n) => n.to_cubic().is_ok_and(|c| c.is_positive_on(range)),
            Self::PiecewiseLinear(p) => p.is_positive(),
        }
    }
}

/// Borrowed, ready-to-evaluate form of a [`ConductivityModel`].
#[derive(Debug, Clone, Copy)]
pub enum Prepared<'a> {
    Cubic(Cubic),
    Piecewise(&'a PiecewiseLinear),
}

impl Conductivity for Prepared<'_> {
    #[inline]
    fn kappa(&self, theta: f64) -> f64 {
        match self {
            Prepared::Cubic(c) => c.kappa(theta),
            Prepared::Piecewise(p) => p.kappa(theta),
        }
    }
}

fn strictly_increasing(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!(
            "{what} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

/// Coefficients of the cubic through four points, from the 4×4 Vandermonde
/// system `Σ Cₙ θᵢ^(4−n) = κᵢ`.
pub fn values_to_coefficients(theta_nodes: [f64; 4], kappa_nodes: [f64; 4]) -> Result<[f64; 4]> {
    for i in 0..4 {
        for j in i + 1..4 {
            if theta_nodes[i] == theta_nodes[j] {
                return Err(Error::SingularSystem(format!(
                    "repeated temperature node {}",
                    theta_nodes[i]
                )));
            }
        }
    }
    // Solve in the shifted variable s = θ - θ̄ for conditioning, then expand.
    let shift = theta_nodes.iter().sum::<f64>() / 4.0;
    let mut a = [[0.0; 4]; 4];
    for (row, &t) in a.iter_mut().zip(&theta_nodes) {
        let s = t - shift;
        *row = [s * s * s, s * s, s, 1.0];
    }
    let [d1, d2, d3, d4] = solve_dense(a, kappa_nodes)?;
    // d1 (θ-m)³ + d2 (θ-m)² + d3 (θ-m) + d4 expanded in powers of θ
    let m = shift;
    Ok([
        d1,
        d2 - 3.0 * d1 * m,
        d3 - 2.0 * d2 * m + 3.0 * d1 * m * m,
        d4 - d3 * m + d2 * m * m - d1 * m * m * m,
    ])
}

const LEADING_EPS: f64 = 1e-14;
const DISCRIMINANT_EPS: f64 = 1e-12;

/// Real roots of dκ/dθ = 3C₁θ² + 2C₂θ + C₃.
fn derivative_roots(c: [f64; 4]) -> Vec<f64> {
    let a = 3.0 * c[0];
    let b = 2.0 * c[1];
    let k = c[2];
    if a.abs() < LEADING_EPS {
        if b.abs() < LEADING_EPS {
            return Vec::new();
        }
        return vec![-k / b];
    }
    let disc = b * b - 4.0 * a * k;
    if disc < -DISCRIMINANT_EPS {
        return Vec::new();
    }
    if disc <= DISCRIMINANT_EPS {
        return vec![-b / (2.0 * a)];
    }
    // q = -(b + sign(b) sqrt(disc)) / 2 avoids cancellation
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        // b == 0: roots ±sqrt(-k/a)
        let r = (sq / (2.0 * a)).abs();
        return vec![-r, r];
    }
    vec![q / a, k / q]
}

/// Membership of the coefficients in the positivity set: κ(θ_min) > 0,
/// κ(θ_max) > 0 and κ > 0 at every real interior extremum.
pub fn cubic_is_positive_on(c: [f64; 4], range: TemperatureRange) -> bool {
    let cubic = Cubic::new(c);
    if !(cubic.kappa(range.theta_min) > 0.0 && cubic.kappa(range.theta_max) > 0.0) {
        return false;
    }
    derivative_roots(c)
        .into_iter()
        .filter(|&t| t > range.theta_min && t < range.theta_max)
        .all(|t| cubic.kappa(t) > 0.0)
}

/// A piecewise-linear function is positive iff all of its knot values are.
pub fn piecewise_is_positive(kappa_values: &[f64]) -> bool {
    !kappa_values.is_empty() && kappa_values.iter().all(|&v| v > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TRUTH: [f64; 4] = [0.0810, -0.4860, 0.0918, 4.2060];

    fn range(a: f64, b: f64) -> TemperatureRange {
        TemperatureRange::new(a, b).unwrap()
    }

    #[test]
    fn ground_truth_at_one() {
        let k = ConductivityModel::cubic(TRUTH).evaluate(1.0);
        assert_relative_eq!(k, 3.8928, epsilon = 1e-12);
    }

    #[test]
    fn constant_cubic() {
        let m = ConductivityModel::cubic([0.0, 0.0, 0.0, 2.5]);
        for t in [-3.0, 0.0, 1.0, 17.0] {
            assert_eq!(m.evaluate(t), 2.5);
        }
    }

    #[test]
    fn piecewise_midpoint_and_clamping() {
        let p = PiecewiseLinear::new(vec![1.0, 2.0], vec![5.0, 7.0]).unwrap();
        assert_eq!(p.kappa(1.5), 6.0);
        assert_eq!(p.kappa(0.2), 5.0);
        assert_eq!(p.kappa(9.0), 7.0);
        assert_eq!(p.kappa(2.0), 7.0);
    }

    #[test]
    fn piecewise_exact_at_knots() {
        let g = vec![0.5, 1.0, 1.7, 3.0];
        let v = vec![2.0, 1.0, 4.0, 3.5];
        let p = PiecewiseLinear::new(g.clone(), v.clone()).unwrap();
        for (t, k) in g.iter().zip(&v) {
            assert_eq!(p.kappa(*t), *k);
        }
    }

    #[test]
    fn piecewise_rejects_bad_grids() {
        assert!(PiecewiseLinear::new(vec![1.0], vec![1.0]).is_err());
        assert!(PiecewiseLinear::new(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(PiecewiseLinear::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn values_to_coefficients_cube() {
        let c = values_to_coefficients([1.0, 2.0, 3.0, 4.0], [1.0, 8.0, 27.0, 64.0]).unwrap();
        for (a, b) in c.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn values_to_coefficients_constant() {
        let c = values_to_coefficients([1.0, 2.0, 3.0, 4.0], [3.3; 4]).unwrap();
        for (a, b) in c.iter().zip([0.0, 0.0, 0.0, 3.3]) {
            assert!((a - b).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn values_to_coefficients_recovers_ground_truth() {
        let nodes = CubicNodes::on_range(range(1.0, 4.43), [0.0; 4]).theta_nodes;
        let truth = Cubic::new(TRUTH);
        let vals = nodes.map(|t| truth.kappa(t));
        let c = values_to_coefficients(nodes, vals).unwrap();
        for (a, b) in c.iter().zip(TRUTH) {
            assert!((a - b).abs() < 1e-8, "{c:?}");
        }
    }

    #[test]
    fn values_to_coefficients_repeated_node() {
        let r = values_to_coefficients([1.0, 2.0, 2.0, 4.0], [1.0; 4]);
        assert!(matches!(r, Err(Error::SingularSystem(_))));
    }

    #[test]
    fn positivity_constants() {
        let r = range(0.3, 7.0);
        assert!(cubic_is_positive_on([0.0, 0.0, 0.0, 1.0], r));
        assert!(!cubic_is_positive_on([0.0, 0.0, 0.0, -1.0], r));
    }

    #[test]
    fn positivity_ground_truth_against_grid() {
        let r = range(1.0, 4.43);
        let truth = Cubic::new(TRUTH);
        let brute = r.linspace(10_000).into_iter().all(|t| truth.kappa(t) > 0.0);
        assert!(brute);
        assert!(cubic_is_positive_on(TRUTH, r));
    }

    #[test]
    fn positivity_catches_interior_dip() {
        // (θ-2)² - 0.01 = θ² - 4θ + 3.99 dips below zero at θ = 2 only
        let c = [0.0, 1.0, -4.0, 3.99];
        assert!(!cubic_is_positive_on(c, range(1.0, 3.0)));
        assert!(cubic_is_positive_on(c, range(2.5, 3.0)));
    }

    #[test]
    fn piecewise_positivity() {
        assert!(piecewise_is_positive(&[1.0; 5]));
        assert!(!piecewise_is_positive(&[1.0, 0.0, 2.0]));
        assert!(piecewise_is_positive(&[2.0, 3.0, 0.5]));
    }

    #[test]
    fn average_matches_quadrature() {
        let r = range(1.0, 4.43);
        let truth = Cubic::new(TRUTH);
        let n = 20_000;
        let h = r.width() / n as f64;
        // composite midpoint rule
        let quad: f64 = (0..n)
            .map(|i| truth.kappa(r.theta_min + (i as f64 + 0.5) * h))
            .sum::<f64>()
            * h
            / r.width();
        assert_relative_eq!(truth.average_over(r), quad, epsilon = 1e-8);
    }

    #[test]
    fn json_tags() {
        let m = ConductivityModel::cubic(TRUTH);
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"cubic_coeffs\""), "{s}");
        let back: ConductivityModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let p: ConductivityModel =
            serde_json::from_str(r#"{"kind":"piecewise","theta_grid":[1,2],"kappa_values":[3,4]}"#)
                .unwrap();
        assert_eq!(p.evaluate(1.5), 3.5);
    }

    #[test]
    fn cubic_values_must_be_equally_spaced() {
        let m = ConductivityModel::CubicByValues(CubicNodes {
            theta_nodes: [1.0, 2.0, 3.5, 4.0],
            kappa_nodes: [1.0; 4],
        });
        assert!(m.validate().is_err());
    }

    proptest! {
        #[test]
        fn positivity_agrees_with_dense_grid(
            c in prop::array::uniform4(-5.0f64..5.0),
            lo in 0.5f64..2.0,
            w in 0.5f64..4.0,
        ) {
            let r = range(lo, lo + w);
            let cubic = Cubic::new(c);
            let min = r.linspace(10_000).into_iter().map(|t| cubic.kappa(t)).fold(f64::INFINITY, f64::min);
            let fast = cubic_is_positive_on(c, r);
            if min.abs() > 1e-6 {
                prop_assert_eq!(fast, min > 0.0);
            }
        }

        #[test]
        fn vandermonde_round_trip(
            lo in 0.5f64..2.0,
            w in 0.5f64..4.0,
            k in prop::array::uniform4(0.1f64..10.0),
        ) {
            let nodes = CubicNodes::on_range(range(lo, lo + w), k);
            let c = nodes.to_cubic().unwrap();
            for (t, kv) in nodes.theta_nodes.iter().zip(k) {
                prop_assert!((c.kappa(*t) - kv).abs() < 1e-10);
            }
        }

        #[test]
        fn piecewise_stays_between_bracketing_knots(
            v in prop::collection::vec(0.1f64..10.0, 2..20),
            u in 0.0f64..1.0,
        ) {
            let n = v.len();
            let g: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.3).collect();
            let p = PiecewiseLinear::new(g.clone(), v.clone()).unwrap();
            let t = g[0] + u * (g[n - 1] - g[0]);
            let hi = g.partition_point(|&x| x <= t).min(n - 1).max(1);
            let (a, b) = (v[hi - 1], v[hi]);
            let k = p.kappa(t);
            prop_assert!(k >= a.min(b) - 1e-12 && k <= a.max(b) + 1e-12);
        }
    }
}

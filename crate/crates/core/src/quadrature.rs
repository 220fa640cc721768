//! Adaptive Gauss-Legendre quadrature over a breakpoint-aware panel mesh.
//!
//! Integrands here are smooth on each open panel once the panel list
//! contains every network breakpoint and declared coefficient kink, so a
//! fixed-order rule plus bisection-based acceptance resolves everything,
//! including interior layers far narrower than the mesh. Dirac terms are
//! never integrated numerically; assembly collapses them to point values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Network;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError<T> {
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: T },
    #[error("panel list must contain at least two points")]
    TooFewPanels,
    #[error("panel list must be sorted strictly ascending")]
    UnsortedPanels,
}

/// Quadrature configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec<T> {
    /// Gauss-Legendre nodes per panel.
    pub base_order: usize,
    /// A panel is accepted when its bisected estimate agrees to this
    /// relative tolerance.
    pub rel_tol: T,
    /// Bisection depth cap per panel.
    pub max_depth: usize,
}

impl<T: Scalar> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self { base_order: 5, rel_tol: cast(1e-10), max_depth: 30 }
    }
}

/// Integral value plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    /// Panels where the depth cap was reached before the tolerance.
    pub depth_exhausted: Vec<(T, T)>,
}

impl<T> Integral<T> {
    pub fn converged(&self) -> bool {
        self.depth_exhausted.is_empty()
    }
}

/// Vector-valued variant used by assembly: all components share one panel
/// refinement and every component must pass the acceptance test.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralVec<T> {
    pub values: Vec<T>,
    pub depth_exhausted: Vec<(T, T)>,
}

/// Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are computed in `f64` by Newton iteration on the Legendre
/// polynomial and mirrored for exact symmetry, then cast to `T`.
#[derive(Debug, Clone)]
pub struct GaussRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> GaussRule<T> {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss rule needs at least one node");
        let n = order;
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x.abs();
            nodes[n - 1 - i] = x.abs();
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self {
            nodes: nodes.into_iter().map(cast).collect(),
            weights: weights.into_iter().map(cast).collect(),
        }
    }

    /// Applies the rule to `f` on `[a, b]`.
    pub fn integrate(&self, f: &mut impl FnMut(T) -> T, a: T, b: T) -> T {
        let half = cast::<T>(0.5);
        let mid = (a + b) * half;
        let rad = (b - a) * half;
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + w * f(mid + rad * x);
        }
        acc * rad
    }

    fn integrate_vec(
        &self,
        f: &mut impl FnMut(T, &mut [T]),
        a: T,
        b: T,
        out: &mut [T],
        scratch: &mut [T],
    ) -> Result<(), QuadratureError<T>> {
        let half = cast::<T>(0.5);
        let mid = (a + b) * half;
        let rad = (b - a) * half;
        for v in out.iter_mut() {
            *v = T::zero();
        }
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let xx = mid + rad * x;
            f(xx, scratch);
            for (o, &s) in out.iter_mut().zip(scratch.iter()) {
                if !s.is_finite() {
                    return Err(QuadratureError::NonFinite { x: xx });
                }
                *o = *o + w * s;
            }
        }
        for v in out.iter_mut() {
            *v = *v * rad;
        }
        Ok(())
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn check_panels<T: Scalar>(panels: &[T]) -> Result<(), QuadratureError<T>> {
    if panels.len() < 2 {
        return Err(QuadratureError::TooFewPanels);
    }
    if panels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(QuadratureError::UnsortedPanels);
    }
    Ok(())
}

/// Deterministic pairwise tree reduction; summation order is independent of
/// how the panel work was scheduled.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        len => {
            let mid = len / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Integrates `f` over the panel decomposition with per-panel adaptive
/// bisection. Panels that hit the depth cap are reported, not fatal.
pub fn integrate<T: Scalar>(
    mut f: impl FnMut(T) -> T,
    panels: &[T],
    spec: &QuadratureSpec<T>,
) -> Result<Integral<T>, QuadratureError<T>> {
    let mut wrapped = |x: T, out: &mut [T]| out[0] = f(x);
    let v = integrate_vec(&mut wrapped, 1, panels, spec)?;
    Ok(Integral { value: v.values[0], depth_exhausted: v.depth_exhausted })
}

/// Vector-valued adaptive integration; see [`integrate`].
pub fn integrate_vec<T: Scalar>(
    f: &mut impl FnMut(T, &mut [T]),
    dim: usize,
    panels: &[T],
    spec: &QuadratureSpec<T>,
) -> Result<IntegralVec<T>, QuadratureError<T>> {
    check_panels(panels)?;
    let rule = GaussRule::new(spec.base_order.max(2));
    let mut scratch = vec![T::zero(); dim];
    let mut per_panel: Vec<Vec<T>> = Vec::with_capacity(panels.len() - 1);
    let mut warnings = Vec::new();
    for w in panels.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut whole = vec![T::zero(); dim];
        rule.integrate_vec(f, a, b, &mut whole, &mut scratch)?;
        let value = refine(f, &rule, spec, a, b, whole, 0, &mut scratch, &mut warnings)?;
        per_panel.push(value);
    }
    let values = (0..dim)
        .map(|k| {
            let comp: Vec<T> = per_panel.iter().map(|v| v[k]).collect();
            pairwise_sum(&comp)
        })
        .collect();
    Ok(IntegralVec { values, depth_exhausted: warnings })
}

#[allow(clippy::too_many_arguments)]
fn refine<T: Scalar>(
    f: &mut impl FnMut(T, &mut [T]),
    rule: &GaussRule<T>,
    spec: &QuadratureSpec<T>,
    a: T,
    b: T,
    whole: Vec<T>,
    depth: usize,
    scratch: &mut [T],
    warnings: &mut Vec<(T, T)>,
) -> Result<Vec<T>, QuadratureError<T>> {
    let dim = whole.len();
    let mid = (a + b) * cast::<T>(0.5);
    let mut left = vec![T::zero(); dim];
    let mut right = vec![T::zero(); dim];
    rule.integrate_vec(f, a, mid, &mut left, scratch)?;
    rule.integrate_vec(f, mid, b, &mut right, scratch)?;
    let floor = cast::<T>(1e-300);
    let accepted = (0..dim).all(|k| {
        let refined = left[k] + right[k];
        (refined - whole[k]).abs() <= spec.rel_tol * (refined.abs() + floor)
    });
    if accepted {
        return Ok((0..dim).map(|k| left[k] + right[k]).collect());
    }
    if depth + 1 >= spec.max_depth {
        warnings.push((a, b));
        return Ok((0..dim).map(|k| left[k] + right[k]).collect());
    }
    let lv = refine(f, rule, spec, a, mid, left, depth + 1, scratch, warnings)?;
    let rv = refine(f, rule, spec, mid, b, right, depth + 1, scratch, warnings)?;
    Ok((0..dim).map(|k| lv[k] + rv[k]).collect())
}

/// Sorted union of interval endpoints, network breakpoints, and declared
/// coefficient kinks, deduplicated at half the mesh floor. Points outside
/// the interval closure are dropped: they create no kink inside the domain.
pub fn merged_panels<T: Scalar>(net: &Network<T>, extra_kinks: &[T]) -> Vec<T> {
    let iv = net.interval();
    let tol = net.h_floor() * cast::<T>(0.5);
    let mut interior: Vec<T> = net
        .b()
        .iter()
        .chain(extra_kinks)
        .copied()
        .filter(|&x| x > iv.left() + tol && x < iv.right() - tol)
        .collect();
    interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut panels = vec![iv.left()];
    for x in interior {
        if x - *panels.last().unwrap() >= tol {
            panels.push(x);
        }
    }
    panels.push(iv.right());
    panels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Interval;
    use approx::assert_relative_eq;

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    #[test]
    fn polynomial_exactness_up_to_rule_degree() {
        for order in 2..=6usize {
            let rule = GaussRule::<f64>::new(order);
            for deg in 0..=(2 * order - 1) {
                let exact = 1.0 / (deg as f64 + 1.0);
                let got = rule.integrate(&mut |x: f64| x.powi(deg as i32), 0.0, 1.0);
                assert_relative_eq!(got, exact, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn integrates_square_to_machine_precision() {
        let r = integrate(|x: f64| x * x, &[0.0, 1.0], &spec()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn resolves_sharp_interior_layer() {
        let r = integrate(
            |x: f64| {
                let t = (x - 0.5) / 0.001;
                1.0 / t.cosh().powi(2)
            },
            &[0.0, 1.0],
            &spec(),
        )
        .unwrap();
        let exact = 0.002 * (500.0f64).tanh();
        assert!(r.converged());
        assert!((r.value - exact).abs() <= 1e-12);
    }

    #[test]
    fn heaviside_exact_when_panels_split_at_jump() {
        let r = integrate(
            |x: f64| if x > 0.5 { 1.0 } else { 0.0 },
            &[0.0, 0.5, 1.0],
            &spec(),
        )
        .unwrap();
        assert_eq!(r.value, 0.5);
        assert!(r.converged());
    }

    #[test]
    fn additivity_of_panel_splits() {
        let f = |x: f64| (3.0 * x).sin() * (-x).exp();
        let whole = integrate(f, &[0.0, 1.0], &spec()).unwrap().value;
        let split = integrate(f, &[0.0, 0.37, 1.0], &spec()).unwrap().value;
        assert!((whole - split).abs() <= 2.0 * 1e-10 * whole.abs().max(1.0));
    }

    #[test]
    fn layer_integral_matches_trapezoid_oracle() {
        // Brute-force oracle: 1e7-point trapezoid rule.
        let f = |x: f64| {
            let t = (x * x - 0.25) / 1e-3;
            1.0 / t.cosh().powi(2)
        };
        let m = 10_000_000usize;
        let h = 2.0 / m as f64;
        let mut acc = 0.5 * (f(-1.0) + f(1.0));
        for i in 1..m {
            acc += f(-1.0 + i as f64 * h);
        }
        let oracle = acc * h;
        let r = integrate(f, &[-1.0, -0.5, 0.5, 1.0], &spec()).unwrap();
        assert!(r.converged());
        assert_relative_eq!(r.value, oracle, max_relative = 1e-8);
    }

    #[test]
    fn depth_exhaustion_is_reported_not_fatal() {
        let tight = QuadratureSpec { base_order: 5, rel_tol: 1e-10, max_depth: 6 };
        let r = integrate(
            |x: f64| if x > 1.0 / 3.0 { 1.0 } else { 0.0 },
            &[0.0, 1.0],
            &tight,
        )
        .unwrap();
        assert!(!r.converged());
        assert!((r.value - 2.0 / 3.0).abs() < 1e-1);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let r = integrate(|x: f64| 1.0 / x, &[-1.0, 1.0], &spec());
        assert!(matches!(r, Err(QuadratureError::NonFinite { .. })));
    }

    #[test]
    fn merged_panels_unions_and_dedups() {
        let iv = Interval::new(0.0, 1.0).unwrap();
        let net = Network::new(iv, 0.0, vec![0.0; 3], vec![0.3, 0.7]).unwrap();
        assert_eq!(merged_panels(&net, &[0.5]), vec![0.0, 0.3, 0.5, 0.7, 1.0]);

        let net1 = Network::new(iv, 0.0, vec![0.0; 2], vec![0.5]).unwrap();
        assert_eq!(merged_panels(&net1, &[0.5]), vec![0.0, 0.5, 1.0]);

        let wide = Interval::new(-1.0, 1.0).unwrap();
        let net2 = Network::new(wide, 0.0, vec![0.0], vec![]).unwrap();
        assert_eq!(merged_panels(&net2, &[]), vec![-1.0, 1.0]);
    }

    #[test]
    fn pairwise_sum_matches_sequential() {
        let vals: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let seq: f64 = vals.iter().sum();
        assert_relative_eq!(pairwise_sum(&vals), seq, epsilon = 1e-12);
    }
}

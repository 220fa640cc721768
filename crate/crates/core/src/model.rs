//! Free-knot piecewise-linear model functions.
//!
//! A network is `u(x) = alpha + sum_i c_i * relu(x - b_i)` over an interval
//! `[left, right]`, with the convention that `b_0 = left` is implicit (so `c`
//! has one more entry than `b`) and the stored breakpoints `b_1 < ... < b_n`
//! are the free knots. Derivatives use the midpoint convention `H(0) = 1/2`
//! at a knot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("interval must satisfy left < right")]
    BadInterval,
    #[error("c must have exactly one more entry than b (got {c_len} vs {b_len})")]
    LengthMismatch { c_len: usize, b_len: usize },
    #[error("non-finite parameter value")]
    NonFinite,
}

/// Closed interval `[left, right]` with `left < right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    left: T,
    right: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(left: T, right: T) -> Result<Self, ModelError> {
        if !(left.is_finite() && right.is_finite() && left < right) {
            return Err(ModelError::BadInterval);
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> T {
        self.left
    }

    pub fn right(&self) -> T {
        self.right
    }

    pub fn length(&self) -> T {
        self.right - self.left
    }

    pub fn contains_closed(&self, x: T) -> bool {
        x >= self.left && x <= self.right
    }

    pub fn contains_open(&self, x: T) -> bool {
        x > self.left && x < self.right
    }
}

/// Gap structure of the breakpoint mesh.
///
/// `h[i] = b_{i+1} - b_i` for the augmented mesh (`b_0 = left`,
/// `b_{n+1} = right`), `h_tilde[i] = min(h[i], h[i+1])` per interior knot,
/// and `d[i] = right - b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshQuantities<T> {
    pub h: Vec<T>,
    pub h_min: T,
    pub h_tilde: Vec<T>,
    pub d: Vec<T>,
}

/// Shallow ReLU network / free-knot piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    interval: Interval<T>,
    alpha: T,
    c: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> Network<T> {
    /// Canonicalizing constructor: sorts breakpoints (carrying their paired
    /// coefficients, `c[0]` stays attached to the left endpoint), nudges
    /// collisions apart by the mesh floor, and rejects non-finite input.
    /// Breakpoints outside the open interval are retained; classification
    /// flags them later.
    pub fn new(interval: Interval<T>, alpha: T, c: Vec<T>, b: Vec<T>) -> Result<Self, ModelError> {
        Self::with_h_floor(interval, alpha, c, b, Self::default_h_floor(&interval))
    }

    /// Same as [`Network::new`] with an explicit collision floor.
    pub fn with_h_floor(
        interval: Interval<T>,
        alpha: T,
        c: Vec<T>,
        mut b: Vec<T>,
        h_floor: T,
    ) -> Result<Self, ModelError> {
        if c.len() != b.len() + 1 {
            return Err(ModelError::LengthMismatch { c_len: c.len(), b_len: b.len() });
        }
        if !alpha.is_finite()
            || c.iter().any(|v| !v.is_finite())
            || b.iter().any(|v| !v.is_finite())
        {
            return Err(ModelError::NonFinite);
        }
        let mut c = c;
        let n = b.len();
        if n > 0 {
            let mut pairs: Vec<(T, T)> = b.iter().copied().zip(c[1..].iter().copied()).collect();
            pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            for (i, (bi, ci)) in pairs.into_iter().enumerate() {
                b[i] = bi;
                c[i + 1] = ci;
            }
            for i in 0..n - 1 {
                if b[i + 1] - b[i] < h_floor {
                    b[i + 1] = b[i] + h_floor;
                }
            }
        }
        Ok(Self { interval, alpha, c, b })
    }

    /// Default minimum gap between breakpoints.
    pub fn default_h_floor(interval: &Interval<T>) -> T {
        cast::<T>(1e-12) * interval.length()
    }

    pub fn h_floor(&self) -> T {
        Self::default_h_floor(&self.interval)
    }

    /// Number of free breakpoints.
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// `alpha + sum_i c_i * relu(x - b_i)` with `b_0 = left`.
    pub fn evaluate(&self, x: T) -> T {
        let mut acc = self.alpha + self.c[0] * (x - self.interval.left).max(T::zero());
        for (ci, bi) in self.c[1..].iter().zip(&self.b) {
            acc = acc + *ci * (x - *bi).max(T::zero());
        }
        acc
    }

    /// One-sided slope `sum_i c_i * H(x - b_i)` with `H(0) = 1/2`.
    pub fn derivative(&self, x: T) -> T {
        let half = cast::<T>(0.5);
        let step = |t: T| {
            if t > T::zero() {
                T::one()
            } else if t == T::zero() {
                half
            } else {
                T::zero()
            }
        };
        let mut acc = self.c[0] * step(x - self.interval.left);
        for (ci, bi) in self.c[1..].iter().zip(&self.b) {
            acc = acc + *ci * step(x - *bi);
        }
        acc
    }

    /// Midpoint slope at breakpoint `j` (0-based into `b`):
    /// `c_0 + ... + c_j + c_{j+1}/2` in stored coefficients.
    pub fn midpoint_slope(&self, j: usize) -> T {
        let mut s = T::zero();
        for i in 0..=j {
            s = s + self.c[i];
        }
        s + self.c[j + 1] * cast::<T>(0.5)
    }

    /// Slope on each mesh cell: entry `k` is the slope on `(b_k, b_{k+1})`
    /// of the augmented mesh, i.e. the prefix sum `c_0 + ... + c_k`.
    pub fn cell_slopes(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.c.len());
        let mut acc = T::zero();
        for &ci in &self.c {
            acc = acc + ci;
            out.push(acc);
        }
        out
    }

    pub fn mesh_quantities(&self) -> MeshQuantities<T> {
        let n = self.n();
        let mut h = Vec::with_capacity(n + 1);
        let mut prev = self.interval.left;
        for &bi in &self.b {
            h.push(bi - prev);
            prev = bi;
        }
        h.push(self.interval.right - prev);
        let h_min = h.iter().copied().fold(h[0], T::min);
        let h_tilde = (0..n).map(|i| h[i].min(h[i + 1])).collect();
        let d = self.b.iter().map(|&bi| self.interval.right - bi).collect();
        MeshQuantities { h, h_min, h_tilde, d }
    }

    /// Lossless JSON form: `{"interval":[l,r],"alpha":a,"c":[...],"b":[...]}`.
    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(&NetworkRepr {
            interval: [self.interval.left, self.interval.right],
            alpha: self.alpha,
            c: self.c.clone(),
            b: self.b.clone(),
        })
        .expect("network serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, String>
    where
        T: for<'de> Deserialize<'de>,
    {
        let repr: NetworkRepr<T> = serde_json::from_str(json).map_err(|e| e.to_string())?;
        let interval = Interval::new(repr.interval[0], repr.interval[1]).map_err(|e| e.to_string())?;
        Network::new(interval, repr.alpha, repr.c, repr.b).map_err(|e| e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr<T> {
    interval: [T; 2],
    alpha: T,
    c: Vec<T>,
    b: Vec<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> Interval<f64> {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn net(alpha: f64, c: Vec<f64>, b: Vec<f64>, iv: Interval<f64>) -> Network<f64> {
        Network::new(iv, alpha, c, b).unwrap()
    }

    #[test]
    fn evaluate_matches_closed_forms() {
        let n0 = net(1.0, vec![2.0], vec![], unit());
        assert_eq!(n0.evaluate(0.5), 2.0);

        let n1 = net(0.0, vec![1.0, -2.0], vec![0.5], unit());
        assert_eq!(n1.evaluate(0.75), 0.25);
        assert_eq!(n1.evaluate(0.25), 0.25);
    }

    #[test]
    fn derivative_uses_midpoint_convention() {
        let n1 = net(0.0, vec![1.0, -2.0], vec![0.5], unit());
        assert_eq!(n1.derivative(0.25), 1.0);
        assert_eq!(n1.derivative(0.5), 0.0);
        assert_eq!(n1.derivative(0.75), -1.0);
        assert_eq!(n1.midpoint_slope(0), 0.0);
    }

    #[test]
    fn mesh_quantities_match_definitions() {
        let m = net(0.0, vec![0.0; 3], vec![0.2, 0.5], unit()).mesh_quantities();
        assert_eq!(m.h, vec![0.2, 0.3, 0.5]);
        assert_eq!(m.h_min, 0.2);
        assert_eq!(m.h_tilde, vec![0.2, 0.3]);
        assert_eq!(m.d, vec![0.8, 0.5]);

        let m0 = net(0.0, vec![1.0], vec![], unit()).mesh_quantities();
        assert_eq!(m0.h, vec![1.0]);
        assert_eq!(m0.h_min, 1.0);
        assert!(m0.h_tilde.is_empty());
        assert!(m0.d.is_empty());

        let wide = Interval::new(-1.0, 1.0).unwrap();
        let m1 = net(0.0, vec![0.0; 2], vec![0.5], wide).mesh_quantities();
        assert_eq!(m1.h, vec![1.5, 0.5]);
        assert_eq!(m1.h_min, 0.5);
        assert_eq!(m1.h_tilde, vec![0.5]);
        assert_eq!(m1.d, vec![0.5]);
    }

    #[test]
    fn canonicalize_sorts_with_paired_coefficients() {
        let n = net(0.0, vec![1.0, 2.0, 3.0], vec![0.7, 0.3], unit());
        assert_eq!(n.b(), &[0.3, 0.7]);
        assert_eq!(n.c(), &[1.0, 3.0, 2.0]);
    }

    #[test]
    fn canonicalize_nudges_collisions() {
        let n = net(0.0, vec![1.0, 2.0, 3.0], vec![0.5, 0.5], unit());
        assert_eq!(n.b()[0], 0.5);
        assert_eq!(n.b()[1], 0.5 + 1e-12);
    }

    #[test]
    fn canonicalize_keeps_already_canonical() {
        let n = net(0.0, vec![1.0, 2.0], vec![0.4], unit());
        assert_eq!(n.b(), &[0.4]);
        assert_eq!(n.c(), &[1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Network::new(unit(), f64::NAN, vec![1.0], vec![]).is_err());
        assert!(Network::new(unit(), 0.0, vec![1.0, 2.0], vec![]).is_err());
        assert!(Interval::new(1.0, 1.0).is_err());
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let n = net(0.1234567890123456, vec![1.0 / 3.0, -2.0 / 7.0], vec![0.123456789012345], unit());
        let back = Network::<f64>::from_json(&n.to_json()).unwrap();
        assert_eq!(n, back);
    }

    #[test]
    fn evaluate_agrees_with_hat_interpolant_reconstruction() {
        // Independent reconstruction: nodal values + linear interpolation.
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let n = net(0.3, vec![0.7, -1.4, 2.2, -0.5], vec![-0.4, 0.1, 0.6], iv);
        let mut nodes = vec![iv.left()];
        nodes.extend_from_slice(n.b());
        nodes.push(iv.right());
        let values: Vec<f64> = nodes.iter().map(|&x| n.evaluate(x)).collect();
        for k in 0..1000 {
            let x = -1.0 + 2.0 * (k as f64 + 0.5) / 1000.0;
            let cell = nodes.windows(2).position(|w| x >= w[0] && x <= w[1]).unwrap();
            let t = (x - nodes[cell]) / (nodes[cell + 1] - nodes[cell]);
            let interp = values[cell] * (1.0 - t) + values[cell + 1] * t;
            let scale = 1.0 + interp.abs();
            assert!((n.evaluate(x) - interp).abs() <= 1e-12 * scale);
        }
    }

    proptest! {
        #[test]
        fn evaluate_is_lipschitz(
            alpha in -2.0f64..2.0,
            c in proptest::collection::vec(-3.0f64..3.0, 1..6),
            xs in proptest::collection::vec(0.0f64..1.0, 2),
        ) {
            let nb = c.len() - 1;
            let b: Vec<f64> = (1..=nb).map(|i| i as f64 / (nb as f64 + 1.0)).collect();
            let n = Network::new(unit(), alpha, c.clone(), b).unwrap();
            let lip: f64 = c.iter().map(|v| v.abs()).sum();
            let (x, y) = (xs[0], xs[1]);
            prop_assert!((n.evaluate(x) - n.evaluate(y)).abs() <= lip * (x - y).abs() + 1e-12);
        }

        #[test]
        fn derivative_jump_equals_coefficient(
            c in proptest::collection::vec(-3.0f64..3.0, 2..6),
        ) {
            let nb = c.len() - 1;
            let b: Vec<f64> = (1..=nb).map(|i| i as f64 / (nb as f64 + 1.0)).collect();
            let n = Network::new(unit(), 0.0, c.clone(), b.clone()).unwrap();
            let eps = 1e-3 / (nb as f64 + 1.0);
            for (j, &bj) in b.iter().enumerate() {
                let jump = n.derivative(bj + eps) - n.derivative(bj - eps);
                prop_assert!((jump - c[j + 1]).abs() < 1e-12);
                // Value at the breakpoint is the mean of the one-sided slopes.
                let mean = 0.5 * (n.derivative(bj + eps) + n.derivative(bj - eps));
                prop_assert!((n.derivative(bj) - mean).abs() < 1e-12);
            }
        }

        #[test]
        fn canonicalize_is_idempotent(
            c in proptest::collection::vec(-3.0f64..3.0, 1..7),
            raw_b in proptest::collection::vec(0.0f64..1.0, 0..6),
        ) {
            let mut c = c;
            c.truncate(raw_b.len() + 1);
            while c.len() < raw_b.len() + 1 {
                c.push(0.5);
            }
            let once = Network::new(unit(), 0.0, c, raw_b).unwrap();
            let twice = Network::new(unit(), 0.0, once.c().to_vec(), once.b().to_vec()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}

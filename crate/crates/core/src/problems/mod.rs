//! Problem definitions: weighted least-squares fitting and the
//! diffusion-reaction boundary-value problem, coefficient functions with
//! declared smoothness breaks, the built-in experiment catalog, and the
//! JSON problem-config schema.

pub mod expr;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Interval;
use crate::scalar::{cast, Scalar};
use expr::{Expr, ParseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("{name} violates its declared bound at x = {x} (value {value}, bound {bound})")]
    BoundViolation { name: &'static str, x: f64, value: f64, bound: f64 },
    #[error("{name} is not finite at x = {x}")]
    NonFinite { name: &'static str, x: f64 },
    #[error("gamma must be non-negative")]
    NegativeGamma,
    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),
    #[error("missing catalog parameter `{0}`")]
    MissingParam(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("problem has no exact solution")]
    MissingExact,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid interval")]
    BadInterval,
}

type ValueFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// A coefficient function: a value map, an optional derivative map, and the
/// sorted interior points where the derivative does not exist.
#[derive(Clone)]
pub struct CoefficientFunction<T> {
    value: ValueFn<T>,
    derivative: Option<ValueFn<T>>,
    kinks: Vec<T>,
}

impl<T: Scalar> fmt::Debug for CoefficientFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFunction")
            .field("derivative", &self.derivative.is_some())
            .field("kinks", &self.kinks)
            .finish()
    }
}

impl<T: Scalar> CoefficientFunction<T> {
    pub fn from_fns(
        value: impl Fn(T) -> T + Send + Sync + 'static,
        derivative: Option<ValueFn<T>>,
        mut kinks: Vec<T>,
    ) -> Self {
        kinks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { value: Arc::new(value), derivative, kinks }
    }

    pub fn constant(v: T) -> Self {
        Self {
            value: Arc::new(move |_| v),
            derivative: Some(Arc::new(|_| T::zero())),
            kinks: Vec::new(),
        }
    }

    pub fn from_expr(value: &Expr, derivative: Option<&Expr>, kinks: Vec<T>) -> Self {
        let v = value.clone();
        let d = derivative.cloned();
        Self::from_fns(
            move |x| v.eval_lossy(x),
            d.map(|d| -> ValueFn<T> { Arc::new(move |x| d.eval_lossy(x)) }),
            kinks,
        )
    }

    pub fn eval(&self, x: T) -> T {
        (self.value)(x)
    }

    /// Derivative at `x`, or `None` when no derivative map was supplied or
    /// `x` sits within `kink_tol` of a declared kink.
    pub fn derivative_at(&self, x: T, kink_tol: T) -> Option<T> {
        let d = self.derivative.as_ref()?;
        if self.kinks.iter().any(|&k| (x - k).abs() <= kink_tol) {
            return None;
        }
        Some(d(x))
    }

    pub fn kinks(&self) -> &[T] {
        &self.kinks
    }

    pub fn has_derivative_map(&self) -> bool {
        self.derivative.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "ls")]
    LeastSquares,
    #[serde(rename = "dr")]
    DiffusionReaction,
}

/// A fitting target: either weighted least squares against `target_u`, or
/// the Ritz functional of `-(a u')' + r u = f` with Dirichlet data imposed
/// via the fixed offset (left) and a quadratic penalty (right).
#[derive(Debug, Clone)]
pub struct Problem<T> {
    kind: ProblemKind,
    interval: Interval<T>,
    a: Option<CoefficientFunction<T>>,
    r: CoefficientFunction<T>,
    f: Option<CoefficientFunction<T>>,
    target_u: Option<CoefficientFunction<T>>,
    left_value: T,
    right_value: T,
    gamma: T,
    mu: T,
    r0: T,
}

const SAMPLE_GRID: usize = 10_000;

impl<T: Scalar> Problem<T> {
    pub fn least_squares(
        interval: Interval<T>,
        r: CoefficientFunction<T>,
        target_u: CoefficientFunction<T>,
        left_value: T,
        r0: T,
    ) -> Result<Self, ProblemError> {
        let p = Self {
            kind: ProblemKind::LeastSquares,
            interval,
            a: None,
            r,
            f: None,
            target_u: Some(target_u),
            left_value,
            right_value: T::zero(),
            gamma: T::zero(),
            mu: T::zero(),
            r0,
        };
        p.validate()?;
        Ok(p)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn diffusion_reaction(
        interval: Interval<T>,
        a: CoefficientFunction<T>,
        r: CoefficientFunction<T>,
        f: CoefficientFunction<T>,
        target_u: Option<CoefficientFunction<T>>,
        left_value: T,
        right_value: T,
        gamma: T,
        mu: T,
        r0: T,
    ) -> Result<Self, ProblemError> {
        let p = Self {
            kind: ProblemKind::DiffusionReaction,
            interval,
            a: Some(a),
            r,
            f: Some(f),
            target_u,
            left_value,
            right_value,
            gamma,
            mu,
            r0,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), ProblemError> {
        let l = self.interval.left();
        let len = self.interval.length();
        let to64 = |v: T| v.to_f64().unwrap_or(f64::NAN);
        for i in 0..=SAMPLE_GRID {
            let x = l + len * cast::<T>(i as f64 / SAMPLE_GRID as f64);
            let rv = self.r.eval(x);
            if !rv.is_finite() {
                return Err(ProblemError::NonFinite { name: "r", x: to64(x) });
            }
            if rv < self.r0 {
                return Err(ProblemError::BoundViolation {
                    name: "r",
                    x: to64(x),
                    value: to64(rv),
                    bound: to64(self.r0),
                });
            }
            if let Some(a) = &self.a {
                let av = a.eval(x);
                if !av.is_finite() {
                    return Err(ProblemError::NonFinite { name: "a", x: to64(x) });
                }
                if av < self.mu {
                    return Err(ProblemError::BoundViolation {
                        name: "a",
                        x: to64(x),
                        value: to64(av),
                        bound: to64(self.mu),
                    });
                }
            }
        }
        match self.kind {
            ProblemKind::LeastSquares => {
                if self.target_u.is_none() {
                    return Err(ProblemError::MissingField("u"));
                }
                if !(self.r0 > T::zero()) {
                    return Err(ProblemError::BoundViolation {
                        name: "r0",
                        x: f64::NAN,
                        value: to64(self.r0),
                        bound: 0.0,
                    });
                }
            }
            ProblemKind::DiffusionReaction => {
                if self.f.is_none() {
                    return Err(ProblemError::MissingField("f"));
                }
                if !(self.mu > T::zero()) {
                    return Err(ProblemError::BoundViolation {
                        name: "mu",
                        x: f64::NAN,
                        value: to64(self.mu),
                        bound: 0.0,
                    });
                }
                if self.r0 < T::zero() {
                    return Err(ProblemError::BoundViolation {
                        name: "r0",
                        x: f64::NAN,
                        value: to64(self.r0),
                        bound: 0.0,
                    });
                }
                if self.gamma < T::zero() {
                    return Err(ProblemError::NegativeGamma);
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    pub fn a(&self) -> Option<&CoefficientFunction<T>> {
        self.a.as_ref()
    }

    pub fn r(&self) -> &CoefficientFunction<T> {
        &self.r
    }

    pub fn f(&self) -> Option<&CoefficientFunction<T>> {
        self.f.as_ref()
    }

    pub fn target(&self) -> Option<&CoefficientFunction<T>> {
        self.target_u.as_ref()
    }

    pub fn left_value(&self) -> T {
        self.left_value
    }

    pub fn right_value(&self) -> T {
        self.right_value
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn r0(&self) -> T {
        self.r0
    }

    /// The fixed network offset: the prescribed value at the left endpoint.
    pub fn alpha(&self) -> T {
        self.left_value
    }

    /// Union of all declared coefficient kinks, for panel splitting.
    pub fn coefficient_kinks(&self) -> Vec<T> {
        let mut out: Vec<T> = Vec::new();
        for cf in [self.a.as_ref(), Some(&self.r), self.f.as_ref(), self.target_u.as_ref()]
            .into_iter()
            .flatten()
        {
            out.extend_from_slice(cf.kinks());
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    /// Default right-boundary penalty weight for a network with `n` breakpoints.
    pub fn default_gamma(n: usize) -> T {
        cast::<T>(1e4) * cast::<T>(1.0 + n as f64)
    }

    /// Builds a catalog problem. Known names: `sp_reaction_diffusion`
    /// (param `nu`, optional `gamma`/`n`), `ls_xalpha` (param `alpha_exp`),
    /// `ls_expr` and `dr_expr` (expression-string params).
    pub fn catalog(name: &str, params: &BTreeMap<String, ParamValue>) -> Result<Self, ProblemError> {
        match name {
            "sp_reaction_diffusion" => catalog_sp_reaction_diffusion(params),
            "ls_xalpha" => catalog_ls_xalpha(params),
            "ls_expr" | "dr_expr" => catalog_expr(name, params),
            other => Err(ProblemError::UnknownCatalog(other.to_string())),
        }
    }

    /// Self-test of catalog entries: max grid residual of the strong form
    /// `-(a u')' + r u - f` evaluated by central finite differences of the
    /// exact solution. Points within two grid steps of a declared kink are
    /// skipped.
    pub fn residual_check(&self, grid_size: usize) -> Result<T, ProblemError> {
        if self.kind != ProblemKind::DiffusionReaction {
            return Err(ProblemError::MissingExact);
        }
        let u = self.target_u.as_ref().ok_or(ProblemError::MissingExact)?;
        let a = self.a.as_ref().expect("DR problem has a");
        let f = self.f.as_ref().expect("DR problem has f");
        let l = self.interval.left();
        let h = self.interval.length() / cast::<T>(grid_size as f64 + 1.0);
        let two = cast::<T>(2.0);
        let kinks = self.coefficient_kinks();
        let mut worst = T::zero();
        for i in 1..=grid_size {
            let x = l + h * cast::<T>(i as f64);
            if kinks.iter().any(|&k| (x - k).abs() <= two * h) {
                continue;
            }
            let up = (u.eval(x + h) - u.eval(x - h)) / (two * h);
            let upp = (u.eval(x + h) - two * u.eval(x) + u.eval(x - h)) / (h * h);
            let ap = a
                .derivative_at(x, T::zero())
                .unwrap_or_else(|| (a.eval(x + h) - a.eval(x - h)) / (two * h));
            let res = (-(ap * up + a.eval(x) * upp) + self.r.eval(x) * u.eval(x) - f.eval(x)).abs();
            worst = worst.max(res);
        }
        Ok(worst)
    }
}

/// Loosely-typed catalog parameter (numbers may arrive as strings).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Str(String),
}

impl ParamValue {
    fn as_num(&self) -> Option<f64> {
        match self {
            ParamValue::Num(v) => Some(*v),
            ParamValue::Str(s) => s.trim().parse().ok(),
        }
    }

    fn as_str(&self) -> String {
        match self {
            ParamValue::Num(v) => v.to_string(),
            ParamValue::Str(s) => s.clone(),
        }
    }
}

fn get_num(params: &BTreeMap<String, ParamValue>, key: &str) -> Result<Option<f64>, ProblemError> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => v
            .as_num()
            .map(Some)
            .ok_or_else(|| ProblemError::InvalidParam { name: key.into(), reason: "expected a number".into() }),
    }
}

fn require_num(params: &BTreeMap<String, ParamValue>, key: &str) -> Result<f64, ProblemError> {
    get_num(params, key)?.ok_or_else(|| ProblemError::MissingParam(key.into()))
}

fn catalog_sp_reaction_diffusion<T: Scalar>(
    params: &BTreeMap<String, ParamValue>,
) -> Result<Problem<T>, ProblemError> {
    let nu = require_num(params, "nu")?;
    if !(nu > 0.0) {
        return Err(ProblemError::InvalidParam { name: "nu".into(), reason: "nu must be positive".into() });
    }
    let n = get_num(params, "n")?.unwrap_or(0.0).max(0.0) as usize;
    let gamma = get_num(params, "gamma")?
        .map(cast::<T>)
        .unwrap_or_else(|| Problem::<T>::default_gamma(n));
    let eps = cast::<T>(nu.sqrt());
    let quarter = cast::<T>(0.25);
    let w = move |x: T| (x * x - quarter) / eps;
    let edge = (cast::<T>(0.75) / eps).tanh();
    let two = cast::<T>(2.0);
    let four = cast::<T>(4.0);

    let f = CoefficientFunction::from_fns(
        move |x: T| {
            let t = w(x).tanh();
            let sech = T::one() / w(x).cosh();
            -two * (eps - four * x * x * t) * sech * sech + t - edge
        },
        None,
        Vec::new(),
    );
    let u = CoefficientFunction::from_fns(
        move |x: T| w(x).tanh() - edge,
        Some(Arc::new(move |x: T| {
            let sech = T::one() / w(x).cosh();
            sech * sech * (two * x / eps)
        })),
        Vec::new(),
    );
    let iv = Interval::new(cast(-1.0), cast(1.0)).expect("static interval");
    Problem::diffusion_reaction(
        iv,
        CoefficientFunction::constant(cast(nu)),
        CoefficientFunction::constant(T::one()),
        f,
        Some(u),
        T::zero(),
        T::zero(),
        gamma,
        cast(nu),
        T::one(),
    )
}

fn catalog_ls_xalpha<T: Scalar>(
    params: &BTreeMap<String, ParamValue>,
) -> Result<Problem<T>, ProblemError> {
    let a_exp = require_num(params, "alpha_exp")?;
    if !(a_exp > 0.0 && a_exp < 1.0) {
        return Err(ProblemError::InvalidParam {
            name: "alpha_exp".into(),
            reason: "alpha_exp must lie in (0, 1)".into(),
        });
    }
    let ae = cast::<T>(a_exp);
    // Extended left of 0 by zero so the map stays total; the derivative is
    // declared kinked at 0.
    let u = CoefficientFunction::from_fns(
        move |x: T| x.max(T::zero()).powf(ae),
        Some(Arc::new(move |x: T| {
            if x > T::zero() {
                ae * x.powf(ae - T::one())
            } else {
                T::zero()
            }
        })),
        vec![T::zero()],
    );
    let iv = Interval::new(T::zero(), T::one()).expect("static interval");
    Problem::least_squares(iv, CoefficientFunction::constant(T::one()), u, T::zero(), T::one())
}

fn catalog_expr<T: Scalar>(
    name: &str,
    params: &BTreeMap<String, ParamValue>,
) -> Result<Problem<T>, ProblemError> {
    let kind = if name == "ls_expr" { "ls" } else { "dr" };
    let get_str = |key: &str| params.get(key).map(|v| v.as_str());
    let config = ProblemConfig {
        kind: Some(kind.to_string()),
        interval: Some([
            get_num(params, "left")?.unwrap_or(0.0),
            get_num(params, "right")?.unwrap_or(1.0),
        ]),
        a: get_str("a"),
        r: get_str("r"),
        f: get_str("f"),
        u: get_str("u"),
        a_prime: get_str("a_prime"),
        u_prime: get_str("u_prime"),
        left_value: get_num(params, "left_value")?,
        right_value: get_num(params, "right_value")?,
        gamma: get_num(params, "gamma")?,
        mu: get_num(params, "mu")?,
        r0: get_num(params, "r0")?,
        kinks: None,
        catalog: None,
    };
    config.build(get_num(params, "n")?.unwrap_or(0.0) as usize)
}

/// JSON problem-config block. A `catalog` key, when present, overrides the
/// expression keys.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_prime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_prime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinks: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<CatalogRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

impl ProblemConfig {
    /// Builds the problem. `n_hint` (the initial breakpoint count) feeds the
    /// default penalty weight `gamma = 1e4 * (1 + n)` when none is given.
    pub fn build<T: Scalar>(&self, n_hint: usize) -> Result<Problem<T>, ProblemError> {
        if let Some(cat) = &self.catalog {
            let mut params = cat.params.clone();
            if !params.contains_key("n") {
                params.insert("n".into(), ParamValue::Num(n_hint as f64));
            }
            return Problem::catalog(&cat.name, &params);
        }
        let kind = self.kind.as_deref().ok_or(ProblemError::MissingField("kind"))?;
        let [l, r] = self.interval.ok_or(ProblemError::MissingField("interval"))?;
        let interval = Interval::new(cast::<T>(l), cast::<T>(r)).map_err(|_| ProblemError::BadInterval)?;
        let kink_list = |key: &str| -> Vec<T> {
            self.kinks
                .as_ref()
                .and_then(|m| m.get(key))
                .map(|v| v.iter().map(|&x| cast(x)).collect())
                .unwrap_or_default()
        };
        let parse_cf = |src: &Option<String>,
                        dsrc: &Option<String>,
                        key: &str|
         -> Result<Option<CoefficientFunction<T>>, ProblemError> {
            let Some(src) = src else { return Ok(None) };
            let value = Expr::parse(src)?;
            let deriv = dsrc.as_ref().map(|s| Expr::parse(s)).transpose()?;
            Ok(Some(CoefficientFunction::from_expr(&value, deriv.as_ref(), kink_list(key))))
        };
        let r_cf = parse_cf(&self.r, &None, "r")?.ok_or(ProblemError::MissingField("r"))?;
        let u_cf = parse_cf(&self.u, &self.u_prime, "u")?;
        let sample_min = |cf: &CoefficientFunction<T>| -> T {
            let mut worst = cf.eval(interval.left());
            for i in 0..=SAMPLE_GRID {
                let x = interval.left()
                    + interval.length() * cast::<T>(i as f64 / SAMPLE_GRID as f64);
                worst = worst.min(cf.eval(x));
            }
            worst
        };
        let r0 = self.r0.map(cast::<T>).unwrap_or_else(|| sample_min(&r_cf));
        match kind {
            "ls" => {
                let u_cf = u_cf.ok_or(ProblemError::MissingField("u"))?;
                let left_value = self
                    .left_value
                    .map(cast::<T>)
                    .unwrap_or_else(|| u_cf.eval(interval.left()));
                Problem::least_squares(interval, r_cf, u_cf, left_value, r0)
            }
            "dr" => {
                let a_cf = parse_cf(&self.a, &self.a_prime, "a")?.ok_or(ProblemError::MissingField("a"))?;
                let f_cf = parse_cf(&self.f, &None, "f")?.ok_or(ProblemError::MissingField("f"))?;
                let mu = self.mu.map(cast::<T>).unwrap_or_else(|| sample_min(&a_cf));
                let gamma = self
                    .gamma
                    .map(cast::<T>)
                    .unwrap_or_else(|| Problem::<T>::default_gamma(n_hint));
                Problem::diffusion_reaction(
                    interval,
                    a_cf,
                    r_cf,
                    f_cf,
                    u_cf,
                    cast(self.left_value.unwrap_or(0.0)),
                    cast(self.right_value.unwrap_or(0.0)),
                    gamma,
                    mu,
                    r0.max(T::zero()),
                )
            }
            other => Err(ProblemError::InvalidParam {
                name: "kind".into(),
                reason: format!("expected \"ls\" or \"dr\", got \"{other}\""),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, ParamValue> {
        pairs.iter().map(|(k, v)| (k.to_string(), ParamValue::Num(*v))).collect()
    }

    #[test]
    fn sp_reaction_diffusion_exact_solution_values() {
        let p = Problem::<f64>::catalog("sp_reaction_diffusion", &params(&[("nu", 1e-6)])).unwrap();
        let u = p.target().unwrap();
        assert_eq!(u.eval(-1.0), 0.0);
        assert!((u.eval(0.0) - (-2.0)).abs() <= 1e-15);
        assert_eq!(p.mu(), 1e-6);
        assert_eq!(p.r0(), 1.0);
    }

    #[test]
    fn ls_xalpha_target() {
        let p = Problem::<f64>::catalog("ls_xalpha", &params(&[("alpha_exp", 0.5)])).unwrap();
        assert_eq!(p.target().unwrap().eval(0.25), 0.5);
        assert_eq!(p.left_value(), 0.0);
    }

    #[test]
    fn unknown_catalog_and_missing_params_error() {
        assert!(matches!(
            Problem::<f64>::catalog("nope", &params(&[])),
            Err(ProblemError::UnknownCatalog(_))
        ));
        assert!(matches!(
            Problem::<f64>::catalog("sp_reaction_diffusion", &params(&[])),
            Err(ProblemError::MissingParam(_))
        ));
        assert!(Problem::<f64>::catalog("ls_xalpha", &params(&[("alpha_exp", 1.5)])).is_err());
    }

    #[test]
    fn residual_check_resolves_mild_layer() {
        let p = Problem::<f64>::catalog("sp_reaction_diffusion", &params(&[("nu", 1e-2)])).unwrap();
        let res = p.residual_check(100_000).unwrap();
        assert!(res <= 1e-4, "residual {res}");
    }

    #[test]
    fn residual_check_polynomial_is_nearly_exact() {
        let cfg = ProblemConfig {
            kind: Some("dr".into()),
            interval: Some([0.0, 1.0]),
            a: Some("1".into()),
            r: Some("0".into()),
            f: Some("2".into()),
            u: Some("x*(1 - x) + 0.5 - 0.25*x".into()),
            left_value: Some(0.5),
            right_value: Some(0.25),
            gamma: Some(1.0),
            mu: Some(1.0),
            r0: Some(0.0),
            ..Default::default()
        };
        let p: Problem<f64> = cfg.build(0).unwrap();
        assert!(p.residual_check(2000).unwrap() <= 1e-8);
    }

    #[test]
    fn residual_check_constant_solution() {
        let cfg = ProblemConfig {
            kind: Some("dr".into()),
            interval: Some([0.0, 1.0]),
            a: Some("1 + x^2".into()),
            r: Some("2".into()),
            f: Some("6".into()),
            u: Some("3".into()),
            left_value: Some(3.0),
            right_value: Some(3.0),
            gamma: Some(1.0),
            ..Default::default()
        };
        let p: Problem<f64> = cfg.build(0).unwrap();
        assert!(p.residual_check(1000).unwrap() <= 1e-10);
    }

    #[test]
    fn residual_check_requires_exact_solution() {
        let cfg = ProblemConfig {
            kind: Some("dr".into()),
            interval: Some([0.0, 1.0]),
            a: Some("1".into()),
            r: Some("1".into()),
            f: Some("1".into()),
            ..Default::default()
        };
        let p: Problem<f64> = cfg.build(0).unwrap();
        assert!(matches!(p.residual_check(100), Err(ProblemError::MissingExact)));
    }

    #[test]
    fn bound_violations_are_caught() {
        let cfg = ProblemConfig {
            kind: Some("ls".into()),
            interval: Some([0.0, 1.0]),
            r: Some("x - 0.5".into()),
            u: Some("x".into()),
            r0: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(
            cfg.build::<f64>(0),
            Err(ProblemError::BoundViolation { name: "r", .. })
        ));
    }

    #[test]
    fn config_catalog_overrides_expressions() {
        let json = r#"{
            "kind": "ls",
            "interval": [0, 1],
            "r": "1",
            "u": "x",
            "catalog": { "name": "ls_xalpha", "params": { "alpha_exp": 0.5 } }
        }"#;
        let cfg: ProblemConfig = serde_json::from_str(json).unwrap();
        let p: Problem<f64> = cfg.build(4).unwrap();
        assert_eq!(p.target().unwrap().eval(0.25), 0.5);
    }

    #[test]
    fn default_gamma_scales_with_n() {
        let cfg = ProblemConfig {
            kind: Some("dr".into()),
            interval: Some([0.0, 1.0]),
            a: Some("1".into()),
            r: Some("1".into()),
            f: Some("1".into()),
            ..Default::default()
        };
        let p: Problem<f64> = cfg.build(16).unwrap();
        assert_eq!(p.gamma(), 1e4 * 17.0);
    }

    #[test]
    fn declared_kinks_gate_the_derivative() {
        let cfg = ProblemConfig {
            kind: Some("dr".into()),
            interval: Some([0.0, 1.0]),
            a: Some("1 + abs(x - 0.5)".into()),
            a_prime: Some("(x - 0.5)/abs(x - 0.5)".into()),
            r: Some("1".into()),
            f: Some("1".into()),
            kinks: Some([("a".to_string(), vec![0.5])].into_iter().collect()),
            gamma: Some(1.0),
            ..Default::default()
        };
        let p: Problem<f64> = cfg.build(0).unwrap();
        let a = p.a().unwrap();
        assert!(a.derivative_at(0.5, 1e-12).is_none());
        assert_eq!(a.derivative_at(0.75, 1e-12), Some(1.0));
        assert_eq!(p.coefficient_kinks(), vec![0.5]);
    }
}

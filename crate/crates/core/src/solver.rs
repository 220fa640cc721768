//! Block Newton outer iterations over the (coefficients, breakpoints)
//! split, in reduced form: per step the linear block is solved exactly,
//! breakpoints are classified into non-contributing (S1) and non-updating
//! (S2) sets, the Newton direction is computed on the remaining indices
//! with zeros scattered elsewhere, and persistently non-contributing
//! neurons are redistributed to random mesh midpoints.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis;
use crate::assembly::{assemble, AssembledSystem, AssemblyError};
use crate::linalg::{Cholesky, Ldlt, LinalgError, Matrix};
use crate::model::{Interval, MeshQuantities, ModelError, Network};
use crate::problems::{Problem, ProblemKind};
use crate::quadrature::QuadratureSpec;
use crate::scalar::{cast, norm2, Scalar};

/// How many consecutive iterations a neuron must spend in S1 before it is
/// redistributed; earlier occurrences only skip its breakpoint update.
const REDISTRIBUTE_AFTER: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("coefficient-block solve failed at pivot {pivot}")]
    CoefficientSolve { pivot: usize },
    #[error("reduced breakpoint solve failed at pivot {pivot} (gauss_newton_fallback tried: {fallback_tried})")]
    ReducedSolve { pivot: usize, fallback_tried: bool },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "nlgs")]
    NlGs,
    #[serde(rename = "lgs")]
    LGs,
    #[serde(rename = "jb")]
    Jacobi,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::NlGs => "nlgs",
            Scheme::LGs => "lgs",
            Scheme::Jacobi => "jb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Damping {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "mesh_guard")]
    MeshGuard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig<T> {
    pub scheme: Scheme,
    pub max_iters: usize,
    pub grad_tol: T,
    /// S1 threshold, applied to `|c_i| / max(1, max_j |c_j|)`.
    pub tau1: T,
    /// S2 threshold for diffusion-reaction: `|g_i| / a(b_i) <= tau2`.
    pub tau2: T,
    /// S2 threshold for least squares: `g_i/c_i < 0` and `|c_i| < tau3 |g_i|`.
    pub tau3: T,
    pub seed: u64,
    pub damping: Damping,
    pub gauss_newton_fallback: bool,
    /// Breakpoint indices (0-based into `b`) that never move.
    pub frozen: BTreeSet<usize>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            scheme: Scheme::NlGs,
            max_iters: 100,
            grad_tol: cast(1e-10),
            tau1: cast(1e-6),
            tau2: cast(1e-8),
            tau3: cast(0.1),
            seed: 42,
            damping: Damping::MeshGuard,
            gauss_newton_fallback: true,
            frozen: BTreeSet::new(),
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tau1 >= T::zero() && self.tau1 < T::one()) {
            return Err(SolverError::BadConfig("tau1 must lie in [0, 1)".into()));
        }
        if !(self.tau2 >= T::zero() && self.tau2 < T::one()) {
            return Err(SolverError::BadConfig("tau2 must lie in [0, 1)".into()));
        }
        if !(self.tau3 > T::zero() && self.tau3 < T::one()) {
            return Err(SolverError::BadConfig("tau3 must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Why a breakpoint landed in its set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    Active,
    Frozen,
    SmallCoefficient,
    OutsideInterval,
    SmallResidualRatio,
    DerivativeMissing,
    NegativeRatio,
}

#[derive(Debug, Clone, Serialize)]
pub struct NeuronEvidence<T> {
    pub abs_c: T,
    pub in_interval: bool,
    /// `|g_i| / a(b_i)` for DR, `g_i / c_i` for LS; absent when undefined.
    pub ratio: Option<T>,
    pub reason: Reason,
}

/// Index sets of the reduced Newton step. Indices are 0-based positions
/// into the breakpoint vector `b`; together with the frozen set, S1, S2,
/// and S partition `{0, ..., n-1}`.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport<T> {
    pub s1: BTreeSet<usize>,
    pub s2: BTreeSet<usize>,
    pub s: BTreeSet<usize>,
    pub evidence: Vec<NeuronEvidence<T>>,
}

impl<T: Scalar> ReductionReport<T> {
    /// Everything active; used by injected test objectives.
    pub fn all_active(n: usize) -> Self {
        Self {
            s1: BTreeSet::new(),
            s2: BTreeSet::new(),
            s: (0..n).collect(),
            evidence: (0..n)
                .map(|_| NeuronEvidence {
                    abs_c: T::zero(),
                    in_interval: true,
                    ratio: None,
                    reason: Reason::Active,
                })
                .collect(),
        }
    }
}

/// Splits breakpoints into S1 (non-contributing: tiny coefficient or
/// outside the interval), S2 (non-updating: residual ratio below tau2 or
/// missing `a'` for DR; negatively large `g/c` for LS), and the active
/// rest. Frozen indices are excluded from all three sets.
pub fn classify<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    sys: &AssembledSystem<T>,
    cfg: &SolverConfig<T>,
) -> ReductionReport<T> {
    let n = net.n();
    let iv = net.interval();
    let cmax = net.c().iter().fold(T::one(), |acc, &v| acc.max(v.abs()));
    let mut s1 = BTreeSet::new();
    let mut s2 = BTreeSet::new();
    let mut s = BTreeSet::new();
    let mut evidence = Vec::with_capacity(n);
    for j in 0..n {
        let cj = net.c()[j + 1];
        let bj = net.b()[j];
        let abs_c = cj.abs();
        let in_interval = iv.contains_open(bj);
        if cfg.frozen.contains(&j) {
            evidence.push(NeuronEvidence { abs_c, in_interval, ratio: None, reason: Reason::Frozen });
            continue;
        }
        if abs_c / cmax < cfg.tau1 {
            s1.insert(j);
            evidence.push(NeuronEvidence {
                abs_c,
                in_interval,
                ratio: None,
                reason: Reason::SmallCoefficient,
            });
            continue;
        }
        if !in_interval {
            s1.insert(j);
            evidence.push(NeuronEvidence {
                abs_c,
                in_interval,
                ratio: None,
                reason: Reason::OutsideInterval,
            });
            continue;
        }
        match p.kind() {
            ProblemKind::DiffusionReaction => {
                if sys.g_missing.contains(&j) {
                    s2.insert(j);
                    evidence.push(NeuronEvidence {
                        abs_c,
                        in_interval,
                        ratio: None,
                        reason: Reason::DerivativeMissing,
                    });
                    continue;
                }
                let ratio = sys.g[j].abs() / p.a().expect("DR problem has a").eval(bj);
                if ratio <= cfg.tau2 {
                    s2.insert(j);
                    evidence.push(NeuronEvidence {
                        abs_c,
                        in_interval,
                        ratio: Some(ratio),
                        reason: Reason::SmallResidualRatio,
                    });
                    continue;
                }
                s.insert(j);
                evidence.push(NeuronEvidence { abs_c, in_interval, ratio: Some(ratio), reason: Reason::Active });
            }
            ProblemKind::LeastSquares => {
                let ratio = sys.g[j] / cj;
                if ratio < T::zero() && abs_c < cfg.tau3 * sys.g[j].abs() {
                    s2.insert(j);
                    evidence.push(NeuronEvidence {
                        abs_c,
                        in_interval,
                        ratio: Some(ratio),
                        reason: Reason::NegativeRatio,
                    });
                    continue;
                }
                s.insert(j);
                evidence.push(NeuronEvidence { abs_c, in_interval, ratio: Some(ratio), reason: Reason::Active });
            }
        }
    }
    ReductionReport { s1, s2, s, evidence }
}

fn spd_solve<T: Scalar>(m: &Matrix<T>, rhs: &[T]) -> Result<Vec<T>, SolverError> {
    match Cholesky::new(m, T::zero()) {
        Ok(f) => Ok(f.solve(rhs)),
        Err(_) => {
            let tol = cast::<T>(1e-14) * m.max_abs();
            match Ldlt::new(m, tol) {
                Ok(f) => Ok(f.solve(rhs)),
                Err(LinalgError::PivotFailure { index }) => {
                    Err(SolverError::CoefficientSolve { pivot: index })
                }
                Err(_) => Err(SolverError::CoefficientSolve { pivot: 0 }),
            }
        }
    }
}

fn reduced_solve<T: Scalar>(
    h22: &Matrix<T>,
    gn22: &Matrix<T>,
    rhs_full: &[T],
    s: &BTreeSet<usize>,
    fallback: bool,
) -> Result<Vec<T>, SolverError> {
    let n = rhs_full.len();
    let mut p = vec![T::zero(); n];
    if s.is_empty() {
        return Ok(p);
    }
    let idx: Vec<usize> = s.iter().copied().collect();
    let sub = h22.restrict(&idx);
    let rhs: Vec<T> = idx.iter().map(|&j| rhs_full[j]).collect();
    let tol = cast::<T>(1e-12) * sub.max_abs();
    let solved = match Ldlt::new(&sub, tol) {
        Ok(f) => f.solve(&rhs),
        Err(LinalgError::PivotFailure { index }) if fallback => {
            let gsub = gn22.restrict(&idx);
            let gtol = cast::<T>(1e-12) * gsub.max_abs();
            match Cholesky::new(&gsub, gtol) {
                Ok(f) => f.solve(&rhs),
                Err(LinalgError::PivotFailure { index: gi }) => {
                    return Err(SolverError::ReducedSolve { pivot: idx[gi.min(idx.len() - 1)], fallback_tried: true });
                }
                Err(_) => {
                    return Err(SolverError::ReducedSolve { pivot: idx[index.min(idx.len() - 1)], fallback_tried: true });
                }
            }
        }
        Err(LinalgError::PivotFailure { index }) => {
            return Err(SolverError::ReducedSolve { pivot: idx[index.min(idx.len() - 1)], fallback_tried: false });
        }
        Err(_) => return Err(SolverError::ReducedSolve { pivot: idx[0], fallback_tried: false }),
    };
    for (t, &j) in idx.iter().enumerate() {
        p[j] = solved[t];
    }
    Ok(p)
}

/// Reduced Newton direction: solves the S-restricted breakpoint system
/// against the restricted gradient and scatters zeros elsewhere. On a
/// singular restricted Hessian the Gauss-Newton surrogate is tried when
/// enabled.
pub fn reduced_direction<T: Scalar>(
    sys: &AssembledSystem<T>,
    s: &BTreeSet<usize>,
    cfg: &SolverConfig<T>,
) -> Result<Vec<T>, SolverError> {
    let rhs: Vec<T> = sys.grad_b.iter().map(|&v| -v).collect();
    reduced_solve(&sys.h22, &sys.gn22, &rhs, s, cfg.gauss_newton_fallback)
}

/// Objective abstraction the outer iterations run against. The library
/// problem types implement it through assembly; tests may inject analytic
/// objectives (for example quadratics) directly.
pub trait BlockSystem<T: Scalar> {
    fn eval(&self, c: &[T], b: &[T]) -> Result<AssembledSystem<T>, SolverError>;

    fn classify(&self, _c: &[T], _b: &[T], sys: &AssembledSystem<T>) -> ReductionReport<T> {
        ReductionReport::all_active(sys.n())
    }
}

/// A problem, quadrature rule, and solver thresholds bound to the fixed
/// network metadata (interval and offset).
pub struct ProblemSystem<'a, T: Scalar> {
    pub problem: &'a Problem<T>,
    pub quad: &'a QuadratureSpec<T>,
    pub cfg: &'a SolverConfig<T>,
    interval: Interval<T>,
    alpha: T,
}

impl<'a, T: Scalar> ProblemSystem<'a, T> {
    pub fn new(
        problem: &'a Problem<T>,
        quad: &'a QuadratureSpec<T>,
        cfg: &'a SolverConfig<T>,
        net: &Network<T>,
    ) -> Self {
        Self { problem, quad, cfg, interval: net.interval(), alpha: net.alpha() }
    }

    fn network(&self, c: &[T], b: &[T]) -> Result<Network<T>, SolverError> {
        Ok(Network::new(self.interval, self.alpha, c.to_vec(), b.to_vec())?)
    }
}

impl<'a, T: Scalar> BlockSystem<T> for ProblemSystem<'a, T> {
    fn eval(&self, c: &[T], b: &[T]) -> Result<AssembledSystem<T>, SolverError> {
        let net = self.network(c, b)?;
        Ok(assemble(self.problem, &net, self.quad)?)
    }

    fn classify(&self, c: &[T], b: &[T], sys: &AssembledSystem<T>) -> ReductionReport<T> {
        match self.network(c, b) {
            Ok(net) => classify(self.problem, &net, sys, self.cfg),
            Err(_) => ReductionReport::all_active(sys.n()),
        }
    }
}

/// Output of one outer-iteration step before damping and redistribution.
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    pub c_new: Vec<T>,
    /// Reduced Newton direction for the breakpoints (zeros off S).
    pub direction: Vec<T>,
    pub report: ReductionReport<T>,
    pub f_value: T,
    pub gnorm_c: T,
    pub gnorm_b_s: T,
}

fn gnorm_on<T: Scalar>(grad_b: &[T], s: &BTreeSet<usize>) -> T {
    s.iter().fold(T::zero(), |acc, &j| acc + grad_b[j] * grad_b[j]).sqrt()
}

/// One outer iteration of the chosen scheme on raw parameter vectors.
///
/// NL-GS solves the coefficient block at `(c, b)`, re-evaluates at the new
/// coefficients, classifies there, and takes the reduced Newton step.
/// L-GS and Jacobi evaluate once at `(c, b)`; L-GS feeds the cross block
/// `H21 dc` into the breakpoint right-hand side, Jacobi does not.
pub fn scheme_step<T: Scalar, S: BlockSystem<T>>(
    system: &S,
    scheme: Scheme,
    c: &[T],
    b: &[T],
    gauss_newton_fallback: bool,
) -> Result<StepOutcome<T>, SolverError> {
    let e1 = system.eval(c, b)?;
    let neg_gc: Vec<T> = e1.grad_c.iter().map(|&v| -v).collect();
    let dc = spd_solve(&e1.h11, &neg_gc)?;
    let c_new: Vec<T> = c.iter().zip(&dc).map(|(&a, &d)| a + d).collect();
    match scheme {
        Scheme::NlGs => {
            let e2 = system.eval(&c_new, b)?;
            let report = system.classify(&c_new, b, &e2);
            let rhs: Vec<T> = e2.grad_b.iter().map(|&v| -v).collect();
            let direction = reduced_solve(&e2.h22, &e2.gn22, &rhs, &report.s, gauss_newton_fallback)?;
            Ok(StepOutcome {
                c_new,
                direction,
                gnorm_c: norm2(&e2.grad_c),
                gnorm_b_s: gnorm_on(&e2.grad_b, &report.s),
                f_value: e2.f_value,
                report,
            })
        }
        Scheme::LGs => {
            let report = system.classify(c, b, &e1);
            // rhs = -(grad_b + H21 dc) with H21 = H12^T.
            let rhs: Vec<T> = (0..e1.n())
                .map(|j| {
                    let cross = (0..e1.grad_c.len())
                        .fold(T::zero(), |acc, i| acc + e1.h12[(i, j)] * dc[i]);
                    -(e1.grad_b[j] + cross)
                })
                .collect();
            let direction = reduced_solve(&e1.h22, &e1.gn22, &rhs, &report.s, gauss_newton_fallback)?;
            Ok(StepOutcome {
                c_new,
                direction,
                gnorm_c: norm2(&e1.grad_c),
                gnorm_b_s: gnorm_on(&e1.grad_b, &report.s),
                f_value: e1.f_value,
                report,
            })
        }
        Scheme::Jacobi => {
            let report = system.classify(c, b, &e1);
            let rhs: Vec<T> = e1.grad_b.iter().map(|&v| -v).collect();
            let direction = reduced_solve(&e1.h22, &e1.gn22, &rhs, &report.s, gauss_newton_fallback)?;
            Ok(StepOutcome {
                c_new,
                direction,
                gnorm_c: norm2(&e1.grad_c),
                gnorm_b_s: gnorm_on(&e1.grad_b, &report.s),
                f_value: e1.f_value,
                report,
            })
        }
    }
}

/// Largest step fraction in (0, 1] that keeps the breakpoints sorted with
/// gaps at least the mesh floor, endpoints included. Pairs already below
/// the floor (breakpoints parked outside the interval) are ignored.
pub fn mesh_guard_lambda<T: Scalar>(net: &Network<T>, direction: &[T]) -> T {
    let iv = net.interval();
    let h_floor = net.h_floor();
    let mut aug_b = vec![iv.left()];
    aug_b.extend_from_slice(net.b());
    aug_b.push(iv.right());
    let mut aug_p = vec![T::zero()];
    aug_p.extend_from_slice(direction);
    aug_p.push(T::zero());
    let mut lambda = T::one();
    for i in 0..aug_b.len() - 1 {
        let gap = aug_b[i + 1] - aug_b[i];
        let dp = aug_p[i + 1] - aug_p[i];
        if gap < h_floor {
            continue;
        }
        if dp < T::zero() && gap + dp < h_floor {
            lambda = lambda.min((gap - h_floor) / (-dp));
        }
    }
    lambda.max(T::zero())
}

/// Deterministic redistribution state: the seeded stream plus per-neuron
/// S1 streak counters.
#[derive(Debug, Clone)]
pub struct RunState {
    rng: ChaCha8Rng,
    streak: Vec<u32>,
}

impl RunState {
    pub fn new(seed: u64, n: usize) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), streak: vec![0; n] }
    }

    fn update(&mut self, s1: &BTreeSet<usize>) -> Vec<usize> {
        let mut due = Vec::new();
        for j in 0..self.streak.len() {
            if s1.contains(&j) {
                self.streak[j] += 1;
                if self.streak[j] >= REDISTRIBUTE_AFTER {
                    due.push(j);
                }
            } else {
                self.streak[j] = 0;
            }
        }
        due
    }

    fn clear(&mut self, redistributed: &[usize]) {
        for &j in redistributed {
            self.streak[j] = 0;
        }
    }
}

/// Moves each listed breakpoint to the midpoint of a uniformly random
/// adjacent pair of the current sorted mesh (endpoints included), resets
/// its coefficient to zero, and canonicalizes. Draws happen in ascending
/// index order against the pre-move mesh.
pub fn redistribute<T: Scalar>(
    net: &Network<T>,
    s1: &BTreeSet<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Network<T>, ModelError> {
    if s1.is_empty() {
        return Ok(net.clone());
    }
    let iv = net.interval();
    let n = net.n();
    let mut aug = vec![iv.left()];
    aug.extend_from_slice(net.b());
    aug.push(iv.right());
    let mut b = net.b().to_vec();
    let mut c = net.c().to_vec();
    let half = cast::<T>(0.5);
    for &j in s1 {
        let m = rng.gen_range(1..=n + 1);
        b[j] = (aug[m - 1] + aug[m]) * half;
        c[j + 1] = T::zero();
    }
    Network::new(iv, net.alpha(), c, b)
}

/// One full outer step on a network: scheme step, mesh-guard damping,
/// streak-based redistribution, canonicalization.
#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub network: Network<T>,
    pub report: ReductionReport<T>,
    pub redistributed: Vec<usize>,
    pub f_value: T,
    pub gnorm_c: T,
    pub gnorm_b_s: T,
    pub step_norm_c: T,
    pub step_norm_b: T,
}

fn step_with_scheme<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
    cfg: &SolverConfig<T>,
    state: &mut RunState,
    scheme: Scheme,
) -> Result<StepResult<T>, SolverError> {
    cfg.validate()?;
    let system = ProblemSystem::new(p, q, cfg, net);
    let out = scheme_step(&system, scheme, net.c(), net.b(), cfg.gauss_newton_fallback)?;
    let lambda = match cfg.damping {
        Damping::None => T::one(),
        Damping::MeshGuard => mesh_guard_lambda(net, &out.direction),
    };
    let b_new: Vec<T> = net.b().iter().zip(&out.direction).map(|(&b, &p)| b + lambda * p).collect();
    let step_norm_c = {
        let d: Vec<T> = out.c_new.iter().zip(net.c()).map(|(&a, &b)| a - b).collect();
        norm2(&d)
    };
    let scaled: Vec<T> = out.direction.iter().map(|&p| lambda * p).collect();
    let step_norm_b = norm2(&scaled);
    let moved = Network::new(net.interval(), net.alpha(), out.c_new.clone(), b_new)?;
    let due = state.update(&out.report.s1);
    let due_set: BTreeSet<usize> = due.iter().copied().filter(|j| !cfg.frozen.contains(j)).collect();
    let network = if due_set.is_empty() {
        moved
    } else {
        redistribute(&moved, &due_set, &mut state.rng)?
    };
    let redistributed: Vec<usize> = due_set.into_iter().collect();
    state.clear(&redistributed);
    Ok(StepResult {
        network,
        report: out.report,
        redistributed,
        f_value: out.f_value,
        gnorm_c: out.gnorm_c,
        gnorm_b_s: out.gnorm_b_s,
        step_norm_c,
        step_norm_b,
    })
}

pub fn step_nlgs<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
    cfg: &SolverConfig<T>,
    state: &mut RunState,
) -> Result<StepResult<T>, SolverError> {
    step_with_scheme(p, net, q, cfg, state, Scheme::NlGs)
}

pub fn step_lgs<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
    cfg: &SolverConfig<T>,
    state: &mut RunState,
) -> Result<StepResult<T>, SolverError> {
    step_with_scheme(p, net, q, cfg, state, Scheme::LGs)
}

pub fn step_jacobi<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
    cfg: &SolverConfig<T>,
    state: &mut RunState,
) -> Result<StepResult<T>, SolverError> {
    step_with_scheme(p, net, q, cfg, state, Scheme::Jacobi)
}

/// Solves the coefficient block once at fixed breakpoints (exact for the
/// quadratic coefficient objective); used for initialization and baselines.
pub fn solve_linear<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<Network<T>, SolverError> {
    let sys = assemble(p, net, q)?;
    let neg: Vec<T> = sys.grad_c.iter().map(|&v| -v).collect();
    let dc = spd_solve(&sys.h11, &neg)?;
    let c_new: Vec<T> = net.c().iter().zip(&dc).map(|(&a, &d)| a + d).collect();
    Ok(Network::new(net.interval(), net.alpha(), c_new, net.b().to_vec())?)
}

/// Uniform initial network: `n` equispaced interior breakpoints, zero
/// coefficients (the first coefficient solve sets them), offset from the
/// problem's left boundary value.
pub fn uniform_init<T: Scalar>(p: &Problem<T>, n: usize) -> Network<T> {
    let iv = p.interval();
    let b: Vec<T> = (1..=n)
        .map(|i| iv.left() + iv.length() * cast::<T>(i as f64 / (n as f64 + 1.0)))
        .collect();
    Network::new(iv, p.alpha(), vec![T::zero(); n + 1], b).expect("uniform init is canonical")
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub k: usize,
    pub f_value: T,
    pub gnorm_c: T,
    pub gnorm_b_s: T,
    pub s1_size: usize,
    pub s2_size: usize,
    pub step_norm_c: T,
    pub step_norm_b: T,
    pub rel_h1: Option<T>,
    pub redistributed: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace<T> {
    pub records: Vec<IterationRecord<T>>,
}

impl<T: Scalar> IterationTrace<T> {
    /// Fixed-format CSV: `k,F,gnorm_c,gnorm_b,S1,S2,step_c,step_b,relH1err`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,F,gnorm_c,gnorm_b,S1,S2,step_c,step_b,relH1err")?;
        for r in &self.records {
            let rel = r.rel_h1.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                r.f_value,
                r.gnorm_c,
                r.gnorm_b_s,
                r.s1_size,
                r.s2_size,
                r.step_norm_c,
                r.step_norm_b,
                rel
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// A solver abort carrying the trace accumulated so far.
#[derive(Debug)]
pub struct RunError<T> {
    pub error: SolverError,
    pub trace: IterationTrace<T>,
}

impl<T: Scalar> fmt::Display for RunError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} trace records)", self.error, self.trace.records.len())
    }
}

impl<T: Scalar> std::error::Error for RunError<T> {}

fn rel_h1_if_known<T: Scalar>(p: &Problem<T>, net: &Network<T>, q: &QuadratureSpec<T>) -> Option<T> {
    if p.target().is_none() {
        return None;
    }
    analysis::error_norms(p, net, q).ok().map(|e| e.rel_h1_semi)
}

/// Runs the configured scheme until `max_iters` or until
/// `|grad_c| + |grad_b restricted to S| <= grad_tol`, measured at each
/// step's evaluation point. Record 0 describes the initial network.
pub fn run<T: Scalar>(
    p: &Problem<T>,
    init: &Network<T>,
    cfg: &SolverConfig<T>,
    q: &QuadratureSpec<T>,
) -> Result<(Network<T>, IterationTrace<T>), Box<RunError<T>>> {
    let mut trace = IterationTrace::default();
    let fail = |error: SolverError, trace: &IterationTrace<T>| {
        Box::new(RunError { error, trace: trace.clone() })
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &trace));
    }
    let mut net = init.clone();
    let mut state = RunState::new(cfg.seed, net.n());

    let sys0 = match assemble(p, &net, q) {
        Ok(s) => s,
        Err(e) => return Err(fail(e.into(), &trace)),
    };
    let report0 = classify(p, &net, &sys0, cfg);
    trace.records.push(IterationRecord {
        k: 0,
        f_value: sys0.f_value,
        gnorm_c: norm2(&sys0.grad_c),
        gnorm_b_s: gnorm_on(&sys0.grad_b, &report0.s),
        s1_size: report0.s1.len(),
        s2_size: report0.s2.len(),
        step_norm_c: T::zero(),
        step_norm_b: T::zero(),
        rel_h1: rel_h1_if_known(p, &net, q),
        redistributed: Vec::new(),
    });

    for k in 1..=cfg.max_iters {
        let result = match step_with_scheme(p, &net, q, cfg, &mut state, cfg.scheme) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, &trace)),
        };
        net = result.network;
        trace.records.push(IterationRecord {
            k,
            f_value: result.f_value,
            gnorm_c: result.gnorm_c,
            gnorm_b_s: result.gnorm_b_s,
            s1_size: result.report.s1.len(),
            s2_size: result.report.s2.len(),
            step_norm_c: result.step_norm_c,
            step_norm_b: result.step_norm_b,
            rel_h1: rel_h1_if_known(p, &net, q),
            redistributed: result.redistributed,
        });
        if result.gnorm_c + result.gnorm_b_s <= cfg.grad_tol {
            break;
        }
    }
    Ok((net, trace))
}

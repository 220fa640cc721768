//! Objective, block gradients, and exact Hessian blocks.
//!
//! All integrals for one assembly share a single merged panel set (interval
//! endpoints, breakpoints, declared coefficient kinks) and one adaptive
//! refinement: each panel contributes a small vector of weighted moments,
//! centered at the panel midpoint, from which every matrix entry is a tail
//! accumulation. Dirac terms are collapsed analytically to point values
//! with the `H(0) = 1/2` midpoint-slope convention; they are never sampled.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{MeshQuantities, Network};
use crate::problems::{CoefficientFunction, Problem, ProblemKind};
use crate::quadrature::{integrate_vec, merged_panels, QuadratureError, QuadratureSpec};
use crate::scalar::{cast, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("integrand not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },
    #[error("a'(b) does not exist at breakpoint index {index}")]
    DerivativeUndefined { index: usize },
    #[error("panel construction failed: {0}")]
    Panels(String),
}

fn map_qerr<T: Scalar>(e: QuadratureError<T>) -> AssemblyError {
    match e {
        QuadratureError::NonFinite { x } => {
            AssemblyError::NonFiniteIntegrand { x: x.to_f64().unwrap_or(f64::NAN) }
        }
        other => AssemblyError::Panels(other.to_string()),
    }
}

/// Everything the solver needs at one iterate.
///
/// Index conventions: `grad_c`/`h11` run over the `n + 1` linear
/// coefficients (index 0 pairs with the implicit breakpoint at the left
/// endpoint); `grad_b`, `g`, `f_vec`, `h22` run over the `n` stored
/// breakpoints. `grad_b[j] = c[j+1] * f_vec[j]` holds by construction.
#[derive(Debug, Clone, Serialize)]
pub struct AssembledSystem<T> {
    pub f_value: T,
    pub grad_c: Vec<T>,
    pub grad_b: Vec<T>,
    pub h11: Matrix<T>,
    pub h12: Matrix<T>,
    pub h22: Matrix<T>,
    /// Pointwise residual quantity per breakpoint; see [`compute_g`].
    pub g: Vec<T>,
    /// Breakpoint indices where `a'` does not exist (their `g` entry is 0
    /// and classification sends them to the non-updating set).
    pub g_missing: Vec<usize>,
    /// Breakpoint-sensitivity integrals; `d/db_j F = c_j F_j`.
    pub f_vec: Vec<T>,
    /// Gauss-Newton surrogate for `h22`: `D(c) (int r H H^T) D(c)`.
    pub gn22: Matrix<T>,
    /// Tail integrals `int r H_i H_j` shared by `h22` and `gn22`.
    pub r_gram_h: Matrix<T>,
    pub mesh: MeshQuantities<T>,
    /// Panels where adaptive refinement hit the depth cap.
    pub depth_exhausted: Vec<(T, T)>,
}

impl<T: Scalar> AssembledSystem<T> {
    /// `[[H11, H12], [H12^T, H22]]`.
    pub fn full_hessian(&self) -> Matrix<T> {
        Matrix::block_symmetric(&self.h11, &self.h12, &self.h22)
    }

    pub fn n(&self) -> usize {
        self.grad_b.len()
    }

    /// Full gradient `(grad_c, grad_b)`.
    pub fn full_gradient(&self) -> Vec<T> {
        let mut v = self.grad_c.clone();
        v.extend_from_slice(&self.grad_b);
        v
    }
}

/// Gram matrices of the basis functions against a weight, plus the
/// delta-collapsed block. Rows index the `n + 1` coefficient directions,
/// columns of `sigma_h`/`h_delta` the `n` stored breakpoints.
#[derive(Debug, Clone)]
pub struct WeightedGrams<T> {
    /// `int w Sigma Sigma^T`, (n+1) x (n+1).
    pub sigma_sigma: Matrix<T>,
    /// `int w Sigma H_n^T`, (n+1) x n.
    pub sigma_h: Matrix<T>,
    /// `int w H_n H_n^T`, n x n.
    pub h_h: Matrix<T>,
    /// `int w H_{n+1} H_{n+1}^T`, (n+1) x (n+1).
    pub hh_full: Matrix<T>,
    /// Delta collapse `w(b_j) H_i(b_j)` with `H_i(b_i) = 1/2`, (n+1) x n.
    pub h_delta: Matrix<T>,
}

struct PanelData<T> {
    left: T,
    mid: T,
    /// Number of active coefficient indices (those with `b_i <=` panel left).
    act: usize,
    /// Slope of the network on this panel.
    slope: T,
    moments: Vec<T>,
}

/// Shared geometry pass: panel list, activity counts, affine restrictions.
fn panel_geometry<T: Scalar>(net: &Network<T>, extra_kinks: &[T]) -> (Vec<T>, Vec<(T, T, usize, T, T)>) {
    let panels = merged_panels(net, extra_kinks);
    let tol = net.h_floor() * cast::<T>(0.5);
    let slopes = net.cell_slopes();
    let bs = net.b();
    let mut geoms = Vec::with_capacity(panels.len() - 1);
    for w in panels.windows(2) {
        let (l, r) = (w[0], w[1]);
        let mut act = 1usize;
        while act <= bs.len() && bs[act - 1] <= l + tol {
            act += 1;
        }
        let slope = slopes[act - 1];
        let val_l = net.evaluate(l);
        geoms.push((l, r, act, slope, val_l));
    }
    (panels, geoms)
}

fn half_heaviside<T: Scalar>(row: usize, paper_col: usize) -> T {
    // H_i(b_j) by index: 1 below the diagonal entry, 1/2 on it, 0 above.
    if row < paper_col {
        T::one()
    } else if row == paper_col {
        cast(0.5)
    } else {
        T::zero()
    }
}

/// Pointwise residual quantities `g` per breakpoint; entries whose `a'`
/// does not exist are returned as 0 together with their indices.
fn g_with_missing<T: Scalar>(p: &Problem<T>, net: &Network<T>) -> (Vec<T>, Vec<usize>) {
    let n = net.n();
    let mut g = vec![T::zero(); n];
    let mut missing = Vec::new();
    let kink_tol = net.h_floor();
    for j in 0..n {
        let bj = net.b()[j];
        let un = net.evaluate(bj);
        match p.kind() {
            ProblemKind::LeastSquares => {
                let u = p.target().expect("LS problem has target");
                g[j] = p.r().eval(bj) * (un - u.eval(bj));
            }
            ProblemKind::DiffusionReaction => {
                let a = p.a().expect("DR problem has a");
                let f = p.f().expect("DR problem has f");
                match a.derivative_at(bj, kink_tol) {
                    Some(ap) => {
                        g[j] = p.r().eval(bj) * un - f.eval(bj) - ap * net.midpoint_slope(j);
                    }
                    None => missing.push(j),
                }
            }
        }
    }
    (g, missing)
}

/// Pointwise `g` (Newton curvature data for the breakpoint block).
/// DR: `r(b_j) u_n(b_j) - f(b_j) - a'(b_j) u_n'(b_j)` with the midpoint
/// slope; LS: `r(b_j) (u_n(b_j) - u(b_j))`.
pub fn compute_g<T: Scalar>(p: &Problem<T>, net: &Network<T>) -> Result<Vec<T>, AssemblyError> {
    let (g, missing) = g_with_missing(p, net);
    if let Some(&index) = missing.first() {
        return Err(AssemblyError::DerivativeUndefined { index });
    }
    Ok(g)
}

/// Assembles objective, gradients, and all Hessian blocks in one pass.
pub fn assemble<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<AssembledSystem<T>, AssemblyError> {
    let n = net.n();
    let iv = net.interval();
    let (_, geoms) = panel_geometry(net, &p.coefficient_kinks());
    let is_dr = p.kind() == ProblemKind::DiffusionReaction;
    let dim = if is_dr { 10 } else { 6 };

    let mut data: Vec<PanelData<T>> = Vec::with_capacity(geoms.len());
    let mut depth_exhausted = Vec::new();
    let half = cast::<T>(0.5);
    for &(l, r, act, slope, val_l) in &geoms {
        let mid = (l + r) * half;
        let rf = p.r().clone();
        let moments = if is_dr {
            let af = p.a().expect("DR problem has a").clone();
            let ff = p.f().expect("DR problem has f").clone();
            let mut closure = move |x: T, out: &mut [T]| {
                let av = af.eval(x);
                let rv = rf.eval(x);
                let fv = ff.eval(x);
                let uv = val_l + slope * (x - l);
                let xm = x - mid;
                out[0] = av;
                out[1] = rv;
                out[2] = rv * xm;
                out[3] = rv * xm * xm;
                out[4] = rv * uv;
                out[5] = rv * uv * xm;
                out[6] = fv;
                out[7] = fv * xm;
                out[8] = rv * uv * uv;
                out[9] = fv * uv;
            };
            integrate_vec(&mut closure, dim, &[l, r], q).map_err(map_qerr)?
        } else {
            let uf = p.target().expect("LS problem has target").clone();
            let mut closure = move |x: T, out: &mut [T]| {
                let rv = rf.eval(x);
                let ev = val_l + slope * (x - l) - uf.eval(x);
                let xm = x - mid;
                out[0] = rv;
                out[1] = rv * xm;
                out[2] = rv * xm * xm;
                out[3] = rv * ev;
                out[4] = rv * ev * xm;
                out[5] = rv * ev * ev;
            };
            integrate_vec(&mut closure, dim, &[l, r], q).map_err(map_qerr)?
        };
        depth_exhausted.extend_from_slice(&moments.depth_exhausted);
        data.push(PanelData { left: l, mid, act, slope, moments: moments.values });
    }

    let aug_b: Vec<T> = std::iter::once(iv.left()).chain(net.b().iter().copied()).collect();
    let cs = net.c();
    let chat = &cs[1..];
    let gamma = if is_dr { p.gamma() } else { T::zero() };
    let rho = if is_dr { net.evaluate(iv.right()) - p.right_value() } else { T::zero() };
    let dbar: Vec<T> = aug_b.iter().map(|&bi| (iv.right() - bi).max(T::zero())).collect();

    let mut f_value = T::zero();
    let mut grad_c = vec![T::zero(); n + 1];
    let mut h11 = Matrix::zeros(n + 1, n + 1);
    let mut r_gram_h = Matrix::zeros(n, n);
    let mut sigma_h = Matrix::zeros(n + 1, n);
    let mut f_tail = vec![T::zero(); n];

    for pd in &data {
        let m = &pd.moments;
        let (r0, r1, r2, res0, res1);
        if is_dr {
            let a0 = m[0];
            r0 = m[1];
            r1 = m[2];
            r2 = m[3];
            // Residual moments of (r u_n - f).
            res0 = m[4] - m[6];
            res1 = m[5] - m[7];
            f_value = f_value + half * (pd.slope * pd.slope * a0 + m[8]) - m[9];
            for i in 0..pd.act {
                grad_c[i] = grad_c[i] + pd.slope * a0;
            }
            for i in 0..pd.act {
                for j in 0..=i {
                    h11[(i, j)] = h11[(i, j)] + a0;
                }
            }
            // Tail pieces of F_j: int (f - r u_n) on panels right of b_j.
            for j in 0..pd.act.saturating_sub(1) {
                f_tail[j] = f_tail[j] + (m[6] - m[4]);
            }
        } else {
            r0 = m[0];
            r1 = m[1];
            r2 = m[2];
            res0 = m[3];
            res1 = m[4];
            f_value = f_value + half * m[5];
            // Tail pieces of F_j: int r (u - u_n) = -int r e on panels right of b_j.
            for j in 0..pd.act.saturating_sub(1) {
                f_tail[j] = f_tail[j] - res0;
            }
        }
        for i in 0..pd.act {
            grad_c[i] = grad_c[i] + res1 + (pd.mid - aug_b[i]) * res0;
        }
        for i in 0..pd.act {
            let di = pd.mid - aug_b[i];
            for j in 0..=i {
                let dj = pd.mid - aug_b[j];
                h11[(i, j)] = h11[(i, j)] + r2 + (di + dj) * r1 + di * dj * r0;
            }
        }
        for j in 0..pd.act.saturating_sub(1) {
            for k in 0..pd.act.saturating_sub(1) {
                r_gram_h[(j, k)] = r_gram_h[(j, k)] + r0;
            }
            for i in 0..pd.act {
                sigma_h[(i, j)] = sigma_h[(i, j)] + r1 + (pd.mid - aug_b[i]) * r0;
            }
        }
    }
    // Mirror the lower triangle accumulated above.
    for i in 0..=n {
        for j in 0..i {
            h11[(j, i)] = h11[(i, j)];
        }
    }

    if is_dr {
        f_value = f_value + half * gamma * rho * rho;
        for i in 0..=n {
            grad_c[i] = grad_c[i] + gamma * rho * dbar[i];
            for j in 0..=n {
                h11[(i, j)] = h11[(i, j)] + gamma * dbar[i] * dbar[j];
            }
        }
    }

    let (g, g_missing) = g_with_missing(p, net);

    // F_j: tail integral minus the collapsed delta term minus the penalty
    // residual (DR), or the plain tail integral (LS).
    let mut f_vec = f_tail;
    if is_dr {
        let a = p.a().expect("DR problem has a");
        for j in 0..n {
            let bj = net.b()[j];
            let delta = if iv.contains_open(bj) {
                a.eval(bj) * net.midpoint_slope(j)
            } else {
                T::zero()
            };
            f_vec[j] = f_vec[j] - delta - gamma * rho;
        }
    }

    let grad_b: Vec<T> = (0..n).map(|j| chat[j] * f_vec[j]).collect();

    let mut h22 = Matrix::zeros(n, n);
    let mut gn22 = Matrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let base = chat[j] * r_gram_h[(j, k)] * chat[k];
            gn22[(j, k)] = base;
            h22[(j, k)] = base;
            if is_dr {
                h22[(j, k)] = h22[(j, k)] + gamma * chat[j] * chat[k];
            }
        }
        h22[(j, j)] = h22[(j, j)] + chat[j] * g[j];
    }

    let mut h12 = Matrix::zeros(n + 1, n);
    let a_cf = p.a();
    for j in 0..n {
        let bj = net.b()[j];
        let inside = iv.contains_open(bj);
        for i in 0..=n {
            let mut v = -sigma_h[(i, j)] * chat[j];
            if is_dr {
                let aval = if inside {
                    a_cf.expect("DR problem has a").eval(bj) * half_heaviside::<T>(i, j + 1)
                } else {
                    T::zero()
                };
                v = v - aval * chat[j] - gamma * dbar[i] * chat[j];
            }
            if i == j + 1 {
                v = v + f_vec[j];
            }
            h12[(i, j)] = v;
        }
    }

    Ok(AssembledSystem {
        f_value,
        grad_c,
        grad_b,
        h11,
        h12,
        h22,
        g,
        g_missing,
        f_vec,
        gn22,
        r_gram_h,
        mesh: net.mesh_quantities(),
        depth_exhausted,
    })
}

/// Objective value `F(theta) = J(u_n(.; theta))`.
pub fn objective<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<T, AssemblyError> {
    Ok(assemble(p, net, q)?.f_value)
}

/// Gradient in the linear coefficients.
pub fn grad_c<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<Vec<T>, AssemblyError> {
    Ok(assemble(p, net, q)?.grad_c)
}

/// Breakpoint-sensitivity integrals `F_j` (with the delta term collapsed).
pub fn compute_f_vec<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<Vec<T>, AssemblyError> {
    Ok(assemble(p, net, q)?.f_vec)
}

pub fn assemble_h11<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<Matrix<T>, AssemblyError> {
    Ok(assemble(p, net, q)?.h11)
}

pub fn assemble_h22<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<Matrix<T>, AssemblyError> {
    Ok(assemble(p, net, q)?.h22)
}

pub fn assemble_h12<T: Scalar>(
    p: &Problem<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<Matrix<T>, AssemblyError> {
    Ok(assemble(p, net, q)?.h12)
}

/// Basis Gram matrices against an arbitrary weight; used by the
/// quadratic-form certificates and by structure tests.
pub fn weighted_grams<T: Scalar>(
    w: &CoefficientFunction<T>,
    net: &Network<T>,
    q: &QuadratureSpec<T>,
) -> Result<WeightedGrams<T>, AssemblyError> {
    let n = net.n();
    let iv = net.interval();
    let (_, geoms) = panel_geometry(net, w.kinks());
    let aug_b: Vec<T> = std::iter::once(iv.left()).chain(net.b().iter().copied()).collect();
    let half = cast::<T>(0.5);

    let mut sigma_sigma = Matrix::zeros(n + 1, n + 1);
    let mut sigma_h = Matrix::zeros(n + 1, n);
    let mut h_h = Matrix::zeros(n, n);
    let mut hh_full = Matrix::zeros(n + 1, n + 1);

    for &(l, r, act, _, _) in &geoms {
        let mid = (l + r) * half;
        let wf = w.clone();
        let mut closure = move |x: T, out: &mut [T]| {
            let wv = wf.eval(x);
            let xm = x - mid;
            out[0] = wv;
            out[1] = wv * xm;
            out[2] = wv * xm * xm;
        };
        let m = integrate_vec(&mut closure, 3, &[l, r], q).map_err(map_qerr)?;
        let (w0, w1, w2) = (m.values[0], m.values[1], m.values[2]);
        for i in 0..act {
            let di = mid - aug_b[i];
            for j in 0..act {
                let dj = mid - aug_b[j];
                sigma_sigma[(i, j)] = sigma_sigma[(i, j)] + w2 + (di + dj) * w1 + di * dj * w0;
                hh_full[(i, j)] = hh_full[(i, j)] + w0;
            }
            for j in 0..act.saturating_sub(1) {
                sigma_h[(i, j)] = sigma_h[(i, j)] + w1 + di * w0;
            }
        }
        for j in 0..act.saturating_sub(1) {
            for k in 0..act.saturating_sub(1) {
                h_h[(j, k)] = h_h[(j, k)] + w0;
            }
        }
    }

    let mut h_delta = Matrix::zeros(n + 1, n);
    for j in 0..n {
        let bj = net.b()[j];
        if !iv.contains_open(bj) {
            continue;
        }
        let wv = w.eval(bj);
        for i in 0..=n {
            h_delta[(i, j)] = wv * half_heaviside::<T>(i, j + 1);
        }
    }

    Ok(WeightedGrams { sigma_sigma, sigma_h, h_h, hh_full, h_delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Interval;
    use crate::problems::ProblemConfig;
    use approx::assert_relative_eq;

    fn q() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    fn unit() -> Interval<f64> {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn ls_zero_target() -> Problem<f64> {
        Problem::least_squares(
            unit(),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::constant(0.0),
            0.0,
            1.0,
        )
        .unwrap()
    }

    fn dr_plain(gamma: f64) -> Problem<f64> {
        Problem::diffusion_reaction(
            unit(),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            None,
            0.0,
            0.0,
            gamma,
            1.0,
            0.0,
        )
        .unwrap()
    }

    fn kink_net() -> Network<f64> {
        Network::new(unit(), 0.0, vec![1.0, -2.0], vec![0.5]).unwrap()
    }

    #[test]
    fn objective_closed_forms() {
        let affine = Network::new(unit(), 0.0, vec![1.0], vec![]).unwrap();
        assert_relative_eq!(objective(&ls_zero_target(), &affine, &q()).unwrap(), 1.0 / 6.0, epsilon = 1e-13);

        assert_relative_eq!(objective(&dr_plain(0.0), &kink_net(), &q()).unwrap(), 0.5, epsilon = 1e-13);

        let cfg = ProblemConfig {
            kind: Some("ls".into()),
            interval: Some([0.0, 1.0]),
            r: Some("1".into()),
            u: Some("x".into()),
            ..Default::default()
        };
        let exact: Problem<f64> = cfg.build(0).unwrap();
        assert!(objective(&exact, &affine, &q()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn grad_c_closed_forms() {
        let affine = Network::new(unit(), 0.0, vec![1.0], vec![]).unwrap();
        let g = grad_c(&ls_zero_target(), &affine, &q()).unwrap();
        assert_relative_eq!(g[0], 1.0 / 3.0, epsilon = 1e-13);

        let cfg = ProblemConfig {
            kind: Some("ls".into()),
            interval: Some([0.0, 1.0]),
            r: Some("1".into()),
            u: Some("x".into()),
            ..Default::default()
        };
        let exact: Problem<f64> = cfg.build(0).unwrap();
        assert!(grad_c(&exact, &affine, &q()).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn g_closed_forms() {
        let g = compute_g(&ls_zero_target(), &kink_net()).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-15);

        let g = compute_g(&dr_plain(0.0), &kink_net()).unwrap();
        // a' = 0 so the slope term vanishes; r = 0 and f = 0 here.
        assert_relative_eq!(g[0], 0.0, epsilon = 1e-15);

        let var_a = Problem::diffusion_reaction(
            unit(),
            CoefficientFunction::from_fns(|x: f64| x, Some(std::sync::Arc::new(|_| 1.0)), vec![]),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            None,
            0.0,
            0.0,
            0.0,
            1e-9,
            0.0,
        );
        // a(x) = x is positive only away from 0; relax the bound via mu tiny
        // but keep the instance: a(0) = 0 violates mu > 0, so shift a up.
        assert!(var_a.is_err() || var_a.is_ok());
        let shifted = Problem::diffusion_reaction(
            Interval::new(0.5, 1.5).unwrap(),
            CoefficientFunction::from_fns(|x: f64| x, Some(std::sync::Arc::new(|_| 1.0)), vec![]),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            None,
            0.0,
            0.0,
            0.0,
            0.5,
            0.0,
        )
        .unwrap();
        let net = Network::new(Interval::new(0.5, 1.5).unwrap(), 0.0, vec![2.0, -2.0], vec![1.0]).unwrap();
        let g = compute_g(&shifted, &net).unwrap();
        assert_relative_eq!(g[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn f_vec_closed_forms() {
        let sys = assemble(&ls_zero_target(), &kink_net(), &q()).unwrap();
        assert_relative_eq!(sys.f_vec[0], -0.125, epsilon = 1e-13);

        let cfg = ProblemConfig {
            kind: Some("ls".into()),
            interval: Some([0.0, 1.0]),
            r: Some("1".into()),
            u: Some("x".into()),
            ..Default::default()
        };
        let exact: Problem<f64> = cfg.build(0).unwrap();
        let rep = Network::new(unit(), 0.0, vec![1.0, 0.0], vec![0.5]).unwrap();
        let sys = assemble(&exact, &rep, &q()).unwrap();
        assert!(sys.f_vec[0].abs() < 1e-14);
    }

    #[test]
    fn grad_b_identity_is_exact_by_construction() {
        let sys = assemble(&ls_zero_target(), &kink_net(), &q()).unwrap();
        for j in 0..sys.n() {
            assert_eq!(sys.grad_b[j], kink_net().c()[j + 1] * sys.f_vec[j]);
        }
    }

    #[test]
    fn h11_closed_forms() {
        let net = Network::new(unit(), 0.0, vec![1.0, 1.0], vec![0.5]).unwrap();
        let h = assemble_h11(&ls_zero_target(), &net, &q()).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(h[(0, 1)], 5.0 / 48.0, epsilon = 1e-13);
        assert_relative_eq!(h[(1, 0)], 5.0 / 48.0, epsilon = 1e-13);
        assert_relative_eq!(h[(1, 1)], 1.0 / 24.0, epsilon = 1e-13);

        let h = assemble_h11(&dr_plain(0.0), &net, &q()).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0, epsilon = 1e-13);
        assert_relative_eq!(h[(0, 1)], 0.5, epsilon = 1e-13);
        assert_relative_eq!(h[(1, 1)], 0.5, epsilon = 1e-13);
    }

    #[test]
    fn h22_closed_forms() {
        let h = assemble_h22(&ls_zero_target(), &kink_net(), &q()).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0, epsilon = 1e-13);

        // DR with a constant and r = 1, f = 0 reproduces the LS value.
        let dr = Problem::diffusion_reaction(
            unit(),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::constant(0.0),
            None,
            0.0,
            0.0,
            0.0,
            1.0,
            1.0,
        )
        .unwrap();
        let h = assemble_h22(&dr, &kink_net(), &q()).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn h12_closed_forms() {
        let h = assemble_h12(&ls_zero_target(), &kink_net(), &q()).unwrap();
        // R - (int r Sigma H^T) D(c): entry (1, 0) = F_1 - (1/8)(-2).
        assert_relative_eq!(h[(1, 0)], 0.125, epsilon = 1e-13);
    }

    #[test]
    fn delta_block_uses_midpoint_heaviside() {
        let net = Network::new(unit(), 0.0, vec![0.5, 1.0, 1.0], vec![0.3, 0.7]).unwrap();
        let a = CoefficientFunction::constant(1.0);
        let grams = weighted_grams(&a, &net, &q()).unwrap();
        assert_eq!(grams.h_delta[(1, 0)], 0.5);
        assert_eq!(grams.h_delta[(0, 1)], 1.0);
        assert_eq!(grams.h_delta[(2, 0)], 0.0);
    }

    #[test]
    fn tail_structure_of_h_grams_is_exact() {
        let net = Network::new(unit(), 0.0, vec![1.0; 4], vec![0.2, 0.45, 0.8]).unwrap();
        let sys = assemble(&ls_zero_target(), &net, &q()).unwrap();
        let n = sys.n();
        for j in 0..n {
            for k in 0..n {
                let m = j.max(k);
                assert_eq!(sys.r_gram_h[(j, k)], sys.r_gram_h[(m, m)]);
            }
        }
    }

    #[test]
    fn degenerate_n0_assembles() {
        let affine = Network::new(unit(), 0.0, vec![2.0], vec![]).unwrap();
        let sys = assemble(&ls_zero_target(), &affine, &q()).unwrap();
        assert_eq!(sys.h11.rows(), 1);
        assert_eq!(sys.h22.rows(), 0);
        assert!(sys.g.is_empty() && sys.f_vec.is_empty());
    }

    #[test]
    fn h_blocks_are_symmetric() {
        let net = Network::new(unit(), 0.2, vec![0.9, -1.3, 0.8], vec![0.35, 0.6]).unwrap();
        let sys = assemble(&ls_zero_target(), &net, &q()).unwrap();
        assert!(sys.h11.asymmetry() <= 1e-13 * sys.h11.max_abs());
        assert!(sys.h22.asymmetry() <= 1e-13 * sys.h22.max_abs().max(1.0));
    }
}

//! Data fidelity terms comparing a candidate density with observations.
//!
//! The likelihood-based terms all derive from the negative log-likelihood
//! `S_0(v) = -(1/n) sum_i ln v(y_i)`. Because Newton linearizations of the
//! forward map can dip below zero, the working functional is the shifted
//! version
//!
//! ```text
//! S_tau(v) = int v dx - (1/n) sum_i ln(v(y_i) + tau) - tau int ln(v + tau) dx,
//! ```
//!
//! finite only where `v >= -tau/2` (checked on the quadrature nodes plus
//! element endpoints). The inner Newton solver minimizes a relaxed version
//! in which every logarithm continues below `tau/2` as its second-order
//! Taylor polynomial, so linearized candidates whose minimizer rides the
//! domain boundary keep a finite, smooth objective. Up to a data-dependent
//! constant, the expectation of `S_tau` is the shifted Kullback-Leibler
//! divergence
//!
//! ```text
//! KL(u + tau; v + tau) = int (v - u) - (u + tau) ln((v + tau)/(u + tau)) dx,
//! ```
//!
//! which is what the convergence analysis of the estimator measures. The
//! quadratic alternative `1/2 ||v - u_hat||^2` compares against a kernel
//! density estimate `u_hat` built from the same observations.
//!
//! All integrals use the same per-element Gauss rule as the finite element
//! assembly, so gradients returned here are exact gradients of the values
//! returned here.

use nalgebra::DVector;

use crate::linalg::BandMatrix;
use crate::mesh::{shape, FemFunction, Mesh, GAUSS_NODES, GAUSS_WEIGHTS};
use crate::sde::ObservationSet;
use crate::{Error, Result};

/// Value of a fidelity term, with its gradient with respect to the density
/// coefficients when the value is finite and the term is differentiable.
#[derive(Debug, Clone)]
pub struct FidelityValue {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
}

impl FidelityValue {
    fn infinite() -> Self {
        FidelityValue {
            value: f64::INFINITY,
            gradient: None,
        }
    }
}

/// `-(1/n) sum_i ln v(y_i)`, infinite as soon as one observation sees a
/// nonpositive density value.
pub fn neg_log_likelihood(obs: &ObservationSet, v: &FemFunction) -> FidelityValue {
    let n = obs.n() as f64;
    let mut acc = 0.0;
    for &y in obs.points() {
        let vy = v.eval(y);
        if vy <= 0.0 {
            return FidelityValue::infinite();
        }
        acc -= vy.ln();
    }
    FidelityValue {
        value: acc / n,
        gradient: None,
    }
}

/// The shifted likelihood fidelity `S_tau`; requires `tau > 0`.
///
/// Returns the value together with its gradient
/// `g_j = int phi_j dx - (1/n) sum_i phi_j(y_i)/(v(y_i)+tau)
///        - tau int phi_j/(v+tau) dx`
/// whenever the domain constraint `min v >= -tau/2` holds.
pub fn shifted_fidelity(
    obs: &ObservationSet,
    v: &FemFunction,
    tau: f64,
) -> Result<FidelityValue> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("shift must be positive, got {tau}")));
    }
    if v.min_on_check_grid() < -0.5 * tau {
        return Ok(FidelityValue::infinite());
    }
    let mesh = v.mesh();
    let n_dofs = mesh.n_dofs();
    let h = mesh.h();
    let mut value = 0.0;
    let mut grad = DVector::zeros(n_dofs);

    // Quadrature part: int v dx - tau int ln(v + tau) dx.
    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let w = h * GAUSS_WEIGHTS[q];
            let nv = shape(GAUSS_NODES[q]);
            let x = left + h * GAUSS_NODES[q];
            let vq = v.eval(x);
            let shifted = vq + tau;
            // The domain check bounds grid values by -tau/2, so v + tau is
            // at least tau/2 > 0 at every quadrature node.
            value += w * (vq - tau * shifted.ln());
            for l in 0..4 {
                grad[base + l] += w * nv[l] * (1.0 - tau / shifted);
            }
        }
    }

    // Observation part: -(1/n) sum ln(v(y_i) + tau).
    let n = obs.n() as f64;
    for &y in obs.points() {
        let vy = v.eval(y) + tau;
        if vy <= 0.0 {
            // Observations can sit between check-grid points; treat an
            // unlucky nonpositive shifted value as outside the domain.
            return Ok(FidelityValue::infinite());
        }
        value -= vy.ln() / n;
        let (e, xi) = mesh.locate(y);
        let nv = shape(xi);
        for l in 0..4 {
            grad[3 * e + l] -= nv[l] / (vy * n);
        }
    }

    Ok(FidelityValue {
        value,
        gradient: Some(grad),
    })
}

/// Hessian of [`shifted_fidelity`] with respect to the density
/// coefficients. Positive semidefinite and banded like the mass matrix.
pub fn shifted_fidelity_hessian(
    obs: &ObservationSet,
    v: &FemFunction,
    tau: f64,
) -> Result<BandMatrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("shift must be positive, got {tau}")));
    }
    if v.min_on_check_grid() < -0.5 * tau {
        return Err(Error::invalid(
            "Hessian requested outside the domain of the shifted fidelity",
        ));
    }
    let mesh = v.mesh();
    let h = mesh.h();
    let mut hess = BandMatrix::zeros(mesh.n_dofs(), crate::fem::BAND);

    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let w = h * GAUSS_WEIGHTS[q];
            let nv = shape(GAUSS_NODES[q]);
            let x = left + h * GAUSS_NODES[q];
            let shifted = v.eval(x) + tau;
            let scale = w * tau / (shifted * shifted);
            for i in 0..4 {
                for j in 0..4 {
                    hess.add(base + i, base + j, scale * nv[i] * nv[j]);
                }
            }
        }
    }
    let n = obs.n() as f64;
    for &y in obs.points() {
        let vy = v.eval(y) + tau;
        if vy <= 0.0 {
            return Err(Error::invalid(
                "Hessian requested outside the domain of the shifted fidelity",
            ));
        }
        let (e, xi) = mesh.locate(y);
        let nv = shape(xi);
        let scale = 1.0 / (n * vy * vy);
        for i in 0..4 {
            for j in 0..4 {
                hess.add(3 * e + i, 3 * e + j, scale * nv[i] * nv[j]);
            }
        }
    }
    Ok(hess)
}

/// Value and first derivative of the negative logarithm continued below
/// `w0` by its second-order Taylor polynomial at `w0`:
///
/// ```text
/// ext(w) = -ln w0 - (w - w0)/w0 + (w - w0)^2 / (2 w0^2)   for w < w0.
/// ```
///
/// Value, slope, and curvature match at `w0`, so the composite function is
/// convex and twice continuously differentiable on the whole real line.
fn taylor_tail(w: f64, w0: f64) -> (f64, f64) {
    let d = w - w0;
    let inv = 1.0 / w0;
    let value = -w0.ln() - inv * d + 0.5 * (inv * d) * (inv * d);
    let slope = -inv + inv * inv * d;
    (value, slope)
}

/// Relaxation of [`shifted_fidelity`] minimized by the inner Newton solver.
///
/// Each logarithm argument below `tau/2` is continued by its second-order
/// Taylor polynomial, so the functional is finite, convex, and twice
/// differentiable on the whole coefficient space instead of jumping to
/// infinity across `min v = -tau/2`. Wherever every evaluated shifted value
/// stays at or above `tau/2` it agrees with `S_tau` term by term. The
/// continuation's curvature `(tau/2)^{-2}` acts as a stiff quadratic
/// penalty, so minimizers can ride the constraint boundary instead of
/// trapping a backtracking line search against an infinite wall.
pub(crate) fn relaxed_shifted_fidelity(
    obs: &ObservationSet,
    v: &FemFunction,
    tau: f64,
) -> Result<FidelityValue> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("shift must be positive, got {tau}")));
    }
    let w0 = 0.5 * tau;
    let mesh = v.mesh();
    let n_dofs = mesh.n_dofs();
    let h = mesh.h();
    let mut value = 0.0;
    let mut grad = DVector::zeros(n_dofs);

    // Quadrature part: int v dx + tau int ext(v + tau) dx. The feasible
    // branch repeats the expressions of `shifted_fidelity` verbatim so
    // in-domain evaluations agree exactly, bit for bit.
    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let w = h * GAUSS_WEIGHTS[q];
            let nv = shape(GAUSS_NODES[q]);
            let x = left + h * GAUSS_NODES[q];
            let vq = v.eval(x);
            let shifted = vq + tau;
            if shifted >= w0 {
                value += w * (vq - tau * shifted.ln());
                for l in 0..4 {
                    grad[base + l] += w * nv[l] * (1.0 - tau / shifted);
                }
            } else {
                let (ev, ed) = taylor_tail(shifted, w0);
                value += w * (vq + tau * ev);
                for l in 0..4 {
                    grad[base + l] += w * nv[l] * (1.0 + tau * ed);
                }
            }
        }
    }

    // Observation part: (1/n) sum ext(v(y_i) + tau).
    let n = obs.n() as f64;
    for &y in obs.points() {
        let vy = v.eval(y) + tau;
        let (e, xi) = mesh.locate(y);
        let nv = shape(xi);
        if vy >= w0 {
            value -= vy.ln() / n;
            for l in 0..4 {
                grad[3 * e + l] -= nv[l] / (vy * n);
            }
        } else {
            let (ev, ed) = taylor_tail(vy, w0);
            value += ev / n;
            for l in 0..4 {
                grad[3 * e + l] += nv[l] * ed / n;
            }
        }
    }

    Ok(FidelityValue {
        value,
        gradient: Some(grad),
    })
}

/// Hessian of [`relaxed_shifted_fidelity`]. Each evaluation point
/// contributes curvature `1/max(v + tau, tau/2)^2`, so the matrix is
/// positive semidefinite everywhere and equals the Hessian of
/// [`shifted_fidelity`] wherever the domain constraint holds at the
/// evaluation points.
pub(crate) fn relaxed_shifted_fidelity_hessian(
    obs: &ObservationSet,
    v: &FemFunction,
    tau: f64,
) -> Result<BandMatrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("shift must be positive, got {tau}")));
    }
    let w0 = 0.5 * tau;
    let mesh = v.mesh();
    let h = mesh.h();
    let mut hess = BandMatrix::zeros(mesh.n_dofs(), crate::fem::BAND);

    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let w = h * GAUSS_WEIGHTS[q];
            let nv = shape(GAUSS_NODES[q]);
            let x = left + h * GAUSS_NODES[q];
            let shifted = (v.eval(x) + tau).max(w0);
            let scale = w * tau / (shifted * shifted);
            for i in 0..4 {
                for j in 0..4 {
                    hess.add(base + i, base + j, scale * nv[i] * nv[j]);
                }
            }
        }
    }
    let n = obs.n() as f64;
    for &y in obs.points() {
        let vy = (v.eval(y) + tau).max(w0);
        let (e, xi) = mesh.locate(y);
        let nv = shape(xi);
        let scale = 1.0 / (n * vy * vy);
        for i in 0..4 {
            for j in 0..4 {
                hess.add(3 * e + i, 3 * e + j, scale * nv[i] * nv[j]);
            }
        }
    }
    Ok(hess)
}

/// Shifted Kullback-Leibler divergence
/// `KL(u + tau; v + tau) = int (v - u) - (u + tau) ln((v + tau)/(u + tau)) dx`
/// for a nonnegative reference `u` and `tau >= 0`. With `tau = 0` the usual
/// conventions apply: integrand contributions with `u = 0` are `v - u`, and
/// any point with `u > 0 >= v` makes the divergence infinite.
pub fn kullback_leibler(u: &FemFunction, v: &FemFunction, tau: f64) -> Result<FidelityValue> {
    if !u.same_mesh(v) {
        return Err(Error::MeshMismatch(
            "divergence operands live on different meshes".into(),
        ));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid(format!(
            "shift must be nonnegative, got {tau}"
        )));
    }
    let mesh = u.mesh();
    let h = mesh.h();
    let mut value = 0.0;
    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        for q in 0..5 {
            let w = h * GAUSS_WEIGHTS[q];
            let x = left + h * GAUSS_NODES[q];
            let uq = u.eval(x) + tau;
            let vq = v.eval(x) + tau;
            let mut term = vq - uq;
            if uq > 0.0 {
                if vq <= 0.0 {
                    return Ok(FidelityValue::infinite());
                }
                term -= uq * (vq / uq).ln();
            }
            value += w * term;
        }
    }
    Ok(FidelityValue {
        value,
        gradient: None,
    })
}

/// The divergence actually controlled by the shifted fidelity: the shifted
/// Kullback-Leibler divergence extended by `+infinity` wherever the domain
/// constraint `v >= -tau/2` fails.
pub fn t_tau(u: &FemFunction, v: &FemFunction, tau: f64) -> Result<FidelityValue> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("shift must be positive, got {tau}")));
    }
    if v.min_on_check_grid() < -0.5 * tau {
        return Ok(FidelityValue::infinite());
    }
    kullback_leibler(u, v, tau)
}

/// Quadratic fidelity `1/2 ||v - u_hat||_{L2}^2` with gradient
/// `g_j = int (v - u_hat) phi_j dx`.
pub fn l2_fidelity(u_hat: &FemFunction, v: &FemFunction) -> Result<FidelityValue> {
    if !u_hat.same_mesh(v) {
        return Err(Error::MeshMismatch(
            "fidelity operands live on different meshes".into(),
        ));
    }
    let mesh = v.mesh();
    let h = mesh.h();
    let mut value = 0.0;
    let mut grad = DVector::zeros(mesh.n_dofs());
    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let w = h * GAUSS_WEIGHTS[q];
            let nv = shape(GAUSS_NODES[q]);
            let x = left + h * GAUSS_NODES[q];
            let d = v.eval(x) - u_hat.eval(x);
            value += 0.5 * w * d * d;
            for l in 0..4 {
                grad[base + l] += w * d * nv[l];
            }
        }
    }
    Ok(FidelityValue {
        value,
        gradient: Some(grad),
    })
}

/// Silverman's rule-of-thumb bandwidth for a Gaussian kernel:
/// `0.9 min(sd, IQR/1.34) n^{-1/5}`. Quantiles are linearly interpolated
/// order statistics; `points` must be sorted.
pub fn silverman_bandwidth(points: &[f64]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = points.iter().sum::<f64>() / nf;
    let var = points.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (nf - 1.0);
    let quantile = |p: f64| {
        let t = p * (nf - 1.0);
        let k = (t.floor() as usize).min(n - 2);
        let frac = t - k as f64;
        points[k] * (1.0 - frac) + points[k + 1] * frac
    };
    let iqr = quantile(0.75) - quantile(0.25);
    let scale = var.sqrt().min(iqr / 1.34);
    0.9 * scale * nf.powf(-0.2)
}

/// Gaussian kernel density estimate of the observations, restricted to the
/// mesh interval and renormalized to unit mass there.
///
/// Degenerate samples (zero spread) fall back to a bandwidth of 1% of the
/// interval so ill-posed inputs still produce a usable density.
pub fn kde_density(obs: &ObservationSet, mesh: Mesh) -> FemFunction {
    let pts = obs.points();
    let n = pts.len() as f64;
    let (a, b) = mesh.domain();
    let mut bw = silverman_bandwidth(pts);
    if !(bw.is_finite() && bw > 0.0) {
        bw = 0.01 * (b - a);
    }
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    let mut f = FemFunction::interpolate(mesh, |x| {
        let mut acc = 0.0;
        for &y in pts {
            let t = (x - y) / bw;
            acc += (-0.5 * t * t).exp();
        }
        norm * acc
    });
    let total = f.integral();
    if total > 0.0 {
        *f.coeffs_mut() /= total;
    }
    f
}

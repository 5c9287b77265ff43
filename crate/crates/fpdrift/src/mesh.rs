//! Uniform 1D meshes and piecewise-cubic Lagrange functions.
//!
//! Every element carries four equispaced nodes, so a mesh with `n` elements
//! has `3n + 1` global degrees of freedom and two elements share exactly one
//! node. Reference coordinates live on `[0, 1]`; the global node `3e + l`
//! sits at `a + h (e + l/3)`.
//!
//! Integrals are evaluated with 5-point Gauss-Legendre quadrature per
//! element, which is exact for polynomials of degree nine. That covers every
//! bilinear form assembled in [`crate::fem`] (the worst case, a product of
//! two cubics and a quadratic derivative, has degree eight).

use nalgebra::DVector;

use crate::{Error, Result};

/// 5-point Gauss-Legendre nodes on the reference interval `[0, 1]`.
pub const GAUSS_NODES: [f64; 5] = [
    0.046_910_077_030_668_00,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_332_0,
];

/// Matching quadrature weights, summing to one.
pub const GAUSS_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_44,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

/// Number of local nodes (and shape functions) per element.
pub const NODES_PER_ELEMENT: usize = 4;

/// Cubic Lagrange shape functions on `[0, 1]` with nodes at `0, 1/3, 2/3, 1`.
pub fn shape(xi: f64) -> [f64; 4] {
    [
        ((-4.5 * xi + 9.0) * xi - 5.5) * xi + 1.0,
        ((13.5 * xi - 22.5) * xi + 9.0) * xi,
        ((-13.5 * xi + 18.0) * xi - 4.5) * xi,
        ((4.5 * xi - 4.5) * xi + 1.0) * xi,
    ]
}

/// Derivatives of [`shape`] with respect to the reference coordinate.
pub fn shape_deriv(xi: f64) -> [f64; 4] {
    [
        (-13.5 * xi + 18.0) * xi - 5.5,
        (40.5 * xi - 45.0) * xi + 9.0,
        (-40.5 * xi + 36.0) * xi - 4.5,
        (13.5 * xi - 9.0) * xi + 1.0,
    ]
}

/// Uniform mesh of the interval `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    a: f64,
    b: f64,
    n_elements: usize,
}

impl Mesh {
    pub fn new(a: f64, b: f64, n_elements: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!(
                "mesh interval must be finite with a < b, got ({a}, {b})"
            )));
        }
        if n_elements == 0 {
            return Err(Error::invalid("mesh needs at least one element"));
        }
        Ok(Mesh { a, b, n_elements })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Element width.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_elements as f64
    }

    /// Number of global degrees of freedom, `3 n + 1`.
    pub fn n_dofs(&self) -> usize {
        3 * self.n_elements + 1
    }

    /// Global index of local node `l` of element `e`.
    pub fn dof(&self, element: usize, local: usize) -> usize {
        3 * element + local
    }

    /// Coordinate of global node `i`.
    pub fn node_x(&self, i: usize) -> f64 {
        let t = i as f64 / (self.n_dofs() - 1) as f64;
        self.a + t * (self.b - self.a)
    }

    /// Left endpoint of element `e`.
    pub fn element_left(&self, e: usize) -> f64 {
        self.a + self.h() * e as f64
    }

    /// Element containing `x` and the reference coordinate of `x` inside it.
    /// Points outside the interval are clamped to the nearest element.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.h();
        let raw = ((x - self.a) / h).floor();
        let e = (raw.max(0.0) as usize).min(self.n_elements - 1);
        let xi = ((x - self.element_left(e)) / h).clamp(0.0, 1.0);
        (e, xi)
    }

    /// Global quadrature rule: `(x, w)` pairs covering the whole interval.
    pub fn quadrature(&self) -> Vec<(f64, f64)> {
        let h = self.h();
        let mut pts = Vec::with_capacity(5 * self.n_elements);
        for e in 0..self.n_elements {
            let left = self.element_left(e);
            for q in 0..5 {
                pts.push((left + h * GAUSS_NODES[q], h * GAUSS_WEIGHTS[q]));
            }
        }
        pts
    }
}

/// A piecewise-cubic function identified by its nodal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction {
    mesh: Mesh,
    coeffs: DVector<f64>,
}

impl FemFunction {
    pub fn new(mesh: Mesh, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != mesh.n_dofs() {
            return Err(Error::MeshMismatch(format!(
                "expected {} coefficients, got {}",
                mesh.n_dofs(),
                coeffs.len()
            )));
        }
        Ok(FemFunction { mesh, coeffs })
    }

    pub fn zeros(mesh: Mesh) -> Self {
        FemFunction {
            mesh,
            coeffs: DVector::zeros(mesh.n_dofs()),
        }
    }

    /// Nodal interpolant of `f`. Exact whenever `f` is piecewise cubic on
    /// the mesh, in particular for global polynomials up to degree three.
    pub fn interpolate(mesh: Mesh, f: impl Fn(f64) -> f64) -> Self {
        let coeffs = DVector::from_fn(mesh.n_dofs(), |i, _| f(mesh.node_x(i)));
        FemFunction { mesh, coeffs }
    }

    pub fn mesh(&self) -> Mesh {
        self.mesh
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<f64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (e, xi) = self.mesh.locate(x);
        let n = shape(xi);
        let base = 3 * e;
        (0..4).map(|l| self.coeffs[base + l] * n[l]).sum()
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let (e, xi) = self.mesh.locate(x);
        let dn = shape_deriv(xi);
        let base = 3 * e;
        let s: f64 = (0..4).map(|l| self.coeffs[base + l] * dn[l]).sum();
        s / self.mesh.h()
    }

    /// Exact integral over the whole interval (Newton-Cotes weights of the
    /// cubic nodal basis: `h (c0 + 3 c1 + 3 c2 + c3) / 8` per element).
    pub fn integral(&self) -> f64 {
        let h = self.mesh.h();
        let c = &self.coeffs;
        let mut total = 0.0;
        for e in 0..self.mesh.n_elements() {
            let b = 3 * e;
            total += h * (c[b] + 3.0 * c[b + 1] + 3.0 * c[b + 2] + c[b + 3]) / 8.0;
        }
        total
    }

    /// Exact L2 norm over the whole interval.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_on(self.mesh.a(), self.mesh.b())
    }

    /// Exact L2 norm restricted to `(lo, hi)`. Each element is clipped to
    /// the window and the squared cubic (degree six) is integrated with the
    /// 5-point rule, which stays exact on sub-intervals.
    pub fn l2_norm_on(&self, lo: f64, hi: f64) -> f64 {
        let h = self.mesh.h();
        let mut acc = 0.0;
        for e in 0..self.mesh.n_elements() {
            let left = self.mesh.element_left(e);
            let right = left + h;
            let lo_e = lo.max(left);
            let hi_e = hi.min(right);
            if hi_e <= lo_e {
                continue;
            }
            let base = 3 * e;
            for q in 0..5 {
                let x = lo_e + (hi_e - lo_e) * GAUSS_NODES[q];
                let xi = (x - left) / h;
                let n = shape(xi);
                let v: f64 = (0..4).map(|l| self.coeffs[base + l] * n[l]).sum();
                acc += (hi_e - lo_e) * GAUSS_WEIGHTS[q] * v * v;
            }
        }
        acc.sqrt()
    }

    /// Exact supremum norm. Per element the extrema of the cubic are the
    /// endpoints plus the real roots of its derivative.
    pub fn sup_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for e in 0..self.mesh.n_elements() {
            let b = 3 * e;
            let (c0, c1, c2, c3) = (
                self.coeffs[b],
                self.coeffs[b + 1],
                self.coeffs[b + 2],
                self.coeffs[b + 3],
            );
            // Monomial coefficients of the local cubic in the reference coordinate.
            let a3 = -4.5 * c0 + 13.5 * c1 - 13.5 * c2 + 4.5 * c3;
            let a2 = 9.0 * c0 - 22.5 * c1 + 18.0 * c2 - 4.5 * c3;
            let a1 = -5.5 * c0 + 9.0 * c1 - 4.5 * c2 + c3;
            let a0 = c0;
            let eval = |xi: f64| ((a3 * xi + a2) * xi + a1) * xi + a0;
            best = best.max(eval(0.0).abs()).max(eval(1.0).abs());
            // Interior critical points: roots of 3 a3 xi^2 + 2 a2 xi + a1.
            let (qa, qb, qc) = (3.0 * a3, 2.0 * a2, a1);
            if qa.abs() < 1e-300 {
                if qb.abs() > 1e-300 {
                    let r = -qc / qb;
                    if (0.0..=1.0).contains(&r) {
                        best = best.max(eval(r).abs());
                    }
                }
            } else {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    for r in [(-qb + s) / (2.0 * qa), (-qb - s) / (2.0 * qa)] {
                        if (0.0..=1.0).contains(&r) {
                            best = best.max(eval(r).abs());
                        }
                    }
                }
            }
        }
        best
    }

    /// Minimum over all quadrature nodes and element endpoints. This is the
    /// grid on which positivity and shift-domain constraints are checked.
    pub fn min_on_check_grid(&self) -> f64 {
        let mut m = f64::INFINITY;
        for e in 0..self.mesh.n_elements() {
            let base = 3 * e;
            for &xi in GAUSS_NODES.iter().chain([0.0, 1.0].iter()) {
                let n = shape(xi);
                let v: f64 = (0..4).map(|l| self.coeffs[base + l] * n[l]).sum();
                m = m.min(v);
            }
        }
        m
    }

    pub fn same_mesh(&self, other: &FemFunction) -> bool {
        self.mesh == other.mesh
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> Mesh {
        Mesh::new(-1.0, 1.0, 8).unwrap()
    }

    #[test]
    fn shape_functions_are_a_partition_of_unity() {
        for k in 0..=20 {
            let xi = k as f64 / 20.0;
            let s: f64 = shape(xi).iter().sum();
            let ds: f64 = shape_deriv(xi).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            assert!(ds.abs() < 1e-12);
        }
    }

    #[test]
    fn shape_functions_are_nodal() {
        let nodes = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (i, &xi) in nodes.iter().enumerate() {
            let n = shape(xi);
            for (j, &v) in n.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-14, "N_{j}({xi}) = {v}");
            }
        }
    }

    #[test]
    fn interpolation_reproduces_cubics_exactly() {
        let m = mesh();
        let f = |x: f64| -5.0 * x * x * x - 2.0 * x - 0.25;
        let g = FemFunction::interpolate(m, f);
        for k in 0..=100 {
            let x = -1.0 + 2.0 * k as f64 / 100.0;
            assert!((g.eval(x) - f(x)).abs() < 1e-12, "x = {x}");
        }
        let df = |x: f64| -15.0 * x * x - 2.0;
        for k in 0..=100 {
            let x = -1.0 + 2.0 * k as f64 / 100.0;
            assert!((g.eval_deriv(x) - df(x)).abs() < 1e-11, "x = {x}");
        }
    }

    #[test]
    fn integral_matches_closed_form() {
        let m = mesh();
        // int_{-1}^{1} (x^3 + x^2 + 1) dx = 2/3 + 2
        let g = FemFunction::interpolate(m, |x| x * x * x + x * x + 1.0);
        assert!((g.integral() - (2.0 / 3.0 + 2.0)).abs() < 1e-13);
    }

    #[test]
    fn l2_norm_matches_closed_form() {
        let m = mesh();
        // ||x||_{L2(-1,1)}^2 = 2/3, restricted to (0,1): 1/3.
        let g = FemFunction::interpolate(m, |x| x);
        assert!((g.l2_norm() - (2.0f64 / 3.0).sqrt()).abs() < 1e-13);
        assert!((g.l2_norm_on(0.0, 1.0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn l2_norm_on_unaligned_window_is_exact() {
        let m = mesh();
        // Window (-0.8, 0.8) does not align with the 8-element grid of width
        // 0.25; the clipped rule must still integrate the cubic exactly:
        // int_{-c}^{c} x^6 dx = 2 c^7 / 7.
        let g = FemFunction::interpolate(m, |x| x * x * x);
        let want = (2.0 * 0.8f64.powi(7) / 7.0).sqrt();
        assert!((g.l2_norm_on(-0.8, 0.8) - want).abs() < 1e-13);
    }

    #[test]
    fn sup_norm_finds_interior_extrema() {
        let m = mesh();
        // |x^3 - x| has interior maxima 2/(3 sqrt 3) at x = +-1/sqrt(3),
        // which is larger than any nodal value on this mesh only by a hair;
        // use the exact value as reference.
        let g = FemFunction::interpolate(m, |x| x * x * x - x);
        let want = 2.0 / (3.0 * 3.0f64.sqrt());
        assert!((g.sup_norm() - want).abs() < 1e-12);
    }

    #[test]
    fn locate_clamps_outside_points() {
        let m = mesh();
        assert_eq!(m.locate(-5.0), (0, 0.0));
        assert_eq!(m.locate(5.0), (7, 1.0));
    }

    #[test]
    fn quadrature_weights_cover_the_interval() {
        let m = mesh();
        let total: f64 = m.quadrature().iter().map(|&(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_rule_is_exact_to_degree_nine() {
        // int_0^1 xi^9 dxi = 1/10 on the reference element.
        let val: f64 = (0..5)
            .map(|q| GAUSS_WEIGHTS[q] * GAUSS_NODES[q].powi(9))
            .sum();
        assert!((val - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mismatched_coefficients_are_rejected() {
        let m = mesh();
        let bad = DVector::zeros(5);
        assert!(FemFunction::new(m, bad).is_err());
    }
}

//! Fokker-Planck forward solver on cubic Lagrange elements.
//!
//! For a drift `mu` and constant diffusion `sigma` the stationary density
//! `u` solves the weak no-flux problem
//!
//! ```text
//! a_mu(u, v) = int_D ( -mu u v' + (sigma^2/2) u' v' ) dx = 0   for all v,
//! int_D u dx = 1.
//! ```
//!
//! Natural boundary conditions encode a vanishing probability flux at both
//! ends, which for constant extension of the drift beyond the interval is
//! the transparent condition: no probability mass is exchanged with the
//! exterior. The normalization is enforced through a saddle-point system
//!
//! ```text
//! [ L_mu  c ] [u     ]   [0]
//! [ c'    0 ] [lambda] = [1],      c_i = int_D phi_i dx,
//! ```
//!
//! whose multiplier vanishes at the solution because constants are in the
//! kernel of the adjoint: summing the first block row against the constant
//! test function gives `lambda (b - a) = 0` exactly.
//!
//! The derivative of the drift-to-density map in direction `h` solves the
//! same saddle system with right-hand side `b_i = int_D u h phi_i' dx` and
//! zero mean instead of unit mass; its adjoint solves the transposed system.
//! The parabolic (time-dependent) equation is integrated by implicit Euler,
//! which conserves mass identically because the constant test function
//! again annihilates `L_mu`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{BandCholesky, BandMatrix, DenseLu};
use crate::mesh::{shape, shape_deriv, FemFunction, Mesh, GAUSS_NODES, GAUSS_WEIGHTS};
use crate::{Error, Result};

/// Half-bandwidth of all assembled matrices: degrees of freedom interact
/// only within one element, and neighbors share one node.
pub const BAND: usize = 3;

/// A drift coefficient: piecewise cubic inside the interval, extended by
/// its boundary values outside. Evaluation anywhere on the real line is
/// well defined, which the path simulator relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    f: FemFunction,
}

impl DriftField {
    pub fn new(f: FemFunction) -> Self {
        DriftField { f }
    }

    pub fn from_fn(mesh: Mesh, f: impl Fn(f64) -> f64) -> Self {
        DriftField {
            f: FemFunction::interpolate(mesh, f),
        }
    }

    pub fn zeros(mesh: Mesh) -> Self {
        DriftField {
            f: FemFunction::zeros(mesh),
        }
    }

    /// Value of the drift; outside `(a, b)` the boundary value is used.
    pub fn eval(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    pub fn fem(&self) -> &FemFunction {
        &self.f
    }

    pub fn into_fem(self) -> FemFunction {
        self.f
    }

    pub fn mesh(&self) -> Mesh {
        self.f.mesh()
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        self.f.coeffs()
    }

    pub fn sup_norm(&self) -> f64 {
        self.f.sup_norm()
    }
}

/// A probability density in the finite element space together with the
/// diagnostics of the solve that produced it.
#[derive(Debug, Clone)]
pub struct Density {
    pub f: FemFunction,
    /// `int u - 1` as computed from the discrete ones vector.
    pub norm_residual: f64,
    /// Lagrange multiplier of the normalization constraint.
    pub lagrange: f64,
}

impl Density {
    pub fn min_value(&self) -> f64 {
        self.f.min_on_check_grid()
    }

    pub fn integral(&self) -> f64 {
        self.f.integral()
    }
}

/// All matrices of the discretized problem for one drift.
pub struct AssembledSystem {
    mesh: Mesh,
    sigma: f64,
    /// `int (sigma^2/2) phi_i' phi_j'`.
    pub stiffness: BandMatrix,
    /// `int -mu phi_j phi_i'` (row = test function).
    pub advection: BandMatrix,
    /// `int phi_i phi_j`.
    pub mass: BandMatrix,
    /// `int phi_i phi_j + phi_i' phi_j'`.
    pub h1_gram: BandMatrix,
    /// `int phi_i`.
    pub ones: DVector<f64>,
    saddle_lu: OnceLock<DenseLu>,
    saddle_lu_t: OnceLock<DenseLu>,
    mass_chol: OnceLock<BandCholesky>,
}

/// Builds the stiffness, advection, mass and H1 Gram matrices for `drift`
/// and `sigma` on `mesh`. The drift is evaluated at the quadrature points.
pub fn assemble(mesh: Mesh, drift: &DriftField, sigma: f64) -> Result<AssembledSystem> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "diffusion coefficient must be positive, got {sigma}"
        )));
    }
    if drift.mesh() != mesh {
        return Err(Error::MeshMismatch(
            "drift is defined on a different mesh".into(),
        ));
    }
    let n = mesh.n_dofs();
    let h = mesh.h();
    let half_sig2 = 0.5 * sigma * sigma;

    let mut stiffness = BandMatrix::zeros(n, BAND);
    let mut advection = BandMatrix::zeros(n, BAND);
    let mut mass = BandMatrix::zeros(n, BAND);
    let mut h1_gram = BandMatrix::zeros(n, BAND);
    let mut ones = DVector::zeros(n);

    let basis: Vec<([f64; 4], [f64; 4])> = GAUSS_NODES
        .iter()
        .map(|&xi| (shape(xi), shape_deriv(xi)))
        .collect();

    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let (nv, dn) = &basis[q];
            let x = left + h * GAUSS_NODES[q];
            let w = h * GAUSS_WEIGHTS[q];
            let mu = drift.eval(x);
            for i in 0..4 {
                let gi = base + i;
                ones[gi] += w * nv[i];
                let di = dn[i] / h;
                for j in 0..4 {
                    let gj = base + j;
                    let dj = dn[j] / h;
                    stiffness.add(gi, gj, w * half_sig2 * di * dj);
                    advection.add(gi, gj, -w * mu * nv[j] * di);
                    mass.add(gi, gj, w * nv[i] * nv[j]);
                    h1_gram.add(gi, gj, w * (nv[i] * nv[j] + di * dj));
                }
            }
        }
    }

    Ok(AssembledSystem {
        mesh,
        sigma,
        stiffness,
        advection,
        mass,
        h1_gram,
        ones,
        saddle_lu: OnceLock::new(),
        saddle_lu_t: OnceLock::new(),
        mass_chol: OnceLock::new(),
    })
}

impl AssembledSystem {
    pub fn mesh(&self) -> Mesh {
        self.mesh
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    /// The discrete Fokker-Planck operator `L = advection + stiffness`.
    pub fn operator(&self) -> BandMatrix {
        let mut l = self.stiffness.clone();
        l.add_scaled(1.0, &self.advection);
        l
    }

    fn saddle_matrix(&self) -> DMatrix<f64> {
        let n = self.n_dofs();
        let l = self.operator();
        let mut k = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in i.saturating_sub(BAND)..=(i + BAND).min(n - 1) {
                k[(i, j)] = l.get(i, j);
            }
            k[(i, n)] = self.ones[i];
            k[(n, i)] = self.ones[i];
        }
        k
    }

    fn saddle(&self) -> Result<&DenseLu> {
        if self.saddle_lu.get().is_none() {
            let lu = DenseLu::factor(self.saddle_matrix())?;
            let _ = self.saddle_lu.set(lu);
        }
        Ok(self.saddle_lu.get().expect("just initialized"))
    }

    fn saddle_transposed(&self) -> Result<&DenseLu> {
        if self.saddle_lu_t.get().is_none() {
            let lu = DenseLu::factor(self.saddle_matrix().transpose())?;
            let _ = self.saddle_lu_t.set(lu);
        }
        Ok(self.saddle_lu_t.get().expect("just initialized"))
    }

    fn mass_cholesky(&self) -> Result<&BandCholesky> {
        if self.mass_chol.get().is_none() {
            let chol = BandCholesky::factor(&self.mass)?;
            let _ = self.mass_chol.set(chol);
        }
        Ok(self.mass_chol.get().expect("just initialized"))
    }

    /// Right-hand side `b_i = int u h phi_i' dx` of the derivative problem.
    fn derivative_rhs(&self, u: &FemFunction, h_dir: &FemFunction) -> DVector<f64> {
        let mesh = self.mesh;
        let h = mesh.h();
        let mut b = DVector::zeros(mesh.n_dofs());
        for e in 0..mesh.n_elements() {
            let left = mesh.element_left(e);
            let base = 3 * e;
            for q in 0..5 {
                let x = left + h * GAUSS_NODES[q];
                let w = h * GAUSS_WEIGHTS[q];
                let dn = shape_deriv(GAUSS_NODES[q]);
                let uv = u.eval(x);
                let hv = h_dir.eval(x);
                for i in 0..4 {
                    b[base + i] += w * uv * hv * dn[i] / h;
                }
            }
        }
        b
    }

    /// Band matrix `B_ij = int u phi_j phi_i' dx`, the derivative right-hand
    /// side for all coordinate directions at once.
    fn derivative_rhs_matrix(&self, u: &FemFunction) -> BandMatrix {
        let mesh = self.mesh;
        let h = mesh.h();
        let mut bm = BandMatrix::zeros(mesh.n_dofs(), BAND);
        for e in 0..mesh.n_elements() {
            let left = mesh.element_left(e);
            let base = 3 * e;
            for q in 0..5 {
                let x = left + h * GAUSS_NODES[q];
                let w = h * GAUSS_WEIGHTS[q];
                let nv = shape(GAUSS_NODES[q]);
                let dn = shape_deriv(GAUSS_NODES[q]);
                let uv = u.eval(x);
                for i in 0..4 {
                    for j in 0..4 {
                        bm.add(base + i, base + j, w * uv * nv[j] * dn[i] / h);
                    }
                }
            }
        }
        bm
    }
}

/// Solves the stationary problem for the assembled drift.
pub fn solve_stationary(sys: &AssembledSystem) -> Result<Density> {
    let n = sys.n_dofs();
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = sys.saddle()?.solve_vec(&rhs);
    let f = FemFunction::new(sys.mesh, sol.rows(0, n).into_owned())?;
    let norm_residual = sys.ones.dot(f.coeffs()) - 1.0;
    Ok(Density {
        f,
        norm_residual,
        lagrange: sol[n],
    })
}

/// Directional derivative of the drift-to-density map at the drift behind
/// `u`, in direction `h_dir`. The result has zero mean.
pub fn solve_derivative(
    sys: &AssembledSystem,
    u: &Density,
    h_dir: &DriftField,
) -> Result<FemFunction> {
    if h_dir.mesh() != sys.mesh {
        return Err(Error::MeshMismatch(
            "perturbation lives on a different mesh".into(),
        ));
    }
    let n = sys.n_dofs();
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n)
        .copy_from(&sys.derivative_rhs(&u.f, h_dir.fem()));
    let sol = sys.saddle()?.solve_vec(&rhs);
    FemFunction::new(sys.mesh, sol.rows(0, n).into_owned())
}

/// The full Jacobian of the drift-to-density map at `u`, one column per
/// drift degree of freedom. Columns are the zero-mean solutions of the
/// derivative problem for the coordinate directions.
pub fn derivative_matrix(sys: &AssembledSystem, u: &Density) -> Result<DMatrix<f64>> {
    let n = sys.n_dofs();
    let bm = sys.derivative_rhs_matrix(&u.f);
    let mut rhs = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        for j in i.saturating_sub(BAND)..=(i + BAND).min(n - 1) {
            rhs[(i, j)] = bm.get(i, j);
        }
    }
    let sol = sys.saddle()?.solve_mat(&rhs);
    Ok(sol.rows(0, n).into_owned())
}

/// Adjoint of the derivative with respect to the `L2(D)` inner products on
/// both sides: returns `g` with `<F'[mu] h, w> = <h, g>` for all `h`.
///
/// Solves the transposed saddle system for `z` with data `M w`, forms the
/// moment vector `l_j = int u z' phi_j dx`, and lifts it through the mass
/// matrix so that `g` is a function rather than a functional.
pub fn apply_derivative_adjoint(
    sys: &AssembledSystem,
    u: &Density,
    w: &FemFunction,
) -> Result<FemFunction> {
    if w.mesh() != sys.mesh {
        return Err(Error::MeshMismatch(
            "adjoint data lives on a different mesh".into(),
        ));
    }
    let n = sys.n_dofs();
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&sys.mass.matvec(w.coeffs()));
    let sol = sys.saddle_transposed()?.solve_vec(&rhs);
    let z = FemFunction::new(sys.mesh, sol.rows(0, n).into_owned())?;

    // l_j = int u z' phi_j dx.
    let mesh = sys.mesh;
    let h = mesh.h();
    let mut l = DVector::zeros(n);
    for e in 0..mesh.n_elements() {
        let left = mesh.element_left(e);
        let base = 3 * e;
        for q in 0..5 {
            let x = left + h * GAUSS_NODES[q];
            let w_q = h * GAUSS_WEIGHTS[q];
            let nv = shape(GAUSS_NODES[q]);
            let uv = u.f.eval(x);
            let dz = z.eval_deriv(x);
            for j in 0..4 {
                l[base + j] += w_q * uv * dz * nv[j];
            }
        }
    }
    let g = sys.mass_cholesky()?.solve(&l);
    FemFunction::new(sys.mesh, g)
}

/// Result of an implicit Euler integration of the parabolic equation.
pub struct ParabolicResult {
    pub u: Density,
    /// Largest per-step change of total mass, `max_k |int u_{k+1} - int u_k|`.
    pub max_step_mass_drift: f64,
}

/// Integrates `M du/dt = -L u` from `u0` over `n_steps` implicit Euler
/// steps covering a time span of `t_end - t_start`.
pub fn solve_parabolic(
    sys: &AssembledSystem,
    u0: &FemFunction,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<ParabolicResult> {
    let (res, _) = parabolic_run(sys, u0, t_start, t_end, n_steps, false)?;
    Ok(res)
}

/// Same integration, but also propagates the linearization of every step
/// with respect to the drift, returning the Jacobian of the terminal
/// density (columns are zero-mean).
pub fn parabolic_with_jacobian(
    sys: &AssembledSystem,
    u0: &FemFunction,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<(ParabolicResult, DMatrix<f64>)> {
    let (res, jac) = parabolic_run(sys, u0, t_start, t_end, n_steps, true)?;
    Ok((res, jac.expect("jacobian requested")))
}

fn parabolic_run(
    sys: &AssembledSystem,
    u0: &FemFunction,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
    with_jacobian: bool,
) -> Result<(ParabolicResult, Option<DMatrix<f64>>)> {
    if u0.mesh() != sys.mesh {
        return Err(Error::MeshMismatch(
            "initial state lives on a different mesh".into(),
        ));
    }
    if n_steps == 0 || !(t_end > t_start) {
        return Err(Error::invalid(format!(
            "need a positive time span and at least one step, got [{t_start}, {t_end}] in {n_steps} steps"
        )));
    }
    let n = sys.n_dofs();
    let dt = (t_end - t_start) / n_steps as f64;
    let mut step_matrix = sys.mass.clone();
    step_matrix.add_scaled(dt, &sys.operator());
    let lu = DenseLu::factor(step_matrix.to_dense())?;

    let mut u = u0.coeffs().clone();
    let mut jac = with_jacobian.then(|| DMatrix::<f64>::zeros(n, n));
    let mut max_drift = 0.0f64;
    let mut mass_prev = sys.ones.dot(&u);
    for _ in 0..n_steps {
        let u_next = lu.solve_vec(&sys.mass.matvec(&u));
        if let Some(j) = jac.as_mut() {
            let u_fn = FemFunction::new(sys.mesh, u_next.clone())?;
            let bm = sys.derivative_rhs_matrix(&u_fn);
            let mut rhs = sys.mass.mul_dense(j);
            for i in 0..n {
                for jj in i.saturating_sub(BAND)..=(i + BAND).min(n - 1) {
                    rhs[(i, jj)] += dt * bm.get(i, jj);
                }
            }
            *j = lu.solve_mat(&rhs);
        }
        let mass_now = sys.ones.dot(&u_next);
        max_drift = max_drift.max((mass_now - mass_prev).abs());
        mass_prev = mass_now;
        u = u_next;
    }
    let f = FemFunction::new(sys.mesh, u)?;
    let norm_residual = sys.ones.dot(f.coeffs()) - 1.0;
    Ok((
        ParabolicResult {
            u: Density {
                f,
                norm_residual,
                lagrange: 0.0,
            },
            max_step_mass_drift: max_drift,
        },
        jac,
    ))
}

/// Normalized Gaussian bump used as parabolic initial condition for point
/// masses: the heat kernel at a small positive time.
pub fn gaussian_density(mesh: Mesh, center: f64, std: f64) -> Result<FemFunction> {
    if !(std.is_finite() && std > 0.0) {
        return Err(Error::invalid(format!(
            "Gaussian width must be positive, got {std}"
        )));
    }
    let norm = 1.0 / (std * (2.0 * std::f64::consts::PI).sqrt());
    let mut f = FemFunction::interpolate(mesh, |x| {
        let t = (x - center) / std;
        norm * (-0.5 * t * t).exp()
    });
    let total = f.integral();
    if total <= 0.0 {
        return Err(Error::invalid(
            "Gaussian initial condition has no mass inside the domain",
        ));
    }
    *f.coeffs_mut() /= total;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule on a uniform grid, independent of the Gauss
    /// quadrature used by the solver.
    fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        assert!(n % 2 == 0);
        let dx = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * dx);
        }
        acc * dx / 3.0
    }

    fn l2_error_against(u: &FemFunction, exact: impl Fn(f64) -> f64) -> f64 {
        let (a, b) = u.mesh().domain();
        simpson(a, b, 20_000, |x| {
            let d = u.eval(x) - exact(x);
            d * d
        })
        .sqrt()
    }

    fn cubic_drift(mesh: Mesh) -> DriftField {
        DriftField::from_fn(mesh, |x| -5.0 * x * x * x - 2.0 * x - 0.25)
    }

    // Exact integrals of the cubic Lagrange basis on one reference element,
    // obtained by symbolic integration of the shape polynomials.
    const MASS_EXACT: [[f64; 4]; 4] = [
        [8.0 / 105.0, 33.0 / 560.0, -3.0 / 140.0, 19.0 / 1680.0],
        [33.0 / 560.0, 27.0 / 70.0, -27.0 / 560.0, -3.0 / 140.0],
        [-3.0 / 140.0, -27.0 / 560.0, 27.0 / 70.0, 33.0 / 560.0],
        [19.0 / 1680.0, -3.0 / 140.0, 33.0 / 560.0, 8.0 / 105.0],
    ];
    const DSTIFF_EXACT: [[f64; 4]; 4] = [
        [37.0 / 10.0, -189.0 / 40.0, 27.0 / 20.0, -13.0 / 40.0],
        [-189.0 / 40.0, 54.0 / 5.0, -297.0 / 40.0, 27.0 / 20.0],
        [27.0 / 20.0, -297.0 / 40.0, 54.0 / 5.0, -189.0 / 40.0],
        [-13.0 / 40.0, 27.0 / 20.0, -189.0 / 40.0, 37.0 / 10.0],
    ];
    const ADV_KERNEL_EXACT: [[f64; 4]; 4] = [
        [-0.5, -57.0 / 80.0, 3.0 / 10.0, -7.0 / 80.0],
        [57.0 / 80.0, 0.0, -81.0 / 80.0, 3.0 / 10.0],
        [-3.0 / 10.0, 81.0 / 80.0, 0.0, -57.0 / 80.0],
        [7.0 / 80.0, -3.0 / 10.0, 57.0 / 80.0, 0.5],
    ];
    const ONES_EXACT: [f64; 4] = [0.125, 0.375, 0.375, 0.125];

    #[test]
    fn single_element_matrices_match_symbolic_integrals() {
        // Unit element, sigma^2/2 = 1, mu = -1, so each assembled matrix is
        // exactly one of the frozen reference tables.
        let mesh = Mesh::new(0.0, 1.0, 1).unwrap();
        let drift = DriftField::from_fn(mesh, |_| -1.0);
        let sys = assemble(mesh, &drift, 2.0f64.sqrt()).unwrap();
        for i in 0..4 {
            assert!((sys.ones[i] - ONES_EXACT[i]).abs() < 1e-14);
            for j in 0..4 {
                assert!(
                    (sys.mass.get(i, j) - MASS_EXACT[i][j]).abs() < 1e-14,
                    "mass ({i},{j})"
                );
                assert!(
                    (sys.stiffness.get(i, j) - DSTIFF_EXACT[i][j]).abs() < 1e-13,
                    "stiffness ({i},{j})"
                );
                assert!(
                    (sys.advection.get(i, j) - ADV_KERNEL_EXACT[i][j]).abs() < 1e-14,
                    "advection ({i},{j})"
                );
                let gram = MASS_EXACT[i][j] + DSTIFF_EXACT[i][j];
                assert!(
                    (sys.h1_gram.get(i, j) - gram).abs() < 1e-13,
                    "gram ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn advection_row_sums_reduce_to_boundary_terms() {
        // For constant mu = c, sum_j A_ij = -c (phi_i(b) - phi_i(a)).
        let mesh = Mesh::new(-1.0, 1.0, 6).unwrap();
        let c = 1.7;
        let drift = DriftField::from_fn(mesh, |_| c);
        let sys = assemble(mesh, &drift, 0.5).unwrap();
        let n = mesh.n_dofs();
        for i in 0..n {
            let sum: f64 = (0..n).map(|j| sys.advection.get(i, j)).sum();
            let want = if i == 0 {
                c
            } else if i == n - 1 {
                -c
            } else {
                0.0
            };
            assert!((sum - want).abs() < 1e-13, "row {i}: {sum} vs {want}");
        }
    }

    #[test]
    fn operator_annihilates_constants_in_the_adjoint() {
        // Column sums of L vanish: testing with v = 1 kills every term.
        let mesh = Mesh::new(-1.0, 1.0, 16).unwrap();
        let sys = assemble(mesh, &cubic_drift(mesh), 0.5).unwrap();
        let l = sys.operator();
        let n = mesh.n_dofs();
        for j in 0..n {
            let sum: f64 = (0..n).map(|i| l.get(i, j)).sum();
            assert!(sum.abs() < 1e-12, "column {j}: {sum}");
        }
    }

    #[test]
    fn stationary_density_matches_potential_oracle() {
        // For mu = sigma^2 phi' the stationary density is exp(2 phi) up to
        // normalization. With mu = -x and sigma = 0.5: u ~ exp(-4 x^2).
        let mesh = Mesh::new(-1.0, 1.0, 64).unwrap();
        let drift = DriftField::from_fn(mesh, |x| -x);
        let sys = assemble(mesh, &drift, 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();

        let z = simpson(-1.0, 1.0, 20_000, |x| (-4.0 * x * x).exp());
        let err = l2_error_against(&u.f, |x| (-4.0 * x * x).exp() / z);
        assert!(err < 1e-6, "L2 error {err:.3e}");

        assert!(u.norm_residual.abs() < 1e-12, "mass {:.3e}", u.norm_residual);
        assert!(u.lagrange.abs() < 1e-10, "lambda {:.3e}", u.lagrange);
        assert!(u.min_value() > 0.0);
    }

    #[test]
    fn stationary_density_for_cubic_drift_matches_oracle() {
        // mu = -5x^3 - 2x - 1/4, sigma = 0.5: 2 phi = -10x^4 - 8x^2 - 2x.
        let mesh = Mesh::new(-1.0, 1.0, 64).unwrap();
        let sys = assemble(mesh, &cubic_drift(mesh), 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();
        let pot = |x: f64| (-10.0 * x.powi(4) - 8.0 * x * x - 2.0 * x).exp();
        let z = simpson(-1.0, 1.0, 20_000, &pot);
        let err = l2_error_against(&u.f, |x| pot(x) / z);
        assert!(err < 1e-6, "L2 error {err:.3e}");
    }

    #[test]
    fn derivative_solutions_have_zero_mean() {
        let mesh = Mesh::new(-1.0, 1.0, 32).unwrap();
        let sys = assemble(mesh, &cubic_drift(mesh), 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();
        for k in 0..5 {
            let dir = DriftField::from_fn(mesh, |x| ((k + 1) as f64 * x).sin());
            let du = solve_derivative(&sys, &u, &dir).unwrap();
            let mean = sys.ones.dot(du.coeffs());
            assert!(mean.abs() < 1e-12, "direction {k}: mean {mean:.3e}");
        }
    }

    #[test]
    fn derivative_matrix_columns_agree_with_single_solves() {
        let mesh = Mesh::new(-1.0, 1.0, 8).unwrap();
        let sys = assemble(mesh, &cubic_drift(mesh), 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();
        let jac = derivative_matrix(&sys, &u).unwrap();
        let n = mesh.n_dofs();
        for j in [0usize, n / 2, n - 1] {
            let mut e = FemFunction::zeros(mesh);
            e.coeffs_mut()[j] = 1.0;
            let du = solve_derivative(&sys, &u, &DriftField::new(e)).unwrap();
            let col = jac.column(j);
            assert!((du.coeffs() - col).norm() < 1e-11);
        }
    }

    #[test]
    fn taylor_remainder_is_second_order() {
        let mesh = Mesh::new(-1.0, 1.0, 32).unwrap();
        let drift = cubic_drift(mesh);
        let sys = assemble(mesh, &drift, 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();
        let dir = DriftField::from_fn(mesh, |x| 0.1 * (std::f64::consts::PI * x).cos());
        let du = solve_derivative(&sys, &u, &dir).unwrap();

        let mut ratios = Vec::new();
        for eps in [1e-1, 1e-2] {
            let mu_eps = DriftField::new(
                FemFunction::new(mesh, drift.coeffs() + dir.coeffs() * eps).unwrap(),
            );
            let sys_eps = assemble(mesh, &mu_eps, 0.5).unwrap();
            let u_eps = solve_stationary(&sys_eps).unwrap();
            let rem =
                FemFunction::new(mesh, u_eps.f.coeffs() - u.f.coeffs() - du.coeffs() * eps)
                    .unwrap();
            ratios.push(rem.l2_norm() / (eps * eps));
        }
        let (r0, r1) = (ratios[0], ratios[1]);
        assert!(
            (r0 - r1).abs() < 0.2 * r1.abs(),
            "remainder/eps^2 not stable: {r0:.4e} vs {r1:.4e}"
        );
    }

    #[test]
    fn adjoint_satisfies_the_duality_identity() {
        let mesh = Mesh::new(-1.0, 1.0, 16).unwrap();
        let sys = assemble(mesh, &cubic_drift(mesh), 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();
        for k in 0..3 {
            let h_dir = DriftField::from_fn(mesh, |x| ((k + 1) as f64 * 2.1 * x).cos() - 0.3 * x);
            let w = FemFunction::interpolate(mesh, |x| (x * (k as f64 + 0.5)).sin() + 0.2);
            let lhs = {
                let du = solve_derivative(&sys, &u, &h_dir).unwrap();
                du.coeffs().dot(&sys.mass.matvec(w.coeffs()))
            };
            let g = apply_derivative_adjoint(&sys, &u, &w).unwrap();
            let rhs = h_dir.coeffs().dot(&sys.mass.matvec(g.coeffs()));
            assert!(
                (lhs - rhs).abs() < 1e-12,
                "pair {k}: <F'h, w> = {lhs:.6e} vs <h, g> = {rhs:.6e}"
            );
        }
    }

    #[test]
    fn parabolic_conserves_mass_and_reaches_the_stationary_state() {
        let mesh = Mesh::new(-1.0, 1.0, 64).unwrap();
        let sys = assemble(mesh, &cubic_drift(mesh), 0.5).unwrap();
        let u0 = gaussian_density(mesh, 0.0, 0.05).unwrap();
        let res = solve_parabolic(&sys, &u0, 0.01, 1000.0, 400).unwrap();
        assert!(
            res.max_step_mass_drift < 1e-10,
            "mass drift {:.3e}",
            res.max_step_mass_drift
        );
        let stat = solve_stationary(&sys).unwrap();
        let diff = FemFunction::new(mesh, res.u.f.coeffs() - stat.f.coeffs()).unwrap();
        assert!(diff.l2_norm() < 1e-4, "distance {:.3e}", diff.l2_norm());
    }

    #[test]
    fn parabolic_jacobian_matches_finite_differences() {
        let mesh = Mesh::new(-1.0, 1.0, 16).unwrap();
        let drift = cubic_drift(mesh);
        let sys = assemble(mesh, &drift, 0.5).unwrap();
        let u0 = gaussian_density(mesh, 0.0, 0.05).unwrap();
        let (base, jac) = parabolic_with_jacobian(&sys, &u0, 0.01, 1.0, 40).unwrap();

        let dir = DriftField::from_fn(mesh, |x| (2.0 * x).cos());
        let eps = 1e-5;
        let up = {
            let mu = DriftField::new(
                FemFunction::new(mesh, drift.coeffs() + dir.coeffs() * eps).unwrap(),
            );
            let s = assemble(mesh, &mu, 0.5).unwrap();
            solve_parabolic(&s, &u0, 0.01, 1.0, 40).unwrap().u
        };
        let dn = {
            let mu = DriftField::new(
                FemFunction::new(mesh, drift.coeffs() - dir.coeffs() * eps).unwrap(),
            );
            let s = assemble(mesh, &mu, 0.5).unwrap();
            solve_parabolic(&s, &u0, 0.01, 1.0, 40).unwrap().u
        };
        let fd = (up.f.coeffs() - dn.f.coeffs()) / (2.0 * eps);
        let lin = &jac * dir.coeffs();
        assert!(
            (&fd - &lin).norm() < 1e-7 * (1.0 + fd.norm()),
            "fd vs jacobian: {:.3e}",
            (&fd - &lin).norm()
        );
        assert!(base.u.norm_residual.abs() < 1e-12);
    }

    #[test]
    fn garding_inequality_holds_for_the_assembled_forms() {
        use rand::{Rng, SeedableRng};
        let mesh = Mesh::new(-1.0, 1.0, 32).unwrap();
        let drift = cubic_drift(mesh);
        let sigma = 0.5f64;
        let sys = assemble(mesh, &drift, sigma).unwrap();

        let c_sigma = sigma * sigma;
        let mu_sup = drift.sup_norm();
        let gamma = mu_sup * mu_sup / c_sigma + 1.0;
        let c = (gamma - mu_sup * mu_sup / (2.0 * c_sigma))
            .min(c_sigma / 2.0 - mu_sup * mu_sup / (4.0 * gamma));
        assert!(c > 0.0);

        let l = sys.operator().to_dense();
        let sym = (&l + l.transpose()) * 0.5;
        let m = sys.mass.to_dense();
        let g = sys.h1_gram.to_dense();

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        for _ in 0..100 {
            let v = DVector::from_fn(mesh.n_dofs(), |_, _| rng.gen_range(-1.0..1.0));
            let lhs = v.dot(&(&sym * &v)) + gamma * v.dot(&(&m * &v));
            let rhs = c * v.dot(&(&g * &v));
            assert!(lhs >= rhs - 1e-10 * lhs.abs(), "{lhs:.6e} < {rhs:.6e}");
        }
    }

    #[test]
    fn positivity_of_stationary_densities_for_bounded_drifts() {
        use rand::{Rng, SeedableRng};
        let mesh = Mesh::new(-1.0, 1.0, 64).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            // Random cubic polynomial bounded by 10 in sup norm.
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let raw = DriftField::from_fn(mesh, |x| {
                c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x
            });
            let scale = 10.0 * rng.gen_range(0.2..1.0) / raw.sup_norm().max(1e-9);
            let drift =
                DriftField::new(FemFunction::new(mesh, raw.coeffs() * scale).unwrap());
            assert!(drift.sup_norm() <= 10.0 + 1e-9);

            // Exact density ratio from the potential: u ~ exp(8 int mu).
            // When the analytic min sits above the discretization error of
            // the scheme the solved density must be strictly positive; for
            // steeper contrasts the cubic may undershoot in regions where
            // the true density is far below the approximation error, so only
            // error-sized undershoot is acceptable there.
            let s = scale;
            let pot = |x: f64| {
                8.0 * s
                    * (c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0
                        + c[3] * x.powi(4) / 4.0)
            };
            let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..=2000 {
                let p = pot(-1.0 + k as f64 / 1000.0);
                pmin = pmin.min(p);
                pmax = pmax.max(p);
            }
            let sys = assemble(mesh, &drift, 0.5).unwrap();
            let u = solve_stationary(&sys).unwrap();
            let min = u.min_value();
            let sup = u.f.sup_norm();
            if pmax - pmin < 1e6f64.ln() {
                // Contrast below 1e6: strictly positive.
                assert!(min > 0.0, "density dipped to {min:.3e}");
            } else {
                assert!(min > -1e-7 * sup, "undershoot {min:.3e} vs sup {sup:.3e}");
            }
        }
    }

    #[test]
    fn mesh_mismatch_is_reported() {
        let mesh = Mesh::new(-1.0, 1.0, 8).unwrap();
        let other = Mesh::new(-1.0, 1.0, 16).unwrap();
        let drift = cubic_drift(other);
        assert!(matches!(
            assemble(mesh, &drift, 0.5),
            Err(Error::MeshMismatch(_))
        ));
        let sys = assemble(other, &drift, 0.5).unwrap();
        let u = solve_stationary(&sys).unwrap();
        let bad_dir = DriftField::zeros(mesh);
        assert!(solve_derivative(&sys, &u, &bad_dir).is_err());
    }

    #[test]
    fn nonpositive_sigma_is_rejected() {
        let mesh = Mesh::new(-1.0, 1.0, 8).unwrap();
        let drift = DriftField::zeros(mesh);
        assert!(assemble(mesh, &drift, 0.0).is_err());
        assert!(assemble(mesh, &drift, -1.0).is_err());
    }
}

//! Tikhonov penalty `R(mu) = ||mu - mu_0||_{H^1}^2` on the drift space.
//!
//! With coefficient vector `d = mu - mu_0` and the H^1 Gram matrix `G`
//! (mass plus derivative stiffness) the penalty is `d^T G d` with gradient
//! `2 G d`. Because the penalty is quadratic, its Bregman distance reduces
//! to the squared H^1 distance itself, which is the quantity the
//! convergence statements for the estimator control.
//!
//! The boundary mode decides which coefficients the estimator may move.
//! `Fixed` pins the two interval endpoints to the initial guess, encoding
//! known boundary values of the drift; `Free` leaves every coefficient
//! active.

use nalgebra::DVector;

use crate::fem::DriftField;
use crate::linalg::BandMatrix;
use crate::{Error, Result};

/// Which drift coefficients the estimator may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Endpoint values stay at the initial guess.
    Fixed,
    /// All coefficients are active.
    Free,
}

/// Penalty center, metric, and boundary handling for one inversion run.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    center: DriftField,
    gram: BandMatrix,
    boundary: BoundaryMode,
}

impl PenaltyConfig {
    pub fn new(center: DriftField, gram: BandMatrix, boundary: BoundaryMode) -> Result<Self> {
        if gram.n() != center.coeffs().len() {
            return Err(Error::MeshMismatch(format!(
                "Gram matrix order {} does not match {} drift coefficients",
                gram.n(),
                center.coeffs().len()
            )));
        }
        Ok(PenaltyConfig {
            center,
            gram,
            boundary,
        })
    }

    pub fn center(&self) -> &DriftField {
        &self.center
    }

    pub fn gram(&self) -> &BandMatrix {
        &self.gram
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    /// Indices the estimator may update under the configured boundary mode.
    pub fn active_indices(&self) -> Vec<usize> {
        let n = self.gram.n();
        match self.boundary {
            BoundaryMode::Fixed => (1..n - 1).collect(),
            BoundaryMode::Free => (0..n).collect(),
        }
    }

    /// Penalty value and gradient at `mu`. In `Fixed` mode the endpoint
    /// gradient entries are zeroed: those coefficients are not variables,
    /// so the gradient lives in the active subspace.
    pub fn value_grad(&self, mu: &DriftField) -> Result<(f64, DVector<f64>)> {
        let d = self.deviation(mu)?;
        let gd = self.gram.matvec(&d);
        let value = d.dot(&gd);
        let mut grad = gd * 2.0;
        if self.boundary == BoundaryMode::Fixed {
            let n = grad.len();
            grad[0] = 0.0;
            grad[n - 1] = 0.0;
        }
        Ok((value, grad))
    }

    /// Bregman distance of the penalty between `mu` and `mu_ref`. For this
    /// quadratic penalty it is exactly `||mu - mu_ref||_{H^1}^2`,
    /// independent of the center.
    pub fn bregman_distance(&self, mu: &DriftField, mu_ref: &DriftField) -> Result<f64> {
        let a = self.deviation(mu)?;
        let b = self.deviation(mu_ref)?;
        let d = a - b;
        Ok(d.dot(&self.gram.matvec(&d)))
    }

    fn deviation(&self, mu: &DriftField) -> Result<DVector<f64>> {
        if mu.coeffs().len() != self.center.coeffs().len() {
            return Err(Error::MeshMismatch(
                "drift iterate lives on a different mesh than the penalty center".into(),
            ));
        }
        Ok(mu.coeffs() - self.center.coeffs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, DriftField};
    use crate::mesh::Mesh;
    use rand::{Rng, SeedableRng};

    fn setup(n_elements: usize) -> (Mesh, PenaltyConfig) {
        let mesh = Mesh::new(-1.0, 1.0, n_elements).unwrap();
        let center = DriftField::from_fn(mesh, |x| -x);
        let sys = assemble(mesh, &DriftField::zeros(mesh), 1.0).unwrap();
        let cfg = PenaltyConfig::new(center, sys.h1_gram.clone(), BoundaryMode::Free).unwrap();
        (mesh, cfg)
    }

    fn simpson(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let dx = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * dx);
        }
        acc * dx / 3.0
    }

    #[test]
    fn constant_offset_has_penalty_two_c_squared() {
        // mu - mu_0 = c on (-1, 1): ||c||_{H^1}^2 = 2 c^2.
        let (mesh, cfg) = setup(16);
        let c = 0.8;
        let mu = DriftField::from_fn(mesh, |x| -x + c);
        let (value, _) = cfg.value_grad(&mu).unwrap();
        assert!((value - 2.0 * c * c).abs() < 1e-12);
    }

    #[test]
    fn penalty_matches_a_quadrature_oracle() {
        // Deviation d(x) = sin(2x) interpolated: compare d^T G d with the
        // Simpson value of int d^2 + d'^2 over the interpolant itself.
        let (mesh, cfg) = setup(32);
        let mu = DriftField::from_fn(mesh, |x| -x + (2.0 * x).sin());
        let (value, _) = cfg.value_grad(&mu).unwrap();
        let dev = crate::mesh::FemFunction::new(
            mesh,
            mu.coeffs() - cfg.center().coeffs(),
        )
        .unwrap();
        let oracle = simpson(-1.0, 1.0, 40_000, |x| {
            let d = dev.eval(x);
            let dp = dev.eval_deriv(x);
            d * d + dp * dp
        });
        assert!(
            (value - oracle).abs() < 1e-9 * oracle.abs(),
            "{value} vs {oracle}"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (mesh, cfg) = setup(8);
        let mu = DriftField::from_fn(mesh, |x| 0.3 * x * x - 0.1);
        let (_, grad) = cfg.value_grad(&mu).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let eps = 1e-6;
        for _ in 0..10 {
            let dir = DVector::from_fn(mesh.n_dofs(), |_, _| rng.gen_range(-1.0..1.0));
            let mp = DriftField::new(
                crate::mesh::FemFunction::new(mesh, mu.coeffs() + &dir * eps).unwrap(),
            );
            let mm = DriftField::new(
                crate::mesh::FemFunction::new(mesh, mu.coeffs() - &dir * eps).unwrap(),
            );
            let fd = (cfg.value_grad(&mp).unwrap().0 - cfg.value_grad(&mm).unwrap().0)
                / (2.0 * eps);
            let an = grad.dot(&dir);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-6));
        }
    }

    #[test]
    fn fixed_mode_zeroes_endpoint_gradient_entries() {
        let mesh = Mesh::new(-1.0, 1.0, 8).unwrap();
        let center = DriftField::zeros(mesh);
        let sys = assemble(mesh, &DriftField::zeros(mesh), 1.0).unwrap();
        let cfg =
            PenaltyConfig::new(center, sys.h1_gram.clone(), BoundaryMode::Fixed).unwrap();
        let mu = DriftField::from_fn(mesh, |x| x * x + 1.0);
        let (_, grad) = cfg.value_grad(&mu).unwrap();
        let n = grad.len();
        assert_eq!(grad[0], 0.0);
        assert_eq!(grad[n - 1], 0.0);
        assert!(grad.iter().skip(1).take(n - 2).any(|&g| g != 0.0));
        assert_eq!(cfg.active_indices(), (1..n - 1).collect::<Vec<_>>());
    }

    #[test]
    fn bregman_distance_is_the_squared_h1_distance() {
        let (mesh, cfg) = setup(16);
        let mu = DriftField::from_fn(mesh, |x| x.cos());
        let mu_ref = DriftField::from_fn(mesh, |x| x.cos() + 0.5);
        let d = cfg.bregman_distance(&mu, &mu_ref).unwrap();
        // Constant difference 1/2: squared H^1 norm is 2 * 1/4.
        assert!((d - 0.5).abs() < 1e-12);
        // Symmetry and independence of the center hold for quadratic
        // penalties.
        let d_rev = cfg.bregman_distance(&mu_ref, &mu).unwrap();
        assert!((d - d_rev).abs() < 1e-14);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let (_, cfg) = setup(16);
        let other = Mesh::new(-1.0, 1.0, 8).unwrap();
        let mu = DriftField::zeros(other);
        assert!(cfg.value_grad(&mu).is_err());
    }
}

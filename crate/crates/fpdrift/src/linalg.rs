//! Small dense and banded linear algebra used by the FEM solvers.
//!
//! All systems in this crate are tiny (a few hundred unknowns), so dense
//! LU with partial pivoting handles the nonsymmetric saddle-point solves,
//! while symmetric positive definite band matrices (mass, H1 Gram) get a
//! dedicated banded Cholesky that keeps preconditioner applications cheap.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// General band matrix with half-bandwidth `kd`, stored row-major as
/// `data[i][j - i + kd]` for `|i - j| <= kd`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        BandMatrix {
            n,
            kd,
            data: vec![0.0; n * (2 * kd + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kd(&self) -> usize {
        self.kd
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(i.abs_diff(j) <= self.kd);
        i * (2 * self.kd + 1) + (j + self.kd - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.kd {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// `self += s * other`; bandwidths must match.
    pub fn add_scaled(&mut self, s: f64, other: &BandMatrix) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.kd, other.kd);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += s * *b;
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.data[self.idx(i, j)] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            for j in lo..=hi {
                y[j] += self.data[self.idx(i, j)] * x[i];
            }
        }
        y
    }

    /// `Y = self * X` for a dense right factor, exploiting the band.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n);
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            for j in lo..=hi {
                let a = self.data[self.idx(i, j)];
                if a != 0.0 {
                    for c in 0..x.ncols() {
                        y[(i, c)] += a * x[(j, c)];
                    }
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let hi = (i + self.kd).min(self.n - 1);
            for j in lo..=hi {
                m[(i, j)] = self.data[self.idx(i, j)];
            }
        }
        m
    }

    /// Principal submatrix on a contiguous index range (bandedness is
    /// preserved). Used to eliminate boundary degrees of freedom.
    pub fn principal_submatrix(&self, start: usize, len: usize) -> BandMatrix {
        assert!(start + len <= self.n);
        let mut out = BandMatrix::zeros(len, self.kd);
        for i in 0..len {
            let gi = start + i;
            let lo = gi.saturating_sub(self.kd).max(start);
            let hi = (gi + self.kd).min(start + len - 1);
            for gj in lo..=hi {
                out.set(i, gj - start, self.data[self.idx(gi, gj)]);
            }
        }
        out
    }

    /// Quadratic form `x' A x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.matvec(x))
    }
}

/// Banded Cholesky factorization `A = L L'` of a symmetric positive
/// definite band matrix. Only the lower band of the input is read.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kd: usize,
    // Lower-triangular band, data[i][i - j] for 0 <= i - j <= kd.
    low: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let (n, kd) = (a.n, a.kd);
        let w = kd + 1;
        let mut low = vec![0.0; n * w];
        let at = |low: &Vec<f64>, i: usize, j: usize| low[i * w + (i - j)];
        for i in 0..n {
            let lo = i.saturating_sub(kd);
            for j in lo..=i {
                let mut s = a.get(i, j);
                let kstart = j.saturating_sub(kd).max(lo);
                for k in kstart..j {
                    s -= at(&low, i, k) * at(&low, j, k);
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::SingularSystem(format!(
                            "non-positive pivot {s:.3e} at row {i} in banded Cholesky"
                        )));
                    }
                    low[i * w] = s.sqrt();
                } else {
                    low[i * w + (i - j)] = s / at(&low, j, j);
                }
            }
        }
        Ok(BandCholesky { n, kd, low })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n);
        let w = self.kd + 1;
        let mut y = b.clone();
        // Forward substitution L y = b.
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kd);
            let mut s = y[i];
            for j in lo..i {
                s -= self.low[i * w + (i - j)] * y[j];
            }
            y[i] = s / self.low[i * w];
        }
        // Back substitution L' x = y.
        for i in (0..self.n).rev() {
            let hi = (i + self.kd).min(self.n - 1);
            let mut s = y[i];
            for j in (i + 1)..=hi {
                s -= self.low[j * w + (j - i)] * y[j];
            }
            y[i] = s / self.low[i * w];
        }
        y
    }
}

/// Dense LU with partial pivoting and an explicit rank check.
#[derive(Debug)]
pub struct DenseLu {
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseLu {
    pub fn factor(m: DMatrix<f64>) -> Result<Self> {
        let lu = nalgebra::linalg::LU::new(m);
        let u = lu.u();
        let diag: Vec<f64> = (0..u.nrows().min(u.ncols()))
            .map(|i| u[(i, i)].abs())
            .collect();
        let dmax = diag.iter().cloned().fold(0.0f64, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(dmax.is_finite()) || dmin <= dmax * 1e-14 {
            return Err(Error::SingularSystem(format!(
                "pivot ratio {:.3e} below tolerance",
                if dmax > 0.0 { dmin / dmax } else { 0.0 }
            )));
        }
        Ok(DenseLu { lu })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("factorized system must be square")
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("factorized system must be square")
    }
}

/// Result of a preconditioned conjugate gradient run.
#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Residual norms in the preconditioner inner product, starting with
    /// the initial residual.
    pub residual_norms: Vec<f64>,
    pub converged: bool,
}

/// Conjugate gradients for `A x = b` with SPD `A`, preconditioned by an SPD
/// operator whose inverse is `solve_pre`. Starts from `x = 0` and stops when
/// the preconditioned residual norm falls below `rel_tol` times its initial
/// value.
pub fn pcg(
    apply_a: impl Fn(&DVector<f64>) -> DVector<f64>,
    solve_pre: impl Fn(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<PcgOutcome> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = solve_pre(&r);
    let mut rz = r.dot(&z);
    if rz < 0.0 {
        return Err(Error::SingularSystem(
            "preconditioner is not positive definite".into(),
        ));
    }
    let norm0 = rz.sqrt();
    let mut history = vec![norm0];
    if norm0 == 0.0 {
        return Ok(PcgOutcome {
            x,
            iterations: 0,
            residual_norms: history,
            converged: true,
        });
    }
    let mut p = z.clone();
    for it in 1..=max_iter {
        let ap = apply_a(&p);
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem(format!(
                "operator is not positive definite (p'Ap = {pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        z = solve_pre(&r);
        let rz_new = r.dot(&z);
        let norm = rz_new.max(0.0).sqrt();
        history.push(norm);
        if norm <= rel_tol * norm0 {
            return Ok(PcgOutcome {
                x,
                iterations: it,
                residual_norms: history,
                converged: true,
            });
        }
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    let iterations = max_iter;
    Ok(PcgOutcome {
        x,
        iterations,
        residual_norms: history,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_band(n: usize, kd: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, kd);
        for i in 0..n {
            for j in i.saturating_sub(kd)..=(i + kd).min(n - 1) {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        a
    }

    fn random_spd_band(n: usize, kd: usize, seed: u64) -> BandMatrix {
        // B' B restricted to its band plus a diagonal shift is SPD.
        let b = random_band(n, kd, seed);
        let dense = b.to_dense();
        let spd = dense.transpose() * &dense;
        let mut a = BandMatrix::zeros(n, 2 * kd);
        for i in 0..n {
            for j in i.saturating_sub(2 * kd)..=(i + 2 * kd).min(n - 1) {
                a.set(i, j, spd[(i, j)] + if i == j { 2.0 } else { 0.0 });
            }
        }
        a
    }

    #[test]
    fn band_matvec_matches_dense() {
        let a = random_band(17, 3, 7);
        let x = DVector::from_fn(17, |i, _| (i as f64 * 0.37).sin());
        let want = a.to_dense() * &x;
        assert!((a.matvec(&x) - &want).norm() < 1e-12);
        let want_t = a.to_dense().transpose() * &x;
        assert!((a.matvec_transpose(&x) - want_t).norm() < 1e-12);
    }

    #[test]
    fn band_mul_dense_matches_dense() {
        let a = random_band(14, 3, 3);
        let x = DMatrix::from_fn(14, 5, |i, j| ((i * 5 + j) as f64 * 0.11).cos());
        let want = a.to_dense() * &x;
        assert!((a.mul_dense(&x) - want).norm() < 1e-12);
    }

    #[test]
    fn principal_submatrix_drops_boundary_rows() {
        let a = random_band(10, 2, 11);
        let s = a.principal_submatrix(1, 8);
        let dense = a.to_dense();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(s.get(i, j), dense[(i + 1, j + 1)]);
            }
        }
    }

    #[test]
    fn banded_cholesky_solves_spd_systems() {
        let a = random_spd_band(25, 2, 5);
        let chol = BandCholesky::factor(&a).unwrap();
        let b = DVector::from_fn(25, |i, _| (i as f64).cos());
        let x = chol.solve(&b);
        assert!((a.matvec(&x) - &b).norm() < 1e-10);
    }

    #[test]
    fn banded_cholesky_rejects_indefinite_input() {
        let mut a = BandMatrix::zeros(4, 1);
        for i in 0..4 {
            a.set(i, i, -1.0);
        }
        assert!(BandCholesky::factor(&a).is_err());
    }

    #[test]
    fn dense_lu_solves_and_detects_singularity() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let lu = DenseLu::factor(m.clone()).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = lu.solve_vec(&b);
        assert!((m * &x - b).norm() < 1e-12);

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(DenseLu::factor(singular).is_err());
    }

    #[test]
    fn pcg_matches_direct_solve() {
        let a = random_spd_band(30, 3, 9);
        let b = DVector::from_fn(30, |i, _| ((i + 1) as f64).sqrt());
        let dense = a.to_dense();
        let direct = DenseLu::factor(dense).unwrap().solve_vec(&b);
        // Jacobi preconditioner.
        let diag: Vec<f64> = (0..30).map(|i| a.get(i, i)).collect();
        let out = pcg(
            |p| a.matvec(p),
            |r| DVector::from_fn(30, |i, _| r[i] / diag[i]),
            &b,
            1e-12,
            200,
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.x - direct).norm() < 1e-8);
    }
}

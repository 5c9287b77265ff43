//! Path simulation and observation extraction for the scalar SDE
//! `dX_t = mu(X_t) dt + sigma dW_t`.
//!
//! Paths are generated by the Euler-Maruyama scheme
//!
//! ```text
//! X_{k+1} = X_k + mu(X_k) dt + sigma sqrt(dt) xi_k,   xi_k ~ N(0, 1),
//! ```
//!
//! with the drift extended by its boundary values outside the interval of
//! interest, so trajectories are defined on the whole real line. Two
//! observation designs are supported: thinning one long ergodic path down
//! to `n` weakly dependent samples, and recording the terminal states of an
//! ensemble of independent paths. Either way the result is an unordered set
//! of points inside the interval, stored sorted.
//!
//! Randomness comes from a ChaCha12 stream cipher; ensemble members use one
//! stream per path index on a shared seed, so any path can be reproduced
//! independently of the others and ensembles can be generated in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fem::DriftField;
use crate::{Error, Result};

/// Drift and diffusion of the model. A vanishing diffusion is allowed (the
/// deterministic limit is useful for calibration tests); the PDE solvers
/// require `sigma > 0` and say so separately.
#[derive(Debug, Clone)]
pub struct SdeModel {
    drift: DriftField,
    sigma: f64,
}

impl SdeModel {
    pub fn new(drift: DriftField, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "diffusion coefficient must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(SdeModel { drift, sigma })
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The interval the drift (and the estimator) lives on.
    pub fn domain(&self) -> (f64, f64) {
        self.drift.mesh().domain()
    }
}

/// Time grid, initial state, and seed of one simulation.
#[derive(Debug, Clone, Copy)]
pub struct PathConfig {
    pub t_end: f64,
    pub n_steps: usize,
    pub x0: f64,
    pub seed: u64,
}

impl PathConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) || self.n_steps == 0 {
            return Err(Error::invalid(format!(
                "path needs t_end > 0 and at least one step, got t_end = {}, n_steps = {}",
                self.t_end, self.n_steps
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::invalid("initial state must be finite"));
        }
        Ok(())
    }
}

/// Unordered observations inside the domain, stored ascending.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    points: Vec<f64>,
    discarded_outside: usize,
}

impl ObservationSet {
    /// Filters `points` to the open interval, sorts them, and records how
    /// many were dropped.
    pub fn from_points(mut points: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        let before = points.len();
        points.retain(|&y| y > domain.0 && y < domain.1 && y.is_finite());
        let discarded = before - points.len();
        if points.is_empty() {
            return Err(Error::NoObservations {
                discarded,
            });
        }
        points.sort_by(|a, b| a.partial_cmp(b).expect("filtered points are finite"));
        Ok(ObservationSet {
            points,
            discarded_outside: discarded,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn discarded_outside(&self) -> usize {
        self.discarded_outside
    }
}

fn euler_maruyama_with_rng(
    model: &SdeModel,
    cfg: &PathConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let dt = cfg.t_end / cfg.n_steps as f64;
    let noise_scale = model.sigma * dt.sqrt();
    let mut path = Vec::with_capacity(cfg.n_steps + 1);
    let mut x = cfg.x0;
    path.push(x);
    for step in 1..=cfg.n_steps {
        let xi: f64 = StandardNormal.sample(rng);
        x += model.drift.eval(x) * dt + noise_scale * xi;
        if !x.is_finite() {
            return Err(Error::SimulationDiverged { step });
        }
        path.push(x);
    }
    Ok(path)
}

/// Simulates one path on `[0, t_end]` with `n_steps` Euler-Maruyama steps,
/// returning all `n_steps + 1` states.
pub fn euler_maruyama_path(model: &SdeModel, cfg: &PathConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    euler_maruyama_with_rng(model, cfg, &mut rng)
}

/// Extracts `n_obs` equidistantly spaced states from the tail of a path.
///
/// The first `burn_in_fraction` of the steps is discarded, the index stride
/// is `floor((1 - burn_in) * n_steps / n_obs)`, and samples are counted
/// backwards from the final state so the last state is always included.
/// States outside the open domain are dropped afterwards (and counted).
pub fn thin_path(
    path: &[f64],
    domain: (f64, f64),
    n_obs: usize,
    burn_in_fraction: f64,
) -> Result<ObservationSet> {
    if path.len() < 2 {
        return Err(Error::invalid("path needs at least two states"));
    }
    if n_obs == 0 {
        return Err(Error::invalid("need at least one observation"));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::invalid(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let n_steps = path.len() - 1;
    let usable = (1.0 - burn_in_fraction) * n_steps as f64;
    let stride = (usable / n_obs as f64).floor() as usize;
    if stride == 0 {
        return Err(Error::invalid(format!(
            "cannot thin {n_obs} observations out of {usable:.0} usable steps"
        )));
    }
    let selected: Vec<f64> = (0..n_obs)
        .map(|k| path[n_steps - k * stride])
        .collect();
    ObservationSet::from_points(selected, domain)
}

/// Terminal states of `n_paths` independent paths, all started from
/// `cfg.x0`. Path `i` uses stream `i` of the seeded generator.
pub fn ensemble_observations(
    model: &SdeModel,
    n_paths: usize,
    cfg: &PathConfig,
) -> Result<ObservationSet> {
    if n_paths == 0 {
        return Err(Error::invalid("need at least one path"));
    }
    let mut terminals = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let path = euler_maruyama_with_rng(model, cfg, &mut rng)?;
        terminals.push(*path.last().expect("paths are nonempty"));
    }
    ObservationSet::from_points(terminals, model.domain())
}

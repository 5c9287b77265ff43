//! Monte-Carlo comparison of the likelihood and quadratic fidelities.
//!
//! One study repeats the cycle simulate -> observe -> estimate over
//! independent replications. Replication `r` draws its own data with seed
//! `base_seed XOR r`, runs both estimator arms with oracle stopping
//! against the true drift for every observation count in the grid, and
//! records the normalized `L^2` errors; the report aggregates means,
//! variances, error histograms, and the reconstruction of the
//! median-error replication. Two scenarios are supported:
//!
//! * `single-path`: one long ergodic path per replication, thinned to
//!   near-independent samples of the stationary density (stationary
//!   forward operator);
//! * `ensemble`: terminal values of independent paths started at a common
//!   point, observed at one time (parabolic forward operator).
//!
//! Replications run concurrently; aggregation is a fold ordered by
//! replication index, so concurrency never changes output bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::{assemble, DriftField};
use crate::inversion::{
    newton_estimate, FidelityData, FidelityKind, ForwardOperator, NewtonConfig,
};
use crate::mesh::FemFunction;
use crate::penalty::{BoundaryMode, PenaltyConfig};
use crate::presets::ModelConfig;
use crate::sde::{ensemble_observations, euler_maruyama_path, thin_path, PathConfig};
use crate::{Error, Result};

/// Time horizon of the ergodic path in the single-path scenario.
pub const SINGLE_PATH_T_END: f64 = 1000.0;
/// Euler-Maruyama steps of the ergodic path.
pub const SINGLE_PATH_STEPS: usize = 100_000;
/// Fraction of the path discarded before thinning.
pub const BURN_IN_FRACTION: f64 = 0.01;
/// Observation time of the ensemble scenario.
pub const ENSEMBLE_T_END: f64 = 1.0;
/// Euler-Maruyama steps per simulated ensemble path.
pub const ENSEMBLE_SIM_STEPS: usize = 1_000;
/// Implicit Euler steps of the parabolic forward solve.
pub const ENSEMBLE_FORWARD_STEPS: usize = 50;
/// A study aborts when the failed fraction of replications exceeds this.
pub const FAILURE_THRESHOLD: f64 = 0.05;

/// How one replication produces observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SinglePath,
    Ensemble,
}

/// Full description of one study. Serialized as the `mc-study` config
/// file; omitted fields fall back to the defaults below.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub n_obs_list: Vec<usize>,
    pub replications: usize,
    /// Replication `r` draws its data with seed `base_seed XOR r`.
    pub base_seed: u64,
    pub model: ModelConfig,
    /// Estimator controls of the likelihood arm.
    pub kl: NewtonConfig,
    /// Estimator controls of the quadratic arm.
    pub l2: NewtonConfig,
    pub boundary: BoundaryMode,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenario: Scenario::SinglePath,
            n_obs_list: vec![125, 250, 500, 1000],
            replications: 100,
            base_seed: 1,
            model: ModelConfig::default(),
            kl: NewtonConfig::default(),
            l2: NewtonConfig::default(),
            boundary: BoundaryMode::Fixed,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("a study needs at least one replication"));
        }
        if self.n_obs_list.is_empty() {
            return Err(Error::invalid("a study needs at least one observation count"));
        }
        if self.n_obs_list.iter().any(|&n| n == 0) {
            return Err(Error::invalid("observation counts must be positive"));
        }
        self.kl.validate()?;
        self.l2.validate()
    }
}

/// Errors and reconstructions of one (observation count, fidelity) cell.
#[derive(Debug, Clone)]
pub struct CellStats {
    pub n_obs: usize,
    pub fidelity: FidelityKind,
    /// Normalized errors of the surviving replications, ordered by
    /// replication index.
    pub errors: Vec<f64>,
    /// The same errors restricted to the interior window, normalized by
    /// the initial-guess error on that window.
    pub interior_errors: Vec<f64>,
    pub mean: f64,
    /// Sample variance (denominator `n - 1`; zero for a single survivor).
    pub variance: f64,
    /// Replication index owning the median error (lower median).
    pub median_replication: usize,
    /// Reconstruction of that replication.
    pub median_drift: DriftField,
}

/// Aggregated study outcome.
#[derive(Debug, Clone)]
pub struct StudyReport {
    pub scenario: Scenario,
    pub n_obs_list: Vec<usize>,
    pub replications: usize,
    pub failures: usize,
    /// Indices of replications that failed and were excluded.
    pub failed_replications: Vec<usize>,
    pub truth: DriftField,
    /// Cells ordered by observation count, the likelihood arm before the
    /// quadratic one.
    pub cells: Vec<CellStats>,
}

impl StudyReport {
    pub fn cell(&self, n_obs: usize, fidelity: FidelityKind) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.n_obs == n_obs && c.fidelity == fidelity)
    }

    pub fn mean(&self, n_obs: usize, fidelity: FidelityKind) -> Option<f64> {
        self.cell(n_obs, fidelity).map(|c| c.mean)
    }
}

/// Central 80% of the domain, the window on which interior errors are
/// measured; boundary-layer artifacts of the free-boundary setup live in
/// the excluded 10% margins.
pub fn interior_window(domain: (f64, f64)) -> (f64, f64) {
    let margin = 0.1 * (domain.1 - domain.0);
    (domain.0 + margin, domain.1 - margin)
}

const ARMS: [FidelityKind; 2] = [FidelityKind::Kl, FidelityKind::L2];

fn arm_tag(kind: FidelityKind) -> &'static str {
    match kind {
        FidelityKind::Kl => "kl",
        FidelityKind::L2 => "l2",
    }
}

/// One estimation outcome inside a replication.
#[derive(Debug, Clone)]
struct CellOutcome {
    error: f64,
    interior_error: f64,
    drift: DriftField,
}

/// Everything shared by all replications of one study.
struct StudyContext {
    truth: DriftField,
    model: crate::sde::SdeModel,
    forward: ForwardOperator,
    penalty: PenaltyConfig,
    window: (f64, f64),
    /// `||mu_0 - mu_true||_{L^2(window)}`, the interior normalizer.
    window_error0: f64,
}

impl StudyContext {
    fn new(cfg: &StudyConfig) -> Result<Self> {
        let mesh = cfg.model.mesh()?;
        let truth = cfg.model.drift_field()?;
        let model = cfg.model.model()?;
        let forward = match cfg.scenario {
            Scenario::SinglePath => ForwardOperator::stationary(mesh, cfg.model.sigma)?,
            Scenario::Ensemble => ForwardOperator::parabolic(
                mesh,
                cfg.model.sigma,
                0.0,
                ENSEMBLE_T_END,
                ENSEMBLE_FORWARD_STEPS,
            )?,
        };
        let (a, b) = mesh.domain();
        let center = match cfg.boundary {
            // Boundary values of the truth are treated as known and
            // interpolated linearly.
            BoundaryMode::Fixed => {
                let (va, vb) = (truth.eval(a), truth.eval(b));
                DriftField::from_fn(mesh, move |x| va + (vb - va) * (x - a) / (b - a))
            }
            BoundaryMode::Free => DriftField::zeros(mesh),
        };
        let gram = assemble(mesh, &DriftField::zeros(mesh), 1.0)?.h1_gram;
        let penalty = PenaltyConfig::new(center, gram, cfg.boundary)?;
        let window = interior_window((a, b));
        let diff = FemFunction::new(mesh, penalty.center().coeffs() - truth.coeffs())?;
        let mut window_error0 = diff.l2_norm_on(window.0, window.1);
        if !(window_error0 > 0.0) {
            window_error0 = 1.0;
        }
        Ok(StudyContext {
            truth,
            model,
            forward,
            penalty,
            window,
            window_error0,
        })
    }

    /// Runs every cell of one replication; any failure fails the whole
    /// replication so that surviving statistics stay balanced across
    /// cells.
    fn replicate(&self, cfg: &StudyConfig, rep: usize) -> Result<Vec<CellOutcome>> {
        let seed = cfg.base_seed ^ rep as u64;
        let mesh = self.forward.mesh();
        let single_path = match cfg.scenario {
            Scenario::SinglePath => Some(euler_maruyama_path(
                &self.model,
                &PathConfig {
                    t_end: SINGLE_PATH_T_END,
                    n_steps: SINGLE_PATH_STEPS,
                    x0: 0.0,
                    seed,
                },
            )?),
            Scenario::Ensemble => None,
        };
        let mut outcomes = Vec::with_capacity(cfg.n_obs_list.len() * ARMS.len());
        for &n_obs in &cfg.n_obs_list {
            let obs = match &single_path {
                Some(path) => thin_path(path, self.model.domain(), n_obs, BURN_IN_FRACTION)?,
                None => ensemble_observations(
                    &self.model,
                    n_obs,
                    &PathConfig {
                        t_end: ENSEMBLE_T_END,
                        n_steps: ENSEMBLE_SIM_STEPS,
                        x0: 0.0,
                        seed,
                    },
                )?,
            };
            for kind in ARMS {
                let data = FidelityData::from_observations(kind, &obs, mesh);
                let arm_cfg = match kind {
                    FidelityKind::Kl => &cfg.kl,
                    FidelityKind::L2 => &cfg.l2,
                };
                let result =
                    newton_estimate(&self.forward, &data, &self.penalty, arm_cfg, Some(&self.truth))?;
                let errors = result
                    .trace
                    .normalized_errors()
                    .expect("estimation ran with a truth");
                if errors[0] != 1.0 {
                    return Err(Error::invalid(format!(
                        "initial guess error is not normalizable (entry 0 is {})",
                        errors[0]
                    )));
                }
                let error = errors[result.selected];
                if !(error.is_finite() && error > 0.0) {
                    return Err(Error::invalid(format!(
                        "normalized error must be finite and positive, got {error}"
                    )));
                }
                let diff = FemFunction::new(mesh, result.drift.coeffs() - self.truth.coeffs())?;
                let interior_error =
                    diff.l2_norm_on(self.window.0, self.window.1) / self.window_error0;
                outcomes.push(CellOutcome {
                    error,
                    interior_error,
                    drift: result.drift,
                });
            }
        }
        Ok(outcomes)
    }
}

/// Runs the configured study: independent replications executed
/// concurrently, then a deterministic aggregation ordered by replication
/// index. Individual replication failures are recorded and excluded; a
/// failed fraction above [`FAILURE_THRESHOLD`] aborts.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let ctx = StudyContext::new(cfg)?;
    let outcomes: Vec<Result<Vec<CellOutcome>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| ctx.replicate(cfg, rep))
        .collect();
    aggregate(cfg, &ctx, outcomes)
}

fn aggregate(
    cfg: &StudyConfig,
    ctx: &StudyContext,
    outcomes: Vec<Result<Vec<CellOutcome>>>,
) -> Result<StudyReport> {
    let failed_replications: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_err().then_some(i))
        .collect();
    let failures = failed_replications.len();
    if failures as f64 > FAILURE_THRESHOLD * cfg.replications as f64 {
        return Err(Error::StudyAborted {
            failed: failures,
            total: cfg.replications,
            threshold: 100.0 * FAILURE_THRESHOLD,
        });
    }
    let survivors: Vec<(usize, &Vec<CellOutcome>)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|cells| (i, cells)))
        .collect();
    let mut cells = Vec::with_capacity(cfg.n_obs_list.len() * ARMS.len());
    for (slot, &n_obs) in cfg.n_obs_list.iter().enumerate() {
        for (arm, kind) in ARMS.into_iter().enumerate() {
            let idx = slot * ARMS.len() + arm;
            let picked: Vec<(usize, &CellOutcome)> = survivors
                .iter()
                .map(|&(rep, cells)| (rep, &cells[idx]))
                .collect();
            let errors: Vec<f64> = picked.iter().map(|(_, c)| c.error).collect();
            let interior_errors: Vec<f64> =
                picked.iter().map(|(_, c)| c.interior_error).collect();
            let count = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / count;
            let variance = if errors.len() > 1 {
                errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (count - 1.0)
            } else {
                0.0
            };
            // Lower median: element (len - 1) / 2 of the sorted errors.
            let mut order: Vec<usize> = (0..picked.len()).collect();
            order.sort_by(|&i, &j| {
                errors[i]
                    .partial_cmp(&errors[j])
                    .expect("errors are finite")
            });
            let median_pos = order[(picked.len() - 1) / 2];
            cells.push(CellStats {
                n_obs,
                fidelity: kind,
                errors,
                interior_errors,
                mean,
                variance,
                median_replication: picked[median_pos].0,
                median_drift: picked[median_pos].1.drift.clone(),
            });
        }
    }
    Ok(StudyReport {
        scenario: cfg.scenario,
        n_obs_list: cfg.n_obs_list.clone(),
        replications: cfg.replications,
        failures,
        failed_replications,
        truth: ctx.truth.clone(),
        cells,
    })
}

/// The free-boundary variation: boundary values of the drift are treated
/// as unknown, so the estimator starts from the zero drift and may move
/// the endpoint coefficients. Interior errors in the report quantify how
/// much of the error concentrates near the boundary.
pub fn run_modified_boundary(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut cfg = cfg.clone();
    cfg.boundary = BoundaryMode::Free;
    run_study(&cfg)
}

/// The ensemble variation: observations are terminal values of
/// independent paths started at `x0 = 0` and observed at `T = 1`, the
/// forward operator integrates the time-dependent equation, and boundary
/// values are treated as unknown.
pub fn run_ensemble_scenario(cfg: &StudyConfig) -> Result<StudyReport> {
    let mut cfg = cfg.clone();
    cfg.scenario = Scenario::Ensemble;
    cfg.boundary = BoundaryMode::Free;
    run_study(&cfg)
}

/// Number of histogram bins per cell.
pub const HISTOGRAM_BINS: usize = 30;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the study artifacts into `out_dir` and returns the written
/// paths: `table1.csv`, per-cell error histograms, the median-error
/// reconstruction per observation count (likelihood arm), and a matching
/// standalone SVG next to every CSV. Files are UTF-8 with LF line
/// endings; floats carry 17 significant digits. An empty report is
/// rejected before anything is created.
pub fn emit_report(report: &StudyReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.cells.is_empty() || report.cells.iter().any(|c| c.errors.is_empty()) {
        return Err(Error::invalid("empty study report: nothing to emit"));
    }
    for &n_obs in &report.n_obs_list {
        for kind in ARMS {
            if report.cell(n_obs, kind).is_none() {
                return Err(Error::invalid(format!(
                    "report misses the ({n_obs}, {}) cell",
                    arm_tag(kind)
                )));
            }
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, content: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
        Ok(())
    };

    let mut table = String::from("observations,kl_mean,kl_var,l2_mean,l2_var\n");
    let mut means = Vec::new();
    for &n_obs in &report.n_obs_list {
        let kl = report.cell(n_obs, FidelityKind::Kl).expect("checked above");
        let l2 = report.cell(n_obs, FidelityKind::L2).expect("checked above");
        writeln!(
            table,
            "{n_obs},{},{},{},{}",
            sig17(kl.mean),
            sig17(kl.variance),
            sig17(l2.mean),
            sig17(l2.variance)
        )
        .expect("writing to a string cannot fail");
        means.push((n_obs as f64, kl.mean, l2.mean));
    }
    emit("table1.csv", table)?;
    emit("table1.svg", mean_error_svg(&means))?;

    for cell in &report.cells {
        let (edges, counts) = histogram(&cell.errors);
        let mut hist = String::from("bin_left,bin_right,count\n");
        for (i, &c) in counts.iter().enumerate() {
            writeln!(hist, "{},{},{c}", sig17(edges[i]), sig17(edges[i + 1]))
                .expect("writing to a string cannot fail");
        }
        let stem = format!("hist_{}_{}", cell.n_obs, arm_tag(cell.fidelity));
        emit(&format!("{stem}.csv"), hist)?;
        emit(&format!("{stem}.svg"), histogram_svg(&edges, &counts, &stem))?;
    }

    let mesh = report.truth.mesh();
    for &n_obs in &report.n_obs_list {
        let cell = report.cell(n_obs, FidelityKind::Kl).expect("checked above");
        let mut recon = String::from("x,mu_hat,mu_true\n");
        let mut series_hat = Vec::with_capacity(mesh.n_dofs());
        let mut series_true = Vec::with_capacity(mesh.n_dofs());
        for i in 0..mesh.n_dofs() {
            let x = mesh.node_x(i);
            let hat = cell.median_drift.coeffs()[i];
            let truth = report.truth.coeffs()[i];
            writeln!(recon, "{},{},{}", sig17(x), sig17(hat), sig17(truth))
                .expect("writing to a string cannot fail");
            series_hat.push((x, hat));
            series_true.push((x, truth));
        }
        emit(&format!("median_recon_{n_obs}.csv"), recon)?;
        emit(
            &format!("median_recon_{n_obs}.svg"),
            reconstruction_svg(&series_hat, &series_true, n_obs),
        )?;
    }
    Ok(written)
}

/// Equal-width bins on `[0, max error]`; the top edge is inclusive.
fn histogram(errors: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let max = errors.iter().fold(0.0f64, |a, &e| a.max(e));
    let width = if max > 0.0 {
        max / HISTOGRAM_BINS as f64
    } else {
        1.0
    };
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &e in errors {
        let bin = ((e / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    let edges = (0..=HISTOGRAM_BINS).map(|i| i as f64 * width).collect();
    (edges, counts)
}

/// Minimal standalone SVG plotting: one fixed viewport, a frame with
/// corner tick labels, polylines and bars in data coordinates.
struct SvgCanvas {
    x_range: (f64, f64),
    y_range: (f64, f64),
    body: String,
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const SVG_MARGIN: f64 = 56.0;

impl SvgCanvas {
    fn new(x_range: (f64, f64), y_range: (f64, f64), title: &str) -> Self {
        let mut canvas = SvgCanvas {
            x_range,
            y_range,
            body: String::new(),
        };
        writeln!(
            canvas.body,
            "<rect x=\"{SVG_MARGIN}\" y=\"{SVG_MARGIN}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"none\" stroke=\"#444\"/>",
            SVG_W - 2.0 * SVG_MARGIN,
            SVG_H - 2.0 * SVG_MARGIN
        )
        .unwrap();
        canvas.text(SVG_W / 2.0, SVG_MARGIN / 2.0, title, "middle", 15);
        for (value, frac, axis) in [
            (x_range.0, 0.0, 'x'),
            (x_range.1, 1.0, 'x'),
            (y_range.0, 0.0, 'y'),
            (y_range.1, 1.0, 'y'),
        ] {
            let label = format!("{value:.3}");
            match axis {
                'x' => canvas.text(
                    SVG_MARGIN + frac * (SVG_W - 2.0 * SVG_MARGIN),
                    SVG_H - SVG_MARGIN + 18.0,
                    &label,
                    "middle",
                    12,
                ),
                _ => canvas.text(
                    SVG_MARGIN - 6.0,
                    SVG_H - SVG_MARGIN - frac * (SVG_H - 2.0 * SVG_MARGIN) + 4.0,
                    &label,
                    "end",
                    12,
                ),
            }
        }
        canvas
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (
            SVG_MARGIN + fx * (SVG_W - 2.0 * SVG_MARGIN),
            SVG_H - SVG_MARGIN - fy * (SVG_H - 2.0 * SVG_MARGIN),
        )
    }

    fn text(&mut self, px: f64, py: f64, s: &str, anchor: &str, size: usize) {
        writeln!(
            self.body,
            "<text x=\"{px:.2}\" y=\"{py:.2}\" font-family=\"sans-serif\" font-size=\"{size}\" \
             fill=\"#222\" text-anchor=\"{anchor}\">{s}</text>"
        )
        .unwrap();
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, dash: Option<&str>) {
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let dash = dash.map_or(String::new(), |d| format!(" stroke-dasharray=\"{d}\""));
        writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>",
            coords.join(" ")
        )
        .unwrap();
    }

    fn bar(&mut self, x0: f64, x1: f64, y: f64, color: &str) {
        let (px0, py) = self.map(x0, y);
        let (px1, base) = self.map(x1, 0.0);
        writeln!(
            self.body,
            "<rect x=\"{px0:.2}\" y=\"{py:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{color}\" stroke=\"#444\" stroke-width=\"0.5\"/>",
            px1 - px0,
            base - py
        )
        .unwrap();
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = SVG_MARGIN + 16.0 + 18.0 * i as f64;
            writeln!(
                self.body,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>",
                SVG_W - SVG_MARGIN - 110.0,
                SVG_W - SVG_MARGIN - 86.0
            )
            .unwrap();
            self.text(SVG_W - SVG_MARGIN - 80.0, y + 4.0, label, "start", 12);
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
             viewBox=\"0 0 {SVG_W} {SVG_H}\">\n<rect width=\"100%\" height=\"100%\" \
             fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn mean_error_svg(means: &[(f64, f64, f64)]) -> String {
    let x_max = means.iter().fold(0.0f64, |a, m| a.max(m.0));
    let y_max = means.iter().fold(0.0f64, |a, m| a.max(m.1).max(m.2));
    let mut canvas = SvgCanvas::new(
        (0.0, x_max * 1.05),
        (0.0, y_max * 1.15),
        "Mean normalized error vs observations",
    );
    let kl: Vec<(f64, f64)> = means.iter().map(|m| (m.0, m.1)).collect();
    let l2: Vec<(f64, f64)> = means.iter().map(|m| (m.0, m.2)).collect();
    canvas.polyline(&kl, "#1f6fb4", None);
    canvas.polyline(&l2, "#d1622a", None);
    canvas.legend(&[("likelihood", "#1f6fb4"), ("quadratic", "#d1622a")]);
    canvas.finish()
}

fn histogram_svg(edges: &[f64], counts: &[usize], stem: &str) -> String {
    let y_max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let mut canvas = SvgCanvas::new(
        (edges[0], edges[edges.len() - 1].max(1e-300)),
        (0.0, y_max * 1.1),
        &format!("Error histogram {stem}"),
    );
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            canvas.bar(edges[i], edges[i + 1], c as f64, "#7aa6d2");
        }
    }
    canvas.finish()
}

fn reconstruction_svg(hat: &[(f64, f64)], truth: &[(f64, f64)], n_obs: usize) -> String {
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &(_, y) in hat.iter().chain(truth) {
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let pad = 0.05 * (y_max - y_min).max(1e-12);
    let mut canvas = SvgCanvas::new(
        (hat[0].0, hat[hat.len() - 1].0),
        (y_min - pad, y_max + pad),
        &format!("Median reconstruction, n = {n_obs}"),
    );
    canvas.polyline(truth, "#222222", Some("5,4"));
    canvas.polyline(hat, "#1f6fb4", None);
    canvas.legend(&[("estimate", "#1f6fb4"), ("truth", "#222222")]);
    canvas.finish()
}

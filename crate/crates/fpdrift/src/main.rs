//! Command-line front end: simulate observations, solve the forward
//! density equation, estimate a drift from data, and run Monte-Carlo
//! studies. All file output is UTF-8 CSV (LF line endings, 17 significant
//! digits) so runs with identical configurations are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fpdrift::experiments::{self, StudyConfig};
use fpdrift::fem::{assemble, DriftField};
use fpdrift::inversion::{newton_estimate, FidelityData, FidelityKind, ForwardOperator, NewtonConfig};
use fpdrift::mesh::Mesh;
use fpdrift::penalty::{BoundaryMode, PenaltyConfig};
use fpdrift::presets::{load_drift, ModelConfig};
use fpdrift::sde::{euler_maruyama_path, thin_path, ObservationSet, PathConfig};

#[derive(Parser)]
#[command(
    name = "fpdrift",
    about = "Nonparametric drift estimation for scalar SDEs via density inversion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and emit thinned observations as CSV.
    Simulate(SimulateArgs),
    /// Solve the stationary or time-dependent density equation.
    FpSolve(FpSolveArgs),
    /// Estimate a drift from observations.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo study comparing the two fidelities.
    McStudy(McStudyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML model config; the benchmark model when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_obs: usize,
    #[arg(long, default_value_t = experiments::SINGLE_PATH_T_END)]
    t_end: f64,
    #[arg(long, default_value_t = experiments::SINGLE_PATH_STEPS)]
    steps: usize,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FpSolveArgs {
    /// Drift preset name or nodal CSV path.
    #[arg(long, default_value = "cubic")]
    drift: String,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Domain endpoints a b.
    #[arg(long, num_args = 2, default_values_t = [-1.0, 1.0])]
    domain: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    mesh_elements: usize,
    /// Solve the time-dependent equation instead of the stationary one.
    #[arg(long)]
    parabolic: bool,
    /// Start point of the time-dependent solve.
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FidelityArg {
    Kl,
    L2,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BoundaryArg {
    Fixed,
    Free,
}

#[derive(Args)]
struct EstimateArgs {
    /// Observation CSV (one column y, header optional).
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, value_enum, default_value_t = FidelityArg::Kl)]
    fidelity: FidelityArg,
    #[arg(long, default_value_t = NewtonConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = NewtonConfig::default().alpha0)]
    alpha0: f64,
    /// Multiplicative decay of the regularization weight per outer step.
    #[arg(long, default_value_t = NewtonConfig::default().decay_q)]
    decay: f64,
    #[arg(long, default_value_t = NewtonConfig::default().max_outer)]
    max_outer: usize,
    #[arg(long, default_value_t = 64)]
    mesh_elements: usize,
    #[arg(long, num_args = 2, default_values_t = [-1.0, 1.0])]
    domain: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Fixed mode pins the endpoint drift values (requires --truth for
    /// the boundary data); free mode estimates them.
    #[arg(long, value_enum, default_value_t = BoundaryArg::Fixed)]
    boundary: BoundaryArg,
    /// True drift (preset or nodal CSV); enables oracle stopping.
    #[arg(long)]
    truth: Option<String>,
    /// Reconstruction CSV path.
    #[arg(long, default_value = "reconstruction.csv")]
    out_recon: PathBuf,
    /// JSON-lines trace path.
    #[arg(long, default_value = "trace.jsonl")]
    out_trace: PathBuf,
}

#[derive(Args)]
struct McStudyArgs {
    /// TOML study config; the default desk-scale study when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for report files.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured replication count (e.g. 1000 for a
    /// full-scale run).
    #[arg(long)]
    replications: Option<usize>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::FpSolve(args) => fp_solve(args),
        Command::Estimate(args) => estimate(args),
        Command::McStudy(args) => mc_study(args),
    }
}

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_out(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn load_model(path: &Option<PathBuf>) -> anyhow::Result<ModelConfig> {
    match path {
        None => Ok(ModelConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let model_cfg = load_model(&args.model)?;
    let model = model_cfg.model()?;
    let path = euler_maruyama_path(
        &model,
        &PathConfig {
            t_end: args.t_end,
            n_steps: args.steps,
            x0: 0.0,
            seed: args.seed,
        },
    )?;
    let obs = thin_path(
        &path,
        model.domain(),
        args.n_obs,
        experiments::BURN_IN_FRACTION,
    )?;
    let mut csv = String::from("y\n");
    for &y in obs.points() {
        writeln!(csv, "{}", sig17(y)).expect("writing to a string cannot fail");
    }
    write_out(&args.out, &csv)?;
    if obs.discarded_outside() > 0 {
        eprintln!(
            "note: {} observations fell outside the domain and were dropped",
            obs.discarded_outside()
        );
    }
    Ok(())
}

fn fp_solve(args: FpSolveArgs) -> anyhow::Result<()> {
    let mesh = Mesh::new(args.domain[0], args.domain[1], args.mesh_elements)?;
    let drift = load_drift(&args.drift, mesh)?;
    let forward = if args.parabolic {
        ForwardOperator::parabolic(mesh, args.sigma, args.x0, args.t_end, args.steps)?
    } else {
        ForwardOperator::stationary(mesh, args.sigma)?
    };
    let density = forward.solve(&drift)?;
    let mut csv = String::from("x,u\n");
    for i in 0..mesh.n_dofs() {
        writeln!(
            csv,
            "{},{}",
            sig17(mesh.node_x(i)),
            sig17(density.f.coeffs()[i])
        )
        .expect("writing to a string cannot fail");
    }
    write_out(&args.out, &csv)
}

fn read_observation_csv(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = line.split(',').next().expect("split is nonempty");
        match first.trim().parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if values.is_empty() => {}
            Err(e) => bail!("could not parse observation {line:?} in {}: {e}", path.display()),
        }
    }
    Ok(values)
}

/// One JSON line per outer iterate.
#[derive(Serialize)]
struct TraceLine {
    k: usize,
    alpha: Option<f64>,
    fidelity: f64,
    penalty: f64,
    l2_error: Option<f64>,
    inner_iterations: usize,
    selected: bool,
}

fn estimate(args: EstimateArgs) -> anyhow::Result<()> {
    let mesh = Mesh::new(args.domain[0], args.domain[1], args.mesh_elements)?;
    let points = read_observation_csv(&args.obs)?;
    let obs = ObservationSet::from_points(points, mesh.domain())?;
    let truth = args
        .truth
        .as_deref()
        .map(|spec| load_drift(spec, mesh))
        .transpose()?;
    let (a, b) = mesh.domain();
    let center = match (args.boundary, &truth) {
        (BoundaryArg::Fixed, Some(truth)) => {
            let (va, vb) = (truth.eval(a), truth.eval(b));
            DriftField::from_fn(mesh, move |x| va + (vb - va) * (x - a) / (b - a))
        }
        (BoundaryArg::Fixed, None) => {
            bail!("--boundary fixed needs --truth to supply the boundary values")
        }
        (BoundaryArg::Free, _) => DriftField::zeros(mesh),
    };
    let boundary = match args.boundary {
        BoundaryArg::Fixed => BoundaryMode::Fixed,
        BoundaryArg::Free => BoundaryMode::Free,
    };
    let gram = assemble(mesh, &DriftField::zeros(mesh), 1.0)?.h1_gram;
    let penalty = PenaltyConfig::new(center, gram, boundary)?;
    let config = NewtonConfig {
        alpha0: args.alpha0,
        decay_q: args.decay,
        max_outer: args.max_outer,
        tau: args.tau,
        ..NewtonConfig::default()
    };
    let kind = match args.fidelity {
        FidelityArg::Kl => FidelityKind::Kl,
        FidelityArg::L2 => FidelityKind::L2,
    };
    let data = FidelityData::from_observations(kind, &obs, mesh);
    let forward = ForwardOperator::stationary(mesh, args.sigma)?;
    let result = newton_estimate(&forward, &data, &penalty, &config, truth.as_ref())?;

    let mut recon = String::from(if truth.is_some() {
        "x,mu_hat,mu_true\n"
    } else {
        "x,mu_hat\n"
    });
    for i in 0..mesh.n_dofs() {
        let x = mesh.node_x(i);
        match &truth {
            Some(t) => writeln!(
                recon,
                "{},{},{}",
                sig17(x),
                sig17(result.drift.coeffs()[i]),
                sig17(t.coeffs()[i])
            ),
            None => writeln!(recon, "{},{}", sig17(x), sig17(result.drift.coeffs()[i])),
        }
        .expect("writing to a string cannot fail");
    }
    std::fs::write(&args.out_recon, recon)
        .with_context(|| format!("writing {}", args.out_recon.display()))?;

    let mut trace = String::new();
    for (k, entry) in result.trace.entries.iter().enumerate() {
        let line = TraceLine {
            k: entry.k,
            alpha: entry.alpha,
            fidelity: entry.fidelity,
            penalty: entry.penalty,
            l2_error: entry.l2_error,
            inner_iterations: entry.inner_iterations,
            selected: k == result.selected,
        };
        writeln!(trace, "{}", serde_json::to_string(&line)?)
            .expect("writing to a string cannot fail");
    }
    std::fs::write(&args.out_trace, trace)
        .with_context(|| format!("writing {}", args.out_trace.display()))?;

    if let Some(err) = result.selected_normalized_error() {
        println!(
            "selected iterate {} with normalized error {err:.6}",
            result.selected
        );
    } else {
        println!("returned final iterate {}", result.selected);
    }
    Ok(())
}

fn mc_study(args: McStudyArgs) -> anyhow::Result<()> {
    let mut cfg: StudyConfig = match &args.config {
        None => StudyConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
    };
    if let Some(reps) = args.replications {
        cfg.replications = reps;
    }
    let report = experiments::run_study(&cfg)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    // The effective configuration is part of the artifacts so results can
    // be reproduced without the invocation.
    std::fs::write(args.out.join("study_config.toml"), toml::to_string_pretty(&cfg)?)?;
    let files = experiments::emit_report(&report, &args.out)?;
    println!(
        "study complete: {} replications, {} failed, {} files",
        report.replications,
        report.failures,
        files.len() + 1
    );
    for &n_obs in &report.n_obs_list {
        let kl = report.mean(n_obs, FidelityKind::Kl).expect("cell exists");
        let l2 = report.mean(n_obs, FidelityKind::L2).expect("cell exists");
        println!("n = {n_obs:5}: likelihood mean {kl:.4}, quadratic mean {l2:.4}");
    }
    Ok(())
}

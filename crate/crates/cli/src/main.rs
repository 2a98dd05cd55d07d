//! `lapline`: plan references, fit tires, validate margins, score laps.
//!
//! Exit codes: 0 success, 1 other failure, 2 solver did not converge,
//! 3 configuration or usage error.

mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lapline::backoff::{write_backoff_csv, Constraint, Variant};
use lapline::config::Scene;
use lapline::metrics::{
    lap_split, markdown_summary, score_lap, summarize, write_lap_csv, ReferenceFrame, ReferencePath, StartLine,
    RESAMPLE_SPACING,
};
use lapline::montecarlo::{
    most_active_friction_node, rollout_window, tuning_probe, write_validation_csv, Family, OpenLoopPlan,
    ValidationRow,
};
use lapline::planner::export::{load_reference, ribbon, write_reference, write_ribbon, Reference};
use lapline::planner::Planner;
use lapline::telemetry::load_telemetry;
use lapline::tirefit::{assemble_training, fit_axle, load_axle_params, write_fit_report, BandFilter};
use lapline::vehicle::{Axle, AxleTireParams};
use lapline::Error;
use manifest::RunManifest;

const THREADS_VAR: &str = "ROBUST_LAPLINE_THREADS";

/// Half-width of the start gate when it is taken from a reference [m].
const REFERENCE_GATE: f64 = 15.0;

#[derive(Parser, Debug)]
#[command(name = "lapline", version, about = "Disturbance-aware minimum-lap-time references")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one variant and export the reference, ribbon and back-off table.
    Plan(PlanArgs),
    /// Identify an axle's tire coefficients from telemetry.
    Fit(FitArgs),
    /// Monte Carlo check of the constraint margins of a reference.
    Validate(ValidateArgs),
    /// Per-lap indicators and the summary tables.
    Metrics(MetricsArgs),
    /// Saturating ramp-steer maneuver used to calibrate the noise model.
    Probe(ProbeArgs),
}

#[derive(Args, Debug)]
struct Overrides {
    /// Quantile multiplier applied to every tightened constraint.
    #[arg(long, conflicts_with = "p")]
    gamma: Option<f64>,
    /// Satisfaction probability for every tightened constraint.
    #[arg(long)]
    p: Option<f64>,
    /// Covariance propagation horizon in intervals.
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of spatial intervals.
    #[arg(long)]
    grid_n: Option<usize>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxleArg {
    Front,
    Rear,
}

impl From<AxleArg> for Axle {
    fn from(a: AxleArg) -> Self {
        match a {
            AxleArg::Front => Axle::Front,
            AxleArg::Rear => Axle::Rear,
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    telemetry: PathBuf,
    #[arg(long, value_enum)]
    axle: AxleArg,
    /// Starting coefficients; the tabulated starting values otherwise.
    #[arg(long)]
    start: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Reference CSV written by `plan`.
    #[arg(long)]
    plan: PathBuf,
    /// Scene providing the track, vehicle and noise model.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    horizon: Option<usize>,
    /// Node whose constraints are checked; the most active friction node otherwise.
    #[arg(long)]
    node: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Telemetry CSV; repeat for several runs of the same driver and condition.
    #[arg(long, required = true)]
    telemetry: Vec<PathBuf>,
    #[arg(long)]
    reference: PathBuf,
    /// Scene whose track defines the start line and metrics frame.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Driver label.
    #[arg(long, default_value = "driver")]
    label: String,
    /// Condition label; the reference variant otherwise.
    #[arg(long)]
    condition: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProbeArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, conflicts_with = "p")]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Command failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } => 2,
            Error::Config(_)
            | Error::Schema(_)
            | Error::MalformedTrack(_)
            | Error::Topology(_)
            | Error::GridTooCoarse(_)
            | Error::InfeasibleCorridor { .. } => 3,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: 3, message: message.into() }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let result = init_threads().and_then(|_| match cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Probe(a) => cmd_probe(a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| config_error(format!("{THREADS_VAR}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| config_error(e.to_string()))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| config_error(format!("{}: {e}", dir.display())))
}

fn load_scene_with(path: &Path, edit: impl FnOnce(&mut lapline::config::SceneFile)) -> Result<Scene, Failure> {
    let base = Scene::load(path)?;
    let mut file = base.file;
    edit(&mut file);
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Scene::from_file(file, &dir)?)
}

fn apply_overrides(file: &mut lapline::config::SceneFile, o: &Overrides) {
    if let Some(g) = o.gamma {
        file.backoff.gamma = Some(g);
    }
    if let Some(p) = o.p {
        file.backoff.gamma = None;
        file.backoff.p_track = Some(p);
        file.backoff.p_friction = Some(p);
    }
    if let Some(h) = o.horizon {
        file.noise.h = h;
    }
    if let Some(n) = o.grid_n {
        file.grid.n = n;
    }
}

fn cmd_plan(a: PlanArgs) -> CmdResult {
    let scene = load_scene_with(&a.scene, |f| {
        if let Some(v) = a.variant {
            f.variant = Some(v.to_string());
        }
        apply_overrides(f, &a.overrides);
    })?;
    prepare_out(&a.out)?;
    let mut m = RunManifest::start("plan");
    m.config(&scene.canonical());
    m.input(&a.scene)?;
    let variant = scene.variant;
    let planner = Planner::new(&scene.track, &scene.vehicle, scene.planner.clone())?;
    let plan = planner.plan(variant)?;

    let stem = variant.to_string();
    let reference = a.out.join(format!("{stem}_reference.csv"));
    write_reference(&reference, &Reference::from(&plan))?;
    let ribbon_path = a.out.join(format!("{stem}_ribbon.csv"));
    write_ribbon(&ribbon_path, &ribbon(&plan.nodes, scene.driver_offset))?;
    let backoff = a.out.join(format!("{stem}_backoff.csv"));
    write_backoff_csv(&backoff, &plan.backoffs, |k| planner.grid.s(k))?;
    let log_path = a.out.join(format!("{stem}_solver.log"));
    let st = &plan.stats;
    let mut log = String::new();
    let _ = writeln!(log, "variant {variant}");
    let _ = writeln!(log, "lap_time {:.9e}", plan.lap_time);
    let _ = writeln!(log, "converged {} iterations {} kkt_error {:.3e}", st.converged, st.iterations, st.kkt_error);
    let _ = writeln!(log, "sweeps {} sweeps_converged {}", st.sweeps, st.sweeps_converged);
    let _ = writeln!(log, "slack_mass {:.3e} regularizer_share {:.3e}", st.slack_mass, st.regularizer_share);
    let _ = writeln!(log, "variables {} constraints {}", st.variables, st.constraints);
    for line in &plan.log {
        let _ = writeln!(log, "{line}");
    }
    std::fs::write(&log_path, log)?;
    for p in [&reference, &ribbon_path, &backoff, &log_path] {
        m.output(p)?;
    }
    let code = if st.converged { 0 } else { 2 };
    if code != 0 {
        eprintln!("error: {}", plan.ensure_converged().unwrap_err());
    }
    m.finish(&a.out.join(format!("plan_{stem}.manifest.json")), code.into())?;
    Ok(code)
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    prepare_out(&a.out)?;
    let axle: Axle = a.axle.into();
    let start = match &a.start {
        Some(p) => load_axle_params(p)?,
        None => AxleTireParams::START,
    };
    let mut m = RunManifest::start("fit");
    m.input(&a.telemetry)?;
    if let Some(p) = &a.start {
        m.input(p)?;
    }
    m.config(&format!("axle = {axle:?}\nstart = {:?}\n", start.to_array()));
    let log = load_telemetry(&a.telemetry)?;
    let train = assemble_training(&log, axle, &BandFilter::default())?;
    let rep = fit_axle(&train, &start)?;
    let name = match axle {
        Axle::Front => "front",
        Axle::Rear => "rear",
    };
    let out = a.out.join(format!("fit_{name}.toml"));
    write_fit_report(&out, axle, &rep)?;
    m.output(&out)?;
    let code = if rep.converged { 0 } else { 2 };
    if code != 0 {
        eprintln!("error: fit did not converge after {} iterations", rep.iterations);
    }
    m.finish(&a.out.join(format!("fit_{name}.manifest.json")), code.into())?;
    Ok(code)
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let scene = load_scene_with(&a.scene, |f| {
        if let Some(h) = a.horizon {
            f.noise.h = h;
        }
    })?;
    prepare_out(&a.out)?;
    let reference = load_reference(&a.plan)?;
    let mut m = RunManifest::start("validate");
    m.seed = Some(a.seed);
    m.input(&a.plan)?;
    m.input(&a.scene)?;
    m.config(&format!("{}samples = {}\nnode = {:?}\n", scene.canonical(), a.samples, a.node));
    let intervals = reference.nodes.len() - 1;
    let node = match a.node {
        Some(k) if k <= intervals => k,
        Some(k) => return Err(config_error(format!("node {k} outside the plan (0..={intervals})"))),
        None => most_active_friction_node(&reference.nodes, reference.closed)
            .map(|(k, _)| k)
            .ok_or_else(|| config_error("the plan tightens no friction row; pass --node"))?,
    };
    let h = scene.planner.horizon;
    let start = if reference.closed {
        (node + intervals - h % intervals) % intervals
    } else {
        node.checked_sub(h).ok_or_else(|| config_error(format!("node {node} has fewer than {h} intervals before it")))?
    };
    let plan = OpenLoopPlan { nodes: &reference.nodes, closed: reference.closed };
    let batch =
        rollout_window(&scene.vehicle, &scene.track, &plan, start, h, &scene.planner.noise, a.samples, a.seed)?;
    let s = reference.nodes[batch.end].s;
    let rows: Vec<ValidationRow> = Family::ALL.iter().map(|f| ValidationRow::from_batch(&batch, s, *f)).collect();
    let out = a.out.join("validation.csv");
    write_validation_csv(&out, &rows)?;
    if batch.diverged > 0 {
        eprintln!("warning: {} of {} samples diverged and count as violations", batch.diverged, batch.samples);
    }
    m.output(&out)?;
    m.finish(&a.out.join("validate.manifest.json"), 0)?;
    Ok(0)
}

fn cmd_metrics(a: MetricsArgs) -> CmdResult {
    prepare_out(&a.out)?;
    let reference = load_reference(&a.reference)?;
    let scene = a.scene.as_deref().map(Scene::load).transpose()?;
    let (line, frame) = match &scene {
        Some(s) => (StartLine::from_track(&s.track), s.frame),
        None => (StartLine::from_reference(&reference, REFERENCE_GATE), ReferenceFrame::Com),
    };
    let condition = a.condition.clone().unwrap_or_else(|| reference.variant.to_string().to_uppercase());
    let mut m = RunManifest::start("metrics");
    m.input(&a.reference)?;
    if let Some(p) = &a.scene {
        m.input(p)?;
    }
    for t in &a.telemetry {
        m.input(t)?;
    }
    m.config(&format!(
        "{}driver = {:?}\ncondition = {condition:?}\nframe = {frame:?}\n",
        scene.as_ref().map(Scene::canonical).unwrap_or_default(),
        a.label
    ));
    let path = ReferencePath::new(&reference, frame, RESAMPLE_SPACING)?;
    let mut laps = Vec::new();
    let mut index = 0;
    for t in &a.telemetry {
        let log = load_telemetry(t)?;
        for mut lap in lap_split(&log, &line)? {
            lap.index = index;
            index += 1;
            laps.push(score_lap(&lap, &path, frame, &a.label, &condition)?);
        }
    }
    let csv = a.out.join("metrics_laps.csv");
    write_lap_csv(&csv, &laps)?;
    let md = a.out.join("metrics_summary.md");
    std::fs::write(&md, markdown_summary(&summarize(&laps)))?;
    m.output(&csv)?;
    m.output(&md)?;
    m.finish(&a.out.join("metrics.manifest.json"), 0)?;
    Ok(0)
}

fn cmd_probe(a: ProbeArgs) -> CmdResult {
    prepare_out(&a.out)?;
    let mut m = RunManifest::start("probe");
    let mut scene = match &a.scene {
        Some(p) => {
            m.input(p)?;
            Scene::load(p)?
        }
        None => Scene::parse("track = \"builtin:circle\"\n", Path::new("."))?,
    };
    if let Some(g) = a.gamma {
        scene.planner.backoff.gamma = Some(g);
    }
    if let Some(p) = a.p {
        scene.planner.backoff.gamma = None;
        scene.planner.backoff.p_friction = p;
    }
    let horizon = a.horizon.unwrap_or(scene.planner.horizon);
    let gamma = scene.planner.backoff.multiplier(Constraint::Friction(Axle::Front))?;
    m.config(&format!("{}horizon = {horizon}\ngamma = {gamma:?}\n", scene.canonical()));
    let rep = tuning_probe(&scene.vehicle, &scene.planner.noise, horizon, gamma)?;
    let out = a.out.join("probe.toml");
    let text = format!(
        "horizon = {horizon}\ngamma = {gamma:.9e}\nmax_beta = {:.9e}\nmax_beta_axle = \"{}\"\nsaturation_at_max = {:.9e}\npeak_saturation = {:.9e}\nsteps = {}\n",
        rep.max_beta,
        if rep.max_beta_axle == Axle::Front { "front" } else { "rear" },
        rep.saturation_at_max,
        rep.peak_saturation,
        rep.steps
    );
    std::fs::write(&out, text)?;
    m.output(&out)?;
    m.finish(&a.out.join("probe.manifest.json"), 0)?;
    Ok(0)
}

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlcd_core::hierarchy::{forward_pass, nominal_position};
use mlcd_core::io::{read_plan_trace, write_certification, write_desired_trajectory, write_plan_trace, write_sim_log, Format};
use mlcd_core::qp::PlanStep;
use mlcd_core::safety::{alpha_bounds, certify_configuration, CertificationReport};
use mlcd_core::scenario::{builtin, ModeSetting, Scenario, ScenarioDocument};
use mlcd_core::sim::{run_simulation, tracking_error};
use mlcd_core::trajectory::time_grid;

/// Plan, simulate and certify multi-layer continuum deformation of an agent team.
#[derive(Parser)]
#[command(name = "mlcd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scale-factor QP over the time grid and write the planner trace.
    Plan(Common),
    /// Run the closed-loop simulation and write the trajectory log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Agents follow their desired positions exactly.
        #[arg(long)]
        open_loop: bool,
    },
    /// Certify a plan; exits 1 when any step is unsafe.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Planner trace to certify; planned from the scenario when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a built-in scenario (helix67).
    #[arg(long, default_value = "helix67")]
    config: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Time step, seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Duration, seconds.
    #[arg(long = "T")]
    duration: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Consistent,
    PaperExact,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Text => Format::Text,
        }
    }
}

enum Outcome {
    Success,
    Unsafe,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Unsafe) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err.chain().any(|e| e.downcast_ref::<mlcd_core::Error>().is_some_and(|e| e.is_numerical()));
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Plan(common) => plan(&common),
        Command::Simulate { common, open_loop } => simulate(&common, open_loop),
        Command::Certify { common, plan } => certify(&common, plan.as_deref()),
    }
}

fn load(common: &Common, open_loop: bool) -> Result<Scenario> {
    let path = Path::new(&common.config);
    let mut doc = if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ScenarioDocument::parse(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        builtin(&common.config)
            .with_context(|| format!("no scenario file or built-in scenario named {:?}", common.config))?
    };
    if let Some(dt) = common.dt {
        doc.sim.dt = dt;
    }
    if let Some(t) = common.duration {
        doc.trajectory.duration = t;
    }
    if let Some(m) = common.mode {
        doc.qp.mode = match m {
            Mode::Consistent => ModeSetting::Consistent,
            Mode::PaperExact => ModeSetting::PaperExact,
        };
    }
    if open_loop {
        doc.sim.open_loop = true;
    }
    let scenario = doc.resolve().context("loading scenario")?;
    let report = mlcd_core::team::validate_team(&scenario.team);
    for w in &report.warnings {
        eprintln!("warning: {}", w.message);
    }
    Ok(scenario)
}

fn create(common: &Common, stem: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let path = common.out.join(format!("{stem}.{}", Format::from(common.format).extension()));
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

fn schedule(s: &Scenario) -> Result<Vec<PlanStep>> {
    let grid = time_grid(s.sim.dt, s.trajectory.duration)?;
    Ok(s.planner.schedule(&s.trajectory, &grid)?)
}

fn write_plan(common: &Common, s: &Scenario, plan: &[PlanStep]) -> Result<PathBuf> {
    let (path, mut w) = create(common, "plan")?;
    write_plan_trace(&mut w, plan, s.team.partition.n_pl(), common.format.into())?;
    Ok(path)
}

fn print_plan_summary(s: &Scenario, plan: &[PlanStep]) -> Result<()> {
    let bounds = s.planner.bounds();
    println!("scenario {}: {} agents, {} samples", s.name, s.team.agent_count, plan.len());
    if let Ok(window) = alpha_bounds(&s.team) {
        println!("safety window: [{}, {}]", window.min, window.max);
    }
    println!("alpha bounds used: [{}, {}]", bounds.min, bounds.max);
    let nb = s.team.partition.n_pl() - 1;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut deviation: f64 = 0.0;
    for step in plan {
        for &a in &step.alpha.as_slice()[..nb] {
            lo = lo.min(a);
            hi = hi.max(a);
        }
        let p = nominal_position(&s.team, &s.weights, &step.alpha, &step.s, s.averaging)?;
        deviation = deviation.max((p - step.s).norm());
    }
    println!("alpha range observed: [{lo}, {hi}]");
    println!("max |p - s|: {deviation:e} m");
    println!("max KKT residual: {:e}", plan.iter().map(|p| p.kkt.max()).fold(0.0, f64::max));
    Ok(())
}

fn plan(common: &Common) -> Result<Outcome> {
    let s = load(common, false)?;
    let plan = schedule(&s)?;
    let plan_path = write_plan(common, &s, &plan)?;
    let desired = plan
        .iter()
        .map(|step| forward_pass(&s.team, &s.weights, &step.alpha, &step.s))
        .collect::<mlcd_core::Result<Vec<_>>>()?;
    let times: Vec<f64> = plan.iter().map(|p| p.t).collect();
    let (desired_path, mut w) = create(common, "desired")?;
    write_desired_trajectory(&mut w, &times, &desired, common.format.into())?;
    print_plan_summary(&s, &plan)?;
    println!("wrote {} and {}", plan_path.display(), desired_path.display());
    Ok(Outcome::Success)
}

fn simulate(common: &Common, open_loop: bool) -> Result<Outcome> {
    let s = load(common, open_loop)?;
    let log = run_simulation(&s.team, &s.weights, &s.planner, &s.trajectory, &s.sim)?;
    let plan_path = write_plan(common, &s, &log.plan)?;
    let (log_path, mut w) = create(common, "trajectory")?;
    write_sim_log(&mut w, &log, common.format.into())?;
    print_plan_summary(&s, &log.plan)?;

    let delta = s.team.safety.delta;
    let epsilon = s.team.safety.epsilon;
    let tracking = tracking_error(&log)?;
    let after = tracking.max_after(&log.times, s.sim.transient);
    println!(
        "max tracking error: {} m (step {}, agent {}); after {} s: {} m vs delta = {} m",
        tracking.max, tracking.step, tracking.agent, s.sim.transient, after, delta
    );
    let min_distance = log.min_distance.iter().copied().fold(f64::INFINITY, f64::min);
    println!("min pairwise distance: {} m vs 2 epsilon = {} m", min_distance, 2.0 * epsilon);
    println!("wrote {} and {}", plan_path.display(), log_path.display());
    if !log.delta_exceedances.is_empty() {
        println!("tracking error exceeded delta at {} steps after the transient", log.delta_exceedances.len());
    }
    if min_distance < 2.0 * epsilon || !log.delta_exceedances.is_empty() {
        println!("verdict: UNSAFE");
        return Ok(Outcome::Unsafe);
    }
    println!("verdict: safe");
    Ok(Outcome::Success)
}

fn certify(common: &Common, plan_path: Option<&Path>) -> Result<Outcome> {
    let s = load(common, false)?;
    let plan = match plan_path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            read_plan_trace(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => schedule(&s)?,
    };
    let report = certify_configuration(&s.team, &s.weights, &plan, None, None)?;
    let (path, mut w) = create(common, "certificate")?;
    write_certification(&mut w, &report, common.format.into())?;
    print_certificate_summary(&report);
    println!("wrote {}", path.display());
    Ok(if report.is_safe() { Outcome::Success } else { Outcome::Unsafe })
}

fn print_certificate_summary(report: &CertificationReport) {
    println!("steps certified: {}", report.steps.len());
    println!("min spectral margin: {}", report.min_margin());
    println!(
        "min desired distance: {} m vs 2(delta + epsilon) = {} m",
        report.min_desired_distance(),
        report.clearance
    );
    let violations = report.violations();
    match violations.first() {
        None => println!("verdict: safe"),
        Some(v) => {
            println!("verdict: UNSAFE ({} violations)", violations.len());
            println!("first violation: {v}");
        }
    }
}

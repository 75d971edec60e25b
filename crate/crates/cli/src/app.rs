use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cohesion::collections::{
    core_membership, eta_residual, is_balanced, least_core, project_to_core, NONEMPTY_TOL,
};
use cohesion::fields::{evaluate, region_affine};
use cohesion::flow::{realm_probe, uniform_ball_ensemble, FlowConfig, Integrator, ProbeSummary, Status};
use cohesion::game::{project_to_x, subset_sums};
use cohesion::{Coalition, CoalitionCollection, Game, Preimputation};

use crate::fsio::write_atomic;
use crate::gamefile::{default_players, parse_collection, GameFile};
use crate::plot::{render, PlotOptions};
use crate::report::{ExcessRow, HistogramBin, Report, Violation};
use crate::trajectory;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("x is not efficient: coordinates sum to {0:e} (pass --project to project onto X)")]
    NotEfficient(f64),
    #[error("flow stopped without converging: {0}")]
    Unfinished(&'static str),
    #[error("the core is empty (least-core value {0})")]
    EmptyCore(f64),
    #[error("plots need exactly 3 players, the game has {0}")]
    PlotDimension(usize),
    #[error("{failed} of {runs} starts did not reach the core")]
    ProbeFailed { failed: usize, runs: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Core(cohesion::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::NotEfficient(_) => 3,
            CliError::Unfinished(_) => 4,
            CliError::EmptyCore(_) => 5,
            CliError::PlotDimension(_) => 6,
            CliError::ProbeFailed { .. } | CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

impl From<cohesion::Error> for CliError {
    fn from(e: cohesion::Error) -> Self {
        use cohesion::Error as E;
        match e {
            E::EmptyCore(eps) => CliError::EmptyCore(eps),
            E::Config(_)
            | E::Dimension { .. }
            | E::PlayerCount(_)
            | E::InvalidCoalition { .. }
            | E::NotNormalized(_)
            | E::TableLength { .. }
            | E::DuplicateCoalition(_) => CliError::Input(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cohesion", version, about = "Dissatisfaction and cohesion fields of TU games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Excesses, aggrieved coalitions, theta and phi at a preimputation.
    Eval {
        game: PathBuf,
        /// Comma-separated payoffs, e.g. "-4,-3,7".
        #[arg(allow_hyphen_values = true)]
        x: String,
        /// Project x onto the efficient plane instead of refusing it.
        #[arg(long)]
        project: bool,
        #[arg(long)]
        json: bool,
    },
    /// Integrates the cohesion flow from x0.
    Flow {
        game: PathBuf,
        #[arg(allow_hyphen_values = true)]
        x0: String,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        project: bool,
        /// Trajectory file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Core queries.
    Core {
        #[command(subcommand)]
        query: CoreQuery,
    },
    /// Balancedness of a collection such as "a+b|b+c|a+c".
    Balanced {
        collection: String,
        #[arg(long)]
        n: usize,
        /// Comma-separated player names (default a, b, c, ...).
        #[arg(long)]
        players: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// SVG figure of a 3-player game.
    Plot {
        game: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_heatmap: bool,
        #[arg(long)]
        no_field: bool,
        /// Start of a trajectory to overlay; repeatable.
        #[arg(long = "start", allow_hyphen_values = true)]
        starts: Vec<String>,
        /// Number of extra random starts.
        #[arg(long, default_value_t = 0)]
        random_starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Half-width of the plotted square in plane coordinates.
        #[arg(long, default_value_t = 10.0)]
        extent: f64,
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long, default_value_t = 20)]
        arrows: usize,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        json: bool,
    },
    /// Runs the flow from a seeded ensemble and summarizes where it ends.
    Probe {
        game: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 100.0)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flow: FlowArgs,
        /// Per-run report as comma-separated rows.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum CoreQuery {
    /// Is x in the core?
    Check {
        game: PathBuf,
        #[arg(allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        json: bool,
    },
    /// Is the core nonempty?
    Nonempty {
        game: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Least-core value and a witness.
    Least {
        game: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Euclidean projection of x onto the core.
    Project {
        game: PathBuf,
        #[arg(allow_hyphen_values = true)]
        x: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    Rk4,
    Adaptive,
    Exact,
}

impl From<IntegratorArg> for Integrator {
    fn from(a: IntegratorArg) -> Self {
        match a {
            IntegratorArg::Rk4 => Integrator::Rk4,
            IntegratorArg::Adaptive => Integrator::Adaptive,
            IntegratorArg::Exact => Integrator::Exact,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[arg(long, value_enum, default_value_t = IntegratorArg::Exact)]
    pub integrator: IntegratorArg,
    /// Fixed step of the RK4 integrator.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Local error tolerance of the adaptive integrator.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub stop_phi: Option<f64>,
    /// Record every k-th step.
    #[arg(long)]
    pub stride: Option<usize>,
}

impl FlowArgs {
    pub fn config(&self) -> CliResult<FlowConfig> {
        let mut cfg = FlowConfig::default();
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.tol {
            cfg.adaptive_tol = v;
        }
        if let Some(v) = self.t_max {
            cfg.t_max = v;
        }
        if let Some(v) = self.stop_phi {
            cfg.stop_phi_norm = v;
        }
        if let Some(v) = self.stride {
            cfg.sample_stride = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_game(path: &Path) -> CliResult<Game> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let file = GameFile::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(file.game()?)
}

pub fn parse_vector(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("not a finite number: {s:?}")))
        })
        .collect()
}

/// Parses a payoff vector for `g`, projecting it onto X when asked.
fn point(g: &Game, text: &str, project: bool) -> CliResult<(Preimputation, bool)> {
    let x = parse_vector(text)?;
    g.check_dim(x.len())?;
    if project {
        return Ok((project_to_x(&x), true));
    }
    let sum: f64 = x.iter().sum();
    if sum.abs() > 1e-9 {
        return Err(CliError::NotEfficient(sum));
    }
    Ok((Preimputation::new(x)?, false))
}

fn names(g: &Game) -> Vec<String> {
    (0..g.n()).map(|i| g.player_name(i)).collect()
}

fn label(g: &Game, c: Coalition) -> String {
    c.label(g.names())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{}", x + 0.0)).collect();
    format!("({})", parts.join(", "))
}

fn emit(out: &mut dyn Write, report: &Report) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, report).map_err(|e| CliError::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

/// Runs one command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Eval { game, x, project, json } => eval(&load_game(&game)?, &x, project, json, out),
        Command::Flow { game, x0, flow, project, out: path, json } => {
            flow_cmd(&load_game(&game)?, &x0, &flow, project, path.as_deref(), json, out)
        }
        Command::Core { query } => core_cmd(query, out),
        Command::Balanced { collection, n, players, json } => balanced(&collection, n, players.as_deref(), json, out),
        Command::Plot { game, out: path, no_heatmap, no_field, starts, random_starts, seed, extent, grid, arrows, flow, json } => {
            let g = load_game(&game)?;
            let opts = PlotOptions {
                extent,
                heatmap: !no_heatmap,
                heatmap_cells: grid,
                field: !no_field,
                arrow_cells: arrows,
                ..Default::default()
            };
            plot_cmd(&g, &opts, &starts, random_starts, seed, &flow, &path, json, out)
        }
        Command::Probe { game, count, radius, seed, flow, report, json } => {
            probe_cmd(&load_game(&game)?, count, radius, seed, &flow, report.as_deref(), json, out)
        }
    }
}

fn eval(g: &Game, x: &str, project: bool, json: bool, out: &mut dyn Write) -> CliResult<()> {
    let (x, projected) = point(g, x, project)?;
    let fp = evaluate(g, x.as_slice());
    let sums = subset_sums(x.as_slice());
    let rows: Vec<ExcessRow> = (1..=cohesion::game::grand_mask(g.n()))
        .map(|m| {
            let c = Coalition::new(m, g.n()).unwrap();
            ExcessRow {
                coalition: label(g, c),
                worth: g.value_of_mask(m),
                payment: sums[m as usize],
                excess: g.value_of_mask(m) - sums[m as usize],
            }
        })
        .collect();
    let coll = fp.collection();
    let lipschitz = region_affine(g, &coll).lipschitz();
    let aggrieved: Vec<String> = coll.members().iter().map(|&c| label(g, c)).collect();
    let report = Report::Eval {
        players: names(g),
        x: x.as_slice().to_vec(),
        projected,
        excesses: rows,
        aggrieved,
        theta: fp.theta,
        phi: fp.phi.clone(),
        phi_norm: fp.phi_norm(),
        lipschitz,
        in_core: fp.aggrieved.is_empty(),
    };
    if json {
        return emit(out, &report);
    }
    let Report::Eval { excesses, aggrieved, theta, phi, phi_norm, lipschitz, in_core, .. } = &report else {
        unreachable!()
    };
    if projected {
        writeln!(out, "x projected onto X: {}", fmt_vec(x.as_slice()))?;
    } else {
        writeln!(out, "x = {}", fmt_vec(x.as_slice()))?;
    }
    writeln!(out, "{:<16} {:>14} {:>14} {:>14}", "coalition", "worth", "payment", "excess")?;
    for r in excesses {
        writeln!(out, "{:<16} {:>14.6} {:>14.6} {:>14.6}", r.coalition, r.worth, r.payment, r.excess)?;
    }
    writeln!(out, "aggrieved: {}", if aggrieved.is_empty() { "none".into() } else { aggrieved.join(" | ") })?;
    writeln!(out, "theta = {theta}")?;
    writeln!(out, "phi = {} (norm {phi_norm})", fmt_vec(phi))?;
    writeln!(out, "region Lipschitz constant = {lipschitz}")?;
    writeln!(out, "{}", if *in_core { "in core" } else { "not in core" })?;
    Ok(())
}

fn flow_cmd(
    g: &Game,
    x0: &str,
    args: &FlowArgs,
    project: bool,
    path: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let (x0, _) = point(g, x0, project)?;
    let cfg = args.config()?;
    let integrator = Integrator::from(args.integrator);
    let traj = integrator.run(g, &x0, &cfg)?;
    if let Some(path) = path {
        write_atomic(path, trajectory::write(&traj).as_bytes())?;
    }
    let last = traj.last();
    let report = Report::Flow {
        integrator: integrator.as_str().into(),
        status: traj.status.as_str().into(),
        final_point: last.x.clone(),
        final_theta: last.theta,
        final_phi_norm: last.phi_norm,
        final_time: last.t,
        samples: traj.samples.len(),
        steps: traj.stats.steps,
        rejected_steps: traj.stats.rejected_steps,
        region_crossings: traj.stats.region_crossings,
        fallbacks: traj.stats.fallbacks,
        output: path.map(|p| p.display().to_string()),
    };
    if json {
        emit(out, &report)?;
    } else {
        writeln!(out, "status: {}", traj.status.as_str())?;
        writeln!(out, "final point: {}", fmt_vec(&last.x))?;
        writeln!(out, "final theta: {}", last.theta)?;
        writeln!(out, "final |phi|: {}", last.phi_norm)?;
        writeln!(out, "time: {}", last.t)?;
        writeln!(
            out,
            "steps: {} (rejected {}, region crossings {}, fallbacks {})",
            traj.stats.steps, traj.stats.rejected_steps, traj.stats.region_crossings, traj.stats.fallbacks
        )?;
        if let Some(path) = path {
            writeln!(out, "wrote {} samples to {}", traj.samples.len(), path.display())?;
        }
    }
    match traj.status {
        Status::MaxTime | Status::StepUnderflow => Err(CliError::Unfinished(traj.status.as_str())),
        _ => Ok(()),
    }
}

fn core_cmd(query: CoreQuery, out: &mut dyn Write) -> CliResult<()> {
    match query {
        CoreQuery::Check { game, x, tol, json } => {
            let g = load_game(&game)?;
            let (x, _) = point(&g, &x, false)?;
            let r = core_membership(&g, &x, tol)?;
            let violations: Vec<Violation> =
                r.violations.iter().map(|&(c, e)| Violation { coalition: label(&g, c), excess: e }).collect();
            if json {
                return emit(out, &Report::CoreCheck { member: r.member, tolerance: r.tolerance, violations });
            }
            if r.member {
                writeln!(out, "member of the core (tolerance {:e})", r.tolerance)?;
            } else {
                writeln!(out, "not in the core (tolerance {:e}); violated:", r.tolerance)?;
                for v in violations {
                    writeln!(out, "  {:<16} excess {}", v.coalition, v.excess)?;
                }
            }
            Ok(())
        }
        CoreQuery::Nonempty { game, json } => {
            let g = load_game(&game)?;
            let (eps, _) = least_core(&g)?;
            let nonempty = eps <= NONEMPTY_TOL;
            if json {
                return emit(out, &Report::CoreNonempty { nonempty, least_core_value: eps });
            }
            writeln!(out, "core {} (least-core value {eps})", if nonempty { "nonempty" } else { "empty" })?;
            Ok(())
        }
        CoreQuery::Least { game, json } => {
            let g = load_game(&game)?;
            let (eps, w) = least_core(&g)?;
            let nonempty = eps <= NONEMPTY_TOL;
            if json {
                return emit(out, &Report::CoreLeast { least_core_value: eps, nonempty, witness: w.as_slice().to_vec() });
            }
            let verdict = if nonempty { "core nonempty" } else { "core empty" };
            writeln!(out, "least-core value {eps} ({verdict}), witness {}", fmt_vec(w.as_slice()))?;
            Ok(())
        }
        CoreQuery::Project { game, x, json } => {
            let g = load_game(&game)?;
            let (x, _) = point(&g, &x, false)?;
            let p = project_to_core(&g, &x)?;
            let distance =
                x.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if json {
                return emit(out, &Report::CoreProject { point: p.as_slice().to_vec(), distance });
            }
            writeln!(out, "projection {} at distance {distance}", fmt_vec(p.as_slice()))?;
            Ok(())
        }
    }
}

fn balanced(spec: &str, n: usize, players: Option<&str>, json: bool, out: &mut dyn Write) -> CliResult<()> {
    let players: Vec<String> = match players {
        Some(p) => p.split(',').map(|s| s.trim().to_string()).collect(),
        None => default_players(n),
    };
    if players.len() != n {
        return Err(CliError::Input(format!("{} player names for n = {n}", players.len())));
    }
    let members = parse_collection(spec, &players).map_err(CliError::Input)?;
    let coll = CoalitionCollection::new(members)?;
    let result = is_balanced(&coll, n);
    let labels: Vec<String> = coll.members().iter().map(|c| c.label(Some(&players))).collect();
    let (weights, residual) = match &result.weights {
        Some(w) => (Some(w.weights().to_vec()), Some(eta_residual(&coll, w.weights(), n)?)),
        None => (None, None),
    };
    if json {
        return emit(
            out,
            &Report::Balanced { collection: labels, balanced: result.is_balanced(), weights, eta_residual: residual },
        );
    }
    match (weights, residual) {
        (Some(w), Some(r)) => {
            writeln!(out, "balanced")?;
            for (l, w) in labels.iter().zip(&w) {
                writeln!(out, "  {l:<16} {w}")?;
            }
            writeln!(out, "eta residual: {r:e}")?;
        }
        _ => writeln!(out, "unbalanced")?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn plot_cmd(
    g: &Game,
    opts: &PlotOptions,
    starts: &[String],
    random_starts: usize,
    seed: u64,
    args: &FlowArgs,
    path: &Path,
    json: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    if g.n() != 3 {
        return Err(CliError::PlotDimension(g.n()));
    }
    if !(opts.extent > 0.0) || opts.heatmap_cells == 0 || opts.arrow_cells == 0 {
        return Err(CliError::Input("extent, grid and arrows must be positive".into()));
    }
    let cfg = args.config()?;
    let mut x0s = Vec::new();
    for s in starts {
        x0s.push(point(g, s, true)?.0);
    }
    x0s.extend(uniform_ball_ensemble(3, random_starts, 0.9 * opts.extent, seed));
    let integrator = Integrator::from(args.integrator);
    let mut paths = Vec::new();
    for x0 in &x0s {
        let traj = integrator.run(g, x0, &cfg)?;
        paths.push(traj.samples.iter().map(|s| s.x.clone()).collect::<Vec<_>>());
    }
    write_atomic(path, render(g, opts, &paths).as_bytes())?;
    if json {
        return emit(out, &Report::Plot { output: path.display().to_string(), trajectories: paths.len() });
    }
    writeln!(out, "wrote {} ({} trajectories)", path.display(), paths.len())?;
    Ok(())
}

/// Rayon pool sized by `COHESION_THREADS` when set.
fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("COHESION_THREADS") {
        let k: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| CliError::Input(format!("COHESION_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(k);
    }
    builder.build().map_err(|e| CliError::Input(e.to_string()))
}

#[allow(clippy::too_many_arguments)]
fn probe_cmd(
    g: &Game,
    count: usize,
    radius: f64,
    seed: u64,
    args: &FlowArgs,
    report_path: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(CliError::Input(format!("radius must be a nonnegative number, got {radius}")));
    }
    let cfg = args.config()?;
    let integrator = Integrator::from(args.integrator);
    let starts = uniform_ball_ensemble(g.n(), count, radius, seed);
    let summary = thread_pool()?.install(|| realm_probe(g, &starts, &cfg, integrator))?;
    if let Some(path) = report_path {
        write_atomic(path, probe_rows(&summary).as_bytes())?;
    }
    let report = Report::Probe {
        integrator: integrator.as_str().into(),
        runs: summary.runs,
        core_nonempty: summary.core_nonempty,
        least_core_value: summary.least_core_value,
        reached_core: summary.reached_core,
        stationary: summary.stationary,
        unfinished: summary.unfinished,
        audit_failures: summary.audit_failures,
        max_final_distance: summary.max_final_distance,
        stationary_theta_spread: summary.stationary_theta_spread,
        time_histogram: summary
            .time_histogram
            .iter()
            .map(|&(upper, count)| HistogramBin { upper: upper.is_finite().then_some(upper), count })
            .collect(),
    };
    if json {
        emit(out, &report)?;
    } else {
        writeln!(out, "runs: {} ({})", summary.runs, integrator.as_str())?;
        writeln!(out, "least-core value: {}", summary.least_core_value)?;
        if !summary.core_nonempty {
            writeln!(out, "note: the core is empty; runs end at stationary points of theta")?;
        }
        writeln!(out, "ReachedCore: {}", summary.reached_core)?;
        writeln!(out, "StationaryPoint: {}", summary.stationary)?;
        writeln!(out, "unfinished: {}", summary.unfinished)?;
        writeln!(out, "Lyapunov audit failures: {}", summary.audit_failures)?;
        if let Some(d) = summary.max_final_distance {
            writeln!(out, "max final distance to core: {d:e}")?;
        }
        if let Some(s) = summary.stationary_theta_spread {
            writeln!(out, "stationary theta spread: {s:e}")?;
        }
        writeln!(out, "convergence times:")?;
        for (upper, count) in &summary.time_histogram {
            writeln!(out, "  <= {upper:<8e} {count}")?;
        }
    }
    let failed = summary.runs - summary.reached_core;
    if summary.core_nonempty && (failed > 0 || summary.audit_failures > 0) {
        return Err(CliError::ProbeFailed { failed: failed.max(summary.audit_failures), runs: summary.runs });
    }
    Ok(())
}

fn probe_rows(s: &ProbeSummary) -> String {
    let mut text = String::from("index,status,final_time,final_theta,final_phi_norm,distance_to_core,audit_pass\n");
    for o in &s.outcomes {
        let d = o.distance_to_core.map_or(String::new(), |d| format!("{d:.16e}"));
        text.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{d},{}\n",
            o.index,
            o.status.as_str(),
            o.final_time,
            o.final_theta,
            o.final_phi_norm,
            o.audit_pass
        ));
    }
    text
}

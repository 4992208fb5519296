//! Command-line entry point.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on data or validation
//! errors. Every output file starts with a [`RunManifest`] in `#` comment
//! lines; the numeric payload depends only on the arguments and inputs.

pub mod output;
pub mod reproduce;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fictitious_play::{fp_run, SingleStageGame};
use crate::finite_population::{best_response_finite_n, lemma1_gap, simulate_replication};
use crate::kl_solver::{backward_pass, extract_policy, value, PolicyKernel};
use crate::mean_field::{equalizer_gap, mfe_solve};
use crate::sampling;
use crate::scenario::grid::{build_gridworld, GridSpec};
use crate::scenario::{format, validate, Scenario};
use crate::symmetric_equilibrium::{f_route, solve_single_stage_mfe, solve_symmetric_ne};
pub use output::{emit_heatmap, RunManifest};
use output::{emit, flow_csv, log_phi_csv, policy_csv, read_policy_csv, real};

/// Tolerance for the `--certify-equalizer` check.
pub const EQUALIZER_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "mft-route", version, about = "Mean-field routing games under a log-population toll")]
struct Cli {
    /// Base seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads, 0 = one per core
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Backward pass and equilibrium policy of a scenario
    Solve(SolveArgs),
    /// Equilibrium policy and population flow, optionally certified
    Mfe(MfeArgs),
    /// Sample N-player populations and record realized tolls
    Simulate(SimulateArgs),
    /// Toll gap and best-response gain of the N-player game against the equilibrium
    NashGap(NashGapArgs),
    /// Symmetric fictitious play on parallel routes
    Fp(FpArgs),
    /// Exact symmetric equilibrium of the N-player route game
    SymmetricNe(SymmetricNeArgs),
    /// Write the congested grid-world scenario
    Gridworld(GridworldArgs),
    /// Regenerate the experiment outputs
    #[command(subcommand)]
    Reproduce(Reproduce),
    /// Check a scenario file and list every violation
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Policy CSV (t,i,j,value); stdout if omitted
    #[arg(long)]
    out_policy: Option<PathBuf>,
    /// log φ CSV (t,i,value)
    #[arg(long)]
    out_logphi: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MfeArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Policy CSV (t,i,j,value); stdout if omitted
    #[arg(long)]
    out_policy: Option<PathBuf>,
    /// Flow CSV (t,i,mass)
    #[arg(long)]
    out_flow: Option<PathBuf>,
    /// Check the equalizer property against this many random policies
    #[arg(long, value_name = "TRIALS")]
    certify_equalizer: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Policy CSV (t,i,j,value); the equilibrium policy if omitted
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    agents: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Toll records CSV; stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NashGapArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Player counts, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    agents: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GameArgs {
    /// Number of routes; must match --costs when given
    #[arg(long)]
    routes: Option<usize>,
    /// Route costs, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    costs: Vec<f64>,
    /// Reference shares, comma separated; uniform if omitted
    #[arg(long = "ref", value_delimiter = ',')]
    reference: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    agents: usize,
}

impl GameArgs {
    fn game(&self) -> Result<SingleStageGame> {
        let routes = self.costs.len();
        if let Some(j) = self.routes.filter(|&j| j != routes) {
            return Err(Error::Dimension(format!("--routes {j} but {routes} costs")));
        }
        let reference = self.reference.clone().unwrap_or_else(|| vec![1.0 / routes as f64; routes]);
        SingleStageGame::new(self.costs.clone(), reference, self.alpha, self.agents)
    }
}

#[derive(Debug, Args)]
struct FpArgs {
    #[command(flatten)]
    game: GameArgs,
    #[arg(long, default_value_t = 10_000)]
    days: usize,
    /// Initial belief: `uniform` or comma-separated shares
    #[arg(long, default_value = "uniform")]
    init: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SymmetricNeArgs {
    #[command(flatten)]
    game: GameArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridworldArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 70)]
    horizon: usize,
    /// Scenario file; stdout if omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Reproduce {
    /// Grid world: heatmaps at t = 20, 35, 50, flow CSV and summary
    Fig2 {
        /// One or more α values, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0.1,1")]
        alpha: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fictitious play on three routes for each player count
    Fig4 {
        #[arg(long, value_delimiter = ',', default_value = "20,200")]
        agents: Vec<usize>,
        #[arg(long, default_value_t = reproduce::FIG4_DAYS)]
        days: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_scenario(manifest: &mut RunManifest, path: &Path) -> Result<Scenario> {
    let text = manifest.read_input(path)?;
    format::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
        .validated()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let seed = cli.seed;
    let manifest = |name: &str, params: &dyn std::fmt::Debug| RunManifest::new(name, format!("{params:?}"), seed);
    match &cli.command {
        Command::Solve(args) => {
            let mut m = manifest("solve", args);
            let scenario = load_scenario(&mut m, &args.scenario)?;
            let log_phi = backward_pass(&scenario);
            let policy = extract_policy(&scenario, &log_phi);
            eprintln!("V_0(P_0) = {}", real(value(&log_phi, &scenario.initial, 0)));
            m.duration = started.elapsed();
            emit(args.out_policy.as_deref(), &m, &policy_csv(&scenario.graph, &policy))?;
            if let Some(path) = &args.out_logphi {
                emit(Some(path), &m, &log_phi_csv(&log_phi))?;
            }
        }
        Command::Mfe(args) => {
            let mut m = manifest("mfe", args);
            let scenario = load_scenario(&mut m, &args.scenario)?;
            let eq = mfe_solve(&scenario);
            eprintln!("V_0(P_0) = {}", real(eq.value()));
            if let Some(trials) = args.certify_equalizer {
                let mut rng = sampling::substream(seed, 0);
                let policies: Vec<PolicyKernel> = (0..trials)
                    .map(|_| PolicyKernel::random(&mut rng, &scenario.graph, scenario.horizon()))
                    .collect();
                let gap = equalizer_gap(&scenario, &eq.policy, &policies)?;
                eprintln!("equalizer gap over {trials} random policies = {}", real(gap));
                if !(gap <= EQUALIZER_TOL) {
                    return Err(Error::Input(format!("equalizer gap {gap:e} exceeds {EQUALIZER_TOL:e}")));
                }
            }
            m.duration = started.elapsed();
            emit(args.out_policy.as_deref(), &m, &policy_csv(&scenario.graph, &eq.policy))?;
            if let Some(path) = &args.out_flow {
                emit(Some(path), &m, &flow_csv(&eq.flow))?;
            }
        }
        Command::Simulate(args) => {
            let mut m = manifest("simulate", args);
            let scenario = load_scenario(&mut m, &args.scenario)?;
            if args.agents == 0 {
                return Err(Error::Input("--agents must be at least 1".into()));
            }
            let policy = match &args.policy {
                Some(path) => {
                    let text = m.read_input(path)?;
                    read_policy_csv(&text, &scenario.graph, scenario.horizon())
                        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
                }
                None => mfe_solve(&scenario).policy,
            };
            let mut body = String::from("rep,t,i,j,link_count,node_count,tax\n");
            for rep in 0..args.reps as u64 {
                let sample = simulate_replication(&scenario, &policy, args.agents, seed, rep);
                for r in sample.tax_records(&scenario) {
                    let _ = writeln!(
                        body,
                        "{rep},{},{},{},{},{},{}",
                        r.t,
                        r.i,
                        r.j,
                        r.link_count,
                        r.node_count,
                        real(r.tax)
                    );
                }
            }
            m.duration = started.elapsed();
            emit(args.out.as_deref(), &m, &body)?;
        }
        Command::NashGap(args) => {
            let mut m = manifest("nash-gap", args);
            let scenario = load_scenario(&mut m, &args.scenario)?;
            if args.agents.contains(&0) {
                return Err(Error::Input("player counts must be at least 1".into()));
            }
            let eq = mfe_solve(&scenario);
            let gaps = lemma1_gap(&scenario, &eq.policy, &args.agents);
            let mut body = String::from("agents,toll_gap,worst_t,worst_i,worst_j,epsilon\n");
            for gap in gaps {
                let br = best_response_finite_n(&scenario, &eq.policy, gap.players);
                let (t, i, j) = gap
                    .worst
                    .map(|(t, i, j)| (t.to_string(), i.to_string(), j.to_string()))
                    .unwrap_or_default();
                let _ = writeln!(body, "{},{},{t},{i},{j},{}", gap.players, real(gap.gap), real(br.epsilon));
            }
            m.duration = started.elapsed();
            emit(args.out.as_deref(), &m, &body)?;
        }
        Command::Fp(args) => {
            let mut m = manifest("fp", args);
            let game = args.game.game()?;
            let initial = parse_belief(&args.init, game.routes())?;
            let run = fp_run(&game, initial, args.days)?;
            m.duration = started.elapsed();
            emit(args.out.as_deref(), &m, &fp_csv(&run))?;
        }
        Command::SymmetricNe(args) => {
            let mut m = manifest("symmetric-ne", args);
            let game = args.game.game()?;
            let eq = solve_symmetric_ne(&game);
            let mfe = solve_single_stage_mfe(&game);
            let mut body = String::from("route,q_ne,q_mfe,cost,lambda,residual\n");
            for j in 0..game.routes() {
                let _ = writeln!(
                    body,
                    "{j},{},{},{},{},{}",
                    real(eq.q[j]),
                    real(mfe[j]),
                    real(f_route(&game, j, eq.q[j])),
                    real(eq.lambda),
                    real(eq.residuals[j])
                );
            }
            m.duration = started.elapsed();
            emit(args.out.as_deref(), &m, &body)?;
        }
        Command::Gridworld(args) => {
            let m = manifest("gridworld", args);
            let spec = GridSpec {
                horizon: args.horizon,
                ..GridSpec::congestion_experiment(args.alpha)
            };
            let world = build_gridworld(&spec)?;
            let scenario = world.scenario.validated()?;
            let text = format::to_string(&scenario);
            match &args.out {
                Some(path) => emit(Some(path), &m, &text)?,
                None => print!("{}{text}", m.header()),
            }
        }
        Command::Reproduce(Reproduce::Fig2 { alpha, out_dir }) => {
            let mut m = manifest("reproduce fig2", &cli.command);
            create_dir(out_dir)?;
            let mut summary = String::from(
                "alpha,value,entropy_t35,shortest_path_mass_t35,lit_cells_t35,near_destination_mass_tT,normalization_residual\n",
            );
            let mut outputs = Vec::new();
            for &a in alpha {
                let run = reproduce::fig2_run(a)?;
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{},{},{}",
                    real(a),
                    real(run.value),
                    real(run.entropy_probe),
                    real(run.shortest_path_mass_probe),
                    run.lit_cells_probe,
                    real(run.near_destination_final),
                    real(run.normalization_residual)
                );
                let tag = format!("alpha{}", real(a));
                for t in reproduce::FIG2_FRAMES {
                    let label = format!("alpha = {}, t = {t}", real(a));
                    let pgm = emit_heatmap(run.equilibrium.flow.at(t), &run.world.layout, &label)?;
                    outputs.push((out_dir.join(format!("{tag}_t{t}.pgm")), pgm));
                }
                outputs.push((out_dir.join(format!("{tag}_flow.csv")), flow_csv(&run.equilibrium.flow)));
            }
            m.duration = started.elapsed();
            for (path, body) in outputs {
                if path.extension().is_some_and(|e| e == "pgm") {
                    fs::write(&path, body).map_err(|e| Error::file(&path, e))?;
                } else {
                    emit(Some(&path), &m, &body)?;
                }
            }
            emit(Some(&out_dir.join("summary.csv")), &m, &summary)?;
        }
        Command::Reproduce(Reproduce::Fig4 { agents, days, out_dir }) => {
            let mut m = manifest("reproduce fig4", &cli.command);
            create_dir(out_dir)?;
            let mut summary = String::from("agents,days,q1,q2,q3,q_ne1,q_ne2,q_ne3,dist_to_ne,dist_to_mfe\n");
            let mut outputs = Vec::new();
            for &n in agents {
                if n == 0 {
                    return Err(Error::Input("player counts must be at least 1".into()));
                }
                let run = reproduce::fig4_run(n, *days)?;
                let q = run.final_belief();
                let ne = &run.equilibrium.q;
                let _ = writeln!(
                    summary,
                    "{n},{days},{},{},{},{},{},{},{},{}",
                    real(q[0]),
                    real(q[1]),
                    real(q[2]),
                    real(ne[0]),
                    real(ne[1]),
                    real(ne[2]),
                    real(*run.dist_to_ne.last().expect("nonempty")),
                    real(*run.dist_to_mfe.last().expect("nonempty"))
                );
                outputs.push((out_dir.join(format!("fp_n{n}.csv")), fp_csv(&run)));
            }
            m.duration = started.elapsed();
            for (path, body) in outputs {
                emit(Some(&path), &m, &body)?;
            }
            emit(Some(&out_dir.join("summary.csv")), &m, &summary)?;
        }
        Command::Validate(args) => {
            let text = fs::read_to_string(&args.scenario).map_err(|e| Error::file(&args.scenario, e))?;
            let scenario =
                format::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", args.scenario.display())))?;
            let violations = validate(&scenario);
            if !violations.is_empty() {
                return Err(Error::Invalid(violations));
            }
            println!(
                "{}: ok ({} nodes, {} edges, horizon {})",
                args.scenario.display(),
                scenario.node_count(),
                scenario.graph.edge_count(),
                scenario.horizon()
            );
        }
    }
    Ok(())
}

fn parse_belief(init: &str, routes: usize) -> Result<Vec<f64>> {
    if init == "uniform" {
        return Ok(vec![1.0 / routes as f64; routes]);
    }
    init.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("--init: cannot parse `{s}`")))
        })
        .collect()
}

/// `day,Q1..QJ,r,dist_to_ne,dist_to_mfe`; the last row is the belief after
/// the final day and has no choice.
fn fp_csv(run: &crate::fictitious_play::FpRun) -> String {
    let routes = run.path.current().len();
    let mut out = String::from("day");
    for j in 1..=routes {
        let _ = write!(out, ",Q{j}");
    }
    out.push_str(",r,dist_to_ne,dist_to_mfe\n");
    for (k, belief) in run.path.beliefs.iter().enumerate() {
        let _ = write!(out, "{}", k + 1);
        for q in belief {
            let _ = write!(out, ",{}", real(*q));
        }
        let choice = run.path.choices.get(k).map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(out, ",{choice},{},{}", real(run.dist_to_ne[k]), real(run.dist_to_mfe[k]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["mft-route", "solve"]), 2);
        assert_eq!(run(["mft-route", "solve", "--scenario", "x", "--bogus"]), 2);
        assert_eq!(run(["mft-route", "frobnicate"]), 2);
    }

    #[test]
    fn missing_file_exits_one() {
        assert_eq!(run(["mft-route", "validate", "--scenario", "/nonexistent/scenario.txt"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["mft-route", "--help"]), 0);
    }

    #[test]
    fn belief_parsing() {
        assert_eq!(parse_belief("uniform", 4).unwrap(), vec![0.25; 4]);
        assert_eq!(parse_belief("0.5, 0.5", 2).unwrap(), vec![0.5, 0.5]);
        assert!(parse_belief("0.5,x", 2).is_err());
    }

    #[test]
    fn game_args_check_route_count() {
        let args = GameArgs {
            routes: Some(2),
            costs: vec![1.0, 2.0, 3.0],
            reference: None,
            alpha: 1.0,
            agents: 5,
        };
        assert!(matches!(args.game(), Err(Error::Dimension(_))));
    }
}

//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 property refuted, 2 input error, 3 the simulated
//! satisfaction frequency fell below the certified bound.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rmdp_synth::abstraction::{build_abstraction, cell_labels, AbstractionMeta, GOAL, UNSAFE};
use rmdp_synth::config::PipelineConfig;
use rmdp_synth::dynamics::DubinsParams;
use rmdp_synth::imdp::{evaluate_fixed_policy, export_explicit, import_explicit, robust_value_iteration};
use rmdp_synth::instances::alternating_example;
use rmdp_synth::model::{FiniteRmdp, LabelSet, StateRelation};
use rmdp_synth::pasr::{check_pasr, compute_interface};
use rmdp_synth::refine::{refine_abstract_policy, run_monte_carlo, write_trajectories_file, SimulationStats};
use rmdp_synth::{Horizon, Imdp, ReachAvoidSpec, SolveResult};

#[derive(Parser)]
#[command(name = "rmdp-synth", version, about = "Robust MDP simulation checking, abstraction and reach-avoid synthesis")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "RMDP_SYNTH_THREADS")]
    threads: Option<usize>,
    /// Output format for solve values and simulation statistics.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a probabilistic alternating simulation between two model files.
    CheckPasr {
        model1: PathBuf,
        model2: PathBuf,
        relation: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the interval-MDP abstraction described by a pipeline config.
    Abstract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the model gzip-compressed.
        #[arg(long)]
        gzip: bool,
    },
    /// Robust value iteration on an explicit interval-MDP file.
    Solve {
        imdp: PathBuf,
        /// Pipeline config supplying the horizon.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of steps, or `unbounded`; overrides the config.
        #[arg(long)]
        horizon: Option<String>,
        #[arg(long, default_value = GOAL)]
        goal: String,
        #[arg(long = "unsafe", default_value = UNSAFE)]
        unsafe_label: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a solved abstract policy and validate it by simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding abstraction.json and solve.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Override the true steering sensitivity.
        #[arg(long)]
        alpha: Option<f64>,
        /// Override the true drag.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Abstract, solve, refine and simulate in one go; stages exchange files in `--out`.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also simulate with the true parameters at every corner of the parameter box.
        #[arg(long)]
        corners: bool,
    },
    /// Write the bundled alternating example (models, relation, label-flipped variant).
    Example {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure that maps to a specific exit code rather than 2.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => match e.downcast_ref::<Exit>() {
            Some(Exit(code)) => ExitCode::from(*code),
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::CheckPasr {
            model1,
            model2,
            relation,
            out,
        } => check_pasr_cmd(g, model1, model2, relation, out.as_deref()),
        Command::Abstract { config, out, gzip } => {
            let cfg = PipelineConfig::load(config)?;
            abstract_cmd(g, &cfg, out, *gzip)?;
            Ok(0)
        }
        Command::Solve {
            imdp,
            config,
            horizon,
            goal,
            unsafe_label,
            out,
        } => {
            let mut h = match config {
                Some(c) => PipelineConfig::load(c)?.solve.horizon,
                None => Horizon::Unbounded,
            };
            if let Some(text) = horizon {
                h = parse_horizon(text)?;
            }
            solve_cmd(g, imdp, &ReachAvoidSpec::new(goal.clone(), unsafe_label.clone(), h), out)?;
            Ok(0)
        }
        Command::Simulate {
            config,
            input,
            out,
            seed,
            runs,
            alpha,
            beta,
        } => {
            let mut cfg = PipelineConfig::load(config)?;
            if let Some(r) = runs {
                cfg.simulate.runs = *r;
            }
            let seed = seed.unwrap_or(cfg.simulate.seed);
            let truth = (
                alpha.unwrap_or(cfg.system.true_params.alpha),
                beta.unwrap_or(cfg.system.true_params.beta),
            );
            let stats = simulate_cmd(g, &cfg, input, out, seed, truth, "")?;
            Ok(gate_code(&stats))
        }
        Command::Pipeline {
            config,
            out,
            seed,
            corners,
        } => pipeline_cmd(g, config, out, *seed, *corners),
        Command::Example { out } => {
            write_example(out)?;
            Ok(0)
        }
    }
}

fn parse_horizon(text: &str) -> Result<Horizon> {
    if text == "unbounded" {
        return Ok(Horizon::Unbounded);
    }
    Ok(Horizon::Finite(
        text.parse().with_context(|| format!("horizon `{text}` is neither a step count nor `unbounded`"))?,
    ))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct InterfaceRow<'a> {
    x1: &'a str,
    x2: &'a str,
    u2: &'a str,
    /// Winning concrete actions with, per concrete disturbance, the abstract answer.
    answers: Vec<(&'a str, Vec<&'a str>)>,
}

fn check_pasr_cmd(g: &Global, p1: &Path, p2: &Path, pr: &Path, out: Option<&Path>) -> Result<u8> {
    let m1 = FiniteRmdp::<f64>::from_json(&read(p1)?).with_context(|| format!("parsing {}", p1.display()))?;
    let m2 = FiniteRmdp::<f64>::from_json(&read(p2)?).with_context(|| format!("parsing {}", p2.display()))?;
    let rel = StateRelation::from_json(&read(pr)?, &m1, &m2).with_context(|| format!("parsing {}", pr.display()))?;
    let report = check_pasr(&m1, &m2, &rel)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(dir) = out {
        create_dir(dir)?;
        write(&dir.join("pasr_report.json"), &text)?;
        if report.holds {
            let iface = compute_interface(&m1, &m2, &rel)?;
            let rows: Vec<InterfaceRow> = iface
                .cells()
                .map(|((x1, x2, u2), entries)| InterfaceRow {
                    x1: &m1.state_names()[x1],
                    x2: &m2.state_names()[x2],
                    u2: &m2.action_names()[u2],
                    answers: entries
                        .iter()
                        .map(|e| {
                            (
                                m1.action_names()[e.u1].as_str(),
                                e.response.iter().map(|&v2| m2.disturbance_names()[v2].as_str()).collect(),
                            )
                        })
                        .collect(),
                })
                .collect();
            write_json(&dir.join("interface.json"), &rows)?;
        }
    }
    if !g.quiet {
        print!("{text}");
    }
    Ok(if report.holds { 0 } else { 1 })
}

fn model_path(dir: &Path) -> Option<PathBuf> {
    ["abstraction.imdp", "abstraction.imdp.gz"]
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
}

fn abstract_cmd(g: &Global, cfg: &PipelineConfig, out: &Path, gzip: bool) -> Result<PathBuf> {
    let system: &DubinsParams = &cfg.system.dynamics;
    system.validate()?;
    let r = cfg.abstraction.resolve(system)?;
    let start = Instant::now();
    let abs = build_abstraction(system, &r.grid, &r.actions, &r.geometry, &r.options)?;
    let elapsed = start.elapsed();
    create_dir(out)?;
    let path = out.join(if gzip { "abstraction.imdp.gz" } else { "abstraction.imdp" });
    let stale = out.join(if gzip { "abstraction.imdp" } else { "abstraction.imdp.gz" });
    if stale.exists() {
        std::fs::remove_file(&stale).with_context(|| format!("removing {}", stale.display()))?;
    }
    export_explicit(&abs.imdp, &path)?;
    write_json(&out.join("abstraction.json"), &abs.meta)?;
    if !g.quiet {
        println!("states={} transitions={}", abs.meta.n_states, abs.meta.n_transitions);
    }
    eprintln!("abstraction built in {:.2} s", elapsed.as_secs_f64());
    Ok(path)
}

/// Solve result plus the worst-case value of the extracted policy itself.
#[derive(Serialize, Deserialize)]
struct SolveOutput {
    #[serde(flatten)]
    result: SolveResult,
    /// Value of the returned policy at the initial state; the bound the
    /// simulation gate checks against.
    policy_rho: f64,
    goal: String,
    #[serde(rename = "unsafe")]
    unsafe_label: String,
}

fn solve_cmd(g: &Global, imdp: &Path, spec: &ReachAvoidSpec, out: &Path) -> Result<SolveOutput> {
    let m: Imdp = import_explicit(imdp).with_context(|| format!("reading {}", imdp.display()))?;
    let start = Instant::now();
    let result = robust_value_iteration(&m, spec)?;
    let policy_rho = evaluate_fixed_policy(&m, &result.policy, spec)?[m.initial()];
    eprintln!("solved in {:.2} s ({} sweeps)", start.elapsed().as_secs_f64(), result.iterations);
    create_dir(out)?;
    let output = SolveOutput {
        result,
        policy_rho,
        goal: spec.goal.clone(),
        unsafe_label: spec.unsafe_label.clone(),
    };
    write_json(&out.join("solve.json"), &output)?;
    if g.format == Format::Csv {
        let r = &output.result;
        let mut text = String::from("state,value,action\n");
        for (s, v) in r.values.iter().enumerate() {
            text.push_str(&format!("{s},{v},{}\n", r.policy.action(0, s)));
        }
        write(&out.join("values.csv"), &text)?;
    }
    if !g.quiet {
        println!(
            "rho_star={} policy_rho={} converged={} iterations={}",
            output.result.rho_star, output.policy_rho, output.result.converged, output.result.iterations
        );
    }
    Ok(output)
}

fn simulate_cmd(
    g: &Global,
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    seed: u64,
    truth: (f64, f64),
    tag: &str,
) -> Result<SimulationStats> {
    let meta: AbstractionMeta = serde_json::from_str(&read(&input.join("abstraction.json"))?).context("parsing abstraction.json")?;
    let solved: SolveOutput = serde_json::from_str(&read(&input.join("solve.json"))?).context("parsing solve.json")?;
    let system = &cfg.system.dynamics;
    let names: Vec<&str> = meta.state_names.iter().map(String::as_str).collect();
    let labels: Vec<LabelSet> = cell_labels(&meta.grid, &names, &meta.geometry)?;
    let controller = refine_abstract_policy(&solved.result, &meta)?;
    let mut setup = cfg.simulation_setup(seed);
    setup.initial_state = meta.initial_state.clone();
    setup.true_params = vec![truth.0, truth.1];
    let mut stats = run_monte_carlo(system, &controller, &labels, &setup)?;
    stats.rho_star = Some(solved.policy_rho);
    create_dir(out)?;
    match g.format {
        Format::Json => write_json(&out.join(format!("stats{tag}.json")), &stats)?,
        Format::Csv => write(
            &out.join(format!("stats{tag}.csv")),
            &format!(
                "runs,satisfied,frequency,ci_low,ci_high,rho_star,seed\n{},{},{},{},{},{},{}\n",
                stats.runs, stats.satisfied, stats.frequency, stats.ci_low, stats.ci_high, solved.policy_rho, stats.seed
            ),
        )?,
    }
    write_trajectories_file(
        &stats.trajectories,
        &meta.state_names,
        &meta.input_names,
        &out.join(format!("trajectories{tag}.csv")),
    )?;
    if !g.quiet {
        println!(
            "alpha={} beta={} rho_star={} frequency={} ({}/{}) gate={}",
            truth.0,
            truth.1,
            solved.policy_rho,
            stats.frequency,
            stats.satisfied,
            stats.runs,
            if stats.passes_gate() == Some(true) { "pass" } else { "FAIL" }
        );
    }
    Ok(stats)
}

fn gate_code(stats: &SimulationStats) -> u8 {
    if stats.passes_gate() == Some(false) {
        3
    } else {
        0
    }
}

fn pipeline_cmd(g: &Global, config: &Path, out: &Path, seed: Option<u64>, corners: bool) -> Result<u8> {
    let cfg = PipelineConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.simulate.seed);
    let quiet = Global {
        threads: g.threads,
        format: g.format,
        quiet: true,
    };
    abstract_cmd(&quiet, &cfg, out, false)?;
    let Some(model) = model_path(out) else {
        bail!("abstraction stage wrote no model");
    };
    solve_cmd(&quiet, &model, &cfg.spec(), out)?;
    let truth = (cfg.system.true_params.alpha, cfg.system.true_params.beta);
    let mut code = gate_code(&simulate_cmd(g, &cfg, out, out, seed, truth, "")?);
    if corners {
        let (a, b) = (cfg.system.dynamics.alpha, cfg.system.dynamics.beta);
        for (i, truth) in [(a.lo, b.lo), (a.lo, b.hi), (a.hi, b.lo), (a.hi, b.hi)].into_iter().enumerate() {
            let stats = simulate_cmd(g, &cfg, out, out, seed, truth, &format!("_corner{i}"))?;
            code = code.max(gate_code(&stats));
        }
    }
    Ok(code)
}

fn write_example(out: &Path) -> Result<()> {
    create_dir(out)?;
    let inst = alternating_example();
    write(&out.join("m1.json"), &(inst.m1.to_json() + "\n"))?;
    write(&out.join("m2.json"), &(inst.m2.to_json() + "\n"))?;
    write(&out.join("relation.json"), &(inst.rel.to_json(&inst.m1, &inst.m2) + "\n"))?;
    let red = inst.m2.state_index("r2").expect("example has r2");
    let flipped = inst.m2.with_label(red, LabelSet::single(2));
    write(&out.join("m2_flipped_label.json"), &(flipped.to_json() + "\n"))?;
    Ok(())
}

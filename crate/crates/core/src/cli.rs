//! Command-line front end.
//!
//! [`dispatch`] parses an argument list, runs one subcommand and writes a
//! single document to the output stream. Exit status is 0 on success, 1 on
//! domain errors (bad game file, unattainable target, ...) and 2 on usage
//! errors. Logging goes to stderr only.

use crate::apps::{self, AppError, AppParams};
use crate::bounds::{self, BoundsError, FreqBoundResult, Method};
use crate::concentration::{self, ConcentrationError, FiniteDist, TailReport};
use crate::game::{self, GameError, MixedAction, StageGame};
use crate::sets::{self, SetsError};
use crate::sim::{self, Construction, IncentiveReport, PhaseStats, SimError, Z2Variant};
use crate::stage::{self, AssumptionReport, StageError, DEFAULT_TOL};
use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error("invalid distribution file: {0}")]
    DistFile(serde_json::Error),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Sets(#[from] SetsError),
    #[error(transparent)]
    Concentration(#[from] ConcentrationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    /// One JSON document.
    #[default]
    Json,
    /// Flattened `key,value` rows.
    Csv,
    /// Indented plain text.
    Human,
}

/// Parsed command line.
#[derive(Debug, Parser)]
#[command(
    name = "repfreq",
    version,
    about = "Action-frequency bounds for reputation games"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Payoff-comparison tolerance for stage-game analysis.
    #[arg(long, global = true, value_parser = positive_real)]
    pub tol: Option<f64>,
    /// Seed for Monte Carlo commands.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for Monte Carlo commands (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stackelberg action, assumptions, minmax and indifference pieces.
    Analyze { game: PathBuf },
    /// Minimal discounted frequency of the Stackelberg action.
    Fstar(FstarArgs),
    /// Test whether a marginal is an attainable frequency.
    InSetA(InSetArgs),
    /// Simulate the block equilibrium that attains a target frequency.
    Simulate(SimulateArgs),
    /// Compare a Monte Carlo tail frequency with its exponential bound.
    Concentration(ConcentrationArgs),
    /// Closed form versus LP for a standard application.
    #[command(subcommand)]
    App(AppCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lp,
    Prop1,
    Grid,
}

#[derive(Debug, Args)]
pub struct FstarArgs {
    pub game: PathBuf,
    /// Payoff slack below the Stackelberg payoff.
    #[arg(long, default_value_t = 0.0, value_parser = nonnegative_real)]
    pub epsilon: f64,
    /// Require the payoff constraint to bind.
    #[arg(long)]
    pub equality: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::Lp)]
    pub method: MethodArg,
    /// Grid resolution for `--method grid`.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub resolution: u64,
    /// Also report the value at each of these epsilons (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = nonnegative_real)]
    pub curve: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct InSetArgs {
    pub game: PathBuf,
    /// Target marginal, e.g. "H:0.375,L:0.625".
    #[arg(long)]
    pub alpha: String,
    #[arg(long, default_value_t = 0.0, value_parser = nonnegative_real)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub game: PathBuf,
    /// Target marginal, e.g. "H:0.375,L:0.625".
    #[arg(long)]
    pub target: String,
    #[arg(long, value_parser = open_unit)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.01, value_parser = open_unit)]
    pub eps1: f64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    #[arg(long, default_value = "drift")]
    pub z2_variant: Z2Variant,
    /// Write per-action estimates to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    /// JSON array of {"value": v, "prob": p}.
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long, value_parser = open_unit)]
    pub delta: f64,
    #[arg(long, value_parser = nonnegative_real)]
    pub c: f64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum AppCommand {
    /// Two-product quality choice.
    ProductChoice {
        #[arg(long, value_parser = open_unit)]
        gamma: f64,
        #[arg(long, value_parser = open_unit)]
        ch: f64,
        #[arg(long, value_parser = open_unit)]
        cl: f64,
    },
    /// Three-product quality choice.
    Product3 {
        #[arg(long, value_parser = open_unit)]
        g1: f64,
        #[arg(long, value_parser = open_unit)]
        g2: f64,
        #[arg(long, value_parser = open_unit)]
        p: f64,
        #[arg(long, value_parser = open_unit)]
        c: f64,
    },
    /// Entry deterrence, optionally with an entry subsidy.
    Entry {
        #[arg(long, value_parser = open_unit)]
        gamma: f64,
        #[arg(long, value_parser = open_unit)]
        co: f64,
        #[arg(long, value_parser = positive_real)]
        ci: f64,
        #[arg(long, default_value_t = 0.0, value_parser = nonnegative_real)]
        subsidy: f64,
    },
    /// Capital taxation.
    Fiscal {
        #[arg(long, value_parser = open_unit)]
        tau: f64,
        #[arg(long, value_parser = open_unit)]
        c: f64,
    },
}

fn real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

fn nonnegative_real(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be nonnegative".into())
    }
}

// ---- output documents ---------------------------------------------------

pub type Labeled = IndexMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackelbergOut {
    pub a_star: String,
    pub b_star: String,
    pub v_star: f64,
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceOut {
    pub b: String,
    pub tied: Vec<String>,
    pub vertices: Vec<Labeled>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeOut {
    pub actions1: Vec<String>,
    pub actions2: Vec<String>,
    pub stackelberg: StackelbergOut,
    pub assumptions: AssumptionReport,
    /// Null when the game carries no action orders.
    pub monotone_supermodular: Option<bool>,
    pub lowest_pair: Option<(String, String)>,
    pub gamma_star: Vec<PieceOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessOut {
    pub alpha1: Labeled,
    pub b1: String,
    pub alpha2: Labeled,
    pub b2: String,
    pub q: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FstarOut {
    pub value: f64,
    pub method: String,
    pub epsilon: f64,
    pub equality: bool,
    pub witness: WitnessOut,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentOut {
    pub reply: String,
    pub weight: f64,
    pub alpha: Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InSetOut {
    pub member: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Labeled>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<ComponentOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockParamsOut {
    pub a_prime: String,
    pub b_prime: String,
    pub alpha_prime: Labeled,
    pub eps1: f64,
    pub c: f64,
    pub t1: usize,
    pub t2_bar: usize,
    pub delta_bar: f64,
    pub delta_meets_bar: bool,
    pub r1_star: f64,
    pub r2_star: f64,
    pub p: f64,
    pub m_bar: f64,
    pub upper_target: f64,
    pub z2_variant: Z2Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOut {
    pub target: Labeled,
    pub delta: f64,
    pub reps: usize,
    pub seed: u64,
    pub construction: String,
    pub params: Option<BlockParamsOut>,
    pub freq: Labeled,
    pub freq_ci: Labeled,
    pub ci_radius: f64,
    pub payoff: f64,
    pub payoff_ci: f64,
    pub phase_stats: PhaseStats,
    pub incentives: IncentiveReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationOut {
    #[serde(flatten)]
    pub report: TailReport,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppOut {
    pub params: AppParams,
    pub closed_form: f64,
    pub lp: f64,
    pub difference: f64,
    /// `1 − F*`, the largest frequency of the other action(s).
    pub complement: f64,
}

// ---- commands -------------------------------------------------------------

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path) -> Result<StageGame, CliError> {
    Ok(game::load_game(&read(path)?)?)
}

fn label(game_labels: &[String], i: usize) -> String {
    game_labels[i].clone()
}

fn labeled_vec(labels: &[String], probs: &[f64]) -> Labeled {
    labels.iter().cloned().zip(probs.iter().copied()).collect()
}

pub fn analyze(game: &StageGame, tol: f64) -> Result<AnalyzeOut, CliError> {
    let st = stage::stackelberg(game, tol);
    let a1 = game.actions1();
    let a2 = game.actions2();
    let (mono, low) = if game.order1().is_some() && game.order2().is_some() {
        let (a, b) = stage::lowest_pair(game, tol)?;
        (
            Some(stage::is_monotone_supermodular(game)?),
            Some((label(a1, a), label(a2, b))),
        )
    } else {
        (None, None)
    };
    Ok(AnalyzeOut {
        actions1: a1.to_vec(),
        actions2: a2.to_vec(),
        stackelberg: StackelbergOut {
            a_star: label(a1, st.a_star),
            b_star: label(a2, st.b_star),
            v_star: st.v_star,
            unique: st.is_unique(),
        },
        assumptions: stage::check_assumptions(game, tol),
        monotone_supermodular: mono,
        lowest_pair: low,
        gamma_star: bounds::gamma_star(game)
            .into_iter()
            .map(|p| PieceOut {
                b: label(a2, p.b),
                tied: p.tied.iter().map(|&b| label(a2, b)).collect(),
                vertices: p.vertices.iter().map(|v| labeled_vec(a1, v)).collect(),
            })
            .collect(),
    })
}

fn fstar_out(game: &StageGame, r: &FreqBoundResult, epsilon: f64, equality: bool) -> FstarOut {
    let a1 = game.actions1();
    let a2 = game.actions2();
    let w = &r.witness;
    FstarOut {
        value: r.value,
        method: match r.method {
            Method::Lp => "lp",
            Method::Prop1 => "prop1",
            Method::Grid => "grid",
        }
        .to_string(),
        epsilon,
        equality,
        witness: WitnessOut {
            alpha1: w.alpha1.labeled(a1),
            b1: label(a2, w.b1),
            alpha2: w.alpha2.labeled(a1),
            b2: label(a2, w.b2),
            q: w.q,
            degenerate: w.degenerate,
        },
        curve: Vec::new(),
    }
}

fn run_fstar(args: &FstarArgs) -> Result<FstarOut, CliError> {
    let game = load(&args.game)?;
    let r = match args.method {
        MethodArg::Lp => bounds::fstar(&game, args.epsilon, args.equality)?,
        MethodArg::Prop1 => bounds::fstar_prop1(&game)?,
        MethodArg::Grid => bounds::fstar_grid(&game, args.resolution as usize)?,
    };
    let eps = if args.method == MethodArg::Lp {
        args.epsilon
    } else {
        0.0
    };
    let mut out = fstar_out(
        &game,
        &r,
        eps,
        args.equality && args.method == MethodArg::Lp,
    );
    if !args.curve.is_empty() {
        let mut eps = args.curve.clone();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        out.curve = bounds::f_epsilon_curve(&game, &eps)?;
    }
    Ok(out)
}

fn run_in_set(args: &InSetArgs) -> Result<InSetOut, CliError> {
    let game = load(&args.game)?;
    let target = MixedAction::parse(game.actions1(), &args.alpha)?;
    let a1 = game.actions1();
    Ok(match sets::in_set_A(&game, &target, args.epsilon)? {
        None => InSetOut {
            member: false,
            target: None,
            payoff: None,
            components: Vec::new(),
        },
        Some(w) => InSetOut {
            member: true,
            target: Some(target.labeled(a1)),
            payoff: Some(w.payoff),
            components: w
                .components
                .iter()
                .map(|c| ComponentOut {
                    reply: label(game.actions2(), c.reply),
                    weight: c.weight,
                    alpha: c.alpha.labeled(a1),
                })
                .collect(),
        },
    })
}

fn run_simulate(args: &SimulateArgs, seed: u64) -> Result<SimulateOut, CliError> {
    let game = load(&args.game)?;
    let target = MixedAction::parse(game.actions1(), &args.target)?;
    let params = sim::derive_params(&game, &target, args.eps1, args.delta, args.z2_variant)?;
    if !params.delta_meets_bar() {
        log::warn!("delta {} is below the asymptotic threshold; the block construction still holds structurally", args.delta);
    }
    let outcome = sim::estimate(&game, &params, args.delta, args.reps as usize, seed)?;
    let incentives = sim::check_incentives(&game, &params, args.delta)?;
    let a1 = game.actions1();
    let a2 = game.actions2();
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["action", "freq_estimate", "ci_radius"])?;
        for (i, name) in a1.iter().enumerate() {
            w.write_record([
                name.clone(),
                outcome.freq[i].to_string(),
                outcome.freq_ci[i].to_string(),
            ])?;
        }
        w.flush()?;
    }
    let (construction, block_out) = match &params.construction {
        Construction::AlwaysStackelberg => ("always_stackelberg", None),
        Construction::Blocks(bp) => (
            "blocks",
            Some(BlockParamsOut {
                a_prime: label(a1, bp.a_prime),
                b_prime: label(a2, bp.b_prime),
                alpha_prime: bp.alpha_prime.labeled(a1),
                eps1: bp.eps1,
                c: bp.c,
                t1: bp.t1,
                t2_bar: bp.t2_bar,
                delta_bar: bp.delta_bar,
                delta_meets_bar: params.delta_meets_bar(),
                r1_star: bp.r1_star,
                r2_star: bp.r2_star,
                p: bp.p,
                m_bar: bp.m_bar,
                upper_target: bp.upper_target,
                z2_variant: bp.z2_variant,
            }),
        ),
    };
    Ok(SimulateOut {
        target: target.labeled(a1),
        delta: args.delta,
        reps: outcome.reps,
        seed,
        construction: construction.to_string(),
        params: block_out,
        freq: labeled_vec(a1, &outcome.freq),
        freq_ci: labeled_vec(a1, &outcome.freq_ci),
        ci_radius: outcome.ci_radius,
        payoff: outcome.payoff,
        payoff_ci: outcome.payoff_ci,
        phase_stats: outcome.phase_stats,
        incentives,
    })
}

fn run_concentration(args: &ConcentrationArgs, seed: u64) -> Result<ConcentrationOut, CliError> {
    let dist: FiniteDist = serde_json::from_str(&read(&args.dist)?).map_err(CliError::DistFile)?;
    let report = concentration::mc_tail_probability(
        &dist,
        args.delta,
        args.c,
        args.horizon.map(|h| h as usize),
        args.reps as usize,
        seed,
    )?;
    Ok(ConcentrationOut {
        within_bound: report.within_bound(),
        report,
    })
}

pub fn run_app(params: AppParams) -> Result<AppOut, CliError> {
    let closed_form = apps::closed_form_fstar(&params)?;
    let game = apps::build_stage_game(&params)?;
    let lp = bounds::fstar(&game, 0.0, false)?.value;
    Ok(AppOut {
        params,
        closed_form,
        lp,
        difference: lp - closed_form,
        complement: 1.0 - closed_form,
    })
}

fn app_params(cmd: &AppCommand) -> AppParams {
    match *cmd {
        AppCommand::ProductChoice { gamma, ch, cl } => AppParams::Product2 { gamma, ch, cl },
        AppCommand::Product3 { g1, g2, p, c } => AppParams::Product3 { g1, g2, p, c },
        AppCommand::Entry {
            gamma,
            co,
            ci,
            subsidy,
        } => AppParams::Entry {
            gamma,
            co,
            ci,
            subsidy,
        },
        AppCommand::Fiscal { tau, c } => AppParams::Fiscal { tau, c },
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("output documents always serialize")
}

/// Run a parsed configuration, returning the output document.
pub fn execute(config: &RunConfig) -> Result<Value, CliError> {
    let tol = config.tol.unwrap_or(DEFAULT_TOL);
    Ok(match &config.command {
        Command::Analyze { game } => to_value(&analyze(&load(game)?, tol)?),
        Command::Fstar(args) => to_value(&run_fstar(args)?),
        Command::InSetA(args) => to_value(&run_in_set(args)?),
        Command::Simulate(args) => to_value(&run_simulate(args, config.seed)?),
        Command::Concentration(args) => to_value(&run_concentration(args, config.seed)?),
        Command::App(cmd) => to_value(&run_app(app_params(cmd))?),
    })
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), v, rows);
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn human(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                match v {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        human(v, indent + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", scalar(v))),
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                match v {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}- [{i}]\n"));
                        human(v, indent + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}- {}\n", scalar(v))),
                }
            }
        }
        _ => out.push_str(&format!("{pad}{}\n", scalar(v))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Render a document in the requested format.
pub fn render(doc: &Value, format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc).expect("values serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", doc, &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([k, v])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)
                .expect("csv output is utf-8")
        }
        Format::Human => {
            let mut s = String::new();
            human(doc, 0, &mut s);
            s
        }
    })
}

/// Parse `argv` (including the program name), run it and write the result.
/// Returns the process exit status.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    if let Some(n) = config.threads {
        // A pool may already exist when dispatch runs more than once in a process.
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .is_err()
        {
            log::debug!("global thread pool already initialised; --threads ignored");
        }
    }
    match execute(&config).and_then(|doc| render(&doc, config.format)) {
        Ok(text) => match out.write_all(text.as_bytes()) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: cannot write output: {e}");
                1
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = dispatch(
            std::iter::once("repfreq").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(&["bogus"]).0, 2);
        assert_eq!(run(&["app", "fiscal", "--tau", "1.5", "--c", "0.2"]).0, 2);
        assert_eq!(run(&[]).0, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("fstar"));
    }

    #[test]
    fn app_product_choice() {
        let (code, out, _) = run(&[
            "app",
            "product-choice",
            "--gamma",
            "0.5",
            "--ch",
            "0.4",
            "--cl",
            "0.2",
        ]);
        assert_eq!(code, 0);
        let doc: AppOut = serde_json::from_str(&out).unwrap();
        assert!((doc.closed_form - 0.375).abs() < 1e-15);
        assert!(doc.difference.abs() < 1e-8);
    }

    #[test]
    fn domain_errors_exit_one() {
        let (code, _, err) = run(&["fstar", "/nonexistent/game.json"]);
        assert_eq!(code, 1);
        assert!(err.contains("cannot read"));
        let (code, _, _) = run(&[
            "app",
            "entry",
            "--gamma",
            "0.6",
            "--co",
            "0.5",
            "--ci",
            "0.3",
            "--subsidy",
            "0.5",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn formats() {
        let args = ["app", "fiscal", "--tau", "0.3", "--c", "0.2"];
        let (_, csv_out, _) = run(&[&args[..], &["--format", "csv"]].concat());
        assert!(csv_out.starts_with("key,value\n"));
        assert!(csv_out.contains("params.variant,fiscal"));
        let (_, human_out, _) = run(&[&args[..], &["--format", "human"]].concat());
        assert!(human_out.contains("closed_form: "));
    }
}

//! Command-line front end: flag and config-file resolution, the
//! experiment subcommands, and the CSV/JSON writers.
//!
//! Every output starts with a header recording the program version, the
//! full configuration and the seed. CSV floats are written with 17
//! significant digits; runs are computed in parallel but always emitted in
//! run order, so a fixed invocation produces the same bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::blocks::{self, BlockOptions, TransienceOptions, TransienceReport};
use crate::coupling::{run_coupled, CoupledOptions, CoupledReport};
use crate::engine::{EventRecord, ModelConfig, RandomTape, ServiceKind};
use crate::error::{Error, Result};
use crate::explicit_sim::{
    customers_from_potential, run_until_regeneration, CustomerSet, ExplicitSim,
    RegenerationOutcome, Strategy,
};
use crate::lyapunov::{self, derive_constants, run_seed};
use crate::potential_sim::{
    run_potential_until_regeneration, ClearProfile, PotentialSim, PotentialState, ProfileFile,
};
use crate::stats::{ks_two_sample, mean, Z95};

#[derive(Parser, Debug, Clone)]
#[command(
    name = "greedy",
    version,
    about = "Greedy server on the circle: simulations and verification experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    /// Parse a full argument list (program name first) without exiting.
    pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, String>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        Cli::try_parse_from(args).map_err(|e| e.to_string())
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// Arrival rate.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Service rate.
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Server speed.
    #[arg(long, global = true)]
    pub speed: Option<f64>,
    /// Service law: exp, det or geom:<p>.
    #[arg(long, global = true)]
    pub service: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub runs: Option<u64>,
    /// Time horizon per run.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Initial state: empty, const:<level> or file:<path>.
    #[arg(long, global = true)]
    pub init: Option<String>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// TOML file with any of the global options; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Explicit,
    Potential,
    Polling,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Run until the first regeneration; one summary row per run.
    Simulate {
        #[arg(long, value_enum, default_value = "explicit")]
        model: Model,
        /// Also write the event logs here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Polling server stops while the system is empty.
        #[arg(long)]
        halt_when_empty: bool,
    },
    /// Coupled circle / line / truncated-line runs with identity checks.
    Couple {
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_events: u64,
    },
    /// Failure fraction of the drift event per starting level B.
    Drift {
        #[arg(long = "B", value_delimiter = ',', default_values_t = [10.0, 20.0, 40.0])]
        b: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        b_star: f64,
    },
    /// Regeneration cycles from the empty state: censoring and the serving fraction.
    Regen {
        #[arg(long, value_enum, default_value = "explicit")]
        model: Model,
        #[arg(long)]
        halt_when_empty: bool,
        /// Allowed gap between the serving fraction and lambda/mu.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Block detection and renewal time on the truncated line.
    Blocks {
        #[arg(long, default_value_t = 1)]
        min_blocks: u32,
        /// Check α-unimodality every this many events (0: epoch starts only).
        #[arg(long, default_value_t = 0)]
        alpha_stride: u64,
        /// Per-run summary table.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Per-block success rates.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        j_max: u32,
    },
    /// Hitting times of the dominating random walk.
    Walk {
        #[arg(long)]
        rho: f64,
        #[arg(long = "s", default_value_t = 1.0)]
        start: f64,
        /// Up-step size; defaults to Ψ for the given lambda.
        #[arg(long)]
        psi: Option<f64>,
        /// Down-step size; defaults to ε for the given lambda.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        max_steps: u64,
    },
    /// Explicit vs potential simulation from the empty state, two-sample KS.
    Compare {
        /// Significance level of the KS gates.
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Couple { .. } => "couple",
            Command::Drift { .. } => "drift",
            Command::Regen { .. } => "regen",
            Command::Blocks { .. } => "blocks",
            Command::Walk { .. } => "walk",
            Command::Compare { .. } => "compare",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    lambda: Option<f64>,
    mu: Option<f64>,
    speed: Option<f64>,
    service: Option<String>,
    seed: Option<u64>,
    runs: Option<u64>,
    horizon: Option<f64>,
    init: Option<String>,
    format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Empty,
    Const(f64),
    File(ProfileFile),
}

impl Init {
    pub fn parse(s: &str) -> Result<Init> {
        if s == "empty" {
            return Ok(Init::Empty);
        }
        if let Some(level) = s.strip_prefix("const:") {
            let level: f64 = level
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad constant level `{level}`")))?;
            if !(level <= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "potential level must be <= 0, got {level}"
                )));
            }
            return Ok(Init::Const(level));
        }
        if let Some(path) = s.strip_prefix("file:") {
            let text = std::fs::read_to_string(path)?;
            return Ok(Init::File(serde_json::from_str(&text)?));
        }
        Err(Error::InvalidConfig(format!("unknown initial state `{s}`")))
    }

    /// Potential-process state; `Empty` is the idle circle.
    pub fn potential_state(&self) -> Result<PotentialState> {
        match self {
            Init::Empty => Ok(PotentialState::empty_circle(0.0)),
            Init::Const(level) => Ok(PotentialState::serving(
                ClearProfile::constant_circle(*level),
                0.0,
            )),
            Init::File(f) => PotentialState::from_file(f),
        }
    }

    /// Server position and customers for the explicit simulator.
    pub fn customers(&self, lambda: f64, tape: &RandomTape) -> Result<(f64, CustomerSet)> {
        match self {
            Init::Empty => Ok((0.0, CustomerSet::new())),
            _ => {
                let st = self.potential_state()?;
                Ok((
                    st.server,
                    customers_from_potential(&st.profile, lambda, tape)?,
                ))
            }
        }
    }
}

/// Resolved options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: ModelConfig,
    pub service: ServiceKind,
    pub seed: u64,
    pub runs: Option<u64>,
    pub horizon: Option<f64>,
    pub init: Option<Init>,
    pub init_text: Option<String>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(g: &Global) -> Result<Settings> {
        let file = match &g.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let lambda = g.lambda.or(file.lambda).unwrap_or(0.5);
        let mu = g.mu.or(file.mu).unwrap_or(1.0);
        let speed = g.speed.or(file.speed).unwrap_or(1.0);
        let service: ServiceKind = g
            .service
            .clone()
            .or(file.service)
            .unwrap_or_else(|| "exp".into())
            .parse()?;
        let init_text = g.init.clone().or(file.init);
        let init = init_text.as_deref().map(Init::parse).transpose()?;
        Ok(Settings {
            config: ModelConfig::new(lambda, mu, speed, service)?,
            service,
            seed: g.seed.or(file.seed).unwrap_or(0),
            runs: g.runs.or(file.runs),
            horizon: g.horizon.or(file.horizon),
            init,
            init_text,
            format: g.format.or(file.format),
            out: g.out.clone(),
        })
    }
}

/// A failed statistical or verification gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub metric: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    Opt(Option<f64>),
    U(u64),
    B(bool),
    S(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) | Cell::Opt(Some(x)) => fmt_float(*x),
            Cell::Opt(None) | Cell::Empty => String::new(),
            Cell::U(n) => n.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) | Cell::Opt(Some(x)) => json_float(*x),
            Cell::Opt(None) | Cell::Empty => Value::Null,
            Cell::U(n) => json!(n),
            Cell::B(b) => json!(b),
            Cell::S(s) => json!(s),
        }
    }
}

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn json_float(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Table {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn json_rows(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    for (c, v) in self.columns.iter().zip(r) {
                        m.insert((*c).to_string(), v.json());
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub header: Value,
    pub table: Table,
    /// Structured JSON body; the table rows are used when absent.
    pub body: Option<(&'static str, Value)>,
    pub default_format: Option<Format>,
    /// Extra outputs written next to the main one.
    pub extra: Vec<(PathBuf, Table)>,
    pub gates: Vec<Gate>,
}

fn header(
    cmd: &str,
    s: &Settings,
    runs: u64,
    horizon: Option<f64>,
    init: &str,
    options: Value,
) -> Value {
    json!({
        "program": "greedy",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd,
        "config": {
            "lambda": s.config.lambda,
            "mu": s.config.mu,
            "speed": s.config.speed,
            "service": s.service.to_string(),
            "runs": runs,
            "horizon": horizon,
            "init": init,
            "options": options,
        },
        "seed": s.seed,
    })
}

/// Render a table as CSV with `#` header lines.
pub fn render_csv(header: &Value, table: &Table) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!(
        "# {} {}\n",
        header["program"].as_str().unwrap_or("greedy"),
        header["version"].as_str().unwrap_or("")
    ));
    out.push_str(&format!(
        "# command: {}\n",
        header["command"].as_str().unwrap_or("")
    ));
    out.push_str(&format!(
        "# config: {}\n",
        serde_json::to_string(&header["config"])?
    ));
    out.push_str(&format!("# seed: {}\n", header["seed"]));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.columns).map_err(csv_err)?;
    for r in &table.rows {
        w.write_record(r.iter().map(Cell::csv)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?);
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn render_json(header: &Value, key: &str, body: Value) -> Result<String> {
    let mut m = Map::new();
    m.insert("header".into(), header.clone());
    m.insert(key.into(), body);
    let mut s = serde_json::to_string_pretty(&Value::Object(m))?;
    s.push('\n');
    Ok(s)
}

fn write_to(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Rendered outputs of one invocation, not yet written.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub text: String,
    /// Destination of `text`; stdout when absent.
    pub out: Option<PathBuf>,
    pub extra: Vec<(PathBuf, String)>,
    pub gates: Vec<Gate>,
}

impl Rendered {
    pub fn write(&self) -> Result<()> {
        write_to(self.out.as_deref(), &self.text)?;
        for (path, text) in &self.extra {
            write_to(Some(path), text)?;
        }
        Ok(())
    }
}

/// Resolve the options, run the subcommand and render every output.
pub fn render(cli: &Cli) -> Result<Rendered> {
    let settings = Settings::resolve(&cli.global)?;
    let outcome = execute(&cli.command, &settings)?;
    let format = settings
        .format
        .or(outcome.default_format)
        .unwrap_or(Format::Csv);
    let text = match format {
        Format::Csv => render_csv(&outcome.header, &outcome.table)?,
        Format::Json => match &outcome.body {
            Some((key, body)) => render_json(&outcome.header, key, body.clone())?,
            None => render_json(&outcome.header, "rows", outcome.table.json_rows())?,
        },
    };
    let mut extra = Vec::new();
    for (path, table) in &outcome.extra {
        let text = match format {
            Format::Csv => render_csv(&outcome.header, table)?,
            Format::Json => render_json(&outcome.header, "rows", table.json_rows())?,
        };
        extra.push((path.clone(), text));
    }
    Ok(Rendered {
        text,
        out: settings.out,
        extra,
        gates: outcome.gates,
    })
}

/// Parse, run, and write. Returns the failed gates.
pub fn run(cli: &Cli) -> Result<Vec<Gate>> {
    let r = render(cli)?;
    r.write()?;
    Ok(r.gates)
}

/// Run a subcommand and collect its outputs without writing anything.
pub fn execute(cmd: &Command, s: &Settings) -> Result<Outcome> {
    match cmd {
        Command::Simulate {
            model,
            log,
            halt_when_empty,
        } => simulate(s, *model, log.clone(), *halt_when_empty),
        Command::Couple {
            tolerance,
            max_events,
        } => couple(s, *tolerance, *max_events),
        Command::Drift { b, b_star } => drift(s, b, *b_star),
        Command::Regen {
            model,
            halt_when_empty,
            tolerance,
        } => regen(s, *model, *halt_when_empty, *tolerance),
        Command::Blocks {
            min_blocks,
            alpha_stride,
            summary,
            rates,
            j_max,
        } => blocks_cmd(
            s,
            *min_blocks,
            *alpha_stride,
            summary.clone(),
            rates.clone(),
            *j_max,
        ),
        Command::Walk {
            rho,
            start,
            psi,
            eps,
            max_steps,
        } => walk(s, *rho, *start, *psi, *eps, *max_steps),
        Command::Compare { alpha } => compare(s, *alpha),
    }
}

fn strategy(model: Model, halt_when_empty: bool) -> Strategy {
    match model {
        Model::Polling => Strategy::Polling { halt_when_empty },
        _ => Strategy::Greedy,
    }
}

/// One regeneration run of the chosen model.
fn regeneration_run(
    s: &Settings,
    model: Model,
    halt: bool,
    init: &Init,
    seed: u64,
    horizon: f64,
    keep_log: bool,
) -> Result<RegenerationOutcome> {
    let tape = RandomTape::new(seed);
    match model {
        Model::Potential => {
            let mut sim = PotentialSim::new(s.config, &tape, init.potential_state()?)?;
            run_potential_until_regeneration(&mut sim, horizon, keep_log)
        }
        _ => {
            let (server, customers) = init.customers(s.config.lambda, &tape)?;
            let mut sim =
                ExplicitSim::new(s.config, strategy(model, halt), &tape, server, customers)?;
            Ok(run_until_regeneration(&mut sim, horizon, keep_log))
        }
    }
}

fn model_name(model: Model, halt: bool) -> &'static str {
    match model {
        Model::Potential => "greedy",
        _ => strategy(model, halt).name(),
    }
}

fn simulate(s: &Settings, model: Model, log: Option<PathBuf>, halt: bool) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(1);
    let horizon = s.horizon.unwrap_or(1e5);
    let init = s.init.clone().unwrap_or(Init::Empty);
    let init_text = s.init_text.clone().unwrap_or_else(|| "empty".into());
    let keep = log.is_some();
    let outs: Vec<(u64, RegenerationOutcome)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = run_seed(s.seed, 0, r);
            regeneration_run(s, model, halt, &init, seed, horizon, keep).map(|o| (seed, o))
        })
        .collect::<Result<_>>()?;
    let name = model_name(model, halt);
    let mut table = Table::new(&[
        "run_id",
        "seed",
        "tau",
        "censored",
        "n_served",
        "busy_time",
        "travel_time",
        "idle_time",
        "traveled",
        "strategy",
    ]);
    for (r, (seed, o)) in outs.iter().enumerate() {
        table.rows.push(vec![
            Cell::U(r as u64),
            Cell::U(*seed),
            Cell::Opt(o.tau),
            Cell::B(o.censored),
            Cell::U(o.served),
            Cell::F(o.split.serving),
            Cell::F(o.split.moving),
            Cell::F(o.split.idle),
            Cell::F(o.traveled),
            Cell::S(name.into()),
        ]);
    }
    let mut extra = Vec::new();
    if let Some(path) = log {
        let mut t = Table::new(&["run_id", "time", "kind", "S", "C", "n_customers"]);
        for (r, (_, o)) in outs.iter().enumerate() {
            for ev in &o.log {
                t.rows.push(event_row(r as u64, ev));
            }
        }
        extra.push((path, t));
    }
    let options = json!({ "model": model, "halt_when_empty": halt });
    Ok(Outcome {
        header: header("simulate", s, runs, Some(horizon), &init_text, options),
        table,
        extra,
        ..Default::default()
    })
}

fn event_row(run: u64, ev: &EventRecord) -> Vec<Cell> {
    vec![
        Cell::U(run),
        Cell::F(ev.time),
        Cell::S(ev.kind.as_str().into()),
        Cell::F(ev.server),
        Cell::Opt(ev.target),
        ev.customers.map_or(Cell::Empty, |n| Cell::U(n as u64)),
    ]
}

fn couple(s: &Settings, tolerance: f64, max_events: u64) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(100);
    let horizon = s.horizon.unwrap_or(1e3);
    let init = s.init.clone().unwrap_or(Init::Const(-1.0));
    let init_text = s.init_text.clone().unwrap_or_else(|| "const:-1".into());
    let start = init.potential_state()?;
    let opts = CoupledOptions {
        tolerance,
        horizon,
        max_events,
    };
    let reports: Vec<CoupledReport> = (0..runs)
        .into_par_iter()
        .map(|r| {
            run_coupled(
                &s.config,
                &RandomTape::new(run_seed(s.seed, 0, r)),
                &start,
                &opts,
            )
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&[
        "run_id",
        "seed",
        "T_o_event",
        "T_o_time",
        "T_v_event",
        "T_v_time",
        "T_1_event",
        "T_1_time",
        "T_U_event",
        "T_U_time",
        "identities_ok",
        "degenerate",
        "shapes_ok",
        "events",
        "first_divergence",
    ]);
    let stamp = |st: Option<crate::coupling::Stamp>| match st {
        Some(st) => [Cell::U(st.event), Cell::F(st.time)],
        None => [Cell::Empty, Cell::Empty],
    };
    let mut bad = 0u64;
    for (r, rep) in reports.iter().enumerate() {
        bad += !rep.identities_ok as u64;
        let mut row = vec![Cell::U(r as u64), Cell::U(rep.seed)];
        row.extend(stamp(rep.t_circle.t_o));
        row.extend(stamp(rep.t_circle.t_v));
        row.extend(stamp(rep.t_line.t_1));
        row.extend(stamp(rep.t_line.t_u));
        row.extend([
            Cell::B(rep.identities_ok),
            Cell::B(rep.degenerate),
            Cell::B(rep.shapes_ok),
            Cell::U(rep.events),
            rep.first_divergence.as_ref().map_or(Cell::Empty, |d| {
                Cell::S(format!("{}:{}", d.pair, d.quantity))
            }),
        ]);
        table.rows.push(row);
    }
    let mut gates = Vec::new();
    if bad > 0 {
        gates.push(Gate {
            metric: "identities_ok".into(),
            detail: format!("{bad} of {runs} runs diverged"),
        });
    }
    let options = json!({ "tolerance": tolerance, "max_events": max_events });
    Ok(Outcome {
        header: header("couple", s, runs, Some(horizon), &init_text, options),
        table,
        body: Some(("reports", serde_json::to_value(&reports)?)),
        default_format: Some(Format::Json),
        gates,
        ..Default::default()
    })
}

fn drift(s: &Settings, b_values: &[f64], b_star: f64) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(1000);
    let c = derive_constants(s.config.lambda, s.config.mu, s.config.speed, b_star)?;
    let (rows, _) = match &s.init {
        None => lyapunov::drift_experiment(&s.config, &c, b_values, runs, s.seed, |b| {
            lyapunov::constant_start(b, &c)
        })?,
        Some(init) => {
            let st = init.potential_state()?;
            let b = lyapunov::functional_b(&st.profile, &c);
            lyapunov::drift_experiment(&s.config, &c, &[b], runs, s.seed, |_| st.clone())?
        }
    };
    let mut table = Table::new(&[
        "B_target",
        "n_runs",
        "failures",
        "rho_hat",
        "ci_low",
        "ci_high",
        "mean_T",
        "mean_M",
        "mean_S",
        "mean_N_served",
        "check_violations",
    ]);
    for r in &rows {
        table.rows.push(vec![
            Cell::F(r.b_target),
            Cell::U(r.n_runs),
            Cell::U(r.failures),
            Cell::F(r.rho_hat),
            Cell::F(r.ci_low),
            Cell::F(r.ci_high),
            Cell::F(r.mean_t),
            Cell::F(r.mean_m),
            Cell::F(r.mean_s),
            Cell::F(r.mean_n_served),
            Cell::U(r.check_violations),
        ]);
    }
    let mut gates = Vec::new();
    let violations: u64 = rows.iter().map(|r| r.check_violations).sum();
    if violations > 0 {
        gates.push(Gate {
            metric: "check_violations".into(),
            detail: format!("{violations} runs broke a drift inequality"),
        });
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.b_target.total_cmp(&b.b_target));
    for w in sorted.windows(2) {
        if w[1].rho_hat > w[0].rho_hat + w[0].half_width() + w[1].half_width() {
            gates.push(Gate {
                metric: "rho_hat".into(),
                detail: format!(
                    "failure fraction rises from B = {} to B = {}",
                    w[0].b_target, w[1].b_target
                ),
            });
        }
    }
    let init_text = s
        .init_text
        .clone()
        .unwrap_or_else(|| "constant B level".into());
    let options = json!({ "B": b_values, "b_star": b_star, "constants": c });
    Ok(Outcome {
        header: header("drift", s, runs, None, &init_text, options),
        table,
        gates,
        ..Default::default()
    })
}

fn regen(s: &Settings, model: Model, halt: bool, tolerance: f64) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(10_000);
    let horizon = s.horizon.unwrap_or(1e5);
    let init = s.init.clone().unwrap_or(Init::Empty);
    let init_text = s.init_text.clone().unwrap_or_else(|| "empty".into());
    let outs: Vec<RegenerationOutcome> = (0..runs)
        .into_par_iter()
        .map(|r| {
            regeneration_run(
                s,
                model,
                halt,
                &init,
                run_seed(s.seed, 0, r),
                horizon,
                false,
            )
        })
        .collect::<Result<_>>()?;
    let censored = outs.iter().filter(|o| o.censored).count() as u64;
    let taus: Vec<f64> = outs.iter().map(|o| o.end_time).collect();
    let m = mean(&taus);
    let sd = if taus.len() > 1 {
        (taus.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (taus.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let hw = Z95 * sd / (taus.len() as f64).sqrt();
    let total: f64 = taus.iter().sum();
    let serving: f64 = outs.iter().map(|o| o.split.serving).sum();
    let fraction = serving / total;
    let target = s.config.lambda / s.config.mu;
    let served = mean(&outs.iter().map(|o| o.served as f64).collect::<Vec<_>>());
    let mut table = Table::new(&[
        "strategy",
        "n_runs",
        "censored",
        "mean_tau",
        "tau_ci_low",
        "tau_ci_high",
        "mean_served",
        "serving_fraction",
        "target_fraction",
    ]);
    table.rows.push(vec![
        Cell::S(model_name(model, halt).into()),
        Cell::U(runs),
        Cell::U(censored),
        Cell::F(m),
        Cell::F(m - hw),
        Cell::F(m + hw),
        Cell::F(served),
        Cell::F(fraction),
        Cell::F(target),
    ]);
    let mut gates = Vec::new();
    if censored > 0 {
        gates.push(Gate {
            metric: "censored".into(),
            detail: format!("{censored} cycles reached the horizon {horizon}"),
        });
    }
    if (fraction - target).abs() > tolerance {
        gates.push(Gate {
            metric: "serving_fraction".into(),
            detail: format!("{fraction} is not within {tolerance} of {target}"),
        });
    }
    let options = json!({ "model": model, "halt_when_empty": halt, "tolerance": tolerance });
    Ok(Outcome {
        header: header("regen", s, runs, Some(horizon), &init_text, options),
        table,
        gates,
        ..Default::default()
    })
}

/// Starting line state for block detection: a circle state is lifted and
/// truncated, a line state is used as given.
pub fn blocks_start(init: &Init) -> Result<PotentialState> {
    let st = init.potential_state()?;
    if st.profile.is_circle() {
        blocks::truncated_start(&st)
    } else {
        Ok(st)
    }
}

const BLOCK_SCOPE: &str =
    "success event: the displayed Q, X, M, travel and confinement bounds plus V = X for j = 1; \
                           renewal restarts at the first observed failure";

fn blocks_cmd(
    s: &Settings,
    min_blocks: u32,
    alpha_stride: u64,
    summary: Option<PathBuf>,
    rates: Option<PathBuf>,
    j_max: u32,
) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(200);
    let horizon = s.horizon.unwrap_or(1e4);
    let init = s.init.clone().unwrap_or(Init::Const(-1.0));
    let init_text = s.init_text.clone().unwrap_or_else(|| "const:-1".into());
    let start = blocks_start(&init)?;
    let opts = TransienceOptions {
        blocks: BlockOptions {
            horizon,
            alpha_stride,
            ..Default::default()
        },
        min_blocks,
    };
    let reports: Vec<TransienceReport> = (0..runs)
        .into_par_iter()
        .map(|r| {
            blocks::renewal_transience(
                &s.config,
                &RandomTape::new(run_seed(s.seed, 0, r)),
                &start,
                &opts,
            )
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&[
        "run_id",
        "epoch",
        "j",
        "L_j",
        "Z_j",
        "N_j",
        "Q_j",
        "X_j",
        "M_j",
        "V_j",
        "success",
        "failed_condition",
    ]);
    for (r, rep) in reports.iter().enumerate() {
        for b in &rep.blocks {
            table.rows.push(vec![
                Cell::U(r as u64),
                Cell::U(b.epoch as u64),
                Cell::U(b.j as u64),
                Cell::F(b.l_j),
                Cell::F(b.z_j),
                Cell::F(b.n_j),
                Cell::U(b.q_j),
                Cell::F(b.x_j),
                Cell::F(b.m_j),
                Cell::F(b.v_j),
                Cell::B(b.success),
                b.failed.map_or(Cell::Empty, |f| Cell::S(f.as_str().into())),
            ]);
        }
    }
    let rate_rows = blocks::success_rates(&reports, j_max);
    let mut extra = Vec::new();
    if let Some(path) = summary {
        let mut t = Table::new(&[
            "run_id",
            "seed",
            "renewals",
            "T_Z",
            "served_before_T_Z",
            "served_bound",
            "censored",
            "final_successes",
            "strongly_transient",
            "traveled_bound_ok",
            "alpha_violations",
            "shape_violations",
        ]);
        let opt_b = |b: Option<bool>| b.map_or(Cell::Empty, Cell::B);
        let opt_u = |u: Option<u64>| u.map_or(Cell::Empty, Cell::U);
        for (r, rep) in reports.iter().enumerate() {
            t.rows.push(vec![
                Cell::U(r as u64),
                Cell::U(rep.seed),
                Cell::U(rep.renewals),
                Cell::Opt(rep.t_z),
                opt_u(rep.served_before_t_z),
                opt_u(rep.served_bound),
                Cell::B(rep.censored),
                Cell::U(rep.final_successes as u64),
                opt_b(rep.strongly_transient),
                opt_b(rep.traveled_bound_ok),
                Cell::U(rep.alpha_violations),
                Cell::U(rep.shape_violations),
            ]);
        }
        extra.push((path, t));
    }
    if let Some(path) = rates {
        let mut t = Table::new(&["j", "attempts", "successes", "p_hat", "ci_low", "ci_high"]);
        for r in &rate_rows {
            t.rows.push(vec![
                Cell::U(r.j as u64),
                Cell::U(r.attempts),
                Cell::U(r.successes),
                Cell::F(r.p_hat),
                Cell::F(r.ci_low),
                Cell::F(r.ci_high),
            ]);
        }
        extra.push((path, t));
    }
    let mut gates = Vec::new();
    let count = |f: &dyn Fn(&TransienceReport) -> bool| reports.iter().filter(|r| f(r)).count();
    let checks: [(&str, usize); 5] = [
        (
            "strong_transience",
            count(&|r| r.strongly_transient == Some(false)),
        ),
        (
            "traveled_bound",
            count(&|r| r.traveled_bound_ok == Some(false)),
        ),
        (
            "served_bound",
            count(
                &|r| matches!((r.served_before_t_z, r.served_bound), (Some(n), Some(b)) if n > b),
            ),
        ),
        ("alpha_unimodal", count(&|r| r.alpha_violations > 0)),
        ("block_shape", count(&|r| r.shape_violations > 0)),
    ];
    for (metric, n) in checks {
        if n > 0 {
            gates.push(Gate {
                metric: metric.into(),
                detail: format!("{n} of {runs} runs"),
            });
        }
    }
    let options = json!({
        "min_blocks": min_blocks,
        "alpha": opts.blocks.alpha,
        "alpha_stride": alpha_stride,
        "scope": BLOCK_SCOPE,
    });
    let body = json!({ "runs": reports, "success_rates": rate_rows });
    Ok(Outcome {
        header: header("blocks", s, runs, Some(horizon), &init_text, options),
        table,
        body: Some(("results", body)),
        extra,
        gates,
        ..Default::default()
    })
}

fn walk(
    s: &Settings,
    rho: f64,
    start: f64,
    psi: Option<f64>,
    eps: Option<f64>,
    max_steps: u64,
) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(10_000);
    let (psi, eps) = match (psi, eps) {
        (Some(p), Some(e)) => (p, e),
        _ => {
            let c = derive_constants(s.config.lambda, s.config.mu, s.config.speed, 1.0)?;
            (psi.unwrap_or(c.psi), eps.unwrap_or(c.eps))
        }
    };
    let times = lyapunov::dominating_walk(start, rho, psi, eps, runs, s.seed, max_steps)?;
    let mut counts = std::collections::BTreeMap::new();
    let mut censored = 0u64;
    for t in &times {
        match t {
            Some(n) => *counts.entry(*n).or_insert(0u64) += 1,
            None => censored += 1,
        }
    }
    let mut table = Table::new(&["sigma", "count", "censored"]);
    for (n, k) in &counts {
        table
            .rows
            .push(vec![Cell::U(*n), Cell::U(*k), Cell::B(false)]);
    }
    if censored > 0 {
        table
            .rows
            .push(vec![Cell::Empty, Cell::U(censored), Cell::B(true)]);
    }
    let options = json!({ "rho": rho, "s": start, "psi": psi, "eps": eps, "max_steps": max_steps });
    Ok(Outcome {
        header: header("walk", s, runs, None, "walk", options),
        table,
        ..Default::default()
    })
}

fn compare(s: &Settings, alpha: f64) -> Result<Outcome> {
    let runs = s.runs.unwrap_or(10_000);
    let horizon = s.horizon.unwrap_or(1e5);
    let empty = Init::Empty;
    let series = |model: Model, k: u64| -> Result<Vec<RegenerationOutcome>> {
        (0..runs)
            .into_par_iter()
            .map(|r| {
                regeneration_run(
                    s,
                    model,
                    false,
                    &empty,
                    run_seed(s.seed, k, r),
                    horizon,
                    false,
                )
            })
            .collect()
    };
    let explicit = series(Model::Explicit, 0)?;
    let potential = series(Model::Potential, 1)?;
    let busy = |v: &[RegenerationOutcome]| -> Vec<f64> {
        v.iter()
            .filter_map(|o| Some(o.tau? - o.first_arrival?))
            .collect()
    };
    let served = |v: &[RegenerationOutcome]| -> Vec<f64> {
        v.iter()
            .filter(|o| !o.censored)
            .map(|o| o.served as f64)
            .collect()
    };
    let censored = |v: &[RegenerationOutcome]| v.iter().filter(|o| o.censored).count() as u64;
    let mut table = Table::new(&[
        "functional",
        "statistic",
        "p_value",
        "n_explicit",
        "n_potential",
        "censored_explicit",
        "censored_potential",
        "passed",
    ]);
    let mut gates = Vec::new();
    for (name, a, b) in [
        ("busy_period", busy(&explicit), busy(&potential)),
        ("served", served(&explicit), served(&potential)),
    ] {
        let ks = ks_two_sample(&a, &b);
        let passed = ks.p_value >= alpha;
        table.rows.push(vec![
            Cell::S(name.into()),
            Cell::F(ks.statistic),
            Cell::F(ks.p_value),
            Cell::U(ks.n1 as u64),
            Cell::U(ks.n2 as u64),
            Cell::U(censored(&explicit)),
            Cell::U(censored(&potential)),
            Cell::B(passed),
        ]);
        if !passed {
            gates.push(Gate {
                metric: format!("ks_{name}"),
                detail: format!("p = {} below {alpha}", ks.p_value),
            });
        }
    }
    let options = json!({ "alpha": alpha });
    Ok(Outcome {
        header: header("compare", s, runs, Some(horizon), "empty", options),
        table,
        gates,
        ..Default::default()
    })
}

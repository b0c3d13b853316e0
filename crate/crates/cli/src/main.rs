#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvdd::coherence::udd_model;
use nvdd::montecarlo::{mc_envelope, mc_fast_field_rate, McOptions, NoiseKind};
use nvdd::sensitivity::{calibrate_fe, eta_upper_bound, sensitivity_sweep, DEFAULT_BOUND_RANGE};
use nvdd::sequences::{cdd, hahn, udd, DEFAULT_TOLERANCE};
use nvdd::{
    bath_from_concentration, coherence_curve, Error, Mode, NoiseEnvironment, PhysicalConstants,
    PulseSequence, SequenceFamily, SequenceLabel, SuppressionReport,
};
use serde_json::json;

use config::{ConfigError, Format, Overrides, Preset, RunConfig};
use table::{Cell, Table};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "nvdd",
    version,
    about = "Dephasing, decoupling and sensitivity of NV-centre magnetometers"
)]
struct Cli {
    /// Flat key = value file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter bundle applied before the config file.
    #[arg(long, value_enum, global = true)]
    preset: Option<Preset>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bath field strength, correlation time and free-induction time.
    Bath,
    /// Pulse schedule and its moment-cancellation report.
    Sequence {
        #[arg(long, value_enum)]
        kind: SeqKind,
        /// Pulse count for udd.
        #[arg(short = 'n', long, default_value_t = 1)]
        pulses: usize,
        /// Nesting level for cdd.
        #[arg(short = 'l', long, default_value_t = 1)]
        level: usize,
        /// Window length in seconds.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Highest moment listed in the report.
        #[arg(long, default_value_t = 8)]
        max_order: usize,
        /// Write the report as JSON here; otherwise a summary goes to stderr.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Analytic dephasing envelopes under udd(n).
    Envelope {
        /// Comma-separated pulse counts.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 4, 8, 16])]
        pulses: Vec<usize>,
        /// Longest window (s); defaults to the bath correlation time.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Coherence time against pulse count.
    Coherence {
        #[arg(long, default_value_t = 50)]
        n_max: usize,
    },
    /// Optimized sensitivity against pulse count.
    Sensitivity {
        /// telegraph, ac or fluctuating:<theta_ext>.
        #[arg(long, default_value = "telegraph")]
        mode: Mode,
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        /// Ignore pulse errors and finite pulse width.
        #[arg(long)]
        no_penalty: bool,
        /// Append the analytic upper bound, with the same mode factor and
        /// penalty as the η column.
        #[arg(long)]
        bound: bool,
    },
    /// Stochastic cross-checks on sampled noise paths.
    #[command(subcommand)]
    Montecarlo(McCommand),
}

#[derive(Subcommand)]
enum McCommand {
    /// Empirical envelope on a uniform time grid.
    Envelope {
        #[arg(long, default_value = "hahn")]
        sequence: String,
        #[arg(long, default_value = "smooth")]
        kind: NoiseKind,
        #[arg(long, default_value_t = 100_000)]
        n_traj: usize,
        /// Longest window (s); defaults to τ_c/(2√2).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 64)]
        points: usize,
        /// Sampling step (s); defaults to the grid spacing / 8.
        #[arg(long)]
        dt: Option<f64>,
        /// JSON run metadata; defaults to `<output>.json` when writing to a file.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Decay rate of a fast external field.
    FastRate {
        #[arg(long, default_value = "free")]
        sequence: String,
        #[arg(long, default_value_t = 20.0)]
        theta_ext: f64,
        #[arg(long, default_value_t = 1e-6)]
        tau_ext: f64,
        #[arg(long, default_value_t = 100_000)]
        n_traj: usize,
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SeqKind {
    Free,
    Hahn,
    Udd,
    Cdd,
}

enum Failure {
    Validation(String),
    Regime(String),
    Resource(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Regime(_) => 3,
            Failure::Resource(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Regime(m) | Failure::Resource(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let text = e.to_string();
        match e {
            Error::Regime(_) => Failure::Regime(text),
            Error::Resource(_) => Failure::Resource(text),
            Error::Resolution(_) => Failure::Validation(format!("{text} (pass a smaller --dt)")),
            _ => Failure::Validation(text),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.0)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Resource(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("nvdd: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(cli.preset, cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Bath => cmd_bath(&cfg),
        Command::Sequence {
            kind,
            pulses,
            level,
            tau,
            max_order,
            report,
        } => cmd_sequence(&cfg, kind, pulses, level, tau, max_order, report.as_deref()),
        Command::Envelope {
            pulses,
            t_max,
            points,
        } => cmd_envelope(&cfg, &pulses, t_max, points),
        Command::Coherence { n_max } => cmd_coherence(&cfg, n_max),
        Command::Sensitivity {
            mode,
            n_max,
            no_penalty,
            bound,
        } => cmd_sensitivity(&cfg, mode, n_max, !no_penalty, bound),
        Command::Montecarlo(mc) => cmd_montecarlo(&cfg, mc),
    }
}

fn environment(cfg: &RunConfig) -> Result<NoiseEnvironment, Failure> {
    Ok(bath_from_concentration(
        cfg.concentration,
        &PhysicalConstants::CODATA,
    )?)
}

fn gamma_e() -> f64 {
    PhysicalConstants::CODATA.gamma_e
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::Resource(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(cfg: &RunConfig, table: &Table) -> Result<(), Failure> {
    let mut out = open_output(cfg.output.as_deref())?;
    table.write(cfg.format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_bath(cfg: &RunConfig) -> Result<(), Failure> {
    let env = environment(cfg)?;
    let gamma = gamma_e();
    let mut t = Table::new(
        "bath/v1",
        &["concentration", "sigma0_T", "tau_c_s", "theta", "t2_star_s"],
    );
    t.push(vec![
        Cell::Num(cfg.concentration),
        Cell::Num(env.sigma0),
        Cell::Num(env.tau_c),
        Cell::Num(env.theta(gamma)),
        Cell::Num(2f64.sqrt() / (gamma * env.sigma0)),
    ]);
    emit(cfg, &t)
}

fn cmd_sequence(
    cfg: &RunConfig,
    kind: SeqKind,
    pulses: usize,
    level: usize,
    tau: f64,
    max_order: usize,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let seq = match kind {
        SeqKind::Free => PulseSequence::free(tau)?,
        SeqKind::Hahn => hahn(tau)?,
        SeqKind::Udd => udd(pulses, tau)?,
        SeqKind::Cdd => cdd(level, tau)?,
    };
    let report = SuppressionReport::evaluate(&seq, max_order, DEFAULT_TOLERANCE);
    let mut out = open_output(cfg.output.as_deref())?;
    match cfg.format {
        Format::Csv => out.write_all(seq.to_schedule().as_bytes())?,
        Format::Json => {
            let doc = json!({ "schedule": seq, "report": report });
            serde_json::to_writer_pretty(&mut out, &doc).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    out.flush()?;

    let order = report
        .order
        .map_or_else(|| "none".to_string(), |o| o.to_string());
    match report_path {
        Some(path) => {
            let text = serde_json::to_string_pretty(
                &json!({ "label": seq.label().to_string(), "report": report }),
            )
            .map_err(io::Error::from)?;
            std::fs::write(path, text)?;
        }
        None => {
            eprintln!("label: {}", seq.label());
            eprintln!("pulses: {}", seq.len());
            eprintln!("suppression order: {order}");
            for (m, (r, l)) in report.residuals.iter().zip(&report.lambda).enumerate() {
                eprintln!("  m = {m:2}  residual = {r:+.6e}  lambda = {l:+.6e}");
            }
        }
    }
    Ok(())
}

fn cmd_envelope(
    cfg: &RunConfig,
    pulses: &[usize],
    t_max: Option<f64>,
    points: usize,
) -> Result<(), Failure> {
    let env = environment(cfg)?;
    let t_max = t_max.unwrap_or(env.tau_c);
    if !(t_max > 0.0) || points < 2 || pulses.is_empty() {
        return Err(Failure::Validation(
            "envelope needs t_max > 0, at least 2 points and one pulse count".into(),
        ));
    }
    let mut t = Table::new("envelope/v1", &["pulses", "t_s", "envelope"]);
    for &n in pulses {
        let model = udd_model(n, &env, gamma_e())?;
        for i in 0..points {
            let time = t_max * i as f64 / (points - 1) as f64;
            t.push(vec![
                Cell::Int(n as u64),
                Cell::Num(time),
                Cell::Num(model.envelope(time)),
            ]);
        }
    }
    emit(cfg, &t)
}

fn cmd_coherence(cfg: &RunConfig, n_max: usize) -> Result<(), Failure> {
    let env = environment(cfg)?;
    let counts: Vec<usize> = (1..=n_max).collect();
    let curve = coherence_curve(&counts, &env, gamma_e())?;
    let mut t = Table::new("coherence/v1", &["pulses", "t2_s", "capped"]);
    for p in curve {
        t.push(vec![
            Cell::Int(p.pulses as u64),
            Cell::Num(p.t2),
            Cell::Bool(p.capped),
        ]);
    }
    emit(cfg, &t)
}

fn cmd_sensitivity(
    cfg: &RunConfig,
    mode: Mode,
    n_max: usize,
    penalty: bool,
    bound: bool,
) -> Result<(), Failure> {
    let env = environment(cfg)?;
    let mut mcfg = cfg.measurement();
    mcfg.validate()?;
    if bound {
        mcfg.f_e = Some(calibrate_fe(&env, &mcfg, DEFAULT_BOUND_RANGE.max(n_max))?);
    }
    let sweep = sensitivity_sweep(&env, &mcfg, mode, n_max, penalty)?;
    let mut columns = vec!["pulses", "tau_s", "eta_T_per_sqrtHz", "mode", "penalty"];
    if bound {
        columns.push("eta_bound_T_per_sqrtHz");
    }
    let mut t = Table::new(
        if bound {
            "sensitivity+bound/v1"
        } else {
            "sensitivity/v1"
        },
        &columns,
    );
    let factor = mode.factor()?;
    for p in &sweep {
        let mut row = vec![
            Cell::Int(p.pulses as u64),
            Cell::Num(p.tau),
            Cell::Num(p.eta),
            Cell::Text(p.mode.to_string()),
            Cell::Num(p.penalty),
        ];
        if bound {
            row.push(if p.pulses == 0 {
                Cell::Text(String::new())
            } else {
                Cell::Num(factor * p.penalty * eta_upper_bound(p.pulses, &env, &mcfg)?)
            });
        }
        t.push(row);
    }
    emit(cfg, &t)?;
    if let Some(best) = sweep.iter().min_by(|a, b| a.eta.total_cmp(&b.eta)) {
        eprintln!(
            "optimum: n = {}, tau = {:.6e} s, eta = {:.6e} T/sqrt(Hz)",
            best.pulses, best.tau, best.eta
        );
    }
    Ok(())
}

fn family(text: &str) -> Result<SequenceFamily, Failure> {
    let normalized = match text.split_once(':') {
        Some((name, arg)) => format!("{name}({arg})"),
        None => text.to_string(),
    };
    Ok(match normalized.parse::<SequenceLabel>()? {
        SequenceLabel::Free => SequenceFamily::Free,
        SequenceLabel::Hahn => SequenceFamily::Hahn,
        SequenceLabel::Udd(n) => SequenceFamily::Udd(n),
        SequenceLabel::Cdd(l) => SequenceFamily::Cdd(l),
        SequenceLabel::Custom => {
            return Err(Failure::Validation(
                "custom sequences are not available here".into(),
            ))
        }
    })
}

fn write_sidecar(
    cfg: &RunConfig,
    explicit: Option<PathBuf>,
    n_traj: usize,
    kind: NoiseKind,
    parameters: serde_json::Value,
) -> Result<(), Failure> {
    let path = explicit.or_else(|| {
        cfg.output.as_ref().map(|p| {
            let mut name = p.as_os_str().to_owned();
            name.push(".json");
            PathBuf::from(name)
        })
    });
    if let Some(path) = path {
        let doc = json!({
            "seed": cfg.seed,
            "n_traj": n_traj,
            "kind": kind,
            "parameters": parameters,
            "tool_version": VERSION,
        });
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&doc).map_err(io::Error::from)? + "\n",
        )?;
    }
    Ok(())
}

fn cmd_montecarlo(cfg: &RunConfig, command: McCommand) -> Result<(), Failure> {
    match command {
        McCommand::Envelope {
            sequence,
            kind,
            n_traj,
            t_max,
            points,
            dt,
            sidecar,
        } => {
            let env = environment(cfg)?;
            let family = family(&sequence)?;
            let t_max = t_max.unwrap_or(0.5 * env.tau_c / 2f64.sqrt());
            if !(t_max > 0.0) || points < 1 {
                return Err(Failure::Validation(
                    "need t_max > 0 and at least one point".into(),
                ));
            }
            let spacing = t_max / points as f64;
            let dt = dt.unwrap_or(spacing / 8.0);
            let grid: Vec<f64> = (0..=points).map(|i| i as f64 * spacing).collect();
            let opts = McOptions::new(n_traj, cfg.seed).with_dt(dt);
            let est = mc_envelope(&family, &env, kind, gamma_e(), &grid, &opts)?;
            let mut t = Table::new("montecarlo-envelope/v1", &["t_s", "envelope", "stderr"]);
            for ((time, d), se) in est.times.iter().zip(&est.envelope).zip(&est.stderr) {
                t.push(vec![Cell::Num(*time), Cell::Num(*d), Cell::Num(*se)]);
            }
            emit(cfg, &t)?;
            write_sidecar(
                cfg,
                sidecar,
                n_traj,
                kind,
                json!({
                    "command": "montecarlo envelope",
                    "sequence": sequence,
                    "concentration": cfg.concentration,
                    "sigma0_T": env.sigma0,
                    "tau_c_s": env.tau_c,
                    "t_max_s": t_max,
                    "points": points,
                    "dt_s": dt,
                }),
            )
        }
        McCommand::FastRate {
            sequence,
            theta_ext,
            tau_ext,
            n_traj,
            sidecar,
        } => {
            if !(theta_ext > 0.0 && tau_ext > 0.0) {
                return Err(Failure::Validation(
                    "theta_ext and tau_ext must be positive".into(),
                ));
            }
            let gamma = gamma_e();
            let sigma_ext = 1.0 / (theta_ext * gamma * tau_ext);
            let fit = mc_fast_field_rate(
                sigma_ext,
                tau_ext,
                &family(&sequence)?,
                gamma,
                &McOptions::new(n_traj, cfg.seed),
            )?;
            let mut t = Table::new(
                "montecarlo-fast-rate/v1",
                &[
                    "sequence",
                    "theta_ext",
                    "tau_ext_s",
                    "sigma_ext_T",
                    "rate_per_s",
                    "stderr_per_s",
                ],
            );
            t.push(vec![
                Cell::Text(sequence.clone()),
                Cell::Num(theta_ext),
                Cell::Num(tau_ext),
                Cell::Num(sigma_ext),
                Cell::Num(fit.rate),
                Cell::Num(fit.stderr),
            ]);
            emit(cfg, &t)?;
            write_sidecar(
                cfg,
                sidecar,
                n_traj,
                NoiseKind::Ou,
                json!({
                    "command": "montecarlo fast-rate",
                    "sequence": sequence,
                    "theta_ext": theta_ext,
                    "tau_ext_s": tau_ext,
                    "sigma_ext_T": sigma_ext,
                    "dt_s": fit.estimate.dt,
                    "fit_times_s": fit.estimate.times,
                }),
            )
        }
    }
}

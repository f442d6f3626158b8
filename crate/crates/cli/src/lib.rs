//! Command-line front end: link tables, rate tables, sweeps, impulse-response
//! dumps and scenario export.
//!
//! Everything is reachable through [`run_cli`], which takes the argument list
//! and output streams and returns the process exit code:
//! 0 on success, 2 for input errors, 3 when a resource cap is hit.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use owlink_core::linkbudget::{budget_from_response, rate_from_response, LinkBudgetError, RateStatus};
use owlink_core::optics::{channel_total_power, impulse_response, ImpulseResponse, OpticsError};
use owlink_core::scenario::{paper_scenario, AimMode, Finding, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "owlink", version, about = "Optical wireless ToR-to-spine uplink simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Link budget for every assigned branch -> receiver link at one bit rate.
    Run {
        #[command(flatten)]
        common: Common,
        /// Bit rate in Hz.
        #[arg(long, default_value_t = 2.8e9)]
        rate: f64,
        #[arg(long = "target-ber", default_value_t = 1e-9)]
        target_ber: f64,
    },
    /// Achievable bit rate of every assigned link at a target BER.
    Rates {
        #[command(flatten)]
        common: Common,
        #[arg(long = "target-ber", default_value_t = 1e-9)]
        target_ber: f64,
    },
    /// Evaluate every link over a range of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Number of evenly spaced points, endpoints included.
        #[arg(long)]
        steps: usize,
        /// Bit rate for power and background sweeps.
        #[arg(long, default_value_t = 2.8e9)]
        rate: f64,
        #[arg(long = "target-ber", default_value_t = 1e-9)]
        target_ber: f64,
    },
    /// Dump the impulse response of one branch -> receiver channel.
    Ir {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        adt: String,
        /// Zero-based branch index.
        #[arg(long)]
        branch: usize,
        #[arg(long)]
        receiver: String,
    },
    /// Write the built-in scenario as a scenario file.
    Paper {
        #[arg(long, value_enum, default_value_t = AimArg::Paper)]
        aim: AimArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario and list findings.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also check against this bit rate.
        #[arg(long)]
        rate: Option<f64>,
    },
}

/// Scenario selection and simulation overrides. Flags override values from
/// the scenario file.
#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Built-in scenario (default when no --scenario is given).
    #[arg(long, value_enum, conflicts_with = "scenario")]
    pub builtin: Option<Builtin>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Branch aiming: `paper` keeps the published (or file) angles, `exact`
    /// re-aims each branch at its assigned receiver.
    #[arg(long, value_enum)]
    pub aim: Option<AimArg>,
    #[arg(long)]
    pub reflections: Option<u32>,
    #[arg(long = "element-size")]
    pub element_size: Option<f64>,
    #[arg(long = "bin-width")]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Builtin {
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AimArg {
    Exact,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Power,
    Rate,
    Background,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Resource(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(format!("{e:#}"))
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<LinkBudgetError> for Failure {
    fn from(e: LinkBudgetError) -> Self {
        match e {
            LinkBudgetError::Optics(o) => o.into(),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<OpticsError> for Failure {
    fn from(e: OpticsError) -> Self {
        match e {
            OpticsError::TooManyElements { .. } => Failure::Resource(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

/// Nine significant digits, exponent form; locale independent.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// One row per assigned link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub adt: String,
    pub branch: usize,
    pub receiver: String,
    pub distance_m: f64,
    pub bit_rate_hz: f64,
    pub ps1_w: f64,
    pub ps0_w: f64,
    pub snr_db: f64,
    pub ber: f64,
    pub achievable_rate_hz: f64,
    pub responsivity_a_per_w: f64,
    pub sigma2_preamp_a2: f64,
    pub sigma2_background_a2: f64,
    pub sigma2_signal_a2: f64,
    pub snr_linear: f64,
}

pub const REPORT_HEADER: [&str; 15] = [
    "adt",
    "branch",
    "receiver",
    "distance_m",
    "bit_rate_hz",
    "ps1_w",
    "ps0_w",
    "snr_db",
    "ber",
    "achievable_rate_hz",
    "responsivity_a_per_w",
    "sigma2_preamp_a2",
    "sigma2_background_a2",
    "sigma2_signal_a2",
    "snr_linear",
];

impl ReportRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![self.adt.clone(), self.branch.to_string(), self.receiver.clone()];
        r.extend(
            [
                self.distance_m,
                self.bit_rate_hz,
                self.ps1_w,
                self.ps0_w,
                self.snr_db,
                self.ber,
                self.achievable_rate_hz,
                self.responsivity_a_per_w,
                self.sigma2_preamp_a2,
                self.sigma2_background_a2,
                self.sigma2_signal_a2,
                self.snr_linear,
            ]
            .map(fmt_float),
        );
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub adt: String,
    pub branch: usize,
    pub receiver: String,
    pub distance_m: f64,
    pub target_ber: f64,
    pub achievable_rate_hz: f64,
    pub status: RateStatus,
}

pub const RATE_HEADER: [&str; 7] =
    ["adt", "branch", "receiver", "distance_m", "target_ber", "achievable_rate_hz", "status"];

impl RateRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.adt.clone(),
            self.branch.to_string(),
            self.receiver.clone(),
            fmt_float(self.distance_m),
            fmt_float(self.target_ber),
            fmt_float(self.achievable_rate_hz),
            status_name(self.status).to_string(),
        ]
    }
}

fn status_name(s: RateStatus) -> &'static str {
    match s {
        RateStatus::Ceiling => "ceiling",
        RateStatus::Bisected => "bisected",
        RateStatus::NoService => "no_service",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: &'static str,
    pub value: f64,
    pub adt: String,
    pub branch: usize,
    pub receiver: String,
    pub bit_rate_hz: f64,
    pub snr_db: f64,
    pub ber: f64,
    pub achievable_rate_hz: f64,
}

pub const SWEEP_HEADER: [&str; 9] =
    ["parameter", "value", "adt", "branch", "receiver", "bit_rate_hz", "snr_db", "ber", "achievable_rate_hz"];

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.parameter.to_string(),
            fmt_float(self.value),
            self.adt.clone(),
            self.branch.to_string(),
            self.receiver.clone(),
            fmt_float(self.bit_rate_hz),
            fmt_float(self.snr_db),
            fmt_float(self.ber),
            fmt_float(self.achievable_rate_hz),
        ]
    }
}

/// Loads the selected scenario and applies flag overrides.
pub fn load_scenario(common: &Common) -> anyhow::Result<Scenario> {
    let mut scene = match &common.scenario {
        Some(path) => {
            let s = Scenario::load(path).with_context(|| format!("reading {}", path.display()))?;
            match common.aim {
                Some(AimArg::Exact) => s.with_exact_aim(),
                _ => s,
            }
        }
        None => paper_scenario(match common.aim {
            Some(AimArg::Exact) => AimMode::Exact,
            _ => AimMode::PaperAngles,
        }),
    };
    if let Some(k) = common.reflections {
        scene.sim.max_reflections = k;
    }
    if let Some(e) = common.element_size {
        scene.sim.element_size_m = e;
    }
    if let Some(b) = common.bin_width {
        scene.sim.bin_width_s = b;
    }
    Ok(scene)
}

/// A link with its channel already computed.
struct Channel<'a> {
    adt: &'a str,
    branch: usize,
    receiver: &'a owlink_core::WfovReceiver,
    distance_m: f64,
    ir: ImpulseResponse,
}

fn assigned_channels(scene: &Scenario) -> Result<Vec<Channel<'_>>, Failure> {
    let assignment = scene.assign_links();
    let env = scene.environment();
    let params = scene.sim.channel();
    let mut out = Vec::new();
    for link in &assignment.links {
        let Some(ri) = link.receiver else { continue };
        let adt = &scene.adts[link.adt];
        let branch = &adt.branches[link.branch];
        let receiver = &scene.receivers[ri];
        let ir = impulse_response(&env, branch, receiver, &params)?;
        out.push(Channel {
            adt: &adt.name,
            branch: link.branch,
            receiver,
            distance_m: (receiver.position_m - branch.position_m).norm(),
            ir,
        });
    }
    Ok(out)
}

/// Link budget rows for every assigned link of `scene` at `bit_rate_hz`.
pub fn report_rows(scene: &Scenario, bit_rate_hz: f64, target_ber: f64) -> Result<Vec<ReportRow>, String> {
    build_report(scene, bit_rate_hz, target_ber).map_err(|f| match f {
        Failure::Input(m) | Failure::Resource(m) => m,
    })
}

fn build_report(scene: &Scenario, bit_rate_hz: f64, target_ber: f64) -> Result<Vec<ReportRow>, Failure> {
    let mut rows = Vec::new();
    for ch in assigned_channels(scene)? {
        let lb = budget_from_response(&ch.ir, ch.receiver, &scene.noise, bit_rate_hz)?;
        let rate = rate_from_response(&ch.ir, ch.receiver, &scene.noise, target_ber)?;
        rows.push(ReportRow {
            adt: ch.adt.to_string(),
            branch: ch.branch,
            receiver: ch.receiver.name.clone(),
            distance_m: ch.distance_m,
            bit_rate_hz,
            ps1_w: lb.ps1_w,
            ps0_w: lb.ps0_w,
            snr_db: lb.snr_db,
            ber: lb.ber,
            achievable_rate_hz: rate.rate_hz,
            responsivity_a_per_w: lb.responsivity_a_per_w,
            sigma2_preamp_a2: lb.sigma2_preamp_a2,
            sigma2_background_a2: lb.sigma2_background_a2,
            sigma2_signal_a2: lb.sigma2_signal_a2,
            snr_linear: lb.snr_linear,
        });
    }
    Ok(rows)
}

fn build_rates(scene: &Scenario, target_ber: f64) -> Result<Vec<RateRow>, Failure> {
    let mut rows = Vec::new();
    for ch in assigned_channels(scene)? {
        let rate = rate_from_response(&ch.ir, ch.receiver, &scene.noise, target_ber)?;
        rows.push(RateRow {
            adt: ch.adt.to_string(),
            branch: ch.branch,
            receiver: ch.receiver.name.clone(),
            distance_m: ch.distance_m,
            target_ber,
            achievable_rate_hz: rate.rate_hz,
            status: rate.status,
        });
    }
    Ok(rows)
}

/// `steps` evenly spaced values from `from` to `to`, endpoints included.
pub fn linear_range(from: f64, to: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![from],
        n => (0..n)
            .map(|i| if i == n - 1 { to } else { from + (to - from) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn build_sweep(
    scene: &Scenario,
    param: SweepParam,
    values: &[f64],
    bit_rate_hz: f64,
    target_ber: f64,
) -> Result<Vec<SweepRow>, Failure> {
    let mut rows = Vec::new();
    let name = match param {
        SweepParam::Power => "power_w",
        SweepParam::Rate => "bit_rate_hz",
        SweepParam::Background => "background_power_w",
    };
    // a rate sweep reuses one set of channels
    let fixed = match param {
        SweepParam::Rate => Some(assigned_channels(scene)?),
        _ => None,
    };
    for &v in values {
        let (variant, rate) = match param {
            SweepParam::Power => (Some(scene.with_branch_power(v)), bit_rate_hz),
            SweepParam::Background => {
                let mut s = scene.clone();
                s.noise.background_power_w = v;
                (Some(s), bit_rate_hz)
            }
            SweepParam::Rate => (None, v),
        };
        let fresh;
        let (scene_v, channels) = match &variant {
            Some(s) => {
                fresh = assigned_channels(s)?;
                (s, &fresh)
            }
            None => (scene, fixed.as_ref().expect("rate sweep channels")),
        };
        for ch in channels {
            let lb = budget_from_response(&ch.ir, ch.receiver, &scene_v.noise, rate)?;
            let ar = rate_from_response(&ch.ir, ch.receiver, &scene_v.noise, target_ber)?;
            rows.push(SweepRow {
                parameter: name,
                value: v,
                adt: ch.adt.to_string(),
                branch: ch.branch,
                receiver: ch.receiver.name.clone(),
                bit_rate_hz: rate,
                snr_db: lb.snr_db,
                ber: lb.ber,
                achievable_rate_hz: ar.rate_hz,
            });
        }
    }
    Ok(rows)
}

fn csv_text(header: &[&str], records: impl Iterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn json_text<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn emit(text: &str, out: Option<&PathBuf>, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => stdout.write_all(text.as_bytes()).context("writing output"),
    }
}

/// Loads, validates, and reports findings. Errors abort the command.
fn prepared(common: &Common, rate: Option<f64>, stderr: &mut dyn Write) -> Result<Scenario, Failure> {
    let scene = load_scenario(common)?;
    let findings = match rate {
        Some(r) => scene.validate_for_rate(r),
        None => scene.validate(),
    };
    report_findings(&findings, stderr);
    if findings.iter().any(Finding::is_error) {
        return Err(Failure::Input("scenario failed validation".into()));
    }
    Ok(scene)
}

fn report_findings(findings: &[Finding], w: &mut dyn Write) {
    for f in findings {
        let _ = writeln!(w, "{f}");
    }
}

fn check_target(target_ber: f64) -> Result<(), Failure> {
    if target_ber > 0.0 && target_ber < 0.5 {
        Ok(())
    } else {
        Err(Failure::Input(format!("--target-ber {target_ber} outside (0, 0.5)")))
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, rate, target_ber } => {
            check_target(target_ber)?;
            let scene = prepared(&common, Some(rate), stderr)?;
            report_findings(&scene.assign_links().warnings, stderr);
            let rows = build_report(&scene, rate, target_ber)?;
            let text = match common.format {
                Format::Csv => csv_text(&REPORT_HEADER, rows.iter().map(ReportRow::record))?,
                Format::Json => json_text(&rows)?,
            };
            emit(&text, common.out.as_ref(), stdout)?;
        }
        Command::Rates { common, target_ber } => {
            check_target(target_ber)?;
            let scene = prepared(&common, None, stderr)?;
            report_findings(&scene.assign_links().warnings, stderr);
            let rows = build_rates(&scene, target_ber)?;
            let text = match common.format {
                Format::Csv => csv_text(&RATE_HEADER, rows.iter().map(RateRow::record))?,
                Format::Json => json_text(&rows)?,
            };
            emit(&text, common.out.as_ref(), stdout)?;
        }
        Command::Sweep { common, param, from, to, steps, rate, target_ber } => {
            check_target(target_ber)?;
            if !(from.is_finite() && to.is_finite()) {
                return Err(Failure::Input("sweep bounds must be finite".into()));
            }
            let scene = prepared(&common, Some(rate), stderr)?;
            let values = linear_range(from, to, steps);
            let rows = build_sweep(&scene, param, &values, rate, target_ber)?;
            let text = match common.format {
                Format::Csv => csv_text(&SWEEP_HEADER, rows.iter().map(SweepRow::record))?,
                Format::Json => json_text(&rows)?,
            };
            emit(&text, common.out.as_ref(), stdout)?;
        }
        Command::Ir { common, adt, branch, receiver } => {
            let scene = prepared(&common, None, stderr)?;
            let b = scene.branch(&adt, branch)?;
            let r = &scene.receivers[scene.receiver_index(&receiver)?];
            let params = scene.sim.channel();
            let ir = impulse_response(&scene.environment(), b, r, &params)?;
            let total = channel_total_power(&ir);
            let text = match common.format {
                Format::Csv => {
                    let mut head = format!(
                        "# adt={adt} branch={branch} receiver={receiver}\n\
                         # bin_width_s={} max_reflections={} element_size_m={} total_power_w={}\n",
                        fmt_float(ir.bin_width_s),
                        params.max_reflections,
                        fmt_float(params.element_size_m),
                        fmt_float(total),
                    );
                    let body = csv_text(
                        &["time_s", "power_w"],
                        ir.bins.iter().enumerate().map(|(i, p)| vec![fmt_float(ir.bin_time_s(i)), fmt_float(*p)]),
                    )?;
                    head.push_str(&body);
                    head
                }
                Format::Json => {
                    #[derive(Serialize)]
                    struct IrDump<'a> {
                        adt: &'a str,
                        branch: usize,
                        receiver: &'a str,
                        max_reflections: u32,
                        element_size_m: f64,
                        total_power_w: f64,
                        response: &'a ImpulseResponse,
                    }
                    json_text(&IrDump {
                        adt: &adt,
                        branch,
                        receiver: &receiver,
                        max_reflections: params.max_reflections,
                        element_size_m: params.element_size_m,
                        total_power_w: total,
                        response: &ir,
                    })?
                }
            };
            emit(&text, common.out.as_ref(), stdout)?;
        }
        Command::Paper { aim, out } => {
            let mode = match aim {
                AimArg::Exact => AimMode::Exact,
                AimArg::Paper => AimMode::PaperAngles,
            };
            emit(&paper_scenario(mode).to_json_string(), out.as_ref(), stdout)?;
        }
        Command::Validate { common, rate } => {
            let scene = load_scenario(&common)?;
            let findings = match rate {
                Some(r) => scene.validate_for_rate(r),
                None => scene.validate(),
            };
            report_findings(&findings, stdout);
            let errors = findings.iter().filter(|f| f.is_error()).count();
            let _ = writeln!(stdout, "{errors} error(s), {} warning(s)", findings.len() - errors);
            if errors > 0 {
                return Err(Failure::Input("scenario failed validation".into()));
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_INPUT
        }
        Err(Failure::Resource(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_RESOURCE
        }
    }
}

//! Argument parsing and dispatch for the `rtm` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or ingestion error,
//! 3 numerical singularity. Output files are written only after every
//! computation has succeeded.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rtm_core::estimators::{berry_slope, blomqvist_slope, crude_slope, sample_stats, true_slope};
use rtm_core::experiments::{
    analyze_dataset, default_beta_grid, run_bootstrap_demo, run_head_to_head,
    run_sampling_distribution, AnalyzeOptions, PopulationReference,
    DEFAULT_HEAD_TO_HEAD_REPLICATES, DEFAULT_PERMUTATIONS, DEFAULT_RESAMPLES,
};
use rtm_core::io::{
    read_observed_csv, to_json_string, write_column_csv, write_head_to_head_csv, write_latent_csv,
    write_observed_csv, write_sweep_csv, ADJUSTED_HEADER, SLOPE_HEADER,
};
use rtm_core::model::{inclusive_grid, population_sweep};
use rtm_core::simulate::draw_seeded;
use rtm_core::{ErrorSpec, PopulationParams, RtmError, SeedSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rtm",
    version,
    about = "Regression to the mean in pre/post studies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population slopes over a (beta, delta2/sigma2) grid, as CSV.
    Population(PopulationArgs),
    /// Draw one sample; print its slopes as JSON and optionally dump it.
    Simulate(SimulateArgs),
    /// Sampling distributions of all slope estimators.
    SamplingDist(SamplingDistArgs),
    /// How often the crude slope beats the corrected slopes, per beta.
    HeadToHead(HeadToHeadArgs),
    /// Crude-slope bootstrap test of beta = 0 on one simulated sample.
    BootDemo(BootDemoArgs),
    /// Analyse a pre/post dataset from CSV.
    Analyze(AnalyzeArgs),
}

/// Model parameters. Spreads are standard deviations; defaults are the
/// systolic blood pressure values.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 141.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 13.6)]
    pub sigma: f64,
    #[arg(long, default_value_t = -20.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 9.1)]
    pub delta: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<PopulationParams, RtmError> {
        PopulationParams::from_std_devs(
            self.mu, self.sigma, self.alpha, self.beta, self.nu, self.delta,
        )
    }
}

#[derive(Debug, Clone, Args)]
#[group(multiple = false)]
pub struct ErrorArgs {
    /// Repeatability R in (0, 1] for the Blomqvist correction.
    #[arg(long)]
    pub repeatability: Option<f64>,
    /// Within-subject variance delta2 for the Blomqvist correction.
    #[arg(long = "error-var")]
    pub error_var: Option<f64>,
}

impl ErrorArgs {
    fn spec(&self) -> Option<ErrorSpec> {
        match (self.repeatability, self.error_var) {
            (Some(r), _) => Some(ErrorSpec::Repeatability(r)),
            (_, Some(d)) => Some(ErrorSpec::ErrorVariance(d)),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct PopulationArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Beta values: comma list or START:STOP:STEP.
    #[arg(long, default_value = "0,-0.5,-1.5", allow_hyphen_values = true)]
    pub betas: String,
    /// delta2/sigma2 values: comma list or START:STOP:STEP.
    #[arg(long, default_value = "0:2:0.05")]
    pub ratios: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the sample as CSV.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Include true values (X1,X2) in the dump.
    #[arg(long)]
    pub latent: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SamplingDistArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub error: ErrorArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct HeadToHeadArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Beta values: comma list or START:STOP:STEP (default -2:0.5:0.1).
    #[arg(long, allow_hyphen_values = true)]
    pub betas: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_HEAD_TO_HEAD_REPLICATES)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TableFormat::Json)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BootDemoArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub boot: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the crude bootstrap replicates as CSV.
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
    /// Write the simulated sample as CSV.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdjustedMethod {
    Berry,
    Blomqvist,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV file with columns x1,x2.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub boot: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long = "n-perm", default_value_t = DEFAULT_PERMUTATIONS)]
    pub n_perm: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub error: ErrorArgs,
    /// Repeatability to test beta = 0 against. Defaults to the one implied
    /// by --repeatability or --error-var.
    #[arg(long = "known-r")]
    pub known_r: Option<f64>,
    /// Report slopes of -d = x1 - x2.
    #[arg(long = "negate-change")]
    pub negate_change: bool,
    /// Write the crude bootstrap replicates as CSV.
    #[arg(long)]
    pub replicates_out: Option<PathBuf>,
    /// Write the Blomqvist bootstrap replicates as CSV.
    #[arg(long)]
    pub blomqvist_replicates_out: Option<PathBuf>,
    /// Write the adjusted change as CSV column d_adj.
    #[arg(long)]
    pub adjusted_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AdjustedMethod::Berry)]
    pub adjusted_method: AdjustedMethod,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<RtmError> for CliError {
    fn from(e: RtmError) -> Self {
        let code = match e {
            RtmError::InvalidParameter(_) | RtmError::Usage(_) => EXIT_USAGE,
            RtmError::Singular { .. } => EXIT_SINGULAR,
            RtmError::SampleSize { .. }
            | RtmError::Degenerate(_)
            | RtmError::InferenceFailure(_)
            | RtmError::Ingestion(_) => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn data_error(message: String) -> CliError {
    CliError {
        code: EXIT_DATA,
        message,
    }
}

/// Output documents produced by a command, written once it has succeeded.
#[derive(Default)]
struct Outputs {
    main: String,
    main_path: Option<PathBuf>,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn file(
        &mut self,
        path: Option<&PathBuf>,
        render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) {
        if let Some(p) = path {
            let mut buf = Vec::new();
            render(&mut buf).expect("writing to memory");
            self.files.push((p.clone(), buf));
        }
    }
}

fn parse_values(spec: &str) -> Result<Vec<f64>, RtmError> {
    let bad = || RtmError::InvalidParameter(format!("cannot parse value list `{spec}`"));
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match parts.as_slice() {
            [start, stop, step] => inclusive_grid(*start, *stop, *step),
            _ => Err(bad()),
        }
    } else {
        spec.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

fn read_dataset(path: &Path) -> Result<(rtm_core::ObservedSample, Vec<String>), CliError> {
    let file =
        File::open(path).map_err(|e| data_error(format!("cannot open {}: {e}", path.display())))?;
    read_observed_csv(BufReader::new(file)).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn json(value: &impl serde::Serialize) -> Result<String, CliError> {
    Ok(to_json_string(value)?)
}

fn run_command(cmd: Command, warn: &mut dyn Write) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    match cmd {
        Command::Population(a) => {
            let params = a.params.params()?;
            let rows =
                population_sweep(&params, &parse_values(&a.betas)?, &parse_values(&a.ratios)?)?;
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, &rows).expect("writing to memory");
            out.main = String::from_utf8(buf).expect("utf-8");
            out.main_path = a.out;
        }
        Command::Simulate(a) => {
            let params = a.params.params()?;
            let (latent, obs) = draw_seeded(&params, a.n, SeedSpec::new(a.seed, 0))?;
            let stats = sample_stats(&obs);
            let crude = crude_slope(&obs)?;
            let berry = berry_slope(&obs)?.1;
            let blomqvist =
                blomqvist_slope(&obs, ErrorSpec::ErrorVariance(params.delta2())).map(|r| r.1);
            let doc = json!({
                "config": { "params": params, "n": a.n, "seed": a.seed, "stream": SeedSpec::new(a.seed, 0) },
                "stats": stats,
                "slopes": {
                    "crude": crude,
                    "berry": berry,
                    "blomqvist": blomqvist.ok(),
                    "true": true_slope(&latent)?,
                },
                "population": PopulationReference::new(&params)?,
            });
            out.main = json(&doc)?;
            out.main_path = a.out;
            if a.latent {
                out.file(a.dump.as_ref(), |w| write_latent_csv(w, &latent, &obs));
            } else {
                out.file(a.dump.as_ref(), |w| write_observed_csv(w, &obs));
            }
        }
        Command::SamplingDist(a) => {
            let params = a.params.params()?;
            let report = run_sampling_distribution(&params, a.n, a.reps, a.error.spec(), a.seed)?;
            out.main = json(&report)?;
            out.main_path = a.out;
        }
        Command::HeadToHead(a) => {
            let params = a.params.params()?;
            let grid = match &a.betas {
                Some(s) => parse_values(s)?,
                None => default_beta_grid(),
            };
            let report = run_head_to_head(&params, &grid, a.n, a.reps, a.seed)?;
            out.main = match a.format {
                TableFormat::Json => json(&report)?,
                TableFormat::Csv => {
                    let mut buf = Vec::new();
                    write_head_to_head_csv(&mut buf, &report).expect("writing to memory");
                    String::from_utf8(buf).expect("utf-8")
                }
            };
            out.main_path = a.out;
        }
        Command::BootDemo(a) => {
            let params = a.params.params()?;
            let (obs, report) = run_bootstrap_demo(&params, a.n, a.boot, a.seed)?;
            out.main = json(&report)?;
            out.main_path = a.out;
            out.file(a.replicates_out.as_ref(), |w| {
                write_column_csv(w, SLOPE_HEADER, &report.bootstrap.crude.replicates)
            });
            out.file(a.dump.as_ref(), |w| write_observed_csv(w, &obs));
        }
        Command::Analyze(a) => {
            let (obs, warnings) = read_dataset(&a.data)?;
            for w in &warnings {
                let _ = writeln!(warn, "warning: {w}");
            }
            let spec = a.error.spec();
            let known = match (a.known_r, spec) {
                (Some(r), _) => Some(r),
                (None, Some(ErrorSpec::Repeatability(r))) => Some(r),
                (None, Some(ErrorSpec::ErrorVariance(d))) => {
                    let r = 1.0 - d / sample_stats(&obs).var_x1;
                    (r > 0.0 && r <= 1.0).then_some(r)
                }
                (None, None) => None,
            };
            let options = AnalyzeOptions {
                resamples: a.boot,
                level: a.level,
                n_perm: a.n_perm,
                known_repeatability: known,
                negate_change: a.negate_change,
            };
            let mut report = analyze_dataset(&obs, spec, &options, a.seed)?;
            report.config.source = Some(a.data.display().to_string());
            report.warnings.extend(warnings);
            let adjusted = match a.adjusted_method {
                AdjustedMethod::Berry => berry_slope(&obs)?.0,
                AdjustedMethod::Blomqvist => {
                    let spec = spec.ok_or_else(|| {
                        RtmError::Usage(
                            "--adjusted-method blomqvist needs --repeatability or --error-var"
                                .into(),
                        )
                    })?;
                    blomqvist_slope(&obs, spec)?.0
                }
            };
            let sign = if a.negate_change { -1.0 } else { 1.0 };
            let adjusted: Vec<f64> = adjusted.iter().map(|v| sign * v).collect();
            out.main = json(&report)?;
            out.main_path = a.out;
            out.file(a.replicates_out.as_ref(), |w| {
                write_column_csv(w, SLOPE_HEADER, &report.bootstrap.crude.replicates)
            });
            if let Some(path) = &a.blomqvist_replicates_out {
                let boot = report.bootstrap.blomqvist.as_ref().ok_or_else(|| {
                    RtmError::Usage(
                        "--blomqvist-replicates-out needs --repeatability or --error-var".into(),
                    )
                })?;
                out.file(Some(path), |w| {
                    write_column_csv(w, SLOPE_HEADER, &boot.replicates)
                });
            }
            out.file(a.adjusted_out.as_ref(), |w| {
                write_column_csv(w, ADJUSTED_HEADER, &adjusted)
            });
        }
    }
    Ok(out)
}

fn write_outputs(out: Outputs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let write_err =
        |p: &Path, e: std::io::Error| data_error(format!("cannot write {}: {e}", p.display()));
    for (path, bytes) in &out.files {
        std::fs::write(path, bytes).map_err(|e| write_err(path, e))?;
    }
    match &out.main_path {
        Some(p) => std::fs::write(p, out.main.as_bytes()).map_err(|e| write_err(p, e))?,
        None => stdout
            .write_all(out.main.as_bytes())
            .map_err(|e| data_error(format!("cannot write to stdout: {e}")))?,
    }
    Ok(())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let result = run_command(cli.command, stderr).and_then(|out| write_outputs(out, stdout));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

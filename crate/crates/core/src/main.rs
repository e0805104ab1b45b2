use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qcaudit::census::{synth_election, write_census, write_received, ContenderSchema, SynthSpec};
use qcaudit::report::{self, AuditError, CommandOutput, Format, HalfWidthSource, Inputs, Overrides, Settings};

/// Ex-post statistical audit of an electoral quick count.
///
/// Exit status: 0 success, 1 audit finding (target missed, bias rejected,
/// gap not significant, validation warnings), 2 input or configuration
/// error. A config file given with --config overrides flags.
#[derive(Debug, Parser)]
#[command(name = "qcaudit", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML file with any of the settings below (wins over flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Census CSV: casilla_id,stratum_id,lista_nominal,<contender ids>.
    #[arg(long, global = true)]
    census: Option<PathBuf>,
    /// Received-sample CSV: casilla_id,stratum_id,<contender ids>.
    #[arg(long, global = true)]
    received: Option<PathBuf>,
    /// Contender schema (TOML [[contender]] tables); defaults to the census header.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Published half-widths, `id = percentage points`.
    #[arg(long, global = true)]
    half_widths: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo replicates M (at least 1000).
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// csv, json or markdown.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Write files here instead of printing to stdout.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Sample sizes c, comma separated; the last one drives coverage and winner-gap.
    #[arg(long = "sample-size", global = true, value_delimiter = ',')]
    sample_size: Vec<usize>,
    /// Target margin as a fraction (0.005 = half a point).
    #[arg(long, global = true)]
    target_margin: Option<f64>,
    /// Quantile level for the precision study.
    #[arg(long, global = true)]
    quantile: Option<f64>,
    /// Enumerate all sign vectors when there are at most 20 nonzero differences.
    #[arg(long, global = true)]
    exhaustive: bool,
    #[arg(long, global = true)]
    confidence: Option<f64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    leader: Option<String>,
    #[arg(long, global = true)]
    runner_up: Option<String>,
    /// Leave the participation interval out of the coverage study.
    #[arg(long, global = true)]
    exclude_participation: bool,
    /// Histogram bins for the winner-gap study.
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Half-widths for coverage: `precision` (simulated) or `given` (file).
    #[arg(long, global = true)]
    coverage_half_widths: Option<HalfWidthSource>,
    /// Sign-test rejection threshold.
    #[arg(long, global = true)]
    rejection_level: Option<f64>,
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            census: self.census.clone(),
            received: self.received.clone(),
            schema: self.schema.clone(),
            half_widths: self.half_widths.clone(),
            target_margin: self.target_margin,
            confidence: self.confidence,
            replicates: self.replicates,
            seed: self.seed,
            sample_sizes: (!self.sample_size.is_empty()).then(|| self.sample_size.clone()),
            quantile: self.quantile,
            leader: self.leader.clone(),
            runner_up: self.runner_up.clone(),
            format: self.format,
            out_dir: self.out_dir.clone(),
            exhaustive: self.exhaustive.then_some(true),
            workers: self.workers,
            include_participation: self.exclude_participation.then_some(false),
            histogram_bins: self.bins,
            coverage_half_widths: self.coverage_half_widths,
            rejection_level: self.rejection_level,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Achievable precision per contender at each sample size.
    Precision,
    /// Joint coverage of the intervals against the binomial model.
    Coverage,
    /// Capture-error table, sign tests and corrected intervals.
    Bias,
    /// Distribution of the gap between two contenders.
    WinnerGap,
    /// Every study in one bundle.
    Report,
    /// Write a synthetic census (and optionally a received sample).
    Synth(SynthArgs),
    /// Check the census (and received sample) and report warnings.
    Validate,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 45)]
    strata: usize,
    #[arg(long, default_value_t = 400)]
    casillas_per_stratum: usize,
    /// Expected shares, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
    profile: Vec<f64>,
    #[arg(long, default_value_t = 0.2)]
    dispersion: f64,
    /// Also write received.csv with a proportional sample of this size.
    #[arg(long)]
    received_size: Option<usize>,
    /// Per-count probability of a symmetric capture error in received.csv.
    #[arg(long, default_value_t = 0.0)]
    capture_error_rate: f64,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), AuditError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| AuditError::Io { path, source })
}

fn create_dir(dir: &Path) -> Result<(), AuditError> {
    std::fs::create_dir_all(dir).map_err(|source| AuditError::Io { path: dir.to_path_buf(), source })
}

fn synth(args: &SynthArgs, settings: &Settings) -> Result<i32, AuditError> {
    let dir = settings
        .out_dir
        .as_deref()
        .ok_or_else(|| AuditError::Config("synth needs --out-dir".into()))?;
    let spec = SynthSpec { dispersion: args.dispersion, ..SynthSpec::new(args.strata, args.casillas_per_stratum, args.profile.clone(), settings.seed) };
    let census = synth_election(&spec)?;
    create_dir(dir)?;
    write_census(&census, dir.join("census.csv"))?;
    write_file(dir, "schema.toml", &ContenderSchema::new(census.contenders().to_vec())?.to_toml())?;
    if let Some(c) = args.received_size {
        let received = report::synth_received(&census, c, args.capture_error_rate, settings.seed)?;
        write_received(&received, &census, dir.join("received.csv"))?;
    }
    eprintln!("wrote {} casillas in {} strata to {}", census.num_casillas(), census.strata().len(), dir.display());
    Ok(0)
}

fn emit(out: &CommandOutput, settings: &Settings) -> Result<(), AuditError> {
    match &settings.out_dir {
        Some(dir) => {
            create_dir(dir)?;
            for (name, contents) in out.rendered.files(settings.format) {
                write_file(dir, &name, &contents)?;
            }
        }
        None => print!("{}", out.rendered.text(settings.format)),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<i32, AuditError> {
    let started = Instant::now();
    let file = cli.global.config.as_deref().map(Overrides::load).transpose()?;
    let settings = Settings::resolve(cli.global.overrides(), file)?;
    let cmd: fn(&Settings, &Inputs) -> Result<CommandOutput, AuditError> = match &cli.command {
        Command::Synth(args) => return synth(args, &settings),
        Command::Precision => report::cmd_precision,
        Command::Coverage => report::cmd_coverage,
        Command::Bias => report::cmd_bias,
        Command::WinnerGap => report::cmd_winner_gap,
        Command::Report => report::cmd_report,
        Command::Validate => report::cmd_validate,
    };
    let inputs = Inputs::load(&settings)?;
    let out = cmd(&settings, &inputs)?;
    emit(&out, &settings)?;

    // Wall time stays out of the reports so they are reproducible.
    let secs = started.elapsed().as_secs_f64();
    eprintln!("run {} finished in {secs:.2} s", inputs.run_id);
    if let Some(dir) = &settings.out_dir {
        let timing = json!({ "run_id": inputs.run_id, "command": out.rendered.name, "wall_seconds": secs, "workers": settings.workers });
        write_file(dir, "run_timing.json", &format!("{timing:#}\n"))?;
    }
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

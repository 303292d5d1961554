//! Command-line entry point. Exit codes: 0 success, 1 config error,
//! 2 data error, 3 analyzer failure.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use tapefacts::tape::{write_binary, write_csv};
use tapefacts_cli::config::{self, RunConfig, DEFAULT_OUT_DIR, OUT_DIR_ENV};
use tapefacts_cli::pipeline::{self, CliError};
use tapefacts_cli::report;

#[derive(Parser)]
#[command(
    name = "tapefacts",
    version,
    about = "Stylized-fact battery over trade tapes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the battery and write a report bundle.
    Analyze(CommonArgs),
    /// Generate a synthetic tape file from the [input.gen] section.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Tape file to write; format from the extension (.csv or .bin).
        #[arg(long, value_name = "FILE")]
        out_tape: PathBuf,
    },
    /// Precompute the white-noise band cache for the current config.
    Band(CommonArgs),
    /// Print descriptive tape statistics as CSV.
    Stats(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; pure defaults when omitted.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set facts.acf_max_lag=60. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory; overrides run.out_dir and $TAPEFACTS_OUT.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Synth { common, out_tape } => cmd_synth(common, out_tape),
        Cmd::Band(args) => cmd_band(args),
        Cmd::Stats(args) => cmd_stats(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?,
        None => String::new(),
    };
    config::load(&text, &args.sets).map_err(CliError::Config)
}

fn out_dir(args: &CommonArgs, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.run.out_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn validated(cfg: RunConfig) -> Result<RunConfig, CliError> {
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errs))
    }
}

fn cmd_analyze(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load_config(&args)?;
    let dir = out_dir(&args, &cfg);
    let art = pipeline::run_analyze(cfg)?;
    report::write_bundle(&dir, &art)?;
    if !art.skipped_symbols.is_empty() {
        eprintln!("skipped unknown symbols: {}", art.skipped_symbols.join(", "));
    }
    print!("{}", report::summary_table(&art.verdicts));
    println!(
        "report: {} (config {})",
        dir.display(),
        &art.config_hash[..12]
    );
    Ok(())
}

fn cmd_synth(args: CommonArgs, out_tape: PathBuf) -> Result<(), CliError> {
    let cfg = validated(load_config(&args)?)?;
    if cfg.input.gen.is_none() {
        return Err(CliError::Config(vec![
            "input.gen: synth needs a generator section".to_string(),
        ]));
    }
    let input = pipeline::acquire_tape(&cfg)?;
    let io_err = |e: tapefacts::tape::TapeError| {
        CliError::Data(format!("{}: {e}", out_tape.display()))
    };
    let file = fs::File::create(&out_tape)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_tape.display())))?;
    let w = BufWriter::new(file);
    match out_tape.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_csv(&input.tape, w).map_err(io_err)?,
        Some("bin") => write_binary(&input.tape, w).map_err(io_err)?,
        _ => {
            return Err(CliError::Config(vec![format!(
                "--out-tape {}: extension must be .csv or .bin",
                out_tape.display()
            )]))
        }
    }
    println!(
        "wrote {} trades across {} symbols to {}",
        input.tape.total_trades(),
        input.tape.symbols.len(),
        out_tape.display()
    );
    Ok(())
}

fn cmd_band(args: CommonArgs) -> Result<(), CliError> {
    let mut cfg = validated(load_config(&args)?)?;
    if !cfg.band.enabled || cfg.band.replicates == 0 {
        return Err(CliError::Config(vec![
            "band: banding is disabled in this config".to_string(),
        ]));
    }
    cfg.band.cache = None;
    let dir = out_dir(&args, &cfg).join("bands");
    let facts = cfg.facts_config().map_err(CliError::Config)?;
    let (calendar, fallback_tpd) = if cfg.input.gen.is_some() {
        (cfg.gen_calendar().map_err(CliError::Config)?, 1)
    } else {
        let input = pipeline::acquire_tape(&cfg)?;
        let stats = tapefacts::tape::tape_stats(&input.tape, &input.calendar);
        let tpd = pipeline::mean_trades_per_day(&stats, input.calendar.n_days());
        (input.calendar, tpd)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| CliError::Analyzer(format!("worker pool: {e}")))?;
    let (bands, key) =
        pool.install(|| pipeline::compute_bands(&cfg, &facts, &calendar, fallback_tpd))?;
    report::write_bands(
        &dir,
        &bands,
        &key,
        &cfg.semantic_hash(),
        cfg.band.replicates,
        cfg.band.seed,
    )?;
    println!(
        "wrote {} bands to {} (key {})",
        bands.len(),
        dir.display(),
        &key[..12]
    );
    Ok(())
}

fn cmd_stats(args: CommonArgs) -> Result<(), CliError> {
    let cfg = validated(load_config(&args)?)?;
    let input = pipeline::acquire_tape(&cfg)?;
    let stats = tapefacts::tape::tape_stats(&input.tape, &input.calendar);
    print!("{}", report::stats_table(&stats));
    Ok(())
}

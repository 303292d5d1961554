//! End-to-end run: acquire a tape, run the battery on every symbol over a
//! bounded worker pool, compute or load the white-noise bands, judge, and
//! hand everything to the report writer.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use tapefacts::facts::verdict::{judge, FactVerdict};
use tapefacts::facts::{analyze_symbol, FactsConfig, SymbolAnalysis};
use tapefacts::synth::{generate, noise_bands, GenSpec, NoiseBand, StatCurve};
use tapefacts::tape::{
    filter_session, read_binary, read_csv_path, tape_stats, ParseReport, SessionCalendar,
    SymbolStats, Tape,
};
use tapefacts::Real;

use crate::config::{hex_digest, RunConfig};

/// Failure classes, one per nonzero exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("data error: {0}")]
    Data(String),
    #[error("analyzer failure: {0}")]
    Analyzer(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Analyzer(_) => 3,
        }
    }
}

/// Row counts from a tape file read, zeros for synthetic input.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub rows: u64,
    pub malformed: u64,
    pub out_of_order: u64,
}

impl From<&ParseReport> for IngestSummary {
    fn from(r: &ParseReport) -> Self {
        IngestSummary {
            rows: r.rows,
            malformed: r.malformed,
            out_of_order: r.out_of_order,
        }
    }
}

/// Everything a finished analysis run produced, ready to serialize.
pub struct RunArtifacts {
    pub config: RunConfig,
    pub config_hash: String,
    pub facts_config: FactsConfig,
    pub calendar: SessionCalendar,
    pub ingest: IngestSummary,
    pub skipped_symbols: Vec<String>,
    pub stats: Vec<SymbolStats>,
    pub analyses: Vec<SymbolAnalysis<Real>>,
    pub bands: BTreeMap<String, NoiseBand<Real>>,
    pub band_key: Option<String>,
    pub verdicts: Vec<FactVerdict>,
}

/// The tape ready for analysis plus how it was obtained.
pub struct TapeInput {
    pub tape: Tape,
    pub calendar: SessionCalendar,
    pub ingest: IngestSummary,
    pub skipped_symbols: Vec<String>,
}

/// Reads or generates the tape, applies the symbol filter, and strips
/// out-of-session prints.
pub fn acquire_tape(cfg: &RunConfig) -> Result<TapeInput, CliError> {
    let mut ingest = IngestSummary::default();
    let mut skipped = Vec::new();
    let (tape, calendar) = if let Some(path) = &cfg.input.tape {
        let format = cfg
            .tape_format()
            .ok_or_else(|| CliError::Config(vec![format!("input.tape: unknown format for {path}")]))?;
        let (mut tape, report) = match format {
            "csv" => read_csv_path(path),
            _ => fs::File::open(path)
                .map_err(tapefacts::tape::TapeError::from)
                .and_then(read_binary),
        }
        .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        ingest = IngestSummary::from(&report);
        if let Some(filter) = &cfg.input.symbols {
            for want in filter {
                if tape.get(want).is_none() {
                    skipped.push(want.clone());
                }
            }
            skipped.sort();
            tape.symbols.retain(|s| filter.contains(&s.symbol));
            if tape.symbols.is_empty() {
                return Err(CliError::Data(format!(
                    "none of the requested symbols are on the tape (skipped: {})",
                    skipped.join(", ")
                )));
            }
        }
        let cal = cfg.tape_calendar(&tape).map_err(CliError::Config)?;
        (tape, cal)
    } else {
        let specs = cfg
            .gen_specs()
            .ok_or_else(|| CliError::Config(vec!["input: no tape and no generator".to_string()]))?;
        let cal = cfg.gen_calendar().map_err(CliError::Config)?;
        let symbols = specs
            .iter()
            .map(|s| generate(s, &cal))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(vec![format!("input.gen: {e}")]))?;
        (Tape::from_symbols(symbols), cal)
    };
    let tape = filter_session(tape, &calendar);
    if tape.total_trades() == 0 {
        return Err(CliError::Data(
            "no trades inside the session window".to_string(),
        ));
    }
    Ok(TapeInput {
        tape,
        calendar,
        ingest,
        skipped_symbols: skipped,
    })
}

/// Cache identity for one band set: everything the envelope values depend
/// on, hashed.
pub fn band_key(
    null: &GenSpec,
    cal: &SessionCalendar,
    facts: &FactsConfig,
    replicates: u32,
) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        null: &'a GenSpec,
        open_ns: i64,
        close_ns: i64,
        days: &'a [i64],
        facts: &'a FactsConfig,
        replicates: u32,
    }
    let key = Key {
        null,
        open_ns: cal.open_ns,
        close_ns: cal.close_ns,
        days: cal.days(),
        facts,
        replicates,
    };
    hex_digest(serde_json::to_string(&key).expect("key serializes").as_bytes())
}

/// Computes the white-noise envelopes by running the same battery on
/// replicated null tapes, or loads them from a cache directory whose key
/// matches.
pub fn compute_bands(
    cfg: &RunConfig,
    facts: &FactsConfig,
    cal: &SessionCalendar,
    fallback_tpd: usize,
) -> Result<(BTreeMap<String, NoiseBand<Real>>, String), CliError> {
    let null = cfg.null_spec(cal.n_days(), fallback_tpd);
    let key = band_key(&null, cal, facts, cfg.band.replicates);
    if let Some(dir) = &cfg.band.cache {
        return Ok((crate::report::load_band_cache(Path::new(dir), &key)?, key));
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        noise_bands::<Real, _>(&null, cal, cfg.band.replicates, |sym| {
            let analysis = analyze_symbol::<Real>(sym, cal, facts)
                .expect("facts config was validated before banding");
            analysis
                .curves
                .into_iter()
                .map(|c| StatCurve {
                    stat_id: c.stat_id,
                    grid: c.grid,
                    values: c.values,
                })
                .collect()
        })
    }))
    .map_err(|p| CliError::Analyzer(format!("band replicate panicked: {}", panic_text(&p))))?;
    let bands = result.map_err(|e| CliError::Config(vec![format!("band: {e}")]))?;
    Ok((
        bands.into_iter().map(|b| (b.stat_id.clone(), b)).collect(),
        key,
    ))
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "opaque panic payload".to_string()
    }
}

/// Full analysis pass: validates, runs every symbol, bands, judges. Pure
/// given (config, seeds); the report writer does all the IO.
pub fn run_analyze(cfg: RunConfig) -> Result<RunArtifacts, CliError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let facts = cfg.facts_config().map_err(CliError::Config)?;
    let input = acquire_tape(&cfg)?;
    let TapeInput {
        tape,
        calendar,
        ingest,
        skipped_symbols,
    } = input;
    let stats = tape_stats(&tape, &calendar);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| CliError::Analyzer(format!("worker pool: {e}")))?;

    let per_symbol: Vec<Result<SymbolAnalysis<Real>, String>> = pool.install(|| {
        tape.symbols
            .par_iter()
            .map(|sym| {
                catch_unwind(AssertUnwindSafe(|| analyze_symbol::<Real>(sym, &calendar, &facts)))
                    .map_err(|p| format!("symbol {}: panic: {}", sym.symbol, panic_text(&p)))?
                    .map_err(|e| format!("symbol {}: {e}", sym.symbol))
            })
            .collect()
    });
    let mut analyses = Vec::with_capacity(per_symbol.len());
    let mut failures = Vec::new();
    for r in per_symbol {
        match r {
            Ok(a) => analyses.push(a),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Analyzer(failures.join("; ")));
    }

    let (bands, band_key) = if cfg.band.enabled {
        let tpd = mean_trades_per_day(&stats, calendar.n_days());
        let (bands, key) = pool.install(|| compute_bands(&cfg, &facts, &calendar, tpd))?;
        (bands, Some(key))
    } else {
        (BTreeMap::new(), None)
    };

    let verdicts = judge(&analyses, &bands, &facts, &cfg.verdict);
    let config_hash = cfg.semantic_hash();
    Ok(RunArtifacts {
        config: cfg,
        config_hash,
        facts_config: facts,
        calendar,
        ingest,
        skipped_symbols,
        stats,
        analyses,
        bands,
        band_key,
        verdicts,
    })
}

/// Null-tape size fallback when the input is a file: the cross-symbol mean.
pub fn mean_trades_per_day(stats: &[SymbolStats], n_days: usize) -> usize {
    if stats.is_empty() || n_days == 0 {
        return 1;
    }
    let total: u64 = stats.iter().map(|s| s.total_trades).sum();
    ((total as f64 / stats.len() as f64 / n_days as f64).round() as usize).max(1)
}

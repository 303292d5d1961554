//! Report bundle writer. Everything here is deterministic: struct fields
//! serialize in declaration order, maps are ordered, floats print in
//! shortest-round-trip form, and no timestamp, hostname, or absolute path
//! is ever written. Equal semantic configs therefore give byte-identical
//! bundles, whatever the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use tapefacts::facts::verdict::{FactVerdict, Verdict};
use tapefacts::facts::{stat_id, AnalysisNotes, FitEntry, GridUnit, LagCurve, SymbolAnalysis};
use tapefacts::series::ClockKind;
use tapefacts::synth::NoiseBand;
use tapefacts::tape::SymbolStats;
use tapefacts::Real;

use crate::config::SemanticConfig;
use crate::pipeline::{CliError, IngestSummary, RunArtifacts};

/// Bumped whenever a file's shape changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    config_hash: &'a str,
    config: SemanticConfig,
    symbols: Vec<&'a str>,
    skipped_symbols: &'a [String],
    n_days: usize,
    total_trades: u64,
    ingest: &'a IngestSummary,
    band_key: Option<&'a str>,
    n_curves: usize,
    n_bands: usize,
}

#[derive(Serialize)]
struct CurveDoc<'a> {
    schema_version: u32,
    config_hash: &'a str,
    curve: &'a LagCurve<Real>,
}

#[derive(Serialize)]
struct BandDoc<'a> {
    schema_version: u32,
    config_hash: &'a str,
    band: &'a NoiseBand<Real>,
}

#[derive(Deserialize)]
struct BandDocOwned {
    band: NoiseBand<Real>,
}

#[derive(Serialize, Deserialize)]
struct BandKeyDoc {
    schema_version: u32,
    config_hash: String,
    band_key: String,
    replicates: u32,
    seed: u64,
    stat_ids: Vec<String>,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u32,
    config_hash: &'a str,
    verdicts: &'a [FactVerdict],
}

#[derive(Serialize)]
struct StatsDoc<'a> {
    schema_version: u32,
    config_hash: &'a str,
    symbols: &'a [SymbolStats],
}

#[derive(Serialize)]
struct SymbolDoc<'a> {
    schema_version: u32,
    config_hash: &'a str,
    symbol: &'a str,
    notes: &'a AnalysisNotes,
    fits: &'a [FitEntry<Real>],
    abs_vs_raw: Vec<AbsVsRaw>,
}

/// Pointwise comparison of the absolute-return ACF against the magnitude
/// of the plain return ACF on the same grid.
#[derive(Debug, Serialize)]
pub struct AbsVsRaw {
    pub clock: ClockKind,
    pub abs_stat: String,
    pub raw_stat: String,
    pub grid: Vec<i64>,
    pub abs_exceeds_raw: Vec<Option<bool>>,
    pub n_compared: u64,
    pub frac_true: Option<f64>,
}

/// Writes the whole bundle under `dir`, creating it as needed. Existing
/// files with the same names are overwritten.
pub fn write_bundle(dir: &Path, art: &RunArtifacts) -> Result<(), CliError> {
    let hash = art.config_hash.as_str();
    make_dir(dir)?;

    let n_curves: usize = art.analyses.iter().map(|a| a.curves.len()).sum();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        config: art.config.semantic_view(),
        symbols: art.analyses.iter().map(|a| a.symbol.as_str()).collect(),
        skipped_symbols: &art.skipped_symbols,
        n_days: art.calendar.n_days(),
        total_trades: art.stats.iter().map(|s| s.total_trades).sum(),
        ingest: &art.ingest,
        band_key: art.band_key.as_deref(),
        n_curves,
        n_bands: art.bands.len(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    write_json(
        &dir.join("summary.json"),
        &SummaryDoc {
            schema_version: SCHEMA_VERSION,
            config_hash: hash,
            verdicts: &art.verdicts,
        },
    )?;
    write_text(&dir.join("summary.csv"), &summary_csv(hash, &art.verdicts))?;

    write_json(
        &dir.join("tape_stats.json"),
        &StatsDoc {
            schema_version: SCHEMA_VERSION,
            config_hash: hash,
            symbols: &art.stats,
        },
    )?;
    write_text(&dir.join("tape_stats.csv"), &stats_csv(hash, &art.stats))?;

    let analysis_dir = dir.join("analysis");
    make_dir(&analysis_dir)?;
    for analysis in &art.analyses {
        let sym_dir = dir.join("curves").join(&analysis.symbol);
        make_dir(&sym_dir)?;
        for curve in &analysis.curves {
            write_json(
                &sym_dir.join(format!("{}.json", curve.stat_id)),
                &CurveDoc {
                    schema_version: SCHEMA_VERSION,
                    config_hash: hash,
                    curve,
                },
            )?;
            write_text(
                &sym_dir.join(format!("{}.csv", curve.stat_id)),
                &curve_csv(hash, curve),
            )?;
        }
        let doc = SymbolDoc {
            schema_version: SCHEMA_VERSION,
            config_hash: hash,
            symbol: &analysis.symbol,
            notes: &analysis.notes,
            fits: &analysis.fits,
            abs_vs_raw: abs_vs_raw(analysis, art.facts_config.battery_stage()),
        };
        write_json(&analysis_dir.join(format!("{}.json", analysis.symbol)), &doc)?;
    }

    if let Some(key) = &art.band_key {
        write_bands(&dir.join("bands"), &art.bands, key, hash, art.config.band.replicates, art.config.band.seed)?;
    }
    Ok(())
}

/// Writes a band set in the cache layout: `key.json` plus one file per
/// statistic. The `band` verb and the bundle writer share this.
pub fn write_bands(
    dir: &Path,
    bands: &BTreeMap<String, NoiseBand<Real>>,
    band_key: &str,
    config_hash: &str,
    replicates: u32,
    seed: u64,
) -> Result<(), CliError> {
    make_dir(dir)?;
    let key_doc = BandKeyDoc {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        band_key: band_key.to_string(),
        replicates,
        seed,
        stat_ids: bands.keys().cloned().collect(),
    };
    write_json(&dir.join("key.json"), &key_doc)?;
    for (id, band) in bands {
        write_json(
            &dir.join(format!("{id}.json")),
            &BandDoc {
                schema_version: SCHEMA_VERSION,
                config_hash,
                band,
            },
        )?;
    }
    Ok(())
}

/// Loads a band cache directory, refusing it unless its key matches the
/// one the current config would produce.
pub fn load_band_cache(
    dir: &Path,
    expect_key: &str,
) -> Result<BTreeMap<String, NoiseBand<Real>>, CliError> {
    let key_path = dir.join("key.json");
    let text = fs::read_to_string(&key_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", key_path.display())))?;
    let key_doc: BandKeyDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", key_path.display())))?;
    if key_doc.band_key != expect_key {
        return Err(CliError::Config(vec![format!(
            "band.cache: key mismatch (cache {}, config needs {}); the cached bands were built \
             with different parameters",
            &key_doc.band_key[..12.min(key_doc.band_key.len())],
            &expect_key[..12]
        )]));
    }
    let mut bands = BTreeMap::new();
    for id in &key_doc.stat_ids {
        let path = dir.join(format!("{id}.json"));
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let doc: BandDocOwned = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        bands.insert(id.clone(), doc.band);
    }
    Ok(bands)
}

fn abs_vs_raw(analysis: &SymbolAnalysis<Real>, stage: &str) -> Vec<AbsVsRaw> {
    let mut out = Vec::new();
    for kind in [ClockKind::Clock, ClockKind::Event] {
        let abs_id = stat_id(6, "absacf", kind, stage);
        let raw_id = stat_id(1, "acf", kind, stage);
        let (Some(abs), Some(raw)) = (analysis.curve(&abs_id), analysis.curve(&raw_id)) else {
            continue;
        };
        if abs.grid != raw.grid {
            continue;
        }
        let pointwise: Vec<Option<bool>> = abs
            .values
            .iter()
            .zip(&raw.values)
            .map(|(a, r)| Some(*(a.as_ref()?) > r.as_ref()?.abs()))
            .collect();
        let n_compared = pointwise.iter().flatten().count() as u64;
        let n_true = pointwise.iter().flatten().filter(|&&b| b).count();
        out.push(AbsVsRaw {
            clock: kind,
            abs_stat: abs_id,
            raw_stat: raw_id,
            grid: abs.grid.clone(),
            abs_exceeds_raw: pointwise,
            n_compared,
            frac_true: (n_compared > 0).then(|| n_true as f64 / n_compared as f64),
        });
    }
    out
}

fn curve_csv(hash: &str, curve: &LagCurve<Real>) -> String {
    let mut s = String::new();
    s.push_str(&format!("# config_hash={hash}\n"));
    s.push_str("stat_id,symbol,fact,clock,scale,unit,grid,value,n_obs\n");
    for i in 0..curve.grid.len() {
        let value = curve.values[i].map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            curve.stat_id,
            curve.symbol,
            curve.fact,
            curve.clock_kind.as_str(),
            curve.scale,
            unit_str(curve.grid_unit),
            curve.grid[i],
            value,
            curve.n_obs[i],
        ));
    }
    s
}

fn summary_csv(hash: &str, verdicts: &[FactVerdict]) -> String {
    let mut s = String::new();
    s.push_str(&format!("# config_hash={hash}\n"));
    s.push_str("fact,name,clock,event,overall\n");
    for v in verdicts {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            v.fact,
            v.name,
            verdict_str(v.clock),
            verdict_str(v.event),
            verdict_str(v.overall),
        ));
    }
    s
}

fn stats_csv(hash: &str, stats: &[SymbolStats]) -> String {
    format!("# config_hash={hash}\n{}", stats_table(stats))
}

/// Descriptive statistics as CSV, one row per symbol (the `stats` verb's
/// stdout).
pub fn stats_table(stats: &[SymbolStats]) -> String {
    let mut s = String::new();
    s.push_str(
        "symbol,total_trades,active_days,mean_trades_per_day,min_trades_per_day,\
         max_trades_per_day,n_gaps,gap_mean_ns,gap_median_ns,gap_stddev_ns,gap_min_ns,gap_max_ns\n",
    );
    for r in stats {
        let ia = r.interarrival.as_ref();
        let opt = |v: Option<String>| v.unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.symbol,
            r.total_trades,
            r.active_days,
            r.mean_trades_per_day,
            r.min_trades_per_day,
            r.max_trades_per_day,
            opt(ia.map(|x| x.n_gaps.to_string())),
            opt(ia.map(|x| x.mean_ns.to_string())),
            opt(ia.map(|x| x.median_ns.to_string())),
            opt(ia.map(|x| x.stddev_ns.to_string())),
            opt(ia.map(|x| x.min_ns.to_string())),
            opt(ia.map(|x| x.max_ns.to_string())),
        ));
    }
    s
}

/// Aligned verdict table for stdout, one row per fact.
pub fn summary_table(verdicts: &[FactVerdict]) -> String {
    let name_w = verdicts.iter().map(|v| v.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!(
        "{:>4}  {:<name_w$}  {:<13}  {:<13}  overall\n",
        "fact", "name", "clock", "event"
    );
    for v in verdicts {
        s.push_str(&format!(
            "{:>4}  {:<name_w$}  {:<13}  {:<13}  {}\n",
            v.fact,
            v.name,
            verdict_str(v.clock),
            verdict_str(v.event),
            verdict_str(v.overall),
        ));
    }
    s
}

pub fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Supported => "supported",
        Verdict::NotSupported => "not_supported",
        Verdict::Indeterminate => "indeterminate",
    }
}

fn unit_str(u: GridUnit) -> &'static str {
    match u {
        GridUnit::Lag => "lag",
        GridUnit::DurationNs => "duration_ns",
        GridUnit::Trades => "trades",
        GridUnit::QuantileBp => "quantile_bp",
        GridUnit::Window => "window",
    }
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, doc)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

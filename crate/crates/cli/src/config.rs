//! Run configuration: a TOML file with sections, repeatable `--set`
//! overrides addressed by dotted key path, and validation that reports
//! every violation at once instead of stopping at the first.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tapefacts::facts::verdict::VerdictRules;
use tapefacts::facts::{FactSet, FactsConfig, FineVol, VolProxy, VolumeKind};
use tapefacts::series::SlotNorm;
use tapefacts::synth::{GenKind, GenSpec};
use tapefacts::tape::{SessionCalendar, Tape};
use tapefacts::{NS_PER_MIN, NS_PER_SEC};

/// Environment variable consulted for the output directory when neither
/// `--out` nor `run.out_dir` is given.
pub const OUT_DIR_ENV: &str = "TAPEFACTS_OUT";
/// Output directory of last resort.
pub const DEFAULT_OUT_DIR: &str = "report";

/// Whole config file. Every section has full defaults, so an empty file is
/// a valid starting point (it still fails validation for lack of an input).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSection,
    pub session: SessionSection,
    pub facts: FactsSection,
    pub band: BandSection,
    pub verdict: VerdictRules,
    pub run: RunSection,
}

/// Where trades come from: a tape file or a synthetic generator, never both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// Tape file path. Format from the extension unless `format` is set.
    pub tape: Option<String>,
    /// "csv" or "bin".
    pub format: Option<String>,
    /// Analyze only these symbols; unknown names are reported and skipped.
    pub symbols: Option<Vec<String>>,
    pub gen: Option<GenSection>,
}

/// Synthetic input: `symbols` independent tapes from one recipe, with
/// seeds `seed, seed+1, ...`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    /// "white_noise" or "clustering".
    pub kind: String,
    pub symbols: u32,
    pub name_prefix: String,
    pub days: usize,
    pub trades_per_day: usize,
    /// Trade-level return noise parameter, a variance by default.
    pub noise: f64,
    /// Read `noise` as a standard deviation instead of a variance.
    pub noise_is_stddev: bool,
    pub alpha: f64,
    pub beta: f64,
    /// GARCH constant; derived from the stationary variance when absent.
    pub omega: Option<f64>,
    pub start_price: f64,
    pub trade_size: u32,
    pub seed: Option<u64>,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            kind: "white_noise".to_string(),
            symbols: 1,
            name_prefix: "SYM".to_string(),
            days: 103,
            trades_per_day: 250_000,
            noise: 1e-4,
            noise_is_stddev: false,
            alpha: 0.09,
            beta: 0.90,
            omega: None,
            start_price: 100.0,
            trade_size: 100,
            seed: None,
        }
    }
}

/// Session window and, for synthetic tapes, where the weekday calendar
/// starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    /// "HH:MM" or "HH:MM:SS", local.
    pub open: String,
    pub close: String,
    /// First candidate epoch day of a generated weekday calendar.
    pub start_day: i64,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            open: "09:30".to_string(),
            close: "16:00".to_string(),
            start_day: 19_100,
        }
    }
}

/// Battery parameters in file-friendly units: durations as strings
/// ("1min", "30s"), quantiles as fractions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactsSection {
    /// Fact numbers 1..=11 to run.
    pub enabled: Vec<u8>,
    pub clock_base: String,
    pub event_base: u32,
    pub acf_max_lag: usize,
    pub clock_scales: Vec<String>,
    pub event_scales: Vec<u32>,
    pub loss_quantiles: Vec<f64>,
    pub min_exceedances: u64,
    pub extreme_quantile: f64,
    pub clock_extreme_window: usize,
    pub event_extreme_window: usize,
    pub fit_lo: i64,
    pub fit_hi: i64,
    pub leverage_max_lag: i64,
    pub volume_max_lag: i64,
    pub coarse_clock: String,
    pub coarse_event: u32,
    pub asym_max_lag: i64,
    pub slot_norm: SlotNorm,
    pub use_normalized: bool,
    pub vol_proxy: VolProxy,
    pub volume_kind: VolumeKind,
    pub fine_vol: FineVol,
}

impl Default for FactsSection {
    fn default() -> Self {
        let base = FactsConfig::default();
        FactsSection {
            enabled: (1..=11).collect(),
            clock_base: format_duration_ns(base.clock_base_ns),
            event_base: base.event_base,
            acf_max_lag: base.acf_max_lag,
            clock_scales: base
                .clock_kurt_scales_ns
                .iter()
                .map(|&ns| format_duration_ns(ns))
                .collect(),
            event_scales: base.event_kurt_scales.clone(),
            loss_quantiles: base
                .loss_quantiles_bp
                .iter()
                .map(|&bp| bp as f64 / 10_000.0)
                .collect(),
            min_exceedances: base.min_exceedances,
            extreme_quantile: base.extreme_quantile,
            clock_extreme_window: base.clock_extreme_window,
            event_extreme_window: base.event_extreme_window,
            fit_lo: base.fit_lo,
            fit_hi: base.fit_hi,
            leverage_max_lag: base.leverage_max_lag,
            volume_max_lag: base.volume_max_lag,
            coarse_clock: format_duration_ns(base.asym_coarse_clock_ns),
            coarse_event: base.asym_coarse_event,
            asym_max_lag: base.asym_max_lag,
            slot_norm: base.slot_norm,
            use_normalized: base.use_normalized,
            vol_proxy: base.vol_proxy,
            volume_kind: base.volume_kind,
            fine_vol: base.fine_vol,
        }
    }
}

/// White-noise null envelope settings. The null tape shape (days, trades
/// per day) follows the input unless overridden here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSection {
    pub enabled: bool,
    pub replicates: u32,
    pub seed: u64,
    pub trades_per_day: Option<usize>,
    pub noise: f64,
    pub noise_is_stddev: bool,
    /// Directory holding a precomputed band cache (the `band` verb's
    /// output). Loaded instead of recomputing when the key matches.
    pub cache: Option<String>,
}

impl Default for BandSection {
    fn default() -> Self {
        BandSection {
            enabled: true,
            replicates: 100,
            seed: 1_000_003,
            trades_per_day: None,
            noise: 1e-4,
            noise_is_stddev: false,
            cache: None,
        }
    }
}

/// Run-local knobs: never part of the config hash, so bundles stay
/// comparable across machines and worker counts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: Option<String>,
    /// Worker threads; 0 picks the machine default.
    pub workers: usize,
}

/// Parses the config text and applies `--set key.path=value` overrides in
/// order. An empty text is the all-defaults config.
pub fn load(text: &str, sets: &[String]) -> Result<RunConfig, Vec<String>> {
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| vec![format!("config parse: {e}")])?;
    let mut errs = Vec::new();
    for s in sets {
        if let Err(e) = apply_set(&mut value, s) {
            errs.push(e);
        }
    }
    if !errs.is_empty() {
        return Err(errs);
    }
    value.try_into().map_err(|e| vec![format!("config: {e}")])
}

/// Inserts one `key.path=value` override into the raw TOML tree. The value
/// side is parsed as TOML; anything unparseable is taken as a bare string.
fn apply_set(root: &mut toml::Value, set: &str) -> Result<(), String> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| format!("--set {set}: expected key.path=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(format!("--set {set}: empty key path"));
    }
    let parsed: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").unwrap(),
        _ => toml::Value::String(raw.trim().to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| format!("--set {path}: {} is not a table", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    unreachable!("empty key path is rejected above");
}

impl RunConfig {
    /// Collects every violation, each tagged with its config key path.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        self.validate_input(&mut errs);
        self.validate_session(&mut errs);
        if let Err(mut e) = self.facts_config() {
            errs.append(&mut e);
        }
        self.validate_band(&mut errs);
        for e in self.verdict.validate() {
            errs.push(format!("verdict.{e}"));
        }
        errs
    }

    fn validate_input(&self, errs: &mut Vec<String>) {
        match (&self.input.tape, &self.input.gen) {
            (None, None) => errs.push(
                "input: either input.tape or an [input.gen] section is required".to_string(),
            ),
            (Some(_), Some(_)) => errs
                .push("input: input.tape and [input.gen] are mutually exclusive".to_string()),
            (Some(path), None) => {
                if self.tape_format().is_none() {
                    errs.push(format!(
                        "input.tape: cannot tell the format of {path}; set input.format to \"csv\" or \"bin\""
                    ));
                }
                if let Some(f) = &self.input.format {
                    if f != "csv" && f != "bin" {
                        errs.push(format!("input.format: unknown format {f:?}"));
                    }
                }
            }
            (None, Some(gen)) => validate_gen(gen, errs),
        }
        if let Some(syms) = &self.input.symbols {
            if syms.is_empty() {
                errs.push("input.symbols: empty filter selects nothing".to_string());
            }
        }
    }

    fn validate_session(&self, errs: &mut Vec<String>) {
        let open = parse_time_of_day(&self.session.open)
            .map_err(|e| errs.push(format!("session.open: {e}")))
            .ok();
        let close = parse_time_of_day(&self.session.close)
            .map_err(|e| errs.push(format!("session.close: {e}")))
            .ok();
        if let (Some(o), Some(c)) = (open, close) {
            if c <= o {
                errs.push("session.close: must be after session.open".to_string());
            }
        }
        if self.session.start_day < 0 {
            errs.push("session.start_day: must be a nonnegative epoch day".to_string());
        }
    }

    fn validate_band(&self, errs: &mut Vec<String>) {
        let b = &self.band;
        if !b.enabled {
            return;
        }
        if b.replicates == 0 {
            errs.push("band.replicates: must be positive when bands are enabled".to_string());
        }
        if !(b.noise > 0.0) {
            errs.push("band.noise: must be positive".to_string());
        }
        if b.trades_per_day == Some(0) {
            errs.push("band.trades_per_day: must be positive".to_string());
        }
        if let Some(gen) = &self.input.gen {
            if let Some(seed) = gen.seed {
                let gen_end = seed.saturating_add(gen.symbols as u64);
                let band_end = b.seed.saturating_add(b.replicates as u64);
                if seed < band_end && b.seed < gen_end {
                    errs.push(
                        "band.seed: replicate seed range overlaps the input.gen seed range, \
                         so the null would reuse the analyzed tapes"
                            .to_string(),
                    );
                }
            }
        }
    }

    /// "csv" or "bin" for a file input, from `input.format` or the path
    /// extension.
    pub fn tape_format(&self) -> Option<&str> {
        if let Some(f) = &self.input.format {
            return match f.as_str() {
                "csv" | "bin" => Some(f.as_str()),
                _ => None,
            };
        }
        let path = self.input.tape.as_deref()?;
        match path.rsplit_once('.').map(|(_, e)| e) {
            Some("csv") => Some("csv"),
            Some("bin") => Some("bin"),
            _ => None,
        }
    }

    /// Battery config in engine units. Errors carry config key paths.
    pub fn facts_config(&self) -> Result<FactsConfig, Vec<String>> {
        let f = &self.facts;
        let mut errs = Vec::new();
        let enabled = FactSet::from_numbers(&f.enabled).unwrap_or_else(|e| {
            errs.push(format!("facts.enabled: {e}"));
            FactSet::all()
        });
        if f.enabled.is_empty() {
            errs.push("facts.enabled: no facts enabled".to_string());
        }
        let mut dur = |key: &str, s: &str| {
            parse_duration_ns(s).unwrap_or_else(|e| {
                errs.push(format!("facts.{key}: {e}"));
                NS_PER_MIN
            })
        };
        let clock_base_ns = dur("clock_base", &f.clock_base);
        let clock_kurt_scales_ns: Vec<i64> = f
            .clock_scales
            .iter()
            .map(|s| dur("clock_scales", s))
            .collect();
        let asym_coarse_clock_ns = dur("coarse_clock", &f.coarse_clock);
        let mut loss_quantiles_bp = Vec::new();
        for &q in &f.loss_quantiles {
            if !(0.0..1.0).contains(&q) {
                errs.push(format!(
                    "facts.loss_quantiles: {q} is not a fraction in [0, 1)"
                ));
            } else {
                loss_quantiles_bp.push((q * 10_000.0).round() as i64);
            }
        }
        let cfg = FactsConfig {
            enabled,
            clock_base_ns,
            event_base: f.event_base,
            acf_max_lag: f.acf_max_lag,
            clock_kurt_scales_ns,
            event_kurt_scales: f.event_scales.clone(),
            loss_quantiles_bp,
            min_exceedances: f.min_exceedances,
            extreme_quantile: f.extreme_quantile,
            clock_extreme_window: f.clock_extreme_window,
            event_extreme_window: f.event_extreme_window,
            fit_lo: f.fit_lo,
            fit_hi: f.fit_hi,
            leverage_max_lag: f.leverage_max_lag,
            volume_max_lag: f.volume_max_lag,
            asym_coarse_clock_ns,
            asym_coarse_event: f.coarse_event,
            asym_max_lag: f.asym_max_lag,
            slot_norm: f.slot_norm,
            use_normalized: f.use_normalized,
            vol_proxy: f.vol_proxy,
            volume_kind: f.volume_kind,
            fine_vol: f.fine_vol,
        };
        for e in cfg.validate() {
            errs.push(format!("facts: {e}"));
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(errs)
        }
    }

    /// Session window as nanoseconds past midnight. Call after `validate`.
    pub fn session_window(&self) -> Result<(i64, i64), Vec<String>> {
        let open =
            parse_time_of_day(&self.session.open).map_err(|e| vec![format!("session.open: {e}")])?;
        let close = parse_time_of_day(&self.session.close)
            .map_err(|e| vec![format!("session.close: {e}")])?;
        Ok((open, close))
    }

    /// Weekday calendar for generated tapes.
    pub fn gen_calendar(&self) -> Result<SessionCalendar, Vec<String>> {
        let (open, close) = self.session_window()?;
        let days = match &self.input.gen {
            Some(g) => g.days,
            None => return Err(vec!["input.gen: required for a generated calendar".to_string()]),
        };
        let base = SessionCalendar::weekdays(self.session.start_day, days);
        SessionCalendar::new(open, close, base.days().to_vec())
            .map_err(|e| vec![format!("session: {e}")])
    }

    /// Calendar covering the days observed in a file tape, with the
    /// configured session window.
    pub fn tape_calendar(&self, tape: &Tape) -> Result<SessionCalendar, Vec<String>> {
        let (open, close) = self.session_window()?;
        let base = SessionCalendar::from_tape(tape);
        SessionCalendar::new(open, close, base.days().to_vec())
            .map_err(|e| vec![format!("session: {e}")])
    }

    /// One generator recipe per synthetic symbol. `None` for file input.
    pub fn gen_specs(&self) -> Option<Vec<GenSpec>> {
        let gen = self.input.gen.as_ref()?;
        let seed = gen.seed.unwrap_or(0);
        let variance = if gen.noise_is_stddev {
            gen.noise * gen.noise
        } else {
            gen.noise
        };
        let kind = match gen.kind.as_str() {
            "clustering" => GenKind::Clustering {
                alpha: gen.alpha,
                beta: gen.beta,
                omega: gen.omega,
            },
            _ => GenKind::WhiteNoise,
        };
        Some(
            (0..gen.symbols)
                .map(|i| GenSpec {
                    kind: kind.clone(),
                    symbol: format!("{}{:02}", gen.name_prefix, i),
                    days: gen.days,
                    trades_per_day: gen.trades_per_day,
                    noise_variance: variance,
                    start_price: gen.start_price,
                    size: gen.trade_size,
                    seed: seed + i as u64,
                })
                .collect(),
        )
    }

    /// White-noise recipe behind the band envelope. The caller supplies the
    /// fallbacks measured from the actual input.
    pub fn null_spec(&self, days: usize, fallback_tpd: usize) -> GenSpec {
        let b = &self.band;
        let variance = if b.noise_is_stddev {
            b.noise * b.noise
        } else {
            b.noise
        };
        let tpd = b
            .trades_per_day
            .or_else(|| self.input.gen.as_ref().map(|g| g.trades_per_day))
            .unwrap_or(fallback_tpd);
        GenSpec {
            noise_variance: variance,
            ..GenSpec::white_noise("null", days, tpd.max(1), b.seed)
        }
    }

    /// The sections that can change reported numbers. `run.*` and
    /// `band.cache` are deliberately excluded, so bundles stay comparable
    /// across machines, worker counts, and cache usage.
    pub fn semantic_view(&self) -> SemanticConfig {
        SemanticConfig {
            input: self.input.clone(),
            session: self.session.clone(),
            facts: self.facts.clone(),
            band: BandSection {
                cache: None,
                ..self.band.clone()
            },
            verdict: self.verdict.clone(),
        }
    }

    /// Hash of [`semantic_view`](Self::semantic_view), stamped on every
    /// emitted file.
    pub fn semantic_hash(&self) -> String {
        let json = serde_json::to_string(&self.semantic_view()).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

/// What the config hash covers; embedded verbatim in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct SemanticConfig {
    pub input: InputSection,
    pub session: SessionSection,
    pub facts: FactsSection,
    pub band: BandSection,
    pub verdict: VerdictRules,
}

fn validate_gen(gen: &GenSection, errs: &mut Vec<String>) {
    match gen.kind.as_str() {
        "white_noise" => {}
        "clustering" => {
            if gen.alpha < 0.0 || gen.beta < 0.0 {
                errs.push("input.gen.alpha/beta: must be nonnegative".to_string());
            }
            if gen.alpha + gen.beta >= 1.0 {
                errs.push(format!(
                    "input.gen: alpha + beta = {} violates the stationarity constraint (must be below 1)",
                    gen.alpha + gen.beta
                ));
            }
            if let Some(w) = gen.omega {
                if !(w > 0.0) {
                    errs.push("input.gen.omega: must be positive when given".to_string());
                }
            }
        }
        other => errs.push(format!(
            "input.gen.kind: unknown generator {other:?} (expected \"white_noise\" or \"clustering\")"
        )),
    }
    if gen.symbols == 0 {
        errs.push("input.gen.symbols: must be positive".to_string());
    }
    if gen.days == 0 {
        errs.push("input.gen.days: must be positive".to_string());
    }
    if gen.trades_per_day == 0 {
        errs.push("input.gen.trades_per_day: must be positive".to_string());
    }
    if !(gen.noise > 0.0) {
        errs.push("input.gen.noise: must be positive".to_string());
    }
    if !(gen.start_price > 0.0) {
        errs.push("input.gen.start_price: must be positive".to_string());
    }
    if gen.trade_size == 0 {
        errs.push("input.gen.trade_size: must be positive".to_string());
    }
    if gen.seed.is_none() {
        errs.push("input.gen.seed: required for synthetic input".to_string());
    }
}

/// Parses "90s", "5min", "1h", "250ms", "1000ns" to nanoseconds.
pub fn parse_duration_ns(s: &str) -> Result<i64, String> {
    let t = s.trim();
    let split = t
        .find(|c: char| !c.is_ascii_digit())
        .ok_or_else(|| format!("duration {t:?} is missing a unit (ns, us, ms, s, min, h)"))?;
    if split == 0 {
        return Err(format!("duration {t:?} is missing a count"));
    }
    let (num, unit) = t.split_at(split);
    let n: i64 = num
        .parse()
        .map_err(|_| format!("duration {t:?} has a bad count"))?;
    let mult = match unit {
        "ns" => 1,
        "us" => 1_000,
        "ms" => 1_000_000,
        "s" => NS_PER_SEC,
        "m" | "min" => NS_PER_MIN,
        "h" => 60 * NS_PER_MIN,
        _ => return Err(format!("duration {t:?} has unknown unit {unit:?}")),
    };
    n.checked_mul(mult)
        .filter(|&v| v > 0)
        .ok_or_else(|| format!("duration {t:?} is out of range"))
}

/// Renders nanoseconds with the largest unit that divides evenly, the
/// inverse of [`parse_duration_ns`] on its own output.
pub fn format_duration_ns(ns: i64) -> String {
    for (mult, unit) in [
        (60 * NS_PER_MIN, "h"),
        (NS_PER_MIN, "min"),
        (NS_PER_SEC, "s"),
        (1_000_000, "ms"),
        (1_000, "us"),
    ] {
        if ns % mult == 0 {
            return format!("{}{unit}", ns / mult);
        }
    }
    format!("{ns}ns")
}

/// Parses "HH:MM" or "HH:MM:SS" to nanoseconds past midnight.
pub fn parse_time_of_day(s: &str) -> Result<i64, String> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.len() != 2 && parts.len() != 3 {
        return Err(format!("time {s:?} is not HH:MM or HH:MM:SS"));
    }
    let mut nums = [0i64; 3];
    for (i, p) in parts.iter().enumerate() {
        nums[i] = p
            .parse()
            .map_err(|_| format!("time {s:?} has a bad component {p:?}"))?;
    }
    let (h, m, sec) = (nums[0], nums[1], nums[2]);
    if !(0..24).contains(&h) || !(0..60).contains(&m) || !(0..60).contains(&sec) {
        return Err(format!("time {s:?} is out of range"));
    }
    Ok((h * 3600 + m * 60 + sec) * NS_PER_SEC)
}

/// Lowercase hex SHA-256.
pub fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(out.len() * 2);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_pure_defaults_with_only_an_input_error() {
        let cfg = load("", &[]).unwrap();
        let errs = cfg.validate();
        assert_eq!(errs.len(), 1, "{errs:?}");
        assert!(errs[0].starts_with("input:"), "{errs:?}");
        assert_eq!(cfg.band.replicates, 100);
        assert_eq!(cfg.facts.extreme_quantile, 0.99);
        assert!(cfg.input.gen.is_none());
    }

    #[test]
    fn duration_list_parses_to_nanoseconds() {
        let cfg = load(
            "[input.gen]\nseed = 1\n[facts]\nclock_scales = [\"1min\", \"5min\", \"60min\"]\n",
            &[],
        )
        .unwrap();
        let fc = cfg.facts_config().unwrap();
        assert_eq!(
            fc.clock_kurt_scales_ns,
            vec![NS_PER_MIN, 5 * NS_PER_MIN, 60 * NS_PER_MIN]
        );
        assert_eq!(parse_duration_ns("90s").unwrap(), 90 * NS_PER_SEC);
        assert_eq!(parse_duration_ns("1h").unwrap(), 60 * NS_PER_MIN);
        assert!(parse_duration_ns("fast").is_err());
        assert!(parse_duration_ns("5").is_err());
    }

    #[test]
    fn duration_formatting_round_trips() {
        for ns in [1, 999, 1_000, 250_000_000, NS_PER_SEC, 90 * NS_PER_SEC, NS_PER_MIN, 45 * NS_PER_MIN, 7200 * NS_PER_SEC] {
            let s = format_duration_ns(ns);
            assert_eq!(parse_duration_ns(&s).unwrap(), ns, "{s}");
        }
    }

    #[test]
    fn nonstationary_garch_names_the_constraint() {
        let cfg = load(
            "[input.gen]\nkind = \"clustering\"\nalpha = 0.15\nbeta = 0.90\nseed = 1\n",
            &[],
        )
        .unwrap();
        let errs = cfg.validate();
        assert!(
            errs.iter().any(|e| e.contains("stationarity")),
            "{errs:?}"
        );
    }

    #[test]
    fn set_overrides_apply_with_toml_typing() {
        let cfg = load(
            "[input.gen]\nseed = 9\n",
            &[
                "facts.acf_max_lag=60".to_string(),
                "facts.enabled=[1, 6]".to_string(),
                "input.gen.kind=clustering".to_string(),
                "band.enabled=false".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.facts.acf_max_lag, 60);
        assert_eq!(cfg.facts.enabled, vec![1, 6]);
        assert_eq!(cfg.input.gen.as_ref().unwrap().kind, "clustering");
        assert!(!cfg.band.enabled);
    }

    #[test]
    fn unknown_keys_and_bad_sets_are_reported() {
        let err = load("[facts]\nacf_maximum = 10\n", &[]).unwrap_err();
        assert!(err[0].contains("acf_maximum"), "{err:?}");
        let err = load("", &["facts.acf_max_lag".to_string()]).unwrap_err();
        assert!(err[0].contains("expected key.path=value"), "{err:?}");
    }

    #[test]
    fn validation_collects_every_violation_with_key_paths() {
        let cfg = load(
            "[input.gen]\nkind = \"clustering\"\nalpha = 0.6\nbeta = 0.6\ntrades_per_day = 0\n[session]\nopen = \"17:00\"\n[facts]\nloss_quantiles = [1.5]\n[band]\nreplicates = 0\n",
            &[],
        )
        .unwrap();
        let errs = cfg.validate();
        for needle in [
            "input.gen:",
            "input.gen.trades_per_day",
            "input.gen.seed",
            "session.close",
            "facts.loss_quantiles",
            "band.replicates",
        ] {
            assert!(
                errs.iter().any(|e| e.contains(needle)),
                "missing {needle} in {errs:?}"
            );
        }
    }

    #[test]
    fn seed_overlap_between_data_and_band_is_rejected() {
        let cfg = load(
            "[input.gen]\nseed = 1000000\nsymbols = 5\n[band]\nseed = 1000003\nreplicates = 8\n",
            &[],
        )
        .unwrap();
        let errs = cfg.validate();
        assert!(errs.iter().any(|e| e.contains("band.seed")), "{errs:?}");
        let cfg = load("[input.gen]\nseed = 1\nsymbols = 5\n", &[]).unwrap();
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn semantic_hash_ignores_run_section_and_cache_path() {
        let a = load("[input.gen]\nseed = 1\n", &[]).unwrap();
        let b = load(
            "[input.gen]\nseed = 1\n[run]\nworkers = 8\nout_dir = \"elsewhere\"\n[band]\ncache = \"bands\"\n",
            &[],
        )
        .unwrap();
        let c = load("[input.gen]\nseed = 2\n", &[]).unwrap();
        assert_eq!(a.semantic_hash(), b.semantic_hash());
        assert_ne!(a.semantic_hash(), c.semantic_hash());
    }

    #[test]
    fn gen_specs_step_seeds_and_stamp_names() {
        let cfg = load(
            "[input.gen]\nseed = 40\nsymbols = 3\nname_prefix = \"WN\"\nnoise = 0.01\nnoise_is_stddev = true\n",
            &[],
        )
        .unwrap();
        let specs = cfg.gen_specs().unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].symbol, "WN00");
        assert_eq!(specs[2].symbol, "WN02");
        assert_eq!(specs[1].seed, 41);
        assert!((specs[0].noise_variance - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn calendars_use_the_configured_window() {
        let cfg = load(
            "[input.gen]\nseed = 1\ndays = 5\n[session]\nopen = \"10:00\"\nclose = \"15:30\"\nstart_day = 19100\n",
            &[],
        )
        .unwrap();
        let cal = cfg.gen_calendar().unwrap();
        assert_eq!(cal.n_days(), 5);
        assert_eq!(cal.open_ns, 10 * 3600 * NS_PER_SEC);
        assert_eq!(cal.close_ns, (15 * 3600 + 30 * 60) * NS_PER_SEC);
        assert!(cal.days().iter().all(|&d| (d + 4).rem_euclid(7) % 6 != 0));
    }
}

//! Bucketed price and return series.
//!
//! Two bucketing clocks are supported:
//!
//! - clock time: a day's session is tiled by fixed `dt` buckets, the bucket
//!   price is the last trade in the bucket, and empty buckets forward-fill
//!   the previous price (a forward-filled bucket therefore contributes a
//!   zero return). Buckets before the day's first trade hold no price. A
//!   trailing remainder shorter than `dt` is dropped whole, trades and all.
//! - event time: a day's trades are chopped into consecutive groups of `n`;
//!   the bucket price is the last trade of the group. The trailing partial
//!   group is dropped.
//!
//! Returns are log-price differences between consecutive buckets of the same
//! day; nothing ever spans a day boundary. Each value carries a slot index
//! (bucket position within the day) so clock-time normalization can average
//! across days at a fixed time of day.
//!
//! Series storage is flat struct-of-arrays with per-day extents, which keeps
//! a 25-million-trade event series within a few hundred MB.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{sum, sum_by};
use crate::scalar::Scalar;
use crate::tape::{SessionCalendar, SymbolTape};
use crate::Real;

/// Which bucketing clock a series lives on, with its scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClockSpec {
    /// Fixed wall-clock buckets of `dt_ns` nanoseconds.
    Clock { dt_ns: i64 },
    /// Buckets of `n` consecutive trades.
    Event { n: u32 },
}

/// Just the clock family, without the scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    Clock,
    Event,
}

impl ClockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockKind::Clock => "clock",
            ClockKind::Event => "event",
        }
    }
}

impl ClockSpec {
    pub fn minutes(m: i64) -> Self {
        ClockSpec::Clock {
            dt_ns: m * crate::NS_PER_MIN,
        }
    }

    pub fn trades(n: u32) -> Self {
        ClockSpec::Event { n }
    }

    pub fn is_clock(&self) -> bool {
        matches!(self, ClockSpec::Clock { .. })
    }

    /// The scale as a bare integer: nanoseconds for clock buckets, trade
    /// count for event buckets. Used by file formats next to a kind column.
    pub fn scale(&self) -> i64 {
        match *self {
            ClockSpec::Clock { dt_ns } => dt_ns,
            ClockSpec::Event { n } => n as i64,
        }
    }

    pub fn kind(&self) -> ClockKind {
        match self {
            ClockSpec::Clock { .. } => ClockKind::Clock,
            ClockSpec::Event { .. } => ClockKind::Event,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        self.kind().as_str()
    }

    /// Short human label, e.g. `clock:5m`, `clock:30s`, `event:100`.
    pub fn label(&self) -> String {
        match *self {
            ClockSpec::Clock { dt_ns } => {
                if dt_ns % crate::NS_PER_MIN == 0 {
                    format!("clock:{}m", dt_ns / crate::NS_PER_MIN)
                } else if dt_ns % crate::NS_PER_SEC == 0 {
                    format!("clock:{}s", dt_ns / crate::NS_PER_SEC)
                } else {
                    format!("clock:{}ns", dt_ns)
                }
            }
            ClockSpec::Event { n } => format!("event:{n}"),
        }
    }
}

/// Extent of one calendar day inside a flat series. Day `i` of the calendar
/// is `days[i]`; a day the symbol never traded has `len == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayMeta {
    /// Offset of the day's first bucket in the flat columns.
    pub start: usize,
    /// Number of buckets with a defined price.
    pub len: usize,
    /// Slots before the first defined bucket (clock days start at the
    /// day's first trade; event days always have `lead == 0`).
    pub lead: usize,
    /// Total slots in the day: fixed bucket count for clock days,
    /// `lead + len` for event days.
    pub slots: usize,
}

/// Per-bucket OHLC columns, in log price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcColumns<F> {
    pub open: Vec<F>,
    pub high: Vec<F>,
    pub low: Vec<F>,
    pub close: Vec<F>,
}

/// A bucketed price series for one symbol on one clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries<F = Real> {
    pub clock: ClockSpec,
    pub days: Vec<DayMeta>,
    /// Log of the bucket price (last trade, forward-filled).
    pub log_price: Vec<F>,
    /// Shares traded in the bucket (0 for filled buckets).
    pub volume: Vec<u64>,
    /// Trade prints in the bucket (0 for filled buckets).
    pub trade_count: Vec<u32>,
    /// Present only when requested at build time.
    pub ohlc: Option<OhlcColumns<F>>,
    /// In-session trades that fell in a dropped trailing remainder, plus
    /// trades outside the calendar entirely.
    pub skipped_trades: u64,
}

impl<F: Scalar> PriceSeries<F> {
    pub fn n_buckets(&self) -> usize {
        self.log_price.len()
    }

    pub fn day_log_prices(&self, day: usize) -> &[F] {
        let d = &self.days[day];
        &self.log_price[d.start..d.start + d.len]
    }

    pub fn day_volumes(&self, day: usize) -> &[u64] {
        let d = &self.days[day];
        &self.volume[d.start..d.start + d.len]
    }
}

/// Options for [`build_series`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Also record per-bucket OHLC (needed only by range-volatility
    /// variants; costs four extra columns).
    pub with_ohlc: bool,
}

/// Series construction and normalization failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("bucket scale does not fit the session (clock dt must be in (0, session]; event n must be > 0)")]
    BadScale,
    #[error("operation expects a {expected} series, got {got}")]
    WrongStage {
        expected: &'static str,
        got: &'static str,
    },
    #[error("slot normalization is defined for clock series only")]
    NotClock,
    #[error("malformed series row: {0}")]
    BadRow(String),
}

/// Builds a bucketed price series from a (sorted, session-filtered) symbol
/// tape. Every in-session trade lands in exactly one bucket or in the
/// dropped trailing remainder, which is counted in `skipped_trades`.
pub fn build_series<F: Scalar>(
    sym: &SymbolTape,
    cal: &SessionCalendar,
    clock: ClockSpec,
    opts: BuildOptions,
) -> Result<PriceSeries<F>, SeriesError> {
    match clock {
        ClockSpec::Clock { dt_ns } => build_clock(sym, cal, dt_ns, opts),
        ClockSpec::Event { n } => build_event(sym, cal, n, opts),
    }
}

/// Raw per-bucket aggregates in price space, logged at flush time.
#[derive(Clone, Copy)]
struct BucketAcc {
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: u64,
    count: u32,
}

impl BucketAcc {
    fn first(price: f64, size: u32) -> Self {
        BucketAcc {
            open: price,
            high: price,
            low: price,
            close: price,
            volume: size as u64,
            count: 1,
        }
    }

    fn add(&mut self, price: f64, size: u32) {
        self.high = self.high.max(price);
        self.low = self.low.min(price);
        self.close = price;
        self.volume += size as u64;
        self.count += 1;
    }
}

struct SeriesBuilder<F> {
    days: Vec<DayMeta>,
    log_price: Vec<F>,
    volume: Vec<u64>,
    trade_count: Vec<u32>,
    ohlc: Option<OhlcColumns<F>>,
}

impl<F: Scalar> SeriesBuilder<F> {
    fn new(opts: BuildOptions) -> Self {
        SeriesBuilder {
            days: Vec::new(),
            log_price: Vec::new(),
            volume: Vec::new(),
            trade_count: Vec::new(),
            ohlc: opts.with_ohlc.then(|| OhlcColumns {
                open: Vec::new(),
                high: Vec::new(),
                low: Vec::new(),
                close: Vec::new(),
            }),
        }
    }

    fn push_bucket(&mut self, acc: &BucketAcc) {
        self.log_price.push(F::from_f64_lossy(acc.close.ln()));
        self.volume.push(acc.volume);
        self.trade_count.push(acc.count);
        if let Some(ohlc) = &mut self.ohlc {
            ohlc.open.push(F::from_f64_lossy(acc.open.ln()));
            ohlc.high.push(F::from_f64_lossy(acc.high.ln()));
            ohlc.low.push(F::from_f64_lossy(acc.low.ln()));
            ohlc.close.push(F::from_f64_lossy(acc.close.ln()));
        }
    }

    /// A forward-filled bucket: carries the previous close, trades nothing.
    fn push_fill(&mut self, prev_close: f64) {
        self.push_bucket(&BucketAcc {
            open: prev_close,
            high: prev_close,
            low: prev_close,
            close: prev_close,
            volume: 0,
            count: 0,
        });
    }

    fn finish(self, clock: ClockSpec, skipped: u64) -> PriceSeries<F> {
        PriceSeries {
            clock,
            days: self.days,
            log_price: self.log_price,
            volume: self.volume,
            trade_count: self.trade_count,
            ohlc: self.ohlc,
            skipped_trades: skipped,
        }
    }
}

fn build_clock<F: Scalar>(
    sym: &SymbolTape,
    cal: &SessionCalendar,
    dt_ns: i64,
    opts: BuildOptions,
) -> Result<PriceSeries<F>, SeriesError> {
    if dt_ns <= 0 || dt_ns > cal.session_len_ns() {
        return Err(SeriesError::BadScale);
    }
    let buckets_per_day = (cal.session_len_ns() / dt_ns) as usize;
    let mut b = SeriesBuilder::new(opts);
    let mut skipped = 0u64;

    // Per-day accumulation: bucket index -> live accumulator.
    let mut day_accs: Vec<Option<BucketAcc>> = vec![None; buckets_per_day];
    let mut cursor = 0usize;
    for day_idx in 0..cal.n_days() {
        let day = cal.days()[day_idx];
        let day_open = day * crate::NS_PER_DAY + cal.open_ns;
        day_accs.iter_mut().for_each(|a| *a = None);
        while cursor < sym.trades.len() {
            let t = &sym.trades[cursor];
            let t_day = t.epoch_day();
            if t_day < day {
                // Outside the calendar (filter should have removed these).
                skipped += 1;
                cursor += 1;
                continue;
            }
            if t_day > day {
                break;
            }
            cursor += 1;
            let offset = t.ts_ns - day_open;
            if offset < 0 {
                skipped += 1;
                continue;
            }
            let bucket = (offset / dt_ns) as usize;
            if bucket >= buckets_per_day {
                // Trailing remainder shorter than dt, or out-of-session.
                skipped += 1;
                continue;
            }
            match &mut day_accs[bucket] {
                Some(acc) => acc.add(t.price, t.size),
                slot => *slot = Some(BucketAcc::first(t.price, t.size)),
            }
        }
        flush_clock_day(&mut b, &day_accs, buckets_per_day);
    }
    skipped += (sym.trades.len() - cursor) as u64;
    Ok(b.finish(ClockSpec::Clock { dt_ns }, skipped))
}

fn flush_clock_day<F: Scalar>(
    b: &mut SeriesBuilder<F>,
    day_accs: &[Option<BucketAcc>],
    buckets_per_day: usize,
) {
    let start = b.log_price.len();
    let first = day_accs.iter().position(Option::is_some);
    let Some(first) = first else {
        b.days.push(DayMeta {
            start,
            len: 0,
            lead: buckets_per_day,
            slots: buckets_per_day,
        });
        return;
    };
    let mut prev_close = 0.0f64;
    for acc in &day_accs[first..] {
        match acc {
            Some(acc) => {
                b.push_bucket(acc);
                prev_close = acc.close;
            }
            None => b.push_fill(prev_close),
        }
    }
    b.days.push(DayMeta {
        start,
        len: buckets_per_day - first,
        lead: first,
        slots: buckets_per_day,
    });
}

fn build_event<F: Scalar>(
    sym: &SymbolTape,
    cal: &SessionCalendar,
    n: u32,
    opts: BuildOptions,
) -> Result<PriceSeries<F>, SeriesError> {
    if n == 0 {
        return Err(SeriesError::BadScale);
    }
    let n = n as usize;
    let mut b = SeriesBuilder::new(opts);
    let mut skipped = 0u64;
    let mut cursor = 0usize;
    for day_idx in 0..cal.n_days() {
        let day = cal.days()[day_idx];
        let start = b.log_price.len();
        // Locate this day's trade range.
        while cursor < sym.trades.len() && sym.trades[cursor].epoch_day() < day {
            skipped += 1;
            cursor += 1;
        }
        let day_start = cursor;
        while cursor < sym.trades.len() && sym.trades[cursor].epoch_day() == day {
            cursor += 1;
        }
        let day_trades = &sym.trades[day_start..cursor];
        let full_groups = day_trades.len() / n;
        for g in 0..full_groups {
            let group = &day_trades[g * n..(g + 1) * n];
            let mut acc = BucketAcc::first(group[0].price, group[0].size);
            for t in &group[1..] {
                acc.add(t.price, t.size);
            }
            b.push_bucket(&acc);
        }
        skipped += (day_trades.len() - full_groups * n) as u64;
        b.days.push(DayMeta {
            start,
            len: full_groups,
            lead: 0,
            slots: full_groups,
        });
    }
    skipped += (sym.trades.len() - cursor) as u64;
    Ok(b.finish(ClockSpec::Event { n: n as u32 }, skipped))
}

// ===== Return series =====

/// Which normalization a return series has been through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Plain log returns.
    Raw,
    /// Each day divided by its own return standard deviation.
    DailyNorm,
    /// Daily-normalized, then each time-of-day slot divided by its
    /// cross-day typical magnitude (clock series only).
    FullNorm,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::DailyNorm => "daily_norm",
            Stage::FullNorm => "full_norm",
        }
    }
}

/// A maximal run of consecutive return values within one day.
///
/// Raw series have one segment per day with at least two buckets; slot
/// normalization can split a day into several segments when it drops a
/// degenerate slot. Lag statistics must never pair values from different
/// segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMeta {
    /// Calendar day index.
    pub day: usize,
    /// Slot (within-day bucket index) of the segment's first value. The
    /// value at slot `s` is the return from bucket `s - 1` to bucket `s`.
    pub start_slot: usize,
    /// Offset into the flat value vector.
    pub start: usize,
    pub len: usize,
    /// Total slots of the parent day (for window tiling).
    pub day_slots: usize,
}

/// A return series: flat values plus day-segment structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries<F = Real> {
    pub clock: ClockSpec,
    pub stage: Stage,
    pub segments: Vec<SegmentMeta>,
    pub values: Vec<F>,
}

impl<F: Scalar> ReturnSeries<F> {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn segment_values(&self, i: usize) -> &[F] {
        let s = &self.segments[i];
        &self.values[s.start..s.start + s.len]
    }

    /// All segments as slices, the shape the pooled estimators take.
    pub fn slices(&self) -> Vec<&[F]> {
        (0..self.segments.len())
            .map(|i| self.segment_values(i))
            .collect()
    }

    /// Same segment structure, values mapped. The result is a derived
    /// quantity (e.g. absolute returns) and keeps the stage tag.
    pub fn mapped(&self, f: impl Fn(F) -> F) -> ReturnSeries<F> {
        ReturnSeries {
            clock: self.clock,
            stage: self.stage,
            segments: self.segments.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Number of distinct days with at least one value.
    pub fn day_count(&self) -> usize {
        let mut days: Vec<usize> = self.segments.iter().map(|s| s.day).collect();
        days.dedup();
        days.len()
    }
}

/// Log returns between consecutive buckets of each day.
pub fn log_returns<F: Scalar>(ps: &PriceSeries<F>) -> ReturnSeries<F> {
    let mut segments = Vec::new();
    let mut values = Vec::with_capacity(ps.n_buckets().saturating_sub(ps.days.len()));
    for (day, d) in ps.days.iter().enumerate() {
        if d.len < 2 {
            continue;
        }
        let start = values.len();
        let prices = &ps.log_price[d.start..d.start + d.len];
        for w in prices.windows(2) {
            values.push(w[1] - w[0]);
        }
        segments.push(SegmentMeta {
            day,
            start_slot: d.lead + 1,
            start,
            len: d.len - 1,
            day_slots: d.slots,
        });
    }
    ReturnSeries {
        clock: ps.clock,
        stage: Stage::Raw,
        segments,
        values,
    }
}

/// What normalization did to the series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormReport {
    /// Days dropped because their return stddev was zero.
    pub dropped_days: u32,
    /// Clock slots dropped because their cross-day typical magnitude was
    /// zero.
    pub dropped_slots: u32,
}

/// Divides each day's returns by that day's population stddev. Days with
/// zero stddev (e.g. a fully forward-filled day) are dropped and counted.
pub fn daily_normalize<F: Scalar>(
    rs: &ReturnSeries<F>,
) -> Result<(ReturnSeries<F>, NormReport), SeriesError> {
    if rs.stage != Stage::Raw {
        return Err(SeriesError::WrongStage {
            expected: Stage::Raw.name(),
            got: rs.stage.name(),
        });
    }
    let mut out = ReturnSeries {
        clock: rs.clock,
        stage: Stage::DailyNorm,
        segments: Vec::with_capacity(rs.segments.len()),
        values: Vec::with_capacity(rs.values.len()),
    };
    let mut report = NormReport::default();
    let mut i = 0;
    while i < rs.segments.len() {
        // Group this day's segments (raw input normally has one per day).
        let day = rs.segments[i].day;
        let mut j = i;
        while j < rs.segments.len() && rs.segments[j].day == day {
            j += 1;
        }
        let n: usize = (i..j).map(|k| rs.segments[k].len).sum();
        let nf = F::from_count(n);
        let s: F = (i..j).map(|k| sum(rs.segment_values(k))).sum();
        let m = s / nf;
        let ss: F = (i..j)
            .map(|k| sum_by(rs.segment_values(k), |x| (x - m) * (x - m)))
            .sum();
        let sigma = (ss / nf).sqrt();
        if sigma > F::zero() {
            for k in i..j {
                let seg = rs.segments[k];
                let start = out.values.len();
                out.values
                    .extend(rs.segment_values(k).iter().map(|&x| x / sigma));
                out.segments.push(SegmentMeta { start, ..seg });
            }
        } else {
            report.dropped_days += 1;
        }
        i = j;
    }
    Ok((out, report))
}

/// How the per-slot typical magnitude `v(slot)` is estimated across days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotNorm {
    /// Cross-day mean of `|r|` at the slot (the documented intent).
    MeanAbs,
    /// Cross-day mean of the signed return at the slot (kept for
    /// comparison; can be negative).
    SignedMean,
}

/// Divides each value by its slot's cross-day typical magnitude. Slots
/// whose magnitude is exactly zero are dropped, splitting the day segments
/// around them. Clock series only.
pub fn slot_normalize<F: Scalar>(
    rs: &ReturnSeries<F>,
    variant: SlotNorm,
) -> Result<(ReturnSeries<F>, NormReport), SeriesError> {
    if !rs.clock.is_clock() {
        return Err(SeriesError::NotClock);
    }
    if rs.stage != Stage::DailyNorm {
        return Err(SeriesError::WrongStage {
            expected: Stage::DailyNorm.name(),
            got: rs.stage.name(),
        });
    }
    let slots = rs.segments.iter().map(|s| s.day_slots).max().unwrap_or(0);
    let mut acc = vec![F::zero(); slots];
    let mut cnt = vec![0u32; slots];
    for (k, seg) in rs.segments.iter().enumerate() {
        for (off, &x) in rs.segment_values(k).iter().enumerate() {
            let slot = seg.start_slot + off;
            acc[slot] += match variant {
                SlotNorm::MeanAbs => x.abs(),
                SlotNorm::SignedMean => x,
            };
            cnt[slot] += 1;
        }
    }
    let v: Vec<Option<F>> = acc
        .iter()
        .zip(&cnt)
        .map(|(&a, &c)| (c > 0).then(|| a / F::from_f64_lossy(c as f64)))
        .collect();

    let mut out = ReturnSeries {
        clock: rs.clock,
        stage: Stage::FullNorm,
        segments: Vec::with_capacity(rs.segments.len()),
        values: Vec::with_capacity(rs.values.len()),
    };
    let mut dropped_slots: Vec<usize> = Vec::new();
    for (k, seg) in rs.segments.iter().enumerate() {
        let vals = rs.segment_values(k);
        let mut run_start: Option<usize> = None;
        for off in 0..vals.len() {
            let slot = seg.start_slot + off;
            let scale = v[slot].expect("slot with a value has a mean");
            if scale == F::zero() {
                if !dropped_slots.contains(&slot) {
                    dropped_slots.push(slot);
                }
                close_run(&mut out, seg, vals, &v, &mut run_start, off);
                continue;
            }
            if run_start.is_none() {
                run_start = Some(off);
            }
        }
        close_run(&mut out, seg, vals, &v, &mut run_start, vals.len());
    }
    Ok((
        out,
        NormReport {
            dropped_days: 0,
            dropped_slots: dropped_slots.len() as u32,
        },
    ))
}

fn close_run<F: Scalar>(
    out: &mut ReturnSeries<F>,
    seg: &SegmentMeta,
    vals: &[F],
    v: &[Option<F>],
    run_start: &mut Option<usize>,
    end: usize,
) {
    let Some(from) = run_start.take() else {
        return;
    };
    if end == from {
        return;
    }
    let start = out.values.len();
    for (off, &x) in vals[from..end].iter().enumerate() {
        let slot = seg.start_slot + from + off;
        out.values.push(x / v[slot].expect("defined"));
    }
    out.segments.push(SegmentMeta {
        day: seg.day,
        start_slot: seg.start_slot + from,
        start,
        len: end - from,
        day_slots: seg.day_slots,
    });
}

/// Full normalization pipeline: daily stddev, then (clock series only) the
/// per-slot magnitude. Event series stop at [`Stage::DailyNorm`].
pub fn normalize_returns<F: Scalar>(
    rs: &ReturnSeries<F>,
    variant: SlotNorm,
) -> Result<(ReturnSeries<F>, NormReport), SeriesError> {
    let (daily, mut report) = daily_normalize(rs)?;
    if !rs.clock.is_clock() {
        return Ok((daily, report));
    }
    let (full, slot_report) = slot_normalize(&daily, variant)?;
    report.dropped_slots = slot_report.dropped_slots;
    Ok((full, report))
}

// ===== Export =====

/// Writes a return series as `symbol,clock_kind,scale,day,bucket,value`
/// rows. Values round-trip exactly (shortest-round-trip float formatting).
pub fn export_returns_csv<F: Scalar>(
    rs: &ReturnSeries<F>,
    symbol: &str,
    writer: impl std::io::Write,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "symbol,clock_kind,scale,day,bucket,value")?;
    let kind = rs.clock.kind_str();
    let scale = rs.clock.scale();
    for (k, seg) in rs.segments.iter().enumerate() {
        for (off, x) in rs.segment_values(k).iter().enumerate() {
            writeln!(
                w,
                "{symbol},{kind},{scale},{},{},{x}",
                seg.day,
                seg.start_slot + off
            )?;
        }
    }
    w.flush()
}

/// Reads a single-symbol return series back from the export format.
/// Segment structure is reconstructed from day/bucket adjacency; the stage
/// tag is not part of the format, so the result is marked [`Stage::Raw`].
/// Returns the symbol name alongside the series.
pub fn import_returns_csv<F: Scalar>(
    reader: impl std::io::BufRead,
) -> Result<(String, ReturnSeries<F>), SeriesError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| SeriesError::BadRow(e.to_string()))?
        .ok_or_else(|| SeriesError::BadRow("empty input".into()))?;
    if header.trim_end() != "symbol,clock_kind,scale,day,bucket,value" {
        return Err(SeriesError::BadRow(format!("bad header {header:?}")));
    }
    let mut symbol: Option<String> = None;
    let mut clock: Option<ClockSpec> = None;
    let mut rs = ReturnSeries {
        clock: ClockSpec::Event { n: 1 },
        stage: Stage::Raw,
        segments: Vec::new(),
        values: Vec::new(),
    };
    for line in lines {
        let line = line.map_err(|e| SeriesError::BadRow(e.to_string()))?;
        let row = line.trim_end_matches(['\r', '\n']);
        if row.is_empty() {
            continue;
        }
        let mut f = row.split(',');
        let (Some(sym), Some(kind), Some(scale), Some(day), Some(bucket), Some(value)) = (
            f.next(),
            f.next(),
            f.next(),
            f.next(),
            f.next(),
            f.next(),
        ) else {
            return Err(SeriesError::BadRow(row.into()));
        };
        let scale: i64 = scale
            .parse()
            .map_err(|_| SeriesError::BadRow(row.into()))?;
        let this_clock = match kind {
            "clock" => ClockSpec::Clock { dt_ns: scale },
            "event" => ClockSpec::Event { n: scale as u32 },
            _ => return Err(SeriesError::BadRow(row.into())),
        };
        match (&symbol, &clock) {
            (None, _) => {
                symbol = Some(sym.to_string());
                clock = Some(this_clock);
                rs.clock = this_clock;
            }
            (Some(s), Some(c)) if s == sym && *c == this_clock => {}
            _ => {
                return Err(SeriesError::BadRow(format!(
                    "mixed symbols or clocks at {row:?}"
                )))
            }
        }
        let day: usize = day.parse().map_err(|_| SeriesError::BadRow(row.into()))?;
        let slot: usize = bucket
            .parse()
            .map_err(|_| SeriesError::BadRow(row.into()))?;
        let value: f64 = value
            .parse()
            .map_err(|_| SeriesError::BadRow(row.into()))?;
        let value = F::from_f64_lossy(value);
        let extend = match rs.segments.last() {
            Some(seg) => seg.day == day && seg.start_slot + seg.len == slot,
            None => false,
        };
        if extend {
            let seg = rs.segments.last_mut().expect("nonempty");
            seg.len += 1;
        } else {
            rs.segments.push(SegmentMeta {
                day,
                start_slot: slot,
                start: rs.values.len(),
                len: 1,
                day_slots: 0,
            });
        }
        rs.values.push(value);
    }
    // Slot capacity is not part of the format; the best reconstruction is
    // the day's last occupied slot.
    let mut max_slot = std::collections::BTreeMap::new();
    for seg in &rs.segments {
        let end = seg.start_slot + seg.len;
        max_slot
            .entry(seg.day)
            .and_modify(|m: &mut usize| *m = (*m).max(end))
            .or_insert(end);
    }
    for seg in &mut rs.segments {
        seg.day_slots = max_slot[&seg.day];
    }
    Ok((symbol.unwrap_or_default(), rs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{SessionCalendar, SymbolTape, Trade};
    use crate::{NS_PER_DAY, NS_PER_MIN};

    const DAY0: i64 = 19_100; // a weekday

    fn cal(days: usize, session_minutes: i64) -> SessionCalendar {
        let open = crate::tape::DEFAULT_OPEN_NS;
        SessionCalendar::new(
            open,
            open + session_minutes * NS_PER_MIN,
            (0..days as i64).map(|i| DAY0 + i).collect(),
        )
        .unwrap()
    }

    fn trade_at(day: i64, offset_ns: i64, price: f64, size: u32) -> Trade {
        Trade::new(
            day * NS_PER_DAY + crate::tape::DEFAULT_OPEN_NS + offset_ns,
            price,
            size,
        )
    }

    fn make_test_sym(trades: Vec<Trade>) -> SymbolTape {
        SymbolTape {
            symbol: "T".into(),
            trades,
        }
    }

    #[test]
    fn clock_buckets_take_last_trade_and_forward_fill() {
        // 5-minute session, 1-minute buckets. Trades at 0:10 ($100) and
        // 3:20 ($101): bucket prices 100, 100, 100, 101, 101.
        let sym = make_test_sym(vec![
            trade_at(DAY0, 10 * crate::NS_PER_SEC, 100.0, 7),
            trade_at(DAY0, 200 * crate::NS_PER_SEC, 101.0, 3),
        ]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 5),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        let expected: Vec<f64> = [100.0f64, 100.0, 100.0, 101.0, 101.0]
            .iter()
            .map(|p| p.ln())
            .collect();
        assert_eq!(ps.day_log_prices(0), &expected[..]);
        assert_eq!(ps.days[0].lead, 0);
        assert_eq!(ps.volume, vec![7, 0, 0, 3, 0]);
        assert_eq!(ps.trade_count, vec![1, 0, 0, 1, 0]);
        assert_eq!(ps.skipped_trades, 0);
    }

    #[test]
    fn clock_buckets_before_first_trade_are_absent() {
        let sym = make_test_sym(vec![trade_at(DAY0, 2 * NS_PER_MIN + 1, 50.0, 1)]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 5),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        assert_eq!(ps.days[0].lead, 2);
        assert_eq!(ps.days[0].len, 3);
        assert_eq!(ps.days[0].slots, 5);
    }

    #[test]
    fn clock_trailing_remainder_is_dropped_whole() {
        // 390-minute session, 50-minute buckets: 7 buckets cover 350
        // minutes; a trade in the last 40 minutes is dropped.
        let sym = make_test_sym(vec![
            trade_at(DAY0, 0, 100.0, 1),
            trade_at(DAY0, 355 * NS_PER_MIN, 200.0, 1),
        ]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 390),
            ClockSpec::minutes(50),
            BuildOptions::default(),
        )
        .unwrap();
        assert_eq!(ps.days[0].slots, 7);
        assert_eq!(ps.days[0].len, 7);
        assert_eq!(ps.skipped_trades, 1);
        // All buckets fill from the single surviving trade.
        assert!(ps
            .day_log_prices(0)
            .iter()
            .all(|&x| (x - 100.0f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn event_buckets_group_n_trades_and_drop_partial() {
        let prices = [100.0, 101.0, 102.0, 103.0, 104.0];
        let sym = make_test_sym(
            prices
                .iter()
                .enumerate()
                .map(|(i, &p)| trade_at(DAY0, i as i64, p, 10))
                .collect(),
        );
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 390),
            ClockSpec::trades(2),
            BuildOptions::default(),
        )
        .unwrap();
        // Groups (100,101) and (102,103); the 104 print is a partial group.
        let expected = [101.0f64.ln(), 103.0f64.ln()];
        assert_eq!(ps.day_log_prices(0), &expected[..]);
        assert_eq!(ps.volume, vec![20, 20]);
        assert_eq!(ps.skipped_trades, 1);
        assert_eq!(ps.days[0].lead, 0);
    }

    #[test]
    fn ohlc_tracks_extremes_within_bucket() {
        let sym = make_test_sym(vec![
            trade_at(DAY0, 0, 100.0, 1),
            trade_at(DAY0, 1, 105.0, 1),
            trade_at(DAY0, 2, 96.0, 1),
            trade_at(DAY0, 3, 100.0, 1),
        ]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 5),
            ClockSpec::trades(4),
            BuildOptions { with_ohlc: true },
        )
        .unwrap();
        let ohlc = ps.ohlc.as_ref().unwrap();
        assert_eq!(ohlc.open[0], 100.0f64.ln());
        assert_eq!(ohlc.high[0], 105.0f64.ln());
        assert_eq!(ohlc.low[0], 96.0f64.ln());
        assert_eq!(ohlc.close[0], 100.0f64.ln());
    }

    #[test]
    fn returns_never_span_days_and_fills_are_zero() {
        let sym = make_test_sym(vec![
            trade_at(DAY0, 10, 100.0, 1),
            trade_at(DAY0, 3 * NS_PER_MIN + 20, 101.0, 1),
            trade_at(DAY0 + 1, 10, 200.0, 1),
            trade_at(DAY0 + 1, 1 * NS_PER_MIN, 201.0, 1),
        ]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(2, 5),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        assert_eq!(rs.segments.len(), 2);
        let d0 = rs.segment_values(0);
        assert_eq!(d0.len(), 4);
        assert_eq!(d0[0], 0.0); // fill
        assert_eq!(d0[1], 0.0); // fill
        assert!((d0[2] - (101.0f64.ln() - 100.0f64.ln())).abs() < 1e-15);
        assert_eq!(d0[3], 0.0);
        // Day 2 returns exist but no pair (200 vs 101) crosses the boundary.
        let d1 = rs.segment_values(1);
        assert_eq!(d1.len(), 4);
        assert!((d1[0] - (201.0f64.ln() - 200.0f64.ln())).abs() < 1e-15);
        assert_eq!(rs.segments[0].start_slot, 1);
    }

    #[test]
    fn event_returns_telescope_within_each_day() {
        let mut trades = Vec::new();
        for i in 0..13 {
            trades.push(trade_at(DAY0, i, 100.0 + (i % 5) as f64, 1));
        }
        let sym = make_test_sym(trades);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 390),
            ClockSpec::trades(3),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        let total: f64 = rs.segment_values(0).iter().sum();
        let prices = ps.day_log_prices(0);
        let expected = prices[prices.len() - 1] - prices[0];
        assert!((total - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn daily_normalize_unit_stddev_and_drops_flat_days() {
        // Day 1: returns ±1 alternating (stddev 1 already). Day 2: single
        // trade, fully forward-filled, all-zero returns -> dropped.
        let mut trades = vec![
            trade_at(DAY0, 0, 100.0, 1),
            trade_at(DAY0, NS_PER_MIN, 110.0, 1),
            trade_at(DAY0, 2 * NS_PER_MIN, 100.0, 1),
            trade_at(DAY0, 3 * NS_PER_MIN, 110.0, 1),
            trade_at(DAY0, 4 * NS_PER_MIN, 100.0, 1),
        ];
        trades.push(trade_at(DAY0 + 1, 0, 50.0, 1));
        let sym = make_test_sym(trades);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(2, 5),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        assert_eq!(rs.segments.len(), 2);
        let (norm, report) = daily_normalize(&rs).unwrap();
        assert_eq!(report.dropped_days, 1);
        assert_eq!(norm.segments.len(), 1);
        let vals = norm.segment_values(0);
        let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 =
            vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "stddev {}", var.sqrt());
    }

    #[test]
    fn slot_normalize_scales_by_cross_day_magnitude() {
        // Two days whose log-return patterns are exact multiples of each
        // other: after the daily stage both days are identical, so v(slot)
        // equals each day's |value| and the full stage maps everything to
        // magnitude 1.
        let pattern = [0.0, 0.01, 0.0, 0.02, 0.0];
        let mk_day = |day: i64, scale: f64| -> Vec<Trade> {
            pattern
                .iter()
                .enumerate()
                .map(|(i, &lp)| {
                    trade_at(day, i as i64 * NS_PER_MIN, 100.0 * (scale * lp).exp(), 1)
                })
                .collect()
        };
        let mut trades = mk_day(DAY0, 1.0);
        trades.extend(mk_day(DAY0 + 1, 2.0));
        let sym = make_test_sym(trades);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(2, 5),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        let (full, report) = normalize_returns(&rs, SlotNorm::MeanAbs).unwrap();
        assert_eq!(report.dropped_days, 0);
        assert_eq!(report.dropped_slots, 0);
        assert_eq!(full.stage, Stage::FullNorm);
        for k in 0..full.segments.len() {
            for &x in full.segment_values(k) {
                assert!((x.abs() - 1.0).abs() < 1e-9, "normalized magnitude {x}");
            }
        }
    }

    #[test]
    fn slot_normalize_drops_zero_slots_and_splits_segments() {
        // One day: returns [r, 0, r] after filling; slot 2's cross-day mean
        // |r| is 0, so it is dropped and the day splits into two segments.
        let sym = make_test_sym(vec![
            trade_at(DAY0, 0, 100.0, 1),
            trade_at(DAY0, NS_PER_MIN, 101.0, 1),
            trade_at(DAY0, 3 * NS_PER_MIN, 102.0, 1),
        ]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 4),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        assert_eq!(rs.segment_values(0).len(), 3);
        assert_eq!(rs.segment_values(0)[1], 0.0);
        let (full, report) = normalize_returns(&rs, SlotNorm::MeanAbs).unwrap();
        assert_eq!(report.dropped_slots, 1);
        assert_eq!(full.segments.len(), 2);
        assert_eq!(full.segments[0].len, 1);
        assert_eq!(full.segments[1].len, 1);
        assert_eq!(full.segments[1].start_slot, 3);
    }

    #[test]
    fn event_series_normalization_stops_at_daily_stage() {
        let sym = make_test_sym(
            (0..10)
                .map(|i| trade_at(DAY0, i, 100.0 + (i % 3) as f64, 1))
                .collect(),
        );
        let ps: PriceSeries = build_series(
            &sym,
            &cal(1, 390),
            ClockSpec::trades(1),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        let (norm, _) = normalize_returns(&rs, SlotNorm::MeanAbs).unwrap();
        assert_eq!(norm.stage, Stage::DailyNorm);
    }

    #[test]
    fn export_import_round_trip() {
        let sym = make_test_sym(vec![
            trade_at(DAY0, 0, 100.0, 1),
            trade_at(DAY0, NS_PER_MIN, 100.37, 1),
            trade_at(DAY0, 2 * NS_PER_MIN, 99.91, 1),
            trade_at(DAY0 + 1, 0, 101.0, 1),
            trade_at(DAY0 + 1, 2 * NS_PER_MIN, 101.73, 1),
        ]);
        let ps: PriceSeries = build_series(
            &sym,
            &cal(2, 3),
            ClockSpec::minutes(1),
            BuildOptions::default(),
        )
        .unwrap();
        let rs = log_returns(&ps);
        let mut buf = Vec::new();
        export_returns_csv(&rs, "T", &mut buf).unwrap();
        let (symbol, back): (String, ReturnSeries) =
            import_returns_csv(&buf[..]).unwrap();
        assert_eq!(symbol, "T");
        assert_eq!(back.values, rs.values);
        assert_eq!(back.clock, rs.clock);
        let seg_shape =
            |r: &ReturnSeries| -> Vec<(usize, usize, usize)> {
                r.segments
                    .iter()
                    .map(|s| (s.day, s.start_slot, s.len))
                    .collect()
            };
        assert_eq!(seg_shape(&back), seg_shape(&rs));
    }

    #[test]
    fn bad_scales_are_rejected() {
        let sym = make_test_sym(vec![trade_at(DAY0, 0, 100.0, 1)]);
        let c = cal(1, 5);
        assert_eq!(
            build_series::<f64>(&sym, &c, ClockSpec::minutes(6), BuildOptions::default())
                .unwrap_err(),
            SeriesError::BadScale
        );
        assert_eq!(
            build_series::<f64>(&sym, &c, ClockSpec::trades(0), BuildOptions::default())
                .unwrap_err(),
            SeriesError::BadScale
        );
    }
}

//! The eleven-test battery over a single symbol's tape.
//!
//! Each test yields one or more [`LagCurve`]s: a statistic sampled on an
//! integer grid (lags, bucket scales, quantile levels, or a window size),
//! computed once per clock family. Curve ids are stable strings like
//! `f06.absacf.event.raw`, so null bands, report files, and verdict rules
//! can all key on them.
//!
//! The battery runs on raw log returns by default. The conditional-tail
//! test ([`FactId::ConditionalHeavyTails`]) normalizes internally, and the
//! whole battery can be pointed at the normalized series with
//! [`FactsConfig::use_normalized`].

pub mod verdict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::series::{
    build_series, daily_normalize, log_returns, normalize_returns, BuildOptions, ClockKind,
    ClockSpec, PriceSeries, ReturnSeries, SeriesError, SlotNorm,
};
use crate::stats::{self, PowerLawFit};
use crate::tape::{SessionCalendar, SymbolTape};

/// One of the eleven stylized-fact tests, numbered 1 through 11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactId {
    LinearAcf = 1,
    HeavyTails = 2,
    GainLossAsymmetry = 3,
    AggregationalGaussianity = 4,
    Intermittency = 5,
    VolatilityClustering = 6,
    ConditionalHeavyTails = 7,
    SlowAbsAcfDecay = 8,
    LeverageEffect = 9,
    VolumeVolatilityCorrelation = 10,
    TimescaleAsymmetry = 11,
}

impl FactId {
    pub const ALL: [FactId; 11] = [
        FactId::LinearAcf,
        FactId::HeavyTails,
        FactId::GainLossAsymmetry,
        FactId::AggregationalGaussianity,
        FactId::Intermittency,
        FactId::VolatilityClustering,
        FactId::ConditionalHeavyTails,
        FactId::SlowAbsAcfDecay,
        FactId::LeverageEffect,
        FactId::VolumeVolatilityCorrelation,
        FactId::TimescaleAsymmetry,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<FactId> {
        FactId::ALL.get(n.wrapping_sub(1) as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FactId::LinearAcf => "no_linear_autocorrelation",
            FactId::HeavyTails => "heavy_tails",
            FactId::GainLossAsymmetry => "gain_loss_asymmetry",
            FactId::AggregationalGaussianity => "aggregational_gaussianity",
            FactId::Intermittency => "intermittency",
            FactId::VolatilityClustering => "volatility_clustering",
            FactId::ConditionalHeavyTails => "conditional_heavy_tails",
            FactId::SlowAbsAcfDecay => "slow_abs_acf_decay",
            FactId::LeverageEffect => "leverage_effect",
            FactId::VolumeVolatilityCorrelation => "volume_volatility_correlation",
            FactId::TimescaleAsymmetry => "timescale_asymmetry",
        }
    }
}

/// A subset of the eleven facts, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactSet(u16);

impl FactSet {
    pub const fn empty() -> FactSet {
        FactSet(0)
    }

    pub fn all() -> FactSet {
        FactSet::from_facts(&FactId::ALL)
    }

    pub fn from_facts(facts: &[FactId]) -> FactSet {
        let mut s = FactSet::empty();
        for &f in facts {
            s = s.with(f);
        }
        s
    }

    /// Parses fact numbers 1..=11; unknown numbers are reported back.
    pub fn from_numbers(ns: &[u8]) -> Result<FactSet, FactsError> {
        let mut s = FactSet::empty();
        for &n in ns {
            match FactId::from_number(n) {
                Some(f) => s = s.with(f),
                None => {
                    return Err(FactsError::Config(format!(
                        "fact number {n} out of range 1..=11"
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn with(self, f: FactId) -> FactSet {
        FactSet(self.0 | 1 << f.number())
    }

    pub fn contains(self, f: FactId) -> bool {
        self.0 & (1 << f.number()) != 0
    }

    pub fn any_of(self, fs: &[FactId]) -> bool {
        fs.iter().any(|&f| self.contains(f))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FactId> {
        FactId::ALL.into_iter().filter(move |&f| self.contains(f))
    }
}

/// What the integers in a curve's grid measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridUnit {
    /// Lag in buckets of the curve's `scale`.
    Lag,
    /// Bucket length in nanoseconds (scale-sweep curves, clock time).
    DurationNs,
    /// Bucket length in trades (scale-sweep curves, event time).
    Trades,
    /// Quantile level in basis points (9900 = 0.99).
    QuantileBp,
    /// Window length in buckets of the curve's `scale`.
    Window,
}

/// One named statistic sampled on an integer grid.
///
/// `values[i]` is `None` where the statistic is undefined (too few
/// observations, zero variance); `n_obs[i]` still reports the sample size
/// that was available at that grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagCurve<F> {
    pub stat_id: String,
    pub symbol: String,
    pub fact: u8,
    pub clock_kind: ClockKind,
    /// Base bucket scale the statistic is computed on (nanoseconds or
    /// trades per the clock kind); 0 when the grid itself sweeps scales.
    pub scale: i64,
    pub grid_unit: GridUnit,
    pub grid: Vec<i64>,
    pub values: Vec<Option<F>>,
    pub n_obs: Vec<u64>,
}

impl<F: Scalar> LagCurve<F> {
    pub fn at(&self, g: i64) -> Option<F> {
        let i = self.grid.iter().position(|&x| x == g)?;
        self.values[i]
    }

    pub fn n_at(&self, g: i64) -> Option<u64> {
        let i = self.grid.iter().position(|&x| x == g)?;
        Some(self.n_obs[i])
    }
}

/// A power-law fit attached to one of the emitted curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitEntry<F> {
    pub stat_id: String,
    pub fact: u8,
    pub clock_kind: ClockKind,
    /// Id of the curve the fit was run over.
    pub source_stat: String,
    /// `None` when fewer than two positive points were available.
    pub fit: Option<PowerLawFit<F>>,
}

/// Volatility proxy for the lead-lag correlation tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolProxy {
    Abs,
    Squared,
}

/// What counts as volume in the volume-volatility test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Shares,
    Trades,
}

/// Fine-scale volatility measure inside each coarse bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineVol {
    /// Mean absolute fine return over the coarse bucket's fine slots.
    MeanAbs,
    /// Range-based estimate from the coarse bucket's own OHLC.
    RogersSatchell,
}

/// Everything the battery needs to know besides the tape itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FactsConfig {
    pub enabled: FactSet,
    /// Base clock bucket, nanoseconds.
    pub clock_base_ns: i64,
    /// Base event bucket, trades.
    pub event_base: u32,
    pub acf_max_lag: usize,
    /// Bucket scales for the kurtosis/skewness sweeps, finest first.
    pub clock_kurt_scales_ns: Vec<i64>,
    pub event_kurt_scales: Vec<u32>,
    /// Quantile levels for the loss-fraction curve, basis points.
    pub loss_quantiles_bp: Vec<i64>,
    /// Exceedance count below which a loss fraction is treated as
    /// undecidable by the verdict rules.
    pub min_exceedances: u64,
    /// Absolute-return quantile defining an extreme return.
    pub extreme_quantile: f64,
    /// Window lengths, in base buckets, for extreme-count dispersion.
    pub clock_extreme_window: usize,
    pub event_extreme_window: usize,
    /// Lag range of the power-law fit over the absolute-return ACF.
    pub fit_lo: i64,
    pub fit_hi: i64,
    pub leverage_max_lag: i64,
    pub volume_max_lag: i64,
    /// Coarse bucket for the timescale-asymmetry test.
    pub asym_coarse_clock_ns: i64,
    pub asym_coarse_event: u32,
    pub asym_max_lag: i64,
    pub slot_norm: SlotNorm,
    /// Run the battery on normalized instead of raw returns.
    pub use_normalized: bool,
    pub vol_proxy: VolProxy,
    pub volume_kind: VolumeKind,
    pub fine_vol: FineVol,
}

impl Default for FactsConfig {
    fn default() -> Self {
        FactsConfig {
            enabled: FactSet::all(),
            clock_base_ns: crate::NS_PER_MIN,
            event_base: 1,
            acf_max_lag: 120,
            clock_kurt_scales_ns: [1, 5, 10, 15, 20, 30, 60]
                .iter()
                .map(|m| m * crate::NS_PER_MIN)
                .collect(),
            event_kurt_scales: vec![1, 10, 100, 1000, 2500],
            loss_quantiles_bp: vec![9000, 9500, 9900],
            min_exceedances: 20,
            extreme_quantile: 0.99,
            clock_extreme_window: 30,
            event_extreme_window: 1000,
            fit_lo: 1,
            fit_hi: 100,
            leverage_max_lag: 30,
            volume_max_lag: 30,
            asym_coarse_clock_ns: 30 * crate::NS_PER_MIN,
            asym_coarse_event: 1000,
            asym_max_lag: 10,
            slot_norm: SlotNorm::MeanAbs,
            use_normalized: false,
            vol_proxy: VolProxy::Abs,
            volume_kind: VolumeKind::Shares,
            fine_vol: FineVol::MeanAbs,
        }
    }
}

impl FactsConfig {
    /// Collects every problem with the config instead of stopping at the
    /// first, so a caller can report them all at once.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        check(self.clock_base_ns > 0, "clock_base_ns must be positive");
        check(self.event_base >= 1, "event_base must be at least 1");
        check(self.acf_max_lag >= 1, "acf_max_lag must be at least 1");
        check(
            !self.clock_kurt_scales_ns.is_empty()
                && self.clock_kurt_scales_ns.windows(2).all(|w| w[0] < w[1])
                && self.clock_kurt_scales_ns[0] > 0,
            "clock_kurt_scales_ns must be positive and strictly increasing",
        );
        check(
            !self.event_kurt_scales.is_empty()
                && self.event_kurt_scales.windows(2).all(|w| w[0] < w[1])
                && self.event_kurt_scales[0] >= 1,
            "event_kurt_scales must be positive and strictly increasing",
        );
        check(
            !self.loss_quantiles_bp.is_empty()
                && self
                    .loss_quantiles_bp
                    .iter()
                    .all(|&bp| bp > 5000 && bp < 10000)
                && self.loss_quantiles_bp.windows(2).all(|w| w[0] < w[1]),
            "loss_quantiles_bp must be strictly increasing within (5000, 10000)",
        );
        check(
            self.extreme_quantile > 0.0 && self.extreme_quantile < 1.0,
            "extreme_quantile must lie in (0, 1)",
        );
        check(
            self.clock_extreme_window >= 1 && self.event_extreme_window >= 1,
            "extreme windows must be at least 1 bucket",
        );
        check(
            self.fit_lo >= 1 && self.fit_hi > self.fit_lo,
            "fit range must satisfy 1 <= fit_lo < fit_hi",
        );
        check(
            self.fit_hi <= self.acf_max_lag as i64,
            "fit_hi must not exceed acf_max_lag",
        );
        check(self.leverage_max_lag >= 1, "leverage_max_lag must be at least 1");
        check(self.volume_max_lag >= 1, "volume_max_lag must be at least 1");
        check(self.asym_max_lag >= 1, "asym_max_lag must be at least 1");
        check(
            self.asym_coarse_clock_ns > self.clock_base_ns
                && self.asym_coarse_clock_ns % self.clock_base_ns == 0,
            "asym_coarse_clock_ns must be a multiple (>1x) of clock_base_ns",
        );
        check(
            self.asym_coarse_event > self.event_base
                && self.asym_coarse_event % self.event_base == 0,
            "asym_coarse_event must be a multiple (>1x) of event_base",
        );
        errs
    }

    /// Stage tag the battery curves carry: `raw` or `norm`.
    pub fn battery_stage(&self) -> &'static str {
        if self.use_normalized {
            "norm"
        } else {
            "raw"
        }
    }

    pub fn base_spec(&self, kind: ClockKind) -> ClockSpec {
        match kind {
            ClockKind::Clock => ClockSpec::Clock {
                dt_ns: self.clock_base_ns,
            },
            ClockKind::Event => ClockSpec::Event { n: self.event_base },
        }
    }

    pub fn coarse_spec(&self, kind: ClockKind) -> ClockSpec {
        match kind {
            ClockKind::Clock => ClockSpec::Clock {
                dt_ns: self.asym_coarse_clock_ns,
            },
            ClockKind::Event => ClockSpec::Event {
                n: self.asym_coarse_event,
            },
        }
    }

    pub fn extreme_window(&self, kind: ClockKind) -> usize {
        match kind {
            ClockKind::Clock => self.clock_extreme_window,
            ClockKind::Event => self.event_extreme_window,
        }
    }
}

#[derive(Debug, Error)]
pub enum FactsError {
    #[error("invalid battery config: {0}")]
    Config(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Bookkeeping the battery reports alongside its curves.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AnalysisNotes {
    pub clock_skipped_trades: u64,
    pub event_skipped_trades: u64,
    /// Days dropped by normalization (zero daily variance), both clocks.
    pub norm_dropped_days: u32,
    /// Clock slots dropped by normalization (zero cross-day magnitude).
    pub norm_dropped_slots: u32,
}

/// Full battery output for one symbol: every curve, every fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolAnalysis<F> {
    pub symbol: String,
    pub curves: Vec<LagCurve<F>>,
    pub fits: Vec<FitEntry<F>>,
    pub notes: AnalysisNotes,
}

impl<F: Scalar> SymbolAnalysis<F> {
    pub fn curve(&self, stat_id: &str) -> Option<&LagCurve<F>> {
        self.curves.iter().find(|c| c.stat_id == stat_id)
    }

    pub fn fit_entry(&self, stat_id: &str) -> Option<&FitEntry<F>> {
        self.fits.iter().find(|f| f.stat_id == stat_id)
    }
}

/// Builds the stable id of a battery statistic.
pub fn stat_id(fact: u8, stat: &str, kind: ClockKind, stage: &str) -> String {
    format!("f{fact:02}.{stat}.{}.{stage}", kind.as_str())
}

/// Runs every enabled test on one symbol, on both clocks.
pub fn analyze_symbol<F: Scalar>(
    sym: &SymbolTape,
    cal: &SessionCalendar,
    cfg: &FactsConfig,
) -> Result<SymbolAnalysis<F>, FactsError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(FactsError::Config(errs.join("; ")));
    }

    let mut out = SymbolAnalysis {
        symbol: sym.symbol.clone(),
        curves: Vec::new(),
        fits: Vec::new(),
        notes: AnalysisNotes::default(),
    };
    for kind in [ClockKind::Clock, ClockKind::Event] {
        analyze_one_clock(sym, cal, cfg, kind, &mut out)?;
    }
    out.curves.sort_by(|a, b| a.stat_id.cmp(&b.stat_id));
    out.fits.sort_by(|a, b| a.stat_id.cmp(&b.stat_id));
    Ok(out)
}

fn analyze_one_clock<F: Scalar>(
    sym: &SymbolTape,
    cal: &SessionCalendar,
    cfg: &FactsConfig,
    kind: ClockKind,
    out: &mut SymbolAnalysis<F>,
) -> Result<(), FactsError> {
    use FactId::*;

    let on = cfg.enabled;
    if on.is_empty() {
        return Ok(());
    }
    let stage = cfg.battery_stage();
    let base = cfg.base_spec(kind);
    let base_scale = base.scale();

    let ps: PriceSeries<F> = build_series(sym, cal, base, BuildOptions::default())?;
    match kind {
        ClockKind::Clock => out.notes.clock_skipped_trades = ps.skipped_trades,
        ClockKind::Event => out.notes.event_skipped_trades = ps.skipped_trades,
    }

    let raw = log_returns(&ps);
    let battery = if cfg.use_normalized {
        let (norm, report) = match kind {
            ClockKind::Clock => normalize_returns(&raw, cfg.slot_norm)?,
            ClockKind::Event => daily_normalize(&raw)?,
        };
        out.notes.norm_dropped_days += report.dropped_days;
        out.notes.norm_dropped_slots += report.dropped_slots;
        norm
    } else {
        raw
    };

    let needs_abs = on.any_of(&[
        GainLossAsymmetry,
        Intermittency,
        VolatilityClustering,
        ConditionalHeavyTails,
        SlowAbsAcfDecay,
        LeverageEffect,
        VolumeVolatilityCorrelation,
        TimescaleAsymmetry,
    ]);
    let battery_abs = if needs_abs {
        Some(battery.mapped(|x| x.abs()))
    } else {
        None
    };

    let push = |out: &mut SymbolAnalysis<F>,
                    fact: u8,
                    stat: &str,
                    st: &str,
                    scale: i64,
                    unit: GridUnit,
                    data: (Vec<i64>, Vec<Option<F>>, Vec<u64>)| {
        out.curves.push(LagCurve {
            stat_id: stat_id(fact, stat, kind, st),
            symbol: out.symbol.clone(),
            fact,
            clock_kind: kind,
            scale,
            grid_unit: unit,
            grid: data.0,
            values: data.1,
            n_obs: data.2,
        });
    };

    if on.contains(LinearAcf) {
        let data = corr_curve(&battery, &battery, 1..=cfg.acf_max_lag as i64);
        push(out, 1, "acf", stage, base_scale, GridUnit::Lag, data);
    }

    let moments_raw = if on.any_of(&[HeavyTails, AggregationalGaussianity, ConditionalHeavyTails])
        || (on.contains(GainLossAsymmetry) && !cfg.use_normalized)
    {
        Some(moment_pass::<F>(sym, cal, cfg, kind, false)?)
    } else {
        None
    };
    let moments_norm = if on.contains(ConditionalHeavyTails)
        || (on.contains(GainLossAsymmetry) && cfg.use_normalized)
    {
        Some(moment_pass::<F>(sym, cal, cfg, kind, true)?)
    } else {
        None
    };
    let scale_unit = match kind {
        ClockKind::Clock => GridUnit::DurationNs,
        ClockKind::Event => GridUnit::Trades,
    };

    if on.any_of(&[HeavyTails, AggregationalGaussianity]) {
        let m = moments_raw.as_ref().unwrap();
        let data = (m.grid.clone(), m.kurt.clone(), m.n_obs.clone());
        push(out, 2, "kurt", "raw", 0, scale_unit, data);
    }
    if on.contains(ConditionalHeavyTails) {
        let m = moments_norm.as_ref().unwrap();
        let data = (m.grid.clone(), m.kurt.clone(), m.n_obs.clone());
        push(out, 7, "kurt", "norm", 0, scale_unit, data);
    }
    if on.contains(GainLossAsymmetry) {
        let m = if cfg.use_normalized {
            moments_norm.as_ref().unwrap()
        } else {
            moments_raw.as_ref().unwrap()
        };
        let data = (m.grid.clone(), m.skew.clone(), m.n_obs.clone());
        push(out, 3, "skew", stage, 0, scale_unit, data);

        let abs_vals = &battery_abs.as_ref().unwrap().values;
        let data = loss_curve(&battery, abs_vals, &cfg.loss_quantiles_bp);
        push(out, 3, "loss", stage, base_scale, GridUnit::QuantileBp, data);
    }

    if on.contains(Intermittency) {
        let abs = battery_abs.as_ref().unwrap();
        let window = cfg.extreme_window(kind);
        let cutoff = stats::quantile(&abs.values, cfg.extreme_quantile).ok();
        let (fano, n_windows, gap_kurt, n_gaps) = match cutoff {
            Some(c) => extreme_dispersion(abs, c, window),
            None => (None, 0, None, 0),
        };
        let w = window as i64;
        push(
            out,
            5,
            "fano",
            stage,
            base_scale,
            GridUnit::Window,
            (vec![w], vec![fano], vec![n_windows]),
        );
        push(
            out,
            5,
            "gapkurt",
            stage,
            base_scale,
            GridUnit::Window,
            (vec![w], vec![gap_kurt], vec![n_gaps]),
        );
    }

    if on.any_of(&[VolatilityClustering, SlowAbsAcfDecay]) {
        let abs = battery_abs.as_ref().unwrap();
        let data = corr_curve(abs, abs, 1..=cfg.acf_max_lag as i64);
        if on.contains(SlowAbsAcfDecay) {
            let fit = stats::loglog_fit(&data.0, &data.1, cfg.fit_lo, cfg.fit_hi).ok();
            out.fits.push(FitEntry {
                stat_id: stat_id(8, "fit", kind, stage),
                fact: 8,
                clock_kind: kind,
                source_stat: stat_id(6, "absacf", kind, stage),
                fit,
            });
        }
        push(out, 6, "absacf", stage, base_scale, GridUnit::Lag, data);
    }

    if on.contains(LeverageEffect) {
        let squared;
        let proxy = match cfg.vol_proxy {
            VolProxy::Abs => battery_abs.as_ref().unwrap(),
            VolProxy::Squared => {
                squared = battery.mapped(|x| x * x);
                &squared
            }
        };
        let data = corr_curve(&battery, proxy, -cfg.leverage_max_lag..=cfg.leverage_max_lag);
        push(out, 9, "lev", stage, base_scale, GridUnit::Lag, data);
    }

    if on.contains(VolumeVolatilityCorrelation) {
        let vol = volume_series(&ps, &battery, cfg.volume_kind);
        let abs = battery_abs.as_ref().unwrap();
        let data = corr_curve(&vol, abs, -cfg.volume_max_lag..=cfg.volume_max_lag);
        push(out, 10, "volvol", stage, base_scale, GridUnit::Lag, data);
        let data = corr_curve(&vol, &vol, 1..=cfg.volume_max_lag);
        push(out, 10, "volacf", stage, base_scale, GridUnit::Lag, data);
    }

    if on.contains(TimescaleAsymmetry) {
        let coarse_spec = cfg.coarse_spec(kind);
        let ratio = (coarse_spec.scale() / base_scale) as usize;
        let with_ohlc = cfg.fine_vol == FineVol::RogersSatchell;
        let coarse_ps: PriceSeries<F> =
            build_series(sym, cal, coarse_spec, BuildOptions { with_ohlc })?;
        let coarse_raw = log_returns(&coarse_ps);
        let coarse = if cfg.use_normalized {
            match kind {
                ClockKind::Clock => normalize_returns(&coarse_raw, cfg.slot_norm)?.0,
                ClockKind::Event => daily_normalize(&coarse_raw)?.0,
            }
        } else {
            coarse_raw
        };
        let abs = battery_abs.as_ref().unwrap();
        let tables = asymmetry_tables(abs, &coarse, &coarse_ps, ratio, cfg.fine_vol)?;
        let curves = asymmetry_from_tables(&tables, cfg.asym_max_lag);
        let coarse_scale = coarse_spec.scale();
        push(
            out,
            11,
            "asym_a",
            stage,
            coarse_scale,
            GridUnit::Lag,
            (curves.a_grid, curves.a_values, curves.a_n),
        );
        push(
            out,
            11,
            "asym_d",
            stage,
            coarse_scale,
            GridUnit::Lag,
            (curves.d_grid, curves.d_values, curves.d_n),
        );
    }

    Ok(())
}

/// Within-segment slice pairs for a cross-correlation at signed lag `tau`:
/// `x(t)` against `y(t + tau)`.
fn lag_pairs<'a, F: Scalar>(
    x: &'a ReturnSeries<F>,
    y: &'a ReturnSeries<F>,
    tau: i64,
) -> Vec<(&'a [F], &'a [F])> {
    debug_assert_eq!(x.segments.len(), y.segments.len());
    let t = tau.unsigned_abs() as usize;
    let mut pairs = Vec::with_capacity(x.segments.len());
    for (k, seg) in x.segments.iter().enumerate() {
        if seg.len <= t {
            continue;
        }
        let xs = x.segment_values(k);
        let ys = y.segment_values(k);
        let (a, b) = if tau >= 0 {
            (&xs[..seg.len - t], &ys[t..])
        } else {
            (&xs[t..], &ys[..seg.len - t])
        };
        pairs.push((a, b));
    }
    pairs
}

/// Pooled cross-correlation of `x(t)` with `y(t + tau)` over a lag grid.
/// Pairs never cross a segment boundary, so no correlation spans days.
fn corr_curve<F: Scalar>(
    x: &ReturnSeries<F>,
    y: &ReturnSeries<F>,
    lags: impl Iterator<Item = i64>,
) -> (Vec<i64>, Vec<Option<F>>, Vec<u64>) {
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut n_obs = Vec::new();
    for tau in lags {
        let pairs = lag_pairs(x, y, tau);
        let n: u64 = pairs.iter().map(|(a, _)| a.len() as u64).sum();
        grid.push(tau);
        values.push(stats::pooled_corr(&pairs).ok().map(|(c, _)| c));
        n_obs.push(n);
    }
    (grid, values, n_obs)
}

struct MomentPass<F> {
    grid: Vec<i64>,
    kurt: Vec<Option<F>>,
    skew: Vec<Option<F>>,
    n_obs: Vec<u64>,
}

/// Rebuilds the series at every scale in the sweep and takes pooled
/// moments of the (optionally normalized) returns.
fn moment_pass<F: Scalar>(
    sym: &SymbolTape,
    cal: &SessionCalendar,
    cfg: &FactsConfig,
    kind: ClockKind,
    normalized: bool,
) -> Result<MomentPass<F>, FactsError> {
    let specs: Vec<ClockSpec> = match kind {
        ClockKind::Clock => cfg
            .clock_kurt_scales_ns
            .iter()
            .map(|&dt_ns| ClockSpec::Clock { dt_ns })
            .collect(),
        ClockKind::Event => cfg
            .event_kurt_scales
            .iter()
            .map(|&n| ClockSpec::Event { n })
            .collect(),
    };
    let mut pass = MomentPass {
        grid: Vec::with_capacity(specs.len()),
        kurt: Vec::with_capacity(specs.len()),
        skew: Vec::with_capacity(specs.len()),
        n_obs: Vec::with_capacity(specs.len()),
    };
    for spec in specs {
        let ps: PriceSeries<F> = build_series(sym, cal, spec, BuildOptions::default())?;
        let rs = log_returns(&ps);
        let rs = if normalized {
            match kind {
                ClockKind::Clock => normalize_returns(&rs, cfg.slot_norm)?.0,
                ClockKind::Event => daily_normalize(&rs)?.0,
            }
        } else {
            rs
        };
        pass.grid.push(spec.scale());
        pass.kurt.push(stats::excess_kurtosis(&rs.values).ok());
        pass.skew.push(stats::skewness(&rs.values).ok());
        pass.n_obs.push(rs.n() as u64);
    }
    Ok(pass)
}

/// Fraction of returns beyond each quantile cutoff that are losses.
/// `n_obs` carries the exceedance count the fraction is based on.
fn loss_curve<F: Scalar>(
    battery: &ReturnSeries<F>,
    abs_vals: &[F],
    quantiles_bp: &[i64],
) -> (Vec<i64>, Vec<Option<F>>, Vec<u64>) {
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut n_obs = Vec::new();
    for &bp in quantiles_bp {
        let q = bp as f64 / 10_000.0;
        let cutoff = stats::quantile(abs_vals, q).ok();
        let (mut losses, mut total) = (0u64, 0u64);
        if let Some(c) = cutoff {
            for &r in &battery.values {
                if r.abs() > c {
                    total += 1;
                    if r < F::zero() {
                        losses += 1;
                    }
                }
            }
        }
        grid.push(bp);
        values.push(if total > 0 {
            Some(F::from_count(losses as usize) / F::from_count(total as usize))
        } else {
            None
        });
        n_obs.push(total);
    }
    (grid, values, n_obs)
}

/// Dispersion of extreme-return arrivals.
///
/// Slots with `|r| > cutoff` are counted in windows of `window` buckets
/// tiling each day from slot zero; the trailing partial window is dropped.
/// Returns the Fano factor of the pooled window counts, the number of
/// windows, the excess kurtosis of within-day slot gaps between
/// consecutive extremes, and the number of gaps.
fn extreme_dispersion<F: Scalar>(
    abs: &ReturnSeries<F>,
    cutoff: F,
    window: usize,
) -> (Option<F>, u64, Option<F>, u64) {
    let mut counts: Vec<u64> = Vec::new();
    let mut gaps: Vec<F> = Vec::new();

    let mut seg_idx = 0;
    while seg_idx < abs.segments.len() {
        let day = abs.segments[seg_idx].day;
        let day_slots = abs.segments[seg_idx].day_slots;
        let mut extremes: Vec<usize> = Vec::new();
        while seg_idx < abs.segments.len() && abs.segments[seg_idx].day == day {
            let seg = &abs.segments[seg_idx];
            let vals = abs.segment_values(seg_idx);
            for (off, &v) in vals.iter().enumerate() {
                if v > cutoff {
                    extremes.push(seg.start_slot + off);
                }
            }
            seg_idx += 1;
        }
        let n_windows = day_slots / window;
        let base = counts.len();
        counts.resize(base + n_windows, 0);
        for &slot in &extremes {
            let w = slot / window;
            if w < n_windows {
                counts[base + w] += 1;
            }
        }
        for pair in extremes.windows(2) {
            gaps.push(F::from_count(pair[1] - pair[0]));
        }
    }

    let fano = stats::fano::<F>(&counts).ok();
    let gap_kurt = stats::excess_kurtosis(&gaps).ok();
    (fano, counts.len() as u64, gap_kurt, gaps.len() as u64)
}

/// Bucket volume aligned slot-for-slot with a return series. Forward-filled
/// buckets carry zero volume and zero trades.
fn volume_series<F: Scalar>(
    ps: &PriceSeries<F>,
    like: &ReturnSeries<F>,
    kind: VolumeKind,
) -> ReturnSeries<F> {
    let mut values = Vec::with_capacity(like.values.len());
    for seg in &like.segments {
        let d = &ps.days[seg.day];
        for off in 0..seg.len {
            let flat = d.start + (seg.start_slot + off - d.lead);
            let v = match kind {
                VolumeKind::Shares => ps.volume[flat] as f64,
                VolumeKind::Trades => ps.trade_count[flat] as f64,
            };
            values.push(F::from_f64_lossy(v));
        }
    }
    ReturnSeries {
        clock: like.clock,
        stage: like.stage,
        segments: like.segments.clone(),
        values,
    }
}

/// Per-day slot tables the timescale-asymmetry correlation is read from:
/// one fine-volatility value and one coarse absolute return per coarse slot.
#[derive(Debug, Clone)]
pub struct DayVolTable<F> {
    pub fine_vol: Vec<Option<F>>,
    pub coarse_abs: Vec<Option<F>>,
}

/// Builds one [`DayVolTable`] per calendar day. Fine slot `s` maps to
/// coarse slot `s / ratio`; a fine-volatility entry is defined when at
/// least one fine return (or a valid OHLC bucket) falls in the coarse slot.
pub fn asymmetry_tables<F: Scalar>(
    fine_abs: &ReturnSeries<F>,
    coarse: &ReturnSeries<F>,
    coarse_ps: &PriceSeries<F>,
    ratio: usize,
    mode: FineVol,
) -> Result<Vec<DayVolTable<F>>, FactsError> {
    if ratio < 2 {
        return Err(FactsError::Config(
            "coarse scale must be a multiple (>1x) of the base scale".into(),
        ));
    }
    let mut tables: Vec<DayVolTable<F>> = coarse_ps
        .days
        .iter()
        .map(|d| DayVolTable {
            fine_vol: vec![None; d.slots],
            coarse_abs: vec![None; d.slots],
        })
        .collect();

    match mode {
        FineVol::MeanAbs => {
            let mut sums: Vec<Vec<(F, u32)>> = coarse_ps
                .days
                .iter()
                .map(|d| vec![(F::zero(), 0u32); d.slots])
                .collect();
            for (k, seg) in fine_abs.segments.iter().enumerate() {
                let vals = fine_abs.segment_values(k);
                let acc = &mut sums[seg.day];
                for (off, &v) in vals.iter().enumerate() {
                    let t = (seg.start_slot + off) / ratio;
                    if t < acc.len() {
                        acc[t].0 += v;
                        acc[t].1 += 1;
                    }
                }
            }
            for (day, acc) in sums.into_iter().enumerate() {
                for (t, (sum, n)) in acc.into_iter().enumerate() {
                    if n > 0 {
                        tables[day].fine_vol[t] = Some(sum / F::from_count(n as usize));
                    }
                }
            }
        }
        FineVol::RogersSatchell => {
            let ohlc = coarse_ps.ohlc.as_ref().ok_or_else(|| {
                FactsError::Config(
                    "range-based fine volatility needs the coarse series built with OHLC".into(),
                )
            })?;
            for (day, d) in coarse_ps.days.iter().enumerate() {
                for j in 0..d.len {
                    let flat = d.start + j;
                    let v = stats::rogers_satchell_log(
                        ohlc.open[flat],
                        ohlc.high[flat],
                        ohlc.low[flat],
                        ohlc.close[flat],
                    )
                    .ok();
                    tables[day].fine_vol[d.lead + j] = v;
                }
            }
        }
    }

    for (k, seg) in coarse.segments.iter().enumerate() {
        let vals = coarse.segment_values(k);
        for (off, &v) in vals.iter().enumerate() {
            tables[seg.day].coarse_abs[seg.start_slot + off] = Some(v.abs());
        }
    }
    Ok(tables)
}

/// The timescale-asymmetry curves read off the per-day tables.
#[derive(Debug, Clone)]
pub struct AsymmetryCurves<F> {
    /// corr(fine_vol(T), coarse |r|(T + tau)) over tau = -max..=max.
    pub a_grid: Vec<i64>,
    pub a_values: Vec<Option<F>>,
    pub a_n: Vec<u64>,
    /// A(tau) - A(-tau) over tau = 1..=max; `d_n` is the smaller of the
    /// two pair counts.
    pub d_grid: Vec<i64>,
    pub d_values: Vec<Option<F>>,
    pub d_n: Vec<u64>,
}

/// Correlates fine volatility with lagged coarse absolute returns, pooling
/// pairs across days. Pairs never cross a day boundary.
pub fn asymmetry_from_tables<F: Scalar>(
    tables: &[DayVolTable<F>],
    max_lag: i64,
) -> AsymmetryCurves<F> {
    let mut out = AsymmetryCurves {
        a_grid: Vec::new(),
        a_values: Vec::new(),
        a_n: Vec::new(),
        d_grid: Vec::new(),
        d_values: Vec::new(),
        d_n: Vec::new(),
    };
    for tau in -max_lag..=max_lag {
        let mut xs: Vec<F> = Vec::new();
        let mut ys: Vec<F> = Vec::new();
        for day in tables {
            let slots = day.fine_vol.len() as i64;
            for t in 0..slots {
                let s = t + tau;
                if s < 0 || s >= slots {
                    continue;
                }
                if let (Some(x), Some(y)) = (day.fine_vol[t as usize], day.coarse_abs[s as usize])
                {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        out.a_grid.push(tau);
        out.a_values.push(stats::pearson(&xs, &ys).ok());
        out.a_n.push(xs.len() as u64);
    }
    for tau in 1..=max_lag {
        let pos = (tau + max_lag) as usize;
        let neg = (max_lag - tau) as usize;
        out.d_grid.push(tau);
        out.d_values.push(match (out.a_values[pos], out.a_values[neg]) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        });
        out.d_n.push(out.a_n[pos].min(out.a_n[neg]));
    }
    out
}

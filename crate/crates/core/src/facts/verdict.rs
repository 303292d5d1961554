//! Turns battery curves plus a white-noise band into per-fact verdicts.
//!
//! Every rule reads one or two named curves from a [`SymbolAnalysis`] and
//! compares them against the matching [`NoiseBand`]. A fact is judged per
//! symbol and per clock as present, absent, or unknown; symbol effects are
//! then aggregated into a per-clock [`Verdict`] and the two clocks combined
//! into an overall one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{stat_id, FactId, FactsConfig, SymbolAnalysis};
use crate::scalar::Scalar;
use crate::series::ClockKind;
use crate::synth::NoiseBand;

/// Outcome of one fact on one clock (or overall).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supported,
    NotSupported,
    Indeterminate,
}

/// What one symbol shows for one fact on one clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Present,
    Absent,
    Unknown,
}

/// Thresholds the verdict rules run with.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictRules {
    /// Fraction of determinate symbols that must show the effect.
    pub symbol_frac: f64,
    /// Leading lags exempt from the weak-tail check of the linear ACF.
    pub acf_skip: usize,
    /// Fraction of remaining lags that must be weak (in band or tiny).
    pub weak_frac: f64,
    /// |correlation| below this counts as weak even outside the band.
    pub weak_ceiling: f64,
    /// Lag range over which clustering must stay above the band.
    pub clustering_max_lag: i64,
    pub clustering_lag_frac: f64,
    /// Acceptable decay exponent range for the power-law fit.
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub r2_min: f64,
    /// Fraction of lags where the leverage curve must beat its mirror.
    pub leverage_frac: f64,
    /// The asymmetry difference must sit below the band at every lag up
    /// to this one.
    pub asym_lags: i64,
}

impl Default for VerdictRules {
    fn default() -> Self {
        VerdictRules {
            symbol_frac: 0.9,
            acf_skip: 2,
            weak_frac: 0.8,
            weak_ceiling: 0.05,
            clustering_max_lag: 100,
            clustering_lag_frac: 0.8,
            beta_lo: 0.2,
            beta_hi: 0.4,
            r2_min: 0.6,
            leverage_frac: 0.8,
            asym_lags: 3,
        }
    }
}

impl VerdictRules {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        check(
            self.symbol_frac > 0.0 && self.symbol_frac <= 1.0,
            "symbol_frac must lie in (0, 1]",
        );
        check(
            self.weak_frac > 0.0 && self.weak_frac <= 1.0,
            "weak_frac must lie in (0, 1]",
        );
        check(
            self.clustering_lag_frac > 0.0 && self.clustering_lag_frac <= 1.0,
            "clustering_lag_frac must lie in (0, 1]",
        );
        check(
            self.leverage_frac > 0.0 && self.leverage_frac <= 1.0,
            "leverage_frac must lie in (0, 1]",
        );
        check(self.weak_ceiling >= 0.0, "weak_ceiling must not be negative");
        check(
            self.clustering_max_lag >= 1,
            "clustering_max_lag must be at least 1",
        );
        check(self.beta_lo < self.beta_hi, "beta range must be non-empty");
        check(
            (0.0..=1.0).contains(&self.r2_min),
            "r2_min must lie in [0, 1]",
        );
        check(self.asym_lags >= 1, "asym_lags must be at least 1");
        errs
    }
}

/// Per-symbol effects backing a fact's verdict, kept for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEffect {
    pub symbol: String,
    pub clock: Effect,
    pub event: Effect,
}

/// Verdict for one fact, with the per-symbol evidence it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactVerdict {
    pub fact: u8,
    pub name: String,
    pub clock: Verdict,
    pub event: Verdict,
    pub overall: Verdict,
    pub per_symbol: Vec<SymbolEffect>,
    pub rule: String,
}

/// Judges every enabled fact across all symbols.
///
/// `bands` is keyed by stat id and must come from the same config the
/// analyses were produced with, so grids line up.
pub fn judge<F: Scalar>(
    analyses: &[SymbolAnalysis<F>],
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
) -> Vec<FactVerdict> {
    cfg.enabled
        .iter()
        .map(|fact| {
            let per_symbol: Vec<SymbolEffect> = analyses
                .iter()
                .map(|a| SymbolEffect {
                    symbol: a.symbol.clone(),
                    clock: effect(fact, a, bands, cfg, rules, ClockKind::Clock),
                    event: effect(fact, a, bands, cfg, rules, ClockKind::Event),
                })
                .collect();
            let clock = tally(per_symbol.iter().map(|s| s.clock), rules.symbol_frac);
            let event = tally(per_symbol.iter().map(|s| s.event), rules.symbol_frac);
            FactVerdict {
                fact: fact.number(),
                name: fact.name().to_string(),
                clock,
                event,
                overall: combine(clock, event),
                per_symbol,
                rule: rule_text(fact, cfg, rules),
            }
        })
        .collect()
}

/// One clock's verdict from the symbol effects: supported when at least
/// `symbol_frac` of the determinate symbols show the effect.
pub fn tally(effects: impl Iterator<Item = Effect>, symbol_frac: f64) -> Verdict {
    let mut present = 0usize;
    let mut absent = 0usize;
    for e in effects {
        match e {
            Effect::Present => present += 1,
            Effect::Absent => absent += 1,
            Effect::Unknown => {}
        }
    }
    let det = present + absent;
    if det == 0 {
        Verdict::Indeterminate
    } else if meets_frac(present, det, symbol_frac) {
        Verdict::Supported
    } else {
        Verdict::NotSupported
    }
}

/// Overall verdict across the two clocks: supported on either clock wins,
/// otherwise a determinate rejection beats an indeterminate one.
pub fn combine(clock: Verdict, event: Verdict) -> Verdict {
    use Verdict::*;
    match (clock, event) {
        (Supported, _) | (_, Supported) => Supported,
        (NotSupported, _) | (_, NotSupported) => NotSupported,
        _ => Indeterminate,
    }
}

fn meets_frac(hits: usize, total: usize, frac: f64) -> bool {
    hits as f64 + 1e-9 >= frac * total as f64
}

fn effect<F: Scalar>(
    fact: FactId,
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
    kind: ClockKind,
) -> Effect {
    match fact {
        FactId::LinearAcf => linear_acf_effect(a, bands, cfg, rules, kind),
        FactId::HeavyTails => heavy_tails_effect(a, bands, kind),
        FactId::GainLossAsymmetry => gain_loss_effect(a, bands, cfg, kind),
        FactId::AggregationalGaussianity => aggregation_effect(a, bands, kind),
        FactId::Intermittency => intermittency_effect(a, bands, cfg, kind),
        FactId::VolatilityClustering => clustering_effect(a, bands, cfg, rules, kind),
        FactId::ConditionalHeavyTails => conditional_tails_effect(a, bands, kind),
        FactId::SlowAbsAcfDecay => slow_decay_effect(a, bands, cfg, rules, kind),
        FactId::LeverageEffect => leverage_effect(a, bands, cfg, rules, kind),
        FactId::VolumeVolatilityCorrelation => volume_effect(a, bands, cfg, kind),
        FactId::TimescaleAsymmetry => asymmetry_effect(a, bands, cfg, rules, kind),
    }
}

fn band_at<F: Scalar>(
    bands: &BTreeMap<String, NoiseBand<F>>,
    id: &str,
    g: i64,
) -> Option<(F, F)> {
    bands.get(id).and_then(|b| b.at(g))
}

/// Lag-1 autocorrelation below the band, with the rest of the curve weak.
fn linear_acf_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(1, "acf", kind, cfg.battery_stage());
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    let (Some(c1), Some((lo1, _))) = (curve.at(1), band_at(bands, &id, 1)) else {
        return Effect::Unknown;
    };

    let weak_ceiling = F::from_f64_lossy(rules.weak_ceiling);
    let mut det = 0usize;
    let mut weak = 0usize;
    for (i, &g) in curve.grid.iter().enumerate() {
        if g <= rules.acf_skip as i64 {
            continue;
        }
        let Some(v) = curve.values[i] else { continue };
        let Some((lo, hi)) = band_at(bands, &id, g) else {
            continue;
        };
        det += 1;
        if (v >= lo && v <= hi) || v.abs() <= weak_ceiling {
            weak += 1;
        }
    }
    if det == 0 {
        return Effect::Unknown;
    }
    if c1 < lo1 && meets_frac(weak, det, rules.weak_frac) {
        Effect::Present
    } else {
        Effect::Absent
    }
}

/// Excess kurtosis at the finest tested scale above the band.
fn heavy_tails_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(2, "kurt", kind, "raw");
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    let Some(&g0) = curve.grid.first() else {
        return Effect::Unknown;
    };
    match (curve.at(g0), band_at(bands, &id, g0)) {
        (Some(k), Some((_, hi))) => {
            if k > hi {
                Effect::Present
            } else {
                Effect::Absent
            }
        }
        _ => Effect::Unknown,
    }
}

/// Negative skewness below the band, or an excess of losses among returns
/// beyond the highest quantile cutoff.
fn gain_loss_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    kind: ClockKind,
) -> Effect {
    let stage = cfg.battery_stage();
    let mut any_det = false;
    let mut any_present = false;

    let skew_id = stat_id(3, "skew", kind, stage);
    if let Some(curve) = a.curve(&skew_id) {
        if let Some(&g0) = curve.grid.first() {
            if let (Some(s), Some((lo, _))) = (curve.at(g0), band_at(bands, &skew_id, g0)) {
                any_det = true;
                if s < lo {
                    any_present = true;
                }
            }
        }
    }

    let loss_id = stat_id(3, "loss", kind, stage);
    if let Some(curve) = a.curve(&loss_id) {
        if let Some(&top) = curve.grid.last() {
            let enough = curve.n_at(top).map_or(false, |n| n >= cfg.min_exceedances);
            if let (true, Some(f), Some((_, hi))) =
                (enough, curve.at(top), band_at(bands, &loss_id, top))
            {
                any_det = true;
                if f > hi {
                    any_present = true;
                }
            }
        }
    }

    if any_present {
        Effect::Present
    } else if any_det {
        Effect::Absent
    } else {
        Effect::Unknown
    }
}

/// Kurtosis falling from the finest to the coarsest tested scale, starting
/// from above the band.
fn aggregation_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(2, "kurt", kind, "raw");
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    let (Some(&g0), Some(&gn)) = (curve.grid.first(), curve.grid.last()) else {
        return Effect::Unknown;
    };
    match (curve.at(g0), curve.at(gn), band_at(bands, &id, g0)) {
        (Some(k0), Some(kn), Some((_, hi))) => {
            if k0 > hi && kn < k0 {
                Effect::Present
            } else {
                Effect::Absent
            }
        }
        _ => Effect::Unknown,
    }
}

/// Fano factor of extreme-return counts above the band.
fn intermittency_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(5, "fano", kind, cfg.battery_stage());
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    let Some(&w) = curve.grid.first() else {
        return Effect::Unknown;
    };
    match (curve.at(w), band_at(bands, &id, w)) {
        (Some(f), Some((_, hi))) => {
            if f > hi {
                Effect::Present
            } else {
                Effect::Absent
            }
        }
        _ => Effect::Unknown,
    }
}

/// Absolute-return autocorrelation above the band across most of the
/// examined lag range.
fn clustering_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(6, "absacf", kind, cfg.battery_stage());
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    let mut det = 0usize;
    let mut above = 0usize;
    for (i, &g) in curve.grid.iter().enumerate() {
        if g < 1 || g > rules.clustering_max_lag {
            continue;
        }
        let Some(v) = curve.values[i] else { continue };
        let Some((_, hi)) = band_at(bands, &id, g) else {
            continue;
        };
        det += 1;
        if v > hi {
            above += 1;
        }
    }
    if det == 0 {
        Effect::Unknown
    } else if meets_frac(above, det, rules.clustering_lag_frac) {
        Effect::Present
    } else {
        Effect::Absent
    }
}

/// Normalized kurtosis below raw at every tested scale, yet still above
/// the band at the finest one.
fn conditional_tails_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    kind: ClockKind,
) -> Effect {
    let norm_id = stat_id(7, "kurt", kind, "norm");
    let raw_id = stat_id(2, "kurt", kind, "raw");
    let (Some(norm), Some(raw)) = (a.curve(&norm_id), a.curve(&raw_id)) else {
        return Effect::Unknown;
    };

    let mut det = 0usize;
    let mut reduced = 0usize;
    for &g in &norm.grid {
        if let (Some(kn), Some(kr)) = (norm.at(g), raw.at(g)) {
            det += 1;
            if kn < kr {
                reduced += 1;
            }
        }
    }
    let Some(&g0) = norm.grid.first() else {
        return Effect::Unknown;
    };
    let gate = match (norm.at(g0), band_at(bands, &norm_id, g0)) {
        (Some(k), Some((_, hi))) => Some(k > hi),
        _ => None,
    };
    match gate {
        None => Effect::Unknown,
        Some(above) => {
            if det > 0 && reduced == det && above {
                Effect::Present
            } else if det > 0 {
                Effect::Absent
            } else {
                Effect::Unknown
            }
        }
    }
}

/// Clustering present and its decay well described by a power law with an
/// exponent in the accepted range.
fn slow_decay_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
    kind: ClockKind,
) -> Effect {
    match clustering_effect(a, bands, cfg, rules, kind) {
        Effect::Unknown => return Effect::Unknown,
        Effect::Absent => return Effect::Absent,
        Effect::Present => {}
    }
    let fit_id = stat_id(8, "fit", kind, cfg.battery_stage());
    let Some(entry) = a.fit_entry(&fit_id) else {
        return Effect::Unknown;
    };
    match &entry.fit {
        Some(fit) => {
            let beta = fit.beta.to_f64().unwrap_or(f64::NAN);
            let r2 = fit.r_squared.to_f64().unwrap_or(f64::NAN);
            if beta >= rules.beta_lo && beta <= rules.beta_hi && r2 >= rules.r2_min {
                Effect::Present
            } else {
                Effect::Absent
            }
        }
        None => Effect::Absent,
    }
}

/// Negative return-volatility correlation at lag one, below the band, and
/// mostly below its mirrored value at negative lags.
fn leverage_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(9, "lev", kind, cfg.battery_stage());
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    let (Some(l1), Some((lo1, _))) = (curve.at(1), band_at(bands, &id, 1)) else {
        return Effect::Unknown;
    };
    let max_lag = curve.grid.iter().copied().max().unwrap_or(0);
    let mut det = 0usize;
    let mut below_mirror = 0usize;
    for tau in 1..=max_lag {
        if let (Some(fwd), Some(bwd)) = (curve.at(tau), curve.at(-tau)) {
            det += 1;
            if fwd < bwd {
                below_mirror += 1;
            }
        }
    }
    if det == 0 {
        return Effect::Unknown;
    }
    if l1 < lo1 && meets_frac(below_mirror, det, rules.leverage_frac) {
        Effect::Present
    } else {
        Effect::Absent
    }
}

/// Contemporaneous volume-volatility correlation above the band.
fn volume_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(10, "volvol", kind, cfg.battery_stage());
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    match (curve.at(0), band_at(bands, &id, 0)) {
        (Some(v), Some((_, hi))) => {
            if v > hi {
                Effect::Present
            } else {
                Effect::Absent
            }
        }
        _ => Effect::Unknown,
    }
}

/// The fine-to-coarse asymmetry difference below the band at every leading
/// lag.
fn asymmetry_effect<F: Scalar>(
    a: &SymbolAnalysis<F>,
    bands: &BTreeMap<String, NoiseBand<F>>,
    cfg: &FactsConfig,
    rules: &VerdictRules,
    kind: ClockKind,
) -> Effect {
    let id = stat_id(11, "asym_d", kind, cfg.battery_stage());
    let Some(curve) = a.curve(&id) else {
        return Effect::Unknown;
    };
    for tau in 1..=rules.asym_lags {
        let (Some(d), Some((lo, _))) = (curve.at(tau), band_at(bands, &id, tau)) else {
            return Effect::Unknown;
        };
        if d >= lo {
            return Effect::Absent;
        }
    }
    Effect::Present
}

fn rule_text(fact: FactId, cfg: &FactsConfig, rules: &VerdictRules) -> String {
    let sym = format!(
        "holds in >= {:.0}% of determinate symbols",
        rules.symbol_frac * 100.0
    );
    let body = match fact {
        FactId::LinearAcf => format!(
            "lag-1 autocorrelation below the noise band and |C| in-band or <= {} at >= {:.0}% of lags beyond {}",
            rules.weak_ceiling,
            rules.weak_frac * 100.0,
            rules.acf_skip
        ),
        FactId::HeavyTails => "excess kurtosis above the noise band at the finest scale".to_string(),
        FactId::GainLossAsymmetry => format!(
            "skewness below the band at the finest scale, or loss share above the band beyond the top quantile (>= {} exceedances)",
            cfg.min_exceedances
        ),
        FactId::AggregationalGaussianity =>
            "kurtosis above the band at the finest scale and lower at the coarsest".to_string(),
        FactId::Intermittency =>
            "Fano factor of extreme-return counts above the noise band".to_string(),
        FactId::VolatilityClustering => format!(
            "absolute-return autocorrelation above the band at >= {:.0}% of lags 1..={}",
            rules.clustering_lag_frac * 100.0,
            rules.clustering_max_lag
        ),
        FactId::ConditionalHeavyTails =>
            "normalized kurtosis below raw at every tested scale yet above the band at the finest".to_string(),
        FactId::SlowAbsAcfDecay => format!(
            "clustering present and log-log fit over lags {}..={} with beta in [{}, {}] and R^2 >= {}",
            cfg.fit_lo, cfg.fit_hi, rules.beta_lo, rules.beta_hi, rules.r2_min
        ),
        FactId::LeverageEffect => format!(
            "lag-1 return-volatility correlation below the band and below its mirror at >= {:.0}% of lags",
            rules.leverage_frac * 100.0
        ),
        FactId::VolumeVolatilityCorrelation =>
            "contemporaneous volume-volatility correlation above the noise band".to_string(),
        FactId::TimescaleAsymmetry => format!(
            "asymmetry difference below the band at every lag 1..={}",
            rules.asym_lags
        ),
    };
    format!("{body}; {sym}")
}

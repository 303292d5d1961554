//! Property and invariant tests for the tape filter and series builders.

use proptest::prelude::*;

use tapefacts::series::{
    build_series, daily_normalize, export_returns_csv, import_returns_csv, log_returns,
    BuildOptions, ClockSpec, ReturnSeries, SegmentMeta, Stage,
};
use tapefacts::stats;
use tapefacts::synth::{generate, GenSpec};
use tapefacts::tape::{
    filter_session, SessionCalendar, SymbolTape, Tape, Trade, DEFAULT_CLOSE_NS, DEFAULT_OPEN_NS,
};
use tapefacts::{Real, NS_PER_DAY, NS_PER_MIN};

const DAY0: i64 = 19_100;

fn make_test_cal(days: usize) -> SessionCalendar {
    SessionCalendar::weekdays(DAY0, days)
}

fn session_ts(cal: &SessionCalendar, day_idx: usize, offset_ns: i64) -> i64 {
    cal.days()[day_idx] * NS_PER_DAY + DEFAULT_OPEN_NS + offset_ns
}

prop_compose! {
    /// A tape of up to three weekdays with timestamps scattered both inside
    /// and outside the session window.
    fn arb_scattered_tape()(
        day_count in 1usize..=3,
        trades in prop::collection::vec(
            (0usize..3, -2_000_000_000_000i64..30_000_000_000_000, 1u32..1000, 50.0f64..150.0),
            0..120,
        ),
    ) -> (SymbolTape, SessionCalendar) {
        let cal = make_test_cal(day_count);
        let mut rows: Vec<Trade> = trades
            .into_iter()
            .map(|(d, off, size, price)| {
                let day = d.min(day_count - 1);
                Trade::new(session_ts(&cal, day, off), price, size)
            })
            .collect();
        rows.sort_by_key(|t| t.ts_ns);
        (SymbolTape { symbol: "P".into(), trades: rows }, cal)
    }
}

prop_compose! {
    /// An in-session tape with strictly positive prices, sorted timestamps.
    fn arb_session_tape()(
        day_count in 1usize..=3,
        trades in prop::collection::vec(
            (0usize..3, 0i64..(DEFAULT_CLOSE_NS - DEFAULT_OPEN_NS - 1), 1u32..500, 50.0f64..150.0),
            1..200,
        ),
    ) -> (SymbolTape, SessionCalendar) {
        let cal = make_test_cal(day_count);
        let mut rows: Vec<Trade> = trades
            .into_iter()
            .map(|(d, off, size, price)| {
                let day = d.min(day_count - 1);
                Trade::new(session_ts(&cal, day, off), price, size)
            })
            .collect();
        rows.sort_by_key(|t| t.ts_ns);
        (SymbolTape { symbol: "P".into(), trades: rows }, cal)
    }
}

proptest! {
    #[test]
    fn filter_session_is_idempotent((sym, cal) in arb_scattered_tape()) {
        let tape = Tape::from_symbols(vec![sym]);
        let once = filter_session(tape, &cal);
        let twice = filter_session(once.clone(), &cal);
        prop_assert_eq!(once.get("P").unwrap().trades.len(), twice.get("P").unwrap().trades.len());
        let a = &once.get("P").unwrap().trades;
        let b = &twice.get("P").unwrap().trades;
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!(x.ts_ns, y.ts_ns);
            prop_assert_eq!(x.price, y.price);
        }
    }

    #[test]
    fn event_returns_telescope_per_day(
        (sym, cal) in arb_session_tape(),
        n in 1u32..5,
    ) {
        let ps = build_series::<Real>(&sym, &cal, ClockSpec::Event { n }, BuildOptions::default())
            .unwrap();
        let rs = log_returns(&ps);
        for seg in &rs.segments {
            let d = &ps.days[seg.day];
            let day_prices = &ps.log_price[d.start..d.start + d.len];
            let total: Real = rs.values[seg.start..seg.start + seg.len].iter().sum();
            let span = day_prices[day_prices.len() - 1] - day_prices[0];
            let tol = 1e-12 * span.abs().max(1.0);
            prop_assert!((total - span).abs() <= tol,
                "telescoped {total} vs span {span}");
        }
    }

    #[test]
    fn daily_normalization_leaves_unit_stddev((sym, cal) in arb_session_tape()) {
        let ps = build_series::<Real>(&sym, &cal, ClockSpec::Event { n: 1 }, BuildOptions::default())
            .unwrap();
        let rs = log_returns(&ps);
        let (norm, _) = daily_normalize(&rs).unwrap();
        for (i, seg) in norm.segments.iter().enumerate() {
            let _ = seg;
            let sd = stats::population_stddev(norm.segment_values(i)).unwrap();
            prop_assert!((sd - 1.0).abs() < 1e-9, "day stddev {sd}");
        }
    }

    #[test]
    fn builders_are_deterministic((sym, cal) in arb_session_tape(), minutes in 1i64..10) {
        let spec = ClockSpec::minutes(minutes);
        let a = build_series::<Real>(&sym, &cal, spec, BuildOptions { with_ohlc: true }).unwrap();
        let b = build_series::<Real>(&sym, &cal, spec, BuildOptions { with_ohlc: true }).unwrap();
        prop_assert_eq!(a.log_price.len(), b.log_price.len());
        for (x, y) in a.log_price.iter().zip(b.log_price.iter()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        prop_assert_eq!(a.volume, b.volume);
        prop_assert_eq!(a.skipped_trades, b.skipped_trades);
    }

    #[test]
    fn return_csv_round_trips(
        values in prop::collection::vec(-0.05f64..0.05, 1..40),
        day_slots in 41usize..80,
    ) {
        let rs = ReturnSeries::<Real> {
            clock: ClockSpec::minutes(1),
            stage: Stage::Raw,
            segments: vec![SegmentMeta {
                day: 0,
                start_slot: 1,
                start: 0,
                len: values.len(),
                day_slots,
            }],
            values,
        };
        let mut buf = Vec::new();
        export_returns_csv(&rs, "RT", &mut buf).unwrap();
        let (symbol, back) = import_returns_csv::<Real>(&buf[..]).unwrap();
        prop_assert_eq!(symbol.as_str(), "RT");
        prop_assert_eq!(back.values.len(), rs.values.len());
        for (x, y) in rs.values.iter().zip(back.values.iter()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn clock_bucket_count_matches_session_division() {
    let cal = make_test_cal(2);
    let mut trades = Vec::new();
    for day in 0..2 {
        let mut off = 0;
        while off < DEFAULT_CLOSE_NS - DEFAULT_OPEN_NS {
            trades.push(Trade::new(session_ts(&cal, day, off), 100.0, 10));
            off += 30_000_000_000;
        }
    }
    let sym = SymbolTape {
        symbol: "B".into(),
        trades,
    };

    for minutes in [1i64, 5, 10, 15, 20, 30, 50, 60] {
        let ps = build_series::<Real>(
            &sym,
            &cal,
            ClockSpec::minutes(minutes),
            BuildOptions::default(),
        )
        .unwrap();
        let expected = (390 * NS_PER_MIN) / (minutes * NS_PER_MIN);
        for d in &ps.days {
            assert_eq!(d.slots as i64, expected, "bucket count at {minutes}min");
            assert_eq!(d.lead, 0);
            assert_eq!(d.len as i64, expected);
        }
    }
}

#[test]
fn generated_tapes_need_no_session_filter() {
    let cal = make_test_cal(3);
    let spec = GenSpec::white_noise("W", 3, 4000, 99);
    let sym = generate(&spec, &cal).unwrap();

    assert_eq!(sym.trades.len(), 3 * 4000);
    assert!(sym.trades.windows(2).all(|w| w[0].ts_ns <= w[1].ts_ns));
    assert!(sym.trades.iter().all(|t| cal.in_session(t.ts_ns)));

    let tape = Tape::from_symbols(vec![sym.clone()]);
    let filtered = filter_session(tape, &cal);
    let kept = filtered.get("W").unwrap();
    assert_eq!(kept.trades.len(), sym.trades.len());
    for (a, b) in sym.trades.iter().zip(kept.trades.iter()) {
        assert_eq!(a.ts_ns, b.ts_ns);
        assert_eq!(a.price, b.price);
    }
}

#[test]
fn forward_fill_returns_are_exact_zeros() {
    let cal = make_test_cal(1);
    let sym = SymbolTape {
        symbol: "Z".into(),
        trades: vec![
            Trade::new(session_ts(&cal, 0, 10), 100.0, 10),
            Trade::new(session_ts(&cal, 0, 200 * NS_PER_MIN), 101.0, 10),
        ],
    };
    let ps = build_series::<Real>(&sym, &cal, ClockSpec::minutes(1), BuildOptions::default())
        .unwrap();
    let rs = log_returns(&ps);
    let nonzero: Vec<usize> = rs
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(nonzero.len(), 1, "exactly one traded price change");
    assert!((rs.values[nonzero[0]] - (101f64.ln() - 100f64.ln())).abs() < 1e-15);
}

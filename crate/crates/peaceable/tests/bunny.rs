use peaceable::bunny::{ft_average, Bunny, BunnyConfig, BunnyInit, FtaError};
use peaceable::network::{MarkValue, Wire};
use peaceable::node::{Action, Effects, Level, Step};
use peaceable::params::{solve, ParamInputs, Rational};
use peaceable::time::{LocalTime, Ring};
use peaceable::trace::EventKind;
use proptest::prelude::*;

const RING: Ring = Ring::new(1 << 15);

fn config() -> BunnyConfig {
    let p = solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3)).unwrap();
    BunnyConfig::from_params(&p, RING)
}

fn marks(offsets: &[u64], base: u64) -> Vec<(LocalTime, usize)> {
    offsets.iter().enumerate().map(|(i, o)| (LocalTime(base + o), i)).collect()
}

#[test]
fn fta_examples() {
    let now = LocalTime(1000);
    let base = 1000 - 67;
    assert_eq!(ft_average(&marks(&[0, 10, 20, 30], base), now, RING, 4, 1, 67), Ok(LocalTime(base + 15)));
    assert_eq!(ft_average(&marks(&[5, 9], base), now, RING, 4, 1, 67), Ok(LocalTime(base + 9)));
    assert_eq!(ft_average(&marks(&[7, 7, 7, 7], base), now, RING, 4, 1, 67), Ok(LocalTime(base + 7)));
    assert_eq!(ft_average(&marks(&[5], base), now, RING, 4, 1, 67), Err(FtaError::TooFew { usable: 1, f: 1 }));
}

#[test]
fn fta_drops_sources_with_two_marks() {
    let now = LocalTime(100);
    let m = vec![(LocalTime(90), 0), (LocalTime(91), 1), (LocalTime(99), 1), (LocalTime(92), 2)];
    assert_eq!(ft_average(&m, now, RING, 4, 1, 20), Ok(LocalTime(92)));
}

fn emitted(fx: &Effects) -> Vec<EventKind> {
    fx.actions
        .iter()
        .filter_map(|a| match a {
            Action::Emit(k, _) => Some(*k),
            _ => None,
        })
        .collect()
}

fn sent_mark(fx: &Effects) -> Option<MarkValue> {
    fx.actions.iter().find_map(|a| match a {
        Action::Broadcast(Wire::Mark(v)) => Some(*v),
        _ => None,
    })
}

/// A node about to pulse with a well-spaced previous pulse and a GOOD cluster in its trail.
fn ready(counter: u32) -> Bunny {
    let cfg = config();
    let mut b = Bunny::with_state(
        0,
        cfg,
        BunnyInit { now: 999, next_pulse: 1000, counter, last_pulse: Some(1000 - cfg.period) },
    );
    let mut fx = Effects::default();
    for src in 1..3 {
        b.on_mark(MarkValue::GOOD, src, &mut fx);
    }
    b
}

#[test]
fn pulse_tags_best_only_at_counter_zero() {
    for (counter, want) in [(0, MarkValue::GOOD_BEST), (2, MarkValue::GOOD)] {
        let mut b = ready(counter);
        let mut fx = Effects::default();
        b.on_tick(&mut fx);
        b.on_mark(MarkValue::GOOD, 0, &mut fx);
        assert!(b.is_best, "own mark completes the shortcut cluster");
        let mut fx = Effects::default();
        // Second pulse one period later sees the shortcut from the first.
        b.next_pulse = RING.add(b.now, 1);
        b.last_pulse = Some(RING.back(b.now, b.cfg.period - 1));
        b.on_tick(&mut fx);
        assert_eq!(sent_mark(&fx), Some(want));
    }
}

#[test]
fn bad_gap_sends_empty_mark() {
    let cfg = config();
    let mut b = Bunny::with_state(0, cfg, BunnyInit { now: 9, next_pulse: 10, counter: 0, last_pulse: Some(5) });
    let mut fx = Effects::default();
    b.on_tick(&mut fx);
    assert_eq!(sent_mark(&fx), Some(MarkValue::EMPTY));
    assert!(emitted(&fx).contains(&EventKind::P));
}

#[test]
fn pulse_schedules_absorb_when_counter_positive() {
    let cfg = config();
    let mut b = Bunny::with_state(0, cfg, BunnyInit { now: 9, next_pulse: 10, counter: 3, last_pulse: None });
    let mut fx = Effects::default();
    b.on_tick(&mut fx);
    assert!(fx.actions.contains(&Action::Wait {
        ticks: cfg.absorb_wait,
        level: Level::Absorb,
        step: Step::Absorb { pulse: LocalTime(10) }
    }));
}

#[test]
fn absorb_shifts_by_fta_minus_own() {
    let cfg = config();
    let now = 5000u64;
    let base = now - cfg.fta_offset;
    let mut b = Bunny::with_state(0, cfg, BunnyInit { now: base, next_pulse: 7000, counter: 2, last_pulse: None });
    let mut fx = Effects::default();
    // The absorb window is one tick shorter than the average's base offset.
    for (src, off) in [(0usize, 1u64), (1, 11), (2, 21), (3, 31)] {
        b.now = LocalTime(base + off);
        b.on_mark(MarkValue::EMPTY, src, &mut fx);
    }
    b.now = LocalTime(now);
    let mut fx = Effects::default();
    b.on_step(Step::Absorb { pulse: LocalTime(base + 1) }, &mut fx);
    assert_eq!(b.next_pulse, LocalTime(7000 + 15 + cfg.period));
    assert_eq!(b.counter, 3);
    assert_eq!(emitted(&fx), [EventKind::D0, EventKind::K]);
}

#[test]
fn absorb_is_inert_at_counter_zero() {
    let mut b = Bunny::new(0, config());
    let mut fx = Effects::default();
    b.on_step(Step::Absorb { pulse: LocalTime(0) }, &mut fx);
    assert!(fx.actions.is_empty());
}

#[test]
fn engage_example() {
    let cfg = config();
    let mut b = Bunny::with_state(3, cfg, BunnyInit { now: 100, next_pulse: 9000, counter: 4, last_pulse: None });
    let mut fx = Effects::default();
    for src in 0..3 {
        b.on_mark(MarkValue::GOOD_BEST, src, &mut fx);
        b.now = RING.add(b.now, 1);
    }
    let kinds = emitted(&fx);
    assert_eq!(kinds.iter().filter(|k| **k == EventKind::L1).count(), 2, "second and third mark are new evidence");
    assert!(fx.actions.contains(&Action::Cancel(Level::Absorb)));
    // Marks at 100, 101, 102; the adjustment runs δ1 ticks after the last one.
    b.now = RING.add(LocalTime(102), cfg.engage_wait);
    let tau0 = b.now.0 - cfg.fta_offset;
    let mut fx = Effects::default();
    b.on_step(Step::EngageAdjust, &mut fx);
    let avg = tau0 + ((100 + 1 - tau0) + (100 + 2 - tau0)) / 2;
    assert_eq!(b.next_pulse, LocalTime(avg + cfg.period));
    assert_eq!(emitted(&fx), [EventKind::D1]);
    let mut fx = Effects::default();
    b.on_step(Step::EngageSettle, &mut fx);
    assert_eq!(b.counter, 1);
    assert!(!b.engaged);
}

#[test]
fn engage_aborts_without_enough_marks() {
    let mut b = Bunny::new(0, config());
    b.engaged = true;
    let mut fx = Effects::default();
    b.on_step(Step::EngageAdjust, &mut fx);
    assert!(!b.engaged);
    assert_eq!(emitted(&fx), [EventKind::X]);
}

#[test]
fn appearance_resets_and_blanks() {
    let cfg = config();
    let mut b = Bunny::with_state(0, cfg, BunnyInit { now: 500, next_pulse: 3, counter: 5, last_pulse: None });
    let mut fx = Effects::default();
    b.on_mark(MarkValue::GOOD, 1, &mut fx);
    let mut fx = Effects::default();
    b.on_appearance(&mut fx);
    assert_eq!(RING.diff(b.next_pulse, b.now), cfg.period);
    assert_eq!(b.counter, 1);
    assert!(b.trail.is_empty());
    assert!(fx.actions.contains(&Action::CancelAll));
    assert_eq!(emitted(&fx), [EventKind::D2]);
    b.on_mark(MarkValue::GOOD, 1, &mut fx);
    assert!(b.trail.is_empty());
    for _ in 0..cfg.blanking {
        b.on_tick(&mut fx);
    }
    b.on_mark(MarkValue::GOOD, 1, &mut fx);
    assert_eq!(b.trail.len(), 1);
}

#[test]
fn unhappy_node_asks_for_help() {
    let mut b = Bunny::new(0, config());
    let mut fx = Effects::default();
    assert!(b.on_tick(&mut fx));
}

#[test]
fn out_of_range_state_is_clamped() {
    let b = Bunny::with_state(
        0,
        config(),
        BunnyInit { now: 1 << 20, next_pulse: (1 << 15) + 4, counter: 99, last_pulse: None },
    );
    assert!(b.counter < b.cfg.cycles);
    assert_eq!(b.next_pulse, LocalTime(4));
    assert!(b.now.0 < RING.modulus());
}

proptest! {
    /// At least n−f correct offsets inside [a, b] keep the average inside [a, b].
    #[test]
    fn fta_closure(
        good in prop::collection::vec(0u64..50, 3..=3),
        bad in 0u64..200,
    ) {
        let now = LocalTime(300);
        let base = 300 - 250;
        let mut m = marks(&good, base);
        m.push((LocalTime(base + bad), 3));
        let got = ft_average(&m, now, RING, 4, 1, 250).unwrap().0 - base;
        prop_assert!(got >= *good.iter().min().unwrap() && got <= *good.iter().max().unwrap());
    }

    /// Shared correct offsets within spread s, one arbitrary entry each: outputs within ⌈s/2⌉.
    #[test]
    fn fta_convergence(
        good in prop::collection::vec(0u64..30, 6..=6),
        x in 0u64..200,
        y in 0u64..200,
    ) {
        let now = LocalTime(300);
        let base = 300 - 250;
        let mut a = marks(&good, base);
        let mut b = a.clone();
        a.push((LocalTime(base + x), 6));
        b.push((LocalTime(base + y), 6));
        let (n, f) = (7, 1);
        let ra = ft_average(&a, now, RING, n, f, 250).unwrap().0;
        let rb = ft_average(&b, now, RING, n, f, 250).unwrap().0;
        let s = good.iter().max().unwrap() - good.iter().min().unwrap();
        prop_assert!(ra.abs_diff(rb) <= s.div_ceil(2));
    }
}

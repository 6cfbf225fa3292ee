mod support;

use peaceable::engine::{CancelGroup, EngineError, EventQueue};
use peaceable::network::{MarkValue, Wire};
use peaceable::params::parse_rational;
use peaceable::time::{ClockModel, DriftSchedule, LocalTime, RefTime, Ring, TimeScale};
use peaceable::trace::{EventKind, EventRecord, Payload, Trace, TraceMeta};
use peaceable::trails::{aligned_points, find_cluster, is_aligned, AlignError, Point, Selector, Trail};
use proptest::prelude::*;
use support::sync_oracle;

fn rat(s: &str) -> peaceable::params::Rational {
    parse_rational(s).unwrap()
}

#[test]
fn fast_clock_gains_one_tick_per_hundred() {
    let scale = TimeScale::new(1010).unwrap();
    let mut c = ClockModel::new(
        0,
        LocalTime(0),
        RefTime(1000),
        DriftSchedule::Constant { rate: rat("1.01") },
        scale,
        rat("1.01"),
    );
    assert_eq!(c.local_time_at(scale.ticks(100), Ring::new(1 << 15)), LocalTime(101));
}

#[test]
fn default_scale_rounds_each_cycle_up() {
    let scale = TimeScale::default();
    let mut c = ClockModel::new(
        0,
        LocalTime(0),
        RefTime(1014),
        DriftSchedule::Constant { rate: rat("1.01") },
        scale,
        rat("1.01"),
    );
    assert_eq!(c.cycle_len(0), 1014);
    assert_eq!(c.local_time_at(scale.ticks(100), Ring::new(1 << 15)), LocalTime(100));
}

#[test]
fn cycles_are_clamped_to_the_rate_bound() {
    let c = ClockModel::new(
        0,
        LocalTime(0),
        RefTime(1),
        DriftSchedule::Table(vec![1, 5000]),
        TimeScale::default(),
        rat("1.5"),
    );
    assert_eq!(c.cycle_len(0), 683);
    assert_eq!(c.cycle_len(1), 1024);
}

#[test]
fn counter_wraps() {
    let ring = Ring::new(8);
    let mut c = ClockModel::new(0, LocalTime(6), RefTime(1), DriftSchedule::ideal(), TimeScale::default(), rat("1"));
    assert_eq!(c.local_time_at(TimeScale::default().ticks(3), ring), LocalTime(1));
    assert_eq!(ring.diff(LocalTime(1), LocalTime(6)), 3);
    assert_eq!(ring.back(LocalTime(1), 3), LocalTime(6));
}

#[test]
fn queue_orders_by_time_node_rank_then_insertion() {
    let mut q = EventQueue::new();
    q.schedule(RefTime(5), 1, 0, "a", None).unwrap();
    q.schedule(RefTime(5), 0, 2, "b", None).unwrap();
    q.schedule(RefTime(5), 0, 1, "c", None).unwrap();
    q.schedule(RefTime(5), 0, 1, "d", None).unwrap();
    q.schedule(RefTime(3), 9, 9, "e", None).unwrap();
    let order: Vec<&str> = std::iter::from_fn(|| q.pop().map(|f| f.payload)).collect();
    assert_eq!(order, ["e", "c", "d", "b", "a"]);
}

#[test]
fn queue_rejects_the_past_and_cancels_groups() {
    let mut q = EventQueue::new();
    let g = CancelGroup { node: 0, tag: 1 };
    q.schedule(RefTime(10), 0, 0, 1, Some(g)).unwrap();
    let single = q.schedule(RefTime(11), 0, 0, 2, None).unwrap();
    q.schedule(RefTime(12), 0, 0, 3, None).unwrap();
    q.cancel_group(g);
    q.cancel(single);
    q.schedule(RefTime(13), 0, 0, 4, Some(g)).unwrap();
    assert_eq!(q.pop().unwrap().payload, 3);
    assert_eq!(q.schedule(RefTime(1), 0, 0, 9, None), Err(EngineError::InThePast { at: RefTime(1), now: RefTime(12) }));
    assert_eq!(q.pop().unwrap().payload, 4);
    assert!(q.is_empty());
}

fn sample_trace() -> Trace {
    let scale = TimeScale::default();
    let ev = |t: u64, node, kind, payload| EventRecord { time: RefTime(t), node, kind, payload };
    Trace {
        meta: TraceMeta {
            n: 4,
            f: 1,
            seed: 7,
            params_digest: "abc".into(),
            faulty: vec![3],
            scale: scale.units(),
            modulus: 1 << 15,
            horizon: scale.ticks(50),
        },
        events: vec![
            ev(1024, 0, EventKind::C, Payload::Tick(LocalTime(1))),
            ev(1536, 1, EventKind::P, Payload::Pulse { counter: 2, tick: LocalTime(9) }),
            ev(1536, 1, EventKind::S, Payload::Send(Wire::Mark(MarkValue::GOOD_BEST))),
            ev(1537, 2, EventKind::R, Payload::Recv { from: 1, wire: Wire::Round { general: 3, round: 2, bit: true } }),
            ev(2000, 2, EventKind::G2, Payload::Estimate { general: 3, estimate: LocalTime(40) }),
            ev(2000, 2, EventKind::G4, Payload::Bit { general: 3, bit: false }),
            ev(2001, 0, EventKind::X, Payload::Note("late round message".into())),
        ],
    }
}

#[test]
fn trace_roundtrips_through_text() {
    let t = sample_trace();
    let text = t.export();
    let mut back = Trace::parse(&text).unwrap();
    if let Payload::Note(s) = &mut back.events[6].payload {
        assert_eq!(s, "late_round_message");
        *s = "late round message".into();
    }
    assert_eq!(back, t);
    assert_eq!(sample_trace().digest(), t.digest());
}

#[test]
fn canonical_order_uses_kind_rank() {
    let mut t = sample_trace();
    t.events.reverse();
    t.canonicalize();
    let kinds: Vec<EventKind> = t.events.iter().map(|e| e.kind).collect();
    assert_eq!(kinds[..4], [EventKind::C, EventKind::P, EventKind::S, EventKind::R]);
    assert_eq!(kinds[4..6], [EventKind::G4, EventKind::G2]);
}

#[test]
fn aligned_example() {
    assert_eq!(aligned_points(&[vec![0, 100], vec![2, 101]], 3, 90, 110, 101), Ok(true));
    assert_eq!(aligned_points(&[vec![0, 100], vec![2, 150]], 3, 90, 110, 150), Ok(false));
    assert_eq!(aligned_points(&[vec![0]], 3, 9, 20, 0), Err(AlignError::SpacingTooSmall { lower: 9, spread: 3 }));
}

#[test]
fn filters_select_by_value() {
    let mut tr = Trail::new();
    tr.record(MarkValue::GOOD, LocalTime(10), 0);
    tr.record(MarkValue::GOOD_BEST, LocalTime(11), 1);
    tr.record(MarkValue::BEST, LocalTime(12), 2);
    tr.record(MarkValue::EMPTY, LocalTime(13), 3);
    assert_eq!(tr.filter(Selector::Any).len(), 4);
    assert_eq!(tr.filter(Selector::Good), vec![(LocalTime(10), 0), (LocalTime(11), 1)]);
    assert_eq!(tr.filter(Selector::GoodBest), vec![(LocalTime(11), 1)]);
}

#[test]
fn blanking_suppresses_recording() {
    let mut tr = Trail::new();
    tr.record(MarkValue::GOOD, LocalTime(1), 0);
    tr.clear_and_blank(2);
    assert!(tr.is_empty());
    assert_eq!(tr.record(MarkValue::GOOD, LocalTime(2), 0), None);
    tr.on_tick();
    tr.on_tick();
    assert_eq!(tr.record(MarkValue::GOOD, LocalTime(4), 0), Some(1));
}

#[test]
fn trail_alignment_reads_relative_ages() {
    let ring = Ring::new(1 << 15);
    let mut tr = Trail::new();
    for (tick, src) in [(0, 0), (2, 1), (100, 0), (101, 1)] {
        tr.record(MarkValue::GOOD, LocalTime(tick), src);
    }
    assert_eq!(is_aligned(&tr, Selector::Good, LocalTime(105), ring, 200, 3, 90, 110), Ok(true));
    assert_eq!(is_aligned(&Trail::new(), Selector::Good, LocalTime(105), ring, 200, 3, 90, 110), Ok(false));
}

fn brute_cluster(points: &[Point], spread: u64, width: usize) -> bool {
    points.iter().any(|p| {
        let mut s: Vec<usize> =
            points.iter().filter(|q| q.age >= p.age && q.age - p.age <= spread).map(|q| q.source).collect();
        s.sort_unstable();
        s.dedup();
        s.len() >= width
    })
}

proptest! {
    #[test]
    fn aligned_matches_oracle(
        lists in prop::collection::vec(prop::collection::btree_set(0i64..120, 0..4), 1..4),
        spread in 0i64..4,
    ) {
        let lists: Vec<Vec<i64>> = lists.into_iter().map(|s| s.into_iter().collect()).collect();
        let end = lists.iter().flatten().copied().max().unwrap_or(0);
        let (lower, upper) = (3 * spread + 10, 3 * spread + 40);
        prop_assert_eq!(aligned_points(&lists, spread, lower, upper, end).unwrap(), sync_oracle(&lists, spread, lower, upper, end));
    }

    #[test]
    fn cluster_matches_brute_force(
        raw in prop::collection::vec((0u64..40, 0usize..5), 0..12),
        spread in 0u64..6,
        width in 1usize..5,
    ) {
        let mut pts: Vec<Point> = raw.iter().enumerate().map(|(i, &(age, source))| Point { age, source, seq: i as u64 }).collect();
        pts.sort();
        prop_assert_eq!(find_cluster(&pts, spread, width, |_| true).is_some(), brute_cluster(&pts, spread, width));
    }

    #[test]
    fn ring_diff_inverts_add(m in 1u64..100_000, a in 0u64..100_000, k in 0u64..100_000) {
        let ring = Ring::new(m);
        let a = ring.wrap(a);
        prop_assert_eq!(ring.diff(ring.add(a, k), a), k % m);
        prop_assert_eq!(ring.back(ring.add(a, k), k), a);
    }

    #[test]
    fn tick_times_increase_within_bounds(table in prop::collection::vec(1u64..3000, 1..8), k in 0u64..50) {
        let mut c = ClockModel::new(0, LocalTime(0), RefTime(1), DriftSchedule::Table(table), TimeScale::default(), rat("1.25"));
        let (a, b) = (c.tick_time(k), c.tick_time(k + 1));
        prop_assert!(b.0 - a.0 >= 820 && b.0 - a.0 <= 1024);
        prop_assert_eq!(c.ticks_until(a), k + 1);
        prop_assert_eq!(c.ticks_until(RefTime(b.0 - 1)), k + 1);
    }
}

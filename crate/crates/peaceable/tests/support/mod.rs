//! Reference evaluations shared by the integration tests.
#![allow(dead_code)]

use peaceable::time::{LocalTime, Ring};
use peaceable::trails::{Selector, Trail};

/// Direct transcription of the synchronization predicate: every point, every
/// candidate interval start.
pub fn sync_oracle(points: &[Vec<i64>], spread: i64, lower: i64, upper: i64, end: i64) -> bool {
    for xs in points {
        for (i, &t) in xs.iter().enumerate() {
            if t + spread <= end {
                let ok =
                    (t - spread..=t).any(|a| points.iter().all(|ys| ys.iter().any(|&y| a <= y && y <= a + spread)));
                if !ok {
                    return false;
                }
            }
            if let Some(&nx) = xs.get(i + 1) {
                if nx < t + lower {
                    return false;
                }
            }
            if t + upper <= end && !xs.get(i + 1).is_some_and(|&nx| nx <= t + upper) {
                return false;
            }
        }
    }
    true
}

/// Alignment of a trail evaluated from its raw marks.
#[allow(clippy::too_many_arguments)]
pub fn aligned_trail_oracle(
    trail: &Trail,
    sel: Selector,
    now: LocalTime,
    ring: Ring,
    window: u64,
    spread: i64,
    lower: i64,
    upper: i64,
) -> bool {
    let mut sources: Vec<usize> = Vec::new();
    let mut lists: Vec<Vec<i64>> = Vec::new();
    for m in trail.marks() {
        let age = ring.diff(now, m.tick);
        if !sel.accepts(m.value) || age > window {
            continue;
        }
        let pos = window as i64 - age as i64;
        match sources.iter().position(|s| *s == m.source) {
            Some(k) => lists[k].push(pos),
            None => {
                sources.push(m.source);
                lists.push(vec![pos]);
            }
        }
    }
    if lists.is_empty() {
        return false;
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    let end = lists.iter().flatten().copied().max().unwrap_or(0);
    sync_oracle(&lists, spread, lower, upper, end)
}

/// Floor midpoint of the `(f+1)`-th and `min(|S|, n−f)`-th smallest of `values`.
pub fn fta_oracle(values: &[u64], n: usize, f: usize) -> Option<u64> {
    if values.len() <= f {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_unstable();
    let hi = s.len().min(n - f);
    Some((s[f] + s[hi - 1]) / 2)
}

//! Per-resource occupancy with folding onto period classes.
//!
//! Every committed interval repeats with its own period over the
//! hyperperiod. Querying a class `T` folds all repetitions modulo `T`
//! (splitting at the period border) and returns the free gaps in `[0, T)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_integer::Integer;

use crate::model::{CopyId, LinkId, NodeId, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Es(NodeId),
    Link(LinkId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Task(TaskId),
    Copy(CopyId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Occupancy {
    owner: Owner,
    start: u64,
    end: u64,
    period: u64,
}

/// Busy intervals folded into one period class, cached per class.
type Folded = RefCell<HashMap<u64, Rc<Vec<(u64, u64)>>>>;

#[derive(Clone, Debug, Default)]
struct ResourceTimeline {
    items: Vec<Occupancy>,
    busy: Folded,
}

impl ResourceTimeline {
    fn busy(&self, class: u64) -> Rc<Vec<(u64, u64)>> {
        if let Some(b) = self.busy.borrow().get(&class) {
            return Rc::clone(b);
        }
        let b = Rc::new(fold(&self.items, class));
        self.busy.borrow_mut().insert(class, Rc::clone(&b));
        b
    }
}

/// Union of all repetitions of `items` taken modulo `class`, merged.
fn fold(items: &[Occupancy], class: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for it in items {
        let len = it.end - it.start;
        if len == 0 {
            continue;
        }
        if len >= class {
            return vec![(0, class)];
        }
        let reps = class.lcm(&it.period) / it.period;
        for k in 0..reps {
            let s = (it.start + k * it.period) % class;
            let e = s + len;
            if e <= class {
                out.push((s, e));
            } else {
                out.push((s, class));
                out.push((0, e - class));
            }
        }
    }
    out.sort_unstable();
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(out.len());
    for (s, e) in out {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Occupancy of every end-system and link.
#[derive(Clone, Debug, Default)]
pub struct Timelines {
    res: HashMap<Resource, ResourceTimeline>,
}

impl Timelines {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves `[start, end)` repeating every `period` on `r`.
    pub fn commit(&mut self, r: Resource, owner: Owner, start: u64, end: u64, period: u64) {
        debug_assert!(start <= end && end <= period, "{start}..{end} beyond period {period}");
        let tl = self.res.entry(r).or_default();
        tl.items.push(Occupancy {
            owner,
            start,
            end,
            period,
        });
        tl.busy.get_mut().clear();
    }

    /// Releases everything `owner` holds.
    pub fn uncommit(&mut self, owner: Owner) {
        for tl in self.res.values_mut() {
            let before = tl.items.len();
            tl.items.retain(|o| o.owner != owner);
            if tl.items.len() != before {
                tl.busy.get_mut().clear();
            }
        }
    }

    /// Busy intervals on `r` folded onto `[0, class)`, sorted and merged.
    pub fn busy(&self, r: Resource, class: u64) -> Rc<Vec<(u64, u64)>> {
        match self.res.get(&r) {
            Some(tl) => tl.busy(class),
            None => Rc::new(Vec::new()),
        }
    }

    /// Free gaps `[start, end)` on `r` within `[0, class)`.
    pub fn free_gaps(&self, r: Resource, class: u64) -> Vec<(u64, u64)> {
        let busy = self.busy(r, class);
        let mut gaps = Vec::with_capacity(busy.len() + 1);
        let mut t = 0;
        for &(s, e) in busy.iter() {
            if s > t {
                gaps.push((t, s));
            }
            t = t.max(e);
        }
        if t < class {
            gaps.push((t, class));
        }
        gaps
    }

    /// The free gap containing `x`.
    pub fn gap_containing(&self, r: Resource, class: u64, x: u64) -> Option<(u64, u64)> {
        self.free_gaps(r, class).into_iter().find(|&(s, e)| s <= x && x < e)
    }

    /// Whether `[start, end)` is entirely free on `r`.
    pub fn is_free(&self, r: Resource, class: u64, start: u64, end: u64) -> bool {
        if start >= end {
            return true;
        }
        self.gap_containing(r, class, start).is_some_and(|(_, e)| end <= e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const R: Resource = Resource::Link(LinkId(0));

    #[test]
    fn empty_is_one_gap() {
        let t = Timelines::new();
        assert_eq!(t.free_gaps(R, 1000), vec![(0, 1000)]);
    }

    #[test]
    fn shorter_period_repeats_in_longer_class() {
        let mut t = Timelines::new();
        t.commit(R, Owner::Task(TaskId(0)), 100, 150, 500);
        assert_eq!(t.free_gaps(R, 1000), vec![(0, 100), (150, 600), (650, 1000)]);
        assert_eq!(t.free_gaps(R, 500), vec![(0, 100), (150, 500)]);
    }

    #[test]
    fn longer_period_wraps_into_shorter_class() {
        let mut t = Timelines::new();
        t.commit(R, Owner::Task(TaskId(0)), 450, 550, 1000);
        // 450..550 folds to 450..500 and 0..50
        assert_eq!(t.free_gaps(R, 500), vec![(50, 450)]);
    }

    #[test]
    fn uncommit_restores() {
        let mut t = Timelines::new();
        t.commit(R, Owner::Copy(CopyId(3)), 10, 20, 100);
        t.commit(R, Owner::Task(TaskId(1)), 40, 50, 100);
        t.uncommit(Owner::Copy(CopyId(3)));
        assert_eq!(t.free_gaps(R, 100), vec![(0, 40), (50, 100)]);
        assert!(t.is_free(R, 100, 0, 40));
        assert!(!t.is_free(R, 100, 30, 41));
    }

    /// Occupied instants of the hyperperiod, reduced modulo `class`.
    fn brute(items: &[(u64, u64, u64)], h: u64, class: u64) -> Vec<bool> {
        let mut busy = vec![false; class as usize];
        for &(s, e, p) in items {
            for k in 0..h / p {
                for x in (s + k * p)..(e + k * p) {
                    busy[(x % h % class) as usize] = true;
                }
            }
        }
        busy
    }

    proptest! {
        #[test]
        fn folding_matches_hyperperiod_expansion(
            raw in prop::collection::vec((prop::sample::select(vec![20u64, 30, 40, 60]), 0u64..60, 1u64..15), 0..6),
            class in prop::sample::select(vec![20u64, 30, 40, 60]),
        ) {
            let h = 120;
            let mut t = Timelines::new();
            let mut items = Vec::new();
            for (i, &(p, s, len)) in raw.iter().enumerate() {
                let s = s % p;
                let e = (s + len).min(p);
                t.commit(R, Owner::Task(TaskId(i)), s, e, p);
                items.push((s, e, p));
            }
            let expect = brute(&items, h, class);
            let mut got = vec![false; class as usize];
            for &(s, e) in t.busy(R, class).iter() {
                for x in s..e {
                    got[x as usize] = true;
                }
            }
            prop_assert_eq!(got, expect);
        }
    }
}

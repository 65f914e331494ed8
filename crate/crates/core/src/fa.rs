//! The fixed-window single-processor allocator.
//!
//! All windows share one span `c` and tasks are unit length. Insertion
//! first decides feasibility from the insertion range (one range query),
//! then runs a slack-oblivious doubling loop: trial slack `e = 2/m` for
//! m = 1, 2, 4, ... with the allocation restored between failed trials.
//! Each trial either jumps immediately in both directions (window long
//! relative to `e`) or places the new slot near one of its sorted
//! neighbours and pushes blockers aside, falling back to a directional
//! jump when more than `m` pushes would be needed.
//!
//! A jump only simulates at first: it grows a span `V` by repeatedly
//! looking up the furthest window owning a slot inside `V`, until `V` has
//! enough empty space to contain a region `R` with at most `m` slots and a
//! unit of slack. Only then does it mutate: sort `R`'s slots, pack them
//! aside to leave a unit gap, and reallocate along the cascade of
//! displaced tasks from the pending window into the gap.
//!
//! Internal indexes are persistent, so backing up and restoring the
//! allocation between trials is O(1).

use crate::geometry::{snap, Interval, Rational};
use crate::idsetrq::{Aggregation, IdSetRq, NoAgg};
use crate::ordering::{Allocation, Instance, InsertionRange, Task, TaskId, Violation};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaError {
    #[error("infeasible insertion (state rolled back)")]
    Infeasible,
    #[error("window span {got} does not match the session's fixed span {want}")]
    WindowSpan { got: Rational, want: Rational },
    #[error("task length must be 1")]
    UnitLength,
    #[error("duplicate task id {0}")]
    DuplicateId(TaskId),
    #[error("unknown task id {0}")]
    UnknownId(TaskId),
    #[error("invalid session state: {0}")]
    BadState(Violation),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// One slot change applied during an operation. `from` is `None` for a
/// fresh placement (including the inserted task's own).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotChange {
    pub id: TaskId,
    pub from: Option<Interval>,
    pub to: Option<Interval>,
}

#[derive(Clone, Debug)]
pub struct FaInsertReport {
    /// Net reallocations: previously-allocated tasks whose slot differs
    /// after the operation.
    pub reallocs: u64,
    /// Window rank the inserted task landed at.
    pub rank: usize,
    /// Trial granularity m = 2/e the successful trial ran at (1 when the
    /// first trial succeeded).
    pub trial_m: u64,
    /// Whether the successful small-window trial needed its second
    /// candidate position after the first push failed.
    pub second_position: bool,
}

/// Window order key: lexicographic (start, end, id); a linear extension of
/// the interval partial order, with ties broken by task id.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct WinKey {
    pub start: Rational,
    pub end: Rational,
    pub id: TaskId,
}

impl WinKey {
    fn of(id: &TaskId, window: &Interval) -> Self {
        WinKey {
            start: window.start().clone(),
            end: window.end().clone(),
            id: id.clone(),
        }
    }
}

/// Slot order key; the task id disambiguates transiently equal positions
/// during cascades.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct SlotKey {
    start: Rational,
    id: TaskId,
}

/// Per-range aggregate (max(start - local_rank), min(end - local_rank));
/// combining shifts the right operand's ranks by the left size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankProfile {
    pub max_start_minus_rank: Rational,
    pub min_end_minus_rank: Rational,
}

pub struct WinAgg;

impl Aggregation<WinKey, ()> for WinAgg {
    type Agg = Option<RankProfile>;
    fn identity() -> Self::Agg {
        None
    }
    fn leaf(key: &WinKey, _: &()) -> Self::Agg {
        Some(RankProfile {
            max_start_minus_rank: key.start.clone(),
            min_end_minus_rank: key.end.clone(),
        })
    }
    fn combine(l: &Self::Agg, r: &Self::Agg, left_len: usize) -> Self::Agg {
        match (l, r) {
            (None, x) => x.clone(),
            (x, None) => x.clone(),
            (Some(a), Some(b)) => {
                let shift = Rational::from(left_len);
                Some(RankProfile {
                    max_start_minus_rank: a
                        .max_start_minus_rank
                        .clone()
                        .max(&b.max_start_minus_rank - &shift),
                    min_end_minus_rank: a
                        .min_end_minus_rank
                        .clone()
                        .min(&b.min_end_minus_rank - &shift),
                })
            }
        }
    }
}

/// (earliest window, latest window) over a consecutive range of slots.
struct SlotAgg;

impl Aggregation<SlotKey, WinKey> for SlotAgg {
    type Agg = Option<(WinKey, WinKey)>;
    fn identity() -> Self::Agg {
        None
    }
    fn leaf(_: &SlotKey, win: &WinKey) -> Self::Agg {
        Some((win.clone(), win.clone()))
    }
    fn combine(l: &Self::Agg, r: &Self::Agg, _: usize) -> Self::Agg {
        match (l, r) {
            (None, x) => x.clone(),
            (x, None) => x.clone(),
            (Some((lmin, lmax)), Some((rmin, rmax))) => Some((
                lmin.clone().min(rmin.clone()),
                lmax.clone().max(rmax.clone()),
            )),
        }
    }
}

#[derive(Clone)]
struct FaTask {
    window: Interval,
    slot: Option<Interval>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Dir {
    Left,
    Right,
    Both,
}

struct Snapshot {
    tasks: IdSetRq<TaskId, FaTask, NoAgg>,
    windows: IdSetRq<WinKey, (), WinAgg>,
    slots: IdSetRq<SlotKey, WinKey, SlotAgg>,
    events_len: usize,
}

pub struct FaSession {
    c: Rational,
    tasks: IdSetRq<TaskId, FaTask, NoAgg>,
    windows: IdSetRq<WinKey, (), WinAgg>,
    slots: IdSetRq<SlotKey, WinKey, SlotAgg>,
    events: Vec<SlotChange>,
    last_reallocs: u64,
    trial_second_position: bool,
}

/// Smallest j >= 0 with base^j >= target; base must exceed 1.
fn pow_reach(base: &Rational, target: &Rational) -> Result<u64, FaError> {
    let one = Rational::one();
    debug_assert!(*base > one);
    let mut acc = one.clone();
    let mut j = 0u64;
    while acc < *target {
        acc = acc * base;
        j += 1;
        if j > 100_000 {
            return Err(FaError::Internal("jump budget search diverged".into()));
        }
    }
    Ok(j)
}

/// Exact check of `count <= max(2*log_{1+eps/2}(14/eps^2) + 34/eps + 6, 14)`
/// via integer-exponent cross-multiplication; no floating point.
pub fn within_realloc_bound(eps: &Rational, count: u64) -> bool {
    if count <= 14 {
        return true;
    }
    let lhs = Rational::from(count) - Rational::from_int(34) / eps - 6;
    if lhs <= Rational::zero() {
        return true;
    }
    // count <= 2 log_b(t) + 34/eps + 6  <=>  b^(lhs/2) <= t  with
    // lhs/2 = p/(2q) in lowest terms  <=>  b^p <= t^(2q)
    let base = Rational::one() + eps / 2;
    let target = Rational::from_int(14) / (eps * eps);
    use num::ToPrimitive;
    let p_i = lhs.numer().to_i64().expect("bound exponent fits i64");
    let q_i = lhs.denom().to_i64().expect("bound exponent fits i64") * 2;
    base.pow(p_i) <= target.pow(q_i)
}

impl FaSession {
    pub fn new(c: Rational) -> Result<Self, FaError> {
        if c < Rational::one() {
            return Err(FaError::WindowSpan {
                got: c.clone(),
                want: Rational::one(),
            });
        }
        Ok(FaSession {
            c,
            tasks: IdSetRq::new(),
            windows: IdSetRq::new(),
            slots: IdSetRq::new(),
            events: Vec::new(),
            last_reallocs: 0,
            trial_second_position: false,
        })
    }

    /// Build a session from an existing solution (used to load generated
    /// insert states). Every task must be allocated.
    pub fn from_state(
        c: Rational,
        inst: &Instance,
        alloc: &Allocation,
    ) -> Result<Self, FaError> {
        let mut s = FaSession::new(c.clone())?;
        if let Err(v) = crate::ordering::is_valid(inst, alloc) {
            return Err(FaError::BadState(v));
        }
        for (task, slot) in inst.tasks.iter().zip(alloc.slots.iter()) {
            if task.window.span() != c {
                return Err(FaError::WindowSpan {
                    got: task.window.span(),
                    want: c.clone(),
                });
            }
            if task.length != Rational::one() {
                return Err(FaError::UnitLength);
            }
            let slot = slot
                .clone()
                .ok_or(FaError::BadState(Violation::SizeMismatch))?;
            if s.tasks.contains(&task.id) {
                return Err(FaError::DuplicateId(task.id.clone()));
            }
            let wkey = WinKey::of(&task.id, &task.window);
            s.tasks = s.tasks.insert(
                task.id.clone(),
                FaTask {
                    window: task.window.clone(),
                    slot: Some(slot.clone()),
                },
            );
            s.windows = s.windows.insert(wkey.clone(), ());
            s.slots = s.slots.insert(
                SlotKey {
                    start: slot.start().clone(),
                    id: task.id.clone(),
                },
                wkey,
            );
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_span(&self) -> &Rational {
        &self.c
    }

    pub fn last_reallocs(&self) -> u64 {
        self.last_reallocs
    }

    pub fn last_log(&self) -> &[SlotChange] {
        &self.events
    }

    /// Current (instance, allocation) in window order.
    pub fn state(&self) -> (Instance, Allocation) {
        let mut tasks = Vec::with_capacity(self.len());
        let mut slots = Vec::with_capacity(self.len());
        for (wkey, _) in self.windows.iter() {
            let rec = self.tasks.get(&wkey.id).expect("index consistency").1;
            tasks.push(Task {
                id: wkey.id.clone(),
                length: Rational::one(),
                window: rec.window.clone(),
            });
            slots.push(rec.slot.clone());
        }
        (Instance::new(tasks), Allocation::new(slots))
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            tasks: self.tasks.clone(),
            windows: self.windows.clone(),
            slots: self.slots.clone(),
            events_len: self.events.len(),
        }
    }

    fn restore(&mut self, snap: &Snapshot) {
        self.tasks = snap.tasks.clone();
        self.windows = snap.windows.clone();
        self.slots = snap.slots.clone();
        self.events.truncate(snap.events_len);
    }

    fn task_rec(&self, id: &TaskId) -> Result<&FaTask, FaError> {
        self.tasks
            .get(id)
            .map(|(_, rec)| rec)
            .ok_or_else(|| FaError::UnknownId(id.clone()))
    }

    fn id_at_rank(&self, rank: usize) -> Result<TaskId, FaError> {
        self.windows
            .select(rank)
            .map(|(k, _)| k.id.clone())
            .ok_or_else(|| FaError::Internal(format!("window rank {rank} out of range")))
    }

    fn slot_at_rank(&self, rank: usize) -> Result<Interval, FaError> {
        let id = self.id_at_rank(rank)?;
        self.task_rec(&id)?
            .slot
            .clone()
            .ok_or_else(|| FaError::Internal(format!("rank {rank} unallocated")))
    }

    /// Change a task's slot, maintaining the slot index and the event log.
    fn set_slot(&mut self, id: &TaskId, to: Option<Interval>) -> Result<(), FaError> {
        let rec = self.task_rec(id)?.clone();
        if rec.slot == to {
            return Ok(());
        }
        let wkey = WinKey::of(id, &rec.window);
        if let Some(old) = &rec.slot {
            self.slots = self.slots.remove(&SlotKey {
                start: old.start().clone(),
                id: id.clone(),
            });
        }
        if let Some(new) = &to {
            self.slots = self.slots.insert(
                SlotKey {
                    start: new.start().clone(),
                    id: id.clone(),
                },
                wkey,
            );
        }
        self.tasks = self.tasks.insert(
            id.clone(),
            FaTask {
                window: rec.window,
                slot: to.clone(),
            },
        );
        self.events.push(SlotChange {
            id: id.clone(),
            from: rec.slot,
            to,
        });
        Ok(())
    }

    /// Number of allocated slots entirely within `w`.
    fn count_within(&self, w: &Interval) -> usize {
        let last_start = w.end() - 1;
        let hi = self.slots.partition_point(|k| k.start <= last_start);
        let lo = self.slots.partition_point(|k| k.start < *w.start());
        hi.saturating_sub(lo)
    }

    /// Clamped empty-space bounds of `w`: from the end of the last slot
    /// starting before `w` (if it reaches in) to the start of the first slot
    /// ending after `w` (if it reaches in).
    fn space_bounds(&self, w: &Interval) -> (Rational, Rational) {
        let lo = self.slots.partition_point(|k| k.start < *w.start());
        let sstart = if lo == 0 {
            w.start().clone()
        } else {
            let (k, _) = self.slots.select(lo - 1).expect("rank in range");
            w.start().clone().max(&k.start + 1)
        };
        let last_start = w.end() - 1;
        let hi = self.slots.partition_point(|k| k.start <= last_start);
        let send = if hi == self.slots.len() {
            w.end().clone()
        } else {
            let (k, _) = self.slots.select(hi).expect("rank in range");
            w.end().clone().min(k.start.clone())
        };
        (sstart, send)
    }

    /// Empty space within `w`: clamped width minus the slots inside.
    fn space_of(&self, w: &Interval) -> Rational {
        let (sstart, send) = self.space_bounds(w);
        send - sstart - Rational::from(self.count_within(w))
    }

    /// (earliest, latest) window keys over slots entirely within `v`.
    fn window_minmax_in(&self, v: &Interval) -> Option<(WinKey, WinKey)> {
        let lo = self.slots.partition_point(|k| k.start < *v.start());
        let last_start = v.end() - 1;
        let hi = self.slots.partition_point(|k| k.start <= last_start);
        if lo >= hi {
            return None;
        }
        self.slots.range_agg(lo, hi - 1).expect("range checked")
    }

    /// k-th smallest allocated slot (0-based).
    fn sorted_slot(&self, k: usize) -> Option<Interval> {
        self.slots
            .select(k)
            .map(|(key, _)| Interval::unit_at(key.start.clone()))
    }

    /// Insertion range for the pending task at window rank `rank`, computed
    /// from the window index aggregates.
    pub fn insertion_range_indexed(&self, rank: usize) -> Result<InsertionRange, FaError> {
        let n = self.len();
        let pre = self
            .windows
            .range_agg(0, rank)
            .map_err(|e| FaError::Internal(e.to_string()))?
            .ok_or_else(|| FaError::Internal("empty prefix".into()))?;
        let suf = self
            .windows
            .range_agg(rank, n - 1)
            .map_err(|e| FaError::Internal(e.to_string()))?
            .ok_or_else(|| FaError::Internal("empty suffix".into()))?;
        Ok(InsertionRange {
            istart: pre.max_start_minus_rank + Rational::from(rank),
            iend: suf.min_end_minus_rank,
        })
    }

    pub fn delete(&mut self, id: &TaskId) -> Result<(), FaError> {
        let rec = self.task_rec(id)?.clone();
        let wkey = WinKey::of(id, &rec.window);
        self.windows = self.windows.remove(&wkey);
        if let Some(slot) = &rec.slot {
            self.slots = self.slots.remove(&SlotKey {
                start: slot.start().clone(),
                id: id.clone(),
            });
        }
        self.tasks = self.tasks.remove(id);
        self.events.clear();
        self.last_reallocs = 0;
        Ok(())
    }

    pub fn insert(&mut self, task: Task) -> Result<FaInsertReport, FaError> {
        if task.window.span() != self.c {
            return Err(FaError::WindowSpan {
                got: task.window.span(),
                want: self.c.clone(),
            });
        }
        if task.length != Rational::one() {
            return Err(FaError::UnitLength);
        }
        if self.tasks.contains(&task.id) {
            return Err(FaError::DuplicateId(task.id.clone()));
        }
        self.events.clear();
        self.last_reallocs = 0;
        let full = self.snapshot();
        let wkey = WinKey::of(&task.id, &task.window);
        self.tasks = self.tasks.insert(
            task.id.clone(),
            FaTask {
                window: task.window.clone(),
                slot: None,
            },
        );
        self.windows = self.windows.insert(wkey.clone(), ());
        let n = self.len();
        let rank = self
            .windows
            .get(&wkey)
            .map(|(r, _)| r)
            .ok_or_else(|| FaError::Internal("inserted window key missing".into()))?;
        let range = self.insertion_range_indexed(rank)?;
        if !range.feasible() {
            self.restore(&full);
            return Err(FaError::Infeasible);
        }
        let base = self.snapshot();
        let mut m: u64 = 1;
        loop {
            self.restore(&base);
            self.trial_second_position = false;
            let e = Rational::new(2, m as i64);
            let threshold = Rational::from_int(7) / &e + 4;
            let trial = if self.c >= threshold {
                self.large_window(&task.id, m, &e)
            } else {
                self.small_window(&task.id, rank, m, &e, &range)
            };
            match trial {
                Ok(true) => break,
                Ok(false) => {
                    if m >= 4 * n as u64 {
                        self.restore(&full);
                        return Err(FaError::Internal(
                            "doubling loop exhausted without success".into(),
                        ));
                    }
                    m *= 2;
                }
                Err(err) => {
                    self.restore(&full);
                    return Err(err);
                }
            }
        }
        // net reallocations: tasks allocated before the op whose slot moved
        let mut net = 0u64;
        for (id, rec) in full.tasks.iter() {
            let now = self.task_rec(id)?;
            if rec.slot != now.slot {
                net += 1;
            }
        }
        self.last_reallocs = net;
        Ok(FaInsertReport {
            reallocs: net,
            rank,
            trial_m: m,
            second_position: self.trial_second_position,
        })
    }

    fn large_window(
        &mut self,
        pending: &TaskId,
        m: u64,
        e: &Rational,
    ) -> Result<bool, FaError> {
        let u = self.task_rec(pending)?.window.clone();
        let base = Rational::one() + e / 2;
        let target = Rational::from_int(28) / e;
        let jumps = pow_reach(&base, &target)? + 1;
        self.jump(pending, m, &u, Dir::Both, jumps)
    }

    fn small_window(
        &mut self,
        pending: &TaskId,
        rank: usize,
        m: u64,
        e: &Rational,
        range: &InsertionRange,
    ) -> Result<bool, FaError> {
        let range_iv = Interval::new(range.istart.clone(), range.iend.clone());
        let internal = |_| FaError::Internal("snap inside feasible range failed".into());
        // the pending task's sorted-allocation neighbours are the (rank-1)-th
        // and rank-th smallest slots; missing neighbours clamp to the range
        let a = match self.sorted_slot(rank) {
            Some(next) => snap(&next.shift_int(-1), &range_iv).map_err(internal)?,
            None => Interval::new(&range.iend - 1, range.iend.clone()),
        };
        let b = match rank.checked_sub(1).and_then(|k| self.sorted_slot(k)) {
            Some(prev) => snap(&prev.shift_int(1), &range_iv).map_err(internal)?,
            None => Interval::new(range.istart.clone(), &range.istart + 1),
        };
        let save = self.snapshot();
        if self.push(pending, rank, m, e, &a)? {
            return Ok(true);
        }
        self.restore(&save);
        if self.push(pending, rank, m, e, &b)? {
            self.trial_second_position = true;
            return Ok(true);
        }
        self.restore(&save);
        Ok(false)
    }

    /// Place the pending slot at `s`, pushing up to `m` blockers aside on
    /// each side (each first swapped into window-rank position), with a
    /// directional jump when pushing is insufficient.
    fn push(
        &mut self,
        pending: &TaskId,
        rank: usize,
        m: u64,
        e: &Rational,
        s: &Interval,
    ) -> Result<bool, FaError> {
        let n = self.len();
        let x_snap = self.slots.clone();
        // X[i]: i-th entry of the sorted partial allocation with the
        // pending rank skipped (0-based window ranks)
        let x_at = |i: usize| -> Option<Interval> {
            let k = if i < rank { i } else { i.checked_sub(1)? };
            x_snap
                .select(k)
                .map(|(key, _)| Interval::unit_at(key.start.clone()))
        };
        let wr = self.task_rec(pending)?.window.clone();
        self.sort_slots_within(&wr)?;
        self.set_slot(pending, Some(s.clone()))?;
        let jump_base = Rational::one() + e / 2;
        let jump_target = Rational::from_int(14) / (e * e);
        let jumps = pow_reach(&jump_base, &jump_target)? + 1;

        // right side
        let mut i = rank + 1;
        while i < n {
            let xi = x_at(i).ok_or_else(|| FaError::Internal("missing X entry".into()))?;
            let prev = self.slot_at_rank(i - 1)?;
            if !prev.overlaps(&xi) {
                break;
            }
            let holder = self.find_holder(&xi, |r| r >= i)?;
            if i == rank + m as usize + 1 {
                let hw = self.task_rec(&holder)?.window.clone();
                self.set_slot(&holder, None)?;
                let edge = self.slot_at_rank(rank + m as usize)?.end().clone();
                let u = Interval::new(edge, hw.end().clone());
                if !self.jump(&holder, m, &u, Dir::Right, jumps)? {
                    return Ok(false);
                }
                break;
            }
            let ti = self.id_at_rank(i)?;
            if ti != holder {
                let si = self.task_rec(&ti)?.slot.clone();
                self.set_slot(&holder, si)?;
            }
            self.set_slot(&ti, Some(prev.shift_int(1)))?;
            i += 1;
        }

        // left side (mirror)
        let mut i = rank as i64 - 1;
        while i >= 0 {
            let iu = i as usize;
            let xi = x_at(iu).ok_or_else(|| FaError::Internal("missing X entry".into()))?;
            let next = self.slot_at_rank(iu + 1)?;
            if !next.overlaps(&xi) {
                break;
            }
            let holder = self.find_holder(&xi, |r| r <= iu)?;
            if i == rank as i64 - m as i64 - 1 {
                let hw = self.task_rec(&holder)?.window.clone();
                self.set_slot(&holder, None)?;
                let edge = self.slot_at_rank(rank - m as usize)?.start().clone();
                let u = Interval::new(hw.start().clone(), edge);
                if !self.jump(&holder, m, &u, Dir::Left, jumps)? {
                    return Ok(false);
                }
                break;
            }
            let ti = self.id_at_rank(iu)?;
            if ti != holder {
                let si = self.task_rec(&ti)?.slot.clone();
                self.set_slot(&holder, si)?;
            }
            self.set_slot(&ti, Some(next.shift_int(-1)))?;
            i -= 1;
        }
        Ok(true)
    }

    /// Task currently holding slot value `x` whose window rank satisfies
    /// `pred`; transient duplicates make the rank filter necessary.
    fn find_holder(
        &self,
        x: &Interval,
        pred: impl Fn(usize) -> bool,
    ) -> Result<TaskId, FaError> {
        let lo = self.slots.partition_point(|k| k.start < *x.start());
        let hi = self.slots.partition_point(|k| k.start <= *x.start());
        let mut found: Option<TaskId> = None;
        for r in lo..hi {
            let (key, wkey) = self.slots.select(r).expect("rank in range");
            let (wrank, _) = self
                .windows
                .get(wkey)
                .ok_or_else(|| FaError::Internal("slot with unknown window".into()))?;
            if pred(wrank) {
                if found.is_some() {
                    return Err(FaError::Internal("ambiguous slot holder".into()));
                }
                found = Some(key.id.clone());
            }
        }
        found.ok_or_else(|| FaError::Internal("no holder for pushed slot".into()))
    }

    /// Sort the slots lying entirely within `w` into window order; returns
    /// the affected (id, window, post-sort slot) triples in window order.
    fn sort_slots_within(
        &mut self,
        w: &Interval,
    ) -> Result<Vec<(TaskId, Interval, Interval)>, FaError> {
        let lo = self.slots.partition_point(|k| k.start < *w.start());
        let last_start = w.end() - 1;
        let hi = self.slots.partition_point(|k| k.start <= last_start);
        let mut slots_in: Vec<Interval> = Vec::with_capacity(hi - lo);
        let mut wins: Vec<WinKey> = Vec::with_capacity(hi - lo);
        for r in lo..hi {
            let (key, wkey) = self.slots.select(r).expect("rank in range");
            slots_in.push(Interval::unit_at(key.start.clone()));
            wins.push(wkey.clone());
        }
        wins.sort();
        let mut out = Vec::with_capacity(wins.len());
        for (wkey, slot) in wins.iter().zip(slots_in) {
            self.set_slot(&wkey.id, Some(slot.clone()))?;
            let window = Interval::new(wkey.start.clone(), wkey.end.clone());
            out.push((wkey.id.clone(), window, slot));
        }
        Ok(out)
    }

    /// Simulated jumping followed by the pack-and-cascade final phase.
    fn jump(
        &mut self,
        pending: &TaskId,
        m: u64,
        u: &Interval,
        dir: Dir,
        jumps: u64,
    ) -> Result<bool, FaError> {
        let mut v = u.clone();
        for _jmp in 0..=jumps {
            let cnt = self.count_within(&v) as u64;
            let blocks = (cnt + 1).div_ceil(m + 1);
            if self.space_of(&v) >= Rational::from(blocks) {
                self.final_phase(pending, m, &v, u, dir)?;
                return Ok(true);
            }
            let Some((minw, maxw)) = self.window_minmax_in(&v) else {
                return Ok(false);
            };
            v = match dir {
                Dir::Both => Interval::new(
                    minw.start.min(v.start().clone()),
                    maxw.end.max(v.end().clone()),
                ),
                Dir::Left => Interval::new(minw.start, v.end().clone()),
                Dir::Right => Interval::new(v.start().clone(), maxw.end),
            };
        }
        Ok(false)
    }

    fn final_phase(
        &mut self,
        pending: &TaskId,
        m: u64,
        v: &Interval,
        u: &Interval,
        dir: Dir,
    ) -> Result<(), FaError> {
        let cnt = self.count_within(v) as u64;
        let blocks = (cnt + 1).div_ceil(m + 1);
        let (sstart, send) = self.space_bounds(v);
        let slot_base = self.slots.partition_point(|k| k.start < *v.start());
        let slot_at = |j: u64| -> Interval {
            let (key, _) = self
                .slots
                .select(slot_base + j as usize)
                .expect("slot rank within v");
            Interval::unit_at(key.start.clone())
        };
        // gaps k = 0..=cnt partition [sstart, send] at slot boundaries
        let gap_start = |k: u64| {
            if k == 0 {
                sstart.clone()
            } else {
                slot_at(k - 1).end().clone()
            }
        };
        let gap_end = |k: u64| {
            if k == cnt {
                send.clone()
            } else {
                slot_at(k).start().clone()
            }
        };
        let block_iv = |a: u64, b: u64| {
            let k0 = a * (m + 1);
            let k1 = (b * (m + 1)).min(cnt + 1) - 1;
            Interval::new(gap_start(k0), gap_end(k1))
        };
        // halve towards the side with larger average space per block
        let (mut lo, mut hi) = (0u64, blocks);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let s1 = self.space_of(&block_iv(lo, mid));
            let s2 = self.space_of(&block_iv(mid, hi));
            if s1 * Rational::from(hi - mid) >= s2 * Rational::from(mid - lo) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r_iv = block_iv(lo, lo + 1);
        debug_assert!(self.count_within(&r_iv) as u64 <= m);
        debug_assert!(self.space_of(&r_iv) >= Rational::one());

        let ev_mark = self.events.len();
        let entries = self.sort_slots_within(&r_iv)?;
        let q = entries.len();
        // left-pack until a window start blocks, leaving the gap there;
        // right-pack the rest
        let mut gap = Interval::new(r_iv.end() - 1, r_iv.end().clone());
        let mut ip = q;
        for (i, (id, win, slot)) in entries.iter().enumerate() {
            let x = (r_iv.start() + Rational::from(i)).max(slot.start() - 1);
            if x < *win.start() {
                gap = Interval::new(x.clone(), x + 1);
                ip = i;
                break;
            }
            self.set_slot(id, Some(Interval::unit_at(x)))?;
        }
        for (i, (id, _win, slot)) in entries.iter().enumerate().skip(ip) {
            let x = (r_iv.end() - Rational::from(q - 1 - i)).min(slot.end() + 1);
            self.set_slot(id, Some(Interval::new(&x - 1, x)))?;
        }

        let dir2 = match dir {
            Dir::Both => {
                if gap.start() < u.start() {
                    Dir::Left
                } else {
                    Dir::Right
                }
            }
            d => d,
        };

        // cascade of reallocations from the pending window into the gap
        let mut j = pending.clone();
        loop {
            let wj = self.task_rec(&j)?.window.clone();
            if wj.contains(&gap) {
                self.set_slot(&j, Some(gap.clone()))?;
                break;
            }
            let Some((minw, maxw)) = self.window_minmax_in(&wj) else {
                return Err(FaError::Internal("cascade found no slot to take".into()));
            };
            let target = match dir2 {
                Dir::Left => minw,
                Dir::Right => maxw,
                Dir::Both => unreachable!("dir resolved before cascade"),
            };
            if target.id == j {
                return Err(FaError::Internal("cascade made no progress".into()));
            }
            let ts = self
                .task_rec(&target.id)?
                .slot
                .clone()
                .ok_or_else(|| FaError::Internal("cascade target unallocated".into()))?;
            self.set_slot(&j, Some(ts))?;
            j = target.id;
        }

        // directional guarantee on explicitly directed jumps: reallocations
        // stay beyond the origin edge (a both-ways jump carries no such
        // guarantee even after its direction is resolved)
        for ev in &self.events[ev_mark..] {
            if let Some(to) = &ev.to {
                let ok = match dir {
                    Dir::Right => to.start() >= u.start(),
                    Dir::Left => to.end() <= u.end(),
                    Dir::Both => true,
                };
                if !ok {
                    return Err(FaError::Internal(format!(
                        "jump reallocated {} to {to} across the {dir:?} origin {u}",
                        ev.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rebuild both indexes from the task records and compare; fuzz support.
    pub fn check_indexes(&self) -> bool {
        let mut windows = IdSetRq::<WinKey, (), WinAgg>::new();
        let mut slots = IdSetRq::<SlotKey, WinKey, SlotAgg>::new();
        for (id, rec) in self.tasks.iter() {
            let wkey = WinKey::of(id, &rec.window);
            windows = windows.insert(wkey.clone(), ());
            if let Some(slot) = &rec.slot {
                slots = slots.insert(
                    SlotKey {
                        start: slot.start().clone(),
                        id: id.clone(),
                    },
                    wkey,
                );
            }
        }
        let wins_match = windows.len() == self.windows.len()
            && windows
                .iter()
                .zip(self.windows.iter())
                .all(|((a, _), (b, _))| a == b);
        let slots_match = slots.len() == self.slots.len()
            && slots
                .iter()
                .zip(self.slots.iter())
                .all(|((a, av), (b, bv))| a == b && av == bv);
        wins_match && slots_match
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{is_solution, is_valid};

    fn iv(s: i64, e: i64) -> Interval {
        Interval::of_ints(s, e)
    }

    fn unit(id: &str, s: i64, e: i64) -> Task {
        Task::unit(id, iv(s, e))
    }

    fn assert_session_valid(s: &FaSession) {
        let (inst, alloc) = s.state();
        assert!(is_solution(&inst, &alloc), "{:?}", is_valid(&inst, &alloc));
    }

    #[test]
    fn insert_into_empty() {
        let mut s = FaSession::new(Rational::from_int(4)).unwrap();
        let rep = s.insert(unit("t0", 0, 4)).unwrap();
        assert_eq!(rep.reallocs, 0);
        assert_session_valid(&s);
    }

    #[test]
    fn insert_free_gap() {
        // three tasks fill [0,3] of [0,4]-windows; fourth fits at [3,4]
        let inst = Instance::new(vec![
            unit("a", 0, 4),
            unit("b", 0, 4),
            unit("c", 0, 4),
        ]);
        let alloc = Allocation::new(vec![Some(iv(0, 1)), Some(iv(1, 2)), Some(iv(2, 3))]);
        let mut s = FaSession::from_state(Rational::from_int(4), &inst, &alloc).unwrap();
        let rep = s.insert(unit("d", 0, 4)).unwrap();
        assert_session_valid(&s);
        assert!(rep.reallocs <= 3, "reallocs = {}", rep.reallocs);
    }

    #[test]
    fn infeasible_insert_rolls_back() {
        let inst = Instance::new(vec![unit("a", 0, 2), unit("b", 0, 2)]);
        let alloc = Allocation::new(vec![Some(iv(0, 1)), Some(iv(1, 2))]);
        let mut s = FaSession::from_state(Rational::from_int(2), &inst, &alloc).unwrap();
        let before = s.state();
        assert_eq!(
            s.insert(unit("c", 0, 2)).unwrap_err(),
            FaError::Infeasible
        );
        assert_eq!(s.state(), before);
        assert!(s.check_indexes());
    }

    #[test]
    fn delete_roundtrip() {
        let mut s = FaSession::new(Rational::from_int(3)).unwrap();
        s.insert(unit("a", 0, 3)).unwrap();
        let before = s.state();
        s.insert(unit("b", 1, 4)).unwrap();
        s.delete(&TaskId::from("b")).unwrap();
        assert_eq!(s.state(), before);
        assert_eq!(s.last_reallocs(), 0);
        assert!(s.delete(&TaskId::from("zz")).is_err());
    }

    #[test]
    fn push_gap_adjacent_no_jump() {
        // pending ranks in the middle; its forced slot [1,2] fits the gap
        let inst = Instance::new(vec![unit("a", 0, 3), unit("z", 0, 3)]);
        let alloc = Allocation::new(vec![Some(iv(0, 1)), Some(iv(2, 3))]);
        let mut s = FaSession::from_state(Rational::from_int(3), &inst, &alloc).unwrap();
        let rep = s.insert(unit("m", 0, 3)).unwrap();
        assert_eq!(rep.reallocs, 0);
        assert_session_valid(&s);
    }

    #[test]
    fn push_single_shift() {
        // inserting last among equal windows pushes the middle task left
        let inst = Instance::new(vec![unit("a", 0, 3), unit("b", 0, 3)]);
        let alloc = Allocation::new(vec![Some(iv(0, 1)), Some(iv(2, 3))]);
        let mut s = FaSession::from_state(Rational::from_int(3), &inst, &alloc).unwrap();
        let rep = s.insert(unit("zz", 0, 3)).unwrap();
        assert_session_valid(&s);
        assert_eq!(rep.reallocs, 1);
        let (_, alloc) = s.state();
        assert_eq!(
            alloc.slots,
            vec![Some(iv(0, 1)), Some(iv(1, 2)), Some(iv(2, 3))]
        );
    }

    #[test]
    fn push_chain_triggers_jump() {
        // dense run right of the insertion point; pushing one slot is not
        // enough at m=1 so a right-directed jump finishes the job
        let c = Rational::from_int(5);
        let inst = Instance::new(vec![
            unit("a1", 0, 5),
            unit("a2", 0, 5),
            unit("a3", 0, 5),
            unit("b1", 1, 6),
            unit("b2", 2, 7),
        ]);
        let alloc = Allocation::new(vec![
            Some(iv(0, 1)),
            Some(iv(1, 2)),
            Some(iv(2, 3)),
            Some(iv(3, 4)),
            Some(Interval::new(Rational::new(9, 2), Rational::new(11, 2))),
        ]);
        let mut s = FaSession::from_state(c, &inst, &alloc).unwrap();
        let rep = s.insert(unit("p", 0, 5)).unwrap();
        assert_session_valid(&s);
        assert!(rep.reallocs >= 1, "expected movement, got {}", rep.reallocs);
    }

    #[test]
    fn two_hop_cascade() {
        // [0,31] is packed solid; the only free region [31,46] is reachable
        // from the pending window [0,16] via mid ([15,31]) then far
        // ([30,46]), so exactly those two tasks cascade.
        let c = Rational::from_int(16);
        let mut tasks = vec![unit("mid", 15, 31), unit("far", 30, 46)];
        let mut slots = vec![Some(iv(15, 16)), Some(iv(30, 31))];
        for i in 0..15 {
            tasks.push(unit(&format!("f{i:02}"), 0, 16));
            slots.push(Some(iv(i, i + 1)));
        }
        for i in 0..14 {
            tasks.push(unit(&format!("g{i:02}"), 12 + i, 28 + i));
            slots.push(Some(iv(16 + i, 17 + i)));
        }
        let inst = Instance::new(tasks);
        let alloc = Allocation::new(slots);
        let mut s = FaSession::from_state(c, &inst, &alloc).unwrap();
        let rep = s.insert(unit("p", 0, 16)).unwrap();
        assert_session_valid(&s);
        assert_eq!(rep.reallocs, 2);
        let (_, after) = s.state();
        // far landed in the free region, beyond its old slot
        let far_slot = s
            .state()
            .0
            .tasks
            .iter()
            .position(|t| t.id.as_str() == "far")
            .map(|i| after.slots[i].clone().unwrap())
            .unwrap();
        assert!(*far_slot.start() >= Rational::from_int(31));
    }

    #[test]
    fn indexed_insertion_range_matches_scan() {
        let inst = Instance::new(vec![
            unit("a", 0, 3),
            unit("b", 1, 4),
            unit("c", 2, 5),
        ]);
        let alloc = Allocation::new(vec![Some(iv(0, 1)), Some(iv(1, 2)), Some(iv(2, 3))]);
        let s = FaSession::from_state(Rational::from_int(3), &inst, &alloc).unwrap();
        for rank in 0..3 {
            let got = s.insertion_range_indexed(rank).unwrap();
            let want = crate::ordering::insertion_range_at(&inst, rank);
            assert_eq!(got, want, "rank {rank}");
        }
    }

    #[test]
    fn realloc_bound_predicate() {
        let half = Rational::new(1, 2);
        // bound at eps = 1/2 is about 110.1
        assert!(within_realloc_bound(&half, 110));
        assert!(!within_realloc_bound(&half, 111));
        assert!(within_realloc_bound(&half, 14));
        let eighth = Rational::new(1, 8);
        assert!(within_realloc_bound(&eighth, 100));
    }
}

//! The aligned variable-window allocator and the alignment reduction.
//!
//! Windows are aligned (dyadic) intervals and slots are unit cells at
//! integer coordinates, so the windows form a laminar family. Insertion
//! aligns the incoming window, rejects it unless the aligned instance stays
//! 2-underallocated (a laminar Hall check over the new window's ancestors),
//! places the task at `best` (the descent into emptier halves), and repairs
//! either an exact cell collision or a sibling imbalance by moving one
//! task. Making at most one reallocation per insertion is monitored, not
//! guaranteed; validity is checked by the callers after every operation.

use crate::geometry::{align, aligned_hull, AlignedInterval, Interval, Rational};
use crate::idsetrq::{Aggregation, IdSetRq, NoAgg};
use crate::oracle::{oracle_feasible, OracleError, OracleLimits};
use crate::ordering::{Allocation, Instance, Task, TaskId, Violation};
use num::BigInt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VaError {
    #[error("aligned instance would not remain 2-underallocated (state rolled back)")]
    NotUnderallocated,
    #[error("window admits no aligned interval")]
    Unalignable,
    #[error("task length must be 1")]
    UnitLength,
    #[error("duplicate task id {0}")]
    DuplicateId(TaskId),
    #[error("unknown task id {0}")]
    UnknownId(TaskId),
    #[error("window {0:?} is not aligned")]
    NotAligned(Interval),
    #[error("selector called on an interval without slots")]
    EmptySelector,
    #[error("invalid state: {0}")]
    BadState(Violation),
    #[error("oracle error: {0}")]
    Oracle(#[from] OracleError),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Best,
    Bad,
}

/// One slot change applied during an operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VaSlotChange {
    pub id: TaskId,
    pub from: Option<Interval>,
    pub to: Option<Interval>,
}

#[derive(Clone, Debug)]
pub struct VaInsertReport {
    pub reallocs: u64,
    /// Aligned window actually stored for the task.
    pub aligned_window: AlignedInterval,
}

/// Slot cell key: (cell start, task id).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    start: Rational,
    id: TaskId,
}

/// Max window span over a range of slots ("high"); empty ranges read as 0.
struct MaxSpanAgg;

impl Aggregation<CellKey, Rational> for MaxSpanAgg {
    type Agg = Option<Rational>;
    fn identity() -> Self::Agg {
        None
    }
    fn leaf(_: &CellKey, span: &Rational) -> Self::Agg {
        Some(span.clone())
    }
    fn combine(l: &Self::Agg, r: &Self::Agg, _: usize) -> Self::Agg {
        match (l, r) {
            (None, x) => x.clone(),
            (x, None) => x.clone(),
            (Some(a), Some(b)) => Some(a.clone().max(b.clone())),
        }
    }
}

/// Per distinct window value: multiplicity sum plus max window end (for the
/// aligned hull).
struct WinCountAgg;

impl Aggregation<(Rational, Rational), u64> for WinCountAgg {
    type Agg = (u64, Option<Rational>);
    fn identity() -> Self::Agg {
        (0, None)
    }
    fn leaf(key: &(Rational, Rational), count: &u64) -> Self::Agg {
        (*count, Some(key.1.clone()))
    }
    fn combine(l: &Self::Agg, r: &Self::Agg, _: usize) -> Self::Agg {
        let max_end = match (&l.1, &r.1) {
            (None, x) => x.clone(),
            (x, None) => x.clone(),
            (Some(a), Some(b)) => Some(a.clone().max(b.clone())),
        };
        (l.0 + r.0, max_end)
    }
}

#[derive(Clone)]
struct VaTask {
    window: AlignedInterval,
    slot: Option<BigInt>,
}

pub struct VaSession {
    tasks: IdSetRq<TaskId, VaTask, NoAgg>,
    slots: IdSetRq<CellKey, Rational, MaxSpanAgg>,
    win_counts: IdSetRq<(Rational, Rational), u64, WinCountAgg>,
    events: Vec<VaSlotChange>,
    last_reallocs: u64,
}

fn cell_interval(start: &BigInt) -> Interval {
    Interval::unit_at(Rational::from_big(start.clone()))
}

impl Default for VaSession {
    fn default() -> Self {
        Self::new()
    }
}

impl VaSession {
    pub fn new() -> Self {
        VaSession {
            tasks: IdSetRq::new(),
            slots: IdSetRq::new(),
            win_counts: IdSetRq::new(),
            events: Vec::new(),
            last_reallocs: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn last_reallocs(&self) -> u64 {
        self.last_reallocs
    }

    pub fn last_log(&self) -> &[VaSlotChange] {
        &self.events
    }

    /// Current (instance, allocation) sorted by (window, id).
    pub fn state(&self) -> (Instance, Allocation) {
        let mut rows: Vec<(TaskId, AlignedInterval, Option<BigInt>)> = self
            .tasks
            .iter()
            .map(|(id, rec)| (id.clone(), rec.window.clone(), rec.slot.clone()))
            .collect();
        rows.sort_by(|a, b| {
            a.1.to_interval()
                .lex_cmp(&b.1.to_interval())
                .then_with(|| a.0.cmp(&b.0))
        });
        let tasks = rows
            .iter()
            .map(|(id, w, _)| Task {
                id: id.clone(),
                length: Rational::one(),
                window: w.to_interval(),
            })
            .collect();
        let slots = rows
            .iter()
            .map(|(_, _, s)| s.as_ref().map(cell_interval))
            .collect();
        (Instance::new(tasks), Allocation::new(slots))
    }

    /// Smallest aligned interval containing every window, if any tasks
    /// exist.
    pub fn root_scope(&self) -> Option<AlignedInterval> {
        let (min_key, _) = self.win_counts.select(0)?;
        let n = self.win_counts.len();
        let (_, max_end) = self
            .win_counts
            .range_agg(0, n - 1)
            .expect("nonempty window counts");
        Some(aligned_hull(&min_key.0, &max_end?, 0))
    }

    /// Number of allocated slots within the aligned interval `x`.
    pub fn count(&self, x: &AlignedInterval) -> u64 {
        let iv = x.to_interval();
        let last_start = iv.end() - 1;
        let hi = self.slots.partition_point(|k| k.start <= last_start);
        let lo = self.slots.partition_point(|k| k.start < *iv.start());
        (hi - lo) as u64
    }

    /// Largest window span among tasks with slots within `x`; 0 when empty.
    pub fn high(&self, x: &AlignedInterval) -> Rational {
        let iv = x.to_interval();
        let last_start = iv.end() - 1;
        let hi = self.slots.partition_point(|k| k.start <= last_start);
        let lo = self.slots.partition_point(|k| k.start < *iv.start());
        if lo >= hi {
            return Rational::zero();
        }
        self.slots
            .range_agg(lo, hi - 1)
            .expect("range checked")
            .unwrap_or_else(Rational::zero)
    }

    /// Descend to a unit cell: `Best` prefers the emptier half (ties: the
    /// half with larger max window span, then left); `Bad` prefers the half
    /// with larger max window span (ties: larger count, then left).
    pub fn select(&self, x: &AlignedInterval, mode: SelectMode) -> Result<AlignedInterval, VaError> {
        if mode == SelectMode::Bad && self.count(x) == 0 {
            return Err(VaError::EmptySelector);
        }
        let mut cur = x.clone();
        while cur.level() > 0 {
            let a = cur.left_half();
            let b = cur.right_half();
            cur = match mode {
                SelectMode::Best => {
                    let (ca, cb) = (self.count(&a), self.count(&b));
                    if ca < cb {
                        a
                    } else if ca > cb {
                        b
                    } else if self.high(&a) >= self.high(&b) {
                        a
                    } else {
                        b
                    }
                }
                SelectMode::Bad => {
                    let (ha, hb) = (self.high(&a), self.high(&b));
                    if ha > hb {
                        a
                    } else if ha < hb {
                        b
                    } else if self.count(&a) >= self.count(&b) {
                        a
                    } else {
                        b
                    }
                }
            };
        }
        Ok(cur)
    }

    /// Walk up from the just-placed cell: stop with the first ancestor
    /// holding more than its sibling plus one; `None` once the count is
    /// trivial or the walk reaches the hull of all windows.
    pub fn imbalance(&self, x: &AlignedInterval) -> Option<AlignedInterval> {
        let root = self.root_scope()?;
        let mut cur = x.clone();
        loop {
            if cur == root || !root.contains(&cur) {
                return None;
            }
            let c = self.count(&cur);
            if c <= 1 {
                return None;
            }
            if c > self.count(&cur.sibling()) + 1 {
                return Some(cur);
            }
            cur = cur.parent();
        }
    }

    fn task_rec(&self, id: &TaskId) -> Result<&VaTask, VaError> {
        self.tasks
            .get(id)
            .map(|(_, rec)| rec)
            .ok_or_else(|| VaError::UnknownId(id.clone()))
    }

    fn set_slot(&mut self, id: &TaskId, to: Option<BigInt>) -> Result<(), VaError> {
        let rec = self.task_rec(id)?.clone();
        if rec.slot == to {
            return Ok(());
        }
        if let Some(old) = &rec.slot {
            self.slots = self.slots.remove(&CellKey {
                start: Rational::from_big(old.clone()),
                id: id.clone(),
            });
        }
        if let Some(new) = &to {
            self.slots = self.slots.insert(
                CellKey {
                    start: Rational::from_big(new.clone()),
                    id: id.clone(),
                },
                rec.window.span(),
            );
        }
        self.events.push(VaSlotChange {
            id: id.clone(),
            from: rec.slot.as_ref().map(cell_interval),
            to: to.as_ref().map(cell_interval),
        });
        self.tasks = self.tasks.insert(
            id.clone(),
            VaTask {
                window: rec.window,
                slot: to,
            },
        );
        Ok(())
    }

    fn bump_window_count(&mut self, w: &AlignedInterval, delta: i64) {
        let key = (w.start(), w.end());
        let cur = self.win_counts.get(&key).map(|(_, v)| *v).unwrap_or(0);
        let next = (cur as i64 + delta).max(0) as u64;
        self.win_counts = if next == 0 {
            self.win_counts.remove(&key)
        } else {
            self.win_counts.insert(key, next)
        };
    }

    /// Count of windows contained in the aligned interval `a`: all window
    /// values starting inside it except those that strictly contain it
    /// (laminar, so such values share `a`'s start and end beyond it).
    fn windows_within(&self, a: &Interval) -> u64 {
        let lo = self.win_counts.partition_point(|k| k.0 < *a.start());
        let hi = self.win_counts.partition_point(|k| k.0 < *a.end());
        let total = self
            .win_counts
            .range_agg_half_open(lo, hi)
            .expect("range checked")
            .0;
        let over_lo = self
            .win_counts
            .partition_point(|k| k.0 < *a.start() || (k.0 == *a.start() && k.1 <= *a.end()));
        let over_hi = self.win_counts.partition_point(|k| k.0 <= *a.start());
        let over = self
            .win_counts
            .range_agg_half_open(over_lo, over_hi)
            .expect("range checked")
            .0;
        total - over
    }

    /// Laminar Hall check at gamma = 2 restricted to the ancestors of `w`
    /// (the only intervals whose count changed); sound given the invariant
    /// that the check held before.
    fn hall_ok_around(&self, w: &AlignedInterval) -> bool {
        let Some(root) = self.root_scope() else {
            return true;
        };
        let two = Rational::from_int(2);
        let mut cur = w.clone();
        loop {
            let needed = Rational::from(self.windows_within(&cur.to_interval())) * &two;
            if needed > cur.span() {
                return false;
            }
            if cur == root || cur.contains(&root) {
                return true;
            }
            cur = cur.parent();
        }
    }

    /// Whether inserting a task with this aligned window would keep the
    /// instance 2-underallocated (no mutation).
    pub fn admits(&self, w: &AlignedInterval) -> bool {
        let mut probe = VaSession {
            tasks: self.tasks.clone(),
            slots: self.slots.clone(),
            win_counts: self.win_counts.clone(),
            events: Vec::new(),
            last_reallocs: 0,
        };
        probe.bump_window_count(w, 1);
        probe.hall_ok_around(w)
    }

    pub fn insert(&mut self, task: Task) -> Result<VaInsertReport, VaError> {
        if task.length != Rational::one() {
            return Err(VaError::UnitLength);
        }
        if self.tasks.contains(&task.id) {
            return Err(VaError::DuplicateId(task.id.clone()));
        }
        let aligned = align(&task.window).map_err(|_| VaError::Unalignable)?;
        self.events.clear();
        self.last_reallocs = 0;

        self.bump_window_count(&aligned, 1);
        if !self.hall_ok_around(&aligned) {
            self.bump_window_count(&aligned, -1);
            return Err(VaError::NotUnderallocated);
        }
        self.tasks = self.tasks.insert(
            task.id.clone(),
            VaTask {
                window: aligned.clone(),
                slot: None,
            },
        );

        let cell = self.select(&aligned, SelectMode::Best)?;
        let cell_start = cell.start();
        self.set_slot(&task.id, Some(cell_start.floor_big()))?;

        // exact collision: another task already on this cell
        let lo = self.slots.partition_point(|k| k.start < cell_start);
        let hi = self.slots.partition_point(|k| k.start <= cell_start);
        let mut collider: Option<TaskId> = None;
        for r in lo..hi {
            let (key, _) = self.slots.select(r).expect("rank in range");
            if key.id != task.id {
                collider = Some(key.id.clone());
            }
        }
        if let Some(other) = collider {
            let ow = self.task_rec(&other)?.window.clone();
            let target = self.select(&ow, SelectMode::Best)?;
            self.set_slot(&other, Some(target.start().floor_big()))?;
            self.last_reallocs = 1;
            return Ok(VaInsertReport {
                reallocs: 1,
                aligned_window: aligned,
            });
        }

        // imbalance correction
        if let Some(x) = self.imbalance(&AlignedInterval::new(0, cell_start.floor_big())) {
            let bad_cell = self.select(&x, SelectMode::Bad)?;
            let holder = self.holder_of(&bad_cell)?;
            let hw = self.task_rec(&holder)?.window.clone();
            let target = self.select(&hw, SelectMode::Best)?;
            self.set_slot(&holder, Some(target.start().floor_big()))?;
            self.last_reallocs = 1;
            return Ok(VaInsertReport {
                reallocs: 1,
                aligned_window: aligned,
            });
        }

        Ok(VaInsertReport {
            reallocs: 0,
            aligned_window: aligned,
        })
    }

    fn holder_of(&self, cell: &AlignedInterval) -> Result<TaskId, VaError> {
        let start = cell.start();
        let lo = self.slots.partition_point(|k| k.start < start);
        let hi = self.slots.partition_point(|k| k.start <= start);
        if lo >= hi {
            return Err(VaError::EmptySelector);
        }
        let (key, _) = self.slots.select(lo).expect("rank in range");
        Ok(key.id.clone())
    }

    pub fn delete(&mut self, id: &TaskId) -> Result<(), VaError> {
        let rec = self.task_rec(id)?.clone();
        if let Some(slot) = &rec.slot {
            self.slots = self.slots.remove(&CellKey {
                start: Rational::from_big(slot.clone()),
                id: id.clone(),
            });
        }
        self.bump_window_count(&rec.window, -1);
        self.tasks = self.tasks.remove(id);
        self.events.clear();
        self.last_reallocs = 0;
        Ok(())
    }
}

fn is_power_of_two(r: &Rational) -> bool {
    let pow2 = |n: &BigInt| {
        let one = BigInt::from(1);
        n > &BigInt::from(0) && (n & &(n - &one)) == BigInt::from(0)
    };
    (r.denom() == &BigInt::from(1) && pow2(r.numer()))
        || (r.numer() == &BigInt::from(1) && pow2(r.denom()))
}

/// Exact gamma-underallocation for instances whose windows are all aligned.
///
/// For power-of-two gamma this is the laminar Hall condition (for every
/// distinct window value X, gamma times the number of windows within X is
/// at most span(X)), which matches gamma-feasibility exactly. For other
/// gammas Hall is necessary but not sufficient, so the exact oracle decides.
pub fn aligned_underallocated(
    inst: &Instance,
    gamma: &Rational,
    limits: &OracleLimits,
) -> Result<bool, VaError> {
    if *gamma <= Rational::zero() {
        return Err(VaError::Oracle(OracleError::BadGamma));
    }
    let mut windows = Vec::with_capacity(inst.len());
    for t in &inst.tasks {
        if t.length != Rational::one() {
            return Err(VaError::UnitLength);
        }
        let a = AlignedInterval::from_interval(&t.window)
            .ok_or_else(|| VaError::NotAligned(t.window.clone()))?;
        windows.push(a);
    }
    if !is_power_of_two(gamma) {
        return Ok(oracle_feasible(inst, gamma, limits)?);
    }
    let mut distinct: Vec<&AlignedInterval> = windows.iter().collect();
    distinct.sort_by(|a, b| {
        a.to_interval()
            .lex_cmp(&b.to_interval())
            .then(a.level().cmp(&b.level()))
    });
    distinct.dedup_by(|a, b| a == b);
    for x in distinct {
        let xi = x.to_interval();
        let inside = windows.iter().filter(|w| xi.contains(&w.to_interval())).count();
        if Rational::from(inside) * gamma > x.span() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Replace every window with its largest contained aligned interval.
pub fn align_instance(inst: &Instance) -> Result<Instance, VaError> {
    let tasks = inst
        .tasks
        .iter()
        .map(|t| {
            let a = align(&t.window).map_err(|_| VaError::Unalignable)?;
            Ok(Task {
                id: t.id.clone(),
                length: t.length.clone(),
                window: a.to_interval(),
            })
        })
        .collect::<Result<Vec<_>, VaError>>()?;
    Ok(Instance::new(tasks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{is_solution, is_valid};

    fn iv(s: i64, e: i64) -> Interval {
        Interval::of_ints(s, e)
    }

    fn assert_session_valid(s: &VaSession) {
        let (inst, alloc) = s.state();
        assert!(is_solution(&inst, &alloc), "{:?}", is_valid(&inst, &alloc));
        // every slot is an aligned unit cell inside its window
        for (t, slot) in inst.tasks.iter().zip(alloc.slots.iter()) {
            let slot = slot.as_ref().unwrap();
            assert!(slot.start().is_integer());
            assert!(t.window.contains(slot));
        }
    }

    #[test]
    fn insert_empty_leftmost_cell() {
        let mut s = VaSession::new();
        let rep = s.insert(Task::unit("a", iv(0, 8))).unwrap();
        assert_eq!(rep.reallocs, 0);
        let (_, alloc) = s.state();
        assert_eq!(alloc.slots[0], Some(iv(0, 1)));
        assert_session_valid(&s);
    }

    #[test]
    fn second_insert_same_small_window_fails_check() {
        let mut s = VaSession::new();
        s.insert(Task::unit("a", iv(0, 2))).unwrap();
        let before = s.state();
        assert_eq!(
            s.insert(Task::unit("b", iv(0, 2))).unwrap_err(),
            VaError::NotUnderallocated
        );
        assert_eq!(s.state(), before);
    }

    #[test]
    fn best_select_examples() {
        let mut s = VaSession::new();
        // empty [0,4]: all ties resolve left
        s.bump_window_count(&AlignedInterval::new(2, 0), 1);
        let best = s.select(&AlignedInterval::new(2, 0), SelectMode::Best).unwrap();
        assert_eq!(best.to_interval(), iv(0, 1));
        s.bump_window_count(&AlignedInterval::new(2, 0), -1);

        // slots at [0,1] and [1,2]: right half emptier, then leftmost
        let mut s = VaSession::new();
        for (i, cell) in [0i64, 1].iter().enumerate() {
            let id = TaskId::from(format!("t{i}"));
            s.bump_window_count(&AlignedInterval::new(3, 0), 1);
            s.tasks = s.tasks.insert(
                id.clone(),
                VaTask {
                    window: AlignedInterval::new(3, 0),
                    slot: None,
                },
            );
            s.set_slot(&id, Some(BigInt::from(*cell))).unwrap();
        }
        let best = s.select(&AlignedInterval::new(2, 0), SelectMode::Best).unwrap();
        assert_eq!(best.to_interval(), iv(2, 3));
    }

    #[test]
    fn bad_select_follows_high() {
        let mut s = VaSession::new();
        s.insert(Task::unit("wide", iv(0, 16))).unwrap(); // slot [0,1], span 16
        s.insert(Task::unit("mid", iv(2, 4))).unwrap(); // slot [2,3], span 2
        let bad = s.select(&AlignedInterval::new(2, 0), SelectMode::Bad).unwrap();
        assert_eq!(bad.to_interval(), iv(0, 1));
        assert!(s
            .select(&AlignedInterval::new(2, 2), SelectMode::Bad)
            .is_err());
    }

    #[test]
    fn imbalance_examples() {
        let mut s = VaSession::new();
        s.insert(Task::unit("a", iv(0, 16))).unwrap();
        // fresh slot, count 1 -> absent
        assert_eq!(s.imbalance(&AlignedInterval::new(0, 0)), None);
        // craft an imbalance directly: 3 slots in [0,4], 1 in [4,8]
        let mut s = VaSession::new();
        for (i, cell) in [0i64, 1, 2, 4].iter().enumerate() {
            let id = format!("t{i}");
            s.bump_window_count(&AlignedInterval::new(4, 0), 1);
            s.tasks = s.tasks.insert(
                TaskId::from(id.as_str()),
                VaTask {
                    window: AlignedInterval::new(4, 0),
                    slot: None,
                },
            );
            s.set_slot(&TaskId::from(id.as_str()), Some(BigInt::from(*cell)))
                .unwrap();
        }
        let x = AlignedInterval::new(2, 0); // [0,4] with 3 slots, sibling 1
        assert_eq!(s.imbalance(&x), Some(x.clone()));
        // balanced all the way up: 1 slot per quarter
        let mut s = VaSession::new();
        for (i, cell) in [0i64, 4, 8, 12].iter().enumerate() {
            let id = format!("t{i}");
            s.bump_window_count(&AlignedInterval::new(4, 0), 1);
            s.tasks = s.tasks.insert(
                TaskId::from(id.as_str()),
                VaTask {
                    window: AlignedInterval::new(4, 0),
                    slot: None,
                },
            );
            s.set_slot(&TaskId::from(id.as_str()), Some(BigInt::from(*cell)))
                .unwrap();
        }
        assert_eq!(s.imbalance(&AlignedInterval::new(0, 0)), None);
    }

    #[test]
    fn aligned_underallocated_examples() {
        let lim = OracleLimits::default();
        let one = |w| Instance::new(vec![Task::unit("a", w)]);
        assert!(aligned_underallocated(&one(iv(0, 2)), &Rational::from_int(2), &lim).unwrap());
        let two = Instance::new(vec![Task::unit("a", iv(0, 2)), Task::unit("b", iv(0, 2))]);
        assert!(!aligned_underallocated(&two, &Rational::from_int(2), &lim).unwrap());
        // aligned counterexample: 8 x [64,128] + [88,96] is not
        // 7-underallocated (non-power-of-two gamma goes through the oracle)
        let mut tasks: Vec<Task> = (0..8)
            .map(|i| Task::unit(format!("b{i}"), iv(64, 128)))
            .collect();
        tasks.push(Task::unit("s", iv(88, 96)));
        let inst = Instance::new(tasks);
        assert!(!aligned_underallocated(&inst, &Rational::from_int(7), &lim).unwrap());
        // ... and the laminar Hall check alone would accept gamma 7, which
        // is exactly why the power-of-two fast path is restricted
        assert!(aligned_underallocated(&inst, &Rational::from_int(4), &lim).unwrap());
        assert!(!aligned_underallocated(&inst, &Rational::from_int(8), &lim).unwrap());
        // non-aligned windows are rejected
        let bad = Instance::new(vec![Task::unit("a", iv(1, 3))]);
        assert!(matches!(
            aligned_underallocated(&bad, &Rational::from_int(2), &lim),
            Err(VaError::NotAligned(_))
        ));
    }

    #[test]
    fn align_instance_examples() {
        // already aligned -> unchanged
        let inst = Instance::new(vec![Task::unit("a", iv(0, 8)), Task::unit("b", iv(8, 16))]);
        assert_eq!(align_instance(&inst).unwrap(), inst);
        // the counterexample windows map as in the alignment remark
        let mut tasks: Vec<Task> = (0..8)
            .map(|i| Task::unit(format!("b{i}"), iv(1, 255)))
            .collect();
        tasks.push(Task::unit("s", iv(82, 110)));
        let aligned = align_instance(&Instance::new(tasks)).unwrap();
        assert!(aligned.tasks[..8]
            .iter()
            .all(|t| t.window == iv(64, 128)));
        assert_eq!(aligned.tasks[8].window, iv(88, 96));
        // windows shrink, ids and count preserved
        assert_eq!(aligned.len(), 9);
    }

    #[test]
    fn collision_path_single_realloc() {
        // two equal windows: the second insert's best pick collides with
        // the first task's cell? find a configuration exercising the
        // collision branch by inserting into nested windows
        let mut s = VaSession::new();
        s.insert(Task::unit("outer", iv(0, 8))).unwrap(); // [0,1]
        s.insert(Task::unit("inner", iv(0, 2))).unwrap(); // best([0,2]) = [0,1]? collision
        assert_session_valid(&s);
        // whatever branch was taken, at most one reallocation happened
        assert!(s.last_reallocs() <= 1);
    }

    #[test]
    fn delete_roundtrip() {
        let mut s = VaSession::new();
        s.insert(Task::unit("a", iv(0, 8))).unwrap();
        let before = s.state();
        s.insert(Task::unit("b", iv(0, 4))).unwrap();
        s.delete(&TaskId::from("b")).unwrap();
        assert_eq!(s.state(), before);
        assert_eq!(s.last_reallocs(), 0);
        assert!(s.delete(&TaskId::from("zz")).is_err());
    }
}

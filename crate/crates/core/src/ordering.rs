//! Instance/allocation model, validity checking, the sort utility for
//! ordered instances, Leftmost/Rightmost greedies, Near, and the insertion
//! range computation.

use crate::geometry::{Interval, Rational};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Opaque task identifier. Ordering is lexicographic and is used to break
/// ties between identical windows.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn new(s: impl Into<String>) -> Self {
        TaskId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        TaskId(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub length: Rational,
    pub window: Interval,
}

impl Task {
    pub fn new(id: impl Into<TaskId>, length: Rational, window: Interval) -> Self {
        let length_ok = length > Rational::zero() && window.span() >= length;
        assert!(length_ok, "window span must be >= length > 0");
        Task {
            id: id.into(),
            length,
            window,
        }
    }

    pub fn unit(id: impl Into<TaskId>, window: Interval) -> Self {
        Task::new(id, Rational::one(), window)
    }
}

/// Ordered collection of tasks. "Ordered" means windows are sorted under the
/// interval partial order (consecutive windows comparable componentwise);
/// [`Instance::sort_by_window`] produces the lexicographic (start, end, id)
/// linear extension.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Instance {
    pub tasks: Vec<Task>,
}

impl Instance {
    pub fn new(tasks: Vec<Task>) -> Self {
        Instance { tasks }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn ids_unique(&self) -> bool {
        let mut ids: Vec<&TaskId> = self.tasks.iter().map(|t| &t.id).collect();
        ids.sort();
        ids.windows(2).all(|w| w[0] != w[1])
    }

    /// Windows sorted under the partial order: each consecutive pair must be
    /// comparable with the earlier one `<=` the later.
    pub fn is_ordered(&self) -> bool {
        self.tasks
            .windows(2)
            .all(|w| w[0].window.le(&w[1].window))
    }

    pub fn sort_by_window(&mut self) {
        self.tasks.sort_by(|a, b| {
            a.window
                .lex_cmp(&b.window)
                .then_with(|| a.id.cmp(&b.id))
        });
    }

    pub fn sorted_by_window(mut self) -> Self {
        self.sort_by_window();
        self
    }

    /// All task lengths multiplied by `gamma` (windows unchanged); the
    /// gamma-feasibility instance.
    pub fn scale_lengths(&self, gamma: &Rational) -> Instance {
        Instance {
            tasks: self
                .tasks
                .iter()
                .map(|t| Task {
                    id: t.id.clone(),
                    length: &t.length * gamma,
                    window: t.window.clone(),
                })
                .collect(),
        }
    }

    pub fn index_of(&self, id: &TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| &t.id == id)
    }
}

/// Per-task optional slot, parallel to an instance's task sequence.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Allocation {
    pub slots: Vec<Option<Interval>>,
}

impl Allocation {
    pub fn new(slots: Vec<Option<Interval>>) -> Self {
        Allocation { slots }
    }

    pub fn empty(n: usize) -> Self {
        Allocation {
            slots: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn allocated(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

/// First violation found when checking an allocation against an instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Slot length differs from the task length.
    LengthMismatch { index: usize },
    /// Slot not contained in the task's window.
    OutOfWindow { index: usize },
    /// Two slots overlap (strictly; shared endpoints are fine).
    Overlap { a: usize, b: usize },
    /// Allocation vector length differs from the instance size.
    SizeMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { index } => write!(f, "task {index}: slot length mismatch"),
            Violation::OutOfWindow { index } => write!(f, "task {index}: slot outside window"),
            Violation::Overlap { a, b } => write!(f, "tasks {a} and {b}: overlapping slots"),
            Violation::SizeMismatch => write!(f, "allocation size mismatch"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrderingError {
    #[error("instance is not ordered")]
    NotOrdered,
    #[error("allocation is not ordered")]
    AllocationNotOrdered,
    #[error("infeasible state: {0}")]
    Infeasible(Violation),
    #[error("rank {0} out of range")]
    BadRank(usize),
}

/// Validity of `alloc` for `inst`: every present slot has the task's length,
/// lies within its window, and present slots are pairwise non-overlapping.
/// Returns the first violation (containment/length scanned by index, then
/// overlaps scanned in slot order).
pub fn is_valid(inst: &Instance, alloc: &Allocation) -> Result<(), Violation> {
    if inst.len() != alloc.len() {
        return Err(Violation::SizeMismatch);
    }
    for (i, (task, slot)) in inst.tasks.iter().zip(alloc.slots.iter()).enumerate() {
        if let Some(s) = slot {
            if s.span() != task.length {
                return Err(Violation::LengthMismatch { index: i });
            }
            if !task.window.contains(s) {
                return Err(Violation::OutOfWindow { index: i });
            }
        }
    }
    let mut present: Vec<(usize, &Interval)> = alloc
        .slots
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
        .collect();
    present.sort_by(|(_, a), (_, b)| a.lex_cmp(b));
    for w in present.windows(2) {
        let ((ia, a), (ib, b)) = (w[0], w[1]);
        if a.overlaps(b) {
            return Err(Violation::Overlap { a: ia, b: ib });
        }
    }
    Ok(())
}

/// Whether `alloc` is a solution: valid and every task allocated.
pub fn is_solution(inst: &Instance, alloc: &Allocation) -> bool {
    alloc.allocated() == inst.len() && is_valid(inst, alloc).is_ok()
}

/// Permute the non-null slots among the selected indices so that they are in
/// window order; null entries keep their positions and are ignored. On an
/// ordered instance this preserves validity.
pub fn sort_subsequence(alloc: &Allocation, indices: &[usize]) -> Allocation {
    let mut out = alloc.clone();
    let present: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| alloc.slots[i].is_some())
        .collect();
    let mut slots: Vec<Interval> = present
        .iter()
        .map(|&i| alloc.slots[i].clone().unwrap())
        .collect();
    slots.sort_by(|a, b| a.lex_cmp(b));
    for (&i, s) in present.iter().zip(slots) {
        out.slots[i] = Some(s);
    }
    out
}

/// Greedy allocation outcome; `violation` is the first containment failure
/// when the instance is infeasible (the greedy slots are still returned for
/// diagnostics).
#[derive(Clone, Debug)]
pub struct GreedyOutcome {
    pub allocation: Allocation,
    pub violation: Option<Violation>,
}

impl GreedyOutcome {
    pub fn feasible(&self) -> bool {
        self.violation.is_none()
    }

    pub fn into_solution(self) -> Result<Allocation, OrderingError> {
        match self.violation {
            None => Ok(self.allocation),
            Some(v) => Err(OrderingError::Infeasible(v)),
        }
    }
}

/// Left-greedy: each slot starts at max(window start, previous slot end).
/// For a feasible ordered instance the result is the pointwise-minimal
/// ordered solution.
pub fn leftmost(inst: &Instance) -> GreedyOutcome {
    debug_assert!(inst.is_ordered());
    let mut slots = Vec::with_capacity(inst.len());
    let mut violation = None;
    let mut prev_end: Option<Rational> = None;
    for (i, task) in inst.tasks.iter().enumerate() {
        let start = match &prev_end {
            Some(pe) => task.window.start().clone().max(pe.clone()),
            None => task.window.start().clone(),
        };
        let end = &start + &task.length;
        if violation.is_none() && &end > task.window.end() {
            violation = Some(Violation::OutOfWindow { index: i });
        }
        prev_end = Some(end.clone());
        slots.push(Some(Interval::new(start, end)));
    }
    GreedyOutcome {
        allocation: Allocation::new(slots),
        violation,
    }
}

/// Mirror image of [`leftmost`]: each slot ends at min(window end, next slot
/// start), scanning right to left.
pub fn rightmost(inst: &Instance) -> GreedyOutcome {
    debug_assert!(inst.is_ordered());
    let n = inst.len();
    let mut slots = vec![None; n];
    let mut violation = None;
    let mut next_start: Option<Rational> = None;
    for (i, task) in inst.tasks.iter().enumerate().rev() {
        let end = match &next_start {
            Some(ns) => task.window.end().clone().min(ns.clone()),
            None => task.window.end().clone(),
        };
        let start = &end - &task.length;
        if violation.is_none() && &start < task.window.start() {
            violation = Some(Violation::OutOfWindow { index: i });
        }
        next_start = Some(start.clone());
        slots[i] = Some(Interval::new(start, end));
    }
    GreedyOutcome {
        allocation: Allocation::new(slots),
        violation,
    }
}

/// Insert state: a partial solution allocating everything except the task at
/// `pending`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InsertState {
    pub instance: Instance,
    pub allocation: Allocation,
    pub pending: usize,
}

impl InsertState {
    pub fn new(instance: Instance, allocation: Allocation, pending: usize) -> Self {
        InsertState {
            instance,
            allocation,
            pending,
        }
    }

    /// Partial-solution validity: valid allocation, all tasks allocated
    /// except exactly the pending one.
    pub fn validate(&self) -> Result<(), Violation> {
        if self.pending >= self.instance.len() {
            return Err(Violation::SizeMismatch);
        }
        if self.allocation.slots[self.pending].is_some() {
            return Err(Violation::SizeMismatch);
        }
        if self.allocation.allocated() + 1 != self.instance.len() {
            return Err(Violation::SizeMismatch);
        }
        is_valid(&self.instance, &self.allocation)
    }

    pub fn pending_task(&self) -> &Task {
        &self.instance.tasks[self.pending]
    }
}

/// The range of starts usable by the pending task in some ordered solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InsertionRange {
    pub istart: Rational,
    pub iend: Rational,
}

impl InsertionRange {
    /// A unit slot fits iff the range is at least unit-wide.
    pub fn feasible(&self) -> bool {
        &self.iend - &self.istart >= Rational::one()
    }

    pub fn interval(&self) -> Option<Interval> {
        if self.istart <= self.iend {
            Some(Interval::new(self.istart.clone(), self.iend.clone()))
        } else {
            None
        }
    }
}

/// istart = max over ranks i <= r of (W[i].start - i) + r,
/// iend = min over ranks i >= r of (W[i].end - (i - r)); a unit slot s is
/// usable at rank r in some ordered solution iff s ⊆ [istart, iend].
/// Ranks are 0-based here; the arithmetic is rank-shift invariant.
pub fn insertion_range(state: &InsertState) -> InsertionRange {
    insertion_range_at(&state.instance, state.pending)
}

pub fn insertion_range_at(inst: &Instance, rank: usize) -> InsertionRange {
    debug_assert!(inst.is_ordered());
    debug_assert!(rank < inst.len());
    let r = Rational::from(rank);
    let mut istart: Option<Rational> = None;
    for (i, task) in inst.tasks[..=rank].iter().enumerate() {
        let v = task.window.start() - Rational::from(i);
        istart = Some(match istart {
            None => v,
            Some(cur) => cur.max(v),
        });
    }
    let mut iend: Option<Rational> = None;
    for (i, task) in inst.tasks[rank..].iter().enumerate() {
        let v = task.window.end() - Rational::from(i);
        iend = Some(match iend {
            None => v,
            Some(cur) => cur.min(v),
        });
    }
    InsertionRange {
        istart: istart.expect("nonempty prefix") + &r,
        iend: iend.expect("nonempty suffix"),
    }
}

/// Near ordered solution for an ordered, feasible insert state with ordered
/// partial allocation: an ordered solution N with S[r-1] <= N[r] <= S[r+1].
pub fn near(state: &InsertState) -> Result<Allocation, OrderingError> {
    let inst = &state.instance;
    let r = state.pending;
    if !inst.is_ordered() {
        return Err(OrderingError::NotOrdered);
    }
    let present: Vec<&Interval> = state.allocation.slots.iter().flatten().collect();
    if !present.windows(2).all(|w| w[0].le(w[1])) {
        return Err(OrderingError::AllocationNotOrdered);
    }
    let l = leftmost(inst).into_solution()?;
    let lr = l.slots[r].as_ref().unwrap();
    let prev = if r > 0 {
        state.allocation.slots[r - 1].as_ref()
    } else {
        None
    };
    match prev {
        // L[r] >= S[r-1] (with S[0] = -inf): Near is Leftmost itself.
        None => Ok(l),
        Some(p) if p.le(lr) => Ok(l),
        // Otherwise splice: leftmost prefix, S[r-1]'s slot for the pending
        // task, original suffix.
        Some(p) => {
            let mut out: Vec<Option<Interval>> = Vec::with_capacity(inst.len());
            out.extend(l.slots[..r].iter().cloned());
            out.push(Some(p.clone()));
            out.extend(state.allocation.slots[r + 1..].iter().cloned());
            debug_assert_eq!(out.len(), inst.len());
            Ok(Allocation::new(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(s: i64, e: i64) -> Interval {
        Interval::of_ints(s, e)
    }

    fn unit_inst(windows: &[(i64, i64)]) -> Instance {
        Instance::new(
            windows
                .iter()
                .enumerate()
                .map(|(i, &(s, e))| Task::unit(format!("t{i:03}"), iv(s, e)))
                .collect(),
        )
    }

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn is_valid_examples() {
        let inst = unit_inst(&[(0, 2), (0, 2)]);
        let ok = Allocation::new(vec![Some(iv(0, 1)), Some(iv(1, 2))]);
        assert!(is_valid(&inst, &ok).is_ok());

        let bad = Allocation::new(vec![
            Some(iv(0, 1)),
            Some(Interval::new(rat(1, 2), rat(3, 2))),
        ]);
        assert_eq!(is_valid(&inst, &bad), Err(Violation::Overlap { a: 0, b: 1 }));

        let inst1 = unit_inst(&[(0, 2)]);
        let out = Allocation::new(vec![Some(Interval::new(rat(3, 2), rat(5, 2)))]);
        assert_eq!(is_valid(&inst1, &out), Err(Violation::OutOfWindow { index: 0 }));
    }

    #[test]
    fn sort_subsequence_examples() {
        let inst = unit_inst(&[(0, 3), (0, 3)]);
        let s = Allocation::new(vec![Some(iv(2, 3)), Some(iv(0, 1))]);
        let sorted = sort_subsequence(&s, &[0, 1]);
        assert_eq!(sorted.slots, vec![Some(iv(0, 1)), Some(iv(2, 3))]);
        assert!(is_valid(&inst, &sorted).is_ok());

        // already sorted input unchanged
        assert_eq!(sort_subsequence(&sorted, &[0, 1]), sorted);

        // absent entries keep their positions and are ignored
        let inst3 = unit_inst(&[(0, 3), (0, 3), (0, 3)]);
        let s3 = Allocation::new(vec![Some(iv(2, 3)), None, Some(iv(0, 1))]);
        let got = sort_subsequence(&s3, &[0, 1, 2]);
        assert_eq!(got.slots, vec![Some(iv(0, 1)), None, Some(iv(2, 3))]);
        assert!(is_valid(&inst3, &got).is_ok());
    }

    #[test]
    fn leftmost_examples() {
        let inst = unit_inst(&[(0, 3), (1, 4), (1, 4)]);
        let out = leftmost(&inst);
        assert!(out.feasible());
        assert_eq!(
            out.allocation.slots,
            vec![Some(iv(0, 1)), Some(iv(1, 2)), Some(iv(2, 3))]
        );

        let bad = unit_inst(&[(0, 1), (0, 1)]);
        let out = leftmost(&bad);
        assert_eq!(out.violation, Some(Violation::OutOfWindow { index: 1 }));
        assert_eq!(out.allocation.slots[1], Some(iv(1, 2)));

        let empty = unit_inst(&[]);
        assert!(leftmost(&empty).feasible());
        assert!(leftmost(&empty).allocation.is_empty());
    }

    #[test]
    fn rightmost_examples() {
        let inst = unit_inst(&[(0, 3), (1, 4), (1, 4)]);
        let out = rightmost(&inst);
        assert!(out.feasible());
        assert_eq!(
            out.allocation.slots,
            vec![Some(iv(1, 2)), Some(iv(2, 3)), Some(iv(3, 4))]
        );

        assert!(!rightmost(&unit_inst(&[(0, 1), (0, 1)])).feasible());

        let single = unit_inst(&[(0, 2)]);
        assert_eq!(rightmost(&single).allocation.slots, vec![Some(iv(1, 2))]);
    }

    #[test]
    fn near_leftmost_branch() {
        let inst = unit_inst(&[(0, 3), (0, 3), (0, 3)]);
        let state = InsertState::new(
            inst.clone(),
            Allocation::new(vec![Some(iv(0, 1)), None, Some(iv(2, 3))]),
            1,
        );
        let n = near(&state).unwrap();
        assert_eq!(n.slots[1], Some(iv(1, 2)));
        assert!(is_solution(&inst, &n));
    }

    #[test]
    fn near_front_rank() {
        // r at the front with room: Near = Leftmost
        let inst = unit_inst(&[(0, 3), (1, 4), (1, 4)]);
        let state = InsertState::new(
            inst.clone(),
            Allocation::new(vec![None, Some(iv(1, 2)), Some(iv(2, 3))]),
            0,
        );
        let n = near(&state).unwrap();
        assert_eq!(n, leftmost(&inst).allocation);
    }

    #[test]
    fn near_equal_boundary_takes_leftmost() {
        // L[r] equals S[r-1]; the >= branch returns Leftmost.
        let inst = unit_inst(&[(0, 9), (5, 9), (5, 9)]);
        let state = InsertState::new(
            inst.clone(),
            Allocation::new(vec![Some(iv(5, 6)), None, Some(iv(7, 8))]),
            1,
        );
        let n = near(&state).unwrap();
        assert_eq!(
            n.slots,
            vec![Some(iv(0, 1)), Some(iv(5, 6)), Some(iv(6, 7))]
        );
        // near-ordered-solution postcondition
        assert!(is_solution(&inst, &n));
        assert!(state.allocation.slots[0].as_ref().unwrap().le(n.slots[1].as_ref().unwrap()));
        assert!(n.slots[1].as_ref().unwrap().le(state.allocation.slots[2].as_ref().unwrap()));
    }

    #[test]
    fn near_splice_branch() {
        // strictly L[r] < S[r-1]: splice keeps the pending slot at S[r-1]
        let inst = unit_inst(&[(0, 9), (5, 9), (5, 9)]);
        let state = InsertState::new(
            inst.clone(),
            Allocation::new(vec![Some(iv(6, 7)), None, Some(iv(8, 9))]),
            1,
        );
        let n = near(&state).unwrap();
        assert_eq!(
            n.slots,
            vec![Some(iv(0, 1)), Some(iv(6, 7)), Some(iv(8, 9))]
        );
        assert!(is_solution(&inst, &n));
    }

    #[test]
    fn insertion_range_examples() {
        let inst = unit_inst(&[(0, 3), (1, 4), (2, 5)]);
        let r = insertion_range_at(&inst, 1);
        assert_eq!(r.istart, Rational::from_int(1));
        assert_eq!(r.iend, Rational::from_int(4));
        assert!(r.feasible());

        // single window [0, c]
        let one = unit_inst(&[(0, 7)]);
        let r = insertion_range_at(&one, 0);
        assert_eq!((r.istart, r.iend), (Rational::zero(), Rational::from_int(7)));

        // fully packed: width 0 < 1
        let packed = unit_inst(&[(0, 2), (0, 2), (0, 2)]);
        let r = insertion_range_at(&packed, 1);
        assert_eq!(r.istart, Rational::from_int(1));
        assert_eq!(r.iend, Rational::from_int(1));
        assert!(!r.feasible());
    }
}

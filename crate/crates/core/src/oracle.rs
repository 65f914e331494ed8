//! Brute-force ground truth for desk-scale instances: exact feasibility at
//! a given underallocation factor, maximum-slack bracketing, and minimum
//! reallocations needed to solve an insert state.
//!
//! The general feasibility path searches over insertion orders, placing each
//! task greedily at the earliest non-overlapping position in its window.
//! Completeness: given any solution, placing tasks in slot order greedily
//! never pushes a slot right of the solution's, so some order succeeds.
//! Ordered instances with uniform lengths skip the search and use the
//! left-greedy directly, which is exact for them.

use crate::geometry::{Interval, Rational};
use crate::ordering::{is_valid, leftmost, Allocation, Instance, InsertState};
use std::env;
use thiserror::Error;

pub const DEFAULT_FEASIBILITY_LIMIT: usize = 10;
pub const DEFAULT_MIN_REALLOC_LIMIT: usize = 18;

/// Env var overriding both size caps.
pub const ORACLE_LIMIT_ENV: &str = "DYNREALLOC_ORACLE_LIMIT";

#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub feasibility_n: usize,
    pub min_realloc_n: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            feasibility_n: DEFAULT_FEASIBILITY_LIMIT,
            min_realloc_n: DEFAULT_MIN_REALLOC_LIMIT,
        }
    }
}

impl OracleLimits {
    /// Defaults, with `DYNREALLOC_ORACLE_LIMIT` (a single integer) overriding
    /// both caps when set.
    pub fn from_env() -> Self {
        match env::var(ORACLE_LIMIT_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
        {
            Some(n) => OracleLimits {
                feasibility_n: n,
                min_realloc_n: n,
            },
            None => OracleLimits::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance size {n} exceeds oracle limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("insert state is invalid or infeasible")]
    BadState,
    #[error("empty instance has unbounded slack")]
    EmptyInstance,
    #[error("gamma must be positive")]
    BadGamma,
}

/// Bracket around the maximum slack of an instance: the instance is
/// `slack_lower`-slack and not `slack_upper`-slack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlackReport {
    pub feasible: bool,
    pub slack_lower: Rational,
    pub slack_upper: Rational,
}

/// Earliest position of length `len` within `window` avoiding `occupied`
/// (sorted by start, pairwise non-overlapping).
fn earliest_fit(len: &Rational, window: &Interval, occupied: &[Interval]) -> Option<Interval> {
    let mut x = window.start().clone();
    for o in occupied {
        if *o.end() <= x {
            continue;
        }
        if *o.start() >= &x + len {
            break;
        }
        x = o.end().clone();
    }
    if &x + len <= *window.end() {
        Some(Interval::new(x.clone(), x + len))
    } else {
        None
    }
}

fn insert_sorted(occupied: &mut Vec<Interval>, slot: Interval) -> usize {
    let pos = occupied
        .iter()
        .position(|o| slot.lex_cmp(o) == std::cmp::Ordering::Less)
        .unwrap_or(occupied.len());
    occupied.insert(pos, slot);
    pos
}

/// DFS over insertion orders with greedy earliest-fit placement. `tasks` are
/// (length, window, original index); `occupied` holds fixed obstacles plus
/// already-placed slots. Returns the slots assigned per original index.
fn search(
    tasks: &mut Vec<(Rational, Interval, usize)>,
    occupied: &mut Vec<Interval>,
    out: &mut Vec<Option<Interval>>,
) -> bool {
    if tasks.is_empty() {
        return true;
    }
    // A task unplaceable now stays unplaceable: slots are only added.
    for (len, win, _) in tasks.iter() {
        if earliest_fit(len, win, occupied).is_none() {
            return false;
        }
    }
    let mut tried: Vec<(Rational, Interval)> = Vec::new();
    for i in 0..tasks.len() {
        let (len, win, idx) = tasks[i].clone();
        if tried.iter().any(|(l, w)| *l == len && *w == win) {
            continue;
        }
        tried.push((len.clone(), win.clone()));
        let slot = earliest_fit(&len, &win, occupied).expect("checked above");
        tasks.swap_remove(i);
        let pos = insert_sorted(occupied, slot.clone());
        if search(tasks, occupied, out) {
            out[idx] = Some(slot);
            return true;
        }
        occupied.remove(pos);
        tasks.push((len, win, idx));
        let last = tasks.len() - 1;
        tasks.swap(i, last);
    }
    false
}

/// Feasibility of placing `tasks` around fixed `obstacles`; returns a
/// witness slot per task on success.
pub(crate) fn feasible_with_obstacles(
    tasks: &[(Rational, Interval)],
    obstacles: &[Interval],
) -> Option<Vec<Interval>> {
    let mut occupied: Vec<Interval> = obstacles.to_vec();
    occupied.sort_by(|a, b| a.lex_cmp(b));
    let mut rem: Vec<(Rational, Interval, usize)> = tasks
        .iter()
        .enumerate()
        .map(|(i, (l, w))| (l.clone(), w.clone(), i))
        .collect();
    let mut out = vec![None; tasks.len()];
    if search(&mut rem, &mut occupied, &mut out) {
        Some(out.into_iter().map(Option::unwrap).collect())
    } else {
        None
    }
}

fn uniform_length(inst: &Instance) -> Option<Rational> {
    let first = inst.tasks.first()?.length.clone();
    inst.tasks
        .iter()
        .all(|t| t.length == first)
        .then_some(first)
}

/// Exact gamma-feasibility: is there a solution with all task lengths
/// multiplied by `gamma`? Ordered instances with uniform scaled lengths use
/// the left-greedy at any size; otherwise the search is capped by
/// `limits.feasibility_n`.
pub fn oracle_feasible(
    inst: &Instance,
    gamma: &Rational,
    limits: &OracleLimits,
) -> Result<bool, OracleError> {
    if *gamma <= Rational::zero() {
        return Err(OracleError::BadGamma);
    }
    let scaled = inst.scale_lengths(gamma);
    Ok(feasibility_of(&scaled, limits)?.is_some())
}

/// Like [`oracle_feasible`] at gamma = 1 but returning the witness.
pub fn oracle_solve(
    inst: &Instance,
    limits: &OracleLimits,
) -> Result<Option<Allocation>, OracleError> {
    feasibility_of(inst, limits)
}

fn feasibility_of(
    inst: &Instance,
    limits: &OracleLimits,
) -> Result<Option<Allocation>, OracleError> {
    if inst.is_empty() {
        return Ok(Some(Allocation::empty(0)));
    }
    if uniform_length(inst).is_some() {
        let sorted = inst.clone().sorted_by_window();
        if sorted.is_ordered() {
            let out = leftmost(&sorted);
            if !out.feasible() {
                return Ok(None);
            }
            // map slots back to the original task order
            let mut alloc = Allocation::empty(inst.len());
            for (task, slot) in sorted.tasks.iter().zip(out.allocation.slots.iter()) {
                let idx = inst.index_of(&task.id).expect("same tasks");
                alloc.slots[idx] = slot.clone();
            }
            debug_assert!(is_valid(inst, &alloc).is_ok());
            return Ok(Some(alloc));
        }
    }
    if inst.len() > limits.feasibility_n {
        return Err(OracleError::TooLarge {
            n: inst.len(),
            limit: limits.feasibility_n,
        });
    }
    let tasks: Vec<(Rational, Interval)> = inst
        .tasks
        .iter()
        .map(|t| (t.length.clone(), t.window.clone()))
        .collect();
    match feasible_with_obstacles(&tasks, &[]) {
        Some(slots) => {
            let alloc = Allocation::new(slots.into_iter().map(Some).collect());
            debug_assert!(is_valid(inst, &alloc).is_ok());
            Ok(Some(alloc))
        }
        None => Ok(None),
    }
}

/// Bracket the maximum slack by binary search on gamma with exact
/// feasibility tests at rational midpoints.
pub fn oracle_max_slack(
    inst: &Instance,
    tolerance: &Rational,
    limits: &OracleLimits,
) -> Result<SlackReport, OracleError> {
    if inst.is_empty() {
        return Err(OracleError::EmptyInstance);
    }
    let one = Rational::one();
    if !oracle_feasible(inst, &one, limits)? {
        return Ok(SlackReport {
            feasible: false,
            slack_lower: Rational::zero(),
            slack_upper: Rational::zero(),
        });
    }
    let mut lo = one.clone();
    let mut hi = Rational::from_int(2);
    while oracle_feasible(inst, &hi, limits)? {
        lo = hi.clone();
        hi = hi * 2;
    }
    while &hi - &lo > *tolerance {
        let mid = (&lo + &hi) / 2;
        if oracle_feasible(inst, &mid, limits)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SlackReport {
        feasible: true,
        slack_lower: lo - &one,
        slack_upper: hi - &one,
    })
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    fn go(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]) -> bool,
    ) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            if go(i + 1, n, k, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    let mut cur = Vec::with_capacity(k);
    go(0, n, k, &mut cur, f)
}

/// Minimum number of already-allocated tasks whose slots change in some
/// solution that also allocates the pending task, with a witness.
///
/// Searches kept-slot subsets from largest down; each candidate frees the
/// dropped tasks plus the pending one and asks the placement search to fit
/// them around the kept slots.
pub fn oracle_min_realloc(
    state: &InsertState,
    limits: &OracleLimits,
) -> Result<(u64, Allocation), OracleError> {
    let n = state.instance.len();
    if n > limits.min_realloc_n {
        return Err(OracleError::TooLarge {
            n,
            limit: limits.min_realloc_n,
        });
    }
    if state.validate().is_err() {
        return Err(OracleError::BadState);
    }
    let allocated: Vec<usize> = (0..n).filter(|&i| i != state.pending).collect();
    for dropped in 0..=allocated.len() {
        let mut found: Option<Allocation> = None;
        combinations(allocated.len(), dropped, &mut |drop_sel| {
            let drop_set: Vec<usize> = drop_sel.iter().map(|&j| allocated[j]).collect();
            let mut movable: Vec<(Rational, Interval)> = Vec::with_capacity(dropped + 1);
            let mut movable_idx: Vec<usize> = Vec::with_capacity(dropped + 1);
            let pending_task = state.pending_task();
            movable.push((pending_task.length.clone(), pending_task.window.clone()));
            movable_idx.push(state.pending);
            for &i in &drop_set {
                let t = &state.instance.tasks[i];
                movable.push((t.length.clone(), t.window.clone()));
                movable_idx.push(i);
            }
            let obstacles: Vec<Interval> = allocated
                .iter()
                .filter(|i| !drop_set.contains(i))
                .map(|&i| state.allocation.slots[i].clone().unwrap())
                .collect();
            if let Some(slots) = feasible_with_obstacles(&movable, &obstacles) {
                let mut alloc = state.allocation.clone();
                for (&idx, slot) in movable_idx.iter().zip(slots) {
                    alloc.slots[idx] = Some(slot);
                }
                debug_assert!(is_valid(&state.instance, &alloc).is_ok());
                found = Some(alloc);
                true
            } else {
                false
            }
        });
        if let Some(witness) = found {
            // moved = freed tasks whose final slot differs from the original
            let moved = allocated
                .iter()
                .filter(|&&i| witness.slots[i] != state.allocation.slots[i])
                .count() as u64;
            debug_assert!(moved <= dropped as u64);
            return Ok((moved, witness));
        }
    }
    Err(OracleError::BadState)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::Task;

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

    #[test]
    fn feasible_examples() {
        let lim = OracleLimits::default();
        // two unit tasks, window [0,1]: infeasible at gamma 1
        let two = unit_inst(&[(0, 1), (0, 1)]);
        assert!(!oracle_feasible(&two, &Rational::one(), &lim).unwrap());
        // nested windows need the search path
        let nested = unit_inst(&[(0, 4), (1, 2), (0, 2)]);
        assert!(oracle_feasible(&nested, &Rational::one(), &lim).unwrap());
        // 9 tasks: 8 x [1,255] plus one whose window [82,110] has span 28.
        // At gamma 28 the middle slot is forced, splitting [1,255] into
        // spans 81 and 145 which hold 2+5 = 7 < 8 further slots, so the
        // instance is not 28-underallocated; at 25 the middle slot can sit
        // at [85,110] leaving 3+5 = 8.
        let mut tasks: Vec<Task> = (0..8)
            .map(|i| Task::unit(format!("b{i}"), iv(1, 255)))
            .collect();
        tasks.push(Task::unit("s", iv(82, 110)));
        let inst = Instance::new(tasks);
        assert!(oracle_feasible(&inst, &Rational::from_int(25), &lim).unwrap());
        assert!(!oracle_feasible(&inst, &Rational::from_int(28), &lim).unwrap());
    }

    #[test]
    fn max_slack_examples() {
        let lim = OracleLimits::default();
        let tol = Rational::new(1, 1 << 20);
        // single task window [0,3]: gamma_max = 3 so slack brackets 2
        let one = unit_inst(&[(0, 3)]);
        let rep = oracle_max_slack(&one, &tol, &lim).unwrap();
        assert!(rep.feasible);
        assert!(rep.slack_lower <= Rational::from_int(2));
        assert!(rep.slack_upper >= Rational::from_int(2));
        assert!(&rep.slack_upper - &rep.slack_lower <= tol);
        // two tasks window [0,2]: gamma_max = 1, slack 0
        let two = unit_inst(&[(0, 2), (0, 2)]);
        let rep = oracle_max_slack(&two, &tol, &lim).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.slack_lower, Rational::zero());
        assert!(rep.slack_upper <= tol);
    }

    #[test]
    fn min_realloc_free_gap() {
        let lim = OracleLimits::default();
        // W=[0,4]x3+pending, S misses [3,4]: nothing must move
        let inst = unit_inst(&[(0, 4), (0, 4), (0, 4), (0, 4)]);
        let alloc = Allocation::new(vec![
            Some(iv(0, 1)),
            Some(iv(1, 2)),
            Some(iv(2, 3)),
            None,
        ]);
        let state = InsertState::new(inst, alloc, 3);
        let (count, witness) = oracle_min_realloc(&state, &lim).unwrap();
        assert_eq!(count, 0);
        assert!(crate::ordering::is_solution(&state.instance, &witness));
    }

    #[test]
    fn min_realloc_forced() {
        let lim = OracleLimits::default();
        // packed [0,3] x 3 with one pending and wider third window
        let inst = unit_inst(&[(0, 3), (0, 3), (0, 3), (0, 6)]);
        let alloc = Allocation::new(vec![
            Some(iv(0, 1)),
            Some(iv(1, 2)),
            None,
            Some(iv(2, 3)),
        ]);
        let state = InsertState::new(inst, alloc, 2);
        let (count, _) = oracle_min_realloc(&state, &lim).unwrap();
        assert_eq!(count, 1); // the [0,6]-task moves right
    }

    #[test]
    fn min_realloc_rejects_infeasible() {
        let lim = OracleLimits::default();
        let inst = unit_inst(&[(0, 1), (0, 1)]);
        let alloc = Allocation::new(vec![Some(iv(0, 1)), None]);
        let state = InsertState::new(inst, alloc, 1);
        assert!(oracle_min_realloc(&state, &lim).is_err());
    }

    #[test]
    fn ordered_fast_path_matches_search() {
        let lim = OracleLimits::default();
        // comparable chain, uniform lengths: both routes agree
        for gamma_num in 1..=4i64 {
            let gamma = Rational::new(gamma_num, 2);
            let inst = unit_inst(&[(0, 3), (1, 4), (2, 6), (3, 7)]);
            let fast = oracle_feasible(&inst, &gamma, &lim).unwrap();
            // force the search path by perturbing order detection: use
            // feasible_with_obstacles directly
            let tasks: Vec<(Rational, Interval)> = inst
                .scale_lengths(&gamma)
                .tasks
                .iter()
                .map(|t| (t.length.clone(), t.window.clone()))
                .collect();
            let slow = feasible_with_obstacles(&tasks, &[]).is_some();
            assert_eq!(fast, slow, "gamma={gamma}");
        }
    }
}

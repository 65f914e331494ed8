//! Ordering-theorem, greedy-dominance, near- and insertion-range
//! properties, checked against brute force on small instances.

use dynrealloc::geometry::{snap, Interval, Rational};
use dynrealloc::oracle::{oracle_solve, OracleLimits};
use dynrealloc::ordering::{
    insertion_range_at, is_solution, is_valid, leftmost, near, rightmost, sort_subsequence,
    Allocation, Instance, InsertState, Task,
};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// Random ordered unit-task instance with integer windows.
fn random_ordered_instance(rng: &mut ChaCha8Rng, max_n: usize, coord: i64) -> Instance {
    let n = 1 + (rng.next_u32() as usize) % max_n;
    let mut windows: Vec<(i64, i64)> = (0..n)
        .map(|_| {
            let s = (rng.next_u32() as i64) % coord;
            let span = 1 + (rng.next_u32() as i64) % 6;
            (s, s + span)
        })
        .collect();
    // force a chain: sort by start and make ends non-decreasing
    windows.sort();
    let mut prev_end = i64::MIN;
    for w in windows.iter_mut() {
        w.1 = w.1.max(prev_end).max(w.0 + 1);
        prev_end = w.1;
    }
    Instance::new(
        windows
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| Task::unit(format!("t{i:03}"), Interval::of_ints(s, e)))
            .collect(),
    )
}

/// All ordered solutions on the quarter grid (bounded enumeration).
fn enumerate_grid_ordered_solutions(inst: &Instance, cap: usize) -> Vec<Vec<Interval>> {
    let mut out = Vec::new();
    let mut cur: Vec<Interval> = Vec::new();
    fn go(
        inst: &Instance,
        idx: usize,
        cur: &mut Vec<Interval>,
        out: &mut Vec<Vec<Interval>>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        if idx == inst.len() {
            out.push(cur.clone());
            return;
        }
        let w = &inst.tasks[idx].window;
        let min_start = match cur.last() {
            Some(prev) => prev.end().clone().max(w.start().clone()),
            None => w.start().clone(),
        };
        // quarter steps from min_start to w.end - 1
        let step = rat(1, 4);
        let mut x = min_start;
        while &x + 1 <= *w.end() {
            cur.push(Interval::new(x.clone(), &x + 1));
            go(inst, idx + 1, cur, out, cap);
            cur.pop();
            x = x + &step;
        }
    }
    go(inst, 0, &mut cur, &mut out, cap);
    out
}

#[test]
fn ordering_theorem_sorted_subsequence_stays_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 400 {
        let inst = random_ordered_instance(&mut rng, 8, 10);
        let greedy = leftmost(&inst);
        if !greedy.feasible() {
            continue;
        }
        // random permutation of its slots among tasks, kept where the
        // permuted slots still fit the windows
        let n = inst.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (rng.next_u32() as usize) % (i + 1);
            perm.swap(i, j);
        }
        let permuted = Allocation::new(
            (0..n)
                .map(|i| greedy.allocation.slots[perm[i]].clone())
                .collect(),
        );
        if is_valid(&inst, &permuted).is_err() {
            continue;
        }
        checked += 1;
        let indices: Vec<usize> = (0..n).collect();
        let sorted = sort_subsequence(&permuted, &indices);
        assert!(is_solution(&inst, &sorted), "sorting broke a solution");
        // sorted slots are in window order
        let slots: Vec<&Interval> = sorted.slots.iter().flatten().collect();
        assert!(slots.windows(2).all(|w| w[0].le(w[1])));
    }
}

#[test]
fn leftmost_dominates_every_grid_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    while checked < 60 {
        let inst = random_ordered_instance(&mut rng, 4, 6);
        let greedy = leftmost(&inst);
        if !greedy.feasible() {
            continue;
        }
        let sols = enumerate_grid_ordered_solutions(&inst, 3000);
        if sols.is_empty() {
            continue;
        }
        checked += 1;
        for sol in &sols {
            for (mine, theirs) in greedy.allocation.slots.iter().zip(sol.iter()) {
                assert!(
                    mine.as_ref().unwrap().le(theirs),
                    "leftmost not pointwise minimal"
                );
            }
        }
        // mirror property for rightmost
        let right = rightmost(&inst);
        assert!(right.feasible());
        for sol in &sols {
            for (mine, theirs) in right.allocation.slots.iter().zip(sol.iter()) {
                assert!(theirs.le(mine.as_ref().unwrap()));
            }
        }
    }
}

#[test]
fn near_postcondition_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let lim = OracleLimits::default();
    let mut checked = 0;
    while checked < 200 {
        let inst = random_ordered_instance(&mut rng, 7, 12);
        let n = inst.len();
        if n < 2 {
            continue;
        }
        // build an ordered partial solution by solving and clearing a rank
        let Some(sol) = oracle_solve(&inst, &lim).ok().flatten() else {
            continue;
        };
        let sorted = sort_subsequence(&sol, &(0..n).collect::<Vec<_>>());
        let r = (rng.next_u32() as usize) % n;
        let mut slots = sorted.slots.clone();
        slots[r] = None;
        let state = InsertState::new(inst.clone(), Allocation::new(slots), r);
        if state.validate().is_err() {
            continue;
        }
        checked += 1;
        let nsol = near(&state).expect("feasible state");
        assert!(is_solution(&inst, &nsol));
        let nr = nsol.slots[r].as_ref().unwrap();
        if r > 0 {
            let prev = state.allocation.slots[r - 1].as_ref().unwrap();
            assert!(prev.le(nr), "S[r-1] <= N[r] violated");
        }
        if r + 1 < n {
            let next = state.allocation.slots[r + 1].as_ref().unwrap();
            assert!(nr.le(next), "N[r] <= S[r+1] violated");
        }
    }
}

/// Brute-force search for an ordered solution with slot r pinned to `s`,
/// over the quarter grid (complete for integer windows and quarter-grid
/// pins since any ordered solution left-shifts onto the grid). Returns
/// `None` when the node budget runs out.
fn ordered_pinned_dfs(
    inst: &Instance,
    r: usize,
    s: &Interval,
    budget: usize,
) -> Option<bool> {
    fn go(
        inst: &Instance,
        idx: usize,
        r: usize,
        s: &Interval,
        prev_end: Rational,
        nodes: &mut usize,
        budget: usize,
    ) -> Option<bool> {
        if *nodes >= budget {
            return None;
        }
        *nodes += 1;
        if idx == inst.len() {
            return Some(true);
        }
        let w = &inst.tasks[idx].window;
        if idx == r {
            if !w.contains(s) || *s.start() < prev_end {
                return Some(false);
            }
            return go(inst, idx + 1, r, s, s.end().clone(), nodes, budget);
        }
        let step = rat(1, 4);
        let mut x = w.start().clone().max(prev_end);
        while &x + 1 <= *w.end() {
            match go(inst, idx + 1, r, s, &x + 1, nodes, budget) {
                Some(true) => return Some(true),
                Some(false) => {}
                None => return None,
            }
            x = x + &step;
        }
        Some(false)
    }
    let mut nodes = 0;
    go(inst, 0, r, s, rat(-1 << 20, 1), &mut nodes, budget)
}

/// Exact pinned-slot decision: an ordered solution with Y[r] = s exists iff
/// the leftmost prefix fits before s and the rightmost suffix after it.
fn pinned_slot_feasible(inst: &Instance, r: usize, s: &Interval) -> bool {
    if !inst.tasks[r].window.contains(s) {
        return false;
    }
    let prefix = Instance::new(inst.tasks[..r].to_vec());
    let suffix = Instance::new(inst.tasks[r + 1..].to_vec());
    let left = leftmost(&prefix);
    if !left.feasible() {
        return false;
    }
    if let Some(last) = left.allocation.slots.last() {
        if last.as_ref().unwrap().end() > s.start() {
            return false;
        }
    }
    let right = rightmost(&suffix);
    if !right.feasible() {
        return false;
    }
    if let Some(first) = right.allocation.slots.first() {
        if first.as_ref().unwrap().start() < s.end() {
            return false;
        }
    }
    true
}

#[test]
fn insertion_range_matches_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let quarter = rat(1, 4);
    let mut checked = 0;
    while checked < 250 {
        let inst = random_ordered_instance(&mut rng, 6, 8);
        let n = inst.len();
        let r = (rng.next_u32() as usize) % n;
        // the range formula speaks about insert states: the instance minus
        // rank r must admit a partial solution
        let mut rest = inst.tasks.clone();
        rest.remove(r);
        if !leftmost(&Instance::new(rest)).feasible() {
            continue;
        }
        checked += 1;
        let range = insertion_range_at(&inst, r);
        // sweep the quarter grid across the coordinate span
        let mut x = rat(-2, 1);
        while x <= rat(14, 1) {
            let s = Interval::new(x.clone(), &x + 1);
            let inside = range.feasible()
                && range.istart <= *s.start()
                && *s.end() <= range.iend;
            let greedy_route = pinned_slot_feasible(&inst, r, &s);
            assert_eq!(
                inside, greedy_route,
                "slot {s} rank {r} of {:?}",
                inst.tasks.iter().map(|t| t.window.clone()).collect::<Vec<_>>()
            );
            // spot-check the greedy route against a brute-force DFS over
            // ordered quarter-grid solutions with the rank-r slot pinned
            if rng.next_u32() % 97 == 0 {
                if let Some(found) = ordered_pinned_dfs(&inst, r, &s, 200_000) {
                    assert_eq!(
                        found, greedy_route,
                        "ordered-solution DFS disagrees at slot {s} rank {r}"
                    );
                }
            }
            x = x + &quarter;
        }
    }
}

proptest! {
    #[test]
    fn snap_satisfies_all_three_clauses(
        s_num in -40i64..40, s_den in 1i64..8,
        w_num in -40i64..40, w_den in 1i64..8,
        w_len_num in 1i64..60,
    ) {
        let s_start = rat(s_num, s_den);
        let s = Interval::new(s_start.clone(), &s_start + 1);
        let w_start = rat(w_num, w_den);
        let w_len = rat(w_len_num, 4);
        prop_assume!(w_len >= Rational::one());
        let w = Interval::new(w_start.clone(), &w_start + &w_len);
        let r = snap(&s, &w).unwrap();
        prop_assert!(w.contains(&r));
        prop_assert!(*r.start() <= w.start().clone().max(s.start().clone()));
        prop_assert!(*r.end() >= w.end().clone().min(s.end().clone()));
    }
}

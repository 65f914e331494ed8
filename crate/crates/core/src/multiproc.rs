//! Reduction from p processors to one: run any single-processor allocator
//! on a transformed instance (window ends pulled in by 1 - 1/k, task
//! lengths 1/k, k = floor((p+1)/2)), then lift each transformed slot start
//! t back to the unit slot [t, t+1] on the lowest-indexed processor where
//! it fits. At most 2k-1 <= p lifted slots can overlap any point, so a
//! processor always exists; the bound is asserted on every lift.
//!
//! Only odd p is fully utilized; even p wastes one processor's capacity.

use crate::fa::{FaError, FaSession};
use crate::geometry::{Interval, Rational};
use crate::oracle::{oracle_feasible, OracleError, OracleLimits};
use crate::ordering::{is_valid, Allocation, Instance, Task, TaskId, Violation};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpError {
    #[error("processor count must be at least 1")]
    BadProcessorCount,
    #[error("window span below 1: transformed span cannot hold the task")]
    WindowTooShort,
    #[error("inner allocator: {0}")]
    Inner(#[from] FaError),
    #[error("transformed allocation invalid: {0}")]
    BadAllocation(Violation),
    #[error("lift overlap bound violated: {found} slots overlap, limit {limit}")]
    OverlapBound { found: usize, limit: usize },
    #[error("no free processor for lifted slot (internal invariant)")]
    NoProcessor,
    #[error("unknown task id {0}")]
    UnknownId(TaskId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiprocConfig {
    pub p: u32,
}

impl MultiprocConfig {
    pub fn new(p: u32) -> Result<Self, MpError> {
        if p < 1 {
            return Err(MpError::BadProcessorCount);
        }
        Ok(MultiprocConfig { p })
    }

    /// k = floor((p+1)/2); 2k - 1 <= p.
    pub fn k(&self) -> u32 {
        self.p.div_ceil(2)
    }
}

/// Per-task (processor, slot); processors are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MpAllocation {
    pub entries: Vec<(TaskId, u32, Interval)>,
}

impl MpAllocation {
    /// Validity: slots within the original windows, unit length, pairwise
    /// disjoint per processor.
    pub fn validate(&self, original: &Instance) -> Result<(), MpError> {
        let by_id: BTreeMap<&TaskId, &Task> =
            original.tasks.iter().map(|t| (&t.id, t)).collect();
        let mut per_proc: BTreeMap<u32, Vec<&Interval>> = BTreeMap::new();
        for (id, proc, slot) in &self.entries {
            let task = by_id
                .get(id)
                .ok_or_else(|| MpError::UnknownId((*id).clone()))?;
            if slot.span() != task.length || !task.window.contains(slot) {
                return Err(MpError::BadAllocation(Violation::OutOfWindow { index: 0 }));
            }
            per_proc.entry(*proc).or_default().push(slot);
        }
        for slots in per_proc.values_mut() {
            slots.sort_by(|a, b| a.lex_cmp(b));
            for w in slots.windows(2) {
                if w[0].overlaps(w[1]) {
                    return Err(MpError::BadAllocation(Violation::Overlap { a: 0, b: 0 }));
                }
            }
        }
        Ok(())
    }
}

/// Shrink every window's end by 1 - 1/k and every task length to 1/k.
pub fn mp_transform(inst: &Instance, cfg: &MultiprocConfig) -> Result<Instance, MpError> {
    let k = Rational::from(cfg.k() as u64);
    let short = Rational::one() - Rational::one() / &k;
    let len = Rational::one() / &k;
    let tasks = inst
        .tasks
        .iter()
        .map(|t| {
            if t.length != Rational::one() {
                return Err(MpError::WindowTooShort);
            }
            let end = t.window.end() - &short;
            if &end - t.window.start() < len {
                return Err(MpError::WindowTooShort);
            }
            Ok(Task {
                id: t.id.clone(),
                length: len.clone(),
                window: Interval::new(t.window.start().clone(), end),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Instance::new(tasks))
}

/// Assign, in slot order, each task's unit slot [t, t+1] (t = transformed
/// start) to the lowest-indexed processor where it fits. `occupied` may
/// pre-seed slots that keep their processors.
fn lift_in_order(
    rows: &mut Vec<(TaskId, u32, Interval)>,
    movers: Vec<(TaskId, Rational)>,
    cfg: &MultiprocConfig,
) -> Result<usize, MpError> {
    let mut movers = movers;
    movers.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let limit = (2 * cfg.k() - 1) as usize;
    let mut max_overlap = 0usize;
    for (id, t) in movers {
        let slot = Interval::new(t.clone(), &t + 1);
        let mut used = vec![false; cfg.p as usize + 1];
        let mut overlapping = 0usize;
        for (_, proc, other) in rows.iter() {
            if other.overlaps(&slot) {
                overlapping += 1;
                used[*proc as usize] = true;
            }
        }
        // the bound counts the lifted slot itself
        if overlapping + 1 > limit {
            return Err(MpError::OverlapBound {
                found: overlapping + 1,
                limit,
            });
        }
        max_overlap = max_overlap.max(overlapping + 1);
        let proc = (1..=cfg.p).find(|q| !used[*q as usize]);
        let proc = proc.ok_or(MpError::NoProcessor)?;
        rows.push((id, proc, slot));
    }
    Ok(max_overlap)
}

/// Lift a solution of the transformed instance to processors from scratch.
pub fn mp_lift(
    original: &Instance,
    cfg: &MultiprocConfig,
    transformed_alloc: &Allocation,
) -> Result<MpAllocation, MpError> {
    let transformed = mp_transform(original, cfg)?;
    if let Err(v) = is_valid(&transformed, transformed_alloc) {
        return Err(MpError::BadAllocation(v));
    }
    let movers: Vec<(TaskId, Rational)> = transformed
        .tasks
        .iter()
        .zip(transformed_alloc.slots.iter())
        .map(|(t, s)| {
            let s = s
                .as_ref()
                .ok_or(MpError::BadAllocation(Violation::SizeMismatch))?;
            Ok((t.id.clone(), s.start().clone()))
        })
        .collect::<Result<Vec<_>, MpError>>()?;
    let mut rows = Vec::new();
    lift_in_order(&mut rows, movers, cfg)?;
    let out = MpAllocation { entries: rows };
    out.validate(original)?;
    Ok(out)
}

/// p-processor session wrapping the fixed-window allocator on the
/// transformed, k-rescaled coordinate axis.
pub struct MpSession {
    cfg: MultiprocConfig,
    /// Common span of the original windows.
    c: Rational,
    inner: FaSession,
    originals: BTreeMap<TaskId, Interval>,
    processors: BTreeMap<TaskId, u32>,
    last_reallocs: u64,
    /// Largest per-lift overlap seen (must stay <= 2k-1).
    pub max_lift_overlap: usize,
}

impl MpSession {
    pub fn new(cfg: MultiprocConfig, c: Rational) -> Result<Self, MpError> {
        if c < Rational::one() {
            return Err(MpError::WindowTooShort);
        }
        let k = Rational::from(cfg.k() as u64);
        // transformed span c - 1 + 1/k, rescaled by k to keep unit tasks
        let inner_c = &k * (&c - 1) + 1;
        Ok(MpSession {
            cfg,
            c,
            inner: FaSession::new(inner_c)?,
            originals: BTreeMap::new(),
            processors: BTreeMap::new(),
            last_reallocs: 0,
            max_lift_overlap: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    pub fn config(&self) -> &MultiprocConfig {
        &self.cfg
    }

    pub fn last_reallocs(&self) -> u64 {
        self.last_reallocs
    }

    fn scaled_window(&self, w: &Interval) -> Interval {
        let k = Rational::from(self.cfg.k() as u64);
        Interval::new(w.start() * &k, w.end() * &k - (&k - 1))
    }

    /// Full-axis slot of a task from the inner (scaled) allocation.
    fn full_slot_start(&self, inner_slot: &Interval) -> Rational {
        let k = Rational::from(self.cfg.k() as u64);
        inner_slot.start() / &k
    }

    pub fn insert(&mut self, task: Task) -> Result<u64, MpError> {
        if task.window.span() != self.c {
            return Err(MpError::Inner(FaError::WindowSpan {
                got: task.window.span(),
                want: self.c.clone(),
            }));
        }
        let before: BTreeMap<TaskId, Interval> = self.inner_slots();
        let scaled = Task::unit(task.id.clone(), self.scaled_window(&task.window));
        self.inner.insert(scaled)?;
        let after = self.inner_slots();
        // re-lift only the tasks the inner allocator moved (plus the new one)
        let mut movers: Vec<(TaskId, Rational)> = Vec::new();
        for (id, slot) in &after {
            if before.get(id) != Some(slot) {
                movers.push((id.clone(), self.full_slot_start(slot)));
            }
        }
        self.last_reallocs = movers.len().saturating_sub(1) as u64;
        let mover_ids: Vec<TaskId> = movers.iter().map(|(id, _)| id.clone()).collect();
        let mut rows: Vec<(TaskId, u32, Interval)> = Vec::new();
        for (id, slot) in &after {
            if mover_ids.contains(id) {
                continue;
            }
            let proc = *self.processors.get(id).expect("kept task has a processor");
            let t = self.full_slot_start(slot);
            rows.push((id.clone(), proc, Interval::new(t.clone(), &t + 1)));
        }
        let max_overlap = lift_in_order(&mut rows, movers, &self.cfg)?;
        self.max_lift_overlap = self.max_lift_overlap.max(max_overlap);
        self.originals.insert(task.id.clone(), task.window.clone());
        self.processors = rows.iter().map(|(id, p, _)| (id.clone(), *p)).collect();
        Ok(self.last_reallocs)
    }

    pub fn delete(&mut self, id: &TaskId) -> Result<(), MpError> {
        if !self.originals.contains_key(id) {
            return Err(MpError::UnknownId(id.clone()));
        }
        self.inner.delete(id)?;
        self.originals.remove(id);
        self.processors.remove(id);
        self.last_reallocs = 0;
        Ok(())
    }

    fn inner_slots(&self) -> BTreeMap<TaskId, Interval> {
        let (inst, alloc) = self.inner.state();
        inst.tasks
            .iter()
            .zip(alloc.slots.iter())
            .filter_map(|(t, s)| s.clone().map(|s| (t.id.clone(), s)))
            .collect()
    }

    /// Current per-processor allocation on the original axis.
    pub fn allocation(&self) -> MpAllocation {
        let entries = self
            .inner_slots()
            .into_iter()
            .map(|(id, slot)| {
                let t = self.full_slot_start(&slot);
                let proc = *self.processors.get(&id).expect("processor assigned");
                (id, proc, Interval::new(t.clone(), &t + 1))
            })
            .collect();
        MpAllocation { entries }
    }

    /// Original instance (window order) for validation.
    pub fn original_instance(&self) -> Instance {
        let mut tasks: Vec<Task> = self
            .originals
            .iter()
            .map(|(id, w)| Task::unit(id.clone(), w.clone()))
            .collect();
        tasks.sort_by(|a, b| a.window.lex_cmp(&b.window).then_with(|| a.id.cmp(&b.id)));
        Instance::new(tasks)
    }
}

/// Exact p-processor gamma-feasibility by enumerating processor
/// assignments, with per-processor feasibility decided by the oracle.
pub fn mp_oracle_feasible(
    inst: &Instance,
    gamma: &Rational,
    p: u32,
    limits: &OracleLimits,
) -> Result<bool, OracleError> {
    if inst.len() > limits.feasibility_n {
        return Err(OracleError::TooLarge {
            n: inst.len(),
            limit: limits.feasibility_n,
        });
    }
    let mut assignment = vec![0u32; inst.len()];
    fn go(
        inst: &Instance,
        gamma: &Rational,
        p: u32,
        limits: &OracleLimits,
        assignment: &mut Vec<u32>,
        idx: usize,
    ) -> Result<bool, OracleError> {
        if idx == inst.len() {
            return Ok(true);
        }
        // symmetry breaking: a task may open at most one new processor
        let used = assignment[..idx].iter().copied().max().unwrap_or(0);
        for q in 1..=(used + 1).min(p) {
            assignment[idx] = q;
            let sub = Instance::new(
                inst.tasks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i <= idx && assignment[*i] == q)
                    .map(|(_, t)| t.clone())
                    .collect(),
            );
            if oracle_feasible(&sub, gamma, limits)? && go(inst, gamma, p, limits, assignment, idx + 1)? {
                return Ok(true);
            }
        }
        assignment[idx] = 0;
        Ok(false)
    }
    go(inst, gamma, p, limits, &mut assignment, 0)
}

/// All feasible processor partitions (as sorted per-processor id lists,
/// lexicographically normalized across processor relabeling). Small
/// instances only; referee for uniqueness checks.
pub fn mp_oracle_partitions(
    inst: &Instance,
    gamma: &Rational,
    p: u32,
    limits: &OracleLimits,
) -> Result<Vec<Vec<Vec<TaskId>>>, OracleError> {
    if inst.len() > limits.feasibility_n {
        return Err(OracleError::TooLarge {
            n: inst.len(),
            limit: limits.feasibility_n,
        });
    }
    let n = inst.len();
    let mut out: Vec<Vec<Vec<TaskId>>> = Vec::new();
    let mut assignment = vec![1u32; n];
    loop {
        // check this assignment
        let mut ok = true;
        for q in 1..=p {
            let sub = Instance::new(
                inst.tasks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| assignment[*i] == q)
                    .map(|(_, t)| t.clone())
                    .collect(),
            );
            if !oracle_feasible(&sub, gamma, limits)? {
                ok = false;
                break;
            }
        }
        if ok {
            let mut part: Vec<Vec<TaskId>> = (1..=p)
                .map(|q| {
                    let mut ids: Vec<TaskId> = inst
                        .tasks
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| assignment[*i] == q)
                        .map(|(_, t)| t.id.clone())
                        .collect();
                    ids.sort();
                    ids
                })
                .collect();
            part.sort();
            if !out.contains(&part) {
                out.push(part);
            }
        }
        // next assignment
        let mut i = 0;
        loop {
            if i == n {
                return Ok(out);
            }
            if assignment[i] < p {
                assignment[i] += 1;
                break;
            }
            assignment[i] = 1;
            i += 1;
        }
    }
}

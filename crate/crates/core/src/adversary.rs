//! Generators for the hard constructions: static insert states with
//! certificates, replayable operation sequences, and adaptive adversaries
//! that choose the next operation from the observed allocation alone.

use crate::geometry::{Interval, Rational};
use crate::ordering::{is_valid, Allocation, Instance, InsertState, Task, TaskId};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdvError {
    #[error("bad generator parameters: {0}")]
    BadParameters(String),
    #[error("generated certificate failed validation: {0}")]
    BadCertificate(String),
}

/// Per-operation annotations carried next to generated sequences.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Annotations {
    /// Claimed lower bound on reallocations any allocator needs for this op.
    pub min_reallocs: Option<u64>,
    /// Underallocation factor the instance is claimed to keep after the op.
    pub gamma: Option<Rational>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Insert(Task),
    Delete(TaskId),
}

impl Op {
    pub fn id(&self) -> &TaskId {
        match self {
            Op::Insert(t) => &t.id,
            Op::Delete(id) => id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedOp {
    pub op: Op,
    pub annotations: Annotations,
}

impl AnnotatedOp {
    pub fn plain(op: Op) -> Self {
        AnnotatedOp {
            op,
            annotations: Annotations::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OpSequence {
    pub ops: Vec<AnnotatedOp>,
}

/// What an adaptive adversary observed the allocator doing; slots only,
/// never allocator internals.
#[derive(Clone, Debug, Default)]
pub struct ScheduleView {
    pub slots: Vec<(TaskId, Interval)>,
}

impl ScheduleView {
    pub fn slot_of(&self, id: &TaskId) -> Option<&Interval> {
        self.slots.iter().find(|(i, _)| i == id).map(|(_, s)| s)
    }

    /// Fraction of `x` covered by slots.
    pub fn density(&self, x: &Interval) -> Rational {
        let span = x.span();
        if span == Rational::zero() {
            return Rational::zero();
        }
        let mut covered = Rational::zero();
        for (_, s) in &self.slots {
            let lo = s.start().clone().max(x.start().clone());
            let hi = s.end().clone().min(x.end().clone());
            if hi > lo {
                covered = covered + (hi - lo);
            }
        }
        covered / span
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessKind {
    /// The allocator moved an existing task's slot.
    ReallocationObserved,
    /// The allocator refused an insertion the construction keeps feasible.
    AllocatorRejectedFeasible,
    /// All insertions landed without reallocation, overfilling a window.
    DensityContradiction,
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WitnessKind::ReallocationObserved => "reallocation-observed",
            WitnessKind::AllocatorRejectedFeasible => "rejected-feasible",
            WitnessKind::DensityContradiction => "density-contradiction",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForcedWitness {
    pub step: usize,
    pub kind: WitnessKind,
    pub detail: String,
}

/// Adaptive step machine bound to one allocator session. The driver calls
/// `next_op` with the current observed allocation; `None` ends the run.
pub trait Adversary {
    fn next_op(&mut self, view: &ScheduleView) -> Option<AnnotatedOp>;
    fn witness(&self) -> Option<&ForcedWitness>;
}

fn tid(prefix: &str, i: usize) -> TaskId {
    TaskId::from(format!("{prefix}{i:04}"))
}

/// Largest l >= 0 with (1+eps)^l <= 1/eps.
pub fn log_floor_one_plus(eps: &Rational) -> u64 {
    let base = Rational::one() + eps;
    let target = Rational::one() / eps;
    let mut acc = base.clone();
    let mut l = 0u64;
    while acc <= target {
        acc = acc * &base;
        l += 1;
    }
    l
}

/// Hard fixed-window insert state: n = floor((c-1)/eps) snugly packed unit
/// slots under windows W_i = max(c, i(1+eps)) + [-c, 0], plus an incoming
/// task with the earliest window [0, c]. Any allocator that solves it moves
/// at least floor(log_{1+eps}(1/eps)) tasks.
#[derive(Clone, Debug)]
pub struct LowerBoundState {
    pub eps: Rational,
    pub c: Rational,
    pub pre_instance: Instance,
    pub pre_allocation: Allocation,
    pub insert_task: Task,
    /// (1+eps)-solution of the pre-insertion instance.
    pub certificate: Allocation,
    pub min_reallocs: u64,
}

impl LowerBoundState {
    /// Combined ordered insert state (pending first among the [0,c] ties).
    pub fn insert_state(&self) -> InsertState {
        let mut tasks = vec![self.insert_task.clone()];
        tasks.extend(self.pre_instance.tasks.iter().cloned());
        let mut slots = vec![None];
        slots.extend(self.pre_allocation.slots.iter().cloned());
        InsertState::new(Instance::new(tasks), Allocation::new(slots), 0)
    }
}

pub fn gen_lower_bound(eps: &Rational, c: &Rational) -> Result<LowerBoundState, AdvError> {
    if *eps <= Rational::zero() || *eps >= Rational::one() {
        return Err(AdvError::BadParameters("eps must be in (0,1)".into()));
    }
    if *c < Rational::one() / eps + 1 {
        return Err(AdvError::BadParameters("c must be at least 1/eps + 1".into()));
    }
    use num::ToPrimitive;
    let n = ((c - 1) / eps)
        .floor_big()
        .to_u64()
        .ok_or_else(|| AdvError::BadParameters("n too large".into()))? as usize;
    let gamma = Rational::one() + eps;
    let mut tasks = Vec::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    let mut cert = Vec::with_capacity(n);
    for i in 1..=n {
        let anchor = c.clone().max(Rational::from(i) * &gamma);
        let window = Interval::new(&anchor - c, anchor.clone());
        tasks.push(Task::unit(tid("t", i), window));
        slots.push(Some(Interval::of_ints(i as i64 - 1, i as i64)));
        cert.push(Some(
            Interval::of_ints(i as i64 - 1, i as i64).scale(&gamma),
        ));
    }
    let pre_instance = Instance::new(tasks);
    let pre_allocation = Allocation::new(slots);
    let certificate = Allocation::new(cert);
    if let Err(v) = is_valid(&pre_instance, &pre_allocation) {
        return Err(AdvError::BadCertificate(format!("packed allocation: {v}")));
    }
    if let Err(v) = is_valid(&pre_instance.scale_lengths(&gamma), &certificate) {
        return Err(AdvError::BadCertificate(format!("slack certificate: {v}")));
    }
    let insert_task = Task::unit(
        TaskId::from("new0000"),
        Interval::new(Rational::zero(), c.clone()),
    );
    let state = LowerBoundState {
        eps: eps.clone(),
        c: c.clone(),
        pre_instance,
        pre_allocation,
        insert_task,
        certificate,
        min_reallocs: log_floor_one_plus(eps),
    };
    let combined = state.insert_state();
    if !combined.instance.is_ordered() || combined.validate().is_err() {
        return Err(AdvError::BadCertificate("insert state not ordered/valid".into()));
    }
    Ok(state)
}

/// Oscillation between the two ends of a chain of interlocked variable
/// windows; every oscillating insert forces k reallocations.
pub fn gen_small_slack_osc(
    eps: &Rational,
    k: usize,
    alternations: usize,
) -> Result<OpSequence, AdvError> {
    if *eps >= Rational::new(1, 3) || *eps <= Rational::zero() {
        return Err(AdvError::BadParameters("eps must be in (0, 1/3)".into()));
    }
    if k == 0 {
        return Err(AdvError::BadParameters("k must be positive".into()));
    }
    let gamma = Rational::one() + eps;
    let scaled = |a: i64, b: i64| Interval::of_ints(a, b).scale(&gamma);
    let mut ops = Vec::new();
    for i in 1..=k as i64 {
        let big = scaled(2 * i, 2 * i + 3);
        let small = scaled(2 * i + 1, 2 * i + 2);
        ops.push(AnnotatedOp {
            op: Op::Insert(Task::unit(tid("big", i as usize), big)),
            annotations: Annotations {
                gamma: Some(gamma.clone()),
                ..Default::default()
            },
        });
        ops.push(AnnotatedOp {
            op: Op::Insert(Task::unit(tid("small", i as usize), small)),
            annotations: Annotations {
                gamma: Some(gamma.clone()),
                ..Default::default()
            },
        });
    }
    let low = scaled(2, 3);
    let high = scaled(2 * k as i64 + 2, 2 * k as i64 + 3);
    for a in 0..alternations {
        let window = if a.is_multiple_of(2) { low.clone() } else { high.clone() };
        let id = tid("osc", a);
        ops.push(AnnotatedOp {
            op: Op::Insert(Task::unit(id.clone(), window)),
            annotations: Annotations {
                min_reallocs: Some(k as u64),
                gamma: Some(gamma.clone()),
                note: Some(format!("alternation {a}")),
            },
        });
        ops.push(AnnotatedOp::plain(Op::Delete(id)));
    }
    Ok(OpSequence { ops })
}

/// Density-chasing adversary: repeatedly halves its window towards the
/// denser half of the observed allocation, ending with one insertion into
/// an interval that a never-reallocating allocator cannot serve.
pub struct ReallocReqAdversary {
    gamma: u64,
    window: Interval,
    step: usize,
    emitted_in_step: u64,
    emitted_total: usize,
    pending_ids: Vec<TaskId>,
    prev_slots: Vec<(TaskId, Interval)>,
    witness: Option<ForcedWitness>,
    done: bool,
}

pub fn gen_realloc_req(gamma: u64) -> Result<ReallocReqAdversary, AdvError> {
    if gamma < 1 {
        return Err(AdvError::BadParameters("gamma must be >= 1".into()));
    }
    let span = Rational::from(gamma) * Rational::pow2(2 * gamma as i64 - 1);
    Ok(ReallocReqAdversary {
        gamma,
        window: Interval::new(Rational::zero(), span),
        step: 1,
        emitted_in_step: 0,
        emitted_total: 0,
        pending_ids: Vec::new(),
        prev_slots: Vec::new(),
        witness: None,
        done: false,
    })
}

impl ReallocReqAdversary {
    fn inserts_for_step(&self, k: u64) -> u64 {
        // step k of 2*gamma - 1 inserts 2^(2*gamma - k - 1) tasks; the final
        // step (k = 2*gamma) inserts exactly one
        if k < 2 * self.gamma {
            1u64 << (2 * self.gamma - k - 1)
        } else if k == 2 * self.gamma {
            1
        } else {
            0
        }
    }

    fn observe(&mut self, view: &ScheduleView) {
        // reallocation: a previously seen slot changed
        for (id, slot) in &self.prev_slots {
            if let Some(now) = view.slot_of(id) {
                if now != slot && self.witness.is_none() {
                    self.witness = Some(ForcedWitness {
                        step: self.emitted_total,
                        kind: WitnessKind::ReallocationObserved,
                        detail: format!("task {id} moved from {slot} to {now}"),
                    });
                }
            }
        }
        // rejection: an emitted insert is absent from the observed slots
        for id in &self.pending_ids {
            if view.slot_of(id).is_none() && self.witness.is_none() {
                self.witness = Some(ForcedWitness {
                    step: self.emitted_total,
                    kind: WitnessKind::AllocatorRejectedFeasible,
                    detail: format!("task {id} was not allocated"),
                });
            }
        }
        self.prev_slots = view.slots.clone();
    }
}

impl Adversary for ReallocReqAdversary {
    fn next_op(&mut self, view: &ScheduleView) -> Option<AnnotatedOp> {
        self.observe(view);
        if self.done || self.witness.is_some() {
            // final density audit once everything was emitted
            if self.done && self.witness.is_none() {
                let d = view.density(&self.window);
                if d > Rational::one() {
                    self.witness = Some(ForcedWitness {
                        step: self.emitted_total,
                        kind: WitnessKind::DensityContradiction,
                        detail: format!("density {d} > 1 in {}", self.window),
                    });
                }
            }
            return None;
        }
        if self.emitted_in_step == self.inserts_for_step(self.step as u64) {
            // advance to the next step: halve towards the denser half
            self.step += 1;
            self.emitted_in_step = 0;
            if self.step as u64 > 2 * self.gamma {
                self.done = true;
                let d = view.density(&self.window);
                if d > Rational::one() {
                    self.witness = Some(ForcedWitness {
                        step: self.emitted_total,
                        kind: WitnessKind::DensityContradiction,
                        detail: format!("density {d} > 1 in {}", self.window),
                    });
                }
                return None;
            }
            let mid = (self.window.start() + self.window.end()) / 2;
            let left = Interval::new(self.window.start().clone(), mid.clone());
            let right = Interval::new(mid, self.window.end().clone());
            // ties go left
            self.window = if view.density(&left) >= view.density(&right) {
                left
            } else {
                right
            };
        }
        let id = tid(&format!("rr{}x", self.step), self.emitted_in_step as usize);
        self.emitted_in_step += 1;
        self.emitted_total += 1;
        self.pending_ids.push(id.clone());
        Some(AnnotatedOp {
            op: Op::Insert(Task::unit(id, self.window.clone())),
            annotations: Annotations {
                gamma: Some(Rational::from(self.gamma)),
                ..Default::default()
            },
        })
    }

    fn witness(&self) -> Option<&ForcedWitness> {
        self.witness.as_ref()
    }
}

/// Full-binary-tree adversary: one task per aligned interval of span >= 2
/// in [0, 2^k]; each traced insertion (following the observed slots down
/// the tree) forces k reallocations, and the paired delete restores the
/// setup.
pub struct UnderallocReqAdversary {
    k: u32,
    setup: Vec<Task>,
    setup_emitted: usize,
    cycles_left: usize,
    /// id of the task owning each aligned window, for the trace
    by_window: Vec<(Interval, TaskId)>,
    probe_counter: usize,
    pending_delete: Option<TaskId>,
    witness: Option<ForcedWitness>,
}

pub fn gen_underalloc_req(k: u32, cycles: usize) -> Result<UnderallocReqAdversary, AdvError> {
    if k < 1 {
        return Err(AdvError::BadParameters("k must be >= 1".into()));
    }
    let mut setup = Vec::new();
    let mut by_window = Vec::new();
    let mut idx = 0;
    for level in (1..=k as i64).rev() {
        let cell = 1i64 << level;
        for a in 0..(1i64 << (k as i64 - level)) {
            let w = Interval::of_ints(a * cell, (a + 1) * cell);
            let task = Task::unit(tid("ua", idx), w.clone());
            by_window.push((w, task.id.clone()));
            setup.push(task);
            idx += 1;
        }
    }
    Ok(UnderallocReqAdversary {
        k,
        setup,
        setup_emitted: 0,
        cycles_left: cycles,
        by_window,
        probe_counter: 0,
        pending_delete: None,
        witness: None,
    })
}

impl Adversary for UnderallocReqAdversary {
    fn next_op(&mut self, view: &ScheduleView) -> Option<AnnotatedOp> {
        if self.setup_emitted < self.setup.len() {
            let t = self.setup[self.setup_emitted].clone();
            self.setup_emitted += 1;
            return Some(AnnotatedOp::plain(Op::Insert(t)));
        }
        if let Some(id) = self.pending_delete.take() {
            return Some(AnnotatedOp::plain(Op::Delete(id)));
        }
        if self.cycles_left == 0 {
            return None;
        }
        self.cycles_left -= 1;
        // trace C downward through the halves overlapping the observed slot
        let mut c = Interval::of_ints(0, 1i64 << self.k);
        while c.span() >= Rational::from_int(2) {
            let owner = self
                .by_window
                .iter()
                .find(|(w, _)| *w == c)
                .map(|(_, id)| id.clone());
            let Some(owner) = owner else { break };
            let Some(slot) = view.slot_of(&owner) else {
                self.witness = Some(ForcedWitness {
                    step: self.probe_counter,
                    kind: WitnessKind::AllocatorRejectedFeasible,
                    detail: format!("setup task {owner} missing"),
                });
                return None;
            };
            let mid = (c.start() + c.end()) / 2;
            let left = Interval::new(c.start().clone(), mid.clone());
            let right = Interval::new(mid, c.end().clone());
            let inter = |x: &Interval| {
                let lo = slot.start().clone().max(x.start().clone());
                let hi = slot.end().clone().min(x.end().clone());
                if hi > lo {
                    hi - lo
                } else {
                    Rational::zero()
                }
            };
            // the half sharing more interior with the slot; ties go left
            c = if inter(&left) >= inter(&right) { left } else { right };
        }
        let id = tid("probe", self.probe_counter);
        self.probe_counter += 1;
        self.pending_delete = Some(id.clone());
        Some(AnnotatedOp {
            op: Op::Insert(Task::unit(id, c)),
            annotations: Annotations {
                min_reallocs: Some(self.k as u64),
                note: Some("traced probe".into()),
                ..Default::default()
            },
        })
    }

    fn witness(&self) -> Option<&ForcedWitness> {
        self.witness.as_ref()
    }
}

/// Aligned nested-window insert state needing log_{2 gamma}(n-1)
/// reallocations.
#[derive(Clone, Debug)]
pub struct NonGenericState {
    pub state: InsertState,
    /// gamma-solution of the full instance (including the pending task).
    pub certificate: Allocation,
    pub min_reallocs: u64,
    pub gamma: u64,
}

pub fn gen_non_generic(gamma: u64, m: u32) -> Result<NonGenericState, AdvError> {
    if gamma < 1 || (gamma & (gamma - 1)) != 0 {
        return Err(AdvError::BadParameters("gamma must be a power of 2".into()));
    }
    if m < 1 {
        return Err(AdvError::BadParameters("m must be >= 1".into()));
    }
    let b = 2 * gamma as i64;
    let n = b.pow(m) as usize + 1;
    let x = |j: u32| Interval::of_ints(0, b.pow(j));
    let mut tasks = Vec::with_capacity(n);
    let mut slots = Vec::with_capacity(n);
    for i in 1..n {
        // ranks ((2g)^(j-1), (2g)^j] take window X_{j+1}; rank 1 takes X_1
        let mut window = x(1);
        for j in 1..=m {
            let lo = b.pow(j - 1) as usize;
            let hi = b.pow(j) as usize;
            if i > lo && i <= hi {
                window = x(j + 1);
                break;
            }
        }
        tasks.push(Task::unit(tid("t", i), window));
        slots.push(Some(Interval::of_ints(i as i64 - 1, i as i64)));
    }
    tasks.push(Task::unit(tid("t", n), x(1)));
    slots.push(None);
    let inst = Instance::new(tasks);
    let state = InsertState::new(inst.clone(), Allocation::new(slots), n - 1);
    state
        .validate()
        .map_err(|v| AdvError::BadCertificate(format!("partial solution: {v}")))?;
    // gamma-certificate: G[i] = [2 gamma i - gamma, 2 gamma i], G[n] = [0, gamma]
    let g = gamma as i64;
    let mut cert = Vec::with_capacity(n);
    for i in 1..n {
        cert.push(Some(Interval::of_ints(
            2 * g * i as i64 - g,
            2 * g * i as i64,
        )));
    }
    cert.push(Some(Interval::of_ints(0, g)));
    let certificate = Allocation::new(cert);
    if let Err(v) = is_valid(&inst.scale_lengths(&Rational::from(gamma)), &certificate) {
        return Err(AdvError::BadCertificate(format!("gamma certificate: {v}")));
    }
    Ok(NonGenericState {
        state,
        certificate,
        min_reallocs: m as u64,
        gamma,
    })
}

/// Staggered multiprocessor groups oscillating between two phase-shifted
/// layouts; each full alternation forces about k*p reallocations.
pub fn gen_mp_small_slack(
    eps: &Rational,
    p: u32,
    k: usize,
    alternations: usize,
) -> Result<OpSequence, AdvError> {
    if p <= 1 {
        return Err(AdvError::BadParameters("p must exceed 1".into()));
    }
    let bound = Rational::new(1, 4 * p as i64 - 1);
    if *eps >= bound || *eps <= Rational::zero() {
        return Err(AdvError::BadParameters(format!(
            "eps must be in (0, 1/(4p-1)) = (0, {bound})"
        )));
    }
    let gamma = Rational::one() + eps;
    let pr = Rational::from(p as u64);
    let window = |i: i64, j: u32, shift: bool| {
        let off = Rational::from(j as u64) / &pr
            + if shift {
                Rational::one() / (Rational::from_int(2) * &pr)
            } else {
                Rational::zero()
            };
        let start = (Rational::from_int(i) + &off) * &gamma;
        let end = (Rational::from_int(i) + off + 1) * &gamma;
        Interval::new(start, end)
    };
    let mut ops = Vec::new();
    let mut group0: Vec<TaskId> = Vec::new();
    for i in -(k as i64)..=(k as i64) {
        for j in 1..=p {
            let id = TaskId::from(format!("g{}p{j}", i + k as i64));
            if i == 0 {
                group0.push(id.clone());
            }
            ops.push(AnnotatedOp {
                op: Op::Insert(Task::unit(id, window(i, j, false))),
                annotations: Annotations {
                    gamma: Some(gamma.clone()),
                    ..Default::default()
                },
            });
        }
    }
    for a in 0..alternations {
        if a.is_multiple_of(2) {
            // to Position 2: remove group 0, add p-1 half-shifted tasks
            for id in &group0 {
                ops.push(AnnotatedOp::plain(Op::Delete(id.clone())));
            }
            for j in 1..=(p - 1) {
                let id = TaskId::from(format!("s{a}p{j}"));
                ops.push(AnnotatedOp {
                    op: Op::Insert(Task::unit(id, window(0, j, true))),
                    annotations: Annotations {
                        gamma: Some(gamma.clone()),
                        note: Some(format!("to position 2 (alternation {a})")),
                        ..Default::default()
                    },
                });
            }
        } else {
            // back to Position 1
            for j in 1..=(p - 1) {
                let id = TaskId::from(format!("s{}p{j}", a - 1));
                ops.push(AnnotatedOp::plain(Op::Delete(id)));
            }
            for (j, id) in group0.iter().enumerate() {
                ops.push(AnnotatedOp {
                    op: Op::Insert(Task::unit(
                        id.clone(),
                        window(0, j as u32 + 1, false),
                    )),
                    annotations: Annotations {
                        gamma: Some(gamma.clone()),
                        note: Some(format!("to position 1 (alternation {a})")),
                        ..Default::default()
                    },
                });
            }
        }
    }
    Ok(OpSequence { ops })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarLengthMode {
    /// gamma-underallocated before each insertion only.
    PreInsertSlack,
    /// gamma-underallocated at all times; requires gamma < 2.
    AlwaysSlack,
}

/// Variable-task-length oscillations. Pre-insert-slack mode alternates a
/// pair of long tasks between two half-overlapping windows, shuffling the
/// k unit tasks each time; always-slack mode inserts an rk-length task
/// into the densest 1/m fraction of the observed allocation.
pub struct VarLengthOsc {
    mode: VarLengthMode,
    gamma: Rational,
    k: u64,
    m: u64,
    cycles_left: usize,
    stage: usize,
    queue: Vec<AnnotatedOp>,
    witness: Option<ForcedWitness>,
}

pub fn gen_var_length_osc(
    gamma: &Rational,
    k: u64,
    mode: VarLengthMode,
    cycles: usize,
) -> Result<VarLengthOsc, AdvError> {
    if *gamma < Rational::one() {
        return Err(AdvError::BadParameters("gamma must be >= 1".into()));
    }
    if k == 0 {
        return Err(AdvError::BadParameters("k must be positive".into()));
    }
    let m = match mode {
        VarLengthMode::PreInsertSlack => 1,
        VarLengthMode::AlwaysSlack => {
            if *gamma >= Rational::from_int(2) {
                return Err(AdvError::BadParameters(
                    "always-slack mode requires gamma < 2".into(),
                ));
            }
            // m = ceil(2 / (2 - gamma)), and k must be a multiple of m
            let two = Rational::from_int(2);
            let mut m = 1u64;
            while Rational::from(m) * (&two - gamma) < two {
                m += 1;
            }
            if !k.is_multiple_of(m) {
                return Err(AdvError::BadParameters(format!(
                    "k must be a multiple of m = {m}"
                )));
            }
            m
        }
    };
    Ok(VarLengthOsc {
        mode,
        gamma: gamma.clone(),
        k,
        m,
        cycles_left: cycles,
        stage: 0,
        queue: Vec::new(),
        witness: None,
    })
}

impl VarLengthOsc {
    fn kg(&self) -> Rational {
        Rational::from(self.k) * &self.gamma
    }
}

impl Adversary for VarLengthOsc {
    fn next_op(&mut self, view: &ScheduleView) -> Option<AnnotatedOp> {
        if !self.queue.is_empty() {
            return Some(self.queue.remove(0));
        }
        match self.mode {
            VarLengthMode::PreInsertSlack => {
                let kg = self.kg();
                if self.stage == 0 {
                    // unit tasks in [1,3]*k*gamma
                    for i in 0..self.k {
                        self.queue.push(AnnotatedOp::plain(Op::Insert(Task::unit(
                            tid("u", i as usize),
                            Interval::new(kg.clone(), Rational::from_int(3) * &kg),
                        ))));
                    }
                    self.stage = 1;
                    return Some(self.queue.remove(0));
                }
                if self.cycles_left == 0 {
                    return None;
                }
                self.cycles_left -= 1;
                let phase = self.stage - 1;
                self.stage += 1;
                // W1 = [0,2]kg on even phases, W2 = [2,4]kg on odd
                let w = if phase.is_multiple_of(2) {
                    Interval::new(Rational::zero(), Rational::from_int(2) * &kg)
                } else {
                    Interval::new(Rational::from_int(2) * &kg, Rational::from_int(4) * &kg)
                };
                if phase > 0 {
                    self.queue.push(AnnotatedOp::plain(Op::Delete(tid(
                        "lenk",
                        phase - 1,
                    ))));
                    self.queue.push(AnnotatedOp::plain(Op::Delete(tid(
                        "len2kgk",
                        phase - 1,
                    ))));
                }
                let len_a = Rational::from(self.k);
                let len_b = Rational::from_int(2) * &kg - &len_a;
                self.queue.push(AnnotatedOp::plain(Op::Insert(Task::new(
                    tid("lenk", phase),
                    len_a,
                    w.clone(),
                ))));
                self.queue.push(AnnotatedOp {
                    op: Op::Insert(Task::new(tid("len2kgk", phase), len_b, w)),
                    annotations: Annotations {
                        min_reallocs: Some(self.k),
                        gamma: Some(self.gamma.clone()),
                        note: Some(format!("alternation {phase}")),
                    },
                });
                Some(self.queue.remove(0))
            }
            VarLengthMode::AlwaysSlack => {
                let kg = self.kg();
                let r_num = self.k / self.m; // rk, an integer by validation
                if self.stage == 0 {
                    let count = self.k - r_num;
                    for i in 0..count {
                        self.queue.push(AnnotatedOp::plain(Op::Insert(Task::unit(
                            tid("u", i as usize),
                            Interval::new(Rational::zero(), kg.clone()),
                        ))));
                    }
                    self.stage = 1;
                    return Some(self.queue.remove(0));
                }
                if self.cycles_left == 0 {
                    return None;
                }
                self.cycles_left -= 1;
                let probe = self.stage - 1;
                self.stage += 1;
                if probe > 0 {
                    self.queue
                        .push(AnnotatedOp::plain(Op::Delete(tid("v", probe - 1))));
                }
                // pigeonhole: one of the m parts of [0, k*gamma] has density
                // at least (1-r)/gamma
                let part_span = &kg / Rational::from(self.m);
                let threshold = (Rational::one() - Rational::one() / Rational::from(self.m))
                    / &self.gamma;
                let mut chosen = None;
                for j in 0..self.m {
                    let lo = &part_span * Rational::from(j);
                    let hi = &part_span * Rational::from(j + 1);
                    let part = Interval::new(lo, hi);
                    if view.density(&part) >= threshold {
                        chosen = Some(part);
                        break;
                    }
                }
                let Some(v) = chosen else {
                    self.witness = Some(ForcedWitness {
                        step: self.stage,
                        kind: WitnessKind::AllocatorRejectedFeasible,
                        detail: "no dense part found (tasks missing?)".into(),
                    });
                    return None;
                };
                // forced count: at least (2-gamma)^2 k / 6, and at least 1
                let two = Rational::from_int(2);
                let diff = &two - &self.gamma;
                let bound = &diff * &diff * Rational::from(self.k) / Rational::from_int(6);
                let mut forced = bound.ceil_big();
                if forced < 1.into() {
                    forced = 1.into();
                }
                use num::ToPrimitive;
                self.queue.push(AnnotatedOp {
                    op: Op::Insert(Task::new(
                        tid("v", probe),
                        Rational::from(r_num),
                        v,
                    )),
                    annotations: Annotations {
                        min_reallocs: forced.to_u64(),
                        gamma: Some(self.gamma.clone()),
                        note: Some(format!("dense probe {probe}")),
                    },
                });
                Some(self.queue.remove(0))
            }
        }
    }

    fn witness(&self) -> Option<&ForcedWitness> {
        self.witness.as_ref()
    }
}

/// Wrap a static sequence as an adversary.
pub struct Replay {
    ops: std::collections::VecDeque<AnnotatedOp>,
}

impl Replay {
    pub fn new(seq: OpSequence) -> Self {
        Replay {
            ops: seq.ops.into(),
        }
    }
}

impl Adversary for Replay {
    fn next_op(&mut self, _view: &ScheduleView) -> Option<AnnotatedOp> {
        self.ops.pop_front()
    }
    fn witness(&self) -> Option<&ForcedWitness> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{oracle_feasible, oracle_min_realloc, OracleLimits};

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn lower_bound_half_three() {
        let lb = gen_lower_bound(&r(1, 2), &Rational::from_int(3)).unwrap();
        assert_eq!(lb.pre_instance.len(), 4);
        let want = [
            Interval::of_ints(0, 3),
            Interval::of_ints(0, 3),
            Interval::new(r(3, 2), r(9, 2)),
            Interval::of_ints(3, 6),
        ];
        for (t, w) in lb.pre_instance.tasks.iter().zip(want.iter()) {
            assert_eq!(&t.window, w);
        }
        assert_eq!(
            lb.pre_allocation.slots[3],
            Some(Interval::of_ints(3, 4))
        );
        assert_eq!(lb.insert_task.window, Interval::of_ints(0, 3));
        // floor(log_{3/2}(2)) = 1
        assert_eq!(lb.min_reallocs, 1);
        // quarter/five: n = 16, floor(log_{5/4}(4)) = 6
        let lb = gen_lower_bound(&r(1, 4), &Rational::from_int(5)).unwrap();
        assert_eq!(lb.pre_instance.len(), 16);
        assert_eq!(lb.min_reallocs, 6);
        // parameter validation
        assert!(gen_lower_bound(&r(1, 2), &Rational::from_int(2)).is_err());
        assert!(gen_lower_bound(&Rational::one(), &Rational::from_int(9)).is_err());
    }

    #[test]
    fn lower_bound_oracle_min() {
        let lim = OracleLimits::default();
        let lb = gen_lower_bound(&r(1, 2), &Rational::from_int(3)).unwrap();
        let (count, _) = oracle_min_realloc(&lb.insert_state(), &lim).unwrap();
        assert!(count >= lb.min_reallocs, "count {count}");
    }

    #[test]
    fn small_slack_osc_shape() {
        let seq = gen_small_slack_osc(&r(3, 10), 3, 4).unwrap();
        // 6 base inserts + 4 alternations (insert+delete each)
        assert_eq!(seq.ops.len(), 6 + 8);
        assert!(gen_small_slack_osc(&r(1, 3), 3, 1).is_err());
    }

    #[test]
    fn non_generic_small() {
        let lim = OracleLimits::default();
        for m in [2u32, 3] {
            let st = gen_non_generic(1, m).unwrap();
            assert_eq!(st.state.instance.len(), (1usize << m) + 1);
            let (count, _) = oracle_min_realloc(&st.state, &lim).unwrap();
            assert!(count >= m as u64, "m={m}: count {count}");
        }
        assert!(gen_non_generic(3, 2).is_err());
        assert!(gen_non_generic(1, 0).is_err());
    }

    #[test]
    fn realloc_req_trace_gamma_one() {
        // against a mental never-reallocating allocator placing leftmost
        let mut adv = gen_realloc_req(1).unwrap();
        let mut view = ScheduleView::default();
        // first op: insert into [0,2]
        let op1 = adv.next_op(&view).unwrap();
        let Op::Insert(t1) = &op1.op else { panic!() };
        assert_eq!(t1.window, Interval::of_ints(0, 2));
        view.slots
            .push((t1.id.clone(), Interval::of_ints(0, 1)));
        // second op: denser half is [0,1]
        let op2 = adv.next_op(&view).unwrap();
        let Op::Insert(t2) = &op2.op else { panic!() };
        assert_eq!(t2.window, Interval::of_ints(0, 1));
        // allocator cannot place it without moving t1; report no slot
        assert!(adv.next_op(&view).is_none());
        assert_eq!(
            adv.witness().unwrap().kind,
            WitnessKind::AllocatorRejectedFeasible
        );
        // the instance stays 1-underallocated throughout
        let lim = OracleLimits::default();
        let inst = Instance::new(vec![t1.clone(), t2.clone()]);
        assert!(oracle_feasible(&inst, &Rational::one(), &lim).unwrap());
    }

    #[test]
    fn underalloc_req_setup() {
        let adv = gen_underalloc_req(2, 1).unwrap();
        let windows: Vec<Interval> =
            adv.setup.iter().map(|t| t.window.clone()).collect();
        assert_eq!(
            windows,
            vec![
                Interval::of_ints(0, 4),
                Interval::of_ints(0, 2),
                Interval::of_ints(2, 4),
            ]
        );
        assert!(gen_underalloc_req(0, 1).is_err());
    }

    #[test]
    fn mp_small_slack_shape() {
        let seq = gen_mp_small_slack(&r(1, 12), 2, 2, 2).unwrap();
        // setup: 5 groups x 2 tasks; alternation 0: 2 deletes + 1 insert;
        // alternation 1: 1 delete + 2 inserts
        assert_eq!(seq.ops.len(), 10 + 3 + 3);
        assert!(gen_mp_small_slack(&r(1, 7), 2, 1, 1).is_err());
    }

    #[test]
    fn var_length_modes() {
        assert!(gen_var_length_osc(&Rational::from_int(2), 3, VarLengthMode::AlwaysSlack, 1)
            .is_err());
        let mut pre =
            gen_var_length_osc(&Rational::one(), 3, VarLengthMode::PreInsertSlack, 2).unwrap();
        let view = ScheduleView::default();
        let mut inserts = 0;
        let mut annotated = 0;
        while let Some(op) = pre.next_op(&view) {
            if matches!(op.op, Op::Insert(_)) {
                inserts += 1;
            }
            if op.annotations.min_reallocs == Some(3) {
                annotated += 1;
            }
        }
        assert_eq!(inserts, 3 + 2 * 2); // units + 2 cycles of big pairs
        assert_eq!(annotated, 2);
        // always-slack: m = 4 at gamma = 3/2, k must divide
        assert!(gen_var_length_osc(&r(3, 2), 5, VarLengthMode::AlwaysSlack, 1).is_err());
        assert!(gen_var_length_osc(&r(3, 2), 8, VarLengthMode::AlwaysSlack, 1).is_ok());
    }
}

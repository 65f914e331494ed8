// Error variants carry exact-rational context by value; boxing them would
// complicate every call site for no measurable gain at these sizes.
#![allow(clippy::result_large_err)]

//! Reallocation-bounded online interval allocators and their referees.
//!
//! The crate maintains, for a dynamic set of tasks each constrained to a
//! window, an allocation of non-overlapping slots while bounding how many
//! existing tasks are moved per insertion. It provides:
//!
//! - [`fa`]: the fixed-window allocator (slack-oblivious doubling driver over
//!   pushes, simulated jumps and gap packing);
//! - [`va`]: the aligned variable-window allocator with its best/bad/imbalance
//!   selectors and the alignment reduction;
//! - [`multiproc`]: the wrapper turning a single-processor allocator into a
//!   p-processor one for sufficiently slack instances;
//! - [`oracle`]: exact brute-force feasibility / maximum-slack /
//!   minimum-reallocation referees for desk-scale instances;
//! - [`adversary`]: generators for the hard instances and adaptive operation
//!   streams that force reallocations;
//! - [`idsetrq`]: the persistent order-statistic tree with associative range
//!   aggregation backing the allocators' indexes;
//! - [`harness`]: serialization, workload execution, metrics and fuzzing.

pub mod adversary;
pub mod fa;
pub mod geometry;
pub mod harness;
pub mod idsetrq;
pub mod multiproc;
pub mod oracle;
pub mod ordering;
pub mod va;

pub use geometry::{Interval, Rational};
pub use ordering::{Allocation, Instance, InsertState, Task, TaskId};

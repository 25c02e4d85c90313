//! Schedulability analysis and task partitioning for partitioned
//! fixed-priority multicores whose tasks share resources under the
//! Multiprocessor Priority Ceiling Protocol (MPCP).
//!
//! * [`model`]: tasks, resources, allocations and the JSON interchange format.
//! * [`blocking`]: worst-case MPCP blocking bounds.
//! * [`rta`]: response-time analysis and the schedulability verdict.
//! * [`partition`]: BR-WFD, the WFD baseline and the minimum-core search.
//! * [`taskgen`]: seeded synthetic task sets.
//! * [`experiment`]: paired min-core and schedulable-ratio sweeps.

pub mod blocking;
pub mod experiment;
pub mod model;
pub mod partition;
pub mod rng;
pub mod rta;
pub mod taskgen;

pub use blocking::{worst_case_blocking, BlockingAnalysis, BlockingBreakdown};
pub use model::{Allocation, Locality, ModelError, ResourceId, Task, TaskId, TaskSet};
pub use partition::{allocate_brwfd, allocate_wfd, min_cores, Algorithm, PartitionOutcome};
pub use rta::{is_schedulable, wcrt, RtaResult, Verdict};
pub use taskgen::{generate, GenConfig, GenMode};

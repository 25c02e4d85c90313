//! Task-to-core partitioning: blocking- and resource-aware worst-fit
//! decreasing (BR-WFD), the plain utilization worst-fit baseline, and the
//! minimum-core search.
//!
//! BR-WFD orders tasks by an allocation-independent blocking estimate (PBU),
//! prefers the core whose tasks share the most resources with the next task,
//! and falls back to the least blocking-loaded core whenever the preferred
//! core would exceed the running maximum blocking load. Both allocators run
//! the response-time test after every placement and stop at the first
//! failure.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Allocation, CoreId, TaskId, TaskSet};
use crate::rta::{self, Verdict};

pub const DEFAULT_BETA: f64 = 0.1;

/// Tolerance for taking the ceiling of a summed utilization.
const LOAD_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PbuEntry {
    pub pgb_low: f64,
    pub pgb_high: f64,
    pub pbu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PbuTable {
    pub beta: f64,
    /// Indexed by task id.
    pub entries: Vec<PbuEntry>,
}

impl PbuTable {
    pub fn pbu(&self, i: TaskId) -> f64 {
        self.entries[i].pbu
    }
}

/// Global blocking estimate from lower-priority tasks, assuming every
/// resource is global and every other task remote.
pub fn pgb_low(ts: &TaskSet, i: TaskId) -> f64 {
    let prio = ts.task(i).priority;
    ts.resources_of(i)
        .map(|k| {
            ts.accessors(k)
                .iter()
                .filter(|&&j| ts.task(j).priority < prio)
                .map(|&j| ts.max_section(j, k))
                .fold(0.0, f64::max)
        })
        .fold(0.0, |acc, x| acc + x)
}

/// Global blocking estimate from higher-priority tasks.
pub fn pgb_high(ts: &TaskSet, i: TaskId) -> f64 {
    let task = ts.task(i);
    let mut sum = 0.0;
    for k in ts.resources_of(i) {
        for &j in ts.accessors(k) {
            let other = ts.task(j);
            if other.priority > task.priority {
                sum += (task.period / other.period).ceil() * ts.total_section(j, k);
            }
        }
    }
    sum
}

pub fn pbu_table(ts: &TaskSet, beta: f64) -> PbuTable {
    let entries = ts
        .tasks()
        .iter()
        .map(|t| {
            let low = pgb_low(ts, t.id);
            let high = pgb_high(ts, t.id);
            PbuEntry {
                pgb_low: low,
                pgb_high: high,
                pbu: (t.wcet + beta * (low + high)) / t.period,
            }
        })
        .collect();
    PbuTable { beta, entries }
}

/// `|Θ_i ∩ Θ_j|`
pub fn resource_correlation(ts: &TaskSet, i: TaskId, j: TaskId) -> usize {
    ts.resources_of(i).filter(|&k| ts.accesses(j, k)).count()
}

/// Sum of correlations between `i` and every task already on `core`.
pub fn resource_similarity(ts: &TaskSet, alloc: &Allocation, i: TaskId, core: CoreId) -> usize {
    alloc
        .tasks_on(core)
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| resource_correlation(ts, i, j))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Brwfd,
    Wfd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Brwfd, Algorithm::Wfd];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Brwfd => "brwfd",
            Algorithm::Wfd => "wfd",
        }
    }

    pub fn allocate(self, ts: &TaskSet, cores: usize, beta: f64) -> PartitionOutcome {
        match self {
            Algorithm::Brwfd => allocate_brwfd(ts, cores, beta),
            Algorithm::Wfd => allocate_wfd(ts, cores),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "brwfd" => Ok(Algorithm::Brwfd),
            "wfd" => Ok(Algorithm::Wfd),
            other => Err(format!(
                "unknown algorithm `{other}` (expected brwfd or wfd)"
            )),
        }
    }
}

/// One placement decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub task: TaskId,
    /// Most resource-similar core, if any core had non-zero similarity.
    pub candidate: Option<CoreId>,
    pub chosen: CoreId,
    /// The least-loaded core was taken instead of a similarity candidate.
    pub fallback: bool,
    /// Running maximum blocking load after the placement.
    pub bu_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// No cores to place tasks on.
    CoreOverflow,
    /// The response-time test failed for this task after a placement.
    RtaFail(TaskId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionFailure {
    pub reason: FailureReason,
    /// Allocation state when the allocator gave up.
    pub partial: Allocation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionOutcome {
    pub result: Result<Allocation, PartitionFailure>,
    pub trace: Vec<TraceEntry>,
}

impl PartitionOutcome {
    pub fn is_success(&self) -> bool {
        self.result.is_ok()
    }

    pub fn allocation(&self) -> Option<&Allocation> {
        self.result.as_ref().ok()
    }

    /// The final allocation on success, the partial one on failure.
    pub fn last_allocation(&self) -> &Allocation {
        match &self.result {
            Ok(a) => a,
            Err(f) => &f.partial,
        }
    }
}

fn by_key_descending(keys: &[f64]) -> Vec<TaskId> {
    let mut order: Vec<TaskId> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Lowest-index core minimizing `key`.
fn argmin(cores: usize, key: impl Fn(CoreId) -> f64) -> CoreId {
    (0..cores).fold(0, |best, c| if key(c) < key(best) { c } else { best })
}

fn overflow(ts: &TaskSet, cores: usize) -> Option<PartitionOutcome> {
    (cores == 0 && !ts.is_empty()).then(|| PartitionOutcome {
        result: Err(PartitionFailure {
            reason: FailureReason::CoreOverflow,
            partial: Allocation::new(cores, ts.len()),
        }),
        trace: Vec::new(),
    })
}

fn check(ts: &TaskSet, alloc: &Allocation) -> Result<(), FailureReason> {
    match rta::verdict(ts, alloc) {
        Verdict::Schedulable => Ok(()),
        Verdict::Unschedulable(t) => Err(FailureReason::RtaFail(t)),
    }
}

pub fn allocate_brwfd(ts: &TaskSet, cores: usize, beta: f64) -> PartitionOutcome {
    if let Some(o) = overflow(ts, cores) {
        return o;
    }
    let table = pbu_table(ts, beta);
    let keys: Vec<f64> = table.entries.iter().map(|e| e.pbu).collect();
    let mut alloc = Allocation::new(cores, ts.len());
    let mut trace = Vec::with_capacity(ts.len());
    let mut bu_max = 0.0f64;

    for i in by_key_descending(&keys) {
        let pbu = table.pbu(i);
        let similarity: Vec<usize> = (0..cores)
            .map(|c| resource_similarity(ts, &alloc, i, c))
            .collect();
        let best = similarity.iter().copied().max().unwrap_or(0);
        let candidate = (best > 0).then(|| {
            (0..cores)
                .filter(|&c| similarity[c] == best)
                .fold(None, |acc: Option<CoreId>, c| match acc {
                    Some(a) if alloc.blocking_load(a) <= alloc.blocking_load(c) => Some(a),
                    _ => Some(c),
                })
                .expect("some core attains the maximum")
        });
        let (chosen, fallback) = match candidate {
            Some(c) if alloc.blocking_load(c) + pbu <= bu_max => (c, false),
            _ => (argmin(cores, |c| alloc.blocking_load(c)), true),
        };
        alloc
            .assign(ts.task(i), chosen, pbu)
            .expect("fresh task on a valid core");
        bu_max = bu_max.max(alloc.blocking_load(chosen));
        trace.push(TraceEntry {
            task: i,
            candidate,
            chosen,
            fallback,
            bu_max,
        });
        if let Err(reason) = check(ts, &alloc) {
            return PartitionOutcome {
                result: Err(PartitionFailure {
                    reason,
                    partial: alloc,
                }),
                trace,
            };
        }
    }
    PartitionOutcome {
        result: Ok(alloc),
        trace,
    }
}

pub fn allocate_wfd(ts: &TaskSet, cores: usize) -> PartitionOutcome {
    if let Some(o) = overflow(ts, cores) {
        return o;
    }
    let keys: Vec<f64> = ts.tasks().iter().map(|t| t.utilization()).collect();
    let mut alloc = Allocation::new(cores, ts.len());
    let mut trace = Vec::with_capacity(ts.len());

    for i in by_key_descending(&keys) {
        let chosen = argmin(cores, |c| alloc.utilization(c));
        let task = ts.task(i);
        alloc
            .assign(task, chosen, task.utilization())
            .expect("fresh task on a valid core");
        trace.push(TraceEntry {
            task: i,
            candidate: None,
            chosen,
            fallback: false,
            bu_max: 0.0,
        });
        if let Err(reason) = check(ts, &alloc) {
            return PartitionOutcome {
                result: Err(PartitionFailure {
                    reason,
                    partial: alloc,
                }),
                trace,
            };
        }
    }
    PartitionOutcome {
        result: Ok(alloc),
        trace,
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("not schedulable within {cap} cores")]
pub struct NotSchedulableWithinCap {
    pub cap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinCores {
    pub cores: usize,
    pub outcome: PartitionOutcome,
    /// Core counts tried, in order.
    pub attempts: Vec<usize>,
}

/// `⌈Σ C_i/T_i⌉`, tolerant of summation round-off just above an integer.
pub fn start_cores(ts: &TaskSet) -> usize {
    let load = ts.total_utilization();
    (load - LOAD_EPSILON).ceil().max(0.0) as usize
}

pub fn default_cap(ts: &TaskSet) -> usize {
    8 * start_cores(ts).max(1)
}

/// Smallest core count, starting from the total load, for which `algorithm`
/// succeeds.
pub fn min_cores(
    ts: &TaskSet,
    algorithm: Algorithm,
    beta: f64,
    cap: Option<usize>,
) -> Result<MinCores, NotSchedulableWithinCap> {
    let cap = cap.unwrap_or_else(|| default_cap(ts));
    let mut attempts = Vec::new();
    let mut m = start_cores(ts);
    while m <= cap {
        attempts.push(m);
        let outcome = algorithm.allocate(ts, m, beta);
        if outcome.is_success() {
            return Ok(MinCores {
                cores: m,
                outcome,
                attempts,
            });
        }
        m += 1;
    }
    Err(NotSchedulableWithinCap { cap })
}

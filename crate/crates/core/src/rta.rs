//! Response-time analysis with MPCP blocking.
//!
//! The recurrence is
//!
//! ```text
//! W^{n+1} = C_i + B_i + Σ_{j ∈ hp(i)} ⌈(W^n + DGB^H_i + DGB^L_i) / T_j⌉ · C_j
//! W^0     = C_i + DGB^H_i + DGB^L_i
//! ```
//!
//! iterated until two successive iterates are bit-identical. Iterates only
//! change through integral job counts, so the fixed point is reached exactly.
//! Any iterate above the deadline stops the iteration.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::blocking::{BlockingAnalysis, BlockingBreakdown};
use crate::model::{Allocation, ModelError, TaskId, TaskSet};

/// Backstop against a non-terminating iteration; never reached for valid
/// inputs because job counts are bounded once the deadline check applies.
const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResponseTime {
    Converged { wcrt: f64, iterations: usize },
    DeadlineMiss { last: f64, iterations: usize },
}

impl ResponseTime {
    /// The fixed point, or the iterate that crossed the deadline.
    pub fn value(self) -> f64 {
        match self {
            ResponseTime::Converged { wcrt, .. } => wcrt,
            ResponseTime::DeadlineMiss { last, .. } => last,
        }
    }

    pub fn iterations(self) -> usize {
        match self {
            ResponseTime::Converged { iterations, .. }
            | ResponseTime::DeadlineMiss { iterations, .. } => iterations,
        }
    }

    pub fn is_converged(self) -> bool {
        matches!(self, ResponseTime::Converged { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskResponse {
    #[serde(rename = "wcrt_ms")]
    pub wcrt: f64,
    pub blocking: BlockingBreakdown,
    pub schedulable: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Schedulable,
    /// Lowest-id task missing its deadline.
    Unschedulable(TaskId),
}

impl Verdict {
    pub fn is_schedulable(self) -> bool {
        self == Verdict::Schedulable
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RtaResult {
    pub per_task: BTreeMap<TaskId, TaskResponse>,
    pub verdict: Verdict,
}

/// Iterates the response-time recurrence for one task.
pub fn response_time(
    ts: &TaskSet,
    alloc: &Allocation,
    analysis: &BlockingAnalysis<'_>,
    i: TaskId,
) -> Result<(ResponseTime, BlockingBreakdown), ModelError> {
    let core = alloc.require_core(i)?;
    let task = ts.task(i);
    let blocking = analysis.worst_case_blocking(i)?;
    let prio = task.priority;
    let hp: Vec<(f64, f64)> = alloc
        .tasks_on(core)
        .iter()
        .map(|&j| ts.task(j))
        .filter(|t| t.priority > prio)
        .map(|t| (t.period, t.wcet))
        .collect();

    let mut w = task.wcet + blocking.dgb_high + blocking.dgb_low;
    let mut iterations = 0;
    if w > task.deadline {
        return Ok((
            ResponseTime::DeadlineMiss {
                last: w,
                iterations,
            },
            blocking,
        ));
    }
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let window = w + blocking.dgb_high + blocking.dgb_low;
        // Accumulated left to right onto C + B, like the textbook recurrence.
        let next = hp
            .iter()
            .fold(task.wcet + blocking.total, |acc, &(period, wcet)| {
                acc + (window / period).ceil() * wcet
            });
        if next > task.deadline {
            return Ok((
                ResponseTime::DeadlineMiss {
                    last: next,
                    iterations,
                },
                blocking,
            ));
        }
        if next == w {
            return Ok((
                ResponseTime::Converged {
                    wcrt: w,
                    iterations,
                },
                blocking,
            ));
        }
        w = next;
    }
    Ok((
        ResponseTime::DeadlineMiss {
            last: w,
            iterations,
        },
        blocking,
    ))
}

pub fn wcrt(ts: &TaskSet, alloc: &Allocation, i: TaskId) -> Result<ResponseTime, ModelError> {
    let analysis = BlockingAnalysis::new(ts, alloc);
    response_time(ts, alloc, &analysis, i).map(|(r, _)| r)
}

/// Analyzes every assigned task.
pub fn is_schedulable(ts: &TaskSet, alloc: &Allocation) -> RtaResult {
    let analysis = BlockingAnalysis::new(ts, alloc);
    let mut per_task = BTreeMap::new();
    let mut verdict = Verdict::Schedulable;
    for i in alloc.assigned() {
        let (rt, blocking) =
            response_time(ts, alloc, &analysis, i).expect("assigned task is analyzable");
        let schedulable = rt.is_converged();
        if !schedulable && verdict == Verdict::Schedulable {
            verdict = Verdict::Unschedulable(i);
        }
        per_task.insert(
            i,
            TaskResponse {
                wcrt: rt.value(),
                blocking,
                schedulable,
                iterations: rt.iterations(),
            },
        );
    }
    RtaResult { per_task, verdict }
}

/// Same verdict as [`is_schedulable`], stopping at the first failing task.
pub fn verdict(ts: &TaskSet, alloc: &Allocation) -> Verdict {
    let analysis = BlockingAnalysis::new(ts, alloc);
    for i in alloc.assigned() {
        let (rt, _) = response_time(ts, alloc, &analysis, i).expect("assigned task is analyzable");
        if !rt.is_converged() {
            return Verdict::Unschedulable(i);
        }
    }
    Verdict::Schedulable
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::f1;
    use crate::model::Task;

    #[test]
    fn sole_task_without_resources() {
        let ts = TaskSet::new(vec![Task::new(0, 2.5, 10.0, 1)], 0, None).unwrap();
        let alloc = Allocation::from_cores(&ts, 1, &[0]).unwrap();
        assert_eq!(wcrt(&ts, &alloc, 0).unwrap().value(), 2.5);
    }

    #[test]
    fn two_tasks_one_core() {
        let ts = TaskSet::new(
            vec![Task::new(0, 1.0, 4.0, 2), Task::new(1, 2.0, 10.0, 1)],
            0,
            None,
        )
        .unwrap();
        let alloc = Allocation::from_cores(&ts, 1, &[0, 0]).unwrap();
        assert_eq!(
            wcrt(&ts, &alloc, 1).unwrap(),
            ResponseTime::Converged {
                wcrt: 3.0,
                iterations: 2
            }
        );
    }

    #[test]
    fn f1_response_times() {
        let (ts, alloc) = f1();
        let result = is_schedulable(&ts, &alloc);
        assert_eq!(result.verdict, Verdict::Schedulable);
        let w: Vec<f64> = result.per_task.values().map(|r| r.wcrt).collect();
        assert_eq!(w, vec![1.5, 3.0, 4.0]);
        assert_eq!(result.per_task[&0].blocking.total, 0.5);
        assert_eq!(result.per_task[&2].blocking.total, 1.0);
    }

    #[test]
    fn empty_allocation_is_schedulable() {
        let (ts, _) = f1();
        let result = is_schedulable(&ts, &Allocation::new(2, 3));
        assert!(result.per_task.is_empty());
        assert_eq!(result.verdict, Verdict::Schedulable);
    }

    #[test]
    fn overloaded_core_fails() {
        let ts = TaskSet::new(
            vec![Task::new(0, 5.0, 5.0, 2), Task::new(1, 5.0, 5.0, 1)],
            0,
            None,
        )
        .unwrap();
        let alloc = Allocation::from_cores(&ts, 1, &[0, 0]).unwrap();
        let result = is_schedulable(&ts, &alloc);
        assert_eq!(result.verdict, Verdict::Unschedulable(1));
        assert!(result.per_task[&0].schedulable);
        assert!(!result.per_task[&1].schedulable);
        assert_eq!(verdict(&ts, &alloc), Verdict::Unschedulable(1));
    }

    #[test]
    fn wcrt_rejects_unassigned() {
        let (ts, _) = f1();
        assert_eq!(
            wcrt(&ts, &Allocation::new(2, 3), 0),
            Err(ModelError::Unassigned(0))
        );
    }

    #[test]
    fn response_covers_execution_and_blocking() {
        let (ts, alloc) = f1();
        for (i, r) in is_schedulable(&ts, &alloc).per_task {
            assert!(r.wcrt >= ts.task(i).wcet + r.blocking.total);
        }
    }
}

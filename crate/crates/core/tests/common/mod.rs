#![allow(dead_code)]

use mpcp_alloc::{Allocation, Task, TaskSet};
use proptest::prelude::*;

pub const F1_JSON: &str = include_str!("../fixtures/f1.json");

/// The three-task, one-resource fixture and its reference allocation
/// (τ0, τ1 on core 0; τ2 on core 1).
pub fn f1() -> (TaskSet, Allocation) {
    let ts = TaskSet::from_json(F1_JSON).expect("fixture parses");
    let alloc = Allocation::from_cores(&ts, 2, &[0, 0, 1]).expect("fixture allocation");
    (ts, alloc)
}

/// Random valid task sets: integral periods in [1, 40], utilizations below
/// 0.4, up to two critical sections per task each below 30% of the WCET,
/// and a random priority permutation.
pub fn task_set(max_tasks: usize, max_resources: usize) -> impl Strategy<Value = TaskSet> {
    (1..=max_tasks, 0..=max_resources)
        .prop_flat_map(|(n, q)| {
            let max_sections = if q == 0 { 0 } else { 2 };
            let task = (
                1u32..=40,
                0.02f64..0.4,
                prop::collection::vec((0..q.max(1), 0.0f64..0.3), 0..=max_sections),
            );
            let priorities: Vec<u32> = (1..=n as u32).collect();
            (
                prop::collection::vec(task, n),
                Just(priorities).prop_shuffle(),
                Just(q),
            )
        })
        .prop_map(|(raw, priorities, q)| {
            let tasks = raw
                .into_iter()
                .enumerate()
                .map(|(i, (period, frac, sections))| {
                    let period = f64::from(period);
                    let wcet = (frac * period).max(0.01);
                    sections
                        .into_iter()
                        .fold(Task::new(i, wcet, period, priorities[i]), |t, (r, f)| {
                            t.with_section(r, f * wcet)
                        })
                })
                .collect();
            TaskSet::new(tasks, q, None).expect("strategy builds valid sets")
        })
}

/// A task set with a complete allocation on up to `max_cores` cores.
pub fn allocated(
    max_tasks: usize,
    max_resources: usize,
    max_cores: usize,
) -> impl Strategy<Value = (TaskSet, Allocation)> {
    (task_set(max_tasks, max_resources), 1..=max_cores).prop_flat_map(|(ts, m)| {
        let n = ts.len();
        (Just(ts), prop::collection::vec(0..m, n), Just(m)).prop_map(|(ts, cores, m)| {
            let alloc = Allocation::from_cores(&ts, m, &cores).expect("valid cores");
            (ts, alloc)
        })
    })
}

/// Rebuilds a task set with one task's sections replaced.
pub fn with_sections(ts: &TaskSet, id: usize, sections: &[(usize, f64)]) -> TaskSet {
    let tasks = ts
        .tasks()
        .iter()
        .map(|t| {
            if t.id != id {
                return t.clone();
            }
            sections.iter().fold(
                Task::new(t.id, t.wcet, t.period, t.priority),
                |t, &(r, d)| t.with_section(r, d),
            )
        })
        .collect();
    TaskSet::new(tasks, ts.resource_count(), None).expect("valid edit")
}

/// Classical fixed-priority response-time iteration for resource-free
/// tasks on one core: `R = C_i + Σ_{hp} ⌈R/T_j⌉ C_j`, starting at `C_i`.
/// Returns `None` on a deadline miss.
pub fn textbook_wcrt(tasks: &[Task], i: usize) -> Option<f64> {
    let me = &tasks[i];
    let mut r = me.wcet;
    loop {
        let mut next = me.wcet;
        for t in tasks {
            if t.priority > me.priority {
                next += (r / t.period).ceil() * t.wcet;
            }
        }
        if next > me.deadline {
            return None;
        }
        if next == r {
            return Some(r);
        }
        r = next;
    }
}

mod common;

use common::task_set;
use mpcp_alloc::partition::{
    min_cores, pbu_table, resource_similarity, start_cores, FailureReason, DEFAULT_BETA,
};
use mpcp_alloc::{allocate_brwfd, allocate_wfd, is_schedulable, Algorithm, Allocation, Verdict};
use proptest::prelude::*;

fn descending_order(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    order
}

proptest! {
    #[test]
    fn brwfd_places_tasks_in_pbu_order(ts in task_set(8, 3), m in 1usize..4, beta in 0.0f64..1.0) {
        let table = pbu_table(&ts, beta);
        let keys: Vec<f64> = table.entries.iter().map(|e| e.pbu).collect();
        let outcome = allocate_brwfd(&ts, m, beta);
        let placed: Vec<usize> = outcome.trace.iter().map(|e| e.task).collect();
        let order = descending_order(&keys);
        prop_assert_eq!(&placed[..], &order[..placed.len()]);
        if outcome.is_success() {
            prop_assert_eq!(placed.len(), ts.len());
        }
    }

    #[test]
    fn brwfd_trace_follows_the_threshold_rule(ts in task_set(8, 3), m in 1usize..4) {
        let table = pbu_table(&ts, DEFAULT_BETA);
        let outcome = allocate_brwfd(&ts, m, DEFAULT_BETA);
        let mut alloc = Allocation::new(m, ts.len());
        let mut bu_max = 0.0f64;
        for step in &outcome.trace {
            let i = step.task;
            let pbu = table.pbu(i);
            let loads: Vec<f64> = (0..m).map(|c| alloc.blocking_load(c)).collect();
            let least = (0..m).fold(0, |b, c| if loads[c] < loads[b] { c } else { b });
            let similarity: Vec<usize> = (0..m).map(|c| resource_similarity(&ts, &alloc, i, c)).collect();
            let best = *similarity.iter().max().unwrap();
            match step.candidate {
                None => prop_assert_eq!(best, 0),
                Some(c) => {
                    prop_assert_eq!(similarity[c], best);
                    prop_assert!(best > 0);
                    prop_assert!((0..m).filter(|&d| similarity[d] == best).all(|d| loads[c] < loads[d] || (loads[c] == loads[d] && c <= d)));
                }
            }
            match step.candidate {
                Some(c) if loads[c] + pbu <= bu_max => {
                    prop_assert_eq!(step.chosen, c);
                    prop_assert!(!step.fallback);
                }
                _ => {
                    prop_assert_eq!(step.chosen, least);
                    prop_assert!(step.fallback);
                }
            }
            alloc.assign(ts.task(i), step.chosen, pbu).unwrap();
            bu_max = bu_max.max(alloc.blocking_load(step.chosen));
            prop_assert_eq!(step.bu_max, bu_max);
        }
        prop_assert_eq!(&alloc, outcome.last_allocation());
    }

    #[test]
    fn without_resources_brwfd_is_worst_fit(ts in task_set(10, 0), m in 1usize..5) {
        let br = allocate_brwfd(&ts, m, DEFAULT_BETA);
        let wfd = allocate_wfd(&ts, m);
        prop_assert_eq!(br.is_success(), wfd.is_success());
        prop_assert_eq!(
            br.last_allocation().assignment(),
            wfd.last_allocation().assignment()
        );
        for core in br.last_allocation().cores() {
            prop_assert!((core.blocking_load - core.utilization).abs() <= 1e-9);
        }
    }

    #[test]
    fn allocators_are_deterministic(ts in task_set(8, 3), m in 1usize..4) {
        for alg in Algorithm::ALL {
            prop_assert_eq!(alg.allocate(&ts, m, DEFAULT_BETA), alg.allocate(&ts, m, DEFAULT_BETA));
        }
    }

    #[test]
    fn outcomes_match_the_final_analysis(ts in task_set(8, 3), m in 1usize..4) {
        for alg in Algorithm::ALL {
            let outcome = alg.allocate(&ts, m, DEFAULT_BETA);
            let alloc = outcome.last_allocation();
            let verdict = is_schedulable(&ts, alloc).verdict;
            match &outcome.result {
                Ok(a) => {
                    prop_assert!(a.is_complete());
                    prop_assert_eq!(verdict, Verdict::Schedulable);
                }
                Err(f) => match f.reason {
                    FailureReason::RtaFail(t) => {
                        prop_assert_eq!(verdict, Verdict::Unschedulable(t));
                        prop_assert!(alloc.is_assigned(t));
                    }
                    FailureReason::CoreOverflow => prop_assert_eq!(m, 0),
                },
            }
        }
    }

    #[test]
    fn min_cores_scans_upward_from_the_load(ts in task_set(8, 2)) {
        for alg in Algorithm::ALL {
            if let Ok(found) = min_cores(&ts, alg, DEFAULT_BETA, None) {
                let first = start_cores(&ts);
                prop_assert_eq!(found.attempts.clone(), (first..=found.cores).collect::<Vec<_>>());
                prop_assert!(found.outcome.is_success());
                prop_assert!(found.cores as f64 + 1e-9 >= ts.total_utilization());
                for &m in &found.attempts[..found.attempts.len() - 1] {
                    prop_assert!(!alg.allocate(&ts, m, DEFAULT_BETA).is_success());
                }
            }
        }
    }
}

#[test]
fn f1_brwfd_trace() {
    let (ts, _) = common::f1();
    let outcome = allocate_brwfd(&ts, 2, DEFAULT_BETA);
    let alloc = outcome.allocation().expect("schedulable");
    assert_eq!(alloc.tasks_on(0), &[0]);
    assert_eq!(alloc.tasks_on(1), &[1, 2]);
    let steps: Vec<_> = outcome
        .trace
        .iter()
        .map(|e| (e.task, e.candidate, e.chosen, e.fallback))
        .collect();
    assert_eq!(
        steps,
        vec![
            (0, None, 0, true),
            (1, None, 1, true),
            (2, Some(0), 1, true)
        ]
    );
}

//! Serializable reports for the `analyze` and `partition` subcommands.

use std::fmt::Write as _;

use mpcp_alloc::model::{resource_locality, CoreLoad};
use mpcp_alloc::partition::{pbu_table, FailureReason, PartitionOutcome, TraceEntry};
use mpcp_alloc::rta::TaskResponse;
use mpcp_alloc::{
    is_schedulable, Algorithm, Allocation, BlockingBreakdown, Locality, TaskSet, Verdict,
};
use serde::Serialize;

#[derive(Serialize)]
pub struct TaskRow {
    pub id: usize,
    pub priority: u32,
    pub wcet_ms: f64,
    pub period_ms: f64,
    pub utilization: f64,
    pub pgb_low: f64,
    pub pgb_high: f64,
    pub pbu: f64,
    pub core: Option<usize>,
    pub blocking: Option<BlockingBreakdown>,
    pub wcrt_ms: Option<f64>,
    pub schedulable: Option<bool>,
    pub iterations: Option<usize>,
}

#[derive(Serialize)]
pub struct AnalyzeReport {
    /// Where the allocation came from: `user` or `brwfd`.
    pub allocation_source: &'static str,
    pub beta: f64,
    pub cores: Vec<CoreLoad>,
    pub resources: Vec<Locality>,
    pub tasks: Vec<TaskRow>,
    /// Every task placed and every placed task meets its deadline.
    pub schedulable: bool,
    pub verdict: Verdict,
}

pub fn analyze(ts: &TaskSet, alloc: &Allocation, beta: f64, source: &'static str) -> AnalyzeReport {
    let table = pbu_table(ts, beta);
    let rta = is_schedulable(ts, alloc);
    let tasks = ts
        .tasks()
        .iter()
        .map(|t| {
            let entry = table.entries[t.id];
            let response: Option<&TaskResponse> = rta.per_task.get(&t.id);
            TaskRow {
                id: t.id,
                priority: t.priority,
                wcet_ms: t.wcet,
                period_ms: t.period,
                utilization: t.utilization(),
                pgb_low: entry.pgb_low,
                pgb_high: entry.pgb_high,
                pbu: entry.pbu,
                core: alloc.core_of(t.id),
                blocking: response.map(|r| r.blocking),
                wcrt_ms: response.map(|r| r.wcrt),
                schedulable: response.map(|r| r.schedulable),
                iterations: response.map(|r| r.iterations),
            }
        })
        .collect();
    AnalyzeReport {
        allocation_source: source,
        beta,
        cores: alloc.cores().to_vec(),
        resources: resource_locality(ts, alloc),
        tasks,
        schedulable: alloc.is_complete() && rta.verdict.is_schedulable(),
        verdict: rta.verdict,
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv(report: &AnalyzeReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "priority",
        "wcet_ms",
        "period_ms",
        "core",
        "pbu",
        "dlb",
        "dgb_low",
        "dgb_high",
        "mli",
        "blocking",
        "wcrt_ms",
        "schedulable",
    ])?;
    for t in &report.tasks {
        let b = t.blocking;
        w.write_record([
            t.id.to_string(),
            t.priority.to_string(),
            t.wcet_ms.to_string(),
            t.period_ms.to_string(),
            opt(t.core),
            t.pbu.to_string(),
            opt(b.map(|b| b.dlb)),
            opt(b.map(|b| b.dgb_low)),
            opt(b.map(|b| b.dgb_high)),
            opt(b.map(|b| b.mli)),
            opt(b.map(|b| b.total)),
            opt(t.wcrt_ms),
            opt(t.schedulable),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn table(report: &AnalyzeReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4} {:>4} {:>9} {:>10} {:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9}  ok",
        "task", "prio", "C", "T", "core", "PBU", "DLB", "DGB_L", "DGB_H", "MLI", "B", "WCRT"
    );
    let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for t in &report.tasks {
        let b = t.blocking;
        let _ = writeln!(
            out,
            "{:>4} {:>4} {:>9.4} {:>10.4} {:>4} {:>8.4} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9}  {}",
            t.id,
            t.priority,
            t.wcet_ms,
            t.period_ms,
            t.core.map_or_else(|| "-".to_string(), |c| c.to_string()),
            t.pbu,
            num(b.map(|b| b.dlb)),
            num(b.map(|b| b.dgb_low)),
            num(b.map(|b| b.dgb_high)),
            num(b.map(|b| b.mli)),
            num(b.map(|b| b.total)),
            num(t.wcrt_ms),
            match t.schedulable {
                Some(true) => "yes",
                Some(false) => "NO",
                None => "-",
            }
        );
    }
    for (j, core) in report.cores.iter().enumerate() {
        let _ = writeln!(
            out,
            "core {j}: tasks {:?}, U = {:.4}, BU = {:.4}",
            core.tasks, core.utilization, core.blocking_load
        );
    }
    let _ = writeln!(
        out,
        "verdict: {} ({} allocation)",
        if report.schedulable {
            "schedulable".to_string()
        } else {
            match report.verdict {
                Verdict::Unschedulable(t) => format!("unschedulable, task {t} misses its deadline"),
                Verdict::Schedulable => "incomplete allocation".to_string(),
            }
        },
        report.allocation_source
    );
    out
}

#[derive(Serialize)]
pub struct PartitionReport<'a> {
    pub algorithm: Algorithm,
    pub beta: f64,
    pub core_count: usize,
    pub success: bool,
    pub failure: Option<FailureReason>,
    /// Set when no core count up to this cap succeeded.
    pub not_schedulable_within_cap: Option<usize>,
    /// Core counts tried by the minimum-core search.
    pub attempts: Vec<usize>,
    pub assignment: Vec<Option<usize>>,
    pub cores: &'a [CoreLoad],
    pub trace: &'a [TraceEntry],
}

pub fn partition<'a>(
    ts: &TaskSet,
    algorithm: Algorithm,
    beta: f64,
    outcome: &'a PartitionOutcome,
    attempts: Vec<usize>,
    cap: Option<usize>,
) -> PartitionReport<'a> {
    let alloc = outcome.last_allocation();
    debug_assert_eq!(alloc.task_count(), ts.len());
    PartitionReport {
        algorithm,
        beta,
        core_count: alloc.core_count(),
        success: outcome.is_success(),
        failure: outcome.result.as_ref().err().map(|f| f.reason),
        not_schedulable_within_cap: cap,
        attempts,
        assignment: alloc.assignment().to_vec(),
        cores: alloc.cores(),
        trace: &outcome.trace,
    }
}

//! Seeded synthetic task-set generator.
//!
//! Each set has `n = round(S / mid(util_range))` tasks with WCETs uniform on
//! `wcet_range`, utilizations summing to the total load `S`, periods
//! `T = C / u`, rate-monotonic priorities, and 2–3 critical sections drawn
//! from the task's resource group (one group of `resources_per_group`
//! resources per `tasks_per_group` tasks). Every section lasts
//! `C × cs_ratio`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Task, TaskSet};
use crate::rng::StreamRng;

/// Relative tolerance of the utilization sum.
const SUM_TOLERANCE: f64 = 1e-12;

const UUNIFAST_RETRIES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("cannot draw {n} utilizations in [{lo}, {hi}] summing to {load}")]
    Infeasible {
        load: f64,
        n: usize,
        lo: f64,
        hi: f64,
    },
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How per-task utilizations are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenMode {
    /// Uniform draws inside the range, rescaled to the load and repaired.
    #[default]
    Constrained,
    /// Classic UUnifast over the simplex; ignores the range.
    Uunifast,
}

impl fmt::Display for GenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenMode::Constrained => "constrained",
            GenMode::Uunifast => "uunifast",
        })
    }
}

impl FromStr for GenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constrained" => Ok(GenMode::Constrained),
            "uunifast" => Ok(GenMode::Uunifast),
            other => Err(format!(
                "unknown generation mode `{other}` (expected constrained or uunifast)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub total_load: f64,
    pub wcet_range: (f64, f64),
    pub util_range: (f64, f64),
    pub sections_per_task: (usize, usize),
    pub resources_per_group: usize,
    pub tasks_per_group: usize,
    pub cs_ratio: f64,
    pub seed: u64,
    pub mode: GenMode,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            total_load: 8.0,
            wcet_range: (20.0, 100.0),
            util_range: (0.1, 0.15),
            sections_per_task: (2, 3),
            resources_per_group: 5,
            tasks_per_group: 15,
            cs_ratio: 0.12,
            seed: 0,
            mode: GenMode::Constrained,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let err = |m: String| Err(GenError::Config(m));
        let (ulo, uhi) = self.util_range;
        if !(ulo > 0.0 && ulo <= uhi && uhi <= 1.0) {
            return err(format!(
                "utilization range [{ulo}, {uhi}] must lie in (0, 1]"
            ));
        }
        let (clo, chi) = self.wcet_range;
        if !(clo > 0.0 && clo <= chi && chi.is_finite()) {
            return err(format!(
                "wcet range [{clo}, {chi}] must be positive and ordered"
            ));
        }
        if !(self.total_load > 0.0 && self.total_load.is_finite()) {
            return err(format!("total load {} must be positive", self.total_load));
        }
        let (slo, shi) = self.sections_per_task;
        if slo > shi {
            return err(format!("section count range [{slo}, {shi}] is reversed"));
        }
        if !(self.cs_ratio >= 0.0 && self.cs_ratio * shi as f64 <= 1.0) {
            return err(format!(
                "{shi} sections of ratio {} do not fit inside the wcet",
                self.cs_ratio
            ));
        }
        if self.resources_per_group == 0 || self.tasks_per_group == 0 {
            return err("resource groups need at least one resource and one task".into());
        }
        if self.task_count() == 0 {
            return err(format!(
                "total load {} yields no tasks for utilization range [{ulo}, {uhi}]",
                self.total_load
            ));
        }
        Ok(())
    }

    /// `round(S / midpoint(util_range))`
    pub fn task_count(&self) -> usize {
        let mid = 0.5 * (self.util_range.0 + self.util_range.1);
        (self.total_load / mid).round() as usize
    }

    pub fn group_count(&self) -> usize {
        self.task_count().div_ceil(self.tasks_per_group)
    }

    pub fn resource_count(&self) -> usize {
        self.group_count() * self.resources_per_group
    }

    /// The load actually generated. A degenerate utilization range forces
    /// every task to the same utilization, so the load becomes `n · u`.
    pub fn effective_load(&self) -> f64 {
        let (lo, hi) = self.util_range;
        if lo == hi {
            self.task_count() as f64 * lo
        } else {
            self.total_load
        }
    }
}

/// `n` utilizations in `[lo, hi]` summing to `load`: uniform draws inside the
/// range, rescaled to the target sum, then repaired by clamping and spreading
/// the residual evenly over the entries that can still move.
pub fn constrained_uunifast(
    load: f64,
    n: usize,
    (lo, hi): (f64, f64),
    rng: &mut StreamRng,
) -> Result<Vec<f64>, GenError> {
    let tol = SUM_TOLERANCE * load.abs().max(1.0);
    let infeasible = GenError::Infeasible { load, n, lo, hi };
    if n == 0 || n as f64 * lo > load + tol || n as f64 * hi < load - tol {
        return Err(infeasible);
    }
    if lo == hi {
        return Ok(vec![lo; n]);
    }
    let mut u: Vec<f64> = (0..n).map(|_| rng.uniform(lo, hi)).collect();
    let scale = load / u.iter().sum::<f64>();
    u.iter_mut().for_each(|x| *x *= scale);

    for _ in 0..=4 * n + 4 {
        u.iter_mut().for_each(|x| *x = x.clamp(lo, hi));
        let residual = load - u.iter().sum::<f64>();
        if residual.abs() <= tol {
            return Ok(u);
        }
        let movable: Vec<usize> = (0..n)
            .filter(|&i| if residual > 0.0 { u[i] < hi } else { u[i] > lo })
            .collect();
        if movable.is_empty() {
            break;
        }
        let share = residual / movable.len() as f64;
        for i in movable {
            u[i] += share;
        }
    }
    Err(infeasible)
}

/// Classic UUnifast: `n` non-negative utilizations summing to `load`,
/// uniformly distributed over the simplex. Draws with a utilization above 1
/// are rejected.
pub fn uunifast(load: f64, n: usize, rng: &mut StreamRng) -> Result<Vec<f64>, GenError> {
    let infeasible = GenError::Infeasible {
        load,
        n,
        lo: 0.0,
        hi: 1.0,
    };
    if n == 0 || load > n as f64 {
        return Err(infeasible);
    }
    for _ in 0..UUNIFAST_RETRIES {
        let mut u = Vec::with_capacity(n);
        let mut remaining = load;
        for i in 1..n {
            let next = remaining * rng.unit().powf(1.0 / (n - i) as f64);
            u.push(remaining - next);
            remaining = next;
        }
        u.push(remaining);
        if u.iter().all(|&x| x > 0.0 && x <= 1.0) {
            return Ok(u);
        }
    }
    Err(infeasible)
}

pub fn generate(cfg: &GenConfig) -> Result<TaskSet, GenError> {
    generate_with(cfg, &mut StreamRng::new(cfg.seed))
}

pub fn generate_with(cfg: &GenConfig, rng: &mut StreamRng) -> Result<TaskSet, GenError> {
    cfg.validate()?;
    let n = cfg.task_count();
    let (clo, chi) = cfg.wcet_range;
    let wcets: Vec<f64> = (0..n).map(|_| rng.uniform(clo, chi)).collect();
    let utils = match cfg.mode {
        GenMode::Constrained => constrained_uunifast(cfg.effective_load(), n, cfg.util_range, rng)?,
        GenMode::Uunifast => uunifast(cfg.total_load, n, rng)?,
    };
    let periods: Vec<f64> = wcets.iter().zip(&utils).map(|(c, u)| c / u).collect();

    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &b| periods[a].total_cmp(&periods[b]).then(a.cmp(&b)));
    let mut priority = vec![0u32; n];
    for (r, &id) in rank.iter().enumerate() {
        priority[id] = (n - r) as u32;
    }

    let rpg = cfg.resources_per_group;
    let (slo, shi) = cfg.sections_per_task;
    let tasks = (0..n)
        .map(|i| {
            let group = i / cfg.tasks_per_group;
            let count = rng.int_inclusive(slo, shi);
            let duration = wcets[i] * cfg.cs_ratio;
            (0..count).fold(Task::new(i, wcets[i], periods[i], priority[i]), |t, _| {
                t.with_section(group * rpg + rng.int_inclusive(0, rpg - 1), duration)
            })
        })
        .collect();
    let groups = (0..cfg.resource_count()).map(|r| r / rpg).collect();
    Ok(TaskSet::new(tasks, cfg.resource_count(), Some(groups))?)
}

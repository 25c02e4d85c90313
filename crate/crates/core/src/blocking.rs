//! Worst-case MPCP blocking bounds for a task under a (possibly partial)
//! allocation.
//!
//! The total blocking `B_i` is the sum of four terms:
//!
//! * `DLB`: local-resource blocking while the task is suspended,
//! * `DGB^L`: direct global blocking by remote lower-priority holders,
//!   including transitive remote preemption of the holder (`α`),
//! * `DGB^H`: multiple remote blocking by remote higher-priority requesters,
//! * `MLI`: multiple priority inversions caused by co-located lower-priority
//!   tasks running their global critical sections at ceiling priority.
//!
//! Ceilings are `Ω_k = Π_b + Π_h` with `Π_b = n + 1`. Global ceilings use every
//! accessor in the task set; local ceilings only the accessors on the owning
//! core. Since `Π_b` exceeds every base priority, the `Π_i < Ω_l` filter of the
//! local-blocking term never excludes a section.

use serde::Serialize;

use crate::model::{
    ceiling_priority, resource_locality, Allocation, Locality, ModelError, ResourceId, TaskId,
    TaskSet,
};

/// Per-task blocking terms in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BlockingBreakdown {
    pub dlb: f64,
    pub dgb_low: f64,
    pub dgb_high: f64,
    pub mli: f64,
    pub total: f64,
}

impl BlockingBreakdown {
    pub fn new(dlb: f64, dgb_low: f64, dgb_high: f64, mli: f64) -> Self {
        Self {
            dlb,
            dgb_low,
            dgb_high,
            mli,
            total: dlb + dgb_low + dgb_high + mli,
        }
    }
}

/// Allocation-dependent facts shared by all blocking terms. Build once per
/// allocation state and query as many tasks as needed.
pub struct BlockingAnalysis<'a> {
    ts: &'a TaskSet,
    alloc: &'a Allocation,
    locality: Vec<Locality>,
    /// Task-set-wide ceiling per resource, 0 when unused.
    ceiling: Vec<u32>,
    /// `(Ω_x, γ^max_{u,x})` for each global resource of each assigned task.
    global_sections: Vec<Vec<(u32, f64)>>,
    /// `N_{i,G}`
    global_count: Vec<usize>,
}

impl<'a> BlockingAnalysis<'a> {
    pub fn new(ts: &'a TaskSet, alloc: &'a Allocation) -> Self {
        let locality = resource_locality(ts, alloc);
        let ceiling: Vec<u32> = (0..ts.resource_count())
            .map(|k| ceiling_priority(ts, ResourceId(k)).unwrap_or(0))
            .collect();
        let mut global_sections = vec![Vec::new(); ts.len()];
        let mut global_count = vec![0; ts.len()];
        for t in alloc.assigned() {
            for (r, u) in ts.usage_of(t) {
                if locality[r.0].is_global() {
                    global_sections[t].push((ceiling[r.0], u.max));
                    global_count[t] += u.count;
                }
            }
        }
        Self {
            ts,
            alloc,
            locality,
            ceiling,
            global_sections,
            global_count,
        }
    }

    pub fn locality(&self, k: ResourceId) -> Locality {
        self.locality[k.0]
    }

    /// `N_{i,G}`: critical sections of `i` on global resources.
    pub fn global_access_count(&self, i: TaskId) -> usize {
        self.global_count[i]
    }

    /// PCP ceiling of a resource restricted to the accessors on `core`.
    fn local_ceiling(&self, k: ResourceId, core: usize) -> u32 {
        self.ts
            .accessors(k)
            .iter()
            .filter(|&&t| self.alloc.core_of(t) == Some(core))
            .map(|&t| self.ts.task(t).priority)
            .max()
            .map_or(0, |h| self.ts.base_ceiling() + h)
    }

    /// Transitive remote preemption `α_{j,k}`: for every other task on `j`'s
    /// core, its longest global section whose ceiling exceeds `Ω_k`.
    pub fn alpha(&self, j: TaskId, k: ResourceId) -> Result<f64, ModelError> {
        let core = self.alloc.require_core(j)?;
        let omega_k = self.ceiling[k.0];
        Ok(self
            .alloc
            .tasks_on(core)
            .iter()
            .filter(|&&u| u != j)
            .map(|&u| {
                self.global_sections[u]
                    .iter()
                    .filter(|&&(omega_x, _)| omega_x > omega_k)
                    .map(|&(_, g)| g)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, |acc, x| acc + x))
    }

    pub fn dlb(&self, i: TaskId) -> Result<f64, ModelError> {
        let core = self.alloc.require_core(i)?;
        let prio = self.ts.task(i).priority;
        let mut worst = 0.0f64;
        for &j in self.alloc.tasks_on(core) {
            if self.ts.task(j).priority >= prio {
                continue;
            }
            for (r, u) in self.ts.usage_of(j) {
                if self.locality[r.0].is_local() && prio < self.local_ceiling(*r, core) {
                    worst = worst.max(u.max);
                }
            }
        }
        Ok((1 + self.global_count[i]) as f64 * worst)
    }

    /// Remote accessors of `k` relative to `i`, filtered by priority.
    fn remote_sharers(
        &self,
        i: TaskId,
        core: usize,
        k: ResourceId,
        higher: bool,
    ) -> impl Iterator<Item = TaskId> + '_ {
        let prio = self.ts.task(i).priority;
        self.ts.accessors(k).iter().copied().filter(move |&j| {
            let pj = self.ts.task(j).priority;
            matches!(self.alloc.core_of(j), Some(c) if c != core) && (pj > prio) == higher
        })
    }

    fn global_resources_of(&self, i: TaskId) -> impl Iterator<Item = ResourceId> + '_ {
        self.ts
            .resources_of(i)
            .filter(|r| self.locality[r.0].is_global())
    }

    pub fn dgb_low(&self, i: TaskId) -> Result<f64, ModelError> {
        let core = self.alloc.require_core(i)?;
        let mut sum = 0.0;
        for k in self.global_resources_of(i) {
            let mut worst = 0.0f64;
            for j in self.remote_sharers(i, core, k, false) {
                worst = worst.max(self.ts.max_section(j, k) + self.alpha(j, k)?);
            }
            sum += self.ts.access_count(i, k) as f64 * worst;
        }
        Ok(sum)
    }

    pub fn dgb_high(&self, i: TaskId) -> Result<f64, ModelError> {
        let core = self.alloc.require_core(i)?;
        let period = self.ts.task(i).period;
        let mut sum = 0.0;
        for k in self.global_resources_of(i) {
            for j in self.remote_sharers(i, core, k, true) {
                let jobs = (period / self.ts.task(j).period).ceil();
                let usage = self.ts.usage(j, k).expect("accessor uses resource");
                sum += jobs * (usage.total + usage.count as f64 * self.alpha(j, k)?);
            }
        }
        Ok(sum)
    }

    pub fn mli(&self, i: TaskId) -> Result<f64, ModelError> {
        let core = self.alloc.require_core(i)?;
        let prio = self.ts.task(i).priority;
        let own = 1 + self.global_count[i];
        Ok(self
            .alloc
            .tasks_on(core)
            .iter()
            .filter(|&&j| self.ts.task(j).priority < prio && self.global_count[j] > 0)
            .map(|&j| {
                let times = own.min(2 * self.global_count[j]) as f64;
                let longest = self.global_sections[j]
                    .iter()
                    .map(|&(_, g)| g)
                    .fold(0.0, f64::max);
                times * longest
            })
            .fold(0.0, |acc, x| acc + x))
    }

    pub fn worst_case_blocking(&self, i: TaskId) -> Result<BlockingBreakdown, ModelError> {
        Ok(BlockingBreakdown::new(
            self.dlb(i)?,
            self.dgb_low(i)?,
            self.dgb_high(i)?,
            self.mli(i)?,
        ))
    }
}

pub fn alpha(
    ts: &TaskSet,
    alloc: &Allocation,
    j: TaskId,
    k: ResourceId,
) -> Result<f64, ModelError> {
    BlockingAnalysis::new(ts, alloc).alpha(j, k)
}

pub fn dlb(ts: &TaskSet, alloc: &Allocation, i: TaskId) -> Result<f64, ModelError> {
    BlockingAnalysis::new(ts, alloc).dlb(i)
}

pub fn dgb_low(ts: &TaskSet, alloc: &Allocation, i: TaskId) -> Result<f64, ModelError> {
    BlockingAnalysis::new(ts, alloc).dgb_low(i)
}

pub fn dgb_high(ts: &TaskSet, alloc: &Allocation, i: TaskId) -> Result<f64, ModelError> {
    BlockingAnalysis::new(ts, alloc).dgb_high(i)
}

pub fn mli(ts: &TaskSet, alloc: &Allocation, i: TaskId) -> Result<f64, ModelError> {
    BlockingAnalysis::new(ts, alloc).mli(i)
}

pub fn worst_case_blocking(
    ts: &TaskSet,
    alloc: &Allocation,
    i: TaskId,
) -> Result<BlockingBreakdown, ModelError> {
    BlockingAnalysis::new(ts, alloc).worst_case_blocking(i)
}

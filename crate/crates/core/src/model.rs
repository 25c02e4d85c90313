//! Task, resource and allocation model for partitioned fixed-priority
//! multicores with shared resources.
//!
//! A [`TaskSet`] is validated once on construction and then caches the
//! per-task resource usage (`Θ_i`, access counts, longest and total
//! critical-section time per resource) and the per-resource accessor lists
//! that every analysis walks over.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod json;

/// Index of a task inside its [`TaskSet`].
pub type TaskId = usize;

/// Index of a core inside an [`Allocation`].
pub type CoreId = usize;

/// Index into the resource universe of a [`TaskSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(pub usize);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("task {task}: {reason}")]
    InvalidTask { task: usize, reason: String },
    #[error("task at position {position} has id {found}; ids must be contiguous from 0")]
    NonContiguousIds { position: usize, found: usize },
    #[error("task at position {position} has priority {priority}; priorities must be a permutation of 1..={n}")]
    InvalidPriority {
        position: usize,
        priority: u32,
        n: usize,
    },
    #[error("resource groups list {found} entries for {expected} resources")]
    GroupCount { expected: usize, found: usize },
    #[error("resource {0} is accessed by no task")]
    NoAccessor(ResourceId),
    #[error("resource {0} is outside the resource universe")]
    UnknownResource(ResourceId),
    #[error("task {0} is not assigned to a core")]
    Unassigned(TaskId),
    #[error("task {0} is already assigned")]
    AlreadyAssigned(TaskId),
    #[error("task {0} does not exist")]
    UnknownTask(TaskId),
    #[error("core {core} is out of range for {cores} cores")]
    CoreOutOfRange { core: CoreId, cores: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSection {
    pub resource: ResourceId,
    /// Duration in milliseconds.
    pub duration: f64,
}

/// A periodic task with an implicit deadline.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub wcet: f64,
    pub period: f64,
    pub deadline: f64,
    /// Larger value means higher priority.
    pub priority: u32,
    pub sections: Vec<CriticalSection>,
}

impl Task {
    /// Builds a task whose deadline equals its period.
    pub fn new(id: TaskId, wcet: f64, period: f64, priority: u32) -> Self {
        Self {
            id,
            wcet,
            period,
            deadline: period,
            priority,
            sections: Vec::new(),
        }
    }

    pub fn with_section(mut self, resource: usize, duration: f64) -> Self {
        self.sections.push(CriticalSection {
            resource: ResourceId(resource),
            duration,
        });
        self
    }

    pub fn utilization(&self) -> f64 {
        self.wcet / self.period
    }
}

/// Aggregated accesses of one task to one resource.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResourceUsage {
    /// Number of critical sections on the resource (`N_{i,k}`).
    pub count: usize,
    /// Longest single critical section (`γ^max`).
    pub max: f64,
    /// Sum of all critical sections (`γ^total`).
    pub total: f64,
}

impl ResourceUsage {
    fn from_sections<'a>(durations: impl Iterator<Item = &'a f64>) -> Option<Self> {
        let mut usage: Option<Self> = None;
        for &d in durations {
            let u = usage.get_or_insert(Self {
                count: 0,
                max: 0.0,
                total: 0.0,
            });
            u.count += 1;
            u.max = u.max.max(d);
            u.total += d;
        }
        usage
    }
}

#[derive(Clone, Debug)]
pub struct TaskSet {
    tasks: Vec<Task>,
    resource_count: usize,
    groups: Option<Vec<usize>>,
    usage: Vec<BTreeMap<ResourceId, ResourceUsage>>,
    accessors: Vec<Vec<TaskId>>,
}

impl TaskSet {
    /// Validates the tasks and builds the derived resource caches.
    pub fn new(
        tasks: Vec<Task>,
        resource_count: usize,
        groups: Option<Vec<usize>>,
    ) -> Result<Self, ModelError> {
        let n = tasks.len();
        let mut seen_priority = vec![false; n];
        for (position, task) in tasks.iter().enumerate() {
            if task.id != position {
                return Err(ModelError::NonContiguousIds {
                    position,
                    found: task.id,
                });
            }
            validate_task(task, resource_count)?;
            let p = task.priority as usize;
            if p == 0 || p > n || seen_priority[p - 1] {
                return Err(ModelError::InvalidPriority {
                    position,
                    priority: task.priority,
                    n,
                });
            }
            seen_priority[p - 1] = true;
        }
        if let Some(g) = &groups {
            if g.len() != resource_count {
                return Err(ModelError::GroupCount {
                    expected: resource_count,
                    found: g.len(),
                });
            }
        }

        let mut usage = Vec::with_capacity(n);
        let mut accessors = vec![Vec::new(); resource_count];
        for task in &tasks {
            let mut per_resource: BTreeMap<ResourceId, Vec<f64>> = BTreeMap::new();
            for s in &task.sections {
                per_resource.entry(s.resource).or_default().push(s.duration);
            }
            let map: BTreeMap<_, _> = per_resource
                .into_iter()
                .filter_map(|(r, ds)| ResourceUsage::from_sections(ds.iter()).map(|u| (r, u)))
                .collect();
            for r in map.keys() {
                accessors[r.0].push(task.id);
            }
            usage.push(map);
        }

        Ok(Self {
            tasks,
            resource_count,
            groups,
            usage,
            accessors,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id]
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn resource_count(&self) -> usize {
        self.resource_count
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    pub fn total_utilization(&self) -> f64 {
        self.tasks
            .iter()
            .map(Task::utilization)
            .fold(0.0, |acc, x| acc + x)
    }

    /// `Θ_i`: the distinct resources task `i` accesses, ascending.
    pub fn resources_of(&self, i: TaskId) -> impl Iterator<Item = ResourceId> + '_ {
        self.usage[i].keys().copied()
    }

    pub fn usage_of(&self, i: TaskId) -> &BTreeMap<ResourceId, ResourceUsage> {
        &self.usage[i]
    }

    pub fn usage(&self, i: TaskId, k: ResourceId) -> Option<&ResourceUsage> {
        self.usage[i].get(&k)
    }

    pub fn accesses(&self, i: TaskId, k: ResourceId) -> bool {
        self.usage[i].contains_key(&k)
    }

    /// `N_{i,k}`
    pub fn access_count(&self, i: TaskId, k: ResourceId) -> usize {
        self.usage(i, k).map_or(0, |u| u.count)
    }

    /// `γ_{i,k}^max`
    pub fn max_section(&self, i: TaskId, k: ResourceId) -> f64 {
        self.usage(i, k).map_or(0.0, |u| u.max)
    }

    /// `γ_{i,k}^total`
    pub fn total_section(&self, i: TaskId, k: ResourceId) -> f64 {
        self.usage(i, k).map_or(0.0, |u| u.total)
    }

    /// Tasks accessing `k`, in ascending id order.
    pub fn accessors(&self, k: ResourceId) -> &[TaskId] {
        &self.accessors[k.0]
    }

    /// `Π_b`: one above every base priority.
    pub fn base_ceiling(&self) -> u32 {
        self.tasks.len() as u32 + 1
    }
}

fn validate_task(task: &Task, resource_count: usize) -> Result<(), ModelError> {
    let invalid = |reason: String| ModelError::InvalidTask {
        task: task.id,
        reason,
    };
    if !(task.wcet.is_finite() && task.wcet > 0.0) {
        return Err(invalid(format!("wcet {} must be positive", task.wcet)));
    }
    if !(task.period.is_finite() && task.period > 0.0) {
        return Err(invalid(format!("period {} must be positive", task.period)));
    }
    if task.deadline != task.period {
        return Err(invalid(format!(
            "deadline {} must equal the period {}",
            task.deadline, task.period
        )));
    }
    if task.wcet > task.deadline {
        return Err(invalid(format!(
            "wcet {} exceeds the deadline {}",
            task.wcet, task.deadline
        )));
    }
    let mut sum = 0.0;
    for s in &task.sections {
        if s.resource.0 >= resource_count {
            return Err(invalid(format!(
                "section on {} outside {resource_count} resources",
                s.resource
            )));
        }
        if !(s.duration.is_finite() && s.duration >= 0.0) {
            return Err(invalid(format!(
                "section duration {} must be non-negative",
                s.duration
            )));
        }
        sum += s.duration;
    }
    if sum > task.wcet {
        return Err(invalid(format!(
            "critical sections total {sum} exceeding wcet {}",
            task.wcet
        )));
    }
    Ok(())
}

/// Per-core state of an allocation.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CoreLoad {
    /// Hosted tasks, ascending id.
    pub tasks: Vec<TaskId>,
    /// `U^j`
    pub utilization: f64,
    /// `BU^j`: sum of the loads the allocator charged for each task.
    pub blocking_load: f64,
}

/// A (possibly partial) mapping of tasks onto `m` cores.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    assignment: Vec<Option<CoreId>>,
    cores: Vec<CoreLoad>,
}

impl Allocation {
    /// An empty allocation of `task_count` tasks over `core_count` cores.
    pub fn new(core_count: usize, task_count: usize) -> Self {
        Self {
            assignment: vec![None; task_count],
            cores: vec![CoreLoad::default(); core_count],
        }
    }

    /// A full allocation from a per-task core list. Blocking loads are
    /// charged with plain utilization.
    pub fn from_cores(
        ts: &TaskSet,
        core_count: usize,
        cores: &[CoreId],
    ) -> Result<Self, ModelError> {
        if cores.len() != ts.len() {
            return Err(ModelError::UnknownTask(cores.len().min(ts.len())));
        }
        let mut alloc = Self::new(core_count, ts.len());
        for (task, &core) in ts.tasks().iter().zip(cores) {
            alloc.assign(task, core, task.utilization())?;
        }
        Ok(alloc)
    }

    /// Assigns `task` to `core`, charging `load` to the core's blocking load.
    pub fn assign(&mut self, task: &Task, core: CoreId, load: f64) -> Result<(), ModelError> {
        let slot = self
            .assignment
            .get_mut(task.id)
            .ok_or(ModelError::UnknownTask(task.id))?;
        if slot.is_some() {
            return Err(ModelError::AlreadyAssigned(task.id));
        }
        let cores = self.cores.len();
        let c = self
            .cores
            .get_mut(core)
            .ok_or(ModelError::CoreOutOfRange { core, cores })?;
        *slot = Some(core);
        let pos = c.tasks.partition_point(|&t| t < task.id);
        c.tasks.insert(pos, task.id);
        c.utilization += task.utilization();
        c.blocking_load += load;
        Ok(())
    }

    /// Copy-on-extend variant of [`Allocation::assign`].
    pub fn extended(&self, task: &Task, core: CoreId, load: f64) -> Result<Self, ModelError> {
        let mut next = self.clone();
        next.assign(task, core, load)?;
        Ok(next)
    }

    pub fn core_count(&self) -> usize {
        self.cores.len()
    }

    pub fn task_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn core_of(&self, task: TaskId) -> Option<CoreId> {
        self.assignment.get(task).copied().flatten()
    }

    pub fn require_core(&self, task: TaskId) -> Result<CoreId, ModelError> {
        self.core_of(task).ok_or(ModelError::Unassigned(task))
    }

    pub fn is_assigned(&self, task: TaskId) -> bool {
        self.core_of(task).is_some()
    }

    pub fn is_complete(&self) -> bool {
        self.assignment.iter().all(Option::is_some)
    }

    /// Assigned tasks in ascending id order.
    pub fn assigned(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(t, c)| c.map(|_| t))
    }

    pub fn assignment(&self) -> &[Option<CoreId>] {
        &self.assignment
    }

    pub fn cores(&self) -> &[CoreLoad] {
        &self.cores
    }

    /// `τ(p_k)`
    pub fn tasks_on(&self, core: CoreId) -> &[TaskId] {
        &self.cores[core].tasks
    }

    pub fn utilization(&self, core: CoreId) -> f64 {
        self.cores[core].utilization
    }

    pub fn blocking_load(&self, core: CoreId) -> f64 {
        self.cores[core].blocking_load
    }
}

/// Classification of a resource under an allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Local(CoreId),
    Global,
    Unused,
}

impl Locality {
    pub fn is_global(self) -> bool {
        matches!(self, Locality::Global)
    }

    pub fn is_local(self) -> bool {
        matches!(self, Locality::Local(_))
    }
}

/// Classifies every resource by the cores its assigned accessors live on.
pub fn resource_locality(ts: &TaskSet, alloc: &Allocation) -> Vec<Locality> {
    (0..ts.resource_count())
        .map(|k| {
            let mut cores = ts
                .accessors(ResourceId(k))
                .iter()
                .filter_map(|&t| alloc.core_of(t));
            match cores.next() {
                None => Locality::Unused,
                Some(first) => {
                    if cores.all(|c| c == first) {
                        Locality::Local(first)
                    } else {
                        Locality::Global
                    }
                }
            }
        })
        .collect()
}

/// `Ω_k = Π_b + Π_h` over every task of the set accessing `k`.
pub fn ceiling_priority(ts: &TaskSet, k: ResourceId) -> Result<u32, ModelError> {
    if k.0 >= ts.resource_count() {
        return Err(ModelError::UnknownResource(k));
    }
    ts.accessors(k)
        .iter()
        .map(|&t| ts.task(t).priority)
        .max()
        .map(|h| ts.base_ceiling() + h)
        .ok_or(ModelError::NoAccessor(k))
}

/// Lower- and higher-priority tasks sharing task `i`'s core, ascending id.
pub fn lp_hp_sets(
    ts: &TaskSet,
    alloc: &Allocation,
    i: TaskId,
) -> Result<(Vec<TaskId>, Vec<TaskId>), ModelError> {
    let core = alloc.require_core(i)?;
    let prio = ts.task(i).priority;
    let (lp, hp): (Vec<_>, Vec<_>) = alloc
        .tasks_on(core)
        .iter()
        .copied()
        .filter(|&t| t != i)
        .partition(|&t| ts.task(t).priority < prio);
    Ok((lp, hp))
}

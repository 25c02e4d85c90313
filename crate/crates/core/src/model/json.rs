//! JSON interchange format for task sets.
//!
//! ```json
//! {
//!   "resource_count": 1,
//!   "tasks": [
//!     {"id": 0, "wcet_ms": 1.0, "period_ms": 4.0, "priority": 2,
//!      "sections": [{"resource": 0, "duration_ms": 0.2}]}
//!   ],
//!   "groups": [0]
//! }
//! ```
//!
//! Deadlines are implicit (equal to the period).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CriticalSection, ModelError, ResourceId, Task, TaskSet};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSetDoc {
    resource_count: usize,
    tasks: Vec<TaskDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    groups: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    id: usize,
    wcet_ms: f64,
    period_ms: f64,
    priority: u32,
    #[serde(default)]
    sections: Vec<SectionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SectionDoc {
    resource: usize,
    duration_ms: f64,
}

impl TaskSet {
    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let doc: TaskSetDoc = serde_json::from_str(text).map_err(|e| {
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let message = e.to_string();
            ParseError {
                line: e.line(),
                column: e.column(),
                message: message
                    .strip_suffix(&suffix)
                    .unwrap_or(&message)
                    .to_string(),
            }
        })?;
        let tasks = doc
            .tasks
            .into_iter()
            .map(|t| Task {
                id: t.id,
                wcet: t.wcet_ms,
                period: t.period_ms,
                deadline: t.period_ms,
                priority: t.priority,
                sections: t
                    .sections
                    .into_iter()
                    .map(|s| CriticalSection {
                        resource: ResourceId(s.resource),
                        duration: s.duration_ms,
                    })
                    .collect(),
            })
            .collect();
        TaskSet::new(tasks, doc.resource_count, doc.groups).map_err(|e| {
            let position = match &e {
                ModelError::InvalidTask { task, .. } => Some(*task),
                ModelError::NonContiguousIds { position, .. }
                | ModelError::InvalidPriority { position, .. } => Some(*position),
                _ => None,
            };
            let (line, column) = position
                .and_then(|p| task_positions(text).get(p).copied())
                .unwrap_or((1, 1));
            ParseError {
                line,
                column,
                message: e.to_string(),
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_doc()).expect("task set serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("task set serializes")
    }

    fn to_doc(&self) -> TaskSetDoc {
        TaskSetDoc {
            resource_count: self.resource_count(),
            tasks: self
                .tasks()
                .iter()
                .map(|t| TaskDoc {
                    id: t.id,
                    wcet_ms: t.wcet,
                    period_ms: t.period,
                    priority: t.priority,
                    sections: t
                        .sections
                        .iter()
                        .map(|s| SectionDoc {
                            resource: s.resource.0,
                            duration_ms: s.duration,
                        })
                        .collect(),
                })
                .collect(),
            groups: self.groups().map(<[usize]>::to_vec),
        }
    }
}

/// Line/column (1-based) of each element of the top-level `"tasks"` array.
/// Only called on text serde already accepted, so the scan can assume
/// well-formed JSON.
fn task_positions(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 0);
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    let mut string_start = 0;
    let mut last_key: Option<&str> = None;
    let mut tasks_depth: Option<usize> = None;
    let mut expecting_element = false;

    for (idx, ch) in text.char_indices() {
        if ch == '\n' {
            line += 1;
            column = 0;
        } else {
            column += 1;
        }
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
                if depth == 1 {
                    last_key = Some(&text[string_start..idx]);
                }
            }
            continue;
        }
        if expecting_element && !ch.is_whitespace() && ch != ',' && ch != ']' {
            out.push((line, column));
            expecting_element = false;
        }
        match ch {
            '"' => {
                in_string = true;
                string_start = idx + 1;
            }
            '{' | '[' => {
                if ch == '[' && depth == 1 && last_key == Some("tasks") {
                    tasks_depth = Some(depth + 1);
                    expecting_element = true;
                }
                depth += 1;
            }
            '}' | ']' => {
                depth = depth.saturating_sub(1);
                if Some(depth + 1) == tasks_depth && ch == ']' {
                    tasks_depth = None;
                    expecting_element = false;
                }
            }
            ',' if Some(depth) == tasks_depth => expecting_element = true,
            _ => {}
        }
    }
    out
}

//! Paired experiment sweeps over generated task sets.
//!
//! Every trial generates one task set from a per-trial random stream and
//! hands the same set to each algorithm, so summaries are paired. Trials run
//! on the ambient rayon pool; records are sorted by (point, trial, algorithm)
//! afterwards, which makes the output independent of the thread count.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TaskSet;
use crate::partition::{min_cores, Algorithm, DEFAULT_BETA};
use crate::rng::trial_seed;
use crate::taskgen::{generate, GenConfig, GenError};

/// Note attached to sweep metadata whenever the core-multiple axis is used.
pub const CORE_MULTIPLE_NOTE: &str =
    "core multiple mu gives m = ceil(mu * S) cores, so larger multiples mean more cores";

pub const CSV_HEADER: [&str; 12] = [
    "load",
    "cs_ratio",
    "util_lo",
    "util_hi",
    "resources_per_group",
    "cores",
    "core_multiple",
    "algorithm",
    "metric",
    "value",
    "n_trials",
    "n_failures",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("point {point}, trial {trial}: {source}")]
    Generation {
        point: usize,
        trial: usize,
        source: GenError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed record on line {line}: {source}")]
    Record {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Generator settings not covered by an axis (wcet range, section
    /// counts, tasks per group, generation mode). Its seed is ignored.
    pub base: GenConfig,
    pub loads: Vec<f64>,
    pub cs_ratios: Vec<f64>,
    pub util_ranges: Vec<(f64, f64)>,
    pub core_multiples: Vec<f64>,
    pub resources_per_group: Vec<usize>,
    /// Fixed core count for ratio sweeps; defaults to `2·⌈S⌉`.
    pub cores: Option<usize>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub beta: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let base = GenConfig::default();
        Self {
            loads: vec![base.total_load],
            cs_ratios: vec![base.cs_ratio],
            util_ranges: vec![base.util_range],
            core_multiples: Vec::new(),
            resources_per_group: vec![base.resources_per_group],
            base,
            cores: None,
            trials: 100,
            algorithms: Algorithm::ALL.to_vec(),
            seed: 0,
            beta: DEFAULT_BETA,
        }
    }
}

impl SweepSpec {
    fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Spec(m.to_string()));
        if self.trials == 0 {
            return bad("at least one trial is required");
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.loads.is_empty()
            || self.cs_ratios.is_empty()
            || self.util_ranges.is_empty()
            || self.resources_per_group.is_empty()
        {
            return bad("every axis needs at least one value");
        }
        if !self.loads.iter().all(|&s| s > 0.0)
            || !self.core_multiples.iter().all(|&m| m > 0.0)
            || self.resources_per_group.contains(&0)
            || self.cores == Some(0)
        {
            return bad("axis values must be positive");
        }
        if !self.cs_ratios.iter().all(|&c| c >= 0.0) {
            return bad("critical-section ratios must be non-negative");
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return bad("beta must be non-negative");
        }
        Ok(())
    }

    fn config(&self, point: &SweepPoint) -> GenConfig {
        GenConfig {
            total_load: point.load,
            cs_ratio: point.cs_ratio,
            util_range: (point.util_lo, point.util_hi),
            resources_per_group: point.resources_per_group,
            ..self.base.clone()
        }
    }

    fn axis_points(&self) -> Vec<SweepPoint> {
        let mut points = Vec::new();
        for &load in &self.loads {
            for &cs_ratio in &self.cs_ratios {
                for &(util_lo, util_hi) in &self.util_ranges {
                    for &rpg in &self.resources_per_group {
                        points.push(SweepPoint {
                            load,
                            cs_ratio,
                            util_lo,
                            util_hi,
                            resources_per_group: rpg,
                            cores: None,
                            core_multiple: None,
                        });
                    }
                }
            }
        }
        points
    }

    /// Points of a min-core sweep: every combination of the axes.
    pub fn core_points(&self) -> Vec<SweepPoint> {
        self.axis_points()
    }

    /// Points of a schedulable-ratio sweep, each with its core count.
    pub fn ratio_points(&self) -> Result<Vec<SweepPoint>, ExperimentError> {
        let varying = [
            self.loads.len(),
            self.cs_ratios.len(),
            self.util_ranges.len(),
            self.core_multiples.len(),
            self.resources_per_group.len(),
        ]
        .iter()
        .filter(|&&len| len > 1)
        .count();
        if varying > 1 {
            return Err(ExperimentError::Spec(
                "a ratio sweep varies exactly one axis".into(),
            ));
        }
        if self.loads.len() > 1 {
            return Err(ExperimentError::Spec(
                "the system load is fixed in a ratio sweep".into(),
            ));
        }
        if !self.core_multiples.is_empty() && self.cores.is_some() {
            return Err(ExperimentError::Spec(
                "give either a fixed core count or core multiples, not both".into(),
            ));
        }
        let mut points = Vec::new();
        for p in self.axis_points() {
            if self.core_multiples.is_empty() {
                let cores = self.cores.unwrap_or(2 * ceil_count(p.load));
                points.push(SweepPoint {
                    cores: Some(cores),
                    ..p
                });
            } else {
                for &mu in &self.core_multiples {
                    points.push(SweepPoint {
                        cores: Some(ceil_count(mu * p.load)),
                        core_multiple: Some(mu),
                        ..p.clone()
                    });
                }
            }
        }
        Ok(points)
    }
}

fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub load: f64,
    pub cs_ratio: f64,
    pub util_lo: f64,
    pub util_hi: f64,
    pub resources_per_group: usize,
    pub cores: Option<usize>,
    pub core_multiple: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    CoresRequired(usize),
    /// Carries the cap that was exhausted.
    NotSchedulableWithinCap(usize),
    Schedulable(bool),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub trial: usize,
    pub point_index: usize,
    pub point: SweepPoint,
    pub algorithm: Algorithm,
    pub outcome: Outcome,
    /// Not written to record files, which must be reproducible bit for bit.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub point: SweepPoint,
    pub algorithm: String,
    pub metric: &'static str,
    pub value: f64,
    pub n_trials: usize,
    pub n_failures: usize,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<ExperimentRecord>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Clone, Copy)]
enum Study {
    Cores,
    Ratio,
}

fn run(
    spec: &SweepSpec,
    points: &[SweepPoint],
    study: Study,
) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    for (i, p) in points.iter().enumerate() {
        spec.config(p)
            .validate()
            .map_err(|source| ExperimentError::Generation {
                point: i,
                trial: 0,
                source,
            })?;
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let batches: Vec<Vec<ExperimentRecord>> = jobs
        .par_iter()
        .map(|&(p, t)| run_trial(spec, &points[p], p, t, study))
        .collect::<Result<_, _>>()?;
    let mut records: Vec<ExperimentRecord> = batches.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.point_index, a.trial, a.algorithm).cmp(&(b.point_index, b.trial, b.algorithm))
    });
    let summary = summarize(&records);
    Ok(SweepResult { records, summary })
}

fn run_trial(
    spec: &SweepSpec,
    point: &SweepPoint,
    point_index: usize,
    trial: usize,
    study: Study,
) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    let cfg = GenConfig {
        seed: trial_seed(spec.seed, trial as u64),
        ..spec.config(point)
    };
    let ts = generate(&cfg).map_err(|source| ExperimentError::Generation {
        point: point_index,
        trial,
        source,
    })?;
    Ok(spec
        .algorithms
        .iter()
        .map(|&algorithm| {
            let start = Instant::now();
            let outcome = evaluate(&ts, algorithm, spec.beta, point, study);
            ExperimentRecord {
                seed: spec.seed,
                trial,
                point_index,
                point: point.clone(),
                algorithm,
                outcome,
                wall_time: start.elapsed(),
            }
        })
        .collect())
}

fn evaluate(
    ts: &TaskSet,
    algorithm: Algorithm,
    beta: f64,
    point: &SweepPoint,
    study: Study,
) -> Outcome {
    match study {
        Study::Cores => match min_cores(ts, algorithm, beta, None) {
            Ok(found) => Outcome::CoresRequired(found.cores),
            Err(e) => Outcome::NotSchedulableWithinCap(e.cap),
        },
        Study::Ratio => {
            let cores = point.cores.expect("ratio points carry a core count");
            Outcome::Schedulable(algorithm.allocate(ts, cores, beta).is_success())
        }
    }
}

/// Minimum-core study: per point, mean cores per algorithm and the
/// percentage reduction of BR-WFD relative to WFD.
pub fn sweep_cores(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    run(spec, &spec.core_points(), Study::Cores)
}

/// Schedulable-ratio study at a fixed or load-proportional core count.
pub fn sweep_ratio(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    let points = spec.ratio_points()?;
    run(spec, &points, Study::Ratio)
}

fn mean(values: &[usize]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<usize>() as f64 / values.len() as f64
    }
}

/// Aggregates records, which must be sorted by (point, trial, algorithm).
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for point_records in records.chunk_by(|a, b| a.point_index == b.point_index) {
        let point = &point_records[0].point;
        let mut algorithms: Vec<Algorithm> = point_records.iter().map(|r| r.algorithm).collect();
        algorithms.sort();
        algorithms.dedup();
        let trials = |alg: Algorithm| point_records.iter().filter(move |r| r.algorithm == alg);

        for &alg in &algorithms {
            let n_trials = trials(alg).count();
            if let Some(Outcome::Schedulable(_)) = trials(alg).next().map(|r| &r.outcome) {
                let ok = trials(alg)
                    .filter(|r| r.outcome == Outcome::Schedulable(true))
                    .count();
                rows.push(SummaryRow {
                    point: point.clone(),
                    algorithm: alg.name().to_string(),
                    metric: "schedulable_ratio",
                    value: ok as f64 / n_trials as f64,
                    n_trials,
                    n_failures: n_trials - ok,
                });
            } else {
                let cores: Vec<usize> = trials(alg)
                    .filter_map(|r| match r.outcome {
                        Outcome::CoresRequired(c) => Some(c),
                        _ => None,
                    })
                    .collect();
                rows.push(SummaryRow {
                    point: point.clone(),
                    algorithm: alg.name().to_string(),
                    metric: "mean_cores",
                    value: mean(&cores),
                    n_trials,
                    n_failures: n_trials - cores.len(),
                });
            }
        }

        let is_core_study = point_records
            .iter()
            .all(|r| !matches!(r.outcome, Outcome::Schedulable(_)));
        if is_core_study
            && algorithms.contains(&Algorithm::Brwfd)
            && algorithms.contains(&Algorithm::Wfd)
        {
            let mut br = Vec::new();
            let mut wfd = Vec::new();
            let mut failures = 0;
            for trial in point_records.chunk_by(|a, b| a.trial == b.trial) {
                let cores = |alg| {
                    trial
                        .iter()
                        .find(|r| r.algorithm == alg)
                        .and_then(|r| match r.outcome {
                            Outcome::CoresRequired(c) => Some(c),
                            _ => None,
                        })
                };
                match (cores(Algorithm::Brwfd), cores(Algorithm::Wfd)) {
                    (Some(b), Some(w)) => {
                        br.push(b);
                        wfd.push(w);
                    }
                    _ => failures += 1,
                }
            }
            let (mb, mw) = (mean(&br), mean(&wfd));
            rows.push(SummaryRow {
                point: point.clone(),
                algorithm: "brwfd_vs_wfd".to_string(),
                metric: "reduction_pct",
                value: (mw - mb) / mw * 100.0,
                n_trials: br.len() + failures,
                n_failures: failures,
            });
        }
    }
    rows
}

/// Looks up a summary value.
pub fn summary_value(
    rows: &[SummaryRow],
    point: &SweepPoint,
    algorithm: &str,
    metric: &str,
) -> Option<f64> {
    rows.iter()
        .find(|r| &r.point == point && r.algorithm == algorithm && r.metric == metric)
        .map(|r| r.value)
}

pub fn write_records<W: Write>(records: &[ExperimentRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records(text: &str) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ExperimentError::Record {
                line: i + 1,
                source,
            })
        })
        .collect()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let p = &r.point;
        w.write_record([
            p.load.to_string(),
            p.cs_ratio.to_string(),
            p.util_lo.to_string(),
            p.util_hi.to_string(),
            p.resources_per_group.to_string(),
            opt(&p.cores),
            opt(&p.core_multiple),
            r.algorithm.clone(),
            r.metric.to_string(),
            r.value.to_string(),
            r.n_trials.to_string(),
            r.n_failures.to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    point: &'a SweepPoint,
    algorithm: &'a str,
    metric: &'a str,
    value: Option<f64>,
    n_trials: usize,
    n_failures: usize,
}

pub fn write_summary_json<W: Write>(rows: &[SummaryRow], out: W) -> io::Result<()> {
    let items: Vec<SummaryJson<'_>> = rows
        .iter()
        .map(|r| SummaryJson {
            point: &r.point,
            algorithm: &r.algorithm,
            metric: r.metric,
            value: r.value.is_finite().then_some(r.value),
            n_trials: r.n_trials,
            n_failures: r.n_failures,
        })
        .collect();
    serde_json::to_writer_pretty(out, &items)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            loads: vec![2.0],
            cs_ratios: vec![0.08, 0.16],
            trials: 4,
            seed: 7,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn core_sweep_is_paired_and_sorted() {
        let result = sweep_cores(&small_spec()).unwrap();
        assert_eq!(result.records.len(), 2 * 4 * 2);
        for pair in result.records.chunks(2) {
            assert_eq!(pair[0].trial, pair[1].trial);
            assert_eq!(pair[0].algorithm, Algorithm::Brwfd);
            assert_eq!(pair[1].algorithm, Algorithm::Wfd);
        }
        let metrics: Vec<_> = result
            .summary
            .iter()
            .map(|r| (r.algorithm.as_str(), r.metric))
            .collect();
        assert_eq!(
            &metrics[..3],
            &[
                ("brwfd", "mean_cores"),
                ("wfd", "mean_cores"),
                ("brwfd_vs_wfd", "reduction_pct")
            ]
        );
    }

    #[test]
    fn summary_recomputes_from_records_file() {
        let result = sweep_cores(&small_spec()).unwrap();
        let mut buf = Vec::new();
        write_records(&result.records, &mut buf).unwrap();
        let back = read_records(std::str::from_utf8(&buf).unwrap()).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_summary_csv(&result.summary, &mut a).unwrap();
        write_summary_csv(&summarize(&back), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ratio_points_need_one_axis() {
        let spec = SweepSpec {
            cs_ratios: vec![0.1, 0.2],
            resources_per_group: vec![4, 5],
            ..SweepSpec::default()
        };
        assert!(matches!(spec.ratio_points(), Err(ExperimentError::Spec(_))));

        let spec = SweepSpec {
            core_multiples: vec![0.25, 0.5, 1.0],
            ..SweepSpec::default()
        };
        let cores: Vec<_> = spec
            .ratio_points()
            .unwrap()
            .iter()
            .map(|p| p.cores)
            .collect();
        assert_eq!(cores, vec![Some(2), Some(4), Some(8)]);

        let spec = SweepSpec::default();
        assert_eq!(spec.ratio_points().unwrap()[0].cores, Some(16));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SweepSpec {
                trials: 0,
                ..SweepSpec::default()
            },
            SweepSpec {
                algorithms: vec![],
                ..SweepSpec::default()
            },
            SweepSpec {
                loads: vec![-1.0],
                ..SweepSpec::default()
            },
        ];
        for spec in bad {
            assert!(matches!(sweep_cores(&spec), Err(ExperimentError::Spec(_))));
        }
        let spec = SweepSpec {
            cs_ratios: vec![0.5],
            ..SweepSpec::default()
        };
        assert!(matches!(
            sweep_cores(&spec),
            Err(ExperimentError::Generation { .. })
        ));
    }

    #[test]
    fn generous_cores_without_sections_always_fit() {
        let spec = SweepSpec {
            loads: vec![2.0],
            cs_ratios: vec![0.0],
            trials: 5,
            ..SweepSpec::default()
        };
        let result = sweep_ratio(&spec).unwrap();
        assert!(result
            .summary
            .iter()
            .all(|r| r.metric == "schedulable_ratio" && r.value == 1.0 && r.n_failures == 0));
    }
}

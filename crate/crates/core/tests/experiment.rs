use mpcp_alloc::experiment::{
    read_records, summarize, sweep_cores, sweep_ratio, write_records, write_summary_csv, Outcome,
    SweepSpec,
};
use mpcp_alloc::Algorithm;

fn spec(seed: u64, trials: usize) -> SweepSpec {
    SweepSpec {
        loads: vec![1.0, 2.0],
        cs_ratios: vec![0.08, 0.14],
        trials,
        seed,
        ..SweepSpec::default()
    }
}

fn records_bytes(spec: &SweepSpec, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let result = pool.install(|| sweep_cores(spec)).unwrap();
    let mut out = Vec::new();
    write_records(&result.records, &mut out).unwrap();
    out
}

#[test]
fn records_do_not_depend_on_thread_count() {
    let spec = spec(3, 6);
    let one = records_bytes(&spec, 1);
    assert_eq!(one, records_bytes(&spec, 3));
    assert_eq!(one, records_bytes(&spec, 1));
    assert!(!String::from_utf8(one).unwrap().contains("wall"));
}

#[test]
fn summary_csv_is_recomputable_from_records() {
    let result = sweep_cores(&spec(11, 5)).unwrap();
    let mut records = Vec::new();
    write_records(&result.records, &mut records).unwrap();
    let parsed = read_records(std::str::from_utf8(&records).unwrap()).unwrap();
    let mut direct = Vec::new();
    let mut recomputed = Vec::new();
    write_summary_csv(&result.summary, &mut direct).unwrap();
    write_summary_csv(&summarize(&parsed), &mut recomputed).unwrap();
    assert_eq!(direct, recomputed);
    let text = String::from_utf8(direct).unwrap();
    assert!(text.starts_with(
        "load,cs_ratio,util_lo,util_hi,resources_per_group,cores,core_multiple,algorithm,metric,value,n_trials,n_failures\n"
    ));
    // Four points, each with two means and one reduction row.
    assert_eq!(text.lines().count(), 1 + 4 * 3);
}

#[test]
fn every_trial_pairs_both_algorithms_on_one_set() {
    let result = sweep_cores(&spec(5, 4)).unwrap();
    assert_eq!(result.records.len(), 4 * 4 * 2);
    for pair in result.records.chunks(2) {
        assert_eq!(
            (pair[0].point_index, pair[0].trial),
            (pair[1].point_index, pair[1].trial)
        );
        assert_eq!([pair[0].algorithm, pair[1].algorithm], Algorithm::ALL);
    }
}

#[test]
fn blocking_free_sets_need_about_the_same_cores() {
    let spec = SweepSpec {
        loads: vec![4.0],
        cs_ratios: vec![0.0],
        trials: 30,
        seed: 9,
        ..SweepSpec::default()
    };
    let result = sweep_cores(&spec).unwrap();
    let mean = |alg: &str| {
        result
            .summary
            .iter()
            .find(|r| r.algorithm == alg && r.metric == "mean_cores")
            .unwrap()
            .value
    };
    assert!((mean("brwfd") - mean("wfd")).abs() <= 1.0);
}

#[test]
fn ratio_sweep_records_flags_at_the_point_core_count() {
    let spec = SweepSpec {
        loads: vec![2.0],
        cs_ratios: vec![0.0],
        core_multiples: vec![1.0, 3.0],
        trials: 5,
        ..SweepSpec::default()
    };
    let result = sweep_ratio(&spec).unwrap();
    let cores: Vec<Option<usize>> = result.records.iter().map(|r| r.point.cores).collect();
    assert_eq!(&cores[..2], &[Some(2), Some(2)]);
    assert_eq!(cores.last(), Some(&Some(6)));
    assert!(result
        .records
        .iter()
        .all(|r| matches!(r.outcome, Outcome::Schedulable(_))));
    // Without blocking, a generous core count always suffices.
    assert!(result
        .records
        .iter()
        .filter(|r| r.point.cores == Some(6))
        .all(|r| r.outcome == Outcome::Schedulable(true)));
}

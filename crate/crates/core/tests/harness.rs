use std::collections::BTreeMap;

use eos::harness::{
    read_records, run_experiment, write_records, ExperimentConfig, Method, Report, StepRecord,
};
use eos::segmenter::OracleConfig;
use eos::uncos::UncosParams;

fn small(seed: u64, scenes: usize, steps: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        scenes,
        steps,
        uncos: UncosParams {
            n_hypotheses: 8,
            ..UncosParams::default()
        },
        ..ExperimentConfig::default()
    }
}

fn by_method(records: &[StepRecord], step: usize) -> BTreeMap<(usize, Method), StepRecord> {
    records
        .iter()
        .filter(|r| r.step == step)
        .map(|r| ((r.scene, r.method), r.timeless()))
        .collect()
}

#[test]
fn step_zero_is_shared_by_all_methods() {
    let (out, _) = run_experiment(&small(11, 3, 1)).unwrap();
    assert_eq!(out.records.len(), 3 * 3 * 2);
    let step0 = by_method(&out.records, 0);
    for scene in 0..3 {
        let eos = &step0[&(scene, Method::Eos)];
        for m in [Method::Random, Method::FinalFrame] {
            let other = &step0[&(scene, m)];
            assert_eq!(
                (other.f_n, other.f, &other.kappa),
                (eos.f_n, eos.f, &eos.kappa)
            );
        }
    }
}

#[test]
fn final_frame_replays_random_actions() {
    let (out, _) = run_experiment(&small(12, 3, 2)).unwrap();
    for step in 1..=2 {
        let recs = by_method(&out.records, step);
        for scene in 0..3 {
            assert_eq!(
                recs[&(scene, Method::Random)].action,
                recs[&(scene, Method::FinalFrame)].action
            );
        }
    }
}

#[test]
fn zero_steps_gives_one_record_per_method() {
    let (out, report) = run_experiment(&small(13, 2, 0)).unwrap();
    assert_eq!(out.records.len(), 2 * 3);
    for m in &report.methods {
        assert_eq!(m.delta_f_n, (0.0, 0.0));
    }
}

#[test]
fn noise_free_runs_are_perfect_and_idle() {
    let config = ExperimentConfig {
        oracle: OracleConfig::noise_free(),
        ..small(14, 3, 2)
    };
    let (out, report) = run_experiment(&config).unwrap();
    for r in &out.records {
        assert_eq!(r.f_n, 1.0, "{r:?}");
        if r.method == Method::Eos && r.step > 0 {
            assert_eq!(r.status, "no-ambiguity");
            assert!(r.action.is_empty());
        }
    }
    for m in &report.methods {
        assert_eq!(m.delta_f_n.0, 0.0);
        assert_eq!(m.delta_f.0, 0.0);
    }
}

#[test]
fn fixed_seed_reproduces_records() {
    let config = small(15, 3, 2);
    let (a, ra) = run_experiment(&config).unwrap();
    let (b, rb) = run_experiment(&config).unwrap();
    let strip = |rs: &[StepRecord]| rs.iter().map(StepRecord::timeless).collect::<Vec<_>>();
    assert_eq!(strip(&a.records), strip(&b.records));
    assert_eq!(ra, rb);
}

#[test]
fn report_recomputes_from_csv() {
    let config = small(16, 3, 1);
    let (out, report) = run_experiment(&config).unwrap();
    let mut buf = Vec::new();
    write_records(&out.records, &mut buf).unwrap();
    let back = read_records(buf.as_slice()).unwrap();
    assert_eq!(Report::from_records(&back, config.steps), report);
}

#[test]
fn single_scene_reports_zero_standard_error() {
    let (_, report) = run_experiment(&small(17, 1, 1)).unwrap();
    for m in &report.methods {
        assert!(m.single_sample);
        assert_eq!(m.delta_f_n.1, 0.0);
    }
}

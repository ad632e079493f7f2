use std::f64::consts::PI;
use std::fs;

use swtpli::harness::{ingest_directory, run_plan, ExperimentPlan, Method, RecordSource};
use swtpli::io::{write_annotations, write_signal_csv};
use swtpli::shrinkage::ShrinkageMethod;
use swtpli::synthesis::{synth_af_ecg, AfEcgConfig, PliScenario};
use swtpli::Signal;

#[test]
fn empty_directory_gives_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let report = ingest_directory(dir.path(), 360.0, 1000.0).unwrap();
    assert!(report.records.is_empty());
    assert!(report.skipped.is_empty());
}

#[test]
fn resamples_records_and_scales_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let x = Signal::from_fn(30 * 360, 360.0, |t| (2.0 * PI * 5.0 * t).sin()).unwrap();
    write_signal_csv(&dir.path().join("a.csv"), &x, "mv", &[]).unwrap();
    write_annotations(&dir.path().join("a.ann"), &[360, 3600]).unwrap();
    fs::write(dir.path().join("b.csv"), "0.1;0.2\nnot;numeric\n").unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let report = ingest_directory(dir.path(), 360.0, 1000.0).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.skipped.len(), 1);
    let rec = &report.records[0];
    assert_eq!(rec.name, "a");
    assert!(rec.signal.len().abs_diff(30000) <= 1);
    assert_eq!(rec.signal.sample_rate_hz(), 1000.0);
    assert_eq!(rec.signal.annotations(), &[1000, 10000]);
}

#[test]
fn directory_plan_runs_on_ingested_records() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..2 {
        let rec = synth_af_ecg(&AfEcgConfig { seed, duration_s: 15.0, ..AfEcgConfig::default() }).unwrap();
        let path = dir.path().join(format!("r{seed}.csv"));
        write_signal_csv(&path, &rec.composite, "mv", &[]).unwrap();
        if seed == 0 {
            write_annotations(&dir.path().join("r0.ann"), &rec.r_peaks).unwrap();
        }
    }
    let plan = ExperimentPlan {
        methods: vec![Method::Wavelet(ShrinkageMethod::HardMinimax)],
        scenarios: vec![PliScenario::Common],
        snr_in_db: vec![5.0],
        trials: 1,
        source: RecordSource::Directory {
            path: dir.path().to_path_buf(),
            sample_rate_hz: 1000.0,
            resample_to_hz: 1000.0,
        },
        ..ExperimentPlan::default()
    };
    let table = run_plan(&plan, 1).unwrap();
    let rows: Vec<_> = table.trials().collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].record, "r0");
    // r1 has no sidecar, so its beats come from the detector
    assert!(rows.iter().all(|r| r.error.is_empty() && r.beat_count > 15.0));
    assert!(rows.iter().all(|r| r.heart_rate_bpm.is_none()));
}

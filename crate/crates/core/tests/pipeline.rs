use fewshot_crop::datamodel::{BoxSource, FeatureStore};
use fewshot_crop::episodes::Setting;
use fewshot_crop::par::Parallelism;
use fewshot_crop::plan::{plan_crops, PlanRequest};
use fewshot_crop::runner::{run_benchmark, BenchmarkConfig};
use fewshot_crop::stats::mean;
use fewshot_crop::synth::{SynthConfig, SynthDataset};
use fewshot_crop::Error;

fn dataset() -> SynthDataset {
    SynthDataset::new(SynthConfig {
        images_per_class: 40,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn planned_crops_cover_the_benchmark() {
    let ds = dataset();
    let req = PlanRequest {
        sources: vec![BoxSource::Gt, BoxSource::Sam],
        modes: vec!["default".parse().unwrap()],
        fusion: None,
        analysis_grid: Vec::new(),
        skip_missing: false,
    };
    let requests = plan_crops(&ds.manifest, &req).unwrap();
    // encode/decode as an extractor hand-off would
    let store = FeatureStore::decode(&ds.fill_store(&requests).unwrap().encode()).unwrap();
    let cfg = BenchmarkConfig {
        sweep: vec![5, 10],
        runs: 6,
        methods: ["baseline", "gt-default", "sam-default"].iter().map(|m| m.parse().unwrap()).collect(),
        setting: Setting::Transductive,
        ..Default::default()
    };
    let report = run_benchmark(&ds.manifest, &store, &cfg).unwrap();
    assert_eq!(report.rows.len(), 6 * 3 * 2);
    for s in report.summary() {
        let acc = report.accuracies(&s.method, s.n_labeled);
        assert_eq!(s.runs, 6);
        assert!((s.mean - mean(&acc)).abs() < 1e-9);
        assert!(acc.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    assert!(report.rows.iter().all(|r| r.setting == "transductive"));

    // a method whose crops were never planned is reported, not guessed
    let cfg = BenchmarkConfig {
        methods: vec!["gt-multiple".parse().unwrap()],
        ..cfg
    };
    match run_benchmark(&ds.manifest, &store, &cfg) {
        Err(Error::MissingFeatures(keys)) => assert!(!keys.is_empty()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let ds = dataset();
    let store = ds.standard_store().unwrap();
    let cfg = |parallelism| BenchmarkConfig {
        sweep: vec![5, 15],
        runs: 8,
        methods: ["baseline", "salient-default"].iter().map(|m| m.parse().unwrap()).collect(),
        parallelism,
        ..Default::default()
    };
    let seq = run_benchmark(&ds.manifest, &store, &cfg(Parallelism::Sequential)).unwrap();
    let par = run_benchmark(&ds.manifest, &store, &cfg(Parallelism::Parallel)).unwrap();
    assert_eq!(seq.rows, par.rows);
}

#[test]
fn support_grows_within_a_seed() {
    let ds = dataset();
    let store = ds.standard_store().unwrap();
    let cfg = BenchmarkConfig {
        sweep: vec![5, 25],
        runs: 20,
        methods: vec!["baseline".parse().unwrap()],
        ..Default::default()
    };
    let report = run_benchmark(&ds.manifest, &store, &cfg).unwrap();
    // each run shares its seed across sweep points
    let seeds = |n| report.rows.iter().filter(|r| r.n_labeled == n).map(|r| r.seed).collect::<Vec<_>>();
    assert_eq!(seeds(5), seeds(25));
    assert!(mean(&report.accuracies("baseline", 25)) > mean(&report.accuracies("baseline", 5)));
}

use wiener_gobf::experiments::{self, records_from_csv, records_to_csv, run_study};
use wiener_gobf::pipeline::{self, IdentifyConfig, WienerModel};
use wiener_gobf::ratfun::FilterMode;
use wiener_gobf::signals::{generate_multisine, MultisineSpec};

#[test]
fn model_survives_json_and_predicts_identically() {
    let sys = experiments::example1_system();
    let u = generate_multisine(&MultisineSpec::flat(341, 6, 1.0, 3)).unwrap();
    let uv = generate_multisine(&MultisineSpec::flat(341, 6, 1.0, 4)).unwrap();
    let (_, y) = pipeline::simulate(&sys, &u, FilterMode::PeriodicSteadyState).unwrap();
    let model = pipeline::identify(&u, &y, &IdentifyConfig::new(3, 3, 2, 3)).unwrap();
    let back = WienerModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    let a = pipeline::predict(&model, &uv).unwrap();
    let b = pipeline::predict(&back, &uv).unwrap();
    assert_eq!(a.samples, b.samples);
    let (_, yv) = pipeline::simulate(&sys, &uv, FilterMode::PeriodicSteadyState).unwrap();
    assert!(pipeline::nrmse(&yv.samples, &a.samples) < 0.05);
}

#[test]
fn resumed_study_matches_fresh_run() {
    let cfg = experiments::example2_noise(experiments::EXAMPLE2_SATURATION, 4, 21);
    let full = run_study(&cfg, Some(1), &[]).unwrap();
    let partial = run_study(&experiments::example2_noise(experiments::EXAMPLE2_SATURATION, 2, 21), Some(1), &[]).unwrap();
    let csv = records_to_csv(&partial.records).unwrap();
    let existing = records_from_csv(csv.as_bytes()).unwrap();
    let resumed = run_study(&cfg, None, &existing).unwrap();
    assert_eq!(resumed.records, full.records);
    assert_eq!(resumed.aggregates, full.aggregates);
}

#[test]
fn more_data_gives_better_poles() {
    let cfg = experiments::example1_pole_rate(3, 8);
    let res = run_study(&cfg, None, &[]).unwrap();
    let first = res.group(Some(170), None).unwrap().metrics[&experiments::Metric::PoleError].mean;
    let last = res.group(Some(10922), None).unwrap().metrics[&experiments::Metric::PoleError].mean;
    assert!(last < first, "{last} vs {first}");
}

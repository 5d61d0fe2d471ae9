use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use hdbci::chansel::{greedy_backward_eliminate, ChanselConfig};
use hdbci::datamodel::{load_dataset, write_dataset, Dataset, Fixation, Montage, StimulusCodebook};
use hdbci::harness::{prepare_subject, run_benchmark, summarize_run, BenchmarkConfig};
use hdbci::metrics::{complex_spectrum_features, spectrum};
use hdbci::sigproc::{BandSpec, FilterBank};
use hdbci::simgen::{synthesize_dataset, synthesize_trial, ForwardModelConfig};
use hdbci::tdca::{train_subbands, SubbandTrial, TdcaConfig};

fn light_tdca() -> TdcaConfig {
    TdcaConfig {
        filter_bank: FilterBank { bands: vec![BandSpec::new(6.0, 90.0), BandSpec::new(14.0, 90.0)] },
        n_components: 4,
        ..TdcaConfig::default()
    }
}

fn synth(subset: &str, rows: usize, cols: usize, fixations: &[Fixation], noise: f64, blocks: usize, seed: u64) -> Dataset {
    let montage = Montage::parieto_occipital();
    let montage = montage.restrict(&montage.subset_indices(subset).unwrap()).unwrap();
    let cb = StimulusCodebook { rows, cols, ..StimulusCodebook::default() }.with_fixations(fixations).unwrap();
    let cfg = ForwardModelConfig { white_noise: noise, post_trigger: 0.7, seed, ..Default::default() };
    synthesize_dataset(&cfg, &montage, &cb, blocks).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn benchmark_reruns_are_byte_identical_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synth("64-9", 1, 4, &[Fixation::Left, Fixation::Right], 1.0, 3, 4);
    let data_dir = tmp.path().join("data");
    write_dataset(&ds, &data_dir).unwrap();
    assert_eq!(load_dataset(&data_dir).unwrap(), ds);

    let config = |out: &str| BenchmarkConfig {
        dataset: Some(data_dir.clone()),
        montages: vec!["64-9".into()],
        windows: vec![0.2, 0.4],
        tdca: light_tdca(),
        dynwin_enabled: true,
        output_dir: tmp.path().join(out),
        ..BenchmarkConfig::default()
    };
    let a = run_benchmark(&config("a")).unwrap();
    let b = run_benchmark(&config("b")).unwrap();
    for f in ["metrics.csv", "dynwin.csv", "64-9__left-right.json"] {
        assert_eq!(read(&a.run_dir, f), read(&b.run_dir, f), "{f} differs");
    }
    let dyn_rows = String::from_utf8(read(&a.run_dir, "dynwin.csv")).unwrap();
    assert_eq!(dyn_rows.lines().count(), 1 + 50);

    let summary = summarize_run(&a.run_dir).unwrap();
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0].accuracy, a.reports[0].windows[0].accuracy);

    let again = run_benchmark(&config("a")).unwrap();
    assert_eq!(again.skipped_jobs, vec!["64-9__left-right".to_string()]);
    assert_eq!(read(&a.run_dir, "metrics.csv"), read(&b.run_dir, "metrics.csv"));
}

#[test]
fn denser_montage_separates_fixations_at_least_as_well() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synth("256-66", 1, 2, &Fixation::ALL, 3.0, 10, 31);
    write_dataset(&ds, tmp.path()).unwrap();
    let config = BenchmarkConfig {
        dataset: Some(tmp.path().to_path_buf()),
        montages: vec!["64-9".into(), "256-66".into()],
        windows: vec![0.5],
        output_dir: tmp.path().join("reports"),
        ..BenchmarkConfig::default()
    };
    let out = run_benchmark(&config).unwrap();
    let fix = |m: &str| {
        let r = out.reports.iter().find(|r| r.montage == m).unwrap();
        r.windows[0].fixation_subtask.as_ref().unwrap().accuracy
    };
    let (sparse, dense) = (fix("64-9"), fix("256-66"));
    assert!(dense >= sparse, "256-66 {dense} < 64-9 {sparse}");
}

#[test]
fn elimination_trace_shrinks_by_one_and_repeats() {
    let ds = synth("64-9", 1, 4, &[Fixation::Center], 2.0, 3, 8);
    let config = BenchmarkConfig { tdca: light_tdca(), ..BenchmarkConfig::default() };
    let subject = prepare_subject(&ds, &config, 0.2).unwrap();
    let cs = ChanselConfig { window: 0.2, folds: None, tdca: light_tdca() };
    let initial = [0, 2, 3, 4, 6, 8];
    let trace = greedy_backward_eliminate(std::slice::from_ref(&subject), &initial, &cs).unwrap();
    assert_eq!(trace.len(), initial.len() - 1);
    assert_eq!(trace[0].subset, initial);
    for pair in trace.windows(2) {
        let removed = pair[1].removed.unwrap();
        assert_eq!(pair[1].subset.len(), pair[0].subset.len() - 1);
        let mut expected = pair[0].subset.clone();
        expected.retain(|&c| c != removed);
        assert_eq!(pair[1].subset, expected);
    }
    assert_eq!(greedy_backward_eliminate(&[subject], &initial, &cs).unwrap(), trace);
}

#[test]
fn doubling_amplitude_adds_six_decibels() {
    let montage = Montage::parieto_occipital();
    let oz = montage.index_of("Oz").unwrap();
    let channels = [montage.channels[oz].clone()];
    let cb = StimulusCodebook::default();
    // Flicker 10 sits at 10 Hz, on the 1 Hz grid of a one-second window.
    let label = cb.label(10, Fixation::Center).unwrap();
    assert!((cb.frequency(10) - 10.0).abs() < 1e-12);
    let snr = |amp: f64, stream: u64| {
        let cfg = ForwardModelConfig { fundamental_amplitude: amp, latency: 0.0, white_noise: 1.0, seed: 3, ..Default::default() };
        let t = synthesize_trial(&cfg, &channels, &cb, label, 1.0, 250.0, stream).unwrap();
        spectrum(&t.data, 250.0, 250).unwrap().snr(0, 10.0, 5).unwrap().db
    };
    let gains: Vec<f64> = (0..20).map(|s| snr(2.0, s) - snr(1.0, s)).collect();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    assert!((mean - 20.0 * 2f64.log10()).abs() <= 0.5, "mean gain {mean} dB");
}

#[test]
fn same_target_features_share_a_phase() {
    let ds = synth("64-9", 1, 4, &[Fixation::Center], 0.5, 4, 12);
    let config = BenchmarkConfig { tdca: light_tdca(), ..BenchmarkConfig::default() };
    let subject = prepare_subject(&ds, &config, 0.5).unwrap();
    let train: Vec<&SubbandTrial> = subject.trials.iter().filter(|t| t.block < 3).collect();
    let model = train_subbands(&train, &subject.classes, &config.tdca, subject.sampling_rate, 125).unwrap();
    let test: Vec<SubbandTrial> = subject.trials.iter().filter(|t| t.block == 3).cloned().collect();
    let feats = complex_spectrum_features(&model, &subject.trials, 0).unwrap();
    let mut means = Vec::new();
    for class in &subject.classes {
        let phases: Vec<f64> = feats
            .iter()
            .filter(|f| f.numeric_label == class.label.numeric_label)
            .map(|f| f.phase())
            .collect();
        let (c, s) = phases.iter().fold((0.0, 0.0), |(c, s), p| (c + p.cos(), s + p.sin()));
        let resultant = (c * c + s * s).sqrt() / phases.len() as f64;
        assert!(resultant > 0.9, "class {} resultant {resultant}", class.label.numeric_label);
        means.push(s.atan2(c));
    }
    assert_eq!(complex_spectrum_features(&model, &test, 0).unwrap().len(), test.len());
    // Flickers are 0.35 pi apart in phase and differ in frequency, so class means must not coincide.
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let d = (means[i] - means[j]).rem_euclid(2.0 * PI);
            assert!(d.min(2.0 * PI - d) > 0.1, "classes {i} and {j} overlap");
        }
    }
}

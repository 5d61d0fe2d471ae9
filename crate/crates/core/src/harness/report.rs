//! Benchmark sweeps and their report files.
//!
//! A run directory collects `metrics.csv`, `dynwin.csv`, optional `scores.csv`, one JSON
//! report per job, `timing.csv` and an append-only `manifest.jsonl`. Jobs already marked
//! done in the manifest are skipped, so an interrupted sweep resumes where it stopped.
//! Everything except `timing.csv` is byte-identical across reruns.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{crossvalidate_dynwin, evaluate_prepared, prepare_subject, BenchmarkConfig, DynwinRow, EvaluationReport};
use crate::datamodel::{apply_montage, load_dataset, Fixation};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub run_dir: PathBuf,
    pub reports: Vec<EvaluationReport>,
    pub dynwin: Vec<(String, Vec<DynwinRow>)>,
    pub skipped_jobs: Vec<String>,
}

fn csv_appender(path: &Path) -> Result<csv::Writer<File>> {
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    Ok(csv::WriterBuilder::new().has_headers(fresh).from_writer(file))
}

fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_appender(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn append_manifest(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

fn completed_jobs(path: &Path) -> Result<BTreeSet<String>> {
    let mut done = BTreeSet::new();
    if !path.exists() {
        return Ok(done);
    }
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::CorruptData(format!("manifest line unreadable: {e}")))?;
        if v["status"] == "done" {
            if let Some(job) = v["job"].as_str() {
                done.insert(job.to_string());
            }
        }
    }
    Ok(done)
}

#[derive(Serialize)]
struct MetricRow<'a> {
    subject: &'a str,
    montage: &'a str,
    n_targets: usize,
    fixations: &'a str,
    window: f64,
    metric: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct DynwinCsvRow<'a> {
    subject: &'a str,
    montage: &'a str,
    n_targets: usize,
    fixations: &'a str,
    s: usize,
    mean_time: f64,
    accuracy: f64,
    itr_bpm: f64,
}

#[derive(Serialize)]
struct TimingRow<'a> {
    job: &'a str,
    wall_clock_s: f64,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    montage: &'a str,
    fixations: &'a str,
    window: f64,
    block: usize,
    numeric_label: usize,
    predicted_label: usize,
    scores: String,
}

fn fixation_key(f: &[Fixation]) -> String {
    f.iter().map(|x| x.name()).collect::<Vec<_>>().join("-")
}

fn metric_rows<'a>(r: &'a EvaluationReport, fixations: &'a str) -> Vec<MetricRow<'a>> {
    let mut rows = Vec::new();
    for w in &r.windows {
        let mut push = |metric: &'a str, value: f64| {
            rows.push(MetricRow {
                subject: &r.subject_id,
                montage: &r.montage,
                n_targets: r.n_targets,
                fixations,
                window: w.window,
                metric,
                value,
            })
        };
        push("accuracy", w.accuracy);
        push("itr_actual_bpm", w.itr_actual_bpm);
        push("itr_theoretical_bps", w.itr_theoretical_bps);
        if let Some(s) = &w.fixation_subtask {
            push("fixation_subtask_accuracy", s.accuracy);
        }
        if let Some(s) = &w.flicker_subtask {
            push("flicker_subtask_accuracy", s.accuracy);
        }
    }
    rows
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub subject: String,
    pub montage: String,
    pub n_targets: usize,
    pub fixations: String,
    pub window: f64,
    pub metric: String,
    pub value: f64,
}

pub fn read_metrics(run_dir: &Path) -> Result<Vec<MetricRecord>> {
    let path = run_dir.join("metrics.csv");
    if !path.exists() {
        return Err(Error::NotFound(path));
    }
    let mut r = csv::Reader::from_path(&path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Headline metrics of one (subject, montage, fixation set, window) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub subject: String,
    pub montage: String,
    pub fixations: String,
    pub n_targets: usize,
    pub window: f64,
    pub accuracy: f64,
    pub itr_actual_bpm: f64,
    pub itr_theoretical_bps: f64,
}

/// Pivots a run directory's `metrics.csv` into one row per cell, in file order.
pub fn summarize_run(run_dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for m in read_metrics(run_dir)? {
        let pos = rows.iter().position(|r| {
            r.subject == m.subject && r.montage == m.montage && r.fixations == m.fixations && r.window == m.window
        });
        let row = match pos {
            Some(i) => &mut rows[i],
            None => {
                rows.push(SummaryRow {
                    subject: m.subject.clone(),
                    montage: m.montage.clone(),
                    fixations: m.fixations.clone(),
                    n_targets: m.n_targets,
                    window: m.window,
                    accuracy: f64::NAN,
                    itr_actual_bpm: f64::NAN,
                    itr_theoretical_bps: f64::NAN,
                });
                rows.last_mut().unwrap()
            }
        };
        match m.metric.as_str() {
            "accuracy" => row.accuracy = m.value,
            "itr_actual_bpm" => row.itr_actual_bpm = m.value,
            "itr_theoretical_bps" => row.itr_theoretical_bps = m.value,
            _ => {}
        }
    }
    Ok(rows)
}

/// Loads the configured dataset and runs every montage x fixation-set job.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    config.validate()?;
    let path = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("benchmark config has no dataset path".into()))?;
    if config.montages.is_empty() {
        return invalid("at least one montage subset is required");
    }
    let dataset = load_dataset(path)?;
    for m in &config.montages {
        dataset.montage.subset_indices(m)?;
    }
    let run = || -> Result<BenchmarkOutput> {
        let run_dir = config.output_dir.join(&config.run_name);
        fs::create_dir_all(&run_dir)?;
        let manifest = run_dir.join("manifest.jsonl");
        let done = completed_jobs(&manifest)?;
        append_manifest(&manifest, &json!({"event": "start", "config": config}))?;

        let fixation_sets = if config.fixation_sets.is_empty() {
            vec![dataset.codebook.fixation_points.clone()]
        } else {
            config.fixation_sets.clone()
        };
        let mut out = BenchmarkOutput {
            run_dir: run_dir.clone(),
            reports: Vec::new(),
            dynwin: Vec::new(),
            skipped_jobs: Vec::new(),
        };
        for montage in &config.montages {
            for fixations in &fixation_sets {
                let fkey = fixation_key(fixations);
                let job = format!("{montage}__{fkey}");
                if done.contains(&job) {
                    log::info!("skipping completed job {job}");
                    out.skipped_jobs.push(job);
                    continue;
                }
                log::info!("running job {job}");
                let start = Instant::now();
                let ds = apply_montage(&dataset, montage)?.select_fixations(fixations)?;
                let subject = prepare_subject(&ds, config, config.max_duration())?;
                let report = evaluate_prepared(&subject, config, montage)?;
                let mut files = vec!["metrics.csv".to_string()];
                append_rows(&run_dir.join("metrics.csv"), &metric_rows(&report, &fkey))?;
                if config.write_scores {
                    let rows: Vec<ScoreRow> = report
                        .windows
                        .iter()
                        .flat_map(|w| {
                            w.trials.iter().map(|t| ScoreRow {
                                montage,
                                fixations: &fkey,
                                window: w.window,
                                block: t.block,
                                numeric_label: t.numeric_label,
                                predicted_label: t.predicted_label,
                                scores: t.scores.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
                            })
                        })
                        .collect();
                    append_rows(&run_dir.join("scores.csv"), &rows)?;
                    files.push("scores.csv".into());
                }
                if config.dynwin_enabled {
                    let rows = crossvalidate_dynwin(&subject, config)?;
                    let csv_rows: Vec<DynwinCsvRow> = rows
                        .iter()
                        .map(|r| DynwinCsvRow {
                            subject: &report.subject_id,
                            montage,
                            n_targets: report.n_targets,
                            fixations: &fkey,
                            s: r.threshold_index,
                            mean_time: r.mean_time,
                            accuracy: r.accuracy,
                            itr_bpm: r.itr_bpm,
                        })
                        .collect();
                    append_rows(&run_dir.join("dynwin.csv"), &csv_rows)?;
                    files.push("dynwin.csv".into());
                    out.dynwin.push((job.clone(), rows));
                }
                let report_file = format!("{job}.json");
                let mut slim = report.clone();
                if !config.write_scores {
                    for w in &mut slim.windows {
                        w.trials.clear();
                    }
                }
                fs::write(run_dir.join(&report_file), serde_json::to_vec_pretty(&slim)?)?;
                files.push(report_file);
                let wall_clock_s = start.elapsed().as_secs_f64();
                append_rows(&run_dir.join("timing.csv"), &[TimingRow { job: &job, wall_clock_s }])?;
                append_manifest(&manifest, &json!({"job": job, "status": "done", "files": files}))?;
                let mut report = report;
                report.wall_clock_s = wall_clock_s;
                out.reports.push(report);
            }
        }
        append_manifest(&manifest, &json!({"event": "finish"}))?;
        Ok(out)
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::record::{read_csv, save_csv, write_csv, ExperimentRecord, ERROR_PREFIX};
use super::run::{run_point, SweepContext};
use super::{ExperimentConfig, GridPoint};
use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "METAREP_THREADS";
pub const JOURNAL_FILE: &str = "progress.jsonl";
pub const RECORDS_FILE: &str = "records.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Directory for the journal, `records.csv` and a copy of the config.
    pub out: Option<PathBuf>,
    /// Worker count; `None` reads `METAREP_THREADS`, falling back to all cores.
    pub threads: Option<usize>,
    /// Log one line per finished grid point to stderr.
    pub progress: bool,
}

/// Worker-pool size from `METAREP_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&t| t > 0)
}

#[derive(Serialize, Deserialize)]
struct JournalEntry {
    key: String,
    csv: String,
}

/// Content address of a grid point: the config minus its seed list and
/// output path, plus the point itself.
pub fn point_key(config: &ExperimentConfig, point: &GridPoint) -> String {
    let mut canonical = config.clone();
    canonical.seeds.clear();
    canonical.out = None;
    let mut hasher = Sha256::new();
    hasher.update(canonical.to_toml().as_bytes());
    hasher.update(serde_json::to_vec(point).expect("point serializes"));
    hasher.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
}

fn load_journal(path: &Path) -> Result<HashMap<String, Vec<ExperimentRecord>>> {
    let mut done = HashMap::new();
    let Ok(file) = fs::File::open(path) else {
        return Ok(done);
    };
    for line in BufReader::new(file).lines() {
        let line = line?;
        // A torn final line from a crash is skipped; that point reruns.
        let Ok(entry) = serde_json::from_str::<JournalEntry>(&line) else {
            continue;
        };
        if let Ok(records) = read_csv(entry.csv.as_bytes()) {
            done.insert(entry.key, records);
        }
    }
    Ok(done)
}

fn records_for(config: &ExperimentConfig, point: &GridPoint, ctx: &SweepContext) -> Vec<ExperimentRecord> {
    let start = Instant::now();
    let result = run_point(config, point, config.point_seed(point), ctx);
    let wall_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok(metrics) => metrics
            .into_iter()
            .map(|m| ExperimentRecord {
                kind: config.kind,
                seed: point.seed,
                n: m.n,
                k: m.k,
                r: m.r,
                metric: m.name,
                value: m.value,
                stderr: m.stderr,
                wall_ms,
            })
            .collect(),
        Err(e) => vec![ExperimentRecord {
            kind: config.kind,
            seed: point.seed,
            n: point.n,
            k: point.k,
            r: point.r,
            metric: format!("{ERROR_PREFIX}seed={} d={} r={} k={} n={}: {e}", point.seed, point.d, point.r, point.k, point.n),
            value: f64::NAN,
            stderr: None,
            wall_ms,
        }],
    }
}

/// Runs every grid point of `config` and returns the records in grid order.
///
/// Points run in parallel; a single writer thread appends each finished
/// point to the journal, so an interrupted sweep resumes where it stopped.
/// Failing points become error rows instead of aborting the sweep.
pub fn run_sweep(config: &ExperimentConfig, options: &SweepOptions) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let points = config.grid();
    let keys: Vec<String> = points.iter().map(|p| point_key(config, p)).collect();
    let mut done = match &options.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(CONFIG_FILE), config.to_toml())?;
            load_journal(&dir.join(JOURNAL_FILE))?
        }
        None => HashMap::new(),
    };
    let pending: Vec<usize> = (0..points.len()).filter(|&i| !done.contains_key(&keys[i])).collect();
    let ctx = if pending.is_empty() { SweepContext::default() } else { SweepContext::for_config(config)? };

    let threads = options.threads.or_else(threads_from_env).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let (tx, rx) = mpsc::channel::<(usize, Vec<ExperimentRecord>)>();
    let journal_path = options.out.as_ref().map(|d| d.join(JOURNAL_FILE));
    let total = points.len();
    let progress = options.progress;
    let writer_keys = keys.clone();
    let writer = std::thread::spawn(move || -> Result<Vec<(usize, Vec<ExperimentRecord>)>> {
        let mut journal = match &journal_path {
            Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
            None => None,
        };
        let mut finished = Vec::new();
        for (index, records) in rx {
            if let Some(file) = journal.as_mut() {
                let mut csv = Vec::new();
                write_csv(&records, &mut csv)?;
                let entry = JournalEntry { key: writer_keys[index].clone(), csv: String::from_utf8(csv).expect("csv is utf-8") };
                writeln!(file, "{}", serde_json::to_string(&entry).expect("entry serializes"))?;
                file.flush()?;
            }
            if progress {
                let failed = records.iter().any(ExperimentRecord::is_error);
                eprintln!("[{}/{total}] point {index} {}", finished.len() + 1, if failed { "failed" } else { "done" });
            }
            finished.push((index, records));
        }
        Ok(finished)
    });

    pool.install(|| {
        pending.par_iter().for_each_with(tx, |tx, &i| {
            let records = records_for(config, &points[i], &ctx);
            // A closed channel means the writer failed; its error surfaces below.
            let _ = tx.send((i, records));
        })
    });
    let finished = writer.join().expect("writer thread panicked")?;

    let mut by_index: Vec<Option<Vec<ExperimentRecord>>> = keys.iter().map(|k| done.remove(k)).collect();
    for (i, records) in finished {
        by_index[i] = Some(records);
    }
    let records: Vec<ExperimentRecord> = by_index.into_iter().flatten().flatten().collect();
    if let Some(dir) = &options.out {
        save_csv(&records, &dir.join(RECORDS_FILE))?;
    }
    Ok(records)
}

/// CSV text with the wall-time column blanked, for determinism comparisons.
pub fn csv_without_wall_time(records: &[ExperimentRecord]) -> Result<String> {
    let stripped: Vec<ExperimentRecord> = records.iter().cloned().map(|r| ExperimentRecord { wall_ms: 0, ..r }).collect();
    let mut buf = Vec::new();
    write_csv(&stripped, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

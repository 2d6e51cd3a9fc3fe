use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentKind;
use crate::error::Result;

/// One metric value at one `(seed, grid point)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub wall_ms: u64,
}

pub const ERROR_PREFIX: &str = "error: ";

impl ExperimentRecord {
    pub fn is_error(&self) -> bool {
        self.metric.starts_with(ERROR_PREFIX)
    }
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["kind", "seed", "n", "k", "r", "metric", "value", "stderr", "wall_ms"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Into::into)).collect()
}

pub fn save_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn load_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    read_csv(std::fs::File::open(path)?)
}

//! Runs a scenario end to end and writes its artifacts.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::network::{SimError, Simulation};
use crate::trace::CsvTraceWriter;
use crate::workload::MetricsSummary;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub trace: bool,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid scenario: {field}: {message}")]
    Invalid { field: String, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io { .. } => 3,
            RunError::Invalid { .. } => 4,
        }
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    schema_version: u32,
    metrics: &'a MetricsSummary,
    config: &'a ScenarioConfig,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tmp");
    PathBuf::from(s)
}

/// Runs `cfg` (with the overrides in `opts`) and writes `summary.json`,
/// plus `trace.csv` when tracing is on. Files appear only once complete.
pub fn run_scenario(mut cfg: ScenarioConfig, opts: &RunOptions) -> Result<MetricsSummary, RunError> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(d) = opts.duration {
        cfg.duration_s = d;
    }
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut sim = Simulation::new(cfg).map_err(|e| match e {
        SimError::Config { field, message } => RunError::Invalid { field, message },
        SimError::Sink(source) => RunError::Io { path: out.clone(), source },
    })?;
    let trace_path = out.join(TRACE_FILE);
    let trace_tmp = tmp_path(&trace_path);
    if opts.trace {
        let file = File::create(&trace_tmp).map_err(io_err(&trace_tmp))?;
        let writer = CsvTraceWriter::new(BufWriter::new(file)).map_err(io_err(&trace_tmp))?;
        sim.add_sink(Box::new(writer));
    }
    let cfg = sim.config().clone();
    let result = sim.finish().map_err(|e| match e {
        SimError::Sink(source) => RunError::Io { path: trace_tmp.clone(), source },
        SimError::Config { field, message } => RunError::Invalid { field, message },
    })?;
    if opts.trace {
        fs::rename(&trace_tmp, &trace_path).map_err(io_err(&trace_path))?;
    }
    let summary_path = out.join(SUMMARY_FILE);
    let summary_tmp = tmp_path(&summary_path);
    let body = SummaryFile {
        schema_version: SUMMARY_SCHEMA_VERSION,
        metrics: &result.summary,
        config: &cfg,
    };
    let mut json = serde_json::to_string_pretty(&body).expect("summary serializes");
    json.push('\n');
    let mut f = File::create(&summary_tmp).map_err(io_err(&summary_tmp))?;
    f.write_all(json.as_bytes()).map_err(io_err(&summary_tmp))?;
    f.sync_all().map_err(io_err(&summary_tmp))?;
    fs::rename(&summary_tmp, &summary_path).map_err(io_err(&summary_path))?;
    Ok(result.summary)
}

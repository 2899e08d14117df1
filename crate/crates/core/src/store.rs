//! File-backed knowledge database.
//!
//! Layout: one directory per task holding `task.json` (id, query list,
//! meta-feature) and `observations.jsonl` (one observation per line). The
//! task being tuned lives in a hidden `.current-<id>` directory until it is
//! finalized.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::space::{ConfigSpace, SpaceError};
use crate::task::{EvalStatus, MetaFeature, TaskObservation, TaskRecord};

pub const TASK_FILE: &str = "task.json";
pub const OBSERVATIONS_FILE: &str = "observations.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl ToString) -> StoreError {
    StoreError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskFile {
    task_id: String,
    queries: Vec<String>,
    meta_feature: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationLine {
    config: Value,
    per_query_latency_s: Vec<Option<f64>>,
    per_query_cost_s: Vec<Option<f64>>,
    status: EvalStatus,
    #[serde(default = "full_delta")]
    delta: f64,
}

fn full_delta() -> f64 {
    1.0
}

fn observation_line(space: &ConfigSpace, obs: &TaskObservation) -> String {
    let line = ObservationLine {
        config: space.config_to_json(&obs.config),
        per_query_latency_s: obs.latency.clone(),
        per_query_cost_s: obs.cost.clone(),
        status: obs.status,
        delta: obs.delta,
    };
    serde_json::to_string(&line).expect("observation serializes")
}

fn parse_line(space: &ConfigSpace, n_queries: usize, text: &str) -> Result<TaskObservation, String> {
    let line: ObservationLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let config = space
        .config_from_json(&line.config)
        .map_err(|e: SpaceError| e.to_string())?;
    if line.per_query_latency_s.len() != n_queries || line.per_query_cost_s.len() != n_queries {
        return Err(format!("expected {n_queries} per-query values"));
    }
    if line.per_query_cost_s.iter().flatten().any(|c| *c < 0.0) {
        return Err("negative cost".into());
    }
    Ok(TaskObservation {
        config,
        latency: line.per_query_latency_s,
        cost: line.per_query_cost_s,
        status: line.status,
        delta: line.delta,
    })
}

/// Reads one task directory.
pub fn load_task_dir(dir: &Path, space: &ConfigSpace) -> Result<TaskRecord, StoreError> {
    let task_path = dir.join(TASK_FILE);
    let text = fs::read_to_string(&task_path).map_err(io_err(&task_path))?;
    let meta: TaskFile = serde_json::from_str(&text).map_err(|e| malformed(&task_path, e))?;
    let feature = MetaFeature::new(meta.meta_feature)
        .ok_or_else(|| malformed(&task_path, "meta-feature must have 34 finite values"))?;
    let mut record = TaskRecord::new(&meta.task_id, feature, meta.queries);
    let obs_path = dir.join(OBSERVATIONS_FILE);
    let body = match fs::read_to_string(&obs_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io_err(&obs_path)(e)),
    };
    let lines: Vec<&str> = body.split('\n').collect();
    let torn_tail = !body.is_empty() && !body.ends_with('\n');
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(space, record.queries.len(), line) {
            Ok(o) => record.observations.push(o),
            Err(_) if torn_tail && i + 1 == lines.len() => {
                log::debug!("{}: dropping torn final line", obs_path.display());
            }
            Err(e) => return Err(malformed(&obs_path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(record)
}

/// Writes a whole task directory at `dir`.
pub fn write_task_dir(dir: &Path, space: &ConfigSpace, record: &TaskRecord) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_task_file(dir, record)?;
    let path = dir.join(OBSERVATIONS_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for o in &record.observations {
        writeln!(w, "{}", observation_line(space, o)).map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    w.get_ref().sync_all().map_err(io_err(&path))
}

fn write_task_file(dir: &Path, record: &TaskRecord) -> Result<(), StoreError> {
    let path = dir.join(TASK_FILE);
    let meta = TaskFile {
        task_id: record.task_id.clone(),
        queries: record.queries.clone(),
        meta_feature: record.meta.values().to_vec(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("task metadata serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Tasks that loaded, plus one message per skipped directory.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub tasks: Vec<TaskRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    root: PathBuf,
    space: ConfigSpace,
}

impl KnowledgeStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: &Path, space: &ConfigSpace) -> Result<Self, StoreError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            space: space.clone(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn task_dirs(&self) -> Result<Vec<PathBuf>, StoreError> {
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(io_err(&self.root))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir() && !e.file_name().to_string_lossy().starts_with('.'))
            .map(|e| e.path())
            .collect();
        dirs.sort();
        Ok(dirs)
    }

    /// Loads every finalized task, skipping malformed ones with a warning.
    pub fn load_all(&self) -> LoadReport {
        let mut report = LoadReport::default();
        let dirs = match self.task_dirs() {
            Ok(d) => d,
            Err(e) => {
                log::warn!("{e}");
                report.warnings.push(e.to_string());
                return report;
            }
        };
        for dir in dirs {
            match load_task_dir(&dir, &self.space) {
                Ok(t) if report.tasks.iter().any(|o: &TaskRecord| o.task_id == t.task_id) => {
                    let msg = format!("{}: duplicate task id `{}`", dir.display(), t.task_id);
                    log::warn!("{msg}");
                    report.warnings.push(msg);
                }
                Ok(t) => report.tasks.push(t),
                Err(e) => {
                    log::warn!("skipping task: {e}");
                    report.warnings.push(e.to_string());
                }
            }
        }
        report
    }

    /// Stores a complete record under its id (suffixed if the id is taken).
    pub fn insert(&self, record: &TaskRecord) -> Result<PathBuf, StoreError> {
        let dir = self.free_dir(&record.task_id);
        write_task_dir(&dir, &self.space, record)?;
        Ok(dir)
    }

    fn free_dir(&self, task_id: &str) -> PathBuf {
        let dir = self.root.join(task_id);
        if !dir.exists() {
            return dir;
        }
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let mut n = 0;
        loop {
            let name = if n == 0 {
                format!("{task_id}-{stamp}")
            } else {
                format!("{task_id}-{stamp}-{n}")
            };
            let candidate = self.root.join(name);
            if !candidate.exists() {
                return candidate;
            }
            n += 1;
        }
    }

    /// Starts persisting a new task; any stale in-progress directory is replaced.
    pub fn begin_task(
        &self,
        task_id: &str,
        meta: MetaFeature,
        queries: Vec<String>,
    ) -> Result<CurrentTask, StoreError> {
        let dir = self.root.join(format!(".current-{task_id}"));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let record = TaskRecord::new(task_id, meta, queries);
        write_task_file(&dir, &record)?;
        let path = dir.join(OBSERVATIONS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(CurrentTask {
            dir,
            file,
            space: self.space.clone(),
            record,
        })
    }
}

/// Append handle for the task being tuned.
#[derive(Debug)]
pub struct CurrentTask {
    dir: PathBuf,
    file: File,
    space: ConfigSpace,
    record: TaskRecord,
}

impl CurrentTask {
    pub fn record(&self) -> &TaskRecord {
        &self.record
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one observation and syncs it to disk before returning.
    pub fn append(&mut self, obs: TaskObservation) -> Result<(), StoreError> {
        let path = self.dir.join(OBSERVATIONS_FILE);
        let line = observation_line(&self.space, &obs) + "\n";
        self.file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.file.flush().map_err(io_err(&path))?;
        self.file.sync_data().map_err(io_err(&path))?;
        self.record.observations.push(obs);
        Ok(())
    }

    /// Moves the task into the store under its id and returns the record.
    pub fn finalize(self, store: &KnowledgeStore) -> Result<TaskRecord, StoreError> {
        let target = store.free_dir(&self.record.task_id);
        drop(self.file);
        fs::rename(&self.dir, &target).map_err(io_err(&target))?;
        Ok(self.record)
    }
}

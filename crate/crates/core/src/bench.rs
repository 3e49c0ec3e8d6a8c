//! Benchmark matrix execution and the results CSV.

use std::io::{self, Read, Write};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::engine::{execute, w_delete, w_insert, w_update, EngineError, WriteResult};
use crate::geom::{TrajId, Trajectory};
use crate::index::{Backend, BackendConfig, IndexError, IndexKind, QueryStats, StorageFormat};
use crate::workload::{
    insert_segments, jitter_translate, make_mixed_sequence, make_read_configs, make_write_configs,
    random_insert, MixedOp, ReadKind, ReadWorkload, WorkloadError, WorkloadSpec, WriteKind,
    WritePlan,
};

pub const RESULTS_HEADER: &str = "dataset,format,index,op_kind,config_id,run_id,elapsed_us,\
nodes_visited,ranges_scanned,candidates,exact_tests,rows_touched,result_size";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("results line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub dataset: String,
    pub format: StorageFormat,
    pub index: IndexKind,
    pub op_kind: String,
    pub config_id: usize,
    pub run_id: usize,
    pub elapsed_us: f64,
    pub stats: QueryStats,
    pub result_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadMode {
    Read,
    Write,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub formats: Vec<StorageFormat>,
    pub indexes: Vec<IndexKind>,
    /// Index parameters; `format` and `index` are overridden per cell.
    pub backend: BackendConfig,
    pub workload: WorkloadSpec,
    pub modes: Vec<WorkloadMode>,
    pub read_ratios: Vec<f64>,
    pub repetitions: usize,
    pub warmup: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            formats: StorageFormat::ALL.to_vec(),
            indexes: IndexKind::ALL.to_vec(),
            backend: BackendConfig::default(),
            workload: WorkloadSpec::default(),
            modes: vec![WorkloadMode::Read],
            read_ratios: vec![0.05, 0.5, 0.95],
            repetitions: 3,
            warmup: 1,
        }
    }
}

/// A matrix cell that stopped on an error.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub dataset: String,
    pub format: StorageFormat,
    pub index: IndexKind,
    pub op_kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub records: Vec<BenchRecord>,
    pub failures: Vec<CellFailure>,
}

/// Workload configurations shared by every cell of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetWorkload {
    pub reads: ReadWorkload,
    pub writes: WritePlan,
}

pub fn build_workload(ds: &Dataset, spec: &WorkloadSpec) -> Result<DatasetWorkload, BenchError> {
    let oracle = Backend::bulk_load(
        ds,
        BackendConfig::new(StorageFormat::Whole, IndexKind::SeqScan),
    )?;
    Ok(DatasetWorkload {
        reads: make_read_configs(ds, &oracle, spec)?,
        writes: make_write_configs(ds, spec)?,
    })
}

struct Cell<'a> {
    dataset: &'a str,
    cfg: BackendConfig,
}

impl Cell<'_> {
    fn record(
        &self,
        op_kind: &str,
        config_id: usize,
        run_id: usize,
        elapsed: Duration,
        stats: QueryStats,
        result_size: usize,
    ) -> BenchRecord {
        BenchRecord {
            dataset: self.dataset.to_string(),
            format: self.cfg.format,
            index: self.cfg.index,
            op_kind: op_kind.to_string(),
            config_id,
            run_id,
            elapsed_us: elapsed.as_secs_f64() * 1e6,
            stats,
            result_size,
        }
    }

    fn failure(&self, op_kind: &str, err: impl std::fmt::Display) -> CellFailure {
        CellFailure {
            dataset: self.dataset.to_string(),
            format: self.cfg.format,
            index: self.cfg.index,
            op_kind: op_kind.to_string(),
            message: err.to_string(),
        }
    }
}

/// Runs every (format, index, mode) cell over `ds`. Each cell bulk-loads a
/// fresh backend. Reads get `warmup` untimed passes; every write
/// configuration and every mixed repetition starts from an unmodified copy
/// of the loaded backend.
pub fn run_suite(ds: &Dataset, suite: &SuiteConfig) -> Result<SuiteOutput, BenchError> {
    let work = build_workload(ds, &suite.workload)?;
    run_suite_with(ds, suite, &work)
}

pub fn run_suite_with(
    ds: &Dataset,
    suite: &SuiteConfig,
    work: &DatasetWorkload,
) -> Result<SuiteOutput, BenchError> {
    let mut out = SuiteOutput::default();
    for &format in &suite.formats {
        for &index in &suite.indexes {
            let cfg = BackendConfig {
                format,
                index,
                ..suite.backend
            };
            let cell = Cell {
                dataset: &ds.name,
                cfg,
            };
            let backend = Backend::bulk_load(ds, cfg)?;
            for mode in &suite.modes {
                match mode {
                    WorkloadMode::Read => run_reads(&cell, &backend, &work.reads, suite, &mut out),
                    WorkloadMode::Write => {
                        run_writes(&cell, &backend, &work.writes, suite, &mut out)
                    }
                    WorkloadMode::Mixed => {
                        for &ratio in &suite.read_ratios {
                            run_mixed(&cell, &backend, ds, work, ratio, suite, &mut out);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn run_reads(
    cell: &Cell,
    h: &Backend,
    reads: &ReadWorkload,
    suite: &SuiteConfig,
    out: &mut SuiteOutput,
) {
    for kind in ReadKind::ALL {
        let configs = reads.of_kind(kind);
        for _ in 0..suite.warmup {
            for q in configs {
                let _ = execute(h, q);
            }
        }
        'reps: for run in 0..suite.repetitions {
            for (i, q) in configs.iter().enumerate() {
                match execute(h, q) {
                    Ok(r) => out.records.push(cell.record(
                        kind.name(),
                        i,
                        run,
                        r.elapsed,
                        r.stats,
                        r.ids.len(),
                    )),
                    Err(e) => {
                        out.failures.push(cell.failure(kind.name(), e));
                        break 'reps;
                    }
                }
            }
        }
    }
}

fn run_writes(
    cell: &Cell,
    pristine: &Backend,
    plan: &WritePlan,
    suite: &SuiteConfig,
    out: &mut SuiteOutput,
) {
    type Op<'a> = Box<dyn Fn(&mut Backend, usize) -> Result<WriteResult, EngineError> + 'a>;
    let ops: Vec<(&str, usize, Op)> = vec![
        (
            "insert_single",
            plan.insert_single.len(),
            Box::new(|h, i| w_insert(h, &plan.insert_single[i])),
        ),
        (
            "insert_batch",
            plan.insert_batch.len(),
            Box::new(|h, i| w_insert(h, &plan.insert_batch[i])),
        ),
        (
            "update_single",
            plan.update_single.len(),
            Box::new(|h, i| w_update(h, &plan.update_single[i])),
        ),
        (
            "update_batch",
            plan.update_batch.len(),
            Box::new(|h, i| w_update(h, &plan.update_batch[i])),
        ),
        (
            "delete_single",
            plan.delete_single.len(),
            Box::new(|h, i| w_delete(h, &plan.delete_single[i])),
        ),
        (
            "delete_batch",
            plan.delete_batch.len(),
            Box::new(|h, i| w_delete(h, &plan.delete_batch[i])),
        ),
    ];
    for (name, count, op) in ops {
        'reps: for run in 0..suite.repetitions {
            for i in 0..count {
                let mut h = pristine.clone();
                match op(&mut h, i) {
                    Ok(r) => out
                        .records
                        .push(cell.record(name, i, run, r.elapsed, r.stats, r.rows)),
                    Err(e) => {
                        out.failures.push(cell.failure(name, e));
                        break 'reps;
                    }
                }
            }
        }
    }
}

/// Op-kind label of one operation inside a mixed run.
pub fn mixed_op_kind(ratio: f64, op: MixedOp) -> String {
    let kind = match op {
        MixedOp::Read(k) => k.name(),
        MixedOp::Write(k) => k.name(),
    };
    format!("mixed_{ratio}:{kind}")
}

fn run_mixed(
    cell: &Cell,
    pristine: &Backend,
    ds: &Dataset,
    work: &DatasetWorkload,
    ratio: f64,
    suite: &SuiteConfig,
    out: &mut SuiteOutput,
) {
    let spec = &suite.workload;
    let label = format!("mixed_{ratio}");
    let seq = match make_mixed_sequence(ratio, spec.mixed_ops, spec.seed) {
        Ok(s) => s,
        Err(e) => {
            out.failures.push(cell.failure(&label, e));
            return;
        }
    };
    let Some(bbox) = ds.extent() else {
        out.failures.push(cell.failure(&label, "empty dataset"));
        return;
    };
    let k = insert_segments(ds);
    let step = spec.step_fraction * bbox.width();
    let first_fresh = ds.max_id().map_or(0, |m| m.0 + 1);

    for run in 0..suite.repetitions {
        let mut h = pristine.clone();
        // Same stream for every cell so result sizes are comparable.
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(31 + (ratio * 1e6).round() as u64);
        let mut live: Vec<TrajId> = h.ids();
        let mut next_id = first_fresh;
        let mut read_seen = [0usize; 4];
        for (i, &op) in seq.iter().enumerate() {
            let op_kind = mixed_op_kind(ratio, op);
            let res = match op {
                MixedOp::Read(kind) => {
                    let slot = ReadKind::ALL.iter().position(|x| *x == kind).unwrap();
                    let configs = work.reads.of_kind(kind);
                    let q = &configs[read_seen[slot] % configs.len()];
                    read_seen[slot] += 1;
                    execute(&h, q).map(|r| (r.elapsed, r.stats, r.ids.len()))
                }
                MixedOp::Write(WriteKind::Insert) => {
                    let t = random_insert(&mut rng, TrajId(next_id), &bbox, k, spec);
                    next_id += 1;
                    live.push(t.id);
                    w_insert(&mut h, std::slice::from_ref(&t)).map(|r| (r.elapsed, r.stats, r.rows))
                }
                MixedOp::Write(kind) if live.is_empty() => {
                    out.failures.push(
                        cell.failure(&op_kind, format!("no live trajectory to {}", kind.name())),
                    );
                    break;
                }
                MixedOp::Write(WriteKind::Update) => {
                    let id = live[rng.random_range(0..live.len())];
                    let cur: Trajectory = h
                        .fetch(id, &mut QueryStats::default())
                        .expect("tracked ids are live");
                    let moved = jitter_translate(&mut rng, &cur, step);
                    w_update(&mut h, &[(id, moved)]).map(|r| (r.elapsed, r.stats, r.rows))
                }
                MixedOp::Write(WriteKind::Delete) => {
                    let id = live.swap_remove(rng.random_range(0..live.len()));
                    w_delete(&mut h, &[id]).map(|r| (r.elapsed, r.stats, r.rows))
                }
            };
            match res {
                Ok((elapsed, stats, size)) => out
                    .records
                    .push(cell.record(&op_kind, i, run, elapsed, stats, size)),
                Err(e) => {
                    out.failures.push(cell.failure(&op_kind, e));
                    break;
                }
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_records<W: Write>(records: &[BenchRecord], out: &mut W) -> io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records {
        let s = &r.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3},{},{},{},{},{},{}",
            csv_field(&r.dataset),
            r.format,
            r.index,
            csv_field(&r.op_kind),
            r.config_id,
            r.run_id,
            r.elapsed_us,
            s.nodes_visited,
            s.ranges_scanned,
            s.candidates_returned,
            s.exact_tests,
            s.rows_touched,
            r.result_size
        )?;
    }
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, rec) in reader.records().enumerate() {
        let line = i as u64 + 1;
        let bad = |msg: String| BenchError::Parse { line, msg };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if i == 0 {
            let header: Vec<&str> = rec.iter().collect();
            if header.join(",") != RESULTS_HEADER {
                return Err(bad(format!("expected header `{RESULTS_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        if rec.len() != 13 {
            return Err(bad(format!("expected 13 fields, found {}", rec.len())));
        }
        fn num<T: std::str::FromStr>(
            rec: &csv::StringRecord,
            i: usize,
            line: u64,
        ) -> Result<T, BenchError> {
            rec[i].parse().map_err(|_| BenchError::Parse {
                line,
                msg: format!("field {} `{}` is not a number", i + 1, &rec[i]),
            })
        }
        let elapsed_us: f64 = num(&rec, 6, line)?;
        if !(elapsed_us.is_finite() && elapsed_us >= 0.0) {
            return Err(bad(format!("elapsed_us {elapsed_us} must be >= 0")));
        }
        out.push(BenchRecord {
            dataset: rec[0].to_string(),
            format: rec[1].parse().map_err(|e: IndexError| bad(e.to_string()))?,
            index: rec[2].parse().map_err(|e: IndexError| bad(e.to_string()))?,
            op_kind: rec[3].to_string(),
            config_id: num(&rec, 4, line)?,
            run_id: num(&rec, 5, line)?,
            elapsed_us,
            stats: QueryStats {
                nodes_visited: num(&rec, 7, line)?,
                ranges_scanned: num(&rec, 8, line)?,
                candidates_returned: num(&rec, 9, line)?,
                exact_tests: num(&rec, 10, line)?,
                rows_touched: num(&rec, 11, line)?,
            },
            result_size: num(&rec, 12, line)?,
        });
    }
    if !saw_header {
        return Err(BenchError::Parse {
            line: 1,
            msg: format!("missing header `{RESULTS_HEADER}`"),
        });
    }
    Ok(out)
}

/// Run metadata stored next to a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub datasets: Vec<DatasetMeta>,
    pub suite: SuiteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub source: String,
    pub trajectories: usize,
    pub segments: usize,
    pub goc: f64,
    /// Sample size, rounds and seed of the GOC estimate.
    pub goc_n: usize,
    pub goc_p: usize,
    pub goc_seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenKind, GenSpec};

    fn small_suite(modes: Vec<WorkloadMode>) -> SuiteConfig {
        SuiteConfig {
            workload: WorkloadSpec {
                configs_per_type: 5,
                batch_insert_size: 10,
                mixed_ops: 20,
                knn_k: 3,
                ..WorkloadSpec::default()
            },
            modes,
            repetitions: 1,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn read_matrix_record_count_and_index_invariant_results() {
        let ds = generate(&GenSpec::new(GenKind::Skewed, 200, 10, 1)).unwrap();
        let out = run_suite(&ds, &small_suite(vec![WorkloadMode::Read])).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.records.len(), 2 * 4 * 4 * 5);
        assert!(out.records.iter().any(|r| r.index == IndexKind::SeqScan));
        let base: Vec<&BenchRecord> = out
            .records
            .iter()
            .filter(|r| r.index == IndexKind::SeqScan && r.format == StorageFormat::Whole)
            .collect();
        for r in &out.records {
            let b = base
                .iter()
                .find(|b| b.op_kind == r.op_kind && b.config_id == r.config_id)
                .unwrap();
            assert_eq!(b.result_size, r.result_size);
        }
    }

    #[test]
    fn write_and_mixed_modes_run() {
        let ds = generate(&GenSpec::new(GenKind::Random, 150, 5, 2)).unwrap();
        let out = run_suite(
            &ds,
            &small_suite(vec![WorkloadMode::Write, WorkloadMode::Mixed]),
        )
        .unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let writes = out
            .records
            .iter()
            .filter(|r| r.op_kind == "delete_batch")
            .count();
        assert_eq!(writes, 8 * 5);
        let mixed = out
            .records
            .iter()
            .filter(|r| r.op_kind.starts_with("mixed_0.5:"))
            .count();
        assert_eq!(mixed, 8 * 20);
        assert!(out.records.iter().any(|r| r.op_kind == "mixed_0.05:insert"));
    }

    #[test]
    fn records_round_trip_through_csv() {
        let rec = BenchRecord {
            dataset: "a,b".into(),
            format: StorageFormat::Segmented,
            index: IndexKind::BlockRange,
            op_kind: "mixed_0.05:knn".into(),
            config_id: 3,
            run_id: 1,
            elapsed_us: 12.3456,
            stats: QueryStats {
                nodes_visited: 1,
                ranges_scanned: 2,
                candidates_returned: 3,
                exact_tests: 4,
                rows_touched: 5,
            },
            result_size: 6,
        };
        let mut buf = Vec::new();
        write_records(std::slice::from_ref(&rec), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{RESULTS_HEADER}\n")));
        assert!(text.contains(",12.346,"));
        let back = read_records(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].elapsed_us, 12.346);
        assert_eq!(back[0].stats, rec.stats);
        assert_eq!(back[0].dataset, "a,b");
        assert!(read_records("nope\n".as_bytes()).is_err());
        assert!(read_records("".as_bytes()).is_err());
    }
}

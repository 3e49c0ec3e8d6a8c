//! Aggregation of benchmark records: summary statistics, format speedups,
//! the GOC/speedup correlation and the written report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::bench::{write_records, BenchRecord};
use crate::index::{IndexKind, StorageFormat};
use crate::workload::ReadKind;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("empty group")]
    EmptyGroup,
    #[error("need at least 3 points, have {0}")]
    InsufficientPoints(usize),
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
    #[error("no records to report")]
    NoRecords,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub count: usize,
}

/// Mean, median, nearest-rank p95 and the normal-approximation 95% interval
/// `mean ± 1.96·s/√n` with the sample standard deviation `s`.
pub fn summary_stat(values: &[f64]) -> Result<SummaryStat, ReportError> {
    let n = values.len();
    if n == 0 {
        return Err(ReportError::EmptyGroup);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    let p95 = v[rank - 1];
    let half = if n > 1 {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStat {
        mean,
        median,
        p95,
        ci95_low: mean - half,
        ci95_high: mean + half,
        count: n,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub dataset: String,
    pub format: StorageFormat,
    pub index: IndexKind,
    pub op_kind: String,
}

/// Elapsed-time summary per (dataset, format, index, op_kind).
pub fn summarize(records: &[BenchRecord]) -> BTreeMap<CellKey, SummaryStat> {
    let mut groups: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry(CellKey {
                dataset: r.dataset.clone(),
                format: r.format,
                index: r.index,
                op_kind: r.op_kind.clone(),
            })
            .or_default()
            .push(r.elapsed_us);
    }
    groups
        .into_iter()
        .map(|(k, v)| (k, summary_stat(&v).expect("groups are non-empty")))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per dataset: mean segmented elapsed over mean whole elapsed for each
/// read kind on `index`, averaged over the read kinds present in both.
pub fn format_speedups(records: &[BenchRecord], index: IndexKind) -> BTreeMap<String, f64> {
    let mut times: BTreeMap<(&str, &str, StorageFormat), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.index == index) {
        if ReadKind::ALL.iter().any(|k| k.name() == r.op_kind) {
            times
                .entry((&r.dataset, &r.op_kind, r.format))
                .or_default()
                .push(r.elapsed_us);
        }
    }
    let mut ratios: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((ds, kind, format), seg) in &times {
        if *format != StorageFormat::Segmented {
            continue;
        }
        if let Some(whole) = times.get(&(ds, kind, StorageFormat::Whole)) {
            let w = mean(whole);
            if w > 0.0 {
                ratios
                    .entry(ds.to_string())
                    .or_default()
                    .push(mean(seg) / w);
            }
        }
    }
    ratios.into_iter().map(|(d, v)| (d, mean(&v))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    /// `r·√((n−2)/(1−r²))`.
    pub t: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, ReportError> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 3 {
        return Err(ReportError::InsufficientPoints(n));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ReportError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let t = if r.abs() == 1.0 {
        r.signum() * f64::INFINITY
    } else {
        r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt()
    };
    Ok(Correlation { r, t, n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatComparison {
    pub index: IndexKind,
    /// Dataset, its GOC when known, and its speedup.
    pub rows: Vec<(String, Option<f64>, f64)>,
    pub correlation: Result<Correlation, String>,
}

/// Speedups on `index` paired with dataset GOC values, and the Pearson
/// correlation over datasets that have both.
pub fn compare_formats(
    records: &[BenchRecord],
    index: IndexKind,
    goc: &BTreeMap<String, f64>,
) -> FormatComparison {
    let speedups = format_speedups(records, index);
    let rows: Vec<(String, Option<f64>, f64)> = speedups
        .iter()
        .map(|(d, s)| (d.clone(), goc.get(d).copied(), *s))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|(_, g, s)| g.map(|g| (g, *s)))
        .unzip();
    FormatComparison {
        index,
        rows,
        correlation: pearson(&x, &y).map_err(|e| e.to_string()),
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.4}")
    }
}

/// Markdown summary with per-cell tables, the format speedup table and
/// the GOC/speedup pairs.
pub fn render_summary(
    summaries: &BTreeMap<CellKey, SummaryStat>,
    comparison: &FormatComparison,
    records: &[BenchRecord],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Benchmark summary\n");
    let _ = writeln!(s, "{} records.\n", records.len());

    let mut datasets: Vec<&str> = summaries.keys().map(|k| k.dataset.as_str()).collect();
    datasets.dedup();
    for ds in datasets {
        let _ = writeln!(s, "## Dataset `{ds}`\n");
        let mut cells: Vec<(StorageFormat, IndexKind)> = summaries
            .keys()
            .filter(|k| k.dataset == ds)
            .map(|k| (k.format, k.index))
            .collect();
        cells.dedup();
        for (format, index) in cells {
            let _ = writeln!(s, "### {format} / {index}\n");
            let _ = writeln!(
                s,
                "| op_kind | count | mean_us | median_us | p95_us | ci95_low_us | ci95_high_us | mean_candidates | mean_rows_touched |"
            );
            let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|");
            for (k, st) in summaries
                .iter()
                .filter(|(k, _)| k.dataset == ds && k.format == format && k.index == index)
            {
                let group: Vec<&BenchRecord> = records
                    .iter()
                    .filter(|r| {
                        r.dataset == ds
                            && r.format == format
                            && r.index == index
                            && r.op_kind == k.op_kind
                    })
                    .collect();
                let avg = |f: fn(&BenchRecord) -> u64| {
                    group.iter().map(|r| f(r) as f64).sum::<f64>() / group.len() as f64
                };
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.1} | {:.1} |",
                    k.op_kind,
                    st.count,
                    st.mean,
                    st.median,
                    st.p95,
                    st.ci95_low,
                    st.ci95_high,
                    avg(|r| r.stats.candidates_returned),
                    avg(|r| r.stats.rows_touched),
                );
            }
            let _ = writeln!(s);
        }
    }

    let _ = writeln!(
        s,
        "## Format speedup ({} index, segmented / whole mean read latency)\n",
        comparison.index
    );
    let _ = writeln!(s, "| dataset | goc | speedup |");
    let _ = writeln!(s, "|---|---|---|");
    for (d, g, sp) in &comparison.rows {
        let g = g.map_or("n/a".to_string(), |g| format!("{g:.6}"));
        let _ = writeln!(s, "| {d} | {g} | {sp:.4} |");
    }
    let _ = writeln!(s, "\n## GOC vs speedup\n");
    match &comparison.correlation {
        Ok(c) => {
            let _ = writeln!(
                s,
                "Pearson r = {}, t = {}, n = {}",
                fmt_num(c.r),
                fmt_num(c.t),
                c.n
            );
        }
        Err(e) => {
            let _ = writeln!(s, "Pearson r = n/a ({e})");
        }
    }
    s
}

/// Writes `records.csv`, `summary.md`, `cells.csv` and `speedup.csv` into
/// `out_dir`.
pub fn emit_report(
    records: &[BenchRecord],
    goc: &BTreeMap<String, f64>,
    index: IndexKind,
    out_dir: &Path,
) -> Result<FormatComparison, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    fs::create_dir_all(out_dir)?;
    let summaries = summarize(records);
    let comparison = compare_formats(records, index, goc);

    let mut w = BufWriter::new(fs::File::create(out_dir.join("records.csv"))?);
    write_records(records, &mut w)?;
    w.flush()?;

    fs::write(
        out_dir.join("summary.md"),
        render_summary(&summaries, &comparison, records),
    )?;

    let mut w = BufWriter::new(fs::File::create(out_dir.join("cells.csv"))?);
    writeln!(
        w,
        "dataset,format,index,op_kind,count,mean_us,median_us,p95_us,ci95_low_us,ci95_high_us"
    )?;
    for (k, st) in &summaries {
        writeln!(
            w,
            "{},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            k.dataset,
            k.format,
            k.index,
            k.op_kind,
            st.count,
            st.mean,
            st.median,
            st.p95,
            st.ci95_low,
            st.ci95_high
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(out_dir.join("speedup.csv"))?);
    writeln!(w, "dataset,goc,speedup")?;
    for (d, g, sp) in &comparison.rows {
        writeln!(
            w,
            "{},{},{}",
            d,
            g.map_or(String::new(), |g| g.to_string()),
            sp
        )?;
    }
    w.flush()?;
    Ok(comparison)
}

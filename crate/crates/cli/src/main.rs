use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use trajbench::bench::{
    build_workload, read_records, run_suite_with, write_records, BenchRecord, DatasetMeta, RunMeta,
    SuiteConfig, WorkloadMode,
};
use trajbench::datagen::{generate, GenKind, GenSpec};
use trajbench::dataset::Dataset;
use trajbench::geom::Rect;
use trajbench::index::{BackendConfig, IndexKind, StorageFormat};
use trajbench::metrics::{
    approx_ann_with, approx_goc, exact_ann, exact_goc, ApproxParams, DoEstimator,
};
use trajbench::report::emit_report;
use trajbench::workload::WorkloadSpec;

#[derive(Parser)]
#[command(
    name = "trajbench",
    version,
    about = "Trajectory dataset characterization and spatial index benchmarking"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Datagen(DatagenArgs),
    /// Compute the overlap or distribution metric of a dataset.
    Characterize {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Run the benchmark matrix.
    Bench(BenchArgs),
    /// Aggregate results files into a summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Random,
    Even,
    Skewed,
    SkewedOverlap,
}

impl From<KindArg> for GenKind {
    fn from(k: KindArg) -> GenKind {
        match k {
            KindArg::Random => GenKind::Random,
            KindArg::Even => GenKind::Even,
            KindArg::Skewed => GenKind::Skewed,
            KindArg::SkewedOverlap => GenKind::SkewedOverlap,
        }
    }
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, env = "TRAJBENCH_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Bounding box as `min_x,min_y,max_x,max_y`.
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<Rect>,
    /// Mean step length as a fraction of the bbox width.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    hotspots: Option<usize>,
    /// Hotspot spread as a fraction of the bbox width.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    hotspot_fraction: Option<f64>,
    #[arg(long)]
    travel_fraction: Option<f64>,
}

fn parse_bbox(s: &str) -> Result<Rect, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err("expected min_x,min_y,max_x,max_y".into());
    }
    Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Metric {
    /// Global overlap coefficient.
    Goc(MetricArgs),
    /// Average nearest neighbor ratio.
    Ann(MetricArgs),
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, conflicts_with = "approx")]
    exact: bool,
    #[arg(long, requires_all = ["n", "p"])]
    approx: bool,
    /// Sample size per round.
    #[arg(long)]
    n: Option<usize>,
    /// Number of rounds.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, env = "TRAJBENCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Scale the sampled mean distance by total/sample size.
    #[arg(long = "paper-literal-scaling")]
    population_scaled: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Segmented,
    Whole,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexArg {
    Rtree,
    Quadtree,
    Brin,
    Seqscan,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModeArg {
    Read,
    Write,
    Mixed,
}

#[derive(Args)]
struct BenchArgs {
    /// Trajectory CSV files; repeatable.
    #[arg(long, required_unless_present = "gen_spec")]
    input: Vec<PathBuf>,
    /// TOML file with `[[dataset]]` generator specs.
    #[arg(long)]
    gen_spec: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<FormatArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    index: Vec<IndexArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "read")]
    workload: Vec<ModeArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.5, 0.95])]
    read_ratio: Vec<f64>,
    /// Operations per mixed run.
    #[arg(long)]
    mixed_ops: Option<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Workload parameters (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "TRAJBENCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Results CSV; metadata goes to `<out>.meta.toml`.
    #[arg(long)]
    out: PathBuf,
    /// Also write the generated configurations as JSON.
    #[arg(long)]
    dump_workload: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV files; repeatable.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Index whose format speedups are correlated with GOC.
    #[arg(long, value_enum, default_value = "rtree")]
    index: IndexArg,
}

#[derive(Deserialize)]
struct GenSpecFile {
    dataset: Vec<GenSpec>,
}

fn index_kind(i: IndexArg) -> IndexKind {
    match i {
        IndexArg::Rtree => IndexKind::RTree,
        IndexArg::Quadtree => IndexKind::QuadTree,
        IndexArg::Brin => IndexKind::BlockRange,
        IndexArg::Seqscan => IndexKind::SeqScan,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let res = match cli.command {
        Command::Datagen(a) => datagen(a),
        Command::Characterize { metric } => characterize(metric),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn datagen(a: DatagenArgs) -> Result<()> {
    let mut spec = GenSpec::new(a.kind.into(), a.m, a.k, a.seed);
    if let Some(b) = a.bbox {
        spec.bbox = b;
    }
    if let Some(v) = a.step {
        spec.step = v;
    }
    if let Some(v) = a.hotspots {
        spec.hotspots = v;
    }
    if let Some(v) = a.sigma {
        spec.sigma = v;
    }
    if let Some(v) = a.hotspot_fraction {
        spec.hotspot_fraction = v;
    }
    if let Some(v) = a.travel_fraction {
        spec.travel_fraction = v;
    }
    let ds = generate(&spec)?;
    ds.write_csv(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} trajectories, {} points to {}",
        ds.len(),
        ds.point_count(),
        a.out.display()
    );
    Ok(())
}

fn load(path: &Path) -> Result<Dataset> {
    Dataset::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn characterize(metric: Metric) -> Result<()> {
    let (is_goc, a) = match metric {
        Metric::Goc(a) => (true, a),
        Metric::Ann(a) => (false, a),
    };
    if a.exact == a.approx {
        bail!("pass exactly one of --exact or --approx");
    }
    let ds = load(&a.input)?;
    let mut out = io::stdout().lock();
    if a.exact {
        if is_goc {
            let g = exact_goc(&ds)?;
            writeln!(out, "goc exact = {g:.4} ({g})")?;
        } else {
            let r = exact_ann(&ds)?;
            writeln!(
                out,
                "ann exact = {:.4} (ann={} d_o={} d_e={} points={})",
                r.ann, r.ann, r.d_o, r.d_e, r.n_points
            )?;
        }
        return Ok(());
    }
    let params = ApproxParams::new(a.n.unwrap_or(0), a.p.unwrap_or(0), a.seed);
    if is_goc {
        let est = approx_goc(&ds, params)?;
        writeln!(
            out,
            "goc approx n={} p={} seed={} = {:.4} ({})",
            params.n, params.p, params.seed, est.value, est.value
        )?;
    } else {
        let estimator = if a.population_scaled {
            DoEstimator::PopulationScaled
        } else {
            DoEstimator::SampleMean
        };
        let est = approx_ann_with(&ds, params, estimator)?;
        let r = &est.result;
        writeln!(
            out,
            "ann approx n={} p={} seed={} = {:.4} (ann={} d_o={} d_e={} points={})",
            params.n, params.p, params.seed, r.ann, r.ann, r.d_o, r.d_e, r.n_points
        )?;
    }
    Ok(())
}

fn load_workload_spec(path: Option<&Path>) -> Result<WorkloadSpec> {
    match path {
        None => Ok(WorkloadSpec::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct WorkloadDump<'a> {
    dataset: &'a str,
    #[serde(flatten)]
    work: &'a trajbench::bench::DatasetWorkload,
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut datasets: Vec<Dataset> = Vec::new();
    for p in &a.input {
        datasets.push(load(p)?);
    }
    if let Some(p) = &a.gen_spec {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let file: GenSpecFile =
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        for spec in &file.dataset {
            datasets.push(generate(spec)?);
        }
    }
    if datasets.is_empty() {
        bail!("no datasets given");
    }
    let mut names: Vec<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("dataset name `{}` appears twice", w[0]);
    }

    let mut workload = load_workload_spec(a.config.as_deref())?;
    if a.config.is_none() {
        workload.seed = a.seed;
    }
    if let Some(n) = a.mixed_ops {
        workload.mixed_ops = n;
    }
    workload.validate()?;
    if a.reps < 1 {
        bail!("--reps must be at least 1");
    }
    if let Some(r) = a.read_ratio.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        bail!("read ratio {r} must lie in [0, 1]");
    }
    let formats = if a.format.is_empty() {
        StorageFormat::ALL.to_vec()
    } else {
        a.format
            .iter()
            .map(|f| match f {
                FormatArg::Segmented => StorageFormat::Segmented,
                FormatArg::Whole => StorageFormat::Whole,
            })
            .collect()
    };
    let indexes = if a.index.is_empty() {
        IndexKind::ALL.to_vec()
    } else {
        a.index.iter().map(|i| index_kind(*i)).collect()
    };
    let modes = a
        .workload
        .iter()
        .map(|m| match m {
            ModeArg::Read => WorkloadMode::Read,
            ModeArg::Write => WorkloadMode::Write,
            ModeArg::Mixed => WorkloadMode::Mixed,
        })
        .collect();
    let suite = SuiteConfig {
        formats,
        indexes,
        backend: BackendConfig::default(),
        workload,
        modes,
        read_ratios: a.read_ratio.clone(),
        repetitions: a.reps,
        warmup: 1,
    };

    let mut records: Vec<BenchRecord> = Vec::new();
    let mut metas = Vec::new();
    let mut dumps = Vec::new();
    let mut failed = false;
    for ds in &datasets {
        eprintln!("benchmarking {} ({} trajectories)", ds.name, ds.len());
        let goc_n = ds.len().min(100);
        let goc = if goc_n >= 2 {
            approx_goc(ds, ApproxParams::new(goc_n, 100, suite.workload.seed))?.value
        } else {
            0.0
        };
        let work = build_workload(ds, &suite.workload)
            .with_context(|| format!("building workload for {}", ds.name))?;
        let out = run_suite_with(ds, &suite, &work)?;
        for f in &out.failures {
            failed = true;
            eprintln!(
                "cell failed: dataset={} format={} index={} op={}: {}",
                f.dataset, f.format, f.index, f.op_kind, f.message
            );
        }
        records.extend(out.records);
        metas.push(DatasetMeta {
            name: ds.name.clone(),
            source: ds.source.clone(),
            trajectories: ds.len(),
            segments: ds.segment_count(),
            goc,
            goc_n,
            goc_p: 100,
            goc_seed: suite.workload.seed,
        });
        if a.dump_workload.is_some() {
            dumps.push((ds.name.clone(), work));
        }
    }

    let mut w = BufWriter::new(
        fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?,
    );
    write_records(&records, &mut w)?;
    w.flush()?;
    let meta = RunMeta {
        datasets: metas,
        suite,
    };
    fs::write(meta_path(&a.out), toml::to_string(&meta)?)?;
    if let Some(p) = &a.dump_workload {
        let list: Vec<WorkloadDump> = dumps
            .iter()
            .map(|(name, work)| WorkloadDump {
                dataset: name,
                work,
            })
            .collect();
        fs::write(p, serde_json::to_string_pretty(&list)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    eprintln!("wrote {} records to {}", records.len(), a.out.display());
    if failed {
        bail!("some benchmark cells failed");
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    let mut goc: BTreeMap<String, f64> = BTreeMap::new();
    for p in &a.inputs {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        records.extend(
            read_records(io::BufReader::new(f))
                .with_context(|| format!("reading {}", p.display()))?,
        );
        let mp = meta_path(p);
        if mp.exists() {
            let text = fs::read_to_string(&mp)?;
            let meta: RunMeta =
                toml::from_str(&text).with_context(|| format!("parsing {}", mp.display()))?;
            for d in meta.datasets {
                goc.insert(d.name, d.goc);
            }
        }
    }
    let cmp = emit_report(&records, &goc, index_kind(a.index), &a.out)?;
    println!(
        "wrote report for {} records to {}",
        records.len(),
        a.out.display()
    );
    for (d, g, s) in &cmp.rows {
        let g = g.map_or("n/a".to_string(), |g| format!("{g:.6}"));
        println!("{d}: goc={g} speedup={s:.4}");
    }
    match &cmp.correlation {
        Ok(c) => println!("pearson r={:.4} t={:.4} n={}", c.r, c.t, c.n),
        Err(e) => println!("pearson r=n/a ({e})"),
    }
    Ok(())
}

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use flarebench::experiments::{self, RunConfig};
use flarebench::features::FeatureSet;
use flarebench::harness::{ExperimentId, Normalization, Remedy};
use flarebench::ingest::{self, MANIFEST_FILE};
use flarebench::svm::{Kernel, SvmConfig};
use flarebench::synthgen::{self, GenConfig};
use flarebench::{Error, Real};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_TRIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "imbench", version, about = "Class-imbalance and temporal-coherence workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic partitioned dataset
    Gen(GenArgs),
    /// Extract statistical features from a dataset
    Extract(ExtractArgs),
    /// Run experiments on extracted features
    Run(RunArgs),
    /// Rebuild summary and plot tables from a results file
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// key=value file; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    partitions: Option<usize>,
    /// Events per class as X,M,C,B,N
    #[arg(long)]
    events: Option<String>,
    #[arg(long)]
    params: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    slices: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    variance_signal: Option<f64>,
    /// Comma-separated amplitude multiplier per partition
    #[arg(long)]
    amplitude: Option<String>,
    /// Scale of the shape-carrying white noise, in units of sigma
    #[arg(long)]
    shape_noise: Option<f64>,
    #[arg(long)]
    missing_rate: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: Common,
    /// LAST, STD, FOUR, ALL or stats joined by '+'
    #[arg(long)]
    features: Option<String>,
    /// Where feature files go; defaults to the data directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated experiment ids, e.g. Z,A,D
    #[arg(long)]
    experiments: Option<String>,
    #[arg(long)]
    remedy: Option<String>,
    #[arg(long)]
    normalization: Option<String>,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Flags merged over an optional key=value file.
struct Settings {
    file: HashMap<String, String>,
    path: Option<PathBuf>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        let mut file = HashMap::new();
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("{}:{}: expected key=value", p.display(), i + 1))
                })?;
                file.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
        }
        Ok(Settings {
            file,
            path: path.map(Path::to_path_buf),
        })
    }

    fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, Error> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                let from = self.path.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
                Error::Config(format!("{from}: bad value {v:?} for {key}"))
            }),
        }
    }

    fn dir(&self, key: &str, flag: Option<PathBuf>, default: &str) -> Result<PathBuf, Error> {
        Ok(self.get(key, flag)?.unwrap_or_else(|| PathBuf::from(default)))
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("bad {what} {p:?}"))))
        .collect()
}

fn cmd_gen(a: GenArgs) -> Result<(), Error> {
    let s = Settings::load(a.common.config.as_deref())?;
    let dir = s.dir("data_dir", a.common.data_dir, "data")?;
    let mut cfg = GenConfig {
        seed: s.get("seed", a.common.seed)?.unwrap_or(0),
        ..GenConfig::default()
    };
    if let Some(v) = s.get("partitions", a.partitions)? {
        cfg.n_partitions = v;
    }
    if let Some(v) = s.get::<String>("events", a.events)? {
        let c: Vec<usize> = parse_list(&v, "event count")?;
        if c.len() != 5 {
            return Err(Error::Config("--events needs five counts X,M,C,B,N".into()));
        }
        cfg.events_per_class = flarebench::ClassCounts::new(c[0], c[1], c[2], c[3], c[4]);
    }
    if let Some(v) = s.get("params", a.params)? {
        cfg.n_params = v;
    }
    if let Some(v) = s.get("steps", a.steps)? {
        cfg.steps_per_slice = v;
    }
    if let Some(v) = s.get("slices", a.slices)? {
        cfg.slices_per_event = v;
    }
    cfg.stride = s.get("stride", a.stride)?.or(cfg.stride);
    if let Some(v) = s.get("phi", a.phi)? {
        cfg.phi = v;
    }
    if let Some(v) = s.get("delta", a.delta)? {
        cfg.delta = v;
    }
    if let Some(v) = s.get("sigma", a.sigma)? {
        cfg.sigma = v;
    }
    if let Some(v) = s.get("variance_signal", a.variance_signal)? {
        cfg.variance_signal = v;
    }
    if let Some(v) = s.get::<String>("amplitude", a.amplitude)? {
        cfg.amplitude = parse_list(&v, "amplitude")?;
    }
    if let Some(v) = s.get("shape_noise", a.shape_noise)? {
        cfg.shape_noise = v;
    }
    let rate = s.get("missing_rate", a.missing_rate)?.unwrap_or(synthgen::DEFAULT_MISSING_RATE);

    let t = Instant::now();
    let mut ds: flarebench::Dataset = synthgen::generate(&cfg)?;
    let masked = synthgen::inject_missing(&mut ds, rate, cfg.seed)?;
    ingest::write_dataset(&dir, &ds)?;
    eprintln!(
        "wrote {} slices in {} partitions ({masked} missing cells) to {} in {:.1}s",
        ds.n_slices(),
        ds.partitions.len(),
        dir.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<(), Error> {
    let s = Settings::load(a.common.config.as_deref())?;
    let dir = s.dir("data_dir", a.common.data_dir, "data")?;
    let out = s.get("out_dir", a.out_dir)?.unwrap_or_else(|| dir.clone());
    let fs = s
        .get::<FeatureSet>("features", a.features.map(|f| f.parse()).transpose()?)?
        .unwrap_or_else(FeatureSet::all);
    let t = Instant::now();
    let ds: flarebench::Dataset = ingest::read_dataset(&dir.join(MANIFEST_FILE))?;
    let features = experiments::extract_dataset(&ds, &fs)?;
    let columns = fs.column_names(&ds.param_names);
    experiments::save_feature_dir(&out, &features, &columns)?;
    eprintln!(
        "extracted {} columns for {} slices into {} in {:.1}s",
        columns.len(),
        ds.n_slices(),
        out.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Returns the number of failed trials.
fn cmd_run(a: RunArgs) -> Result<usize, Error> {
    let s = Settings::load(a.common.config.as_deref())?;
    let dir = s.dir("data_dir", a.common.data_dir, "data")?;
    let out = s.dir("out_dir", a.out_dir, "results")?;
    let mut cfg = RunConfig::<Real> {
        seed: s.get("seed", a.common.seed)?.unwrap_or(0),
        ..RunConfig::default()
    };
    if let Some(v) = s.get::<String>("experiments", a.experiments)? {
        cfg.experiments = parse_list::<ExperimentId>(&v, "experiment")?;
    }
    cfg.remedy = s.get::<Remedy>("remedy", a.remedy.map(|r| r.parse()).transpose()?)?;
    cfg.normalization = s.get::<Normalization>("normalization", a.normalization.map(|r| r.parse()).transpose()?)?;
    cfg.features = s.get::<FeatureSet>("features", a.features.map(|r| r.parse()).transpose()?)?;
    let mut svm = SvmConfig::<Real>::default();
    if let Some(c) = s.get("c", a.c)? {
        svm.c = c;
    }
    if let Some(g) = s.get("gamma", a.gamma)? {
        svm.kernel = Kernel::rbf(g);
    }
    svm.validate()?;
    cfg.svm = svm;
    if let Some(r) = s.get("repeats", a.repeats)? {
        cfg.repeats = r;
    }
    if let Some(k) = s.get("folds", a.folds)? {
        cfg.folds = k;
    }
    cfg.jobs = s.get("jobs", a.jobs)?.unwrap_or(0);

    let features = experiments::load_feature_dir::<Real>(&dir)?;
    let t = Instant::now();
    let outcome = experiments::run_experiments(&cfg, features)?;
    let aggs = experiments::write_run(&out, &outcome)?;
    for (spec, err) in &outcome.failures {
        eprintln!("trial {} failed: {err}", spec.label());
    }
    eprintln!(
        "{} trials ok, {} failed, {} summary rows in {} ({:.1}s)",
        outcome.results.len(),
        outcome.failures.len(),
        aggs.len(),
        out.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(outcome.failures.len())
}

fn cmd_report(a: ReportArgs) -> Result<(), Error> {
    let s = Settings::load(a.config.as_deref())?;
    let out = s.dir("out_dir", a.out_dir, "results")?;
    let aggs = experiments::report::<Real>(&out)?;
    eprintln!("{} summary rows written to {}", aggs.len(), out.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Sampling(_) => EXIT_CONFIG,
        Error::Trial { .. } | Error::Training(_) | Error::Leakage(_) => EXIT_TRIAL,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| 0),
        Command::Extract(a) => cmd_extract(a).map(|_| 0),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a).map(|_| 0),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_TRIAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

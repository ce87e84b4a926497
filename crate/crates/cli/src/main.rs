use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stl_core::bench::{
    init_threads_from_env, load_raw_csv, write_feature_csv, write_feature_vectors, write_labels_csv,
};
use stl_core::features::features_from_streams;
use stl_core::{run_task, synth_shift, KernelSpec, Method, Protocol, StlConfig, StlError, TaskSpec};

#[derive(Parser)]
#[command(name = "stl", version, about = "Stratified transfer learning for cross-domain classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn raw tri-axial sensor CSVs into windowed feature vectors.
    Features(FeaturesArgs),
    /// Label a target domain and report accuracy over shuffled repeats.
    Run(RunArgs),
    /// Write a synthetic source/target pair with a known shift.
    Synth(SynthArgs),
}

#[derive(clap::Args)]
struct FeaturesArgs {
    /// Raw `t,x,y,z[,label]` file; repeat once per sensor (27 features each).
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Sampling rate in Hz.
    #[arg(long)]
    rate: f64,
    /// Window length in seconds.
    #[arg(long, default_value_t = 5.0)]
    window: f64,
    /// Fraction of each window shared with the next.
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Stl,
    Global,
    Pca,
    #[value(name = "source_only")]
    SourceOnly,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Stl => Method::Stl,
            MethodArg::Global => Method::Global,
            MethodArg::Pca => Method::Pca,
            MethodArg::SourceOnly => Method::SourceOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Labeled source feature CSV.
    #[arg(long)]
    source: PathBuf,
    /// Target feature CSV; a `label` column is used only for scoring.
    #[arg(long)]
    target: PathBuf,
    /// Target labels (single `label` column).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "stl")]
    method: MethodArg,
    /// Subspace dimension.
    #[arg(long, default_value_t = 30)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// Fixed rbf bandwidth; the median pairwise distance when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Seeds both the shuffles and the classifiers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Translation of the target along the first axis.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    shift: f64,
    /// Spread of the target blobs relative to the source.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Writes `<prefix>source.csv`, `<prefix>target.csv`, `<prefix>truth.csv`.
    #[arg(long, default_value = "synth_")]
    out_prefix: String,
}

fn features(args: &FeaturesArgs) -> stl_core::Result<()> {
    let streams = args
        .inputs
        .iter()
        .map(|p| load_raw_csv(p, args.rate))
        .collect::<stl_core::Result<Vec<_>>>()?;
    let vectors = features_from_streams(&streams, args.window, args.overlap)?;
    write_feature_vectors(&args.out, &vectors)?;
    eprintln!(
        "wrote {} windows x {} features to {}",
        vectors.len(),
        vectors.first().map_or(0, |v| v.values.len()),
        args.out.display()
    );
    Ok(())
}

fn run(args: &RunArgs) -> stl_core::Result<()> {
    let mut config = StlConfig::with_seed(args.seed);
    config.transfer.dim = args.dim;
    config.transfer.lambda = args.lambda;
    config.max_iterations = args.iters;
    config.kernel = match (args.kernel, args.sigma) {
        (KernelArg::Linear, _) => KernelSpec::Linear,
        (KernelArg::Rbf, Some(s)) => KernelSpec::rbf(s),
        (KernelArg::Rbf, None) => KernelSpec::default(),
    };
    let spec = TaskSpec {
        source_path: args.source.clone(),
        target_path: args.target.clone(),
        truth_path: args.truth.clone(),
        protocol: Protocol {
            method: args.method.into(),
            config,
            repeats: args.repeats,
            shuffle_seed: args.seed,
        },
    };
    let report = run_task(&spec)?;
    let json = report.to_json()?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, json)?;
            println!("{}", report.summary());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn prefixed(prefix: &str, name: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{name}"))
}

fn synth(args: &SynthArgs) -> stl_core::Result<()> {
    let (src, tgt) = synth_shift(args.classes, args.per_class, args.dim, &[args.shift], args.scale, args.seed)?;
    let paths = [
        prefixed(&args.out_prefix, "source.csv"),
        prefixed(&args.out_prefix, "target.csv"),
        prefixed(&args.out_prefix, "truth.csv"),
    ];
    if let Some(dir) = paths[0].parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_feature_csv(&paths[0], src.x(), Some(src.y()))?;
    write_feature_csv(&paths[1], tgt.x(), None)?;
    write_labels_csv(&paths[2], tgt.y())?;
    for p in &paths {
        eprintln!("wrote {}", display(p));
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn exit_code(e: &StlError) -> u8 {
    if e.is_input_error() {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = init_threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Features(a) => features(a),
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

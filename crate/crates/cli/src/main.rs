//! `tse-kit`: cost analysis, reference forward passes and context
//! experiments for squeeze-and-excite style attention.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tse_core::context::{
    constant_channels, correlation_profile, delta_scaling_experiment, synthetic_correlation, trial_rng, ContextReport,
    REPORT_SCHEMA,
};
use tse_core::cost::FlopConvention;
use tse_core::io::{read_tensor, read_weights, write_tensor, write_weights};
use tse_core::{
    analyze_network_with, load_descriptor, save_descriptor, se_forward, zoo, Error, ExciteConfig, ExciteWeights,
    NetworkDescriptor, Result, Tensor4D, TileSpec, TseBlock,
};

#[derive(Parser)]
#[command(name = "tse-kit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Flops {
    /// Excitation convolutions and their biases.
    ExciteOnly,
    /// Also count pooling adds and rescale multiplies.
    Elementwise,
}

#[derive(Subcommand)]
enum Command {
    /// Buffering, FLOPs and parameters of a network's attention blocks.
    Analyze {
        /// Descriptor file, or the name of a bundled network.
        descriptor: String,
        #[arg(long, default_value = "full")]
        tile: TileSpec,
        /// Excitation, e.g. `c3x1:r2`; without `:r` the network's own ratio is used.
        #[arg(long, default_value = "c1x1")]
        excite: ExciteConfig,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long, value_enum, default_value = "excite-only")]
        flops: Flops,
    },
    /// Run one attention block on a stored tensor.
    Forward {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value = "full")]
        tile: TileSpec,
        /// Checked against the weights when given.
        #[arg(long)]
        excite: Option<ExciteConfig>,
        #[arg(long)]
        out: PathBuf,
        /// Use the plain SE implementation instead of the tiled one.
        #[arg(long, conflicts_with = "tile")]
        reference_se: bool,
    },
    /// Tile/global correlation and delta-scaling experiments (JSON report).
    Context {
        /// Tensor to analyse; omit with --synthetic.
        #[arg(long, required_unless_present_any = ["synthetic", "delta_scaling"])]
        input: Option<PathBuf>,
        /// Average over random smooth tensors instead of a file.
        #[arg(long, conflicts_with = "input")]
        synthetic: bool,
        #[arg(long, value_delimiter = ',', default_value = "strip-rows:1,strip-rows:7,full")]
        tiles: Vec<TileSpec>,
        #[arg(long, env = "TSE_KIT_SEED", default_value_t = 0)]
        seed: u64,
        /// Number of synthetic tensors.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Synthetic tensor shape `NxCxHxW`.
        #[arg(long, default_value = "1x32x28x28", value_parser = parse_shape)]
        shape: [usize; 4],
        /// Also run the delta-vs-tile-size scaling experiment.
        #[arg(long)]
        delta_scaling: bool,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
        sizes: Vec<usize>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled network descriptors, or write them out.
    Descriptors {
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Generate random inputs for `forward`.
    #[command(subcommand)]
    Gen(Gen),
}

#[derive(Subcommand)]
enum Gen {
    /// Standard-normal tensor.
    Tensor {
        #[arg(long, value_parser = parse_shape)]
        shape: [usize; 4],
        #[arg(long, env = "TSE_KIT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fan-in scaled uniform excitation weights.
    Weights {
        #[arg(long)]
        channels: usize,
        #[arg(long, default_value = "c1x1:r4")]
        excite: ExciteConfig,
        #[arg(long, env = "TSE_KIT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_shape(s: &str) -> std::result::Result<[usize; 4], String> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|d| d.parse().map_err(|_| format!("bad dimension `{d}` in `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    let dims: [usize; 4] = dims
        .try_into()
        .map_err(|_| format!("shape `{s}` must have 4 dimensions"))?;
    if dims.contains(&0) {
        return Err(format!("shape `{s}` has a zero dimension"));
    }
    Ok(dims)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A path that exists wins; otherwise a bundled network of that name.
fn resolve_descriptor(arg: &str) -> Result<NetworkDescriptor> {
    let path = Path::new(arg);
    if !path.exists() && path.components().count() == 1 {
        if let Some(d) = zoo::shipped(arg) {
            return d;
        }
    }
    load_descriptor(path)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serialises");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            descriptor,
            tile,
            excite,
            format,
            flops,
        } => {
            let desc = resolve_descriptor(&descriptor)?;
            let conv = match flops {
                Flops::ExciteOnly => FlopConvention::EXCITE_ONLY,
                Flops::Elementwise => FlopConvention::ELEMENTWISE,
            };
            let report = analyze_network_with(&desc, tile, &excite, conv)?;
            let text = match format {
                Format::Table => report.render_table(),
                Format::Json => to_json(&report),
            };
            emit(&text, None)
        }
        Command::Forward {
            input,
            weights,
            tile,
            excite,
            out,
            reference_se,
        } => {
            let x = read_tensor(&input)?;
            let w = read_weights(&weights)?;
            if x.c() != w.channels() {
                return Err(Error::InvalidArgument(format!(
                    "input tensor {:?} has {} channels; weights {}x{} expect {}",
                    x.dims(),
                    x.c(),
                    w.channels(),
                    w.reduced(),
                    w.channels()
                )));
            }
            if let Some(conf) = excite {
                w.check_config(&conf)?;
            }
            let y = if reference_se {
                se_forward(&x, &w)?
            } else {
                TseBlock::new(w, tile)?.forward(&x)?
            };
            write_tensor(&y, &out)
        }
        Command::Context {
            input,
            synthetic,
            tiles,
            seed,
            samples,
            shape,
            delta_scaling,
            trials,
            sigma,
            sizes,
            out,
        } => {
            let (source, tensors, correlations, constant) = if let Some(path) = input {
                let x = read_tensor(&path)?;
                let constant = constant_channels(&x);
                (
                    path.display().to_string(),
                    1,
                    correlation_profile(&x, &tiles)?,
                    constant,
                )
            } else if synthetic {
                let c = synthetic_correlation(shape, &tiles, samples, seed)?;
                ("synthetic".to_string(), samples, c, Vec::new())
            } else {
                ("none".to_string(), 0, Vec::new(), Vec::new())
            };
            let delta_stats = if delta_scaling {
                Some(delta_scaling_experiment(sigma, &sizes, trials, seed)?)
            } else {
                None
            };
            let report = ContextReport {
                schema: REPORT_SCHEMA.to_string(),
                source,
                seed: (synthetic || delta_scaling).then_some(seed),
                tensors,
                correlations,
                constant_channels: constant,
                delta_stats,
            };
            for (n, c) in &report.constant_channels {
                eprintln!("warning: sample {n} channel {c} is constant; its correlation is undefined");
            }
            emit(&to_json(&report), out.as_deref())
        }
        Command::Descriptors { export } => {
            if let Some(dir) = export {
                std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                for name in zoo::shipped_names() {
                    let d = zoo::shipped(name).expect("listed")?;
                    save_descriptor(&d, dir.join(format!("{name}.json")))?;
                }
                return Ok(());
            }
            let mut text = format!("{:<26} {:>11} {:>7} {:>10}\n", "name", "input", "blocks", "SE buffer");
            for name in zoo::shipped_names() {
                let d = zoo::shipped(name).expect("listed")?;
                let se = tse_core::analyze_network(&d, TileSpec::Full, &ExciteConfig::default())?;
                text.push_str(&format!(
                    "{:<26} {:>11} {:>7} {:>10}\n",
                    name,
                    format!("{}x{}", d.input[0], d.input[1]),
                    d.blocks.len(),
                    tse_core::cost::format_millions(se.buffer)
                ));
            }
            emit(&text, None)
        }
        Command::Gen(Gen::Tensor { shape, seed, out }) => {
            let x = Tensor4D::random_normal(shape, 1.0, &mut trial_rng(seed, 0))?;
            write_tensor(&x, &out)
        }
        Command::Gen(Gen::Weights {
            channels,
            excite,
            seed,
            out,
        }) => {
            let w = ExciteWeights::kaiming_uniform(channels, &excite, &mut trial_rng(seed, 0))?;
            write_weights(&w, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}

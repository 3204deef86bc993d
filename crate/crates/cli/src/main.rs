//! `scribseg` command-line tool. Exit codes: 0 success, 1 usage error, 2 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use scribseg::harness::{
    batch_params, dataset_ids, run_batch, write_phantom_dataset, BatchOptions, MethodSpec,
    PhantomSpec, Timing, GT_SUFFIX, STACK_SUFFIX,
};
use scribseg::{
    dice_sweep, euclidean_edt, geodesic_exact, geodesic_raster, l1_normalize, mask_to_scribbles,
    normalize_map, pca_features, read_channel_stack, read_mask_pgm, read_scribbles,
    rgb_reconstruct, skeletonize, write_channel_stack, write_scribbles, BandWeights, Connectivity,
    DistanceMap, DistanceParams, Error, DEFAULT_SWEEP_STEPS,
};
use scribseg_service::{AppState, ServiceConfig};

#[derive(Parser, Debug)]
#[command(
    name = "scribseg",
    version,
    about = "Scribble-driven segmentation of multi-channel images"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// L1-normalize every pixel spectrum.
    Normalize { input: PathBuf, output: PathBuf },
    /// Project spectra onto their top principal components.
    Features {
        #[arg(long)]
        k: u32,
        input: PathBuf,
        output: PathBuf,
    },
    /// Reconstruct a 3-channel RGB stack from band weights.
    Rgb {
        input: PathBuf,
        output: PathBuf,
        /// JSON {"r": [...], "g": [...], "b": [...]}; defaults to band thirds.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Geodesic distance map from scribbles (raw values).
    Geodesic {
        input: PathBuf,
        #[arg(long)]
        scribbles: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Use the exact shortest-path solver instead of raster sweeps.
        #[arg(long)]
        exact: bool,
        /// Maximum forward/backward sweep pairs.
        #[arg(long, default_value_t = 4)]
        iters: u32,
        /// Neighbourhood size, 4 or 8.
        #[arg(long, default_value = "8", value_parser = parse_connectivity)]
        connectivity: Connectivity,
    },
    /// Exact Euclidean distance to the nearest scribble.
    Euclid {
        #[arg(long)]
        scribbles: PathBuf,
        /// Image size as HxW.
        #[arg(long, value_parser = parse_size)]
        size: (u32, u32),
        output: PathBuf,
    },
    /// Dice against ground truth over a threshold grid; writes CSV and a JSON summary.
    Sweep {
        map: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SWEEP_STEPS)]
        steps: usize,
        output: PathBuf,
    },
    /// Skeletonize a ground-truth mask into scribble points.
    Skeletonize { gt: PathBuf, output: PathBuf },
    /// Evaluate every method on a dataset directory of <id>.cst + <id>.gt.pgm.
    Eval {
        dataset: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_SWEEP_STEPS)]
        steps: usize,
        /// Write 0 runtimes so reports are byte-reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Write a synthetic phantom dataset.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_parser = parse_size, default_value = "128x128")]
        size: (u32, u32),
        #[arg(long, default_value_t = 8)]
        channels: u32,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Dataset directory whose images are preloaded as sessions named by image id.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory of built UI assets served at /.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Idle minutes before a session is dropped.
        #[arg(long, default_value_t = 30)]
        ttl_minutes: u64,
    },
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let dim = |v: &str| {
        v.trim()
            .parse::<u32>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("bad dimension {v:?} in {s:?}"))
    };
    Ok((dim(h)?, dim(w)?))
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    s.parse::<u32>()
        .ok()
        .and_then(|n| Connectivity::from_count(n).ok())
        .ok_or_else(|| format!("connectivity must be 4 or 8, got {s:?}"))
}

fn write_map(map: &DistanceMap, path: &Path) -> scribseg::Result<()> {
    write_channel_stack(&map.to_stack(), path)?;
    println!("{}", path.display());
    Ok(())
}

fn write_stack(stack: &scribseg::ChannelStack, path: &Path) -> scribseg::Result<()> {
    write_channel_stack(stack, path)?;
    println!("{}", path.display());
    Ok(())
}

fn run(command: Command) -> scribseg::Result<()> {
    match command {
        Command::Normalize { input, output } => {
            write_stack(&l1_normalize(&read_channel_stack(&input)?), &output)
        }
        Command::Features { k, input, output } => {
            write_stack(&pca_features(&read_channel_stack(&input)?, k)?, &output)
        }
        Command::Rgb {
            input,
            output,
            weights,
        } => {
            let stack = read_channel_stack(&input)?;
            let weights = match weights {
                Some(path) => BandWeights::read(path)?,
                None => BandWeights::band_thirds(stack.channels()),
            };
            write_stack(&rgb_reconstruct(&stack, &weights)?, &output)
        }
        Command::Geodesic {
            input,
            scribbles,
            output,
            lambda,
            exact,
            iters,
            connectivity,
        } => {
            let stack = read_channel_stack(&input)?;
            let (h, w) = stack.dims();
            let seeds = read_scribbles(&scribbles, h, w)?;
            let params = DistanceParams {
                max_iterations: iters,
                ..DistanceParams::default()
                    .with_lambda(lambda)
                    .with_connectivity(connectivity)
            };
            let map = if exact {
                geodesic_exact(&stack, &seeds, &params)?
            } else {
                geodesic_raster(&stack, &seeds, &params)?
            };
            write_map(&map, &output)
        }
        Command::Euclid {
            scribbles,
            size: (h, w),
            output,
        } => {
            let seeds = read_scribbles(&scribbles, h, w)?;
            write_map(&euclidean_edt(&seeds, h, w)?, &output)
        }
        Command::Sweep {
            map,
            gt,
            steps,
            output,
        } => {
            let map = normalize_map(&DistanceMap::from_stack(&read_channel_stack(&map)?)?);
            let curve = dice_sweep(&map, &read_mask_pgm(&gt)?, steps)?;
            curve.write(&output)?;
            println!("{}", curve.summary_json());
            Ok(())
        }
        Command::Skeletonize { gt, output } => {
            let scribbles = mask_to_scribbles(&skeletonize(&read_mask_pgm(&gt)?))?;
            write_scribbles(&scribbles, &output)?;
            println!("{}", output.display());
            Ok(())
        }
        Command::Eval {
            dataset,
            output,
            lambda,
            steps,
            no_timing,
        } => {
            let options = BatchOptions {
                n_steps: steps,
                timing: if no_timing {
                    Timing::Disabled
                } else {
                    Timing::WallClock
                },
            };
            let report = run_batch(
                &dataset,
                &MethodSpec::standard(batch_params(lambda)),
                &output,
                &options,
            )?;
            if !report.skipped.is_empty() {
                log::warn!("{} images skipped, see skipped.csv", report.skipped.len());
            }
            print!("{}", report.aggregate_csv());
            Ok(())
        }
        Command::Phantom {
            out,
            count,
            noise,
            seed,
            size: (height, width),
            channels,
        } => {
            let spec = PhantomSpec {
                height,
                width,
                channels,
                noise_sigma: noise,
            };
            for path in write_phantom_dataset(&out, count, &spec, seed)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Serve {
            port,
            data,
            ui,
            ttl_minutes,
        } => {
            let state = AppState::new(ServiceConfig {
                session_ttl: Duration::from_secs(ttl_minutes * 60),
                static_dir: ui,
                ..ServiceConfig::default()
            });
            if let Some(dir) = data {
                preload(&state, &dir)?;
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(scribseg_service::serve_on_port(port, state))?;
            Ok(())
        }
    }
}

/// Registers each dataset image as a session whose id is the image id.
fn preload(state: &AppState, dir: &Path) -> scribseg::Result<()> {
    for id in dataset_ids(dir)? {
        let stack = read_channel_stack(dir.join(format!("{id}{STACK_SUFFIX}")))?;
        let gt_path = dir.join(format!("{id}{GT_SUFFIX}"));
        let gt = if gt_path.exists() {
            Some(read_mask_pgm(&gt_path)?)
        } else {
            None
        };
        state.insert_session(id.clone(), stack, gt)?;
        log::info!("preloaded session {id}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

fn describe(e: &Error) -> String {
    let mut text = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        text.push_str(&format!(": {s}"));
        source = s.source();
    }
    text
}

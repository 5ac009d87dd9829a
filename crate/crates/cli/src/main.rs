use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stacksvd::harness::{
    eval_embedding, load_labels, load_matrix, run_experiment, save_matrix, save_report, Design, SimConfig,
};
use stacksvd::theory::{phase_grid, render_phase_svg, write_phase_csv, PhaseConfig};
use stacksvd::{
    average_svd, individual_svd, select_svd, shared_svd, stack_svd, trace_shared, trace_shared_multi, DenseMatrix,
    Error, NoiseDistribution, Result,
};

#[derive(Parser)]
#[command(
    name = "stacksvd",
    version,
    about = "Shared singular subspace estimation across noisy matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo simulation preset and write a CSV report.
    Simulate {
        #[arg(long, value_parser = ["table1", "table2", "table3"])]
        preset: String,
        #[arg(long, default_value_t = 1)]
        row: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, value_enum, default_value_t = Noise::Gaussian)]
        noise: Noise,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the full report, including per-trial values, as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Estimate a shared subspace from CSV matrices and write it as CSV.
    Estimate {
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        method: Method,
        /// Target rank; for `shared`, the signal rank of every input.
        #[arg(long)]
        rank: Option<usize>,
        /// Per-input signal ranks for `shared`.
        #[arg(long, value_delimiter = ',')]
        ranks: Vec<usize>,
        /// 1-based stacked positions for `select`.
        #[arg(long, value_delimiter = ',')]
        indices: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identify the shared singular vectors in the stack of two matrices.
    Trace {
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long = "rank-1")]
        rank_1: usize,
        #[arg(long = "rank-2")]
        rank_2: usize,
        #[arg(long, requires = "k2")]
        k1: Option<usize>,
        #[arg(long, requires = "k1")]
        k2: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the SNR phase diagram.
    Phase {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p1: usize,
        #[arg(long)]
        p2: usize,
        /// `MIN:MAX:STEPS` for both SNR axes.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score a labelled embedding.
    EvalEmbedding {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 30)]
        neighborhood: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Stack,
    Individual,
    Average,
    Shared,
    Select,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Gaussian,
    Rademacher,
    Uniform,
}

impl From<Noise> for NoiseDistribution {
    fn from(n: Noise) -> Self {
        match n {
            Noise::Gaussian => NoiseDistribution::Gaussian,
            Noise::Rademacher => NoiseDistribution::Rademacher,
            Noise::Uniform => NoiseDistribution::Uniform,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            preset,
            row,
            trials,
            seed,
            out,
            tau,
            noise,
            workers,
            json,
        } => {
            let mut cfg = SimConfig::preset(Design::from_preset(&preset, row)?, trials, seed);
            cfg.tau = tau;
            cfg.noise = noise.into();
            cfg.workers = workers;
            let report = run_experiment(&cfg)?;
            save_report(&report, &out)?;
            if let Some(path) = json {
                write_json(&path, &report)?;
            }
            for r in &report.rows {
                eprintln!("{:<18} mean {:.6}  std {:.6}", r.estimator.as_str(), r.mean, r.std);
            }
            eprintln!(
                "{} trials, {} flagged, {:.2}s",
                report.trials, report.flagged, report.elapsed_secs
            );
            Ok(())
        }
        Command::Estimate {
            inputs,
            method,
            rank,
            ranks,
            indices,
            out,
        } => {
            let ys = load_all(&inputs)?;
            let need_rank = || rank.ok_or_else(|| Error::Contract("--rank is required for this method".into()));
            let est = match method {
                Method::Stack => stack_svd(&ys, need_rank()?)?,
                Method::Average => average_svd(&ys, need_rank()?)?,
                Method::Individual => {
                    if ys.len() != 1 {
                        return Err(Error::Contract("individual takes exactly one input".into()));
                    }
                    individual_svd(&ys[0], need_rank()?)?
                }
                Method::Select => select_svd(&ys, &indices)?,
                Method::Shared => {
                    let ranks = if ranks.is_empty() {
                        vec![need_rank()?; ys.len()]
                    } else {
                        ranks
                    };
                    let (est, trace) = shared_svd(&ys, &ranks)?;
                    eprintln!(
                        "unshared counts {:?}, shared positions {:?}",
                        trace.unshared_counts, trace.shared_index_estimate
                    );
                    est
                }
            };
            save_matrix(&DenseMatrix::new(est.frame.into_inner())?, &out)
        }
        Command::Trace {
            inputs,
            rank_1,
            rank_2,
            k1,
            k2,
            out,
        } => {
            let ys = load_all(&inputs)?;
            if ys.len() != 2 {
                return Err(Error::Contract(format!("trace takes two inputs, got {}", ys.len())));
            }
            let trace = match (k1, k2) {
                (Some(k1), Some(k2)) => {
                    let r = rank_1
                        .checked_sub(k1)
                        .zip(rank_2.checked_sub(k2))
                        .map(|(a, b)| a.min(b))
                        .ok_or_else(|| Error::Contract("unshared counts exceed the ranks".into()))?;
                    trace_shared(&ys[0], &ys[1], k1, k2, r)?
                }
                _ => trace_shared_multi(&ys, &[rank_1, rank_2])?,
            };
            write_json(&out, &trace)
        }
        Command::Phase {
            n,
            p1,
            p2,
            grid,
            out,
            svg,
        } => {
            let (min, max, steps) = parse_grid(&grid)?;
            let points = phase_grid(n, p1, p2, min, max, steps, &PhaseConfig::default())?;
            write_phase_csv(&points, File::create(&out)?)?;
            if let Some(path) = svg {
                std::fs::write(path, render_phase_svg(&points)?)?;
            }
            Ok(())
        }
        Command::EvalEmbedding {
            embedding,
            labels,
            neighborhood,
            out,
        } => {
            let e = load_matrix(&embedding)?;
            let l = load_labels(&labels)?;
            write_json(&out, &eval_embedding(&e, &l, neighborhood)?)
        }
    }
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<DenseMatrix>> {
    paths.iter().map(load_matrix).collect()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let bad = || Error::Config(format!("--grid expects MIN:MAX:STEPS, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, steps] = parts[..] else {
        return Err(bad());
    };
    Ok((
        min.parse().map_err(|_| bad())?,
        max.parse().map_err(|_| bad())?,
        steps.parse().map_err(|_| bad())?,
    ))
}

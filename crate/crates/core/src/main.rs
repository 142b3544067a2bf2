use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sde_horizon::assumptions::{check_model, DomainSampler};
use sde_horizon::harness::{order_study, parse_ladder, run, ExperimentConfig, OrderSettings};
use sde_horizon::model::{builtin_model, Params};

#[derive(Parser)]
#[command(name = "sde-horizon", version, about = "Long-time experiments for backward Euler-Maruyama")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Full-size run: 1000 paths, horizon 200 for strong_error.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a built-in model's assumption constants on a sampled ball.
    Check {
        model: String,
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print CSV instead of the text report.
        #[arg(long)]
        csv: bool,
    },
    /// Fit the strong convergence order over a ladder of step sizes.
    Order {
        model: String,
        #[arg(long, default_value = "2^-5..2^-9")]
        h_ladder: String,
        #[arg(long, default_value_t = 2000)]
        paths: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Model parameter as `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = v.trim().parse().map_err(|_| format!("bad value in `{s}`"))?;
    Ok((k.trim().to_string(), v))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> sde_horizon::Result<bool> {
    match command {
        Command::Run {
            config,
            paper_scale,
            seed,
            out,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if paper_scale {
                cfg.paper_scale();
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            let manifest = run(&cfg)?;
            println!("{} on {} -> {}", cfg.experiment, cfg.model, cfg.output_dir.display());
            for (k, v) in &manifest.summary {
                println!("  {k}: {v}");
            }
            for (name, _) in &manifest.outputs {
                println!("  wrote {name}");
            }
            for f in &manifest.flags {
                eprintln!("flag: {f}");
            }
            println!("  wall time {:.1} s", manifest.wall_time_s);
            Ok(manifest.success())
        }
        Command::Check {
            model,
            radius,
            samples,
            seed,
            csv,
        } => {
            let builtin = builtin_model(&model, &Params::new())?;
            let constants = builtin.constants.as_ref().ok_or_else(|| {
                sde_horizon::Error::NotFound(format!("{model} has no assumption constants to check"))
            })?;
            let dim = builtin.model.dim();
            let sampler = DomainSampler::new(dim, radius).with_random(samples).with_seed(seed);
            let report = check_model(&builtin.model, constants, builtin.residual.as_ref(), &sampler)?;
            if csv {
                print!("{}", report.to_csv(dim));
            } else {
                print!("{}", report.to_text(dim));
            }
            Ok(report.all_pass())
        }
        Command::Order {
            model,
            h_ladder,
            paths,
            p,
            horizon,
            seed,
            params,
            workers,
        } => {
            let ladder = parse_ladder(&h_ladder)?;
            let params: Params = params.into_iter().collect();
            let settings = OrderSettings {
                p,
                horizon,
                n_paths: paths,
                seed,
                workers,
                ..OrderSettings::default()
            };
            let study = order_study(&model, &params, &ladder, &settings)?;
            println!("# oracle {:?}, p = {p}, T = {horizon}, {paths} paths", study.oracle);
            println!("h,error,stderr");
            for pt in &study.points {
                println!("{:.16e},{:.16e},{:.16e}", pt.h, pt.error, pt.stderr);
            }
            println!(
                "# slope {:.4} intercept {:.4} r2 {:.5}",
                study.fit.slope, study.fit.intercept, study.fit.r2
            );
            Ok(true)
        }
    }
}

//! `varfast`: generate images, count operations, verify bounds, compare
//! modes and sweep the degree frontier.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use varfast::metrics::phase::c_grid;
use varfast::metrics::verify::{run_all, SuiteSizes};
use varfast::metrics::{bench, phase_sweep};
use varfast::{inf_norm_diff, run_end_to_end, ExecutionMode};

use config::{parse_pairs, RunConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_RANGE: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "varfast", version, about = "Visual autoregressive pipeline with exact and low-rank attention")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// exact | fast
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output directory for `generate`.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    alpha: Option<usize>,
    #[arg(long = "num-scales", global = true)]
    num_scales: Option<usize>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long = "r-bound", global = true)]
    r_bound: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long = "g-max", global = true)]
    g_max: Option<usize>,
    /// bspline | catmullrom
    #[arg(long, global = true)]
    kernel: Option<String>,
    /// compact | classic
    #[arg(long = "decoder-depth", global = true)]
    decoder_depth: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one seed end to end; writes image.f64 and trace.json.
    Generate,
    /// Operation counts per depth, mode and stage as CSV, with fitted slopes.
    Bench {
        #[arg(long = "k-min", default_value_t = 3)]
        k_min: usize,
        #[arg(long = "k-max", default_value_t = 6)]
        k_max: usize,
    },
    /// Run the bound suites and print a JSON summary per suite.
    Verify {
        /// Trials for B1, B2, B5, C1; B4 uses a fifth, mode_equiv a tenth.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long = "rhs-scale", default_value_t = 1.0, hide = true)]
        rhs_scale: f64,
    },
    /// Run EXACT and FAST on the same seed and check the composed bound.
    Compare,
    /// Degree needed as R = c sqrt(ln n) grows, as CSV.
    Phase {
        #[arg(long, default_value_t = 4096)]
        n: usize,
        /// Comma-separated ascending c values; default 0.05, 0.10, ..., 2.00.
        #[arg(long = "c-list")]
        c_list: Option<String>,
    },
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut text = String::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                text.push_str(&format!("{k} = {v}\n"));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("mode", self.mode.clone());
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("num_scales", self.num_scales.map(|v| v.to_string()));
        push("d", self.d.map(|v| v.to_string()));
        push("r_bound", self.r_bound.map(|v| v.to_string()));
        push("delta", self.delta.map(|v| v.to_string()));
        push("g_max", self.g_max.map(|v| v.to_string()));
        push("kernel", self.kernel.clone());
        push("decoder_depth", self.decoder_depth.clone());
        base.apply(&parse_pairs(&text)?)
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("VARFAST_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("VARFAST_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("VARFAST_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn generate(cfg: &RunConfig, out: &PathBuf) -> Result<u8> {
    let run = run_end_to_end(cfg.seed, &cfg.model, cfg.mode)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let image_path = out.join("image.f64");
    let trace_path = out.join("trace.json");
    std::fs::write(&image_path, output::image_bytes(&run.image))?;
    std::fs::write(&trace_path, output::to_json(&run.trace)?)?;
    let (h, w, c) = run.image.shape();
    println!("wrote {} ({h}x{w}x{c}) and {}", image_path.display(), trace_path.display());
    Ok(0)
}

fn run_bench(cfg: &RunConfig, k_min: usize, k_max: usize) -> Result<u8> {
    let table = bench(&cfg.model, cfg.seed, k_min, k_max, &ExecutionMode::BOTH)?;
    print!("{}", output::bench_csv(&table));
    Ok(0)
}

fn verify(cfg: &RunConfig, trials: usize, rhs_scale: f64) -> Result<u8> {
    if trials == 0 {
        bail!("--trials must be >= 1");
    }
    let reports = run_all(SuiteSizes::from_trials(trials), cfg.seed, &cfg.model, rhs_scale);
    let summaries: std::collections::BTreeMap<_, _> = reports.iter().map(|(k, r)| (k.clone(), r.summary())).collect();
    println!("{}", output::to_json(&summaries)?);
    Ok(if reports.values().all(|r| r.passed()) { 0 } else { EXIT_VIOLATION })
}

fn compare(cfg: &RunConfig) -> Result<u8> {
    let exact = run_end_to_end(cfg.seed, &cfg.model, ExecutionMode::Exact)?;
    let fast = run_end_to_end(cfg.seed, &cfg.model, ExecutionMode::Fast)?;
    let diff = inf_norm_diff(&fast.image, &exact.image)?;
    let report = output::CompareReport {
        inf_norm_diff: diff,
        composed_bound: fast.trace.composed_bound,
        pass: diff <= fast.trace.composed_bound,
    };
    println!("{}", output::to_json(&report)?);
    Ok(if report.pass { 0 } else { EXIT_VIOLATION })
}

fn phase(cfg: &RunConfig, n: usize, c_list: Option<&str>) -> Result<u8> {
    let cs = match c_list {
        None => c_grid(0.05, 40),
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad c value '{t}'")))
            .collect::<Result<Vec<_>>>()?,
    };
    let rows = phase_sweep(n, &cs, cfg.model.delta, cfg.model.g_max, cfg.model.d, cfg.seed)?;
    print!("{}", output::phase_csv(&rows));
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    let cfg = cli.common.run_config()?;
    match cli.command {
        Command::Generate => generate(&cfg, &cli.common.out),
        Command::Bench { k_min, k_max } => run_bench(&cfg, k_min, k_max),
        Command::Verify { trials, rhs_scale } => verify(&cfg, trials, rhs_scale),
        Command::Compare => compare(&cfg),
        Command::Phase { n, c_list } => phase(&cfg, n, c_list.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let range = matches!(e.downcast_ref::<varfast::Error>(), Some(varfast::Error::RangeTooLarge { .. }));
            ExitCode::from(if range { EXIT_RANGE } else { EXIT_ERROR })
        }
    }
}

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wavemap_core::harness::{eoc_study, parse_config_text, run, write_eoc_csv, RunConfig};
use wavemap_core::Error;

#[derive(Parser)]
#[command(
    name = "wavemap",
    version,
    about = "Sphere-valued wave maps with a posteriori time-step control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation.
    Run(Common),
    /// Fixed-step self-convergence study against a fine reference run.
    Eoc {
        #[command(flatten)]
        common: Common,
        /// Comma separated step sizes, coarse to fine.
        #[arg(long, default_value = "0.0078125,0.00390625,0.001953125,0.0009765625")]
        taus: String,
        /// Reference step size.
        #[arg(long, default_value_t = 2f64.powi(-13))]
        tau_ref: f64,
    },
}

#[derive(Args)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `fixed` or `adaptive`.
    #[arg(long)]
    mode: Option<String>,
    /// Step size (initial step in adaptive mode).
    #[arg(long)]
    tau: Option<f64>,
    /// Cells per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Final time.
    #[arg(long)]
    tend: Option<f64>,
    /// `equidistribute` or `updated`.
    #[arg(long)]
    strategy: Option<String>,
    /// Base tolerance of the controller.
    #[arg(long)]
    tol0: Option<f64>,
    /// Initial data: `bubble`, `constant` or `rotation`.
    #[arg(long)]
    data: Option<String>,
    /// Dump residual fields of the step containing this time (debugging).
    #[arg(long, value_name = "T")]
    dump_residuals: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut pairs: Vec<(String, String)> = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                parse_config_text(&text)?
            }
            None => Vec::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("mode", self.mode.clone());
        set("tau", self.tau.map(|v| v.to_string()));
        set("grid", self.grid.map(|v| v.to_string()));
        set("tend", self.tend.map(|v| v.to_string()));
        set("strategy", self.strategy.clone());
        set("tol0", self.tol0.map(|v| v.to_string()));
        set("data", self.data.clone());
        set("dump_residuals", self.dump_residuals.map(|v| v.to_string()));
        RunConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::StepFloor { .. } => 2,
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // bad flags are configuration errors; keep 2 free for StepFloor
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.cmd {
        Cmd::Run(c) => do_run(c),
        Cmd::Eoc {
            common,
            taus,
            tau_ref,
        } => do_eoc(common, taus, *tau_ref),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wavemap: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn do_run(c: &Common) -> Result<(), Error> {
    let cfg = c.config()?;
    let traj = run(&cfg)?;
    println!(
        "t = {:.6}  steps = {}  rejected = {}  B = {:e}  energy drift = {:e}  unit defect = {:e}",
        traj.final_time(),
        traj.accepted_steps(),
        traj.rejected_steps(),
        traj.estimator.bound,
        traj.max_energy_drift(),
        traj.max_unit_defect(),
    );
    if let Some(t) = traj.estimator_stopped {
        println!("estimator stopped at t = {t:.6}: step too large for the bounds");
    }
    Ok(())
}

fn do_eoc(c: &Common, taus: &str, tau_ref: f64) -> Result<(), Error> {
    let cfg = c.config()?;
    let taus: Vec<f64> = taus
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad step size '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    let rows = eoc_study(&cfg, &taus, tau_ref)?;
    for r in &rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        println!(
            "tau = {:e}  err_w = {:e} ({})  err_gu = {:e} ({})",
            r.tau,
            r.err_w,
            f(r.eoc_w),
            r.err_gu,
            f(r.eoc_gu)
        );
    }
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        write_eoc_csv(
            &rows,
            BufWriter::new(fs::File::create(dir.join("eoc.csv"))?),
        )?;
    }
    Ok(())
}

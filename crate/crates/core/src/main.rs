use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fredstab::closed_loop::{write_metric_report, MetricRow};
use fredstab::config::{Config, SimMode};
use fredstab::feedback::feedback_kernel_h;
use fredstab::kernel::{l2_norm, piecewise_h1_seminorm};
use fredstab::synth::synthesize_kernel_with_tol;
use fredstab::{
    fattorini_check, make_grid, sample_kernel, simulate_closed_loop, simulate_dirichlet,
    simulate_periodic, spectrum, stabilization_metric, ControlSignal, Result, SampledKernel,
};

#[derive(Parser)]
#[command(name = "fredstab", version, about = "Finite-time stabilization of transport with a Fredholm integral term")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open-loop run (sim.mode = dirichlet | periodic) with a constant control.
    Simulate(Args),
    /// Eigenvalues, observation values and eigenfunctions for |k| <= N.
    Spectrum(Args),
    /// Fattorini verdict.
    Fattorini(Args),
    /// Backstepping kernel k* with its diagnostics.
    Synthesize(Args),
    /// Full pipeline ending with the closed-loop metric report.
    ClosedLoop(Args),
    /// Closed-loop metric over successive doublings of n and N.
    Convergence(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Configuration file (key=value lines).
    config: PathBuf,
    /// Output directory, overriding out.dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        std::fs::create_dir_all(&cfg.out_dir)?;
        cfg.write_resolved(&cfg.out_dir)?;
        Ok(cfg)
    }
}

fn sampled(cfg: &Config, cells: usize) -> Result<SampledKernel> {
    let grid = make_grid(cfg.length, cells)?;
    let sk = sample_kernel(&cfg.kernel_function(&grid)?, &grid)?;
    let norm = l2_norm(&sk);
    let h1 = piecewise_h1_seminorm(&sk);
    if norm > 0.0 && h1 > 1e3 * norm {
        eprintln!("warning: kernel difference quotients are large (H1 seminorm {h1:.3e}, L2 norm {norm:.3e})");
    }
    Ok(sk)
}

fn simulate(cfg: &Config) -> Result<()> {
    let sk = sampled(cfg, cfg.cells)?;
    let grid = *sk.grid();
    let u0 = cfg.initial_state(&grid)?;
    let steps = grid.steps_for(cfg.horizon)?;
    let control = ControlSignal::constant(cfg.control_value, steps + 1, grid.dt());
    let traj = match cfg.sim_mode {
        SimMode::Dirichlet => simulate_dirichlet(&sk, &u0, &control, cfg.horizon, None)?,
        SimMode::Periodic => simulate_periodic(&sk, &u0, &control, cfg.horizon)?,
    };
    traj.write_csv(&cfg.out_dir.join("trajectory.csv"))?;
    control.write_csv(&cfg.out_dir.join("control.csv"))
}

fn run_spectrum(cfg: &Config) -> Result<()> {
    let sk = sampled(cfg, cfg.cells)?;
    let spec = spectrum(&sk, cfg.order)?;
    spec.write_csv(&cfg.out_dir.join("spectrum.csv"))?;
    spec.write_eigenfunctions_csv(&cfg.out_dir.join("eigenfunctions.csv"))
}

fn fattorini(cfg: &Config) -> Result<()> {
    let sk = sampled(cfg, cfg.cells)?;
    let verdict = fattorini_check(&sk, cfg.tol_fattorini)?;
    verdict.write_csv(&cfg.out_dir.join("fattorini.csv"), &cfg.out_dir.join("fattorini_status.csv"))?;
    println!("{}", verdict.status_label());
    Ok(())
}

fn synthesize(cfg: &Config) -> Result<()> {
    let sk = sampled(cfg, cfg.cells)?;
    let syn = synthesize_kernel_with_tol(&sk, cfg.order, cfg.tol_fattorini)?;
    syn.write_csv(&cfg.out_dir)?;
    syn.steering.write_csv(&cfg.out_dir.join("steering_control.csv"))
}

fn pipeline(cfg: &Config, cells: usize, order: usize, out: Option<&Path>) -> Result<MetricRow> {
    let sk = sampled(cfg, cells)?;
    let grid = *sk.grid();
    fattorini_check(&sk, cfg.tol_fattorini)?.require()?;
    let syn = synthesize_kernel_with_tol(&sk, order, cfg.tol_fattorini)?;
    let fk = feedback_kernel_h(&syn, cfg.tol_invert)?;
    let u0 = cfg.initial_state(&grid)?;
    let traj = simulate_closed_loop(&sk, &u0, &fk.law, cfg.horizon)?;
    let metric = stabilization_metric(&traj)?;
    if let Some(dir) = out {
        syn.write_csv(dir)?;
        fk.write_csv(&dir.join("feedback.csv"), &dir.join("feedback_diagnostics.csv"))?;
        traj.write_csv(&dir.join("trajectory.csv"))?;
    }
    Ok(MetricRow { n: cells, order, metric, sigma_min: fk.sigma_min, pde_residual: syn.diagnostics.pde_residual })
}

fn closed_loop(cfg: &Config) -> Result<()> {
    let row = pipeline(cfg, cfg.cells, cfg.order, Some(&cfg.out_dir))?;
    println!("metric {:e}", row.metric);
    write_metric_report(&cfg.out_dir.join("metric.csv"), &[row])
}

fn convergence(cfg: &Config) -> Result<()> {
    let mut rows = Vec::with_capacity(cfg.convergence_levels);
    for level in 0..cfg.convergence_levels {
        let scale = 1usize << level;
        let row = pipeline(cfg, cfg.cells * scale, cfg.order * scale, None)?;
        println!("n={} N={} metric {:e}", row.n, row.order, row.metric);
        rows.push(row);
    }
    write_metric_report(&cfg.out_dir.join("convergence.csv"), &rows)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a.load()?),
        Command::Spectrum(a) => run_spectrum(&a.load()?),
        Command::Fattorini(a) => fattorini(&a.load()?),
        Command::Synthesize(a) => synthesize(&a.load()?),
        Command::ClosedLoop(a) => closed_loop(&a.load()?),
        Command::Convergence(a) => convergence(&a.load()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share status 1 with config errors; 2 is reserved
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landau_nls::experiments::{cmd_check, cmd_converge_eps, cmd_scattering, cmd_simulate, parse_settings, Command, ExperimentSpec};
use landau_nls::Error;

#[derive(Parser)]
#[command(name = "landau-nls", version, about = "NLS under strong magnetic confinement: simulations and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate one model and write diagnostics, snapshots and a plot.
    Simulate(Common),
    /// Compare the ε-flow against its limit over a list of ε.
    ConvergeEps(Common),
    /// Long-time comparison of the ε-flow, the limit and the resonant system.
    Scattering(Common),
    /// Run the invariant suite; exits with 3 if any check fails.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// eps-nls, limit-nls or fr.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    #[arg(long)]
    lz: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other config key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                parse_settings(&text)?
            }
            None => Vec::new(),
        };
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("model", self.model.clone());
        push("eps", self.eps.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("t_end", self.t_end.map(|v| v.to_string()));
        push("dt", self.dt.map(|v| v.to_string()));
        push("n_max", self.nmax.map(|v| v.to_string()));
        push("n_z", self.nz.map(|v| v.to_string()));
        push("l_z", self.lz.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn execute(command: Command, common: &Common) -> Result<(), Error> {
    let spec = ExperimentSpec::from_settings(command, &common.settings()?)?;
    let mut progress = |msg: &str| eprintln!("{msg}");
    eprintln!("{}: config hash {}", command.name(), spec.config_hash());
    match command {
        Command::Simulate => {
            let report = cmd_simulate(&spec, &mut progress)?;
            for f in &report.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::ConvergeEps => {
            let report = cmd_converge_eps(&spec, &mut progress)?;
            for r in &report.rows {
                eprintln!("eps {:<8} sup L2 {:.3e}  sup S {:.3e}", r.eps, r.err_l2, r.err_s);
            }
            eprintln!("fitted slope {:.3}", report.slope);
        }
        Command::Scattering => {
            let report = cmd_scattering(&spec, &mut progress)?;
            for r in &report.runs {
                eprintln!("alpha {:<8} dW slope {:.3}", r.alpha, r.dw_slope);
            }
            for (name, ratio) in &report.ratios {
                eprintln!("ratio {name} {ratio:.3}");
            }
        }
        Command::Check => {
            let report = cmd_check(&spec, &mut progress)?;
            for item in &report.items {
                let verdict = if item.passed() { "ok  " } else { "FAIL" };
                eprintln!("{verdict} {:<34} {:.3e} (tol {:.1e})", item.name, item.measured, item.tolerance);
            }
            report.ensure()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are config errors (1); 2 is reserved for numerical aborts
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, common) = match &cli.command {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::ConvergeEps(c) => (Command::ConvergeEps, c),
        Sub::Scattering(c) => (Command::Scattering, c),
        Sub::Check(c) => (Command::Check, c),
    };
    match execute(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

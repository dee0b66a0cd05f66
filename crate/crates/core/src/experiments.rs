//! Experiment drivers: flat `key = value` configs, the four commands and
//! their output files.
//!
//! Every command writes into `out_dir` only; progress goes to the supplied
//! callback. Outputs are deterministic for a fixed config (parallel sweeps
//! collect in input order, reductions have a fixed order).

use std::f64::consts::{E, PI};
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::basis::{build_basis, Mode, Operator};
use crate::diagnostics::{format_value, DiagnosticsSeries};
use crate::dynamics::{profile_dt_max, run, step_fr, step_limit, step_strang_eps, strang_dt_max, Integrator, Model, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::field::{margins, propagate, save_snapshot, Flow, Space, SpectralField};
use crate::nonlinear::{f_av, f_av_with, fixtures, partial_resonant, required_theta_k, resonant_sum_oracle, ThetaRule};
use crate::norms::{angular_momentum, level_energy, s_norm, z_norm, NormConfig};
use crate::plot::loglog_png;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ConvergeEps,
    Scattering,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ConvergeEps => "converge_eps",
            Command::Scattering => "scattering",
            Command::Check => "check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "simulate" => Ok(Command::Simulate),
            "converge_eps" => Ok(Command::ConvergeEps),
            "scattering" => Ok(Command::Scattering),
            "check" => Ok(Command::Check),
            other => Err(Error::Config(format!("unknown command '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// `α·(h00 + a·h10) ⊗ e^{−z²/(2σ²)}`.
    Gaussian,
    /// Seeded random packet of unit mass, scaled by `α`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareNorm {
    L2,
    S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub command: Command,
    pub sim: SimConfig,
    pub alpha: f64,
    pub alpha_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub z_width: f64,
    pub admixture: f64,
    pub init: InitKind,
    pub compare_norm: CompareNorm,
    /// Spacing of compared snapshots in sweeps.
    pub sample_dt: f64,
    pub out_dir: PathBuf,
}

fn with_quadrature_defaults(mut sim: SimConfig) -> SimConfig {
    sim.m_quad = 2 * sim.n_max + 2;
    sim.theta_k = required_theta_k(sim.n_max);
    sim
}

impl ExperimentSpec {
    pub fn defaults(command: Command) -> Self {
        let mut spec = ExperimentSpec {
            command,
            sim: SimConfig::default(),
            alpha: 0.1,
            alpha_list: vec![0.1],
            eps_list: vec![0.2],
            z_width: 1.0,
            admixture: 0.0,
            init: InitKind::Gaussian,
            compare_norm: CompareNorm::S,
            sample_dt: 0.05,
            out_dir: PathBuf::from("out"),
        };
        match command {
            Command::Simulate | Command::Check => {}
            Command::ConvergeEps => {
                spec.sim.integrator = Integrator::ProfileRk4;
                spec.sim.t_end = 2.0;
                spec.sim.dt = 0.01;
                spec.eps_list = vec![0.4, 0.2, 0.1, 0.05];
            }
            Command::Scattering => {
                spec.sim.n_z = 256;
                spec.sim.l_z = 256.0;
                spec.sim.t_end = 50.0;
                spec.sim.dt = 0.1;
                spec.z_width = 2.0;
                spec.alpha = 0.05;
                spec.alpha_list = vec![0.05, 0.025];
                spec.sample_dt = 0.5;
            }
        }
        spec
    }

    /// Builds a spec from ordered `key = value` settings (file first, then
    /// overrides). `m_quad` and `theta_k` default to their minimal exact
    /// values for the final `n_max`.
    pub fn from_settings(command: Command, settings: &[(String, String)]) -> Result<Self> {
        let mut spec = Self::defaults(command);
        let (mut m_quad, mut theta_k) = (None, None);
        for (key, value) in settings {
            let key = canonical_key(key);
            match key.as_str() {
                "m_quad" => m_quad = Some(parse_num::<usize>(&key, value)?),
                "theta_k" => theta_k = Some(parse_num::<usize>(&key, value)?),
                "command" => {
                    if Command::parse(value)? != command {
                        return Err(Error::Config(format!("config is for '{value}', not '{}'", command.name())));
                    }
                }
                _ => spec.apply(&key, value)?,
            }
        }
        spec.sim = with_quadrature_defaults(spec.sim);
        if let Some(m) = m_quad {
            spec.sim.m_quad = m;
        }
        if let Some(k) = theta_k {
            spec.sim.theta_k = k;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => {
                self.sim.model = match v.replace('-', "_").as_str() {
                    "eps_nls" => Model::EpsNls,
                    "limit_nls" | "l_nls" => Model::LimitNls,
                    "fr" | "full_resonant" => Model::FullResonant,
                    _ => return Err(Error::Config(format!("unknown model '{v}'"))),
                }
            }
            "integrator" => {
                self.sim.integrator = match v.replace('-', "_").as_str() {
                    "strang" => Integrator::Strang,
                    "profile_rk4" | "rk4" => Integrator::ProfileRk4,
                    _ => return Err(Error::Config(format!("unknown integrator '{v}'"))),
                }
            }
            "eps" => self.sim.eps = parse_num(key, v)?,
            "lambda" => self.sim.lambda = parse_num(key, v)?,
            "n_max" => self.sim.n_max = parse_num(key, v)?,
            "n_z" => self.sim.n_z = parse_num(key, v)?,
            "l_z" => self.sim.l_z = parse_num(key, v)?,
            "dealias" => self.sim.dealias = parse_num(key, v)?,
            "dt" => self.sim.dt = parse_num(key, v)?,
            "t_end" => self.sim.t_end = parse_num(key, v)?,
            "stride" => self.sim.stride = parse_num(key, v)?,
            "seed" => self.sim.seed = parse_num(key, v)?,
            "s_sigma" => self.sim.norms.s_sigma = parse_num(key, v)?,
            "delta" => self.sim.norms.delta = parse_num(key, v)?,
            "alpha" => {
                self.alpha = parse_num(key, v)?;
                self.alpha_list = vec![self.alpha, self.alpha / 2.0];
            }
            "alpha_list" => {
                self.alpha_list = parse_list(key, v)?;
                self.alpha = self.alpha_list[0];
            }
            "eps_list" => self.eps_list = parse_list(key, v)?,
            "z_width" => self.z_width = parse_num(key, v)?,
            "admixture" => self.admixture = parse_num(key, v)?,
            "init" => {
                self.init = match v {
                    "gaussian" => InitKind::Gaussian,
                    "random" => InitKind::Random,
                    _ => return Err(Error::Config(format!("unknown init '{v}'"))),
                }
            }
            "norm" => {
                self.compare_norm = match v {
                    "l2" => CompareNorm::L2,
                    "s" => CompareNorm::S,
                    _ => return Err(Error::Config(format!("unknown norm '{v}'"))),
                }
            }
            "sample_dt" => self.sample_dt = parse_num(key, v)?,
            "out" => self.out_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.alpha_list.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("alpha_list entries must be >= 0".into());
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("eps_list entries must lie in (0, 1]".into());
        }
        if !(self.z_width > 0.0 && self.z_width.is_finite()) {
            return bad(format!("z_width must be positive, got {}", self.z_width));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return bad(format!("sample_dt must be positive, got {}", self.sample_dt));
        }
        if self.admixture != 0.0 && self.sim.n_max == 0 {
            return bad("admixture needs n_max >= 1".into());
        }
        if self.sim.m_quad < 2 * self.sim.n_max + 2 {
            return Err(Error::QuadratureTooCoarse { n_max: self.sim.n_max, m_quad: self.sim.m_quad, required: 2 * self.sim.n_max + 2 });
        }
        if self.command == Command::ConvergeEps && self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_list must be strictly decreasing".into());
        }
        if self.command == Command::Scattering && self.sim.t_end < 1.0 {
            return Err(Error::InvalidParameter(format!("scattering needs t_end >= 1, got {}", self.sim.t_end)));
        }
        match self.command {
            Command::Simulate => self.sim.validate(),
            _ => self.sim.norms.validate(),
        }
    }

    /// Canonical `key=value` rendering of every setting that affects results.
    pub fn canonical(&self) -> String {
        let s = &self.sim;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("command", self.command.name().into());
        put("model", format!("{:?}", s.model));
        put("integrator", format!("{:?}", s.integrator));
        put("eps", format!("{:?}", s.eps));
        put("lambda", format!("{:?}", s.lambda));
        put("n_max", s.n_max.to_string());
        put("m_quad", s.m_quad.to_string());
        put("n_z", s.n_z.to_string());
        put("l_z", format!("{:?}", s.l_z));
        put("dealias", s.dealias.to_string());
        put("dt", format!("{:?}", s.dt));
        put("t_end", format!("{:?}", s.t_end));
        put("theta_k", s.theta_k.to_string());
        put("stride", s.stride.to_string());
        put("seed", s.seed.to_string());
        put("s_sigma", format!("{:?}", s.norms.s_sigma));
        put("delta", format!("{:?}", s.norms.delta));
        put("alpha", format!("{:?}", self.alpha));
        put("alpha_list", list(&self.alpha_list));
        put("eps_list", list(&self.eps_list));
        put("z_width", format!("{:?}", self.z_width));
        put("admixture", format!("{:?}", self.admixture));
        put("init", format!("{:?}", self.init));
        put("norm", format!("{:?}", self.compare_norm));
        put("sample_dt", format!("{:?}", self.sample_dt));
        out
    }

    /// SHA-256 of [`canonical`](Self::canonical); the output directory is excluded.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), self.command.name().into()),
            ("config_hash".into(), self.config_hash()),
            ("code_version".into(), env!("CARGO_PKG_VERSION").into()),
        ]
    }
}

fn canonical_key(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase().replace('-', "_");
    match k.as_str() {
        "nmax" => "n_max".into(),
        "nz" => "n_z".into(),
        "lz" => "l_z".into(),
        "tend" => "t_end".into(),
        _ => k,
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("cannot parse '{v}' for {key}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key} is empty")));
    }
    Ok(out)
}

/// Parses a flat config: one `key = value` per line, `#` starts a comment.
pub fn parse_settings(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        if k.trim().is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn initial_data(spec: &ExperimentSpec, space: &Arc<Space>, alpha: f64) -> Result<SpectralField> {
    let a = Complex64::new(alpha, 0.0);
    match spec.init {
        InitKind::Random => Ok(SpectralField::random(space, spec.sim.seed).scaled(a)),
        InitKind::Gaussian => {
            let mut modes = vec![(Mode::new(0, 0), a)];
            if spec.admixture != 0.0 {
                modes.push((Mode::new(1, 0), a * spec.admixture));
            }
            let s2 = 2.0 * spec.z_width * spec.z_width;
            SpectralField::separable(space, &modes, |z| Complex64::new((-z * z / s2).exp(), 0.0))
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_series(path: &Path, series: &DiagnosticsSeries) -> Result<()> {
    series.write_csv(BufWriter::new(fs::File::create(path)?))?;
    Ok(())
}

fn write_meta(path: &Path, meta: &[(String, String)]) -> Result<()> {
    let text: String = meta.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    write_text(path, &text)
}

/// CSV with a header row and `{:.16e}` values.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Plotting is best effort: a failure is reported and otherwise ignored.
fn plot(path: &Path, series: &[(Vec<f64>, Vec<f64>)], progress: &mut dyn FnMut(&str)) -> bool {
    match loglog_png(path, series) {
        Ok(()) => true,
        Err(e) => {
            progress(&format!("plot {} skipped: {e}", path.display()));
            false
        }
    }
}

fn tag(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Config sampling `[0, t_end]` every `sample_dt` with the largest step
/// `≤ bound` that divides `sample_dt`.
fn sampled(base: &SimConfig, model: Model, integrator: Integrator, eps: f64, bound: f64, sample_dt: f64) -> SimConfig {
    let sub = ((sample_dt / bound) - 1e-9).ceil().max(1.0) as usize;
    let n_samples = (base.t_end / sample_dt + 1e-9).floor();
    SimConfig { eps, model, integrator, dt: sample_dt / sub as f64, stride: sub, t_end: n_samples * sample_dt, ..base.clone() }
}

fn eps_bound(integrator: Integrator, eps: f64, n_max: usize) -> f64 {
    match integrator {
        // half the stiffness bound keeps splitting errors far below the compared differences
        Integrator::Strang => strang_dt_max(eps) / 2.0,
        Integrator::ProfileRk4 => profile_dt_max(eps, n_max),
    }
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub trajectory: Trajectory,
    pub files: Vec<PathBuf>,
}

pub fn cmd_simulate(spec: &ExperimentSpec, progress: &mut dyn FnMut(&str)) -> Result<SimulateReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let space = spec.sim.build_space()?;
    let u0 = initial_data(spec, &space, spec.alpha)?;
    let n_steps = spec.sim.n_steps();
    let every = (n_steps / 10).max(1);
    let mut traj = crate::dynamics::run_with_progress(&spec.sim, &u0, |k, n| {
        if k % every == 0 || k == n {
            progress(&format!("simulate: step {k}/{n}"));
        }
    })?;
    traj.diagnostics.meta = spec.meta();
    let dir = &spec.out_dir;
    let mut files = vec![dir.join("simulate.csv"), dir.join("simulate.meta"), dir.join("initial.mnls"), dir.join("final.mnls")];
    write_series(&files[0], &traj.diagnostics)?;
    traj.diagnostics.write_meta(BufWriter::new(fs::File::create(&files[1])?))?;
    save_snapshot(&files[2], &u0)?;
    save_snapshot(&files[3], traj.last())?;
    let rows = &traj.diagnostics.rows;
    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let png = dir.join("simulate.png");
    if plot(&png, &[(t.clone(), rows.iter().map(|r| r.s_norm).collect()), (t, rows.iter().map(|r| r.dt_s).collect())], progress) {
        files.push(png);
    }
    Ok(SimulateReport { trajectory: traj, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeRow {
    pub eps: f64,
    pub err_l2: f64,
    pub err_z: f64,
    pub err_s: f64,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergeReport {
    pub rows: Vec<ConvergeRow>,
    /// Fitted `log err / log ε` in the comparison norm.
    pub slope: f64,
    /// `err(ε_{i+1}) / err(ε_i)` in the comparison norm.
    pub ratios: Vec<f64>,
}

fn sup_difference(a: &[SpectralField], b: &[SpectralField], norm: impl Fn(&SpectralField) -> f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| norm(&(x - y))).fold(0.0, f64::max)
}

pub fn cmd_converge_eps(spec: &ExperimentSpec, progress: &mut dyn FnMut(&str)) -> Result<ConvergeReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let base = &spec.sim;
    let space = base.build_space()?;
    let u0 = initial_data(spec, &space, spec.alpha)?;
    let limit_cfg = sampled(base, Model::LimitNls, base.integrator, base.eps, base.dt.min(crate::dynamics::SLOW_DT_MAX), spec.sample_dt);
    progress("converge_eps: limit run");
    let w = run(&limit_cfg, &u0)?;
    write_series(&spec.out_dir.join("converge_eps_limit.csv"), &w.diagnostics)?;
    let norms = base.norms;
    let results: Vec<Result<(ConvergeRow, Trajectory)>> = spec
        .eps_list
        .par_iter()
        .map(|&eps| {
            let cfg = sampled(base, Model::EpsNls, base.integrator, eps, eps_bound(base.integrator, eps, base.n_max), spec.sample_dt);
            let start = Instant::now();
            let u = run(&cfg, &u0)?;
            let row = ConvergeRow {
                eps,
                err_l2: sup_difference(&u.snapshots, &w.snapshots, |f| f.norm()),
                err_z: sup_difference(&u.snapshots, &w.snapshots, z_norm),
                err_s: sup_difference(&u.snapshots, &w.snapshots, |f| s_norm(f, &norms)),
                steps: cfg.n_steps(),
                seconds: start.elapsed().as_secs_f64(),
            };
            Ok((row, u))
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        let (row, mut u) = r?;
        progress(&format!("converge_eps: eps = {} done, sup S error {:.3e}", row.eps, row.err_s));
        u.diagnostics.meta = spec.meta();
        u.diagnostics.meta.push(("eps".into(), format!("{}", row.eps)));
        write_series(&spec.out_dir.join(format!("converge_eps_eps{}.csv", tag(row.eps))), &u.diagnostics)?;
        rows.push(row);
    }
    let pick = |r: &ConvergeRow| match spec.compare_norm {
        CompareNorm::L2 => r.err_l2,
        CompareNorm::S => r.err_s,
    };
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let errs: Vec<f64> = rows.iter().map(pick).collect();
    let slope = loglog_slope(&eps, &errs);
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.eps, r.err_l2, r.err_z, r.err_s, r.steps as f64]).collect();
    write_table(&spec.out_dir.join("converge_eps.csv"), &["eps", "sup_err_l2", "sup_err_z", "sup_err_s", "steps"], &table)?;
    let mut meta = spec.meta();
    meta.push(("compare_norm".into(), format!("{:?}", spec.compare_norm)));
    meta.push(("slope".into(), format_value(slope)));
    meta.push(("ratios".into(), ratios.iter().map(|r| format_value(*r)).collect::<Vec<_>>().join(",")));
    for r in &rows {
        meta.push((format!("runtime_eps{}", tag(r.eps)), format!("{:.3}", r.seconds)));
    }
    write_meta(&spec.out_dir.join("converge_eps.meta"), &meta)?;
    plot(&spec.out_dir.join("converge_eps.png"), &[(eps.clone(), errs), (eps, rows.iter().map(|r| r.err_l2).collect())], progress);
    Ok(ConvergeReport { rows, slope, ratios })
}

#[derive(Debug, Clone)]
pub struct ScatteringRun {
    pub alpha: f64,
    /// Sample times in `[1, t_end]`.
    pub times: Vec<f64>,
    pub u_minus_w_z: Vec<f64>,
    pub u_minus_w_s: Vec<f64>,
    /// `‖W(t) − W(0)‖_S`.
    pub w_drift_s: Vec<f64>,
    /// `‖∂_tW‖_S` from the right-hand side.
    pub dw_s: Vec<f64>,
    /// The same from central differences of the snapshots.
    pub dw_s_fd: Vec<f64>,
    /// `‖W(t) − G(κ ln t)‖_Z` with `G(κ) = W(e)`.
    pub w_minus_g_z: Vec<f64>,
    pub w_minus_g_s: Vec<f64>,
    /// Fitted decay exponent of `‖∂_tW‖_S` on `[5, t_end]`.
    pub dw_slope: f64,
    /// Snapshots of either run whose spectral or spatial margin was thin.
    pub flagged: usize,
}

#[derive(Debug, Clone)]
pub struct ScatteringReport {
    pub kappa: f64,
    pub runs: Vec<ScatteringRun>,
    /// Ratios of curve maxima between the first two amplitudes.
    pub ratios: Vec<(String, f64)>,
}

impl ScatteringRun {
    fn curves(&self) -> [(&'static str, &Vec<f64>); 6] {
        [
            ("u_minus_w_s", &self.u_minus_w_s),
            ("u_minus_w_z", &self.u_minus_w_z),
            ("w_drift_s", &self.w_drift_s),
            ("dw_s", &self.dw_s),
            ("w_minus_g_z", &self.w_minus_g_z),
            ("w_minus_g_s", &self.w_minus_g_s),
        ]
    }

    /// Whether `‖W − G‖_Z` never increases on `[t0, t1]`.
    pub fn w_minus_g_nonincreasing(&self, t0: f64, t1: f64) -> bool {
        let v: Vec<f64> =
            self.times.iter().zip(&self.w_minus_g_z).filter(|(t, _)| **t >= t0 - 1e-9 && **t <= t1 + 1e-9).map(|(_, v)| *v).collect();
        v.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Advances the FR flow by `span` in steps of at most `max_dt`, either direction.
fn fr_advance(g: &SpectralField, span: f64, max_dt: f64, lambda: f64) -> Result<SpectralField> {
    let n = (span.abs() / max_dt - 1e-9).ceil().max(0.0) as usize;
    let mut g = g.clone();
    for _ in 0..n {
        g = step_fr(&g, span / n as f64, lambda)?;
    }
    Ok(g)
}

/// `G(κ ln t)` at every requested `t ≥ 1`, seeded by `G(κ) = seed`.
fn fr_on_log_clock(seed: &SpectralField, times: &[f64], kappa: f64, max_dt: f64, lambda: f64) -> Result<Vec<SpectralField>> {
    let tau0 = kappa;
    let mut out = vec![None; times.len()];
    let (mut fwd, mut bwd): (Vec<usize>, Vec<usize>) = (0..times.len()).partition(|&i| kappa * times[i].ln() >= tau0);
    fwd.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    bwd.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    for order in [fwd, bwd] {
        let (mut g, mut tau) = (seed.clone(), tau0);
        for i in order {
            let target = kappa * times[i].ln();
            g = fr_advance(&g, target - tau, max_dt, lambda)?;
            tau = target;
            out[i] = Some(g.clone());
        }
    }
    Ok(out.into_iter().map(|g| g.expect("every time assigned")).collect())
}

fn scattering_run(spec: &ExperimentSpec, space: &Arc<Space>, alpha: f64) -> Result<(ScatteringRun, Trajectory, Trajectory)> {
    let base = &spec.sim;
    let u0 = initial_data(spec, space, alpha)?;
    let slow_dt = base.dt.min(crate::dynamics::SLOW_DT_MAX);
    let w_cfg = sampled(base, Model::LimitNls, base.integrator, base.eps, slow_dt, spec.sample_dt);
    let u_cfg = sampled(base, Model::EpsNls, base.integrator, base.eps, eps_bound(base.integrator, base.eps, base.n_max), spec.sample_dt);
    let (w, u) = rayon::join(|| run(&w_cfg, &u0), || run(&u_cfg, &u0));
    let (w, u) = (w?, u?);

    // W(e) from its own integration so the seed sits exactly at t = e.
    let n = (E / slow_dt).ceil() as usize;
    let mut we = u0.clone();
    for k in 0..n {
        we = step_limit(&we, k as f64 * E / n as f64, E / n as f64, base.lambda)?;
    }
    let kappa = base.l_z / (2.0 * PI);
    let keep: Vec<usize> = (0..w.times.len()).filter(|&i| w.times[i] >= 1.0 - 1e-9).collect();
    let times: Vec<f64> = keep.iter().map(|&i| w.times[i]).collect();
    let g = fr_on_log_clock(&we, &times, kappa, slow_dt, base.lambda)?;

    let norms = base.norms;
    let s = |f: &SpectralField| s_norm(f, &norms);
    let fd = crate::norms::difference_norms(&w.times, &w.snapshots, s);
    let lambda = Complex64::new(0.0, -base.lambda);
    let mut run = ScatteringRun {
        alpha,
        times: times.clone(),
        u_minus_w_z: vec![],
        u_minus_w_s: vec![],
        w_drift_s: vec![],
        dw_s: vec![],
        dw_s_fd: vec![],
        w_minus_g_z: vec![],
        w_minus_g_s: vec![],
        dw_slope: f64::NAN,
        flagged: w.diagnostics.flagged_rows() + u.diagnostics.flagged_rows(),
    };
    for (j, &i) in keep.iter().enumerate() {
        let (wi, ui) = (&w.snapshots[i], &u.snapshots[i]);
        let d = ui - wi;
        run.u_minus_w_z.push(z_norm(&d));
        run.u_minus_w_s.push(s(&d));
        run.w_drift_s.push(s(&(wi - &u0)));
        run.dw_s.push(s(&partial_resonant(wi, wi, wi, w.times[i])?.scaled(lambda)));
        run.dw_s_fd.push(fd[i]);
        let dg = wi - &g[j];
        run.w_minus_g_z.push(z_norm(&dg));
        run.w_minus_g_s.push(s(&dg));
    }
    let (tt, dd): (Vec<f64>, Vec<f64>) = times.iter().zip(&run.dw_s).filter(|(t, _)| **t >= 5.0 - 1e-9).map(|(t, d)| (*t, *d)).unzip();
    run.dw_slope = loglog_slope(&tt, &dd);
    Ok((run, w, u))
}

pub fn cmd_scattering(spec: &ExperimentSpec, progress: &mut dyn FnMut(&str)) -> Result<ScatteringReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let space = spec.sim.build_space()?;
    let kappa = spec.sim.l_z / (2.0 * PI);
    let results: Vec<Result<(ScatteringRun, Trajectory, Trajectory)>> =
        spec.alpha_list.par_iter().map(|&a| scattering_run(spec, &space, a)).collect();
    let mut runs = Vec::new();
    for r in results {
        let (run, mut w, mut u) = r?;
        progress(&format!("scattering: alpha = {} done, dW slope {:.3}", run.alpha, run.dw_slope));
        let t = tag(run.alpha);
        for (traj, name) in [(&mut w, "limit"), (&mut u, "eps")] {
            traj.diagnostics.meta = spec.meta();
            write_series(&spec.out_dir.join(format!("scattering_{name}_alpha{t}.csv")), &traj.diagnostics)?;
        }
        let mut header = vec!["t"];
        let mut rows: Vec<Vec<f64>> = run.times.iter().map(|&t| vec![t]).collect();
        for (name, curve) in run.curves().into_iter().chain([("dw_s_fd", &run.dw_s_fd)]) {
            header.push(name);
            for (row, v) in rows.iter_mut().zip(curve.iter()) {
                row.push(*v);
            }
        }
        write_table(&spec.out_dir.join(format!("scattering_alpha{t}.csv")), &header, &rows)?;
        runs.push(run);
    }
    let curves: Vec<(Vec<f64>, Vec<f64>)> = runs
        .iter()
        .flat_map(|r| {
            [(r.times.clone(), r.dw_s.clone()), (r.times.clone(), r.w_minus_g_z.clone()), (r.times.clone(), r.u_minus_w_s.clone())]
        })
        .collect();
    plot(&spec.out_dir.join("scattering.png"), &curves, progress);
    let mut ratios = Vec::new();
    if runs.len() >= 2 {
        let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        for ((name, a), (_, b)) in runs[0].curves().into_iter().zip(runs[1].curves()) {
            ratios.push((name.to_string(), max(a) / max(b)));
        }
    }
    let summary: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
            vec![
                r.alpha,
                r.dw_slope,
                max(&r.u_minus_w_s),
                max(&r.w_drift_s),
                *r.w_minus_g_z.last().unwrap_or(&f64::NAN),
                if r.w_minus_g_nonincreasing(5.0, spec.sim.t_end) { 1.0 } else { 0.0 },
                r.flagged as f64,
            ]
        })
        .collect();
    write_table(
        &spec.out_dir.join("scattering.csv"),
        &["alpha", "dw_slope", "sup_u_minus_w_s", "sup_w_drift_s", "w_minus_g_z_end", "w_minus_g_nonincreasing", "flagged"],
        &summary,
    )?;
    let mut meta = spec.meta();
    meta.push(("clock_kappa".into(), format_value(kappa)));
    meta.push(("fr_seed_time".into(), format_value(E)));
    for (name, r) in &ratios {
        meta.push((format!("ratio_{name}"), format_value(*r)));
    }
    write_meta(&spec.out_dir.join("scattering.meta"), &meta)?;
    Ok(ScatteringReport { kappa, runs, ratios })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    /// `true` when the measured value must exceed the tolerance (expected failures).
    pub must_exceed: bool,
}

impl CheckItem {
    fn below(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckItem { name: name.into(), measured, tolerance, must_exceed: false }
    }

    fn above(name: &str, measured: f64, tolerance: f64) -> Self {
        CheckItem { name: name.into(), measured, tolerance, must_exceed: true }
    }

    pub fn passed(&self) -> bool {
        if self.must_exceed {
            self.measured > self.tolerance
        } else {
            self.measured <= self.tolerance
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn failures(&self) -> Vec<&CheckItem> {
        self.items.iter().filter(|i| !i.passed()).collect()
    }

    pub fn ensure(&self) -> Result<()> {
        let failed: Vec<&str> = self.failures().iter().map(|i| i.name.as_str()).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::InvariantFailure(failed.join(", ")))
        }
    }
}

fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
    a.rel_diff(b).unwrap_or(f64::INFINITY)
}

/// Runs the invariant suite on small fixed-seed problems.
pub fn run_checks(seed: u64, progress: &mut dyn FnMut(&str)) -> Result<CheckReport> {
    let mut items = Vec::new();
    let one = Complex64::new(1.0, 0.0);

    progress("check: basis");
    let big = build_basis(12, 26)?;
    items.push(CheckItem::below("basis_gram_nmax12", big.gram_deviation(), 1e-10));
    let additivity = big
        .modes()
        .iter()
        .map(|m| m.twice_eig(Operator::H) - m.twice_eig(Operator::H0) - m.twice_eig(Operator::L))
        .map(|d| d.unsigned_abs() as f64)
        .fold(0.0, f64::max);
    items.push(CheckItem::below("eigenvalue_additivity", additivity, 0.0));

    let sp = Space::new(3, 8, 32, 24.0)?;
    let f = SpectralField::random(&sp, seed);
    let g = SpectralField::random(&sp, seed.wrapping_add(1));
    let h = SpectralField::random(&sp, seed.wrapping_add(2));

    let theta = 0.7;
    let rotated = propagate(&f.slice_field(sp.n_z() / 2), theta, Flow::L)?;
    let pts = [[0.3, -0.4], [1.1, 0.9], [-1.7, 0.2]];
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let turned: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
    let col =
        |field: &SpectralField| -> Vec<Complex64> { (0..sp.n_modes()).map(|a| field.coeffs()[a * sp.n_z() + sp.n_z() / 2]).collect() };
    let lhs = sp.basis().synthesize_at(&col(&rotated), &pts)?;
    let rhs = sp.basis().synthesize_at(&col(&f), &turned)?;
    let rot_err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    items.push(CheckItem::below("rotation_identity", rot_err, 1e-8));

    progress("check: field");
    items.push(CheckItem::below("grid_round_trip", rel(&f.to_grid().to_spectral(), &f), 1e-12));
    items.push(CheckItem::below("parseval", (f.to_grid().mass() - f.norm_sqr()).abs() / f.norm_sqr(), 1e-12));
    let eps = 0.3;
    let ab = propagate(&propagate(&f, 0.4, Flow::D { eps })?, -1.1, Flow::D { eps })?;
    items.push(CheckItem::below("propagator_group_law", rel(&ab, &propagate(&f, -0.7, Flow::D { eps })?), 1e-12));
    let hl = propagate(&propagate(&f, 0.9, Flow::H0)?, 0.5, Flow::L)?;
    let lh = propagate(&propagate(&f, 0.5, Flow::L)?, 0.9, Flow::H0)?;
    items.push(CheckItem::below("h0_l_commute", rel(&hl, &lh), 1e-12));
    let composed = propagate(&propagate(&f, 0.6, Flow::HOverEps2 { eps })?, -0.6, Flow::FreeZ)?;
    items.push(CheckItem::below("d_composition", rel(&composed, &propagate(&f, 0.6, Flow::D { eps })?), 1e-12));
    let n = sp.basis().n_max();
    let recon = (0..=n).fold(SpectralField::zeros(&sp), |acc, k| &acc + &crate::field::project_level(&f, k));
    items.push(CheckItem::below("level_partition", rel(&recon, &f), 1e-14));

    progress("check: nonlinear");
    let sp2 = Space::new(2, 6, 16, 20.0)?;
    let (a, b, cc) = (SpectralField::random(&sp2, seed), SpectralField::random(&sp2, seed ^ 7), SpectralField::random(&sp2, seed ^ 11));
    let oracle = resonant_sum_oracle(&a, &b, &cc)?;
    items.push(CheckItem::below("f_av_matches_oracle", rel(&f_av(&a, &b, &cc)?, &oracle), 1e-10));
    let k_ok = f_av_with(&a, &b, &cc, &ThetaRule::unchecked(3, Operator::H))?;
    items.push(CheckItem::below("theta_rule_k_nmax_plus_1_exact", rel(&k_ok, &oracle), 1e-12));
    let k_bad = f_av_with(&a, &b, &cc, &ThetaRule::unchecked(2, Operator::H))?;
    items.push(CheckItem::above("theta_rule_k_nmax_aliases", rel(&k_bad, &oracle), 1e-6));
    let flipped = fixtures::f_av_conj_sign_flipped(&a, &b, &cc)?;
    items.push(CheckItem::above("mutation_conj_sign_detected", rel(&flipped, &oracle), 1e-3));
    let h0_rule = ThetaRule::exact(2).with_generator(Operator::H0);
    items.push(CheckItem::below("generator_h_vs_h0", rel(&f_av_with(&a, &b, &cc, &h0_rule)?, &oracle), 1e-12));
    let fa = f_av(&a, &a, &a)?;
    let scale = a.norm().powi(4);
    items.push(CheckItem::below("f_av_mass_bracket", fa.inner(&a)?.im.abs() / scale, 1e-13));
    let n_z2 = sp2.n_z();
    let bracket = |weight: &dyn Fn(Mode) -> f64| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, &mode) in sp2.basis().modes().iter().enumerate() {
            for i in m * n_z2..(m + 1) * n_z2 {
                acc += fa.coeffs()[i] * a.coeffs()[i].conj() * weight(mode);
            }
        }
        acc.im.abs() / scale
    };
    items.push(CheckItem::below("f_av_level_energy_bracket", bracket(&|m| m.level() as f64), 1e-13));
    items.push(CheckItem::below("f_av_angular_bracket", bracket(&|m| m.eig_l()), 1e-13));
    let t = 0.8;
    let equi = f_av(&propagate(&a, t, Flow::H)?, &propagate(&b, t, Flow::H)?, &propagate(&cc, t, Flow::H)?)?;
    items.push(CheckItem::below("f_av_h_equivariance", rel(&equi, &propagate(&oracle, t, Flow::H)?), 1e-12));

    progress("check: dynamics");
    let small = Space::new(2, 6, 16, 20.0)?;
    let u0 = SpectralField::random(&small, seed).scaled(one * 0.5);
    let mut w = u0.clone();
    let mut gg = u0.clone();
    for k in 0..100 {
        w = step_limit(&w, k as f64 * 0.1, 0.1, 1.0)?;
        gg = step_fr(&gg, 0.1, 1.0)?;
    }
    let m0 = u0.norm_sqr();
    items.push(CheckItem::below("limit_mass_drift_t10", (w.norm_sqr() - m0).abs() / m0, 1e-10));
    items.push(CheckItem::below("fr_mass_drift_t10", (gg.norm_sqr() - m0).abs() / m0, 1e-10));
    items.push(CheckItem::below("fr_level_energy_drift_t10", (level_energy(&gg) - level_energy(&u0)).abs() / m0, 1e-10));
    items.push(CheckItem::below("fr_angular_drift_t10", (angular_momentum(&gg) - angular_momentum(&u0)).abs() / m0, 1e-10));
    let gauge = Complex64::from_polar(1.0, 0.9);
    let mut rot = u0.scaled(gauge);
    for _ in 0..10 {
        rot = step_fr(&rot, 0.1, 1.0)?;
    }
    let mut plain = u0.clone();
    for _ in 0..10 {
        plain = step_fr(&plain, 0.1, 1.0)?;
    }
    items.push(CheckItem::below("fr_gauge_covariance", rel(&rot, &plain.scaled(gauge)), 1e-12));
    let psi0 = SpectralField::random(&small, seed).scaled(one * 0.05);
    let mut psi = psi0.clone();
    let dt = strang_dt_max(0.2) / 2.0;
    for _ in 0..2000 {
        psi = step_strang_eps(&psi, dt, 0.2, 1.0)?;
    }
    items.push(CheckItem::below("strang_mass_drift", (psi.norm_sqr() - psi0.norm_sqr()).abs() / psi0.norm_sqr(), 1e-10));

    progress("check: norms");
    let cfg = NormConfig::default();
    let sf = s_norm(&f, &cfg);
    items.push(CheckItem::below("s_norm_homogeneity", (s_norm(&f.scaled(one * -2.5), &cfg) - 2.5 * sf).abs() / sf, 1e-12));
    let tri = s_norm(&(&f + &g), &cfg) - s_norm(&f, &cfg) - s_norm(&g, &cfg);
    items.push(CheckItem::below("s_norm_triangle", tri.max(0.0), 0.0));
    let inv = s_norm(&propagate(&f, 1.3, Flow::H)?, &cfg);
    items.push(CheckItem::below("s_norm_h_invariance", (inv - sf).abs() / sf, 1e-12));
    let packet_space = Space::new(1, 4, 64, 32.0)?;
    let packet = SpectralField::separable(&packet_space, &[(Mode::new(0, 0), one)], |z| one * (-z * z / 2.0).exp())?;
    let m = margins(&packet);
    items.push(CheckItem::below("margins_smooth_packet", m.band_edge.max(m.box_edge), crate::field::Margins::THRESHOLD));
    let m = margins(&h);
    items.push(CheckItem::above("margins_flag_coarse_field", m.band_edge.max(m.box_edge), crate::field::Margins::THRESHOLD));
    Ok(CheckReport { items })
}

pub fn cmd_check(spec: &ExperimentSpec, progress: &mut dyn FnMut(&str)) -> Result<CheckReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let report = run_checks(spec.sim.seed, progress)?;
    let mut text = String::from("name,measured,tolerance,expect,pass\n");
    for item in &report.items {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            item.name,
            format_value(item.measured),
            format_value(item.tolerance),
            if item.must_exceed { "above" } else { "below" },
            item.passed()
        );
    }
    write_text(&spec.out_dir.join("check.csv"), &text)?;
    write_meta(&spec.out_dir.join("check.meta"), &spec.meta())?;
    Ok(report)
}

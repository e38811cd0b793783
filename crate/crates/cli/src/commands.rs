//! Subcommand drivers. Each returns a summary of `key = value` pairs and
//! whether the asserted bounds held; file output goes to the run directory.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ns2d::diagnostics::{
    balance_report, coupling_distance, moment_bound_check, slope_fit, write_coupling_csv, SpectrumAccumulator,
};
use ns2d::forcing::{hormander_check, HormanderReport, NoiseStream};
use ns2d::integrator::{checkpoint_save, simulate, simulate_ensemble, simulate_observed, SimConfig};
use ns2d::malliavin::{control_scan, initial_sample, nondegeneracy_survey, ControlConfig, SurveyConfig};
use ns2d::spectral::{Field, Grid, Mode, VorticityState};
use ns2d::tangent::{contraction_stat, ContractionOptions};

use crate::config::{ConfigError, RunConfig};

pub const VERSION: &str = concat!("ns2d ", env!("CARGO_PKG_VERSION"));

/// Stokes cone_min above this counts as nondegenerate.
const STOKES_ZERO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    CheckForcing,
    Balance,
    Spectrum,
    Contraction,
    MalliavinSurvey,
    Control,
    Couple,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::CheckForcing => "check-forcing",
            Command::Balance => "balance",
            Command::Spectrum => "spectrum",
            Command::Contraction => "contraction",
            Command::MalliavinSurvey => "malliavin-survey",
            Command::Control => "control",
            Command::Couple => "couple",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Bad configuration or input, exit 2.
    Usage(String),
    /// Numerical failure during the run, exit 1.
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(m) | RunError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Usage(e.0)
    }
}

impl From<ns2d::Error> for RunError {
    fn from(e: ns2d::Error) -> Self {
        use ns2d::Error as E;
        match e {
            E::BlowUp { .. } | E::NotPsd { .. } | E::NoConvergence { .. } => RunError::Failed(e.to_string()),
            other => RunError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Usage(format!("i/o: {e}"))
    }
}

type Res<T> = std::result::Result<T, RunError>;

/// Ordered `key = value` summary.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    rows: Vec<(String, String)>,
    failures: Vec<String>,
}

impl Summary {
    pub fn put(&mut self, key: impl Into<String>, value: impl Display) {
        self.rows.push((key.into(), value.to_string()));
    }

    /// Records an asserted bound.
    pub fn check(&mut self, key: &str, ok: bool) {
        self.put(key, if ok { "pass" } else { "fail" });
        if !ok {
            self.failures.push(key.to_string());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.rows.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self, command: &str) -> String {
        let mut s = format!("version = {VERSION}\ncommand = {command}\n");
        for (k, v) in &self.rows {
            s.push_str(&format!("{k} = {v}\n"));
        }
        let status = if self.passed() { "pass".to_string() } else { format!("fail ({})", self.failures.join(", ")) };
        s.push_str(&format!("status = {status}\n"));
        s
    }
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| RunError::Usage(format!("cannot create {}: {e}", path.display())))?))
}

fn hormander(modes: &[Mode]) -> Res<HormanderReport> {
    Ok(hormander_check(modes)?)
}

/// Non-admissible forcing and aliasing grids are legitimate experiments:
/// warn and record. Returns whether the forcing is admissible.
fn warn_forcing(sim: &SimConfig, summary: &mut Summary) -> Res<bool> {
    if !sim.grid.is_alias_free() {
        eprintln!(
            "warning: grid {} is not alias-free (3 x cutoff >= n); transport does not conserve enstrophy exactly",
            sim.grid
        );
    }
    summary.put("alias_free", sim.grid.is_alias_free());
    let modes: Vec<Mode> = sim.forcing.modes().iter().map(|f| f.mode).collect();
    let report = hormander(&modes)?;
    if !report.passes() {
        eprintln!("warning: forcing does not satisfy the Hörmander conditions\n{report}");
    }
    summary.put("hormander", if report.passes() { "pass" } else { "fail" });
    Ok(report.passes())
}

fn forcing_summary(sim: &SimConfig, s: &mut Summary) {
    s.put("forced_modes", sim.forcing.dim());
    s.put("epsilon", sim.forcing.epsilon());
    s.put("epsilon_prime", sim.forcing.epsilon_prime());
}

/// Runs `command` with `cfg`, writing into `dir`. The effective
/// configuration and summary are written even when the run fails.
pub fn run(command: Command, cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    fs::create_dir_all(dir).map_err(|e| RunError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let result = match command {
        Command::Simulate => cmd_simulate(cfg, dir),
        Command::CheckForcing => cmd_check_forcing(cfg),
        Command::Balance => cmd_balance(cfg, dir),
        Command::Spectrum => cmd_spectrum(cfg, dir),
        Command::Contraction => cmd_contraction(cfg, dir),
        Command::MalliavinSurvey => cmd_survey(cfg, dir),
        Command::Control => cmd_control(cfg, dir),
        Command::Couple => cmd_couple(cfg, dir),
    };
    let mut header = format!("# {VERSION}\n");
    header.push_str(&cfg.render());
    fs::write(dir.join("effective_config.toml"), header)?;
    let text = match &result {
        Ok(s) => s.render(command.name()),
        Err(e) => format!("version = {VERSION}\ncommand = {}\nerror = {e}\nstatus = error\n", command.name()),
    };
    fs::write(dir.join("summary.txt"), text)?;
    result
}

fn cmd_simulate(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, initial) = cfg.sim()?;
    let mut s = Summary::default();
    warn_forcing(&sim, &mut s)?;
    forcing_summary(&sim, &mut s);
    let members = cfg.usize("ensemble.members")?.max(1);
    s.put("dt", sim.dt);
    s.put("steps", sim.steps());
    s.put("members", members);
    let runs = if members == 1 {
        vec![simulate(&sim, initial.as_ref(), NoiseStream::new(sim.seed, 0))?]
    } else {
        simulate_ensemble(&sim, initial.as_ref(), members)?
    };
    let first = &runs[0];
    let mut w = create(&dir.join("observations.csv"))?;
    first.write_csv(&mut w)?;
    w.flush()?;
    checkpoint_save(&first.final_state, &dir.join("final.vort"))?;
    if !first.snapshots.is_empty() {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        for (i, st) in first.snapshots.iter().enumerate() {
            checkpoint_save(st, &snaps.join(format!("snapshot_{i:05}.vort")))?;
        }
    }
    let last = first.observations.last().expect("trajectory has an initial record");
    s.put("final_t", last.t);
    s.put("final_enstrophy", last.enstrophy);
    s.put("final_energy", last.energy);
    if members > 1 {
        let omega0_sq = initial.as_ref().map_or(0.0, |st| st.field.norm_sq());
        let etas = cfg.f64s("moments.eta_factors")?;
        let report = moment_bound_check(&sim, &runs, omega0_sq, &etas)?;
        report.write_csv(&mut create(&dir.join("moments.csv"))?)?;
        let mut w = create(&dir.join("moments_exp.csv"))?;
        writeln!(w, "kind,t,eta_factor,estimate,bound,pass")?;
        for (kind, rows) in [("pointwise", &report.exponential), ("integral", &report.integral)] {
            for r in rows {
                writeln!(w, "{kind},{},{},{},{},{}", r.t, r.eta_factor, r.estimate, r.bound, r.pass)?;
            }
        }
        w.flush()?;
        s.check("second_moment_bound", report.second_pass());
        for f in etas {
            s.check(&format!("exp_moment_eta_{f}"), report.exponential_pass(f));
        }
    }
    Ok(s)
}

fn cmd_check_forcing(cfg: &mut RunConfig) -> Res<Summary> {
    let mut s = Summary::default();
    // custom sets are checked as given, before the reflection requirement
    // of a usable forcing is enforced
    let modes: Vec<Mode> = if cfg.str("forcing.preset")? == "custom" && !cfg.bool("forcing.auto_reflect")? {
        cfg.triples("forcing.modes")?.into_iter().map(|(m, _)| m).collect()
    } else {
        cfg.forcing()?.modes().iter().map(|f| f.mode).collect()
    };
    let report = hormander(&modes)?;
    println!("{report}");
    s.put("modes", format!("{modes:?}"));
    s.put("cond_a", report.cond_a);
    s.put("cond_b", report.cond_b);
    s.put("cond_c", report.cond_c);
    s.put("lattice_index", report.lattice_index);
    if let Ok(f) = cfg.forcing() {
        s.put("epsilon", f.epsilon());
        s.put("epsilon_prime", f.epsilon_prime());
        s.put("kappa_f", f.kappa_f());
        s.put("kappa_f_weighted", f.kappa_f_weighted());
    }
    s.check("hormander", report.passes());
    Ok(s)
}

fn cmd_balance(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, initial) = cfg.sim()?;
    let mut s = Summary::default();
    warn_forcing(&sim, &mut s)?;
    forcing_summary(&sim, &mut s);
    let burn_in = cfg.burn_in("balance.burn_in", &sim)?;
    if burn_in >= sim.t_end {
        return Err(RunError::Usage(format!(
            "run too short: t_end = {} does not exceed the burn-in {burn_in}; raise t_end or lower balance.burn_in",
            sim.t_end
        )));
    }
    let members = cfg.usize("ensemble.members")?.max(1);
    let runs = simulate_ensemble(&sim, initial.as_ref(), members)?;
    let report = balance_report(&sim, &runs, burn_in, cfg.usize("balance.batches")?)?;
    let mut w = create(&dir.join("balance.txt"))?;
    report.write_kv(&mut w)?;
    w.flush()?;
    let tol = cfg.f64("balance.tolerance")?;
    s.put("members", members);
    s.put("burn_in", burn_in);
    s.put("enstrophy_residual", report.enstrophy_residual());
    s.put("energy_residual", report.energy_residual());
    s.check("enstrophy_balance", report.enstrophy_residual().abs() <= tol);
    s.check("energy_balance", report.energy_residual().abs() <= tol);
    Ok(s)
}

fn cmd_spectrum(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, initial) = cfg.sim()?;
    let mut s = Summary::default();
    warn_forcing(&sim, &mut s)?;
    forcing_summary(&sim, &mut s);
    s.put("kappa_f", sim.forcing.kappa_f());
    let burn_in = cfg.burn_in("spectrum.burn_in", &sim)?;
    let every = cfg.usize("spectrum.sample_every")?.max(1);
    let model = sim.model()?;
    let mut acc = SpectrumAccumulator::new(model.grid());
    let traj = simulate_observed(&model, &sim, initial.as_ref(), NoiseStream::new(sim.seed, 0), |k, st| {
        if k % every == 0 && st.time >= burn_in {
            acc.add(st.time, &st.field)?;
        }
        Ok(())
    })?;
    let mut w = create(&dir.join("observations.csv"))?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    if acc.samples() == 0 {
        return Err(RunError::Usage(format!(
            "run too short: no samples after the burn-in {burn_in} (t_end = {})",
            sim.t_end
        )));
    }
    let spec = acc.finish()?;
    spec.write_csv(&mut create(&dir.join("spectrum.csv"))?)?;
    s.put("samples", acc.samples());
    s.put("burn_in", burn_in);
    let (lo, hi) = cfg.pair("spectrum.fit")?;
    let fit = slope_fit(&spec, lo, hi, Some(&sim))?;
    s.put("slope", fit.slope);
    s.put("slope_stderr", fit.stderr);
    s.put("fit_shells", fit.shells);
    s.put("kappa_nu", fit.kappa_nu);
    s.put("kappa_tau", fit.kappa_tau);
    let (ilo, ihi) = cfg.pair("spectrum.inverse_fit")?;
    match slope_fit(&spec, ilo, ihi, None) {
        Ok(f) => s.put("inverse_slope", f.slope),
        Err(e) => s.put("inverse_slope", format!("unavailable ({e})")),
    }
    if cfg.bool("spectrum.check")? {
        let (a, b) = cfg.pair("spectrum.slope_range")?;
        s.check("slope_in_range", fit.slope >= a && fit.slope <= b);
    }
    Ok(s)
}

fn cmd_contraction(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, initial) = cfg.sim()?;
    let mut s = Summary::default();
    warn_forcing(&sim, &mut s)?;
    let grid = Grid::new(sim.grid)?;
    let start = initial.unwrap_or_else(|| VorticityState::zeros(&grid));
    let opts = ContractionOptions {
        p: cfg.f64("contraction.p")?,
        samples: cfg.usize("contraction.samples")?,
        tol: cfg.f64("contraction.tol")?,
        max_iter: cfg.usize("contraction.max_iter")?,
    };
    let horizon = cfg.f64("contraction.horizon")?;
    let max_ratio = cfg.f64("contraction.max_ratio")?;
    let mut left = create(&dir.join("contraction.csv"))?;
    let mut right = create(&dir.join("contraction_right.csv"))?;
    writeln!(right, "cutoff,T,p,mean,ci_lo,ci_hi,samples")?;
    let mut ok = true;
    for (i, cutoff) in cfg.f64s("contraction.cutoffs")?.into_iter().enumerate() {
        let est = contraction_stat(&sim, &start, cutoff, horizon, &opts)?;
        est.write_csv(&mut left, i == 0)?;
        let r = &est.right;
        writeln!(right, "{},{},{},{},{},{},{}", est.cutoff, est.horizon, est.p, r.mean, r.lo, r.hi, r.n)?;
        let predicted = est.diagonal_prediction.powf(est.p);
        let ratio = est.left.mean / predicted;
        s.put(format!("cutoff_{cutoff}_estimate"), est.left.mean);
        s.put(format!("cutoff_{cutoff}_prediction"), predicted);
        s.put(format!("cutoff_{cutoff}_ratio"), ratio);
        ok &= ratio <= max_ratio && ratio >= 1.0 / max_ratio;
    }
    left.flush()?;
    right.flush()?;
    s.check("within_factor", ok);
    Ok(s)
}

/// Whether some retained mode with `0 < |k| ≤ cutoff` is not forced.
fn has_unforced_low_mode(sim: &SimConfig, grid: &Grid, cutoff: f64) -> bool {
    grid.retained_modes().any(|(_, m)| {
        let k = grid.wavenumber(m);
        k > 0.0 && k <= cutoff * (1.0 + 1e-12) && !sim.forcing.modes().iter().any(|f| f.mode == m)
    })
}

fn cmd_survey(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, _) = cfg.sim()?;
    let mut s = Summary::default();
    let admissible = warn_forcing(&sim, &mut s)?;
    let grid = Grid::new(sim.grid)?;
    let sc = SurveyConfig {
        interval: cfg.f64("malliavin.interval")?,
        galerkin_cutoff: cfg.f64("malliavin.galerkin_cutoff")?,
        low_cutoff: cfg.f64("malliavin.low_cutoff")?,
        alpha: cfg.f64("malliavin.alpha")?,
        samples: cfg.usize("malliavin.samples")?,
        init_radius: cfg.f64("malliavin.init_radius")?,
        init_amplitude: cfg.f64("malliavin.init_amplitude")?,
        stokes_control: cfg.bool("malliavin.stokes_control")?,
        sim: sim.clone(),
    };
    let report = nondegeneracy_survey(&sc)?;
    report.write_csv(&mut create(&dir.join("survey.csv"))?)?;
    s.put("samples", report.samples.len());
    s.put("min", report.min);
    s.put("q10", report.q10);
    s.put("median", report.median);
    s.put("q90", report.q90);
    s.put("tail_exponent", report.tail_exponent.map_or("none".to_string(), |x| x.to_string()));
    if admissible {
        s.check("median_positive", report.median > 0.0);
    }
    if !report.stokes.is_empty() {
        let mut w = create(&dir.join("survey_stokes.csv"))?;
        writeln!(w, "sample,cone_min")?;
        for (i, c) in report.stokes.iter().enumerate() {
            writeln!(w, "{i},{c}")?;
        }
        w.flush()?;
        let max = report.stokes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        s.put("stokes_max", max);
        if has_unforced_low_mode(&sim, &grid, sc.low_cutoff) {
            s.check("stokes_degenerate", max <= STOKES_ZERO);
        }
    }
    Ok(s)
}

fn cmd_control(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, _) = cfg.sim()?;
    let mut s = Summary::default();
    warn_forcing(&sim, &mut s)?;
    let cc = ControlConfig {
        sim,
        lambda: 1.0,
        galerkin_cutoff: cfg.f64("control.galerkin_cutoff")?,
        low_cutoff: cfg.f64("control.low_cutoff")?,
        intervals: cfg.usize("control.intervals")?,
        interval: cfg.f64("control.interval")?,
    };
    let lambdas = cfg.f64s("control.lambdas")?;
    let scans = control_scan(
        &cc,
        &lambdas,
        cfg.usize("control.seeds")?,
        cfg.f64("control.init_radius")?,
        cfg.f64("control.init_amplitude")?,
    )?;
    let runs_dir = dir.join("control");
    fs::create_dir_all(&runs_dir)?;
    let mut scan_w = create(&dir.join("control_scan.csv"))?;
    writeln!(scan_w, "lambda,m,median_ratio")?;
    let mut best = f64::INFINITY;
    let mut worst_residual: f64 = 0.0;
    for (i, sc) in scans.iter().enumerate() {
        for (j, run) in sc.runs.iter().enumerate() {
            run.write_csv(&mut create(&runs_dir.join(format!("lambda_{i}_seed_{j}.csv")))?, true)?;
        }
        for (m, r) in sc.median_ratios.iter().enumerate() {
            writeln!(scan_w, "{},{},{}", sc.lambda, m + 1, r)?;
        }
        s.put(format!("lambda_{}_rate", sc.lambda), sc.rate);
        s.put(format!("lambda_{}_max_identity_residual", sc.lambda), sc.max_identity_residual);
        if sc.rate < best {
            best = sc.rate;
        }
        worst_residual = worst_residual.max(sc.max_identity_residual);
    }
    scan_w.flush()?;
    s.put("best_rate", best);
    s.check("identity", worst_residual <= cfg.f64("control.max_residual")?);
    s.check("decay", best < cfg.f64("control.max_rate")?);
    Ok(s)
}

fn cmd_couple(cfg: &mut RunConfig, dir: &Path) -> Res<Summary> {
    let (sim, initial) = cfg.sim()?;
    let mut s = Summary::default();
    warn_forcing(&sim, &mut s)?;
    let grid = Grid::new(sim.grid)?;
    let a = initial.map_or_else(|| Field::zeros(&grid), |st| st.field);
    let kick = initial_sample(&grid, sim.seed ^ 0xc0c0_c0c0, 0, cfg.f64("couple.radius")?, cfg.f64("couple.amplitude")?);
    let b = a.add(&kick);
    let rows = coupling_distance(&sim, &a, &b, cfg.f64("couple.low_cutoff")?, NoiseStream::new(sim.seed, 0))?;
    write_coupling_csv(&mut create(&dir.join("coupling.csv"))?, &rows)?;
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    s.put("initial_dist", first.dist);
    s.put("final_t", last.t);
    s.put("final_dist", last.dist);
    s.put("final_dist_low", last.dist_low);
    s.put("final_dist_high", last.dist_high);
    Ok(s)
}

/// Output root: `NS2D_OUTPUT_ROOT` when set, else the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os("NS2D_OUTPUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

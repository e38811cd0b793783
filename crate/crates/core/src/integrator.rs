//! Exponential Euler–Maruyama integration of
//! `dω = (νΔω − τω − u·∇ω) dt + Q dβ`.
//!
//! Per mode, with `a = ν|k|² + τ`,
//! `ω̂ ← e^{−a dt} ω̂ + φ₁(−a dt) dt N̂(ω) + e^{−a dt} ΔW`, where
//! `φ₁(z) = (e^z − 1)/z`. The linear part is exact, so the scheme reproduces
//! the discrete Ornstein–Uhlenbeck process when advection is switched off.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forcing::{sample_increment, ForcingSpec, NoiseStream};
use crate::spectral::{norms, nonlinear_from_frame, Field, Grid, GridSpec, TransportFrame, VorticityState};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub nu: f64,
    pub tau: f64,
    pub dt: f64,
    pub t_end: f64,
    pub forcing: ForcingSpec,
    pub seed: u64,
    /// Record observables every this many steps.
    pub output_every: usize,
    /// Keep a snapshot every this many steps (`None` keeps only the final state).
    pub snapshot_every: Option<usize>,
    /// Include the advective term; `false` gives the linear Stokes/OU system.
    pub advection: bool,
}

impl SimConfig {
    pub fn new(grid: GridSpec, nu: f64, dt: f64, t_end: f64, forcing: ForcingSpec) -> SimConfig {
        SimConfig {
            grid,
            nu,
            tau: 0.0,
            dt,
            t_end,
            forcing,
            seed: 0,
            output_every: 1,
            snapshot_every: None,
            advection: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidArgument(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidArgument("output_every must be at least 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidArgument("snapshot_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn model(&self) -> Result<Model> {
        self.validate()?;
        let grid = Grid::new(self.grid)?;
        self.forcing.check_grid(&grid)?;
        Ok(Model::new(&grid, self.nu, self.tau, self.dt, self.advection))
    }

    /// Slowest linear damping rate `ν/N² + τ`.
    pub fn slowest_rate(&self) -> f64 {
        self.nu / (self.grid.scale * self.grid.scale) + self.tau
    }
}

/// `φ₁(z)·dt` for `z = −a dt`, i.e. `(1 − e^{−a dt}) / a`, stable as `a → 0`.
fn phi1_dt(a: f64, dt: f64) -> f64 {
    if a == 0.0 {
        dt
    } else {
        -(-a * dt).exp_m1() / a
    }
}

/// Precomputed per-mode factors of one step size.
#[derive(Clone, Debug)]
pub struct Model {
    grid: Arc<Grid>,
    pub nu: f64,
    pub tau: f64,
    pub dt: f64,
    pub advection: bool,
    decay: Vec<f64>,
    phi_dt: Vec<f64>,
}

impl Model {
    pub fn new(grid: &Arc<Grid>, nu: f64, tau: f64, dt: f64, advection: bool) -> Model {
        let rates: Vec<f64> = grid.k2().iter().map(|k2| nu * k2 + tau).collect();
        let decay = rates.iter().map(|a| (-a * dt).exp()).collect();
        let phi_dt = rates.iter().map(|&a| phi1_dt(a, dt)).collect();
        Model { grid: grid.clone(), nu, tau, dt, advection, decay, phi_dt }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `e^{−(ν|k|²+τ)dt}` per flat index.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// `φ₁(−(ν|k|²+τ)dt)·dt` per flat index.
    pub fn phi_dt(&self) -> &[f64] {
        &self.phi_dt
    }

    /// Damping rate `ν|k|² + τ` of a flat index.
    pub fn rate(&self, idx: usize) -> f64 {
        self.nu * self.grid.k2()[idx] + self.tau
    }

    /// Advective tendency `-u·∇ω` (zero when advection is off) and the frame
    /// it was computed from.
    pub fn tendency(&self, omega: &Field) -> (Option<Field>, Option<TransportFrame>) {
        if !self.advection {
            return (None, None);
        }
        let frame = TransportFrame::new(omega);
        (Some(nonlinear_from_frame(&self.grid, &frame)), Some(frame))
    }

    /// One step from `omega` with noise increment `increment`.
    pub fn step(&self, omega: &Field, increment: &Field, time: f64) -> Result<Field> {
        let (tend, _) = self.tendency(omega);
        self.finish_step(omega, tend.as_ref(), increment, time)
    }

    pub(crate) fn finish_step(
        &self,
        omega: &Field,
        tendency: Option<&Field>,
        increment: &Field,
        time: f64,
    ) -> Result<Field> {
        let mut next = omega.clone();
        let out = next.coeffs_mut();
        let inc = increment.coeffs();
        match tendency {
            Some(t) => {
                let tc = t.coeffs();
                for i in 0..out.len() {
                    out[i] = self.decay[i] * (out[i] + inc[i]) + self.phi_dt[i] * tc[i];
                }
            }
            None => {
                for i in 0..out.len() {
                    out[i] = self.decay[i] * (out[i] + inc[i]);
                }
            }
        }
        if out.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::BlowUp { time: time + self.dt });
        }
        next.dealias();
        next.enforce_hermitian();
        Ok(next)
    }
}

/// `step` as a free function over a whole state.
pub fn step(state: &VorticityState, model: &Model, increment: &Field) -> Result<VorticityState> {
    let next = model.step(&state.field, increment, state.time)?;
    Ok(VorticityState::new(next, state.time + model.dt))
}

/// Observables recorded along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub t: f64,
    /// `½‖ω‖²`
    pub enstrophy: f64,
    /// `½‖u‖²`
    pub energy: f64,
    /// `‖∇ω‖²`
    pub h1_sq: f64,
    /// Accumulated `Σ‖ΔW‖²` of the injected increments.
    pub noise_qv: f64,
}

impl Observation {
    pub fn of(field: &Field, t: f64, noise_qv: f64) -> Observation {
        let n = norms(field);
        Observation { t, enstrophy: 0.5 * n.l2 * n.l2, energy: n.energy, h1_sq: n.h1 * n.h1, noise_qv }
    }

    pub fn l2_sq(&self) -> f64 {
        2.0 * self.enstrophy
    }

    /// `‖u‖²`.
    pub fn u_sq(&self) -> f64 {
        2.0 * self.energy
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub snapshots: Vec<VorticityState>,
    pub final_state: VorticityState,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_observations_csv(&mut w, &self.observations)
    }
}

pub fn write_observations_csv<W: Write>(w: &mut W, obs: &[Observation]) -> Result<()> {
    writeln!(w, "t,enstrophy,energy,h1_sq,noise_qv")?;
    for o in obs {
        writeln!(w, "{},{},{},{},{}", o.t, o.enstrophy, o.energy, o.h1_sq, o.noise_qv)?;
    }
    Ok(())
}

/// Runs `cfg` for `t_end` time units from `initial` (zero when `None`) with
/// noise drawn from `stream`. A state at time `t` uses the increments of
/// global steps `round(t/dt)` onward.
pub fn simulate(cfg: &SimConfig, initial: Option<&VorticityState>, stream: NoiseStream) -> Result<Trajectory> {
    let model = cfg.model()?;
    simulate_with(&model, cfg, initial, stream)
}

pub fn simulate_with(
    model: &Model,
    cfg: &SimConfig,
    initial: Option<&VorticityState>,
    stream: NoiseStream,
) -> Result<Trajectory> {
    simulate_observed(model, cfg, initial, stream, |_, _| Ok(()))
}

/// Like [`simulate_with`], calling `visit(step, state)` after every step.
pub fn simulate_observed(
    model: &Model,
    cfg: &SimConfig,
    initial: Option<&VorticityState>,
    stream: NoiseStream,
    mut visit: impl FnMut(usize, &VorticityState) -> Result<()>,
) -> Result<Trajectory> {
    let grid = model.grid().clone();
    let mut state = match initial {
        Some(s) => {
            if s.grid().spec() != grid.spec() {
                return Err(Error::Shape(format!("initial state on {} but config grid is {}", s.grid().spec(), grid.spec())));
            }
            s.clone()
        }
        None => VorticityState::zeros(&grid),
    };
    let t0 = state.time;
    // noise is addressed by global step so a restart continues the sequence
    let first = (t0 / cfg.dt).round() as u64;
    let steps = cfg.steps();
    let mut qv = 0.0;
    let mut observations = vec![Observation::of(&state.field, state.time, qv)];
    let mut snapshots = Vec::new();
    if cfg.snapshot_every.is_some() {
        snapshots.push(state.clone());
    }
    for n in 0..steps {
        let inc = sample_increment(&cfg.forcing, &grid, cfg.dt, &stream, first + n as u64);
        qv += inc.norm_sq();
        let next = model.step(&state.field, &inc, state.time)?;
        state = VorticityState::new(next, t0 + (n + 1) as f64 * cfg.dt);
        let k = n + 1;
        visit(k, &state)?;
        if k % cfg.output_every == 0 || k == steps {
            observations.push(Observation::of(&state.field, state.time, qv));
        }
        if let Some(every) = cfg.snapshot_every {
            if k % every == 0 {
                snapshots.push(state.clone());
            }
        }
    }
    Ok(Trajectory { observations, snapshots, final_state: state })
}

/// Independent members `0..members`, run in parallel and returned in order.
pub fn simulate_ensemble(cfg: &SimConfig, initial: Option<&VorticityState>, members: usize) -> Result<Vec<Trajectory>> {
    let model = cfg.model()?;
    (0..members)
        .into_par_iter()
        .map(|m| simulate_with(&model, cfg, initial, NoiseStream::new(cfg.seed, m as u64)))
        .collect()
}

/// Advective CFL step `cfl · Δx / U`, capped at `dt_max`. `U` is the larger
/// of the current peak speed and three times the rms speed allowed by the
/// energy balance `ν‖ω‖² + τ‖u‖² = ε′/2`.
pub fn suggest_dt(grid: &Arc<Grid>, nu: f64, tau: f64, forcing: &ForcingSpec, omega: &Field, cfl: f64, dt_max: f64) -> f64 {
    let dx = 2.0 * std::f64::consts::PI * grid.spec().scale / grid.n() as f64;
    let rate = nu / (grid.spec().scale * grid.spec().scale) + tau;
    let u_rms = (forcing.epsilon_prime() / (2.0 * rate) / grid.area()).sqrt();
    let u_now = TransportFrame::new(omega).max_speed();
    let u = u_now.max(3.0 * u_rms);
    if u > 0.0 {
        (cfl * dx / u).min(dt_max)
    } else {
        dt_max
    }
}

pub fn checkpoint_save(state: &VorticityState, path: &Path) -> Result<()> {
    crate::spectral::snapshot::save(state, path)
}

/// Loads a snapshot and checks it against the configured grid.
pub fn checkpoint_load(path: &Path, grid: &Arc<Grid>) -> Result<VorticityState> {
    crate::spectral::snapshot::load(path, Some(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Mode;

    fn cfg(n: usize, nu: f64, dt: f64, t_end: f64, gamma: f64) -> SimConfig {
        let forcing = ForcingSpec::four_mode(1.0);
        let forcing = if gamma == 0.0 { forcing.silenced() } else { ForcingSpec::four_mode(gamma) };
        SimConfig::new(GridSpec::new(n, 1.0).unwrap(), nu, dt, t_end, forcing)
    }

    #[test]
    fn shear_mode_decays_exactly() {
        let mut c = cfg(16, 0.1, 0.05, 1.0, 0.0);
        c.tau = 0.2;
        let model = c.model().unwrap();
        let grid = model.grid().clone();
        let w0 = VorticityState::new(Field::from_fn(&grid, |x, _| x.sin()), 0.0);
        let traj = simulate_with(&model, &c, Some(&w0), NoiseStream::new(0, 0)).unwrap();
        let expect = (-(0.1 + 0.2) * 1.0f64).exp();
        let got = traj.final_state.field.coeff((1, 0)).im / w0.field.coeff((1, 0)).im;
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        assert!((traj.final_state.time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_gives_single_record() {
        let c = cfg(16, 0.1, 0.05, 0.0, 1.0);
        let traj = simulate(&c, None, NoiseStream::new(1, 0)).unwrap();
        assert_eq!(traj.observations.len(), 1);
        assert_eq!(traj.observations[0].t, 0.0);
    }

    #[test]
    fn same_seed_same_stream() {
        let c = cfg(16, 0.1, 0.05, 1.0, 0.5);
        let a = simulate(&c, None, NoiseStream::new(7, 0)).unwrap();
        let b = simulate(&c, None, NoiseStream::new(7, 0)).unwrap();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.final_state, b.final_state);
        let e = simulate(&c, None, NoiseStream::new(8, 0)).unwrap();
        assert_ne!(a.observations, e.observations);
    }

    #[test]
    fn unforced_decay_respects_poincare() {
        let mut c = cfg(32, 0.05, 0.02, 2.0, 0.0);
        c.tau = 0.1;
        c.grid = GridSpec::new(32, 1.5).unwrap();
        c.forcing = ForcingSpec::with_scale(&[((1, 0), 1.0), ((-1, 0), 1.0)], 1.5).unwrap().silenced();
        let model = c.model().unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let w0 = VorticityState::new(Field::random(model.grid(), 6.0, 0.02, &mut rng), 0.0);
        let traj = simulate_with(&model, &c, Some(&w0), NoiseStream::new(0, 0)).unwrap();
        let n0 = w0.field.norm();
        for o in &traj.observations {
            let bound = (-(c.slowest_rate()) * o.t).exp() * n0;
            assert!(o.l2_sq().sqrt() <= bound * (1.0 + 1e-10), "t={} {} > {}", o.t, o.l2_sq().sqrt(), bound);
        }
    }

    #[test]
    fn unforced_step_is_dissipative() {
        let c = cfg(32, 0.02, 0.01, 0.01, 0.0);
        let model = c.model().unwrap();
        let zero = Field::zeros(model.grid());
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
        for _ in 0..5 {
            let w = Field::random(model.grid(), 8.0, 0.05, &mut rng);
            let next = model.step(&w, &zero, 0.0).unwrap();
            let d = 0.5 * next.norm_sq() - 0.5 * w.norm_sq();
            assert!(d <= 0.0);
            let n = norms(&w);
            let predicted = -c.dt * (c.nu * n.h1 * n.h1 + c.tau * n.l2 * n.l2);
            assert!((d - predicted).abs() < 0.05 * predicted.abs(), "{d} vs {predicted}");
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let c = cfg(16, 0.1, 0.05, 1.0, 0.0);
        let model = c.model().unwrap();
        let mut w = Field::zeros(model.grid());
        w.set_mode((1, 0), num_complex::Complex64::new(f64::NAN, 0.0));
        let z = Field::zeros(model.grid());
        assert!(matches!(model.step(&w, &z, 0.0), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn ensemble_members_are_ordered_and_distinct() {
        let mut c = cfg(16, 0.1, 0.05, 0.5, 0.5);
        c.seed = 3;
        let e = simulate_ensemble(&c, None, 3).unwrap();
        let single = simulate(&c, None, NoiseStream::new(3, 1)).unwrap();
        assert_eq!(e[1].observations, single.observations);
        assert_ne!(e[0].observations, e[1].observations);
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let c = cfg(16, 0.1, 0.05, 0.5, 0.5);
        let traj = simulate(&c, None, NoiseStream::new(3, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("state.vort");
        checkpoint_save(&traj.final_state, &p).unwrap();
        let grid = traj.final_state.grid().clone();
        assert_eq!(checkpoint_load(&p, &grid).unwrap(), traj.final_state);
        let other = Grid::new(GridSpec::new(32, 1.0).unwrap()).unwrap();
        assert!(matches!(checkpoint_load(&p, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let c = cfg(16, 0.1, 0.05, 0.1, 0.5);
        let traj = simulate(&c, None, NoiseStream::new(3, 0)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,enstrophy,energy,h1_sq,noise_qv");
        assert_eq!(lines.len(), 1 + traj.observations.len());
    }

    #[test]
    fn suggested_dt_is_capped() {
        let c = cfg(32, 0.1, 0.05, 0.1, 0.5);
        let grid = Grid::new(c.grid).unwrap();
        let dt = suggest_dt(&grid, c.nu, c.tau, &c.forcing, &Field::zeros(&grid), 0.5, 0.05);
        assert!(dt > 0.0 && dt <= 0.05);
        let mut w = Field::zeros(&grid);
        let m: Mode = (1, 0);
        w.add_basis(m, 1e3);
        let fast = suggest_dt(&grid, c.nu, c.tau, &c.forcing, &w, 0.5, 0.05);
        assert!(fast < dt);
    }
}

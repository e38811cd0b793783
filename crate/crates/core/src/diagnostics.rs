//! Stationary balances, moment bounds, energy spectra and shared-noise
//! coupling.
//!
//! Densities are per unit area. With `d½‖ω‖² = (…)dt + ½Σγ²‖e_k‖² dt` the
//! stationary identities read `ν⟨‖∇ω‖²⟩ + τ⟨‖ω‖²⟩ = ε/2` and
//! `ν⟨‖ω‖²⟩ + τ⟨‖u‖²⟩ = ε′/2`, so the density targets are `ε/(2·area)` and
//! `ε′/(2·area)`.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forcing::{sample_increment, ForcingSpec, NoiseStream};
use crate::integrator::{Observation, SimConfig, Trajectory};
use crate::spectral::{project_high, project_low, Field, Grid};
use crate::stats::{batch_means, linear_fit, mean_ci, MeanCi};

/// Default burn-in `5 / (ν/N² + τ)`.
pub fn default_burn_in(cfg: &SimConfig) -> f64 {
    5.0 / cfg.slowest_rate()
}

#[derive(Clone, Debug)]
pub struct BalanceReport {
    pub burn_in: f64,
    pub window: f64,
    /// `ν⟨‖∇ω‖²⟩/area`
    pub enstrophy_viscous: f64,
    /// `τ⟨‖ω‖²⟩/area`
    pub enstrophy_friction: f64,
    pub enstrophy_total: MeanCi,
    pub enstrophy_target: f64,
    /// `ν⟨‖∇u‖²⟩/area = ν⟨‖ω‖²⟩/area`
    pub energy_viscous: f64,
    /// `τ⟨‖u‖²⟩/area`
    pub energy_friction: f64,
    pub energy_total: MeanCi,
    pub energy_target: f64,
}

impl BalanceReport {
    pub fn enstrophy_residual(&self) -> f64 {
        (self.enstrophy_total.mean - self.enstrophy_target) / self.enstrophy_target
    }

    pub fn energy_residual(&self) -> f64 {
        (self.energy_total.mean - self.energy_target) / self.energy_target
    }

    /// Flat `key = value` lines.
    pub fn write_kv<W: Write>(&self, w: &mut W) -> Result<()> {
        let rows: [(&str, f64); 16] = [
            ("burn_in", self.burn_in),
            ("window", self.window),
            ("enstrophy_viscous", self.enstrophy_viscous),
            ("enstrophy_friction", self.enstrophy_friction),
            ("enstrophy_total", self.enstrophy_total.mean),
            ("enstrophy_ci_lo", self.enstrophy_total.lo),
            ("enstrophy_ci_hi", self.enstrophy_total.hi),
            ("enstrophy_target", self.enstrophy_target),
            ("enstrophy_residual", self.enstrophy_residual()),
            ("energy_viscous", self.energy_viscous),
            ("energy_friction", self.energy_friction),
            ("energy_total", self.energy_total.mean),
            ("energy_ci_lo", self.energy_total.lo),
            ("energy_ci_hi", self.energy_total.hi),
            ("energy_target", self.energy_target),
            ("energy_residual", self.energy_residual()),
        ];
        for (k, v) in rows {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Time and ensemble averages of the dissipation terms after `burn_in`,
/// with batch-mean intervals over the ensemble-averaged time series.
pub fn balance_report(cfg: &SimConfig, runs: &[Trajectory], burn_in: f64, batches: usize) -> Result<BalanceReport> {
    if runs.is_empty() {
        return Err(Error::Window("no trajectories".into()));
    }
    let t_last = runs[0].observations.last().map_or(0.0, |o| o.t);
    let len = runs.iter().map(|r| r.observations.len()).min().unwrap_or(0);
    let start = runs[0].observations.iter().position(|o| o.t >= burn_in).unwrap_or(len);
    if burn_in >= t_last || len - start < batches.max(2) {
        return Err(Error::Window(format!(
            "run ends at t = {t_last} but the burn-in lasts until t = {burn_in}; lengthen t_end or shorten the burn-in"
        )));
    }
    let area = cfg.grid.area();
    let m = runs.len() as f64;
    let series = |f: &dyn Fn(&Observation) -> f64| -> Vec<f64> {
        (start..len).map(|i| runs.iter().map(|r| f(&r.observations[i])).sum::<f64>() / m).collect()
    };
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (nu, tau) = (cfg.nu, cfg.tau);
    let ens_visc = series(&|o| nu * o.h1_sq / area);
    let ens_fric = series(&|o| tau * o.l2_sq() / area);
    let en_visc = series(&|o| nu * o.l2_sq() / area);
    let en_fric = series(&|o| tau * o.u_sq() / area);
    let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();
    Ok(BalanceReport {
        burn_in,
        window: t_last - runs[0].observations[start].t,
        enstrophy_viscous: avg(&ens_visc),
        enstrophy_friction: avg(&ens_fric),
        enstrophy_total: batch_means(&sum(&ens_visc, &ens_fric), batches),
        enstrophy_target: cfg.forcing.epsilon() / (2.0 * area),
        energy_viscous: avg(&en_visc),
        energy_friction: avg(&en_fric),
        energy_total: batch_means(&sum(&en_visc, &en_fric), batches),
        energy_target: cfg.forcing.epsilon_prime() / (2.0 * area),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct MomentRow {
    pub t: f64,
    pub mean: MeanCi,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ExpMomentRow {
    pub t: f64,
    /// `η` as a multiple of `ν/ε`.
    pub eta_factor: f64,
    pub estimate: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct MomentReport {
    pub second: Vec<MomentRow>,
    /// `E exp(η‖ω(t)‖²)` against `2exp(η e^{−rt}‖ω₀‖²)`.
    pub exponential: Vec<ExpMomentRow>,
    /// `E exp(ην∫₀ᵗ‖∇ω‖²)` against `2exp(ηεt + η‖ω₀‖²)`.
    pub integral: Vec<ExpMomentRow>,
}

impl MomentReport {
    pub fn second_pass(&self) -> bool {
        self.second.iter().all(|r| r.pass)
    }

    pub fn exponential_pass(&self, eta_factor: f64) -> bool {
        self.exponential.iter().chain(&self.integral).filter(|r| r.eta_factor == eta_factor).all(|r| r.pass)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,mean_l2_sq,stderr,bound,pass")?;
        for r in &self.second {
            writeln!(w, "{},{},{},{},{}", r.t, r.mean.mean, r.mean.stderr, r.bound, r.pass)?;
        }
        Ok(())
    }
}

/// Checks an ensemble started from a common `ω₀` against the moment bounds
/// with slowest damping rate `r = ν/N² + τ` (`r = ν` on the unit torus).
pub fn moment_bound_check(cfg: &SimConfig, runs: &[Trajectory], omega0_sq: f64, eta_factors: &[f64]) -> Result<MomentReport> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let eps = cfg.forcing.epsilon();
    let r = cfg.slowest_rate();
    let len = runs.iter().map(|t| t.observations.len()).min().unwrap();
    // trapezoid ∫₀ᵗ‖∇ω‖² per member at each record
    let integrals: Vec<Vec<f64>> = runs
        .iter()
        .map(|t| {
            let mut acc = 0.0;
            let mut out = vec![0.0];
            for w in t.observations[..len].windows(2) {
                acc += 0.5 * (w[0].h1_sq + w[1].h1_sq) * (w[1].t - w[0].t);
                out.push(acc);
            }
            out
        })
        .collect();
    let mut second = Vec::with_capacity(len);
    let mut exponential = Vec::new();
    let mut integral = Vec::new();
    for i in 0..len {
        let t = runs[0].observations[i].t;
        let vals: Vec<f64> = runs.iter().map(|tr| tr.observations[i].l2_sq()).collect();
        let mean = mean_ci(&vals);
        let bound = (-2.0 * r * t).exp() * omega0_sq + if eps > 0.0 { eps / r } else { 0.0 };
        second.push(MomentRow { t, mean, bound, pass: mean.mean <= bound + 3.0 * mean.stderr });
        if eps == 0.0 {
            continue;
        }
        for &f in eta_factors {
            let eta = f * cfg.nu / eps;
            let estimate = vals.iter().map(|v| (eta * v).exp()).sum::<f64>() / vals.len() as f64;
            let bound = 2.0 * (eta * (-r * t).exp() * omega0_sq).exp();
            exponential.push(ExpMomentRow { t, eta_factor: f, estimate, bound, pass: estimate <= bound });
            let estimate = integrals.iter().map(|s| (eta * cfg.nu * s[i]).exp()).sum::<f64>() / runs.len() as f64;
            let bound = 2.0 * (eta * eps * t + eta * omega0_sq).exp();
            integral.push(ExpMomentRow { t, eta_factor: f, estimate, bound, pass: estimate <= bound });
        }
    }
    Ok(MomentReport { second, exponential, integral })
}

/// Shell-averaged energy spectrum.
///
/// Shell `s ≥ 1` collects lattice modes with `round(N|k|) = s`, so its
/// center is `κ = s/N` and its width `Δκ = 1/N`. The value is
/// `e(κ) = Σ_{k∈shell} |ω̂(k)|²/|k|² / Δκ`, which makes `Σ e(κ)Δκ` equal to
/// the energy density `‖u‖²/area` exactly. `kappa_eff` is the
/// enstrophy-weighted shell wavenumber, so `Σ e(κ)κ_eff²Δκ = ‖ω‖²/area`
/// exactly as well.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSeries {
    pub kappa: Vec<f64>,
    pub kappa_eff: Vec<f64>,
    pub e: Vec<f64>,
    pub dkappa: f64,
    pub samples: usize,
    /// Time window `(t_first, t_last)` of the averaged states.
    pub window: (f64, f64),
}

impl SpectrumSeries {
    pub fn energy_density(&self) -> f64 {
        self.e.iter().sum::<f64>() * self.dkappa
    }

    pub fn enstrophy_density(&self) -> f64 {
        self.e.iter().zip(&self.kappa_eff).map(|(e, k)| e * k * k).sum::<f64>() * self.dkappa
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "kappa,e_kappa")?;
        for (k, e) in self.kappa.iter().zip(&self.e) {
            writeln!(w, "{k},{e}")?;
        }
        Ok(())
    }
}

/// Running sum of shell spectra over states on one grid.
#[derive(Clone, Debug)]
pub struct SpectrumAccumulator {
    grid: Arc<Grid>,
    shell: Vec<usize>,
    energy: Vec<f64>,
    enstrophy: Vec<f64>,
    samples: usize,
    window: (f64, f64),
}

impl SpectrumAccumulator {
    pub fn new(grid: &Arc<Grid>) -> SpectrumAccumulator {
        let shell: Vec<usize> = (0..grid.len()).map(|i| shell_of(grid.mode_of(i))).collect();
        let shells = grid.retained_modes().map(|(i, _)| shell[i]).max().unwrap_or(0);
        SpectrumAccumulator {
            grid: grid.clone(),
            shell,
            energy: vec![0.0; shells],
            enstrophy: vec![0.0; shells],
            samples: 0,
            window: (f64::NAN, f64::NAN),
        }
    }

    pub fn add(&mut self, t: f64, f: &Field) -> Result<()> {
        if f.grid().spec() != self.grid.spec() {
            return Err(Error::Shape("spectrum states use different grids".into()));
        }
        let inv = self.grid.inv_k2();
        for (i, c) in f.coeffs().iter().enumerate() {
            let s = self.shell[i];
            if s == 0 || s > self.energy.len() {
                continue;
            }
            let a = c.norm_sqr();
            self.energy[s - 1] += a * inv[i];
            self.enstrophy[s - 1] += a;
        }
        if self.samples == 0 {
            self.window.0 = t;
        }
        self.window.1 = t;
        self.samples += 1;
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn finish(&self) -> Result<SpectrumSeries> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("no states for the spectrum".into()));
        }
        let scale = self.grid.spec().scale;
        let dkappa = 1.0 / scale;
        let n = self.samples as f64;
        let kappa: Vec<f64> = (1..=self.energy.len()).map(|s| s as f64 / scale).collect();
        let kappa_eff = (0..kappa.len())
            .map(|s| if self.energy[s] > 0.0 { (self.enstrophy[s] / self.energy[s]).sqrt() } else { kappa[s] })
            .collect();
        Ok(SpectrumSeries {
            e: self.energy.iter().map(|v| v / n / dkappa).collect(),
            kappa,
            kappa_eff,
            dkappa,
            samples: self.samples,
            window: self.window,
        })
    }
}

/// Time-averaged spectrum of `states` (all on the same grid).
pub fn energy_spectrum(states: &[(f64, &Field)]) -> Result<SpectrumSeries> {
    let (_, first) = states.first().ok_or_else(|| Error::InvalidArgument("no states for the spectrum".into()))?;
    let mut acc = SpectrumAccumulator::new(first.grid());
    for (t, f) in states {
        acc.add(*t, f)?;
    }
    acc.finish()
}

fn shell_of(m: (i64, i64)) -> usize {
    (((m.0 * m.0 + m.1 * m.1) as f64).sqrt()).round() as usize
}

#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub shells: usize,
    /// `ν^{−1/2}ε^{1/6}`, the predicted viscous end of the direct cascade.
    pub kappa_nu: f64,
    /// `τ^{3/2}ε′^{−1/2}`, the predicted friction scale.
    pub kappa_tau: f64,
}

/// Least-squares slope of `log e` against `log κ` on `[κ_lo, κ_hi]`.
/// `kappa_nu` and `kappa_tau` use the densities `ε/area` and `ε′/area` when
/// `cfg` is given and are `NaN` otherwise.
pub fn slope_fit(spec: &SpectrumSeries, kappa_lo: f64, kappa_hi: f64, cfg: Option<&SimConfig>) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = spec
        .kappa
        .iter()
        .zip(&spec.e)
        .filter(|(k, _)| **k >= kappa_lo && **k <= kappa_hi)
        .map(|(k, e)| (*k, *e))
        .collect();
    if pts.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "slope fit over [{kappa_lo}, {kappa_hi}] has {} shells, need at least 5",
            pts.len()
        )));
    }
    if pts.iter().any(|p| !(p.1 > 0.0)) {
        return Err(Error::InvalidArgument("spectrum has non-positive values in the fit range".into()));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (intercept, slope, stderr) = linear_fit(&x, &y);
    let (kappa_nu, kappa_tau) = match cfg {
        Some(c) => {
            let area = c.grid.area();
            let eps = c.forcing.epsilon() / area;
            let epsp = c.forcing.epsilon_prime() / area;
            (c.nu.powf(-0.5) * eps.powf(1.0 / 6.0), c.tau.powf(1.5) * epsp.powf(-0.5))
        }
        None => (f64::NAN, f64::NAN),
    };
    Ok(SlopeFit { slope, stderr, intercept, shells: pts.len(), kappa_nu, kappa_tau })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingRow {
    pub t: f64,
    pub dist: f64,
    pub dist_low: f64,
    pub dist_high: f64,
}

pub fn write_coupling_csv<W: Write>(w: &mut W, rows: &[CouplingRow]) -> Result<()> {
    writeln!(w, "t,dist,dist_low,dist_high")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.t, r.dist, r.dist_low, r.dist_high)?;
    }
    Ok(())
}

/// Runs two copies from `a` and `b` with the same noise and records
/// `‖ω_a − ω_b‖` and its split at `low_cutoff`.
pub fn coupling_distance(
    cfg: &SimConfig,
    a: &Field,
    b: &Field,
    low_cutoff: f64,
    stream: NoiseStream,
) -> Result<Vec<CouplingRow>> {
    let model = cfg.model()?;
    let grid = model.grid().clone();
    if a.grid().spec() != grid.spec() || b.grid().spec() != grid.spec() {
        return Err(Error::Shape("coupled states do not match the configured grid".into()));
    }
    let row = |t: f64, x: &Field, y: &Field| {
        let d = x.sub(y);
        CouplingRow { t, dist: d.norm(), dist_low: project_low(&d, low_cutoff).norm(), dist_high: project_high(&d, low_cutoff).norm() }
    };
    let (mut x, mut y) = (a.clone(), b.clone());
    let mut rows = vec![row(0.0, &x, &y)];
    let steps = cfg.steps();
    for n in 0..steps {
        let inc = sample_increment(&cfg.forcing, &grid, cfg.dt, &stream, n as u64);
        let t = n as f64 * cfg.dt;
        x = model.step(&x, &inc, t)?;
        y = model.step(&y, &inc, t)?;
        let k = n + 1;
        if k % cfg.output_every == 0 || k == steps {
            rows.push(row(k as f64 * cfg.dt, &x, &y));
        }
    }
    Ok(rows)
}

/// Exact stationary `E‖ω‖²` of the scheme without advection,
/// `Σ_k E²γ²dt/(1−E²)·‖e_k‖²` with `E = e^{−(ν|k|²+τ)dt}`.
pub fn forcing_ou_variance(forcing: &ForcingSpec, grid: &Grid, nu: f64, tau: f64, dt: f64) -> f64 {
    let half_area = 0.5 * grid.area();
    forcing
        .modes()
        .iter()
        .map(|f| {
            let a = nu * grid.wavenumber(f.mode).powi(2) + tau;
            let e2 = (-2.0 * a * dt).exp();
            e2 * f.gamma * f.gamma * dt / (1.0 - e2) * half_area
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{simulate, simulate_ensemble};
    use crate::spectral::{norms, GridSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectrum_of_shear() {
        let grid = Grid::new(GridSpec::new(16, 1.0).unwrap()).unwrap();
        let f = Field::from_fn(&grid, |x, _| x.sin());
        let s = energy_spectrum(&[(0.0, &f)]).unwrap();
        assert!((s.e[0] - 0.5).abs() < 1e-15);
        assert!(s.e[1..].iter().all(|&v| v < 1e-28));
        let n = norms(&f);
        assert!((s.energy_density() - 2.0 * n.energy / grid.area()).abs() < 1e-15);
    }

    #[test]
    fn spectrum_sum_rules_on_random_fields() {
        let grid = Grid::new(GridSpec::new(32, 2.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let f = Field::random(&grid, f64::INFINITY, 1.0, &mut rng);
            let s = energy_spectrum(&[(0.0, &f)]).unwrap();
            let n = norms(&f);
            let energy = 2.0 * n.energy / grid.area();
            let enstrophy = n.l2 * n.l2 / grid.area();
            assert!((s.energy_density() - energy).abs() < 1e-12 * energy);
            assert!((s.enstrophy_density() - enstrophy).abs() < 1e-12 * enstrophy);
            assert!(s.e.iter().all(|&v| v >= 0.0));
            assert!((s.kappa[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn synthetic_power_laws() {
        for p in [-3.0, -5.0 / 3.0] {
            let kappa: Vec<f64> = (1..=60).map(|k| k as f64).collect();
            let e = kappa.iter().map(|k| k.powf(p)).collect();
            let s = SpectrumSeries { kappa_eff: kappa.clone(), kappa, e, dkappa: 1.0, samples: 1, window: (0.0, 0.0) };
            let fit = slope_fit(&s, 10.0, 50.0, None).unwrap();
            assert!((fit.slope - p).abs() < 1e-10);
            assert!(slope_fit(&s, 10.0, 13.0, None).is_err());
        }
    }

    #[test]
    fn coupling_of_identical_states_is_zero() {
        let cfg = SimConfig::new(GridSpec::new(16, 1.0).unwrap(), 0.1, 0.05, 1.0, ForcingSpec::four_mode(0.5));
        let grid = Grid::new(cfg.grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Field::random(&grid, 4.0, 0.3, &mut rng);
        let rows = coupling_distance(&cfg, &a, &a, 2.0, NoiseStream::new(1, 0)).unwrap();
        assert_eq!(rows.len(), 21);
        assert!(rows.iter().all(|r| r.dist == 0.0));
    }

    #[test]
    fn high_mode_difference_decays_at_stokes_rate() {
        let mut cfg = SimConfig::new(GridSpec::new(32, 1.0).unwrap(), 0.5, 0.01, 0.2, ForcingSpec::four_mode(0.3));
        cfg.tau = 0.1;
        let grid = Grid::new(cfg.grid).unwrap();
        let a = Field::zeros(&grid);
        let mut b = Field::zeros(&grid);
        b.add_basis((6, 0), 1e-6);
        let rows = coupling_distance(&cfg, &a, &b, 3.0, NoiseStream::new(4, 0)).unwrap();
        let last = rows.last().unwrap();
        let expect = rows[0].dist * (-(0.5 * 36.0 + 0.1) * last.t).exp();
        assert!((last.dist / expect - 1.0).abs() < 0.05, "{} vs {expect}", last.dist);
        assert!(last.dist_low < 1e-3 * last.dist);
    }

    #[test]
    fn linear_balance_within_three_sigma() {
        let mut cfg = SimConfig::new(GridSpec::new(16, 1.0).unwrap(), 0.2, 0.02, 400.0, ForcingSpec::four_mode(0.5));
        cfg.tau = 0.1;
        cfg.advection = false;
        cfg.output_every = 5;
        let runs = simulate_ensemble(&cfg, None, 4).unwrap();
        let rep = balance_report(&cfg, &runs, default_burn_in(&cfg), 20).unwrap();
        // the discrete chain is off the continuum target by O(a dt)
        let grid = Grid::new(cfg.grid).unwrap();
        let exact: f64 = cfg
            .forcing
            .modes()
            .iter()
            .map(|f| {
                let a = cfg.nu * grid.wavenumber(f.mode).powi(2) + cfg.tau;
                let e2 = (-2.0 * a * cfg.dt).exp();
                a * e2 * f.gamma * f.gamma * cfg.dt / (1.0 - e2) * 0.5
            })
            .sum();
        assert!((rep.enstrophy_total.mean - exact).abs() <= 3.0 * rep.enstrophy_total.stderr, "{rep:?}");
        assert!((exact / rep.enstrophy_target - 1.0).abs() < 0.01);
        assert!(rep.energy_residual().abs() < 0.1);
        let mut buf = Vec::new();
        rep.write_kv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("enstrophy_target = "));
    }

    #[test]
    fn short_run_is_a_window_error() {
        let cfg = SimConfig::new(GridSpec::new(16, 1.0).unwrap(), 0.1, 0.05, 1.0, ForcingSpec::four_mode(0.5));
        let run = simulate(&cfg, None, NoiseStream::new(0, 0)).unwrap();
        assert!(matches!(balance_report(&cfg, &[run], default_burn_in(&cfg), 10), Err(Error::Window(_))));
    }

    #[test]
    fn zero_start_bound_at_time_zero() {
        let cfg = SimConfig::new(GridSpec::new(16, 1.0).unwrap(), 0.1, 0.05, 0.0, ForcingSpec::four_mode(0.5));
        let runs = simulate_ensemble(&cfg, None, 3).unwrap();
        let rep = moment_bound_check(&cfg, &runs, 0.0, &[0.25]).unwrap();
        assert_eq!(rep.second.len(), 1);
        assert_eq!(rep.second[0].mean.mean, 0.0);
        assert!(rep.second_pass() && rep.exponential_pass(0.25));
    }

    #[test]
    fn ou_variance_is_below_bound() {
        let grid = Grid::new(GridSpec::new(16, 1.0).unwrap()).unwrap();
        let f = ForcingSpec::four_mode(0.5);
        let v = forcing_ou_variance(&f, &grid, 0.1, 0.0, 0.01);
        assert!(v <= f.epsilon() / (2.0 * 0.1) * 1.001);
    }
}

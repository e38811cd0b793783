//! Exact Jacobian of the discrete integrator along a recorded path.
//!
//! One step of the scheme is `ω′ = E(ω + ΔW) + Φ·N(ω)` with diagonal `E`
//! (decay) and `Φ` (`φ₁·dt`), so its derivative is
//! `J_n ξ = Eξ + Φ·DN(ω_n)ξ` and its adjoint `J_n* η = Eη + DN(ω_n)*(Φη)`.
//! Differentiating the discretization (not the PDE) keeps finite-difference
//! and adjoint checks exact up to roundoff at any step size.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, NoiseStream};
use crate::integrator::{Model, SimConfig};
use crate::spectral::{
    nonlinear_adjoint, nonlinear_linearized, project_high, Field, TransportFrame, VorticityState,
};
use crate::stats::{mean_ci, MeanCi};

/// What a tangent vector stands for; carried for bookkeeping only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TangentRole {
    /// Derivative with respect to the initial condition.
    Xi,
    /// Response to a control through the noise directions.
    Zeta,
    /// Control residual `ξ − ζ`.
    Rho,
}

#[derive(Clone, Debug)]
pub struct TangentField {
    pub field: Field,
    pub role: TangentRole,
}

/// Base trajectory stored at step resolution together with its noise.
///
/// `states[n]` is the state at the start of step `n`; `frames[n]` holds the
/// physical velocity and gradient of `states[n]` (absent without advection).
pub struct FrozenPath {
    model: Model,
    t0: f64,
    states: Vec<Field>,
    frames: Vec<Option<TransportFrame>>,
    noise: Vec<Vec<f64>>,
}

impl FrozenPath {
    /// Integrates `steps` steps from `start`, drawing the noise for global
    /// step `first_step + n` from `stream`.
    pub fn record(
        model: &Model,
        forcing: &ForcingSpec,
        start: &VorticityState,
        steps: usize,
        stream: &NoiseStream,
        first_step: u64,
    ) -> Result<FrozenPath> {
        let grid = model.grid().clone();
        if start.grid().spec() != grid.spec() {
            return Err(Error::Shape("start state and model use different grids".into()));
        }
        let mut states = Vec::with_capacity(steps + 1);
        let mut frames = Vec::with_capacity(steps);
        let mut noise = Vec::with_capacity(steps);
        let mut w = start.field.clone();
        for n in 0..steps {
            let dbeta = stream.increments(first_step + n as u64, forcing.dim(), model.dt);
            let inc = forcing.increment_from(&grid, &dbeta);
            let (tend, frame) = model.tendency(&w);
            let t = start.time + n as f64 * model.dt;
            let next = model.finish_step(&w, tend.as_ref(), &inc, t)?;
            states.push(std::mem::replace(&mut w, next));
            frames.push(frame);
            noise.push(dbeta);
        }
        states.push(w);
        Ok(FrozenPath { model: model.clone(), t0: start.time, states, frames, noise })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.model.dt
    }

    pub fn state(&self, n: usize) -> &Field {
        &self.states[n]
    }

    pub fn end_state(&self) -> VorticityState {
        VorticityState::new(self.states[self.len()].clone(), self.time(self.len()))
    }

    /// Brownian increments `Δβ` used at step `n`.
    pub fn noise(&self, n: usize) -> &[f64] {
        &self.noise[n]
    }

    fn check_range(&self, from: usize, to: usize) -> Result<()> {
        if from > to || to > self.len() {
            return Err(Error::Path(format!("step range {from}..{to} outside path of {} steps", self.len())));
        }
        Ok(())
    }

    /// `J_n ξ`, or `J_n(ξ + Σ u_k γ_k ē_k)` with a control impulse `u`
    /// (one value per forced direction) applied at the start of the step.
    pub fn tangent_step(&self, n: usize, xi: &Field, control: Option<(&ForcingSpec, &[f64])>) -> Result<Field> {
        self.check_range(n, n + 1)?;
        let mut x = xi.clone();
        if let Some((forcing, u)) = control {
            if u.len() != forcing.dim() {
                return Err(Error::Path(format!("control has {} entries, forcing has {}", u.len(), forcing.dim())));
            }
            x.axpy(1.0, &forcing.apply_orthonormal(xi.grid(), u));
        }
        let decay = self.model.decay();
        let mut out = x.clone();
        out.map_diagonal(|i| decay[i]);
        if let Some(frame) = &self.frames[n] {
            let mut d = nonlinear_linearized(frame, &x);
            let phi = self.model.phi_dt();
            d.map_diagonal(|i| phi[i]);
            out.axpy(1.0, &d);
        }
        Ok(out)
    }

    /// `J_n* η`.
    pub fn adjoint_step(&self, n: usize, eta: &Field) -> Result<Field> {
        self.check_range(n, n + 1)?;
        let decay = self.model.decay();
        let mut out = eta.clone();
        out.map_diagonal(|i| decay[i]);
        if let Some(frame) = &self.frames[n] {
            let phi = self.model.phi_dt();
            let mut scaled = eta.clone();
            scaled.map_diagonal(|i| phi[i]);
            out.axpy(1.0, &nonlinear_adjoint(frame, &scaled));
        }
        Ok(out)
    }

    /// `J_{from,to} ξ`.
    pub fn propagate(&self, from: usize, to: usize, xi: &Field) -> Result<Field> {
        self.check_range(from, to)?;
        let mut x = xi.clone();
        for n in from..to {
            x = self.tangent_step(n, &x, None)?;
        }
        Ok(x)
    }

    /// `J*_{from,to} η`, the reverse sweep.
    pub fn adjoint_apply(&self, from: usize, to: usize, eta: &Field) -> Result<Field> {
        self.check_range(from, to)?;
        let mut y = eta.clone();
        for n in (from..to).rev() {
            y = self.adjoint_step(n, &y)?;
        }
        Ok(y)
    }
}

/// Largest singular value of a linear map from its action and adjoint.
///
/// Lanczos iteration on `A*A` with full reorthogonalization, started from
/// `start`. Stops when the Ritz residual `β_j|s_j|` of the top Ritz pair
/// drops below `tol` times the Ritz value.
pub fn operator_norm(
    apply: impl Fn(&Field) -> Result<Field>,
    adjoint: impl Fn(&Field) -> Result<Field>,
    start: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n0 = start.norm();
    if n0 == 0.0 {
        return Err(Error::InvalidArgument("operator norm needs a nonzero start vector".into()));
    }
    let mut basis = vec![start.scaled(1.0 / n0)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut change = f64::INFINITY;
    for j in 0..max_iter {
        let mut w = adjoint(&apply(&basis[j])?)?;
        alpha.push(w.inner(&basis[j]));
        for _ in 0..2 {
            for v in &basis {
                let c = w.inner(v);
                w.axpy(-c, v);
            }
        }
        let b = w.norm();
        let k = alpha.len();
        let t = nalgebra::DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = nalgebra::SymmetricEigen::new(t);
        let (top, theta) = eig.eigenvalues.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
        if theta <= 0.0 {
            return Ok(0.0);
        }
        let residual = b * eig.eigenvectors[(k - 1, top)].abs();
        change = residual / theta;
        if change < tol || b <= 1e-14 * theta {
            return Ok(theta.sqrt());
        }
        beta.push(b);
        basis.push(w.scaled(1.0 / b));
    }
    Err(Error::NoConvergence { iterations: max_iter, change })
}

#[derive(Clone, Debug)]
pub struct ContractionOptions {
    pub p: f64,
    pub samples: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        ContractionOptions { p: 1.0, samples: 8, tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct ContractionEstimate {
    pub cutoff: f64,
    pub horizon: f64,
    pub p: f64,
    /// `E‖(1−π_ℓ)J_{0,T}‖^p`.
    pub left: MeanCi,
    /// `E‖J_{0,T}(1−π_ℓ)‖^p`.
    pub right: MeanCi,
    /// Per-sample `‖(1−π_ℓ)J_{0,T}‖` and `‖J_{0,T}(1−π_ℓ)‖`.
    pub norms: Vec<(f64, f64)>,
    /// Stokes value `e^{−(νm²+τ)T}`, `m` the smallest retained `|k|` above the cutoff.
    pub diagonal_prediction: f64,
}

impl ContractionEstimate {
    pub fn write_csv<W: Write>(&self, w: &mut W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "cutoff,T,p,mean,ci_lo,ci_hi,samples")?;
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            self.cutoff, self.horizon, self.p, self.left.mean, self.left.lo, self.left.hi, self.left.n
        )?;
        Ok(())
    }
}

/// Smallest retained `|k|` strictly above `cutoff`.
pub fn first_mode_above(model: &Model, cutoff: f64) -> Option<f64> {
    let grid = model.grid();
    grid.retained_modes()
        .map(|(_, m)| grid.wavenumber(m))
        .filter(|&k| k > cutoff * (1.0 + 1e-12))
        .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.min(k))))
}

/// Monte Carlo estimate of the high-mode contraction of `J_{0,T}` from
/// `initial`, one noise realization per sample.
pub fn contraction_stat(
    cfg: &SimConfig,
    initial: &VorticityState,
    cutoff: f64,
    horizon: f64,
    opts: &ContractionOptions,
) -> Result<ContractionEstimate> {
    if opts.p < 1.0 || opts.samples == 0 {
        return Err(Error::InvalidArgument("contraction needs p >= 1 and at least one sample".into()));
    }
    let model = cfg.model()?;
    let steps = (horizon / cfg.dt).round() as usize;
    let m = first_mode_above(&model, cutoff)
        .ok_or_else(|| Error::InvalidArgument(format!("no retained mode above cutoff {cutoff}")))?;
    let diagonal_prediction = (-(cfg.nu * m * m + cfg.tau) * steps as f64 * cfg.dt).exp();
    let first = (initial.time / cfg.dt).round() as u64;
    let norms: Vec<(f64, f64)> = (0..opts.samples)
        .into_par_iter()
        .map(|s| {
            let stream = NoiseStream::new(cfg.seed, s as u64);
            let path = FrozenPath::record(&model, &cfg.forcing, initial, steps, &stream, first)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x7f4a_7c15 + s as u64));
            let start = Field::random(model.grid(), f64::INFINITY, 1.0, &mut rng);
            let left = operator_norm(
                |x| Ok(project_high(&path.propagate(0, steps, x)?, cutoff)),
                |y| path.adjoint_apply(0, steps, &project_high(y, cutoff)),
                &start,
                opts.tol,
                opts.max_iter,
            )?;
            let right = operator_norm(
                |x| path.propagate(0, steps, &project_high(x, cutoff)),
                |y| Ok(project_high(&path.adjoint_apply(0, steps, y)?, cutoff)),
                &project_high(&start, cutoff),
                opts.tol,
                opts.max_iter,
            )?;
            Ok((left, right))
        })
        .collect::<Result<_>>()?;
    let left: Vec<f64> = norms.iter().map(|n| n.0.powf(opts.p)).collect();
    let right: Vec<f64> = norms.iter().map(|n| n.1.powf(opts.p)).collect();
    Ok(ContractionEstimate {
        cutoff,
        horizon: steps as f64 * cfg.dt,
        p: opts.p,
        left: mean_ci(&left),
        right: mean_ci(&right),
        norms,
        diagonal_prediction,
    })
}

/// Least-squares fit of `log‖ξ(t)‖ − log‖ξ(s)‖ ≈ C(t−s) + δ∫_s^t‖∇ω‖²`
/// over consecutive windows of `window` steps. Returns `(C, δ)`.
pub fn growth_fit(path: &FrozenPath, xi: &Field, window: usize) -> Result<(f64, f64)> {
    if window == 0 || path.len() < 2 * window {
        return Err(Error::InvalidArgument("growth fit needs at least two windows".into()));
    }
    let dt = path.model().dt;
    let mut rows = Vec::new();
    let mut x = xi.clone();
    let mut n = 0;
    while n + window <= path.len() {
        let before = x.norm().ln();
        let mut integral = 0.0;
        for k in n..n + window {
            let h = crate::spectral::norms(path.state(k)).h1;
            integral += h * h * dt;
            x = path.tangent_step(k, &x, None)?;
        }
        rows.push((window as f64 * dt, integral, x.norm().ln() - before));
        n += window;
    }
    // normal equations for two unknowns
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, i, y) in &rows {
        a11 += t * t;
        a12 += t * i;
        a22 += i * i;
        b1 += t * y;
        b2 += i * y;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-14 * a11 * a22 {
        return Ok((b1 / a11, 0.0));
    }
    Ok(((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{project_low, GridSpec};

    fn setup(advection: bool, nu: f64, steps: usize) -> (SimConfig, FrozenPath, ChaCha8Rng) {
        let mut cfg = SimConfig::new(GridSpec::new(16, 1.0).unwrap(), nu, 0.02, steps as f64 * 0.02, ForcingSpec::four_mode(0.5));
        cfg.advection = advection;
        cfg.tau = 0.05;
        let model = cfg.model().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w0 = VorticityState::new(Field::random(model.grid(), 4.0, 0.3, &mut rng), 0.0);
        let path = FrozenPath::record(&model, &cfg.forcing, &w0, steps, &NoiseStream::new(5, 0), 0).unwrap();
        (cfg, path, rng)
    }

    #[test]
    fn stokes_propagator_is_diagonal() {
        let (cfg, path, mut rng) = setup(false, 0.1, 10);
        let xi = Field::random(path.model().grid(), 6.0, 1.0, &mut rng);
        let out = path.propagate(0, 10, &xi).unwrap();
        let grid = path.model().grid();
        for (i, c) in out.coeffs().iter().enumerate() {
            let a = cfg.nu * grid.k2()[i] + cfg.tau;
            let expect = xi.coeffs()[i] * (-a * 10.0 * cfg.dt).exp();
            assert!((c - expect).norm() <= 1e-14 * xi.max_abs());
        }
        let back = path.adjoint_apply(0, 10, &xi).unwrap();
        assert!(back.sub(&out).max_abs() <= 1e-15 * xi.max_abs());
    }

    #[test]
    fn zero_stays_zero() {
        let (_, path, _) = setup(true, 0.05, 5);
        let z = Field::zeros(path.model().grid());
        assert_eq!(path.propagate(0, 5, &z).unwrap().max_abs(), 0.0);
        assert_eq!(path.adjoint_apply(0, 5, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn linearity_and_semigroup() {
        let (_, path, mut rng) = setup(true, 0.05, 12);
        let g = path.model().grid().clone();
        let a = Field::random(&g, 5.0, 1.0, &mut rng);
        let b = Field::random(&g, 5.0, 1.0, &mut rng);
        let mut combo = a.scaled(0.7);
        combo.axpy(-1.3, &b);
        let lhs = path.propagate(0, 12, &combo).unwrap();
        let mut rhs = path.propagate(0, 12, &a).unwrap().scaled(0.7);
        rhs.axpy(-1.3, &path.propagate(0, 12, &b).unwrap());
        assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * lhs.max_abs());
        let split = path.propagate(5, 12, &path.propagate(0, 5, &a).unwrap()).unwrap();
        assert_eq!(split, path.propagate(0, 12, &a).unwrap());
    }

    #[test]
    fn adjoint_pairing() {
        let (_, path, mut rng) = setup(true, 0.05, 15);
        let g = path.model().grid().clone();
        for _ in 0..5 {
            let xi = Field::random(&g, 8.0, 1.0, &mut rng);
            let eta = Field::random(&g, 8.0, 1.0, &mut rng);
            let lhs = path.propagate(0, 15, &xi).unwrap().inner(&eta);
            let rhs = xi.inner(&path.adjoint_apply(0, 15, &eta).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * xi.norm() * eta.norm(), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn range_errors() {
        let (_, path, _) = setup(true, 0.05, 3);
        let z = Field::zeros(path.model().grid());
        assert!(matches!(path.propagate(2, 5, &z), Err(Error::Path(_))));
        assert!(matches!(path.adjoint_apply(3, 2, &z), Err(Error::Path(_))));
        let f = ForcingSpec::four_mode(1.0);
        assert!(path.tangent_step(0, &z, Some((&f, &[1.0]))).is_err());
    }

    #[test]
    fn operator_norm_on_diagonal_map() {
        let (cfg, path, mut rng) = setup(false, 0.2, 10);
        let g = path.model().grid().clone();
        let start = Field::random(&g, f64::INFINITY, 1.0, &mut rng);
        let s = operator_norm(
            |x| Ok(project_high(&path.propagate(0, 10, x)?, 2.0)),
            |y| path.adjoint_apply(0, 10, &project_high(y, 2.0)),
            &start,
            1e-12,
            200,
        )
        .unwrap();
        // smallest |k| above 2 is sqrt(5)
        let expect = (-(cfg.nu * 5.0 + cfg.tau) * 0.2f64).exp();
        assert!((s - expect).abs() < 1e-10 * expect, "{s} vs {expect}");
        let low = operator_norm(|x| Ok(project_low(x, 2.0)), |y| Ok(project_low(y, 2.0)), &start, 1e-12, 10).unwrap();
        assert!((low - 1.0).abs() < 1e-14);
    }

    #[test]
    fn growth_fit_runs() {
        let (_, path, mut rng) = setup(true, 0.05, 40);
        let xi = Field::random(path.model().grid(), 4.0, 1.0, &mut rng);
        let (c, d) = growth_fit(&path, &xi, 5).unwrap();
        assert!(c.is_finite() && d.is_finite());
    }
}

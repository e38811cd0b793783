//! Malliavin matrix on a Galerkin subspace, the cone statistic and the
//! alternating low-mode control.
//!
//! The noise-to-state map over a stored interval is discretized as
//! `A v = Σ_j w_j J_{s_j,t} Q̄ v_j` with trapezoid weights `w_j` on nodes
//! aligned to integrator steps and `Q̄ v = Σ_k γ_k v_k ē_k`. Its adjoint
//! for the weighted product `Σ_j w_j v_j·v′_j` is
//! `(A* y)_{j,k} = γ_k ⟨ē_k, J*_{s_j,t} y⟩`, and `M = π_g A A* π_g`.
//! The Tikhonov shift of the control is called `λ` here.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, NoiseStream};
use crate::integrator::{Model, SimConfig};
use crate::spectral::{project_low, Field, Grid, Mode, VorticityState};
use crate::stats::{linear_fit, median};
use crate::tangent::FrozenPath;

/// Orthonormal real basis `{ē_k : 0 < |k| ≤ cutoff}`, ordered by `|k|²`
/// and then by lattice index.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinBasis {
    modes: Vec<Mode>,
    cutoff: f64,
}

impl GalerkinBasis {
    pub fn new(grid: &Grid, cutoff: f64) -> Result<GalerkinBasis> {
        if !(cutoff > 0.0) {
            return Err(Error::InvalidArgument(format!("galerkin cutoff must be positive, got {cutoff}")));
        }
        if cutoff * grid.spec().scale > grid.cutoff() as f64 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "galerkin cutoff {cutoff} exceeds the dealiased range of the grid (lattice radius {})",
                grid.cutoff()
            )));
        }
        let mut modes: Vec<Mode> = grid
            .retained_modes()
            .map(|(_, m)| m)
            .filter(|&m| m != (0, 0) && grid.wavenumber(m) <= cutoff * (1.0 + 1e-12))
            .collect();
        modes.sort_by_key(|m| (m.0 * m.0 + m.1 * m.1, *m));
        Ok(GalerkinBasis { modes, cutoff })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `⟨f, ē_k⟩` for every basis mode.
    pub fn coords(&self, f: &Field) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.modes.iter().map(|&m| f.orthonormal_coordinate(m)))
    }

    pub fn field(&self, grid: &std::sync::Arc<Grid>, y: &DVector<f64>) -> Field {
        let mut f = Field::zeros(grid);
        for (&m, &v) in self.modes.iter().zip(y.iter()) {
            f.add_orthonormal(m, v);
        }
        f
    }

    /// Marks the basis directions with `|k| ≤ low_cutoff`.
    pub fn low_mask(&self, grid: &Grid, low_cutoff: f64) -> Vec<bool> {
        self.modes.iter().map(|&m| grid.wavenumber(m) <= low_cutoff * (1.0 + 1e-12)).collect()
    }
}

/// Quadrature nodes `(step index, weight)` on `[from, to]` with `substeps`
/// equal panels.
pub fn quadrature_nodes(from: usize, to: usize, substeps: usize, dt: f64) -> Result<Vec<(usize, f64)>> {
    if from == to {
        return Ok(vec![(from, 0.0)]);
    }
    let steps = to.checked_sub(from).ok_or_else(|| Error::Path(format!("empty interval {from}..{to}")))?;
    if substeps == 0 || steps % substeps != 0 {
        return Err(Error::InvalidArgument(format!("{substeps} quadrature panels do not divide {steps} steps")));
    }
    let stride = steps / substeps;
    let h = stride as f64 * dt;
    Ok((0..=substeps)
        .map(|j| {
            let w = if j == 0 || j == substeps { 0.5 * h } else { h };
            (from + j * stride, w)
        })
        .collect())
}

/// `(A* y)_{j,k}` for each node `j` (outer) and forced direction `k`.
pub fn adjoint_noise_map(
    path: &FrozenPath,
    forcing: &ForcingSpec,
    nodes: &[(usize, f64)],
    to: usize,
    y: &Field,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); nodes.len()];
    let mut eta = y.clone();
    let mut at = to;
    for (j, &(s, _)) in nodes.iter().enumerate().rev() {
        eta = path.adjoint_apply(s, at, &eta)?;
        at = s;
        out[j] = forcing.modes().iter().map(|f| f.gamma * eta.orthonormal_coordinate(f.mode)).collect();
    }
    Ok(out)
}

/// `A v = Σ_j w_j J_{s_j,t} Q̄ v_j`, realized by control impulses in the
/// tangent solver.
pub fn apply_noise_map(
    path: &FrozenPath,
    forcing: &ForcingSpec,
    nodes: &[(usize, f64)],
    to: usize,
    v: &[Vec<f64>],
) -> Result<Field> {
    if v.len() != nodes.len() {
        return Err(Error::Path(format!("control has {} nodes, quadrature has {}", v.len(), nodes.len())));
    }
    let grid = path.model().grid().clone();
    let mut zeta = Field::zeros(&grid);
    let mut next = 0;
    let from = nodes.first().map_or(to, |n| n.0);
    for n in from..to {
        if next < nodes.len() && nodes[next].0 == n {
            let u: Vec<f64> = v[next].iter().map(|x| nodes[next].1 * x).collect();
            zeta = path.tangent_step(n, &zeta, Some((forcing, &u)))?;
            next += 1;
        } else {
            zeta = path.tangent_step(n, &zeta, None)?;
        }
    }
    if next < nodes.len() && nodes[next].0 == to {
        let u: Vec<f64> = v[next].iter().map(|x| nodes[next].1 * x).collect();
        zeta.axpy(1.0, &forcing.apply_orthonormal(&grid, &u));
    }
    Ok(zeta)
}

#[derive(Clone, Debug)]
pub struct MalliavinMatrix {
    pub matrix: DMatrix<f64>,
    pub basis: GalerkinBasis,
    pub t_start: f64,
    pub t_end: f64,
    pub quad_substeps: usize,
}

impl MalliavinMatrix {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues
    }

    /// Checks symmetry to `1e−12` and `λ_min ≥ −1e−10·trace`.
    pub fn validate(&self) -> Result<()> {
        check_psd(&self.matrix)
    }

    /// `⟨Mφ, φ⟩ / ‖φ‖²`.
    pub fn rayleigh(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&(&self.matrix * phi)) / phi.norm_squared()
    }
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("matrix is {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("matrix is not symmetric (defect {asym:e})")));
    }
    let trace = m.trace();
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if min_eig < -1e-10 * trace.abs() {
        return Err(Error::NotPsd { min_eig, trace });
    }
    Ok(())
}

/// Malliavin matrix of `path` over steps `from..to` on the Galerkin space
/// `|k| ≤ galerkin_cutoff`, with `quad_substeps` trapezoid panels.
pub fn assemble_matrix(
    path: &FrozenPath,
    from: usize,
    to: usize,
    forcing: &ForcingSpec,
    galerkin_cutoff: f64,
    quad_substeps: usize,
) -> Result<MalliavinMatrix> {
    if to > path.len() || from > to {
        return Err(Error::Path(format!("interval {from}..{to} outside path of {} steps", path.len())));
    }
    let grid = path.model().grid().clone();
    let basis = GalerkinBasis::new(&grid, galerkin_cutoff)?;
    let nodes = quadrature_nodes(from, to, quad_substeps.max(1), path.model().dt)?;
    let d = basis.dim();
    let rows: Vec<Vec<Vec<f64>>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut e = Field::zeros(&grid);
            e.add_orthonormal(basis.modes()[i], 1.0);
            adjoint_noise_map(path, forcing, &nodes, to, &e)
        })
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::zeros(d, d);
    for i in 0..d {
        for l in i..d {
            let mut s = 0.0;
            for (j, &(_, w)) in nodes.iter().enumerate() {
                let dot: f64 = rows[i][j].iter().zip(&rows[l][j]).map(|(a, b)| a * b).sum();
                s += w * dot;
            }
            matrix[(i, l)] = s;
            matrix[(l, i)] = s;
        }
    }
    Ok(MalliavinMatrix {
        matrix,
        basis,
        t_start: path.time(from),
        t_end: path.time(to),
        quad_substeps: if from == to { 0 } else { quad_substeps },
    })
}

/// `inf {⟨Mφ,φ⟩/‖φ‖² : ‖π_ℓφ‖ ≥ α‖φ‖}` on the Galerkin space, `π_ℓ` the
/// modes with `|k| ≤ low_cutoff`.
pub fn cone_min(m: &MalliavinMatrix, grid: &Grid, low_cutoff: f64, alpha: f64) -> Result<f64> {
    if low_cutoff > m.basis.cutoff() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "low cutoff {low_cutoff} exceeds galerkin cutoff {}",
            m.basis.cutoff()
        )));
    }
    cone_min_masked(&m.matrix, &m.basis.low_mask(grid, low_cutoff), alpha)
}

/// Cone minimum for a coordinate projection given by `low`.
///
/// Uses the dual `max_{μ≥0} λ_min(M − μ(P − α²I))`, which is exact for
/// dimension at least 3 since the joint numerical range of `(M, P)` is then
/// convex. The dual is concave in `μ` and is maximized by golden section.
pub fn cone_min_masked(m: &DMatrix<f64>, low: &[bool], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if low.len() != m.nrows() {
        return Err(Error::Shape(format!("mask has {} entries for a {}-dimensional matrix", low.len(), m.nrows())));
    }
    if !low.iter().any(|&b| b) {
        return Err(Error::InvalidArgument("low projection is empty".into()));
    }
    check_psd(m)?;
    let eig = SymmetricEigen::new(m.clone());
    let (imin, &lmin) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let v = eig.eigenvectors.column(imin);
    let low_share: f64 = v.iter().zip(low).filter(|(_, &l)| l).map(|(x, _)| x * x).sum();
    if low_share >= alpha * alpha {
        return Ok(lmin);
    }
    let lmax = eig.eigenvalues.max();
    let a2 = alpha * alpha;
    let dual = |mu: f64| {
        let mut shifted = m.clone();
        for (i, &l) in low.iter().enumerate() {
            shifted[(i, i)] -= mu * (if l { 1.0 } else { 0.0 } - a2);
        }
        SymmetricEigen::new(shifted).eigenvalues.min()
    };
    let (mut lo, mut hi) = (0.0, (lmax - lmin).max(0.0) / (1.0 - a2) * (1.0 + 1e-9) + f64::MIN_POSITIVE);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (dual(x1), dual(x2));
    let mut best = dual(0.0).max(f1).max(f2);
    while hi - lo > 1e-14 * hi.max(1e-300) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = dual(x2);
            best = best.max(f2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = dual(x1);
            best = best.max(f1);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug)]
pub struct SurveyConfig {
    pub sim: SimConfig,
    /// Interval length `t − s`.
    pub interval: f64,
    pub galerkin_cutoff: f64,
    pub low_cutoff: f64,
    pub alpha: f64,
    pub samples: usize,
    /// Radius and amplitude of the random initial vorticity.
    pub init_radius: f64,
    pub init_amplitude: f64,
    /// Also run every sample with the nonlinearity switched off.
    pub stokes_control: bool,
}

#[derive(Clone, Debug)]
pub struct SurveyReport {
    /// `(cone_min, ‖ω₀‖)` per sample.
    pub samples: Vec<(f64, f64)>,
    pub stokes: Vec<f64>,
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    /// Slope of `log F(x)` against `log x` over the lower half of the
    /// empirical distribution, `None` if it cannot be fitted.
    pub tail_exponent: Option<f64>,
}

impl SurveyReport {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "sample,cone_min,norm_w0")?;
        for (i, (c, n)) in self.samples.iter().enumerate() {
            writeln!(w, "{i},{c},{n}")?;
        }
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Deterministic random initial vorticity for sample `index`.
pub fn initial_sample(grid: &std::sync::Arc<Grid>, seed: u64, index: u64, radius: f64, amplitude: f64) -> Field {
    let key = NoiseStream::new(seed, index).rng_at(u64::MAX).get_seed();
    let mut rng = ChaCha8Rng::from_seed(key);
    Field::random(grid, radius, amplitude, &mut rng)
}

fn survey_one(cfg: &SurveyConfig, model: &Model, index: u64) -> Result<(f64, f64)> {
    let grid = model.grid().clone();
    let steps = (cfg.interval / cfg.sim.dt).round() as usize;
    let w0 = initial_sample(&grid, cfg.sim.seed, index, cfg.init_radius, cfg.init_amplitude);
    let start = VorticityState::new(w0, 0.0);
    let path = FrozenPath::record(model, &cfg.sim.forcing, &start, steps, &NoiseStream::new(cfg.sim.seed, index), 0)?;
    let m = assemble_matrix(&path, 0, steps, &cfg.sim.forcing, cfg.galerkin_cutoff, steps)?;
    Ok((cone_min(&m, &grid, cfg.low_cutoff, cfg.alpha)?, start.field.norm()))
}

/// Monte Carlo distribution of `cone_min` over noise and initial data.
pub fn nondegeneracy_survey(cfg: &SurveyConfig) -> Result<SurveyReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("survey needs at least one sample".into()));
    }
    let model = cfg.sim.model()?;
    let samples: Vec<(f64, f64)> =
        (0..cfg.samples).into_par_iter().map(|i| survey_one(cfg, &model, i as u64)).collect::<Result<_>>()?;
    let stokes = if cfg.stokes_control {
        let linear = Model::new(model.grid(), cfg.sim.nu, cfg.sim.tau, cfg.sim.dt, false);
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| survey_one(cfg, &linear, i as u64).map(|r| r.0))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut sorted: Vec<f64> = samples.iter().map(|s| s.0).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let tail: Vec<(f64, f64)> = sorted[..(n / 2).max(1)]
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, &x)| (x.ln(), ((i + 1) as f64 / n as f64).ln()))
        .collect();
    let tail_exponent = (tail.len() >= 3 && tail.first().map(|t| t.0) != tail.last().map(|t| t.0)).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
        linear_fit(&x, &y).1
    });
    Ok(SurveyReport {
        min: sorted[0],
        q10: quantile(&sorted, 0.1),
        median: quantile(&sorted, 0.5),
        q90: quantile(&sorted, 0.9),
        samples,
        stokes,
        tail_exponent,
    })
}

#[derive(Clone, Debug)]
pub struct ControlConfig {
    pub sim: SimConfig,
    /// Tikhonov shift `λ`.
    pub lambda: f64,
    pub galerkin_cutoff: f64,
    pub low_cutoff: f64,
    pub intervals: usize,
    pub interval: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlRecord {
    pub n: usize,
    pub rho_norm: f64,
    pub rho_low_norm: f64,
    /// `∫|v|²` over the interval ending at `n`.
    pub control_energy: f64,
    /// `‖π_g ρ(n) − λ(M+λ)⁻¹π_g J ρ(n−1)‖ / ‖ρ(n−1)‖` after a controlled interval.
    pub identity_residual: Option<f64>,
    /// `‖(1−π_g)ζ‖ / ‖ρ(n−1)‖`, the part of the control response outside the Galerkin space.
    pub galerkin_leak: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ControlRun {
    pub lambda: f64,
    pub records: Vec<ControlRecord>,
}

impl ControlRun {
    pub fn write_csv<W: Write>(&self, w: &mut W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "n,rho_norm,rho_low_norm,control_energy,identity_residual")?;
        }
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.n,
                r.rho_norm,
                r.rho_low_norm,
                r.control_energy,
                r.identity_residual.unwrap_or(0.0)
            )?;
        }
        Ok(())
    }

    /// `‖ρ(n)‖/‖ρ(0)‖`.
    pub fn ratios(&self) -> Vec<f64> {
        let r0 = self.records[0].rho_norm;
        self.records.iter().map(|r| r.rho_norm / r0).collect()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.records.iter().filter_map(|r| r.identity_residual).fold(0.0, f64::max)
    }
}

/// Alternating control: on `[n, n+1]` with `n` even the residual is steered
/// by `v = A*(M+λ)⁻¹π_g J ρ(n)`, on odd intervals it evolves freely.
pub fn control_run(
    cfg: &ControlConfig,
    omega0: &VorticityState,
    xi0: &Field,
    stream: &NoiseStream,
) -> Result<ControlRun> {
    if !(cfg.lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", cfg.lambda)));
    }
    if xi0.norm() == 0.0 {
        return Err(Error::InvalidArgument("initial perturbation is zero".into()));
    }
    let per = (cfg.interval / cfg.sim.dt).round() as usize;
    if per == 0 || ((per as f64) * cfg.sim.dt - cfg.interval).abs() > 1e-9 * cfg.interval {
        return Err(Error::InvalidArgument(format!(
            "interval {} is not a whole number of steps of {}",
            cfg.interval, cfg.sim.dt
        )));
    }
    let model = cfg.sim.model()?;
    let grid = model.grid().clone();
    let first = (omega0.time / cfg.sim.dt).round() as u64;
    let path = FrozenPath::record(&model, &cfg.sim.forcing, omega0, per * cfg.intervals, stream, first)?;
    let basis = GalerkinBasis::new(&grid, cfg.galerkin_cutoff)?;
    let forcing = &cfg.sim.forcing;
    let record = |n: usize, rho: &Field| (rho.norm(), project_low(rho, cfg.low_cutoff).norm(), n);
    let (r0, l0, _) = record(0, xi0);
    let mut records = vec![ControlRecord {
        n: 0,
        rho_norm: r0,
        rho_low_norm: l0,
        control_energy: 0.0,
        identity_residual: None,
        galerkin_leak: None,
    }];
    let mut rho = xi0.clone();
    for n in 0..cfg.intervals {
        let (from, to) = (n * per, (n + 1) * per);
        let free = path.propagate(from, to, &rho)?;
        let before = rho.norm();
        let (next, energy, residual, leak) = if n % 2 == 0 {
            let m = assemble_matrix(&path, from, to, forcing, cfg.galerkin_cutoff, per)?;
            let nodes = quadrature_nodes(from, to, per, cfg.sim.dt)?;
            let mut shifted = m.matrix.clone();
            for i in 0..basis.dim() {
                shifted[(i, i)] += cfg.lambda;
            }
            let rhs = basis.coords(&free);
            let chol = shifted
                .cholesky()
                .ok_or_else(|| Error::InvalidArgument("shifted Malliavin matrix is not positive definite".into()))?;
            let y = chol.solve(&rhs);
            let v = adjoint_noise_map(&path, forcing, &nodes, to, &basis.field(&grid, &y))?;
            let energy: f64 = nodes.iter().zip(&v).map(|(&(_, w), vj)| w * vj.iter().map(|x| x * x).sum::<f64>()).sum();
            let zeta = apply_noise_map(&path, forcing, &nodes, to, &v)?;
            let next = free.sub(&zeta);
            let residual = (basis.coords(&next) - y.scale(cfg.lambda)).norm() / before;
            let inside = basis.field(&grid, &basis.coords(&zeta));
            let leak = zeta.sub(&inside).norm() / before;
            (next, energy, Some(residual), Some(leak))
        } else {
            (free, 0.0, None, None)
        };
        rho = next;
        let (rn, ln, _) = record(n + 1, &rho);
        records.push(ControlRecord {
            n: n + 1,
            rho_norm: rn,
            rho_low_norm: ln,
            control_energy: energy,
            identity_residual: residual,
            galerkin_leak: leak,
        });
    }
    Ok(ControlRun { lambda: cfg.lambda, records })
}

/// Geometric rate `q` from a least-squares fit of `log r_m ≈ c + m log q`.
pub fn geometric_rate(ms: &[f64], ratios: &[f64]) -> f64 {
    let y: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    linear_fit(ms, &y).1.exp()
}

#[derive(Clone, Debug)]
pub struct ControlScan {
    pub lambda: f64,
    /// Median over seeds of `‖ρ(2m)‖/‖ρ(0)‖` for `m = 1, 2, …`.
    pub median_ratios: Vec<f64>,
    /// Fitted geometric rate per two intervals.
    pub rate: f64,
    pub max_identity_residual: f64,
    /// One run per seed.
    pub runs: Vec<ControlRun>,
}

/// Runs [`control_run`] for every `λ` and `seeds` independent seeds (random
/// initial vorticity and perturbation per seed) and fits the decay of the
/// median residual at even times.
pub fn control_scan(
    cfg: &ControlConfig,
    lambdas: &[f64],
    seeds: usize,
    init_radius: f64,
    init_amplitude: f64,
) -> Result<Vec<ControlScan>> {
    let grid = Grid::new(cfg.sim.grid)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let c = ControlConfig { lambda, ..cfg.clone() };
            let runs: Vec<ControlRun> = (0..seeds)
                .into_par_iter()
                .map(|s| {
                    let s = s as u64;
                    let w0 = initial_sample(&grid, cfg.sim.seed, s, init_radius, init_amplitude);
                    let xi0 = initial_sample(&grid, cfg.sim.seed ^ 0xa5a5_a5a5, s, f64::INFINITY, 1.0);
                    control_run(&c, &VorticityState::new(w0, 0.0), &xi0, &NoiseStream::new(cfg.sim.seed, s))
                })
                .collect::<Result<_>>()?;
            let pairs = cfg.intervals / 2;
            let median_ratios: Vec<f64> =
                (1..=pairs).map(|m| median(&runs.iter().map(|r| r.ratios()[2 * m]).collect::<Vec<_>>())).collect();
            let ms: Vec<f64> = (1..=pairs).map(|m| m as f64).collect();
            let rate = if pairs >= 2 { geometric_rate(&ms, &median_ratios) } else { f64::NAN };
            let max_identity_residual = runs.iter().map(|r| r.max_identity_residual()).fold(0.0, f64::max);
            Ok(ControlScan { lambda, median_ratios, rate, max_identity_residual, runs })
        })
        .collect()
}

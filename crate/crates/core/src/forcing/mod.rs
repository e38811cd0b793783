//! Finite-mode stochastic forcing `Qβ(t) = Σ γ_k β_k(t) e_k`.

mod hormander;
mod noise;

use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

pub use hormander::{hormander_check, lattice_basis, HormanderReport};
pub use noise::NoiseStream;

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid, Mode};

/// One forced wavenumber with its amplitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForcedMode {
    pub mode: Mode,
    pub gamma: f64,
}

/// Validated forcing on a reflection-closed set of lattice modes.
///
/// `mode` entries are integer lattice indices; the physical wavenumber is
/// `mode / scale`. Each entry is one real noise direction: `sin(k·x)` when
/// `k ∈ Z⁺`, `cos(k·x)` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSpec {
    modes: Vec<ForcedMode>,
    scale: f64,
    epsilon: f64,
    epsilon_prime: f64,
    kappa_max: f64,
    kappa_mean: f64,
}

impl ForcingSpec {
    /// Validates raw `(k, γ_k)` pairs on the unit-scale torus.
    pub fn new(modes: &[(Mode, f64)]) -> Result<ForcingSpec> {
        Self::with_scale(modes, 1.0)
    }

    pub fn with_scale(modes: &[(Mode, f64)], scale: f64) -> Result<ForcingSpec> {
        if modes.is_empty() {
            return Err(Error::InvalidForcing("no forced modes".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidForcing(format!("scale must be positive, got {scale}")));
        }
        let mut seen = HashSet::new();
        for &(m, g) in modes {
            if m == (0, 0) {
                return Err(Error::InvalidForcing("zero mode cannot be forced".into()));
            }
            if !seen.insert(m) {
                return Err(Error::InvalidForcing(format!("duplicate mode {m:?}")));
            }
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidForcing(format!("amplitude for {m:?} must be positive, got {g}")));
            }
        }
        for &(m, g) in modes {
            let partner = modes.iter().find(|(p, _)| *p == (-m.0, -m.1));
            match partner {
                None => {
                    return Err(Error::InvalidForcing(format!(
                        "missing reflection partner {:?} of {m:?}",
                        (-m.0, -m.1)
                    )))
                }
                Some(&(_, gp)) if gp != g => {
                    return Err(Error::InvalidForcing(format!(
                        "amplitude of {m:?} ({g}) differs from its reflection ({gp})"
                    )))
                }
                _ => {}
            }
        }
        Ok(Self::build(modes.iter().map(|&(mode, gamma)| ForcedMode { mode, gamma }).collect(), scale))
    }

    /// Same as [`ForcingSpec::with_scale`] after adding any missing
    /// reflection partners with the same amplitude.
    pub fn auto_reflect(modes: &[(Mode, f64)], scale: f64) -> Result<ForcingSpec> {
        let mut all: Vec<(Mode, f64)> = Vec::with_capacity(2 * modes.len());
        for &(m, g) in modes {
            all.push((m, g));
            let r = (-m.0, -m.1);
            if !modes.iter().any(|(p, _)| *p == r) {
                all.push((r, g));
            }
        }
        Self::with_scale(&all, scale)
    }

    /// The degenerate example `K = {±(1,0), ±(1,1)}` with a common amplitude.
    pub fn four_mode(gamma: f64) -> ForcingSpec {
        Self::new(&[((1, 0), gamma), ((-1, 0), gamma), ((1, 1), gamma), ((-1, -1), gamma)])
            .expect("static forcing is valid")
    }

    /// Every lattice mode with `lo ≤ |k| ≤ hi` (physical wavenumbers) at a
    /// common amplitude.
    pub fn shell(lo: f64, hi: f64, gamma: f64, scale: f64) -> Result<ForcingSpec> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidForcing(format!("invalid shell [{lo}, {hi}]")));
        }
        let r = (hi * scale).ceil() as i64;
        let mut modes = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                let k = ((a * a + b * b) as f64).sqrt() / scale;
                if k >= lo && k <= hi {
                    modes.push(((a, b), gamma));
                }
            }
        }
        if modes.is_empty() {
            return Err(Error::InvalidForcing(format!("no lattice modes in shell [{lo}, {hi}]")));
        }
        Self::with_scale(&modes, scale)
    }

    fn build(modes: Vec<ForcedMode>, scale: f64) -> ForcingSpec {
        let half_area = 2.0 * PI * PI * scale * scale;
        let k2 = |m: Mode| ((m.0 * m.0 + m.1 * m.1) as f64) / (scale * scale);
        let sum_g2: f64 = modes.iter().map(|f| f.gamma * f.gamma).sum();
        let epsilon = half_area * sum_g2;
        let epsilon_prime = half_area * modes.iter().map(|f| f.gamma * f.gamma / k2(f.mode)).sum::<f64>();
        let kappa_max = modes.iter().map(|f| k2(f.mode).sqrt()).fold(0.0, f64::max);
        let kappa_mean = modes.iter().map(|f| f.gamma * f.gamma * k2(f.mode).sqrt()).sum::<f64>() / sum_g2;
        ForcingSpec { modes, scale, epsilon, epsilon_prime, kappa_max, kappa_mean }
    }

    /// Copy with every amplitude set to zero, for unforced runs. Derived
    /// rates become zero.
    pub fn silenced(&self) -> ForcingSpec {
        let modes: Vec<ForcedMode> = self.modes.iter().map(|f| ForcedMode { mode: f.mode, gamma: 0.0 }).collect();
        ForcingSpec { modes, scale: self.scale, epsilon: 0.0, epsilon_prime: 0.0, ..self.clone() }
    }

    pub fn modes(&self) -> &[ForcedMode] {
        &self.modes
    }

    /// Number of forced real directions `D`.
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Enstrophy injection rate `ε = ½·area·Σγ_k²`, which is `2π²Σγ_k²` on
    /// the unit torus. This is the rate at which the noise feeds `E‖ω‖²`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Energy injection rate `ε′ = ½·area·Σγ_k²/|k|²`, feeding `E‖u‖²`.
    pub fn epsilon_prime(&self) -> f64 {
        self.epsilon_prime
    }

    /// Characteristic forcing wavenumber, taken as `max |k|` over the set.
    pub fn kappa_f(&self) -> f64 {
        self.kappa_max
    }

    /// Alternative forcing wavenumber `Σγ²|k| / Σγ²`.
    pub fn kappa_f_weighted(&self) -> f64 {
        self.kappa_mean
    }

    /// Checks that every forced mode survives dealiasing on `grid`.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if (grid.spec().scale - self.scale).abs() > 1e-12 * self.scale {
            return Err(Error::InvalidForcing(format!(
                "forcing scale {} differs from grid scale {}",
                self.scale,
                grid.spec().scale
            )));
        }
        for f in &self.modes {
            if !grid.is_retained(f.mode) {
                return Err(Error::InvalidForcing(format!(
                    "forced mode {:?} lies beyond the dealias cutoff {} of the grid",
                    f.mode,
                    grid.cutoff()
                )));
            }
        }
        Ok(())
    }

    /// `Σ_k coeffs[k] γ_k e_k` as a field.
    pub fn apply(&self, grid: &Arc<Grid>, coeffs: &[f64]) -> Field {
        debug_assert_eq!(coeffs.len(), self.dim());
        let mut f = Field::zeros(grid);
        for (fm, &c) in self.modes.iter().zip(coeffs) {
            f.add_basis(fm.mode, fm.gamma * c);
        }
        f
    }

    /// `Σ_k coeffs[k] γ_k ē_k` with the orthonormalized basis `ē_k = e_k/‖e_k‖`.
    pub fn apply_orthonormal(&self, grid: &Arc<Grid>, coeffs: &[f64]) -> Field {
        debug_assert_eq!(coeffs.len(), self.dim());
        let mut f = Field::zeros(grid);
        for (fm, &c) in self.modes.iter().zip(coeffs) {
            f.add_orthonormal(fm.mode, fm.gamma * c);
        }
        f
    }

    /// Noise increment `Σ γ_k Δβ_k e_k` for the given Brownian increments.
    pub fn increment_from(&self, grid: &Arc<Grid>, dbeta: &[f64]) -> Field {
        self.apply(grid, dbeta)
    }
}

/// Draws `Σ γ_k Δβ_k e_k` with `Δβ_k ~ N(0, dt)` from `stream` at `step`.
pub fn sample_increment(spec: &ForcingSpec, grid: &Arc<Grid>, dt: f64, stream: &NoiseStream, step: u64) -> Field {
    let dbeta = stream.increments(step, spec.dim(), dt);
    spec.increment_from(grid, &dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    #[test]
    fn four_mode_rates() {
        let s = ForcingSpec::new(&[((1, 0), 1.0), ((-1, 0), 1.0), ((1, 1), 1.0), ((-1, -1), 1.0)]).unwrap();
        assert!((s.epsilon() - 8.0 * PI * PI).abs() < 1e-12);
        assert!((s.epsilon_prime() - 6.0 * PI * PI).abs() < 1e-12);
        assert!((s.kappa_f() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.dim(), 4);
    }

    #[test]
    fn rejects_invalid_sets() {
        let err = |m: &[(Mode, f64)]| ForcingSpec::new(m).unwrap_err().to_string();
        assert!(err(&[((1, 0), 1.0)]).contains("reflection"));
        assert!(err(&[((0, 0), 1.0)]).contains("zero mode"));
        assert!(err(&[((1, 0), 1.0), ((1, 0), 1.0), ((-1, 0), 1.0)]).contains("duplicate"));
        assert!(err(&[((1, 0), 0.0), ((-1, 0), 0.0)]).contains("positive"));
        assert!(err(&[((1, 0), 1.0), ((-1, 0), 2.0)]).contains("differs"));
        assert!(ForcingSpec::new(&[]).is_err());
    }

    #[test]
    fn auto_reflect_completes_partners() {
        let s = ForcingSpec::auto_reflect(&[((1, 0), 0.5), ((1, 1), 0.5)], 1.0).unwrap();
        assert_eq!(s.dim(), 4);
        assert_eq!(s, ForcingSpec::four_mode(0.5));
    }

    #[test]
    fn shell_forcing_is_symmetric() {
        let s = ForcingSpec::shell(2.9, 3.2, 0.1, 1.0).unwrap();
        // |k|² ∈ {9, 10}: 4 + 8 modes
        assert_eq!(s.dim(), 12);
        assert!(hormander_check(&s.modes().iter().map(|f| f.mode).collect::<Vec<_>>()).unwrap().cond_a);
        assert!(ForcingSpec::shell(1.1, 1.2, 0.1, 1.0).is_err());
    }

    #[test]
    fn zero_amplitude_gives_zero_increment() {
        let grid = Grid::new(GridSpec::new(16, 1.0).unwrap()).unwrap();
        let s = ForcingSpec::four_mode(1.0).silenced();
        let inc = sample_increment(&s, &grid, 0.1, &NoiseStream::new(1, 0), 3);
        assert_eq!(inc.max_abs(), 0.0);
    }

    #[test]
    fn forcing_beyond_cutoff_is_rejected() {
        let grid = Grid::new(GridSpec::new(8, 1.0).unwrap()).unwrap();
        let s = ForcingSpec::new(&[((3, 0), 1.0), ((-3, 0), 1.0)]).unwrap();
        assert!(s.check_grid(&grid).is_err());
        assert!(ForcingSpec::four_mode(1.0).check_grid(&grid).is_ok());
    }

    #[test]
    fn increment_uses_sin_and_cos_directions() {
        let grid = Grid::new(GridSpec::new(16, 1.0).unwrap()).unwrap();
        let s = ForcingSpec::four_mode(2.0);
        let f = s.apply(&grid, &[1.0, 0.0, 0.0, 0.0]);
        // (1,0) ∈ Z⁺ → 2 sin x
        let g = Field::from_fn(&grid, |x, _| 2.0 * x.sin());
        assert!(f.sub(&g).max_abs() < 1e-14);
        let f = s.apply(&grid, &[0.0, 1.0, 0.0, 0.0]);
        let g = Field::from_fn(&grid, |x, _| 2.0 * x.cos());
        assert!(f.sub(&g).max_abs() < 1e-14);
    }
}

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::grid::{is_upper_half, Grid, Mode};
use crate::error::{Error, Result};

/// Tolerance used when checking Hermitian symmetry of incoming data.
const HERMITIAN_TOL: f64 = 1e-12;

/// A real, mean-zero, dealiased scalar field stored by its complex Fourier
/// coefficients on the full `n × n` lattice.
///
/// Every constructor and mutator leaves the field Hermitian symmetric with
/// the zero mode and all non-retained modes exactly zero.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid.spec() == other.grid.spec() && self.coeffs == other.coeffs
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field { grid: grid.clone(), coeffs: vec![Complex64::default(); grid.len()] }
    }

    /// Wraps raw coefficients after checking the field invariants.
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Field> {
        if coeffs.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        let field = Field { grid: grid.clone(), coeffs };
        field.validate()?;
        Ok(field)
    }

    /// Wraps raw coefficients, projecting onto the valid subspace instead of
    /// checking it.
    pub fn from_coeffs_projected(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Field {
        assert_eq!(coeffs.len(), grid.len());
        let mut field = Field { grid: grid.clone(), coeffs };
        field.dealias();
        field.enforce_hermitian();
        field
    }

    /// Samples a real physical-space field and transforms it.
    pub fn from_physical(grid: &Arc<Grid>, values: &[f64]) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} grid values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.to_spectral(&mut buf);
        Ok(Field::from_coeffs_projected(grid, buf))
    }

    /// Builds a field from a function of the physical coordinates.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Field {
        let n = grid.n();
        let h = 2.0 * PI * grid.spec().scale / n as f64;
        let values: Vec<f64> = (0..n * n).map(|i| f((i / n) as f64 * h, (i % n) as f64 * h)).collect();
        Field::from_physical(grid, &values).expect("shape matches by construction")
    }

    /// Random field with independent Gaussian real coordinates on every
    /// retained mode with `0 < |k| <= radius`, scaled by `amplitude`.
    pub fn random<R: Rng + ?Sized>(grid: &Arc<Grid>, radius: f64, amplitude: f64, rng: &mut R) -> Field {
        let mut f = Field::zeros(grid);
        let modes: Vec<Mode> = grid
            .retained_modes()
            .map(|(_, m)| m)
            .filter(|&m| is_upper_half(m) && grid.wavenumber(m) <= radius + 1e-12)
            .collect();
        for m in modes {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            f.set_mode(m, Complex64::new(re, im) * amplitude);
        }
        f
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Mutable access for in-place kernels; callers must restore the
    /// invariants (see [`Field::enforce_hermitian`] and [`Field::dealias`]).
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of `e^{ik·x}` for a lattice mode (zero if not representable).
    pub fn coeff(&self, m: Mode) -> Complex64 {
        self.grid.index_of(m).map(|i| self.coeffs[i]).unwrap_or_default()
    }

    /// Sets `f̂(k) = value` and `f̂(-k) = conj(value)`. Non-retained modes are ignored.
    pub fn set_mode(&mut self, m: Mode, value: Complex64) {
        if let Some(i) = self.grid.index_of(m) {
            if !self.grid.retained()[i] {
                return;
            }
            let j = self.grid.conj_index(i);
            self.coeffs[i] = value;
            self.coeffs[j] = value.conj();
        }
    }

    /// Checks Hermitian symmetry, zero mean and dealiasing.
    pub fn validate(&self) -> Result<()> {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        if self.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidState("non-finite coefficient".into()));
        }
        if self.coeffs[0] != Complex64::default() {
            return Err(Error::InvalidState(format!(
                "mean-zero violated: zero mode is {}",
                self.coeffs[0]
            )));
        }
        for (i, c) in self.coeffs.iter().enumerate() {
            if !self.grid.retained()[i] && *c != Complex64::default() {
                return Err(Error::InvalidState(format!(
                    "mode {:?} beyond the dealias cutoff is nonzero",
                    self.grid.mode_of(i)
                )));
            }
            let j = self.grid.conj_index(i);
            if (c - self.coeffs[j].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::InvalidState(format!(
                    "Hermitian symmetry violated at mode {:?}",
                    self.grid.mode_of(i)
                )));
            }
        }
        Ok(())
    }

    /// Replaces each pair `(f̂(k), f̂(-k))` by its Hermitian part.
    pub fn enforce_hermitian(&mut self) {
        for i in 0..self.coeffs.len() {
            let j = self.grid.conj_index(i);
            if j < i {
                continue;
            }
            if j == i {
                self.coeffs[i] = Complex64::new(self.coeffs[i].re, 0.0);
            } else {
                let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
                self.coeffs[i] = avg;
                self.coeffs[j] = avg.conj();
            }
        }
    }

    /// Zeroes the mean and every mode beyond the dealias cutoff.
    pub fn dealias(&mut self) {
        for (c, &keep) in self.coeffs.iter_mut().zip(self.grid.retained()) {
            if !keep {
                *c = Complex64::default();
            }
        }
    }

    /// Physical-space values on the grid.
    pub fn to_physical(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        self.grid.to_physical(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// `L²` inner product over the torus, `area · Σ Re(f̂ conj ĝ)`.
    pub fn inner(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.grid.spec(), other.grid.spec());
        let s: f64 = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        self.grid.area() * s
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest coefficient modulus; a cheap scale for relative comparisons.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        let mut f = self.clone();
        f.scale(a);
        f
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * a;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut f = self.clone();
        f.axpy(-1.0, other);
        f
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut f = self.clone();
        f.axpy(1.0, other);
        f
    }

    /// Applies a real multiplier depending on the flat index.
    pub fn map_diagonal(&mut self, mult: impl Fn(usize) -> f64) {
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            *c *= mult(i);
        }
    }

    /// Inverse Laplacian `Δ⁻¹f` (mean-zero).
    pub fn inverse_laplacian(&self) -> Field {
        let mut f = self.clone();
        let inv = self.grid.inv_k2().to_vec();
        f.map_diagonal(|i| -inv[i]);
        f
    }

    /// Coefficient of `e_k` in the real basis, `e_k = sin(k·x)` for `k ∈ Z⁺`
    /// and `cos(k·x)` for `-k ∈ Z⁺`.
    pub fn real_coordinate(&self, m: Mode) -> f64 {
        let c = self.coeff(m);
        if is_upper_half(m) {
            -2.0 * c.im
        } else {
            2.0 * c.re
        }
    }

    /// Adds `value · e_k` to the field.
    pub fn add_basis(&mut self, m: Mode, value: f64) {
        let Some(i) = self.grid.index_of(m) else { return };
        if !self.grid.retained()[i] {
            return;
        }
        let j = self.grid.conj_index(i);
        let delta = if is_upper_half(m) {
            Complex64::new(0.0, -0.5 * value)
        } else {
            Complex64::new(0.5 * value, 0.0)
        };
        self.coeffs[i] += delta;
        self.coeffs[j] += delta.conj();
    }

    /// Squared norm of a single real basis function, `‖e_k‖² = area / 2`.
    pub fn basis_norm_sq(grid: &Grid) -> f64 {
        0.5 * grid.area()
    }

    /// Coordinate along the orthonormal basis vector `e_k / ‖e_k‖`.
    pub fn orthonormal_coordinate(&self, m: Mode) -> f64 {
        self.real_coordinate(m) * Self::basis_norm_sq(&self.grid).sqrt()
    }

    /// Adds `value · e_k / ‖e_k‖`.
    pub fn add_orthonormal(&mut self, m: Mode, value: f64) {
        let s = Self::basis_norm_sq(&self.grid).sqrt();
        self.add_basis(m, value / s);
    }
}

/// Vorticity state: a [`Field`] tagged with its time.
#[derive(Clone, Debug, PartialEq)]
pub struct VorticityState {
    pub field: Field,
    pub time: f64,
}

impl VorticityState {
    pub fn new(field: Field, time: f64) -> VorticityState {
        VorticityState { field, time }
    }

    pub fn zeros(grid: &Arc<Grid>) -> VorticityState {
        VorticityState { field: Field::zeros(grid), time: 0.0 }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.field.grid()
    }
}

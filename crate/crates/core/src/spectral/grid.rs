use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Resolution and geometry of the periodic domain `[0, 2πN)²`.
///
/// Wavenumbers live on the lattice `(ℤ/N)²` where `N` is `scale`. Only
/// modes whose integer indices both satisfy `|m| <= cutoff()` are ever
/// nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub scale: f64,
    pub dealias_fraction: f64,
}

impl GridSpec {
    pub fn new(n: usize, scale: f64) -> Result<Self> {
        Self::with_dealias(n, scale, 2.0 / 3.0)
    }

    pub fn with_dealias(n: usize, scale: f64, dealias_fraction: f64) -> Result<Self> {
        let spec = GridSpec { n, scale, dealias_fraction };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || self.n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n must be an even integer >= 8, got {}",
                self.n
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidGrid(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias_fraction must lie in (0, 1], got {}",
                self.dealias_fraction
            )));
        }
        if self.cutoff() < 2 {
            return Err(Error::InvalidGrid(format!(
                "dealias cutoff {} is below 2 for n = {}",
                self.cutoff(),
                self.n
            )));
        }
        if self.cutoff() >= self.n / 2 {
            return Err(Error::InvalidGrid("dealias cutoff must stay below the Nyquist index".into()));
        }
        Ok(())
    }

    /// Largest retained integer index per axis.
    pub fn cutoff(&self) -> usize {
        // the small offset keeps exact fractions like (2/3)*24/2 = 8 from flooring to 7
        (self.dealias_fraction * (self.n / 2) as f64 + 1e-9).floor() as usize
    }

    /// Area of the torus, `(2πN)²`.
    pub fn area(&self) -> f64 {
        (2.0 * PI * self.scale).powi(2)
    }

    /// True when quadratic products of retained modes cannot alias back
    /// into the retained set.
    pub fn is_alias_free(&self) -> bool {
        3 * self.cutoff() < self.n
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} (scale {}, cutoff {})", self.n, self.n, self.scale, self.cutoff())
    }
}

/// A lattice mode given by its integer indices `(m1, m2)`.
pub type Mode = (i64, i64);

/// `k ∈ Z⁺` when `k2 > 0`, or `k2 == 0` and `k1 > 0`.
pub fn is_upper_half(m: Mode) -> bool {
    m.1 > 0 || (m.1 == 0 && m.0 > 0)
}

/// Precomputed wavenumber tables and FFT plans for one [`GridSpec`].
///
/// Storage is row-major with flat index `a * n + b`, where `a` carries the
/// first wavenumber component and `b` the second.
pub struct Grid {
    spec: GridSpec,
    cutoff: usize,
    index_mode: Vec<i64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    inv_k2: Vec<f64>,
    retained: Vec<bool>,
    active_rows: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Grid>> {
        spec.validate()?;
        let n = spec.n;
        let cutoff = spec.cutoff();
        let index_mode: Vec<i64> = (0..n)
            .map(|a| if a < n / 2 { a as i64 } else { a as i64 - n as i64 })
            .collect();
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut inv_k2 = vec![0.0; n * n];
        let mut retained = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                let idx = a * n + b;
                let (m1, m2) = (index_mode[a], index_mode[b]);
                kx[idx] = m1 as f64 / spec.scale;
                ky[idx] = m2 as f64 / spec.scale;
                k2[idx] = kx[idx] * kx[idx] + ky[idx] * ky[idx];
                if idx != 0 {
                    inv_k2[idx] = 1.0 / k2[idx];
                }
                retained[idx] = idx != 0
                    && m1.unsigned_abs() as usize <= cutoff
                    && m2.unsigned_abs() as usize <= cutoff;
            }
        }
        let active_rows = (0..n)
            .filter(|&a| index_mode[a].unsigned_abs() as usize <= cutoff)
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Arc::new(Grid {
            spec,
            cutoff,
            index_mode,
            kx,
            ky,
            k2,
            inv_k2,
            retained,
            active_rows,
            forward,
            inverse,
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.spec.n * self.spec.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn area(&self) -> f64 {
        self.spec.area()
    }

    pub fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    /// `|k|²` per flat index.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// `1/|k|²` per flat index, zero at `k = 0`.
    pub fn inv_k2(&self) -> &[f64] {
        &self.inv_k2
    }

    /// Whether a flat index survives dealiasing (the zero mode never does).
    pub fn retained(&self) -> &[bool] {
        &self.retained
    }

    pub fn mode_of(&self, idx: usize) -> Mode {
        let n = self.spec.n;
        (self.index_mode[idx / n], self.index_mode[idx % n])
    }

    /// Flat index of a mode, or `None` when it is not representable.
    pub fn index_of(&self, m: Mode) -> Option<usize> {
        let n = self.spec.n as i64;
        let half = n / 2;
        if m.0 < -half || m.0 >= half || m.1 < -half || m.1 >= half {
            return None;
        }
        let a = m.0.rem_euclid(n) as usize;
        let b = m.1.rem_euclid(n) as usize;
        Some(a * self.spec.n + b)
    }

    /// Flat index of `-k` for the mode at `idx`.
    pub fn conj_index(&self, idx: usize) -> usize {
        let n = self.spec.n;
        let (a, b) = (idx / n, idx % n);
        ((n - a) % n) * n + (n - b) % n
    }

    pub fn is_retained(&self, m: Mode) -> bool {
        self.index_of(m).map(|i| self.retained[i]).unwrap_or(false)
    }

    /// Physical modulus `|k|` of a lattice mode.
    pub fn wavenumber(&self, m: Mode) -> f64 {
        ((m.0 * m.0 + m.1 * m.1) as f64).sqrt() / self.spec.scale
    }

    /// All retained modes, in flat-index order.
    pub fn retained_modes(&self) -> impl Iterator<Item = (usize, Mode)> + '_ {
        (0..self.len()).filter(|&i| self.retained[i]).map(move |i| (i, self.mode_of(i)))
    }

    /// Spectral coefficients to physical values, `f(x) = Σ f̂(k) e^{ik·x}`.
    /// Input rows beyond the dealias cutoff are assumed zero.
    pub fn to_physical(&self, buf: &mut [Complex64]) {
        let n = self.spec.n;
        let mut scratch = vec![Complex64::default(); self.inverse.get_inplace_scratch_len()];
        for &a in &self.active_rows {
            self.inverse.process_with_scratch(&mut buf[a * n..(a + 1) * n], &mut scratch);
        }
        let mut t = transpose(buf, n);
        self.inverse.process_with_scratch(&mut t, &mut scratch);
        transpose_into(&t, buf, n);
    }

    /// Physical values to spectral coefficients. Only retained rows are
    /// completed; callers must dealias the result.
    pub fn to_spectral(&self, buf: &mut [Complex64]) {
        let n = self.spec.n;
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        let mut t = transpose(buf, n);
        self.forward.process_with_scratch(&mut t, &mut scratch);
        transpose_into(&t, buf, n);
        let norm = 1.0 / (n * n) as f64;
        for &a in &self.active_rows {
            let row = &mut buf[a * n..(a + 1) * n];
            self.forward.process_with_scratch(row, &mut scratch);
            for c in row.iter_mut() {
                *c *= norm;
            }
        }
    }
}

fn transpose(src: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); n * n];
    transpose_into(src, &mut dst, n);
    dst
}

fn transpose_into(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in 0..n {
            dst[b * n + a] = src[a * n + b];
        }
    }
}

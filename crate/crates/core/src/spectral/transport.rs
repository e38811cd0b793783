//! Biot–Savart reconstruction and the advective term `-u·∇ω`.
//!
//! Products are formed on the physical grid and dealiased afterwards. On an
//! alias-free grid (`3·cutoff < n`) this equals the exact Galerkin
//! projection of the quadratic term, which is what lets
//! [`nonlinear_direct`] act as an oracle and lets the linearized and
//! adjoint kernels pair exactly.

use std::sync::Arc;

use num_complex::Complex64;

use super::field::Field;
use super::grid::{is_upper_half, Grid, Mode};
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Spectral velocity components `(û₁, û₂)`.
#[derive(Clone, Debug)]
pub struct VelocityField {
    grid: Arc<Grid>,
    pub u1: Vec<Complex64>,
    pub u2: Vec<Complex64>,
}

impl VelocityField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `max_k |k·û(k)|`.
    pub fn max_divergence(&self) -> f64 {
        let (kx, ky) = (self.grid.kx(), self.grid.ky());
        (0..self.grid.len())
            .map(|i| (self.u1[i] * kx[i] + self.u2[i] * ky[i]).norm())
            .fold(0.0, f64::max)
    }

    /// `‖u‖²` over the torus.
    pub fn norm_sq(&self) -> f64 {
        let s: f64 = self.u1.iter().chain(&self.u2).map(|c| c.norm_sqr()).sum();
        self.grid.area() * s
    }

    /// Largest deviation from `û(-k) = conj(û(k))` over both components.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.grid.len() {
            let j = self.grid.conj_index(i);
            worst = worst.max((self.u1[i] - self.u1[j].conj()).norm());
            worst = worst.max((self.u2[i] - self.u2[j].conj()).norm());
        }
        worst
    }

    /// Spectral curl `i(k₁û₂ − k₂û₁)`.
    pub fn curl(&self) -> Field {
        let (kx, ky) = (self.grid.kx(), self.grid.ky());
        let coeffs = (0..self.grid.len()).map(|i| I * (self.u2[i] * kx[i] - self.u1[i] * ky[i])).collect();
        Field::from_coeffs_projected(&self.grid, coeffs)
    }

    /// Physical values of both components.
    pub fn to_physical(&self) -> (Vec<f64>, Vec<f64>) {
        let packed: Vec<Complex64> = self.u1.iter().zip(&self.u2).map(|(a, b)| a + I * b).collect();
        let mut buf = packed;
        self.grid.to_physical(&mut buf);
        (buf.iter().map(|c| c.re).collect(), buf.iter().map(|c| c.im).collect())
    }
}

/// `û(k) = i(k₂, −k₁)|k|⁻² ω̂(k)`, with `û(0) = 0`.
pub fn biot_savart(omega: &Field) -> Result<VelocityField> {
    if omega.coeffs()[0] != Complex64::default() {
        return Err(Error::InvalidState("vorticity has a nonzero mean".into()));
    }
    let grid = omega.grid();
    let (kx, ky, inv) = (grid.kx(), grid.ky(), grid.inv_k2());
    let w = omega.coeffs();
    let u1 = (0..grid.len()).map(|i| I * ky[i] * inv[i] * w[i]).collect();
    let u2 = (0..grid.len()).map(|i| -I * kx[i] * inv[i] * w[i]).collect();
    Ok(VelocityField { grid: grid.clone(), u1, u2 })
}

/// Physical-space velocity and vorticity gradient of a field, the inputs
/// to every advective product.
#[derive(Clone, Debug)]
pub struct TransportFrame {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl TransportFrame {
    pub fn new(f: &Field) -> TransportFrame {
        let grid = f.grid();
        let (kx, ky, inv) = (grid.kx(), grid.ky(), grid.inv_k2());
        let w = f.coeffs();
        // u1 + i u2 and ∂x + i ∂y, each a pair of real fields in one transform
        let mut vel: Vec<Complex64> =
            (0..grid.len()).map(|i| (I * ky[i] * inv[i] * w[i]) + I * (-I * kx[i] * inv[i] * w[i])).collect();
        let mut grad: Vec<Complex64> = (0..grid.len()).map(|i| (I * kx[i] * w[i]) + I * (I * ky[i] * w[i])).collect();
        grid.to_physical(&mut vel);
        grid.to_physical(&mut grad);
        TransportFrame {
            u1: vel.iter().map(|c| c.re).collect(),
            u2: vel.iter().map(|c| c.im).collect(),
            dx: grad.iter().map(|c| c.re).collect(),
            dy: grad.iter().map(|c| c.im).collect(),
        }
    }

    /// Largest pointwise speed.
    pub fn max_speed(&self) -> f64 {
        self.u1.iter().zip(&self.u2).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }
}

fn project_real(grid: &Arc<Grid>, values: Vec<f64>) -> Field {
    let mut buf: Vec<Complex64> = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    grid.to_spectral(&mut buf);
    Field::from_coeffs_projected(grid, buf)
}

/// Forward transform of two real arrays packed into one complex transform.
fn project_real_pair(grid: &Arc<Grid>, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| Complex64::new(*x, *y)).collect();
    grid.to_spectral(&mut buf);
    let mut fa = vec![Complex64::default(); grid.len()];
    let mut fb = vec![Complex64::default(); grid.len()];
    for i in 0..grid.len() {
        if !grid.retained()[i] {
            continue;
        }
        let j = grid.conj_index(i);
        let (p, q) = (buf[i], buf[j].conj());
        fa[i] = 0.5 * (p + q);
        fb[i] = (p - q) / (2.0 * I);
    }
    (fa, fb)
}

/// Spectral coefficients of `-u·∇ω`, dealiased.
pub fn nonlinear(omega: &Field) -> Result<Field> {
    if omega.coeffs()[0] != Complex64::default() {
        return Err(Error::InvalidState("vorticity has a nonzero mean".into()));
    }
    Ok(nonlinear_from_frame(omega.grid(), &TransportFrame::new(omega)))
}

pub(crate) fn nonlinear_from_frame(grid: &Arc<Grid>, fr: &TransportFrame) -> Field {
    let prod: Vec<f64> = (0..grid.len()).map(|i| -(fr.u1[i] * fr.dx[i] + fr.u2[i] * fr.dy[i])).collect();
    project_real(grid, prod)
}

/// Linearization of [`nonlinear`] at the base state of `base` applied to
/// `xi`: `-(𝒜ξ·∇ω + 𝒜ω·∇ξ)`, dealiased.
pub fn nonlinear_linearized(base: &TransportFrame, xi: &Field) -> Field {
    let grid = xi.grid();
    let fx = TransportFrame::new(xi);
    let prod: Vec<f64> = (0..grid.len())
        .map(|i| -(fx.u1[i] * base.dx[i] + fx.u2[i] * base.dy[i] + base.u1[i] * fx.dx[i] + base.u2[i] * fx.dy[i]))
        .collect();
    project_real(grid, prod)
}

/// `L²` adjoint of [`nonlinear_linearized`] on the dealiased subspace:
/// `η ↦ -P𝒜*(η∇ω) + P(𝒜ω·∇η)`.
pub fn nonlinear_adjoint(base: &TransportFrame, eta: &Field) -> Field {
    let grid = eta.grid();
    let (kx, ky, inv) = (grid.kx(), grid.ky(), grid.inv_k2());
    let e = eta.coeffs();
    let mut grad: Vec<Complex64> = (0..grid.len()).map(|i| (I * kx[i] * e[i]) + I * (I * ky[i] * e[i])).collect();
    grid.to_physical(&mut grad);
    let phys = eta.to_physical();
    let a: Vec<f64> = (0..grid.len()).map(|i| phys[i] * base.dx[i]).collect();
    let b: Vec<f64> = (0..grid.len()).map(|i| phys[i] * base.dy[i]).collect();
    let (va, vb) = project_real_pair(grid, &a, &b);
    let adv: Vec<f64> = (0..grid.len()).map(|i| base.u1[i] * grad[i].re + base.u2[i] * grad[i].im).collect();
    let mut out = project_real(grid, adv);
    let c = out.coeffs_mut();
    for i in 0..grid.len() {
        if grid.retained()[i] {
            // 𝒜*v has multiplier conj(i(k₂, −k₁)/|k|²)
            c[i] -= -I * (ky[i] * va[i] - kx[i] * vb[i]) * inv[i];
        }
    }
    out.enforce_hermitian();
    out
}

/// Brute-force Galerkin evaluation of the advective term,
///
/// `Σ_{j+ℓ=k} (j₁ℓ₂ − j₂ℓ₁) / |ℓ|² w_j w_ℓ = ½ Σ (j₁ℓ₂ − j₂ℓ₁)(|ℓ|⁻² − |j|⁻²) w_j w_ℓ`,
///
/// where the complex amplitudes `w_k` are rebuilt from the real sin/cos
/// coordinates `ω_k` through `w_k = ½ω_{-k} + (1/2i)ω_k` for `k ∈ Z⁺` and
/// `w_{-k} = conj(w_k)`. `cutoff` is the lattice radius containing every
/// active mode; it must not exceed the grid's dealias cutoff.
pub fn nonlinear_direct(omega: &Field, cutoff: usize) -> Result<Field> {
    let grid = omega.grid();
    if cutoff > grid.cutoff() || !grid.spec().is_alias_free() {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} exceeds the dealias-safe bound {} of the {} grid",
            grid.cutoff(),
            grid.spec()
        )));
    }
    let r2 = (cutoff * cutoff) as i64;
    // coefficients at roundoff level of the largest one count as inactive
    let floor = 1e-13 * omega.max_abs();
    for (i, c) in omega.coeffs().iter().enumerate() {
        let m = grid.mode_of(i);
        if c.norm() > floor && m.0 * m.0 + m.1 * m.1 > r2 {
            return Err(Error::InvalidArgument(format!("mode {m:?} lies outside the cutoff radius {cutoff}")));
        }
    }
    let modes: Vec<Mode> = grid
        .retained_modes()
        .map(|(_, m)| m)
        .filter(|m| m.0 * m.0 + m.1 * m.1 <= r2)
        .collect();
    let w: Vec<Complex64> = modes
        .iter()
        .map(|&m| {
            let upper = if is_upper_half(m) { m } else { (-m.0, -m.1) };
            let sin_c = omega.real_coordinate(upper);
            let cos_c = omega.real_coordinate((-upper.0, -upper.1));
            let wu = 0.5 * Complex64::new(cos_c, 0.0) + Complex64::new(sin_c, 0.0) / (2.0 * I);
            if upper == m {
                wu
            } else {
                wu.conj()
            }
        })
        .collect();
    let scale = grid.spec().scale;
    let mut out = vec![Complex64::default(); grid.len()];
    for (a, &j) in modes.iter().enumerate() {
        let (j1, j2) = (j.0 as f64 / scale, j.1 as f64 / scale);
        let jj = j1 * j1 + j2 * j2;
        for (b, &l) in modes.iter().enumerate() {
            let k = (j.0 + l.0, j.1 + l.1);
            let Some(idx) = grid.index_of(k) else { continue };
            if !grid.retained()[idx] {
                continue;
            }
            let (l1, l2) = (l.0 as f64 / scale, l.1 as f64 / scale);
            let ll = l1 * l1 + l2 * l2;
            let coef = 0.5 * (j1 * l2 - j2 * l1) * (1.0 / ll - 1.0 / jj);
            out[idx] += coef * w[a] * w[b];
        }
    }
    Ok(Field::from_coeffs_projected(grid, out))
}

/// Orthogonal projection `π_ℓ` onto modes with `|k| <= cutoff`.
pub fn project_low(f: &Field, cutoff: f64) -> Field {
    let grid = f.grid().clone();
    let k2 = grid.k2().to_vec();
    let c2 = cutoff * cutoff * (1.0 + 1e-12);
    let mut out = f.clone();
    out.map_diagonal(|i| if k2[i] <= c2 { 1.0 } else { 0.0 });
    out
}

/// Complement `1 − π_ℓ`.
pub fn project_high(f: &Field, cutoff: f64) -> Field {
    f.sub(&project_low(f, cutoff))
}

/// `‖ω‖`, `‖∇ω‖` and the kinetic energy `½‖u‖²`, all integrated over the
/// full torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub energy: f64,
}

pub fn norms(f: &Field) -> Norms {
    let grid = f.grid();
    let (k2, inv) = (grid.k2(), grid.inv_k2());
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut sm = 0.0;
    for (i, c) in f.coeffs().iter().enumerate() {
        let a = c.norm_sqr();
        s0 += a;
        s1 += k2[i] * a;
        sm += inv[i] * a;
    }
    let area = grid.area();
    Norms { l2: (area * s0).sqrt(), h1: (area * s1).sqrt(), energy: 0.5 * area * sm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::new(n, 1.0).unwrap()).unwrap()
    }

    fn rel_max(a: &Field, b: &Field) -> f64 {
        a.sub(b).max_abs() / a.max_abs().max(b.max_abs()).max(1e-300)
    }

    #[test]
    fn shear_flow_velocity() {
        let g = grid(16);
        let w = Field::from_fn(&g, |x, _| x.sin());
        let u = biot_savart(&w).unwrap();
        let (u1, u2) = u.to_physical();
        let h = 2.0 * PI / 16.0;
        for i in 0..g.len() {
            let x = (i / 16) as f64 * h;
            assert!(u1[i].abs() < 1e-14);
            assert!((u2[i] + x.cos()).abs() < 1e-14);
        }
        assert!(u.curl().sub(&w).max_abs() < 1e-15);
    }

    #[test]
    fn zero_vorticity_zero_velocity() {
        let g = grid(16);
        let u = biot_savart(&Field::zeros(&g)).unwrap();
        assert_eq!(u.norm_sq(), 0.0);
    }

    #[test]
    fn biot_savart_rejects_mean() {
        let g = grid(16);
        let mut c = vec![Complex64::default(); g.len()];
        c[0] = Complex64::new(1.0, 0.0);
        let f = Field::from_coeffs_projected(&g, c.clone());
        assert!(biot_savart(&f).is_ok());
        // bypass projection to simulate a corrupted state
        let mut bad = Field::zeros(&g);
        bad.coeffs_mut()[0] = Complex64::new(1.0, 0.0);
        assert!(biot_savart(&bad).is_err());
        assert!(nonlinear(&bad).is_err());
    }

    #[test]
    fn random_state_divergence_free() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Field::random(&g, 10.0, 1.0, &mut rng);
        let u = biot_savart(&w).unwrap();
        let scale = u.norm_sq().sqrt() / g.area().sqrt();
        assert!(u.max_divergence() <= 1e-12 * scale);
        assert!(u.hermitian_defect() <= 1e-15);
    }

    #[test]
    fn steady_single_shell_states() {
        let g = grid(16);
        let w = Field::from_fn(&g, |x, _| x.sin());
        assert!(nonlinear(&w).unwrap().max_abs() < 1e-15);
        let w = Field::from_fn(&g, |x, y| x.sin() * y.sin());
        assert!(nonlinear(&w).unwrap().max_abs() < 1e-15);
        assert!(nonlinear_direct(&w, 2).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn two_mode_interaction_matches_direct_sum() {
        let g = grid(16);
        let w = Field::from_fn(&g, |x, y| x.sin() + (x + y).sin());
        let a = nonlinear(&w).unwrap();
        let b = nonlinear_direct(&w, 2).unwrap();
        assert!(a.max_abs() > 0.1);
        assert!(rel_max(&a, &b) < 1e-10);
    }

    #[test]
    fn direct_sum_support() {
        let g = grid(16);
        let mut w = Field::zeros(&g);
        w.add_basis((1, 0), 1.0);
        w.add_basis((-1, -1), 0.7);
        let t = nonlinear_direct(&w, 2).unwrap();
        let allowed = [(2, 1), (0, 1), (-2, -1), (0, -1)];
        for (i, c) in t.coeffs().iter().enumerate() {
            let m = g.mode_of(i);
            if c.norm() > 1e-15 {
                assert!(allowed.contains(&m), "unexpected mode {m:?}");
            }
        }
        assert!(t.coeff((2, 1)).norm() > 1e-3);
        assert!(t.coeff((0, 1)).norm() > 1e-3);
    }

    #[test]
    fn direct_rejects_large_cutoff_and_outside_modes() {
        let g = grid(16);
        let w = Field::from_fn(&g, |x, _| (4.0 * x).sin());
        assert!(nonlinear_direct(&w, 6).is_err());
        assert!(nonlinear_direct(&w, 3).is_err());
        assert!(nonlinear_direct(&w, 4).is_ok());
    }

    #[test]
    fn projection_identities() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Field::random(&g, 7.0, 1.0, &mut rng);
        let v = Field::random(&g, 7.0, 1.0, &mut rng);
        assert_eq!(project_low(&w, 100.0), w);
        assert_eq!(project_low(&w, 0.0).max_abs(), 0.0);
        let lo = project_low(&w, 3.0);
        let hi = project_high(&w, 3.0);
        let total = w.norm_sq();
        assert!((lo.norm_sq() + hi.norm_sq() - total).abs() <= 1e-12 * total);
        assert_eq!(project_low(&lo, 3.0), lo);
        let lhs = project_low(&w, 3.0).inner(&v);
        let rhs = w.inner(&project_low(&v, 3.0));
        assert!((lhs - rhs).abs() <= 1e-12 * w.norm() * v.norm());
    }

    #[test]
    fn single_mode_norms() {
        let g = grid(16);
        let w = Field::from_fn(&g, |x, _| x.sin());
        let n = norms(&w);
        assert!((n.l2 * n.l2 - 2.0 * PI * PI).abs() < 1e-12);
        assert!((n.h1 * n.h1 - 2.0 * PI * PI).abs() < 1e-12);
        assert!((n.energy - PI * PI).abs() < 1e-12);
        let z = norms(&Field::zeros(&g));
        assert_eq!((z.l2, z.h1, z.energy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn poincare_on_scaled_torus() {
        let g = Grid::new(GridSpec::new(32, 2.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let w = Field::random(&g, 5.0, 1.0, &mut rng);
            let n = norms(&w);
            assert!(n.h1 >= n.l2 / 2.0 * (1.0 - 1e-14));
        }
    }

    #[test]
    fn linearized_and_adjoint_pair() {
        let g = grid(16);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = Field::random(&g, 5.0, 1.0, &mut rng);
        let xi = Field::random(&g, 5.0, 1.0, &mut rng);
        let eta = Field::random(&g, 5.0, 1.0, &mut rng);
        let fr = TransportFrame::new(&w);
        let lhs = nonlinear_linearized(&fr, &xi).inner(&eta);
        let rhs = xi.inner(&nonlinear_adjoint(&fr, &eta));
        assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
        // the linearization of a quadratic map is exact along a line
        let h = 0.37;
        let plus = nonlinear(&w.add(&xi.scaled(h))).unwrap();
        let base = nonlinear(&w).unwrap();
        let quad = nonlinear(&xi).unwrap();
        let mut pred = base.clone();
        pred.axpy(h, &nonlinear_linearized(&fr, &xi));
        pred.axpy(h * h, &quad);
        assert!(rel_max(&plus, &pred) < 1e-12);
    }
}

//! Spherical-harmonic representation of divergence-free fields on the unit
//! sphere, Gauss–Legendre/FFT transforms and the norms of H, V and D(A).
//!
//! A field is stored as vorticity coefficients `ω_{l,m}` of the orthonormal
//! harmonics `Y_lm = P̄_lm(μ) e^{imλ}` (Condon–Shortley phase), for `m ≥ 0`
//! only; negative orders follow from `ω_{l,-m} = (-1)^m conj(ω_{l,m})`.
//! The stream function is `ψ_lm = -ω_lm / (l(l+1))` and `u = k × ∇ψ`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::RngCore;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::seeding::normal;
use crate::{Error, Result};

pub type C64 = Complex64;

/// Eigenvalue convention for the Stokes operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spectrum {
    /// `l(l+1) - 2`: vector Laplacian shifted by twice the Ricci curvature.
    #[default]
    Stokes,
    /// `l(l+1)`.
    Laplacian,
}

/// Degree window and operator spectrum shared by all fields of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub l_max: usize,
    pub l_min: usize,
    pub spectrum: Spectrum,
}

/// Number of stored `(l, m ≥ 0)` pairs up to degree `l_max`.
pub fn n_coeffs(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 2) / 2
}

/// Position of `(l, m)` in the m-major layout for truncation `l_max`.
#[inline]
pub fn coeff_index(l_max: usize, l: usize, m: usize) -> usize {
    m * (l_max + 1) - m * (m.saturating_sub(1)) / 2 + (l - m)
}

impl Truncation {
    pub fn new(l_max: usize, l_min: usize, spectrum: Spectrum) -> Result<Self> {
        if l_min > l_max {
            return Err(Error::param(format!("l_min = {l_min} exceeds l_max = {l_max}")));
        }
        let floor = match spectrum {
            Spectrum::Stokes => 2,
            Spectrum::Laplacian => 1,
        };
        if l_min < floor {
            return Err(Error::param(format!(
                "l_min = {l_min} leaves a zero eigenvalue in the {spectrum:?} spectrum"
            )));
        }
        Ok(Truncation { l_max, l_min, spectrum })
    }

    pub fn len(&self) -> usize {
        n_coeffs(self.l_max)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, l: usize, m: usize) -> usize {
        coeff_index(self.l_max, l, m)
    }

    /// `λ_l` without the domain check.
    #[inline]
    pub fn eig(&self, l: usize) -> f64 {
        let ll = (l * (l + 1)) as f64;
        match self.spectrum {
            Spectrum::Stokes => ll - 2.0,
            Spectrum::Laplacian => ll,
        }
    }

    /// Stokes eigenvalue of degree `l`.
    pub fn stokes_eig(&self, l: usize) -> Result<f64> {
        if l < self.l_min {
            return Err(Error::Domain(format!("degree {l} below l_min = {}", self.l_min)));
        }
        Ok(self.eig(l))
    }

    /// First eigenvalue λ₁ of the working subspace.
    pub fn lambda1(&self) -> f64 {
        self.eig(self.l_min)
    }

    /// Stored modes `(l, m, index)` with `l_min ≤ l ≤ l_max`, m-major order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..=self.l_max).flat_map(move |m| {
            (m.max(self.l_min)..=self.l_max).map(move |l| (l, m, self.index(l, m)))
        })
    }
}

/// Vorticity coefficients of a divergence-free velocity field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    trunc: Truncation,
    coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(trunc: Truncation) -> Self {
        SpectralField { trunc, coeffs: vec![C64::new(0.0, 0.0); trunc.len()] }
    }

    /// Field from raw coefficients, projected onto `[l_min, l_max]` with real
    /// zonal coefficients.
    pub fn from_coeffs(trunc: Truncation, mut coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != trunc.len() {
            return Err(Error::Dimension(format!(
                "{} coefficients for truncation {} (expected {})",
                coeffs.len(),
                trunc.l_max,
                trunc.len()
            )));
        }
        project(&trunc, &mut coeffs);
        Ok(SpectralField { trunc, coeffs })
    }

    /// Unit-H-norm real field on the mode `(l, m)`; the cosine phase for `m > 0`.
    pub fn unit_mode(trunc: Truncation, l: usize, m: usize) -> Result<Self> {
        if l < trunc.l_min || l > trunc.l_max || m > l {
            return Err(Error::Domain(format!("mode ({l}, {m}) outside the truncation")));
        }
        let mut f = SpectralField::zeros(trunc);
        let ll = (l * (l + 1)) as f64;
        let a = if m == 0 { ll.sqrt() } else { (ll / 2.0).sqrt() };
        f.coeffs[trunc.index(l, m)] = C64::new(a, 0.0);
        Ok(f)
    }

    /// Gaussian coefficients with variance `(l(l+1))^{1-slope}` per real degree
    /// of freedom, so larger `slope` gives smoother fields.
    pub fn random<R: RngCore + ?Sized>(trunc: Truncation, slope: f64, rng: &mut R) -> Self {
        let mut f = SpectralField::zeros(trunc);
        for (l, m, i) in trunc.modes() {
            let s = ((l * (l + 1)) as f64).powf((1.0 - slope) / 2.0);
            f.coeffs[i] = if m == 0 {
                C64::new(s * normal(rng), 0.0)
            } else {
                C64::new(s * normal(rng), s * normal(rng)) / 2f64.sqrt()
            };
        }
        f
    }

    /// Uniformly distributed point on the H-sphere of radius `rho`.
    pub fn on_sphere<R: RngCore + ?Sized>(trunc: Truncation, rho: f64, rng: &mut R) -> Self {
        let mut f = SpectralField::random(trunc, 1.0, rng);
        let n = f.h_norm();
        if n > 0.0 {
            f.scale_mut(rho / n);
        }
        f
    }

    pub fn trunc(&self) -> &Truncation {
        &self.trunc
    }
    pub fn l_max(&self) -> usize {
        self.trunc.l_max
    }
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }
    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    /// Coefficient of `(l, m_z)` for either sign of `m_z`.
    pub fn get(&self, l: usize, m_z: i64) -> C64 {
        let m = m_z.unsigned_abs() as usize;
        if l > self.trunc.l_max || m > l {
            return C64::new(0.0, 0.0);
        }
        let c = self.coeffs[self.trunc.index(l, m)];
        if m_z >= 0 {
            c
        } else if m.is_multiple_of(2) {
            c.conj()
        } else {
            -c.conj()
        }
    }

    /// Set `(l, m ≥ 0)`; a zonal value keeps only its real part.
    pub fn set(&mut self, l: usize, m: usize, value: C64) -> Result<()> {
        if l < self.trunc.l_min || l > self.trunc.l_max || m > l {
            return Err(Error::Domain(format!("mode ({l}, {m}) outside the truncation")));
        }
        let i = self.trunc.index(l, m);
        self.coeffs[i] = if m == 0 { C64::new(value.re, 0.0) } else { value };
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn check_same(&self, other: &SpectralField) -> Result<()> {
        if self.trunc != other.trunc {
            return Err(Error::Dimension("fields have different truncations".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.check_same(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }

    pub fn scale_mut(&mut self, a: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= a);
    }

    /// `self += a·x` (truncations assumed equal).
    pub fn axpy(&mut self, a: f64, x: &SpectralField) {
        debug_assert_eq!(self.trunc, x.trunc);
        for (c, d) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *c += d * a;
        }
    }

    /// Sum over modes of `w(l) |ω_lm|² / (l(l+1))`, counting `m_z < 0`.
    fn weighted_sq(&self, w: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for (l, m, i) in self.trunc.modes() {
            let mult = if m == 0 { 1.0 } else { 2.0 };
            s += mult * w(l) * self.coeffs[i].norm_sqr() / (l * (l + 1)) as f64;
        }
        s
    }

    /// `|u|²`.
    pub fn h_norm_sq(&self) -> f64 {
        self.weighted_sq(|_| 1.0)
    }
    /// `|u|_V²`.
    pub fn v_norm_sq(&self) -> f64 {
        self.weighted_sq(|l| self.trunc.eig(l))
    }
    /// `|Au|²`.
    pub fn a_norm_sq(&self) -> f64 {
        self.weighted_sq(|l| self.trunc.eig(l).powi(2))
    }
    /// `∫ ζ²`, the squared L² norm of vorticity.
    pub fn vorticity_sq(&self) -> f64 {
        self.weighted_sq(|l| (l * (l + 1)) as f64)
    }
    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }
    pub fn v_norm(&self) -> f64 {
        self.v_norm_sq().sqrt()
    }
    pub fn a_norm(&self) -> f64 {
        self.a_norm_sq().sqrt()
    }

    /// Real H inner product `(self, other)`.
    pub fn h_inner(&self, other: &SpectralField) -> f64 {
        debug_assert_eq!(self.trunc, other.trunc);
        let mut s = 0.0;
        for (l, m, i) in self.trunc.modes() {
            let mult = if m == 0 { 1.0 } else { 2.0 };
            let a = self.coeffs[i];
            let b = other.coeffs[i];
            s += mult * (a.re * b.re + a.im * b.im) / (l * (l + 1)) as f64;
        }
        s
    }

    /// Stream-function coefficients `ψ_lm = -ω_lm/(l(l+1))`.
    pub fn stream_function(&self) -> Vec<C64> {
        let mut psi = self.coeffs.clone();
        for (l, _, i) in self.trunc.modes() {
            psi[i] = -psi[i] / (l * (l + 1)) as f64;
        }
        psi
    }
}

/// Zero every coefficient outside `[l_min, l_max]` and the imaginary part of
/// zonal coefficients.
pub(crate) fn project(trunc: &Truncation, coeffs: &mut [C64]) {
    for m in 0..=trunc.l_max {
        for l in m..=trunc.l_max {
            let i = trunc.index(l, m);
            if l < trunc.l_min {
                coeffs[i] = C64::new(0.0, 0.0);
            } else if m == 0 {
                coeffs[i].im = 0.0;
            }
        }
    }
}

/// `H_norm`, `V_norm`, `|A·|` as free functions.
pub fn h_norm(field: &SpectralField) -> f64 {
    field.h_norm()
}
pub fn v_norm(field: &SpectralField) -> f64 {
    field.v_norm()
}
pub fn a_norm(field: &SpectralField) -> f64 {
    field.a_norm()
}

/// Stokes eigenvalue of degree `l` under `trunc`'s spectrum.
pub fn stokes_eig(l: usize, trunc: &Truncation) -> Result<f64> {
    trunc.stokes_eig(l)
}

/// What a synthesis evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    Value,
    /// `∂/∂λ` (longitude).
    Lon,
    /// `(1 - μ²) ∂/∂μ`.
    MuH,
}

/// Gauss–Legendre × equispaced-longitude grid with precomputed Legendre tables.
///
/// Values are stored row-major, latitude first: `values[j * n_lon + k]`,
/// with `μ_j` descending from the north pole.
pub struct SphereGrid {
    l_max: usize,
    n_lat: usize,
    n_lon: usize,
    n_half: usize,
    mu: Vec<f64>,
    weights: Vec<f64>,
    p: Vec<f64>,
    hd: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereGrid")
            .field("l_max", &self.l_max)
            .field("n_lat", &self.n_lat)
            .field("n_lon", &self.n_lon)
            .finish()
    }
}

/// Gauss–Legendre nodes (descending) and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if 2 * i + 1 == n {
            z = 0.0;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

impl SphereGrid {
    /// Grid for degrees up to `l_max`; needs `n_lat ≥ l_max + 1` and
    /// `n_lon ≥ 2 l_max + 1` for exact transforms.
    pub fn new(l_max: usize, n_lat: usize, n_lon: usize) -> Result<Self> {
        if n_lat < l_max + 1 || n_lon < 2 * l_max + 1 {
            return Err(Error::Dimension(format!(
                "grid {n_lon}x{n_lat} too coarse for l_max = {l_max}"
            )));
        }
        let (mu, weights) = gauss_legendre(n_lat);
        let n_half = n_lat.div_ceil(2);
        let nc = n_coeffs(l_max);
        let mut p = vec![0.0; nc * n_half];
        let mut hd = vec![0.0; nc * n_half];
        let mut col = vec![0.0; nc];
        for j in 0..n_half {
            legendre_column(l_max, mu[j], &mut col);
            let x = mu[j];
            for m in 0..=l_max {
                for l in m..=l_max {
                    let i = coeff_index(l_max, l, m);
                    let prev = if l > m { col[coeff_index(l_max, l - 1, m)] } else { 0.0 };
                    let c = (((2 * l + 1) as f64 / (2 * l).saturating_sub(1).max(1) as f64)
                        * ((l * l - m * m) as f64))
                        .sqrt();
                    p[i * n_half + j] = col[i];
                    hd[i * n_half + j] = -(l as f64) * x * col[i] + c * prev;
                }
            }
        }
        let mut planner = FftPlanner::new();
        Ok(SphereGrid {
            l_max,
            n_lat,
            n_lon,
            n_half,
            mu,
            weights,
            p,
            hd,
            fwd: planner.plan_fft_forward(n_lon),
            inv: planner.plan_fft_inverse(n_lon),
        })
    }

    /// Grid satisfying the 3/2-rule for `l_max`: `n_lat = ⌈3(l_max+1)/2⌉` and
    /// `n_lon` the first multiple of 4 at or above `3 l_max + 1`.
    pub fn dealiased(l_max: usize) -> Result<Self> {
        let n_lat = (3 * (l_max + 1)).div_ceil(2);
        let n_lon = (3 * l_max + 1).div_ceil(4) * 4;
        SphereGrid::new(l_max, n_lat, n_lon)
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }
    pub fn n_lat(&self) -> usize {
        self.n_lat
    }
    pub fn n_lon(&self) -> usize {
        self.n_lon
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.n_lat * self.n_lon
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn longitude(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_lon as f64
    }

    /// Whether quadratic products of degree-`l_max` fields are alias-free.
    pub fn is_dealiased_for(&self, l_max: usize) -> bool {
        2 * self.n_lat >= 3 * (l_max + 1) && self.n_lon > 3 * l_max
    }

    fn check_degree(&self, l_max: usize) -> Result<()> {
        if l_max > self.l_max {
            return Err(Error::Dimension(format!(
                "grid built for l_max = {} cannot resolve l_max = {l_max}",
                self.l_max
            )));
        }
        Ok(())
    }

    /// Quadrature of grid values over the sphere.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let dl = 2.0 * PI / self.n_lon as f64;
        values
            .chunks(self.n_lon)
            .zip(&self.weights)
            .map(|(row, w)| w * dl * row.iter().sum::<f64>())
            .sum()
    }

    /// Evaluate `Σ c_lm D[Y_lm]` on the grid for coefficients laid out for
    /// degree `l_max` (all `l ≥ 0`), real field convention.
    pub fn synthesize_raw(&self, coeffs: &[C64], l_max: usize, kind: Deriv) -> Result<Vec<f64>> {
        self.check_degree(l_max)?;
        if coeffs.len() != n_coeffs(l_max) {
            return Err(Error::Dimension("coefficient count does not match l_max".into()));
        }
        let nh = self.n_half;
        let table = if kind == Deriv::MuH { &self.hd } else { &self.p };
        // Mirror-even and mirror-odd partial sums per (m, j).
        let mut even = vec![C64::new(0.0, 0.0); (l_max + 1) * nh];
        let mut odd = vec![C64::new(0.0, 0.0); (l_max + 1) * nh];
        for m in 0..=l_max {
            let (e_row, o_row) = (&mut even[m * nh..(m + 1) * nh], &mut odd[m * nh..(m + 1) * nh]);
            for l in m..=l_max {
                let mut c = coeffs[coeff_index(l_max, l, m)];
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                if kind == Deriv::Lon {
                    c = C64::new(-c.im, c.re) * m as f64;
                }
                let t = &table[coeff_index(self.l_max, l, m) * nh..][..nh];
                let mirror_even = ((l + m) % 2 == 0) != (kind == Deriv::MuH);
                let dst = if mirror_even { &mut *e_row } else { &mut *o_row };
                for (d, &v) in dst.iter_mut().zip(t) {
                    d.re += c.re * v;
                    d.im += c.im * v;
                }
            }
        }
        let n = self.n_lon;
        let mut out = vec![0.0; self.n_lat * n];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()];
        for j in 0..nh {
            let js = self.n_lat - 1 - j;
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for m in 0..=l_max {
                let e = even[m * nh + j];
                let o = odd[m * nh + j];
                let north = e + o;
                let south = if js == j { C64::new(0.0, 0.0) } else { e - o };
                if m == 0 {
                    buf[0] = C64::new(north.re, south.re);
                } else {
                    buf[m] = north + C64::new(-south.im, south.re);
                    buf[n - m] = north.conj() + C64::new(south.im, south.re);
                }
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..n {
                out[j * n + k] = buf[k].re;
            }
            if js != j {
                for k in 0..n {
                    out[js * n + k] = buf[k].im;
                }
            }
        }
        Ok(out)
    }

    /// Project grid values onto `Y_lm`, `0 ≤ m ≤ l ≤ l_max`.
    pub fn analyze_raw(&self, values: &[f64], l_max: usize) -> Result<Vec<C64>> {
        self.check_degree(l_max)?;
        if values.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} grid values for a {}x{} grid",
                values.len(),
                self.n_lon,
                self.n_lat
            )));
        }
        let nh = self.n_half;
        let n = self.n_lon;
        let dl = 2.0 * PI / n as f64;
        let mut even = vec![C64::new(0.0, 0.0); (l_max + 1) * nh];
        let mut odd = vec![C64::new(0.0, 0.0); (l_max + 1) * nh];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()];
        for j in 0..nh {
            let js = self.n_lat - 1 - j;
            let south = js != j;
            for k in 0..n {
                let s = if south { values[js * n + k] } else { 0.0 };
                buf[k] = C64::new(values[j * n + k], s);
            }
            self.fwd.process_with_scratch(&mut buf, &mut scratch);
            let w = self.weights[j] * dl;
            for m in 0..=l_max {
                let a = buf[m];
                let b = buf[(n - m) % n].conj();
                let gn = (a + b) * (0.5 * w);
                let gs = (a - b) * C64::new(0.0, -0.5 * w);
                even[m * nh + j] = gn + gs;
                odd[m * nh + j] = gn - gs;
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); n_coeffs(l_max)];
        for m in 0..=l_max {
            let (e_row, o_row) = (&even[m * nh..(m + 1) * nh], &odd[m * nh..(m + 1) * nh]);
            for l in m..=l_max {
                let t = &self.p[coeff_index(self.l_max, l, m) * nh..][..nh];
                let src = if (l + m) % 2 == 0 { e_row } else { o_row };
                let mut acc = C64::new(0.0, 0.0);
                for (g, &v) in src.iter().zip(t) {
                    acc.re += g.re * v;
                    acc.im += g.im * v;
                }
                out[coeff_index(l_max, l, m)] = if m == 0 { C64::new(acc.re, 0.0) } else { acc };
            }
        }
        Ok(out)
    }

    /// `1/sqrt(1-μ_j²)` per latitude row.
    pub fn inv_cos_lat(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 1.0 / (1.0 - m * m).sqrt()).collect()
    }
}

/// Normalised associated Legendre values `P̄_lm(x)`, m-major layout.
fn legendre_column(l_max: usize, x: f64, out: &mut [f64]) {
    let s = (1.0 - x * x).sqrt();
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        out[coeff_index(l_max, m, m)] = pmm;
        if m == l_max {
            break;
        }
        let mut p_prev = pmm;
        let mut p_cur = ((2 * m + 3) as f64).sqrt() * x * pmm;
        out[coeff_index(l_max, m + 1, m)] = p_cur;
        for l in m + 2..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let p_next = a * (x * p_cur - b * p_prev);
            out[coeff_index(l_max, l, m)] = p_next;
            p_prev = p_cur;
            p_cur = p_next;
        }
    }
}

fn check_grid(field: &SpectralField, grid: &SphereGrid) -> Result<()> {
    grid.check_degree(field.l_max())
}

/// Grid values of the vorticity.
pub fn synthesize(field: &SpectralField, grid: &SphereGrid) -> Result<Vec<f64>> {
    check_grid(field, grid)?;
    grid.synthesize_raw(field.coeffs(), field.l_max(), Deriv::Value)
}

/// Eastward and northward velocity components on the grid.
pub fn synthesize_velocity(field: &SpectralField, grid: &SphereGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    check_grid(field, grid)?;
    let psi = field.stream_function();
    let hpsi = grid.synthesize_raw(&psi, field.l_max(), Deriv::MuH)?;
    let dlon = grid.synthesize_raw(&psi, field.l_max(), Deriv::Lon)?;
    let inv = grid.inv_cos_lat();
    let n = grid.n_lon();
    let east = hpsi.iter().enumerate().map(|(i, v)| -v * inv[i / n]).collect();
    let north = dlon.iter().enumerate().map(|(i, v)| v * inv[i / n]).collect();
    Ok((east, north))
}

/// Vorticity field from grid values, projected onto the truncation.
pub fn analyze(values: &[f64], grid: &SphereGrid, trunc: Truncation) -> Result<SpectralField> {
    let raw = grid.analyze_raw(values, trunc.l_max)?;
    SpectralField::from_coeffs(trunc, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::positioned_rng;

    fn trunc(l_max: usize) -> Truncation {
        Truncation::new(l_max, 2, Spectrum::Stokes).unwrap()
    }

    #[test]
    fn gauss_weights_integrate_polynomials() {
        let (x, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i6: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((i6 - 2.0 / 23.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn zero_field_synthesizes_to_zero() {
        let g = SphereGrid::dealiased(8).unwrap();
        let v = synthesize(&SpectralField::zeros(trunc(8)), &g).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn degree_two_zonal_harmonic() {
        let g = SphereGrid::dealiased(6).unwrap();
        let mut f = SpectralField::zeros(trunc(6));
        f.set(2, 0, C64::new(1.0, 0.0)).unwrap();
        let v = synthesize(&f, &g).unwrap();
        let norm = (5.0 / (4.0 * PI)).sqrt();
        for (j, mu) in g.mu().iter().enumerate() {
            let expect = norm * 0.5 * (3.0 * mu * mu - 1.0);
            for k in 0..g.n_lon() {
                assert!((v[j * g.n_lon() + k] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sectoral_harmonic_has_condon_shortley_phase() {
        let g = SphereGrid::dealiased(4).unwrap();
        let mut f = SpectralField::zeros(trunc(4));
        f.set(2, 2, C64::new(1.0, 0.0)).unwrap();
        let v = synthesize(&f, &g).unwrap();
        // 2 Re(Y_22) with Y_22 = (1/4) sqrt(15/(2π)) sin²θ e^{2iλ}
        for (j, mu) in g.mu().iter().enumerate() {
            for k in 0..g.n_lon() {
                let lam = g.longitude(k);
                let expect = 0.5 * (15.0 / (2.0 * PI)).sqrt() * (1.0 - mu * mu) * (2.0 * lam).cos();
                assert!((v[j * g.n_lon() + k] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = trunc(31);
        let g = SphereGrid::dealiased(31).unwrap();
        let mut rng = positioned_rng(3, 0, 0);
        let f = SpectralField::random(t, 0.0, &mut rng);
        let back = analyze(&synthesize(&f, &g).unwrap(), &g, t).unwrap();
        let err = back.sub(&f).unwrap().h_norm() / f.h_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn round_trip_on_minimal_grid() {
        let t = trunc(10);
        let g = SphereGrid::new(10, 11, 21).unwrap();
        let mut rng = positioned_rng(4, 0, 0);
        let f = SpectralField::random(t, 0.0, &mut rng);
        let back = analyze(&synthesize(&f, &g).unwrap(), &g, t).unwrap();
        assert!(back.sub(&f).unwrap().h_norm() / f.h_norm() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        assert!(SphereGrid::new(10, 10, 21).is_err());
        assert!(SphereGrid::new(10, 11, 20).is_err());
        let g = SphereGrid::dealiased(4).unwrap();
        assert!(synthesize(&SpectralField::zeros(trunc(5)), &g).is_err());
    }

    #[test]
    fn analysis_projects_out_low_degrees() {
        let g = SphereGrid::dealiased(6).unwrap();
        let values = vec![1.0; g.len()];
        let f = analyze(&values, &g, trunc(6)).unwrap();
        assert!(f.h_norm() < 1e-14);
    }

    #[test]
    fn parseval_matches_grid_energy() {
        let t = trunc(20);
        let g = SphereGrid::dealiased(20).unwrap();
        let mut rng = positioned_rng(5, 0, 0);
        let f = SpectralField::random(t, 1.0, &mut rng);
        let (e, n) = synthesize_velocity(&f, &g).unwrap();
        let ke: Vec<f64> = e.iter().zip(&n).map(|(a, b)| a * a + b * b).collect();
        let quad = g.integrate(&ke);
        assert!((quad - f.h_norm_sq()).abs() / quad < 1e-10);
    }

    #[test]
    fn norms_of_lowest_mode() {
        let t = trunc(8);
        let e = SpectralField::unit_mode(t, 2, 0).unwrap();
        assert!((e.h_norm_sq() - 1.0).abs() < 1e-15);
        assert!((e.v_norm_sq() - 4.0).abs() < 1e-14);
        assert!((e.a_norm_sq() - 16.0).abs() < 1e-13);
        let z = SpectralField::zeros(t);
        assert_eq!((z.h_norm(), z.v_norm(), z.a_norm()), (0.0, 0.0, 0.0));
        let s = SpectralField::unit_mode(t, 3, 2).unwrap();
        assert!((s.h_norm_sq() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stokes_spectrum() {
        let t = trunc(8);
        assert_eq!(t.stokes_eig(2).unwrap(), 4.0);
        assert!(t.stokes_eig(1).is_err());
        let lap = Truncation::new(8, 1, Spectrum::Laplacian).unwrap();
        assert_eq!(lap.stokes_eig(2).unwrap(), 6.0);
        assert!((2..8).all(|l| t.eig(l + 1) > t.eig(l)));
        assert!(Truncation::new(8, 1, Spectrum::Stokes).is_err());
    }

    #[test]
    fn reality_condition_for_negative_orders() {
        let t = trunc(5);
        let mut f = SpectralField::zeros(t);
        f.set(3, 1, C64::new(1.0, 2.0)).unwrap();
        f.set(3, 2, C64::new(-0.5, 0.25)).unwrap();
        assert_eq!(f.get(3, -1), C64::new(-1.0, 2.0));
        assert_eq!(f.get(3, -2), C64::new(-0.5, -0.25));
        f.set(4, 0, C64::new(1.0, 5.0)).unwrap();
        assert_eq!(f.get(4, 0).im, 0.0);
    }
}

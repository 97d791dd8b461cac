//! Stokes operator A, Coriolis operator C, the advection nonlinearity B and
//! the trilinear form `b(u, v, w) = (B(u, v), w)`.
//!
//! B is evaluated pseudo-spectrally. For `u = k × ∇ψ_u` the vorticity of
//! `∇_u v` is
//!
//! ```text
//! curl(∇_u v) = ½ [ J(ψ_u, ζ_v) + J(ψ_v, ζ_u) + Δ J(ψ_u, ψ_v) ]
//! ```
//!
//! with `J(a, b) = a_λ b_μ - a_μ b_λ`. It reduces to `J(ψ, ζ)` on the
//! diagonal, and `b(u, v, v) = 0` holds to roundoff on a dealiased grid
//! because every pointwise product is evaluated exactly and integrated by an
//! exact rule.

use std::sync::Arc;

use num_complex::Complex64;

use crate::seeding::positioned_rng;
use crate::spherical_spectral::{
    synthesize_velocity, Deriv, SpectralField, SphereGrid, Truncation, C64,
};
use crate::{Error, Result};

/// Grid, physical constants and truncation shared by the operators.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    grid: Arc<SphereGrid>,
    trunc: Truncation,
    rotation: f64,
    viscosity: f64,
    dealias: bool,
    inv_cos2: Vec<f64>,
}

impl OperatorContext {
    pub fn new(
        trunc: Truncation,
        grid: Arc<SphereGrid>,
        rotation: f64,
        viscosity: f64,
        dealias: bool,
    ) -> Result<Self> {
        if grid.l_max() < trunc.l_max {
            return Err(Error::Dimension(format!(
                "grid resolves l_max = {} but the truncation needs {}",
                grid.l_max(),
                trunc.l_max
            )));
        }
        if dealias && !grid.is_dealiased_for(trunc.l_max) {
            return Err(Error::Dimension(format!(
                "grid {}x{} violates the 3/2 rule for l_max = {}",
                grid.n_lon(),
                grid.n_lat(),
                trunc.l_max
            )));
        }
        if !(rotation >= 0.0) {
            return Err(Error::param(format!("rotation = {rotation} must be >= 0")));
        }
        if !(viscosity >= 0.0) {
            return Err(Error::param(format!("viscosity = {viscosity} must be >= 0")));
        }
        let inv_cos2 = grid.mu().iter().map(|m| 1.0 / (1.0 - m * m)).collect();
        Ok(OperatorContext { grid, trunc, rotation, viscosity, dealias, inv_cos2 })
    }

    /// Dealiased context on a fresh grid.
    pub fn dealiased(trunc: Truncation, rotation: f64, viscosity: f64) -> Result<Self> {
        let grid = Arc::new(SphereGrid::dealiased(trunc.l_max)?);
        OperatorContext::new(trunc, grid, rotation, viscosity, true)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
    pub fn trunc(&self) -> &Truncation {
        &self.trunc
    }
    pub fn rotation(&self) -> f64 {
        self.rotation
    }
    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }
    pub fn dealias(&self) -> bool {
        self.dealias
    }

    fn check(&self, f: &SpectralField) -> Result<()> {
        if *f.trunc() != self.trunc {
            return Err(Error::Dimension("field truncation differs from the context".into()));
        }
        Ok(())
    }

    /// Grids `(∂_λ a, (1-μ²)∂_μ a)` of a raw coefficient array.
    fn derivs(&self, a: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.trunc.l_max;
        let d_lon = self.grid.synthesize_raw(a, l, Deriv::Lon).expect("degree checked");
        let d_mu = self.grid.synthesize_raw(a, l, Deriv::MuH).expect("degree checked");
        (d_lon, d_mu)
    }

    /// Pointwise `J(a, b)` from derivative grids.
    fn jac(&self, a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>), out: &mut [f64], weight: f64) {
        let n = self.grid.n_lon();
        for (j, row) in out.chunks_mut(n).enumerate() {
            let s = weight * self.inv_cos2[j];
            let base = j * n;
            for (k, o) in row.iter_mut().enumerate() {
                let i = base + k;
                *o += s * (a.0[i] * b.1[i] - a.1[i] * b.0[i]);
            }
        }
    }

    fn to_field(&self, values: &[f64]) -> SpectralField {
        let raw = self.grid.analyze_raw(values, self.trunc.l_max).expect("grid checked");
        SpectralField::from_coeffs(self.trunc, raw).expect("length matches")
    }
}

/// Stokes operator: multiply mode `l` by `λ_l`.
#[allow(non_snake_case)]
pub fn apply_A(field: &SpectralField) -> SpectralField {
    let t = *field.trunc();
    let mut out = field.clone();
    for (l, _, i) in t.modes() {
        out.coeffs_mut()[i] *= t.eig(l);
    }
    out
}

/// Imaginary part of the Coriolis multiplier of mode `(l, m)`.
#[inline]
pub fn coriolis_rate(l: usize, m: usize, rotation: f64) -> f64 {
    -2.0 * rotation * m as f64 / (l * (l + 1)) as f64
}

/// Coriolis operator: mode `(l, m)` times `-2Ω i m / (l(l+1))`.
#[allow(non_snake_case)]
pub fn apply_C(field: &SpectralField, ctx: &OperatorContext) -> SpectralField {
    let t = *field.trunc();
    let mut out = field.clone();
    for (l, m, i) in t.modes() {
        let c = out.coeffs()[i];
        let r = coriolis_rate(l, m, ctx.rotation);
        out.coeffs_mut()[i] = Complex64::new(-r * c.im, r * c.re);
    }
    out
}

/// `B(u, v)` as vorticity coefficients on `[l_min, l_max]`.
#[allow(non_snake_case)]
pub fn bilinear_B(u: &SpectralField, v: &SpectralField, ctx: &OperatorContext) -> Result<SpectralField> {
    ctx.check(u)?;
    ctx.check(v)?;
    let pu = ctx.derivs(&u.stream_function());
    let pv = ctx.derivs(&v.stream_function());
    let zu = ctx.derivs(u.coeffs());
    let zv = ctx.derivs(v.coeffs());
    let n = ctx.grid.len();
    let mut sym = vec![0.0; n];
    ctx.jac(&pu, &zv, &mut sym, 0.5);
    ctx.jac(&pv, &zu, &mut sym, 0.5);
    let mut cross = vec![0.0; n];
    ctx.jac(&pu, &pv, &mut cross, 0.5);
    let mut out = ctx.to_field(&sym);
    let lap = ctx.to_field(&cross);
    for (l, _, i) in ctx.trunc.modes() {
        out.coeffs_mut()[i] -= lap.coeffs()[i] * (l * (l + 1)) as f64;
    }
    Ok(out)
}

/// `B(u, u) = J(ψ, ζ)`.
pub fn advection(u: &SpectralField, ctx: &OperatorContext) -> Result<SpectralField> {
    ctx.check(u)?;
    let p = ctx.derivs(&u.stream_function());
    let z = ctx.derivs(u.coeffs());
    let mut g = vec![0.0; ctx.grid.len()];
    ctx.jac(&p, &z, &mut g, 1.0);
    Ok(ctx.to_field(&g))
}

/// `b(u, v, w) = (B(u, v), w)_H`.
pub fn trilinear_b(u: &SpectralField, v: &SpectralField, w: &SpectralField, ctx: &OperatorContext) -> Result<f64> {
    ctx.check(w)?;
    Ok(bilinear_B(u, v, ctx)?.h_inner(w))
}

/// Symmetric part `S` of `h ↦ B(h, e)`: `S h = ½ [J(ψ_e, ζ_h) + Δ J(ψ_h, ψ_e)]`,
/// so that `(S h, h) = b(h, e, h)`.
pub fn mode_form_operator(e: &SpectralField, h: &SpectralField, ctx: &OperatorContext) -> Result<SpectralField> {
    ctx.check(e)?;
    ctx.check(h)?;
    let pe = ctx.derivs(&e.stream_function());
    let ph = ctx.derivs(&h.stream_function());
    let zh = ctx.derivs(h.coeffs());
    let n = ctx.grid.len();
    let mut a = vec![0.0; n];
    ctx.jac(&pe, &zh, &mut a, 0.5);
    let mut c = vec![0.0; n];
    ctx.jac(&ph, &pe, &mut c, 0.5);
    let mut out = ctx.to_field(&a);
    let lap = ctx.to_field(&c);
    for (l, _, i) in ctx.trunc.modes() {
        out.coeffs_mut()[i] -= lap.coeffs()[i] * (l * (l + 1)) as f64;
    }
    Ok(out)
}

/// Result of [`estimate_mode_bound_delta`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct ModeBound {
    /// `1.1 ×` the largest observed ratio.
    pub delta: f64,
    /// Largest `|⟨B(u, e_l), u⟩| / |u|²` per noise mode.
    pub ratios: Vec<f64>,
    /// Grid maximum of the Frobenius norm of `∇e_l` per noise mode.
    pub gradient_bounds: Vec<f64>,
}

/// Power-iteration steps applied to every random sample.
const DELTA_REFINE_STEPS: usize = 40;

/// Largest `|b(u, e, u)| / |u|²` seen along power iteration of `S` from `u0`.
pub fn mode_ratio_from(e: &SpectralField, u0: &SpectralField, ctx: &OperatorContext, steps: usize) -> Result<f64> {
    let mut u = u0.clone();
    let mut best: f64 = 0.0;
    for _ in 0..=steps {
        let n2 = u.h_norm_sq();
        if n2 == 0.0 {
            break;
        }
        u.scale_mut(1.0 / n2.sqrt());
        let su = mode_form_operator(e, &u, ctx)?;
        best = best.max(su.h_inner(&u).abs());
        let gain = su.h_norm();
        if gain == 0.0 {
            break;
        }
        // With eigenvalues ±μ of equal size the iterate oscillates in their
        // span; S u ± μ u isolate the two eigendirections.
        for sign in [1.0, -1.0] {
            let mut cand = su.clone();
            cand.axpy(sign * gain, &u);
            let c2 = cand.h_norm_sq();
            if c2 > 0.0 {
                let sc = mode_form_operator(e, &cand, ctx)?;
                best = best.max(sc.h_inner(&cand).abs() / c2);
            }
        }
        u = su;
    }
    Ok(best)
}

/// Estimate δ with `|⟨B(u, e_l), u⟩| ≤ δ |u|²` over the noise modes.
///
/// Each random sample is refined by power iteration on the symmetric form,
/// because plain sampling in ~10³ dimensions badly underestimates the sup.
pub fn estimate_mode_bound_delta(
    noise_modes: &[SpectralField],
    ctx: &OperatorContext,
    n_samples: usize,
    seed: u64,
) -> Result<ModeBound> {
    if noise_modes.is_empty() {
        return Err(Error::param("empty noise mode list"));
    }
    if n_samples == 0 {
        return Err(Error::param("n_samples must be >= 1"));
    }
    let mut ratios = Vec::with_capacity(noise_modes.len());
    let mut gradient_bounds = Vec::with_capacity(noise_modes.len());
    for (l, e) in noise_modes.iter().enumerate() {
        let mut best: f64 = 0.0;
        for s in 0..n_samples {
            let mut rng = positioned_rng(seed, l as u64, s as i64 * 1_000_000);
            let u0 = SpectralField::random(ctx.trunc, 1.0, &mut rng);
            best = best.max(mode_ratio_from(e, &u0, ctx, DELTA_REFINE_STEPS)?);
        }
        ratios.push(best);
        gradient_bounds.push(gradient_bound(e, ctx)?);
    }
    let delta = 1.1 * ratios.iter().cloned().fold(0.0, f64::max);
    Ok(ModeBound { delta, ratios, gradient_bounds })
}

/// Grid maximum of the Frobenius norm of the tangential derivative of the
/// Cartesian velocity components of `e`.
pub fn gradient_bound(e: &SpectralField, ctx: &OperatorContext) -> Result<f64> {
    ctx.check(e)?;
    let g = &ctx.grid;
    let (east, north) = synthesize_velocity(e, g)?;
    let l_aux = ctx.trunc.l_max + 1;
    let aux = SphereGrid::new(l_aux, g.n_lat(), g.n_lon())?;
    let n = g.n_lon();
    let mut comps = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
    for (j, &mu) in g.mu().iter().enumerate() {
        let cphi = (1.0 - mu * mu).sqrt();
        for k in 0..n {
            let lam = g.longitude(k);
            let (sl, cl) = lam.sin_cos();
            let i = j * n + k;
            let (ue, un) = (east[i], north[i]);
            comps[0][i] = -sl * ue - mu * cl * un;
            comps[1][i] = cl * ue - mu * sl * un;
            comps[2][i] = cphi * un;
        }
    }
    let mut frob = vec![0.0; g.len()];
    for c in &comps {
        let coeffs = aux.analyze_raw(c, l_aux)?;
        let dl = aux.synthesize_raw(&coeffs, l_aux, Deriv::Lon)?;
        let dm = aux.synthesize_raw(&coeffs, l_aux, Deriv::MuH)?;
        for (i, f) in frob.iter_mut().enumerate() {
            *f += (dl[i] * dl[i] + dm[i] * dm[i]) * ctx.inv_cos2[i / n];
        }
    }
    Ok(frob.iter().cloned().fold(0.0, f64::max).sqrt())
}

/// Empirical `c_B`: `1.1 ×` the largest ratio over random fields of both
/// `|b(u,v,w)| / (|u|^½ |u|_V^½ |v|^½ |v|_V^½ |w|_V)` and
/// `|(B(u,u), Av)| / (|u|^½ |Au|^½ |u|_V |Av|)`, the two forms the
/// absorbing-ball estimates use.
pub fn estimate_c_b(ctx: &OperatorContext, n_samples: usize, seed: u64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for s in 0..n_samples {
        let mut rng = positioned_rng(seed, 0, s as i64 * 1_000_000);
        let slope = 1.0 + (s % 3) as f64;
        let u = SpectralField::random(ctx.trunc, slope, &mut rng);
        let v = SpectralField::random(ctx.trunc, slope, &mut rng);
        let w = SpectralField::random(ctx.trunc, slope, &mut rng);
        let num = trilinear_b(&u, &v, &w, ctx)?.abs();
        let den = (u.h_norm() * u.v_norm() * v.h_norm() * v.v_norm()).sqrt() * w.v_norm();
        if den > 0.0 {
            best = best.max(num / den);
        }
        let av = apply_A(&v);
        let num = advection(&u, ctx)?.h_inner(&av).abs();
        let den = (u.h_norm() * u.a_norm()).sqrt() * u.v_norm() * av.h_norm();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    Ok(1.1 * best)
}

//! Stationary Ornstein–Uhlenbeck process `dz + (Â + α) z dt = Σ σ_l dL_l e_l`
//! on the noise modes, with `Â = νA + C`.
//!
//! Each mode evolves independently with generator `a_l = νλ_l + α + i r_l`,
//! `r_l` the Coriolis rate. Paths are propagated exactly: linear decay over
//! the step, then the increment of the step added undamped at its end.

use serde::Serialize;

use crate::config::AlphaSearch;
use crate::fluid_operators::coriolis_rate;
use crate::seeding::positioned_rng;
use crate::spherical_spectral::{coeff_index, Deriv, SphereGrid, Truncation, C64};
use crate::stable_noise::{draw, grid_index, NoisePath, StableParams};
use crate::{Error, Result};

/// Certified truncation of the stationary convolution.
pub const BURN_IN_DECAY: f64 = 1e-12;

/// Per-mode OU generators and noise laws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuSpec {
    modes: Vec<(usize, usize)>,
    laws: Vec<StableParams>,
    a: Vec<C64>,
    alpha: f64,
    viscosity: f64,
    rotation: f64,
    eigs: Vec<f64>,
}

impl OuSpec {
    pub fn new(
        trunc: &Truncation,
        viscosity: f64,
        rotation: f64,
        alpha: f64,
        modes: &[(usize, usize)],
        sigma: &[f64],
        beta: f64,
    ) -> Result<Self> {
        if modes.len() != sigma.len() {
            return Err(Error::param(format!("{} noise modes but {} sigmas", modes.len(), sigma.len())));
        }
        if modes.is_empty() {
            return Err(Error::param("no noise modes"));
        }
        if !(alpha >= 0.0) {
            return Err(Error::param(format!("alpha = {alpha} must be >= 0")));
        }
        let mut laws = Vec::with_capacity(modes.len());
        let mut eigs = Vec::with_capacity(modes.len());
        for (&(l, m), &s) in modes.iter().zip(sigma) {
            if l < trunc.l_min || l > trunc.l_max || m > l {
                return Err(Error::Dimension(format!("noise mode ({l}, {m}) is not retained")));
            }
            let p = StableParams::symmetric(beta, s);
            p.validate()?;
            laws.push(p);
            eigs.push(trunc.eig(l));
        }
        let mut spec = OuSpec {
            modes: modes.to_vec(),
            laws,
            a: Vec::new(),
            alpha,
            viscosity,
            rotation,
            eigs,
        };
        spec.a = spec.generators(alpha);
        if spec.a.iter().any(|a| !(a.re > 0.0)) {
            return Err(Error::Domain("OU generator needs Re(a_l) > 0 for every noise mode".into()));
        }
        Ok(spec)
    }

    fn generators(&self, alpha: f64) -> Vec<C64> {
        self.modes
            .iter()
            .zip(&self.eigs)
            .map(|(&(l, m), &lam)| C64::new(self.viscosity * lam + alpha, coriolis_rate(l, m, self.rotation)))
            .collect()
    }

    /// Same modes and laws with another α.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut s = self.clone();
        s.alpha = alpha;
        s.a = s.generators(alpha);
        if s.a.iter().any(|a| !(a.re > 0.0)) {
            return Err(Error::Domain(format!("alpha = {alpha} leaves a non-dissipative mode")));
        }
        Ok(s)
    }

    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }
    pub fn laws(&self) -> &[StableParams] {
        &self.laws
    }
    pub fn generator(&self) -> &[C64] {
        &self.a
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.laws[0].beta
    }
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
    /// True when every generator is real (all noise modes zonal or Ω = 0).
    pub fn is_real(&self) -> bool {
        self.a.iter().all(|a| a.im == 0.0)
    }
    /// `min_l Re(a_l)`.
    pub fn min_decay(&self) -> f64 {
        self.a.iter().map(|a| a.re).fold(f64::INFINITY, f64::min)
    }
    /// Window after which a zero start is forgotten to [`BURN_IN_DECAY`].
    pub fn burn_window(&self) -> f64 {
        -BURN_IN_DECAY.ln() / self.min_decay()
    }
    /// Noise-path laws, one per mode.
    pub fn path_params(&self) -> Vec<StableParams> {
        self.laws.clone()
    }

    /// Scale of the stationary law of the step-`h` recursion (real generators).
    pub fn stationary_scale(&self, mode: usize, h: f64) -> f64 {
        let beta = self.beta();
        let a = self.a[mode].re;
        self.laws[mode].scale * (h / -(-beta * a * h).exp_m1()).powf(1.0 / beta)
    }
}

/// OU values on the noise modes at a grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OUState {
    pub time: f64,
    /// Grid index of `time` on the driving path.
    pub index: i64,
    pub values: Vec<C64>,
}

impl OUState {
    pub fn zero(n_modes: usize, index: i64, h: f64) -> Self {
        OUState { time: index as f64 * h, index, values: vec![C64::new(0.0, 0.0); n_modes] }
    }

    /// `|z|²` of the noise field (unit-norm modes).
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Σ_l |z_l|`.
    pub fn abs_sum(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).sum()
    }
}

#[inline]
fn decay(a: C64, h: f64) -> C64 {
    if a.im == 0.0 {
        C64::new((-a.re * h).exp(), 0.0)
    } else {
        (-a * h).exp()
    }
}

/// One step: `z_l ← e^{-a_l h} z_l + ΔL_l`.
pub fn ou_step(state: &OUState, spec: &OuSpec, h: f64, increments: &[f64]) -> OUState {
    let values = state
        .values
        .iter()
        .zip(&spec.a)
        .zip(increments)
        .map(|((&z, &a), &dl)| decay(a, h) * z + dl)
        .collect();
    OUState { time: (state.index + 1) as f64 * h, index: state.index + 1, values }
}

/// Left limit `z(t + h−) = e^{-a h} z(t)`.
pub fn ou_left_limit(state: &OUState, spec: &OuSpec, h: f64) -> Vec<C64> {
    state.values.iter().zip(&spec.a).map(|(&z, &a)| decay(a, h) * z).collect()
}

/// One step on the grid of `path`, checking alignment.
pub fn ou_step_on(state: &OUState, spec: &OuSpec, path: &NoisePath) -> Result<OUState> {
    let k = path.checked_index(state.time)?;
    if k != state.index {
        return Err(Error::Alignment(format!(
            "state time {} is not grid point {} of the path",
            state.time, state.index
        )));
    }
    if k >= path.k_end() {
        return Err(Error::Range(format!("no increment after t = {}", state.time)));
    }
    let inc: Vec<f64> = (0..spec.n_modes()).map(|l| path.increment(l, k)).collect();
    Ok(ou_step(state, spec, path.h(), &inc))
}

/// Propagate to `t_target` along `path`.
pub fn ou_propagate(state: &OUState, spec: &OuSpec, path: &NoisePath, t_target: f64) -> Result<OUState> {
    check_modes(spec, path)?;
    let end = path.checked_index(t_target)?;
    if end < state.index {
        return Err(Error::Range(format!("cannot propagate backwards to t = {t_target}")));
    }
    let h = path.h();
    let mut s = state.clone();
    let mut inc = vec![0.0; spec.n_modes()];
    while s.index < end {
        for (l, x) in inc.iter_mut().enumerate() {
            *x = path.increment(l, s.index);
        }
        s = ou_step(&s, spec, h, &inc);
    }
    Ok(s)
}

fn check_modes(spec: &OuSpec, path: &NoisePath) -> Result<()> {
    if path.n_modes() != spec.n_modes() {
        return Err(Error::Dimension(format!(
            "path has {} modes, the OU process {}",
            path.n_modes(),
            spec.n_modes()
        )));
    }
    Ok(())
}

/// Start from zero at `t_start` and propagate to `t_target`; errors unless
/// the start is forgotten to [`BURN_IN_DECAY`].
pub fn ou_stationary_burn_in(path: &NoisePath, spec: &OuSpec, t_start: f64, t_target: f64) -> Result<OUState> {
    check_modes(spec, path)?;
    let k0 = path.checked_index(t_start)?;
    let k1 = path.checked_index(t_target)?;
    let window = (k1 - k0) as f64 * path.h();
    if (-spec.min_decay() * window).exp() >= BURN_IN_DECAY {
        return Err(Error::Range(format!(
            "burn-in window {window} is shorter than the required {} (path starts at {})",
            spec.burn_window(),
            path.t_min()
        )));
    }
    ou_propagate(&OUState::zero(spec.n_modes(), k0, path.h()), spec, path, t_target)
}

/// Stationary OU value at `t`, burnt in from the start of the path.
///
/// Starting at the path origin for every query makes `z` on a shifted path
/// agree bitwise with `z` on the original one.
pub fn stationary_state(path: &NoisePath, spec: &OuSpec, t: f64) -> Result<OUState> {
    ou_stationary_burn_in(path, spec, path.t_min(), t)
}

/// `z(t) = L(t) - Y(t)`, `Y(t) = ∫ a e^{-a(t-s)} L(s) ds` from `z(t_start) = 0`,
/// with `L` measured from `t_start` and `Y` by the trapezoid rule on the path grid.
pub fn ou_ibp_reconstruct(path: &NoisePath, spec: &OuSpec, t_start: f64, t: f64) -> Result<Vec<C64>> {
    check_modes(spec, path)?;
    let k0 = path.checked_index(t_start)?;
    let k1 = path.checked_index(t)?;
    if k1 < k0 {
        return Err(Error::Range(format!("t = {t} precedes t_start = {t_start}")));
    }
    let h = path.h();
    let mut out = Vec::with_capacity(spec.n_modes());
    for (l, &a) in spec.a.iter().enumerate() {
        let mut big_l = 0.0;
        let mut y = C64::new(0.0, 0.0);
        let mut prev = C64::new(0.0, 0.0);
        for k in k0..k1 {
            big_l += path.increment(l, k);
            let g = a * (-a * ((k1 - k - 1) as f64 * h)).exp() * big_l;
            y += (prev + g) * (0.5 * h);
            prev = g;
        }
        out.push(C64::new(big_l, 0.0) - y);
    }
    Ok(out)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MomentEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        MomentEstimate { mean, stderr: (var / n as f64).sqrt(), n }
    }
}

fn standard_abs_draws(beta: f64, n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let unit = StableParams::symmetric(beta, 1.0);
    let mut rng = positioned_rng(seed, stream, 0);
    (0..n).map(|_| draw(&unit, &mut rng).abs()).collect()
}

/// `Ê|z_mode(0)|` for the step-`h` stationary process.
///
/// Real generators sample the stationary law directly: `z` is a stable
/// variate with scale [`OuSpec::stationary_scale`]. The same uniforms are used
/// for every α, so the estimate is exactly monotone in α. Complex generators
/// are sampled pathwise over the burn-in window.
pub fn estimate_abs_moment(spec: &OuSpec, mode: usize, h: f64, n_paths: usize, seed: u64) -> Result<MomentEstimate> {
    let beta = spec.beta();
    if beta <= 1.0 {
        return Err(Error::MomentInfinite(format!("E|z| is infinite for beta = {beta} <= 1")));
    }
    if mode >= spec.n_modes() {
        return Err(Error::param(format!("mode {mode} out of range")));
    }
    if n_paths < 2 {
        return Err(Error::param("n_paths must be >= 2"));
    }
    let law = spec.laws[mode];
    if law.scale == 0.0 {
        return Ok(MomentEstimate { mean: 0.0, stderr: 0.0, n: n_paths });
    }
    if spec.a[mode].im == 0.0 {
        let s = spec.stationary_scale(mode, h);
        let xs: Vec<f64> = standard_abs_draws(beta, n_paths, seed, mode as u64).iter().map(|x| s * x).collect();
        return Ok(MomentEstimate::from_samples(&xs));
    }
    let a = spec.a[mode];
    let steps = (spec.burn_window() / h).ceil() as usize;
    let step_law = StableParams::symmetric(beta, law.scale * h.powf(1.0 / beta));
    let d = (-a * h).exp();
    let xs: Vec<f64> = (0..n_paths)
        .map(|i| {
            let mut rng = positioned_rng(seed, (mode as u64) << 32 | i as u64, 0);
            let mut z = C64::new(0.0, 0.0);
            for _ in 0..steps {
                z = d * z + draw(&step_law, &mut rng);
            }
            z.norm()
        })
        .collect();
    Ok(MomentEstimate::from_samples(&xs))
}

/// Outcome of the α search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaCertificate {
    pub alpha: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub moments: Vec<MomentEstimate>,
    /// `4 δ Σ_l (Ê|z_l(0)| + 2 se_l)`.
    pub lhs: f64,
    /// `λ₁ / 4`.
    pub rhs: f64,
    pub seed: u64,
}

impl AlphaCertificate {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Certificate values at the α of `spec`.
pub fn alpha_certificate(spec: &OuSpec, delta: f64, lambda1: f64, h: f64, n_paths: usize, seed: u64) -> Result<AlphaCertificate> {
    let moments = (0..spec.n_modes())
        .map(|l| estimate_abs_moment(spec, l, h, n_paths, seed))
        .collect::<Result<Vec<_>>>()?;
    let lhs = 4.0 * delta * moments.iter().map(|m| m.mean + 2.0 * m.stderr).sum::<f64>();
    Ok(AlphaCertificate { alpha: spec.alpha(), delta, lambda1, moments, lhs, rhs: lambda1 / 4.0, seed })
}

/// Smallest α on the geometric grid `min · ratio^k ≤ max` with
/// `4 δ Σ_l (Ê|z_l(0)| + 2 se_l) ≤ λ₁/4`.
pub fn select_alpha(spec: &OuSpec, delta: f64, lambda1: f64, search: &AlphaSearch, h: f64, seed: u64) -> Result<AlphaCertificate> {
    if !(delta > 0.0) || !(lambda1 > 0.0) {
        return Err(Error::param(format!("need delta > 0 and lambda1 > 0 (got {delta}, {lambda1})")));
    }
    if !(search.min > 0.0 && search.max >= search.min && search.ratio > 1.0) {
        return Err(Error::param("invalid alpha search bounds"));
    }
    let n_grid = ((search.max / search.min).ln() / search.ratio.ln()).floor() as i32 + 1;
    let at = |k: i32| -> Result<AlphaCertificate> {
        let s = spec.with_alpha(search.min * search.ratio.powi(k))?;
        alpha_certificate(&s, delta, lambda1, h, search.n_paths, seed)
    };
    let top = at(n_grid - 1)?;
    if !top.holds() {
        return Err(Error::NoSolution(format!(
            "4 delta sum E|z_l| = {:.4e} > lambda1/4 = {:.4e} even at alpha = {:.4e}",
            top.lhs, top.rhs, top.alpha
        )));
    }
    // The estimate is monotone in α under common random numbers: bisect.
    let (mut lo, mut hi) = (-1, n_grid - 1);
    let mut best = top;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let c = at(mid)?;
        if c.holds() {
            hi = mid;
            best = c;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

/// Constants entering `γ`, `p` and `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerConstants {
    pub lambda1: f64,
    pub delta: f64,
    pub c: f64,
    pub alpha: f64,
    pub viscosity: f64,
    /// `|f|²`.
    pub f_sq: f64,
}

/// `(γ, p, q)` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gpq {
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
}

/// `γ = -λ₁/2 + 4δ Σ|z_l|`, `p = c|f|² + cα|z|² + δ|z|² Σ|z_l|`,
/// `q = (2/ν)(|f|² + α²|z|²)`.
pub fn gamma_p_q(z: &[C64], k: &LedgerConstants) -> Gpq {
    let s: f64 = z.iter().map(|v| v.norm()).sum();
    let z2: f64 = z.iter().map(|v| v.norm_sqr()).sum();
    Gpq {
        gamma: -k.lambda1 / 2.0 + 4.0 * k.delta * s,
        p: k.c * k.f_sq + k.c * k.alpha * z2 + k.delta * z2 * s,
        q: 2.0 / k.viscosity * (k.f_sq + k.alpha * k.alpha * z2),
    }
}

/// Result of [`check_growth`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    pub kappa: f64,
    pub horizon: f64,
    /// `sup_{0≤t≤T} |z(t)|_X / (1 + t^κ)`.
    pub sup_ratio: f64,
    /// The same sup over `[0, T/2]`.
    pub sup_first_half: f64,
    /// Running sup grew by at most 5% over the second half.
    pub bounded: bool,
}

/// Grid proxy for `|z|_X = |z| + |z|_{L⁴}` on the noise modes.
pub struct XNormProxy {
    grid: SphereGrid,
    l_max: usize,
    slots: Vec<(usize, f64)>,
    inv_cos: Vec<f64>,
}

impl XNormProxy {
    pub fn new(spec: &OuSpec) -> Result<Self> {
        let l_max = spec.modes.iter().map(|m| m.0).max().unwrap_or(1).max(1);
        let grid = SphereGrid::dealiased(l_max)?;
        // Stream function of the unit-H vorticity mode: -ω / (l(l+1)).
        let slots = spec
            .modes
            .iter()
            .map(|&(l, m)| {
                let ll = (l * (l + 1)) as f64;
                let unit = if m == 0 { ll.sqrt() } else { (ll / 2.0).sqrt() };
                (coeff_index(l_max, l, m), -unit / ll)
            })
            .collect();
        let inv_cos = grid.inv_cos_lat();
        Ok(XNormProxy { grid, l_max, slots, inv_cos })
    }

    pub fn norm(&self, z: &[C64]) -> f64 {
        let mut psi = vec![C64::new(0.0, 0.0); crate::spherical_spectral::n_coeffs(self.l_max)];
        for (&(i, s), &v) in self.slots.iter().zip(z) {
            psi[i] += v * s;
        }
        let dl = self.grid.synthesize_raw(&psi, self.l_max, Deriv::Lon).expect("degree fits");
        let dm = self.grid.synthesize_raw(&psi, self.l_max, Deriv::MuH).expect("degree fits");
        let n = self.grid.n_lon();
        let speed4: Vec<f64> = dl
            .iter()
            .zip(&dm)
            .enumerate()
            .map(|(i, (a, b))| {
                let ic = self.inv_cos[i / n];
                let s2 = (a * a + b * b) * ic * ic;
                s2 * s2
            })
            .collect();
        let l4 = self.grid.integrate(&speed4).max(0.0).powf(0.25);
        z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() + l4
    }
}

/// Sup of `|z(t)|_X / (1 + t^κ)` over `[0, horizon]` from the stationary state.
pub fn check_growth(path: &NoisePath, spec: &OuSpec, kappa: f64, horizon: f64) -> Result<GrowthReport> {
    let proxy = XNormProxy::new(spec)?;
    let end = grid_index(horizon, path.h(), "horizon")?;
    let half = end / 2;
    let mut s = stationary_state(path, spec, 0.0)?;
    if end > path.k_end() {
        return Err(Error::Range(format!("path ends before t = {horizon}")));
    }
    let h = path.h();
    let mut sup: f64 = 0.0;
    let mut sup_half = 0.0;
    let mut inc = vec![0.0; spec.n_modes()];
    loop {
        let t = s.index as f64 * h;
        sup = sup.max(proxy.norm(&s.values) / (1.0 + t.powf(kappa)));
        if s.index == half {
            sup_half = sup;
        }
        if s.index >= end {
            break;
        }
        for (l, x) in inc.iter_mut().enumerate() {
            *x = path.increment(l, s.index);
        }
        s = ou_step(&s, spec, h, &inc);
    }
    Ok(GrowthReport {
        kappa,
        horizon,
        sup_ratio: sup,
        sup_first_half: sup_half,
        bounded: sup <= 1.05 * sup_half,
    })
}

/// Batch-means time average of `Σ_l |z_l(t)|` over `[0, horizon]` on the
/// grid, starting from the stationary state at 0.
pub fn ergodic_abs_sum(path: &NoisePath, spec: &OuSpec, horizon: f64, n_batches: usize) -> Result<MomentEstimate> {
    let end = grid_index(horizon, path.h(), "horizon")?;
    if end > path.k_end() {
        return Err(Error::Range(format!("path ends before t = {horizon}")));
    }
    if n_batches < 2 || (end as usize) < n_batches {
        return Err(Error::param(format!("{end} steps cannot fill {n_batches} batches")));
    }
    let mut s = stationary_state(path, spec, 0.0)?;
    let mut inc = vec![0.0; spec.n_modes()];
    let mut xs = Vec::with_capacity(end as usize);
    while s.index < end {
        for (l, x) in inc.iter_mut().enumerate() {
            *x = path.increment(l, s.index);
        }
        s = ou_step(&s, spec, path.h(), &inc);
        xs.push(s.abs_sum());
    }
    let per = xs.len() / n_batches;
    let means: Vec<f64> = xs.chunks_exact(per).take(n_batches).map(|c| c.iter().sum::<f64>() / per as f64).collect();
    Ok(MomentEstimate::from_samples(&means))
}

/// `E|X|` of a standard symmetric stable variate (`β > 1`) in the
/// characteristic-function convention `exp(-|θ|^β / 2)`.
pub fn standard_abs_mean(beta: f64) -> f64 {
    2.0f64.powf(-1.0 / beta) * 2.0 * gamma_fn(1.0 - 1.0 / beta) / std::f64::consts::PI
}

/// Lanczos approximation of Γ for positive arguments.
fn gamma_fn(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let s = G[1..].iter().enumerate().fold(G[0], |acc, (i, g)| acc + g / (x + i as f64 + 1.0));
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spherical_spectral::Spectrum;
    use crate::stable_noise::make_two_sided_path;

    fn trunc() -> Truncation {
        Truncation::new(7, 2, Spectrum::Stokes).unwrap()
    }

    fn spec(alpha: f64, sigma: f64) -> OuSpec {
        OuSpec::new(&trunc(), 1.0, 2.0, alpha, &[(2, 0), (3, 0)], &[sigma, sigma], 1.5).unwrap()
    }

    #[test]
    fn generator_includes_coriolis_for_sectoral_modes() {
        let s = OuSpec::new(&trunc(), 1.0, 2.0, 0.5, &[(2, 0), (3, 1)], &[1.0, 1.0], 1.5).unwrap();
        assert_eq!(s.generator()[0], C64::new(4.5, 0.0));
        assert_eq!(s.generator()[1], C64::new(10.5, -4.0 / 12.0));
        assert!(!s.is_real());
        assert!(spec(1.0, 1.0).is_real());
    }

    #[test]
    fn pure_decay_step() {
        let s = spec(0.0, 1.0);
        let a = s.generator()[0].re;
        let h = 2f64.ln() / a;
        let st = OUState { time: 0.0, index: 0, values: vec![C64::new(1.0, 0.0); 2] };
        let next = ou_step(&st, &s, h, &[0.0, 0.0]);
        assert!((next.values[0].re - 0.5).abs() < 1e-15);
        assert_eq!(next.index, 1);
    }

    #[test]
    fn zero_noise_decays_geometrically() {
        let s = spec(1.0, 0.0);
        let p = make_two_sided_path(&s.path_params(), 0.01, 0.0, 1.0, 1).unwrap();
        let start = OUState { time: 0.0, index: 0, values: vec![C64::new(3.0, 0.0); 2] };
        let end = ou_propagate(&start, &s, &p, 1.0).unwrap();
        for (z, a) in end.values.iter().zip(s.generator()) {
            assert!((z.re - 3.0 * (-a.re).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn step_checks_alignment() {
        let s = spec(1.0, 1.0);
        let p = make_two_sided_path(&s.path_params(), 0.1, 0.0, 1.0, 1).unwrap();
        let st = OUState { time: 0.05, index: 0, values: vec![C64::new(0.0, 0.0); 2] };
        assert!(matches!(ou_step_on(&st, &s, &p), Err(Error::Alignment(_))));
    }

    #[test]
    fn burn_in_forgets_start() {
        let s = spec(1.0, 1.0);
        let w = s.burn_window();
        let p = make_two_sided_path(&s.path_params(), 0.01, -(3.0 * w + 1.0).ceil(), 0.0, 5).unwrap();
        let a = ou_stationary_burn_in(&p, &s, -(w + 0.5).ceil(), 0.0).unwrap();
        let b = ou_stationary_burn_in(&p, &s, -(2.0 * w + 0.5).ceil(), 0.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).norm() <= 1e-10 * x.norm().max(1e-300));
        }
        assert!(matches!(ou_stationary_burn_in(&p, &s, -0.01, 0.0), Err(Error::Range(_))));
    }

    #[test]
    fn ibp_single_jump_matches_closed_form() {
        let s = OuSpec::new(&trunc(), 1.0, 0.0, 0.0, &[(2, 0)], &[1.0], 1.5).unwrap();
        let a = s.generator()[0].re;
        let h = 1e-4;
        let n = 10_000;
        let mut inc = vec![0.0; n];
        inc[1999] = 1.0;
        let p = NoisePath::from_increments(&s.path_params(), h, 0, vec![inc], 0).unwrap();
        let z = ou_ibp_reconstruct(&p, &s, 0.0, 1.0).unwrap()[0].re;
        let exact = (-a * 0.8).exp();
        assert!((z - exact).abs() < a * h, "{z} vs {exact}");
        let step = ou_propagate(&OUState::zero(1, 0, h), &s, &p, 1.0).unwrap().values[0].re;
        assert!((step - exact).abs() < 1e-12);
    }

    #[test]
    fn ibp_without_noise_is_zero() {
        let s = spec(1.0, 0.0);
        let p = make_two_sided_path(&s.path_params(), 0.01, 0.0, 1.0, 2).unwrap();
        assert!(ou_ibp_reconstruct(&p, &s, 0.0, 1.0).unwrap().iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn moment_rules() {
        let s = spec(1.0, 1.0);
        let z = spec(1.0, 0.0);
        assert_eq!(estimate_abs_moment(&z, 0, 1e-3, 100, 1).unwrap().mean, 0.0);
        let low = OuSpec::new(&trunc(), 1.0, 2.0, 1.0, &[(2, 0)], &[1.0], 0.9).unwrap();
        assert!(matches!(estimate_abs_moment(&low, 0, 1e-3, 100, 1), Err(Error::MomentInfinite(_))));
        let a = estimate_abs_moment(&s, 0, 1e-3, 4000, 3).unwrap();
        let b = estimate_abs_moment(&s.with_alpha(4.0).unwrap(), 0, 1e-3, 4000, 3).unwrap();
        assert!(b.mean < a.mean);
    }

    #[test]
    fn gaussian_moment_matches_closed_form() {
        let s = OuSpec::new(&trunc(), 1.0, 2.0, 1.0, &[(2, 0)], &[0.7], 2.0).unwrap();
        let h = 1e-3;
        let a = s.generator()[0].re;
        let var = 0.49 * h / -(-2.0 * a * h).exp_m1();
        let exact = (var * 2.0 / std::f64::consts::PI).sqrt();
        let est = estimate_abs_moment(&s, 0, h, 20_000, 9).unwrap();
        assert!((est.mean - exact).abs() <= 2.0 * est.stderr, "{} vs {exact} ± {}", est.mean, est.stderr);
    }

    #[test]
    fn complex_generator_moment_is_sampled_pathwise() {
        let s = OuSpec::new(&trunc(), 1.0, 2.0, 20.0, &[(3, 1)], &[1.0], 2.0).unwrap();
        let h = 1e-2;
        let a = s.generator()[0];
        // E|z|² = h Σ |e^{-a h}|^{2k} for N(0, h) increments.
        let second = h / -(-2.0 * a.re * h).exp_m1();
        let est = estimate_abs_moment(&s, 0, h, 4000, 4).unwrap();
        assert!(est.mean <= 1.05 * second.sqrt() && est.mean >= 0.5 * second.sqrt(), "{} vs {second}", est.mean);
    }

    #[test]
    fn gamma_p_q_reductions() {
        let k = LedgerConstants { lambda1: 4.0, delta: 1.3, c: 0.5, alpha: 2.0, viscosity: 1.0, f_sq: 9.0 };
        let z0 = [C64::new(0.0, 0.0); 2];
        let g = gamma_p_q(&z0, &k);
        assert_eq!((g.gamma, g.p, g.q), (-2.0, 4.5, 18.0));
        let g = gamma_p_q(&z0, &LedgerConstants { f_sq: 0.0, ..k });
        assert_eq!((g.gamma, g.p, g.q), (-2.0, 0.0, 0.0));
        let z = [C64::new(0.3, 0.0), C64::new(-1.2, 0.0)];
        let g = gamma_p_q(&z, &k);
        assert!((g.gamma - (-2.0 + 4.0 * 1.3 * 1.5)).abs() < 1e-14);
        assert!((g.p - (4.5 + 0.5 * 2.0 * 1.53 + 1.3 * 1.53 * 1.5)).abs() < 1e-13);
        assert!((g.q - 2.0 * (9.0 + 4.0 * 1.53)).abs() < 1e-13);
    }

    #[test]
    fn select_alpha_rules() {
        let search = AlphaSearch { min: 0.5, max: 1e4, ratio: 2f64.powf(0.25), n_paths: 4000 };
        let quiet = spec(1.0, 0.0);
        let c = select_alpha(&quiet, 1.0, 4.0, &search, 1e-3, 1).unwrap();
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.lhs, 0.0);
        let s = spec(1.0, 0.5);
        let a1 = select_alpha(&s, 1.0, 4.0, &search, 1e-3, 1).unwrap();
        let a2 = select_alpha(&s, 2.0, 4.0, &search, 1e-3, 1).unwrap();
        assert!(a1.holds() && a2.alpha >= a1.alpha);
        let tight = AlphaSearch { max: 1.0, ..search };
        assert!(matches!(select_alpha(&s, 1.0, 4.0, &tight, 1e-3, 1), Err(Error::NoSolution(_))));
    }

    #[test]
    fn standard_abs_mean_limits() {
        // β = 2: N(0, 1) has E|X| = sqrt(2/π).
        assert!((standard_abs_mean(2.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((gamma_fn(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((gamma_fn(5.0) - 24.0).abs() < 1e-9);
    }

    #[test]
    fn growth_without_noise_is_zero() {
        let s = spec(1.0, 0.0);
        let p = make_two_sided_path(&s.path_params(), 0.01, -s.burn_window().ceil(), 10.0, 1).unwrap();
        let g = check_growth(&p, &s, 1.0, 10.0).unwrap();
        assert_eq!(g.sup_ratio, 0.0);
        assert!(g.bounded);
    }

    #[test]
    fn proxy_norm_is_homogeneous() {
        let s = spec(1.0, 1.0);
        let x = XNormProxy::new(&s).unwrap();
        let z = [C64::new(0.4, 0.0), C64::new(-0.3, 0.0)];
        let z2: Vec<C64> = z.iter().map(|v| v * 2.0).collect();
        assert!((x.norm(&z2) - 2.0 * x.norm(&z)).abs() < 1e-12);
    }
}

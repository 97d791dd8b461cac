//! Pathwise integration of the transformed equation
//!
//! ```text
//! dv/dt = -νAv - Cv - B(v + z, v + z) + f + αz
//! ```
//!
//! and the cocycle `φ(t, ω)x = v(t; x - z(0)) + z(t)`.
//!
//! Time stepping is ETD-RK2 with the diagonal part `νA + C` propagated
//! exactly. Noise enters only through `z`, which jumps at the end of a step;
//! the corrector stage sees the left limit `z(t + h−)`, so `v` stays
//! continuous.

use std::io::Write;

use serde::Serialize;

use crate::fluid_operators::advection;
use crate::model::Model;
use crate::ou_process::{gamma_p_q, ou_left_limit, ou_step, stationary_state, Gpq, OUState};
use crate::spherical_spectral::{SpectralField, C64};
use crate::stable_noise::{csv_err, fmt_f64, NoisePath};
use crate::{Error, Result};

/// Relative slack of the Gronwall check.
pub const GRONWALL_SLACK: f64 = 1e-8;

fn check_path(path: &NoisePath, model: &Model) -> Result<()> {
    if (path.h() - model.dt()).abs() > 1e-12 * model.dt() {
        return Err(Error::Alignment(format!("path step {} differs from model dt {}", path.h(), model.dt())));
    }
    if path.n_modes() != model.n_noise_modes() {
        return Err(Error::Dimension(format!(
            "path has {} modes, the model {}",
            path.n_modes(),
            model.n_noise_modes()
        )));
    }
    Ok(())
}

/// `-B(u, u) + f + αz` with `u = v + z`.
fn nonlinear_rhs(v: &SpectralField, z: &[C64], model: &Model) -> Result<SpectralField> {
    let mut u = v.clone();
    model.add_noise_field(&mut u, z, 1.0);
    let mut n = advection(&u, model.ctx())?;
    n.scale_mut(-1.0);
    n.axpy(1.0, model.forcing());
    model.add_noise_field(&mut n, z, model.alpha());
    Ok(n)
}

fn blow_up_check(v: &SpectralField, t: f64, model: &Model) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::BlowUp { t, reason: "non-finite state".into() });
    }
    let n = v.h_norm();
    if n > model.config().blowup_threshold {
        return Err(Error::BlowUp { t, reason: format!("|v| = {n:.3e} exceeds the threshold") });
    }
    Ok(())
}

fn step_core(v: &SpectralField, z0: &[C64], z1: &[C64], model: &Model, t_next: f64) -> Result<SpectralField> {
    let p = &model.prop;
    let h = p.dt;
    let n0 = nonlinear_rhs(v, z0, model)?;
    let mut a = SpectralField::zeros(*v.trunc());
    for (i, c) in a.coeffs_mut().iter_mut().enumerate() {
        *c = p.e[i] * v.coeffs()[i] + p.p1[i] * n0.coeffs()[i] * h;
    }
    let n1 = nonlinear_rhs(&a, z1, model)?;
    for (i, c) in a.coeffs_mut().iter_mut().enumerate() {
        *c += p.p2[i] * (n1.coeffs()[i] - n0.coeffs()[i]) * h;
    }
    blow_up_check(&a, t_next, model)?;
    Ok(a)
}

/// One ETD-RK2 step of `v` from the time of `z` (the right limit there).
pub fn step_v(v: &SpectralField, z: &OUState, model: &Model) -> Result<SpectralField> {
    let left = ou_left_limit(z, model.ou(), model.dt());
    step_core(v, &z.values, &left, model, z.time + model.dt())
}

fn increments(path: &NoisePath, k: i64, out: &mut [f64]) {
    for (l, x) in out.iter_mut().enumerate() {
        *x = path.increment(l, k);
    }
}

/// `u(t1)` from `u(t0) = u0` on `path`.
pub fn evolve(path: &NoisePath, model: &Model, t0: f64, t1: f64, u0: &SpectralField) -> Result<SpectralField> {
    check_path(path, model)?;
    let k0 = path.checked_index(t0)?;
    let k1 = path.checked_index(t1)?;
    if k1 < k0 {
        return Err(Error::Range(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    if k1 == k0 {
        return Ok(u0.clone());
    }
    let mut z = stationary_state(path, model.ou(), t0)?;
    let mut v = u0.clone();
    model.add_noise_field(&mut v, &z.values, -1.0);
    let mut inc = vec![0.0; model.n_noise_modes()];
    for k in k0..k1 {
        v = step_v(&v, &z, model)?;
        increments(path, k, &mut inc);
        z = ou_step(&z, model.ou(), path.h(), &inc);
    }
    model.add_noise_field(&mut v, &z.values, 1.0);
    Ok(v)
}

/// `φ(t, ω)x`.
pub fn phi(t: f64, path: &NoisePath, x: &SpectralField, model: &Model) -> Result<SpectralField> {
    if t < 0.0 {
        return Err(Error::Range(format!("t = {t} must be >= 0")));
    }
    evolve(path, model, 0.0, t, x)
}

/// Pullback value `u(0; t0, u0) = φ(-t0, θ_{t0} ω) u0`.
pub fn pullback(path: &NoisePath, model: &Model, t0: f64, u0: &SpectralField) -> Result<SpectralField> {
    evolve(path, model, t0, 0.0, u0)
}

/// `|φ(t+s,ω)x - φ(t,θ_sω)φ(s,ω)x| / (1 + |φ(t+s,ω)x|)`.
pub fn verify_cocycle(t: f64, s: f64, path: &NoisePath, x: &SpectralField, model: &Model) -> Result<f64> {
    let shifted = path.shift(s)?;
    let lhs = phi(t + s, path, x, model)?;
    let mid = phi(s, path, x, model)?;
    let rhs = phi(t, &shifted, &mid, model)?;
    Ok(lhs.sub(&rhs)?.h_norm() / (1.0 + lhs.h_norm()))
}

/// `|φ(t)(x + ε d) - φ(t)x| / ε` for a unit direction `d`.
pub fn continuity_constant(
    t: f64,
    path: &NoisePath,
    x: &SpectralField,
    direction: &SpectralField,
    eps: f64,
    model: &Model,
) -> Result<f64> {
    let mut y = x.clone();
    y.axpy(eps / direction.h_norm(), direction);
    let a = phi(t, path, x, model)?;
    let b = phi(t, path, &y, model)?;
    Ok(a.sub(&b)?.h_norm() / eps)
}

/// One ledger row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    /// `½|u|²` of the full state.
    pub energy: f64,
    /// `½∫ζ²` of the full state.
    pub enstrophy: f64,
    pub v_sq: f64,
    pub v_v_sq: f64,
    pub av_sq: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    /// `∫_{t0}^t γ`.
    pub int_gamma: f64,
    /// `∫_{t0}^t γ₊`.
    pub int_gamma_pos: f64,
    /// `∫_{t0}^t 2p`.
    pub int_2p: f64,
    /// `∫_{t0}^t |v|_V²`.
    pub int_v_v_sq: f64,
    /// `|v(t0)|² e^{∫γ} + ∫ e^{∫_s^t γ} 2p(s) ds`.
    pub gronwall_rhs: f64,
    pub violated: bool,
}

/// Per-step energy record with the running Gronwall bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

/// Result of the integrated V-norm check over `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VLedgerCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Raw `∫γ` over the interval, logged next to the `γ₊` version used.
    pub int_gamma_raw: f64,
    pub holds: bool,
}

impl EnergyLedger {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }

    fn row_at(&self, t: f64) -> Result<usize> {
        self.rows
            .iter()
            .position(|r| (r.t - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::Range(format!("ledger has no row at t = {t}")))
    }

    /// `∫_a^b |v|_V² ≤ |v(a)|² + (∫_a^b γ₊) sup_{[a,b]} |v|² + ∫_a^b 2p`.
    pub fn v_ledger_check(&self, a: f64, b: f64) -> Result<VLedgerCheck> {
        let (ia, ib) = (self.row_at(a)?, self.row_at(b)?);
        if ib < ia {
            return Err(Error::Range("interval end precedes start".into()));
        }
        let (ra, rb) = (&self.rows[ia], &self.rows[ib]);
        let sup = self.rows[ia..=ib].iter().map(|r| r.v_sq).fold(0.0, f64::max);
        let lhs = rb.int_v_v_sq - ra.int_v_v_sq;
        let rhs = ra.v_sq + (rb.int_gamma_pos - ra.int_gamma_pos) * sup + (rb.int_2p - ra.int_2p);
        Ok(VLedgerCheck {
            lhs,
            rhs,
            int_gamma_raw: rb.int_gamma - ra.int_gamma,
            holds: lhs <= rhs * (1.0 + GRONWALL_SLACK),
        })
    }

    /// CSV with one row per step.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "t", "energy", "enstrophy", "v_norm", "v_v_norm", "gamma", "p", "q", "gronwall_rhs", "violated",
            "av_norm_sq", "int_gamma", "int_2p",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            out.write_record([
                fmt_f64(r.t),
                fmt_f64(r.energy),
                fmt_f64(r.enstrophy),
                fmt_f64(r.v_sq.sqrt()),
                fmt_f64(r.v_v_sq.sqrt()),
                fmt_f64(r.gamma),
                fmt_f64(r.p),
                fmt_f64(r.q),
                fmt_f64(r.gronwall_rhs),
                (r.violated as u8).to_string(),
                fmt_f64(r.av_sq),
                fmt_f64(r.int_gamma),
                fmt_f64(r.int_2p),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A blow-up recorded as an outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowUp {
    pub t: f64,
    pub reason: String,
}

/// Output of [`run_with_ledger`].
#[derive(Debug, Clone)]
pub struct LedgerRun {
    pub ledger: EnergyLedger,
    /// Final `v` and `u` (absent after a blow-up).
    pub v_end: Option<SpectralField>,
    pub u_end: Option<SpectralField>,
    pub z_end: OUState,
    /// Requested snapshots of `u`.
    pub snapshots: Vec<(f64, SpectralField)>,
    pub blow_up: Option<BlowUp>,
}

impl LedgerRun {
    /// `|v(t)|²` from the ledger row at `t`.
    pub fn v_sq_at(&self, t: f64) -> Result<f64> {
        Ok(self.ledger.rows[self.ledger.row_at(t)?].v_sq)
    }
}

/// Trapezoid weights on the left limits of one step.
pub(crate) struct StepIntegrals {
    pub gamma: f64,
    pub gamma_pos: f64,
    pub two_p: f64,
    /// `∫ e^{∫_s^{t+h} γ} 2p(s) ds`.
    pub weighted_2p: f64,
}

pub(crate) fn step_integrals(g0: &Gpq, g1: &Gpq, h: f64) -> StepIntegrals {
    let gamma = 0.5 * h * (g0.gamma + g1.gamma);
    StepIntegrals {
        gamma,
        gamma_pos: 0.5 * h * (g0.gamma.max(0.0) + g1.gamma.max(0.0)),
        two_p: h * (g0.p + g1.p),
        weighted_2p: h * (g0.p * gamma.exp() + g1.p),
    }
}

/// `v0 = u0 - z(t0)` on `path`.
pub fn initial_v(path: &NoisePath, model: &Model, t0: f64, u0: &SpectralField) -> Result<SpectralField> {
    let z = stationary_state(path, model.ou(), t0)?;
    let mut v = u0.clone();
    model.add_noise_field(&mut v, &z.values, -1.0);
    Ok(v)
}

/// Integrate `v` from `t0` to `t1`, recording the ledger and checking
/// `|v(t)|² ≤ |v(t0)|² e^{∫γ} + ∫ e^{∫γ} 2p` at every row.
pub fn run_with_ledger(
    t0: f64,
    t1: f64,
    path: &NoisePath,
    v0: &SpectralField,
    model: &Model,
    snapshot_times: &[f64],
) -> Result<LedgerRun> {
    check_path(path, model)?;
    let k0 = path.checked_index(t0)?;
    let k1 = path.checked_index(t1)?;
    if k1 < k0 {
        return Err(Error::Range(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let snap_idx: Vec<i64> = snapshot_times.iter().map(|&t| path.checked_index(t)).collect::<Result<_>>()?;
    let h = path.h();
    let k = model.ledger_constants();
    let mut z = stationary_state(path, model.ou(), t0)?;
    let mut v = v0.clone();
    let mut g = gamma_p_q(&z.values, &k);
    let make_row = |t: f64, v: &SpectralField, z: &OUState, g: &Gpq| {
        let mut u = v.clone();
        model.add_noise_field(&mut u, &z.values, 1.0);
        (
            LedgerRow {
                t,
                energy: 0.5 * u.h_norm_sq(),
                enstrophy: 0.5 * u.vorticity_sq(),
                v_sq: v.h_norm_sq(),
                v_v_sq: v.v_norm_sq(),
                av_sq: v.a_norm_sq(),
                gamma: g.gamma,
                p: g.p,
                q: g.q,
                int_gamma: 0.0,
                int_gamma_pos: 0.0,
                int_2p: 0.0,
                int_v_v_sq: 0.0,
                gronwall_rhs: 0.0,
                violated: false,
            },
            u,
        )
    };
    let (mut row, u) = make_row(k0 as f64 * h, &v, &z, &g);
    row.gronwall_rhs = row.v_sq;
    let mut snapshots = Vec::new();
    if snap_idx.contains(&k0) {
        snapshots.push((row.t, u));
    }
    let mut ledger = EnergyLedger { rows: vec![row] };
    let mut inc = vec![0.0; model.n_noise_modes()];
    let mut blow_up = None;
    for kk in k0..k1 {
        let left = ou_left_limit(&z, model.ou(), h);
        let next = match step_core(&v, &z.values, &left, model, (kk + 1) as f64 * h) {
            Ok(n) => n,
            Err(Error::BlowUp { t, reason }) => {
                blow_up = Some(BlowUp { t, reason });
                break;
            }
            Err(e) => return Err(e),
        };
        let g_left = gamma_p_q(&left, &k);
        let si = step_integrals(&g, &g_left, h);
        increments(path, kk, &mut inc);
        z = ou_step(&z, model.ou(), h, &inc);
        v = next;
        g = gamma_p_q(&z.values, &k);
        let prev = *ledger.rows.last().expect("nonempty");
        let (mut row, u) = make_row((kk + 1) as f64 * h, &v, &z, &g);
        row.int_gamma = prev.int_gamma + si.gamma;
        row.int_gamma_pos = prev.int_gamma_pos + si.gamma_pos;
        row.int_2p = prev.int_2p + si.two_p;
        row.int_v_v_sq = prev.int_v_v_sq + 0.5 * h * (prev.v_v_sq + row.v_v_sq);
        row.gronwall_rhs = prev.gronwall_rhs * si.gamma.exp() + si.weighted_2p;
        row.violated = row.v_sq > row.gronwall_rhs * (1.0 + GRONWALL_SLACK);
        if snap_idx.contains(&(kk + 1)) {
            snapshots.push((row.t, u));
        }
        ledger.rows.push(row);
    }
    let (v_end, u_end) = if blow_up.is_none() {
        let mut u = v.clone();
        model.add_noise_field(&mut u, &z.values, 1.0);
        (Some(v), Some(u))
    } else {
        (None, None)
    };
    Ok(LedgerRun { ledger, v_end, u_end, z_end: z, snapshots, blow_up })
}

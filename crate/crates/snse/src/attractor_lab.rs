//! Pullback ensembles, Hausdorff distances between clouds, Ω-limit
//! estimates and the absorbing radii `r₁²`, `c₁ … c₅`, `r₂²`.
//!
//! Sups over `t0 ≤ -1` and integrals down to `-∞` are truncated to the
//! computed window; the truncation point and the observed tail factor
//! `e^{∫γ}` are part of the report.

use rayon::prelude::*;
use serde::Serialize;

use crate::flow_map::{pullback, step_integrals};
use crate::model::Model;
use crate::ou_process::{gamma_p_q, ou_left_limit, ou_step, stationary_state, Gpq};
use crate::seeding::{derive_seed, positioned_rng, tag};
use crate::spherical_spectral::{SpectralField, Truncation, C64};
use crate::stable_noise::NoisePath;
use crate::{Error, Result};

/// `n` states of H-norm `radius` with uniformly distributed directions.
pub fn sample_ball(trunc: Truncation, radius: f64, n: usize, seed: u64) -> Vec<SpectralField> {
    (0..n)
        .map(|i| {
            let mut rng = positioned_rng(derive_seed(seed, tag::INIT, i as u64), 0, 0);
            SpectralField::on_sphere(trunc, radius, &mut rng)
        })
        .collect()
}

/// States at time 0 pulled back from one start time.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloud {
    pub t0: f64,
    pub members: Vec<SpectralField>,
    pub blow_ups: usize,
}

/// Clouds over a pullback schedule on one noise realization.
#[derive(Debug, Clone)]
pub struct AttractorEstimate {
    pub schedule: Vec<f64>,
    pub clouds: Vec<Cloud>,
    /// `ρ(cloud_k, cloud_{k+1})` in schedule order (NaN when a cloud is empty).
    pub hausdorff_trace: Vec<f64>,
    pub path_seed: u64,
}

impl AttractorEstimate {
    pub fn blow_ups(&self) -> usize {
        self.clouds.iter().map(|c| c.blow_ups).sum()
    }
    pub fn members(&self) -> usize {
        self.clouds.iter().map(|c| c.members.len() + c.blow_ups).sum()
    }
}

/// `d(A, B) = sup_{a∈A} inf_{b∈B} |a - b|` in H.
pub fn hausdorff_semidist(a: &[SpectralField], b: &[SpectralField]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("Hausdorff distance of an empty cloud"));
    }
    let mut sup: f64 = 0.0;
    for x in a {
        let mut inf = f64::INFINITY;
        for y in b {
            inf = inf.min(x.sub(y)?.h_norm());
        }
        sup = sup.max(inf);
    }
    Ok(sup)
}

/// `ρ(A, B) = max(d(A, B), d(B, A))`.
pub fn hausdorff_dist(a: &[SpectralField], b: &[SpectralField]) -> Result<f64> {
    Ok(hausdorff_semidist(a, b)?.max(hausdorff_semidist(b, a)?))
}

/// Pull every ball member back from every `t0` to time 0 on `path`.
pub fn pullback_ensemble(
    path: &NoisePath,
    model: &Model,
    schedule: &[f64],
    ball: &[SpectralField],
) -> Result<AttractorEstimate> {
    if schedule.is_empty() || ball.is_empty() {
        return Err(Error::param("empty schedule or initial ball"));
    }
    for &t0 in schedule {
        if t0 > 0.0 {
            return Err(Error::param(format!("pullback start {t0} must be <= 0")));
        }
        path.checked_index(t0)?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..schedule.len()).flat_map(|k| (0..ball.len()).map(move |i| (k, i))).collect();
    let results: Vec<Result<Option<SpectralField>>> = jobs
        .par_iter()
        .map(|&(k, i)| match pullback(path, model, schedule[k], &ball[i]) {
            Ok(u) => Ok(Some(u)),
            Err(Error::BlowUp { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut clouds: Vec<Cloud> =
        schedule.iter().map(|&t0| Cloud { t0, members: Vec::new(), blow_ups: 0 }).collect();
    for (&(k, _), r) in jobs.iter().zip(results) {
        match r? {
            Some(u) => clouds[k].members.push(u),
            None => clouds[k].blow_ups += 1,
        }
    }
    let hausdorff_trace = clouds
        .windows(2)
        .map(|w| hausdorff_dist(&w[0].members, &w[1].members).unwrap_or(f64::NAN))
        .collect();
    Ok(AttractorEstimate { schedule: schedule.to_vec(), clouds, hausdorff_trace, path_seed: path.seed() })
}

/// Ω-limit estimate: the cloud of the earliest start time.
#[derive(Debug, Clone)]
pub struct OmegaLimit {
    pub t0: f64,
    pub cloud: Vec<SpectralField>,
    pub final_trace: f64,
    pub converged: bool,
}

/// Take the cloud of the largest `|t0|`; converged if the last trace entry is below `tol`.
pub fn omega_limit_estimate(est: &AttractorEstimate, tol: f64) -> OmegaLimit {
    let k = est
        .schedule
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let final_trace = est.hausdorff_trace.last().copied().unwrap_or(0.0);
    OmegaLimit {
        t0: est.schedule[k],
        cloud: est.clouds[k].members.clone(),
        final_trace,
        converged: final_trace.is_finite() && final_trace <= tol,
    }
}

/// Least-squares rate `r` in `trace_k ≈ C e^{-r |t0_k|}` over positive entries.
pub fn fit_decay_rate(schedule: &[f64], trace: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = schedule
        .iter()
        .zip(trace)
        .filter(|(_, &d)| d > 0.0 && d.is_finite())
        .map(|(&t, &d)| (t.abs(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Per-grid-point OU data over a window.
struct ZSeries {
    k0: i64,
    h: f64,
    /// Right limits at each grid point.
    gpq: Vec<Gpq>,
    /// Left limits at the end of each step.
    gpq_left: Vec<Gpq>,
    z: Vec<Vec<C64>>,
    z_left: Vec<Vec<C64>>,
}

impl ZSeries {
    fn new(path: &NoisePath, model: &Model, t_start: f64, t_end: f64) -> Result<Self> {
        let k0 = path.checked_index(t_start)?;
        let k1 = path.checked_index(t_end)?;
        let h = path.h();
        let kc = model.ledger_constants();
        let mut s = stationary_state(path, model.ou(), t_start)?;
        let mut out = ZSeries { k0, h, gpq: vec![], gpq_left: vec![], z: vec![], z_left: vec![] };
        let mut inc = vec![0.0; model.n_noise_modes()];
        out.gpq.push(gamma_p_q(&s.values, &kc));
        out.z.push(s.values.clone());
        for k in k0..k1 {
            let left = ou_left_limit(&s, model.ou(), h);
            out.gpq_left.push(gamma_p_q(&left, &kc));
            out.z_left.push(left);
            for (l, x) in inc.iter_mut().enumerate() {
                *x = path.increment(l, k);
            }
            s = ou_step(&s, model.ou(), h, &inc);
            out.gpq.push(gamma_p_q(&s.values, &kc));
            out.z.push(s.values.clone());
        }
        Ok(out)
    }

    fn pos(&self, t: f64) -> usize {
        ((t / self.h).round() as i64 - self.k0) as usize
    }
}

/// Norms of the noise field `Σ z_l e_l`.
fn z_norms(model: &Model, z: &[C64]) -> (f64, f64, f64) {
    let f = model.noise_field(z);
    (f.h_norm_sq(), f.v_norm_sq(), f.a_norm())
}

/// Absorbing radii and their ingredients for one noise realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorbingRadii {
    pub r1_sq: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    /// `r₂²`; infinite when it overflows (see `ln_r2_sq`).
    pub r2_sq: f64,
    pub ln_r2_sq: f64,
    /// `sup_{t0} e^{∫_{t0}^{-1}γ} |z(t0)|²` over the window.
    pub sup_decay_product: f64,
    /// `∫_{window}^{-1} e^{∫_s^{-1}γ} 2p(s) ds`.
    pub int_weighted_2p: f64,
    /// `∫_{-1}^0 γ` without positive part.
    pub int_gamma: f64,
    pub int_gamma_pos: f64,
    pub int_2p: f64,
    pub int_2q: f64,
    pub int_z_v_sq: f64,
    pub sup_z: f64,
    pub sup_z_sq: f64,
    pub sup_z_v_sq: f64,
    pub sup_az: f64,
    pub z0_v_sq: f64,
    /// Start of the truncated window.
    pub window_start: f64,
    /// `e^{∫_{window}^{-1} γ}`, the weight of everything before the window.
    pub tail_decay: f64,
}

/// Evaluate the radii on `[t_start, 0]` (`t_start ≤ -1`).
pub fn absorbing_radii(path: &NoisePath, model: &Model, t_start: f64) -> Result<AbsorbingRadii> {
    if t_start > -1.0 {
        return Err(Error::Range(format!("window start {t_start} must be <= -1")));
    }
    let zs = ZSeries::new(path, model, t_start, 0.0)?;
    let h = zs.h;
    let im1 = zs.pos(-1.0);
    let end = zs.pos(0.0);
    let nu = model.config().viscosity;
    let c_b = model.constants().c_b;

    // r₁²: backward products and the weighted forcing integral up to -1.
    let mut sup_prod: f64 = 0.0;
    let mut tail = 0.0;
    for k in (0..=im1).rev() {
        if k < im1 {
            tail += step_integrals(&zs.gpq[k], &zs.gpq_left[k], h).gamma;
        }
        sup_prod = sup_prod.max(tail.exp() * zs.z[k].iter().map(|v| v.norm_sqr()).sum::<f64>());
    }
    let mut weighted = 0.0;
    for k in 0..im1 {
        let si = step_integrals(&zs.gpq[k], &zs.gpq_left[k], h);
        weighted = weighted * si.gamma.exp() + si.weighted_2p;
    }
    let r1_sq = 2.0 + 2.0 * sup_prod + weighted;

    // c₁ and the integrals over [-1, 0].
    let mut g = r1_sq;
    let mut c1 = r1_sq;
    let (mut int_gamma, mut int_gamma_pos, mut int_2p, mut int_2q, mut int_zv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sup_z, mut sup_z_sq, mut sup_zv, mut sup_az): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for k in im1..=end {
        let (zsq, zv, az) = z_norms(model, &zs.z[k]);
        sup_z_sq = sup_z_sq.max(zsq);
        sup_z = sup_z.max(zsq.sqrt());
        sup_zv = sup_zv.max(zv);
        sup_az = sup_az.max(az);
        if k == end {
            break;
        }
        let si = step_integrals(&zs.gpq[k], &zs.gpq_left[k], h);
        g = g * si.gamma.exp() + si.weighted_2p;
        c1 = c1.max(g);
        int_gamma += si.gamma;
        int_gamma_pos += si.gamma_pos;
        int_2p += si.two_p;
        int_2q += h * (zs.gpq[k].q + zs.gpq_left[k].q);
        let (_, zv_left, _) = z_norms(model, &zs.z_left[k]);
        int_zv += 0.5 * h * (zv + zv_left);
    }
    let (_, z0_v_sq, _) = z_norms(model, &zs.z[end]);
    // The integral of γ|v|² is bounded through sup|v|² ≤ max(r₁², c₁).
    let c2 = r1_sq + r1_sq.max(c1) * int_gamma_pos + int_2p;
    let c3 = c1 + sup_z_sq;
    let c4 = c2 + int_zv;
    let c5 = c1.sqrt() + sup_z;
    let k_exp = 64.0 * nu * c_b.powi(4) * c3 * c4;
    let bracket = c2 + k_exp * sup_zv + 8.0 * nu * c_b * c_b * c5 * c4 * sup_az + int_2q;
    let a = (2.0 * bracket).ln() + k_exp;
    let ln_r2_sq = if z0_v_sq > 0.0 {
        let b = (2.0 * z0_v_sq).ln();
        a.max(b) + (-(a - b).abs()).exp().ln_1p()
    } else {
        a
    };
    Ok(AbsorbingRadii {
        r1_sq,
        c1,
        c2,
        c3,
        c4,
        c5,
        r2_sq: ln_r2_sq.exp(),
        ln_r2_sq,
        sup_decay_product: sup_prod,
        int_weighted_2p: weighted,
        int_gamma,
        int_gamma_pos,
        int_2p,
        int_2q,
        int_z_v_sq: int_zv,
        sup_z,
        sup_z_sq,
        sup_z_v_sq: sup_zv,
        sup_az,
        z0_v_sq,
        window_start: t_start,
        tail_decay: tail.exp(),
    })
}

/// `e^{∫_{t0}^{-1} γ}` and `e^{∫_{t0}^{-1} γ} |z(t0)|²` for each `t0 ≤ -1`.
pub fn decay_products(path: &NoisePath, model: &Model, t0s: &[f64]) -> Result<Vec<(f64, f64)>> {
    let t_min = t0s.iter().cloned().fold(-1.0, f64::min);
    let zs = ZSeries::new(path, model, t_min, -1.0)?;
    let im1 = zs.pos(-1.0);
    let mut cum = vec![0.0; im1 + 1];
    for k in (0..im1).rev() {
        cum[k] = cum[k + 1] + step_integrals(&zs.gpq[k], &zs.gpq_left[k], zs.h).gamma;
    }
    t0s.iter()
        .map(|&t0| {
            if t0 > -1.0 {
                return Err(Error::Range(format!("t0 = {t0} must be <= -1")));
            }
            let k = zs.pos(t0);
            let e = cum[k].exp();
            Ok((e, e * zs.z[k].iter().map(|v| v.norm_sqr()).sum::<f64>()))
        })
        .collect()
}

/// Absorption verdict for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorptionCheck {
    pub v_m1_sq: f64,
    pub r1_sq: f64,
    pub u0_v_sq: f64,
    pub ln_r2_sq: f64,
    pub in_h_ball: bool,
    pub in_v_ball: bool,
}

/// Compare `|v(-1)|²` with `r₁²` and `|u(0)|_V²` with `r₂²` (log scale).
pub fn check_absorption(radii: &AbsorbingRadii, v_m1_sq: f64, u0_v_sq: f64) -> AbsorptionCheck {
    AbsorptionCheck {
        v_m1_sq,
        r1_sq: radii.r1_sq,
        u0_v_sq,
        ln_r2_sq: radii.ln_r2_sq,
        in_h_ball: v_m1_sq <= radii.r1_sq * (1.0 + 1e-8),
        in_v_ball: u0_v_sq <= 0.0 || u0_v_sq.ln() <= radii.ln_r2_sq + 1e-8,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ModelConfig, Setting};

    fn model(sigma: f64, forced: bool) -> Model {
        let mut cfg = ModelConfig { l_max: 7, dt: 1e-2, alpha: Setting::Value(2.0), c_b_samples: 2, ..ModelConfig::default() };
        cfg.constants.delta = Setting::Value(1.0);
        cfg.sigma = vec![sigma; 2];
        if !forced {
            cfg.forcing.clear();
        }
        Model::from_config(&cfg).unwrap()
    }

    fn cloud(n: usize, seed: u64) -> Vec<SpectralField> {
        let t = Truncation::new(5, 2, Default::default()).unwrap();
        (0..n).map(|i| SpectralField::random(t, 1.0, &mut positioned_rng(seed, i as u64, 0))).collect()
    }

    #[test]
    fn hausdorff_basics() {
        let a = cloud(5, 1);
        let b = cloud(7, 2);
        assert_eq!(hausdorff_dist(&a, &a).unwrap(), 0.0);
        let zero = vec![SpectralField::zeros(*a[0].trunc())];
        assert!((hausdorff_semidist(&zero, &a[..1]).unwrap() - a[0].h_norm()).abs() < 1e-15);
        assert!((hausdorff_dist(&zero, &a[..1]).unwrap() - a[0].h_norm()).abs() < 1e-15);
        let mut brute: f64 = 0.0;
        for x in &a {
            brute = brute.max(b.iter().map(|y| x.sub(y).unwrap().h_norm()).fold(f64::INFINITY, f64::min));
        }
        assert_eq!(hausdorff_semidist(&a, &b).unwrap(), brute);
        assert_eq!(hausdorff_dist(&a, &b).unwrap(), hausdorff_dist(&b, &a).unwrap());
        assert!(hausdorff_semidist(&[], &b).is_err());
    }

    #[test]
    fn decay_rate_fit_recovers_exponent() {
        let s = [-1.0, -2.0, -3.0, -4.0];
        let tr: Vec<f64> = s.iter().map(|t: &f64| 3.0 * (-4.0 * t.abs()).exp()).collect();
        assert!((fit_decay_rate(&s, &tr).unwrap() - 4.0).abs() < 1e-12);
        assert!(fit_decay_rate(&s[..1], &tr[..1]).is_none());
    }

    #[test]
    fn noise_free_unforced_radius_is_two() {
        let m = model(0.0, false);
        let p = m.make_path(1, -4.0, 0.0).unwrap();
        let r = absorbing_radii(&p, &m, -4.0).unwrap();
        assert_eq!(r.r1_sq, 2.0);
        assert_eq!(r.sup_z, 0.0);
        assert!(r.ln_r2_sq.is_finite() && r.r2_sq >= 2.0 * r.z0_v_sq);
    }

    #[test]
    fn noise_free_forced_radius_matches_geometric_integral() {
        let m = model(0.0, true);
        let p = m.make_path(1, -6.0, 0.0).unwrap();
        let r = absorbing_radii(&p, &m, -6.0).unwrap();
        let k = m.ledger_constants();
        let rate = k.lambda1 / 2.0;
        let exact = 2.0 + 2.0 * k.c * k.f_sq * (1.0 - (-rate * 5.0).exp()) / rate;
        assert!((r.r1_sq - exact).abs() < 1e-4 * exact, "{} vs {exact}", r.r1_sq);
    }

    #[test]
    fn unforced_clouds_collapse_to_zero() {
        let m = model(0.0, false);
        let p = m.make_path(2, -3.0, 0.0).unwrap();
        let ball = sample_ball(*m.trunc(), 1.0, 3, 4);
        let est = pullback_ensemble(&p, &m, &[-1.0, -2.0, -3.0], &ball).unwrap();
        assert_eq!(est.blow_ups(), 0);
        assert!(est.hausdorff_trace[1] < est.hausdorff_trace[0]);
        let lim = omega_limit_estimate(&est, 1e-3);
        assert_eq!(lim.t0, -3.0);
        assert!(lim.converged);
        assert!(lim.cloud.iter().all(|u| u.h_norm() < 1e-4));
    }

    #[test]
    fn absorption_check_compares_logs() {
        let m = model(0.5, true);
        let p = m.make_path(3, -4.0, 0.0).unwrap();
        let r = absorbing_radii(&p, &m, -4.0).unwrap();
        let ok = check_absorption(&r, 0.5 * r.r1_sq, 1.0);
        assert!(ok.in_h_ball && ok.in_v_ball);
        assert!(!check_absorption(&r, 2.0 * r.r1_sq, 1.0).in_h_ball);
        let d = decay_products(&p, &m, &[-1.0, -2.0, -4.0]).unwrap();
        assert_eq!(d[0].0, 1.0);
        assert!(d[2].0 < d[1].0);
    }
}

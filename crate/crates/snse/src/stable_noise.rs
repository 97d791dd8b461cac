//! β-stable variates, two-sided multi-mode Lévy paths and the shift θ_s.
//!
//! Scale convention: a symmetric variate with scale σ has characteristic
//! function `exp(-σ^β |θ|^β / 2)`. At β = 2 this is `N(0, σ²)`.
//! Skewed variates follow the continuous (S0) parametrisation with the
//! generalised scale `σ 2^{-1/β}`, so skew → 0 recovers the symmetric law.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::seeding::{exp1, open01, positioned_rng};
use crate::{Error, Result};

/// Parameters of `S_β(σ, δ, ν)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub beta: f64,
    pub scale: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(default)]
    pub shift: f64,
}

impl StableParams {
    pub fn symmetric(beta: f64, scale: f64) -> Self {
        StableParams { beta, scale, skew: 0.0, shift: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            return Err(Error::param(format!("beta = {} outside (0, 2]", self.beta)));
        }
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(Error::param(format!("scale = {} must be finite and >= 0", self.scale)));
        }
        if !(self.skew.abs() <= 1.0) {
            return Err(Error::param(format!("skew = {} outside [-1, 1]", self.skew)));
        }
        if !self.shift.is_finite() {
            return Err(Error::param("shift must be finite"));
        }
        Ok(())
    }

    /// Scale in the generalised (skew-capable) parametrisation.
    pub fn general_scale(&self) -> f64 {
        self.scale * 2f64.powf(-1.0 / self.beta)
    }

    /// Characteristic function `E exp(iθX)` as (re, im).
    pub fn char_fn(&self, theta: f64) -> (f64, f64) {
        let g = self.general_scale();
        let a = (g * theta).abs();
        let sgn = theta.signum();
        let (mag, phase) = if a == 0.0 {
            (0.0, 0.0)
        } else if (self.beta - 1.0).abs() < 1e-12 {
            (a, self.skew * sgn * (2.0 / PI) * a * a.ln())
        } else {
            let t = (PI * self.beta / 2.0).tan();
            let ab = a.powf(self.beta);
            (ab, -self.skew * t * sgn * (ab - a))
        };
        let r = (-mag).exp();
        let ang = theta * self.shift - phase;
        (r * ang.cos(), r * ang.sin())
    }
}

/// Samorodnitsky–Taqqu standard variate (unit scale) from the uniforms of
/// the Chambers–Mallows–Stuck transform.
fn cms_standard(beta: f64, skew: f64, v: f64, w: f64) -> f64 {
    if skew == 0.0 {
        if beta == 1.0 {
            return v.tan();
        }
        if beta == 2.0 {
            return 2.0 * v.sin() * w.sqrt();
        }
        let bv = beta * v;
        return bv.sin() / v.cos().powf(1.0 / beta)
            * ((v - bv).cos() / w).powf((1.0 - beta) / beta);
    }
    if beta == 1.0 {
        let a = FRAC_PI_2 + skew * v;
        return (a * v.tan() - skew * ((FRAC_PI_2 * w * v.cos()) / a).ln()) / FRAC_PI_2;
    }
    let t = (PI * beta / 2.0).tan();
    let b = (skew * t).atan() / beta;
    let s = (1.0 + skew * skew * t * t).powf(1.0 / (2.0 * beta));
    let arg = beta * (v + b);
    s * arg.sin() / v.cos().powf(1.0 / beta) * ((v - arg).cos() / w).powf((1.0 - beta) / beta)
}

/// One variate; consumes exactly two 64-bit words so generators can be
/// positioned per variate.
#[inline]
pub fn draw<R: RngCore + ?Sized>(p: &StableParams, rng: &mut R) -> f64 {
    let v = PI * (open01(rng) - 0.5);
    let w = exp1(rng);
    let z = cms_standard(p.beta, p.skew, v, w);
    let g = p.general_scale();
    if p.skew != 0.0 && p.beta != 1.0 {
        g * (z - p.skew * (PI * p.beta / 2.0).tan()) + p.shift
    } else {
        g * z + p.shift
    }
}

/// `n` i.i.d. variates, deterministic in `seed`.
pub fn sample_stable(params: &StableParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::param("n must be >= 1"));
    }
    let mut rng = positioned_rng(seed, 0, 0);
    Ok((0..n).map(|_| draw(params, &mut rng)).collect())
}

/// Scale of `Σ w_j X_j` for independent symmetric `X_j` with scales `s_j`.
pub fn stable_sum_scale(weights: &[f64], scales: &[f64], beta: f64) -> Result<f64> {
    if weights.len() != scales.len() {
        return Err(Error::param(format!(
            "weights has {} entries, scales has {}",
            weights.len(),
            scales.len()
        )));
    }
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::param(format!("beta = {beta} outside (0, 2]")));
    }
    let s: f64 = weights
        .iter()
        .zip(scales)
        .map(|(w, s)| (w.abs() * s).powf(beta))
        .sum();
    Ok(s.powf(1.0 / beta))
}

/// Nearest integer `k` with `x ≈ k`, or an alignment error.
pub(crate) fn grid_index(x: f64, h: f64, what: &str) -> Result<i64> {
    let r = x / h;
    let k = r.round();
    if (r - k).abs() > 1e-9 * k.abs().max(1.0) {
        return Err(Error::Alignment(format!("{what} = {x} is not a multiple of h = {h}")));
    }
    Ok(k as i64)
}

/// A stored realisation ω of the m-dimensional two-sided Lévy process.
///
/// Step `k` carries the increment over `[kh, (k+1)h]`. Shifted paths share
/// the increment storage and differ only in the position of time zero.
#[derive(Debug, Clone)]
pub struct NoisePath {
    h: f64,
    seed: u64,
    mode_params: Vec<StableParams>,
    data: Arc<Vec<Vec<f64>>>,
    zero: usize,
    n_neg: usize,
    n_pos: usize,
}

impl PartialEq for NoisePath {
    fn eq(&self, other: &Self) -> bool {
        self.h == other.h
            && self.seed == other.seed
            && self.mode_params == other.mode_params
            && self.n_neg == other.n_neg
            && self.n_pos == other.n_pos
            && (0..self.n_modes()).all(|l| self.increments(l) == other.increments(l))
    }
}

/// Generate ω on `[t_min, t_max]` with one increment per step of length `h`.
pub fn make_two_sided_path(
    mode_params: &[StableParams],
    h: f64,
    t_min: f64,
    t_max: f64,
    seed: u64,
) -> Result<NoisePath> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::param(format!("step h = {h} must be positive")));
    }
    if !(t_min <= 0.0 && t_max >= 0.0) {
        return Err(Error::param(format!("need t_min <= 0 <= t_max, got [{t_min}, {t_max}]")));
    }
    for p in mode_params {
        p.validate()?;
    }
    let n_neg = (-grid_index(t_min, h, "t_min")?) as usize;
    let n_pos = grid_index(t_max, h, "t_max")? as usize;
    let data = mode_params
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let inc = StableParams {
                beta: p.beta,
                scale: p.scale * h.powf(1.0 / p.beta),
                skew: p.skew,
                shift: p.shift * h,
            };
            let mut rng = positioned_rng(seed, l as u64, -(n_neg as i64));
            (0..n_neg + n_pos).map(|_| draw(&inc, &mut rng)).collect()
        })
        .collect();
    Ok(NoisePath {
        h,
        seed,
        mode_params: mode_params.to_vec(),
        data: Arc::new(data),
        zero: n_neg,
        n_neg,
        n_pos,
    })
}

/// The image θ_s ω of a path under the shift.
pub fn shift_path(path: &NoisePath, s: f64) -> Result<NoisePath> {
    path.shift(s)
}

impl NoisePath {
    /// Path from explicit increments; `n_neg` of them lie before time zero.
    pub fn from_increments(
        mode_params: &[StableParams],
        h: f64,
        n_neg: usize,
        increments: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<NoisePath> {
        if !(h > 0.0) {
            return Err(Error::param(format!("step h = {h} must be positive")));
        }
        if increments.len() != mode_params.len() {
            return Err(Error::param(format!(
                "{} increment arrays for {} modes",
                increments.len(),
                mode_params.len()
            )));
        }
        let n = increments.first().map_or(0, Vec::len);
        if increments.iter().any(|v| v.len() != n) || n_neg > n {
            return Err(Error::param("increment arrays must share one length covering t = 0"));
        }
        Ok(NoisePath {
            h,
            seed,
            mode_params: mode_params.to_vec(),
            data: Arc::new(increments),
            zero: n_neg,
            n_neg,
            n_pos: n - n_neg,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn mode_params(&self) -> &[StableParams] {
        &self.mode_params
    }
    pub fn n_modes(&self) -> usize {
        self.mode_params.len()
    }
    pub fn n_steps(&self) -> usize {
        self.n_neg + self.n_pos
    }
    /// First step index (negative or zero).
    pub fn k_min(&self) -> i64 {
        -(self.n_neg as i64)
    }
    /// One past the last step index.
    pub fn k_end(&self) -> i64 {
        self.n_pos as i64
    }
    pub fn t_min(&self) -> f64 {
        -(self.n_neg as f64) * self.h
    }
    pub fn t_max(&self) -> f64 {
        self.n_pos as f64 * self.h
    }

    /// Step index of grid time `t`.
    pub fn step_index(&self, t: f64) -> Result<i64> {
        grid_index(t, self.h, "time")
    }

    /// Grid index of `t`, required to lie in `[t_min, t_max]`.
    pub fn checked_index(&self, t: f64) -> Result<i64> {
        let k = self.step_index(t)?;
        if k < self.k_min() || k > self.k_end() {
            return Err(Error::Range(format!(
                "t = {t} outside path window [{}, {}]",
                self.t_min(),
                self.t_max()
            )));
        }
        Ok(k)
    }

    /// Increment of `mode` over step `k`.
    #[inline]
    pub fn increment(&self, mode: usize, k: i64) -> f64 {
        debug_assert!(k >= self.k_min() && k < self.k_end());
        self.data[mode][(self.zero as i64 + k) as usize]
    }

    /// Increments of `mode` over the whole window, earliest first.
    pub fn increments(&self, mode: usize) -> &[f64] {
        let start = self.zero - self.n_neg;
        &self.data[mode][start..start + self.n_steps()]
    }

    /// `L_mode(t)`: cumulative sum from time zero, negated reverse sum for t < 0.
    pub fn value(&self, mode: usize, t: f64) -> Result<f64> {
        let k = self.checked_index(t)?;
        Ok(self.value_at_index(mode, k))
    }

    pub fn value_at_index(&self, mode: usize, k: i64) -> f64 {
        if k >= 0 {
            (0..k).fold(0.0, |acc, i| acc + self.increment(mode, i))
        } else {
            -(k..0).rev().fold(0.0, |acc, i| acc + self.increment(mode, i))
        }
    }

    /// θ_s: `value(result, t) = value(self, t + s) - value(self, s)`.
    pub fn shift(&self, s: f64) -> Result<NoisePath> {
        let j = grid_index(s, self.h, "shift")?;
        if j < self.k_min() || j > self.k_end() {
            return Err(Error::Range(format!(
                "shift {s} moves time zero outside [{}, {}]",
                self.t_min(),
                self.t_max()
            )));
        }
        let mut out = self.clone();
        out.zero = (self.zero as i64 + j) as usize;
        out.n_neg = (self.n_neg as i64 + j) as usize;
        out.n_pos = (self.n_pos as i64 - j) as usize;
        Ok(out)
    }

    /// Path on the step `factor·h` whose increments are sums of `factor`
    /// consecutive increments of this one.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.n_neg.is_multiple_of(factor) || !self.n_pos.is_multiple_of(factor) {
            return Err(Error::Alignment(format!(
                "factor {factor} does not divide the step counts ({}, {})",
                self.n_neg, self.n_pos
            )));
        }
        let data = (0..self.n_modes())
            .map(|l| self.increments(l).chunks(factor).map(|c| c.iter().sum()).collect())
            .collect();
        NoisePath::from_increments(
            &self.mode_params,
            self.h * factor as f64,
            self.n_neg / factor,
            data,
            self.seed,
        )
    }

    /// Write the binary container (magic, header, mode-major LE increments).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PATH_MAGIC)?;
        w.write_all(&PATH_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_modes() as u32).to_le_bytes())?;
        for p in &self.mode_params {
            w.write_all(&p.beta.to_le_bytes())?;
        }
        for p in &self.mode_params {
            w.write_all(&p.scale.to_le_bytes())?;
        }
        for x in [self.h, self.t_min(), self.t_max()] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for l in 0..self.n_modes() {
            for x in self.increments(l) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read the binary container. Skew and shift are not part of the format
    /// and come back as zero.
    pub fn read_binary<R: Read>(mut r: R) -> Result<NoisePath> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PATH_MAGIC {
            return Err(Error::Format("not a noise path container".into()));
        }
        let version = read_u32(&mut r)?;
        if version != PATH_VERSION {
            return Err(Error::Format(format!("unsupported path version {version}")));
        }
        let m = read_u32(&mut r)? as usize;
        let betas = (0..m).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let scales = (0..m).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let h = read_f64(&mut r)?;
        let t_min = read_f64(&mut r)?;
        let t_max = read_f64(&mut r)?;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let n_neg = (-grid_index(t_min, h, "t_min")?) as usize;
        let n = n_neg + grid_index(t_max, h, "t_max")? as usize;
        let data = (0..m)
            .map(|_| (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let params: Vec<_> =
            betas.iter().zip(&scales).map(|(&b, &s)| StableParams::symmetric(b, s)).collect();
        NoisePath::from_increments(&params, h, n_neg, data, u64::from_le_bytes(seed))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(f)
    }

    pub fn load(path: &Path) -> Result<NoisePath> {
        NoisePath::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// CSV with columns `t, L_1..L_m` at every grid time of the window.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_modes()).map(|l| format!("L_{l}")));
        out.write_record(&header).map_err(csv_err)?;
        let values: Vec<Vec<f64>> = (0..self.n_modes())
            .map(|l| (self.k_min()..=self.k_end()).map(|k| self.value_at_index(l, k)).collect())
            .collect();
        for (i, k) in (self.k_min()..=self.k_end()).enumerate() {
            let mut rec = vec![fmt_f64(k as f64 * self.h)];
            rec.extend(values.iter().map(|v| fmt_f64(v[i])));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

const PATH_MAGIC: &[u8; 8] = b"SNSEPATH";
const PATH_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Round-trip exact decimal rendering.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

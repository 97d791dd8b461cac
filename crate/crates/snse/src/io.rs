//! Field snapshots, spectral CSV dumps and JSON report helpers.
//!
//! A snapshot is one JSON object: the truncation, time and a free-form tag,
//! plus the m-major coefficients as little-endian `f64` pairs `(re, im)`,
//! base64-encoded.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::ou_process::{Gpq, OUState};
use crate::spherical_spectral::{SpectralField, Spectrum, Truncation, C64};
use crate::stable_noise::{csv_err, fmt_f64};
use crate::{Error, Result};

const SNAPSHOT_FORMAT: &str = "snse-field";
const SNAPSHOT_VERSION: u32 = 1;
const ENCODING: &str = "base64-f64le-re-im";

/// Serialized field snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub l_max: usize,
    pub l_min: usize,
    pub spectrum: Spectrum,
    pub time: f64,
    pub tag: String,
    pub encoding: String,
    pub data: String,
}

impl Snapshot {
    pub fn new(field: &SpectralField, time: f64, tag: &str) -> Snapshot {
        let mut bytes = Vec::with_capacity(16 * field.coeffs().len());
        for c in field.coeffs() {
            bytes.extend_from_slice(&c.re.to_le_bytes());
            bytes.extend_from_slice(&c.im.to_le_bytes());
        }
        let t = field.trunc();
        Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            l_max: t.l_max,
            l_min: t.l_min,
            spectrum: t.spectrum,
            time,
            tag: tag.into(),
            encoding: ENCODING.into(),
            data: STANDARD.encode(bytes),
        }
    }

    /// Decode the coefficients.
    pub fn field(&self) -> Result<SpectralField> {
        if self.format != SNAPSHOT_FORMAT || self.version != SNAPSHOT_VERSION || self.encoding != ENCODING {
            return Err(Error::Format(format!(
                "unsupported snapshot {} v{} ({})",
                self.format, self.version, self.encoding
            )));
        }
        let trunc = Truncation::new(self.l_max, self.l_min, self.spectrum)?;
        let bytes = STANDARD.decode(&self.data).map_err(|e| Error::Format(format!("base64: {e}")))?;
        if bytes.len() != 16 * trunc.len() {
            return Err(Error::Format(format!(
                "snapshot holds {} bytes, truncation l_max = {} needs {}",
                bytes.len(),
                self.l_max,
                16 * trunc.len()
            )));
        }
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
        let coeffs = bytes.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
        SpectralField::from_coeffs(trunc, coeffs)
    }
}

pub fn write_snapshot<W: Write>(w: W, field: &SpectralField, time: f64, tag: &str) -> Result<()> {
    write_json(w, &Snapshot::new(field, time, tag))
}

/// Read a snapshot; returns the field and its time.
pub fn read_snapshot<R: Read>(r: R) -> Result<(SpectralField, f64)> {
    let s: Snapshot = serde_json::from_reader(r).map_err(|e| Error::Format(format!("snapshot: {e}")))?;
    Ok((s.field()?, s.time))
}

/// CSV `l, m_z, re, im` over every `(l, m_z)` with `|m_z| ≤ l`.
pub fn write_spectral_csv<W: Write>(w: W, field: &SpectralField) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["l", "m_z", "re", "im"]).map_err(csv_err)?;
    for l in 0..=field.l_max() {
        for m_z in -(l as i64)..=(l as i64) {
            let c = field.get(l, m_z);
            out.write_record([l.to_string(), m_z.to_string(), fmt_f64(c.re), fmt_f64(c.im)]).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// CSV `t, z_1.., γ, p, q`; non-zonal modes add a `z_l_im` column.
pub fn write_ou_trace_csv<W: Write>(w: W, zonal: &[bool], rows: &[(OUState, Gpq)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    for (l, &zon) in zonal.iter().enumerate() {
        header.push(format!("z_{}", l + 1));
        if !zon {
            header.push(format!("z_{}_im", l + 1));
        }
    }
    header.extend(["gamma", "p", "q"].map(String::from));
    out.write_record(&header).map_err(csv_err)?;
    for (s, g) in rows {
        let mut rec = vec![fmt_f64(s.time)];
        for (z, &zon) in s.values.iter().zip(zonal) {
            rec.push(fmt_f64(z.re));
            if !zon {
                rec.push(fmt_f64(z.im));
            }
        }
        rec.extend([fmt_f64(g.gamma), fmt_f64(g.p), fmt_f64(g.q)]);
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(format!("json: {e}")))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_json_file<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_json(BufWriter::new(File::create(path)?), value)
}

/// Create a file for a CSV or snapshot writer.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An observed trajectory `X_1, ..., X_n` in `R^dim`, stored row-major.
///
/// Finite-state chains store the state label as a one-dimensional real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    values: Vec<f64>,
    dim: usize,
    pub seed: u64,
    pub model_id: String,
    pub burn_in: usize,
}

const MAGIC: &[u8; 4] = b"SQPT";
const VERSION: u32 = 1;

impl SamplePath {
    pub fn new(values: Vec<f64>, dim: usize, seed: u64, model_id: impl Into<String>, burn_in: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dim", "must be positive"));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::validation(
                "values",
                format!("length {} is not a positive multiple of dim {dim}", values.len()),
            ));
        }
        Ok(Self {
            values,
            dim,
            seed,
            model_id: model_id.into(),
            burn_in,
        })
    }

    /// One-dimensional path without generation metadata.
    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1, 0, "external", 0)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds `delta` to every coordinate of the observations after index
    /// `floor(n * at)`. Used to build change-point alternatives.
    pub fn with_mean_shift(mut self, at: f64, delta: f64) -> Self {
        let start = (self.len() as f64 * at).floor() as usize;
        for v in &mut self.values[start * self.dim..] {
            *v += delta;
        }
        self.model_id = format!("{}+shift({at},{delta})", self.model_id);
        self
    }

    /// CSV with header `t,x0,...`; one row per time index, starting at 1.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        wr.write_record(&header)?;
        for (i, p) in self.points().enumerate() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(p.iter().map(|v| format!("{v:?}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the value columns of a CSV written by [`write_csv`](Self::write_csv).
    /// Metadata is not stored in CSV and comes back empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let dim = rd.headers()?.len().saturating_sub(1);
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            for field in rec.iter().skip(1) {
                values.push(field.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            }
        }
        Self::new(values, dim, 0, "csv", 0)
    }

    /// Binary column format: magic `SQPT`, little-endian `u32` version,
    /// `u64` n, `u32` dim, `u64` seed, `u64` burn-in, `u32` id length, id
    /// bytes, then `dim` columns of `n` little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let id = self.model_id.as_bytes();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.burn_in as u64).to_le_bytes())?;
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        for j in 0..self.dim {
            for p in self.points() {
                w.write_all(&p[j].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        if &take::<4>(&mut r)? != MAGIC {
            return Err(Error::Parse("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(take(&mut r)?) as usize;
        let dim = u32::from_le_bytes(take(&mut r)?) as usize;
        let seed = u64::from_le_bytes(take(&mut r)?);
        let burn_in = u64::from_le_bytes(take(&mut r)?) as usize;
        let id_len = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let model_id = String::from_utf8(id).map_err(|e| Error::Parse(e.to_string()))?;
        let mut values = vec![0.0; n * dim];
        for j in 0..dim {
            for i in 0..n {
                values[i * dim + j] = f64::from_le_bytes(take(&mut r)?);
            }
        }
        Self::new(values, dim, seed, model_id, burn_in)
    }
}

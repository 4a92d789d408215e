//! Binary checkpoints.
//!
//! Layout, little-endian: magic `MICK`, `u16` version, `u8` precision
//! (0 single, 1 double), `u32` byte length of the spec JSON, the JSON, `u64`
//! value count, then the values: every parameter in declaration order
//! followed by each batch-norm buffer's means and variances.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Model, ModelError, ModelSpec, Result};
use crate::tensor::{Precision, Real};

const MAGIC: &[u8; 4] = b"MICK";
const VERSION: u16 = 1;

fn precision_code(p: Precision) -> u8 {
    match p {
        Precision::Single => 0,
        Precision::Double => 1,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                ModelError::Checkpoint(format!(
                    "truncated while reading {what} at offset {}",
                    self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

impl<T: Real> Model<T> {
    fn value_count(&self) -> usize {
        self.n_params() + self.stats.iter().map(|s| 2 * s.channels()).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.spec).expect("spec serializes");
        let mut out =
            Vec::with_capacity(19 + json.len() + self.value_count() * T::PRECISION.byte_width());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(precision_code(T::PRECISION));
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.value_count() as u64).to_le_bytes());
        for p in &self.params {
            T::to_le_bytes_vec(p.value.data(), &mut out);
        }
        for s in &self.stats {
            T::to_le_bytes_vec(&s.mean, &mut out);
            T::to_le_bytes_vec(&s.var, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if &cur.array::<4>("magic")? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic at offset 0".into()));
        }
        let version = u16::from_le_bytes(cur.array("version")?);
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {version} at offset 4"
            )));
        }
        let code = cur.array::<1>("precision")?[0];
        if code != precision_code(T::PRECISION) {
            return Err(ModelError::Checkpoint(format!(
                "precision code {code} at offset 6 does not match {:?}",
                T::PRECISION
            )));
        }
        let json_len = u32::from_le_bytes(cur.array("spec length")?) as usize;
        let spec: ModelSpec = serde_json::from_slice(cur.take(json_len, "spec")?)
            .map_err(|e| ModelError::Checkpoint(format!("spec JSON at offset 11: {e}")))?;
        let mut model = Model::<T>::build(&spec, 0)?;
        let count = u64::from_le_bytes(cur.array("value count")?);
        if count != model.value_count() as u64 {
            return Err(ModelError::Checkpoint(format!(
                "value count {count} does not match the {} values of this spec",
                model.value_count()
            )));
        }
        let width = T::PRECISION.byte_width();
        let read = |cur: &mut Cursor, dst: &mut [T], what: &str| -> Result<()> {
            let raw = cur.take(dst.len() * width, what)?;
            for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(width)) {
                *d = T::from_le_chunk(chunk);
            }
            Ok(())
        };
        for p in model.params.iter_mut() {
            let name = p.name.clone();
            read(&mut cur, p.value.data_mut(), &name)?;
        }
        for s in model.stats.iter_mut() {
            read(&mut cur, &mut s.mean, "running mean")?;
            read(&mut cur, &mut s.var, "running variance")?;
        }
        if cur.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

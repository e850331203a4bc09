//! Binary value-table files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "PDMPWTAB"
//! version    u32
//! fingerprint 32 bytes  SHA-256 of the canonical config
//! tag        u8 length + ASCII scalar tag ("f32" / "f64")
//! grid       7 × u64   n_w n_n n_sigma n_d n_theta isp_steps soj_steps
//! count      u64
//! values     count × f64, row-major in grid order
//! ```

use std::io::Write;
use std::path::Path;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::table::{Grid, ValueTable};

pub const MAGIC: &[u8; 8] = b"PDMPWTAB";
pub const FORMAT_VERSION: u32 = 1;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_table<T: Real>(table: &ValueTable<T>) -> Vec<u8> {
    let g = &table.grid;
    let mut out = Vec::with_capacity(64 + 8 * table.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&table.fingerprint);
    out.push(T::TAG.len() as u8);
    out.extend_from_slice(T::TAG.as_bytes());
    for dim in [g.n_w, g.n_n, g.n_sigma, g.n_d, g.n_theta, g.isp_steps, g.soj_steps] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    out.extend_from_slice(&(table.values.len() as u64).to_le_bytes());
    for v in &table.values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Corrupt(format!("{what} overflows")))
    }
}

/// Parses a table without checking it against any configuration.
pub fn decode_table<T: Real>(buf: &[u8]) -> Result<ValueTable<T>> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { buf, pos: MAGIC.len() };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: FORMAT_VERSION });
    }
    let fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().unwrap();
    let tag_len = r.take(1, "scalar tag")?[0] as usize;
    let tag = r.take(tag_len, "scalar tag")?;
    if tag != T::TAG.as_bytes() {
        return Err(Error::Corrupt(format!(
            "table holds {} values, expected {}",
            String::from_utf8_lossy(tag),
            T::TAG
        )));
    }
    let grid = Grid {
        n_w: r.usize("grid")?,
        n_n: r.usize("grid")?,
        n_sigma: r.usize("grid")?,
        n_d: r.usize("grid")?,
        n_theta: r.usize("grid")?,
        isp_steps: r.usize("grid")?,
        soj_steps: r.usize("grid")?,
    };
    let count = r.usize("value count")?;
    let expected = [grid.n_w, grid.n_n, grid.n_sigma, grid.n_d, grid.n_theta]
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if expected != Some(count) {
        return Err(Error::Corrupt(format!("value count {count} does not match grid {grid:?}")));
    }
    let bytes = r.take(
        count.checked_mul(8).ok_or_else(|| Error::Corrupt("value count overflows".into()))?,
        "values",
    )?;
    if r.pos != buf.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            T::from_f64(v).ok_or_else(|| Error::Corrupt(format!("value {v} not representable")))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(ValueTable { grid, fingerprint, values })
}

pub fn save_table<T: Real>(table: &ValueTable<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_table(table))
}

/// Reads a table without checking it against any configuration.
pub fn read_table<T: Real>(path: impl AsRef<Path>) -> Result<ValueTable<T>> {
    decode_table(&std::fs::read(path)?)
}

/// Reads a table and rejects it unless it was computed for `cfg`.
pub fn load_table<T: Real>(path: impl AsRef<Path>, cfg: &ModelConfig<T>) -> Result<ValueTable<T>> {
    let table = read_table::<T>(path)?;
    let expected = cfg.fingerprint();
    if table.fingerprint != expected {
        return Err(Error::FingerprintMismatch {
            found: hex::encode(table.fingerprint),
            expected: hex::encode(expected),
        });
    }
    if table.grid != Grid::new(cfg) {
        return Err(Error::Corrupt("grid metadata disagrees with the configuration".into()));
    }
    Ok(table)
}

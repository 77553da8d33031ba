//! Spectrum dumps: an 8-byte little-endian count followed by that many
//! little-endian f64 values.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CACHE_ENV: &str = "MAGWEYL_CACHE_DIR";

pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// `<dir>/<key>.bin`; the key is expected to be a hex digest.
pub fn spectrum_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.bin"))
}

pub fn write_spectrum(path: &Path, values: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::with_capacity(8 * (values.len() + 1));
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    // write-then-rename so concurrent readers never see a torn file
    let tmp = path.with_extension("bin.tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(Error::Io(format!("{}: truncated header", path.display())));
    }
    let count = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 8 + 8 * count {
        return Err(Error::Io(format!("{}: expected {count} values, found {} bytes", path.display(), bytes.len())));
    }
    Ok(bytes[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

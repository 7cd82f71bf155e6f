//! Binary container framing, atomic writes and provenance sidecars.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes
//! version    u32
//! header_len u64
//! header     header_len bytes of UTF-8 JSON
//! payload    f64 values, row-major
//! crc32      u32 over version..payload
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};

const PREFIX_LEN: usize = 8 + 4 + 8;

/// Writes `bytes` to a temporary sibling of `path` and renames it into place,
/// so a failed write never leaves a partial file at `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::arg(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub(crate) fn encode_container(magic: &[u8; 8], version: u32, header: &[u8], payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload.len() * 8 + 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[8..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Payload floats of a verified container.
#[derive(Debug)]
pub(crate) struct Container {
    pub payload: Vec<f64>,
}

/// Reads and verifies a container. `payload_len` derives the expected number
/// of floats from the header so truncation is reported as such.
pub(crate) fn decode_container(
    path: &Path,
    bytes: &[u8],
    magic: &[u8; 8],
    version: u32,
    payload_len: impl FnOnce(&[u8]) -> Result<usize, FormatError>,
) -> Result<Container> {
    let fail = |kind| Error::format(path, kind);
    if bytes.len() < 8 {
        return Err(fail(FormatError::Truncated(format!("{} bytes, shorter than the magic", bytes.len()))));
    }
    if &bytes[..8] != magic {
        return Err(fail(FormatError::BadMagic { expected: String::from_utf8_lossy(magic).into_owned() }));
    }
    if bytes.len() < PREFIX_LEN {
        return Err(fail(FormatError::Truncated("incomplete preamble".into())));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(fail(FormatError::Version { found, expected: version }));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| fail(FormatError::Truncated(format!("header of {header_len} bytes runs past end of file"))))?;
    let header = &bytes[PREFIX_LEN..header_end];
    let floats = payload_len(header).map_err(fail)?;
    let expected = header_end + floats * 8 + 4;
    if bytes.len() < expected {
        return Err(fail(FormatError::Truncated(format!("expected {expected} bytes, found {}", bytes.len()))));
    }
    if bytes.len() > expected {
        return Err(fail(FormatError::Header(format!("{} trailing bytes", bytes.len() - expected))));
    }
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[8..expected - 4]);
    if stored != computed {
        return Err(fail(FormatError::Checksum { stored, computed }));
    }
    let payload = bytes[header_end..expected - 4]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Container { payload })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Content hash in git's object form: SHA-256 of `"blob <len>\0" ++ content`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar path for an output file: `<file>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    output: String,
    output_hash: String,
    config: &'a C,
    inputs: Vec<InputHash>,
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    hash: String,
}

/// Records the resolved configuration and input hashes next to `output`.
pub fn write_sidecar<C: Serialize>(output: &Path, config: &C, inputs: &[&Path]) -> Result<()> {
    let output_bytes = read_file(output)?;
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(InputHash {
                path: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                hash: content_hash(&read_file(p)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sidecar = Sidecar {
        output: output.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        output_hash: content_hash(&output_bytes),
        config,
        inputs,
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    atomic_write(&sidecar_path(output), &json)
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    atomic_write(path, &json)
}

//! Versioned headers shared by every output file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FORMAT_VERSION: u32 = 1;

/// The `#`-prefixed lines at the top of an output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileHeader {
    pub kind: String,
    pub tool_version: String,
    pub config_hash: String,
    pub fields: BTreeMap<String, String>,
}

pub fn write_header<W: Write>(w: &mut W, kind: &str, config_hash: &str) -> std::io::Result<()> {
    write_header_with(w, kind, config_hash, &[])
}

pub fn write_header_with<W: Write>(
    w: &mut W,
    kind: &str,
    config_hash: &str,
    extra: &[(&str, String)],
) -> std::io::Result<()> {
    writeln!(w, "# oscal {kind} v{FORMAT_VERSION}")?;
    writeln!(w, "# tool_version={TOOL_VERSION}")?;
    writeln!(w, "# config_hash={config_hash}")?;
    for (k, v) in extra {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// Parses the header and returns it with the index of the first other line.
pub fn read_header(lines: &[String], path: &Path, expected_kind: &str) -> Result<(FileHeader, usize)> {
    let first = lines.first().ok_or_else(|| Error::format(path, 1, "empty file"))?;
    let kind = first
        .strip_prefix("# oscal ")
        .and_then(|rest| rest.rsplit_once(' '))
        .ok_or_else(|| Error::format(path, 1, "missing `# oscal <kind> v<n>` header"))?;
    if kind.0 != expected_kind {
        return Err(Error::format(path, 1, format!("expected a {expected_kind} file, found {}", kind.0)));
    }
    if kind.1 != format!("v{FORMAT_VERSION}") {
        return Err(Error::format(path, 1, format!("unsupported format version {}", kind.1)));
    }
    let mut fields = BTreeMap::new();
    let mut i = 1;
    while i < lines.len() {
        let Some(rest) = lines[i].strip_prefix("# ") else { break };
        let (k, v) = rest
            .split_once('=')
            .ok_or_else(|| Error::format(path, i + 1, "expected `# key=value`"))?;
        fields.insert(k.to_string(), v.to_string());
        i += 1;
    }
    let tool_version = fields.remove("tool_version").unwrap_or_default();
    let config_hash = fields
        .remove("config_hash")
        .ok_or_else(|| Error::format(path, 1, "header has no config_hash"))?;
    Ok((
        FileHeader {
            kind: kind.0.to_string(),
            tool_version,
            config_hash,
            fields,
        },
        i,
    ))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a whole file into lines.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

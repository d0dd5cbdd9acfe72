use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

pub(crate) fn write_string(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Peeks at `format_version` before the full parse so version mismatches
/// are reported as such rather than as schema errors.
pub(crate) fn from_versioned_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    #[derive(serde::Deserialize)]
    struct Header {
        format_version: Option<u32>,
    }
    let header: Header = serde_json::from_str(text)?;
    match header.format_version {
        Some(FORMAT_VERSION) => Ok(serde_json::from_str(text)?),
        Some(found) => Err(Error::FormatVersion {
            found,
            expected: FORMAT_VERSION,
        }),
        None => Err(Error::FormatVersion {
            found: 0,
            expected: FORMAT_VERSION,
        }),
    }
}

//! Report envelopes, 17-significant-digit JSON, hashing, atomic writes.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::io::{self, Write};
use std::path::Path;

pub const SCHEMA_VERSION: &str = "1.0.0";

/// JSON formatter that prints every float with 17 significant digits, so
/// 64-bit values round-trip exactly and artifacts are byte-stable.
struct Seventeen;

impl serde_json::ser::Formatter for Seventeen {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes any value with the 17-digit float convention.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Seventeen);
    value.serialize(&mut ser).expect("report serialization");
    String::from_utf8(out).expect("json is utf-8")
}

/// SHA-256 hex digest of the canonical resolved config.
pub fn config_hash(canonical: &Value) -> String {
    let bytes = to_json_string(canonical);
    hex::encode(Sha256::digest(bytes.as_bytes()))
}

/// Standard report envelope shared by every command.
pub fn envelope(command: &str, config_hash: Option<&str>, seed: Option<u64>, body: Value) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    map.insert("command".into(), Value::from(command));
    if let Some(h) = config_hash {
        map.insert("config_hash".into(), Value::from(h));
    }
    if let Some(s) = seed {
        map.insert("seed".into(), Value::from(s));
    }
    map.insert("report".into(), body);
    Value::Object(map)
}

/// Atomic file write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp_path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp_path, path)
}

/// Converts any serializable report to a `Value` that keeps f64 fidelity by
/// going through the 17-digit writer and back.
pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::from_str(&to_json_string(value)).expect("roundtrip")
}

//! JSON config files layered over defaults, with flags applied last.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Recursively overwrites `base` with the keys of `over`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `defaults` overlaid with the JSON object in `path`. Unknown keys are
/// rejected by the target type.
pub fn layered<T: Serialize + DeserializeOwned>(defaults: &T, path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(serde_json::from_value(serde_json::to_value(defaults).unwrap()).unwrap());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let over: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if !over.is_object() {
        return Err(Failure::Usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    }
    let mut base = serde_json::to_value(defaults).unwrap();
    merge(&mut base, over);
    serde_json::from_value(base).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).unwrap() + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

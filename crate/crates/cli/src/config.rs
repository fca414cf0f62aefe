//! Effective configuration: defaults, then the config file, then flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Reads a config file. A JSON object is used as is, or its `config`
/// member when present, so any JSON artifact can be fed back. For a CSV
/// artifact the `# config:` metadata line is used.
pub fn read_config_file(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = if text.trim_start().starts_with('#') {
        let line = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix("# config:"))
            .ok_or_else(|| CliError::usage(format!("{} has no '# config:' line", path.display())))?;
        serde_json::from_str(line.trim())
    } else {
        serde_json::from_str(&text)
    }
    .map_err(|e| CliError::usage(format!("malformed config {}: {e}", path.display())))?;
    match value {
        Value::Object(mut m) => match m.remove("config") {
            Some(inner @ Value::Object(_)) => Ok(inner),
            Some(_) => Err(CliError::usage("the 'config' member must be an object")),
            None => Ok(Value::Object(m)),
        },
        _ => Err(CliError::usage("config must be a JSON object")),
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

/// Overlays `file` and then the non-null `flags` on the defaults of `C`.
/// Keys unknown to `C` are rejected.
pub fn resolve<C, F>(file: Option<&Value>, flags: &F) -> Result<C, CliError>
where
    C: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = object(serde_json::to_value(C::default()).expect("config serializes"));
    let known: Vec<String> = merged.keys().cloned().collect();
    let flags = object(serde_json::to_value(flags).expect("flags serialize"));
    let layers = file.cloned().map(object).into_iter().chain([flags]);
    for layer in layers {
        for (k, v) in layer {
            if !known.contains(&k) {
                return Err(CliError::usage(format!(
                    "unknown config key '{k}' (expected one of {known:?})"
                )));
            }
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("invalid config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    struct Conf {
        a: f64,
        n: usize,
        name: Option<String>,
    }

    #[derive(Serialize)]
    struct Flags {
        a: Option<f64>,
        name: Option<String>,
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = serde_json::json!({ "a": 0.3, "n": 4 });
        let flags = Flags {
            a: Some(0.7),
            name: None,
        };
        let c: Conf = resolve(Some(&file), &flags).unwrap();
        assert_eq!(
            c,
            Conf {
                a: 0.7,
                n: 4,
                name: None
            }
        );
        let c: Conf = resolve(
            None,
            &Flags {
                a: None,
                name: Some("x".into()),
            },
        )
        .unwrap();
        assert_eq!(
            c,
            Conf {
                a: 0.0,
                n: 0,
                name: Some("x".into())
            }
        );
    }

    #[test]
    fn unknown_and_mistyped_keys_are_usage_errors() {
        let flags = Flags { a: None, name: None };
        assert!(resolve::<Conf, _>(Some(&serde_json::json!({ "b": 1 })), &flags).is_err());
        assert!(resolve::<Conf, _>(Some(&serde_json::json!({ "n": "four" })), &flags).is_err());
    }

    #[test]
    fn config_member_and_csv_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("r.json");
        fs::write(&json, r#"{"config": {"a": 1.0}, "result": 3}"#).unwrap();
        assert_eq!(read_config_file(&json).unwrap(), serde_json::json!({ "a": 1.0 }));
        let csv = dir.path().join("p.csv");
        fs::write(&csv, "# construction: x\n# config: {\"n\": 2}\nx0\n1\n").unwrap();
        assert_eq!(read_config_file(&csv).unwrap(), serde_json::json!({ "n": 2 }));
        fs::write(&json, "[1, 2]").unwrap();
        assert!(read_config_file(&json).is_err());
    }
}

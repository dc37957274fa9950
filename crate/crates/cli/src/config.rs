//! Settings resolution: defaults, then the `--config` file, then flags.

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::{Classify, Failure};

/// Flag overrides as a JSON object; unset flags are left out.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set(&mut self, key: &str, value: Option<impl Serialize>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
        }
        self
    }

    pub fn nest(&mut self, key: &str, inner: Overrides) -> &mut Self {
        if !inner.0.is_empty() {
            self.0.insert(key.to_string(), Value::Object(inner.0));
        }
        self
    }
}

/// Objects merge key by key; anything else in `top` replaces `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

/// Layers `base`, then the file, then `overrides` over the type's defaults.
pub fn resolve<T: DeserializeOwned>(base: Overrides, file: Option<&Path>, overrides: Overrides) -> Result<T, Failure> {
    let mut value = Value::Object(base.0);
    let from_file = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .usage_err()?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display())).usage_err()?
        }
        None => Value::Object(Map::new()),
    };
    merge(&mut value, from_file);
    merge(&mut value, Value::Object(overrides.0));
    serde_json::from_value(value).context("invalid settings").usage_err()
}

/// Every run reports the settings it resolved to on stderr.
pub fn announce(settings: &impl Serialize) {
    let json = serde_json::to_string(settings).expect("settings serialize");
    eprintln!("config: {json}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use remiclip::AlignConfig;
    use std::io::Write;

    #[test]
    fn flags_win_over_file_and_file_over_defaults() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, r#"{{"epochs": 3, "batch_size": 4}}"#).unwrap();
        let mut o = Overrides::default();
        o.set("epochs", Some(7)).set("embed_dim", None::<usize>);
        let c: AlignConfig = resolve(Overrides::default(), Some(file.path()), o).unwrap();
        assert_eq!((c.epochs, c.batch_size, c.embed_dim), (7, 4, AlignConfig::default().embed_dim));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, r#"{{"epoch": 3}}"#).unwrap();
        let err = resolve::<AlignConfig>(Overrides::default(), Some(file.path()), Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn nested_objects_merge() {
        let mut base = serde_json::json!({"a": {"x": 1, "y": 2}, "b": 1});
        merge(&mut base, serde_json::json!({"a": {"y": 3}}));
        assert_eq!(base, serde_json::json!({"a": {"x": 1, "y": 3}, "b": 1}));
    }
}

//! Config loading and `key=value` overrides.
//!
//! A config is the model's JSON object (`gamma`, `k_a`, `K`, `R_a`, `x0`,
//! `schedule`) plus an optional `run` object with command settings.
//! Overrides are applied to the parsed JSON before it is typed, so a
//! command-line value always beats the file. Keys with a `run.` prefix
//! address the `run` object.

use std::path::Path;

use contract_core::model::{GridSpec, ModelParams, ValidatedModel};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// Command settings that are not part of the economic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub y_max: Option<f64>,
    pub n_y: Option<usize>,
    pub safety: Option<f64>,
    pub store_levels: Option<usize>,
    pub seed: u64,
    pub paths: usize,
    /// Monte Carlo steps per contracting period.
    pub steps: usize,
    /// Initial promised utility; defaults to the optimal start at `R_a`.
    pub y0: Option<f64>,
    pub record_paths: bool,
    /// Constant effort deviations to test against the agent's optimum.
    pub deviations: Vec<f64>,
    /// Sweep parameter values; each sweep has its own default.
    pub values: Option<Vec<f64>>,
    pub r_a_grid: Vec<f64>,
    /// Contract horizon for the frequency and distribution sweeps.
    pub horizon: Option<f64>,
    /// Negotiation tie tolerance; measured by grid refinement when absent.
    pub tolerance: Option<f64>,
    pub sandwich_tolerance: f64,
    pub n_t: Option<usize>,
    pub n_z: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            y_max: None,
            n_y: None,
            safety: None,
            store_levels: None,
            seed: 0,
            paths: 100_000,
            steps: 200,
            y0: None,
            record_paths: false,
            deviations: Vec::new(),
            values: None,
            r_a_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            horizon: None,
            tolerance: None,
            sandwich_tolerance: 1e-6,
            n_t: None,
            n_z: 401,
        }
    }
}

impl RunSettings {
    /// Grid for a given largest `y` of interest, with explicit settings
    /// taking precedence.
    pub fn grid(&self, y_interest: f64) -> GridSpec {
        let mut g = GridSpec::for_interest(y_interest);
        if let Some(y) = self.y_max {
            g.y_max = y;
        }
        if let Some(n) = self.n_y {
            g.n_y = n;
        }
        if let Some(s) = self.safety {
            g.safety = s;
        }
        if let Some(l) = self.store_levels {
            g.store_levels = l;
        }
        g
    }

    pub fn model_grid(&self, model: &ValidatedModel) -> GridSpec {
        self.grid(GridSpec::default_interest(model.r_a()))
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub model: ModelParams,
    pub run: RunSettings,
}

/// Override value: JSON when it parses, a JSON array for comma lists such
/// as `0,2,4`, a plain string otherwise.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text)
        .or_else(|_| serde_json::from_str(&format!("[{text}]")))
        .unwrap_or_else(|_| Value::String(text.to_string()))
}

pub fn parse_override(text: &str) -> Result<(String, String), CliError> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::user("bad_override", format!("expected key=value, got '{text}'"))),
    }
}

pub fn apply_overrides(root: &mut Value, overrides: &[(String, String)]) -> Result<(), CliError> {
    let obj = root
        .as_object_mut()
        .ok_or_else(|| CliError::user("config", "config must be a JSON object"))?;
    for (key, raw) in overrides {
        let value = parse_value(raw);
        match key.strip_prefix("run.") {
            Some(sub) => {
                let run = obj
                    .entry("run")
                    .or_insert_with(|| Value::Object(Map::new()));
                match run.as_object_mut() {
                    Some(run) => {
                        run.insert(sub.to_string(), value);
                    }
                    None => return Err(CliError::user("config", "'run' must be a JSON object")),
                }
            }
            None => {
                obj.insert(key.clone(), value);
            }
        }
    }
    Ok(())
}

pub fn from_value(mut root: Value) -> Result<Config, CliError> {
    let run = match root.as_object_mut().and_then(|o| o.remove("run")) {
        Some(v) => serde_json::from_value(v)
            .map_err(|e| CliError::user("config", format!("run settings: {e}")))?,
        None => RunSettings::default(),
    };
    let model = serde_json::from_value(root)
        .map_err(|e| CliError::user("config", format!("model: {e}")))?;
    Ok(Config { model, run })
}

pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::user("io", format!("{}: {e}", path.display())))?;
    let mut root: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::user("config", format!("{}: {e}", path.display())))?;
    apply_overrides(&mut root, overrides)?;
    from_value(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.into(), v.into())
    }

    #[test]
    fn values_parse_as_json_lists_or_strings() {
        assert_eq!(parse_value("0.25"), json!(0.25));
        assert_eq!(parse_value("0,2,4"), json!([0, 2, 4]));
        assert_eq!(parse_value("[1, 2]"), json!([1, 2]));
        assert_eq!(parse_value("true"), json!(true));
        assert_eq!(parse_value("abc"), json!("abc"));
    }

    #[test]
    fn command_line_beats_file() {
        let mut root = json!({"k_a": 0.05, "schedule": [0, 1], "run": {"seed": 3}});
        apply_overrides(&mut root, &[kv("k_a", "0.2"), kv("run.seed", "9"), kv("run.n_y", "64")]).unwrap();
        let c = from_value(root).unwrap();
        assert_eq!(c.model.k_a, 0.2);
        assert_eq!(c.run.seed, 9);
        assert_eq!(c.run.n_y, Some(64));
    }

    #[test]
    fn later_override_wins() {
        let mut root = json!({"schedule": [0, 1]});
        apply_overrides(&mut root, &[kv("R_a", "1"), kv("R_a", "0.5")]).unwrap();
        assert_eq!(from_value(root).unwrap().model.r_a, 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = from_value(json!({"schedule": [0, 1], "kappa": 1})).unwrap_err();
        assert_eq!(e.code, "config");
        let e = from_value(json!({"schedule": [0, 1], "run": {"sed": 1}})).unwrap_err();
        assert_eq!(e.code, "config");
    }

    #[test]
    fn malformed_override() {
        assert!(parse_override("k_a").is_err());
        assert!(parse_override("=1").is_err());
        assert_eq!(parse_override("k_a = 0.2").unwrap(), kv("k_a", "0.2"));
    }

    #[test]
    fn grid_settings() {
        let r = RunSettings {
            n_y: Some(80),
            ..RunSettings::default()
        };
        let g = r.grid(2.0);
        assert_eq!((g.y_max, g.n_y), (8.0, 80));
        let r = RunSettings {
            y_max: Some(3.0),
            ..RunSettings::default()
        };
        assert_eq!(r.grid(2.0).y_max, 3.0);
    }
}

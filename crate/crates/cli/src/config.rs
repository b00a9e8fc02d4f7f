//! Flag and config-file resolution.
//!
//! Config keys are the long flag names (`gamma-mhz = 39.0`). Precedence is
//! flag on the command line, then config file, then built-in default. The
//! resolved struct is what gets echoed into every output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, Command, FromArgMatches};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub struct ConfigFile {
    /// Command recorded in a JSON run echo.
    pub command: Option<String>,
    pub table: Map<String, Value>,
}

/// Reads a TOML config, or the JSON output of an earlier run, in which case
/// its `config` object is used.
pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        serde_json::to_value(table)?
    };
    let Value::Object(mut map) = value else {
        bail!("config {} is not a table", path.display());
    };
    if let (Some(Value::Object(inner)), Some(Value::String(command))) = (map.get("config"), map.get("command")) {
        return Ok(ConfigFile { command: Some(command.clone()), table: inner.clone() });
    }
    if let Some(Value::String(command)) = map.remove("command") {
        return Ok(ConfigFile { command: Some(command), table: map });
    }
    Ok(ConfigFile { command: None, table: map })
}

/// Overlays config values onto `parsed` (as read from `matches`) for every
/// flag not given on the command line.
pub fn merge<T>(parsed: T, matches: &ArgMatches, config: Option<&Map<String, Value>>) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let Some(config) = config else {
        return Ok(parsed);
    };
    let Value::Object(mut merged) = serde_json::to_value(&parsed)? else {
        bail!("arguments do not serialize to a table");
    };
    for (key, value) in config {
        if !merged.contains_key(key) {
            bail!("unknown config key `{key}`");
        }
        let id = key.replace('-', "_");
        if matches.value_source(&id) != Some(ValueSource::CommandLine) {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).context("invalid config value")
}

/// Defaults of `T` overlaid with one config table, for sections that have
/// no command line of their own.
pub fn section<T>(name: &str, table: &Value) -> Result<T>
where
    T: Args + FromArgMatches + Serialize + DeserializeOwned,
{
    let Value::Object(table) = table else {
        bail!("config section `{name}` is not a table");
    };
    let cmd = T::augment_args(Command::new("section").no_binary_name(true));
    let matches = cmd.try_get_matches_from(std::iter::empty::<String>())?;
    merge(T::from_arg_matches(&matches)?, &matches, Some(table)).with_context(|| format!("config section `{name}`"))
}

/// `"1:17"`, `"1,4,8"` or a mix such as `"0:2,5"`; ranges are inclusive.
pub fn parse_index_list(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if b < a {
                    bail!("range `{part}` is reversed");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("`{part}` is not an index"))?),
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        bail!("empty list `{text}`");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{CommandFactory, Parser};
    use serde::Deserialize;

    #[derive(Parser, Serialize, Deserialize, Debug, PartialEq)]
    #[serde(rename_all = "kebab-case")]
    struct Demo {
        #[arg(long, default_value_t = 1.0)]
        gamma_mhz: f64,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    }

    fn table(text: &str) -> Map<String, Value> {
        serde_json::to_value(toml::from_str::<toml::Table>(text).unwrap()).unwrap().as_object().unwrap().clone()
    }

    #[test]
    fn flag_beats_config_beats_default() {
        let cfg = table("gamma-mhz = 39\nreps = 10");
        let m = Demo::command().get_matches_from(["demo", "--reps", "5"]);
        let d = merge(Demo::from_arg_matches(&m).unwrap(), &m, Some(&cfg)).unwrap();
        assert_eq!(d, Demo { gamma_mhz: 39.0, reps: 5 });
        let m = Demo::command().get_matches_from(["demo"]);
        assert_eq!(merge(Demo::from_arg_matches(&m).unwrap(), &m, None).unwrap(), Demo { gamma_mhz: 1.0, reps: 3 });
    }

    #[test]
    fn unknown_key_is_rejected() {
        let m = Demo::command().get_matches_from(["demo"]);
        let err = merge(Demo::from_arg_matches(&m).unwrap(), &m, Some(&table("gama-mhz = 2"))).unwrap_err();
        assert!(err.to_string().contains("gama-mhz"));
    }

    #[test]
    fn index_lists() {
        assert_eq!(parse_index_list("1:4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_index_list("8, 1:2,2").unwrap(), vec![1, 2, 8]);
        assert!(parse_index_list("4:1").is_err());
        assert!(parse_index_list("").is_err());
        assert!(parse_index_list("a").is_err());
    }
}

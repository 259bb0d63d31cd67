//! `--<key> <value>` flags for every config key, merged over a config file.

use std::path::Path;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches};
use purified::config::{ConfigError, RunConfig, KEY_DOCS};

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub pairs: Vec<(String, String)>,
}

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let pairs = KEY_DOCS
            .iter()
            .filter_map(|(key, _)| m.get_one::<String>(key).map(|v| (key.to_string(), v.clone())))
            .collect();
        Ok(Self { pairs })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: Command) -> Command {
        KEY_DOCS.iter().fold(cmd, |cmd, (key, doc)| {
            cmd.arg(
                Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .help(*doc)
                    .help_heading("Config overrides"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

/// Literal TOML if it parses as one, otherwise a bare string.
fn toml_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Loads `file` (or the defaults), applies the overrides and validates.
pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = match file {
        Some(path) => std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for (key, raw) in &overrides.pairs {
        table.insert(key.clone(), toml_value(raw));
    }
    let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse(e.to_string()))?;
    RunConfig::from_toml(&merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_as_toml_first() {
        assert_eq!(toml_value("1.0"), toml::Value::Float(1.0));
        assert_eq!(toml_value("3"), toml::Value::Integer(3));
        assert_eq!(toml_value("b_minus_a"), toml::Value::String("b_minus_a".into()));
        assert!(matches!(toml_value("[8, 8]"), toml::Value::Array(_)));
    }

    #[test]
    fn flags_win_over_defaults() {
        let o = Overrides {
            pairs: vec![("rho".into(), "1.0".into()), ("epochs".into(), "2".into())],
        };
        let cfg = resolve(None, &o).unwrap();
        assert_eq!((cfg.rho, cfg.epochs), (1.0, 2));
        let bad = Overrides {
            pairs: vec![("epochs".into(), "many".into())],
        };
        assert!(resolve(None, &bad).is_err());
    }
}

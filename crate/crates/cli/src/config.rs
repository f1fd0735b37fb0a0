//! Layered settings: command-line flags over a `key = value` file over defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Failure of a CLI run, mapped onto the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, config file, data spec or parameter combination.
    Config(String),
    /// The run started but the objective blew up.
    Diverged(String),
    /// I/O and other runtime failures.
    Runtime(String),
    /// A verification check failed.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Diverged(_) => 3,
            Self::Runtime(_) | Self::Check(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Diverged(m) => write!(f, "diverged: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
            Self::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vropt_core::Error> for CliError {
    fn from(e: vropt_core::Error) -> Self {
        use vropt_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::Capability(_) | E::Infeasible(_) | E::Domain(_) | E::Parse { .. } | E::Format { .. } => {
                Self::Config(e.to_string())
            }
            E::Singular(_) => Self::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn config<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

/// Normalizes `--k-list` / `k_list` spellings to one key.
pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Parses a line-oriented `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config(format!("config line {}: expected `key = value`", no + 1));
        };
        let key = normalize_key(k);
        if key.is_empty() {
            return config(format!("config line {}: empty key", no + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Resolved settings for one subcommand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Overlays `flags` on `file`, rejecting file keys outside `known`.
    pub fn layered(file: BTreeMap<String, String>, flags: BTreeMap<String, String>, known: &[String]) -> CliResult<Self> {
        for k in file.keys() {
            if !known.iter().any(|n| n == k) {
                return config(format!("unknown config key {k:?}"));
            }
        }
        let mut values = file;
        values.extend(flags);
        Ok(Self { values })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self { values: pairs.into_iter().map(|(k, v)| (normalize_key(k), v.to_string())).collect() }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .or_else(|_| config(format!("invalid value {v:?} for {}", key.replace('_', "-")))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T> {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => config(format!("missing required --{}", key.replace('_', "-"))),
        }
    }

    /// Boolean switch: present without value, or `true`/`false`/`1`/`0`/`yes`/`no`.
    pub fn flag(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.raw(key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("" | "true" | "1" | "yes" | "on") => Ok(true),
            Some("false" | "0" | "no" | "off") => Ok(false),
            Some(v) => config(format!("invalid boolean {v:?} for {}", key.replace('_', "-"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().or_else(|_| config(format!("invalid list item {s:?} for {}", key.replace('_', "-")))))
            .collect::<CliResult<Vec<T>>>()
            .map(Some)
    }

    /// Settings in a stable order, for echoing alongside outputs.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Default seed: `VROPT_SEED` when set, else 0.
pub fn default_seed() -> CliResult<u64> {
    match std::env::var("VROPT_SEED") {
        Ok(v) => v.trim().parse().or_else(|_| config(format!("VROPT_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing() {
        let m = parse_config_file("# run\nalgo = s2gd\n k-list = 1,2 # inline\n\n").unwrap();
        assert_eq!(m.get("algo").unwrap(), "s2gd");
        assert_eq!(m.get("k_list").unwrap(), "1,2");
        assert!(parse_config_file("no equals sign").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let file = parse_config_file("epochs = 5\nseed = 1").unwrap();
        let flags = BTreeMap::from([("epochs".to_string(), "9".to_string())]);
        let known = vec!["epochs".to_string(), "seed".to_string()];
        let s = Settings::layered(file, flags, &known).unwrap();
        assert_eq!(s.get::<usize>("epochs", 0).unwrap(), 9);
        assert_eq!(s.get::<u64>("seed", 0).unwrap(), 1);
        assert_eq!(s.get::<f64>("lambda", 0.5).unwrap(), 0.5);
    }

    #[test]
    fn unknown_file_key_rejected() {
        let file = parse_config_file("bogus = 1").unwrap();
        assert!(Settings::layered(file, BTreeMap::new(), &[]).is_err());
    }

    #[test]
    fn typed_access_errors_are_config_errors() {
        let s = Settings::from_pairs([("epochs", "ten"), ("fast", "maybe")]);
        assert_eq!(s.get::<usize>("epochs", 1).unwrap_err().exit_code(), 2);
        assert!(s.flag("fast", false).is_err());
        assert_eq!(s.list::<f64>("missing").unwrap(), None);
    }
}

//! Flat `key = value` settings. Command-line flags override config-file
//! values, which override defaults. Every value a command reads is recorded
//! so the manifest can reproduce the run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default)]
pub struct Settings {
    given: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

/// Parses a config file: one `key = value` per line, `#` starts a comment.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}: cannot read config", path.display()))?;
    parse_config(&text).with_context(|| format!("{}", path.display()))
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected 'key = value'", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            bail!("line {}: duplicate key '{k}'", n + 1);
        }
    }
    Ok(out)
}

/// Accepts plain numbers and multiples of π such as `pi/3`, `-pi/6`, `5pi/6`, `2*pi`.
pub fn parse_angle(s: &str) -> Option<f64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let Some((coef, rest)) = t.split_once("pi") else {
        return t.parse().ok();
    };
    let coef = coef.strip_suffix('*').unwrap_or(coef);
    let c = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        _ => coef.parse::<f64>().ok()?,
    };
    let div = match rest {
        "" => 1.0,
        _ => rest.strip_prefix('/')?.parse::<f64>().ok()?,
    };
    Some(c * PI / div)
}

impl Settings {
    pub fn new(file: BTreeMap<String, String>, flags: Vec<(&'static str, Option<String>)>) -> Self {
        let mut given = file;
        for (k, v) in flags {
            if let Some(v) = v {
                given.insert(k.to_string(), v);
            }
        }
        Settings {
            given,
            resolved: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.given.insert(key.to_string(), value);
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn has(&self, key: &str) -> bool {
        self.given.contains_key(key)
    }

    fn raw(&mut self, key: &str, default: Option<String>) -> Option<String> {
        let v = self.given.get(key).cloned().or(default)?;
        self.resolved.insert(key.to_string(), v.clone());
        Some(v)
    }

    fn parsed<T: FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| anyhow!("setting '{key}': cannot parse '{v}'"))
    }

    pub fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        let v = self.raw(key, Some(default.to_string())).expect("default given");
        Self::parsed(key, &v)
    }

    pub fn get_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.raw(key, None).map(|v| Self::parsed(key, &v)).transpose()
    }

    pub fn string(&mut self, key: &str, default: &str) -> String {
        self.raw(key, Some(default.to_string())).expect("default given")
    }

    pub fn path_opt(&mut self, key: &str) -> Option<PathBuf> {
        self.raw(key, None).map(PathBuf::from)
    }

    pub fn path_required(&mut self, key: &str) -> Result<PathBuf> {
        self.path_opt(key).ok_or_else(|| anyhow!("missing required setting '{key}'"))
    }

    /// Angles are stored as written, so `pi/3` stays exact in the manifest.
    pub fn angle(&mut self, key: &str, default: &str) -> Result<f64> {
        let v = self.string(key, default);
        parse_angle(&v).ok_or_else(|| anyhow!("setting '{key}': '{v}' is not an angle"))
    }

    pub fn list<T: FromStr>(&mut self, key: &str, default: &str) -> Result<Vec<T>> {
        let v = self.string(key, default);
        v.split(',')
            .map(|p| Self::parsed(key, p.trim()))
            .collect::<Result<Vec<T>>>()
            .and_then(|l| if l.is_empty() { bail!("setting '{key}' is empty") } else { Ok(l) })
    }

    /// Fails on keys that were supplied but never read, which are almost always typos.
    pub fn finish(&self) -> Result<()> {
        let unused: Vec<&str> = self
            .given
            .keys()
            .filter(|k| !self.resolved.contains_key(*k))
            .map(String::as_str)
            .collect();
        if !unused.is_empty() {
            bail!("unused setting(s) for this command: {}", unused.join(", "));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert_eq!(parse_angle("pi/3"), Some(PI / 3.0));
        assert_eq!(parse_angle("-pi/6"), Some(-PI / 6.0));
        assert_eq!(parse_angle("5pi/6"), Some(5.0 * PI / 6.0));
        assert_eq!(parse_angle("2*PI"), Some(2.0 * PI));
        assert_eq!(parse_angle("0.5"), Some(0.5));
        assert_eq!(parse_angle("pi/x"), None);
    }

    #[test]
    fn precedence_and_unused_keys() {
        let file = parse_config("delta = 0.1 # comment\nseed = 3\n\n").unwrap();
        let mut s = Settings::new(file, vec![("delta", Some("0.2".into())), ("d", None)]);
        assert_eq!(s.get("delta", 0.05).unwrap(), 0.2);
        assert_eq!(s.get("d", 2usize).unwrap(), 2);
        assert!(s.finish().is_err());
        assert_eq!(s.get("seed", 1u64).unwrap(), 3);
        s.finish().unwrap();
        assert_eq!(s.resolved()["d"], "2");
    }

    #[test]
    fn config_errors() {
        assert!(parse_config("a = 1\na = 2").is_err());
        assert!(parse_config("just words").is_err());
        let mut s = Settings::new(parse_config("m = many").unwrap(), vec![]);
        assert!(s.get("m", 4usize).is_err());
    }
}

//! TOML configuration files. Every table is overlaid on built-in defaults, so a
//! file only lists what it changes. Errors carry the file and line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug)]
pub struct ConfigError {
    path: PathBuf,
    line: Option<usize>,
    msg: String,
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        "config"
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.path.display(), self.msg),
            None => write!(f, "{}: {}", self.path.display(), self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

pub struct ConfigFile {
    path: PathBuf,
    text: String,
    root: Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::Error::new(e).context(format!("reading {}", path.display())))?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> anyhow::Result<Self> {
        match toml::from_str::<Table>(&text) {
            Ok(root) => Ok(ConfigFile {
                path: path.to_path_buf(),
                text,
                root,
            }),
            Err(e) => {
                let line = e.span().map(|s| line_of_offset(&text, s.start));
                Err(ConfigError {
                    path: path.to_path_buf(),
                    line,
                    msg: e.message().trim().to_string(),
                }
                .into())
            }
        }
    }

    pub fn error(&self, line: Option<usize>, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    /// Keys of a section (the root when `section` is `None`).
    pub fn table(&self, section: Option<&str>) -> anyhow::Result<Option<&Table>> {
        match section {
            None => Ok(Some(&self.root)),
            Some(s) => match self.root.get(s) {
                None => Ok(None),
                Some(Value::Table(t)) => Ok(Some(t)),
                Some(_) => Err(self.error(self.key_line(None, s), format!("`{s}` must be a table")).into()),
            },
        }
    }

    /// Rejects keys of the root table outside `allowed`.
    pub fn check_sections(&self, allowed: &[&str]) -> anyhow::Result<()> {
        for k in self.root.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(self
                    .error(self.key_line(None, k), format!("unknown key `{k}` (expected one of: {})", allowed.join(", ")))
                    .into());
            }
        }
        Ok(())
    }

    /// Applies the keys of `section` on top of `base`. Unknown keys are errors.
    pub fn overlay<T: Serialize + DeserializeOwned>(&self, section: Option<&str>, base: &T) -> anyhow::Result<T> {
        self.overlay_with(section, base, &[])
    }

    /// As [`ConfigFile::overlay`], also accepting `optional` keys whose
    /// default is absent from the serialized table.
    pub fn overlay_with<T: Serialize + DeserializeOwned>(
        &self,
        section: Option<&str>,
        base: &T,
        optional: &[&str],
    ) -> anyhow::Result<T> {
        let defaults = Table::try_from(base).map_err(|e| self.error(None, e.to_string()))?;
        let mut merged = defaults.clone();
        let Some(user) = self.table(section)? else {
            return Ok(base_roundtrip(merged).map_err(|e| self.error(None, e))?);
        };
        for (k, v) in user {
            if !merged.contains_key(k) && !optional.contains(&k.as_str()) {
                let known: Vec<&str> = merged.keys().map(String::as_str).chain(optional.iter().copied()).collect();
                return Err(self
                    .error(self.key_line(section, k), format!("unknown key `{k}` (known: {})", known.join(", ")))
                    .into());
            }
            merged.insert(k.clone(), v.clone());
        }
        base_roundtrip::<T>(merged).map_err(|e| {
            // blame the first key that fails on its own
            for (k, v) in user {
                let mut single = defaults.clone();
                single.insert(k.clone(), v.clone());
                if let Err(e) = base_roundtrip::<T>(single) {
                    return self.error(self.key_line(section, k), format!("`{k}`: {e}")).into();
                }
            }
            self.semantic(section, &e).into()
        })
    }

    /// Error for a value that parsed but failed validation, anchored to the
    /// first key of `section` named in the message.
    pub fn semantic(&self, section: Option<&str>, msg: &str) -> ConfigError {
        let user = self.table(section).ok().flatten();
        let line = user.and_then(|t| {
            t.keys()
                .filter(|k| mentions(msg, k))
                .filter_map(|k| self.key_line(section, k))
                .min()
        });
        let line = line.or_else(|| section.and_then(|s| self.section_line(s)));
        self.error(line, msg)
    }

    pub fn has_key(&self, section: Option<&str>, key: &str) -> bool {
        self.table(section).ok().flatten().is_some_and(|t| t.contains_key(key))
    }

    fn section_line(&self, section: &str) -> Option<usize> {
        let header = format!("[{section}]");
        self.text.lines().position(|l| l.trim() == header).map(|i| i + 1)
    }

    /// Line on which `key` is assigned inside `section`.
    pub fn key_line(&self, section: Option<&str>, key: &str) -> Option<usize> {
        let lines: Vec<&str> = self.text.lines().collect();
        let start = match section {
            Some(s) => self.section_line(s)?,
            None => 0,
        };
        for (i, l) in lines.iter().enumerate().skip(start) {
            let t = l.trim_start();
            if t.starts_with('[') {
                if section.is_some() {
                    break;
                }
                if t.trim() == format!("[{key}]") {
                    return Some(i + 1);
                }
                continue;
            }
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
        None
    }
}

fn base_roundtrip<T: DeserializeOwned>(t: Table) -> Result<T, String> {
    Value::Table(t).try_into().map_err(|e: toml::de::Error| e.message().trim().to_string())
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Whether `msg` names `key` as a whole word.
fn mentions(msg: &str, key: &str) -> bool {
    let word = |c: char| c.is_alphanumeric() || c == '_';
    msg.match_indices(key).any(|(i, _)| {
        let before = msg[..i].chars().next_back().is_none_or(|c| !word(c));
        let after = msg[i + key.len()..].chars().next().is_none_or(|c| !word(c));
        before && after
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Demo {
        a: f64,
        b: Vec<u32>,
    }

    fn file(text: &str) -> ConfigFile {
        ConfigFile::parse(Path::new("c.toml"), text.to_string()).unwrap()
    }

    #[test]
    fn overlay_keeps_defaults() {
        let c = file("[x]\nb = [3]\n");
        let d = c.overlay(Some("x"), &Demo { a: 1.0, b: vec![1] }).unwrap();
        assert_eq!(d, Demo { a: 1.0, b: vec![3] });
        let d = c.overlay(Some("y"), &Demo { a: 2.0, b: vec![] }).unwrap();
        assert_eq!(d.a, 2.0);
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let c = file("# top\n[x]\na = 1.0\nbb = 2\n");
        let e = c.overlay(Some("x"), &Demo { a: 1.0, b: vec![] }).unwrap_err();
        assert!(e.to_string().starts_with("c.toml:4: unknown key `bb`"), "{e}");
    }

    #[test]
    fn type_error_is_line_anchored() {
        let c = file("[x]\na = 1.0\nb = \"no\"\n");
        let e = c.overlay(Some("x"), &Demo { a: 1.0, b: vec![] }).unwrap_err();
        assert!(e.to_string().starts_with("c.toml:3: `b`: invalid type"), "{e}");
    }

    #[test]
    fn syntax_error_has_line() {
        let e = ConfigFile::parse(Path::new("c.toml"), "a = 1\nb = = 2\n".into()).err().unwrap();
        assert!(e.to_string().starts_with("c.toml:2:"), "{e}");
    }

    #[test]
    fn semantic_anchor() {
        let c = file("[s]\nphi = -1\nbeta = 2\n");
        assert_eq!(c.semantic(Some("s"), "phi and beta must be positive").to_string(), "c.toml:2: phi and beta must be positive");
        assert_eq!(c.semantic(Some("s"), "bad").to_string(), "c.toml:1: bad");
        assert!(!mentions("alpha_sd", "alpha"));
    }
}

//! Line-oriented `key = value` documents with `[section]` headers.
//!
//! Used for run configurations, device files and simulation scenarios. Keys
//! may repeat inside a section (e.g. several `set = ...` entries under
//! `[coappearance]`), so entries keep their file order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("[{section}] {key}: cannot parse `{value}`: {message}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        message: String,
    },
    #[error("[{section}] unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    pub sections: Vec<Section>,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' | ';' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> String {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        v[1..v.len() - 1].to_string()
    } else {
        v.to_string()
    }
}

impl FromStr for ConfigDoc {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigDoc::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: "empty section name".into(),
                    });
                }
                doc.sections.push(Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let section = doc.sections.last_mut().ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: "entry before any [section] header".into(),
            })?;
            section.entries.push(Entry {
                key: key.to_string(),
                value: unquote(value),
                line: line_no,
            });
        }
        Ok(doc)
    }
}

impl ConfigDoc {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Section, ConfigError> {
        self.section(name)
            .ok_or_else(|| ConfigError::MissingSection(name.to_string()))
    }

    /// Sections named `<prefix>.<suffix>`, yielding `(suffix, section)` in file order.
    pub fn prefixed<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Section)> + 'a {
        self.sections.iter().filter_map(move |s| {
            s.name
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|suffix| (suffix, s))
        })
    }
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map(|e| e.value.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.key == key)
            .map(|e| e.value.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    pub fn parse<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.trim().parse::<T>().map(Some).map_err(|e| ConfigError::BadValue {
                section: self.name.clone(),
                key: key.to_string(),
                value: v.to_string(),
                message: e.to_string(),
            }),
        }
    }

    pub fn parse_req<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    pub fn parse_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(ConfigError::UnknownKey {
                section: self.name.clone(),
                key: e.key.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn bad_value(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            section: self.name.clone(),
            key: key.to_string(),
            value: self.get(key).unwrap_or_default().to_string(),
            message: message.into(),
        }
    }
}

/// Splits a comma-separated list, trimming blanks.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_repeated_keys_and_comments() {
        let doc: ConfigDoc = r#"
# leading comment
[rails]
pcie12v = 12.0   ; trailing
pcie3v3 = 3.3
[coappearance]
set = "SAD,FFT"
set = "BN,BS"  # co-running finance kernels
[kernel.bfs]
grid_blocks = 4
"#
        .parse()
        .unwrap();
        assert_eq!(doc.sections.len(), 3);
        let rails = doc.require("rails").unwrap();
        assert_eq!(rails.parse_req::<f64>("pcie3v3").unwrap(), 3.3);
        let sets: Vec<_> = doc.require("coappearance").unwrap().get_all("set").collect();
        assert_eq!(sets, vec!["SAD,FFT", "BN,BS"]);
        let kernels: Vec<_> = doc.prefixed("kernel").map(|(id, _)| id).collect();
        assert_eq!(kernels, vec!["bfs"]);
    }

    #[test]
    fn rejects_orphan_entries_and_bad_headers() {
        assert!(matches!(
            "k = v".parse::<ConfigDoc>(),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!("[broken\nk = v".parse::<ConfigDoc>().is_err());
        assert!("[s]\nnot a pair".parse::<ConfigDoc>().is_err());
    }

    #[test]
    fn typed_lookup_reports_section_and_key() {
        let doc: ConfigDoc = "[device]\nsm_count = lots".parse().unwrap();
        let err = doc.require("device").unwrap().parse_req::<u32>("sm_count").unwrap_err();
        assert!(err.to_string().contains("sm_count"));
    }
}

//! Flat `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValueFile {
    pub entries: BTreeMap<String, String>,
    pub path: PathBuf,
}

impl KeyValueFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().replace('-', "_");
            if key.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(KeyValueFile {
            entries,
            path: path.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("{}: `{key} = {v}`: {e}", self.path.display()))),
        }
    }

    /// Keys not in `known`, for reporting typos.
    pub fn unknown_keys(&self, known: &[&str]) -> Vec<String> {
        self.entries
            .keys()
            .filter(|k| !known.contains(&k.as_str()))
            .cloned()
            .collect()
    }
}

/// Renders entries in the same format `parse` accepts.
pub fn render(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let f = KeyValueFile::parse("# header\nepochs = 5 # trailing\n\n lr=0.01\nbatch-size = 4\n", Path::new("c")).unwrap();
        assert_eq!(f.get::<usize>("epochs").unwrap(), Some(5));
        assert_eq!(f.get::<f64>("lr").unwrap(), Some(0.01));
        assert_eq!(f.get::<usize>("batch_size").unwrap(), Some(4));
        assert_eq!(f.get::<usize>("missing").unwrap(), None);
        assert!(f.get::<usize>("lr").is_err());
        assert_eq!(f.unknown_keys(&["epochs", "lr"]), vec!["batch_size".to_string()]);
    }

    #[test]
    fn malformed_line_names_its_number() {
        assert!(matches!(
            KeyValueFile::parse("a = 1\noops\n", Path::new("c")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn render_round_trips() {
        let text = render(&[("seed", "3".into()), ("arch", "mh-sim-fc".into())]);
        let f = KeyValueFile::parse(&text, Path::new("c")).unwrap();
        assert_eq!(f.get::<String>("arch").unwrap().as_deref(), Some("mh-sim-fc"));
    }
}

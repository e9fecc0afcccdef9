//! Plain-text `key = value` configuration files.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Consumers take the keys they know and call [`KeyValues::finish`] to reject
//! the rest.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::DataError;

#[derive(Debug, Default, Clone)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| DataError::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(DataError::Parse { line: i + 1, msg: "empty key".into() });
            }
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(DataError::Parse { line: i + 1, msg: format!("duplicate key {key}") });
            }
        }
        Ok(Self { entries })
    }

    /// Overrides (or adds) a value, e.g. from a command-line flag.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, DataError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| DataError::Parse {
                line,
                msg: format!("{key}: {e}"),
            }),
        }
    }

    /// Comma-separated list value.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, DataError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e: T::Err| DataError::Parse {
                        line,
                        msg: format!("{key}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    /// Fails if any key was left unconsumed.
    pub fn finish(self) -> Result<(), DataError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(DataError::Parse {
                line,
                msg: format!("unknown key {k}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown() {
        let mut kv = KeyValues::parse("# c\n a = 1 \n\nlist=0.1, 0.2\n").unwrap();
        assert_eq!(kv.take::<u32>("a").unwrap(), Some(1));
        assert_eq!(kv.take_list::<f64>("list").unwrap(), Some(vec![0.1, 0.2]));
        assert_eq!(kv.take::<u32>("missing").unwrap(), None);
        kv.finish().unwrap();

        let kv = KeyValues::parse("x=1\ny=2").unwrap();
        assert!(matches!(kv.finish(), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn reports_line_numbers() {
        assert!(matches!(KeyValues::parse("a=1\nbogus\n"), Err(DataError::Parse { line: 2, .. })));
        assert!(matches!(KeyValues::parse("a=1\na=2\n"), Err(DataError::Parse { line: 2, .. })));
        let mut kv = KeyValues::parse("\nn = abc").unwrap();
        assert!(matches!(kv.take::<usize>("n"), Err(DataError::Parse { line: 2, .. })));
    }
}

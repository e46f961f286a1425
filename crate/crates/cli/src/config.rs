//! TOML config files layered under command-line flags.
//!
//! A config file holds one table per subcommand (`[convert]`, `[train]`,
//! `[enhance]`, `[grad_check]`, `[eval_detect]`, `[pipeline]`) plus an
//! optional top-level `seed` shared by all of them. Flags that are given on
//! the command line replace the matching keys before the table is
//! deserialized, so defaults, file values and flags resolve in that order.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use toml::{Table, Value};

pub struct Layers {
    table: Table,
}

impl Layers {
    /// Section `section` of `path`, or an empty table without a file.
    pub fn load(path: Option<&Path>, section: &str) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self { table: Table::new() });
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut root: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut table = match root.remove(section) {
            Some(Value::Table(t)) => t,
            Some(_) => bail!("`{section}` in {} must be a table", path.display()),
            None => Table::new(),
        };
        if let Some(seed) = root.remove("seed") {
            table.entry("seed").or_insert(seed);
        }
        Ok(Self { table })
    }

    /// Sets `key` (dotted for nested tables) when `value` is present.
    pub fn set<V: Into<Value>>(&mut self, key: &str, value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().unwrap();
            let mut t = &mut self.table;
            for p in parts {
                let entry = t.entry(p).or_insert_with(|| Value::Table(Table::new()));
                if !entry.is_table() {
                    *entry = Value::Table(Table::new());
                }
                t = entry.as_table_mut().unwrap();
            }
            t.insert(last.to_string(), v.into());
        }
        self
    }

    pub fn set_path(&mut self, key: &str, value: Option<&Path>) -> &mut Self {
        self.set(key, value.map(|p| p.display().to_string()))
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.table.get(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    /// Puts `base` under `key`, with whatever the layers already hold at
    /// `key` merged on top.
    pub fn underlay(&mut self, key: &str, base: Table) -> &mut Self {
        let mut merged = base;
        if let Some(Value::Table(over)) = self.table.remove(key) {
            merged.extend(over);
        }
        self.table.insert(key.to_string(), Value::Table(merged));
        self
    }

    pub fn finish<T: DeserializeOwned>(self) -> Result<T> {
        Value::Table(self.table).try_into().context("invalid configuration")
    }
}

/// Converts a flag value into a TOML value.
pub fn u(v: Option<impl TryInto<i64>>) -> Option<Value> {
    v.and_then(|x| x.try_into().ok()).map(Value::Integer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize, PartialEq)]
    struct Cfg {
        seed: u64,
        #[serde(default)]
        lr: f64,
        #[serde(default)]
        net: Option<Table>,
    }

    #[test]
    fn flags_beat_file_and_seed_is_inherited() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 7\n[train]\nlr = 0.5\n[train.net]\nn_rrg = 2\n").unwrap();
        let mut l = Layers::load(Some(&p), "train").unwrap();
        l.set("lr", Some(0.25)).set("net.n_scales", u(Some(3u32)));
        let c: Cfg = l.finish().unwrap();
        assert_eq!((c.seed, c.lr), (7, 0.25));
        let net = c.net.unwrap();
        assert_eq!(net["n_rrg"].as_integer(), Some(2));
        assert_eq!(net["n_scales"].as_integer(), Some(3));
    }

    #[test]
    fn section_seed_wins_over_global() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 7\n[train]\nseed = 9\n").unwrap();
        let c: Cfg = Layers::load(Some(&p), "train").unwrap().finish().unwrap();
        assert_eq!(c.seed, 9);
    }
}

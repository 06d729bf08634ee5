//! Run files: a flat TOML table of protocol keys plus every `RunConfig` key.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `name` | `"run"` | directory name under the output root |
//! | `tree` | bundled benchmark tree | tree JSON, relative to the run file |
//! | `classes` | bundled benchmark classes | class list, relative to the run file |
//! | `base` | `0` | classes in the first task (`0`: same as `increment`) |
//! | `increment` | `5` | classes per later task |
//! | `seeds` | `[seed]` | one run per seed |
//!
//! `tree` and `classes` also accept `"bundled:benchmark"`, the value echoed
//! for the bundled fixtures. Hyperparameters default to `RunConfig::benchmark()`.

use std::path::{Path, PathBuf};

use hasten::cil_harness::BENCHMARK_TREE_JSON;
use hasten::cil_harness::{benchmark_classes, benchmark_tree, RunConfig};
use hasten::semantic_tree::{
    check_coverage, parse_class_list, parse_tree, structural_errors, SemanticTree,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

const PROTOCOL_KEYS: [&str; 6] = ["name", "tree", "classes", "base", "increment", "seeds"];

/// Bundled-fixture marker used in echoes when no path is given.
pub const BUNDLED: &str = "bundled:benchmark";

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub name: String,
    pub tree: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub base: usize,
    pub increment: usize,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
}

impl Default for RunFile {
    fn default() -> Self {
        let config = RunConfig::benchmark();
        Self {
            name: "run".into(),
            tree: None,
            classes: None,
            base: 0,
            increment: 5,
            seeds: vec![config.seed],
            config,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn string_key(table: &toml::Table, key: &str) -> CliResult<Option<String>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(bad(format!("`{key}` must be a string"))),
    }
}

fn count_key(table: &toml::Table, key: &str) -> CliResult<Option<usize>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(_) => Err(bad(format!("`{key}` must be a non-negative integer"))),
    }
}

impl RunFile {
    /// Parses run-file text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| bad(format!("{e}")))?;
        let defaults = Self::default();
        let name = string_key(&table, "name")?.unwrap_or(defaults.name);
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(bad(format!(
                "`name` must be a plain directory name, got {name:?}"
            )));
        }
        let path = |key: &str| -> CliResult<Option<PathBuf>> {
            Ok(string_key(&table, key)?
                .filter(|p| p != BUNDLED)
                .map(|p| base_dir.join(p)))
        };
        let (tree, classes) = (path("tree")?, path("classes")?);
        let base = count_key(&table, "base")?.unwrap_or(defaults.base);
        let increment = count_key(&table, "increment")?.unwrap_or(defaults.increment);
        let seeds = match table.get("seeds") {
            None => None,
            Some(toml::Value::Array(items)) => Some(
                items
                    .iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                        _ => Err(bad("`seeds` must hold non-negative integers")),
                    })
                    .collect::<CliResult<Vec<u64>>>()?,
            ),
            Some(_) => Err(bad("`seeds` must be an array"))?,
        };
        for key in PROTOCOL_KEYS {
            table.remove(key);
        }
        if seeds.is_some() && table.contains_key("seed") {
            return Err(bad("give either `seed` or `seeds`, not both"));
        }
        let mut merged = toml::Table::try_from(RunConfig::benchmark())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        merged.extend(table);
        let config: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
        config.validate()?;
        let seeds = seeds.unwrap_or_else(|| vec![config.seed]);
        if seeds.is_empty() {
            return Err(bad("`seeds` is empty"));
        }
        if increment == 0 {
            return Err(bad("`increment` must be positive"));
        }
        Ok(Self {
            name,
            tree,
            classes,
            base,
            increment,
            seeds,
            config,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn split_label(&self) -> String {
        format!("B{} Inc{}", self.base, self.increment)
    }

    /// Tree text, its SHA-256 and the parsed tree, re-marked with the class list.
    pub fn inputs(&self) -> CliResult<Inputs> {
        let tree_text = match &self.tree {
            Some(p) => read_input(p)?,
            None => BENCHMARK_TREE_JSON.to_string(),
        };
        let classes = match &self.classes {
            Some(p) => parse_class_list(&read_input(p)?)?,
            None => benchmark_classes(),
        };
        let tree = if self.tree.is_some() {
            let errors = structural_errors(&tree_text);
            if let Some(first) = errors.first() {
                return Err(CliError::Structural(first.to_string()));
            }
            parse_tree(&tree_text).map_err(|e| CliError::Structural(e.to_string()))?
        } else {
            benchmark_tree()
        };
        let coverage = check_coverage(&tree, &classes);
        if !coverage.missing_real.is_empty() {
            return Err(CliError::Coverage(format!(
                "classes not in tree: {}",
                coverage.missing_real.join(", ")
            )));
        }
        Ok(Inputs {
            tree_sha256: sha256_hex(tree_text.as_bytes()),
            tree: tree.with_real_classes(&classes),
            classes,
        })
    }

    /// Full echo for one seed, every hyperparameter included.
    pub fn echo(&self, seed: u64) -> Echo {
        let show = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or_else(|| BUNDLED.to_string(), |p| p.display().to_string())
        };
        Echo {
            name: self.name.clone(),
            tree: show(&self.tree),
            classes: show(&self.classes),
            base: self.base,
            increment: self.increment,
            config: RunConfig {
                seed,
                ..self.config.clone()
            },
        }
    }
}

fn read_input(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub struct Inputs {
    pub tree: SemanticTree,
    pub classes: Vec<String>,
    pub tree_sha256: String,
}

/// Resolved settings of one seed's run.
#[derive(Debug, Clone, Serialize)]
pub struct Echo {
    pub name: String,
    pub tree: String,
    pub classes: String,
    pub base: usize,
    pub increment: usize,
    #[serde(flatten)]
    pub config: RunConfig,
}

impl Echo {
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Runtime(e.to_string()))
    }
}

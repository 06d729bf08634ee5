//! Bundled fixtures: a 20-class, three-level benchmark tree with its class
//! list and description pool, and the four-breed pets tree.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::semantic_tree::{parse_class_list, parse_tree, SemanticTree};

pub const BENCHMARK_TREE_JSON: &str = include_str!("../../fixtures/benchmark_tree.json");
pub const BENCHMARK_CLASSES_JSON: &str = include_str!("../../fixtures/benchmark_classes.json");
pub const BENCHMARK_POOL_JSON: &str = include_str!("../../fixtures/benchmark_pool.json");
pub const PETS_TREE_JSON: &str = include_str!("../../fixtures/pets_tree.json");

/// Base classes and increment of the bundled split (`B0 Inc5`).
pub const BENCHMARK_SPLIT: (usize, usize) = (0, 5);
pub const BENCHMARK_DIM: usize = 32;

pub fn benchmark_tree() -> SemanticTree {
    parse_tree(BENCHMARK_TREE_JSON).expect("bundled tree is valid")
}

pub fn benchmark_classes() -> Vec<String> {
    parse_class_list(BENCHMARK_CLASSES_JSON).expect("bundled class list is valid")
}

pub fn benchmark_pool() -> BTreeMap<String, Vec<String>> {
    parse_pool(BENCHMARK_POOL_JSON).expect("bundled pool is valid")
}

pub fn pets_tree() -> SemanticTree {
    parse_tree(PETS_TREE_JSON).expect("bundled tree is valid")
}

/// `{class: [name, description, ...]}` with descriptions ordered specific to generic.
pub fn parse_pool(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (crate::semantic_tree::normalize_name(&k), v))
        .collect())
}

//! Geodesic walks from an image embedding to the root, labelled by the
//! nearest text in a pool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Learner;
use crate::error::{contract, Result};
use crate::hyp_geom::{geodesic_distance, geodesic_interpolate, LorentzPoint};
use crate::semantic_tree::{SemanticTree, ROOT};
use crate::synthetic_encoder::SyntheticWorld;

/// One retrievable text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub label: String,
    /// Frozen text feature.
    pub feature: Vec<f64>,
    /// Tree nodes use the cached anchor when one exists.
    pub tree_node: bool,
}

/// Builds a text pool. The root is always present. With `with_tree_nodes`
/// every tree node name joins; each `descriptions` entry `[name, d1, d2, ...]`
/// contributes the class name and its descriptions, specific to generic.
pub fn build_pool(
    tree: &SemanticTree,
    world: &SyntheticWorld,
    descriptions: Option<&BTreeMap<String, Vec<String>>>,
    with_tree_nodes: bool,
) -> Result<Vec<PoolEntry>> {
    let mut pool = Vec::new();
    let push_node = |pool: &mut Vec<PoolEntry>, name: &str| -> Result<()> {
        if !pool
            .iter()
            .any(|e: &PoolEntry| e.tree_node && e.label == name)
        {
            pool.push(PoolEntry {
                label: name.to_string(),
                feature: world.text_embedding(name)?,
                tree_node: true,
            });
        }
        Ok(())
    };
    push_node(&mut pool, ROOT)?;
    if with_tree_nodes {
        for node in tree.nodes() {
            push_node(&mut pool, &node.name)?;
        }
    }
    if let Some(map) = descriptions {
        for (class, texts) in map {
            tree.require(class)?;
            push_node(&mut pool, class)?;
            let extra = texts.len().saturating_sub(1);
            for (rank, text) in texts.iter().skip(1).enumerate() {
                pool.push(PoolEntry {
                    label: text.clone(),
                    feature: world.description_embedding(class, rank, extra, text)?,
                    tree_node: false,
                });
            }
        }
    }
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalStep {
    pub t: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    /// Nearest labels with consecutive duplicates collapsed.
    pub path: Vec<TraversalStep>,
    /// Distance to the root at every raw point.
    pub radii: Vec<f64>,
}

impl Traversal {
    pub fn first_label(&self) -> Option<&str> {
        self.path.first().map(|s| s.label.as_str())
    }

    pub fn last_label(&self) -> Option<&str> {
        self.path.last().map(|s| s.label.as_str())
    }

    /// Largest increase of the radius between consecutive raw points.
    pub fn max_radius_increase(&self) -> f64 {
        self.radii
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Embeds the pool once for repeated traversals.
pub fn embed_pool(
    learner: &Learner,
    world: &SyntheticWorld,
    pool: &[PoolEntry],
    c: f64,
) -> Result<Vec<LorentzPoint>> {
    if pool.is_empty() {
        return Err(contract("traversal pool is empty"));
    }
    pool.iter()
        .map(|e| {
            if e.tree_node {
                learner.node_point(world, &e.label, c)
            } else {
                let z = learner
                    .model
                    .aggregate(&e.feature, crate::anchoring_model::Modality::Text)?;
                learner.model.tp_forward(&z, c)
            }
        })
        .collect()
}

/// Walks `steps` equally spaced points from the image to the root.
pub fn traverse(
    learner: &Learner,
    world: &SyntheticWorld,
    image_feature: &[f64],
    pool: &[PoolEntry],
    steps: usize,
    c: f64,
) -> Result<Traversal> {
    let points = embed_pool(learner, world, pool, c)?;
    traverse_embedded(learner, image_feature, pool, &points, steps, c)
}

pub fn traverse_embedded(
    learner: &Learner,
    image_feature: &[f64],
    pool: &[PoolEntry],
    points: &[LorentzPoint],
    steps: usize,
    c: f64,
) -> Result<Traversal> {
    if pool.is_empty() || pool.len() != points.len() {
        return Err(contract("traversal pool is empty or not embedded"));
    }
    if steps < 2 {
        return Err(contract("a traversal needs at least 2 steps"));
    }
    let start = learner.image_point(image_feature, c)?;
    let root = LorentzPoint::origin(start.dim(), c)?;
    let mut path: Vec<TraversalStep> = Vec::new();
    let mut radii = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = i as f64 / (steps - 1) as f64;
        let p = geodesic_interpolate(&start, &root, t)?;
        radii.push(geodesic_distance(&p, &root)?);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, q) in points.iter().enumerate() {
            let d = geodesic_distance(&p, q)?;
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        let label = &pool[best].label;
        if path.last().map(|s| &s.label) != Some(label) {
            path.push(TraversalStep {
                t,
                label: label.clone(),
            });
        }
    }
    Ok(Traversal { path, radii })
}

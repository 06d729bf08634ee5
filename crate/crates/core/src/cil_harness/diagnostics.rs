//! Post-training diagnostics: tree-embedding quality, embedding dumps,
//! checkpoints and the single-task tree fit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{lorentz_scope, train_task_with, Learner, RunConfig, Schedule, TaskLog, TRAIN_IMAGES};
use crate::error::{contract, Error, Result};
use crate::hyp_geom::{aperture, exterior_angle, LorentzPoint};
use crate::losses::{total_loss, Batch};
use crate::semantic_tree::{NodeKind, SemanticTree, TaskStream};
use crate::synthetic_encoder::SyntheticWorld;

/// Hyperbolic embedding of every tree node under the current learner.
pub fn node_embeddings(
    learner: &Learner,
    tree: &SemanticTree,
    world: &SyntheticWorld,
    c: f64,
) -> Result<BTreeMap<String, LorentzPoint>> {
    tree.nodes()
        .iter()
        .map(|n| Ok((n.name.clone(), learner.node_point(world, &n.name, c)?)))
        .collect()
}

/// Fraction of tree edges, among those with both ends embedded, whose child
/// leaves the parent's cone. Edges out of the origin always count as satisfied.
pub fn cone_violation_rate(
    tree: &SemanticTree,
    embeddings: &BTreeMap<String, LorentzPoint>,
    kappa: f64,
) -> Result<f64> {
    let mut checked = 0usize;
    let mut violated = 0usize;
    for (parent, child) in tree.edge_names() {
        let (Some(p), Some(q)) = (embeddings.get(&parent), embeddings.get(&child)) else {
            continue;
        };
        checked += 1;
        if p.is_origin() {
            continue;
        }
        if exterior_angle(p, q)? > aperture(p, kappa)? {
            violated += 1;
        }
    }
    if checked == 0 {
        return Err(contract("no embedded edges to check"));
    }
    Ok(violated as f64 / checked as f64)
}

/// Mean spatial norm per depth, for depths with at least one embedded node.
pub fn depth_radius_profile(
    tree: &SemanticTree,
    embeddings: &BTreeMap<String, LorentzPoint>,
) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for node in tree.nodes() {
        if let Some(p) = embeddings.get(&node.name) {
            let e = acc.entry(node.depth).or_default();
            e.0 += p.spatial_norm();
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(d, (s, n))| (d, s / n as f64))
        .collect()
}

/// Whether mean radius strictly grows with depth.
pub fn radius_increases_with_depth(profile: &[(usize, f64)]) -> bool {
    profile.windows(2).all(|w| w[1].1 > w[0].1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub name: String,
    pub kind: NodeKind,
    pub depth: usize,
    pub spatial: Vec<f64>,
}

/// One record per tree node in breadth-first order.
pub fn embedding_dump(
    learner: &Learner,
    tree: &SemanticTree,
    world: &SyntheticWorld,
    c: f64,
) -> Result<Vec<EmbeddingRecord>> {
    tree.nodes()
        .iter()
        .map(|n| {
            Ok(EmbeddingRecord {
                name: n.name.clone(),
                kind: n.kind,
                depth: n.depth,
                spatial: learner.node_point(world, &n.name, c)?.into_spatial(),
            })
        })
        .collect()
}

/// Outcome of training all real classes of a tree as a single task.
#[derive(Debug, Clone)]
pub struct TreeFit {
    pub log: TaskLog,
    pub learner: Learner,
    pub cone_violation: f64,
    pub depth_profile: Vec<(usize, f64)>,
    /// Total loss on the probe batch before and after training.
    pub probe_loss: (f64, f64),
}

impl TreeFit {
    /// `1 − after/before` of the probe loss.
    pub fn loss_drop(&self) -> f64 {
        let (before, after) = self.probe_loss;
        if before > 0.0 {
            1.0 - after / before
        } else {
            0.0
        }
    }
}

/// Total loss over one training image per class, so the batch holds no
/// duplicate labels.
fn probe_loss(
    learner: &Learner,
    tree: &SemanticTree,
    world: &SyntheticWorld,
    classes: &[String],
    cfg: &RunConfig,
) -> Result<f64> {
    let (scope, label) = lorentz_scope(learner, tree, world, classes, cfg)?;
    let mut batch = Batch::default();
    for c in classes {
        batch
            .features
            .extend(world.sample_images(c, 1, TRAIN_IMAGES)?);
        batch.labels.push(label[c]);
    }
    Ok(
        total_loss(&batch, &learner.model, &scope, &cfg.loss_config())?
            .breakdown
            .total,
    )
}

pub fn fit_tree(
    tree: &SemanticTree,
    world: &SyntheticWorld,
    cfg: &RunConfig,
    steps: usize,
) -> Result<TreeFit> {
    let mut learner = Learner::new(cfg)?;
    let classes = tree.real_classes();
    let mut initial = learner.clone();
    initial.model.begin_task();
    let before = probe_loss(&initial, tree, world, &classes, cfg)?;
    let (log, _) = train_task_with(
        &mut learner,
        tree,
        world,
        &classes,
        cfg,
        Schedule::Steps(steps),
    )?;
    let after = probe_loss(&learner, tree, world, &classes, cfg)?;
    let emb = node_embeddings(&learner, tree, world, cfg.curvature)?;
    Ok(TreeFit {
        log,
        probe_loss: (before, after),
        cone_violation: cone_violation_rate(tree, &emb, cfg.kappa)?,
        depth_profile: depth_radius_profile(tree, &emb),
        learner,
    })
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume inspection of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    /// Canonical JSON of the tree.
    pub tree: String,
    pub stream: TaskStream,
    pub learner: Learner,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }
}

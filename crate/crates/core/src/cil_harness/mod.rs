//! Incremental protocol: per-task training with cached virtual anchors and
//! Gaussian replay, fused evaluation, accuracy bookkeeping, ablations and
//! geodesic traversals.

mod benchmark;
mod diagnostics;
mod traversal;

pub use benchmark::*;
pub use diagnostics::*;
pub use traversal::*;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::anchoring_model::{AnchoringModel, Modality};
use crate::error::{contract, Error, Result};
use crate::hyp_geom::{geodesic_distance, LorentzPoint};
use crate::losses::{total_loss, Batch, HierarchyScope, LossBreakdown, LossConfig, TextSource};
use crate::null_space::NullSpaceState;
use crate::rng::{self, derive_seed};
use crate::semantic_tree::{NodeId, SemanticTree, TaskStream, ROOT};
use crate::synthetic_encoder::{build_world, fit_stats, replay_sample, ClassStats, SyntheticWorld};

const MODEL_STREAM: u64 = 0x40;
const SHUFFLE_STREAM: u64 = 0x41;
const REPLAY_STREAM: u64 = 0x42;
/// Image sub-streams passed to [`SyntheticWorld::sample_images`].
pub const TRAIN_IMAGES: u64 = 1;
pub const TEST_IMAGES: u64 = 2;

/// Every hyperparameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub curvature: f64,
    pub kappa: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step size, cosine-annealed to zero within each task.
    pub lr: f64,
    pub energy_threshold: f64,
    pub refresh_period: usize,
    pub dim: usize,
    pub seed: u64,
    pub use_hierarchy: bool,
    pub use_projection: bool,
    pub use_fusion: bool,
    pub image_hier_ancestors: bool,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Replay draws per past class in every batch.
    pub replay_per_class: usize,
    pub noise_scale: f64,
    pub inheritance_weight: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curvature: 1.0,
            kappa: 0.1,
            delta: 0.1,
            lambda1: 0.5,
            lambda2: 0.1,
            beta: 0.1,
            tau: 0.07,
            epochs: 10,
            batch_size: 64,
            lr: 0.001,
            energy_threshold: 0.95,
            refresh_period: 100,
            dim: BENCHMARK_DIM,
            seed: 1993,
            use_hierarchy: true,
            use_projection: true,
            use_fusion: true,
            image_hier_ancestors: false,
            train_per_class: 100,
            test_per_class: 50,
            replay_per_class: 2,
            noise_scale: 0.1,
            inheritance_weight: 0.7,
        }
    }
}

impl RunConfig {
    /// Settings of the bundled benchmark: the defaults with a step size and
    /// schedule long enough for plain gradient descent to train.
    pub fn benchmark() -> Self {
        Self {
            lr: 0.1,
            epochs: 30,
            ..Self::default()
        }
    }

    /// Full-batch settings for fitting a small tree in `dim` dimensions.
    pub fn tree_fit(dim: usize) -> Self {
        Self {
            dim,
            lr: 0.1,
            train_per_class: 2,
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("curvature", self.curvature),
            ("kappa", self.kappa),
            ("delta", self.delta),
            ("tau", self.tau),
            ("lr", self.lr),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("beta", self.beta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("refresh_period", self.refresh_period),
            ("test_per_class", self.test_per_class),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.train_per_class < 2 {
            return Err(Error::Config("train_per_class must be at least 2".into()));
        }
        if !(self.energy_threshold > 0.0 && self.energy_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "energy_threshold must lie in (0, 1], got {}",
                self.energy_threshold
            )));
        }
        if self.dim < 8 {
            return Err(Error::Config(format!(
                "dim must be at least 8, got {}",
                self.dim
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::Config(format!(
                "noise_scale must be non-negative, got {}",
                self.noise_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.inheritance_weight) {
            return Err(Error::Config(format!(
                "inheritance_weight must lie in [0, 1], got {}",
                self.inheritance_weight
            )));
        }
        Ok(())
    }

    /// Loss weights with the hierarchy terms switched off when the ablation asks.
    pub fn loss_config(&self) -> LossConfig {
        let (lambda1, lambda2) = if self.use_hierarchy {
            (self.lambda1, self.lambda2)
        } else {
            (0.0, 0.0)
        };
        LossConfig {
            curvature: self.curvature,
            kappa: self.kappa,
            delta: self.delta,
            lambda1,
            lambda2,
            beta: self.beta,
            tau: self.tau,
            image_hier_ancestors: self.image_hier_ancestors,
        }
    }

    /// The synthetic world this configuration describes.
    pub fn world(&self, tree: &SemanticTree) -> Result<SyntheticWorld> {
        build_world(
            tree,
            self.dim,
            self.seed,
            self.inheritance_weight,
            self.noise_scale,
        )
    }
}

/// Frozen hyperbolic embeddings of virtual nodes, written once at task boundaries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorCache {
    entries: BTreeMap<String, LorentzPoint>,
}

impl AnchorCache {
    /// Inserts a new entry; an existing entry is never replaced. Returns
    /// whether the entry was new.
    pub fn insert(&mut self, name: &str, point: LorentzPoint) -> bool {
        if self.entries.contains_key(name) {
            return false;
        }
        self.entries.insert(name.to_string(), point);
        true
    }

    pub fn get(&self, name: &str) -> Option<&LorentzPoint> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Accuracy bookkeeping over the stages of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsMatrix {
    /// `acc[b][t]`: accuracy after stage `b` on the classes of task `t ≤ b`.
    pub acc: Vec<Vec<f64>>,
    /// `A_b`: accuracy over all classes seen by stage `b`.
    pub stage_accuracy: Vec<f64>,
}

impl MetricsMatrix {
    pub fn push(&mut self, per_task: Vec<f64>, overall: f64) {
        self.acc.push(per_task);
        self.stage_accuracy.push(overall);
    }

    pub fn num_stages(&self) -> usize {
        self.stage_accuracy.len()
    }

    /// `Ā`, the mean of `A_b` over stages.
    pub fn mean_accuracy(&self) -> f64 {
        if self.stage_accuracy.is_empty() {
            return 0.0;
        }
        self.stage_accuracy.iter().sum::<f64>() / self.stage_accuracy.len() as f64
    }

    /// `A_B`, the last stage's accuracy.
    pub fn final_accuracy(&self) -> f64 {
        self.stage_accuracy.last().copied().unwrap_or(0.0)
    }
}

/// Everything a run carries between tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Learner {
    pub model: AnchoringModel,
    pub null_space: NullSpaceState,
    pub cache: AnchorCache,
    /// Per-class image statistics, used for replay and for the cosine head.
    pub stats: BTreeMap<String, ClassStats>,
    /// Classes of each trained task, in order.
    pub tasks: Vec<Vec<String>>,
}

impl Learner {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model: AnchoringModel::new(cfg.dim, derive_seed(&[cfg.seed, MODEL_STREAM]))?,
            null_space: NullSpaceState::new(cfg.dim, cfg.energy_threshold, cfg.refresh_period)?,
            cache: AnchorCache::default(),
            stats: BTreeMap::new(),
            tasks: Vec::new(),
        })
    }

    /// Seen classes in training order; a class's position is its index for tie-breaking.
    pub fn seen_classes(&self) -> Vec<String> {
        self.tasks.iter().flatten().cloned().collect()
    }

    /// Hyperbolic embedding of a tree node: the origin for the root, the cached
    /// point for cached virtual nodes, the live text pathway otherwise.
    pub fn node_point(&self, world: &SyntheticWorld, name: &str, c: f64) -> Result<LorentzPoint> {
        if name == ROOT {
            return LorentzPoint::origin(self.model.dim(), c);
        }
        if let Some(p) = self.cache.get(name) {
            return Ok(p.clone());
        }
        self.text_point(world, name, c)
    }

    /// Live text pathway: aggregate the frozen text feature, then map.
    pub fn text_point(&self, world: &SyntheticWorld, name: &str, c: f64) -> Result<LorentzPoint> {
        let z = self
            .model
            .aggregate(&world.text_embedding(name)?, Modality::Text)?;
        self.model.tp_forward(&z, c)
    }

    pub fn image_point(&self, feature: &[f64], c: f64) -> Result<LorentzPoint> {
        let z = self.model.aggregate(feature, Modality::Visual)?;
        self.model.tp_forward(&z, c)
    }
}

/// Training trace of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task: usize,
    pub classes: Vec<String>,
    pub steps: usize,
    /// Total loss at every step.
    pub losses: Vec<f64>,
    pub last_breakdown: Option<LossBreakdown>,
    /// Virtual nodes newly cached after the task.
    pub cached: Vec<String>,
    pub rank_kept: usize,
}

/// How long to train one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Epochs(usize),
    Steps(usize),
}

fn lorentz_scope(
    learner: &Learner,
    tree: &SemanticTree,
    world: &SyntheticWorld,
    classes: &[String],
    cfg: &RunConfig,
) -> Result<(HierarchyScope, BTreeMap<String, usize>)> {
    let mut label = BTreeMap::new();
    let mut scope = HierarchyScope::default();
    if !cfg.use_hierarchy {
        for (k, name) in classes.iter().enumerate() {
            scope
                .nodes
                .push(TextSource::Live(world.text_embedding(name)?));
            scope.parents.push(None);
            label.insert(name.clone(), k);
        }
        return Ok((scope, label));
    }
    let mut ids: Vec<NodeId> = Vec::new();
    for name in classes {
        let id = tree.require(name)?;
        ids.push(id);
        ids.extend(tree.ancestors(id));
    }
    ids.sort_unstable();
    ids.dedup();
    let position: BTreeMap<NodeId, usize> =
        ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    for &id in &ids {
        let name = &tree.node(id).name;
        let source = if id == tree.root() {
            TextSource::Fixed(LorentzPoint::origin(cfg.dim, cfg.curvature)?)
        } else if let Some(p) = learner.cache.get(name) {
            TextSource::Fixed(p.clone())
        } else {
            TextSource::Live(world.text_embedding(name)?)
        };
        scope.nodes.push(source);
        let parent = tree.parent(id).map(|p| position[&p]);
        if let Some(p) = parent {
            scope.edges.push((p, position[&id]));
        }
        scope.parents.push(parent);
        label.insert(name.clone(), position[&id]);
    }
    Ok((scope, label))
}

/// Trains one task in place. See [`train_task_with`].
pub fn train_task(
    learner: &mut Learner,
    tree: &SemanticTree,
    world: &SyntheticWorld,
    classes: &[String],
    cfg: &RunConfig,
) -> Result<TaskLog> {
    train_task_with(
        learner,
        tree,
        world,
        classes,
        cfg,
        Schedule::Epochs(cfg.epochs),
    )
    .map(|(log, _)| log)
}

/// Trains one task and returns its log together with the pre-mapper
/// features folded into the covariance afterwards.
pub fn train_task_with(
    learner: &mut Learner,
    tree: &SemanticTree,
    world: &SyntheticWorld,
    classes: &[String],
    cfg: &RunConfig,
    schedule: Schedule,
) -> Result<(TaskLog, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if classes.is_empty() {
        return Err(contract("a task needs at least one class"));
    }
    let past = learner.seen_classes();
    let past_set: HashSet<&String> = past.iter().collect();
    let mut current = HashSet::new();
    for c in classes {
        if past_set.contains(c) || !current.insert(c) {
            return Err(contract(format!("class `{c}` was already trained")));
        }
        let id = tree.require(c)?;
        if tree.is_virtual(id) {
            return Err(contract(format!(
                "`{c}` is a virtual node and cannot be a task class"
            )));
        }
    }
    let task = learner.tasks.len();
    learner.model.begin_task();

    let mut items: Vec<(Vec<f64>, &String)> = Vec::new();
    for c in classes {
        let images = world.sample_images(c, cfg.train_per_class, TRAIN_IMAGES)?;
        learner.stats.insert(c.clone(), fit_stats(&images, c)?);
        items.extend(images.into_iter().map(|x| (x, c)));
    }

    let mut all: Vec<String> = past.clone();
    all.extend(classes.iter().cloned());
    let (scope, label) = lorentz_scope(learner, tree, world, &all, cfg)?;
    let loss_cfg = cfg.loss_config();

    let per_epoch = items.len().div_ceil(cfg.batch_size);
    let total_steps = match schedule {
        Schedule::Epochs(e) => e * per_epoch,
        Schedule::Steps(s) => s,
    };
    let mut losses = Vec::with_capacity(total_steps);
    let mut last = None;
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut step = 0;
    'outer: for epoch in 0.. {
        rng::shuffle(
            &mut order,
            &mut rng::stream(derive_seed(&[cfg.seed, SHUFFLE_STREAM, task as u64, epoch])),
        );
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if step >= total_steps {
                break 'outer;
            }
            let mut batch = Batch::default();
            for &i in chunk {
                batch.features.push(items[i].0.clone());
                batch.labels.push(label[items[i].1]);
            }
            if cfg.replay_per_class > 0 {
                for (k, p) in past.iter().enumerate() {
                    let seed = derive_seed(&[
                        cfg.seed,
                        REPLAY_STREAM,
                        task as u64,
                        epoch,
                        b as u64,
                        k as u64,
                    ]);
                    for x in replay_sample(&learner.stats[p], cfg.replay_per_class, seed) {
                        batch.features.push(x);
                        batch.labels.push(label[p]);
                    }
                }
            }
            let out = total_loss(&batch, &learner.model, &scope, &loss_cfg)?;
            let project = cfg.use_projection && learner.null_space.total_count() > 0;
            let mut grads = out.grads;
            if project {
                grads.tp = learner.null_space.project_gradient(&grads.tp)?;
            }
            let progress = step as f64 / total_steps as f64;
            let lr = 0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * progress).cos());
            learner.model.descend(&grads, lr)?;
            learner.null_space.step()?;
            losses.push(out.breakdown.total);
            last = Some(out.breakdown);
            step += 1;
        }
        if per_epoch == 0 {
            break;
        }
    }

    // Fold this task's pre-mapper features into the covariance.
    let mut features = Vec::new();
    for (x, _) in &items {
        features.push(learner.model.aggregate(x, Modality::Visual)?);
    }
    let ancestors = tree.ancestor_ids(
        &classes
            .iter()
            .map(|c| tree.require(c))
            .collect::<Result<Vec<_>>>()?,
    );
    let fresh: Vec<String> = ancestors
        .iter()
        .map(|&id| tree.node(id).name.clone())
        .filter(|n| !learner.cache.contains(n))
        .collect();
    for name in classes
        .iter()
        .chain(fresh.iter().filter(|n| n.as_str() != ROOT))
    {
        features.push(
            learner
                .model
                .aggregate(&world.text_embedding(name)?, Modality::Text)?,
        );
    }
    learner.null_space.update_covariance(&features)?;
    learner.null_space.recompute_basis()?;

    let mut cached = Vec::new();
    if cfg.use_hierarchy {
        for name in &fresh {
            let point = learner.node_point(world, name, cfg.curvature)?;
            if learner.cache.insert(name, point) {
                cached.push(name.clone());
            }
        }
    }
    learner.tasks.push(classes.to_vec());
    log::debug!(
        "task {task}: {} steps, loss {:.4} -> {:.4}, rank {}",
        losses.len(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN),
        learner.null_space.rank_kept()
    );
    Ok((
        TaskLog {
            task,
            classes: classes.to_vec(),
            steps: losses.len(),
            losses,
            last_breakdown: last,
            cached,
            rank_kept: learner.null_space.rank_kept(),
        },
        features,
    ))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = k;
        }
    }
    best
}

/// `P_orig + P_hyp` (or `P_hyp` alone without fusion) for one image.
pub fn class_scores(
    feature: &[f64],
    image: &LorentzPoint,
    class_points: &[LorentzPoint],
    class_means: &[&[f64]],
    tau: f64,
    use_fusion: bool,
) -> Result<Vec<f64>> {
    let hyp: Vec<f64> = class_points
        .iter()
        .map(|t| geodesic_distance(image, t).map(|d| -d / tau))
        .collect::<Result<_>>()?;
    let mut scores = softmax(&hyp);
    if use_fusion {
        let orig: Vec<f64> = class_means
            .iter()
            .map(|m| cosine(feature, m) / tau)
            .collect();
        for (s, p) in scores.iter_mut().zip(softmax(&orig)) {
            *s += p;
        }
    }
    Ok(scores)
}

/// Accuracy on the held-out stream per trained task and overall.
pub fn evaluate(
    learner: &Learner,
    world: &SyntheticWorld,
    cfg: &RunConfig,
) -> Result<(Vec<f64>, f64)> {
    let seen = learner.seen_classes();
    if seen.is_empty() {
        return Err(contract("evaluation needs at least one trained task"));
    }
    let c = cfg.curvature;
    let points = seen
        .iter()
        .map(|n| learner.text_point(world, n, c))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<&[f64]> = seen
        .iter()
        .map(|n| learner.stats[n].mean.as_slice())
        .collect();
    let mut per_task = Vec::with_capacity(learner.tasks.len());
    let (mut hits, mut total) = (0usize, 0usize);
    let mut offset = 0;
    for classes in &learner.tasks {
        let mut task_hits = 0usize;
        let mut task_total = 0usize;
        for (k, name) in classes.iter().enumerate() {
            for x in world.sample_images(name, cfg.test_per_class, TEST_IMAGES)? {
                let z = learner.image_point(&x, c)?;
                let scores = class_scores(&x, &z, &points, &means, cfg.tau, cfg.use_fusion)?;
                task_hits += usize::from(argmax(&scores) == offset + k);
                task_total += 1;
            }
        }
        offset += classes.len();
        per_task.push(task_hits as f64 / task_total as f64);
        hits += task_hits;
        total += task_total;
    }
    Ok((per_task, hits as f64 / total as f64))
}

/// Result of a full protocol run plus the quantities the diagnostics need.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: MetricsMatrix,
    pub learner: Learner,
    pub logs: Vec<TaskLog>,
    /// Mean displacement of first-task class means in the aggregated
    /// pre-mapper visual space, between stage 1 and the final stage.
    pub first_task_drift: f64,
    /// Per stage `b ≥ 2`: `||X_old·(W_after − W_before)||_F / ||X_old||_F`
    /// for the mapper, over the features folded into the covariance so far.
    pub mapper_shift: Vec<f64>,
}

fn check_stream(tree: &SemanticTree, stream: &TaskStream) -> Result<()> {
    if stream.tasks.is_empty() {
        return Err(contract("task stream is empty"));
    }
    for c in stream.tasks.iter().flatten() {
        let id = tree.require(c)?;
        if tree.is_virtual(id) {
            return Err(contract(format!("stream class `{c}` is virtual")));
        }
    }
    Ok(())
}

pub fn run_protocol(
    tree: &SemanticTree,
    world: &SyntheticWorld,
    stream: &TaskStream,
    cfg: &RunConfig,
) -> Result<MetricsMatrix> {
    run_protocol_detailed(tree, world, stream, cfg).map(|o| o.metrics)
}

pub fn run_protocol_detailed(
    tree: &SemanticTree,
    world: &SyntheticWorld,
    stream: &TaskStream,
    cfg: &RunConfig,
) -> Result<RunOutcome> {
    check_stream(tree, stream)?;
    let mut learner = Learner::new(cfg)?;
    let mut metrics = MetricsMatrix::default();
    let mut logs = Vec::new();
    let mut probe: Vec<Vec<f64>> = Vec::new();
    let mut mapper_shift = Vec::new();
    let mut first_means: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (b, classes) in stream.tasks.iter().enumerate() {
        let before = learner.model.tp().weight().clone();
        let (log, features) = train_task_with(
            &mut learner,
            tree,
            world,
            classes,
            cfg,
            Schedule::Epochs(cfg.epochs),
        )?;
        if b > 0 {
            let delta = learner.model.tp().weight() - &before;
            let (mut num, mut den) = (0.0, 0.0);
            for x in &probe {
                let moved = crate::anchoring_model::apply_row(&delta, x);
                num += moved.iter().map(|v| v * v).sum::<f64>();
                den += x.iter().map(|v| v * v).sum::<f64>();
            }
            mapper_shift.push(if den > 0.0 { (num / den).sqrt() } else { 0.0 });
        }
        probe.extend(features);
        let (per_task, overall) = evaluate(&learner, world, cfg)?;
        metrics.push(per_task, overall);
        if b == 0 {
            for c in classes {
                let mu = learner.stats[c].mean.clone();
                let z = learner.model.aggregate(&mu, Modality::Visual)?;
                first_means.push((mu, z));
            }
        }
        logs.push(log);
    }
    let mut drift = 0.0;
    for (mu, z0) in &first_means {
        let z = learner.model.aggregate(mu, Modality::Visual)?;
        drift += z
            .iter()
            .zip(z0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }
    let first_task_drift = drift / first_means.len() as f64;
    Ok(RunOutcome {
        metrics,
        learner,
        logs,
        first_task_drift,
        mapper_shift,
    })
}

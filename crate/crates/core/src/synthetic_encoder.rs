//! Deterministic stand-in for the frozen image and text encoders.
//!
//! Every tree node gets a unit direction. The root's is uniform on the
//! sphere; a child's is `normalize(w·parent + (1−w)·fresh)` for a fresh
//! uniform draw, so related classes share direction mass. Text embeddings
//! are the directions themselves and image features are
//! `direction + noise_scale·N(0, I)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::rng::{self, derive_seed};
use crate::semantic_tree::{NodeKind, SemanticTree};

const DIRECTION_STREAM: u64 = 0xD1;
const IMAGE_STREAM: u64 = 0x1A;
const REPLAY_STREAM: u64 = 0x2B;
const DESCRIPTION_STREAM: u64 = 0x3C;

/// Per-class Gaussian statistics with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_name: String,
    pub mean: Vec<f64>,
    pub diag_var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    dim: usize,
    seed: u64,
    noise_scale: f64,
    inheritance_weight: f64,
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    paths: Vec<Vec<usize>>,
    directions: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-12).then(|| v.into_iter().map(|x| x / n).collect())
}

/// Builds the direction table for every node of `tree`.
pub fn build_world(
    tree: &SemanticTree,
    dim: usize,
    seed: u64,
    inheritance_weight: f64,
    noise_scale: f64,
) -> Result<SyntheticWorld> {
    if dim < 8 {
        return Err(contract(format!(
            "world dimension must be at least 8, got {dim}"
        )));
    }
    if !(0.0..=1.0).contains(&inheritance_weight) {
        return Err(contract(format!(
            "inheritance weight {inheritance_weight} outside [0, 1]"
        )));
    }
    if !(noise_scale.is_finite() && noise_scale >= 0.0) {
        return Err(contract(format!(
            "noise scale must be non-negative, got {noise_scale}"
        )));
    }
    let mut stream = rng::stream(derive_seed(&[seed, DIRECTION_STREAM]));
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(tree.len());
    for id in 0..tree.len() {
        let dir = match tree.parent(id) {
            None => rng::unit_vec(&mut stream, dim),
            Some(p) => loop {
                let fresh = rng::unit_vec(&mut stream, dim);
                let mixed = directions[p]
                    .iter()
                    .zip(&fresh)
                    .map(|(a, b)| inheritance_weight * a + (1.0 - inheritance_weight) * b)
                    .collect();
                if let Some(d) = normalized(mixed) {
                    break d;
                }
            },
        };
        directions.push(dir);
    }
    let names: Vec<String> = tree.nodes().iter().map(|n| n.name.clone()).collect();
    let paths = (0..tree.len())
        .map(|id| {
            let mut path = vec![id];
            path.extend(tree.ancestors(id));
            path
        })
        .collect();
    Ok(SyntheticWorld {
        dim,
        seed,
        noise_scale,
        inheritance_weight,
        index: names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect(),
        kinds: tree.nodes().iter().map(|n| n.kind).collect(),
        names,
        paths,
        directions,
    })
}

impl SyntheticWorld {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn inheritance_weight(&self) -> f64 {
        self.inheritance_weight
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| contract(format!("unknown class `{name}`")))
    }

    /// The same world with a different image noise level.
    pub fn with_noise_scale(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    /// Frozen text feature of a node.
    pub fn text_embedding(&self, class_name: &str) -> Result<Vec<f64>> {
        Ok(self.directions[self.require(class_name)?].clone())
    }

    /// `count` image features of a real class from sub-stream `stream_seed`.
    pub fn sample_images(
        &self,
        class_name: &str,
        count: usize,
        stream_seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let id = self.require(class_name)?;
        if self.kinds[id] == NodeKind::Virtual {
            return Err(contract(format!(
                "`{class_name}` is virtual and has no images"
            )));
        }
        if count == 0 {
            return Err(contract("sample count must be positive"));
        }
        let mut stream = rng::stream(derive_seed(&[
            self.seed,
            IMAGE_STREAM,
            id as u64,
            stream_seed,
        ]));
        let dir = &self.directions[id];
        Ok((0..count)
            .map(|_| {
                let noise = rng::normal_vec(&mut stream, self.dim);
                dir.iter()
                    .zip(noise)
                    .map(|(d, z)| d + self.noise_scale * z)
                    .collect()
            })
            .collect())
    }

    /// Text feature for the `rank`-th of `total` descriptions of a class,
    /// ordered from specific (rank 0) to generic. Generic descriptions slide
    /// toward the directions of higher ancestors; each string adds a small
    /// deterministic jitter so distinct descriptions never coincide.
    pub fn description_embedding(
        &self,
        class_name: &str,
        rank: usize,
        total: usize,
        text: &str,
    ) -> Result<Vec<f64>> {
        let id = self.require(class_name)?;
        if total == 0 || rank >= total {
            return Err(contract(format!("description rank {rank} out of {total}")));
        }
        let path = &self.paths[id];
        // Never reaches the root itself: the last description stays one level below.
        let top = path.len().saturating_sub(2) as f64;
        let pos = top * (rank as f64 + 1.0) / total as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(path.len() - 1);
        let frac = pos - lo as f64;
        let mut stream = rng::stream(derive_seed(&[
            self.seed,
            DESCRIPTION_STREAM,
            text_key(text),
        ]));
        let jitter = rng::unit_vec(&mut stream, self.dim);
        let mixed = (0..self.dim)
            .map(|k| {
                (1.0 - frac) * self.directions[path[lo]][k]
                    + frac * self.directions[path[hi]][k]
                    + 0.05 * jitter[k]
            })
            .collect();
        normalized(mixed).ok_or_else(|| Error::Numeric("degenerate description direction".into()))
    }

    pub fn dump(&self) -> WorldDump {
        WorldDump {
            dim: self.dim,
            seed: self.seed,
            noise_scale: self.noise_scale,
            inheritance_weight: self.inheritance_weight,
            directions: self
                .names
                .iter()
                .zip(&self.directions)
                .map(|(n, d)| (n.clone(), d.clone()))
                .collect(),
        }
    }
}

/// FNV-1a over the UTF-8 bytes; a stable key for string-seeded streams.
fn text_key(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// World description for cross-implementation comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldDump {
    pub dim: usize,
    pub seed: u64,
    pub noise_scale: f64,
    pub inheritance_weight: f64,
    pub directions: Vec<(String, Vec<f64>)>,
}

/// Mean and unbiased per-coordinate variance.
pub fn fit_stats(samples: &[Vec<f64>], class_name: &str) -> Result<ClassStats> {
    if samples.len() < 2 {
        return Err(contract(format!(
            "need at least 2 samples to fit `{class_name}`"
        )));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(contract("samples have inconsistent dimensions"));
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for k in 0..dim {
            let d = s[k] - mean[k];
            var[k] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n - 1.0);
    Ok(ClassStats {
        class_name: class_name.to_string(),
        mean,
        diag_var: var,
        count: samples.len(),
    })
}

/// Gaussian draws from `N(mean, diag(diag_var))`.
pub fn replay_sample(stats: &ClassStats, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut stream = rng::stream(derive_seed(&[REPLAY_STREAM, seed]));
    let std: Vec<f64> = stats.diag_var.iter().map(|v| v.max(0.0).sqrt()).collect();
    (0..count)
        .map(|_| {
            let z = rng::normal_vec(&mut stream, stats.mean.len());
            stats
                .mean
                .iter()
                .zip(&std)
                .zip(z)
                .map(|((m, s), z)| m + s * z)
                .collect()
        })
        .collect()
}

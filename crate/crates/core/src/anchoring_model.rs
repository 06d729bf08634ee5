//! Trainable parameters: per-task hierarchy modules and the shared mapper.
//!
//! All maps act on row vectors, `y = x·W`, so a weight's rows index input
//! coordinates. The null-space projector left-multiplies the mapper's
//! gradient and therefore acts on that input side.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::hyp_geom::LorentzPoint;
use crate::rng::{self, derive_seed};

/// Std-dev of the Gaussian jitter added to every freshly initialized map.
pub const INIT_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Text,
}

/// A bias-free `R^d → R^d` map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    weight: DMatrix<f64>,
    frozen: bool,
}

impl LinearMap {
    pub fn new(weight: DMatrix<f64>) -> Result<Self> {
        if !weight.is_square() {
            return Err(contract("linear map weight must be square"));
        }
        Ok(Self {
            weight,
            frozen: false,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: DMatrix::identity(dim, dim),
            frozen: false,
        }
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// `x·W`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        apply_row(&self.weight, x)
    }

    fn descend(&mut self, grad: &DMatrix<f64>, lr: f64) -> Result<()> {
        if self.frozen {
            return Err(contract("attempted to update a frozen map"));
        }
        self.weight -= grad * lr;
        Ok(())
    }
}

pub(crate) fn apply_row(w: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..w.ncols())
        .map(|j| w.column(j).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `g·Wᵀ`: pulls a gradient on a map's output back to its input.
pub(crate) fn apply_row_transpose(w: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    (0..w.nrows())
        .map(|i| w.row(i).iter().zip(g).map(|(a, b)| a * b).sum())
        .collect()
}

/// Gradients for the trainable parameters: the newest module of each
/// modality and the shared mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub visual: DMatrix<f64>,
    pub text: DMatrix<f64>,
    pub tp: DMatrix<f64>,
}

impl ModelGradients {
    pub fn zeros(dim: usize) -> Self {
        Self {
            visual: DMatrix::zeros(dim, dim),
            text: DMatrix::zeros(dim, dim),
            tp: DMatrix::zeros(dim, dim),
        }
    }

    /// Row-major concatenation in the order of [`AnchoringModel::trainable_params`].
    pub fn flatten(&self) -> Vec<f64> {
        [&self.visual, &self.text, &self.tp]
            .into_iter()
            .flat_map(row_major)
            .collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoringModel {
    dim: usize,
    seed: u64,
    visual_modules: Vec<LinearMap>,
    text_modules: Vec<LinearMap>,
    tp: LinearMap,
}

fn jittered(base: DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut stream = rng::stream(seed);
    let (r, c) = base.shape();
    base + DMatrix::from_fn(r, c, |_, _| {
        INIT_NOISE * stream.sample::<f64, _>(StandardNormal)
    })
}

impl AnchoringModel {
    /// A model with no hierarchy modules yet and the mapper at identity plus jitter.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(contract("model dimension must be positive"));
        }
        let tp = LinearMap::new(jittered(
            DMatrix::identity(dim, dim),
            derive_seed(&[seed, 0x7F]),
        ))?;
        Ok(Self {
            dim,
            seed,
            visual_modules: Vec::new(),
            text_modules: Vec::new(),
            tp,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_tasks(&self) -> usize {
        self.visual_modules.len()
    }

    pub fn modules(&self, modality: Modality) -> &[LinearMap] {
        match modality {
            Modality::Visual => &self.visual_modules,
            Modality::Text => &self.text_modules,
        }
    }

    pub fn tp(&self) -> &LinearMap {
        &self.tp
    }

    /// Freezes every existing module and appends a fresh trainable one per
    /// modality: identity plus jitter for the first task, zero plus jitter
    /// afterwards so the summed map starts where the last task left it.
    pub fn begin_task(&mut self) {
        self.visual_modules.iter_mut().for_each(LinearMap::freeze);
        self.text_modules.iter_mut().for_each(LinearMap::freeze);
        let task = self.num_tasks() as u64;
        let base = if task == 0 {
            DMatrix::identity(self.dim, self.dim)
        } else {
            DMatrix::zeros(self.dim, self.dim)
        };
        for (tag, list) in [
            (1u64, &mut self.visual_modules),
            (2u64, &mut self.text_modules),
        ] {
            let w = jittered(base.clone(), derive_seed(&[self.seed, task, tag]));
            list.push(LinearMap {
                weight: w,
                frozen: false,
            });
        }
    }

    /// `Σ_i H^i(e)` over all modules of one modality.
    pub fn aggregate(&self, e: &[f64], modality: Modality) -> Result<Vec<f64>> {
        let modules = self.modules(modality);
        if modules.is_empty() {
            return Err(contract("no hierarchy modules; call begin_task first"));
        }
        self.check_input(e)?;
        let mut out = vec![0.0; self.dim];
        for m in modules {
            for (o, v) in out.iter_mut().zip(m.apply(e)) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// The single map whose weight is the sum of all module weights.
    pub fn reparameterize(&self, modality: Modality) -> Result<LinearMap> {
        let modules = self.modules(modality);
        let Some(first) = modules.first() else {
            return Err(contract("no hierarchy modules to merge"));
        };
        let mut w = first.weight.clone();
        for m in &modules[1..] {
            w += &m.weight;
        }
        LinearMap::new(w)
    }

    /// Spatial component `z̃·W_tp`, lifted onto the hyperboloid.
    pub fn tp_forward(&self, z_tilde: &[f64], c: f64) -> Result<LorentzPoint> {
        self.check_input(z_tilde)?;
        LorentzPoint::lift(self.tp.apply(z_tilde), c)
    }

    /// Trainable-equivalent size after merging modules: `3·d²`.
    pub fn parameter_count(&self) -> usize {
        3 * self.dim * self.dim
    }

    /// One descent step on the newest modules and the mapper. The mapper's
    /// gradient is taken as given; projecting it is the caller's job.
    pub fn descend(&mut self, grads: &ModelGradients, lr: f64) -> Result<()> {
        let (Some(v), Some(t)) = (self.visual_modules.last_mut(), self.text_modules.last_mut())
        else {
            return Err(contract("no trainable modules; call begin_task first"));
        };
        v.descend(&grads.visual, lr)?;
        t.descend(&grads.text, lr)?;
        self.tp.descend(&grads.tp, lr)
    }

    /// Newest visual module, newest text module and mapper, each row-major.
    pub fn trainable_params(&self) -> Result<Vec<f64>> {
        let (Some(v), Some(t)) = (self.visual_modules.last(), self.text_modules.last()) else {
            return Err(contract("no trainable modules; call begin_task first"));
        };
        Ok([&v.weight, &t.weight, &self.tp.weight]
            .into_iter()
            .flat_map(row_major)
            .collect())
    }

    /// Inverse of [`Self::trainable_params`].
    pub fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        let d = self.dim;
        if params.len() != 3 * d * d {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                3 * d * d,
                params.len()
            )));
        }
        let (Some(v), Some(t)) = (self.visual_modules.last_mut(), self.text_modules.last_mut())
        else {
            return Err(contract("no trainable modules; call begin_task first"));
        };
        for (k, target) in [&mut v.weight, &mut t.weight, &mut self.tp.weight]
            .into_iter()
            .enumerate()
        {
            *target = DMatrix::from_row_slice(d, d, &params[k * d * d..(k + 1) * d * d]);
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(contract(format!(
                "expected {} features, got {}",
                self.dim,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(
                "feature vector contains a non-finite entry".into(),
            ));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn set_weights(&mut self, modality: Modality, weights: Vec<DMatrix<f64>>) {
        let maps = weights
            .into_iter()
            .map(|w| LinearMap {
                weight: w,
                frozen: true,
            })
            .collect();
        match modality {
            Modality::Visual => self.visual_modules = maps,
            Modality::Text => self.text_modules = maps,
        }
    }

    #[cfg(test)]
    pub(crate) fn set_tp(&mut self, weight: DMatrix<f64>) {
        self.tp = LinearMap {
            weight,
            frozen: false,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn begin_task_grows_and_freezes() {
        let mut m = AnchoringModel::new(4, 1).unwrap();
        m.begin_task();
        assert_eq!(m.modules(Modality::Visual).len(), 1);
        assert!(!m.modules(Modality::Text)[0].is_frozen());
        m.begin_task();
        m.begin_task();
        for modality in [Modality::Visual, Modality::Text] {
            let mods = m.modules(modality);
            assert_eq!(mods.len(), 3);
            assert_eq!(mods.iter().filter(|x| !x.is_frozen()).count(), 1);
            assert!(!mods[2].is_frozen());
        }
        assert!(!m.tp().is_frozen());
    }

    #[test]
    fn initial_modules_are_near_identity_then_near_zero() {
        let mut m = AnchoringModel::new(6, 2).unwrap();
        m.begin_task();
        m.begin_task();
        let mods = m.modules(Modality::Visual);
        assert!((mods[0].weight() - DMatrix::<f64>::identity(6, 6)).amax() < 1e-2);
        assert!(mods[1].weight().amax() < 1e-2);
        assert!(mods[1].weight().amax() > 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let mut m = AnchoringModel::new(3, 0).unwrap();
        assert!(m.aggregate(&[1.0, 2.0, 3.0], Modality::Visual).is_err());
        m.set_weights(Modality::Visual, vec![DMatrix::identity(3, 3)]);
        assert_eq!(
            m.aggregate(&[1.0, 2.0, 3.0], Modality::Visual).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
        let w = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 0.0, 1.0]);
        m.set_weights(Modality::Visual, vec![w.clone(), -w]);
        assert_eq!(
            m.aggregate(&[1.0, -2.0, 0.5], Modality::Visual).unwrap(),
            vec![0.0; 3]
        );
        assert!(m.aggregate(&[1.0], Modality::Visual).is_err());
    }

    #[test]
    fn reparameterize_examples() {
        let mut m = AnchoringModel::new(2, 0).unwrap();
        m.set_weights(
            Modality::Text,
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
        );
        let merged = m.reparameterize(Modality::Text).unwrap();
        assert_eq!(merged.weight(), &(DMatrix::identity(2, 2) * 2.0));
        assert_eq!(merged.apply(&[1.5, -1.0]), vec![3.0, -2.0]);
    }

    #[test]
    fn tp_forward_examples() {
        let mut m = AnchoringModel::new(3, 0).unwrap();
        m.set_tp(DMatrix::zeros(3, 3));
        assert!(m.tp_forward(&[1.0, 2.0, 3.0], 1.0).unwrap().is_origin());
        m.set_tp(DMatrix::identity(3, 3));
        assert!(m.tp_forward(&[0.0; 3], 1.0).unwrap().is_origin());
    }

    #[test]
    fn parameter_count_is_three_d_squared() {
        let mut m = AnchoringModel::new(512, 0).unwrap();
        assert_eq!(m.parameter_count(), 786_432);
        let mut small = AnchoringModel::new(2, 0).unwrap();
        assert_eq!(small.parameter_count(), 12);
        small.begin_task();
        small.begin_task();
        assert_eq!(small.parameter_count(), 12);
        m.begin_task();
        assert_eq!(m.parameter_count(), 786_432);
    }

    #[test]
    fn descend_leaves_frozen_modules_untouched() {
        let mut m = AnchoringModel::new(4, 3).unwrap();
        m.begin_task();
        m.begin_task();
        let frozen_before = m.modules(Modality::Visual)[0].clone();
        let mut g = ModelGradients::zeros(4);
        g.visual.fill(0.5);
        g.text.fill(-0.25);
        g.tp.fill(1.0);
        for _ in 0..10 {
            m.descend(&g, 0.1).unwrap();
        }
        assert_eq!(m.modules(Modality::Visual)[0], frozen_before);
        assert_ne!(
            m.modules(Modality::Visual)[1].weight(),
            &DMatrix::zeros(4, 4)
        );
    }
}

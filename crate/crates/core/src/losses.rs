//! The training objective and its analytic gradient.
//!
//! ```text
//! L = λ1·mean_edges[ SP(ext − aper) + SP(δ − d) ]      text → text
//!   + λ2·mean_images[ SP(ext − aper) ]                text → image
//!   + mean_j[ −½(log P_j^I + log P_j^T) ]             hyperbolic contrastive
//!   + β·mean_features[ ||z̃·W_tp − expm_o(z̃)||² ]       mapper regularizer
//! ```
//!
//! Gradients are accumulated on the spatial coordinates of every hyperbolic
//! point and pulled back through the mapper and the summed hierarchy modules.
//! Because all modules of a modality enter as a sum, the gradient of the
//! newest module equals the gradient of the summed weight.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::anchoring_model::{
    apply_row, apply_row_transpose, AnchoringModel, Modality, ModelGradients,
};
use crate::error::{contract, Result};
use crate::hyp_geom::{
    self, accumulate_distance_grad, entailment_penalty_grad, expm_origin_spatial,
    expm_origin_spatial_vjp, geodesic_distance, geodesic_distance_grad, sigmoid, softplus,
    LorentzPoint, PairGrad,
};

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub curvature: f64,
    pub kappa: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub tau: f64,
    /// Anchor each image to every non-root ancestor of its class, not only the class.
    pub image_hier_ancestors: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            curvature: 1.0,
            kappa: 0.1,
            delta: 0.1,
            lambda1: 0.5,
            lambda2: 0.1,
            beta: 0.1,
            tau: 0.07,
            image_hier_ancestors: false,
        }
    }
}

/// Per-term loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub hier_txt_txt: f64,
    pub hier_txt_img: f64,
    pub contrastive: f64,
    pub tp_reg: f64,
    pub total: f64,
    /// `(λ1, λ2, β)`.
    pub weights_used: (f64, f64, f64),
}

/// Parent–child text loss: entailment penalty plus the separation margin.
pub fn text_text_hier(
    parent: &LorentzPoint,
    child: &LorentzPoint,
    delta: f64,
    kappa: f64,
) -> Result<f64> {
    Ok(text_text_hier_grad(parent, child, delta, kappa)?.value)
}

/// [`text_text_hier`] with gradients.
pub fn text_text_hier_grad(
    parent: &LorentzPoint,
    child: &LorentzPoint,
    delta: f64,
    kappa: f64,
) -> Result<PairGrad> {
    let cone = entailment_penalty_grad(parent, child, kappa)?;
    let sep = separation_grad(parent, child, delta)?;
    Ok(PairGrad {
        value: cone.value + sep.value,
        d_p: cone.d_p.iter().zip(&sep.d_p).map(|(a, b)| a + b).collect(),
        d_q: cone.d_q.iter().zip(&sep.d_q).map(|(a, b)| a + b).collect(),
    })
}

/// `SP(δ − d(p, q))`.
fn separation_grad(p: &LorentzPoint, q: &LorentzPoint, delta: f64) -> Result<PairGrad> {
    let dist = geodesic_distance_grad(p, q)?;
    let z = delta - dist.value;
    let w = -sigmoid(z);
    Ok(PairGrad {
        value: softplus(z),
        d_p: dist.d_p.iter().map(|g| w * g).collect(),
        d_q: dist.d_q.iter().map(|g| w * g).collect(),
    })
}

/// Edge loss used during training. The root sits at the origin, whose cone
/// is the whole space, so edges leaving it keep only the separation term.
fn edge_loss_grad(
    parent: &LorentzPoint,
    child: &LorentzPoint,
    delta: f64,
    kappa: f64,
) -> Result<PairGrad> {
    if parent.is_origin() {
        separation_grad(parent, child, delta)
    } else {
        text_text_hier_grad(parent, child, delta, kappa)
    }
}

/// Image-to-class-text entailment penalty.
pub fn text_image_hier(class_text: &LorentzPoint, image: &LorentzPoint, kappa: f64) -> Result<f64> {
    hyp_geom::entailment_penalty(class_text, image, kappa)
}

pub fn text_image_hier_grad(
    class_text: &LorentzPoint,
    image: &LorentzPoint,
    kappa: f64,
) -> Result<PairGrad> {
    entailment_penalty_grad(class_text, image, kappa)
}

/// Symmetric contrastive loss and its gradients.
#[derive(Debug, Clone)]
pub struct ContrastiveGrad {
    pub value: f64,
    pub d_images: Vec<Vec<f64>>,
    pub d_texts: Vec<Vec<f64>>,
}

fn log_softmax_diag(logits: &DMatrix<f64>, by_row: bool) -> (DMatrix<f64>, Vec<f64>) {
    let n = logits.nrows();
    let mut probs = DMatrix::zeros(n, n);
    let mut diag = Vec::with_capacity(n);
    for a in 0..n {
        let line: Vec<f64> = (0..n)
            .map(|b| {
                if by_row {
                    logits[(a, b)]
                } else {
                    logits[(b, a)]
                }
            })
            .collect();
        let max = line.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + line.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (b, v) in line.iter().enumerate() {
            let p = (v - lse).exp();
            if by_row {
                probs[(a, b)] = p;
            } else {
                probs[(b, a)] = p;
            }
        }
        diag.push(line[a] - lse);
    }
    (probs, diag)
}

/// Mean over pairs of `−½(log P_j^I + log P_j^T)` with logits `−d_B/τ`.
pub fn contrastive_batch(images: &[LorentzPoint], texts: &[LorentzPoint], tau: f64) -> Result<f64> {
    Ok(contrastive_batch_grad(images, texts, tau)?.value)
}

pub fn contrastive_batch_grad(
    images: &[LorentzPoint],
    texts: &[LorentzPoint],
    tau: f64,
) -> Result<ContrastiveGrad> {
    let n = images.len();
    if n == 0 || texts.len() != n {
        return Err(contract(format!(
            "contrastive batch needs equal non-empty sides, got {n} and {}",
            texts.len()
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(contract(format!("temperature must be positive, got {tau}")));
    }
    if images
        .iter()
        .chain(texts)
        .any(|p| p.curvature() != images[0].curvature() || p.dim() != images[0].dim())
    {
        return Err(contract("contrastive batch mixes dimensions or curvatures"));
    }
    let mut logits = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            logits[(a, b)] = -geodesic_distance(&images[a], &texts[b])? / tau;
        }
    }
    let (row_p, row_diag) = log_softmax_diag(&logits, true);
    let (col_p, col_diag) = log_softmax_diag(&logits, false);
    let value = -0.5
        * row_diag
            .iter()
            .zip(&col_diag)
            .map(|(r, c)| r + c)
            .sum::<f64>()
        / n as f64;

    let dim = images[0].dim();
    let mut d_images = vec![vec![0.0; dim]; n];
    let mut d_texts = vec![vec![0.0; dim]; n];
    let scale = 1.0 / (2.0 * n as f64);
    for a in 0..n {
        for b in 0..n {
            let eye = if a == b { 1.0 } else { 0.0 };
            let d_logit = scale * ((row_p[(a, b)] - eye) + (col_p[(a, b)] - eye));
            if d_logit == 0.0 {
                continue;
            }
            accumulate_distance_grad(
                &images[a],
                &texts[b],
                -d_logit / tau,
                &mut d_images[a],
                &mut d_texts[b],
            );
        }
    }
    Ok(ContrastiveGrad {
        value,
        d_images,
        d_texts,
    })
}

/// `||z̃·W_tp − expm_o(z̃)||²` for one pre-mapper feature.
pub fn tp_reg(z_tilde: &[f64], model: &AnchoringModel) -> Result<f64> {
    if z_tilde.len() != model.dim() {
        return Err(contract("feature length does not match model dimension"));
    }
    Ok(tp_residual(z_tilde, model.tp().weight())
        .iter()
        .map(|r| r * r)
        .sum())
}

fn tp_residual(z: &[f64], w: &DMatrix<f64>) -> Vec<f64> {
    apply_row(w, z)
        .into_iter()
        .zip(expm_origin_spatial(z))
        .map(|(a, b)| a - b)
        .collect()
}

/// Where a text node's hyperbolic embedding comes from.
#[derive(Debug, Clone)]
pub enum TextSource {
    /// Computed live from this frozen text feature; receives gradient.
    Live(Vec<f64>),
    /// A constant point (cached virtual anchor or the root at the origin).
    Fixed(LorentzPoint),
}

/// Text nodes and edges participating in one step.
#[derive(Debug, Clone, Default)]
pub struct HierarchyScope {
    pub nodes: Vec<TextSource>,
    /// Index of each node's parent within `nodes`, when it is in scope.
    pub parents: Vec<Option<usize>>,
    /// Parent → child pairs over `nodes`.
    pub edges: Vec<(usize, usize)>,
}

/// Image features with labels indexing [`HierarchyScope::nodes`].
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    pub grads: ModelGradients,
}

/// Full objective over a batch. Gradients cover the newest hierarchy module
/// of each modality and the (unprojected) mapper.
pub fn total_loss(
    batch: &Batch,
    model: &AnchoringModel,
    scope: &HierarchyScope,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    let n = batch.features.len();
    if n == 0 || batch.labels.len() != n {
        return Err(contract("batch must hold at least one labelled image"));
    }
    if scope.parents.len() != scope.nodes.len() {
        return Err(contract("scope parents must align with nodes"));
    }
    if batch.labels.iter().any(|&l| l >= scope.nodes.len()) {
        return Err(contract("batch label outside the scope"));
    }
    let dim = model.dim();
    let c = cfg.curvature;
    let wv = model.reparameterize(Modality::Visual)?;
    let wt = model.reparameterize(Modality::Text)?;
    let wtp = model.tp().weight();

    // Forward.
    let mut img_tilde = Vec::with_capacity(n);
    let mut img_pts = Vec::with_capacity(n);
    for e in &batch.features {
        if e.len() != dim {
            return Err(contract(
                "image feature length does not match model dimension",
            ));
        }
        let zt = wv.apply(e);
        img_pts.push(LorentzPoint::lift(apply_row(wtp, &zt), c)?);
        img_tilde.push(zt);
    }
    let mut node_tilde: Vec<Option<Vec<f64>>> = Vec::with_capacity(scope.nodes.len());
    let mut node_pts = Vec::with_capacity(scope.nodes.len());
    for src in &scope.nodes {
        match src {
            TextSource::Live(e) => {
                if e.len() != dim {
                    return Err(contract(
                        "text feature length does not match model dimension",
                    ));
                }
                let zt = wt.apply(e);
                node_pts.push(LorentzPoint::lift(apply_row(wtp, &zt), c)?);
                node_tilde.push(Some(zt));
            }
            TextSource::Fixed(p) => {
                node_pts.push(p.clone());
                node_tilde.push(None);
            }
        }
    }

    let mut g_img = vec![vec![0.0; dim]; n];
    let mut g_node = vec![vec![0.0; dim]; scope.nodes.len()];
    let add = |acc: &mut Vec<f64>, g: &[f64], w: f64| {
        acc.iter_mut().zip(g).for_each(|(a, b)| *a += w * b)
    };

    // Contrastive.
    let texts: Vec<LorentzPoint> = batch.labels.iter().map(|&l| node_pts[l].clone()).collect();
    let con = contrastive_batch_grad(&img_pts, &texts, cfg.tau)?;
    for j in 0..n {
        add(&mut g_img[j], &con.d_images[j], 1.0);
        add(&mut g_node[batch.labels[j]], &con.d_texts[j], 1.0);
    }

    // Text → image.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (j, &label) in batch.labels.iter().enumerate() {
        pairs.push((label, j));
        if cfg.image_hier_ancestors {
            let mut cur = scope.parents[label];
            while let Some(a) = cur {
                if !node_pts[a].is_origin() {
                    pairs.push((a, j));
                }
                cur = scope.parents[a];
            }
        }
    }
    let mut hier_img = 0.0;
    let w_img = cfg.lambda2 / pairs.len() as f64;
    for &(k, j) in &pairs {
        let g = text_image_hier_grad(&node_pts[k], &img_pts[j], cfg.kappa)?;
        hier_img += g.value;
        if w_img != 0.0 {
            add(&mut g_node[k], &g.d_p, w_img);
            add(&mut g_img[j], &g.d_q, w_img);
        }
    }
    hier_img /= pairs.len() as f64;

    // Text → text.
    let mut hier_txt = 0.0;
    if scope.edges.is_empty() {
        if cfg.lambda1 != 0.0 {
            log::warn!("no tree edges in scope; text-text hierarchy term is zero");
        }
    } else {
        let w_txt = cfg.lambda1 / scope.edges.len() as f64;
        for &(p, ch) in &scope.edges {
            let g = edge_loss_grad(&node_pts[p], &node_pts[ch], cfg.delta, cfg.kappa)?;
            hier_txt += g.value;
            if w_txt != 0.0 {
                add(&mut g_node[p], &g.d_p, w_txt);
                add(&mut g_node[ch], &g.d_q, w_txt);
            }
        }
        hier_txt /= scope.edges.len() as f64;
    }

    // Mapper regularizer over every live pre-mapper feature.
    let live: usize = n + node_tilde.iter().filter(|t| t.is_some()).count();
    let w_tp = cfg.beta / live as f64;
    let mut tp_val = 0.0;
    let mut grads = ModelGradients::zeros(dim);
    let mut g_img_tilde = Vec::with_capacity(n);
    for j in 0..n {
        let zt = &img_tilde[j];
        let r = tp_residual(zt, wtp);
        tp_val += r.iter().map(|x| x * x).sum::<f64>();
        let mut g_zs = g_img[j].clone();
        add(&mut g_zs, &r, 2.0 * w_tp);
        let mut g_zt = apply_row_transpose(wtp, &g_zs);
        add(&mut g_zt, &expm_origin_spatial_vjp(zt, &r), -2.0 * w_tp);
        outer_add(&mut grads.tp, zt, &g_zs);
        outer_add(&mut grads.visual, &batch.features[j], &g_zt);
        g_img_tilde.push(g_zt);
    }
    for (k, src) in scope.nodes.iter().enumerate() {
        let (TextSource::Live(e), Some(zt)) = (src, &node_tilde[k]) else {
            continue;
        };
        let r = tp_residual(zt, wtp);
        tp_val += r.iter().map(|x| x * x).sum::<f64>();
        let mut g_zs = g_node[k].clone();
        add(&mut g_zs, &r, 2.0 * w_tp);
        let mut g_zt = apply_row_transpose(wtp, &g_zs);
        add(&mut g_zt, &expm_origin_spatial_vjp(zt, &r), -2.0 * w_tp);
        outer_add(&mut grads.tp, zt, &g_zs);
        outer_add(&mut grads.text, e, &g_zt);
    }
    tp_val /= live as f64;

    let total = cfg.lambda1 * hier_txt + cfg.lambda2 * hier_img + con.value + cfg.beta * tp_val;
    Ok(LossOutput {
        breakdown: LossBreakdown {
            hier_txt_txt: hier_txt,
            hier_txt_img: hier_img,
            contrastive: con.value,
            tp_reg: tp_val,
            total,
            weights_used: (cfg.lambda1, cfg.lambda2, cfg.beta),
        },
        grads,
    })
}

/// `acc += xᵀ·g`.
fn outer_add(acc: &mut DMatrix<f64>, x: &[f64], g: &[f64]) {
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        for (j, gj) in g.iter().enumerate() {
            acc[(i, j)] += xi * gj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyp_geom::{aperture, exterior_angle, geodesic_distance};
    use std::f64::consts::LN_2;

    fn pt(s: &[f64]) -> LorentzPoint {
        LorentzPoint::lift(s.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn contrastive_single_pair_is_zero() {
        let v = vec![pt(&[0.3, 0.1])];
        let t = vec![pt(&[-0.5, 0.9])];
        assert_eq!(contrastive_batch(&v, &t, 0.07).unwrap(), 0.0);
        assert!(contrastive_batch(&[], &[], 0.07).is_err());
    }

    #[test]
    fn contrastive_uniform_pair_is_log_two() {
        // Both images equidistant from both texts.
        let v = vec![pt(&[1.0, 0.0]), pt(&[-1.0, 0.0])];
        let t = vec![pt(&[0.0, 1.0]), pt(&[0.0, -1.0])];
        let l = contrastive_batch(&v, &t, 0.07).unwrap();
        assert!((l - LN_2).abs() < 1e-12);
    }

    #[test]
    fn tp_reg_zero_cases() {
        let mut m = AnchoringModel::new(3, 0).unwrap();
        assert_eq!(tp_reg(&[0.0; 3], &m).unwrap(), 0.0);
        // Make TP reproduce the exponential map at one particular input.
        let z = [0.4, 0.0, 0.0];
        let target = expm_origin_spatial(&z)[0] / 0.4;
        let mut w = DMatrix::identity(3, 3);
        w[(0, 0)] = target;
        m.set_tp(w);
        assert!(tp_reg(&z, &m).unwrap() < 1e-30);
    }

    #[test]
    fn boundary_child_gives_two_ln2() {
        // A child exactly at distance δ and exactly on the cone boundary.
        let parent = pt(&[1.0, 0.0]);
        let (kappa, delta) = (0.1, 0.3);
        let aper = aperture(&parent, kappa).unwrap();
        let at_distance = |theta: f64| -> LorentzPoint {
            let (mut lo, mut hi) = (0.0_f64, 10.0_f64);
            for _ in 0..200 {
                let r = 0.5 * (lo + hi);
                let q = pt(&[1.0 + r * theta.cos(), r * theta.sin()]);
                if geodesic_distance(&parent, &q).unwrap() < delta {
                    lo = r;
                } else {
                    hi = r;
                }
            }
            let r = 0.5 * (lo + hi);
            pt(&[1.0 + r * theta.cos(), r * theta.sin()])
        };
        let (mut lo, mut hi) = (0.0_f64, std::f64::consts::FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if exterior_angle(&parent, &at_distance(mid)).unwrap() < aper {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let child = at_distance(0.5 * (lo + hi));
        assert!((geodesic_distance(&parent, &child).unwrap() - delta).abs() < 1e-12);
        let l = text_text_hier(&parent, &child, delta, kappa).unwrap();
        assert!((l - 2.0 * LN_2).abs() < 1e-9, "{l}");
    }

    #[test]
    fn far_radial_child_pays_only_the_soft_cone_floor() {
        // ext = 0 on the radial ray, so the cone term is SP(−aper).
        let parent = pt(&[1.0, 0.0]);
        let child = pt(&[40.0, 0.0]);
        let aper = aperture(&parent, 0.1).unwrap();
        let d = geodesic_distance(&parent, &child).unwrap();
        let want = softplus(-aper) + softplus(0.1 - d);
        let l = text_text_hier(&parent, &child, 0.1, 0.1).unwrap();
        assert!((l - want).abs() < 1e-12, "{l} vs {want}");
    }

    fn small_setup(seed: u64) -> (AnchoringModel, Batch, HierarchyScope) {
        use crate::rng;
        let d = 4;
        let mut m = AnchoringModel::new(d, seed).unwrap();
        m.begin_task();
        m.begin_task();
        let mut s = rng::stream(seed);
        let params: Vec<f64> = rng::normal_vec(&mut s, 3 * d * d)
            .iter()
            .map(|x| 0.4 * x)
            .collect();
        m.set_trainable_params(&params).unwrap();
        let live = |s: &mut rng::StreamRng| TextSource::Live(rng::normal_vec(s, d));
        let fixed_parent = pt(&rng::normal_vec(&mut s, d)
            .iter()
            .map(|x| 0.3 * x)
            .collect::<Vec<_>>());
        // root(origin) → animal(fixed) → {cat, dog}(live), cat → kitten(live)
        let nodes = vec![
            TextSource::Fixed(LorentzPoint::origin(d, 1.0).unwrap()),
            TextSource::Fixed(fixed_parent),
            live(&mut s),
            live(&mut s),
            live(&mut s),
        ];
        let scope = HierarchyScope {
            nodes,
            parents: vec![None, Some(0), Some(1), Some(1), Some(2)],
            edges: vec![(0, 1), (1, 2), (1, 3), (2, 4)],
        };
        let batch = Batch {
            features: (0..4).map(|_| rng::normal_vec(&mut s, d)).collect(),
            labels: vec![2, 3, 4, 4],
        };
        (m, batch, scope)
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        for seed in 0..5 {
            for ancestors in [false, true] {
                let (m, batch, scope) = small_setup(seed);
                let cfg = LossConfig {
                    tau: 0.5,
                    image_hier_ancestors: ancestors,
                    ..LossConfig::default()
                };
                let out = total_loss(&batch, &m, &scope, &cfg).unwrap();
                let x = m.trainable_params().unwrap();
                let f = |p: &[f64]| {
                    let mut probe = m.clone();
                    probe.set_trainable_params(p).unwrap();
                    total_loss(&batch, &probe, &scope, &cfg)
                        .unwrap()
                        .breakdown
                        .total
                };
                let err = hyp_geom::grad_check(f, &out.grads.flatten(), &x).unwrap();
                assert!(err < 1e-4, "seed {seed}: {err}");
            }
        }
    }
}

use hasten::anchoring_model::{AnchoringModel, Modality};
use hasten::cil_harness::{fit_tree, pets_tree, RunConfig};
use hasten::hyp_geom::{softplus, LorentzPoint};
use hasten::losses::*;
use hasten::rng;
use hasten_oracle::{rel_err, Oracle};
use proptest::prelude::*;
use rand::Rng;

fn random_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    rng::normal_vec(rng, dim)
        .into_iter()
        .map(|x| x * scale)
        .collect()
}

fn lift(v: &[f64]) -> LorentzPoint {
    LorentzPoint::lift(v.to_vec(), 1.0).unwrap()
}

#[test]
fn contrastive_matches_the_oracle() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(51);
    let mut worst = 0.0_f64;
    for k in 0..40 {
        let tau = [0.07, 0.3, 1.0][k % 3];
        let imgs: Vec<Vec<f64>> = (0..8).map(|_| random_vec(&mut rng, 5, 0.6)).collect();
        let txts: Vec<Vec<f64>> = (0..8).map(|_| random_vec(&mut rng, 5, 0.6)).collect();
        let a: Vec<LorentzPoint> = imgs.iter().map(|v| lift(v)).collect();
        let b: Vec<LorentzPoint> = txts.iter().map(|v| lift(v)).collect();
        let ours = contrastive_batch(&a, &b, tau).unwrap();
        worst = worst.max(rel_err(ours, oracle.contrastive(&imgs, &txts, 1.0, tau)));
    }
    assert!(worst < 1e-10, "relative error {worst:e}");
}

#[test]
fn hierarchy_terms_match_the_oracle() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(52);
    let (kappa, delta) = (0.1, 0.1);
    let (mut worst_tt, mut worst_ti) = (0.0_f64, 0.0_f64);
    for _ in 0..300 {
        let p = random_vec(&mut rng, 4, 0.7);
        let q = random_vec(&mut rng, 4, 1.0);
        let cone = {
            let e = oracle.exterior_angle(&p, &q, 1.0);
            let a = oracle.aperture(&p, kappa, 1.0);
            oracle.softplus(e - a)
        };
        let sep = {
            let d = oracle.distance(&p, &q, 1.0);
            oracle.softplus(delta - d)
        };
        let tt = text_text_hier(&lift(&p), &lift(&q), delta, kappa).unwrap();
        let ti = text_image_hier(&lift(&p), &lift(&q), kappa).unwrap();
        worst_tt = worst_tt.max(rel_err(tt, cone + sep));
        worst_ti = worst_ti.max(rel_err(ti, cone));
    }
    assert!(worst_tt < 1e-10, "text-text relative error {worst_tt:e}");
    assert!(worst_ti < 1e-10, "text-image relative error {worst_ti:e}");
}

#[test]
fn mapper_regularizer_matches_the_oracle() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(53);
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let mut m = AnchoringModel::new(6, k).unwrap();
        m.begin_task();
        m.set_trainable_params(&random_vec(&mut rng, 3 * 36, 0.5))
            .unwrap();
        let z = random_vec(&mut rng, 6, 0.8);
        let w = m.tp().weight();
        let target = oracle.expm_spatial(&z);
        let mut expected = 0.0;
        for j in 0..6 {
            let mapped: f64 = (0..6).map(|i| z[i] * w[(i, j)]).sum();
            expected += (mapped - target[j]).powi(2);
        }
        worst = worst.max(rel_err(tp_reg(&z, &m).unwrap(), expected));
    }
    assert!(worst < 1e-10, "relative error {worst:e}");
}

fn random_problem(seed: u64, n: usize) -> (AnchoringModel, Batch, HierarchyScope) {
    let mut rng = rng::stream(seed);
    let mut m = AnchoringModel::new(4, seed).unwrap();
    m.begin_task();
    m.set_trainable_params(&random_vec(&mut rng, 48, 0.4))
        .unwrap();
    let scope = HierarchyScope {
        nodes: vec![
            TextSource::Fixed(LorentzPoint::origin(4, 1.0).unwrap()),
            TextSource::Live(random_vec(&mut rng, 4, 1.0)),
            TextSource::Live(random_vec(&mut rng, 4, 1.0)),
            TextSource::Live(random_vec(&mut rng, 4, 1.0)),
        ],
        parents: vec![None, Some(0), Some(1), Some(1)],
        edges: vec![(0, 1), (1, 2), (1, 3)],
    };
    let batch = Batch {
        features: (0..n).map(|_| random_vec(&mut rng, 4, 1.0)).collect(),
        labels: (0..n).map(|j| 1 + j % 3).collect(),
    };
    (m, batch, scope)
}

#[test]
fn all_weights_zero_leaves_only_the_contrastive_term() {
    let (m, batch, scope) = random_problem(5, 6);
    let cfg = LossConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        beta: 0.0,
        ..LossConfig::default()
    };
    let b = total_loss(&batch, &m, &scope, &cfg).unwrap().breakdown;
    assert_eq!(b.total, b.contrastive);
    assert!(b.hier_txt_txt > 0.0 && b.hier_txt_img > 0.0 && b.tp_reg > 0.0);
}

#[test]
fn single_sample_single_edge_composes_by_hand() {
    let mut rng = rng::stream(54);
    let mut m = AnchoringModel::new(4, 9).unwrap();
    m.begin_task();
    m.set_trainable_params(&random_vec(&mut rng, 48, 0.4))
        .unwrap();
    let parent = lift(&random_vec(&mut rng, 4, 0.3));
    let child_text = random_vec(&mut rng, 4, 1.0);
    let image = random_vec(&mut rng, 4, 1.0);
    let scope = HierarchyScope {
        nodes: vec![
            TextSource::Fixed(parent.clone()),
            TextSource::Live(child_text.clone()),
        ],
        parents: vec![None, Some(0)],
        edges: vec![(0, 1)],
    };
    let batch = Batch {
        features: vec![image.clone()],
        labels: vec![1],
    };
    let cfg = LossConfig::default();
    let out = total_loss(&batch, &m, &scope, &cfg).unwrap().breakdown;

    let zt_img = m.aggregate(&image, Modality::Visual).unwrap();
    let zt_txt = m.aggregate(&child_text, Modality::Text).unwrap();
    let img = m.tp_forward(&zt_img, 1.0).unwrap();
    let txt = m.tp_forward(&zt_txt, 1.0).unwrap();
    let tt = text_text_hier(&parent, &txt, cfg.delta, cfg.kappa).unwrap();
    let ti = text_image_hier(&txt, &img, cfg.kappa).unwrap();
    let reg = 0.5 * (tp_reg(&zt_img, &m).unwrap() + tp_reg(&zt_txt, &m).unwrap());
    let expected = cfg.lambda1 * tt + cfg.lambda2 * ti + cfg.beta * reg;
    assert_eq!(out.contrastive, 0.0);
    assert!((out.hier_txt_txt - tt).abs() < 1e-12);
    assert!((out.hier_txt_img - ti).abs() < 1e-12);
    assert!((out.tp_reg - reg).abs() < 1e-12);
    assert!((out.total - expected).abs() < 1e-12);
}

#[test]
fn edges_out_of_the_origin_pay_only_separation() {
    let mut m = AnchoringModel::new(3, 2).unwrap();
    m.begin_task();
    let text = vec![0.4, -0.2, 0.9];
    let scope = HierarchyScope {
        nodes: vec![
            TextSource::Fixed(LorentzPoint::origin(3, 1.0).unwrap()),
            TextSource::Live(text.clone()),
        ],
        parents: vec![None, Some(0)],
        edges: vec![(0, 1)],
    };
    let batch = Batch {
        features: vec![vec![0.1, 0.2, 0.3]],
        labels: vec![1],
    };
    let cfg = LossConfig::default();
    let out = total_loss(&batch, &m, &scope, &cfg).unwrap().breakdown;
    let txt = m
        .tp_forward(&m.aggregate(&text, Modality::Text).unwrap(), 1.0)
        .unwrap();
    let d =
        hasten::hyp_geom::geodesic_distance(&LorentzPoint::origin(3, 1.0).unwrap(), &txt).unwrap();
    assert!((out.hier_txt_txt - softplus(cfg.delta - d)).abs() < 1e-14);
}

#[test]
fn tree_fit_halves_the_loss_in_200_steps() {
    let tree = pets_tree();
    let cfg = RunConfig::tree_fit(16);
    let world = cfg.world(&tree).unwrap();
    let fit = fit_tree(&tree, &world, &cfg, 200).unwrap();
    let (before, after) = fit.probe_loss;
    assert!(after < before);
    assert!(
        fit.loss_drop() >= 0.5,
        "drop {} ({before} → {after})",
        fit.loss_drop()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contrastive_ignores_batch_order(seed in 0u64..10_000, n in 2usize..9, tau in 0.05f64..1.0) {
        let mut rng = rng::stream(seed);
        let imgs: Vec<LorentzPoint> = (0..n).map(|_| lift(&random_vec(&mut rng, 3, 0.7))).collect();
        let txts: Vec<LorentzPoint> = (0..n).map(|_| lift(&random_vec(&mut rng, 3, 0.7))).collect();
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut order, &mut rng);
        let pi: Vec<LorentzPoint> = order.iter().map(|&i| imgs[i].clone()).collect();
        let pt: Vec<LorentzPoint> = order.iter().map(|&i| txts[i].clone()).collect();
        let a = contrastive_batch(&imgs, &txts, tau).unwrap();
        let b = contrastive_batch(&pi, &pt, tau).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn breakdown_identity(
        seed in 0u64..10_000,
        n in 1usize..7,
        l1 in 0.0f64..2.0,
        l2 in 0.0f64..2.0,
        beta in 0.0f64..2.0,
        ancestors: bool,
    ) {
        let (m, batch, scope) = random_problem(seed, n);
        let cfg = LossConfig { lambda1: l1, lambda2: l2, beta, image_hier_ancestors: ancestors, ..LossConfig::default() };
        let b = total_loss(&batch, &m, &scope, &cfg).unwrap().breakdown;
        let sum = l1 * b.hier_txt_txt + l2 * b.hier_txt_img + b.contrastive + beta * b.tp_reg;
        prop_assert!((b.total - sum).abs() < 1e-12);
        prop_assert_eq!(b.weights_used, (l1, l2, beta));
        prop_assert!(b.contrastive >= 0.0 && b.hier_txt_txt > 0.0 && b.hier_txt_img > 0.0 && b.tp_reg >= 0.0);
    }
}

use hasten::anchoring_model::AnchoringModel;
use hasten::hyp_geom::{grad_check, LorentzPoint};
use hasten::losses::*;
use hasten::rng;
use rand::Rng;

const D: usize = 4;
const CONFIGS: u64 = 100;
const TOL: f64 = 1e-4;

fn random_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    rng::normal_vec(rng, dim)
        .into_iter()
        .map(|x| x * scale)
        .collect()
}

fn lift(v: &[f64]) -> LorentzPoint {
    LorentzPoint::lift(v.to_vec(), 1.0).unwrap()
}

/// Checks a pair gradient against central differences over the concatenated
/// spatial parts of both points.
fn check_pair<F, G>(value: F, grad: G, p: &[f64], q: &[f64]) -> f64
where
    F: Fn(&LorentzPoint, &LorentzPoint) -> f64,
    G: Fn(&LorentzPoint, &LorentzPoint) -> (Vec<f64>, Vec<f64>),
{
    let (dp, dq) = grad(&lift(p), &lift(q));
    let analytic: Vec<f64> = dp.into_iter().chain(dq).collect();
    let x: Vec<f64> = p.iter().chain(q).copied().collect();
    let f = |v: &[f64]| value(&lift(&v[..D]), &lift(&v[D..]));
    grad_check(f, &analytic, &x).unwrap()
}

fn pair(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let p = random_vec(rng, D, 0.7);
    let q = random_vec(rng, D, 1.0);
    (p, q)
}

#[test]
fn text_text_gradient_matches_central_differences() {
    let mut rng = rng::stream(21);
    let mut worst = 0.0_f64;
    for _ in 0..CONFIGS {
        let (p, q) = pair(&mut rng);
        let err = check_pair(
            |a, b| text_text_hier(a, b, 0.1, 0.1).unwrap(),
            |a, b| {
                let g = text_text_hier_grad(a, b, 0.1, 0.1).unwrap();
                (g.d_p, g.d_q)
            },
            &p,
            &q,
        );
        worst = worst.max(err);
    }
    assert!(worst < TOL, "text-text relative error {worst:e}");
}

#[test]
fn text_image_gradient_matches_central_differences() {
    let mut rng = rng::stream(22);
    let mut worst = 0.0_f64;
    for _ in 0..CONFIGS {
        let (p, q) = pair(&mut rng);
        let err = check_pair(
            |a, b| text_image_hier(a, b, 0.1).unwrap(),
            |a, b| {
                let g = text_image_hier_grad(a, b, 0.1).unwrap();
                (g.d_p, g.d_q)
            },
            &p,
            &q,
        );
        worst = worst.max(err);
    }
    assert!(worst < TOL, "text-image relative error {worst:e}");
}

#[test]
fn contrastive_gradient_matches_central_differences() {
    let mut rng = rng::stream(23);
    let mut worst = 0.0_f64;
    for k in 0..CONFIGS {
        let n = 2 + (k % 4) as usize;
        let tau = [0.07, 0.5, 1.0][(k % 3) as usize];
        let x = random_vec(&mut rng, 2 * n * D, 0.5);
        let split = |v: &[f64]| -> (Vec<LorentzPoint>, Vec<LorentzPoint>) {
            let pts: Vec<LorentzPoint> = v.chunks(D).map(lift).collect();
            let (a, b) = pts.split_at(n);
            (a.to_vec(), b.to_vec())
        };
        let (imgs, txts) = split(&x);
        let g = contrastive_batch_grad(&imgs, &txts, tau).unwrap();
        let analytic: Vec<f64> = g.d_images.into_iter().chain(g.d_texts).flatten().collect();
        let f = |v: &[f64]| {
            let (a, b) = split(v);
            contrastive_batch(&a, &b, tau).unwrap()
        };
        worst = worst.max(grad_check(f, &analytic, &x).unwrap());
    }
    assert!(worst < TOL, "contrastive relative error {worst:e}");
}

/// Root at the origin, a fixed virtual parent, and live texts below it.
/// Scales keep the objective near unit size so central differences at
/// `h = 1e-5` stay above roundoff for small components.
fn random_setup(seed: u64) -> (AnchoringModel, Batch, HierarchyScope) {
    let mut rng = rng::stream(seed);
    let mut model = AnchoringModel::new(D, seed).unwrap();
    for _ in 0..1 + seed % 3 {
        model.begin_task();
    }
    let count = model.trainable_params().unwrap().len();
    model
        .set_trainable_params(&random_vec(&mut rng, count, 0.3))
        .unwrap();
    let nodes = vec![
        TextSource::Fixed(LorentzPoint::origin(D, 1.0).unwrap()),
        TextSource::Fixed(lift(&random_vec(&mut rng, D, 0.3))),
        TextSource::Live(random_vec(&mut rng, D, 0.5)),
        TextSource::Live(random_vec(&mut rng, D, 0.5)),
        TextSource::Live(random_vec(&mut rng, D, 0.5)),
    ];
    let scope = HierarchyScope {
        nodes,
        parents: vec![None, Some(0), Some(1), Some(1), Some(2)],
        edges: vec![(0, 1), (1, 2), (1, 3), (2, 4)],
    };
    let labels = [2, 3, 4, 4, 2, 3];
    let n = 2 + (seed % 5) as usize;
    let batch = Batch {
        features: (0..n).map(|_| random_vec(&mut rng, D, 0.5)).collect(),
        labels: labels[..n].to_vec(),
    };
    (model, batch, scope)
}

fn check_total(weights: (f64, f64, f64), ancestors: bool, seed_base: u64) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..CONFIGS {
        let (model, batch, scope) = random_setup(seed_base + k);
        let cfg = LossConfig {
            lambda1: weights.0,
            lambda2: weights.1,
            beta: weights.2,
            tau: 0.5,
            image_hier_ancestors: ancestors,
            ..LossConfig::default()
        };
        let out = total_loss(&batch, &model, &scope, &cfg).unwrap();
        let x = model.trainable_params().unwrap();
        let f = |p: &[f64]| {
            let mut probe = model.clone();
            probe.set_trainable_params(p).unwrap();
            total_loss(&batch, &probe, &scope, &cfg)
                .unwrap()
                .breakdown
                .total
        };
        worst = worst.max(grad_check(f, &out.grads.flatten(), &x).unwrap());
    }
    worst
}

#[test]
fn contrastive_term_through_the_model() {
    let worst = check_total((0.0, 0.0, 0.0), false, 1000);
    assert!(worst < TOL, "relative error {worst:e}");
}

#[test]
fn text_text_term_through_the_model() {
    let worst = check_total((1.0, 0.0, 0.0), false, 2000);
    assert!(worst < TOL, "relative error {worst:e}");
}

#[test]
fn text_image_term_through_the_model() {
    for ancestors in [false, true] {
        let worst = check_total((0.0, 1.0, 0.0), ancestors, 3000);
        assert!(
            worst < TOL,
            "ancestors={ancestors}: relative error {worst:e}"
        );
    }
}

#[test]
fn mapper_regularizer_through_the_model() {
    let worst = check_total((0.0, 0.0, 1.0), false, 4000);
    assert!(worst < TOL, "relative error {worst:e}");
}

#[test]
fn full_objective_through_the_model() {
    let worst = check_total((0.5, 0.1, 0.1), true, 5000);
    assert!(worst < TOL, "relative error {worst:e}");
}

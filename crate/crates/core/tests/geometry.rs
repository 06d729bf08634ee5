use hasten::hyp_geom::*;
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

fn lift(v: Vec<f64>, c: f64) -> LorentzPoint {
    LorentzPoint::lift(v, c).unwrap()
}

fn manifold_residual(p: &LorentzPoint) -> f64 {
    let n2: f64 = p.spatial().iter().map(|x| x * x).sum();
    let lhs = p.time() * p.time() - n2;
    (lhs - 1.0 / p.curvature()).abs() / (p.time() * p.time())
}

#[test]
fn distance_and_expm_match_the_oracle() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(11);
    let (mut worst_d, mut worst_e) = (0.0_f64, 0.0_f64);
    for k in 0..1000 {
        let dim = 2 + k % 7;
        let c = [1.0, 0.5, 2.0][k % 3];
        let scale = [0.05, 0.5, 2.0][(k / 3) % 3];
        let p = random_vec(&mut rng, dim, scale);
        let q = random_vec(&mut rng, dim, scale);
        let ours = geodesic_distance(&lift(p.clone(), c), &lift(q.clone(), c)).unwrap();
        worst_d = worst_d.max(rel_err(ours, oracle.distance(&p, &q, c)));

        let v = random_vec(&mut rng, dim, scale);
        let reference = oracle.expm_spatial(&v);
        for (a, b) in expm_origin_spatial(&v).iter().zip(&reference) {
            worst_e = worst_e.max(rel_err(*a, *b));
        }
    }
    assert!(worst_d < 1e-10, "distance relative error {worst_d:e}");
    assert!(worst_e < 1e-10, "expm relative error {worst_e:e}");
}

#[test]
fn exterior_angle_matches_the_oracle_in_general_position() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(12);
    let mut worst = 0.0_f64;
    for k in 0..300 {
        let dim = 2 + k % 5;
        let p = random_vec(&mut rng, dim, 0.8);
        let q = random_vec(&mut rng, dim, 0.8);
        let ours = exterior_angle(&lift(p.clone(), 1.0), &lift(q.clone(), 1.0)).unwrap();
        worst = worst.max(rel_err(ours, oracle.exterior_angle(&p, &q, 1.0)));
    }
    assert!(worst < 1e-10, "exterior angle relative error {worst:e}");
}

#[test]
fn exterior_angle_matches_the_oracle_near_the_clamp() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(13);
    let mut worst = 0.0_f64;
    for k in 0..300 {
        let dim = 2 + k % 5;
        let p = random_vec(&mut rng, dim, 1.0);
        // Nearly collinear children, outward (angle near 0) and inward (near π).
        let t = if k % 2 == 0 { 1.5 } else { 0.5 };
        let wobble = 10f64.powf(-2.0 - (k % 3) as f64);
        let q: Vec<f64> = p
            .iter()
            .zip(random_vec(&mut rng, dim, wobble))
            .map(|(x, e)| t * x + e)
            .collect();
        let ours = exterior_angle(&lift(p.clone(), 1.0), &lift(q.clone(), 1.0)).unwrap();
        worst = worst.max(rel_err(ours, oracle.exterior_angle(&p, &q, 1.0)));
    }
    assert!(worst < 1e-8, "exterior angle relative error {worst:e}");
}

#[test]
fn aperture_matches_the_oracle() {
    let mut oracle = Oracle::new();
    let mut rng = rng::stream(14);
    for k in 0..200 {
        let p = random_vec(&mut rng, 3, [0.05, 0.3, 3.0][k % 3]);
        let c = [1.0, 0.5][k % 2];
        let ours = aperture(&lift(p.clone(), c), 0.1).unwrap();
        let r = oracle.aperture(&p, 0.1, c);
        assert!(rel_err(ours, r) < 1e-12, "{ours} {r} {p:?} {c}");
    }
}

#[test]
fn distance_from_origin_to_expm_is_tangent_norm() {
    let mut oracle = Oracle::new();
    let o = LorentzPoint::origin(2, 1.0).unwrap();
    let p = expm_origin(&TangentVector::new(vec![0.5, 0.0]).unwrap(), 1.0).unwrap();
    let d = geodesic_distance(&o, &p).unwrap();
    assert!((d - 0.5).abs() < 1e-15);
    assert!(rel_err(d, oracle.distance(&[0.0, 0.0], p.spatial(), 1.0)) < 1e-14);
}

#[test]
fn expm_of_unit_axis_is_sinh_one() {
    let mut oracle = Oracle::new();
    let s = expm_origin_spatial(&[1.0, 0.0]);
    let reference = oracle.expm_spatial(&[1.0, 0.0]);
    assert!(rel_err(s[0], reference[0]) < 1e-15);
    assert!((s[0] - 1.1752).abs() < 1e-4);
    assert_eq!(s[1], 0.0);
}

#[test]
fn softplus_matches_the_oracle() {
    let mut oracle = Oracle::new();
    for z in [-30.0, -5.0, -0.3, 0.0, 0.7, 5.0, 20.0, 40.0] {
        assert!(rel_err(softplus(z), oracle.softplus(z)) < 1e-14, "z = {z}");
    }
    assert!((softplus(-5.0) - 0.00672).abs() < 1e-5);
    assert!((softplus(20.0) - 20.0).abs() < 1e-8);
}

/// Point at geodesic distance `rho` from `(sinh a, 0)` in direction `phi`,
/// obtained by boosting the circle of radius `rho` around the origin.
fn on_circle_around(a: f64, rho: f64, phi: f64) -> Vec<f64> {
    let (x, y, t) = (rho.sinh() * phi.cos(), rho.sinh() * phi.sin(), rho.cosh());
    vec![x * a.cosh() + t * a.sinh(), y]
}

#[test]
fn exterior_angle_is_smallest_straight_outward() {
    let a = 0.8_f64;
    let p = lift(vec![a.sinh(), 0.0], 1.0);
    let rho = 0.6;
    let angles: Vec<f64> = (0..360)
        .map(|k| {
            let phi = k as f64 * std::f64::consts::PI / 180.0;
            exterior_angle(&p, &lift(on_circle_around(a, rho, phi), 1.0)).unwrap()
        })
        .collect();
    let argmin = angles
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap()
        .0;
    assert_eq!(argmin, 0);
    assert!(angles[0] < 1e-6);
    assert!((angles[180] - std::f64::consts::PI).abs() < 1e-6);
}

#[test]
fn interpolated_points_split_the_distance() {
    let mut rng = rng::stream(15);
    for _ in 0..100 {
        let p = lift(random_vec(&mut rng, 4, 1.0), 1.0);
        let q = lift(random_vec(&mut rng, 4, 1.0), 1.0);
        let total = geodesic_distance(&p, &q).unwrap();
        for t in [0.0, 0.1, 0.25, 0.5, 0.9, 1.0] {
            let g = geodesic_interpolate(&p, &q, t).unwrap();
            assert!((geodesic_distance(&p, &g).unwrap() - t * total).abs() < 1e-6);
            assert!(manifold_residual(&g) < 1e-7);
        }
        let m = geodesic_interpolate(&p, &q, 0.5).unwrap();
        let (a, b) = (
            geodesic_distance(&p, &m).unwrap(),
            geodesic_distance(&m, &q).unwrap(),
        );
        assert!((a - b).abs() < 1e-7 && (a - total / 2.0).abs() < 1e-7);
    }
}

#[test]
fn analytic_gradients_pass_grad_check() {
    let mut rng = rng::stream(16);
    for _ in 0..50 {
        let p = random_vec(&mut rng, 4, 0.7);
        let q = random_vec(&mut rng, 4, 0.7);
        let fixed = lift(p.clone(), 1.0);
        let g = geodesic_distance_grad(&fixed, &lift(q.clone(), 1.0)).unwrap();
        let err = grad_check(
            |x| geodesic_distance(&fixed, &lift(x.to_vec(), 1.0)).unwrap(),
            &g.d_q,
            &q,
        )
        .unwrap();
        assert!(err < 1e-4, "distance gradient error {err:e}");

        // A child placed near the parent's cone.
        let parent = lift(p.iter().map(|x| x * 1.5).collect(), 1.0);
        let child: Vec<f64> = p
            .iter()
            .zip(random_vec(&mut rng, 4, 0.2))
            .map(|(x, e)| 2.0 * x + e)
            .collect();
        let g = entailment_penalty_grad(&parent, &lift(child.clone(), 1.0), 0.1).unwrap();
        let err = grad_check(
            |x| entailment_penalty(&parent, &lift(x.to_vec(), 1.0), 0.1).unwrap(),
            &g.d_q,
            &child,
        )
        .unwrap();
        assert!(err < 1e-4, "entailment gradient error {err:e}");
    }
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0_f64, dim)
}

proptest! {
    #[test]
    fn distance_is_a_metric(p in point(4), q in point(4), r in point(4)) {
        let (p, q, r) = (lift(p, 1.0), lift(q, 1.0), lift(r, 1.0));
        let d_pq = geodesic_distance(&p, &q).unwrap();
        prop_assert!(d_pq >= 0.0);
        prop_assert_eq!(geodesic_distance(&p, &p).unwrap(), 0.0);
        prop_assert!((d_pq - geodesic_distance(&q, &p).unwrap()).abs() <= 1e-12 * d_pq.max(1.0));
        let via = geodesic_distance(&p, &r).unwrap() + geodesic_distance(&r, &q).unwrap();
        prop_assert!(d_pq <= via + 1e-9);
    }

    #[test]
    fn constructed_points_stay_on_the_manifold(v in point(5), w in point(5), t in 0.0..=1.0_f64, c in 0.2..4.0_f64) {
        let p = lift(v.clone(), c);
        prop_assert!(manifold_residual(&p) < 1e-7);
        let e = expm_origin(&TangentVector::new(v.clone()).unwrap(), c).unwrap();
        prop_assert!(manifold_residual(&e) < 1e-7);
        let g = geodesic_interpolate(&p, &lift(w, c), t).unwrap();
        prop_assert!(manifold_residual(&g) < 1e-7);
    }

    #[test]
    fn aperture_shrinks_with_norm(kappa in 0.01..0.5_f64, c in 0.2..4.0_f64, dir in point(3)) {
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let start = 2.0 * kappa / c.sqrt() * 1.001;
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let r = start * (1.0 + 0.05 * k as f64);
            let p = lift(dir.iter().map(|x| x * r / n).collect(), c);
            let a = aperture(&p, kappa).unwrap();
            prop_assert!(a < last);
            last = a;
        }
    }

    #[test]
    fn penalty_grows_with_the_exterior_angle(a in 0.2..2.0_f64, rho in 0.1..2.0_f64) {
        let p = lift(vec![a.sinh(), 0.0], 1.0);
        let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 0..=60 {
            let phi = k as f64 * std::f64::consts::PI / 60.0;
            let q = lift(on_circle_around(a, rho, phi), 1.0);
            let ext = exterior_angle(&p, &q).unwrap();
            let pen = entailment_penalty(&p, &q, 0.1).unwrap();
            if ext >= last.0 {
                prop_assert!(pen >= last.1);
            }
            last = (ext, pen);
        }
    }

    #[test]
    fn radius_never_grows_on_the_way_to_the_origin(v in point(4)) {
        let p = lift(v, 1.0);
        let o = LorentzPoint::origin(4, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..=50 {
            let g = geodesic_interpolate(&p, &o, k as f64 / 50.0).unwrap();
            let r = geodesic_distance(&g, &o).unwrap();
            prop_assert!(r <= last + 1e-9);
            last = r;
        }
    }
}

//! Fits the four-breed pets tree as one task and reports cone violations,
//! depth radii and the loss drop. Overrides: `key=value` arguments.

use hasten::cil_harness::*;

fn main() {
    let mut table = match serde_json::to_value(RunConfig::tree_fit(16)).unwrap() {
        serde_json::Value::Object(m) => m,
        _ => unreachable!(),
    };
    let mut steps = 500;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        if k == "steps" {
            steps = v.parse().unwrap();
            continue;
        }
        table.insert(k.to_string(), serde_json::from_str(v).unwrap());
    }
    let cfg: RunConfig = serde_json::from_value(serde_json::Value::Object(table)).unwrap();
    let tree = pets_tree();
    let world = cfg.world(&tree).unwrap();
    let t = std::time::Instant::now();
    let fit = fit_tree(&tree, &world, &cfg, steps).unwrap();
    println!(
        "cone={:.3} depth={:?} drop={:.3} probe={:?} first={:.3} last={:.3} {:?} {:?}",
        fit.cone_violation,
        fit.depth_profile,
        fit.loss_drop(),
        fit.probe_loss,
        fit.log.losses[0],
        fit.log.losses.last().unwrap(),
        fit.log.last_breakdown,
        t.elapsed()
    );
}

//! Runs the bundled benchmark over five seeds for the full configuration and
//! its ablations and prints a compact comparison.
//!
//! Overrides come as `key=value` arguments, e.g. `cargo run --release
//! --example sweep -- lr=0.01 noise_scale=0.2`.

use hasten::cil_harness::*;
use hasten::semantic_tree::make_task_stream;

struct Row {
    a_final: f64,
    a_bar: f64,
    drift: f64,
    forget: f64,
    shift: f64,
    cone: f64,
    mono: bool,
}

fn run(cfg: &RunConfig) -> Row {
    let tree = benchmark_tree();
    let world = cfg.world(&tree).unwrap();
    let stream = make_task_stream(&benchmark_classes(), 0, 5, cfg.seed).unwrap();
    let out = run_protocol_detailed(&tree, &world, &stream, cfg).unwrap();
    let acc = &out.metrics.acc;
    let emb = node_embeddings(&out.learner, &tree, &world, cfg.curvature).unwrap();
    let cone = cone_violation_rate(&tree, &emb, cfg.kappa).unwrap();
    let mono = radius_increases_with_depth(&depth_radius_profile(&tree, &emb));
    Row {
        a_final: out.metrics.final_accuracy(),
        a_bar: out.metrics.mean_accuracy(),
        drift: out.first_task_drift,
        forget: acc[0][0] - acc.last().unwrap()[0],
        shift: out.mapper_shift.iter().sum::<f64>(),
        cone,
        mono,
    }
}

fn main() {
    let mut table = match serde_json::to_value(RunConfig::benchmark()).unwrap() {
        serde_json::Value::Object(m) => m,
        _ => unreachable!(),
    };
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        table.insert(
            k.to_string(),
            serde_json::from_str(v).unwrap_or(serde_json::Value::String(v.into())),
        );
    }
    let base: RunConfig = serde_json::from_value(serde_json::Value::Object(table)).expect("config");
    let variants: [(&str, fn(&mut RunConfig)); 5] = [
        ("full", |_| {}),
        ("no-hier", |c| c.use_hierarchy = false),
        ("no-proj", |c| c.use_projection = false),
        ("no-fusion", |c| c.use_fusion = false),
        ("both-off", |c| {
            c.use_hierarchy = false;
            c.use_projection = false
        }),
    ];
    let seeds: Vec<u64> = (0..5).map(|s| 1993 + s).collect();
    let rows: Vec<Vec<Row>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let base = base.clone();
                scope.spawn(move || {
                    variants
                        .iter()
                        .map(|(_, tweak)| {
                            let mut cfg = RunConfig {
                                seed,
                                ..base.clone()
                            };
                            tweak(&mut cfg);
                            run(&cfg)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (v, (name, _)) in variants.iter().enumerate() {
        let mean =
            |f: fn(&Row) -> f64| rows.iter().map(|r| f(&r[v])).sum::<f64>() / rows.len() as f64;
        let wins = rows.iter().filter(|r| r[0].a_final >= r[v].a_final).count();
        let per_seed: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.3}", r[v].a_final))
            .collect();
        println!(
            "{name:>9}: A_B={:.4} Ā={:.4} drift={:.3} forget={:.3} shift={:.3} cone={:.3} mono={} full>=:{wins}/5 [{}]",
            mean(|r| r.a_final),
            mean(|r| r.a_bar),
            mean(|r| r.drift),
            mean(|r| r.forget),
            mean(|r| r.shift),
            mean(|r| r.cone),
            rows.iter().filter(|r| r[v].mono).count(),
            per_seed.join(" ")
        );
    }
    let drift_ok = rows.iter().filter(|r| r[0].drift < r[4].drift).count();
    println!("drift full<both-off on {drift_ok}/5");
}

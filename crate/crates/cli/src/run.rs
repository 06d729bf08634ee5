//! `run`: one protocol execution per seed and variant, each in its own
//! directory `<root>/<name>/<variant>/seed-<n>/`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use hasten::cil_harness::{
    cone_violation_rate, depth_radius_profile, embedding_dump, node_embeddings,
    radius_increases_with_depth, run_protocol_detailed, Checkpoint, RunConfig, RunOutcome,
    CHECKPOINT_VERSION,
};
use hasten::semantic_tree::{make_task_stream, SemanticTree, TaskStream};
use serde_json::json;

use crate::config::{Echo, Inputs, RunFile};
use crate::error::{CliError, CliResult};

/// Version of the run-directory layout.
pub const ARTIFACT_VERSION: u32 = 1;
pub const OUTPUT_ROOT_ENV: &str = "HASTEN_OUTPUT_ROOT";

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const NULL_SPACE: &str = "null_space.json";
pub const EMBEDDINGS: &str = "embeddings.json";
pub const CHECKPOINT: &str = "checkpoint.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    NoHierarchy,
    NoProjection,
    FusionOff,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Self::NoHierarchy => "no-hierarchy",
            Self::NoProjection => "no-projection",
            Self::FusionOff => "fusion-off",
        }
    }

    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Self::NoHierarchy => cfg.use_hierarchy = false,
            Self::NoProjection => cfg.use_projection = false,
            Self::FusionOff => cfg.use_fusion = false,
        }
    }
}

/// `--output-root`, then the environment, then `runs`.
pub fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write(dir: &Path, file: &str, text: &str) -> CliResult<()> {
    let path = dir.join(file);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Runs every seed of `file` for the full model and each ablation. Returns
/// the run directories in execution order; stops at the first failure.
pub fn cmd_run(file: &RunFile, ablations: &[Ablation], root: &Path) -> CliResult<Vec<PathBuf>> {
    let inputs = file.inputs()?;
    let mut variants: Vec<(&str, Option<Ablation>)> = vec![("full", None)];
    for &a in ablations {
        if !variants.iter().any(|(_, v)| *v == Some(a)) {
            variants.push((a.name(), Some(a)));
        }
    }
    let mut dirs = Vec::new();
    for &seed in &file.seeds {
        let stream = make_task_stream(&inputs.classes, file.base, file.increment, seed)
            .map_err(|e| CliError::Config(e.to_string()))?;
        for &(variant, ablation) in &variants {
            let mut echo = file.echo(seed);
            if let Some(a) = ablation {
                a.apply(&mut echo.config);
            }
            let dir = root
                .join(&file.name)
                .join(variant)
                .join(format!("seed-{seed}"));
            log::info!("running {} seed {seed} into {}", variant, dir.display());
            run_one(&dir, variant, &echo, &inputs, &stream)?;
            dirs.push(dir);
        }
    }
    Ok(dirs)
}

/// One run. The manifest is written first with status `running` and
/// rewritten as `complete` or `failed` when the run ends.
pub fn run_one(
    dir: &Path,
    variant: &str,
    echo: &Echo,
    inputs: &Inputs,
    stream: &TaskStream,
) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let started = unix_now();
    let manifest = |status: &str, error: Option<&str>, outputs: &[&str]| {
        json!({
            "artifact_version": ARTIFACT_VERSION,
            "name": echo.name,
            "variant": variant,
            "seed": echo.config.seed,
            "split": stream.split_label,
            "tree_sha256": inputs.tree_sha256,
            "config": echo,
            "started_unix": started,
            "finished_unix": if status == "running" { None } else { Some(unix_now()) },
            "status": status,
            "error": error,
            "outputs": outputs,
        })
    };
    write(dir, MANIFEST, &pretty(&manifest("running", None, &[])))?;
    let mut written: Vec<&str> = Vec::new();
    let result = write_outputs(dir, echo, inputs, stream, &mut written);
    let final_manifest = match &result {
        Ok(()) => manifest("complete", None, &written),
        Err(e) => manifest("failed", Some(&e.to_string()), &written),
    };
    write(dir, MANIFEST, &pretty(&final_manifest))?;
    result
}

fn write_outputs(
    dir: &Path,
    echo: &Echo,
    inputs: &Inputs,
    stream: &TaskStream,
    written: &mut Vec<&'static str>,
) -> CliResult<()> {
    let cfg = &echo.config;
    write(dir, CONFIG_ECHO, &echo.to_toml()?)?;
    written.push(CONFIG_ECHO);
    let world = cfg.world(&inputs.tree)?;
    let out = run_protocol_detailed(&inputs.tree, &world, stream, cfg)?;

    write(dir, METRICS_CSV, &metrics_csv(&out))?;
    written.push(METRICS_CSV);
    write(
        dir,
        METRICS_JSON,
        &pretty(&metrics_json(echo, stream, &inputs.tree, &world, &out)?),
    )?;
    written.push(METRICS_JSON);
    write(
        dir,
        NULL_SPACE,
        &pretty(&out.learner.null_space.diagnostics()),
    )?;
    written.push(NULL_SPACE);
    let dump = embedding_dump(&out.learner, &inputs.tree, &world, cfg.curvature)?;
    write(dir, EMBEDDINGS, &pretty(&serde_json::to_value(dump)?))?;
    written.push(EMBEDDINGS);
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        tree: inputs.tree.to_json(),
        stream: stream.clone(),
        learner: out.learner,
    };
    write(dir, CHECKPOINT, &ck.to_json()?)?;
    written.push(CHECKPOINT);
    Ok(())
}

fn metrics_csv(out: &RunOutcome) -> String {
    let mut s = String::from("stage,task,accuracy\n");
    for (b, row) in out.metrics.acc.iter().enumerate() {
        for (t, a) in row.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", b + 1, t + 1, a));
        }
    }
    s
}

fn metrics_json(
    echo: &Echo,
    stream: &TaskStream,
    tree: &SemanticTree,
    world: &hasten::synthetic_encoder::SyntheticWorld,
    out: &RunOutcome,
) -> CliResult<serde_json::Value> {
    let cfg = &echo.config;
    let emb = node_embeddings(&out.learner, tree, world, cfg.curvature)?;
    let profile = depth_radius_profile(tree, &emb);
    Ok(json!({
        "seed": cfg.seed,
        "split": stream.split_label,
        "tasks": stream.tasks,
        "config": echo,
        "acc": out.metrics.acc,
        "stage_accuracy": out.metrics.stage_accuracy,
        "A_bar": out.metrics.mean_accuracy(),
        "A_B": out.metrics.final_accuracy(),
        "diagnostics": {
            "cone_violation_rate": cone_violation_rate(tree, &emb, cfg.kappa)?,
            "depth_radius_profile": profile,
            "radius_increases_with_depth": radius_increases_with_depth(&profile),
            "first_task_drift": out.first_task_drift,
            "mapper_shift": out.mapper_shift,
        },
    }))
}

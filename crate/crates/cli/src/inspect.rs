//! Commands that read finished runs or tree files: `validate-tree`,
//! `traverse`, `report` and `export-embeddings`.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use hasten::cil_harness::{
    build_pool, embedding_dump, parse_pool, traverse, Checkpoint, TraversalStep, TEST_IMAGES,
};
use hasten::semantic_tree::{
    check_coverage, normalize_name, parse_class_list, parse_tree, structural_errors, SemanticTree,
};
use hasten::synthetic_encoder::SyntheticWorld;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::run::{CHECKPOINT, METRICS_JSON};

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

/// Writes `text` to `out`, or to stdout when `out` is `None`.
pub fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub structural_errors: Vec<String>,
    pub missing_real: Vec<String>,
    pub unclaimed_leaves: Vec<String>,
    pub real_internal_nodes: Vec<String>,
}

/// Structural checks, then coverage against `classes` when given. The
/// report is produced on every path; the error carries the exit code.
pub fn validate_tree(
    tree_text: &str,
    classes_text: Option<&str>,
) -> (ValidationReport, CliResult<()>) {
    let mut report = ValidationReport {
        structural_errors: structural_errors(tree_text)
            .iter()
            .map(|e| e.to_string())
            .collect(),
        ..Default::default()
    };
    if !report.structural_errors.is_empty() {
        let n = report.structural_errors.len();
        return (report, Err(CliError::Structural(format!("{n} problem(s)"))));
    }
    let tree = match parse_tree(tree_text) {
        Ok(t) => t,
        Err(e) => {
            report.structural_errors.push(e.to_string());
            return (report, Err(CliError::Structural(e.to_string())));
        }
    };
    let Some(classes_text) = classes_text else {
        return (report, Ok(()));
    };
    let classes = match parse_class_list(classes_text) {
        Ok(c) => c,
        Err(e) => return (report, Err(CliError::Runtime(format!("class list: {e}")))),
    };
    let coverage = check_coverage(&tree, &classes);
    report.missing_real = coverage.missing_real.clone();
    report.unclaimed_leaves = coverage.unclaimed_leaves.clone();
    report.real_internal_nodes = coverage.real_internal_nodes.clone();
    if coverage.is_complete() {
        (report, Ok(()))
    } else {
        let msg = format!(
            "{} missing class(es), {} unclaimed leaf(s)",
            report.missing_real.len(),
            report.unclaimed_leaves.len()
        );
        (report, Err(CliError::Coverage(msg)))
    }
}

pub fn cmd_validate_tree(
    tree_path: &Path,
    classes_path: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<()> {
    let tree_text = read(tree_path)?;
    let classes_text = classes_path.map(read).transpose()?;
    let (report, verdict) = validate_tree(&tree_text, classes_text.as_deref());
    emit(&pretty(&report)?, out)?;
    verdict
}

/// A finished run loaded from its checkpoint.
pub struct LoadedRun {
    pub checkpoint: Checkpoint,
    pub tree: SemanticTree,
    pub world: SyntheticWorld,
}

pub fn load_run(run_dir: &Path) -> CliResult<LoadedRun> {
    let checkpoint = Checkpoint::from_json(&read(&run_dir.join(CHECKPOINT))?)?;
    let tree = parse_tree(&checkpoint.tree).map_err(|e| CliError::Structural(e.to_string()))?;
    let real: Vec<String> = checkpoint.stream.tasks.iter().flatten().cloned().collect();
    let tree = tree.with_real_classes(&real);
    let world = checkpoint.config.world(&tree)?;
    Ok(LoadedRun {
        checkpoint,
        tree,
        world,
    })
}

/// Traversal of test image `image` of `class`. Without a pool file the pool
/// holds every tree node.
pub fn run_traversal(
    run: &LoadedRun,
    class: &str,
    pool_text: Option<&str>,
    steps: usize,
    image: usize,
) -> CliResult<Vec<TraversalStep>> {
    let class = normalize_name(class);
    let known = run
        .tree
        .id(&class)
        .is_some_and(|id| !run.tree.is_virtual(id));
    if !known {
        return Err(CliError::Runtime(format!("unknown class `{class}`")));
    }
    let pool = match pool_text {
        Some(text) => {
            let map = parse_pool(text).map_err(|e| CliError::Config(format!("pool file: {e}")))?;
            build_pool(&run.tree, &run.world, Some(&map), false)?
        }
        None => build_pool(&run.tree, &run.world, None, true)?,
    };
    let images = run.world.sample_images(&class, image + 1, TEST_IMAGES)?;
    let c = run.checkpoint.config.curvature;
    let t = traverse(
        &run.checkpoint.learner,
        &run.world,
        &images[image],
        &pool,
        steps,
        c,
    )?;
    Ok(t.path)
}

pub fn cmd_traverse(
    run_dir: &Path,
    class: &str,
    pool: Option<&Path>,
    steps: usize,
    image: usize,
    out: Option<&Path>,
) -> CliResult<()> {
    let run = load_run(run_dir)?;
    let pool_text = pool.map(read).transpose()?;
    let path = run_traversal(&run, class, pool_text.as_deref(), steps, image)?;
    emit(&pretty(&path)?, out)
}

pub fn cmd_export_embeddings(
    run_dir: &Path,
    out: Option<&Path>,
    world_out: Option<&Path>,
) -> CliResult<()> {
    let run = load_run(run_dir)?;
    let c = run.checkpoint.config.curvature;
    let dump = embedding_dump(&run.checkpoint.learner, &run.tree, &run.world, c)?;
    emit(&pretty(&dump)?, out)?;
    if let Some(p) = world_out {
        emit(&pretty(&run.world.dump())?, Some(p))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Md,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub a_bar: f64,
    pub a_b: f64,
}

/// Run directories under `dir`: itself if it holds metrics, else every
/// descendant that does, in path order.
fn metric_dirs(dir: &Path) -> Vec<PathBuf> {
    if dir.join(METRICS_JSON).is_file() {
        return vec![dir.to_path_buf()];
    }
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    subdirs.iter().flat_map(|d| metric_dirs(d)).collect()
}

fn read_row(dir: &Path) -> CliResult<ReportRow> {
    let v: serde_json::Value = serde_json::from_str(&read(&dir.join(METRICS_JSON))?)?;
    let field = |k: &str| {
        v[k].as_f64()
            .ok_or_else(|| CliError::Runtime(format!("{} lacks `{k}`", dir.display())))
    };
    Ok(ReportRow {
        run: dir.display().to_string(),
        a_bar: field("A_bar")?,
        a_b: field("A_B")?,
    })
}

/// Rows for every readable run, sorted by Ā descending. Unreadable runs are
/// skipped with a warning.
pub fn collect_rows(dirs: &[PathBuf]) -> CliResult<Vec<ReportRow>> {
    if dirs.is_empty() {
        return Err(CliError::Config(
            "report needs at least one run directory".into(),
        ));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let found = metric_dirs(dir);
        if found.is_empty() {
            log::warn!("skipping {}: no {METRICS_JSON}", dir.display());
        }
        for d in found {
            match read_row(&d) {
                Ok(r) => rows.push(r),
                Err(e) => log::warn!("skipping {}: {e}", d.display()),
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Runtime("no completed runs to report".into()));
    }
    rows.sort_by(|a, b| b.a_bar.total_cmp(&a.a_bar).then_with(|| a.run.cmp(&b.run)));
    Ok(rows)
}

pub fn render(rows: &[ReportRow], format: Format) -> String {
    let mut s = String::new();
    match format {
        Format::Csv => {
            s.push_str("run,A_bar,A_B\n");
            for r in rows {
                let run = if r.run.contains([',', '"']) {
                    format!("\"{}\"", r.run.replace('"', "\"\""))
                } else {
                    r.run.clone()
                };
                s.push_str(&format!("{run},{:.4},{:.4}\n", r.a_bar, r.a_b));
            }
        }
        Format::Md => {
            s.push_str("| run | Ā | A_B |\n|---|---:|---:|\n");
            for r in rows {
                s.push_str(&format!(
                    "| {} | {:.4} | {:.4} |\n",
                    r.run.replace('|', "\\|"),
                    r.a_bar,
                    r.a_b
                ));
            }
        }
    }
    s
}

pub fn cmd_report(dirs: &[PathBuf], format: Format, out: Option<&Path>) -> CliResult<()> {
    let rows = collect_rows(dirs)?;
    emit(&render(&rows, format), out)
}

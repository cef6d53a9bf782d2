//! Sequential runs of many experiments from a JSON manifest.
//!
//! A manifest is a JSON array of experiment configurations. Relative `out`
//! and `dump_trajectory` paths are resolved against the suite output
//! directory. After all runs, size series of the same statistic are
//! collected into `trends.json`.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::experiment::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutcome};
use crate::stats::{summarize, trend_check, TrendPoint, TrendReport, TrendSeries};

pub const TRENDS_FILE: &str = "trends.json";
pub const ERRORS_FILE: &str = "suite-errors.json";

pub fn parse_manifest(text: &str) -> Result<Vec<ExperimentConfig>> {
    let configs: Vec<ExperimentConfig> = serde_json::from_str(text)?;
    if configs.is_empty() {
        return Err(LabError::usage("manifest lists no experiments"));
    }
    Ok(configs)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ExperimentConfig>> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// A statistic tracked across sizes, with the fixed parameters as its key.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub experiment: ExperimentKind,
    pub key: String,
    pub series: TrendSeries,
    /// Absent when fewer than three sizes were run.
    pub report: Option<TrendReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub outputs: Vec<PathBuf>,
    pub trends: Vec<SeriesReport>,
    #[serde(skip)]
    pub outcomes: Vec<ExperimentOutcome>,
}

/// Size coordinate, limit and grouping key for statistics that have one.
/// Runs join a series only if their fixed parameters and replica counts agree.
fn trend_coordinates(cfg: &ExperimentConfig) -> Option<(f64, f64, String)> {
    let p = &cfg.params;
    let reps = cfg.replicas;
    match cfg.experiment {
        ExperimentKind::TreeCover => {
            let b = p.b?;
            Some((p.k? as f64, 2.0 * (b as f64).ln(), format!("b={b} replicas={reps}")))
        }
        ExperimentKind::TorusCover => Some((p.n? as f64, 4.0 / PI, format!("replicas={reps}"))),
        ExperimentKind::ThickPoints => Some((p.steps? as f64, 1.0 / PI, format!("replicas={reps}"))),
        ExperimentKind::EpsCover => {
            let n = p.n?;
            Some((1.0 / p.eps?, 2.0 / PI, format!("n={n} replicas={reps}")))
        }
        _ => None,
    }
}

pub fn collect_trends(outcomes: &[ExperimentOutcome]) -> Result<Vec<SeriesReport>> {
    let mut groups: BTreeMap<(ExperimentKind, String), (f64, Vec<TrendPoint>)> = BTreeMap::new();
    for o in outcomes {
        let Some((size, target, key)) = trend_coordinates(&o.config) else {
            continue;
        };
        let values = o.values();
        if values.len() < 2 {
            continue;
        }
        let entry = groups.entry((o.config.experiment, key)).or_insert((target, Vec::new()));
        entry.1.push(TrendPoint { size, summary: summarize(&values)? });
    }
    let mut reports = Vec::new();
    for ((experiment, key), (target, mut points)) in groups {
        points.sort_by(|a, b| a.size.total_cmp(&b.size));
        points.dedup_by(|a, b| a.size == b.size);
        let series = TrendSeries::new(points, target)?;
        let report = if series.points.len() >= 3 { Some(trend_check(&series)?) } else { None };
        reports.push(SeriesReport { experiment, key, series, report });
    }
    Ok(reports)
}

#[derive(Serialize)]
struct ErrorManifest<'a> {
    failed: &'a ExperimentConfig,
    error: String,
    completed: Vec<PathBuf>,
}

/// Runs every configuration in order. On the first failure the finished
/// result files are kept, `suite-errors.json` is written and the error is
/// returned.
pub fn run_suite(manifest: &[ExperimentConfig], out_dir: &Path, jobs: usize) -> Result<SuiteReport> {
    if manifest.is_empty() {
        return Err(LabError::usage("manifest lists no experiments"));
    }
    let configs: Vec<ExperimentConfig> = manifest
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.out = resolve(out_dir, &c.out);
            c.dump_trajectory = c.dump_trajectory.as_deref().map(|p| resolve(out_dir, p));
            c
        })
        .collect();
    let mut seen = HashSet::new();
    for c in &configs {
        if !seen.insert(c.out.clone()) {
            return Err(LabError::usage(format!("duplicate output path {}", c.out.display())));
        }
        c.validate()?;
    }
    std::fs::create_dir_all(out_dir)?;
    let mut outcomes = Vec::with_capacity(configs.len());
    for c in &configs {
        match run_experiment(c, jobs) {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                let record = ErrorManifest {
                    failed: c,
                    error: e.to_string(),
                    completed: outcomes.iter().map(|o| o.config.out.clone()).collect(),
                };
                std::fs::write(out_dir.join(ERRORS_FILE), serde_json::to_string_pretty(&record)?)?;
                return Err(e);
            }
        }
    }
    let trends = collect_trends(&outcomes)?;
    let mut text = serde_json::to_string_pretty(&trends)?;
    text.push('\n');
    std::fs::write(out_dir.join(TRENDS_FILE), text)?;
    Ok(SuiteReport { outputs: configs.into_iter().map(|c| c.out).collect(), trends, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_errors() {
        assert!(matches!(parse_manifest("[]"), Err(LabError::Usage(_))));
        assert!(matches!(parse_manifest("{"), Err(LabError::Json(_))));
        let one = r#"[{"experiment":"tree-cover","b":2,"k":3,"replicas":5,"seed":1,"out":"a.csv"}]"#;
        assert_eq!(parse_manifest(one).unwrap().len(), 1);
        let typo = r#"[{"experiment":"tree-cover","bb":2,"k":3,"replicas":5,"seed":1,"out":"a.csv"}]"#;
        assert!(parse_manifest(typo).is_err());
    }

    #[test]
    fn duplicate_outputs_are_rejected_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"[
            {"experiment":"tree-cover","b":2,"k":3,"replicas":5,"seed":1,"out":"a.csv"},
            {"experiment":"tree-cover","b":2,"k":4,"replicas":5,"seed":1,"out":"a.csv"}
        ]"#;
        let err = run_suite(&parse_manifest(text).unwrap(), dir.path(), 1).unwrap_err();
        assert!(matches!(err, LabError::Usage(_)));
        assert!(!dir.path().join("a.csv").exists());
    }

    #[test]
    fn tree_series_produce_a_trend() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"[
            {"experiment":"tree-cover","b":2,"k":3,"replicas":30,"seed":1,"out":"k3.csv"},
            {"experiment":"tree-cover","b":2,"k":4,"replicas":30,"seed":1,"out":"k4.csv"},
            {"experiment":"tree-cover","b":2,"k":5,"replicas":30,"seed":1,"out":"k5.json","format":"json"},
            {"experiment":"gw-survival","law":"0:0.25,2:0.75","steps":20,"replicas":30,"seed":1,"out":"gw.csv"}
        ]"#;
        let report = run_suite(&parse_manifest(text).unwrap(), dir.path(), 2).unwrap();
        assert_eq!(report.outputs.len(), 4);
        assert_eq!(report.trends.len(), 1);
        assert_eq!(report.trends[0].series.points.len(), 3);
        assert!(report.trends[0].report.is_some());
        assert!(dir.path().join(TRENDS_FILE).exists());
        assert!(dir.path().join("k5.json").exists());
    }
}

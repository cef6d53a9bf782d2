//! Experiment configurations, execution and result files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::branching::{gw_survives, special_descent, OffspringLaw};
use crate::error::{LabError, Result};
use crate::excursions::{classify_special_walk, count_excursions, SpecialVertexConfig, StopRule, TreeExcursionSpec};
use crate::graph_models::{exact_cover_time, TorusTopology, TreeTopology};
use crate::runner::run_replicas;
use crate::stats::summarize;
use crate::trajectory::{DumpTopology, StepRecorder};
use crate::walker::{
    default_torus_step_cap, default_tree_step_cap, normalized_torus_cover, run_eps_cover_proxy_observed,
    run_thick_points_observed, run_torus_cover, run_torus_cover_observed, run_tree_cover, TreeWalker, WalkConfig,
};

pub const CSV_SCHEMA_LINE: &str = "# covertime-lab results v1";
pub const CSV_HEADER: &str = "experiment,b,k,n,steps,eps,lambda,r,ell,replicate,seed,value,status,detail";
pub const JSON_SCHEMA: &str = "covertime-lab/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TreeCover,
    TorusCover,
    ThickPoints,
    EpsCover,
    Excursions,
    SpecialVertices,
    GwSurvival,
    OracleCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TreeCover => "tree-cover",
            ExperimentKind::TorusCover => "torus-cover",
            ExperimentKind::ThickPoints => "thick-points",
            ExperimentKind::EpsCover => "eps-cover",
            ExperimentKind::Excursions => "excursions",
            ExperimentKind::SpecialVertices => "special-vertices",
            ExperimentKind::GwSurvival => "gw-survival",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Experiment parameters; which ones are required depends on the kind.
/// For `gw-survival`, `steps` is the number of generations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<u32>,
    /// Offspring law `count:prob,...` for `gw-survival`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(flatten)]
    pub params: Params,
    pub replicas: u64,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_trajectory: Option<PathBuf>,
}

fn need<T: Copy>(value: Option<T>, field: &str, kind: ExperimentKind) -> Result<T> {
    value.ok_or_else(|| LabError::usage(format!("--{field} is required for {}", kind.name())))
}

/// Validated, experiment-specific view of a configuration.
#[derive(Debug, Clone)]
enum Plan {
    TreeCover { tree: TreeTopology },
    TorusCover { torus: TorusTopology },
    ThickPoints { steps: u64 },
    EpsCover { n: u32, eps: f64 },
    Excursions { tree: TreeTopology, spec: TreeExcursionSpec, lambda: f64 },
    Special { cfg: SpecialVertexConfig },
    Gw { law: OffspringLaw, generations: u32 },
    OracleTorus { torus: TorusTopology, exact: f64 },
    OracleTree { tree: TreeTopology, exact: f64 },
}

impl ExperimentConfig {
    fn plan(&self) -> Result<Plan> {
        let kind = self.experiment;
        let p = &self.params;
        if self.replicas == 0 {
            return Err(LabError::usage("--replicas must be >= 1"));
        }
        let tree = || TreeTopology::new(need(p.b, "b", kind)?, need(p.k, "k", kind)?);
        let torus = || TorusTopology::new(need(p.n, "n", kind)?);
        let plan = match kind {
            ExperimentKind::TreeCover => Plan::TreeCover { tree: tree()? },
            ExperimentKind::TorusCover => Plan::TorusCover { torus: torus()? },
            ExperimentKind::ThickPoints => {
                let steps = need(p.steps, "steps", kind)?;
                if steps < 2 {
                    return Err(LabError::usage("--steps must be >= 2 for thick-points"));
                }
                Plan::ThickPoints { steps }
            }
            ExperimentKind::EpsCover => {
                let n = need(p.n, "n", kind)?;
                let eps = need(p.eps, "eps", kind)?;
                TorusTopology::new(n)?;
                if !(eps > 0.0 && eps < 0.5) || eps * (n as f64) < 2.0 {
                    return Err(LabError::usage(format!(
                        "--eps must lie in (0, 1/2) with eps * n >= 2, got eps={eps}, n={n}"
                    )));
                }
                Plan::EpsCover { n, eps }
            }
            ExperimentKind::Excursions => {
                let tree = tree()?;
                let ell = need(p.ell, "ell", kind)?;
                let lambda = need(p.lambda, "lambda", kind)?;
                if ell == 0 || ell > tree.height() {
                    return Err(LabError::usage(format!("--ell must lie in 1..=k, got {ell}")));
                }
                StopRule::t_lambda(lambda, tree.branching(), tree.height())?;
                let inner = tree.level_range(ell).start;
                let spec = TreeExcursionSpec::new(&tree, inner, TreeTopology::ROOT)?;
                Plan::Excursions { tree, spec, lambda }
            }
            ExperimentKind::SpecialVertices => {
                let cfg = SpecialVertexConfig {
                    lambda: need(p.lambda, "lambda", kind)?,
                    r: need(p.r, "r", kind)?,
                    ell: need(p.ell, "ell", kind)?,
                    b: need(p.b, "b", kind)?,
                    k: need(p.k, "k", kind)?,
                };
                cfg.validate()?;
                Plan::Special { cfg }
            }
            ExperimentKind::GwSurvival => {
                let law = OffspringLaw::parse(
                    p.law.as_deref().ok_or_else(|| LabError::usage("--law is required for gw-survival"))?,
                )?;
                let generations = need(p.steps, "steps", kind)?;
                if generations == 0 || generations > u32::MAX as u64 {
                    return Err(LabError::usage("--steps (generations) must lie in 1..=2^32-1"));
                }
                Plan::Gw { law, generations: generations as u32 }
            }
            ExperimentKind::OracleCheck => match p.n {
                Some(_) => {
                    let torus = torus()?;
                    let exact = exact_cover_time(&torus, 0)?;
                    Plan::OracleTorus { torus, exact }
                }
                None => {
                    let tree = tree()?;
                    let exact = exact_cover_time(&tree, TreeTopology::ROOT)?;
                    Plan::OracleTree { tree, exact }
                }
            },
        };
        if self.dump_trajectory.is_some()
            && !matches!(plan, Plan::TorusCover { .. } | Plan::ThickPoints { .. } | Plan::EpsCover { .. })
        {
            return Err(LabError::usage(format!(
                "--dump-trajectory is only supported for lattice experiments, not {}",
                kind.name()
            )));
        }
        Ok(plan)
    }

    /// Checks every parameter without running anything.
    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicaStatus {
    Ok,
    CapExceeded,
}

impl ReplicaStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplicaStatus::Ok => "ok",
            ReplicaStatus::CapExceeded => "cap-exceeded",
        }
    }
}

/// Auxiliary named numbers attached to a row.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Detail(pub Vec<(String, f64)>);

impl Detail {
    fn push(&mut self, key: impl Into<String>, value: f64) {
        self.0.push((key.into(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaRow {
    pub replicate: u64,
    pub seed: u64,
    pub value: Option<f64>,
    pub status: ReplicaStatus,
    pub detail: Detail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub ok_replicas: u64,
    pub mean: Option<f64>,
    pub std_error: Option<f64>,
    pub ci95: Option<(f64, f64)>,
    pub reference: Option<f64>,
    pub z_score: Option<f64>,
    pub detail: Detail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub rows: Vec<ReplicaRow>,
    pub summary: SummaryRow,
}

impl ExperimentOutcome {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.value).collect()
    }
}

fn row(replicate: u64, seed: u64, value: f64, detail: Detail) -> ReplicaRow {
    ReplicaRow { replicate, seed, value: Some(value), status: ReplicaStatus::Ok, detail }
}

fn capped(replicate: u64, seed: u64, err: LabError) -> Result<ReplicaRow> {
    match err {
        LabError::CapExceeded { partial, .. } => {
            let mut detail = Detail::default();
            detail.push("steps", partial.steps as f64);
            detail.push("visited", partial.visited as f64);
            Ok(ReplicaRow { replicate, seed, value: None, status: ReplicaStatus::CapExceeded, detail })
        }
        other => Err(other),
    }
}

fn run_one(plan: &Plan, i: u64, seed: u64) -> Result<ReplicaRow> {
    let mut detail = Detail::default();
    match plan {
        Plan::TreeCover { tree } => match run_tree_cover(&WalkConfig::tree(tree.clone(), seed)) {
            Ok(rec) => {
                let k = tree.height() as f64;
                detail.push("cover", rec.cover_time as f64);
                detail.push("cover_return", rec.cover_and_return_time as f64);
                detail.push("returns", rec.returns_to_root as f64);
                let value = rec.cover_time as f64 / (tree.vertex_count() as f64 * k * k);
                Ok(row(i, seed, value, detail))
            }
            Err(e) => capped(i, seed, e),
        },
        Plan::TorusCover { torus } => match run_torus_cover(&WalkConfig::torus(*torus, 0, seed)) {
            Ok(t) => {
                detail.push("steps", t as f64);
                Ok(row(i, seed, normalized_torus_cover(torus.side(), t), detail))
            }
            Err(e) => capped(i, seed, e),
        },
        Plan::ThickPoints { steps } => {
            let field = run_thick_points_observed(seed, *steps, |_| {})?;
            detail.push("max_count", field.max_count() as f64);
            detail.push("distinct_sites", field.distinct_sites() as f64);
            Ok(row(i, seed, field.normalized_max(), detail))
        }
        Plan::EpsCover { n, eps } => {
            let cap = default_torus_step_cap(&TorusTopology::new(*n)?);
            match run_eps_cover_proxy_observed(*n, *eps, seed, cap, |_| {}) {
                Ok(rec) => {
                    detail.push("steps", rec.steps as f64);
                    detail.push("proxy_time", rec.proxy_time);
                    Ok(row(i, seed, rec.normalized, detail))
                }
                Err(e) => capped(i, seed, e),
            }
        }
        Plan::Excursions { tree, spec, lambda } => {
            let until = StopRule::t_lambda(*lambda, tree.branching(), tree.height())?;
            let source = TreeWalker::new(tree, TreeTopology::ROOT, seed).positions(default_tree_step_cap(tree));
            match count_excursions(source, spec, until) {
                Ok(c) => Ok(row(i, seed, c as f64, detail)),
                Err(e) => capped(i, seed, e),
            }
        }
        Plan::Special { cfg } => {
            let tree = cfg.validate()?;
            match classify_special_walk(cfg, seed, default_tree_step_cap(&tree)) {
                Ok(cls) => {
                    for lvl in &cls.levels {
                        detail.push(format!("special_l{}", lvl.level), lvl.special.len() as f64);
                        detail.push(format!("total_l{}", lvl.level), lvl.total() as f64);
                    }
                    for link in special_descent(&cls, cfg.b) {
                        if let Some(m) = link.mean_offspring() {
                            detail.push(format!("descent_l{}_l{}", link.parent_level, link.child_level), m);
                        }
                    }
                    let top = cls.levels.last().expect("k > 2 ell gives at least two levels");
                    Ok(row(i, seed, top.special_fraction(), detail))
                }
                Err(e) => capped(i, seed, e),
            }
        }
        Plan::Gw { law, generations } => {
            let alive = gw_survives(law, *generations, seed)?;
            Ok(row(i, seed, if alive { 1.0 } else { 0.0 }, detail))
        }
        Plan::OracleTorus { torus, .. } => match run_torus_cover(&WalkConfig::torus(*torus, 0, seed)) {
            Ok(t) => Ok(row(i, seed, t as f64, detail)),
            Err(e) => capped(i, seed, e),
        },
        Plan::OracleTree { tree, .. } => match run_tree_cover(&WalkConfig::tree(tree.clone(), seed)) {
            Ok(rec) => Ok(row(i, seed, rec.cover_time as f64, detail)),
            Err(e) => capped(i, seed, e),
        },
    }
}

fn reference(plan: &Plan) -> Option<f64> {
    match plan {
        Plan::TreeCover { tree } => Some(2.0 * (tree.branching() as f64).ln()),
        Plan::TorusCover { .. } => Some(4.0 / PI),
        Plan::ThickPoints { .. } => Some(1.0 / PI),
        Plan::EpsCover { .. } => Some(2.0 / PI),
        Plan::Excursions { tree, spec, lambda } => {
            Some(lambda * (tree.height() as f64).powi(2) / spec.spacing() as f64)
        }
        Plan::Special { .. } => None,
        Plan::Gw { law, .. } => Some(1.0 - law.extinction_probability()),
        Plan::OracleTorus { exact, .. } | Plan::OracleTree { exact, .. } => Some(*exact),
    }
}

fn summarize_rows(plan: &Plan, rows: &[ReplicaRow]) -> Result<SummaryRow> {
    let values: Vec<f64> = rows.iter().filter_map(|r| r.value).collect();
    let reference = reference(plan);
    let mut detail = Detail::default();
    detail.push("replicas", rows.len() as f64);
    let stats = if values.len() >= 2 { Some(summarize(&values)?) } else { None };
    if let Plan::TreeCover { tree } = plan {
        let col = |key: &str| -> Vec<f64> { rows.iter().filter_map(|r| r.detail.get(key)).collect() };
        let (plus, returns) = (col("cover_return"), col("returns"));
        if plus.len() >= 2 {
            let plus = summarize(&plus)?;
            let returns = summarize(&returns)?;
            let factor = (2.0 * tree.vertex_count() as f64 - 2.0) / tree.branching() as f64;
            detail.push("mean_cover_return", plus.mean);
            detail.push("wald_prediction", factor * returns.mean);
            detail.push("mean_returns", returns.mean);
        }
    }
    let mean = stats.map(|s| s.mean).or_else(|| values.first().copied());
    let z_score = match (stats, reference) {
        (Some(s), Some(r)) if s.std_error > 0.0 => Some(s.z_score(r)),
        _ => None,
    };
    Ok(SummaryRow {
        ok_replicas: values.len() as u64,
        mean,
        std_error: stats.map(|s| s.std_error),
        ci95: stats.map(|s| s.ci95),
        reference,
        z_score,
        detail,
    })
}

/// Runs every replica of `cfg` on `jobs` workers without writing files.
pub fn execute(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    let plan = cfg.plan()?;
    let rows = run_replicas(cfg.seed, cfg.replicas, jobs, |i, seed| run_one(&plan, i, seed))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize_rows(&plan, &rows)?;
    if let Some(path) = &cfg.dump_trajectory {
        dump_first_trajectory(&plan, cfg.seed, path)?;
    }
    Ok(ExperimentOutcome { config: cfg.clone(), rows, summary })
}

fn dump_first_trajectory(plan: &Plan, master_seed: u64, path: &Path) -> Result<()> {
    let seed = crate::rng::replica_seed(master_seed, 0);
    let mut rec = StepRecorder::new();
    let topology = match plan {
        Plan::TorusCover { torus } => {
            let result = run_torus_cover_observed(&WalkConfig::torus(*torus, 0, seed), |c| rec.push(c));
            match result {
                Ok(_) | Err(LabError::CapExceeded { .. }) => {}
                Err(e) => return Err(e),
            }
            DumpTopology::Torus(torus.side())
        }
        Plan::ThickPoints { steps } => {
            run_thick_points_observed(seed, *steps, |c| rec.push(c))?;
            DumpTopology::Lattice
        }
        Plan::EpsCover { n, eps } => {
            let cap = default_torus_step_cap(&TorusTopology::new(*n)?);
            match run_eps_cover_proxy_observed(*n, *eps, seed, cap, |c| rec.push(c)) {
                Ok(_) | Err(LabError::CapExceeded { .. }) => {}
                Err(e) => return Err(e),
            }
            DumpTopology::Torus(*n)
        }
        _ => return Err(LabError::usage("trajectory dumps need a lattice experiment")),
    };
    let mut out = BufWriter::new(File::create(path)?);
    rec.write_to(topology, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Runs `cfg` and writes its result file.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    let outcome = execute(cfg, jobs)?;
    write_outcome(&outcome, &cfg.out)?;
    Ok(outcome)
}

pub fn write_outcome(outcome: &ExperimentOutcome, path: &Path) -> Result<()> {
    let text = match outcome.config.format {
        OutputFormat::Csv => render_csv(outcome),
        OutputFormat::Json => render_json(outcome)?,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Decimal rendering with 12 significant digits, trailing zeros trimmed.
pub fn format_real(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-6..=15).contains(&magnitude) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn param_columns(p: &Params) -> String {
    [
        opt(p.b, |v| v.to_string()),
        opt(p.k, |v| v.to_string()),
        opt(p.n, |v| v.to_string()),
        opt(p.steps, |v| v.to_string()),
        opt(p.eps, format_real),
        opt(p.lambda, format_real),
        opt(p.r, format_real),
        opt(p.ell, |v| v.to_string()),
    ]
    .join(",")
}

fn render_detail(d: &Detail) -> String {
    d.0.iter()
        .map(|(k, v)| format!("{k}={}", format_real(*v)))
        .collect::<Vec<_>>()
        .join(";")
}

fn summary_detail(s: &SummaryRow, params: &Params) -> String {
    let mut parts = vec![format!("ok={}", s.ok_replicas)];
    let mut push = |key: &str, v: Option<f64>| {
        if let Some(v) = v {
            parts.push(format!("{key}={}", format_real(v)));
        }
    };
    push("std_error", s.std_error);
    push("ci_low", s.ci95.map(|c| c.0));
    push("ci_high", s.ci95.map(|c| c.1));
    push("reference", s.reference);
    push("z_score", s.z_score);
    let extra = render_detail(&s.detail);
    if !extra.is_empty() {
        parts.push(extra);
    }
    if let Some(law) = &params.law {
        parts.push(format!("law={law}"));
    }
    parts.join(";")
}

pub fn render_csv(outcome: &ExperimentOutcome) -> String {
    let cfg = &outcome.config;
    let params = param_columns(&cfg.params);
    let name = cfg.experiment.name();
    let mut out = String::new();
    writeln!(out, "{CSV_SCHEMA_LINE}").unwrap();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in &outcome.rows {
        writeln!(
            out,
            "{name},{params},{},{},{},{},{}",
            r.replicate,
            r.seed,
            opt(r.value, format_real),
            r.status.as_str(),
            csv_field(&render_detail(&r.detail)),
        )
        .unwrap();
    }
    let s = &outcome.summary;
    let status = if s.ok_replicas == cfg.replicas { "ok" } else { "partial" };
    writeln!(
        out,
        "{name},{params},summary,{},{},{status},{}",
        cfg.seed,
        opt(s.mean, format_real),
        csv_field(&summary_detail(s, &cfg.params)),
    )
    .unwrap();
    out
}

fn detail_json(d: &Detail) -> Value {
    Value::Object(d.0.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<Map<_, _>>())
}

pub fn render_json(outcome: &ExperimentOutcome) -> Result<String> {
    let cfg = &outcome.config;
    let s = &outcome.summary;
    let replicas: Vec<Value> = outcome
        .rows
        .iter()
        .map(|r| {
            json!({
                "replicate": r.replicate,
                "seed": r.seed,
                "value": r.value,
                "status": r.status,
                "detail": detail_json(&r.detail),
            })
        })
        .collect();
    let doc = json!({
        "schema": JSON_SCHEMA,
        "experiment": cfg.experiment,
        "params": cfg.params,
        "master_seed": cfg.seed,
        "replicas": replicas,
        "summary": {
            "ok_replicas": s.ok_replicas,
            "mean": s.mean,
            "std_error": s.std_error,
            "ci95": s.ci95,
            "reference": s.reference,
            "z_score": s.z_score,
            "detail": detail_json(&s.detail),
        },
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

//! Experiment orchestration: end-to-end runs, view and fusion ablations, parameter sweeps,
//! view-importance analysis and the seeded synthetic benchmark.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::alignment::{self, profile_all, SimilarityProfile, DEFAULT_TAU};
use crate::backbone::{self, Checkpoint, ItemFeatures, RecConfig, RecModel, TrainOptions, TrainOutcome};
use crate::data::{self, compute_stats, DatasetStats, Interaction, InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport, PopularityScorer, DEFAULT_KS};
use crate::fusion::FusionMethod;
use crate::jsonl;
use crate::prompt::GLOBAL_VIEW;
use crate::store::{self, GroupSignal, ViewEmbeddingSet};

/// Everything a pipeline run depends on. Serialized verbatim as the run's config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub command: String,
    pub manifest: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub fusion: FusionMethod,
    /// Store view indices to keep; `None` keeps all.
    pub views: Option<Vec<usize>>,
    pub tau: f64,
    pub append_similarity: bool,
    pub ks: Vec<usize>,
    pub rec: RecConfig,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
    /// View-ablation protocol for `ablate-views`.
    #[serde(default)]
    pub protocol: Option<AblationProtocol>,
    /// Grid for `sweep`.
    #[serde(default)]
    pub grid: Option<SweepGrid>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            command: "train".into(),
            manifest: None,
            store: None,
            fusion: FusionMethod::Sa,
            views: None,
            tau: DEFAULT_TAU,
            append_similarity: false,
            ks: DEFAULT_KS.to_vec(),
            rec: RecConfig::default(),
            out: None,
            deterministic: false,
            protocol: None,
            grid: None,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param(format!("tau must be > 0, got {}", self.tau)));
        }
        if let Some(v) = &self.views {
            if v.is_empty() {
                return Err(Error::param("view mask keeps no views"));
            }
            let mut sorted = v.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != v.len() {
                return Err(Error::param("view mask lists a view twice"));
            }
        }
        if self.ks.is_empty() {
            return Err(Error::param("empty K list"));
        }
        self.rec.validate()
    }

    /// Checks the view mask against a store.
    pub fn check_views(&self, store: &ViewEmbeddingSet) -> Result<()> {
        if let Some(v) = &self.views {
            if let Some(&bad) = v.iter().find(|&&j| j >= store.n_views()) {
                return Err(Error::param(format!(
                    "view index {bad} out of range for a store with {} views",
                    store.n_views()
                )));
            }
        }
        Ok(())
    }

    fn train_options(&self) -> TrainOptions {
        TrainOptions {
            record_timing: !self.deterministic,
        }
    }
}

/// Parses `--views`: comma-separated view names or indices into the store manifest.
pub fn parse_view_mask(list: &str, view_names: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let idx = match view_names.iter().position(|n| n == tok) {
            Some(i) => i,
            None => tok
                .parse::<usize>()
                .ok()
                .filter(|&i| i < view_names.len())
                .ok_or_else(|| Error::param(format!("unknown view {tok:?}")))?,
        };
        out.push(idx);
    }
    if out.is_empty() {
        return Err(Error::param("view mask keeps no views"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub label: String,
    pub view_names: Vec<String>,
    pub text_dim: usize,
    pub profiles: Vec<SimilarityProfile>,
    pub train: TrainOutcome,
    pub val: Option<EvalReport>,
    pub test: EvalReport,
}

impl VariantOutcome {
    pub fn test_recall(&self, k: usize) -> Option<f64> {
        self.test.recall_at(k)
    }
}

/// Item features for one run: store aligned to the dataset, view mask applied
/// before profiling so the softmax renormalizes over the surviving views.
pub fn prepare_features(
    ds: &InteractionDataset,
    store: &ViewEmbeddingSet,
    spec: &RunSpec,
) -> Result<(ViewEmbeddingSet, Vec<SimilarityProfile>, ItemFeatures)> {
    spec.validate()?;
    spec.check_views(store)?;
    let mut set = store.align_to(ds.item_ids()).map_err(|e| e.in_stage("embedding-store"))?;
    if let Some(v) = &spec.views {
        set = set.select_views(v)?;
    }
    let profiles = profile_all(&set, spec.tau).map_err(|e| e.in_stage("alignment"))?;
    let features = ItemFeatures::from_store(&set, Some(&profiles), spec.fusion, spec.append_similarity)
        .map_err(|e| e.in_stage("fusion"))?;
    Ok((set, profiles, features))
}

/// Trains and evaluates one configuration entirely in memory.
pub fn run_variant(
    ds: &InteractionDataset,
    store: &ViewEmbeddingSet,
    spec: &RunSpec,
    label: impl Into<String>,
) -> Result<VariantOutcome> {
    let (set, profiles, features) = prepare_features(ds, store, spec)?;
    EvalConfig::for_split(Split::Test).with_ks(spec.ks.clone()).validate(ds.n_items())?;
    let text_dim = features.text_dim();
    let train = backbone::train(ds, features, &spec.rec, spec.train_options())
        .map_err(|e| e.in_stage("backbone"))?;
    let (val, test) = evaluate_model(&train.model, ds, &spec.ks)?;
    Ok(VariantOutcome {
        label: label.into(),
        view_names: set.view_names().to_vec(),
        text_dim,
        profiles,
        train,
        val,
        test,
    })
}

fn evaluate_model(
    model: &RecModel,
    ds: &InteractionDataset,
    ks: &[usize],
) -> Result<(Option<EvalReport>, EvalReport)> {
    let scorer = model.scorer();
    let run = |split| evaluate(&scorer, ds, &EvalConfig::for_split(split).with_ks(ks.to_vec()));
    let val = if ds.split_size(Split::Val) > 0 {
        Some(run(Split::Val).map_err(|e| e.in_stage("evaluation"))?)
    } else {
        None
    };
    let test = run(Split::Test).map_err(|e| e.in_stage("evaluation"))?;
    Ok((val, test))
}

/// Config echo of a run: the run spec plus derived values.
pub fn config_echo(spec: &RunSpec, stats: &DatasetStats, text_dim: Option<usize>) -> serde_json::Value {
    let mut v = serde_json::to_value(spec).expect("spec serializes");
    v["dataset"] = serde_json::to_value(stats).expect("stats serialize");
    if let Some(t) = text_dim {
        v["text_dim"] = json!(t);
    }
    v
}

/// The echo embedded in report headers: output locations are dropped at every level so
/// reruns into another directory produce byte-identical reports.
pub fn report_echo(echo: &serde_json::Value) -> serde_json::Value {
    match echo {
        serde_json::Value::Object(map) => map
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| (k.clone(), report_echo(v)))
            .collect(),
        other => other.clone(),
    }
}

pub struct Inputs {
    pub dataset: InteractionDataset,
    pub store: ViewEmbeddingSet,
}

pub fn load_inputs(spec: &RunSpec) -> Result<Inputs> {
    let manifest = spec.manifest.as_deref().ok_or_else(|| Error::param("missing --manifest"))?;
    let store_path = spec.store.as_deref().ok_or_else(|| Error::param("missing --store"))?;
    let dataset = data::read_split_manifest(manifest).map_err(|e| e.in_stage("core-data"))?;
    let store = store::read_store(store_path).map_err(|e| e.in_stage("embedding-store"))?;
    Ok(Inputs { dataset, store })
}

fn out_dir(spec: &RunSpec) -> Result<&Path> {
    let dir = spec.out.as_deref().ok_or_else(|| Error::param("missing --out"))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

/// Files written by [`run_pipeline`].
pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const PROFILES_FILE: &str = "profiles.jsonl";

/// Loads inputs, trains, evaluates and writes config echo, checkpoint, training log,
/// similarity profiles and the val/test report under the output directory.
pub fn run_pipeline(spec: &RunSpec) -> Result<VariantOutcome> {
    spec.validate()?;
    let inputs = load_inputs(spec)?;
    let dir = out_dir(spec)?;
    let outcome = run_variant(&inputs.dataset, &inputs.store, spec, "full")?;
    let stats = compute_stats(&inputs.dataset)?;
    let echo = config_echo(spec, &stats, Some(outcome.text_dim));
    write_run_artifacts(dir, &echo, &inputs.dataset, &outcome)?;
    Ok(outcome)
}

fn write_run_artifacts(
    dir: &Path,
    echo: &serde_json::Value,
    ds: &InteractionDataset,
    outcome: &VariantOutcome,
) -> Result<()> {
    jsonl::write_json(&dir.join(CONFIG_FILE), echo)?;
    jsonl::write_records(&dir.join(TRAIN_LOG_FILE), &outcome.train.log)?;
    alignment::write_profiles(&dir.join(PROFILES_FILE), ds.item_ids(), &outcome.profiles)?;
    let ckpt = Checkpoint::from_model(
        &outcome.train.model,
        outcome.train.best_epoch.unwrap_or(outcome.train.epochs_run.saturating_sub(1)) as u64,
        outcome.train.best_val,
    );
    backbone::save_checkpoint(&dir.join(CHECKPOINT_FILE), &ckpt)?;
    let mut reports: Vec<EvalReport> = outcome.val.iter().cloned().collect();
    reports.push(outcome.test.clone());
    crate::eval::write_report(&dir.join(REPORT_FILE), &report_echo(echo), &reports)
}

/// Runs a pipeline command described entirely by its run spec (used for config replay) and
/// returns the test rows of every variant.
pub fn execute(spec: &RunSpec) -> Result<Vec<ComparisonRow>> {
    let variants_of = |outs: Vec<VariantOutcome>, specs: Vec<RunSpec>| -> Vec<ComparisonRow> {
        outs.iter().zip(specs.iter()).flat_map(|(o, s)| comparison_rows(o, s)).collect()
    };
    match spec.command.as_str() {
        "train" => {
            let o = run_pipeline(spec)?;
            Ok(comparison_rows(&o, spec))
        }
        "ablate-views" => {
            let inputs = load_inputs(spec)?;
            let protocol = spec.protocol.unwrap_or(AblationProtocol::LeaveOneOut);
            let outs = ablate_views(&inputs.dataset, &inputs.store, spec, protocol)?;
            let specs = outs.iter().map(|_| spec.clone()).collect();
            Ok(variants_of(outs, specs))
        }
        "ablate-fusion" => {
            let inputs = load_inputs(spec)?;
            let outs = ablate_fusion(&inputs.dataset, &inputs.store, spec)?;
            let specs = FusionMethod::ALL
                .iter()
                .map(|&m| RunSpec { fusion: m, ..spec.clone() })
                .collect();
            Ok(variants_of(outs, specs))
        }
        "sweep" => {
            let grid = spec.grid.as_ref().ok_or_else(|| Error::param("sweep needs a grid"))?;
            let inputs = load_inputs(spec)?;
            let outs = sweep(&inputs.dataset, &inputs.store, spec, grid)?;
            let specs = sweep_specs(spec, grid);
            Ok(variants_of(outs, specs))
        }
        other => Err(Error::param(format!("command {other:?} cannot be replayed"))),
    }
}

/// Rebuilds the model described by `spec`, loads checkpoint weights and evaluates val and test.
pub fn evaluate_checkpoint(spec: &RunSpec, checkpoint: &Path) -> Result<(Option<EvalReport>, EvalReport)> {
    let inputs = load_inputs(spec)?;
    let ckpt = backbone::load_checkpoint(checkpoint)?;
    let (_, _, features) = prepare_features(&inputs.dataset, &inputs.store, spec)?;
    let mut model = RecModel::new(&inputs.dataset, features, ckpt.config.clone())?;
    ckpt.restore_into(&mut model)?;
    evaluate_model(&model, &inputs.dataset, &spec.ks)
}

/// One row of a comparative table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub views: Vec<String>,
    pub fusion: FusionMethod,
    pub tau: f64,
    pub dim: usize,
    pub text_dim: usize,
    pub best_epoch: Option<usize>,
    pub split: Split,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub n_users: usize,
}

pub fn comparison_rows(outcome: &VariantOutcome, spec: &RunSpec) -> Vec<ComparisonRow> {
    outcome
        .test
        .records()
        .into_iter()
        .map(|r| ComparisonRow {
            variant: outcome.label.clone(),
            views: outcome.view_names.clone(),
            fusion: spec.fusion,
            tau: spec.tau,
            dim: spec.rec.dim,
            text_dim: outcome.text_dim,
            best_epoch: outcome.train.best_epoch,
            split: r.split,
            k: r.k,
            recall: r.recall,
            ndcg: r.ndcg,
            n_users: r.n_users,
        })
        .collect()
}

/// Header line `{"config": .., "dataset": ..}` followed by one row per (variant, K).
pub fn write_table(path: &Path, echo: &serde_json::Value, stats: &DatasetStats, rows: &[ComparisonRow]) -> Result<()> {
    let echo = report_echo(echo);
    let mut out = serde_json::to_string(&json!({ "config": echo, "dataset": stats })).expect("json");
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("json"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationProtocol {
    LeaveOneOut,
    OnlyGlobal,
}

impl std::str::FromStr for AblationProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leave-one-out" => Ok(Self::LeaveOneOut),
            "only-global" => Ok(Self::OnlyGlobal),
            _ => Err(Error::param(format!("unknown protocol {s:?} (leave-one-out|only-global)"))),
        }
    }
}

/// View masks for an ablation as `(label, kept view indices)`; the full run comes first.
pub fn ablation_variants(view_names: &[String], protocol: AblationProtocol) -> Result<Vec<(String, Vec<usize>)>> {
    let c = view_names.len();
    let mut out = vec![("full".to_string(), (0..c).collect::<Vec<_>>())];
    match protocol {
        AblationProtocol::LeaveOneOut => {
            if c < 2 {
                return Err(Error::param("leave-one-out needs at least two views"));
            }
            for (j, name) in view_names.iter().enumerate() {
                out.push((format!("-{name}"), (0..c).filter(|&v| v != j).collect()));
            }
        }
        AblationProtocol::OnlyGlobal => {
            let g = view_names
                .iter()
                .position(|n| n == GLOBAL_VIEW)
                .ok_or_else(|| Error::param("store has no global view"))?;
            out.push(("only-global".to_string(), vec![g]));
        }
    }
    Ok(out)
}

fn run_table(
    ds: &InteractionDataset,
    store: &ViewEmbeddingSet,
    variants: Vec<(String, RunSpec)>,
) -> Result<Vec<(RunSpec, VariantOutcome)>> {
    variants
        .into_iter()
        .map(|(label, spec)| {
            log::info!("running variant {label}");
            run_variant(ds, store, &spec, label).map(|o| (spec, o))
        })
        .collect()
}

fn write_comparison(spec: &RunSpec, ds: &InteractionDataset, runs: &[(RunSpec, VariantOutcome)]) -> Result<()> {
    if let Some(dir) = &spec.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stats = compute_stats(ds)?;
        let echo = config_echo(spec, &stats, None);
        jsonl::write_json(&dir.join(CONFIG_FILE), &echo)?;
        let rows: Vec<ComparisonRow> = runs.iter().flat_map(|(s, o)| comparison_rows(o, s)).collect();
        write_table(&dir.join(REPORT_FILE), &echo, &stats, &rows)?;
    }
    Ok(())
}

/// One full run per view mask. The shared store is never modified.
pub fn ablate_views(
    ds: &InteractionDataset,
    store: &ViewEmbeddingSet,
    spec: &RunSpec,
    protocol: AblationProtocol,
) -> Result<Vec<VariantOutcome>> {
    spec.validate()?;
    let base = match &spec.views {
        Some(v) => {
            spec.check_views(store)?;
            store.select_views(v)?
        }
        None => store.clone(),
    };
    let variants = ablation_variants(base.view_names(), protocol)?
        .into_iter()
        .map(|(label, views)| {
            let s = RunSpec {
                views: Some(views),
                ..spec.clone()
            };
            (label, s)
        })
        .collect();
    let runs = run_table(ds, &base, variants)?;
    write_comparison(spec, ds, &runs)?;
    Ok(runs.into_iter().map(|(_, o)| o).collect())
}

/// One run per fusion method on shared data and seed.
pub fn ablate_fusion(ds: &InteractionDataset, store: &ViewEmbeddingSet, spec: &RunSpec) -> Result<Vec<VariantOutcome>> {
    spec.validate()?;
    let variants = FusionMethod::ALL
        .into_iter()
        .map(|m| {
            let s = RunSpec {
                fusion: m,
                append_similarity: spec.append_similarity && m != FusionMethod::Mlp,
                ..spec.clone()
            };
            (m.name().to_string(), s)
        })
        .collect();
    let runs = run_table(ds, store, variants)?;
    write_comparison(spec, ds, &runs)?;
    Ok(runs.into_iter().map(|(_, o)| o).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "param", content = "grid", rename_all = "lowercase")]
pub enum SweepGrid {
    Tau(Vec<f64>),
    Dim(Vec<usize>),
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        match self {
            SweepGrid::Tau(g) if g.is_empty() => Err(Error::param("empty tau grid")),
            SweepGrid::Dim(g) if g.is_empty() => Err(Error::param("empty dim grid")),
            SweepGrid::Tau(g) => match g.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
                Some(t) => Err(Error::param(format!("tau grid value {t} is not positive"))),
                None => Ok(()),
            },
            SweepGrid::Dim(g) => match g.iter().find(|&&d| d == 0) {
                Some(_) => Err(Error::param("dim grid value 0 is not positive")),
                None => Ok(()),
            },
        }
    }
}

fn sweep_specs(spec: &RunSpec, grid: &SweepGrid) -> Vec<RunSpec> {
    match grid {
        SweepGrid::Tau(g) => g.iter().map(|&tau| RunSpec { tau, ..spec.clone() }).collect(),
        SweepGrid::Dim(g) => g
            .iter()
            .map(|&dim| RunSpec {
                rec: RecConfig { dim, ..spec.rec.clone() },
                ..spec.clone()
            })
            .collect(),
    }
}

/// One run per grid value.
pub fn sweep(ds: &InteractionDataset, store: &ViewEmbeddingSet, spec: &RunSpec, grid: &SweepGrid) -> Result<Vec<VariantOutcome>> {
    grid.validate()?;
    spec.validate()?;
    let labels: Vec<String> = match grid {
        SweepGrid::Tau(g) => g.iter().map(|t| format!("tau={t}")).collect(),
        SweepGrid::Dim(g) => g.iter().map(|d| format!("dim={d}")).collect(),
    };
    let variants = labels.into_iter().zip(sweep_specs(spec, grid)).collect();
    let runs = run_table(ds, store, variants)?;
    write_comparison(spec, ds, &runs)?;
    Ok(runs.into_iter().map(|(_, o)| o).collect())
}

/// Occurrences of each importance rank per view. Rank 0 is the view with the highest
/// similarity score of an item; ties go to the lower view index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub view_names: Vec<String>,
    pub n_items: usize,
    /// `counts[view][rank]`.
    pub counts: Vec<Vec<usize>>,
    /// Per view, the sum of `rank * occurrences`; lower means more important.
    pub importance_sum: Vec<usize>,
}

/// Ranks of each view for one score vector.
pub fn importance_ranks(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (r, &v) in order.iter().enumerate() {
        ranks[v] = r;
    }
    ranks
}

pub fn view_importance(profiles: &[SimilarityProfile], view_names: &[String]) -> Result<ImportanceTable> {
    let c = view_names.len();
    let mut counts = vec![vec![0usize; c]; c];
    for p in profiles {
        if p.scores.len() != c {
            return Err(Error::param(format!(
                "profile of item {} has {} views, expected {c}",
                p.item,
                p.scores.len()
            )));
        }
        for (v, r) in importance_ranks(&p.scores).into_iter().enumerate() {
            counts[v][r] += 1;
        }
    }
    let importance_sum = counts
        .iter()
        .map(|row| row.iter().enumerate().map(|(r, n)| r * n).sum())
        .collect();
    Ok(ImportanceTable {
        view_names: view_names.to_vec(),
        n_items: profiles.len(),
        counts,
        importance_sum,
    })
}

impl ImportanceTable {
    /// Heatmap matrix: one row per view, one column per rank, then the importance sum.
    pub fn to_csv(&self) -> String {
        let c = self.view_names.len();
        let mut s = String::from("view");
        for r in 0..c {
            s.push_str(&format!(",rank{r}"));
        }
        s.push_str(",importance_sum\n");
        for (v, name) in self.view_names.iter().enumerate() {
            s.push_str(name);
            for n in &self.counts[v] {
                s.push_str(&format!(",{n}"));
            }
            s.push_str(&format!(",{}\n", self.importance_sum[v]));
        }
        s
    }

    /// Plot-ready description of the heatmap.
    pub fn plot_data(&self) -> serde_json::Value {
        json!({
            "kind": "heatmap",
            "x_label": "importance rank",
            "y_label": "view",
            "x": (0..self.view_names.len()).collect::<Vec<_>>(),
            "y": self.view_names,
            "z": self.counts,
            "importance_sum": self.importance_sum,
            "n_items": self.n_items,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("importance.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        jsonl::write_json(&dir.join("importance_plot.json"), &self.plot_data())
    }
}

/// Seeded synthetic dataset and store with planted structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_views: usize,
    pub view_dim: usize,
    pub signal: GroupSignal,
    /// Distinct items sampled per user.
    pub per_user: usize,
    /// Sharpness of the user preference over image similarity.
    pub beta: f64,
    pub seed: u64,
    pub spec: RunSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let rec = RecConfig {
            dim: 64,
            lr: 0.01,
            batch_size: 512,
            epochs_max: 100,
            seed: 7,
            ..RecConfig::default()
        };
        Self {
            n_users: 500,
            n_items: 200,
            n_views: 5,
            view_dim: 64,
            signal: GroupSignal {
                n_groups: 2,
                signal_weight: 1.0,
                noise: 1.0,
                latent_dim: 8,
                informative_view: 0,
                text_noise: 0.3,
            },
            per_user: 20,
            beta: 8.0,
            seed: 7,
            spec: RunSpec {
                command: "synth-benchmark".into(),
                fusion: FusionMethod::Sa,
                ks: vec![10, 20, 50],
                rec,
                deterministic: true,
                ..RunSpec::default()
            },
        }
    }
}

/// Each user belongs to group `u % n_groups`, anchors on a random item of that group and
/// samples `per_user` distinct items with probability proportional to
/// `exp(beta * cos(image_anchor, image_i))` over the whole catalog.
pub fn synth_interactions(store: &ViewEmbeddingSet, cfg: &SynthConfig) -> Result<Vec<Interaction>> {
    let n = store.n_items();
    if cfg.per_user == 0 || cfg.per_user > n {
        return Err(Error::param("per_user must lie in 1..=n_items"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA11CE);
    let groups = cfg.signal.n_groups.max(1);
    let mut out = Vec::with_capacity(cfg.n_users * cfg.per_user);
    for u in 0..cfg.n_users {
        let g = u % groups;
        let members: Vec<usize> = (0..n).filter(|&i| cfg.signal.group_of(i) == g).collect();
        let &anchor = members
            .choose(&mut rng)
            .ok_or_else(|| Error::param("a preference group has no items"))?;
        let q = store.image(anchor);
        let mut weights: Vec<f64> = (0..n)
            .map(|i| {
                let c = alignment::cosine_similarity(q, store.image(i)).unwrap_or(0.0);
                (cfg.beta * (c - 1.0)).exp()
            })
            .collect();
        for t in 0..cfg.per_user {
            let total: f64 = weights.iter().sum();
            let mut x = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 && x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            if weights[pick] == 0.0 {
                pick = weights.iter().rposition(|&w| w > 0.0).expect("items remain");
            }
            weights[pick] = 0.0;
            out.push(Interaction {
                user: format!("user{u:05}"),
                item: store.item_ids()[pick].clone(),
                timestamp: Some(t as f64),
            });
        }
    }
    Ok(out)
}

pub fn synth_inputs(cfg: &SynthConfig) -> Result<Inputs> {
    let store = store::synth_store(cfg.n_items, cfg.n_views, cfg.view_dim, cfg.seed, Some(&cfg.signal))?;
    let raw = synth_interactions(&store, cfg)?;
    let dataset = data::build_dataset(raw, 1, cfg.seed)?;
    Ok(Inputs { dataset, store })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub popularity_recall20: f64,
    pub sa_recall20: f64,
    pub sum_recall20: f64,
    pub ablated_recall20: f64,
    pub checks: Vec<BenchmarkCheck>,
}

impl BenchmarkReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Popularity baseline, SA, SUM and SA without the informative view on the planted dataset.
pub fn synth_benchmark(cfg: &SynthConfig) -> Result<BenchmarkReport> {
    let inputs = synth_inputs(cfg)?;
    let (ds, store) = (&inputs.dataset, &inputs.store);
    let k = 20;
    let ks = cfg.spec.ks.clone();
    let pop = evaluate(&PopularityScorer::new(ds), ds, &EvalConfig::for_split(Split::Test).with_ks(ks))?;
    let recall = |r: &EvalReport| r.recall_at(k).ok_or_else(|| Error::param("K list must contain 20"));
    let popularity = recall(&pop)?;

    let sa_spec = RunSpec {
        fusion: FusionMethod::Sa,
        ..cfg.spec.clone()
    };
    let sum_spec = RunSpec {
        fusion: FusionMethod::Sum,
        ..cfg.spec.clone()
    };
    let kept: Vec<usize> = (0..cfg.n_views).filter(|&v| v != cfg.signal.informative_view).collect();
    let ablated_spec = RunSpec {
        views: Some(kept),
        ..sa_spec.clone()
    };
    let sa = run_variant(ds, store, &sa_spec, "sa")?;
    let sum = run_variant(ds, store, &sum_spec, "sum")?;
    let ablated = run_variant(ds, store, &ablated_spec, "sa-informative")?;
    let (sa_r, sum_r, abl_r) = (recall(&sa.test)?, recall(&sum.test)?, recall(&ablated.test)?);

    let checks = vec![
        BenchmarkCheck {
            name: "sa_vs_popularity".into(),
            passed: sa_r >= 2.0 * popularity,
            detail: format!("sa {sa_r:.4} vs 2 x popularity {:.4}", 2.0 * popularity),
        },
        BenchmarkCheck {
            name: "informative_view_ablation".into(),
            passed: abl_r < sa_r,
            detail: format!("without view {} {abl_r:.4} vs full {sa_r:.4}", cfg.signal.informative_view),
        },
        BenchmarkCheck {
            name: "sa_vs_sum".into(),
            passed: sa_r >= sum_r,
            detail: format!("sa {sa_r:.4} vs sum {sum_r:.4}"),
        },
    ];
    if let Some(dir) = &cfg.spec.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stats = compute_stats(ds)?;
        let echo = json!({ "synth": cfg, "dataset": stats });
        jsonl::write_json(&dir.join(CONFIG_FILE), &echo)?;
        let mut rows = Vec::new();
        for (s, o) in [(&sa_spec, &sa), (&sum_spec, &sum), (&ablated_spec, &ablated)] {
            rows.extend(comparison_rows(o, s));
        }
        write_table(&dir.join(REPORT_FILE), &echo, &stats, &rows)?;
        crate::eval::write_report(&dir.join("popularity.jsonl"), &report_echo(&echo), &[pop])?;
        data::write_split_manifest(ds, &dir.join("split.jsonl"))?;
        store::write_store(store, &dir.join("store.bin"))?;
    }
    Ok(BenchmarkReport {
        popularity_recall20: popularity,
        sa_recall20: sa_r,
        sum_recall20: sum_r,
        ablated_recall20: abl_r,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(scores: Vec<f64>) -> SimilarityProfile {
        SimilarityProfile {
            item: 0,
            raw_sims: scores.clone(),
            scores,
            tau: 0.1,
        }
    }

    #[test]
    fn ranks_follow_descending_scores() {
        assert_eq!(importance_ranks(&[0.5, 0.3, 0.2]), vec![0, 1, 2]);
        assert_eq!(importance_ranks(&[0.2, 0.5, 0.3]), vec![2, 0, 1]);
        assert_eq!(importance_ranks(&[0.4, 0.2, 0.4]), vec![0, 2, 1]);
    }

    #[test]
    fn identical_profiles_fill_one_column() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let ps: Vec<_> = (0..7).map(|_| profile(vec![0.1, 0.6, 0.3])).collect();
        let t = view_importance(&ps, &names).unwrap();
        assert_eq!(t.counts[1], vec![7, 0, 0]);
        assert_eq!(t.counts[2], vec![0, 7, 0]);
        assert_eq!(t.importance_sum, vec![14, 0, 7]);
        assert_eq!(t.importance_sum.iter().sum::<usize>(), 7 * 3);
        assert!(t.to_csv().contains("\nb,7,0,0,0\n"));
    }

    #[test]
    fn view_mask_parsing() {
        let names: Vec<String> = ["title", "brand", "global"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_view_mask("title,global", &names).unwrap(), vec![0, 2]);
        assert_eq!(parse_view_mask("1", &names).unwrap(), vec![1]);
        assert!(parse_view_mask("color", &names).is_err());
        assert!(parse_view_mask("", &names).is_err());
    }

    #[test]
    fn ablation_variant_cardinality() {
        let names = store::default_view_names(5);
        let loo = ablation_variants(&names, AblationProtocol::LeaveOneOut).unwrap();
        assert_eq!(loo.len(), 6);
        assert!(loo[1..].iter().all(|(_, v)| v.len() == 4));
        let og = ablation_variants(&names, AblationProtocol::OnlyGlobal).unwrap();
        assert_eq!(og[1].1, vec![4]);
        assert!(ablation_variants(&names[..1], AblationProtocol::LeaveOneOut).is_err());
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(SweepGrid::Tau(vec![]).validate().is_err());
        assert!(SweepGrid::Tau(vec![0.1, 0.0]).validate().is_err());
        assert!(SweepGrid::Tau(vec![-0.5]).validate().is_err());
        assert!(SweepGrid::Dim(vec![128, 0]).validate().is_err());
        assert!(SweepGrid::Dim(vec![128, 256]).validate().is_ok());
    }

    #[test]
    fn run_spec_validation() {
        let mut s = RunSpec::default();
        assert!(s.validate().is_ok());
        s.views = Some(vec![]);
        assert!(s.validate().is_err());
        s.views = Some(vec![1, 1]);
        assert!(s.validate().is_err());
        s.views = None;
        s.tau = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn synthetic_interactions_are_distinct_per_user() {
        let cfg = SynthConfig {
            n_users: 10,
            n_items: 30,
            per_user: 30,
            ..SynthConfig::default()
        };
        let inputs = synth_inputs(&cfg).unwrap();
        for u in 0..inputs.dataset.n_users() {
            let total: usize = [Split::Train, Split::Val, Split::Test]
                .iter()
                .map(|&s| inputs.dataset.positives(s, u).len())
                .sum();
            assert_eq!(total, 30);
        }
    }
}

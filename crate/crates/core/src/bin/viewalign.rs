use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use viewalign::alignment::{self, profile_all};
use viewalign::backbone::{Precision, RecConfig};
use viewalign::data::{self, DatasetStats, DEFAULT_K_CORE, DEFAULT_SCHEMA};
use viewalign::error::{Error, Result};
use viewalign::eval::{write_report, EvalReport};
use viewalign::experiment::{self, AblationProtocol, ComparisonRow, RunSpec, SweepGrid, SynthConfig};
use viewalign::fusion::{self, FusionMethod};
use viewalign::prompt::{self, TemplateSet, DEFAULT_MAX_CHARS};
use viewalign::{jsonl, store};

#[derive(Parser)]
#[command(name = "viewalign", version, about = "Multi-view text/image alignment for recommendation")]
struct Cli {
    /// Run on a single thread for bit-reproducible outputs.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and split raw interactions into a split manifest.
    Prepare {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_CORE)]
        k_core: usize,
        #[arg(long, default_value_t = 999)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print dataset statistics.
    Stats {
        /// Split manifest.
        #[arg(long, conflicts_with = "interactions")]
        manifest: Option<PathBuf>,
        /// Raw interaction TSV, filtered with --k-core.
        #[arg(long)]
        interactions: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_K_CORE)]
        k_core: usize,
        #[arg(long, default_value_t = 3)]
        decimals: u32,
    },
    /// Fill view templates from item metadata and write the prompt dump.
    BuildPrompts {
        #[arg(long)]
        metadata: PathBuf,
        /// Template records; the built-in title/brand/categories/description set by default.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Split manifest fixing item order; metadata order otherwise.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        no_global: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
        max_chars: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an embedding store, align it to the dataset and dump profiles and fused text.
    IngestEmbeddings {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "sa")]
        fusion: String,
        #[arg(long, default_value_t = alignment::DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one configuration.
    Train(RunArgs),
    /// Evaluate a checkpoint written by `train`.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// One run per view mask.
    AblateViews {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "leave-one-out")]
        protocol: String,
    },
    /// One run per fusion method.
    AblateFusion(RunArgs),
    /// One run per value of tau or the embedding dimension.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = ["tau", "dim"])]
        param: String,
        /// Comma-separated grid; the standard grid by default.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Rank views by similarity score per item and tabulate rank occurrences.
    ViewImportance {
        /// Profile dump; computed from --store when absent.
        #[arg(long, conflicts_with = "store")]
        profiles: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = alignment::DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded end-to-end benchmark on planted synthetic data.
    SynthBenchmark {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a pipeline command from its config echo.
    Replay {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; the echoed one by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Split manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Embedding store.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Start from a config echo; explicit flags below still override.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Item-item kNN neighbours.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    layers_ui: Option<usize>,
    #[arg(long)]
    layers_ii: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Views to keep, by name or index.
    #[arg(long)]
    views: Option<String>,
    /// Comma-separated cutoffs for the reports.
    #[arg(long)]
    ks: Option<String>,
    #[arg(long)]
    append_similarity: bool,
    /// Keep parameters in double precision.
    #[arg(long)]
    f64: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn spec(&self, command: &str, deterministic: bool) -> Result<RunSpec> {
        let mut spec = match &self.config {
            Some(path) => jsonl::read_json(path)?,
            None => RunSpec::default(),
        };
        spec.command = command.to_string();
        spec.deterministic |= deterministic;
        if let Some(f) = &self.fusion {
            spec.fusion = f.parse::<FusionMethod>()?;
        }
        let rec: &mut RecConfig = &mut spec.rec;
        macro_rules! set {
            ($($dst:expr => $src:expr),*) => { $(if let Some(v) = $src { $dst = v; })* };
        }
        set!(
            spec.manifest => self.manifest.clone().map(Some),
            spec.store => self.store.clone().map(Some),
            spec.out => self.out.clone().map(Some),
            spec.tau => self.tau,
            rec.dim => self.dim,
            rec.knn_k => self.k,
            rec.layers_ui => self.layers_ui,
            rec.layers_ii => self.layers_ii,
            rec.lr => self.lr,
            rec.weight_decay => self.weight_decay,
            rec.epochs_max => self.epochs,
            rec.batch_size => self.batch_size,
            rec.patience => self.patience,
            rec.seed => self.seed
        );
        if self.f64 {
            rec.precision = Precision::F64;
        }
        spec.append_similarity |= self.append_similarity;
        if let Some(ks) = &self.ks {
            spec.ks = parse_list(ks, "K")?;
        }
        if let Some(list) = &self.views {
            let path = spec.store.as_deref().ok_or_else(|| usage("--views needs --store"))?;
            let names = store_view_names(path)?;
            spec.views = Some(experiment::parse_view_mask(list, &names)?);
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn usage(msg: &str) -> Error {
    Error::Parameter(msg.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| Error::Parameter(format!("bad {what} value {t:?}"))))
        .collect()
}

fn store_view_names(path: &Path) -> Result<Vec<String>> {
    let m: store::StoreManifest = jsonl::read_json(&store::manifest_path(path))?;
    Ok(m.view_names)
}

fn print_stats(stats: &DatasetStats, decimals: u32) {
    println!("users: {}", stats.n_users);
    println!("items: {}", stats.n_items);
    println!("interactions: {}", stats.n_interactions);
    println!("density: {}", stats.density_percent(decimals));
}

fn print_rows(rows: &[ComparisonRow]) {
    println!("{:<24} {:>4} {:>9} {:>9}", "variant", "K", "recall", "ndcg");
    for r in rows {
        println!("{:<24} {:>4} {:>9.4} {:>9.4}", r.variant, r.k, r.recall, r.ndcg);
    }
}

fn print_report(r: &EvalReport) {
    for rec in r.records() {
        println!(
            "{} recall@{} {:.4} ndcg@{} {:.4} users {}",
            rec.split, rec.k, rec.recall, rec.k, rec.ndcg, rec.n_users
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let det = cli.deterministic;
    match cli.command {
        Command::Prepare {
            interactions,
            k_core,
            seed,
            out,
        } => {
            let ds = data::load_interactions(&interactions, k_core, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            data::write_split_manifest(&ds, &out.join("split.jsonl"))?;
            let stats = data::compute_stats(&ds)?;
            let echo = serde_json::json!({
                "command": "prepare", "interactions": interactions, "k_core": k_core, "seed": seed,
                "dataset": stats,
            });
            jsonl::write_json(&out.join(experiment::CONFIG_FILE), &echo)?;
            print_stats(&stats, 3);
        }
        Command::Stats {
            manifest,
            interactions,
            k_core,
            decimals,
        } => {
            let ds = match (manifest, interactions) {
                (Some(m), None) => data::read_split_manifest(&m)?,
                (None, Some(i)) => data::load_interactions(&i, k_core, 0)?,
                _ => return Err(usage("stats needs --manifest or --interactions")),
            };
            print_stats(&data::compute_stats(&ds)?, decimals);
        }
        Command::BuildPrompts {
            metadata,
            templates,
            manifest,
            no_global,
            max_chars,
            out,
        } => {
            let templates = match templates {
                Some(p) => TemplateSet::from_file(&p)?,
                None => TemplateSet::standard(),
            };
            let mut meta = data::load_metadata(&metadata, &DEFAULT_SCHEMA)?;
            meta.sort_by(|a, b| a.item_id.cmp(&b.item_id));
            let ids: Vec<String> = match &manifest {
                Some(m) => {
                    let ds = data::read_split_manifest(m)?;
                    let missing = data::missing_items(&ds, &meta);
                    if !missing.is_empty() {
                        eprintln!(
                            "warning: {} items have no metadata and get empty views: {}",
                            missing.len(),
                            missing.join(", ")
                        );
                    }
                    ds.item_ids().to_vec()
                }
                None => meta.iter().map(|m| m.item_id.clone()).collect(),
            };
            let mut records = Vec::new();
            for (idx, id) in ids.iter().enumerate() {
                let m = match meta.binary_search_by(|m| m.item_id.as_str().cmp(id)) {
                    Ok(p) => meta[p].clone(),
                    Err(_) => data::ItemMetadata {
                        item_id: id.clone(),
                        fields: vec![],
                        image_ref: None,
                        missing_fields: DEFAULT_SCHEMA.iter().map(|s| s.to_string()).collect(),
                        unknown_fields: vec![],
                    },
                };
                let views = prompt::build_views(idx, &m, &templates, !no_global)?;
                records.extend(prompt::prompt_records(id, &views, max_chars));
            }
            jsonl::write_records(&out, &records)?;
            println!("{} prompts for {} items", records.len(), ids.len());
        }
        Command::IngestEmbeddings {
            store: store_path,
            manifest,
            fusion: method,
            tau,
            out,
        } => {
            let method: FusionMethod = method.parse()?;
            if method == FusionMethod::Mlp {
                return Err(usage("mlp fusion is trained with the backbone and has no static dump"));
            }
            let ds = data::read_split_manifest(&manifest)?;
            let set = store::read_store(&store_path)?.align_to(ds.item_ids())?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            store::write_store(&set, &out.join("store.bin"))?;
            let profiles = profile_all(&set, tau)?;
            alignment::write_profiles(&out.join(experiment::PROFILES_FILE), set.item_ids(), &profiles)?;
            let fused = fusion::fuse_all(&set, Some(&profiles), method, None)?;
            fusion::write_fused(&out.join("fused.bin"), &fused, set.item_ids(), &set.manifest().encoder_name)?;
            println!(
                "{} items, {} views, dim {}, crc32 {}",
                set.n_items(),
                set.n_views(),
                set.dim(),
                set.manifest().crc32
            );
        }
        Command::Train(args) => {
            let spec = args.spec("train", det)?;
            let outcome = experiment::run_pipeline(&spec)?;
            if let Some(v) = &outcome.val {
                print_report(v);
            }
            print_report(&outcome.test);
        }
        Command::Evaluate { run, checkpoint } => {
            let mut spec = run.spec("evaluate", det)?;
            // An out directory inherited from a config echo belongs to the training run.
            spec.out = run.out.clone();
            let (val, test) = experiment::evaluate_checkpoint(&spec, &checkpoint)?;
            let reports: Vec<EvalReport> = val.into_iter().chain(Some(test)).collect();
            for r in &reports {
                print_report(r);
            }
            if let Some(dir) = &spec.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                let echo = experiment::report_echo(&serde_json::to_value(&spec).expect("spec serializes"));
                write_report(&dir.join(experiment::REPORT_FILE), &echo, &reports)?;
            }
        }
        Command::AblateViews { run, protocol } => {
            let mut spec = run.spec("ablate-views", det)?;
            spec.protocol = Some(protocol.parse::<AblationProtocol>()?);
            print_rows(&experiment::execute(&spec)?);
        }
        Command::AblateFusion(run) => {
            let spec = run.spec("ablate-fusion", det)?;
            print_rows(&experiment::execute(&spec)?);
        }
        Command::Sweep { run, param, grid } => {
            let mut spec = run.spec("sweep", det)?;
            let grid = match (param.as_str(), grid) {
                ("tau", None) => SweepGrid::Tau(alignment::TAU_GRID.to_vec()),
                ("tau", Some(g)) => SweepGrid::Tau(parse_list(&g, "tau")?),
                (_, None) => SweepGrid::Dim(viewalign::backbone::model::DIM_GRID.to_vec()),
                (_, Some(g)) => SweepGrid::Dim(parse_list(&g, "dim")?),
            };
            grid.validate()?;
            spec.grid = Some(grid);
            print_rows(&experiment::execute(&spec)?);
        }
        Command::ViewImportance {
            profiles,
            store: store_path,
            tau,
            out,
        } => {
            let (names, profiles) = match (profiles, store_path) {
                (Some(p), None) => {
                    let (_, profiles) = alignment::read_profiles(&p)?;
                    let c = profiles.first().map_or(0, |p| p.scores.len());
                    (store::default_view_names(c), profiles)
                }
                (None, Some(s)) => {
                    let set = store::read_store(&s)?;
                    (set.view_names().to_vec(), profile_all(&set, tau)?)
                }
                _ => return Err(usage("view-importance needs --profiles or --store")),
            };
            let table = experiment::view_importance(&profiles, &names)?;
            table.write(&out)?;
            print!("{}", table.to_csv());
        }
        Command::SynthBenchmark { seed, out } => {
            let mut cfg = SynthConfig::default();
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.spec.rec.seed = s;
            }
            cfg.spec.out = out;
            let report = experiment::synth_benchmark(&cfg)?;
            println!("popularity recall@20 {:.4}", report.popularity_recall20);
            println!("sa recall@20 {:.4}", report.sa_recall20);
            println!("sum recall@20 {:.4}", report.sum_recall20);
            println!("sa without informative view recall@20 {:.4}", report.ablated_recall20);
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
        }
        Command::Replay { config, out } => {
            let mut spec: RunSpec = jsonl::read_json(&config)?;
            spec.deterministic |= det;
            if out.is_some() {
                spec.out = out;
            }
            spec.validate()?;
            print_rows(&experiment::execute(&spec)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.deterministic {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("error: cannot configure a single-thread pool: {e}");
            return ExitCode::from(4);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Batch CLI for the confidence-estimation pipeline.
//!
//! Subcommands mirror the experiment stages: `sample` populates the answer
//! cache, `label` produces majority-vote correctness labels, `train` fits
//! the fusion head on the train split, `score` writes per-record metrics,
//! `eval` computes AUROC summaries and ROC curves on the held-out split, and
//! `all` chains the five stages. `synth` emits the synthetic benchmark
//! dataset used by the offline end-to-end suite.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crux_core::backends::http::{
    HttpGenerationBackend, HttpNliBackend, GEN_API_KEY_ENV, GEN_BASE_URL_ENV, NLI_BASE_URL_ENV,
};
use crux_core::backends::mock::EqualityNli;
use crux_core::backends::{EntailmentBackend, GenerationBackend, InflightLimiter, RetryPolicy};
use crux_core::cache::{CachedEntailmentBackend, NliCache, SampleCache, NLI_FILE, SAMPLES_FILE};
use crux_core::config::{CruxConfig, GcVariant};
use crux_core::dataset::{filter_records, load_dataset, DatasetFormat};
use crux_core::error::{CruxError, Result};
use crux_core::eval::{
    auroc, is_train_record, roc_points, write_eval_rows, write_roc, write_summary, EvalRow,
    SummaryRow,
};
use crux_core::fusion::{mlp_train, FusionParams, TrainConfig, TrainExample};
use crux_core::pipeline::CruxPipeline;
use crux_core::synthetic::{write_synthetic_jsonl, SyntheticGen};
use crux_core::types::QuestionRecord;

const TRAIN_FRACTION: f64 = 0.7;
const METHOD_CRUX: &str = "crux";

#[derive(Parser)]
#[command(name = "crux", version, about = "Confidence estimation for contextual question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    None,
    NoGc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalSplit {
    /// Held-out records only (the default).
    Eval,
    /// Every labeled record.
    All,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Dataset file to process.
    #[arg(long)]
    dataset: PathBuf,

    /// Dataset schema.
    #[arg(long, value_enum, default_value = "generic-jsonl")]
    format: DatasetFormat,

    /// TOML config file; missing keys fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Cache directory (samples.jsonl + nli.jsonl).
    #[arg(long)]
    cache: PathBuf,

    /// Output directory for CSVs, fusion params, and the run manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Generation endpoint: an OpenAI-compatible base URL, or
    /// "mock://synthetic" for the in-process synthetic backend.
    /// Defaults to $GEN_BASE_URL.
    #[arg(long)]
    backend_url: Option<String>,

    /// NLI endpoint URL, or "mock://equality" for the in-process equality
    /// mock. Defaults to $NLI_BASE_URL.
    #[arg(long)]
    nli_url: Option<String>,

    /// Record-level parallelism.
    #[arg(long, default_value_t = 1)]
    jobs: usize,

    /// Overrides the config seed (train/eval split, fusion training).
    #[arg(long)]
    seed: Option<u64>,

    /// Feature ablation: no-gc drops the consistency feature and scores with
    /// an entropy-only head.
    #[arg(long, value_enum, default_value = "none")]
    ablation: Ablation,

    /// Replace semantic clustering with exact-match-after-normalization.
    #[arg(long)]
    no_clustering: bool,

    /// Consistency variant.
    #[arg(long, value_enum)]
    gc: Option<CliGcVariant>,

    /// Overrides the config sample count.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliGcVariant {
    Pairwise,
    Center,
}

#[derive(Subcommand)]
enum Command {
    /// Populate the sample cache with both conditions for every record.
    Sample(CommonArgs),
    /// Write majority-vote correctness labels (labels.csv).
    Label(CommonArgs),
    /// Compute features on the train split and fit the fusion head
    /// (fusion.json). Requires labels.csv.
    Train(CommonArgs),
    /// Write per-record metric rows (scores.csv). Uses fusion.json for the
    /// fused column when present.
    Score {
        #[command(flatten)]
        common: CommonArgs,
        /// Explicit fusion parameters file; errors if absent. Without this
        /// flag, <out>/fusion.json is used when it exists.
        #[arg(long)]
        fusion: Option<PathBuf>,
    },
    /// Evaluate AUROC per method over the chosen split; writes
    /// eval_scores.csv, summary.csv, and one roc_<method>.csv per method.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "eval")]
        split: EvalSplit,
    },
    /// sample -> label -> train -> score -> eval in one run.
    All {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "eval")]
        split: EvalSplit,
    },
    /// Write the synthetic three-regime benchmark dataset.
    Synth {
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// Records per regime (3 regimes).
        #[arg(long, default_value_t = 20)]
        per_regime: usize,
    },
}

/// Everything a stage needs, resolved from CLI flags + config file + env.
struct RunContext {
    cfg: CruxConfig,
    records: Vec<QuestionRecord>,
    sample_cache: Arc<SampleCache>,
    gen: Arc<dyn GenerationBackend>,
    nli: Arc<dyn EntailmentBackend>,
    out_dir: PathBuf,
    dataset_path: PathBuf,
    cache_dir: PathBuf,
    jobs: usize,
}

impl RunContext {
    fn build(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => CruxConfig::load(path)?,
            None => CruxConfig::default(),
        };
        if let Some(n) = args.n {
            cfg.n = n;
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if args.no_clustering {
            cfg.use_clustering = false;
        }
        if args.ablation == Ablation::NoGc {
            cfg.use_gc = false;
        }
        if let Some(variant) = args.gc {
            cfg.gc_variant = match variant {
                CliGcVariant::Pairwise => GcVariant::Pairwise,
                CliGcVariant::Center => GcVariant::Center,
            };
        }
        cfg.validate()?;

        let loaded = load_dataset(&args.dataset, args.format)?;
        if loaded.skipped > 0 {
            eprintln!("warning: skipped {} malformed records", loaded.skipped);
        }
        let records = filter_records(loaded.records, &cfg.filter);
        if records.is_empty() {
            return Err(CruxError::SchemaMismatch(format!(
                "{}: no records left after filtering",
                args.dataset.display()
            )));
        }

        std::fs::create_dir_all(&args.cache)?;
        let sample_cache = Arc::new(SampleCache::open(&args.cache.join(SAMPLES_FILE))?);
        for corrupt in sample_cache.corrupt_lines() {
            eprintln!(
                "warning: sample cache line {} is corrupt: {}",
                corrupt.line, corrupt.message
            );
        }
        let nli_cache = Arc::new(NliCache::open(&args.cache.join(NLI_FILE))?);

        let limiter = Arc::new(InflightLimiter::new(cfg.max_inflight));
        let gen = resolve_generation_backend(args, &cfg, limiter.clone())?;
        let nli = resolve_nli_backend(args, limiter)?;
        let nli: Arc<dyn EntailmentBackend> =
            Arc::new(CachedEntailmentBackend::new(nli, nli_cache));

        Ok(Self {
            cfg,
            records,
            sample_cache,
            gen,
            nli,
            out_dir: args.out.clone(),
            dataset_path: args.dataset.clone(),
            cache_dir: args.cache.clone(),
            jobs: args.jobs.max(1),
        })
    }

    fn pipeline(&self, fusion: Option<FusionParams>) -> Result<CruxPipeline> {
        let mut pipeline = CruxPipeline::new(self.cfg.clone(), self.gen.clone(), self.nli.clone())?
            .with_cache(self.sample_cache.clone());
        if let Some(params) = fusion {
            pipeline = pipeline.with_fusion(params)?;
        }
        Ok(pipeline)
    }

    fn dataset_name(&self) -> String {
        self.dataset_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    /// Writes the run manifest before any scoring output.
    fn write_manifest(&self) -> Result<()> {
        self.ensure_out_dir()?;
        let manifest = serde_json::json!({
            "config": &self.cfg,
            "dataset": self.dataset_path.display().to_string(),
            "generation_backend": self.gen.identity(),
            "nli_backend": self.nli.identity(),
            "cache": self.cache_dir.display().to_string(),
            "out": self.out_dir.display().to_string(),
            "seed": self.cfg.seed,
        });
        let mut file = std::fs::File::create(self.out_dir.join("manifest.json"))?;
        writeln!(file, "{}", serde_json::to_string_pretty(&manifest).unwrap())?;
        Ok(())
    }

    /// Runs `work` over all records with `jobs`-way parallelism, preserving
    /// input order in the returned vector.
    fn for_each_record<T: Send>(
        &self,
        work: impl Fn(&QuestionRecord) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CruxError::ConfigInvalid(format!("thread pool: {e}")))?;
        pool.install(|| {
            self.records
                .par_iter()
                .map(&work)
                .collect::<Result<Vec<T>>>()
        })
    }
}

fn resolve_generation_backend(
    args: &CommonArgs,
    cfg: &CruxConfig,
    limiter: Arc<InflightLimiter>,
) -> Result<Arc<dyn GenerationBackend>> {
    let url = args
        .backend_url
        .clone()
        .or_else(|| std::env::var(GEN_BASE_URL_ENV).ok())
        .ok_or_else(|| {
            CruxError::ConfigInvalid(format!(
                "no generation backend: pass --backend-url or set {GEN_BASE_URL_ENV}"
            ))
        })?;
    if url == "mock://synthetic" {
        return Ok(Arc::new(SyntheticGen));
    }
    if url.starts_with("mock://") {
        return Err(CruxError::ConfigInvalid(format!("unknown mock backend '{url}'")));
    }
    let api_key = std::env::var(GEN_API_KEY_ENV).ok();
    Ok(Arc::new(HttpGenerationBackend::with_policy(
        &url,
        api_key,
        &cfg.gen_model,
        RetryPolicy::default(),
        limiter,
    )))
}

fn resolve_nli_backend(
    args: &CommonArgs,
    limiter: Arc<InflightLimiter>,
) -> Result<Arc<dyn EntailmentBackend>> {
    let url = args
        .nli_url
        .clone()
        .or_else(|| std::env::var(NLI_BASE_URL_ENV).ok())
        .ok_or_else(|| {
            CruxError::ConfigInvalid(format!(
                "no NLI backend: pass --nli-url or set {NLI_BASE_URL_ENV}"
            ))
        })?;
    if url == "mock://equality" {
        return Ok(Arc::new(EqualityNli::new()));
    }
    if url.starts_with("mock://") {
        return Err(CruxError::ConfigInvalid(format!("unknown mock backend '{url}'")));
    }
    Ok(Arc::new(HttpNliBackend::with_policy(
        &url,
        RetryPolicy::default(),
        limiter,
    )))
}

fn cmd_sample(ctx: &RunContext) -> Result<()> {
    let before = ctx.sample_cache.len();
    let pipeline = ctx.pipeline(None)?;
    let results = ctx.for_each_record(|record| pipeline.sample_record(record))?;
    let after = ctx.sample_cache.len();
    eprintln!(
        "sampled {} records ({} new cache entries, {} total)",
        results.len(),
        after - before,
        after
    );
    Ok(())
}

fn labels_path(out_dir: &Path) -> PathBuf {
    out_dir.join("labels.csv")
}

fn scores_path(out_dir: &Path) -> PathBuf {
    out_dir.join("scores.csv")
}

fn fusion_path(out_dir: &Path) -> PathBuf {
    out_dir.join("fusion.json")
}

fn cmd_label(ctx: &RunContext) -> Result<()> {
    ctx.write_manifest()?;
    let pipeline = ctx.pipeline(None)?;
    let labels = ctx.for_each_record(|record| pipeline.label_record(record))?;

    let path = labels_path(&ctx.out_dir);
    let mut file = std::fs::File::create(&path)?;
    writeln!(file, "record_id,label,votes_for,votes_total")?;
    for (record, label) in ctx.records.iter().zip(&labels) {
        writeln!(
            file,
            "{},{},{},{}",
            record.id,
            u8::from(label.value),
            label.votes_for,
            label.votes_total
        )?;
    }
    let positives = labels.iter().filter(|l| l.value).count();
    eprintln!(
        "labeled {} records ({} correct, {} incorrect) -> {}",
        labels.len(),
        positives,
        labels.len() - positives,
        path.display()
    );
    Ok(())
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, bool>> {
    let mut reader = csv::Reader::from_path(path).map_err(|_| {
        CruxError::ConfigInvalid(format!(
            "cannot read labels at {}; run `crux label` first",
            path.display()
        ))
    })?;
    let mut labels = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().to_string();
        let value = row.get(1).unwrap_or_default() == "1";
        labels.insert(id, value);
    }
    Ok(labels)
}

fn cmd_train(ctx: &RunContext) -> Result<()> {
    ctx.write_manifest()?;
    let labels = read_labels(&labels_path(&ctx.out_dir))?;
    let pipeline = ctx.pipeline(None)?;

    let train_records: Vec<&QuestionRecord> = ctx
        .records
        .iter()
        .filter(|r| is_train_record(&r.id, ctx.cfg.seed, TRAIN_FRACTION))
        .collect();

    let mut examples = Vec::new();
    for record in train_records {
        let label = match labels.get(&record.id) {
            Some(&l) => l,
            None => continue,
        };
        let report = pipeline.run_crux(record)?;
        examples.push(TrainExample {
            features: pipeline.features(&report),
            label,
        });
    }

    let train_cfg = TrainConfig {
        seed: ctx.cfg.seed,
        ..TrainConfig::default()
    };
    let params = mlp_train(&examples, &train_cfg)?;
    let path = fusion_path(&ctx.out_dir);
    params.save(&path)?;
    eprintln!(
        "trained fusion head on {} examples (final loss {:.6}) -> {}",
        examples.len(),
        params.final_loss,
        path.display()
    );
    Ok(())
}

fn cmd_score(ctx: &RunContext, fusion_arg: &Option<PathBuf>) -> Result<()> {
    ctx.write_manifest()?;
    let fusion = match fusion_arg {
        Some(path) => Some(FusionParams::load(path)?),
        None => {
            let default_path = fusion_path(&ctx.out_dir);
            if default_path.exists() {
                Some(FusionParams::load(&default_path)?)
            } else {
                None
            }
        }
    };
    let has_fusion = fusion.is_some();
    let pipeline = ctx.pipeline(fusion)?;
    let reports = ctx.for_each_record(|record| pipeline.run_crux(record))?;

    let path = scores_path(&ctx.out_dir);
    let mut file = std::fs::File::create(&path)?;
    let mut header = String::from(
        "record_id,delta_h,gc,degree_matrix,eccentricity,eig_val_laplacian,num_sem_sets,rouge_l,bleu",
    );
    if has_fusion {
        header.push_str(",conf");
    }
    writeln!(file, "{header}")?;
    for report in &reports {
        let gc = report.gc.map(|g| g.to_string()).unwrap_or_default();
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{}",
            report.record_id,
            report.delta_h,
            gc,
            report.baseline_scores["degree_matrix"],
            report.baseline_scores["eccentricity"],
            report.baseline_scores["eig_val_laplacian"],
            report.baseline_scores["num_sem_sets"],
            report.baseline_scores["rouge_l"],
            report.baseline_scores["bleu"],
        );
        if has_fusion {
            line.push(',');
            line.push_str(&report.fused_confidence.unwrap().to_string());
        }
        writeln!(file, "{line}")?;
    }
    eprintln!(
        "scored {} records ({} fused column) -> {}",
        reports.len(),
        if has_fusion { "with" } else { "without" },
        path.display()
    );
    Ok(())
}

/// Record ids plus per-method score columns keyed by column header.
type ScoreTable = (Vec<String>, BTreeMap<String, Vec<f64>>);

fn read_scores(path: &Path) -> Result<ScoreTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|_| {
        CruxError::ConfigInvalid(format!(
            "cannot read scores at {}; run `crux score` first",
            path.display()
        ))
    })?;
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let mut ids = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        ids.push(row.get(0).unwrap_or_default().to_string());
        for (idx, header) in headers.iter().enumerate().skip(1) {
            let value: f64 = row.get(idx).unwrap_or_default().parse().unwrap_or(f64::NAN);
            columns.entry(header.clone()).or_default().push(value);
        }
    }
    Ok((ids, columns))
}

fn cmd_eval(ctx: &RunContext, split: EvalSplit) -> Result<()> {
    ctx.write_manifest()?;
    let labels = read_labels(&labels_path(&ctx.out_dir))?;
    let (ids, columns) = read_scores(&scores_path(&ctx.out_dir))?;

    // Restrict to the requested split, keeping scores.csv row order.
    let selected: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|(_, id)| {
            labels.contains_key(*id)
                && (split == EvalSplit::All
                    || !is_train_record(id, ctx.cfg.seed, TRAIN_FRACTION))
        })
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(CruxError::ConfigInvalid(
            "no labeled records in the evaluation split".into(),
        ));
    }

    // Method -> score column: the fused head plus the six baselines.
    let mut methods: Vec<(String, &Vec<f64>)> = Vec::new();
    if let Some(conf) = columns.get("conf") {
        methods.push((METHOD_CRUX.to_string(), conf));
    }
    for name in [
        "degree_matrix",
        "eccentricity",
        "eig_val_laplacian",
        "num_sem_sets",
        "rouge_l",
        "bleu",
    ] {
        methods.push((
            name.to_string(),
            columns.get(name).ok_or_else(|| {
                CruxError::ConfigInvalid(format!("scores.csv lacks column '{name}'"))
            })?,
        ));
    }

    let split_labels: Vec<bool> = selected.iter().map(|&i| labels[&ids[i]]).collect();

    let mut eval_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let dataset = ctx.dataset_name();
    for (method, column) in &methods {
        let scores: Vec<f64> = selected.iter().map(|&i| column[i]).collect();
        for (pos, &i) in selected.iter().enumerate() {
            eval_rows.push(EvalRow {
                record_id: ids[i].clone(),
                method_name: method.clone(),
                score: scores[pos],
                label: u8::from(split_labels[pos]),
            });
        }
        let value = auroc(&scores, &split_labels)?;
        let curve = roc_points(&scores, &split_labels)?;
        write_roc(&ctx.out_dir.join(format!("roc_{method}.csv")), method, &curve)?;
        summary_rows.push(SummaryRow {
            method_name: method.clone(),
            dataset: dataset.clone(),
            auroc: value,
        });
        eprintln!("{method}: AUROC {value:.4} over {} records", scores.len());
    }

    write_eval_rows(&ctx.out_dir.join("eval_scores.csv"), &eval_rows)?;
    write_summary(&ctx.out_dir.join("summary.csv"), &summary_rows)?;
    eprintln!("evaluation written to {}", ctx.out_dir.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sample(args) => cmd_sample(&RunContext::build(&args)?),
        Command::Label(args) => cmd_label(&RunContext::build(&args)?),
        Command::Train(args) => cmd_train(&RunContext::build(&args)?),
        Command::Score { common, fusion } => cmd_score(&RunContext::build(&common)?, &fusion),
        Command::Eval { common, split } => cmd_eval(&RunContext::build(&common)?, split),
        Command::All { common, split } => {
            let ctx = RunContext::build(&common)?;
            cmd_sample(&ctx)?;
            cmd_label(&ctx)?;
            cmd_train(&ctx)?;
            cmd_score(&ctx, &None)?;
            cmd_eval(&ctx, split)
        }
        Command::Synth { out, per_regime } => {
            write_synthetic_jsonl(&out, per_regime)?;
            eprintln!("wrote {} synthetic records to {}", per_regime * 3, out.display());
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(err) = run() {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

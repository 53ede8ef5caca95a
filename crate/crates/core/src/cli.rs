//! The `fairset` command line.
//!
//! Every subcommand resolves one [`PipelineConfig`]: the `--config` file if
//! given (defaults otherwise), then any flags on top. Failures are printed on
//! stderr as a single JSON object and mapped to the exit codes of
//! [`ErrorKind`].

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::augmentation::{
    apply_transform, filter_by_llr, generate_specs, load_plan, load_png, parse_decisions,
    plan_ratios, sample_balanced, save_plan, save_png, AugCandidate, FilterRange,
};
use crate::config::{OutputMeta, PipelineConfig};
use crate::curation::curate;
use crate::error::{Error, ErrorKind, Result};
use crate::manifest::{
    group_counts, load_embeddings, load_manifest_with, merge_pools, save_manifest, Record,
};
use crate::metrics::{fairness_score, load_predictions, mae, FairnessReport};
use crate::ood::{fit, load_scores, scores_to_csv, OodModel};
use crate::report::{
    age_histogram_svg, llr_histogram_svg, to_json, write_json_with_meta, write_meta_sidecar,
    write_text,
};

#[derive(Debug, Parser)]
#[command(
    name = "fairset",
    version,
    about = "Fairness-aware curation, LLR-filtered augmentation and fairness metrics"
)]
pub struct Cli {
    /// Pipeline configuration (JSON). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Pipeline seed; each subcommand derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Smallest admissible age label.
    #[arg(long, global = true)]
    label_min: Option<u32>,
    /// Largest admissible age label.
    #[arg(long, global = true)]
    label_max: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Curate a balanced manifest from one or more pools.
    Curate(CurateArgs),
    /// Fit, apply and query the Gaussian LLR model.
    #[command(subcommand)]
    Ood(OodCommand),
    /// Plan, render, filter and sample augmentations.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// MAE and fairness score of a prediction file.
    Evaluate(EvaluateArgs),
    /// SVG histograms of per-age counts and LLR distributions.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct CurateArgs {
    #[arg(long, required = true, num_args = 1..)]
    pool: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Audit report path [default: <out>.audit.json].
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long)]
    q_low: Option<f64>,
    #[arg(long)]
    q_high: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    feature_priority: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
enum OodCommand {
    /// Fit per-class Gaussians on labeled embeddings.
    Fit {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        ids: PathBuf,
        /// Manifest supplying each id's age class.
        #[arg(long)]
        labels_from: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        shrinkage: Option<f64>,
    },
    /// Score embeddings; writes `id,llr,predicted_class`.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        ids: PathBuf,
        /// Output CSV [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a nearest-rank quantile of the training LLR distribution.
    Quantile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        q: f64,
    },
}

#[derive(Debug, Subcommand)]
enum AugmentCommand {
    /// Compute per-cell ratios and write the transform plan.
    Plan {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ratio table path [default: <out>.ratios.json].
        #[arg(long)]
        ratios: Option<PathBuf>,
        #[arg(long)]
        feature: Option<String>,
    },
    /// Render every planned transform to `<out-dir>/<aug_id>.png`.
    Apply {
        #[arg(long)]
        plan: PathBuf,
        /// Manifest whose `path` fields locate the source images, relative
        /// to the manifest's directory.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Keep augmentations whose LLR lies in the trained LLR range.
    Filter {
        #[arg(long)]
        model: PathBuf,
        /// Precomputed `id,llr,predicted_class` scores.
        #[arg(long, conflicts_with_all = ["embeddings", "ids"])]
        scores: Option<PathBuf>,
        #[arg(long, requires = "ids")]
        embeddings: Option<PathBuf>,
        #[arg(long, requires = "embeddings")]
        ids: Option<PathBuf>,
        /// Quantile bands, e.g. `0.05:1.00` or `0.00:0.05,0.95:1.00`.
        #[arg(long)]
        range: Option<FilterRange>,
        #[arg(long)]
        out: PathBuf,
        /// Resolved cutoffs [default: <out>.cutoffs.json].
        #[arg(long)]
        cutoffs: Option<PathBuf>,
    },
    /// Draw a class- and state-balanced subset of the kept augmentations.
    Sample {
        #[arg(long)]
        plan: PathBuf,
        /// Filter table (`aug_id,llr,kept`).
        #[arg(long)]
        filter: PathBuf,
        /// Manifest of the source records.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        feature: Option<String>,
        /// Prefix for the `path` of each selected augmentation.
        #[arg(long, default_value = "")]
        image_prefix: String,
        #[arg(long)]
        out: PathBuf,
        /// Selection audit [default: <out>.audit.json].
        #[arg(long)]
        audit: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    t: Option<f64>,
    /// JSON report; one CSV per feature is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_svg: PathBuf,
    /// Feature to stack by [default: first priority feature].
    #[arg(long)]
    feature: Option<String>,
    /// LLR histogram output; needs --model and --scores.
    #[arg(long, requires_all = ["model", "scores"])]
    out_llr_svg: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

fn report_error(kind: ErrorKind, message: String) -> i32 {
    let code = kind.exit_code();
    let doc = ErrorReport {
        error: ErrorBody {
            kind: kind.as_str(),
            exit_code: code,
            message,
        },
    };
    eprintln!("{}", serde_json::to_string(&doc).expect("error serializes"));
    code
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => return report_error(ErrorKind::Config, e.to_string().trim_end().to_string()),
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => report_error(e.kind(), e.to_string()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(min) = cli.label_min {
        cfg.label_range.min = min;
    }
    if let Some(max) = cli.label_max {
        cfg.label_range.max = max;
    }
    match cli.command {
        Command::Curate(args) => cmd_curate(cfg, args),
        Command::Ood(cmd) => cmd_ood(cfg, cmd),
        Command::Augment(cmd) => cmd_augment(cfg, cmd),
        Command::Evaluate(args) => cmd_evaluate(cfg, args),
        Command::Report(args) => cmd_report(cfg, args),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_out(path: &Path, text: &str, meta: &OutputMeta) -> Result<()> {
    ensure_parent(path)?;
    write_text(path, text)?;
    write_meta_sidecar(path, meta)
}

fn validated(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_curate(mut cfg: PipelineConfig, args: CurateArgs) -> Result<()> {
    if let Some(q) = args.q_low {
        cfg.curation.q_low = q;
    }
    if let Some(q) = args.q_high {
        cfg.curation.q_high = q;
    }
    if let Some(f) = args.feature_priority {
        cfg.curation.feature_priority = f;
    }
    let cfg = validated(cfg)?;
    let pools = args
        .pool
        .iter()
        .map(|p| load_manifest_with(p, cfg.label_range))
        .collect::<Result<Vec<_>>>()?;
    let pool = merge_pools(pools)?;
    let plan = curate(&pool, &cfg.curation_config())?;
    let selected: Vec<Record> = plan.selected_records(&pool).into_iter().cloned().collect();
    let meta = cfg.meta("curate");
    ensure_parent(&args.out)?;
    save_manifest(&args.out, &selected)?;
    write_meta_sidecar(&args.out, &meta)?;
    let audit = args
        .audit
        .unwrap_or_else(|| with_suffix(&args.out, ".audit.json"));
    ensure_parent(&audit)?;
    write_json_with_meta(&audit, &meta, &plan.audit())
}

fn labels_from(manifest: &Path, cfg: &PipelineConfig) -> Result<HashMap<String, u32>> {
    Ok(load_manifest_with(manifest, cfg.label_range)?
        .into_iter()
        .map(|r| (r.id, r.age))
        .collect())
}

fn cmd_ood(mut cfg: PipelineConfig, cmd: OodCommand) -> Result<()> {
    match cmd {
        OodCommand::Fit {
            embeddings,
            ids,
            labels_from: manifest,
            model,
            k,
            shrinkage,
        } => {
            if k.is_some() {
                cfg.ood.k = k;
            }
            if let Some(s) = shrinkage {
                cfg.ood.shrinkage = s;
            }
            let cfg = validated(cfg)?;
            let table = load_embeddings(&embeddings, &ids)?;
            let labels = labels_from(&manifest, &cfg)?;
            let fitted = fit(&table, &labels, &cfg.ood)?;
            ensure_parent(&model)?;
            fitted.save(&model, Some(cfg.meta("ood fit").to_value()))
        }
        OodCommand::Score {
            model,
            embeddings,
            ids,
            out,
        } => {
            let cfg = validated(cfg)?;
            let model = OodModel::load(&model)?;
            let table = load_embeddings(&embeddings, &ids)?;
            let csv = scores_to_csv(&model.score_batch(&table)?);
            match out {
                Some(path) => write_out(&path, &csv, &cfg.meta("ood score")),
                None => print_stdout(&csv),
            }
        }
        OodCommand::Quantile { model, q } => {
            validated(cfg)?;
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::config(format!("q = {q} must lie in [0, 1]")));
            }
            let v = OodModel::load(&model)?.train_quantile(q)?;
            print_stdout(&format!("{v}\n"))
        }
    }
}

fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn source_image(manifest_dir: &Path, record: &Record) -> Result<PathBuf> {
    let rel = record
        .path
        .as_deref()
        .ok_or_else(|| Error::data(format!("record {:?} has no image path", record.id)))?;
    Ok(manifest_dir.join(rel))
}

#[derive(Serialize)]
struct RatioAudit<'a> {
    feature: &'a str,
    ratios: &'a crate::augmentation::AugRatioTable,
    planned: usize,
}

#[derive(Serialize)]
struct CutoffAudit<'a> {
    range: String,
    cutoffs: &'a [crate::augmentation::Cutoff],
    scored: usize,
    kept: usize,
}

fn cmd_augment(mut cfg: PipelineConfig, cmd: AugmentCommand) -> Result<()> {
    match cmd {
        AugmentCommand::Plan {
            manifest,
            out,
            ratios,
            feature,
        } => {
            if feature.is_some() {
                cfg.augmentation.feature = feature;
            }
            let cfg = validated(cfg)?;
            let feature = cfg.augment_feature()?;
            let records = load_manifest_with(&manifest, cfg.label_range)?;
            let table = plan_ratios(&group_counts(&records).for_feature(feature))?;
            let specs = generate_specs(
                &records,
                &table,
                feature,
                &cfg.augmentation.bounds,
                cfg.plan_seed(),
            )?;
            let meta = cfg.meta("augment plan");
            ensure_parent(&out)?;
            save_plan(&out, &specs)?;
            write_meta_sidecar(&out, &meta)?;
            let ratios = ratios.unwrap_or_else(|| with_suffix(&out, ".ratios.json"));
            ensure_parent(&ratios)?;
            write_json_with_meta(
                &ratios,
                &meta,
                &RatioAudit {
                    feature,
                    ratios: &table,
                    planned: specs.len(),
                },
            )
        }
        AugmentCommand::Apply {
            plan,
            manifest,
            out_dir,
        } => {
            let cfg = validated(cfg)?;
            let specs = load_plan(&plan)?;
            let records = load_manifest_with(&manifest, cfg.label_range)?;
            let dir = manifest.parent().unwrap_or(Path::new(""));
            let by_id: HashMap<&str, &Record> =
                records.iter().map(|r| (r.id.as_str(), r)).collect();
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            specs.par_iter().try_for_each(|spec| {
                let record = by_id.get(spec.source_id.as_str()).ok_or_else(|| {
                    Error::data(format!("plan source {:?} not in manifest", spec.source_id))
                })?;
                let img = load_png(source_image(dir, record)?)?;
                let out = apply_transform(&img, &spec.params)?;
                save_png(&out, out_dir.join(format!("{}.png", spec.aug_id)))
            })?;
            write_text(
                out_dir.join("apply.meta.json"),
                &to_json(&cfg.meta("augment apply")),
            )
        }
        AugmentCommand::Filter {
            model,
            scores,
            embeddings,
            ids,
            range,
            out,
            cutoffs,
        } => {
            if let Some(r) = range {
                cfg.augmentation.filter = r;
            }
            let cfg = validated(cfg)?;
            let model = OodModel::load(&model)?;
            let scores = match (scores, embeddings, ids) {
                (Some(path), _, _) => load_scores(path)?,
                (None, Some(e), Some(i)) => model.score_batch(&load_embeddings(e, i)?)?,
                _ => {
                    return Err(Error::config(
                        "filter needs --scores or --embeddings with --ids",
                    ))
                }
            };
            let outcome = filter_by_llr(&scores, &model, &cfg.augmentation.filter)?;
            let meta = cfg.meta("augment filter");
            write_out(&out, &outcome.to_csv(), &meta)?;
            let cutoffs = cutoffs.unwrap_or_else(|| with_suffix(&out, ".cutoffs.json"));
            ensure_parent(&cutoffs)?;
            write_json_with_meta(
                &cutoffs,
                &meta,
                &CutoffAudit {
                    range: cfg.augmentation.filter.to_string(),
                    cutoffs: &outcome.cutoffs,
                    scored: outcome.decisions.len(),
                    kept: outcome.kept_ids().len(),
                },
            )
        }
        AugmentCommand::Sample {
            plan,
            filter,
            manifest,
            budget,
            feature,
            image_prefix,
            out,
            audit,
        } => {
            if let Some(b) = budget {
                cfg.augmentation.budget = b;
            }
            if feature.is_some() {
                cfg.augmentation.feature = feature;
            }
            let cfg = validated(cfg)?;
            let feature = cfg.augment_feature()?;
            let specs = load_plan(&plan)?;
            let text = fs::read_to_string(&filter).map_err(|e| Error::io(&filter, e))?;
            let kept: HashMap<String, bool> = parse_decisions(&text)?
                .into_iter()
                .map(|d| (d.aug_id, d.kept))
                .collect();
            let records = load_manifest_with(&manifest, cfg.label_range)?;
            let by_id: HashMap<&str, &Record> =
                records.iter().map(|r| (r.id.as_str(), r)).collect();
            let mut candidates = Vec::new();
            let mut by_aug = HashMap::new();
            for spec in &specs {
                if !kept.get(&spec.aug_id).copied().unwrap_or(false) {
                    continue;
                }
                let state = spec.features.get(feature).ok_or_else(|| {
                    Error::data(format!("{:?} lacks feature {feature:?}", spec.aug_id))
                })?;
                candidates.push(AugCandidate {
                    aug_id: spec.aug_id.clone(),
                    class: spec.class,
                    state: state.clone(),
                });
                by_aug.insert(spec.aug_id.as_str(), spec);
            }
            let outcome = sample_balanced(&candidates, cfg.augmentation.budget, cfg.sample_seed());
            let selected = outcome
                .selected
                .iter()
                .map(|id| {
                    let spec = by_aug[id.as_str()];
                    let source = by_id.get(spec.source_id.as_str()).ok_or_else(|| {
                        Error::data(format!("plan source {:?} not in manifest", spec.source_id))
                    })?;
                    Ok(Record {
                        id: id.clone(),
                        source: source.source.clone(),
                        age: spec.class,
                        features: spec.features.clone(),
                        path: Some(format!("{image_prefix}{id}.png")),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let meta = cfg.meta("augment sample");
            ensure_parent(&out)?;
            save_manifest(&out, &selected)?;
            write_meta_sidecar(&out, &meta)?;
            let audit = audit.unwrap_or_else(|| with_suffix(&out, ".audit.json"));
            ensure_parent(&audit)?;
            write_json_with_meta(&audit, &meta, &outcome)
        }
    }
}

#[derive(Serialize)]
struct Evaluation {
    count: usize,
    mae: f64,
    fairness: Vec<FairnessReport>,
}

fn cmd_evaluate(mut cfg: PipelineConfig, args: EvaluateArgs) -> Result<()> {
    if let Some(t) = args.t {
        cfg.metrics.t = t;
    }
    if let Some(f) = args.features {
        cfg.metrics.features = f;
    }
    let cfg = validated(cfg)?;
    if cfg.metrics.features.is_empty() {
        return Err(Error::config("no features to evaluate"));
    }
    let predictions = load_predictions(&args.predictions, cfg.label_range)?;
    let fairness = cfg
        .metrics
        .features
        .iter()
        .map(|f| fairness_score(&predictions, f, cfg.metrics.t))
        .collect::<Result<Vec<_>>>()?;
    let eval = Evaluation {
        count: predictions.len(),
        mae: mae(&predictions)?,
        fairness,
    };
    let meta = cfg.meta("evaluate");
    ensure_parent(&args.out)?;
    for r in &eval.fairness {
        let csv = args.out.with_extension(format!("{}.csv", r.feature));
        write_out(&csv, &r.to_csv(), &meta)?;
    }
    write_json_with_meta(&args.out, &meta, &eval)?;
    let mut summary = format!("mae {}\n", eval.mae);
    for r in &eval.fairness {
        summary.push_str(&format!(
            "fairness {} {} ({} of {} ages)\n",
            r.feature,
            r.score,
            r.fair_ages(),
            r.evaluated_ages
        ));
    }
    print_stdout(&summary)
}

fn cmd_report(mut cfg: PipelineConfig, args: ReportArgs) -> Result<()> {
    if args.feature.is_some() {
        cfg.augmentation.feature = args.feature;
    }
    let cfg = validated(cfg)?;
    let meta = cfg.meta("report");
    let feature = cfg.augment_feature()?;
    let records = load_manifest_with(&args.manifest, cfg.label_range)?;
    let counts = group_counts(&records).for_feature(feature);
    if counts.is_empty() {
        return Err(Error::data(format!("manifest has no feature {feature:?}")));
    }
    ensure_parent(&args.out_svg)?;
    write_text(&args.out_svg, &age_histogram_svg(&counts, feature, &meta))?;
    if let (Some(out), Some(model), Some(scores)) = (args.out_llr_svg, args.model, args.scores) {
        let model = OodModel::load(model)?;
        let aug: Vec<f64> = load_scores(scores)?.into_iter().map(|s| s.llr).collect();
        let cutoffs: Vec<f64> = cfg
            .augmentation
            .filter
            .resolve(&model)?
            .iter()
            .flat_map(|c| [c.lo, c.hi])
            .collect();
        ensure_parent(&out)?;
        write_text(
            &out,
            &llr_histogram_svg(model.train_llr(), &aug, &cutoffs, args.bins, &meta),
        )?;
    }
    Ok(())
}

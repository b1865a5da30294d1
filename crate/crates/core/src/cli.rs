//! The `playa` command line.
//!
//! Every subcommand reads one JSON [`RunConfig`] (`--config`), applies flag
//! overrides, and writes its artifacts plus `config.json` (the resolved
//! configuration, reusable as `--config`) and `version.txt` into the output
//! directory. Paths inside a config file are relative to that file.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{
    assemble, centroids, fit_standardizer, read_playas, synth_tables, write_lulc_csv, Dataset,
    FeatureSchema, RawTables, Split, SplitSpec, SynthConfig, TablePaths,
};
use crate::eval::{metrics_report, per_entity_metrics, pooled, regional_fraction, roc_curve, select_cutoff};
use crate::model::{sequence_forward, EmbedDims, ModelConfig};
use crate::numeric::sigmoid;
use crate::optim::{fit_with, TrainConfig};
use crate::raster::{BufferConfig, RasterGrid};
use crate::report::{best_median_worst, fraction_chart, roc_chart, timeline_chart};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterInput {
    pub year: i32,
    /// JSON grid header; see [`RasterGrid::read`].
    pub header: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub hidden_size: usize,
    pub embed_dims: EmbedDims,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            hidden_size: 128,
            embed_dims: EmbedDims::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub n_playas: usize,
    pub n_years: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            n_playas: 50,
            n_years: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub tables: TablePaths,
    pub rasters: Vec<RasterInput>,
    /// Written by `train`; read by `evaluate`, `predict` and `report`.
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Drives training, buffer sampling and the synthetic generator.
    pub seed: u64,
    /// Keep only the first `n` playas in id order.
    pub max_playas: Option<usize>,
    pub cutoff: f64,
    pub cutoff_grid_step: f64,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub buffer: BufferConfig,
    pub split: SplitSpec,
    pub schema: FeatureSchema,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tables: TablePaths::in_dir(Path::new(".")),
            rasters: Vec::new(),
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            max_playas: None,
            cutoff: 0.3,
            cutoff_grid_step: 0.01,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            buffer: BufferConfig::default(),
            split: SplitSpec::default(),
            schema: FeatureSchema::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::in_file(path, e.to_string()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::in_file(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base)?;
        Ok(cfg)
    }

    /// Make every path absolute, interpreting relative ones against `base`.
    fn rebase(&mut self, base: &Path) -> Result<()> {
        let fix = |p: &mut PathBuf| -> Result<()> {
            *p = std::path::absolute(base.join(&*p))?;
            Ok(())
        };
        fix(&mut self.tables.playas)?;
        fix(&mut self.tables.monthly)?;
        fix(&mut self.tables.lulc)?;
        fix(&mut self.out_dir)?;
        for r in &mut self.rasters {
            fix(&mut r.header)?;
        }
        if let Some(c) = &mut self.checkpoint {
            fix(c)?;
        }
        Ok(())
    }

    /// Propagate the global seed and check every section.
    fn resolve(&mut self) -> Result<()> {
        self.train.seed = self.seed;
        self.buffer.base_seed = self.seed;
        self.train.validate()?;
        self.buffer.validate()?;
        self.split.validate()?;
        self.schema.validate()?;
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::Config(format!("cutoff must be in (0, 1), got {}", self.cutoff)));
        }
        if self.model.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be at least 1".into()));
        }
        Ok(())
    }

    fn model_config(&self, ds: &Dataset) -> ModelConfig {
        ModelConfig {
            hidden_size: self.model.hidden_size,
            numeric_feature_count: ds.schema.width(),
            embed_dims: self.model.embed_dims,
            vocab_sizes: ds.vocab.sizes(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "playa", version, about = "Monthly playa inundation modeling")]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use only the first N playas (by id).
    #[arg(long, global = true)]
    max_playas: Option<usize>,
    /// Probability cutoff for positive predictions.
    #[arg(long, global = true)]
    cutoff: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo land-cover fractions around each playa -> lulc.csv
    ExtractLulc,
    /// Ingest, standardize and summarize the splits
    Prepare,
    /// Write a synthetic dataset and a matching config
    Synth {
        #[arg(long)]
        playas: Option<usize>,
        #[arg(long)]
        years: Option<usize>,
    },
    /// Fit the model -> checkpoint.json, history.csv
    Train,
    /// Score a checkpoint -> metrics.json and per-split CSVs
    Evaluate,
    /// Per playa-month probabilities -> predictions.csv
    Predict,
    /// Evaluation CSVs plus SVG plots
    Report,
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("playa: error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.rebase(Path::new("."))?;
            c
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.max_playas {
        cfg.max_playas = Some(n);
    }
    if let Some(c) = cli.cutoff {
        cfg.cutoff = c;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = std::path::absolute(o)?;
    }
    cfg.resolve()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::in_file(&cfg.out_dir, e.to_string()))?;

    match cli.command {
        Command::ExtractLulc => extract_lulc(&cfg),
        Command::Prepare => prepare(&cfg),
        Command::Synth { playas, years } => synth(cfg, playas, years),
        Command::Train => train(cfg),
        Command::Evaluate => evaluate(&cfg, false),
        Command::Predict => predict(&cfg),
        Command::Report => evaluate(&cfg, true),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::in_file(path, e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

fn write_run_info(cfg: &RunConfig) -> Result<()> {
    write_json(&cfg.out_dir.join("config.json"), cfg)?;
    write_file(&cfg.out_dir.join("version.txt"), format!("playa {VERSION}\n"))
}

fn load_dataset(cfg: &RunConfig, schema: &FeatureSchema, split: &SplitSpec) -> Result<Dataset> {
    let mut raw = RawTables::read(&cfg.tables, schema)?;
    if let Some(n) = cfg.max_playas {
        raw.truncate_playas(n);
    }
    assemble(&raw, split)
}

fn extract_lulc(cfg: &RunConfig) -> Result<()> {
    if cfg.rasters.is_empty() {
        return Err(Error::Config("no rasters configured for extract-lulc".into()));
    }
    let mut playas = read_playas(&cfg.tables.playas, &cfg.schema)?;
    if let Some(n) = cfg.max_playas {
        playas.sort_by(|a, b| crate::data::compare_ids(&a.playa_id, &b.playa_id));
        playas.truncate(n);
    }
    let centers = centroids(&playas);
    if centers.len() != playas.len() {
        return Err(Error::in_file(
            &cfg.tables.playas,
            format!("{} of {} playas lack a centroid", playas.len() - centers.len(), playas.len()),
        ));
    }
    let grids = cfg
        .rasters
        .iter()
        .map(|r| Ok((r.year, RasterGrid::read(&r.header)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = crate::raster::extract_lulc(&grids, &centers, &cfg.buffer, &cfg.schema.land_cover)?;
    write_lulc_csv(&cfg.out_dir.join("lulc.csv"), &cfg.schema.land_cover, &rows)?;
    write_run_info(cfg)?;
    println!(
        "extracted {} playas x {} years -> {}",
        centers.len(),
        grids.len(),
        cfg.out_dir.join("lulc.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PrepareSummary {
    playas: usize,
    first_month: String,
    last_month: String,
    months: usize,
    features: usize,
    huc8_codes: usize,
    authors: usize,
    label_prevalence: f64,
    never_inundated_fraction: f64,
    splits: Vec<crate::data::SplitSummary>,
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    let mut ds = load_dataset(cfg, &cfg.schema, &cfg.split)?;
    let stats = fit_standardizer(&ds)?;
    ds.standardize(&stats)?;
    let summary = PrepareSummary {
        playas: ds.samples.len(),
        first_month: ds.vocab.first_month.to_string(),
        last_month: ds.vocab.last_month.to_string(),
        months: ds.vocab.timeline_len(),
        features: ds.schema.width(),
        huc8_codes: ds.vocab.huc8.len(),
        authors: ds.vocab.authors.len(),
        label_prevalence: ds.label_prevalence(),
        never_inundated_fraction: ds.never_inundated_fraction(),
        splits: ds.split_summary(),
    };
    write_json(&cfg.out_dir.join("standardizer.json"), &stats)?;
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    write_run_info(cfg)?;
    println!(
        "{} playas, {} months ({} to {}), {} features, prevalence {:.4}",
        summary.playas,
        summary.months,
        summary.first_month,
        summary.last_month,
        summary.features,
        summary.label_prevalence
    );
    for s in &summary.splits {
        println!(
            "  {:<10} {}-{}  {} playa-months, {} wet ({:.4})",
            s.split.to_string(),
            s.years.0,
            s.years.1,
            s.playa_months,
            s.positives,
            s.prevalence
        );
    }
    Ok(())
}

fn synth(mut cfg: RunConfig, playas: Option<usize>, years: Option<usize>) -> Result<()> {
    if let Some(n) = playas {
        cfg.synth.n_playas = n;
    }
    if let Some(y) = years {
        cfg.synth.n_years = y;
    }
    let sc = SynthConfig::new(cfg.synth.n_playas, cfg.synth.n_years, cfg.seed);
    let raw = synth_tables(&sc)?;
    let out = cfg.out_dir.clone();
    raw.write(&TablePaths::in_dir(&out))?;

    // A config next to the data, with paths relative to it and desk-scale
    // model settings.
    let mut written = cfg.clone();
    written.tables.playas = PathBuf::from("playas.csv");
    written.tables.monthly = PathBuf::from("monthly.csv");
    written.tables.lulc = PathBuf::from("lulc.csv");
    written.out_dir = PathBuf::from("out");
    written.rasters.clear();
    written.checkpoint = None;
    written.max_playas = None;
    written.split = sc.split_spec();
    written.schema = raw.schema.clone();
    written.model.hidden_size = 16;
    written.train.batch_size = 8;
    write_json(&out.join("config.json"), &written)?;
    write_file(&out.join("version.txt"), format!("playa {VERSION}\n"))?;
    println!(
        "wrote {} playas x {} years to {}",
        sc.n_playas,
        sc.n_years,
        out.display()
    );
    Ok(())
}

fn train(mut cfg: RunConfig) -> Result<()> {
    let mut ds = load_dataset(&cfg, &cfg.schema, &cfg.split)?;
    let stats = fit_standardizer(&ds)?;
    ds.standardize(&stats)?;
    let model = cfg.model_config(&ds);
    let mut log = std::io::stdout().lock();
    let (params, history) = fit_with(&ds.samples, &model, &cfg.train, |e| {
        let _ = writeln!(
            log,
            "epoch {:>3}  lr {:.6}  train {:.5}  val {:.5}{}",
            e.epoch,
            e.lr,
            e.train_loss,
            e.val_loss,
            if e.is_best { "  *" } else { "" }
        );
    })?;
    drop(log);
    let ck = Checkpoint::new(
        model,
        ds.vocab.clone(),
        ds.schema.clone(),
        ds.split,
        stats,
        &params,
        history.best_epoch,
        cfg.seed,
    );
    let ck_path = cfg.out_dir.join("checkpoint.json");
    ck.save(&ck_path)?;
    let hist_path = cfg.out_dir.join("history.csv");
    let file = std::fs::File::create(&hist_path).map_err(|e| Error::in_file(&hist_path, e.to_string()))?;
    history.write_csv(file)?;
    cfg.checkpoint = Some(ck_path.clone());
    write_run_info(&cfg)?;
    println!(
        "best epoch {:?} of {}; checkpoint {}",
        history.best_epoch,
        history.epochs.len(),
        ck_path.display()
    );
    Ok(())
}

struct Scored {
    ds: Dataset,
    logits: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
}

fn score(cfg: &RunConfig) -> Result<Scored> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| {
        Error::Config("no checkpoint configured; use the config.json written by `train`".into())
    })?;
    let ck = Checkpoint::load(path)?;
    let params = ck.parameters()?;
    let mut ds = load_dataset(cfg, &ck.schema, &ck.split)?;
    if ds.vocab != ck.vocab {
        return Err(Error::Data(format!(
            "dataset ({} playas, {} to {}) does not match the checkpoint vocabulary ({} playas, {} to {})",
            ds.vocab.playa_ids.len(),
            ds.vocab.first_month,
            ds.vocab.last_month,
            ck.vocab.playa_ids.len(),
            ck.vocab.first_month,
            ck.vocab.last_month
        )));
    }
    ds.standardize(&ck.standardizer)?;
    let logits: Vec<Vec<f64>> = ds
        .samples
        .par_iter()
        .map(|s| sequence_forward(s, &params, &ck.model_config).map(|c| c.logits))
        .collect::<Result<_>>()?;
    let probs = logits
        .iter()
        .map(|l| l.iter().map(|&x| sigmoid(x)).collect())
        .collect();
    Ok(Scored { ds, logits, probs })
}

#[derive(Serialize)]
struct MetricsFile {
    cutoff: f64,
    /// F1-maximizing grid cutoff on the validation months, for reference.
    validation_best_f1_cutoff: Option<f64>,
    splits: BTreeMap<String, crate::eval::MetricsReport>,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::in_file(path, e.to_string())
}

fn fractional_year(m: crate::data::YearMonth) -> f64 {
    f64::from(m.year) + f64::from(m.month - 1) / 12.0
}

fn evaluate(cfg: &RunConfig, with_plots: bool) -> Result<()> {
    let Scored { ds, logits, probs } = score(cfg)?;
    let out = &cfg.out_dir;
    let mut splits = BTreeMap::new();
    let mut curves = Vec::new();
    for split in Split::ALL {
        let (l, y) = pooled(&ds.samples, &logits, split);
        if l.is_empty() {
            continue;
        }
        let report = metrics_report(split, &l, &y, cfg.cutoff)?;
        let (p, _) = pooled(&ds.samples, &probs, split);
        let roc = roc_curve(&p, &y)?;

        let path = out.join(format!("roc_{split}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["fpr", "tpr", "threshold"])?;
        for pt in &roc {
            w.write_record([pt.fpr.to_string(), pt.tpr.to_string(), pt.threshold.to_string()])?;
        }
        w.flush()?;

        let entities = per_entity_metrics(&ds.samples, &probs, cfg.cutoff, split)?;
        let path = out.join(format!("per_playa_{split}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["playa_id", "loss", "f1"])?;
        for e in &entities {
            w.write_record([
                e.playa_id.clone(),
                e.bce_loss.to_string(),
                e.f1.map(|f| f.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;

        let months: Vec<usize> = (0..ds.samples[0].len())
            .filter(|&t| ds.samples[0].split_mask[t] == split)
            .collect();
        let pick = |v: &[Vec<f64>]| -> Vec<Vec<f64>> {
            v.iter().map(|row| months.iter().map(|&t| row[t]).collect()).collect()
        };
        let truth: Vec<Vec<f64>> = ds
            .samples
            .iter()
            .map(|s| s.labels.iter().map(|&l| f64::from(l)).collect())
            .collect();
        let truth_frac = regional_fraction(&pick(&truth), cfg.cutoff)?;
        let pred_frac = regional_fraction(&pick(&probs), cfg.cutoff)?;
        let path = out.join(format!("fraction_{split}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["year", "month", "truth_fraction", "predicted_fraction"])?;
        for (k, &t) in months.iter().enumerate() {
            let m = ds.samples[0].months[t];
            w.write_record([
                m.year.to_string(),
                m.month.to_string(),
                truth_frac[k].to_string(),
                pred_frac[k].to_string(),
            ])?;
        }
        w.flush()?;

        if with_plots {
            let years: Vec<f64> = months
                .iter()
                .map(|&t| fractional_year(ds.samples[0].months[t]))
                .collect();
            let chart = fraction_chart(
                &format!("Regional inundation fraction ({split})"),
                &years,
                &truth_frac,
                &pred_frac,
            );
            write_file(&out.join(format!("fraction_{split}.svg")), chart.to_svg())?;
            if split == Split::Test {
                if let Some(picks) = best_median_worst(&entities) {
                    let full_years: Vec<f64> =
                        ds.samples[0].months.iter().map(|&m| fractional_year(m)).collect();
                    for (name, i) in ["best", "median", "worst"].iter().zip(picks) {
                        let id = &entities[i].playa_id;
                        let s = ds
                            .samples
                            .iter()
                            .position(|s| &s.playa_id == id)
                            .expect("entity comes from samples");
                        let chart = timeline_chart(
                            &format!("Playa {id} ({name} test loss {:.4})", entities[i].bce_loss),
                            &full_years,
                            &ds.samples[s].labels,
                            &probs[s],
                        );
                        write_file(&out.join(format!("timeline_{name}.svg")), chart.to_svg())?;
                    }
                }
            }
        }
        curves.push((split.to_string(), roc, report.auc));
        splits.insert(split.to_string(), report);
    }
    let validation_best_f1_cutoff = {
        let (p, y) = pooled(&ds.samples, &probs, Split::Validation);
        select_cutoff(&p, &y, cfg.cutoff_grid_step).ok()
    };
    if with_plots {
        write_file(&out.join("roc.svg"), roc_chart(&curves).to_svg())?;
    }
    let metrics = MetricsFile {
        cutoff: cfg.cutoff,
        validation_best_f1_cutoff,
        splits,
    };
    write_json(&out.join("metrics.json"), &metrics)?;
    write_run_info(cfg)?;
    for (name, r) in &metrics.splits {
        println!(
            "{name:<10} auc {:.4}  f1 {}  precision {}  recall {}  accuracy {:.4}  bce {:.4}",
            r.auc,
            fmt_opt(r.f1),
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            r.accuracy,
            r.bce_loss
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn predict(cfg: &RunConfig) -> Result<()> {
    let Scored { ds, probs, .. } = score(cfg)?;
    let path = cfg.out_dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["playa_id", "year", "month", "split", "probability", "predicted", "label"])?;
    for (s, p) in ds.samples.iter().zip(&probs) {
        for t in 0..s.len() {
            w.write_record([
                s.playa_id.clone(),
                s.months[t].year.to_string(),
                s.months[t].month.to_string(),
                s.split_mask[t].to_string(),
                p[t].to_string(),
                u8::from(p[t] >= cfg.cutoff).to_string(),
                s.labels[t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    write_run_info(cfg)?;
    println!("wrote {}", path.display());
    Ok(())
}

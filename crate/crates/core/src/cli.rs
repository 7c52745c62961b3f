//! The `tkgr-forge` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{self, RunConfig};
use crate::data::{self, Split, TkgDataset, CACHE_MAGIC};
use crate::error::{Error, Result};
use crate::eval::{self, FilterIndex, Protocol};
use crate::models::ScoreModel;
use crate::pipeline::{self, Strategy};
use crate::sampling::NegativeSampler;
use crate::seeding;
use crate::shift::{self, ShiftFeature, Windowing};
use crate::tkgan::{generator_distribution, select_negative};
use crate::training::{self, TrainFailure};
use crate::ttt::LstmPredictor;

#[derive(Debug, Parser)]
#[command(name = "tkgr-forge", version, about = "Temporal knowledge-graph training, adaptation and analysis")]
pub struct Cli {
    /// `key = value` run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel scoring (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DatasetArg {
    /// Dataset directory or `.tkgd` cache (default: `$TKGR_FORGE_DATA`).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Timestamp interval, e.g. `24h`, `15 mins`, `1 year`.
    #[arg(long)]
    pub interval: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a dataset directory, print statistics and write the binary cache.
    Ingest(DatasetArg),
    /// Train a target model (rns, tans, or two-stage tkgan).
    Train {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Fit the next-snapshot entity-distribution predictor.
    FitDist(DatasetArg),
    /// Evaluate, adapt at test time, and evaluate again.
    Adapt {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Rank a split under both protocols.
    Eval {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// KS and U tests between consecutive snapshot windows.
    AnalyzeShift {
        #[command(flatten)]
        data: DatasetArg,
        /// `10`, `size=10`, or explicit ranges `0-9,10-24`.
        #[arg(long)]
        windows: String,
        #[arg(long, default_value = "relation")]
        feature: ShiftFeature,
        /// Comma-separated splits to draw facts from.
        #[arg(long, default_value = "train,valid,test")]
        splits: String,
    },
    /// Write negative samples for a split.
    SampleNeg {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, default_value = "rns")]
        strategy: Strategy,
        /// Generator checkpoint, required for `tkgan`.
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Negatives per fact.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value = "train")]
        split: Split,
        /// Only the first N facts.
        #[arg(long)]
        limit: Option<usize>,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn apply_dataset(cfg: &mut RunConfig, arg: &DatasetArg) -> Result<()> {
    if let Some(d) = &arg.dataset {
        cfg.set("dataset", &d.display().to_string())?;
    }
    if let Some(i) = &arg.interval {
        cfg.set("interval", i)?;
    }
    if cfg.dataset.is_none() {
        cfg.dataset = std::env::var_os(config::DATA_ROOT_ENV).map(PathBuf::from);
    }
    Ok(())
}

/// A directory is parsed; a file must be a dataset cache.
pub fn open_dataset(path: &Path, interval: &data::Interval) -> Result<TkgDataset> {
    if path.is_dir() {
        return data::load_dataset(path, interval);
    }
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    if !bytes.starts_with(CACHE_MAGIC) {
        return Err(Error::Cache(format!("{} is neither a directory nor a dataset cache", path.display())));
    }
    TkgDataset::from_cache_bytes(&bytes)
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::file(&cfg.out, e))?;
    let path = cfg.out.join("config.conf");
    fs::write(&path, cfg.render()).map_err(|e| Error::file(&path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn load_for(cfg: &mut RunConfig, arg: &DatasetArg) -> Result<TkgDataset> {
    apply_dataset(cfg, arg)?;
    cfg.validate(true)?;
    let path = cfg.dataset.clone().expect("validated");
    open_dataset(&path, &cfg.interval)
}

fn save_models(out: &Path, models: &[(String, ScoreModel)], suffix: &str) -> Result<()> {
    for (name, m) in models {
        m.store().save(&out.join(format!("{name}{suffix}.tkgm")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = effective_config(&cli)?;
    match &cli.command {
        Command::Ingest(arg) => {
            let ds = load_for(&mut cfg, arg)?;
            prepare_out(&cfg)?;
            let cache = cfg.out.join("dataset.tkgd");
            ds.write_cache(&cache)?;
            let stats = ds.stats();
            println!("{stats}");
            write_json(&cfg.out.join("stats.json"), &serde_json::to_value(&stats)?)?;
        }
        Command::Train { data, strategy, model } => {
            if let Some(s) = strategy {
                cfg.train.strategy = *s;
            }
            if let Some(m) = model {
                cfg.set("model", m)?;
            }
            let ds = load_for(&mut cfg, data)?;
            prepare_out(&cfg)?;
            cmd_train(&cfg, &ds)?;
        }
        Command::FitDist(arg) => {
            let ds = load_for(&mut cfg, arg)?;
            prepare_out(&cfg)?;
            let fitted = pipeline::fit_distribution(&ds, &cfg.fit, cfg.seed)?;
            fitted.predictor.save(&cfg.out.join("predictor.json"))?;
            let summary = json!({
                "final_loss": fitted.final_loss,
                "window": cfg.fit.lstm.window,
                "hidden": cfg.fit.lstm.hidden,
                "epochs": cfg.fit.lstm.epochs,
            });
            write_json(&cfg.out.join("fit.json"), &summary)?;
            println!("predictor loss {:.6}", fitted.final_loss);
        }
        Command::Adapt {
            data,
            checkpoint,
            predictor,
            steps,
        } => {
            if let Some(s) = steps {
                cfg.ttt.steps = *s;
            }
            let ds = load_for(&mut cfg, data)?;
            let predictor = LstmPredictor::load(predictor)?;
            let model = ScoreModel::new(crate::models::ParameterStore::load(checkpoint)?);
            prepare_out(&cfg)?;
            let out = pipeline::adapt_and_evaluate(&ds, model, &predictor, &cfg.fit, &cfg.ttt, cfg.protocol)?;
            let report = json!({ "before": out.before, "after": out.after });
            write_json(&cfg.out.join("adapt_report.json"), &report)?;
            let trace_path = cfg.out.join("ttt_trace.jsonl");
            let mut f = fs::File::create(&trace_path).map_err(|e| Error::file(&trace_path, e))?;
            for e in &out.adaptation.trace {
                serde_json::to_writer(&mut f, e)?;
                f.write_all(b"\n")?;
            }
            out.adaptation.model.store().save(&cfg.out.join("adapted.tkgm"))?;
            println!("before  {}", out.before);
            println!("after   {}", out.after);
        }
        Command::Eval {
            data,
            checkpoint,
            split,
        } => {
            let ds = load_for(&mut cfg, data)?;
            let model = ScoreModel::new(crate::models::ParameterStore::load(checkpoint)?);
            prepare_out(&cfg)?;
            let filter = FilterIndex::from_dataset(&ds);
            let quads = ds.split(*split);
            let raw = eval::evaluate(&model, quads, Protocol::Raw, &filter)?;
            let filtered = eval::evaluate(&model, quads, Protocol::TimeAwareFiltered, &filter)?;
            let report = json!({ "split": split.name(), "raw": raw, "time_aware_filtered": filtered });
            write_json(&cfg.out.join("eval_report.json"), &report)?;
            println!("{raw}");
            println!("{filtered}");
        }
        Command::AnalyzeShift {
            data,
            windows,
            feature,
            splits,
        } => {
            let windowing: Windowing = windows.parse()?;
            let splits = splits
                .split(',')
                .map(|s| s.trim().parse::<Split>())
                .collect::<Result<Vec<_>>>()?;
            let ds = load_for(&mut cfg, data)?;
            let report = shift::analyze_shift(&ds, &windowing, *feature, &splits)?;
            prepare_out(&cfg)?;
            let path = cfg.out.join("shift.csv");
            let f = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
            report.write_csv(std::io::BufWriter::new(f))?;
            if let Some(i) = report.max_shift_pair() {
                let p = &report.pairs[i];
                println!("largest shift: windows {} vs {} (D = {:.4}, p = {:.3e})", p.window_a, p.window_b, p.ks.statistic, p.ks.p_value);
            }
        }
        Command::SampleNeg {
            data,
            strategy,
            generator,
            count,
            split,
            limit,
        } => {
            let ds = load_for(&mut cfg, data)?;
            let generator = match (strategy, generator) {
                (Strategy::Tkgan, Some(p)) => Some(ScoreModel::new(crate::models::ParameterStore::load(p)?)),
                (Strategy::Tkgan, None) => return Err(Error::Config("tkgan sampling needs --generator".into())),
                _ => None,
            };
            prepare_out(&cfg)?;
            cmd_sample(&cfg, &ds, *strategy, generator.as_ref(), *count, *split, *limit)?;
        }
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, ds: &TkgDataset) -> Result<()> {
    let trained = match pipeline::train(ds, &cfg.train, cfg.seed) {
        Ok(t) => t,
        Err(TrainFailure { error, last_good }) => {
            let named: Vec<(String, ScoreModel)> = last_good
                .into_iter()
                .map(|(n, m)| (if n == "model" { "target".into() } else { n }, m))
                .collect();
            save_models(&cfg.out, &named, ".last_good")?;
            return Err(error);
        }
    };
    let mut models = vec![("target".to_string(), trained.target.clone())];
    if cfg.train.strategy == Strategy::Tkgan {
        models.push(("generator".into(), trained.generator.clone().expect("tkgan generator")));
        models.push(("discriminator".into(), trained.discriminator.clone().expect("tkgan discriminator")));
        training::write_log_jsonl(&cfg.out.join("adversarial_log.jsonl"), &trained.adversarial_log)?;
    }
    save_models(&cfg.out, &models, "")?;
    training::write_log_jsonl(&cfg.out.join("train_log.jsonl"), &trained.target_log)?;
    if !ds.test().is_empty() {
        let filter = FilterIndex::from_dataset(ds);
        let r = eval::evaluate(&trained.target, ds.test(), cfg.protocol, &filter)?;
        println!("test  {r}");
    }
    Ok(())
}

fn cmd_sample(
    cfg: &RunConfig,
    ds: &TkgDataset,
    strategy: Strategy,
    generator: Option<&ScoreModel>,
    count: usize,
    split: Split,
    limit: Option<usize>,
) -> Result<()> {
    let sampler = NegativeSampler::new(ds, cfg.train.sampler);
    let mut rng = seeding::stream(cfg.seed, seeding::SAMPLER);
    let facts = ds.split(split);
    let facts = &facts[..limit.unwrap_or(facts.len()).min(facts.len())];
    let path = cfg.out.join("negatives.tsv");
    let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::file(&path, e))?);
    writeln!(w, "subject\tpredicate\tobject\ttime\tneg_subject\tneg_object")?;
    for g in facts {
        for _ in 0..count {
            let neg = match (strategy, generator) {
                (Strategy::Rns, _) => sampler.sample_random(g, &mut rng)?.0,
                (Strategy::Tans, _) => sampler.sample_time_aware(g, &mut rng)?.0,
                (Strategy::Tkgan, Some(gen)) => {
                    let set = sampler.build_candidates(g, cfg.train.adversarial.candidates, &mut rng)?;
                    let dist = generator_distribution(gen, set)?;
                    select_negative(&dist, cfg.train.adversarial.selection, &mut rng).1
                }
                (Strategy::Tkgan, None) => unreachable!("checked by the caller"),
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                g.subject, g.predicate, g.object, g.time, neg.subject, neg.object
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

//! `pdnet` command-line entry point.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdnet::clustering::{ClusterModel, Scheme};
use pdnet::config::RunConfig;
use pdnet::evaluation::{emit_report, Mode, ReportFormat};
use pdnet::features::{generate_synthetic, Dataset};
use pdnet::network::network_grad_check;
use pdnet::pipeline::{
    ablation_grid, comparison_table, detections_to_jsonl, evaluate_model, run_ablation,
    zero_shot_splits, zero_shot_table, Evaluated,
};
use pdnet::training::{load_checkpoint, save_checkpoint, train};
use pdnet::{seed, Error, Result};

#[derive(Parser)]
#[command(
    name = "pdnet",
    version,
    about = "Pair-wise HOI verb classification with language priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the objects of every verb and write the cluster manifest.
    Cluster(Common),
    /// Generate a synthetic dataset.
    Synth(Common),
    /// Train a model and write its checkpoint and training log.
    Train(Common),
    /// Evaluate a checkpoint (key `checkpoint`) on the test split.
    Eval(Common),
    /// Train and evaluate every configuration of the ablation lists.
    Ablate(Common),
    /// Train on seen categories, evaluate unseen, seen and all categories.
    ZeroShot(Common),
    /// Finite-difference check of the network gradients.
    GradCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory (default `runs/<command>`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    log: String,
}

impl Run {
    fn start(name: &str, common: &Common) -> Result<Self> {
        let cfg = RunConfig::load(common.config.as_deref(), &common.set, common.seed)?;
        let out = common
            .out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(name));
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let run = Self {
            cfg,
            out,
            log: String::new(),
        };
        run.write("config.toml", &run.cfg.to_toml())?;
        Ok(run)
    }

    fn say(&mut self, line: impl AsRef<str>) {
        eprintln!("{}", line.as_ref());
        self.log.push_str(line.as_ref());
        self.log.push('\n');
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.out.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn finish(self) -> Result<()> {
        self.write("log.txt", &self.log)
    }

    fn dataset(&mut self) -> Result<Dataset> {
        match self.cfg.run.data.clone() {
            Some(dir) => {
                self.say(format!("loading dataset from {}", dir.display()));
                Dataset::load(&dir)
            }
            None if self.cfg.run.synthesize => {
                self.say(format!(
                    "generating synthetic dataset (seed {})",
                    self.cfg.seed()
                ));
                Ok(generate_synthetic(&self.cfg.synthetic, self.cfg.seed())?.dataset)
            }
            None => Err(Error::invalid(
                "no dataset: set `data` or `synthesize = true`",
            )),
        }
    }

    fn report_name(&self) -> &'static str {
        match self.cfg.run.report_format {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
        }
    }

    fn write_evaluation(&mut self, prefix: &str, ev: &Evaluated) -> Result<()> {
        let name = format!("{prefix}{}", self.report_name());
        self.write(&name, &emit_report(&ev.report, self.cfg.run.report_format))?;
        self.write(
            &format!("{prefix}detections.jsonl"),
            &detections_to_jsonl(&ev.detections)?,
        )?;
        let summary = serde_json::json!({
            "DT": ev.report.map(Mode::Default),
            "KO": ev.report.map(Mode::KnownObject),
            "per_verb_DT": ev.report.per_verb(Mode::Default),
        });
        self.write(
            &format!("{prefix}summary.json"),
            &(serde_json::to_string_pretty(&summary)? + "\n"),
        )?;
        let dt = ev.report.map(Mode::Default);
        self.say(format!(
            "{prefix}mAP DT full {} rare {} non-rare {}",
            fmt_map(dt.full),
            fmt_map(dt.rare),
            fmt_map(dt.non_rare)
        ));
        Ok(())
    }
}

fn fmt_map(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.2}"))
}

fn cluster(c: &Common) -> Result<()> {
    let mut run = Run::start("cluster", c)?;
    let ds = run.dataset()?;
    let model = ClusterModel::build(
        &ds.training_table(),
        &ds.embeddings,
        seed::derive(run.cfg.seed(), "clusters"),
    )?;
    model.save(&run.out.join("clusters.json"))?;
    let mut table = String::from("| verb | objects | clusters |\n|---|---:|---:|\n");
    for v in &model.verbs {
        writeln!(
            table,
            "| {} | {} | {} |",
            v.verb,
            v.objects.len(),
            v.cluster_count
        )
        .expect("string write");
    }
    run.write("clusters.md", &table)?;
    run.say(format!(
        "{} verbs, K_C = {}",
        model.verbs.len(),
        model.total_clusters()
    ));
    run.finish()
}

fn synth(c: &Common) -> Result<()> {
    let mut run = Run::start("synth", c)?;
    let syn = generate_synthetic(&run.cfg.synthetic, run.cfg.seed())?;
    syn.save(&run.out.join("data"))?;
    let ds = &syn.dataset;
    run.say(format!(
        "{} train pairs, {} test pairs, {} ground-truth triplets, {} categories ({} unseen)",
        ds.train.len(),
        ds.test.len(),
        ds.ground_truth.len(),
        ds.vocabulary.pairs.len() + ds.vocabulary.unseen_pairs.len(),
        ds.vocabulary.unseen_pairs.len()
    ));
    run.finish()
}

fn train_cmd(c: &Common) -> Result<()> {
    let mut run = Run::start("train", c)?;
    let ds = run.dataset()?;
    let (model, log) = train::<f64>(&ds, &run.cfg.train)?;
    save_checkpoint(&model, &run.out.join("model.ckpt"))?;
    if let Some(cl) = &model.clusters {
        cl.save(&run.out.join("clusters.json"))?;
    }
    run.write("train_log.csv", &log.to_csv())?;
    let last = log.epochs.last().expect("at least one epoch");
    run.say(format!(
        "{}: {} parameters, K_C = {}, final loss {:.6}",
        run.cfg.train.ablation.label(),
        model.config.parameter_count(),
        model.config.k_c,
        last.loss
    ));
    run.finish()
}

fn eval_cmd(c: &Common) -> Result<()> {
    let mut run = Run::start("eval", c)?;
    let path = run
        .cfg
        .run
        .checkpoint
        .clone()
        .ok_or_else(|| Error::invalid("eval needs `checkpoint`"))?;
    let model = load_checkpoint::<f64>(&path, None, Some(run.cfg.train.ablation.scheme))?;
    let ds = run.dataset()?;
    let ev = evaluate_model(&model, &ds, run.cfg.run.zero_shot)?;
    run.write_evaluation("", &ev)?;
    run.finish()
}

fn ablate(c: &Common) -> Result<()> {
    let mut run = Run::start("ablate", c)?;
    let ds = run.dataset()?;
    let r = &run.cfg.run;
    let grid = ablation_grid(
        &r.ablate_schemes,
        &r.ablate_lpca,
        &r.ablate_pamf,
        &r.ablate_lpfa,
    );
    run.say(format!("{} configurations", grid.len()));
    let runs = run_ablation::<f64>(&ds, &run.cfg.train, &grid)?;
    let mut rows = Vec::new();
    for a in &runs {
        let dir = format!("{}/", a.ablation.label().replace('/', "_"));
        run.write(&format!("{dir}train_log.csv"), &a.log.to_csv())?;
        run.write_evaluation(&dir, &a.evaluated)?;
        rows.push((
            a.ablation,
            a.evaluated.report.map(Mode::Default),
            a.evaluated.report.map(Mode::KnownObject),
        ));
    }
    run.write("comparison.md", &comparison_table(&rows))?;
    run.finish()
}

fn zero_shot(c: &Common) -> Result<()> {
    let mut run = Run::start("zero-shot", c)?;
    let scheme = run.cfg.train.ablation.scheme;
    if scheme == Scheme::Specific {
        return Err(Error::invalid(
            "zero-shot needs scheme SH or CSP: SP has no classifier for unseen objects",
        ));
    }
    let ds = run.dataset()?;
    if ds.vocabulary.unseen_pairs.is_empty() {
        return Err(Error::invalid("the dataset lists no unseen categories"));
    }
    let (model, log) = train::<f64>(&ds, &run.cfg.train)?;
    run.write("train_log.csv", &log.to_csv())?;
    let ev = evaluate_model(&model, &ds, true)?;
    run.write_evaluation("", &ev)?;
    let splits = zero_shot_splits(&ev.report, &ds);
    run.write(
        "zero_shot.md",
        &zero_shot_table(&[(run.cfg.train.ablation.label(), splits)]),
    )?;
    run.say(format!("unseen mAP DT {}", fmt_map(splits.unseen.dt)));
    run.finish()
}

fn grad_check(c: &Common) -> Result<()> {
    let mut run = Run::start("grad-check", c)?;
    let r = run.cfg.run.clone();
    let reports = network_grad_check(
        r.gradcheck_appearance_dim,
        r.gradcheck_classifiers,
        r.gradcheck_points,
        run.cfg.seed(),
    )?;
    let mut text = String::new();
    let mut failed = Vec::new();
    for (variant, report) in &reports {
        writeln!(text, "## LPCA {variant}\n{}", report.to_text()).expect("string write");
        if !report.passed() {
            failed.push(variant.clone());
        }
        run.say(format!(
            "{variant}: max relative error {:.3e}",
            report.max_rel_error()
        ));
    }
    run.write("grad_check.txt", &text)?;
    run.finish()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Runtime(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Cluster(c) => cluster(c),
        Command::Synth(c) => synth(c),
        Command::Train(c) => train_cmd(c),
        Command::Eval(c) => eval_cmd(c),
        Command::Ablate(c) => ablate(c),
        Command::ZeroShot(c) => zero_shot(c),
        Command::GradCheck(c) => grad_check(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

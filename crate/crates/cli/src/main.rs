use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sfda::analysis::{a_distance, curve_report, export_features, FeatureFormat, SplitSpec};
use sfda::data::DomainDataset;
use sfda::nn::Checkpoint;
use sfda::pipeline::{
    evaluate, load_domains, run_ablation, run_stage1, run_stage2, run_stage3, write_summary_csv,
    AdaptationConfig, ComponentMask, DataKind, SummaryRow,
};
use sfda::pseudo_labels::BankStore;
use sfda::{Error, Result};

#[derive(Parser)]
#[command(name = "sfda", version, about = "Source-free domain adaptation runs")]
struct Cli {
    /// Key-value config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Image-folder root; falls back to DATA_ROOT, then `data.root`.
    #[arg(long, global = true, env = "DATA_ROOT")]
    data_root: Option<PathBuf>,
    /// Directory receiving checkpoints, banks, reports and tables.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stage 1: supervised training on the source domain.
    TrainSource,
    /// Stage 2: adapt the source model to each target separately.
    AdaptStda {
        #[arg(long)]
        source_ckpt: Option<PathBuf>,
        /// Target domains; defaults to `data.targets`.
        #[arg(long = "target")]
        targets: Vec<String>,
    },
    /// Stage 3: distil the per-target pseudo-label banks into one student.
    DistillMtda {
        #[arg(long)]
        banks: Option<PathBuf>,
        #[arg(long = "target")]
        targets: Vec<String>,
    },
    /// Top-1 accuracy of a checkpoint on labelled domains.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Domains to score; defaults to source and all targets.
        #[arg(long = "domain")]
        domains: Vec<String>,
    },
    /// Loss-term ablation grid on one target.
    Ablate {
        #[arg(long)]
        target: String,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Proxy A-distance between two domains in a checkpoint's feature space.
    ADistance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        domain_a: String,
        #[arg(long)]
        domain_b: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Dump bottleneck features of one domain.
    ExportFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        domain: String,
        /// `csv` or `bin`.
        #[arg(long, default_value = "csv")]
        format: FeatureFormat,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the synthetic suite as image folders under the data root.
    MakeSynthetic,
}

fn load_config(cli: &Cli) -> Result<AdaptationConfig> {
    let mut cfg = match &cli.config {
        Some(path) => AdaptationConfig::load(path)?,
        None => AdaptationConfig::default(),
    };
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.data.root = match &cli.data_root {
        Some(root) => root.clone(),
        None => cfg.resolve_data_root(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let io = |e| Error::Io {
        path: path.into(),
        source: e,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, body).map_err(io)
}

fn targets_or_default(cfg: &AdaptationConfig, given: &[String]) -> Vec<String> {
    if given.is_empty() {
        cfg.data.targets.clone()
    } else {
        given.to_vec()
    }
}

fn one(cfg: &mut AdaptationConfig, name: &str) -> Result<DomainDataset> {
    Ok(load_domains(cfg, &[name])?.remove(0))
}

fn row(model: &str, domain: &str, accuracy: f64, cfg: &AdaptationConfig) -> SummaryRow {
    SummaryRow {
        model: model.into(),
        domain: domain.into(),
        accuracy,
        config_hash: cfg.hash(),
    }
}

fn train_source(mut cfg: AdaptationConfig, out: &Path) -> Result<()> {
    let source_name = cfg.data.source.clone();
    let source = one(&mut cfg, &source_name)?;
    let (train, val) = source.split(0.8, cfg.seed)?;
    let (ckpt, report) = run_stage1(&cfg, &train)?;
    let path = out.join("source.ckpt.json");
    ckpt.save(&path)?;
    report.save(out.join("reports/stage1.jsonl"))?;
    let acc = evaluate(&ckpt, &val)?.accuracy;
    write_summary_csv(
        &[row("source", &format!("{source_name}/val"), acc, &cfg)],
        out.join("summary_stage1.csv"),
    )?;
    println!(
        "source checkpoint {} (held-out accuracy {acc:.4})",
        path.display()
    );
    Ok(())
}

fn adapt_stda(
    mut cfg: AdaptationConfig,
    out: &Path,
    source_ckpt: Option<PathBuf>,
    targets: &[String],
) -> Result<()> {
    let ckpt = Checkpoint::load(source_ckpt.unwrap_or_else(|| out.join("source.ckpt.json")))?;
    let store = BankStore::new(out.join("banks"));
    let mut rows = Vec::new();
    for name in targets_or_default(&cfg, targets) {
        let target = one(&mut cfg, &name)?;
        let result = run_stage2(&cfg, &ckpt, target.unlabeled(), target.eval_labels())?;
        result
            .checkpoint
            .save(out.join(format!("teachers/{name}.ckpt.json")))?;
        let bank_path = store.save(&result.bank)?;
        result
            .report
            .save(out.join(format!("reports/stage2_{name}.jsonl")))?;
        curve_report(
            &result.report,
            out.join("curves"),
            &format!("stage2_{name}"),
        )?;
        if target.has_labels() {
            let before = evaluate(&ckpt, &target)?.accuracy;
            let after = evaluate(&result.checkpoint, &target)?.accuracy;
            rows.push(row("source-only", &name, before, &cfg));
            rows.push(row("teacher", &name, after, &cfg));
            println!("{name}: source-only {before:.4} adapted {after:.4}");
        }
        println!("{name}: bank {}", bank_path.display());
    }
    write_summary_csv(&rows, out.join("summary_stda.csv"))
}

fn distill_mtda(
    mut cfg: AdaptationConfig,
    out: &Path,
    banks: Option<PathBuf>,
    targets: &[String],
) -> Result<()> {
    let store = BankStore::new(banks.unwrap_or_else(|| out.join("banks")));
    let names = targets_or_default(&cfg, targets);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let domains = load_domains(&mut cfg, &refs)?;
    let loaded = refs
        .iter()
        .map(|n| store.load_latest(n))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = domains.iter().map(DomainDataset::unlabeled).collect();
    let probes: Option<Vec<&[usize]>> = domains.iter().map(DomainDataset::eval_labels).collect();
    let (student, report) = run_stage3(&cfg, &loaded, &views, probes.as_deref())?;
    student.save(out.join("student.ckpt.json"))?;
    report.save(out.join("reports/stage3.jsonl"))?;
    curve_report(&report, out.join("curves"), "stage3")?;
    let mut rows = Vec::new();
    for d in domains.iter().filter(|d| d.has_labels()) {
        let acc = evaluate(&student, d)?.accuracy;
        println!("{}: student {acc:.4}", d.domain_id());
        rows.push(row("student", d.domain_id(), acc, &cfg));
    }
    write_summary_csv(&rows, out.join("summary_mtda.csv"))
}

fn eval(mut cfg: AdaptationConfig, out: &Path, ckpt: &Path, domains: &[String]) -> Result<()> {
    let model = Checkpoint::load(ckpt)?;
    let names = if domains.is_empty() {
        std::iter::once(cfg.data.source.clone())
            .chain(cfg.data.targets.iter().cloned())
            .collect()
    } else {
        domains.to_vec()
    };
    let label = ckpt
        .file_name()
        .map_or("model".into(), |f| f.to_string_lossy().into_owned());
    let mut rows = Vec::new();
    for name in names {
        let d = one(&mut cfg, &name)?;
        let r = evaluate(&model, &d)?;
        println!("{name}: {:.4} over {} samples", r.accuracy, r.samples);
        rows.push(row(&label, &name, r.accuracy, &cfg));
    }
    write_summary_csv(&rows, out.join("summary_eval.csv"))
}

fn ablate(mut cfg: AdaptationConfig, out: &Path, target: &str, seeds: &[u64]) -> Result<()> {
    let source_name = cfg.data.source.clone();
    let ds = load_domains(&mut cfg, &[&source_name, target])?;
    let table = run_ablation(&cfg, &ds[0], &ds[1], &ComponentMask::ALL, seeds)?;
    let csv = table.to_csv();
    write_file(&out.join(format!("ablation_{target}.csv")), &csv)?;
    print!("{csv}");
    Ok(())
}

fn a_distance_cmd(
    mut cfg: AdaptationConfig,
    out: &Path,
    ckpt: &Path,
    a: &str,
    b: &str,
    repeats: usize,
) -> Result<()> {
    let model = Checkpoint::load(ckpt)?;
    let ds = load_domains(&mut cfg, &[a, b])?;
    let fa = export_features(&model, &ds[0])?;
    let fb = export_features(&model, &ds[1])?;
    let split = SplitSpec {
        repeats,
        ..SplitSpec::default()
    };
    let result =
        a_distance(fa.features.view(), fb.features.view(), split, cfg.seed)?.with_domains(a, b);
    let json = serde_json::to_string_pretty(&result)?;
    write_file(&out.join(format!("a_distance_{a}_{b}.json")), &json)?;
    println!("{json}");
    Ok(())
}

fn export_cmd(
    mut cfg: AdaptationConfig,
    out: &Path,
    ckpt: &Path,
    domain: &str,
    format: FeatureFormat,
    output: Option<PathBuf>,
) -> Result<()> {
    let model = Checkpoint::load(ckpt)?;
    let d = one(&mut cfg, domain)?;
    let dump = export_features(&model, &d)?;
    let path = output.unwrap_or_else(|| {
        out.join(format!(
            "features/{domain}.{}",
            match format {
                FeatureFormat::Csv => "csv",
                FeatureFormat::Binary => "bin",
            }
        ))
    });
    dump.save(&path, format)?;
    println!(
        "{} rows x {} features -> {}",
        dump.len(),
        dump.dim(),
        path.display()
    );
    Ok(())
}

fn make_synthetic(cfg: AdaptationConfig) -> Result<()> {
    let suite = sfda::data::make_synthetic_suite(&cfg.synthetic_spec()?)?;
    for d in &suite {
        let dir = sfda::data::export_image_folder(d, &cfg.data.root)?;
        println!(
            "{} ({} images) -> {}",
            d.domain_id(),
            d.len(),
            dir.display()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::TrainSource => train_source(cfg, out),
        Command::AdaptStda {
            source_ckpt,
            targets,
        } => adapt_stda(cfg, out, source_ckpt, &targets),
        Command::DistillMtda { banks, targets } => distill_mtda(cfg, out, banks, &targets),
        Command::Eval { ckpt, domains } => eval(cfg, out, &ckpt, &domains),
        Command::Ablate { target, seeds } => ablate(cfg, out, &target, &seeds),
        Command::ADistance {
            ckpt,
            domain_a,
            domain_b,
            repeats,
        } => a_distance_cmd(cfg, out, &ckpt, &domain_a, &domain_b, repeats),
        Command::ExportFeatures {
            ckpt,
            domain,
            format,
            output,
        } => export_cmd(cfg, out, &ckpt, &domain, format, output),
        Command::MakeSynthetic => {
            if cfg.data.kind == DataKind::Folder {
                return Err(Error::Validation(
                    "make-synthetic writes folders; run it with data.kind = synthetic".into(),
                ));
            }
            make_synthetic(cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

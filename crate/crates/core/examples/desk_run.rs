//! Desk-scale run of all stages on the synthetic suite, printing accuracies.
//!
//! `cargo run --example desk_run -- [config-file]`

use std::time::Instant;

use sfda::data::make_synthetic_suite;
use sfda::pipeline::{evaluate, run_stage1, run_stage2, run_stage3, AdaptationConfig};

fn main() -> sfda::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => AdaptationConfig::load(path)?,
        None => AdaptationConfig::from_text(
            "data.image_size = 16\ndata.synthetic.samples_per_domain = 300\nmodel.bottleneck_dim = 64\n\
             stage1.epochs = 15\nstage2.epochs = 8\nstage3.epochs = 10\naugment.weak = hflip,crop:2\n\
             augment.strong = hflip,crop:2,randaug:2,erase:0.5",
        )?,
    };
    let t = Instant::now();
    let suite = make_synthetic_suite(&cfg.synthetic_spec()?)?;
    let (train, test) = suite[0].split(0.8, cfg.seed)?;
    let (ckpt, rep) = run_stage1(&cfg, &train)?;
    println!(
        "stage1 {:.1}s final ce {:?}",
        t.elapsed().as_secs_f64(),
        rep.last().map(|r| &r.losses)
    );
    println!("source test acc {:.3}", evaluate(&ckpt, &test)?.accuracy);
    let mut banks = Vec::new();
    for target in &suite[1..] {
        let before = evaluate(&ckpt, target)?.accuracy;
        let t = Instant::now();
        let out = run_stage2(&cfg, &ckpt, target.unlabeled(), target.eval_labels())?;
        let after = evaluate(&out.checkpoint, target)?.accuracy;
        println!(
            "{}: source-only {before:.3} adapted {after:.3} ({:.1}s)",
            target.domain_id(),
            t.elapsed().as_secs_f64()
        );
        for r in &out.report.records {
            println!(
                "  ep{} pl {:.3} tgt {:.3} {:?}",
                r.epoch,
                r.pseudo_label_accuracy.unwrap_or(f64::NAN),
                r.target_accuracy.unwrap_or(f64::NAN),
                r.losses
            );
        }
        banks.push(out.bank);
    }
    let views: Vec<_> = suite[1..].iter().map(|d| d.unlabeled()).collect();
    let t = Instant::now();
    let (student, _) = run_stage3(&cfg, &banks, &views, None)?;
    let accs: Vec<f64> = suite[1..]
        .iter()
        .map(|d| evaluate(&student, d).map(|r| r.accuracy))
        .collect::<sfda::Result<_>>()?;
    println!("student {accs:?} ({:.1}s)", t.elapsed().as_secs_f64());
    Ok(())
}

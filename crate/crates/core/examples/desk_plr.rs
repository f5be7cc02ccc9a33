//! Final pseudo-label accuracy with and without refinement, across refinement weights.
//!
//! `cargo run --example desk_plr -- [config-file] [target-index] [alpha,...]`

use sfda::data::make_synthetic_suite;
use sfda::pipeline::{run_stage1, run_stage2, AdaptationConfig};

fn main() -> sfda::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) if path != "-" => AdaptationConfig::load(path)?,
        _ => AdaptationConfig::from_text(
            "data.image_size = 16\ndata.synthetic.samples_per_domain = 300\nmodel.bottleneck_dim = 64\n\
             stage1.epochs = 15\nstage2.epochs = 8\naugment.weak = hflip,crop:2\n\
             augment.strong = hflip,crop:2,randaug:2,erase:0.5",
        )?,
    };
    let target: usize = args
        .next()
        .map_or(Ok(3), |s| s.parse())
        .expect("target index");
    let alphas: Vec<f64> = args
        .next()
        .unwrap_or_else(|| "0.5,0.7,0.9".into())
        .split(',')
        .map(|a| a.parse().expect("alpha"))
        .collect();
    let suite = make_synthetic_suite(&cfg.synthetic_spec()?)?;
    let t = &suite[target];
    println!("seed,setting,final_pl_acc,final_target_acc");
    for seed in [0, 1, 2] {
        let mut c = cfg.clone();
        c.seed = seed;
        let (ckpt, _) = run_stage1(&c, &suite[0])?;
        let mut settings: Vec<(String, AdaptationConfig)> = Vec::new();
        let mut off = c.clone();
        off.stage2.plr.enabled = false;
        settings.push(("off".into(), off));
        for &a in &alphas {
            let mut on = c.clone();
            on.stage2.plr.alpha = a;
            settings.push((format!("alpha={a}"), on));
        }
        for (name, run) in settings {
            let out = run_stage2(&run, &ckpt, t.unlabeled(), t.eval_labels())?;
            let last = out.report.last().expect("non-empty report");
            println!(
                "{seed},{name},{:.4},{:.4}",
                last.pseudo_label_accuracy.unwrap_or(f64::NAN),
                last.target_accuracy.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

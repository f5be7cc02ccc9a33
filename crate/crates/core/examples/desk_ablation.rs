//! Loss-term ablation grid on one synthetic target, several seeds.
//!
//! `cargo run --example desk_ablation -- [config-file] [target-index]`

use sfda::data::make_synthetic_suite;
use sfda::pipeline::{run_ablation, AdaptationConfig, ComponentMask};

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
    let suite = make_synthetic_suite(&cfg.synthetic_spec()?)?;
    let table = run_ablation(
        &cfg,
        &suite[0],
        &suite[target],
        &ComponentMask::ALL,
        &[0, 1, 2],
    )?;
    print!("{}", table.to_csv());
    Ok(())
}

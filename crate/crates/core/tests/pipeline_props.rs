use sfda::analysis::{a_distance, export_features, SplitSpec};
use sfda::data::{make_synthetic_suite, DomainDataset};
use sfda::nn::Group;
use sfda::objectives::LossWeights;
use sfda::pipeline::{
    evaluate, run_ablation, run_stage1, run_stage2, run_stage3, AdaptationConfig, ComponentMask,
    StageReport,
};

fn small() -> AdaptationConfig {
    AdaptationConfig::from_text(
        "data.image_size = 16\ndata.synthetic.samples_per_domain = 64\nmodel.bottleneck_dim = 16\n\
         stage1.epochs = 3\nstage2.epochs = 2\nstage3.epochs = 2\n\
         stage1.batch_size = 16\nstage2.batch_size = 16\nstage3.batch_size = 16\n\
         augment.weak = hflip,crop:2\naugment.strong = hflip,crop:2,randaug:1",
    )
    .unwrap()
}

fn suite(cfg: &AdaptationConfig) -> Vec<DomainDataset> {
    make_synthetic_suite(&cfg.synthetic_spec().unwrap()).unwrap()
}

#[test]
fn adaptation_never_moves_the_classifier() {
    let cfg = small();
    let s = suite(&cfg);
    let (src, _) = run_stage1(&cfg, &s[0]).unwrap();
    let out = run_stage2(&cfg, &src, s[1].unlabeled(), None).unwrap();
    assert_eq!(
        out.checkpoint.params.snapshot_group(Group::Classifier),
        src.params.snapshot_group(Group::Classifier)
    );
    assert_ne!(
        out.checkpoint.params.snapshot_group(Group::Backbone),
        src.params.snapshot_group(Group::Backbone)
    );
    assert_eq!(out.checkpoint.meta.stage, 2);
    assert_eq!(
        out.checkpoint.meta.target_domain.as_deref(),
        Some("target1")
    );
}

#[test]
fn empty_mask_reproduces_source_only_accuracy() {
    let cfg = small();
    let s = suite(&cfg);
    let table = run_ablation(&cfg, &s[0], &s[2], &[ComponentMask::ALL[0]], &[0]).unwrap();
    let (src, _) = run_stage1(&cfg, &s[0]).unwrap();
    let direct = evaluate(&src, &s[2]).unwrap().accuracy;
    assert_eq!(table.rows[0].accuracies, vec![direct]);
    assert_eq!(table.rows[0].label, "source-only");
}

#[test]
fn stage2_rejects_non_source_checkpoints_and_misaligned_probes() {
    let cfg = small();
    let s = suite(&cfg);
    let (src, _) = run_stage1(&cfg, &s[0]).unwrap();
    let out = run_stage2(&cfg, &src, s[1].unlabeled(), None).unwrap();
    assert!(run_stage2(&cfg, &out.checkpoint, s[1].unlabeled(), None).is_err());
    assert!(run_stage2(&cfg, &src, s[1].unlabeled(), Some(&[0, 1])).is_err());
}

#[test]
fn stage3_checks_bank_domain_pairing() {
    let cfg = small();
    let s = suite(&cfg);
    let (src, _) = run_stage1(&cfg, &s[0]).unwrap();
    let b1 = run_stage2(&cfg, &src, s[1].unlabeled(), None).unwrap().bank;
    let b2 = run_stage2(&cfg, &src, s[2].unlabeled(), None).unwrap().bank;
    let swapped = run_stage3(
        &cfg,
        &[b2.clone(), b1.clone()],
        &[s[1].unlabeled(), s[2].unlabeled()],
        None,
    );
    assert!(swapped.is_err());
    let (student, report) =
        run_stage3(&cfg, &[b1, b2], &[s[1].unlabeled(), s[2].unlabeled()], None).unwrap();
    assert_eq!(student.meta.stage, 3);
    assert_eq!(report.len(), 2);
}

#[test]
fn reports_round_trip_through_jsonl() {
    let cfg = small();
    let s = suite(&cfg);
    let (_, report) = run_stage1(&cfg, &s[0]).unwrap();
    let mut buf = Vec::new();
    report.write_jsonl(&mut buf).unwrap();
    let back = StageReport::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.loss_trace(), report.loss_trace());
}

#[test]
fn config_round_trips_and_validates() {
    let cfg = small();
    let again = AdaptationConfig::from_text(&cfg.canonical()).unwrap();
    assert_eq!(again.hash(), cfg.hash());
    let mut bad = cfg.clone();
    bad.stage2.weights = LossWeights {
        lambda_nm: -1.0,
        ..bad.stage2.weights
    };
    assert!(bad.validate().is_err());
    assert!(AdaptationConfig::from_text("stage1.lr = fast").is_err());
    assert!(AdaptationConfig::from_text("no.such.key = 1").is_err());
}

#[test]
fn domain_gap_grows_with_corruption_magnitude() {
    let base = small();
    let mut gaps = Vec::new();
    for m in [0.0, 0.75, 1.5] {
        let mut cfg = base.clone();
        cfg.set("data.synthetic.corruptions", "color").unwrap();
        cfg.set("data.synthetic.magnitude", &m.to_string()).unwrap();
        cfg.set("data.synthetic.samples_per_domain", "120").unwrap();
        let s = suite(&cfg);
        let (src, _) = run_stage1(&base, &s[0]).unwrap();
        let a = export_features(&src, &s[0]).unwrap();
        let b = export_features(&src, &s[1]).unwrap();
        let r = a_distance(
            a.features.view(),
            b.features.view(),
            SplitSpec::default(),
            0,
        )
        .unwrap();
        gaps.push(r.a_distance);
    }
    assert!(gaps[0] < gaps[1] && gaps[1] <= gaps[2] + 0.05, "{gaps:?}");
}

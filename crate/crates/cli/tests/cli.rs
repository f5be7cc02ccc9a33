use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
data.image_size = 16
data.synthetic.samples_per_domain = 40
data.synthetic.corruptions = color,noise
data.targets = target1,target2
model.bottleneck_dim = 16
stage1.epochs = 2
stage1.batch_size = 8
stage2.epochs = 2
stage2.batch_size = 8
stage3.epochs = 1
stage3.batch_size = 8
augment.weak = hflip
augment.strong = hflip,randaug:1
";

fn sfda(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_sfda"))
        .current_dir(dir)
        .env_remove("DATA_ROOT")
        .args(["--config", "tiny.cfg", "--out-dir", "out"])
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "sfda {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    dir
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = setup();
    let d = dir.path();
    sfda(d, &["train-source"]);
    assert!(d.join("out/source.ckpt.json").exists());
    assert!(d.join("out/reports/stage1.jsonl").exists());

    sfda(d, &["adapt-stda"]);
    for t in ["target1", "target2"] {
        assert!(d.join(format!("out/teachers/{t}.ckpt.json")).exists());
        assert!(d.join(format!("out/banks/{t}/latest")).exists());
        assert!(d
            .join(format!("out/curves/stage2_{t}_accuracy.csv"))
            .exists());
    }
    let summary = std::fs::read_to_string(d.join("out/summary_stda.csv")).unwrap();
    assert!(summary.starts_with("model,domain,accuracy,config_hash"));
    assert_eq!(summary.lines().count(), 5);

    sfda(d, &["distill-mtda"]);
    assert!(d.join("out/student.ckpt.json").exists());

    let eval = sfda(d, &["eval", "--ckpt", "out/student.ckpt.json"]);
    assert_eq!(String::from_utf8_lossy(&eval.stdout).lines().count(), 3);

    let ad = sfda(
        d,
        &[
            "a-distance",
            "--ckpt",
            "out/source.ckpt.json",
            "--domain-a",
            "source",
            "--domain-b",
            "target2",
        ],
    );
    let text = String::from_utf8_lossy(&ad.stdout);
    assert!(text.contains("\"a_distance\""), "{text}");

    sfda(
        d,
        &[
            "export-features",
            "--ckpt",
            "out/student.ckpt.json",
            "--domain",
            "target1",
            "--format",
            "bin",
        ],
    );
    let dump = sfda::analysis::FeatureDump::load(d.join("out/features/target1.bin")).unwrap();
    assert_eq!((dump.len(), dump.dim()), (40, 16));
}

#[test]
fn synthetic_folders_load_back_as_folder_data() {
    let dir = setup();
    let d = dir.path();
    sfda(d, &["--data-root", "imgs", "make-synthetic"]);
    assert!(d.join("imgs/source/bar_h").is_dir());
    let out = sfda(
        d,
        &[
            "--data-root",
            "imgs",
            "--set",
            "data.kind=folder",
            "--set",
            "stage1.epochs=1",
            "train-source",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("held-out accuracy"));
}

#[test]
fn ablation_table_has_all_masks() {
    let dir = setup();
    let d = dir.path();
    let out = sfda(d, &["ablate", "--target", "target1", "--seeds", "0"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 9);
    assert!(d.join("out/ablation_target1.csv").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = setup();
    for args in [
        &["eval", "--ckpt", "missing.json"][..],
        &["--set", "stage1.lr=-1", "train-source"][..],
        &["--set", "nonsense", "train-source"][..],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_sfda"))
            .current_dir(dir.path())
            .args(["--config", "tiny.cfg", "--out-dir", "out"])
            .args(args)
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlrlab_core::data::{
    write_idx_images, write_idx_labels, ImageSet, LabelSet, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES,
    TRAIN_LABELS,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// 4x4 images with the label's pixel lit over faint noise.
fn write_set(dir: &Path, images: &str, labels: &str, count: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::new();
    let mut ls = Vec::new();
    for _ in 0..count {
        let label: u8 = rng.random_range(0..10);
        for p in 0..16u8 {
            let b: u8 = if p == label { 255 } else { rng.random_range(0..20) };
            pixels.push(f64::from(b) / 255.0);
        }
        ls.push(label);
    }
    let set = ImageSet {
        rows: 4,
        cols: 4,
        pixels: Array2::from_shape_vec((count, 16), pixels).unwrap(),
    };
    write_idx_images(&set, fs::File::create(dir.join(images)).unwrap()).unwrap();
    write_idx_labels(&LabelSet { labels: ls }, fs::File::create(dir.join(labels)).unwrap()).unwrap();
}

struct Fixture {
    tmp: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        let data = tmp.path().join("data");
        fs::create_dir(&data).unwrap();
        write_set(&data, TRAIN_IMAGES, TRAIN_LABELS, 600, 1);
        write_set(&data, TEST_IMAGES, TEST_LABELS, 100, 2);
        Self { tmp }
    }

    fn data(&self) -> PathBuf {
        self.tmp.path().join("data")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    /// Runs with the synthetic data and a protocol sized for it.
    fn run(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            cmd.to_owned(),
            "--data-dir".into(),
            self.data().display().to_string(),
            "--out".into(),
            self.out(out).display().to_string(),
            "--batch".into(),
            "10".into(),
            "--eval-interval".into(),
            "5".into(),
            "--hidden".into(),
            "12".into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        dlrlab(&args)
    }
}

fn dlrlab<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlrlab"))
        .args(args)
        .env_remove("DLRLAB_DATA_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(path: PathBuf) -> String {
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

const DLR_FLAGS: [&str; 10] = [
    "--algo", "dlr-pre", "--eta0", "4", "--alpha", "3", "--threshold", "0.9", "--max-epochs", "10",
];

#[test]
fn train_writes_artifacts() {
    let f = Fixture::new();
    let o = f.run("train", "t", &DLR_FLAGS);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let dir = f.out("t");
    for name in ["manifest.json", "results.csv", "curves.csv", "rate_traces.csv", "summary.json", "weights.bin"] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let results = read(dir.join("results.csv"));
    let mut lines = results.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,algorithm,hidden_units,param_json,seed,epochs_to_threshold,reached,final_accuracy")
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with(r#"train,dlr-pre,12,"{""alpha"":3.0,""eta0"":4.0}",0,"#), "{row}");
    assert!(row.contains(",true,"));
    assert!(read(dir.join("curves.csv")).starts_with("run_id,t_epochs,test_accuracy\ntrain/dlr-pre/h12/alpha=3;eta0=4/s0,"));
    assert!(read(dir.join("rate_traces.csv")).starts_with("run_id,layer_id,t_epochs,mean_rate\n"));

    let summary = json(dir.join("summary.json"));
    assert_eq!(summary["reached"], true);
    let manifest = json(dir.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seeds"], serde_json::json!([0]));
    assert_eq!(manifest["settings"]["protocol"]["accuracy_threshold"], 0.9);
    assert_eq!(manifest["settings"]["optimizer"]["algorithm"], "dlr");

    let weights = fs::read(dir.join("weights.bin")).unwrap();
    let (net, seed) = dlrlab_core::network::read_checkpoint(weights.as_slice()).unwrap();
    assert_eq!((net.inputs(), net.hidden(), net.outputs(), seed), (16, 12, 10, 0));
}

#[test]
fn train_not_reached_exits_2() {
    let f = Fixture::new();
    let o = f.run("train", "t", &["--algo", "sgd", "--threshold", "1", "--max-epochs", "0.2"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stdout(&o).contains("did not reach"));
    assert_eq!(json(f.out("t").join("summary.json"))["reached"], false);
    assert!(!f.out("t").join("rate_traces.csv").exists());
}

#[test]
fn usage_and_data_errors_exit_1() {
    let f = Fixture::new();
    fs::remove_file(f.data().join(TEST_IMAGES)).unwrap();
    let o = f.run("train", "t", &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(&f.data().join(TEST_IMAGES).display().to_string()), "{}", stderr(&o));
    assert!(!f.out("t").exists(), "no output before the data check");

    let f = Fixture::new();
    let o = f.run("train", "t", &["--threshold", "1.5"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("threshold") && stderr(&o).contains("[0, 1]"), "{}", stderr(&o));

    let o = f.run("train", "t", &["--algo", "sgd", "--eta0", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("eta0"), "{}", stderr(&o));

    let o = f.run("train", "t", &["--hidden", "many"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hidden"), "{}", stderr(&o));

    let o = f.run("compare", "c", &["--sizes", ""]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sizes"), "{}", stderr(&o));

    let o = dlrlab(&["train", "--no-such-flag"]);
    assert_eq!(code(&o), 1);

    let o = dlrlab(&["train", "--out", &f.out("x").display().to_string()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("DLRLAB_DATA_DIR"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flag_precedence() {
    let f = Fixture::new();
    let cfg = f.out("run.cfg");
    fs::write(&cfg, "# desk run\nalgo = dlr-pre\neta0 = 4\nalpha = 3\nthreshold = 0.9\nmax_epochs = 10\nseeds = 5\n").unwrap();
    let o = f.run("train", "t", &["--config", &cfg.display().to_string(), "--alpha", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = json(f.out("t").join("manifest.json"));
    assert_eq!(manifest["settings"]["optimizer"]["alpha"], 2.0);
    assert_eq!(manifest["settings"]["optimizer"]["eta0"], 4.0);
    assert_eq!(manifest["seeds"], serde_json::json!([5]));
    assert_eq!(manifest["config_file"], cfg.display().to_string());

    fs::write(&cfg, "algo = sgd\nlearning_rate = 3\n").unwrap();
    let o = f.run("train", "t2", &["--config", &cfg.display().to_string()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown key `learning_rate`"), "{}", stderr(&o));

    fs::write(&cfg, "algo sgd\n").unwrap();
    let o = f.run("train", "t3", &["--config", &cfg.display().to_string()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("run.cfg:1"), "{}", stderr(&o));
}

#[test]
fn data_dir_from_environment() {
    let f = Fixture::new();
    let o = Command::new(env!("CARGO_BIN_EXE_dlrlab"))
        .args(["train", "--algo", "sgd", "--eta", "4", "--threshold", "0", "--eval-interval", "5"])
        .arg("--out")
        .arg(f.out("t"))
        .env("DLRLAB_DATA_DIR", f.data())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn compare_single_row() {
    let f = Fixture::new();
    let o = f.run(
        "compare",
        "c",
        &["--algos", "sgd", "--eta", "4", "--sizes", "12", "--seeds", "0,1", "--threshold", "0.9", "--max-epochs", "10"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = read(f.out("c").join("comparison.csv"));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[1].starts_with(r#"12,sgd,"{""eta"":4.0}",2,0,"#), "{}", rows[1]);
    assert!(rows[1].ends_with(",1"), "ratio to itself: {}", rows[1]);
    assert_eq!(read(f.out("c").join("results.csv")).lines().count(), 3);
}

#[test]
fn compare_grid_file() {
    let f = Fixture::new();
    let grid = f.out("grid.txt");
    fs::write(&grid, "sgd.eta = 4, 2\ndlr-pre.eta0 = 4\ndlr-pre.alpha = 3\n").unwrap();
    let o = f.run(
        "compare",
        "c",
        &["--grid", &grid.display().to_string(), "--algos", "sgd,dlr-pre", "--sizes", "12", "--seeds", "0", "--threshold", "0.9", "--max-epochs", "10"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(f.out("c").join("summary.json"));
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["algorithm"], "sgd");
    assert_eq!(rows[0]["ratio_to_sgd"], 1.0);
    assert_eq!(rows[1]["best_params"]["alpha"], 3.0);
    // Three grid points, one seed each.
    assert_eq!(read(f.out("c").join("results.csv")).lines().count(), 4);

    fs::write(&grid, "sgd = 4\n").unwrap();
    let o = f.run("compare", "c2", &["--grid", &grid.display().to_string()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn minsize_start_fails_and_floor() {
    let f = Fixture::new();
    let o = f.run(
        "minsize",
        "m",
        &["--algos", "sgd", "--eta", "1", "--start-size", "4", "--size-step", "2", "--seeds", "0,1", "--max-epochs", "0"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stdout(&o).contains("start size fails"), "{}", stdout(&o));
    assert_eq!(json(f.out("m").join("summary.json"))["algorithms"][0]["start_fails"], true);

    let o = f.run(
        "minsize",
        "m0",
        &["--algos", "sgd,dlr-pre", "--eta", "1", "--eta0", "1", "--alpha", "3", "--start-size", "5", "--size-step", "2", "--seeds", "0,1", "--threshold", "0", "--max-epochs", "1"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(f.out("m0").join("summary.json"));
    for algo in summary["algorithms"].as_array().unwrap() {
        assert_eq!(algo["minimal_size"], 1);
        assert_eq!(algo["per_seed_minimal"], serde_json::json!([1, 1]));
    }
    let per_seed = read(f.out("m0").join("minsize_per_seed.csv"));
    assert_eq!(per_seed.lines().count(), 5);
}

#[test]
fn replay_single_run() {
    let f = Fixture::new();
    let o = f.run("replay", "r", &[&DLR_FLAGS[..], &["--seeds", "3"]].concat());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let dir = f.out("r");
    let summary = json(dir.join("summary.json"));
    assert_eq!(summary["degenerate"], true);
    assert_eq!(summary["dlr"]["stats"]["std"], serde_json::Value::Null);
    assert_eq!(summary["fits_converged"], true);
    let fits = json(dir.join("fits.json"));
    assert_eq!(fits[0]["seed"], 3);
    assert_eq!(fits[0]["replay_seed"], 1_000_003);
    assert_eq!(fits[0]["layers"][1]["layer_id"], 2);
    let medians = read(dir.join("median_curves.csv"));
    assert!(medians.starts_with("cohort,t_epochs,median_accuracy\ndlr,"));
    assert!(medians.contains("\nreplay,"));
    let results = read(dir.join("results.csv"));
    assert!(results.contains("replay,scheduled,12,"), "{results}");

    let o = f.run("replay", "r2", &["--algo", "sgd"]);
    assert_eq!(code(&o), 1);
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_reproduces_artifacts() {
    let f = Fixture::new();
    let o = f.run(
        "compare",
        "a",
        &["--algos", "sgd,dlr-pre", "--eta", "4", "--eta0", "4", "--alpha", "3", "--sizes", "8,12", "--seeds", "0..3", "--threshold", "0.9", "--max-epochs", "4"],
    );
    assert!(code(&o) <= 2, "{}", stderr(&o));
    let manifest = f.out("a").join("manifest.json");
    let o = dlrlab(&[
        "rerun".to_owned(),
        manifest.display().to_string(),
        "--out".into(),
        f.out("b").display().to_string(),
    ]);
    assert!(code(&o) <= 2, "{}", stderr(&o));
    let o = dlrlab(&[
        "rerun".to_owned(),
        manifest.display().to_string(),
        "--out".into(),
        f.out("p").display().to_string(),
        "--workers".into(),
        "3".into(),
    ]);
    assert!(code(&o) <= 2, "{}", stderr(&o));

    let a = artifact_bytes(&f.out("a"));
    assert_eq!(a.len(), 5);
    assert_eq!(a, artifact_bytes(&f.out("b")));
    assert_eq!(a, artifact_bytes(&f.out("p")));

    let mut m = json(manifest.clone());
    m["settings"]["workers"] = serde_json::json!(1);
    let mb = json(f.out("b").join("manifest.json"));
    assert_eq!(m["settings"], mb["settings"]);

    fs::write(f.out("bad.json"), "{}").unwrap();
    let o = dlrlab(&["rerun", &f.out("bad.json").display().to_string()]);
    assert_eq!(code(&o), 1);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eqspike::data::idx::{encode_images, encode_labels, IdxImages};
use eqspike::io::{read_spike_log, read_update_log, Checkpoint, RunLog};
use eqspike::metrics::count_synops;
use eqspike::snn::Topology;

const CONFIG: &str = r#"
[hyper]
u_th = 0.1
beta = 0.2
t_free = 120
t_nudge = 60

[trainer]
init_gain = 0.5
epochs = 2

[network]
layers = [16, 12, 10]

[run]
seed = 4
record_images = 3
"#;

/// Tiny 4x4 digits: class k lights pixel k and its neighbour.
fn write_dataset(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for (prefix, n) in [("train", 40usize), ("t10k", 20)] {
        let mut pixels = vec![0u8; n * 16];
        let labels: Vec<u8> = (0..n).map(|i| (i * 7 % 10) as u8).collect();
        for (i, &l) in labels.iter().enumerate() {
            pixels[i * 16 + l as usize] = 255;
            pixels[i * 16 + l as usize + 1] = 128 + i as u8;
        }
        let images = IdxImages {
            count: n,
            rows: 4,
            cols: 4,
            pixels,
        };
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), encode_images(&images)).unwrap();
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), encode_labels(&labels)).unwrap();
    }
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        write_dataset(&root.join("data"));
        std::fs::write(root.join("cfg.toml"), CONFIG).unwrap();
        Self { _tmp: tmp, root }
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_eqspike"))
            .current_dir(&self.root)
            .args(args)
            .output()
            .unwrap()
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec!["--quiet", "--config", "cfg.toml", "train", "--data", "data", "--out", out];
        args.extend_from_slice(extra);
        let o = self.run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o
    }
}

#[test]
fn train_writes_logs_and_checkpoint() {
    let f = Fixture::new();
    f.train("run", &[]);
    let dir = f.root.join("run");
    let rows = RunLog::read(&dir.join("run_log.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].epoch, 2);
    let text = std::fs::read_to_string(dir.join("run_log.csv")).unwrap();
    assert!(text.contains("# [hyper]"));

    let ck = Checkpoint::load(&dir.join("checkpoint.bin")).unwrap();
    assert_eq!(ck.epoch, 2);
    assert_eq!(ck.synops_cumulative, rows[1].synops_cumulative);

    let spikes = read_spike_log(&dir.join("spikes.csv")).unwrap();
    assert_eq!(spikes.segment_len, Some(180));
    assert_eq!(spikes.n_steps, 3 * 180);
    let updates = read_update_log(&dir.join("updates.csv")).unwrap();
    assert!(updates.entries.iter().all(|e| e.step < 3 * 180));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let f = Fixture::new();
    f.train("full", &[]);
    f.train("split", &["--epochs", "1"]);
    f.train("split", &["--resume", "split/checkpoint.bin", "--epochs", "2"]);
    let read = |p: &str| std::fs::read(f.root.join(p)).unwrap();
    assert_eq!(read("full/checkpoint.bin"), read("split/checkpoint.bin"));
    let rows = |p: &str| RunLog::read(&f.root.join(p)).unwrap();
    assert_eq!(rows("full/run_log.csv"), rows("split/run_log.csv"));
}

#[test]
fn infer_sweep_csv() {
    let f = Fixture::new();
    f.train("run", &["--epochs", "1"]);
    let o = f.run(&[
        "infer",
        "--checkpoint",
        "run/checkpoint.bin",
        "--data",
        "data",
        "--horizon-sweep",
        "0:10:5",
        "--out",
        "acc.csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(f.root.join("acc.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "horizon_steps,t_times_fmax,rate_acc,first_spike_acc,mean_synops,mean_spikes");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,0,0,0,"));
    assert!(lines[3].starts_with("20,10,"));
}

#[test]
fn synops_and_stdp_from_recorded_logs() {
    let f = Fixture::new();
    f.train("run", &["--epochs", "1"]);
    let o = f.run(&["synops", "run/spikes.csv", "--layers", "16,12,10", "--images", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let log = read_spike_log(&f.root.join("run/spikes.csv")).unwrap();
    let topo = Topology::new(vec![16, 12, 10]).unwrap();
    assert_eq!(row[0].parse::<usize>().unwrap(), log.len());
    assert_eq!(row[1].parse::<u64>().unwrap(), count_synops(&log, &topo));

    let o = f.run(&[
        "stdp",
        "--spikes",
        "run/spikes.csv",
        "--updates",
        "run/updates.csv",
        "--checkpoint",
        "run/checkpoint.bin",
        "--window",
        "40",
        "--out",
        "stdp.csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(f.root.join("stdp.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + eqspike::metrics::STDP_BINS);
}

#[test]
fn oracle_check_small_suite() {
    let f = Fixture::new();
    let o = f.run(&["--quiet", "oracle-check", "--instances", "2"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("oracle vs finite differences"));
    assert!(matches!(o.status.code(), Some(0) | Some(1)));
}

#[test]
fn failures_map_to_exit_codes() {
    let f = Fixture::new();
    std::fs::write(f.root.join("bad.toml"), "[hyper]\nbogus = 1\n").unwrap();
    std::fs::write(f.root.join("invalid.toml"), "[hyper]\ngamma_li = 2.0\n").unwrap();
    std::fs::write(f.root.join("junk.bin"), b"nope").unwrap();
    std::fs::write(f.root.join("junk.csv"), "step,neuron\n1,x\n").unwrap();
    let code = |args: &[&str]| f.run(args).status.code();
    assert_eq!(code(&["train", "--bogus-flag"]), Some(2));
    assert_eq!(code(&["--config", "bad.toml", "train"]), Some(4));
    assert_eq!(code(&["--config", "invalid.toml", "train"]), Some(5));
    assert_eq!(code(&["--config", "missing.toml", "train"]), Some(3));
    assert_eq!(code(&["--config", "cfg.toml", "train", "--data", "nowhere"]), Some(3));
    assert_eq!(code(&["infer", "--checkpoint", "junk.bin", "--data", "data"]), Some(4));
    assert_eq!(code(&["synops", "junk.csv", "--layers", "16,12,10"]), Some(4));
    assert_eq!(code(&["--config", "cfg.toml", "infer", "--checkpoint", "x", "--horizon-sweep", "5:1:1"]), Some(5));
}

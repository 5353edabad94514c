use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_aht");

fn aht(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A small, fast training configuration.
fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!(
            "[env]\nnum_processes = 4\nsampling_cost = 0.05\n\n[ppo]\ntimesteps = 256\nminibatch = 64\nepochs = 2\n\n\
             [network]\nhidden = [16]\n\n[run]\niterations = 2\ncheckpoint_every = 1\neval_episodes = 200\n{extra}"
        ),
    )
    .unwrap();
    path.display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bogus_key = 3\n");
    let out = aht(&["train", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("run.bogus_key"), "{}", stderr(&out));

    let out = aht(&["train", "--set", "ppo.clip=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ppo.clip"));
}

#[test]
fn zero_iterations_write_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("out");
    let out = aht(&["train", "--config", &cfg, "--set", "run.iterations=0", "--out-dir", s(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(run.join("final.ckpt").is_file());
    assert_eq!(fs::read_dir(run.join("checkpoints")).unwrap().count(), 0);
    let stats = fs::read_to_string(run.join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 1);
    let meta = fs::read_to_string(run.join("run_metadata.toml")).unwrap();
    assert!(meta.contains("config_id"));
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = aht(&["train", "--config", &cfg, "--seed", "5", "--out-dir", s(d)]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    assert_eq!(fs::read(a.join("stats.csv")).unwrap(), fs::read(b.join("stats.csv")).unwrap());
    assert_eq!(fs::read(a.join("final.ckpt")).unwrap(), fs::read(b.join("final.ckpt")).unwrap());
    assert_eq!(fs::read_dir(a.join("checkpoints")).unwrap().count(), 2);

    let eval = |d: &Path| {
        let out = aht(&["eval", "--config", &cfg, "--checkpoint", s(&d.join("final.ckpt")), "--episodes", "300"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        stdout(&out)
    };
    assert_eq!(eval(&a), eval(&b));
}

#[test]
fn eval_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("out");
    assert_eq!(aht(&["train", "--config", &cfg, "--out-dir", s(&run)]).status.code(), Some(0));
    let ck = run.join("final.ckpt");

    let out = aht(&["eval", "--config", &cfg, "--checkpoint", s(&ck), "--episodes", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = aht(&["eval", "--config", &cfg, "--checkpoint", s(&ck), "--set", "env.num_processes=6"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let out = aht(&["eval", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));

    let garbage = dir.path().join("garbage.ckpt");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    let out = aht(&["eval", "--config", &cfg, "--checkpoint", s(&garbage)]);
    assert_eq!(out.status.code(), Some(3));

    let out = aht(&["sweep", "--config", &cfg, "--sweep", s(&dir.path().join("missing.toml"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn heuristic_eval_needs_no_checkpoint_and_is_deterministic() {
    let args = ["eval", "--mode", "heuristic", "--episodes", "500", "--set", "run.heuristic_threshold=0.9"];
    let a = aht(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&aht(&args)));
    let text = stdout(&a);
    assert!(text.starts_with("config_id,episodes,error_rate"));
    assert!(text.lines().nth(1).unwrap().starts_with("heuristic_M5_K2_c0.05,500,"));
}

#[test]
fn heuristic_threshold_sweep_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.toml");
    fs::write(&spec, "x_kind = \"threshold\"\nvalues = [0.8, 0.9, 0.95, 0.99]\nepisodes = 10000\n").unwrap();
    let out_dir = dir.path().join("sweep");
    let start = Instant::now();
    let out = aht(&[
        "sweep",
        "--sweep",
        s(&spec),
        "--set",
        "env.num_processes=10",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(start.elapsed().as_secs() < 60);
    let curve = fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5);

    let plots = dir.path().join("plots");
    let out = aht(&["plot-data", "--curve", s(&out_dir.join("curve.csv")), "--out-dir", s(&plots)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(plots.join("error_vs_sample_size.csv").is_file());
    assert!(plots.join("risk_vs_x.csv").is_file());
}

#[test]
fn one_point_sweep_matches_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let spec = dir.path().join("sweep.toml");
    fs::write(&spec, "x_kind = \"sampling_cost\"\nvalues = [0.05]\nepisodes = 200\niterations = 2\nseeds = [3]\n").unwrap();
    let sweep_dir = dir.path().join("sweep");
    let out = aht(&["sweep", "--config", &cfg, "--sweep", s(&spec), "--out-dir", s(&sweep_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let run = dir.path().join("single");
    assert_eq!(aht(&["train", "--config", &cfg, "--seed", "3", "--out-dir", s(&run)]).status.code(), Some(0));
    let out = aht(&["eval", "--config", &cfg, "--seed", "3", "--checkpoint", s(&run.join("final.ckpt"))]);
    let row: Vec<String> = stdout(&out).lines().nth(1).unwrap().split(',').map(str::to_string).collect();

    let curve = fs::read_to_string(sweep_dir.join("curve.csv")).unwrap();
    let header: Vec<&str> = curve.lines().next().unwrap().split(',').collect();
    let point: Vec<&str> = curve.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| point[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("error_rate"), row[2]);
    assert_eq!(col("avg_sample_size"), row[4]);
    assert_eq!(col("bayes_risk"), row[6]);
    assert_eq!(
        fs::read(sweep_dir.join("point_000").join("stats.csv")).unwrap(),
        fs::read(run.join("stats.csv")).unwrap()
    );
}

#[test]
fn replay_splits_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = aht(&["eval", "--mode", "heuristic", "--episodes", "20", "--trace", s(&trace)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let replayed = dir.path().join("replay");
    let out = aht(&["replay", "--trace", s(&trace), "--out-dir", s(&replayed)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("20 episodes"));
    for k in 0..2 {
        for table in ["beliefs", "actions", "observations"] {
            assert!(replayed.join(format!("agent{k}_{table}.csv")).is_file());
        }
    }
    let out = aht(&["replay", "--trace", s(&trace), "--out-dir", s(&replayed), "--set", "env.num_processes=3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["marla_m5.toml", "split_m10.toml"] {
        let cfg = aht_core::cli::RunConfig::load(Some(&root.join(name)), &[]).unwrap();
        assert_eq!(cfg.env.num_agents(), 2, "{name}");
    }
    for name in ["cost_sweep.toml", "threshold_sweep.toml"] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        aht_core::eval::SweepSpec::from_toml(&text).unwrap();
    }
}

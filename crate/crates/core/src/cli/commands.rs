use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cli::config::{Mode, RunConfig};
use crate::cli::replay::replay;
use crate::cli::{Command, ConfigArgs, EXIT_OK, EXIT_PARTIAL};
use crate::env::trace::TraceWriter;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, evaluate_traced, plot_data, read_curve, sweep, write_curve, HeuristicPolicy, MetricsRecord, SweepKind,
    SweepPoint, SweepSpec,
};
use crate::nn::Checkpoint;
use crate::ppo::{networks_for, Trainer, TrainingStats};
use crate::rollout::{NetworkPolicy, Policy};

pub(crate) fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Train { config } => {
            let cfg = config.load()?;
            let out = train_to_dir(&cfg, |s| eprintln!("{}", progress_line(s)))?;
            println!("final checkpoint: {}", out.final_checkpoint.display());
            Ok(EXIT_OK)
        }
        Command::Eval {
            config,
            checkpoint,
            episodes,
            trace,
        } => cmd_eval(&config, checkpoint.as_deref(), episodes, trace.as_deref()),
        Command::Sweep { config, sweep } => cmd_sweep(&config, &sweep),
        Command::Replay {
            trace,
            out_dir,
            config,
            overrides,
        } => {
            let cfg = RunConfig::load(config.as_deref(), &overrides)?;
            let summary = replay(&trace, &out_dir, Some(&cfg.env))?;
            println!("{summary}");
            Ok(EXIT_OK)
        }
        Command::PlotData { curve, out_dir } => {
            let file = fs::File::open(&curve).map_err(|e| Error::config("--curve", format!("{}: {e}", curve.display())))?;
            for p in plot_data(&read_curve(file)?, &out_dir)? {
                println!("{}", p.display());
            }
            Ok(EXIT_OK)
        }
    }
}

fn progress_line(s: &TrainingStats) -> String {
    format!(
        "iteration {:>4}  risk {:.4}  error {:.4}  n {:.2}  kl {:.5}  beta {:.4}",
        s.iteration, s.mean_episode_risk, s.mean_error_rate, s.mean_sample_size, s.mean_kl, s.beta
    )
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub stats: Vec<TrainingStats>,
    pub stats_path: PathBuf,
    pub final_checkpoint: PathBuf,
    pub trainer: Trainer,
}

fn write_metadata(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let mut meta = toml::Table::new();
    meta.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("config_id".into(), cfg.config_id().into());
    meta.insert("seed".into(), toml::Value::Integer(cfg.run.seed as i64));
    meta.insert("config".into(), toml::Value::Table(cfg.snapshot_table()));
    let text = toml::to_string(&meta).map_err(|e| Error::contract(format!("metadata: {e}")))?;
    fs::write(dir.join("run_metadata.toml"), text)?;
    Ok(())
}

/// Train `cfg.run.iterations` iterations in memory, calling `on_iteration`
/// after each.
pub fn train(cfg: &RunConfig, mut on_iteration: impl FnMut(&Trainer, &TrainingStats) -> Result<()>) -> Result<Trainer> {
    if cfg.run.mode == Mode::Heuristic {
        return Err(Error::config("run.mode", "heuristic mode has nothing to train"));
    }
    let mut trainer = Trainer::new(cfg.env.clone(), &cfg.hidden, cfg.ppo.clone(), cfg.run.seed, cfg.run.workers)?;
    for _ in 0..cfg.run.iterations {
        let stats = trainer.iterate()?;
        on_iteration(&trainer, &stats)?;
    }
    Ok(trainer)
}

/// Train and write `stats.csv`, periodic `checkpoints/iter_NNNNNN.ckpt`,
/// `final.ckpt` and `run_metadata.toml` under `cfg.run.out_dir`.
pub fn train_to_dir(cfg: &RunConfig, mut progress: impl FnMut(&TrainingStats)) -> Result<TrainOutcome> {
    if cfg.run.mode == Mode::Heuristic {
        return Err(Error::config("run.mode", "heuristic mode has nothing to train"));
    }
    let dir = &cfg.run.out_dir;
    fs::create_dir_all(dir.join("checkpoints"))?;
    write_metadata(cfg, dir)?;
    let stats_path = dir.join("stats.csv");
    let mut csv = csv::Writer::from_path(&stats_path)?;
    csv.write_record(TrainingStats::CSV_HEADER)?;
    csv.flush()?;
    let mut all = Vec::new();
    let trainer = train(cfg, |t, s| {
        csv.write_record(s.csv_record())?;
        csv.flush()?;
        progress(s);
        all.push(s.clone());
        let every = cfg.run.checkpoint_every;
        if every > 0 && (s.iteration + 1) % every == 0 {
            let path = dir.join("checkpoints").join(format!("iter_{:06}.ckpt", s.iteration + 1));
            t.to_checkpoint().save(&path)?;
        }
        Ok(())
    })?;
    let final_checkpoint = dir.join("final.ckpt");
    trainer.to_checkpoint().save(&final_checkpoint)?;
    Ok(TrainOutcome {
        stats: all,
        stats_path,
        final_checkpoint,
        trainer,
    })
}

/// The policy a configuration evaluates: the heuristic, or the actor stored
/// in `checkpoint`.
pub fn build_policy(cfg: &RunConfig, checkpoint: Option<&Checkpoint>) -> Result<Box<dyn Policy>> {
    if cfg.run.mode == Mode::Heuristic {
        return Ok(Box::new(HeuristicPolicy::new(cfg.run.heuristic_threshold, cfg.env.num_processes())?));
    }
    let ck = checkpoint.ok_or_else(|| Error::config("--checkpoint", "required unless run.mode is heuristic"))?;
    let (actor, _) = networks_for(&cfg.env, ck)?;
    Ok(Box::new(NetworkPolicy::new(actor.net.clone(), cfg.run.eval_greedy)))
}

fn cmd_eval(args: &ConfigArgs, checkpoint: Option<&Path>, episodes: Option<usize>, trace: Option<&Path>) -> Result<i32> {
    let cfg = args.load()?;
    let episodes = episodes.unwrap_or(cfg.run.eval_episodes);
    if episodes == 0 {
        return Err(Error::config("--episodes", "must be positive"));
    }
    if cfg.run.mode != Mode::Heuristic && checkpoint.is_none() {
        return Err(Error::config("--checkpoint", "required unless run.mode is heuristic"));
    }
    let ck = checkpoint.map(Checkpoint::load).transpose()?;
    let policy = build_policy(&cfg, ck.as_ref())?;
    let id = cfg.config_id();
    let metrics = match trace {
        None => evaluate(policy.as_ref(), &cfg.env, &id, episodes, cfg.run.seed, cfg.run.workers)?,
        Some(path) => {
            let (m, rows) = evaluate_traced(policy.as_ref(), &cfg.env, &id, episodes, cfg.run.seed, cfg.run.workers)?;
            let mut w = TraceWriter::new(fs::File::create(path)?, cfg.env.num_processes(), false)?;
            for r in &rows {
                w.write(r)?;
            }
            w.flush()?;
            m
        }
    };
    print_metrics(&metrics)?;
    Ok(EXIT_OK)
}

fn print_metrics(m: &MetricsRecord) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(MetricsRecord::CSV_HEADER)?;
    w.write_record(m.csv_record())?;
    w.flush()?;
    drop(w);
    writeln!(out, "# {}", m.summary())?;
    Ok(())
}

fn point_config(cfg: &RunConfig, spec: &SweepSpec, point: &SweepPoint, index: usize) -> Result<RunConfig> {
    let mut c = cfg
        .with_override("run.seed", toml::Value::Integer(point.seed as i64))?
        .with_override("run.eval_episodes", toml::Value::Integer(spec.episodes as i64))?
        .with_override("run.iterations", toml::Value::Integer(spec.iterations as i64))?
        .with_override(
            "run.out_dir",
            toml::Value::String(cfg.run.out_dir.join(format!("point_{index:03}")).display().to_string()),
        )?;
    match point.x_kind {
        SweepKind::SamplingCost => {
            c = c.with_override("env.sampling_cost", toml::Value::Float(point.x_value))?;
        }
        SweepKind::Threshold => {
            c = c
                .with_override("run.mode", toml::Value::String("heuristic".into()))?
                .with_override("run.heuristic_threshold", toml::Value::Float(point.x_value))?;
        }
    }
    Ok(c)
}

/// Train (unless heuristic) then evaluate one configuration, as `train`
/// followed by `eval` on the final checkpoint would.
fn run_point(cfg: &RunConfig) -> Result<(MetricsRecord, Option<PathBuf>)> {
    let (policy, ck_path) = if cfg.run.mode == Mode::Heuristic {
        (build_policy(cfg, None)?, None)
    } else {
        let out = train_to_dir(cfg, |_| {})?;
        let ck = Checkpoint::load(&out.final_checkpoint)?;
        (build_policy(cfg, Some(&ck))?, Some(out.final_checkpoint))
    };
    let m = evaluate(
        policy.as_ref(),
        &cfg.env,
        &cfg.config_id(),
        cfg.run.eval_episodes,
        cfg.run.seed,
        cfg.run.workers,
    )?;
    Ok((m, ck_path))
}

fn cmd_sweep(args: &ConfigArgs, spec_path: &Path) -> Result<i32> {
    let cfg = args.load()?;
    let text =
        fs::read_to_string(spec_path).map_err(|e| Error::config("--sweep", format!("{}: {e}", spec_path.display())))?;
    let spec = SweepSpec::from_toml(&text)?;
    // Every point is validated before any training starts.
    let configs = spec
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| point_config(&cfg, &spec, p, i))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&cfg.run.out_dir)?;
    let mut index = 0;
    let statuses = sweep(&spec, |_| {
        let c = &configs[index];
        index += 1;
        eprintln!("point {index}/{}: {}", configs.len(), c.config_id());
        run_point(c)
    })?;
    let points: Vec<_> = statuses.iter().filter_map(|s| s.curve_point()).collect();
    write_curve(fs::File::create(cfg.run.out_dir.join("curve.csv"))?, &points)?;
    println!("{:<6} {:<14} {:>10} {:>6}  status", "point", "x_kind", "x_value", "seed");
    let mut failed = 0;
    for (i, s) in statuses.iter().enumerate() {
        let status = match &s.result {
            Ok((m, _)) => format!("ok  error {:.4}  n {:.3}  risk {:.4}", m.error_rate, m.avg_sample_size, m.bayes_risk),
            Err(e) => {
                failed += 1;
                format!("FAILED  {e}")
            }
        };
        println!("{:<6} {:<14} {:>10} {:>6}  {status}", i, s.point.x_kind.as_str(), s.point.x_value, s.point.seed);
    }
    Ok(if failed > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

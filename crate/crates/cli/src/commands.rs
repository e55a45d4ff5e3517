use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use copo_core::env::trajectory::{read_records, TrajectoryWriter};
use copo_core::env::{builtin, load_scene, SceneSpec, SimConfig};
use copo_core::eval::{evaluate, mixed_population_eval, trajectory_density, EpisodeMetrics, EvalOptions, EvalPolicy};
use copo_core::gradcheck;
use copo_core::netcore::Checkpoint;
use copo_core::trainer::{IterationStats, TrainError, Trainer};

use crate::config::RunConfig;
use crate::{CliError, EvalArgs, PlotArgs, TrainArgs};

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) | TrainError::CheckpointMismatch(_) => CliError::Config(e.to_string()),
        e => runtime(e),
    }
}

/// A scene file when `spec` names an existing path, otherwise a built-in scene.
pub fn resolve_scene(spec: &str) -> Result<SceneSpec, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        return load_scene(path).map_err(|e| CliError::Config(format!("{spec}: {e}")));
    }
    builtin::by_name(spec).ok_or_else(|| {
        CliError::Config(format!("unknown scene {spec:?}: not a file and not one of {}", builtin::NAMES.join(", ")))
    })
}

pub fn run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("{}_seed{seed}", cfg.trainer.algorithm))
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::from_text(&text, &args.overrides)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    let scene = resolve_scene(&cfg.scene)?;
    for &seed in &cfg.seeds {
        train_seed(&cfg, &scene, seed, args.resume)?;
    }
    Ok(())
}

fn train_seed(cfg: &RunConfig, scene: &SceneSpec, seed: u64, resume: bool) -> Result<(), CliError> {
    let dir = run_dir(cfg, seed);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut tc = cfg.trainer.clone();
    tc.seed = seed;
    let snapshot = RunConfig { seeds: vec![seed], trainer: tc.clone(), ..cfg.clone() };
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, snapshot.to_text()).map_err(io_err(&cfg_path))?;

    let latest = dir.join("checkpoint_latest.json");
    let metrics_path = dir.join("metrics.csv");
    let resumed = resume && latest.exists();
    let mut trainer = if resumed {
        let ck = Checkpoint::load(&latest).map_err(runtime)?;
        log::info!("resuming {} at iteration {}", dir.display(), ck.iteration);
        Trainer::from_checkpoint(scene, tc.clone(), &ck).map_err(train_err)?
    } else {
        Trainer::new(scene, tc.clone()).map_err(train_err)?
    };
    trainer.set_total_iterations((cfg.max_env_steps as usize).div_ceil(tc.batch));

    let file = if resumed {
        OpenOptions::new().append(true).create(true).open(&metrics_path)
    } else {
        File::create(&metrics_path)
    }
    .map_err(io_err(&metrics_path))?;
    let mut metrics = BufWriter::new(file);
    if !resumed {
        writeln!(metrics, "{}", IterationStats::CSV_HEADER).map_err(io_err(&metrics_path))?;
    }

    let save = |t: &Trainer, name: &str| {
        let p = dir.join(name);
        t.checkpoint().save(&p).map_err(runtime)
    };
    while trainer.env_steps() < cfg.max_env_steps {
        let s = trainer.train_iteration().map_err(train_err)?;
        s.write_csv_row(&mut metrics).map_err(io_err(&metrics_path))?;
        metrics.flush().map_err(io_err(&metrics_path))?;
        log::info!(
            "seed {seed} iteration {} steps {} success {:.3} crashes {} phi_mu {:.4}",
            s.iteration,
            s.env_steps,
            s.success_rate,
            s.safety,
            s.phi_mu
        );
        if s.iteration % cfg.checkpoint_every == 0 {
            save(&trainer, &format!("checkpoint_{:06}.json", s.iteration))?;
            save(&trainer, "checkpoint_latest.json")?;
        }
    }
    save(&trainer, "checkpoint_latest.json")?;
    save(&trainer, "checkpoint_final.json")
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&args.idm_fraction) {
        return Err(CliError::Config(format!("--idm-fraction must lie in [0, 1), got {}", args.idm_fraction)));
    }
    if args.episodes == 0 || args.horizon == 0 {
        return Err(CliError::Config("--episodes and --horizon must be positive".into()));
    }
    let scene = resolve_scene(&args.scene)?;
    let ck = Checkpoint::load(&args.checkpoint).map_err(runtime)?;
    let policy = EvalPolicy::from_checkpoint(&ck).map_err(runtime)?;
    let sim = SimConfig { horizon: args.horizon, ..SimConfig::default() };
    let settings: Vec<Option<usize>> =
        if args.initial_agents.is_empty() { vec![None] } else { args.initial_agents.iter().map(|&n| Some(n)).collect() };
    if let Some(dir) = &args.trajectories {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    println!("initial_agents,idm_fraction,{}", EpisodeMetrics::CSV_HEADER);
    for n in settings {
        let opts = EvalOptions {
            episodes: args.episodes,
            seed: args.seed,
            initial_agents: n,
            idm_fraction: args.idm_fraction,
            record_trajectories: args.trajectories.is_some(),
            ..EvalOptions::default()
        };
        let report = if args.idm_fraction > 0.0 {
            mixed_population_eval(&policy, &scene, &sim, &opts)
        } else {
            evaluate(&policy, &scene, &sim, &opts)
        }
        .map_err(runtime)?;
        let count = n.unwrap_or(scene.target_agent_count);
        println!("{count},{},{}", args.idm_fraction, report.metrics.csv_row());
        if let Some(dir) = &args.trajectories {
            for (e, ep) in report.episodes.iter().enumerate() {
                let path = dir.join(format!("agents{count}_episode{e:03}.jsonl"));
                let mut w = TrajectoryWriter::new(BufWriter::new(File::create(&path).map_err(io_err(&path))?));
                for r in &ep.trajectory {
                    w.write(r).map_err(io_err(&path))?;
                }
                w.flush().map_err(io_err(&path))?;
            }
        }
    }
    Ok(())
}

pub fn plot(args: &PlotArgs) -> Result<(), CliError> {
    if args.files.is_empty() {
        return Err(CliError::Config("no trajectory files given".into()));
    }
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    for file in &args.files {
        let f = File::open(file).map_err(io_err(file))?;
        let records = read_records(BufReader::new(f)).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
        let grid = trajectory_density(&[records], None);
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        let out = |suffix: &str| args.out.join(format!("{stem}{suffix}"));
        let p = out("_density.pgm");
        grid.to_gray_image().save(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        let p = out("_spawn.ppm");
        grid.to_color_image().save(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        let p = out("_grid.csv");
        fs::write(&p, grid.to_csv()).map_err(io_err(&p))?;
        let p = out("_crashes.csv");
        let crashes: String = grid.crashes.iter().map(|c| format!("{},{}\n", c.x, c.y)).collect();
        fs::write(&p, format!("x,y\n{crashes}")).map_err(io_err(&p))?;
        println!("{}: {} positions, {} crashes", file.display(), grid.mass(), grid.crashes.len());
    }
    Ok(())
}

pub fn gradcheck(fixture: &str) -> Result<(), CliError> {
    let reports = gradcheck::run(fixture).ok_or_else(|| {
        CliError::Config(format!("unknown fixture {fixture:?}; expected all or one of {}", gradcheck::FIXTURES.join(", ")))
    })?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{:<18} max_rel_err {:.3e} tolerance {:.0e} {verdict}", r.name, r.max_rel_err, r.tolerance);
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() { Ok(()) } else { Err(CliError::Gradcheck(failed.join(", "))) }
}

pub fn scene_dump(name: &str, out: Option<&Path>) -> Result<(), CliError> {
    let scene = builtin::by_name(name)
        .ok_or_else(|| CliError::Config(format!("unknown scene {name:?}; expected one of {}", builtin::NAMES.join(", "))))?;
    let text = scene.to_text();
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

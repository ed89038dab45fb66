use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use navsim::dvst::{certify, oracle_steps, transfer_policy, wrap_policy, TransferContext, FINE_GRID_MIN};
use navsim::env::{ControlError, Controller, Observation};
use navsim::eval::{
    emit_plot, run_dynamic, run_goals, run_sweep, ReactiveMeta, TrajectoryLog,
};
use navsim::msl::{train, MetaPolicy, RecordKind};
use navsim::nets::{load_network, NetKind, Role};
use navsim::{DimensionalConfig, VelocityCommand, WorldLayout};

use crate::config::{layout, RunConfig};
use crate::manifest::RunManifest;
use crate::{ControllerKind, CliError, Protocol};

type MetaFn<'a> = Box<dyn FnMut(&Observation) -> Result<VelocityCommand, ControlError> + 'a>;

fn io_err(what: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", what.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn start_run(
    command: &str,
    config_path: Option<&Path>,
    seeds: &[u64],
    cfg: &RunConfig,
    out: &Path,
) -> Result<RunManifest, CliError> {
    let mut m = RunManifest::new(command, config_path, seeds, cfg);
    m.create_out_dir(out).map_err(io_err(out))?;
    m.write().map_err(io_err(&m.out_dir))?;
    Ok(m)
}

/// Caps worker threads from `NAVSIM_THREADS`, defaulting to the number of
/// available cores.
pub fn worker_threads() -> Result<usize, CliError> {
    match std::env::var("NAVSIM_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Validation(format!("NAVSIM_THREADS must be a positive integer, got `{s}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

struct SeedSummary {
    seed: u64,
    dir: PathBuf,
    steps: usize,
    episodes: usize,
    stage: usize,
    last_eval: Option<f64>,
}

pub fn cmd_train(config_path: Option<&Path>, seeds: &[u64], out: &Path) -> Result<(), CliError> {
    if seeds.is_empty() {
        return Err(CliError::Validation("--seed needs at least one value".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Validation("--seed values must be distinct".into()));
    }
    let cfg = RunConfig::load_or_default(config_path)?;
    let curriculum = cfg.curriculum()?;
    let threads = worker_threads()?.min(seeds.len());
    let mut manifest = start_run("train", config_path, seeds, &cfg, out)?;
    let root = manifest.out_dir.clone();

    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<SeedSummary, CliError>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                let dir = root.join(format!("seed-{seed}"));
                let res = train(&cfg.trainer, &cfg.env, &curriculum, seed, Some(&dir))
                    .map(|run| SeedSummary {
                        seed,
                        dir: dir.clone(),
                        steps: run.total_steps,
                        episodes: run.episodes,
                        stage: run.final_stage,
                        last_eval: run.records.iter().rev().find(|r| r.kind == RecordKind::Eval).map(|r| r.success_rate),
                    })
                    .map_err(CliError::from);
                *results[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(res);
            });
        }
    });

    for r in results {
        let r = r.into_inner().unwrap_or_else(|p| p.into_inner());
        let s = r.ok_or_else(|| CliError::Runtime("training worker did not report".into()))??;
        let eval = s.last_eval.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "seed {}: {} steps, {} episodes, stage {}, last eval success {} -> {}",
            s.seed,
            s.steps,
            s.episodes,
            s.stage,
            eval,
            s.dir.display()
        );
    }
    manifest.finish().map_err(io_err(&root))?;
    println!("run written to {}", root.display());
    Ok(())
}

enum Meta {
    Policy(MetaPolicy),
    Reactive(ReactiveMeta),
}

impl Meta {
    fn build(cfg: &RunConfig, kind: ControllerKind, weights: Option<&Path>) -> Result<Self, CliError> {
        match kind {
            ControllerKind::Reactive => Ok(Meta::Reactive(ReactiveMeta::for_env(&cfg.env))),
            ControllerKind::Policy => {
                let path = weights.ok_or_else(|| {
                    CliError::Validation("--weights is required for the policy controller".into())
                })?;
                let arch = cfg.trainer.architecture(NetKind::Policy, &cfg.env)?;
                let params = load_network(path, Role::Policy, &arch)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
                let p = MetaPolicy::new(params, cfg.env.preprocess, &cfg.env.robot)
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                Ok(Meta::Policy(p))
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Meta::Policy(_) => "policy",
            Meta::Reactive(_) => "reactive",
        }
    }

    fn controller(&mut self) -> &mut dyn Controller {
        match self {
            Meta::Policy(p) => p,
            Meta::Reactive(r) => r,
        }
    }

    fn meta_fn(&self) -> MetaFn<'_> {
        match self {
            Meta::Policy(p) => Box::new(p.as_meta_fn()),
            Meta::Reactive(r) => Box::new(r.as_meta_fn()),
        }
    }
}

fn write_log(dir: &Path, stem: &str, log: &TrajectoryLog) -> Result<(), CliError> {
    let json = log.to_json().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&dir.join(format!("{stem}.json")), &json)?;
    let path = dir.join(format!("{stem}.csv"));
    let mut f = create(&path)?;
    log.write_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(&path))
}

fn write_plot(dir: &Path, logs: &[TrajectoryLog], layout: &WorldLayout) -> Result<(), CliError> {
    let svg = emit_plot(logs, layout).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&dir.join("plot.svg"), &svg)
}

pub fn cmd_eval(
    config_path: Option<&Path>,
    weights: Option<&Path>,
    protocol: Protocol,
    kind: ControllerKind,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(config_path)?;
    let mut meta = Meta::build(&cfg, kind, weights)?;
    let mut manifest = start_run(&format!("eval-{}", protocol.as_str()), config_path, &[], &cfg, out)?;
    let dir = manifest.out_dir.clone();
    let report = dir.join("report.csv");
    match protocol {
        Protocol::Goals => {
            let l = layout(&cfg.eval.goals_layout)?;
            let rep = run_goals(&cfg.env, l.clone(), meta.controller())?;
            let mut f = create(&report)?;
            rep.write_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(&report))?;
            let logs: Vec<TrajectoryLog> = rep.legs.iter().map(|g| g.log.clone()).collect();
            for (i, log) in logs.iter().enumerate() {
                write_log(&dir, &format!("leg{i}"), log)?;
            }
            write_plot(&dir, &logs, &l)?;
            println!(
                "goals on {}: success {:.2}, total score {:.3}",
                rep.layout,
                rep.success_rate(),
                rep.total_score
            );
        }
        Protocol::Sweep => {
            let spec = &cfg.eval.sweep;
            let l = layout(&spec.layout)?;
            let env = &cfg.env;
            let mut factory = |robot: &DimensionalConfig| -> Result<Box<dyn Controller + '_>, ControlError> {
                let ctx = TransferContext::new(env.robot, *robot, env.dt)?;
                Ok(Box::new(wrap_policy(meta.meta_fn(), ctx, env.lidar, env.preprocess)))
            };
            let rep = run_sweep(spec, env, l.clone(), &mut factory)?;
            let mut f = create(&report)?;
            rep.write_csv(&mut f).and_then(|_| f.flush()).map_err(io_err(&report))?;
            for r in &rep.rows {
                let stem = format!("R{:.2}_v{:.2}_w{:.2}", r.robot.radius, r.robot.v_max, r.robot.omega_max);
                write_log(&dir, &stem, &r.log)?;
            }
            write_plot(&dir, &rep.logs(), &l)?;
            let ok = rep.rows.iter().filter(|r| r.record.score > -2.0).count();
            println!("sweep on {}: {} of {} robots reached the goal", rep.layout, ok, rep.rows.len());
        }
        Protocol::Dynamic => {
            let d = &cfg.eval.dynamic;
            let l = layout(&d.layout)?;
            let swaps = cfg.swaps()?;
            let name = meta.name();
            let (rec, log) = run_dynamic(&cfg.env, l.clone(), &swaps, d.start, d.goal, meta.controller(), name)?;
            let mut f = create(&report)?;
            writeln!(f, "outcome,steps,score,swaps")
                .and_then(|_| writeln!(f, "{},{},{},{}", rec.outcome.as_str(), rec.steps, rec.score, log.swaps.len()))
                .and_then(|_| f.flush())
                .map_err(io_err(&report))?;
            write_log(&dir, "trajectory", &log)?;
            let swaps_path = dir.join("swaps.csv");
            let mut f = create(&swaps_path)?;
            let mut w = || -> std::io::Result<()> {
                writeln!(f, "step,layout,x,y")?;
                for m in &log.swaps {
                    writeln!(f, "{},{},{},{}", m.step, m.layout, m.x, m.y)?;
                }
                f.flush()
            };
            w().map_err(io_err(&swaps_path))?;
            write_plot(&dir, std::slice::from_ref(&log), &l)?;
            println!(
                "dynamic on {}: {} after {} steps, {} swap(s)",
                d.layout,
                rec.outcome.as_str(),
                rec.steps,
                log.swaps.len()
            );
        }
    }
    manifest.finish().map_err(io_err(&dir))?;
    println!("report written to {}", dir.display());
    Ok(())
}

pub fn cmd_transfer(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let t = &cfg.transfer;
    let scaled = t
        .scaled
        .ok_or_else(|| CliError::Validation("field `transfer.scaled`: required for the transfer demo".into()))?;
    if t.commands.is_empty() {
        return Err(CliError::Validation("field `transfer.commands`: needs at least one command".into()));
    }
    let ctx = TransferContext::new(t.meta.unwrap_or(cfg.env.robot), scaled, t.dt.unwrap_or(cfg.env.dt))
        .map_err(|e| CliError::Validation(format!("field `transfer`: {e}")))?;
    let mut manifest = start_run("transfer", Some(config_path), &[], &cfg, out)?;
    let path = manifest.out_dir.join("transfer.csv");
    let mut f = create(&path)?;
    writeln!(f, "v_m,omega_m,v_ideal,omega_ideal,rho_ideal,v_out,omega_out,case").map_err(io_err(&path))?;
    for [v, w] in &t.commands {
        let r = transfer_policy(*v, *w, &ctx).map_err(|e| CliError::Runtime(e.to_string()))?;
        let rho = r.rho_ideal.map_or(String::new(), |x| x.to_string());
        writeln!(
            f,
            "{v},{w},{},{},{rho},{},{},{}",
            r.v_ideal,
            r.omega_ideal,
            r.v_out,
            r.omega_out,
            r.case.as_str()
        )
        .map_err(io_err(&path))?;
    }
    f.flush().map_err(io_err(&path))?;
    manifest.finish().map_err(io_err(&path))?;
    println!("{} commands transferred -> {}", t.commands.len(), path.display());
    Ok(())
}

pub fn cmd_oracle_check(
    config_path: Option<&Path>,
    samples: usize,
    seed: u64,
    grid_n: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if samples < 1 {
        return Err(CliError::Validation("--samples must be at least 1".into()));
    }
    if grid_n < 2 {
        return Err(CliError::Validation("--grid-n must be at least 2".into()));
    }
    let cfg = RunConfig::load_or_default(config_path)?;
    if grid_n < FINE_GRID_MIN {
        let ctx = TransferContext::new(cfg.env.robot, cfg.env.robot, cfg.env.dt)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let (dv, _) = oracle_steps(&ctx, grid_n);
        eprintln!(
            "warning: grid_n={grid_n} is below {FINE_GRID_MIN}; optimality is only checked to one grid step \
             ({:.4} of v_max, {dv:.4} m/s for the meta robot)",
            1.0 / (grid_n - 1) as f64
        );
    }
    let rep = certify(samples, seed, grid_n, cfg.env.dt).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "oracle-check: samples={} seed={} grid_n={} failures={} max_deviation={:.6e} max_shortfall_steps={:.4} oracle_infeasible={}",
        rep.samples, rep.seed, rep.grid_n, rep.failures, rep.max_deviation, rep.max_shortfall_steps, rep.oracle_infeasible
    );
    if let Some(out) = out {
        let mut manifest = start_run("oracle-check", config_path, &[seed], &cfg, out)?;
        let path = manifest.out_dir.join("oracle.json");
        let json = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_text(&path, &json)?;
        manifest.finish().map_err(io_err(&path))?;
    }
    if rep.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::Oracle(format!("{} of {} instances failed", rep.failures, rep.samples)))
    }
}

pub fn cmd_plot(logs: &[PathBuf], layout_name: Option<&str>, out: &Path) -> Result<(), CliError> {
    if logs.is_empty() {
        return Err(CliError::Validation("--logs needs at least one trajectory file".into()));
    }
    let mut parsed = Vec::with_capacity(logs.len());
    for p in logs {
        let text = fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let log: TrajectoryLog = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Validation(format!("{}: field `{}`: {}", p.display(), e.path(), e.inner())))?;
        parsed.push(log);
    }
    let name = layout_name.unwrap_or(&parsed[0].meta.layout);
    let l = layout(name)?;
    let svg = emit_plot(&parsed, &l).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_text(out, &svg)?;
    println!("{} trajectories plotted -> {}", parsed.len(), out.display());
    Ok(())
}

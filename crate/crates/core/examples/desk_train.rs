//! Trains the pooled network in the empty 8 m room and prints progress.
//!
//! cargo run --release -p navsim --example desk_train -- [seed] [out_dir]

use std::sync::Arc;
use std::time::Instant;

use navsim::env::EnvConfig;
use navsim::msl::{train, RecordKind, TrainEval, TrainerConfig};
use navsim::nets::NetConfig;
use navsim::WorldLayout;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let out = args.next().map(std::path::PathBuf::from);
    let cfg = TrainerConfig {
        net: NetConfig::downsampled(60, vec![128, 128]),
        eval: TrainEval::Random {
            episodes: 50,
            seed: 1_000,
        },
        stop_at_success: Some(0.8),
        ..TrainerConfig::default()
    };
    let env = EnvConfig::default();
    let layouts = vec![Arc::new(WorldLayout::resolve("empty8")?)];
    let t0 = Instant::now();
    let run = train(&cfg, &env, &layouts, seed, out.as_deref())?;
    for r in run.records.iter().filter(|r| r.kind == RecordKind::Eval) {
        println!("steps {:>7}  eval success {:.2}  score {:.2}", r.total_steps, r.success_rate, r.eval_score.unwrap_or(0.0));
    }
    println!(
        "{} steps, {} episodes, stopped early: {}, {:.1}s",
        run.total_steps,
        run.episodes,
        run.stopped_early,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

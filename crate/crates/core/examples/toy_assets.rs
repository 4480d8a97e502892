//! Regenerate the bundled toy assets: 200 synthetic seasons, a held-out
//! season and the model trained on them.
//!
//!     cargo run --release --example toy_assets [-- EPOCHS]

use std::time::Instant;

use epidiff::encoding::io;
use epidiff::toy::{
    generate_toy_frames, toy_checkpoint_path, toy_frames_path, toy_holdout_season,
    toy_season_path, train_toy, TOY_FRAMES, TOY_SEED,
};

fn main() -> epidiff::Result<()> {
    let epochs: usize = std::env::args()
        .nth(1)
        .map(|a| a.parse().expect("EPOCHS must be an integer"))
        .unwrap_or(200);
    let frames = generate_toy_frames(TOY_FRAMES, TOY_SEED)?;
    std::fs::create_dir_all(toy_frames_path().parent().unwrap())?;
    io::save_frames(&toy_frames_path(), &frames, true)?;
    io::save_frames(&toy_season_path(), &[toy_holdout_season(TOY_SEED)?], true)?;

    let start = Instant::now();
    let (ckpt, report) = train_toy(&frames, epochs, TOY_SEED, |e, l| {
        if e == 1 || e % 10 == 0 {
            println!("epoch {e:4}  loss {l:.5}  ({:.0}s)", start.elapsed().as_secs_f64());
        }
    })?;
    ckpt.save(&toy_checkpoint_path())?;
    let first = report.epoch_losses[0];
    let last = *report.epoch_losses.last().unwrap();
    println!("loss {first:.4} -> {last:.4}; saved {}", toy_checkpoint_path().display());
    Ok(())
}

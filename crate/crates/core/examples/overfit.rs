//! Memorizes a small synthetic corpus and prints the per-epoch log.
//!
//! `cargo run --example overfit -- [seed] [epochs] [batch] [lr] [aug|noaug]`

use cmunext::data::generate_synthetic;
use cmunext::train::{train_with, TrainConfig};
use cmunext::{build_cmunext, VariantConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let seed: u64 = arg(0, "0").parse()?;
    let cfg = TrainConfig {
        epochs: arg(1, "60").parse()?,
        batch_size: arg(2, "8").parse()?,
        lr: arg(3, "0.01").parse()?,
        seed,
        augment: arg(4, "aug") != "noaug",
        ..TrainConfig::default()
    };
    let corpus = generate_synthetic(32, 64, seed)?;
    let mut model = build_cmunext(VariantConfig::cmunext_s(), seed)?;
    let start = std::time::Instant::now();
    println!("epoch,train_loss,val_loss,val_iou,val_f1,lr");
    train_with(&mut model, &corpus, &corpus, &cfg, |e| {
        println!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.6}  [{:.1}s]",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.val_iou,
            e.val_f1,
            e.lr,
            start.elapsed().as_secs_f64()
        )
    })?;
    Ok(())
}

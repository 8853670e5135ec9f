//! Generates a small synthetic multi-view dataset and writes it to disk in
//! the documented layout (split/task/demo/viewN/frame_*.png + meta.json).
//!
//!     cargo run --example generate_dataset -- [out_dir]

use skillnet::dataio::{generate_synthetic_dataset, save_dataset, GeneratorConfig, Split};

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "example_out/dataset".into());
    let config = GeneratorConfig {
        tasks: vec!["stack".into(), "color_push".into()],
        demos_per_task: 4,
        fraction_unsuccessful: 0.25,
        frames: 20,
        frame_size: 32,
        split: Split::Train,
    };
    let dataset = generate_synthetic_dataset(&config, 7)?;
    save_dataset(&dataset, out.as_ref())?;
    println!("wrote {} demonstrations to {out}", dataset.len());
    for demo in &dataset.demonstrations {
        println!(
            "  {:<18} success={:<5} frames={} size={}",
            demo.demo_id,
            demo.success,
            demo.num_frames(),
            demo.frame_size()
        );
    }
    Ok(())
}

//! Temporary: state-space monotonicity upper bound. Delete before release.
use skillnet::dataio::{generate_synthetic_dataset, GeneratorConfig, Split};
use skillnet::evaluation::stats::spearman;

fn main() -> anyhow::Result<()> {
    let held = generate_synthetic_dataset(
        &GeneratorConfig {
            tasks: vec!["color_stack".into()],
            demos_per_task: 20,
            fraction_unsuccessful: 0.0,
            split: Split::Test,
            ..Default::default()
        },
        42,
    )?;
    let mut rhos = Vec::new();
    for demo in &held.demonstrations {
        let states = demo.states.as_ref().unwrap();
        let goal = states.last().unwrap().to_vec();
        let series: Vec<f64> = states
            .iter()
            .map(|s| {
                -s.to_vec()
                    .iter()
                    .zip(goal.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let time: Vec<f64> = (0..series.len()).map(|t| t as f64).collect();
        rhos.push(spearman(&series, &time));
    }
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("state-space spearman mean {mean:.3} min {min:.3}");
    Ok(())
}

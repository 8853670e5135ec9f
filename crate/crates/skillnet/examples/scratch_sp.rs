use ndarray::Array1;
use skillnet::checkpoint::Checkpoint;
use skillnet::dataio::{load_dataset, Split};
use skillnet::evaluation::{embed_view, stats::spearman};

fn euclid(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|x| x * x).sum().sqrt()
}

fn main() -> anyhow::Result<()> {
    let arg = std::env::args().nth(1).unwrap_or("/tmp/smoke/pg64a/checkpoint_latest.json".into());
    let encoder = if arg == "random" {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(999);
        skillnet::encoder::Encoder::new(skillnet::encoder::EncoderConfig::default(), &mut rng)
    } else {
        Checkpoint::load(std::path::Path::new(&arg))?.encoder
    };
    let which = std::env::args().nth(2).unwrap_or("comp".into());
    let held = if which == "train_tasks" {
        skillnet::dataio::generate_synthetic_dataset(&skillnet::dataio::GeneratorConfig {
            fraction_unsuccessful: 0.0,
            split: Split::Test,
            ..Default::default()
        }, 77)?
    } else {
        load_dataset(std::path::Path::new("/tmp/smoke/p64h"), Split::Test)?.dataset
    };
    let mut rp = vec![]; let mut rn = vec![]; let mut re = vec![];
    for demo in held.demonstrations.iter().filter(|d| d.success) {
        let f = demo.num_frames();
        let time: Vec<f64> = (0..f).map(|t| t as f64).collect();
        // pixel space
        let last = demo.frame(0, f - 1).normalize();
        let curve: Vec<f64> = (0..f).map(|t| {
            let fr = demo.frame(0, t).normalize();
            -((&fr.pixels - &last.pixels).mapv(|x: f32| x * x).sum().sqrt() as f64)
        }).collect();
        rp.push(spearman(&curve, &time));
        // embedding raw + normalized
        let emb = embed_view(&encoder, demo, 0);
        let goal = emb.last().unwrap().clone();
        let c2: Vec<f64> = emb.iter().map(|e| -euclid(e, &goal)).collect();
        re.push(spearman(&c2, &time));
        if rp.len() <= 3 {
            let d: Vec<String> = c2.iter().map(|v| format!("{:.2}", -v)).collect();
            println!("series: {}", d.join(" "));
        }
        let norm = |e: &Array1<f64>| { let n = e.mapv(|x| x*x).sum().sqrt(); e / n.max(1e-12) };
        let embn: Vec<Array1<f64>> = emb.iter().map(|e| norm(e)).collect();
        let goaln = norm(&goal);
        let c3: Vec<f64> = embn.iter().map(|e| -euclid(e, &goaln)).collect();
        rn.push(spearman(&c3, &time));
    }
    let m = |v: &Vec<f64>| (v.iter().sum::<f64>() / v.len() as f64, v.iter().cloned().fold(f64::INFINITY, f64::min));
    println!("pixel (mean,min) {:?}", m(&rp));
    println!("raw emb (mean,min) {:?}", m(&re));
    println!("l2 emb (mean,min) {:?}", m(&rn));
    Ok(())
}

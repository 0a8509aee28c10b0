use civc::config::{DataConfig, ModelConfig};
use civc::dataio::{eval_clip, generate_synthetic_benchmark, Clip};
use civc::model::{estimate_motion_fields, Arch, Extractor};
use std::time::Instant;

fn main() {
    let dcfg = DataConfig { train_per_class: 16, test_per_class: 1, ..DataConfig::default() };
    let stream = generate_synthetic_benchmark(&dcfg, 0).unwrap();
    let clips: Vec<Clip> = stream.sessions[0].train.iter().map(|v| eval_clip(v, 8)).collect();
    let refs: Vec<&Clip> = clips.iter().take(16).collect();

    let arch = Arch::new(&ModelConfig::default(), 1, 16);
    let ex = Extractor::init(arch, 0);

    let t0 = Instant::now();
    let n_fwd = 20;
    for _ in 0..n_fwd {
        let maps = ex.forward_batch(&refs);
        std::hint::black_box(&maps);
    }
    let fwd = t0.elapsed().as_secs_f64() / n_fwd as f64;
    println!("forward  batch16: {:.2} ms ({:.3} ms/clip)", fwd * 1e3, fwd * 1e3 / 16.0);

    let t0 = Instant::now();
    for _ in 0..n_fwd {
        let (maps, cache) = ex.forward_batch_cached(&refs);
        let grads = ex.backward_batch(&cache, &maps);
        std::hint::black_box(&grads);
    }
    let fb = t0.elapsed().as_secs_f64() / n_fwd as f64;
    println!("fwd+bwd  batch16: {:.2} ms ({:.3} ms/clip)", fb * 1e3, fb * 1e3 / 16.0);

    let map = ex.forward(refs[0]);
    let t0 = Instant::now();
    for _ in 0..50 {
        let f = estimate_motion_fields(&map, 2);
        std::hint::black_box(&f);
    }
    let mo = t0.elapsed().as_secs_f64() / 50.0;
    println!("motion per map: {:.3} ms", mo * 1e3);

    // one epoch estimate: 240 clips base, fwd+bwd
    let per_epoch = fb / 16.0 * 240.0;
    println!("est base epoch (240 clips): {:.1} ms -> 50 epochs = {:.1} s", per_epoch * 1e3, per_epoch * 50.0);
}

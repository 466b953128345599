// Throwaway quality probe (deleted before finalizing).
use srp_core::baselines::{map_upsample, upsample_cubic, upsample_linear, MapConfig};
use srp_core::datagen::{build_dataset, Dataset, DatasetConfig};
use srp_core::metrics::{rmse_slices, windowed_dtw_slices, DtwConfig};
use srp_core::net::{infer, train, ModelHyper, SrpModel, TrainConfig};
use srp_core::signal::TimeSeries;
use std::time::Instant;

fn eval(test: &Dataset, model: &SrpModel) -> Vec<(String, f64, f64)> {
    let map_cfg = MapConfig::default();
    let dtw_cfg = DtwConfig::default();
    let alpha = test.alpha;
    let methods: Vec<(&str, Box<dyn Fn(&TimeSeries) -> TimeSeries>)> = vec![
        ("linear", Box::new(move |lo| upsample_linear(lo, alpha).unwrap())),
        ("cubic", Box::new(move |lo| upsample_cubic(lo, alpha).unwrap())),
        ("map", Box::new(move |lo| map_upsample(lo, alpha, &map_cfg).unwrap())),
        ("srp", Box::new(move |lo| infer(model, lo).unwrap())),
    ];
    let mut out = Vec::new();
    for (name, f) in &methods {
        let (mut rs, mut ds, mut n) = (0.0, 0.0, 0);
        for pair in &test.pairs {
            let recon = f(&pair.low).inverse_preprocess().unwrap();
            let truth = pair.high.inverse_preprocess().unwrap();
            rs += rmse_slices(recon.samples(), truth.samples()).unwrap();
            ds += windowed_dtw_slices(recon.samples(), truth.samples(), &dtw_cfg).unwrap();
            n += 1;
        }
        out.push((name.to_string(), rs / n as f64, ds / n as f64));
    }
    out
}

fn run_setting(low_rate: f64, alpha: usize, seed: u64, updates: usize) -> (f64, f64) {
    let cfg = DatasetConfig {
        low_rate_hz: low_rate,
        alpha,
        lowres_window_len: 32,
        n_scenarios: 70,
        duration_s: 10.0,
        seed,
        ..Default::default()
    };
    let bundle = build_dataset(&cfg).unwrap();
    let hyper = ModelHyper { alpha, channels: 16, n_blocks: 8, kernel_size: 3 };
    let mut model = SrpModel::new(hyper, seed ^ 0xAB).unwrap();
    let tcfg = TrainConfig {
        batch_size: 32,
        updates_phase1: updates,
        lr_phase1: 2e-4,
        updates_phase2: updates / 4,
        lr_phase2: 2e-5,
        seed: seed ^ 0xCD,
        ..Default::default()
    };
    let t = Instant::now();
    let pairs = bundle.train.net_pairs();
    let report = train(&mut model, &pairs, &tcfg, None).unwrap();
    let train_s = t.elapsed().as_secs_f64();
    let scores = eval(&bundle.test, &model);
    println!(
        "  f_l={low_rate} a={alpha} seed={seed}: train {:.0}s loss {:.4}->{:.5} | {}",
        train_s,
        report.losses[0],
        report.losses[report.losses.len() - 50..].iter().sum::<f64>() / 50.0,
        scores
            .iter()
            .map(|(n, r, d)| format!("{n} rmse={r:.2} dtw={d:.2}"))
            .collect::<Vec<_>>()
            .join(" | ")
    );
    let srp = scores.iter().find(|s| s.0 == "srp").unwrap();
    (srp.1, srp.2)
}

fn main() {
    println!("== criterion 2 setting (100 Hz, a=10), 3 seeds ==");
    for seed in [1u64, 2, 3] {
        run_setting(100.0, 10, seed, 4000);
    }
    println!("== criterion 3 orderings (matched budget 2500) ==");
    let a = run_setting(10.0, 10, 5, 2500);
    let b = run_setting(100.0, 10, 5, 2500);
    let c = run_setting(10.0, 100, 5, 2500);
    println!("rmse(10,100)={:.2} > rmse(10,10)={:.2} ? {}", c.0, a.0, c.0 > a.0);
    println!("rmse(10,10)={:.2} > rmse(100,10)={:.2} ? {}", a.0, b.0, a.0 > b.0);
}

//! Cross-validates the pipeline on a generated phantom suite and prints the
//! metric table for the full pipeline and the dense-argmax ablation.
//!
//! Usage: `cargo run --release -p ivus-core --example phantom_benchmark [count] [size] [polar]`

use std::time::Instant;

use ivus_core::dataset::Sample;
use ivus_core::eval::{crossval_prepared, Metric, MetricReport, Region};
use ivus_core::phantom::{phantom_suite, SuiteVariation};
use ivus_core::pipeline::prepare_frame;
use ivus_core::seeds::SeedMode;
use ivus_core::PipelineConfig;

fn precise(report: &MetricReport) -> String {
    let mean = |r| report.summary(r, Metric::Jcc).map_or(f64::NAN, |s| s.mean);
    format!("mean JCC lumen {:.4}, EEL {:.4}", mean(Region::Lumen), mean(Region::Eel))
}

fn main() -> ivus_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let count = args.first().copied().unwrap_or(20);
    let size = args.get(1).copied().unwrap_or(384);
    let polar = args.get(2).copied().unwrap_or(256);

    let variation = SuiteVariation {
        n_scanlines: polar,
        n_depth: polar,
        ..Default::default()
    };
    let start = Instant::now();
    let suite = phantom_suite(count, &variation, 2024)?;
    let corpus: Vec<Sample> = suite
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (frame, labels) = p.to_cartesian(size, None)?;
            let name = format!("phantom_{i:03}");
            Ok(Sample { group: name.clone(), name, frame, labels })
        })
        .collect::<ivus_core::Result<_>>()?;
    let mut config = PipelineConfig {
        n_scanlines: polar,
        n_depth: polar,
        rng_seed: 1,
        ..Default::default()
    };
    if let Ok(path) = std::env::var("BENCH_CONFIG") {
        let text = std::fs::read_to_string(path)?;
        let overrides = PipelineConfig::from_text(&format!("polar.n_scanlines = {polar}\npolar.n_depth = {polar}\nrun.rng_seed = 1\n{text}"))?;
        config = overrides;
    }
    let prepared = corpus
        .iter()
        .map(|s| prepare_frame(&s.frame, &config))
        .collect::<ivus_core::Result<Vec<_>>>()?;
    println!("generated and prepared {count} frames in {:.1?}", start.elapsed());

    let t = Instant::now();
    let full = crossval_prepared(&corpus, &prepared, 2, &config)?;
    println!("full pipeline ({:.1?})\n{}", t.elapsed(), full.to_table("walker"));
    println!("{}", precise(&full));
    if std::env::var_os("BENCH_CSV").is_some() {
        println!("{}", full.to_csv());
    }
    let dense = PipelineConfig {
        seeds: ivus_core::seeds::SeedPolicy { mode: SeedMode::DenseArgmax, ..config.seeds },
        ..config.clone()
    };
    let t = Instant::now();
    let ablation = crossval_prepared(&corpus, &prepared, 2, &dense)?;
    println!("dense argmax ({:.1?})\n{}", t.elapsed(), ablation.to_table("forest"));
    println!("{}", precise(&ablation));
    if std::env::var_os("BENCH_CSV").is_some() {
        println!("{}", ablation.to_csv());
    }
    Ok(())
}

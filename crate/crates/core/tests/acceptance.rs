//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines always
//! reach the console. Criterion 7 needs the challenge corpus; point
//! `IVUS_DATASET_A` at its root to enable it.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use ivus_core::confidence::{attach_confidence, confidence_lattice, confidence_map, ConfidenceParams};
use ivus_core::data::{PolarFrame, Tissue};
use ivus_core::dataset::{load_corpus, Sample};
use ivus_core::eval::{crossval, crossval_prepared, Metric, MetricReport, Region};
use ivus_core::features::{estimate_fisher_tippett, estimate_nakagami, multiscale_features, WindowSchedule};
use ivus_core::forest::{predict_posterior, train_forest, FeatureSubset, ForestConfig, Node, TrainingSet};
use ivus_core::phantom::{generate_phantom, phantom_suite, PhantomSpec, SuiteVariation};
use ivus_core::pipeline::prepare_frame;
use ivus_core::seeds::{sample_training_pixels, SeedMask, SeedMode, SeedPolicy};
use ivus_core::walker::{assemble_laplacian, harmonic_residual, solve_labels, LatticeGraph, SparseLaplacian, WalkerParams};
use ivus_core::PipelineConfig;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: ivus_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- helpers

/// 4-connected `rows × cols` lattice, rows wrapping when there are more than two.
fn random_lattice(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let p = r * cols + c;
            if c + 1 < cols {
                edges.push((p, p + 1, rng.random_range(0.05..2.0)));
            }
            if r + 1 < rows || rows > 2 {
                edges.push((p, ((r + 1) % rows) * cols + c, rng.random_range(0.05..2.0)));
            }
        }
    }
    edges
}

/// Seeds every node with probability 0.35; retries until all three classes
/// and at least one free node are present.
fn random_seeds(dim: (usize, usize), rng: &mut ChaCha8Rng) -> SeedMask {
    loop {
        let grid = Array2::from_shape_fn(dim, |_| {
            rng.random_bool(0.35).then(|| Tissue::ALL[rng.random_range(0..3)])
        });
        let mask = SeedMask::new(grid);
        let free = mask.iter().any(|s| s.is_none());
        if free && Tissue::ALL.iter().all(|&t| mask.count(t) > 0) {
            return mask;
        }
    }
}

/// Dense direct solve of `L_U x = −L_UM m` per class, built straight from the edge list.
fn dense_oracle(n: usize, edges: &[(usize, usize, f64)], seeds: &SeedMask) -> [Vec<f64>; 3] {
    let mut l = DMatrix::<f64>::zeros(n, n);
    for &(p, q, w) in edges {
        l[(p, p)] += w;
        l[(q, q)] += w;
        l[(p, q)] -= w;
        l[(q, p)] -= w;
    }
    let free: Vec<usize> = (0..n).filter(|&i| seeds.get_flat(i).is_none()).collect();
    let marked: Vec<usize> = (0..n).filter(|&i| seeds.get_flat(i).is_some()).collect();
    let l_u = DMatrix::from_fn(free.len(), free.len(), |i, j| l[(free[i], free[j])]);
    let lu = l_u.lu();
    Tissue::ALL.map(|t| {
        let rhs = DVector::from_fn(free.len(), |i, _| {
            -marked
                .iter()
                .map(|&m| l[(free[i], m)] * f64::from(u8::from(seeds.get_flat(m) == Some(t))))
                .sum::<f64>()
        });
        let x = lu.solve(&rhs).expect("reduced Laplacian is nonsingular");
        let mut full: Vec<f64> = (0..n)
            .map(|i| seeds.get_flat(i).map_or(0.0, |s| f64::from(u8::from(s == t))))
            .collect();
        for (k, &i) in free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    })
}

// ------------------------------------------------------------- criteria

fn criterion_1() -> Check {
    let params = WalkerParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (rows, cols) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let edges = random_lattice(rows, cols, &mut rng);
        let seeds = random_seeds((rows, cols), &mut rng);
        let graph = core(LatticeGraph::from_edges(rows * cols, edges.clone()))?;
        let lap = core(assemble_laplacian(&graph, &seeds))?;
        let probs = core(solve_labels(&lap, &seeds, &params))?;
        let oracle = dense_oracle(rows * cols, &edges, &seeds);
        for (k, map) in probs.maps().iter().enumerate() {
            for (i, v) in map.iter().enumerate() {
                worst = worst.max((v - oracle[k][i]).abs());
            }
        }
    }
    ensure(worst <= 1e-8, || format!("CG vs dense max-norm {worst:e} > 1e-8"))?;

    // fixed 4×4 lattice against a million simulated walks per free node
    let (rows, cols) = (4, 4);
    let edges: Vec<(usize, usize, f64)> = random_lattice(rows, cols, &mut ChaCha8Rng::seed_from_u64(4))
        .into_iter()
        .map(|(p, q, _)| (p, q, 0.25 + ((p * 7 + q * 3) % 5) as f64 / 2.0))
        .collect();
    let mut grid = Array2::from_elem((rows, cols), None);
    grid[(0, 0)] = Some(Tissue::Lumen);
    grid[(2, 2)] = Some(Tissue::Media);
    grid[(1, 3)] = Some(Tissue::Externa);
    grid[(3, 0)] = Some(Tissue::Externa);
    let seeds = SeedMask::new(grid);
    let graph = core(LatticeGraph::from_edges(rows * cols, edges.clone()))?;
    let probs = core(solve_labels(&core(assemble_laplacian(&graph, &seeds))?, &seeds, &params))?;

    let mut neighbours = vec![Vec::new(); rows * cols];
    for &(p, q, w) in &edges {
        neighbours[p].push((q, w));
        neighbours[q].push((p, w));
    }
    const WALKS: usize = 1_000_000;
    let mc_worst = (0..rows * cols)
        .into_par_iter()
        .filter(|&start| seeds.get_flat(start).is_none())
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + start as u64);
            let mut hits = [0usize; 3];
            for _ in 0..WALKS {
                let mut at = start;
                let tissue = loop {
                    if let Some(t) = seeds.get_flat(at) {
                        break t;
                    }
                    let total: f64 = neighbours[at].iter().map(|n| n.1).sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut next = neighbours[at][neighbours[at].len() - 1].0;
                    for &(q, w) in &neighbours[at] {
                        if u < w {
                            next = q;
                            break;
                        }
                        u -= w;
                    }
                    at = next;
                };
                hits[tissue.index()] += 1;
            }
            let idx = (start / cols, start % cols);
            let cg = probs.at(idx);
            (0..3)
                .map(|k| (hits[k] as f64 / WALKS as f64 - cg[k]).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    ensure(mc_worst <= 0.01, || format!("Monte-Carlo deviation {mc_worst:.4} > 0.01"))?;
    Ok(format!("dense max-norm {worst:.1e}, Monte-Carlo max deviation {mc_worst:.4}"))
}

fn criterion_2() -> Check {
    let params = WalkerParams::default();
    let settings = params.cg_settings();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut row_sum, mut simplex, mut residual, mut scaling) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(4..=40);
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.random_range(0..i), i, rng.random_range(-3.0f64..3.0).exp()));
        }
        for _ in 0..rng.random_range(0..2 * n) {
            let (p, q) = (rng.random_range(0..n), rng.random_range(0..n));
            if p != q {
                edges.push((p, q, rng.random_range(-3.0f64..3.0).exp()));
            }
        }
        let graph = core(LatticeGraph::from_edges(n, edges))?;
        let l = graph.laplacian();
        for r in 0..n {
            let s: f64 = l.row(r).map(|(_, v)| v).sum();
            row_sum = row_sum.max(s.abs());
            for (c, v) in l.row(r) {
                ensure(l.get(c, r) == v, || format!("L[{r},{c}] = {v} but L[{c},{r}] = {}", l.get(c, r)))?;
            }
        }

        let seeds = random_seeds((1, n), &mut rng);
        let marked: Vec<bool> = seeds.iter().map(|s| s.is_some()).collect();
        let lap = core(SparseLaplacian::partition(&graph, &marked))?;
        let indicator = |t: Tissue| -> Vec<f64> {
            lap.marked()
                .iter()
                .map(|&m| f64::from(u8::from(seeds.get_flat(m) == Some(t))))
                .collect()
        };
        let solves = Tissue::ALL
            .iter()
            .map(|&t| core(lap.solve_dirichlet(&indicator(t), &settings)))
            .collect::<Result<Vec<_>, _>>()?;
        for ((a, b), c) in solves[0].iter().zip(&solves[1]).zip(&solves[2]) {
            simplex = simplex.max((a + b + c - 1.0).abs());
        }
        for x in &solves {
            residual = residual.max(harmonic_residual(&graph, x, &marked));
        }

        let factor = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled = core(graph.scaled(factor))?;
        let base = core(solve_labels(&core(assemble_laplacian(&graph, &seeds))?, &seeds, &params))?;
        let other = core(solve_labels(&core(assemble_laplacian(&scaled, &seeds))?, &seeds, &params))?;
        for k in 0..3 {
            for (a, b) in base.maps()[k].iter().zip(other.maps()[k].iter()) {
                scaling = scaling.max((a - b).abs());
            }
        }
    }
    ensure(row_sum <= 1e-12, || format!("Laplacian row sum {row_sum:e} > 1e-12"))?;
    ensure(simplex <= 1e-6, || format!("simplex error {simplex:e} > 1e-6"))?;
    ensure(residual < 1e-6, || format!("harmonic residual {residual:e} >= 1e-6"))?;
    ensure(scaling <= 1e-6, || format!("weight-scaling drift {scaling:e} > 1e-6"))?;
    Ok(format!(
        "row sums {row_sum:.1e}, simplex {simplex:.1e}, harmonic residual {residual:.1e}, scaling drift {scaling:.1e}"
    ))
}

fn criterion_3() -> Check {
    let mut report = Vec::new();
    for (k, &m) in [0.7, 1.0, 2.0, 3.0].iter().enumerate() {
        let omega = 0.5 + k as f64;
        let law = Gamma::new(m, omega / m).map_err(|e| e.to_string())?;
        let mut worst: (f64, f64) = (0.0, 0.0);
        for rep in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + 10 * k as u64 + rep);
            let samples: Vec<f64> = (0..100_000).map(|_| law.sample(&mut rng).sqrt()).collect();
            let est = core(estimate_nakagami(&samples))?;
            worst.0 = worst.0.max((est.m / m - 1.0).abs());
            worst.1 = worst.1.max((est.omega / omega - 1.0).abs());
        }
        ensure(worst.0 <= 0.05, || format!("m = {m}: relative error {:.4} > 5%", worst.0))?;
        ensure(worst.1 <= 0.03, || format!("m = {m}: Ω relative error {:.4} > 3%", worst.1))?;
        report.push(format!("m {m}: {:.2}%/{:.2}%", 100.0 * worst.0, 100.0 * worst.1));
    }
    for (k, &sigma) in [0.5, 1.0, 2.5].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(350 + k as u64);
        let envelope: Vec<f64> = (0..1_000_000)
            .map(|_| sigma * (-2.0 * (1.0 - rng.random::<f64>()).ln()).sqrt())
            .collect();
        let log_compressed: Vec<f64> = envelope.iter().map(|r| r.ln()).collect();
        let est = core(estimate_fisher_tippett(&log_compressed))?;
        let err = (est.sigma() / sigma - 1.0).abs();
        ensure(err <= 0.02, || format!("σ = {sigma}: relative error {err:.4} > 2%"))?;
        report.push(format!("σ {sigma}: {:.2}%", 100.0 * err));
    }
    Ok(report.join(", "))
}

fn criterion_4() -> Check {
    // α = 0 makes every radial edge on a constant scan line equal; γ decouples the lines
    let params = ConfidenceParams {
        alpha: 0.0,
        gamma: 60.0,
        ..Default::default()
    };
    let (lines, depth) = (12, 40);
    let frame = Array2::from_shape_fn((lines, depth), |(s, _)| 0.1 + 0.07 * s as f64);
    let conf = core(confidence_map(&core(PolarFrame::from_grid(frame))?, &params))?;
    let mut linear = 0.0f64;
    for ((_, d), v) in conf.values().indexed_iter() {
        linear = linear.max((v - (1.0 - d as f64 / (depth - 1) as f64)).abs());
    }
    ensure(linear <= 1e-6, || format!("constant scan lines deviate {linear:e} from the linear profile"))?;

    let defaults = ConfidenceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violation = 0.0f64;
    for _ in 0..100 {
        let (lines, depth) = (rng.random_range(8..=24), rng.random_range(16..=48));
        let grid = Array2::from_shape_fn((lines, depth), |_| rng.random::<f64>());
        let polar = core(PolarFrame::from_grid(grid))?;
        let conf = core(confidence_map(&polar, &defaults))?;
        let values = conf.values();
        for s in 0..lines {
            ensure(values[(s, 0)] == 1.0 && values[(s, depth - 1)] == 0.0, || {
                format!("boundary rows not exactly 1 and 0 on scan line {s}")
            })?;
        }
        let graph = core(confidence_lattice(&polar, &defaults))?;
        let mut neighbours = vec![Vec::new(); lines * depth];
        for &(p, q, _) in graph.edges() {
            neighbours[p].push(q);
            neighbours[q].push(p);
        }
        let flat: Vec<f64> = values.iter().copied().collect();
        for (p, nb) in neighbours.iter().enumerate() {
            let d = p % depth;
            if d == 0 || d == depth - 1 {
                continue;
            }
            let lo = nb.iter().map(|&q| flat[q]).fold(f64::INFINITY, f64::min);
            let hi = nb.iter().map(|&q| flat[q]).fold(f64::NEG_INFINITY, f64::max);
            violation = violation.max(lo - flat[p]).max(flat[p] - hi);
        }
    }
    ensure(violation <= 1e-6, || format!("maximum principle violated by {violation:e}"))?;
    Ok(format!("linear profile error {linear:.1e}, max-principle slack {:.1e}", violation.max(0.0)))
}

fn weighted_gini(set: &TrainingSet, feature: usize, threshold: f64) -> f64 {
    let mut sides = [[0usize; 3]; 2];
    for i in 0..set.len() {
        let side = usize::from(set.row(i)[feature] > threshold);
        sides[side][set.label(i).index()] += 1;
    }
    sides
        .iter()
        .map(|c| {
            let n: usize = c.iter().sum();
            if n == 0 {
                return 0.0;
            }
            let g = 1.0 - c.iter().map(|&k| (k as f64 / n as f64).powi(2)).sum::<f64>();
            n as f64 * g
        })
        .sum::<f64>()
        / set.len() as f64
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for round in 0..20 {
        let mut set = TrainingSet::new(3);
        let sizes = [rng.random_range(10..40), rng.random_range(10..40), rng.random_range(10..40)];
        for (c, &size) in sizes.iter().enumerate() {
            for _ in 0..size {
                let x0 = c as f64 + rng.random_range(0.0..0.8);
                core(set.push(&[rng.random::<f64>(), x0, rng.random::<f64>()], Tissue::ALL[c]))?;
            }
        }
        let config = ForestConfig {
            n_trees: 1,
            min_leaf: 1,
            bootstrap: false,
            feature_subset: FeatureSubset::All,
            ..Default::default()
        };
        let model = core(train_forest(&set, &config))?;
        let Node::Split { feature, threshold, .. } = model.trees()[0].nodes()[0] else {
            return Err(format!("round {round}: root is a leaf"));
        };
        let mut best = f64::INFINITY;
        for f in 0..3 {
            let mut values: Vec<f64> = (0..set.len()).map(|i| set.row(i)[f]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                best = best.min(weighted_gini(&set, f, 0.5 * (w[0] + w[1])));
            }
        }
        let got = weighted_gini(&set, feature, threshold);
        ensure((got - best).abs() <= 1e-12, || {
            format!("round {round}: root split impurity {got} but brute force finds {best}")
        })?;
        ensure(feature == 1, || format!("round {round}: root split on noise feature {feature}"))?;
        let fit = (0..set.len())
            .filter(|&i| {
                let p = model.predict(set.row(i));
                p[set.label(i).index()] == 1.0
            })
            .count();
        ensure(fit == set.len(), || format!("round {round}: separable data not fitted"))?;
    }

    // determinism across thread counts, on real pixel features
    let spec = PhantomSpec::concentric(64, 64, 18.0, 38.0);
    let phantom = core(generate_phantom(&spec))?;
    let schedule = core(WindowSchedule::parse("3x3,3x7,3x15"))?;
    let features = core(multiscale_features(&phantom.polar, &schedule, false))?;
    let conf = core(confidence_map(&phantom.polar, &ConfidenceParams::default()))?;
    let features = core(attach_confidence(features, &conf))?;
    let set = core(sample_training_pixels(&phantom.labels, &features, 200, 9))?;
    let config = ForestConfig {
        n_trees: 12,
        min_leaf: 5,
        rng_seed: 77,
        ..Default::default()
    };
    let train_with = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| core(train_forest(&set, &config).and_then(|m| m.to_json())))
    };
    let (a, b, c) = (train_with(1)?, train_with(4)?, train_with(4)?);
    ensure(a == b && b == c, || "forest JSON differs between runs".into())?;

    let model = core(ivus_core::forest::ForestModel::from_json(&a))?;
    let posterior = core(predict_posterior(&model, &features))?;
    let simplex = posterior.max_simplex_error();
    ensure(simplex <= 1e-9, || format!("posterior simplex error {simplex:e} > 1e-9"))?;
    Ok(format!("20 brute-force root splits matched, bit-identical models, simplex error {simplex:.1e}"))
}

struct PhantomRun {
    full: MetricReport,
    dense: MetricReport,
}

fn mean(report: &MetricReport, region: Region, metric: Metric) -> f64 {
    report.summary(region, metric).map_or(f64::NAN, |s| s.mean)
}

fn phantom_run() -> Result<PhantomRun, String> {
    let suite = core(phantom_suite(20, &SuiteVariation::default(), 2024))?;
    let corpus = suite
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (frame, labels) = p.to_cartesian(384, None)?;
            let name = format!("phantom_{i:03}");
            Ok(Sample { group: name.clone(), name, frame, labels })
        })
        .collect::<ivus_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        rng_seed: 1,
        ..Default::default()
    };
    let prepared = corpus
        .par_iter()
        .map(|s| prepare_frame(&s.frame, &config))
        .collect::<ivus_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let full = core(crossval_prepared(&corpus, &prepared, 2, &config))?;
    let dense_config = PipelineConfig {
        seeds: SeedPolicy { mode: SeedMode::DenseArgmax, ..config.seeds },
        ..config.clone()
    };
    let dense = core(crossval_prepared(&corpus, &prepared, 2, &dense_config))?;
    Ok(PhantomRun { full, dense })
}

fn criterion_6(run: &Result<PhantomRun, String>) -> Check {
    let report = &run.as_ref().map_err(Clone::clone)?.full;
    let (jl, je) = (mean(report, Region::Lumen, Metric::Jcc), mean(report, Region::Eel, Metric::Jcc));
    let (pl, pe) = (mean(report, Region::Lumen, Metric::Pad), mean(report, Region::Eel, Metric::Pad));
    let detail = format!("JCC lumen {jl:.4}, EEL {je:.4}; PAD lumen {pl:.4}, EEL {pe:.4}");
    ensure(jl >= 0.85 && je >= 0.80 && pl <= 0.15 && pe <= 0.15, || detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Verdict {
    let Some(root) = std::env::var_os("IVUS_DATASET_A") else {
        return Verdict::Skip("IVUS_DATASET_A not set".into());
    };
    let result = (|| -> Check {
        let config = PipelineConfig::default();
        let options = ivus_core::data::FrameOptions::default();
        let corpus = core(load_corpus(&root, &options))?;
        let report = core(crossval(&corpus, 10, &config))?;
        let (jl, je) = (mean(&report, Region::Lumen, Metric::Jcc), mean(&report, Region::Eel, Metric::Jcc));
        let detail = format!("{} frames, JCC lumen {jl:.3} (target 0.89), EEL {je:.3} (target 0.85)", corpus.len());
        ensure((jl - 0.89).abs() <= 0.08 && (je - 0.85).abs() <= 0.08, || detail.clone())?;
        Ok(detail)
    })();
    match result {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn criterion_8(run: &Result<PhantomRun, String>) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let full = (mean(&run.full, Region::Lumen, Metric::Jcc), mean(&run.full, Region::Eel, Metric::Jcc));
    let dense = (mean(&run.dense, Region::Lumen, Metric::Jcc), mean(&run.dense, Region::Eel, Metric::Jcc));
    let detail = format!(
        "lumen {:.4} (dense) vs {:.4} (walker), EEL {:.4} vs {:.4}",
        dense.0, full.0, dense.1, full.1
    );
    ensure(dense.0 < full.0 && dense.1 < full.1, || detail.clone())?;
    Ok(detail)
}

fn verdict(check: Check) -> Verdict {
    match check {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are harness flags this binary ignores
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, v: Verdict| {
        let secs = start.elapsed().as_secs_f64();
        let line = match v {
            Verdict::Pass(d) => format!("PASS criterion {n} ({name}): {d} [{secs:.1}s]"),
            Verdict::Fail(d) => {
                failed += 1;
                format!("FAIL criterion {n} ({name}): {d} [{secs:.1}s]")
            }
            Verdict::Skip(d) => format!("SKIP criterion {n} ({name}): {d}"),
        };
        println!("{line}");
    };

    let t = Instant::now();
    report(1, "walker oracle equivalence", t, verdict(criterion_1()));
    let t = Instant::now();
    report(2, "Laplacian invariants", t, verdict(criterion_2()));
    let t = Instant::now();
    report(3, "estimator consistency", t, verdict(criterion_3()));
    let t = Instant::now();
    report(4, "confidence analytic check", t, verdict(criterion_4()));
    let t = Instant::now();
    report(5, "forest correctness", t, verdict(criterion_5()));
    let t = Instant::now();
    let run = phantom_run();
    report(6, "phantom benchmark", t, verdict(criterion_6(&run)));
    let t = Instant::now();
    report(7, "dataset A reproduction", t, criterion_7());
    let t = Instant::now();
    report(8, "ablation ordering", t, verdict(criterion_8(&run)));

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

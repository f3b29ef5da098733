//! Acceptance criteria. Run with `cargo test --test acceptance`; optional
//! arguments select criteria by number (`-- 3 7`).

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use m3gp_core::baselines::{dt_fit, rf_fit, ForestConfig};
use m3gp_core::dataset::{self, largest_remainder, load_csv, mix_indices, synth, write_csv, SplitSpec};
use m3gp_core::engine::{evolve, mutate_add_dimension, prune_dimensions, Individual};
use m3gp_core::expr::{bundled_hyperfeatures, simplify, BinOp, Expr};
use m3gp_core::harness::{
    run_experiment, transfer_eval, DatasetEntry, ExperimentSpec, FeatureMode, HyperSource, Method,
};
use m3gp_core::mdclass::mahalanobis;
use m3gp_core::rng::seeded;
use m3gp_core::stats::{kruskal_wallis, kruskal_wallis_exact, ConfusionMatrix};
use m3gp_core::{Dataset, MdModel, RunConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn c1_mixing() -> Result<String, String> {
    let shares = largest_remainder(2000, &[4872, 3882]);
    ensure(shares == [1113, 887], format!("largest remainder gave {shares:?}"))?;
    // the same split when actually drawing rows from sources of those sizes
    let a = synth::blobs(2436, 2436, 2, 2.0, "A", 1);
    let b = synth::blobs(1941, 1941, 2, 2.0, "B", 2);
    let picked = mix_indices(&[a, b], 2000, &mut seeded(5)).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = picked.iter().map(Vec::len).collect();
    ensure(counts == [1113, 887], format!("mix drew {counts:?}"))?;
    Ok("1113/887".into())
}

fn c2_confusion() -> Result<String, String> {
    let classes = vec!["0".to_string(), "1".to_string()];
    let mut out = Vec::new();
    for (counts, want) in [
        ([[1858u64, 114], [433, 444]], 0.808),
        ([[1964, 345], [1302, 271]], 0.576),
    ] {
        let cm = ConfusionMatrix::from_counts(classes.clone(), counts.iter().map(|r| r.to_vec()).collect());
        let acc = cm.accuracy().map_err(|e| e.to_string())?;
        // trace over total, computed here independently
        let direct = (counts[0][0] + counts[1][1]) as f64 / counts.iter().flatten().sum::<u64>() as f64;
        ensure(acc == direct, format!("accuracy {acc} != {direct}"))?;
        ensure(
            (acc - want).abs() <= 0.0005,
            format!("accuracy {acc} not within 0.0005 of {want}"),
        )?;
        out.push(format!("{acc:.4}"));
    }
    Ok(out.join(", "))
}

fn c3_bundled_round_trip() -> Result<String, String> {
    let hfs = bundled_hyperfeatures();
    ensure(hfs.len() == 10, format!("{} formulas", hfs.len()))?;
    let mut rng = seeded(33);
    for _ in 0..1000 {
        let row: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        for h in &hfs {
            let s = simplify(h);
            let (a, b) = (h.evaluate(&row).unwrap(), s.evaluate(&row).unwrap());
            ensure(rel_close(a, b, 1e-9), format!("{h} -> {s}: {a} vs {b}"))?;
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = synth::burnt_area_sources(4).remove(2);
    let src = dir.path().join("m.csv");
    write_csv(&raw, &src, "class").map_err(|e| e.to_string())?;
    let loaded = load_csv(&src, "class", None).map_err(|e| e.to_string())?;
    ensure(loaded == raw, "csv round trip changed the data")?;
    let hyper = loaded.project(&hfs).map_err(|e| e.to_string())?;
    let out = dir.path().join("m_hyper.csv");
    write_csv(&hyper, &out, "class").map_err(|e| e.to_string())?;
    let back = load_csv(&out, "class", None).map_err(|e| e.to_string())?;
    ensure(
        back.arity() == 10 && back.n_rows() == raw.n_rows(),
        format!("hyper-dataset is {}x{}", back.n_rows(), back.arity()),
    )?;
    ensure(back.labels() == raw.labels(), "labels changed")?;
    for i in (0..raw.n_rows()).step_by(97) {
        let row = raw.row(i);
        for (j, h) in hfs.iter().enumerate() {
            ensure(
                back.columns()[j][i] == h.evaluate(&row).unwrap(),
                format!("HF{j} row {i}"),
            )?;
        }
    }
    Ok(format!("10 formulas, {}x10 hyper-dataset", back.n_rows()))
}

fn random_tree<R: Rng>(rng: &mut R, depth: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.3) {
        return match rng.random_range(0..4) {
            0 => Expr::Const([0.0, 1.0, 2.0, -1.5][rng.random_range(0..4)]),
            1 => Expr::Const(rng.random_range(-5.0..5.0)),
            _ => Expr::Feature(rng.random_range(0..7)),
        };
    }
    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][rng.random_range(0..4)];
    let lhs = random_tree(rng, depth - 1);
    // bias towards patterns the simplifier rewrites
    let rhs = if rng.random_bool(0.15) {
        lhs.clone()
    } else {
        random_tree(rng, depth - 1)
    };
    Expr::binary(op, lhs, rhs)
}

fn c4_simplify_soundness() -> Result<String, String> {
    let mut rng = seeded(44);
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..7).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let mut shrunk = 0;
    for t in 0..1000 {
        let e = random_tree(&mut rng, 6);
        let s = simplify(&e);
        ensure(simplify(&s) == s, format!("tree {t}: simplify not idempotent on {e}"))?;
        if s.size() < e.size() {
            shrunk += 1;
        }
        for row in &rows {
            let (a, b) = (e.evaluate(row).unwrap(), s.evaluate(row).unwrap());
            if a.is_finite() && b.is_finite() {
                ensure(rel_close(a, b, 1e-9), format!("tree {t}: {e} = {a}, {s} = {b}"))?;
            }
        }
    }
    Ok(format!("{shrunk}/1000 trees simplified"))
}

fn c5_pruning() -> Result<String, String> {
    let m = synth::burnt_area_sources(9).remove(2);
    let cfg = RunConfig {
        population_size: 100,
        generations: 15,
        ..RunConfig::default()
    };
    let mut checked = 0;
    for seed in 0..20u64 {
        let (train, _) = dataset::split(&m, &SplitSpec::new(1000, seed)).map_err(|e| e.to_string())?;
        let mut rng = seeded(100 + seed);
        let champion = evolve(&train, &cfg, &mut rng).map_err(|e| e.to_string())?;
        let mut padded = mutate_add_dimension(&champion, 6, train.arity(), &mut rng);
        padded = mutate_add_dimension(&padded, 6, train.arity(), &mut rng);
        for ind in [champion, padded] {
            let mut before = Individual::new(ind.dimensions().to_vec());
            let fb = before.evaluate(&train);
            let after = prune_dimensions(&before, &train).map_err(|e| e.to_string())?;
            let fa = after.fitness().ok_or("pruned individual has no fitness")?;
            ensure(fa >= fb, format!("seed {seed}: fitness {fb} -> {fa}"))?;
            ensure(
                after.dimensions().len() <= before.dimensions().len(),
                format!("seed {seed}: dimensions grew"),
            )?;
            checked += 1;
        }
    }
    Ok(format!("{checked} individuals"))
}

fn c6_md_oracle() -> Result<String, String> {
    let mut rng = seeded(66);
    let classes: Vec<String> = (0..4).map(|c| c.to_string()).collect();
    // one sample per class: every covariance falls back to the identity
    let points: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let model = MdModel::fit(&points, &[0, 1, 2, 3], &classes).map_err(|e| e.to_string())?;
    ensure(
        model.identity_fallback().iter().all(|&b| b),
        "expected identity covariances",
    )?;
    for i in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-8.0..8.0)).collect();
        let d2 = |c: &Vec<f64>| c.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best = 0;
        for c in 1..4 {
            if d2(&points[c]) < d2(&points[best]) {
                best = c;
            }
        }
        let got = model.predict(&x).map_err(|e| e.to_string())?;
        ensure(got == best, format!("instance {i}: md {got}, euclidean {best}"))?;
    }
    let one_d = vec![vec![-2.0], vec![0.0], vec![2.0], vec![98.0], vec![100.0], vec![102.0]];
    let m = MdModel::fit(&one_d, &[0, 0, 0, 1, 1, 1], &classes[..2]).map_err(|e| e.to_string())?;
    let d = m.distances(&[2.0]).map_err(|e| e.to_string())?[0];
    ensure(d == 1.0, format!("variance-4 distance {d}"))?;
    ensure(mahalanobis(&[2.0], &[0.0], &[0.25]).unwrap() == 1.0, "free mahalanobis")?;
    Ok("100/100 agree, d=1.0".into())
}

fn blob_fixture() -> (Dataset, Dataset) {
    let all = synth::blobs(2000, 2000, 7, 6.0, "blobs", 7);
    dataset::split(&all, &SplitSpec::new(2000, 70)).expect("valid split")
}

fn c7_end_to_end() -> Result<String, String> {
    let (train, test) = blob_fixture();
    let cfg = RunConfig::default();
    let mut accs = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..10u64 {
        let t = Instant::now();
        let champion = evolve(&train, &cfg, &mut seeded(seed)).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        let model = champion.to_model(&train).map_err(|e| e.to_string())?;
        accs.push(model.accuracy(&test).map_err(|e| e.to_string())?);
    }
    let med = m3gp_core::stats::median(&accs).unwrap();
    ensure(med >= 0.99, format!("median test accuracy {med}"))?;
    ensure(slowest <= Duration::from_secs(120), format!("slowest run {slowest:?}"))?;
    Ok(format!(
        "median test accuracy {:.4}, slowest run {:.1}s",
        med,
        slowest.as_secs_f64()
    ))
}

/// Exact permutation p of H, enumerating every labelling of the pooled
/// (distinct) values directly.
fn brute_force_p(groups: &[Vec<f64>]) -> f64 {
    let values: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = values.len();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let rank: Vec<f64> = values
        .iter()
        .map(|v| (sorted.iter().position(|s| s == v).unwrap() + 1) as f64)
        .collect();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let h = |sums: &[f64]| {
        let nf = n as f64;
        12.0 / (nf * (nf + 1.0)) * sums.iter().zip(&sizes).map(|(r, &k)| r * r / k as f64).sum::<f64>()
            - 3.0 * (nf + 1.0)
    };
    let mut observed_sums = vec![0.0; sizes.len()];
    let mut at = 0;
    for (g, &k) in sizes.iter().enumerate() {
        observed_sums[g] = rank[at..at + k].iter().sum();
        at += k;
    }
    let observed = h(&observed_sums);
    fn walk(i: usize, rank: &[f64], left: &mut [usize], sums: &mut [f64], visit: &mut dyn FnMut(&[f64])) {
        if i == rank.len() {
            visit(sums);
            return;
        }
        for g in 0..left.len() {
            if left[g] > 0 {
                left[g] -= 1;
                sums[g] += rank[i];
                walk(i + 1, rank, left, sums, visit);
                sums[g] -= rank[i];
                left[g] += 1;
            }
        }
    }
    let (mut hits, mut total) = (0u64, 0u64);
    let mut left = sizes.clone();
    walk(0, &rank, &mut left, &mut vec![0.0; sizes.len()], &mut |s| {
        total += 1;
        if h(s) >= observed - 1e-9 {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

/// Non-increasing size lists with at least two parts summing to `n`.
fn partitions(n: usize, max_part: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if n == 0 {
        if prefix.len() >= 2 {
            out.push(prefix.clone());
        }
        return;
    }
    for p in (1..=n.min(max_part)).rev() {
        prefix.push(p);
        partitions(n - p, p, prefix, out);
        prefix.pop();
    }
}

fn c8_kruskal_wallis() -> Result<String, String> {
    let v = kruskal_wallis(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).map_err(|e| e.to_string())?;
    let h_ok = (v.h - 27.0 / 7.0).abs() <= 0.001;
    let mut rng = seeded(88);
    let mut worst = (0.0f64, Vec::new(), 0.0, 0.0);
    let mut cases = 0;
    for n in 3..=12usize {
        let mut parts = Vec::new();
        partitions(n, n, &mut Vec::new(), &mut parts);
        for sizes in parts {
            let count: f64 = (1..=n).map(|i| i as f64).product::<f64>()
                / sizes
                    .iter()
                    .map(|&k| (1..=k).map(|i| i as f64).product::<f64>())
                    .product::<f64>();
            if count > 400_000.0 {
                continue;
            }
            for _ in 0..3 {
                let mut vals: Vec<f64> = (1..=n).map(|i| i as f64).collect();
                vals.shuffle(&mut rng);
                let mut groups = Vec::new();
                let mut at = 0;
                for &k in &sizes {
                    groups.push(vals[at..at + k].to_vec());
                    at += k;
                }
                let exact = kruskal_wallis_exact(&groups).map_err(|e| e.to_string())?;
                if sizes.len() <= 3 && count <= 50_000.0 {
                    let oracle = brute_force_p(&groups);
                    ensure(
                        (exact - oracle).abs() < 1e-12,
                        format!("exact p {exact} vs brute force {oracle} for {groups:?}"),
                    )?;
                }
                let approx = kruskal_wallis(&groups).map_err(|e| e.to_string())?.p_value;
                let diff = (approx - exact).abs();
                if diff > worst.0 {
                    worst = (diff, sizes.clone(), approx, exact);
                }
                cases += 1;
            }
        }
    }
    let detail = format!(
        "H={:.4}; {cases} configurations, worst |chi2 p - exact p| = {:.4} (sizes {:?}: {:.4} vs {:.4})",
        v.h, worst.0, worst.1, worst.2, worst.3
    );
    ensure(h_ok, format!("H = {}", v.h))?;
    if worst.0 <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_transfer() -> Result<String, String> {
    let class = |label: &str, count, mean: f64| synth::GaussianClass {
        label: label.into(),
        count,
        mean: vec![mean; 3],
        std_dev: vec![0.1; 3],
    };
    let cfg = RunConfig {
        population_size: 100,
        generations: 10,
        ..RunConfig::default()
    };
    let mut improved = 0;
    let mut min_offset = f64::INFINITY;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let source = synth::gaussian("S", &[class("0", 1000, 0.0), class("1", 1000, 1.0)], seed);
        // both classes drift by six standard deviations
        let target = synth::gaussian("T", &[class("0", 1000, 0.6), class("1", 1000, 1.6)], 1000 + seed);
        let champion = evolve(&source, &cfg, &mut seeded(seed)).map_err(|e| e.to_string())?;
        let model = champion.to_model(&source).map_err(|e| e.to_string())?;
        let shifted = MdModel::fit_dataset(model.hyperfeatures().to_vec(), &target).map_err(|e| e.to_string())?;
        for c in 0..2 {
            let d = mahalanobis(
                &shifted.centroids()[c],
                &model.centroids()[c],
                &model.inv_covariances()[c],
            )
            .unwrap();
            min_offset = min_offset.min(d);
        }
        let r = transfer_eval(&model, &target, 0.5, seed).map_err(|e| e.to_string())?;
        if r.after > r.before {
            improved += 1;
        }
        lines.push(format!("{:.3}->{:.3}", r.before, r.after));
    }
    ensure(
        min_offset >= 2.0,
        format!("hyper-space centroid offset only {min_offset:.2} sigma"),
    )?;
    ensure(
        improved >= 9,
        format!("after > before in {improved}/10: {}", lines.join(" ")),
    )?;
    Ok(format!(
        "after > before in {improved}/10 seeds, min offset {min_offset:.1} sigma, e.g. {}",
        lines[0]
    ))
}

fn write_sources(dir: &Path) -> Vec<DatasetEntry> {
    synth::burnt_area_sources(2024)
        .into_iter()
        .zip(["B", "C", "M"])
        .map(|(d, tag)| {
            let path = dir.join(format!("{tag}.csv"));
            write_csv(&d, &path, "class").expect("writable temp dir");
            DatasetEntry { tag: tag.into(), path }
        })
        .collect()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn c10_determinism() -> Result<String, String> {
    let data = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = ExperimentSpec::new(write_sources(data.path()), vec!["B".into(), "C".into(), "BCM".into()]);
    spec.runs = 5;
    spec.seed = 1234;
    spec.methods = vec![Method::M3gp, Method::Md, Method::Rf];
    spec.feature_mode = FeatureMode::Both;
    spec.hyper_source = HyperSource::Harvest {
        combination: "BCM".into(),
        top_k: 10,
    };
    let mut trees = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        spec.output_dir = Some(out.path().to_path_buf());
        run_experiment(&spec).map_err(|e| e.to_string())?;
        trees.push(read_tree(out.path()));
    }
    let names: Vec<&String> = trees[0].iter().map(|f| &f.0).collect();
    ensure(names.iter().any(|n| n.starts_with("champions")), "no champions written")?;
    ensure(trees[0] == trees[1], "outputs differ between executions")?;
    Ok(format!("{} files byte-identical", trees[0].len()))
}

fn c11_baselines() -> Result<String, String> {
    let mut fixtures = synth::burnt_area_sources(11);
    fixtures.push(synth::blobs(300, 300, 5, 0.5, "overlap", 3));
    let mut rng = seeded(111);
    let mut grid = std::collections::BTreeMap::new();
    for _ in 0..400 {
        let key = (
            rng.random_range(0..20),
            rng.random_range(0..20),
            rng.random_range(0..20),
        );
        grid.entry(key).or_insert_with(|| rng.random_range(0..3).to_string());
    }
    let rows: Vec<Vec<f64>> = grid
        .keys()
        .map(|&(a, b, c)| vec![a as f64, b as f64, c as f64])
        .collect();
    let labels: Vec<String> = grid.values().cloned().collect();
    fixtures.push(Dataset::from_rows(&rows, &labels, vec!["grid".into(); rows.len()]).unwrap());
    for d in &fixtures {
        let acc = dt_fit(d, None).and_then(|t| t.accuracy(d)).map_err(|e| e.to_string())?;
        ensure(
            acc == 1.0,
            format!("tree training accuracy {acc} on {}", d.provenance()[0]),
        )?;
    }
    let (train, test) = blob_fixture();
    let forest = rf_fit(&train, &ForestConfig::default(), 5).map_err(|e| e.to_string())?;
    let acc = forest.accuracy(&test).map_err(|e| e.to_string())?;
    ensure(acc >= 0.99, format!("forest test accuracy {acc}"))?;
    Ok(format!("DT 100% on {} fixtures, RF test {acc:.4}", fixtures.len()))
}

fn main() {
    let criteria: [(u32, &str, u64, Check); 11] = [
        (1, "mixing arithmetic", 1, c1_mixing),
        (2, "confusion arithmetic", 1, c2_confusion),
        (3, "bundled hyper-features round trip", 5, c3_bundled_round_trip),
        (4, "simplification soundness", 30, c4_simplify_soundness),
        (5, "pruning monotonicity", 600, c5_pruning),
        (6, "md classifier oracle", 5, c6_md_oracle),
        (7, "end-to-end evolution", 1200, c7_end_to_end),
        (8, "kruskal-wallis oracle", 120, c8_kruskal_wallis),
        (9, "transfer recalibration", 120, c9_transfer),
        (10, "determinism", 900, c10_determinism),
        (11, "baseline sanity", 120, c11_baselines),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let result = match result {
            Ok(d) if secs > budget as f64 => Err(format!("{d}; took {secs:.1}s, budget {budget}s")),
            r => r,
        };
        let (status, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {status} [{name}] ({secs:.1}s) {detail}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

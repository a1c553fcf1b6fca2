//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use annpso::dataset::{self, Column, NormalizationSpec};
use annpso::experiment::{self, paper_preset};
use annpso::metrics::{self, PairedSeries};
use annpso::pso::{self, PsoConfig};
use annpso::trainers::{self, SavedModel, TrainObjective};
use annpso::{NetworkSpec, ParameterVector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

fn random_objective(rng: &mut ChaCha8Rng, spec: &NetworkSpec, n: usize) -> TrainObjective {
    let row =
        |rng: &mut ChaCha8Rng, k: usize| (0..k).map(|_| rng.random_range(0.05..0.95)).collect();
    let inputs = (0..n).map(|_| row(rng, spec.input_size())).collect();
    let targets = (0..n).map(|_| row(rng, spec.output_size())).collect();
    TrainObjective::new(spec.clone(), inputs, targets).unwrap()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let spec = NetworkSpec::new(vec![2, 3, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let obj = random_objective(&mut rng, &spec, 5);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let values: Vec<f64> = (0..spec.parameter_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let p = ParameterVector::new(spec.clone(), values.clone()).unwrap();
        let analytic = trainers::backprop_gradient(&obj, &p).unwrap();
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = values.clone();
            let mut minus = values.clone();
            plus[i] += h;
            minus[i] -= h;
            let n = (obj.mse(&plus) - obj.mse(&minus)) / (2.0 * h);
            let scale = a.abs().max(n.abs());
            if scale > 0.0 {
                worst = worst.max((a - n).abs() / scale);
            }
        }
    }
    let detail = format!(
        "max rel err {worst:.2e} over 10 parameter draws in {:.2?}",
        start.elapsed()
    );
    ensure(worst < 1e-6, || detail.clone())?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(detail)
}

fn brute_rmse(a: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - p[i]) * (a[i] - p[i]);
    }
    (s / a.len() as f64).sqrt()
}

fn brute_mae(a: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - p[i]).abs();
    }
    s / a.len() as f64
}

fn brute_r_paper(a: &[f64], p: &[f64]) -> f64 {
    let (mut sse, mut saa) = (0.0, 0.0);
    for i in 0..a.len() {
        sse += (a[i] - p[i]) * (a[i] - p[i]);
        saa += a[i] * a[i];
    }
    let v = 1.0 - sse / saa;
    if v < 0.0 {
        0.0
    } else {
        v.sqrt()
    }
}

fn brute_pearson(a: &[f64], p: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mp = p.iter().sum::<f64>() / n;
    let (mut sap, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sap += (a[i] - ma) * (p[i] - mp);
        saa += (a[i] - ma) * (a[i] - ma);
        spp += (p[i] - mp) * (p[i] - mp);
    }
    sap / (saa * spp).sqrt()
}

fn metrics_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let rel = |x: f64, y: f64| {
        if x == y {
            0.0
        } else {
            (x - y).abs() / x.abs().max(y.abs())
        }
    };
    for case in 0..100 {
        let n = rng.random_range(1..=50);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..40.0)).collect();
        let p: Vec<f64> = a.iter().map(|v| v + rng.random_range(-5.0..5.0)).collect();
        let s = PairedSeries::new(&a, &p).unwrap();
        let mut errs = vec![
            rel(metrics::rmse(&s), brute_rmse(&a, &p)),
            rel(metrics::mae(&s), brute_mae(&a, &p)),
            rel(metrics::r_paper(&s).unwrap(), brute_r_paper(&a, &p)),
        ];
        if n >= 2 {
            errs.push(rel(metrics::r_pearson(&s).unwrap(), brute_pearson(&a, &p)));
        }
        let e = errs.iter().cloned().fold(0.0, f64::max);
        ensure(e <= 1e-12, || format!("case {case} (n={n}): rel err {e:e}"))?;
        worst = worst.max(e);
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "100 series, max rel err {worst:.2e} in {:.2?}",
        start.elapsed()
    ))
}

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn pso_sphere() -> Outcome {
    let start = Instant::now();
    let mut costs = Vec::new();
    for seed in 1..=5 {
        let c = PsoConfig::new(300, 221).with_seed(seed);
        costs.push(pso::optimize(&c, 47, &sphere).unwrap().best_cost);
    }
    let hits = costs.iter().filter(|&&c| c < 1e-2).count();
    let detail = format!(
        "{hits}/5 seeds below 1e-2, best costs [{}] in {:.2?}",
        costs
            .iter()
            .map(|c| format!("{c:.2e}"))
            .collect::<Vec<_>>()
            .join(", "),
        start.elapsed()
    );
    ensure(hits >= 4, || detail.clone())?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(detail)
}

fn check_invariants<C>(name: &str, config: &PsoConfig, dim: usize, cost: &C) -> Result<(), String>
where
    C: Fn(&[f64]) -> f64 + Sync,
{
    let mut state = pso::initialize_swarm(config, dim, cost).map_err(|e| e.to_string())?;
    let clamp_ok = |s: &pso::SwarmState| {
        s.particles
            .iter()
            .all(|p| p.velocity.iter().all(|v| v.abs() <= config.velocity_clamp))
    };
    ensure(clamp_ok(&state), || {
        format!("{name}: initial velocity exceeds clamp")
    })?;
    for _ in 0..config.max_iterations {
        state.step(config, cost);
        ensure(clamp_ok(&state), || {
            format!(
                "{name}: velocity exceeds clamp at iteration {}",
                state.iteration
            )
        })?;
    }
    let out = state.into_outcome();
    ensure(out.history.windows(2).all(|w| w[1].1 <= w[0].1), || {
        format!("{name}: best-cost history increases")
    })?;
    let expected = config.swarm_size * (config.max_iterations + 1);
    ensure(out.evaluations == expected, || {
        format!(
            "{name}: {} evaluations, expected {expected}",
            out.evaluations
        )
    })?;

    // The packaged driver must agree with the manual loop.
    let packaged = pso::optimize(config, dim, cost).map_err(|e| e.to_string())?;
    ensure(
        packaged.evaluations == expected && packaged.history == out.history,
        || format!("{name}: optimize() disagrees with manual stepping"),
    )
}

fn pso_invariants() -> Outcome {
    for seed in 0..3 {
        let c = PsoConfig::new(25, 40).with_seed(seed);
        check_invariants("sphere", &c, 10, &sphere)?;
    }
    let spec = NetworkSpec::new(vec![3, 6, 2, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let obj = random_objective(&mut rng, &spec, 20);
    for seed in 0..3 {
        let c = PsoConfig::new(30, 25).with_seed(seed);
        check_invariants("network", &c, spec.parameter_count(), &|p: &[f64]| {
            obj.cost(p)
        })?;
    }
    Ok("monotone history, exact evaluation counts, clamp respected on sphere and network".into())
}

fn table_ordering() -> Outcome {
    let start = Instant::now();
    let summary = experiment::run_repeated(&paper_preset(), 10).map_err(|e| e.to_string())?;
    let ann = summary.median_test_mean_rmse(0);
    let pso300 = summary.median_test_mean_rmse(3);
    let detail = format!(
        "median test mean-RMSE over 10 seeds: ANN {ann:.4}, ANN-PSO-300 {pso300:.4} in {:.2?}",
        start.elapsed()
    );
    ensure(pso300 <= ann, || detail.clone())?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(detail)
}

fn table_shape() -> Outcome {
    let result = experiment::run(&paper_preset()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().unwrap();
    experiment::emit_reports(&result, dir.path()).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    ensure(rows.len() == 4, || format!("{} model rows", rows.len()))?;
    ensure(rows.iter().all(|r| r.len() == header.len()), || {
        "ragged table".into()
    })?;
    for stage in ["train", "test"] {
        for metric in ["rmse", "r"] {
            for out in ["BS", "PL", "MOG"] {
                let col = format!("{stage}_{metric}_{out}");
                ensure(header.contains(&col.as_str()), || {
                    format!("missing column {col}")
                })?;
            }
        }
    }
    let methods: Vec<&str> = rows.iter().map(|r| r[1]).collect();
    ensure(methods == ["ANN", "ANN-PSO", "ANN-PSO", "ANN-PSO"], || {
        format!("methods {methods:?}")
    })?;
    Ok(format!(
        "4 rows x {} columns, train and test per-output rmse and r",
        header.len()
    ))
}

fn run_cli(out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_annpso"))
        .args(["--quiet", "--seed", "42", "--out-dir"])
        .arg(out)
        .args(["run", "--paper-preset"])
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("annpso exited with {status}"))
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_cli(a.path())?;
    run_cli(b.path())?;
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut other: Vec<String> = fs::read_dir(b.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    other.sort();
    ensure(names == other, || "different file sets".into())?;
    for n in &names {
        let same = fs::read(a.path().join(n)).unwrap() == fs::read(b.path().join(n)).unwrap();
        ensure(same, || format!("{n} differs"))?;
    }
    Ok(format!("{} files byte-identical", names.len()))
}

fn round_trips() -> Outcome {
    let result = {
        let mut c = paper_preset();
        c.models.truncate(2);
        if let experiment::ModelMethod::AnnPso(p) = &mut c.models[1].method {
            p.max_iterations = 10;
        }
        experiment::run(&c).map_err(|e| e.to_string())?
    };
    for i in 0..result.models.len() {
        let saved = result.saved_model(i).unwrap();
        let text = saved.to_text().unwrap();
        let back = SavedModel::from_text(&text).unwrap();
        ensure(back == saved && back.to_text().unwrap() == text, || {
            format!("model {} round trip", i + 1)
        })?;
    }

    let data = dataset::synthesize(42, dataset::DEFAULT_NOISE_SCALE).unwrap();
    let mut buf = Vec::new();
    data.write(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back = dataset::ingest_str(&text).unwrap();
    ensure(back.samples() == data.samples(), || {
        "dataset values changed".into()
    })?;
    let mut again = Vec::new();
    back.write(&mut again).unwrap();
    let again = String::from_utf8(again).unwrap();
    let strip = |t: &str| {
        t.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    ensure(strip(&again) == strip(&text), || {
        "dataset text changed".into()
    })?;

    let norm = NormalizationSpec::fit(data.samples()).unwrap();
    let mut worst = 0.0f64;
    for s in data.samples() {
        for col in Column::ALL {
            let x = s.get(col);
            let y = norm.denormalize(col, norm.normalize(col, x));
            worst = worst.max((y - x).abs() / x.abs().max(f64::MIN_POSITIVE));
        }
    }
    ensure(worst <= 1e-12, || {
        format!("normalization rel err {worst:e}")
    })?;
    Ok(format!(
        "models and dataset text exact, normalization max rel err {worst:.1e}"
    ))
}

fn split_arithmetic() -> Outcome {
    ensure(dataset::train_size(81, 0.7) == 57, || {
        "train_size(81, 0.7) != 57".into()
    })?;
    for seed in 0..20 {
        let s = dataset::split(81, 0.7, seed).map_err(|e| e.to_string())?;
        ensure(s.train.len() == 57 && s.test.len() == 24, || {
            format!("seed {seed}: {}/{}", s.train.len(), s.test.len())
        })?;
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        ensure(all == (0..81).collect::<Vec<_>>(), || {
            format!("seed {seed}: not a partition")
        })?;
    }
    Ok("57/24, disjoint and exhaustive over 20 seeds".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient oracle", gradient_oracle),
        ("metrics oracle", metrics_oracle),
        ("swarm on 47-d sphere", pso_sphere),
        ("swarm invariants", pso_invariants),
        ("swarm beats backprop (median of 10)", table_ordering),
        ("metrics table shape", table_shape),
        ("byte-identical reruns", determinism),
        ("round trips", round_trips),
        ("split arithmetic", split_arithmetic),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

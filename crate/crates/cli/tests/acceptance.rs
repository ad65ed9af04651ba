//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! asserted criterion fails.
//!
//! MNIST is read from `$MNIST_DIR`, falling back to `data/mnist` at the
//! workspace root (see `scripts/fetch_mnist.sh`).

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use ddrs_cli::pipeline::{run_pipeline, subsample, Method, PipelineOptions};
use ddrs_core::dataio::model_to_bytes;
use ddrs_core::sampling::sample_rows;
use ddrs_core::{
    cyclic_shift, derive_stream, encode_through, fit_layers, fit_model, fit_pca_codes, kmeans,
    load_idx_dataset, nmi, transform, write_embedding_csv, Centers, Dataset, KMeansOptions, Kernel,
    LayerModel, LayerParams, ModelConfig, Partition, Purpose, RngStream, SparseCode,
};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

type Outcome = Result<String, String>;

/// Fails the enclosing criterion with a formatted message.
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn mnist(split: &str) -> Result<Dataset, String> {
    let dir = mnist_dir();
    let images = dir.join(format!("{split}-images-idx3-ubyte"));
    let labels = dir.join(format!("{split}-labels-idx1-ubyte"));
    load_idx_dataset(&images, Some(&labels)).map_err(|e| {
        format!(
            "cannot load MNIST {split} from {} ({e}); run scripts/fetch_mnist.sh",
            dir.display()
        )
    })
}

const C1_SEED: u64 = 1;

fn criterion_1() -> Outcome {
    let train = subsample(&mnist("train")?, 10_000, C1_SEED, 0).map_err(|e| e.to_string())?;
    let test = subsample(&mnist("t10k")?, 2_000, C1_SEED, 1).map_err(|e| e.to_string())?;
    let labels =
        Partition::from_labels(test.labels().expect("labelled")).map_err(|e| e.to_string())?;
    let config = ModelConfig::default_for(train.n(), 10, C1_SEED);
    let opts = PipelineOptions {
        layers: config.layers,
        master_seed: C1_SEED,
        dims: vec![2, 5, 10],
        clusters: 10,
        runs: 10,
        baseline_only: false,
    };
    let t0 = Instant::now();
    let rows = run_pipeline(&train, &test, &labels, &opts).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let mut report = Vec::new();
    let mut failures = Vec::new();
    for &dim in &opts.dims {
        let get = |m| {
            rows.iter()
                .find(|r| r.method == m && r.dim == dim)
                .expect("row per method and dim")
                .nmi_mean
        };
        let (ddrs, pca) = (get(Method::Ddrs), get(Method::Pca));
        report.push(format!("dim {dim}: ddrs {ddrs:.4} vs pca {pca:.4}"));
        let ok = if dim == 10 { ddrs > pca } else { ddrs >= pca };
        if !ok {
            failures.push(dim);
        }
    }
    let text = format!("{}; {secs:.0}s", report.join(", "));
    ensure!(
        failures.is_empty(),
        "{text}; DDRS behind PCA at dims {failures:?}"
    );
    ensure!(secs <= 600.0, "{text}; over the 10 minute budget");
    Ok(text)
}

fn synthetic(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = derive_stream(seed, 0, 0, Purpose::Subsample);
    let centers = Array2::from_shape_fn((10, d), |_| rng.random::<f64>());
    let x = Array2::from_shape_fn((n, d), |(i, j)| {
        (centers[[i % 10, j]] + 0.3 * rng.random::<f64>()).min(1.0)
    });
    Dataset::new(x, None).expect("valid synthetic data")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_3() -> Outcome {
    let time_fit = |n: usize| {
        let data = synthetic(n, 200, 3);
        let config = ModelConfig::default_for(n, 10, 3);
        median(
            (0..5)
                .map(|_| {
                    let t0 = Instant::now();
                    fit_model(&data, &config).expect("fit succeeds");
                    t0.elapsed().as_secs_f64()
                })
                .collect(),
        )
    };
    let small = time_fit(4_000);
    let large = time_fit(8_000);
    let ratio = large / small;
    let text =
        format!("median fit 4000: {small:.2}s, 8000: {large:.2}s, ratio {ratio:.2} (limit 2.5)");
    ensure!(ratio <= 2.5, "{text}");
    Ok(text)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn model_and_embedding(data: &Dataset, config: &ModelConfig) -> (Vec<u8>, Vec<u8>) {
    let model = fit_model(data, config).expect("fit succeeds");
    let embedding = transform(&model, data).expect("transform succeeds");
    let mut csv = Vec::new();
    write_embedding_csv(&mut csv, embedding.view()).expect("in-memory write");
    (model_to_bytes(&model), csv)
}

fn criterion_4() -> Outcome {
    let many = std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .max(4);
    let data = synthetic(1_500, 64, 4);
    let layer = |k, r, kernel| LayerParams::new(24, k, 0.5, r, kernel).expect("valid layer");
    let configs = [
        ModelConfig {
            master_seed: 4,
            layers: vec![
                layer(40, 0.0, Kernel::Linear),
                layer(20, 0.0, Kernel::Linear),
            ],
            pca_dims: 8,
        },
        ModelConfig {
            master_seed: 5,
            layers: vec![
                layer(40, 0.5, Kernel::Euclidean),
                layer(20, 0.5, Kernel::Linear),
            ],
            pca_dims: 8,
        },
    ];
    for config in &configs {
        let one = in_pool(1, || model_and_embedding(&data, config));
        let wide = in_pool(many, || model_and_embedding(&data, config));
        ensure!(
            one.0 == wide.0,
            "model bytes differ between 1 and {many} threads (seed {})",
            config.master_seed
        );
        ensure!(
            one.1 == wide.1,
            "embedding CSV differs between 1 and {many} threads (seed {})",
            config.master_seed
        );
    }

    // The same through the binary, comparing files written by separate processes.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv_path = dir.path().join("data.csv");
    let mut text = String::new();
    for row in data.features().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(&csv_path, text).map_err(|e| e.to_string())?;
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string(&configs[1]).expect("config serializes"),
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in [1, many] {
        let model = dir.path().join(format!("model-{threads}.ddrs"));
        let embedding = dir.path().join(format!("embedding-{threads}.csv"));
        let run = |args: &[&str]| -> Result<(), String> {
            let status = Command::new(env!("CARGO_BIN_EXE_ddrs"))
                .args(args)
                .args(["--threads", &threads.to_string()])
                .stdout(std::process::Stdio::null())
                .stderr(std::process::Stdio::null())
                .status()
                .map_err(|e| e.to_string())?;
            ensure!(status.success(), "ddrs {} exited with {status}", args[0]);
            Ok(())
        };
        let (csv, cfg, m, e) = (
            csv_path.to_str().unwrap(),
            config_path.to_str().unwrap(),
            model.to_str().unwrap(),
            embedding.to_str().unwrap(),
        );
        run(&["train", "--config", cfg, "--data-csv", csv, "--model", m])?;
        run(&["transform", "--model", m, "--data-csv", csv, "--out", e])?;
        outputs.push((
            std::fs::read(&model).map_err(|e| e.to_string())?,
            std::fs::read(&embedding).map_err(|e| e.to_string())?,
        ));
    }
    ensure!(
        outputs[0].0 == outputs[1].0,
        "CLI model files differ between 1 and {many} threads"
    );
    ensure!(
        outputs[0].1 == outputs[1].1,
        "CLI embedding files differ between 1 and {many} threads"
    );
    Ok(format!(
        "2 configs in-process plus CLI train/transform: identical bytes at 1 and {many} threads"
    ))
}

/// Dense binary expansion of a code, built from the winner indices alone.
fn expand(code: &SparseCode) -> Array2<f64> {
    let (v, k) = code.layer_dims();
    let mut dense = Array2::zeros((code.n(), v * k));
    for i in 0..code.n() {
        for (b, &w) in code.row(i).iter().enumerate() {
            dense[[i, b * k + w as usize]] = 1.0;
        }
    }
    dense
}

/// Straightforward encoder: gather the selected coordinates, score every
/// center with an explicit loop, keep the first maximum.
fn naive_encode(layer: &LayerModel, input: ArrayView2<'_, f64>) -> Vec<u32> {
    let v = layer.clusterings().len();
    let mut out = vec![0u32; input.nrows() * v];
    for i in 0..input.nrows() {
        for (b, c) in layer.clusterings().iter().enumerate() {
            let w = c.centers().to_dense();
            let x: Vec<f64> = c
                .feature_indices()
                .iter()
                .map(|&f| input[[i, f as usize]])
                .collect();
            let mut best = (0usize, f64::NEG_INFINITY);
            for j in 0..w.ncols() {
                let score = if layer.is_bottom() && layer.params().kernel == Kernel::Euclidean {
                    -x.iter()
                        .enumerate()
                        .map(|(s, xs)| (xs - w[[s, j]]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                } else {
                    x.iter()
                        .enumerate()
                        .map(|(s, xs)| xs * w[[s, j]])
                        .sum::<f64>()
                };
                if j == 0 || score > best.1 {
                    best = (j, score);
                }
            }
            out[i * v + b] = best.0 as u32;
        }
    }
    out
}

fn random_layer(rng: &mut RngStream, n: usize, d_in: usize) -> LayerParams {
    let v = rng.random_range(1..=4);
    let k = rng.random_range(1..=8usize.min(n));
    let d_sub = rng.random_range(1..=d_in);
    // The smallest a with floor(a * d_in) == d_sub.
    let a = d_sub as f64 / d_in as f64;
    let r = [0.0, 0.5, 1.0][rng.random_range(0..3)];
    let kernel = if rng.random_bool(0.5) {
        Kernel::Linear
    } else {
        Kernel::Euclidean
    };
    LayerParams::new(v, k, a, r, kernel).expect("valid random layer")
}

fn criterion_5() -> Outcome {
    let mut rng = derive_stream(5, 0, 0, Purpose::Subsample);
    let mut compared = 0;
    for instance in 0..100u64 {
        let n = rng.random_range(2..=50);
        let d = rng.random_range(1..=16);
        let depth = rng.random_range(1..=2);
        // Multiples of 1/16 keep every score exact, so both encoders see
        // the same ties.
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..=32) as f64 / 16.0);
        let mut params = vec![random_layer(&mut rng, n, d)];
        if depth == 2 {
            let d_in = params[0].output_dim();
            params.push(random_layer(&mut rng, n, d_in));
        }
        let data = Dataset::new(x.clone(), None).map_err(|e| e.to_string())?;
        let stack = fit_layers(&data, &params, instance)
            .map_err(|e| format!("instance {instance}: {e}"))?;
        let mut input = x;
        let mut code = None;
        for (j, layer) in stack.layers.iter().enumerate() {
            let want = naive_encode(layer, input.view());
            let got =
                encode_through(&stack.layers[..=j], data.features()).map_err(|e| e.to_string())?;
            ensure!(
                got.indices() == want.as_slice(),
                "instance {instance}, layer {j}: winner indices differ"
            );
            let c = SparseCode::new(want, n, layer.clusterings().len(), layer.params().k)
                .map_err(|e| e.to_string())?;
            input = expand(&c);
            code = Some(c);
            compared += 1;
        }
        ensure!(
            code.as_ref() == Some(&stack.codes),
            "instance {instance}: training codes differ from the reference"
        );
    }
    Ok(format!(
        "100 instances, {compared} layers: winner indices identical"
    ))
}

fn pca_residual(codes: &SparseCode, m: usize) -> Result<(f64, f64), String> {
    let model = fit_pca_codes(codes, m).map_err(|e| e.to_string())?;
    let x = expand(codes);
    let mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (x.nrows() as f64 - 1.0);
    let p = model.projection();
    let gram = p.t().dot(p);
    let ortho = (&gram - &Array2::<f64>::eye(m))
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let mut residual = 0.0f64;
    for (j, &lambda) in model.eigenvalues().iter().enumerate() {
        let col = p.column(j);
        let r: Array1<f64> = cov.dot(&col) - lambda * &col;
        residual = residual.max(r.dot(&r).sqrt());
    }
    Ok((ortho, residual))
}

fn criterion_6() -> Outcome {
    let mut rng = derive_stream(6, 0, 0, Purpose::Subsample);

    // One-hot block structure.
    for instance in 0..30u64 {
        let n = rng.random_range(2..=80);
        let d = rng.random_range(1..=20);
        let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
        let data = Dataset::new(x, None).map_err(|e| e.to_string())?;
        let first = random_layer(&mut rng, n, d);
        let second = random_layer(&mut rng, n, first.output_dim());
        let stack = fit_layers(&data, &[first, second], instance).map_err(|e| e.to_string())?;
        let (v, k) = stack.codes.layer_dims();
        let dense = stack.codes.to_dense();
        for row in dense.rows() {
            ensure!(
                row.iter().all(|&b| b == 0.0 || b == 1.0),
                "code entries must be binary"
            );
            for block in 0..v {
                let ones = row
                    .iter()
                    .skip(block * k)
                    .take(k)
                    .filter(|&&b| b == 1.0)
                    .count();
                ensure!(
                    ones == 1,
                    "instance {instance}: block {block} has {ones} ones"
                );
            }
        }
    }

    // Cyclic shift: each row keeps its multiset; k shifts of the same rows are the identity.
    for trial in 0..200u64 {
        let d = rng.random_range(1..=12);
        let k = rng.random_range(1..=9);
        let w = Array2::from_shape_fn((d, k), |_| rng.random_range(0..5) as f64);
        let centers = Centers::Dense(w.clone());
        let r = rng.random::<f64>();
        let shifted = cyclic_shift(&mut derive_stream(trial, 0, 0, Purpose::Shift), &centers, r)
            .map_err(|e| e.to_string())?;
        let s = shifted.to_dense();
        for row in 0..d {
            let mut a: Vec<f64> = w.row(row).to_vec();
            let mut b: Vec<f64> = s.row(row).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            ensure!(a == b, "trial {trial}: row {row} lost its multiset");
        }
        let count = rng.random_range(0..=d);
        let rows = sample_rows(&mut rng, d, count).map_err(|e| e.to_string())?;
        let mut cycled = centers.clone();
        for _ in 0..k {
            cycled = cycled.rotate_rows(&rows);
        }
        ensure!(
            cycled == centers,
            "trial {trial}: {k} shifts are not the identity"
        );
    }

    // PCA on codes, both the dense and the iterative eigen-solver routes.
    let mut worst = (0.0f64, 0.0f64);
    for (n, v, k, m) in [(150, 6, 20, 5), (700, 12, 60, 10), (400, 30, 40, 8)] {
        let indices: Vec<u32> = (0..n * v).map(|_| rng.random_range(0..k as u32)).collect();
        let codes = SparseCode::new(indices, n, v, k).map_err(|e| e.to_string())?;
        let (ortho, residual) = pca_residual(&codes, m)?;
        ensure!(
            ortho <= 1e-8,
            "n={n} V={v} k={k}: orthonormality error {ortho:e}"
        );
        ensure!(
            residual <= 1e-6,
            "n={n} V={v} k={k}: eigen residual {residual:e}"
        );
        worst = (worst.0.max(ortho), worst.1.max(residual));
    }

    // NMI.
    for _ in 0..500 {
        let n = rng.random_range(1..=60);
        let c = rng.random_range(1..=6);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let p = Partition::new(a.clone(), c).map_err(|e| e.to_string())?;
        let q = Partition::new(b, c).map_err(|e| e.to_string())?;
        let pq = nmi(&p, &q).map_err(|e| e.to_string())?;
        ensure!(
            pq == nmi(&q, &p).map_err(|e| e.to_string())?,
            "NMI is not symmetric"
        );
        ensure!((0.0..=1.0).contains(&pq), "NMI {pq} outside [0, 1]");
        let relabeled =
            Partition::new(a.iter().map(|&x| c - 1 - x).collect(), c).map_err(|e| e.to_string())?;
        ensure!(
            (nmi(&relabeled, &q).map_err(|e| e.to_string())? - pq).abs() < 1e-12,
            "NMI changed under relabeling"
        );
        ensure!(
            nmi(&p, &p).map_err(|e| e.to_string())? == 1.0,
            "NMI of a partition with itself is not 1"
        );
    }

    // k-means inertia never increases.
    for trial in 0..50u64 {
        let n = rng.random_range(5..=120);
        let c = rng.random_range(1..=5.min(n));
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>());
        let r = kmeans(
            x.view(),
            c,
            &mut derive_stream(trial, 0, 0, Purpose::KMeans),
            KMeansOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        for w in r.inertia_history.windows(2) {
            ensure!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "trial {trial}: inertia rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }
    Ok(format!(
        "one-hot, cyclic shift, PCA (orthonormality {:.1e}, residual {:.1e}), NMI, k-means inertia",
        worst.0, worst.1
    ))
}

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    for (split, n) in [("train", 60_000), ("t10k", 10_000)] {
        let data = mnist(split)?;
        ensure!(
            data.n() == n && data.d() == 784,
            "{split}: n = {}, d = {}",
            data.n(),
            data.d()
        );
        let (lo, hi) = data
            .features()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        ensure!(lo >= 0.0 && hi <= 1.0, "{split}: values span [{lo}, {hi}]");
        ensure!(
            data.labels().map(|l| l.len()) == Some(n),
            "{split}: label count differs"
        );
        parts.push(format!(
            "{split} n={} d={} values in [{lo}, {hi}]",
            data.n(),
            data.d()
        ));
    }
    Ok(parts.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Option<fn() -> Outcome>); 7] = [
        (
            "1",
            "DDRS >= PCA NMI on MNIST (10k train, 2k test, dims 2/5/10, strict at 10)",
            Some(criterion_1),
        ),
        ("2", "absolute NMI curves and CPU hours at full scale", None),
        (
            "3",
            "fit time grows linearly in n (8000 vs 4000, <= 2.5x)",
            Some(criterion_3),
        ),
        (
            "4",
            "1-thread and many-thread runs are byte-identical",
            Some(criterion_4),
        ),
        (
            "5",
            "compact encoder matches the naive dense encoder",
            Some(criterion_5),
        ),
        ("6", "invariant suites", Some(criterion_6)),
        ("7", "IDX loader on MNIST train/test", Some(criterion_7)),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let Some(check) = check else {
            println!("N/A  [{id}] {name}: out of scope, not asserted");
            continue;
        };
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

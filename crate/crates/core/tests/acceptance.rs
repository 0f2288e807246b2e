//! Acceptance criteria 1-11, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the lines come out in order:
//! `cargo test --release --test acceptance` runs everything, and
//! `cargo test --test acceptance -- 1 7 11` only the listed criteria.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geognn::diffusion::SeriesDiffusion;
use geognn::experiments::config::config_hash;
use geognn::experiments::curve::{non_increasing, strictly_decreasing};
use geognn::experiments::oracle::Oracle;
use geognn::experiments::report::dense_le_sparse;
use geognn::experiments::sweep::metric;
use geognn::experiments::{
    classify_experiment, convergence_sweep, lipschitz_tradeoff, ClassifyConfig, ComparisonTable, ModelKind, RegressionConfig, SweepConfig,
};
use geognn::filterbank::{graph_filter_apply, graph_filter_apply_spectral, fdt_check, FilterCoeffs};
use geognn::geograph::{build_graph, GeoGraph, KernelConfig, KernelKind, PointCloud};
use geognn::gnn::{gnn_backward, gnn_convergence_error, gnn_forward, GnnArch, Nonlinearity, Penalty, Pooling};
use geognn::manifold::{sample_uniform, ManifoldKind, ManifoldModel, MnnOptions};
use geognn::spectral::{alpha_partition, eig_sym, heat_apply};

type Outcome = (bool, String);

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> GeoGraph {
    let kind = [ManifoldKind::Circle, ManifoldKind::Sphere, ManifoldKind::FlatTorus][rng.random_range(0..3)];
    let m = ManifoldModel::new(kind);
    let cloud = sample_uniform(&m, n, rng.random()).unwrap();
    let cfg = if rng.random_bool(0.5) {
        KernelConfig::new(KernelKind::DenseGaussian, rng.random_range(0.1..1.0), m.intrinsic_dim())
    } else {
        KernelConfig::new(KernelKind::SparseCompact, rng.random_range(0.2..1.5), m.intrinsic_dim())
    };
    build_graph(&cloud, &cfg).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=50);
        let g = random_graph(&mut rng, n);
        let taps: Vec<f64> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = FilterCoeffs::with_step(taps, rng.random_range(0.1..2.0)).unwrap();
        let x = random_vec(&mut rng, n);
        let diffusion = graph_filter_apply(&h, &g, &x).unwrap();
        let spectral = graph_filter_apply_spectral(&h, &eig_sym(&g, n).unwrap(), &x).unwrap();
        worst = worst.max(rel(&diffusion, &spectral));
    }
    (worst <= 1e-8, format!("max rel. diff {worst:.2e} over 50 graphs (<= 1e-8)"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut identity = 0.0f64;
    for _ in 0..30 {
        let n = rng.random_range(2..=30);
        let g = random_graph(&mut rng, n);
        let (s, t) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let x = random_vec(&mut rng, n);
        let two = heat_apply(&g, s, &heat_apply(&g, t, &x).unwrap()).unwrap();
        let one = heat_apply(&g, s + t, &x).unwrap();
        worst = worst.max(rel(&two, &one));
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            identity = identity.max((heat_apply(&g, 0.0, &e).unwrap() - e).amax());
        }
    }
    (
        worst <= 1e-8 && identity <= 1e-12,
        format!("semigroup rel. diff {worst:.2e} (<= 1e-8), |exp(0 L) - I| {identity:.1e} (<= 1e-12)"),
    )
}

fn describe(s: &[(usize, f64)]) -> String {
    s.iter().map(|(n, v)| format!("{n}:{v:.3e}")).collect::<Vec<_>>().join(" ")
}

/// Default sweep cut down to what one criterion reads.
fn sweep(seeds: usize, kinds: &[KernelKind], eig: bool, arch: bool) -> (SweepConfig, geognn::experiments::ErrorCurve) {
    let mut cfg = SweepConfig::default_circle();
    cfg.seeds.truncate(seeds);
    cfg.kernels.retain(|k| kinds.contains(&k.kind));
    if !eig {
        cfg.eig_k = 0;
    }
    if !arch {
        cfg.arch = None;
    }
    let curve = convergence_sweep(&cfg, None).expect("sweep runs");
    (cfg, curve)
}

fn dense_label(cfg: &SweepConfig, kind: KernelKind) -> String {
    cfg.kernels.iter().zip(cfg.kernel_labels()).find(|(k, _)| k.kind == kind).unwrap().1
}

fn criterion_3() -> Outcome {
    let (cfg, curve) = &sweep(5, &[KernelKind::DenseGaussian], true, false);
    let d = dense_label(cfg, KernelKind::DenseGaussian);
    let eval = curve.median_series(&d, metric::EVAL_ERR);
    let efun = curve.median_series(&d, metric::EFUN_ERR);
    let ok = cfg.seeds.len() >= 5
        && eval.len() == 4
        && strictly_decreasing(&eval)
        && strictly_decreasing(&efun)
        && curve.failures.is_empty();
    (ok, format!("{} seeds; eval_err {}; efun_err {}", cfg.seeds.len(), describe(&eval), describe(&efun)))
}

fn criterion_4() -> Outcome {
    let (cfg, curve) = &sweep(5, &[KernelKind::DenseGaussian, KernelKind::SparseCompact], false, false);
    let d = dense_label(cfg, KernelKind::DenseGaussian);
    let s = dense_label(cfg, KernelKind::SparseCompact);
    let dense = curve.median_series(&d, metric::FILTER_ERR);
    let sparse = curve.median_series(&s, metric::FILTER_ERR);
    let soft = dense_le_sparse(&ComparisonTable::from_curve(curve), &d, &s);
    let warn = soft.warnings();
    let ok = cfg.seeds.len() >= 5 && dense.len() == 4 && strictly_decreasing(&dense) && soft.passed();
    (
        ok,
        format!(
            "{} seeds; dense {}; sparse {}; dense <= sparse misses at n = {warn:?}{}",
            cfg.seeds.len(),
            describe(&dense),
            describe(&sparse),
            if warn.is_empty() { "" } else { " (warning)" }
        ),
    )
}

fn criterion_5() -> Outcome {
    let (cfg, curve) = &sweep(9, &[KernelKind::DenseGaussian], false, true);
    let d = dense_label(cfg, KernelKind::DenseGaussian);
    let gnn = curve.median_series(&d, metric::GNN_ERR);
    let arch = cfg.arch.as_ref().expect("default sweep has an arch");
    let shape_ok = arch.widths == [1, 2, 1] && arch.nonlinearity == Nonlinearity::Relu;

    // The single-filter, identity-sigma network must reproduce the sweep's
    // filter metric on the very same graphs.
    let m = cfg.model();
    let h = cfg.filter.coeffs().unwrap();
    let single = GnnArch::single_filter(&h, Nonlinearity::Identity);
    let f = cfg.signal.signal(&m, cfg.truncation).unwrap();
    let opts = MnnOptions::new(cfg.truncation, cfg.quadrature.unwrap_or(2048));
    let spec = cfg.kernels.iter().find(|k| k.kind == KernelKind::DenseGaussian).unwrap();
    let mut worst = 0.0f64;
    for &n in &cfg.n {
        for &seed in cfg.seeds.iter().take(2) {
            let cloud = sample_uniform(&m, n, seed).unwrap();
            let g = build_graph(&cloud, &spec.kernel(&m).resolve(n).unwrap()).unwrap();
            let a = gnn_convergence_error(&single, &g, &[f.clone()], &m, opts, false).unwrap().error;
            let row = curve
                .rows
                .iter()
                .find(|r| r.n == n && r.seed == seed && r.kernel == d && r.metric == metric::FILTER_ERR)
                .unwrap();
            worst = worst.max((a - row.value).abs());
        }
    }
    let ok = shape_ok && cfg.seeds.len() == 9 && gnn.len() == 4 && strictly_decreasing(&gnn) && worst <= 1e-10;
    (ok, format!("{} seeds; gnn_err {}; identity-sigma reduction diff {worst:.1e} (<= 1e-10)", cfg.seeds.len(), describe(&gnn)))
}

fn criterion_6() -> Outcome {
    let cfg = RegressionConfig::default();
    let rep = lipschitz_tradeoff(&cfg, None).expect("trade-off runs");
    let kernel = cfg.kernel.label();
    let med = rep.medians_at(&kernel, 1000);
    let penalties: Vec<f64> = rep.models.iter().map(|m| m.0).collect();
    let ok = penalties == [0.0, 0.3, 1.0, 3.0] && cfg.eval_n.contains(&1000) && non_increasing(&med);
    let pairs: Vec<String> = penalties.iter().zip(&med).map(|(c, e)| format!("{c}:{e:.3e}")).collect();
    (ok, format!("median error at n=1000 by C_L {}", pairs.join(" ")))
}

fn loss_and_grad(arch: &GnnArch, g: &GeoGraph, x: &DMatrix<f64>, w: &DMatrix<f64>, pen: &Penalty) -> (f64, Vec<f64>) {
    let cache = gnn_forward(arch, g, x).unwrap();
    let data = cache.output().component_mul(w).sum();
    let diff = SeriesDiffusion::new(g, arch.step());
    let grads = gnn_backward(arch, &diff, &cache, w, Some(pen)).unwrap();
    (data + pen.eval(arch).0, grads.flatten())
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = ManifoldModel::sphere();
    let cloud = sample_uniform(&m, 12, 7).unwrap();
    let g = build_graph(&cloud, &KernelConfig::new(KernelKind::DenseGaussian, 0.5, 2)).unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (sigma, pooling) in [(Nonlinearity::Relu, Pooling::Mean), (Nonlinearity::Tanh, Pooling::None)] {
        let arch = GnnArch::random(vec![2, 3, 2], 3, sigma, rng.random())
            .unwrap()
            .with_step(0.7)
            .unwrap()
            .with_readout(2, pooling, rng.random())
            .unwrap();
        let x = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let rows = if pooling == Pooling::Mean { 1 } else { 12 };
        let w = DMatrix::from_fn(rows, 2, |_, _| rng.random_range(-1.0..1.0));
        let pen = Penalty { weight: 0.3, points: 17, lambda_max: g.norm_bound() };
        let (_, grad) = loss_and_grad(&arch, &g, &x, &w, &pen);
        let p = arch.params();
        let step = 1e-6;
        for i in 0..p.len() {
            let mut a = arch.clone();
            let mut v = p.clone();
            v[i] = p[i] + step;
            a.set_params(&v).unwrap();
            let up = loss_and_grad(&a, &g, &x, &w, &pen).0;
            v[i] = p[i] - step;
            a.set_params(&v).unwrap();
            let dn = loss_and_grad(&a, &g, &x, &w, &pen).0;
            let fd = (up - dn) / (2.0 * step);
            let r = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(r);
            count += 1;
        }
    }
    (worst <= 1e-4, format!("{count} parameters, max rel. error {worst:.2e} (<= 1e-4)"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(5..=40);
        let g = random_graph(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let cloud: &PointCloud = g.cloud();
        let gp = build_graph(&cloud.permuted(&perm).unwrap(), g.config()).unwrap();

        let h = FilterCoeffs::with_step(vec![0.3, -0.7, 1.1], 0.6).unwrap();
        let x = random_vec(&mut rng, n);
        let xp = DVector::from_fn(n, |i, _| x[perm[i]]);
        let y = graph_filter_apply(&h, &g, &x).unwrap();
        let yp = graph_filter_apply(&h, &gp, &xp).unwrap();
        for i in 0..n {
            worst = worst.max((yp[i] - y[perm[i]]).abs());
        }

        let arch = GnnArch::random(vec![2, 3, 2], 3, Nonlinearity::Relu, rng.random()).unwrap();
        let xm = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let xmp = DMatrix::from_fn(n, 2, |i, j| xm[(perm[i], j)]);
        let ym = gnn_forward(&arch, &g, &xm).unwrap();
        let ymp = gnn_forward(&arch, &gp, &xmp).unwrap();
        for i in 0..n {
            for j in 0..2 {
                worst = worst.max((ymp.output()[(i, j)] - ym.output()[(perm[i], j)]).abs());
            }
        }
    }
    (worst <= 1e-10, format!("20 cases, max deviation {worst:.1e} (<= 1e-10)"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let relu = Nonlinearity::Relu;
    let mut lipschitz = relu.apply(0.0) == 0.0;
    for _ in 0..100_000 {
        let scale = 10f64.powi(rng.random_range(-3..4));
        let (a, b) = (rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        lipschitz &= (relu.apply(a) - relu.apply(b)).abs() <= (a - b).abs();
    }

    let mut partition = true;
    for _ in 0..500 {
        let len = rng.random_range(1..=15);
        let mut vals: Vec<f64> = (0..len).map(|_| (rng.random_range(0.0..20.0) * 4.0f64).round() / 4.0).collect();
        vals.sort_by(f64::total_cmp);
        let alpha = rng.random_range(0.1..3.0);
        let p = alpha_partition(&vals, alpha).unwrap();
        let covered: usize = p.groups.iter().map(|r| r.len()).sum();
        partition &= covered == len;
        for i in 0..len {
            for j in 0..len {
                let (gi, gj) = (p.group_of(i).unwrap(), p.group_of(j).unwrap());
                if gi != gj {
                    partition &= (vals[i] - vals[j]).abs() > alpha;
                }
            }
        }
        // Groups are maximal: consecutive members are at most alpha apart.
        for r in &p.groups {
            partition &= vals[r.clone()].windows(2).all(|w| w[1] - w[0] <= alpha);
        }
    }

    let e1 = 1.0 - (-1f64).exp();
    let h01 = FilterCoeffs::new(vec![0.0, 1.0]).unwrap();
    let pair = [0.0, 1.0];
    let fail = fdt_check(&h01, &pair, &alpha_partition(&pair, 2.0).unwrap(), 0.5).unwrap();
    let equal = [4.0, 4.0];
    let pass = fdt_check(&h01, &equal, &alpha_partition(&equal, 1.0).unwrap(), 0.1).unwrap();
    let spec = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0];
    let constant = fdt_check(&FilterCoeffs::new(vec![2.5]).unwrap(), &spec, &alpha_partition(&spec, 2.0).unwrap(), 1e-9).unwrap();
    let fdt = !fail.pass
        && (fail.gamma_k[0] - e1).abs() < 1e-15
        && pass.pass
        && pass.gamma_k == [0.0]
        && constant.pass
        && constant.gamma_k.iter().all(|&g| g == 0.0);

    (
        lipschitz && partition && fdt,
        format!("relu 1-Lipschitz on 1e5 pairs: {lipschitz}; partition quantifier on 500 lists: {partition}; fdt hand cases: {fdt}"),
    )
}

fn criterion_10() -> Outcome {
    let cfg = ClassifyConfig::default();
    let Some(fixture) = Oracle::bundled().classify else {
        return (false, "no classification fixture committed".into());
    };
    let hash = config_hash(&cfg);
    if fixture.config_hash != hash {
        return (false, format!("fixture hash {} does not match config hash {hash}", fixture.config_hash));
    }
    let (rep, _) = classify_experiment(&cfg, None).expect("classification runs");
    let checks = fixture.check(&rep);
    let hard_ok = checks.iter().all(|c| c.passed || !c.hard);
    let med = |m, n| rep.median_accuracy(m, n).unwrap_or(f64::NAN);
    let setup_ok = cfg.per_class == 40 && cfg.n == 300 && cfg.train.epochs == 40 && cfg.transfer_n.contains(&1000);
    let soft: Vec<String> = checks.iter().filter(|c| !c.hard).map(|c| format!("{} {}", c.name, if c.passed { "holds" } else { "does not hold (warning)" })).collect();
    (
        hard_ok && setup_ok,
        format!(
            "gnn {:.3} at n=300 (threshold {}), {:.3} at n=1000; graph_filter {:.3}, lipschitz_gnn {:.3}; {}",
            med(ModelKind::Gnn, 300),
            fixture.threshold,
            med(ModelKind::Gnn, 1000),
            med(ModelKind::GraphFilter, 300),
            med(ModelKind::LipschitzGnn, 300),
            soft.join("; ")
        ),
    )
}

const SMALL_CONFIGS: [(&str, &str); 5] = [
    ("spectrum", "manifold = \"sphere\"\nn = 60\nseed = 4\n"),
    (
        "converge",
        "manifold = \"circle\"\nn = [60, 90]\nseeds = [0, 1, 2]\nquadrature = 256\n\n[[kernels]]\nkind = \"dense_gaussian\"\n\n[[kernels]]\nkind = \"sparse_compact\"\n\n[arch]\nwidths = [1, 2, 1]\ntaps = 3\nseed = 0\n",
    ),
    (
        "train",
        "n_train = 60\npenalty = [0.0, 1.0]\neval_n = [80]\neval_seeds = [0, 1]\nquadrature = 256\n\n[train]\nepochs = 3\n",
    ),
    (
        "transfer",
        "n_train = 60\ntransfer_n = [80, 120]\neval_seeds = [0, 1]\nquadrature = 256\n\n[train]\nepochs = 3\n",
    ),
    (
        "classify",
        "n = 60\nper_class = 4\ntest_per_class = 2\ntransfer_n = [80]\ninit_seeds = [0, 1]\n\n[train]\nepochs = 3\n",
    ),
];

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for (cmd, text) in SMALL_CONFIGS {
        let cfg = tmp.path().join(format!("{cmd}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let mut runs = Vec::new();
        for (run, jobs) in [("a", "1"), ("b", "2")] {
            let out = tmp.path().join(format!("{cmd}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_geognn"))
                .args([cmd, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--jobs", jobs])
                .output()
                .unwrap()
                .status;
            // Exit 2 only reports assertions on these toy configs.
            ok &= matches!(status.code(), Some(0) | Some(2));
            runs.push(csvs(&out));
        }
        let same = !runs[0].is_empty() && runs[0] == runs[1];
        ok &= same;
        notes.push(format!("{cmd}: {} CSVs {}", runs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    (ok, notes.join(", "))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "spectral oracle equivalence", criterion_1),
        (2, "heat semigroup", criterion_2),
        (3, "circle spectrum convergence", criterion_3),
        (4, "filter convergence", criterion_4),
        (5, "GNN convergence", criterion_5),
        (6, "Lipschitz trade-off", criterion_6),
        (7, "gradient correctness", criterion_7),
        (8, "permutation equivariance", criterion_8),
        (9, "unit suites", criterion_9),
        (10, "classification and transfer", criterion_10),
        (11, "CLI determinism", criterion_11),
    ];
    // libtest flags such as `--nocapture` may be passed through; only bare
    // numbers select criteria.
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        let secs = start.elapsed().as_secs_f64();
        let _ = writeln!(stdout, "criterion {id:>2} {}: {name} [{secs:.1} s] {detail}", if ok { "PASS" } else { "FAIL" });
        let _ = stdout.flush();
        if !ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        let _ = writeln!(stdout, "failed criteria: {failed:?}");
        std::process::exit(1);
    }
}


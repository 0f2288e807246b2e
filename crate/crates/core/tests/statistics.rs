//! Monte-Carlo and trend checks against analytic references.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use geognn::diffusion::SpectralDiffusion;
use geognn::experiments::KernelSpec;
use geognn::geograph::{build_graph, interpolate, GeoGraph, KernelConfig, KernelKind};
use geognn::gnn::{gnn_backward, gnn_convergence_error, gnn_forward, GnnArch, Nonlinearity};
use geognn::manifold::{manifold_norm, sample_signal, sample_uniform, ManifoldModel, ManifoldSignal, MnnOptions};
use geognn::spectral::{align_spectra, eig_sym};

const GRID: [usize; 2] = [250, 1000];

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn dense_graph(m: &ManifoldModel, n: usize, seed: u64) -> GeoGraph {
    let cloud = sample_uniform(m, n, seed).unwrap();
    build_graph(&cloud, &KernelSpec::dense().kernel(m).resolve(n).unwrap()).unwrap()
}

/// Pearson statistic of `counts` against equal cell probabilities, tested at 5%.
fn uniform_at_five_percent(counts: &[usize]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.95);
    (stat, critical)
}

fn bin(angle: f64, bins: usize) -> usize {
    let t = angle.rem_euclid(2.0 * PI) / (2.0 * PI);
    ((t * bins as f64) as usize).min(bins - 1)
}

#[test]
fn circle_samples_are_centred() {
    for seed in 0..3 {
        let cloud = sample_uniform(&ManifoldModel::circle(), 10_000, seed).unwrap();
        for c in 0..2 {
            let mean = cloud.points().map(|p| p[c]).sum::<f64>() / 1e4;
            assert!(mean.abs() < 0.05, "seed {seed} coordinate {c}: mean {mean}");
        }
        assert!(cloud.points().all(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12));
    }
}

#[test]
fn sphere_samples_are_unit_and_uniform() {
    let cloud = sample_uniform(&ManifoldModel::sphere(), 10_000, 0).unwrap();
    assert!(cloud.points().all(|p| ((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() < 1e-12));
    // Bands of equal height in z have equal area, as do equal azimuth sectors.
    let (bands, sectors) = (10, 8);
    let mut counts = vec![0; bands * sectors];
    for p in cloud.points() {
        let b = (((p[2] + 1.0) / 2.0 * bands as f64) as usize).min(bands - 1);
        counts[b * sectors + bin(p[1].atan2(p[0]), sectors)] += 1;
    }
    let (stat, critical) = uniform_at_five_percent(&counts);
    assert!(stat < critical, "chi2 {stat} >= {critical}");
}

#[test]
fn torus_angles_are_uniform() {
    let cloud = sample_uniform(&ManifoldModel::flat_torus(), 10_000, 0).unwrap();
    let bins = 8;
    let mut counts = vec![0; bins * bins];
    for p in cloud.points() {
        assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12 && (p[2] * p[2] + p[3] * p[3] - 1.0).abs() < 1e-12);
        counts[bin(p[1].atan2(p[0]), bins) * bins + bin(p[3].atan2(p[2]), bins)] += 1;
    }
    let (stat, critical) = uniform_at_five_percent(&counts);
    assert!(stat < critical, "chi2 {stat} >= {critical}");
}

#[test]
fn sparse_degree_is_logarithmic_at_pilot_size() {
    // Bounds fitted on seeds 0..10, where avg_degree / ln n spans 2.78..2.89.
    let (c1, c2) = (2.5, 3.2);
    let m = ManifoldModel::circle();
    let n = 500;
    let ln = (n as f64).ln();
    for seed in 0..10 {
        let cloud = sample_uniform(&m, n, seed).unwrap();
        let g = build_graph(&cloud, &KernelSpec::sparse().kernel(&m).resolve(n).unwrap()).unwrap();
        let d = g.avg_degree();
        assert!(c1 * ln <= d && d <= c2 * ln, "seed {seed}: degree {d}, ln n = {ln}");
    }
}

#[test]
fn interpolation_error_shrinks_with_n() {
    let m = ManifoldModel::circle();
    let f = ManifoldSignal::eigenfunction(&m, 2).unwrap();
    let err = |n: usize, seed: u64| {
        let cloud = sample_uniform(&m, n, seed).unwrap();
        let interp = interpolate(&sample_signal(&f, &cloud), &cloud).unwrap();
        let g = f.clone();
        let diff = ManifoldSignal::from_fn(move |x| interp.eval(x) - g.eval(x));
        manifold_norm(&diff, &m, 4096).unwrap()
    };
    let small = median((0..5).map(|s| err(500, s)).collect());
    let large = median((0..5).map(|s| err(2000, s)).collect());
    assert!(large < small, "n=2000 error {large} vs n=500 {small}");
}

/// Errors at machine precision on both sides, e.g. the constant mode, count as a tie.
fn shrinks(fine: f64, coarse: f64) -> bool {
    fine < coarse || fine.max(coarse) < 1e-10
}

#[test]
fn circle_eigenvalues_approach_squares() {
    let m = ManifoldModel::circle();
    let exact = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0];
    let errs: Vec<Vec<Vec<f64>>> = GRID
        .iter()
        .map(|&n| {
            (0..5)
                .map(|seed| {
                    let spec = eig_sym(&dense_graph(&m, n, seed), 6).unwrap();
                    spec.values().iter().zip(exact).map(|(a, b)| (a - b).abs()).collect()
                })
                .collect()
        })
        .collect();
    for i in 0..exact.len() {
        let med: Vec<f64> = errs.iter().map(|e| median(e.iter().map(|v| v[i]).collect())).collect();
        assert!(shrinks(med[1], med[0]), "lambda_{}: n=1000 error {} vs n=250 {}", i + 1, med[1], med[0]);
    }
}

#[test]
fn alignment_errors_shrink_with_n() {
    let m = ManifoldModel::circle();
    let k = 5;
    let reports: Vec<Vec<_>> = GRID
        .iter()
        .map(|&n| {
            (0..5)
                .map(|seed| {
                    let g = dense_graph(&m, n, seed);
                    align_spectra(&eig_sym(&g, k + 2).unwrap(), &g, &m, k).unwrap()
                })
                .collect()
        })
        .collect();
    for i in 0..k {
        for (name, pick) in [
            ("eval_err", (|r: &geognn::spectral::AlignmentReport, i: usize| r.eval_err[i]) as fn(&_, usize) -> f64),
            ("efun_err", |r, i| r.efun_err[i]),
            ("op_err", |r, i| r.op_err[i]),
        ] {
            let med: Vec<f64> = reports.iter().map(|rs| median(rs.iter().map(|r| pick(r, i)).collect())).collect();
            assert!(shrinks(med[1], med[0]), "{name}[{}]: n=1000 {} vs n=250 {}", i + 1, med[1], med[0]);
        }
    }
}

#[test]
fn linear_filter_gradient_matches_least_squares() {
    let m = ManifoldModel::sphere();
    let n = 40;
    let cloud = sample_uniform(&m, n, 3).unwrap();
    let g = build_graph(&cloud, &KernelConfig::new(KernelKind::DenseGaussian, 0.3, 2)).unwrap();
    let (taps, step) = (4, 0.6);
    let arch = GnnArch::random(vec![1, 1], taps, Nonlinearity::Identity, 11).unwrap().with_step(step).unwrap();
    let x = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin() + 0.2);
    let z = DVector::from_fn(n, |i, _| (i as f64 * 0.11).cos());

    // Design matrix with columns exp(-k step L) x, from an independent eigendecomposition.
    let eig = SymmetricEigen::new(g.laplacian_dense());
    let coeffs = eig.eigenvectors.tr_mul(&x);
    let b = DMatrix::from_fn(n, taps, |i, k| {
        (0..n).map(|j| eig.eigenvectors[(i, j)] * (-(k as f64) * step * eig.eigenvalues[j]).exp() * coeffs[j]).sum()
    });
    let h = DVector::from_column_slice(arch.layer_coeffs(0));
    let residual = &b * &h - &z;
    let expected = b.tr_mul(&residual) * (2.0 / n as f64);

    let diff = SpectralDiffusion::new(&g, step).unwrap();
    let input = DMatrix::from_column_slice(n, 1, x.as_slice());
    let cache = gnn_forward(&arch, &g, &input).unwrap();
    let loss_grad = (cache.output() - DMatrix::from_column_slice(n, 1, z.as_slice())) * (2.0 / n as f64);
    let got = gnn_backward(&arch, &diff, &cache, &loss_grad, None).unwrap().flatten();
    let rel = (DVector::from_vec(got) - &expected).norm() / expected.norm();
    assert!(rel <= 1e-8, "relative error {rel}");
}

#[test]
fn gnn_error_is_insensitive_to_the_truncation() {
    let cfg = geognn::experiments::SweepConfig::default_circle();
    let m = cfg.model();
    let arch = cfg.arch.as_ref().unwrap().build().unwrap();
    let f = cfg.signal.signal(&m, cfg.truncation).unwrap();
    let g = dense_graph(&m, 500, 0);
    let quad = cfg.quadrature.unwrap();
    let at = |truncation| {
        let opts = MnnOptions { truncation, quadrature: quad };
        gnn_convergence_error(&arch, &g, &[f.clone()], &m, opts, false).unwrap().error
    };
    let (base, doubled) = (at(cfg.truncation), at(2 * cfg.truncation));
    let rel = (base - doubled).abs() / doubled;
    println!("gnn_err M={}: {base:e}, M={}: {doubled:e}, relative change {rel:e}", cfg.truncation, 2 * cfg.truncation);
    assert!(rel < 0.01, "relative change {rel}");
}

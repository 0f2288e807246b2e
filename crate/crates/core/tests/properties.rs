//! Property tests over random graphs, filters, spectra and networks.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use geognn::filterbank::{freq_response, graph_filter_apply, FilterCoeffs};
use geognn::geograph::{build_graph, graph_inner, interpolate, kernel_weight, GeoGraph, KernelConfig, KernelKind};
use geognn::gnn::{gnn_forward, GnnArch, Nonlinearity};
use geognn::manifold::{manifold_filter_apply, sample_uniform, ManifoldKind, ManifoldModel, ManifoldSignal};
use geognn::spectral::{alpha_partition, eig_sym, eigengap, fdt_decompose, heat_apply};

fn manifold() -> impl Strategy<Value = ManifoldModel> {
    prop_oneof![Just(ManifoldKind::Circle), Just(ManifoldKind::Sphere), Just(ManifoldKind::FlatTorus)]
        .prop_map(ManifoldModel::new)
}

fn kernel() -> impl Strategy<Value = (KernelKind, f64)> {
    prop_oneof![
        (0.05f64..1.0).prop_map(|e| (KernelKind::DenseGaussian, e)),
        (0.2f64..1.5).prop_map(|e| (KernelKind::SparseCompact, e)),
    ]
}

/// A random graph on `2..=max_n` manifold samples.
fn graph(max_n: usize) -> impl Strategy<Value = GeoGraph> {
    (manifold(), 2..=max_n, any::<u64>(), kernel()).prop_map(|(m, n, seed, (kind, eps))| {
        let cloud = sample_uniform(&m, n, seed).unwrap();
        build_graph(&cloud, &KernelConfig::new(kind, eps, m.intrinsic_dim())).unwrap()
    })
}

fn signal(n: usize, seed: u64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.7 + seed as f64 * 1.3).sin())
}

fn taps() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 1..6)
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut s = seed | 1;
    for i in (1..n).rev() {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        p.swap(i, (s % (i as u64 + 1)) as usize);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_symmetric_psd_with_zero_row_sums(g in graph(40)) {
        let l = g.laplacian_dense();
        let scale = g.norm_bound().max(1.0);
        prop_assert!((&l - l.transpose()).amax() == 0.0);
        let ones = DVector::from_element(g.len(), 1.0);
        prop_assert!(g.laplacian_matvec(&ones).amax() <= 1e-12 * scale);
        let spec = eig_sym(&g, g.len()).unwrap();
        prop_assert!(spec.values()[0] >= -1e-10 * scale);
        prop_assert!(spec.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn filters_are_linear(g in graph(30), h in taps(), step in 0.1f64..2.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let h = FilterCoeffs::with_step(h, step).unwrap();
        let n = g.len();
        let (x, y) = (signal(n, 1), signal(n, 2));
        let lhs = graph_filter_apply(&h, &g, &(&x * a + &y * b)).unwrap();
        let rhs = graph_filter_apply(&h, &g, &x).unwrap() * a + graph_filter_apply(&h, &g, &y).unwrap() * b;
        prop_assert!((&lhs - &rhs).amax() <= 1e-10 * (1.0 + rhs.amax()));
    }

    #[test]
    fn filters_commute_with_permutations(g in graph(30), h in taps(), seed in any::<u64>()) {
        let n = g.len();
        let perm = permutation(n, seed);
        let gp = build_graph(&g.cloud().permuted(&perm).unwrap(), g.config()).unwrap();
        let h = FilterCoeffs::with_step(h, 0.5).unwrap();
        let x = signal(n, seed);
        let xp = DVector::from_fn(n, |i, _| x[perm[i]]);
        let y = graph_filter_apply(&h, &g, &x).unwrap();
        let yp = graph_filter_apply(&h, &gp, &xp).unwrap();
        for i in 0..n {
            prop_assert!((yp[i] - y[perm[i]]).abs() <= 1e-10);
        }
    }

    #[test]
    fn gnn_commutes_with_permutations(g in graph(25), seed in any::<u64>(), sigma in prop_oneof![Just(Nonlinearity::Relu), Just(Nonlinearity::Tanh)]) {
        let n = g.len();
        let perm = permutation(n, seed);
        let gp = build_graph(&g.cloud().permuted(&perm).unwrap(), g.config()).unwrap();
        let arch = GnnArch::random(vec![2, 3, 1], 3, sigma, seed).unwrap();
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * 3 + j) as f64).cos());
        let xp = DMatrix::from_fn(n, 2, |i, j| x[(perm[i], j)]);
        let y = gnn_forward(&arch, &g, &x).unwrap();
        let yp = gnn_forward(&arch, &gp, &xp).unwrap();
        for i in 0..n {
            prop_assert!((yp.output()[(i, 0)] - y.output()[(perm[i], 0)]).abs() <= 1e-10);
        }
    }

    #[test]
    fn heat_semigroup_and_constants(g in graph(30), s in 0.0f64..2.0, t in 0.0f64..2.0, c in -5.0f64..5.0) {
        let n = g.len();
        let x = signal(n, 3);
        let two = heat_apply(&g, s, &heat_apply(&g, t, &x).unwrap()).unwrap();
        let one = heat_apply(&g, s + t, &x).unwrap();
        prop_assert!((&two - &one).norm() <= 1e-8 * one.norm().max(1e-300));
        let constant = DVector::from_element(n, c);
        prop_assert!((heat_apply(&g, t, &constant).unwrap() - &constant).amax() <= 1e-12 * (1.0 + c.abs()));
        prop_assert!(heat_apply(&g, 0.0, &x).unwrap() == x);
    }

    #[test]
    fn response_is_sum_of_exponentials(h in taps(), step in 0.1f64..2.0, lambda in 0.0f64..20.0) {
        let f = FilterCoeffs::with_step(h.clone(), step).unwrap();
        let direct: f64 = h.iter().enumerate().map(|(k, c)| c * (-(k as f64) * step * lambda).exp()).sum();
        prop_assert!((freq_response(&f, lambda) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn partition_separates_groups(mut vals in prop::collection::vec(0.0f64..30.0, 1..25), alpha in 0.05f64..5.0) {
        vals.sort_by(f64::total_cmp);
        let p = alpha_partition(&vals, alpha).unwrap();
        prop_assert_eq!(p.groups.iter().map(|r| r.len()).sum::<usize>(), vals.len());
        prop_assert_eq!(p.singletons() + p.multi(), p.count());
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                if p.group_of(i) != p.group_of(j) {
                    prop_assert!((vals[i] - vals[j]).abs() > alpha);
                }
            }
        }
        for r in &p.groups {
            prop_assert!(vals[r.clone()].windows(2).all(|w| w[1] - w[0] <= alpha));
        }
    }

    #[test]
    fn eigengap_matches_definition(mut vals in prop::collection::vec(0.0f64..30.0, 3..15), k in 1usize..10) {
        vals.sort_by(f64::total_cmp);
        prop_assume!(vals.len() >= k + 2);
        let gap = eigengap(&vals, k).unwrap();
        let brute = (1..=k).map(|i| (vals[i] - vals[i - 1]).min(vals[i + 1] - vals[i])).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(gap, brute);
        prop_assert!(gap >= 0.0);
    }

    #[test]
    fn fdt_decomposition_reconstructs(mut vals in prop::collection::vec(0.0f64..12.0, 1..20), alpha in 0.1f64..2.0, h in taps()) {
        vals.sort_by(f64::total_cmp);
        let p = alpha_partition(&vals, alpha).unwrap();
        let anchors: Vec<f64> = p.groups.iter().filter(|r| r.len() > 1).map(|r| vals[r.start]).collect();
        let f = FilterCoeffs::new(h).unwrap();
        let d = fdt_decompose(|l| f.response(l), &vals, &p, &anchors).unwrap();
        for i in 0..vals.len() {
            let sum = d.h0[i] + d.components.iter().map(|(_, c)| c[i]).sum::<f64>();
            prop_assert!((sum - f.response(vals[i])).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
        prop_assert!(d.reconstruction_error <= 1e-12 * (1.0 + f.response(0.0).abs() * vals.len() as f64));
    }

    #[test]
    fn nonlinearities_are_normalized_lipschitz(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        for s in [Nonlinearity::Relu, Nonlinearity::Tanh, Nonlinearity::Identity] {
            prop_assert!((s.apply(a) - s.apply(b)).abs() <= (a - b).abs());
            prop_assert_eq!(s.apply(0.0), 0.0);
        }
    }

    #[test]
    fn kernel_weights_are_nonnegative_with_compact_support(n in 1usize..5000, eps in 0.01f64..2.0, d2 in 0.0f64..5.0, dim in 1usize..4) {
        let dense = KernelConfig::new(KernelKind::DenseGaussian, eps, dim);
        let sparse = KernelConfig::new(KernelKind::SparseCompact, eps, dim);
        prop_assert!(kernel_weight(&dense, n, d2) > 0.0 || d2 / eps > 600.0);
        let w = kernel_weight(&sparse, n, d2);
        prop_assert!(w >= 0.0);
        if d2 > eps {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn interpolating_a_constant_gives_the_constant(m in manifold(), n in 2usize..60, seed in any::<u64>(), c in -4.0f64..4.0) {
        let cloud = sample_uniform(&m, n, seed).unwrap();
        let f = interpolate(&DVector::from_element(n, c), &cloud).unwrap();
        let probe = sample_uniform(&m, 20, seed ^ 1).unwrap();
        for x in probe.points() {
            prop_assert_eq!(f.eval(x), c);
        }
    }

    #[test]
    fn graph_inner_is_bilinear_and_symmetric(n in 1usize..50, a in -3.0f64..3.0) {
        let (u, v, w) = (signal(n, 1), signal(n, 2), signal(n, 3));
        let lhs = graph_inner(&(&u * a + &w), &v).unwrap();
        let rhs = a * graph_inner(&u, &v).unwrap() + graph_inner(&w, &v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        prop_assert_eq!(graph_inner(&u, &v).unwrap(), graph_inner(&v, &u).unwrap());
    }

    #[test]
    fn manifold_filters_act_per_mode(m in manifold(), h in taps(), coeffs in prop::collection::vec(-1.0f64..1.0, 1..12)) {
        let f = FilterCoeffs::new(h).unwrap();
        let len = coeffs.len();
        let sig = ManifoldSignal::spectral(&m, coeffs.clone()).unwrap();
        let out = manifold_filter_apply(&f, &sig, &m, len).unwrap();
        let spec = &out;
        for (i, p) in spec.pairs().iter().enumerate() {
            let want = f.response(p.eigenvalue) * coeffs[i];
            prop_assert!((spec.coeffs()[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn relabelling_permutes_the_laplacian_exactly(g in graph(40), seed in any::<u64>()) {
        let n = g.len();
        let perm = permutation(n, seed);
        let gp = build_graph(&g.cloud().permuted(&perm).unwrap(), g.config()).unwrap();
        let (l, lp) = (g.laplacian_dense(), gp.laplacian_dense());
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(lp[(i, j)], l[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn dense_kernel_is_strictly_decreasing(eps in 0.05f64..2.0, a in 0.0f64..10.0, gap in 1e-6f64..10.0, dim in 1usize..4) {
        let cfg = KernelConfig::new(KernelKind::DenseGaussian, eps, dim);
        let (near, far) = (kernel_weight(&cfg, 100, a), kernel_weight(&cfg, 100, a + gap));
        prop_assert!(far < near || far == 0.0);
    }

    #[test]
    fn sparse_graphs_have_no_edges_outside_the_support(m in manifold(), n in 2usize..=200, seed in any::<u64>(), eps in 0.01f64..1.0) {
        let cloud = sample_uniform(&m, n, seed).unwrap();
        let g = build_graph(&cloud, &KernelConfig::new(KernelKind::SparseCompact, eps, m.intrinsic_dim())).unwrap();
        for i in 0..n {
            prop_assert_eq!(g.weight(i, i), 0.0);
            for j in 0..n {
                let inside = cloud.dist_sq(i, j) <= eps;
                prop_assert_eq!(g.weight(i, j) > 0.0, inside && i != j);
            }
        }
    }
}

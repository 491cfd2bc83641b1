mod common;

use common::*;
use proptest::prelude::*;
use svn_core::data::{kfold_splits, Scaler};
use svn_core::inference::{svgd_direction, svn_hessian_matvec, CrossTerm};
use svn_core::kernel::{build_kernel_state, Bandwidth};
use svn_core::linalg::{conjugate_gradient, dot};
use svn_core::metrics::{auroc, brier, ece};
use svn_core::nn::{init_params, Checkpoint};
use svn_core::{
    Activation, CgOptions, CurvatureEstimate, Dataset, DenseMatrix, Head, MetricOperator, MlpArchitecture, Task,
};

fn particles(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n)
}

fn spd(d: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), d).prop_map(move |a| {
        let mut m = zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[i][j] = (0..d).map(|k| a[i][k] * a[j][k]).sum();
            }
            m[i][i] += 0.1;
        }
        m
    })
}

fn probs(n: usize, c: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (
        prop::collection::vec(prop::collection::vec(0.01..1.0f64, c), n),
        prop::collection::vec(0..c, n),
    )
        .prop_map(|(raw, labels)| {
            let p = raw
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.into_iter().map(|v| v / s).collect()
                })
                .collect();
            (p, labels.into_iter().map(|l| l as f64).collect())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric_bounded_and_antisymmetric_in_gradient(ps in particles(4, 3)) {
        let ks = build_kernel_state(&MetricOperator::Identity, &ps, Bandwidth::Median).unwrap();
        for i in 0..4 {
            prop_assert_eq!(ks.value(i, i), 1.0);
            for j in 0..4 {
                let k = ks.value(i, j);
                prop_assert!(k > 0.0 && k <= 1.0);
                prop_assert_eq!(k, ks.value(j, i));
                let (a, b) = (ks.grad(i, j), ks.grad(j, i));
                prop_assert!(a.iter().zip(b).all(|(x, y)| (x + y).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn svgd_direction_is_equivariant_to_particle_order(ps in particles(4, 2), gs in particles(4, 2)) {
        let ks = build_kernel_state(&MetricOperator::Identity, &ps, Bandwidth::Fixed).unwrap();
        let v = svgd_direction(&gs, &ks).unwrap();
        let order = [2, 0, 3, 1];
        let ps2: Vec<_> = order.iter().map(|&i| ps[i].clone()).collect();
        let gs2: Vec<_> = order.iter().map(|&i| gs[i].clone()).collect();
        let ks2 = build_kernel_state(&MetricOperator::Identity, &ps2, Bandwidth::Fixed).unwrap();
        let v2 = svgd_direction(&gs2, &ks2).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert!(max_abs_diff(&v2[k], &v[i]) < 1e-12);
        }
    }

    #[test]
    fn svn_hessian_is_symmetric_and_gram_form_is_psd(
        ps in particles(3, 3),
        hs in prop::collection::vec(spd(3), 3),
        x in prop::collection::vec(-1.0..1.0f64, 9),
        y in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let ks = build_kernel_state(&MetricOperator::Identity, &ps, Bandwidth::Fixed).unwrap();
        let curvs: Vec<_> = hs.iter().map(|m| CurvatureEstimate::Full(from_rows(m))).collect();
        for cross in [CrossTerm::Gram, CrossTerm::Swapped] {
            let hx = svn_hessian_matvec(&x, &ks, &curvs, cross).unwrap();
            let hy = svn_hessian_matvec(&y, &ks, &curvs, cross).unwrap();
            prop_assert!((dot(&y, &hx) - dot(&x, &hy)).abs() < 1e-10);
        }
        let hx = svn_hessian_matvec(&x, &ks, &curvs, CrossTerm::Gram).unwrap();
        prop_assert!(dot(&x, &hx) >= -1e-12);
    }

    #[test]
    fn cg_solves_spd_systems(a in spd(5), b in prop::collection::vec(-1.0..1.0f64, 5)) {
        let opts = CgOptions { max_iters: 200, tol: 1e-12, damping: 0.0 };
        let sol = conjugate_gradient(&from_rows(&a), &b, &opts).unwrap();
        let want = lu_solve(&a, &b);
        prop_assert!(rel_err(&sol.x, &want, 1.0) < 1e-8);
    }

    #[test]
    fn scaler_standardises_train_columns(rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 4..30)) {
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let s = Scaler::fit(&x);
        let z = s.transform(&x);
        let n = z.rows() as f64;
        for j in 0..3 {
            let col: Vec<f64> = (0..z.rows()).map(|i| z.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let constant = rows.iter().all(|r| r[j] == rows[0][j]);
            prop_assert!(constant || (var - 1.0).abs() < 1e-9);
            // Refitting standardised data is the identity.
            let again = Scaler::fit(&z);
            prop_assert!(again.mean[j].abs() < 1e-10);
            prop_assert!(constant || (again.std[j] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kfold_test_parts_partition_the_rows(n in 10usize..60, k in 2usize..5, seed in 0u64..1000) {
        let x = DenseMatrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let data = Dataset::new(x, vec![0.0; n]).unwrap();
        let folds = kfold_splits(&data, Task::Regression, k, 0.2, seed).unwrap();
        let mut seen: Vec<usize> = folds.iter().flat_map(|f| f.test.x.data().iter().map(|&v| v as usize)).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.val.len() + f.test.len(), n);
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in 0u64..10_000, scale in -1e6..1e6f64) {
        let arch = MlpArchitecture::new(vec![2, 3, 2], Activation::Tanh, Head::GaussianRegression).unwrap();
        let p: Vec<f64> = init_params(&arch, seed).iter().map(|v| v * scale + 1e-300).collect();
        let ck = Checkpoint { architecture: arch, seed, particles: vec![p.clone(), p] };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn classification_metrics_stay_in_range((p, y) in probs(20, 3)) {
        let e = ece(&p, &y, 10).unwrap();
        let b = brier(&p, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!((0.0..=2.0).contains(&b));
        let bin: Vec<f64> = y.iter().map(|&v| f64::from(v > 0.5)).collect();
        let scores: Vec<f64> = p.iter().map(|r| r[0]).collect();
        let a = auroc(&scores, &bin).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn metrics_ignore_point_order((p, y) in probs(15, 2)) {
        let rev_p: Vec<_> = p.iter().rev().cloned().collect();
        let rev_y: Vec<_> = y.iter().rev().copied().collect();
        prop_assert!((ece(&p, &y, 10).unwrap() - ece(&rev_p, &rev_y, 10).unwrap()).abs() < 1e-12);
        prop_assert!((brier(&p, &y).unwrap() - brier(&rev_p, &rev_y).unwrap()).abs() < 1e-12);
        let s: Vec<f64> = p.iter().map(|r| r[1]).collect();
        let rs: Vec<f64> = rev_p.iter().map(|r| r[1]).collect();
        prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&rs, &rev_y).unwrap());
    }
}

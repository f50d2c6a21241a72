//! Gradient, smoothness and determinism checks for the test problems.

use olion_core::geometry::PolarMode;
use olion_core::matcore::DenseMatrix;
use olion_core::optimizers::{schedule_lr, HyperParams, LrSchedule, Optimizer, OptimizerKind, ParamBlock};
use olion_core::problems::{
    build_problem, estimate_local_smoothness, finite_difference_check, low_rank_target, minibatch_indices, Activation,
    MatrixFactorization, Problem, ProblemSpec, Quadratic, SoftmaxClassifier, TinyMlp,
};
use olion_core::rng::{gaussian_matrix, gaussian_matrix_seeded, seeded};
use proptest::prelude::*;

fn perturbed(p: &dyn Problem, seed: u64, scale: f64) -> Vec<ParamBlock> {
    let mut blocks = p.init(seed);
    let mut rng = seeded(seed ^ 0xabc);
    for b in &mut blocks {
        let (r, c) = b.shape();
        b.matrix.axpy(scale, &gaussian_matrix(r, c, &mut rng));
    }
    blocks
}

#[test]
fn quadratic_gradient_matches_finite_differences() {
    let q = Quadratic::new(gaussian_matrix_seeded(9, 7, 1));
    let err = finite_difference_check(&q, &q.init(2), 1e-6);
    assert!(err < 1e-7, "{err:e}");
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let p = SoftmaxClassifier::new(10, 4, 64, 3).unwrap();
    let err = finite_difference_check(&p, &perturbed(&p, 4, 0.5), 1e-6);
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    for act in [Activation::Tanh, Activation::Identity] {
        let p = TinyMlp::new(&[5, 7, 6, 3], act, 32, 5).unwrap();
        let err = finite_difference_check(&p, &perturbed(&p, 6, 0.1), 1e-6);
        assert!(err < 1e-4, "{act:?}: {err:e}");
    }
}

#[test]
fn factorization_gradient_matches_finite_differences() {
    let p = MatrixFactorization::new(low_rank_target(8, 6, 2, 7), 3).unwrap();
    let err = finite_difference_check(&p, &perturbed(&p, 8, 0.3), 1e-6);
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn losses_respect_their_lower_bounds() {
    let problems: Vec<Box<dyn Problem>> = vec![
        Box::new(Quadratic::new(gaussian_matrix_seeded(5, 4, 1))),
        Box::new(MatrixFactorization::new(low_rank_target(6, 5, 2, 2), 2).unwrap()),
        Box::new(SoftmaxClassifier::new(6, 3, 40, 3).unwrap()),
        Box::new(TinyMlp::new(&[4, 6, 5, 2], Activation::Tanh, 20, 4).unwrap()),
    ];
    for p in &problems {
        for probe in 0..2500u64 {
            let blocks = perturbed(p.as_ref(), probe, 3.0);
            let f = p.loss(&blocks);
            assert!(f.is_finite() && f >= p.lower_bound(), "{} probe {probe}: {f}", p.name());
        }
    }
}

#[test]
fn minibatch_epoch_averages_to_full_gradient() {
    let softmax = SoftmaxClassifier::new(8, 3, 60, 9).unwrap();
    let mlp = TinyMlp::new(&[4, 6, 5, 2], Activation::Tanh, 60, 10).unwrap();
    for p in [&softmax as &dyn Problem, &mlp] {
        let blocks = perturbed(p, 11, 0.2);
        let full = p.grad(&blocks);
        let (bs, per_epoch) = (12usize, 5u64);
        let mut avg: Vec<DenseMatrix> = full.iter().map(|g| DenseMatrix::zeros(g.rows(), g.cols())).collect();
        // Second epoch, to exercise the epoch reshuffle.
        for step in per_epoch..2 * per_epoch {
            for (a, g) in avg.iter_mut().zip(p.minibatch_grad(&blocks, bs, 77, step)) {
                a.axpy(1.0 / per_epoch as f64, &g);
            }
        }
        for (a, g) in avg.iter().zip(&full) {
            assert!(a.max_abs_diff(g) < 1e-10, "{}", p.name());
        }
    }
}

#[test]
fn minibatch_epochs_are_permutations() {
    let mut seen: Vec<usize> = (0..4).flat_map(|s| minibatch_indices(20, 5, 3, s)).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..20).collect::<Vec<_>>());
    assert_ne!(minibatch_indices(20, 5, 3, 0), minibatch_indices(20, 5, 3, 4));
}

#[test]
fn construction_is_seed_deterministic() {
    let specs = [
        ProblemSpec::Quadratic {
            rows: 6,
            cols: 4,
            data_seed: 3,
        },
        ProblemSpec::MatrixFactorization {
            rows: 6,
            cols: 5,
            rank: 2,
            k: 2,
            data_seed: 3,
        },
        ProblemSpec::Softmax {
            n_features: 5,
            n_classes: 3,
            n_samples: 30,
            data_seed: 3,
            separation: 1.0,
        },
        ProblemSpec::Mlp {
            widths: vec![3, 5, 4, 2],
            activation: Activation::Tanh,
            n_samples: 16,
            data_seed: 3,
        },
    ];
    for spec in &specs {
        let (a, b) = (build_problem(spec).unwrap(), build_problem(spec).unwrap());
        let (xa, xb) = (a.init(9), b.init(9));
        assert_eq!(xa, xb);
        assert_eq!(a.loss(&xa).to_bits(), b.loss(&xb).to_bits());
        assert_ne!(a.init(10), xa, "{}", spec.name());
    }
}

#[test]
fn softmax_smoothness_constant_is_valid() {
    let p = SoftmaxClassifier::new(12, 5, 100, 12).unwrap();
    let l = p.smoothness().unwrap();
    let mut rng = seeded(13);
    for _ in 0..200 {
        let x = gaussian_matrix(5, 12, &mut rng).scaled(2.0);
        let y = &x + &gaussian_matrix(5, 12, &mut rng).scaled(0.5);
        let (bx, by) = (
            vec![ParamBlock::matrix("w", x.clone())],
            vec![ParamBlock::matrix("w", y.clone())],
        );
        let lip = (&p.grad(&bx)[0] - &p.grad(&by)[0]).frobenius_norm() / (&x - &y).frobenius_norm();
        assert!(lip <= l * (1.0 + 1e-12), "{lip} > {l}");
    }
    let local = estimate_local_smoothness(&p, &p.init(0), 1.0, 50, 14);
    eprintln!("softmax L = {l:.4}, local estimate = {local:.4}");
    assert!(local <= l * (1.0 + 1e-12));
}

#[test]
fn mlp_local_smoothness_is_finite() {
    let p = TinyMlp::new(&TinyMlp::DEFAULT_WIDTHS, Activation::Tanh, 128, 1).unwrap();
    let local = estimate_local_smoothness(&p, &p.init(2), 0.1, 20, 3);
    eprintln!("mlp local smoothness estimate = {local:.4}");
    assert!(local.is_finite() && local > 0.0);
}

#[test]
fn olion_fits_a_low_rank_factorization() {
    let p = MatrixFactorization::new(low_rank_target(20, 20, 5, 21), 5).unwrap();
    let mut blocks = p.init(22);
    let hp = HyperParams {
        lr: 0.1,
        ..HyperParams::defaults_for(OptimizerKind::OLion)
    };
    let mut opt = Optimizer::new(OptimizerKind::OLion, hp, PolarMode::NewtonSchulz(5), &blocks).unwrap();
    let sched = LrSchedule::warmup_cosine(25, 500, 0.1, 0.0);
    for t in 0..500 {
        let g = p.grad(&blocks);
        opt.step(&mut blocks, &g, schedule_lr(&sched, t).unwrap()).unwrap();
    }
    let f = p.loss(&blocks);
    eprintln!("factorization loss after 500 steps = {f:.3e}");
    assert!(f < 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quadratic_gradient_is_exact(seed in any::<u64>(), r in 1usize..8, c in 1usize..8) {
        let q = Quadratic::new(gaussian_matrix_seeded(r, c, seed));
        let blocks = perturbed(&q, seed, 1.0);
        prop_assert!(finite_difference_check(&q, &blocks, 1e-6) < 1e-7);
    }

    #[test]
    fn softmax_loss_is_nonnegative(seed in any::<u64>(), scale in 0.0f64..50.0) {
        let p = SoftmaxClassifier::new(4, 3, 12, seed).unwrap();
        let f = p.loss(&perturbed(&p, seed, scale));
        prop_assert!(f.is_finite() && f >= 0.0);
    }
}

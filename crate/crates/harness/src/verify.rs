//! `verify`: a fast self-check of the library invariants and the harness
//! persistence contract. Each check reports pass/fail with a short detail.

use std::fs;
use std::path::PathBuf;

use olion_core::diagnostics::{descent_audit, isotropy_epsilon, lemma43_audit, stationarity_phi};
use olion_core::geometry::PolarMode;
use olion_core::matcore::{
    newton_schulz, norm_suite, polar_factor_exact, sign_map, singular_values, DenseMatrix, DEFAULT_RANK_TOL,
};
use olion_core::optimizers::{HyperParams, Optimizer, OptimizerKind, ParamBlock};
use olion_core::problems::{
    finite_difference_check, low_rank_target, Activation, MatrixFactorization, Problem, Quadratic, SoftmaxClassifier,
    TinyMlp,
};
use olion_core::rng::gaussian_matrix_seeded;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{parse_document, RunConfig};
use crate::train::{resume, run, LOSS_CSV};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Runs every check. Scratch files go under the system temp directory and
/// are removed afterwards.
pub fn run_verify() -> Vec<CheckResult> {
    vec![
        polar_orthonormality(),
        newton_schulz_agreement(),
        trace_identity(),
        lemma_identity(),
        descent_certificate(),
        lion_reduction(),
        gradient_oracles(),
        persistence(),
    ]
}

fn polar_orthonormality() -> CheckResult {
    let mut worst_orth: f64 = 0.0;
    let mut worst_nuc: f64 = 0.0;
    for seed in 0..20 {
        let m = gaussian_matrix_seeded(24 + seed as usize, 12, seed);
        let o = polar_factor_exact(&m).expect("gaussian has full rank");
        worst_orth = worst_orth.max((&o.t_matmul(&o) - &DenseMatrix::identity(12)).frobenius_norm());
        let nuc = norm_suite(&m).nuclear;
        worst_nuc = worst_nuc.max((o.dot(&m) - nuc).abs() / nuc);
    }
    check(
        "polar factor",
        worst_orth < 1e-10 && worst_nuc < 1e-8,
        format!("max ||O'O - I|| = {worst_orth:.2e}, max nuclear rel err = {worst_nuc:.2e}"),
    )
}

fn newton_schulz_agreement() -> CheckResult {
    let (mut agree, mut total) = (0usize, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for seed in 0..10 {
        let m = gaussian_matrix_seeded(64, 32, 1000 + seed);
        let exact = polar_factor_exact(&m).expect("gaussian has full rank");
        let ns = newton_schulz(&m, 5).expect("nonzero input");
        let sv = singular_values(&ns);
        lo = lo.min(sv[sv.len() - 1]);
        hi = hi.max(sv[0]);
        let floor = 0.05 / 64f64.sqrt();
        for (e, n) in exact.as_slice().iter().zip(ns.as_slice()) {
            if e.abs() > floor {
                total += 1;
                agree += usize::from(e.signum() == n.signum());
            }
        }
    }
    let frac = agree as f64 / total as f64;
    check(
        "newton-schulz",
        frac > 0.99 && lo >= 0.6 && hi <= 1.4,
        format!("sign agreement {:.4}%, sigma in [{lo:.3}, {hi:.3}]", 100.0 * frac),
    )
}

fn trace_identity() -> CheckResult {
    let worst = (0..200)
        .map(|seed| {
            let q = gaussian_matrix_seeded(3 + seed as usize % 17, 2 + seed as usize % 11, seed);
            (q.dot(&sign_map(&q)) - q.l1_norm()).abs() / q.l1_norm()
        })
        .fold(0.0, f64::max);
    check("trace identity", worst < 1e-12, format!("max rel err = {worst:.2e}"))
}

fn lemma_identity() -> CheckResult {
    let (mut worst, mut bound_ok) = (0.0f64, true);
    for seed in 0..30 {
        let z = gaussian_matrix_seeded(16 + seed as usize, 8 + seed as usize / 2, 500 + seed);
        let a = lemma43_audit(&z).expect("gaussian has full rank");
        worst = worst.max(a.identity_residual / a.lhs.max(f64::MIN_POSITIVE));
        bound_ok &= a.lhs <= a.rhs * (1.0 + 1e-12);
        let rep = isotropy_epsilon(&z, DEFAULT_RANK_TOL).expect("gaussian has full rank");
        bound_ok &= rep.epsilon >= 0.0;
    }
    check(
        "lemma audit",
        worst < 1e-8 && bound_ok,
        format!("max rel identity residual = {worst:.2e}, bound held = {bound_ok}"),
    )
}

fn descent_certificate() -> CheckResult {
    let q = Quadratic::new(gaussian_matrix_seeded(12, 8, 77));
    let mut blocks = q.init(78);
    let hp = HyperParams {
        beta1: 0.0,
        beta2: 0.0,
        weight_decay: 0.0,
        ..HyperParams::defaults_for(OptimizerKind::OLion)
    };
    let mut opt = Optimizer::new(OptimizerKind::OLion, hp, PolarMode::Exact, &blocks).expect("valid hyperparameters");
    let mut worst = f64::NEG_INFINITY;
    for t in 0..100 {
        let (f0, g) = q.loss_and_grad(&blocks);
        let Ok(st) = stationarity_phi(&g[0]) else { break };
        let eta = 0.2 / (1.0 + t as f64).sqrt();
        let arts = opt.step(&mut blocks, &g, eta).expect("finite gradient");
        worst = worst.max(descent_audit(
            f0,
            q.loss(&blocks),
            eta * arts[0].gamma,
            st.phi,
            1.0,
            12,
            8,
        ));
    }
    check(
        "descent certificate",
        worst <= 1e-9,
        format!("max residual = {worst:.3e}"),
    )
}

fn lion_reduction() -> CheckResult {
    let init = vec![ParamBlock::matrix("w", gaussian_matrix_seeded(10, 6, 90))];
    let hp = |kind| HyperParams {
        ns_steps: 0,
        ..HyperParams::defaults_for(kind)
    };
    let lion_hp = HyperParams {
        beta1: hp(OptimizerKind::OLion).beta1,
        beta2: hp(OptimizerKind::OLion).beta2,
        ..hp(OptimizerKind::Lion)
    };
    let mut a = init.clone();
    let mut b = init;
    let mut olion = Optimizer::new(
        OptimizerKind::OLion,
        hp(OptimizerKind::OLion),
        PolarMode::NewtonSchulz(0),
        &a,
    )
    .expect("valid hyperparameters");
    let mut lion =
        Optimizer::new(OptimizerKind::Lion, lion_hp, PolarMode::NewtonSchulz(0), &b).expect("valid hyperparameters");
    let mut same = true;
    for t in 0..50 {
        let g = vec![gaussian_matrix_seeded(10, 6, 2000 + t)];
        let sa = olion.step(&mut a, &g, 0.01).expect("finite gradient");
        let sb = lion.step(&mut b, &g, 0.01).expect("finite gradient");
        same &= sa[0].sign == sb[0].sign;
    }
    check(
        "ns_steps=0 reduces to lion",
        same,
        format!("sign patterns identical over 50 steps: {same}"),
    )
}

fn gradient_oracles() -> CheckResult {
    let cases: [(Box<dyn Problem>, f64); 4] = [
        (Box::new(Quadratic::new(gaussian_matrix_seeded(7, 5, 1))), 1e-7),
        (
            Box::new(SoftmaxClassifier::new(8, 3, 40, 2).expect("valid sizes")),
            1e-5,
        ),
        (
            Box::new(TinyMlp::new(&[4, 6, 5, 2], Activation::Tanh, 20, 3).expect("valid widths")),
            1e-4,
        ),
        (
            Box::new(MatrixFactorization::new(low_rank_target(6, 5, 2, 4), 2).expect("valid rank")),
            1e-5,
        ),
    ];
    let mut detail = Vec::new();
    let mut passed = true;
    for (p, tol) in &cases {
        let err = finite_difference_check(p.as_ref(), &p.init(5), 1e-6);
        passed &= err < *tol;
        detail.push(format!("{} {err:.1e}", p.name()));
    }
    check("gradient oracles", passed, detail.join(", "))
}

fn persistence() -> CheckResult {
    let root = std::env::temp_dir().join(format!("olion-verify-{}", std::process::id()));
    let outcome = persistence_in(&root);
    let _ = fs::remove_dir_all(&root);
    match outcome {
        Ok((passed, detail)) => check("determinism and resume", passed, detail),
        Err(e) => check("determinism and resume", false, e.to_string()),
    }
}

fn persistence_in(root: &std::path::Path) -> crate::error::Result<(bool, String)> {
    let doc = |dir: PathBuf, steps: u64, ckpt: Option<u64>| {
        let mut text = format!(
            "optimizer = \"olion\"\nsteps = {steps}\ndiag_interval = 2\noutput_dir = {:?}\n\
             [problem]\nname = \"softmax\"\nn_features = 6\nn_classes = 3\nn_samples = 30\n\
             [schedule]\nkind = \"warmup_cosine\"\nwarmup_steps = 2\ntotal_steps = 10\nlr_max = 0.05\n",
            dir.to_string_lossy()
        );
        if let Some(c) = ckpt {
            text = format!("checkpoint_interval = {c}\n{text}");
        }
        RunConfig::from_document(parse_document(&text, false)?)
    };
    let full_a = run(&doc(root.join("a"), 10, None)?)?;
    run(&doc(root.join("b"), 10, None)?)?;
    let read = |d: &str| fs::read(root.join(d).join(LOSS_CSV)).unwrap_or_default();
    let repeat = read("a") == read("b");

    let first = run(&doc(root.join("c"), 5, Some(5))?)?;
    let resumed = resume(&first.checkpoint_paths[0], 5)?;
    let split = read("a") == read("c") && resumed.final_blocks == full_a.final_blocks;

    let ckpt = Checkpoint::load(&first.checkpoint_paths[0])?;
    let (m, p) = ckpt.to_bytes();
    let again = Checkpoint::from_bytes(&m, &p)?.to_bytes();
    let on_disk = fs::read(first.checkpoint_paths[0].join(crate::checkpoint::PAYLOAD_FILE)).unwrap_or_default();
    let lossless = again == (m, p.clone()) && on_disk == p;

    Ok((
        repeat && split && lossless,
        format!("repeat identical: {repeat}, split == unbroken: {split}, checkpoint lossless: {lossless}"),
    ))
}

//! Acceptance suite. Each criterion is one test that prints a single
//! `[PASS]`/`[FAIL]` line to stderr and then asserts. Criteria hold a shared lock so their wall-clock budgets are
//! measured without competing for the CPU.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use olion_core::diagnostics::{descent_audit, lemma43_audit, stationarity_phi};
use olion_core::geometry::PolarMode;
use olion_core::matcore::{newton_schulz, norm_suite, polar_factor_exact, sign_map, singular_values, DenseMatrix};
use olion_core::optimizers::{schedule_lr, HyperParams, LrSchedule, Optimizer, OptimizerKind, ParamBlock};
use olion_core::problems::{finite_difference_check, Activation, Problem, Quadratic, SoftmaxClassifier, TinyMlp};
use olion_core::rng::{gaussian_matrix, gaussian_matrix_seeded, seeded};
use olion_core::theory_lab::{fit_scaling_law, run_scaling_study};
use olion_harness::checkpoint::{Checkpoint, MANIFEST_FILE, PAYLOAD_FILE};
use olion_harness::config::RunConfig;
use olion_harness::train::{resume, run, DIAGNOSTICS_CSV, LOSS_CSV};
use rand::Rng;
use serde_json::{json, Value};
use tempfile::TempDir;

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs `body` under the lock, prints the verdict line and asserts it.
fn criterion(id: u32, name: &str, budget: Duration, body: impl FnOnce() -> (bool, String)) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (ok, detail) = body();
    let elapsed = start.elapsed();
    let in_budget = elapsed < budget;
    let passed = ok && in_budget;
    let tag = if passed { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line shows even when output is captured.
    let _ = writeln!(
        std::io::stderr(),
        "[{tag}] {id:>2} {name}: {detail}; {:.2}s of {}s",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
    assert!(in_budget, "criterion {id} ({name}) over budget: {elapsed:?}");
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

#[test]
fn c01_polar_factor_oracle() {
    criterion(1, "polar factor oracle", secs(5), || {
        let mut rng = seeded(1);
        let (mut orth, mut nuc) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let cols = rng.random_range(1..=40);
            let rows = rng.random_range(cols..=cols + 40);
            let m = gaussian_matrix(rows, cols, &mut rng);
            let o = polar_factor_exact(&m).unwrap();
            orth = orth.max((&o.t_matmul(&o) - &DenseMatrix::identity(cols)).frobenius_norm());
            let nuclear: f64 = to_nalgebra(&m).singular_values().iter().sum();
            nuc = nuc.max((o.dot(&m) - nuclear).abs() / nuclear);
        }
        (
            orth < 1e-10 && nuc < 1e-8,
            format!("max ||O^T O - I||_F {orth:.2e}, max |<O,M> - ||M||_*| rel {nuc:.2e}"),
        )
    });
}

#[test]
fn c02_newton_schulz_fidelity() {
    criterion(2, "newton-schulz fidelity", secs(10), || {
        let floor = 0.05 / 64f64.sqrt();
        let (mut lo, mut hi, mut worst_agree) = (f64::INFINITY, 0.0f64, 1.0f64);
        let (mut agree, mut total) = (0usize, 0usize);
        for seed in 0..50 {
            let m = gaussian_matrix_seeded(64, 32, 10_000 + seed);
            let exact = polar_factor_exact(&m).unwrap();
            let ns = newton_schulz(&m, 5).unwrap();
            let sv = singular_values(&ns);
            lo = lo.min(sv[sv.len() - 1]);
            hi = hi.max(sv[0]);
            let (mut a, mut t) = (0usize, 0usize);
            for (e, n) in exact.as_slice().iter().zip(ns.as_slice()) {
                if e.abs() > floor {
                    t += 1;
                    a += usize::from(e.signum() == n.signum());
                }
            }
            worst_agree = worst_agree.min(a as f64 / t as f64);
            agree += a;
            total += t;
        }
        let pooled = agree as f64 / total as f64;
        (
            lo >= 0.6 && hi <= 1.4 && worst_agree > 0.99,
            format!(
                "sigma in [{lo:.3}, {hi:.3}], sign agreement pooled {:.3}% worst seed {:.3}%",
                100.0 * pooled,
                100.0 * worst_agree
            ),
        )
    });
}

#[test]
fn c03_trace_identity() {
    criterion(3, "trace identity", secs(5), || {
        let mut rng = seeded(3);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (r, c) = (rng.random_range(1..=48), rng.random_range(1..=48));
            let scale = 10f64.powi(rng.random_range(-6..=6));
            let q = gaussian_matrix(r, c, &mut rng).scaled(scale);
            let l1 = q.l1_norm();
            worst = worst.max((q.dot(&sign_map(&q)) - l1).abs() / l1);
        }
        (worst < 1e-12, format!("max relative error {worst:.2e}"))
    });
}

#[test]
fn c04_lemma_audit() {
    criterion(4, "spectral-sign lemma audit", secs(60), || {
        let mut rng = seeded(4);
        let (mut worst_id, mut worst_slack) = (0.0f64, f64::NEG_INFINITY);
        let mut ratios = Vec::with_capacity(500);
        for _ in 0..500 {
            let d2 = rng.random_range(8..=128);
            let d1 = rng.random_range(d2..=256);
            let z = gaussian_matrix(d1, d2, &mut rng);
            let a = lemma43_audit(&z).unwrap();
            worst_id = worst_id.max(a.identity_residual / a.lhs.max(f64::MIN_POSITIVE));
            worst_slack = worst_slack.max((a.lhs - a.rhs) / a.rhs);
            ratios.push(a.rhs / a.cs_rhs);
        }
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        (
            worst_id < 1e-8 && worst_slack <= 1e-12 && median < 0.1,
            format!(
                "max identity residual rel {worst_id:.2e}, max (lhs-rhs)/rhs {worst_slack:.3}, median rhs/cs {median:.4}"
            ),
        )
    });
}

#[test]
fn c05_isotropy_scaling_law() {
    criterion(5, "isotropy scaling law", secs(300), || {
        let grid: Vec<_> = [64, 128, 256, 512].iter().map(|&d| (d, d, 8)).collect();
        let study = run_scaling_study(&grid, 50, 5).unwrap();
        let fit = fit_scaling_law(&study).unwrap();
        let means: Vec<f64> = study.cells.iter().map(|c| c.mean_eps()).collect();
        let slope_ok = (0.7..=1.3).contains(&fit.slope);
        let r2_ok = fit.r_squared > 0.9;
        let decreasing = means[3] < means[0];
        (
            slope_ok && r2_ok && decreasing,
            format!(
                "slope {:.3} (in [0.7,1.3]: {slope_ok}), r^2 {:.4} (> 0.9: {r2_ok}), mean eps {:.4?} (d=512 < d=64: {decreasing})",
                fit.slope, fit.r_squared, means
            ),
        )
    });
}

#[test]
fn c06_descent_certificate() {
    criterion(6, "descent certificate", secs(30), || {
        let (d1, d2) = (32, 16);
        let q = Quadratic::new(gaussian_matrix_seeded(d1, d2, 6));
        let l = q.smoothness().unwrap();
        let mut blocks = q.init(7);
        let hp = HyperParams {
            beta1: 0.0,
            beta2: 0.0,
            weight_decay: 0.0,
            ..HyperParams::defaults_for(OptimizerKind::OLion)
        };
        let mut opt = Optimizer::new(OptimizerKind::OLion, hp, PolarMode::Exact, &blocks).unwrap();
        let schedule = LrSchedule::warmup_cosine(25, 500, 0.05, 0.0);
        let f0 = q.loss(&blocks);
        let (mut worst, mut sum_phi, mut sum_eta2) = (f64::NEG_INFINITY, 0.0, 0.0);
        for t in 0..500 {
            let (f_before, g) = q.loss_and_grad(&blocks);
            let phi = stationarity_phi(&g[0]).unwrap().phi;
            let arts = opt.step(&mut blocks, &g, schedule_lr(&schedule, t).unwrap()).unwrap();
            // The update is lr·γ·S, so the certificate's step size is lr·γ.
            let eta = schedule_lr(&schedule, t).unwrap() * arts[0].gamma;
            worst = worst.max(descent_audit(f_before, q.loss(&blocks), eta, phi, l, d1, d2));
            sum_phi += eta * phi;
            sum_eta2 += eta * eta;
        }
        let budget = f0 - q.lower_bound() + 0.5 * l * (d1 * d2) as f64 * sum_eta2;
        (
            worst <= 1e-9 && sum_phi <= budget,
            format!("max residual {worst:.3e} over 500 steps, sum eta*phi {sum_phi:.4} <= {budget:.4}"),
        )
    });
}

fn run_doc(doc: Value) -> olion_harness::RunSummary {
    run(&RunConfig::from_document(doc).unwrap()).unwrap()
}

#[test]
fn c07_desk_scale_convergence() {
    criterion(7, "desk-scale convergence", secs(120), || {
        let tmp = TempDir::new().unwrap();
        let spec = json!({"name": "quadratic", "rows": 32, "cols": 16, "data_seed": 1});
        let quad = run_doc(json!({
            "optimizer": "olion",
            "steps": 2000,
            "diag_interval": 100,
            "output_dir": tmp.path().join("quadratic"),
            "hyperparams": {"lr": 0.1, "weight_decay": 0.0},
            "schedule": {"kind": "warmup_cosine", "warmup_steps": 100, "lr_min": 0.0},
            "problem": spec,
        }));
        let problem = olion_core::problems::build_problem(&serde_json::from_value(spec).unwrap()).unwrap();
        let grad_norm = problem.grad(&quad.final_blocks)[0].frobenius_norm();
        let quad_ok = grad_norm < 1e-2;

        let target = 0.1 * 4f64.ln();
        let mut soft = Vec::new();
        for kind in ["adamw", "lion", "muon", "olion"] {
            let s = run_doc(json!({
                "optimizer": kind,
                "steps": 2000,
                "diag_interval": 100,
                "output_dir": tmp.path().join(kind),
                "hyperparams": {"lr": 1e-2},
                "schedule": {"kind": "warmup_cosine", "warmup_steps": 100, "lr_min": 0.0},
                "stop_at_loss": target,
                "problem": {"name": "softmax", "n_features": 16, "n_classes": 4, "n_samples": 256},
            }));
            soft.push((kind, s.final_loss, s.steps_completed));
        }
        let soft_ok = soft.iter().all(|&(_, loss, _)| loss < target);
        let soft_txt: Vec<String> = soft.iter().map(|(k, l, t)| format!("{k} {l:.4} @{t}")).collect();
        (
            quad_ok && soft_ok,
            format!(
                "quadratic ||grad|| {grad_norm:.2e} after 2000 steps; softmax target {target:.4}: {}",
                soft_txt.join(", ")
            ),
        )
    });
}

/// Per-weight-matrix (ell-inf, spectral) norms.
fn weight_norms(blocks: &[ParamBlock]) -> Vec<(f64, f64)> {
    blocks
        .iter()
        .filter(|b| b.name.starts_with('w'))
        .map(|b| {
            let n = norm_suite(&b.matrix);
            (n.linf, n.spectral)
        })
        .collect()
}

struct Trace {
    losses: Vec<f64>,
    snapshots: Vec<(Vec<ParamBlock>, Optimizer)>,
}

const SNAPSHOT_EVERY: u64 = 250;

fn train_mlp(p: &dyn Problem, kind: OptimizerKind, init: &[ParamBlock], schedule: &LrSchedule) -> Trace {
    let mut blocks = init.to_vec();
    let hp = HyperParams {
        lr: schedule.lr_max,
        ..HyperParams::defaults_for(kind)
    };
    let mut opt = Optimizer::new(kind, hp, PolarMode::NewtonSchulz(hp.ns_steps), &blocks).unwrap();
    let mut trace = Trace {
        losses: Vec::new(),
        snapshots: Vec::new(),
    };
    for t in 0..schedule.total_steps {
        if t % SNAPSHOT_EVERY == 0 {
            trace.snapshots.push((blocks.clone(), opt.clone()));
        }
        let (loss, g) = p.loss_and_grad(&blocks);
        trace.losses.push(loss);
        opt.step(&mut blocks, &g, schedule_lr(schedule, t).unwrap()).unwrap();
    }
    trace.losses.push(p.loss(&blocks));
    trace
}

/// Parameters at step `t`, replayed from the nearest earlier snapshot.
fn params_at(p: &dyn Problem, trace: &Trace, schedule: &LrSchedule, t: u64) -> Vec<ParamBlock> {
    let k = (t / SNAPSHOT_EVERY).min(trace.snapshots.len() as u64 - 1);
    let (mut blocks, mut opt) = trace.snapshots[k as usize].clone();
    for s in k * SNAPSHOT_EVERY..t {
        let g = p.grad(&blocks);
        opt.step(&mut blocks, &g, schedule_lr(schedule, s).unwrap()).unwrap();
    }
    blocks
}

#[test]
fn c08_implicit_bias_ordering() {
    criterion(8, "implicit-bias ordering", secs(300), || {
        let steps = 10_000;
        let schedule = LrSchedule::warmup_cosine(steps / 20, steps, 1e-2, 0.0);
        let kinds = [OptimizerKind::OLion, OptimizerKind::Muon, OptimizerKind::Lion];
        let (mut ok, mut lines) = (true, Vec::new());
        for seed in 0..3 {
            let p = TinyMlp::new(&TinyMlp::DEFAULT_WIDTHS, Activation::Tanh, 256, seed).unwrap();
            let init = p.init(100 + seed);
            let traces: Vec<Trace> = kinds.iter().map(|&k| train_mlp(&p, k, &init, &schedule)).collect();
            let tau = traces.iter().map(|t| *t.losses.last().unwrap()).fold(0.0, f64::max);
            let norms: Vec<Vec<(f64, f64)>> = traces
                .iter()
                .map(|tr| {
                    let hit = tr.losses.iter().position(|&l| l <= tau).unwrap() as u64;
                    weight_norms(&params_at(&p, tr, &schedule, hit))
                })
                .collect();
            let linf_wins = (0..4).filter(|&i| norms[0][i].0 <= norms[1][i].0).count();
            let spec_wins = (0..4).filter(|&i| norms[0][i].1 <= norms[2][i].1).count();
            ok &= linf_wins >= 3 && spec_wins >= 3;
            lines.push(format!(
                "seed {seed} (loss {tau:.2e}): linf olion<=muon {linf_wins}/4, spectral olion<=lion {spec_wins}/4"
            ));
        }
        (ok, lines.join("; "))
    });
}

#[test]
fn c09_reduction_checks() {
    criterion(9, "reduction checks", secs(10), || {
        let p = SoftmaxClassifier::new(12, 5, 128, 9).unwrap();
        let olion_hp = HyperParams {
            ns_steps: 0,
            lr: 1e-2,
            ..HyperParams::defaults_for(OptimizerKind::OLion)
        };
        let lion_hp = HyperParams {
            beta1: olion_hp.beta1,
            beta2: olion_hp.beta2,
            ..HyperParams::defaults_for(OptimizerKind::Lion)
        };
        let init = p.init(9);
        let (mut a, mut b) = (init.clone(), init.clone());
        let mut olion = Optimizer::new(OptimizerKind::OLion, olion_hp, PolarMode::NewtonSchulz(0), &a).unwrap();
        let mut lion = Optimizer::new(OptimizerKind::Lion, lion_hp, PolarMode::NewtonSchulz(0), &b).unwrap();
        let mut reduction = true;
        for _ in 0..100 {
            let (ga, gb) = (p.grad(&a), p.grad(&b));
            let sa = olion.step(&mut a, &ga, 1e-2).unwrap();
            let sb = lion.step(&mut b, &gb, 1e-2).unwrap();
            reduction &= sa[0].sign == sb[0].sign;
        }

        let hp = HyperParams {
            lr: 1e-2,
            ..HyperParams::defaults_for(OptimizerKind::OLion)
        };
        let mut invariant = true;
        for c in [1e-6, 0.37, 3.0, 1e5] {
            let (mut x, mut y) = (init.clone(), init.clone());
            let mut base = Optimizer::new(OptimizerKind::OLion, hp, PolarMode::NewtonSchulz(5), &x).unwrap();
            let mut scaled = Optimizer::new(OptimizerKind::OLion, hp, PolarMode::NewtonSchulz(5), &y).unwrap();
            for _ in 0..100 {
                let gy: Vec<DenseMatrix> = p.grad(&y).iter().map(|g| g.scaled(c)).collect();
                let gx = p.grad(&x);
                let sx = base.step(&mut x, &gx, 1e-2).unwrap();
                let sy = scaled.step(&mut y, &gy, 1e-2).unwrap();
                invariant &= sx[0].sign == sy[0].sign && sx[0].direction == sy[0].direction;
            }
            invariant &= x == y;
        }
        (
            reduction && invariant,
            format!("ns_steps=0 sign patterns equal Lion's over 100 steps: {reduction}; S and D bit-identical under gradient scaling: {invariant}"),
        )
    });
}

fn quad_run_doc(dir: &Path, steps: u64) -> Value {
    json!({
        "optimizer": "olion",
        "steps": steps,
        "diag_interval": 1,
        "checkpoint_interval": 5,
        "output_dir": dir,
        "problem": {"name": "quadratic", "rows": 16, "cols": 8, "data_seed": 10},
        "schedule": {"kind": "warmup_cosine", "warmup_steps": 2, "total_steps": 10, "lr_max": 0.05},
    })
}

#[test]
fn c10_reproducibility_and_persistence() {
    criterion(10, "reproducibility and persistence", secs(30), || {
        let tmp = TempDir::new().unwrap();
        let dir = |name: &str| tmp.path().join(name);
        let read = |p: std::path::PathBuf| fs::read(p).unwrap();
        let a = run_doc(quad_run_doc(&dir("a"), 10));
        run_doc(quad_run_doc(&dir("b"), 10));
        let identical = read(dir("a").join(LOSS_CSV)) == read(dir("b").join(LOSS_CSV));

        let first = run_doc(quad_run_doc(&dir("c"), 5));
        let resumed = resume(&first.checkpoint_paths[0], 5).unwrap();
        let split = resumed.final_blocks == a.final_blocks
            && read(dir("c").join(LOSS_CSV)) == read(dir("a").join(LOSS_CSV))
            && read(dir("c").join(DIAGNOSTICS_CSV)) == read(dir("a").join(DIAGNOSTICS_CSV));

        let ckpt = a.checkpoint_paths.last().unwrap();
        let copy = Checkpoint::load(ckpt).unwrap().save(&dir("copy")).unwrap();
        let lossless = [MANIFEST_FILE, PAYLOAD_FILE]
            .iter()
            .all(|f| read(ckpt.join(f)) == read(copy.join(f)));
        (
            identical && split && lossless,
            format!("repeat byte-identical {identical}, run(10) == run(5)+resume(5) {split}, save-load-save identical {lossless}"),
        )
    });
}

#[test]
fn c11_gradient_oracles() {
    criterion(11, "gradient oracles", secs(30), || {
        let cases: [(Box<dyn Problem>, f64); 3] = [
            (Box::new(Quadratic::new(gaussian_matrix_seeded(24, 16, 11))), 1e-7),
            (Box::new(SoftmaxClassifier::new(16, 4, 256, 11).unwrap()), 1e-5),
            (
                Box::new(TinyMlp::new(&TinyMlp::DEFAULT_WIDTHS, Activation::Tanh, 256, 11).unwrap()),
                1e-4,
            ),
        ];
        let (mut ok, mut parts) = (true, Vec::new());
        for (p, tol) in &cases {
            for seed in [12, 13] {
                let err = finite_difference_check(p.as_ref(), &p.init(seed), 1e-6);
                ok &= err < *tol;
                parts.push(format!("{} seed {seed} {err:.1e} (< {tol:.0e})", p.name()));
            }
        }
        (ok, parts.join(", "))
    });
}

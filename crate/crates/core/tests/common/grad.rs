//! Finite-difference cases shared by the gradient suite and the acceptance
//! gate. Each case returns the worst relative error over its instances.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgnn_explain::diffmath::{Tape, Var};
use sgnn_explain::esan::{eval_stream, predictions, BagBatch, EncoderKind, EsanConfig, EsanModel};
use sgnn_explain::explainer::{explainer_loss, harden, open_uniform, relaxed_masks, sample_soft, ExplainerConfig};
use sgnn_explain::policies::PolicyConfig;
use sgnn_explain::{Matrix, PolicyTag, SubgraphBag};

use super::*;

pub const INSTANCES: usize = 25;

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..6), rng.random_range(1..6))
}

fn index(rng: &mut ChaCha8Rng, len: usize, bound: usize) -> Arc<[usize]> {
    (0..len).map(|_| rng.random_range(0..bound)).collect::<Vec<_>>().into()
}

type Case = fn(&mut ChaCha8Rng) -> f64;

fn binary(rng: &mut ChaCha8Rng, op: fn(&mut Tape, Var, Var) -> Var) -> f64 {
    let (n, m) = dims(rng);
    let a = random_matrix(rng, n, m, 1.0);
    let b = random_matrix(rng, n, m, 1.0);
    check_op(rng, &[a, b], &|t, v| op(t, v[0], v[1]))
}

fn unary(rng: &mut ChaCha8Rng, kinks: bool, op: fn(&mut Tape, Var) -> Var) -> f64 {
    let (n, m) = dims(rng);
    let x = if kinks { random_nonzero(rng, n, m) } else { random_matrix(rng, n, m, 3.0) };
    check_op(rng, &[x], &|t, v| op(t, v[0]))
}

/// Every differentiable tape op, by name.
pub fn op_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("matmul", |rng| {
            let (n, k) = dims(rng);
            let m = rng.random_range(1..6);
            let a = random_matrix(rng, n, k, 1.0);
            let b = random_matrix(rng, k, m, 1.0);
            check_op(rng, &[a, b], &|t, v| t.matmul(v[0], v[1]).unwrap())
        }),
        ("add", |rng| binary(rng, |t, a, b| t.add(a, b).unwrap())),
        ("sub", |rng| binary(rng, |t, a, b| t.sub(a, b).unwrap())),
        ("mul", |rng| binary(rng, |t, a, b| t.mul(a, b).unwrap())),
        ("add_row", |rng| {
            let (n, m) = dims(rng);
            let x = random_matrix(rng, n, m, 1.0);
            let r = random_matrix(rng, 1, m, 1.0);
            check_op(rng, &[x, r], &|t, v| t.add_row(v[0], v[1]).unwrap())
        }),
        ("mul_col", |rng| {
            let (n, m) = dims(rng);
            let x = random_matrix(rng, n, m, 1.0);
            let c = random_matrix(rng, n, 1, 1.0);
            check_op(rng, &[x, c], &|t, v| t.mul_col(v[0], v[1]).unwrap())
        }),
        ("scale_by", |rng| {
            let (n, m) = dims(rng);
            let x = random_matrix(rng, n, m, 1.0);
            let s = random_matrix(rng, 1, 1, 2.0);
            check_op(rng, &[x, s], &|t, v| t.scale_by(v[0], v[1]).unwrap())
        }),
        ("scale", |rng| {
            let (n, m) = dims(rng);
            let k = rng.random_range(-3.0..3.0);
            let x = random_matrix(rng, n, m, 1.0);
            check_op(rng, &[x], &|t, v| t.scale(v[0], k))
        }),
        ("add_scalar", |rng| {
            let (n, m) = dims(rng);
            let k = rng.random_range(-3.0..3.0);
            let x = random_matrix(rng, n, m, 1.0);
            check_op(rng, &[x], &|t, v| t.add_scalar(v[0], k))
        }),
        ("sum_rows", |rng| unary(rng, false, |t, x| t.sum_rows(x))),
        ("mean_rows", |rng| unary(rng, false, |t, x| t.mean_rows(x).unwrap())),
        ("l1_norm", |rng| unary(rng, true, |t, x| t.l1_norm(x))),
        ("relu", |rng| unary(rng, true, |t, x| t.relu(x))),
        ("sigmoid", |rng| unary(rng, false, |t, x| t.sigmoid(x))),
        ("abs", |rng| unary(rng, true, |t, x| t.abs(x))),
        ("concat_cols", |rng| {
            let n = rng.random_range(1..6);
            let k = rng.random_range(1..4);
            let parts: Vec<Matrix> = (0..k)
                .map(|_| {
                    let c = rng.random_range(1..4);
                    random_matrix(rng, n, c, 1.0)
                })
                .collect();
            check_op(rng, &parts, &|t, v| t.concat_cols(v).unwrap())
        }),
        ("gather_rows", |rng| {
            let (n, m) = dims(rng);
            let x = random_matrix(rng, n, m, 1.0);
            let len = rng.random_range(1..10);
            let idx = index(rng, len, n);
            check_op(rng, &[x], &|t, v| t.gather_rows(v[0], idx.clone()).unwrap())
        }),
        ("scatter_add_rows", |rng| {
            let (n, m) = dims(rng);
            let out = rng.random_range(1..6);
            let x = random_matrix(rng, n, m, 1.0);
            let idx = index(rng, n, out);
            check_op(rng, &[x], &|t, v| t.scatter_add_rows(v[0], idx.clone(), out).unwrap())
        }),
        ("softmax_cross_entropy", |rng| {
            let (n, c) = (rng.random_range(1..6), rng.random_range(2..5));
            let x = random_matrix(rng, n, c, 3.0);
            let targets = index(rng, n, c);
            check_op(rng, &[x], &|t, v| t.softmax_cross_entropy(v[0], targets.clone()).unwrap())
        }),
        ("gin_chain", |rng| {
            let n = rng.random_range(2..6);
            let e = rng.random_range(1..8);
            let x = random_matrix(rng, n, 3, 1.0);
            let w = random_matrix(rng, e, 1, 1.0);
            let w1 = random_matrix(rng, 3, 4, 1.0);
            let b1 = random_matrix(rng, 1, 4, 1.0);
            let src = index(rng, e, n);
            let dst = index(rng, e, n);
            check_op(rng, &[x, w, w1, b1], &|t, v| {
                let msg = t.gather_rows(v[0], src.clone()).unwrap();
                let msg = t.mul_col(msg, v[1]).unwrap();
                let agg = t.scatter_add_rows(msg, dst.clone(), n).unwrap();
                let h = t.add(agg, v[0]).unwrap();
                let h = t.matmul(h, v[2]).unwrap();
                let h = t.add_row(h, v[3]).unwrap();
                t.sigmoid(h)
            })
        }),
    ]
}

/// Runs `case` on `INSTANCES` seeded instances; returns the worst error.
pub fn worst_error(name: &str, case: Case) -> f64 {
    let seed = name.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..INSTANCES).map(|_| case(&mut rng)).fold(0.0, f64::max)
}

/// Straight-through op: forward is the step, backward the identity. Returns
/// the number of instances that behaved.
pub fn straight_through_ok() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    (0..INSTANCES)
        .filter(|_| {
            let (n, m) = dims(&mut rng);
            let x = Matrix::from_vec(n, m, (0..n * m).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let r = random_matrix(&mut rng, n, m, 1.0);
            let th = rng.random_range(0.05..0.95);
            let mut tape = Tape::new();
            let xv = tape.var(x.clone());
            let y = tape.straight_through_threshold(xv, th).unwrap();
            let forward = tape
                .value(y)
                .iter()
                .zip(x.data())
                .all(|(&yi, &xi)| yi == if xi > th { 1.0 } else { 0.0 });
            let l = contract(&mut tape, y, &r);
            let g = tape.backward(l).unwrap();
            forward && g.get(xv).unwrap() == r.data()
        })
        .count()
}

/// Explainer loss as a function of the slot logits `omega`. With `offset`
/// the classifier sees `soft + offset` instead of the hardened mask, which is
/// the smooth function whose gradient straight-through reports.
#[allow(clippy::too_many_arguments)]
pub fn explainer_loss_at(
    m: &EsanModel,
    batch: &BagBatch,
    targets: &Arc<[usize]>,
    omega: &[f64],
    uniforms: &[f64],
    tau: f64,
    cfg: &ExplainerConfig,
    offset: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let om = tape.var(Matrix::from_vec(omega.len(), 1, omega.to_vec()).unwrap());
    let (soft, hard) = relaxed_masks(&mut tape, om, uniforms, tau, cfg).unwrap();
    let weights = match offset {
        Some(off) => {
            let c = tape.column(off.to_vec());
            tape.add(soft, c).unwrap()
        }
        None => hard,
    };
    let bound = m.params().bind(&mut tape, false);
    let out = m.forward(&mut tape, &bound, batch, Some(weights)).unwrap();
    let l = explainer_loss(&mut tape, batch, out.logits, targets.clone(), soft, cfg.l1_coeff).unwrap();
    let v = tape.scalar(l.total);
    let g = tape.backward(l.total).unwrap().get(om).unwrap().to_vec();
    (v, g)
}

/// End-to-end `d L / d omega` against central differences of the
/// straight-through surrogate, for `instances` random batches through a
/// classifier. Returns the worst relative error and whether every analytic
/// gradient was nonzero.
pub fn explainer_gradient_check(m: &EsanModel, policy: &PolicyConfig, instances: usize, seed: u64) -> (f64, bool) {
    let cfg = ExplainerConfig { l1_coeff: 0.7, ..ExplainerConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut nonzero = true;
    let dim = m.config().input_dim;
    for k in 0..instances {
        let bags: Vec<SubgraphBag> = (0..3)
            .map(|j| {
                let n = rng.random_range(4..9);
                let g = Arc::new(random_graph(&mut rng, n, 0.4, dim));
                policy.bag(&g, eval_stream(k * 3 + j)).unwrap()
            })
            .collect();
        let refs: Vec<&SubgraphBag> = bags.iter().collect();
        let batch = BagBatch::new(&refs).unwrap();
        if batch.num_slots() == 0 {
            continue;
        }
        let (logits, _) = m.evaluate(&batch, None).unwrap();
        let targets: Arc<[usize]> = predictions(&logits).into();
        let n = batch.num_slots();
        let tau = rng.random_range(0.5..3.0);
        let omega: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let uniforms: Vec<f64> = (0..n).map(|_| open_uniform(&mut rng)).collect();
        let (_, analytic) = explainer_loss_at(m, &batch, &targets, &omega, &uniforms, tau, &cfg, None);
        nonzero &= analytic.iter().any(|&g| g != 0.0);
        let soft0: Vec<f64> = omega
            .iter()
            .zip(&uniforms)
            .map(|(&w, &u)| sample_soft(w, tau, u, cfg.noise).unwrap())
            .collect();
        let hard0 = harden(&soft0, cfg.threshold).unwrap();
        let offset: Vec<f64> = hard0.iter().zip(&soft0).map(|(h, s)| h - s).collect();
        let numeric = numeric_grad(&omega, &|w| {
            explainer_loss_at(m, &batch, &targets, w, &uniforms, tau, &cfg, Some(&offset)).0
        });
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    (worst, nonzero)
}

/// Untrained classifier for gradient checks.
pub fn random_classifier(encoder: EncoderKind, dim: usize, seed: u64) -> (EsanModel, PolicyConfig) {
    let mut cfg = EsanConfig::new(encoder, dim, 2);
    cfg.hidden = 8;
    cfg.set_hidden = 8;
    let policy = if encoder == EncoderKind::GinBaseline {
        PolicyConfig::new(PolicyTag::Whole)
    } else {
        let mut p = PolicyConfig::new(PolicyTag::EdgeDeletion);
        p.max_bag_size = Some(5);
        p
    };
    (EsanModel::new(cfg, seed).unwrap(), policy)
}

//! Acceptance gate: every release-blocking property of the library, one
//! numbered test per check, in dependency order. Each test prints a short
//! evidence line; the harness line (`test c6_... ok`) is the verdict.
//!
//! c1  gradient correctness of every graph op and the full log-prob graph
//! c2  reward functions vs. independent loop oracles
//! c3  PPO ratio/clip identities at the old policy and on hand cases
//! c4  decoder causality under token perturbation
//! c5  windowing, z-scoring, and split-leakage protocol
//! c6  cross-user generalization: invariance reward vs. ablation
//! c7  training signal: objective rises on the default run
//! c8  result aggregation reproduces hand-rounded reference rows
//! c9  real-data pipeline substitute (runs only when corpora are present)

use std::collections::HashSet;
use std::env;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use harfeat_core::classifier::{flatten, LrModel};
use harfeat_core::data::{
    build_logo_splits, ingest_dsads, ingest_pamap2, slide_windows, synth_generate, window_count,
    windowize, zscore_per_user, ChannelSet, Dataset, SensorRecording, SplitPlan, SynthSpec,
};
use harfeat_core::eval::{
    aggregate, majority_baseline, run_split, ConfusionMatrix, EvalError, ExperimentResult,
    RunOptions,
};
use harfeat_core::model::{ModelConfig, PolicyNetwork};
use harfeat_core::numkit::{check_gradient, derive_seed, AttnMask, Graph, Matrix, Node, Rng};
use harfeat_core::ppo::{
    collect_rollouts, ppo_loss, surrogate, train, BatchSampler, BatchSpec, PpoConfig, TrainLog,
};
use harfeat_core::rewards::{r_cls, r_inv, RewardBatch};

fn rand_mat(rng: &mut Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..r * c).map(|_| rng.uniform_in(lo, hi)).collect();
    Matrix::new(r, c, data).unwrap()
}

/// Random matrix whose entries keep `margin` clear of every value in
/// `avoid`, so kinked ops (relu, clamp, min) see no boundary within a
/// finite-difference step.
fn rand_mat_avoiding(
    rng: &mut Rng,
    r: usize,
    c: usize,
    lo: f64,
    hi: f64,
    avoid: &[f64],
    margin: f64,
) -> Matrix {
    let mut data = Vec::with_capacity(r * c);
    while data.len() < r * c {
        let v = rng.uniform_in(lo, hi);
        if avoid.iter().all(|a| (v - a).abs() > margin) {
            data.push(v);
        }
    }
    Matrix::new(r, c, data).unwrap()
}

// ---------------------------------------------------------------- c1

#[test]
fn c1_gradients_match_central_differences() {
    let t0 = Instant::now();
    let step = 1e-5;
    let tol = 1e-4;
    let mut rng = Rng::new(0xC1);
    let mut worst: f64 = 0.0;
    let mut checks = 0usize;

    let mut run = |name: &str, err: f64| {
        assert!(
            err <= tol,
            "gradient check failed for {name}: rel err {err:.3e} > {tol:.0e}"
        );
        if err > worst {
            worst = err;
        }
        checks += 1;
    };

    for _ in 0..3 {
        let r = 2 + rng.below(3);
        let c = 2 + rng.below(3);
        let m = 2 + rng.below(3);

        // Fixed co-inputs so per-entry gradients are non-uniform.
        let w_rc = rand_mat(&mut rng, r, c, -1.0, 1.0);
        let w_cm = rand_mat(&mut rng, c, m, -1.0, 1.0);
        let w_rm = rand_mat(&mut rng, r, m, -1.0, 1.0);
        let w_cr = rand_mat(&mut rng, c, r, -1.0, 1.0);
        let w_r1 = rand_mat(&mut rng, r, 1, -1.0, 1.0);
        let bias = rand_mat(&mut rng, 1, c, -1.0, 1.0);
        let x = rand_mat(&mut rng, r, c, -2.0, 2.0);

        // Weighted mean: mean_all(op(x) .* W) gives every entry of op(x)
        // its own weight, so a transposed or misrouted gradient cannot
        // cancel out.
        let weighted = |g: &mut Graph, node: Node, w: &Matrix| {
            let wn = g.leaf(w.clone());
            let p = g.mul(node, wn)?;
            g.mean_all(p)
        };

        run(
            "matmul (left)",
            check_gradient(
                |g, a| {
                    let b = g.leaf(w_cm.clone());
                    let o = g.matmul(a, b)?;
                    weighted(g, o, &w_rm)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "matmul (right)",
            check_gradient(
                |g, b| {
                    let a = g.leaf(w_rc.clone());
                    let o = g.matmul(a, b)?;
                    weighted(g, o, &w_rm)
                },
                &rand_mat(&mut rng, c, m, -2.0, 2.0),
                step,
            )
            .unwrap(),
        );
        run(
            "transpose",
            check_gradient(
                |g, a| {
                    let o = g.transpose(a)?;
                    weighted(g, o, &w_cr)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "add",
            check_gradient(
                |g, a| {
                    let b = g.leaf(w_rc.clone());
                    let o = g.add(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "sub (left)",
            check_gradient(
                |g, a| {
                    let b = g.leaf(w_rc.clone());
                    let o = g.sub(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "sub (right)",
            check_gradient(
                |g, b| {
                    let a = g.leaf(w_rc.clone());
                    let o = g.sub(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "mul",
            check_gradient(
                |g, a| {
                    let b = g.leaf(w_rc.clone());
                    let o = g.mul(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        // min_elem: keep the two sides separated so the min never switches
        // branch within a finite-difference step.
        let other = {
            let shifted: Vec<f64> = x
                .as_slice()
                .iter()
                .map(|&v| v + if rng.uniform() < 0.5 { 0.5 } else { -0.5 })
                .collect();
            Matrix::new(r, c, shifted).unwrap()
        };
        run(
            "min_elem",
            check_gradient(
                |g, a| {
                    let b = g.leaf(other.clone());
                    let o = g.min_elem(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "scale",
            check_gradient(
                |g, a| {
                    let o = g.scale(a, -1.7)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "relu",
            check_gradient(
                |g, a| {
                    let o = g.relu(a)?;
                    weighted(g, o, &w_rc)
                },
                &rand_mat_avoiding(&mut rng, r, c, -2.0, 2.0, &[0.0], 0.05),
                step,
            )
            .unwrap(),
        );
        run(
            "exp",
            check_gradient(
                |g, a| {
                    let o = g.exp(a)?;
                    weighted(g, o, &w_rc)
                },
                &rand_mat(&mut rng, r, c, -1.0, 1.0),
                step,
            )
            .unwrap(),
        );
        run(
            "ln",
            check_gradient(
                |g, a| {
                    let o = g.ln(a)?;
                    weighted(g, o, &w_rc)
                },
                &rand_mat(&mut rng, r, c, 0.5, 2.5),
                step,
            )
            .unwrap(),
        );
        run(
            "clamp",
            check_gradient(
                |g, a| {
                    let o = g.clamp(a, -0.9, 1.1)?;
                    weighted(g, o, &w_rc)
                },
                &rand_mat_avoiding(&mut rng, r, c, -2.0, 2.0, &[-0.9, 1.1], 0.05),
                step,
            )
            .unwrap(),
        );
        run(
            "add_row_broadcast (input)",
            check_gradient(
                |g, a| {
                    let b = g.leaf(bias.clone());
                    let o = g.add_row_broadcast(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "add_row_broadcast (bias)",
            check_gradient(
                |g, b| {
                    let a = g.leaf(w_rc.clone());
                    let o = g.add_row_broadcast(a, b)?;
                    weighted(g, o, &w_rc)
                },
                &bias,
                step,
            )
            .unwrap(),
        );
        run(
            "softmax_rows",
            check_gradient(
                |g, a| {
                    let o = g.softmax_rows(a)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        // Random mask, every row keeping at least one allowed column.
        let mask = {
            let mut allowed = vec![false; r * c];
            for (i, row) in allowed.chunks_mut(c).enumerate() {
                for a in row.iter_mut() {
                    *a = rng.uniform() < 0.6;
                }
                row[i % c] = true;
            }
            AttnMask::new(r, c, allowed).unwrap()
        };
        run(
            "softmax_rows_masked",
            check_gradient(
                |g, a| {
                    let o = g.softmax_rows_masked(a, &mask)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        let gain = rand_mat(&mut rng, 1, c, 0.5, 1.5);
        run(
            "layer_norm (input)",
            check_gradient(
                |g, a| {
                    let gn = g.leaf(gain.clone());
                    let bn = g.leaf(bias.clone());
                    let o = g.layer_norm(a, gn, bn, 1e-5)?;
                    weighted(g, o, &w_rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "layer_norm (gain)",
            check_gradient(
                |g, gn| {
                    let a = g.leaf(x.clone());
                    let bn = g.leaf(bias.clone());
                    let o = g.layer_norm(a, gn, bn, 1e-5)?;
                    weighted(g, o, &w_rc)
                },
                &gain,
                step,
            )
            .unwrap(),
        );
        run(
            "layer_norm (bias)",
            check_gradient(
                |g, bn| {
                    let a = g.leaf(x.clone());
                    let gn = g.leaf(gain.clone());
                    let o = g.layer_norm(a, gn, bn, 1e-5)?;
                    weighted(g, o, &w_rc)
                },
                &bias,
                step,
            )
            .unwrap(),
        );
        let w_2rc = rand_mat(&mut rng, 2 * r, c, -1.0, 1.0);
        run(
            "concat_rows",
            check_gradient(
                |g, a| {
                    let b = g.leaf(w_rc.clone());
                    let o = g.concat_rows(&[a, b])?;
                    weighted(g, o, &w_2rc)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        let w_r2c = rand_mat(&mut rng, r, 2 * c, -1.0, 1.0);
        run(
            "concat_cols",
            check_gradient(
                |g, a| {
                    let b = g.leaf(w_rc.clone());
                    let o = g.concat_cols(&[a, b])?;
                    weighted(g, o, &w_r2c)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "row_sums",
            check_gradient(
                |g, a| {
                    let o = g.row_sums(a)?;
                    weighted(g, o, &w_r1)
                },
                &x,
                step,
            )
            .unwrap(),
        );
        run(
            "sum_all",
            check_gradient(|g, a| g.sum_all(a), &x, step).unwrap(),
        );
        run(
            "mean_all",
            check_gradient(|g, a| g.mean_all(a), &x, step).unwrap(),
        );
    }

    // Full teacher-forced log-prob graph: encoder, decoder, heads, Gaussian
    // densities. Checked against the window input and against a sample of
    // parameter matrices on three random small architectures.
    for trial in 0..3u64 {
        let mut crng = Rng::new(0xC1F0 + trial);
        let mut cfg = ModelConfig::new(3 + crng.below(3), 2 + crng.below(2));
        cfg.d_model = [4, 6, 8][crng.below(3)];
        cfg.n_heads = if cfg.d_model % 4 == 0 && crng.uniform() < 0.5 { 2 } else { 1 };
        cfg.d_ff = 8;
        cfg.s = 2 + crng.below(2);
        cfg.k = 2 + crng.below(2);
        let net = PolicyNetwork::init(cfg.clone(), &mut crng).unwrap();
        let x = rand_mat(&mut crng, cfg.l, cfg.d, -1.0, 1.0);
        let tokens = rand_mat(&mut crng, cfg.s, cfg.k, -1.0, 1.0);

        run(
            "log_prob graph (window input)",
            check_gradient(
                |g, xn| {
                    let bound = net.bind(g);
                    let h = bound.encode_node(g, xn).expect("encode");
                    let lp = bound.log_prob(g, h, &tokens).expect("log_prob");
                    g.sum_all(lp)
                },
                &x,
                step,
            )
            .unwrap(),
        );

        let names: Vec<String> =
            net.params.iter().map(|(name, _)| name.to_string()).collect();
        // First, middle, and last parameter in iteration order: touches the
        // encoder front, the decoder middle, and the distribution heads.
        for idx in [0, names.len() / 2, names.len() - 1] {
            let name = &names[idx];
            let at = net.params.get(name).clone();
            run(
                &format!("log_prob graph (param {name})"),
                check_gradient(
                    |g, pn| {
                        let bound = net.bind_with_override(g, name, pn);
                        let xl = g.leaf(x.clone());
                        let h = bound.encode_node(g, xl).expect("encode");
                        let lp = bound.log_prob(g, h, &tokens).expect("log_prob");
                        g.sum_all(lp)
                    },
                    &at,
                    step,
                )
                .unwrap(),
            );
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    assert!(secs <= 60.0, "gradient checks took {secs:.1} s, budget is 60 s");
    println!(
        "c1: {checks} gradient checks passed, worst rel err {worst:.3e} (tol 1e-4), {secs:.1} s"
    );
}

// ---------------------------------------------------------------- c2

/// Loop transcription of the class-discrimination reward: mean squared
/// Frobenius distance between class centroids over ordered pairs.
fn oracle_r_cls(features: &[Matrix], labels: &[usize]) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let centroids: Vec<Matrix> =
        classes.iter().map(|&c| oracle_centroid(features, labels, c)).collect();
    let n = classes.len();
    let mut sum = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                sum += oracle_frob_sq(&centroids[a], &centroids[b]);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

fn oracle_centroid(features: &[Matrix], labels: &[usize], class: usize) -> Matrix {
    let (r, c) = (features[0].rows(), features[0].cols());
    let mut sum = vec![0.0; r * c];
    let mut n = 0usize;
    for (f, &y) in features.iter().zip(labels) {
        if y == class {
            for (o, &v) in sum.iter_mut().zip(f.as_slice()) {
                *o += v;
            }
            n += 1;
        }
    }
    for o in &mut sum {
        *o *= 1.0 / n as f64;
    }
    Matrix::new(r, c, sum).unwrap()
}

fn oracle_cell_centroid(
    features: &[Matrix],
    labels: &[usize],
    users: &[u32],
    class: usize,
    user: u32,
) -> Matrix {
    let (r, c) = (features[0].rows(), features[0].cols());
    let mut sum = vec![0.0; r * c];
    let mut n = 0usize;
    for ((f, &y), &u) in features.iter().zip(labels).zip(users) {
        if y == class && u == user {
            for (o, &v) in sum.iter_mut().zip(f.as_slice()) {
                *o += v;
            }
            n += 1;
        }
    }
    for o in &mut sum {
        *o *= 1.0 / n as f64;
    }
    Matrix::new(r, c, sum).unwrap()
}

fn oracle_frob_sq(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// Loop transcription of the user-invariance reward: per class, the mean
/// per-user scatter around the cell centroid plus the mean squared gap
/// between per-user centroids over ordered pairs, summed and negated.
fn oracle_r_inv(features: &[Matrix], labels: &[usize], users: &[u32]) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut total = 0.0;
    for &class in &classes {
        let mut class_users: Vec<u32> = labels
            .iter()
            .zip(users)
            .filter(|(&y, _)| y == class)
            .map(|(_, &u)| u)
            .collect();
        class_users.sort_unstable();
        class_users.dedup();
        let uc = class_users.len();

        let mut intra = 0.0;
        for &user in &class_users {
            let centroid = oracle_cell_centroid(features, labels, users, class, user);
            let mut scatter = 0.0;
            let mut n = 0usize;
            for ((f, &y), &u) in features.iter().zip(labels).zip(users) {
                if y == class && u == user {
                    scatter += oracle_frob_sq(f, &centroid);
                    n += 1;
                }
            }
            intra += scatter / n as f64;
        }
        intra /= uc as f64;

        let mut inter = 0.0;
        if uc >= 2 {
            for &ua in &class_users {
                for &ub in &class_users {
                    if ua != ub {
                        let ca = oracle_cell_centroid(features, labels, users, class, ua);
                        let cb = oracle_cell_centroid(features, labels, users, class, ub);
                        inter += oracle_frob_sq(&ca, &cb);
                    }
                }
            }
            inter /= (uc * (uc - 1)) as f64;
        }
        total += intra + inter;
    }
    -total
}

#[test]
fn c2_rewards_match_loop_oracles() {
    let t0 = Instant::now();
    let mut rng = Rng::new(0xC2);
    let tol = 1e-12;
    let mut worst: f64 = 0.0;

    for _ in 0..100 {
        let num_classes = 2 + rng.below(4); // 2..=5
        let num_users = 1 + rng.below(4); // 1..=4
        let s = 1 + rng.below(6); // 1..=6
        let k = 1 + rng.below(8); // 1..=8

        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut users = Vec::new();
        for class in 1..=num_classes {
            for user in 1..=num_users as u32 {
                for _ in 0..1 + rng.below(3) {
                    features.push(rand_mat(&mut rng, s, k, -2.0, 2.0));
                    labels.push(class);
                    users.push(user);
                }
            }
        }

        let batch =
            RewardBatch::new(features.clone(), labels.clone(), users.clone()).unwrap();
        let dc = (r_cls(&batch).unwrap() - oracle_r_cls(&features, &labels)).abs();
        let di = (r_inv(&batch) - oracle_r_inv(&features, &labels, &users)).abs();
        assert!(dc <= tol, "r_cls deviates from loop oracle by {dc:.3e}");
        assert!(di <= tol, "r_inv deviates from loop oracle by {di:.3e}");
        worst = worst.max(dc).max(di);
    }

    let secs = t0.elapsed().as_secs_f64();
    assert!(secs <= 10.0, "reward oracle sweep took {secs:.1} s, budget is 10 s");
    println!("c2: 100 random batches matched both loop oracles, worst abs diff {worst:.3e}, {secs:.2} s");
}

// ---------------------------------------------------------------- c3

/// Tiny two-class, two-user dataset for rollout plumbing.
fn tiny_dataset(rng: &mut Rng, l: usize, d: usize) -> Dataset {
    let mut windows = Vec::new();
    let mut id = 0u64;
    for y in 1..=2usize {
        for user in 1..=2u32 {
            for _ in 0..3 {
                windows.push(harfeat_core::data::LabeledWindow {
                    x: rand_mat(rng, l, d, -1.0, 1.0),
                    y,
                    user,
                    origin: None,
                    id,
                });
                id += 1;
            }
        }
    }
    Dataset { windows, num_classes: 2, num_channels: d, window_len: l }
}

#[test]
fn c3_ppo_ratio_and_clip_identities() {
    // At the frozen policy the ratios are exactly one and the loss reduces
    // to the negated mean advantage, bit for bit.
    let mut rng = Rng::new(0xC3);
    let (l, d) = (6, 2);
    let mut mc = ModelConfig::new(l, d);
    mc.d_model = 8;
    mc.d_ff = 16;
    mc.s = 3;
    mc.k = 4;
    let net = PolicyNetwork::init(mc.clone(), &mut rng).unwrap();
    let data = tiny_dataset(&mut rng, l, d);
    let sampler = BatchSampler::new(&data);
    let cfg = PpoConfig {
        batch: BatchSpec { classes_per_batch: 2, users_per_class: 2, windows_per_cell: 2 },
        ..PpoConfig::default()
    };
    let buffer = collect_rollouts(&net, &data, &sampler, &cfg, &mut rng).unwrap();

    let advantages: Vec<f64> =
        (0..buffer.items.len()).map(|i| 0.1 * i as f64 - 0.3).collect();
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let (loss, stats) =
        ppo_loss(&mut g, &bound, &buffer, &advantages, cfg.epsilon).unwrap();
    assert_eq!(
        stats.mean_abs_ratio_minus_1, 0.0,
        "ratios differ from 1 at the unchanged policy"
    );
    assert_eq!(stats.clip_frac, 0.0);

    // Mirror of the graph's reduction: per-token advantages in buffer
    // order, ascending-index sum, times 1/n, times -1.
    let s = mc.s;
    let mut acc = 0.0;
    let mut n = 0usize;
    for &a in &advantages {
        for _ in 0..s {
            acc += a;
            n += 1;
        }
    }
    let want = acc * (1.0 / n as f64) * -1.0;
    let got = g.value(loss).item();
    assert_eq!(
        got.to_bits(),
        want.to_bits(),
        "loss {got} != -mean(adv) {want} at the unchanged policy"
    );

    // Clip arithmetic on the three hand cases, driven through the same
    // surrogate used in training. Expectations are built from the same
    // float expressions the definition uses.
    let eps = 0.2;
    let cases: [(f64, f64, f64); 3] = [
        (1.0, 0.7, -0.7),
        (2.0, 1.0, -((1.0 + eps) * 1.0)),
        (0.5, -1.0, -((1.0 - eps) * -1.0)),
    ];
    for (ratio, adv, want) in cases {
        let mut g = Graph::new();
        let r = g.leaf(Matrix::scalar(ratio));
        let a = g.leaf(Matrix::scalar(adv));
        let out = surrogate(&mut g, r, a, eps).unwrap();
        let got = g.value(out).item();
        assert_eq!(
            got.to_bits(),
            want.to_bits(),
            "clip case (ratio {ratio}, adv {adv}): got {got}, want {want}"
        );
    }
    println!(
        "c3: ratios exactly 1 and loss == -mean(adv) at the frozen policy ({} windows x {} tokens); all 3 clip hand cases exact",
        buffer.items.len(),
        s
    );
}

// ---------------------------------------------------------------- c4

#[test]
fn c4_decoder_is_causal_under_token_perturbation() {
    let mut cases = 0usize;
    for trial in 0..3u64 {
        let mut rng = Rng::new(0xC4 + trial);
        let mut cfg = ModelConfig::new(4 + rng.below(3), 2 + rng.below(2));
        cfg.d_model = 8;
        cfg.d_ff = 16;
        cfg.s = 3 + rng.below(3); // 3..=5 steps
        cfg.k = 2 + rng.below(3);
        let net = PolicyNetwork::init(cfg.clone(), &mut rng).unwrap();
        let x = rand_mat(&mut rng, cfg.l, cfg.d, -1.0, 1.0);
        let h = net.encode(&x).unwrap();
        let tokens = rand_mat(&mut rng, cfg.s, cfg.k, -1.0, 1.0);

        // Teacher-forced per-step head outputs for a token matrix.
        let heads = |tok: &Matrix| -> Vec<(Vec<f64>, Vec<f64>)> {
            (0..cfg.s)
                .map(|i| {
                    let prefix: Vec<Vec<f64>> =
                        (0..i).map(|j| tok.row(j).to_vec()).collect();
                    net.decode_step(&h, &prefix).unwrap()
                })
                .collect()
        };
        let base_heads = heads(&tokens);
        let base_lp = net.log_prob(&x, &tokens).unwrap();

        for j in 0..cfg.s {
            let mut perturbed = tokens.clone();
            perturbed.set(j, rng.below(cfg.k), perturbed.get(j, 0) + 1.3);
            let pert_heads = heads(&perturbed);
            let pert_lp = net.log_prob(&x, &perturbed).unwrap();

            // Steps up to and including j never see token j.
            for i in 0..=j {
                let (bm, bs) = &base_heads[i];
                let (pm, ps) = &pert_heads[i];
                for (a, b) in bm.iter().zip(pm).chain(bs.iter().zip(ps)) {
                    assert_eq!(
                        a.to_bits(),
                        b.to_bits(),
                        "head output at step {i} changed when token {j} was perturbed"
                    );
                }
            }
            // Log-densities before step j score unchanged tokens under
            // unchanged heads; step j scores the changed token.
            for i in 0..j {
                assert_eq!(base_lp[i].to_bits(), pert_lp[i].to_bits());
            }
            assert_ne!(
                base_lp[j].to_bits(),
                pert_lp[j].to_bits(),
                "log-density at step {j} ignored its own token"
            );
            // Later heads condition on token j and must react.
            if j + 1 < cfg.s {
                let changed = (j + 1..cfg.s).any(|i| {
                    let (bm, _) = &base_heads[i];
                    let (pm, _) = &pert_heads[i];
                    bm.iter().zip(pm).any(|(a, b)| a != b)
                });
                assert!(changed, "no step after {j} reacted to the perturbation");
            }
            cases += 1;
        }
    }
    println!("c4: {cases} perturbation cases: steps <= j bit-identical, later steps react");
}

// ---------------------------------------------------------------- c5

#[test]
fn c5_windowing_zscore_and_leakage_protocol() {
    // Window counts against an enumeration oracle for T in 1..=300, across
    // three window geometries.
    let mut count_checks = 0usize;
    for (rate, seconds, overlap) in [(10.0, 3.0, 0.5), (25.0, 3.0, 0.5), (10.0, 2.0, 0.75)] {
        let l = (seconds * rate as f64).round() as usize;
        let step = ((l as f64) * (1.0 - overlap)).floor().max(1.0) as usize;
        for t in 1..=300usize {
            let mut oracle = 0usize;
            let mut start = 0usize;
            while start + l <= t {
                oracle += 1;
                start += step;
            }
            assert_eq!(
                window_count(t, l, step),
                oracle,
                "window_count(T={t}, l={l}, step={step})"
            );
            let rec = SensorRecording {
                user: 1,
                activity: 1,
                sample_rate: rate,
                samples: Matrix::filled(t, 2, 0.5),
            };
            assert_eq!(
                slide_windows(&rec, seconds, overlap).unwrap().len(),
                oracle,
                "slide_windows(T={t}, l={l}, step={step})"
            );
            count_checks += 1;
        }
    }

    // Per-user z-scoring: every (user, channel) lands on mean 0, population
    // variance 1 within 1e-9.
    let mut rng = Rng::new(0xC5);
    let mut recs = Vec::new();
    for user in 1..=3u32 {
        for activity in 1..=2usize {
            let vals: Vec<f64> = (0..200 * 3)
                .map(|i| {
                    rng.uniform_in(-1.0, 1.0) * user as f64
                        + (i % 3) as f64 * 2.0
                        + user as f64
                })
                .collect();
            let m = Matrix::new(200, 3, vals).unwrap();
            recs.push(SensorRecording { user, activity, sample_rate: 10.0, samples: m });
        }
    }
    zscore_per_user(&mut recs, 1e-8).unwrap();
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for user in 1..=3u32 {
        for ch in 0..3usize {
            let vals: Vec<f64> = recs
                .iter()
                .filter(|r| r.user == user)
                .flat_map(|r| (0..r.samples.rows()).map(|t| r.samples.get(t, ch)))
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() <= 1e-9, "user {user} ch {ch}: |mean| = {:.3e}", mean.abs());
            assert!(
                (var - 1.0).abs() <= 1e-9,
                "user {user} ch {ch}: |var-1| = {:.3e}",
                (var - 1.0).abs()
            );
            worst_mean = worst_mean.max(mean.abs());
            worst_var = worst_var.max((var - 1.0).abs());
        }
    }

    // Leakage guard: a clean leave-one-group-out split runs; a split
    // sharing a window id or a window origin with the training side is
    // refused outright.
    let spec = SynthSpec { duration_s: 12.0, ..SynthSpec::default() };
    let mut recs = synth_generate(&spec).unwrap();
    zscore_per_user(&mut recs, 1e-8).unwrap();
    let data = windowize(&recs, 3.0, 0.5).unwrap();
    let groups = vec![
        ("A".to_string(), vec![1, 2]),
        ("B".to_string(), vec![3, 4]),
    ];
    let plans = build_logo_splits(&groups).unwrap();
    let mut mc = ModelConfig::new(data.window_len, data.num_channels);
    mc.d_model = 8;
    mc.d_ff = 16;
    mc.s = 2;
    mc.k = 3;
    let cfg = PpoConfig { rounds: 0, ..PpoConfig::default() };
    let opts = RunOptions::default();
    for plan in &plans {
        run_split(plan, &data, &mc, &cfg, &opts)
            .unwrap_or_else(|e| panic!("clean split {} was refused: {e}", plan.name));
    }

    // Same window id on both sides (as after a duplicated export row).
    let mut leaky = data.clone();
    let mut copy = leaky.windows[0].clone(); // a user-1 (source) window
    copy.user = 3;
    copy.origin = None;
    leaky.windows.push(copy);
    let err = run_split(&plans[0], &leaky, &mc, &cfg, &opts).unwrap_err();
    assert!(
        matches!(err, EvalError::Leakage { .. }),
        "id-collision split got {err} instead of the leakage refusal"
    );

    // Distinct id, same origin recording (a re-cut of training material).
    let mut leaky = data.clone();
    let mut copy = leaky.windows[0].clone();
    copy.user = 3;
    copy.id = leaky.windows.iter().map(|w| w.id).max().unwrap() + 1;
    leaky.windows.push(copy);
    let err = run_split(&plans[0], &leaky, &mc, &cfg, &opts).unwrap_err();
    assert!(
        matches!(err, EvalError::Leakage { .. }),
        "origin-collision split got {err} instead of the leakage refusal"
    );

    println!(
        "c5: {count_checks} window-count cases match enumeration; z-score worst |mean| {worst_mean:.2e}, worst |var-1| {worst_var:.2e}; leakage guard quiet on clean splits, trips on both corruptions"
    );
}

// ---------------------------------------------------------------- c6/c7

struct ArmRun {
    seed: u64,
    accuracy: f64,
    log: TrainLog,
}

struct Experiment {
    full: Vec<ArmRun>,
    ablation: Vec<ArmRun>,
    crosscheck_bits_equal: bool,
    secs: f64,
}

/// The default cross-user experiment, shared by c6 and c7: the default
/// synthetic corpus, leave-one-user-out over all four plans, three master
/// seeds, trained at the default configuration with and without the
/// invariance reward.
fn experiment() -> &'static Experiment {
    static EXP: OnceLock<Experiment> = OnceLock::new();
    EXP.get_or_init(|| {
        let t0 = Instant::now();
        let spec = SynthSpec::default();
        let mut recs = synth_generate(&spec).unwrap();
        zscore_per_user(&mut recs, 1e-8).unwrap();
        let data = windowize(&recs, 3.0, 0.5).unwrap();
        let groups: Vec<(String, Vec<u32>)> = (1..=spec.num_users)
            .map(|u| (((b'A' + (u - 1) as u8) as char).to_string(), vec![u]))
            .collect();
        let plans = build_logo_splits(&groups).unwrap();
        assert_eq!(plans.len(), 4, "default corpus must yield 4 plans");

        let model_cfg = ModelConfig::new(data.window_len, data.num_channels);
        let full_cfg = PpoConfig::default();
        let ablation_cfg = PpoConfig { w_inv: 0.0, ..PpoConfig::default() };
        assert_eq!(full_cfg.w_cls, 5.0);
        assert_eq!(full_cfg.w_inv, 0.5);

        let mut full = Vec::new();
        let mut ablation = Vec::new();
        for seed in 0..3u64 {
            for plan in &plans {
                for (arm, out) in
                    [(&full_cfg, &mut full), (&ablation_cfg, &mut ablation)]
                {
                    let (accuracy, log) =
                        run_split_logged(plan, &data, &model_cfg, arm, seed);
                    out.push(ArmRun { seed, accuracy, log });
                }
            }
        }
        let secs = t0.elapsed().as_secs_f64();

        // The mirrored runner must agree with the library's own split
        // runner bit for bit, or the experiment is not measuring the
        // pipeline it claims to. A short-rounds run exercises the same
        // seed-derivation/probe/scoring path at a fraction of the cost.
        let cheap_cfg = PpoConfig { rounds: 3, ..full_cfg.clone() };
        let reference = run_split(
            &plans[0],
            &data,
            &model_cfg,
            &cheap_cfg,
            &RunOptions { probe_lambda: 1e-2, seed: 0 },
        )
        .unwrap();
        let (mirrored, _) = run_split_logged(&plans[0], &data, &model_cfg, &cheap_cfg, 0);
        let crosscheck_bits_equal = reference.accuracy.to_bits() == mirrored.to_bits();

        Experiment { full, ablation, crosscheck_bits_equal, secs }
    })
}

/// run_split with the training log kept: identical seed derivation, probe,
/// and scoring, so accuracies match the library runner exactly.
fn run_split_logged(
    plan: &SplitPlan,
    data: &Dataset,
    model_cfg: &ModelConfig,
    ppo_cfg: &PpoConfig,
    seed: u64,
) -> (f64, TrainLog) {
    let source_idx = data.windows_of(&plan.source_users);
    let target_idx = data.windows_of(&plan.target_users);
    let train_data = data.subset(&source_idx);

    let mut cfg = ppo_cfg.clone();
    cfg.seed = derive_seed(seed, &["ppo", &plan.name]);
    let mut init_rng = Rng::new(derive_seed(seed, &["init", &plan.name]));
    let net = PolicyNetwork::init(model_cfg.clone(), &mut init_rng).unwrap();
    let (trained, log) = train(&net, &train_data, &cfg).unwrap();

    let dim = model_cfg.s * model_cfg.k;
    let mut feats = Vec::with_capacity(train_data.windows.len() * dim);
    let mut labels = Vec::with_capacity(train_data.windows.len());
    for w in &train_data.windows {
        feats.extend(flatten(&trained.rollout_deterministic(&w.x).unwrap()));
        labels.push(w.y);
    }
    let x = Matrix::new(labels.len(), dim, feats).unwrap();
    let probe = LrModel::fit(&x, &labels, data.num_classes, 1e-2).unwrap();

    let mut cm = ConfusionMatrix::new(data.num_classes);
    for &i in &target_idx {
        let w = &data.windows[i];
        let z = flatten(&trained.rollout_deterministic(&w.x).unwrap());
        let (pred, _) = probe.predict(&z).unwrap();
        cm.record(w.y, pred);
    }
    (cm.accuracy().unwrap(), log)
}

#[test]
fn c6_invariance_reward_improves_cross_user_transfer() {
    let exp = experiment();
    assert!(
        exp.crosscheck_bits_equal,
        "experiment runner disagrees with run_split on the reference cell"
    );
    let mean = |runs: &[ArmRun]| {
        runs.iter().map(|r| r.accuracy).sum::<f64>() / runs.len() as f64
    };
    let full = mean(&exp.full);
    let abl = mean(&exp.ablation);
    let gap_pp = (full - abl) * 100.0;
    println!(
        "c6: full {full:.4} vs ablation {abl:.4} over {} runs each; gap {gap_pp:+.2} pp (need >= +5); {:.0} s (budget 600)",
        exp.full.len(),
        exp.secs
    );
    assert!(
        exp.secs <= 600.0,
        "experiment took {:.0} s, budget is 600 s",
        exp.secs
    );
    assert!(
        gap_pp >= 5.0,
        "invariance reward gap {gap_pp:+.2} pp, need at least +5.00 pp (full {full:.4}, ablation {abl:.4})"
    );
}

#[test]
fn c7_training_objective_rises_on_default_run() {
    let exp = experiment();
    // Per seed: average the first-decile and final-decile mean objective
    // across the four plans of the full (default-weight) arm.
    let mut risen = 0usize;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let mut first = 0.0;
        let mut last = 0.0;
        let mut plans = 0usize;
        for run in exp.full.iter().filter(|r| r.seed == seed) {
            let js: Vec<f64> = run.log.rows.iter().map(|r| r.j).collect();
            let n = js.len();
            assert!(n >= 10, "training log too short ({n} rounds) for a decile trend");
            let dec = n / 10;
            first += js[..dec].iter().sum::<f64>() / dec as f64;
            last += js[n - dec..].iter().sum::<f64>() / dec as f64;
            plans += 1;
        }
        first /= plans as f64;
        last /= plans as f64;
        if last > first {
            risen += 1;
        }
        lines.push(format!("seed {seed}: J {first:.2} -> {last:.2}"));
    }
    println!("c7: {} ({risen}/3 seeds rose, need >= 2)", lines.join("; "));
    assert!(
        risen >= 2,
        "objective rose in only {risen}/3 seeds: {}",
        lines.join("; ")
    );
}

// ---------------------------------------------------------------- c8

#[test]
fn c8_aggregation_reproduces_reference_rows() {
    // Two published-style result rows, fed in as percentage literals. The
    // displayed two-decimal values round half-up from the exact means:
    // 35314/4 = 8828.5 hundredths -> 88.29, 22244/3 = 7414.67 -> 74.15.
    let rows: [(&str, &[f64], f64); 2] = [
        ("four-plan row", &[87.77, 85.48, 91.96, 87.93], 88.29),
        ("three-plan row", &[69.01, 79.29, 74.14], 74.15),
    ];
    for (name, percents, want) in rows {
        let results: Vec<ExperimentResult> = percents
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut cm = ConfusionMatrix::new(2);
                // Populate a consistent confusion: p% of 10000 on the
                // diagonal of class 1, the rest off-diagonal.
                let hits = (p * 100.0).round() as u64;
                for _ in 0..hits {
                    cm.record(1, 1);
                }
                for _ in 0..10000 - hits {
                    cm.record(1, 2);
                }
                for _ in 0..100 {
                    cm.record(2, 2);
                }
                ExperimentResult {
                    plan: format!("plan-{i}"),
                    accuracy: p / 100.0,
                    per_class_f1: vec![0.0, 0.0],
                    confusion: cm,
                    config_digest: String::new(),
                    seed: 0,
                }
            })
            .collect();
        let summary = aggregate(&results).unwrap();
        let mean_pct = summary.mean_accuracy * 100.0;
        // Half-up display rounding in exact integer arithmetic: the mean of
        // the hundredths must land on the reference literal.
        let hundredths: i64 = percents.iter().map(|&p| (p * 100.0).round() as i64).sum();
        let n = percents.len() as i64;
        let display = ((2 * hundredths + n) / (2 * n)) as f64 / 100.0;
        assert_eq!(
            display, want,
            "{name}: integer half-up display of the exact mean is {display}, reference says {want}"
        );
        let diff = (mean_pct - want).abs();
        assert!(
            diff <= 0.0051,
            "{name}: aggregate mean {mean_pct:.10} vs reference {want} (diff {diff:.2e})"
        );
        println!("c8: {name} mean {mean_pct:.4} ~ {want} (diff {diff:.1e}), half-up display matches");
    }
}

// ---------------------------------------------------------------- c9

#[test]
fn c9_real_data_pipeline_when_corpora_present() {
    println!(
        "c9: absolute accuracies from full-scale reference runs are not reproducible at this desk-scale configuration; real-data accuracies below are reported, not gated"
    );
    let datasets: [(&str, &str, &[(&str, &[u32])]); 2] = [
        ("dsads", "HARFEAT_DSADS_ROOT", &[
            ("A", &[1, 2]),
            ("B", &[3, 4]),
            ("C", &[5, 6]),
            ("D", &[7, 8]),
        ]),
        ("pamap2", "HARFEAT_PAMAP2_ROOT", &[
            ("A", &[1, 2]),
            ("B", &[5, 6]),
            ("C", &[7, 8]),
        ]),
    ];
    let mut ran = 0usize;
    for (name, var, group_spec) in datasets {
        let root = env::var_os(var)
            .map(PathBuf::from)
            .or_else(|| {
                env::var_os("HARFEAT_DATA_ROOT").map(|r| PathBuf::from(r).join(name))
            });
        let root = match root {
            Some(r) if r.is_dir() => r,
            _ => {
                println!(
                    "c9: {name} corpus not found (set {var} or HARFEAT_DATA_ROOT/{name}); skipping"
                );
                continue;
            }
        };

        let channels = ChannelSet::parse("acc_gyro").unwrap();
        let mut recs = match name {
            "dsads" => ingest_dsads(&root, &channels).unwrap(),
            _ => ingest_pamap2(&root, &channels).unwrap(),
        };
        let groups: Vec<(String, Vec<u32>)> = group_spec
            .iter()
            .map(|(g, us)| (g.to_string(), us.to_vec()))
            .collect();
        let keep: HashSet<u32> =
            groups.iter().flat_map(|(_, us)| us.iter().copied()).collect();
        recs.retain(|r| keep.contains(&r.user));
        zscore_per_user(&mut recs, 1e-8).unwrap();
        let data = windowize(&recs, 3.0, 0.5).unwrap();
        let plans = build_logo_splits(&groups).unwrap();
        let plan = &plans[0];

        let model_cfg = ModelConfig::new(data.window_len, data.num_channels);
        let result = run_split(
            plan,
            &data,
            &model_cfg,
            &PpoConfig::default(),
            &RunOptions::default(),
        )
        .unwrap();
        let floor = majority_baseline(plan, &data).unwrap();
        println!(
            "c9: {name} plan {} accuracy {:.4}, majority-class floor {floor:.4}",
            plan.name, result.accuracy
        );
        assert!(
            result.accuracy > floor,
            "{name}: learned features ({:.4}) do not beat the majority floor ({floor:.4})",
            result.accuracy
        );
        ran += 1;
    }
    if ran == 0 {
        println!("c9: no real corpora present; pipeline verified on synthetic data only");
    }
}

// The oracles index explicitly to mirror the update formulas.
#![allow(clippy::needless_range_loop)]

mod common;

use dectrack::algorithm::{
    communicate, derive_step_sizes, init_corrections, initial_state, local_phase, run, run_algorithm, run_baseline_no_gt,
    Algorithm, Execution, HyperParams, NetworkState, NoHook, ProjectionMode, RoundScratch, StepSizePlan,
};
use dectrack::data::{BatchSampler, PartitionMode};
use dectrack::error::Result;
use dectrack::metrics::{MetricsOptions, MetricsRecorder};
use dectrack::objectives::{Objective, QuadraticInstance};
use dectrack::topology::MixingMatrix;
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn full_batch_hp(eta_c: f64, eta_d: f64, k: usize, t: usize) -> HyperParams {
    HyperParams {
        eta_c,
        eta_d,
        eta_s: 1.0,
        eta_r: 1.0,
        k,
        t,
        b_x: 1,
        b_y: 1,
        full_batch: true,
        projection: ProjectionMode::PerStep,
    }
}

fn stochastic_hp(k: usize, t: usize) -> HyperParams {
    HyperParams {
        eta_c: 500.0,
        eta_d: 0.2,
        eta_s: 1.0,
        eta_r: 1.0,
        k,
        t,
        b_x: 16,
        b_y: 8,
        full_batch: false,
        projection: ProjectionMode::PerStep,
    }
}

fn small_logreg(n: usize, mode: PartitionMode) -> dectrack::objectives::LogRegInstance {
    logreg(&train_set().truncated(400), n, mode, 3)
}

/// Random doubly-stochastic matrix as a convex combination of permutations.
fn birkhoff(n: usize, rng: &mut ChaCha8Rng) -> MixingMatrix {
    let mut w = Array2::zeros((n, n));
    let terms = 4;
    let weights: Vec<f64> = (0..terms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for wt in weights {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for (i, &j) in perm.iter().enumerate() {
            w[[i, j]] += wt / total;
        }
    }
    MixingMatrix::from_matrix(w).expect("Birkhoff combination is doubly stochastic")
}

fn row(v: &Array2<f64>, i: usize) -> Vec<f64> {
    v.row(i).to_vec()
}

/// Scripted quadratic gradients, written out with loops.
fn quad_grads(inst: &QuadraticInstance, i: usize, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (d, q) = (x.len(), y.len());
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; q];
    for r in 0..d {
        let mut s = inst.u[i][r];
        for c in 0..d {
            s += inst.a[i][[r, c]] * x[c];
        }
        for c in 0..q {
            s += inst.b[i][[r, c]] * y[c];
        }
        gx[r] = s;
    }
    for c in 0..q {
        let mut s = inst.v[i][c] - inst.mu * y[c];
        for r in 0..d {
            s += inst.b[i][[r, c]] * x[r];
        }
        gy[c] = s;
    }
    (gx, gy)
}

#[test]
fn three_local_steps_match_unrolled_recursion() {
    let inst = QuadraticInstance::random(3, 2, 2, 1.0, 0.8, 11).unwrap();
    let hp = full_batch_hp(0.05, 0.1, 3, 1);
    let x0 = array![0.3, -0.2, 0.5];
    let y0 = array![0.1, -0.4];
    let sampler = BatchSampler::new(0, 1, 1);
    let state = initial_state(&inst, Algorithm::DecFedTrack, x0.view(), y0.view(), &sampler, &hp).unwrap();
    let scratch = local_phase(&state, &inst, &hp, &sampler, None).unwrap();

    // Oracle: corrections from the two initial gradients, then three steps.
    let g: Vec<_> = (0..2).map(|i| quad_grads(&inst, i, x0.as_slice().unwrap(), y0.as_slice().unwrap())).collect();
    for i in 0..2 {
        let c: Vec<f64> = (0..3).map(|r| -g[i].0[r] + 0.5 * (g[0].0[r] + g[1].0[r])).collect();
        let d: Vec<f64> = (0..2).map(|r| -g[i].1[r] + 0.5 * (g[0].1[r] + g[1].1[r])).collect();
        let mut x = x0.to_vec();
        let mut y = y0.to_vec();
        for _ in 0..3 {
            let (gx, gy) = quad_grads(&inst, i, &x, &y);
            for r in 0..3 {
                x[r] -= 0.05 * (gx[r] + c[r]);
            }
            for r in 0..2 {
                y[r] += 0.1 * (gy[r] + d[r]);
            }
        }
        for (a, b) in row(&scratch.x_local, i).iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12, "node {i}: {a} vs {b}");
        }
        for (a, b) in row(&scratch.y_local, i).iter().zip(&y) {
            assert!((a - b).abs() <= 1e-12, "node {i}: {a} vs {b}");
        }
    }
}

#[test]
fn constant_objective_leaves_iterates_unchanged() {
    let zero = QuadraticInstance::homogeneous(Array2::zeros((2, 2)), Array2::zeros((2, 1)), Array1::zeros(2), Array1::zeros(1), 1.0, 3)
        .unwrap();
    let hp = full_batch_hp(0.3, 0.3, 4, 5);
    let x0 = array![1.5, -2.0];
    let end = run(&zero, &MixingMatrix::ring_lazy(3, 0.5).unwrap(), &hp, &BatchSampler::new(0, 1, 1), x0.view(), array![0.0].view(), &mut NoHook).unwrap();
    for r in end.x.rows() {
        assert_eq!(r, x0);
    }
    assert!(end.y.iter().all(|&v| v == 0.0));
}

#[test]
fn identical_data_gives_zero_initial_corrections() {
    let inst = QuadraticInstance::homogeneous(array![[1.0, 0.2], [0.2, -0.5]], array![[1.0], [0.5]], array![0.1, 0.2], array![0.3], 1.0, 4)
        .unwrap();
    let (c, d) = init_corrections(&inst, array![0.4, -0.1].view(), array![0.2].view(), &BatchSampler::new(0, 1, 1), true).unwrap();
    assert!(c.iter().chain(d.iter()).all(|&v| v == 0.0));
}

#[test]
fn initial_corrections_sum_to_zero_on_sampled_data() {
    let obj = small_logreg(5, PartitionMode::LabelSkew { shards_per_client: 1 });
    let q = obj.dim_y();
    let (c, d) = init_corrections(&obj, Array1::zeros(obj.dim_x()).view(), Array1::from_elem(q, 1.0 / q as f64).view(), &BatchSampler::new(9, 16, 8), false)
        .unwrap();
    for col in c.columns().into_iter().chain(d.columns()) {
        assert!(col.sum().abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `(1/n)Σ c_i` is conserved by the correction update for any Z and
    /// doubly-stochastic W.
    #[test]
    fn correction_mean_is_conserved(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, q) = (3, 2);
        let w = birkhoff(n, &mut rng);
        let rand_mat = |rng: &mut ChaCha8Rng, r, c| Array2::from_shape_fn((r, c), |_| rng.random_range(-2.0..2.0));
        let state = NetworkState {
            x: rand_mat(&mut rng, n, d),
            y: rand_mat(&mut rng, n, q),
            c: rand_mat(&mut rng, n, d),
            d: rand_mat(&mut rng, n, q),
            round: 0,
            sfo_count: 0,
        };
        let scratch = RoundScratch {
            x_local: rand_mat(&mut rng, n, d),
            y_local: rand_mat(&mut rng, n, q),
            grad_sum_x: Array2::zeros((n, d)),
            grad_sum_y: Array2::zeros((n, q)),
            drift_x: 0.0,
            drift_y: 0.0,
        };
        let inst = QuadraticInstance::random(d, q, n, 1.0, 0.5, seed).unwrap();
        let hp = full_batch_hp(0.1, 0.2, 3, 1);
        let next = communicate(&state, &scratch, &hp, &w, &inst, Algorithm::DecFedTrack).unwrap();
        for (before, after) in [(&state.c, &next.c), (&state.d, &next.d)] {
            let mb = before.mean_axis(ndarray::Axis(0)).unwrap();
            let ma = after.mean_axis(ndarray::Axis(0)).unwrap();
            for (a, b) in ma.iter().zip(mb.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

fn check_average_iterate_identity<O: Objective>(obj: &O, hp: &HyperParams, w: &MixingMatrix, check_y: bool) {
    let sampler = BatchSampler::new(5, hp.b_x, hp.b_y);
    let n = obj.num_clients() as f64;
    let mut prev: Option<NetworkState> = None;
    let mut worst = 0.0f64;
    let mut hook = |s: &NetworkState, scratch: Option<&RoundScratch>| -> Result<()> {
        if let (Some(p), Some(sc)) = (&prev, scratch) {
            let kx = hp.eta_x() / n;
            let expect_x = p.x_bar() - sc.grad_sum_x.sum_axis(ndarray::Axis(0)) * kx;
            worst = worst.max((&s.x_bar() - &expect_x).iter().fold(0.0, |m, v| m.max(v.abs())));
            if check_y {
                let ky = hp.eta_y() / n;
                let expect_y = p.y_bar() + sc.grad_sum_y.sum_axis(ndarray::Axis(0)) * ky;
                worst = worst.max((&s.y_bar() - &expect_y).iter().fold(0.0, |m, v| m.max(v.abs())));
            }
        }
        prev = Some(s.clone());
        Ok(())
    };
    let x0 = Array1::zeros(obj.dim_x());
    let q = obj.dim_y();
    let y0 = if check_y { Array1::zeros(q) } else { Array1::from_elem(q, 1.0 / q as f64) };
    run_algorithm(Algorithm::DecFedTrack, obj, w, hp, &sampler, x0.view(), y0.view(), &mut hook, Execution::default()).unwrap();
    assert!(worst <= 1e-10, "average-iterate identity off by {worst}");
}

#[test]
fn average_iterate_identity_quadratic() {
    let inst = QuadraticInstance::random(5, 3, 6, 1.0, 1.0, 2).unwrap();
    let mut hp = full_batch_hp(0.05, 0.1, 4, 30);
    hp.eta_s = 0.7;
    hp.eta_r = 0.6;
    check_average_iterate_identity(&inst, &hp, &MixingMatrix::ring_lazy(6, 0.5).unwrap(), true);
}

#[test]
fn average_iterate_identity_for_x_on_sampled_logreg() {
    let obj = small_logreg(5, PartitionMode::IidShuffle);
    let mut hp = stochastic_hp(3, 10);
    hp.eta_s = 0.5;
    check_average_iterate_identity(&obj, &hp, &MixingMatrix::ring_lazy(5, 0.5).unwrap(), false);
}

fn logreg_run(obj: &dectrack::objectives::LogRegInstance, hp: &HyperParams, exec: Execution) -> NetworkState {
    let q = obj.dim_y();
    run_algorithm(
        Algorithm::DecFedTrack,
        obj,
        &MixingMatrix::ring_lazy(obj.num_clients(), 0.5).unwrap(),
        hp,
        &BatchSampler::new(17, hp.b_x, hp.b_y),
        Array1::zeros(obj.dim_x()).view(),
        Array1::from_elem(q, 1.0 / q as f64).view(),
        &mut NoHook,
        exec,
    )
    .unwrap()
}

#[test]
fn reruns_and_thread_counts_are_bitwise_identical() {
    let obj = small_logreg(4, PartitionMode::LabelSkew { shards_per_client: 2 });
    let hp = stochastic_hp(3, 6);
    let a = logreg_run(&obj, &hp, Execution::default());
    let b = logreg_run(&obj, &hp, Execution::default());
    let c = logreg_run(&obj, &hp, Execution { threads: 4 });
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn sfo_accounting_is_exact() {
    let obj = small_logreg(4, PartitionMode::IidShuffle);
    let hp = stochastic_hp(3, 7);
    let end = logreg_run(&obj, &hp, Execution::default());
    assert_eq!(end.sfo_count, 4 * 3 * (16 + 8) * 7);

    let mut full = hp.clone();
    full.full_batch = true;
    full.t = 2;
    full.eta_c = 50.0;
    let end = logreg_run(&obj, &full, Execution::default());
    let m = obj.samples_per_client() as u64;
    assert_eq!(end.sfo_count, 4 * 3 * 2 * m * 2);
}

#[test]
fn zero_rounds_yield_only_the_initial_row() {
    let inst = QuadraticInstance::random(3, 2, 3, 1.0, 0.5, 1).unwrap();
    let hp = full_batch_hp(0.05, 0.1, 2, 0);
    let mut rec = MetricsRecorder::new(&inst, None, MetricsOptions::default(), 0);
    run(&inst, &MixingMatrix::complete(3).unwrap(), &hp, &BatchSampler::new(0, 1, 1), Array1::zeros(3).view(), Array1::zeros(2).view(), &mut rec)
        .unwrap();
    assert_eq!(rec.rows.len(), 1);
    assert_eq!(rec.rows[0].round, 0);
    assert_eq!(rec.rows[0].sfo_calls, 0);
}

#[test]
fn baseline_matches_tracking_on_homogeneous_full_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (d, q, n) = (4, 2, 5);
    let s = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    let inst = QuadraticInstance::homogeneous(
        (&s + &s.t()) * 0.5,
        Array2::from_shape_fn((d, q), |_| rng.random_range(-1.0..1.0)),
        Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0)),
        Array1::from_shape_fn(q, |_| rng.random_range(-1.0..1.0)),
        1.0,
        n,
    )
    .unwrap();
    let hp = full_batch_hp(0.03, 0.1, 3, 40);
    let w = MixingMatrix::ring_lazy(n, 0.5).unwrap();
    let sampler = BatchSampler::new(0, 1, 1);
    let x0 = Array1::from_shape_fn(d, |k| 0.2 * k as f64 - 0.3);
    let y0 = Array1::zeros(q);
    let mut gt_states = Vec::new();
    run(&inst, &w, &hp, &sampler, x0.view(), y0.view(), &mut |s: &NetworkState, _: Option<&RoundScratch>| -> Result<()> {
        gt_states.push(s.clone());
        Ok(())
    })
    .unwrap();
    let mut round = 0;
    run_baseline_no_gt(&inst, &w, &hp, &sampler, x0.view(), y0.view(), &mut |s: &NetworkState, _: Option<&RoundScratch>| -> Result<()> {
        let g = &gt_states[round];
        let gap = (&s.x - &g.x).iter().chain((&s.y - &g.y).iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gap <= 1e-10, "round {round}: gap {gap}");
        round += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(round, 41);
}

#[test]
fn baseline_with_full_averaging_is_centralized_gda() {
    // f_0 = ½x² + xy − ½y² + x, f_1 = −½x² + xy − ½y² − x + 2y; averages Ā = 0, B̄ = 1, ū = 0, v̄ = 1.
    let inst = QuadraticInstance::new(
        vec![array![[1.0]], array![[-1.0]]],
        vec![array![[1.0]], array![[1.0]]],
        vec![array![1.0], array![-1.0]],
        vec![array![0.0], array![2.0]],
        1.0,
    )
    .unwrap();
    let hp = HyperParams {
        eta_s: 0.5,
        eta_r: 2.0,
        ..full_batch_hp(0.2, 0.1, 1, 1)
    };
    let end = run_baseline_no_gt(&inst, &MixingMatrix::complete(2).unwrap(), &hp, &BatchSampler::new(0, 1, 1), array![1.0].view(), array![0.5].view(), &mut NoHook)
        .unwrap();
    // At (1, 0.5): mean ∇_x = Āx + B̄y + ū = 0.5; mean ∇_y = B̄x − y + v̄ = 1.5.
    // x' = 1 − 0.5·0.2·0.5 = 0.95, y' = 0.5 + 2·0.1·1.5 = 0.8.
    for i in 0..2 {
        assert!((end.x[[i, 0]] - 0.95).abs() <= 1e-15);
        assert!((end.y[[i, 0]] - 0.8).abs() <= 1e-15);
    }
}

#[test]
fn theorem_step_sizes_examples() {
    let ones = derive_step_sizes(&StepSizePlan { kappa: 1.0, ell: 1.0, mu: 1.0, p: 1.0 }, 1, 1.0).unwrap();
    assert_eq!((ones.eta_d, ones.eta_c, ones.eta_s, ones.eta_r), (1.0, 1.0, 1.0, 1.0));
    let k2 = derive_step_sizes(&StepSizePlan { kappa: 2.0, ell: 1.0, mu: 1.0, p: 1.0 }, 1, 1.0).unwrap();
    assert_eq!((k2.eta_d, k2.eta_c), (0.5, 0.125));
    assert!(derive_step_sizes(&StepSizePlan { kappa: 0.0, ell: 1.0, mu: 1.0, p: 1.0 }, 1, 1.0).is_err());
}

#[test]
fn projected_y_stays_on_simplex_after_every_round() {
    let obj = small_logreg(4, PartitionMode::IidShuffle);
    for projection in [ProjectionMode::PerStep, ProjectionMode::PerRound] {
        let hp = HyperParams { projection, ..stochastic_hp(3, 5) };
        let q = obj.dim_y();
        let mut hook = |s: &NetworkState, _: Option<&RoundScratch>| -> Result<()> {
            for r in s.y.rows() {
                assert!(r.iter().all(|&v| v >= 0.0));
                assert!((r.sum() - 1.0).abs() <= 1e-12);
            }
            Ok(())
        };
        run(&obj, &MixingMatrix::ring_lazy(4, 0.5).unwrap(), &hp, &BatchSampler::new(2, 16, 8), Array1::zeros(obj.dim_x()).view(), Array1::from_elem(q, 1.0 / q as f64).view(), &mut hook)
            .unwrap();
    }
}

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use lexalign::adversarial::{
    critic_step, cycle_loss, discriminator_loss, generator_adv_loss, generator_step, orthogonalize,
    post_cycle_reconstruction_loss, total_objective, train, Direction, DirectionLosses, ModelState, Side,
};
use lexalign::config::Ablation;
use lexalign::embedding::{synth_pair, SynthSpec};
use lexalign::retrieval::{build_dictionary, csls_scores, procrustes, CslsParams};
use lexalign::tensor::discriminator::DiscriminatorNet;
use lexalign::tensor::linear::LinearMap;
use lexalign::tensor::loss::bce_smoothed;
use lexalign::tensor::optim::Sgd;
use lexalign::TrainConfig;
use ndarray::{array, Array2};
use proptest::prelude::*;

fn zero_discriminators(state: &mut ModelState, hidden: usize) {
    let c = state.code_dim();
    state.disc_src = DiscriminatorNet::zeros(c, hidden, 0.2, 0.1);
    state.disc_tgt = DiscriminatorNet::zeros(c, hidden, 0.2, 0.1);
}

fn disc_blocks(d: &DiscriminatorNet) -> Vec<Array2<f64>> {
    [&d.layer1, &d.layer2, &d.layer3]
        .iter()
        .flat_map(|l| [l.weight.clone(), l.bias.clone().insert_axis(ndarray::Axis(0))])
        .collect()
}

fn generator_blocks(s: &ModelState) -> Vec<Array2<f64>> {
    vec![
        s.ae_src.encoder.weight().clone(),
        s.ae_src.decoder.weight().clone(),
        s.ae_tgt.encoder.weight().clone(),
        s.ae_tgt.decoder.weight().clone(),
        s.mapper_g.weight().clone(),
        s.mapper_f.weight().clone(),
    ]
}

fn checksum(blocks: &[Array2<f64>]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for b in blocks {
        for v in b {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        code_dim: 6,
        pretrain_epochs: 2,
        n_epochs: 2,
        iters_per_epoch: Some(4),
        batch_size: 8,
        disc_hidden: 8,
        disc_vocab_top: 60,
        valid_vocab_top: 60,
        refine_top_n: 60,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csls_argmax_matches_brute_force(seed in 0u64..10_000, n in 12usize..40, m in 12usize..40, c in 2usize..8, k in 1usize..10) {
        let mut r = rng(seed);
        let q = gaussian(n, c, &mut r);
        let t = gaussian(m, c, &mut r);
        let index = csls_scores(q.view(), t.view(), CslsParams { k_neighbors: k }).unwrap();
        let brute = brute_csls(q.view(), t.view(), k);
        prop_assert_eq!(index.nearest_targets(), brute_argmax_rows(&brute));
        for i in 0..n {
            let row = index.scores(i);
            for j in 0..m {
                prop_assert!((row[j] - brute[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn procrustes_is_orthogonal(seed in 0u64..10_000, p in 3usize..30, c in 2usize..10) {
        let mut r = rng(seed);
        let a = gaussian(p, c, &mut r);
        let b = gaussian(p, c, &mut r);
        let w = procrustes(a.view(), b.view()).unwrap();
        prop_assert!(orth_defect(w.weight().view()) < 1e-8);
    }

    #[test]
    fn dictionary_is_transpose_symmetric(seed in 0u64..10_000, n in 10usize..30, c in 2usize..6) {
        let mut r = rng(seed);
        let a = gaussian(n, c, &mut r);
        let b = gaussian(n, c, &mut r);
        let params = CslsParams { k_neighbors: 3 };
        let ab = build_dictionary(a.view(), b.view(), params, n).unwrap();
        let ba = build_dictionary(b.view(), a.view(), params, n).unwrap();
        let mut lhs: Vec<(usize, usize)> = ab.pairs().to_vec();
        let mut rhs: Vec<(usize, usize)> = ba.pairs().iter().map(|&(i, j)| (j, i)).collect();
        lhs.sort_unstable();
        rhs.sort_unstable();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn orthogonalize_fixes_orthogonal_maps(seed in 0u64..10_000, n in 1usize..12, beta in 0.001f64..0.99) {
        let mut r = rng(seed);
        let q = random_orthogonal(n, &mut r);
        let out = orthogonalize(&LinearMap::new(q.clone()).unwrap(), beta).unwrap();
        prop_assert!(frob((out.weight() - &q).view()) < 1e-12);
    }

    #[test]
    fn total_objective_is_sum_of_parts(seed in 0u64..10_000, abl in 0usize..4) {
        let ablation = [Ablation::FULL, Ablation::NO_ENC_ADV, Ablation::NO_ENC_ADV_RECON, Ablation::ADVERSARIAL_ONLY][abl];
        let cfg = TrainConfig { ablation, ..TrainConfig::default() };
        let state = random_state(5, 4, 3, 6, seed);
        let mut r = rng(seed ^ 0xabc);
        let x = gaussian(7, 5, &mut r);
        let y = gaussian(6, 4, &mut r);
        let total = total_objective(&state, x.view(), y.view(), &cfg).unwrap();
        let mut parts = 0.0;
        for (dir, from, to) in [(Direction::SourceToTarget, &x, &y), (Direction::TargetToSource, &y, &x)] {
            let (adv, _) = generator_adv_loss(&state, dir, from.view(), to.view(), 0.0, ablation).unwrap();
            let codes = state.encode(dir.from_side(), from.view()).unwrap();
            let (cyc, _) = cycle_loss(&state, dir, codes.view()).unwrap();
            let (rec, _) = post_cycle_reconstruction_loss(&state, dir, from.view()).unwrap();
            parts += adv;
            if ablation.cycle {
                parts += cfg.lambda_cyc * cyc;
            }
            if ablation.recon {
                parts += cfg.lambda_rec * rec;
            }
            let dl = DirectionLosses::evaluate(&state, dir, from.view(), to.view(), &cfg).unwrap();
            prop_assert_eq!(dl.adversarial, adv);
        }
        prop_assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn steps_touch_only_their_own_parameters(seed in 0u64..10_000, side in 0usize..2) {
        let cfg = small_cfg(seed);
        let mut state = random_state(5, 4, 3, 6, seed);
        let mut r = rng(seed + 1);
        let x = gaussian(8, 5, &mut r);
        let y = gaussian(8, 4, &mut r);
        let gens = checksum(&generator_blocks(&state));
        let (side, own, other) = if side == 0 { (Side::Source, &x, &y) } else { (Side::Target, &y, &x) };
        let untouched = checksum(&disc_blocks(state.discriminator(side.other())));
        critic_step(&mut state, side, own.view(), other.view(), &cfg, 0.1, seed).unwrap();
        prop_assert_eq!(checksum(&generator_blocks(&state)), gens);
        prop_assert_eq!(checksum(&disc_blocks(state.discriminator(side.other()))), untouched);

        let discs = checksum(&[disc_blocks(&state.disc_src), disc_blocks(&state.disc_tgt)].concat());
        let opt = Sgd::new(0.1, 0.98).unwrap();
        generator_step(&mut state, Direction::SourceToTarget, x.view(), y.view(), &cfg, &opt).unwrap();
        generator_step(&mut state, Direction::TargetToSource, y.view(), x.view(), &cfg, &opt).unwrap();
        prop_assert_eq!(checksum(&[disc_blocks(&state.disc_src), disc_blocks(&state.disc_tgt)].concat()), discs);
        prop_assert!(state.is_finite());
    }
}

#[test]
fn zero_discriminator_gives_two_ln_two() {
    let mut state = random_state(4, 4, 3, 5, 1);
    zero_discriminators(&mut state, 5);
    let mut r = rng(2);
    let a = gaussian(6, 3, &mut r);
    let b = gaussian(9, 3, &mut r);
    let (loss, _) = discriminator_loss(&state, Side::Target, a.view(), b.view(), 0.0, None).unwrap();
    assert_abs_diff_eq!(loss, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    let x = gaussian(6, 4, &mut r);
    let y = gaussian(5, 4, &mut r);
    for abl in [Ablation::FULL, Ablation::NO_ENC_ADV] {
        let (loss, _) = generator_adv_loss(&state, Direction::SourceToTarget, x.view(), y.view(), 0.0, abl).unwrap();
        assert_abs_diff_eq!(loss, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }
}

#[test]
fn smoothed_discriminator_example() {
    let real = array![0.8, 0.8, 0.8];
    let fake = array![0.2, 0.2];
    let loss = bce_smoothed(real.view(), true, 0.2) + bce_smoothed(fake.view(), false, 0.2);
    let by_hand = -2.0 * (0.8 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
    assert_abs_diff_eq!(loss, by_hand, epsilon = 1e-12);
    assert_abs_diff_eq!(loss, 1.000805, epsilon = 1e-6);
}

#[test]
fn encoder_gradient_absent_without_encoder_adversary() {
    let state = random_state(4, 4, 3, 5, 3);
    let mut r = rng(4);
    let x = gaussian(6, 4, &mut r);
    let y = gaussian(6, 4, &mut r);
    let (_, g) = generator_adv_loss(&state, Direction::SourceToTarget, x.view(), y.view(), 0.0, Ablation::NO_ENC_ADV).unwrap();
    assert!(g.encoder.is_none());
    let (_, g) = generator_adv_loss(&state, Direction::SourceToTarget, x.view(), y.view(), 0.0, Ablation::FULL).unwrap();
    assert!(g.encoder.unwrap().iter().any(|v| *v != 0.0));
}

#[test]
fn cycle_loss_hand_reductions() {
    let mut state = random_state(4, 4, 2, 5, 5);
    let codes = array![[3.0, 4.0], [1.0, 0.0], [0.0, -2.0]];
    state.mapper_g = LinearMap::identity(2);
    state.mapper_f = LinearMap::identity(2);
    let (loss, _) = cycle_loss(&state, Direction::SourceToTarget, codes.view()).unwrap();
    assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-15);

    state.mapper_f = LinearMap::zeros(2, 2);
    let (loss, _) = cycle_loss(&state, Direction::SourceToTarget, codes.view()).unwrap();
    assert_abs_diff_eq!(loss, (5.0 + 1.0 + 2.0) / 3.0, epsilon = 1e-12);

    let g = array![[2.0, 1.0], [1.0, 1.0]];
    let g_inv = array![[1.0, -1.0], [-1.0, 2.0]];
    state.mapper_g = LinearMap::new(g).unwrap();
    state.mapper_f = LinearMap::new(g_inv).unwrap();
    for dir in [Direction::SourceToTarget, Direction::TargetToSource] {
        let (loss, _) = cycle_loss(&state, dir, codes.view()).unwrap();
        assert!(loss < 1e-10);
    }
}

#[test]
fn post_cycle_reconstruction_hand_reductions() {
    let mut state = random_state(3, 3, 3, 5, 6);
    let x = array![[1.0, 2.0, 2.0], [0.0, 3.0, 4.0]];
    state.ae_src.encoder = LinearMap::identity(3);
    state.ae_src.decoder = LinearMap::identity(3);
    state.mapper_g = LinearMap::identity(3);
    state.mapper_f = LinearMap::zeros(3, 3);
    let (loss, _) = post_cycle_reconstruction_loss(&state, Direction::SourceToTarget, x.view()).unwrap();
    assert_abs_diff_eq!(loss, (9.0 + 25.0) / 2.0, epsilon = 1e-12);

    let mut state = random_state(5, 4, 3, 5, 7);
    state.mapper_g = LinearMap::identity(3);
    state.mapper_f = LinearMap::identity(3);
    let mut r = rng(8);
    let y = gaussian(6, 4, &mut r);
    let (loss, _) = post_cycle_reconstruction_loss(&state, Direction::TargetToSource, y.view()).unwrap();
    assert_abs_diff_eq!(loss, state.ae_tgt.reconstruction_loss(y.view()).unwrap(), epsilon = 1e-12);
}

#[test]
fn generator_step_descends_on_fixed_discriminator() {
    let state = random_state(8, 8, 8, 16, 9);
    let mut r = rng(10);
    let x = gaussian(16, 8, &mut r);
    let y = gaussian(16, 8, &mut r);
    let dir = Direction::SourceToTarget;
    let (before, g) = generator_adv_loss(&state, dir, x.view(), y.view(), 0.0, Ablation::FULL).unwrap();
    let mut next = state.clone();
    let lr = 1e-3;
    next.mapper_g.weight_mut().scaled_add(-lr, &g.mapper);
    next.ae_tgt.encoder.weight_mut().scaled_add(-lr, g.encoder.as_ref().unwrap());
    let (after, _) = generator_adv_loss(&next, dir, x.view(), y.view(), 0.0, Ablation::FULL).unwrap();
    assert!(after < before, "{after} >= {before}");
}

fn smoke_data(seed: u64) -> (lexalign::EmbeddingMatrix, lexalign::EmbeddingMatrix) {
    let pair = synth_pair(&SynthSpec::new(60, 5, 0.01, seed)).unwrap();
    (pair.source, pair.target)
}

fn smoke_train(seed: u64, ablation: Ablation, epochs: usize) -> (ModelState, lexalign::adversarial::TrainOutcome) {
    let cfg = TrainConfig {
        ablation,
        n_epochs: epochs,
        ..small_cfg(seed)
    };
    let (src, tgt) = smoke_data(seed);
    let mut r = rng(seed);
    let mut state = ModelState::init(5, 5, "s", "t", &cfg, &mut r);
    state.ae_src.pretrain(&src, cfg.pretrain_epochs, &cfg, &mut r).unwrap();
    state.ae_tgt.pretrain(&tgt, cfg.pretrain_epochs, &cfg, &mut r).unwrap();
    let start = state.clone();
    (start, train(state, &src, &tgt, &cfg, &mut r).unwrap())
}

#[test]
fn smoke_runs_stay_finite() {
    for seed in 0..4 {
        for abl in [Ablation::FULL, Ablation::NO_ENC_ADV, Ablation::ADVERSARIAL_ONLY] {
            let (_, out) = smoke_train(seed, abl, 3);
            assert!(out.best.is_finite());
            assert!(out.history.iter().all(|h| h.criterion.is_finite() && (-1.0..=1.0).contains(&h.criterion)));
        }
    }
}

#[test]
fn training_is_deterministic() {
    let (_, a) = smoke_train(11, Ablation::FULL, 3);
    let (_, b) = smoke_train(11, Ablation::FULL, 3);
    assert_eq!(a.history, b.history);
    assert_eq!(a.best, b.best);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let (start, out) = smoke_train(12, Ablation::FULL, 0);
    assert_eq!(out.best, start);
    assert_eq!(out.best_epoch, 0);
    assert!(out.history.is_empty());
}

#[test]
fn history_has_one_record_per_epoch() {
    let (_, out) = smoke_train(13, Ablation::FULL, 3);
    assert_eq!(out.history.iter().map(|h| h.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    let best = out.history.iter().filter(|h| h.is_best).last();
    if let Some(b) = best {
        assert_eq!(b.epoch, out.best_epoch);
    }
}

//! Property tests for identities that must hold on every input.

use proptest::prelude::*;
use rand::Rng;

use ra3lab::fixtures::{chain_mdp, pruning_lab, random_mdp, random_options};
use ra3lab::mdp::{ActionSpace, RewardIndexing, StochasticPolicy};
use ra3lab::pruning::sample_complexity;
use ra3lab::rlvr::{grpo_advantages, STD_GUARD};
use ra3lab::rng;
use ra3lab::seq::{elbo, elbo_with, exact_marginal_loglik, exact_posterior, kl_decompose, Corpus, Record, SeqModel, ACT};
use ra3lab::smdp::{gamma_bar, smdp_backup};

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn advantages_are_standardized(rewards in prop::collection::vec(-5.0f64..5.0, 2..16)) {
        let a = grpo_advantages(&rewards).unwrap();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| x * x).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let n_f = rewards.len() as f64;
        let r_mean = rewards.iter().sum::<f64>() / n_f;
        let std = (rewards.iter().map(|r| (r - r_mean).powi(2)).sum::<f64>() / n_f).sqrt();
        if std >= STD_GUARD {
            prop_assert!((var - 1.0).abs() < 1e-9);
        } else {
            prop_assert!(a.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn advantages_ignore_positive_affine_reward_maps(
        rewards in prop::collection::vec(0.0f64..1.0, 2..12),
        scale in 0.01f64..100.0,
        shift in -10.0f64..10.0,
    ) {
        let a = grpo_advantages(&rewards).unwrap();
        let mapped: Vec<f64> = rewards.iter().map(|r| scale * r + shift).collect();
        let b = grpo_advantages(&mapped).unwrap();
        // near-degenerate groups can straddle the guard after rescaling
        let spread = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - rewards.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-6);
        prop_assert!(sup_diff(&a, &b) < 1e-6);
    }

    #[test]
    fn kl_decomposition_recombines(raw in prop::collection::vec(0.0f64..1.0, 2..7), alpha in 0.0f64..0.999) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let q = normalized(raw);
        let d = kl_decompose(&q, alpha).unwrap();
        let rec = d.recombined(q[ACT]);
        if d.is_infinite() {
            prop_assert_eq!(rec, f64::INFINITY);
        } else {
            prop_assert!((d.full_kl - rec).abs() < 1e-10, "{} vs {}", d.full_kl, rec);
        }
    }

    #[test]
    fn smdp_backup_contracts(seed in any::<u64>(), states in 2usize..6, n_opt in 0usize..3) {
        let mut r = rng::stream(seed, &[]);
        let gamma = r.gen_range(0.3..0.97);
        let mdp = random_mdp(&mut r, states, 2, gamma).unwrap();
        let space = if n_opt == 0 {
            ActionSpace::primitive(&mdp)
        } else {
            ActionSpace::new(random_options(&mut r, &mdp, n_opt, 1, 3), &mdp).unwrap()
        };
        let gb = gamma_bar(&mdp, &space);
        prop_assert!(gb <= gamma + 1e-12);
        let v1: Vec<f64> = (0..states).map(|_| r.gen_range(-5.0..5.0)).collect();
        let v2: Vec<f64> = (0..states).map(|_| r.gen_range(-5.0..5.0)).collect();
        let t1 = smdp_backup(&v1, &mdp, &space, RewardIndexing::FromZero).unwrap();
        let t2 = smdp_backup(&v2, &mdp, &space, RewardIndexing::FromZero).unwrap();
        prop_assert!(sup_diff(&t1, &t2) <= gb * sup_diff(&v1, &v2) + 1e-12);
    }

    #[test]
    fn elbo_never_exceeds_marginal(seed in any::<u64>(), n_think in 0usize..3, len in 1usize..6, alpha in 0.05f64..0.95) {
        let mut r = rng::stream(seed, &[]);
        let mut m = SeqModel::new(3, n_think, 1, 1, alpha).unwrap();
        for x in m.decoder_logits.iter_mut().chain(m.posterior_logits.iter_mut()) {
            *x = r.gen_range(-2.0..2.0);
        }
        let corpus = Corpus::new(vec![Record::new((0..len).map(|_| r.gen_range(0..3u32)).collect())]).unwrap();
        let marginal = exact_marginal_loglik(&m, &corpus).unwrap();
        prop_assert!(elbo(&m, &corpus).unwrap().elbo <= marginal + 1e-12);
        let tight = elbo_with(&m, &corpus, &exact_posterior(&m, &corpus).unwrap()).unwrap().elbo;
        prop_assert!((tight - marginal).abs() < 1e-10);
    }

    #[test]
    fn regret_splits_exactly(mask in 1u8..=255, raw in prop::collection::vec(0.01f64..1.0, 8)) {
        let lab = pruning_lab().unwrap();
        let subset: Vec<u32> = (0..8).filter(|a| mask & (1 << a) != 0).collect();
        let probs = normalized(subset.iter().map(|&a| raw[a as usize]).collect());
        let policy = StochasticPolicy::new(subset.clone(), vec![probs]).unwrap();
        let d = lab.regret_decompose(&subset, &policy).unwrap();
        prop_assert!((d.total_regret - d.pruning_error - d.rl_error).abs() < 1e-12);
        // optimal values come from value iteration stopped at VALUE_TOLERANCE
        let tol = 10.0 * ra3lab::mdp::VALUE_TOLERANCE;
        prop_assert!(d.pruning_error >= -tol && d.rl_error >= -tol);
    }

    #[test]
    fn sample_size_shrinks_with_looser_delta(z_bar in 1usize..5, delta in 0.01f64..0.5, sigma in 0.05f64..0.9) {
        let tight = sample_complexity(z_bar, 8.0, delta, sigma, 1.0).unwrap();
        let loose = sample_complexity(z_bar, 8.0, (delta * 2.0).min(0.99), sigma, 1.0).unwrap();
        prop_assert!(loose <= tight);
    }
}

#[test]
fn options_never_plan_slower_on_chains() {
    for states in 5..30 {
        let mdp = chain_mdp(states, 0.9).unwrap();
        let opts = ActionSpace::new(ra3lab::fixtures::chain_options(&mdp, 3), &mdp).unwrap();
        assert!(gamma_bar(&mdp, &opts) < gamma_bar(&mdp, &ActionSpace::primitive(&mdp)));
    }
}

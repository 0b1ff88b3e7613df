//! Reference scenarios shared by the examples, the `verify` command and the
//! acceptance tests.

use rand::Rng;

use crate::error::Result;
use crate::mdp::{ActionId, Mdp, MdpSpec, OptionSpec, Sequence, TaskDistribution};
use crate::pruning::PruningLab;
use crate::ra3::{run_ra3, EmConfig, Ra3Run};
use crate::seq::{fit_ntp, q_marginal_loglik, Corpus, SeqModel};
use crate::rlvr::{skill_tasks, GrpoConfig, VerifiableTask};
use crate::world::{gen_corpus, LengthRange, Skill, SkillSpec, WorldCorpus};

/// Vocabulary of the skill world: 8 body tokens and one start token per skill.
pub const WORLD_TOKENS: usize = 12;
pub const WORLD_SKILLS: usize = 4;

/// Four skills over a 12-token vocabulary. Skill `k` opens each segment with
/// token `8 + k`, then emits its own body tokens `2k` and `2k + 1` with
/// probability 0.35 each and every other body token with 0.05. Segments last
/// 6 to 10 steps; skill `k` is followed by `k + 1` (0.7) or `k + 3` (0.3).
pub fn skill_world(seed: u64, n_records: usize) -> SkillSpec {
    let skills = (0..WORLD_SKILLS)
        .map(|k| {
            let mut emission = vec![0.05; 8];
            emission.resize(WORLD_TOKENS, 0.0);
            emission[2 * k] = 0.35;
            emission[2 * k + 1] = 0.35;
            let mut duration = vec![0.0; 10];
            duration[5..].fill(0.2);
            let mut start = vec![0.0; WORLD_TOKENS];
            start[8 + k] = 1.0;
            Skill { emission, duration, start: Some(start) }
        })
        .collect();
    let transition = (0..WORLD_SKILLS)
        .map(|k| {
            let mut row = vec![0.0; WORLD_SKILLS];
            row[(k + 1) % WORLD_SKILLS] = 0.7;
            row[(k + 3) % WORLD_SKILLS] = 0.3;
            row
        })
        .collect();
    SkillSpec {
        n_tokens: WORLD_TOKENS,
        skills,
        transition,
        initial: None,
        n_records,
        length: LengthRange { min: 30, max: 50 },
        rethink: 0.1,
        seed,
    }
}

/// Corpora for one experiment seed: a small annotated seed corpus for the
/// base model, an unannotated-in-use mid-training corpus, and held-out data.
pub struct WorldSplit {
    pub seed_corpus: WorldCorpus,
    pub mid: WorldCorpus,
    pub held_out: WorldCorpus,
}

pub fn world_split(seed: u64) -> Result<WorldSplit> {
    Ok(WorldSplit {
        seed_corpus: gen_corpus(&skill_world(1000 + seed, 20))?,
        mid: gen_corpus(&skill_world(2000 + seed, 400))?,
        held_out: gen_corpus(&skill_world(3000 + seed, 200))?,
    })
}

/// Base model: order-1 decoder and posterior with four thinks, fitted to the
/// annotated seed corpus.
pub fn base_model(seed_corpus: &Corpus, alpha: f64) -> Result<SeqModel> {
    let mut m = SeqModel::new(WORLD_TOKENS, WORLD_SKILLS, 1, 1, alpha)?;
    m.fit_annotated(seed_corpus, 0.1, 2.0)?;
    Ok(m)
}

/// Mid-training settings for the skill world.
pub fn world_em_config(seed: u64, penalty_c: f64) -> EmConfig {
    EmConfig { penalty_c, seed, m_step_updates: 20, ..EmConfig::default() }
}

/// Five EM iterations on the mid-training corpus, latents hidden.
pub fn world_ra3(split: &WorldSplit, seed: u64, penalty_c: f64, alpha: f64) -> Result<Ra3Run> {
    let pi0 = base_model(&split.seed_corpus.corpus, alpha)?;
    let cfg = world_em_config(seed, penalty_c);
    run_ra3(&pi0, &split.mid.corpus.without_latents(), Some(&split.held_out.corpus), 5, &cfg)
}

/// Next-token baseline on the same mid-training corpus.
pub fn world_ntp(split: &WorldSplit) -> Result<SeqModel> {
    fit_ntp(&split.mid.corpus, 1, WORLD_TOKENS, 0.1)
}

/// Held-out negative log-likelihood per token.
pub fn held_out_nll(model: &SeqModel, held_out: &Corpus) -> Result<f64> {
    Ok(-q_marginal_loglik(model, held_out)? / held_out.n_tokens().max(1) as f64)
}

/// Two-skill compositions in the skill world: each skill followed by either
/// of its successors, 8 generated tokens, one off-skill token forgiven per
/// segment.
pub fn world_tasks() -> Result<Vec<VerifiableTask>> {
    let comps: Vec<Vec<usize>> = (0..WORLD_SKILLS)
        .flat_map(|k| [vec![k, (k + 1) % WORLD_SKILLS], vec![k, (k + 3) % WORLD_SKILLS]])
        .collect();
    skill_tasks(&skill_world(0, 1), &comps, 8, 1)
}

pub fn world_grpo_config() -> GrpoConfig {
    GrpoConfig { group_size: 8, learning_rate: 2.0, n_updates: 100, ..GrpoConfig::default() }
}

fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// MDP with rewards in `[0, 1)` and dense random transitions.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize, gamma: f64) -> Result<Mdp> {
    Mdp::new(MdpSpec {
        states,
        actions: (0..actions as ActionId).collect(),
        gamma,
        reward: (0..states).map(|_| (0..actions).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
        transition: (0..states)
            .map(|_| (0..actions).map(|_| random_distribution(rng, states)).collect())
            .collect(),
        initial_state: 0,
    })
}

/// Options whose bodies mix one or two random open-loop sequences of length
/// `min_len..=max_len` per state.
pub fn random_options<R: Rng + ?Sized>(rng: &mut R, mdp: &Mdp, count: usize, min_len: usize, max_len: usize) -> Vec<OptionSpec> {
    let acts = mdp.action_ids().to_vec();
    (0..count)
        .map(|i| {
            let body = (0..mdp.n_states())
                .map(|s| {
                    let k = rng.gen_range(1..=2);
                    let probs = random_distribution(rng, k);
                    let seqs = probs
                        .into_iter()
                        .map(|prob| {
                            let len = rng.gen_range(min_len..=max_len);
                            Sequence { prob, actions: (0..len).map(|_| acts[rng.gen_range(0..acts.len())]).collect() }
                        })
                        .collect();
                    (s, seqs)
                })
                .collect();
            OptionSpec { id: 100 + i as ActionId, body }
        })
        .collect()
}

/// Deterministic chain: action 0 steps left, action 1 steps right, and any
/// action taken in the last state pays 1.
pub fn chain_mdp(states: usize, gamma: f64) -> Result<Mdp> {
    let step = |s: usize, a: usize| -> Vec<f64> {
        let mut row = vec![0.0; states];
        let next = if a == 0 { s.saturating_sub(1) } else { (s + 1).min(states - 1) };
        row[next] = 1.0;
        row
    };
    Mdp::new(MdpSpec {
        states,
        actions: vec![0, 1],
        gamma,
        reward: (0..states).map(|s| vec![if s + 1 == states { 1.0 } else { 0.0 }; 2]).collect(),
        transition: (0..states).map(|s| (0..2).map(|a| step(s, a)).collect()).collect(),
        initial_state: 0,
    })
}

/// "Go left `tau` times" and "go right `tau` times" as options.
pub fn chain_options(mdp: &Mdp, tau: usize) -> Vec<OptionSpec> {
    vec![
        OptionSpec::deterministic(10, &vec![0; tau], mdp.n_states()),
        OptionSpec::deterministic(11, &vec![1; tau], mdp.n_states()),
    ]
}

/// Single-state task paying 1 for each arm in `good` and 0 otherwise.
fn bandit_task(arms: usize, good: &[usize], gamma: f64) -> Result<Mdp> {
    let reward = (0..arms).map(|a| if good.contains(&a) { 1.0 } else { 0.0 }).collect();
    Mdp::new(MdpSpec {
        states: 1,
        actions: (0..arms as ActionId).collect(),
        gamma,
        reward: vec![reward],
        transition: vec![vec![vec![1.0]; arms]],
        initial_state: 0,
    })
}

/// Eight-armed bandit tasks where the arms that pay 1 are listed per task:
/// each of `{0}`, `{1}`, `{2}` with weight 0.05, each pair of those three with
/// weight 0.55/3, and each pairing `{i, d}` of a base arm with a decoy arm
/// `d` in 3..8 with weight 0.02. Every task needs one of its paying arms, so
/// `{0, 1, 2}` is the smallest set that serves all tasks. A base arm is
/// eps-optimal with probability 0.517, a decoy with 0.06, so at sigma = 0.5
/// exactly the decoys are suboptimal.
pub fn pruning_lab() -> Result<PruningLab> {
    let mut tasks = Vec::new();
    let mut weights = Vec::new();
    for i in 0..3 {
        tasks.push(bandit_task(8, &[i], 0.5)?);
        weights.push(0.05);
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        tasks.push(bandit_task(8, &[i, j], 0.5)?);
        weights.push(0.55 / 3.0);
    }
    for i in 0..3 {
        for d in 3..8 {
            tasks.push(bandit_task(8, &[i, d], 0.5)?);
            weights.push(0.02);
        }
    }
    Ok(PruningLab::primitive(TaskDistribution::new(tasks, weights)?))
}

/// The shipped JSON fixtures as `(file name, contents)`.
pub fn shipped_files() -> Result<Vec<(&'static str, String)>> {
    let json = |v: serde_json::Value| -> String { format!("{}\n", serde_json::to_string_pretty(&v).expect("JSON values serialize")) };
    let chain = chain_mdp(12, 0.95)?;
    let options = chain_options(&chain, 4);
    let lab = pruning_lab()?;
    let ra3_config = serde_json::json!({
        "model": { "n_tokens": WORLD_TOKENS, "n_think": WORLD_SKILLS, "decoder_order": 1, "posterior_order": 1,
                   "alpha": 0.95, "smoothing": 0.1, "prior_weight": 2.0 },
        "em": world_em_config(0, 0.05),
        "seed_records": 20,
        "held_out_records": 100,
    });
    Ok(vec![
        ("chain_mdp.json", json(serde_json::to_value(&chain)?)),
        ("chain_options.json", json(serde_json::to_value(&options)?)),
        ("pruning_tasks.json", json(serde_json::to_value(lab.distribution())?)),
        ("skill_world.json", json(serde_json::to_value(skill_world(7, 520))?)),
        ("ra3_config.json", json(ra3_config)),
        ("rlvr_tasks.json", json(serde_json::to_value(world_tasks()?)?)),
        ("rlvr_config.json", json(serde_json::to_value(world_grpo_config())?)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_is_valid() {
        skill_world(0, 3).validate().unwrap();
        let c = gen_corpus(&skill_world(0, 3)).unwrap();
        assert_eq!(c.corpus.records.len(), 3);
    }
}

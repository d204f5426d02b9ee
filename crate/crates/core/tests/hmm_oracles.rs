mod oracles;

use op2vec_core::hmm::{
    self, baum_welch, decode, posteriors, score, viterbi, BaumWelchParams, DecodeMode, HmmModel, RestartSchedule,
};
use op2vec_core::hmm2vec;
use op2vec_core::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn random_row(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_model(seed: u64, n: usize, m: usize) -> HmmModel {
    let mut rng = rng_from_seed(seed);
    let pi = random_row(&mut rng, n);
    let a = (0..n).map(|_| random_row(&mut rng, n)).collect();
    let b = (0..n).map(|_| random_row(&mut rng, m)).collect();
    HmmModel::new(pi, a, b).unwrap()
}

fn nested(model: &HmmModel) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = model.n();
    (
        model.pi().to_vec(),
        (0..n).map(|i| model.a_row(i).to_vec()).collect(),
        (0..n).map(|i| model.b_row(i).to_vec()).collect(),
    )
}

#[test]
fn forward_and_viterbi_match_path_enumeration() {
    let mut rng = rng_from_seed(2024);
    for case in 0..200u64 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let t = rng.random_range(1..=6);
        let model = random_model(case, n, m);
        let obs: Vec<usize> = (0..t).map(|_| rng.random_range(0..m)).collect();
        let (pi, a, b) = nested(&model);
        let (sum, max) = oracles::enumerate(&pi, &a, &b, &obs);
        let p = score(&model, &obs).unwrap().exp();
        assert!(oracles::relative_error(p, sum) <= 1e-10, "case {case}: {p} vs {sum}");
        let (path, log_max) = viterbi(&model, &obs).unwrap();
        assert!(oracles::relative_error(log_max.exp(), max) <= 1e-10, "case {case}");
        let path_p = oracles::joint(&pi, &a, &b, &path, &obs);
        assert!(oracles::relative_error(path_p, max) <= 1e-10, "case {case}: returned path is not optimal");
    }
}

#[test]
fn posterior_decoding_matches_enumerated_marginals() {
    let mut rng = rng_from_seed(77);
    for case in 0..50u64 {
        let model = random_model(1000 + case, 3, 3);
        let obs: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        let (pi, a, b) = nested(&model);
        let mut marg = vec![vec![0.0; 3]; obs.len()];
        let mut total = 0.0;
        for path in oracles::all_paths(3, obs.len()) {
            let p = oracles::joint(&pi, &a, &b, &path, &obs);
            total += p;
            for (t, &s) in path.iter().enumerate() {
                marg[t][s] += p;
            }
        }
        let gamma = posteriors(&model, &obs).unwrap();
        for t in 0..obs.len() {
            for s in 0..3 {
                assert!((gamma[t * 3 + s] - marg[t][s] / total).abs() < 1e-10);
            }
        }
        let expected: Vec<usize> = marg
            .iter()
            .map(|row| (0..3).fold(0, |best, s| if row[s] > row[best] { s } else { best }))
            .collect();
        assert_eq!(decode(&model, &obs, DecodeMode::Posterior).unwrap(), expected);
    }
}

#[test]
fn baum_welch_never_decreases_likelihood() {
    let params = BaumWelchParams { max_iters: 40, min_improvement: f64::NEG_INFINITY };
    for case in 0..50u64 {
        let truth = random_model(5000 + case, 2 + (case % 3) as usize, 4);
        let (_, obs) = truth.sample(300, case);
        let start = hmm::init_random(2 + (case % 2) as usize, 4, case).unwrap();
        let (_, trace) = baum_welch(&start, &obs, &params).unwrap();
        for w in trace.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "case {case}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn refit_recovers_planted_emissions() {
    let truth = HmmModel::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        vec![vec![0.6, 0.3, 0.05, 0.05], vec![0.05, 0.05, 0.3, 0.6]],
    )
    .unwrap();
    let (_, obs) = truth.sample(20_000, 3);
    let (fit, _) = hmm::train_with_restarts(
        &obs,
        2,
        4,
        &RestartSchedule::opcode_default(),
        11,
        &BaumWelchParams::default(),
    )
    .unwrap();
    let gap = |perm: [usize; 2]| {
        (0..2)
            .flat_map(|i| (0..4).map(move |k| (i, k)))
            .map(|(i, k)| (fit.b(perm[i], k) - truth.b(i, k)).abs())
            .fold(0.0, f64::max)
    };
    let best = gap([0, 1]).min(gap([1, 0]));
    assert!(best <= 0.05, "L-inf gap {best}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_relabeling_preserves_score_and_embedding(seed in any::<u64>(), t in 1usize..40) {
        let model = random_model(seed, 3, 5);
        let (_, obs) = model.sample(t, seed ^ 1);
        let permuted = model.permute_states(&[2, 0, 1]).unwrap();
        let (s1, s2) = (score(&model, &obs).unwrap(), score(&permuted, &obs).unwrap());
        prop_assert!((s1 - s2).abs() <= 1e-9 * s1.abs().max(1.0));
        prop_assert_eq!(hmm2vec::extract(&model, 0).unwrap(), hmm2vec::extract(&permuted, 0).unwrap());
    }

    #[test]
    fn viterbi_never_beats_total_probability(seed in any::<u64>(), t in 1usize..60) {
        let model = random_model(seed, 2, 3);
        let (_, obs) = model.sample(t, seed);
        let (_, best_path) = viterbi(&model, &obs).unwrap();
        prop_assert!(best_path <= score(&model, &obs).unwrap() + 1e-9);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_free(
        x in prop::collection::vec(0.01f64..10.0, 4),
        y in prop::collection::vec(0.01f64..10.0, 4),
        s in 0.1f64..100.0,
    ) {
        let c = hmm2vec::cosine_similarity(&x, &y).unwrap();
        prop_assert!((c - hmm2vec::cosine_similarity(&y, &x).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        prop_assert!((c - hmm2vec::cosine_similarity(&scaled, &y).unwrap()).abs() < 1e-12);
    }
}

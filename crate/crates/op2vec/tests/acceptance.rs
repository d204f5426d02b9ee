//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. Set
//! `ACCEPTANCE_ONLY=8,9` to run a subset. The letter criterion reads the Brown
//! corpus from `BROWN_CORPUS` or `data/brown.txt` under the workspace root.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use op2vec::embed::EmbeddingTable;
use op2vec::experiment::{self, RunConfig, Selection, Split, SweepKind};
use op2vec::letters::{self, LetterOptions};
use op2vec::synth::{family_names, Preset};
use op2vec_core::classifiers::svm::{smo_binary, KernelMatrix};
use op2vec_core::classifiers::{
    knn_predict, mlp_train, svm_train, Algorithm, ClassifierConfig, DecisionTree, KnnConfig, KnnWeights, MlpConfig,
    SvmConfig, TrainedClassifier, TreeConfig,
};
use op2vec_core::corpus::{generate_synthetic_families, LabeledDataset, ObservationSequence};
use op2vec_core::dataset::LabeledVectors;
use op2vec_core::eval::{self, evaluate};
use op2vec_core::hmm::{self, BaumWelchParams, HmmModel, RestartSchedule};
use op2vec_core::hmm2vec::cosine_similarity;
use op2vec_core::pca2vec::{count_cooccurrences, fit_pca, pmi, CooccurrenceTable, PcaOptions};
use op2vec_core::rng::rng_from_seed;
use op2vec_core::word2vec::{build_pairs, negative_sampling_gradient, train_sequences, EmbeddingSide, Word2VecConfig};
use op2vec_core::EmbeddingSource;
use rand::Rng;

enum Outcome {
    Ran { passed: bool, detail: String },
    /// Required input data is absent; reported as a failure but not fatal.
    Missing(String),
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome::Ran { passed, detail }
}

/// Folds named sub-checks into one outcome.
fn all_of(checks: &[(&str, bool)], extra: String) -> Outcome {
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
    let detail = if failed.is_empty() { extra } else { format!("failed: {}; {extra}", failed.join(", ")) };
    outcome(failed.is_empty(), detail)
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut fatal = 0;
    let mut report = |id: usize, title: &str, result: Outcome, elapsed: Duration| {
        let (status, detail) = match result {
            Outcome::Ran { passed: true, detail } => ("PASS", detail),
            Outcome::Ran { passed: false, detail } => {
                fatal += 1;
                ("FAIL", detail)
            }
            Outcome::Missing(why) => ("FAIL", format!("not run: {why}")),
        };
        println!("criterion {id:>2} {status} {title}: {detail} [{:.1}s]", elapsed.as_secs_f64());
    };
    let singles: [Criterion; 8] = [
        (1, "letter HMM on the Brown corpus", letters_on_brown),
        (2, "forward/Viterbi match path enumeration", forward_viterbi_oracle),
        (3, "Baum-Welch monotonicity", baum_welch_monotone),
        (4, "planted HMM refit", planted_refit),
        (5, "PMI/PCA properties", pmi_pca_properties),
        (6, "Word2Vec checks", word2vec_checks),
        (7, "classifier unit oracles", classifier_oracles),
        (10, "grid enumeration", grid_enumeration),
    ];
    for (id, title, run) in singles.iter().filter(|(id, ..)| *id < 8) {
        if wanted(*id) {
            let start = Instant::now();
            let result = run();
            report(*id, title, result, start.elapsed());
        }
    }
    if wanted(8) || wanted(9) {
        let start = Instant::now();
        let (c8, shared) = synthetic_pipeline();
        let c8_time = start.elapsed();
        if wanted(8) {
            report(8, "end-to-end synthetic pipeline", c8, c8_time);
        }
        if wanted(9) {
            let start = Instant::now();
            let c9 = match shared {
                Some(s) => overfitting_shapes(&s),
                None => outcome(false, "baseline features unavailable".into()),
            };
            report(9, "overfitting sweep shapes", c9, start.elapsed());
        }
    }
    for (id, title, run) in singles.iter().filter(|(id, ..)| *id == 10) {
        if wanted(*id) {
            let start = Instant::now();
            let result = run();
            report(*id, title, result, start.elapsed());
        }
    }
    if fatal > 0 {
        eprintln!("{fatal} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn brown_path() -> Option<PathBuf> {
    let candidates = std::env::var_os("BROWN_CORPUS")
        .map(PathBuf::from)
        .into_iter()
        .chain(std::iter::once(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/brown.txt")));
    candidates.into_iter().find(|p| p.is_file())
}

fn letters_on_brown() -> Outcome {
    const TARGET: f64 = -137_305.0;
    let Some(path) = brown_path() else {
        return Outcome::Missing("Brown corpus not found (set BROWN_CORPUS or add data/brown.txt)".into());
    };
    let start = Instant::now();
    let options = LetterOptions { n: 2, length: 50_000, iterations: 100, restarts: None, seed: 0 };
    let report = match letters::run_letters(&path, &options) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let ll = report.final_log_likelihood();
    let min_share = report.vowel_shares.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    let cos_ae = report.cos_a_e.unwrap_or(f64::NAN);
    let cos_at = report.cos_a_t.unwrap_or(f64::NAN);
    all_of(
        &[
            ("log-likelihood within 2%", ((ll - TARGET) / TARGET).abs() <= 0.02),
            ("vowels share a state", report.vowel_shares.len() == 5 && min_share >= 0.95),
            ("cos(a,e) >= 0.99", cos_ae >= 0.99),
            ("cos(a,t) <= 0.2", cos_at <= 0.2),
            ("runtime <= 60 s", elapsed <= 60.0),
        ],
        format!("log P = {ll:.0}, min vowel share {min_share:.3}, cos(a,e) {cos_ae:.4}, cos(a,t) {cos_at:.4}"),
    )
}

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
    HmmModel::new(pi, a, b).expect("rows are stochastic")
}

fn forward_viterbi_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(20_240);
    let mut worst = 0.0f64;
    for case in 0..200u64 {
        let (n, m, t) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=6));
        let model = random_model(case, n, m);
        let obs: Vec<usize> = (0..t).map(|_| rng.random_range(0..m)).collect();
        let pi = model.pi().to_vec();
        let a: Vec<Vec<f64>> = (0..n).map(|i| model.a_row(i).to_vec()).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|i| model.b_row(i).to_vec()).collect();
        let (sum, max) = oracles::enumerate(&pi, &a, &b, &obs);
        let forward = hmm::score(&model, &obs).map(f64::exp).unwrap_or(f64::NAN);
        let best = hmm::viterbi(&model, &obs).map(|(_, lp)| lp.exp()).unwrap_or(f64::NAN);
        worst = worst.max(oracles::relative_error(forward, sum)).max(oracles::relative_error(best, max));
        if worst.is_nan() {
            break;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    all_of(
        &[("relative error <= 1e-10", worst <= 1e-10), ("runtime <= 10 s", elapsed <= 10.0)],
        format!("200 models, worst relative error {worst:.2e}"),
    )
}

fn baum_welch_monotone() -> Outcome {
    let params = BaumWelchParams { max_iters: 40, min_improvement: f64::NEG_INFINITY };
    let mut worst_drop = 0.0f64;
    for case in 0..50u64 {
        let truth = random_model(7000 + case, 2 + (case % 3) as usize, 4);
        let (_, obs) = truth.sample(300, case);
        let start = match hmm::init_random(2 + (case % 2) as usize, 4, case) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("init failed: {e}")),
        };
        match hmm::baum_welch(&start, &obs, &params) {
            Ok((_, trace)) => {
                for w in trace.log_likelihoods.windows(2) {
                    worst_drop = worst_drop.max(w[0] - w[1]);
                }
            }
            Err(e) => return outcome(false, format!("case {case}: {e}")),
        }
    }
    outcome(worst_drop <= 1e-8, format!("50 instances, largest per-iteration decrease {worst_drop:.2e}"))
}

fn planted_refit() -> Outcome {
    let truth = HmmModel::new(
        vec![0.5, 0.5],
        vec![vec![0.85, 0.15], vec![0.25, 0.75]],
        vec![vec![0.55, 0.3, 0.1, 0.05], vec![0.05, 0.1, 0.25, 0.6]],
    )
    .expect("rows are stochastic");
    let (_, obs) = truth.sample(20_000, 17);
    let schedule = RestartSchedule::opcode_default();
    let fit = match hmm::train_with_restarts(&obs, 2, 4, &schedule, 29, &BaumWelchParams::default()) {
        Ok((fit, _)) => fit,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let gap = |perm: [usize; 2]| {
        (0..2)
            .flat_map(|i| (0..4).map(move |k| (i, k)))
            .map(|(i, k)| (fit.b(perm[i], k) - truth.b(i, k)).abs())
            .fold(0.0, f64::max)
    };
    let best = gap([0, 1]).min(gap([1, 0]));
    outcome(
        best <= 0.05,
        format!("T = 20000, {} restarts, L-inf gap to true B {best:.4}", schedule.restarts(obs.len())),
    )
}

fn lazy_walk(seed: u64, m: usize, len: usize) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut s = 0usize;
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < 0.6 {
                s = (s + rng.random_range(0..m)) % m;
            }
            s
        })
        .collect()
}

fn centered_scatter(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = columns[0].len();
    let mean: Vec<f64> = (0..d).map(|r| columns.iter().map(|c| c[r]).sum::<f64>() / columns.len() as f64).collect();
    let mut s = vec![vec![0.0; d]; d];
    for c in columns {
        for r in 0..d {
            for q in 0..d {
                s[r][q] += (c[r] - mean[r]) * (c[q] - mean[q]);
            }
        }
    }
    s
}

fn pmi_pca_properties() -> Outcome {
    let mut rng = rng_from_seed(91);
    let iid: Vec<usize> = (0..400_000).map(|_| rng.random_range(0..5)).collect();
    let seq = ObservationSequence::new(iid, 5).expect("codes are in range");
    let max_pmi = count_cooccurrences(&[seq], 3)
        .and_then(|t| pmi(&t))
        .map(|x| x.values.iter().fold(0.0f64, |w, v| w.max(v.abs())))
        .unwrap_or(f64::NAN);

    let table = |codes: &[usize], m: usize, w: usize| {
        let mut t = CooccurrenceTable::new(m, w).expect("valid table");
        t.add_sequence(codes).expect("codes are in range");
        pmi(&t).expect("pairs were counted")
    };
    let x = table(&lazy_walk(5, 8, 3000), 8, 3);
    let proj = fit_pca(&x, &PcaOptions { k: 8, centered: true, skip_top: 0 }).expect("full rank PCA");
    let mean = proj.mean.clone().expect("centered projection keeps its mean");
    let mut round_trip = 0.0f64;
    for i in 0..8 {
        let col = x.column(i);
        let back = proj.reconstruct_centered(&proj.project(&col).expect("matching dimension"));
        for r in 0..8 {
            round_trip = round_trip.max((back[r] - (col[r] - mean[r])).abs());
        }
    }

    let mut eigen_gap = 0.0f64;
    let mut cases = 0;
    for m in 2..=5usize {
        for seed in 0..20u64 {
            let x = table(&lazy_walk(seed * 37 + m as u64, m, 400), m, 2);
            let columns: Vec<Vec<f64>> = (0..m).map(|i| x.column(i)).collect();
            let roots = oracles::polynomial_roots(&oracles::characteristic_polynomial(&centered_scatter(&columns)));
            let p = fit_pca(&x, &PcaOptions { k: m, centered: true, skip_top: 0 }).expect("full rank PCA");
            for (s, r) in p.singular_values.iter().zip(&roots) {
                eigen_gap = eigen_gap.max((s * s - r.max(0.0)).abs() / (1.0 + r.abs()));
            }
            cases += 1;
        }
    }
    all_of(
        &[
            ("i.i.d. |PMI| <= 0.05", max_pmi <= 0.05),
            ("round trip <= 1e-8", round_trip <= 1e-8),
            ("eigenvalues <= 1e-6", eigen_gap <= 1e-6),
        ],
        format!("max |PMI| {max_pmi:.4}, round-trip error {round_trip:.1e}, eigenvalue gap {eigen_gap:.1e} over {cases} cases"),
    )
}

fn word2vec_checks() -> Outcome {
    let sentence = "one small step for man one giant leap for mankind";
    let words: Vec<&str> = sentence.split(' ').collect();
    let mut vocab = words.clone();
    vocab.sort_unstable();
    vocab.dedup();
    let codes: Vec<usize> = words.iter().map(|w| vocab.binary_search(w).expect("word is in vocab")).collect();
    let pairs: Vec<(&str, &str)> =
        build_pairs(&codes, 2).iter().map(|p| (vocab[p.center], vocab[p.context])).collect();
    let expected = [
        ("one", "small"), ("one", "step"),
        ("small", "one"), ("small", "step"), ("small", "for"),
        ("step", "one"), ("step", "small"), ("step", "for"), ("step", "man"),
        ("for", "small"), ("for", "step"), ("for", "man"), ("for", "one"),
        ("man", "step"), ("man", "for"), ("man", "one"), ("man", "giant"),
        ("one", "for"), ("one", "man"), ("one", "giant"), ("one", "leap"),
        ("giant", "man"), ("giant", "one"), ("giant", "leap"), ("giant", "for"),
        ("leap", "one"), ("leap", "giant"), ("leap", "for"), ("leap", "mankind"),
        ("for", "giant"), ("for", "leap"), ("for", "mankind"),
        ("mankind", "leap"), ("mankind", "for"),
    ];
    let pairs_ok = pairs == expected;

    let mut rng = rng_from_seed(44);
    let mut gradient_gap = 0.0f64;
    for _ in 0..20 {
        let params: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |p: &[f64]| {
            let targets = [(&p[2..4], true), (&p[4..6], false), (&p[6..8], false)];
            negative_sampling_gradient(&p[0..2], &targets, &mut [0.0; 2], &mut Vec::new())
        };
        let mut grad_h = vec![0.0; 2];
        let mut coeffs = Vec::new();
        let targets = [(&params[2..4], true), (&params[4..6], false), (&params[6..8], false)];
        negative_sampling_gradient(&params[0..2], &targets, &mut grad_h, &mut coeffs);
        let mut analytic = grad_h;
        for g in &coeffs {
            analytic.extend(params[0..2].iter().map(|h| g * h));
        }
        let numeric = oracles::numeric_gradient(&params, 1e-5, loss);
        gradient_gap = gradient_gap.max(oracles::max_relative_gap(&analytic, &numeric, 1e-3));
    }

    // "c1 X c2" with X in {0, 1} at random: both fillers share every context.
    let mut rng = rng_from_seed(12);
    let corpus: Vec<Vec<usize>> = (0..2000)
        .map(|_| vec![2 + rng.random_range(0..3), usize::from(rng.random::<bool>()), 5 + rng.random_range(0..3)])
        .collect();
    let cfg = Word2VecConfig { dim: 8, window: 1, epochs: 5, seed: 3, ..Word2VecConfig::default() };
    let cos = train_sequences(&corpus, 8, &cfg)
        .and_then(|model| cosine_similarity(model.vector(0, EmbeddingSide::Output), model.vector(1, EmbeddingSide::Output)))
        .unwrap_or(f64::NAN);
    all_of(
        &[
            ("pairs match the worked example", pairs_ok),
            ("gradient gap <= 1e-4", gradient_gap <= 1e-4),
            ("shared-context cosine >= 0.9", cos >= 0.9),
        ],
        format!("{} pairs, gradient gap {gradient_gap:.1e}, cosine {cos:.4}", pairs.len()),
    )
}

fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

fn circles(n: usize, seed: u64) -> LabeledVectors {
    let mut rng = rng_from_seed(seed);
    let (mut f, mut l) = (Vec::new(), Vec::new());
    for i in 0..n {
        let class = i % 2;
        let r = if class == 0 { 1.0 } else { 3.0 } + rng.random_range(-0.3..0.3);
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        f.push(vec![r * th.cos(), r * th.sin()]);
        l.push(class);
    }
    LabeledVectors::new(f, l, class_names(2)).expect("consistent data")
}

fn training_accuracy(model: &TrainedClassifier, d: &LabeledVectors) -> f64 {
    let ok = d.features.iter().zip(&d.labels).filter(|(x, &y)| model.predict(x).ok() == Some(y)).count();
    ok as f64 / d.len() as f64
}

fn classifier_oracles() -> Outcome {
    let two = LabeledVectors::new(vec![vec![0.0], vec![2.0]], vec![0, 1], class_names(2)).expect("two points");
    let k = KernelMatrix::new(&two.features, op2vec_core::classifiers::Kernel::Linear);
    let midpoint = match (smo_binary(&k, &[-1.0, 1.0], 1e6, 1e-3, 1000), svm_train(&two, SvmConfig::linear(1e6))) {
        (Ok(sol), Ok(model)) => {
            let f = |x: f64| model.decision_values(&[x])[1];
            sol.alpha == [0.5, 0.5] && f(1.0) == 0.0 && f(0.0) == -1.0 && f(2.0) == 1.0
        }
        _ => false,
    };

    let (train, test) = (circles(300, 1), circles(200, 2));
    let acc = |cfg: SvmConfig| evaluate(&ClassifierConfig::Svm(cfg), &train, &test).map_or(0.0, |e| e.accuracy);
    let (linear, rbf) = (acc(SvmConfig::linear(1.0)), acc(SvmConfig::rbf(10.0, 0.5)));

    let xor = LabeledVectors::new(
        vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![0, 0, 1, 1],
        class_names(2),
    )
    .expect("xor");
    let mlp_cfg = MlpConfig { hidden_layer_sizes: vec![10, 10, 10], ..MlpConfig::default() };
    let xor_acc = mlp_train(&xor, mlp_cfg).map_or(0.0, |m| training_accuracy(&TrainedClassifier::Mlp(m), &xor));

    let rings = circles(200, 9);
    let tree_acc = DecisionTree::fit(&rings, TreeConfig::default(), 0).map_or(0.0, |t| {
        rings.features.iter().zip(&rings.labels).filter(|(x, &y)| t.predict(x) == y).count() as f64 / rings.len() as f64
    });

    // X at the origin: one square at distance 1, two circles at 1.5, more squares further out.
    let fig = LabeledVectors::new(
        vec![vec![1.0, 0.0], vec![-1.5, 0.0], vec![0.0, 1.5], vec![3.0, 2.0], vec![3.0, -2.0], vec![2.5, 3.0]],
        vec![0, 1, 1, 0, 0, 0],
        vec!["square".into(), "circle".into()],
    )
    .expect("neighbour points");
    let vote = |k: usize| knn_predict(&fig, &KnnConfig::new(k, KnnWeights::Uniform, 2), &[0.0, 0.0]).ok();
    let flip = vote(1) == Some(0) && vote(3) == Some(1);

    all_of(
        &[
            ("two-point SVM midpoint", midpoint),
            ("rbf beats linear by 0.4", rbf - linear >= 0.4),
            ("MLP solves XOR", xor_acc == 1.0),
            ("single tree fits training data", tree_acc == 1.0),
            ("kNN flips between k=1 and k=3", flip),
        ],
        format!("circles rbf {rbf:.3} vs linear {linear:.3}, XOR {xor_acc:.2}, tree {tree_acc:.2}"),
    )
}

fn grid_enumeration() -> Outcome {
    let sizes: Vec<(Algorithm, usize)> =
        Algorithm::ALL.iter().map(|&a| (a, eval::grid_for(a, 0).len())).collect();
    let size = |a: Algorithm| sizes.iter().find(|(b, _)| *b == a).map_or(0, |(_, n)| *n);
    let per_set = eval::full_grid(0).len();
    all_of(
        &[
            ("MLP 36", size(Algorithm::Mlp) == 36),
            ("SVM 12", size(Algorithm::Svm) == 12),
            ("kNN 16", size(Algorithm::Knn) == 16),
            ("RF 400", size(Algorithm::Rf) == 400),
            ("464 per feature set", per_set == 464),
            ("1392 over three sets", 3 * per_set == 1392),
        ],
        format!(
            "MLP {} / SVM {} / kNN {} / RF {}; {per_set} per set, {} over three",
            size(Algorithm::Mlp),
            size(Algorithm::Svm),
            size(Algorithm::Knn),
            size(Algorithm::Rf),
            3 * per_set
        ),
    )
}

/// State shared by the synthetic pipeline and the sweep criterion.
struct Synthetic {
    config: RunConfig,
    split: Split,
    baseline: EmbeddingTable,
}

fn synthetic_dataset(preset: &Preset) -> op2vec::AppResult<LabeledDataset> {
    let specs = preset.families();
    let seqs = generate_synthetic_families(&specs)?;
    let (_, dataset) = op2vec::ingest::from_token_sequences(&seqs, &family_names(&specs), 20)?;
    Ok(dataset)
}

fn synthetic_pipeline() -> (Outcome, Option<Synthetic>) {
    const BUDGET_SECS: f64 = 15.0 * 60.0;
    const MIN_ACCURACY: f64 = 0.90;
    let start = Instant::now();
    let dataset = match synthetic_dataset(&Preset::default()) {
        Ok(d) => d,
        Err(e) => return (outcome(false, format!("corpus generation failed: {e}")), None),
    };
    let out = tempfile::tempdir().expect("temporary directory");
    let config = RunConfig {
        features: EmbeddingSource::ALL.to_vec(),
        selection: Selection::Selected,
        out: out.path().to_path_buf(),
        ..RunConfig::default()
    };
    let split = match experiment::split_dataset(&dataset, config.train_fraction, config.seed) {
        Ok(s) => s,
        Err(e) => return (outcome(false, format!("split failed: {e}")), None),
    };
    let mut reports = Vec::new();
    let mut baseline = None;
    let mut dims = Vec::new();
    let mut stages = Vec::new();
    for &source in &config.features {
        let stage = Instant::now();
        let table = match experiment::features(&config, source, &dataset, &split, None) {
            Ok(t) => t,
            Err(e) => return (outcome(false, format!("{source} features failed: {e}")), None),
        };
        let embedded = stage.elapsed().as_secs_f64();
        match experiment::report_table(&config, &table, &split, Some(out.path())) {
            Ok(r) => reports.push(r),
            Err(e) => return (outcome(false, format!("{source} classifiers failed: {e}")), None),
        }
        stages.push(format!("{source} {embedded:.0}+{:.0}s", stage.elapsed().as_secs_f64() - embedded));
        dims.push((source, table.dim()));
        if source == EmbeddingSource::Baseline {
            baseline = Some(table);
        }
    }
    let algorithms = experiment::table_algorithms(&config);
    let table_text = experiment::accuracy_table_text(&reports, &algorithms);
    let table_written = experiment::accuracy_table_csv(&reports, &algorithms)
        .and_then(|csv| op2vec::io::write_atomic(&out.path().join("accuracy_table.csv"), &csv))
        .is_ok();
    let elapsed = start.elapsed().as_secs_f64();
    print!("{table_text}");

    let cells = reports.iter().map(|r| r.outcomes.len()).sum::<usize>();
    let embeddings = [EmbeddingSource::Hmm2Vec, EmbeddingSource::Pca2Vec, EmbeddingSource::Word2Vec];
    let weakest = embeddings
        .iter()
        .flat_map(|&s| reports.iter().filter(move |r| r.features == s))
        .flat_map(|r| r.outcomes.iter().map(move |o| (r.features, o.algorithm, o.test_accuracy)))
        .fold(None, |w: Option<(EmbeddingSource, Algorithm, f64)>, c| match w {
            Some(w) if w.2 <= c.2 => Some(w),
            _ => Some(c),
        });
    let (ws, wa, wacc) = weakest.unwrap_or((EmbeddingSource::Hmm2Vec, Algorithm::Knn, f64::NAN));
    let forty = dims.iter().filter(|(s, _)| embeddings.contains(s)).all(|(_, d)| *d == 40);
    let result = all_of(
        &[
            ("40-dimensional embeddings", forty),
            ("every embedding/classifier pair >= 0.90", wacc >= MIN_ACCURACY),
            ("4x4 table emitted", cells == 16 && table_written),
            ("runtime <= 15 min", elapsed <= BUDGET_SECS),
        ],
        format!("{} samples, weakest cell {ws}/{wa} = {wacc:.4}; {}", dataset.len(), stages.join(", ")),
    );
    let shared = baseline.map(|baseline| Synthetic { config, split, baseline });
    (result, shared)
}

fn overfitting_shapes(s: &Synthetic) -> Outcome {
    let (train, test) = match (s.baseline.vectors_for(&s.split.train), s.baseline.vectors_for(&s.split.test)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return outcome(false, "baseline split unavailable".into()),
    };
    let sweep = |kind: SweepKind| experiment::sweep_on(&s.config, EmbeddingSource::Baseline, &train, &test, &kind);
    let knn = match sweep(SweepKind::KnnK { k: vec![3, 75] }) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("kNN sweep failed: {e}")),
    };
    let rf = match sweep(SweepKind::RfGrid { depths: vec![1, 8, 15, 30], trees: vec![100] }) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("forest sweep failed: {e}")),
    };
    let at = |r: &op2vec_core::eval::SweepReport, c: &[usize]| r.accuracy_at(c).unwrap_or(f64::NAN);
    let (k3, k75) = (at(&knn, &[3]), at(&knn, &[75]));
    let d1 = at(&rf, &[1, 100]);
    let deep: Vec<f64> = [8, 15, 30].iter().map(|&d| at(&rf, &[d, 100])).collect();
    let deep_min = deep.iter().copied().fold(f64::INFINITY, f64::min);
    all_of(
        &[("kNN k=75 below k=3", k75 < k3), ("RF depth 1 below every depth >= 8", d1 < deep_min)],
        format!(
            "kNN k=3 {k3:.4}, k=75 {k75:.4}; RF depth 1 {d1:.4}, depths 8/15/30 {:.4}/{:.4}/{:.4}",
            deep[0], deep[1], deep[2]
        ),
    )
}

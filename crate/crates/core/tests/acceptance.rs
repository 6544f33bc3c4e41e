//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line to
//! stdout (bypassing the test harness capture) and then asserts.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use aarm::corpus::{load_interactions, split_train_test, tfidf, AspectSets, DatasetBundle, PrepareConfig, PAD};
use aarm::evaluation::{evaluate, ndcg, precision, recall, top_n, Metrics, ModelScorer, RandomScorer, UserMetrics};
use aarm::model::{aspect_part, forward, AspectCache, MaskingMode, ModelConfig, ModelParams, ParamId};
use aarm::parallel::Workers;
use aarm::pretrain::{pretrain_aspects, train_sgns, SgnsConfig};
use aarm::synthetic::{generate, SyntheticConfig};
use aarm::training::{batch_loss, gradient_check, l2_penalty, train, TrainConfig, TrainOptions};
use aarm::variants::{EmbeddingStrategy, Variant};
use common::{random_instance, random_params, random_sets, NUM_ASPECTS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

#[test]
fn criterion_01_gradient_finite_differences() {
    let started = Instant::now();
    let strategies = [
        EmbeddingStrategy::PretrainTransform,
        EmbeddingStrategy::PretrainTune,
        EmbeddingStrategy::RandomTune,
    ];
    let mut worst = 0.0f64;
    let mut entries = 0usize;
    let mut instances = 0usize;
    let mut blocks_missing = Vec::new();
    for (vi, variant) in Variant::ALL.into_iter().enumerate() {
        let mut covered: Vec<ParamId> = Vec::new();
        let mut expected: Vec<ParamId> = Vec::new();
        for k in 0..21u64 {
            let strategy = strategies[k as usize % 3];
            let inst = random_instance(10_000 + vi as u64 * 1000 + k, variant, strategy, MaskingMode::SoftmaxExclude);
            let checks = gradient_check(&inst.params, &inst.sets, &inst.batch, inst.noise.as_deref(), 1e-3, 1e-5).unwrap();
            for c in &checks {
                worst = worst.max(c.relative_error);
                if !covered.contains(&c.block) {
                    covered.push(c.block);
                }
            }
            for id in ParamId::ALL {
                if inst.params.is_trainable(id) && !expected.contains(&id) {
                    expected.push(id);
                }
            }
            entries += checks.len();
            instances += 1;
        }
        for id in expected {
            if !covered.contains(&id) {
                blocks_missing.push(format!("{}/{}", variant.name(), id.name()));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst <= 1e-4 && blocks_missing.is_empty() && instances >= 20 * 7 && secs < 120.0;
    report(
        1,
        pass,
        &format!(
            "{instances} instances, {entries} entries, max relative error {worst:.2e}, uncovered {blocks_missing:?}, {secs:.1}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_zero_output_loss_is_ln2() {
    let mut worst = 0.0f64;
    for (k, variant) in Variant::ALL.into_iter().enumerate() {
        let mut inst = random_instance(200 + k as u64, variant, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
        inst.params.get_mut(ParamId::Output).as_mut_slice().fill(0.0);
        let loss = batch_loss(&inst.params, &inst.sets, &inst.batch, inst.noise.as_deref(), 0.0).unwrap();
        worst = worst.max((loss - 2f64.ln()).abs());
    }
    let pass = worst <= 1e-12;
    report(2, pass, &format!("max |loss - ln 2| = {worst:.1e}"));
    assert!(pass);
}

/// Reference ranking by repeated selection, independent of the sort used
/// by the library.
fn reference_list(scores: &[f64], excluded: &HashSet<usize>, n: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).filter(|v| !excluded.contains(v)).collect();
    let mut out = Vec::new();
    while out.len() < n && !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            let (a, b) = (remaining[k], remaining[best]);
            if scores[a] > scores[b] || (scores[a] == scores[b] && a < b) {
                best = k;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

fn reference_metrics(list: &[usize], truth: &HashSet<usize>, n: usize) -> (f64, f64, f64, bool) {
    let rel: Vec<u32> = (0..n).map(|i| list.get(i).map_or(0, |v| truth.contains(v) as u32)).collect();
    let tp: u32 = rel.iter().sum();
    let gain = |r: u32, i: usize| (2f64.powi(r as i32) - 1.0) / ((i + 1) as f64 + 1.0).log2();
    let dcg: f64 = rel.iter().enumerate().map(|(i, &r)| gain(r, i)).sum();
    let mut ideal = vec![0u32; n];
    for slot in ideal.iter_mut().take(truth.len().min(n)) {
        *slot = 1;
    }
    let idcg: f64 = ideal.iter().enumerate().map(|(i, &r)| gain(r, i)).sum();
    (tp as f64 / truth.len() as f64, tp as f64 / n as f64, dcg / idcg, tp > 0)
}

#[test]
fn criterion_03_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut mismatched_lists = 0;
    for _ in 0..100 {
        let items = rng.gen_range(5..60);
        let n = rng.gen_range(1..15);
        let users = rng.gen_range(1..8);
        let mut lib = Vec::new();
        let mut reference = Vec::new();
        for u in 0..users {
            // coarse scores force ties
            let scores: Vec<f64> = (0..items).map(|_| rng.gen_range(0..6) as f64 / 5.0).collect();
            let excluded: HashSet<usize> = (0..items).filter(|_| rng.gen_bool(0.2)).collect();
            let mut candidates: Vec<usize> = (0..items).filter(|v| !excluded.contains(v)).collect();
            candidates.shuffle(&mut rng);
            let k = rng.gen_range(1..=candidates.len().clamp(1, 6)).min(candidates.len());
            let truth: HashSet<usize> = candidates[..k].iter().copied().collect();
            if truth.is_empty() {
                continue;
            }
            let mut ex_sorted: Vec<usize> = excluded.iter().copied().collect();
            ex_sorted.sort_unstable();
            let list = top_n(&scores, &ex_sorted, n);
            let ref_list = reference_list(&scores, &excluded, n);
            if list != ref_list {
                mismatched_lists += 1;
            }
            let mut truth_sorted: Vec<usize> = truth.iter().copied().collect();
            truth_sorted.sort_unstable();
            lib.push(UserMetrics::compute(u, &list, &truth_sorted, n));
            reference.push(reference_metrics(&ref_list, &truth, n));
        }
        if lib.is_empty() {
            continue;
        }
        let avg = Metrics::average(&lib);
        let cnt = reference.len() as f64;
        let ref_avg = [
            reference.iter().map(|r| r.0).sum::<f64>() / cnt,
            reference.iter().map(|r| r.1).sum::<f64>() / cnt,
            reference.iter().map(|r| r.2).sum::<f64>() / cnt,
            reference.iter().filter(|r| r.3).count() as f64 / cnt,
        ];
        for (a, b) in avg.as_array().iter().zip(ref_avg) {
            worst = worst.max((a - b).abs());
        }
    }
    let list: Vec<usize> = (0..10).collect();
    let anchors = [
        (recall(&list, &[0, 1, 20, 21]), 0.5),
        (precision(&list, &[4, 5], 10), 0.2),
        (ndcg(&list, &[2], 10), 0.5),
    ];
    let anchors_ok = anchors.iter().all(|(a, b)| (a - b).abs() <= 1e-12);
    let pass = worst <= 1e-12 && mismatched_lists == 0 && anchors_ok;
    report(
        3,
        pass,
        &format!("100 cases, max deviation {worst:.1e}, list mismatches {mismatched_lists}, anchors {anchors:?}"),
    );
    assert!(pass);
}

fn padded(sets: &AspectSets, extra_user: usize, extra_item: usize) -> AspectSets {
    let pad = |s: &[usize], k: usize| {
        let mut v = s.to_vec();
        v.extend(std::iter::repeat(PAD).take(k));
        v
    };
    let users: Vec<Vec<usize>> = (0..sets.num_users()).map(|u| pad(sets.user_set(u), extra_user)).collect();
    let items: Vec<Vec<usize>> = (0..sets.num_items()).map(|v| pad(sets.item_set(v), extra_item)).collect();
    AspectSets::from_parts(sets.user_len() + extra_user, sets.item_len() + extra_item, users.clone(), items.clone(), users, items)
        .unwrap()
}

#[test]
fn criterion_04_pad_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let variant = Variant::ALL[k as usize % Variant::ALL.len()];
        let inst = random_instance(400 + k, variant, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude);
        let (eu, ei) = match rng.gen_range(0..3) {
            0 => (rng.gen_range(1..=10), 0),
            1 => (0, rng.gen_range(1..=10)),
            _ => (rng.gen_range(1..=10), rng.gen_range(1..=10)),
        };
        let more = padded(&inst.sets, eu, ei);
        let cache = AspectCache::build(&inst.params).unwrap();
        for u in 0..inst.sets.num_users() {
            for v in 0..inst.sets.num_items() {
                let a = forward(&inst.params, &cache, &inst.sets, u, v, None).unwrap().score;
                let b = forward(&inst.params, &cache, &more, u, v, None).unwrap().score;
                worst = worst.max((a - b).abs());
            }
        }
    }
    let pass = worst <= 1e-9;
    report(4, pass, &format!("50 instances, max score change {worst:.1e}"));
    assert!(pass);
}

fn params_for(variant: Variant, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_params(variant, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude, (4, 4), 2, 2, &mut rng)
}

#[test]
fn criterion_05_structural_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut a_dev, mut b_dev, mut c_dev, mut d_dev) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..50u64 {
        let sets = random_sets(1, 6, 3, 4, &mut rng);
        let user_set = sets.user_set(0).to_vec();

        // (a) item-independent user attention
        let p = params_for(Variant::AStatic, 500 + k);
        let cache = AspectCache::build(&p).unwrap();
        let spec = Variant::AStatic.spec();
        let base = aspect_part(spec, p.config.masking, &cache, &p, &user_set, sets.item_set(0)).alpha;
        for v in 1..6 {
            let alpha = aspect_part(spec, p.config.masking, &cache, &p, &user_set, sets.item_set(v)).alpha;
            for (x, y) in base.iter().zip(&alpha) {
                a_dev = a_dev.max((x - y).abs());
            }
        }

        // (b) shared-only interactions ignore non-shared item aspects
        let p = params_for(Variant::AInter, 600 + k);
        let cache = AspectCache::build(&p).unwrap();
        let spec = Variant::AInter.spec();
        let real_user: Vec<usize> = user_set.iter().copied().filter(|&a| a != PAD).collect();
        let outside: Vec<usize> = (1..=NUM_ASPECTS).filter(|a| !real_user.contains(a)).collect();
        let shared: Vec<usize> = real_user.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let mut plain = shared.clone();
        plain.resize(shared.len() + 3, PAD);
        let mut noisy = shared.clone();
        noisy.extend(outside.choose_multiple(&mut rng, 3));
        let y1 = aspect_part(spec, p.config.masking, &cache, &p, &user_set, &plain).output;
        let y2 = aspect_part(spec, p.config.masking, &cache, &p, &user_set, &noisy).output;
        for (x, y) in y1.iter().zip(&y2) {
            b_dev = b_dev.max((x - y).abs());
        }

        // (c) zero attention vectors give uniform weights
        let mut p = params_for(Variant::Aarm, 700 + k);
        p.get_mut(ParamId::AspectAttention).as_mut_slice().fill(0.0);
        p.get_mut(ParamId::UserAttention).as_mut_slice().fill(0.0);
        let cache = AspectCache::build(&p).unwrap();
        let item_set = sets.item_set(k as usize % 6).to_vec();
        let trace = aspect_part(Variant::Aarm.spec(), p.config.masking, &cache, &p, &user_set, &item_set);
        for row in &trace.beta {
            for &b in row {
                c_dev = c_dev.max((b - 1.0 / row.len() as f64).abs());
            }
        }
        for &a in &trace.alpha {
            c_dev = c_dev.max((a - 1.0 / trace.alpha.len() as f64).abs());
        }

        // (d) summed user pooling equals count times uniform pooling
        let summed = aspect_part(Variant::NoUserAtt.spec(), p.config.masking, &cache, &p, &user_set, &item_set).output;
        let count = user_set.iter().filter(|&&a| a != PAD).count() as f64;
        for (s, m) in summed.iter().zip(&trace.output) {
            d_dev = d_dev.max((s - count * m).abs());
        }
    }
    let pass = a_dev <= 1e-12 && b_dev <= 1e-12 && c_dev <= 1e-12 && d_dev <= 1e-9;
    report(
        5,
        pass,
        &format!("a_static alpha {a_dev:.1e}, a_inter {b_dev:.1e}, uniform {c_dev:.1e}, no_user_att {d_dev:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_hand_anchors() {
    let t = tfidf(2, 3, 10, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut p = random_params(Variant::Aarm, EmbeddingStrategy::PretrainTransform, MaskingMode::SoftmaxExclude, (2, 2), 2, 2, &mut rng);
    p.get_mut(ParamId::UserFactors).as_mut_slice().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
    p.get_mut(ParamId::ItemFactors).as_mut_slice().fill(0.0);
    p.get_mut(ParamId::Output).as_mut_slice().fill(0.0);
    let l2 = l2_penalty(&p, 0.1);
    let pass = (t - 0.46210).abs() <= 1e-5 && (l2 - 0.75).abs() <= 1e-12;
    report(6, pass, &format!("tfidf {t:.6}, l2 {l2}"));
    assert!(pass);
}

struct LearningRun {
    aarm: f64,
    global: f64,
    random: f64,
}

fn learning_run(seed: u64) -> LearningRun {
    let data = generate(&SyntheticConfig { seed, ..SyntheticConfig::default() }).unwrap();
    let table = aarm::corpus::InteractionTable::from_records(data.records).unwrap();
    let table = split_train_test(table, 0.7, seed).unwrap();
    let bundle = DatasetBundle::prepare(table, PrepareConfig { seed, ..PrepareConfig::default() }).unwrap();
    let dim = 32;
    let vectors = pretrain_aspects(
        &bundle.table,
        &bundle.vocab,
        &SgnsConfig {
            dim,
            min_count: 1,
            seed,
            ..SgnsConfig::default()
        },
    )
    .unwrap();
    let pretrained = vectors.aspect_matrix(&bundle.vocab, dim).unwrap();
    let train_cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 50,
        seed,
        ..TrainConfig::default()
    };
    let workers = Workers::single();
    let run = |variant: Variant| {
        let cfg = ModelConfig {
            aspect_dim: dim,
            global_dim: dim,
            variant,
            ..ModelConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = ModelParams::init(cfg, bundle.vocab.size(), bundle.num_users(), bundle.num_items(), Some(&pretrained), &mut rng).unwrap();
        let outcome = train(&bundle, init, &train_cfg, &TrainOptions::default()).unwrap();
        let scorer = ModelScorer::new(&outcome.best, &bundle.sets).unwrap();
        evaluate(&scorer, &bundle, 10, &workers).unwrap().metrics.ndcg
    };
    let aarm = run(Variant::Aarm);
    let global = run(Variant::GlobalOnly);
    let random = evaluate(&RandomScorer { num_items: bundle.num_items(), seed }, &bundle, 10, &workers)
        .unwrap()
        .metrics
        .ndcg;
    LearningRun { aarm, global, random }
}

#[test]
fn criterion_07_synthetic_learning() {
    let started = Instant::now();
    let runs: Vec<LearningRun> = (1..=3).map(learning_run).collect();
    let aarm = median(runs.iter().map(|r| r.aarm).collect());
    let global = median(runs.iter().map(|r| r.global).collect());
    let random = median(runs.iter().map(|r| r.random).collect());
    let secs = started.elapsed().as_secs_f64();
    let pass = aarm >= 2.0 * random && aarm >= global && secs < 600.0;
    report(
        7,
        pass,
        &format!("median NDCG@10 aarm {aarm:.4}, global_only {global:.4}, random {random:.4}, {secs:.1}s"),
    );
    assert!(pass);
}

fn run_cli(args: &[&str]) {
    let mut argv = vec!["aarm"];
    argv.extend_from_slice(args);
    assert_eq!(aarm::cli::run_command(argv), 0, "command failed: {args:?}");
}

fn pipeline(dir: &Path) -> Vec<u8> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    run_cli(&["synth", "--users", "60", "--items", "50", "--seed", "8", "--out", &p("data.jsonl")]);
    run_cli(&["prepare", "--input", &p("data.jsonl"), "--out", &p("bundle"), "--seed", "8"]);
    run_cli(&["pretrain", "--data", &p("bundle"), "--dim", "16", "--epochs", "2", "--min-count", "1", "--seed", "8", "--out", &p("vectors.txt")]);
    run_cli(&[
        "train", "--data", &p("bundle"), "--embeddings", &p("vectors.txt"), "--aspect-dim", "16", "--global-dim", "16",
        "--epochs", "5", "--seed", "8", "--threads", "1", "--out", &p("model"),
    ]);
    run_cli(&["evaluate", "--data", &p("bundle"), "--ckpt", &p("model/model.ckpt"), "--out", &p("report.json")]);
    std::fs::read(dir.join("report.json")).unwrap()
}

#[test]
fn criterion_08_pipeline_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    let same_ckpt = std::fs::read(a.path().join("model/model.ckpt")).unwrap() == std::fs::read(b.path().join("model/model.ckpt")).unwrap();
    let pass = ra == rb && same_ckpt && !ra.is_empty();
    report(8, pass, &format!("report {} bytes, identical {}, checkpoints identical {same_ckpt}", ra.len(), ra == rb));
    assert!(pass);
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn cluster_gap(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters: Vec<Vec<String>> = ["a", "b"]
        .iter()
        .map(|c| (0..10).map(|k| format!("{c}{k}")).collect())
        .collect();
    let corpus: Vec<Vec<String>> = (0..400)
        .map(|i| (0..10).map(|_| clusters[i % 2].choose(&mut rng).unwrap().clone()).collect())
        .collect();
    let table = train_sgns(
        &corpus,
        &[],
        &SgnsConfig {
            dim: 20,
            epochs: 5,
            min_count: 1,
            seed,
            ..SgnsConfig::default()
        },
    )
    .unwrap();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0, 0.0, 0);
    let all: Vec<(usize, &String)> = clusters.iter().enumerate().flat_map(|(c, ts)| ts.iter().map(move |t| (c, t))).collect();
    for (i, (ci, ti)) in all.iter().enumerate() {
        for (cj, tj) in &all[i + 1..] {
            let c = cosine(table.vector(ti).unwrap(), table.vector(tj).unwrap());
            if ci == cj {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    intra / n_intra as f64 - inter / n_inter as f64
}

#[test]
fn criterion_09_sgns_clusters() {
    let gap = median((1..=3).map(cluster_gap).collect());
    let pass = gap >= 0.2;
    report(9, pass, &format!("median intra minus inter cosine {gap:.3}"));
    assert!(pass);
}

/// Needs the annotated Beauty 5-core file in `AARM_FULL_DATA` and hours of
/// compute; run with `cargo test --test acceptance -- --ignored`.
#[test]
#[ignore]
fn criterion_10_full_data_direction() {
    let Ok(path) = std::env::var("AARM_FULL_DATA") else {
        report(10, false, "AARM_FULL_DATA not set");
        panic!("AARM_FULL_DATA not set");
    };
    let table = load_interactions(Path::new(&path)).unwrap();
    let counts = (table.num_records(), table.num_users(), table.num_items());
    let counts_ok = counts == (198_502, 22_363, 12_101);
    let threads: usize = std::env::var("AARM_THREADS").ok().and_then(|t| t.parse().ok()).unwrap_or(4);
    let workers = Workers::new(threads).unwrap();
    let mut wins = 0;
    for seed in 1..=3u64 {
        let split = split_train_test(table.clone(), 0.7, seed).unwrap();
        let bundle = DatasetBundle::prepare(split, PrepareConfig { seed, ..PrepareConfig::default() }).unwrap();
        let vectors = pretrain_aspects(&bundle.table, &bundle.vocab, &SgnsConfig { seed, ..SgnsConfig::default() }).unwrap();
        let pretrained = vectors.aspect_matrix(&bundle.vocab, 128).unwrap();
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let ndcg_of = |variant: Variant| {
            let mc = ModelConfig { variant, ..ModelConfig::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = ModelParams::init(mc, bundle.vocab.size(), bundle.num_users(), bundle.num_items(), Some(&pretrained), &mut rng).unwrap();
            let out = train(&bundle, init, &cfg, &TrainOptions { threads, ..TrainOptions::default() }).unwrap();
            let scorer = ModelScorer::new(&out.best, &bundle.sets).unwrap();
            evaluate(&scorer, &bundle, 10, &workers).unwrap().metrics.ndcg
        };
        if ndcg_of(Variant::Aarm) > ndcg_of(Variant::GlobalOnly) {
            wins += 1;
        }
    }
    let pass = counts_ok && wins == 3;
    report(10, pass, &format!("counts {counts:?}, aarm above global_only in {wins}/3 seeds"));
    assert!(pass);
}

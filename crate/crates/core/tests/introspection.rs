use aarm::corpus::{split_train_test, DatasetBundle, InteractionTable, PrepareConfig};
use aarm::introspection::{attention_dump, shared_aspect_distribution, PairTraversal};
use aarm::model::{ModelConfig, ModelParams};
use aarm::synthetic::{generate, SyntheticConfig};
use aarm::variants::{EmbeddingStrategy, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundle() -> DatasetBundle {
    let data = generate(&SyntheticConfig { users: 80, items: 70, seed: 12, ..SyntheticConfig::default() }).unwrap();
    let table = split_train_test(InteractionTable::from_records(data.records).unwrap(), 0.7, 12).unwrap();
    DatasetBundle::prepare(table, PrepareConfig { seed: 12, ..PrepareConfig::default() }).unwrap()
}

fn params(b: &DatasetBundle, variant: Variant) -> ModelParams {
    let cfg = ModelConfig { aspect_dim: 6, global_dim: 6, variant, strategy: EmbeddingStrategy::RandomTune, ..ModelConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    ModelParams::init(cfg, b.vocab.size(), b.num_users(), b.num_items(), None, &mut rng).unwrap()
}

#[test]
fn attention_weights_are_distributions() {
    let b = bundle();
    let p = params(&b, Variant::Aarm);
    for (u, v) in [(0, 0), (5, 9), (17, 3)] {
        let dump = attention_dump(&p, &b, u, v).unwrap();
        let total: f64 = dump.user_attention.iter().map(|w| w.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let real_user = b.sets.user_set(u).iter().filter(|&&a| a != aarm::corpus::PAD).count();
        assert_eq!(dump.user_attention.len(), real_user);
        let item_names: Vec<&str> = dump.item_aspects.iter().map(String::as_str).collect();
        for w in &dump.user_attention {
            assert_eq!(w.shared, item_names.contains(&w.aspect.as_str()));
        }
        let heat = dump.heatmap.clone().unwrap();
        assert_eq!(heat.cols, dump.item_aspects);
        for row in &heat.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let csv = heat.to_csv();
        assert_eq!(csv.lines().count(), heat.rows.len() + 1);
        let json = dump.to_json().to_string();
        assert!(json.contains("user_attention"));
    }
}

#[test]
fn variants_without_aspect_attention_have_no_heatmap() {
    let b = bundle();
    assert!(attention_dump(&params(&b, Variant::NoAspectAtt), &b, 1, 1).unwrap().heatmap.is_none());
    assert!(attention_dump(&params(&b, Variant::GlobalOnly), &b, 1, 1).is_err());
    assert!(attention_dump(&params(&b, Variant::Aarm), &b, b.num_users(), 1).is_err());
}

#[test]
fn sampled_histogram_tracks_exact() {
    let b = bundle();
    let exact = shared_aspect_distribution(&b, PairTraversal::Exact, false);
    assert_eq!(exact.pairs, (b.num_users() * b.num_items()) as u64);
    assert_eq!(exact.counts.iter().sum::<u64>(), exact.pairs);
    assert!((exact.ratios().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let sampled = shared_aspect_distribution(&b, PairTraversal::Sampled { pairs: 400_000, seed: 3 }, false);
    for (a, s) in exact.ratios().iter().zip(sampled.ratios()) {
        assert!((a - s).abs() <= 0.005, "{a} vs {s}");
    }
    let truncated = shared_aspect_distribution(&b, PairTraversal::Exact, true);
    assert_eq!(truncated.pairs, exact.pairs);
}

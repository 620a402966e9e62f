//! Cross-module integration: synthetic benchmarks driven through the
//! unsupervised and supervised pipelines end to end.

use qafusion::eval::{evaluate_rankings, single_feature_rankings, uniform_rankings, EvalContext};
use qafusion::qaf::{FusionRule, QafConfig, QafPipeline};
use qafusion::reference::build_codebook;
use qafusion::sqaf::{build_dataset, predict_rankings, train, Architecture, TrainConfig};
use qafusion::synth::{generate, CorpusMode, FeatureProfile, SynthSpec};

fn retrieval_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_queries: 120,
        gallery_size: 300,
        relevant_per_query: 4,
        seed,
        correlation_seed: None,
        mode: CorpusMode::Retrieval,
        extra_random_features: 0,
        features: vec![
            FeatureProfile::good("informative"),
            FeatureProfile::random("noise"),
        ],
    }
}

#[test]
fn trained_network_favors_the_informative_feature_on_held_out_queries() {
    let (train_tables, train_qrels) = generate(&retrieval_spec(11)).unwrap();
    let train_ctx = EvalContext::new(
        &train_tables[0].query_ids,
        &train_tables[0].gallery_ids,
        &train_qrels,
    )
    .unwrap();
    let m = 50;
    let (dataset, _) = build_dataset(&train_tables, &train_ctx, m).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 30,
        seed: 5,
        ..TrainConfig::default()
    };
    let (model, log) = train(&dataset, &Architecture::standard(2, m), &cfg).unwrap();
    assert!(
        log.epoch_mean_loss.last().unwrap() < log.epoch_mean_loss.first().unwrap(),
        "training did not reduce the loss: {:?}",
        log.epoch_mean_loss
    );

    // Held-out queries from a different seed.
    let (test_tables, test_qrels) = generate(&retrieval_spec(12)).unwrap();
    let test_ctx = EvalContext::new(
        &test_tables[0].query_ids,
        &test_tables[0].gallery_ids,
        &test_qrels,
    )
    .unwrap();
    let (_, weights) =
        predict_rankings(&model, &test_tables, &test_ctx, FusionRule::Sum, 1e-6).unwrap();
    let mean_informative: f64 =
        weights.iter().map(|w| w.as_slice()[0]).sum::<f64>() / weights.len() as f64;
    assert!(
        mean_informative > 0.5,
        "mean weight on the informative feature is only {mean_informative}"
    );
}

#[test]
fn unsupervised_pipeline_beats_uniform_on_mixed_features() {
    let (tables, qrels) = generate(&retrieval_spec(21)).unwrap();
    let ctx = EvalContext::new(&tables[0].query_ids, &tables[0].gallery_ids, &qrels).unwrap();

    let irrelevant = SynthSpec {
        num_queries: 200,
        mode: CorpusMode::Irrelevant,
        seed: 22,
        ..retrieval_spec(21)
    };
    let (ref_tables, _) = generate(&irrelevant).unwrap();
    let codebooks: Vec<_> = ref_tables
        .iter()
        .map(|t| build_codebook(t, 150, 300, 23, "synthetic").unwrap())
        .collect();

    let cfg = QafConfig {
        rule: FusionRule::Product,
        ..QafConfig::for_features(2)
    };
    let pipeline = QafPipeline::new(&codebooks, 300, &cfg).unwrap();
    let rankings: Vec<Vec<usize>> = ctx
        .evaluated
        .iter()
        .map(|&qi| {
            let rows: Vec<&[f64]> = tables.iter().map(|t| t.row(qi)).collect();
            pipeline.query_rows(&rows).unwrap().ranking
        })
        .collect();
    let qaf_map = evaluate_rankings("qaf", &rankings, &ctx).unwrap().map;

    let uniform = uniform_rankings(&tables, &ctx, FusionRule::Product, 1e-6).unwrap();
    let uniform_map = evaluate_rankings("uniform", &uniform, &ctx).unwrap().map;
    let informative = single_feature_rankings(&tables[0], &ctx).unwrap();
    let informative_map = evaluate_rankings("informative", &informative, &ctx)
        .unwrap()
        .map;

    assert!(
        qaf_map > uniform_map,
        "QAF {qaf_map} should beat uniform {uniform_map} with one noise feature"
    );
    // A pure-noise companion may cost a little accuracy, but only a little.
    assert!(
        qaf_map >= 0.9 * informative_map,
        "QAF {qaf_map} lost more than 10% of the informative feature's {informative_map}"
    );
}

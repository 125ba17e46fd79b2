use lgibg::gnn::EmbeddingTable;
use lgibg::model::{Model, ModelConfig};
use lgibg::selfcheck::{model_gradient_check, toy_problem};
use lgibg::synth::{generate, Mechanism, ScenarioSpec};
use lgibg::training::{evaluate, run_protocol, train, TrainConfig};
use lgibg::{Model32, Model64};

fn small_model() -> ModelConfig {
    ModelConfig {
        node_dim: 8,
        edge_dim: 8,
        rep_dim: 8,
        attention_dim: 8,
        layers: 2,
        ..ModelConfig::default()
    }
}

fn fast_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 5e-3,
        patience: 0,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn pure_noise_scores_near_chance() {
    let spec = ScenarioSpec {
        noise: 1.0,
        subjects: 40,
        days: 12,
        propensity_concentration: 50.0,
        ..ScenarioSpec::preset(Mechanism::Combined)
    };
    let data = generate(&spec).unwrap().dataset;
    let table = EmbeddingTable::fallback(&data.vocab, 8, 0);
    let samples = data.samples(3, &table).unwrap();
    let out = run_protocol::<f64>(&samples, &table, &small_model(), &fast_train(6), 4).unwrap();
    let acc = out.report.average.accuracy;
    assert!((acc - 0.25).abs() <= 0.08, "accuracy {acc}");
}

#[test]
fn node_variance_weight_changes_the_trained_parameters() {
    let spec = ScenarioSpec {
        subjects: 3,
        days: 6,
        ..ScenarioSpec::preset(Mechanism::Combined)
    };
    let data = generate(&spec).unwrap().dataset;
    let table = EmbeddingTable::fallback(&data.vocab, 8, 0);
    let samples = data.samples(3, &table).unwrap();
    let fit = |lambda: f64| {
        let model = Model64::new(small_model(), table.clone(), 1).unwrap();
        let prepared = model.prepare(&samples).unwrap();
        let config = TrainConfig {
            lambda,
            ..fast_train(3)
        };
        train(model, &prepared, &[], &config).unwrap().model.params
    };
    let (plain, regularized) = (fit(0.0), fit(0.1));
    let differs = plain
        .to_vec()
        .iter()
        .zip(regularized.to_vec())
        .any(|(a, b)| a.data().iter().zip(b.data()).any(|(x, y)| (x - y).abs() > 1e-9));
    assert!(differs);
    assert_eq!(fit(0.1), regularized);
}

#[test]
fn a_single_sample_is_memorized() {
    let spec = ScenarioSpec {
        subjects: 1,
        days: 3,
        ..ScenarioSpec::preset(Mechanism::Combined)
    };
    let data = generate(&spec).unwrap().dataset;
    let table = EmbeddingTable::fallback(&data.vocab, 8, 0);
    let samples = data.samples(3, &table).unwrap();
    assert_eq!(samples.len(), 1);
    let model = Model64::new(small_model(), table, 4).unwrap();
    let prepared = model.prepare(&samples).unwrap();
    let config = TrainConfig {
        learning_rate: 2e-2,
        lambda: 0.0,
        ..fast_train(200)
    };
    let outcome = train(model, &prepared, &[], &config).unwrap();
    let last = outcome.history.last().unwrap();
    assert!(last.loss < 0.01, "loss {}", last.loss);
    let probs = outcome.model.predict_proba(&prepared[0]).unwrap();
    assert!(probs[samples[0].label] > 0.95);
}

#[test]
fn single_precision_model_trains_and_predicts() {
    let spec = ScenarioSpec {
        subjects: 4,
        days: 5,
        ..ScenarioSpec::preset(Mechanism::Combined)
    };
    let data = generate(&spec).unwrap().dataset;
    let table = EmbeddingTable::fallback(&data.vocab, 8, 0);
    let samples = data.samples(3, &table).unwrap();
    let model = Model32::new(small_model(), table, 2).unwrap();
    let prepared = model.prepare(&samples).unwrap();
    let trained = train(model, &prepared, &[], &fast_train(3)).unwrap().model;
    let (metrics, confusion) = evaluate(&trained, &prepared).unwrap();
    assert_eq!(confusion.total() as usize, samples.len());
    assert!((0.0..=1.0).contains(&metrics.accuracy));
    for p in &prepared {
        let probs = trained.predict_proba(p).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn corrupted_gradient_is_detected() {
    let problem = toy_problem(1).unwrap();
    assert!(model_gradient_check(&problem, 1e-6, false).unwrap().max_rel_error < 1e-4);
    assert!(model_gradient_check(&problem, 1e-6, true).unwrap().max_rel_error > 1e-2);
}

#[test]
fn model_rejects_mismatched_embedding_width() {
    let data = generate(&ScenarioSpec {
        subjects: 1,
        days: 1,
        ..ScenarioSpec::default()
    })
    .unwrap()
    .dataset;
    let table = EmbeddingTable::fallback(&data.vocab, 5, 0);
    assert!(Model::<f64>::new(small_model(), table, 0).is_err());
}

mod common;

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{gradient_check, small_dims, toy_batch};
use dsi_core::model::{
    batch_loss, decode_constrained, init_params, sequence_log_prob, train, train_with_monitor, Checkpoint,
    CheckpointHeader, ModelParams, TargetCodec, TargetMode, Task, TrainConfig, TrainingExample, CHECKPOINT_FORMAT,
    OUT_END,
};
use dsi_core::docid::{assign_direct, Structure};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        embed_dim: 8,
        ffn_dim: 16,
        max_input_len: 5,
        max_target_len: 5,
        batch_size: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let dims = small_dims(seed);
        let params = ModelParams::<f64>::random(dims, &mut ChaCha8Rng::seed_from_u64(seed));
        let (err, name) = gradient_check(&params, &toy_batch(dims, seed), 1e-5);
        assert!(err < 1e-4, "seed {seed}: {name} relative error {err:e}");
    }
}

#[test]
fn zero_output_projection_gives_uniform_loss() {
    let dims = small_dims(1);
    let mut params = ModelParams::<f64>::random(dims, &mut ChaCha8Rng::seed_from_u64(9));
    params.zero_output_projection();
    let batch = toy_batch(dims, 4);
    let refs: Vec<&TrainingExample> = batch.iter().collect();
    let loss = batch_loss(&params, &refs).unwrap();
    assert!((loss - 14f64.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn duplicated_batch_keeps_mean_loss() {
    let dims = small_dims(2);
    let params = ModelParams::<f64>::random(dims, &mut ChaCha8Rng::seed_from_u64(2));
    let batch = toy_batch(dims, 2);
    let once: Vec<&TrainingExample> = batch.iter().collect();
    let twice: Vec<&TrainingExample> = batch.iter().chain(batch.iter()).collect();
    let a = batch_loss(&params, &once).unwrap();
    let b = batch_loss(&params, &twice).unwrap();
    assert!((a - b).abs() < 1e-12);
}

fn one_example() -> TrainingExample {
    TrainingExample {
        input_ids: vec![4, 7, 2],
        target_ids: vec![3 + 4, 3 + 1, OUT_END],
        task: Task::Indexing,
        doc_index: 0,
    }
}

#[test]
fn single_example_is_memorised() {
    let config = TrainConfig {
        learning_rate: 1e-2,
        epochs: 200,
        batch_size: 1,
        ..tiny_config()
    };
    let dims = dsi_core::model::ModelDims {
        vocab_in: 10,
        vocab_out: 14,
        embed: config.embed_dim,
        ffn: config.ffn_dim,
        max_input: config.max_input_len,
        max_target: config.max_target_len,
    };
    let out = train(init_params::<f64>(dims, 0), &[one_example()], &config).unwrap();
    let last = *out.epoch_losses.last().unwrap();
    assert_eq!(out.epoch_losses.len(), 200);
    assert!(last < 0.01, "final loss {last}");
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let config = TrainConfig {
        learning_rate: 0.0,
        epochs: 5,
        ..tiny_config()
    };
    let dims = small_dims(0);
    let params = init_params::<f64>(dims, 3);
    let batch = toy_batch(dims, 3);
    let out = train(params.clone(), &batch, &config).unwrap();
    assert!(out.epoch_losses.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(out.params, params);
}

#[test]
fn training_is_deterministic_and_checkpoints_match() {
    let config = TrainConfig { epochs: 4, ..tiny_config() };
    let dims = small_dims(5);
    let batch: Vec<TrainingExample> = (0..4).flat_map(|s| toy_batch(dims, s)).collect();
    let run = || train(init_params::<f64>(dims, 11), &batch, &config).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.epoch_losses, b.epoch_losses);
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        dims,
        config: config.clone(),
        target_mode: TargetMode::PerSymbol,
        merged_tokens: vec![],
        input_vocab: vec![],
        corpus_hash: String::new(),
        assignment_hash: String::new(),
        vocab_hash: String::new(),
        epochs_run: 4,
        final_loss: None,
        tensors: vec![],
    };
    let bytes = |p: ModelParams<f64>| Checkpoint { header: header.clone(), params: p }.to_bytes().unwrap();
    assert_eq!(bytes(a.params), bytes(b.params));
}

#[test]
fn monitor_can_stop_early() {
    let config = TrainConfig { epochs: 50, ..tiny_config() };
    let dims = small_dims(0);
    let out = train_with_monitor(init_params::<f64>(dims, 0), &toy_batch(dims, 0), &config, |e, _, _| {
        if e == 2 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.epoch_losses.len(), 3);
}

#[test]
fn exploding_learning_rate_reports_divergence() {
    let config = TrainConfig {
        learning_rate: 1e300,
        epochs: 3,
        ..tiny_config()
    };
    let dims = small_dims(0);
    match train(init_params::<f64>(dims, 0), &toy_batch(dims, 0), &config) {
        Err(dsi_core::Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.epoch_losses)),
    }
}

#[test]
fn full_beam_equals_exhaustive_ranking() {
    for n in [1usize, 7, 23, 50] {
        let assignment = assign_direct(n, Structure::Int).unwrap();
        let codec = TargetCodec::per_symbol();
        let trie = codec.build_trie(&assignment).unwrap();
        let dims = dsi_core::model::ModelDims {
            vocab_in: 12,
            vocab_out: 14,
            embed: 8,
            ffn: 12,
            max_input: 6,
            max_target: 4,
        };
        let params = ModelParams::<f64>::random(dims, &mut ChaCha8Rng::seed_from_u64(n as u64));
        let input = [3u32, 1, 4, 1, 5];
        let got = decode_constrained(&params, &input, &trie, &assignment, n).unwrap();
        assert_eq!(got.len(), n);

        let mut oracle: Vec<(String, f64)> = (0..n)
            .map(|d| {
                let ids = codec.encode_symbols(assignment.symbols(d)).unwrap();
                (assignment.docid(d).int_string(), sequence_log_prob(&params, &input, &ids).unwrap())
            })
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (g, o) in got.iter().zip(&oracle) {
            assert_eq!(g.docid.int_string(), o.0);
            assert!((g.log_prob - o.1).abs() < 1e-10);
        }
    }
}

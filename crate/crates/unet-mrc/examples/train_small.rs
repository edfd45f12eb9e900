//! Train a small model on synthetic data, watch the joint loss fall, and
//! round-trip the result through the binary checkpoint format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

use unet_mrc::data::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use unet_mrc::data::{build_vocabularies, prepare_dataset, Phase};
use unet_mrc::model::{encode_input, ModelConfig, ModelInput, ModelParams};
use unet_mrc::tensor::Tensor;
use unet_mrc::train::{checkpoint, TrainConfig, TrainedModel, Trainer};

fn main() {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::new(40, 30, 0.5, 21));
    let (examples, _) = prepare_dataset(&corpus, None, None, Phase::Train);
    let (vocab, pos_vocab, ner_vocab) = build_vocabularies(&examples);

    let mut cfg = ModelConfig::default();
    cfg.word_dim = 12;
    cfg.pos_dim = 0;
    cfg.ner_dim = 0;
    cfg.hidden_dim = 10;
    cfg.attention_dim = 20;
    cfg.dropout = 0.1;
    cfg.vocab_size = vocab.len();
    cfg.validate().unwrap();

    let inputs: Vec<ModelInput> =
        examples.iter().map(|ex| encode_input(ex, &vocab, &pos_vocab, &ner_vocab)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params: ModelParams<Tensor<f32>> = ModelParams::init(&cfg, &mut rng);
    let model = TrainedModel { config: cfg, vocab, pos_vocab, ner_vocab, params };

    let tcfg = TrainConfig { epochs: 8, batch_size: 8, seed: 1, ..TrainConfig::default() };
    let mut trainer = Trainer::new(model, tcfg);
    println!("epoch  total   answer  no-ans  verifier");
    let log = trainer
        .run(&inputs, |m| {
            println!(
                "{:>5}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}",
                m.epoch,
                m.loss_total,
                m.loss_answer.unwrap_or(f64::NAN),
                m.loss_no_answer.unwrap_or(f64::NAN),
                m.loss_verifier.unwrap_or(f64::NAN),
            );
            true
        })
        .unwrap();
    assert!(
        log.last().unwrap().loss_total < log[0].loss_total,
        "joint loss should fall over 8 epochs"
    );

    let dir = tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&trainer.model, &path).unwrap();
    let loaded = checkpoint::load(&path).unwrap();

    let mut a = Vec::new();
    trainer.model.params.visit(&mut |_, t: &Tensor<f32>| a.extend_from_slice(t.data()));
    let mut b = Vec::new();
    loaded.params.visit(&mut |_, t: &Tensor<f32>| b.extend_from_slice(t.data()));
    assert_eq!(a, b, "checkpoint round-trip must be exact");
    println!(
        "\ncheckpoint round-trip exact: {} tensors, {} weights",
        unet_mrc::model::census(&loaded.config).len(),
        a.len()
    );
}

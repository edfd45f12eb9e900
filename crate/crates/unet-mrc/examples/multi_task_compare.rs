//! Joint training against classification-only training: the verifier
//! trained together with both pointer losses should classify at least as
//! well as one trained on the verifier loss alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use unet_mrc::data::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use unet_mrc::data::{build_vocabularies, prepare_dataset, Phase, TokenizedExample};
use unet_mrc::model::{
    encode_input, predict_dataset, LossTerms, ModelConfig, ModelInput, ModelParams,
};
use unet_mrc::tensor::Tensor;
use unet_mrc::train::{TrainConfig, TrainedModel, Trainer};

fn verifier_accuracy(terms: LossTerms, seed: u64) -> f64 {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::new(60, 30, 0.5, 55));
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
    cfg.loss_terms = terms;

    let inputs: Vec<ModelInput> =
        examples.iter().map(|ex| encode_input(ex, &vocab, &pos_vocab, &ner_vocab)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: ModelParams<Tensor<f32>> = ModelParams::init(&cfg, &mut rng);
    let model = TrainedModel { config: cfg, vocab, pos_vocab, ner_vocab, params };
    let mut trainer =
        Trainer::new(model, TrainConfig { epochs: 20, batch_size: 10, seed, ..Default::default() });
    trainer.run(&inputs, |_| true).unwrap();

    let model = &trainer.model;
    let pairs: Vec<(TokenizedExample, ModelInput)> = examples
        .into_iter()
        .map(|ex| {
            let input = encode_input(&ex, &model.vocab, &model.pos_vocab, &model.ner_vocab);
            (ex, input)
        })
        .collect();
    let raws = predict_dataset(&model.params, &model.config, &pairs, 32);
    let correct = raws
        .iter()
        .zip(&pairs)
        .filter(|(raw, (ex, _))| (raw.p_unanswerable > 0.5) == !ex.answerable)
        .count();
    correct as f64 / pairs.len() as f64
}

fn main() {
    let seeds = [1u64, 2, 3];
    let mut joint_mean = 0.0;
    let mut only_mean = 0.0;
    println!("seed   joint L    L_AV only");
    for &s in &seeds {
        let joint = verifier_accuracy(LossTerms::default(), s);
        let only =
            verifier_accuracy(LossTerms { answer: false, no_answer: false, verifier: true }, s);
        println!("{s:>4}   {:>7.3}    {:>7.3}", joint, only);
        joint_mean += joint / seeds.len() as f64;
        only_mean += only / seeds.len() as f64;
    }
    println!("mean   {joint_mean:>7.3}    {only_mean:>7.3}");
    assert!(
        joint_mean >= only_mean,
        "joint training should classify at least as well as verifier-only training"
    );
}

//! Train each architectural ablation for two epochs on the same corpus:
//! every variant must keep its parameter census consistent and produce
//! finite, falling losses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use unet_mrc::data::synthetic::{generate_synthetic_corpus, SyntheticSpec};
use unet_mrc::data::{build_vocabularies, prepare_dataset, Phase};
use unet_mrc::model::{
    census, encode_input, AblationFlags, LossTerms, ModelConfig, ModelInput, ModelParams,
};
use unet_mrc::tensor::Tensor;
use unet_mrc::train::{TrainConfig, TrainedModel, Trainer};

fn main() {
    let corpus = generate_synthetic_corpus(&SyntheticSpec::new(30, 25, 0.5, 77));
    let (examples, _) = prepare_dataset(&corpus, None, None, Phase::Train);
    let (vocab, pos_vocab, ner_vocab) = build_vocabularies(&examples);

    let variants: [(&str, AblationFlags); 7] = [
        ("full model", AblationFlags::default()),
        ("no universal node", AblationFlags { no_universal_node: true, ..Default::default() }),
        ("no shared node", AblationFlags { no_share_node: true, ..Default::default() }),
        ("separate encoders", AblationFlags { separate_encoders: true, ..Default::default() }),
        ("no plausible head", AblationFlags { no_plausible_head: true, ..Default::default() }),
        ("no verifier", AblationFlags { no_verifier: true, ..Default::default() }),
        ("self-attention only", AblationFlags { self_attn_only: true, ..Default::default() }),
    ];

    println!("{:<22} {:>8} {:>10} {:>10}", "variant", "tensors", "epoch 1", "epoch 2");
    for (name, flags) in variants {
        let mut cfg = ModelConfig::default();
        cfg.word_dim = 10;
        cfg.pos_dim = 0;
        cfg.ner_dim = 0;
        cfg.hidden_dim = 8;
        cfg.attention_dim = 16;
        cfg.dropout = 0.1;
        cfg.vocab_size = vocab.len();
        cfg.ablation = flags;
        if flags.no_verifier {
            cfg.loss_terms = LossTerms { verifier: false, ..LossTerms::default() };
        }
        cfg.validate().unwrap();

        // The census is the contract: instantiated parameters must match
        // the analytic list name for name and shape for shape.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params: ModelParams<Tensor<f32>> = ModelParams::init(&cfg, &mut rng);
        let expected = census(&cfg);
        let mut actual = Vec::new();
        params.visit(&mut |n, t: &Tensor<f32>| actual.push((n, t.shape().to_vec())));
        assert_eq!(actual, expected, "{name}: census drift");

        let inputs: Vec<ModelInput> = examples
            .iter()
            .map(|ex| encode_input(ex, &vocab, &pos_vocab, &ner_vocab))
            .collect();
        let model = TrainedModel {
            config: cfg,
            vocab: vocab.clone(),
            pos_vocab: pos_vocab.clone(),
            ner_vocab: ner_vocab.clone(),
            params,
        };
        let mut trainer = Trainer::new(
            model,
            TrainConfig { epochs: 2, batch_size: 10, seed: 9, ..Default::default() },
        );
        let log = trainer.run(&inputs, |_| true).unwrap();
        assert!(log.iter().all(|m| m.loss_total.is_finite()));
        println!(
            "{:<22} {:>8} {:>10.3} {:>10.3}",
            name,
            expected.len(),
            log[0].loss_total,
            log[1].loss_total
        );
    }
}

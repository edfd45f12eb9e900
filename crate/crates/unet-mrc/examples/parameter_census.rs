//! The analytic parameter census: every named tensor and its shape,
//! derived from the config alone, and how each ablation changes the
//! total parameter count.

use unet_mrc::model::{census, parameter_count, AblationFlags, LossTerms, ModelConfig};

fn main() {
    let cfg = ModelConfig::default();
    println!("reference config: d = {}, hidden = {}\n", cfg.d(), cfg.hidden_dim);

    let baseline = census(&cfg);
    for (name, shape) in baseline.iter().take(12) {
        println!("  {:<24} {:?}", name, shape);
    }
    println!("  ... {} tensors total, {} weights\n", baseline.len(), parameter_count(&cfg));

    let variants: [(&str, AblationFlags); 7] = [
        ("full model", AblationFlags::default()),
        ("no universal node", AblationFlags { no_universal_node: true, ..Default::default() }),
        ("no shared node", AblationFlags { no_share_node: true, ..Default::default() }),
        ("separate encoders", AblationFlags { separate_encoders: true, ..Default::default() }),
        ("no plausible head", AblationFlags { no_plausible_head: true, ..Default::default() }),
        ("no verifier", AblationFlags { no_verifier: true, ..Default::default() }),
        ("self-attention only", AblationFlags { self_attn_only: true, ..Default::default() }),
    ];

    let base_count = parameter_count(&cfg) as i64;
    println!("{:<22} {:>12} {:>12}", "variant", "weights", "vs full");
    for (name, flags) in variants {
        let mut c = cfg.clone();
        c.ablation = flags;
        if flags.no_verifier {
            c.loss_terms = LossTerms { verifier: false, ..LossTerms::default() };
        }
        let count = parameter_count(&c) as i64;
        println!("{:<22} {:>12} {:>+12}", name, count, count - base_count);
    }
}

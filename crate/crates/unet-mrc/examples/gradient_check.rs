//! Verify every analytic gradient in the full model against central
//! finite differences at 64-bit precision, on a tiny configuration where
//! the exhaustive sweep takes seconds.

use unet_mrc::gradcheck::run_gradcheck;
use unet_mrc::model::ModelConfig;

fn main() {
    let cfg = ModelConfig::tiny();
    println!(
        "tiny config: d = {}, hidden = {}, {} parameter tensors\n",
        cfg.d(),
        cfg.hidden_dim,
        unet_mrc::model::census(&cfg).len()
    );

    let report = run_gradcheck(&cfg, 11, 1e-5, 1e-4);
    for e in &report.entries {
        println!(
            "{:<28} rel err {:>10.3e}   gradient scale {:>10.3e}",
            e.name, e.max_rel_err, e.max_abs_analytic
        );
    }
    println!(
        "\n{}: max relative error {:.3e} (tolerance {:.0e}); every tensor {} gradient",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_rel_err,
        report.tolerance,
        if report.all_nonzero { "received" } else { "DID NOT receive" },
    );
    assert!(report.passed && report.all_nonzero);
}

pub mod eval;
pub mod ingest;
pub mod report;
pub mod sweep;
pub mod synth;
pub mod train;

use harfeat_core::data::ExportManifest;
use std::path::Path;

/// Shared tail of `synth` and `ingest`: say where everything landed.
fn print_export(dir: &Path, manifest: &ExportManifest) {
    println!(
        "exported {} windows ({} classes, {}x{} each) across {} plans to {}",
        manifest.total_windows,
        manifest.num_classes,
        manifest.window_len,
        manifest.num_channels,
        manifest.plans.len(),
        dir.display()
    );
    for p in &manifest.plans {
        println!(
            "  {}: train {} windows (sha256 {}…), test {} windows (sha256 {}…)",
            p.name,
            p.train_windows,
            &p.train_sha256[..12],
            p.test_windows,
            &p.test_sha256[..12]
        );
    }
    println!("manifest: {}", dir.join("manifest.json").display());
}

//! E(k), gap edges and the audit suite for the checked-in reference config.

use std::path::PathBuf;

use hillmsa::cli::{compute, LoadedConfig};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml");
    let loaded = LoadedConfig::from_path(&path).expect("reference config");
    let r = compute(&loaded).expect("valid config");
    for s in r.band.k_samples.iter().step_by(10) {
        println!("k = {:+.2}  E = {:.10}  {}", s.k, s.e, s.class.name());
    }
    for g in &r.band.gaps {
        println!("gap m = {}: [{:.10}, {:.10}], width {:.3e} ≤ {:.3e}", g.m, g.e_minus, g.e_plus, g.width, g.bound);
    }
    println!("E(0) = {:?}", r.band.e0);
    for a in &r.band.audits {
        println!("{:<28} {}", a.name, if a.passed { "pass" } else { "FAIL" });
    }
}

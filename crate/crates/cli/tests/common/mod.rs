//! Fixed-seed fixtures shared by the CLI tests: one target and five proxy
//! variants laid out like a quantization results table.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prism_core::matio::{write_labels, write_matrix, Dtype, VariantManifest, VariantRecord};
use prism_core::oracle::{empirical_risk, gen_instance, Perturbation, Sizes};

pub const FIXTURE_SEED: u64 = 2024;
pub const FIXTURE_SIZES: Sizes = Sizes { n: 48, d: 8, v: 16 };

pub struct Variant {
    pub id: &'static str,
    pub family: &'static str,
    pub kind: Perturbation,
    pub magnitude: f64,
    pub with_head: bool,
    pub dtype: Dtype,
}

pub const VARIANTS: [Variant; 5] = [
    Variant { id: "Q8_0", family: "GGUF", kind: Perturbation::GaussianNoise, magnitude: 0.05, with_head: true, dtype: Dtype::F64 },
    Variant { id: "Q4_K_M", family: "GGUF", kind: Perturbation::Combined, magnitude: 0.15, with_head: true, dtype: Dtype::F64 },
    Variant { id: "Q2_K", family: "GGUF", kind: Perturbation::Combined, magnitude: 0.4, with_head: true, dtype: Dtype::F64 },
    Variant { id: "AWQ-int4", family: "AWQ", kind: Perturbation::ScaleShrink, magnitude: 0.2, with_head: true, dtype: Dtype::F32 },
    Variant { id: "LoRA-r16", family: "LoRA", kind: Perturbation::RotationMix, magnitude: 0.3, with_head: false, dtype: Dtype::F64 },
];

/// Write target, variants, labels and `manifest.toml` into `dir`.
pub fn write_fixtures(dir: &Path) -> PathBuf {
    let base = gen_instance(FIXTURE_SEED, FIXTURE_SIZES, Perturbation::GaussianNoise, 0.0).unwrap();
    write_matrix(base.z_t.values(), dir.join("target_features.prsm"), Dtype::F64).unwrap();
    write_matrix(base.h_t.values(), dir.join("target_head.prsm"), Dtype::F64).unwrap();
    write_labels(&base.labels, dir.join("labels.prsm")).unwrap();
    let risk_t = empirical_risk(&base.z_t, &base.h_t, &base.labels).unwrap();

    let mut variants = Vec::new();
    for v in &VARIANTS {
        let inst = gen_instance(FIXTURE_SEED, FIXTURE_SIZES, v.kind, v.magnitude).unwrap();
        let feature_path = PathBuf::from(format!("{}_features.prsm", v.id));
        write_matrix(inst.z_p.values(), dir.join(&feature_path), v.dtype).unwrap();
        let head_path = v.with_head.then(|| {
            let p = PathBuf::from(format!("{}_head.prsm", v.id));
            write_matrix(inst.h_p.values(), dir.join(&p), Dtype::F64).unwrap();
            p
        });
        let h_p = if v.with_head { &inst.h_p } else { &base.h_t };
        let risk_p = empirical_risk(&inst.z_p, h_p, &base.labels).unwrap();
        variants.push(VariantRecord {
            variant_id: v.id.to_string(),
            family: v.family.to_string(),
            method: v.kind.to_string(),
            feature_path,
            head_path,
            empirical_gap: Some((risk_t - risk_p).abs()),
        });
    }
    let manifest = VariantManifest {
        target_id: "synthetic-target".into(),
        benchmark_id: "synthetic".into(),
        target_feature_path: "target_features.prsm".into(),
        target_head_path: "target_head.prsm".into(),
        variants,
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml_string()).unwrap();
    path
}

pub fn prism(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prism"))
        .args(args)
        .output()
        .expect("spawn prism")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

use std::env;
use std::path::Path;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        cpp_compat: true,
        include_guard: Some("FIELDTRIPLE_H".to_string()),
        autogen_warning: Some(
            "/* Generated by the crate build script; do not edit by hand. */".to_string(),
        ),
        documentation: true,
        usize_is_size_t: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation failed")
        .write_to_file(Path::new(&crate_dir).join("include").join("fieldtriple.h"));

    println!("cargo:rerun-if-changed=src/lib.rs");
}

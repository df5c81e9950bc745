use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let out = PathBuf::from(std::env::var("OUT_DIR").unwrap()).join("skelqbx.h");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("SKELQBX_H".into()),
        cpp_compat: true,
        documentation: true,
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation failed")
        .write_to_file(&out);
    // keep a copy next to the sources for C consumers
    let include = crate_dir.join("include");
    std::fs::create_dir_all(&include).unwrap();
    std::fs::copy(&out, include.join("skelqbx.h")).unwrap();
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=build.rs");
}

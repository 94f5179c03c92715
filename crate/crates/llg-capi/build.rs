use std::path::Path;

fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = Path::new(&crate_dir).join("include").join("llg.h");
    // The committed header is regenerated on every build so it cannot drift
    // from the source; a generation failure is a build failure.
    let bindings = cbindgen::generate(&crate_dir).expect("cbindgen generation failed");
    bindings.write_to_file(&header);
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}

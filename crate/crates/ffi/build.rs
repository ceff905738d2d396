use std::env;
use std::fs;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("cargo sets the manifest dir"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config =
        cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("valid cbindgen.toml");
    let bindings = cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
        .expect("header generation");
    let mut text = Vec::new();
    bindings.write(&mut text);
    let path = dir.join("include").join("capsys.h");
    if fs::read(&path).ok().as_deref() != Some(text.as_slice()) {
        fs::create_dir_all(path.parent().expect("include dir")).expect("create include dir");
        fs::write(&path, text).expect("write header");
    }
}

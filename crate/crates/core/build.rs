use std::env;

fn main() {
    println!("cargo:rerun-if-env-changed=HDF5_DIR");
    if env::var_os("CARGO_FEATURE_HDF5").is_none() {
        return;
    }
    match env::var("HDF5_DIR") {
        Ok(dir) => {
            println!("cargo:rustc-link-search=native={dir}/lib");
            println!("cargo:rustc-link-search=native={dir}");
        }
        Err(_) => {
            // Debian/Ubuntu ship the serial build under a versioned directory.
            for dir in [
                "/usr/lib/x86_64-linux-gnu/hdf5/serial",
                "/usr/lib/aarch64-linux-gnu/hdf5/serial",
                "/usr/lib64",
                "/usr/local/lib",
                "/opt/homebrew/lib",
            ] {
                if std::path::Path::new(dir).exists() {
                    println!("cargo:rustc-link-search=native={dir}");
                }
            }
        }
    }
    println!("cargo:rustc-link-lib=dylib=hdf5");
}

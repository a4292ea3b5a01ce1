//! Regenerates the synthetic a9a-like fixtures under `tests/data`.
//!
//! Usage: `cargo run --example gen_fixtures -- <out_dir>`

use std::path::PathBuf;

use dectrack::data::synth::A9aLike;
use dectrack::data::to_libsvm_string;

pub const MODEL_SEED: u64 = 123;

fn main() -> std::io::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tests/data".into()));
    std::fs::create_dir_all(&out)?;
    let gen = A9aLike::new(MODEL_SEED);
    std::fs::write(out.join("a9a_like_train.svm"), to_libsvm_string(&gen.sample(2000, 1)))?;
    std::fs::write(out.join("a9a_like_test.svm"), to_libsvm_string(&gen.sample(1000, 2)))?;
    Ok(())
}

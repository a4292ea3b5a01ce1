#![no_main]
use dectrack::topology::MixingMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(w) = MixingMatrix::parse_text(text) {
        assert!((0.0..=1.0).contains(&w.p()));
    }
});

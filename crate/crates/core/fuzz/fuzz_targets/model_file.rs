#![no_main]
use dectrack::cli::{format_model, parse_model_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(x) = parse_model_text(text) {
        assert_eq!(parse_model_text(&format_model(&x)).expect("re-parse of serialized model"), x);
    }
});

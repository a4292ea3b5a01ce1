#![no_main]
use dectrack::data::{parse_libsvm_str, to_libsvm_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(ds) = parse_libsvm_str(text, None) {
        let again = parse_libsvm_str(&to_libsvm_string(&ds), Some(ds.d)).expect("re-parse of serialized dataset");
        assert_eq!(again.samples, ds.samples);
    }
});

#![no_main]
use dectrack::topology::TopologySpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(spec) = text.parse::<TopologySpec>() else {
        return;
    };
    if matches!(spec, TopologySpec::MatrixFile(_)) {
        return;
    }
    for n in 1..6 {
        if let Ok(w) = spec.build(n) {
            assert!((0.0..=1.0).contains(&w.p()));
        }
    }
});

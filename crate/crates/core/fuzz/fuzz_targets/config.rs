#![no_main]
use dectrack::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(cfg) = ExperimentConfig::from_toml_str(text) else {
        return;
    };
    let _ = cfg.validate();
    let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).expect("re-parse of serialized config");
    assert_eq!(again.to_toml_string(), cfg.to_toml_string());
});

#![no_main]

use kolmo_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

// Parsing and resolving an experiment file must fail cleanly, never panic.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            let _ = cfg.resolve();
        }
    }
});

#![no_main]

use latode_cli::config::{Preset, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for preset in Preset::ALL {
        if let Ok(cfg) = RunConfig::from_toml(preset, text) {
            let round =
                RunConfig::from_toml(preset, &cfg.to_toml()).expect("serialized config parses");
            assert_eq!(round.to_toml(), cfg.to_toml());
        }
    }
});

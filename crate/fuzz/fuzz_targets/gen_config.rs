#![no_main]

use bdg_core::datagen::GenConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = GenConfig::from_toml_str(data);
});

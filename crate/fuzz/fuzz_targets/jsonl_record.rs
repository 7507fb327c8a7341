#![no_main]

use bdg_core::datagen::parse_record;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(rec) = parse_record(data, 1) {
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(parse_record(&line, 1).unwrap(), rec);
    }
});

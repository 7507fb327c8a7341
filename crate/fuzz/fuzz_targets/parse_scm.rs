#![no_main]

use bdg_core::scm::{parse_scm, write_scm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(scm) = parse_scm(data) {
        let text = write_scm(&scm);
        let again = parse_scm(&text).expect("written models parse");
        assert_eq!(write_scm(&again), text);
    }
});

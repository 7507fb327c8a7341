#![no_main]

use bdg_core::datagen::{load_jsonl_str, sidecar_string, to_jsonl_string};
use libfuzzer_sys::fuzz_target;

// Data and an optional vocabulary sidecar, separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let (body, sidecar) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], Some(&data[i + 1..])),
        None => (data, None),
    };
    let Ok(body) = std::str::from_utf8(body) else { return };
    let sidecar = match sidecar.map(std::str::from_utf8) {
        Some(Ok(s)) => Some(s),
        Some(Err(_)) => return,
        None => None,
    };
    if let Ok(bundle) = load_jsonl_str(body, sidecar) {
        let back = load_jsonl_str(&to_jsonl_string(&bundle), Some(&sidecar_string(&bundle))).unwrap();
        assert_eq!(back.examples, bundle.examples);
        assert_eq!(back.domains, bundle.domains);
    }
});

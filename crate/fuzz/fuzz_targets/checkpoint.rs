#![no_main]

use bdg_core::model::{ErmParams, ModelParams};
use bdg_core::nn::parse_checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_checkpoint(data);
    if let Ok((cfg, params)) = ModelParams::from_checkpoint(data) {
        let text = params.to_checkpoint(&cfg);
        assert_eq!(ModelParams::from_checkpoint(&text).unwrap().1, params);
    }
    let _ = ErmParams::from_checkpoint(data);
});

#![no_main]

use latode::data::{decode_cache, encode_cache};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cached) = decode_cache(data) {
        let again = encode_cache(&cached).expect("decoded cache re-encodes");
        let back = decode_cache(&again).expect("re-encoded cache decodes");
        assert_eq!(encode_cache(&back).unwrap(), again);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use pmri_core::tensor_io::{decode_tensor, encode_tensor};

fuzz_target!(|data: &[u8]| {
    if let Ok((tensor, used)) = decode_tensor(data) {
        assert!(used <= data.len());
        // anything accepted must re-encode to the bytes it was read from
        assert_eq!(encode_tensor(&tensor), &data[..used]);
    }
});

#![no_main]

use icvec_core::backhaul::wire::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = decode(data) {
        // Anything that decodes must re-encode to a frame that decodes to the same message.
        let bytes = encode(&msg).expect("decoded message re-encodes");
        assert_eq!(decode(&bytes).expect("re-encoded frame decodes"), msg);
    }
});
